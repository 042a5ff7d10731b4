use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use htguard::netlist::emit_verilog;
use htguard::synth::{generate, SynthConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_htguard"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn small() -> SynthConfig {
    SynthConfig {
        inputs: 8,
        outputs: 5,
        gates: 50,
        flip_flops: 4,
        muxes: 3,
        trigger_width: (5, 7),
        ..Default::default()
    }
}

fn write_synth(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let path = dir.join(format!("{name}.v"));
    std::fs::write(&path, emit_verilog(&generate(name, &small(), seed).unwrap())).unwrap();
    path
}

#[test]
fn help_lists_every_subcommand() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    let t = text(&o);
    for sub in ["parse", "featurize", "train", "rewrite", "attack", "advtrain", "evaluate"] {
        assert!(t.contains(sub), "missing {sub}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["parse", "x.v", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn parse_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.v");
    std::fs::write(&bad, "module m(a, y);\ninput a; output y;\n\nWIDGET u(.A(a), .Y(y));\nendmodule\n").unwrap();
    let o = run(&["parse", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("4:"), "{}", text(&o));
    let missing = run(&["parse", dir.path().join("none.v").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn parse_dumps_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    let v = write_synth(dir.path(), "p", 1);
    let o = run(&["parse", v.to_str().unwrap(), "--dump-graph", "-"]);
    assert!(o.status.success(), "{}", text(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let start = stdout.find('{').unwrap();
    let json: serde_json::Value = serde_json::from_str(&stdout[start..]).unwrap();
    assert!(json.is_object());
    let manifest = dir.path().join("m.json");
    let o = run(&["--manifest", manifest.to_str().unwrap(), "parse", v.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(manifest.is_file());
}

#[test]
fn featurize_writes_the_full_header() {
    let dir = tempfile::tempdir().unwrap();
    let v = write_synth(dir.path(), "f", 2);
    let out = dir.path().join("f.csv");
    let o = run(&["featurize", v.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let header = csv.lines().next().unwrap();
    let expected: Vec<String> = ["net".to_string(), "label".to_string()]
        .into_iter()
        .chain((1..=51).map(|i| format!("f{i}")))
        .collect();
    assert_eq!(header, expected.join(","));
    assert!(csv.lines().skip(1).any(|l| l.split(',').nth(1) == Some("1")));
}

#[test]
fn train_then_attack_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_synth(dir.path(), "a", 3);
    let b = write_synth(dir.path(), "b", 4);
    let c = write_synth(dir.path(), "c", 5);
    let model = dir.path().join("m.json");
    let o = run(&[
        "--seed",
        "7",
        "train",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "-o",
        model.to_str().unwrap(),
        "--epochs",
        "2",
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let out = dir.path().join("atk");
    let o = run(&[
        "--seed",
        "7",
        "attack",
        c.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--alpha",
        "inf",
        "--budget",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    for f in ["attacked.v", "trace.json", "sweep.csv", "run_manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert!(trace["steps"].as_array().unwrap().len() <= 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    assert!(manifest["argv"].is_array());
    assert_eq!(manifest["config"]["seed"].as_u64(), Some(7));
    let again = run(&["parse", out.join("attacked.v").to_str().unwrap()]);
    assert!(again.status.success(), "{}", text(&again));
}

#[test]
fn rewrite_refuses_relaxed_patterns_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("s.v");
    std::fs::write(
        &v,
        "module s(a, clk, q);\ninput a, clk; output q; wire d;\nXOR2 x(.A(a), .B(q), .Y(d));\nDFF ff(.D(d), .CLK(clk), .Q(q));\nendmodule\n",
    )
    .unwrap();
    let out = dir.path().join("o.v");
    let args = |p: &str| {
        vec![
            "rewrite".to_string(),
            v.to_string_lossy().into_owned(),
            "--gate".into(),
            "ff".into(),
            "--pattern".into(),
            p.into(),
            "-o".into(),
            out.to_string_lossy().into_owned(),
        ]
    };
    let o = bin().args(args("m16")).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let o = bin().args(args("m15")).output().unwrap();
    assert!(o.status.success(), "{}", text(&o));
    assert!(out.is_file());
}
