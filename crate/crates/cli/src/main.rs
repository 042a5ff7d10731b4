use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use htguard::advtrain::{samples_from_circuits, train_robust};
use htguard::attack::{run_attack, Alpha, AttackConfig, Target};
use htguard::config::{AdvOverrides, ConfigLayer, GlobalConfig, Profile, TrainOverrides};
use htguard::eval::{emit_reports, git_describe, run_loocv, ExperimentPlan};
use htguard::features::{extract_all, FeatureMatrix};
use htguard::model::{train, DetectionModel};
use htguard::netlist::{dump_graph_json, emit_verilog, parse_verilog, CircuitGraph, LabelSpec};
use htguard::rewrite::{apply_pattern, check_equivalence, EquivalenceOptions, PatternId, Verdict};

/// Default directory searched for netlists and plan benchmarks.
const BENCHMARK_DIR_ENV: &str = "HTGUARD_BENCHMARK_DIR";

#[derive(Parser)]
#[command(name = "htguard", version, about = "Hardware Trojan detection on gate-level netlists")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    log_level: Option<String>,
    /// TOML or JSON configuration layered between profile and flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hyperparameter preset: trust-hub, trit-tc or custom.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// Where `run_manifest.json` goes (default: the command's output location).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct LabelArgs {
    /// Sidecar file listing Trojan net names, one per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Regex over instance and net names marking Trojan logic.
    #[arg(long, conflicts_with = "labels")]
    label_regex: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a netlist and print a summary.
    Parse {
        netlist: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        /// Write the graph as JSON (`-` for stdout).
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Write the 51 features of every net as CSV.
    Featurize {
        netlist: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        /// Output CSV (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train a plain detector on one or more labelled netlists.
    Train {
        #[arg(required = true)]
        netlists: Vec<PathBuf>,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: TrainFlags,
    },
    /// Apply one modification pattern to one gate.
    Rewrite {
        netlist: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        /// Instance name of the gate to rewrite.
        #[arg(long)]
        gate: String,
        /// Pattern m1..m16.
        #[arg(long)]
        pattern: PatternId,
        /// Permit patterns that only preserve combinational behaviour.
        #[arg(long)]
        allow_relaxed: bool,
        /// Modified netlist.
        #[arg(short, long)]
        output: PathBuf,
        /// JSON description of the change.
        #[arg(long)]
        diff: Option<PathBuf>,
    },
    /// Greedy gate modification attack against a trained detector.
    Attack {
        netlist: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(long)]
        model: PathBuf,
        /// Conceal all Trojan nets with this alpha (1, 2, inf, ...).
        #[arg(long, conflicts_with = "ttcd", required_unless_present = "ttcd")]
        alpha: Option<Alpha>,
        /// Conceal a single Trojan net.
        #[arg(long)]
        ttcd: Option<String>,
        /// Modifications to make (profile default when omitted).
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        allow_relaxed: bool,
        /// Recompute every feature after each candidate rewrite.
        #[arg(long)]
        full_reextract: bool,
        /// Skip the final equivalence check.
        #[arg(long)]
        no_verify: bool,
        /// Output directory for the modified netlist, trace and sweep.
        #[arg(long)]
        out: PathBuf,
    },
    /// Adversarial training with targeted attack examples.
    Advtrain {
        #[arg(required = true)]
        netlists: Vec<PathBuf>,
        #[command(flatten)]
        labels: LabelArgs,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: AdvFlags,
    },
    /// Leave-one-out evaluation driven by a plan file.
    Evaluate {
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds, one full run each.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Loss multiplier for Trojan rows.
    #[arg(long)]
    class_weight: Option<f64>,
    #[arg(long)]
    no_oversample: bool,
}

impl TrainFlags {
    fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            class_weight: self.class_weight,
            oversample: self.no_oversample.then_some(false),
        }
    }
}

#[derive(Args, Clone)]
struct AdvFlags {
    /// Adversarial epochs after the warm-up.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Trojan rows a batch needs before adversarial rows are added.
    #[arg(long)]
    min_trojan: Option<usize>,
    /// Adversarial rows per qualifying batch, as a fraction of --min-trojan.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    init_epochs: Option<usize>,
    /// Modifications per targeted attack.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    allow_relaxed: bool,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    class_weight: Option<f64>,
    #[arg(long)]
    no_oversample: bool,
}

impl AdvFlags {
    fn overrides(&self) -> AdvOverrides {
        AdvOverrides {
            epochs: self.epochs,
            batch_size: self.batch_size,
            min_trojan: self.min_trojan,
            ratio: self.ratio,
            init_epochs: self.init_epochs,
            budget: self.budget,
            allow_relaxed: self.allow_relaxed.then_some(true),
            learning_rate: self.learning_rate,
            class_weight: self.class_weight,
            oversample: self.no_oversample.then_some(false),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

struct Ctx {
    config: GlobalConfig,
    argv: Vec<String>,
    manifest: Option<PathBuf>,
}

impl Ctx {
    /// Resolves a netlist path, falling back to the benchmark directory.
    fn input(&self, p: &Path) -> PathBuf {
        if p.is_relative() && !p.exists() {
            if let Some(dir) = &self.config.benchmark_dir {
                return dir.join(p);
            }
        }
        p.to_path_buf()
    }

    fn load(&self, path: &Path, labels: &LabelArgs) -> Result<CircuitGraph> {
        let path = self.input(path);
        let spec = if let Some(l) = &labels.labels {
            LabelSpec::from_sidecar_file(&self.input(l))
                .with_context(|| format!("reading labels {}", l.display()))?
        } else if let Some(r) = &labels.label_regex {
            LabelSpec::regex(r)?
        } else {
            let sidecar = path.with_extension("labels");
            if sidecar.is_file() {
                LabelSpec::from_sidecar_file(&sidecar)?
            } else {
                LabelSpec::Comments
            }
        };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        parse_verilog(&text, &spec).with_context(|| format!("{}", path.display()))
    }

    /// Writes `run_manifest.json` into `dir` unless `--manifest` names a path.
    /// Without either there is nowhere to write and nothing happens.
    fn write_manifest(&self, dir: Option<&Path>, extra: serde_json::Value) -> Result<()> {
        let path = match (&self.manifest, dir) {
            (Some(p), _) => p.clone(),
            (None, Some(d)) => d.join("run_manifest.json"),
            (None, None) => return Ok(()),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let m = json!({
            "argv": self.argv,
            "version": env!("CARGO_PKG_VERSION"),
            "git_describe": git_describe(),
            "config": self.config,
            "run": extra,
        });
        fs::write(&path, serde_json::to_string_pretty(&m)?)
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn parent_dir(p: &Path) -> PathBuf {
    p.parent()
        .filter(|d| !d.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<()> {
    let file_layer = match &cli.global.config {
        Some(p) => ConfigLayer::load(p)?,
        None => ConfigLayer::default(),
    };
    let mut flags = ConfigLayer {
        profile: cli.global.profile,
        seed: cli.global.seed,
        log_level: cli.global.log_level.clone(),
        threads: cli.global.threads,
        ..Default::default()
    };
    let mut plan = None;
    match &cli.command {
        Command::Train { overrides, .. } => flags.normal = overrides.overrides(),
        Command::Advtrain { overrides, .. } => flags.robust = overrides.overrides(),
        Command::Evaluate { plan: p, .. } => {
            plan = Some(ExperimentPlan::load(p).with_context(|| format!("reading plan {}", p.display()))?)
        }
        _ => {}
    }
    let env_layer = ConfigLayer {
        benchmark_dir: std::env::var_os(BENCHMARK_DIR_ENV).map(PathBuf::from),
        ..Default::default()
    };
    let plan_layer = plan.as_ref().map(ExperimentPlan::layer).unwrap_or_default();
    let config = GlobalConfig::merge(&[&env_layer, &file_layer, &plan_layer, &flags]);

    env_logger::Builder::new()
        .parse_filters(&config.log_level)
        .format_timestamp(None)
        .try_init()
        .ok();
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .context("configuring worker pool")?;
    }
    let ctx = Ctx {
        config,
        argv: std::env::args().collect(),
        manifest: cli.global.manifest.clone(),
    };

    match cli.command {
        Command::Parse {
            netlist,
            labels,
            dump_graph,
        } => {
            let c = ctx.load(&netlist, &labels)?;
            println!(
                "module {}: {} nets ({} Trojan), {} gates ({} Trojan), {} inputs, {} outputs",
                c.name(),
                c.net_count(),
                c.trojan_nets().len(),
                c.gate_count(),
                c.trojan_gates().len(),
                c.primary_inputs().len(),
                c.primary_outputs().len()
            );
            let mut manifest_dir = None;
            match dump_graph.as_deref() {
                Some(p) if p == Path::new("-") => println!("{}", dump_graph_json(&c)),
                Some(p) => {
                    fs::write(p, dump_graph_json(&c))?;
                    manifest_dir = Some(parent_dir(p));
                }
                None => {}
            }
            ctx.write_manifest(manifest_dir.as_deref(), json!({ "command": "parse", "netlist": netlist }))
        }
        Command::Featurize {
            netlist,
            labels,
            output,
        } => {
            let c = ctx.load(&netlist, &labels)?;
            let m = extract_all(&c);
            match &output {
                Some(p) => m.write_csv(&c, fs::File::create(p)?)?,
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    m.write_csv(&c, &mut lock)?;
                    lock.flush()?;
                }
            }
            let dir = output.as_deref().map(parent_dir);
            ctx.write_manifest(dir.as_deref(), json!({ "command": "featurize", "netlist": netlist, "output": output }))
        }
        Command::Train {
            netlists,
            labels,
            output,
            ..
        } => {
            let mut m = FeatureMatrix::default();
            for n in &netlists {
                m.extend(extract_all(&ctx.load(n, &labels)?));
            }
            let cfg = ctx.config.normal_config(&m.labels);
            log::info!("training on {} rows ({} Trojan)", m.len(), m.trojan_count());
            let model = train(&m, &cfg)?;
            model.save(&output)?;
            ctx.write_manifest(
                Some(&parent_dir(&output)),
                json!({ "command": "train", "netlists": netlists, "output": output, "train": cfg }),
            )
        }
        Command::Rewrite {
            netlist,
            labels,
            gate,
            pattern,
            allow_relaxed,
            output,
            diff,
        } => {
            let c = ctx.load(&netlist, &labels)?;
            let g = c
                .gate_by_name(&gate)
                .with_context(|| format!("no instance named `{gate}`"))?;
            if !pattern.preserves_sequential_semantics() && !allow_relaxed {
                bail!("{pattern} changes sequential timing; pass --allow-relaxed to use it");
            }
            let r = apply_pattern(&c, g, pattern)?;
            if !allow_relaxed {
                if let Verdict::Counterexample(cex) =
                    check_equivalence(&c, &r.circuit, &EquivalenceOptions::default())?
                {
                    bail!("rewrite is not equivalent: output {} differs ({:?})", cex.output, cex.inputs);
                }
            }
            fs::write(&output, emit_verilog(&r.circuit))?;
            let d = r.diff(&c);
            if let Some(p) = &diff {
                fs::write(p, serde_json::to_string_pretty(&d)?)?;
            }
            ctx.write_manifest(
                Some(&parent_dir(&output)),
                json!({ "command": "rewrite", "netlist": netlist, "gate": gate, "pattern": pattern,
                        "allow_relaxed": allow_relaxed, "output": output, "diff": diff }),
            )
        }
        Command::Attack {
            netlist,
            labels,
            model,
            alpha,
            ttcd,
            budget,
            allow_relaxed,
            full_reextract,
            no_verify,
            out,
        } => {
            let c = ctx.load(&netlist, &labels)?;
            let detector = DetectionModel::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let budget = budget.unwrap_or(ctx.config.params.attack_budget);
            let target = match (alpha, &ttcd) {
                (Some(a), _) => Target::Circuit(a),
                (None, Some(n)) => Target::Net(
                    c.net_by_name(n)
                        .with_context(|| format!("no net named `{n}`"))?,
                ),
                (None, None) => unreachable!("clap requires one target"),
            };
            let cfg = AttackConfig {
                target,
                budget,
                allow_relaxed,
                full_reextract,
                verify: !no_verify,
                ..AttackConfig::circuit(Alpha::Infinity, budget)
            };
            let trace = run_attack(&c, &detector, &cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("attacked.v"), emit_verilog(&trace.final_circuit))?;
            fs::write(out.join("trace.json"), serde_json::to_string_pretty(&trace.report(&cfg))?)?;
            if let Target::Circuit(a) = target {
                let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
                w.write_record(["circuit", "alpha", "k", "tpr", "metric"])?;
                for k in 0..=budget {
                    let metric = (k >= 1)
                        .then(|| trace.steps.get(k - 1).map(|s| format!("{:.6}", s.metric)))
                        .flatten()
                        .unwrap_or_default();
                    let tpr = trace.tpr_after(k).map(|t| format!("{t:.6}")).unwrap_or_default();
                    w.write_record([c.name().to_string(), a.to_string(), k.to_string(), tpr, metric])?;
                }
                w.flush()?;
            }
            println!(
                "{} accepted modifications, metric {:.6} -> {:.6}",
                trace.steps.len(),
                trace.initial_metric,
                trace.final_metric
            );
            ctx.write_manifest(
                Some(&out),
                json!({ "command": "attack", "netlist": netlist, "model": model, "target": target,
                        "budget": budget, "allow_relaxed": allow_relaxed,
                        "full_reextract": full_reextract, "verify": !no_verify }),
            )
        }
        Command::Advtrain {
            netlists,
            labels,
            output,
            ..
        } => {
            let circuits = netlists
                .iter()
                .map(|n| ctx.load(n, &labels).map(Arc::new))
                .collect::<Result<Vec<_>>>()?;
            let samples = samples_from_circuits(&circuits);
            let row_labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
            let cfg = ctx.config.robust_config(&row_labels);
            let (model, stats) = train_robust(&samples, &cfg)?;
            model.save(&output)?;
            log::info!("{} adversarial examples added", stats.adversarial_examples);
            ctx.write_manifest(
                Some(&parent_dir(&output)),
                json!({ "command": "advtrain", "netlists": netlists, "output": output, "robust": cfg,
                        "adversarial_examples": stats.adversarial_examples }),
            )
        }
        Command::Evaluate { plan: plan_path, out, seeds } => {
            let plan = plan.expect("plan loaded above");
            let out = out
                .or_else(|| plan.out.clone())
                .or_else(|| ctx.config.out_dir.clone())
                .context("no output directory: pass --out or set `out` in the plan")?;
            let base = ctx
                .config
                .benchmark_dir
                .clone()
                .unwrap_or_else(|| parent_dir(&plan_path));
            let circuits = plan.load_circuits(&base)?;
            let seeds = if seeds.is_empty() { plan.seeds.clone() } else { seeds };
            let report = run_loocv(&circuits, &plan.models, &plan.alphas, &seeds, &ctx.config)?;
            let echo = serde_json::to_value(&plan)?;
            for p in emit_reports(&report, &echo, &out)? {
                println!("wrote {}", p.display());
            }
            ctx.write_manifest(
                Some(&out),
                json!({ "command": "evaluate", "plan": echo, "plan_path": plan_path, "seeds": report.seeds }),
            )
        }
    }
}
