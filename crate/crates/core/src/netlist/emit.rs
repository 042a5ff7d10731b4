use std::fmt::Write;

use super::library::{canonical_cell_name, canonical_input_port};
use super::{CellFamily, CircuitGraph, Gate, NetId, ASSIGN_PREFIX};

const KEYWORDS: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "tri", "assign", "supply0",
    "supply1", "reg", "always", "initial", "begin", "end", "if", "else", "case", "casez",
    "casex", "function", "task", "integer", "generate", "for", "while", "posedge", "negedge",
    "macromodule", "and", "nand", "or", "nor", "xor", "xnor", "not", "buf",
];

fn ident(name: &str) -> String {
    let mut chars = name.chars();
    let simple = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
        && !KEYWORDS.contains(&name);
    if simple {
        name.to_string()
    } else {
        format!("\\{name} ")
    }
}

fn is_assign(c: &CircuitGraph, g: &Gate) -> bool {
    let family = g.kind.family();
    matches!(family, CellFamily::Buf | CellFamily::Const0 | CellFamily::Const1)
        && g
            .output
            .is_some_and(|o| g.instance_name == format!("{ASSIGN_PREFIX}{}", c.net(o).name))
}

/// Writes `c` as a flat structural Verilog module using canonical cell names
/// (`AND2`, `INV`, `MUX2`, `DFF`, ...). Trojan labels are preserved as
/// `// trojan-net:` / `// trojan-gate:` comments, readable with
/// [`super::LabelSpec::Comments`].
pub fn emit_verilog(c: &CircuitGraph) -> String {
    let net = |id: NetId| ident(&c.net(id).name);
    let mut out = String::new();

    let mut ports: Vec<NetId> = c.primary_inputs().to_vec();
    for &po in c.primary_outputs() {
        if !ports.contains(&po) {
            ports.push(po);
        }
    }
    if ports.is_empty() {
        let _ = writeln!(out, "module {};", ident(c.name()));
    } else {
        let list: Vec<String> = ports.iter().map(|&p| net(p)).collect();
        let _ = writeln!(out, "module {} ({});", ident(c.name()), list.join(", "));
    }
    for &pi in c.primary_inputs() {
        let _ = writeln!(out, "  input {};", net(pi));
    }
    for &po in c.primary_outputs() {
        let _ = writeln!(out, "  output {};", net(po));
    }
    for n in c.nets() {
        if !c.is_primary_input(n.id) && !c.is_primary_output(n.id) {
            let _ = writeln!(out, "  wire {};", net(n.id));
        }
    }

    for g in c.gates() {
        if is_assign(c, g) {
            let lhs = net(g.output.expect("checked"));
            let rhs = match g.kind.family() {
                CellFamily::Const0 => "1'b0".to_string(),
                CellFamily::Const1 => "1'b1".to_string(),
                _ => net(g.inputs[0]),
            };
            let _ = writeln!(out, "  assign {lhs} = {rhs};");
            continue;
        }
        let mut pins: Vec<String> = g
            .inputs
            .iter()
            .enumerate()
            .map(|(k, &n)| format!(".{}({})", canonical_input_port(g.kind, k), net(n)))
            .collect();
        if g.kind.is_dff() {
            if let Some(clk) = g.clock {
                pins.push(format!(".CLK({})", net(clk)));
            }
            for (k, &r) in g.controls.iter().enumerate() {
                pins.push(format!(".R{k}({})", net(r)));
            }
            pins.push(format!(".Q({})", g.output.map(net).unwrap_or_default()));
            if let Some(qn) = g.inv_output {
                pins.push(format!(".QN({})", net(qn)));
            }
        } else {
            pins.push(format!(".Y({})", g.output.map(net).unwrap_or_default()));
        }
        let _ = writeln!(
            out,
            "  {} {} ({});",
            canonical_cell_name(g.kind),
            ident(&g.instance_name),
            pins.join(", ")
        );
    }

    for chunk in c.trojan_nets().iter().collect::<Vec<_>>().chunks(16) {
        let names: Vec<&str> = chunk.iter().map(|n| c.net(**n).name.as_str()).collect();
        let _ = writeln!(out, "  // trojan-net: {}", names.join(" "));
    }
    for chunk in c.trojan_gates().iter().collect::<Vec<_>>().chunks(16) {
        let names: Vec<&str> = chunk
            .iter()
            .map(|g| c.gate(**g).instance_name.as_str())
            .collect();
        let _ = writeln!(out, "  // trojan-gate: {}", names.join(" "));
    }
    out.push_str("endmodule\n");
    out
}
