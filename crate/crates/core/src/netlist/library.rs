use std::collections::HashMap;

use regex::Regex;

use super::{CellFamily, CellKind};

/// Result of looking up a cell type name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellMatch {
    pub family: CellFamily,
    /// `None` for Verilog gate primitives, whose arity comes from the port count.
    pub arity: Option<u8>,
}

/// Maps library cell names onto [`CellKind`] families.
///
/// The built-in table understands Verilog gate primitives (`and`, `nand`, ...,
/// `not`, `buf`), the canonical cells written by [`super::emit_verilog`]
/// (`AND2`, `INV`, `MUX2`, `DFF`, `TIE0`, ...) and the common naming schemes of
/// the SAED and lsi_10k libraries used by public Trojan benchmarks
/// (`NAND3X0`, `INVX1`, `DFFARX1`, `AN2`, `ND4`, `IV`, `FD1`, ...).
#[derive(Clone, Debug)]
pub struct CellLibrary {
    exact: HashMap<String, CellMatch>,
    rules: Vec<(Regex, Rule)>,
}

#[derive(Clone, Copy, Debug)]
enum Rule {
    /// Family taken from capture 1, arity from capture 2.
    FamilyArity,
    Fixed(CellFamily, Option<u8>),
    Reject,
}

impl Default for CellLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl CellLibrary {
    pub fn builtin() -> Self {
        let mut exact = HashMap::new();
        for (name, family) in [
            ("and", CellFamily::And),
            ("nand", CellFamily::Nand),
            ("or", CellFamily::Or),
            ("nor", CellFamily::Nor),
            ("xor", CellFamily::Xor),
            ("xnor", CellFamily::Xnor),
        ] {
            exact.insert(name.to_string(), CellMatch { family, arity: None });
        }
        exact.insert(
            "not".into(),
            CellMatch {
                family: CellFamily::Not,
                arity: Some(1),
            },
        );
        exact.insert(
            "buf".into(),
            CellMatch {
                family: CellFamily::Buf,
                arity: Some(1),
            },
        );

        let r = |p: &str| Regex::new(&format!("(?i){p}")).expect("static regex");
        use CellFamily::*;
        let rules = vec![
            (r(r"^MUX21L"), Rule::Reject),
            (r(r"^(TIEH|TIEHI|TIE1|LOGIC1)"), Rule::Fixed(Const1, Some(0))),
            (r(r"^(TIEL|TIELO|TIE0|LOGIC0)"), Rule::Fixed(Const0, Some(0))),
            (r(r"^(XNOR|XOR|NAND|NOR|AND|OR)([2-5])"), Rule::FamilyArity),
            (r(r"^(MUX2|MX2|MUX21)"), Rule::Fixed(Mux2, Some(3))),
            (r(r"^(S?DFF|FD[0-9])"), Rule::Fixed(Dff, Some(1))),
            (r(r"^(INV|IV|NOT|CLKINV|B1I)"), Rule::Fixed(Not, Some(1))),
            (r(r"^(BUF|NBUF|IBUF|CLKBUF|B1|BF|DEL)"), Rule::Fixed(Buf, Some(1))),
            // lsi_10k style names
            (r(r"^AN([2-5])"), Rule::Fixed(And, None)),
            (r(r"^ND([2-5])"), Rule::Fixed(Nand, None)),
            (r(r"^NR([2-5])"), Rule::Fixed(Nor, None)),
            (r(r"^EO([2-5])?"), Rule::Fixed(Xor, None)),
            (r(r"^EN([2-5])?"), Rule::Fixed(Xnor, None)),
        ];
        Self { exact, rules }
    }

    /// Registers an extra cell name (matched case-insensitively, whole name).
    pub fn with_alias(mut self, name: &str, kind: CellKind) -> Self {
        self.exact.insert(
            name.to_ascii_lowercase(),
            CellMatch {
                family: kind.family(),
                arity: Some(kind.arity() as u8),
            },
        );
        self
    }

    pub fn lookup(&self, cell: &str) -> Option<CellMatch> {
        if let Some(m) = self.exact.get(&cell.to_ascii_lowercase()) {
            return Some(*m);
        }
        for (re, rule) in &self.rules {
            let Some(caps) = re.captures(cell) else {
                continue;
            };
            return match *rule {
                Rule::Reject => None,
                Rule::Fixed(family, Some(arity)) => Some(CellMatch {
                    family,
                    arity: Some(arity),
                }),
                Rule::Fixed(family, None) => {
                    let arity = caps
                        .get(1)
                        .and_then(|m| m.as_str().parse().ok())
                        .unwrap_or(2);
                    Some(CellMatch {
                        family,
                        arity: Some(arity),
                    })
                }
                Rule::FamilyArity => {
                    let family = match caps[1].to_ascii_uppercase().as_str() {
                        "AND" => And,
                        "NAND" => Nand,
                        "OR" => Or,
                        "NOR" => Nor,
                        "XOR" => Xor,
                        _ => Xnor,
                    };
                    Some(CellMatch {
                        family,
                        arity: caps[2].parse().ok(),
                    })
                }
            };
        }
        None
    }
}

use CellFamily::*;

/// Role of a named port on a library cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PortRole {
    Output,
    InvertedOutput,
    Clock,
    Data,
    Select,
    Control,
}

pub(crate) fn port_role(family: CellFamily, port: &str) -> PortRole {
    let p = port.to_ascii_uppercase();
    let is_output = matches!(
        p.as_str(),
        "Y" | "Z" | "ZN" | "Q" | "O" | "X" | "OUT" | "QN" | "QB" | "Q_N" | "QBAR" | "NQ" | "YN"
    );
    match family {
        Dff => match p.as_str() {
            "QN" | "QB" | "Q_N" | "QBAR" | "NQ" => PortRole::InvertedOutput,
            _ if is_output => PortRole::Output,
            "CLK" | "CK" | "CP" | "C" | "CLOCK" => PortRole::Clock,
            "D" | "DIN" | "DATA" => PortRole::Data,
            _ => PortRole::Control,
        },
        Mux2 => match p.as_str() {
            _ if is_output => PortRole::Output,
            "S" | "S0" | "SEL" => PortRole::Select,
            _ => PortRole::Data,
        },
        _ if is_output => PortRole::Output,
        _ => PortRole::Data,
    }
}

/// Canonical port names written by the emitter.
pub(crate) fn canonical_input_port(kind: CellKind, pin: usize) -> &'static str {
    const LETTERS: [&str; 5] = ["A", "B", "C", "D", "E"];
    match kind.family() {
        Dff => "D",
        Mux2 => ["A", "B", "S"][pin],
        _ => LETTERS[pin],
    }
}

pub(crate) fn canonical_cell_name(kind: CellKind) -> String {
    match kind.family() {
        Not => "INV".into(),
        Buf => "BUF".into(),
        Mux2 => "MUX2".into(),
        Dff => "DFF".into(),
        Const0 => "TIE0".into(),
        Const1 => "TIE1".into(),
        _ => kind.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(lib: &CellLibrary, name: &str) -> Option<(CellFamily, Option<u8>)> {
        lib.lookup(name).map(|m| (m.family, m.arity))
    }

    #[test]
    fn recognises_common_library_names() {
        let lib = CellLibrary::builtin();
        assert_eq!(fam(&lib, "NAND3X0"), Some((Nand, Some(3))));
        assert_eq!(fam(&lib, "AND2X1"), Some((And, Some(2))));
        assert_eq!(fam(&lib, "NOR4X0"), Some((Nor, Some(4))));
        assert_eq!(fam(&lib, "OR5"), Some((Or, Some(5))));
        assert_eq!(fam(&lib, "XNOR2X1"), Some((Xnor, Some(2))));
        assert_eq!(fam(&lib, "INVX0"), Some((Not, Some(1))));
        assert_eq!(fam(&lib, "NBUFFX2"), Some((Buf, Some(1))));
        assert_eq!(fam(&lib, "DFFARX1"), Some((Dff, Some(1))));
        assert_eq!(fam(&lib, "MUX21X1"), Some((Mux2, Some(3))));
        assert_eq!(fam(&lib, "TIEL"), Some((Const0, Some(0))));
        assert_eq!(fam(&lib, "AN3"), Some((And, Some(3))));
        assert_eq!(fam(&lib, "ND2"), Some((Nand, Some(2))));
        assert_eq!(fam(&lib, "EO"), Some((Xor, Some(2))));
        assert_eq!(fam(&lib, "FD1"), Some((Dff, Some(1))));
        assert_eq!(fam(&lib, "and"), Some((And, None)));
        assert_eq!(fam(&lib, "MUX21L"), None);
        assert_eq!(fam(&lib, "AOI22X1"), None);
    }

    #[test]
    fn aliases_extend_the_table() {
        let lib = CellLibrary::builtin().with_alias("MYGATE", CellKind::of(CellFamily::Nand));
        assert_eq!(fam(&lib, "mygate"), Some((Nand, Some(2))));
    }

    #[test]
    fn port_roles() {
        assert_eq!(port_role(Dff, "QN"), PortRole::InvertedOutput);
        assert_eq!(port_role(Dff, "RSTB"), PortRole::Control);
        assert_eq!(port_role(Dff, "CLK"), PortRole::Clock);
        assert_eq!(port_role(Mux2, "S"), PortRole::Select);
        assert_eq!(port_role(And, "IN1"), PortRole::Data);
        assert_eq!(port_role(And, "Q"), PortRole::Output);
    }
}
