//! Structural Verilog frontend.
//!
//! Accepted subset: one flat module with `input`/`output`/`wire` declarations
//! (vectors are expanded into scalar nets named `bus[i]`), `assign` statements
//! whose right-hand side is a net or a 1-bit constant, and cell instances with
//! named or positional port lists. Behavioral code is rejected.

use std::collections::HashMap;

use super::labels::CommentLabels;
use super::library::{port_role, PortRole};
use super::{
    CellFamily, CellKind, CellLibrary, CircuitBuilder, CircuitGraph, LabelSpec, NetId,
    NetlistError, ASSIGN_PREFIX,
};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(i64),
    /// Sized or unsized based literal such as `1'b0`.
    Literal(String),
    Sym(char),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    src: &'a [u8],
    i: usize,
    line: usize,
    col: usize,
    comments: CommentLabels,
}

const BEHAVIORAL: &[&str] = &[
    "always", "initial", "reg", "begin", "end", "if", "else", "case", "casez", "casex",
    "function", "task", "integer", "generate", "for", "while", "posedge", "negedge",
];

fn syntax(pos: Pos, msg: impl Into<String>) -> NetlistError {
    NetlistError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            i: 0,
            line: 1,
            col: 1,
            comments: CommentLabels::default(),
        }
    }

    fn peek(&self, k: usize) -> Option<u8> {
        self.src.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek(0)?;
        self.i += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn line_comment(&mut self) {
        let start = self.i;
        while let Some(c) = self.peek(0) {
            if c == b'\n' {
                break;
            }
            self.bump();
        }
        let text = String::from_utf8_lossy(&self.src[start..self.i]);
        let text = text.trim();
        if let Some(rest) = text.strip_prefix("trojan-net:") {
            self.comments
                .nets
                .extend(rest.split_whitespace().map(|s| s.trim_start_matches('\\').to_string()));
        } else if let Some(rest) = text.strip_prefix("trojan-gate:") {
            self.comments
                .gates
                .extend(rest.split_whitespace().map(|s| s.trim_start_matches('\\').to_string()));
        }
    }

    fn skip_trivia(&mut self) -> Result<(), NetlistError> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (Some(c), _) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                (Some(b'/'), Some(b'/')) => {
                    self.bump();
                    self.bump();
                    self.line_comment();
                }
                (Some(b'/'), Some(b'*')) | (Some(b'('), Some(b'*')) => {
                    let open = self.pos();
                    let close = if self.peek(0) == Some(b'/') { b'/' } else { b')' };
                    self.bump();
                    self.bump();
                    loop {
                        match (self.peek(0), self.peek(1)) {
                            (Some(b'*'), Some(c)) if c == close => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) => return Err(syntax(open, "unterminated comment")),
                        }
                    }
                }
                (Some(b'`'), _) => {
                    // compiler directive such as `timescale: ignore the line
                    while let Some(c) = self.peek(0) {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn tokenize(mut self) -> Result<(Vec<(Tok, Pos)>, CommentLabels), NetlistError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let pos = self.pos();
            let Some(c) = self.peek(0) else { break };
            let tok = if c.is_ascii_alphabetic() || c == b'_' {
                let start = self.i;
                while matches!(self.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == b'_' || c == b'$')
                {
                    self.bump();
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.i]).into_owned())
            } else if c == b'\\' {
                self.bump();
                let start = self.i;
                while matches!(self.peek(0), Some(c) if !c.is_ascii_whitespace()) {
                    self.bump();
                }
                if start == self.i {
                    return Err(syntax(pos, "empty escaped identifier"));
                }
                Tok::Ident(String::from_utf8_lossy(&self.src[start..self.i]).into_owned())
            } else if c.is_ascii_digit() || c == b'\'' {
                let start = self.i;
                while matches!(self.peek(0), Some(c) if c.is_ascii_digit() || c == b'_') {
                    self.bump();
                }
                if self.peek(0) == Some(b'\'') {
                    self.bump();
                    while matches!(self.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == b'_')
                    {
                        self.bump();
                    }
                    Tok::Literal(String::from_utf8_lossy(&self.src[start..self.i]).into_owned())
                } else {
                    let text = String::from_utf8_lossy(&self.src[start..self.i]).replace('_', "");
                    Tok::Number(text.parse().map_err(|_| syntax(pos, "bad number"))?)
                }
            } else if b"();,.[]:={}#".contains(&c) {
                self.bump();
                Tok::Sym(c as char)
            } else {
                return Err(syntax(pos, format!("unexpected character `{}`", c as char)));
            };
            out.push((tok, pos));
        }
        Ok((out, self.comments))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    Input,
    Output,
    Wire,
    Supply0,
    Supply1,
}

#[derive(Clone, Debug)]
enum Expr {
    Net {
        name: String,
        index: Option<i64>,
        pos: Pos,
    },
    Const(bool),
}

#[derive(Clone, Debug)]
enum Conns {
    Named(Vec<(String, Option<Expr>, Pos)>),
    Positional(Vec<Option<Expr>>),
}

#[derive(Clone, Debug)]
enum Item {
    Decl {
        dir: Dir,
        range: Option<(i64, i64)>,
        names: Vec<String>,
    },
    Assign {
        lhs: Expr,
        rhs: Expr,
        pos: Pos,
    },
    Instance {
        cell: String,
        name: Option<String>,
        conns: Conns,
        pos: Pos,
    },
}

struct ModuleAst {
    name: String,
    items: Vec<Item>,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    eof: Pos,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map(|t| t.1).unwrap_or(self.eof)
    }

    fn next(&mut self) -> Result<(Tok, Pos), NetlistError> {
        let t = self
            .toks
            .get(self.i)
            .cloned()
            .ok_or_else(|| syntax(self.eof, "unexpected end of file"))?;
        self.i += 1;
        Ok(t)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), NetlistError> {
        let pos = self.pos();
        match self.next()? {
            (Tok::Sym(s), _) if s == c => Ok(()),
            (t, _) => Err(syntax(pos, format!("expected `{c}`, found {}", describe(&t)))),
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), NetlistError> {
        match self.next()? {
            (Tok::Ident(s), p) => Ok((s, p)),
            (t, p) => Err(syntax(p, format!("expected identifier, found {}", describe(&t)))),
        }
    }

    fn number(&mut self) -> Result<i64, NetlistError> {
        match self.next()? {
            (Tok::Number(n), _) => Ok(n),
            (t, p) => Err(syntax(p, format!("expected number, found {}", describe(&t)))),
        }
    }

    fn range(&mut self) -> Result<Option<(i64, i64)>, NetlistError> {
        if !self.eat('[') {
            return Ok(None);
        }
        let msb = self.number()?;
        self.expect(':')?;
        let lsb = self.number()?;
        self.expect(']')?;
        Ok(Some((msb, lsb)))
    }

    fn keyword_dir(word: &str) -> Option<Dir> {
        match word {
            "input" => Some(Dir::Input),
            "output" => Some(Dir::Output),
            "wire" | "tri" => Some(Dir::Wire),
            "supply0" => Some(Dir::Supply0),
            "supply1" => Some(Dir::Supply1),
            _ => None,
        }
    }

    fn modules(&mut self) -> Result<Vec<ModuleAst>, NetlistError> {
        let mut mods = Vec::new();
        while let Some(tok) = self.peek().cloned() {
            let pos = self.pos();
            match tok {
                Tok::Ident(w) if w == "module" || w == "macromodule" => {
                    self.i += 1;
                    mods.push(self.module()?);
                }
                t => {
                    return Err(syntax(pos, format!("expected `module`, found {}", describe(&t))))
                }
            }
        }
        Ok(mods)
    }

    fn module(&mut self) -> Result<ModuleAst, NetlistError> {
        let (name, _) = self.ident()?;
        let mut items = Vec::new();
        if self.eat('#') {
            self.skip_parens()?;
        }
        if self.eat('(') && !self.eat(')') {
            // either a plain list of port names or ANSI-style declarations
            let mut dir: Option<Dir> = None;
            let mut range = None;
            loop {
                let (word, pos) = self.ident()?;
                if let Some(d) = Self::keyword_dir(&word) {
                    dir = Some(d);
                    if let Some(Tok::Ident(w)) = self.peek() {
                        if w == "wire" {
                            self.i += 1;
                        }
                    }
                    range = self.range()?;
                    continue;
                }
                if word == "inout" {
                    return Err(NetlistError::Unsupported(format!(
                        "{}:{}: inout ports",
                        pos.line, pos.col
                    )));
                }
                if let Some(d) = dir {
                    items.push(Item::Decl {
                        dir: d,
                        range,
                        names: vec![word],
                    });
                }
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        self.expect(';')?;

        loop {
            let pos = self.pos();
            let (word, _) = self.ident()?;
            if word == "endmodule" {
                break;
            }
            if BEHAVIORAL.contains(&word.as_str()) {
                return Err(NetlistError::Behavioral {
                    keyword: word,
                    line: pos.line,
                    col: pos.col,
                });
            }
            if word == "inout" {
                return Err(NetlistError::Unsupported(format!(
                    "{}:{}: inout ports",
                    pos.line, pos.col
                )));
            }
            if let Some(dir) = Self::keyword_dir(&word) {
                if let Some(Tok::Ident(w)) = self.peek() {
                    if w == "wire" {
                        self.i += 1;
                    }
                }
                let range = self.range()?;
                let mut names = vec![self.ident()?.0];
                while self.eat(',') {
                    names.push(self.ident()?.0);
                }
                self.expect(';')?;
                items.push(Item::Decl { dir, range, names });
            } else if word == "assign" {
                loop {
                    let apos = self.pos();
                    let lhs = self.expr()?;
                    self.expect('=')?;
                    let rhs = self.expr()?;
                    items.push(Item::Assign {
                        lhs,
                        rhs,
                        pos: apos,
                    });
                    if !self.eat(',') {
                        break;
                    }
                }
                self.expect(';')?;
            } else {
                if self.eat('#') {
                    self.skip_parens()?;
                }
                loop {
                    let name = match self.peek() {
                        Some(Tok::Ident(_)) => Some(self.ident()?.0),
                        _ => None,
                    };
                    let conns = self.connections()?;
                    items.push(Item::Instance {
                        cell: word.clone(),
                        name,
                        conns,
                        pos,
                    });
                    if !self.eat(',') {
                        break;
                    }
                }
                self.expect(';')?;
            }
        }
        Ok(ModuleAst { name, items })
    }

    fn skip_parens(&mut self) -> Result<(), NetlistError> {
        self.expect('(')?;
        let mut depth = 1;
        while depth > 0 {
            match self.next()?.0 {
                Tok::Sym('(') => depth += 1,
                Tok::Sym(')') => depth -= 1,
                _ => {}
            }
        }
        Ok(())
    }

    fn connections(&mut self) -> Result<Conns, NetlistError> {
        self.expect('(')?;
        if self.eat(')') {
            return Ok(Conns::Positional(Vec::new()));
        }
        if self.peek() == Some(&Tok::Sym('.')) {
            let mut named = Vec::new();
            loop {
                self.expect('.')?;
                let (pin, pos) = self.ident()?;
                self.expect('(')?;
                let e = if self.eat(')') {
                    None
                } else {
                    let e = self.expr()?;
                    self.expect(')')?;
                    Some(e)
                };
                named.push((pin, e, pos));
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
            Ok(Conns::Named(named))
        } else {
            let mut list = Vec::new();
            loop {
                if matches!(self.peek(), Some(Tok::Sym(',')) | Some(Tok::Sym(')'))) {
                    list.push(None);
                } else {
                    list.push(Some(self.expr()?));
                }
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
            Ok(Conns::Positional(list))
        }
    }

    fn expr(&mut self) -> Result<Expr, NetlistError> {
        let pos = self.pos();
        match self.next()? {
            (Tok::Ident(name), _) => {
                let index = if self.eat('[') {
                    let n = self.number()?;
                    if self.eat(':') {
                        return Err(NetlistError::Unsupported(format!(
                            "{}:{}: part-select connections",
                            pos.line, pos.col
                        )));
                    }
                    self.expect(']')?;
                    Some(n)
                } else {
                    None
                };
                Ok(Expr::Net { name, index, pos })
            }
            (Tok::Literal(text), _) => parse_literal(&text).map(Expr::Const).ok_or_else(|| {
                NetlistError::Unsupported(format!(
                    "{}:{}: constant `{text}` is not a single 0/1 bit",
                    pos.line, pos.col
                ))
            }),
            (Tok::Number(n), _) if n == 0 || n == 1 => Ok(Expr::Const(n == 1)),
            (Tok::Sym('{'), _) => Err(NetlistError::Unsupported(format!(
                "{}:{}: concatenations",
                pos.line, pos.col
            ))),
            (t, _) => Err(syntax(pos, format!("expected a net, found {}", describe(&t)))),
        }
    }
}

fn parse_literal(text: &str) -> Option<bool> {
    let (_, rest) = text.split_once('\'')?;
    let mut chars = rest.chars();
    let base = chars.next()?.to_ascii_lowercase();
    let digits: String = chars.filter(|c| *c != '_').collect();
    let radix = match base {
        'b' => 2,
        'o' => 8,
        'd' => 10,
        'h' => 16,
        _ => return None,
    };
    match u64::from_str_radix(&digits, radix).ok()? {
        0 => Some(false),
        1 => Some(true),
        _ => None,
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(n) => format!("`{n}`"),
        Tok::Literal(s) => format!("`{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
    }
}

/// Parses `source` with the built-in cell library.
pub fn parse_verilog(source: &str, labels: &LabelSpec) -> Result<CircuitGraph, NetlistError> {
    parse_verilog_with_library(source, labels, &CellLibrary::builtin())
}

pub fn parse_verilog_with_library(
    source: &str,
    labels: &LabelSpec,
    library: &CellLibrary,
) -> Result<CircuitGraph, NetlistError> {
    let (toks, comments) = Lexer::new(source).tokenize()?;
    let eof = Pos {
        line: source.lines().count().max(1),
        col: 1,
    };
    let mut parser = Parser { toks, i: 0, eof };
    let mut modules = parser.modules()?;
    let module = match modules.len() {
        0 => return Err(syntax(eof, "no module found")),
        1 => modules.pop().expect("one module"),
        n => {
            return Err(NetlistError::Unsupported(format!(
                "{n} modules in one file; hierarchical netlists must be flattened first"
            )))
        }
    };
    let circuit = Elaborator::new(&module.name, library).run(&module)?;
    let (gates, nets) = labels.resolve(&circuit, std::slice::from_ref(&comments))?;
    if gates.is_empty() && nets.is_empty() {
        return Ok(circuit);
    }
    let mut b = CircuitBuilder::from_circuit(&circuit);
    for g in gates {
        b.mark_trojan_gate(g);
    }
    for n in nets {
        b.mark_trojan_net(n);
    }
    b.build()
}

struct Elaborator<'l> {
    b: CircuitBuilder,
    library: &'l CellLibrary,
    buses: HashMap<String, Vec<String>>,
    ties: [Option<NetId>; 2],
    unnamed: usize,
}

impl<'l> Elaborator<'l> {
    fn new(name: &str, library: &'l CellLibrary) -> Self {
        Self {
            b: CircuitBuilder::new(name),
            library,
            buses: HashMap::new(),
            ties: [None, None],
            unnamed: 0,
        }
    }

    fn run(mut self, module: &ModuleAst) -> Result<CircuitGraph, NetlistError> {
        let mut supplies = Vec::new();
        for item in &module.items {
            if let Item::Decl { dir, range, names } = item {
                for name in names {
                    let bits: Vec<String> = match range {
                        None => vec![name.clone()],
                        Some((msb, lsb)) => {
                            let step = if msb >= lsb { -1 } else { 1 };
                            let mut v = Vec::new();
                            let mut i = *msb;
                            loop {
                                v.push(format!("{name}[{i}]"));
                                if i == *lsb {
                                    break;
                                }
                                i += step;
                            }
                            self.buses.insert(name.clone(), v.clone());
                            v
                        }
                    };
                    for bit in bits {
                        let id = self.b.wire_or_existing(&bit);
                        match dir {
                            Dir::Input => self.b.mark_input(id),
                            Dir::Output => self.b.mark_output(id),
                            Dir::Wire => {}
                            Dir::Supply0 => supplies.push((id, false)),
                            Dir::Supply1 => supplies.push((id, true)),
                        }
                    }
                }
            }
        }
        for (net, value) in supplies {
            let inst = format!("{ASSIGN_PREFIX}{}", self.b.net_name(net));
            self.b.add_gate(&inst, const_kind(value), &[], Some(net))?;
        }

        for item in &module.items {
            match item {
                Item::Decl { .. } => {}
                Item::Assign { lhs, rhs, pos } => self.assign(lhs, rhs, *pos)?,
                Item::Instance {
                    cell,
                    name,
                    conns,
                    pos,
                } => self.instance(cell, name.as_deref(), conns, *pos)?,
            }
        }
        self.b.build()
    }

    fn tie(&mut self, value: bool) -> Result<NetId, NetlistError> {
        if let Some(id) = self.ties[value as usize] {
            return Ok(id);
        }
        let net = self.b.fresh_net(if value { "__tie1" } else { "__tie0" });
        let inst = format!("{ASSIGN_PREFIX}{}", self.b.net_name(net));
        self.b.add_gate(&inst, const_kind(value), &[], Some(net))?;
        self.ties[value as usize] = Some(net);
        Ok(net)
    }

    fn lookup_net(&self, name: &str, index: Option<i64>) -> Result<NetId, String> {
        let key = match index {
            Some(i) => format!("{name}[{i}]"),
            None => match self.buses.get(name) {
                Some(bits) if bits.len() == 1 => bits[0].clone(),
                Some(_) => return Err(format!("{name} (whole bus)")),
                None => name.to_string(),
            },
        };
        self.b.net_id(&key).ok_or(key)
    }

    fn resolve(
        &mut self,
        e: &Expr,
        instance: &str,
        pin: &str,
    ) -> Result<NetId, NetlistError> {
        match e {
            Expr::Const(v) => self.tie(*v),
            Expr::Net { name, index, pos } => {
                self.lookup_net(name, *index)
                    .map_err(|net| NetlistError::DanglingPin {
                        instance: instance.to_string(),
                        pin: pin.to_string(),
                        net,
                        line: pos.line,
                        col: pos.col,
                    })
            }
        }
    }

    fn assign(&mut self, lhs: &Expr, rhs: &Expr, pos: Pos) -> Result<(), NetlistError> {
        let Expr::Net { .. } = lhs else {
            return Err(syntax(pos, "left-hand side of assign must be a net"));
        };
        let out = self.resolve(lhs, "assign", "lhs")?;
        let inst = format!("{ASSIGN_PREFIX}{}", self.b.net_name(out));
        let inst = self.b.fresh_instance_name(&inst);
        match rhs {
            Expr::Const(v) => {
                self.b.add_gate(&inst, const_kind(*v), &[], Some(out))?;
            }
            Expr::Net { .. } => {
                let src = self.resolve(rhs, "assign", "rhs")?;
                self.b
                    .add_gate(&inst, CellKind::of(CellFamily::Buf), &[src], Some(out))?;
            }
        }
        Ok(())
    }

    fn instance(
        &mut self,
        cell: &str,
        name: Option<&str>,
        conns: &Conns,
        pos: Pos,
    ) -> Result<(), NetlistError> {
        let m = self
            .library
            .lookup(cell)
            .ok_or_else(|| NetlistError::UnknownCell {
                cell: cell.to_string(),
                line: pos.line,
                col: pos.col,
            })?;
        let inst = match name {
            Some(n) => n.to_string(),
            None => {
                self.unnamed += 1;
                self.b.fresh_instance_name(&format!("__prim_{}", self.unnamed))
            }
        };
        let arity_err = |msg: String| NetlistError::PinArity {
            instance: inst.clone(),
            kind: cell.to_string(),
            msg,
        };

        let mut output = None;
        let mut inv_output = None;
        let mut clock = None;
        let mut data: Vec<(String, NetId)> = Vec::new();
        let mut select = None;
        let mut controls = Vec::new();

        match conns {
            Conns::Named(pins) => {
                for (pin, e, _) in pins {
                    let role = port_role(m.family, pin);
                    let Some(e) = e else {
                        if matches!(role, PortRole::Data | PortRole::Select) {
                            return Err(arity_err(format!("input pin `{pin}` is unconnected")));
                        }
                        continue;
                    };
                    let net = self.resolve(e, &inst, pin)?;
                    let slot = match role {
                        PortRole::Output => &mut output,
                        PortRole::InvertedOutput => &mut inv_output,
                        PortRole::Clock => &mut clock,
                        PortRole::Select => &mut select,
                        PortRole::Data => {
                            data.push((pin.to_ascii_uppercase(), net));
                            continue;
                        }
                        PortRole::Control => {
                            controls.push(net);
                            continue;
                        }
                    };
                    if slot.replace(net).is_some() {
                        return Err(arity_err(format!("pin role of `{pin}` appears twice")));
                    }
                }
                if m.family == CellFamily::Mux2 {
                    data.sort_by(|a, b| a.0.cmp(&b.0));
                }
            }
            Conns::Positional(list) => {
                let mut nets = Vec::with_capacity(list.len());
                for (k, e) in list.iter().enumerate() {
                    nets.push(match e {
                        Some(e) => Some(self.resolve(e, &inst, &format!("#{k}"))?),
                        None => None,
                    });
                }
                let mut it = nets.into_iter();
                output = it.next().flatten();
                let rest: Vec<Option<NetId>> = it.collect();
                let need = |k: usize, v: Option<NetId>| {
                    v.ok_or_else(|| arity_err(format!("positional input #{k} is unconnected")))
                };
                match m.family {
                    CellFamily::Dff => {
                        let d = need(1, rest.first().copied().flatten())?;
                        data.push(("D".into(), d));
                        clock = rest.get(1).copied().flatten();
                        controls.extend(rest.iter().skip(2).flatten());
                    }
                    CellFamily::Mux2 => {
                        if rest.len() != 3 {
                            return Err(arity_err(format!("expected 3 inputs, found {}", rest.len())));
                        }
                        data.push(("A".into(), need(1, rest[0])?));
                        data.push(("B".into(), need(2, rest[1])?));
                        select = Some(need(3, rest[2])?);
                    }
                    _ => {
                        for (k, v) in rest.into_iter().enumerate() {
                            data.push((format!("#{k}"), need(k + 1, v)?));
                        }
                    }
                }
            }
        }

        let mut inputs: Vec<NetId> = data.into_iter().map(|(_, n)| n).collect();
        if m.family == CellFamily::Mux2 {
            if inputs.len() != 2 || select.is_none() {
                return Err(arity_err("MUX2 needs two data inputs and one select".into()));
            }
            inputs.extend(select);
        }
        let arity = m.arity.unwrap_or(inputs.len() as u8);
        if arity as usize != inputs.len() {
            return Err(arity_err(format!(
                "expected {arity} logic inputs, found {}",
                inputs.len()
            )));
        }
        let kind = CellKind::new(m.family, arity).map_err(|e| arity_err(e.to_string()))?;
        if kind.is_dff() {
            self.b
                .add_dff(&inst, inputs[0], clock, output, inv_output, &controls)?;
        } else {
            if inv_output.is_some() || clock.is_some() || !controls.is_empty() {
                return Err(arity_err("unexpected clock or control pins".into()));
            }
            self.b.add_gate(&inst, kind, &inputs, output)?;
        }
        Ok(())
    }
}

fn const_kind(value: bool) -> CellKind {
    CellKind::of(if value {
        CellFamily::Const1
    } else {
        CellFamily::Const0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::Driver;

    #[test]
    fn literals() {
        assert_eq!(parse_literal("1'b0"), Some(false));
        assert_eq!(parse_literal("1'b1"), Some(true));
        assert_eq!(parse_literal("'h1"), Some(true));
        assert_eq!(parse_literal("1'bx"), None);
    }

    #[test]
    fn positional_primitives_and_named_cells() {
        let src = r"
            module m (a, b, c, y, q);
              input a, b, c;
              output y, q;
              wire w1, w2;
              nand (w1, a, b);
              NOR2X0 u1 (.IN1(w1), .IN2(c), .QN(w2));
              DFFX1 ff (.D(w2), .CLK(c), .Q(q), .QN());
              assign y = w2;
            endmodule";
        let c = parse_verilog(src, &LabelSpec::None).unwrap();
        assert_eq!(c.gate_count(), 4);
        let u1 = c.gate(c.gate_by_name("u1").unwrap());
        assert_eq!(u1.kind.to_string(), "NOR2");
        let ff = c.gate(c.gate_by_name("ff").unwrap());
        assert!(ff.kind.is_dff());
        assert_eq!(ff.clock, c.net_by_name("c"));
        assert_eq!(ff.inv_output, None);
        let y = c.net_by_name("y").unwrap();
        assert_eq!(c.net(y).driver, Driver::Gate(c.gate_by_name("__assign_y").unwrap()));
    }

    #[test]
    fn buses_expand_to_scalar_nets() {
        let src = "module m(d, y); input [1:0] d; output y; AND2 g(.A(d[1]), .B(d[0]), .Y(y)); endmodule";
        let c = parse_verilog(src, &LabelSpec::None).unwrap();
        assert!(c.net_by_name("d[1]").is_some());
        assert!(c.net_by_name("d[0]").is_some());
        assert_eq!(c.primary_inputs().len(), 2);
    }

    #[test]
    fn whole_bus_connection_is_rejected() {
        let src = "module m(d, y); input [1:0] d; output y; INV g(.A(d), .Y(y)); endmodule";
        assert!(matches!(
            parse_verilog(src, &LabelSpec::None),
            Err(NetlistError::DanglingPin { .. })
        ));
    }

    #[test]
    fn inline_constants_share_a_tie_net() {
        let src = "module m(a, y, z); input a; output y, z;
                   AND2 g0(.A(a), .B(1'b1), .Y(y)); OR2 g1(.A(a), .B(1'b1), .Y(z)); endmodule";
        let c = parse_verilog(src, &LabelSpec::None).unwrap();
        assert_eq!(c.gate_count(), 3);
        let tie = c.net_by_name("__tie1").unwrap();
        assert_eq!(c.sinks(tie).len(), 2);
    }

    #[test]
    fn comment_and_attribute_skipping() {
        let src = "`timescale 1ns/1ps
            /* block */ module m(a, y); (* keep *) input a; output y; // trojan-net: y
            INV g(.A(a), .Y(y)); endmodule";
        let c = parse_verilog(src, &LabelSpec::Comments).unwrap();
        assert!(c.is_trojan_net(c.net_by_name("y").unwrap()));
        assert!(c.is_trojan_gate(c.gate_by_name("g").unwrap()));
    }

    #[test]
    fn ansi_header() {
        let src = "module m(input a, input wire [1:0] b, output y); AND3 g(.A(a), .B(b[0]), .C(b[1]), .Y(y)); endmodule";
        let c = parse_verilog(src, &LabelSpec::None).unwrap();
        assert_eq!(c.primary_inputs().len(), 3);
        assert_eq!(c.primary_outputs().len(), 1);
    }
}
