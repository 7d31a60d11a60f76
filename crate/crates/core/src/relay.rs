//! Relay-schematic netlists and their translation to a cyclic model.
//!
//! ```text
//! # seal-in
//! INPUT start, stop;
//! COIL K = (start | K) & !stop;
//! OUTPUT motor = K
//! ```
//!
//! `&` is a series connection, `|` parallel, a bare name a normally-open
//! contact and `!name` a normally-closed one (`NO(x)` and `NC(x)` are
//! accepted as long forms). Coils see the previous cycle's coil states;
//! outputs see the coils after the update.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::frontend::ast::Span;
use crate::frontend::lexer::is_reserved;
use crate::frontend::{parse, DiagCode, Diagnostic, Model};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Contact {
    No(String),
    Nc(String),
    Series(Vec<Contact>),
    Parallel(Vec<Contact>),
}

impl Contact {
    fn refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Contact::No(r) | Contact::Nc(r) => out.push(r),
            Contact::Series(v) | Contact::Parallel(v) => v.iter().for_each(|c| c.refs(out)),
        }
    }

    /// Boolean expression in model syntax, fully parenthesized.
    fn to_expr(&self, rename: &dyn Fn(&str) -> String) -> String {
        match self {
            Contact::No(r) => rename(r),
            Contact::Nc(r) => format!("NOT {}", rename(r)),
            Contact::Series(v) | Contact::Parallel(v) => {
                let op = if matches!(self, Contact::Series(_)) { " AND " } else { " OR " };
                let parts: Vec<String> =
                    v.iter().map(|c| format!("({})", c.to_expr(rename))).collect();
                parts.join(op)
            }
        }
    }

    /// Evaluates the network against a contact-state lookup.
    pub fn eval(&self, state: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Contact::No(r) => state(r),
            Contact::Nc(r) => !state(r),
            Contact::Series(v) => v.iter().all(|c| c.eval(state)),
            Contact::Parallel(v) => v.iter().any(|c| c.eval(state)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rung {
    pub target: String,
    pub network: Contact,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schematic {
    pub inputs: Vec<String>,
    pub coils: Vec<Rung>,
    pub outputs: Vec<Rung>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Sym(char),
}

struct Stmt {
    toks: Vec<(Tok, Span)>,
    start: Span,
}

fn diag(code: DiagCode, span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(code, span, msg)
}

/// Splits the source into `;`-terminated statements of tokens.
fn tokenize(source: &str) -> Result<Vec<Stmt>, Diagnostic> {
    let mut stmts = Vec::new();
    let mut cur: Vec<(Tok, Span)> = Vec::new();
    let mut start = Span::new(1, 1);
    for (ln, line) in source.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let span = Span::new(ln as u32 + 1, i as u32 + 1);
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let s = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                if cur.is_empty() {
                    start = span;
                }
                cur.push((Tok::Ident(chars[s..i].iter().collect()), span));
            } else if c == ';' {
                if !cur.is_empty() {
                    stmts.push(Stmt {
                        toks: std::mem::take(&mut cur),
                        start,
                    });
                }
                i += 1;
            } else if "=,&|!()".contains(c) {
                if cur.is_empty() {
                    start = span;
                }
                cur.push((Tok::Sym(c), span));
                i += 1;
            } else {
                return Err(diag(DiagCode::Syntax, span, format!("unexpected character `{c}`")));
            }
        }
    }
    if !cur.is_empty() {
        stmts.push(Stmt { toks: cur, start });
    }
    Ok(stmts)
}

struct ExprParser<'a> {
    toks: &'a [(Tok, Span)],
    pos: usize,
    end: Span,
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn span(&self) -> Span {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, Diagnostic> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(diag(DiagCode::Syntax, self.span(), "expected a contact name")),
        }
    }

    fn parallel(&mut self) -> Result<Contact, Diagnostic> {
        let mut v = vec![self.series()?];
        while self.eat('|') {
            v.push(self.series()?);
        }
        Ok(if v.len() == 1 { v.pop().unwrap() } else { Contact::Parallel(v) })
    }

    fn series(&mut self) -> Result<Contact, Diagnostic> {
        let mut v = vec![self.atom()?];
        while self.eat('&') {
            v.push(self.atom()?);
        }
        Ok(if v.len() == 1 { v.pop().unwrap() } else { Contact::Series(v) })
    }

    fn atom(&mut self) -> Result<Contact, Diagnostic> {
        if self.eat('(') {
            let c = self.parallel()?;
            if !self.eat(')') {
                return Err(diag(DiagCode::Syntax, self.span(), "expected `)`"));
            }
            return Ok(c);
        }
        if self.eat('!') {
            return Ok(Contact::Nc(self.ident()?));
        }
        let name = self.ident()?;
        if (name == "NO" || name == "NC") && self.eat('(') {
            let r = self.ident()?;
            if !self.eat(')') {
                return Err(diag(DiagCode::Syntax, self.span(), "expected `)`"));
            }
            return Ok(if name == "NO" { Contact::No(r) } else { Contact::Nc(r) });
        }
        Ok(Contact::No(name))
    }
}

pub fn parse_schematic(source: &str) -> Result<Schematic, Vec<Diagnostic>> {
    let stmts = tokenize(source).map_err(|d| vec![d])?;
    let mut sch = Schematic::default();
    let mut diags = Vec::new();
    let mut declared: HashMap<String, Span> = HashMap::new();
    let mut declare = |name: &str, span: Span, diags: &mut Vec<Diagnostic>| {
        if is_reserved(name) || name == "user_logic" {
            diags.push(diag(
                DiagCode::ReservedWord,
                span,
                format!("`{name}` is a reserved word"),
            ));
        } else if let Some(prev) = declared.get(name) {
            let code = DiagCode::DuplicateTarget;
            diags.push(diag(
                code,
                span,
                format!("duplicate target `{name}` (first defined at {prev})"),
            ));
        } else {
            declared.insert(name.to_string(), span);
        }
    };
    let mut rungs: Vec<(bool, Rung, Span)> = Vec::new();
    for st in &stmts {
        let (Tok::Ident(kw), _) = &st.toks[0] else {
            diags.push(diag(DiagCode::Syntax, st.start, "expected INPUT, COIL or OUTPUT"));
            continue;
        };
        let rest = &st.toks[1..];
        let end = st.toks.last().unwrap().1;
        match kw.as_str() {
            "INPUT" => {
                let mut expect_name = true;
                for (t, span) in rest {
                    match (t, expect_name) {
                        (Tok::Ident(n), true) => {
                            let before = diags.len();
                            declare(n, *span, &mut diags);
                            if diags.len() == before {
                                sch.inputs.push(n.clone());
                            }
                            expect_name = false;
                        }
                        (Tok::Sym(','), false) => expect_name = true,
                        _ => {
                            diags.push(diag(DiagCode::Syntax, *span, "malformed INPUT list"));
                            break;
                        }
                    }
                }
                if expect_name {
                    diags.push(diag(DiagCode::Syntax, end, "INPUT list must name a contact"));
                }
            }
            "COIL" | "OUTPUT" => {
                let (Some((Tok::Ident(target), tspan)), Some((Tok::Sym('='), _))) =
                    (rest.first(), rest.get(1))
                else {
                    diags.push(diag(DiagCode::Syntax, st.start, format!("expected `{kw} name = ...`")));
                    continue;
                };
                let mut p = ExprParser {
                    toks: &rest[2..],
                    pos: 0,
                    end,
                };
                let network = match p.parallel() {
                    Ok(n) if p.pos == p.toks.len() => n,
                    Ok(_) => {
                        diags.push(diag(DiagCode::Syntax, p.span(), "unexpected token after network"));
                        continue;
                    }
                    Err(d) => {
                        diags.push(d);
                        continue;
                    }
                };
                let before = diags.len();
                declare(target, *tspan, &mut diags);
                if diags.len() == before {
                    let rung = Rung {
                        target: target.clone(),
                        network,
                        line: tspan.line,
                    };
                    rungs.push((kw == "COIL", rung, *tspan));
                }
            }
            other => diags.push(diag(
                DiagCode::UnknownSection,
                st.start,
                format!("unknown statement `{other}`"),
            )),
        }
    }
    let inputs: HashSet<&str> = sch.inputs.iter().map(String::as_str).collect();
    let coils: HashSet<&str> = rungs
        .iter()
        .filter(|r| r.0)
        .map(|r| r.1.target.as_str())
        .collect();
    for (_, rung, span) in &rungs {
        let mut refs = Vec::new();
        rung.network.refs(&mut refs);
        for r in refs {
            if !inputs.contains(r) && !coils.contains(r) {
                diags.push(diag(
                    DiagCode::UnknownIdentifier,
                    Span::new(span.line, 1),
                    format!("unknown reference `{r}` in rung for `{}`", rung.target),
                ));
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    for (is_coil, rung, _) in rungs {
        if is_coil {
            sch.coils.push(rung);
        } else {
            sch.outputs.push(rung);
        }
    }
    Ok(sch)
}

/// Source text of the equivalent model.
pub fn translate_source(sch: &Schematic, name: &str) -> String {
    let taken: HashSet<&str> = sch
        .inputs
        .iter()
        .chain(sch.coils.iter().map(|r| &r.target))
        .chain(sch.outputs.iter().map(|r| &r.target))
        .map(String::as_str)
        .collect();
    let mut used: HashSet<String> = HashSet::new();
    let temp: HashMap<&str, String> = sch
        .coils
        .iter()
        .map(|r| {
            let mut t = format!("{}_nx", r.target);
            let mut n = 1;
            while taken.contains(t.as_str()) || used.contains(&t) || is_reserved(&t) {
                n += 1;
                t = format!("{}_nx{n}", r.target);
            }
            used.insert(t.clone());
            (r.target.as_str(), t)
        })
        .collect();

    let decls = |names: &mut dyn Iterator<Item = &String>, init: bool| -> String {
        names
            .map(|n| if init { format!("{n} : BOOL := FALSE") } else { format!("{n} : BOOL") })
            .collect::<Vec<_>>()
            .join(",\n  ")
    };
    let mut s = String::new();
    let _ = writeln!(s, "MACHINE {name}");
    if !sch.inputs.is_empty() {
        let _ = writeln!(s, "INPUTS\n  {}", decls(&mut sch.inputs.iter(), false));
    }
    if !sch.outputs.is_empty() {
        let _ = writeln!(
            s,
            "OUTPUTS\n  {}",
            decls(&mut sch.outputs.iter().map(|r| &r.target), false)
        );
    }
    if !sch.coils.is_empty() {
        let mut state = sch.coils.iter().map(|r| &r.target).chain(sch.coils.iter().map(|r| &temp[r.target.as_str()]));
        let _ = writeln!(s, "STATE\n  {}", decls(&mut state, true));
    }
    let id = |r: &str| r.to_string();
    let mut body = Vec::new();
    for r in &sch.coils {
        body.push(format!("{} := {}", temp[r.target.as_str()], r.network.to_expr(&id)));
    }
    for r in &sch.coils {
        body.push(format!("{} := {}", r.target, temp[r.target.as_str()]));
    }
    for r in &sch.outputs {
        body.push(format!("{} := {}", r.target, r.network.to_expr(&id)));
    }
    let _ = writeln!(s, "OPERATION user_logic BEGIN");
    if !body.is_empty() {
        let _ = writeln!(s, "  {}", body.join(";\n  "));
    }
    s.push_str("END\n");
    s
}

pub fn translate(sch: &Schematic) -> Model {
    parse(&translate_source(sch, "Relays")).expect("generated model text is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{complexity_check, typecheck, Interpreter};

    const SEAL_IN: &str = "INPUT start, stop; COIL K = (start | K) & !stop; OUTPUT motor = K";

    fn outputs(sch: &Schematic, trace: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let m = typecheck(&translate(sch)).unwrap();
        let mut it = Interpreter::new(&m);
        trace
            .iter()
            .map(|i| {
                it.cycle(i).unwrap();
                it.outputs()
            })
            .collect()
    }

    #[test]
    fn seal_in_parses() {
        let s = parse_schematic(SEAL_IN).unwrap();
        assert_eq!(s.inputs, vec!["start", "stop"]);
        assert_eq!(s.coils.len(), 1);
        assert_eq!(s.outputs.len(), 1);
        assert_eq!(
            s.coils[0].network,
            Contact::Series(vec![
                Contact::Parallel(vec![Contact::No("start".into()), Contact::No("K".into())]),
                Contact::Nc("stop".into()),
            ])
        );
    }

    #[test]
    fn seal_in_table() {
        let s = parse_schematic(SEAL_IN).unwrap();
        let out = outputs(&s, &[vec![1, 0], vec![0, 0], vec![0, 1]]);
        assert_eq!(out, vec![vec![1], vec![1], vec![0]]);
    }

    #[test]
    fn diagnostics() {
        let e = parse_schematic("INPUT a;\nOUTPUT o = a & x").unwrap_err();
        assert_eq!(e[0].code, DiagCode::UnknownIdentifier);
        assert_eq!(e[0].span.line, 2);
        let e = parse_schematic("INPUT a;\nCOIL K = a;\nCOIL K = !a;").unwrap_err();
        assert_eq!(e[0].code, DiagCode::DuplicateTarget);
        assert_eq!(e[0].span.line, 3);
        assert!(parse_schematic("INPUT a; LAMP o = a").is_err());
        assert!(parse_schematic("INPUT a; OUTPUT o = a &").is_err());
        assert!(parse_schematic("INPUT a; OUTPUT o = (a").is_err());
        assert!(parse_schematic("INPUT a; OUTPUT o = a $ a").is_err());
        assert!(parse_schematic("INPUT END; OUTPUT o = END").is_err());
        // Outputs are lamps, not contacts.
        assert!(parse_schematic("INPUT a; OUTPUT o = a; OUTPUT p = o").is_err());
    }

    #[test]
    fn plain_and_normally_closed_contacts() {
        let s = parse_schematic("INPUT i; OUTPUT o = NO(i)").unwrap();
        assert_eq!(outputs(&s, &[vec![0], vec![1]]), vec![vec![0], vec![1]]);
        let s = parse_schematic("INPUT i; OUTPUT o = NC(i) # comment").unwrap();
        assert_eq!(outputs(&s, &[vec![0]]), vec![vec![1]]);
    }

    #[test]
    fn coils_read_previous_values() {
        // A two-stage shift: B lags A by one cycle whatever the rung order.
        for src in [
            "INPUT x; COIL A = x; COIL B = A; OUTPUT o = B",
            "INPUT x; COIL B = A; COIL A = x; OUTPUT o = B",
        ] {
            let s = parse_schematic(src).unwrap();
            let out = outputs(&s, &[vec![1], vec![0], vec![0]]);
            assert_eq!(out, vec![vec![0], vec![1], vec![0]], "{src}");
        }
    }

    #[test]
    fn translation_passes_the_frontend() {
        let s = parse_schematic(SEAL_IN).unwrap();
        let m = typecheck(&translate(&s)).unwrap();
        assert!(complexity_check(&m).max_ops > 0);
    }

    #[test]
    fn temp_names_avoid_collisions() {
        let s = parse_schematic("INPUT K_nx; COIL K = K_nx; OUTPUT o = K").unwrap();
        let src = translate_source(&s, "T");
        assert!(src.contains("K_nx2"));
        assert!(typecheck(&translate(&s)).is_ok());
    }
}
