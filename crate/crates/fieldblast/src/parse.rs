//! Problem files: a small s-expression format.
//!
//! ```text
//! (set-field 7)
//! (declare-ff x)
//! (declare-bv v 3)
//! (declare-nat n)
//! (assert-hyp (<= (to-nat x) 1))
//! (goal (= (to-bv 3 (to-nat x)) v))
//! ```
//!
//! Comments run from `;` to end of line. `+` and `*` are n-ary (left
//! nested), `-` and `mod` binary. Numeric literals adopt the sort their
//! context requires and default to Nat.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::term::{
    is_prime, normalize, sort_check_formula, Formula, FormulaNode, Sort, Term, TermNode,
    PLACEHOLDER_PREFIX,
};
use crate::{Error, Result};

/// A parsed, sort-checked verification problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    /// The single prime field order of the problem.
    pub prime: u64,
    /// Declarations in file order.
    pub decls: Vec<(String, Sort)>,
    pub hyps: Vec<Formula>,
    pub goals: Vec<Formula>,
}

impl Problem {
    pub fn sort_of(&self, name: &str) -> Option<Sort> {
        self.decls
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| *s)
    }

    /// Goals and hypotheses as a proof context (conjunctions split,
    /// formulas normalized).
    pub fn to_context(&self) -> crate::term::ProofContext {
        let mut pc = crate::term::ProofContext::new(self.prime);
        for (n, _) in &self.decls {
            pc.original_vars.insert(n.clone());
        }
        for h in &self.hyps {
            pc.push_hyp(h.clone());
        }
        for g in &self.goals {
            pc.push_goal(g.clone());
        }
        pc
    }
}

// ---------------------------------------------------------------------------
// S-expressions
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Sexp {
    Atom(String, usize, usize),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom(_, l, c) | Sexp::List(_, l, c) => (*l, *c),
        }
    }
}

fn perr(pos: (usize, usize), msg: impl Into<String>) -> Error {
    Error::Parse {
        line: pos.0,
        col: pos.1,
        msg: msg.into(),
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    i: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            i: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.i)?;
        self.i += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.i).copied()
    }

    fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b';') => {
                    while let Some(b) = self.bump() {
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn parse_all(&mut self) -> Result<Vec<Sexp>> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.peek().is_none() {
                return Ok(out);
            }
            out.push(self.parse_one()?);
        }
    }

    fn parse_one(&mut self) -> Result<Sexp> {
        self.skip_ws();
        let (line, col) = (self.line, self.col);
        match self.peek() {
            None => Err(perr((line, col), "unexpected end of input")),
            Some(b'(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return Err(perr((line, col), "unclosed '('")),
                        Some(b')') => {
                            self.bump();
                            return Ok(Sexp::List(items, line, col));
                        }
                        _ => items.push(self.parse_one()?),
                    }
                }
            }
            Some(b')') => Err(perr((line, col), "unexpected ')'")),
            Some(_) => {
                let mut s = String::new();
                while let Some(b) = self.peek() {
                    if b.is_ascii_whitespace() || b == b'(' || b == b')' || b == b';' {
                        break;
                    }
                    s.push(self.bump().unwrap() as char);
                }
                Ok(Sexp::Atom(s, line, col))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Problem parsing
// ---------------------------------------------------------------------------

struct ProblemBuilder {
    prime: Option<u64>,
    decls: Vec<(String, Sort)>,
    by_name: BTreeMap<String, Sort>,
    hyps: Vec<Formula>,
    goals: Vec<Formula>,
}

/// Parse and sort-check a problem.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let items = Lexer::new(text).parse_all()?;
    let mut b = ProblemBuilder {
        prime: None,
        decls: Vec::new(),
        by_name: BTreeMap::new(),
        hyps: Vec::new(),
        goals: Vec::new(),
    };
    // First pass: field order, so declarations can reference it.
    for item in &items {
        if let Sexp::List(xs, ..) = item {
            if matches!(xs.first(), Some(Sexp::Atom(a, ..)) if a == "set-field") {
                if b.prime.is_some() {
                    return Err(perr(item.pos(), "duplicate set-field"));
                }
                let p = atom_number(xs.get(1), item.pos())? as u64;
                if !is_prime(p) {
                    return Err(Error::NonPrimeField(p));
                }
                b.prime = Some(p);
            }
        }
    }
    let prime = b
        .prime
        .ok_or_else(|| perr((1, 1), "missing (set-field p)"))?;

    for item in &items {
        let Sexp::List(xs, ..) = item else {
            return Err(perr(item.pos(), "expected a list"));
        };
        let Some(Sexp::Atom(head, ..)) = xs.first() else {
            return Err(perr(item.pos(), "expected a command"));
        };
        match head.as_str() {
            "set-field" => {}
            "declare-ff" => declare(&mut b, xs, Sort::Ff(prime), item.pos())?,
            "declare-nat" => declare(&mut b, xs, Sort::Nat, item.pos())?,
            "declare-bv" => {
                let n = atom_number(xs.get(2), item.pos())?;
                if n == 0 || n > 64 {
                    return Err(perr(item.pos(), "bitvector width must be in 1..=64"));
                }
                declare(&mut b, &xs[..2], Sort::Bv(n as u32), item.pos())?;
            }
            "assert-hyp" | "goal" => {
                let body = xs
                    .get(1)
                    .ok_or_else(|| perr(item.pos(), format!("{head} needs a formula")))?;
                if xs.len() > 2 {
                    return Err(perr(item.pos(), format!("{head} takes one formula")));
                }
                let f = parse_formula(body, &b.by_name, prime)?;
                sort_check_formula(&f)?;
                if head == "goal" {
                    b.goals.push(f);
                } else {
                    b.hyps.push(f);
                }
            }
            other => return Err(perr(item.pos(), format!("unknown command {other}"))),
        }
    }

    Ok(Problem {
        prime,
        decls: b.decls,
        hyps: b.hyps,
        goals: b.goals,
    })
}

fn declare(b: &mut ProblemBuilder, xs: &[Sexp], sort: Sort, pos: (usize, usize)) -> Result<()> {
    let Some(Sexp::Atom(name, ..)) = xs.get(1) else {
        return Err(perr(pos, "expected a variable name"));
    };
    if name.starts_with(PLACEHOLDER_PREFIX) || name.chars().next().is_some_and(|c| c.is_ascii_digit())
    {
        return Err(perr(pos, format!("invalid variable name {name}")));
    }
    if b.by_name.contains_key(name) {
        return Err(perr(pos, format!("duplicate declaration of {name}")));
    }
    b.by_name.insert(name.clone(), sort);
    b.decls.push((name.clone(), sort));
    Ok(())
}

fn atom_number(s: Option<&Sexp>, pos: (usize, usize)) -> Result<u128> {
    match s {
        Some(Sexp::Atom(a, l, c)) => a
            .parse::<u128>()
            .map_err(|_| perr((*l, *c), format!("expected a number, got {a}"))),
        _ => Err(perr(pos, "expected a number")),
    }
}

fn parse_formula(s: &Sexp, vars: &BTreeMap<String, Sort>, prime: u64) -> Result<Formula> {
    match s {
        Sexp::Atom(a, ..) if a == "true" => Ok(Formula::bool(true)),
        Sexp::Atom(a, ..) if a == "false" => Ok(Formula::bool(false)),
        Sexp::Atom(..) => Err(perr(s.pos(), "expected a formula")),
        Sexp::List(xs, ..) => {
            let Some(Sexp::Atom(head, ..)) = xs.first() else {
                return Err(perr(s.pos(), "expected a formula head"));
            };
            match head.as_str() {
                "=" | "<=" | ">=" => {
                    if xs.len() != 3 {
                        return Err(perr(s.pos(), format!("{head} takes two operands")));
                    }
                    let (a, b) = parse_pair(&xs[1], &xs[2], vars, prime)?;
                    Ok(match head.as_str() {
                        "=" => Formula::eq(a, b),
                        "<=" => Formula::leq(a, b),
                        _ => Formula::geq(a, b),
                    })
                }
                "and" => {
                    let fs = xs[1..]
                        .iter()
                        .map(|x| parse_formula(x, vars, prime))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Formula::conj(fs))
                }
                other => Err(perr(s.pos(), format!("unknown formula head {other}"))),
            }
        }
    }
}

/// Parse two terms that must share a sort, inferring literal sorts from the
/// determinable side.
fn parse_pair(
    a: &Sexp,
    b: &Sexp,
    vars: &BTreeMap<String, Sort>,
    prime: u64,
) -> Result<(Term, Term)> {
    match parse_term(a, vars, prime, None) {
        Ok(ta) => {
            let tb = parse_term(b, vars, prime, Some(ta.sort()))?;
            Ok((ta, tb))
        }
        Err(Error::Parse { .. }) => {
            // Left side needs context (all literals); seed from the right,
            // and when both sides are literal-only default to Nat.
            match parse_term(b, vars, prime, None) {
                Ok(tb) => {
                    let ta = parse_term(a, vars, prime, Some(tb.sort()))?;
                    Ok((ta, tb))
                }
                Err(Error::Parse { .. }) => {
                    let ta = parse_term(a, vars, prime, Some(Sort::Nat))?;
                    let tb = parse_term(b, vars, prime, Some(Sort::Nat))?;
                    Ok((ta, tb))
                }
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

fn parse_term(
    s: &Sexp,
    vars: &BTreeMap<String, Sort>,
    prime: u64,
    expected: Option<Sort>,
) -> Result<Term> {
    match s {
        Sexp::Atom(a, ..) => {
            if let Ok(v) = a.parse::<u128>() {
                return match expected {
                    Some(Sort::Ff(p)) => {
                        if v >= p as u128 {
                            Ok(Term::ff_const(v % p as u128, p))
                        } else {
                            Ok(Term::ff_const(v, p))
                        }
                    }
                    Some(Sort::Bv(n)) => {
                        if n < 128 && v >= (1 << n) {
                            Err(perr(s.pos(), format!("constant {v} exceeds BV({n})")))
                        } else {
                            Ok(Term::bv_const(v, n))
                        }
                    }
                    Some(Sort::Nat) => Ok(Term::nat_const(v)),
                    Some(Sort::Bool) => Err(perr(s.pos(), "boolean literal expected")),
                    // Standalone numerals default to Nat; callers needing a
                    // sorted literal pass `expected`.
                    None => Err(perr(s.pos(), "numeral sort undetermined here")),
                };
            }
            match vars.get(a) {
                Some(sort) => {
                    if let Some(e) = expected {
                        if e != *sort {
                            return Err(Error::SortMismatch {
                                path: a.clone(),
                                msg: format!("expected {e}, variable has {sort}"),
                            });
                        }
                    }
                    Ok(Term::var(a.clone(), *sort))
                }
                None => Err(perr(s.pos(), format!("undeclared variable {a}"))),
            }
        }
        Sexp::List(xs, ..) => {
            let Some(Sexp::Atom(head, ..)) = xs.first() else {
                return Err(perr(s.pos(), "expected an operator"));
            };
            let args = &xs[1..];
            match head.as_str() {
                "+" | "*" => {
                    if args.len() < 2 {
                        return Err(perr(s.pos(), format!("{head} needs >= 2 operands")));
                    }
                    let sort = infer_chain_sort(args, vars, prime, expected)?;
                    let mut terms = args
                        .iter()
                        .map(|x| parse_term(x, vars, prime, Some(sort)))
                        .collect::<Result<Vec<_>>>()?;
                    let mut acc = terms.remove(0);
                    for t in terms {
                        acc = if head == "+" {
                            Term::add(acc, t)
                        } else {
                            Term::mul(acc, t)
                        };
                    }
                    Ok(acc)
                }
                "-" | "mod" => {
                    if args.len() != 2 {
                        return Err(perr(s.pos(), format!("{head} takes two operands")));
                    }
                    let sort = infer_chain_sort(args, vars, prime, expected)?;
                    let a = parse_term(&args[0], vars, prime, Some(sort))?;
                    let b = parse_term(&args[1], vars, prime, Some(sort))?;
                    if head == "-" {
                        Ok(Term::sub(a, b))
                    } else {
                        if sort.is_ff() {
                            return Err(Error::SortMismatch {
                                path: "mod".into(),
                                msg: "mod is implicit in field arithmetic".into(),
                            });
                        }
                        Ok(Term::modulo(a, b))
                    }
                }
                "ite" => {
                    if args.len() != 3 {
                        return Err(perr(s.pos(), "ite takes condition and two branches"));
                    }
                    let cond = parse_formula(&args[0], vars, prime)?;
                    let sort = infer_chain_sort(&args[1..], vars, prime, expected)?;
                    let t = parse_term(&args[1], vars, prime, Some(sort))?;
                    let e = parse_term(&args[2], vars, prime, Some(sort))?;
                    Ok(Term::ite(cond, t, e))
                }
                "to-nat" => {
                    if args.len() != 1 {
                        return Err(perr(s.pos(), "to-nat takes one operand"));
                    }
                    let a = parse_term(&args[0], vars, prime, Some(Sort::Ff(prime)))?;
                    Ok(Term::to_nat(a))
                }
                "to-bv" => {
                    if args.len() != 2 {
                        return Err(perr(s.pos(), "to-bv takes width and operand"));
                    }
                    let n = atom_number(Some(&args[0]), s.pos())?;
                    if n == 0 || n > 64 {
                        return Err(perr(s.pos(), "to-bv width must be in 1..=64"));
                    }
                    let a = parse_term(&args[1], vars, prime, Some(Sort::Nat))?;
                    Ok(Term::to_bv(n as u32, a))
                }
                "bv-to-nat" => {
                    if args.len() != 1 {
                        return Err(perr(s.pos(), "bv-to-nat takes one operand"));
                    }
                    let a = parse_term(&args[0], vars, prime, None)?;
                    if !a.sort().is_bv() {
                        return Err(Error::SortMismatch {
                            path: "bv-to-nat".into(),
                            msg: format!("expected BV, got {}", a.sort()),
                        });
                    }
                    if let Some(e) = expected {
                        if e != Sort::Nat {
                            return Err(Error::SortMismatch {
                                path: "bv-to-nat".into(),
                                msg: format!("expected {e}, got Nat"),
                            });
                        }
                    }
                    Ok(Term::bv_to_nat(a))
                }
                other => Err(perr(s.pos(), format!("unknown operator {other}"))),
            }
        }
    }
}

/// Determine the shared sort of a chain's operands: the expected sort if
/// given, else the first operand that resolves without context. A chain of
/// bare literals stays undetermined so the caller can seed it from the
/// other side of its comparison.
fn infer_chain_sort(
    args: &[Sexp],
    vars: &BTreeMap<String, Sort>,
    prime: u64,
    expected: Option<Sort>,
) -> Result<Sort> {
    if let Some(e) = expected {
        return Ok(e);
    }
    for x in args {
        if let Ok(t) = parse_term(x, vars, prime, None) {
            return Ok(t.sort());
        }
    }
    Err(perr(
        args.first().map(Sexp::pos).unwrap_or((1, 1)),
        "numeral sort undetermined here",
    ))
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

/// Canonical text for a problem; `parse_problem . pretty_problem` is the
/// identity up to normalization.
pub fn pretty_problem(p: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(set-field {})", p.prime);
    for (n, s) in &p.decls {
        match s {
            Sort::Ff(_) => {
                let _ = writeln!(out, "(declare-ff {n})");
            }
            Sort::Nat => {
                let _ = writeln!(out, "(declare-nat {n})");
            }
            Sort::Bv(w) => {
                let _ = writeln!(out, "(declare-bv {n} {w})");
            }
            Sort::Bool => {}
        }
    }
    for h in &p.hyps {
        let _ = writeln!(out, "(assert-hyp {})", print_formula(h));
    }
    for g in &p.goals {
        let _ = writeln!(out, "(goal {})", print_formula(g));
    }
    out
}

pub fn print_formula(f: &Formula) -> String {
    match f.node() {
        FormulaNode::Bool(b) => b.to_string(),
        FormulaNode::Eq(a, b) => format!("(= {} {})", print_term(a), print_term(b)),
        FormulaNode::Leq(a, b) => format!("(<= {} {})", print_term(a), print_term(b)),
        FormulaNode::Geq(a, b) => format!("(>= {} {})", print_term(a), print_term(b)),
        FormulaNode::Conj(fs) => {
            let mut s = String::from("(and");
            for g in fs {
                s.push(' ');
                s.push_str(&print_formula(g));
            }
            s.push(')');
            s
        }
    }
}

pub fn print_term(t: &Term) -> String {
    match t.node() {
        TermNode::Const(v, _) => v.to_string(),
        TermNode::Var(n, _) => n.clone(),
        TermNode::Bin(op, a, b, _) => {
            format!("({} {} {})", op.symbol(), print_term(a), print_term(b))
        }
        TermNode::Ite(c, a, b, _) => format!(
            "(ite {} {} {})",
            print_formula(c),
            print_term(a),
            print_term(b)
        ),
        TermNode::ToNat(a) => format!("(to-nat {})", print_term(a)),
        TermNode::ToBv(n, a) => format!("(to-bv {n} {})", print_term(a)),
        TermNode::BvToNat(a) => format!("(bv-to-nat {})", print_term(a)),
    }
}

/// Round-trip normalizer used by tests: parse, normalize all formulas.
pub fn normalized(p: &Problem) -> Problem {
    Problem {
        prime: p.prime,
        decls: p.decls.clone(),
        hyps: p.hyps.iter().map(normalize).collect(),
        goals: p.goals.iter().map(normalize).collect(),
    }
}
