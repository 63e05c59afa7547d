//! Many-sorted terms and formulas shared by every calculus in the crate.
//!
//! Terms live in one of four sorts: a prime field `FF(p)`, the naturals,
//! fixed-width bitvectors `BV(N)`, and booleans (formulas). The three
//! conversion operators `toNat`, `toBV` and `bvToNat` bridge the arithmetic
//! sorts. Terms are immutable `Arc` trees with structural equality, so rule
//! engines can match and substitute without copying whole contexts.

use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Prefix reserved for placeholder variables introduced by range analysis.
/// The parser rejects it, so placeholders can never collide with user names.
pub const PLACEHOLDER_PREFIX: &str = "%w";

// ---------------------------------------------------------------------------
// Sorts
// ---------------------------------------------------------------------------

/// A term sort. `Ff(p)` requires `p` prime, `Bv(n)` requires `n >= 1`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub enum Sort {
    Nat,
    Ff(u64),
    Bv(u32),
    Bool,
}

impl Sort {
    /// Checked constructor for field sorts: `p` must be prime.
    pub fn ff(p: u64) -> Result<Sort> {
        if is_prime(p) {
            Ok(Sort::Ff(p))
        } else {
            Err(Error::NonPrimeField(p))
        }
    }

    /// Checked constructor for bitvector sorts: width must be positive.
    pub fn bv(n: u32) -> Result<Sort> {
        if n >= 1 {
            Ok(Sort::Bv(n))
        } else {
            Err(Error::Unsupported("bitvector width 0".into()))
        }
    }

    pub fn is_ff(&self) -> bool {
        matches!(self, Sort::Ff(_))
    }

    pub fn is_nat(&self) -> bool {
        matches!(self, Sort::Nat)
    }

    pub fn is_bv(&self) -> bool {
        matches!(self, Sort::Bv(_))
    }

    /// Number of values of this sort, if finite and representable.
    pub fn cardinality(&self) -> Option<u128> {
        match self {
            Sort::Ff(p) => Some(*p as u128),
            Sort::Bv(n) if *n < 128 => Some(1u128 << n),
            Sort::Bv(_) => None,
            Sort::Nat => None,
            Sort::Bool => Some(2),
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Nat => write!(f, "Nat"),
            Sort::Ff(p) => write!(f, "FF({p})"),
            Sort::Bv(n) => write!(f, "BV({n})"),
            Sort::Bool => write!(f, "Bool"),
        }
    }
}

/// Trial-division primality check. Field orders are small at desk scale.
pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p.is_multiple_of(2) {
        return p == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime strictly greater than `n`.
pub fn least_prime_above(n: u64) -> u64 {
    let mut c = n + 1;
    loop {
        if is_prime(c) {
            return c;
        }
        c += 1;
    }
}

/// Minimal width `w >= 1` with `c < 2^w`.
pub fn bits_for(c: u128) -> u32 {
    let w = 128 - c.leading_zeros();
    w.max(1)
}

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

/// Binary arithmetic operators shared by the three arithmetic sorts.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub enum BinOp {
    Add,
    Mul,
    Sub,
    Mod,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Mul => "*",
            BinOp::Sub => "-",
            BinOp::Mod => "mod",
        }
    }
}

/// A term node. The variant order defines the total term order used by
/// normalization: constants first, then variables by name, then compounds
/// by structure.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum TermNode {
    Const(u128, Sort),
    Var(String, Sort),
    /// Binary arithmetic node; the sort annotation is the operand/result sort.
    Bin(BinOp, Term, Term, Sort),
    /// `ite(cond, then, else)` with a boolean condition and same-sorted branches.
    Ite(Formula, Term, Term, Sort),
    /// FF(p) -> Nat representative.
    ToNat(Term),
    /// Nat -> BV(width), value taken mod 2^width.
    ToBv(u32, Term),
    /// BV(N) -> Nat canonical value.
    BvToNat(Term),
}

/// An immutable, structurally shared term.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(Arc<TermNode>);

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Term {
    pub fn node(&self) -> &TermNode {
        &self.0
    }

    /// Field constant, stored reduced mod p.
    pub fn ff_const(v: u128, p: u64) -> Term {
        Term(Arc::new(TermNode::Const(v % p as u128, Sort::Ff(p))))
    }

    pub fn nat_const(v: u128) -> Term {
        Term(Arc::new(TermNode::Const(v, Sort::Nat)))
    }

    /// Bitvector constant, stored reduced mod 2^n.
    pub fn bv_const(v: u128, n: u32) -> Term {
        let m = if n >= 128 { u128::MAX } else { (1u128 << n) - 1 };
        Term(Arc::new(TermNode::Const(v & m, Sort::Bv(n))))
    }

    pub fn var(name: impl Into<String>, sort: Sort) -> Term {
        Term(Arc::new(TermNode::Var(name.into(), sort)))
    }

    pub fn bin(op: BinOp, a: Term, b: Term, sort: Sort) -> Term {
        Term(Arc::new(TermNode::Bin(op, a, b, sort)))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Term, b: Term) -> Term {
        let s = a.sort();
        Term::bin(BinOp::Add, a, b, s)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Term, b: Term) -> Term {
        let s = a.sort();
        Term::bin(BinOp::Mul, a, b, s)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Term, b: Term) -> Term {
        let s = a.sort();
        Term::bin(BinOp::Sub, a, b, s)
    }

    pub fn modulo(a: Term, b: Term) -> Term {
        let s = a.sort();
        Term::bin(BinOp::Mod, a, b, s)
    }

    pub fn ite(cond: Formula, then: Term, els: Term) -> Term {
        let s = then.sort();
        Term(Arc::new(TermNode::Ite(cond, then, els, s)))
    }

    pub fn to_nat(arg: Term) -> Term {
        Term(Arc::new(TermNode::ToNat(arg)))
    }

    pub fn to_bv(width: u32, arg: Term) -> Term {
        Term(Arc::new(TermNode::ToBv(width, arg)))
    }

    pub fn bv_to_nat(arg: Term) -> Term {
        Term(Arc::new(TermNode::BvToNat(arg)))
    }

    /// The sort annotation of this node (O(1); assumes well-sortedness).
    pub fn sort(&self) -> Sort {
        match self.node() {
            TermNode::Const(_, s) | TermNode::Var(_, s) => *s,
            TermNode::Bin(_, _, _, s) | TermNode::Ite(_, _, _, s) => *s,
            TermNode::ToNat(_) => Sort::Nat,
            TermNode::ToBv(n, _) => Sort::Bv(*n),
            TermNode::BvToNat(_) => Sort::Nat,
        }
    }

    pub fn as_const(&self) -> Option<u128> {
        match self.node() {
            TermNode::Const(v, _) => Some(*v),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<(&str, Sort)> {
        match self.node() {
            TermNode::Var(n, s) => Some((n, *s)),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        let mut ground = true;
        self.visit(&mut |t| {
            if matches!(t.node(), TermNode::Var(..)) {
                ground = false;
            }
        });
        ground
    }

    /// Visit every subterm (including condition formulas' terms), outermost first.
    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match self.node() {
            TermNode::Const(..) | TermNode::Var(..) => {}
            TermNode::Bin(_, a, b, _) => {
                a.visit(f);
                b.visit(f);
            }
            TermNode::Ite(c, a, b, _) => {
                c.visit_terms(f);
                a.visit(f);
                b.visit(f);
            }
            TermNode::ToNat(a) | TermNode::ToBv(_, a) | TermNode::BvToNat(a) => a.visit(f),
        }
    }

    /// Free variables with their sorts.
    pub fn free_vars(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let TermNode::Var(n, s) = t.node() {
                out.insert((n.clone(), *s));
            }
        });
        out
    }

    pub fn contains(&self, needle: &Term) -> bool {
        let mut found = false;
        self.visit(&mut |t| {
            if t == needle {
                found = true;
            }
        });
        found
    }

    /// Replace every occurrence of `from` with `to` (no renormalization).
    fn replace(&self, from: &Term, to: &Term) -> Term {
        if self == from {
            return to.clone();
        }
        match self.node() {
            TermNode::Const(..) | TermNode::Var(..) => self.clone(),
            TermNode::Bin(op, a, b, s) => {
                Term::bin(*op, a.replace(from, to), b.replace(from, to), *s)
            }
            TermNode::Ite(c, a, b, _) => Term::ite(
                c.replace(from, to),
                a.replace(from, to),
                b.replace(from, to),
            ),
            TermNode::ToNat(a) => Term::to_nat(a.replace(from, to)),
            TermNode::ToBv(n, a) => Term::to_bv(*n, a.replace(from, to)),
            TermNode::BvToNat(a) => Term::bv_to_nat(a.replace(from, to)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            TermNode::Const(v, _) => write!(f, "{v}"),
            TermNode::Var(n, _) => write!(f, "{n}"),
            TermNode::Bin(op, a, b, _) => write!(f, "({} {a} {b})", op.symbol()),
            TermNode::Ite(c, a, b, _) => write!(f, "(ite {c} {a} {b})"),
            TermNode::ToNat(a) => write!(f, "(to-nat {a})"),
            TermNode::ToBv(n, a) => write!(f, "(to-bv {n} {a})"),
            TermNode::BvToNat(a) => write!(f, "(bv-to-nat {a})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Formulas
// ---------------------------------------------------------------------------

/// A formula node (terms of sort Bool). Comparisons are restricted to the
/// Nat and BV sorts; equality is allowed at every sort.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum FormulaNode {
    Bool(bool),
    Eq(Term, Term),
    Leq(Term, Term),
    Geq(Term, Term),
    Conj(Vec<Formula>),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Formula(Arc<FormulaNode>);

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Formula {
    pub fn node(&self) -> &FormulaNode {
        &self.0
    }

    pub fn bool(b: bool) -> Formula {
        Formula(Arc::new(FormulaNode::Bool(b)))
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        Formula(Arc::new(FormulaNode::Eq(a, b)))
    }

    pub fn leq(a: Term, b: Term) -> Formula {
        Formula(Arc::new(FormulaNode::Leq(a, b)))
    }

    pub fn geq(a: Term, b: Term) -> Formula {
        Formula(Arc::new(FormulaNode::Geq(a, b)))
    }

    pub fn conj(fs: Vec<Formula>) -> Formula {
        Formula(Arc::new(FormulaNode::Conj(fs)))
    }

    pub fn visit_terms(&self, f: &mut impl FnMut(&Term)) {
        match self.node() {
            FormulaNode::Bool(_) => {}
            FormulaNode::Eq(a, b) | FormulaNode::Leq(a, b) | FormulaNode::Geq(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            FormulaNode::Conj(fs) => {
                for g in fs {
                    g.visit_terms(f);
                }
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        self.visit_terms(&mut |t| {
            if let TermNode::Var(n, s) = t.node() {
                out.insert((n.clone(), *s));
            }
        });
        out
    }

    pub fn replace(&self, from: &Term, to: &Term) -> Formula {
        match self.node() {
            FormulaNode::Bool(_) => self.clone(),
            FormulaNode::Eq(a, b) => Formula::eq(a.replace(from, to), b.replace(from, to)),
            FormulaNode::Leq(a, b) => Formula::leq(a.replace(from, to), b.replace(from, to)),
            FormulaNode::Geq(a, b) => Formula::geq(a.replace(from, to), b.replace(from, to)),
            FormulaNode::Conj(fs) => {
                Formula::conj(fs.iter().map(|g| g.replace(from, to)).collect())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            FormulaNode::Bool(b) => write!(f, "{b}"),
            FormulaNode::Eq(a, b) => write!(f, "(= {a} {b})"),
            FormulaNode::Leq(a, b) => write!(f, "(<= {a} {b})"),
            FormulaNode::Geq(a, b) => write!(f, "(>= {a} {b})"),
            FormulaNode::Conj(fs) => {
                write!(f, "(and")?;
                for g in fs {
                    write!(f, " {g}")?;
                }
                write!(f, ")")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Sort checking
// ---------------------------------------------------------------------------

fn mismatch(path: &[String], msg: impl Into<String>) -> Error {
    Error::SortMismatch {
        path: if path.is_empty() {
            "root".into()
        } else {
            path.join(".")
        },
        msg: msg.into(),
    }
}

/// Returns the sort of `t` when well-sorted, or a `SortMismatch` identifying
/// the offending subterm by path.
pub fn sort_check(t: &Term) -> Result<Sort> {
    let mut path = Vec::new();
    sort_check_at(t, &mut path)
}

fn sort_check_at(t: &Term, path: &mut Vec<String>) -> Result<Sort> {
    match t.node() {
        TermNode::Const(v, s) => {
            match s {
                Sort::Ff(p) => {
                    if !is_prime(*p) {
                        return Err(Error::NonPrimeField(*p));
                    }
                    if *v >= *p as u128 {
                        return Err(mismatch(path, format!("FF({p}) constant {v} out of range")));
                    }
                }
                Sort::Bv(n) => {
                    if *n == 0 {
                        return Err(mismatch(path, "bitvector width 0"));
                    }
                    if *n < 128 && *v >= (1u128 << n) {
                        return Err(mismatch(path, format!("BV({n}) constant {v} out of range")));
                    }
                }
                Sort::Nat => {}
                Sort::Bool => return Err(mismatch(path, "boolean constants are formulas")),
            }
            Ok(*s)
        }
        TermNode::Var(_, s) => Ok(*s),
        TermNode::Bin(op, a, b, s) => {
            path.push(format!("{}.lhs", op.symbol()));
            let sa = sort_check_at(a, path)?;
            path.pop();
            path.push(format!("{}.rhs", op.symbol()));
            let sb = sort_check_at(b, path)?;
            path.pop();
            if sa != sb {
                return Err(mismatch(path, format!("operands {sa} vs {sb}")));
            }
            if sa != *s {
                return Err(mismatch(path, format!("annotation {s} but operands {sa}")));
            }
            if *op == BinOp::Mod && sa.is_ff() {
                return Err(mismatch(path, "mod is implicit in field arithmetic"));
            }
            if sa == Sort::Bool {
                return Err(mismatch(path, "arithmetic over Bool"));
            }
            Ok(sa)
        }
        TermNode::Ite(c, a, b, s) => {
            path.push("ite.cond".into());
            sort_check_formula_at(c, path)?;
            path.pop();
            path.push("ite.then".into());
            let sa = sort_check_at(a, path)?;
            path.pop();
            path.push("ite.else".into());
            let sb = sort_check_at(b, path)?;
            path.pop();
            if sa != sb {
                return Err(mismatch(path, format!("branches {sa} vs {sb}")));
            }
            if sa != *s {
                return Err(mismatch(path, format!("annotation {s} but branches {sa}")));
            }
            Ok(sa)
        }
        TermNode::ToNat(a) => {
            path.push("to-nat".into());
            let sa = sort_check_at(a, path)?;
            path.pop();
            if !sa.is_ff() {
                return Err(mismatch(path, format!("to-nat expects FF, got {sa}")));
            }
            Ok(Sort::Nat)
        }
        TermNode::ToBv(n, a) => {
            if *n == 0 {
                return Err(mismatch(path, "to-bv width 0"));
            }
            path.push("to-bv".into());
            let sa = sort_check_at(a, path)?;
            path.pop();
            if sa != Sort::Nat {
                return Err(mismatch(path, format!("to-bv expects Nat, got {sa}")));
            }
            Ok(Sort::Bv(*n))
        }
        TermNode::BvToNat(a) => {
            path.push("bv-to-nat".into());
            let sa = sort_check_at(a, path)?;
            path.pop();
            if !sa.is_bv() {
                return Err(mismatch(path, format!("bv-to-nat expects BV, got {sa}")));
            }
            Ok(Sort::Nat)
        }
    }
}

/// Well-sortedness for formulas: comparison operands share a Nat or BV sort,
/// equality operands share any term sort.
pub fn sort_check_formula(f: &Formula) -> Result<()> {
    let mut path = Vec::new();
    sort_check_formula_at(f, &mut path)
}

fn sort_check_formula_at(f: &Formula, path: &mut Vec<String>) -> Result<()> {
    match f.node() {
        FormulaNode::Bool(_) => Ok(()),
        FormulaNode::Eq(a, b) => {
            path.push("=.lhs".into());
            let sa = sort_check_at(a, path)?;
            path.pop();
            path.push("=.rhs".into());
            let sb = sort_check_at(b, path)?;
            path.pop();
            if sa != sb {
                return Err(mismatch(path, format!("equality over {sa} vs {sb}")));
            }
            Ok(())
        }
        FormulaNode::Leq(a, b) | FormulaNode::Geq(a, b) => {
            path.push("cmp.lhs".into());
            let sa = sort_check_at(a, path)?;
            path.pop();
            path.push("cmp.rhs".into());
            let sb = sort_check_at(b, path)?;
            path.pop();
            if sa != sb {
                return Err(mismatch(path, format!("comparison over {sa} vs {sb}")));
            }
            if !(sa.is_nat() || sa.is_bv()) {
                return Err(mismatch(path, format!("comparison at sort {sa}")));
            }
            Ok(())
        }
        FormulaNode::Conj(fs) => {
            for (i, g) in fs.iter().enumerate() {
                path.push(format!("and.{i}"));
                sort_check_formula_at(g, path)?;
                path.pop();
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Canonical form: associative chains of + and * are flattened, re-sorted
/// under the fixed term order and rebuilt left-nested; inside FF sums,
/// subtraction-rooted operands sort last (additions grouped before
/// subtractions, which is what lets mvZModSub match); `>=` is re-oriented to
/// `<=`; equality operands are ordered; conversions of constants fold to
/// constants. Arithmetic is never folded, so `1+1` stays `1+1`.
pub fn normalize(f: &Formula) -> Formula {
    match f.node() {
        FormulaNode::Bool(_) => f.clone(),
        FormulaNode::Eq(a, b) => {
            let (a, b) = (normalize_term(a), normalize_term(b));
            if b < a {
                Formula::eq(b, a)
            } else {
                Formula::eq(a, b)
            }
        }
        FormulaNode::Leq(a, b) => Formula::leq(normalize_term(a), normalize_term(b)),
        FormulaNode::Geq(a, b) => Formula::leq(normalize_term(b), normalize_term(a)),
        FormulaNode::Conj(fs) => {
            let mut flat = Vec::new();
            for g in fs {
                match normalize(g).node() {
                    FormulaNode::Conj(inner) => flat.extend(inner.iter().cloned()),
                    _ => flat.push(normalize(g)),
                }
            }
            flat.sort();
            flat.dedup();
            match flat.len() {
                0 => Formula::bool(true),
                1 => flat.pop().unwrap(),
                _ => Formula::conj(flat),
            }
        }
    }
}

pub fn normalize_term(t: &Term) -> Term {
    match t.node() {
        TermNode::Const(..) | TermNode::Var(..) => t.clone(),
        TermNode::Bin(BinOp::Add, ..) => normalize_chain(t, BinOp::Add),
        TermNode::Bin(BinOp::Mul, ..) => normalize_chain(t, BinOp::Mul),
        TermNode::Bin(op, a, b, s) => {
            Term::bin(*op, normalize_term(a), normalize_term(b), *s)
        }
        TermNode::Ite(c, a, b, _) => {
            let c = normalize(c);
            let (a, b) = (normalize_term(a), normalize_term(b));
            match c.node() {
                FormulaNode::Bool(true) => a,
                FormulaNode::Bool(false) => b,
                _ => Term::ite(c, a, b),
            }
        }
        TermNode::ToNat(a) => {
            let a = normalize_term(a);
            match a.node() {
                TermNode::Const(v, Sort::Ff(_)) => Term::nat_const(*v),
                _ => Term::to_nat(a),
            }
        }
        TermNode::ToBv(n, a) => {
            let a = normalize_term(a);
            match a.node() {
                TermNode::Const(v, Sort::Nat) => Term::bv_const(*v, *n),
                _ => Term::to_bv(*n, a),
            }
        }
        TermNode::BvToNat(a) => {
            let a = normalize_term(a);
            match a.node() {
                TermNode::Const(v, Sort::Bv(_)) => Term::nat_const(*v),
                _ => Term::bv_to_nat(a),
            }
        }
    }
}

fn collect_chain(t: &Term, op: BinOp, out: &mut Vec<Term>) {
    match t.node() {
        TermNode::Bin(o, a, b, _) if *o == op => {
            collect_chain(a, op, out);
            collect_chain(b, op, out);
        }
        _ => out.push(normalize_term(t)),
    }
}

fn normalize_chain(t: &Term, op: BinOp) -> Term {
    let sort = t.sort();
    let mut ops = Vec::new();
    collect_chain(t, op, &mut ops);
    if op == BinOp::Add && sort.is_ff() {
        // Additions before subtractions within FF sums.
        ops.sort_by_key(|o| (matches!(o.node(), TermNode::Bin(BinOp::Sub, ..)), o.clone()));
    } else {
        ops.sort();
    }
    let mut it = ops.into_iter();
    let first = it.next().expect("chain is non-empty");
    it.fold(first, |acc, x| Term::bin(op, acc, x, sort))
}

// ---------------------------------------------------------------------------
// Substitution and occurrence
// ---------------------------------------------------------------------------

/// `f[from/to]`: replaces all occurrences of `from` in `f` with `to` and
/// renormalizes. Errors if the two terms differ in sort.
pub fn substitute(f: &Formula, from: &Term, to: &Term) -> Result<Formula> {
    if from.sort() != to.sort() {
        return Err(Error::SortMismatch {
            path: "substitute".into(),
            msg: format!("{} vs {}", from.sort(), to.sort()),
        });
    }
    Ok(normalize(&f.replace(from, to)))
}

/// Term-level substitution with renormalization.
pub fn substitute_term(t: &Term, from: &Term, to: &Term) -> Result<Term> {
    if from.sort() != to.sort() {
        return Err(Error::SortMismatch {
            path: "substitute".into(),
            msg: format!("{} vs {}", from.sort(), to.sort()),
        });
    }
    Ok(normalize_term(&t.replace(from, to)))
}

/// True iff `s` occurs as a subterm of `f` (structural equality after
/// normalization; condition formulas are searched too).
pub fn subterm_occurs(f: &Formula, s: &Term) -> bool {
    let s = normalize_term(s);
    let mut found = false;
    normalize(f).visit_terms(&mut |t| {
        if *t == s {
            found = true;
        }
    });
    found
}

// ---------------------------------------------------------------------------
// Proof context
// ---------------------------------------------------------------------------

/// The object every calculus rule transforms: a goal set plus a shared
/// hypothesis set, with the bookkeeping that separates variables present
/// before range analysis from placeholder variables introduced by it.
#[derive(Clone, Debug)]
pub struct ProofContext {
    pub goals: Vec<Formula>,
    pub hyps: Vec<Formula>,
    pub original_vars: BTreeSet<String>,
    pub placeholder_vars: BTreeSet<String>,
    /// Ambient field order; every FF term in the context lives in FF(prime).
    pub prime: u64,
}

impl ProofContext {
    pub fn new(prime: u64) -> ProofContext {
        ProofContext {
            goals: Vec::new(),
            hyps: Vec::new(),
            original_vars: BTreeSet::new(),
            placeholder_vars: BTreeSet::new(),
            prime,
        }
    }

    /// Insert a goal, normalized, splitting conjunctions and dropping
    /// duplicates and trivially true members.
    pub fn push_goal(&mut self, f: Formula) {
        let f = normalize(&f);
        match f.node() {
            FormulaNode::Conj(fs) => {
                for g in fs.clone() {
                    self.push_goal(g);
                }
            }
            FormulaNode::Bool(true) => {}
            _ => {
                if !self.goals.contains(&f) {
                    self.note_vars(&f);
                    self.goals.push(f);
                }
            }
        }
    }

    pub fn push_hyp(&mut self, f: Formula) {
        let f = normalize(&f);
        match f.node() {
            FormulaNode::Conj(fs) => {
                for g in fs.clone() {
                    self.push_hyp(g);
                }
            }
            FormulaNode::Bool(true) => {}
            _ => {
                if !self.hyps.contains(&f) {
                    self.note_vars(&f);
                    self.hyps.push(f);
                }
            }
        }
    }

    fn note_vars(&mut self, f: &Formula) {
        for (v, _) in f.free_vars() {
            if !v.starts_with(PLACEHOLDER_PREFIX) {
                self.original_vars.insert(v);
            }
        }
    }

    /// All formulas, goals first then hypotheses, in insertion order.
    pub fn formulas(&self) -> impl Iterator<Item = &Formula> {
        self.goals.iter().chain(self.hyps.iter())
    }

    /// Rewrite `from` to `to` everywhere in the context (goals and
    /// hypotheses), renormalizing and deduplicating.
    pub fn rewrite_everywhere(&mut self, from: &Term, to: &Term) -> Result<()> {
        let goals = std::mem::take(&mut self.goals);
        let hyps = std::mem::take(&mut self.hyps);
        for g in goals {
            self.push_goal(substitute(&g, from, to)?);
        }
        for h in hyps {
            self.push_hyp(substitute(&h, from, to)?);
        }
        Ok(())
    }

    /// Replace one specific goal formula with another (set semantics).
    pub fn replace_goal(&mut self, old: &Formula, new: Formula) {
        self.goals.retain(|g| g != old);
        self.push_goal(new);
    }

    pub fn replace_hyp(&mut self, old: &Formula, new: Formula) {
        self.hyps.retain(|h| h != old);
        self.push_hyp(new);
    }

    /// Every formula in the context sort-checks; used as a post-rule assertion.
    pub fn sort_check_all(&self) -> Result<()> {
        for f in self.formulas() {
            sort_check_formula(f)?;
        }
        Ok(())
    }

    /// Invariants from the data model: disjoint variable partitions and
    /// every free variable accounted for.
    pub fn check_var_partition(&self) -> Result<()> {
        for f in self.formulas() {
            for (v, _) in f.free_vars() {
                let placeholder = v.starts_with(PLACEHOLDER_PREFIX);
                if placeholder && !self.placeholder_vars.contains(&v) {
                    return Err(Error::Internal(format!("untracked placeholder {v}")));
                }
                if !placeholder && !self.original_vars.contains(&v) {
                    return Err(Error::Internal(format!("untracked variable {v}")));
                }
            }
        }
        if self
            .original_vars
            .intersection(&self.placeholder_vars)
            .next()
            .is_some()
        {
            return Err(Error::Internal("variable partitions overlap".into()));
        }
        Ok(())
    }
}
