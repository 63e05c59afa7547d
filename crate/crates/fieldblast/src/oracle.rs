//! Brute-force semantics for all three sorts: the ground truth the rest of
//! the crate is tested against. Deliberately dumb — evaluation plus
//! exhaustive enumeration under a budget, no symbolic reasoning.

use std::collections::{BTreeMap, BTreeSet};

use crate::term::{BinOp, Formula, FormulaNode, Sort, Term, TermNode};
use crate::{Error, Result};

/// Default ceiling on the number of enumerated assignments (2^20).
pub const DEFAULT_BUDGET: u128 = 1 << 20;

/// A total assignment of natural values to variables, interpreted per the
/// variable's sort (FF values < p, BV(N) values < 2^N).
pub type Assignment = BTreeMap<String, u128>;

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn pow2(n: u32) -> Result<u128> {
    if n >= 128 {
        return Err(Error::Overflow);
    }
    Ok(1u128 << n)
}

/// Evaluate a term under `a`. FF operators reduce mod p, Nat subtraction is
/// truncated at zero, Nat mod by zero is the dividend, BV operators wrap
/// mod 2^N, toBV takes the value mod 2^N and bvToNat is the identity
/// embedding.
pub fn eval_term(t: &Term, a: &Assignment) -> Result<u128> {
    match t.node() {
        TermNode::Const(v, _) => Ok(*v),
        TermNode::Var(n, _) => a
            .get(n)
            .copied()
            .ok_or_else(|| Error::UnboundVariable(n.clone())),
        TermNode::Bin(op, x, y, s) => {
            let (vx, vy) = (eval_term(x, a)?, eval_term(y, a)?);
            match s {
                Sort::Ff(p) => {
                    let p = *p as u128;
                    Ok(match op {
                        BinOp::Add => (vx + vy) % p,
                        BinOp::Mul => vx.checked_mul(vy).ok_or(Error::Overflow)? % p,
                        BinOp::Sub => (vx + p - vy) % p,
                        BinOp::Mod => return Err(Error::Internal("mod at FF sort".into())),
                    })
                }
                Sort::Nat => Ok(match op {
                    BinOp::Add => vx.checked_add(vy).ok_or(Error::Overflow)?,
                    BinOp::Mul => vx.checked_mul(vy).ok_or(Error::Overflow)?,
                    BinOp::Sub => vx.saturating_sub(vy),
                    BinOp::Mod => {
                        if vy == 0 {
                            vx
                        } else {
                            vx % vy
                        }
                    }
                }),
                Sort::Bv(n) => {
                    let m = pow2(*n)?;
                    Ok(match op {
                        BinOp::Add => (vx + vy) % m,
                        BinOp::Mul => vx.checked_mul(vy).ok_or(Error::Overflow)? % m,
                        BinOp::Sub => (vx + m - vy) % m,
                        BinOp::Mod => {
                            if vy == 0 {
                                vx
                            } else {
                                vx % vy
                            }
                        }
                    })
                }
                Sort::Bool => Err(Error::Internal("arithmetic at Bool sort".into())),
            }
        }
        TermNode::Ite(c, x, y, _) => {
            if eval_formula(c, a)? {
                eval_term(x, a)
            } else {
                eval_term(y, a)
            }
        }
        TermNode::ToNat(x) => eval_term(x, a),
        TermNode::ToBv(n, x) => Ok(eval_term(x, a)? % pow2(*n)?),
        TermNode::BvToNat(x) => eval_term(x, a),
    }
}

pub fn eval_formula(f: &Formula, a: &Assignment) -> Result<bool> {
    match f.node() {
        FormulaNode::Bool(b) => Ok(*b),
        FormulaNode::Eq(x, y) => Ok(eval_term(x, a)? == eval_term(y, a)?),
        FormulaNode::Leq(x, y) => Ok(eval_term(x, a)? <= eval_term(y, a)?),
        FormulaNode::Geq(x, y) => Ok(eval_term(x, a)? >= eval_term(y, a)?),
        FormulaNode::Conj(fs) => {
            for g in fs {
                if !eval_formula(g, a)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// True iff `a` satisfies every hypothesis and falsifies some goal.
pub fn falsifies(hyps: &[Formula], goals: &[Formula], a: &Assignment) -> Result<bool> {
    for h in hyps {
        if !eval_formula(h, a)? {
            return Ok(false);
        }
    }
    for g in goals {
        if !eval_formula(g, a)? {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    /// A witness assignment satisfying the hypotheses and falsifying a goal.
    Invalid(Assignment),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

struct EnumPlan {
    /// Variables enumerated explicitly, lexicographic by name, each with its
    /// inclusive domain bound (values 0..=bound).
    enumerated: Vec<(String, u128)>,
    /// Variables defined by an acyclic hypothesis `v = t`, in evaluation order.
    defined: Vec<(String, Term)>,
}

/// Build the enumeration plan. Hypothesis bounds of shape `atom <= C` shrink
/// domains and definitional hypotheses `v = t` are evaluated instead of
/// enumerated; both reductions only skip assignments that violate H, so
/// validity and witnesses are unaffected.
fn plan(hyps: &[Formula], goals: &[Formula]) -> Result<EnumPlan> {
    let mut vars: BTreeMap<String, Sort> = BTreeMap::new();
    for f in hyps.iter().chain(goals) {
        for (v, s) in f.free_vars() {
            vars.insert(v, s);
        }
    }

    // Candidate definitions v = t with v not free in t.
    let mut defs: BTreeMap<String, Term> = BTreeMap::new();
    for h in hyps {
        if let FormulaNode::Eq(a, b) = h.node() {
            for (lhs, rhs) in [(a, b), (b, a)] {
                if let TermNode::Var(v, _) = lhs.node() {
                    if !rhs.free_vars().iter().any(|(n, _)| n == v) && !defs.contains_key(v) {
                        defs.insert(v.clone(), rhs.clone());
                        break;
                    }
                }
            }
        }
    }

    // Keep only definitions that order acyclically; the rest get enumerated.
    let mut ordered: Vec<(String, Term)> = Vec::new();
    let mut placed: BTreeSet<String> = BTreeSet::new();
    loop {
        let mut progressed = false;
        for (v, t) in &defs {
            if placed.contains(v) {
                continue;
            }
            let ready = t
                .free_vars()
                .iter()
                .all(|(n, _)| !defs.contains_key(n) || placed.contains(n));
            if ready {
                ordered.push((v.clone(), t.clone()));
                placed.insert(v.clone());
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    let mut enumerated = Vec::new();
    for (v, s) in &vars {
        if placed.contains(v) {
            continue;
        }
        let sort_bound = match s {
            Sort::Ff(p) => Some((*p - 1) as u128),
            Sort::Bv(n) => Some(pow2(*n)? - 1),
            Sort::Nat => None,
            Sort::Bool => Some(1),
        };
        let hyp_bound = tightest_atom_bound(hyps, v);
        let bound = match (sort_bound, hyp_bound) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        match bound {
            Some(b) => enumerated.push((v.clone(), b)),
            None => return Err(Error::BudgetExceeded(u128::MAX)),
        }
    }
    Ok(EnumPlan {
        enumerated,
        defined: ordered,
    })
}

/// Smallest C over hypotheses of shape `v <= C`, `toNat(v) <= C` or
/// `bvToNat(v) <= C`.
fn tightest_atom_bound(hyps: &[Formula], v: &str) -> Option<u128> {
    let mut best: Option<u128> = None;
    for h in hyps {
        if let FormulaNode::Leq(lhs, rhs) = h.node() {
            if let Some(c) = rhs.as_const() {
                let hit = match lhs.node() {
                    TermNode::Var(n, _) => n == v,
                    TermNode::ToNat(a) | TermNode::BvToNat(a) => {
                        matches!(a.node(), TermNode::Var(n, _) if n == v)
                    }
                    _ => false,
                };
                if hit {
                    best = Some(best.map_or(c, |b: u128| b.min(c)));
                }
            }
        }
    }
    best
}

fn space_size(plan: &EnumPlan) -> Result<u128> {
    let mut n: u128 = 1;
    for (_, b) in &plan.enumerated {
        let card = b.checked_add(1).ok_or(Error::Overflow)?;
        n = n.checked_mul(card).ok_or(Error::BudgetExceeded(u128::MAX))?;
    }
    Ok(n)
}

/// Enumerate every assignment (lexicographic by variable name, then value,
/// first variable most significant) and call `visit`; stops early when
/// `visit` returns false.
fn enumerate(
    plan: &EnumPlan,
    budget: u128,
    visit: &mut impl FnMut(&Assignment) -> Result<bool>,
) -> Result<()> {
    let space = space_size(plan)?;
    if space > budget {
        return Err(Error::BudgetExceeded(space));
    }
    let k = plan.enumerated.len();
    let mut vals = vec![0u128; k];
    loop {
        let mut a: Assignment = BTreeMap::new();
        for (i, (v, _)) in plan.enumerated.iter().enumerate() {
            a.insert(v.clone(), vals[i]);
        }
        let mut defs_ok = true;
        for (v, t) in &plan.defined {
            match eval_term(t, &a) {
                Ok(val) => {
                    a.insert(v.clone(), val);
                }
                Err(Error::UnboundVariable(_)) => {
                    defs_ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if defs_ok && !visit(&a)? {
            return Ok(());
        }
        // Odometer increment, least-significant digit last.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            if vals[i] < plan.enumerated[i].1 {
                vals[i] += 1;
                for v in vals.iter_mut().skip(i + 1) {
                    *v = 0;
                }
                break;
            }
        }
    }
}

/// Valid iff every assignment satisfying the hypotheses satisfies all goals;
/// otherwise returns the lexicographically first witness.
pub fn check_validity(hyps: &[Formula], goals: &[Formula], budget: u128) -> Result<Validity> {
    let plan = plan(hyps, goals)?;
    let mut witness: Option<Assignment> = None;
    enumerate(&plan, budget, &mut |a| {
        if falsifies(hyps, goals, a)? {
            witness = Some(a.clone());
            Ok(false)
        } else {
            Ok(true)
        }
    })?;
    Ok(match witness {
        Some(w) => Validity::Invalid(w),
        None => Validity::Valid,
    })
}

/// Ground-truth entailment H |= goal by enumeration.
pub fn entails(hyps: &[Formula], goal: &Formula, budget: u128) -> Result<bool> {
    Ok(check_validity(hyps, std::slice::from_ref(goal), budget)?.is_valid())
}

/// Entailment audit that tolerates large contexts: tries the full context,
/// then the transitively variable-connected slice of H (checking the
/// remainder is satisfiable so vacuous truth is not missed). Returns None
/// when everything exceeds the budget.
pub fn entails_within_slice(
    hyps: &[Formula],
    goal: &Formula,
    budget: u128,
) -> Result<Option<bool>> {
    match entails(hyps, goal, budget) {
        Ok(b) => return Ok(Some(b)),
        Err(Error::BudgetExceeded(_)) => {}
        Err(e) => return Err(e),
    }
    // Slice: hypotheses sharing variables with the goal, transitively.
    let mut reach: BTreeSet<String> = goal.free_vars().into_iter().map(|(v, _)| v).collect();
    let mut slice: Vec<Formula> = Vec::new();
    let mut rest: Vec<Formula> = hyps.to_vec();
    loop {
        let mut progressed = false;
        rest.retain(|h| {
            let vars: BTreeSet<String> = h.free_vars().into_iter().map(|(v, _)| v).collect();
            if vars.iter().any(|v| reach.contains(v)) {
                reach.extend(vars);
                slice.push(h.clone());
                progressed = true;
                false
            } else {
                true
            }
        });
        if !progressed {
            break;
        }
    }
    let sliced = match entails(&slice, goal, budget) {
        Ok(b) => b,
        Err(Error::BudgetExceeded(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    if sliced {
        return Ok(Some(true));
    }
    // The slice refutes the goal; confirm the remainder is satisfiable,
    // otherwise H is inconsistent and entails everything vacuously.
    match check_validity(&rest, &[Formula::bool(false)], budget) {
        Ok(Validity::Invalid(_)) => Ok(Some(false)), // remainder satisfiable
        Ok(Validity::Valid) => Ok(Some(true)),       // remainder unsatisfiable
        Err(Error::BudgetExceeded(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
