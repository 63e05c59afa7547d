//! Translation from the prime field to the naturals: the ten guarded
//! rewrite rules and the strategy that drives them to saturation, pushing
//! `toNat` toward variables while range analysis rules out wraparound.
//!
//! Rules are applied one rewrite at a time, leftmost-innermost within each
//! priority tier, and every firing is traced with the governing termination
//! measure.

use crate::range::{entail, Env};
use crate::term::{
    normalize_term, BinOp, Formula, FormulaNode, ProofContext, Sort, Term, TermNode,
};
use crate::trace::{ff_var_bound, to_nat_measure, Stage};
use crate::{Error, Result};

const MAX_STRATEGY_STEPS: usize = 100_000;

struct Applied {
    rule: &'static str,
    target: String,
    after: Option<String>,
    subst: Option<String>,
}

// ---------------------------------------------------------------------------
// Strategy
// ---------------------------------------------------------------------------

/// Apply the translation rules in their fixed priority order until none
/// fires. On exit no field-sorted operator remains and every `toNat` wraps
/// a bare variable.
pub fn to_nat_strategy(pc: &mut ProofContext, env: &mut Env) -> Result<()> {
    let mut steps = 0usize;
    loop {
        env.deadline.check("to-nat")?;
        steps += 1;
        if steps > MAX_STRATEGY_STEPS {
            return Err(Error::Internal("to-nat strategy exceeded step budget".into()));
        }
        let before = to_nat_measure(pc);
        let applied = next_rule(pc, env)?;
        match applied {
            None => break,
            Some(a) => {
                let after_measure = to_nat_measure(pc);
                env.tracer.record(
                    Stage::ToNat,
                    a.rule,
                    a.target,
                    a.after,
                    a.subst,
                    before,
                    after_measure,
                );
                debug_assert!(pc.sort_check_all().is_ok());
            }
        }
    }
    Ok(())
}

fn next_rule(pc: &mut ProofContext, env: &mut Env) -> Result<Option<Applied>> {
    if let Some(a) = rule_sqr_bds(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_inj_nat(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_mv_zmod_sub(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_nat(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_nat_ite(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_nat_sub(pc, env)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_nat_sub_ovrflw(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_mv_mod(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_drop_mod(pc, env)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_add_bds(pc)? {
        return Ok(Some(a));
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Spec-facing single-rule operations
// ---------------------------------------------------------------------------

/// injNat alone; true iff the context changed.
pub fn inj_nat(pc: &mut ProofContext, env: &mut Env) -> Result<bool> {
    step_one(pc, env, rule_inj_nat)
}

/// mvZModSub alone (groups additions before subtractions).
pub fn normalize_sub(pc: &mut ProofContext, env: &mut Env) -> Result<bool> {
    step_one(pc, env, rule_mv_zmod_sub)
}

/// One toNat distribution step: distNat, distNatIte, distNatSub (premise
/// checked by range analysis) or the overflow-safe fallback.
pub fn push_tonat(pc: &mut ProofContext, env: &mut Env) -> Result<bool> {
    let before = to_nat_measure(pc);
    let applied = match rule_dist_nat(pc)? {
        Some(a) => Some(a),
        None => match rule_dist_nat_ite(pc)? {
            Some(a) => Some(a),
            None => match rule_dist_nat_sub(pc, env)? {
                Some(a) => Some(a),
                None => rule_dist_nat_sub_ovrflw(pc)?,
            },
        },
    };
    finish_step(pc, env, before, applied)
}

/// One mod simplification step: factoring (mvMod) or removal (dropMod).
pub fn mod_simplify(pc: &mut ProofContext, env: &mut Env) -> Result<bool> {
    let before = to_nat_measure(pc);
    let applied = match rule_mv_mod(pc)? {
        Some(a) => Some(a),
        None => rule_drop_mod(pc, env)?,
    };
    finish_step(pc, env, before, applied)
}

/// One bound-introduction step: sqrBds or addBds.
pub fn add_bounds(pc: &mut ProofContext, env: &mut Env) -> Result<bool> {
    let before = to_nat_measure(pc);
    let applied = match rule_sqr_bds(pc)? {
        Some(a) => Some(a),
        None => rule_add_bds(pc)?,
    };
    finish_step(pc, env, before, applied)
}

fn step_one(
    pc: &mut ProofContext,
    env: &mut Env,
    rule: impl Fn(&mut ProofContext) -> Result<Option<Applied>>,
) -> Result<bool> {
    let before = to_nat_measure(pc);
    let applied = rule(pc)?;
    finish_step(pc, env, before, applied)
}

fn finish_step(
    pc: &mut ProofContext,
    env: &mut Env,
    before: Vec<u64>,
    applied: Option<Applied>,
) -> Result<bool> {
    match applied {
        None => Ok(false),
        Some(a) => {
            let after_measure = to_nat_measure(pc);
            env.tracer.record(
                Stage::ToNat,
                a.rule,
                a.target,
                a.after,
                a.subst,
                before,
                after_measure,
            );
            Ok(true)
        }
    }
}

// ---------------------------------------------------------------------------
// Term search helpers (leftmost-innermost over goals then hypotheses)
// ---------------------------------------------------------------------------

fn find_term_post(t: &Term, pred: &impl Fn(&Term) -> bool) -> Option<Term> {
    match t.node() {
        TermNode::Const(..) | TermNode::Var(..) => {}
        TermNode::Bin(_, a, b, _) => {
            if let Some(x) = find_term_post(a, pred) {
                return Some(x);
            }
            if let Some(x) = find_term_post(b, pred) {
                return Some(x);
            }
        }
        TermNode::Ite(c, a, b, _) => {
            if let Some(x) = find_in_formula(c, pred) {
                return Some(x);
            }
            if let Some(x) = find_term_post(a, pred) {
                return Some(x);
            }
            if let Some(x) = find_term_post(b, pred) {
                return Some(x);
            }
        }
        TermNode::ToNat(a) | TermNode::ToBv(_, a) | TermNode::BvToNat(a) => {
            if let Some(x) = find_term_post(a, pred) {
                return Some(x);
            }
        }
    }
    if pred(t) {
        Some(t.clone())
    } else {
        None
    }
}

fn find_in_formula(f: &Formula, pred: &impl Fn(&Term) -> bool) -> Option<Term> {
    match f.node() {
        FormulaNode::Bool(_) => None,
        FormulaNode::Eq(a, b) | FormulaNode::Leq(a, b) | FormulaNode::Geq(a, b) => {
            find_term_post(a, pred).or_else(|| find_term_post(b, pred))
        }
        FormulaNode::Conj(fs) => fs.iter().find_map(|g| find_in_formula(g, pred)),
    }
}

pub(crate) fn find_in_context(pc: &ProofContext, pred: impl Fn(&Term) -> bool) -> Option<Term> {
    pc.formulas().find_map(|f| find_in_formula(f, &pred))
}

fn find_all_in_context(pc: &ProofContext, pred: impl Fn(&Term) -> bool) -> Vec<Term> {
    let mut out = Vec::new();
    for f in pc.formulas() {
        f.visit_terms(&mut |t| {
            if pred(t) && !out.contains(t) {
                out.push(t.clone());
            }
        });
    }
    out
}

// ---------------------------------------------------------------------------
// The rules
// ---------------------------------------------------------------------------

/// sqrBds: a squaring equation t*t = t detects a bit encoding and becomes
/// the bound toNat(t) <= 1.
fn rule_sqr_bds(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = pc.formulas().find_map(|f| {
        let FormulaNode::Eq(a, b) = f.node() else {
            return None;
        };
        if !a.sort().is_ff() {
            return None;
        }
        let square_of = |t: &Term, sq: &Term| {
            matches!(sq.node(), TermNode::Bin(BinOp::Mul, x, y, _) if x == t && y == t)
        };
        if square_of(a, b) {
            Some((f.clone(), a.clone()))
        } else if square_of(b, a) {
            Some((f.clone(), b.clone()))
        } else {
            None
        }
    });
    let Some((old, t)) = hit else {
        return Ok(None);
    };
    let new = Formula::leq(Term::to_nat(t), Term::nat_const(1));
    let in_goals = pc.goals.contains(&old);
    if in_goals {
        pc.replace_goal(&old, new.clone());
    } else {
        pc.replace_hyp(&old, new.clone());
    }
    Ok(Some(Applied {
        rule: "sqrBds",
        target: old.to_string(),
        after: Some(new.to_string()),
        subst: None,
    }))
}

/// injNat: a field equality becomes an equality of representatives. Also
/// fires on equalities nested inside ite conditions, which Fig-style
/// top-level matching would miss.
fn rule_inj_nat(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = pc.formulas().find_map(find_ff_eq);
    let Some(old) = hit else {
        return Ok(None);
    };
    let (a, b) = match old.node() {
        FormulaNode::Eq(a, b) => (a.clone(), b.clone()),
        _ => unreachable!("find_ff_eq returns equalities"),
    };
    let new = Formula::eq(Term::to_nat(a), Term::to_nat(b));
    replace_formula_everywhere(pc, &old, &new);
    Ok(Some(Applied {
        rule: "injNat",
        target: old.to_string(),
        after: Some(new.to_string()),
        subst: None,
    }))
}

fn find_ff_eq(f: &Formula) -> Option<Formula> {
    match f.node() {
        FormulaNode::Eq(a, _) if a.sort().is_ff() => return Some(f.clone()),
        FormulaNode::Conj(fs) => {
            if let Some(x) = fs.iter().find_map(find_ff_eq) {
                return Some(x);
            }
        }
        _ => {}
    }
    // Search ite conditions.
    let mut found = None;
    f.visit_terms(&mut |t| {
        if found.is_none() {
            if let TermNode::Ite(c, _, _, _) = t.node() {
                if let Some(x) = find_ff_eq(c) {
                    found = Some(x);
                }
            }
        }
    });
    found
}

/// Replace a formula wherever it occurs: as a goal, a hypothesis, or an ite
/// condition inside either.
fn replace_formula_everywhere(pc: &mut ProofContext, old: &Formula, new: &Formula) {
    let goals = std::mem::take(&mut pc.goals);
    let hyps = std::mem::take(&mut pc.hyps);
    for g in goals {
        pc.push_goal(replace_subformula(&g, old, new));
    }
    for h in hyps {
        pc.push_hyp(replace_subformula(&h, old, new));
    }
}

fn replace_subformula(f: &Formula, old: &Formula, new: &Formula) -> Formula {
    if f == old {
        return new.clone();
    }
    match f.node() {
        FormulaNode::Bool(_) => f.clone(),
        FormulaNode::Eq(a, b) => Formula::eq(
            replace_in_term(a, old, new),
            replace_in_term(b, old, new),
        ),
        FormulaNode::Leq(a, b) => Formula::leq(
            replace_in_term(a, old, new),
            replace_in_term(b, old, new),
        ),
        FormulaNode::Geq(a, b) => Formula::geq(
            replace_in_term(a, old, new),
            replace_in_term(b, old, new),
        ),
        FormulaNode::Conj(fs) => {
            Formula::conj(fs.iter().map(|g| replace_subformula(g, old, new)).collect())
        }
    }
}

fn replace_in_term(t: &Term, old: &Formula, new: &Formula) -> Term {
    match t.node() {
        TermNode::Const(..) | TermNode::Var(..) => t.clone(),
        TermNode::Bin(op, a, b, s) => Term::bin(
            *op,
            replace_in_term(a, old, new),
            replace_in_term(b, old, new),
            *s,
        ),
        TermNode::Ite(c, a, b, _) => Term::ite(
            replace_subformula(c, old, new),
            replace_in_term(a, old, new),
            replace_in_term(b, old, new),
        ),
        TermNode::ToNat(a) => Term::to_nat(replace_in_term(a, old, new)),
        TermNode::ToBv(n, a) => Term::to_bv(*n, replace_in_term(a, old, new)),
        TermNode::BvToNat(a) => Term::bv_to_nat(replace_in_term(a, old, new)),
    }
}

/// mvZModSub: t1 - t2 + t3 at field sort regroups to (t1 + t3) - t2, pulling
/// one subtraction out of one sum per firing.
fn rule_mv_zmod_sub(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = find_in_context(pc, |t| {
        if !t.sort().is_ff() {
            return false;
        }
        matches!(t.node(), TermNode::Bin(BinOp::Add, a, b, _)
            if is_ff_sub(b) || is_ff_sub(a))
    });
    let Some(old) = hit else {
        return Ok(None);
    };
    let TermNode::Bin(BinOp::Add, a, b, sort) = old.node() else {
        unreachable!();
    };
    // Prefer the right operand (normalization sorts subtractions last).
    let (sub, other) = if is_ff_sub(b) { (b, a) } else { (a, b) };
    let TermNode::Bin(BinOp::Sub, t1, t2, _) = sub.node() else {
        unreachable!();
    };
    let regrouped = Term::bin(
        BinOp::Sub,
        normalize_term(&Term::add(other.clone(), t1.clone())),
        t2.clone(),
        *sort,
    );
    pc.rewrite_everywhere(&old, &regrouped)?;
    Ok(Some(Applied {
        rule: "mvZModSub",
        target: old.to_string(),
        after: Some(regrouped.to_string()),
        subst: None,
    }))
}

fn is_ff_sub(t: &Term) -> bool {
    matches!(t.node(), TermNode::Bin(BinOp::Sub, _, _, s) if s.is_ff())
}

/// distNat: toNat distributes over field + and * with a reduction mod P.
fn rule_dist_nat(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = find_in_context(pc, |t| {
        matches!(t.node(), TermNode::ToNat(arg)
            if matches!(arg.node(), TermNode::Bin(BinOp::Add | BinOp::Mul, ..)))
    });
    let Some(old) = hit else {
        return Ok(None);
    };
    let TermNode::ToNat(arg) = old.node() else {
        unreachable!();
    };
    let TermNode::Bin(op, a, b, _) = arg.node() else {
        unreachable!();
    };
    let new = Term::modulo(
        Term::bin(*op, Term::to_nat(a.clone()), Term::to_nat(b.clone()), Sort::Nat),
        Term::nat_const(pc.prime as u128),
    );
    pc.rewrite_everywhere(&old, &new)?;
    Ok(Some(Applied {
        rule: "distNat",
        target: old.to_string(),
        after: Some(new.to_string()),
        subst: None,
    }))
}

/// distNatIte: toNat distributes structurally over ite.
fn rule_dist_nat_ite(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = find_in_context(pc, |t| {
        matches!(t.node(), TermNode::ToNat(arg) if matches!(arg.node(), TermNode::Ite(..)))
    });
    let Some(old) = hit else {
        return Ok(None);
    };
    let TermNode::ToNat(arg) = old.node() else {
        unreachable!();
    };
    let TermNode::Ite(c, a, b, _) = arg.node() else {
        unreachable!();
    };
    let new = Term::ite(c.clone(), Term::to_nat(a.clone()), Term::to_nat(b.clone()));
    pc.rewrite_everywhere(&old, &new)?;
    Ok(Some(Applied {
        rule: "distNatIte",
        target: old.to_string(),
        after: Some(new.to_string()),
        subst: None,
    }))
}

/// distNatSub: toNat distributes over subtraction without a mod when range
/// analysis proves the minuend dominates (no wraparound possible). An
/// unprovable premise silently falls through to the overflow variant.
fn rule_dist_nat_sub(pc: &mut ProofContext, env: &mut Env) -> Result<Option<Applied>> {
    let candidates = find_all_in_context(pc, |t| {
        matches!(t.node(), TermNode::ToNat(arg)
            if matches!(arg.node(), TermNode::Bin(BinOp::Sub, ..)))
    });
    let case_splits = env.current_case_splits();
    for old in candidates {
        let TermNode::ToNat(arg) = old.node() else {
            continue;
        };
        let TermNode::Bin(BinOp::Sub, t1, t2, _) = arg.node() else {
            continue;
        };
        let premise = Formula::geq(Term::to_nat(t1.clone()), Term::to_nat(t2.clone()));
        let hyps = pc.hyps.clone();
        if entail(env, &hyps, &premise, case_splits, pc.prime)? {
            let new = Term::sub(Term::to_nat(t1.clone()), Term::to_nat(t2.clone()));
            pc.rewrite_everywhere(&old, &new)?;
            return Ok(Some(Applied {
                rule: "distNatSub",
                target: old.to_string(),
                after: Some(new.to_string()),
                subst: None,
            }));
        }
    }
    Ok(None)
}

/// distNatSubOvrflw: the always-sound form, adding P before subtracting and
/// reducing mod P afterwards.
fn rule_dist_nat_sub_ovrflw(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = find_in_context(pc, |t| {
        matches!(t.node(), TermNode::ToNat(arg)
            if matches!(arg.node(), TermNode::Bin(BinOp::Sub, ..)))
    });
    let Some(old) = hit else {
        return Ok(None);
    };
    let TermNode::ToNat(arg) = old.node() else {
        unreachable!();
    };
    let TermNode::Bin(BinOp::Sub, t1, t2, _) = arg.node() else {
        unreachable!();
    };
    let p = Term::nat_const(pc.prime as u128);
    let new = Term::modulo(
        Term::sub(
            Term::add(Term::to_nat(t1.clone()), p.clone()),
            Term::to_nat(t2.clone()),
        ),
        p,
    );
    pc.rewrite_everywhere(&old, &new)?;
    Ok(Some(Applied {
        rule: "distNatSubOvrflw",
        target: old.to_string(),
        after: Some(new.to_string()),
        subst: None,
    }))
}

/// mvMod: factor nested reductions out of a sum or product under the same
/// modulus: ((a mod m) op (b mod m)) mod m -> (a op b) mod m, including the
/// one-sided variants (a ring identity either way).
fn rule_mv_mod(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = find_in_context(pc, |t| {
        let TermNode::Bin(BinOp::Mod, body, m, s) = t.node() else {
            return false;
        };
        if !s.is_nat() {
            return false;
        }
        let TermNode::Bin(op @ (BinOp::Add | BinOp::Mul), ..) = body.node() else {
            return false;
        };
        chain_operands(body, *op)
            .iter()
            .any(|o| is_mod_by(o, m))
    });
    let Some(old) = hit else {
        return Ok(None);
    };
    let TermNode::Bin(BinOp::Mod, body, m, _) = old.node() else {
        unreachable!();
    };
    let TermNode::Bin(op, ..) = body.node() else {
        unreachable!();
    };
    let op = *op;
    let stripped: Vec<Term> = chain_operands(body, op)
        .into_iter()
        .map(|o| match o.node() {
            TermNode::Bin(BinOp::Mod, inner, m2, _) if m2 == m => inner.clone(),
            _ => o,
        })
        .collect();
    let mut it = stripped.into_iter();
    let first = it.next().expect("non-empty chain");
    let body2 = it.fold(first, |acc, x| Term::bin(op, acc, x, Sort::Nat));
    let new = Term::modulo(normalize_term(&body2), m.clone());
    pc.rewrite_everywhere(&old, &new)?;
    Ok(Some(Applied {
        rule: "mvMod",
        target: old.to_string(),
        after: Some(new.to_string()),
        subst: None,
    }))
}

fn chain_operands(t: &Term, op: BinOp) -> Vec<Term> {
    match t.node() {
        TermNode::Bin(o, a, b, _) if *o == op => {
            let mut v = chain_operands(a, op);
            v.extend(chain_operands(b, op));
            v
        }
        _ => vec![t.clone()],
    }
}

fn is_mod_by(t: &Term, m: &Term) -> bool {
    matches!(t.node(), TermNode::Bin(BinOp::Mod, _, m2, _) if m2 == m)
}

/// dropMod: remove a reduction by a constant once range analysis proves the
/// body already fits below it.
fn rule_drop_mod(pc: &mut ProofContext, env: &mut Env) -> Result<Option<Applied>> {
    let candidates = find_all_in_context(pc, |t| {
        matches!(t.node(), TermNode::Bin(BinOp::Mod, _, m, s)
            if s.is_nat() && matches!(m.as_const(), Some(c) if c >= 1))
    });
    let case_splits = env.current_case_splits();
    for old in candidates {
        let TermNode::Bin(BinOp::Mod, body, m, _) = old.node() else {
            continue;
        };
        let c = m.as_const().expect("constant modulus");
        let premise = Formula::leq(body.clone(), Term::nat_const(c - 1));
        let hyps = pc.hyps.clone();
        if entail(env, &hyps, &premise, case_splits, pc.prime)? {
            pc.rewrite_everywhere(&old, body)?;
            return Ok(Some(Applied {
                rule: "dropMod",
                target: old.to_string(),
                after: Some(body.to_string()),
                subst: None,
            }));
        }
    }
    Ok(None)
}

/// addBds: every field variable in the context gets the universal bound
/// toNat(v) <= P-1 unless a bound in [0, P-1] is already present.
fn rule_add_bds(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let vars = find_all_in_context(pc, |t| matches!(t.node(), TermNode::Var(_, s) if s.is_ff()));
    for v in vars {
        let (name, _) = v.as_var().expect("variable");
        if ff_var_bound(pc, name).is_none() {
            let bound = Formula::leq(
                Term::to_nat(v.clone()),
                Term::nat_const((pc.prime - 1) as u128),
            );
            pc.push_hyp(bound.clone());
            return Ok(Some(Applied {
                rule: "addBds",
                target: v.to_string(),
                after: Some(bound.to_string()),
                subst: None,
            }));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Post-strategy invariant
// ---------------------------------------------------------------------------

/// After to_N: no field-sorted node survives except variables directly under
/// toNat (and constants have been folded away).
pub fn assert_pure_nat(pc: &ProofContext) -> Result<()> {
    for f in pc.formulas() {
        check_formula_pure(f)?;
    }
    Ok(())
}

fn check_formula_pure(f: &Formula) -> Result<()> {
    match f.node() {
        FormulaNode::Bool(_) => Ok(()),
        FormulaNode::Eq(a, b) | FormulaNode::Leq(a, b) | FormulaNode::Geq(a, b) => {
            if a.sort().is_ff() || b.sort().is_ff() {
                return Err(Error::Internal(format!("field-sorted formula survives: {f}")));
            }
            check_term_pure(a)?;
            check_term_pure(b)
        }
        FormulaNode::Conj(fs) => {
            for g in fs {
                check_formula_pure(g)?;
            }
            Ok(())
        }
    }
}

fn check_term_pure(t: &Term) -> Result<()> {
    match t.node() {
        TermNode::ToNat(arg) => {
            if matches!(arg.node(), TermNode::Var(..)) {
                Ok(())
            } else {
                Err(Error::Internal(format!("toNat over a compound survives: {t}")))
            }
        }
        TermNode::Const(_, s) | TermNode::Var(_, s) => {
            if s.is_ff() {
                Err(Error::Internal(format!("bare field term survives: {t}")))
            } else {
                Ok(())
            }
        }
        TermNode::Bin(_, a, b, s) => {
            if s.is_ff() {
                return Err(Error::Internal(format!("field operator survives: {t}")));
            }
            check_term_pure(a)?;
            check_term_pure(b)
        }
        TermNode::Ite(c, a, b, s) => {
            if s.is_ff() {
                return Err(Error::Internal(format!("field ite survives: {t}")));
            }
            check_formula_pure(c)?;
            check_term_pure(a)?;
            check_term_pure(b)
        }
        TermNode::ToBv(_, a) | TermNode::BvToNat(a) => check_term_pure(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::range::EntailmentEngine;
    use crate::term::{normalize, substitute};
    use crate::trace::Tracer;
    use crate::Deadline;

    fn ff(p: u64) -> Sort {
        Sort::Ff(p)
    }

    fn with_env<T>(
        case_splits: bool,
        f: impl FnOnce(&mut Env) -> Result<T>,
    ) -> (T, Tracer) {
        let mut tracer = Tracer::new();
        let deadline = Deadline::unlimited();
        let mut engine = EntailmentEngine::new();
        let out = {
            let mut env = Env::new(&mut tracer, &deadline, &mut engine, case_splits);
            f(&mut env).expect("rule application")
        };
        (out, tracer)
    }

    fn bit_ctx(p: u64) -> ProofContext {
        let mut pc = ProofContext::new(p);
        pc.push_hyp(Formula::leq(
            Term::to_nat(Term::var("x0", ff(p))),
            Term::nat_const(1),
        ));
        pc.push_hyp(Formula::leq(
            Term::to_nat(Term::var("y0", ff(p))),
            Term::nat_const(1),
        ));
        pc
    }

    #[test]
    fn inj_nat_rewrites_equalities() {
        let p = 7;
        let mut pc = ProofContext::new(p);
        pc.push_goal(Formula::eq(Term::var("x", ff(p)), Term::var("y", ff(p))));
        let (changed, _) = with_env(true, |env| inj_nat(&mut pc, env));
        assert!(changed);
        assert_eq!(
            pc.goals[0],
            normalize(&Formula::eq(
                Term::to_nat(Term::var("x", ff(p))),
                Term::to_nat(Term::var("y", ff(p))),
            ))
        );
        // No field equality left: second application is a no-op.
        let (changed2, _) = with_env(true, |env| inj_nat(&mut pc, env));
        assert!(!changed2);
    }

    #[test]
    fn mv_zmod_sub_regroups() {
        let p = 7;
        let (x, y, z) = (
            Term::var("x", ff(p)),
            Term::var("y", ff(p)),
            Term::var("z", ff(p)),
        );
        let mut pc = ProofContext::new(p);
        pc.push_goal(Formula::eq(
            Term::add(Term::sub(x.clone(), y.clone()), z.clone()),
            Term::ff_const(0, p),
        ));
        let (changed, _) = with_env(true, |env| normalize_sub(&mut pc, env));
        assert!(changed);
        let expected = normalize(&Formula::eq(
            Term::sub(Term::add(x.clone(), z.clone()), y.clone()),
            Term::ff_const(0, p),
        ));
        assert_eq!(pc.goals[0], expected);

        // x + y (no subtraction) stays put.
        let mut pc2 = ProofContext::new(p);
        pc2.push_goal(Formula::eq(Term::add(x, y), Term::ff_const(0, p)));
        let (changed2, _) = with_env(true, |env| normalize_sub(&mut pc2, env));
        assert!(!changed2);
    }

    #[test]
    fn mv_zmod_sub_saturates() {
        // a - b + c + d saturates to ((a + c) + d) - b, and the rewrite is
        // value-preserving on every assignment over FF(7).
        let p = 7;
        let (a, b, c, d) = (
            Term::var("a", ff(p)),
            Term::var("b", ff(p)),
            Term::var("c", ff(p)),
            Term::var("d", ff(p)),
        );
        let original = Term::add(
            Term::add(Term::add(Term::sub(a.clone(), b.clone()), c.clone()), d.clone()),
            Term::ff_const(0, p),
        );
        // Use the bare chain without the trailing zero for the shape check.
        let chain = Term::add(Term::add(Term::sub(a.clone(), b.clone()), c.clone()), d.clone());
        let mut pc = ProofContext::new(p);
        pc.push_goal(Formula::eq(chain.clone(), Term::ff_const(0, p)));
        loop {
            let (changed, _) = with_env(true, |env| normalize_sub(&mut pc, env));
            if !changed {
                break;
            }
        }
        let expected = normalize(&Formula::eq(
            Term::sub(
                Term::add(Term::add(a.clone(), c.clone()), d.clone()),
                b.clone(),
            ),
            Term::ff_const(0, p),
        ));
        assert_eq!(pc.goals[0], expected);

        // Oracle equivalence of the regrouped form.
        let lhs_old = normalize(&Formula::eq(chain, Term::ff_const(0, p)));
        let got = &pc.goals[0];
        for va in 0..p as u128 {
            for vb in 0..p as u128 {
                for vc in 0..p as u128 {
                    for vd in 0..p as u128 {
                        let assign: oracle::Assignment = [
                            ("a".to_string(), va),
                            ("b".to_string(), vb),
                            ("c".to_string(), vc),
                            ("d".to_string(), vd),
                        ]
                        .into_iter()
                        .collect();
                        assert_eq!(
                            oracle::eval_formula(&lhs_old, &assign).unwrap(),
                            oracle::eval_formula(got, &assign).unwrap(),
                        );
                    }
                }
            }
        }
        let _ = original;
    }

    #[test]
    fn push_tonat_prefers_exact_subtraction() {
        // With bit bounds the minuend provably dominates: Eq. 7 shape.
        let p = 7;
        let mut pc = bit_ctx(p);
        let (x0, y0) = (Term::var("x0", ff(p)), Term::var("y0", ff(p)));
        let sum = Term::add(x0.clone(), y0.clone());
        let prod = Term::mul(x0.clone(), y0.clone());
        let poly = Term::sub(sum.clone(), prod.clone());
        pc.push_goal(Formula::leq(Term::to_nat(poly), Term::nat_const(1)));
        let (changed, tracer) = with_env(true, |env| push_tonat(&mut pc, env));
        assert!(changed);
        assert_eq!(tracer.trace.count("distNatSub"), 1);
        assert_eq!(tracer.trace.count("distNatSubOvrflw"), 0);
        let expected = normalize(&Formula::leq(
            Term::sub(Term::to_nat(sum.clone()), Term::to_nat(prod.clone())),
            Term::nat_const(1),
        ));
        assert_eq!(pc.goals[0], expected);

        // Without hypotheses the premise is genuinely false (x=5, y=4
        // refutes it), so the overflow-safe fallback fires: Eq. 8 shape.
        let mut pc2 = ProofContext::new(p);
        let poly2 = Term::sub(sum.clone(), prod.clone());
        pc2.push_goal(Formula::leq(Term::to_nat(poly2), Term::nat_const(1)));
        let (changed2, tracer2) = with_env(true, |env| push_tonat(&mut pc2, env));
        assert!(changed2);
        assert_eq!(tracer2.trace.count("distNatSubOvrflw"), 1);
        let expected2 = normalize(&Formula::leq(
            Term::modulo(
                Term::sub(
                    Term::add(Term::to_nat(sum), Term::nat_const(7)),
                    Term::to_nat(prod),
                ),
                Term::nat_const(7),
            ),
            Term::nat_const(1),
        ));
        assert_eq!(pc2.goals[0], expected2);
    }

    #[test]
    fn push_tonat_distributes_ite() {
        let p = 7;
        let mut pc = ProofContext::new(p);
        let (x, y) = (Term::var("x", ff(p)), Term::var("y", ff(p)));
        let cond = Formula::eq(Term::to_nat(x.clone()), Term::nat_const(0));
        let ite = Term::ite(cond.clone(), x.clone(), y.clone());
        pc.push_goal(Formula::leq(Term::to_nat(ite), Term::nat_const(6)));
        let (changed, tracer) = with_env(true, |env| push_tonat(&mut pc, env));
        assert!(changed);
        assert_eq!(tracer.trace.count("distNatIte"), 1);
        let expected = normalize(&Formula::leq(
            Term::ite(cond, Term::to_nat(x), Term::to_nat(y)),
            Term::nat_const(6),
        ));
        assert_eq!(pc.goals[0], expected);
    }

    #[test]
    fn mod_simplify_factors_and_drops() {
        let p = 7;
        // ((a mod 7) + (b mod 7)) mod 7 -> (a + b) mod 7
        let (a, b) = (Term::var("a", Sort::Nat), Term::var("b", Sort::Nat));
        let seven = Term::nat_const(7);
        let mut pc = ProofContext::new(p);
        pc.push_goal(Formula::leq(
            Term::modulo(
                Term::add(
                    Term::modulo(a.clone(), seven.clone()),
                    Term::modulo(b.clone(), seven.clone()),
                ),
                seven.clone(),
            ),
            Term::nat_const(6),
        ));
        let (changed, tracer) = with_env(true, |env| mod_simplify(&mut pc, env));
        assert!(changed);
        assert_eq!(tracer.trace.count("mvMod"), 1);
        let expected = normalize(&Formula::leq(
            Term::modulo(Term::add(a.clone(), b.clone()), seven.clone()),
            Term::nat_const(6),
        ));
        assert_eq!(pc.goals[0], expected);

        // (toNat(x0) + toNat(y0)) mod 7 with bit bounds drops its mod.
        let mut pc2 = bit_ctx(p);
        let sum = Term::add(
            Term::to_nat(Term::var("x0", ff(p))),
            Term::to_nat(Term::var("y0", ff(p))),
        );
        pc2.push_goal(Formula::leq(
            Term::modulo(sum.clone(), seven.clone()),
            Term::nat_const(6),
        ));
        let (dropped, tracer2) = with_env(true, |env| mod_simplify(&mut pc2, env));
        assert!(dropped);
        assert_eq!(tracer2.trace.count("dropMod"), 1);
        assert_eq!(pc2.goals[0], normalize(&Formula::leq(sum, Term::nat_const(6))));

        // Unbounded body: mod stays.
        let mut pc3 = ProofContext::new(p);
        pc3.push_goal(Formula::leq(
            Term::modulo(Term::mul(a, b), seven),
            Term::nat_const(6),
        ));
        let (kept, _) = with_env(true, |env| mod_simplify(&mut pc3, env));
        assert!(!kept);
    }

    #[test]
    fn bounds_rules() {
        let p = 7;
        // x*x = x becomes toNat(x) <= 1.
        let x = Term::var("x", ff(p));
        let mut pc = ProofContext::new(p);
        pc.push_goal(Formula::eq(Term::mul(x.clone(), x.clone()), x.clone()));
        let (changed, tracer) = with_env(true, |env| add_bounds(&mut pc, env));
        assert!(changed);
        assert_eq!(tracer.trace.count("sqrBds"), 1);
        assert_eq!(
            pc.goals[0],
            normalize(&Formula::leq(Term::to_nat(x.clone()), Term::nat_const(1)))
        );

        // An unbounded variable in a goal gains toNat(z) <= P-1.
        let z = Term::var("z", ff(p));
        let mut pc2 = ProofContext::new(p);
        pc2.push_goal(Formula::eq(z.clone(), Term::ff_const(0, p)));
        let (added, tracer2) = with_env(true, |env| add_bounds(&mut pc2, env));
        assert!(added);
        assert_eq!(tracer2.trace.count("addBds"), 1);
        assert!(pc2.hyps.contains(&normalize(&Formula::leq(
            Term::to_nat(z.clone()),
            Term::nat_const(6)
        ))));

        // A variable already bit-bounded does not fire addBds.
        let mut pc3 = bit_ctx(p);
        pc3.push_goal(Formula::eq(
            Term::var("x0", ff(p)),
            Term::var("y0", ff(p)),
        ));
        let (fired, tracer3) = with_env(true, |env| add_bounds(&mut pc3, env));
        assert!(!fired);
        assert_eq!(tracer3.trace.count("addBds"), 0);
    }

    #[test]
    fn strategy_cubes_stay_modded() {
        // x^3 over FF(7): the strategy reaches (toNat(x)^3) mod 7 — the mod
        // cannot drop because 6^3 exceeds 6.
        let p = 7;
        let x = Term::var("x", ff(p));
        let cube = Term::mul(Term::mul(x.clone(), x.clone()), x.clone());
        let mut pc = ProofContext::new(p);
        pc.push_goal(Formula::leq(Term::to_nat(cube), Term::nat_const(100)));
        let ((), _) = with_env(true, |env| to_nat_strategy(&mut pc, env));
        assert_pure_nat(&pc).unwrap();
        let tn = Term::to_nat(x);
        let expected = normalize(&Formula::leq(
            Term::modulo(
                Term::mul(Term::mul(tn.clone(), tn.clone()), tn),
                Term::nat_const(7),
            ),
            Term::nat_const(100),
        ));
        assert_eq!(pc.goals[0], expected);
    }

    #[test]
    fn strategy_leaves_only_variable_conversions_on_the_or_instance() {
        // The one-bit or context translates until toNat wraps bare
        // variables only.
        let problem = crate::bench::gen_jolt_or(1, 7).unwrap();
        let mut pc = problem.to_context();
        let ((), tracer) = with_env(true, |env| to_nat_strategy(&mut pc, env));
        assert_pure_nat(&pc).unwrap();
        let mut wrapped = std::collections::BTreeSet::new();
        for f in pc.formulas() {
            f.visit_terms(&mut |t| {
                if let TermNode::ToNat(arg) = t.node() {
                    let (name, _) = arg.as_var().expect("post-strategy toNat wraps variables");
                    wrapped.insert(name.to_string());
                }
            });
        }
        assert_eq!(
            wrapped.into_iter().collect::<Vec<_>>(),
            vec!["x0".to_string(), "y0".to_string()]
        );
        // The default derivation uses the exact subtraction rule.
        assert_eq!(tracer.trace.count("distNatSub"), 1);
        assert_eq!(tracer.trace.count("distNatSubOvrflw"), 0);
    }

    #[test]
    fn strategy_is_identity_on_pure_contexts() {
        let p = 7;
        let mut pc = ProofContext::new(p);
        let n = Term::var("n", Sort::Nat);
        pc.push_goal(Formula::leq(n.clone(), Term::nat_const(3)));
        let before = pc.goals.clone();
        let ((), tracer) = with_env(true, |env| to_nat_strategy(&mut pc, env));
        assert_eq!(pc.goals, before);
        assert!(tracer.trace.entries.is_empty());
    }

    #[test]
    fn strategy_measures_decrease() {
        let p = 7;
        let mut pc = bit_ctx(p);
        let (x0, y0) = (Term::var("x0", ff(p)), Term::var("y0", ff(p)));
        let poly = Term::sub(
            Term::add(x0.clone(), y0.clone()),
            Term::mul(x0.clone(), y0.clone()),
        );
        pc.push_goal(Formula::eq(poly.clone(), x0.clone()));
        pc.push_goal(Formula::leq(Term::to_nat(poly), Term::nat_const(1)));
        let ((), tracer) = with_env(true, |env| to_nat_strategy(&mut pc, env));
        assert_pure_nat(&pc).unwrap();
        assert!(tracer.trace.first_violation().is_none());
    }

    #[test]
    fn substitution_commutes_with_evaluation() {
        // substitute-then-evaluate equals evaluate-under-extended-assignment
        // on random small field terms.
        use rand::{Rng, SeedableRng};
        let p = 7;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = Term::var("x", ff(p));
            let y = Term::var("y", ff(p));
            let t = Term::sub(
                Term::add(x.clone(), Term::mul(y.clone(), y.clone())),
                Term::ff_const(rng.random_range(0..p) as u128, p),
            );
            let f = Formula::eq(t, Term::ff_const(0, p));
            let vx = rng.random_range(0..p) as u128;
            let vy = rng.random_range(0..p) as u128;
            let subbed = substitute(&f, &x, &Term::ff_const(vx, p)).unwrap();
            let mut a = oracle::Assignment::new();
            a.insert("y".into(), vy);
            let direct = {
                let mut full = a.clone();
                full.insert("x".into(), vx);
                oracle::eval_formula(&normalize(&f), &full).unwrap()
            };
            assert_eq!(oracle::eval_formula(&subbed, &a).unwrap(), direct);
        }
    }
}
