//! Translation from the naturals to bitvectors: the width calculator, the
//! six injection/distribution rules, and the strategy that fixes one global
//! conversion width for the whole context.

use crate::range::{entail, hyp_upper_bound, Env};
use crate::term::{
    bits_for, BinOp, Formula, FormulaNode, ProofContext, Sort, Term, TermNode,
};
use crate::trace::{nat_hyps_without_bv_image, to_bv_measure, Stage};
use crate::{Error, Result};

const MAX_STRATEGY_STEPS: usize = 100_000;
/// Widths beyond this are outside desk scale and rejected.
const MAX_WIDTH: u32 = 64;

// ---------------------------------------------------------------------------
// Width calculation
// ---------------------------------------------------------------------------

/// Overapproximate the bit width needed so the value of `t` cannot overflow
/// in any model of the hypotheses. Returns None when no finite bound is
/// derivable (an unbounded natural variable).
///
/// width(c) = bits(c); width(toNat v) = bits(P-1), tightened to bits(C) by a
/// hypothesis toNat(v) <= C; width(bvToNat t) = N; width(a+b) = max+1;
/// width(a*b) = sum; width(a-b) = width(a); width(t mod c) = width(t) (kept
/// un-tightened); width(ite) = max of the branches.
pub fn clc_bv_width(t: &Term, hyps: &[Formula], prime: u64) -> Option<u32> {
    let w = match t.node() {
        TermNode::Const(c, Sort::Nat) => bits_for(*c),
        TermNode::Const(..) => return None,
        TermNode::Var(_, Sort::Nat) => bits_for(hyp_upper_bound(hyps, t)?),
        TermNode::Var(..) => return None,
        TermNode::ToNat(_) => {
            let bound = hyp_upper_bound(hyps, t).unwrap_or((prime - 1) as u128);
            bits_for(bound.min((prime - 1) as u128))
        }
        TermNode::BvToNat(arg) => match arg.sort() {
            Sort::Bv(n) => n,
            _ => return None,
        },
        TermNode::Bin(BinOp::Add, a, b, Sort::Nat) => {
            let (wa, wb) = (
                clc_bv_width(a, hyps, prime)?,
                clc_bv_width(b, hyps, prime)?,
            );
            wa.max(wb) + 1
        }
        TermNode::Bin(BinOp::Mul, a, b, Sort::Nat) => {
            clc_bv_width(a, hyps, prime)? + clc_bv_width(b, hyps, prime)?
        }
        TermNode::Bin(BinOp::Sub, a, _, Sort::Nat) => clc_bv_width(a, hyps, prime)?,
        TermNode::Bin(BinOp::Mod, a, _, Sort::Nat) => clc_bv_width(a, hyps, prime)?,
        TermNode::Bin(..) => return None,
        TermNode::Ite(_, a, b, Sort::Nat) => {
            let (wa, wb) = (
                clc_bv_width(a, hyps, prime)?,
                clc_bv_width(b, hyps, prime)?,
            );
            wa.max(wb)
        }
        TermNode::Ite(..) => return None,
        TermNode::ToBv(..) => return None,
    };
    if w > MAX_WIDTH {
        None
    } else {
        Some(w)
    }
}

/// The single global conversion width: the maximum width over every
/// natural-sorted subterm of every formula, at least 2.
pub fn global_width(pc: &ProofContext) -> u32 {
    let mut b = 2u32;
    for f in pc.formulas() {
        f.visit_terms(&mut |t| {
            if t.sort().is_nat() {
                if let Some(w) = clc_bv_width(t, &pc.hyps, pc.prime) {
                    b = b.max(w);
                }
            }
        });
    }
    b
}

// ---------------------------------------------------------------------------
// Strategy
// ---------------------------------------------------------------------------

struct Applied {
    rule: &'static str,
    target: String,
    after: Option<String>,
}

/// Convert the context to bitvectors: compute the global width, saturate
/// injBVLeqHyp, then saturate the injection and push rules. Returns the
/// chosen width. Goal inequalities over the naturals are left alone (they
/// belong to range analysis).
pub fn to_bv_strategy(pc: &mut ProofContext, env: &mut Env) -> Result<u32> {
    let b = global_width(pc);

    let mut steps = 0usize;
    loop {
        env.deadline.check("to-bv")?;
        steps += 1;
        if steps > MAX_STRATEGY_STEPS {
            return Err(Error::Internal("to-bv strategy exceeded step budget".into()));
        }
        let before = vec![nat_hyps_without_bv_image(pc, b)];
        match rule_inj_bv_leq_hyp(pc, env, b)? {
            None => break,
            Some(a) => {
                let after_measure = vec![nat_hyps_without_bv_image(pc, b)];
                env.tracer.record(
                    Stage::ToBv,
                    a.rule,
                    a.target,
                    a.after,
                    None,
                    before,
                    after_measure,
                );
            }
        }
    }

    loop {
        env.deadline.check("to-bv")?;
        steps += 1;
        if steps > MAX_STRATEGY_STEPS {
            return Err(Error::Internal("to-bv strategy exceeded step budget".into()));
        }
        let before = to_bv_measure(pc);
        let applied = next_push_rule(pc, env, b)?;
        match applied {
            None => break,
            Some(a) => {
                let after_measure = to_bv_measure(pc);
                env.tracer.record(
                    Stage::ToBv,
                    a.rule,
                    a.target,
                    a.after,
                    None,
                    before,
                    after_measure,
                );
                debug_assert!(pc.sort_check_all().is_ok());
            }
        }
    }
    Ok(b)
}

fn next_push_rule(pc: &mut ProofContext, env: &mut Env, b: u32) -> Result<Option<Applied>> {
    if let Some(a) = rule_inj_bv(pc, env, b)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_bv(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_bv_ite(pc)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_bv_sub(pc, env, b)? {
        return Ok(Some(a));
    }
    if let Some(a) = rule_dist_bv_mod(pc, env)? {
        return Ok(Some(a));
    }
    Ok(None)
}

/// Spec-facing wrapper: one injection step (injBV or injBVLeqHyp).
pub fn inj_bv(pc: &mut ProofContext, env: &mut Env, b: u32) -> Result<bool> {
    let before = to_bv_measure(pc);
    let applied = match rule_inj_bv_leq_hyp(pc, env, b)? {
        Some(a) => Some(a),
        None => rule_inj_bv(pc, env, b)?,
    };
    record(pc, env, before, applied)
}

/// Spec-facing wrapper: one toBV distribution step.
pub fn push_to_bv(pc: &mut ProofContext, env: &mut Env, b: u32) -> Result<bool> {
    let before = to_bv_measure(pc);
    let applied = match rule_dist_bv(pc)? {
        Some(a) => Some(a),
        None => match rule_dist_bv_ite(pc)? {
            Some(a) => Some(a),
            None => match rule_dist_bv_sub(pc, env, b)? {
                Some(a) => Some(a),
                None => rule_dist_bv_mod(pc, env)?,
            },
        },
    };
    record(pc, env, before, applied)
}

fn record(
    pc: &mut ProofContext,
    env: &mut Env,
    before: Vec<u64>,
    applied: Option<Applied>,
) -> Result<bool> {
    match applied {
        None => Ok(false),
        Some(a) => {
            let after_measure = to_bv_measure(pc);
            env.tracer.record(
                Stage::ToBv,
                a.rule,
                a.target,
                a.after,
                None,
                before,
                after_measure,
            );
            Ok(true)
        }
    }
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

fn pow2m1(b: u32) -> u128 {
    if b >= 128 {
        u128::MAX
    } else {
        (1u128 << b) - 1
    }
}

fn bounded(env: &mut Env, hyps: &[Formula], t: &Term, limit: u128, prime: u64) -> Result<bool> {
    let goal = Formula::leq(t.clone(), Term::nat_const(limit));
    entail(env, hyps, &goal, true, prime)
}

/// injBVLeqHyp: a natural-number inequality hypothesis gains a bitvector
/// image at the global width, keeping the original so both range analysis
/// and bit-blasting can use it.
fn rule_inj_bv_leq_hyp(pc: &mut ProofContext, env: &mut Env, b: u32) -> Result<Option<Applied>> {
    let limit = pow2m1(b);
    let candidates: Vec<Formula> = pc
        .hyps
        .iter()
        .filter(|h| matches!(h.node(), FormulaNode::Leq(a, _) if a.sort().is_nat()))
        .cloned()
        .collect();
    for h in candidates {
        let FormulaNode::Leq(a, c) = h.node() else {
            continue;
        };
        let image = crate::term::normalize(&Formula::leq(
            Term::to_bv(b, a.clone()),
            Term::to_bv(b, c.clone()),
        ));
        if pc.hyps.contains(&image) {
            continue;
        }
        let hyps = pc.hyps.clone();
        if bounded(env, &hyps, a, limit, pc.prime)? && bounded(env, &hyps, c, limit, pc.prime)? {
            pc.push_hyp(image.clone());
            return Ok(Some(Applied {
                rule: "injBVLeqHyp",
                target: h.to_string(),
                after: Some(image.to_string()),
            }));
        }
    }
    Ok(None)
}

/// injBV: a natural-number equality whose sides provably fit the global
/// width becomes a bitvector equality.
fn rule_inj_bv(pc: &mut ProofContext, env: &mut Env, b: u32) -> Result<Option<Applied>> {
    let limit = pow2m1(b);
    let candidates: Vec<(Formula, bool)> = pc
        .goals
        .iter()
        .map(|g| (g.clone(), true))
        .chain(pc.hyps.iter().map(|h| (h.clone(), false)))
        .filter(|(f, _)| matches!(f.node(), FormulaNode::Eq(a, _) if a.sort().is_nat()))
        .collect();
    for (f, in_goals) in candidates {
        let FormulaNode::Eq(t1, t2) = f.node() else {
            continue;
        };
        let hyps = pc.hyps.clone();
        if bounded(env, &hyps, t1, limit, pc.prime)? && bounded(env, &hyps, t2, limit, pc.prime)? {
            let new = Formula::eq(Term::to_bv(b, t1.clone()), Term::to_bv(b, t2.clone()));
            if in_goals {
                pc.replace_goal(&f, new.clone());
            } else {
                pc.replace_hyp(&f, new.clone());
            }
            return Ok(Some(Applied {
                rule: "injBV",
                target: f.to_string(),
                after: Some(crate::term::normalize(&new).to_string()),
            }));
        }
    }
    Ok(None)
}

/// distBV: toBV is a ring homomorphism for + and *; no reduction is needed
/// since arithmetic already wraps mod 2^N.
fn rule_dist_bv(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = crate::ff2nat::find_in_context(pc, |t| {
        matches!(t.node(), TermNode::ToBv(_, arg)
            if matches!(arg.node(), TermNode::Bin(BinOp::Add | BinOp::Mul, ..)))
    });
    let Some(old) = hit else {
        return Ok(None);
    };
    let TermNode::ToBv(n, arg) = old.node() else {
        unreachable!();
    };
    let TermNode::Bin(op, a, b, _) = arg.node() else {
        unreachable!();
    };
    let new = Term::bin(
        *op,
        Term::to_bv(*n, a.clone()),
        Term::to_bv(*n, b.clone()),
        Sort::Bv(*n),
    );
    pc.rewrite_everywhere(&old, &new)?;
    Ok(Some(Applied {
        rule: "distBV",
        target: old.to_string(),
        after: Some(new.to_string()),
    }))
}

/// distBVIte: toBV distributes structurally over ite.
fn rule_dist_bv_ite(pc: &mut ProofContext) -> Result<Option<Applied>> {
    let hit = crate::ff2nat::find_in_context(pc, |t| {
        matches!(t.node(), TermNode::ToBv(_, arg) if matches!(arg.node(), TermNode::Ite(..)))
    });
    let Some(old) = hit else {
        return Ok(None);
    };
    let TermNode::ToBv(n, arg) = old.node() else {
        unreachable!();
    };
    let TermNode::Ite(c, a, b, _) = arg.node() else {
        unreachable!();
    };
    let new = Term::ite(c.clone(), Term::to_bv(*n, a.clone()), Term::to_bv(*n, b.clone()));
    pc.rewrite_everywhere(&old, &new)?;
    Ok(Some(Applied {
        rule: "distBVIte",
        target: old.to_string(),
        after: Some(new.to_string()),
    }))
}

/// distBVSub: toBV distributes over a subtraction once range analysis shows
/// the subtraction is exact (minuend dominates) and the minuend fits the
/// global width. Exactness makes the distribution a ring identity at any
/// node width; there is deliberately no overflow fallback here, since the
/// upstream field rules never produce a possibly-negative difference.
fn rule_dist_bv_sub(pc: &mut ProofContext, env: &mut Env, b: u32) -> Result<Option<Applied>> {
    let candidates: Vec<Term> = collect_terms(pc, |t| {
        matches!(t.node(), TermNode::ToBv(_, arg)
            if matches!(arg.node(), TermNode::Bin(BinOp::Sub, ..)))
    });
    let limit = pow2m1(b);
    for old in candidates {
        let TermNode::ToBv(n, arg) = old.node() else {
            continue;
        };
        let TermNode::Bin(BinOp::Sub, t1, t2, _) = arg.node() else {
            continue;
        };
        let hyps = pc.hyps.clone();
        let dominates = Formula::geq(t1.clone(), t2.clone());
        if bounded(env, &hyps, t1, limit, pc.prime)?
            && entail(env, &hyps, &dominates, true, pc.prime)?
        {
            let new = Term::bin(
                BinOp::Sub,
                Term::to_bv(*n, t1.clone()),
                Term::to_bv(*n, t2.clone()),
                Sort::Bv(*n),
            );
            pc.rewrite_everywhere(&old, &new)?;
            return Ok(Some(Applied {
                rule: "distBVSub",
                target: old.to_string(),
                after: Some(new.to_string()),
            }));
        }
    }
    Ok(None)
}

/// distBVMod: a reduction by a constant becomes a bitvector remainder when
/// both the modulus and the body fit the node width (which makes the
/// conversion value-exact).
fn rule_dist_bv_mod(pc: &mut ProofContext, env: &mut Env) -> Result<Option<Applied>> {
    let candidates: Vec<Term> = collect_terms(pc, |t| {
        matches!(t.node(), TermNode::ToBv(_, arg)
            if matches!(arg.node(), TermNode::Bin(BinOp::Mod, _, m, _)
                if matches!(m.as_const(), Some(c) if c >= 1)))
    });
    for old in candidates {
        let TermNode::ToBv(n, arg) = old.node() else {
            continue;
        };
        let TermNode::Bin(BinOp::Mod, t1, m, _) = arg.node() else {
            continue;
        };
        let c = m.as_const().expect("constant modulus");
        let limit = pow2m1(*n);
        if c > limit {
            continue;
        }
        let hyps = pc.hyps.clone();
        if bounded(env, &hyps, t1, limit, pc.prime)? {
            let new = Term::bin(
                BinOp::Mod,
                Term::to_bv(*n, t1.clone()),
                Term::bv_const(c, *n),
                Sort::Bv(*n),
            );
            pc.rewrite_everywhere(&old, &new)?;
            return Ok(Some(Applied {
                rule: "distBVMod",
                target: old.to_string(),
                after: Some(new.to_string()),
            }));
        }
    }
    Ok(None)
}

fn collect_terms(pc: &ProofContext, pred: impl Fn(&Term) -> bool) -> Vec<Term> {
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
// Atoms and the purity scan
// ---------------------------------------------------------------------------

/// A bit-blastable leaf produced by the translation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BvAtom {
    /// A declared bitvector variable.
    BvVar(String, u32),
    /// A constant at the given width.
    Const(u128, u32),
    /// A natural-number atom (toNat of a field variable, or a hypothesis-
    /// bounded natural variable) viewed at the given width.
    NatAtom(Term, u32),
    /// Zero-extension or truncation of a bitvector term to the given width.
    Resize(Term, u32),
}

/// Classify an atom left by the strategy. Anything else surviving to the
/// bit-blaster is unsupported.
pub fn as_bv_atom(t: &Term) -> Result<BvAtom> {
    match t.node() {
        TermNode::Var(v, Sort::Bv(n)) => Ok(BvAtom::BvVar(v.clone(), *n)),
        TermNode::Const(c, Sort::Bv(n)) => Ok(BvAtom::Const(*c, *n)),
        TermNode::ToBv(n, arg) => match arg.node() {
            TermNode::Const(c, Sort::Nat) => {
                if *c > pow2m1(*n) {
                    Err(Error::Unsupported(format!(
                        "constant {c} does not fit {n} bits"
                    )))
                } else {
                    Ok(BvAtom::Const(*c, *n))
                }
            }
            TermNode::ToNat(v) if matches!(v.node(), TermNode::Var(..)) => {
                Ok(BvAtom::NatAtom(arg.clone(), *n))
            }
            TermNode::Var(_, Sort::Nat) => {
                Ok(BvAtom::NatAtom(arg.clone(), *n))
            }
            TermNode::BvToNat(bvt) => Ok(BvAtom::Resize(bvt.clone(), *n)),
            _ => Err(Error::Unsupported(format!("toBV over non-atom: {t}"))),
        },
        _ => Err(Error::Unsupported(format!("not a bitvector atom: {t}"))),
    }
}

/// Every goal is a pure bitvector formula over atoms accepted by
/// `as_bv_atom` (ite conditions may still compare bounded natural atoms;
/// the lowering evaluates those at a local width).
pub fn scan_pure_bv(pc: &ProofContext) -> Result<()> {
    for g in &pc.goals {
        check_bv_formula(g)?;
    }
    Ok(())
}

fn check_bv_formula(f: &Formula) -> Result<()> {
    match f.node() {
        FormulaNode::Bool(_) => Ok(()),
        FormulaNode::Eq(a, b) | FormulaNode::Leq(a, b) | FormulaNode::Geq(a, b) => {
            if a.sort().is_bv() && b.sort().is_bv() {
                check_bv_term(a)?;
                check_bv_term(b)
            } else {
                Err(Error::Unsupported(format!("non-bitvector goal: {f}")))
            }
        }
        FormulaNode::Conj(fs) => {
            for g in fs {
                check_bv_formula(g)?;
            }
            Ok(())
        }
    }
}

fn check_bv_term(t: &Term) -> Result<()> {
    match t.node() {
        TermNode::Bin(_, a, b, s) if s.is_bv() => {
            check_bv_term(a)?;
            check_bv_term(b)
        }
        TermNode::Ite(c, a, b, s) if s.is_bv() => {
            check_cond(c)?;
            check_bv_term(a)?;
            check_bv_term(b)
        }
        _ => as_bv_atom(t).map(|_| ()),
    }
}

fn check_cond(f: &Formula) -> Result<()> {
    match f.node() {
        FormulaNode::Bool(_) => Ok(()),
        FormulaNode::Eq(a, b) | FormulaNode::Leq(a, b) | FormulaNode::Geq(a, b) => {
            if a.sort().is_bv() {
                check_bv_term(a)?;
                check_bv_term(b)
            } else if a.sort().is_nat() {
                check_nat_cond_term(a)?;
                check_nat_cond_term(b)
            } else {
                Err(Error::Unsupported(format!("condition at sort {}", a.sort())))
            }
        }
        FormulaNode::Conj(fs) => {
            for g in fs {
                check_cond(g)?;
            }
            Ok(())
        }
    }
}

fn check_nat_cond_term(t: &Term) -> Result<()> {
    match t.node() {
        TermNode::Const(_, Sort::Nat) => Ok(()),
        TermNode::Var(_, Sort::Nat) => Ok(()),
        TermNode::ToNat(v) if matches!(v.node(), TermNode::Var(..)) => Ok(()),
        TermNode::BvToNat(bvt) => check_bv_term(bvt),
        TermNode::Bin(_, a, b, Sort::Nat) => {
            check_nat_cond_term(a)?;
            check_nat_cond_term(b)
        }
        TermNode::Ite(c, a, b, Sort::Nat) => {
            check_cond(c)?;
            check_nat_cond_term(a)?;
            check_nat_cond_term(b)
        }
        _ => Err(Error::Unsupported(format!("condition term: {t}"))),
    }
}
