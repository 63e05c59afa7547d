//! Rule-application traces and the termination measures asserted over them.
//!
//! Every rule firing logs the measure tuple of its governing strategy before
//! and after the rewrite. The tuples are chosen so that each firing strictly
//! decreases its tuple in lexicographic order, which is what the acceptance
//! suite replays over fuzz runs.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::term::{BinOp, Formula, FormulaNode, ProofContext, Sort, Term, TermNode};

/// Pipeline stage a trace entry belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum Stage {
    ToNat,
    RangeAnalysis,
    ToBv,
    BitBlast,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub stage: Stage,
    /// "main" for the driven context, "query:<n>" inside entailment checks.
    pub scope: String,
    pub rule: &'static str,
    /// The formula (or subterm occurrence) the rule fired on.
    pub target: String,
    /// The replacement produced, when the rule is a rewrite.
    pub after: Option<String>,
    /// Substitution applied to the rest of the context, when any.
    pub substitution: Option<String>,
    pub measure_before: Vec<u64>,
    pub measure_after: Vec<u64>,
}

impl TraceEntry {
    /// Strict lexicographic decrease of the measure tuple.
    pub fn decreased(&self) -> bool {
        self.measure_after < self.measure_before
    }
}

/// Ordered log of rule applications for one pipeline run.
#[derive(Clone, Debug, Default)]
pub struct RuleTrace {
    pub entries: Vec<TraceEntry>,
}

impl RuleTrace {
    pub fn push(&mut self, e: TraceEntry) {
        self.entries.push(e);
    }

    pub fn rule_counts(&self) -> BTreeMap<&'static str, u64> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.rule).or_insert(0) += 1;
        }
        m
    }

    pub fn count(&self, rule: &str) -> u64 {
        self.entries.iter().filter(|e| e.rule == rule).count() as u64
    }

    /// Index of the first entry violating its measure, if any.
    pub fn first_violation(&self) -> Option<usize> {
        self.entries.iter().position(|e| !e.decreased())
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&serde_json::to_string(e).expect("trace entries serialize"));
            s.push('\n');
        }
        s
    }
}

/// Trace sink with the running sequence number and scope stack.
#[derive(Debug, Default)]
pub struct Tracer {
    pub trace: RuleTrace,
    seq: u64,
    scope: Vec<String>,
    query_counter: u64,
}

impl Tracer {
    pub fn new() -> Tracer {
        Tracer::default()
    }

    pub fn scope(&self) -> String {
        self.scope.last().cloned().unwrap_or_else(|| "main".into())
    }

    pub fn push_query_scope(&mut self) {
        self.query_counter += 1;
        self.scope.push(format!("query:{}", self.query_counter));
    }

    pub fn pop_scope(&mut self) {
        self.scope.pop();
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        stage: Stage,
        rule: &'static str,
        target: String,
        after: Option<String>,
        substitution: Option<String>,
        measure_before: Vec<u64>,
        measure_after: Vec<u64>,
    ) {
        self.seq += 1;
        let scope = self.scope();
        self.trace.push(TraceEntry {
            seq: self.seq,
            stage,
            scope,
            rule,
            target,
            after,
            substitution,
            measure_before,
            measure_after,
        });
    }
}

// ---------------------------------------------------------------------------
// Measures: FF -> Nat strategy
// ---------------------------------------------------------------------------

fn for_each_term<'a>(fs: impl Iterator<Item = &'a Formula>, f: &mut impl FnMut(&Term)) {
    for g in fs {
        g.visit_terms(f);
    }
}

fn count_ff_equalities_in(f: &Formula, n: &mut u64) {
    match f.node() {
        FormulaNode::Eq(a, _) if a.sort().is_ff() => *n += 1,
        FormulaNode::Conj(fs) => {
            for g in fs {
                count_ff_equalities_in(g, n);
            }
        }
        _ => {}
    }
    // Equalities may also hide inside ite conditions.
    f.visit_terms(&mut |t| {
        if let TermNode::Ite(c, _, _, _) = t.node() {
            count_ff_equalities_in(c, n);
        }
    });
}

fn term_op_count(t: &Term) -> u64 {
    let mut n = 0;
    t.visit(&mut |s| {
        if matches!(s.node(), TermNode::Bin(..) | TermNode::Ite(..)) {
            n += 1;
        }
    });
    n
}

/// Measure tuple for the to_N strategy: (FF equalities, operators inside
/// toNat, mod operators, FF additions above subtractions, unbounded FF
/// variables in the context).
pub fn to_nat_measure(pc: &ProofContext) -> Vec<u64> {
    let mut ff_eqs = 0;
    for f in pc.formulas() {
        count_ff_equalities_in(f, &mut ff_eqs);
    }

    let mut ops_inside_tonat = 0;
    let mut mod_ops = 0;
    let mut add_above_sub = 0;
    for_each_term(pc.formulas(), &mut |t| {
        match t.node() {
            TermNode::ToNat(arg) => ops_inside_tonat += term_op_count(arg),
            TermNode::Bin(BinOp::Mod, ..) => mod_ops += 1,
            _ => {}
        }
        // Every FF subtraction contributes its number of FF-addition ancestors;
        // counted here by looking down: each FF + node adds one per subtraction
        // in its subtree.
        if let TermNode::Bin(BinOp::Add, a, b, s) = t.node() {
            if s.is_ff() {
                for side in [a, b] {
                    side.visit(&mut |u| {
                        if matches!(u.node(), TermNode::Bin(BinOp::Sub, _, _, us) if us.is_ff()) {
                            add_above_sub += 1;
                        }
                    });
                }
            }
        }
    });

    let unbounded = unbounded_ff_vars(pc);
    vec![ff_eqs, ops_inside_tonat, mod_ops, add_above_sub, unbounded]
}

/// FF variables occurring anywhere in the context with no hypothesis bound
/// toNat(v) <= C for C in [0, p-1].
pub fn unbounded_ff_vars(pc: &ProofContext) -> u64 {
    let mut vars = std::collections::BTreeSet::new();
    for_each_term(pc.formulas(), &mut |t| {
        if let TermNode::Var(n, s) = t.node() {
            if s.is_ff() {
                vars.insert(n.clone());
            }
        }
    });
    vars.retain(|v| ff_var_bound(pc, v).is_none());
    vars.len() as u64
}

/// Tightest hypothesis bound toNat(v) <= C with C <= p-1, if one exists.
pub fn ff_var_bound(pc: &ProofContext, v: &str) -> Option<u128> {
    let mut best: Option<u128> = None;
    for h in &pc.hyps {
        if let FormulaNode::Leq(lhs, rhs) = h.node() {
            if let (TermNode::ToNat(arg), Some(c)) = (lhs.node(), rhs.as_const()) {
                if let TermNode::Var(name, _) = arg.node() {
                    if name == v && c <= (pc.prime - 1) as u128 {
                        best = Some(best.map_or(c, |b: u128| b.min(c)));
                    }
                }
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Measures: Nat -> BV strategy
// ---------------------------------------------------------------------------

/// Hypotheses over the naturals still lacking a bitvector counterpart
/// (the injBVLeqHyp loop measure).
pub fn nat_hyps_without_bv_image(pc: &ProofContext, width: u32) -> u64 {
    let mut n = 0;
    for h in &pc.hyps {
        if let FormulaNode::Leq(a, b) = h.node() {
            if a.sort().is_nat() && b.sort().is_nat() {
                let img = crate::term::normalize(&Formula::leq(
                    Term::to_bv(width, a.clone()),
                    Term::to_bv(width, b.clone()),
                ));
                if !pc.hyps.contains(&img) {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Measure tuple for the injBV/push loop: (Nat equalities in the context,
/// operators inside toBV).
pub fn to_bv_measure(pc: &ProofContext) -> Vec<u64> {
    let mut nat_eqs = 0;
    for f in pc.formulas() {
        count_nat_equalities_in(f, &mut nat_eqs);
    }
    let mut ops_inside_tobv = 0;
    for_each_term(pc.formulas(), &mut |t| {
        if let TermNode::ToBv(_, arg) = t.node() {
            ops_inside_tobv += term_op_count(arg);
        }
    });
    vec![nat_eqs, ops_inside_tobv]
}

fn count_nat_equalities_in(f: &Formula, n: &mut u64) {
    match f.node() {
        FormulaNode::Eq(a, _) if a.sort().is_nat() => *n += 1,
        FormulaNode::Conj(fs) => {
            for g in fs {
                count_nat_equalities_in(g, n);
            }
        }
        _ => {}
    }
    f.visit_terms(&mut |t| {
        if let TermNode::Ite(c, _, _, _) = t.node() {
            count_nat_equalities_in(c, n);
        }
    });
}

// ---------------------------------------------------------------------------
// Measures: range analysis
// ---------------------------------------------------------------------------

fn is_placeholder_name(v: &str) -> bool {
    v.starts_with(crate::term::PLACEHOLDER_PREFIX)
}

fn formula_has_original_var(f: &Formula) -> bool {
    f.free_vars().iter().any(|(v, _)| !is_placeholder_name(v))
}

/// Range-analysis measure (vars, ops, expps, |G|):
///  - vars: occurrences of original variables in all goals,
///  - ops: arithmetic/ite operators in goals containing an original variable,
///  - expps: goals with an original variable but no placeholder,
///  - |G|: number of goals.
pub fn range_measure(goals: &[Formula]) -> Vec<u64> {
    let mut vars = 0u64;
    let mut ops = 0u64;
    let mut expps = 0u64;
    let mut live = 0u64;
    for g in goals {
        // Decided goals (the true/false markers eval leaves behind) are
        // verdict tokens, not live goals.
        if matches!(g.node(), FormulaNode::Bool(_)) {
            continue;
        }
        live += 1;
        let mut goal_vars = 0u64;
        let mut goal_ops = 0u64;
        let mut has_placeholder = false;
        g.visit_terms(&mut |t| match t.node() {
            TermNode::Var(v, _) => {
                if is_placeholder_name(v) {
                    has_placeholder = true;
                } else {
                    goal_vars += 1;
                }
            }
            TermNode::Bin(..) | TermNode::Ite(..) => goal_ops += 1,
            _ => {}
        });
        vars += goal_vars;
        if goal_vars > 0 {
            ops += goal_ops;
            if !has_placeholder {
                expps += 1;
            }
        }
    }
    vec![vars, ops, expps, live]
}

pub use self::helpers::*;

mod helpers {
    use super::*;

    /// True iff `f` contains at least one variable and none is a placeholder.
    pub fn has_vars(vars: &std::collections::BTreeSet<(String, Sort)>) -> bool {
        !vars.is_empty() && vars.iter().all(|(v, _)| !is_placeholder_name(v))
    }

    pub fn term_has_vars(t: &Term) -> bool {
        has_vars(&t.free_vars())
    }

    pub fn formula_is_ground(f: &Formula) -> bool {
        f.free_vars().is_empty()
    }

    /// Distinct non-placeholder variables of a formula.
    pub fn original_vars_of(f: &Formula) -> Vec<(String, Sort)> {
        f.free_vars()
            .into_iter()
            .filter(|(v, _)| !is_placeholder_name(v))
            .collect()
    }

    pub fn formula_mentions_original(f: &Formula) -> bool {
        formula_has_original_var(f)
    }
}
