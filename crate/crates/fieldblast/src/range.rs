//! Range analysis: the inequality-decomposition, placeholder-elimination and
//! constant/bit-reasoning calculi, plus the driver that discharges
//! natural-number inequality goals and the entailment queries posed by the
//! translation stages.
//!
//! Placeholder variables are implicitly existentially quantified: a goal set
//! `{t <= w, w <= 6}` is provable when some witness for `w` closes every
//! goal. All rules either preserve validity or strengthen goals, so a
//! successful derivation (empty goal set) certifies the original goal while
//! a failed one proves nothing.

use std::collections::HashMap;

use crate::oracle;
use crate::term::{
    normalize, substitute, BinOp, Formula, FormulaNode, ProofContext, Sort, Term, TermNode,
    PLACEHOLDER_PREFIX,
};
use crate::trace::{self, range_measure, Stage, Tracer};
use crate::{Deadline, Error, Result};

const MAX_RANGE_STEPS: usize = 50_000;
const MAX_QUERY_DEPTH: usize = 12;

// ---------------------------------------------------------------------------
// Environment shared by the strategies
// ---------------------------------------------------------------------------

/// Everything a rule needs besides the proof context itself: the trace sink,
/// the wall-clock budget, the entailment memo, and the case-split policy
/// stack (the base entry is the to_N translation policy; queries push their
/// own policy so nested premises inherit it).
pub struct Env<'a> {
    pub tracer: &'a mut Tracer,
    pub deadline: &'a Deadline,
    pub engine: &'a mut EntailmentEngine,
    case_splits: Vec<bool>,
    /// Nanoseconds spent inside range-analysis derivations.
    pub range_nanos: u128,
}

impl<'a> Env<'a> {
    pub fn new(
        tracer: &'a mut Tracer,
        deadline: &'a Deadline,
        engine: &'a mut EntailmentEngine,
        translation_case_splits: bool,
    ) -> Env<'a> {
        Env {
            tracer,
            deadline,
            engine,
            case_splits: vec![translation_case_splits],
            range_nanos: 0,
        }
    }

    pub fn current_case_splits(&self) -> bool {
        *self.case_splits.last().unwrap_or(&true)
    }
}

// ---------------------------------------------------------------------------
// Entailment engine
// ---------------------------------------------------------------------------

/// One recorded range-analysis query, for the soundness audit.
#[derive(Clone, Debug)]
pub struct AuditEntry {
    pub hyps: Vec<Formula>,
    pub goal: Formula,
    pub result: bool,
    pub scope: String,
}

/// Memoized entailment checks. Only positive answers are cached (hypotheses
/// grow monotonically during a run, so a failed proof may succeed later).
/// Every cached `true` remembers whether it was derived without case splits,
/// so restricted queries only reuse proofs the restriction allows.
#[derive(Default)]
pub struct EntailmentEngine {
    /// goal -> proved_without_case_splits
    memo: HashMap<Formula, bool>,
    /// term -> (best proven upper bound, proved_without_case_splits)
    best_bound: HashMap<Term, (u128, bool)>,
    pub audit: Vec<AuditEntry>,
    depth: usize,
}

impl EntailmentEngine {
    pub fn new() -> EntailmentEngine {
        EntailmentEngine::default()
    }

    fn memo_hit(&self, goal: &Formula, case_splits: bool) -> bool {
        if let Some(no_splits) = self.memo.get(goal) {
            if *no_splits || case_splits {
                return true;
            }
        }
        if let FormulaNode::Leq(t, c) = goal.node() {
            if let Some(c) = c.as_const() {
                if let Some((b, no_splits)) = self.best_bound.get(t) {
                    if *b <= c && (*no_splits || case_splits) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn memo_store(&mut self, goal: &Formula, case_splits: bool) {
        let no_splits = !case_splits;
        let e = self.memo.entry(goal.clone()).or_insert(no_splits);
        *e = *e || no_splits;
        if let FormulaNode::Leq(t, c) = goal.node() {
            if let Some(c) = c.as_const() {
                let better = match self.best_bound.get(t) {
                    Some((b, ns)) => c < *b || (c == *b && no_splits && !*ns),
                    None => true,
                };
                if better {
                    self.best_bound.insert(t.clone(), (c, no_splits));
                }
            }
        }
    }
}

/// Decide `hyps |= goal` by translating the transient goal to the naturals
/// and running the range calculus. A `false` answer means "not established",
/// never a refutation.
pub fn entail(
    env: &mut Env,
    hyps: &[Formula],
    goal: &Formula,
    case_splits: bool,
    prime: u64,
) -> Result<bool> {
    let goal_n = normalize(goal);
    if goal_n.free_vars().is_empty() {
        let r = oracle::eval_formula(&goal_n, &oracle::Assignment::new())?;
        record_audit(env, hyps, &goal_n, r);
        return Ok(r);
    }
    if env.engine.memo_hit(&goal_n, case_splits) {
        record_audit(env, hyps, &goal_n, true);
        return Ok(true);
    }
    if env.engine.depth >= MAX_QUERY_DEPTH {
        return Ok(false);
    }

    // Transient context: the premise becomes the only goal; hypotheses are
    // cloned so transient bound additions stay local.
    let mut tpc = ProofContext::new(prime);
    for h in hyps {
        tpc.push_hyp(h.clone());
    }
    tpc.push_goal(goal_n.clone());

    env.engine.depth += 1;
    env.case_splits.push(case_splits);
    env.tracer.push_query_scope();
    let result = (|| -> Result<bool> {
        crate::ff2nat::to_nat_strategy(&mut tpc, env)?;
        for g in tpc.goals.clone() {
            let ok = match g.node() {
                FormulaNode::Bool(b) => *b,
                FormulaNode::Leq(a, _) if a.sort().is_nat() => {
                    analyze(&g, &tpc.hyps, prime, case_splits, false, env)?.proved
                }
                _ => false,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    })();
    env.tracer.pop_scope();
    env.case_splits.pop();
    env.engine.depth -= 1;

    let result = result?;
    if result {
        env.engine.memo_store(&goal_n, case_splits);
    }
    record_audit(env, hyps, &goal_n, result);
    Ok(result)
}

fn record_audit(env: &mut Env, hyps: &[Formula], goal: &Formula, result: bool) {
    let scope = env.tracer.scope();
    env.engine.audit.push(AuditEntry {
        hyps: hyps.to_vec(),
        goal: goal.clone(),
        result,
        scope,
    });
}

// ---------------------------------------------------------------------------
// The calculus driver
// ---------------------------------------------------------------------------

pub struct RangeOutcome {
    pub proved: bool,
    /// Goal-set snapshots after each rule application (initial set first),
    /// recorded only when requested.
    pub snapshots: Vec<Vec<Formula>>,
}

struct GoalSet<'a> {
    goals: Vec<Formula>,
    hyps: &'a [Formula],
    prime: u64,
    counter: u64,
}

struct Step {
    rule: &'static str,
    target: Formula,
    after: Option<String>,
    subst: Option<String>,
    new_goals: Vec<Formula>,
}

/// Run the calculus on one inequality goal. Returns proved = true iff the
/// goal set empties; placeholders never survive a positive verdict.
pub fn analyze(
    goal: &Formula,
    hyps: &[Formula],
    prime: u64,
    case_splits: bool,
    record_snapshots: bool,
    env: &mut Env,
) -> Result<RangeOutcome> {
    let started = std::time::Instant::now();
    let mut gs = GoalSet {
        goals: Vec::new(),
        hyps,
        prime,
        counter: 0,
    };
    gs.insert(goal.clone());
    let mut snapshots = Vec::new();
    if record_snapshots {
        snapshots.push(gs.goals.clone());
    }

    let mut proved = true;
    let mut steps = 0usize;
    while !gs.goals.is_empty() {
        env.deadline.check("range-analysis")?;
        steps += 1;
        if steps > MAX_RANGE_STEPS {
            return Err(Error::Internal(
                "range analysis exceeded step budget".into(),
            ));
        }
        let before = range_measure(&gs.goals);
        let step = match gs.next_step(case_splits)? {
            Some(s) => s,
            None => {
                proved = false;
                break;
            }
        };
        let failed = step.new_goals.contains(&Formula::bool(false));
        let target = step.target.to_string();
        gs.goals = step.new_goals;
        let after_measure = range_measure(&gs.goals);
        env.tracer.record(
            Stage::RangeAnalysis,
            step.rule,
            target,
            step.after,
            step.subst,
            before,
            after_measure,
        );
        if record_snapshots {
            snapshots.push(gs.goals.clone());
        }
        if failed {
            proved = false;
            break;
        }
    }

    env.range_nanos += started.elapsed().as_nanos();
    Ok(RangeOutcome { proved, snapshots })
}

/// Convenience wrapper: just the verdict.
pub fn analyze_goal(
    goal: &Formula,
    hyps: &[Formula],
    prime: u64,
    case_splits: bool,
    env: &mut Env,
) -> Result<bool> {
    Ok(analyze(goal, hyps, prime, case_splits, false, env)?.proved)
}

impl<'a> GoalSet<'a> {
    fn insert(&mut self, f: Formula) {
        let f = prep(&f, self.hyps);
        match f.node() {
            FormulaNode::Conj(fs) => {
                for g in fs.clone() {
                    self.insert(g);
                }
            }
            FormulaNode::Bool(true) => {}
            _ => {
                if !self.goals.contains(&f) {
                    self.goals.push(f);
                }
            }
        }
    }

    fn fresh_placeholder(&mut self) -> Term {
        self.counter += 1;
        Term::var(format!("{PLACEHOLDER_PREFIX}{}", self.counter), Sort::Nat)
    }

    /// Pick the next rule application under the fixed priority order:
    /// eval, then the constant/bit rules (ineqCases, ineqXOR, ineqHyp,
    /// ineqConst), then decomposition, then field/bitvector bound
    /// elimination, with geNat last.
    fn next_step(&mut self, case_splits: bool) -> Result<Option<Step>> {
        if let Some(s) = self.rule_eval()? {
            return Ok(Some(s));
        }
        if case_splits {
            if let Some(s) = self.rule_ineq_cases()? {
                return Ok(Some(s));
            }
            if let Some(s) = self.rule_ineq_xor() {
                return Ok(Some(s));
            }
        }
        if let Some(s) = self.rule_ineq_hyp()? {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_ineq_const()? {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_intro_pvar() {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_leq_add_mul() {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_leq_sub() {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_leq_mod() {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_leq_if() {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_leq_zmod()? {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_leq_bv()? {
            return Ok(Some(s));
        }
        if let Some(s) = self.rule_ge_nat()? {
            return Ok(Some(s));
        }
        Ok(None)
    }

    // -- helpers ----------------------------------------------------------

    fn goals_without(&self, skip: &Formula) -> Vec<Formula> {
        self.goals.iter().filter(|g| *g != skip).cloned().collect()
    }

    /// Rebuild the goal set from `base`, substituting `w := value` in every
    /// member (the substitution is atomic across the set).
    fn substituted(&self, base: &[Formula], w: &Term, value: &Term) -> Result<Vec<Formula>> {
        let mut out = GoalSet {
            goals: Vec::new(),
            hyps: self.hyps,
            prime: self.prime,
            counter: self.counter,
        };
        for g in base {
            out.insert(substitute(g, w, value)?);
        }
        Ok(out.goals)
    }

    fn with_replaced(&self, old: &Formula, news: &[Formula]) -> Vec<Formula> {
        let mut out = GoalSet {
            goals: Vec::new(),
            hyps: self.hyps,
            prime: self.prime,
            counter: self.counter,
        };
        for g in &self.goals {
            if g != old {
                out.insert(g.clone());
            }
        }
        for n in news {
            out.insert(n.clone());
        }
        out.goals
    }

    // -- rules ------------------------------------------------------------

    /// eval: a variable-free goal is decided by evaluation; a false result
    /// fails the derivation.
    fn rule_eval(&mut self) -> Result<Option<Step>> {
        for g in &self.goals {
            if g.free_vars().is_empty() {
                let v = oracle::eval_formula(g, &oracle::Assignment::new())?;
                let mut new_goals = self.goals_without(g);
                if !v {
                    new_goals.push(Formula::bool(false));
                }
                return Ok(Some(Step {
                    rule: "eval",
                    target: g.clone(),
                    after: Some(v.to_string()),
                    subst: None,
                    new_goals,
                }));
            }
        }
        Ok(None)
    }

    /// ineqCases: a goal over exactly two bit-bounded original variables
    /// with a detected dependency (a subtraction, or variables on both
    /// sides) is replaced by its four bit instantiations.
    fn rule_ineq_cases(&mut self) -> Result<Option<Step>> {
        for g in &self.goals {
            let (lhs, rhs) = match g.node() {
                FormulaNode::Leq(a, b) => (a, b),
                _ => continue,
            };
            let orig = trace::original_vars_of(g);
            if orig.len() != 2 {
                continue;
            }
            let dependency =
                has_sub(g) || (trace::term_has_vars(lhs) && trace::term_has_vars(rhs));
            if !dependency {
                continue;
            }
            let v1 = Term::var(orig[0].0.clone(), orig[0].1);
            let v2 = Term::var(orig[1].0.clone(), orig[1].1);
            if !self.bit_bounded_var(&v1) || !self.bit_bounded_var(&v2) {
                continue;
            }
            let mut insts = Vec::new();
            for (b1, b2) in [(0u128, 0u128), (1, 0), (0, 1), (1, 1)] {
                let c1 = const_of_sort(b1, v1.sort(), self.prime);
                let c2 = const_of_sort(b2, v2.sort(), self.prime);
                insts.push(substitute(&substitute(g, &v1, &c1)?, &v2, &c2)?);
            }
            return Ok(Some(Step {
                rule: "ineqCases",
                target: g.clone(),
                after: None,
                subst: Some(format!("{v1},{v2} in {{0,1}}^2")),
                new_goals: self.with_replaced(g, &insts),
            }));
        }
        Ok(None)
    }

    /// ineqXOR: v*t1 + (1-v)*t2 compared against a placeholder becomes an
    /// if-then-else on v = 0 when v is bit-bounded.
    fn rule_ineq_xor(&mut self) -> Option<Step> {
        for g in &self.goals {
            let (side, w, upper) = match g.node() {
                FormulaNode::Leq(a, b) if self.is_pvar(b) => (a, b, true),
                FormulaNode::Leq(a, b) if self.is_pvar(a) => (b, a, false),
                _ => continue,
            };
            let Some((v, t1, t2)) = match_xor_encoding(side) else {
                continue;
            };
            if !self.bit_bounded_atom(&v) {
                continue;
            }
            let cond = Formula::eq(v.clone(), Term::nat_const(0));
            let ite = Term::ite(cond, t2, t1);
            let new = if upper {
                Formula::leq(ite, w.clone())
            } else {
                Formula::leq(w.clone(), ite)
            };
            return Some(Step {
                rule: "ineqXOR",
                target: g.clone(),
                after: Some(new.to_string()),
                subst: None,
                new_goals: self.with_replaced(g, &[new]),
            });
        }
        None
    }

    /// ineqHyp: instantiate a placeholder from a hypothesis bound on the
    /// same term (the tightest available one).
    fn rule_ineq_hyp(&mut self) -> Result<Option<Step>> {
        for g in &self.goals {
            if let FormulaNode::Leq(t, w) = g.node() {
                if self.is_pvar(w) && trace::term_has_vars(t) {
                    if let Some(c) = hyp_upper_bound(self.hyps, t) {
                        return Ok(Some(self.eliminate(
                            "ineqHyp",
                            g,
                            w,
                            &Term::nat_const(c),
                        )?));
                    }
                }
                if self.is_pvar(t) && trace::term_has_vars(w) {
                    if let Some(c) = hyp_lower_bound(self.hyps, w) {
                        return Ok(Some(self.eliminate(
                            "ineqHyp",
                            g,
                            t,
                            &Term::nat_const(c),
                        )?));
                    }
                }
            }
        }
        Ok(None)
    }

    /// ineqConst: a placeholder bounded by ground terms is instantiated with
    /// the strongest such bound, guarded so that no goal mentioning the
    /// placeholder still involves original variables (the rule-cycle guard).
    fn rule_ineq_const(&mut self) -> Result<Option<Step>> {
        let mut seen: Vec<Term> = Vec::new();
        for g in &self.goals {
            let w = match g.node() {
                FormulaNode::Leq(c, w) if self.is_pvar(w) && c.is_ground() => w.clone(),
                FormulaNode::Leq(w, c) if self.is_pvar(w) && c.is_ground() => w.clone(),
                _ => continue,
            };
            if seen.contains(&w) {
                continue;
            }
            seen.push(w.clone());
            let guard_ok = self
                .goals
                .iter()
                .filter(|g2| formula_mentions(g2, &w))
                .all(|g2| !trace::formula_mentions_original(g2));
            if !guard_ok {
                continue;
            }
            let mut lowers: Vec<(Formula, Term, u128)> = Vec::new();
            let mut uppers: Vec<(Formula, Term, u128)> = Vec::new();
            for g2 in &self.goals {
                match g2.node() {
                    FormulaNode::Leq(c, w2) if *w2 == w && c.is_ground() => {
                        let v = oracle::eval_term(c, &oracle::Assignment::new())?;
                        lowers.push((g2.clone(), c.clone(), v));
                    }
                    FormulaNode::Leq(w2, c) if *w2 == w && c.is_ground() => {
                        let v = oracle::eval_term(c, &oracle::Assignment::new())?;
                        uppers.push((g2.clone(), c.clone(), v));
                    }
                    _ => {}
                }
            }
            // The strongest sound witness: the largest lower bound when one
            // exists, otherwise the smallest upper bound.
            let defining = if !lowers.is_empty() {
                lowers
                    .into_iter()
                    .max_by_key(|(_, _, v)| *v)
                    .map(|(g2, c, _)| (g2, c))
            } else {
                uppers
                    .into_iter()
                    .min_by_key(|(_, _, v)| *v)
                    .map(|(g2, c, _)| (g2, c))
            };
            if let Some((def_goal, value)) = defining {
                return Ok(Some(self.eliminate("ineqConst", &def_goal, &w, &value)?));
            }
        }
        Ok(None)
    }

    /// Shared conclusion of the elimination rules: drop the defining goal
    /// and substitute the derived value for the placeholder everywhere else.
    fn eliminate(
        &self,
        rule: &'static str,
        defining: &Formula,
        w: &Term,
        value: &Term,
    ) -> Result<Step> {
        let rest = self.goals_without(defining);
        let new_goals = self.substituted(&rest, w, value)?;
        Ok(Step {
            rule,
            target: defining.clone(),
            after: None,
            subst: Some(format!("{w} := {value}")),
            new_goals,
        })
    }

    /// introPVar: split an inequality over original variables with a fresh
    /// placeholder between the two sides.
    fn rule_intro_pvar(&mut self) -> Option<Step> {
        let mut hit = None;
        for g in &self.goals {
            if let FormulaNode::Leq(a, b) = g.node() {
                if trace::has_vars(&g.free_vars()) {
                    hit = Some((g.clone(), a.clone(), b.clone()));
                    break;
                }
            }
        }
        let (g, a, b) = hit?;
        let w = self.fresh_placeholder();
        let n1 = Formula::leq(a, w.clone());
        let n2 = Formula::leq(w.clone(), b);
        Some(Step {
            rule: "introPVar",
            target: g.clone(),
            after: None,
            subst: Some(format!("fresh {w}")),
            new_goals: self.with_replaced(&g, &[n1, n2]),
        })
    }

    /// leqAddMul: interval split of t1 (+|*) t2 <= w.
    fn rule_leq_add_mul(&mut self) -> Option<Step> {
        let mut hit = None;
        for g in &self.goals {
            if let FormulaNode::Leq(t, w) = g.node() {
                if !self.is_pvar(w) || !trace::term_has_vars(t) || !t.sort().is_nat() {
                    continue;
                }
                if let TermNode::Bin(op @ (BinOp::Add | BinOp::Mul), t1, t2, _) = t.node() {
                    hit = Some((g.clone(), *op, t1.clone(), t2.clone(), w.clone()));
                    break;
                }
            }
        }
        let (g, op, t1, t2, w) = hit?;
        let w1 = self.fresh_placeholder();
        let w2 = self.fresh_placeholder();
        let news = [
            Formula::leq(t1, w1.clone()),
            Formula::leq(t2, w2.clone()),
            Formula::leq(Term::bin(op, w1, w2, Sort::Nat), w),
        ];
        Some(Step {
            rule: "leqAddMul",
            target: g.clone(),
            after: None,
            subst: None,
            new_goals: self.with_replaced(&g, &news),
        })
    }

    /// leqSub: strengthen t1 - t2 <= w to t1 <= w.
    fn rule_leq_sub(&mut self) -> Option<Step> {
        for g in &self.goals {
            if let FormulaNode::Leq(t, w) = g.node() {
                if !self.is_pvar(w) || !trace::term_has_vars(t) || !t.sort().is_nat() {
                    continue;
                }
                if let TermNode::Bin(BinOp::Sub, t1, _, _) = t.node() {
                    let new = Formula::leq(t1.clone(), w.clone());
                    return Some(Step {
                        rule: "leqSub",
                        target: g.clone(),
                        after: Some(new.to_string()),
                        subst: None,
                        new_goals: self.with_replaced(g, &[new]),
                    });
                }
            }
        }
        None
    }

    /// leqMod: strengthen t1 mod t2 <= w to t2 <= w (remainder < modulus;
    /// the >= orientation is not justified and never matched).
    fn rule_leq_mod(&mut self) -> Option<Step> {
        for g in &self.goals {
            if let FormulaNode::Leq(t, w) = g.node() {
                if !self.is_pvar(w) || !trace::term_has_vars(t) || !t.sort().is_nat() {
                    continue;
                }
                if let TermNode::Bin(BinOp::Mod, _, t2, _) = t.node() {
                    let new = Formula::leq(t2.clone(), w.clone());
                    return Some(Step {
                        rule: "leqMod",
                        target: g.clone(),
                        after: Some(new.to_string()),
                        subst: None,
                        new_goals: self.with_replaced(g, &[new]),
                    });
                }
            }
        }
        None
    }

    /// leqIf: bound both branches (the max-of-placeholders conclusion is
    /// expressed as two comparisons against w).
    fn rule_leq_if(&mut self) -> Option<Step> {
        let mut hit = None;
        for g in &self.goals {
            if let FormulaNode::Leq(t, w) = g.node() {
                if !self.is_pvar(w) || !trace::term_has_vars(t) || !t.sort().is_nat() {
                    continue;
                }
                if let TermNode::Ite(_, t1, t2, _) = t.node() {
                    hit = Some((g.clone(), t1.clone(), t2.clone(), w.clone()));
                    break;
                }
            }
        }
        let (g, t1, t2, w) = hit?;
        let w1 = self.fresh_placeholder();
        let w2 = self.fresh_placeholder();
        let news = [
            Formula::leq(t1, w1.clone()),
            Formula::leq(t2, w2.clone()),
            Formula::leq(w1, w.clone()),
            Formula::leq(w2, w),
        ];
        Some(Step {
            rule: "leqIf",
            target: g.clone(),
            after: None,
            subst: None,
            new_goals: self.with_replaced(&g, &news),
        })
    }

    /// leqZMod: a field representative is bounded by the field order.
    fn rule_leq_zmod(&mut self) -> Result<Option<Step>> {
        for g in &self.goals {
            if let FormulaNode::Leq(t, w) = g.node() {
                if !self.is_pvar(w) {
                    continue;
                }
                if let TermNode::ToNat(arg) = t.node() {
                    if matches!(arg.node(), TermNode::Var(..)) {
                        let bound = Term::nat_const((self.prime - 1) as u128);
                        return Ok(Some(self.eliminate("leqZMod", g, w, &bound)?));
                    }
                }
            }
        }
        Ok(None)
    }

    /// leqBV: a bitvector value is bounded by 2^N - 1. Applies to any
    /// BV(N)-sorted operand, not just variables.
    fn rule_leq_bv(&mut self) -> Result<Option<Step>> {
        for g in &self.goals {
            if let FormulaNode::Leq(t, w) = g.node() {
                if !self.is_pvar(w) {
                    continue;
                }
                if let TermNode::BvToNat(arg) = t.node() {
                    if let Sort::Bv(n) = arg.sort() {
                        let clean = !arg
                            .free_vars()
                            .iter()
                            .any(|(v, _)| v.starts_with(PLACEHOLDER_PREFIX));
                        if n < 128 && clean {
                            let bound = Term::nat_const((1u128 << n) - 1);
                            return Ok(Some(self.eliminate("leqBV", g, w, &bound)?));
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    /// geNat: last resort for lower-bound goals; naturals are >= 0.
    fn rule_ge_nat(&mut self) -> Result<Option<Step>> {
        for g in &self.goals {
            if let FormulaNode::Leq(w, t) = g.node() {
                if self.is_pvar(w) && trace::term_has_vars(t) {
                    return Ok(Some(self.eliminate("geNat", g, w, &Term::nat_const(0))?));
                }
            }
        }
        Ok(None)
    }

    // -- predicates ---------------------------------------------------------

    fn is_pvar(&self, t: &Term) -> bool {
        matches!(t.node(), TermNode::Var(v, _) if v.starts_with(PLACEHOLDER_PREFIX))
    }

    /// The atom standing for `var` carries a hypothesis bound <= 1.
    fn bit_bounded_var(&self, var: &Term) -> bool {
        let atom = match var.sort() {
            Sort::Ff(_) => Term::to_nat(var.clone()),
            Sort::Nat => var.clone(),
            Sort::Bv(_) => Term::bv_to_nat(var.clone()),
            Sort::Bool => return false,
        };
        self.bit_bounded_atom(&atom)
    }

    fn bit_bounded_atom(&self, atom: &Term) -> bool {
        matches!(hyp_upper_bound(self.hyps, atom), Some(c) if c <= 1)
    }
}

// ---------------------------------------------------------------------------
// Pattern and hypothesis helpers
// ---------------------------------------------------------------------------

/// True iff `t` contains at least one variable and none of its variables is
/// a placeholder.
pub fn has_vars(t: &Term) -> bool {
    trace::term_has_vars(t)
}

/// True iff the formula contains exactly two distinct non-placeholder
/// variables.
pub fn two_orig_vars(f: &Formula) -> bool {
    trace::original_vars_of(f).len() == 2
}

/// True iff the formula contains a subtraction operator.
pub fn has_sub_formula(f: &Formula) -> bool {
    has_sub(f)
}

/// Decide a variable-free comparison by evaluation.
pub fn eval_const(f: &Formula) -> Result<bool> {
    if !f.free_vars().is_empty() {
        return Err(Error::Internal(format!("eval_const on open formula {f}")));
    }
    oracle::eval_formula(&normalize(f), &oracle::Assignment::new())
}

/// Tightest hypothesis upper bound `t <= C` for the (normalized) term.
pub fn hyp_upper_bound(hyps: &[Formula], t: &Term) -> Option<u128> {
    let mut best: Option<u128> = None;
    for h in hyps {
        if let FormulaNode::Leq(a, b) = h.node() {
            if a == t {
                if let Some(c) = b.as_const() {
                    best = Some(best.map_or(c, |x: u128| x.min(c)));
                }
            }
        }
    }
    best
}

/// Largest hypothesis lower bound `C <= t`.
pub fn hyp_lower_bound(hyps: &[Formula], t: &Term) -> Option<u128> {
    let mut best: Option<u128> = None;
    for h in hyps {
        if let FormulaNode::Leq(a, b) = h.node() {
            if b == t {
                if let Some(c) = a.as_const() {
                    best = Some(best.map_or(c, |x: u128| x.max(c)));
                }
            }
        }
    }
    best
}

fn has_sub(f: &Formula) -> bool {
    let mut found = false;
    f.visit_terms(&mut |t| {
        if matches!(t.node(), TermNode::Bin(BinOp::Sub, ..)) {
            found = true;
        }
    });
    found
}

fn formula_mentions(f: &Formula, t: &Term) -> bool {
    let mut found = false;
    f.visit_terms(&mut |s| {
        if s == t {
            found = true;
        }
    });
    found
}

fn const_of_sort(v: u128, sort: Sort, prime: u64) -> Term {
    match sort {
        Sort::Ff(_) => Term::ff_const(v, prime),
        Sort::Nat | Sort::Bool => Term::nat_const(v),
        Sort::Bv(n) => Term::bv_const(v, n),
    }
}

/// Matches `v*t1 + (1-v)*t2` (any operand arrangement); `v` must be an atom
/// (a variable or a conversion of one).
fn match_xor_encoding(t: &Term) -> Option<(Term, Term, Term)> {
    let TermNode::Bin(BinOp::Add, m1, m2, _) = t.node() else {
        return None;
    };
    for (ma, mb) in [(m1, m2), (m2, m1)] {
        let TermNode::Bin(BinOp::Mul, p, q, _) = ma.node() else {
            continue;
        };
        for (v, t1) in [(p, q), (q, p)] {
            if !is_atom(v) {
                continue;
            }
            let TermNode::Bin(BinOp::Mul, r, s, _) = mb.node() else {
                continue;
            };
            for (u, t2) in [(r, s), (s, r)] {
                if let TermNode::Bin(BinOp::Sub, one, v2, _) = u.node() {
                    if one.as_const() == Some(1) && v2 == v {
                        return Some((v.clone(), t1.clone(), t2.clone()));
                    }
                }
            }
        }
    }
    None
}

fn is_atom(t: &Term) -> bool {
    match t.node() {
        TermNode::Var(..) => true,
        TermNode::ToNat(a) | TermNode::BvToNat(a) => matches!(a.node(), TermNode::Var(..)),
        _ => false,
    }
}

/// Hypothesis-aware simplification applied to every goal on insertion:
/// decidable ite conditions fold away (ground conditions by evaluation, and
/// `t = 0` conditions certified by a hypothesis `t <= 0`).
fn prep(f: &Formula, hyps: &[Formula]) -> Formula {
    normalize(&fold_formula(&normalize(f), hyps))
}

fn fold_formula(f: &Formula, hyps: &[Formula]) -> Formula {
    match f.node() {
        FormulaNode::Bool(_) => f.clone(),
        FormulaNode::Eq(a, b) => Formula::eq(fold_term(a, hyps), fold_term(b, hyps)),
        FormulaNode::Leq(a, b) => Formula::leq(fold_term(a, hyps), fold_term(b, hyps)),
        FormulaNode::Geq(a, b) => Formula::geq(fold_term(a, hyps), fold_term(b, hyps)),
        FormulaNode::Conj(fs) => {
            Formula::conj(fs.iter().map(|g| fold_formula(g, hyps)).collect())
        }
    }
}

fn fold_term(t: &Term, hyps: &[Formula]) -> Term {
    match t.node() {
        TermNode::Const(..) | TermNode::Var(..) => t.clone(),
        TermNode::Bin(op, a, b, s) => Term::bin(*op, fold_term(a, hyps), fold_term(b, hyps), *s),
        TermNode::Ite(c, a, b, _) => {
            let c = fold_formula(c, hyps);
            let (a, b) = (fold_term(a, hyps), fold_term(b, hyps));
            match decide_cond(&c, hyps) {
                Some(true) => a,
                Some(false) => b,
                None => Term::ite(c, a, b),
            }
        }
        TermNode::ToNat(a) => Term::to_nat(fold_term(a, hyps)),
        TermNode::ToBv(n, a) => Term::to_bv(*n, fold_term(a, hyps)),
        TermNode::BvToNat(a) => Term::bv_to_nat(fold_term(a, hyps)),
    }
}

fn decide_cond(c: &Formula, hyps: &[Formula]) -> Option<bool> {
    if c.free_vars().is_empty() {
        return oracle::eval_formula(c, &oracle::Assignment::new()).ok();
    }
    // t = 0 with hypothesis t <= 0 over the naturals: the condition holds.
    if let FormulaNode::Eq(a, b) = c.node() {
        for (zero, t) in [(a, b), (b, a)] {
            if zero.as_const() == Some(0)
                && zero.sort().is_nat()
                && hyp_upper_bound(hyps, t) == Some(0)
            {
                return Some(true);
            }
        }
    }
    None
}

/// Goal sets equal up to a bijective renaming of placeholder variables.
/// Sets are tiny, so trying every pairing is fine.
pub fn goal_sets_equal_mod_placeholders(a: &[Formula], b: &[Formula]) -> bool {
    fn pvars_of(goals: &[Formula]) -> Vec<String> {
        let mut out = Vec::new();
        for g in goals {
            g.visit_terms(&mut |t| {
                if let TermNode::Var(v, _) = t.node() {
                    if v.starts_with(PLACEHOLDER_PREFIX) && !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            });
        }
        out
    }
    fn as_set(goals: &[Formula]) -> Vec<Formula> {
        let mut v: Vec<Formula> = goals.iter().map(normalize).collect();
        v.sort();
        v.dedup();
        v
    }
    let (pa, pb) = (pvars_of(a), pvars_of(b));
    if pa.len() != pb.len() {
        return false;
    }
    let target = as_set(b);
    // Try every assignment of a's placeholders onto b's.
    fn try_perm(
        a: &[Formula],
        pa: &[String],
        pb: &[String],
        used: &mut Vec<bool>,
        map: &mut Vec<usize>,
        target: &[Formula],
    ) -> bool {
        if map.len() == pa.len() {
            let mut renamed: Vec<Formula> = a.to_vec();
            // Two phases to avoid collisions.
            for (i, from) in pa.iter().enumerate() {
                let f = Term::var(from.clone(), Sort::Nat);
                let t = Term::var(format!("{PLACEHOLDER_PREFIX}#tmp{i}"), Sort::Nat);
                renamed = renamed
                    .iter()
                    .map(|g| substitute(g, &f, &t).expect("rename"))
                    .collect();
            }
            for (i, &j) in map.iter().enumerate() {
                let f = Term::var(format!("{PLACEHOLDER_PREFIX}#tmp{i}"), Sort::Nat);
                let t = Term::var(pb[j].clone(), Sort::Nat);
                renamed = renamed
                    .iter()
                    .map(|g| substitute(g, &f, &t).expect("rename"))
                    .collect();
            }
            let mut set: Vec<Formula> = renamed;
            set.sort();
            set.dedup();
            return set == target;
        }
        for j in 0..pb.len() {
            if !used[j] {
                used[j] = true;
                map.push(j);
                if try_perm(a, pa, pb, used, map, target) {
                    return true;
                }
                map.pop();
                used[j] = false;
            }
        }
        false
    }
    if pa.is_empty() {
        return as_set(a) == target;
    }
    let mut used = vec![false; pb.len()];
    let mut map = Vec::new();
    try_perm(a, &pa, &pb, &mut used, &mut map, &target)
}

/// Rename placeholders to %w1, %w2, ... in first-occurrence order so goal
/// sets can be compared up to placeholder naming.
pub fn canonicalize_placeholders(goals: &[Formula]) -> Vec<Formula> {
    let mut order: Vec<String> = Vec::new();
    for g in goals {
        g.visit_terms(&mut |t| {
            if let TermNode::Var(v, _) = t.node() {
                if v.starts_with(PLACEHOLDER_PREFIX) && !order.contains(v) {
                    order.push(v.clone());
                }
            }
        });
    }
    let mut out: Vec<Formula> = goals.to_vec();
    // Two phases so renumbering cannot collide with existing names.
    for (i, v) in order.iter().enumerate() {
        let from = Term::var(v.clone(), Sort::Nat);
        let to = Term::var(format!("{PLACEHOLDER_PREFIX}tmp{i}"), Sort::Nat);
        out = out
            .iter()
            .map(|g| substitute(g, &from, &to).expect("rename"))
            .collect();
    }
    for i in 0..order.len() {
        let from = Term::var(format!("{PLACEHOLDER_PREFIX}tmp{i}"), Sort::Nat);
        let to = Term::var(format!("{PLACEHOLDER_PREFIX}{}", i + 1), Sort::Nat);
        out = out
            .iter()
            .map(|g| substitute(g, &from, &to).expect("rename"))
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Tracer;

    fn env_parts() -> (Tracer, Deadline, EntailmentEngine) {
        (Tracer::new(), Deadline::unlimited(), EntailmentEngine::new())
    }

    fn tonat(name: &str, p: u64) -> Term {
        Term::to_nat(Term::var(name, Sort::Ff(p)))
    }

    fn bit_bounds(p: u64) -> Vec<Formula> {
        vec![
            normalize(&Formula::leq(tonat("x0", p), Term::nat_const(1))),
            normalize(&Formula::leq(tonat("y0", p), Term::nat_const(1))),
        ]
    }

    #[test]
    fn worked_derivation_snapshots() {
        // toNat(x0) + toNat(y0) <= 6 under bit bounds walks through the
        // four-state derivation ending in 1+1 <= 6.
        let p = 7;
        let hyps = bit_bounds(p);
        let goal = Formula::leq(
            Term::add(tonat("x0", p), tonat("y0", p)),
            Term::nat_const(6),
        );
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        let out = analyze(&goal, &hyps, p, true, true, &mut env).unwrap();
        assert!(out.proved);

        let w1 = Term::var("%w1", Sort::Nat);
        let w2 = Term::var("%w2", Sort::Nat);
        let w3 = Term::var("%w3", Sort::Nat);
        let one_plus_one = Term::add(Term::nat_const(1), Term::nat_const(1));
        let g1 = vec![
            normalize(&Formula::leq(
                Term::add(tonat("x0", p), tonat("y0", p)),
                w1.clone(),
            )),
            normalize(&Formula::geq(Term::nat_const(6), w1.clone())),
        ];
        let g2 = vec![
            normalize(&Formula::leq(tonat("x0", p), w2.clone())),
            normalize(&Formula::leq(tonat("y0", p), w3.clone())),
            normalize(&Formula::leq(Term::add(w2, w3), w1.clone())),
            normalize(&Formula::leq(w1.clone(), Term::nat_const(6))),
        ];
        let g3 = vec![
            normalize(&Formula::leq(one_plus_one.clone(), w1.clone())),
            normalize(&Formula::leq(w1, Term::nat_const(6))),
        ];
        let g4 = vec![normalize(&Formula::leq(one_plus_one, Term::nat_const(6)))];

        for expected in [g1, g2, g3, g4] {
            assert!(
                out.snapshots
                    .iter()
                    .any(|s| goal_sets_equal_mod_placeholders(s, &expected)),
                "missing state {expected:?} in {:?}",
                out.snapshots
            );
        }
    }

    #[test]
    fn dependency_goal_needs_case_split() {
        // toNat(x0*y0) <= toNat(x0+y0) after distribution:
        // toNat(x0)*toNat(y0) <= toNat(x0)+toNat(y0).
        let p = 7;
        let hyps = bit_bounds(p);
        let goal = Formula::leq(
            Term::mul(tonat("x0", p), tonat("y0", p)),
            Term::add(tonat("x0", p), tonat("y0", p)),
        );
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        assert!(analyze_goal(&goal, &hyps, p, true, &mut env).unwrap());
        assert!(env.tracer.trace.count("ineqCases") >= 1);
        // Without case splits the same goal is not provable.
        let (mut tracer2, deadline2, mut engine2) = env_parts();
        let mut env2 = Env::new(&mut tracer2, &deadline2, &mut engine2, false);
        assert!(!analyze_goal(&goal, &hyps, p, false, &mut env2).unwrap());
    }

    #[test]
    fn unbounded_variable_goal_fails_honestly() {
        // toNat(x) <= 1 with no hypotheses: leqZMod only gives <= 6.
        let p = 7;
        let goal = Formula::leq(tonat("x", p), Term::nat_const(1));
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        assert!(!analyze_goal(&goal, &[], p, true, &mut env).unwrap());
        // The oracle agrees the goal is actually falsifiable (x = 2).
        assert!(!oracle::entails(&[], &normalize(&goal), oracle::DEFAULT_BUDGET).unwrap());
    }

    #[test]
    fn strengthening_rules() {
        let p = 7;
        // t1 - t2 <= w decomposes by dropping the subtrahend.
        let a = Term::var("a", Sort::Nat);
        let hyps = vec![normalize(&Formula::leq(a.clone(), Term::nat_const(3)))];
        let goal = Formula::leq(
            Term::sub(a.clone(), Term::nat_const(1)),
            Term::nat_const(5),
        );
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        assert!(analyze_goal(&goal, &hyps, p, true, &mut env).unwrap());
        assert_eq!(env.tracer.trace.count("leqSub"), 1);

        // t1 mod t2 <= w keeps only the modulus bound.
        let goal = Formula::leq(
            Term::modulo(Term::var("b", Sort::Nat), Term::nat_const(4)),
            Term::nat_const(5),
        );
        let (mut tracer2, deadline2, mut engine2) = env_parts();
        let mut env2 = Env::new(&mut tracer2, &deadline2, &mut engine2, true);
        assert!(analyze_goal(&goal, &[], p, true, &mut env2).unwrap());
        assert_eq!(env2.tracer.trace.count("leqMod"), 1);
    }

    #[test]
    fn xor_rewrite_and_hyp_fold() {
        let p = 7;
        let v = Term::var("v", Sort::Nat);
        let a = Term::var("a", Sort::Nat);
        let b = Term::var("b", Sort::Nat);
        let lhs = Term::add(
            Term::mul(v.clone(), a.clone()),
            Term::mul(Term::sub(Term::nat_const(1), v.clone()), b.clone()),
        );
        let hyps = vec![
            normalize(&Formula::leq(v.clone(), Term::nat_const(0))),
            normalize(&Formula::leq(a.clone(), Term::nat_const(9))),
            normalize(&Formula::leq(b.clone(), Term::nat_const(2))),
        ];
        let goal = Formula::leq(lhs, Term::nat_const(5));
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        // v <= 0 fixes v = 0: the ite folds to b, and b <= 2 <= 5 closes.
        let out = analyze(&goal, &hyps, p, true, true, &mut env).unwrap();
        assert!(out.proved);
        assert_eq!(env.tracer.trace.count("ineqXOR"), 1);
        // Oracle cross-check of the original claim.
        assert!(oracle::entails(&hyps, &normalize(&goal), oracle::DEFAULT_BUDGET).unwrap());
    }

    #[test]
    fn xor_rewrite_requires_bit_bound() {
        let p = 7;
        let v = Term::var("v", Sort::Nat);
        let lhs = Term::add(
            Term::mul(v.clone(), Term::nat_const(3)),
            Term::mul(Term::sub(Term::nat_const(1), v.clone()), Term::nat_const(2)),
        );
        let goal = Formula::leq(lhs, Term::nat_const(5));
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        let _ = analyze_goal(&goal, &[], p, true, &mut env).unwrap();
        assert_eq!(env.tracer.trace.count("ineqXOR"), 0);
    }

    #[test]
    fn case_split_premises() {
        let p = 7;
        // Three original variables: no case split.
        let hyps = vec![
            normalize(&Formula::leq(tonat("x0", p), Term::nat_const(1))),
            normalize(&Formula::leq(tonat("y0", p), Term::nat_const(1))),
            normalize(&Formula::leq(tonat("z0", p), Term::nat_const(1))),
        ];
        let goal = Formula::leq(
            Term::sub(
                Term::add(Term::add(tonat("x0", p), tonat("y0", p)), tonat("z0", p)),
                tonat("x0", p),
            ),
            Term::nat_const(0),
        );
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        let _ = analyze_goal(&goal, &hyps, p, true, &mut env).unwrap();
        assert_eq!(env.tracer.trace.count("ineqCases"), 0);

        // Variables on one side only and no subtraction: no dependency flag.
        let goal2 = Formula::leq(
            Term::add(tonat("x0", p), tonat("y0", p)),
            Term::nat_const(2),
        );
        let (mut tracer2, deadline2, mut engine2) = env_parts();
        let mut env2 = Env::new(&mut tracer2, &deadline2, &mut engine2, true);
        assert!(analyze_goal(&goal2, &hyps, p, true, &mut env2).unwrap());
        assert_eq!(env2.tracer.trace.count("ineqCases"), 0);
    }

    #[test]
    fn helper_predicates() {
        let p = 7;
        // HasVars(toNat(x0) + 1) holds; HasVars(w1 + 1) does not.
        assert!(has_vars(&Term::add(tonat("x0", p), Term::nat_const(1))));
        let w1 = Term::var("%w1", Sort::Nat);
        assert!(!has_vars(&Term::add(w1, Term::nat_const(1))));
        assert!(!has_vars(&Term::nat_const(3)));

        // twoOrigVars on the dependency inequality.
        let dep = Formula::leq(
            Term::mul(tonat("x0", p), tonat("y0", p)),
            Term::add(tonat("x0", p), tonat("y0", p)),
        );
        assert!(two_orig_vars(&dep));
        assert!(!has_sub_formula(&dep));
        let with_sub = Formula::leq(
            Term::sub(tonat("x0", p), tonat("y0", p)),
            Term::nat_const(1),
        );
        assert!(has_sub_formula(&with_sub));

        // eval_const closes ground comparisons: 1+1 <= 7-1.
        let lhs = Term::add(Term::nat_const(1), Term::nat_const(1));
        let rhs = Term::sub(Term::nat_const(7), Term::nat_const(1));
        assert!(eval_const(&Formula::leq(lhs, rhs)).unwrap());
        assert!(!eval_const(&Formula::leq(Term::nat_const(5), Term::nat_const(4))).unwrap());
        assert!(eval_const(&Formula::geq(Term::nat_const(0), Term::nat_const(0))).unwrap());
    }

    #[test]
    fn coexisting_bounds_use_the_tightest() {
        // A loose bound from addBds and a tight bit bound may both be in H;
        // ineqHyp instantiates from the tighter one.
        let p = 7;
        let hyps = vec![
            normalize(&Formula::leq(tonat("x0", p), Term::nat_const(6))),
            normalize(&Formula::leq(tonat("x0", p), Term::nat_const(1))),
        ];
        let goal = Formula::leq(tonat("x0", p), Term::nat_const(1));
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        assert!(analyze_goal(&goal, &hyps, p, true, &mut env).unwrap());
    }

    #[test]
    fn measures_decrease() {
        let p = 7;
        let hyps = bit_bounds(p);
        let goal = Formula::leq(
            Term::mul(tonat("x0", p), tonat("y0", p)),
            Term::add(tonat("x0", p), tonat("y0", p)),
        );
        let (mut tracer, deadline, mut engine) = env_parts();
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, true);
        let _ = analyze_goal(&goal, &hyps, p, true, &mut env).unwrap();
        assert!(env.tracer.trace.first_violation().is_none());
    }
}
