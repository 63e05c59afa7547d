//! Pipeline driver: runs the four phases (field-to-natural translation,
//! range analysis of goal inequalities, natural-to-bitvector translation,
//! bit-blasting) and assembles the verdict.
//!
//! Goal inequalities are processed before bitvector conversion: any
//! natural-number inequality among the goals must be discharged by range
//! analysis, and a failure short-circuits to unknown (optionally upgraded to
//! invalid when the enumeration oracle refutes the original problem).

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::bitblast;
use crate::ff2nat;
use crate::nat2bv;
use crate::oracle::{self, Assignment};
use crate::parse::{print_formula, Problem};
use crate::range::{self, AuditEntry, EntailmentEngine, Env};
use crate::sat::SatResult;
use crate::term::FormulaNode;
use crate::trace::{RuleTrace, Tracer};
use crate::{Deadline, Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum VerdictStatus {
    Valid,
    Invalid,
    Unknown,
}

impl VerdictStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            VerdictStatus::Valid => 0,
            VerdictStatus::Invalid => 1,
            VerdictStatus::Unknown => 2,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleCheck {
    /// Consult the oracle when the assignment space fits the budget.
    Auto,
    On,
    Off,
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub timeout: Option<Duration>,
    pub memory_mb: Option<u64>,
    /// False disables the case-split rules inside translation-stage
    /// entailment queries, forcing the overflow-safe rule variants.
    pub case_splits: bool,
    pub oracle_check: OracleCheck,
    pub oracle_budget: u128,
    pub dimacs_out: Option<std::path::PathBuf>,
    pub dimacs_model: Option<std::path::PathBuf>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            timeout: Some(Duration::from_secs(300)),
            memory_mb: Some(8192),
            case_splits: true,
            oracle_check: OracleCheck::Auto,
            oracle_budget: oracle::DEFAULT_BUDGET,
            dimacs_out: None,
            dimacs_model: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StageTimings {
    pub to_nat: Duration,
    pub range_analysis: Duration,
    pub to_bv: Duration,
    pub bit_blast: Duration,
}

/// The pipeline outcome: status, optional oracle-confirmed counterexample,
/// the full rule trace, per-stage timings and rule counts.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub counterexample: Option<Assignment>,
    pub trace: RuleTrace,
    pub timings: StageTimings,
    pub rule_counts: BTreeMap<String, u64>,
    /// Pretty-printed formulas range analysis could not discharge.
    pub unsolved: Vec<String>,
    pub note: Option<String>,
}

/// Extra observability for tests and tooling.
#[derive(Debug, Default)]
pub struct RunDiagnostics {
    pub audit: Vec<AuditEntry>,
    pub width: Option<u32>,
}

pub fn run_pipeline(problem: &Problem, opts: &PipelineOptions) -> Result<Verdict> {
    run_pipeline_full(problem, opts).map(|(v, _)| v)
}

pub fn run_pipeline_full(
    problem: &Problem,
    opts: &PipelineOptions,
) -> Result<(Verdict, RunDiagnostics)> {
    let deadline = Deadline::new(opts.timeout);
    let mut tracer = Tracer::new();
    let mut engine = EntailmentEngine::new();
    let mut timings = StageTimings::default();
    let mut diag = RunDiagnostics::default();

    let mut pc = problem.to_context();
    pc.sort_check_all()?;
    pc.check_var_partition()?;

    // Phase 1: translate field terms to the naturals.
    let t0 = Instant::now();
    let range_in_phase1;
    {
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, opts.case_splits);
        ff2nat::to_nat_strategy(&mut pc, &mut env)?;
        range_in_phase1 = Duration::from_nanos(env.range_nanos as u64);
    }
    let wall1 = t0.elapsed();
    timings.to_nat = wall1.saturating_sub(range_in_phase1);
    timings.range_analysis += range_in_phase1;
    check_memory(opts, "to-nat")?;
    ff2nat::assert_pure_nat(&pc)?;
    pc.check_var_partition()?;

    // Phase 2: discharge natural-number inequality goals.
    let t1 = Instant::now();
    let mut unsolved: Vec<String> = Vec::new();
    {
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, opts.case_splits);
        for g in pc.goals.clone() {
            let is_nat_ineq =
                matches!(g.node(), FormulaNode::Leq(a, _) if a.sort().is_nat());
            let is_false = matches!(g.node(), FormulaNode::Bool(false));
            if is_false {
                unsolved.push(print_formula(&g));
                continue;
            }
            if !is_nat_ineq {
                continue;
            }
            // Goal-level analysis always keeps case splits available; the
            // --no-case-splits ablation restricts translation premises only.
            if range::analyze_goal(&g, &pc.hyps, pc.prime, true, &mut env)? {
                pc.goals.retain(|x| *x != g);
            } else {
                unsolved.push(print_formula(&g));
            }
        }
    }
    timings.range_analysis += t1.elapsed();
    check_memory(opts, "range-analysis")?;

    if !unsolved.is_empty() {
        let verdict = unknown_or_refuted(
            problem,
            opts,
            tracer,
            timings,
            unsolved,
            "range analysis left goal inequalities undischarged",
            &mut engine,
        )?;
        diag.audit = std::mem::take(&mut engine.audit);
        return Ok((verdict, diag));
    }

    // Phase 3: translate the remaining naturals to bitvectors.
    let t2 = Instant::now();
    let range_in_phase3;
    let width;
    {
        let mut env = Env::new(&mut tracer, &deadline, &mut engine, opts.case_splits);
        width = nat2bv::to_bv_strategy(&mut pc, &mut env)?;
        range_in_phase3 = Duration::from_nanos(env.range_nanos as u64);
    }
    diag.width = Some(width);
    let wall3 = t2.elapsed();
    timings.to_bv = wall3.saturating_sub(range_in_phase3);
    timings.range_analysis += range_in_phase3;
    check_memory(opts, "to-bv")?;
    pc.check_var_partition()?;

    if let Err(Error::Unsupported(what)) = nat2bv::scan_pure_bv(&pc) {
        let verdict = unknown_or_refuted(
            problem,
            opts,
            tracer,
            timings,
            vec![what.clone()],
            "translation left non-bitvector goals",
            &mut engine,
        )?;
        diag.audit = std::mem::take(&mut engine.audit);
        return Ok((verdict, diag));
    }

    // Phase 4: bit-blast the negated goal conjunction.
    let t3 = Instant::now();
    let circuit = bitblast::lower(&pc)?;
    if let Some(path) = &opts.dimacs_out {
        std::fs::write(path, bitblast::circuit_to_dimacs(&circuit))?;
    }
    let sat = match &opts.dimacs_model {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            match bitblast::model_from_dimacs(&circuit, &text)? {
                Some(model) => SatResult::Sat(model),
                None => SatResult::Unsat,
            }
        }
        None => bitblast::sat_solve(&circuit, &deadline)?,
    };
    timings.bit_blast = t3.elapsed();
    check_memory(opts, "bit-blasting")?;

    let (status, counterexample, note) = match sat {
        SatResult::Unsat => (VerdictStatus::Valid, None, None),
        SatResult::Sat(model) => {
            let lifted = bitblast::lift_countermodel(&circuit, &model, &problem.decls)?;
            if oracle_enabled(opts)
                && oracle::falsifies(&problem.hyps, &problem.goals, &lifted)?
            {
                (VerdictStatus::Invalid, Some(lifted), None)
            } else {
                let note = if oracle_enabled(opts) {
                    "bit-level countermodel did not refute the original problem"
                } else {
                    "countermodel found; oracle validation disabled"
                };
                (VerdictStatus::Unknown, None, Some(note.to_string()))
            }
        }
    };

    let rule_counts = count_rules(&tracer.trace);
    diag.audit = std::mem::take(&mut engine.audit);
    Ok((
        Verdict {
            status,
            counterexample,
            trace: tracer.trace,
            timings,
            rule_counts,
            unsolved: Vec::new(),
            note,
        },
        diag,
    ))
}

fn oracle_enabled(opts: &PipelineOptions) -> bool {
    !matches!(opts.oracle_check, OracleCheck::Off)
}

/// Unknown paths consult the oracle on the original problem when allowed
/// and feasible; only an oracle-confirmed witness upgrades to invalid.
#[allow(clippy::too_many_arguments)]
fn unknown_or_refuted(
    problem: &Problem,
    opts: &PipelineOptions,
    tracer: Tracer,
    timings: StageTimings,
    unsolved: Vec<String>,
    why: &str,
    _engine: &mut EntailmentEngine,
) -> Result<Verdict> {
    let mut status = VerdictStatus::Unknown;
    let mut counterexample = None;
    let mut note = Some(why.to_string());
    if oracle_enabled(opts) {
        match oracle::check_validity(&problem.hyps, &problem.goals, opts.oracle_budget) {
            Ok(oracle::Validity::Invalid(w)) => {
                status = VerdictStatus::Invalid;
                counterexample = Some(w);
                note = Some(format!("{why}; oracle refuted the original problem"));
            }
            Ok(oracle::Validity::Valid) => {
                note = Some(format!(
                    "{why}; oracle confirms validity but the calculus could not prove it"
                ));
            }
            Err(Error::BudgetExceeded(_)) => {
                note = Some(format!("{why}; oracle check infeasible at this size"));
            }
            Err(e) => return Err(e),
        }
    }
    let rule_counts = count_rules(&tracer.trace);
    Ok(Verdict {
        status,
        counterexample,
        trace: tracer.trace,
        timings,
        rule_counts,
        unsolved,
        note,
    })
}

fn count_rules(trace: &RuleTrace) -> BTreeMap<String, u64> {
    trace
        .rule_counts()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

fn check_memory(opts: &PipelineOptions, stage: &str) -> Result<()> {
    let Some(limit) = opts.memory_mb else {
        return Ok(());
    };
    if let Some(rss) = rss_mb() {
        if rss > limit {
            return Err(Error::MemoryExceeded(stage.to_string()));
        }
    }
    Ok(())
}

/// Resident set size in MiB, when the platform exposes it.
fn rss_mb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb / 1024);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReportFormat {
    Human,
    Lines,
}

/// Render a verdict. The human format shows status, the four stage timings,
/// and rule-application counts; the machine format is line-oriented
/// key=value pairs.
pub fn emit_report(v: &Verdict, format: ReportFormat) -> String {
    match format {
        ReportFormat::Human => {
            let mut s = String::new();
            s.push_str(&format!("status: {}\n", status_str(v.status)));
            s.push_str("stage timings:\n");
            s.push_str(&format!(
                "  translation to naturals:   {:>10.3} ms\n",
                v.timings.to_nat.as_secs_f64() * 1e3
            ));
            s.push_str(&format!(
                "  range analysis:            {:>10.3} ms\n",
                v.timings.range_analysis.as_secs_f64() * 1e3
            ));
            s.push_str(&format!(
                "  translation to bitvectors: {:>10.3} ms\n",
                v.timings.to_bv.as_secs_f64() * 1e3
            ));
            s.push_str(&format!(
                "  bit blasting:              {:>10.3} ms\n",
                v.timings.bit_blast.as_secs_f64() * 1e3
            ));
            let total: u64 = v.rule_counts.values().sum();
            s.push_str(&format!("rule applications: {total}\n"));
            for (rule, n) in &v.rule_counts {
                s.push_str(&format!("  {rule}: {n}\n"));
            }
            if let Some(cex) = &v.counterexample {
                s.push_str("counterexample:\n");
                for (var, val) in cex {
                    s.push_str(&format!("  {var} = {val}\n"));
                }
            }
            if !v.unsolved.is_empty() {
                s.push_str("undischarged:\n");
                for u in &v.unsolved {
                    s.push_str(&format!("  {u}\n"));
                }
            }
            if let Some(n) = &v.note {
                s.push_str(&format!("note: {n}\n"));
            }
            s
        }
        ReportFormat::Lines => {
            let mut s = String::new();
            s.push_str(&format!("status={}\n", status_str(v.status)));
            s.push_str(&format!("time_to_nat_ms={}\n", v.timings.to_nat.as_millis()));
            s.push_str(&format!(
                "time_range_ms={}\n",
                v.timings.range_analysis.as_millis()
            ));
            s.push_str(&format!("time_to_bv_ms={}\n", v.timings.to_bv.as_millis()));
            s.push_str(&format!(
                "time_bitblast_ms={}\n",
                v.timings.bit_blast.as_millis()
            ));
            let total: u64 = v.rule_counts.values().sum();
            s.push_str(&format!("rules_total={total}\n"));
            for (rule, n) in &v.rule_counts {
                s.push_str(&format!("rule.{rule}={n}\n"));
            }
            if let Some(cex) = &v.counterexample {
                for (var, val) in cex {
                    s.push_str(&format!("cex.{var}={val}\n"));
                }
            }
            for (i, u) in v.unsolved.iter().enumerate() {
                s.push_str(&format!("unsolved.{i}={u}\n"));
            }
            if let Some(n) = &v.note {
                s.push_str(&format!("note={n}\n"));
            }
            s
        }
    }
}

fn status_str(s: VerdictStatus) -> &'static str {
    match s {
        VerdictStatus::Valid => "valid",
        VerdictStatus::Invalid => "invalid",
        VerdictStatus::Unknown => "unknown",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_problem;

    fn opts() -> PipelineOptions {
        PipelineOptions::default()
    }

    #[test]
    fn trivial_equality_is_valid() {
        let p = parse_problem("(set-field 7) (goal (= 0 0))").unwrap();
        let v = run_pipeline(&p, &opts()).unwrap();
        assert_eq!(v.status, VerdictStatus::Valid);
    }

    #[test]
    fn unconstrained_equality_is_invalid_with_witness_zero() {
        let p = parse_problem("(set-field 7) (declare-ff x) (goal (= (to-nat x) 3))").unwrap();
        let v = run_pipeline(&p, &opts()).unwrap();
        assert_eq!(v.status, VerdictStatus::Invalid);
        let cex = v.counterexample.expect("counterexample");
        assert_eq!(cex["x"], 0);
    }

    #[test]
    fn field_bound_goal_is_valid() {
        let p = parse_problem("(set-field 7) (declare-ff x) (goal (<= (to-nat x) 6))").unwrap();
        let v = run_pipeline(&p, &opts()).unwrap();
        assert_eq!(v.status, VerdictStatus::Valid);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let text = "(set-field 7) (declare-ff x) (declare-ff y)\n\
                    (assert-hyp (<= (to-nat x) 1)) (assert-hyp (<= (to-nat y) 1))\n\
                    (goal (= (* x x) (* y y)))";
        let p = parse_problem(text).unwrap();
        let v1 = run_pipeline(&p, &opts()).unwrap();
        let v2 = run_pipeline(&p, &opts()).unwrap();
        assert_eq!(v1.status, v2.status);
        assert_eq!(v1.counterexample, v2.counterexample);
        let steps1: Vec<_> = v1.trace.entries.iter().map(|e| (e.rule, e.target.clone())).collect();
        let steps2: Vec<_> = v2.trace.entries.iter().map(|e| (e.rule, e.target.clone())).collect();
        assert_eq!(steps1, steps2);
    }

    #[test]
    fn cube_against_bitvector_remainder() {
        // The cube of a field element compared against the same computation
        // done in 9-bit bitvector arithmetic with an explicit remainder:
        // exercises the width-inflation path (b = 9) and the remainder
        // circuit end to end.
        let text = "\
(set-field 7)
(declare-ff x)
(declare-bv v 9)
(assert-hyp (= v (to-bv 9 (to-nat x))))
(goal (= (to-bv 9 (to-nat (* x x x))) (mod (* v v v) 7)))";
        let p = parse_problem(text).unwrap();
        let v = run_pipeline(&p, &opts()).unwrap();
        assert_eq!(v.status, VerdictStatus::Valid);
        assert!(v.rule_counts.contains_key("distBVMod"));
    }

    #[test]
    fn cube_with_wrong_remainder_is_refuted() {
        let text = "\
(set-field 7)
(declare-ff x)
(declare-bv v 9)
(assert-hyp (= v (to-bv 9 (to-nat x))))
(goal (= (to-bv 9 (to-nat (* x x x))) (mod (* v v) 7)))";
        let p = parse_problem(text).unwrap();
        let v = run_pipeline(&p, &opts()).unwrap();
        assert_eq!(v.status, VerdictStatus::Invalid);
        let cex = v.counterexample.unwrap();
        // x^3 mod 7 != x^2 mod 7 at the witness.
        let x = cex["x"];
        assert_ne!((x * x * x) % 7, (x * x) % 7);
    }

    #[test]
    fn selector_encoding_goal_uses_xor_rewrite() {
        // s*a + (1-s)*b <= 6 with a bit-bounded selector: discharged by the
        // xor rewrite plus branch bounding, no bit-blasting needed.
        let text = "\
(set-field 7)
(declare-ff s) (declare-ff a) (declare-ff b)
(assert-hyp (<= (to-nat s) 1))
(goal (<= (+ (* (to-nat s) (to-nat a)) (* (- 1 (to-nat s)) (to-nat b))) 6))";
        let p = parse_problem(text).unwrap();
        let v = run_pipeline(&p, &opts()).unwrap();
        assert_eq!(v.status, VerdictStatus::Valid);
        assert!(v.rule_counts.contains_key("ineqXOR"));
        assert!(v.rule_counts.contains_key("leqIf"));
    }

    #[test]
    fn unbounded_natural_equality_is_unknown() {
        // An equality over an unbounded natural cannot be injected into
        // bitvectors; the honest verdict is unknown with a note.
        let mut o = opts();
        o.oracle_check = OracleCheck::Off;
        let p = parse_problem("(set-field 7) (declare-nat n) (goal (= n n))").unwrap();
        let v = run_pipeline(&p, &o).unwrap();
        assert_eq!(v.status, VerdictStatus::Unknown);
        assert!(v.note.is_some());
    }

    #[test]
    fn report_formats() {
        let p = parse_problem("(set-field 7) (goal (= 0 0))").unwrap();
        let v = run_pipeline(&p, &opts()).unwrap();
        let human = emit_report(&v, ReportFormat::Human);
        assert!(human.contains("status: valid"));
        // All four pipeline stages are listed.
        for stage in [
            "translation to naturals",
            "range analysis",
            "translation to bitvectors",
            "bit blasting",
        ] {
            assert!(human.contains(stage), "missing stage {stage}");
        }
        let lines = emit_report(&v, ReportFormat::Lines);
        assert!(lines.contains("status=valid\n"));
        for key in ["time_to_nat_ms=", "time_range_ms=", "time_to_bv_ms=", "time_bitblast_ms="] {
            assert!(lines.contains(key), "missing key {key}");
        }
    }

    #[test]
    fn unknown_when_oracle_disabled() {
        let mut o = opts();
        o.oracle_check = OracleCheck::Off;
        let p = parse_problem("(set-field 7) (declare-ff x) (goal (= (to-nat x) 3))").unwrap();
        let v = run_pipeline(&p, &o).unwrap();
        assert_eq!(v.status, VerdictStatus::Unknown);
        assert!(v.counterexample.is_none());
    }
}
