//! Property suites over random terms and problems.

use proptest::prelude::*;

use fieldblast::bench::{gen_random, RandomSpec};
use fieldblast::oracle;
use fieldblast::parse::{normalized, parse_problem, pretty_problem};
use fieldblast::term::{
    normalize, normalize_term, sort_check_formula, substitute, subterm_occurs, Formula, Sort,
    Term,
};

const P: u64 = 7;

fn ff_leaf() -> impl Strategy<Value = Term> {
    prop_oneof![
        (0u128..P as u128).prop_map(|c| Term::ff_const(c, P)),
        prop_oneof![Just("a"), Just("b"), Just("c")]
            .prop_map(|n| Term::var(n, Sort::Ff(P))),
    ]
}

fn ff_term() -> impl Strategy<Value = Term> {
    ff_leaf().prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::mul(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Term::sub(a, b)),
        ]
    })
}

fn ff_formula() -> impl Strategy<Value = Formula> {
    (ff_term(), ff_term()).prop_map(|(a, b)| Formula::eq(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// normalize is idempotent.
    #[test]
    fn normalize_is_idempotent(f in ff_formula()) {
        let once = normalize(&f);
        prop_assert_eq!(normalize(&once), once);
    }

    /// Normalization preserves meaning under every assignment.
    #[test]
    fn normalize_preserves_evaluation(
        t in ff_term(),
        va in 0u128..P as u128,
        vb in 0u128..P as u128,
        vc in 0u128..P as u128,
    ) {
        let a: oracle::Assignment = [
            ("a".to_string(), va),
            ("b".to_string(), vb),
            ("c".to_string(), vc),
        ].into_iter().collect();
        prop_assert_eq!(
            oracle::eval_term(&t, &a).unwrap(),
            oracle::eval_term(&normalize_term(&t), &a).unwrap()
        );
    }

    /// Substituting a fresh term for a variable eliminates every occurrence.
    #[test]
    fn substitution_eliminates_occurrences(f in ff_formula()) {
        let v = Term::var("a", Sort::Ff(P));
        let replacement = Term::ff_const(3, P); // does not contain `a`
        let g = substitute(&f, &v, &replacement).unwrap();
        prop_assert!(!subterm_occurs(&g, &v));
    }

    /// Substitute-then-evaluate equals evaluate-under-extended-assignment.
    #[test]
    fn substitution_commutes_with_eval(
        f in ff_formula(),
        va in 0u128..P as u128,
        vb in 0u128..P as u128,
        vc in 0u128..P as u128,
    ) {
        let v = Term::var("a", Sort::Ff(P));
        let g = substitute(&f, &v, &Term::ff_const(va, P)).unwrap();
        let partial: oracle::Assignment = [
            ("b".to_string(), vb),
            ("c".to_string(), vc),
        ].into_iter().collect();
        let mut full = partial.clone();
        full.insert("a".to_string(), va);
        prop_assert_eq!(
            oracle::eval_formula(&g, &partial).unwrap(),
            oracle::eval_formula(&normalize(&f), &full).unwrap()
        );
    }

    /// Generated problems pretty-print and parse back to the same problem.
    #[test]
    fn problems_roundtrip(seed in  0u64..4096) {
        let spec = RandomSpec {
            seed,
            prime: [5, 7, 13][(seed % 3) as usize],
            var_count: 1 + (seed % 3) as u32,
            depth: (seed % 5) as u32,
        };
        let p = gen_random(&spec);
        for f in p.hyps.iter().chain(&p.goals) {
            sort_check_formula(f).unwrap();
        }
        let q = parse_problem(&pretty_problem(&p)).unwrap();
        prop_assert_eq!(normalized(&p), normalized(&q));
    }
}
