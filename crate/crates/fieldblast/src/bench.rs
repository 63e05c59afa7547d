//! Problem generators: the bitwise-or arithmetization family used by the
//! acceptance suite, and seeded random contexts for the property suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::parse::Problem;
use crate::term::{Formula, Sort, Term};
use crate::{Error, Result};

pub use crate::term::least_prime_above;

/// Per-bit combination used in the generated polynomial. `Or` is the
/// correct encoding x + y - x*y; `BuggyPlus` flips the sign (x + y + x*y),
/// a deliberately broken arithmetization for sensitivity tests.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum JoltSign {
    Or,
    BuggyPlus,
}

/// The B-bit bitwise-or verification problem over FF(p): per-bit slice
/// variables bv1_i, bv2_i tied to field bits x_i, y_i, a value-level
/// equality between the bitvector or and the field polynomial
/// sum(2^i * (x_i + y_i - x_i*y_i)), and the range goal that the polynomial
/// fits B bits.
pub fn gen_jolt_or(bits: u32, p: u64) -> Result<Problem> {
    jolt_or_with_sign(bits, p, JoltSign::Or)
}

pub fn jolt_or_with_sign(bits: u32, p: u64, sign: JoltSign) -> Result<Problem> {
    if bits == 0 || bits > 16 {
        return Err(Error::ConstraintViolation(format!(
            "bit count {bits} outside supported range 1..=16"
        )));
    }
    if !crate::term::is_prime(p) {
        return Err(Error::NonPrimeField(p));
    }
    if (1u128 << bits) >= p as u128 {
        return Err(Error::ConstraintViolation(format!(
            "field order {p} must exceed 2^{bits}"
        )));
    }

    let ff = Sort::Ff(p);
    let mut decls = Vec::new();
    let mut hyps = Vec::new();

    for i in 0..bits {
        decls.push((format!("bv1_{i}"), Sort::Bv(1)));
        decls.push((format!("bv2_{i}"), Sort::Bv(1)));
    }
    for i in 0..bits {
        decls.push((format!("x{i}"), ff));
        decls.push((format!("y{i}"), ff));
    }

    for i in 0..bits {
        let x = Term::var(format!("x{i}"), ff);
        let y = Term::var(format!("y{i}"), ff);
        let b1 = Term::var(format!("bv1_{i}"), Sort::Bv(1));
        let b2 = Term::var(format!("bv2_{i}"), Sort::Bv(1));
        hyps.push(Formula::eq(b1, Term::to_bv(1, Term::to_nat(x.clone()))));
        hyps.push(Formula::leq(Term::to_nat(x), Term::nat_const(1)));
        hyps.push(Formula::eq(b2, Term::to_bv(1, Term::to_nat(y.clone()))));
        hyps.push(Formula::leq(Term::to_nat(y), Term::nat_const(1)));
    }

    // Field side: sum over i of 2^i * (x_i + y_i -/+ x_i*y_i). Every bit
    // keeps its power-of-two coefficient, including 2^0.
    let mut poly: Option<Term> = None;
    for i in 0..bits {
        let x = Term::var(format!("x{i}"), ff);
        let y = Term::var(format!("y{i}"), ff);
        let sum = Term::add(x.clone(), y.clone());
        let prod = Term::mul(x, y);
        let bit = match sign {
            JoltSign::Or => Term::sub(sum, prod),
            JoltSign::BuggyPlus => Term::add(sum, prod),
        };
        let weighted = Term::mul(Term::ff_const(1 << i, p), bit);
        poly = Some(match poly {
            None => weighted,
            Some(acc) => Term::add(acc, weighted),
        });
    }
    let poly = poly.expect("bits >= 1");

    // Bitvector side: the genuine or per bit, computed in BV(1) arithmetic
    // (add is xor, mul is and, so a + b - a*b is the or), reassembled at the
    // value level: sum over i of 2^i * bvToNat(or_i).
    let mut value: Option<Term> = None;
    for i in 0..bits {
        let b1 = Term::var(format!("bv1_{i}"), Sort::Bv(1));
        let b2 = Term::var(format!("bv2_{i}"), Sort::Bv(1));
        let or_bit = Term::sub(
            Term::add(b1.clone(), b2.clone()),
            Term::mul(b1, b2),
        );
        let weighted = Term::mul(
            Term::nat_const(1 << i),
            Term::bv_to_nat(or_bit),
        );
        value = Some(match value {
            None => weighted,
            Some(acc) => Term::add(acc, weighted),
        });
    }
    let value = value.expect("bits >= 1");

    let goals = vec![
        Formula::eq(value, Term::to_nat(poly.clone())),
        Formula::leq(Term::to_nat(poly), Term::nat_const((1u128 << bits) - 1)),
    ];

    Ok(Problem {
        prime: p,
        decls,
        hyps,
        goals,
    })
}

// ---------------------------------------------------------------------------
// Random contexts
// ---------------------------------------------------------------------------

/// Parameters for seeded random context generation.
#[derive(Clone, Copy, Debug)]
pub struct RandomSpec {
    pub seed: u64,
    pub prime: u64,
    pub var_count: u32,
    pub depth: u32,
}

/// A reproducible random context over FF(prime) mixing bit-bounded and
/// unbounded variables with +, *, - and ite, biased toward subtractions to
/// exercise the regrouping and exact-subtraction paths.
pub fn gen_random(spec: &RandomSpec) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.prime;
    let ff = Sort::Ff(p);
    let k = spec.var_count.max(1);

    let mut decls = Vec::new();
    let mut hyps = Vec::new();
    for i in 0..k {
        let name = format!("v{i}");
        decls.push((name.clone(), ff));
        let v = Term::var(name, ff);
        match rng.random_range(0..4u32) {
            // Direct bit bound.
            0 | 1 => hyps.push(Formula::leq(Term::to_nat(v), Term::nat_const(1))),
            // Squaring equation; the translator turns it into a bit bound.
            2 => hyps.push(Formula::eq(Term::mul(v.clone(), v.clone()), v)),
            // Unbounded.
            _ => {}
        }
    }
    // Occasionally a looser bound on the first variable.
    if rng.random_bool(0.3) {
        let v = Term::var("v0", ff);
        let c = rng.random_range(1..4u32) as u128;
        hyps.push(Formula::leq(Term::to_nat(v), Term::nat_const(c)));
    }

    let mut goals = Vec::new();
    let goal_count = rng.random_range(1..=2u32);
    for _ in 0..goal_count {
        if rng.random_bool(0.55) {
            let mut a = random_ff_term(&mut rng, spec, spec.depth);
            let b = random_ff_term(&mut rng, spec, spec.depth.saturating_sub(1));
            // A constant-only equality prints without any sort context;
            // keep one side variable-bearing so the text stays unambiguous.
            if a.is_ground() && b.is_ground() {
                a = random_var(&mut rng, spec);
            }
            goals.push(Formula::eq(a, b));
        } else {
            let a = random_ff_term(&mut rng, spec, spec.depth);
            let c = rng.random_range(0..2 * p) as u128;
            goals.push(Formula::leq(Term::to_nat(a), Term::nat_const(c)));
        }
    }

    Problem {
        prime: p,
        decls,
        hyps,
        goals,
    }
}

fn random_var(rng: &mut ChaCha8Rng, spec: &RandomSpec) -> Term {
    let i = rng.random_range(0..spec.var_count.max(1));
    Term::var(format!("v{i}"), Sort::Ff(spec.prime))
}

fn random_ff_term(rng: &mut ChaCha8Rng, spec: &RandomSpec, depth: u32) -> Term {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.7) {
            random_var(rng, spec)
        } else {
            Term::ff_const(rng.random_range(0..spec.prime) as u128, spec.prime)
        };
    }
    let a = random_ff_term(rng, spec, depth - 1);
    let b = random_ff_term(rng, spec, depth - 1);
    match rng.random_range(0..100u32) {
        0..=29 => Term::add(a, b),
        30..=49 => Term::mul(a, b),
        50..=84 => Term::sub(a, b),
        _ => {
            let cond_var = random_var(rng, spec);
            let c = rng.random_range(0..2u32) as u128;
            let cond = Formula::eq(Term::to_nat(cond_var), Term::nat_const(c));
            Term::ite(cond, a, b)
        }
    }
}
