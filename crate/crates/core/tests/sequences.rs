use chc_core::rational::{q_frac, q_int, Q};
use chc_core::sequences::{
    b_constant, check_fhcsg, check_plan, check_sg, check_window, fhcsg_window, split_fhcsg, split_with_floor,
    ParamSequence, SeqError, View,
};
use num_traits::{One, Zero};
use proptest::prelude::*;

fn pow(x: &Q, e: usize) -> Q {
    (0..e).fold(Q::one(), |acc, _| acc * x)
}

#[test]
fn b_constant_small_table() {
    assert_eq!(b_constant(1, &q_int(1)), q_int(1));
    assert_eq!(b_constant(2, &q_int(1)), q_int(6));
    assert_eq!(b_constant(3, &q_int(1)), q_int(21));
    assert_eq!(b_constant(2, &q_frac(1, 2)), q_frac(17, 4));
}

#[test]
fn sg_witness_is_checked_independently() {
    let seq = ParamSequence::integers();
    let budget = q_int(6);
    let sg = check_sg(&seq, &budget, 200_000).unwrap().expect("integers grow slowly enough");
    // Consecutive witness terms are at least rho apart, and rho^2 >= rho0 = 1 + 1/(floor(budget)+1).
    assert!(&sg.rho * &sg.rho >= sg.rho0);
    assert_eq!(sg.rho0, Q::one() + q_frac(1, 7));
    for w in sg.indices.windows(2) {
        assert!(seq.value(w[1]) >= &sg.rho * seq.value(w[0]));
    }
    // The first certified tail, summed exactly.
    let mut tail = Q::zero();
    for &i in &sg.indices[1..] {
        tail += seq.value(i).recip();
    }
    assert!(tail * seq.value(sg.indices[0]) > budget);
}

#[test]
fn geometric_sequences_have_no_window() {
    let seq = ParamSequence::geometric(q_int(2), 0).unwrap();
    // Every tail sum of 2^-n relative to 2^-N is below 1.
    assert_eq!(check_fhcsg(&seq, &q_int(1), 100).unwrap(), None);
    assert_eq!(fhcsg_window(&seq, &q_frac(99, 100), 3, 50), Some(7));
}

#[test]
fn gaps_below_one_are_reported() {
    let seq = ParamSequence::arithmetic(q_frac(1, 2), 1).unwrap();
    assert!(matches!(check_fhcsg(&seq, &q_int(1), 10), Err(SeqError::GapViolation { .. })));
}

#[test]
fn corrupted_plans_are_rejected() {
    let seq = ParamSequence::integers();
    let a = q_int(2);
    let sg = check_sg(&seq, &b_constant(2, &a), 1_000_000).unwrap().unwrap();
    let plan = split_with_floor(&seq, &sg, 2, &a, 0).unwrap();
    let view = sg.view(&seq);
    assert!(check_plan(&plan, &view).is_empty());

    // Two tuples sent to the same index.
    let mut dup = plan.clone();
    dup.phi[1].index = dup.phi[0].index;
    assert!(!check_plan(&dup, &view).is_empty());

    // Dropping the last leaf breaks the budget of its parent.
    let mut short = plan.clone();
    short.phi.pop();
    assert!(!check_plan(&short, &view).is_empty());
}

#[test]
fn fhcsg_window_on_the_integers() {
    let seq = ParamSequence::integers();
    for s in [split_fhcsg(&seq, 1, &q_int(1), 0).unwrap(), split_fhcsg(&seq, 1, &q_int(1), 77).unwrap()] {
        assert!(check_window(&s.plan, s.n, s.q, &q_int(1)).is_empty());
        assert!(s.plan.phi.iter().all(|e| e.index >= s.n && e.index < s.n + s.q));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn b_constant_matches_closed_form(d in 1usize..7, num in 1i64..40, den in 1i64..8) {
        let a = q_frac(num, den);
        let t = &a + q_int(2);
        let closed = &a * pow(&t, d - 1) + q_int(3) * (pow(&t, d - 1) - Q::one()) / (&a + Q::one());
        prop_assert_eq!(b_constant(d, &a), closed);
    }

    #[test]
    fn integer_plans_have_no_violations(d in 1usize..=2, num in 1i64..12, den in 1i64..4) {
        let seq = ParamSequence::integers();
        let a = q_frac(num, den);
        let sg = check_sg(&seq, &b_constant(d, &a), 1_000_000).unwrap().unwrap();
        let plan = split_with_floor(&seq, &sg, d, &a, 0).unwrap();
        prop_assert!(check_plan(&plan, &sg.view(&seq)).is_empty());
    }

    #[test]
    fn polynomial_plans_have_no_violations(e in 0.5..1.0f64, num in 1i64..6) {
        let seq = ParamSequence::polynomial(e, 1).unwrap();
        let a = q_int(num);
        let sg = check_sg(&seq, &b_constant(2, &a), 2_000_000).unwrap().unwrap();
        let plan = split_with_floor(&seq, &sg, 2, &a, 0).unwrap();
        prop_assert!(check_plan(&plan, &sg.view(&seq)).is_empty());
    }

    #[test]
    fn windowed_split_stays_in_its_window(d in 1usize..=2, a in 1i64..4, n in 0usize..5000) {
        let seq = ParamSequence::integers();
        let a = q_int(a);
        let s = split_fhcsg(&seq, d, &a, n).unwrap();
        prop_assert!(check_window(&s.plan, s.n, s.q, &a).is_empty());
        prop_assert!(check_plan(&s.plan, &View::affine(&seq, 0, 1, s.n + s.q)).is_empty());
        let mut idx: Vec<usize> = s.plan.phi.iter().map(|e| e.index).collect();
        idx.sort_unstable();
        prop_assert!(idx[0] >= n && *idx.last().unwrap() < n + s.q);
        prop_assert!(idx.windows(2).all(|w| q_int((w[1] - w[0]) as i64) > a));
    }

    #[test]
    fn fhcsg_window_is_minimal(n in 1usize..300, cn in 1i64..30) {
        let seq = ParamSequence::integers();
        let c = q_frac(cn, 10);
        let p = fhcsg_window(&seq, &c, n, 100_000).unwrap();
        // Oracle on λ_i = i + 1.
        let lam = |i: usize| q_int(i as i64 + 1);
        let partial = |p: usize| (n + 1..=n + p).fold(Q::zero(), |s, i| s + lam(i).recip()) * lam(n);
        prop_assert!(partial(p) >= c);
        prop_assert!(p == 1 || partial(p - 1) < c);
    }
}
