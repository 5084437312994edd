use chc_core::obstruction::{
    adversarial_candidate, check_params, choose_obstruction_params, densify, interval_subtract, largest_gap,
    peel_certify, CandidateFamily, Interval, ObstructionError, PeelOutcome,
};
use chc_core::rational::{q_frac, q_int, Q};
use chc_core::sequences::ParamSequence;
use num_traits::Signed;
use proptest::prelude::*;

fn interval_strategy() -> impl Strategy<Value = Interval> {
    (0i64..=40, 0i64..=10, any::<bool>(), any::<bool>()).prop_map(|(lo, w, lc, hc)| Interval {
        lo: q_frac(lo, 20),
        hi: q_frac(lo + w, 20),
        lo_closed: lc,
        hi_closed: hc,
    })
}

fn naive_member(x: &Q, i: &Interval, js: &[Interval]) -> bool {
    i.contains(x) && js.iter().all(|j| !j.contains(x))
}

#[test]
fn parse_and_basic_shapes() {
    let i = Interval::parse("1, 5/2").unwrap();
    assert_eq!(i, Interval::closed(q_int(1), q_frac(5, 2)));
    assert!(Interval::parse("3,1").is_err());
    assert!(Interval::open(q_int(1), q_int(1)).is_empty());
    assert!(!Interval::closed(q_int(1), q_int(1)).is_empty());
    // Removing an open middle keeps both closed endpoints of the cut.
    let set = interval_subtract(&Interval::closed(q_int(0), q_int(3)), &[Interval::open(q_int(1), q_int(2))]);
    assert_eq!(set.len(), 2);
    assert!(set.contains(&q_int(1)) && set.contains(&q_int(2)) && !set.contains(&q_frac(3, 2)));
}

#[test]
fn largest_gap_needs_room() {
    let i = Interval::closed(q_int(0), q_int(1));
    let js = [Interval::closed(q_int(0), q_frac(1, 2)), Interval::closed(q_frac(1, 2), q_int(1))];
    assert!(matches!(largest_gap(&i, &js), Err(ObstructionError::PreconditionViolated(_))));
    let g = largest_gap(&i, &[Interval::open(q_frac(1, 4), q_frac(1, 3))]).unwrap();
    assert_eq!(g, Interval { lo: q_frac(1, 3), hi: q_int(1), lo_closed: true, hi_closed: true });
}

#[test]
fn params_for_three_halves() {
    let seq = ParamSequence::geometric(q_int(2), 0).unwrap();
    let i = Interval::closed(q_int(1), q_int(2));
    let p = choose_obstruction_params(&q_frac(3, 2), &i, &seq).unwrap();
    // (3/2)^3 = 3.375 < 8 and (3/2)^4 = 5.06 < 10, (3/2)^5 = 7.59 < 12, (3/2)^6 = 11.4 < 14, (3/2)^7 = 17.1 >= 16.
    assert_eq!(p.m, 7);
    assert!(check_params(&p, &i, &seq).is_empty());
    let mut bad = p.clone();
    bad.m -= 1;
    assert!(!check_params(&bad, &i, &seq).is_empty());
    let mut bad = p.clone();
    bad.a = q_int(4) * &p.delta;
    assert!(!check_params(&bad, &i, &seq).is_empty());
}

#[test]
fn densify_rejects_slow_sequences() {
    let r = densify(&ParamSequence::integers(), &q_frac(3, 2), 10);
    assert!(matches!(r, Err(ObstructionError::RatioTooSmall { .. })));
}

#[test]
fn dichotomy_breach_is_refuted() {
    let seq = ParamSequence::geometric(q_int(3), 0).unwrap();
    let i = Interval::closed(q_int(1), q_int(2));
    let p = choose_obstruction_params(&q_int(3), &i, &seq).unwrap();
    let n = p.n + 2;
    let lam = seq.value(n);
    // Scaled distance 1 lies strictly between delta <= 1/16 and A > 1.
    let y = q_frac(5, 4);
    let fam = CandidateFamily { n, centers: vec![y.clone(), &y + lam.recip()] };
    match peel_certify(&seq, &i, &[fam], &p, 1).unwrap() {
        PeelOutcome::Refutation(r) => assert!(r.pair.is_some(), "{r:?}"),
        PeelOutcome::Certificate(_) => panic!("breach not detected"),
    }
}

#[test]
fn unsorted_levels_are_malformed() {
    let seq = ParamSequence::geometric(q_int(2), 0).unwrap();
    let i = Interval::closed(q_int(1), q_int(2));
    let p = choose_obstruction_params(&q_frac(3, 2), &i, &seq).unwrap();
    let fams = [
        CandidateFamily { n: p.n + 1, centers: vec![q_frac(3, 2)] },
        CandidateFamily { n: p.n, centers: vec![q_frac(3, 2)] },
    ];
    assert!(matches!(peel_certify(&seq, &i, &fams, &p, 1), Err(ObstructionError::MalformedCandidate(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subtraction_matches_pointwise_membership(i in interval_strategy(), js in prop::collection::vec(interval_strategy(), 0..6)) {
        let set = interval_subtract(&i, &js);
        prop_assert!(set.is_well_formed());
        prop_assert!(set.len() <= js.len() + 1);
        // Grid of step 1/80 hits every endpoint and every midpoint between them.
        for k in 0..=200 {
            let x = q_frac(k, 80);
            prop_assert_eq!(set.contains(&x), naive_member(&x, &i, &js), "x = {}", x);
        }
    }

    #[test]
    fn largest_gap_is_a_longest_component(i in interval_strategy(), js in prop::collection::vec(interval_strategy(), 0..4)) {
        let removed: Q = js.iter().map(Interval::len).sum();
        prop_assume!(i.len() > removed);
        let g = largest_gap(&i, &js).unwrap();
        let set = interval_subtract(&i, &js);
        prop_assert!(set.intervals.contains(&g));
        prop_assert!(set.intervals.iter().all(|c| c.len() <= g.len()));
    }

    #[test]
    fn densified_ratios_lie_between_q_and_q_squared(r in 2i64..60, qn in 11i64..30) {
        let q = q_frac(qn, 10);
        prop_assume!(q_int(r) >= q);
        let seq = ParamSequence::geometric(q_int(r), 0).unwrap();
        let dense = densify(&seq, &q, 8).unwrap();
        let len = dense.len().unwrap();
        prop_assert!(len >= 9);
        for k in 0..len - 1 {
            let ratio = dense.value(k + 1) / dense.value(k);
            prop_assert!(ratio >= q && ratio <= &q * &q, "ratio {} at {}", ratio, k);
        }
    }

    #[test]
    fn certificates_leave_a_point_outside_every_ball(seed in 0u64..1000) {
        let seq = ParamSequence::geometric(q_int(2), 0).unwrap();
        let i = Interval::closed(q_int(1), q_int(2));
        let p = choose_obstruction_params(&q_frac(3, 2), &i, &seq).unwrap();
        let stages = 3;
        let cand = adversarial_candidate(&seq, &i, &p, stages * p.m, seed);
        let PeelOutcome::Certificate(cert) = peel_certify(&seq, &i, &cand, &p, stages).unwrap() else {
            return Err(TestCaseError::fail("adversarial candidate refuted"));
        };
        let x = &cert.uncovered_point;
        prop_assert!(i.contains(x));
        for fam in &cand {
            let r = &p.delta / seq.value(fam.n);
            for y in &fam.centers {
                prop_assert!((x - y).abs() >= r, "x within delta/lambda of a center at level {}", fam.n);
            }
        }
        prop_assert!(cert.stages.len() >= stages);
        for st in &cert.stages {
            prop_assert!(st.survivor.len() >= st.bound);
            prop_assert_eq!(&st.bound, &seq.value(p.n + p.m * st.j).recip());
        }
    }
}
