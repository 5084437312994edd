use chc_core::covering::{
    check_density_plan, cover_compact, cover_multiples, cover_sphere, cube_face_charts, density_blocks,
    greedy_cover, half_arc_charts, lower_density, separate_net, sphere_samples, verify_approx, verify_multiples,
    verify_separation, verify_separation_bruteforce, verify_sphere_coverage, AxisBox, CompactOptions, CoverParams,
    CoverPoint, Covering, GreedyOptions,
};
use chc_core::rational::q_frac;
use chc_core::sequences::ParamSequence;
use proptest::prelude::*;

fn small_box_net() -> (Vec<AxisBox>, Covering) {
    let k = vec![AxisBox::cube(1, 1.0, 2.0)];
    let cov = cover_compact(&k, &ParamSequence::integers(), 0.5, 0.2, 0, &CompactOptions::default()).unwrap();
    (k, cov)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn small_box_net_passes_both_oracles() {
    let (k, cov) = small_box_net();
    assert!(verify_separation_bruteforce(&cov, 0.2).ok);
    let ap = verify_approx(&cov, &k, 0.5 / (10.0 * cov.lambda_max()));
    assert!(ap.covered && ap.sound, "{:?}", ap.notes);
}

#[test]
fn mutated_nets_are_rejected() {
    let (k, cov) = small_box_net();
    let step = 0.5 / (10.0 * cov.lambda_max());

    // A point placed on top of another (after scaling) breaks separation.
    let mut close = cov.clone();
    let first = close.points[0].clone();
    let lam = close.seq.value_f64(first.n);
    close.points.push(CoverPoint { n: first.n, x: vec![first.x[0] + 0.01 / lam] });
    close.refresh_range();
    assert!(!verify_separation(&close, 0.2).ok);
    assert!(!verify_separation_bruteforce(&close, 0.2).ok);

    // Removing every point near the middle of K leaves a hole.
    let mut holed = cov.clone();
    holed.points.retain(|p| (p.x[0] - 1.5).abs() > 0.3);
    holed.refresh_range();
    assert!(holed.points.len() < cov.points.len());
    let ap = verify_approx(&holed, &k, step);
    assert!(!ap.covered && ap.uncovered_count > 0, "{} points left", holed.points.len());
    let mut empty = cov.clone();
    empty.points.clear();
    assert!(!verify_approx(&empty, &k, step).covered);
}

#[test]
fn greedy_net_covers_a_plane_box() {
    let k = vec![AxisBox::cube(2, 1.0, 1.5)];
    let seq = ParamSequence::integers();
    let opts = GreedyOptions { grid_step: 0.01, n_start: 2, n_max: 100_000, shrink: 0.5 };
    let cov = greedy_cover(&k, &seq, 0.3, 1.0, &opts).unwrap();
    assert!(verify_separation_bruteforce(&cov, 1.0).ok);
    assert!(verify_approx(&cov, &k, 0.01).covered);
}

#[test]
fn sphere_net_of_the_circle() {
    let seq = ParamSequence::integers();
    let net = cover_sphere(2, 0.5, 2.0, 0, &seq).unwrap();
    assert!(verify_separation(&net.covering, 2.0).ok);
    let cov = verify_sphere_coverage(&net.covering, 0.5, &sphere_samples(2, 5000, 0));
    assert!(cov.covered);
    assert!(net.q <= net.layout.q_bound);
    let shifted = cover_sphere(2, 0.5, 2.0, 500, &seq).unwrap();
    assert_eq!(shifted.q, net.q);
    assert!(shifted.covering.points.iter().all(|p| p.n >= 500 && p.n < 500 + net.q));
}

#[test]
fn zero_sphere_has_two_points() {
    let net = cover_sphere(1, 0.3, 5.0, 0, &ParamSequence::integers()).unwrap();
    assert_eq!(net.covering.points.len(), 2);
    assert!(verify_separation_bruteforce(&net.covering, 5.0).ok);
}

#[test]
fn multiples_cover_and_separate() {
    let mc = cover_multiples(1, 0.5, 0.5, (1.0, 1.5), 1_000_000).unwrap();
    let alphas: Vec<f64> = (0..=200).map(|i| 1.0 + 0.5 * i as f64 / 200.0).collect();
    let rep = verify_multiples(&mc.triples, &alphas, &sphere_samples(1, 2, 0), 0.5);
    assert!(rep.covered);
    for (i, s) in mc.triples.iter().enumerate() {
        assert!(s.n as f64 >= mc.b);
        for t in &mc.triples[..i] {
            let a: Vec<f64> = s.y.iter().map(|v| v * s.n as f64).collect();
            let b: Vec<f64> = t.y.iter().map(|v| v * t.n as f64).collect();
            assert!(dist(&a, &b) >= mc.b * (1.0 - 1e-9));
        }
    }
}

#[test]
fn density_plan_invariants() {
    let seq = ParamSequence::integers();
    let plan = density_blocks(&[3.7, 6.0], &[0.05, 0.02], &seq, 2, 20_000, 1).unwrap();
    assert!(check_density_plan(&plan).is_empty());
    let g = plan.gap;
    for (p, s) in plan.sets.iter().enumerate() {
        assert!(s.windows(2).all(|w| w[1] - w[0] >= g));
        assert!(s.iter().all(|&x| x as f64 >= plan.b[p]));
        assert!(lower_density(s, plan.horizon) >= plan.density_bound);
    }
    let mut all: Vec<usize> = plan.sets.concat();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), plan.sets.iter().map(Vec::len).sum::<usize>());
}

#[test]
fn lower_density_of_arithmetic_progressions() {
    let s: Vec<usize> = (0..10_000).step_by(7).collect();
    let d = lower_density(&s, 10_000);
    assert!((d - 1.0 / 7.0).abs() < 2e-3, "{d}");
    assert_eq!(lower_density(&[], 100), 0.0);
}

fn points_strategy(d: usize) -> impl Strategy<Value = Vec<(usize, Vec<f64>)>> {
    prop::collection::vec((0usize..30, prop::collection::vec(-3.0..3.0f64, d)), 1..120)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hash_and_bruteforce_separation_agree(d in 1usize..=3, seed_pts in points_strategy(3), c in 0.05..3.0f64) {
        let pts: Vec<CoverPoint> = seed_pts.into_iter().map(|(n, x)| CoverPoint { n, x: x[..d].to_vec() }).collect();
        let seq = ParamSequence::arithmetic(q_frac(1, 3), 1).unwrap();
        let mut cov = Covering::empty(d, CoverParams { epsilon: 1.0, c, n: 0, m: 0 }, seq);
        cov.points = pts;
        cov.refresh_range();
        let fast = verify_separation(&cov, c);
        let slow = verify_separation_bruteforce(&cov, c);
        prop_assert_eq!(fast.ok, slow.ok);
        prop_assert_eq!(fast.violation_count, slow.violation_count);
    }

    #[test]
    fn separate_net_is_separated(pts in points_strategy(2), a in 0.1..2.0f64) {
        let seq = ParamSequence::integers();
        let cov = separate_net(&pts, a, &seq);
        prop_assert!(verify_separation_bruteforce(&cov, a).ok);
        // Every dropped point is within `a` of a survivor after scaling.
        let kept: Vec<Vec<f64>> = cov.points.iter().map(|p| p.x.iter().map(|v| v * seq.value_f64(p.n)).collect()).collect();
        for (n, x) in &pts {
            let s: Vec<f64> = x.iter().map(|v| v * seq.value_f64(*n)).collect();
            prop_assert!(kept.iter().any(|k| dist(k, &s) < a + 1e-12));
        }
    }

    #[test]
    fn half_arcs_are_bilipschitz(t in 0.0..1.0f64, s in 0.0..1.0f64) {
        prop_assume!((t - s).abs() > 1e-9);
        for chart in half_arc_charts() {
            let r = dist(&chart.map(&[t]), &chart.map(&[s])) / (t - s).abs();
            prop_assert!(r >= 1.0 / chart.c - 1e-12 && r <= chart.c + 1e-12);
        }
    }

    #[test]
    fn cube_faces_are_bilipschitz(y in prop::array::uniform2(0.0..1.0f64), z in prop::array::uniform2(0.0..1.0f64)) {
        prop_assume!(dist(&y, &z) > 1e-9);
        for chart in cube_face_charts() {
            let (a, b) = (chart.map(&y), chart.map(&z));
            prop_assert!((dist(&a, &[0.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
            let r = dist(&a, &b) / dist(&y, &z);
            prop_assert!(r >= 1.0 / chart.c && r <= chart.c, "ratio {} outside [1/{}, {}]", r, chart.c, chart.c);
        }
    }
}
