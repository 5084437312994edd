//! One round of the common hypercyclic construction and the truncated
//! frequently hypercyclic vector, each with a hit report.

use super::{continuity_modulus, mixing_bumps, tail_constant, BumpSum, SimError, WeightedGrid};
use crate::covering::{
    check_density_plan, cover_sphere_capped, density_blocks, greedy_cover, lower_density, verify_approx_with,
    ApproxOptions, ApproxReport, AxisBox, Covering, DensityPlan, GreedyOptions, DEFAULT_SPHERE_POINTS,
};
use crate::rational::q_from_f64;
use crate::sequences::{b_constant, check_sg, ParamSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleHits {
    pub a: Vec<f64>,
    /// `(n, ‖τ_{λ_n a} f - v‖)` for every scanned `n`.
    pub distances: Vec<(usize, f64)>,
    pub best_n: usize,
    pub best_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetHits {
    pub p: usize,
    pub direction: Vec<f64>,
    pub epsilon: f64,
    pub hits: Vec<usize>,
    pub lower_density: f64,
    /// Windows `[N, N+q_p)` with `N ∈ 𝐍_p` inside the horizon.
    pub windows: usize,
    pub windows_missed: Vec<usize>,
    /// `dens(𝐍_p)/q_p`.
    pub density_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    /// Distance a sample must beat (before tolerance).
    pub threshold: f64,
    /// Largest step-halving error seen.
    pub tolerance: f64,
    pub samples: Vec<SampleHits>,
    pub targets: Vec<TargetHits>,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct CommonHcOptions {
    pub samples: usize,
    pub seed: u64,
    /// Fraction of the covering radius kept as slack for the grid of `K`.
    pub shrink: f64,
    /// Indices available to the covering beyond its first index.
    pub index_budget: usize,
    pub sg_horizon: usize,
}

impl Default for CommonHcOptions {
    fn default() -> Self {
        CommonHcOptions { samples: 100, seed: 0, shrink: 0.5, index_budget: 100_000, sg_horizon: 1 << 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonHcRun {
    pub f: BumpSum,
    pub covering: Covering,
    pub approx: ApproxReport,
    /// Separation constant from the tail bound.
    pub c: f64,
    /// Covering radius from the continuity modulus of `v`.
    pub eps_cov: f64,
    /// Largest quadrature error of the two mixing estimates.
    pub mixing_tolerance: f64,
    pub report: HitReport,
}

fn sample_in(k: &[AxisBox], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let vols: Vec<f64> = k.iter().map(|b| b.side.powi(b.dim() as i32)).collect();
    let total: f64 = vols.iter().sum();
    let mut t = rng.gen::<f64>() * total;
    let mut pick = k.len() - 1;
    for (i, v) in vols.iter().enumerate() {
        if t < *v {
            pick = i;
            break;
        }
        t -= v;
    }
    let b = &k[pick];
    (0..b.dim()).map(|i| b.lower[i] + rng.gen::<f64>() * b.side).collect()
}

/// One dense-orbit round: `C` from the tail bound, the covering radius from
/// the continuity modulus of `v`, a greedy net of `K` with points `λ_n x`
/// that are `C`-separated, `f = u + Σ τ_{-λ_n x_{n,k}} v`, and for each
/// sampled `a ∈ K` the minimum over `n <= M` of `‖τ_{λ_n a} f - v‖`.
pub fn common_hc_construct(
    k: &[AxisBox],
    seq: &ParamSequence,
    u: &BumpSum,
    v: &BumpSum,
    eps_target: f64,
    grid: &Arc<WeightedGrid>,
    opts: &CommonHcOptions,
) -> Result<CommonHcRun, SimError> {
    let d = grid.d();
    if k.is_empty() || k.iter().any(|b| b.dim() != d) {
        return Err(SimError::InvalidArgument(format!("K must be a nonempty list of boxes in dimension {d}")));
    }
    if !(eps_target > 0.0) {
        return Err(SimError::InvalidArgument("eps_target must be > 0".into()));
    }
    let kmin = k.iter().map(|b| b.norm_range().0).fold(f64::INFINITY, f64::min);
    if !(kmin > 0.0) {
        return Err(SimError::InvalidArgument("K must avoid the origin".into()));
    }
    let eps_cov = continuity_modulus(v, eps_target, grid);
    let reach = u.support_radius().max(v.support_radius());
    let sup = u.sup_bound().max(v.sup_bound());
    let c = tail_constant(reach + eps_cov, eps_target, sup, grid)?;

    let budget = b_constant(d, &q_from_f64((c / eps_cov).max(1.0)));
    if check_sg(seq, &budget, seq.clamp(opts.sg_horizon))?.is_none() {
        return Err(SimError::Obstructed(
            "the sequence has no growth witness, so no covering exists; certify with obstruction::peel_certify".into(),
        ));
    }
    let limit = seq.clamp(opts.sg_horizon);
    let n_start = seq
        .first_at_least(&q_from_f64(c / kmin), 0, limit)
        .ok_or_else(|| SimError::InvalidArgument("sequence never reaches C / min‖K‖".into()))?;
    let n_max = seq.clamp(n_start.saturating_add(opts.index_budget));

    // The grid of K must be fine enough that λ_M·step/2 fits in the slack.
    let slack = opts.shrink * eps_cov;
    let mut lam_cap = seq.value_f64((n_start + 64).min(n_max));
    let mut covering;
    let mut step;
    let mut rounds = 0;
    loop {
        step = slack / lam_cap;
        let gopts = GreedyOptions { grid_step: step, n_start, n_max, shrink: opts.shrink };
        covering = greedy_cover(k, seq, eps_cov, c, &gopts)?;
        let lam_m = covering.lambda_max();
        rounds += 1;
        if lam_m * step / 2.0 < slack * (1.0 - 1e-9) || rounds >= 8 {
            break;
        }
        lam_cap = lam_m * 1.25;
    }
    let approx = verify_approx_with(&covering, k, step, &ApproxOptions { all_m: Some(true), ..Default::default() });

    let shifts = covering.scaled();
    let mix = mixing_bumps(u, v, &shifts, c, eps_target, grid)?;
    let f = mix.field;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let target = v.sample(grid, &vec![0.0; d]);
    let m = covering.params.m;
    let mut tolerance: f64 = 0.0;
    let mut samples = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let a = sample_in(k, &mut rng);
        let mut distances = Vec::with_capacity(m + 1);
        let mut best = (0, f64::INFINITY);
        for n in 0..=m {
            let l = seq.value_f64(n);
            let shift: Vec<f64> = a.iter().map(|x| x * l).collect();
            let e = f.distance_to(grid, &shift, &target);
            tolerance = tolerance.max(e.error);
            distances.push((n, e.value));
            if e.value < best.1 {
                best = (n, e.value);
            }
        }
        samples.push(SampleHits { a, distances, best_n: best.0, best_distance: best.1 });
    }
    let threshold = 2.0 * eps_target;
    let ok = samples.iter().all(|s| s.best_distance < threshold + tolerance);
    Ok(CommonHcRun {
        f,
        covering,
        approx,
        c,
        eps_cov,
        mixing_tolerance: mix.tolerance,
        report: HitReport { threshold, tolerance, samples, targets: Vec::new(), ok },
    })
}

#[derive(Clone, Debug)]
pub struct FhcOptions {
    /// Last sequence index scanned and used for the truncation.
    pub horizon: usize,
    /// Sampled directions for `d >= 2` (both directions are used for `d = 1`).
    pub directions: usize,
    pub seed: u64,
    pub max_points: usize,
}

impl Default for FhcOptions {
    fn default() -> Self {
        FhcOptions { horizon: 5000, directions: 16, seed: 0, max_points: DEFAULT_SPHERE_POINTS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FhcRun {
    pub f: BumpSum,
    pub plan: DensityPlan,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub delta: Vec<f64>,
    /// `‖Σ_j τ_j f_k‖` over the lattice points with `‖j‖ >= B_p - 1`,
    /// maximised over `k <= p`; must stay below `2^{-p}`.
    pub b_certificates: Vec<f64>,
    pub shifts_per_level: Vec<usize>,
    /// Bound `2^{-p}` on the part of level `p` dropped by the truncation.
    pub discarded_bound: Vec<f64>,
    pub plan_issues: Vec<String>,
    pub report: HitReport,
}

fn lattice_points(d: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let m = hi.floor() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-m; d];
    loop {
        let r = idx.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if r >= lo && r <= hi {
            out.push(idx.iter().map(|&v| v as f64).collect());
        }
        let mut k = 0;
        loop {
            if k == d {
                return out;
            }
            idx[k] += 1;
            if idx[k] <= m {
                break;
            }
            idx[k] = -m;
            k += 1;
        }
    }
}

fn sphere_directions(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            out.push(x.iter().map(|v| v / r).collect());
        }
    }
    out
}

/// Truncated `f = Σ_p Σ_i τ_{-a_i(p)} f_p` where `a_i(p)` runs over the sphere
/// nets `λ_n x_{n,k}` of the windows `[N, N+q_p)`, `N ∈ 𝐍_p`, with
/// `λ_n <= λ_horizon`. For each direction and level the report lists the
/// indices `n` with `‖τ_{λ_n a} f - f_p‖ < (p+3)2^{-p}`.
pub fn fhc_vector(
    targets: &[BumpSum],
    seq: &ParamSequence,
    grid: &Arc<WeightedGrid>,
    opts: &FhcOptions,
) -> Result<FhcRun, SimError> {
    let d = grid.d();
    let p_max = targets.len();
    if p_max == 0 || targets.iter().any(|t| t.dim != d) {
        return Err(SimError::InvalidArgument(format!("need at least one target in dimension {d}")));
    }
    let mut b = Vec::with_capacity(p_max);
    let mut delta = Vec::with_capacity(p_max);
    let mut b_certificates = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let level = 0.5f64.powi(p as i32);
        delta.push(continuity_modulus(&targets[p - 1], level, grid));
        // 1-separated translates of a field supported in B(0, A) overlap at
        // most (2A+1)^d times.
        let mut bp: f64 = 1.0;
        for t in &targets[..p] {
            let a = t.support_radius();
            let overlap = (2.0 * a + 1.0).powi(d as i32);
            bp = bp.max(tail_constant(a, level, overlap * t.sup_bound(), grid)? + 1.0);
        }
        let mut worst: f64 = 0.0;
        for t in &targets[..p] {
            let far = grid.half_width() + t.support_radius();
            let pts: Vec<Vec<f64>> =
                lattice_points(d, bp - 1.0, far).into_iter().map(|x| x.iter().map(|v| -v).collect()).collect();
            let mut s = BumpSum::zero(d);
            s.add_translates(t, &pts, 1.0);
            worst = worst.max(super::norm_lp(&s.sample(grid, &vec![0.0; d])).value);
        }
        if worst >= level {
            return Err(SimError::EstimateViolated(format!(
                "lattice sum {worst} >= 2^-{p} with B_{p} = {bp}"
            )));
        }
        b.push(bp);
        b_certificates.push(worst);
    }
    let plan = density_blocks(&b, &delta, seq, p_max, opts.horizon, d)?;
    let plan_issues = check_density_plan(&plan);
    let lam_h = seq.value_f64(opts.horizon);

    let mut f = BumpSum::zero(d);
    let mut shifts_per_level = Vec::with_capacity(p_max);
    for p in 0..p_max {
        let mut shifts = Vec::new();
        for &n0 in &plan.sets[p] {
            let net = cover_sphere_capped(d, delta[p], b[p], n0, seq, opts.max_points)?;
            for pt in &net.covering.points {
                let l = seq.value_f64(pt.n);
                if l <= lam_h {
                    shifts.push(pt.x.iter().map(|x| x * l).collect::<Vec<f64>>());
                }
            }
        }
        shifts_per_level.push(shifts.len());
        f.add_translates(&targets[p], &shifts, 1.0);
    }

    let mut tolerance: f64 = 0.0;
    let mut hits_out = Vec::new();
    for dir in sphere_directions(d, opts.directions, opts.seed) {
        for p in 0..p_max {
            let epsilon = (p as f64 + 4.0) * 0.5f64.powi(p as i32 + 1);
            let target = targets[p].sample(grid, &vec![0.0; d]);
            let mut hits = Vec::new();
            for n in 0..=opts.horizon {
                let l = seq.value_f64(n);
                let shift: Vec<f64> = dir.iter().map(|x| x * l).collect();
                let e = f.distance_to(grid, &shift, &target);
                tolerance = tolerance.max(e.error);
                if e.value < epsilon {
                    hits.push(n);
                }
            }
            let q = plan.q[p];
            let mut windows = 0;
            let mut windows_missed = Vec::new();
            for &n0 in &plan.sets[p] {
                if n0 + q > opts.horizon + 1 {
                    break;
                }
                windows += 1;
                let i = hits.partition_point(|&h| h < n0);
                if !(i < hits.len() && hits[i] < n0 + q) {
                    windows_missed.push(n0);
                }
            }
            hits_out.push(TargetHits {
                p: p + 1,
                direction: dir.clone(),
                epsilon,
                lower_density: lower_density(&hits, opts.horizon),
                hits,
                windows,
                windows_missed,
                density_bound: plan.empirical_density[p] / q as f64,
            });
        }
    }
    let ok = hits_out.iter().all(|t| t.windows_missed.is_empty() && t.lower_density >= 0.5 * t.density_bound);
    Ok(FhcRun {
        f,
        plan,
        b,
        delta,
        b_certificates,
        shifts_per_level,
        discarded_bound: (1..=p_max).map(|p| 0.5f64.powi(p as i32)).collect(),
        plan_issues,
        report: HitReport { threshold: 2.0, tolerance, samples: Vec::new(), targets: hits_out, ok },
    })
}
