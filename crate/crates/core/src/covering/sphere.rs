use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

use super::boxes::q_upper;
use super::{dist, norm, CoverError, CoverParams, CoverPoint, Covering, TAU};
use crate::rational::{q_to_f64, Q};
use crate::sequences::{split_fhcsg, split_fhcsg_with, ParamSequence, PlanNode, SeqError, SplitPlan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChartKind {
    /// `S^0` component `{sign}`.
    Point { sign: f64 },
    /// `t ↦ (cos(π t + shift), sin(π t + shift))`.
    HalfArc { shift: f64 },
    /// Central projection of the cube face `x_axis = sign`.
    CubeFace { axis: usize, sign: f64 },
}

/// Surjective bilipschitz map `[0,1]^{d-1} → K_j ⊂ S^{d-1}` with constant `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereChart {
    pub index: usize,
    pub kind: ChartKind,
    pub c: f64,
}

impl SphereChart {
    pub fn map(&self, y: &[f64]) -> Vec<f64> {
        match self.kind {
            ChartKind::Point { sign } => vec![sign],
            ChartKind::HalfArc { shift } => {
                let t = PI * y[0] + shift;
                vec![t.cos(), t.sin()]
            }
            ChartKind::CubeFace { axis, sign } => {
                let mut p = [0.0; 3];
                p[axis] = sign;
                p[(axis + 1) % 3] = 2.0 * y[0] - 1.0;
                p[(axis + 2) % 3] = 2.0 * y[1] - 1.0;
                let r = norm(&p);
                p.iter().map(|v| v / r).collect()
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ChartKind::Point { .. } => 0,
            ChartKind::HalfArc { .. } => 1,
            ChartKind::CubeFace { .. } => 2,
        }
    }
}

/// Upper and lower halves of the circle; chord/parameter ratios lie in
/// `[2, π]`, so `c = π`.
pub fn half_arc_charts() -> Vec<SphereChart> {
    [0.0, PI]
        .iter()
        .enumerate()
        .map(|(index, &shift)| SphereChart { index, kind: ChartKind::HalfArc { shift }, c: PI })
        .collect()
}

/// Extreme ratios `‖γ(y)-γ(z)‖/‖y-z‖` of one cube-face chart over all pairs
/// of a `(k+1)^2` grid plus short steps at every node.
pub fn cube_face_ratio_bounds(k: usize) -> (f64, f64) {
    let chart = SphereChart { index: 0, kind: ChartKind::CubeFace { axis: 0, sign: 1.0 }, c: 1.0 };
    let nodes: Vec<[f64; 2]> =
        (0..=k).flat_map(|i| (0..=k).map(move |j| [i as f64 / k as f64, j as f64 / k as f64])).collect();
    let imgs: Vec<Vec<f64>> = nodes.iter().map(|y| chart.map(y)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut see = |r: f64| {
        lo = lo.min(r);
        hi = hi.max(r);
    };
    for i in 0..nodes.len() {
        for j in 0..i {
            see(dist(&imgs[i], &imgs[j]) / dist(&nodes[i], &nodes[j]));
        }
        let h = 1e-5;
        for (dx, dy) in [(1.0, 0.0), (0.0, 1.0), (0.7071, 0.7071), (0.7071, -0.7071)] {
            let z = [nodes[i][0] + h * dx, nodes[i][1] + h * dy];
            if (0.0..=1.0).contains(&z[0]) && (0.0..=1.0).contains(&z[1]) {
                see(dist(&chart.map(&z), &imgs[i]) / dist(&z, &nodes[i]));
            }
        }
    }
    (lo, hi)
}

/// The six faces of `[-1,1]^3` projected to `S^2`, with `c` from
/// [`cube_face_ratio_bounds`] plus 10%.
pub fn cube_face_charts() -> Vec<SphereChart> {
    let (lo, hi) = cube_face_ratio_bounds(24);
    let c = 1.1 * hi.max(1.0 / lo);
    let mut out = Vec::new();
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            out.push(SphereChart { index: out.len(), kind: ChartKind::CubeFace { axis, sign }, c });
        }
    }
    out
}

fn charts_for(d: usize) -> Result<Vec<SphereChart>, CoverError> {
    match d {
        1 => Ok([1.0, -1.0]
            .iter()
            .enumerate()
            .map(|(index, &sign)| SphereChart { index, kind: ChartKind::Point { sign }, c: 1.0 })
            .collect()),
        2 => Ok(half_arc_charts()),
        3 => Ok(cube_face_charts()),
        _ => Err(CoverError::PreconditionViolated(format!("sphere dimension d = {d} not in {{1, 2, 3}}"))),
    }
}

/// Constants shared by every sphere covering with the same `(d, δ, B, λ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereLayout {
    pub d: usize,
    pub charts: Vec<SphereChart>,
    /// Splitting budget `max(c²B√(d-1)/δ, B)`.
    pub a: f64,
    /// Window of one chart.
    pub big_q: usize,
    /// Stagger gap `⌈B⌉` between charts.
    pub kappa: usize,
    /// `(u-1)(Q+κ)+Q`, a bound on the whole window.
    pub q_bound: usize,
}

fn budget(d: usize, c: f64, delta: f64, b: f64) -> Q {
    let need = c * c * b * ((d - 1) as f64).sqrt() / (delta * (1.0 - TAU));
    q_upper(need.max(b))
}

pub fn sphere_layout(d: usize, delta: f64, b: f64, seq: &ParamSequence) -> Result<SphereLayout, CoverError> {
    if !(delta > 0.0 && b > 0.0) {
        return Err(CoverError::PreconditionViolated("need delta > 0 and B > 0".into()));
    }
    let charts = charts_for(d)?;
    let kappa = b.ceil() as usize;
    let (a, big_q) = if d == 1 {
        (b, 1)
    } else {
        let a = budget(d, charts[0].c, delta, b);
        let split = split_fhcsg(seq, d - 1, &a, 0)?;
        (q_to_f64(&a), split.q)
    };
    let u = charts.len();
    Ok(SphereLayout { d, charts, a, big_q, kappa, q_bound: (u - 1) * (big_q + kappa) + big_q })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereCovering {
    pub covering: Covering,
    pub delta: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub layout: SphereLayout,
    /// Largest index used minus `N` plus one.
    pub q: usize,
}

pub const DEFAULT_SPHERE_POINTS: usize = 20_000_000;

/// Net of `S^{d-1}` for indices in `N..N+q`: each chart `j` is covered on
/// its own window starting at `N + j(Q+κ)` by the lattice
/// `α_i cB/λ_{anchor_0} + (δ'/c) Σ_{j<=k_i} 1/λ_{anchor_j}` pushed through
/// the chart, with `δ' = δ/√(d-1)`.
pub fn cover_sphere(d: usize, delta: f64, b: f64, n: usize, seq: &ParamSequence) -> Result<SphereCovering, CoverError> {
    cover_sphere_capped(d, delta, b, n, seq, DEFAULT_SPHERE_POINTS)
}

/// Lattice leaves of one chart: `(index, per-axis (offset, spacing), counts)`
/// and the number of points they carry.
type ChartLeaf = (usize, Vec<(f64, f64)>, Vec<usize>);

fn chart_leaves(plan: &SplitPlan, d: usize, step: f64, spacing_num: f64, seq: &ParamSequence) -> (Vec<ChartLeaf>, usize) {
    let nodes: HashMap<&[usize], &PlanNode> = plan.sr.iter().map(|n| (n.prefix.as_slice(), n)).collect();
    let lam = |i: usize| seq.value_f64(i);
    let mut leaves = Vec::new();
    let mut total = 0usize;
    for e in &plan.phi {
        let axes: Vec<(f64, f64)> = (0..d - 1)
            .map(|i| {
                let node = nodes[&e.tuple[..i]];
                let off: f64 = (1..=e.tuple[i]).map(|k| step / lam(node.anchors[k])).sum();
                (off, spacing_num / lam(node.anchors[0]))
            })
            .collect();
        let counts: Vec<usize> = axes
            .iter()
            .map(|&(o, s)| if o > 1.0 + 1e-12 { 0 } else { ((1.0 + 1e-12 - o) / s).floor() as usize + 1 })
            .collect();
        total = total.saturating_add(counts.iter().product());
        leaves.push((e.index, axes, counts));
    }
    (leaves, total)
}

/// Short-horizon window for the first chart. Its plan does not depend on the
/// horizon, so the point count is exact and oversized nets are rejected
/// before the window is certified over every start.
fn precount_first_chart(d: usize, delta: f64, b: f64, n: usize, seq: &ParamSequence, max_points: usize) -> Result<(), CoverError> {
    let c = charts_for(d)?[0].c;
    let a = budget(d, c, delta, b);
    let Ok(split) = split_fhcsg_with(seq, d - 1, &a, n, n.max(PRECOUNT_HORIZON)) else {
        return Ok(());
    };
    let step = delta * (1.0 - TAU) / ((d - 1) as f64).sqrt() / c;
    let (_, count) = chart_leaves(&split.plan, d, step, c * b, seq);
    if count > max_points {
        return Err(CoverError::ResourceLimit(format!(
            "sphere net needs {count} > {max_points} points in chart 0 alone (A = {:.3})",
            q_to_f64(&a)
        )));
    }
    Ok(())
}

const PRECOUNT_HORIZON: usize = 16;

pub fn cover_sphere_capped(
    d: usize,
    delta: f64,
    b: f64,
    n: usize,
    seq: &ParamSequence,
    max_points: usize,
) -> Result<SphereCovering, CoverError> {
    if d > 1 {
        precount_first_chart(d, delta, b, n, seq, max_points)?;
    }
    let layout = sphere_layout(d, delta, b, seq)?;
    let mut cov = Covering::empty(d, CoverParams { epsilon: delta, c: b, n, m: n }, seq.clone());
    if d == 1 {
        for (j, chart) in layout.charts.iter().enumerate() {
            cov.points.push(CoverPoint { n: n + j * (layout.big_q + layout.kappa), x: chart.map(&[]) });
        }
    } else {
        let a = budget(d, layout.charts[0].c, delta, b);
        let c = layout.charts[0].c;
        let step = delta * (1.0 - TAU) / ((d - 1) as f64).sqrt() / c;
        let spacing_num = c * b;
        for (j, chart) in layout.charts.iter().enumerate() {
            let start = n + j * (layout.big_q + layout.kappa);
            let split = split_fhcsg(seq, d - 1, &a, start)?;
            if split.q != layout.big_q {
                return Err(CoverError::Sequence(SeqError::WindowFailed(format!(
                    "chart {j} got window {} instead of {}",
                    split.q, layout.big_q
                ))));
            }
            let (leaves, count) = chart_leaves(&split.plan, d, step, spacing_num, seq);
            let total = cov.points.len().saturating_add(count);
            if total > max_points {
                return Err(CoverError::ResourceLimit(format!(
                    "sphere net needs {total} > {max_points} points by chart {j} (window Q = {}, A = {:.3})",
                    layout.big_q, layout.a
                )));
            }
            for (idx, axes, counts) in leaves {
                if counts.contains(&0) {
                    continue;
                }
                let mut alpha = vec![0usize; d - 1];
                loop {
                    let y: Vec<f64> = (0..d - 1).map(|i| (axes[i].0 + alpha[i] as f64 * axes[i].1).min(1.0)).collect();
                    cov.points.push(CoverPoint { n: idx, x: chart.map(&y) });
                    let mut i = 0;
                    while i < d - 1 {
                        alpha[i] += 1;
                        if alpha[i] < counts[i] {
                            break;
                        }
                        alpha[i] = 0;
                        i += 1;
                    }
                    if i == d - 1 {
                        break;
                    }
                }
            }
        }
    }
    cov.refresh_range();
    let q = cov.params.m + 1 - n;
    assert!(cov.params.n >= n && q <= layout.q_bound, "window {q} exceeds the bound {}", layout.q_bound);
    Ok(SphereCovering { covering: cov, delta, b, layout, q })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplesTriple {
    pub alpha: f64,
    pub y: Vec<f64>,
    /// The integer multiplier `n_j`.
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplesCovering {
    pub d: usize,
    pub delta: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub interval: (f64, f64),
    /// Sphere window for the integers.
    pub q: usize,
    pub betas: Vec<f64>,
    pub triples: Vec<MultiplesTriple>,
}

/// Covering of `I × S^{d-1}` by `(α_j, y_j, n_j)` with `n_j ≥ B` and
/// `‖n_j y_j - n_l y_l‖ ≥ B`: `β_1 = min I`,
/// `β_{m+1} = β_m + δ/((m+1)(B+q))`, and a sphere net of the integers at
/// `N_m = m(B+q)` for each `β_m <= max I`.
pub fn cover_multiples(
    d: usize,
    delta: f64,
    b: f64,
    interval: (f64, f64),
    max_triples: usize,
) -> Result<MultiplesCovering, CoverError> {
    let (lo, hi) = interval;
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(CoverError::PreconditionViolated(format!("[{lo}, {hi}] is not a compact interval")));
    }
    let seq = ParamSequence::integers();
    let b_int = b.ceil().max(1.0);
    let layout = sphere_layout(d, delta, b_int, &seq)?;
    let q = layout.q_bound;
    let period = b_int as usize + q;
    let mut betas = vec![lo];
    loop {
        let m = betas.len();
        let next = betas[m - 1] + delta / ((m + 1) * period) as f64;
        if next > hi {
            break;
        }
        betas.push(next);
        // Each β_m needs at least one point; stop early if that alone is too many.
        if betas.len() > max_triples {
            return Err(CoverError::ResourceLimit(format!(
                "more than {max_triples} values beta_m are needed to sweep [{lo}, {hi}]"
            )));
        }
    }
    let mut triples = Vec::new();
    for (i, &beta) in betas.iter().enumerate() {
        let m = i + 1;
        let sc = cover_sphere_capped(d, delta, b_int, m * period, &seq, max_triples.saturating_sub(triples.len()))?;
        for p in sc.covering.points {
            // Index i of the integer sequence is the integer i + 1.
            triples.push(MultiplesTriple { alpha: beta, y: p.x, n: p.n as u64 + 1 });
        }
        if triples.len() > max_triples {
            return Err(CoverError::ResourceLimit(format!("more than {max_triples} triples")));
        }
    }
    Ok(MultiplesCovering { d, delta, b: b_int, interval, q, betas, triples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityPlan {
    /// `𝐍_p` for `p = 1..=p_max` (stored 0-based).
    pub sets: Vec<Vec<usize>>,
    pub q: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub delta: Vec<f64>,
    pub horizon: usize,
    /// Gap `G = 2·max_r (B_r + q_r)` inside each block.
    pub gap: usize,
    /// `1/(2G(2^{p_max}-1))`, a lower bound on each lower density.
    pub density_bound: f64,
    /// `min_{H/2 <= N <= H} |𝐍_p ∩ [0,N)|/N`.
    pub empirical_density: Vec<f64>,
}

/// Empirical lower density of a sorted set over `[h/2, h]`.
pub fn lower_density(set: &[usize], h: usize) -> f64 {
    let mut best = f64::INFINITY;
    let mut count = set.partition_point(|&x| x < h / 2);
    for n in (h / 2).max(1)..=h {
        while count < set.len() && set[count] < n {
            count += 1;
        }
        best = best.min(count as f64 / n as f64);
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

/// Sets `𝐍_p` of positive lower density for the windows of
/// [`cover_sphere`]: dyadic block `[2^t, 2^{t+1})` goes to
/// `p = (t mod p_max) + 1`, which places `2^t + B_p + iG` while `<= 2^{t+1} - G`.
pub fn density_blocks(
    b: &[f64],
    delta: &[f64],
    seq: &ParamSequence,
    p_max: usize,
    horizon: usize,
    d: usize,
) -> Result<DensityPlan, CoverError> {
    if p_max == 0 || b.len() < p_max || delta.len() < p_max {
        return Err(CoverError::PreconditionViolated("need p_max >= 1 budgets and radii".into()));
    }
    let mut q = Vec::new();
    for p in 0..p_max {
        q.push(sphere_layout(d, delta[p], b[p], seq)?.q_bound);
    }
    let gap = (0..p_max).map(|p| 2 * (b[p].ceil() as usize + q[p])).max().unwrap();
    let mut sets = vec![Vec::new(); p_max];
    let mut t = 0u32;
    while (1usize << t) <= horizon {
        let p = t as usize % p_max;
        let lo = 1usize << t;
        let hi = lo << 1;
        let mut x = lo + b[p].ceil() as usize;
        while x + gap <= hi && x <= horizon {
            sets[p].push(x);
            x += gap;
        }
        t += 1;
    }
    let empirical: Vec<f64> = sets.iter().map(|s| lower_density(s, horizon)).collect();
    if let Some(p) = empirical.iter().position(|&e| e <= 0.0) {
        return Err(CoverError::Sequence(SeqError::HorizonTooSmall(format!(
            "set N_{} has zero density up to {horizon} (block gap {gap})",
            p + 1
        ))));
    }
    let density_bound = 1.0 / (2.0 * gap as f64 * ((1u64 << p_max) - 1) as f64);
    Ok(DensityPlan {
        sets,
        q,
        b: b[..p_max].to_vec(),
        delta: delta[..p_max].to_vec(),
        horizon,
        gap,
        density_bound,
        empirical_density: empirical,
    })
}

/// Checks the four plan invariants; returns one message per failure.
pub fn check_density_plan(plan: &DensityPlan) -> Vec<String> {
    let mut out = Vec::new();
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (p, s) in plan.sets.iter().enumerate() {
        for &x in s {
            if let Some(r) = owner.insert(x, p) {
                out.push(format!("{x} lies in N_{} and N_{}", r + 1, p + 1));
            }
        }
        if let Some(&m) = s.first() {
            if (m as f64) < plan.b[p] {
                out.push(format!("min N_{} = {m} < B = {}", p + 1, plan.b[p]));
            }
        }
    }
    let mut all: Vec<(usize, usize)> = plan.sets.iter().enumerate().flat_map(|(p, s)| s.iter().map(move |&x| (x, p))).collect();
    all.sort_unstable();
    let need = |p: usize, r: usize| plan.b[p] + plan.b[r] + (plan.q[p] + plan.q[r]) as f64;
    let widest = (0..plan.sets.len()).map(|p| need(p, p)).fold(0.0, f64::max);
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let (x, p) = all[i];
            let (y, r) = all[j];
            if (y - x) as f64 >= widest {
                break;
            }
            if ((y - x) as f64) < need(p, r) {
                out.push(format!("|{y} - {x}| < B_p + B_r + q_p + q_r for p = {}, r = {}", p + 1, r + 1));
            }
        }
    }
    for (p, s) in plan.sets.iter().enumerate() {
        let e = lower_density(s, plan.horizon);
        if e < plan.density_bound {
            out.push(format!("lower density of N_{} is {e:.4e} < {:.4e}", p + 1, plan.density_bound));
        }
    }
    out
}

/// Test directions on `S^{d-1}`: `±1` for `d = 1`, an equally spaced angle
/// grid of `count` points for `d = 2`, seeded uniform samples otherwise.
pub fn sphere_samples(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                // Box-Muller normals, then normalised.
                let x: Vec<f64> = (0..d)
                    .map(|_| {
                        let u: f64 = 1.0 - rng.gen::<f64>();
                        let v: f64 = rng.gen();
                        (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
                    })
                    .collect();
                let r = norm(&x);
                if r > 1e-12 {
                    out.push(x.iter().map(|t| t / r).collect());
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_land_on_sphere() {
        for ch in half_arc_charts() {
            assert!((norm(&ch.map(&[0.3])) - 1.0).abs() < 1e-12);
        }
        for ch in cube_face_charts() {
            assert!((norm(&ch.map(&[0.2, 0.9])) - 1.0).abs() < 1e-12);
            assert!(ch.c > 2.0 && ch.c < 2.6, "c = {}", ch.c);
        }
    }

    #[test]
    fn zero_sphere_window() {
        let sc = cover_sphere(1, 0.5, 3.0, 10, &ParamSequence::integers()).unwrap();
        assert_eq!(sc.covering.points.len(), 2);
        assert_eq!(sc.q, 1 + 3 + 1);
        assert!(sc.q <= sc.layout.q_bound);
    }

    #[test]
    fn single_block_progression() {
        let plan = density_blocks(&[2.0], &[0.5], &ParamSequence::integers(), 1, 4000, 1).unwrap();
        assert!(check_density_plan(&plan).is_empty());
        let s = &plan.sets[0];
        assert!(s.windows(2).all(|w| w[1] - w[0] >= 2 * (2 + plan.q[0])));
    }
}
