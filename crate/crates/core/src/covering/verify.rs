use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{dist, AxisBox, Covering, SpatialHash, TAU};
use super::boxes::index_at_least;

const MAX_LISTED: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationViolation {
    pub i: usize,
    pub j: usize,
    pub n_i: usize,
    pub n_j: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub method: String,
    pub points: usize,
    #[serde(rename = "C")]
    pub c: f64,
    /// Pairs closer than `C(1-τ)`.
    pub violation_count: usize,
    pub violations: Vec<SeparationViolation>,
    /// Smallest distance among the pairs examined (all pairs closer than
    /// `C` are always examined).
    pub min_distance: Option<f64>,
    pub ok: bool,
}

impl SeparationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,n_i,n_j,distance\n");
        for v in &self.violations {
            out.push_str(&format!("{},{},{},{},{:.17e}\n", v.i, v.j, v.n_i, v.n_j, v.distance));
        }
        out
    }
}

struct SepScan {
    c: f64,
    count: usize,
    list: Vec<SeparationViolation>,
    min: Option<f64>,
}

impl SepScan {
    fn see(&mut self, cov: &Covering, i: usize, j: usize, dd: f64) {
        self.min = Some(self.min.map_or(dd, |m: f64| m.min(dd)));
        if dd < self.c * (1.0 - TAU) {
            self.count += 1;
            if self.list.len() < MAX_LISTED {
                self.list.push(SeparationViolation { i, j, n_i: cov.points[i].n, n_j: cov.points[j].n, distance: dd });
            }
        }
    }

    fn finish(self, method: &str, cov: &Covering) -> SeparationReport {
        SeparationReport {
            method: method.into(),
            points: cov.points.len(),
            c: self.c,
            violation_count: self.count,
            ok: self.count == 0,
            violations: self.list,
            min_distance: self.min,
        }
    }
}

/// Condition (A): `‖λ_n x - λ_m y‖ >= C` for all distinct points. Buckets
/// of side `C` make the neighbour scan exhaustive for pairs closer than `C`.
pub fn verify_separation(cov: &Covering, c: f64) -> SeparationReport {
    let scaled = cov.scaled();
    let mut scan = SepScan { c, count: 0, list: Vec::new(), min: None };
    if c > 0.0 && c.is_finite() {
        let mut hash = SpatialHash::new(cov.dim, c);
        for (i, s) in scaled.iter().enumerate() {
            let mut near = Vec::new();
            hash.near(s, |j| near.push(j));
            near.sort_unstable();
            for j in near {
                scan.see(cov, j, i, dist(&scaled[j], s));
            }
            hash.insert(s, i);
        }
    }
    scan.finish("spatial-hash", cov)
}

/// Same contract as [`verify_separation`] by the quadratic all-pairs scan.
pub fn verify_separation_bruteforce(cov: &Covering, c: f64) -> SeparationReport {
    let scaled = cov.scaled();
    let mut scan = SepScan { c, count: 0, list: Vec::new(), min: None };
    for i in 0..scaled.len() {
        for j in 0..i {
            let dd = dist(&scaled[i], &scaled[j]);
            if dd < c {
                scan.see(cov, j, i, dd);
            } else {
                scan.min = Some(scan.min.map_or(dd, |m: f64| m.min(dd)));
            }
        }
    }
    scan.finish("all-pairs", cov)
}

#[derive(Clone, Debug)]
pub struct ApproxOptions {
    /// Also try every `m ≠ n` in `[N, M]`; `None` decides by `max_balls`.
    pub all_m: Option<bool>,
    pub max_balls: usize,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions { all_m: None, max_balls: 2_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub mode: String,
    pub grid_step: f64,
    pub grid_points: u64,
    pub uncovered_count: u64,
    pub uncovered: Vec<Vec<f64>>,
    /// Smallest `ε - ‖λ_m x - λ_n x_{n,k}‖` over grid points (a lower bound
    /// on cells certified in one piece).
    pub worst_slack: Option<f64>,
    /// `λ_M · grid_step · √d`: slack needed for the grid check to extend to
    /// every point of `K` by the Lipschitz bound.
    pub required_margin: f64,
    pub covered: bool,
    /// True when the grid check is backed by the margin argument.
    pub sound: bool,
    pub notes: Vec<String>,
}

impl ApproxReport {
    pub fn to_csv(&self) -> String {
        let d = self.uncovered.first().map_or(1, Vec::len);
        let mut out = (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for x in &self.uncovered {
            out.push_str(&x.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Ball `B(center, ε/λ)` in `K`-space, from a point and a multiplier `λ_m`.
struct Ball {
    center: Vec<f64>,
    radius: f64,
    lambda: f64,
}

fn box_dist(center: &[f64], lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for i in 0..center.len() {
        let c = center[i];
        let dn = if c < lo[i] {
            lo[i] - c
        } else if c > hi[i] {
            c - hi[i]
        } else {
            0.0
        };
        let df = (c - lo[i]).abs().max((c - hi[i]).abs());
        near += dn * dn;
        far += df * df;
    }
    (near.sqrt(), far.sqrt())
}

struct Grid<'a> {
    b: &'a AxisBox,
    step: f64,
    counts: Vec<usize>,
}

impl Grid<'_> {
    fn coord(&self, axis: usize, i: usize) -> f64 {
        (self.b.lower[axis] + i as f64 * self.step).min(self.b.upper(axis))
    }
}

struct Walk<'a> {
    balls: &'a [Ball],
    eps: f64,
    need: f64,
    points: u64,
    uncovered: u64,
    listed: Vec<Vec<f64>>,
    worst: Option<f64>,
}

impl Walk<'_> {
    fn slack(&mut self, s: f64, count: u64) {
        self.points += count;
        self.worst = Some(self.worst.map_or(s, |w: f64| w.min(s)));
    }

    fn cell(&mut self, g: &Grid<'_>, lo: &[usize], hi: &[usize], cands: &[u32]) {
        let d = lo.len();
        let clo: Vec<f64> = (0..d).map(|i| g.coord(i, lo[i])).collect();
        let chi: Vec<f64> = (0..d).map(|i| g.coord(i, hi[i])).collect();
        let count: u64 = (0..d).map(|i| (hi[i] - lo[i] + 1) as u64).product();
        let mut keep = Vec::new();
        let mut best_whole: Option<f64> = None;
        for &k in cands {
            let ball = &self.balls[k as usize];
            let (near, far) = box_dist(&ball.center, &clo, &chi);
            if near < ball.radius {
                keep.push(k);
                let s = self.eps - ball.lambda * far;
                if s >= self.need && best_whole.map_or(true, |b| s > b) {
                    best_whole = Some(s);
                }
            }
        }
        if let Some(s) = best_whole {
            return self.slack(s, count);
        }
        if keep.is_empty() {
            self.points += count;
            self.uncovered += count;
            let mut idx = lo.to_vec();
            'all: loop {
                if self.listed.len() >= MAX_LISTED {
                    break;
                }
                self.listed.push((0..d).map(|i| g.coord(i, idx[i])).collect());
                let mut i = 0;
                loop {
                    if i == d {
                        break 'all;
                    }
                    idx[i] += 1;
                    if idx[i] <= hi[i] {
                        break;
                    }
                    idx[i] = lo[i];
                    i += 1;
                }
            }
            return;
        }
        if count == 1 {
            let s = keep
                .iter()
                .map(|&k| {
                    let b = &self.balls[k as usize];
                    self.eps - b.lambda * dist(&b.center, &clo)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if s <= 0.0 {
                self.uncovered += 1;
                if self.listed.len() < MAX_LISTED {
                    self.listed.push(clo);
                }
            }
            return self.slack(s, 1);
        }
        // Split every axis of extent > 1 into halves.
        let splits: Vec<Vec<(usize, usize)>> = (0..d)
            .map(|i| {
                if hi[i] > lo[i] {
                    let mid = lo[i] + (hi[i] - lo[i]) / 2;
                    vec![(lo[i], mid), (mid + 1, hi[i])]
                } else {
                    vec![(lo[i], hi[i])]
                }
            })
            .collect();
        let mut pick = vec![0usize; d];
        loop {
            let l2: Vec<usize> = (0..d).map(|i| splits[i][pick[i]].0).collect();
            let h2: Vec<usize> = (0..d).map(|i| splits[i][pick[i]].1).collect();
            self.cell(g, &l2, &h2, &keep);
            let mut i = 0;
            loop {
                if i == d {
                    return;
                }
                pick[i] += 1;
                if pick[i] < splits[i].len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
        }
    }
}

/// Condition (B) on the grid of `K` with spacing `grid_step`: every grid
/// point `x` must satisfy `‖λ_m x - λ_n x_{n,k}‖ < ε` for some point and
/// some admissible `m`. Cells contained in a single ball (with the margin
/// to spare) are accepted whole; the rest is refined down to grid points.
pub fn verify_approx(cov: &Covering, k: &[AxisBox], grid_step: f64) -> ApproxReport {
    verify_approx_with(cov, k, grid_step, &ApproxOptions::default())
}

pub fn verify_approx_with(cov: &Covering, k: &[AxisBox], grid_step: f64, opts: &ApproxOptions) -> ApproxReport {
    let d = cov.dim;
    let eps = cov.params.epsilon;
    let seq = &cov.seq;
    let lambda_max = cov.lambda_max();
    let required = lambda_max * grid_step * (d as f64).sqrt();
    let mut notes = Vec::new();
    if k.is_empty() {
        notes.push("K is empty: vacuously covered".into());
        return ApproxReport {
            mode: "empty".into(),
            grid_step,
            grid_points: 0,
            uncovered_count: 0,
            uncovered: vec![],
            worst_slack: None,
            required_margin: required,
            covered: true,
            sound: true,
            notes,
        };
    }
    assert!(grid_step > 0.0, "grid_step must be positive");

    let (n_lo, n_hi) = (cov.params.n, cov.params.m);
    let norms: Vec<(f64, f64)> = k.iter().map(AxisBox::norm_range).collect();
    let kmin = norms.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let kmax = norms.iter().map(|r| r.1).fold(0.0, f64::max);
    let m_range = |bn: f64| -> (usize, usize) {
        let lo_l = ((bn - eps) / kmax).max(0.0);
        let lo = index_at_least(seq, lo_l * (1.0 - 1e-12), n_lo, n_hi + 1);
        let hi = if kmin > 0.0 {
            index_at_least(seq, (bn + eps) / kmin * (1.0 + 1e-12), n_lo, n_hi + 1)
        } else {
            n_hi + 1
        };
        (lo, hi)
    };
    let mut total_balls = 0usize;
    for p in &cov.points {
        let bn = seq.value_f64(p.n) * super::norm(&p.x);
        let (lo, hi) = m_range(bn);
        total_balls = total_balls.saturating_add(hi.saturating_sub(lo));
    }
    let all_m = opts.all_m.unwrap_or(total_balls <= opts.max_balls);
    let mut balls = Vec::new();
    for p in &cov.points {
        let ln = seq.value_f64(p.n);
        if all_m {
            let b: Vec<f64> = p.x.iter().map(|v| v * ln).collect();
            let (lo, hi) = m_range(super::norm(&b));
            for m in lo..hi {
                let lm = seq.value_f64(m);
                balls.push(Ball { center: b.iter().map(|v| v / lm).collect(), radius: eps / lm, lambda: lm });
            }
        } else {
            balls.push(Ball { center: p.x.clone(), radius: eps / ln, lambda: ln });
        }
    }
    let mode = if all_m {
        format!("all m in [{n_lo}, {n_hi}]")
    } else {
        notes.push("only m = n is tried: a sufficient check".into());
        "m = n".to_string()
    };
    let cands: Vec<u32> = (0..balls.len() as u32).collect();
    let mut walk = Walk { balls: &balls, eps, need: required, points: 0, uncovered: 0, listed: vec![], worst: None };
    for b in k {
        let counts: Vec<usize> = (0..d).map(|_| (b.side / grid_step).ceil().max(0.0) as usize + 1).collect();
        let g = Grid { b, step: grid_step, counts };
        let hi: Vec<usize> = g.counts.iter().map(|c| c - 1).collect();
        walk.cell(&g, &vec![0; d], &hi, &cands);
    }
    let covered = walk.uncovered == 0;
    let sound = covered && walk.worst.is_some_and(|w| w >= required);
    if covered && !sound {
        notes.push(format!(
            "every grid point is covered but the worst slack {:.3e} is below the Lipschitz margin {:.3e}",
            walk.worst.unwrap_or(f64::NAN),
            required
        ));
    }
    ApproxReport {
        mode,
        grid_step,
        grid_points: walk.points,
        uncovered_count: walk.uncovered,
        uncovered: walk.listed,
        worst_slack: walk.worst,
        required_margin: required,
        covered,
        sound,
        notes,
    }
}

/// Indexes unit-sphere nets by dyadic bands of `λ_n`, so that balls of
/// radius `r/λ_n` are found by a `3^d` bucket scan per band.
pub(crate) struct BandIndex {
    bands: BTreeMap<i32, SpatialHash>,
}

impl BandIndex {
    pub fn new(d: usize, r: f64, lambdas: &[f64], centers: &[Vec<f64>]) -> Self {
        let mut bands: BTreeMap<i32, SpatialHash> = BTreeMap::new();
        for (i, (l, x)) in lambdas.iter().zip(centers).enumerate() {
            let t = l.log2().floor() as i32;
            bands
                .entry(t)
                .or_insert_with(|| SpatialHash::new(d, r / 2f64.powi(t)))
                .insert(x, i);
        }
        BandIndex { bands }
    }

    pub fn near(&self, u: &[f64], mut visit: impl FnMut(usize)) {
        for h in self.bands.values() {
            h.near(u, &mut visit);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereCoverageReport {
    pub samples: usize,
    pub uncovered_count: usize,
    pub uncovered: Vec<Vec<f64>>,
    /// Smallest `max_{n,k} (δ - λ_n‖u - x_{n,k}‖)` over the samples.
    pub worst_margin: Option<f64>,
    pub covered: bool,
}

/// Ball coverage `u ∈ B(x_{n,k}, δ/λ_n)` for every sample direction `u`.
pub fn verify_sphere_coverage(cov: &Covering, delta: f64, samples: &[Vec<f64>]) -> SphereCoverageReport {
    let lambdas: Vec<f64> = cov.points.iter().map(|p| cov.seq.value_f64(p.n)).collect();
    let centers: Vec<Vec<f64>> = cov.points.iter().map(|p| p.x.clone()).collect();
    let index = BandIndex::new(cov.dim, delta, &lambdas, &centers);
    let mut rep = SphereCoverageReport { samples: samples.len(), uncovered_count: 0, uncovered: vec![], worst_margin: None, covered: true };
    for u in samples {
        let mut best = f64::NEG_INFINITY;
        index.near(u, |i| best = best.max(delta - lambdas[i] * dist(u, &centers[i])));
        if best <= 0.0 {
            rep.uncovered_count += 1;
            if rep.uncovered.len() < MAX_LISTED {
                rep.uncovered.push(u.clone());
            }
        }
        rep.worst_margin = Some(rep.worst_margin.map_or(best, |w: f64| w.min(best)));
    }
    rep.covered = rep.uncovered_count == 0;
    rep
}

/// Product-grid oracle for the multiples covering: every `(α, y)` needs a
/// triple with `|α - α_j| < δ/n_j` and `‖y - y_j‖ <= δ/n_j`.
pub fn verify_multiples(
    triples: &[super::MultiplesTriple],
    alphas: &[f64],
    samples: &[Vec<f64>],
    delta: f64,
) -> SphereCoverageReport {
    let d = samples.first().map_or(1, Vec::len);
    let lambdas: Vec<f64> = triples.iter().map(|t| t.n as f64).collect();
    let centers: Vec<Vec<f64>> = triples.iter().map(|t| t.y.clone()).collect();
    let index = BandIndex::new(d, delta, &lambdas, &centers);
    let mut rep = SphereCoverageReport {
        samples: samples.len() * alphas.len(),
        uncovered_count: 0,
        uncovered: vec![],
        worst_margin: None,
        covered: true,
    };
    for &a in alphas {
        for u in samples {
            let mut best = f64::NEG_INFINITY;
            index.near(u, |i| {
                let t = &triples[i];
                let m = (delta - t.n as f64 * (a - t.alpha).abs()).min(delta - t.n as f64 * dist(u, &t.y));
                best = best.max(m);
            });
            if best <= 0.0 {
                rep.uncovered_count += 1;
                if rep.uncovered.len() < MAX_LISTED {
                    let mut row = vec![a];
                    row.extend(u);
                    rep.uncovered.push(row);
                }
            }
            rep.worst_margin = Some(rep.worst_margin.map_or(best, |w: f64| w.min(best)));
        }
    }
    rep.covered = rep.uncovered_count == 0;
    rep
}
