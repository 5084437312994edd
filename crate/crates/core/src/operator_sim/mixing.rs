use super::bumps::probe_directions;
use super::{lp_distance, norm_lp, translate, BumpSum, Field, NormEstimate, SimError, WeightedGrid};
use crate::covering::TAU;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Smallest multiple `C` of the grid step with `C >= 2A` and
/// `∫_{‖x‖ >= C-A} w <= (ε/‖f‖_∞)^p`. Translates of a field supported in
/// `B(0, A)` by `C`-separated vectors of norm `>= C` then sum to norm `<= ε`.
pub fn tail_constant(support_radius: f64, eps: f64, sup: f64, grid: &WeightedGrid) -> Result<f64, SimError> {
    if !(eps > 0.0) || !(support_radius >= 0.0) || !(sup >= 0.0) {
        return Err(SimError::InvalidArgument("need eps > 0, A >= 0, sup >= 0".into()));
    }
    let h = grid.step();
    let d = grid.d();
    let p = grid.spec.p;
    let k0 = (2.0 * support_radius / h).ceil().max(1.0) as u64;
    if sup == 0.0 {
        return Ok(k0 as f64 * h);
    }
    let budget = (eps / sup).powf(p);
    if budget == 0.0 {
        return Err(SimError::TailNotReachable { c: f64::INFINITY, half_width: grid.half_width() });
    }
    let ok = |k: u64| grid.spec.weight.tail(d, k as f64 * h - support_radius) <= budget;
    let cap = (1e7 / h) as u64;
    let mut hi = k0;
    while !ok(hi) {
        if hi > cap {
            return Err(SimError::TailNotReachable { c: f64::INFINITY, half_width: grid.half_width() });
        }
        hi *= 2;
    }
    let mut lo = k0;
    if !ok(lo) {
        // invariant: !ok(lo), ok(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = lo;
    }
    let c = hi as f64 * h;
    if c > grid.half_width() {
        return Err(SimError::TailNotReachable { c, half_width: grid.half_width() });
    }
    Ok(c)
}

/// Fraction of `Σ|f|` (unweighted) kept by `τ_a f` on the grid.
pub fn retained_mass(f: &Field, a: &[f64]) -> f64 {
    let before: f64 = f.values.iter().map(|v| v.abs()).sum();
    if before == 0.0 {
        return 1.0;
    }
    translate(f, a).values.iter().map(|v| v.abs()).sum::<f64>() / before
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOutcome<F> {
    pub field: F,
    pub c: f64,
    pub eps: f64,
    /// `‖f - g‖`.
    pub distance_g: NormEstimate,
    /// `‖τ_{a_j} f - h‖` per shift.
    pub distances_h: Vec<NormEstimate>,
    /// Largest step-halving error among the estimates.
    pub tolerance: f64,
    /// `min_j min_{i≠j} ‖a_j - a_i‖` and the smallest gap among the
    /// relabelled shifts `b_i = a_j - a_i`.
    pub relabel_min_norm: f64,
    pub relabel_min_gap: f64,
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

const RELABEL_CHECKS: usize = 64;

fn check_shifts(shifts: &[Vec<f64>], c: f64, d: usize) -> Result<(f64, f64), SimError> {
    let floor = c * (1.0 - TAU);
    for (i, a) in shifts.iter().enumerate() {
        if a.len() != d {
            return Err(SimError::InvalidArgument(format!("shift {i} has dimension {}", a.len())));
        }
        if norm(a) < floor {
            return Err(SimError::SeparationViolated(format!("‖a_{i}‖ = {} < C = {c}", norm(a))));
        }
        for (j, b) in shifts.iter().enumerate().skip(i + 1) {
            let t = norm(&diff(a, b));
            if t < floor {
                return Err(SimError::SeparationViolated(format!("‖a_{i} - a_{j}‖ = {t} < C = {c}")));
            }
        }
    }
    // The relabelled family b_i = a_j - a_i must satisfy the same
    // constraints for every j. Recomputed directly for the first j's; the
    // remaining ones repeat the same pairwise distances.
    let (mut min_norm, mut min_gap) = (f64::INFINITY, f64::INFINITY);
    for aj in shifts.iter().take(RELABEL_CHECKS) {
        let b: Vec<Vec<f64>> = shifts.iter().filter(|ai| *ai != aj).map(|ai| diff(aj, ai)).collect();
        for (i, bi) in b.iter().enumerate() {
            min_norm = min_norm.min(norm(bi));
            for bl in &b[i + 1..] {
                min_gap = min_gap.min(norm(&diff(bi, bl)));
            }
        }
    }
    if min_norm < floor || min_gap < floor {
        return Err(SimError::SeparationViolated(format!(
            "relabelled shifts reach norm {min_norm} / gap {min_gap} < C = {c}"
        )));
    }
    Ok((min_norm, min_gap))
}

fn finish<F>(
    field: F,
    c: f64,
    eps: f64,
    distance_g: NormEstimate,
    distances_h: Vec<NormEstimate>,
    relabel: (f64, f64),
) -> Result<MixingOutcome<F>, SimError> {
    let tolerance = distances_h.iter().chain([&distance_g]).map(|e| e.error).fold(0.0, f64::max);
    if distance_g.value >= eps + tolerance {
        return Err(SimError::EstimateViolated(format!("‖f - g‖ = {} >= eps = {eps}", distance_g.value)));
    }
    if let Some((j, e)) = distances_h.iter().enumerate().find(|(_, e)| e.value >= eps + tolerance) {
        return Err(SimError::EstimateViolated(format!("‖T_a{j} f - h‖ = {} >= eps = {eps}", e.value)));
    }
    Ok(MixingOutcome {
        field,
        c,
        eps,
        distance_g,
        distances_h,
        tolerance,
        relabel_min_norm: relabel.0,
        relabel_min_gap: relabel.1,
    })
}

const MASS_FLOOR: f64 = 1.0 - 1e-6;

/// `f = g + Σ τ_{-a_i} h` on the grid, with both estimates `‖f - g‖ < ε`
/// and `‖τ_{a_j} f - h‖ < ε` asserted (up to the quadrature tolerance).
/// Every translate involved must keep `1 - 10⁻⁶` of its mass on the grid.
pub fn mixing_vector(g: &Field, h: &Field, shifts: &[Vec<f64>], c: f64, eps: f64) -> Result<MixingOutcome<Field>, SimError> {
    let relabel = check_shifts(shifts, c, g.grid.d())?;
    let mut needed: Vec<(&Field, Vec<f64>)> = Vec::new();
    for (j, aj) in shifts.iter().enumerate() {
        needed.push((g, aj.clone()));
        needed.push((h, aj.iter().map(|v| -v).collect()));
        for (i, ai) in shifts.iter().enumerate() {
            if i != j {
                needed.push((h, diff(aj, ai)));
            }
        }
    }
    for (f, a) in &needed {
        let kept = retained_mass(f, a);
        if kept < MASS_FLOOR {
            return Err(SimError::GridTooSmall(format!("translate by {a:?} keeps {kept} of the mass")));
        }
    }
    let mut f = g.clone();
    for a in shifts {
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        f = f.add(&translate(h, &neg));
    }
    let distance_g = lp_distance(&f, g);
    let distances_h = shifts.iter().map(|a| lp_distance(&translate(&f, a), h)).collect();
    finish(f, c, eps, distance_g, distances_h, relabel)
}

/// [`mixing_vector`] for closed-form fields; translates are sampled exactly,
/// so no mass check is needed.
pub fn mixing_bumps(
    g: &BumpSum,
    h: &BumpSum,
    shifts: &[Vec<f64>],
    c: f64,
    eps: f64,
    grid: &Arc<WeightedGrid>,
) -> Result<MixingOutcome<BumpSum>, SimError> {
    let relabel = check_shifts(shifts, c, grid.d())?;
    let mut f = g.clone();
    f.add_translates(h, shifts, 1.0);
    let zero = vec![0.0; grid.d()];
    let gs = g.sample(grid, &zero);
    let hs = h.sample(grid, &zero);
    let distance_g = f.distance_to(grid, &zero, &gs);
    let distances_h = shifts.iter().map(|a| f.distance_to(grid, a, &hs)).collect();
    finish(f, c, eps, distance_g, distances_h, relabel)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub r: f64,
    /// Largest `‖τ_a f‖` over the probed directions with `‖a‖ = r`.
    pub sup: f64,
}

/// Empirical decay of `‖τ_a f‖` along the axis and diagonal directions.
pub fn decay_profile(f: &Field, radii: &[f64]) -> Vec<DecayPoint> {
    let dirs = probe_directions(f.grid.d());
    radii
        .iter()
        .map(|&r| {
            let sup = dirs
                .iter()
                .map(|u| {
                    let a: Vec<f64> = u.iter().map(|t| t * r).collect();
                    norm_lp(&translate(f, &a)).value
                })
                .fold(0.0, f64::max);
            DecayPoint { r, sup }
        })
        .collect()
}

/// Least-squares slope `s` of `ln sup` against `ln r`, returned as `-s`
/// (so `‖τ_a f‖ ≈ A‖a‖^{-s}` gives `s`). Zero values are skipped.
pub fn fit_decay_exponent(profile: &[DecayPoint]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        profile.iter().filter(|p| p.r > 0.0 && p.sup > 0.0).map(|p| (p.r.ln(), p.sup.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Base of the packing constant: `κ_d = 5^d`.
pub const KAPPA_BASE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellCount {
    pub k: u32,
    pub count: usize,
    /// `κ_d 2^{kd}`.
    pub bound: f64,
}

/// `#{i : 2^k <= ‖a_i‖ < 2^{k+1}}` for `k >= 0`, with the packing bound that
/// holds for 1-separated points (balls of radius 1/2 around them fit in a
/// ball of radius `2^{k+1} + 1/2 <= 5·2^k/2`).
pub fn shell_counts(points: &[Vec<f64>]) -> Vec<ShellCount> {
    let d = points.first().map_or(1, |p| p.len()) as i32;
    let mut counts: Vec<usize> = Vec::new();
    for a in points {
        let r = norm(a);
        if r < 1.0 {
            continue;
        }
        let k = r.log2().floor() as usize;
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| ShellCount {
            k: k as u32,
            count,
            bound: KAPPA_BASE.powi(d) * 2f64.powi(k as i32 * d),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_sim::{GridSpec, Weight};

    fn grid() -> Arc<WeightedGrid> {
        WeightedGrid::new(GridSpec { d: 1, half_width: 30.0, step: 0.05, weight: Weight::Gaussian, p: 2.0 }).unwrap()
    }

    #[test]
    fn tail_constant_monotone() {
        let g = grid();
        let big = tail_constant(1.0, 1.0, 1.0, &g).unwrap();
        let small = tail_constant(1.0, 0.01, 1.0, &g).unwrap();
        assert!(big <= small);
        let narrow =
            WeightedGrid::new(GridSpec { d: 1, half_width: 5.0, step: 0.05, weight: Weight::Gaussian, p: 2.0 }).unwrap();
        assert!(matches!(tail_constant(1.0, 1e-12, 1.0, &narrow), Err(SimError::TailNotReachable { .. })));
    }

    #[test]
    fn empty_shifts_give_g() {
        let g = grid();
        let a = Field::from_fn(&g, |x| (1.0 - x[0] * x[0]).max(0.0));
        let out = mixing_vector(&a, &a, &[], 3.0, 0.1).unwrap();
        assert_eq!(out.field, a);
    }

    #[test]
    fn close_shifts_rejected() {
        let g = grid();
        let a = Field::zeros(&g);
        let err = mixing_vector(&a, &a, &[vec![5.0], vec![6.0]], 3.0, 0.1).unwrap_err();
        assert!(matches!(err, SimError::SeparationViolated(_)));
    }

    #[test]
    fn shells_within_packing_bound() {
        let pts: Vec<Vec<f64>> = (1..200).map(|i| vec![i as f64]).collect();
        for s in shell_counts(&pts) {
            assert!(s.count as f64 <= s.bound);
        }
    }
}
