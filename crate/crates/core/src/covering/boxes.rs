use std::collections::HashMap;

use num_bigint::BigInt;

use super::{dist, AxisBox, CoverError, CoverParams, CoverPoint, Covering, SpatialHash, TAU};
use crate::rational::{q_to_f64, Q};
use crate::sequences::{b_constant, check_sg, split_with_floor, ParamSequence, PlanNode, SeqError, SgWitness, SplitPlan};

pub const DEFAULT_MAX_POINTS: usize = 5_000_000;

/// Smallest dyadic rational with denominator `2^30` that is `>= x`.
pub(crate) fn q_upper(x: f64) -> Q {
    let scale = (1u64 << 30) as f64;
    let num = (x * scale).ceil() as i128 + 1;
    Q::new(BigInt::from(num), BigInt::from(1u64 << 30))
}

/// Smallest index in `lo..hi` with `λ >= target`, or `hi` if there is none.
pub(crate) fn index_at_least(seq: &ParamSequence, target: f64, lo: usize, hi: usize) -> usize {
    if hi <= lo || target <= seq.value_f64(lo) {
        return lo;
    }
    if !target.is_finite() {
        return hi;
    }
    seq.first_at_least(&crate::rational::q_from_f64(target), lo, hi - 1).unwrap_or(hi)
}

/// Per-coordinate step used so that coordinate errors of `ε'` give a
/// Euclidean error below `ε`.
pub(crate) fn euclid_step(epsilon: f64, d: usize) -> f64 {
    epsilon * (1.0 - TAU) / (d as f64).sqrt()
}

fn precondition(msg: String) -> CoverError {
    CoverError::PreconditionViolated(msg)
}

/// Offsets `ε'·Σ_{j=1..k} 1/μ_{anchors[j]}` and the spacing `C/μ_{anchors[0]}`
/// for each coordinate of each leaf.
struct LeafAxes {
    n: usize,
    omega: f64,
    axes: Vec<(f64, f64)>,
}

fn leaf_axes(
    plan: &SplitPlan,
    nodes: &HashMap<&[usize], &PlanNode>,
    tuple: &[usize],
    mu: &impl Fn(usize) -> f64,
    step: f64,
    c: f64,
) -> Vec<(f64, f64)> {
    (0..plan.d)
        .map(|i| {
            let node = nodes[&tuple[..i]];
            let spacing = c / mu(node.anchors[0]);
            let offset: f64 = (1..=tuple[i]).map(|j| step / mu(node.anchors[j])).sum();
            (offset, spacing)
        })
        .collect()
}

/// Number of lattice values `b + offset + α·spacing <= b + γ`, `α >= 0`.
fn axis_count(side: f64, offset: f64, spacing: f64) -> usize {
    let room = side * (1.0 + 1e-12) + 1e-15 - offset;
    if room < 0.0 {
        0
    } else {
        (room / spacing).floor() as usize + 1
    }
}

/// Explicit net of the box `L = ∏[b_i, b_i+γ]` from a splitting plan whose
/// indices are positions of the growth witness `sg`.
///
/// Point `x` attached to leaf `(k_1..k_d)` has coordinates
/// `b_i + α_i C/μ_{anchor_0} + ε' Σ_{j<=k_i} 1/μ_{anchor_j}` (anchors of the
/// node `(k_1..k_{i-1})`), with `ε' = ε/√d` so that the per-axis bound gives
/// a Euclidean one.
pub fn cover_box(
    l: &AxisBox,
    plan: &SplitPlan,
    seq: &ParamSequence,
    sg: &SgWitness,
    epsilon: f64,
    c: f64,
) -> Result<Covering, CoverError> {
    cover_box_capped(l, plan, seq, sg, epsilon, c, DEFAULT_MAX_POINTS)
}

pub(crate) fn cover_box_capped(
    l: &AxisBox,
    plan: &SplitPlan,
    seq: &ParamSequence,
    sg: &SgWitness,
    epsilon: f64,
    c: f64,
    max_points: usize,
) -> Result<Covering, CoverError> {
    let d = l.dim();
    if d == 0 || plan.d != d {
        return Err(precondition(format!("box dimension {d} does not match plan dimension {}", plan.d)));
    }
    if !(epsilon > 0.0 && c > 0.0 && l.side > 0.0) {
        return Err(precondition("need epsilon > 0, C > 0 and a box of positive side".into()));
    }
    if let Some(i) = (0..d).find(|&i| l.lower[i] <= 0.0) {
        return Err(precondition(format!("b_{} = {} <= 0", i + 1, l.lower[i])));
    }
    let rho = q_to_f64(&sg.rho);
    let gamma = l.side;
    let bmin = l.lower.iter().cloned().fold(f64::INFINITY, f64::min);
    let room = (rho - 1.0) * bmin;
    if gamma >= room {
        return Err(precondition(format!("gamma = {gamma} >= min_i (rho b_i - b_i) = {room} (rho = {rho})")));
    }
    let mu = |pos: usize| seq.value_f64(sg.indices[pos]);
    let floor = plan.root().anchors[0];
    let mu_p = mu(floor);
    if mu_p * (room - gamma) < c * (1.0 - 1e-12) {
        return Err(precondition(format!(
            "mu_P min_i (rho b_i - b_i - gamma) = {} < C = {c} (P = {floor})",
            mu_p * (room - gamma)
        )));
    }
    let step = euclid_step(epsilon, d);
    let a = q_to_f64(&plan.a);
    if a < (c / step) * (1.0 - 1e-12) {
        return Err(precondition(format!("plan budget A = {a} < C/eps' = {}", c / step)));
    }
    if plan.max_index().is_some_and(|m| m >= sg.indices.len()) {
        return Err(precondition("plan index beyond the witness".into()));
    }

    let nodes: HashMap<&[usize], &PlanNode> = plan.sr.iter().map(|n| (n.prefix.as_slice(), n)).collect();
    let mut leaves = Vec::with_capacity(plan.phi.len());
    let mut total = 0usize;
    for e in &plan.phi {
        let axes = leaf_axes(plan, &nodes, &e.tuple, &mu, step, c);
        let count = axes
            .iter()
            .map(|&(off, sp)| axis_count(gamma, off, sp))
            .try_fold(1usize, |acc, k| acc.checked_mul(k))
            .unwrap_or(usize::MAX);
        total = total.saturating_add(count);
        if total > max_points {
            return Err(CoverError::ResourceLimit(format!(
                "box net needs more than {max_points} points (mu_P = {mu_p:.3e})"
            )));
        }
        leaves.push(LeafAxes { n: sg.indices[e.index], omega: mu(e.index), axes });
    }

    let mut points = Vec::with_capacity(total);
    for leaf in &leaves {
        let counts: Vec<usize> = leaf.axes.iter().map(|&(o, s)| axis_count(gamma, o, s)).collect();
        if counts.contains(&0) {
            continue;
        }
        let mut alpha = vec![0usize; d];
        loop {
            let x = (0..d)
                .map(|i| l.lower[i] + leaf.axes[i].0 + alpha[i] as f64 * leaf.axes[i].1)
                .collect();
            points.push(CoverPoint { n: leaf.n, x });
            let mut i = 0;
            while i < d {
                alpha[i] += 1;
                if alpha[i] < counts[i] {
                    break;
                }
                alpha[i] = 0;
                i += 1;
            }
            if i == d {
                break;
            }
        }
        debug_assert!(leaf.omega > 0.0);
    }
    let mut cov = Covering::empty(d, CoverParams { epsilon, c, n: 0, m: 0 }, seq.clone());
    cov.points = points;
    cov.refresh_range();
    Ok(cov)
}

#[derive(Clone, Debug)]
pub struct CompactOptions {
    /// Last sequence index available to the growth witness.
    pub horizon: usize,
    pub max_points: usize,
    pub max_subboxes: usize,
}

impl Default for CompactOptions {
    fn default() -> Self {
        CompactOptions { horizon: 1 << 40, max_points: DEFAULT_MAX_POINTS, max_subboxes: 1 << 20 }
    }
}

/// Number of leaves of the bisection of `b` (saturating).
fn count_subboxes(b: &AxisBox, rho: f64, cap: usize) -> usize {
    let bmin = b.lower.iter().cloned().fold(f64::INFINITY, f64::min);
    if b.side <= (rho - 1.0) * bmin / 2.0 {
        return 1;
    }
    let mut total = 0usize;
    for h in b.bisect() {
        total = total.saturating_add(count_subboxes(&h, rho, cap));
        if total > cap {
            return total;
        }
    }
    total
}

/// Net of a finite union of boxes, each inside an open orthant.
///
/// Boxes are reflected into the positive orthant, bisected until
/// `side <= (ρ-1)·min b_i / 2`, and covered one after another in order of
/// increasing norm. Each start index `N_{i+1}` satisfies
/// `λ_{N_{i+1}}·min‖L_{i+1}‖ > λ_{M_i}·max_{j<=i} max‖L_j‖ + C`, so points of
/// different sub-boxes stay `C`-separated after scaling.
pub fn cover_compact(
    k: &[AxisBox],
    seq: &ParamSequence,
    epsilon: f64,
    c: f64,
    n_start: usize,
    opts: &CompactOptions,
) -> Result<Covering, CoverError> {
    let Some(first) = k.first() else {
        return Err(precondition("empty list of boxes".into()));
    };
    let d = first.dim();
    if k.iter().any(|b| b.dim() != d) {
        return Err(precondition("boxes of different dimensions".into()));
    }
    if !(epsilon > 0.0 && c > 0.0) {
        return Err(precondition("need epsilon > 0 and C > 0".into()));
    }
    let mut oriented = Vec::new();
    for (i, b) in k.iter().enumerate() {
        let Some(signs) = b.orthant() else {
            return Err(precondition(format!("box {i} meets a coordinate hyperplane")));
        };
        oriented.push((signs.clone(), b.reflect(&signs)));
    }

    let a = q_upper(c / euclid_step(epsilon, d));
    let budget = b_constant(d, &a);
    let sg = check_sg(seq, &budget, opts.horizon)?
        .ok_or_else(|| CoverError::NoWitness(format!("ratios never settle within horizon {}", opts.horizon)))?;
    let rho = q_to_f64(&sg.rho);

    let mut estimate = 0usize;
    for (_, b) in &oriented {
        estimate = estimate.saturating_add(count_subboxes(b, rho, opts.max_subboxes));
        if estimate > opts.max_subboxes {
            return Err(CoverError::ResourceLimit(format!(
                "more than {} sub-boxes of side <= (rho-1) b_min / 2 (rho = {rho})",
                opts.max_subboxes
            )));
        }
    }
    let mut subs: Vec<(Vec<f64>, AxisBox)> = Vec::new();
    for (signs, b) in oriented {
        let mut stack = vec![b];
        while let Some(b) = stack.pop() {
            let bmin = b.lower.iter().cloned().fold(f64::INFINITY, f64::min);
            if b.side > (rho - 1.0) * bmin / 2.0 {
                stack.extend(b.bisect());
            } else {
                subs.push((signs.clone(), b));
            }
        }
    }
    subs.sort_by(|x, y| {
        x.1.norm_range()
            .0
            .total_cmp(&y.1.norm_range().0)
            .then_with(|| x.1.lower.iter().zip(&y.1.lower).fold(std::cmp::Ordering::Equal, |o, (p, q)| o.then(p.total_cmp(q))))
            .then_with(|| x.0.iter().zip(&y.0).fold(std::cmp::Ordering::Equal, |o, (p, q)| o.then(p.total_cmp(q))))
    });

    let mut out = Covering::empty(d, CoverParams { epsilon, c, n: n_start, m: n_start }, seq.clone());
    let mut next_n = n_start;
    let mut pos = 0usize;
    let mut far_sofar = 0.0f64;
    for (i, (signs, sub)) in subs.iter().enumerate() {
        if i > 0 {
            let m_prev = out.params.m;
            let near = sub.norm_range().0;
            let target = (seq.value_f64(m_prev) * far_sofar + c) / near;
            next_n = seq
                .first_at_least(&q_upper(target * (1.0 + 1e-12)), m_prev + 1, opts.horizon)
                .ok_or_else(|| {
                    CoverError::Sequence(SeqError::HorizonTooSmall(format!(
                        "sub-box {i} of {} needs lambda >= {target:.3e}",
                        subs.len()
                    )))
                })?;
        }
        let bmin = sub.lower.iter().cloned().fold(f64::INFINITY, f64::min);
        let slack = (rho - 1.0) * bmin - sub.side;
        while pos < sg.certified && (sg.indices[pos] < next_n || seq.value_f64(sg.indices[pos]) * slack < c) {
            pos += 1;
        }
        if pos >= sg.certified {
            return Err(CoverError::Sequence(SeqError::HorizonTooSmall(format!(
                "sub-box {i} of {}: no certified witness position past index {next_n}",
                subs.len()
            ))));
        }
        let plan = split_with_floor(seq, &sg, d, &a, pos)?;
        let remaining = opts.max_points.saturating_sub(out.points.len());
        let cov = cover_box_capped(sub, &plan, seq, &sg, epsilon, c, remaining).map_err(|e| match e {
            CoverError::ResourceLimit(m) => CoverError::ResourceLimit(format!("sub-box {i} of {}: {m}", subs.len())),
            other => other,
        })?;
        far_sofar = far_sofar.max(sub.norm_range().1);
        for p in cov.points {
            let x = p.x.iter().zip(signs).map(|(v, s)| v * s).collect();
            out.points.push(CoverPoint { n: p.n, x });
        }
        out.params.m = cov.params.m;
        pos = plan.max_index().unwrap_or(pos) + 1;
    }
    out.refresh_range();
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GreedyOptions {
    /// Spacing of the grid of `K` that must be covered.
    pub grid_step: f64,
    /// First admissible index.
    pub n_start: usize,
    /// Last admissible index.
    pub n_max: usize,
    /// Grid points count as covered when within `(1-shrink)·ε`.
    pub shrink: f64,
}

/// `m` minimizing `‖λ_m x - b‖` over `lo..=hi` (one of two neighbours of the
/// projection).
fn best_multiple(seq: &ParamSequence, x: &[f64], b: &[f64], lo: usize, hi: usize) -> Option<(usize, f64)> {
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx == 0.0 {
        return None;
    }
    let t = x.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / xx;
    let j = if t <= seq.value_f64(lo) {
        lo
    } else {
        seq.first_at_least(&q_upper(t), lo, hi).unwrap_or(hi)
    };
    let mut best: Option<(usize, f64)> = None;
    for m in [j.saturating_sub(1).max(lo), j] {
        let l = seq.value_f64(m);
        let dd = x.iter().zip(b).map(|(p, q)| (l * p - q).powi(2)).sum::<f64>().sqrt();
        if best.map_or(true, |(_, e)| dd < e) {
            best = Some((m, dd));
        }
    }
    best
}

/// Greedy net over the grid of `K`: each grid point `x` not yet within
/// `(1-shrink)ε` of some `λ_m x` ↦ existing scaled point (any `m` in range)
/// receives a new point `(n, x)` with the smallest `n` for which `λ_n x` is
/// `C`-separated from every scaled point so far.
pub fn greedy_cover(
    k: &[AxisBox],
    seq: &ParamSequence,
    epsilon: f64,
    c: f64,
    opts: &GreedyOptions,
) -> Result<Covering, CoverError> {
    let d = k.first().map_or(1, |b| b.dim());
    if !(epsilon > 0.0 && c > 0.0 && opts.grid_step > 0.0) || opts.n_max < opts.n_start {
        return Err(precondition("need epsilon, C, grid_step > 0 and n_start <= n_max".into()));
    }
    let radius = epsilon * (1.0 - opts.shrink);
    let mut cov = Covering::empty(d, CoverParams { epsilon, c, n: opts.n_start, m: opts.n_start }, seq.clone());
    let mut scaled: Vec<Vec<f64>> = Vec::new();
    let mut hash = SpatialHash::new(d, c);
    for b in k {
        let steps = (b.side / opts.grid_step).ceil().max(0.0) as usize;
        let mut idx = vec![0usize; d];
        loop {
            let x: Vec<f64> = (0..d)
                .map(|i| (b.lower[i] + idx[i] as f64 * opts.grid_step).min(b.upper(i)))
                .collect();
            let covered = scaled.iter().any(|s| {
                best_multiple(seq, &x, s, opts.n_start, opts.n_max).is_some_and(|(_, e)| e < radius)
            });
            if !covered {
                let mut placed = false;
                for n in opts.n_start..=opts.n_max {
                    let l = seq.value_f64(n);
                    let y: Vec<f64> = x.iter().map(|v| v * l).collect();
                    let mut clash = false;
                    hash.near(&y, |j| clash |= dist(&scaled[j], &y) < c);
                    if !clash {
                        hash.insert(&y, scaled.len());
                        scaled.push(y);
                        cov.points.push(CoverPoint { n, x: x.clone() });
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(CoverError::ResourceLimit(format!(
                        "no admissible index in {}..={} for grid point {x:?}",
                        opts.n_start, opts.n_max
                    )));
                }
            }
            let mut i = 0;
            while i < d {
                idx[i] += 1;
                if idx[i] <= steps {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == d {
                break;
            }
        }
    }
    cov.refresh_range();
    Ok(cov)
}

/// Greedy thinning in the given order: a point survives iff `λ_n y` is at
/// distance `>= a` from every survivor so far. Every dropped point then lies
/// within `a` (after scaling) of a survivor; `params.epsilon` records `a`.
pub fn separate_net(points: &[(usize, Vec<f64>)], a: f64, seq: &ParamSequence) -> Covering {
    let d = points.first().map_or(1, |p| p.1.len());
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| points[i].0);
    let mut hash = SpatialHash::new(d, a.max(f64::MIN_POSITIVE));
    let mut kept_scaled: Vec<Vec<f64>> = Vec::new();
    let mut cov = Covering::empty(d, CoverParams { epsilon: a, c: a, n: 0, m: 0 }, seq.clone());
    for i in order {
        let (n, y) = &points[i];
        let l = seq.value_f64(*n);
        let s: Vec<f64> = y.iter().map(|v| v * l).collect();
        let mut clash = false;
        hash.near(&s, |j| clash |= dist(&kept_scaled[j], &s) < a);
        if !clash {
            hash.insert(&s, kept_scaled.len());
            kept_scaled.push(s);
            cov.points.push(CoverPoint { n: *n, x: y.clone() });
        }
    }
    cov.refresh_range();
    cov
}

#[cfg(test)]
mod tests {
    use super::*;

    fn witness(d: usize, eps: f64, c: f64) -> (ParamSequence, SgWitness, Q) {
        let seq = ParamSequence::integers();
        let a = q_upper(c / euclid_step(eps, d));
        let sg = check_sg(&seq, &b_constant(d, &a), 1 << 30).unwrap().unwrap();
        (seq, sg, a)
    }

    #[test]
    fn one_dim_box_net_is_separated() {
        let (seq, sg, a) = witness(1, 0.5, 2.0);
        let rho = q_to_f64(&sg.rho);
        let l = AxisBox::new(vec![1.0], (rho - 1.0) / 2.0);
        let slack = (rho - 1.0) - l.side;
        let p = (0..sg.certified).find(|&p| seq.value_f64(sg.indices[p]) * slack >= 2.0).unwrap();
        let plan = split_with_floor(&seq, &sg, 1, &a, p).unwrap();
        let cov = cover_box(&l, &plan, &seq, &sg, 0.5, 2.0).unwrap();
        assert!(!cov.points.is_empty());
        let s = cov.scaled();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert!(dist(&s[i], &s[j]) >= 2.0 * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn gamma_condition_is_enforced() {
        let (seq, sg, a) = witness(1, 0.5, 2.0);
        let plan = split_with_floor(&seq, &sg, 1, &a, 0).unwrap();
        let err = cover_box(&AxisBox::new(vec![1.0], 1.0), &plan, &seq, &sg, 0.5, 2.0).unwrap_err();
        assert!(matches!(err, CoverError::PreconditionViolated(m) if m.contains("gamma")));
    }

    #[test]
    fn compact_rejects_boxes_through_zero() {
        let err = cover_compact(&[AxisBox::cube(1, -1.0, 1.0)], &ParamSequence::integers(), 0.5, 2.0, 0, &CompactOptions::default())
            .unwrap_err();
        assert!(matches!(err, CoverError::PreconditionViolated(_)));
    }

    #[test]
    fn separate_net_keeps_one_of_two_coincident() {
        let seq = ParamSequence::integers();
        let cov = separate_net(&[(3, vec![1.0]), (3, vec![1.0])], 1.0, &seq);
        assert_eq!(cov.points.len(), 1);
    }
}
