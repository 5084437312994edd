use crate::rational::{fmt_q, q_int, q_pow, q_to_f64, serde_q, Q};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use super::growth::{check_fhcsg, ratio_bound_from_window, SgWitness};
use super::param::{ParamSequence, RecipSum, View};
use super::{b_constant, level_threshold, SeqError};

/// One interior node of the splitting tree. `anchors[j]` is the image of
/// `(prefix, j, 0, …, 0)` for `j < s`. The closing anchor `anchors[s]` lies
/// past every leaf of the node and no later than the parent's next anchor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub prefix: Vec<usize>,
    pub s: usize,
    pub anchors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiEntry {
    pub tuple: Vec<usize>,
    pub index: usize,
}

/// Tree-indexed injection produced by the recursive splitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub d: usize,
    pub s1: usize,
    /// All nodes in depth-first order, the root (empty prefix) first.
    pub sr: Vec<PlanNode>,
    /// Leaves in lexicographic order.
    pub phi: Vec<PhiEntry>,
    #[serde(rename = "A", with = "serde_q")]
    pub a: Q,
}

impl SplitPlan {
    pub fn root(&self) -> &PlanNode {
        &self.sr[0]
    }

    pub fn min_index(&self) -> Option<usize> {
        self.phi.iter().map(|e| e.index).min()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.phi.iter().map(|e| e.index).max()
    }

    /// Last anchor of the root, i.e. the furthest index the plan relies on.
    pub fn extent(&self) -> usize {
        *self.root().anchors.last().unwrap()
    }

    pub fn node(&self, prefix: &[usize]) -> Option<&PlanNode> {
        self.sr.iter().find(|n| n.prefix == prefix)
    }

    /// Applies `f` to every index (leaves and anchors).
    pub fn map_indices(&self, f: impl Fn(usize) -> usize) -> SplitPlan {
        SplitPlan {
            d: self.d,
            s1: self.s1,
            sr: self
                .sr
                .iter()
                .map(|n| PlanNode {
                    prefix: n.prefix.clone(),
                    s: n.s,
                    anchors: n.anchors.iter().map(|&i| f(i)).collect(),
                })
                .collect(),
            phi: self.phi.iter().map(|e| PhiEntry { tuple: e.tuple.clone(), index: f(e.index) }).collect(),
            a: self.a.clone(),
        }
    }
}

/// Float-first test of `Σ_j 1/μ_{pts[j]} >= budget/μ_{anchor}` with an exact
/// fallback when the margin is too thin to trust.
fn points_sum_ge(view: &View<'_>, anchor: usize, pts: &[usize], budget: &Q) -> bool {
    let la = view.ln(anchor);
    let s: f64 = pts.iter().map(|&k| (la - view.ln(k)).exp()).sum();
    let rhs = q_to_f64(budget);
    let tol = (1e-10 + 4.0 * pts.len() as f64 * f64::EPSILON) * s + 1e-12 * rhs;
    if s - rhs > tol {
        return true;
    }
    if rhs - s > tol {
        return false;
    }
    let mut exact = Q::zero();
    for &k in pts {
        exact += view.get(k).recip();
    }
    exact * view.get(anchor) >= *budget
}

struct Builder<'v, 'a> {
    view: &'v View<'a>,
    a: Q,
    nodes: Vec<PlanNode>,
    phi: Vec<PhiEntry>,
}

impl Builder<'_, '_> {
    /// Splits `[base, limit]` at depth `level` (number of coordinates left).
    fn build(&mut self, level: usize, prefix: Vec<usize>, base: usize, limit: usize) -> Result<(), SeqError> {
        if level == 1 {
            if limit <= base {
                return Err(SeqError::BudgetUnmet {
                    inequality: "empty leaf range".into(),
                    index: base,
                });
            }
            let s = limit - base;
            for k in 0..s {
                let mut t = prefix.clone();
                t.push(k);
                self.phi.push(PhiEntry { tuple: t, index: base + k });
            }
            self.nodes.push(PlanNode { prefix, s, anchors: (base..=limit).collect() });
            return Ok(());
        }

        let view = self.view;
        let b_prev = b_constant(level - 1, &self.a);
        let threshold = level_threshold(level, &self.a);
        let mut anchors = vec![base];
        let mut cumulative = RecipSum::new(view, base, base + 1);
        let mut block = RecipSum::new(view, base, base + 1);
        let mut n = base;
        loop {
            n += 1;
            if n > limit || n >= view.len {
                return Err(SeqError::BudgetUnmet {
                    inequality: format!(
                        "level {level}: cumulative sum did not reach ({})/mu[{base}] with budget {} before the limit",
                        fmt_q(&threshold),
                        fmt_q(&self.a)
                    ),
                    index: n.min(limit),
                });
            }
            cumulative.push(view);
            block.push(view);
            if block.ge(view, &b_prev) {
                anchors.push(n);
                block = RecipSum::new(view, n, n + 1);
                // The literal threshold alone only forces the budget for A <= 1,
                // so the budget itself is part of the stopping rule.
                if cumulative.ge(view, &threshold) && points_sum_ge(view, base, &anchors[1..], &self.a) {
                    break;
                }
            }
        }
        let s = anchors.len() - 1;
        self.nodes.push(PlanNode { prefix: prefix.clone(), s, anchors: anchors.clone() });
        for j in 0..s {
            let mut p = prefix.clone();
            p.push(j);
            self.build(level - 1, p, anchors[j], anchors[j + 1])?;
        }
        Ok(())
    }
}

/// Splits the positions `base..=limit` of `view`. Requires
/// `Σ_{base<k<=limit} 1/μ_k >= B(d,A)/μ_base` (only a prefix is summed).
pub fn split_view(view: &View<'_>, d: usize, a: &Q, base: usize, limit: usize) -> Result<SplitPlan, SeqError> {
    if d == 0 {
        return Err(SeqError::InvalidArgument("d must be >= 1".into()));
    }
    if !a.is_positive() {
        return Err(SeqError::InvalidArgument("A must be > 0".into()));
    }
    let limit = limit.min(view.len.saturating_sub(1));
    let b = b_constant(d, a);
    let mut pre = RecipSum::new(view, base, base + 1);
    let mut met = false;
    for _ in base + 1..=limit {
        pre.push(view);
        if pre.ge(view, &b) {
            met = true;
            break;
        }
    }
    if !met {
        return Err(SeqError::BudgetUnmet {
            inequality: format!("sum of 1/mu over ({base}, {limit}] < B({d},A) / mu[{base}] = {} / mu[{base}]", fmt_q(&b)),
            index: limit,
        });
    }
    // d = 1 uses the whole range; deeper levels stop on their own.
    let mut builder = Builder { view, a: a.clone(), nodes: Vec::new(), phi: Vec::new() };
    builder.build(d, Vec::new(), base, limit)?;
    // Nodes were pushed parent-first, children in order: already depth-first.
    let s1 = builder.nodes[0].s;
    Ok(SplitPlan { d, s1, sr: builder.nodes, phi: builder.phi, a: a.clone() })
}

/// Splitting of `μ_0, …, μ_s` (term `n` of `mu` is `μ_n`).
pub fn split_sequence(mu: &ParamSequence, d: usize, a: &Q, s: usize) -> Result<SplitPlan, SeqError> {
    let view = View::affine(mu, 0, 1, s + 1);
    if view.len < s + 1 {
        return Err(SeqError::BudgetUnmet { inequality: "sequence shorter than s".into(), index: view.len });
    }
    split_view(&view, d, a, 0, s)
}

/// Splitting over the witness subsequence whose root sits at witness
/// position `floor`. Indices of the returned plan are witness positions; use
/// `map_indices(|k| sg.indices[k])` for indices into the original sequence.
pub fn split_with_floor(
    seq: &ParamSequence,
    sg: &SgWitness,
    d: usize,
    a: &Q,
    floor: usize,
) -> Result<SplitPlan, SeqError> {
    let b = b_constant(d, a);
    if sg.budget < b {
        return Err(SeqError::BudgetUnmet {
            inequality: format!("witness budget {} < B({d},A) = {}", fmt_q(&sg.budget), fmt_q(&b)),
            index: floor,
        });
    }
    if floor >= sg.certified {
        return Err(SeqError::HorizonTooSmall(format!(
            "floor {floor} beyond the {} certified witness positions",
            sg.certified
        )));
    }
    let view = sg.view(seq);
    let mut sum = RecipSum::new(&view, floor, floor + 1);
    let mut s = None;
    for k in floor + 1..view.len {
        sum.push(&view);
        if sum.ge(&view, &b) {
            s = Some(k - floor);
            break;
        }
    }
    let Some(s) = s else {
        return Err(SeqError::HorizonTooSmall(format!("no prefix after position {floor} reaches B({d},A)")));
    };
    split_view(&view, d, a, floor, floor + s)
}

/// Result of the bounded-window splitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FhcsgSplit {
    /// Plan whose indices are indices of the original sequence.
    pub plan: SplitPlan,
    /// Every index lies in `[n, n + q - 1]`.
    pub q: usize,
    pub n: usize,
    pub kappa: usize,
    /// Root offset `r0`; the subsequence is `λ_{n + r0 + κ k}`.
    pub r0: usize,
    /// Window length for budget 1, giving `λ_{n+1} <= ρ λ_n` with `ρ = window`.
    pub window: usize,
    #[serde(with = "serde_q")]
    pub rho: Q,
    /// `κ ρ^{κ-1} B(d,A)`, the windowed budget a root at offset 0 would need.
    #[serde(with = "serde_q")]
    pub c_required: Q,
    /// Range of `n` for which `q` was certified.
    pub horizon: usize,
}

pub const DEFAULT_FHCSG_HORIZON: usize = 2000;

/// Offsets tried by the linear root scan.
const ROOT_SCAN: usize = 1024;

/// Cap on the length of the thinned subsequence explored per root.
const MAX_SUB_LEN: usize = 1 << 16;

/// Plan for the thinned subsequence rooted at `root`, or `None` when it
/// would need more than `max_len` terms.
fn rooted_plan(
    seq: &ParamSequence,
    d: usize,
    a: &Q,
    kappa: usize,
    root: usize,
    max_len: usize,
) -> Result<Option<(SplitPlan, usize)>, SeqError> {
    let view = View::affine(seq, root, kappa, max_len.max(2));
    let b = b_constant(d, a);
    let mut sum = RecipSum::new(&view, 0, 1);
    let mut pre = None;
    for k in 1..view.len {
        sum.push(&view);
        if sum.ge(&view, &b) {
            pre = Some(k);
            break;
        }
    }
    let Some(pre) = pre else { return Ok(None) };
    let limit = if d == 1 { pre } else { view.len - 1 };
    match split_view(&view, d, a, 0, limit) {
        Ok(plan) => {
            let extent = plan.extent();
            Ok(Some((plan.map_indices(|k| view.index(k)), extent)))
        }
        Err(SeqError::BudgetUnmet { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Splitting with every image inside a window of fixed length `Q`
/// starting at `n`, with pairwise index gaps `κ = ⌊A⌋+1 > A`.
pub fn split_fhcsg(seq: &ParamSequence, d: usize, a: &Q, n: usize) -> Result<FhcsgSplit, SeqError> {
    split_fhcsg_with(seq, d, a, n, DEFAULT_FHCSG_HORIZON)
}

pub fn split_fhcsg_with(
    seq: &ParamSequence,
    d: usize,
    a: &Q,
    n: usize,
    horizon: usize,
) -> Result<FhcsgSplit, SeqError> {
    if !a.is_positive() || d == 0 {
        return Err(SeqError::InvalidArgument("need d >= 1 and A > 0".into()));
    }
    let window = check_fhcsg(seq, &Q::one(), horizon)?
        .ok_or_else(|| SeqError::WindowFailed(format!("no window reaches budget 1 for starts up to {horizon}")))?;
    let rho = ratio_bound_from_window(window);
    let kappa = (a.floor().to_integer().to_usize().unwrap_or(0)) + 1;
    let b = b_constant(d, a);
    let c_required = q_int(kappa as i64) * q_pow(&rho, (kappa - 1) as u64) * &b;

    // Root offset minimizing the window footprint r + κ·extent at n = 0:
    // offsets double until one admits a split, then a linear scan of at
    // most ROOT_SCAN offsets starts from the last one that did not.
    let mut best: Option<(usize, usize)> = None; // (footprint, r0)
    let mut prev = 0usize;
    let mut r = 0usize;
    while best.is_none() {
        if seq.len().is_some_and(|l| r >= l) || r > MAX_SUB_LEN * kappa {
            break;
        }
        if let Some((_, extent)) = rooted_plan(seq, d, a, kappa, r, MAX_SUB_LEN)? {
            best = Some((r + kappa * extent, r));
            break;
        }
        prev = r;
        r = if r == 0 { kappa } else { 2 * r };
    }
    if best.is_some() {
        let mut r = prev;
        for _ in 0..ROOT_SCAN {
            let Some((fp, _)) = best else { break };
            if r >= fp || seq.len().is_some_and(|l| r >= l) {
                break;
            }
            if let Some((_, extent)) = rooted_plan(seq, d, a, kappa, r, (fp - r) / kappa + 1)? {
                let fp = r + kappa * extent;
                if best.map_or(true, |(b, _)| fp < b) {
                    best = Some((fp, r));
                }
            }
            r += kappa;
        }
    }
    let Some((_, r0)) = best else {
        return Err(SeqError::HorizonTooSmall("no root offset admits a split".into()));
    };

    let mut max_extent = 0;
    for m in 0..=horizon {
        match rooted_plan(seq, d, a, kappa, m + r0, MAX_SUB_LEN)? {
            Some((_, e)) => max_extent = max_extent.max(e),
            None => {
                return Err(SeqError::HorizonTooSmall(format!("no split for start {m} within {MAX_SUB_LEN} terms")))
            }
        }
    }
    let q = r0 + kappa * max_extent + 1;

    let Some((plan, extent)) = rooted_plan(seq, d, a, kappa, n + r0, MAX_SUB_LEN)? else {
        return Err(SeqError::HorizonTooSmall(format!("no split for start {n}")));
    };
    if r0 + kappa * extent + 1 > q {
        return Err(SeqError::HorizonTooSmall(format!(
            "start {n} needs a window of {} > Q = {q} certified up to {horizon}",
            r0 + kappa * extent + 1
        )));
    }
    Ok(FhcsgSplit { plan, q, n, kappa, r0, window, rho, c_required, horizon })
}

/// A failed check of the independent plan checker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub kind: String,
    pub detail: String,
}

fn violation(kind: &str, detail: String) -> PlanViolation {
    PlanViolation { kind: kind.into(), detail }
}

/// Rigorous test of `Σ_j 1/μ_{pts[j]} >= A/μ_{anchor}`: interval-style float
/// bound first, exact rationals when the bound cannot decide.
fn budget_holds(view: &View<'_>, anchor: usize, pts: &[usize], a: &Q) -> bool {
    let va = view.get_f64(anchor);
    let direct = va.is_finite() && pts.iter().all(|&k| view.get_f64(k).is_finite());
    let (s, rel) = if direct {
        (pts.iter().map(|&k| va / view.get_f64(k)).sum::<f64>(), 8.0 * f64::EPSILON * (pts.len() as f64 + 2.0))
    } else {
        let la = view.ln(anchor);
        (pts.iter().map(|&k| (la - view.ln(k)).exp()).sum::<f64>(), 1e-9)
    };
    let rhs = q_to_f64(a);
    if s > rhs * (1.0 + 1e-12) + rel * s {
        return true;
    }
    if s < rhs * (1.0 - 1e-12) - rel * s {
        return false;
    }
    let mut exact = Q::zero();
    for &k in pts {
        exact += view.get(k).recip();
    }
    exact * view.get(anchor) >= *a
}

/// Independent verification of a plan against the sequence `view` its
/// indices point into: domain shape, injectivity, lexicographic
/// monotonicity, anchor consistency and every budget inequality.
pub fn check_plan(plan: &SplitPlan, view: &View<'_>) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let nodes: BTreeMap<&[usize], &PlanNode> = plan.sr.iter().map(|n| (n.prefix.as_slice(), n)).collect();
    let leaves: BTreeMap<&[usize], usize> = plan.phi.iter().map(|e| (e.tuple.as_slice(), e.index)).collect();
    if leaves.len() != plan.phi.len() {
        out.push(violation("domain", "duplicate tuple in phi".into()));
    }
    let Some(root) = nodes.get(&[][..]) else {
        out.push(violation("domain", "missing root node".into()));
        return out;
    };
    if root.s != plan.s1 {
        out.push(violation("domain", format!("s1 = {} but root has s = {}", plan.s1, root.s)));
    }

    // Enumerate E_{d+1} from the s_r maps and compare with the leaves.
    let mut expected: Vec<Vec<usize>> = Vec::new();
    let mut stack = vec![Vec::<usize>::new()];
    while let Some(prefix) = stack.pop() {
        let Some(node) = nodes.get(prefix.as_slice()) else {
            out.push(violation("domain", format!("missing node for prefix {prefix:?}")));
            continue;
        };
        if node.anchors.len() != node.s + 1 {
            out.push(violation("anchors", format!("node {prefix:?}: {} anchors for s = {}", node.anchors.len(), node.s)));
            continue;
        }
        if node.s == 0 {
            out.push(violation("domain", format!("node {prefix:?} has s = 0")));
        }
        for j in (0..node.s).rev() {
            let mut t = prefix.clone();
            t.push(j);
            if t.len() == plan.d {
                expected.push(t);
            } else {
                stack.push(t);
            }
        }
    }
    if nodes.len() + expected.len() > 0 {
        let exp: HashSet<&Vec<usize>> = expected.iter().collect();
        let got: HashSet<&Vec<usize>> = plan.phi.iter().map(|e| &e.tuple).collect();
        if exp != got {
            out.push(violation(
                "domain",
                format!("phi has {} tuples, the nested box has {}", got.len(), exp.len()),
            ));
        }
    }

    // Injectivity and lexicographic monotonicity.
    let mut seen = HashSet::new();
    for e in &plan.phi {
        if !seen.insert(e.index) {
            out.push(violation("injective", format!("index {} hit twice", e.index)));
        }
        if e.index >= view.len {
            out.push(violation("range", format!("index {} outside the sequence view", e.index)));
        }
    }
    let ordered: Vec<(&[usize], usize)> = leaves.iter().map(|(t, &i)| (*t, i)).collect();
    for w in ordered.windows(2) {
        if w[1].1 <= w[0].1 {
            out.push(violation("monotone", format!("{:?} -> {} but {:?} -> {}", w[0].0, w[0].1, w[1].0, w[1].1)));
        }
    }

    // Anchors agree with leaves and with the parent's anchors.
    let first_leaf = |prefix: &[usize]| -> Option<usize> {
        let mut t = prefix.to_vec();
        t.resize(plan.d, 0);
        leaves.get(t.as_slice()).copied()
    };
    for node in &plan.sr {
        if node.anchors.len() != node.s + 1 || node.anchors.iter().any(|&i| i >= view.len) {
            out.push(violation("anchors", format!("node {:?} has malformed anchors", node.prefix)));
            continue;
        }
        if node.anchors.windows(2).any(|w| w[1] <= w[0]) {
            out.push(violation("anchors", format!("anchors of {:?} not increasing", node.prefix)));
        }
        for j in 0..node.s {
            let mut p = node.prefix.clone();
            p.push(j);
            if first_leaf(&p) != Some(node.anchors[j]) {
                out.push(violation("anchors", format!("anchor {j} of {:?} is not phi{p:?}", node.prefix)));
            }
        }
        if let Some((&j, parent_prefix)) = node.prefix.split_last() {
            if let Some(parent) = nodes.get(parent_prefix) {
                let closes_inside = match (parent.anchors.get(j + 1), node.anchors.last()) {
                    (Some(next), Some(last)) => last <= next,
                    _ => false,
                };
                if parent.anchors.get(j) != node.anchors.first() || !closes_inside {
                    out.push(violation("anchors", format!("node {:?} disagrees with its parent", node.prefix)));
                }
            }
        }
        if !budget_holds(view, node.anchors[0], &node.anchors[1..], &plan.a) {
            out.push(violation(
                "budget",
                format!("node {:?}: sum of 1/mu over anchors 1..={} < A/mu(anchor 0)", node.prefix, node.s),
            ));
        }
    }
    out
}

/// Window and spacing conditions of a bounded-window plan.
pub fn check_window(plan: &SplitPlan, n: usize, q: usize, a: &Q) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = plan.phi.iter().map(|e| e.index).collect();
    idx.sort_unstable();
    for &i in &idx {
        if i < n || i + 1 > n + q {
            out.push(violation("window", format!("index {i} outside [{n}, {}]", n + q - 1)));
        }
    }
    for w in idx.windows(2) {
        if q_int((w[1] - w[0]) as i64) < *a {
            out.push(violation("gap", format!("indices {} and {} closer than A", w[0], w[1])));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::check_sg;

    #[test]
    fn identity_plan_in_dimension_one() {
        let mu = ParamSequence::integers();
        let plan = split_sequence(&mu, 1, &q_int(3), 30).unwrap();
        assert_eq!(plan.s1, 30);
        for (k, e) in plan.phi.iter().enumerate() {
            assert_eq!(e.tuple, vec![k]);
            assert_eq!(e.index, k);
        }
        let view = View::affine(&mu, 0, 1, 31);
        assert!(check_plan(&plan, &view).is_empty());
    }

    #[test]
    fn two_level_plan_checks() {
        let mu = ParamSequence::integers();
        let plan = split_sequence(&mu, 2, &q_int(1), 2000).unwrap();
        let view = View::affine(&mu, 0, 1, 2001);
        assert_eq!(check_plan(&plan, &view), vec![]);
    }

    #[test]
    fn geometric_budget_unmet() {
        let mu = ParamSequence::geometric(q_int(2), 0).unwrap();
        assert!(matches!(split_sequence(&mu, 2, &q_int(1), 200), Err(SeqError::BudgetUnmet { .. })));
    }

    #[test]
    fn floor_is_respected() {
        let s = ParamSequence::integers();
        let w = check_sg(&s, &q_int(2), 1_000_000).unwrap().unwrap();
        let plan = split_with_floor(&s, &w, 1, &q_int(2), 50).unwrap();
        assert!(plan.min_index().unwrap() >= 50);
        assert!(check_plan(&plan, &w.view(&s)).is_empty());
    }

    #[test]
    fn tampered_plan_is_rejected() {
        let mu = ParamSequence::integers();
        let mut plan = split_sequence(&mu, 2, &q_int(1), 2000).unwrap();
        let view = View::affine(&mu, 0, 1, 2001);
        let last = plan.phi.len() - 1;
        plan.phi[last].index = plan.phi[0].index;
        let v = check_plan(&plan, &view);
        assert!(v.iter().any(|x| x.kind == "injective"));
        assert!(v.iter().any(|x| x.kind == "monotone"));
    }

    #[test]
    fn fhcsg_window_dimension_one() {
        let s = ParamSequence::integers();
        let out = split_fhcsg_with(&s, 1, &q_int(2), 10, 200).unwrap();
        assert!(check_window(&out.plan, 10, out.q, &q_int(2)).is_empty());
        let view = View::affine(&s, 0, 1, 10 + out.q);
        assert!(check_plan(&out.plan, &view).is_empty());
    }
}
