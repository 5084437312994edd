use crate::rational::{q_from_f64, q_int, q_ln, q_pow, q_to_f64, serde_q, serde_q_vec, Q};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use super::SeqError;

/// Closed form (or table) generating the terms of a sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeqKind {
    /// `step * n`
    Arithmetic {
        #[serde(with = "serde_q")]
        step: Q,
    },
    /// `ratio ^ n`, ratio > 1
    Geometric {
        #[serde(with = "serde_q")]
        ratio: Q,
    },
    /// `n ^ exponent`, exponent > 0
    Polynomial { exponent: f64 },
    /// Explicit sorted positive values.
    Table {
        #[serde(with = "serde_q_vec")]
        values: Vec<Q>,
    },
}

/// A strictly increasing positive sequence. Term `i` (0-based) is the closed
/// form evaluated at `n = offset + i`; table terms ignore the offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSequence {
    #[serde(flatten)]
    pub kind: SeqKind,
    #[serde(default = "default_offset")]
    pub offset: u64,
}

fn default_offset() -> u64 {
    1
}

impl ParamSequence {
    pub fn new(kind: SeqKind, offset: u64) -> Result<Self, SeqError> {
        let s = ParamSequence { kind, offset };
        s.validate()?;
        Ok(s)
    }

    /// `λ_n = n` starting at `n = 1`.
    pub fn integers() -> Self {
        ParamSequence { kind: SeqKind::Arithmetic { step: Q::one() }, offset: 1 }
    }

    pub fn arithmetic(step: Q, offset: u64) -> Result<Self, SeqError> {
        Self::new(SeqKind::Arithmetic { step }, offset)
    }

    pub fn geometric(ratio: Q, offset: u64) -> Result<Self, SeqError> {
        Self::new(SeqKind::Geometric { ratio }, offset)
    }

    pub fn polynomial(exponent: f64, offset: u64) -> Result<Self, SeqError> {
        Self::new(SeqKind::Polynomial { exponent }, offset)
    }

    pub fn table(values: Vec<Q>) -> Result<Self, SeqError> {
        Self::new(SeqKind::Table { values }, 0)
    }

    pub fn table_f64(values: &[f64]) -> Result<Self, SeqError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SeqError::InvalidSequence("non-finite table value".into()));
        }
        Self::table(values.iter().map(|&v| q_from_f64(v)).collect())
    }

    pub fn validate(&self) -> Result<(), SeqError> {
        match &self.kind {
            SeqKind::Arithmetic { step } => {
                if !step.is_positive() {
                    return Err(SeqError::InvalidSequence("arithmetic step must be > 0".into()));
                }
                if self.offset < 1 {
                    return Err(SeqError::InvalidSequence("offset must be >= 1".into()));
                }
            }
            SeqKind::Geometric { ratio } => {
                if *ratio <= Q::one() {
                    return Err(SeqError::InvalidSequence("geometric ratio must be > 1".into()));
                }
            }
            SeqKind::Polynomial { exponent } => {
                if !(*exponent > 0.0) || !exponent.is_finite() {
                    return Err(SeqError::InvalidSequence("exponent must be > 0".into()));
                }
                if self.offset < 1 {
                    return Err(SeqError::InvalidSequence("offset must be >= 1".into()));
                }
            }
            SeqKind::Table { values } => {
                if values.is_empty() {
                    return Err(SeqError::InvalidSequence("empty table".into()));
                }
                if !values[0].is_positive() {
                    return Err(SeqError::InvalidSequence("table values must be > 0".into()));
                }
                for w in values.windows(2) {
                    if w[1] <= w[0] {
                        return Err(SeqError::InvalidSequence(
                            "table values must be strictly increasing".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of available terms (`None` for closed forms).
    pub fn len(&self) -> Option<usize> {
        match &self.kind {
            SeqKind::Table { values } => Some(values.len()),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Largest usable index not exceeding `horizon`.
    pub fn clamp(&self, horizon: usize) -> usize {
        match self.len() {
            Some(l) => horizon.min(l - 1),
            None => horizon,
        }
    }

    fn arg(&self, i: usize) -> u64 {
        self.offset + i as u64
    }

    /// Exact value of term `i`.
    pub fn value(&self, i: usize) -> Q {
        match &self.kind {
            SeqKind::Arithmetic { step } => step * q_int(self.arg(i) as i64),
            SeqKind::Geometric { ratio } => q_pow(ratio, self.arg(i)),
            SeqKind::Polynomial { exponent } => {
                let n = self.arg(i);
                if exponent.fract() == 0.0 {
                    q_pow(&q_int(n as i64), *exponent as u64)
                } else {
                    q_from_f64((n as f64).powf(*exponent))
                }
            }
            SeqKind::Table { values } => values[i].clone(),
        }
    }

    /// Float estimate of term `i` (may be `inf` for huge geometric terms).
    pub fn value_f64(&self, i: usize) -> f64 {
        match &self.kind {
            SeqKind::Arithmetic { step } => q_to_f64(step) * self.arg(i) as f64,
            SeqKind::Geometric { ratio } => q_to_f64(ratio).powf(self.arg(i) as f64),
            SeqKind::Polynomial { exponent } => (self.arg(i) as f64).powf(*exponent),
            SeqKind::Table { values } => q_to_f64(&values[i]),
        }
    }

    /// `ln λ_i`, finite even when `λ_i` overflows a double.
    pub fn ln_value(&self, i: usize) -> f64 {
        let n = self.arg(i) as f64;
        match &self.kind {
            SeqKind::Arithmetic { step } => q_ln(step) + n.ln(),
            SeqKind::Geometric { ratio } => n * q_ln(ratio),
            SeqKind::Polynomial { exponent } => exponent * n.ln(),
            SeqKind::Table { values } => q_ln(&values[i]),
        }
    }

    /// Exact `λ_{i+1} / λ_i`.
    pub fn ratio(&self, i: usize) -> Q {
        match &self.kind {
            SeqKind::Arithmetic { .. } => {
                let n = self.arg(i) as i64;
                Q::new((n + 1).into(), n.into())
            }
            SeqKind::Geometric { ratio } => ratio.clone(),
            SeqKind::Polynomial { exponent } if exponent.fract() == 0.0 => {
                let n = self.arg(i) as i64;
                q_pow(&Q::new((n + 1).into(), n.into()), *exponent as u64)
            }
            _ => self.value(i + 1) / self.value(i),
        }
    }

    pub fn ratio_f64(&self, i: usize) -> f64 {
        match &self.kind {
            SeqKind::Arithmetic { .. } => {
                let n = self.arg(i) as f64;
                (n + 1.0) / n
            }
            SeqKind::Geometric { ratio } => q_to_f64(ratio),
            SeqKind::Polynomial { exponent } => {
                let n = self.arg(i) as f64;
                ((n + 1.0) / n).powf(*exponent)
            }
            SeqKind::Table { values } => q_to_f64(&values[i + 1]) / q_to_f64(&values[i]),
        }
    }

    /// Whether consecutive ratios are non-increasing in the index, so that a
    /// bound at `i` bounds every later ratio.
    pub fn ratio_is_monotone(&self) -> bool {
        !matches!(self.kind, SeqKind::Table { .. })
    }

    /// Largest ratio `λ_{i+1}/λ_i` for `from <= i < to`.
    pub fn max_ratio(&self, from: usize, to: usize) -> Q {
        if from >= to {
            return Q::one();
        }
        if self.ratio_is_monotone() {
            return self.ratio(from);
        }
        let mut best = self.ratio(from);
        for i in from + 1..to {
            let r = self.ratio(i);
            if r > best {
                best = r;
            }
        }
        best
    }

    /// Exact `value(i) cmp target`, decided on logarithms unless too close.
    pub fn cmp_value(&self, i: usize, target: &Q, ln_target: f64) -> Ordering {
        let l = self.ln_value(i);
        let tol = 1e-12 * (1.0 + l.abs().max(ln_target.abs()));
        if l - ln_target > tol {
            Ordering::Greater
        } else if ln_target - l > tol {
            Ordering::Less
        } else {
            self.value(i).cmp(target)
        }
    }

    /// Smallest `i` in `from..=limit` with `λ_i >= target`.
    pub fn first_at_least(&self, target: &Q, from: usize, limit: usize) -> Option<usize> {
        let limit = self.clamp(limit);
        if from > limit {
            return None;
        }
        let tf = q_ln(target);
        if self.cmp_value(limit, target, tf) == Ordering::Less {
            return None;
        }
        let (mut lo, mut hi) = (from, limit);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.cmp_value(mid, target, tf) == Ordering::Less {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }

    /// Smallest consecutive gap `λ_{i+1} - λ_i` over `from <= i < to`.
    pub fn min_gap(&self, from: usize, to: usize) -> Option<(usize, Q)> {
        if from >= to {
            return None;
        }
        match &self.kind {
            SeqKind::Arithmetic { step } => Some((from, step.clone())),
            SeqKind::Geometric { .. } | SeqKind::Polynomial { .. } => {
                // Gaps are increasing for these kinds (convex in n).
                let first = self.value(from + 1) - self.value(from);
                if let SeqKind::Polynomial { exponent } = self.kind {
                    if exponent < 1.0 {
                        let last = self.value(to) - self.value(to - 1);
                        return Some((to - 1, last));
                    }
                }
                Some((from, first))
            }
            SeqKind::Table { values } => {
                let mut best: Option<(usize, Q)> = None;
                for i in from..to.min(values.len() - 1) {
                    let g = &values[i + 1] - &values[i];
                    if best.as_ref().map_or(true, |(_, b)| g < *b) {
                        best = Some((i, g));
                    }
                }
                best
            }
        }
    }
}

/// Index map from a view position to a position of the underlying sequence.
#[derive(Clone, Debug)]
pub enum IndexMap<'a> {
    /// `start + step * k`
    Affine { start: usize, step: usize },
    Slice(&'a [usize]),
}

/// A finite window onto a subsequence, `μ_k = λ_{map(k)}` for `k < len`.
#[derive(Clone, Debug)]
pub struct View<'a> {
    pub seq: &'a ParamSequence,
    pub map: IndexMap<'a>,
    pub len: usize,
}

impl<'a> View<'a> {
    pub fn affine(seq: &'a ParamSequence, start: usize, step: usize, len: usize) -> Self {
        let len = match seq.len() {
            Some(l) if start < l => len.min((l - start - 1) / step.max(1) + 1),
            Some(_) => 0,
            None => len,
        };
        View { seq, map: IndexMap::Affine { start, step }, len }
    }

    pub fn slice(seq: &'a ParamSequence, idx: &'a [usize]) -> Self {
        View { seq, map: IndexMap::Slice(idx), len: idx.len() }
    }

    pub fn index(&self, k: usize) -> usize {
        match &self.map {
            IndexMap::Affine { start, step } => start + step * k,
            IndexMap::Slice(s) => s[k],
        }
    }

    pub fn get(&self, k: usize) -> Q {
        self.seq.value(self.index(k))
    }

    pub fn get_f64(&self, k: usize) -> f64 {
        self.seq.value_f64(self.index(k))
    }

    pub fn ln(&self, k: usize) -> f64 {
        self.seq.ln_value(self.index(k))
    }

    /// Exact `Σ_{k=from}^{to} 1/μ_k`.
    pub fn recip_sum_exact(&self, from: usize, to: usize) -> Q {
        let mut s = Q::zero();
        for k in from..=to {
            s += self.get(k).recip();
        }
        s
    }
}

/// Running sum of `Σ_{k=from}^{to} 1/μ_k` kept in the normalized form
/// `Σ μ_anchor/μ_k`, compared against a budget exactly when the float
/// estimate is too close to call.
#[derive(Clone, Debug)]
pub struct RecipSum {
    anchor: usize,
    from: usize,
    to: Option<usize>,
    ln_anchor: f64,
    sum: f64,
    comp: f64,
}

/// Relative error allowance on each normalized term.
const TERM_REL_ERR: f64 = 1e-10;

impl RecipSum {
    /// Empty sum of terms after `anchor`, normalized by `μ_anchor`.
    pub fn new(view: &View<'_>, anchor: usize, from: usize) -> Self {
        RecipSum { anchor, from, to: None, ln_anchor: view.ln(anchor), sum: 0.0, comp: 0.0 }
    }

    pub fn push(&mut self, view: &View<'_>) {
        let next = self.to.map_or(self.from, |t| t + 1);
        let x = (self.ln_anchor - view.ln(next)).exp();
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.to = Some(next);
    }

    pub fn last(&self) -> Option<usize> {
        self.to
    }

    /// Float estimate of `μ_anchor · Σ 1/μ_k`.
    pub fn normalized(&self) -> f64 {
        self.sum + self.comp
    }

    /// Decides `Σ 1/μ_k ≥ budget/μ_anchor` exactly.
    pub fn ge(&self, view: &View<'_>, budget: &Q) -> bool {
        self.cmp(view, budget) != Ordering::Less
    }

    pub fn cmp(&self, view: &View<'_>, budget: &Q) -> Ordering {
        let Some(to) = self.to else {
            return Q::zero().cmp(budget);
        };
        let s = self.normalized();
        let rhs = q_to_f64(budget);
        let count = (to + 1 - self.from) as f64;
        let tol = (TERM_REL_ERR + 4.0 * count * f64::EPSILON) * s.abs() + 1e-12 * rhs.abs();
        if s.is_finite() && rhs.is_finite() {
            if s - rhs > tol {
                return Ordering::Greater;
            }
            if rhs - s > tol {
                return Ordering::Less;
            }
        }
        let exact = view.recip_sum_exact(self.from, to) * view.get(self.anchor);
        exact.cmp(budget)
    }
}
