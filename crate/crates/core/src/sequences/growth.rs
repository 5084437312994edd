use crate::rational::{fmt_q, q_floor_u64, q_from_f64, q_int, q_to_f64, serde_q, Q};
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use super::param::{ParamSequence, RecipSum, SeqKind, View};
use super::SeqError;

/// Geometrically separated subsequence `μ_n = λ_{indices[n]}` whose finite
/// tails beat `budget` for the first `certified` positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgWitness {
    #[serde(with = "serde_q")]
    pub rho: Q,
    #[serde(with = "serde_q")]
    pub rho0: Q,
    pub indices: Vec<usize>,
    #[serde(with = "serde_q")]
    pub budget: Q,
    /// Every `n0 < certified` satisfies `Σ_{n>n0} 1/μ_n > budget/μ_{n0}`
    /// with the sum running to the end of `indices`.
    pub certified: usize,
    pub horizon: usize,
}

impl SgWitness {
    pub fn view<'a>(&'a self, seq: &'a ParamSequence) -> View<'a> {
        View::slice(seq, &self.indices)
    }
}

/// Smallest dyadic rational (denominator `2^40`) whose square is at least `x`.
pub fn sqrt_upper(x: &Q) -> Q {
    let scale = Q::from_integer(num_bigint::BigInt::one() << 40u32);
    let f = q_to_f64(x).sqrt();
    let mut c = (q_from_f64(f) * &scale).ceil() / &scale;
    let step = scale.recip();
    while &c * &c < *x {
        c += &step;
    }
    c
}

/// First index `p < last` such that every ratio on `[p, last)` is `<= rho`.
fn settled_from(seq: &ParamSequence, rho: &Q, last: usize) -> Option<usize> {
    let rf = q_to_f64(rho);
    let le = |i: usize| {
        crate::rational::cmp_fast(seq.ratio_f64(i), rf, 1e-12, || seq.ratio(i).cmp(rho))
            != Ordering::Greater
    };
    if last == 0 || !le(last - 1) {
        return None;
    }
    if seq.ratio_is_monotone() {
        let (mut lo, mut hi) = (0usize, last - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if le(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    } else {
        let mut p = last - 1;
        while p > 0 && le(p - 1) {
            p -= 1;
        }
        Some(p)
    }
}

/// Searches for a growth witness on terms `0..=horizon`.
///
/// Returns `Ok(None)` when the ratios do not settle below `ρ` inside the
/// horizon, and `HorizonTooSmall` when they do but no tail certificate fits.
pub fn check_sg(seq: &ParamSequence, budget: &Q, horizon: usize) -> Result<Option<SgWitness>, SeqError> {
    if !budget.is_positive() {
        return Err(SeqError::InvalidArgument("budget must be > 0".into()));
    }
    let last = seq.clamp(horizon);
    let k = q_floor_u64(budget) + 1;
    let rho0 = Q::one() + Q::new(1.into(), k.into());
    let rho = sqrt_upper(&rho0);
    let Some(start) = settled_from(seq, &rho, last) else {
        return Ok(None);
    };

    let mut indices = vec![start];
    let ln_rho = crate::rational::q_ln(&rho);
    loop {
        let cur = *indices.last().unwrap();
        if cur >= last {
            break;
        }
        match seq.first_multiple_at_least(cur, &rho, ln_rho, last) {
            Some(next) => indices.push(next),
            None => break,
        }
    }

    let view = View::slice(seq, &indices);
    let certified = certify_tails(&view, budget);
    if certified == 0 {
        return Err(SeqError::HorizonTooSmall(format!(
            "no tail of the extracted subsequence exceeds {} within horizon {horizon}",
            fmt_q(budget)
        )));
    }
    Ok(Some(SgWitness { rho, rho0, indices, budget: budget.clone(), certified, horizon: last }))
}

/// Number of leading positions `n0` with `Σ_{n0<n<len} 1/μ_n > budget/μ_{n0}`.
fn certify_tails(view: &View<'_>, budget: &Q) -> usize {
    let len = view.len;
    if len < 2 {
        return 0;
    }
    // tails[n0] = μ_{n0} Σ_{n>n0} 1/μ_n, by the backward recurrence
    let mut tails = vec![0.0f64; len];
    for n0 in (0..len - 1).rev() {
        tails[n0] = (view.ln(n0) - view.ln(n0 + 1)).exp() * (1.0 + tails[n0 + 1]);
    }
    let bf = q_to_f64(budget);
    let mut count = 0;
    for (n0, &t) in tails.iter().enumerate().take(len - 1) {
        let tol = 1e-9 * (t + bf) + (len as f64) * 1e-15 * t;
        let ok = if t - bf > tol {
            true
        } else if bf - t > tol {
            false
        } else {
            view.recip_sum_exact(n0 + 1, len - 1) * view.get(n0) > *budget
        };
        if !ok {
            break;
        }
        count += 1;
    }
    count
}

/// Smallest window `p <= cap` with `Σ_{n=N+1}^{N+p} 1/λ_n >= C/λ_N`.
pub fn fhcsg_window(seq: &ParamSequence, c: &Q, n: usize, cap: usize) -> Option<usize> {
    let view = View::affine(seq, 0, 1, n + cap + 1);
    if view.len <= n + 1 {
        return None;
    }
    let mut sum = RecipSum::new(&view, n, n + 1);
    for p in 1..=cap.min(view.len - n - 1) {
        sum.push(&view);
        if sum.ge(&view, c) {
            return Some(p);
        }
    }
    None
}

/// Smallest window length that works for every start `N <= horizon`,
/// after checking unit gaps on the same range.
pub fn check_fhcsg(seq: &ParamSequence, c: &Q, horizon: usize) -> Result<Option<usize>, SeqError> {
    if !c.is_positive() {
        return Err(SeqError::InvalidArgument("C must be > 0".into()));
    }
    let last = seq.clamp(horizon);
    if let Some((index, gap)) = seq.min_gap(0, last) {
        if gap < Q::one() {
            return Err(SeqError::GapViolation { index, gap: q_to_f64(&gap) });
        }
    }
    if let SeqKind::Geometric { ratio } = &seq.kind {
        // Σ_{n>N} λ_N/λ_n = 1/(q-1) exactly, and every window falls short of it.
        if (ratio - Q::one()).recip() <= *c {
            return Ok(None);
        }
    }
    let mut worst = 0;
    for n in 0..=last {
        if seq.len().is_some_and(|l| n + 1 >= l) {
            break;
        }
        match fhcsg_window(seq, c, n, horizon.max(1)) {
            Some(p) => worst = worst.max(p),
            None => return Ok(None),
        }
    }
    if worst == 0 {
        return Ok(None);
    }
    Ok(Some(worst))
}

impl ParamSequence {
    /// Smallest `i` in `base+1..=limit` with `λ_i >= ρ·λ_base`.
    fn first_multiple_at_least(&self, base: usize, rho: &Q, ln_rho: f64, limit: usize) -> Option<usize> {
        let limit = self.clamp(limit);
        if base >= limit {
            return None;
        }
        let ln_target = self.ln_value(base) + ln_rho;
        let ge = |i: usize| {
            let l = self.ln_value(i);
            let tol = 1e-12 * (1.0 + l.abs().max(ln_target.abs()));
            if l - ln_target > tol {
                true
            } else if ln_target - l > tol {
                false
            } else {
                self.value(i) >= rho * self.value(base)
            }
        };
        if !ge(limit) {
            return None;
        }
        let (mut lo, mut hi) = (base + 1, limit);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if ge(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo)
    }
}

/// `ρ` with `λ_{n+1} <= ρ λ_n` implied by a window of length `p` for `C = 1`.
pub(crate) fn ratio_bound_from_window(p: usize) -> Q {
    q_int(p as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q_frac;

    #[test]
    fn sqrt_upper_is_tight() {
        let x = q_frac(4, 3);
        let r = sqrt_upper(&x);
        assert!(&r * &r >= x);
        let below = &r - Q::new(1.into(), (num_bigint::BigInt::one() << 40u32).into());
        assert!(&below * &below < x);
    }

    #[test]
    fn harmonic_witness() {
        let s = ParamSequence::integers();
        let w = check_sg(&s, &q_int(2), 100_000).unwrap().unwrap();
        assert_eq!(w.rho0, q_frac(4, 3));
        for win in w.indices.windows(2) {
            assert!(s.value(win[1]) >= &w.rho * s.value(win[0]));
        }
        assert!(w.certified > 0);
    }

    #[test]
    fn geometric_has_no_witness() {
        let s = ParamSequence::geometric(q_int(2), 1).unwrap();
        assert_eq!(check_sg(&s, &q_int(2), 100_000).unwrap(), None);
    }

    #[test]
    fn fhcsg_of_integers() {
        let s = ParamSequence::integers();
        assert_eq!(check_fhcsg(&s, &q_int(1), 10_000).unwrap(), Some(3));
    }

    #[test]
    fn fhcsg_geometric_and_gaps() {
        let g = ParamSequence::geometric(q_int(2), 1).unwrap();
        assert_eq!(check_fhcsg(&g, &q_int(2), 1000).unwrap(), None);
        let half = ParamSequence::arithmetic(q_frac(1, 2), 1).unwrap();
        assert!(matches!(check_fhcsg(&half, &q_int(1), 100), Err(SeqError::GapViolation { .. })));
    }
}
