use crate::rational::{fmt_q, parse_q, Q};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::fmt;

use super::ObstructionError;

/// Interval of ℝ with exact endpoints; each end may be open or closed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "crate::rational::serde_q")]
    pub lo: Q,
    #[serde(with = "crate::rational::serde_q")]
    pub hi: Q,
    #[serde(default = "yes")]
    pub lo_closed: bool,
    #[serde(default = "yes")]
    pub hi_closed: bool,
}

fn yes() -> bool {
    true
}

impl Interval {
    pub fn closed(lo: Q, hi: Q) -> Self {
        Interval { lo, hi, lo_closed: true, hi_closed: true }
    }

    pub fn open(lo: Q, hi: Q) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: false }
    }

    /// Parses `"a,b"` as the closed interval `[a, b]`.
    pub fn parse(s: &str) -> Result<Self, ObstructionError> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| ObstructionError::InvalidArgument(format!("expected `lo,hi`, got `{s}`")))?;
        let lo = parse_q(a).map_err(ObstructionError::InvalidArgument)?;
        let hi = parse_q(b).map_err(ObstructionError::InvalidArgument)?;
        if hi < lo {
            return Err(ObstructionError::InvalidArgument(format!("empty interval `{s}`")));
        }
        Ok(Interval::closed(lo, hi))
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    /// Lebesgue measure; negative-width inputs count as 0.
    pub fn len(&self) -> Q {
        if self.hi > self.lo {
            &self.hi - &self.lo
        } else {
            Q::zero()
        }
    }

    pub fn contains(&self, x: &Q) -> bool {
        let above = if self.lo_closed { *x >= self.lo } else { *x > self.lo };
        let below = if self.hi_closed { *x <= self.hi } else { *x < self.hi };
        above && below
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        !self.intersection(other).is_empty()
    }

    pub fn intersection(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = match self.lo.cmp(&other.lo) {
            std::cmp::Ordering::Greater => (self.lo.clone(), self.lo_closed),
            std::cmp::Ordering::Less => (other.lo.clone(), other.lo_closed),
            std::cmp::Ordering::Equal => (self.lo.clone(), self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.cmp(&other.hi) {
            std::cmp::Ordering::Less => (self.hi.clone(), self.hi_closed),
            std::cmp::Ordering::Greater => (other.hi.clone(), other.hi_closed),
            std::cmp::Ordering::Equal => (self.hi.clone(), self.hi_closed && other.hi_closed),
        };
        Interval { lo, hi, lo_closed, hi_closed }
    }

    /// `self \ cut` as at most two pieces (empty pieces dropped).
    pub fn minus(&self, cut: &Interval) -> Vec<Interval> {
        if cut.is_empty() || !self.intersects(cut) {
            return if self.is_empty() { vec![] } else { vec![self.clone()] };
        }
        let left = Interval { lo: self.lo.clone(), hi: cut.lo.clone(), lo_closed: self.lo_closed, hi_closed: !cut.lo_closed };
        let right = Interval { lo: cut.hi.clone(), hi: self.hi.clone(), lo_closed: !cut.hi_closed, hi_closed: self.hi_closed };
        [left, right]
            .into_iter()
            .map(|p| p.intersection(self))
            .filter(|p| !p.is_empty())
            .collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            fmt_q(&self.lo),
            fmt_q(&self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Sorted, pairwise disjoint, nonempty intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> Q {
        self.intervals.iter().map(Interval::len).fold(Q::zero(), |a, b| a + b)
    }

    pub fn contains(&self, x: &Q) -> bool {
        self.intervals.iter().any(|i| i.contains(x))
    }

    /// Checks sortedness, disjointness and non-emptiness.
    pub fn is_well_formed(&self) -> bool {
        self.intervals.iter().all(|i| !i.is_empty())
            && self.intervals.windows(2).all(|w| {
                w[0].hi < w[1].lo || (w[0].hi == w[1].lo && !(w[0].hi_closed && w[1].lo_closed))
            })
    }
}

/// Exact `I \ ∪ Js`. Asserts the component bound `s <= p + 1` and
/// `measure >= |I| - Σ|J|`.
pub fn interval_subtract(i: &Interval, js: &[Interval]) -> IntervalSet {
    let mut pieces: Vec<Interval> = if i.is_empty() { vec![] } else { vec![i.clone()] };
    for j in js {
        pieces = pieces.iter().flat_map(|p| p.minus(j)).collect();
    }
    pieces.sort_by(|a, b| a.lo.cmp(&b.lo));
    let out = IntervalSet { intervals: pieces };
    assert!(out.len() <= js.len() + 1, "component bound violated");
    let removed = js.iter().map(Interval::len).fold(Q::zero(), |a, b| a + b);
    assert!(out.measure() >= i.len() - removed, "length inequality violated");
    debug_assert!(out.is_well_formed());
    out
}

/// Longest component of `I \ ∪ Js` (the leftmost one on ties).
pub fn largest_gap(i: &Interval, js: &[Interval]) -> Result<Interval, ObstructionError> {
    let removed = js.iter().map(Interval::len).fold(Q::zero(), |a, b| a + b);
    if i.len() <= removed {
        return Err(ObstructionError::PreconditionViolated(format!(
            "|I| = {} <= total removed length {}",
            fmt_q(&i.len()),
            fmt_q(&removed)
        )));
    }
    let set = interval_subtract(i, js);
    let mut best: Option<&Interval> = None;
    for c in &set.intervals {
        if best.map_or(true, |b| c.len() > b.len()) {
            best = Some(c);
        }
    }
    let best = best.expect("nonempty by the length inequality").clone();
    let bound = (i.len() - removed) / Q::from_integer((js.len() as i64 + 1).into());
    assert!(best.len() >= bound, "gap bound violated");
    Ok(best)
}
