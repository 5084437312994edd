//! Growth properties of increasing sequences and the recursive splitting
//! that feeds the covering constructions.

mod growth;
mod param;
mod split;

pub use growth::{check_fhcsg, check_sg, fhcsg_window, sqrt_upper, SgWitness};
pub use param::{IndexMap, ParamSequence, RecipSum, SeqKind, View};
pub use split::{
    check_plan, check_window, split_fhcsg, split_fhcsg_with, split_sequence, split_view, split_with_floor,
    FhcsgSplit, PhiEntry, PlanNode, PlanViolation, SplitPlan, DEFAULT_FHCSG_HORIZON,
};

use crate::rational::{q_int, Q};
use num_traits::{One, Signed};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeqError {
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("budget unmet: {inequality} (at index {index})")]
    BudgetUnmet { inequality: String, index: usize },
    #[error("horizon too small: {0}")]
    HorizonTooSmall(String),
    #[error("gap violation: lambda[{index}+1] - lambda[{index}] = {gap} < 1")]
    GapViolation { index: usize, gap: f64 },
    #[error("sequence fails the windowed growth condition: {0}")]
    WindowFailed(String),
}

/// `B(1,A) = A`, `B(d,A) = (A+2)·B(d-1,A) + 3`.
pub fn b_constant(d: usize, a: &Q) -> Q {
    assert!(d >= 1, "dimension must be >= 1");
    assert!(a.is_positive(), "A must be > 0");
    let mut b = a.clone();
    for _ in 1..d {
        b = (a + q_int(2)) * b + q_int(3);
    }
    b
}

/// `(A+1)·B(d-1,A) + 2`, the cumulative threshold of one splitting level.
pub(crate) fn level_threshold(d: usize, a: &Q) -> Q {
    (a + Q::one()) * b_constant(d - 1, a) + q_int(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q_frac;

    #[test]
    fn b_constant_values() {
        assert_eq!(b_constant(1, &q_int(5)), q_int(5));
        assert_eq!(b_constant(2, &q_int(5)), q_int(38));
        assert_eq!(b_constant(3, &q_int(5)), q_int(269));
        assert_eq!(b_constant(2, &q_int(1)), q_int(6));
        assert_eq!(b_constant(2, &q_frac(1, 2)), q_frac(5 * 1 + 12, 4));
    }
}
