//! Explicit nets `(n, x_{n,k})` for boxes, spheres and multiples, and the
//! independent oracles for the separation and approximation conditions.

mod boxes;
mod hash;
mod sphere;
mod verify;

pub use boxes::{
    cover_box, cover_compact, greedy_cover, separate_net, CompactOptions, GreedyOptions, DEFAULT_MAX_POINTS,
};
pub use hash::SpatialHash;
pub use sphere::{
    check_density_plan, cover_multiples, cover_sphere, cover_sphere_capped, cube_face_charts, cube_face_ratio_bounds,
    density_blocks, half_arc_charts, lower_density, sphere_layout, sphere_samples, ChartKind, DensityPlan, MultiplesCovering,
    MultiplesTriple, SphereChart, SphereCovering, SphereLayout, DEFAULT_SPHERE_POINTS,
};
pub use verify::{
    verify_approx, verify_approx_with, verify_multiples, verify_separation, verify_separation_bruteforce,
    verify_sphere_coverage, ApproxOptions, ApproxReport, SeparationReport, SeparationViolation, SphereCoverageReport,
};

use crate::sequences::{ParamSequence, SeqError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Boundary tolerance for float geometry.
pub const TAU: f64 = crate::rational::TAU;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("no growth witness: {0}")]
    NoWitness(String),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error(transparent)]
    Sequence(#[from] SeqError),
}

/// Axis-parallel cube `∏ [lower_i, lower_i + side]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub side: f64,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, side: f64) -> Self {
        AxisBox { lower, side }
    }

    /// `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        AxisBox { lower: vec![lo; d], side: hi - lo }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.lower[i] + self.side
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| v >= self.lower[i] - TAU && v <= self.upper(i) + TAU)
    }

    /// Sign pattern of the open orthant holding the box, if any.
    pub fn orthant(&self) -> Option<Vec<f64>> {
        (0..self.dim())
            .map(|i| {
                if self.lower[i] > 0.0 {
                    Some(1.0)
                } else if self.upper(i) < 0.0 {
                    Some(-1.0)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Image under `x ↦ (s_i x_i)` for signs `s_i = ±1`.
    pub fn reflect(&self, signs: &[f64]) -> AxisBox {
        AxisBox {
            lower: (0..self.dim())
                .map(|i| if signs[i] > 0.0 { self.lower[i] } else { -self.upper(i) })
                .collect(),
            side: self.side,
        }
    }

    /// Euclidean norms of the closest and farthest points of the box.
    pub fn norm_range(&self) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 0..self.dim() {
            let (a, b) = (self.lower[i], self.upper(i));
            let near = if a > 0.0 {
                a
            } else if b < 0.0 {
                -b
            } else {
                0.0
            };
            let far = a.abs().max(b.abs());
            lo += near * near;
            hi += far * far;
        }
        (lo.sqrt(), hi.sqrt())
    }

    /// The `2^d` halves of the box.
    pub fn bisect(&self) -> Vec<AxisBox> {
        let d = self.dim();
        let half = self.side / 2.0;
        (0..1usize << d)
            .map(|mask| AxisBox {
                lower: (0..d)
                    .map(|i| self.lower[i] + if mask >> i & 1 == 1 { half } else { 0.0 })
                    .collect(),
                side: half,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverParams {
    pub epsilon: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverPoint {
    /// Index into the sequence (`λ_n` scales `x`).
    pub n: usize,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub dim: usize,
    pub params: CoverParams,
    pub points: Vec<CoverPoint>,
    pub seq: ParamSequence,
}

impl Covering {
    pub fn empty(dim: usize, params: CoverParams, seq: ParamSequence) -> Self {
        Covering { dim, params, points: Vec::new(), seq }
    }

    /// `λ_n x` for every point.
    pub fn scaled(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|p| {
                let l = self.seq.value_f64(p.n);
                p.x.iter().map(|v| v * l).collect()
            })
            .collect()
    }

    pub fn lambda_max(&self) -> f64 {
        self.points.iter().map(|p| self.seq.value_f64(p.n)).fold(0.0, f64::max)
    }

    /// Recomputes `N` and `M` from the points.
    pub fn refresh_range(&mut self) {
        if let (Some(lo), Some(hi)) = (self.points.iter().map(|p| p.n).min(), self.points.iter().map(|p| p.n).max()) {
            self.params.n = lo;
            self.params.m = hi;
        }
    }

    /// Points as CSV rows `n,x_1,…,x_d`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n");
        for i in 0..self.dim {
            out.push_str(&format!(",x{}", i + 1));
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&p.n.to_string());
            for v in &p.x {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
