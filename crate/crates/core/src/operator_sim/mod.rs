//! Translation group on weighted `L^p(ℝ^d, w dx)` over a finite grid:
//! fields, norms with quadrature error, tail constants, the mixing vector,
//! and the common and frequent hypercyclic constructions.

mod bumps;
mod hc;
mod mixing;

pub use bumps::{continuity_modulus, Bump, BumpSum};
pub use hc::{
    common_hc_construct, fhc_vector, CommonHcOptions, CommonHcRun, FhcOptions, FhcRun, HitReport, SampleHits,
    TargetHits,
};
pub use mixing::{
    decay_profile, fit_decay_exponent, mixing_bumps, mixing_vector, retained_mass, shell_counts, tail_constant,
    DecayPoint, MixingOutcome, ShellCount, KAPPA_BASE,
};

use crate::covering::CoverError;
use crate::sequences::SeqError;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("tail constant {c} exceeds the grid half-width {half_width}")]
    TailNotReachable { c: f64, half_width: f64 },
    #[error("separation violated: {0}")]
    SeparationViolated(String),
    #[error("estimate violated: {0}")]
    EstimateViolated(String),
    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("obstructed: {0}")]
    Obstructed(String),
    #[error("malformed field data: {0}")]
    Format(String),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Sequence(#[from] SeqError),
}

/// Radial weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    /// `e^{-‖x‖²}`.
    Gaussian,
    /// `(1+‖x‖)^{-β}`, integrable iff `β > d`.
    Power { beta: f64 },
}

impl Weight {
    pub fn at_radius(&self, r: f64) -> f64 {
        match *self {
            Weight::Gaussian => (-r * r).exp(),
            Weight::Power { beta } => (1.0 + r).powf(-beta),
        }
    }

    pub fn id(&self) -> u32 {
        match self {
            Weight::Gaussian => 0,
            Weight::Power { .. } => 1,
        }
    }

    fn beta(&self) -> f64 {
        match *self {
            Weight::Gaussian => 0.0,
            Weight::Power { beta } => beta,
        }
    }

    /// `∫_{‖x‖ ≥ r} w(x) dx` in `ℝ^d`, by Simpson's rule on the radial
    /// integral.
    pub fn tail(&self, d: usize, r: f64) -> f64 {
        let r = r.max(0.0);
        let area = sphere_area(d);
        let dm = (d - 1) as i32;
        match *self {
            Weight::Gaussian => area * simpson(|t| t.powi(dm) * (-t * t).exp(), r, r + 14.0, 8000),
            Weight::Power { beta } => {
                // t = e^s - 1 turns the algebraic tail into an exponential one.
                let s0 = (1.0 + r).ln();
                let s1 = s0 + 60.0 / (beta - d as f64);
                area * simpson(|s| (s.exp() - 1.0).powi(dm) * ((1.0 - beta) * s).exp(), s0, s1, 40000)
            }
        }
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Surface measure of `S^{d-1}` (2 points for `d = 1`).
pub fn sphere_area(d: usize) -> f64 {
    // Γ(d/2) from Γ(1/2) = √π, Γ(1) = 1.
    let mut g = if d % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x + 0.5 < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    2.0 * PI.powf(d as f64 / 2.0) / g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    #[serde(rename = "R")]
    pub half_width: f64,
    #[serde(rename = "h")]
    pub step: f64,
    pub weight: Weight,
    pub p: f64,
}

/// `[-R, R]^d` sampled at `-R + i·h`, with the weight cached per node.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGrid {
    pub spec: GridSpec,
    n_axis: usize,
    weights: Vec<f64>,
}

impl WeightedGrid {
    pub fn new(spec: GridSpec) -> Result<Arc<Self>, SimError> {
        let GridSpec { d, half_width, step, weight, p } = spec;
        if d == 0 || !(half_width > 0.0) || !(step > 0.0) || !(p >= 1.0) || !p.is_finite() {
            return Err(SimError::InvalidGrid("need d >= 1, R > 0, h > 0, 1 <= p < inf".into()));
        }
        if let Weight::Power { beta } = weight {
            if !(beta > d as f64) {
                return Err(SimError::InvalidGrid(format!("power weight needs beta > d, got {beta}")));
            }
        }
        let n_axis = (2.0 * half_width / step).round() as usize + 1;
        let total = n_axis.checked_pow(d as u32).filter(|&t| t <= 1 << 28);
        let Some(total) = total else {
            return Err(SimError::InvalidGrid(format!("{n_axis}^{d} nodes is too many")));
        };
        let mut g = WeightedGrid { spec, n_axis, weights: Vec::with_capacity(total) };
        let mut x = vec![0.0; d];
        for i in 0..total {
            g.coords_into(i, &mut x);
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.weights.push(weight.at_radius(r));
        }
        Ok(Arc::new(g))
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn step(&self) -> f64 {
        self.spec.step
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }

    pub fn n_axis(&self) -> usize {
        self.n_axis
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn axis(&self, i: usize) -> f64 {
        -self.spec.half_width + i as f64 * self.spec.step
    }

    pub fn weight(&self, flat: usize) -> f64 {
        self.weights[flat]
    }

    /// Multi-index of a flat (row-major) index.
    pub fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        for k in (0..self.spec.d).rev() {
            idx[k] = flat % self.n_axis;
            flat /= self.n_axis;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n_axis + i)
    }

    pub fn coords_into(&self, flat: usize, x: &mut [f64]) {
        let mut f = flat;
        for k in (0..self.spec.d).rev() {
            x[k] = self.axis(f % self.n_axis);
            f /= self.n_axis;
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.spec.d];
        self.coords_into(flat, &mut x);
        x
    }
}

/// Riemann-sum norm with its step-halving error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    /// `|N_h - N_{2h}|`.
    pub error: f64,
}

/// Grid function on a shared [`WeightedGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Arc<WeightedGrid>,
    pub values: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"CHCF";

impl Field {
    pub fn zeros(grid: &Arc<WeightedGrid>) -> Self {
        Field { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Arc<WeightedGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.d()];
        let values = (0..grid.len())
            .map(|i| {
                grid.coords_into(i, &mut x);
                f(&x)
            })
            .collect();
        Field { grid: grid.clone(), values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `‖x‖` over nodes with a nonzero value, plus one step (the
    /// reach of the piecewise-linear extension).
    pub fn support_radius(&self) -> f64 {
        let mut r: f64 = 0.0;
        let mut x = vec![0.0; self.grid.d()];
        let mut any = false;
        for (i, v) in self.values.iter().enumerate() {
            if *v != 0.0 {
                self.grid.coords_into(i, &mut x);
                r = r.max(x.iter().map(|t| t * t).sum::<f64>().sqrt());
                any = true;
            }
        }
        if any {
            r + self.grid.step()
        } else {
            0.0
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    /// Header (magic, version, d, R, h, weight id, β, p, nodes per axis)
    /// then row-major little-endian `f64` values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.grid.spec;
        let mut out = Vec::with_capacity(56 + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(s.d as u32).to_le_bytes());
        out.extend_from_slice(&s.half_width.to_le_bytes());
        out.extend_from_slice(&s.step.to_le_bytes());
        out.extend_from_slice(&s.weight.id().to_le_bytes());
        out.extend_from_slice(&s.weight.beta().to_le_bytes());
        out.extend_from_slice(&s.p.to_le_bytes());
        out.extend_from_slice(&(self.grid.n_axis as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Field, SimError> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8], SimError> {
            if cur.len() < n {
                return Err(SimError::Format("truncated header or payload".into()));
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(4)? != MAGIC {
            return Err(SimError::Format("bad magic".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != 1 {
            return Err(SimError::Format(format!("unsupported version {version}")));
        }
        let d = u32_at(take(4)?) as usize;
        let half_width = f64_at(take(8)?);
        let step = f64_at(take(8)?);
        let weight = match u32_at(take(4)?) {
            0 => {
                take(8)?;
                Weight::Gaussian
            }
            1 => Weight::Power { beta: f64_at(take(8)?) },
            id => return Err(SimError::Format(format!("unknown weight id {id}"))),
        };
        let p = f64_at(take(8)?);
        let n_axis = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let grid = WeightedGrid::new(GridSpec { d, half_width, step, weight, p })?;
        if grid.n_axis != n_axis {
            return Err(SimError::Format(format!("header says {n_axis} nodes per axis, grid has {}", grid.n_axis)));
        }
        let payload = take(8 * grid.len())?;
        let values = payload.chunks_exact(8).map(f64_at).collect();
        if !cur.is_empty() {
            return Err(SimError::Format("trailing bytes".into()));
        }
        Ok(Field { grid, values })
    }

    /// Rows `x1,…,xd,value`.
    pub fn to_csv(&self) -> String {
        let d = self.grid.d();
        let mut out: String = (1..=d).map(|k| format!("x{k},")).collect();
        out.push_str("value\n");
        let mut x = vec![0.0; d];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.coords_into(i, &mut x);
            for t in &x {
                out.push_str(&format!("{t},"));
            }
            out.push_str(&format!("{v:.17e}\n"));
        }
        out
    }
}

fn snap(s: f64) -> f64 {
    let r = s.round();
    if (s - r).abs() < 1e-9 * s.abs().max(1.0) {
        r
    } else {
        s
    }
}

/// `(τ_a f)(x) = f(x + a)`: exact index shift for grid multiples,
/// multilinear interpolation otherwise; zero outside the grid.
pub fn translate(f: &Field, a: &[f64]) -> Field {
    let g = &f.grid;
    let d = g.d();
    let n = g.n_axis as i64;
    let s: Vec<f64> = a.iter().map(|v| snap(v / g.step())).collect();
    let mut out = vec![0.0; g.len()];
    let mut idx = vec![0usize; d];
    if s.iter().all(|v| v.fract() == 0.0) {
        let si: Vec<i64> = s.iter().map(|v| *v as i64).collect();
        let mut src = vec![0usize; d];
        'node: for (flat, o) in out.iter_mut().enumerate() {
            g.unflatten(flat, &mut idx);
            for k in 0..d {
                let t = idx[k] as i64 + si[k];
                if t < 0 || t >= n {
                    continue 'node;
                }
                src[k] = t as usize;
            }
            *o = f.values[g.flatten(&src)];
        }
    } else {
        let base: Vec<f64> = s.iter().map(|v| v.floor()).collect();
        let frac: Vec<f64> = s.iter().zip(&base).map(|(v, b)| v - b).collect();
        let mut corner = vec![0usize; d];
        for (flat, o) in out.iter_mut().enumerate() {
            g.unflatten(flat, &mut idx);
            let mut acc = 0.0;
            'corner: for mask in 0..1usize << d {
                let mut wgt = 1.0;
                for k in 0..d {
                    let up = mask >> k & 1 == 1;
                    wgt *= if up { frac[k] } else { 1.0 - frac[k] };
                    let t = idx[k] as i64 + base[k] as i64 + up as i64;
                    if wgt == 0.0 || t < 0 || t >= n {
                        continue 'corner;
                    }
                    corner[k] = t as usize;
                }
                acc += wgt * f.values[g.flatten(&corner)];
            }
            *o = acc;
        }
    }
    Field { grid: g.clone(), values: out }
}

/// Riemann sum of `(∫|f|^p w)^{1/p}` with the step-halving estimate
/// `|N_h - N_{2h}|` (the coarse sum uses nodes with all indices even).
pub fn norm_lp(f: &Field) -> NormEstimate {
    norm_of_values(&f.grid, &f.values)
}

pub(crate) fn norm_of_values(g: &WeightedGrid, values: &[f64]) -> NormEstimate {
    let d = g.d();
    let p = g.spec.p;
    let h = g.step();
    let n = g.n_axis;
    let mut fine = 0.0;
    let mut coarse = 0.0;
    for (i, v) in values.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let t = if p == 2.0 { v * v } else { v.abs().powf(p) } * g.weights[i];
        fine += t;
        let mut j = i;
        let mut even = true;
        for _ in 0..d {
            even &= (j % n) % 2 == 0;
            j /= n;
        }
        if even {
            coarse += t;
        }
    }
    let value = (fine * h.powi(d as i32)).powf(1.0 / p);
    let coarse = (coarse * (2.0 * h).powi(d as i32)).powf(1.0 / p);
    NormEstimate { value, error: (value - coarse).abs() }
}

/// `‖f - g‖`.
pub fn lp_distance(f: &Field, g: &Field) -> NormEstimate {
    norm_lp(&f.sub(g))
}
