//! Compactly supported fields given in closed form, so that translates far
//! outside the grid can still be sampled exactly.

use super::{norm_of_values, Field, NormEstimate, WeightedGrid};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// `amplitude·(1 - ‖x - center‖²/radius²)²` inside the ball, zero outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        let t = 1.0 - r2 / (self.radius * self.radius);
        if t > 0.0 {
            self.amplitude * t * t
        } else {
            0.0
        }
    }

    /// Largest `‖∇φ‖`, attained at `‖x - c‖ = r/√3`.
    pub fn lipschitz(&self) -> f64 {
        self.amplitude.abs() * 8.0 / (3.0 * 3f64.sqrt() * self.radius)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSum {
    pub dim: usize,
    pub bumps: Vec<Bump>,
}

impl BumpSum {
    pub fn zero(dim: usize) -> Self {
        BumpSum { dim, bumps: Vec::new() }
    }

    pub fn single(center: Vec<f64>, radius: f64, amplitude: f64) -> Self {
        BumpSum { dim: center.len(), bumps: vec![Bump { center, radius, amplitude }] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.bumps.iter().map(|b| b.eval(x)).sum()
    }

    /// Radius of a centred ball containing the support.
    pub fn support_radius(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.center.iter().map(|v| v * v).sum::<f64>().sqrt() + b.radius)
            .fold(0.0, f64::max)
    }

    /// Upper bound for `‖·‖_∞`: the largest sum of `|amplitude|` over a
    /// bump and the bumps whose support meets it.
    pub fn sup_bound(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, b) in self.bumps.iter().enumerate() {
            let mut s = 0.0;
            for (j, c) in self.bumps.iter().enumerate() {
                let dd: f64 = b.center.iter().zip(&c.center).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                if j == i || dd < b.radius + c.radius {
                    s += c.amplitude.abs();
                }
            }
            best = best.max(s);
        }
        best
    }

    /// `τ_{-a} g` for every `a`, added to `self` (the bumps of `g` are moved
    /// by `+a`).
    pub fn add_translates(&mut self, g: &BumpSum, shifts: &[Vec<f64>], sign: f64) {
        for a in shifts {
            for b in &g.bumps {
                self.bumps.push(Bump {
                    center: b.center.iter().zip(a).map(|(c, t)| c + t).collect(),
                    radius: b.radius,
                    amplitude: sign * b.amplitude,
                });
            }
        }
    }

    /// Adds `sign·f(x + shift)` at every node.
    pub fn sample_into(&self, values: &mut [f64], grid: &WeightedGrid, shift: &[f64], sign: f64) {
        let d = grid.d();
        let n = grid.n_axis();
        let (r0, h) = (grid.half_width(), grid.step());
        let mut lo = vec![0usize; d];
        let mut hi = vec![0usize; d];
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        'bump: for b in &self.bumps {
            for k in 0..d {
                let c = b.center[k] - shift[k];
                let a = ((c - b.radius + r0) / h).ceil().max(0.0);
                let z = ((c + b.radius + r0) / h).floor().min((n - 1) as f64);
                if a > z {
                    continue 'bump;
                }
                lo[k] = a as usize;
                hi[k] = z as usize;
            }
            idx.copy_from_slice(&lo);
            loop {
                for k in 0..d {
                    x[k] = grid.axis(idx[k]) + shift[k];
                }
                values[grid.flatten(&idx)] += sign * b.eval(&x);
                let mut k = d;
                loop {
                    if k == 0 {
                        continue 'bump;
                    }
                    k -= 1;
                    if idx[k] < hi[k] {
                        idx[k] += 1;
                        break;
                    }
                    idx[k] = lo[k];
                }
            }
        }
    }

    /// `τ_a f` sampled on the grid.
    pub fn sample(&self, grid: &Arc<WeightedGrid>, shift: &[f64]) -> Field {
        let mut f = Field::zeros(grid);
        self.sample_into(&mut f.values, grid, shift, 1.0);
        f
    }

    /// `‖τ_a f - target‖`.
    pub fn distance_to(&self, grid: &WeightedGrid, shift: &[f64], target: &Field) -> NormEstimate {
        let mut v = target.values.iter().map(|t| -t).collect::<Vec<_>>();
        self.sample_into(&mut v, grid, shift, 1.0);
        norm_of_values(grid, &v)
    }
}

pub(crate) fn probe_directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut u = vec![0.0; d];
            u[k] = s;
            out.push(u);
        }
    }
    if d > 1 {
        let c = 1.0 / (d as f64).sqrt();
        for mask in 0..1usize << d {
            out.push((0..d).map(|k| if mask >> k & 1 == 1 { -c } else { c }).collect());
        }
    }
    out
}

/// Radius `s` with `‖τ_a v - v‖ < target` for the probed `‖a‖ <= s`: bisection
/// on the probe directions, then a 32-step scan of `[0, s]` that shrinks `s`
/// below any failing radius.
pub fn continuity_modulus(v: &BumpSum, target: f64, grid: &Arc<WeightedGrid>) -> f64 {
    let d = grid.d();
    let base = v.sample(grid, &vec![0.0; d]);
    let dirs = probe_directions(d);
    let gap = |s: f64| {
        dirs.iter()
            .map(|u| {
                let a: Vec<f64> = u.iter().map(|t| t * s).collect();
                v.distance_to(grid, &a, &base).value
            })
            .fold(0.0, f64::max)
    };
    let mut hi = 2.0 * v.support_radius() + grid.step();
    if gap(hi) < target {
        return hi;
    }
    let mut lo = 0.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    'scan: loop {
        for k in 1..=32 {
            let s = lo * k as f64 / 32.0;
            if gap(s) >= target {
                lo = lo * (k - 1) as f64 / 32.0;
                continue 'scan;
            }
        }
        return lo;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_sim::{norm_lp, GridSpec, Weight};

    #[test]
    fn far_bumps_sample_to_zero() {
        let g = WeightedGrid::new(GridSpec { d: 1, half_width: 5.0, step: 0.1, weight: Weight::Gaussian, p: 2.0 })
            .unwrap();
        let f = BumpSum::single(vec![100.0], 1.0, 1.0);
        assert_eq!(norm_lp(&f.sample(&g, &[0.0])).value, 0.0);
        assert!(norm_lp(&f.sample(&g, &[100.0])).value > 0.5);
    }

    #[test]
    fn modulus_is_positive() {
        let g = WeightedGrid::new(GridSpec { d: 1, half_width: 5.0, step: 0.01, weight: Weight::Gaussian, p: 2.0 })
            .unwrap();
        let v = BumpSum::single(vec![0.0], 1.0, 1.0);
        let s = continuity_modulus(&v, 0.1, &g);
        assert!(s > 0.01 && s < 1.0, "{s}");
        let base = v.sample(&g, &[0.0]);
        assert!(v.distance_to(&g, &[s], &base).value < 0.1);
    }
}
