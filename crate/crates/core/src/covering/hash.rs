use std::collections::HashMap;

/// Uniform grid bucketing of points in ℝ^d. Every pair at distance `< cell`
/// lies in the same or adjacent buckets, so neighbour scans are exhaustive
/// for that radius.
#[derive(Clone, Debug)]
pub struct SpatialHash {
    cell: f64,
    dim: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialHash {
    pub fn new(dim: usize, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        SpatialHash { cell, dim, buckets: HashMap::new() }
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    pub fn insert(&mut self, x: &[f64], id: usize) {
        let k = self.key(x);
        self.buckets.entry(k).or_default().push(id);
    }

    /// Ids in the `3^d` buckets around `x` (a superset of the ids within
    /// distance `cell`).
    pub fn near(&self, x: &[f64], mut visit: impl FnMut(usize)) {
        let base = self.key(x);
        let mut off = vec![-1i64; self.dim];
        loop {
            let k: Vec<i64> = base.iter().zip(&off).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.buckets.get(&k) {
                for &id in ids {
                    visit(id);
                }
            }
            let mut i = 0;
            loop {
                if i == self.dim {
                    return;
                }
                off[i] += 1;
                if off[i] <= 1 {
                    break;
                }
                off[i] = -1;
                i += 1;
            }
        }
    }

    /// Ids whose bucket is within `reach` buckets of `x` in every axis.
    pub fn near_reach(&self, x: &[f64], reach: i64, mut visit: impl FnMut(usize)) {
        if reach <= 1 {
            return self.near(x, visit);
        }
        let base = self.key(x);
        let mut off = vec![-reach; self.dim];
        loop {
            let k: Vec<i64> = base.iter().zip(&off).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.buckets.get(&k) {
                for &id in ids {
                    visit(id);
                }
            }
            let mut i = 0;
            loop {
                if i == self.dim {
                    return;
                }
                off[i] += 1;
                if off[i] <= reach {
                    break;
                }
                off[i] = -reach;
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_cover_radius() {
        let mut h = SpatialHash::new(2, 1.0);
        h.insert(&[0.95, 0.0], 0);
        h.insert(&[2.5, 0.0], 1);
        let mut seen = vec![];
        h.near(&[0.05, 0.0], |i| seen.push(i));
        assert_eq!(seen, vec![0]);
    }
}
