use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};

/// Physical collocation points on `(0, pi)` for Nemytskii evaluation.
///
/// Nodes are `xi_j = j pi / (M + 1)`, `j = 1..=M`, the interior points of the
/// uniform Dirichlet grid. With `e_k(xi) = sqrt(2/pi) sin(k xi)` the discrete
/// inner product with weight `pi / (M + 1)` is exactly orthonormal for
/// `k <= M`, so spectral -> physical -> spectral is the identity for `N <= M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    modes: usize,
    nodes: Vec<f64>,
    /// Row-major `M x N`: `basis[j * N + k] = e_{k+1}(xi_j)`.
    basis: Vec<f64>,
    weight: f64,
    constant_projection: Vec<f64>,
}

impl CollocationGrid {
    pub fn new(modes: usize, points: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::config("collocation grid needs at least one mode"));
        }
        if points < modes {
            return Err(Error::config(format!(
                "collocation grid with {points} points cannot resolve {modes} modes"
            )));
        }
        let h = PI / (points + 1) as f64;
        let nodes: Vec<f64> = (1..=points).map(|j| j as f64 * h).collect();
        let norm = (2.0 / PI).sqrt();
        let mut basis = Vec::with_capacity(points * modes);
        for xi in &nodes {
            basis.extend((1..=modes).map(|k| norm * (k as f64 * xi).sin()));
        }
        let mut grid = Self {
            modes,
            nodes,
            basis,
            weight: h,
            constant_projection: Vec::new(),
        };
        grid.constant_projection = grid.project_physical(&vec![1.0; points]);
        Ok(grid)
    }

    /// Default resolution `M = 4N`.
    pub fn with_default_points(modes: usize) -> Result<Self> {
        Self::new(modes, 4 * modes)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn points(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Discrete sine coefficients of the constant function `1` on `(0, pi)`.
    pub fn constant_projection(&self) -> &[f64] {
        &self.constant_projection
    }

    pub fn to_physical(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.modes, coeffs.len())?;
        let mut out = vec![0.0; self.points()];
        self.to_physical_into(coeffs, &mut out);
        Ok(out)
    }

    pub(crate) fn to_physical_into(&self, coeffs: &[f64], out: &mut [f64]) {
        for (row, o) in self.basis.chunks_exact(self.modes).zip(out.iter_mut()) {
            *o = row.iter().zip(coeffs).map(|(b, c)| b * c).sum();
        }
    }

    pub fn to_spectral(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.points(), values.len())?;
        Ok(self.project_physical(values))
    }

    fn project_physical(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.modes];
        self.project_into(values, &mut out);
        out
    }

    pub(crate) fn project_into(&self, values: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, v) in self.basis.chunks_exact(self.modes).zip(values) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += b * v;
            }
        }
        out.iter_mut().for_each(|o| *o *= self.weight);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_projection_matches_sine_series() {
        // Analytic coefficients of 1 on (0, pi): 2 sqrt(2/pi) / k for odd k, 0 for even k.
        let grid = CollocationGrid::new(16, 64).unwrap();
        for (i, c) in grid.constant_projection().iter().enumerate() {
            let k = i + 1;
            let exact = if k % 2 == 1 {
                2.0 * (2.0 / PI).sqrt() / k as f64
            } else {
                0.0
            };
            // trapezoid aliasing error is O((k / M)^2)
            let tol = 1e-12 + 0.5 * (k as f64 * PI / (2.0 * 65.0)).powi(2) * exact.abs();
            assert!((c - exact).abs() <= tol, "k={k} got {c} want {exact}");
        }
    }

    #[test]
    fn rejects_undersized_grid() {
        assert!(CollocationGrid::new(8, 7).is_err());
        assert!(CollocationGrid::new(0, 7).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(n in 1usize..20, extra in 0usize..40, seed in prop::collection::vec(-5.0f64..5.0, 20)) {
            let m = 2 * n + 1 + extra;
            let grid = CollocationGrid::new(n, m).unwrap();
            let coeffs = &seed[..n];
            let back = grid.to_spectral(&grid.to_physical(coeffs).unwrap()).unwrap();
            for (a, b) in coeffs.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
