//! Staggered (MAC) discretization of the unit square.
//!
//! All fields are `n × n` arrays stored row-major with index `j·n + i`.
//! `u[i, j]` lives on the vertical face at `(i·h, (j+½)·h)`, `v[i, j]` on the
//! horizontal face at `((i+½)·h, j·h)` and `q[i, j]` at the cell centre.
//! With no-slip walls the faces `u[0, ·]` and `v[·, 0]` are the walls and are
//! held at zero; wrapped indexing then sees the walls at `x = 1` and `y = 1`.

mod flux;
mod io;
mod ops;
mod poisson;
mod projection;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flux::{
    flux_divergence, quadrature_gradients, quadrature_points, stress, viscous_flux, GradientField,
};
pub use io::{read_snapshot, write_csv, write_snapshot, SNAPSHOT_MAGIC};
pub use ops::{advect_skew, cell_gradients, divergence, pressure_gradient, trilinear};
pub use poisson::PoissonSolver;
pub use projection::{leray_project, FaceDensity, Projector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    #[serde(alias = "no_slip", alias = "no-slip")]
    Noslip,
}

/// Square MAC grid on `(0, 1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacGrid {
    n: usize,
    h: f64,
    bc: Boundary,
}

impl MacGrid {
    pub fn new(n: usize, bc: Boundary) -> Result<Self> {
        if n < 8 {
            return Err(Error::arg(format!("grid needs at least 8 cells per side, got {n}")));
        }
        Ok(MacGrid {
            n,
            h: 1.0 / n as f64,
            bc,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub(crate) fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }

    #[inline]
    pub(crate) fn next(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }

    pub fn u_position(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.h, (j as f64 + 0.5) * self.h]
    }

    pub fn v_position(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.h, j as f64 * self.h]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [(i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h]
    }

    /// True for the `u` faces that are walls.
    #[inline]
    pub fn u_is_wall(&self, i: usize) -> bool {
        self.bc == Boundary::Noslip && i == 0
    }

    #[inline]
    pub fn v_is_wall(&self, j: usize) -> bool {
        self.bc == Boundary::Noslip && j == 0
    }

    /// Zeroes the wall faces of a face pair.
    pub fn apply_walls(&self, u: &mut [f64], v: &mut [f64]) {
        if self.bc == Boundary::Noslip {
            for j in 0..self.n {
                u[self.idx(0, j)] = 0.0;
            }
            for i in 0..self.n {
                v[self.idx(i, 0)] = 0.0;
            }
        }
    }

    /// Coarsens face fields by an integer factor, averaging the fine faces
    /// that tile each coarse face. Mean flux through every coarse face is
    /// preserved.
    pub fn restrict_faces(&self, coarse: &MacGrid, u: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let r = self.ratio_to(coarse)?;
        let nc = coarse.n;
        let mut uc = vec![0.0; nc * nc];
        let mut vc = vec![0.0; nc * nc];
        let w = 1.0 / r as f64;
        for jc in 0..nc {
            for ic in 0..nc {
                let mut su = 0.0;
                let mut sv = 0.0;
                for s in 0..r {
                    su += u[self.idx(ic * r, jc * r + s)];
                    sv += v[self.idx(ic * r + s, jc * r)];
                }
                uc[coarse.idx(ic, jc)] = su * w;
                vc[coarse.idx(ic, jc)] = sv * w;
            }
        }
        Ok((uc, vc))
    }

    /// Coarsens a cell field by block averaging.
    pub fn restrict_cells(&self, coarse: &MacGrid, q: &[f64]) -> Result<Vec<f64>> {
        let r = self.ratio_to(coarse)?;
        let nc = coarse.n;
        let mut out = vec![0.0; nc * nc];
        let w = 1.0 / (r * r) as f64;
        for jc in 0..nc {
            for ic in 0..nc {
                let mut s = 0.0;
                for dj in 0..r {
                    for di in 0..r {
                        s += q[self.idx(ic * r + di, jc * r + dj)];
                    }
                }
                out[coarse.idx(ic, jc)] = s * w;
            }
        }
        Ok(out)
    }

    fn ratio_to(&self, coarse: &MacGrid) -> Result<usize> {
        if coarse.n > self.n || self.n % coarse.n != 0 || coarse.bc != self.bc {
            return Err(Error::arg(format!(
                "cannot transfer from {} to {} cells per side",
                self.n, coarse.n
            )));
        }
        Ok(self.n / coarse.n)
    }
}

/// Velocity on faces and pressure at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub time: f64,
}

impl FlowState {
    pub fn zeros(grid: &MacGrid) -> Self {
        let len = grid.len();
        FlowState {
            u: vec![0.0; len],
            v: vec![0.0; len],
            q: vec![0.0; len],
            time: 0.0,
        }
    }

    pub fn check(&self, grid: &MacGrid) -> Result<()> {
        let len = grid.len();
        if self.u.len() != len || self.v.len() != len || self.q.len() != len {
            return Err(Error::arg(format!(
                "state arrays ({}, {}, {}) do not match a {}² grid",
                self.u.len(),
                self.v.len(),
                self.q.len(),
                grid.n()
            )));
        }
        Ok(())
    }

    pub fn max_velocity(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `|u|² = Σ (u² + v²) h²`.
    pub fn kinetic(&self, grid: &MacGrid) -> f64 {
        let h2 = grid.h() * grid.h();
        self.u.iter().chain(&self.v).map(|x| x * x).sum::<f64>() * h2
    }

    /// Density-weighted `Σ ρ (u² + v²) h²`.
    pub fn weighted_kinetic(&self, grid: &MacGrid, rho: &FaceDensity) -> f64 {
        let h2 = grid.h() * grid.h();
        let su: f64 = self.u.iter().zip(&rho.u).map(|(x, r)| r * x * x).sum();
        let sv: f64 = self.v.iter().zip(&rho.v).map(|(x, r)| r * x * x).sum();
        (su + sv) * h2
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.q).all(|x| x.is_finite())
    }
}

/// `(Σ |q|^r h²)^{1/r}`.
pub fn cell_lr_norm(grid: &MacGrid, q: &[f64], r: f64) -> f64 {
    let h2 = grid.h() * grid.h();
    (q.iter().map(|x| x.abs().powf(r)).sum::<f64>() * h2).powf(1.0 / r)
}

/// Removes the mean of a cell field.
pub fn remove_mean(q: &mut [f64]) {
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    for x in q.iter_mut() {
        *x -= mean;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_small_n() {
        assert!(MacGrid::new(4, Boundary::Periodic).is_err());
        let g = MacGrid::new(16, Boundary::Noslip).unwrap();
        assert_eq!(g.h() * g.n() as f64, 1.0);
    }

    #[test]
    fn restriction_preserves_uniform_fields_and_flux() {
        let fine = MacGrid::new(32, Boundary::Periodic).unwrap();
        let coarse = MacGrid::new(8, Boundary::Periodic).unwrap();
        let u: Vec<f64> = (0..fine.len()).map(|k| (k % 7) as f64).collect();
        let v = vec![2.0; fine.len()];
        let (uc, vc) = fine.restrict_faces(&coarse, &u, &v).unwrap();
        assert!(vc.iter().all(|&x| x == 2.0));
        let flux_fine: f64 = (0..32).map(|j| u[fine.idx(8, j)]).sum::<f64>() / 32.0;
        let flux_coarse: f64 = (0..8).map(|j| uc[coarse.idx(2, j)]).sum::<f64>() / 8.0;
        assert!((flux_fine - flux_coarse).abs() < 1e-14);
        assert!(fine.restrict_faces(&MacGrid::new(12, Boundary::Periodic).unwrap(), &u, &v).is_err());
    }

    #[test]
    fn boundary_json_names() {
        let b: Boundary = serde_json::from_str("\"noslip\"").unwrap();
        assert_eq!(b, Boundary::Noslip);
        assert_eq!(serde_json::to_string(&Boundary::Periodic).unwrap(), "\"periodic\"");
    }
}
