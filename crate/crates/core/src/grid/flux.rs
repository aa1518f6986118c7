//! Nonlinear viscous flux on sub-cell quadrature points.
//!
//! Each cell is split into four quadrants. The quadrant touching corner
//! `(i+di, j+dj)` carries the tensor
//! `[[∂u/∂x (cell), ∂u/∂y (corner)], [∂v/∂x (corner), ∂v/∂y (cell)]]`,
//! all compact differences, with weight `h²/4`. The discrete divergence of a
//! stress field is the exact negative adjoint of this gradient map.

use super::{Boundary, MacGrid};
use crate::error::{Error, Result};
use crate::tensor::{Sym2, Tensor2};

/// Quadrant gradients stored as their distinct ingredients.
#[derive(Debug, Clone)]
pub struct GradientField {
    n: usize,
    nc: usize,
    bc: Boundary,
    dudx: Vec<f64>,
    dvdy: Vec<f64>,
    dudy: Vec<f64>,
    dvdx: Vec<f64>,
}

impl GradientField {
    #[inline]
    fn corner(&self, ci: usize, cj: usize) -> usize {
        match self.bc {
            Boundary::Periodic => (cj % self.n) * self.nc + (ci % self.n),
            Boundary::Noslip => cj * self.nc + ci,
        }
    }

    /// Tensor on quadrant `q = di + 2·dj` of cell `(i, j)`.
    #[inline]
    pub fn tensor(&self, i: usize, j: usize, q: usize) -> Tensor2 {
        let k = j * self.n + i;
        let c = self.corner(i + (q & 1), j + (q >> 1));
        Tensor2::new(self.dudx[k], self.dudy[c], self.dvdx[c], self.dvdy[k])
    }

    /// All quadrant tensors, ordered `4·(j·n + i) + q`.
    pub fn tensors(&self) -> Vec<Tensor2> {
        let n = self.n;
        let mut out = Vec::with_capacity(4 * n * n);
        for j in 0..n {
            for i in 0..n {
                for q in 0..4 {
                    out.push(self.tensor(i, j, q));
                }
            }
        }
        out
    }

    /// Average of the four quadrant tensors of each cell.
    pub fn cell_average(&self) -> Vec<Tensor2> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let mut t = Tensor2::ZERO;
                for q in 0..4 {
                    t += self.tensor(i, j, q);
                }
                out.push(t * 0.25);
            }
        }
        out
    }
}

/// Centroids of the quadrature quadrants, ordered like [`GradientField::tensors`].
pub fn quadrature_points(grid: &MacGrid) -> Vec<[f64; 2]> {
    let n = grid.n();
    let h = grid.h();
    let mut pts = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            for q in 0..4 {
                let di = (q & 1) as f64;
                let dj = (q >> 1) as f64;
                pts.push([(i as f64 + 0.25 + 0.5 * di) * h, (j as f64 + 0.25 + 0.5 * dj) * h]);
            }
        }
    }
    pts
}

pub fn quadrature_gradients(grid: &MacGrid, u: &[f64], v: &[f64]) -> GradientField {
    let n = grid.n();
    let ih = 1.0 / grid.h();
    let bc = grid.bc();
    let nc = match bc {
        Boundary::Periodic => n,
        Boundary::Noslip => n + 1,
    };
    let mut dudx = vec![0.0; n * n];
    let mut dvdy = vec![0.0; n * n];
    for j in 0..n {
        let jn = grid.next(j);
        for i in 0..n {
            let k = grid.idx(i, j);
            dudx[k] = (u[grid.idx(grid.next(i), j)] - u[k]) * ih;
            dvdy[k] = (v[grid.idx(i, jn)] - v[k]) * ih;
        }
    }
    let mut dudy = vec![0.0; nc * nc];
    let mut dvdx = vec![0.0; nc * nc];
    match bc {
        Boundary::Periodic => {
            for cj in 0..n {
                for ci in 0..n {
                    let c = cj * nc + ci;
                    dudy[c] = (u[grid.idx(ci, cj)] - u[grid.idx(ci, grid.prev(cj))]) * ih;
                    dvdx[c] = (v[grid.idx(ci, cj)] - v[grid.idx(grid.prev(ci), cj)]) * ih;
                }
            }
        }
        Boundary::Noslip => {
            for cj in 0..=n {
                for ci in 0..=n {
                    let c = cj * nc + ci;
                    if ci > 0 && ci < n {
                        dudy[c] = if cj == 0 {
                            2.0 * u[grid.idx(ci, 0)] * ih
                        } else if cj == n {
                            -2.0 * u[grid.idx(ci, n - 1)] * ih
                        } else {
                            (u[grid.idx(ci, cj)] - u[grid.idx(ci, cj - 1)]) * ih
                        };
                    }
                    if cj > 0 && cj < n {
                        dvdx[c] = if ci == 0 {
                            2.0 * v[grid.idx(0, cj)] * ih
                        } else if ci == n {
                            -2.0 * v[grid.idx(n - 1, cj)] * ih
                        } else {
                            (v[grid.idx(ci, cj)] - v[grid.idx(ci - 1, cj)]) * ih
                        };
                    }
                }
            }
        }
    }
    GradientField {
        n,
        nc,
        bc,
        dudx,
        dvdy,
        dudy,
        dvdx,
    }
}

/// `a·G + b·|G|^{p−2}·G` with the Frobenius modulus; the power term is
/// exactly zero at `G = 0`.
#[inline]
pub fn stress(a: &Sym2, b: f64, p: f64, g: &Tensor2) -> Tensor2 {
    let lin = a.apply(g);
    let m = g.norm();
    let w = if p == 2.0 {
        b
    } else if m == 0.0 {
        0.0
    } else if p == 3.0 {
        b * m
    } else {
        b * m.powf(p - 2.0)
    };
    lin + *g * w
}

/// Pointwise stress over a field of gradients.
pub fn viscous_flux(gradient: &[Tensor2], a_vals: &[Sym2], b_vals: &[f64], p: f64) -> Result<Vec<Tensor2>> {
    if !(p >= 2.0) {
        return Err(Error::arg(format!("exponent p = {p} must be at least 2")));
    }
    if a_vals.len() != gradient.len() || b_vals.len() != gradient.len() {
        return Err(Error::arg("coefficient fields do not match the gradient field"));
    }
    Ok(gradient
        .iter()
        .zip(a_vals)
        .zip(b_vals)
        .map(|((g, a), &b)| stress(a, b, p, g))
        .collect())
}

/// Face forces `Div σ` from quadrant stresses ordered like
/// [`GradientField::tensors`]. Satisfies
/// `Σ Div σ · w h² = −Σ (h²/4) σ_q : G_q(w)` for every face field `w`.
pub fn flux_divergence(grid: &MacGrid, sigma: &[Tensor2]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n();
    let ih = 1.0 / grid.h();
    let bc = grid.bc();
    let nc = match bc {
        Boundary::Periodic => n,
        Boundary::Noslip => n + 1,
    };
    let mut fu = vec![0.0; n * n];
    let mut fv = vec![0.0; n * n];
    let mut t12 = vec![0.0; nc * nc];
    let mut t21 = vec![0.0; nc * nc];
    for j in 0..n {
        for i in 0..n {
            let k = grid.idx(i, j);
            let base = 4 * k;
            let mut s11 = 0.0;
            let mut s22 = 0.0;
            for q in 0..4 {
                let s = &sigma[base + q].0;
                s11 += s[0][0];
                s22 += s[1][1];
                let (ci, cj) = (i + (q & 1), j + (q >> 1));
                let c = match bc {
                    Boundary::Periodic => (cj % n) * nc + (ci % n),
                    Boundary::Noslip => cj * nc + ci,
                };
                t12[c] += 0.25 * s[0][1];
                t21[c] += 0.25 * s[1][0];
            }
            let s11 = 0.25 * s11 * ih;
            let s22 = 0.25 * s22 * ih;
            fu[grid.idx(grid.next(i), j)] -= s11;
            fu[k] += s11;
            fv[grid.idx(i, grid.next(j))] -= s22;
            fv[k] += s22;
        }
    }
    match bc {
        Boundary::Periodic => {
            for cj in 0..n {
                for ci in 0..n {
                    let c = cj * nc + ci;
                    let t = t12[c] * ih;
                    fu[grid.idx(ci, cj)] -= t;
                    fu[grid.idx(ci, grid.prev(cj))] += t;
                    let t = t21[c] * ih;
                    fv[grid.idx(ci, cj)] -= t;
                    fv[grid.idx(grid.prev(ci), cj)] += t;
                }
            }
        }
        Boundary::Noslip => {
            for cj in 0..=n {
                for ci in 0..=n {
                    let c = cj * nc + ci;
                    if ci > 0 && ci < n {
                        let t = t12[c] * ih;
                        if cj == 0 {
                            fu[grid.idx(ci, 0)] -= 2.0 * t;
                        } else if cj == n {
                            fu[grid.idx(ci, n - 1)] += 2.0 * t;
                        } else {
                            fu[grid.idx(ci, cj)] -= t;
                            fu[grid.idx(ci, cj - 1)] += t;
                        }
                    }
                    if cj > 0 && cj < n {
                        let t = t21[c] * ih;
                        if ci == 0 {
                            fv[grid.idx(0, cj)] -= 2.0 * t;
                        } else if ci == n {
                            fv[grid.idx(n - 1, cj)] += 2.0 * t;
                        } else {
                            fv[grid.idx(ci, cj)] -= t;
                            fv[grid.idx(ci - 1, cj)] += t;
                        }
                    }
                }
            }
            grid.apply_walls(&mut fu, &mut fv);
        }
    }
    (fu, fv)
}

impl GradientField {
    /// `Σ (h²/4) |G_q|²`.
    pub fn h1_seminorm_sq(&self) -> f64 {
        let w = 0.25 / (self.n * self.n) as f64;
        self.tensors().iter().map(|g| g.norm_sq()).sum::<f64>() * w
    }

    /// `Σ (h²/4) |G_q|^p`.
    pub fn lp_power(&self, p: f64) -> f64 {
        let w = 0.25 / (self.n * self.n) as f64;
        self.tensors().iter().map(|g| g.norm().powf(p)).sum::<f64>() * w
    }
}
