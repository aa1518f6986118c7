use super::ops::divergence_of;
use super::{pressure_gradient, remove_mean, FlowState, MacGrid, PoissonSolver};
use crate::error::{Error, Result};

/// Density sampled on the velocity faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceDensity {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FaceDensity {
    pub fn uniform(grid: &MacGrid, value: f64) -> Self {
        FaceDensity {
            u: vec![value; grid.len()],
            v: vec![value; grid.len()],
        }
    }

    /// Samples `rho(x)` at the face positions.
    pub fn from_fn(grid: &MacGrid, rho: impl Fn([f64; 2]) -> f64) -> Self {
        let n = grid.n();
        let mut out = FaceDensity::uniform(grid, 0.0);
        for j in 0..n {
            for i in 0..n {
                let k = grid.idx(i, j);
                out.u[k] = rho(grid.u_position(i, j));
                out.v[k] = rho(grid.v_position(i, j));
            }
        }
        out
    }

    /// Averages a cell-centred density onto the faces.
    pub fn from_cells(grid: &MacGrid, rho: &[f64]) -> Self {
        let n = grid.n();
        let mut out = FaceDensity::uniform(grid, 0.0);
        for j in 0..n {
            for i in 0..n {
                let k = grid.idx(i, j);
                out.u[k] = if grid.u_is_wall(i) {
                    rho[k]
                } else {
                    0.5 * (rho[k] + rho[grid.idx(grid.prev(i), j)])
                };
                out.v[k] = if grid.v_is_wall(j) {
                    rho[k]
                } else {
                    0.5 * (rho[k] + rho[grid.idx(i, grid.prev(j))])
                };
            }
        }
        out
    }

    pub fn is_uniform(&self) -> bool {
        let first = self.u[0];
        self.u.iter().chain(&self.v).all(|&r| r == first)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.u
            .iter()
            .chain(&self.v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    }
}

const MAX_PCG_ITERATIONS: usize = 400;

/// Projection onto discretely divergence-free face fields, orthogonal in the
/// density-weighted inner product `Σ ρ u·w h²`.
///
/// Solves `div(ρ⁻¹ ∇φ) = div u*` and sets `u = u* − ρ⁻¹∇φ`. Uniform density
/// uses the direct transform solver; variable density uses conjugate
/// gradients preconditioned by the constant-coefficient solve, warm-started
/// from the previous potential.
#[derive(Debug)]
pub struct Projector {
    grid: MacGrid,
    solver: PoissonSolver,
    beta: Option<(Vec<f64>, Vec<f64>)>,
    beta_bar: f64,
    phi: Vec<f64>,
}

impl Projector {
    pub fn new(grid: &MacGrid, density: Option<&FaceDensity>) -> Result<Self> {
        let solver = PoissonSolver::new(grid);
        let (beta, beta_bar) = match density {
            Some(d) => {
                if d.u.len() != grid.len() || d.v.len() != grid.len() {
                    return Err(Error::arg("density does not match the grid"));
                }
                let (lo, _) = d.min_max();
                if !(lo > 0.0) {
                    return Err(Error::arg("density must be positive"));
                }
                if d.is_uniform() {
                    (None, 1.0 / d.u[0])
                } else {
                    let bu: Vec<f64> = d.u.iter().map(|r| 1.0 / r).collect();
                    let bv: Vec<f64> = d.v.iter().map(|r| 1.0 / r).collect();
                    let bar = (bu.iter().sum::<f64>() + bv.iter().sum::<f64>()) / (2 * grid.len()) as f64;
                    (Some((bu, bv)), bar)
                }
            }
            None => (None, 1.0),
        };
        Ok(Projector {
            grid: *grid,
            solver,
            beta,
            beta_bar,
            phi: vec![0.0; grid.len()],
        })
    }

    fn apply_operator(&self, phi: &[f64]) -> Vec<f64> {
        let (mut gx, mut gy) = pressure_gradient(&self.grid, phi);
        if let Some((bu, bv)) = &self.beta {
            for (g, b) in gx.iter_mut().zip(bu) {
                *g *= b;
            }
            for (g, b) in gy.iter_mut().zip(bv) {
                *g *= b;
            }
        } else {
            for g in gx.iter_mut().chain(gy.iter_mut()) {
                *g *= self.beta_bar;
            }
        }
        divergence_of(&self.grid, &gx, &gy)
    }

    /// Projects in place and returns the zero-mean potential `φ`.
    pub fn project(&mut self, u: &mut [f64], v: &mut [f64]) -> Result<Vec<f64>> {
        let grid = self.grid;
        grid.apply_walls(u, v);
        let rhs = divergence_of(&grid, u, v);
        let scale = u.iter().chain(v.iter()).fold(0.0_f64, |m, x| m.max(x.abs())) + 1.0;
        // the divergence telescopes, so its mean is round-off of size |u|/h
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        if mean.abs() > 1e-12 * scale / grid.h() {
            return Err(Error::SingularPoisson { mean });
        }
        let phi = if self.beta.is_none() {
            self.solver.solve_scaled(&rhs, self.beta_bar)
        } else {
            self.pcg(&rhs, 2e-12 * scale)?
        };
        let (gx, gy) = pressure_gradient(&grid, &phi);
        match &self.beta {
            Some((bu, bv)) => {
                for k in 0..grid.len() {
                    u[k] -= bu[k] * gx[k];
                    v[k] -= bv[k] * gy[k];
                }
            }
            None => {
                for k in 0..grid.len() {
                    u[k] -= self.beta_bar * gx[k];
                    v[k] -= self.beta_bar * gy[k];
                }
            }
        }
        self.phi.clone_from(&phi);
        Ok(phi)
    }

    fn pcg(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        // solve −A φ = −rhs, −A symmetric positive definite on mean-free fields
        let mut x = self.phi.clone();
        let ax = self.apply_operator(&x);
        // r = A x − rhs is minus the divergence left after the update
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| a - b).collect();
        let mut history = Vec::new();
        let inf = |r: &[f64]| r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if inf(&r) <= tol {
            return Ok(x);
        }
        let precond = |r: &[f64]| -> Vec<f64> {
            let mut z = self.solver.solve_scaled(r, self.beta_bar);
            for v in z.iter_mut() {
                *v = -*v;
            }
            z
        };
        let mut z = precond(&r);
        let mut d = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for it in 0..MAX_PCG_ITERATIONS {
            let ad: Vec<f64> = self.apply_operator(&d).iter().map(|x| -x).collect();
            let dad: f64 = d.iter().zip(&ad).map(|(a, b)| a * b).sum();
            if dad <= 0.0 {
                break;
            }
            let alpha = rz / dad;
            for k in 0..x.len() {
                x[k] += alpha * d[k];
                r[k] -= alpha * ad[k];
            }
            let res = inf(&r);
            history.push(res);
            if res <= tol {
                remove_mean(&mut x);
                return Ok(x);
            }
            z = precond(&r);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..d.len() {
                d[k] = z[k] + beta * d[k];
            }
            if it + 1 == MAX_PCG_ITERATIONS {
                break;
            }
        }
        let residual = history.last().copied().unwrap_or(f64::NAN);
        Err(Error::Convergence {
            what: "weighted pressure projection",
            iterations: history.len(),
            residual,
            history,
        })
    }
}

/// Projects a state; with `rho_cells` the projection is orthogonal in the
/// density-weighted inner product. The returned `q` is the zero-mean
/// potential of the removed gradient part.
pub fn leray_project(state: &FlowState, grid: &MacGrid, rho_cells: Option<&[f64]>) -> Result<FlowState> {
    state.check(grid)?;
    let density = match rho_cells {
        Some(r) => {
            if r.len() != grid.len() {
                return Err(Error::arg("density field does not match the grid"));
            }
            Some(FaceDensity::from_cells(grid, r))
        }
        None => None,
    };
    let mut proj = Projector::new(grid, density.as_ref())?;
    let mut out = state.clone();
    out.q = proj.project(&mut out.u, &mut out.v)?;
    Ok(out)
}
