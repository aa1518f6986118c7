use super::{flux::quadrature_gradients, FlowState, MacGrid};
use crate::error::Result;
use crate::tensor::Tensor2;

/// Cell-centred `(u_{i+1,j} − u_{i,j})/h + (v_{i,j+1} − v_{i,j})/h`.
pub fn divergence(state: &FlowState, grid: &MacGrid) -> Result<Vec<f64>> {
    state.check(grid)?;
    Ok(divergence_of(grid, &state.u, &state.v))
}

pub(crate) fn divergence_of(grid: &MacGrid, u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let ih = 1.0 / grid.h();
    let mut div = vec![0.0; n * n];
    for j in 0..n {
        let jn = grid.next(j);
        for i in 0..n {
            let k = grid.idx(i, j);
            div[k] = (u[grid.idx(grid.next(i), j)] - u[k]) * ih + (v[grid.idx(i, jn)] - v[k]) * ih;
        }
    }
    div
}

/// Face gradient of a cell field; zero on wall faces. This is the negative
/// adjoint of [`divergence`] in the `h²`-weighted inner products.
pub fn pressure_gradient(grid: &MacGrid, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n();
    let ih = 1.0 / grid.h();
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for j in 0..n {
        let jp = grid.prev(j);
        for i in 0..n {
            let k = grid.idx(i, j);
            if !grid.u_is_wall(i) {
                gx[k] = (q[k] - q[grid.idx(grid.prev(i), j)]) * ih;
            }
            if !grid.v_is_wall(j) {
                gy[k] = (q[k] - q[grid.idx(i, jp)]) * ih;
            }
        }
    }
    (gx, gy)
}

/// Velocity gradient at cell centres: the average of the four sub-cell
/// quadrature tensors, i.e. two-point averaging of the corner derivatives.
pub fn cell_gradients(state: &FlowState, grid: &MacGrid) -> Result<Vec<Tensor2>> {
    state.check(grid)?;
    let g = quadrature_gradients(grid, &state.u, &state.v);
    Ok(g.cell_average())
}

/// Skew-symmetric advection `½[(u·∇)u + div(u⊗u)]` on the faces.
///
/// Each face control volume uses averaged face fluxes with averaged advected
/// values, minus half the advected value times the flux divergence, so that
/// `Σ C(u)·u h² = 0` holds up to round-off for any velocity.
pub fn advect_skew(state: &FlowState, grid: &MacGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check(grid)?;
    let mut cu = vec![0.0; grid.len()];
    let mut cv = vec![0.0; grid.len()];
    advect_into(grid, &state.u, &state.v, &mut cu, &mut cv);
    Ok((cu, cv))
}

pub(crate) fn advect_into(grid: &MacGrid, u: &[f64], v: &[f64], cu: &mut [f64], cv: &mut [f64]) {
    let n = grid.n();
    let ih = 1.0 / grid.h();
    for j in 0..n {
        let jn = grid.next(j);
        let jp = grid.prev(j);
        for i in 0..n {
            let inx = grid.next(i);
            let ip = grid.prev(i);
            let k = grid.idx(i, j);

            if grid.u_is_wall(i) {
                cu[k] = 0.0;
            } else {
                let uc = u[k];
                let fe = 0.5 * (uc + u[grid.idx(inx, j)]);
                let fw = 0.5 * (u[grid.idx(ip, j)] + uc);
                let fn_ = 0.5 * (v[grid.idx(ip, jn)] + v[grid.idx(i, jn)]);
                let fs = 0.5 * (v[grid.idx(ip, j)] + v[k]);
                let un = 0.5 * (uc + u[grid.idx(i, jn)]);
                let us = 0.5 * (u[grid.idx(i, jp)] + uc);
                let conv = (fe * fe - fw * fw) * ih + (fn_ * un - fs * us) * ih;
                let dflux = (fe - fw) * ih + (fn_ - fs) * ih;
                cu[k] = conv - 0.5 * uc * dflux;
            }

            if grid.v_is_wall(j) {
                cv[k] = 0.0;
            } else {
                let vc = v[k];
                let fn_ = 0.5 * (vc + v[grid.idx(i, jn)]);
                let fs = 0.5 * (v[grid.idx(i, jp)] + vc);
                let fe = 0.5 * (u[grid.idx(inx, jp)] + u[grid.idx(inx, j)]);
                let fw = 0.5 * (u[grid.idx(i, jp)] + u[k]);
                let ve = 0.5 * (vc + v[grid.idx(inx, j)]);
                let vw = 0.5 * (v[grid.idx(ip, j)] + vc);
                let conv = (fn_ * fn_ - fs * fs) * ih + (fe * ve - fw * vw) * ih;
                let dflux = (fn_ - fs) * ih + (fe - fw) * ih;
                cv[k] = conv - 0.5 * vc * dflux;
            }
        }
    }
}

/// Discrete trilinear form `b_h(u, u, u) = Σ advect_skew(u)·u h²`.
pub fn trilinear(state: &FlowState, grid: &MacGrid) -> Result<f64> {
    let (cu, cv) = advect_skew(state, grid)?;
    let h2 = grid.h() * grid.h();
    let s: f64 = cu.iter().zip(&state.u).map(|(c, x)| c * x).sum::<f64>()
        + cv.iter().zip(&state.v).map(|(c, x)| c * x).sum::<f64>();
    Ok(s * h2)
}
