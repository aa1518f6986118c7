use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Boundary, MacGrid};
use crate::error::{Error, Result};

/// Direct solver for `div(grad φ) = f` with zero-mean `φ`, using the FFT on
/// periodic grids and the cosine transform (homogeneous Neumann) on walled
/// grids. The operator is exactly the composition of the grid's divergence
/// and pressure gradient.
pub struct PoissonSolver {
    n: usize,
    bc: Boundary,
    eig: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver").field("n", &self.n).field("bc", &self.bc).finish()
    }
}

impl PoissonSolver {
    pub fn new(grid: &MacGrid) -> Self {
        let n = grid.n();
        let ih2 = 1.0 / (grid.h() * grid.h());
        let mut planner = FftPlanner::new();
        let (len, angle) = match grid.bc() {
            Boundary::Periodic => (n, 2.0 * PI / n as f64),
            Boundary::Noslip => (2 * n, PI / n as f64),
        };
        let eig = (0..n).map(|k| (2.0 * (angle * k as f64).cos() - 2.0) * ih2).collect();
        PoissonSolver {
            n,
            bc: grid.bc(),
            eig,
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
        }
    }

    /// Solves after checking that the right-hand side is compatible with the
    /// singular operator.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let norm = rhs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        if mean.abs() > 1e-12 * norm.max(f64::MIN_POSITIVE) && mean.abs() > 1e-300 {
            return Err(Error::SingularPoisson { mean });
        }
        Ok(self.solve_scaled(rhs, 1.0))
    }

    /// Solves `coef · div(grad φ) = rhs` on the mean-free subspace, discarding
    /// the mean of `rhs` without checking it.
    pub(crate) fn solve_scaled(&self, rhs: &[f64], coef: f64) -> Vec<f64> {
        match self.bc {
            Boundary::Periodic => self.solve_periodic(rhs, coef),
            Boundary::Noslip => self.solve_neumann(rhs, coef),
        }
    }

    fn solve_periodic(&self, rhs: &[f64], coef: f64) -> Vec<f64> {
        let n = self.n;
        let mut data: Vec<Complex64> = rhs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut data);
        transpose(&mut data, n);
        self.fwd.process(&mut data);
        let scale = 1.0 / (n * n) as f64;
        for ky in 0..n {
            for kx in 0..n {
                // after the transpose, rows run over kx
                let k = kx * n + ky;
                let lam = (self.eig[kx] + self.eig[ky]) * coef;
                data[k] = if kx == 0 && ky == 0 { Complex64::new(0.0, 0.0) } else { data[k] * (scale / lam) };
            }
        }
        self.inv.process(&mut data);
        transpose(&mut data, n);
        self.inv.process(&mut data);
        data.iter().map(|z| z.re).collect()
    }

    fn solve_neumann(&self, rhs: &[f64], coef: f64) -> Vec<f64> {
        let n = self.n;
        let mut a = rhs.to_vec();
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())];
        let twiddle: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, PI * k as f64 / (2 * n) as f64)).collect();
        for _ in 0..2 {
            for row in a.chunks_mut(n) {
                dct2(row, &mut buf, &mut scratch, &*self.fwd, &twiddle);
            }
            transpose(&mut a, n);
        }
        for ky in 0..n {
            for kx in 0..n {
                let k = ky * n + kx;
                let lam = (self.eig[kx] + self.eig[ky]) * coef;
                a[k] = if kx == 0 && ky == 0 { 0.0 } else { a[k] / lam };
            }
        }
        for _ in 0..2 {
            for row in a.chunks_mut(n) {
                idct2(row, &mut buf, &mut scratch, &*self.inv, &twiddle);
            }
            transpose(&mut a, n);
        }
        a
    }
}

/// `X_k = Σ_m x_m cos(πk(m+½)/n)` through a length-`2n` FFT of the even
/// extension.
fn dct2(x: &mut [f64], buf: &mut [Complex64], scratch: &mut [Complex64], fft: &dyn Fft<f64>, tw: &[Complex64]) {
    let n = x.len();
    for m in 0..n {
        buf[m] = Complex64::new(x[m], 0.0);
        buf[2 * n - 1 - m] = Complex64::new(x[m], 0.0);
    }
    fft.process_with_scratch(buf, scratch);
    for k in 0..n {
        x[k] = 0.5 * (tw[k].conj() * buf[k]).re;
    }
}

/// Inverse of [`dct2`].
fn idct2(x: &mut [f64], buf: &mut [Complex64], scratch: &mut [Complex64], fft: &dyn Fft<f64>, tw: &[Complex64]) {
    let n = x.len();
    let w0 = 1.0 / n as f64;
    for k in 0..n {
        let w = if k == 0 { w0 } else { 2.0 * w0 };
        buf[k] = tw[k] * (w * x[k]);
        buf[n + k] = Complex64::new(0.0, 0.0);
    }
    fft.process_with_scratch(buf, scratch);
    for m in 0..n {
        x[m] = buf[m].re;
    }
}

fn transpose<T: Copy>(a: &mut [T], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            a.swap(j * n + i, i * n + j);
        }
    }
}
