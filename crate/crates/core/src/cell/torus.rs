//! Pseudo-spectral calculus on the periodic square `[0, Q)²` sampled on an
//! `M × M` grid, stored row-major with the `y₁` index fastest.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::tensor::Tensor2;

pub(crate) type Spectrum = Vec<Complex64>;

pub(crate) struct Torus {
    pub m: usize,
    pub period: f64,
    /// Angular wavenumber per index; the Nyquist index maps to zero.
    pub k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Torus {
    pub fn new(m: usize, period: f64) -> Self {
        let mut planner = FftPlanner::new();
        let base = 2.0 * PI / period;
        let k = (0..m)
            .map(|j| {
                if 2 * j == m {
                    0.0
                } else if 2 * j < m {
                    base * j as f64
                } else {
                    base * (j as f64 - m as f64)
                }
            })
            .collect();
        Torus {
            m,
            period,
            k,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        let d = self.period / self.m as f64;
        let mut pts = Vec::with_capacity(self.len());
        for j in 0..self.m {
            for i in 0..self.m {
                pts.push([i as f64 * d, j as f64 * d]);
            }
        }
        pts
    }

    #[inline]
    pub fn is_nyquist(&self, i: usize, j: usize) -> bool {
        2 * i == self.m || 2 * j == self.m
    }

    fn transpose(&self, a: &mut [Complex64]) {
        let m = self.m;
        for j in 0..m {
            for i in (j + 1)..m {
                a.swap(j * m + i, i * m + j);
            }
        }
    }

    /// Normalized forward transform: the zero mode is the grid mean.
    pub fn forward(&self, data: &[f64]) -> Spectrum {
        let mut a: Spectrum = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut a);
        self.transpose(&mut a);
        self.fwd.process(&mut a);
        self.transpose(&mut a);
        let s = 1.0 / self.len() as f64;
        for z in a.iter_mut() {
            *z *= s;
        }
        a
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut a = spec.to_vec();
        self.inv.process(&mut a);
        self.transpose(&mut a);
        self.inv.process(&mut a);
        self.transpose(&mut a);
        a.iter().map(|z| z.re).collect()
    }

    /// Physical gradient tensor `∂_j π_i` of a vector field given by spectra.
    pub fn gradient(&self, pi: &[Spectrum; 2]) -> Vec<Tensor2> {
        let m = self.m;
        let mut comps: Vec<Vec<f64>> = Vec::with_capacity(4);
        for c in pi.iter() {
            for dir in 0..2 {
                let mut d = vec![Complex64::new(0.0, 0.0); self.len()];
                for j in 0..m {
                    for i in 0..m {
                        let kk = if dir == 0 { self.k[i] } else { self.k[j] };
                        d[j * m + i] = Complex64::new(0.0, kk) * c[j * m + i];
                    }
                }
                comps.push(self.inverse(&d));
            }
        }
        (0..self.len())
            .map(|p| Tensor2::new(comps[0][p], comps[1][p], comps[2][p], comps[3][p]))
            .collect()
    }

    /// Spectra of `(div σ)_i = Σ_j ∂_j σ_ij`.
    pub fn divergence(&self, sigma: &[Tensor2]) -> [Spectrum; 2] {
        let m = self.m;
        let s: Vec<Spectrum> = (0..4)
            .map(|c| {
                let row = c / 2;
                let col = c % 2;
                let field: Vec<f64> = sigma.iter().map(|t| t.0[row][col]).collect();
                self.forward(&field)
            })
            .collect();
        let mut out = [vec![Complex64::new(0.0, 0.0); self.len()], vec![Complex64::new(0.0, 0.0); self.len()]];
        for j in 0..m {
            for i in 0..m {
                let p = j * m + i;
                if self.is_nyquist(i, j) {
                    continue;
                }
                let (k1, k2) = (self.k[i], self.k[j]);
                out[0][p] = Complex64::new(0.0, k1) * s[0][p] + Complex64::new(0.0, k2) * s[1][p];
                out[1][p] = Complex64::new(0.0, k1) * s[2][p] + Complex64::new(0.0, k2) * s[3][p];
            }
        }
        out
    }

    /// Leray projection `v̂ − k(k·v̂)/|k|²`; removes the mean and Nyquist modes.
    pub fn project(&self, v: &mut [Spectrum; 2]) {
        let m = self.m;
        for j in 0..m {
            for i in 0..m {
                let p = j * m + i;
                let (k1, k2) = (self.k[i], self.k[j]);
                let k2n = k1 * k1 + k2 * k2;
                if k2n == 0.0 || self.is_nyquist(i, j) {
                    v[0][p] = Complex64::new(0.0, 0.0);
                    v[1][p] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let dot = (v[0][p] * k1 + v[1][p] * k2) / k2n;
                v[0][p] -= dot * k1;
                v[1][p] -= dot * k2;
            }
        }
    }

    #[inline]
    pub fn k_sq(&self, p: usize) -> f64 {
        let (i, j) = (p % self.m, p / self.m);
        self.k[i] * self.k[i] + self.k[j] * self.k[j]
    }

    /// `(Σ_{k≠0} |v̂|²/|k|²)^{1/2}`, the dual norm of a mean-free field.
    pub fn dual_norm(&self, v: &[Spectrum; 2]) -> f64 {
        let mut s = 0.0;
        for p in 0..self.len() {
            let k2 = self.k_sq(p);
            if k2 > 0.0 {
                s += (v[0][p].norm_sqr() + v[1][p].norm_sqr()) / k2;
            }
        }
        s.sqrt()
    }

    /// `‖v‖₂` of a field from its normalized spectrum (Parseval).
    pub fn l2_norm(&self, v: &[Spectrum; 2]) -> f64 {
        v.iter().flat_map(|c| c.iter()).map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Periodic bilinear interpolation of a grid field at `y`.
pub(crate) fn bilinear(m: usize, period: f64, data: &[f64], y: [f64; 2]) -> f64 {
    let d = period / m as f64;
    let fx = (y[0] / d).rem_euclid(m as f64);
    let fy = (y[1] / d).rem_euclid(m as f64);
    let (i0, j0) = (fx.floor() as usize % m, fy.floor() as usize % m);
    let (tx, ty) = (fx - fx.floor(), fy - fy.floor());
    let (i1, j1) = ((i0 + 1) % m, (j0 + 1) % m);
    let v00 = data[j0 * m + i0];
    let v10 = data[j0 * m + i1];
    let v01 = data[j1 * m + i0];
    let v11 = data[j1 * m + i1];
    (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_gradient_of_a_single_mode() {
        let t = Torus::new(16, 2.0);
        let pts = t.points();
        let f: Vec<f64> = pts.iter().map(|y| (PI * y[0]).sin() * (2.0 * PI * y[1]).cos()).collect();
        let spec = [t.forward(&f), vec![Complex64::new(0.0, 0.0); t.len()]];
        let g = t.gradient(&spec);
        for (y, gt) in pts.iter().zip(&g) {
            let d1 = PI * (PI * y[0]).cos() * (2.0 * PI * y[1]).cos();
            let d2 = -2.0 * PI * (PI * y[0]).sin() * (2.0 * PI * y[1]).sin();
            assert!((gt.0[0][0] - d1).abs() < 1e-12 && (gt.0[0][1] - d2).abs() < 1e-12);
        }
        let back = t.inverse(&spec[0]);
        assert!(back.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn projection_removes_gradients() {
        let t = Torus::new(16, 1.0);
        let pts = t.points();
        let phi: Vec<f64> = pts.iter().map(|y| (2.0 * PI * (y[0] + 2.0 * y[1])).sin()).collect();
        let ps = [t.forward(&phi), vec![Complex64::new(0.0, 0.0); t.len()]];
        let g = t.gradient(&ps);
        let gx: Vec<f64> = g.iter().map(|x| x.0[0][0]).collect();
        let gy: Vec<f64> = g.iter().map(|x| x.0[0][1]).collect();
        let mut v = [t.forward(&gx), t.forward(&gy)];
        t.project(&mut v);
        assert!(t.l2_norm(&v) < 1e-12);
    }

    #[test]
    fn bilinear_reproduces_nodes_and_wraps() {
        let m = 8;
        let data: Vec<f64> = (0..m * m).map(|k| k as f64).collect();
        assert_eq!(bilinear(m, 1.0, &data, [2.0 / 8.0, 3.0 / 8.0]), data[3 * m + 2]);
        assert_eq!(bilinear(m, 1.0, &data, [1.0 + 2.0 / 8.0, -5.0 / 8.0]), data[3 * m + 2]);
    }
}
