use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A real 2×2 tensor. For velocity gradients the convention is
/// `g[i][j] = ∂u_i/∂x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tensor2(pub [[f64; 2]; 2]);

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2([[0.0; 2]; 2]);
    pub const IDENTITY: Tensor2 = Tensor2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(g11: f64, g12: f64, g21: f64, g22: f64) -> Self {
        Tensor2([[g11, g12], [g21, g22]])
    }

    /// Row-major flattening `[g11, g12, g21, g22]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1]]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Tensor2([[a[0], a[1]], [a[2], a[3]]])
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    /// Double contraction `A : B`.
    pub fn ddot(&self, other: &Tensor2) -> f64 {
        self.0[0][0] * other.0[0][0]
            + self.0[0][1] * other.0[0][1]
            + self.0[1][0] * other.0[1][0]
            + self.0[1][1] * other.0[1][1]
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        Tensor2([
            [self.0[0][0] * s, self.0[0][1] * s],
            [self.0[1][0] * s, self.0[1][1] * s],
        ])
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, o: Tensor2) -> Tensor2 {
        Tensor2([
            [self.0[0][0] + o.0[0][0], self.0[0][1] + o.0[0][1]],
            [self.0[1][0] + o.0[1][0], self.0[1][1] + o.0[1][1]],
        ])
    }
}

impl AddAssign for Tensor2 {
    fn add_assign(&mut self, o: Tensor2) {
        *self = *self + o;
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;
    fn sub(self, o: Tensor2) -> Tensor2 {
        Tensor2([
            [self.0[0][0] - o.0[0][0], self.0[0][1] - o.0[0][1]],
            [self.0[1][0] - o.0[1][0], self.0[1][1] - o.0[1][1]],
        ])
    }
}

impl Mul<f64> for Tensor2 {
    type Output = Tensor2;
    fn mul(self, s: f64) -> Tensor2 {
        self.scale(s)
    }
}

/// Symmetric 2×2 matrix `[[a11, a12], [a12, a22]]`, used for the viscosity
/// matrix `a`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Sym2 { a11, a12, a22 }
    }

    pub fn scalar(s: f64) -> Self {
        Sym2 {
            a11: s,
            a12: 0.0,
            a22: s,
        }
    }

    /// Matrix product `a · g` (acting on the first index of `g`).
    #[inline]
    pub fn apply(&self, g: &Tensor2) -> Tensor2 {
        let g = &g.0;
        Tensor2([
            [
                self.a11 * g[0][0] + self.a12 * g[1][0],
                self.a11 * g[0][1] + self.a12 * g[1][1],
            ],
            [
                self.a12 * g[0][0] + self.a22 * g[1][0],
                self.a12 * g[0][1] + self.a22 * g[1][1],
            ],
        ])
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a11 + self.a22);
        let rad = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
        (mean - rad, mean + rad)
    }
}
