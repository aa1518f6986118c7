use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::trig::TrigPolynomial;
use crate::error::{Error, Result};
use crate::tensor::Sym2;

/// Forcing `f(τ, r) = g(τ) + k · r/(1+|r|)` with the saturation applied
/// componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingLaw {
    pub g: [TrigPolynomial; 2],
    #[serde(default)]
    pub saturation_gain: f64,
}

#[inline]
pub fn saturation(r: f64) -> f64 {
    r / (1.0 + r.abs())
}

impl ForcingLaw {
    pub fn zero() -> Self {
        ForcingLaw {
            g: [TrigPolynomial::zero(1), TrigPolynomial::zero(1)],
            saturation_gain: 0.0,
        }
    }

    pub fn evaluate(&self, tau: f64, r: [f64; 2]) -> [f64; 2] {
        let k = self.saturation_gain;
        [
            self.g[0].eval_real(&[tau]) + k * saturation(r[0]),
            self.g[1].eval_real(&[tau]) + k * saturation(r[1]),
        ]
    }

    /// ℓ¹ upper bound of `sup_τ |g(τ)|` (Euclidean norm over components).
    pub fn g_sup(&self) -> f64 {
        self.g[0].l1_norm().hypot(self.g[1].l1_norm())
    }

    /// Constant `c` in `|f(τ, r)| ≤ c(1 + |r|)`.
    pub fn growth_constant(&self) -> f64 {
        self.g_sup() + self.saturation_gain
    }

    pub fn is_zero(&self) -> bool {
        self.saturation_gain == 0.0 && self.g.iter().all(|g| g.terms().is_empty())
    }
}

/// Certified structural constants of a coefficient set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub nu0: f64,
    pub nu1: f64,
    pub nu2: f64,
    #[serde(alias = "Lambda")]
    pub lambda: f64,
    pub lipschitz_k: f64,
}

/// Microstructure `(ρ, a, b, f)` with bounds that have been checked by
/// ℓ¹ coefficient certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientJson", into = "CoefficientJson")]
pub struct CoefficientSet {
    rho: TrigPolynomial,
    a: [TrigPolynomial; 3],
    b: TrigPolynomial,
    forcing: ForcingLaw,
    bounds: Bounds,
    p: f64,
}

/// Values returned by the certificates, useful for sizing time steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl CoefficientSet {
    /// Validates shapes and runs the certificates. `a` holds `(a11, a12, a22)`.
    pub fn new(
        rho: TrigPolynomial,
        a: [TrigPolynomial; 3],
        b: TrigPolynomial,
        forcing: ForcingLaw,
        bounds: Bounds,
        p: f64,
    ) -> Result<Self> {
        let set = CoefficientSet {
            rho,
            a,
            b,
            forcing,
            bounds,
            p,
        };
        set.validate()?;
        Ok(set)
    }

    /// Constant coefficients `a = nu0·I`, `b = nu1`, `ρ = rho`, no forcing.
    pub fn constant(nu0: f64, nu1: f64, rho: f64, p: f64) -> Result<Self> {
        let bounds = Bounds {
            nu0,
            nu1,
            nu2: nu1,
            lambda: rho.max(1.0 / rho),
            lipschitz_k: 1.0,
        };
        CoefficientSet::new(
            TrigPolynomial::constant(2, rho),
            [
                TrigPolynomial::constant(3, nu0),
                TrigPolynomial::zero(3),
                TrigPolynomial::constant(3, nu0),
            ],
            TrigPolynomial::constant(3, nu1),
            ForcingLaw::zero(),
            bounds,
            p,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.rho.dim() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: self.rho.dim(),
            });
        }
        for poly in self.a.iter().chain(std::iter::once(&self.b)) {
            if poly.dim() != 3 {
                return Err(Error::Dimension {
                    expected: 3,
                    got: poly.dim(),
                });
            }
        }
        for g in &self.forcing.g {
            if g.dim() != 1 {
                return Err(Error::Dimension {
                    expected: 1,
                    got: g.dim(),
                });
            }
        }
        if !(self.p >= 2.0) || !self.p.is_finite() {
            return Err(Error::arg(format!("exponent p = {} must be at least 2", self.p)));
        }
        let bd = &self.bounds;
        if !(bd.nu0 > 0.0 && bd.nu1 > 0.0 && bd.nu2 >= bd.nu1 && bd.lambda >= 1.0 && bd.lipschitz_k > 0.0) {
            return Err(Error::arg(format!("bounds {bd:?} are not admissible")));
        }
        if !(self.forcing.saturation_gain >= 0.0) {
            return Err(Error::arg("saturation gain must be non-negative"));
        }
        self.certify().map(|_| ())
    }

    /// Runs the ℓ¹ certificates for the ellipticity, viscosity, density and
    /// forcing bounds.
    pub fn certify(&self) -> Result<Certificate> {
        let (a_min, a_max) = self.a_bounds();
        let bd = &self.bounds;
        if a_min < bd.nu0 {
            return Err(Error::Certification(format!(
                "ellipticity certificate {a_min} is below nu0 = {}",
                bd.nu0
            )));
        }
        let bm = self.b.mean_value();
        let bo = self.b.oscillation_l1();
        let (b_min, b_max) = (bm - bo, bm + bo);
        if b_min < bd.nu1 || b_max > bd.nu2 {
            return Err(Error::Certification(format!(
                "b certified in [{b_min}, {b_max}], not inside [{}, {}]",
                bd.nu1, bd.nu2
            )));
        }
        let rm = self.rho.mean_value();
        let ro = self.rho.oscillation_l1();
        let (rho_min, rho_max) = (rm - ro, rm + ro);
        if !(rm > 0.0) || rho_min < 1.0 / bd.lambda || rho_max > bd.lambda {
            return Err(Error::Certification(format!(
                "density certified in [{rho_min}, {rho_max}], not inside [1/{0}, {0}]",
                bd.lambda
            )));
        }
        if self.forcing.saturation_gain > bd.lipschitz_k {
            return Err(Error::Certification(format!(
                "saturation gain {} exceeds the Lipschitz bound {}",
                self.forcing.saturation_gain, bd.lipschitz_k
            )));
        }
        if self.forcing.g_sup() > bd.lipschitz_k {
            return Err(Error::Certification(format!(
                "sup |g| certificate {} exceeds k = {}",
                self.forcing.g_sup(),
                bd.lipschitz_k
            )));
        }
        Ok(Certificate {
            a_min,
            a_max,
            b_min,
            b_max,
            rho_min,
            rho_max,
        })
    }

    /// `(λ_min(𝔐a) − S, λ_max(𝔐a) + S)` with `S = Σ_{k≠0} ‖A_k‖₂`.
    fn a_bounds(&self) -> (f64, f64) {
        let mean = Sym2::new(self.a[0].mean_value(), self.a[1].mean_value(), self.a[2].mean_value());
        let (lo, hi) = mean.eigenvalues();
        let mut freqs: Vec<&[f64]> = Vec::new();
        for poly in &self.a {
            for t in poly.terms() {
                if t.freq.iter().any(|&f| f != 0.0) && !freqs.contains(&t.freq.as_slice()) {
                    freqs.push(&t.freq);
                }
            }
        }
        let amp = |poly: &TrigPolynomial, k: &[f64]| -> Complex64 {
            poly.terms()
                .iter()
                .find(|t| t.freq == k)
                .map_or(Complex64::new(0.0, 0.0), |t| t.amp)
        };
        let spread: f64 = freqs
            .iter()
            .map(|k| {
                let (c11, c12, c22) = (amp(&self.a[0], k), amp(&self.a[1], k), amp(&self.a[2], k));
                // spectral norm of the complex 2×2 amplitude
                let fro2 = c11.norm_sqr() + 2.0 * c12.norm_sqr() + c22.norm_sqr();
                let det = (c11 * c22 - c12 * c12).norm();
                (0.5 * (fro2 + (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt())).sqrt()
            })
            .sum();
        (lo - spread, hi + spread)
    }

    pub fn rho(&self) -> &TrigPolynomial {
        &self.rho
    }

    /// `(a11, a12, a22)`.
    pub fn a(&self) -> &[TrigPolynomial; 3] {
        &self.a
    }

    pub fn b(&self) -> &TrigPolynomial {
        &self.b
    }

    pub fn forcing(&self) -> &ForcingLaw {
        &self.forcing
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Certified upper bound on the operator norm of `a`.
    pub fn a_sup(&self) -> f64 {
        self.a_bounds().1
    }

    /// Certified upper bound of `b`.
    pub fn b_sup(&self) -> f64 {
        self.b.mean_value() + self.b.oscillation_l1()
    }

    pub fn rho_mean(&self) -> f64 {
        self.rho.mean_value()
    }

    /// True when neither `a` nor `b` depends on the fast time.
    pub fn is_time_independent(&self) -> bool {
        self.a.iter().chain(std::iter::once(&self.b)).all(|p| p.is_constant_along(2))
    }

    /// True when `ρ`, `a`, `b` carry no oscillation at all.
    pub fn is_homogeneous(&self) -> bool {
        self.rho.is_constant() && self.b.is_constant() && self.a.iter().all(|p| p.is_constant())
    }

    /// Mean over the fast time of `g`.
    pub fn mean_g(&self) -> [f64; 2] {
        [self.forcing.g[0].mean_value(), self.forcing.g[1].mean_value()]
    }

    pub fn a_at(&self, y: [f64; 2], tau: f64) -> Sym2 {
        let pt = [y[0], y[1], tau];
        Sym2::new(self.a[0].eval_real(&pt), self.a[1].eval_real(&pt), self.a[2].eval_real(&pt))
    }

    pub fn b_at(&self, y: [f64; 2], tau: f64) -> f64 {
        self.b.eval_real(&[y[0], y[1], tau])
    }

    pub fn rho_at(&self, y: [f64; 2]) -> f64 {
        self.rho.eval_real(&y)
    }

    /// Copy with all spatial and temporal frequencies rounded to multiples of
    /// `2π/Q`, and the largest perturbation applied.
    pub fn periodic_approximation(&self, q: usize) -> Result<(CoefficientSet, f64)> {
        let (rho, d0) = self.rho.periodic_approximation(q)?;
        let mut worst = d0;
        let mut round = |p: &TrigPolynomial| -> Result<TrigPolynomial> {
            let (r, d) = p.periodic_approximation(q)?;
            worst = worst.max(d);
            Ok(r)
        };
        let a = [round(&self.a[0])?, round(&self.a[1])?, round(&self.a[2])?];
        let b = round(&self.b)?;
        let set = CoefficientSet {
            rho,
            a,
            b,
            forcing: self.forcing.clone(),
            bounds: self.bounds,
            p: self.p,
        };
        Ok((set, worst))
    }

    /// Same microstructure with `a` and `b` multiplied by `s`.
    pub fn with_viscosity_scale(&self, s: f64) -> Result<CoefficientSet> {
        let mut bounds = self.bounds;
        bounds.nu0 *= s;
        bounds.nu1 *= s;
        bounds.nu2 *= s;
        CoefficientSet::new(
            self.rho.clone(),
            [self.a[0].scale(s), self.a[1].scale(s), self.a[2].scale(s)],
            self.b.scale(s),
            self.forcing.clone(),
            bounds,
            self.p,
        )
    }

    pub fn with_forcing(&self, forcing: ForcingLaw) -> Result<CoefficientSet> {
        CoefficientSet::new(
            self.rho.clone(),
            self.a.clone(),
            self.b.clone(),
            forcing,
            self.bounds,
            self.p,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientJson {
    rho: TrigPolynomial,
    a: [[TrigPolynomial; 2]; 2],
    b: TrigPolynomial,
    #[serde(default = "ForcingLaw::zero")]
    forcing: ForcingLaw,
    bounds: Bounds,
    p: f64,
}

impl TryFrom<CoefficientJson> for CoefficientSet {
    type Error = Error;
    fn try_from(j: CoefficientJson) -> Result<Self> {
        let [[a11, a12], [a21, a22]] = j.a;
        if a12 != a21 {
            return Err(Error::arg("coefficient matrix a must be symmetric"));
        }
        CoefficientSet::new(j.rho, [a11, a12, a22], j.b, j.forcing, j.bounds, j.p)
    }
}

impl From<CoefficientSet> for CoefficientJson {
    fn from(c: CoefficientSet) -> Self {
        let [a11, a12, a22] = c.a;
        CoefficientJson {
            rho: c.rho,
            a: [[a11, a12.clone()], [a12, a22]],
            b: c.b,
            forcing: c.forcing,
            bounds: c.bounds,
            p: c.p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn laminate() -> CoefficientSet {
        let two_pi = 2.0 * PI;
        let a = TrigPolynomial::constant(3, 2.0).add(&TrigPolynomial::cosine(&[two_pi, 0.0, 0.0], 1.0)).unwrap();
        let b = TrigPolynomial::constant(3, 1.0).add(&TrigPolynomial::cosine(&[two_pi, 0.0, 0.0], 0.5)).unwrap();
        let rho = TrigPolynomial::constant(2, 1.0).add(&TrigPolynomial::cosine(&[0.0, two_pi], 0.2)).unwrap();
        CoefficientSet::new(
            rho,
            [a.clone(), TrigPolynomial::zero(3), a],
            b,
            ForcingLaw::zero(),
            Bounds {
                nu0: 1.0,
                nu1: 0.5,
                nu2: 1.5,
                lambda: 1.25,
                lipschitz_k: 1.0,
            },
            3.0,
        )
        .unwrap()
    }

    #[test]
    fn laminate_certifies_at_tight_bounds() {
        let c = laminate().certify().unwrap();
        assert!((c.a_min - 1.0).abs() < 1e-15);
        assert!((c.a_max - 3.0).abs() < 1e-15);
        assert!((c.b_min - 0.5).abs() < 1e-15 && (c.b_max - 1.5).abs() < 1e-15);
    }

    #[test]
    fn certificate_rejects_loose_ellipticity() {
        let mut j: CoefficientJson = laminate().into();
        j.bounds.nu0 = 1.01;
        assert!(matches!(CoefficientSet::try_from(j), Err(Error::Certification(_))));
    }

    #[test]
    fn certificate_rejects_density_outside_lambda() {
        let mut j: CoefficientJson = laminate().into();
        j.bounds.lambda = 1.1;
        assert!(matches!(CoefficientSet::try_from(j), Err(Error::Certification(_))));
    }

    #[test]
    fn exponent_below_two_rejected() {
        assert!(CoefficientSet::constant(1.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn json_roundtrip_and_symmetry_check() {
        let c = laminate();
        let s = serde_json::to_string(&c).unwrap();
        let back: CoefficientSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        v["a"][0][1] = serde_json::to_value(TrigPolynomial::constant(3, 0.1)).unwrap();
        assert!(serde_json::from_value::<CoefficientSet>(v).is_err());
    }

    #[test]
    fn forcing_growth_bound_on_samples() {
        let f = ForcingLaw {
            g: [TrigPolynomial::cosine(&[1.0], 0.3), TrigPolynomial::sine(&[2.5], 0.4)],
            saturation_gain: 0.5,
        };
        let c = f.growth_constant();
        for i in 0..50 {
            let tau = i as f64 * 0.37;
            let r = [(i as f64 * 0.7).sin() * 10.0, (i as f64 * 1.3).cos() * 3.0];
            let v = f.evaluate(tau, r);
            assert!(v[0].hypot(v[1]) <= c * (1.0 + r[0].hypot(r[1])) + 1e-14);
        }
    }

    #[test]
    fn periodic_approximation_keeps_period_one_frequencies() {
        let (c, d) = laminate().periodic_approximation(1).unwrap();
        assert!(d < 1e-12);
        assert_eq!(c.a()[0].terms().len(), laminate().a()[0].terms().len());
    }
}
