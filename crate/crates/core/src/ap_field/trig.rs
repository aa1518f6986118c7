use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;

/// One exponential mode `amp · exp(i freq·y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub freq: Vec<f64>,
    pub amp: Complex64,
}

/// Finite real-valued trigonometric polynomial `Σ c_k exp(i k·y)`.
///
/// Terms are Hermitian-paired, so the sum is real. Frequencies are stored
/// exactly as given and never compared up to a tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrigPolyJson", into = "TrigPolyJson")]
pub struct TrigPolynomial {
    dim: usize,
    terms: Vec<Term>,
}

fn neg0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        -x
    }
}

impl TrigPolynomial {
    /// Builds a polynomial, merging repeated frequencies and checking
    /// Hermitian symmetry.
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::arg(format!("polynomial dimension {dim} not in 1..=3")));
        }
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            if t.freq.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: t.freq.len(),
                });
            }
            if !t.freq.iter().all(|f| f.is_finite()) || !t.amp.re.is_finite() || !t.amp.im.is_finite()
            {
                return Err(Error::arg("non-finite frequency or amplitude"));
            }
            let freq: Vec<f64> = t.freq.iter().map(|&f| if f == 0.0 { 0.0 } else { f }).collect();
            match merged.iter_mut().find(|m| m.freq == freq) {
                Some(m) => m.amp += t.amp,
                None => merged.push(Term { freq, amp: t.amp }),
            }
        }
        merged.retain(|t| t.amp != Complex64::new(0.0, 0.0));
        let poly = TrigPolynomial { dim, terms: merged };
        poly.check_hermitian()?;
        Ok(poly)
    }

    fn check_hermitian(&self) -> Result<()> {
        let scale = self.l1_norm().max(f64::MIN_POSITIVE);
        for t in &self.terms {
            let neg: Vec<f64> = t.freq.iter().map(|&f| neg0(f)).collect();
            let partner = self
                .terms
                .iter()
                .find(|o| o.freq == neg)
                .ok_or_else(|| Error::arg(format!("frequency {:?} has no conjugate partner", t.freq)))?;
            if (partner.amp - t.amp.conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::arg(format!(
                    "amplitudes at ±{:?} are not complex conjugates",
                    t.freq
                )));
            }
        }
        Ok(())
    }

    pub fn zero(dim: usize) -> Self {
        TrigPolynomial { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        let terms = if value == 0.0 {
            Vec::new()
        } else {
            vec![Term {
                freq: vec![0.0; dim],
                amp: Complex64::new(value, 0.0),
            }]
        };
        TrigPolynomial { dim, terms }
    }

    /// `amplitude · cos(freq·y)`.
    pub fn cosine(freq: &[f64], amplitude: f64) -> Self {
        Self::mode(freq, Complex64::new(0.5 * amplitude, 0.0))
    }

    /// `amplitude · sin(freq·y)`.
    pub fn sine(freq: &[f64], amplitude: f64) -> Self {
        Self::mode(freq, Complex64::new(0.0, -0.5 * amplitude))
    }

    fn mode(freq: &[f64], c: Complex64) -> Self {
        let dim = freq.len();
        if freq.iter().all(|&f| f == 0.0) {
            return Self::constant(dim, 2.0 * c.re);
        }
        let neg: Vec<f64> = freq.iter().map(|&f| neg0(f)).collect();
        TrigPolynomial::new(
            dim,
            vec![
                Term {
                    freq: freq.to_vec(),
                    amp: c,
                },
                Term {
                    freq: neg,
                    amp: c.conj(),
                },
            ],
        )
        .expect("a conjugate pair is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// `Σ |c_k|` over all terms.
    pub fn l1_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.amp.norm()).sum()
    }

    /// `Σ_{k≠0} |c_k|`, the oscillation budget used by the ℓ¹ certificates.
    pub fn oscillation_l1(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.freq.iter().any(|&f| f != 0.0))
            .map(|t| t.amp.norm())
            .sum()
    }

    /// `(Σ |c_k|²)^{1/2}`, the Parseval value of the quadratic mean.
    pub fn parseval_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.amp.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Zero-frequency coefficient: the mean value for trigonometric polynomials.
    pub fn mean_value(&self) -> f64 {
        self.terms
            .iter()
            .find(|t| t.freq.iter().all(|&f| f == 0.0))
            .map_or(0.0, |t| t.amp.re)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.freq.iter().all(|&f| f == 0.0))
    }

    /// True when no term oscillates along `axis`.
    pub fn is_constant_along(&self, axis: usize) -> bool {
        self.terms.iter().all(|t| t.freq[axis] == 0.0)
    }

    pub fn add(&self, other: &TrigPolynomial) -> Result<TrigPolynomial> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        TrigPolynomial::new(self.dim, terms)
    }

    pub fn scale(&self, s: f64) -> TrigPolynomial {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                freq: t.freq.clone(),
                amp: t.amp * s,
            })
            .filter(|t| t.amp != Complex64::new(0.0, 0.0))
            .collect();
        TrigPolynomial { dim: self.dim, terms }
    }

    /// Product expansion; frequencies of the factors add.
    pub fn mul(&self, other: &TrigPolynomial) -> Result<TrigPolynomial> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Term {
                    freq: a.freq.iter().zip(&b.freq).map(|(x, y)| x + y).collect(),
                    amp: a.amp * b.amp,
                });
            }
        }
        TrigPolynomial::new(self.dim, terms)
    }

    /// The translate `y ↦ poly(y + shift)`.
    pub fn shift(&self, shift: &[f64]) -> Result<TrigPolynomial> {
        self.check_point(shift)?;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let phase: f64 = t.freq.iter().zip(shift).map(|(k, a)| k * a).sum();
                Term {
                    freq: t.freq.clone(),
                    amp: t.amp * Complex64::from_polar(1.0, phase),
                }
            })
            .collect();
        TrigPolynomial::new(self.dim, terms)
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: point.len(),
            });
        }
        Ok(())
    }

    /// Evaluates the polynomial, checking that the imaginary part cancels.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        self.check_point(point)?;
        let mut sum = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let phase: f64 = t.freq.iter().zip(point).map(|(k, y)| k * y).sum();
            sum += t.amp * Complex64::from_polar(1.0, phase);
        }
        let bound = 1e-12 * self.l1_norm();
        if sum.im.abs() > bound {
            return Err(Error::arg(format!(
                "evaluation has imaginary part {:e} above {:e}",
                sum.im, bound
            )));
        }
        Ok(sum.re)
    }

    /// Real part of the sum without the dimension and realness checks.
    #[inline]
    pub fn eval_real(&self, point: &[f64]) -> f64 {
        let mut sum = 0.0;
        for t in &self.terms {
            let phase: f64 = t.freq.iter().zip(point).map(|(k, y)| k * y).sum();
            let (s, c) = phase.sin_cos();
            sum += t.amp.re * c - t.amp.im * s;
        }
        sum
    }

    /// Tensorized trapezoidal average over the centred cube `[-L, L]^dim`
    /// with `samples` nodes per axis.
    ///
    /// The tensor rule applied to a sum of exponentials factorizes into
    /// one-dimensional rules per term and axis, which is how it is evaluated.
    pub fn empirical_mean(&self, window: f64, samples: usize) -> Result<f64> {
        if !(window > 0.0) {
            return Err(Error::arg("window must be positive"));
        }
        if samples < 2 {
            return Err(Error::arg("at least two samples per axis are required"));
        }
        let step = 2.0 * window / (samples - 1) as f64;
        let axis_avg = |k: f64| -> Complex64 {
            if k == 0.0 {
                return Complex64::new(1.0, 0.0);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..samples {
                let y = -window + j as f64 * step;
                let w = if j == 0 || j == samples - 1 { 0.5 } else { 1.0 };
                acc += Complex64::from_polar(w, k * y);
            }
            acc * (step / (2.0 * window))
        };
        let mut total = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut factor = t.amp;
            for &k in &t.freq {
                factor *= axis_avg(k);
            }
            total += factor;
        }
        Ok(total.re)
    }

    /// Besicovitch seminorm `(mean of |poly|^p over [-L, L]^dim)^{1/p}`
    /// using the trapezoidal rule on a grid resolving the highest frequency.
    pub fn besicovitch_seminorm(&self, p: f64, window: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::arg("seminorm exponent must be at least 1"));
        }
        if !(window > 0.0) {
            return Err(Error::arg("window must be positive"));
        }
        const POINTS_PER_PERIOD: f64 = 24.0;
        const MAX_POINTS: usize = 1 << 24;
        let dim = self.dim;
        let mut per_axis: Vec<usize> = (0..dim)
            .map(|d| {
                let kmax = self.terms.iter().map(|t| t.freq[d].abs()).fold(0.0, f64::max);
                let n = (2.0 * window * kmax / (2.0 * PI) * POINTS_PER_PERIOD).ceil() as usize + 1;
                n.max(2)
            })
            .collect();
        let total: f64 = per_axis.iter().map(|&n| n as f64).product();
        if total > MAX_POINTS as f64 {
            let shrink = (MAX_POINTS as f64 / total).powf(1.0 / dim as f64);
            log::warn!("besicovitch_seminorm: sample grid capped at {MAX_POINTS} points");
            for n in per_axis.iter_mut() {
                *n = ((*n as f64 * shrink).floor() as usize).max(2);
            }
        }
        // phase tables per term and axis
        let tables: Vec<Vec<Vec<Complex64>>> = self
            .terms
            .iter()
            .map(|t| {
                (0..dim)
                    .map(|d| {
                        let n = per_axis[d];
                        let step = 2.0 * window / (n - 1) as f64;
                        (0..n)
                            .map(|j| Complex64::from_polar(1.0, t.freq[d] * (-window + j as f64 * step)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let npts: usize = per_axis.iter().product();
        let mut idx = vec![0usize; dim];
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for _ in 0..npts {
            let mut w = 1.0;
            for d in 0..dim {
                if idx[d] == 0 || idx[d] == per_axis[d] - 1 {
                    w *= 0.5;
                }
            }
            let mut val = 0.0;
            for (t, tab) in self.terms.iter().zip(&tables) {
                let mut z = t.amp;
                for d in 0..dim {
                    z *= tab[d][idx[d]];
                }
                val += z.re;
            }
            acc += w * val.abs().powf(p);
            wsum += w;
            for d in 0..dim {
                idx[d] += 1;
                if idx[d] < per_axis[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok((acc / wsum).powf(1.0 / p))
    }

    /// Rounds every frequency component to the nearest multiple of `2π/Q`,
    /// giving a polynomial with common period `Q` in every variable. Returns
    /// the rounded polynomial and the largest frequency perturbation.
    pub fn periodic_approximation(&self, q: usize) -> Result<(TrigPolynomial, f64)> {
        self.periodic_approximation_axes(q, &vec![true; self.dim])
    }

    /// Like [`periodic_approximation`](Self::periodic_approximation) but only
    /// on the axes flagged in `axes`.
    pub fn periodic_approximation_axes(&self, q: usize, axes: &[bool]) -> Result<(TrigPolynomial, f64)> {
        if q < 1 {
            return Err(Error::arg("period denominator Q must be at least 1"));
        }
        if axes.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: axes.len(),
            });
        }
        let quantum = 2.0 * PI / q as f64;
        let mut perturbation = 0.0_f64;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let freq = t
                    .freq
                    .iter()
                    .zip(axes)
                    .map(|(&k, &on)| {
                        if !on {
                            return k;
                        }
                        let r = (k / quantum).round() * quantum;
                        perturbation = perturbation.max((r - k).abs());
                        r
                    })
                    .collect();
                Term { freq, amp: t.amp }
            })
            .collect();
        Ok((TrigPolynomial::new(self.dim, terms)?, perturbation))
    }

    /// Samples `poly(x/eps, t/eps²)` at each `(x, t)`.
    ///
    /// A one-variable polynomial is read as a function of the fast time `τ`,
    /// a two-variable one as a function of the fast space variable `y`, and a
    /// three-variable one as a function of `(y₁, y₂, τ)`.
    pub fn scale_sample(&self, eps: f64, points: &[([f64; 2], f64)]) -> Result<Vec<f64>> {
        if !(eps > 0.0) {
            return Err(Error::arg("eps must be positive"));
        }
        let e2 = eps * eps;
        Ok(points
            .iter()
            .map(|&(x, t)| match self.dim {
                1 => self.eval_real(&[t / e2]),
                2 => self.eval_real(&[x[0] / eps, x[1] / eps]),
                _ => self.eval_real(&[x[0] / eps, x[1] / eps, t / e2]),
            })
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    freq: Vec<f64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct TrigPolyJson {
    dim: usize,
    terms: Vec<TermJson>,
}

impl TryFrom<TrigPolyJson> for TrigPolynomial {
    type Error = Error;
    fn try_from(j: TrigPolyJson) -> Result<Self> {
        TrigPolynomial::new(
            j.dim,
            j.terms
                .into_iter()
                .map(|t| Term {
                    freq: t.freq,
                    amp: Complex64::new(t.re, t.im),
                })
                .collect(),
        )
    }
}

impl From<TrigPolynomial> for TrigPolyJson {
    fn from(p: TrigPolynomial) -> Self {
        TrigPolyJson {
            dim: p.dim,
            terms: p
                .terms
                .into_iter()
                .map(|t| TermJson {
                    freq: t.freq,
                    re: t.amp.re,
                    im: t.amp.im,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cos1() -> TrigPolynomial {
        TrigPolynomial::cosine(&[1.0, 0.0], 1.0)
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(cos1().evaluate(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(TrigPolynomial::constant(2, 3.0).evaluate(&[0.7, -2.0]).unwrap(), 3.0);
        let p = cos1().add(&TrigPolynomial::cosine(&[2f64.sqrt(), 0.0], 1.0)).unwrap();
        let direct = PI.cos() + (2f64.sqrt() * PI).cos();
        let v = p.evaluate(&[PI, 0.0]).unwrap();
        assert!((v - direct).abs() < 1e-14);
        assert!((v + 1.2663).abs() < 1e-4);
    }

    #[test]
    fn evaluate_rejects_wrong_dimension() {
        assert!(matches!(
            cos1().evaluate(&[0.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn non_hermitian_terms_rejected() {
        let r = TrigPolynomial::new(
            1,
            vec![Term {
                freq: vec![1.0],
                amp: Complex64::new(1.0, 0.0),
            }],
        );
        assert!(r.is_err());
    }

    #[test]
    fn mean_value_examples() {
        assert_eq!(cos1().mean_value(), 0.0);
        let p = TrigPolynomial::constant(2, 3.0)
            .add(&cos1())
            .unwrap()
            .add(&TrigPolynomial::cosine(&[2f64.sqrt(), 0.0], 1.0))
            .unwrap();
        assert_eq!(p.mean_value(), 3.0);
        let sq = cos1().mul(&cos1()).unwrap();
        assert!((sq.mean_value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empirical_mean_examples() {
        let c = TrigPolynomial::constant(1, 3.0);
        assert!((c.empirical_mean(1.0, 11).unwrap() - 3.0).abs() < 1e-14);
        let cos = TrigPolynomial::cosine(&[1.0], 1.0);
        assert!(cos.empirical_mean(100.0, 10_000).unwrap().abs() <= 0.02);
        let sq = cos.mul(&cos).unwrap();
        assert!((sq.empirical_mean(50.0, 10_000).unwrap() - 0.5).abs() <= 0.02);
    }

    #[test]
    fn seminorm_examples() {
        let cos = TrigPolynomial::cosine(&[1.0], 1.0);
        let v = cos.besicovitch_seminorm(2.0, 400.0).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 5e-3);
        let c = TrigPolynomial::constant(2, 3.0);
        assert!((c.besicovitch_seminorm(3.0, 5.0).unwrap() - 3.0).abs() < 1e-12);
        let two = cos.add(&TrigPolynomial::cosine(&[2f64.sqrt()], 1.0)).unwrap();
        assert!((two.besicovitch_seminorm(2.0, 200.0).unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn scale_sample_examples() {
        let cos = TrigPolynomial::cosine(&[1.0, 0.0], 1.0);
        for eps in [1.0, 0.5, 0.01] {
            let v = cos.scale_sample(eps, &[([eps * PI, 0.0], 0.3)]).unwrap();
            assert!((v[0] + 1.0).abs() < 1e-12);
        }
        let tcos = TrigPolynomial::cosine(&[1.0], 1.0);
        for eps in [1.0, 0.25] {
            let v = tcos.scale_sample(eps, &[([0.1, 0.2], eps * eps * PI / 2.0)]).unwrap();
            assert!(v[0].abs() < 1e-12);
        }
        assert!(cos.scale_sample(0.0, &[]).is_err());
        let c = TrigPolynomial::constant(3, 2.5);
        let v = c.scale_sample(0.1, &[([0.3, 0.4], 1.0), ([0.9, 0.1], 2.0)]).unwrap();
        assert_eq!(v, vec![2.5, 2.5]);
    }

    #[test]
    fn periodic_approximation_examples() {
        let per = TrigPolynomial::cosine(&[2.0 * PI * 3.0 / 10.0], 1.0);
        let (r, d) = per.periodic_approximation(10).unwrap();
        assert!(d < 1e-15);
        assert!((r.terms()[0].freq[0] - per.terms()[0].freq[0]).abs() < 1e-15);

        let s2 = TrigPolynomial::cosine(&[2f64.sqrt()], 1.0);
        let (r, d) = s2.periodic_approximation(10).unwrap();
        let expect = 2.0 * PI * (2f64.sqrt() * 10.0 / (2.0 * PI)).round() / 10.0;
        assert!((r.terms()[0].freq[0].abs() - expect).abs() < 1e-14);
        assert!(d <= PI / 10.0);
        assert!((d - (expect - 2f64.sqrt()).abs()).abs() < 1e-14);

        let c = TrigPolynomial::constant(1, 1.0);
        let (r, d) = c.periodic_approximation(3).unwrap();
        assert_eq!(r, c);
        assert_eq!(d, 0.0);
        assert!(c.periodic_approximation(0).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let p = TrigPolynomial::sine(&[1.0, 2.0, 0.5], 0.3)
            .add(&TrigPolynomial::constant(3, 1.0))
            .unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"dim\":3"));
        let back: TrigPolynomial = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    fn arb_poly(dim: usize) -> impl Strategy<Value = TrigPolynomial> {
        prop::collection::vec(
            (prop::collection::vec(-5.0f64..5.0, dim), -2.0f64..2.0, -2.0f64..2.0),
            0..5,
        )
        .prop_map(move |modes| {
            let mut p = TrigPolynomial::zero(dim);
            for (k, re, im) in modes {
                let m = TrigPolynomial::cosine(&k, re).add(&TrigPolynomial::sine(&k, im)).unwrap();
                p = p.add(&m).unwrap();
            }
            p
        })
    }

    proptest! {
        #[test]
        fn evaluations_are_real(p in arb_poly(3), y in prop::collection::vec(-50.0f64..50.0, 3)) {
            prop_assert!(p.evaluate(&y).is_ok());
        }

        #[test]
        fn mean_is_translation_invariant(p in arb_poly(2), a in prop::collection::vec(-10.0f64..10.0, 2)) {
            let shifted = p.shift(&a).unwrap();
            prop_assert_eq!(shifted.mean_value(), p.mean_value());
        }
    }
}
