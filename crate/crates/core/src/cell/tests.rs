use std::f64::consts::PI;

use super::*;
use crate::ap_field::{Bounds, ForcingLaw, TrigPolynomial};

const TWO_PI: f64 = 2.0 * PI;

fn laminate_with(b_tau: Option<f64>) -> CoefficientSet {
    let a = TrigPolynomial::constant(3, 2.0).add(&TrigPolynomial::cosine(&[TWO_PI, 0.0, 0.0], 1.0)).unwrap();
    let mut b = TrigPolynomial::constant(3, 1.0).add(&TrigPolynomial::cosine(&[TWO_PI, 0.0, 0.0], 0.5)).unwrap();
    let mut nu1 = 0.5;
    let mut nu2 = 1.5;
    if let Some(beta1) = b_tau {
        // β₁ cos τ cos 2πy₁ = β₁/2 (cos(2πy₁ + τ) + cos(2πy₁ − τ))
        let w = TrigPolynomial::cosine(&[TWO_PI, 0.0, 1.0], 0.5 * beta1)
            .add(&TrigPolynomial::cosine(&[TWO_PI, 0.0, -1.0], 0.5 * beta1))
            .unwrap();
        b = b.add(&w).unwrap();
        nu1 -= beta1 + 1e-12;
        nu2 += beta1 + 1e-12;
    }
    let rho = TrigPolynomial::constant(2, 1.0).add(&TrigPolynomial::cosine(&[0.0, TWO_PI], 0.2)).unwrap();
    CoefficientSet::new(
        rho,
        [a.clone(), TrigPolynomial::zero(3), a],
        b,
        ForcingLaw::zero(),
        Bounds {
            nu0: 1.0,
            nu1,
            nu2,
            lambda: 1.25,
            lipschitz_k: 1.0,
        },
        3.0,
    )
    .unwrap()
}

fn laminate() -> CoefficientSet {
    laminate_with(None)
}

fn shear(gamma: f64) -> Tensor2 {
    Tensor2::new(0.0, 0.0, gamma, 0.0)
}

/// Constant-flux oracle for `α s + β|s|s = C`, `mean s = γ`, by nested
/// bisection and the periodic trapezoid rule.
fn shear_oracle(gamma: f64, y: &[f64]) -> (f64, Vec<f64>) {
    let alpha = |y: f64| 2.0 + (TWO_PI * y).cos();
    let beta = |y: f64| 1.0 + 0.5 * (TWO_PI * y).cos();
    let local = |c: f64, y: f64| {
        let (mut lo, mut hi) = (-10.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if alpha(y) * mid + beta(y) * mid.abs() * mid > c {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let nq = 2048;
    let mean = |c: f64| (0..nq).map(|k| local(c, k as f64 / nq as f64)).sum::<f64>() / nq as f64;
    let (mut lo, mut hi) = (-50.0_f64, 50.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) > gamma {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    (c, y.iter().map(|&yy| local(c, yy) - gamma).collect())
}

fn random_xi(seed: u64) -> Vec<Tensor2> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..5)
        .map(|_| Tensor2::from_array(std::array::from_fn(|_| rng.gen_range(-2.0..2.0))))
        .collect()
}

#[test]
fn constant_coefficients_give_zero_corrector() {
    for p in [2.0, 3.0] {
        let c = CoefficientSet::constant(0.7, 0.4, 1.0, p).unwrap();
        for xi in random_xi(11) {
            let spec = CellProblemSpec::new(xi, c.clone(), 1.0, 32).unwrap();
            let sol = solve_corrector(&spec).unwrap();
            assert!(sol.grad_norm() <= 1e-10);
            let m = xi * 0.7;
            let big = xi * (0.4 * xi.norm().powf(p - 2.0));
            assert!((sol.m_xi - m).norm() <= 1e-10 * m.norm());
            assert!((sol.big_m_xi - big).norm() <= 1e-10 * big.norm());
        }
    }
}

#[test]
fn spec_flux_example_for_constant_coefficients() {
    let c = CoefficientSet::constant(0.5, 0.25, 1.0, 3.0).unwrap();
    let xi = Tensor2::new(2.0, 0.0, 0.0, 0.0);
    let sol = solve_corrector(&CellProblemSpec::new(xi, c, 1.0, 16).unwrap()).unwrap();
    assert_eq!(sol.m_xi, xi * 0.5);
    assert_eq!(sol.big_m_xi, xi * 0.5);
}

#[test]
fn zero_gradient_gives_zero_corrector() {
    let spec = CellProblemSpec::new(Tensor2::ZERO, laminate(), 1.0, 16).unwrap();
    let sol = solve_corrector(&spec).unwrap();
    assert!(sol.pi.iter().flatten().all(|&x| x == 0.0));
    assert_eq!(sol.flux(), Tensor2::ZERO);
}

#[test]
fn laminate_shear_matches_one_dimensional_oracle() {
    let m = 64;
    let gamma = 1.0;
    let spec = CellProblemSpec::new(shear(gamma), laminate(), 1.0, m).unwrap();
    let sol = solve_corrector(&spec).unwrap();
    let y: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    let (c, dphi) = shear_oracle(gamma, &y);
    let scale = dphi.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    for j in 0..m {
        for i in 0..m {
            let g = sol.grad_pi[j * m + i];
            assert!((g.0[1][0] - dphi[i]).abs() <= 1e-6 * scale, "{} vs {}", g.0[1][0], dphi[i]);
            assert!(g.0[0][0].abs() + g.0[0][1].abs() + g.0[1][1].abs() <= 1e-8 * scale);
        }
    }
    let f = sol.flux();
    assert!((f.0[1][0] - c).abs() <= 1e-6 * c.abs(), "{} vs {c}", f.0[1][0]);
    assert!(f.0[0][0].abs() + f.0[0][1].abs() + f.0[1][1].abs() <= 1e-8 * c.abs());
}

#[test]
fn corrector_is_divergence_free_and_gauged() {
    let xi = Tensor2::new(0.3, -0.8, 0.5, -0.3);
    let spec = CellProblemSpec::new(xi, laminate(), 1.0, 32).unwrap();
    let sol = solve_corrector(&spec).unwrap();
    assert!(sol.residual <= spec.settings.tolerance);
    let div = sol.grad_pi.iter().fold(0.0_f64, |a, g| a.max((g.0[0][0] + g.0[1][1]).abs()));
    assert!(div <= 1e-10, "div {div}");
    let sup = sol.pi.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()));
    assert!(sup > 0.0);
    assert!(sol.gauge.iter().all(|g| g.abs() <= 1e-10 * sup));
}

#[test]
fn constant_shift_leaves_fluxes_unchanged() {
    let xi = Tensor2::new(0.4, 0.2, -0.6, -0.4);
    let spec = CellProblemSpec::new(xi, laminate(), 1.0, 32).unwrap();
    let sol = solve_corrector(&spec).unwrap();
    let (m0, b0) = flux_for_field(&spec, &sol.pi).unwrap();
    let shifted = [
        sol.pi[0].iter().map(|x| x + 3.25).collect(),
        sol.pi[1].iter().map(|x| x - 1.5).collect(),
    ];
    let (m1, b1) = flux_for_field(&spec, &shifted).unwrap();
    assert!((m1 - m0).max_abs() <= 1e-12 && (b1 - b0).max_abs() <= 1e-12);
    assert!((m0 - sol.m_xi).max_abs() <= 1e-12);
}

#[test]
fn uniqueness_from_random_starts() {
    let spec = CellProblemSpec::new(shear(1.0), laminate(), 1.0, 32).unwrap();
    let r = verify_uniqueness(&spec, 3, 7).unwrap();
    assert!(r.passed, "{r:?}");
    let c = CoefficientSet::constant(1.0, 1.0, 1.0, 3.0).unwrap();
    let spec = CellProblemSpec::new(Tensor2::ZERO, c, 1.0, 16).unwrap();
    let r = verify_uniqueness(&spec, 2, 1).unwrap();
    assert!(r.passed && r.max_distance == 0.0);
    assert!(verify_uniqueness(&spec, 1, 1).is_err());
}

#[test]
fn steady_mode_rejects_time_dependent_coefficients() {
    let spec = CellProblemSpec::new(shear(1.0), laminate_with(Some(0.05)), 1.0, 16).unwrap();
    assert!(matches!(solve_corrector(&spec), Err(Error::UnsupportedMode(_))));
    let spec = spec.with_time_mode(TimeMode::TimePeriodic { period: 5.0, steps: 16 });
    assert!(matches!(solve_corrector(&spec), Err(Error::UnsupportedMode(_))));
}

#[test]
fn time_periodic_reduces_to_steady() {
    let xi = Tensor2::new(0.2, 0.5, -0.3, -0.2);
    let steady = CellProblemSpec::new(xi, laminate(), 1.0, 16).unwrap();
    let s = solve_corrector(&steady).unwrap();
    let tp = steady.clone().with_time_mode(TimeMode::TimePeriodic { period: 1.0, steps: 8 });
    let t = solve_corrector_time_periodic(&tp).unwrap();
    let d = s.grad_pi.iter().zip(&t.grad_pi).fold(0.0_f64, |a, (x, y)| a.max((*x - *y).max_abs()));
    assert!(d <= 1e-8, "{d}");
    assert!((s.flux() - t.flux()).max_abs() <= 1e-8);
    assert!(solve_corrector_time_periodic(&steady).is_err());
}

#[test]
fn time_periodic_flux_is_continuous_in_the_oscillation_amplitude() {
    let xi = shear(1.0);
    let base = solve_corrector(&CellProblemSpec::new(xi, laminate(), 1.0, 16).unwrap()).unwrap().flux();
    let mut deltas = Vec::new();
    for beta1 in [0.01, 0.02, 0.04] {
        let spec = CellProblemSpec::new(xi, laminate_with(Some(beta1)), 1.0, 16)
            .unwrap()
            .with_time_mode(TimeMode::TimePeriodic { period: TWO_PI, steps: 64 });
        let f = solve_corrector(&spec).unwrap().flux();
        deltas.push((f - base).norm());
    }
    // |ΔF| ≤ C β₁ with a uniform C
    let slopes: Vec<f64> = deltas.iter().zip([0.01, 0.02, 0.04]).map(|(d, b)| d / b).collect();
    assert!(slopes.iter().all(|&s| s < 1.0), "{slopes:?}");
    assert!(deltas[2] >= deltas[0], "{deltas:?}");
}

#[test]
fn power_law_regime_is_homogeneous_of_degree_p_minus_one() {
    let delta = 1e-9;
    let a = TrigPolynomial::constant(3, delta);
    let b = TrigPolynomial::constant(3, 1.0).add(&TrigPolynomial::cosine(&[TWO_PI, TWO_PI, 0.0], 0.4)).unwrap();
    let c = CoefficientSet::new(
        TrigPolynomial::constant(2, 1.0),
        [a.clone(), TrigPolynomial::zero(3), a],
        b,
        ForcingLaw::zero(),
        Bounds {
            nu0: delta,
            nu1: 0.6,
            nu2: 1.4,
            lambda: 1.0,
            lipschitz_k: 1.0,
        },
        3.0,
    )
    .unwrap();
    let xi = Tensor2::new(0.5, 1.0, -0.2, -0.5);
    let flux = |x: Tensor2| solve_corrector(&CellProblemSpec::new(x, c.clone(), 1.0, 32).unwrap()).unwrap().flux();
    let f1 = flux(xi);
    for lam in [0.5, 2.0] {
        let f = flux(xi * lam);
        let expect = f1 * (lam * lam);
        assert!((f - expect).norm() <= 1e-7 * expect.norm(), "{lam}");
    }
}

#[test]
fn corrector_gradients_form_a_cauchy_sequence() {
    // square-wave-like laminate: odd harmonics up to 13
    let mut a = TrigPolynomial::constant(3, 2.0);
    for (n, k) in [1.0_f64, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0].iter().enumerate() {
        let amp = 0.7 * 4.0 / PI / k * if n % 2 == 0 { 1.0 } else { -1.0 } / 1.7;
        a = a.add(&TrigPolynomial::cosine(&[TWO_PI * k, 0.0, 0.0], amp)).unwrap();
    }
    let spread: f64 = a.oscillation_l1();
    let c = CoefficientSet::new(
        TrigPolynomial::constant(2, 1.0),
        [a.clone(), TrigPolynomial::zero(3), a],
        TrigPolynomial::constant(3, 0.5),
        ForcingLaw::zero(),
        Bounds {
            nu0: 2.0 - spread,
            nu1: 0.5,
            nu2: 0.5,
            lambda: 1.0,
            lipschitz_k: 1.0,
        },
        3.0,
    )
    .unwrap();
    let xi = shear(1.0);
    let grads: Vec<CorrectorSolution> = [32, 64, 128]
        .iter()
        .map(|&m| solve_corrector(&CellProblemSpec::new(xi, c.clone(), 1.0, m).unwrap()).unwrap())
        .collect();
    // compare on the common coarse points
    let dist = |f: &CorrectorSolution, g: &CorrectorSolution| {
        let m = f.resolution;
        let r = g.resolution / m;
        let mut s = 0.0;
        for j in 0..m {
            for i in 0..m {
                s += (f.grad_pi[j * m + i] - g.grad_pi[(j * r) * g.resolution + i * r]).norm_sq();
            }
        }
        (s / (m * m) as f64).sqrt()
    };
    let d1 = dist(&grads[0], &grads[1]);
    let d2 = dist(&grads[1], &grads[2]);
    assert!(d2 < 0.5 * d1, "{d1} {d2}");
}

#[test]
fn resolution_and_period_are_validated() {
    assert!(CellProblemSpec::new(Tensor2::ZERO, laminate(), 1.0, 8).is_err());
    assert!(CellProblemSpec::new(Tensor2::ZERO, laminate(), 1.0, 17).is_err());
    assert!(CellProblemSpec::new(Tensor2::ZERO, laminate(), 0.7, 16).is_err());
}

#[test]
fn almost_periodic_coefficients_are_rounded() {
    let a = TrigPolynomial::constant(3, 2.0)
        .add(&TrigPolynomial::cosine(&[2.0_f64.sqrt(), 0.0, 0.0], 0.5))
        .unwrap();
    let c = CoefficientSet::new(
        TrigPolynomial::constant(2, 1.0),
        [a.clone(), TrigPolynomial::zero(3), a],
        TrigPolynomial::constant(3, 1.0),
        ForcingLaw::zero(),
        Bounds {
            nu0: 1.5,
            nu1: 1.0,
            nu2: 1.0,
            lambda: 1.0,
            lipschitz_k: 1.0,
        },
        2.0,
    )
    .unwrap();
    assert!(CellProblemSpec::new(shear(1.0), c.clone(), 1.0, 16).is_err());
    let (spec, delta) = CellProblemSpec::from_almost_periodic(shear(1.0), &c, 9, 32).unwrap();
    assert!(delta > 0.0 && delta <= PI / 9.0);
    assert!(solve_corrector(&spec).unwrap().residual <= 1e-10);
}

fn tabulated(fallback: bool) -> EffectiveLaw {
    let s = LawSettings {
        step: 0.25,
        fallback,
        resolution: 16,
        ..LawSettings::default()
    };
    EffectiveLaw::tabulated(&laminate(), &s).unwrap().0
}

#[test]
fn closed_form_law() {
    let c = CoefficientSet::constant(0.5, 0.25, 1.0, 3.0).unwrap();
    let law = EffectiveLaw::homogeneous(&c).unwrap();
    let xi = Tensor2::new(2.0, 0.0, 0.0, 0.0);
    assert_eq!(law.flux(xi).unwrap(), Tensor2::new(2.0, 0.0, 0.0, 0.0));
    assert_eq!(law.flux(Tensor2::ZERO).unwrap(), Tensor2::ZERO);
    assert!(EffectiveLaw::homogeneous(&laminate()).is_err());
    let r: MonotonicityReport = law.monotonicity_check(10, 1e-6, 3).unwrap();
    assert!(r.passed);
    let back = EffectiveLaw::from_json(&law.to_json().unwrap(), None, None).unwrap();
    assert_eq!(back.flux(xi).unwrap(), law.flux(xi).unwrap());
}

#[test]
fn tabulated_law_interpolates_solved_nodes() {
    let law = tabulated(true);
    assert_eq!(law.flux(Tensor2::ZERO).unwrap(), Tensor2::ZERO);
    let node = Tensor2::new(0.25, -0.5, 0.5, -0.25);
    let f = law.flux(node).unwrap();
    let (m, big) = law.effective_flux(node).unwrap();
    assert!((f - (m + big)).max_abs() <= 1e-14);
    // between nodes the interpolant stays close to the exact law
    let mid = Tensor2::new(0.1, -0.3, 0.4, -0.1);
    let (m, big) = law.effective_flux(mid).unwrap();
    let fi = law.flux(mid).unwrap();
    assert!((fi - (m + big)).norm() <= 0.05 * (m + big).norm(), "{fi:?} vs {:?}", m + big);
    let before = law.solve_count();
    law.flux(mid).unwrap();
    assert_eq!(law.solve_count(), before);
    assert!(law.monotonicity_check(10, 1e-6, 5).unwrap().passed);
    assert!(law.measured_lipschitz().unwrap() <= law.lipschitz_bound(2.0));
}

#[test]
fn coverage_error_without_fallback() {
    let law = tabulated(false);
    match law.flux(Tensor2::new(0.1, 0.0, 0.0, 0.0)) {
        Err(Error::Coverage { missing }) => assert_eq!(missing, vec![[0, 0, 0, 0], [1, 0, 0, 0]]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn law_json_roundtrip_is_table_only_without_coefficients() {
    let law = tabulated(true);
    let xi = Tensor2::new(0.1, 0.2, -0.1, -0.1);
    let f = law.flux(xi).unwrap();
    let text = law.to_json().unwrap();
    assert!(text.contains("\"ladyfx/1\""));
    let back = EffectiveLaw::from_json(&text, None, None).unwrap();
    assert_eq!(back.node_count(), law.node_count());
    assert_eq!(back.flux(xi).unwrap(), f);
    assert!(matches!(back.flux(xi * 3.0), Err(Error::Coverage { .. })));
    let again = EffectiveLaw::from_json(&text, Some(&laminate()), None).unwrap();
    assert_eq!(again.to_json().unwrap(), text);
}

#[test]
fn conflicting_node_payload_is_rejected() {
    let law = tabulated(true);
    let v = NodeValue {
        m: Tensor2::IDENTITY,
        big_m: Tensor2::ZERO,
        residual: 0.0,
    };
    law.insert_node([1, 0, 0, 0], v).unwrap();
    law.insert_node([1, 0, 0, 0], v).unwrap();
    let w = NodeValue { m: Tensor2::ZERO, ..v };
    assert!(law.insert_node([1, 0, 0, 0], w).is_err());
}
