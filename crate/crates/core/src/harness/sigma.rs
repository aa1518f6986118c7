use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::Trajectory;

use super::config::SigmaTestFn;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaOutcome {
    /// `∫∫ u_ε·f(x, t, x/ε, t/ε²)`
    pub lhs: f64,
    /// `∫∫ u₀·𝔐_{y,τ} f(x, t, ·, ·)`
    pub rhs: f64,
    pub gap: f64,
}

/// Trapezoid weights on possibly uneven sample times.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        w[k - 1] += 0.5 * dt;
        w[k] += 0.5 * dt;
    }
    w
}

/// `∫₀ᵀ Σ_faces (d·u) f(x, t) h² dt` over the stored snapshots.
pub fn weak_pairing(traj: &Trajectory, direction: [f64; 2], f: impl Fn([f64; 2], f64) -> f64) -> f64 {
    let grid = &traj.grid;
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let w = trapezoid_weights(&traj.times());
    let mut total = 0.0;
    for (s, wk) in traj.states.iter().zip(w) {
        if wk == 0.0 {
            continue;
        }
        let t = s.time;
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                let k = grid.idx(i, j);
                if direction[0] != 0.0 {
                    acc += direction[0] * s.u[k] * f(grid.u_position(i, j), t);
                }
                if direction[1] != 0.0 {
                    acc += direction[1] * s.v[k] * f(grid.v_position(i, j), t);
                }
            }
        }
        total += wk * acc * h2;
    }
    total
}

/// Compares the ε-scale pairing against the homogenized one. Both
/// trajectories must cover the same time interval.
pub fn sigma_test(micro: &Trajectory, eps: f64, homogenized: &Trajectory, test: &SigmaTestFn) -> Result<SigmaOutcome> {
    test.validate()?;
    if !(eps > 0.0) {
        return Err(Error::arg("eps must be positive"));
    }
    let (a, b) = (micro.last().time, homogenized.last().time);
    if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
        return Err(Error::arg(format!("trajectories end at different times {a} and {b}")));
    }
    let env = &test.envelope;
    let osc = &test.oscillation;
    let lhs = weak_pairing(micro, test.direction, |x, t| {
        env.eval_real(&[x[0], x[1], t]) * osc.eval_real(&[x[0] / eps, x[1] / eps, t / (eps * eps)])
    });
    let mean = osc.mean_value();
    let rhs = if mean == 0.0 {
        0.0
    } else {
        mean * weak_pairing(homogenized, test.direction, |x, t| env.eval_real(&[x[0], x[1], t]))
    };
    Ok(SigmaOutcome {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ap_field::TrigPolynomial;
    use crate::grid::{Boundary, FlowState, MacGrid};
    use std::f64::consts::PI;

    fn frozen(grid: MacGrid, f: impl Fn([f64; 2]) -> f64, times: &[f64]) -> Trajectory {
        let mut s = FlowState::zeros(&grid);
        for j in 0..grid.n() {
            for i in 0..grid.n() {
                s.v[grid.idx(i, j)] = f(grid.v_position(i, j));
            }
        }
        let states = times
            .iter()
            .map(|&t| FlowState {
                time: t,
                ..s.clone()
            })
            .collect();
        Trajectory {
            grid,
            p: 2.0,
            states,
            diagnostics: Vec::new(),
        }
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let t = [0.0, 0.1, 0.35, 1.0];
        let w = trapezoid_weights(&t);
        let s: f64 = w.iter().zip(&t).map(|(w, t)| w * (2.0 * t + 1.0)).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn slow_test_function_has_zero_gap_for_equal_fields() {
        let grid = MacGrid::new(32, Boundary::Periodic).unwrap();
        let traj = frozen(grid, |x| (2.0 * PI * x[0]).sin(), &[0.0, 0.5, 1.0]);
        let test = SigmaTestFn {
            name: "slow".into(),
            envelope: TrigPolynomial::sine(&[2.0 * PI, 0.0, 0.0], 1.0),
            oscillation: TrigPolynomial::constant(3, 2.0),
            direction: [0.0, 1.0],
        };
        let out = sigma_test(&traj, 0.1, &traj, &test).unwrap();
        assert!(out.gap < 1e-13, "{out:?}");
        // ∫ 2 sin² = 1 over the unit square and unit time.
        assert!((out.rhs - 1.0).abs() < 1e-12, "{out:?}");
    }

    #[test]
    fn oscillating_field_is_detected_and_mean_free_part_vanishes() {
        let eps = 1.0 / 8.0;
        let grid = MacGrid::new(64, Boundary::Periodic).unwrap();
        let fine = frozen(grid, |x| (2.0 * PI * x[0] / eps).sin(), &[0.0, 1.0]);
        let smooth = frozen(grid, |x| (2.0 * PI * x[0]).cos(), &[0.0, 1.0]);
        let test = SigmaTestFn {
            name: "osc".into(),
            envelope: TrigPolynomial::constant(3, 1.0),
            oscillation: TrigPolynomial::sine(&[2.0 * PI, 0.0, 0.0], 1.0),
            direction: [0.0, 1.0],
        };
        let out = sigma_test(&fine, eps, &smooth, &test).unwrap();
        assert!((out.lhs - 0.5).abs() < 1e-12 && out.rhs == 0.0, "{out:?}");
        let out = sigma_test(&smooth, eps, &smooth, &test).unwrap();
        assert!(out.gap < 1e-12, "{out:?}");
    }
}
