use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::{Boundary, FlowState, MacGrid};

/// Initial velocity fields built from a stream function sampled at cell
/// corners, so their discrete divergence vanishes to round-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `ψ = A/(2πm)·sin(2πm x) sin(2πm y)`; on walled grids the half-wave
    /// `ψ = A/(πm)·sin(πm x) sin(πm y)`.
    TaylorGreen {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
    },
    /// `ψ = A·sin²(πx) sin²(πy)`, vanishing with its gradient on the walls.
    Bump { amplitude: f64 },
    Zero,
}

fn one() -> u32 {
    1
}

impl InitialCondition {
    pub fn stream_function(&self, bc: Boundary, x: f64, y: f64) -> f64 {
        match *self {
            InitialCondition::TaylorGreen { amplitude, mode } => {
                let m = mode.max(1) as f64;
                match bc {
                    Boundary::Periodic => {
                        let k = 2.0 * PI * m;
                        amplitude / k * (k * x).sin() * (k * y).sin()
                    }
                    Boundary::Noslip => {
                        let k = PI * m;
                        amplitude / k * (k * x).sin() * (k * y).sin()
                    }
                }
            }
            InitialCondition::Bump { amplitude } => {
                let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
                amplitude * sx * sx * sy * sy
            }
            InitialCondition::Zero => 0.0,
        }
    }

    pub fn build(&self, grid: &MacGrid) -> FlowState {
        let n = grid.n();
        let h = grid.h();
        let bc = grid.bc();
        let psi = |i: usize, j: usize| self.stream_function(bc, i as f64 * h, j as f64 * h);
        let mut s = FlowState::zeros(grid);
        for j in 0..n {
            for i in 0..n {
                let k = grid.idx(i, j);
                s.u[k] = (psi(i, j + 1) - psi(i, j)) / h;
                s.v[k] = -(psi(i + 1, j) - psi(i, j)) / h;
            }
        }
        grid.apply_walls(&mut s.u, &mut s.v);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::divergence;

    #[test]
    fn stream_function_fields_are_divergence_free() {
        for bc in [Boundary::Periodic, Boundary::Noslip] {
            let grid = MacGrid::new(32, bc).unwrap();
            for ic in [
                InitialCondition::TaylorGreen { amplitude: 0.3, mode: 1 },
                InitialCondition::Bump { amplitude: 1.0 },
            ] {
                let s = ic.build(&grid);
                let d = divergence(&s, &grid).unwrap();
                assert!(d.iter().all(|x| x.abs() < 1e-11), "{bc:?} {ic:?}");
                assert!(s.max_velocity() > 0.01);
            }
        }
    }

    #[test]
    fn json_forms() {
        let ic: InitialCondition = serde_json::from_str(r#"{"kind":"taylor_green","amplitude":0.1}"#).unwrap();
        assert_eq!(ic, InitialCondition::TaylorGreen { amplitude: 0.1, mode: 1 });
        let z: InitialCondition = serde_json::from_str(r#"{"kind":"zero"}"#).unwrap();
        assert_eq!(z, InitialCondition::Zero);
    }
}
