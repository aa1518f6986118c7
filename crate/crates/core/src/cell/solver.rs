use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::torus::{Spectrum, Torus};
use super::{CellProblemSpec, CorrectorSolution, TimeMode};
use crate::error::{Error, Result};
use crate::grid::stress;
use crate::micro::OscillatingSamples;
use crate::tensor::{Sym2, Tensor2};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficients sampled on the torus with the stress and residual maps.
struct CellOperator {
    torus: Torus,
    xi: Tensor2,
    p: f64,
    fields: [OscillatingSamples; 4],
    vals: [Vec<f64>; 4],
    rho: Vec<f64>,
    rho_mean: f64,
    a_min: f64,
    a_max: f64,
    b_min: f64,
    b_max: f64,
}

impl CellOperator {
    fn new(spec: &CellProblemSpec) -> Result<Self> {
        let torus = Torus::new(spec.resolution, spec.period);
        let pts = torus.points();
        let c = &spec.coeffs;
        let a = c.a();
        let fields = [
            OscillatingSamples::new(&a[0], &pts, 1.0),
            OscillatingSamples::new(&a[1], &pts, 1.0),
            OscillatingSamples::new(&a[2], &pts, 1.0),
            OscillatingSamples::new(c.b(), &pts, 1.0),
        ];
        let rho: Vec<f64> = pts.iter().map(|&y| c.rho_at(y)).collect();
        let rho_mean = rho.iter().sum::<f64>() / rho.len() as f64;
        let cert = c.certify()?;
        let mut op = CellOperator {
            vals: std::array::from_fn(|_| vec![0.0; pts.len()]),
            torus,
            xi: spec.xi,
            p: c.p(),
            fields,
            rho,
            rho_mean,
            a_min: cert.a_min,
            a_max: cert.a_max,
            b_min: cert.b_min.max(0.0),
            b_max: cert.b_max,
        };
        op.set_time(0.0);
        Ok(op)
    }

    fn set_time(&mut self, tau: f64) {
        for (f, v) in self.fields.iter().zip(self.vals.iter_mut()) {
            f.fill(tau, v);
        }
    }

    fn total_gradient(&self, pi: &[Spectrum; 2]) -> Vec<Tensor2> {
        let mut g = self.torus.gradient(pi);
        for t in g.iter_mut() {
            *t += self.xi;
        }
        g
    }

    #[inline]
    fn a_at(&self, k: usize) -> Sym2 {
        Sym2::new(self.vals[0][k], self.vals[1][k], self.vals[2][k])
    }

    /// Projected `div σ(ξ+∇π)` and the total gradient it was computed from.
    fn residual(&self, pi: &[Spectrum; 2]) -> ([Spectrum; 2], Vec<Tensor2>) {
        let g = self.total_gradient(pi);
        let sigma: Vec<Tensor2> = g
            .iter()
            .enumerate()
            .map(|(k, gk)| stress(&self.a_at(k), self.vals[3][k], self.p, gk))
            .collect();
        let mut r = self.torus.divergence(&sigma);
        self.torus.project(&mut r);
        (r, g)
    }

    /// `(𝔐(aG), 𝔐(b|G|^{p−2}G))`.
    fn means(&self, g: &[Tensor2]) -> (Tensor2, Tensor2) {
        let mut m = Tensor2::ZERO;
        let mut big = Tensor2::ZERO;
        for (k, gk) in g.iter().enumerate() {
            m += self.a_at(k).apply(gk);
            big += stress(&Sym2::scalar(0.0), self.vals[3][k], self.p, gk);
        }
        let s = 1.0 / g.len() as f64;
        (m * s, big * s)
    }

    /// Bounds on the linearized stiffness over the field `g`.
    fn stiffness(&self, g: &[Tensor2]) -> (f64, f64) {
        let (lo, hi) = g.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), t| {
            let n = t.norm();
            (lo.min(n), hi.max(n))
        });
        let e = self.p - 2.0;
        let w = |x: f64| if e == 0.0 { 1.0 } else { x.powf(e) };
        (self.a_min + self.b_min * w(lo), self.a_max + (self.p - 1.0) * self.b_max * w(hi))
    }

    /// Stress magnitude of `ξ`, used to make residuals relative.
    fn scale(&self) -> f64 {
        let n = self.xi.norm();
        let w = if self.p == 2.0 { 1.0 } else { n.powf(self.p - 2.0) };
        n * (self.a_max + self.b_max * w)
    }

    fn zeros(&self) -> [Spectrum; 2] {
        [vec![ZERO; self.torus.len()], vec![ZERO; self.torus.len()]]
    }

    fn spectra_of(&self, field: &[Vec<f64>; 2]) -> [Spectrum; 2] {
        let mut s = [self.torus.forward(&field[0]), self.torus.forward(&field[1])];
        self.torus.project(&mut s);
        s
    }

    /// Physical `π` normalized to `𝔐(ρπ) = 0`, with the residual gauge.
    fn gauged(&self, pi: &[Spectrum; 2]) -> ([Vec<f64>; 2], [f64; 2]) {
        let n = self.rho.len() as f64;
        let mut phys = [self.torus.inverse(&pi[0]), self.torus.inverse(&pi[1])];
        let mut gauge = [0.0; 2];
        for (c, comp) in phys.iter_mut().enumerate() {
            let shift = comp.iter().zip(&self.rho).map(|(x, r)| x * r).sum::<f64>() / n / self.rho_mean;
            comp.iter_mut().for_each(|x| *x -= shift);
            gauge[c] = comp.iter().zip(&self.rho).map(|(x, r)| x * r).sum::<f64>() / n;
        }
        (phys, gauge)
    }

    fn finish(&self, pi: &[Spectrum; 2], fluxes: Option<(Tensor2, Tensor2)>) -> CorrectorSolution {
        let g = self.torus.gradient(pi);
        let (m_xi, big_m_xi) = fluxes.unwrap_or_else(|| {
            let total: Vec<Tensor2> = g.iter().map(|t| *t + self.xi).collect();
            self.means(&total)
        });
        let (phys, gauge) = self.gauged(pi);
        CorrectorSolution {
            xi: self.xi,
            resolution: self.torus.m,
            period: self.torus.period,
            pi: phys,
            grad_pi: g,
            residual: 0.0,
            gauge,
            iterations: 0,
            history: Vec::new(),
            m_xi,
            big_m_xi,
        }
    }

    /// `P(ρ(δ + c))` with `c` the constant restoring `𝔐(ρ(δ + c)) = 0`.
    fn weighted_mass(&self, d: &[Spectrum; 2]) -> [Spectrum; 2] {
        let n = self.rho.len() as f64;
        let mut out = self.zeros();
        for c in 0..2 {
            let phys = self.torus.inverse(&d[c]);
            let shift = -phys.iter().zip(&self.rho).map(|(x, r)| x * r).sum::<f64>() / n / self.rho_mean;
            let w: Vec<f64> = phys.iter().zip(&self.rho).map(|(x, r)| r * (x + shift)).collect();
            out[c] = self.torus.forward(&w);
        }
        self.torus.project(&mut out);
        out
    }
}

fn dot(a: &[Spectrum; 2], b: &[Spectrum; 2]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

fn axpy(y: &mut [Spectrum; 2], s: f64, x: &[Spectrum; 2]) {
    for (yc, xc) in y.iter_mut().zip(x) {
        for (a, b) in yc.iter_mut().zip(xc) {
            *a += b * s;
        }
    }
}

fn sub(a: &[Spectrum; 2], b: &[Spectrum; 2]) -> [Spectrum; 2] {
    let mut out = a.clone();
    axpy(&mut out, -1.0, b);
    out
}

/// Type-II Anderson mixing over a bounded history.
struct Anderson {
    depth: usize,
    dx: VecDeque<[Spectrum; 2]>,
    df: VecDeque<[Spectrum; 2]>,
    prev: Option<([Spectrum; 2], [Spectrum; 2])>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson {
            depth,
            dx: VecDeque::new(),
            df: VecDeque::new(),
            prev: None,
        }
    }

    fn clear(&mut self) {
        self.dx.clear();
        self.df.clear();
        self.prev = None;
    }

    /// Next iterate from `x` and the update `f = g(x) − x`.
    fn next(&mut self, x: &[Spectrum; 2], f: &[Spectrum; 2]) -> [Spectrum; 2] {
        let mut out = x.clone();
        axpy(&mut out, 1.0, f);
        if self.depth == 0 {
            return out;
        }
        if let Some((px, pf)) = self.prev.take() {
            self.dx.push_back(sub(x, &px));
            self.df.push_back(sub(f, &pf));
            if self.dx.len() > self.depth {
                self.dx.pop_front();
                self.df.pop_front();
            }
        }
        self.prev = Some((x.clone(), f.clone()));
        let m = self.df.len();
        if m == 0 {
            return out;
        }
        let mut a = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            for j in 0..=i {
                a[i][j] = dot(&self.df[i], &self.df[j]);
                a[j][i] = a[i][j];
            }
            rhs[i] = dot(&self.df[i], f);
        }
        let trace: f64 = (0..m).map(|i| a[i][i]).sum();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-12 * trace / m as f64 + f64::MIN_POSITIVE;
        }
        let Some(gamma) = solve_dense(a, rhs) else {
            self.clear();
            return out;
        };
        for i in 0..m {
            axpy(&mut out, -gamma[i], &self.dx[i]);
            axpy(&mut out, -gamma[i], &self.df[i]);
        }
        out
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[piv][col].abs() > 0.0) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn check_time_structure(spec: &CellProblemSpec) -> Result<()> {
    let c = &spec.coeffs;
    match spec.time_mode {
        TimeMode::Steady => {
            if !c.is_time_independent() {
                return Err(Error::UnsupportedMode(
                    "steady corrector requested for coefficients that depend on the fast time".into(),
                ));
            }
        }
        TimeMode::TimePeriodic { period, .. } => {
            for poly in c.a().iter().chain([c.b()]) {
                for t in poly.terms() {
                    let r = t.freq[2] * period / (2.0 * PI);
                    if (r - r.round()).abs() > 1e-9 * r.abs().max(1.0) {
                        return Err(Error::UnsupportedMode(format!(
                            "temporal frequency {} is not commensurate with the period {period}",
                            t.freq[2]
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Solves the cell problem in the mode requested by `spec.time_mode`.
pub fn solve_corrector(spec: &CellProblemSpec) -> Result<CorrectorSolution> {
    spec.validate()?;
    check_time_structure(spec)?;
    match spec.time_mode {
        TimeMode::Steady => solve_steady(spec),
        TimeMode::TimePeriodic { period, steps } => march_periodic(spec, period, steps),
    }
}

/// Time-periodic corrector; `spec.time_mode` must be time-periodic.
pub fn solve_corrector_time_periodic(spec: &CellProblemSpec) -> Result<CorrectorSolution> {
    if !matches!(spec.time_mode, TimeMode::TimePeriodic { .. }) {
        return Err(Error::arg("time-periodic corrector requested with a steady time mode"));
    }
    solve_corrector(spec)
}

/// Damped preconditioned Picard iteration `π ← π + θ(−c₀Δ)⁻¹ P div σ(ξ+∇π)`
/// with Anderson mixing and restarts from the best iterate.
fn solve_steady(spec: &CellProblemSpec) -> Result<CorrectorSolution> {
    let op = CellOperator::new(spec)?;
    let scale = op.scale();
    let mut x = match &spec.initial {
        Some(init) => op.spectra_of(init),
        None => op.zeros(),
    };
    if scale == 0.0 {
        let mut sol = op.finish(&op.zeros(), None);
        sol.history.push(0.0);
        return Ok(sol);
    }
    let set = &spec.settings;
    let mut history = Vec::new();
    let mut anderson = Anderson::new(set.anderson_depth);
    let mut theta = 1.0;
    let mut c0 = 0.0;
    let mut best = (f64::INFINITY, x.clone());
    let mut stall = 0usize;
    for it in 0..set.max_iterations {
        let (r, g) = op.residual(&x);
        let res = op.torus.dual_norm(&r) / scale;
        history.push(res);
        if !res.is_finite() {
            return Err(Error::Instability {
                term: "cell residual",
                time: it as f64,
            });
        }
        if res <= set.tolerance {
            let mut sol = op.finish(&x, None);
            sol.residual = res;
            sol.iterations = it;
            sol.history = history;
            return Ok(sol);
        }
        if it == 0 {
            let (lo, hi) = op.stiffness(&g);
            c0 = 0.5 * (lo + hi);
        }
        if res < best.0 {
            best = (res, x.clone());
            stall = 0;
        } else {
            stall += 1;
        }
        if res > 1e3 * best.0 || stall > 25 {
            // restart from the best iterate with a refreshed preconditioner
            x = best.1.clone();
            anderson.clear();
            theta *= 0.5;
            stall = 0;
            let (_, g) = op.residual(&x);
            let (lo, hi) = op.stiffness(&g);
            c0 = 0.5 * (lo + hi);
            continue;
        }
        let mut f = r;
        for comp in f.iter_mut() {
            for (k, z) in comp.iter_mut().enumerate() {
                let k2 = op.torus.k_sq(k);
                *z = if k2 > 0.0 { *z * (theta / (c0 * k2)) } else { ZERO };
            }
        }
        x = anderson.next(&x, &f);
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(Error::Convergence {
        what: "cell corrector",
        iterations: set.max_iterations,
        residual,
        history,
    })
}

/// IMEX march of `ρ ∂π/∂τ = P div σ(ξ+∇π)` with the stabilization
/// `c₀(−Δ)(π^{n+1} − π^n)`; stops when one period returns to its start.
fn march_periodic(spec: &CellProblemSpec, period: f64, steps: usize) -> Result<CorrectorSolution> {
    let mut op = CellOperator::new(spec)?;
    let scale = op.xi.norm() * op.torus.period;
    let mut x = match &spec.initial {
        Some(init) => op.spectra_of(init),
        None => op.zeros(),
    };
    if scale == 0.0 {
        let mut sol = op.finish(&op.zeros(), None);
        sol.history.push(0.0);
        return Ok(sol);
    }
    let dt = period / steps as f64;
    let set = &spec.settings;
    let mut history = Vec::new();
    for cycle in 0..set.max_periods {
        let start = x.clone();
        let mut acc = (Tensor2::ZERO, Tensor2::ZERO);
        for n in 0..steps {
            op.set_time(n as f64 * dt);
            let (mut r, g) = op.residual(&x);
            let (m, big) = op.means(&g);
            acc.0 += m;
            acc.1 += big;
            let c0 = op.stiffness(&g).1;
            for comp in r.iter_mut() {
                comp.iter_mut().for_each(|z| *z *= dt);
            }
            let d = implicit_solve(&op, &r, dt * c0)?;
            axpy(&mut x, 1.0, &d);
        }
        let drift = op.torus.l2_norm(&sub(&x, &start)) / scale;
        history.push(drift);
        if !drift.is_finite() {
            return Err(Error::Instability {
                term: "time-periodic cell march",
                time: (cycle + 1) as f64 * period,
            });
        }
        if drift <= set.tolerance {
            op.set_time(0.0);
            let s = 1.0 / steps as f64;
            let mut sol = op.finish(&x, Some((acc.0 * s, acc.1 * s)));
            sol.residual = drift;
            sol.iterations = cycle + 1;
            sol.history = history;
            return Ok(sol);
        }
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(Error::Convergence {
        what: "time-periodic cell corrector",
        iterations: set.max_periods,
        residual,
        history,
    })
}

/// Conjugate gradients for `(P ρ + s(−Δ)) δ = rhs` on divergence-free,
/// mean-free spectra, preconditioned by `(ρ̄ + s|k|²)⁻¹`.
fn implicit_solve(op: &CellOperator, rhs: &[Spectrum; 2], s: f64) -> Result<[Spectrum; 2]> {
    let apply = |d: &[Spectrum; 2]| {
        let mut out = op.weighted_mass(d);
        for (oc, dc) in out.iter_mut().zip(d) {
            for (k, (o, z)) in oc.iter_mut().zip(dc).enumerate() {
                *o += z * (s * op.torus.k_sq(k));
            }
        }
        out
    };
    let precond = |r: &[Spectrum; 2]| {
        let mut z = r.clone();
        for comp in z.iter_mut() {
            for (k, v) in comp.iter_mut().enumerate() {
                let k2 = op.torus.k_sq(k);
                *v = if k2 > 0.0 { *v / (op.rho_mean + s * k2) } else { ZERO };
            }
        }
        z
    };
    let bnorm = dot(rhs, rhs).sqrt();
    let mut x = op.zeros();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..500 {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        if dot(&r, &r).sqrt() <= 1e-13 * bnorm {
            return Ok(x);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pc, zc) in p.iter_mut().zip(&z) {
            for (a, b) in pc.iter_mut().zip(zc) {
                *a = b + *a * beta;
            }
        }
    }
    Err(Error::Convergence {
        what: "cell implicit solve",
        iterations: 500,
        residual: dot(&r, &r).sqrt() / bnorm,
        history: Vec::new(),
    })
}

/// Effective fluxes `(𝔐(a(ξ+∇π)), 𝔐(b|ξ+∇π|^{p−2}(ξ+∇π)))` of a given
/// physical corrector field at `τ = 0`.
pub fn flux_for_field(spec: &CellProblemSpec, pi: &[Vec<f64>; 2]) -> Result<(Tensor2, Tensor2)> {
    spec.validate()?;
    let n = spec.resolution * spec.resolution;
    if pi[0].len() != n || pi[1].len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: pi[0].len().min(pi[1].len()),
        });
    }
    let op = CellOperator::new(spec)?;
    let spectra = [op.torus.forward(&pi[0]), op.torus.forward(&pi[1])];
    Ok(op.means(&op.total_gradient(&spectra)))
}

/// Outcome of repeated solves from random starting iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub trials: usize,
    /// Largest pairwise `‖∇π_i − ∇π_j‖₂ / max(‖∇π_i‖₂, |ξ|)`.
    pub max_distance: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub residuals: Vec<f64>,
}

/// Smooth divergence-free random field with modes `|k_i| ≤ 2`.
fn random_start(spec: &CellProblemSpec, rng: &mut ChaCha8Rng) -> [Vec<f64>; 2] {
    let m = spec.resolution;
    let d = spec.period / m as f64;
    let amp = spec.xi.norm().max(1.0) * spec.period / (2.0 * PI);
    let w = 2.0 * PI / spec.period;
    let mut out = [vec![0.0; m * m], vec![0.0; m * m]];
    for k1 in -2i32..=2 {
        for k2 in -2i32..=2 {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let coef: [f64; 4] = std::array::from_fn(|_| amp * rng.gen_range(-1.0..1.0));
            for j in 0..m {
                for i in 0..m {
                    let ph = w * (k1 as f64 * i as f64 * d + k2 as f64 * j as f64 * d);
                    let (s, c) = ph.sin_cos();
                    out[0][j * m + i] += coef[0] * c + coef[1] * s;
                    out[1][j * m + i] += coef[2] * c + coef[3] * s;
                }
            }
        }
    }
    out
}

/// Solves from `trials` random starting iterates and compares the gradients.
pub fn verify_uniqueness(spec: &CellProblemSpec, trials: usize, seed: u64) -> Result<UniquenessReport> {
    if trials < 2 {
        return Err(Error::arg("uniqueness check needs at least two trials"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sols = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = random_start(spec, &mut rng);
        sols.push(solve_corrector(&spec.clone().with_initial(start))?);
    }
    let xi = spec.xi.norm();
    let rms = |g: &[Tensor2]| (g.iter().map(|t| t.norm_sq()).sum::<f64>() / g.len() as f64).sqrt();
    let mut worst = 0.0_f64;
    for i in 0..trials {
        for j in (i + 1)..trials {
            let diff: Vec<Tensor2> = sols[i].grad_pi.iter().zip(&sols[j].grad_pi).map(|(a, b)| *a - *b).collect();
            let den = rms(&sols[i].grad_pi).max(xi);
            let dist = if den > 0.0 { rms(&diff) / den } else { rms(&diff) };
            worst = worst.max(dist);
        }
    }
    let tolerance = 1e-6;
    Ok(UniquenessReport {
        trials,
        max_distance: worst,
        tolerance,
        passed: worst <= tolerance,
        residuals: sols.iter().map(|s| s.residual).collect(),
    })
}
