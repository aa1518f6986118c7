//! Effective constitutive law `F(ξ) = mξ + M(ξ)`, either in closed form for
//! homogeneous coefficients or tabulated on a lattice of corrector solves.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_corrector, spatial_periodic_approximation, CellProblemSpec, SolverSettings, TimeMode};
use crate::ap_field::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::stress;
use crate::tensor::{Sym2, Tensor2};

pub const LAW_SCHEMA: &str = "ladyfx/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawMode {
    /// `F(ξ) = aξ + b|ξ|^{p−2}ξ` for constant `a`, `b`.
    Homogeneous,
    /// Multilinear interpolation between corrector solves on the lattice
    /// `step·ℤ⁴`; missing nodes are solved on demand when `fallback` is set.
    Tabulated { step: f64, fallback: bool },
}

/// How a tabulated law is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LawSettings {
    pub step: f64,
    pub fallback: bool,
    /// Torus resolution of each corrector solve.
    pub resolution: usize,
    /// Period denominator of the spatial periodic approximation.
    pub q: usize,
    pub solver: SolverSettings,
    pub time_mode: TimeMode,
}

impl Default for LawSettings {
    fn default() -> Self {
        LawSettings {
            step: 0.05,
            fallback: true,
            resolution: 16,
            q: 1,
            solver: SolverSettings::default(),
            time_mode: TimeMode::Steady,
        }
    }
}

/// Solved fluxes at one lattice node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeValue {
    pub m: Tensor2,
    pub big_m: Tensor2,
    pub residual: f64,
}

impl NodeValue {
    pub fn flux(&self) -> Tensor2 {
        self.m + self.big_m
    }

    fn same_payload(&self, other: &NodeValue) -> bool {
        let bits = |t: &Tensor2| t.to_array().map(f64::to_bits);
        bits(&self.m) == bits(&other.m) && bits(&self.big_m) == bits(&other.big_m)
    }
}

#[derive(Debug, Clone, Copy)]
struct Closed {
    a: Sym2,
    b: f64,
}

pub struct EffectiveLaw {
    mode: LawMode,
    p: f64,
    nu0: f64,
    a_sup: f64,
    b_sup: f64,
    resolution: usize,
    period: f64,
    closed: Option<Closed>,
    template: Option<CellProblemSpec>,
    table: RwLock<BTreeMap<[i64; 4], NodeValue>>,
    exact: RwLock<HashMap<[u64; 4], NodeValue>>,
    solves: AtomicUsize,
}

impl std::fmt::Debug for EffectiveLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EffectiveLaw")
            .field("mode", &self.mode)
            .field("p", &self.p)
            .field("nodes", &self.node_count())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct LawRow {
    xi: [f64; 4],
    m: [f64; 4],
    #[serde(rename = "M")]
    big_m: [f64; 4],
    residual: f64,
    resolution: usize,
    #[serde(rename = "Q")]
    q: f64,
}

#[derive(Serialize, Deserialize)]
struct LawFile {
    schema: String,
    mode: LawMode,
    p: f64,
    nu0: f64,
    a_sup: f64,
    b_sup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constant: Option<[f64; 4]>,
    rows: Vec<LawRow>,
}

/// Result of the sampled monotonicity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub pairs: usize,
    /// Smallest `(F(ξ₁)−F(ξ₂)):(ξ₁−ξ₂) − ν₀|ξ₁−ξ₂|²`.
    pub min_margin: f64,
    pub passed: bool,
}

impl EffectiveLaw {
    /// Closed-form law of coefficients without any oscillation.
    pub fn homogeneous(coeffs: &CoefficientSet) -> Result<Self> {
        if !coeffs.is_homogeneous() {
            return Err(Error::arg("closed-form law needs constant coefficients"));
        }
        let a = coeffs.a();
        let closed = Closed {
            a: Sym2::new(a[0].mean_value(), a[1].mean_value(), a[2].mean_value()),
            b: coeffs.b().mean_value(),
        };
        Ok(EffectiveLaw {
            mode: LawMode::Homogeneous,
            p: coeffs.p(),
            nu0: coeffs.bounds().nu0,
            a_sup: coeffs.a_sup(),
            b_sup: coeffs.b_sup(),
            resolution: 0,
            period: 1.0,
            closed: Some(closed),
            template: None,
            table: RwLock::new(BTreeMap::new()),
            exact: RwLock::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        })
    }

    /// Tabulated law of (almost-)periodic coefficients; returns the law and
    /// the frequency perturbation of the periodic approximation.
    pub fn tabulated(coeffs: &CoefficientSet, settings: &LawSettings) -> Result<(Self, f64)> {
        if !(settings.step > 0.0 && settings.step.is_finite()) {
            return Err(Error::arg("lattice step must be positive"));
        }
        let (set, delta) = spatial_periodic_approximation(coeffs, settings.q)?;
        let spec = CellProblemSpec::new(Tensor2::ZERO, set, settings.q as f64, settings.resolution)?
            .with_settings(settings.solver)
            .with_time_mode(settings.time_mode);
        let law = EffectiveLaw {
            mode: LawMode::Tabulated {
                step: settings.step,
                fallback: settings.fallback,
            },
            p: coeffs.p(),
            nu0: coeffs.bounds().nu0,
            a_sup: coeffs.a_sup(),
            b_sup: coeffs.b_sup(),
            resolution: settings.resolution,
            period: spec.period,
            closed: None,
            template: Some(spec),
            table: RwLock::new(BTreeMap::new()),
            exact: RwLock::new(HashMap::new()),
            solves: AtomicUsize::new(0),
        };
        Ok((law, delta))
    }

    /// Closed form when the coefficients are constant, a table otherwise.
    pub fn build(coeffs: &CoefficientSet, settings: &LawSettings) -> Result<(Self, f64)> {
        if coeffs.is_homogeneous() {
            Ok((EffectiveLaw::homogeneous(coeffs)?, 0.0))
        } else {
            EffectiveLaw::tabulated(coeffs, settings)
        }
    }

    pub fn mode(&self) -> LawMode {
        self.mode
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn node_count(&self) -> usize {
        self.table.read().expect("law table lock").len()
    }

    /// Number of corrector solves performed by this law.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Copy of the table sharing no state with `self`.
    pub fn snapshot_table(&self) -> BTreeMap<[i64; 4], NodeValue> {
        self.table.read().expect("law table lock").clone()
    }

    fn step(&self) -> f64 {
        match self.mode {
            LawMode::Tabulated { step, .. } => step,
            LawMode::Homogeneous => 0.0,
        }
    }

    pub fn node_xi(&self, key: [i64; 4]) -> Tensor2 {
        let s = self.step();
        Tensor2::from_array(key.map(|k| k as f64 * s))
    }

    fn solve_at(&self, xi: Tensor2) -> Result<NodeValue> {
        let spec = self
            .template
            .as_ref()
            .ok_or_else(|| Error::arg("law has no coefficients to solve new correctors"))?
            .clone()
            .with_xi(xi);
        let sol = solve_corrector(&spec)?;
        self.solves.fetch_add(1, Ordering::Relaxed);
        Ok(NodeValue {
            m: sol.m_xi,
            big_m: sol.big_m_xi,
            residual: sol.residual,
        })
    }

    /// `(mξ, M(ξ))` from an exact corrector solve; cached per `ξ`.
    pub fn effective_flux(&self, xi: Tensor2) -> Result<(Tensor2, Tensor2)> {
        if let Some(c) = self.closed {
            return Ok((c.a.apply(&xi), stress(&Sym2::scalar(0.0), c.b, self.p, &xi)));
        }
        let key = xi.to_array().map(f64::to_bits);
        if let Some(v) = self.exact.read().expect("law cache lock").get(&key) {
            return Ok((v.m, v.big_m));
        }
        let v = self.solve_at(xi)?;
        self.exact.write().expect("law cache lock").insert(key, v);
        Ok((v.m, v.big_m))
    }

    /// Inserts a solved node; re-inserting a key must carry the same payload.
    pub fn insert_node(&self, key: [i64; 4], value: NodeValue) -> Result<()> {
        let mut t = self.table.write().expect("law table lock");
        match t.get(&key) {
            Some(old) if !old.same_payload(&value) => Err(Error::PropertyViolation(format!(
                "conflicting payloads for lattice node {key:?}"
            ))),
            _ => {
                t.insert(key, value);
                Ok(())
            }
        }
    }

    /// Interpolation corners with non-zero weight.
    fn corners(&self, xi: &Tensor2) -> Vec<([i64; 4], f64)> {
        let s = self.step();
        let a = xi.to_array();
        let mut base = [0i64; 4];
        let mut frac = [0.0; 4];
        for d in 0..4 {
            let r = a[d] / s;
            let f = r.floor();
            base[d] = f as i64;
            frac[d] = r - f;
        }
        let mut out = vec![(base, 1.0)];
        for d in 0..4 {
            if frac[d] == 0.0 {
                continue;
            }
            let mut next = Vec::with_capacity(out.len() * 2);
            for (k, w) in out {
                next.push((k, w * (1.0 - frac[d])));
                let mut up = k;
                up[d] += 1;
                next.push((up, w * frac[d]));
            }
            out = next;
        }
        out
    }

    /// Makes sure every lattice node needed for `xis` is in the table,
    /// solving missing ones in parallel when the fallback is enabled.
    pub fn prefetch(&self, xis: &[Tensor2]) -> Result<()> {
        let LawMode::Tabulated { fallback, .. } = self.mode else {
            return Ok(());
        };
        let missing: BTreeSet<[i64; 4]> = {
            let t = self.table.read().expect("law table lock");
            xis.iter()
                .flat_map(|xi| self.corners(xi))
                .map(|(k, _)| k)
                .filter(|k| !t.contains_key(k))
                .collect()
        };
        if missing.is_empty() {
            return Ok(());
        }
        if !fallback {
            return Err(Error::Coverage {
                missing: missing.into_iter().collect(),
            });
        }
        let keys: Vec<[i64; 4]> = missing.into_iter().collect();
        let solved: Vec<([i64; 4], NodeValue)> = keys
            .par_iter()
            .map(|&k| self.solve_at(self.node_xi(k)).map(|v| (k, v)))
            .collect::<Result<_>>()?;
        for (k, v) in solved {
            self.insert_node(k, v)?;
        }
        Ok(())
    }

    /// `F(ξ)`: closed form, or multilinear interpolation of the table.
    pub fn flux(&self, xi: Tensor2) -> Result<Tensor2> {
        let mut out = [Tensor2::ZERO];
        self.fluxes(&[xi], &mut out)?;
        Ok(out[0])
    }

    /// `F` on a batch of gradients.
    pub fn fluxes(&self, xis: &[Tensor2], out: &mut [Tensor2]) -> Result<()> {
        if let Some(c) = self.closed {
            for (o, xi) in out.iter_mut().zip(xis) {
                *o = stress(&c.a, c.b, self.p, xi);
            }
            return Ok(());
        }
        self.prefetch(xis)?;
        let t = self.table.read().expect("law table lock");
        for (o, xi) in out.iter_mut().zip(xis) {
            let mut acc = Tensor2::ZERO;
            for (k, w) in self.corners(xi) {
                let v = t.get(&k).ok_or_else(|| Error::Coverage { missing: vec![k] })?;
                acc += v.flux() * w;
            }
            *o = acc;
        }
        Ok(())
    }

    /// A-priori Lipschitz bound of `F` on `|ξ| ≤ gmax`.
    pub fn lipschitz_bound(&self, gmax: f64) -> f64 {
        let w = if self.p == 2.0 { 1.0 } else { gmax.max(0.0).powf(self.p - 2.0) };
        self.a_sup + (self.p - 1.0) * self.b_sup * w
    }

    /// Largest `|ΔF|/step` over lattice edges present in the table.
    pub fn measured_lipschitz(&self) -> Option<f64> {
        let s = self.step();
        let t = self.table.read().expect("law table lock");
        let mut worst: Option<f64> = None;
        for (k, v) in t.iter() {
            for d in 0..4 {
                let mut up = *k;
                up[d] += 1;
                if let Some(u) = t.get(&up) {
                    let l = (u.flux() - v.flux()).norm() / s;
                    worst = Some(worst.map_or(l, |w: f64| w.max(l)));
                }
            }
        }
        worst
    }

    /// Checks `(F(ξ₁)−F(ξ₂)):(ξ₁−ξ₂) ≥ ν₀|ξ₁−ξ₂|² − tol` on random pairs of
    /// cached nodes (or of random gradients for the closed form).
    pub fn monotonicity_check(&self, pairs: usize, tol: f64, seed: u64) -> Result<MonotonicityReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<(Tensor2, Tensor2)> = match self.mode {
            LawMode::Homogeneous => (0..2 * pairs)
                .map(|_| {
                    let xi = Tensor2::from_array(std::array::from_fn(|_| rng.gen_range(-2.0..2.0)));
                    self.flux(xi).map(|f| (xi, f))
                })
                .collect::<Result<_>>()?,
            LawMode::Tabulated { .. } => {
                let t = self.table.read().expect("law table lock");
                t.iter().map(|(k, v)| (self.node_xi(*k), v.flux())).collect()
            }
        };
        if points.len() < 2 {
            return Err(Error::arg("monotonicity check needs at least two cached nodes"));
        }
        let mut min_margin = f64::INFINITY;
        for _ in 0..pairs {
            let i = rng.gen_range(0..points.len());
            let mut j = rng.gen_range(0..points.len() - 1);
            if j >= i {
                j += 1;
            }
            let dxi = points[i].0 - points[j].0;
            let df = points[i].1 - points[j].1;
            min_margin = min_margin.min(df.ddot(&dxi) - self.nu0 * dxi.norm_sq());
        }
        Ok(MonotonicityReport {
            pairs,
            min_margin,
            passed: min_margin >= -tol,
        })
    }

    /// Serializes the law as a "ladyfx/1" document with rows in key order.
    pub fn to_json(&self) -> Result<String> {
        let rows = self
            .table
            .read()
            .expect("law table lock")
            .iter()
            .map(|(k, v)| LawRow {
                xi: self.node_xi(*k).to_array(),
                m: v.m.to_array(),
                big_m: v.big_m.to_array(),
                residual: v.residual,
                resolution: self.resolution,
                q: self.period,
            })
            .collect();
        let file = LawFile {
            schema: LAW_SCHEMA.to_string(),
            mode: self.mode,
            p: self.p,
            nu0: self.nu0,
            a_sup: self.a_sup,
            b_sup: self.b_sup,
            constant: self.closed.map(|c| [c.a.a11, c.a.a12, c.a.a22, c.b]),
            rows,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Reads a "ladyfx/1" document. With `coeffs` the law can solve missing
    /// nodes (when its fallback flag allows it); without, it is table-only.
    pub fn from_json(text: &str, coeffs: Option<&CoefficientSet>, settings: Option<&LawSettings>) -> Result<Self> {
        let file: LawFile = serde_json::from_str(text)?;
        if file.schema != LAW_SCHEMA {
            return Err(Error::Format(format!("expected schema {LAW_SCHEMA}, found {}", file.schema)));
        }
        match file.mode {
            LawMode::Homogeneous => {
                let c = file
                    .constant
                    .ok_or_else(|| Error::Format("homogeneous law without constant coefficients".into()))?;
                Ok(EffectiveLaw {
                    mode: LawMode::Homogeneous,
                    p: file.p,
                    nu0: file.nu0,
                    a_sup: file.a_sup,
                    b_sup: file.b_sup,
                    resolution: 0,
                    period: 1.0,
                    closed: Some(Closed {
                        a: Sym2::new(c[0], c[1], c[2]),
                        b: c[3],
                    }),
                    template: None,
                    table: RwLock::new(BTreeMap::new()),
                    exact: RwLock::new(HashMap::new()),
                    solves: AtomicUsize::new(0),
                })
            }
            LawMode::Tabulated { step, fallback } => {
                let law = match coeffs {
                    Some(c) => {
                        let mut s = settings.copied().unwrap_or_default();
                        s.step = step;
                        s.fallback = fallback;
                        if settings.is_none() {
                            if let Some(r) = file.rows.first() {
                                s.resolution = r.resolution;
                                s.q = r.q.round().max(1.0) as usize;
                            }
                        }
                        EffectiveLaw::tabulated(c, &s)?.0
                    }
                    None => EffectiveLaw {
                        mode: LawMode::Tabulated { step, fallback: false },
                        p: file.p,
                        nu0: file.nu0,
                        a_sup: file.a_sup,
                        b_sup: file.b_sup,
                        resolution: file.rows.first().map_or(0, |r| r.resolution),
                        period: file.rows.first().map_or(1.0, |r| r.q),
                        closed: None,
                        template: None,
                        table: RwLock::new(BTreeMap::new()),
                        exact: RwLock::new(HashMap::new()),
                        solves: AtomicUsize::new(0),
                    },
                };
                for row in &file.rows {
                    let key = row.xi.map(|x| (x / step).round() as i64);
                    law.insert_node(
                        key,
                        NodeValue {
                            m: Tensor2::from_array(row.m),
                            big_m: Tensor2::from_array(row.big_m),
                            residual: row.residual,
                        },
                    )?;
                }
                Ok(law)
            }
        }
    }
}
