//! One-dimensional cohesive interface pulled apart by a uniform separation.
//!
//! Each element follows a rigid–linear-softening law: traction starts at
//! `T_c` and decays linearly to zero at `δ_c = 2 G_c / T_c`. Unloading and
//! reloading follow the secant to the origin. Strength and fracture energy
//! are random fields built from Gaussian processes mapped to `(-1, 1)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SolverPair;
use crate::error::{Error, Result};
use crate::special::normal_cdf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohesiveConfig {
    pub t0: f64,
    pub dt0: f64,
    pub g0: f64,
    pub dg0: f64,
    /// Cross-dependence of fracture energy on the strength field.
    pub rho: f64,
    /// Correlation length of the strength field.
    pub z0: f64,
    /// Fine (exact) mesh size; also the field grid.
    pub n_elements: usize,
    /// Coarse (approximate) mesh size.
    pub n_coarse: usize,
    pub delta_max: f64,
    pub delta_increment: f64,
    pub coarse_increment: f64,
}

impl Default for CohesiveConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            dt0: 0.5,
            g0: 1e-3,
            dg0: 0.5e-3,
            rho: 0.9,
            z0: 0.1,
            n_elements: 1000,
            n_coarse: 10,
            delta_max: 0.5e-3,
            delta_increment: 0.5e-6,
            coarse_increment: 0.5e-5,
        }
    }
}

impl CohesiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.t0 > 0.0 && self.g0 > 0.0 && self.z0 > 0.0) {
            return bad("t0, g0 and z0 must be positive".into());
        }
        if !(self.dt0 >= 0.0 && self.dt0 < self.t0) {
            return bad(format!("need 0 <= dt0 < t0, got dt0 = {}", self.dt0));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [-1, 1], got {}", self.rho));
        }
        if !(self.dg0 >= 0.0 && self.dg0 * (self.rho.abs() + 1.0) < self.g0) {
            return bad("need dg0 (|rho| + 1) < g0 so that fracture energy stays positive".into());
        }
        if self.n_elements < 2 || self.n_coarse == 0 || self.n_elements % self.n_coarse != 0 {
            return bad(format!(
                "n_coarse ({}) must divide n_elements ({}) and n_elements >= 2",
                self.n_coarse, self.n_elements
            ));
        }
        for (name, inc) in [("delta_increment", self.delta_increment), ("coarse_increment", self.coarse_increment)] {
            if !(inc > 0.0 && inc <= self.delta_max) {
                return bad(format!("{name} must lie in (0, delta_max]"));
            }
        }
        Ok(())
    }
}

/// One draw of the random fields at the fine-element midpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRealization {
    /// Correlated Gaussian field behind the strength.
    pub h1: Vec<f64>,
    /// White-noise field.
    pub h2: Vec<f64>,
    pub strength: Vec<f64>,
    pub energy: Vec<f64>,
}

/// Sample both fields on `n_grid` midpoints of `[0, 1]`.
pub fn sample_fields<R: Rng + ?Sized>(cfg: &CohesiveConfig, n_grid: usize, rng: &mut R) -> Result<FieldRealization> {
    cfg.validate()?;
    if n_grid < 2 {
        return Err(Error::InvalidParameter("field grid needs at least two points".into()));
    }
    let dz = 1.0 / n_grid as f64;
    let phi = (-dz / cfg.z0).exp();
    let innov = (1.0 - phi * phi).sqrt();
    let mut h1 = Vec::with_capacity(n_grid);
    let mut h = rng.sample::<f64, _>(StandardNormal);
    h1.push(h);
    for _ in 1..n_grid {
        h = phi * h + innov * rng.sample::<f64, _>(StandardNormal);
        h1.push(h);
    }
    let h2: Vec<f64> = (0..n_grid).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Ok(fields_from_gaussians(cfg, h1, h2))
}

/// Map the Gaussian fields to strength and fracture energy.
pub fn fields_from_gaussians(cfg: &CohesiveConfig, h1: Vec<f64>, h2: Vec<f64>) -> FieldRealization {
    let u = |h: f64| 2.0 * normal_cdf(h) - 1.0;
    let strength = h1.iter().map(|&h| cfg.t0 + cfg.dt0 * u(h)).collect();
    let energy = h1.iter().zip(&h2).map(|(&a, &b)| cfg.g0 + cfg.dg0 * (cfg.rho * u(a) + u(b))).collect();
    FieldRealization { h1, h2, strength, energy }
}

/// State of a single cohesive element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CohesiveElement {
    strength: f64,
    critical_opening: f64,
    /// Current opening and traction.
    pub opening: f64,
    pub traction: f64,
    /// Largest opening reached so far.
    pub max_opening: f64,
    /// Work done on the element, `∫ T dδ`.
    pub work: f64,
}

impl CohesiveElement {
    pub fn new(strength: f64, fracture_energy: f64) -> Self {
        Self {
            strength,
            critical_opening: 2.0 * fracture_energy / strength,
            opening: 0.0,
            traction: strength,
            max_opening: 0.0,
            work: 0.0,
        }
    }

    pub fn critical_opening(&self) -> f64 {
        self.critical_opening
    }

    fn envelope(&self, delta: f64) -> f64 {
        (self.strength * (1.0 - delta / self.critical_opening)).max(0.0)
    }

    /// Traction on the unloading/reloading secant through the origin.
    fn secant(&self, delta: f64) -> f64 {
        if self.max_opening > 0.0 {
            self.envelope(self.max_opening) * delta / self.max_opening
        } else {
            self.strength
        }
    }

    fn traction_at(&self, delta: f64) -> f64 {
        if delta >= self.max_opening {
            self.envelope(delta)
        } else {
            self.secant(delta)
        }
    }

    /// Move to opening `target` (≥ 0). The path is split at the points where
    /// the traction law changes slope, so the trapezoid sums are exact.
    pub fn advance(&mut self, target: f64) {
        let target = target.max(0.0);
        let (lo, hi) = if target >= self.opening { (self.opening, target) } else { (target, self.opening) };
        let mut knots = [lo, hi, hi, hi];
        let mut m = 1;
        for kink in [self.max_opening, self.critical_opening] {
            if kink > lo && kink < hi {
                knots[m] = kink;
                m += 1;
            }
        }
        knots[m] = hi;
        knots[..=m].sort_by(f64::total_cmp);
        let loading = target >= self.opening;
        let mut area = 0.0;
        for w in knots[..=m].windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ta, tb) = if loading && a >= self.max_opening {
                (self.envelope(a), self.envelope(b))
            } else {
                (self.secant(a), self.secant(b))
            };
            area += 0.5 * (ta + tb) * (b - a);
        }
        if loading {
            self.work += area;
            self.max_opening = self.max_opening.max(target);
        } else {
            self.work -= area;
        }
        self.opening = target;
        self.traction = self.traction_at(target);
    }
}

/// Energy released by elements with the given properties under a uniform
/// separation ramp to `delta_max`, per unit interface length.
pub fn released_energy(strength: &[f64], energy: &[f64], delta_max: f64, increment: f64) -> f64 {
    let steps = (delta_max / increment).round().max(1.0) as usize;
    let mut total = 0.0;
    for (&t, &g) in strength.iter().zip(energy) {
        let mut el = CohesiveElement::new(t, g);
        for s in 1..=steps {
            el.advance(delta_max * s as f64 / steps as f64);
        }
        total += el.work;
    }
    total / strength.len() as f64
}

/// Closed-form work of one element loaded monotonically to `delta`.
pub fn element_energy_closed_form(strength: f64, fracture_energy: f64, delta: f64) -> f64 {
    let dc = 2.0 * fracture_energy / strength;
    if delta >= dc {
        fracture_energy
    } else {
        strength * (delta - delta * delta / (2.0 * dc))
    }
}

/// Fine-mesh solver output.
pub fn exact_solve(real: &FieldRealization, cfg: &CohesiveConfig) -> f64 {
    released_energy(&real.strength, &real.energy, cfg.delta_max, cfg.delta_increment)
}

/// Coarse-mesh solver output: each macro-element takes the minimum strength
/// and the mean fracture energy of the fine elements it replaces.
pub fn approx_solve(real: &FieldRealization, cfg: &CohesiveConfig) -> Result<f64> {
    let n = real.strength.len();
    if cfg.n_coarse == 0 || n % cfg.n_coarse != 0 {
        return Err(Error::InvalidConfig(format!("{} coarse elements do not divide {n}", cfg.n_coarse)));
    }
    let block = n / cfg.n_coarse;
    let strength: Vec<f64> =
        real.strength.chunks(block).map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let energy: Vec<f64> = real.energy.chunks(block).map(|c| c.iter().sum::<f64>() / block as f64).collect();
    Ok(released_energy(&strength, &energy, cfg.delta_max, cfg.coarse_increment))
}

/// The cohesive interface as a solver pair with one predictor.
#[derive(Clone, Debug)]
pub struct CohesiveProblem {
    pub config: CohesiveConfig,
}

impl CohesiveProblem {
    pub fn new(config: CohesiveConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl SolverPair for CohesiveProblem {
    type Input = FieldRealization;

    fn dim(&self) -> usize {
        1
    }

    fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldRealization {
        sample_fields(&self.config, self.config.n_elements, rng).expect("validated config")
    }

    fn approximate(&self, input: &FieldRealization) -> Vec<f64> {
        vec![approx_solve(input, &self.config).expect("validated config")]
    }

    fn exact(&self, input: &FieldRealization) -> f64 {
        exact_solve(input, &self.config)
    }
}
