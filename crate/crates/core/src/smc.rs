//! Adaptive sequential Monte Carlo over a growing training set.
//!
//! Data are assimilated one pair at a time. For each new pair the population
//! is moved from the posterior on `n` points to the posterior on `n + 1`
//! points through tempered bridging targets
//! `π_γ(θ) ∝ p(θ) · L(SSE_n(θ) + γ r², n + γ)`, where `r` is the residual of
//! the new pair. Each bridging step picks the next `γ` so the effective sample
//! size drops by the factor `ζ`, reweighs, resamples when the ESS falls below
//! `ESS_min`, and rejuvenates every particle with the reversible-jump kernel.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    log_tempered_from_sse, sample_prior, Hyperparameters, KernelExpansion, Rescale, TrainingSet,
};
use crate::rjmcmc::{adapt_steps, sweep, Delta, Likelihood, MoveConfig, MoveStats};
use crate::rng::{StreamState, SERIAL_LANE};
use crate::special::ln_gamma;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcConfig {
    pub n_particles: usize,
    /// Per-step ESS reduction factor.
    pub zeta: f64,
    /// Resampling threshold as a fraction of `n_particles`.
    pub ess_min_fraction: f64,
    /// Rejuvenation sweeps per bridging step.
    pub n_sweeps: usize,
    pub max_bridging_steps: usize,
    /// Tune random-walk scales between bridging steps.
    pub adapt: bool,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            zeta: 0.95,
            ess_min_fraction: 0.5,
            n_sweeps: 5,
            max_bridging_steps: 10_000,
            adapt: true,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::InvalidParameter("at least two particles are required".into()));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::InvalidParameter(format!("zeta must lie in (0,1), got {}", self.zeta)));
        }
        if !(self.ess_min_fraction > 0.0 && self.ess_min_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ess_min_fraction must lie in (0,1], got {}",
                self.ess_min_fraction
            )));
        }
        if self.n_sweeps == 0 {
            return Err(Error::InvalidParameter("n_sweeps must be at least 1".into()));
        }
        if self.max_bridging_steps == 0 {
            return Err(Error::InvalidParameter("max_bridging_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// A weighted parameter vector with cached residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub theta: KernelExpansion,
    pub log_weight: f64,
    /// `y_i - f(x_i; θ)` on the assimilated data.
    residuals: Vec<f64>,
    pub sse: f64,
    /// Residual on the pair being bridged (0 when none is pending).
    next_residual: f64,
}

impl Particle {
    fn new(theta: KernelExpansion, data: &TrainingSet) -> Self {
        let mut p = Self { theta, log_weight: 0.0, residuals: Vec::new(), sse: 0.0, next_residual: 0.0 };
        p.refresh(data, None);
        p
    }

    /// Recompute all caches from `theta`.
    fn refresh(&mut self, data: &TrainingSet, pending: Option<&Pending>) {
        self.residuals.clear();
        self.residuals.extend((0..data.len()).map(|i| data.y[i] - self.theta.evaluate(data.point(i))));
        self.sse = self.residuals.iter().map(|r| r * r).sum();
        self.next_residual = pending.map_or(0.0, |p| p.y - self.theta.evaluate(&p.x));
    }

    pub fn next_residual_sq(&self) -> f64 {
        self.next_residual * self.next_residual
    }

    fn log_tempered(&self, n: usize, gamma: f64, hyper: &Hyperparameters) -> f64 {
        log_tempered_from_sse(self.sse, n, self.next_residual_sq(), gamma, hyper)
    }
}

/// The pair currently being bridged, already mapped into the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub x: Vec<f64>,
    pub y: f64,
}

/// One bridging step of the history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeRecord {
    /// Number of data assimilated before this pair.
    pub datum: usize,
    pub gamma: f64,
    pub ess_before: f64,
    /// ESS right after reweighing, before any resampling.
    pub ess_after: f64,
    pub resampled: bool,
}

/// Per-datum summary written after each pair is assimilated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatumSummary {
    /// Number of data after assimilation.
    pub n: usize,
    pub bridging_steps: usize,
    pub resamples: usize,
    pub min_ess: f64,
    pub final_ess: f64,
    pub stats: MoveStats,
    pub mean_k: f64,
    pub mean_sigma: f64,
    pub clamped: bool,
}

/// Result of a temperature search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaStep {
    pub gamma: f64,
    pub ess_target: f64,
    /// ESS of the population reweighed to `gamma`.
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub particles: Vec<Particle>,
    pub data: TrainingSet,
    pub pending: Option<Pending>,
    pub gamma: f64,
    pub hyper: Hyperparameters,
    pub move_cfg: MoveConfig,
    pub config: SmcConfig,
    pub stream: StreamState,
    pub history: Vec<BridgeRecord>,
    pub summaries: Vec<DatumSummary>,
}

/// Incremental tempered likelihood for one particle. Proposals update the
/// residual vector in O(n) without re-evaluating the whole expansion.
struct ResidualLikelihood<'a> {
    data: &'a TrainingSet,
    next_x: Option<&'a [f64]>,
    gamma: f64,
    hyper: &'a Hyperparameters,
    residuals: &'a mut Vec<f64>,
    sse: &'a mut f64,
    next_residual: &'a mut f64,
    current: f64,
    staged: Vec<f64>,
    staged_sse: f64,
    staged_next: f64,
    staged_ll: f64,
}

impl<'a> ResidualLikelihood<'a> {
    fn new(p: &'a mut Particle, data: &'a TrainingSet, pending: Option<&'a Pending>, gamma: f64, hyper: &'a Hyperparameters) -> Self {
        let current = p.log_tempered(data.len(), gamma, hyper);
        Self {
            data,
            next_x: pending.map(|p| p.x.as_slice()),
            gamma,
            hyper,
            residuals: &mut p.residuals,
            sse: &mut p.sse,
            next_residual: &mut p.next_residual,
            current,
            staged: Vec::with_capacity(data.len()),
            staged_sse: 0.0,
            staged_next: 0.0,
            staged_ll: 0.0,
        }
    }
}

impl Likelihood for ResidualLikelihood<'_> {
    fn log_current(&self) -> f64 {
        self.current
    }

    fn log_proposed(&mut self, _: &KernelExpansion, delta: &Delta<'_>) -> f64 {
        self.staged.clear();
        let mut sse = 0.0;
        for (i, r) in self.residuals.iter().enumerate() {
            let r_new = r - delta.eval(self.data.point(i));
            sse += r_new * r_new;
            self.staged.push(r_new);
        }
        self.staged_sse = sse;
        self.staged_next = match self.next_x {
            Some(x) => *self.next_residual - delta.eval(x),
            None => 0.0,
        };
        self.staged_ll = log_tempered_from_sse(
            sse,
            self.data.len(),
            self.staged_next * self.staged_next,
            self.gamma,
            self.hyper,
        );
        self.staged_ll
    }

    fn accept(&mut self) {
        std::mem::swap(self.residuals, &mut self.staged);
        *self.sse = self.staged_sse;
        *self.next_residual = self.staged_next;
        self.current = self.staged_ll;
    }
}

/// Normalized weights from log-weights via log-sum-exp.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if log_weights.iter().any(|w| w.is_nan()) {
        return Err(Error::NonFinite("log-weight is NaN".into()));
    }
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let mut w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// `1 / Σ W²` for normalized `W`.
pub fn ess_of(log_weights: &[f64]) -> Result<f64> {
    let w = normalize_log_weights(log_weights)?;
    Ok(1.0 / w.iter().map(|v| v * v).sum::<f64>())
}

/// Indices drawn i.i.d. from `weights` (normalized).
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let total = acc;
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cumulative.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}

/// `E[σ]` when `σ⁻² ~ Gamma(shape, rate)`.
pub fn expected_sigma(shape: f64, rate: f64) -> f64 {
    (rate.ln() * 0.5 + ln_gamma(shape - 0.5) - ln_gamma(shape)).exp()
}

impl Population {
    /// Draw `config.n_particles` i.i.d. prior particles with equal weights.
    pub fn new(
        hyper: Hyperparameters,
        move_cfg: MoveConfig,
        config: SmcConfig,
        rescale: Rescale,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        move_cfg.validate()?;
        config.validate()?;
        if rescale.dim() != hyper.dim {
            return Err(Error::DimensionMismatch { expected: hyper.dim, got: rescale.dim() });
        }
        let data = TrainingSet::empty(rescale);
        let mut stream = StreamState::new(seed);
        let step = stream.next_step();
        let particles = (0..config.n_particles)
            .map(|i| {
                let mut rng = stream.lane(step, i as u64);
                Particle::new(sample_prior(&hyper, &mut rng), &data)
            })
            .collect();
        Ok(Self {
            particles,
            data,
            pending: None,
            gamma: 0.0,
            hyper,
            move_cfg,
            config,
            stream,
            history: Vec::new(),
            summaries: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn n_assimilated(&self) -> usize {
        self.data.len()
    }

    fn log_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }

    pub fn weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(&self.log_weights())
    }

    pub fn ess(&self) -> Result<f64> {
        ess_of(&self.log_weights())
    }

    /// Weighted mean of `h` and an ESS-based standard error.
    pub fn estimate(&self, h: impl Fn(&Particle) -> f64) -> Result<(f64, f64)> {
        let w = self.weights()?;
        let values: Vec<f64> = self.particles.iter().map(h).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("test function value".into()));
        }
        let mean: f64 = w.iter().zip(&values).map(|(w, v)| w * v).sum();
        let var: f64 = w.iter().zip(&values).map(|(w, v)| w * (v - mean).powi(2)).sum();
        let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
        Ok((mean, (var / ess).sqrt()))
    }

    /// Posterior `(shape, rate)` of `σ⁻²` for one particle on the assimilated data.
    pub fn noise_posterior(&self, p: &Particle) -> (f64, f64) {
        (
            self.hyper.a_noise + 0.5 * self.data.len() as f64,
            self.hyper.b_noise + 0.5 * p.sse,
        )
    }

    /// Weighted posterior mean of σ, integrating σ analytically per particle.
    pub fn mean_sigma(&self) -> Result<f64> {
        self.estimate(|p| {
            let (shape, rate) = self.noise_posterior(p);
            expected_sigma(shape, rate)
        })
        .map(|(m, _)| m)
    }

    /// Weighted histogram of `k` (index = k).
    pub fn k_histogram(&self) -> Result<Vec<f64>> {
        let w = self.weights()?;
        let kmax = self.particles.iter().map(|p| p.theta.k()).max().unwrap_or(0);
        let mut hist = vec![0.0; kmax + 1];
        for (p, w) in self.particles.iter().zip(&w) {
            hist[p.theta.k()] += w;
        }
        Ok(hist)
    }

    /// Start bridging toward a new (already rescaled) pair.
    pub fn begin(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.hyper.dim {
            return Err(Error::DimensionMismatch { expected: self.hyper.dim, got: x.len() });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training pair".into()));
        }
        let pending = Pending { x, y };
        for p in &mut self.particles {
            p.next_residual = pending.y - p.theta.evaluate(&pending.x);
        }
        self.pending = Some(pending);
        self.gamma = 0.0;
        Ok(())
    }

    fn increments(&self, gamma_new: f64) -> Vec<f64> {
        let n = self.data.len();
        self.particles
            .iter()
            .map(|p| p.log_tempered(n, gamma_new, &self.hyper) - p.log_tempered(n, self.gamma, &self.hyper))
            .collect()
    }

    fn ess_at(&self, gamma_new: f64) -> Result<f64> {
        let lw: Vec<f64> = self
            .increments(gamma_new)
            .iter()
            .zip(&self.particles)
            .map(|(d, p)| p.log_weight + d)
            .collect();
        ess_of(&lw)
    }

    /// Largest admissible next temperature: 1 when the ESS stays above
    /// `ζ·ESS`, otherwise a bisection point whose ESS is certified ≥ target.
    pub fn next_gamma(&self) -> Result<GammaStep> {
        if self.pending.is_none() {
            return Err(Error::InvalidParameter("no pending pair to bridge toward".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::GammaOutOfRange(self.gamma));
        }
        let target = self.config.zeta * self.ess()?;
        let ess_one = self.ess_at(1.0)?;
        if ess_one >= target {
            return Ok(GammaStep { gamma: 1.0, ess_target: target, ess: ess_one });
        }
        let (mut lo, mut hi) = (self.gamma, 1.0);
        let mut ess_lo = self.ess()?;
        // Tolerance relative to the bracket width keeps progress when the
        // admissible increment is far below 1e-6.
        for _ in 0..60 {
            if hi - lo <= 1e-6 * (hi - self.gamma) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let e = self.ess_at(mid)?;
            if e >= target {
                lo = mid;
                ess_lo = e;
            } else {
                hi = mid;
            }
        }
        if lo <= self.gamma {
            return Err(Error::NonConvergence(60));
        }
        Ok(GammaStep { gamma: lo, ess_target: target, ess: ess_lo })
    }

    /// Move the log-weights to temperature `gamma_new`.
    pub fn reweigh(&mut self, gamma_new: f64) -> Result<()> {
        if !(gamma_new >= self.gamma && gamma_new <= 1.0) {
            return Err(Error::GammaOutOfRange(gamma_new));
        }
        let inc = self.increments(gamma_new);
        for (p, d) in self.particles.iter_mut().zip(inc) {
            if d.is_nan() {
                return Err(Error::NonFinite("weight increment".into()));
            }
            p.log_weight += d;
        }
        self.gamma = gamma_new;
        Ok(())
    }

    /// Multinomial resampling; weights reset to equal.
    pub fn resample(&mut self) -> Result<()> {
        let w = self.weights()?;
        let step = self.stream.next_step();
        let mut rng = self.stream.lane(step, SERIAL_LANE);
        let idx = multinomial_indices(&w, self.particles.len(), &mut rng);
        let mut next: Vec<Particle> = idx.iter().map(|&i| self.particles[i].clone()).collect();
        next.iter_mut().for_each(|p| p.log_weight = 0.0);
        self.particles = next;
        Ok(())
    }

    /// Number of mixture steps per sweep for the coming rejuvenation round,
    /// fixed across particles: `1 + ⌈Σ W k⌉`.
    pub fn steps_per_sweep(&self) -> Result<usize> {
        let (mean_k, _) = self.estimate(|p| p.theta.k() as f64)?;
        Ok(1 + mean_k.ceil() as usize)
    }

    /// Apply `n_sweeps` sweeps of the move mixture to every particle,
    /// targeting the current bridging distribution.
    pub fn rejuvenate(&mut self) -> Result<MoveStats> {
        let steps = self.steps_per_sweep()? * self.config.n_sweeps;
        let step_id = self.stream.next_step();
        let stream = self.stream;
        let (data, pending, gamma) = (&self.data, self.pending.as_ref(), self.gamma);
        let (hyper, cfg) = (&self.hyper, &self.move_cfg);
        let stats = self
            .particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = stream.lane(step_id, i as u64);
                let mut stats = MoveStats::default();
                let mut theta = p.theta.clone();
                {
                    let mut lik = ResidualLikelihood::new(p, data, pending, gamma, hyper);
                    sweep(&mut theta, &mut lik, cfg, hyper, steps, &mut stats, &mut rng);
                }
                p.theta = theta;
                stats
            })
            .reduce(MoveStats::default, |mut a, b| {
                a.merge(&b);
                a
            });
        Ok(stats)
    }

    /// Update the random-walk scales from `stats` and the birth amplitude
    /// spread from the weighted mean squared kernel amplitude.
    pub fn adapt(&mut self, stats: &MoveStats) -> Result<()> {
        let w = self.weights()?;
        let (mut num, mut den) = (0.0, 0.0);
        for (p, w) in self.particles.iter().zip(&w) {
            num += w * p.theta.amplitudes.iter().map(|a| a * a).sum::<f64>();
            den += w * p.theta.k() as f64;
        }
        let mean_sq = (den > 0.0).then(|| num / den);
        self.move_cfg = adapt_steps(stats, &self.move_cfg, mean_sq);
        Ok(())
    }

    /// Fold the pending pair into the training set at `γ = 1`.
    fn complete(&mut self) {
        let pending = self.pending.take().expect("pending pair");
        self.data.push(&pending.x, pending.y);
        let data = &self.data;
        self.particles.par_iter_mut().for_each(|p| p.refresh(data, None));
        self.gamma = 0.0;
    }

    /// Assimilate one raw pair (rescaled with the fixed transform, clamping
    /// coordinates outside the fitted range).
    pub fn assimilate(&mut self, raw_x: &[f64], y: f64) -> Result<DatumSummary> {
        if raw_x.len() != self.hyper.dim {
            return Err(Error::DimensionMismatch { expected: self.hyper.dim, got: raw_x.len() });
        }
        let (x, clamped) = self.data.rescale.apply(raw_x);
        let mut summary = self.assimilate_scaled(x, y)?;
        summary.clamped = clamped;
        if let Some(last) = self.summaries.last_mut() {
            last.clamped = clamped;
        }
        Ok(summary)
    }

    /// Assimilate one pair already mapped into the unit cube.
    pub fn assimilate_scaled(&mut self, x: Vec<f64>, y: f64) -> Result<DatumSummary> {
        self.begin(x, y)?;
        let datum = self.data.len();
        let mut total = MoveStats::default();
        let mut steps = 0;
        let mut resamples = 0;
        let mut min_ess = f64::INFINITY;
        while self.gamma < 1.0 {
            if steps == self.config.max_bridging_steps {
                return Err(Error::NonConvergence(steps));
            }
            let ess_before = self.ess()?;
            let next = self.next_gamma()?;
            self.reweigh(next.gamma)?;
            let ess_after = self.ess()?;
            min_ess = min_ess.min(ess_after);
            let resampled = ess_after <= self.config.ess_min_fraction * self.len() as f64;
            if resampled {
                self.resample()?;
                resamples += 1;
            }
            let stats = self.rejuvenate()?;
            if self.config.adapt {
                self.adapt(&stats)?;
            }
            total.merge(&stats);
            self.history.push(BridgeRecord { datum, gamma: self.gamma, ess_before, ess_after, resampled });
            steps += 1;
        }
        self.complete();
        let summary = DatumSummary {
            n: self.data.len(),
            bridging_steps: steps,
            resamples,
            min_ess,
            final_ess: self.ess()?,
            stats: total,
            mean_k: self.estimate(|p| p.theta.k() as f64)?.0,
            mean_sigma: self.mean_sigma()?,
            clamped: false,
        };
        self.summaries.push(summary.clone());
        Ok(summary)
    }

    /// Check that every cache equals a fresh recomputation.
    pub fn check_caches(&self, tol: f64) -> Result<()> {
        for (i, p) in self.particles.iter().enumerate() {
            let mut fresh = p.clone();
            fresh.refresh(&self.data, self.pending.as_ref());
            let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b;
            if !close(p.sse, fresh.sse) || !close(p.next_residual, fresh.next_residual) {
                return Err(Error::NonFinite(format!("stale cache on particle {i}")));
            }
            if !p.log_weight.is_finite() {
                return Err(Error::NonFinite(format!("log-weight of particle {i}")));
            }
        }
        Ok(())
    }
}
