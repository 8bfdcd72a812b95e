//! Kernel-expansion regression model: mean function, prior, marginalized
//! likelihoods and the conditional noise posterior.
//!
//! All densities are kept in log space. The Gaussian normalizing constant
//! `(2π)^{-n/2}` is dropped from every likelihood, so absolute evidence values
//! are unnormalized; every ratio used by the samplers is unaffected.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Prior and likelihood hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Decay of the cardinality prior `p(k) ∝ (s+1)^{-(k+1)}`.
    pub s: f64,
    /// Shape of the per-kernel scale prior.
    pub a_tau: f64,
    /// Mean of the exponential hyper-prior on the scale-prior location.
    pub a_mu: f64,
    /// Inverse-gamma shape of the amplitude variance.
    pub a0_amp: f64,
    /// Inverse-gamma scale of the amplitude variance.
    pub b0_amp: f64,
    /// Gamma shape of the noise precision.
    pub a_noise: f64,
    /// Gamma rate of the noise precision.
    pub b_noise: f64,
    pub k_max: usize,
    /// Predictor dimension M.
    pub dim: usize,
}

impl Hyperparameters {
    /// Defaults used for all numerical examples of the method, for `dim` predictors.
    pub fn with_dim(dim: usize) -> Self {
        Self {
            s: 1.0,
            a_tau: 1.0,
            a_mu: 0.01,
            a0_amp: 1.0,
            b0_amp: 1.0,
            a_noise: 2.0,
            b_noise: 1e-6,
            k_max: 100,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("s", self.s),
            ("a_tau", self.a_tau),
            ("a_mu", self.a_mu),
            ("a0_amp", self.a0_amp),
            ("b0_amp", self.b0_amp),
            ("a_noise", self.a_noise),
            ("b_noise", self.b_noise),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("predictor dimension must be >= 1".into()));
        }
        Ok(())
    }
}

/// An owned single kernel term `a·exp(-τ‖x-ν‖²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub amplitude: f64,
    pub scale: f64,
    pub center: Vec<f64>,
}

impl Kernel {
    pub fn eval(&self, x: &[f64]) -> f64 {
        kernel_value(self.amplitude, self.scale, &self.center, x)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
pub(crate) fn kernel_value(amplitude: f64, scale: f64, center: &[f64], x: &[f64]) -> f64 {
    amplitude * (-scale * sq_dist(x, center)).exp()
}

/// The variable-dimension parameter vector: intercept plus `k` isotropic
/// Gaussian kernels. Stored as parallel arrays; `centers` is row-major `k × dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelExpansion {
    pub dim: usize,
    pub intercept: f64,
    pub amplitudes: Vec<f64>,
    pub scales: Vec<f64>,
    pub centers: Vec<f64>,
}

impl KernelExpansion {
    pub fn constant(dim: usize, intercept: f64) -> Self {
        Self { dim, intercept, amplitudes: Vec::new(), scales: Vec::new(), centers: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn center_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn kernel(&self, j: usize) -> Kernel {
        Kernel { amplitude: self.amplitudes[j], scale: self.scales[j], center: self.center(j).to_vec() }
    }

    pub fn push(&mut self, kernel: &Kernel) {
        debug_assert_eq!(kernel.center.len(), self.dim);
        self.amplitudes.push(kernel.amplitude);
        self.scales.push(kernel.scale);
        self.centers.extend_from_slice(&kernel.center);
    }

    /// Remove kernel `j`, moving the last kernel into its slot.
    pub fn swap_remove(&mut self, j: usize) -> Kernel {
        let removed = self.kernel(j);
        let last = self.k() - 1;
        self.amplitudes.swap_remove(j);
        self.scales.swap_remove(j);
        if j != last {
            let d = self.dim;
            let (head, tail) = self.centers.split_at_mut(last * d);
            head[j * d..(j + 1) * d].copy_from_slice(&tail[..d]);
        }
        self.centers.truncate(last * self.dim);
        removed
    }

    pub fn replace(&mut self, j: usize, kernel: &Kernel) {
        self.amplitudes[j] = kernel.amplitude;
        self.scales[j] = kernel.scale;
        self.center_mut(j).copy_from_slice(&kernel.center);
    }

    /// `f(x; θ) = a₀ + Σ a_j exp(-τ_j ‖x - ν_j‖²)`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut f = self.intercept;
        for j in 0..self.k() {
            f += kernel_value(self.amplitudes[j], self.scales[j], self.center(j), x);
        }
        f
    }

    /// Structural invariants: matching lengths, positive scales, centers in the cube.
    pub fn check_invariants(&self, k_max: usize) -> Result<()> {
        let k = self.k();
        if self.scales.len() != k || self.centers.len() != k * self.dim {
            return Err(Error::InvalidParameter("kernel arrays have inconsistent lengths".into()));
        }
        if k > k_max {
            return Err(Error::InvalidParameter(format!("k = {k} exceeds k_max = {k_max}")));
        }
        if !self.in_support() {
            return Err(Error::InvalidParameter("parameters outside prior support".into()));
        }
        Ok(())
    }

    pub fn in_support(&self) -> bool {
        self.intercept.is_finite()
            && self.amplitudes.iter().all(|a| a.is_finite())
            && self.scales.iter().all(|&t| t > 0.0 && t.is_finite())
            && self.centers.iter().all(|&c| (0.0..=1.0).contains(&c))
    }
}

/// Unnormalized log cardinality prior `-(k+1)·log(s+1)`.
pub fn log_cardinality_prior(k: usize, s: f64) -> f64 {
    -((k + 1) as f64) * (s + 1.0).ln()
}

/// Log density of a single kernel scale after integrating out its Gamma
/// rate hyper-parameter (`b_τ = μ a_τ`, `μ ~ Exp(mean a_μ)`).
pub fn log_scale_prior(tau: f64, a_tau: f64, a_mu: f64) -> f64 {
    scale_prior_constant(a_tau, a_mu) + scale_prior_kernel(tau, a_tau, a_mu)
}

fn scale_prior_constant(a_tau: f64, a_mu: f64) -> f64 {
    ln_gamma(a_tau + 1.0) - ln_gamma(a_tau) + a_tau * a_tau.ln() - a_mu.ln()
}

fn scale_prior_kernel(tau: f64, a_tau: f64, a_mu: f64) -> f64 {
    if !(tau > 0.0) {
        return f64::NEG_INFINITY;
    }
    (a_tau - 1.0) * tau.ln() - (a_tau + 1.0) * (a_tau * tau + 1.0 / a_mu).ln()
}

/// Log of the amplitude prior with the common variance integrated out.
/// `amplitudes` includes the intercept.
pub fn log_amplitude_prior<'a>(amplitudes: impl Iterator<Item = &'a f64>, a0: f64, b0: f64) -> f64 {
    let mut count = 0usize;
    let mut sum_sq = 0.0;
    for a in amplitudes {
        count += 1;
        sum_sq += a * a;
    }
    let half = count as f64 / 2.0;
    -half * (2.0 * std::f64::consts::PI).ln() + ln_gamma(a0 + half) - (a0 + half) * (b0 + 0.5 * sum_sq).ln()
}

/// Log of the complete prior density. Returns `-∞` off the support and an
/// error when `k > k_max`.
pub fn log_prior(theta: &KernelExpansion, hyper: &Hyperparameters) -> Result<f64> {
    let k = theta.k();
    if k > hyper.k_max {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds k_max = {}", hyper.k_max)));
    }
    if !theta.in_support() {
        return Ok(f64::NEG_INFINITY);
    }
    let mut lp = log_cardinality_prior(k, hyper.s) + k as f64 * scale_prior_constant(hyper.a_tau, hyper.a_mu);
    for &tau in &theta.scales {
        lp += scale_prior_kernel(tau, hyper.a_tau, hyper.a_mu);
    }
    lp += log_amplitude_prior(
        std::iter::once(&theta.intercept).chain(theta.amplitudes.iter()),
        hyper.a0_amp,
        hyper.b0_amp,
    );
    Ok(lp)
}

/// Draw a kernel scale from its marginalized prior via `μ ~ Exp(mean a_μ)`,
/// `τ | μ ~ Gamma(a_τ, rate μ a_τ)`.
pub fn sample_scale_prior<R: Rng + ?Sized>(hyper: &Hyperparameters, rng: &mut R) -> f64 {
    let mu_dist = Exp::new(1.0 / hyper.a_mu).expect("positive rate");
    loop {
        let rate = mu_dist.sample(rng) * hyper.a_tau;
        if rate > 0.0 {
            let tau = Gamma::new(hyper.a_tau, 1.0 / rate).expect("valid gamma").sample(rng);
            if tau > 0.0 && tau.is_finite() {
                return tau;
            }
        }
    }
}

/// Draw `k` from the cardinality prior truncated at `k_max`.
pub fn sample_cardinality<R: Rng + ?Sized>(hyper: &Hyperparameters, rng: &mut R) -> usize {
    // Inverse CDF of the truncated geometric with ratio q = 1/(s+1).
    let q = 1.0 / (hyper.s + 1.0);
    let tail = q.powi(hyper.k_max as i32 + 1);
    let u: f64 = rng.random();
    let target = u * (1.0 - tail);
    // P(k ≤ j) · (1 - tail) = 1 - q^{j+1}
    let k = ((1.0 - target).ln() / q.ln()).ceil() as isize - 1;
    (k.max(0) as usize).min(hyper.k_max)
}

/// Draw a complete kernel expansion from the prior.
pub fn sample_prior<R: Rng + ?Sized>(hyper: &Hyperparameters, rng: &mut R) -> KernelExpansion {
    let k = sample_cardinality(hyper, rng);
    let amp_var = draw_variance(hyper.a0_amp, hyper.b0_amp, rng);
    let sd = amp_var.sqrt();
    let mut theta = KernelExpansion::constant(hyper.dim, sd * rng.sample::<f64, _>(StandardNormal));
    for _ in 0..k {
        let amplitude = sd * rng.sample::<f64, _>(StandardNormal);
        let scale = sample_scale_prior(hyper, rng);
        let center = (0..hyper.dim).map(|_| rng.random::<f64>()).collect();
        theta.push(&Kernel { amplitude, scale, center });
    }
    theta
}

/// `log Γ(a + m/2) - (a + m/2)·log(b + sse/2)` for an effective data count `m`.
#[inline]
pub fn log_likelihood_from_sse(sse: f64, effective_n: f64, hyper: &Hyperparameters) -> f64 {
    let shape = hyper.a_noise + 0.5 * effective_n;
    ln_gamma(shape) - shape * (hyper.b_noise + 0.5 * sse).ln()
}

/// Tempered likelihood from cached sufficient quantities.
#[inline]
pub fn log_tempered_from_sse(sse: f64, n: usize, next_sq: f64, gamma: f64, hyper: &Hyperparameters) -> f64 {
    log_likelihood_from_sse(sse + gamma * next_sq, n as f64 + gamma, hyper)
}

pub fn sse(theta: &KernelExpansion, data: &TrainingSet) -> f64 {
    (0..data.len())
        .map(|i| {
            let r = data.y[i] - theta.evaluate(data.point(i));
            r * r
        })
        .sum()
}

/// Log marginal likelihood with the noise precision integrated out.
pub fn log_marginal_likelihood(theta: &KernelExpansion, data: &TrainingSet, hyper: &Hyperparameters) -> f64 {
    log_likelihood_from_sse(sse(theta, data), data.len() as f64, hyper)
}

/// Bridging likelihood between `n` and `n+1` data points at reciprocal
/// temperature `gamma`. The factor ½ multiplies the tempered residual so the
/// endpoints coincide with the adjacent marginal likelihoods.
pub fn log_tempered_likelihood(
    theta: &KernelExpansion,
    data: &TrainingSet,
    next: (&[f64], f64),
    gamma: f64,
    hyper: &Hyperparameters,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    let r = next.1 - theta.evaluate(next.0);
    Ok(log_tempered_from_sse(sse(theta, data), data.len(), r * r, gamma, hyper))
}

/// Shape and rate of the Gamma conditional posterior of the noise precision.
pub fn noise_precision_posterior(sse: f64, n: usize, hyper: &Hyperparameters) -> (f64, f64) {
    (hyper.a_noise + 0.5 * n as f64, hyper.b_noise + 0.5 * sse)
}

/// Draw σ² given θ by sampling the precision from its Gamma posterior.
pub fn sample_noise_variance<R: Rng + ?Sized>(
    theta: &KernelExpansion,
    data: &TrainingSet,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> f64 {
    let (shape, rate) = noise_precision_posterior(sse(theta, data), data.len(), hyper);
    draw_variance(shape, rate, rng)
}

pub(crate) fn draw_variance<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let precision = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng);
    1.0 / precision
}

/// Per-dimension min–max map of raw predictors onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Margin added on both sides of a constant predictor dimension.
pub const DEGENERATE_WIDENING: f64 = 1e-12;

impl Rescale {
    pub fn fit<'a>(dim: usize, points: impl Iterator<Item = &'a [f64]>) -> Result<Self> {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut count = 0;
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            for d in 0..dim {
                if !p[d].is_finite() {
                    return Err(Error::NonFinite(format!("predictor {d} of point {count}")));
                }
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::InvalidParameter("cannot fit a rescale to zero points".into()));
        }
        for d in 0..dim {
            if max[d] <= min[d] {
                min[d] -= DEGENERATE_WIDENING;
                max[d] += DEGENERATE_WIDENING;
                if max[d] <= min[d] {
                    return Err(Error::DegenerateDimension { dim: d });
                }
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Map a raw point into the unit cube. The flag reports whether any
    /// coordinate had to be clamped.
    pub fn apply(&self, raw: &[f64]) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let x = raw
            .iter()
            .enumerate()
            .map(|(d, &v)| {
                let t = (v - self.min[d]) / (self.max[d] - self.min[d]);
                if !(0.0..=1.0).contains(&t) {
                    clamped = true;
                }
                t.clamp(0.0, 1.0)
            })
            .collect();
        (x, clamped)
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(d, &t)| self.min[d] + t * (self.max[d] - self.min[d])).collect()
    }
}

/// Rescaled training pairs. Points are stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rescale: Rescale,
}

impl TrainingSet {
    pub fn empty(rescale: Rescale) -> Self {
        Self { dim: rescale.dim(), x: Vec::new(), y: Vec::new(), rescale }
    }

    /// Fit the rescale on `raw` and store the mapped pairs.
    pub fn fit(raw: &[(Vec<f64>, f64)]) -> Result<Self> {
        let dim = raw.first().map(|p| p.0.len()).ok_or_else(|| {
            Error::InvalidParameter("at least one training pair is required".into())
        })?;
        let rescale = Rescale::fit(dim, raw.iter().map(|p| p.0.as_slice()))?;
        let mut set = Self::empty(rescale);
        for (x, y) in raw {
            set.push_raw(x, *y)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Append an already rescaled pair.
    pub fn push(&mut self, x: &[f64], y: f64) {
        debug_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        self.x.extend_from_slice(x);
        self.y.push(y);
    }

    /// Rescale and append a raw pair; returns the clamp flag.
    pub fn push_raw(&mut self, raw_x: &[f64], y: f64) -> Result<bool> {
        if raw_x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: raw_x.len() });
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("response value".into()));
        }
        let (x, clamped) = self.rescale.apply(raw_x);
        self.push(&x, y);
        Ok(clamped)
    }
}
