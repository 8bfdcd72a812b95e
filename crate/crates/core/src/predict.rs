//! Posterior statistics of the exact output given approximate-solver outputs.
//!
//! For a particle `(θ, σ)` the conditional probability of exceeding `y₀` at
//! predictor `x` is `q(x) = Φ((f(x;θ) - y₀)/σ)`. Its posterior is represented
//! by the weighted values over particles; integrating over samples of `x`
//! gives event probabilities with credible bounds.
//!
//! Every particle gets one σ draw per [`PosteriorDraws`], shared by all `x`
//! and all thresholds, so curves are coherent and reproducible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{draw_variance, KernelExpansion};
use crate::rng::substream;
use crate::smc::Population;
use crate::special::{gauss_hermite, normal_cdf, MAX_GAUSS_HERMITE_NODES};

pub const DEFAULT_LEVELS: [f64; 2] = [0.01, 0.99];
pub const DEFAULT_QUAD_POINTS: usize = 32;
/// Step index reserved for prediction streams, disjoint from the fitting counter.
const PREDICT_STEP: u64 = u64::MAX - 1;

/// `Φ((f(x;θ) - y₀)/σ)` for a rescaled `x`.
pub fn q_exceedance(theta: &KernelExpansion, sigma: f64, x: &[f64], y0: f64) -> f64 {
    normal_cdf((theta.evaluate(x) - y0) / sigma)
}

/// Right-continuous weighted empirical quantiles: for each level `p`, the
/// smallest value whose cumulative normalized weight reaches `p`.
pub fn weighted_quantiles(samples: &[(f64, f64)], levels: &[f64]) -> Result<Vec<f64>> {
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    quantiles_sorted(&sorted, levels)
}

fn quantiles_sorted(sorted: &[(f64, f64)], levels: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = sorted.iter().map(|s| s.0).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let mut out = Vec::with_capacity(levels.len());
    for &p in levels {
        // Small slack absorbs rounding in the running sum.
        let target = p * total * (1.0 - 1e-12);
        let mut acc = 0.0;
        let mut value = sorted.last().map(|s| s.1).unwrap_or(f64::NAN);
        for &(w, v) in sorted {
            acc += w;
            if acc >= target {
                value = v;
                break;
            }
        }
        out.push(value);
    }
    Ok(out)
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("quantile levels must be strictly increasing in (0,1)".into()));
    }
    Ok(())
}

fn weighted_mean(samples: &[(f64, f64)]) -> f64 {
    let total: f64 = samples.iter().map(|s| s.0).sum();
    samples.iter().map(|(w, v)| w * v).sum::<f64>() / total
}

fn weighted_variance(samples: &[(f64, f64)], mean: f64) -> f64 {
    let total: f64 = samples.iter().map(|s| s.0).sum();
    samples.iter().map(|(w, v)| w * (v - mean).powi(2)).sum::<f64>() / total
}

/// Summary of the posterior of a scalar quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub mean: f64,
    pub variance: f64,
    pub levels: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// Monte Carlo standard error from the `x` sample average (0 for a single point).
    pub mc_se: f64,
}

impl PredictionSummary {
    pub fn from_samples(samples: &[(f64, f64)], levels: &[f64]) -> Result<Self> {
        check_levels(levels)?;
        let mean = weighted_mean(samples);
        Ok(Self {
            mean,
            variance: weighted_variance(samples, mean),
            levels: levels.to_vec(),
            quantiles: weighted_quantiles(samples, levels)?,
            mc_se: 0.0,
        })
    }

    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.levels.iter().position(|&l| l == level).map(|i| self.quantiles[i])
    }
}

/// Samples representing the distribution of approximate-solver outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalXSamples {
    /// Raw (unscaled) points.
    pub points: Vec<Vec<f64>>,
    /// Optional non-negative sample weights; equal weights when absent.
    pub weights: Option<Vec<f64>>,
}

impl MarginalXSamples {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("x sample set is empty".into()));
        }
        Ok(Self { points, weights: None })
    }

    pub fn with_weights(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter("x sample weights must be non-negative with positive sum".into()));
        }
        let mut s = Self::new(points)?;
        s.weights = Some(weights);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn normalized_weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => {
                let t: f64 = w.iter().sum();
                w.iter().map(|v| v / t).collect()
            }
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }
}

/// A function `h` of the exact output whose conditional expectation is wanted.
pub enum OutputFunction<'a> {
    Identity,
    /// `h(y) = slope·y + intercept`.
    Affine { slope: f64, intercept: f64 },
    General(&'a (dyn Fn(f64) -> f64 + Sync)),
}

/// Particles frozen for prediction, each with one σ draw.
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    pub weights: Vec<f64>,
    pub thetas: Vec<KernelExpansion>,
    pub sigmas: Vec<f64>,
    rescale: crate::model::Rescale,
}

impl PosteriorDraws {
    /// Draw σ for each particle from its conditional posterior, keyed by the
    /// population seed and `query_seed`.
    pub fn new(population: &Population, query_seed: u64) -> Result<Self> {
        if population.n_assimilated() == 0 {
            return Err(Error::InvalidParameter("prediction needs at least one assimilated pair".into()));
        }
        let weights = population.weights()?;
        let seed = population.stream.seed ^ query_seed.rotate_left(17);
        let sigmas = population
            .particles
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (shape, rate) = population.noise_posterior(p);
                let mut rng = substream(seed, PREDICT_STEP, i as u64);
                draw_variance(shape, rate, &mut rng).sqrt()
            })
            .collect();
        Ok(Self {
            weights,
            thetas: population.particles.iter().map(|p| p.theta.clone()).collect(),
            sigmas,
            rescale: population.data.rescale.clone(),
        })
    }

    /// Build from explicit particles (rescaled inputs are used as given).
    pub fn from_parts(weights: Vec<f64>, thetas: Vec<KernelExpansion>, sigmas: Vec<f64>) -> Result<Self> {
        let n = thetas.len();
        if n == 0 || weights.len() != n || sigmas.len() != n {
            return Err(Error::InvalidParameter("weights, thetas and sigmas must have equal nonzero length".into()));
        }
        if sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        let dim = thetas[0].dim;
        let total: f64 = weights.iter().sum();
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            thetas,
            sigmas,
            rescale: crate::model::Rescale { min: vec![0.0; dim], max: vec![1.0; dim] },
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    fn scale(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.rescale.dim() {
            return Err(Error::DimensionMismatch { expected: self.rescale.dim(), got: raw.len() });
        }
        Ok(self.rescale.apply(raw).0)
    }

    /// `(Wᵢ, qᵢ)` at a raw point.
    pub fn q_samples(&self, raw_x: &[f64], y0: f64) -> Result<Vec<(f64, f64)>> {
        let x = self.scale(raw_x)?;
        Ok((0..self.len())
            .map(|i| (self.weights[i], q_exceedance(&self.thetas[i], self.sigmas[i], &x, y0)))
            .collect())
    }

    pub fn conditional(&self, raw_x: &[f64], y0: f64, levels: &[f64]) -> Result<PredictionSummary> {
        PredictionSummary::from_samples(&self.q_samples(raw_x, y0)?, levels)
    }

    /// `f(x; θᵢ)` for all particles (rows) and samples (columns).
    fn mean_matrix(&self, xs: &MarginalXSamples) -> Result<Vec<Vec<f64>>> {
        let scaled = xs.points.iter().map(|p| self.scale(p)).collect::<Result<Vec<_>>>()?;
        Ok(self.thetas.par_iter().map(|t| scaled.iter().map(|x| t.evaluate(x)).collect()).collect())
    }

    /// Aggregate per-`x` posterior samples of a conditional quantity `g(f, σ)`:
    /// the mean integrates the per-`x` means, each bound integrates the per-`x`
    /// quantiles, and `mc_se` is the standard error over the `x` samples.
    fn integrate(
        &self,
        f: &[Vec<f64>],
        xs: &MarginalXSamples,
        levels: &[f64],
        g: &(dyn Fn(f64, f64) -> f64 + Sync),
    ) -> Result<PredictionSummary> {
        check_levels(levels)?;
        let wx = xs.normalized_weights();
        let per_x: Vec<(f64, f64, Vec<f64>)> = (0..xs.len())
            .into_par_iter()
            .map(|s| {
                let mut samples: Vec<(f64, f64)> =
                    (0..self.len()).map(|i| (self.weights[i], g(f[i][s], self.sigmas[i]))).collect();
                let mean = weighted_mean(&samples);
                let var = weighted_variance(&samples, mean);
                samples.sort_by(|a, b| a.1.total_cmp(&b.1));
                let q = quantiles_sorted(&samples, levels)?;
                Ok((mean, var, q))
            })
            .collect::<Result<_>>()?;
        let mean: f64 = per_x.iter().zip(&wx).map(|(p, w)| w * p.0).sum();
        let variance: f64 = per_x.iter().zip(&wx).map(|(p, w)| w * p.1).sum();
        let quantiles = (0..levels.len())
            .map(|l| per_x.iter().zip(&wx).map(|(p, w)| w * p.2[l]).sum())
            .collect();
        let spread: f64 = per_x.iter().zip(&wx).map(|(p, w)| w * (p.0 - mean).powi(2)).sum();
        let s_eff = 1.0 / wx.iter().map(|w| w * w).sum::<f64>();
        Ok(PredictionSummary {
            mean,
            variance,
            levels: levels.to_vec(),
            quantiles,
            mc_se: (spread / s_eff).sqrt(),
        })
    }

    /// Posterior summary of `Pr[y > y₀]` with `x` integrated over `xs`.
    pub fn event_probability(&self, xs: &MarginalXSamples, y0: f64, levels: &[f64]) -> Result<PredictionSummary> {
        Ok(self.cdf_curve(xs, &[y0], levels)?.remove(0))
    }

    /// [`Self::event_probability`] on each threshold of `grid`, sharing the
    /// mean evaluations and σ draws.
    pub fn cdf_curve(&self, xs: &MarginalXSamples, grid: &[f64], levels: &[f64]) -> Result<Vec<PredictionSummary>> {
        let f = self.mean_matrix(xs)?;
        grid.iter()
            .map(|&y0| {
                let mut p = self.integrate(&f, xs, levels, &move |m, s| normal_cdf((m - y0) / s))?;
                // Rounding in the weight sums can overshoot the unit interval by an ulp.
                p.mean = p.mean.clamp(0.0, 1.0);
                p.quantiles.iter_mut().for_each(|q| *q = q.clamp(0.0, 1.0));
                Ok(p)
            })
            .collect()
    }

    /// Posterior summary of `E[h(y)]` with `x` integrated over `xs`.
    pub fn expectation_of(
        &self,
        xs: &MarginalXSamples,
        h: &OutputFunction<'_>,
        quad_points: usize,
        levels: &[f64],
    ) -> Result<PredictionSummary> {
        let f = self.mean_matrix(xs)?;
        let summary = match h {
            OutputFunction::Identity => self.integrate(&f, xs, levels, &|m, _| m)?,
            OutputFunction::Affine { slope, intercept } => {
                let (a, b) = (*slope, *intercept);
                self.integrate(&f, xs, levels, &move |m, _| a * m + b)?
            }
            OutputFunction::General(func) => {
                if !(1..=MAX_GAUSS_HERMITE_NODES).contains(&quad_points) {
                    return Err(Error::InvalidParameter(format!(
                        "quad_points must lie in 1..={MAX_GAUSS_HERMITE_NODES}, got {quad_points}"
                    )));
                }
                let (nodes, weights) = gauss_hermite(quad_points);
                let g = move |m: f64, s: f64| gaussian_expectation(*func, m, s, &nodes, &weights);
                self.integrate(&f, xs, levels, &g)?
            }
        };
        if !summary.mean.is_finite() || summary.quantiles.iter().any(|q| !q.is_finite()) {
            return Err(Error::NonFinite("quadrature result".into()));
        }
        Ok(summary)
    }

    /// Rank the `x` samples by the width of the `[p_low, p_high]` band of
    /// `q(x)`, multiplied by the sample weight. Returns `(index, score)`
    /// sorted by descending score.
    pub fn active_learning_scores(
        &self,
        xs: &MarginalXSamples,
        y0: f64,
        p_low: f64,
        p_high: f64,
        score: ScoreKind,
    ) -> Result<Vec<(usize, f64)>> {
        check_levels(&[p_low, p_high])?;
        let rel: Vec<f64> = {
            let w = xs.normalized_weights();
            w.iter().map(|v| v * xs.len() as f64).collect()
        };
        let scaled = xs.points.iter().map(|p| self.scale(p)).collect::<Result<Vec<_>>>()?;
        let mut out: Vec<(usize, f64)> = scaled
            .par_iter()
            .enumerate()
            .map(|(s, x)| {
                let mut samples: Vec<(f64, f64)> = (0..self.len())
                    .map(|i| (self.weights[i], q_exceedance(&self.thetas[i], self.sigmas[i], x, y0)))
                    .collect();
                let value = match score {
                    ScoreKind::QuantileGap => {
                        samples.sort_by(|a, b| a.1.total_cmp(&b.1));
                        let q = quantiles_sorted(&samples, &[p_low, p_high])?;
                        q[1] - q[0]
                    }
                    ScoreKind::Variance => weighted_variance(&samples, weighted_mean(&samples)),
                };
                Ok((s, value * rel[s]))
            })
            .collect::<Result<_>>()?;
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    #[default]
    QuantileGap,
    Variance,
}

/// `E[h(Y)]` for `Y ~ N(m, s²)` by Gauss–Hermite quadrature.
pub fn gaussian_expectation(h: &dyn Fn(f64) -> f64, m: f64, s: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let scale = std::f64::consts::SQRT_2 * s;
    nodes.iter().zip(weights).map(|(t, w)| w * h(m + scale * t)).sum::<f64>() / std::f64::consts::PI.sqrt()
}
