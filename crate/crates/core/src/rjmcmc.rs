//! Reversible-jump Metropolis–Hastings moves on kernel expansions.
//!
//! Seven move types are mixed: birth/death and split/merge change the number
//! of kernels by one, and three random-walk updates perturb an amplitude, a
//! scale or a center. Every move is invariant for `prior × likelihood`, where
//! the likelihood is supplied through the [`Likelihood`] trait so callers can
//! evaluate proposals incrementally.
//!
//! The prior density is over labelled kernels and is symmetric under
//! relabelling. Split and merge act on unordered kernel pairs, which is why
//! their acceptance ratio carries the factor `k(k+1) / (2E')` (`E'` being the
//! number of mergeable pairs after the split).

use arrayvec::ArrayVec;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    kernel_value, log_prior, log_scale_prior, sample_scale_prior, sq_dist, Hyperparameters, Kernel, KernelExpansion,
};
use crate::special::ln_gamma;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Birth,
    Death,
    Split,
    Merge,
    UpdateAmplitude,
    UpdateScale,
    UpdateLocation,
}

impl MoveKind {
    pub const ALL: [MoveKind; 7] = [
        MoveKind::Birth,
        MoveKind::Death,
        MoveKind::Split,
        MoveKind::Merge,
        MoveKind::UpdateAmplitude,
        MoveKind::UpdateScale,
        MoveKind::UpdateLocation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::Split => "split",
            MoveKind::Merge => "merge",
            MoveKind::UpdateAmplitude => "update_amp",
            MoveKind::UpdateScale => "update_scale",
            MoveKind::UpdateLocation => "update_loc",
        }
    }
}

/// How a merged kernel's scale is formed from the two merged scales.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeScaleRule {
    /// `1/τ = 1/τ₁ + 1/τ₂`: the exact inverse of the split map.
    #[default]
    Reciprocal,
    /// `τ = 1/√(1/τ₁ + 1/τ₂)`. Kept for comparison only; it is not the inverse
    /// of the split map, so chains using it are not reversible.
    PrintedSqrt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoveConfig {
    /// Trans-dimensional move weight constant.
    pub c: f64,
    /// Normalized-distance threshold for merging.
    pub delta_x: f64,
    /// Amplitude-gap threshold for merging.
    pub delta_a: f64,
    pub step_amp: f64,
    /// Standard deviation of the log-scale random walk.
    pub step_scale: f64,
    pub step_loc: f64,
    /// Standard deviation of newborn amplitudes.
    pub birth_amp_sd: f64,
    #[serde(default)]
    pub merge_rule: MergeScaleRule,
}

impl Default for MoveConfig {
    fn default() -> Self {
        Self {
            c: 0.2,
            delta_x: 1.0,
            delta_a: 1.0,
            step_amp: 0.1,
            step_scale: 0.5,
            step_loc: 0.05,
            birth_amp_sd: 1.0,
            merge_rule: MergeScaleRule::Reciprocal,
        }
    }
}

impl MoveConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("c", self.c),
            ("delta_x", self.delta_x),
            ("delta_a", self.delta_a),
            ("step_amp", self.step_amp),
            ("step_scale", self.step_scale),
            ("step_loc", self.step_loc),
            ("birth_amp_sd", self.birth_amp_sd),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-move-type proposal and acceptance counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: [u64; 7],
    pub accepted: [u64; 7],
}

impl MoveStats {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        self.proposed[kind.index()] += 1;
        if accepted {
            self.accepted[kind.index()] += 1;
        }
    }

    pub fn merge(&mut self, other: &MoveStats) {
        for i in 0..7 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
    }

    pub fn rate(&self, kind: MoveKind) -> Option<f64> {
        let p = self.proposed[kind.index()];
        (p > 0).then(|| self.accepted[kind.index()] as f64 / p as f64)
    }
}

/// One signed kernel contribution to a change of the regression function.
#[derive(Clone, Copy, Debug)]
pub struct KernelTerm<'a> {
    pub weight: f64,
    pub scale: f64,
    pub center: &'a [f64],
}

/// Change `f(x; θ') - f(x; θ)` expressed as an intercept shift plus at most
/// four signed kernel terms.
#[derive(Clone, Debug, Default)]
pub struct Delta<'a> {
    pub intercept_shift: f64,
    pub terms: ArrayVec<KernelTerm<'a>, 4>,
}

impl<'a> Delta<'a> {
    pub fn add(&mut self, weight: f64, scale: f64, center: &'a [f64]) {
        self.terms.push(KernelTerm { weight, scale, center });
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut d = self.intercept_shift;
        for t in &self.terms {
            d += kernel_value(t.weight, t.scale, t.center, x);
        }
        d
    }
}

/// Log-likelihood factor of the target density.
///
/// `log_proposed` stages the proposal; `accept` commits the staged state.
pub trait Likelihood {
    fn log_current(&self) -> f64;
    fn log_proposed(&mut self, proposed: &KernelExpansion, delta: &Delta<'_>) -> f64;
    fn accept(&mut self);
}

/// Constant likelihood: the moves then target the prior.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatLikelihood;

impl Likelihood for FlatLikelihood {
    fn log_current(&self) -> f64 {
        0.0
    }
    fn log_proposed(&mut self, _: &KernelExpansion, _: &Delta<'_>) -> f64 {
        0.0
    }
    fn accept(&mut self) {}
}

fn pair_eligible(theta: &KernelExpansion, i: usize, j: usize, cfg: &MoveConfig) -> bool {
    if (theta.amplitudes[i] - theta.amplitudes[j]).abs() > cfg.delta_a {
        return false;
    }
    let d2 = sq_dist(theta.center(i), theta.center(j));
    d2 <= cfg.delta_x * cfg.delta_x * (1.0 / theta.scales[i] + 1.0 / theta.scales[j])
}

/// All index pairs `(j₁ < j₂)` that satisfy both merge conditions.
pub fn merge_candidates(theta: &KernelExpansion, cfg: &MoveConfig) -> Vec<(usize, usize)> {
    let k = theta.k();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if pair_eligible(theta, i, j, cfg) {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn count_merge_candidates(theta: &KernelExpansion, cfg: &MoveConfig) -> usize {
    let k = theta.k();
    let mut n = 0;
    for i in 0..k {
        for j in i + 1..k {
            n += pair_eligible(theta, i, j, cfg) as usize;
        }
    }
    n
}

pub fn has_merge_candidate(theta: &KernelExpansion, cfg: &MoveConfig) -> bool {
    let k = theta.k();
    (0..k).any(|i| (i + 1..k).any(|j| pair_eligible(theta, i, j, cfg)))
}

/// Normalized selection probabilities, indexed by [`MoveKind::index`].
pub fn move_probabilities(k: usize, mergeable: bool, cfg: &MoveConfig, hyper: &Hyperparameters) -> [f64; 7] {
    let up = cfg.c / (hyper.s + 1.0);
    let down = cfg.c;
    let fixed = (2.0 * up + 2.0 * down) / 3.0;
    let mut w = [up, down, up, down, fixed, fixed, fixed];
    if k >= hyper.k_max {
        w[MoveKind::Birth.index()] = 0.0;
        w[MoveKind::Split.index()] = 0.0;
    }
    if k == 0 {
        w[MoveKind::Death.index()] = 0.0;
        w[MoveKind::Split.index()] = 0.0;
        w[MoveKind::UpdateScale.index()] = 0.0;
        w[MoveKind::UpdateLocation.index()] = 0.0;
    }
    if k <= 1 || !mergeable {
        w[MoveKind::Merge.index()] = 0.0;
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

fn probabilities_for(theta: &KernelExpansion, cfg: &MoveConfig, hyper: &Hyperparameters) -> [f64; 7] {
    let k = theta.k();
    let mergeable = k >= 2 && has_merge_candidate(theta, cfg);
    move_probabilities(k, mergeable, cfg, hyper)
}

pub fn select_move<R: Rng + ?Sized>(
    theta: &KernelExpansion,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> MoveKind {
    sample_kind(&probabilities_for(theta, cfg, hyper), rng)
}

fn sample_kind<R: Rng + ?Sized>(p: &[f64; 7], rng: &mut R) -> MoveKind {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = MoveKind::UpdateAmplitude;
    for kind in MoveKind::ALL {
        if p[kind.index()] > 0.0 {
            last = kind;
            acc += p[kind.index()];
            if u < acc {
                return kind;
            }
        }
    }
    last
}

/// Volume of the `dim`-ball of radius `r`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    let m = dim as f64;
    (0.5 * m * std::f64::consts::PI.ln() - ln_gamma(0.5 * m + 1.0)).exp() * r.powi(dim as i32)
}

fn log_ball_volume(dim: usize, r: f64) -> f64 {
    let m = dim as f64;
    0.5 * m * std::f64::consts::PI.ln() - ln_gamma(0.5 * m + 1.0) + m * r.ln()
}

/// Determinant of the split map `(a, τ, ν, u_τ, u_x, u_a) → (kernel₁, kernel₂)`.
pub fn split_jacobian(tau: f64, u_tau: f64, dim: usize) -> f64 {
    log_split_jacobian(tau, u_tau, dim).exp()
}

pub fn log_split_jacobian(tau: f64, u_tau: f64, dim: usize) -> f64 {
    let s = u_tau.sqrt() + (1.0 - u_tau).sqrt();
    (dim as f64 + 1.0) * std::f64::consts::LN_2 + tau.ln()
        - 2.0 * u_tau.ln()
        - 2.0 * (1.0 - u_tau).ln()
        - s.ln()
}

/// Merge two kernels into one.
pub fn merge_params(k1: &Kernel, k2: &Kernel, rule: MergeScaleRule) -> Kernel {
    let inv = 1.0 / k1.scale + 1.0 / k2.scale;
    let scale = match rule {
        MergeScaleRule::Reciprocal => 1.0 / inv,
        MergeScaleRule::PrintedSqrt => 1.0 / inv.sqrt(),
    };
    let amplitude = scale.sqrt() * (k1.amplitude / k1.scale.sqrt() + k2.amplitude / k2.scale.sqrt());
    let center = k1.center.iter().zip(&k2.center).map(|(a, b)| 0.5 * (a + b)).collect();
    Kernel { amplitude, scale, center }
}

/// Split one kernel into two given the dimension-matching variables.
/// Fails with [`Error::OutOfCube`] when a new center leaves `[0,1]^M`.
pub fn split_params(kernel: &Kernel, u_tau: f64, u_x: &[f64], u_a: f64) -> Result<(Kernel, Kernel)> {
    let (su, sv) = (u_tau.sqrt(), (1.0 - u_tau).sqrt());
    let a_hat = (kernel.amplitude + u_a * (su - sv)) / (su + sv);
    let c1: Vec<f64> = kernel.center.iter().zip(u_x).map(|(c, u)| c - u).collect();
    let c2: Vec<f64> = kernel.center.iter().zip(u_x).map(|(c, u)| c + u).collect();
    if c1.iter().chain(&c2).any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::OutOfCube);
    }
    Ok((
        Kernel { amplitude: a_hat - u_a, scale: kernel.scale / u_tau, center: c1 },
        Kernel { amplitude: a_hat + u_a, scale: kernel.scale / (1.0 - u_tau), center: c2 },
    ))
}

/// Uniform draw from the centered ball of radius `r`.
pub fn sample_in_ball<R: Rng + ?Sized>(dim: usize, r: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let u: f64 = rng.random();
            let radius = r * u.powf(1.0 / dim as f64);
            return z.into_iter().map(|v| v / norm * radius).collect();
        }
    }
}

fn log_normal_density(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Log prior and move probabilities of the current state, shared by a move.
struct Current {
    log_prior: f64,
    probs: [f64; 7],
}

impl Current {
    fn of(theta: &KernelExpansion, cfg: &MoveConfig, hyper: &Hyperparameters) -> Self {
        Self {
            log_prior: log_prior(theta, hyper).unwrap_or(f64::NEG_INFINITY),
            probs: probabilities_for(theta, cfg, hyper),
        }
    }
}

fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Finish a proposal: add prior and likelihood differences to the proposal
/// terms and run the accept/reject step.
fn decide<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    proposed: KernelExpansion,
    delta: &Delta<'_>,
    proposal_log_ratio: f64,
    cur: &Current,
    lik: &mut L,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    let lp_new = match log_prior(&proposed, hyper) {
        Ok(v) if v > f64::NEG_INFINITY => v,
        _ => return false,
    };
    let ll_new = lik.log_proposed(&proposed, delta);
    let log_ratio = lp_new - cur.log_prior + ll_new - lik.log_current() + proposal_log_ratio;
    if metropolis(log_ratio, rng) {
        debug_assert!(proposed.check_invariants(hyper.k_max).is_ok());
        lik.accept();
        *theta = proposed;
        true
    } else {
        false
    }
}

fn birth_with<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    if theta.k() >= hyper.k_max {
        return false;
    }
    let amplitude = cfg.birth_amp_sd * rng.sample::<f64, _>(StandardNormal);
    let scale = sample_scale_prior(hyper, rng);
    let center: Vec<f64> = (0..theta.dim).map(|_| rng.random::<f64>()).collect();
    let log_q = log_normal_density(amplitude, cfg.birth_amp_sd) + log_scale_prior(scale, hyper.a_tau, hyper.a_mu);

    let newborn = Kernel { amplitude, scale, center };
    let mut proposed = theta.clone();
    proposed.push(&newborn);
    let p_death = probabilities_for(&proposed, cfg, hyper)[MoveKind::Death.index()];
    let mut delta = Delta::default();
    delta.add(amplitude, scale, &newborn.center);
    let ratio = p_death.ln() - cur.probs[MoveKind::Birth.index()].ln() - log_q;
    decide(theta, proposed, &delta, ratio, cur, lik, hyper, rng)
}

fn death_with<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    let k = theta.k();
    if k == 0 {
        return false;
    }
    let j = rng.random_range(0..k);
    let mut proposed = theta.clone();
    let removed = proposed.swap_remove(j);
    let log_q = log_normal_density(removed.amplitude, cfg.birth_amp_sd)
        + log_scale_prior(removed.scale, hyper.a_tau, hyper.a_mu);
    let p_birth = probabilities_for(&proposed, cfg, hyper)[MoveKind::Birth.index()];
    let mut delta = Delta::default();
    delta.add(-removed.amplitude, removed.scale, &removed.center);
    let ratio = p_birth.ln() - cur.probs[MoveKind::Death.index()].ln() + log_q;
    decide(theta, proposed, &delta, ratio, cur, lik, hyper, rng)
}

/// Log proposal density of the split variables given the kernel scale.
fn split_log_q(scale: f64, dim: usize, cfg: &MoveConfig) -> f64 {
    let radius = cfg.delta_x / (2.0 * scale.sqrt());
    -log_ball_volume(dim, radius) - cfg.delta_a.ln()
}

fn pair_factor(k_small: usize, pairs: usize) -> f64 {
    // log of k(k+1) / (2E')
    ((k_small * (k_small + 1)) as f64).ln() - (2.0 * pairs as f64).ln()
}

/// Split proposal for fixed dimension-matching variables: the proposed
/// state, the parent and the two children, and the proposal log-ratio.
fn split_proposal(
    theta: &KernelExpansion,
    probs: &[f64; 7],
    j: usize,
    u_tau: f64,
    u_x: &[f64],
    u_a: f64,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
) -> Option<(KernelExpansion, [Kernel; 3], f64)> {
    let k = theta.k();
    let parent = theta.kernel(j);
    let (k1, k2) = split_params(&parent, u_tau, u_x, u_a).ok()?;
    let mut proposed = theta.clone();
    proposed.replace(j, &k1);
    proposed.push(&k2);
    let pairs = count_merge_candidates(&proposed, cfg);
    if pairs == 0 {
        return None;
    }
    let p_merge = move_probabilities(k + 1, true, cfg, hyper)[MoveKind::Merge.index()];
    let ratio = p_merge.ln() - probs[MoveKind::Split.index()].ln() + pair_factor(k, pairs)
        + log_split_jacobian(parent.scale, u_tau, theta.dim)
        - split_log_q(parent.scale, theta.dim, cfg);
    Some((proposed, [parent, k1, k2], ratio))
}

/// Merge proposal for a chosen eligible pair among `pairs` candidates.
fn merge_proposal(
    theta: &KernelExpansion,
    probs: &[f64; 7],
    (j1, j2): (usize, usize),
    pairs: usize,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
) -> Option<(KernelExpansion, [Kernel; 3], f64)> {
    let k = theta.k();
    let (k1, k2) = (theta.kernel(j1), theta.kernel(j2));
    let merged = merge_params(&k1, &k2, cfg.merge_rule);
    let u_tau = merged.scale / k1.scale;
    if !(u_tau > 0.0 && u_tau < 1.0) {
        return None;
    }
    let mut proposed = theta.clone();
    proposed.replace(j1, &merged);
    proposed.swap_remove(j2);
    let p_split = probabilities_for(&proposed, cfg, hyper)[MoveKind::Split.index()];
    let ratio = p_split.ln() - probs[MoveKind::Merge.index()].ln() - pair_factor(k - 1, pairs)
        - log_split_jacobian(merged.scale, u_tau, theta.dim)
        + split_log_q(merged.scale, theta.dim, cfg);
    Some((proposed, [k1, k2, merged], ratio))
}

fn split_with<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    let k = theta.k();
    if k == 0 || k >= hyper.k_max {
        return false;
    }
    let j = rng.random_range(0..k);
    let u_tau = uniform_open(rng);
    let radius = cfg.delta_x / (2.0 * theta.scales[j].sqrt());
    let u_x = sample_in_ball(theta.dim, radius, rng);
    let u_a = cfg.delta_a * (rng.random::<f64>() - 0.5);
    let Some((proposed, [parent, k1, k2], ratio)) =
        split_proposal(theta, &cur.probs, j, u_tau, &u_x, u_a, cfg, hyper)
    else {
        return false;
    };
    let mut delta = Delta::default();
    delta.add(-parent.amplitude, parent.scale, &parent.center);
    delta.add(k1.amplitude, k1.scale, &k1.center);
    delta.add(k2.amplitude, k2.scale, &k2.center);
    decide(theta, proposed, &delta, ratio, cur, lik, hyper, rng)
}

fn merge_with<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    if theta.k() < 2 {
        return false;
    }
    let pairs = merge_candidates(theta, cfg);
    if pairs.is_empty() {
        return false;
    }
    let pair = pairs[rng.random_range(0..pairs.len())];
    let Some((proposed, [k1, k2, merged], ratio)) =
        merge_proposal(theta, &cur.probs, pair, pairs.len(), cfg, hyper)
    else {
        return false;
    };
    let mut delta = Delta::default();
    delta.add(-k1.amplitude, k1.scale, &k1.center);
    delta.add(-k2.amplitude, k2.scale, &k2.center);
    delta.add(merged.amplitude, merged.scale, &merged.center);
    decide(theta, proposed, &delta, ratio, cur, lik, hyper, rng)
}

fn fixed_move_ratio(kind: MoveKind, proposed: &KernelExpansion, cur: &Current, cfg: &MoveConfig, hyper: &Hyperparameters) -> f64 {
    // Mergeability, and with it the normalization of the move mixture, may change.
    probabilities_for(proposed, cfg, hyper)[kind.index()].ln() - cur.probs[kind.index()].ln()
}

fn update_amplitude_with<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    let idx = rng.random_range(0..=theta.k());
    let step = cfg.step_amp * rng.sample::<f64, _>(StandardNormal);
    let mut proposed = theta.clone();
    let old_center = if idx == 0 { Vec::new() } else { theta.center(idx - 1).to_vec() };
    let mut delta = Delta::default();
    if idx == 0 {
        proposed.intercept += step;
        delta.intercept_shift = step;
    } else {
        proposed.amplitudes[idx - 1] += step;
        delta.add(step, theta.scales[idx - 1], &old_center);
    }
    let ratio = fixed_move_ratio(MoveKind::UpdateAmplitude, &proposed, cur, cfg, hyper);
    decide(theta, proposed, &delta, ratio, cur, lik, hyper, rng)
}

fn update_scale_with<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    let k = theta.k();
    if k == 0 {
        return false;
    }
    let j = rng.random_range(0..k);
    let log_step = cfg.step_scale * rng.sample::<f64, _>(StandardNormal);
    let old = theta.scales[j];
    let new = old * log_step.exp();
    if !(new > 0.0 && new.is_finite()) {
        return false;
    }
    let mut proposed = theta.clone();
    proposed.scales[j] = new;
    let a = theta.amplitudes[j];
    let center = theta.center(j).to_vec();
    let mut delta = Delta::default();
    delta.add(-a, old, &center);
    delta.add(a, new, &center);
    // Hastings factor τ'/τ for the multiplicative walk.
    let ratio = fixed_move_ratio(MoveKind::UpdateScale, &proposed, cur, cfg, hyper) + log_step;
    decide(theta, proposed, &delta, ratio, cur, lik, hyper, rng)
}

fn update_location_with<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> bool {
    let k = theta.k();
    if k == 0 {
        return false;
    }
    let j = rng.random_range(0..k);
    let mut proposed = theta.clone();
    for c in proposed.center_mut(j) {
        *c += cfg.step_loc * rng.sample::<f64, _>(StandardNormal);
    }
    if proposed.center(j).iter().any(|c| !(0.0..=1.0).contains(c)) {
        return false;
    }
    let new_center = proposed.center(j).to_vec();
    let old_center = theta.center(j).to_vec();
    let (a, tau) = (theta.amplitudes[j], theta.scales[j]);
    let mut delta = Delta::default();
    delta.add(-a, tau, &old_center);
    delta.add(a, tau, &new_center);
    let ratio = fixed_move_ratio(MoveKind::UpdateLocation, &proposed, cur, cfg, hyper);
    decide(theta, proposed, &delta, ratio, cur, lik, hyper, rng)
}

macro_rules! public_move {
    ($(#[$doc:meta])* $name:ident, $inner:ident) => {
        $(#[$doc])*
        pub fn $name<L: Likelihood + ?Sized, R: Rng + ?Sized>(
            theta: &mut KernelExpansion,
            lik: &mut L,
            cfg: &MoveConfig,
            hyper: &Hyperparameters,
            rng: &mut R,
        ) -> bool {
            let cur = Current::of(theta, cfg, hyper);
            $inner(theta, &cur, lik, cfg, hyper, rng)
        }
    };
}

public_move!(
    /// Add a kernel drawn from `N(0, σ₄²) × p(τ) × U[0,1]^M`.
    birth, birth_with
);
public_move!(
    /// Remove a uniformly chosen kernel.
    death, death_with
);
public_move!(
    /// Split a uniformly chosen kernel into a mergeable pair.
    split, split_with
);
public_move!(
    /// Merge a uniformly chosen eligible pair.
    merge, merge_with
);
public_move!(update_amplitude, update_amplitude_with);
public_move!(update_scale, update_scale_with);
public_move!(update_location, update_location_with);

/// Select one move from the mixture and apply it.
pub fn step<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    stats: &mut MoveStats,
    rng: &mut R,
) -> (MoveKind, bool) {
    let cur = Current::of(theta, cfg, hyper);
    step_from(theta, &cur, lik, cfg, hyper, stats, rng)
}

fn step_from<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    cur: &Current,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    stats: &mut MoveStats,
    rng: &mut R,
) -> (MoveKind, bool) {
    let kind = sample_kind(&cur.probs, rng);
    let accepted = match kind {
        MoveKind::Birth => birth_with(theta, cur, lik, cfg, hyper, rng),
        MoveKind::Death => death_with(theta, cur, lik, cfg, hyper, rng),
        MoveKind::Split => split_with(theta, cur, lik, cfg, hyper, rng),
        MoveKind::Merge => merge_with(theta, cur, lik, cfg, hyper, rng),
        MoveKind::UpdateAmplitude => update_amplitude_with(theta, cur, lik, cfg, hyper, rng),
        MoveKind::UpdateScale => update_scale_with(theta, cur, lik, cfg, hyper, rng),
        MoveKind::UpdateLocation => update_location_with(theta, cur, lik, cfg, hyper, rng),
    };
    stats.record(kind, accepted);
    (kind, accepted)
}

/// Apply `steps` mixture steps. The count must not depend on `theta`: a
/// state-dependent number of applications of an invariant kernel is not
/// invariant in general.
pub fn sweep<L: Likelihood + ?Sized, R: Rng + ?Sized>(
    theta: &mut KernelExpansion,
    lik: &mut L,
    cfg: &MoveConfig,
    hyper: &Hyperparameters,
    steps: usize,
    stats: &mut MoveStats,
    rng: &mut R,
) {
    let mut cur = Current::of(theta, cfg, hyper);
    for _ in 0..steps {
        if step_from(theta, &cur, lik, cfg, hyper, stats, rng).1 {
            cur = Current::of(theta, cfg, hyper);
        }
    }
}

pub const STEP_FLOOR: f64 = 1e-6;
pub const STEP_CEIL: f64 = 1e2;

/// Tune the random-walk scales toward a 0.2–0.4 acceptance band and set the
/// birth amplitude spread from the mean squared kernel amplitude (if any).
pub fn adapt_steps(stats: &MoveStats, cfg: &MoveConfig, mean_sq_amplitude: Option<f64>) -> MoveConfig {
    fn tune(step: f64, rate: Option<f64>) -> f64 {
        let s = match rate {
            Some(r) if r > 0.4 => step * 1.5,
            Some(r) if r < 0.2 => step / 1.5,
            _ => step,
        };
        s.clamp(STEP_FLOOR, STEP_CEIL)
    }
    let mut out = cfg.clone();
    out.step_amp = tune(cfg.step_amp, stats.rate(MoveKind::UpdateAmplitude));
    out.step_scale = tune(cfg.step_scale, stats.rate(MoveKind::UpdateScale));
    out.step_loc = tune(cfg.step_loc, stats.rate(MoveKind::UpdateLocation));
    out.birth_amp_sd = match mean_sq_amplitude {
        Some(m) if m > 0.0 && m.is_finite() => m.sqrt(),
        _ => 1.0,
    };
    out
}
