//! With a constant likelihood every move type, and the full mixture, must
//! leave the prior invariant. Chains start from exact prior draws, so any
//! drift in the pooled end states indicates a wrong acceptance ratio.

use mfuq_core::model::{sample_prior, Hyperparameters, KernelExpansion};
use mfuq_core::rjmcmc::{
    birth, death, merge, select_move, split, update_amplitude, update_location, update_scale, FlatLikelihood,
    MoveConfig, MoveKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BINS: usize = 20;
const CHAINS: usize = 10_000;
const SWEEPS: usize = 25;
const STEPS_PER_SWEEP: usize = 2;

fn tv(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    0.5 * counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum::<f64>()
}

fn tv_by_cdf(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut counts = [0usize; BINS];
    for &v in values {
        counts[((cdf(v) * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    tv(&counts, &[1.0 / BINS as f64; BINS])
}

struct Pooled {
    ks: Vec<usize>,
    scales: Vec<f64>,
    amplitudes: Vec<f64>,
    centers: Vec<f64>,
}

fn run(kinds: &[MoveKind], hyper: &Hyperparameters, seed: u64) -> Pooled {
    let cfg = MoveConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Pooled { ks: vec![], scales: vec![], amplitudes: vec![], centers: vec![] };
    for _ in 0..CHAINS {
        let mut theta: KernelExpansion = sample_prior(hyper, &mut rng);
        for _ in 0..SWEEPS {
            for _ in 0..STEPS_PER_SWEEP {
                // Moves outside `kinds` act as "stay", which keeps each subset reversible.
                let kind = select_move(&theta, &cfg, hyper, &mut rng);
                if !kinds.contains(&kind) {
                    continue;
                }
                let lik = &mut FlatLikelihood;
                match kind {
                    MoveKind::Birth => birth(&mut theta, lik, &cfg, hyper, &mut rng),
                    MoveKind::Death => death(&mut theta, lik, &cfg, hyper, &mut rng),
                    MoveKind::Split => split(&mut theta, lik, &cfg, hyper, &mut rng),
                    MoveKind::Merge => merge(&mut theta, lik, &cfg, hyper, &mut rng),
                    MoveKind::UpdateAmplitude => update_amplitude(&mut theta, lik, &cfg, hyper, &mut rng),
                    MoveKind::UpdateScale => update_scale(&mut theta, lik, &cfg, hyper, &mut rng),
                    MoveKind::UpdateLocation => update_location(&mut theta, lik, &cfg, hyper, &mut rng),
                };
                theta.check_invariants(hyper.k_max).unwrap();
            }
        }
        out.ks.push(theta.k());
        out.scales.extend(&theta.scales);
        out.amplitudes.push(theta.intercept);
        out.amplitudes.extend(&theta.amplitudes);
        out.centers.extend(&theta.centers);
    }
    out
}

fn check(kinds: &[MoveKind], seed: u64) {
    let mut hyper = Hyperparameters::with_dim(2);
    hyper.a_mu = 0.05;
    let pooled = run(kinds, &hyper, seed);

    let kmax = 12;
    let mut counts = vec![0usize; kmax + 1];
    for &k in &pooled.ks {
        counts[k.min(kmax)] += 1;
    }
    let mut probs: Vec<f64> = (0..kmax).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    let tv_k = tv(&counts, &probs);

    // a_τ = 1: F(τ) = τ / (τ + 1/a_μ)
    let tv_tau = tv_by_cdf(&pooled.scales, |t| t / (t + 1.0 / hyper.a_mu));
    // Student-t with 2 a0 = 2 degrees of freedom and unit scale.
    let tv_amp = tv_by_cdf(&pooled.amplitudes, |a| 0.5 + a / (2.0 * (2.0 + a * a).sqrt()));
    let tv_center = tv_by_cdf(&pooled.centers, |c| c);

    let names: Vec<_> = kinds.iter().map(|k| k.name()).collect();
    println!("{names:?}: tv_k={tv_k:.4} tv_tau={tv_tau:.4} tv_amp={tv_amp:.4} tv_center={tv_center:.4}");
    for (label, v) in [("k", tv_k), ("tau", tv_tau), ("amplitude", tv_amp), ("center", tv_center)] {
        assert!(v < 0.05, "{names:?} {label} marginal TV {v}");
    }
}

#[test]
fn birth_death_preserves_prior() {
    check(&[MoveKind::Birth, MoveKind::Death], 1);
}

#[test]
fn split_merge_preserves_prior() {
    check(&[MoveKind::Split, MoveKind::Merge], 2);
}

#[test]
fn fixed_dimension_updates_preserve_prior() {
    check(&[MoveKind::UpdateAmplitude, MoveKind::UpdateScale, MoveKind::UpdateLocation], 3);
}

#[test]
fn full_mixture_preserves_prior() {
    check(&MoveKind::ALL, 4);
}

#[test]
fn prior_draws_match_truncated_geometric() {
    let mut hyper = Hyperparameters::with_dim(1);
    hyper.k_max = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut counts = vec![0usize; 7];
    for _ in 0..100_000 {
        counts[sample_prior(&hyper, &mut rng).k()] += 1;
    }
    let norm = 1.0 - 0.5f64.powi(7);
    let probs: Vec<f64> = (0..7).map(|k| 0.5f64.powi(k + 1) / norm).collect();
    assert!(tv(&counts, &probs) < 0.01);
}
