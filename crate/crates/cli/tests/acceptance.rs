//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails. Sizes are chosen for a single
//! core. Set `MFUQ_ACCEPTANCE=3,5` to run a subset.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mfuq_core::checkpoint;
use mfuq_core::model::{
    log_marginal_likelihood, log_tempered_likelihood, sample_prior, Hyperparameters, Kernel,
    Rescale, TrainingSet,
};
use mfuq_core::predict::{PosteriorDraws, PredictionSummary, DEFAULT_LEVELS};
use mfuq_core::rjmcmc::{
    merge_params, split_jacobian, split_params, sweep, FlatLikelihood, MergeScaleRule, MoveConfig, MoveStats,
};
use mfuq_core::smc::{ess_of, multinomial_indices, Population, SmcConfig};
use mfuq_core::solvers::cohesive::{element_energy_closed_form, released_energy, CohesiveConfig, CohesiveProblem};
use mfuq_core::solvers::synthetic::Synthetic;
use mfuq_core::solvers::{generate_pairs, sample_pi_x};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("MFUQ_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome, f64); 9] = [
        (1, "prior invariance", prior_invariance, 120.0),
        (2, "split/merge algebra", split_merge_algebra, 10.0),
        (3, "tempering endpoints", tempering_endpoints, 10.0),
        (4, "conjugate oracle", conjugate_oracle, 300.0),
        (5, "smc mechanics", smc_mechanics, 120.0),
        (6, "synthetic ground truth", synthetic_ground_truth, 1800.0),
        (7, "cohesive desk-scale run", cohesive_desk_scale, 7200.0),
        (8, "two-predictor improvement", two_predictor_improvement, 1800.0),
        (9, "determinism and persistence", determinism_and_persistence, 600.0),
    ];
    let mut failed = 0;
    for (id, name, run, limit) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = outcome.pass && secs < limit;
        failed += usize::from(!pass);
        println!(
            "criterion {id} ({name}): {} | {} | {secs:.1}s of {limit:.0}s",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn tv(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    0.5 * counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum::<f64>()
}

fn tv_by_cdf(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    const BINS: usize = 20;
    let mut counts = [0usize; BINS];
    for &v in values {
        counts[((cdf(v) * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    tv(&counts, &[1.0 / BINS as f64; BINS])
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn population(dim: usize, n_particles: usize, n_sweeps: usize, rescale: Rescale, seed: u64) -> Population {
    let config = SmcConfig { n_particles, n_sweeps, ..SmcConfig::default() };
    Population::new(Hyperparameters::with_dim(dim), MoveConfig::default(), config, rescale, seed).unwrap()
}

/// Rescale covering both the training predictors and the π_x samples.
fn joint_rescale(pairs: &[(Vec<f64>, f64)], xs: &[Vec<f64>]) -> Rescale {
    let dim = xs[0].len();
    Rescale::fit(dim, pairs.iter().map(|p| p.0.as_slice()).chain(xs.iter().map(Vec::as_slice))).unwrap()
}

fn band(s: &PredictionSummary) -> (f64, f64) {
    (s.quantiles[0], s.quantiles[s.quantiles.len() - 1])
}

// ------------------------------------------------------------ criterion 1

fn prior_invariance() -> Outcome {
    const CHAINS: usize = 4_000;
    const SWEEPS: usize = 25;
    let hyper = Hyperparameters::with_dim(1);
    let cfg = MoveConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut ks, mut scales, mut amps) = (Vec::new(), Vec::new(), Vec::new());
    let mut stats = MoveStats::default();
    for _ in 0..CHAINS {
        let mut theta = sample_prior(&hyper, &mut rng);
        for _ in 0..SWEEPS {
            // Sweep length from the prior mean of k, fixed across chains.
            sweep(&mut theta, &mut FlatLikelihood, &cfg, &hyper, 2, &mut stats, &mut rng);
        }
        ks.push(theta.k());
        scales.extend(&theta.scales);
        amps.push(theta.intercept);
        amps.extend(&theta.amplitudes);
    }
    let kcap = 12;
    let mut counts = vec![0usize; kcap + 1];
    ks.iter().for_each(|&k| counts[k.min(kcap)] += 1);
    let mut probs: Vec<f64> = (0..kcap).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    let tv_k = tv(&counts, &probs);
    let tv_tau = tv_by_cdf(&scales, |t| t / (t + 1.0 / hyper.a_mu));
    let tv_amp = tv_by_cdf(&amps, |a| 0.5 + a / (2.0 * (2.0 + a * a).sqrt()));
    let accepted: u64 = stats.accepted.iter().sum();
    Outcome::new(
        tv_k < 0.05 && tv_tau < 0.05 && tv_amp < 0.05 && accepted > 0,
        format!(
            "{CHAINS} chains x {SWEEPS} sweeps of the 7-move mixture from prior draws: TV k={tv_k:.4} tau={tv_tau:.4} amplitude={tv_amp:.4} (limit 0.05)"
        ),
    )
}

// ------------------------------------------------------------ criterion 2

fn split_map(v: &[f64], dim: usize) -> Vec<f64> {
    // v = (a, τ, x[dim], u_τ, u_x[dim], u_a)
    let parent = Kernel { amplitude: v[0], scale: v[1], center: v[2..2 + dim].to_vec() };
    let u_tau = v[2 + dim];
    let u_x = &v[3 + dim..3 + 2 * dim];
    let u_a = v[3 + 2 * dim];
    let (k1, k2) = split_params(&parent, u_tau, u_x, u_a).unwrap();
    let mut out = vec![k1.amplitude, k1.scale];
    out.extend(&k1.center);
    out.extend([k2.amplitude, k2.scale]);
    out.extend(&k2.center);
    out
}

fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    det
}

fn split_merge_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_roundtrip = 0.0f64;
    for _ in 0..10_000 {
        let dim = rng.random_range(1..4);
        let tau: f64 = rng.random_range(0.5..1e3);
        let parent = Kernel {
            amplitude: rng.random_range(-3.0..3.0),
            scale: tau,
            center: (0..dim).map(|_| rng.random_range(0.3..0.7)).collect(),
        };
        let radius = 0.5 / tau.sqrt();
        let u_x: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius) / dim as f64).collect();
        let u_tau = rng.random_range(0.01..0.99);
        let u_a = rng.random_range(-0.5..0.5);
        let Ok((k1, k2)) = split_params(&parent, u_tau, &u_x, u_a) else { continue };
        let back = merge_params(&k1, &k2, MergeScaleRule::Reciprocal);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        let mut err = rel(back.scale, parent.scale).max((back.amplitude - parent.amplitude).abs() / parent.amplitude.abs().max(1.0));
        for (c, p) in back.center.iter().zip(&parent.center) {
            err = err.max(rel(*c, *p));
        }
        worst_roundtrip = worst_roundtrip.max(err);
    }

    let mut worst_jac = 0.0f64;
    for trial in 0..100 {
        let dim = 1 + trial % 3;
        let mut v: Vec<f64> = vec![rng.random_range(-2.0..2.0), rng.random_range(0.5..50.0)];
        v.extend((0..dim).map(|_| rng.random_range(0.2..0.8)));
        let u_tau: f64 = rng.random_range(0.05..0.95);
        v.push(u_tau);
        v.extend((0..dim).map(|_| rng.random_range(-0.05..0.05)));
        v.push(rng.random_range(-0.5..0.5));
        let n = v.len();
        let mut jac = vec![vec![0.0; n]; n];
        for c in 0..n {
            let h = 1e-6 * v[c].abs().max(1e-2);
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp[c] += h;
            vm[c] -= h;
            let (fp, fm) = (split_map(&vp, dim), split_map(&vm, dim));
            for r in 0..n {
                jac[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let fd = determinant(jac).abs();
        let closed = split_jacobian(v[1], u_tau, dim);
        worst_jac = worst_jac.max(((fd - closed) / closed).abs());
    }
    Outcome::new(
        worst_roundtrip < 1e-12 && worst_jac < 1e-6,
        format!("roundtrip max rel err {worst_roundtrip:.2e} (limit 1e-12), Jacobian vs FD max rel err {worst_jac:.2e} on 100 inputs (limit 1e-6)"),
    )
}

// ------------------------------------------------------------ criterion 3

fn tempering_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(1..4);
        let hyper = Hyperparameters::with_dim(dim);
        let theta = sample_prior(&hyper, &mut rng);
        let n = rng.random_range(0..30);
        let mut data = TrainingSet::empty(Rescale { min: vec![0.0; dim], max: vec![1.0; dim] });
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
            data.push(&x, rng.random_range(-2.0..2.0));
        }
        let next_x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let next_y = rng.random_range(-2.0..2.0);
        let mut full = data.clone();
        full.push(&next_x, next_y);
        let at0 = log_tempered_likelihood(&theta, &data, (&next_x, next_y), 0.0, &hyper).unwrap();
        let at1 = log_tempered_likelihood(&theta, &data, (&next_x, next_y), 1.0, &hyper).unwrap();
        let m0 = log_marginal_likelihood(&theta, &data, &hyper);
        let m1 = log_marginal_likelihood(&theta, &full, &hyper);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        worst = worst.max(rel(at0, m0)).max(rel(at1, m1));
    }
    Outcome::new(worst < 1e-12, format!("max deviation {worst:.2e} over 1000 draws (limit 1e-12)"))
}

// ------------------------------------------------------------ criterion 4

/// Posterior moments from a Gibbs sampler for `y = a₀ + ε` with the
/// intercept prior `N(0, v)`, `v ~ IG(a0, b0)` and `σ⁻² ~ Gamma(a, b)`.
fn gibbs_oracle(y: &[f64], hyper: &Hyperparameters, iters: usize, seed: u64) -> [(f64, f64); 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = y.len() as f64;
    let sum: f64 = y.iter().sum();
    let (mut v, mut prec) = (1.0, 1.0);
    let burn = 1000;
    let batches = 1000;
    let per = iters / batches;
    let mut batch = vec![[0.0f64; 3]; batches];
    let mut all = [0.0f64; 2];
    for it in 0..burn + iters {
        let var = 1.0 / (n * prec + 1.0 / v);
        let a0 = var * prec * sum + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let g = Gamma::new(hyper.a0_amp + 0.5, 1.0 / (hyper.b0_amp + 0.5 * a0 * a0)).unwrap();
        v = 1.0 / g.sample(&mut rng);
        let sse: f64 = y.iter().map(|yi| (yi - a0).powi(2)).sum();
        let shape = hyper.a_noise + 0.5 * n;
        let rate = hyper.b_noise + 0.5 * sse;
        prec = Gamma::new(shape, 1.0 / rate).unwrap().sample(&mut rng);
        if it >= burn {
            let b = (it - burn) / per;
            // Rao–Blackwellized precision mean.
            batch[b][0] += a0;
            batch[b][1] += a0 * a0;
            batch[b][2] += shape / rate;
            all[0] += a0;
            all[1] += a0 * a0;
        }
    }
    let m = all[0] / iters as f64;
    let var = all[1] / iters as f64 - m * m;
    let stat = |f: &dyn Fn(&[f64; 3]) -> f64, mean: f64| {
        let s2: f64 = batch.iter().map(|b| (f(b) - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (s2 / batches as f64).sqrt()
    };
    let bm = |b: &[f64; 3]| b[0] / per as f64;
    let bv = |b: &[f64; 3]| b[1] / per as f64 - (b[0] / per as f64).powi(2);
    let bp = |b: &[f64; 3]| b[2] / per as f64;
    let mp = batch.iter().map(bp).sum::<f64>() / batches as f64;
    [(m, stat(&bm, m)), (var, stat(&bv, var)), (mp, stat(&bp, mp))]
}

fn conjugate_oracle() -> Outcome {
    let mut hyper = Hyperparameters::with_dim(1);
    hyper.k_max = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let data: Vec<(f64, f64)> =
        (0..20).map(|_| (rng.random::<f64>(), 0.5 + 0.2 * rng.sample::<f64, _>(StandardNormal))).collect();
    let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
    let oracle = gibbs_oracle(&ys, &hyper, 1_000_000, 405);

    const REPS: usize = 30;
    let mut reps = vec![[0.0f64; 3]; REPS];
    for (r, est) in reps.iter_mut().enumerate() {
        let config = SmcConfig { n_particles: 1000, ..SmcConfig::default() };
        let rescale = Rescale { min: vec![0.0], max: vec![1.0] };
        let mut pop = Population::new(hyper.clone(), MoveConfig::default(), config, rescale, 500 + r as u64).unwrap();
        for (x, y) in &data {
            pop.assimilate(&[*x], *y).unwrap();
        }
        let (m, _) = pop.estimate(|p| p.theta.intercept).unwrap();
        let (m2, _) = pop.estimate(|p| p.theta.intercept.powi(2)).unwrap();
        let (mp, _) = pop
            .estimate(|p| {
                let (shape, rate) = pop.noise_posterior(p);
                shape / rate
            })
            .unwrap();
        *est = [m, m2 - m * m, mp];
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, name) in ["E[a0]", "Var[a0]", "E[1/sigma^2]"].iter().enumerate() {
        let vals: Vec<f64> = reps.iter().map(|r| r[i]).collect();
        let mean = vals.iter().sum::<f64>() / REPS as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (REPS - 1) as f64).sqrt();
        let se = (sd * sd / REPS as f64 + oracle[i].1.powi(2)).sqrt();
        let z = (mean - oracle[i].0) / se;
        ok &= z.abs() < 3.0;
        parts.push(format!("{name} smc={mean:.5e} gibbs={:.5e} z={z:.2}", oracle[i].0));
    }
    Outcome::new(ok, format!("{} (|z| < 3; {REPS} SMC replicates, 1e6 Gibbs iterations)", parts.join(", ")))
}

// ------------------------------------------------------------ criterion 5

fn smc_mechanics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut ess_ok = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..500);
        let spread = rng.random_range(0.0..50.0);
        let lw: Vec<f64> = (0..n).map(|_| spread * rng.random::<f64>()).collect();
        let e = ess_of(&lw).unwrap();
        ess_ok &= e >= 1.0 - 1e-9 && e <= n as f64 * (1.0 + 1e-12);
        let uniform = ess_of(&vec![-3.7; n]).unwrap();
        ess_ok &= (uniform - n as f64).abs() < 1e-9 * n as f64;
    }

    let n = 16;
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(2)).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let trials = 10_000;
    let mut counts = vec![0u64; n];
    for _ in 0..trials {
        for i in multinomial_indices(&w, n, &mut rng) {
            counts[i] += 1;
        }
    }
    let max_z = (0..n)
        .map(|i| {
            let mean = counts[i] as f64 / trials as f64;
            let expect = n as f64 * w[i];
            let se = (n as f64 * w[i] * (1.0 - w[i]) / trials as f64).sqrt();
            ((mean - expect) / se).abs()
        })
        .fold(0.0, f64::max);

    let fam = Synthetic::one_d();
    let pairs = generate_pairs(&fam, 30, 506);
    let rescale = Rescale::fit(1, pairs.iter().map(|p| p.0.as_slice())).unwrap();
    let mut pop = population(1, 300, 2, rescale, 507);
    for (x, y) in &pairs {
        pop.assimilate(x, *y).unwrap();
    }
    let n_part = pop.len() as f64;
    let zeta = pop.config.zeta;
    let worst = pop
        .history
        .iter()
        .map(|r| r.ess_after - (zeta * r.ess_before - 1e-6 * n_part))
        .fold(f64::INFINITY, f64::min);
    let certified = worst >= 0.0;
    Outcome::new(
        ess_ok && max_z < 3.0 && certified,
        format!(
            "ESS bounds {}, offspring max |z|={max_z:.2} over {trials} draws, {} bridging steps certified (min slack {worst:.3e})",
            if ess_ok { "hold" } else { "violated" },
            pop.history.len()
        ),
    )
}

// ------------------------------------------------------------ criterion 6

const C6_SEEDS: u64 = 20;
const C6_LONG_SEEDS: u64 = 10;
const C6_PARTICLES: usize = 400;
const C6_SWEEPS: usize = 3;
const C6_Y0: f64 = 1.1;
const PI_X_COUNT: usize = 5000;

fn synthetic_ground_truth() -> Outcome {
    let fam = Synthetic::one_d();
    let oracle = fam.oracle_exceedance(&[C6_Y0], 1_000_000, 600)[0];
    let mut covered = 0;
    let (mut err50, mut err200) = (Vec::new(), Vec::new());
    for seed in 0..C6_SEEDS {
        let pairs = generate_pairs(&fam, 200, 610 + seed);
        let xs = sample_pi_x(&fam, PI_X_COUNT, 640 + seed);
        let rescale = joint_rescale(&pairs[..50], &xs.points);
        let mut pop = population(1, C6_PARTICLES, C6_SWEEPS, rescale, 670 + seed);
        for (x, y) in &pairs[..50] {
            pop.assimilate(x, *y).unwrap();
        }
        let s = PosteriorDraws::new(&pop, seed).unwrap().event_probability(&xs, C6_Y0, &DEFAULT_LEVELS).unwrap();
        let (lo, hi) = band(&s);
        covered += usize::from(lo <= oracle && oracle <= hi);
        err50.push((s.mean - oracle).abs() / oracle);
        if seed < C6_LONG_SEEDS {
            for (x, y) in &pairs[50..] {
                pop.assimilate(x, *y).unwrap();
            }
            let s = PosteriorDraws::new(&pop, seed).unwrap().event_probability(&xs, C6_Y0, &DEFAULT_LEVELS).unwrap();
            err200.push((s.mean - oracle).abs() / oracle);
        }
    }
    let (m50, m200) = (median(err50), median(err200));
    Outcome::new(
        covered >= 18 && m50 < 0.5 && m200 < 0.2,
        format!(
            "oracle Pr[y>{C6_Y0}]={oracle:.4e}; band covers {covered}/{C6_SEEDS} (need 18); median rel err n=50 {m50:.3} (<0.5), n=200 {m200:.3} (<0.2, {C6_LONG_SEEDS} seeds); N={C6_PARTICLES}"
        ),
    )
}

// ------------------------------------------------------------ criterion 7

const C7_ORACLE_RUNS: usize = 10_000;
const C7_PARTICLES: usize = 500;
const C7_SWEEPS: usize = 3;
const C7_B_NOISE: f64 = 1e-12;

fn cohesive_desk_scale() -> Outcome {
    let cfg = CohesiveConfig::default();
    let problem = CohesiveProblem::new(cfg.clone()).unwrap();

    // Integrator against the closed-form element energy.
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let t = rng.random_range(0.5..1.5);
        let g = rng.random_range(0.5e-3..1.5e-3);
        let numeric = released_energy(&[t], &[g], cfg.delta_max, cfg.delta_increment);
        let exact = element_energy_closed_form(t, g, cfg.delta_max);
        worst = worst.max((numeric - exact).abs() / exact);
    }

    let oracle_runs = generate_pairs(&problem, C7_ORACLE_RUNS, 701);
    let mut ys: Vec<f64> = oracle_runs.iter().map(|r| r.1).collect();
    ys.sort_by(f64::total_cmp);
    let y0 = ys[(0.99 * C7_ORACLE_RUNS as f64) as usize - 1];
    let p_oracle = ys.iter().filter(|&&y| y > y0).count() as f64 / C7_ORACLE_RUNS as f64;

    let pairs = generate_pairs(&problem, 150, 702);
    let xs = sample_pi_x(&problem, PI_X_COUNT, 703);
    let rescale = joint_rescale(&pairs, &xs.points);
    // y is of order 1e-4 here, so the noise rate is rescaled by (1e-3)^2 to keep
    // it small next to the residual sum of squares.
    let hyper = Hyperparameters { b_noise: C7_B_NOISE, ..Hyperparameters::with_dim(1) };
    let config = SmcConfig { n_particles: C7_PARTICLES, n_sweeps: C7_SWEEPS, ..SmcConfig::default() };
    let mut pop = Population::new(hyper, MoveConfig::default(), config, rescale, 704).unwrap();
    let mut rows = Vec::new();
    for (i, (x, y)) in pairs.iter().enumerate() {
        pop.assimilate(x, *y).unwrap();
        if [10, 50, 150].contains(&(i + 1)) {
            let s = PosteriorDraws::new(&pop, 705).unwrap().event_probability(&xs, y0, &DEFAULT_LEVELS).unwrap();
            rows.push((i + 1, s, pop.mean_sigma().unwrap()));
        }
    }
    let contains = rows.iter().all(|(_, s, _)| band(s).0 <= p_oracle && p_oracle <= band(s).1);
    let width = |s: &PredictionSummary| band(s).1 - band(s).0;
    let shrinks = width(&rows[2].1) < width(&rows[0].1);
    let converges = (rows[2].1.mean - p_oracle).abs() < (rows[0].1.mean - p_oracle).abs();
    let sigma_narrows = rows[2].2 < rows[0].2;
    let table: Vec<String> = rows
        .iter()
        .map(|(n, s, sig)| {
            format!("n={n}: mean={:.3e} [{:.3e}, {:.3e}] E[sigma]={sig:.2e}", s.mean, band(s).0, band(s).1)
        })
        .collect();
    Outcome::new(
        worst < 1e-6 && contains && shrinks && converges && sigma_narrows,
        format!(
            "integrator rel err {worst:.1e}; b_noise={C7_B_NOISE:e}; y0={y0:.4e} (oracle p={p_oracle:.3e} from {C7_ORACLE_RUNS} exact runs); {}; contains={contains} shrinks={shrinks} converges={converges} sigma_narrows={sigma_narrows}",
            table.join("; ")
        ),
    )
}

// ------------------------------------------------------------ criterion 8

const C8_SEEDS: u64 = 10;
const C8_PARTICLES: usize = 300;

fn cdf_error(fam: Synthetic, pairs: &[(Vec<f64>, f64)], seed: u64, grid: &[f64], oracle: &[f64]) -> f64 {
    let dim = pairs[0].0.len();
    let xs = sample_pi_x(&fam, PI_X_COUNT, 840 + seed);
    let rescale = joint_rescale(pairs, &xs.points);
    let mut pop = population(dim, C8_PARTICLES, C6_SWEEPS, rescale, 860 + seed);
    for (x, y) in pairs {
        pop.assimilate(x, *y).unwrap();
    }
    let curve = PosteriorDraws::new(&pop, seed).unwrap().cdf_curve(&xs, grid, &DEFAULT_LEVELS).unwrap();
    median(curve.iter().zip(oracle).map(|(s, o)| (s.mean - o).abs()).collect())
}

fn two_predictor_improvement() -> Outcome {
    let both = Synthetic::two_d();
    let first = both.first_only();
    // Thresholds spanning the bulk and the upper tail of y.
    let grid: Vec<f64> = (0..=20).map(|i| -1.4 + 3.4 * i as f64 / 20.0).collect();
    let oracle = both.oracle_exceedance(&grid, 1_000_000, 800);
    let (mut e2, mut e1) = (Vec::new(), Vec::new());
    for seed in 0..C8_SEEDS {
        let pairs2 = generate_pairs(&both, 50, 820 + seed);
        let pairs1 = generate_pairs(&first, 50, 820 + seed);
        e2.push(cdf_error(both, &pairs2, seed, &grid, &oracle));
        e1.push(cdf_error(first, &pairs1, seed, &grid, &oracle));
    }
    let wins = e2.iter().zip(&e1).filter(|(a, b)| a < b).count();
    let (m2, m1) = (median(e2), median(e1));
    Outcome::new(
        m2 < m1,
        format!("median abs CDF error: both predictors {m2:.4e}, x1 only {m1:.4e}; both better on {wins}/{C8_SEEDS} seeds"),
    )
}

// ------------------------------------------------------------ criterion 9

fn mfuq(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_mfuq")).current_dir(dir).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn read_band(report: &[u8]) -> (f64, f64, f64) {
    let text = String::from_utf8_lossy(report);
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<&str> = lines[1].split(',').collect();
    let row: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
    let col = |n: &str| row[header.iter().position(|h| *h == n).unwrap()];
    (col("q01"), col("mean"), col("q99"))
}

fn determinism_and_persistence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = "seed = 9\n[smc]\nn_particles = 300\nn_sweeps = 3\n[solver]\nkind = \"synthetic\"\nn_pairs = 150\nn_pi_x = 5000\n[fit]\nrescale = \"pairs_and_pi_x\"\n[predict]\ny0 = 0.9\n";
    std::fs::write(d.join("run.toml"), config).unwrap();

    mfuq(d, &["generate", "--config", "run.toml"]);
    let pairs = std::fs::read(d.join("pairs.csv")).unwrap();
    mfuq(d, &["generate", "--config", "run.toml"]);
    let same_pairs = pairs == std::fs::read(d.join("pairs.csv")).unwrap();

    // Single fit on all 150 pairs, twice.
    mfuq(d, &["fit", "--config", "run.toml", "--checkpoint", "all.ckpt"]);
    let ckpt = std::fs::read(d.join("all.ckpt")).unwrap();
    let report_all = mfuq(d, &["predict", "--config", "run.toml", "--checkpoint", "all.ckpt"]);
    mfuq(d, &["fit", "--config", "run.toml", "--checkpoint", "again.ckpt"]);
    let report_again = mfuq(d, &["predict", "--config", "run.toml", "--checkpoint", "again.ckpt"]);
    let deterministic = same_pairs && ckpt == std::fs::read(d.join("again.ckpt")).unwrap() && report_all == report_again;

    let roundtrip = checkpoint::save(&checkpoint::load(&ckpt).unwrap()).unwrap() == ckpt;

    // Fit on the first 50, then update with the remaining 100.
    let text = String::from_utf8(pairs).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let (head, body) = (&lines[..2], &lines[2..]);
    let part = |rows: &[&str]| format!("{}\n{}\n", head.join("\n"), rows.join("\n"));
    std::fs::write(d.join("first.csv"), part(&body[..50])).unwrap();
    std::fs::write(d.join("rest.csv"), part(&body[50..])).unwrap();
    mfuq(d, &["fit", "--config", "run.toml", "--pairs", "first.csv", "--checkpoint", "part.ckpt"]);
    mfuq(d, &["update", "--config", "run.toml", "--checkpoint", "part.ckpt", "--pairs", "rest.csv", "--out", "updated.ckpt"]);
    let report_upd = mfuq(d, &["predict", "--config", "run.toml", "--checkpoint", "updated.ckpt"]);
    let (a, b) = (read_band(&report_all), read_band(&report_upd));
    let overlap = a.0 <= b.2 && b.0 <= a.2;
    Outcome::new(
        deterministic && roundtrip && overlap,
        format!(
            "reruns identical={deterministic}, checkpoint roundtrip bit-exact={roundtrip}; Pr[y>0.9] fit(150) {:.3e} [{:.3e}, {:.3e}] vs fit(50)+update(100) {:.3e} [{:.3e}, {:.3e}] overlap={overlap}",
            a.1, a.0, a.2, b.1, b.0, b.2
        ),
    )
}
