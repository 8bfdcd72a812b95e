//! Command implementations. Each reads its inputs from the resolved
//! configuration, computes everything in memory, then commits its outputs.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use mfuq_core::checkpoint;
use mfuq_core::model::Rescale;
use mfuq_core::predict::{MarginalXSamples, PosteriorDraws};
use mfuq_core::rjmcmc::MoveKind;
use mfuq_core::smc::Population;
use mfuq_core::solvers::cohesive::CohesiveProblem;
use mfuq_core::solvers::{generate_pairs, sample_pi_x, SolverPair};

use crate::config::{parse_grid, RescaleSource, RunConfig, SolverKind};
use crate::error::{CliError, Result};
use crate::io::{level_name, num, read_pairs, read_pi_x, sidecar_path, with_suffix, Pairs, Staged, Table};

fn provenance(cfg: &RunConfig, command: &str, extra: &[(&str, toml::Value)]) -> Vec<u8> {
    let mut t = toml::Table::new();
    t.insert("command".into(), command.into());
    t.insert("solver".into(), cfg.solver.id().into());
    t.insert("seed".into(), toml::Value::String(cfg.seed.to_string()));
    t.insert("config_hash".into(), cfg.hash().into());
    t.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    for (k, v) in extra {
        t.insert((*k).into(), v.clone());
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    t.insert("created_unix".into(), toml::Value::Integer(secs as i64));
    toml::to_string(&t).expect("table serializes").into_bytes()
}

fn file_name(p: &Path) -> toml::Value {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().into()
}

fn x_header(dim: usize) -> impl Iterator<Item = String> {
    (1..=dim).map(|i| format!("x{i}"))
}

fn emit(table: &Table, cfg: &RunConfig, path: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let bytes = table.render(&cfg.hash());
    match path {
        Some(p) => {
            let mut staged = Staged::new();
            staged.add(p, &bytes)?;
            staged.commit()
        }
        None => stdout.write_all(&bytes).map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn generate_with<P: SolverPair>(problem: &P, cfg: &RunConfig) -> (Vec<(Vec<f64>, f64)>, MarginalXSamples) {
    (
        generate_pairs(problem, cfg.solver.n_pairs, cfg.seed),
        sample_pi_x(problem, cfg.solver.n_pi_x, cfg.seed),
    )
}

/// Training pairs, π_x samples and a provenance sidecar.
pub fn generate(cfg: &RunConfig) -> Result<()> {
    let (pairs, xs, dim) = match cfg.solver.kind {
        SolverKind::Cohesive => {
            let p = CohesiveProblem::new(cfg.solver.cohesive.clone())?;
            let (a, b) = generate_with(&p, cfg);
            (a, b, p.dim())
        }
        SolverKind::Synthetic => {
            let p = cfg.solver.synthetic.build();
            let (a, b) = generate_with(&p, cfg);
            (a, b, p.dim())
        }
    };
    let mut pt = Table::new(x_header(dim).chain(["y".to_string()]));
    for (x, y) in &pairs {
        pt.push(x.iter().map(|v| num(*v)).chain([num(*y)]).collect());
    }
    let mut xt = Table::new(x_header(dim));
    for x in &xs.points {
        xt.push(x.iter().map(|v| num(*v)).collect());
    }
    let hash = cfg.hash();
    let mut staged = Staged::new();
    staged.add(&cfg.paths.pairs, &pt.render(&hash))?;
    staged.add(&cfg.paths.pi_x, &xt.render(&hash))?;
    let side = provenance(
        cfg,
        "generate",
        &[
            ("pairs", file_name(&cfg.paths.pairs)),
            ("pi_x", file_name(&cfg.paths.pi_x)),
            ("n_pairs", (cfg.solver.n_pairs as i64).into()),
            ("n_pi_x", (cfg.solver.n_pi_x as i64).into()),
        ],
    );
    staged.add(&sidecar_path(&cfg.paths.pairs), &side)?;
    staged.commit()
}

fn load_population(path: &Path) -> Result<Population> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    checkpoint::load(&bytes).map_err(|e| match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn assimilate_all(pop: &mut Population, pairs: &Pairs, path: &Path) -> Result<()> {
    if pairs.dim != pop.hyper.dim {
        return Err(CliError::Data(format!(
            "{}: {} predictors, the model has {}",
            path.display(),
            pairs.dim,
            pop.hyper.dim
        )));
    }
    for (i, (x, y)) in pairs.rows.iter().enumerate() {
        pop.assimilate(x, *y).map_err(|e| match CliError::from(e) {
            CliError::Numeric(m) => CliError::Numeric(format!("{}: data row {}: {m}", path.display(), i + 1)),
            other => other,
        })?;
    }
    Ok(())
}

/// Per-datum table: bridging, ESS, acceptance rates and posterior means.
pub fn datum_table(pop: &Population) -> Table {
    let mut header: Vec<String> = [
        "n",
        "bridging_steps",
        "gamma_first",
        "gamma_min_step",
        "gamma_final",
        "min_ess",
        "final_ess",
        "resamples",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(MoveKind::ALL.iter().map(|k| format!("acc_{}", k.name())));
    header.extend(["mean_k", "mean_sigma", "clamped"].map(String::from));
    let mut t = Table::new(header);
    for s in &pop.summaries {
        let gammas: Vec<f64> = pop.history.iter().filter(|r| r.datum + 1 == s.n).map(|r| r.gamma).collect();
        let min_step = std::iter::once(0.0)
            .chain(gammas.iter().copied())
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let mut row = vec![
            s.n.to_string(),
            s.bridging_steps.to_string(),
            gammas.first().map(|g| num(*g)).unwrap_or_default(),
            if min_step.is_finite() { num(min_step) } else { String::new() },
            gammas.last().map(|g| num(*g)).unwrap_or_default(),
            num(s.min_ess),
            num(s.final_ess),
            s.resamples.to_string(),
        ];
        row.extend(MoveKind::ALL.iter().map(|k| s.stats.rate(*k).map(num).unwrap_or_default()));
        row.extend([num(s.mean_k), num(s.mean_sigma), s.clamped.to_string()]);
        t.push(row);
    }
    t
}

fn checkpoint_sidecar(cfg: &RunConfig, command: &str, pop: &Population, inputs: &[&Path]) -> Vec<u8> {
    let files: Vec<toml::Value> = inputs.iter().map(|p| file_name(p)).collect();
    provenance(
        cfg,
        command,
        &[
            ("inputs", toml::Value::Array(files)),
            ("n_assimilated", (pop.n_assimilated() as i64).into()),
            ("n_particles", (pop.len() as i64).into()),
            ("format_version", (checkpoint::VERSION as i64).into()),
        ],
    )
}

/// Fit from scratch: checkpoint, per-datum diagnostics and a sidecar.
pub fn fit(cfg: &RunConfig) -> Result<()> {
    let pairs = read_pairs(&cfg.paths.pairs)?;
    if pairs.rows.is_empty() {
        return Err(CliError::Data(format!("{}: no training pairs", cfg.paths.pairs.display())));
    }
    let mut points: Vec<Vec<f64>> = pairs.rows.iter().map(|r| r.0.clone()).collect();
    let mut inputs = vec![cfg.paths.pairs.as_path()];
    if cfg.fit.rescale == RescaleSource::PairsAndPiX {
        let xs = read_pi_x(&cfg.paths.pi_x)?;
        if xs.points[0].len() != pairs.dim {
            return Err(CliError::Data(format!(
                "{}: {} predictors, pairs have {}",
                cfg.paths.pi_x.display(),
                xs.points[0].len(),
                pairs.dim
            )));
        }
        points.extend(xs.points);
        inputs.push(&cfg.paths.pi_x);
    }
    let rescale = Rescale::fit(pairs.dim, points.iter().map(Vec::as_slice))?;
    let hyper = cfg.prior.hyperparameters(pairs.dim);
    let mut pop = Population::new(hyper, cfg.moves.clone(), cfg.smc.clone(), rescale, cfg.seed)?;
    assimilate_all(&mut pop, &pairs, &cfg.paths.pairs)?;

    let mut staged = Staged::new();
    staged.add(&cfg.paths.checkpoint, &checkpoint::save(&pop)?)?;
    staged.add(&sidecar_path(&cfg.paths.checkpoint), &checkpoint_sidecar(cfg, "fit", &pop, &inputs))?;
    staged.add(&cfg.paths.diagnostics, &datum_table(&pop).render(&cfg.hash()))?;
    staged.commit()
}

/// Assimilate more pairs into an existing checkpoint, writing to `out`.
pub fn update(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut pop = load_population(&cfg.paths.checkpoint)?;
    let pairs = read_pairs(&cfg.paths.pairs)?;
    if !pairs.rows.is_empty() {
        assimilate_all(&mut pop, &pairs, &cfg.paths.pairs)?;
    }
    let mut staged = Staged::new();
    staged.add(out, &checkpoint::save(&pop)?)?;
    let inputs = [cfg.paths.checkpoint.as_path(), cfg.paths.pairs.as_path()];
    staged.add(&sidecar_path(out), &checkpoint_sidecar(cfg, "update", &pop, &inputs))?;
    staged.commit()
}

struct Query {
    pop: Population,
    draws: PosteriorDraws,
    xs: MarginalXSamples,
}

fn query(cfg: &RunConfig) -> Result<Query> {
    let pop = load_population(&cfg.paths.checkpoint)?;
    let xs = read_pi_x(&cfg.paths.pi_x)?;
    if xs.points[0].len() != pop.hyper.dim {
        return Err(CliError::Data(format!(
            "{}: {} predictors, the model has {}",
            cfg.paths.pi_x.display(),
            xs.points[0].len(),
            pop.hyper.dim
        )));
    }
    let draws = PosteriorDraws::new(&pop, cfg.seed)?;
    Ok(Query { pop, draws, xs })
}

fn require_y0(cfg: &RunConfig) -> Result<f64> {
    cfg.predict.y0.ok_or_else(|| CliError::Config("a threshold is required (--y0 or predict.y0)".into()))
}

/// One-row report of `Pr[y > y₀]`: posterior mean, quantile bounds and cost.
pub fn predict(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let y0 = require_y0(cfg)?;
    let q = query(cfg)?;
    let s = q.draws.event_probability(&q.xs, y0, &cfg.predict.levels)?;
    let n = q.pop.n_assimilated();
    let approx_calls = n + q.xs.len();
    let cost = n as f64 + approx_calls as f64 / cfg.predict.speed_ratio;

    let mut header = vec!["n".to_string(), "mean".to_string()];
    header.extend(s.levels.iter().map(|l| level_name(*l)));
    header.extend(["cost", "mc_se", "exact_calls", "approx_calls", "y0"].map(String::from));
    let mut t = Table::new(header);
    let mut row = vec![n.to_string(), num(s.mean)];
    row.extend(s.quantiles.iter().map(|v| num(*v)));
    row.extend([num(cost), num(s.mc_se), n.to_string(), approx_calls.to_string(), num(y0)]);
    t.push(row);
    emit(&t, cfg, cfg.paths.out.as_deref(), stdout)
}

/// `Pr[y > y₀]` over a grid of thresholds.
pub fn cdf(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let grid = match &cfg.predict.grid {
        Some(g) => parse_grid(g)?,
        None => return Err(CliError::Config("a grid is required (--grid or predict.grid)".into())),
    };
    let q = query(cfg)?;
    let curve = q.draws.cdf_curve(&q.xs, &grid, &cfg.predict.levels)?;
    let mut header = vec!["y0".to_string(), "mean".to_string()];
    header.extend(cfg.predict.levels.iter().map(|l| level_name(*l)));
    header.push("mc_se".into());
    let mut t = Table::new(header);
    for (y0, s) in grid.iter().zip(&curve) {
        let mut row = vec![num(*y0), num(s.mean)];
        row.extend(s.quantiles.iter().map(|v| num(*v)));
        row.push(num(s.mc_se));
        t.push(row);
    }
    emit(&t, cfg, cfg.paths.out.as_deref(), stdout)
}

/// π_x samples ranked by the width of the band between the outer levels.
pub fn score(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let y0 = require_y0(cfg)?;
    let levels = &cfg.predict.levels;
    let (lo, hi) = (levels[0], levels[levels.len() - 1]);
    if lo >= hi {
        return Err(CliError::Config("scoring needs two distinct quantile levels".into()));
    }
    let q = query(cfg)?;
    let ranked = q.draws.active_learning_scores(&q.xs, y0, lo, hi, cfg.predict.score)?;
    let dim = q.pop.hyper.dim;
    let mut header = vec!["rank".to_string(), "index".to_string()];
    header.extend(x_header(dim));
    header.push("score".into());
    let mut t = Table::new(header);
    for (rank, (i, s)) in ranked.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string(), i.to_string()];
        row.extend(q.xs.points[*i].iter().map(|v| num(*v)));
        row.push(num(*s));
        t.push(row);
    }
    emit(&t, cfg, cfg.paths.out.as_deref(), stdout)
}

/// Posterior `P(k)`, ESS history and per-datum summaries. With an output
/// path `p` these go to `p`, `p.ess.csv` and `p.datum.csv`.
pub fn diagnostics(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let pop = load_population(&cfg.paths.checkpoint)?;
    let mut k = Table::new(["k", "probability"]);
    for (i, p) in pop.k_histogram()?.iter().enumerate() {
        k.push(vec![i.to_string(), num(*p)]);
    }
    let mut ess = Table::new(["step", "datum", "gamma", "ess_before", "ess_after", "resampled"]);
    for (i, r) in pop.history.iter().enumerate() {
        ess.push(vec![
            i.to_string(),
            (r.datum + 1).to_string(),
            num(r.gamma),
            num(r.ess_before),
            num(r.ess_after),
            r.resampled.to_string(),
        ]);
    }
    let datum = datum_table(&pop);
    let hash = cfg.hash();
    match cfg.paths.out.as_deref() {
        Some(p) => {
            let mut staged = Staged::new();
            staged.add(p, &k.render(&hash))?;
            staged.add(&with_suffix(p, ".ess.csv"), &ess.render(&hash))?;
            staged.add(&with_suffix(p, ".datum.csv"), &datum.render(&hash))?;
            staged.commit()
        }
        None => {
            let mut bytes = k.render(&hash);
            bytes.push(b'\n');
            bytes.extend(ess.render(&hash));
            bytes.push(b'\n');
            bytes.extend(datum.render(&hash));
            stdout.write_all(&bytes).map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

/// Generate, fit and predict (plus the CDF curve when a grid is set).
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    require_y0(cfg)?;
    generate(cfg)?;
    fit(cfg)?;
    predict(cfg, stdout)?;
    if cfg.predict.grid.is_some() {
        let mut c = cfg.clone();
        c.paths.out = cfg.paths.out.as_deref().map(|p| with_suffix(p, ".cdf.csv"));
        cdf(&c, stdout)?;
    }
    Ok(())
}
