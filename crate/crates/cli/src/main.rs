use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfuq::commands;
use mfuq::config::{parse_grid, parse_levels, RescaleSource, RunConfig};
use mfuq::{CliError, Result};

#[derive(Parser)]
#[command(name = "mfuq", version, about = "Multi-fidelity uncertainty quantification with a Bayesian kernel surrogate")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Io {
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long = "pi-x")]
    pi_x: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Query {
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<f64>,
    /// Comma-separated quantile levels, e.g. 0.01,0.99.
    #[arg(long)]
    levels: Option<String>,
    /// `start:stop:count` or a comma-separated list of thresholds.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write training pairs and π_x samples from the configured solver.
    Generate {
        #[command(flatten)]
        io: Io,
    },
    /// Fit a particle population to a pairs file (--out sets the diagnostics path).
    Fit {
        #[command(flatten)]
        io: Io,
    },
    /// Assimilate more pairs into a checkpoint (written to --out, or in place).
    Update {
        #[command(flatten)]
        io: Io,
    },
    /// Posterior summary of Pr[y > y0] with its cost ledger.
    Predict {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        query: Query,
    },
    /// Pr[y > y0] over a grid of thresholds.
    Cdf {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        query: Query,
    },
    /// Rank π_x samples by posterior uncertainty of q(x).
    Score {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        query: Query,
    },
    /// Posterior P(k), ESS history and per-datum summaries.
    Diagnostics {
        #[command(flatten)]
        io: Io,
    },
    /// Generate, fit and predict from the configuration alone.
    Run {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        query: Query,
    },
    /// Print the configuration schema with every default.
    Defaults {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn apply_io(cfg: &mut RunConfig, io: &Io) {
    if let Some(p) = &io.pairs {
        cfg.paths.pairs = p.clone();
    }
    if let Some(p) = &io.pi_x {
        cfg.paths.pi_x = p.clone();
    }
    if let Some(p) = &io.checkpoint {
        cfg.paths.checkpoint = p.clone();
    }
}

fn apply_query(cfg: &mut RunConfig, q: &Query) -> Result<()> {
    if let Some(y0) = q.y0 {
        if !y0.is_finite() {
            return Err(CliError::Config("--y0 must be finite".into()));
        }
        cfg.predict.y0 = Some(y0);
    }
    if let Some(l) = &q.levels {
        cfg.predict.levels = parse_levels(l)?;
    }
    if let Some(g) = &q.grid {
        parse_grid(g)?;
        cfg.predict.grid = Some(g.clone());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let stdout = &mut std::io::stdout().lock();
    match cli.command {
        Command::Generate { io } => {
            apply_io(&mut cfg, &io);
            commands::generate(&cfg)
        }
        Command::Fit { io } => {
            apply_io(&mut cfg, &io);
            if io.pi_x.is_some() {
                cfg.fit.rescale = RescaleSource::PairsAndPiX;
            }
            if let Some(p) = io.out {
                cfg.paths.diagnostics = p;
            }
            commands::fit(&cfg)
        }
        Command::Update { io } => {
            apply_io(&mut cfg, &io);
            let out = io.out.unwrap_or_else(|| cfg.paths.checkpoint.clone());
            commands::update(&cfg, &out)
        }
        Command::Predict { io, query } => {
            prepare_query(&mut cfg, &io, &query)?;
            commands::predict(&cfg, stdout)
        }
        Command::Cdf { io, query } => {
            prepare_query(&mut cfg, &io, &query)?;
            commands::cdf(&cfg, stdout)
        }
        Command::Score { io, query } => {
            prepare_query(&mut cfg, &io, &query)?;
            commands::score(&cfg, stdout)
        }
        Command::Diagnostics { io } => {
            apply_io(&mut cfg, &io);
            if io.out.is_some() {
                cfg.paths.out = io.out;
            }
            commands::diagnostics(&cfg, stdout)
        }
        Command::Run { io, query } => {
            prepare_query(&mut cfg, &io, &query)?;
            commands::run(&cfg, stdout)
        }
        Command::Defaults { out } => {
            let text = RunConfig::defaults_toml();
            match out {
                Some(p) => {
                    let mut staged = mfuq::io::Staged::new();
                    staged.add(&p, text.as_bytes())?;
                    staged.commit()
                }
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn prepare_query(cfg: &mut RunConfig, io: &Io, query: &Query) -> Result<()> {
    apply_io(cfg, io);
    if io.out.is_some() {
        cfg.paths.out = io.out.clone();
    }
    apply_query(cfg, query)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfuq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
