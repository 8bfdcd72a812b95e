//! Run configuration read from a TOML file.
//!
//! Every section and key is optional; omitted values take the defaults
//! below and unknown keys are rejected. `mfuq defaults` prints the full tree.

use std::path::{Path, PathBuf};

use mfuq_core::model::Hyperparameters;
use mfuq_core::predict::ScoreKind;
use mfuq_core::rjmcmc::MoveConfig;
use mfuq_core::smc::SmcConfig;
use mfuq_core::solvers::cohesive::CohesiveConfig;
use mfuq_core::solvers::synthetic::Synthetic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub prior: PriorConfig,
    pub moves: MoveConfig,
    pub smc: SmcConfig,
    pub solver: SolverConfig,
    pub fit: FitConfig,
    pub predict: PredictConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            prior: PriorConfig::default(),
            moves: MoveConfig::default(),
            smc: SmcConfig::default(),
            solver: SolverConfig::default(),
            fit: FitConfig::default(),
            predict: PredictConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Prior hyperparameters; the predictor dimension comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub s: f64,
    pub a_tau: f64,
    pub a_mu: f64,
    pub a0_amp: f64,
    pub b0_amp: f64,
    pub a_noise: f64,
    pub b_noise: f64,
    pub k_max: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let h = Hyperparameters::with_dim(1);
        Self {
            s: h.s,
            a_tau: h.a_tau,
            a_mu: h.a_mu,
            a0_amp: h.a0_amp,
            b0_amp: h.b0_amp,
            a_noise: h.a_noise,
            b_noise: h.b_noise,
            k_max: h.k_max,
        }
    }
}

impl PriorConfig {
    pub fn hyperparameters(&self, dim: usize) -> Hyperparameters {
        Hyperparameters {
            s: self.s,
            a_tau: self.a_tau,
            a_mu: self.a_mu,
            a0_amp: self.a0_amp,
            b0_amp: self.b0_amp,
            a_noise: self.a_noise,
            b_noise: self.b_noise,
            k_max: self.k_max,
            dim,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Cohesive,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub n_pairs: usize,
    pub n_pi_x: usize,
    pub cohesive: CohesiveConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Cohesive,
            n_pairs: 150,
            n_pi_x: mfuq_core::solvers::DEFAULT_PI_X_COUNT,
            cohesive: CohesiveConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn id(&self) -> String {
        match self.kind {
            SolverKind::Cohesive => "cohesive".into(),
            SolverKind::Synthetic => format!("synthetic/{}", self.synthetic.family.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticFamily {
    #[default]
    OneD,
    TwoD,
    TwoDFirstOnly,
}

impl SyntheticFamily {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticFamily::OneD => "one_d",
            SyntheticFamily::TwoD => "two_d",
            SyntheticFamily::TwoDFirstOnly => "two_d_first_only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub family: SyntheticFamily,
    /// Noise level; the family default when omitted.
    pub noise: Option<f64>,
    /// Weight of the skewed second-input term (two-input families only).
    pub coupling: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { family: SyntheticFamily::OneD, noise: None, coupling: None }
    }
}

impl SyntheticConfig {
    pub fn build(&self) -> Synthetic {
        let Synthetic::OneD { noise: n1 } = Synthetic::one_d() else { unreachable!() };
        let Synthetic::TwoD { noise: n2, coupling: c2 } = Synthetic::two_d() else { unreachable!() };
        match self.family {
            SyntheticFamily::OneD => Synthetic::OneD { noise: self.noise.unwrap_or(n1) },
            SyntheticFamily::TwoD => {
                Synthetic::TwoD { noise: self.noise.unwrap_or(n2), coupling: self.coupling.unwrap_or(c2) }
            }
            SyntheticFamily::TwoDFirstOnly => Synthetic::TwoDFirstOnly {
                noise: self.noise.unwrap_or(n2),
                coupling: self.coupling.unwrap_or(c2),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleSource {
    /// Min–max of the training predictors.
    #[default]
    Pairs,
    /// Min–max over the training predictors and the π_x samples.
    PairsAndPiX,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub rescale: RescaleSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub y0: Option<f64>,
    pub levels: Vec<f64>,
    /// `start:stop:count` or a comma-separated list of thresholds.
    pub grid: Option<String>,
    /// Cost of one exact run in units of approximate runs.
    pub speed_ratio: f64,
    pub score: ScoreKind,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            y0: None,
            levels: mfuq_core::predict::DEFAULT_LEVELS.to_vec(),
            grid: None,
            speed_ratio: 1069.0,
            score: ScoreKind::QuantileGap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub pairs: PathBuf,
    pub pi_x: PathBuf,
    pub checkpoint: PathBuf,
    pub diagnostics: PathBuf,
    /// Report destination; standard output when omitted.
    pub out: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            pairs: "pairs.csv".into(),
            pi_x: "pi_x.csv".into(),
            checkpoint: "model.ckpt".into(),
            diagnostics: "diagnostics.csv".into(),
            out: None,
        }
    }
}

impl PathsConfig {
    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.pairs);
        join(&mut self.pi_x);
        join(&mut self.checkpoint);
        join(&mut self.diagnostics);
        if let Some(p) = self.out.as_mut() {
            join(p);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.paths.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.hyperparameters(1).validate()?;
        self.moves.validate()?;
        self.smc.validate()?;
        if self.solver.kind == SolverKind::Cohesive {
            self.solver.cohesive.validate()?;
        }
        let syn = &self.solver.synthetic;
        if syn.noise.is_some_and(|v| !(v >= 0.0 && v.is_finite()))
            || syn.coupling.is_some_and(|v| !v.is_finite())
        {
            return Err(CliError::Config("synthetic noise must be finite and non-negative".into()));
        }
        if self.solver.n_pi_x == 0 {
            return Err(CliError::Config("solver.n_pi_x must be at least 1".into()));
        }
        check_levels(&self.predict.levels)?;
        if !(self.predict.speed_ratio > 0.0 && self.predict.speed_ratio.is_finite()) {
            return Err(CliError::Config("predict.speed_ratio must be positive".into()));
        }
        if let Some(g) = &self.predict.grid {
            parse_grid(g)?;
        }
        Ok(())
    }

    /// The schema with every default filled in.
    pub fn defaults_toml() -> String {
        toml::to_string_pretty(&RunConfig::default()).expect("defaults serialize")
    }

    /// Hex digest of everything that can change command output. Paths and
    /// the worker count are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        c.workers = 0;
        let text = toml::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(CliError::Config(format!("quantile levels must lie in (0,1), got {levels:?}")));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!("quantile levels must be increasing, got {levels:?}")));
    }
    Ok(())
}

pub fn parse_levels(text: &str) -> Result<Vec<f64>> {
    let levels = parse_list(text, "levels")?;
    check_levels(&levels)?;
    Ok(levels)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Config(format!("{what}: cannot parse '{}' as a number", t.trim())))
        })
        .collect()
}

/// `start:stop:count` (inclusive, evenly spaced) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, count] => {
            let bad = || CliError::Config(format!("grid '{text}' is not start:stop:count"));
            let a: f64 = start.trim().parse().map_err(|_| bad())?;
            let b: f64 = stop.trim().parse().map_err(|_| bad())?;
            let n: usize = count.trim().parse().map_err(|_| bad())?;
            if n < 2 || !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(CliError::Config(format!("grid '{text}' needs start < stop and count >= 2")));
            }
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        }
        [list] => parse_list(list, "grid")?,
        _ => return Err(CliError::Config(format!("grid '{text}' is not start:stop:count or a list"))),
    };
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("grid thresholds must be increasing".into()));
    }
    Ok(grid)
}
