//! Analytic benchmark families with brute-force oracles.
//!
//! With `ξ = (ξ₁, ξ₂, ξ₃)` i.i.d. standard normal:
//!
//! * `OneD`: `x₁ = ξ₁`, `y = g(ξ₁) + s ξ₂`, with `g(t) = 0.8 tanh(t) + 0.2 t`.
//! * `TwoD`: `x = (ξ₁, ξ₃)`, `y = g(ξ₁) + c (e^{0.8 ξ₃} - e^{0.32}) + s ξ₂`.
//!   The second term is centered and right-skewed, so a Gaussian-noise
//!   model in `x₁` alone is misspecified while `(x₁, x₂)` leaves only
//!   Gaussian noise.
//! * `TwoDFirstOnly`: the `TwoD` family observed through `x₁` only.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SolverPair;
use crate::rng::substream;

pub fn g(t: f64) -> f64 {
    0.8 * t.tanh() + 0.2 * t
}

fn skew(t: f64) -> f64 {
    (0.8 * t).exp() - 0.32f64.exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Synthetic {
    OneD { noise: f64 },
    TwoD { noise: f64, coupling: f64 },
    TwoDFirstOnly { noise: f64, coupling: f64 },
}

impl Synthetic {
    pub const fn one_d() -> Self {
        Synthetic::OneD { noise: 0.1 }
    }

    pub const fn two_d() -> Self {
        Synthetic::TwoD { noise: 0.05, coupling: 0.3 }
    }

    /// The same family with only the first predictor exposed.
    pub fn first_only(self) -> Self {
        match self {
            Synthetic::TwoD { noise, coupling } => Synthetic::TwoDFirstOnly { noise, coupling },
            other => other,
        }
    }

    /// `(x, y)` from fixed standard-normal draws `ξ`.
    pub fn pair(&self, xi: &[f64; 3]) -> (Vec<f64>, f64) {
        match *self {
            Synthetic::OneD { noise } => (vec![xi[0]], g(xi[0]) + noise * xi[1]),
            Synthetic::TwoD { noise, coupling } => {
                (vec![xi[0], xi[2]], g(xi[0]) + coupling * skew(xi[2]) + noise * xi[1])
            }
            Synthetic::TwoDFirstOnly { noise, coupling } => {
                (vec![xi[0]], g(xi[0]) + coupling * skew(xi[2]) + noise * xi[1])
            }
        }
    }

    /// Brute-force `Pr[y > y₀]` for each threshold from `draws` realizations.
    pub fn oracle_exceedance(&self, thresholds: &[f64], draws: usize, seed: u64) -> Vec<f64> {
        let chunks = 64usize;
        let per = draws.div_ceil(chunks);
        let counts = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = substream(seed, 0x6f72_6163, c as u64);
                let mut counts = vec![0u64; thresholds.len()];
                let n = per.min(draws.saturating_sub(c * per));
                for _ in 0..n {
                    let y = self.pair(&self.sample_input(&mut rng)).1;
                    for (k, &t) in thresholds.iter().enumerate() {
                        counts[k] += (y > t) as u64;
                    }
                }
                counts
            })
            .reduce(
                || vec![0u64; thresholds.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        counts.into_iter().map(|c| c as f64 / draws as f64).collect()
    }
}

impl SolverPair for Synthetic {
    type Input = [f64; 3];

    fn dim(&self) -> usize {
        match self {
            Synthetic::TwoD { .. } => 2,
            _ => 1,
        }
    }

    fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)]
    }

    fn approximate(&self, input: &[f64; 3]) -> Vec<f64> {
        self.pair(input).0
    }

    fn exact(&self, input: &[f64; 3]) -> f64 {
        self.pair(input).1
    }
}
