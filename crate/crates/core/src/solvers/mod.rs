//! Exact/approximate solver pairs used to generate training data and
//! samples of the approximate output.

pub mod cohesive;
pub mod synthetic;

use rand::Rng;
use rayon::prelude::*;

use crate::predict::MarginalXSamples;
use crate::rng::substream;

/// A problem with uncertain input `ξ`, a cheap approximate solver producing
/// predictors `x` and an expensive exact solver producing `y`.
pub trait SolverPair: Sync {
    type Input: Send;

    /// Number of predictors returned by [`SolverPair::approximate`].
    fn dim(&self) -> usize;
    fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Input;
    fn approximate(&self, input: &Self::Input) -> Vec<f64>;
    fn exact(&self, input: &Self::Input) -> f64;
}

const PAIR_STEP: u64 = 0x7061_6972;
const PI_X_STEP: u64 = 0x7069_5f78;

/// `n` training pairs `(x, y)`; realization `i` uses its own substream.
pub fn generate_pairs<P: SolverPair>(problem: &P, n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, PAIR_STEP, i as u64);
            let input = problem.sample_input(&mut rng);
            (problem.approximate(&input), problem.exact(&input))
        })
        .collect()
}

/// Plain Monte Carlo samples of the approximate output.
pub fn sample_pi_x<P: SolverPair>(problem: &P, count: usize, seed: u64) -> MarginalXSamples {
    let points = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, PI_X_STEP, i as u64);
            problem.approximate(&problem.sample_input(&mut rng))
        })
        .collect();
    MarginalXSamples { points, weights: None }
}

/// Default number of approximate-output samples.
pub const DEFAULT_PI_X_COUNT: usize = 5000;
