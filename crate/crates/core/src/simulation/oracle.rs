//! High-precision reference value of the marginal risk difference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Scenario;
use crate::logistic::expit;

pub const ORACLE_DRAWS: usize = 1_000_000;
pub const ORACLE_SEED: u64 = 0x7A0_0AC1E;

/// `E[expit(η + u + β + b) − expit(η + u)]` by Monte Carlo over covariates and
/// subject effects, with a fixed seed so every run sees the same value.
pub fn reference_tau(scn: &Scenario) -> f64 {
    reference_tau_with(scn, ORACLE_DRAWS, ORACLE_SEED)
}

pub(crate) fn reference_tau_with(scn: &Scenario, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = scn.gamma.len();
    let mut h = vec![0.0; k];
    let mut sum = 0.0;
    for _ in 0..draws {
        for v in h.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let zu: f64 = rng.sample(StandardNormal);
        let zb: f64 = rng.sample(StandardNormal);
        let eta = scn.baseline_logit(&h) + scn.subject_intercept_sd * zu;
        let b = scn.subject_effect_sd * zb;
        sum += expit(eta + scn.beta_true + b) - expit(eta);
    }
    sum / draws as f64
}
