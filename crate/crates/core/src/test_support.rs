//! Shared fixtures for unit tests: a quick simulated dataset and a
//! linear logit/log model around it.

use crate::data::Dataset;
use crate::estimation::ModelSpec;
use crate::formula::{ParamPrefix, PredictorSpec};
use crate::links::LinkKind;
use crate::special::{beta_sample, BetaParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Logit mean `beta[0] + beta[1] x1`, log precision
/// `gamma[0] (+ gamma[1] z1)`, with `x1 ~ U(0,1)` and `z1 ~ U(-0.5, 0.5)`.
pub fn simulate(n: usize, beta: &[f64], gamma: &[f64], seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let y: Vec<f64> = (0..n)
        .map(|t| {
            let eta1 = beta[0] + beta[1] * x[t];
            let eta2 = gamma[0] + if gamma.len() > 1 { gamma[1] * z[t] } else { 0.0 };
            let mu = 1.0 / (1.0 + (-eta1).exp());
            let phi = eta2.exp();
            beta_sample(&BetaParams::new(mu, phi).unwrap(), &mut rng)
        })
        .collect();
    Dataset::new("y", y, vec![("x1".into(), x), ("z1".into(), z)]).unwrap()
}

/// Logit mean and log precision from formula text over `schema`.
pub fn model_from(mean: &str, precision: &str, schema: &[&str]) -> ModelSpec {
    ModelSpec::new(
        PredictorSpec::parse(mean, schema, ParamPrefix::Mean).unwrap(),
        LinkKind::Logit,
        PredictorSpec::parse(precision, schema, ParamPrefix::Precision).unwrap(),
        LinkKind::Log,
    )
    .unwrap()
}
