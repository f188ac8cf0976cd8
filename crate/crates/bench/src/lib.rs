//! Shared fixtures for the benchmarks.

use jointfit_core::simulate::{simulate_joint, Generator};
use jointfit_core::JointDataset;

/// Simulated dataset with `n` subjects, three visits each and a current-value
/// association.
pub fn dataset(n: usize, seed: u64) -> JointDataset {
    let gen: Generator = serde_json::from_value(serde_json::json!({
        "n_subjects": n,
        "seed": seed,
        "time_var": "time",
        "longitudinal": { "fixed": "y ~ time", "random": "~ time" },
        "beta": [2.0, -0.5],
        "sigma2": 0.25,
        "d": [[1.0, 0.0], [0.0, 0.09]],
        "covariates": { "x": { "bernoulli": 0.5 } },
        "survival": { "formula": "~ x", "gamma": [0.5] },
        "association": "value",
        "alpha": [-0.3],
        "baseline": { "weibull": { "shape": 1.5, "scale": 6.0 } },
        "visits": { "times": [0.0, 1.5, 3.0] },
        "censoring_time": 5.0
    }))
    .expect("valid generator");
    simulate_joint(&gen).expect("simulation succeeds").dataset().expect("consistent data")
}
