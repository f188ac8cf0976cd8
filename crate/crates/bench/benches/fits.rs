use criterion::{criterion_group, criterion_main, Criterion};
use jointfit_bench::dataset;
use jointfit_core::design::{parse_formula, ModelFormula};
use jointfit_core::jointmodel::ModelSpec;
use jointfit_core::lmm::{fit_lmm, Method};
use jointfit_core::survival::fit_cox;
use jointfit_core::McmcConfig;

fn lmm(c: &mut Criterion) {
    let data = dataset(300, 1);
    let f = ModelFormula::mixed("y ~ time", "~ time", "id").unwrap();
    c.bench_function("lmm_reml_300", |b| b.iter(|| fit_lmm(&f, &data, Method::Reml).unwrap()));
}

fn cox(c: &mut Criterion) {
    let data = dataset(300, 1);
    let f = parse_formula("~ x").unwrap();
    c.bench_function("cox_300", |b| b.iter(|| fit_cox(&data.survival, &f).unwrap()));
}

fn mcmc(c: &mut Criterion) {
    let data = dataset(300, 1);
    let spec: ModelSpec = serde_json::from_str(
        r#"{"longitudinal": {"fixed": "y ~ time", "random": "~ time"},
            "survival": {"formula": "~ x"}, "association": "value-slope"}"#,
    )
    .unwrap();
    let model = spec.build(&data).unwrap();
    let config = McmcConfig {
        n_iter: 100,
        adapt: 0,
        burnin: 50,
        thin: 1,
        ..Default::default()
    };
    let mut g = c.benchmark_group("mcmc");
    g.sample_size(10);
    g.bench_function("sweeps_100_value_slope_300", |b| b.iter(|| model.run_mcmc(&config).unwrap()));
    g.finish();
}

criterion_group!(benches, lmm, cox, mcmc);
criterion_main!(benches);
