use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use jointfit_core::data::{
    join_datasets, parse_longitudinal_csv, parse_survival_csv, write_longitudinal_csv, write_survival_csv,
    JointDataset, LongitudinalRecord, LongitudinalSchema, SurvivalRecord, SurvivalSchema,
};
use jointfit_core::design::{parse_formula, ModelFormula};
use jointfit_core::diagnostics::{
    compare as compare_rows, comparison_csv, comparison_markdown, diagnose as diagnose_chains, dic_lpml, svg_plot,
    ChainDiagnostics, MIN_DRAWS,
};
use jointfit_core::jointmodel::{summarize, summary_csv, AssociationKind, McmcPart, ModelSpec, TransformPart};
use jointfit_core::lmm::{fit_lmm as fit_mixed, information_criteria, Method};
use jointfit_core::simulate::{simulate_joint, Generator};
use jointfit_core::stats::chisq_sf;
use jointfit_core::survival::{
    fit_cox_with, kaplan_meier, schoenfeld_test, CoxFit, CoxOptions, TimeTransform,
};
use jointfit_core::{McmcConfig, PosteriorChains};

use crate::error::CliError;
use crate::output::{read_input, RunRecord, Sink};
use crate::{AssocArg, DataArgs, MethodArg, OutArgs, TransformArg};

const DEFAULT_SEED: u64 = 1;

fn setup_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            // fails only if a pool already exists, which is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        None => Ok(()),
    }
}

fn start(command: &'static str, out: &OutArgs, seed: Option<u64>) -> Result<(Sink, RunRecord), CliError> {
    let sink = Sink::new(&out.out, out.force)?;
    setup_threads(out.threads)?;
    let seed = out.seed.or(seed).unwrap_or(DEFAULT_SEED);
    Ok((sink, RunRecord::new(command, seed, out.threads)))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize") + "\n"
}

fn columns(data: &DataArgs) -> Value {
    json!({
        "id": data.id_col,
        "time": data.time_col,
        "response": data.y_col,
        "survival_time": data.surv_time_col,
        "status": data.status_col,
    })
}

fn load_long(data: &DataArgs, rec: &mut RunRecord) -> Result<Vec<LongitudinalRecord>, CliError> {
    let path = data.long.as_ref().ok_or_else(|| CliError::Usage("--long is required".into()))?;
    let input = read_input(path)?;
    rec.input(&input);
    let schema = LongitudinalSchema {
        id: data.id_col.clone(),
        time: data.time_col.clone(),
        response: data.y_col.clone(),
    };
    Ok(parse_longitudinal_csv(input.text.as_bytes(), &schema)?)
}

fn load_surv(data: &DataArgs, rec: &mut RunRecord) -> Result<Vec<SurvivalRecord>, CliError> {
    let path = data.surv.as_ref().ok_or_else(|| CliError::Usage("--surv is required".into()))?;
    let input = read_input(path)?;
    rec.input(&input);
    let schema = SurvivalSchema {
        id: data.id_col.clone(),
        time: data.surv_time_col.clone(),
        status: data.status_col.clone(),
    };
    Ok(parse_survival_csv(input.text.as_bytes(), &schema)?)
}

/// Joined data. Without a survival file every subject is treated as
/// censored at its last visit, which is all a mixed-model fit needs.
fn load_dataset(data: &DataArgs, rec: &mut RunRecord, need_surv: bool) -> Result<JointDataset, CliError> {
    let long = load_long(data, rec)?;
    let surv = if need_surv || data.surv.is_some() {
        load_surv(data, rec)?
    } else {
        let mut last: BTreeMap<&str, f64> = BTreeMap::new();
        for r in &long {
            let t = last.entry(&r.subject_id).or_insert(r.time);
            *t = t.max(r.time);
        }
        last.into_iter()
            .map(|(id, t)| SurvivalRecord {
                subject_id: id.to_string(),
                event_time: t,
                event: false,
                covariates: Default::default(),
            })
            .collect()
    };
    Ok(join_datasets(long, surv, &data.time_col)?)
}

fn read_spec(path: &Path, rec: &mut RunRecord) -> Result<ModelSpec, CliError> {
    let input = read_input(path)?;
    rec.input(&input);
    Ok(serde_json::from_str(&input.text)?)
}

pub fn fit_lmm(
    data: &DataArgs,
    fixed: Option<String>,
    random: Option<String>,
    group: String,
    spec: Option<PathBuf>,
    method: MethodArg,
    out: &OutArgs,
) -> Result<(), CliError> {
    let (sink, mut rec) = start("fit-lmm", out, None)?;
    let (fixed, random, group) = match spec {
        Some(p) => {
            let s = read_spec(&p, &mut rec)?;
            (s.longitudinal.fixed, s.longitudinal.random, s.longitudinal.group)
        }
        None => (
            fixed.ok_or_else(|| CliError::Usage("--fixed (or --spec) is required".into()))?,
            random.ok_or_else(|| CliError::Usage("--random (or --spec) is required".into()))?,
            group,
        ),
    };
    let formula = ModelFormula::mixed(&fixed, &random, &group)?;
    let ds = load_dataset(data, &mut rec, false)?;
    let method = match method {
        MethodArg::Reml => Method::Reml,
        MethodArg::Ml => Method::Ml,
    };
    let fit = fit_mixed(&formula, &ds, method)?;
    let ic = information_criteria(&fit);
    let coefficients: Vec<Value> = fit
        .beta_labels
        .iter()
        .zip(fit.beta.iter())
        .zip(fit.beta_se())
        .map(|((l, b), se)| json!({ "term": l, "estimate": b, "std_err": se, "t": b / se }))
        .collect();
    let q = fit.d.nrows();
    let d: Vec<Vec<f64>> = (0..q).map(|i| (0..q).map(|j| fit.d[(i, j)]).collect()).collect();
    let record = json!({
        "method": method,
        "formula": { "fixed": fixed, "random": random, "group": group },
        "coefficients": coefficients,
        "random_effects": fit.random_labels,
        "d": d,
        "sigma2": fit.sigma2,
        "loglik": fit.loglik,
        "aic": ic.aic,
        "bic": ic.bic,
        "df": fit.df,
        "n_obs": fit.n_obs,
        "n_subjects": fit.n_subjects,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "gradient_norm": fit.gradient_norm,
        "warnings": fit.warnings,
    });
    sink.primary("fit.json", &pretty(&record))?;

    let mut blups = String::from("id");
    for l in &fit.random_labels {
        blups += &format!(",\"{l}\"");
    }
    blups.push('\n');
    for (id, b) in fit.subject_ids.iter().zip(&fit.blups) {
        blups += id;
        for v in b.iter() {
            blups += &format!(",{v}");
        }
        blups.push('\n');
    }
    sink.file("blups.csv", &blups)?;

    rec.config(&json!({
        "formula": { "fixed": fixed, "random": random, "group": group },
        "method": method,
        "columns": columns(data),
    }));
    rec.write(&sink)
}

fn cox_formula(formula: Option<String>, spec: Option<PathBuf>, rec: &mut RunRecord) -> Result<String, CliError> {
    match (formula, spec) {
        (Some(f), _) => Ok(f),
        (None, Some(p)) => read_spec(&p, rec)?
            .survival
            .map(|s| s.formula)
            .ok_or_else(|| CliError::Usage("the spec has no survival part".into())),
        (None, None) => Err(CliError::Usage("--formula (or --spec) is required".into())),
    }
}

fn cox_record(fit: &CoxFit, formula: &str) -> Value {
    let z = fit.z();
    let p = fit.p_values();
    let coefficients: Vec<Value> = (0..fit.labels.len())
        .map(|j| {
            json!({
                "term": fit.labels[j],
                "coef": fit.gamma[j],
                "exp_coef": fit.gamma[j].exp(),
                "std_err": fit.se[j],
                "z": z[j],
                "p": p[j],
            })
        })
        .collect();
    let lr = 2.0 * (fit.partial_loglik - fit.null_loglik);
    let df = fit.labels.len();
    json!({
        "formula": formula,
        "n": fit.times.len(),
        "n_events": fit.n_events,
        "coefficients": coefficients,
        "loglik": fit.partial_loglik,
        "null_loglik": fit.null_loglik,
        "likelihood_ratio": { "chisq": lr, "df": df, "p": chisq_sf(lr, df as f64) },
        "iterations": fit.iterations,
        "baseline": fit.baseline,
    })
}

fn fit_cox_from(
    data: &DataArgs,
    formula: Option<String>,
    spec: Option<PathBuf>,
    strata: Option<String>,
    rec: &mut RunRecord,
) -> Result<(CoxFit, String), CliError> {
    let formula = cox_formula(formula, spec, rec)?;
    let surv = load_surv(data, rec)?;
    let opts = CoxOptions {
        strata,
        ..Default::default()
    };
    let fit = fit_cox_with(&surv, &parse_formula(&formula)?, &opts)?;
    Ok((fit, formula))
}

pub fn fit_cox(
    data: &DataArgs,
    formula: Option<String>,
    spec: Option<PathBuf>,
    strata: Option<String>,
    out: &OutArgs,
) -> Result<(), CliError> {
    let (sink, mut rec) = start("fit-cox", out, None)?;
    let (fit, formula) = fit_cox_from(data, formula, spec, strata.clone(), &mut rec)?;
    sink.primary("cox.json", &pretty(&cox_record(&fit, &formula)))?;
    rec.config(&json!({ "formula": formula, "strata": strata, "columns": columns(data) }));
    rec.write(&sink)
}

pub fn km(data: &DataArgs, group_by: Option<String>, svg: bool, out: &OutArgs) -> Result<(), CliError> {
    let (sink, mut rec) = start("km", out, None)?;
    let surv = load_surv(data, &mut rec)?;
    let curves = kaplan_meier(&surv, group_by.as_deref())?;
    let mut csv = String::from("group,time,n_risk,n_event,survival,std_err\n");
    for c in &curves {
        let g = c.group.as_deref().unwrap_or("all");
        for k in 0..c.times.len() {
            csv += &format!(
                "{g},{},{},{},{},{}\n",
                c.times[k], c.at_risk[k], c.events[k], c.survival[k], c.std_err[k]
            );
        }
    }
    sink.primary("km.csv", &csv)?;
    if svg {
        let series: Vec<(Vec<f64>, Vec<f64>)> = curves
            .iter()
            .map(|c| {
                let mut x = vec![0.0];
                let mut y = vec![1.0];
                x.extend(&c.times);
                y.extend(&c.survival);
                (x, y)
            })
            .collect();
        sink.file("km.svg", &svg_plot("Kaplan-Meier estimate", &series, true))?;
    }
    rec.config(&json!({ "group_by": group_by, "svg": svg, "columns": columns(data) }));
    rec.write(&sink)
}

pub fn zph(
    data: &DataArgs,
    formula: Option<String>,
    spec: Option<PathBuf>,
    strata: Option<String>,
    transform: TransformArg,
    out: &OutArgs,
) -> Result<(), CliError> {
    let (sink, mut rec) = start("zph", out, None)?;
    let (fit, formula) = fit_cox_from(data, formula, spec, strata.clone(), &mut rec)?;
    let transform = match transform {
        TransformArg::Identity => TimeTransform::Identity,
        TransformArg::Rank => TimeTransform::Rank,
        TransformArg::Km => TimeTransform::Km,
    };
    let test = schoenfeld_test(&fit, transform)?;
    let record = json!({ "formula": formula, "transform": test.transform, "rows": test.rows });
    sink.primary("zph.json", &pretty(&record))?;
    let mut resid = String::from("time");
    for l in &fit.labels {
        resid += &format!(",\"{l}\"");
    }
    resid.push('\n');
    for (t, r) in test.event_times.iter().zip(&test.scaled_residuals) {
        resid += &t.to_string();
        for v in r {
            resid += &format!(",{v}");
        }
        resid.push('\n');
    }
    sink.file("schoenfeld.csv", &resid)?;
    sink.file("zph.csv", &test.to_csv())?;
    rec.config(&json!({
        "formula": formula,
        "strata": strata,
        "transform": transform,
        "columns": columns(data),
    }));
    rec.write(&sink)
}

pub struct JointOverrides {
    pub iter: Option<usize>,
    pub adapt: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub assoc: Option<AssocArg>,
    pub transform_covariate: Option<String>,
}

fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c);
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

fn write_bundle(sink: &Sink, diag: &ChainDiagnostics, svg: bool) -> Result<(), CliError> {
    let dir = "diagnostics";
    sink.file(&format!("{dir}/ess.csv"), &diag.ess_csv())?;
    if !diag.acceptance.is_empty() {
        let mut acc = String::from("block,rate\n");
        for (b, r) in &diag.acceptance {
            acc += &format!("{b},{r:.4}\n");
        }
        sink.file(&format!("{dir}/acceptance.csv"), &acc)?;
    }
    for (k, p) in diag.parameters.iter().enumerate() {
        let name = format!("{:02}_{}", k + 1, slug(&p.name));
        sink.file(&format!("{dir}/trace/{name}.csv"), &diag.trace_csv(k))?;
        sink.file(&format!("{dir}/acf/{name}.csv"), &diag.acf_csv(k))?;
        sink.file(&format!("{dir}/density/{name}.csv"), &diag.kde_csv(k))?;
        if svg {
            let it: Vec<f64> = (1..=p.trace.len()).map(|i| i as f64).collect();
            sink.file(
                &format!("{dir}/plots/{name}_trace.svg"),
                &svg_plot(&format!("{} trace", p.name), &[(it, p.trace.clone())], false),
            )?;
            sink.file(
                &format!("{dir}/plots/{name}_density.svg"),
                &svg_plot(&format!("{} density", p.name), &[(p.kde_x.clone(), p.kde_y.clone())], false),
            )?;
        }
    }
    Ok(())
}

pub fn fit_joint(
    data: &DataArgs,
    spec_path: &Path,
    overrides: JointOverrides,
    svg: bool,
    out: &OutArgs,
) -> Result<(), CliError> {
    let sink = Sink::new(&out.out, out.force)?;
    setup_threads(out.threads)?;
    let spec_input = read_input(spec_path)?;
    let mut spec: ModelSpec = serde_json::from_str(&spec_input.text)?;
    if let Some(a) = overrides.assoc {
        spec.association = match a {
            AssocArg::Value => AssociationKind::Value,
            AssocArg::ValueSlope => AssociationKind::ValueSlope,
            AssocArg::SharedRe => AssociationKind::SharedRe,
        };
    }
    if let Some(c) = overrides.transform_covariate {
        spec.transform = Some(TransformPart { covariate: c });
    }
    let m = &mut spec.mcmc;
    m.iter = overrides.iter.or(m.iter);
    m.adapt = overrides.adapt.or(m.adapt);
    m.burnin = overrides.burnin.or(m.burnin);
    m.thin = overrides.thin.or(m.thin);
    m.seed = out.seed.or(m.seed);
    // record every setting explicitly
    let resolved = spec.mcmc_config();
    spec.mcmc = McmcPart {
        iter: Some(resolved.n_iter),
        adapt: Some(resolved.adapt),
        burnin: Some(resolved.burnin),
        thin: Some(resolved.thin),
        seed: Some(resolved.seed),
    };
    let config = McmcConfig {
        threads: out.threads,
        ..resolved
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut rec = RunRecord::new("fit-joint", config.seed, out.threads);
    rec.input(&spec_input);
    let ds = load_dataset(data, &mut rec, true)?;
    let model = spec.build(&ds)?;
    let chains = model.run_mcmc(&config)?;

    let rows = summarize(&chains);
    sink.primary("summary.csv", &summary_csv(&rows))?;
    let acceptance: Map<String, Value> = chains.acceptance.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let summary = json!({
        "association": spec.association,
        "n_subjects": ds.n_subjects(),
        "n_obs": ds.n_obs(),
        "draws": chains.n_draws(),
        "acceptance": acceptance,
        "warnings": chains.warnings,
        "parameters": rows,
    });
    sink.file("summary.json", &pretty(&summary))?;
    sink.file("model.json", &pretty(&serde_json::to_value(&spec)?))?;
    sink.file("chains.csv", &chains.to_csv())?;
    sink.file("random_effects.csv", &chains.random_effects_to_csv())?;
    if !sink.is_stdout() && chains.n_draws() >= MIN_DRAWS {
        write_bundle(&sink, &diagnose_chains(&chains, &[], 30)?, svg)?;
    }
    for w in &chains.warnings {
        eprintln!("warning: {w}");
    }
    rec.config(&json!({ "spec": spec, "svg": svg, "columns": columns(data) }));
    rec.write(&sink)
}

fn read_chains(dir: &Path, rec: &mut RunRecord) -> Result<PosteriorChains, CliError> {
    let input = read_input(&dir.join("chains.csv"))?;
    rec.input(&input);
    Ok(PosteriorChains::from_csv(input.text.as_bytes())?)
}

pub fn compare(fits: &[PathBuf], data: &DataArgs, out: &OutArgs) -> Result<(), CliError> {
    let (sink, mut rec) = start("compare", out, None)?;
    let ds = load_dataset(data, &mut rec, true)?;
    let mut rows = Vec::new();
    let mut names = Vec::new();
    for dir in fits {
        let spec = read_spec(&dir.join("model.json"), &mut rec)?;
        let mut chains = read_chains(dir, &mut rec)?;
        let model = spec.build(&ds)?;
        let re = read_input(&dir.join("random_effects.csv"))?;
        rec.input(&re);
        chains.read_random_effects(re.text.as_bytes(), model.n_subjects(), model.n_random())?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        rows.push(dic_lpml(&model, &chains, &name)?);
        names.push(name);
    }
    let rows = compare_rows(&rows)?;
    sink.primary("comparison.csv", &comparison_csv(&rows))?;
    sink.file("comparison.md", &comparison_markdown(&rows))?;
    rec.config(&json!({ "models": names, "columns": columns(data) }));
    rec.write(&sink)
}

pub fn simulate(spec: &Path, out: &OutArgs) -> Result<(), CliError> {
    let sink = Sink::new(&out.out, out.force)?;
    setup_threads(out.threads)?;
    let input = read_input(spec)?;
    let mut gen: Generator = serde_json::from_str(&input.text)?;
    if let Some(s) = out.seed {
        gen.seed = s;
    }
    let mut rec = RunRecord::new("simulate", gen.seed, out.threads);
    rec.input(&input);
    let sim = simulate_joint(&gen)?;
    let mut long = Vec::new();
    write_longitudinal_csv(&sim.longitudinal, &LongitudinalSchema::default(), &mut long)?;
    let mut surv = Vec::new();
    write_survival_csv(&sim.survival, &SurvivalSchema::default(), &mut surv)?;
    let utf8 = |b: Vec<u8>| String::from_utf8(b).expect("CSV writer emits UTF-8");
    sink.primary("longitudinal.csv", &utf8(long))?;
    sink.file("survival.csv", &utf8(surv))?;
    sink.file("truth.json", &pretty(&serde_json::to_value(&sim.truth)?))?;
    rec.config(&gen);
    rec.write(&sink)
}

pub fn diagnose(fit: &Path, params: &[String], max_lag: usize, svg: bool, out: &OutArgs) -> Result<(), CliError> {
    let (sink, mut rec) = start("diagnose", out, None)?;
    let chains = read_chains(fit, &mut rec)?;
    let selected: Vec<&str> = params.iter().map(String::as_str).collect();
    let diag = diagnose_chains(&chains, &selected, max_lag)?;
    sink.primary("ess.csv", &diag.ess_csv())?;
    write_bundle(&sink, &diag, svg)?;
    rec.config(&json!({ "params": params, "max_lag": max_lag, "svg": svg }));
    rec.write(&sink)
}
