use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn jointfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointfit"))
        .args(args)
        .env_remove("JOINTFIT_THREADS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const GENERATOR: &str = r#"{
    "n_subjects": 60,
    "seed": 4,
    "time_var": "time",
    "longitudinal": { "fixed": "y ~ time", "random": "~ time" },
    "beta": [2.0, -0.5],
    "sigma2": 0.25,
    "d": [[1.0, 0.0], [0.0, 0.09]],
    "covariates": { "x": { "bernoulli": 0.5 } },
    "survival": { "formula": "~ x", "gamma": [0.5] },
    "association": "value",
    "alpha": [-0.3],
    "baseline": { "weibull": { "shape": 1.5, "scale": 4.0 } },
    "visits": { "times": [0.0, 1.0, 2.0, 3.0] },
    "censoring_time": 5.0
}"#;

const SPEC: &str = r#"{
    "longitudinal": { "fixed": "y ~ time", "random": "~ time" },
    "survival": { "formula": "~ x" },
    "association": "value",
    "mcmc": { "iter": 700, "adapt": 100, "burnin": 300, "thin": 2 }
}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("generator.json"), GENERATOR).unwrap();
        fs::write(dir.path().join("spec.json"), SPEC).unwrap();
        let f = Self { dir };
        let o = jointfit(&["simulate", "--spec", &f.s("generator.json"), "--out", &f.s("sim")]);
        assert!(o.status.success(), "{}", stderr(&o));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn fit_joint(&self, out: &str, extra: &[&str]) -> Output {
        let (long, surv, spec, out) = (self.s("sim/longitudinal.csv"), self.s("sim/survival.csv"), self.s("spec.json"), self.s(out));
        let mut args = vec!["fit-joint", "--long", &long, "--surv", &surv, "--spec", &spec, "--out", &out];
        args.extend_from_slice(extra);
        jointfit(&args)
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = jointfit(&["km", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[usage]:"), "{}", stderr(&o));
    let o = jointfit(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(jointfit(&["--help"]).status.success());
}

#[test]
fn zero_threads_is_a_usage_error() {
    let f = Fixture::new();
    let o = jointfit(&["km", "--long", &f.s("sim/longitudinal.csv"), "--surv", &f.s("sim/survival.csv"), "--out", "-", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("threads"));
}

#[test]
fn existing_output_needs_force() {
    let f = Fixture::new();
    let o = jointfit(&["simulate", "--spec", &f.s("generator.json"), "--out", &f.s("sim")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[data]:"));
    let o = jointfit(&["simulate", "--spec", &f.s("generator.json"), "--out", &f.s("sim"), "--force"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn dash_writes_the_primary_table_to_stdout() {
    let f = Fixture::new();
    let o = jointfit(&["km", "--long", &f.s("sim/longitudinal.csv"), "--surv", &f.s("sim/survival.csv"), "--out", "-"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("group,time,n_risk,n_event,survival,std_err\n"));
    assert!(!Path::new("-").exists());
}

#[test]
fn malformed_data_is_a_data_error() {
    let f = Fixture::new();
    fs::write(f.path("bad.csv"), "id,time,y\n1,0,abc\n").unwrap();
    let o = jointfit(&["fit-lmm", "--long", &f.s("bad.csv"), "--fixed", "y ~ time", "--random", "~ 1", "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[data]:"), "{}", stderr(&o));
    let o = jointfit(&["fit-lmm", "--long", &f.s("missing.csv"), "--fixed", "y ~ time", "--random", "~ 1", "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn submodel_commands_write_their_tables() {
    let f = Fixture::new();
    let (long, surv) = (f.s("sim/longitudinal.csv"), f.s("sim/survival.csv"));
    let o = jointfit(&["fit-lmm", "--long", &long, "--fixed", "y ~ time", "--random", "~ time", "--out", &f.s("lmm")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&read(&f.path("lmm/fit.json"))).unwrap();
    assert!(fit.is_object());
    assert!(f.path("lmm/blups.csv").exists() && f.path("lmm/run.json").exists());

    let o = jointfit(&["fit-cox", "--long", &long, "--surv", &surv, "--formula", "~ x", "--out", &f.s("cox")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(f.path("cox/cox.json").exists());

    let o = jointfit(&["zph", "--long", &long, "--surv", &surv, "--formula", "~ x", "--out", &f.s("zph")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(&f.path("zph/zph.csv")).contains("GLOBAL") || f.path("zph/zph.json").exists());
}

#[test]
fn fit_joint_is_reproducible_and_recorded() {
    let f = Fixture::new();
    let o = f.fit_joint("a", &["--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["summary.csv", "summary.json", "model.json", "chains.csv", "random_effects.csv", "run.json", "diagnostics/ess.csv"] {
        assert!(f.path("a").join(name).exists(), "missing {name}");
    }
    let run: serde_json::Value = serde_json::from_str(&read(&f.path("a/run.json"))).unwrap();
    assert_eq!(run["seed"], 9);
    assert_eq!(run["command"], "fit-joint");

    let o = f.fit_joint("b", &["--seed", "9", "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["summary.csv", "chains.csv", "random_effects.csv"] {
        assert_eq!(read(&f.path("a").join(name)), read(&f.path("b").join(name)), "{name} differs");
    }
    let run_b: serde_json::Value = serde_json::from_str(&read(&f.path("b/run.json"))).unwrap();
    assert_eq!(run["config_hash"], run_b["config_hash"]);

    let o = f.fit_joint("c", &["--seed", "10"]);
    assert!(o.status.success());
    assert_ne!(read(&f.path("a/chains.csv")), read(&f.path("c/chains.csv")));

    // invalid chain settings are rejected before any work
    let o = f.fit_joint("d", &["--burnin", "5000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!f.path("d").exists());

    let o = f.fit_joint("e", &["--assoc", "value-slope", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (long, surv) = (f.s("sim/longitudinal.csv"), f.s("sim/survival.csv"));
    let o = jointfit(&["compare", &f.s("a"), &f.s("e"), "--long", &long, "--surv", &surv, "--out", "-"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");

    let o = jointfit(&["diagnose", &f.s("a"), "--params", "Assoct,sigma2", "--out", &f.s("diag")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&f.path("diag/ess.csv")).lines().count(), 3);
}
