//! Simulation of joint longitudinal and survival data with known parameters.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{join_datasets, CovariateValue, JointDataset, LongitudinalRecord, SurvivalRecord};
use crate::design::{parse_formula, BSplineBasis, ColumnTable, DesignRecipe, ModelFormula, Term};
use crate::error::{Error, Result};
pub use crate::jointmodel::AssociationKind;
use crate::quadrature::{Rule, SEGMENTS};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalGenerator {
    /// Two-sided fixed-effects formula, e.g. `y ~ t + x`.
    pub fixed: String,
    /// One-sided random-effects formula, e.g. `~ t`.
    pub random: String,
    #[serde(default = "default_group")]
    pub group: String,
}

fn default_group() -> String {
    "id".into()
}

fn default_time_var() -> String {
    "t".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateDist {
    Bernoulli(f64),
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalGenerator {
    /// One-sided formula for the baseline covariates `w`.
    pub formula: String,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSpec {
    Constant { rate: f64 },
    /// `h0(t) = (shape/scale) (t/scale)^(shape-1)`
    Weibull { shape: f64, scale: f64 },
    /// Cubic B-spline for `log h0` on `[0, upper]`.
    LogSpline { interior_knots: Vec<f64>, upper: f64, coefficients: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitSchedule {
    pub times: Vec<f64>,
    /// Uniform jitter of ±10% of the grid spacing.
    #[serde(default = "yes")]
    pub jitter: bool,
}

fn yes() -> bool {
    true
}

/// Full description of a data-generating joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub n_subjects: usize,
    pub seed: u64,
    #[serde(default = "default_time_var")]
    pub time_var: String,
    pub longitudinal: LongitudinalGenerator,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// Random-effects covariance, row-major rows.
    pub d: Vec<Vec<f64>>,
    #[serde(default)]
    pub covariates: IndexMap<String, CovariateDist>,
    pub survival: SurvivalGenerator,
    pub association: AssociationKind,
    #[serde(default)]
    pub alpha: Vec<f64>,
    /// Baseline covariate interacting with the value association.
    #[serde(default)]
    pub transform: Option<String>,
    pub baseline: BaselineSpec,
    pub visits: VisitSchedule,
    pub censoring_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub random_effects: Vec<f64>,
    /// Event time before censoring, if it was located.
    pub latent_event_time: Option<f64>,
    pub event_time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub generator: Generator,
    pub subjects: Vec<SubjectTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub longitudinal: Vec<LongitudinalRecord>,
    pub survival: Vec<SurvivalRecord>,
    pub truth: Truth,
}

impl Simulation {
    pub fn dataset(&self) -> Result<JointDataset> {
        join_datasets(self.longitudinal.clone(), self.survival.clone(), &self.truth.generator.time_var)
    }
}

/// Compiled generator.
struct Compiled {
    fixed: DesignRecipe,
    random: DesignRecipe,
    surv: DesignRecipe,
    beta: DVector<f64>,
    d_chol: DMatrix<f64>,
    gamma: DVector<f64>,
    alpha: DVector<f64>,
    spline: Option<BSplineBasis>,
}

fn recipe(terms: &[Term]) -> Result<DesignRecipe> {
    if terms.iter().any(|t| matches!(t, Term::Spline { .. })) {
        return Err(Error::InvalidInput(
            "spline terms are not supported in generator formulas".into(),
        ));
    }
    DesignRecipe::new(terms, &ColumnTable::new())
}

impl Generator {
    fn compile(&self) -> Result<Compiled> {
        let g = self;
        if g.n_subjects == 0 {
            return Err(Error::InvalidInput("n_subjects must be at least 1".into()));
        }
        let first_visit = g.visits.times.iter().copied().fold(f64::INFINITY, f64::min);
        if !(g.censoring_time > first_visit) {
            return Err(Error::InvalidInput("censoring time must exceed the first visit".into()));
        }
        if !(g.sigma2 > 0.0) {
            return Err(Error::InvalidInput("sigma2 must be positive".into()));
        }
        let formula = ModelFormula::mixed(&g.longitudinal.fixed, &g.longitudinal.random, &g.longitudinal.group)?;
        let fixed = recipe(&formula.fixed)?;
        let random = recipe(formula.random_terms())?;
        if fixed.ncols() != g.beta.len() {
            return Err(Error::InvalidInput(format!(
                "beta has {} entries for {} fixed-effect columns",
                g.beta.len(),
                fixed.ncols()
            )));
        }
        let q = random.ncols();
        if g.d.len() != q || g.d.iter().any(|r| r.len() != q) {
            return Err(Error::InvalidInput(format!("d must be {q} x {q}")));
        }
        let d = DMatrix::from_fn(q, q, |i, j| g.d[i][j]);
        let d_chol = if q == 0 {
            DMatrix::zeros(0, 0)
        } else {
            d.cholesky()
                .ok_or_else(|| Error::InvalidInput("d is not positive definite".into()))?
                .l()
        };
        let surv = recipe(&parse_formula(&g.survival.formula)?.without_intercept().fixed)?;
        if surv.ncols() != g.survival.gamma.len() {
            return Err(Error::InvalidInput(format!(
                "gamma has {} entries for {} survival columns",
                g.survival.gamma.len(),
                surv.ncols()
            )));
        }
        let n_alpha = match g.association {
            AssociationKind::SharedRe => {
                if g.transform.is_some() {
                    return Err(Error::InvalidInput(
                        "the shared random-effects association does not take a transform".into(),
                    ));
                }
                q
            }
            AssociationKind::Value => 1 + usize::from(g.transform.is_some()),
            AssociationKind::ValueSlope => 2 + usize::from(g.transform.is_some()),
        };
        if g.alpha.len() != n_alpha {
            return Err(Error::InvalidInput(format!("alpha must have {n_alpha} entries")));
        }
        if let Some(t) = &g.transform {
            if !g.covariates.contains_key(t) {
                return Err(Error::UnknownColumn(t.clone()));
            }
        }
        let spline = match &g.baseline {
            BaselineSpec::Constant { rate } if !(*rate > 0.0) => {
                return Err(Error::InvalidInput("baseline rate must be positive".into()))
            }
            BaselineSpec::Weibull { shape, scale } if !(*shape > 0.0 && *scale > 0.0) => {
                return Err(Error::InvalidInput("Weibull shape and scale must be positive".into()))
            }
            BaselineSpec::LogSpline {
                interior_knots,
                upper,
                coefficients,
            } => {
                let b = BSplineBasis::new(interior_knots, 0.0, *upper, 3)?;
                if b.n_basis() != coefficients.len() {
                    return Err(Error::InvalidInput(format!(
                        "log-spline baseline needs {} coefficients",
                        b.n_basis()
                    )));
                }
                Some(b)
            }
            _ => None,
        };
        Ok(Compiled {
            fixed,
            random,
            surv,
            beta: DVector::from_column_slice(&g.beta),
            d_chol,
            gamma: DVector::from_column_slice(&g.survival.gamma),
            alpha: DVector::from_column_slice(&g.alpha),
            spline,
        })
    }

    fn log_h0(&self, c: &Compiled, t: f64) -> f64 {
        match &self.baseline {
            BaselineSpec::Constant { rate } => rate.ln(),
            BaselineSpec::Weibull { shape, scale } => {
                (shape / scale).ln() + (shape - 1.0) * (t / scale).ln()
            }
            BaselineSpec::LogSpline { coefficients, .. } => {
                let basis = c.spline.as_ref().expect("compiled spline basis");
                basis.eval(t).iter().zip(coefficients).map(|(b, v)| b * v).sum()
            }
        }
    }

    /// True cumulative baseline hazard in closed form where one exists.
    pub fn cumulative_baseline(&self, t: f64) -> Option<f64> {
        match self.baseline {
            BaselineSpec::Constant { rate } => Some(rate * t),
            BaselineSpec::Weibull { shape, scale } => Some((t / scale).powf(shape)),
            BaselineSpec::LogSpline { .. } => None,
        }
    }
}

struct SubjectSim {
    visits: Vec<LongitudinalRecord>,
    record: SurvivalRecord,
    truth: SubjectTruth,
}

/// Draws a joint dataset: random effects from `N(0, D)`, event times by
/// inverting the cumulative hazard, administrative censoring, and visits up
/// to the observed time with Gaussian measurement error.
pub fn simulate_joint(gen: &Generator) -> Result<Simulation> {
    let c = gen.compile()?;
    let width = gen.n_subjects.to_string().len();
    let subjects = (0..gen.n_subjects)
        .into_par_iter()
        .map(|i| simulate_subject(gen, &c, i, width))
        .collect::<Result<Vec<SubjectSim>>>()?;
    let mut longitudinal = Vec::new();
    let mut survival = Vec::with_capacity(subjects.len());
    let mut truths = Vec::with_capacity(subjects.len());
    for s in subjects {
        longitudinal.extend(s.visits);
        survival.push(s.record);
        truths.push(s.truth);
    }
    Ok(Simulation {
        longitudinal,
        survival,
        truth: Truth {
            generator: gen.clone(),
            subjects: truths,
        },
    })
}

fn simulate_subject(gen: &Generator, c: &Compiled, i: usize, width: usize) -> Result<SubjectSim> {
    let mut rng = stream(gen.seed, Purpose::Simulate, i as u64, 0);
    let id = format!("S{:0width$}", i + 1);

    let mut covs: IndexMap<String, CovariateValue> = IndexMap::new();
    for (name, dist) in &gen.covariates {
        let v = match *dist {
            CovariateDist::Bernoulli(p) => CovariateValue::Real(f64::from(u8::from(rng.random::<f64>() < p))),
            CovariateDist::Normal { mean, sd } => CovariateValue::Real(
                Normal::new(mean, sd)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?
                    .sample(&mut rng),
            ),
            CovariateDist::Uniform { low, high } => CovariateValue::Real(low + (high - low) * rng.random::<f64>()),
        };
        covs.insert(name.clone(), v);
    }
    let q = c.d_chol.nrows();
    let z = DVector::from_fn(q, |_, _| rng.sample(StandardNormal));
    let b = &c.d_chol * z;

    let time_var = &gen.time_var;
    let lookup = |t: f64| {
        let covs = &covs;
        move |name: &str| {
            if name == time_var {
                Some(t)
            } else {
                covs.get(name).map(|v| v.as_f64())
            }
        }
    };
    let mu = |t: f64| -> Result<(f64, f64)> {
        let look = lookup(t);
        let x = DVector::from_vec(c.fixed.row(&look)?);
        let zr = DVector::from_vec(c.random.row(&look)?);
        let value = x.dot(&c.beta) + zr.dot(&b);
        let slope = if gen.association == AssociationKind::ValueSlope {
            let dx = DVector::from_vec(c.fixed.derivative_row(time_var, &look)?);
            let dz = DVector::from_vec(c.random.derivative_row(time_var, &look)?);
            dx.dot(&c.beta) + dz.dot(&b)
        } else {
            0.0
        };
        Ok((value, slope))
    };

    let w = DVector::from_vec(c.surv.row(&lookup(0.0))?);
    let eta_w = w.dot(&c.gamma);
    let interaction = gen.transform.as_ref().map_or(0.0, |t| covs[t].as_f64());
    let log_hazard = |t: f64| -> Result<f64> {
        let assoc = match gen.association {
            AssociationKind::SharedRe => c.alpha.dot(&b),
            kind => {
                let (m, dm) = mu(t)?;
                let mut a = c.alpha[0] * m;
                if gen.transform.is_some() {
                    a += c.alpha[1] * m * interaction;
                }
                if kind == AssociationKind::ValueSlope {
                    a += c.alpha[c.alpha.len() - 1] * dm;
                }
                a
            }
        };
        Ok(gen.log_h0(c, t) + eta_w + assoc)
    };
    let cumulative = |t: f64| -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let rule = Rule::new(0.0, t, SEGMENTS);
        let mut h = 0.0;
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            h += wt * log_hazard(*x)?.exp();
        }
        if !h.is_finite() {
            return Err(Error::RootFinding {
                subject: i,
                message: format!("cumulative hazard not finite at t = {t} (b = {:?}, covariates = {covs:?})", b.as_slice()),
            });
        }
        Ok(h)
    };

    let target = -rng.random::<f64>().ln();
    let horizon = gen.censoring_time;
    let bisect = |mut lo: f64, mut hi: f64| -> Result<f64> {
        while hi - lo > 1e-10 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if cumulative(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let latent = if cumulative(horizon)? >= target {
        Some(bisect(0.0, horizon)?)
    } else if cumulative(10.0 * horizon)? >= target {
        Some(bisect(horizon, 10.0 * horizon)?)
    } else if cumulative(100.0 * horizon)? >= target {
        Some(bisect(10.0 * horizon, 100.0 * horizon)?)
    } else {
        None
    };
    let (event_time, event) = match latent {
        Some(t) if t < horizon => (t, true),
        _ => (horizon, false),
    };

    let grid = &gen.visits.times;
    let spacing = if grid.len() > 1 {
        (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64
    } else {
        0.0
    };
    let noise = Normal::new(0.0, gen.sigma2.sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut times: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let j = if gen.visits.jitter { (rng.random::<f64>() * 2.0 - 1.0) * 0.1 * spacing } else { 0.0 };
            (g + j).max(0.0)
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let mut visits = Vec::new();
    for t in times.into_iter().filter(|t| *t <= event_time) {
        let (m, _) = mu(t)?;
        visits.push(LongitudinalRecord {
            subject_id: id.clone(),
            time: t,
            response: m + noise.sample(&mut rng),
            covariates: covs.clone(),
        });
    }

    Ok(SubjectSim {
        visits,
        record: SurvivalRecord {
            subject_id: id.clone(),
            event_time,
            event,
            covariates: covs,
        },
        truth: SubjectTruth {
            subject_id: id,
            random_effects: b.iter().copied().collect(),
            latent_event_time: latent,
            event_time,
            event,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn generator() -> Generator {
        serde_json::from_str(
            r#"{
            "n_subjects": 200, "seed": 7,
            "longitudinal": {"fixed": "y ~ t + x", "random": "~ t"},
            "beta": [1.0, -0.2, 0.5], "sigma2": 0.25, "d": [[1.0, 0.0], [0.0, 0.04]],
            "covariates": {"x": {"bernoulli": 0.5}},
            "survival": {"formula": "~ x", "gamma": [0.3]},
            "association": "value", "alpha": [0.4],
            "baseline": {"weibull": {"shape": 1.3, "scale": 8.0}},
            "visits": {"times": [0, 1, 2, 3, 4]},
            "censoring_time": 6
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_and_consistent() {
        let g = generator();
        let a = simulate_joint(&g).unwrap();
        let b = simulate_joint(&g).unwrap();
        assert_eq!(a, b);
        let ds = a.dataset().unwrap();
        assert_eq!(ds.n_subjects(), 200);
        for (s, r) in a.survival.iter().enumerate() {
            for v in ds.subject_visits(s) {
                assert!(v.time <= r.event_time);
            }
        }
        let mut g2 = g.clone();
        g2.seed = 8;
        assert_ne!(simulate_joint(&g2).unwrap().survival, a.survival);
    }

    #[test]
    fn validation() {
        let mut g = generator();
        g.alpha = vec![];
        assert!(simulate_joint(&g).is_err());
        let mut g = generator();
        g.longitudinal.fixed = "y ~ ns(t, 2)".into();
        assert!(simulate_joint(&g).is_err());
        let mut g = generator();
        g.d = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(simulate_joint(&g).is_err());
        let mut g = generator();
        g.association = AssociationKind::SharedRe;
        g.alpha = vec![0.1, 0.1];
        g.transform = Some("x".into());
        assert!(simulate_joint(&g).is_err());
    }
}
