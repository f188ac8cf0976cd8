//! Cox proportional hazards regression with Breslow ties.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalRecord;
use crate::design::{DesignRecipe, ModelFormula, SurvivalTable, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CoxOptions {
    /// Covariate defining strata with separate baseline hazards.
    pub strata: Option<String>,
    pub max_iter: usize,
    pub score_tol: f64,
    /// Coefficient magnitude treated as divergence (monotone likelihood).
    pub divergence: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            strata: None,
            max_iter: 100,
            score_tol: 1e-9,
            divergence: 15.0,
        }
    }
}

/// Breslow cumulative baseline hazard of one stratum (covariates at zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreslowHazard {
    pub stratum: f64,
    pub times: Vec<f64>,
    pub cumhaz: Vec<f64>,
}

impl BreslowHazard {
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumhaz[k - 1]
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoxFit {
    pub formula: ModelFormula,
    pub recipe: DesignRecipe,
    pub labels: Vec<String>,
    pub gamma: DVector<f64>,
    pub se: Vec<f64>,
    /// Inverse information at the optimum.
    pub cov: DMatrix<f64>,
    pub information: DMatrix<f64>,
    pub score: DVector<f64>,
    pub partial_loglik: f64,
    pub null_loglik: f64,
    pub iterations: usize,
    pub baseline: Vec<BreslowHazard>,
    /// Design snapshot, rows aligned with the input records.
    pub x: DMatrix<f64>,
    pub times: Vec<f64>,
    pub status: Vec<bool>,
    pub strata: Vec<f64>,
    pub subject_ids: Vec<String>,
    pub n_events: usize,
}

impl CoxFit {
    pub fn z(&self) -> Vec<f64> {
        self.gamma.iter().zip(&self.se).map(|(g, s)| g / s).collect()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.z()
            .iter()
            .map(|z| crate::stats::chisq_sf(z * z, 1.0))
            .collect()
    }

    /// Baseline cumulative hazard of the first stratum.
    pub fn cumulative_baseline(&self, t: f64) -> f64 {
        self.baseline.first().map_or(0.0, |b| b.at(t))
    }
}

/// Risk-set bookkeeping shared by the fitter and the residual code.
pub(crate) struct Ordered {
    /// indices sorted by (stratum, time descending)
    pub order: Vec<usize>,
}

pub(crate) fn order(times: &[f64], strata: &[f64]) -> Ordered {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| {
        strata[a]
            .total_cmp(&strata[b])
            .then_with(|| times[b].total_cmp(&times[a]))
    });
    Ordered { order }
}

/// One event time with the risk-set moments at that time.
pub(crate) struct EventGroup {
    pub time: f64,
    pub stratum: f64,
    pub events: Vec<usize>,
    pub s0: f64,
    pub s1: DVector<f64>,
    pub s2: DMatrix<f64>,
}

/// Walks risk sets from the latest time backwards, accumulating
/// `S0 = Σ e^η`, `S1 = Σ e^η x`, `S2 = Σ e^η x xᵀ`.
pub(crate) fn event_groups(
    x: &DMatrix<f64>,
    times: &[f64],
    status: &[bool],
    strata: &[f64],
    eta: &[f64],
    with_s2: bool,
) -> Vec<EventGroup> {
    let p = x.ncols();
    let ord = order(times, strata);
    let mut out = Vec::new();
    let mut k = 0;
    let idx = &ord.order;
    while k < idx.len() {
        let stratum = strata[idx[k]];
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(if with_s2 { p } else { 0 }, if with_s2 { p } else { 0 });
        while k < idx.len() && strata[idx[k]] == stratum {
            let t = times[idx[k]];
            let mut events = Vec::new();
            while k < idx.len() && strata[idx[k]] == stratum && times[idx[k]] == t {
                let i = idx[k];
                let w = eta[i].exp();
                let xi = x.row(i).transpose();
                s0 += w;
                s1 += w * &xi;
                if with_s2 {
                    s2 += w * &xi * xi.transpose();
                }
                if status[i] {
                    events.push(i);
                }
                k += 1;
            }
            if !events.is_empty() {
                out.push(EventGroup {
                    time: t,
                    stratum,
                    events,
                    s0,
                    s1: s1.clone(),
                    s2: s2.clone(),
                });
            }
        }
    }
    out
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    info: DMatrix<f64>,
}

fn evaluate(x: &DMatrix<f64>, times: &[f64], status: &[bool], strata: &[f64], gamma: &DVector<f64>) -> Evaluation {
    let p = x.ncols();
    let eta: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).dot(&gamma.transpose())).collect();
    let mut loglik = 0.0;
    let mut score = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    for g in event_groups(x, times, status, strata, &eta, true) {
        let d = g.events.len() as f64;
        let xbar = &g.s1 / g.s0;
        for &i in &g.events {
            loglik += eta[i];
            score += x.row(i).transpose() - &xbar;
        }
        loglik -= d * g.s0.ln();
        info += d * (&g.s2 / g.s0 - &xbar * xbar.transpose());
    }
    Evaluation { loglik, score, info }
}

/// Breslow partial log-likelihood at `gamma` (used by tests and oracles).
pub fn partial_loglik(fit: &CoxFit, gamma: &DVector<f64>) -> f64 {
    evaluate(&fit.x, &fit.times, &fit.status, &fit.strata, gamma).loglik
}

/// Fits a Cox model with covariates from `formula` (its response and
/// intercept are ignored).
pub fn fit_cox(surv: &[SurvivalRecord], formula: &ModelFormula) -> Result<CoxFit> {
    fit_cox_with(surv, formula, &CoxOptions::default())
}

pub fn fit_cox_with(surv: &[SurvivalRecord], formula: &ModelFormula, opts: &CoxOptions) -> Result<CoxFit> {
    let formula = formula.clone().without_intercept();
    let table = SurvivalTable(surv);
    let recipe = DesignRecipe::new(&formula.fixed, &table)?;
    let design = recipe.matrix(&table)?;
    let x = design.values;
    let p = x.ncols();
    let n = x.nrows();
    let times: Vec<f64> = surv.iter().map(|r| r.event_time).collect();
    let status: Vec<bool> = surv.iter().map(|r| r.event).collect();
    let strata: Vec<f64> = match &opts.strata {
        None => vec![0.0; n],
        Some(s) => (0..n)
            .map(|i| table.value(i, s).ok_or_else(|| Error::UnknownColumn(s.clone())))
            .collect::<Result<_>>()?,
    };
    let n_events = status.iter().filter(|&&e| e).count();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }

    // centering leaves γ and the score unchanged and keeps exp() in range
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);

    let mut gamma = DVector::zeros(p);
    let mut ev = evaluate(&xc, &times, &status, &strata, &gamma);
    let null_loglik = ev.loglik;
    let mut iterations = 0;
    while p > 0 && ev.score.amax() >= opts.score_tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                objective: -ev.loglik,
                gradient_norm: ev.score.amax(),
                best: gamma.iter().copied().collect(),
            });
        }
        iterations += 1;
        let step = match ev.info.clone().cholesky() {
            Some(c) => c.solve(&ev.score),
            None => ev
                .info
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::Numerical(e.to_string()))?
                * &ev.score,
        };
        let mut scale = 1.0;
        let mut next;
        loop {
            let cand = &gamma + scale * &step;
            next = evaluate(&xc, &times, &status, &strata, &cand);
            if next.loglik.is_finite() && next.loglik >= ev.loglik - 1e-12 * ev.loglik.abs() {
                gamma = cand;
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Err(Error::Numerical("Cox step halving failed".into()));
            }
        }
        ev = next;
        if let Some(j) = (0..p).find(|&j| gamma[j].abs() > opts.divergence) {
            return Err(Error::MonotoneLikelihood {
                covariate: design.labels[j].clone(),
                value: gamma[j],
            });
        }
        if (scale * step.amax()) < 1e-14 {
            break;
        }
    }

    let cov = if p > 0 {
        ev.info
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular Cox information matrix".into()))?
    } else {
        DMatrix::zeros(0, 0)
    };
    let se = (0..p).map(|j| cov[(j, j)].sqrt()).collect();

    // Breslow estimator on the uncentered scale
    let eta: Vec<f64> = (0..n).map(|i| x.row(i).dot(&gamma.transpose())).collect();
    let mut baseline: Vec<BreslowHazard> = Vec::new();
    let mut groups = event_groups(&x, &times, &status, &strata, &eta, false);
    groups.sort_by(|a, b| a.stratum.total_cmp(&b.stratum).then(a.time.total_cmp(&b.time)));
    for g in groups {
        if baseline.last().is_none_or(|b| b.stratum != g.stratum) {
            baseline.push(BreslowHazard {
                stratum: g.stratum,
                times: vec![],
                cumhaz: vec![],
            });
        }
        let b = baseline.last_mut().unwrap();
        let prev = b.cumhaz.last().copied().unwrap_or(0.0);
        b.times.push(g.time);
        b.cumhaz.push(prev + g.events.len() as f64 / g.s0);
    }

    Ok(CoxFit {
        labels: design.labels,
        formula,
        recipe,
        gamma,
        se,
        cov,
        information: ev.info,
        score: ev.score,
        partial_loglik: ev.loglik,
        null_loglik,
        iterations,
        baseline,
        x,
        times,
        status,
        strata,
        subject_ids: surv.iter().map(|r| r.subject_id.clone()).collect(),
        n_events,
    })
}
