//! Proportional-hazards check based on Schoenfeld residuals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cox::{event_groups, CoxFit};
use crate::error::{Error, Result};
use crate::stats::{chisq_sf, format_p};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeTransform {
    #[default]
    Identity,
    Rank,
    Km,
}

impl std::str::FromStr for TimeTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "rank" => Ok(Self::Rank),
            "km" => Ok(Self::Km),
            _ => Err(Error::InvalidInput(format!("unknown time transform '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZphRow {
    pub term: String,
    /// Correlation of scaled residuals with transformed time; `None` for the
    /// global row.
    pub rho: Option<f64>,
    pub chisq: f64,
    pub df: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoenfeldTest {
    pub transform: TimeTransform,
    pub rows: Vec<ZphRow>,
    /// Event times and scaled Schoenfeld residuals, one row per event.
    pub event_times: Vec<f64>,
    pub scaled_residuals: Vec<Vec<f64>>,
}

impl SchoenfeldTest {
    pub fn global(&self) -> &ZphRow {
        self.rows.last().expect("global row present")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,rho,chisq,df,p\n");
        for r in &self.rows {
            let rho = r.rho.map_or("NA".to_string(), |v| format!("{v:.4}"));
            s += &format!("{},{},{:.4},{},{}\n", r.term, rho, r.chisq, r.df, format_p(r.p));
        }
        s
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = crate::stats::mean(a);
    let mb = crate::stats::mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn solve_quadratic(u: &DVector<f64>, info: &DMatrix<f64>) -> Result<f64> {
    let inv = info
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((u.transpose() * inv * u)[(0, 0)])
}

/// Score test of `γ_j(t) = γ_j + θ_j g(t)` against `θ = 0`, per covariate
/// and jointly.
pub fn schoenfeld_test(fit: &CoxFit, transform: TimeTransform) -> Result<SchoenfeldTest> {
    let p = fit.gamma.len();
    if p == 0 {
        return Err(Error::InvalidInput("model has no covariates".into()));
    }
    let n = fit.x.nrows();
    let eta: Vec<f64> = (0..n).map(|i| fit.x.row(i).dot(&fit.gamma.transpose())).collect();
    let mut groups = event_groups(&fit.x, &fit.times, &fit.status, &fit.strata, &eta, true);
    groups.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.stratum.total_cmp(&b.stratum)));

    // one entry per event
    let mut times = Vec::new();
    let mut resid: Vec<DVector<f64>> = Vec::new();
    let mut vars: Vec<DMatrix<f64>> = Vec::new();
    for g in &groups {
        let xbar = &g.s1 / g.s0;
        let v = &g.s2 / g.s0 - &xbar * xbar.transpose();
        for &i in &g.events {
            times.push(g.time);
            resid.push(fit.x.row(i).transpose() - &xbar);
            vars.push(v.clone());
        }
    }
    let d = times.len();
    if d < 2 {
        return Err(Error::InsufficientEvents { events: d, covariates: p });
    }

    let mut g: Vec<f64> = match transform {
        TimeTransform::Identity => times.clone(),
        TimeTransform::Rank => {
            // average ranks of the event times
            (0..d)
                .map(|k| {
                    let below = times.iter().filter(|&&t| t < times[k]).count();
                    let tied = times.iter().filter(|&&t| t == times[k]).count();
                    below as f64 + (tied as f64 + 1.0) / 2.0
                })
                .collect()
        }
        TimeTransform::Km => {
            let recs: Vec<crate::data::SurvivalRecord> = fit
                .times
                .iter()
                .zip(&fit.status)
                .map(|(&t, &e)| crate::data::SurvivalRecord {
                    subject_id: String::new(),
                    event_time: t,
                    event: e,
                    covariates: Default::default(),
                })
                .collect();
            let km = &super::kaplan_meier(&recs, None)?[0];
            // left-continuous 1 - S(t-)
            times
                .iter()
                .map(|&t| {
                    let k = km.times.partition_point(|&s| s < t);
                    1.0 - if k == 0 { 1.0 } else { km.survival[k - 1] }
                })
                .collect()
        }
    };
    let gm = crate::stats::mean(&g);
    for x in &mut g {
        *x -= gm;
    }

    let mut u2 = DVector::zeros(p);
    let mut info = DMatrix::zeros(2 * p, 2 * p);
    for k in 0..d {
        u2 += g[k] * &resid[k];
        let v = &vars[k];
        for a in 0..p {
            for b in 0..p {
                info[(a, b)] += v[(a, b)];
                info[(a, p + b)] += g[k] * v[(a, b)];
                info[(p + a, b)] += g[k] * v[(a, b)];
                info[(p + a, p + b)] += g[k] * g[k] * v[(a, b)];
            }
        }
    }

    let scaled: Vec<DVector<f64>> = resid
        .iter()
        .map(|r| &fit.gamma + (d as f64) * (&fit.cov * r))
        .collect();

    let mut rows = Vec::with_capacity(p + 1);
    for j in 0..p {
        let idx = [j, p + j];
        let sub = DMatrix::from_fn(2, 2, |a, b| info[(idx[a], idx[b])]);
        let u = DVector::from_vec(vec![0.0, u2[j]]);
        let chisq = solve_quadratic(&u, &sub)?;
        let col: Vec<f64> = scaled.iter().map(|s| s[j]).collect();
        rows.push(ZphRow {
            term: fit.labels[j].clone(),
            rho: Some(pearson(&g, &col)),
            chisq,
            df: 1,
            p: chisq_sf(chisq, 1.0),
        });
    }
    let mut u = DVector::zeros(2 * p);
    u.rows_mut(p, p).copy_from(&u2);
    let chisq = solve_quadratic(&u, &info)?;
    rows.push(ZphRow {
        term: "GLOBAL".into(),
        rho: None,
        chisq,
        df: p,
        p: chisq_sf(chisq, p as f64),
    });

    Ok(SchoenfeldTest {
        transform,
        rows,
        event_times: times,
        scaled_residuals: scaled.iter().map(|s| s.iter().copied().collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateValue, SurvivalRecord};
    use crate::design::parse_formula;
    use crate::survival::fit_cox;
    use rand::{Rng, SeedableRng};

    fn sample(n: usize, seed: u64, theta: f64) -> Vec<SurvivalRecord> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x: f64 = if rng.random::<bool>() { 1.0 } else { 0.0 };
                let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
                let u: f64 = rng.random::<f64>();
                // piecewise effect: x matters before t=1 only when theta != 0
                let rate = (0.5 * z + theta * x).exp();
                let mut t = -u.ln() / rate;
                if theta != 0.0 && t > 1.0 {
                    t = 1.0 + (t - 1.0) * rate / (0.5 * z).exp();
                }
                let c = 3.0;
                SurvivalRecord {
                    subject_id: format!("{i}"),
                    event_time: t.min(c),
                    event: t < c,
                    covariates: [
                        ("x".to_string(), CovariateValue::Real(x)),
                        ("z".to_string(), CovariateValue::Real(z)),
                    ]
                    .into_iter()
                    .collect(),
                }
            })
            .collect()
    }

    #[test]
    fn shape_and_rank_invariance() {
        let recs = sample(200, 3, 0.0);
        let fit = fit_cox(&recs, &parse_formula("~ x + z").unwrap()).unwrap();
        let a = schoenfeld_test(&fit, TimeTransform::Rank).unwrap();
        assert_eq!(a.rows.len(), 3);
        assert_eq!(a.global().df, 2);
        assert!(a.global().rho.is_none());
        // a monotone rescaling of time leaves rank-based statistics unchanged
        let mut stretched = recs.clone();
        for r in &mut stretched {
            r.event_time = r.event_time.powi(3) * 7.0;
        }
        let fit2 = fit_cox(&stretched, &parse_formula("~ x + z").unwrap()).unwrap();
        let b = schoenfeld_test(&fit2, TimeTransform::Rank).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((ra.chisq - rb.chisq).abs() < 1e-8);
        }
        assert!(a.to_csv().starts_with("term,rho,chisq,df,p\n"));
    }

    #[test]
    fn detects_time_varying_effect() {
        let recs = sample(600, 11, 1.5);
        let fit = fit_cox(&recs, &parse_formula("~ x + z").unwrap()).unwrap();
        let t = schoenfeld_test(&fit, TimeTransform::Identity).unwrap();
        assert!(t.rows[0].p < 0.01, "{:?}", t.rows[0]);
    }
}
