use serde::{Deserialize, Serialize};

use crate::data::SurvivalRecord;
use crate::error::{Error, Result};

/// Product-limit survivor curve evaluated at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub group: Option<String>,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    /// Greenwood standard error of `survival`.
    pub std_err: Vec<f64>,
}

impl KmCurve {
    /// Right-continuous step function value at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

fn product_limit(times: &[f64], events: &[bool], group: Option<String>) -> KmCurve {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk = times.len();
    let mut s = 1.0;
    let mut greenwood = 0.0;
    let mut curve = KmCurve {
        group,
        times: vec![],
        survival: vec![],
        at_risk: vec![],
        events: vec![],
        std_err: vec![],
    };
    let mut k = 0;
    while k < idx.len() {
        let t = times[idx[k]];
        let mut d = 0;
        let mut leaving = 0;
        while k < idx.len() && times[idx[k]] == t {
            if events[idx[k]] {
                d += 1;
            }
            leaving += 1;
            k += 1;
        }
        // censorings tied with events stay in the risk set at t
        if d > 0 {
            let n = at_risk as f64;
            s *= 1.0 - d as f64 / n;
            if at_risk > d {
                greenwood += d as f64 / (n * (n - d as f64));
            }
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
            curve.std_err.push(if s > 0.0 { s * greenwood.sqrt() } else { 0.0 });
        }
        at_risk -= leaving;
    }
    curve
}

/// Kaplan-Meier curves, one per distinct value of `group_by` (or a single
/// curve when `None`).
pub fn kaplan_meier(surv: &[SurvivalRecord], group_by: Option<&str>) -> Result<Vec<KmCurve>> {
    if surv.is_empty() {
        return Err(Error::InvalidInput("no survival records".into()));
    }
    if let Some(r) = surv.iter().find(|r| !(r.event_time >= 0.0) || !r.event_time.is_finite()) {
        return Err(Error::NegativeTime {
            subject: r.subject_id.clone(),
            time: r.event_time,
        });
    }
    let Some(name) = group_by else {
        let t: Vec<f64> = surv.iter().map(|r| r.event_time).collect();
        let e: Vec<bool> = surv.iter().map(|r| r.event).collect();
        return Ok(vec![product_limit(&t, &e, None)]);
    };
    let mut levels: Vec<f64> = Vec::new();
    let mut keys = Vec::with_capacity(surv.len());
    for r in surv {
        let v = r
            .covariates
            .get(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?
            .as_f64();
        if !levels.contains(&v) {
            levels.push(v);
        }
        keys.push(v);
    }
    levels.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for level in levels {
        let members: Vec<usize> = (0..surv.len()).filter(|&i| keys[i] == level).collect();
        if members.is_empty() {
            return Err(Error::InvalidInput(format!("empty group {name}={level}")));
        }
        let t: Vec<f64> = members.iter().map(|&i| surv[i].event_time).collect();
        let e: Vec<bool> = members.iter().map(|&i| surv[i].event).collect();
        out.push(product_limit(&t, &e, Some(format!("{name}={level}"))));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(data: &[(f64, bool)]) -> Vec<SurvivalRecord> {
        data.iter()
            .enumerate()
            .map(|(i, &(t, e))| SurvivalRecord {
                subject_id: format!("s{i}"),
                event_time: t,
                event: e,
                covariates: Default::default(),
            })
            .collect()
    }

    #[test]
    fn no_censoring() {
        let c = &kaplan_meier(&recs(&[(1.0, true), (2.0, true), (3.0, true), (4.0, true)]), None).unwrap()[0];
        assert_eq!(c.survival, vec![0.75, 0.5, 0.25, 0.0]);
        assert_eq!(c.at_risk, vec![4, 3, 2, 1]);
    }

    #[test]
    fn all_censored() {
        let c = &kaplan_meier(&recs(&[(1.0, false), (2.0, false)]), None).unwrap()[0];
        assert!(c.times.is_empty());
        assert_eq!(c.survival_at(5.0), 1.0);
    }

    #[test]
    fn censored_between_deaths() {
        let c = &kaplan_meier(&recs(&[(1.0, true), (2.0, false), (3.0, true)]), None).unwrap()[0];
        assert_eq!(c.times, vec![1.0, 3.0]);
        assert!((c.survival[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(c.survival[1].abs() < 1e-12);
    }

    #[test]
    fn tie_event_before_censoring() {
        // the censored subject at t=2 is at risk for the death at t=2
        let c = &kaplan_meier(&recs(&[(2.0, true), (2.0, false), (5.0, true)]), None).unwrap()[0];
        assert!((c.survival[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.at_risk, vec![3, 1]);
    }

    #[test]
    fn grouped() {
        let mut r = recs(&[(1.0, true), (2.0, true), (3.0, true)]);
        for (i, x) in r.iter_mut().enumerate() {
            x.covariates.insert("g".into(), crate::data::CovariateValue::Real((i % 2) as f64));
        }
        let cs = kaplan_meier(&r, Some("g")).unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].group.as_deref(), Some("g=0"));
        assert!(kaplan_meier(&r, Some("nope")).is_err());
        assert!(kaplan_meier(&[], None).is_err());
    }
}
