use serde::{Deserialize, Serialize};

use super::PosteriorChains;
use crate::design::spline::quantile_sorted;
use crate::diagnostics::effective_sample_size;
use crate::stats::format_p;

/// Posterior summary of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// `Longitudinal`, `Event` or `Variance`.
    pub process: String,
    /// Display label, without the chain-name prefix.
    pub parameter: String,
    /// Column name in the chains.
    pub name: String,
    pub mean: f64,
    /// Monte Carlo standard error of the mean.
    pub std_err: f64,
    pub std_dev: f64,
    pub lower: f64,
    pub upper: f64,
    /// Two-sided tail probability of the sign; `None` for variance terms.
    pub p: Option<f64>,
}

fn classify(name: &str) -> Option<(&'static str, String, bool)> {
    if let Some(l) = name.strip_prefix("Y:") {
        Some(("Longitudinal", l.to_string(), true))
    } else if let Some(l) = name.strip_prefix("T:") {
        Some(("Event", l.to_string(), true))
    } else if name.starts_with("Assoct") {
        Some(("Event", name.to_string(), true))
    } else if name == "tauBs" {
        Some(("Event", name.to_string(), false))
    } else if name.starts_with("Bs.gammas") {
        None
    } else {
        Some(("Variance", name.to_string(), false))
    }
}

fn row(process: &str, parameter: String, name: &str, x: &[f64], with_p: bool) -> SummaryRow {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std_dev = if x.len() > 1 {
        (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ess = effective_sample_size(x).ess;
    let p = with_p.then(|| {
        let above = x.iter().filter(|v| **v > 0.0).count() as f64 / n;
        (2.0 * above.min(1.0 - above)).min(1.0)
    });
    SummaryRow {
        process: process.to_string(),
        parameter,
        name: name.to_string(),
        mean,
        std_err: std_dev / ess.sqrt(),
        std_dev,
        lower: quantile_sorted(&sorted, 0.025),
        upper: quantile_sorted(&sorted, 0.975),
        p,
    }
}

/// Posterior mean, Monte Carlo error, standard deviation and 95% credible
/// interval per parameter. Baseline spline coefficients are left out; the
/// residual standard deviation `sigma` is added after `sigma2`.
pub fn summarize(chains: &PosteriorChains) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    if chains.draws.is_empty() {
        return out;
    }
    for (j, name) in chains.names.iter().enumerate() {
        let Some((process, label, with_p)) = classify(name) else {
            continue;
        };
        let x = chains.column_at(j);
        out.push(row(process, label, name, &x, with_p));
        if name == "sigma2" {
            let s: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
            out.push(row("Variance", "sigma".into(), "sigma", &s, false));
        }
    }
    out
}

/// Summary as CSV.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("process,parameter,mean,std_err,std_dev,lower_2.5,upper_97.5,p\n");
    for r in rows {
        let param = if r.parameter.contains(',') {
            format!("\"{}\"", r.parameter)
        } else {
            r.parameter.clone()
        };
        s += &format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.process,
            param,
            r.mean,
            r.std_err,
            r.std_dev,
            r.lower,
            r.upper,
            r.p.map_or("NA".to_string(), format_p)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jointmodel::McmcConfig;

    fn chains(names: &[&str], draws: Vec<Vec<f64>>) -> PosteriorChains {
        PosteriorChains {
            names: names.iter().map(|s| s.to_string()).collect(),
            draws,
            random_effects: vec![],
            n_subjects: 0,
            q: 0,
            acceptance: vec![],
            config: McmcConfig::default(),
            warnings: vec![],
        }
    }

    #[test]
    fn degenerate_chain() {
        let c = chains(&["Y:(Intercept)", "sigma2"], vec![vec![2.5, 4.0]; 60]);
        let rows = summarize(&c);
        assert_eq!(rows[0].mean, 2.5);
        assert_eq!(rows[0].lower, 2.5);
        assert_eq!(rows[0].upper, 2.5);
        assert_eq!(rows[0].parameter, "(Intercept)");
        assert_eq!(rows[2].parameter, "sigma");
        assert_eq!(rows[2].mean, 2.0);
    }

    #[test]
    fn spline_coefficients_hidden() {
        let c = chains(&["Assoct", "Bs.gammas1", "tauBs"], vec![vec![0.1, 0.2, 3.0]; 60]);
        let rows = summarize(&c);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].p, None);
        assert!(summary_csv(&rows).lines().count() == 3);
    }
}
