//! Convergence diagnostics for posterior chains and Bayesian model comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jointmodel::{JointModel, PosteriorChains};
use crate::stats::log_sum_exp;

/// Sample autocorrelations at lags `0..=max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| {
            if c0 == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            let ck: f64 = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            ck / c0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub ess: f64,
    /// Set when the chain is constant; `ess` is then the chain length.
    pub zero_variance: bool,
}

/// Effective sample size `n / (1 + 2 Σ ρ_k)`, summing autocorrelations in
/// adjacent pairs until the first pair with a non-positive sum.
pub fn effective_sample_size(x: &[f64]) -> Ess {
    let n = x.len();
    let nf = n as f64;
    let m = x.iter().sum::<f64>() / nf;
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum::<f64>() / nf;
    if n < 2 || c0 <= 1e-300 {
        return Ess {
            ess: nf,
            zero_variance: true,
        };
    }
    let rho = |k: usize| -> f64 { c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / nf / c0 };
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    Ess {
        ess: (nf / tau.max(1e-12)).min(nf),
        zero_variance: false,
    }
}

/// Gaussian kernel density with Silverman's bandwidth on `points` grid
/// points spanning the data plus four bandwidths on each side.
pub fn kde(x: &[f64], points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let sd = crate::stats::variance(x).sqrt();
    let iqr = crate::stats::quantile(x, 0.75) - crate::stats::quantile(x, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let mut h = 0.9 * spread * n.powf(-0.2);
    if !(h > 0.0) {
        h = 1e-3 * (s[0].abs() + 1.0);
    }
    let lo = s[0] - 4.0 * h;
    let hi = s[s.len() - 1] + 4.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let dens = grid
        .iter()
        .map(|g| {
            // only points within 8 bandwidths matter
            let a = s.partition_point(|v| *v < g - 8.0 * h);
            let b = s.partition_point(|v| *v <= g + 8.0 * h);
            s[a..b].iter().map(|v| (-0.5 * ((g - v) / h).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect();
    (grid, dens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub trace: Vec<f64>,
    pub acf: Vec<f64>,
    pub kde_x: Vec<f64>,
    pub kde_y: Vec<f64>,
    pub ess: Ess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub parameters: Vec<ParameterDiagnostics>,
    pub acceptance: Vec<(String, f64)>,
}

pub const MIN_DRAWS: usize = 50;
pub const KDE_POINTS: usize = 512;

/// Trace, autocorrelation (lags 0..=`max_lag`), density and ESS for the
/// selected parameters (all when `params` is empty).
pub fn diagnose(chains: &PosteriorChains, params: &[&str], max_lag: usize) -> Result<ChainDiagnostics> {
    if chains.n_draws() < MIN_DRAWS {
        return Err(Error::InvalidInput(format!(
            "{} retained draws; at least {MIN_DRAWS} are needed",
            chains.n_draws()
        )));
    }
    let selected: Vec<usize> = if params.is_empty() {
        (0..chains.names.len()).collect()
    } else {
        params
            .iter()
            .map(|p| chains.index(p).ok_or_else(|| Error::UnknownColumn(p.to_string())))
            .collect::<Result<_>>()?
    };
    let parameters = selected
        .into_iter()
        .map(|j| {
            let x = chains.column_at(j);
            let (kde_x, kde_y) = kde(&x, KDE_POINTS);
            ParameterDiagnostics {
                name: chains.names[j].clone(),
                acf: acf(&x, max_lag),
                ess: effective_sample_size(&x),
                trace: x,
                kde_x,
                kde_y,
            }
        })
        .collect();
    Ok(ChainDiagnostics {
        parameters,
        acceptance: chains.acceptance.clone(),
    })
}

impl ChainDiagnostics {
    pub fn trace_csv(&self, k: usize) -> String {
        let p = &self.parameters[k];
        let mut s = String::from("iteration,value\n");
        for (i, v) in p.trace.iter().enumerate() {
            s += &format!("{},{}\n", i + 1, crate::data::format_real(*v));
        }
        s
    }

    pub fn acf_csv(&self, k: usize) -> String {
        let mut s = String::from("lag,acf\n");
        for (i, v) in self.parameters[k].acf.iter().enumerate() {
            s += &format!("{i},{v:.6}\n");
        }
        s
    }

    pub fn kde_csv(&self, k: usize) -> String {
        let p = &self.parameters[k];
        let mut s = String::from("x,density\n");
        for (x, y) in p.kde_x.iter().zip(&p.kde_y) {
            s += &format!("{x:.6},{y:.6}\n");
        }
        s
    }

    /// One row per parameter with its ESS.
    pub fn ess_csv(&self) -> String {
        let mut s = String::from("parameter,ess,zero_variance\n");
        for p in &self.parameters {
            s += &format!("\"{}\",{:.1},{}\n", p.name, p.ess.ess, p.ess.zero_variance);
        }
        s
    }
}

/// One model's row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    /// Retained draws the criteria were computed from.
    pub draws: usize,
    /// Number of global parameters in the chains.
    pub parameters: usize,
    pub lpml: f64,
    pub dic: f64,
    pub pd: f64,
    /// Draws dropped for a non-finite deviance.
    pub excluded: usize,
    pub best: bool,
}

/// Conditional DIC (deviance given the drawn random effects) and LPML with
/// harmonic-mean CPO estimates.
pub fn dic_lpml(model: &JointModel, chains: &PosteriorChains, name: &str) -> Result<ComparisonRow> {
    let s = chains.n_draws();
    if s == 0 {
        return Err(Error::InvalidInput("no retained draws".into()));
    }
    if model.n_random() > 0 && chains.random_effects.len() != s {
        return Err(Error::InvalidInput("chains do not carry random-effect draws".into()));
    }
    let per_draw: Vec<Option<Vec<f64>>> = (0..s)
        .into_par_iter()
        .map(|k| {
            let params = model.params_at(chains, k);
            model
                .subject_logliks(&params)
                .ok()
                .map(|v| v.iter().map(|(a, b)| a + b).collect::<Vec<f64>>())
                .filter(|v| v.iter().all(|x| x.is_finite()))
        })
        .collect();
    let kept: Vec<&Vec<f64>> = per_draw.iter().flatten().collect();
    let excluded = s - kept.len();
    if excluded as f64 > 0.01 * s as f64 {
        return Err(Error::Numerical(format!("{excluded} of {s} draws have a non-finite deviance")));
    }
    let m = kept.len() as f64;
    let dbar = kept.iter().map(|v| -2.0 * v.iter().sum::<f64>()).sum::<f64>() / m;
    let mean_params = model.posterior_mean(chains);
    let d_hat = -2.0
        * model
            .subject_logliks(&mean_params)?
            .iter()
            .map(|(a, b)| a + b)
            .sum::<f64>();
    let pd = dbar - d_hat;
    let n = model.n_subjects();
    let mut lpml = 0.0;
    let mut neg = Vec::with_capacity(kept.len());
    for i in 0..n {
        neg.clear();
        neg.extend(kept.iter().map(|v| -v[i]));
        lpml += -(log_sum_exp(&neg) - m.ln());
    }
    Ok(ComparisonRow {
        model: name.to_string(),
        draws: s,
        parameters: chains.names.len(),
        lpml,
        dic: dbar + pd,
        pd,
        excluded,
        best: false,
    })
}

/// Keeps the input order and flags the row with the smallest DIC (the
/// first one on ties).
pub fn compare(rows: &[ComparisonRow]) -> Result<Vec<ComparisonRow>> {
    if rows.len() < 2 {
        return Err(Error::InvalidComparison("at least two models are needed".into()));
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.dic < rows[best].dic {
            best = i;
        }
    }
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, r)| ComparisonRow { best: i == best, ..r.clone() })
        .collect())
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("model,draws,parameters,LPML,DIC,pD,best\n");
    for r in rows {
        s += &format!(
            "{},{},{},{:.2},{:.2},{:.3},{}\n",
            r.model, r.draws, r.parameters, r.lpml, r.dic, r.pd, r.best
        );
    }
    s
}

pub fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("| model | draws | parameters | LPML | DIC | pD | |\n|---|---:|---:|---:|---:|---:|---|\n");
    for r in rows {
        s += &format!(
            "| {} | {} | {} | {:.2} | {:.2} | {:.3} | {} |\n",
            r.model,
            r.draws,
            r.parameters,
            r.lpml,
            r.dic,
            r.pd,
            if r.best { "*" } else { "" }
        );
    }
    s
}

/// Renders series as a line (or step) chart.
pub fn svg_plot(title: &str, series: &[(Vec<f64>, Vec<f64>)], step: bool) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let all_x = series.iter().flat_map(|s| s.0.iter().copied());
    let all_y = series.iter().flat_map(|s| s.1.iter().copied());
    let (x0, x1) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (mut y0, mut y1) = all_y.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n",
        w / 2.0,
        escape(title),
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    out += &format!(
        "<text x=\"{pad}\" y=\"{}\">{}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
        h - pad + 16.0,
        fmt_tick(x0),
        w - pad,
        h - pad + 16.0,
        fmt_tick(x1)
    );
    out += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
        pad - 4.0,
        h - pad,
        fmt_tick(y0),
        pad - 4.0,
        pad + 4.0,
        fmt_tick(y1)
    );
    for (k, (xs, ys)) in series.iter().enumerate() {
        let mut pts = Vec::with_capacity(xs.len() * 2);
        for i in 0..xs.len() {
            if step && i > 0 {
                pts.push(format!("{:.2},{:.2}", sx(xs[i]), sy(ys[i - 1])));
            }
            pts.push(format!("{:.2},{:.2}", sx(xs[i]), sy(ys[i])));
        }
        out += &format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"/>\n",
            colors[k % colors.len()],
            pts.join(" ")
        );
    }
    out += "</svg>\n";
    out
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let e = normals(n, seed);
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = phi * x[t - 1] + e[t];
        }
        x
    }

    #[test]
    fn acf_lag_zero() {
        assert_eq!(acf(&normals(100, 1), 10)[0], 1.0);
        assert_eq!(acf(&[3.0; 10], 3), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ess_iid_and_ar1() {
        let e = effective_sample_size(&normals(10000, 2)).ess;
        assert!((9000.0..=10000.0).contains(&e), "{e}");
        let n = 20000;
        let e = effective_sample_size(&ar1(n, 0.9, 3)).ess;
        let expect = n as f64 / 19.0;
        assert!((e - expect).abs() < 0.25 * expect, "{e} vs {expect}");
        let c = effective_sample_size(&[1.0; 60]);
        assert!(c.zero_variance && c.ess == 60.0);
    }

    #[test]
    fn ess_decreases_with_correlation() {
        let mut last = f64::INFINITY;
        for phi in [0.0, 0.3, 0.6, 0.9] {
            let e = effective_sample_size(&ar1(5000, phi, 4)).ess;
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let (x, y) = kde(&normals(2000, 5), KDE_POINTS);
        let step = x[1] - x[0];
        let area: f64 = y.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        assert!((area - 1.0).abs() < 1e-3, "{area}");
        assert_eq!(x.len(), 512);
    }

    fn row(dic: f64) -> ComparisonRow {
        ComparisonRow {
            model: "m".into(),
            draws: 10,
            parameters: 3,
            lpml: 0.0,
            dic,
            pd: 0.0,
            excluded: 0,
            best: false,
        }
    }

    #[test]
    fn compare_flags_minimum() {
        let r = compare(&[row(51793.14), row(51606.23)]).unwrap();
        assert!(!r[0].best && r[1].best);
        let r = compare(&[row(5.0), row(5.0)]).unwrap();
        assert!(r[0].best && !r[1].best);
        assert!(compare(&[row(1.0)]).is_err());
    }

    #[test]
    fn svg_renders() {
        let s = svg_plot("a<b", &[(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.25])], true);
        assert!(s.starts_with("<svg") && s.contains("polyline") && s.contains("a&lt;b"));
    }
}
