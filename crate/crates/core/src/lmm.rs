//! Linear mixed-effects models fitted by maximum or restricted maximum likelihood.
//!
//! The model is `y_i = X_i β + Z_i b_i + ε_i` with `b_i ~ N(0, D)` and
//! `ε_i ~ N(0, σ² I)`. The likelihood is profiled over β and σ²; what remains
//! is optimized over the log-Cholesky factor of the relative covariance
//! `Δ = D / σ²`, which keeps `D` positive definite without constraints.
//!
//! Each subject contributes through its cross-products only, via
//! `V_i / σ² = I + Z_i L L' Z_iᵀ` and the `q x q` matrix `M_i = I + Lᵀ Z_iᵀ Z_i L`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::JointDataset;
use crate::design::{MixedRecipe, ModelFormula, Table};
use crate::error::{Error, Result};
use crate::optim::{self, BfgsOptions};
use crate::stats::LN_2PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Ml,
    Reml,
}

/// Per-subject cross-products.
#[derive(Debug, Clone)]
struct SubjectStats {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    ztz: DMatrix<f64>,
    ztx: DMatrix<f64>,
    zty: DVector<f64>,
}

#[derive(Debug, Clone)]
struct Problem {
    p: usize,
    q: usize,
    n: usize,
    subjects: Vec<SubjectStats>,
    /// subject index in the dataset for each entry of `subjects`
    owners: Vec<usize>,
    method: Method,
}

struct Profile {
    deviance: f64,
    beta: DVector<f64>,
    sigma2: f64,
    a: DMatrix<f64>,
}

/// Lower-triangular factor from its packed log-Cholesky parameters.
fn unpack_l(theta: &[f64], q: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(q, q);
    let mut k = 0;
    for j in 0..q {
        for i in j..q {
            l[(i, j)] = if i == j { theta[k].exp() } else { theta[k] };
            k += 1;
        }
    }
    l
}

fn pack_l(l: &DMatrix<f64>) -> Vec<f64> {
    let q = l.nrows();
    let mut out = Vec::with_capacity(q * (q + 1) / 2);
    for j in 0..q {
        for i in j..q {
            out.push(if i == j { l[(i, i)].max(1e-12).ln() } else { l[(i, j)] });
        }
    }
    out
}

struct SubjectTerms {
    logdet_m: f64,
    xvx: DMatrix<f64>,
    xvy: DVector<f64>,
    yvy: f64,
}

impl Problem {
    fn subject_terms(&self, s: &SubjectStats, l: &DMatrix<f64>) -> Option<SubjectTerms> {
        if self.q == 0 {
            return Some(SubjectTerms {
                logdet_m: 0.0,
                xvx: s.xtx.clone(),
                xvy: s.xty.clone(),
                yvy: s.yty,
            });
        }
        let lt = l.transpose();
        let m = DMatrix::identity(self.q, self.q) + &lt * &s.ztz * l;
        let chol = Cholesky::new(m)?;
        let logdet_m = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let ltzx = &lt * &s.ztx; // q x p
        let ltzy = &lt * &s.zty; // q
        let minv_zx = chol.solve(&ltzx);
        let minv_zy = chol.solve(&ltzy);
        Some(SubjectTerms {
            logdet_m,
            xvx: &s.xtx - ltzx.transpose() * &minv_zx,
            xvy: &s.xty - ltzx.transpose() * &minv_zy,
            yvy: s.yty - ltzy.dot(&minv_zy),
        })
    }

    fn profile(&self, theta: &[f64]) -> Option<Profile> {
        let l = unpack_l(theta, self.q);
        let mut a = DMatrix::zeros(self.p, self.p);
        let mut c = DVector::zeros(self.p);
        let mut yvy = 0.0;
        let mut logdet = 0.0;
        for s in &self.subjects {
            let t = self.subject_terms(s, &l)?;
            a += t.xvx;
            c += t.xvy;
            yvy += t.yvy;
            logdet += t.logdet_m;
        }
        let chol = Cholesky::new(a.clone())?;
        let beta = chol.solve(&c);
        let rss = (yvy - c.dot(&beta)).max(1e-300);
        let n = self.n as f64;
        let (deviance, sigma2) = match self.method {
            Method::Ml => {
                let s2 = rss / n;
                (logdet + n * (1.0 + LN_2PI + s2.ln()), s2)
            }
            Method::Reml => {
                let df = n - self.p as f64;
                let s2 = rss / df;
                let logdet_a = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                (logdet + logdet_a + df * (1.0 + LN_2PI + s2.ln()), s2)
            }
        };
        deviance.is_finite().then_some(Profile {
            deviance,
            beta,
            sigma2,
            a,
        })
    }

    /// Log-likelihood (profiled over β only) in natural parameters:
    /// lower-triangle entries of `D` followed by σ².
    fn loglik_natural(&self, psi: &[f64]) -> f64 {
        let q = self.q;
        let sigma2 = psi[psi.len() - 1];
        if !(sigma2 > 0.0) {
            return f64::NAN;
        }
        let mut d = DMatrix::zeros(q, q);
        let mut k = 0;
        for j in 0..q {
            for i in j..q {
                d[(i, j)] = psi[k];
                d[(j, i)] = psi[k];
                k += 1;
            }
        }
        let l = if q > 0 {
            match Cholesky::new(d / sigma2) {
                Some(c) => c.l(),
                None => return f64::NAN,
            }
        } else {
            DMatrix::zeros(0, 0)
        };
        let mut a = DMatrix::zeros(self.p, self.p);
        let mut c = DVector::zeros(self.p);
        let mut yvy = 0.0;
        let mut logdet = 0.0;
        for s in &self.subjects {
            let Some(t) = self.subject_terms(s, &l) else {
                return f64::NAN;
            };
            a += t.xvx;
            c += t.xvy;
            yvy += t.yvy;
            logdet += t.logdet_m;
        }
        let Some(chol) = Cholesky::new(a) else {
            return f64::NAN;
        };
        let beta = chol.solve(&c);
        let rss = yvy - c.dot(&beta);
        let n = self.n as f64;
        let mut ll = -0.5 * (logdet + n * (LN_2PI + sigma2.ln()) + rss / sigma2);
        if self.method == Method::Reml {
            let logdet_a = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            ll -= 0.5 * (logdet_a - self.p as f64 * sigma2.ln());
        }
        ll
    }
}

/// A fitted linear mixed model.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub formula: ModelFormula,
    pub recipe: MixedRecipe,
    pub method: Method,
    pub beta: DVector<f64>,
    pub beta_labels: Vec<String>,
    /// Covariance of the fixed-effect estimates, `σ² (Σ Xᵀ V⁻¹ X)⁻¹`.
    pub beta_cov: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub random_labels: Vec<String>,
    pub sigma2: f64,
    /// Maximized (restricted) log-likelihood.
    pub loglik: f64,
    /// Best linear unbiased predictors, one per subject of the dataset
    /// (zero for subjects without visits).
    pub blups: Vec<DVector<f64>>,
    /// Conditional covariance `Var(b_i | y_i)` at the estimates.
    pub blup_cov: Vec<DMatrix<f64>>,
    pub subject_ids: Vec<String>,
    pub n_obs: usize,
    pub n_subjects: usize,
    pub df: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
    /// Packed log-Cholesky parameters of `D / σ²` at the optimum.
    pub theta: Vec<f64>,
    problem: Problem,
}

impl LmmFit {
    /// Profiled deviance at arbitrary relative-covariance parameters.
    pub fn deviance_at(&self, theta: &[f64]) -> f64 {
        self.problem.profile(theta).map_or(f64::NAN, |p| p.deviance)
    }

    /// Log-likelihood under `method` at this fit's variance components,
    /// with β profiled out.
    pub fn loglik_under(&self, method: Method) -> f64 {
        let mut problem = self.problem.clone();
        problem.method = method;
        problem.loglik_natural(&self.variance_parameters())
    }

    /// Lower-triangle entries of `D` (column-major) followed by σ².
    pub fn variance_parameters(&self) -> Vec<f64> {
        let q = self.d.nrows();
        let mut v = Vec::new();
        for j in 0..q {
            for i in j..q {
                v.push(self.d[(i, j)]);
            }
        }
        v.push(self.sigma2);
        v
    }

    pub fn variance_labels(&self) -> Vec<String> {
        let q = self.d.nrows();
        let mut v = Vec::new();
        for j in 0..q {
            for i in j..q {
                v.push(format!("D[{},{}]", i + 1, j + 1));
            }
        }
        v.push("sigma2".into());
        v
    }

    /// Standard errors of [`Self::variance_parameters`] from the observed
    /// information (numerical Hessian of the log-likelihood).
    pub fn variance_se(&self) -> Vec<f64> {
        let psi = self.variance_parameters();
        let k = psi.len();
        let f = |x: &[f64]| self.problem.loglik_natural(x);
        let h: Vec<f64> = psi.iter().map(|v| 1e-4 * v.abs().max(1e-3)).collect();
        let mut hess = DMatrix::zeros(k, k);
        let mut x = psi.clone();
        for i in 0..k {
            for j in i..k {
                let mut eval = |si: f64, sj: f64| {
                    x.copy_from_slice(&psi);
                    x[i] += si * h[i];
                    x[j] += sj * h[j];
                    f(&x)
                };
                let v = if i == j {
                    (eval(1.0, 0.0) - 2.0 * f(&psi) + eval(-1.0, 0.0)) / (h[i] * h[i])
                } else {
                    (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                        / (4.0 * h[i] * h[j])
                };
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        match (-hess).try_inverse() {
            Some(cov) => (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
            None => vec![f64::NAN; k],
        }
    }

    pub fn beta_se(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|i| self.beta_cov[(i, i)].sqrt()).collect()
    }

    /// Gradient of the (restricted) log-likelihood with respect to the
    /// log-Cholesky parameters, by central differences.
    pub fn loglik_gradient(&self, h: f64) -> Vec<f64> {
        let f = |t: &DVector<f64>| -0.5 * self.deviance_at(t.as_slice());
        let g = optim::numeric_gradient(&f, &DVector::from_vec(self.theta.clone()), h);
        g.iter().copied().collect()
    }
}

fn build_problem(recipe: &MixedRecipe, formula: &ModelFormula, data: &JointDataset, method: Method) -> Result<Problem> {
    let _ = formula;
    let p = recipe.fixed.ncols();
    let q = recipe.random.ncols();
    let mut subjects = Vec::new();
    let mut owners = Vec::new();
    let mut n = 0;
    for (i, range) in data.visits.iter().enumerate() {
        if range.is_empty() {
            continue;
        }
        let ni = range.len();
        let mut x = DMatrix::zeros(ni, p);
        let mut z = DMatrix::zeros(ni, q);
        let mut y = DVector::zeros(ni);
        for (k, row) in range.clone().enumerate() {
            let look = |name: &str| data.value(row, name);
            let xr = recipe.fixed.row(&look)?;
            let zr = recipe.random.row(&look)?;
            for j in 0..p {
                x[(k, j)] = xr[j];
            }
            for j in 0..q {
                z[(k, j)] = zr[j];
            }
            y[k] = data.longitudinal[row].response;
        }
        let xt = x.transpose();
        let zt = z.transpose();
        subjects.push(SubjectStats {
            xtx: &xt * &x,
            xty: &xt * &y,
            yty: y.dot(&y),
            ztz: &zt * &z,
            ztx: &zt * &x,
            zty: &zt * &y,
        });
        owners.push(i);
        n += ni;
    }
    if subjects.is_empty() {
        return Err(Error::InvalidInput("no longitudinal observations".into()));
    }
    if n <= p {
        return Err(Error::RankDeficient { rank: n, columns: p });
    }
    // rank check on the pooled fixed-effects cross-product
    let mut xtx = DMatrix::zeros(p, p);
    for s in &subjects {
        xtx += &s.xtx;
    }
    let scale: Vec<f64> = (0..p).map(|j| xtx[(j, j)].sqrt().max(1e-300)).collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| xtx[(i, j)] / (scale[i] * scale[j]));
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.iter().copied().fold(0.0, f64::max);
    let rank = eig.iter().filter(|&&e| e > 1e-10 * max.max(1e-300)).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, columns: p });
    }
    Ok(Problem {
        p,
        q,
        n,
        subjects,
        owners,
        method,
    })
}

/// Fits the mixed model described by `formula` (fixed part plus optional
/// random part) to the longitudinal rows of `data`.
pub fn fit_lmm(formula: &ModelFormula, data: &JointDataset, method: Method) -> Result<LmmFit> {
    fit_lmm_with(formula, data, method, &BfgsOptions::default())
}

pub fn fit_lmm_with(
    formula: &ModelFormula,
    data: &JointDataset,
    method: Method,
    opts: &BfgsOptions,
) -> Result<LmmFit> {
    let recipe = MixedRecipe::new(formula, data)?;
    let problem = build_problem(&recipe, formula, data, method)?;
    let q = problem.q;

    let objective = |t: &DVector<f64>| problem.profile(t.as_slice()).map_or(f64::INFINITY, |p| p.deviance);
    let theta0 = DVector::from_vec(pack_l(&DMatrix::identity(q, q)));
    let res = optim::minimize(&objective, theta0, opts);
    let gradient_norm = res.gradient_norm() * 0.5;
    if !res.converged && res.iterations >= opts.max_iter {
        return Err(Error::NonConvergence {
            iterations: res.iterations,
            objective: res.value,
            gradient_norm,
            best: res.x.iter().copied().collect(),
        });
    }
    let theta: Vec<f64> = res.x.iter().copied().collect();
    let prof = problem
        .profile(&theta)
        .ok_or_else(|| Error::Numerical("likelihood not finite at the optimum".into()))?;

    let mut warnings = Vec::new();
    if !res.converged {
        warnings.push(format!(
            "optimizer stopped without meeting the convergence criterion (gradient norm {gradient_norm:.3e})"
        ));
    }
    let l = unpack_l(&theta, q);
    let mut d = &l * l.transpose() * prof.sigma2;
    if q > 0 {
        let eig = SymmetricEigen::new(d.clone());
        if eig.eigenvalues.iter().any(|&e| e < 1e-10) {
            warnings.push("random-effects covariance at the boundary; eigenvalues floored at 1e-10".into());
            let vals = eig.eigenvalues.map(|e| e.max(1e-10));
            d = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
            d = (&d + d.transpose()) * 0.5;
        }
    }

    let a_inv = prof
        .a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular information for fixed effects".into()))?;
    let beta_cov = &a_inv * prof.sigma2;

    // BLUPs: b_i = L M⁻¹ Lᵀ Zᵀ (y - Xβ), Var(b_i | y) = σ² L M⁻¹ Lᵀ
    let n_subj = data.n_subjects();
    let mut blups = vec![DVector::zeros(q); n_subj];
    let mut blup_cov = vec![d.clone(); n_subj];
    if q > 0 {
        let lt = l.transpose();
        for (s, &owner) in problem.subjects.iter().zip(&problem.owners) {
            let m = DMatrix::identity(q, q) + &lt * &s.ztz * &l;
            let chol = Cholesky::new(m).ok_or_else(|| Error::Numerical("BLUP system not PD".into()))?;
            let ztr = &s.zty - &s.ztx * &prof.beta;
            blups[owner] = &l * chol.solve(&(&lt * ztr));
            blup_cov[owner] = &l * chol.inverse() * &lt * prof.sigma2;
        }
    }

    let p = problem.p;
    let loglik = -0.5 * prof.deviance;
    Ok(LmmFit {
        formula: formula.clone(),
        beta_labels: recipe.fixed.labels(),
        random_labels: recipe.random.labels(),
        recipe,
        method,
        beta: prof.beta,
        beta_cov,
        d,
        sigma2: prof.sigma2,
        loglik,
        blups,
        blup_cov,
        subject_ids: data.survival.iter().map(|s| s.subject_id.clone()).collect(),
        n_obs: problem.n,
        n_subjects: problem.subjects.len(),
        df: p + q * (q + 1) / 2 + 1,
        converged: res.converged,
        gradient_norm,
        iterations: res.iterations,
        warnings,
        theta,
        problem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
}

pub fn information_criteria(fit: &LmmFit) -> InformationCriteria {
    criteria(fit.loglik, fit.df, fit.n_obs)
}

pub fn criteria(loglik: f64, df: usize, n_obs: usize) -> InformationCriteria {
    InformationCriteria {
        aic: -2.0 * loglik + 2.0 * df as f64,
        bic: -2.0 * loglik + df as f64 * (n_obs as f64).ln(),
    }
}

/// Strength of evidence carried by a BIC difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evidence {
    NotWorthMentioning,
    Positive,
    Strong,
    VeryStrong,
}

impl Evidence {
    pub fn label(self) -> &'static str {
        match self {
            Evidence::NotWorthMentioning => "not worth mentioning",
            Evidence::Positive => "positive",
            Evidence::Strong => "strong",
            Evidence::VeryStrong => "very strong",
        }
    }
}

/// Kass-Raftery category of an absolute BIC difference; boundaries belong to
/// the lower category.
pub fn kass_raftery_category(delta_bic: f64) -> Result<Evidence> {
    if delta_bic.is_nan() || delta_bic < 0.0 {
        return Err(Error::InvalidInput(format!(
            "BIC difference must be non-negative, got {delta_bic}"
        )));
    }
    Ok(if delta_bic <= 2.0 {
        Evidence::NotWorthMentioning
    } else if delta_bic <= 6.0 {
        Evidence::Positive
    } else if delta_bic <= 10.0 {
        Evidence::Strong
    } else {
        Evidence::VeryStrong
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub name: String,
    pub df: usize,
    pub bic: f64,
    pub best: bool,
}

/// BIC table in input order with the minimum flagged (first one on ties).
///
/// REML likelihoods of models with different fixed effects are not
/// comparable, so such a mix is rejected.
pub fn selection_table(fits: &[(&str, &LmmFit)]) -> Result<Vec<SelectionRow>> {
    if fits.is_empty() {
        return Err(Error::InvalidComparison("no models to compare".into()));
    }
    if fits.iter().any(|(_, f)| f.method == Method::Reml) {
        let first = &fits[0].1.formula.fixed;
        if fits.iter().any(|(_, f)| f.method != Method::Reml || &f.formula.fixed != first) {
            return Err(Error::InvalidComparison(
                "REML fits with different fixed effects must be re-estimated with ML".into(),
            ));
        }
    }
    let mut rows: Vec<SelectionRow> = fits
        .iter()
        .map(|(name, f)| SelectionRow {
            name: name.to_string(),
            df: f.df,
            bic: information_criteria(f).bic,
            best: false,
        })
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.bic < rows[best].bic {
            best = i;
        }
    }
    rows[best].best = true;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{join_datasets, LongitudinalRecord, SurvivalRecord};
    use crate::design::parse_formula;

    fn dataset(rows: &[(&str, f64, f64)]) -> JointDataset {
        let long = rows
            .iter()
            .map(|&(id, t, y)| LongitudinalRecord {
                subject_id: id.into(),
                time: t,
                response: y,
                covariates: Default::default(),
            })
            .collect();
        let mut ids: Vec<&str> = rows.iter().map(|r| r.0).collect();
        ids.dedup();
        let surv = ids
            .iter()
            .map(|id| SurvivalRecord {
                subject_id: id.to_string(),
                event_time: 100.0,
                event: false,
                covariates: Default::default(),
            })
            .collect();
        join_datasets(long, surv, "time").unwrap()
    }

    #[test]
    fn intercept_only_closed_forms() {
        let d = dataset(&[("a", 0.0, 1.0), ("b", 0.0, 2.0), ("c", 0.0, 3.0), ("d", 0.0, 4.0)]);
        let f = parse_formula("y ~ 1").unwrap();
        let ml = fit_lmm(&f, &d, Method::Ml).unwrap();
        assert!((ml.beta[0] - 2.5).abs() < 1e-12);
        assert!((ml.sigma2 - 1.25).abs() < 1e-12);
        let reml = fit_lmm(&f, &d, Method::Reml).unwrap();
        assert!((reml.sigma2 - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(ml.df, 2);
        // ML log-likelihood: -n/2 (log 2π σ² + 1)
        let expect = -2.0 * (LN_2PI + 1.25f64.ln() + 1.0);
        assert!((ml.loglik - expect).abs() < 1e-12);
    }

    #[test]
    fn bic_arithmetic() {
        let ic = criteria(-100.0, 3, 100);
        assert!((ic.bic - 213.815_510_557_964_3).abs() < 1e-9);
        assert!((ic.aic - 206.0).abs() < 1e-12);
    }

    #[test]
    fn kass_raftery() {
        assert_eq!(kass_raftery_category(1.5).unwrap(), Evidence::NotWorthMentioning);
        assert_eq!(kass_raftery_category(8.0).unwrap(), Evidence::Strong);
        assert_eq!(kass_raftery_category(12.0).unwrap(), Evidence::VeryStrong);
        assert_eq!(kass_raftery_category(2.0).unwrap(), Evidence::NotWorthMentioning);
        assert_eq!(kass_raftery_category(6.0).unwrap(), Evidence::Positive);
        assert_eq!(kass_raftery_category(10.0).unwrap(), Evidence::Strong);
        assert_eq!(kass_raftery_category(f64::INFINITY).unwrap(), Evidence::VeryStrong);
        assert!(kass_raftery_category(-0.1).is_err());
    }

    #[test]
    fn rank_deficient_design() {
        let d = dataset(&[("a", 1.0, 1.0), ("b", 1.0, 2.0), ("c", 1.0, 3.0)]);
        let f = parse_formula("y ~ time").unwrap();
        assert!(matches!(fit_lmm(&f, &d, Method::Ml), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn selection_rules() {
        let d = dataset(&[
            ("a", 0.0, 1.0),
            ("a", 1.0, 2.2),
            ("b", 0.0, 2.0),
            ("b", 1.0, 2.9),
            ("c", 0.0, 3.0),
            ("c", 1.0, 4.4),
        ]);
        let f1 = parse_formula("y ~ time").unwrap();
        let f0 = parse_formula("y ~ 1").unwrap();
        let a = fit_lmm(&f1, &d, Method::Ml).unwrap();
        let t = selection_table(&[("m1", &a), ("m1b", &a)]).unwrap();
        assert!(t[0].best && !t[1].best);
        assert_eq!(t[0].bic, t[1].bic);

        let r1 = fit_lmm(&f1, &d, Method::Reml).unwrap();
        let r0 = fit_lmm(&f0, &d, Method::Reml).unwrap();
        assert!(matches!(
            selection_table(&[("a", &r1), ("b", &r0)]),
            Err(Error::InvalidComparison(_))
        ));
        assert!(selection_table(&[("a", &r1), ("b", &r1)]).is_ok());
    }
}
