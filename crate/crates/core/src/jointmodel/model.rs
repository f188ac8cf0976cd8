use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::{rw2_penalty, Association, BaselineHazard, JointModelSpec, Params, BASELINE_BASIS};
use crate::data::JointDataset;
use crate::design::spline::quantile_sorted;
use crate::design::{BSplineBasis, SurvivalTable};
use crate::error::{Error, Result};
use crate::quadrature::Rule;
use crate::stats::LN_2PI;

/// Design rows of one subject at a set of time points.
#[derive(Debug, Clone)]
pub(crate) struct Rows {
    pub t: Vec<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub dx: DMatrix<f64>,
    pub dz: DMatrix<f64>,
    pub basis: DMatrix<f64>,
}

/// Precomputed per-subject data. Quadrature rows come first, the row at the
/// event time last.
#[derive(Debug, Clone)]
pub(crate) struct Subject {
    pub id: String,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub event_time: f64,
    pub event: bool,
    pub w: DVector<f64>,
    pub interaction: f64,
    pub weights: Vec<f64>,
    pub nodes: Rows,
    /// Non-time longitudinal covariates, constant within subject.
    constants: Vec<(String, f64)>,
}

impl Subject {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Index of the event-time row in `nodes`.
    pub fn last(&self) -> usize {
        self.weights.len()
    }
}

/// Fixed-effect contributions cached between updates.
#[derive(Debug, Clone)]
pub(crate) struct Cache {
    pub xb_visits: DVector<f64>,
    pub xb_nodes: DVector<f64>,
    pub dxb_nodes: DVector<f64>,
    pub lh0: DVector<f64>,
}

/// A joint model bound to its data.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub spec: JointModelSpec,
    pub(crate) subjects: Vec<Subject>,
    pub(crate) baseline: Option<BSplineBasis>,
    pub(crate) penalty: DMatrix<f64>,
    pub(crate) p: usize,
    pub(crate) q: usize,
    pub(crate) pw: usize,
    pub(crate) pa: usize,
    /// Fixed-effect columns that have a random counterpart, as (fixed, random).
    pub(crate) matched: Vec<(usize, usize)>,
    pub(crate) names: Vec<String>,
    slope_mask: (Vec<bool>, Vec<bool>),
}

impl JointModel {
    pub fn new(spec: JointModelSpec, data: &JointDataset) -> Result<Self> {
        let lmm = &spec.longitudinal;
        if data.time_name != spec.time_var {
            return Err(Error::InvalidInput(format!(
                "time variable `{}` does not match the dataset's `{}`",
                spec.time_var, data.time_name
            )));
        }
        let ids: Vec<&String> = data.survival.iter().map(|r| &r.subject_id).collect();
        if lmm.subject_ids.iter().collect::<Vec<_>>() != ids {
            return Err(Error::InvalidInput("longitudinal fit was built on different subjects".into()));
        }
        let recipe = &lmm.recipe;
        let p = recipe.fixed.ncols();
        let q = recipe.random.ncols();
        let time_var = spec.time_var.clone();

        let slope_mask = match &spec.association.variant {
            Association::CurrentValuePlusSlope(form) => {
                let mut f = vec![false; p];
                let mut r = vec![false; q];
                for &i in &form.fixed_indices {
                    f[i] = true;
                }
                for &i in &form.random_indices {
                    r[i] = true;
                }
                (f, r)
            }
            _ => (vec![false; p], vec![false; q]),
        };

        let (pw, w_matrix) = match &spec.survival {
            Some(cox) => {
                let m = cox.recipe.matrix(&SurvivalTable(&data.survival))?;
                (m.ncols(), Some(m.values))
            }
            None => (0, None),
        };

        let baseline = match &spec.survival {
            Some(_) => Some(baseline_basis(data)?),
            None => None,
        };

        let mut variables = recipe.fixed.variables();
        for v in recipe.random.variables() {
            if !variables.contains(&v) {
                variables.push(v);
            }
        }
        variables.retain(|v| *v != time_var);

        let mut subjects = Vec::with_capacity(data.n_subjects());
        for (i, rec) in data.survival.iter().enumerate() {
            let range = data.visits[i].clone();
            let mut constants = Vec::with_capacity(variables.len());
            for v in &variables {
                let mut value = None;
                for row in range.clone() {
                    let x = data.lookup(row, i, v).ok_or_else(|| Error::UnknownColumn(v.clone()))?;
                    match value {
                        None => value = Some(x),
                        Some(prev) if prev != x => {
                            return Err(Error::InvalidInput(format!(
                                "covariate `{v}` varies within subject `{}`; only `{time_var}` may change between visits",
                                rec.subject_id
                            )))
                        }
                        _ => {}
                    }
                }
                let value = match value {
                    Some(x) => x,
                    None => rec
                        .covariates
                        .get(v)
                        .map(|c| c.as_f64())
                        .ok_or_else(|| Error::UnknownColumn(v.clone()))?,
                };
                constants.push((v.clone(), value));
            }

            let n_i = range.len();
            let mut x = DMatrix::zeros(n_i, p);
            let mut z = DMatrix::zeros(n_i, q);
            let mut y = DVector::zeros(n_i);
            for (k, row) in range.clone().enumerate() {
                let look = |name: &str| data.lookup(row, i, name);
                x.row_mut(k).copy_from_slice(&recipe.fixed.row(&look)?);
                z.row_mut(k).copy_from_slice(&recipe.random.row(&look)?);
                y[k] = data.longitudinal[row].response;
            }

            let interaction = match &spec.association.transform {
                Some(t) => rec
                    .covariates
                    .get(&t.interacting_covariate)
                    .map(|c| c.as_f64())
                    .ok_or_else(|| Error::UnknownColumn(t.interacting_covariate.clone()))?,
                None => 0.0,
            };
            let w = match &w_matrix {
                Some(m) => m.row(i).transpose(),
                None => DVector::zeros(0),
            };
            subjects.push(Subject {
                id: rec.subject_id.clone(),
                x,
                z,
                y,
                event_time: rec.event_time,
                event: rec.event,
                w,
                interaction,
                weights: vec![],
                nodes: Rows {
                    t: vec![],
                    x: DMatrix::zeros(0, p),
                    z: DMatrix::zeros(0, q),
                    dx: DMatrix::zeros(0, p),
                    dz: DMatrix::zeros(0, q),
                    basis: DMatrix::zeros(0, 0),
                },
                constants,
            });
        }

        let fixed_labels = recipe.fixed.labels();
        let random_labels = recipe.random.labels();
        let matched = random_labels
            .iter()
            .enumerate()
            .filter_map(|(r, l)| fixed_labels.iter().position(|f| f == l).map(|f| (f, r)))
            .collect();
        let pa = spec.association.labels(&random_labels).len() * usize::from(spec.survival.is_some());
        let nb = baseline.as_ref().map_or(0, BSplineBasis::n_basis);

        let mut model = Self {
            penalty: rw2_penalty(nb),
            subjects,
            baseline,
            p,
            q,
            pw,
            pa,
            matched,
            names: vec![],
            slope_mask,
            spec,
        };
        model.names = model.parameter_names();
        if model.spec.survival.is_some() {
            let segments = model.spec.quadrature_segments.max(1);
            for i in 0..model.subjects.len() {
                let rule = Rule::new(0.0, model.subjects[i].event_time, segments);
                let mut times = rule.nodes.clone();
                times.push(model.subjects[i].event_time);
                let rows = model.rows(i, &times)?;
                let s = &mut model.subjects[i];
                s.weights = rule.weights;
                s.nodes = rows;
            }
        }
        Ok(model)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_obs(&self) -> usize {
        self.subjects.iter().map(Subject::n_obs).sum()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn has_survival(&self) -> bool {
        self.spec.survival.is_some()
    }

    pub fn n_random(&self) -> usize {
        self.q
    }

    /// Names of the global parameters in chain order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn parameter_names(&self) -> Vec<String> {
        let lmm = &self.spec.longitudinal;
        let mut names: Vec<String> = lmm.beta_labels.iter().map(|l| format!("Y:{l}")).collect();
        names.push("sigma2".into());
        for j in 0..self.q {
            for i in j..self.q {
                names.push(format!("D[{}, {}]", i + 1, j + 1));
            }
        }
        if let Some(cox) = &self.spec.survival {
            names.extend(cox.labels.iter().map(|l| format!("T:{l}")));
            names.extend(self.spec.association.labels(&lmm.random_labels));
            names.extend((1..=self.n_basis()).map(|k| format!("Bs.gammas{k}")));
            names.push("tauBs".into());
        }
        names
    }

    pub(crate) fn n_basis(&self) -> usize {
        self.baseline.as_ref().map_or(0, BSplineBasis::n_basis)
    }

    /// Flattens the global parameters in the order of [`Self::names`].
    pub fn pack(&self, params: &Params) -> Vec<f64> {
        let mut v: Vec<f64> = params.beta.iter().copied().collect();
        v.push(params.sigma2);
        for j in 0..self.q {
            for i in j..self.q {
                v.push(params.d[(i, j)]);
            }
        }
        if self.has_survival() {
            v.extend(params.gamma.iter());
            v.extend(params.alpha.iter());
            v.extend(params.phi.iter());
            v.push(params.tau);
        }
        v
    }

    /// Inverse of [`Self::pack`]; random effects are taken from `b`.
    pub fn unpack(&self, v: &[f64], b: Vec<DVector<f64>>) -> Params {
        let mut k = 0;
        let mut take = |n: usize| {
            let s = DVector::from_column_slice(&v[k..k + n]);
            k += n;
            s
        };
        let beta = take(self.p);
        let sigma2 = take(1)[0];
        let lower = take(self.q * (self.q + 1) / 2);
        let mut d = DMatrix::zeros(self.q, self.q);
        let mut m = 0;
        for j in 0..self.q {
            for i in j..self.q {
                d[(i, j)] = lower[m];
                d[(j, i)] = lower[m];
                m += 1;
            }
        }
        let (gamma, alpha, phi, tau) = if self.has_survival() {
            (take(self.pw), take(self.pa), take(self.n_basis()), take(1)[0])
        } else {
            (DVector::zeros(0), DVector::zeros(0), DVector::zeros(0), 1.0)
        };
        Params {
            beta,
            sigma2,
            d,
            b,
            gamma,
            alpha,
            phi,
            tau,
        }
    }

    /// Design rows of subject `i` at arbitrary times.
    pub(crate) fn rows(&self, i: usize, times: &[f64]) -> Result<Rows> {
        let recipe = &self.spec.longitudinal.recipe;
        let s = &self.subjects[i];
        let time_var = &self.spec.time_var;
        let n = times.len();
        let nb = self.n_basis();
        let mut rows = Rows {
            t: times.to_vec(),
            x: DMatrix::zeros(n, self.p),
            z: DMatrix::zeros(n, self.q),
            dx: DMatrix::zeros(n, self.p),
            dz: DMatrix::zeros(n, self.q),
            basis: DMatrix::zeros(n, nb),
        };
        let slope = matches!(self.spec.association.variant, Association::CurrentValuePlusSlope(_));
        for (k, &t) in times.iter().enumerate() {
            let look = |name: &str| {
                if name == time_var {
                    Some(t)
                } else {
                    s.constants.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
                }
            };
            rows.x.row_mut(k).copy_from_slice(&recipe.fixed.row(&look)?);
            rows.z.row_mut(k).copy_from_slice(&recipe.random.row(&look)?);
            if slope {
                let dx = recipe.fixed.derivative_row(time_var, &look)?;
                let dz = recipe.random.derivative_row(time_var, &look)?;
                for j in 0..self.p {
                    rows.dx[(k, j)] = if self.slope_mask.0[j] { dx[j] } else { 0.0 };
                }
                for j in 0..self.q {
                    rows.dz[(k, j)] = if self.slope_mask.1[j] { dz[j] } else { 0.0 };
                }
            }
            if let Some(basis) = &self.baseline {
                rows.basis.row_mut(k).copy_from_slice(&basis.eval(t));
            }
        }
        Ok(rows)
    }

    pub(crate) fn cache(&self, i: usize, beta: &DVector<f64>, phi: &DVector<f64>) -> Cache {
        let s = &self.subjects[i];
        let with_nodes = self.has_survival();
        Cache {
            xb_visits: &s.x * beta,
            xb_nodes: if with_nodes { &s.nodes.x * beta } else { DVector::zeros(0) },
            dxb_nodes: if with_nodes && self.is_slope() {
                &s.nodes.dx * beta
            } else {
                DVector::zeros(0)
            },
            lh0: if with_nodes { &s.nodes.basis * phi } else { DVector::zeros(0) },
        }
    }

    pub(crate) fn is_slope(&self) -> bool {
        matches!(self.spec.association.variant, Association::CurrentValuePlusSlope(_))
    }

    /// Residual sum of squares of subject `i` given its random effects.
    pub(crate) fn ssr(&self, i: usize, cache: &Cache, b: &DVector<f64>) -> f64 {
        let s = &self.subjects[i];
        let mut r = &s.y - &cache.xb_visits;
        if self.q > 0 {
            r -= &s.z * b;
        }
        r.norm_squared()
    }

    /// Association columns of subject `i` at node `k`.
    pub(crate) fn assoc_columns(&self, i: usize, k: usize, cache: &Cache, b: &DVector<f64>, out: &mut Vec<f64>) {
        let s = &self.subjects[i];
        out.clear();
        if let Association::SharedRandomEffects = self.spec.association.variant {
            out.extend(b.iter());
            return;
        }
        let mut mu = cache.xb_nodes[k];
        for j in 0..self.q {
            mu += s.nodes.z[(k, j)] * b[j];
        }
        out.push(mu);
        if self.spec.association.transform.is_some() {
            out.push(mu * s.interaction);
        }
        if self.is_slope() {
            let mut dmu = cache.dxb_nodes[k];
            for j in 0..self.q {
                dmu += s.nodes.dz[(k, j)] * b[j];
            }
            out.push(dmu);
        }
    }

    /// Association term `α'a(t)` at every node of subject `i`.
    fn assoc_terms(&self, i: usize, cache: &Cache, b: &DVector<f64>, alpha: &DVector<f64>) -> Vec<f64> {
        let s = &self.subjects[i];
        let n = s.nodes.t.len();
        match self.spec.association.variant {
            Association::SharedRandomEffects => vec![alpha.dot(b); n],
            _ => {
                let a0 = alpha[0];
                let a_tr = if self.spec.association.transform.is_some() { alpha[1] * s.interaction } else { 0.0 };
                let mut zb = vec![0.0; n];
                if self.q > 0 {
                    let v = &s.nodes.z * b;
                    zb.copy_from_slice(v.as_slice());
                }
                let mut out: Vec<f64> = (0..n).map(|k| (a0 + a_tr) * (cache.xb_nodes[k] + zb[k])).collect();
                if self.is_slope() {
                    let a_e = alpha[alpha.len() - 1];
                    let dzb = if self.q > 0 { &s.nodes.dz * b } else { DVector::zeros(n) };
                    for k in 0..n {
                        out[k] += a_e * (cache.dxb_nodes[k] + dzb[k]);
                    }
                }
                out
            }
        }
    }

    /// Survival log-likelihood `δ log h(T) - H(T)` of subject `i`; `shift` is
    /// added to the log baseline at every node.
    pub(crate) fn surv_ll(
        &self,
        i: usize,
        cache: &Cache,
        b: &DVector<f64>,
        gamma: &DVector<f64>,
        alpha: &DVector<f64>,
        shift: f64,
    ) -> Result<f64> {
        let s = &self.subjects[i];
        let eta_w = s.w.dot(gamma) + shift;
        let assoc = self.assoc_terms(i, cache, b, alpha);
        let mut h = 0.0;
        for (k, w) in s.weights.iter().enumerate() {
            let lp = cache.lh0[k] + eta_w + assoc[k];
            h += w * lp.exp();
        }
        let last = s.last();
        let lp_t = cache.lh0[last] + eta_w + assoc[last];
        let ll = if s.event { lp_t - h } else { -h };
        if !ll.is_finite() {
            let (k, lp) = (0..=last)
                .map(|k| (k, cache.lh0[k] + eta_w + assoc[k]))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || b.1.is_nan() { b } else { a });
            return Err(Error::QuadratureOverflow {
                t: s.nodes.t[k],
                linear_predictor: lp,
            });
        }
        Ok(ll)
    }

    pub(crate) fn long_ll_from_ssr(&self, i: usize, ssr: f64, sigma2: f64) -> f64 {
        let n = self.subjects[i].n_obs() as f64;
        -0.5 * n * (LN_2PI + sigma2.ln()) - 0.5 * ssr / sigma2
    }

    /// Per-subject (longitudinal, survival) log-likelihoods conditional on
    /// the random effects in `params`.
    pub fn subject_logliks(&self, params: &Params) -> Result<Vec<(f64, f64)>> {
        self.check(params)?;
        (0..self.subjects.len())
            .map(|i| {
                let c = self.cache(i, &params.beta, &params.phi);
                let b = &params.b[i];
                let long = self.long_ll_from_ssr(i, self.ssr(i, &c, b), params.sigma2);
                let surv = if self.has_survival() {
                    self.surv_ll(i, &c, b, &params.gamma, &params.alpha, 0.0)?
                } else {
                    0.0
                };
                Ok((long, surv))
            })
            .collect()
    }

    fn check(&self, params: &Params) -> Result<()> {
        let ok = params.beta.len() == self.p
            && params.b.len() == self.subjects.len()
            && params.b.iter().all(|b| b.len() == self.q)
            && params.d.nrows() == self.q
            && (!self.has_survival()
                || (params.gamma.len() == self.pw && params.alpha.len() == self.pa && params.phi.len() == self.n_basis()));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("parameter dimensions do not match the model".into()))
        }
    }

    /// Σ_i Σ_j log N(y_ij; x_ij'β + z_ij'b_i, σ²).
    pub fn log_likelihood_longitudinal(&self, params: &Params) -> Result<f64> {
        let ll: f64 = self.subject_logliks(params)?.iter().map(|(l, _)| l).sum();
        if !ll.is_finite() {
            let bad = self
                .subject_logliks(params)?
                .iter()
                .position(|(l, _)| !l.is_finite())
                .map_or(String::new(), |i| self.subjects[i].id.clone());
            return Err(Error::NonFinite(format!("longitudinal log-likelihood of subject `{bad}`")));
        }
        Ok(ll)
    }

    /// Log hazard of subject `i` at time `t`.
    pub fn log_hazard(&self, i: usize, t: f64, params: &Params) -> Result<f64> {
        if !self.has_survival() {
            return Err(Error::InvalidInput("model has no survival part".into()));
        }
        let rows = self.rows(i, &[t])?;
        let mut s = self.subjects[i].clone();
        s.nodes = rows;
        s.weights = vec![];
        let c = Cache {
            xb_visits: DVector::zeros(0),
            xb_nodes: &s.nodes.x * &params.beta,
            dxb_nodes: &s.nodes.dx * &params.beta,
            lh0: &s.nodes.basis * &params.phi,
        };
        let b = &params.b[i];
        let mut mu = c.xb_nodes[0];
        let mut dmu = c.dxb_nodes[0];
        for j in 0..self.q {
            mu += s.nodes.z[(0, j)] * b[j];
            dmu += s.nodes.dz[(0, j)] * b[j];
        }
        let a = &params.alpha;
        let assoc = match self.spec.association.variant {
            Association::SharedRandomEffects => a.dot(b),
            _ => {
                let mut v = a[0] * mu;
                if self.spec.association.transform.is_some() {
                    v += a[1] * mu * s.interaction;
                }
                if self.is_slope() {
                    v += a[a.len() - 1] * dmu;
                }
                v
            }
        };
        Ok(c.lh0[0] + s.w.dot(&params.gamma) + assoc)
    }

    pub fn hazard(&self, i: usize, t: f64, params: &Params) -> Result<f64> {
        Ok(self.log_hazard(i, t, params)?.exp())
    }

    /// Cumulative hazard on `[0, t]` by composite Gauss-Kronrod quadrature.
    pub fn cumulative_hazard(&self, i: usize, t: f64, params: &Params) -> Result<f64> {
        let rule = Rule::new(0.0, t, self.spec.quadrature_segments.max(1));
        let mut total = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let lp = self.log_hazard(i, *x, params)?;
            let h = lp.exp();
            if !h.is_finite() {
                return Err(Error::QuadratureOverflow { t: *x, linear_predictor: lp });
            }
            total += w * h;
        }
        Ok(total)
    }

    /// Log prior density of everything except the random effects.
    pub fn log_prior(&self, params: &Params) -> f64 {
        let pr = &self.spec.priors;
        let v = pr.coef_variance;
        let normal = |x: &DVector<f64>| -> f64 { x.iter().map(|c| -0.5 * (LN_2PI + v.ln()) - 0.5 * c * c / v).sum() };
        let (a, s) = (pr.sigma2_shape, pr.sigma2_scale);
        let mut lp = normal(&params.beta)
            + a * s.ln() - ln_gamma(a) - (a + 1.0) * params.sigma2.ln() - s / params.sigma2;
        if self.q > 0 {
            lp += inverse_wishart_logpdf(&params.d, self.d_df(), &DMatrix::identity(self.q, self.q));
        }
        if self.has_survival() {
            lp += normal(&params.gamma) + normal(&params.alpha);
            let rank = self.n_basis().saturating_sub(2) as f64;
            let quad = (params.phi.transpose() * &self.penalty * &params.phi)[(0, 0)];
            lp += 0.5 * rank * (params.tau.ln() - LN_2PI) - 0.5 * params.tau * quad;
            let (ta, tb) = (pr.tau_shape, pr.tau_rate);
            lp += ta * tb.ln() - ln_gamma(ta) + (ta - 1.0) * params.tau.ln() - tb * params.tau;
        }
        lp
    }

    pub(crate) fn d_df(&self) -> f64 {
        self.spec.priors.d_df.unwrap_or(self.q as f64 + 1.0)
    }

    /// Log of the unnormalized joint posterior density.
    pub fn log_posterior(&self, params: &Params) -> Result<f64> {
        let ll: f64 = self.subject_logliks(params)?.iter().map(|(a, b)| a + b).sum();
        let mut lp = ll + self.log_prior(params);
        if self.q > 0 {
            let chol = params
                .d
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Numerical("random-effects covariance not positive definite".into()))?;
            let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            for b in &params.b {
                let quad = b.dot(&chol.solve(b));
                lp += -0.5 * (self.q as f64 * LN_2PI + logdet + quad);
            }
        }
        if !lp.is_finite() {
            return Err(Error::NonFinite("log posterior".into()));
        }
        Ok(lp)
    }

    /// Starting values from the submodel fits: LMM estimates and BLUPs, Cox
    /// coefficients, zero association, and a spline fitted to the log of
    /// Breslow hazard increments.
    pub fn initial_params(&self) -> Result<Params> {
        let lmm = &self.spec.longitudinal;
        let (gamma, alpha, phi, tau) = match &self.spec.survival {
            Some(cox) => {
                let phi = self.initial_baseline(cox)?;
                let quad = (phi.transpose() * &self.penalty * &phi)[(0, 0)];
                let rank = self.n_basis().saturating_sub(2) as f64;
                let tau = (self.spec.priors.tau_shape + 0.5 * rank) / (self.spec.priors.tau_rate + 0.5 * quad);
                (cox.gamma.clone(), DVector::zeros(self.pa), phi, tau)
            }
            None => (DVector::zeros(0), DVector::zeros(0), DVector::zeros(0), 1.0),
        };
        Ok(Params {
            beta: lmm.beta.clone(),
            sigma2: lmm.sigma2,
            d: lmm.d.clone(),
            b: lmm.blups.clone(),
            gamma,
            alpha,
            phi,
            tau,
        })
    }

    fn initial_baseline(&self, cox: &crate::survival::CoxFit) -> Result<DVector<f64>> {
        let basis = self.baseline.as_ref().expect("survival model has a baseline");
        let hi = basis.upper();
        let mut events: Vec<f64> = self.subjects.iter().filter(|s| s.event).map(|s| s.event_time).collect();
        events.sort_by(f64::total_cmp);
        let mut edges = vec![0.0];
        for k in 1..10 {
            let e = quantile_sorted(&events, k as f64 / 10.0);
            if e > *edges.last().unwrap() + 1e-8 * hi {
                edges.push(e);
            }
        }
        if hi > *edges.last().unwrap() {
            edges.push(hi);
        }
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        let mut floor = f64::INFINITY;
        for w in edges.windows(2) {
            let rate = (cox.cumulative_baseline(w[1]) - cox.cumulative_baseline(w[0])) / (w[1] - w[0]);
            if rate > 0.0 {
                floor = floor.min(rate);
            }
            pts.push(0.5 * (w[0] + w[1]));
            vals.push(rate);
        }
        if !floor.is_finite() {
            return Err(Error::NoEvents);
        }
        let nb = basis.n_basis();
        let mut lhs = &self.penalty * 0.1 + DMatrix::identity(nb, nb) * 1e-6;
        let mut rhs = DVector::zeros(nb);
        for (t, r) in pts.iter().zip(&vals) {
            let bt = DVector::from_vec(basis.eval(*t));
            let target = r.max(0.5 * floor).ln();
            lhs += &bt * bt.transpose();
            rhs += &bt * target;
        }
        lhs.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Numerical("baseline initialization failed".into()))
    }

    /// The baseline hazard at given coefficients.
    pub fn baseline_hazard(&self, params: &Params) -> Option<BaselineHazard> {
        self.baseline.as_ref().map(|basis| BaselineHazard {
            basis: basis.clone(),
            coefficients: params.phi.iter().copied().collect(),
            tau: params.tau,
        })
    }
}

/// Cubic B-spline basis for the log baseline on `[0, max T]` with interior
/// knots at equally spaced quantiles of the observed event times.
fn baseline_basis(data: &JointDataset) -> Result<BSplineBasis> {
    let hi = data.survival.iter().map(|r| r.event_time).fold(0.0, f64::max);
    let mut events: Vec<f64> = data.survival.iter().filter(|r| r.event).map(|r| r.event_time).collect();
    if events.is_empty() {
        return Err(Error::NoEvents);
    }
    events.sort_by(f64::total_cmp);
    let n_interior = BASELINE_BASIS - 4;
    let mut interior: Vec<f64> = (1..=n_interior)
        .map(|k| quantile_sorted(&events, k as f64 / (n_interior + 1) as f64))
        .collect();
    // keep knots strictly inside and distinct; fall back to even spacing
    let ok = interior.windows(2).all(|w| w[1] > w[0]) && interior[0] > 0.0 && interior[n_interior - 1] < hi;
    if !ok {
        interior = (1..=n_interior).map(|k| hi * k as f64 / (n_interior + 1) as f64).collect();
    }
    BSplineBasis::new(&interior, 0.0, hi, 3)
}

pub(crate) fn inverse_wishart_logpdf(x: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> f64 {
    let q = x.nrows() as f64;
    let Some(chol) = x.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let logdet_x = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let logdet_s = scale.determinant().ln();
    let trace = (scale * chol.inverse()).trace();
    let mut lgamma_q = q * (q - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 0..x.nrows() {
        lgamma_q += ln_gamma((df - j as f64) / 2.0);
    }
    0.5 * df * logdet_s - 0.5 * df * q * std::f64::consts::LN_2 - lgamma_q - 0.5 * (df + q + 1.0) * logdet_x - 0.5 * trace
}
