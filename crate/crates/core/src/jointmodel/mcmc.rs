use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Cache, JointModel};
use super::{McmcConfig, Params};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, StreamRng};

/// Thinned posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChains {
    pub names: Vec<String>,
    /// One row per retained draw, columns as in `names`.
    pub draws: Vec<Vec<f64>>,
    /// Per retained draw, the random effects of all subjects flattened
    /// subject-major (empty when the model has none).
    pub random_effects: Vec<Vec<f64>>,
    pub n_subjects: usize,
    pub q: usize,
    /// Post-adaptation acceptance rate per Metropolis block.
    pub acceptance: Vec<(String, f64)>,
    pub config: McmcConfig,
    pub warnings: Vec<String>,
}

impl PosteriorChains {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|j| self.column_at(j))
    }

    pub fn column_at(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn random_effects_at(&self, k: usize) -> Vec<DVector<f64>> {
        (0..self.n_subjects)
            .map(|i| {
                if self.q == 0 {
                    DVector::zeros(0)
                } else {
                    DVector::from_column_slice(&self.random_effects[k][i * self.q..(i + 1) * self.q])
                }
            })
            .collect()
    }

    /// Posterior means of the global parameters.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        (0..self.names.len())
            .map(|j| self.draws.iter().map(|d| d[j]).sum::<f64>() / n)
            .collect()
    }

    /// Posterior means of each subject's random effects.
    pub fn mean_random_effects(&self) -> Vec<DVector<f64>> {
        let mut out = vec![DVector::zeros(self.q); self.n_subjects];
        if self.q == 0 || self.random_effects.is_empty() {
            return out;
        }
        let n = self.random_effects.len() as f64;
        for draw in &self.random_effects {
            for (i, b) in out.iter_mut().enumerate() {
                for j in 0..self.q {
                    b[j] += draw[i * self.q + j] / n;
                }
            }
        }
        out
    }

    /// Chains as CSV: `iteration` (1-based retained index) then one column
    /// per parameter.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration");
        for n in &self.names {
            s.push(',');
            s.push_str(&csv_field(n));
        }
        s.push('\n');
        for (k, d) in self.draws.iter().enumerate() {
            s += &(k + 1).to_string();
            for v in d {
                s.push(',');
                s += &crate::data::format_real(*v);
            }
            s.push('\n');
        }
        s
    }

    /// Reads chains written by [`Self::to_csv`]; random effects and
    /// configuration are not part of that format.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("iteration") {
            return Err(Error::Schema("chains file must start with an `iteration` column".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut draws = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let d = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        row: row + 1,
                        message: format!("`{v}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if d.len() != names.len() {
                return Err(Error::Parse {
                    row: row + 1,
                    message: "wrong number of fields".into(),
                });
            }
            draws.push(d);
        }
        Ok(Self {
            names,
            draws,
            random_effects: vec![],
            n_subjects: 0,
            q: 0,
            acceptance: vec![],
            config: McmcConfig::default(),
            warnings: vec![],
        })
    }
}

impl PosteriorChains {
    /// Random-effect draws as CSV: `iteration` then `b[i,j]` for subject `i`
    /// and effect `j` (both 1-based), subject-major.
    pub fn random_effects_to_csv(&self) -> String {
        let mut s = String::from("iteration");
        for i in 1..=self.n_subjects {
            for j in 1..=self.q {
                s += &format!(",\"b[{i},{j}]\"");
            }
        }
        s.push('\n');
        for (k, d) in self.random_effects.iter().enumerate() {
            s += &(k + 1).to_string();
            for v in d {
                s.push(',');
                s += &crate::data::format_real(*v);
            }
            s.push('\n');
        }
        s
    }

    /// Attaches random-effect draws written by [`Self::random_effects_to_csv`].
    pub fn read_random_effects<R: std::io::Read>(&mut self, reader: R, n_subjects: usize, q: usize) -> Result<()> {
        let other = Self::from_csv(reader)?;
        if other.names.len() != n_subjects * q {
            return Err(Error::Schema(format!(
                "random-effects file has {} columns, expected {} subjects x {q}",
                other.names.len(),
                n_subjects
            )));
        }
        if other.draws.len() != self.draws.len() {
            return Err(Error::Schema(format!(
                "random-effects file has {} draws, chains have {}",
                other.draws.len(),
                self.draws.len()
            )));
        }
        self.random_effects = other.draws;
        self.n_subjects = n_subjects;
        self.q = q;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn target_rate(dim: usize) -> f64 {
    if dim == 1 {
        0.44
    } else {
        0.25
    }
}

fn rm_step(it: usize) -> f64 {
    (it as f64 + 1.0).powf(-0.6)
}

fn standard_normal(rng: &mut StreamRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Lower Cholesky factor, adding jitter until positive definite.
fn robust_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let scale = (sym.trace() / n.max(1) as f64).abs().max(1e-12);
    let mut jitter = 0.0;
    loop {
        if let Some(c) = (&sym + DMatrix::identity(n, n) * jitter).cholesky() {
            return c.l();
        }
        jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 10.0 };
    }
}

/// Random-walk Metropolis block with Robbins-Monro scale and empirical
/// covariance adaptation.
struct Block {
    dim: usize,
    chol: DMatrix<f64>,
    log_scale: f64,
    accepted: usize,
    proposed: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    n_hist: usize,
    reshaped: bool,
}

impl Block {
    fn new(cov: DMatrix<f64>) -> Self {
        let dim = cov.nrows();
        Self {
            dim,
            chol: robust_cholesky(&cov),
            log_scale: 0.0,
            accepted: 0,
            proposed: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            n_hist: 0,
            reshaped: false,
        }
    }

    /// Block proposal covariance from a precision matrix.
    fn from_precision(prec: &DMatrix<f64>) -> Self {
        let dim = prec.nrows();
        let inv = prec
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(dim, dim) * 0.01);
        Self::new(inv * (2.38 * 2.38 / dim as f64))
    }

    fn propose(&self, rng: &mut StreamRng) -> DVector<f64> {
        &self.chol * standard_normal(rng, self.dim) * self.log_scale.exp()
    }

    fn record(&mut self, accepted: bool, it: usize, config: &McmcConfig, value: &DVector<f64>) {
        if it >= config.adapt {
            self.proposed += 1;
            self.accepted += usize::from(accepted);
            return;
        }
        let a = if accepted { 1.0 } else { 0.0 };
        self.log_scale += (a - target_rate(self.dim)) * rm_step(it);
        if it >= config.adapt / 4 {
            self.n_hist += 1;
            let delta = value - &self.mean;
            self.mean += &delta / self.n_hist as f64;
            self.m2 += &delta * (value - &self.mean).transpose();
            if self.n_hist >= 20 * self.dim + 50 && (it + 1) % 100 == 0 {
                let cov = &self.m2 / (self.n_hist - 1) as f64 * (2.38 * 2.38 / self.dim as f64);
                if cov.diagonal().iter().all(|v| *v > 0.0) {
                    self.chol = robust_cholesky(&cov);
                    if !self.reshaped {
                        self.log_scale = 0.0;
                        self.reshaped = true;
                    }
                }
            }
        }
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

struct SubjectState {
    b: DVector<f64>,
    cache: Cache,
    ssr: f64,
    surv: f64,
    chol: DMatrix<f64>,
    log_scale: f64,
    accepted: usize,
}

/// Draws `X ~ IW(df, scale)` via the Bartlett decomposition of its inverse.
fn inverse_wishart(rng: &mut StreamRng, df: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = scale.nrows();
    let s_inv = scale
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("inverse-Wishart scale is singular".into()))?;
    let l = robust_cholesky(&s_inv);
    let mut a = DMatrix::zeros(q, q);
    for i in 0..q {
        let chi = ChiSquared::new(df - i as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = &l * a;
    let w = &la * la.transpose();
    let d = w
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Wishart draw is singular".into()))?;
    Ok((&d + d.transpose()) * 0.5)
}

fn gamma_draw(rng: &mut StreamRng, shape: f64, rate: f64) -> Result<f64> {
    Ok(Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .sample(rng))
}

impl JointModel {
    /// Runs the Metropolis-within-Gibbs sampler from [`Self::initial_params`].
    pub fn run_mcmc(&self, config: &McmcConfig) -> Result<PosteriorChains> {
        config.validate()?;
        match config.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .install(|| self.sample(config)),
            None => self.sample(config),
        }
    }

    fn sample(&self, config: &McmcConfig) -> Result<PosteriorChains> {
        let init = self.initial_params()?;
        self.log_posterior(&init)?;
        let n = self.n_subjects();
        let (p, q) = (self.p, self.q);
        let surv_on = self.has_survival();
        let priors = &self.spec.priors;
        let v = priors.coef_variance;
        let lmm = &self.spec.longitudinal;

        let mut beta = init.beta.clone();
        let mut sigma2 = init.sigma2;
        let mut d = init.d.clone();
        let mut gamma = init.gamma.clone();
        let mut alpha = init.alpha.clone();
        let mut phi = init.phi.clone();
        let mut tau = init.tau;

        let mut states: Vec<SubjectState> = (0..n)
            .map(|i| {
                let cache = self.cache(i, &beta, &phi);
                let b = init.b[i].clone();
                let ssr = self.ssr(i, &cache, &b);
                let surv = if surv_on {
                    self.surv_ll(i, &cache, &b, &gamma, &alpha, 0.0)?
                } else {
                    0.0
                };
                let shape = if q > 0 { robust_cholesky(&lmm.blup_cov[i]) } else { DMatrix::zeros(0, 0) };
                Ok(SubjectState {
                    b,
                    cache,
                    ssr,
                    surv,
                    chol: shape,
                    log_scale: (2.38 / (q.max(1) as f64).sqrt()).ln(),
                    accepted: 0,
                })
            })
            .collect::<Result<_>>()?;

        // proposal shapes from the curvature at the starting point
        let mut xtx = DMatrix::identity(p, p) / v;
        for s in &self.subjects {
            xtx += s.x.transpose() * &s.x / sigma2;
        }
        let mut beta_block = Block::from_precision(&xtx);

        let pwa = self.pw + self.pa;
        let mut surv_block = None;
        let mut phi_block = None;
        let mut shear = DVector::zeros(pwa);
        if surv_on {
            let nb = self.n_basis();
            let mut total = 0.0;
            let mut first = DVector::zeros(pwa);
            let mut second = DMatrix::zeros(pwa, pwa);
            let mut phi_info = &self.penalty * tau + DMatrix::identity(nb, nb) * 1e-6;
            let mut cols = Vec::new();
            for (i, st) in states.iter().enumerate() {
                let s = &self.subjects[i];
                let eta_w = s.w.dot(&gamma);
                for (k, w) in s.weights.iter().enumerate() {
                    self.assoc_columns(i, k, &st.cache, &st.b, &mut cols);
                    let a = DVector::from_iterator(pwa, s.w.iter().copied().chain(cols.iter().copied()));
                    let h = (st.cache.lh0[k] + eta_w + alpha.dot(&DVector::from_column_slice(&cols))).exp() * w;
                    total += h;
                    first += &a * h;
                    second += &a * a.transpose() * h;
                    let bk = s.nodes.basis.row(k).transpose();
                    phi_info += &bk * bk.transpose() * h;
                }
            }
            if pwa > 0 {
                shear = &first / total;
                let info = &second / 1.0 - &shear * shear.transpose() * total + DMatrix::identity(pwa, pwa) / v;
                surv_block = Some(Block::from_precision(&info));
            }
            phi_block = Some(Block::from_precision(&phi_info));
        }

        let seed = config.seed;
        let mut rng = stream(seed, Purpose::Global, 0, 0);
        let n_obs = self.n_obs() as f64;
        let d_df = self.d_df();
        let rank = self.n_basis().saturating_sub(2) as f64;
        let mut draws = Vec::with_capacity(config.n_draws());
        let mut b_draws = Vec::with_capacity(if q > 0 { config.n_draws() } else { 0 });
        let mut b_proposed = 0usize;
        let shared = matches!(self.spec.association.variant, super::Association::SharedRandomEffects);

        for it in 0..config.n_iter {
            let adapting = it < config.adapt;

            // random effects, one Metropolis step per subject
            if q > 0 {
                let d_inv = d
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("random-effects covariance lost positive definiteness".into()))?
                    .inverse();
                let target = target_rate(q);
                let step = rm_step(it);
                let (gamma, alpha) = (&gamma, &alpha);
                states.par_iter_mut().enumerate().for_each(|(i, st)| {
                    let mut r = stream(seed, Purpose::Subject, i as u64, it as u64);
                    let z = standard_normal(&mut r, q);
                    let prop = &st.b + &st.chol * z * st.log_scale.exp();
                    let ssr = self.ssr(i, &st.cache, &prop);
                    let surv = if surv_on {
                        self.surv_ll(i, &st.cache, &prop, gamma, alpha, 0.0).unwrap_or(f64::NEG_INFINITY)
                    } else {
                        0.0
                    };
                    let log_ratio = -0.5 * (ssr - st.ssr) / sigma2 + (surv - st.surv)
                        - 0.5 * (prop.dot(&(&d_inv * &prop)) - st.b.dot(&(&d_inv * &st.b)));
                    let u: f64 = r.random();
                    let accept = log_ratio.is_finite() && u.ln() < log_ratio;
                    if accept {
                        st.b = prop;
                        st.ssr = ssr;
                        st.surv = surv;
                    }
                    if adapting {
                        st.log_scale += (if accept { 1.0 } else { 0.0 } - target) * step;
                    } else {
                        st.accepted += usize::from(accept);
                    }
                });
                if !adapting {
                    b_proposed += 1;
                }

                // translate matched fixed and random effects jointly; the
                // linear predictor is unchanged
                if !self.matched.is_empty() {
                    let m = self.matched.len();
                    let mut prec = DMatrix::identity(m, m) / v;
                    let mut sum_b = DVector::zeros(q);
                    for st in &states {
                        sum_b += &st.b;
                    }
                    let dsum = &d_inv * &sum_b;
                    let mut h = DVector::zeros(m);
                    for (a, &(fa, ra)) in self.matched.iter().enumerate() {
                        h[a] = dsum[ra] - beta[fa] / v;
                        for (c, &(_, rc)) in self.matched.iter().enumerate() {
                            prec[(a, c)] += n as f64 * d_inv[(ra, rc)];
                        }
                    }
                    let chol = prec
                        .cholesky()
                        .ok_or_else(|| Error::Numerical("centering precision not positive definite".into()))?;
                    let mean = chol.solve(&h);
                    let noise = chol
                        .l()
                        .transpose()
                        .solve_upper_triangular(&standard_normal(&mut rng, m))
                        .expect("triangular factor is nonsingular");
                    let delta = mean + noise;
                    let mut new_beta = beta.clone();
                    for (a, &(fa, _)) in self.matched.iter().enumerate() {
                        new_beta[fa] += delta[a];
                    }
                    let shift = |b: &DVector<f64>| {
                        let mut b = b.clone();
                        for (a, &(_, ra)) in self.matched.iter().enumerate() {
                            b[ra] -= delta[a];
                        }
                        b
                    };
                    let moved: Vec<(DVector<f64>, Cache, f64)> = states
                        .par_iter()
                        .enumerate()
                        .map(|(i, st)| {
                            let b = shift(&st.b);
                            let mut cache = self.cache(i, &new_beta, &phi);
                            cache.lh0 = st.cache.lh0.clone();
                            let surv = if shared {
                                self.surv_ll(i, &cache, &b, &gamma, &alpha, 0.0).unwrap_or(f64::NEG_INFINITY)
                            } else {
                                st.surv
                            };
                            (b, cache, surv)
                        })
                        .collect();
                    let log_ratio: f64 = moved.iter().zip(&states).map(|(m, st)| m.2 - st.surv).sum();
                    let u: f64 = rng.random();
                    if log_ratio.is_finite() && u.ln() < log_ratio {
                        beta = new_beta;
                        for ((b, cache, surv), st) in moved.into_iter().zip(states.iter_mut()) {
                            st.b = b;
                            st.cache = cache;
                            st.surv = surv;
                        }
                    }
                }
            }

            // fixed effects
            {
                let prop = &beta + beta_block.propose(&mut rng);
                let evals: Vec<(Cache, f64, f64)> = states
                    .par_iter()
                    .enumerate()
                    .map(|(i, st)| {
                        let mut cache = self.cache(i, &prop, &phi);
                        cache.lh0 = st.cache.lh0.clone();
                        let ssr = self.ssr(i, &cache, &st.b);
                        let surv = if surv_on {
                            self.surv_ll(i, &cache, &st.b, &gamma, &alpha, 0.0).unwrap_or(f64::NEG_INFINITY)
                        } else {
                            0.0
                        };
                        (cache, ssr, surv)
                    })
                    .collect();
                let mut log_ratio = -0.5 * (prop.norm_squared() - beta.norm_squared()) / v;
                for (e, st) in evals.iter().zip(&states) {
                    log_ratio += -0.5 * (e.1 - st.ssr) / sigma2 + (e.2 - st.surv);
                }
                let u: f64 = rng.random();
                let accept = log_ratio.is_finite() && u.ln() < log_ratio;
                if accept {
                    beta = prop;
                    for ((cache, ssr, surv), st) in evals.into_iter().zip(states.iter_mut()) {
                        st.cache = cache;
                        st.ssr = ssr;
                        st.surv = surv;
                    }
                }
                beta_block.record(accept, it, config, &beta);
            }

            // residual variance
            {
                let ssr: f64 = states.iter().map(|s| s.ssr).sum();
                let precision = gamma_draw(
                    &mut rng,
                    priors.sigma2_shape + 0.5 * n_obs,
                    priors.sigma2_scale + 0.5 * ssr,
                )?;
                sigma2 = 1.0 / precision;
            }

            // random-effects covariance
            if q > 0 {
                let mut scale = DMatrix::identity(q, q);
                for st in &states {
                    scale += &st.b * st.b.transpose();
                }
                d = inverse_wishart(&mut rng, d_df + n as f64, &scale)?;
            }

            if surv_on {
                // (γ, α) with a compensating shift of the log baseline
                if let Some(block) = surv_block.as_mut() {
                    let delta = block.propose(&mut rng);
                    let new_gamma = &gamma + delta.rows(0, self.pw);
                    let new_alpha = &alpha + delta.rows(self.pw, self.pa);
                    let offset = -delta.dot(&shear);
                    let survs: Vec<f64> = states
                        .par_iter()
                        .enumerate()
                        .map(|(i, st)| {
                            self.surv_ll(i, &st.cache, &st.b, &new_gamma, &new_alpha, offset)
                                .unwrap_or(f64::NEG_INFINITY)
                        })
                        .collect();
                    let mut log_ratio = -0.5
                        * (new_gamma.norm_squared() + new_alpha.norm_squared()
                            - gamma.norm_squared()
                            - alpha.norm_squared())
                        / v;
                    for (s, st) in survs.iter().zip(&states) {
                        log_ratio += s - st.surv;
                    }
                    let u: f64 = rng.random();
                    let accept = log_ratio.is_finite() && u.ln() < log_ratio;
                    if accept {
                        gamma = new_gamma;
                        alpha = new_alpha;
                        phi.add_scalar_mut(offset);
                        for (s, st) in survs.into_iter().zip(states.iter_mut()) {
                            st.surv = s;
                            st.cache.lh0.add_scalar_mut(offset);
                        }
                    }
                    let mut value = gamma.clone().resize_vertically(pwa, 0.0);
                    value.rows_mut(self.pw, self.pa).copy_from(&alpha);
                    block.record(accept, it, config, &value);
                }

                // baseline spline coefficients
                let block = phi_block.as_mut().expect("survival model has a baseline block");
                let prop = &phi + block.propose(&mut rng);
                let evals: Vec<(DVector<f64>, f64)> = states
                    .par_iter()
                    .enumerate()
                    .map(|(i, st)| {
                        let mut cache = st.cache.clone();
                        cache.lh0 = &self.subjects[i].nodes.basis * &prop;
                        let surv = self
                            .surv_ll(i, &cache, &st.b, &gamma, &alpha, 0.0)
                            .unwrap_or(f64::NEG_INFINITY);
                        (cache.lh0, surv)
                    })
                    .collect();
                let pen = |f: &DVector<f64>| (f.transpose() * &self.penalty * f)[(0, 0)];
                let mut log_ratio = -0.5 * tau * (pen(&prop) - pen(&phi));
                for (e, st) in evals.iter().zip(&states) {
                    log_ratio += e.1 - st.surv;
                }
                let u: f64 = rng.random();
                let accept = log_ratio.is_finite() && u.ln() < log_ratio;
                if accept {
                    phi = prop;
                    for ((lh0, surv), st) in evals.into_iter().zip(states.iter_mut()) {
                        st.cache.lh0 = lh0;
                        st.surv = surv;
                    }
                }
                block.record(accept, it, config, &phi);

                // penalty precision
                tau = gamma_draw(
                    &mut rng,
                    priors.tau_shape + 0.5 * rank,
                    priors.tau_rate + 0.5 * pen(&phi),
                )?;
            }

            if it >= config.burnin && (it - config.burnin + 1) % config.thin == 0 {
                let params = Params {
                    beta: beta.clone(),
                    sigma2,
                    d: d.clone(),
                    b: vec![],
                    gamma: gamma.clone(),
                    alpha: alpha.clone(),
                    phi: phi.clone(),
                    tau,
                };
                draws.push(self.pack(&params));
                if q > 0 {
                    b_draws.push(states.iter().flat_map(|s| s.b.iter().copied()).collect());
                }
            }
        }

        let mut acceptance = vec![("beta".to_string(), beta_block.rate())];
        if q > 0 {
            let acc: usize = states.iter().map(|s| s.accepted).sum();
            acceptance.push(("b".to_string(), acc as f64 / (b_proposed * n).max(1) as f64));
        }
        if let Some(b) = &surv_block {
            acceptance.push(("gamma_alpha".to_string(), b.rate()));
        }
        if let Some(b) = &phi_block {
            acceptance.push(("baseline".to_string(), b.rate()));
        }
        let warnings = acceptance
            .iter()
            .filter(|(_, r)| *r < 0.01)
            .map(|(name, r)| format!("acceptance rate of block `{name}` is {r:.4} after adaptation"))
            .collect();

        Ok(PosteriorChains {
            names: self.names().to_vec(),
            draws,
            random_effects: b_draws,
            n_subjects: n,
            q,
            acceptance,
            config: config.clone(),
            warnings,
        })
    }

    /// Parameters of retained draw `k`.
    pub fn params_at(&self, chains: &PosteriorChains, k: usize) -> Params {
        self.unpack(&chains.draws[k], chains.random_effects_at(k))
    }

    /// Posterior means of all parameters, random effects included.
    pub fn posterior_mean(&self, chains: &PosteriorChains) -> Params {
        self.unpack(&chains.mean(), chains.mean_random_effects())
    }
}
