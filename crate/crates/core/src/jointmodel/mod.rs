//! Bayesian joint model of a longitudinal marker and a time-to-event outcome.
//!
//! The longitudinal part is the linear mixed model `y = Xβ + Zb + ε`; the
//! hazard is `h0(t) exp(γ'w + f(μ(t), b, α))` with a penalized cubic B-spline
//! for `log h0` and `f` chosen by [`AssociationStructure`]. Estimation is by
//! Metropolis-within-Gibbs ([`JointModel::run_mcmc`]).

mod mcmc;
mod model;
mod spec;
mod summary;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{BSplineBasis, DerivativeForm};
use crate::error::{Error, Result};
use crate::lmm::LmmFit;
use crate::survival::CoxFit;

pub use mcmc::PosteriorChains;
pub use model::JointModel;
pub use spec::{AssociationKind, LongitudinalPart, McmcPart, ModelSpec, SurvivalPart, TransformPart};
pub use summary::{summarize, summary_csv, SummaryRow};

/// How the longitudinal process enters the hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Association {
    /// `α1 μ(t)`
    CurrentValue,
    /// `α1 μ(t) + α2 μ'(t)`
    CurrentValuePlusSlope(DerivativeForm),
    /// `α'b`
    SharedRandomEffects,
}

/// Interaction of the association term with a baseline covariate: the value
/// column `μ` is joined by `μ · covariate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFunction {
    pub interacting_covariate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationStructure {
    pub variant: Association,
    pub transform: Option<TransformFunction>,
}

impl AssociationStructure {
    pub fn current_value() -> Self {
        Self {
            variant: Association::CurrentValue,
            transform: None,
        }
    }

    /// Value plus slope, with the derivative taken symbolically from the
    /// longitudinal design.
    pub fn value_slope(lmm: &LmmFit, time_var: &str) -> Result<Self> {
        Ok(Self {
            variant: Association::CurrentValuePlusSlope(DerivativeForm::from_recipe(&lmm.recipe, time_var)?),
            transform: None,
        })
    }

    pub fn shared_random_effects() -> Self {
        Self {
            variant: Association::SharedRandomEffects,
            transform: None,
        }
    }

    pub fn with_transform(mut self, covariate: &str) -> Result<Self> {
        if self.variant == Association::SharedRandomEffects {
            return Err(Error::InvalidInput(
                "the shared random-effects association does not take a transform".into(),
            ));
        }
        self.transform = Some(TransformFunction {
            interacting_covariate: covariate.to_string(),
        });
        Ok(self)
    }

    /// Labels of the association coefficients, in parameter order.
    pub fn labels(&self, random_labels: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        match &self.variant {
            Association::SharedRandomEffects => {
                out.extend(random_labels.iter().map(|l| format!("Assoct:{l}")));
            }
            v => {
                out.push("Assoct".to_string());
                if let Some(t) = &self.transform {
                    out.push(format!("Assoct:{}", t.interacting_covariate));
                }
                if matches!(v, Association::CurrentValuePlusSlope(_)) {
                    out.push("AssoctE".to_string());
                }
            }
        }
        out
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Association::CurrentValue => "value",
            Association::CurrentValuePlusSlope(_) => "value-slope",
            Association::SharedRandomEffects => "shared-re",
        }
    }
}

/// Penalized B-spline for the log baseline hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub basis: BSplineBasis,
    pub coefficients: Vec<f64>,
    /// Precision of the second-order random-walk penalty.
    pub tau: f64,
}

pub const BASELINE_BASIS: usize = 9;

impl BaselineHazard {
    pub fn log_h0(&self, t: f64) -> f64 {
        self.basis.eval(t).iter().zip(&self.coefficients).map(|(b, c)| b * c).sum()
    }
}

/// Second-difference penalty matrix `D2'D2` for `n` coefficients.
pub fn rw2_penalty(n: usize) -> DMatrix<f64> {
    if n < 3 {
        return DMatrix::zeros(n, n);
    }
    let mut d = DMatrix::zeros(n - 2, n);
    for i in 0..n - 2 {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -2.0;
        d[(i, i + 2)] = 1.0;
    }
    d.transpose() * d
}

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Variance of the normal priors on β, γ and α.
    pub coef_variance: f64,
    /// Inverse-gamma shape and scale for σ².
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    /// Inverse-Wishart degrees of freedom (`None`: dimension + 1) with an
    /// identity scale matrix.
    pub d_df: Option<f64>,
    /// Gamma shape and rate for the penalty precision.
    pub tau_shape: f64,
    pub tau_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            coef_variance: 100.0,
            sigma2_shape: 0.01,
            sigma2_scale: 0.01,
            d_df: None,
            tau_shape: 1.0,
            tau_rate: 0.005,
        }
    }
}

/// Everything needed to build a joint model from fitted submodels.
#[derive(Debug, Clone)]
pub struct JointModelSpec {
    pub longitudinal: LmmFit,
    /// `None` fits the longitudinal model alone.
    pub survival: Option<CoxFit>,
    pub association: AssociationStructure,
    pub priors: Priors,
    /// Equal-width Gauss-Kronrod segments on `[0, T_i]`.
    pub quadrature_segments: usize,
    pub time_var: String,
}

impl JointModelSpec {
    pub fn new(longitudinal: LmmFit, survival: CoxFit, association: AssociationStructure, time_var: &str) -> Self {
        Self {
            longitudinal,
            survival: Some(survival),
            association,
            priors: Priors::default(),
            quadrature_segments: crate::quadrature::SEGMENTS,
            time_var: time_var.to_string(),
        }
    }

    pub fn longitudinal_only(longitudinal: LmmFit, time_var: &str) -> Self {
        Self {
            longitudinal,
            survival: None,
            association: AssociationStructure::current_value(),
            priors: Priors::default(),
            quadrature_segments: crate::quadrature::SEGMENTS,
            time_var: time_var.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub adapt: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Worker threads for per-subject updates (`None`: rayon default).
    pub threads: Option<usize>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 30000,
            adapt: 3000,
            burnin: 3000,
            thin: 15,
            seed: 1,
            threads: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be at least 1".into()));
        }
        if self.burnin >= self.n_iter {
            return Err(Error::InvalidInput("burn-in must be shorter than the chain".into()));
        }
        if self.adapt > self.burnin {
            return Err(Error::InvalidInput("adaptation must end within the burn-in".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_draws(&self) -> usize {
        (self.n_iter - self.burnin) / self.thin
    }
}

/// One point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub d: DMatrix<f64>,
    pub b: Vec<DVector<f64>>,
    pub gamma: DVector<f64>,
    pub alpha: DVector<f64>,
    /// Baseline spline coefficients.
    pub phi: DVector<f64>,
    pub tau: f64,
}
