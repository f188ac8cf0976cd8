//! Kaplan-Meier, Cox regression, proportional-hazards checks and the
//! arithmetic used to read fitted coefficients.

mod cox;
mod km;
mod zph;

pub use cox::{fit_cox, fit_cox_with, partial_loglik, BreslowHazard, CoxFit, CoxOptions};
pub use km::{kaplan_meier, KmCurve};
pub use zph::{schoenfeld_test, SchoenfeldTest, TimeTransform, ZphRow};

/// Multiplicative hazard change per unit of the covariate.
pub fn hazard_ratio(coef: f64) -> f64 {
    coef.exp()
}

/// Percentage reduction in risk for a covariate change of `delta`.
pub fn percent_risk_change(coef: f64, delta: f64) -> f64 {
    (1.0 - (coef * delta).exp()) * 100.0
}

/// Percentage increase in risk for a covariate change of `delta`.
pub fn percent_risk_increase(coef: f64, delta: f64) -> f64 {
    ((coef * delta).exp() - 1.0) * 100.0
}
