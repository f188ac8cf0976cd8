//! Joint models for longitudinal and time-to-event data.
//!
//! The workflow mirrors how such models are usually built by hand:
//!
//! 1. read and join the long-format visits and the per-subject survival
//!    records ([`data`]);
//! 2. fit the longitudinal mixed model ([`lmm`]) and a Cox model
//!    ([`survival`]) separately, using information criteria and
//!    proportional-hazards checks to pick each submodel;
//! 3. combine them in a joint model estimated by MCMC ([`jointmodel`]) under
//!    one of several association structures;
//! 4. check convergence and compare the fitted joint models
//!    ([`diagnostics`]).
//!
//! [`simulate`] generates data from a known joint model and backs most of the
//! recovery tests.

pub mod data;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod jointmodel;
pub mod lmm;
pub mod optim;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod survival;

/// Version of this library, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data::{
    join_datasets, parse_longitudinal_csv, parse_survival_csv, CovariateValue, JointDataset,
    LongitudinalRecord, LongitudinalSchema, SurvivalRecord, SurvivalSchema,
};
pub use design::{
    build_design, derivative_design, ns_basis, parse_formula, DerivativeForm, DesignMatrix,
    ModelFormula,
};
pub use diagnostics::{compare, diagnose, dic_lpml, ChainDiagnostics, ComparisonRow};
pub use error::{Error, Result};
pub use jointmodel::{
    summarize, Association, AssociationKind, AssociationStructure, JointModel, JointModelSpec, McmcConfig, ModelSpec, Params,
    PosteriorChains, Priors, SummaryRow,
};
pub use lmm::{fit_lmm, information_criteria, kass_raftery_category, selection_table, LmmFit, Method};
pub use simulate::{simulate_joint, Generator, Simulation};
pub use survival::{
    fit_cox, hazard_ratio, kaplan_meier, percent_risk_change, schoenfeld_test, CoxFit, KmCurve,
    SchoenfeldTest,
};
