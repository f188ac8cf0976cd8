use serde::{Deserialize, Serialize};

use super::{AssociationStructure, JointModel, JointModelSpec, McmcConfig};
use crate::data::JointDataset;
use crate::design::{parse_formula, ModelFormula};
use crate::error::Result;
use crate::lmm::{fit_lmm, Method};
use crate::survival::fit_cox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssociationKind {
    Value,
    ValueSlope,
    SharedRe,
}

impl std::str::FromStr for AssociationKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" => Ok(Self::Value),
            "value-slope" => Ok(Self::ValueSlope),
            "shared-re" => Ok(Self::SharedRe),
            _ => Err(crate::error::Error::InvalidInput(format!(
                "unknown association `{s}` (expected value, value-slope or shared-re)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalPart {
    pub fixed: String,
    pub random: String,
    #[serde(default = "default_group")]
    pub group: String,
}

fn default_group() -> String {
    "id".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPart {
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformPart {
    pub covariate: String,
}

/// MCMC settings as written in a spec file; absent fields keep defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct McmcPart {
    pub iter: Option<usize>,
    pub adapt: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
}

/// Declarative joint-model specification (the `fit-joint` spec file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub longitudinal: LongitudinalPart,
    #[serde(default)]
    pub survival: Option<SurvivalPart>,
    #[serde(default = "default_association")]
    pub association: AssociationKind,
    #[serde(default)]
    pub transform: Option<TransformPart>,
    #[serde(default)]
    pub mcmc: McmcPart,
}

fn default_association() -> AssociationKind {
    AssociationKind::Value
}

impl ModelSpec {
    pub fn formula(&self) -> Result<ModelFormula> {
        ModelFormula::mixed(&self.longitudinal.fixed, &self.longitudinal.random, &self.longitudinal.group)
    }

    pub fn mcmc_config(&self) -> McmcConfig {
        let d = McmcConfig::default();
        McmcConfig {
            n_iter: self.mcmc.iter.unwrap_or(d.n_iter),
            adapt: self.mcmc.adapt.unwrap_or(d.adapt),
            burnin: self.mcmc.burnin.unwrap_or(d.burnin),
            thin: self.mcmc.thin.unwrap_or(d.thin),
            seed: self.mcmc.seed.unwrap_or(d.seed),
            threads: None,
        }
    }

    /// Fits the submodels (REML mixed model, Cox model) that seed the joint
    /// model and binds it to `data`.
    pub fn build(&self, data: &JointDataset) -> Result<JointModel> {
        let formula = self.formula()?;
        let lmm = fit_lmm(&formula, data, Method::Reml)?;
        let time_var = data.time_name.clone();
        let spec = match &self.survival {
            None => JointModelSpec::longitudinal_only(lmm, &time_var),
            Some(s) => {
                let cox = fit_cox(&data.survival, &parse_formula(&s.formula)?)?;
                let mut assoc = match self.association {
                    AssociationKind::Value => AssociationStructure::current_value(),
                    AssociationKind::ValueSlope => AssociationStructure::value_slope(&lmm, &time_var)?,
                    AssociationKind::SharedRe => AssociationStructure::shared_random_effects(),
                };
                if let Some(t) = &self.transform {
                    assoc = assoc.with_transform(&t.covariate)?;
                }
                JointModelSpec::new(lmm, cox, assoc, &time_var)
            }
        };
        JointModel::new(spec, data)
    }
}
