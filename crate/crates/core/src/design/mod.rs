//! Model formulas and their numeric realization as design matrices.

pub mod formula;
pub mod spline;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use formula::{parse_formula, Factor, ModelFormula, RandomPart, Term};
pub use spline::{ns_basis, BSplineBasis, NaturalSpline};

use crate::data::{JointDataset, SurvivalRecord};
use crate::error::{Error, Result};

/// Row-oriented view of tabular data for design construction.
pub trait Table {
    fn n_rows(&self) -> usize;
    fn value(&self, row: usize, name: &str) -> Option<f64>;
}

/// Named numeric columns of equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnTable {
    pub columns: IndexMap<String, Vec<f64>>,
}

impl ColumnTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, values: Vec<f64>) -> Self {
        self.columns.insert(name.to_string(), values);
        self
    }
}

impl Table for ColumnTable {
    fn n_rows(&self) -> usize {
        self.columns.values().next().map_or(0, Vec::len)
    }

    fn value(&self, row: usize, name: &str) -> Option<f64> {
        self.columns.get(name).and_then(|c| c.get(row).copied())
    }
}

/// Longitudinal rows of a joint dataset; baseline covariates are visible too.
impl Table for JointDataset {
    fn n_rows(&self) -> usize {
        self.longitudinal.len()
    }

    fn value(&self, row: usize, name: &str) -> Option<f64> {
        let r = &self.longitudinal[row];
        if name == self.time_name {
            return Some(r.time);
        }
        if let Some(v) = r.covariates.get(name) {
            return Some(v.as_f64());
        }
        // baseline covariates of the owning subject
        let s = self
            .visits
            .partition_point(|range| range.end <= row);
        self.survival
            .get(s)
            .and_then(|rec| rec.covariates.get(name))
            .map(|v| v.as_f64())
    }
}

/// Survival records as a table of baseline covariates.
pub struct SurvivalTable<'a>(pub &'a [SurvivalRecord]);

impl Table for SurvivalTable<'_> {
    fn n_rows(&self) -> usize {
        self.0.len()
    }

    fn value(&self, row: usize, name: &str) -> Option<f64> {
        self.0[row].covariates.get(name).map(|v| v.as_f64())
    }
}

/// A dense matrix with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }
}

/// A term whose data-dependent pieces (spline knots) are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RealizedTerm {
    Intercept,
    Product(Vec<Factor>),
    Spline { var: String, spline: NaturalSpline },
}

impl RealizedTerm {
    fn width(&self) -> usize {
        match self {
            RealizedTerm::Spline { spline, .. } => spline.df(),
            _ => 1,
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            RealizedTerm::Intercept => vec!["(Intercept)".into()],
            RealizedTerm::Product(f) => vec![Term::Product(f.clone()).to_string()],
            RealizedTerm::Spline { var, spline } => {
                let df = spline.df();
                (1..=df).map(|k| format!("ns({var}, {df}){k}")).collect()
            }
        }
    }

    fn involves(&self, var: &str) -> bool {
        match self {
            RealizedTerm::Intercept => false,
            RealizedTerm::Product(f) => f.iter().any(|x| x.var == var),
            RealizedTerm::Spline { var: v, .. } => v == var,
        }
    }
}

/// A formula side (fixed or random) ready to be evaluated on any row,
/// including rows that were not part of the data it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecipe {
    pub terms: Vec<RealizedTerm>,
}

fn missing(name: &str) -> Error {
    Error::UnknownColumn(name.to_string())
}

impl DesignRecipe {
    /// Fixes spline knots from the data the design will be built on.
    pub fn new(terms: &[Term], data: &dyn Table) -> Result<Self> {
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            out.push(match t {
                Term::Intercept => RealizedTerm::Intercept,
                Term::Product(f) => {
                    for x in f {
                        if data.n_rows() > 0 && data.value(0, &x.var).is_none() {
                            return Err(missing(&x.var));
                        }
                    }
                    RealizedTerm::Product(f.clone())
                }
                Term::Spline { var, df } => {
                    let x = (0..data.n_rows())
                        .map(|i| data.value(i, var).ok_or_else(|| missing(var)))
                        .collect::<Result<Vec<_>>>()?;
                    RealizedTerm::Spline {
                        var: var.clone(),
                        spline: spline::ns_knots(&x, *df, None)?,
                    }
                }
            });
        }
        Ok(Self { terms: out })
    }

    pub fn ncols(&self) -> usize {
        self.terms.iter().map(RealizedTerm::width).sum()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().flat_map(RealizedTerm::labels).collect()
    }

    pub fn variables(&self) -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for t in &self.terms {
            let names: Vec<String> = match t {
                RealizedTerm::Intercept => vec![],
                RealizedTerm::Product(f) => f.iter().map(|x| x.var.clone()).collect(),
                RealizedTerm::Spline { var, .. } => vec![var.clone()],
            };
            for n in names {
                if !v.contains(&n) {
                    v.push(n);
                }
            }
        }
        v
    }

    /// One design row; `lookup` resolves variable names.
    pub fn row(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.ncols());
        for t in &self.terms {
            match t {
                RealizedTerm::Intercept => out.push(1.0),
                RealizedTerm::Product(f) => {
                    let mut v = 1.0;
                    for x in f {
                        v *= lookup(&x.var).ok_or_else(|| missing(&x.var))?.powi(x.power as i32);
                    }
                    out.push(v);
                }
                RealizedTerm::Spline { var, spline } => {
                    out.extend(spline.eval(lookup(var).ok_or_else(|| missing(var))?));
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design cell".into()));
        }
        Ok(out)
    }

    /// Row of partial derivatives with respect to `wrt`; full width, zeros kept.
    pub fn derivative_row(&self, wrt: &str, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.ncols());
        for t in &self.terms {
            match t {
                RealizedTerm::Intercept => out.push(0.0),
                RealizedTerm::Product(f) => {
                    let mut v = 1.0;
                    let mut hit = false;
                    for x in f {
                        let val = lookup(&x.var).ok_or_else(|| missing(&x.var))?;
                        if x.var == wrt {
                            hit = true;
                            v *= f64::from(x.power) * val.powi(x.power as i32 - 1);
                        } else {
                            v *= val.powi(x.power as i32);
                        }
                    }
                    out.push(if hit { v } else { 0.0 });
                }
                RealizedTerm::Spline { var, spline } => {
                    if var == wrt {
                        out.extend(spline.eval_deriv(lookup(var).ok_or_else(|| missing(var))?, 1));
                    } else {
                        out.extend(std::iter::repeat_n(0.0, spline.df()));
                    }
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("derivative design cell".into()));
        }
        Ok(out)
    }

    /// Column indices whose derivative with respect to `wrt` is not identically zero.
    pub fn derivative_indices(&self, wrt: &str) -> Vec<usize> {
        let mut idx = Vec::new();
        let mut col = 0;
        for t in &self.terms {
            let w = t.width();
            if t.involves(wrt) {
                idx.extend(col..col + w);
            }
            col += w;
        }
        idx
    }

    /// Evaluates the recipe on every row of a table.
    pub fn matrix(&self, data: &dyn Table) -> Result<DesignMatrix> {
        let n = data.n_rows();
        let p = self.ncols();
        let mut values = DMatrix::zeros(n, p);
        for i in 0..n {
            let r = self.row(&|name| data.value(i, name))?;
            for (j, v) in r.into_iter().enumerate() {
                values[(i, j)] = v;
            }
        }
        Ok(DesignMatrix {
            values,
            labels: self.labels(),
        })
    }
}

/// Realized fixed and random designs of a mixed-model formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedRecipe {
    pub fixed: DesignRecipe,
    pub random: DesignRecipe,
}

impl MixedRecipe {
    pub fn new(formula: &ModelFormula, data: &dyn Table) -> Result<Self> {
        Ok(Self {
            fixed: DesignRecipe::new(&formula.fixed, data)?,
            random: DesignRecipe::new(formula.random_terms(), data)?,
        })
    }
}

/// Fixed and random design matrices for `formula` on `data`.
pub fn build_design(formula: &ModelFormula, data: &dyn Table) -> Result<(DesignMatrix, DesignMatrix)> {
    let recipe = MixedRecipe::new(formula, data)?;
    Ok((recipe.fixed.matrix(data)?, recipe.random.matrix(data)?))
}

/// Which coefficients enter the time derivative of the linear predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeForm {
    pub wrt: String,
    /// Labels of the surviving derivative columns, e.g. `d(t^2)/dt`.
    pub fixed_expression: Vec<String>,
    pub random_expression: Vec<String>,
    /// 0-based positions into the fixed coefficient vector.
    pub fixed_indices: Vec<usize>,
    /// 0-based positions into the random-effects vector.
    pub random_indices: Vec<usize>,
}

impl DerivativeForm {
    pub fn from_recipe(recipe: &MixedRecipe, wrt: &str) -> Result<Self> {
        let fixed_indices = recipe.fixed.derivative_indices(wrt);
        let random_indices = recipe.random.derivative_indices(wrt);
        if fixed_indices.is_empty() && random_indices.is_empty() {
            return Err(Error::ZeroDerivative(wrt.to_string()));
        }
        let label = |labels: &[String], idx: &[usize]| -> Vec<String> {
            idx.iter().map(|&i| format!("d({})/d{wrt}", labels[i])).collect()
        };
        Ok(Self {
            wrt: wrt.to_string(),
            fixed_expression: label(&recipe.fixed.labels(), &fixed_indices),
            random_expression: label(&recipe.random.labels(), &random_indices),
            fixed_indices,
            random_indices,
        })
    }

    /// Derivative form with no contributing columns (a time-constant predictor).
    pub fn empty(wrt: &str) -> Self {
        Self {
            wrt: wrt.to_string(),
            fixed_expression: vec![],
            random_expression: vec![],
            fixed_indices: vec![],
            random_indices: vec![],
        }
    }
}

/// Symbolic derivative of the mixed-model linear predictor with respect to
/// `wrt`, with the surviving fixed and random derivative columns.
pub fn derivative_design(
    formula: &ModelFormula,
    wrt: &str,
    data: &dyn Table,
) -> Result<(DerivativeForm, DesignMatrix, DesignMatrix)> {
    let recipe = MixedRecipe::new(formula, data)?;
    let form = DerivativeForm::from_recipe(&recipe, wrt)?;
    let n = data.n_rows();
    let mut fixed = DMatrix::zeros(n, form.fixed_indices.len());
    let mut random = DMatrix::zeros(n, form.random_indices.len());
    for i in 0..n {
        let look = |name: &str| data.value(i, name);
        let f = recipe.fixed.derivative_row(wrt, &look)?;
        for (j, &k) in form.fixed_indices.iter().enumerate() {
            fixed[(i, j)] = f[k];
        }
        let r = recipe.random.derivative_row(wrt, &look)?;
        for (j, &k) in form.random_indices.iter().enumerate() {
            random[(i, j)] = r[k];
        }
    }
    let fixed = DesignMatrix {
        values: fixed,
        labels: form.fixed_expression.clone(),
    };
    let random = DesignMatrix {
        values: random,
        labels: form.random_expression.clone(),
    };
    Ok((form, fixed, random))
}
