use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Minimize,
    Maximize,
}

/// Sparse row `coefs · v (<= | =) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    pub fn new(coefs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row { coefs, rhs }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * values[j]).sum()
    }
}

/// A linear program over `num_vars` variables.
///
/// `lower_bounds[j] == None` marks a free variable. Upper bounds are
/// optional and, when present, have one entry per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpModel {
    pub num_vars: usize,
    #[serde(default)]
    pub sense: Sense,
    pub objective: Vec<(usize, f64)>,
    pub le_rows: Vec<Row>,
    pub eq_rows: Vec<Row>,
    pub lower_bounds: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_bounds: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl LpModel {
    /// Empty minimisation model with all variables `>= 0`.
    pub fn new(num_vars: usize) -> Self {
        LpModel {
            num_vars,
            sense: Sense::Minimize,
            objective: Vec::new(),
            le_rows: Vec::new(),
            eq_rows: Vec::new(),
            lower_bounds: vec![Some(0.0); num_vars],
            upper_bounds: None,
            names: None,
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.le_rows.len() + self.eq_rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        let check_coefs = |what: &str, coefs: &[(usize, f64)]| -> Result<()> {
            for &(j, a) in coefs {
                if j >= n {
                    return Err(Error::input(format!("{what}: variable {j} >= num_vars {n}")));
                }
                if !a.is_finite() {
                    return Err(Error::input(format!("{what}: non-finite coefficient {a}")));
                }
            }
            Ok(())
        };
        check_coefs("objective", &self.objective)?;
        for (i, r) in self.le_rows.iter().enumerate() {
            check_coefs(&format!("le row {i}"), &r.coefs)?;
            if !r.rhs.is_finite() {
                return Err(Error::input(format!("le row {i}: non-finite rhs")));
            }
        }
        for (i, r) in self.eq_rows.iter().enumerate() {
            check_coefs(&format!("eq row {i}"), &r.coefs)?;
            if !r.rhs.is_finite() {
                return Err(Error::input(format!("eq row {i}: non-finite rhs")));
            }
        }
        if self.lower_bounds.len() != n {
            return Err(Error::input(format!(
                "{} lower bounds for {n} variables",
                self.lower_bounds.len()
            )));
        }
        if self.lower_bounds.iter().flatten().any(|l| !l.is_finite()) {
            return Err(Error::input("lower bounds must be finite or null"));
        }
        if let Some(ub) = &self.upper_bounds {
            if ub.len() != n {
                return Err(Error::input(format!("{} upper bounds for {n} variables", ub.len())));
            }
            for (j, u) in ub.iter().enumerate() {
                if let Some(u) = u {
                    if !u.is_finite() {
                        return Err(Error::input(format!("variable {j}: non-finite upper bound")));
                    }
                    if let Some(l) = self.lower_bounds[j] {
                        if l > *u {
                            return Err(Error::input(format!("variable {j}: lower bound {l} > upper {u}")));
                        }
                    }
                }
            }
        }
        if let Some(names) = &self.names {
            if names.len() != n {
                return Err(Error::input(format!("{} names for {n} variables", names.len())));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * values[j]).sum()
    }

    /// Largest constraint violation of `values` (rows and bounds).
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.le_rows {
            worst = worst.max(r.eval(values) - r.rhs);
        }
        for r in &self.eq_rows {
            worst = worst.max((r.eval(values) - r.rhs).abs());
        }
        worst.max(self.max_bound_violation(values))
    }

    pub fn max_row_violation(&self, values: &[f64]) -> f64 {
        let le = self
            .le_rows
            .iter()
            .map(|r| r.eval(values) - r.rhs)
            .fold(0.0, f64::max);
        let eq = self
            .eq_rows
            .iter()
            .map(|r| (r.eval(values) - r.rhs).abs())
            .fold(0.0, f64::max);
        le.max(eq)
    }

    pub fn max_bound_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, v) in values.iter().enumerate() {
            if let Some(l) = self.lower_bounds[j] {
                worst = worst.max(l - v);
            }
            if let Some(Some(u)) = self.upper_bounds.as_ref().map(|ub| ub[j]) {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: LpModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
