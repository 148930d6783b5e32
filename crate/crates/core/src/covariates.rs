//! Working-model design terms: main effects and products of named covariates
//! written as `Z1`, `Z1:Z2`, `Z1:N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTerms {
    labels: Vec<String>,
    factors: Vec<Vec<usize>>,
}

impl ModelTerms {
    pub fn empty() -> Self {
        ModelTerms {
            labels: Vec::new(),
            factors: Vec::new(),
        }
    }

    /// Resolve term labels against the dataset's covariate names.
    pub fn parse<S: AsRef<str>>(specs: &[S], covariate_names: &[String]) -> Result<Self> {
        let mut labels = Vec::with_capacity(specs.len());
        let mut factors = Vec::with_capacity(specs.len());
        for spec in specs {
            let spec = spec.as_ref().trim();
            let parts = spec
                .split(':')
                .map(|name| {
                    let name = name.trim();
                    covariate_names
                        .iter()
                        .position(|c| c == name)
                        .ok_or_else(|| Error::Schema {
                            column: name.to_string(),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            if parts.is_empty() || spec.is_empty() {
                return Err(Error::invalid("empty model term"));
            }
            labels.push(spec.to_string());
            factors.push(parts);
        }
        Ok(ModelTerms { labels, factors })
    }

    pub fn main_effects(covariate_names: &[String]) -> Self {
        ModelTerms {
            labels: covariate_names.to_vec(),
            factors: (0..covariate_names.len()).map(|i| vec![i]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Write the term values for one covariate vector into `out`.
    pub fn fill(&self, covariates: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.factors) {
            *o = f.iter().map(|&i| covariates[i]).product();
        }
    }

    pub fn row(&self, covariates: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.fill(covariates, &mut out);
        out
    }
}
