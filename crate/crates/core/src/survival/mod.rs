//! Survival engines: weighted Kaplan-Meier, Cox proportional hazards with
//! Breslow baseline, censoring models and censoring martingale increments.
//!
//! Survival curves follow the `S(t) = P(T >= t)` convention: they are
//! left-continuous, so `S(t)` only reflects jumps strictly before `t`.

mod censoring;
mod cox;
mod km;

pub(crate) use censoring::fit_cox_working;

pub use censoring::{
    censoring_martingale_jumps, censoring_model_fit, CensorModel, CensoringFit, JumpPoint,
    MartingaleJumps, SubjectJumps,
};
pub use cox::{breslow_baseline, cox_fit, partial_likelihood, predict_survival, CoxFit, CoxOptions, PartialLikelihood};
pub use km::{km_fit, km_hazard};

use serde::{Deserialize, Serialize};

use crate::covariates::ModelTerms;

/// Discrete cumulative hazard: increments at sorted jump times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepCumHaz {
    pub jump_times: Vec<f64>,
    pub increments: Vec<f64>,
}

impl StepCumHaz {
    /// `Lambda(t-)`, the sum of increments at jump times strictly before `t`.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&u| u < t);
        self.increments[..k].iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }
}

/// Left-continuous step survival curve `S(t) = P(T >= t)` with `S(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvCurve {
    /// Sorted jump times.
    pub jump_times: Vec<f64>,
    /// Survival just after each jump.
    pub values_after: Vec<f64>,
}

impl StepSurvCurve {
    pub fn constant_one() -> Self {
        StepSurvCurve {
            jump_times: Vec::new(),
            values_after: Vec::new(),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&u| u < t);
        if k == 0 {
            1.0
        } else {
            self.values_after[k - 1]
        }
    }

    pub fn on_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&t| self.at(t)).collect()
    }
}

/// How a fitted cumulative hazard maps to survival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurvivalForm {
    /// `exp(-r * Lambda0(t-))`, used for Cox models.
    Exponential,
    /// `prod_{u < t} (1 - dLambda(u))`, used for Kaplan-Meier.
    ProductLimit,
}

/// A fitted working model for one time-to-event: a baseline hazard plus an
/// optional log-linear covariate effect.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingModel {
    pub cumhaz: StepCumHaz,
    pub form: SurvivalForm,
    pub beta: Vec<f64>,
    pub means: Vec<f64>,
    pub terms: ModelTerms,
}

impl WorkingModel {
    pub fn from_cox(fit: CoxFit, terms: ModelTerms) -> Self {
        WorkingModel {
            cumhaz: fit.baseline_cumhaz,
            form: SurvivalForm::Exponential,
            beta: fit.beta,
            means: fit.covariate_means,
            terms,
        }
    }

    pub fn from_km(cumhaz: StepCumHaz) -> Self {
        WorkingModel {
            cumhaz,
            form: SurvivalForm::ProductLimit,
            beta: Vec::new(),
            means: Vec::new(),
            terms: ModelTerms::empty(),
        }
    }

    /// Hazard that never jumps: survival identically one.
    pub fn never() -> Self {
        Self::from_km(StepCumHaz::default())
    }

    /// Relative risk `exp(beta'(x - mean))` for a subject's raw covariates.
    pub fn risk(&self, covariates: &[f64]) -> f64 {
        if self.beta.is_empty() {
            return 1.0;
        }
        let x = self.terms.row(covariates);
        let lp: f64 = x
            .iter()
            .zip(&self.means)
            .zip(&self.beta)
            .map(|((x, m), b)| b * (x - m))
            .sum();
        lp.exp()
    }

    /// `P(T >= t | risk)`.
    pub fn survival_ge(&self, t: f64, risk: f64) -> f64 {
        self.survival_through(self.cumhaz.jump_times.partition_point(|&u| u < t), risk)
    }

    /// `P(T > t | risk)`.
    pub fn survival_gt(&self, t: f64, risk: f64) -> f64 {
        self.survival_through(self.cumhaz.jump_times.partition_point(|&u| u <= t), risk)
    }

    /// Survival after the first `k` jumps.
    fn survival_through(&self, k: usize, risk: f64) -> f64 {
        let inc = &self.cumhaz.increments[..k];
        match self.form {
            SurvivalForm::Exponential => (-risk * inc.iter().sum::<f64>()).exp(),
            SurvivalForm::ProductLimit => inc.iter().map(|h| 1.0 - h).product(),
        }
    }

    /// Hazard increment at jump `k` for a subject with relative risk `risk`.
    pub fn increment(&self, k: usize, risk: f64) -> f64 {
        match self.form {
            SurvivalForm::Exponential => risk * self.cumhaz.increments[k],
            SurvivalForm::ProductLimit => self.cumhaz.increments[k],
        }
    }

    /// Ratio `S(u+) / S(u-)` across jump `k`.
    pub fn jump_factor(&self, k: usize, risk: f64) -> f64 {
        match self.form {
            SurvivalForm::Exponential => (-risk * self.cumhaz.increments[k]).exp(),
            SurvivalForm::ProductLimit => 1.0 - self.cumhaz.increments[k],
        }
    }

    pub fn curve(&self, covariates: &[f64]) -> StepSurvCurve {
        let risk = self.risk(covariates);
        let mut cum = 0.0;
        let mut prod = 1.0;
        let values_after = self
            .cumhaz
            .increments
            .iter()
            .map(|h| match self.form {
                SurvivalForm::Exponential => {
                    cum += h;
                    (-risk * cum).exp()
                }
                SurvivalForm::ProductLimit => {
                    prod *= 1.0 - h;
                    prod
                }
            })
            .collect();
        StepSurvCurve {
            jump_times: self.cumhaz.jump_times.clone(),
            values_after,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_curve_is_left_continuous() {
        let c = StepSurvCurve {
            jump_times: vec![1.0, 2.0],
            values_after: vec![0.5, 0.25],
        };
        assert_eq!(c.at(0.0), 1.0);
        assert_eq!(c.at(1.0), 1.0);
        assert_eq!(c.at(1.5), 0.5);
        assert_eq!(c.at(2.0), 0.5);
        assert_eq!(c.at(2.1), 0.25);
    }
}
