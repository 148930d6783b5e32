use serde::{Deserialize, Serialize};

use super::{cox_fit, km_hazard, CoxOptions, StepSurvCurve, WorkingModel};
use crate::covariates::ModelTerms;
use crate::data::{Dataset, MultiStateRecord};
use crate::error::{Error, Result};

/// Working model for the censoring distribution `K(t | Z) = P(C >= t | Z)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorModel {
    /// Arm-specific Cox model with the given terms.
    Cox(Vec<String>),
    /// Arm-specific Kaplan-Meier.
    KmArm,
    /// Kaplan-Meier pooled over both arms.
    KmPooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensoringFit {
    pub model: CensorModel,
    /// Arm the model was fitted on; `None` when pooled.
    pub arm: Option<u8>,
    pub working: WorkingModel,
    /// Set when the fitting sample had no censored follow-up, in which case
    /// `K` is identically one.
    pub no_censoring: bool,
}

impl CensoringFit {
    pub fn risk(&self, record: &MultiStateRecord) -> f64 {
        self.working.risk(&record.covariates)
    }

    pub fn survival_ge(&self, t: f64, record: &MultiStateRecord) -> f64 {
        self.working.survival_ge(t, self.risk(record))
    }

    pub fn curve(&self, record: &MultiStateRecord) -> StepSurvCurve {
        self.working.curve(&record.covariates)
    }
}

/// Fit a Cox working model on the given records' `(time, event)` pairs.
pub(crate) fn fit_cox_working(
    times: &[f64],
    events: &[bool],
    records: &[&MultiStateRecord],
    terms: ModelTerms,
) -> Result<WorkingModel> {
    let x: Vec<Vec<f64>> = records.iter().map(|r| terms.row(&r.covariates)).collect();
    match cox_fit(times, events, &x, CoxOptions::default()) {
        Ok(fit) => Ok(WorkingModel::from_cox(fit, terms)),
        Err(Error::SingularHessian {
            direction,
            eigenvalue,
            ..
        }) => Err(Error::SingularHessian {
            direction,
            eigenvalue,
            terms: terms.labels().to_vec(),
        }),
        Err(e) => Err(e),
    }
}

/// Fit the censoring model on `(U^{Q+1}, 1 - delta^{Q+1})` among subjects in
/// `arm` (all subjects for [`CensorModel::KmPooled`]).
pub fn censoring_model_fit(ds: &Dataset, arm: u8, model: &CensorModel) -> Result<CensoringFit> {
    let pooled = matches!(model, CensorModel::KmPooled);
    let recs: Vec<&MultiStateRecord> = ds
        .records()
        .iter()
        .filter(|r| pooled || r.arm == arm)
        .collect();
    if recs.is_empty() {
        return Err(Error::EmptyArm { arm });
    }
    let times: Vec<f64> = recs.iter().map(|r| r.follow_up()).collect();
    let events: Vec<bool> = recs.iter().map(|r| r.censored()).collect();
    let arm_tag = if pooled { None } else { Some(arm) };
    if !events.iter().any(|&e| e) {
        return Ok(CensoringFit {
            model: model.clone(),
            arm: arm_tag,
            working: WorkingModel::never(),
            no_censoring: true,
        });
    }
    let working = match model {
        CensorModel::Cox(spec) => {
            let terms = ModelTerms::parse(spec, ds.covariate_names())?;
            fit_cox_working(&times, &events, &recs, terms)?
        }
        CensorModel::KmArm | CensorModel::KmPooled => {
            WorkingModel::from_km(km_hazard(&times, &events, &vec![1.0; times.len()])?)
        }
    };
    Ok(CensoringFit {
        model: model.clone(),
        arm: arm_tag,
        working,
        no_censoring: false,
    })
}

/// One increment of a censoring martingale, with the censoring survival
/// just before (`K(u- | Z)`) and just after (`K(u+ | Z)`) it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpPoint {
    pub time: f64,
    pub size: f64,
    pub k_left: f64,
    pub k_right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectJumps {
    pub record: usize,
    /// `+1` at `U^q` when stage `q` is censored.
    pub counting: Option<JumpPoint>,
    /// `-I(U^q >= u_k) dLambda_c(u_k | Z)` at each censoring-model jump time.
    pub compensator: Vec<JumpPoint>,
}

/// Increments of `dM_c^q(u) = dN_c^q(u) - I(U^q >= u) dLambda_c(u | Z)` for
/// every subject in one arm, where `N_c^q` counts censoring of stage `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleJumps {
    pub arm: u8,
    pub stage: usize,
    pub subjects: Vec<SubjectJumps>,
}

impl MartingaleJumps {
    /// `sum_{u < t} dM(u) / (K(u) P(u-))` for one subject, with `p(u)` the
    /// outcome survival `P(T^q >= u | Z)` and all denominators floored.
    ///
    /// A compensator jump contributes `-(1/K(u+) - 1/K(u-))`, the exact
    /// increment of `1/K`, and the counting jump contributes `1/K(u+)`. As
    /// jumps shrink both reduce to `dM / K(u-)`; for finite jumps the
    /// counting and compensator parts telescope exactly.
    pub fn weighted_integral(
        &self,
        subject: usize,
        t: f64,
        floor: f64,
        p: impl Fn(f64) -> f64,
    ) -> f64 {
        let s = &self.subjects[subject];
        let comp: f64 = s
            .compensator
            .iter()
            .filter(|j| j.time < t)
            .map(|j| -(1.0 / j.k_right.max(floor) - 1.0 / j.k_left.max(floor)) / p(j.time).max(floor))
            .sum();
        let count = s
            .counting
            .filter(|j| j.time < t)
            .map_or(0.0, |j| 1.0 / (j.k_right.max(floor) * p(j.time).max(floor)));
        comp + count
    }
}

/// Censoring martingale increments for stage `stage` (1-based) in `arm`.
pub fn censoring_martingale_jumps(
    fit: &CensoringFit,
    ds: &Dataset,
    arm: u8,
    stage: usize,
) -> Result<MartingaleJumps> {
    if stage == 0 || stage > ds.n_stages() {
        return Err(Error::invalid(format!("stage {stage} out of range")));
    }
    let w = &fit.working;
    let subjects = ds
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.arm == arm)
        .map(|(idx, r)| {
            let u = r.times[stage - 1];
            let risk = fit.risk(r);
            let compensator = w
                .cumhaz
                .jump_times
                .iter()
                .enumerate()
                .take_while(|(_, &t)| t <= u)
                .map(|(k, &t)| JumpPoint {
                    time: t,
                    size: -w.increment(k, risk),
                    k_left: w.survival_ge(t, risk),
                    k_right: w.survival_gt(t, risk),
                })
                .collect();
            let counting = (!r.indicators[stage - 1]).then(|| JumpPoint {
                time: u,
                size: 1.0,
                k_left: w.survival_ge(u, risk),
                k_right: w.survival_gt(u, risk),
            });
            SubjectJumps {
                record: idx,
                counting,
                compensator,
            }
        })
        .collect();
    Ok(MartingaleJumps {
        arm,
        stage,
        subjects,
    })
}
