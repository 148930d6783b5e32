//! End-to-end estimation: stage curves, RMT-IF per horizon and level, and
//! jackknife inference that refits every working model on each replicate.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design, DesignConfig, EstimandLevel};
use crate::dr::{
    estimate_stage_survival_crt, estimate_stage_survival_irt, km_plug_in_stage_survival,
    CurveFlags, Level, OutcomeModel, StageSurvivalSet,
};
use crate::error::Result;
use crate::jackknife::{run_blocks, screen_failures, summarize, JackknifePlan};
use crate::functional::{rmtif_with, Integration, RmtifEstimate};
use crate::survival::CensorModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Doubly robust AIPWCC stage curves.
    Dr {
        outcome: OutcomeModel,
        censor: CensorModel,
    },
    /// Kaplan-Meier plug-in stage curves.
    KmPlugIn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub name: String,
    pub method: Method,
    #[serde(default)]
    pub integration: Integration,
    /// Project curves onto monotone sequences in `[0, 1]` before integrating.
    #[serde(default)]
    pub isotonic: bool,
}

impl EstimatorSpec {
    pub fn dr(name: &str, outcome: OutcomeModel, censor: CensorModel) -> Self {
        EstimatorSpec {
            name: name.to_string(),
            method: Method::Dr { outcome, censor },
            integration: Integration::default(),
            isotonic: false,
        }
    }

    pub fn km_plug_in(name: &str) -> Self {
        EstimatorSpec {
            name: name.to_string(),
            method: Method::KmPlugIn,
            integration: Integration::default(),
            isotonic: false,
        }
    }
}

/// Estimand levels reported for a dataset.
pub fn levels_for(design: Design, level: EstimandLevel) -> Vec<Level> {
    match (design, level) {
        (Design::Irt, _) => vec![Level::Irt],
        (Design::Crt, EstimandLevel::Cluster) => vec![Level::CrtCluster],
        (Design::Crt, EstimandLevel::Individual) => vec![Level::CrtIndividual],
        (Design::Crt, EstimandLevel::Both) => vec![Level::CrtCluster, Level::CrtIndividual],
    }
}

/// Stage survival curves for each requested level.
pub fn stage_curves(
    ds: &Dataset,
    config: &DesignConfig,
    spec: &EstimatorSpec,
) -> Result<Vec<(Level, StageSurvivalSet)>> {
    let levels = levels_for(ds.design(), config.estimand_level);
    let mut out = match (&spec.method, ds.design()) {
        (Method::Dr { outcome, censor }, Design::Irt) => {
            vec![(Level::Irt, estimate_stage_survival_irt(ds, config, outcome, censor)?)]
        }
        (Method::Dr { outcome, censor }, Design::Crt) => {
            let s = estimate_stage_survival_crt(ds, config, outcome, censor)?;
            levels
                .iter()
                .map(|&l| match l {
                    Level::CrtCluster => (l, s.cluster.clone()),
                    _ => (l, s.individual.clone()),
                })
                .collect()
        }
        (Method::KmPlugIn, _) => levels
            .iter()
            .map(|&l| Ok((l, km_plug_in_stage_survival(ds, config, l)?)))
            .collect::<Result<_>>()?,
    };
    if spec.isotonic {
        for (_, s) in &mut out {
            *s = s.isotonic();
        }
    }
    Ok(out)
}

/// Point estimates for one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimates {
    pub level: Level,
    pub estimates: Vec<RmtifEstimate>,
    /// `[arm 0, arm 1]` flags for stages `1..=Q+1`.
    pub flags: Vec<[CurveFlags; 2]>,
    pub truncations: usize,
}

pub fn point_estimates(
    ds: &Dataset,
    config: &DesignConfig,
    spec: &EstimatorSpec,
) -> Result<Vec<LevelEstimates>> {
    stage_curves(ds, config, spec)?
        .into_iter()
        .map(|(level, surv)| {
            let estimates = config
                .tau_grid
                .iter()
                .map(|&t| rmtif_with(&surv, t, level, spec.integration))
                .collect::<Result<_>>()?;
            let flags = (1..=surv.n_stages())
                .map(|q| [surv.flags(q, 0), surv.flags(q, 1)])
                .collect();
            Ok(LevelEstimates {
                level,
                estimates,
                flags,
                truncations: surv.truncations,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeInfo {
    pub replicates: usize,
    pub failed: usize,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub levels: Vec<LevelEstimates>,
    pub jackknife: Option<JackknifeInfo>,
}

impl Analysis {
    pub fn level(&self, level: Level) -> Option<&LevelEstimates> {
        self.levels.iter().find(|l| l.level == level)
    }
}

/// Point estimates, plus jackknife standard errors and t intervals when a plan
/// is given. Standard errors of `xi_1`, `xi_0` are kept per estimate in
/// `xi_se`.
pub fn analyze(
    ds: &Dataset,
    config: &DesignConfig,
    spec: &EstimatorSpec,
    plan: Option<&JackknifePlan>,
) -> Result<Analysis> {
    let mut levels = point_estimates(ds, config, spec)?;
    let Some(plan) = plan else {
        return Ok(Analysis {
            levels,
            jackknife: None,
        });
    };
    let blocks = plan.blocks(ds)?;
    let results = run_blocks(&blocks, |drop| {
        let sub = ds.without(drop)?;
        let est = point_estimates(&sub, config, spec)?;
        Ok(est
            .iter()
            .flat_map(|l| l.estimates.iter().map(|e| [e.xi1, e.xi0]))
            .collect::<Vec<_>>())
    });
    let (reps, failed) = screen_failures(results, plan.max_failure_fraction)?;
    let df = plan.df(reps.len());
    let mut slot = 0;
    for l in &mut levels {
        for e in &mut l.estimates {
            let column: Vec<[f64; 2]> = reps.iter().map(|r| r[slot]).collect();
            let jk = summarize([e.xi1, e.xi0], &column, df, plan.alpha)?;
            e.se = Some(jk.se_delta);
            e.ci = Some(jk.ci_delta);
            e.df = Some(df);
            e.xi_se = Some(jk.se_xi);
            e.xi_ci = Some(jk.ci_xi);
            slot += 1;
        }
    }
    Ok(Analysis {
        levels,
        jackknife: Some(JackknifeInfo {
            replicates: reps.len(),
            failed,
            df,
        }),
    })
}
