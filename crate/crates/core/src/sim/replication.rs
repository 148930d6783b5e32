//! Monte Carlo replication harness and operating-characteristic metrics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{derive_seed, Scenario};
use super::truth::TruthTable;
use crate::data::{Design, DesignConfig, EstimandLevel};
use crate::dr::{Level, OutcomeModel};
use crate::error::{Error, Result};
use crate::jackknife::JackknifePlan;
use crate::pipeline::{analyze, EstimatorSpec};
use crate::survival::CensorModel;

pub const METHOD_NAMES: [&str; 7] = ["o1c1", "o1c0", "o0c1", "o0c0", "o1kp", "o0kp", "km"];

fn terms(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Working-model terms `(outcome correct, outcome misspecified, censoring
/// correct, censoring misspecified)` for the built-in scenarios.
fn design_terms(design: Design) -> [Vec<String>; 4] {
    match design {
        Design::Irt => [
            terms(&["Z1", "Z2", "Z1:Z2"]),
            terms(&["Z1", "Z2"]),
            terms(&["Z1", "Z2", "Z1:Z2"]),
            terms(&["Z1", "Z2"]),
        ],
        Design::Crt => [
            terms(&["W1", "W2", "Z1", "Z2", "N", "Z1:N"]),
            terms(&["W1", "W2", "Z1", "Z2"]),
            terms(&["W1", "W2", "Z1", "Z2"]),
            terms(&["W1", "W2", "Z2"]),
        ],
    }
}

/// Built-in estimator by name: `o{1,0}c{1,0}` (Cox outcome and censoring
/// models, correct or misspecified), `o{1,0}kp` (pooled Kaplan-Meier
/// censoring) and `km` (Kaplan-Meier plug-in).
pub fn standard_method(design: Design, name: &str) -> Result<EstimatorSpec> {
    let [o1, o0, c1, c0] = design_terms(design);
    let (outcome, censor) = match name {
        "km" => return Ok(EstimatorSpec::km_plug_in(name)),
        "o1c1" => (o1, CensorModel::Cox(c1)),
        "o1c0" => (o1, CensorModel::Cox(c0)),
        "o0c1" => (o0, CensorModel::Cox(c1)),
        "o0c0" => (o0, CensorModel::Cox(c0)),
        "o1kp" => (o1, CensorModel::KmPooled),
        "o0kp" => (o0, CensorModel::KmPooled),
        _ => {
            return Err(Error::invalid(format!(
                "unknown method `{name}`; valid methods: {}",
                METHOD_NAMES.join(", ")
            )))
        }
    };
    Ok(EstimatorSpec::dr(name, OutcomeModel::Cox(outcome), censor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub reps: usize,
    pub taus: Vec<f64>,
    /// Jackknife groups for IRT; `None` skips inference.
    pub jackknife_groups: Option<usize>,
    pub alpha: f64,
    pub censor_floor: f64,
    pub estimand_level: EstimandLevel,
    /// Replicates are numbered from this offset.
    pub first_rep: u64,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        ReplicationConfig {
            reps: 300,
            taus: vec![1.0, 1.5, 2.0],
            jackknife_groups: Some(100),
            alpha: 0.05,
            censor_floor: 1e-8,
            estimand_level: EstimandLevel::Both,
            first_rep: 0,
        }
    }
}

/// Operating characteristics of one estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub truth: f64,
    pub mean: f64,
    /// `100 |mean - truth| / |truth|`.
    pub pbias: f64,
    /// Mean jackknife standard error (NaN without inference).
    pub aese: f64,
    pub mcsd: f64,
    /// Coverage of the confidence interval (NaN without inference).
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub level: Level,
    pub method: String,
    pub tau: f64,
    pub xi1: Metric,
    pub xi0: Metric,
    pub delta: Metric,
    pub reps: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// First error message per failed (method, replicate).
    pub diagnostics: Vec<String>,
}

impl MetricReport {
    pub fn row(&self, method: &str, level: Level, tau: f64) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.level == level && r.tau == tau)
    }

    /// Largest fraction of failed replicates over methods.
    pub fn worst_failure_fraction(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.failed as f64 / (r.reps + r.failed).max(1) as f64)
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["level".to_string(), "method".into(), "tau".into()];
        for est in ["xi1", "xi0", "delta"] {
            for m in ["truth", "mean", "pbias", "aese", "mcsd", "cp"] {
                header.push(format!("{est}_{m}"));
            }
        }
        header.extend(["reps".to_string(), "failed".into()]);
        w.write_record(&header)?;
        let fmt = |v: f64| if v.is_nan() { "NA".to_string() } else { v.to_string() };
        for r in &self.rows {
            let mut row = vec![r.level.to_string(), r.method.clone(), r.tau.to_string()];
            for m in [&r.xi1, &r.xi0, &r.delta] {
                row.extend([m.truth, m.mean, m.pbias, m.aese, m.mcsd, m.cp].map(fmt));
            }
            row.extend([r.reps.to_string(), r.failed.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One replicate's estimate of the three estimands with optional intervals.
#[derive(Debug, Clone, Copy)]
struct Draw {
    values: [f64; 3],
    se: [f64; 3],
    ci: [(f64, f64); 3],
}

fn metric(truth: f64, draws: &[Draw], j: usize) -> Metric {
    let n = draws.len() as f64;
    if draws.is_empty() {
        return Metric {
            truth,
            mean: f64::NAN,
            pbias: f64::NAN,
            aese: f64::NAN,
            mcsd: f64::NAN,
            cp: f64::NAN,
        };
    }
    let mean = draws.iter().map(|d| d.values[j]).sum::<f64>() / n;
    let mcsd = if draws.len() > 1 {
        (draws.iter().map(|d| (d.values[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let aese = draws.iter().map(|d| d.se[j]).sum::<f64>() / n;
    let cp = draws
        .iter()
        .map(|d| {
            let (lo, hi) = d.ci[j];
            if lo.is_nan() {
                f64::NAN
            } else {
                f64::from(u8::from(lo <= truth && truth <= hi))
            }
        })
        .sum::<f64>()
        / n;
    Metric {
        truth,
        mean,
        pbias: 100.0 * (mean - truth).abs() / truth.abs(),
        aese,
        mcsd,
        cp,
    }
}

type RepOutcome = Vec<Result<Vec<(Level, f64, Draw)>>>;

/// Simulate `cfg.reps` datasets, apply every method to each and summarize
/// against `truth`. Replicate `r` uses data stream `first_rep + r` of the
/// scenario seed and a jackknife seed derived from it.
pub fn run_replication(
    scenario: &Scenario,
    methods: &[EstimatorSpec],
    cfg: &ReplicationConfig,
    truth: &TruthTable,
) -> Result<MetricReport> {
    if truth.design != scenario.design() {
        return Err(Error::invalid("truth table design does not match the scenario"));
    }
    let config = DesignConfig {
        pi1: scenario.pi1(),
        tau_grid: cfg.taus.clone(),
        censor_floor: cfg.censor_floor,
        estimand_level: cfg.estimand_level,
    };
    config.validate()?;
    let per_rep: Vec<Result<RepOutcome>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| {
            let rep = cfg.first_rep + r;
            let ds = scenario.simulate(rep)?;
            let plan = cfg.jackknife_groups.map(|k| {
                let mut p = JackknifePlan::for_design(ds.design(), k, derive_seed(scenario.seed(), rep));
                p.alpha = cfg.alpha;
                p
            });
            Ok(methods
                .iter()
                .map(|m| {
                    let a = analyze(&ds, &config, m, plan.as_ref())?;
                    Ok(a.levels
                        .iter()
                        .flat_map(|l| {
                            l.estimates.iter().map(move |e| {
                                let xi_se = e.xi_se.unwrap_or([f64::NAN; 2]);
                                let nan = (f64::NAN, f64::NAN);
                                let xi_ci = e.xi_ci.unwrap_or([nan; 2]);
                                (
                                    l.level,
                                    e.tau,
                                    Draw {
                                        values: [e.xi1, e.xi0, e.delta],
                                        se: [xi_se[0], xi_se[1], e.se.unwrap_or(f64::NAN)],
                                        ci: [xi_ci[0], xi_ci[1], e.ci.unwrap_or(nan)],
                                    },
                                )
                            })
                        })
                        .collect())
                })
                .collect())
        })
        .collect();

    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let per_rep: Vec<RepOutcome> = per_rep.into_iter().collect::<Result<_>>()?;
    for (mi, m) in methods.iter().enumerate() {
        let mut failed = 0;
        for (r, rep) in per_rep.iter().enumerate() {
            if let Err(e) = &rep[mi] {
                failed += 1;
                diagnostics.push(format!("{} replicate {}: {e}", m.name, cfg.first_rep + r as u64));
            }
        }
        let ok: Vec<&Vec<(Level, f64, Draw)>> = per_rep.iter().filter_map(|rep| rep[mi].as_ref().ok()).collect();
        let Some(first) = ok.first() else {
            continue;
        };
        for (slot, &(level, tau, _)) in first.iter().enumerate() {
            let point = truth.point(level, tau).ok_or_else(|| {
                Error::invalid(format!("truth table lacks level {level} at tau {tau}"))
            })?;
            let draws: Vec<Draw> = ok.iter().map(|v| v[slot].2).collect();
            rows.push(MetricRow {
                level,
                method: m.name.clone(),
                tau,
                xi1: metric(point.xi1, &draws, 0),
                xi0: metric(point.xi0, &draws, 1),
                delta: metric(point.delta, &draws, 2),
                reps: draws.len(),
                failed,
            });
        }
    }
    Ok(MetricReport { rows, diagnostics })
}
