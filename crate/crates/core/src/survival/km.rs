use super::{StepCumHaz, StepSurvCurve};
use crate::error::{Error, Result};

/// Weighted discrete hazard `d_w(u) / n_w(u)` at each distinct event time,
/// with risk set `{T >= u}`. Weights are rescaled by their maximum, which
/// leaves the hazard unchanged and makes equal weights reproduce the
/// unweighted fit exactly.
pub fn km_hazard(times: &[f64], events: &[bool], weights: &[f64]) -> Result<StepCumHaz> {
    if times.len() != events.len() || times.len() != weights.len() {
        return Err(Error::invalid("times, events and weights differ in length"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("survival times must be finite and non-negative"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let wmax = weights.iter().copied().fold(0.0, f64::max);
    if wmax == 0.0 {
        return Err(Error::invalid("all weights are zero"));
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    // Walk from the largest time down so each risk-set total is a plain sum.
    let mut at_risk = 0.0;
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    let mut k = order.len();
    while k > 0 {
        let t = times[order[k - 1]];
        let mut d = 0.0;
        while k > 0 && times[order[k - 1]] == t {
            let i = order[k - 1];
            let w = weights[i] / wmax;
            at_risk += w;
            if events[i] {
                d += w;
            }
            k -= 1;
        }
        if d > 0.0 {
            jumps.push((t, d / at_risk));
        }
    }
    jumps.reverse();
    Ok(StepCumHaz {
        jump_times: jumps.iter().map(|j| j.0).collect(),
        increments: jumps.iter().map(|j| j.1).collect(),
    })
}

/// Weighted Kaplan-Meier estimate of `P(T >= t)`.
pub fn km_fit(times: &[f64], events: &[bool], weights: &[f64]) -> Result<StepSurvCurve> {
    let h = km_hazard(times, events, weights)?;
    let mut s = 1.0;
    let values_after = h
        .increments
        .iter()
        .map(|d| {
            s *= 1.0 - d;
            s
        })
        .collect();
    Ok(StepSurvCurve {
        jump_times: h.jump_times,
        values_after,
    })
}
