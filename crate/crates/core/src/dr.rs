//! Stage-specific survival curves `S^{q,(a)}(t) = P(T^q(a) >= t)` by augmented
//! inverse probability of censoring weighting (AIPWCC), plus the Kaplan-Meier
//! plug-in comparator.
//!
//! Each subject contributes
//!
//! ```text
//! phi_i(t) = I_a I(U^q >= t) / (pi K(t-))
//!          - (I_a - pi) / pi * P(t)
//!          + I_a / pi * P(t) * sum_{u < t} dM_c(u) / (K(u-) P(u))
//! ```
//!
//! where `K` is the censoring survival, `P` the outcome working model for the
//! stage in arm `a`, and `M_c` the censoring martingale. IRT averages `phi`
//! with weight `1/N`; CRT uses `1/(M N_i)` (cluster level) or `1/sum N_i`
//! (individual level). All three share one code path, so singleton clusters
//! reproduce the IRT estimate bit for bit.

use serde::{Deserialize, Serialize};

use crate::covariates::ModelTerms;
use crate::data::{Dataset, DesignConfig, MultiStateRecord};
use crate::error::{Error, Result};
use crate::survival::{
    censoring_model_fit, fit_cox_working, km_fit, km_hazard, CensorModel,
    CensoringFit, SurvivalForm, WorkingModel,
};

/// Population over which stage survival is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Irt,
    CrtCluster,
    CrtIndividual,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Irt => "irt",
            Level::CrtCluster => "crt_cluster",
            Level::CrtIndividual => "crt_individual",
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome working model for `P(T^q >= t | Z, A = a)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeModel {
    /// Arm- and stage-specific Cox model with the given terms.
    Cox(Vec<String>),
    /// Arm- and stage-specific Kaplan-Meier (no covariates).
    KmArm,
    /// No covariate adjustment; same working model as [`OutcomeModel::KmArm`].
    None,
}

/// Time points at which curves are evaluated: 0, every stage event time and
/// every censoring time up to the largest tau, and each tau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.first() != Some(&0.0) {
            return Err(Error::invalid("time grid must start at 0"));
        }
        if points.iter().any(|t| !t.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("time grid must be finite and strictly increasing"));
        }
        Ok(TimeGrid { points })
    }

    pub fn from_dataset(ds: &Dataset, taus: &[f64]) -> Result<Self> {
        let tmax = taus.iter().copied().fold(0.0, f64::max);
        let mut pts = vec![0.0];
        for r in ds.records() {
            for (t, d) in r.times.iter().zip(&r.indicators) {
                if *d && *t <= tmax {
                    pts.push(*t);
                }
            }
            if r.censored() && r.follow_up() <= tmax {
                pts.push(r.follow_up());
            }
        }
        pts.extend_from_slice(taus);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        TimeGrid::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.points.last().expect("grid holds 0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CurveFlags {
    /// The curve increases somewhere on the grid.
    pub monotone_violated: bool,
    /// The curve leaves `[0, 1]` somewhere on the grid.
    pub range_violated: bool,
}

impl CurveFlags {
    fn of(v: &[f64]) -> Self {
        const EPS: f64 = 1e-12;
        CurveFlags {
            monotone_violated: v.windows(2).any(|w| w[1] > w[0] + EPS),
            range_violated: v.iter().any(|x| *x < -EPS || *x > 1.0 + EPS),
        }
    }
}

/// Stage survival curves for stages `1..=Q+2` in both arms, where stage `Q+2`
/// is the constant one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSurvivalSet {
    grid: TimeGrid,
    curves: Vec<[Vec<f64>; 2]>,
    flags: Vec<[CurveFlags; 2]>,
    /// Denominators raised to the censoring floor.
    pub truncations: usize,
}

impl StageSurvivalSet {
    /// Build from curves for stages `1..=Q+1`, indexed `[arm]`.
    pub fn from_curves(grid: TimeGrid, mut curves: Vec<[Vec<f64>; 2]>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::invalid("no stage curves"));
        }
        if curves.iter().flatten().any(|c| c.len() != grid.len()) {
            return Err(Error::invalid("curve length does not match the grid"));
        }
        let flags = curves
            .iter()
            .map(|[c0, c1]| [CurveFlags::of(c0), CurveFlags::of(c1)])
            .collect();
        let ones = vec![1.0; grid.len()];
        curves.push([ones.clone(), ones]);
        Ok(StageSurvivalSet {
            grid,
            curves,
            flags,
            truncations: 0,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of real stages `Q + 1`.
    pub fn n_stages(&self) -> usize {
        self.curves.len() - 1
    }

    /// Curve for stage `q` in `1..=Q+2`.
    pub fn curve(&self, q: usize, arm: u8) -> &[f64] {
        &self.curves[q - 1][arm as usize]
    }

    /// Flags for stage `q` in `1..=Q+1`.
    pub fn flags(&self, q: usize, arm: u8) -> CurveFlags {
        self.flags[q - 1][arm as usize]
    }

    pub fn any_monotone_violation(&self) -> bool {
        self.flags.iter().flatten().any(|f| f.monotone_violated)
    }

    pub fn any_range_violation(&self) -> bool {
        self.flags.iter().flatten().any(|f| f.range_violated)
    }

    /// Relabel arms, exchanging treatment and control.
    pub fn swap_arms(&self) -> Self {
        StageSurvivalSet {
            grid: self.grid.clone(),
            curves: self.curves.iter().map(|[a, b]| [b.clone(), a.clone()]).collect(),
            flags: self.flags.iter().map(|[a, b]| [*b, *a]).collect(),
            truncations: self.truncations,
        }
    }

    /// Least-squares projection of each curve onto non-increasing sequences
    /// in `[0, 1]`. Flags keep describing the raw curves.
    pub fn isotonic(&self) -> Self {
        let mut out = self.clone();
        let q1 = out.n_stages();
        for pair in out.curves.iter_mut().take(q1) {
            for c in pair.iter_mut() {
                *c = antitonic(c);
                for v in c.iter_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
            }
        }
        out
    }
}

/// Pool-adjacent-violators fit of a non-increasing sequence.
fn antitonic(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m2 <= m1 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// CRT stage survival at both estimand levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CrtStageSurvival {
    pub cluster: StageSurvivalSet,
    pub individual: StageSurvivalSet,
}

/// AIPWCC stage survival for an individually randomized trial.
pub fn estimate_stage_survival_irt(
    ds: &Dataset,
    config: &DesignConfig,
    outcome: &OutcomeModel,
    censor: &CensorModel,
) -> Result<StageSurvivalSet> {
    let w = vec![1.0 / ds.len() as f64; ds.len()];
    let mut sets = aipw(ds, config, outcome, censor, &[w])?;
    Ok(sets.remove(0))
}

/// AIPWCC stage survival for a cluster randomized trial; working models are
/// pooled over the clusters of each arm.
pub fn estimate_stage_survival_crt(
    ds: &Dataset,
    config: &DesignConfig,
    outcome: &OutcomeModel,
    censor: &CensorModel,
) -> Result<CrtStageSurvival> {
    let (wc, wi) = crt_weights(ds)?;
    let mut sets = aipw(ds, config, outcome, censor, &[wc, wi])?;
    let individual = sets.pop().expect("two weightings");
    let cluster = sets.pop().expect("two weightings");
    Ok(CrtStageSurvival {
        cluster,
        individual,
    })
}

/// Per-record weights `1/(M N_i)` and `1/sum N_i`.
fn crt_weights(ds: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    if ds.records().iter().any(|r| r.cluster_id.is_none()) {
        return Err(Error::invalid("cluster estimator requires cluster ids"));
    }
    let clusters = ds.clusters();
    for arm in [0u8, 1] {
        let found = clusters
            .iter()
            .filter(|c| ds.records()[c.members[0]].arm == arm)
            .count();
        if found < 2 {
            return Err(Error::TooFewClusters { arm, found });
        }
    }
    let m = clusters.len() as f64;
    let mut wc = vec![0.0; ds.len()];
    for c in &clusters {
        for &i in &c.members {
            wc[i] = 1.0 / (m * c.members.len() as f64);
        }
    }
    let wi = vec![1.0 / ds.len() as f64; ds.len()];
    Ok((wc, wi))
}

/// Kaplan-Meier plug-in stage survival. `CrtCluster` weights each subject by
/// `1/N_i`.
pub fn km_plug_in_stage_survival(
    ds: &Dataset,
    config: &DesignConfig,
    level: Level,
) -> Result<StageSurvivalSet> {
    config.validate()?;
    let grid = TimeGrid::from_dataset(ds, &config.tau_grid)?;
    let weights: Vec<f64> = match level {
        Level::Irt | Level::CrtIndividual => vec![1.0; ds.len()],
        Level::CrtCluster => {
            let mut w = vec![0.0; ds.len()];
            for c in ds.clusters() {
                for &i in &c.members {
                    w[i] = 1.0 / c.members.len() as f64;
                }
            }
            w
        }
    };
    let mut curves = Vec::with_capacity(ds.n_stages());
    for q in 0..ds.n_stages() {
        let mut pair: [Vec<f64>; 2] = Default::default();
        for arm in [0u8, 1] {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.records()[i].arm == arm).collect();
            let t: Vec<f64> = idx.iter().map(|&i| ds.records()[i].times[q]).collect();
            let d: Vec<bool> = idx.iter().map(|&i| ds.records()[i].indicators[q]).collect();
            let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            pair[arm as usize] = km_fit(&t, &d, &w)?.on_grid(grid.points());
        }
        curves.push(pair);
    }
    StageSurvivalSet::from_curves(grid, curves)
}

fn fit_outcome(
    ds: &Dataset,
    outcome: &OutcomeModel,
    terms: Option<&ModelTerms>,
    arm: u8,
    stage: usize,
) -> Result<WorkingModel> {
    let recs: Vec<&MultiStateRecord> = ds.records().iter().filter(|r| r.arm == arm).collect();
    let t: Vec<f64> = recs.iter().map(|r| r.times[stage]).collect();
    let d: Vec<bool> = recs.iter().map(|r| r.indicators[stage]).collect();
    match outcome {
        OutcomeModel::Cox(_) => {
            let terms = terms.expect("terms resolved for Cox").clone();
            match fit_cox_working(&t, &d, &recs, terms) {
                Err(Error::NoEvents) => Ok(WorkingModel::never()),
                other => other,
            }
        }
        OutcomeModel::KmArm | OutcomeModel::None => {
            Ok(WorkingModel::from_km(km_hazard(&t, &d, &vec![1.0; t.len()])?))
        }
    }
}

fn aipw(
    ds: &Dataset,
    config: &DesignConfig,
    outcome: &OutcomeModel,
    censor: &CensorModel,
    weights: &[Vec<f64>],
) -> Result<Vec<StageSurvivalSet>> {
    config.validate()?;
    let grid = TimeGrid::from_dataset(ds, &config.tau_grid)?;
    let censor_fits: [CensoringFit; 2] = match censor {
        CensorModel::KmPooled => {
            let f = censoring_model_fit(ds, 0, censor)?;
            [f.clone(), f]
        }
        _ => [
            censoring_model_fit(ds, 0, censor)?,
            censoring_model_fit(ds, 1, censor)?,
        ],
    };
    let outcome_terms = match outcome {
        OutcomeModel::Cox(spec) => Some(ModelTerms::parse(spec, ds.covariate_names())?),
        _ => None,
    };
    let n = ds.len();
    let mut per_weight: Vec<Vec<[Vec<f64>; 2]>> = vec![Vec::new(); weights.len()];
    let mut truncations = 0;
    for q in 0..ds.n_stages() {
        let mut pair: Vec<[Vec<f64>; 2]> = vec![Default::default(); weights.len()];
        for arm in [0u8, 1] {
            let model = fit_outcome(ds, outcome, outcome_terms.as_ref(), arm, q)?;
            let cfit = &censor_fits[arm as usize];
            let inputs = SweepInputs {
                in_arm: ds.records().iter().map(|r| r.arm == arm).collect(),
                u: ds.records().iter().map(|r| r.times[q]).collect(),
                observed: ds.records().iter().map(|r| r.indicators[q]).collect(),
                censor_risk: ds
                    .records()
                    .iter()
                    .map(|r| if r.arm == arm { cfit.risk(r) } else { 0.0 })
                    .collect(),
                outcome_risk: ds.records().iter().map(|r| model.risk(&r.covariates)).collect(),
            };
            debug_assert_eq!(inputs.u.len(), n);
            let out = sweep(
                grid.points(),
                config.pi(arm),
                config.censor_floor,
                &inputs,
                &cfit.working,
                &model,
                weights,
            );
            truncations += out.truncations;
            for (slot, curve) in pair.iter_mut().zip(out.curves) {
                slot[arm as usize] = curve;
            }
        }
        for (acc, p) in per_weight.iter_mut().zip(pair) {
            acc.push(p);
        }
    }
    per_weight
        .into_iter()
        .map(|curves| {
            let mut s = StageSurvivalSet::from_curves(grid.clone(), curves)?;
            s.truncations = truncations;
            Ok(s)
        })
        .collect()
}

struct SweepInputs {
    in_arm: Vec<bool>,
    u: Vec<f64>,
    observed: Vec<bool>,
    censor_risk: Vec<f64>,
    outcome_risk: Vec<f64>,
}

struct SweepOutput {
    curves: Vec<Vec<f64>>,
    truncations: usize,
}

/// Running survival values for a working model, updated jump by jump.
struct Tracker<'a> {
    model: &'a WorkingModel,
    next: usize,
    cum: f64,
    prod: f64,
}

impl<'a> Tracker<'a> {
    fn new(model: &'a WorkingModel) -> Self {
        Tracker {
            model,
            next: 0,
            cum: 0.0,
            prod: 1.0,
        }
    }

    fn next_time(&self) -> f64 {
        self.model
            .cumhaz
            .jump_times
            .get(self.next)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    /// Apply the pending jump to `values` (for subjects where `active`).
    fn advance(&mut self, values: &mut [f64], risk: &[f64], active: Option<&[bool]>) {
        let h = self.model.cumhaz.increments[self.next];
        self.next += 1;
        match self.model.form {
            SurvivalForm::Exponential => {
                self.cum += h;
                for i in 0..values.len() {
                    if active.is_none_or(|a| a[i]) {
                        values[i] = (-risk[i] * self.cum).exp();
                    }
                }
            }
            SurvivalForm::ProductLimit => {
                self.prod *= 1.0 - h;
                values.fill(self.prod);
            }
        }
    }
}

/// One pass over the grid for a single (stage, arm), accumulating the
/// martingale integral per subject in time order.
fn sweep(
    grid: &[f64],
    pi: f64,
    floor: f64,
    inp: &SweepInputs,
    censor: &WorkingModel,
    outcome: &WorkingModel,
    weights: &[Vec<f64>],
) -> SweepOutput {
    let n = inp.u.len();
    let mut k = vec![1.0f64; n];
    let mut p = vec![1.0f64; n];
    let mut g = vec![0.0; n];
    let mut truncations = 0usize;
    let mut ctrack = Tracker::new(censor);
    let mut otrack = Tracker::new(outcome);

    let mut exits: Vec<usize> = (0..n).filter(|&i| inp.in_arm[i]).collect();
    exits.sort_by(|&a, &b| inp.u[a].total_cmp(&inp.u[b]));
    let mut next_exit = 0;

    // Coefficient of P(t) in the second term: -(I_a - pi)/pi.
    let c2: Vec<f64> = inp
        .in_arm
        .iter()
        .map(|&a| if a { (pi - 1.0) / pi } else { 1.0 })
        .collect();

    let mut curves: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); weights.len()];
    let mut last: Vec<f64> = vec![1.0; weights.len()];

    for (l, &t) in grid.iter().enumerate() {
        let mut dirty = false;
        loop {
            let te = exits.get(next_exit).map_or(f64::INFINITY, |&i| inp.u[i]);
            let next = ctrack.next_time().min(otrack.next_time()).min(te);
            if next >= t {
                break;
            }
            dirty = true;
            let c_jump = ctrack.next_time() == next;
            let kidx = ctrack.next;
            // K(u+) for subject i; the compensator jump is d(1/K), which
            // telescopes exactly against the weight of the counting jump.
            let k_after = |i: usize, k: &[f64]| {
                if c_jump {
                    k[i] * censor.jump_factor(kidx, inp.censor_risk[i])
                } else {
                    k[i]
                }
            };
            if c_jump {
                for i in 0..n {
                    if inp.in_arm[i] && inp.u[i] >= next {
                        let kp = k_after(i, &k);
                        let pd = p[i].max(floor);
                        truncations += usize::from(kp < floor) + usize::from(p[i] < floor);
                        g[i] -= (1.0 / kp.max(floor) - 1.0 / k[i].max(floor)) / pd;
                    }
                }
            }
            while next_exit < exits.len() && inp.u[exits[next_exit]] == next {
                let i = exits[next_exit];
                if !inp.observed[i] {
                    let kp = k_after(i, &k);
                    let pd = p[i].max(floor);
                    truncations += usize::from(kp < floor) + usize::from(p[i] < floor);
                    g[i] += 1.0 / (kp.max(floor) * pd);
                }
                next_exit += 1;
            }
            if c_jump {
                ctrack.advance(&mut k, &inp.censor_risk, Some(&inp.in_arm));
            }
            if otrack.next_time() == next {
                otrack.advance(&mut p, &inp.outcome_risk, None);
            }
        }

        if l == 0 {
            // No jumps precede t = 0, so every contribution is exactly one.
            for (c, v) in curves.iter_mut().zip(last.iter_mut()) {
                *v = 1.0;
                c.push(1.0);
            }
            continue;
        }
        if dirty {
            let mut acc = vec![0.0; weights.len()];
            for i in 0..n {
                let mut phi = c2[i] * p[i];
                if inp.in_arm[i] {
                    phi += p[i] * g[i] / pi;
                    if inp.u[i] >= t {
                        truncations += usize::from(k[i] < floor);
                        phi += 1.0 / (pi * k[i].max(floor));
                    }
                }
                for (a, w) in acc.iter_mut().zip(weights) {
                    *a += w[i] * phi;
                }
            }
            last = acc;
        }
        for (c, v) in curves.iter_mut().zip(&last) {
            c.push(*v);
        }
    }
    SweepOutput {
        curves,
        truncations,
    }
}
