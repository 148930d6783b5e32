use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design, MultiStateRecord};
use crate::error::{Error, Result};

/// ChaCha8 generator for `stream` of a master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic child seed (SplitMix64 of `seed` mixed with `index`).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Exponential draw with the given rate; infinite for a zero rate.
pub(crate) fn exp_draw<R: RngCore>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// `base_a * exp(coef_arm a + coef_z1 Z1 + coef_z2 Z2 + coef_z1z2 Z1 Z2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmHazard {
    pub base_treated: f64,
    pub base_control: f64,
    pub coef_arm: f64,
    pub coef_z1: f64,
    pub coef_z2: f64,
    pub coef_z1z2: f64,
}

impl ArmHazard {
    pub fn rate(&self, arm: u8, z1: f64, z2: f64) -> f64 {
        let base = if arm == 1 { self.base_treated } else { self.base_control };
        base * (self.coef_arm * f64::from(arm)
            + self.coef_z1 * z1
            + self.coef_z2 * z2
            + self.coef_z1z2 * z1 * z2)
            .exp()
    }

    fn constant(rate: f64) -> Self {
        ArmHazard {
            base_treated: rate,
            base_control: rate,
            coef_arm: 0.0,
            coef_z1: 0.0,
            coef_z2: 0.0,
            coef_z1z2: 0.0,
        }
    }
}

/// Three-stage illness-death type process: non-fatal event, progression a
/// gap time later, and death, with exponential times given `(A, Z1, Z2)`,
/// `Z1 ~ N(0, 1)`, `Z2 ~ Bernoulli(0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrtScenario {
    pub n: usize,
    pub pi1: f64,
    pub seed: u64,
    pub stage1: ArmHazard,
    pub gap: ArmHazard,
    pub terminal: ArmHazard,
    pub censoring: ArmHazard,
}

impl Default for IrtScenario {
    fn default() -> Self {
        IrtScenario {
            n: 2000,
            pi1: 0.5,
            seed: 20_240_601,
            stage1: ArmHazard {
                base_treated: 0.2,
                base_control: 0.4,
                coef_arm: -1.0,
                coef_z1: 1.0,
                coef_z2: 0.5,
                coef_z1z2: 1.0,
            },
            gap: ArmHazard {
                base_treated: 0.5,
                base_control: 1.0,
                coef_arm: -1.5,
                coef_z1: 1.0,
                coef_z2: 0.5,
                coef_z1z2: 0.5,
            },
            terminal: ArmHazard {
                base_treated: 0.1,
                base_control: 0.15,
                coef_arm: -1.0,
                coef_z1: 0.5,
                coef_z2: 1.0,
                coef_z1z2: 1.0,
            },
            censoring: ArmHazard {
                base_treated: 0.26,
                base_control: 0.26,
                coef_arm: 2.0,
                coef_z1: -1.5,
                coef_z2: -1.0,
                coef_z1z2: -2.0,
            },
        }
    }
}

/// Latent event and censoring times for one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentTimes {
    pub stage1: f64,
    pub gap: f64,
    pub terminal: f64,
    pub censoring: f64,
}

impl LatentTimes {
    /// Stage entry times `(T^1, T^2, T^3)`.
    pub fn stage_times(&self) -> [f64; 3] {
        let t3 = self.terminal;
        [self.stage1.min(t3), (self.stage1 + self.gap).min(t3), t3]
    }
}

fn observe(stage: &[f64], c: f64) -> (Vec<f64>, Vec<bool>) {
    stage
        .iter()
        .map(|&t| if t <= c { (t, true) } else { (c, false) })
        .unzip()
}

impl IrtScenario {
    /// Same outcome model with censoring independent of arm and covariates.
    pub fn with_independent_censoring(mut self, rate: f64) -> Self {
        self.censoring = ArmHazard::constant(rate);
        self
    }

    pub fn without_censoring(self) -> Self {
        self.with_independent_censoring(0.0)
    }

    pub fn draw_latent<R: RngCore>(&self, rng: &mut R, arm: u8, z1: f64, z2: f64) -> LatentTimes {
        LatentTimes {
            stage1: exp_draw(rng, self.stage1.rate(arm, z1, z2)),
            gap: exp_draw(rng, self.gap.rate(arm, z1, z2)),
            terminal: exp_draw(rng, self.terminal.rate(arm, z1, z2)),
            censoring: exp_draw(rng, self.censoring.rate(arm, z1, z2)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return Err(Error::invalid("IRT scenario needs n >= 4 and pi1 in (0, 1)"));
        }
        Ok(())
    }

    pub fn simulate_with<R: RngCore>(&self, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        let mut records = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let arm = u8::from(rng.random_bool(self.pi1));
            let z1: f64 = StandardNormal.sample(rng);
            let z2 = f64::from(u8::from(rng.random_bool(0.5)));
            let lat = self.draw_latent(rng, arm, z1, z2);
            let (times, indicators) = observe(&lat.stage_times(), lat.censoring);
            records.push(MultiStateRecord {
                subject_id: format!("s{i:05}"),
                cluster_id: None,
                arm,
                covariates: vec![z1, z2],
                times,
                indicators,
            });
        }
        Dataset::new(records, 3, vec!["Z1".into(), "Z2".into()], Design::Irt)
    }

    /// Replicate `rep` drawn from this scenario's seed.
    pub fn simulate(&self, rep: u64) -> Result<Dataset> {
        self.simulate_with(&mut stream_rng(self.seed, rep))
    }
}

/// Cluster-level hazard
/// `(N/mult_ref) base_a B exp(coef_arm a + w1 W1 + w2 W2 + z1 Z1 + z2 Z2
///  + z1_size Z1 N/size_ref + size N/size_ref)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrtHazard {
    pub base_treated: f64,
    pub base_control: f64,
    pub coef_arm: f64,
    pub w1: f64,
    pub w2: f64,
    pub z1: f64,
    pub z2: f64,
    pub z1_size: f64,
    pub size: f64,
}

/// Member covariates of a cluster trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrtCovariates {
    pub w1: f64,
    pub w2: f64,
    pub z1: f64,
    pub z2: f64,
    /// Cluster size.
    pub n: f64,
}

/// Censoring hazard `base R exp(coef_arm a + w1 W1 + w2 W2 + z1 Z1 + z2 Z2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrtCensorHazard {
    pub base: f64,
    pub coef_arm: f64,
    pub w1: f64,
    pub w2: f64,
    pub z1: f64,
    pub z2: f64,
}

/// Cluster randomized trial with gamma frailties shared within clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrtScenario {
    pub clusters: usize,
    pub size_min: usize,
    pub size_max: usize,
    /// All clusters get this size when set.
    pub fixed_size: Option<usize>,
    pub pi1: f64,
    pub seed: u64,
    /// Reference size inside the exponent (`N / size_ref`).
    pub size_ref: f64,
    /// Reference size of the multiplicative factor (`N / mult_ref`).
    pub mult_ref: f64,
    /// `W2 ~ N(N / size_ref, w2_sd)`.
    pub w2_sd: f64,
    /// `Z1 ~ N(ln(N) / z1_log_div, 1)`.
    pub z1_log_div: f64,
    /// Outcome frailty `B ~ Gamma(theta, rate theta)` by arm.
    pub frailty_treated: f64,
    pub frailty_control: f64,
    /// Censoring frailty `R ~ Gamma(theta, rate theta)`.
    pub frailty_censoring: f64,
    pub stage1: CrtHazard,
    pub gap: CrtHazard,
    pub terminal: CrtHazard,
    pub censoring: CrtCensorHazard,
}

impl Default for CrtScenario {
    fn default() -> Self {
        CrtScenario {
            clusters: 60,
            size_min: 10,
            size_max: 90,
            fixed_size: None,
            pi1: 0.5,
            seed: 20_240_602,
            size_ref: 50.0,
            mult_ref: 100.0,
            w2_sd: 1.5,
            z1_log_div: 5.0,
            frailty_treated: 2.0,
            frailty_control: 4.5,
            frailty_censoring: 9.5,
            stage1: CrtHazard {
                base_treated: 0.01,
                base_control: 0.005,
                coef_arm: -1.0,
                w1: 1.0,
                w2: 2.0,
                z1: 1.0,
                z2: -0.6,
                z1_size: 1.0,
                size: 1.0,
            },
            gap: CrtHazard {
                base_treated: 2.0,
                base_control: 1.0,
                coef_arm: -0.5,
                w1: -1.0,
                w2: 1.0,
                z1: 2.0,
                z2: -1.0,
                z1_size: -1.0,
                size: 1.0,
            },
            terminal: CrtHazard {
                base_treated: 0.08,
                base_control: 0.04,
                coef_arm: -2.0,
                w1: -1.0,
                w2: 1.0,
                z1: 2.0,
                z2: -1.0,
                z1_size: -1.0,
                size: 1.0,
            },
            censoring: CrtCensorHazard {
                base: 0.13,
                coef_arm: 1.0,
                w1: 0.5,
                w2: -0.5,
                z1: -0.8,
                z2: 0.5,
            },
        }
    }
}

/// Kendall's tau of the gamma frailty model with parameter `theta`.
pub fn kendall_tau(theta: f64) -> f64 {
    1.0 / (2.0 * theta + 1.0)
}

impl CrtScenario {
    pub fn validate(&self) -> Result<()> {
        if self.clusters < 4 || !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return Err(Error::invalid("CRT scenario needs at least 4 clusters and pi1 in (0, 1)"));
        }
        if self.fixed_size == Some(0) || self.size_min == 0 || self.size_min > self.size_max {
            return Err(Error::invalid("cluster sizes must be positive with size_min <= size_max"));
        }
        Ok(())
    }

    pub(crate) fn draw_size<R: RngCore>(&self, rng: &mut R) -> usize {
        self.fixed_size
            .unwrap_or_else(|| rng.random_range(self.size_min..=self.size_max))
    }

    pub(crate) fn frailty<R: RngCore>(theta: f64, rng: &mut R) -> f64 {
        Gamma::new(theta, 1.0 / theta)
            .expect("positive frailty parameter")
            .sample(rng)
    }

    /// Cluster-level `(W1, W2)` for a cluster of size `n`.
    pub(crate) fn draw_cluster_covariates<R: RngCore>(&self, rng: &mut R, n: usize) -> (f64, f64) {
        let w1 = f64::from(u8::from(rng.random_bool(0.5)));
        let w2 = Normal::new(n as f64 / self.size_ref, self.w2_sd)
            .expect("finite normal")
            .sample(rng);
        (w1, w2)
    }

    pub(crate) fn draw_member<R: RngCore>(&self, rng: &mut R, n: usize, w: (f64, f64)) -> CrtCovariates {
        let nf = n as f64;
        let z1 = Normal::new(nf.ln() / self.z1_log_div, 1.0)
            .expect("finite normal")
            .sample(rng);
        let z2 = f64::from(u8::from(rng.random_bool(0.5)));
        CrtCovariates {
            w1: w.0,
            w2: w.1,
            z1,
            z2,
            n: nf,
        }
    }

    /// Outcome hazard rate given covariates and outcome frailty `b`.
    pub fn rate(&self, h: &CrtHazard, arm: u8, x: &CrtCovariates, b: f64) -> f64 {
        let base = if arm == 1 { h.base_treated } else { h.base_control };
        let s = x.n / self.size_ref;
        x.n / self.mult_ref
            * base
            * b
            * (h.coef_arm * f64::from(arm)
                + h.w1 * x.w1
                + h.w2 * x.w2
                + h.z1 * x.z1
                + h.z2 * x.z2
                + h.z1_size * x.z1 * s
                + h.size * s)
                .exp()
    }

    pub fn censoring_rate(&self, arm: u8, x: &CrtCovariates, r: f64) -> f64 {
        let c = &self.censoring;
        c.base
            * r
            * (c.coef_arm * f64::from(arm) + c.w1 * x.w1 + c.w2 * x.w2 + c.z1 * x.z1 + c.z2 * x.z2)
                .exp()
    }

    /// Rates `(stage 1, gap, terminal)` given frailty.
    pub fn rates(&self, arm: u8, x: &CrtCovariates, b: f64) -> [f64; 3] {
        [
            self.rate(&self.stage1, arm, x, b),
            self.rate(&self.gap, arm, x, b),
            self.rate(&self.terminal, arm, x, b),
        ]
    }

    pub fn simulate_with<R: RngCore>(&self, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        let mut records = Vec::new();
        for c in 0..self.clusters {
            let n = self.draw_size(rng);
            let arm = u8::from(rng.random_bool(self.pi1));
            let theta = if arm == 1 { self.frailty_treated } else { self.frailty_control };
            let b = Self::frailty(theta, rng);
            let r = Self::frailty(self.frailty_censoring, rng);
            let w = self.draw_cluster_covariates(rng, n);
            for j in 0..n {
                let x = self.draw_member(rng, n, w);
                let [l1, lu, l3] = self.rates(arm, &x, b);
                let lat = LatentTimes {
                    stage1: exp_draw(rng, l1),
                    gap: exp_draw(rng, lu),
                    terminal: exp_draw(rng, l3),
                    censoring: exp_draw(rng, self.censoring_rate(arm, &x, r)),
                };
                let (times, indicators) = observe(&lat.stage_times(), lat.censoring);
                records.push(MultiStateRecord {
                    subject_id: format!("c{c:04}-{j:03}"),
                    cluster_id: Some(format!("c{c:04}")),
                    arm,
                    covariates: vec![x.w1, x.w2, x.z1, x.z2, x.n],
                    times,
                    indicators,
                });
            }
        }
        Dataset::new(
            records,
            3,
            ["W1", "W2", "Z1", "Z2", "N"].map(String::from).to_vec(),
            Design::Crt,
        )
    }

    pub fn simulate(&self, rep: u64) -> Result<Dataset> {
        self.simulate_with(&mut stream_rng(self.seed, rep))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "lowercase")]
pub enum Scenario {
    Irt(IrtScenario),
    Crt(CrtScenario),
}

impl Scenario {
    pub fn design(&self) -> Design {
        match self {
            Scenario::Irt(_) => Design::Irt,
            Scenario::Crt(_) => Design::Crt,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Scenario::Irt(s) => s.seed,
            Scenario::Crt(s) => s.seed,
        }
    }

    pub fn pi1(&self) -> f64 {
        match self {
            Scenario::Irt(s) => s.pi1,
            Scenario::Crt(s) => s.pi1,
        }
    }

    pub fn simulate(&self, rep: u64) -> Result<Dataset> {
        match self {
            Scenario::Irt(s) => s.simulate(rep),
            Scenario::Crt(s) => s.simulate(rep),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_times_are_ordered() {
        let lat = LatentTimes {
            stage1: 2.0,
            gap: 1.0,
            terminal: 2.5,
            censoring: 9.0,
        };
        assert_eq!(lat.stage_times(), [2.0, 2.5, 2.5]);
    }

    #[test]
    fn derive_seed_differs_by_index() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }

    #[test]
    fn kendall_tau_values() {
        assert!((kendall_tau(2.0) - 0.2).abs() < 1e-15);
        assert!((kendall_tau(4.5) - 0.1).abs() < 1e-15);
    }
}
