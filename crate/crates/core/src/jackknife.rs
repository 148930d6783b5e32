//! Grouped (IRT) and leave-one-cluster-out (CRT) jackknife for the pair
//! `(xi_1, xi_0)`, with `Var(Delta) = (1, -1) Cov (1, -1)'`.
//!
//! Replicates run in parallel but are collected in block order and reduced
//! sequentially, so results do not depend on the number of worker threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Dataset, Design};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JackknifeMode {
    /// Delete one of `K` random groups of subjects at a time.
    GroupIrt,
    /// Delete one cluster at a time.
    ClusterCrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifePlan {
    pub mode: JackknifeMode,
    /// Number of groups for [`JackknifeMode::GroupIrt`]; ignored for clusters.
    pub groups: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Largest tolerated fraction of failed replicates.
    pub max_failure_fraction: f64,
}

impl JackknifePlan {
    pub fn group_irt(groups: usize, seed: u64) -> Self {
        JackknifePlan {
            mode: JackknifeMode::GroupIrt,
            groups,
            seed,
            alpha: 0.05,
            max_failure_fraction: 0.05,
        }
    }

    pub fn cluster_crt() -> Self {
        JackknifePlan {
            mode: JackknifeMode::ClusterCrt,
            groups: 0,
            seed: 0,
            alpha: 0.05,
            max_failure_fraction: 0.05,
        }
    }

    /// Plan matching the dataset's design.
    pub fn for_design(design: Design, groups: usize, seed: u64) -> Self {
        match design {
            Design::Irt => Self::group_irt(groups, seed),
            Design::Crt => JackknifePlan {
                seed,
                ..Self::cluster_crt()
            },
        }
    }

    /// Record indices deleted by each replicate.
    pub fn blocks(&self, ds: &Dataset) -> Result<Vec<Vec<usize>>> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        match self.mode {
            JackknifeMode::GroupIrt => group_partition(ds.len(), self.groups, self.seed),
            JackknifeMode::ClusterCrt => {
                let blocks: Vec<Vec<usize>> = ds.clusters().into_iter().map(|c| c.members).collect();
                if blocks.len() < 3 {
                    return Err(Error::invalid("cluster jackknife needs at least 3 clusters"));
                }
                Ok(blocks)
            }
        }
    }

    /// Degrees of freedom for `k` usable replicates.
    pub fn df(&self, k: usize) -> usize {
        match self.mode {
            JackknifeMode::GroupIrt => k.saturating_sub(1),
            JackknifeMode::ClusterCrt => k.saturating_sub(2),
        }
    }
}

/// Seeded random partition of `0..n` into `k` contiguous blocks of a
/// permutation, with sizes `ceil(n/k)` then `floor(n/k)`.
pub fn group_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!(
            "number of jackknife groups must satisfy 2 <= K <= N, got K = {k}, N = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut blocks = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let size = base + usize::from(b < extra);
        blocks.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(blocks)
}

/// Evaluate `f` on every block, in parallel, returning results in block order.
pub fn run_blocks<T, F>(blocks: &[Vec<usize>], f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(&[usize]) -> Result<T> + Sync,
{
    blocks.par_iter().map(|b| f(b)).collect()
}

/// Keep successful replicates, or fail when too many errored.
pub fn screen_failures<T>(results: Vec<Result<T>>, max_fraction: f64) -> Result<(Vec<T>, usize)> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut diagnostics = Vec::new();
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => diagnostics.push(format!("replicate {b}: {e}")),
        }
    }
    let failed = diagnostics.len();
    if failed as f64 > max_fraction * total as f64 || ok.len() < 2 {
        return Err(Error::ReplicateFailures {
            failed,
            total,
            diagnostics,
        });
    }
    Ok((ok, failed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeResult {
    /// Covariance of `(xi_1, xi_0)`.
    pub cov: [[f64; 2]; 2],
    pub se_delta: f64,
    pub ci_delta: (f64, f64),
    pub se_xi: [f64; 2],
    pub ci_xi: [(f64, f64); 2],
    pub df: usize,
    pub replicates: usize,
}

/// `((K - 1) / K) * sum_k (v_k - vbar)^2` for scalar replicates.
pub fn jackknife_variance(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    (k - 1.0) / k * values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
}

/// Upper `1 - alpha/2` quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile(alpha: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("jackknife degrees of freedom must be positive"));
    }
    let t = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::invalid(format!("t distribution: {e}")))?;
    Ok(t.inverse_cdf(1.0 - alpha / 2.0))
}

/// Covariance, standard errors and t intervals around the full-sample `point`.
pub fn summarize(point: [f64; 2], replicates: &[[f64; 2]], df: usize, alpha: f64) -> Result<JackknifeResult> {
    let k = replicates.len() as f64;
    if replicates.len() < 2 {
        return Err(Error::invalid("at least two jackknife replicates are required"));
    }
    let mut mean = [0.0; 2];
    for r in replicates {
        mean[0] += r[0];
        mean[1] += r[1];
    }
    mean[0] /= k;
    mean[1] /= k;
    let mut cov = [[0.0; 2]; 2];
    for r in replicates {
        let d = [r[0] - mean[0], r[1] - mean[1]];
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    let scale = (k - 1.0) / k;
    for row in &mut cov {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let var_delta = (cov[0][0] + cov[1][1] - 2.0 * cov[0][1]).max(0.0);
    let se_delta = var_delta.sqrt();
    let se_xi = [cov[0][0].sqrt(), cov[1][1].sqrt()];
    let q = t_quantile(alpha, df)?;
    let delta = point[0] - point[1];
    Ok(JackknifeResult {
        cov,
        se_delta,
        ci_delta: (delta - q * se_delta, delta + q * se_delta),
        se_xi,
        ci_xi: [
            (point[0] - q * se_xi[0], point[0] + q * se_xi[0]),
            (point[1] - q * se_xi[1], point[1] + q * se_xi[1]),
        ],
        df,
        replicates: replicates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_sizes_and_cover() {
        let b = group_partition(10, 3, 7).unwrap();
        let sizes: Vec<usize> = b.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(b, group_partition(10, 3, 7).unwrap());
        assert!(group_partition(3, 4, 0).is_err());
        assert!(group_partition(3, 1, 0).is_err());
    }

    #[test]
    fn failure_screen() {
        let mut r: Vec<Result<u32>> = (0..100).map(Ok).collect();
        r[3] = Err(Error::NoEvents);
        let (ok, failed) = screen_failures(r, 0.05).unwrap();
        assert_eq!((ok.len(), failed), (99, 1));
        let r: Vec<Result<u32>> = (0..10).map(|i| if i < 2 { Err(Error::NoEvents) } else { Ok(i) }).collect();
        assert!(matches!(screen_failures(r, 0.05), Err(Error::ReplicateFailures { failed: 2, .. })));
    }

    #[test]
    fn t_quantile_matches_normal_for_large_df() {
        assert!((t_quantile(0.05, 100_000).unwrap() - 1.959_963_985).abs() < 1e-4);
        assert!((t_quantile(0.05, 58).unwrap() - 2.001_717_5).abs() < 1e-5);
    }
}
