//! Monte Carlo truth for the simulation scenarios, built from the closed-form
//! conditional stage survival of the exponential three-stage process.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{stream_rng, CrtScenario, IrtScenario};
use crate::data::Design;
use crate::dr::Level;
use crate::error::{Error, Result};

/// Conditional `P(T^q > t)` for `q = 1, 2, 3` given stage-1, gap and terminal
/// rates `mu = (mu1, mu2, mu3)`.
///
/// `S^2 = exp(-(mu1 + mu3) t) {1 + mu1 (1 - exp(-(mu2 - mu1) t)) / (mu2 - mu1)}`,
/// evaluated through `expm1` so that it stays accurate as `mu2 -> mu1`, where
/// it tends to `(1 + mu1 t) exp(-(mu1 + mu3) t)`.
pub fn conditional_stage_survival(mu: [f64; 3], t: f64) -> [f64; 3] {
    let [m1, m2, m3] = mu;
    let s3 = (-m3 * t).exp();
    let s1 = (-(m1 + m3) * t).exp();
    let d = m2 - m1;
    let s2 = if d * t < -1.0 {
        // exp(-d t) would overflow where s1 underflows; use the difference form.
        s1 + m1 * (s1 - (-(m2 + m3) * t).exp()) / d
    } else {
        let g = if d == 0.0 { t } else { -(-d * t).exp_m1() / d };
        s1 * (1.0 + m1 * g)
    };
    [s1, s2, s3]
}

/// Closed-form `S^2` without the stable rewrite, as a reference for tests.
pub fn stage2_survival_direct(mu: [f64; 3], t: f64) -> f64 {
    let [m1, m2, m3] = mu;
    m2 / (m2 - m1) * (-(m1 + m3) * t).exp() - m1 / (m2 - m1) * (-(m2 + m3) * t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthOptions {
    /// Target spacing of the uniform integration grid.
    pub step: f64,
    /// Independent batches used for Monte Carlo standard errors.
    pub batches: usize,
}

impl Default for TruthOptions {
    fn default() -> Self {
        TruthOptions {
            step: 0.005,
            batches: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub tau: f64,
    pub xi1: f64,
    pub xi0: f64,
    pub delta: f64,
    pub stage_deltas: Vec<f64>,
    pub delta_mc_se: f64,
    pub xi_mc_se: [f64; 2],
    /// `Delta` recomputed from each Monte Carlo batch.
    pub delta_batches: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLevel {
    pub level: Level,
    /// `[arm 0, arm 1]` curves for stages 1..=3 on the grid.
    pub curves: Vec<[Vec<f64>; 2]>,
    pub points: Vec<TruthPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub design: Design,
    pub mc_size: usize,
    pub seed: u64,
    pub options: TruthOptions,
    pub grid: Vec<f64>,
    pub levels: Vec<TruthLevel>,
}

impl TruthTable {
    pub fn level(&self, level: Level) -> Option<&TruthLevel> {
        self.levels.iter().find(|l| l.level == level)
    }

    pub fn point(&self, level: Level, tau: f64) -> Option<&TruthPoint> {
        self.level(level)?.points.iter().find(|p| p.tau == tau)
    }

    /// Versioned CSV: `#` provenance lines, one summary line per (level, tau),
    /// then the curves and cumulative `xi`, `Delta` on the grid.
    pub fn write_csv<W: Write>(&self, mut out: W, version: &str) -> Result<()> {
        writeln!(out, "# rmtif-truth format=1 version={version}")?;
        writeln!(
            out,
            "# design={} mc_size={} seed={} step={} batches={}",
            match self.design {
                Design::Irt => "irt",
                Design::Crt => "crt",
            },
            self.mc_size,
            self.seed,
            self.options.step,
            self.options.batches
        )?;
        for l in &self.levels {
            for p in &l.points {
                writeln!(
                    out,
                    "# summary level={} tau={} xi1={} xi0={} delta={} delta_mc_se={}",
                    l.level, p.tau, p.xi1, p.xi0, p.delta, p.delta_mc_se
                )?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "level", "t", "s1_a1", "s1_a0", "s2_a1", "s2_a0", "s3_a1", "s3_a0", "xi1", "xi0",
            "delta",
        ])?;
        for l in &self.levels {
            let cum = cumulative_xi(&self.grid, &l.curves);
            for (k, t) in self.grid.iter().enumerate() {
                let mut row = vec![l.level.to_string(), t.to_string()];
                for pair in &l.curves {
                    row.push(pair[1][k].to_string());
                    row.push(pair[0][k].to_string());
                }
                row.push(cum[k][0].to_string());
                row.push(cum[k][1].to_string());
                row.push((cum[k][0] - cum[k][1]).to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform grid `0, h, ..., tmax` with `h` close to `step` and `tmax` on it.
fn uniform_grid(tmax: f64, step: f64) -> Vec<f64> {
    let n = (tmax / step).ceil().max(1.0) as usize;
    let h = tmax / n as f64;
    (0..=n).map(|k| if k == n { tmax } else { k as f64 * h }).collect()
}

/// Integrand of `xi^{q,(a)}` at grid index `k`.
fn xi_integrand(curves: &[[Vec<f64>; 2]], q: usize, arm: usize, k: usize) -> f64 {
    let other = 1 - arm;
    let next = if q + 1 < curves.len() { curves[q + 1][other][k] } else { 1.0 };
    curves[q][arm][k] * (next - curves[q][other][k])
}

/// Trapezoid integral of `f` on `grid` up to `tau`, interpolating linearly
/// inside the last interval.
fn trapezoid_to(grid: &[f64], tau: f64, f: impl Fn(usize) -> f64) -> f64 {
    let mut total = 0.0;
    for k in 1..grid.len() {
        let (a, b) = (grid[k - 1], grid[k]);
        if a >= tau {
            break;
        }
        if b <= tau {
            total += 0.5 * (f(k - 1) + f(k)) * (b - a);
        } else {
            let fa = f(k - 1);
            let ft = fa + (f(k) - fa) * (tau - a) / (b - a);
            total += 0.5 * (fa + ft) * (tau - a);
        }
    }
    total
}

/// Running `[xi1, xi0]` on the grid.
fn cumulative_xi(grid: &[f64], curves: &[[Vec<f64>; 2]]) -> Vec<[f64; 2]> {
    let f = |arm: usize, k: usize| (0..curves.len()).map(|q| xi_integrand(curves, q, arm, k)).sum::<f64>();
    let (mut xi1, mut xi0) = (0.0, 0.0);
    let mut out = vec![[0.0, 0.0]];
    for k in 1..grid.len() {
        let h = grid[k] - grid[k - 1];
        xi1 += 0.5 * (f(1, k - 1) + f(1, k)) * h;
        xi0 += 0.5 * (f(0, k - 1) + f(0, k)) * h;
        out.push([xi1, xi0]);
    }
    out
}

struct Functionals {
    xi1: f64,
    xi0: f64,
    stage_deltas: Vec<f64>,
}

fn functionals(grid: &[f64], curves: &[[Vec<f64>; 2]], tau: f64) -> Functionals {
    let nq = curves.len();
    let xi = |arm: usize| -> f64 {
        (0..nq)
            .map(|q| trapezoid_to(grid, tau, |k| xi_integrand(curves, q, arm, k)))
            .sum()
    };
    let stage_deltas = (0..nq)
        .map(|q| {
            trapezoid_to(grid, tau, |k| {
                let next = |a: usize| if q + 1 < nq { curves[q + 1][a][k] } else { 1.0 };
                curves[q][1][k] * next(0) - curves[q][0][k] * next(1)
            })
        })
        .collect();
    Functionals {
        xi1: xi(1),
        xi0: xi(0),
        stage_deltas,
    }
}

/// Per-batch accumulated curve sums: `sums[q][arm][k]` and the normalizer.
#[derive(Clone)]
struct Accum {
    sums: Vec<[Vec<f64>; 2]>,
    weight: f64,
}

impl Accum {
    fn new(len: usize) -> Self {
        Accum {
            sums: vec![[vec![0.0; len], vec![0.0; len]]; 3],
            weight: 0.0,
        }
    }

    fn merge(&mut self, other: &Accum) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            for arm in 0..2 {
                for (x, y) in a[arm].iter_mut().zip(&b[arm]) {
                    *x += y;
                }
            }
        }
        self.weight += other.weight;
    }

    fn curves(&self) -> Vec<[Vec<f64>; 2]> {
        self.sums
            .iter()
            .map(|pair| {
                [
                    pair[0].iter().map(|v| v / self.weight).collect(),
                    pair[1].iter().map(|v| v / self.weight).collect(),
                ]
            })
            .collect()
    }
}

/// Add `scale * S^q(t_k | mu)` for all `k` on a uniform grid of spacing `h`.
fn add_conditional(acc: &mut [[Vec<f64>; 2]], arm: usize, mu: [f64; 3], h: f64, scale: f64) {
    let [m1, m2, m3] = mu;
    let d = m2 - m1;
    let len = acc[0][arm].len();
    let r13 = (-(m1 + m3) * h).exp();
    let r23 = (-(m2 + m3) * h).exp();
    let r3 = (-m3 * h).exp();
    let tmax = h * (len - 1) as f64;
    let series = (d * tmax).abs() < 1e-3;
    let (mut s1, mut s23, mut s3) = (1.0, 1.0, 1.0);
    for k in 0..len {
        let s2 = if series {
            let t = k as f64 * h;
            let x = d * t;
            let g = t * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 + x * x * x * x / 120.0);
            s1 * (1.0 + m1 * g)
        } else {
            // s1 * g = (s1 - s23) / d with s23 = exp(-(mu2 + mu3) t)
            s1 + m1 * (s1 - s23) / d
        };
        acc[0][arm][k] += scale * s1;
        acc[1][arm][k] += scale * s2;
        acc[2][arm][k] += scale * s3;
        s1 *= r13;
        s23 *= r23;
        s3 *= r3;
    }
}

fn split_sizes(total: usize, batches: usize) -> Vec<usize> {
    (0..batches)
        .map(|b| total / batches + usize::from(b < total % batches))
        .collect()
}

fn check_inputs(mc_size: usize, taus: &[f64], opts: &TruthOptions) -> Result<f64> {
    if taus.is_empty() || taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::invalid("truth taus must be positive and finite"));
    }
    if opts.batches < 2 || mc_size < opts.batches {
        return Err(Error::invalid("Monte Carlo size must cover at least two batches"));
    }
    if !(opts.step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    Ok(taus.iter().copied().fold(0.0, f64::max))
}

fn summarize_level(
    level: Level,
    grid: &[f64],
    batches: &[Accum],
    taus: &[f64],
) -> TruthLevel {
    let mut total = Accum::new(grid.len());
    for b in batches {
        total.merge(b);
    }
    let curves = total.curves();
    let batch_curves: Vec<_> = batches.iter().map(Accum::curves).collect();
    let nb = batches.len() as f64;
    let se = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / nb;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nb - 1.0) / nb).sqrt()
    };
    let points = taus
        .iter()
        .map(|&tau| {
            let f = functionals(grid, &curves, tau);
            let per: Vec<Functionals> = batch_curves.iter().map(|c| functionals(grid, c, tau)).collect();
            let delta_batches: Vec<f64> = per.iter().map(|p| p.xi1 - p.xi0).collect();
            let x1: Vec<f64> = per.iter().map(|p| p.xi1).collect();
            let x0: Vec<f64> = per.iter().map(|p| p.xi0).collect();
            TruthPoint {
                tau,
                xi1: f.xi1,
                xi0: f.xi0,
                delta: f.stage_deltas.iter().sum(),
                stage_deltas: f.stage_deltas,
                delta_mc_se: se(&delta_batches),
                xi_mc_se: [se(&x1), se(&x0)],
                delta_batches,
            }
        })
        .collect();
    TruthLevel {
        level,
        curves,
        points,
    }
}

/// IRT truth from `mc_size` covariate draws, each evaluated under both arms.
pub fn truth_irt(
    scenario: &IrtScenario,
    mc_size: usize,
    taus: &[f64],
    opts: TruthOptions,
) -> Result<TruthTable> {
    let tmax = check_inputs(mc_size, taus, &opts)?;
    let grid = uniform_grid(tmax, opts.step);
    let h = grid[1] - grid[0];
    let sizes = split_sizes(mc_size, opts.batches);
    let batches: Vec<Accum> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &n)| {
            let mut rng = stream_rng(scenario.seed, 1 << 32 | b as u64);
            let mut acc = Accum::new(grid.len());
            for _ in 0..n {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2 = f64::from(u8::from(rng.random_bool(0.5)));
                for arm in [0u8, 1] {
                    let mu = [
                        scenario.stage1.rate(arm, z1, z2),
                        scenario.gap.rate(arm, z1, z2),
                        scenario.terminal.rate(arm, z1, z2),
                    ];
                    add_conditional(&mut acc.sums, arm as usize, mu, h, 1.0);
                }
                acc.weight += 1.0;
            }
            acc
        })
        .collect();
    Ok(TruthTable {
        design: Design::Irt,
        mc_size,
        seed: scenario.seed,
        options: opts,
        levels: vec![summarize_level(Level::Irt, &grid, &batches, taus)],
        grid,
    })
}

/// CRT truth from `mc_size` clusters. Each cluster draws its size and all
/// covariates once and an arm-specific frailty per arm; the cluster level
/// averages within-cluster means, the individual level pools members.
pub fn truth_crt(
    scenario: &CrtScenario,
    mc_size: usize,
    taus: &[f64],
    opts: TruthOptions,
) -> Result<TruthTable> {
    scenario.validate()?;
    let tmax = check_inputs(mc_size, taus, &opts)?;
    let grid = uniform_grid(tmax, opts.step);
    let h = grid[1] - grid[0];
    let sizes = split_sizes(mc_size, opts.batches);
    let batches: Vec<(Accum, Accum)> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &m)| {
            let mut rng = stream_rng(scenario.seed, 1 << 32 | b as u64);
            let mut cl = Accum::new(grid.len());
            let mut ind = Accum::new(grid.len());
            for _ in 0..m {
                let n = scenario.draw_size(&mut rng);
                let frail = [
                    CrtScenario::frailty(scenario.frailty_control, &mut rng),
                    CrtScenario::frailty(scenario.frailty_treated, &mut rng),
                ];
                let w = scenario.draw_cluster_covariates(&mut rng, n);
                for _ in 0..n {
                    let x = scenario.draw_member(&mut rng, n, w);
                    for arm in [0u8, 1] {
                        let mu = scenario.rates(arm, &x, frail[arm as usize]);
                        add_conditional(&mut ind.sums, arm as usize, mu, h, 1.0);
                        add_conditional(&mut cl.sums, arm as usize, mu, h, 1.0 / n as f64);
                    }
                }
                cl.weight += 1.0;
                ind.weight += n as f64;
            }
            (cl, ind)
        })
        .collect();
    let (cl, ind): (Vec<Accum>, Vec<Accum>) = batches.into_iter().unzip();
    Ok(TruthTable {
        design: Design::Crt,
        mc_size,
        seed: scenario.seed,
        options: opts,
        levels: vec![
            summarize_level(Level::CrtCluster, &grid, &cl, taus),
            summarize_level(Level::CrtIndividual, &grid, &ind, taus),
        ],
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_form_matches_direct_form() {
        let mu = [0.3, 0.9, 0.1];
        for t in [0.0, 0.5, 1.7] {
            let s = conditional_stage_survival(mu, t);
            assert!((s[1] - stage2_survival_direct(mu, t)).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_recurrence_matches_closed_form() {
        let grid = uniform_grid(2.0, 0.01);
        let h = grid[1];
        for mu in [[0.3, 0.9, 0.1], [0.5, 0.5 + 1e-9, 0.2], [1.2, 0.4, 0.05]] {
            let mut acc = vec![[vec![0.0; grid.len()], vec![0.0; grid.len()]]; 3];
            add_conditional(&mut acc, 1, mu, h, 1.0);
            for (k, &t) in grid.iter().enumerate() {
                let s = conditional_stage_survival(mu, t);
                for q in 0..3 {
                    assert!((acc[q][1][k] - s[q]).abs() < 1e-12, "{mu:?} q={q} t={t}");
                }
            }
        }
    }

    #[test]
    fn trapezoid_interpolates_inside_last_interval() {
        let grid = [0.0, 1.0, 2.0];
        let f = |k: usize| grid[k];
        assert!((trapezoid_to(&grid, 1.5, f) - 1.125).abs() < 1e-15);
    }
}
