use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{StepCumHaz, StepSurvCurve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Convergence threshold on the relative change of the log partial likelihood.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iter: 50,
            tol: 1e-9,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    /// Breslow baseline for covariates centered at `covariate_means`.
    pub baseline_cumhaz: StepCumHaz,
    pub covariate_means: Vec<f64>,
    pub loglik: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Euclidean norm of the score at `beta`.
    pub score_norm: f64,
}

/// Log partial likelihood (Breslow ties) with its score and observed information.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialLikelihood {
    pub loglik: f64,
    pub score: Vec<f64>,
    pub information: Vec<Vec<f64>>,
}

struct Problem<'a> {
    times: &'a [f64],
    events: &'a [bool],
    p: usize,
    /// Centered covariates, row-major.
    x: Vec<f64>,
    means: Vec<f64>,
    /// Indices sorted by decreasing time.
    order: Vec<usize>,
}

struct Eval {
    loglik: f64,
    score: DVector<f64>,
    info: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    fn new(times: &'a [f64], events: &'a [bool], covariates: &[Vec<f64>]) -> Result<Self> {
        let n = times.len();
        if events.len() != n || covariates.len() != n {
            return Err(Error::invalid("times, events and covariates differ in length"));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("survival times must be finite and non-negative"));
        }
        let p = covariates.first().map_or(0, Vec::len);
        if covariates.iter().any(|z| z.len() != p) {
            return Err(Error::invalid("covariate rows differ in length"));
        }
        if covariates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        if !events.iter().any(|&e| e) {
            return Err(Error::NoEvents);
        }
        let mut means = vec![0.0; p];
        for z in covariates {
            for (m, v) in means.iter_mut().zip(z) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut x = Vec::with_capacity(n * p);
        for z in covariates {
            x.extend(z.iter().zip(&means).map(|(v, m)| v - m));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        Ok(Problem {
            times,
            events,
            p,
            x,
            means,
            order,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn linear_predictors(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    fn evaluate(&self, beta: &[f64]) -> Eval {
        let p = self.p;
        let eta = self.linear_predictors(beta);
        let c = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut loglik = 0.0;
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        let mut k = 0;
        while k < self.order.len() {
            let t = self.times[self.order[k]];
            let mut d = 0.0;
            while k < self.order.len() && self.times[self.order[k]] == t {
                let i = self.order[k];
                let w = (eta[i] - c).exp();
                let xi = self.row(i);
                s0 += w;
                for a in 0..p {
                    s1[a] += w * xi[a];
                    for b in 0..p {
                        s2[a * p + b] += w * xi[a] * xi[b];
                    }
                }
                if self.events[i] {
                    d += 1.0;
                    loglik += eta[i];
                    for a in 0..p {
                        score[a] += xi[a];
                    }
                }
                k += 1;
            }
            if d > 0.0 {
                loglik -= d * (s0.ln() + c);
                for a in 0..p {
                    let ma = s1[a] / s0;
                    score[a] -= d * ma;
                    for b in 0..p {
                        info[(a, b)] += d * (s2[a * p + b] / s0 - ma * s1[b] / s0);
                    }
                }
            }
        }
        Eval {
            loglik,
            score,
            info,
        }
    }

    fn breslow(&self, beta: &[f64]) -> StepCumHaz {
        let eta = self.linear_predictors(beta);
        let c = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut jumps = Vec::new();
        let mut k = 0;
        while k < self.order.len() {
            let t = self.times[self.order[k]];
            let mut d = 0.0;
            while k < self.order.len() && self.times[self.order[k]] == t {
                let i = self.order[k];
                s0 += (eta[i] - c).exp();
                if self.events[i] {
                    d += 1.0;
                }
                k += 1;
            }
            if d > 0.0 {
                jumps.push((t, d / s0 * (-c).exp()));
            }
        }
        jumps.reverse();
        StepCumHaz {
            jump_times: jumps.iter().map(|j| j.0).collect(),
            increments: jumps.iter().map(|j| j.1).collect(),
        }
    }
}

/// Newton step `I^{-1} U`, failing with the offending direction when the
/// information matrix is (numerically) singular.
fn newton_step(info: &DMatrix<f64>, score: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(info.clone());
    let (imin, lmin) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(lmax > 0.0) || lmin <= 1e-10 * lmax {
        let direction = eig.eigenvectors.column(imin).iter().copied().collect();
        return Err(Error::SingularHessian {
            direction,
            eigenvalue: lmin,
            terms: Vec::new(),
        });
    }
    let v = &eig.eigenvectors;
    let mut coef = v.transpose() * score;
    for (c, l) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= l;
    }
    Ok(v * coef)
}

/// Maximum partial likelihood fit of a Cox model with Breslow ties by
/// Newton-Raphson with step halving.
pub fn cox_fit(
    times: &[f64],
    events: &[bool],
    covariates: &[Vec<f64>],
    opts: CoxOptions,
) -> Result<CoxFit> {
    let prob = Problem::new(times, events, covariates)?;
    let p = prob.p;
    let mut beta = vec![0.0; p];
    let mut cur = prob.evaluate(&beta);
    let mut n_iterations = 0;
    let mut converged = p == 0;

    while !converged && n_iterations < opts.max_iter {
        n_iterations += 1;
        let step = newton_step(&cur.info, &cur.score)?;
        let mut scale = 1.0;
        let mut halvings = 0;
        let (cand, next) = loop {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let next = prob.evaluate(&cand);
            if next.loglik >= cur.loglik || halvings == opts.max_halvings {
                break (cand, next);
            }
            scale *= 0.5;
            halvings += 1;
        };
        if next.loglik < cur.loglik {
            // No ascent along the Newton direction at floating-point resolution.
            converged = true;
            break;
        }
        let change = (next.loglik - cur.loglik).abs() / cur.loglik.abs().max(f64::MIN_POSITIVE);
        beta = cand;
        cur = next;
        converged = change <= opts.tol;
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: n_iterations,
            beta,
            loglik: cur.loglik,
        });
    }
    let score_norm = cur.score.norm();
    Ok(CoxFit {
        baseline_cumhaz: prob.breslow(&beta),
        covariate_means: prob.means.clone(),
        loglik: cur.loglik,
        beta,
        n_iterations,
        converged,
        score_norm,
    })
}

/// Breslow baseline cumulative hazard at a fixed `beta`, with covariates
/// centered at their sample means.
pub fn breslow_baseline(
    times: &[f64],
    events: &[bool],
    covariates: &[Vec<f64>],
    beta: &[f64],
) -> Result<StepCumHaz> {
    let prob = Problem::new(times, events, covariates)?;
    if beta.len() != prob.p {
        return Err(Error::invalid("beta dimension does not match covariates"));
    }
    Ok(prob.breslow(beta))
}

/// Evaluate the Breslow log partial likelihood and its derivatives at `beta`.
pub fn partial_likelihood(
    times: &[f64],
    events: &[bool],
    covariates: &[Vec<f64>],
    beta: &[f64],
) -> Result<PartialLikelihood> {
    let prob = Problem::new(times, events, covariates)?;
    if beta.len() != prob.p {
        return Err(Error::invalid("beta dimension does not match covariates"));
    }
    let e = prob.evaluate(beta);
    Ok(PartialLikelihood {
        loglik: e.loglik,
        score: e.score.iter().copied().collect(),
        information: (0..prob.p)
            .map(|a| (0..prob.p).map(|b| e.info[(a, b)]).collect())
            .collect(),
    })
}

/// Predicted `P(T >= t | z) = exp(-Lambda0(t-) exp(beta'(z - means)))`.
pub fn predict_survival(fit: &CoxFit, z: &[f64]) -> Result<StepSurvCurve> {
    if z.len() != fit.beta.len() {
        return Err(Error::invalid(format!(
            "covariate vector has dimension {}, model has {}",
            z.len(),
            fit.beta.len()
        )));
    }
    let lp: f64 = z
        .iter()
        .zip(&fit.covariate_means)
        .zip(&fit.beta)
        .map(|((z, m), b)| b * (z - m))
        .sum();
    let risk = lp.exp();
    let mut cum = 0.0;
    let values_after = fit
        .baseline_cumhaz
        .increments
        .iter()
        .map(|h| {
            cum += h;
            (-risk * cum).exp()
        })
        .collect();
    Ok(StepSurvCurve {
        jump_times: fit.baseline_cumhaz.jump_times.clone(),
        values_after,
    })
}
