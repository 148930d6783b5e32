//! Test-side data generators and independent oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rmtif::{Dataset, Design, MultiStateRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Progressive process with `stages` stage times. Each transition happens at
/// an exponential gap unless the terminal time comes first, so later stages
/// often share the terminal time. `censor_rate = 0` gives complete data.
pub fn random_dataset(seed: u64, n: usize, stages: usize, censor_rate: f64) -> Dataset {
    let mut rng = rng(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let arm = u8::from(i % 2 == 0 || (i > 1 && rng.random_bool(0.3)));
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2 = f64::from(u8::from(rng.random_bool(0.5)));
        let scale = (0.4 * z1 - 0.3 * f64::from(arm)).exp();
        let death: f64 = Exp::new(0.3 * scale).unwrap().sample(&mut rng);
        let mut times = Vec::with_capacity(stages);
        let mut t = 0.0;
        for _ in 0..stages.saturating_sub(1) {
            t += Exp::new(0.8 * scale).unwrap().sample(&mut rng);
            times.push(t.min(death));
        }
        times.push(death);
        let c = if censor_rate > 0.0 {
            Exp::new(censor_rate).unwrap().sample(&mut rng)
        } else {
            f64::INFINITY
        };
        let (times, indicators) = times
            .iter()
            .map(|&u| if u <= c { (u, true) } else { (c, false) })
            .unzip();
        records.push(MultiStateRecord {
            subject_id: format!("p{i:04}"),
            cluster_id: None,
            arm,
            covariates: vec![z1, z2],
            times,
            indicators,
        });
    }
    Dataset::new(records, stages, vec!["Z1".into(), "Z2".into()], Design::Irt).unwrap()
}

/// Same records as a CRT where every subject is its own cluster.
pub fn singleton_clusters(ds: &Dataset) -> Dataset {
    let records = ds
        .records()
        .iter()
        .map(|r| MultiStateRecord {
            cluster_id: Some(r.subject_id.clone()),
            ..r.clone()
        })
        .collect();
    Dataset::new(records, ds.n_stages(), ds.covariate_names().to_vec(), Design::Crt).unwrap()
}

/// Number of stages reached by time `u` (`#{q : T^q <= u}`).
fn state(times: &[f64], u: f64) -> usize {
    times.iter().filter(|&&t| t <= u).count()
}

/// Brute-force stage-wise win times on `[0, tau]`, averaged over all
/// treated/control pairs. Entry `q - 1` holds `[xi^q_1, xi^q_0]`, where the
/// stage-`q` win time of subject `i` against `j` is the time with
/// `Y_i(u) < q = Y_j(u)`.
pub fn pairwise_win_time(ds: &Dataset, tau: f64) -> Vec<[f64; 2]> {
    let treated: Vec<&[f64]> = ds.records().iter().filter(|r| r.arm == 1).map(|r| &r.times[..]).collect();
    let control: Vec<&[f64]> = ds.records().iter().filter(|r| r.arm == 0).map(|r| &r.times[..]).collect();
    let mut win = vec![[0.0; 2]; ds.n_stages()];
    for a in &treated {
        for b in &control {
            let mut cuts: Vec<f64> = a.iter().chain(b.iter()).copied().filter(|&t| t < tau).collect();
            cuts.push(0.0);
            cuts.push(tau);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            for w in cuts.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let (sa, sb) = (state(a, mid), state(b, mid));
                if sa < sb {
                    win[sb - 1][0] += w[1] - w[0];
                } else if sb < sa {
                    win[sa - 1][1] += w[1] - w[0];
                }
            }
        }
    }
    let pairs = (treated.len() * control.len()) as f64;
    win.iter().map(|[w1, w0]| [w1 / pairs, w0 / pairs]).collect()
}

/// Fraction of `arm` with stage `q` (1-based) time at least `t`.
pub fn empirical_survival(ds: &Dataset, arm: u8, q: usize, t: f64) -> f64 {
    let rows: Vec<_> = ds.records().iter().filter(|r| r.arm == arm).collect();
    rows.iter().filter(|r| r.times[q - 1] >= t).count() as f64 / rows.len() as f64
}

/// Textbook Kaplan-Meier, `P(T >= t)`, by direct product over distinct
/// event times before `t`.
pub fn km_at(times: &[f64], events: &[bool], t: f64) -> f64 {
    let mut ev: Vec<f64> = times.iter().zip(events).filter(|(_, &d)| d).map(|(&u, _)| u).collect();
    ev.sort_by(f64::total_cmp);
    ev.dedup();
    let mut s = 1.0;
    for &u in ev.iter().filter(|&&u| u < t) {
        let at_risk = times.iter().filter(|&&x| x >= u).count() as f64;
        let d = times.iter().zip(events).filter(|(&x, &e)| e && x == u).count() as f64;
        s *= 1.0 - d / at_risk;
    }
    s
}

/// Nelson-Aalen increments `d_k / n_k` at sorted distinct event times.
pub fn nelson_aalen(times: &[f64], events: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let mut ev: Vec<f64> = times.iter().zip(events).filter(|(_, &d)| d).map(|(&u, _)| u).collect();
    ev.sort_by(f64::total_cmp);
    ev.dedup();
    let inc = ev
        .iter()
        .map(|&u| {
            let at_risk = times.iter().filter(|&&x| x >= u).count() as f64;
            let d = times.iter().zip(events).filter(|(&x, &e)| e && x == u).count() as f64;
            d / at_risk
        })
        .collect();
    (ev, inc)
}
