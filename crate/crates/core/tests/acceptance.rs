//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line for its
//! criterion, followed by indented detail lines, then asserts.
//!
//! C1, C2 and C6 run by default. The simulation studies C3-C5 are ignored
//! by default; run them with
//! `cargo test --release -p rmtif --test acceptance -- --ignored --nocapture`.

mod common;

use std::fmt::Write as _;
use std::io::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rmtif::sim::{
    conditional_stage_survival, run_replication, standard_method, truth_crt, truth_irt,
    CrtScenario, IrtScenario, MetricReport, ReplicationConfig, Scenario, TruthOptions, TruthTable,
};
use rmtif::survival::{breslow_baseline, km_fit, partial_likelihood};
use rmtif::{
    estimate_stage_survival_crt, estimate_stage_survival_irt, km_plug_in_stage_survival,
    point_estimates, rmtif_with, CensorModel, DesignConfig, EstimatorSpec, Integration, Level,
    OutcomeModel,
};

use common::{empirical_survival, km_at, nelson_aalen, pairwise_win_time, random_dataset, singleton_clusters};

// Tolerances.
const IDENTITY_TOL: f64 = 1e-12;
const PAIRWISE_TOL: f64 = 1e-10;
const FD_REL_TOL: f64 = 1e-6;
const FAST_SECONDS: f64 = 10.0;
const CONTINUITY_TOL: f64 = 1e-6;
const TRUTH_Z: f64 = 3.0;

const IRT_PBIAS_MAX: f64 = 2.0;
const CP_RANGE: (f64, f64) = (0.92, 0.98);
const IRT_AESE_REL: f64 = 0.20;
const KM_IRT_PBIAS_T1: (f64, f64) = (2.0, 7.0);
const KM_IRT_PBIAS_T2: (f64, f64) = (6.0, 13.0);

const CRT_PBIAS_MAX: f64 = 3.0;
const CRT_AESE_REFERENCE: f64 = 0.025;
const CRT_AESE_REL: f64 = 0.25;
const CRT_KM_PBIAS_MIN: f64 = 12.0;
const CRT_KM_XI_CP_MAX: f64 = 0.70;

const ROBUST_PBIAS_MAX: f64 = 2.0;

const TAUS: [f64; 3] = [1.0, 1.5, 2.0];

/// Sub-check results of one criterion.
#[derive(Default)]
struct Criterion {
    lines: Vec<(bool, String)>,
}

impl Criterion {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.lines.push((ok, detail.into()));
    }

    fn max_err(&mut self, label: &str, err: f64, tol: f64) {
        self.check(err <= tol, format!("{label}: max error {err:.3e} (tol {tol:.0e})"));
    }

    fn finish(self, id: &str, title: &str, start: Instant) {
        let pass = self.lines.iter().all(|(ok, _)| *ok);
        let failed = self.lines.iter().filter(|(ok, _)| !ok).count();
        let mut out = format!(
            "[{}] {id} {title} ({}/{} checks, {:.1}s)\n",
            if pass { "PASS" } else { "FAIL" },
            self.lines.len() - failed,
            self.lines.len(),
            start.elapsed().as_secs_f64()
        );
        for (ok, line) in &self.lines {
            let _ = writeln!(out, "    {} {line}", if *ok { "ok  " } else { "MISS" });
        }
        // Written past the test harness capture so the summary shows on passing runs.
        let _ = std::io::stdout().lock().write_all(out.as_bytes());
        assert!(pass, "{id} failed {failed} of {} checks", self.lines.len());
    }
}

fn config(pi1: f64, taus: &[f64]) -> DesignConfig {
    DesignConfig {
        pi1,
        tau_grid: taus.to_vec(),
        ..DesignConfig::default()
    }
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().map(f64::abs).fold(0.0, f64::max)
}

fn irt_terms() -> Vec<String> {
    ["Z1", "Z2", "Z1:Z2"].map(String::from).to_vec()
}

#[test]
fn c1_reduction_identities() {
    let start = Instant::now();
    let mut c = Criterion::default();

    // (a) complete data, no outcome model, pi = sample fraction.
    let mut err: f64 = 0.0;
    for seed in [1, 2, 3] {
        let ds = random_dataset(seed, 200, 3, 0.0);
        let cfg = config(ds.arm_size(1) as f64 / ds.len() as f64, &[1.0, 2.0, 4.0]);
        for censor in [CensorModel::Cox(vec!["Z1".into(), "Z2".into()]), CensorModel::KmArm] {
            let surv = estimate_stage_survival_irt(&ds, &cfg, &OutcomeModel::None, &censor).unwrap();
            for q in 1..=3 {
                for arm in [0u8, 1] {
                    for (l, &t) in surv.grid().points().iter().enumerate() {
                        err = err.max((surv.curve(q, arm)[l] - empirical_survival(&ds, arm, q, t)).abs());
                    }
                }
            }
        }
    }
    c.max_err("(a) uncensored DR curves vs empirical survival", err, IDENTITY_TOL);

    // (b) step rule vs brute-force pairwise win time.
    let mut err: f64 = 0.0;
    for (seed, n) in [(10, 60), (11, 41), (12, 25)] {
        let ds = random_dataset(seed, n, 3, 0.0);
        let taus = [0.5, 1.5, 3.0, 6.0];
        let cfg = config(0.5, &taus);
        let surv = km_plug_in_stage_survival(&ds, &cfg, Level::Irt).unwrap();
        for &tau in &taus {
            let est = rmtif_with(&surv, tau, Level::Irt, Integration::Step).unwrap();
            let stages = pairwise_win_time(&ds, tau);
            let (w1, w0) = stages.iter().fold((0.0, 0.0), |(a, b), s| (a + s[0], b + s[1]));
            err = err.max((est.xi1 - w1).abs()).max((est.xi0 - w0).abs());
            for (e, o) in est.stage_xi.iter().zip(&stages) {
                err = err.max((e[0] - o[0]).abs()).max((e[1] - o[1]).abs());
            }
        }
    }
    c.max_err("(b) step-rule xi and stage xi vs pairwise oracle, n <= 60, 3 stages", err, PAIRWISE_TOL);

    // (c) one stage: RMT-IF difference is the RMST difference.
    let mut err: f64 = 0.0;
    for seed in [20, 21] {
        let ds = random_dataset(seed, 150, 1, 0.4);
        let tau = 2.5;
        let est = &point_estimates(&ds, &config(0.5, &[tau]), &EstimatorSpec::km_plug_in("km")).unwrap()[0]
            .estimates[0];
        let mut grid: Vec<f64> = ds.records().iter().map(|r| r.times[0]).filter(|&t| t < tau).collect();
        grid.extend([0.0, tau]);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let km = |arm: u8, t: f64| {
            let rows: Vec<_> = ds.records().iter().filter(|r| r.arm == arm).collect();
            let times: Vec<f64> = rows.iter().map(|r| r.times[0]).collect();
            let events: Vec<bool> = rows.iter().map(|r| r.indicators[0]).collect();
            km_at(&times, &events, t)
        };
        let diff = |t: f64| km(1, t) - km(0, t);
        let rmst: f64 = grid.windows(2).map(|w| 0.5 * (diff(w[0]) + diff(w[1])) * (w[1] - w[0])).sum();
        err = err.max((est.delta - rmst).abs());
    }
    c.max_err("(c) single-stage Delta vs KM + trapezoid RMST difference", err, IDENTITY_TOL);

    // (d) size-one clusters collapse to the IRT estimator.
    let scenario = IrtScenario {
        n: 300,
        ..IrtScenario::default()
    };
    let ds = scenario.simulate(7).unwrap();
    let crt = singleton_clusters(&ds);
    let cfg = config(0.5, &TAUS);
    let censor = CensorModel::Cox(irt_terms());
    let outcome = OutcomeModel::Cox(irt_terms());
    let irt = estimate_stage_survival_irt(&ds, &cfg, &outcome, &censor).unwrap();
    let both = estimate_stage_survival_crt(&crt, &cfg, &outcome, &censor).unwrap();
    let same = (1..=3).all(|q| {
        [0u8, 1].iter().all(|&a| {
            irt.curve(q, a) == both.cluster.curve(q, a) && irt.curve(q, a) == both.individual.curve(q, a)
        })
    });
    let same_est = TAUS.iter().all(|&t| {
        let a = rmtif::rmtif(&irt, t, Level::Irt).unwrap();
        let b = rmtif::rmtif(&both.cluster, t, Level::CrtCluster).unwrap();
        let i = rmtif::rmtif(&both.individual, t, Level::CrtIndividual).unwrap();
        a.delta.to_bits() == b.delta.to_bits() && a.delta.to_bits() == i.delta.to_bits()
    });
    c.check(same && same_est, format!("(d) size-one CRT == IRT bitwise at both levels: curves {same}, Delta {same_est}"));

    // (e) additivity over stages and antisymmetry under arm swap.
    let (mut add, mut swap) = (0.0f64, 0.0f64);
    for t in TAUS {
        let e = rmtif::rmtif(&irt, t, Level::Irt).unwrap();
        let s = rmtif::rmtif(&irt.swap_arms(), t, Level::Irt).unwrap();
        add = add
            .max((e.delta - e.stage_deltas.iter().sum::<f64>()).abs())
            .max((e.delta - (e.xi1 - e.xi0)).abs());
        swap = swap
            .max((e.delta + s.delta).abs())
            .max((e.xi1 - s.xi0).abs())
            .max((e.xi0 - s.xi1).abs());
    }
    c.max_err("(e) Delta = sum of stage Deltas = xi1 - xi0", add, IDENTITY_TOL);
    c.max_err("(e) arm swap negates Delta and exchanges xi", swap, IDENTITY_TOL);

    let secs = start.elapsed().as_secs_f64();
    c.check(secs < FAST_SECONDS, format!("runtime {secs:.2}s < {FAST_SECONDS}s"));
    c.finish("C1", "reduction identities", start);
}

/// Central difference with one Richardson step.
fn derivative(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

#[test]
fn c2_solver_correctness() {
    let start = Instant::now();
    let mut c = Criterion::default();
    let mut rng = common::rng(99);

    let (mut grad_rel, mut info_rel) = (0.0f64, 0.0f64);
    let (mut na_exact, mut na_count) = (true, 0);
    for inst in 0..10 {
        let n = rng.random_range(15..=50);
        let p = 1 + inst % 3;
        let mut times: Vec<f64> = (0..n).map(|_| Exp::new(1.0).unwrap().sample(&mut rng)).collect();
        if inst % 2 == 1 {
            // Tied times.
            for t in &mut times {
                *t = (*t * 4.0).round() / 4.0;
            }
        }
        let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        events[0] = true;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let beta: Vec<f64> = (0..p).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.5 * z }).collect();

        let pl = partial_likelihood(&times, &events, &x, &beta).unwrap();
        let shifted = |j: usize, h: f64| {
            let mut b = beta.clone();
            b[j] += h;
            partial_likelihood(&times, &events, &x, &b).unwrap()
        };
        let fd: Vec<f64> = (0..p).map(|j| derivative(|h| shifted(j, h).loglik, 1e-3)).collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = pl.score.iter().zip(&fd).map(|(a, b)| a - b).collect();
        grad_rel = grad_rel.max(norm(&diff) / norm(&pl.score));
        for j in 0..p {
            for k in 0..p {
                let fd_jk = -derivative(|h| shifted(k, h).score[j], 1e-3);
                let scale = pl.information[j][j].abs().max(pl.information[k][k].abs());
                info_rel = info_rel.max((pl.information[j][k] - fd_jk).abs() / scale);
            }
        }

        let h = breslow_baseline(&times, &events, &x, &vec![0.0; p]).unwrap();
        let (t_na, inc_na) = nelson_aalen(&times, &events);
        na_exact &= h.jump_times == t_na && h.increments == inc_na;
        na_count += 1;
    }
    c.max_err("(a) Cox score vs finite-difference gradient, 10 instances, relative", grad_rel, FD_REL_TOL);
    c.max_err("(a) Cox information vs finite-difference Hessian, relative", info_rel, FD_REL_TOL);
    c.check(na_exact, format!("(b) Breslow baseline at beta = 0 equals Nelson-Aalen exactly ({na_count} instances)"));

    // (c) equal cluster sizes: 1/N_i weights give the unweighted KM.
    let crt = CrtScenario {
        fixed_size: Some(12),
        ..CrtScenario::default()
    }
    .simulate(3)
    .unwrap();
    let cfg = config(0.5, &TAUS);
    let cl = km_plug_in_stage_survival(&crt, &cfg, Level::CrtCluster).unwrap();
    let ind = km_plug_in_stage_survival(&crt, &cfg, Level::CrtIndividual).unwrap();
    let curves_equal = (1..=3).all(|q| [0u8, 1].iter().all(|&a| cl.curve(q, a) == ind.curve(q, a)));
    let times: Vec<f64> = crt.records().iter().map(|r| r.times[0]).collect();
    let events: Vec<bool> = crt.records().iter().map(|r| r.indicators[0]).collect();
    let weighted = km_fit(&times, &events, &vec![1.0 / 12.0; times.len()]).unwrap();
    let plain = km_fit(&times, &events, &vec![1.0; times.len()]).unwrap();
    let oracle = max_abs(
        TAUS.iter()
            .map(|&t| plain.at(t) - km_at(&times, &events, t)),
    );
    c.check(
        curves_equal && weighted == plain && oracle <= IDENTITY_TOL,
        format!(
            "(c) weighted KM, equal sizes: cluster == individual {curves_equal}, 1/N_i == unit {}, vs textbook KM {oracle:.1e}",
            weighted == plain
        ),
    );

    let secs = start.elapsed().as_secs_f64();
    c.check(secs < FAST_SECONDS, format!("runtime {secs:.2}s < {FAST_SECONDS}s"));
    c.finish("C2", "solver correctness", start);
}

#[test]
fn c6_truth_oracles() {
    let start = Instant::now();
    let mut c = Criterion::default();
    let opts = TruthOptions::default();
    let mc = 100_000;

    let agree = |a: &TruthTable, b: &TruthTable, level: Level, c: &mut Criterion, label: &str| {
        for &tau in &TAUS {
            let (pa, pb) = (a.point(level, tau).unwrap(), b.point(level, tau).unwrap());
            let se = pa.delta_mc_se.hypot(pb.delta_mc_se);
            let z = (pa.delta - pb.delta).abs() / se;
            c.check(
                z <= TRUTH_Z,
                format!(
                    "{label} tau={tau}: Delta {:.5} vs {:.5}, |z| = {z:.2} (<= {TRUTH_Z})",
                    pa.delta, pb.delta
                ),
            );
        }
    };

    let irt = IrtScenario::default();
    let a = truth_irt(&irt, mc, &TAUS, opts).unwrap();
    let b = truth_irt(&IrtScenario { seed: irt.seed + 1, ..irt }, mc, &TAUS, opts).unwrap();
    agree(&a, &b, Level::Irt, &mut c, "IRT seeds agree");

    let crt = CrtScenario::default();
    let ca = truth_crt(&crt, mc, &TAUS, opts).unwrap();
    let cb = truth_crt(&CrtScenario { seed: crt.seed + 1, ..crt }, mc, &TAUS, opts).unwrap();
    agree(&ca, &cb, Level::CrtCluster, &mut c, "CRT cluster seeds agree");
    agree(&ca, &cb, Level::CrtIndividual, &mut c, "CRT individual seeds agree");

    for &tau in &TAUS {
        let (pc, pi) = (
            ca.point(Level::CrtCluster, tau).unwrap(),
            ca.point(Level::CrtIndividual, tau).unwrap(),
        );
        let z = (pc.delta - pi.delta).abs() / pc.delta_mc_se.hypot(pi.delta_mc_se);
        c.check(
            z > TRUTH_Z,
            format!(
                "Delta_C != Delta_I at tau={tau}: {:.5} vs {:.5}, |z| = {z:.1} (> {TRUTH_Z})",
                pc.delta, pi.delta
            ),
        );
    }

    // Stage-2 curve across mu2 -> mu1.
    let mut err: f64 = 0.0;
    let mut limit_err: f64 = 0.0;
    for [m1, m3] in [[0.2, 0.1], [1.5, 0.4], [40.0, 0.05], [1e-3, 2.0]] {
        for l in 0..=60 {
            let t = l as f64 * 0.05;
            let at = |m2: f64| conditional_stage_survival([m1, m2, m3], t)[1];
            let limit = (1.0 + m1 * t) * (-(m1 + m3) * t).exp();
            limit_err = limit_err.max((at(m1) - limit).abs());
            for eps in [1e-7, 1e-9, 1e-11, 1e-13] {
                for s in [-1.0, 1.0] {
                    err = err.max((at(m1 * (1.0 + s * eps)) - at(m1)).abs());
                }
            }
        }
    }
    c.max_err("mu2 -> mu1 continuity of stage-2 survival", err, CONTINUITY_TOL);
    c.max_err("mu1 = mu2 value vs (1 + mu t) exp(-(mu + mu3) t)", limit_err, IDENTITY_TOL);
    c.finish("C6", "Monte Carlo truth oracles", start);
}

// ---------------------------------------------------------------------------
// Simulation studies.

const TRUTH_MC: usize = 1_000_000;

fn save(report: &MetricReport, name: &str) {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join(format!("{name}.csv"));
    if let Ok(f) = std::fs::File::create(&path) {
        let _ = report.write_csv(f);
        println!("    report written to {}", path.display());
    }
}

fn describe(report: &MetricReport, c: &mut Criterion) {
    for r in &report.rows {
        c.check(
            true,
            format!(
                "{} {} tau={}: Delta mean {:.4} truth {:.4} PBias {:.2}% AESE {:.4} MCSD {:.4} CP {:.3}; \
                 xi CP {:.3}/{:.3}; reps {} failed {}",
                r.method,
                r.level,
                r.tau,
                r.delta.mean,
                r.delta.truth,
                r.delta.pbias,
                r.delta.aese,
                r.delta.mcsd,
                r.delta.cp,
                r.xi1.cp,
                r.xi0.cp,
                r.reps,
                r.failed
            ),
        );
    }
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

#[test]
#[ignore = "full-scale simulation study"]
fn c3_irt_simulation() {
    let start = Instant::now();
    let mut c = Criterion::default();
    let scenario = IrtScenario::default();
    let truth = truth_irt(&scenario, TRUTH_MC, &TAUS, TruthOptions::default()).unwrap();
    let dr = ["o1c1", "o1c0", "o0c1"];
    let methods: Vec<EstimatorSpec> = dr
        .iter()
        .chain(&["km"])
        .map(|m| standard_method(rmtif::Design::Irt, m).unwrap())
        .collect();
    let cfg = ReplicationConfig {
        taus: TAUS.to_vec(),
        ..ReplicationConfig::default()
    };
    let report = run_replication(&Scenario::Irt(scenario), &methods, &cfg, &truth).unwrap();
    save(&report, "c3_irt");
    describe(&report, &mut c);

    for m in dr {
        for tau in TAUS {
            let r = report.row(m, Level::Irt, tau).unwrap();
            let d = &r.delta;
            c.check(d.pbias < IRT_PBIAS_MAX, format!("{m} tau={tau}: |PBias| {:.2}% < {IRT_PBIAS_MAX}%", d.pbias));
            c.check(in_range(d.cp, CP_RANGE), format!("{m} tau={tau}: CP {:.3} in {CP_RANGE:?}", d.cp));
            let ratio = d.aese / d.mcsd;
            c.check(
                (ratio - 1.0).abs() <= IRT_AESE_REL,
                format!("{m} tau={tau}: AESE/MCSD {ratio:.3} within {IRT_AESE_REL}"),
            );
        }
    }
    let km: Vec<f64> = TAUS.iter().map(|&t| report.row("km", Level::Irt, t).unwrap().delta.pbias).collect();
    c.check(
        km.windows(2).all(|w| w[1] > w[0]),
        format!("km PBias increases in tau: {:.2}% {:.2}% {:.2}%", km[0], km[1], km[2]),
    );
    c.check(in_range(km[0], KM_IRT_PBIAS_T1), format!("km tau=1 PBias {:.2}% in {KM_IRT_PBIAS_T1:?}", km[0]));
    c.check(in_range(km[2], KM_IRT_PBIAS_T2), format!("km tau=2 PBias {:.2}% in {KM_IRT_PBIAS_T2:?}", km[2]));
    c.finish("C3", "IRT simulation, N=2000, 300 replicates", start);
}

#[test]
#[ignore = "full-scale simulation study"]
fn c4_crt_simulation() {
    let start = Instant::now();
    let mut c = Criterion::default();
    let scenario = CrtScenario::default();
    let truth = truth_crt(&scenario, TRUTH_MC, &TAUS, TruthOptions::default()).unwrap();
    let methods: Vec<EstimatorSpec> = ["o1c1", "km"]
        .iter()
        .map(|m| standard_method(rmtif::Design::Crt, m).unwrap())
        .collect();
    let cfg = ReplicationConfig {
        taus: TAUS.to_vec(),
        ..ReplicationConfig::default()
    };
    let report = run_replication(&Scenario::Crt(scenario), &methods, &cfg, &truth).unwrap();
    save(&report, "c4_crt");
    describe(&report, &mut c);

    let dr = report.row("o1c1", Level::CrtCluster, 1.0).unwrap().delta;
    c.check(dr.pbias < CRT_PBIAS_MAX, format!("o1c1 Delta_C(1): |PBias| {:.2}% < {CRT_PBIAS_MAX}%", dr.pbias));
    c.check(in_range(dr.cp, CP_RANGE), format!("o1c1 Delta_C(1): CP {:.3} in {CP_RANGE:?}", dr.cp));
    // The reference SE was reported for either 50 or 60 clusters.
    let refs = [CRT_AESE_REFERENCE, CRT_AESE_REFERENCE * (50.0f64 / 60.0).sqrt()];
    let close = refs.iter().any(|r| (dr.aese / r - 1.0).abs() <= CRT_AESE_REL);
    c.check(
        close,
        format!(
            "o1c1 Delta_C(1): AESE {:.4} within {CRT_AESE_REL} of {:.4} (reported) or {:.4} (rescaled to 60 clusters)",
            dr.aese, refs[0], refs[1]
        ),
    );
    let ind = report.row("o1c1", Level::CrtIndividual, 1.0).unwrap().delta;
    c.check(ind.pbias < CRT_PBIAS_MAX, format!("o1c1 Delta_I(1): |PBias| {:.2}% < {CRT_PBIAS_MAX}%", ind.pbias));
    c.check(in_range(ind.cp, CP_RANGE), format!("o1c1 Delta_I(1): CP {:.3} in {CP_RANGE:?}", ind.cp));

    let km = report.row("km", Level::CrtCluster, 1.0).unwrap();
    c.check(
        km.delta.pbias > CRT_KM_PBIAS_MIN,
        format!("km Delta_C(1): PBias {:.2}% > {CRT_KM_PBIAS_MIN}%", km.delta.pbias),
    );
    c.check(
        km.xi1.cp < CRT_KM_XI_CP_MAX && km.xi0.cp < CRT_KM_XI_CP_MAX,
        format!("km xi_C(1): CP {:.3} / {:.3} < {CRT_KM_XI_CP_MAX}", km.xi1.cp, km.xi0.cp),
    );
    c.finish("C4", "CRT simulation, M=60, 300 replicates", start);
}

#[test]
#[ignore = "full-scale simulation study"]
fn c5_model_robustness() {
    let start = Instant::now();
    let mut c = Criterion::default();
    let base = IrtScenario::default().with_independent_censoring(0.26);
    let truth = truth_irt(&base, TRUTH_MC, &TAUS, TruthOptions::default()).unwrap();
    let spec = EstimatorSpec::dr("none_kp", OutcomeModel::None, CensorModel::KmPooled);
    let cfg = ReplicationConfig {
        taus: TAUS.to_vec(),
        jackknife_groups: None,
        ..ReplicationConfig::default()
    };
    let mut pbias = Vec::new();
    for n in [1000, 4000] {
        let scenario = Scenario::Irt(IrtScenario { n, ..base.clone() });
        let report = run_replication(&scenario, std::slice::from_ref(&spec), &cfg, &truth).unwrap();
        save(&report, &format!("c5_robust_n{n}"));
        let r = report.row("none_kp", Level::Irt, 1.0).unwrap();
        c.check(
            r.delta.pbias < ROBUST_PBIAS_MAX,
            format!(
                "N={n} tau=1: |PBias| {:.3}% < {ROBUST_PBIAS_MAX}% (mean {:.4}, truth {:.4}, MCSD {:.4})",
                r.delta.pbias, r.delta.mean, r.delta.truth, r.delta.mcsd
            ),
        );
        pbias.push(r.delta.pbias);
    }
    c.check(
        pbias[1] < pbias[0],
        format!("|PBias| shrinks with N: {:.3}% (N=1000) -> {:.3}% (N=4000)", pbias[0], pbias[1]),
    );
    c.finish("C5", "model robustness, independent censoring", start);
}
