use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rmtif::pipeline::{stage_curves, JackknifeInfo};
use rmtif::sim::{
    run_replication, standard_method, truth_crt, truth_irt, CrtScenario, IrtScenario,
    ReplicationConfig, Scenario, TruthOptions,
};
use rmtif::{
    analyze, bouquet_export, load_long_csv, load_wide_csv, winsorize_states, CensorModel, Dataset,
    Design, DesignConfig, EstimandLevel, EstimatorSpec, Integration, JackknifePlan, Level,
    LevelEstimates, OutcomeModel,
};
use serde::Serialize;

use crate::config::{
    CensorArg, DesignArg, InputFormat, IntegrationArg, LevelArg, OutcomeArg, RunConfig,
};
use crate::Failure;

const DEFAULT_SEED: u64 = 1;
const MAX_REPLICATE_FAILURES: f64 = 0.05;

fn input_err(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| input_err(format!("cannot create {}: {e}", path.display())))
}

/// Write to `path`, or stdout when it is `None`.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush().map_err(|e| input_err(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush().map_err(|e| input_err(format!("cannot write output: {e}")))
        }
    }
}

fn estimand_level(level: Option<LevelArg>) -> EstimandLevel {
    match level {
        Some(LevelArg::Cluster) => EstimandLevel::Cluster,
        Some(LevelArg::Individual) => EstimandLevel::Individual,
        Some(LevelArg::Both) | None => EstimandLevel::Both,
    }
}

fn design_of(arg: DesignArg) -> Design {
    match arg {
        DesignArg::Irt => Design::Irt,
        DesignArg::Crt => Design::Crt,
    }
}

/// Covariate names and stage count implied by the file header (and, for long
/// data, the largest state code).
fn infer_layout(path: &Path, format: InputFormat) -> Result<(Vec<String>, usize), Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    let reserved = |h: &str| match format {
        InputFormat::Wide => {
            matches!(h, "id" | "cluster" | "arm") || h.starts_with("time_") || h.starts_with("status_")
        }
        InputFormat::Long => matches!(h, "id" | "cluster" | "arm" | "time" | "event"),
    };
    let covariates = headers.iter().filter(|h| !reserved(h)).cloned().collect();
    let stages = match format {
        InputFormat::Wide => headers.iter().filter(|h| h.starts_with("time_")).count(),
        InputFormat::Long => {
            let col = headers.iter().position(|h| h == "event");
            let mut max = 0;
            if let Some(col) = col {
                for row in rdr.records().flatten() {
                    if let Some(Ok(e)) = row.get(col).map(str::parse::<usize>) {
                        max = max.max(e);
                    }
                }
            }
            max
        }
    };
    Ok((covariates, stages))
}

fn load(cfg: &RunConfig, warnings: &mut Vec<String>) -> Result<Dataset, Failure> {
    let path = cfg.input.as_deref().ok_or_else(|| input_err("no input file given (--input)"))?;
    let (inferred_cov, inferred_stages) = infer_layout(path, cfg.format)?;
    let covariates = cfg.covariates.clone().unwrap_or(inferred_cov);
    let stages = cfg.stages.unwrap_or(inferred_stages);
    if stages == 0 {
        return Err(input_err(format!(
            "cannot infer the number of stages from {}; pass --stages",
            path.display()
        )));
    }
    let mut ds = match cfg.format {
        InputFormat::Wide => load_wide_csv(path, stages, &covariates)?,
        InputFormat::Long => {
            let l = load_long_csv(path, stages, &covariates)?;
            if !l.skipped_subjects.is_empty() {
                warnings.push(format!(
                    "skipped {} subject(s) without transition rows: {}",
                    l.skipped_subjects.len(),
                    l.skipped_subjects.join(", ")
                ));
            }
            l.dataset
        }
    };
    if let Some(cap) = cfg.winsorize {
        let (w, warn) = winsorize_states(&ds, cap)?;
        warnings.extend(warn);
        ds = w;
    }
    Ok(ds)
}

fn method_spec(cfg: &RunConfig, ds: &Dataset) -> EstimatorSpec {
    let all = ds.covariate_names().to_vec();
    let outcome = match cfg.outcome {
        OutcomeArg::Cox => OutcomeModel::Cox(cfg.outcome_terms.clone().unwrap_or_else(|| all.clone())),
        OutcomeArg::Km => OutcomeModel::KmArm,
        OutcomeArg::None => OutcomeModel::None,
    };
    let censor = match cfg.censor {
        CensorArg::Cox => CensorModel::Cox(cfg.censor_terms.clone().unwrap_or(all)),
        CensorArg::KmArm => CensorModel::KmArm,
        CensorArg::KmPooled => CensorModel::KmPooled,
    };
    let mut spec = EstimatorSpec::dr("aipwcc", outcome, censor);
    spec.integration = match cfg.integration {
        IntegrationArg::Trapezoid => Integration::Trapezoid,
        IntegrationArg::Step => Integration::Step,
    };
    spec.isotonic = cfg.isotonic;
    spec
}

#[derive(Serialize)]
struct DataSummary {
    design: Design,
    subjects: usize,
    clusters: Option<usize>,
    arm_sizes: [usize; 2],
    stages: usize,
    covariates: Vec<String>,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    version: &'static str,
    config: &'a RunConfig,
    data: DataSummary,
    jackknife: Option<JackknifeInfo>,
    levels: Vec<LevelEstimates>,
    warnings: Vec<String>,
}

pub fn estimate(mut cfg: RunConfig) -> Result<(), Failure> {
    let mut warnings = Vec::new();
    let ds = load(&cfg, &mut warnings)?;
    if let Some(d) = cfg.design {
        if design_of(d) != ds.design() {
            return Err(input_err(format!(
                "--design {} does not match the data: {}",
                match d {
                    DesignArg::Irt => "irt",
                    DesignArg::Crt => "crt",
                },
                if ds.design() == Design::Crt {
                    "the file has a `cluster` column"
                } else {
                    "the file has no `cluster` column"
                }
            )));
        }
    }
    if cfg.level.is_some() && ds.design() == Design::Irt {
        return Err(input_err("--level applies only to cluster randomized data"));
    }
    if cfg.tau.is_empty() {
        return Err(input_err("no horizons given (--tau)"));
    }
    let last = ds.records().iter().map(|r| r.follow_up()).fold(0.0, f64::max);
    if let Some(t) = cfg.tau.iter().find(|&&t| t > last) {
        return Err(input_err(format!(
            "tau {t} lies outside the time grid: the last follow-up time is {last}"
        )));
    }
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    cfg.seed = Some(seed);
    let config = DesignConfig {
        pi1: cfg.pi1,
        tau_grid: cfg.tau.clone(),
        censor_floor: cfg.floor,
        estimand_level: estimand_level(cfg.level),
    };
    config.validate()?;
    let spec = method_spec(&cfg, &ds);
    let plan = (cfg.k > 0).then(|| {
        let mut p = JackknifePlan::for_design(ds.design(), cfg.k, seed);
        p.alpha = cfg.alpha;
        p
    });
    let analysis = analyze(&ds, &config, &spec, plan.as_ref())?;

    for l in &analysis.levels {
        for (q, pair) in l.flags.iter().enumerate() {
            for (arm, f) in pair.iter().enumerate() {
                if f.monotone_violated {
                    warnings.push(format!("{}: stage {} arm {arm} curve increases on the grid", l.level, q + 1));
                }
                if f.range_violated {
                    warnings.push(format!("{}: stage {} arm {arm} curve leaves [0, 1]", l.level, q + 1));
                }
            }
        }
        if l.truncations > 0 {
            warnings.push(format!(
                "{}: {} denominator(s) raised to the floor {}",
                l.level, l.truncations, cfg.floor
            ));
        }
    }
    if let Some(j) = &analysis.jackknife {
        if j.failed > 0 {
            warnings.push(format!("{} jackknife replicate(s) failed and were dropped", j.failed));
        }
    }

    if let Some(path) = cfg.bouquet.clone() {
        write_bouquet(&ds, &config, &spec, &path, cfg.bouquet_points)?;
    }

    let clusters = (ds.design() == Design::Crt).then(|| ds.clusters().len());
    let report = EstimateReport {
        version: rmtif::VERSION,
        config: &cfg,
        data: DataSummary {
            design: ds.design(),
            subjects: ds.len(),
            clusters,
            arm_sizes: [ds.arm_size(0), ds.arm_size(1)],
            stages: ds.n_stages(),
            covariates: ds.covariate_names().to_vec(),
        },
        jackknife: analysis.jackknife,
        levels: analysis.levels,
        warnings,
    };
    emit(cfg.output.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &report).map_err(|e| input_err(e.to_string()))?;
        writeln!(w).map_err(|e| input_err(e.to_string()))
    })
}

/// One CSV per level; with several levels the level name is added to the
/// file stem.
fn write_bouquet(
    ds: &Dataset,
    config: &DesignConfig,
    spec: &EstimatorSpec,
    path: &Path,
    points: usize,
) -> Result<(), Failure> {
    let tmax = config.max_tau();
    let taus: Vec<f64> = (1..=points.max(1)).map(|i| tmax * i as f64 / points.max(1) as f64).collect();
    let curves = stage_curves(ds, config, spec)?;
    let several = curves.len() > 1;
    for (level, surv) in curves {
        let table = bouquet_export(&surv, &taus, level, spec.integration)?;
        let target = if several { level_path(path, level) } else { path.to_path_buf() };
        table.write_csv(create(&target)?)?;
    }
    Ok(())
}

fn level_path(path: &Path, level: Level) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{level}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{level}"),
    };
    path.with_file_name(name)
}

fn scenario(cfg: &RunConfig) -> Result<Scenario, Failure> {
    let mut s = match &cfg.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| input_err(format!("cannot read scenario {}: {e}", path.display())))?;
            let s = Scenario::from_json(&text)?;
            if let Some(d) = cfg.design {
                if design_of(d) != s.design() {
                    return Err(input_err("--design does not match the scenario file"));
                }
            }
            s
        }
        None => match cfg.design.unwrap_or(DesignArg::Irt) {
            DesignArg::Irt => Scenario::Irt(IrtScenario::default()),
            DesignArg::Crt => Scenario::Crt(CrtScenario::default()),
        },
    };
    match &mut s {
        Scenario::Irt(x) => {
            if let Some(n) = cfg.n {
                x.n = n;
            }
            if let Some(seed) = cfg.seed {
                x.seed = seed;
            }
            x.validate()?;
        }
        Scenario::Crt(x) => {
            if let Some(n) = cfg.n {
                x.clusters = n;
            }
            if let Some(seed) = cfg.seed {
                x.seed = seed;
            }
            x.validate()?;
        }
    }
    if cfg.level.is_some() && s.design() == Design::Irt {
        return Err(input_err("--level applies only to cluster randomized designs"));
    }
    Ok(s)
}

fn truth_table(s: &Scenario, mc: usize, taus: &[f64], opts: TruthOptions) -> Result<rmtif::sim::TruthTable, Failure> {
    Ok(match s {
        Scenario::Irt(x) => truth_irt(x, mc, taus, opts)?,
        Scenario::Crt(x) => truth_crt(x, mc, taus, opts)?,
    })
}

pub fn simulate(cfg: RunConfig) -> Result<(), Failure> {
    let s = scenario(&cfg)?;
    let methods = cfg
        .methods
        .iter()
        .map(|m| standard_method(s.design(), m))
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(input_err("no methods given (--methods)"));
    }
    if cfg.reps == 0 {
        return Err(input_err("--reps must be positive"));
    }
    let rc = ReplicationConfig {
        reps: cfg.reps,
        taus: cfg.tau.clone(),
        jackknife_groups: (cfg.k > 0).then_some(cfg.k),
        alpha: cfg.alpha,
        censor_floor: cfg.floor,
        estimand_level: estimand_level(cfg.level),
        first_rep: 0,
    };
    let truth = truth_table(&s, cfg.truth_mc, &cfg.tau, TruthOptions::default())?;
    let report = run_replication(&s, &methods, &rc, &truth)?;
    emit(cfg.output.as_deref(), |w| Ok(report.write_csv(w)?))?;

    let worst = report.worst_failure_fraction();
    if worst > MAX_REPLICATE_FAILURES || report.rows.len() < methods.len() {
        let path = cfg.diagnostics.clone().unwrap_or_else(|| match &cfg.output {
            Some(o) => PathBuf::from(format!("{}.diagnostics.txt", o.display())),
            None => PathBuf::from("rmtif-diagnostics.txt"),
        });
        let mut w = create(&path)?;
        for d in &report.diagnostics {
            writeln!(w, "{d}").map_err(|e| input_err(e.to_string()))?;
        }
        w.flush().map_err(|e| input_err(e.to_string()))?;
        return Err(Failure::Replication(format!(
            "{:.1}% of replicates failed for at least one method; diagnostics in {}",
            100.0 * worst,
            path.display()
        )));
    }
    Ok(())
}

pub fn truth(cfg: RunConfig) -> Result<(), Failure> {
    let s = scenario(&cfg)?;
    let opts = TruthOptions {
        step: cfg.step,
        batches: cfg.batches,
    };
    let table = truth_table(&s, cfg.mc, &cfg.tau, opts)?;
    emit(cfg.output.as_deref(), |w| Ok(table.write_csv(w, rmtif::VERSION)?))
}
