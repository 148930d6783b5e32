//! Command-line flags and the JSON run configuration they produce.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "rmtif", version, about = "Restricted mean time in favor estimation and simulation")]
pub struct Cli {
    /// Worker threads for replicates and jackknife blocks.
    #[arg(long, global = true, env = "RMTIF_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Estimate RMT-IF on a data file and write a JSON report.
    Estimate(EstimateArgs),
    /// Run a simulation study and write a metric table.
    Simulate(SimulateArgs),
    /// Compute Monte Carlo truth for a scenario.
    Truth(TruthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Estimate,
    Simulate,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Wide,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DesignArg {
    Irt,
    Crt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeArg {
    #[default]
    Cox,
    Km,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CensorArg {
    #[default]
    Cox,
    KmArm,
    KmPooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LevelArg {
    Cluster,
    Individual,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationArg {
    #[default]
    Trapezoid,
    Step,
}

/// Everything needed to rerun a command. A `--config` file supplies the same
/// fields as JSON and overrides the flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub output: Option<PathBuf>,
    pub bouquet: Option<PathBuf>,
    pub bouquet_points: usize,
    pub diagnostics: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub design: Option<DesignArg>,
    pub stages: Option<usize>,
    pub covariates: Option<Vec<String>>,
    pub winsorize: Option<usize>,
    pub outcome: OutcomeArg,
    pub outcome_terms: Option<Vec<String>>,
    pub censor: CensorArg,
    pub censor_terms: Option<Vec<String>>,
    pub integration: IntegrationArg,
    pub isotonic: bool,
    pub pi1: f64,
    pub tau: Vec<f64>,
    /// Jackknife groups (IRT); 0 disables inference.
    pub k: usize,
    pub seed: Option<u64>,
    pub alpha: f64,
    pub level: Option<LevelArg>,
    pub floor: f64,
    pub methods: Vec<String>,
    pub reps: usize,
    /// IRT sample size or CRT cluster count of the scenario.
    pub n: Option<usize>,
    pub truth_mc: usize,
    pub mc: usize,
    pub step: f64,
    pub batches: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Estimate,
            input: None,
            format: InputFormat::Wide,
            output: None,
            bouquet: None,
            bouquet_points: 100,
            diagnostics: None,
            scenario: None,
            design: None,
            stages: None,
            covariates: None,
            winsorize: None,
            outcome: OutcomeArg::Cox,
            outcome_terms: None,
            censor: CensorArg::Cox,
            censor_terms: None,
            integration: IntegrationArg::Trapezoid,
            isotonic: false,
            pi1: 0.5,
            tau: Vec::new(),
            k: 100,
            seed: None,
            alpha: 0.05,
            level: None,
            floor: 1e-8,
            methods: vec!["o1c1".into(), "km".into()],
            reps: 300,
            n: None,
            truth_mc: 100_000,
            mc: 1_000_000,
            step: 0.005,
            batches: 20,
        }
    }
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect()
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input CSV file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the RMT-IF curve over a horizon grid to this CSV.
    #[arg(long)]
    pub bouquet: Option<PathBuf>,
    #[arg(long)]
    pub bouquet_points: Option<usize>,
    /// Must agree with the presence of a `cluster` column.
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    /// Number of stages `Q + 1` (inferred when omitted).
    #[arg(long)]
    pub stages: Option<usize>,
    /// Comma-separated covariate columns (default: every other column).
    #[arg(long)]
    pub covariates: Option<String>,
    /// Collapse non-terminal states above this cap.
    #[arg(long)]
    pub winsorize: Option<usize>,
    /// Comma-separated horizons.
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long, value_enum)]
    pub outcome: Option<OutcomeArg>,
    /// Comma-separated Cox outcome terms, e.g. `Z1,Z2,Z1:Z2`.
    #[arg(long)]
    pub outcome_terms: Option<String>,
    #[arg(long, value_enum)]
    pub censor: Option<CensorArg>,
    #[arg(long)]
    pub censor_terms: Option<String>,
    #[arg(long, value_enum)]
    pub integration: Option<IntegrationArg>,
    /// Project stage curves onto monotone sequences before integrating.
    #[arg(long)]
    pub isotonic: bool,
    #[arg(long)]
    pub pi1: Option<f64>,
    /// Jackknife groups for IRT data (CRT uses one block per cluster); 0 skips
    /// inference.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// CRT estimand level.
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    /// Floor for censoring and outcome survival denominators.
    #[arg(long)]
    pub floor: Option<f64>,
    /// JSON run configuration overriding the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON (defaults to the built-in scenario for `--design`).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    /// IRT sample size or CRT cluster count.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated method names.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    #[arg(long)]
    pub floor: Option<f64>,
    /// Monte Carlo size of the truth used for the metrics.
    #[arg(long)]
    pub truth_mc: Option<usize>,
    /// Metric CSV path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Where replicate failures are listed.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    /// Monte Carlo size (subjects for IRT, clusters for CRT).
    #[arg(long)]
    pub mc: Option<usize>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn taus(s: &str) -> Result<Vec<f64>, Failure> {
    list(s)
        .iter()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Failure::Input(format!("cannot parse tau value `{v}`")))
        })
        .collect()
}

macro_rules! set {
    ($cfg:ident . $field:ident = $value:expr) => {
        if let Some(v) = $value {
            $cfg.$field = v;
        }
    };
}

impl EstimateArgs {
    pub fn into_config(self) -> Result<RunConfig, Failure> {
        let mut c = RunConfig {
            command: Command::Estimate,
            input: self.input,
            output: self.output,
            bouquet: self.bouquet,
            design: self.design,
            stages: self.stages,
            covariates: self.covariates.as_deref().map(list),
            winsorize: self.winsorize,
            outcome_terms: self.outcome_terms.as_deref().map(list),
            censor_terms: self.censor_terms.as_deref().map(list),
            isotonic: self.isotonic,
            seed: self.seed,
            level: self.level,
            ..RunConfig::default()
        };
        set!(c.format = self.format);
        set!(c.bouquet_points = self.bouquet_points);
        set!(c.tau = self.tau.as_deref().map(taus).transpose()?);
        set!(c.outcome = self.outcome);
        set!(c.censor = self.censor);
        set!(c.integration = self.integration);
        set!(c.pi1 = self.pi1);
        set!(c.k = self.k);
        set!(c.alpha = self.alpha);
        set!(c.floor = self.floor);
        overlay(c, self.config.as_deref())
    }
}

impl SimulateArgs {
    pub fn into_config(self) -> Result<RunConfig, Failure> {
        let mut c = RunConfig {
            command: Command::Simulate,
            scenario: self.scenario,
            design: self.design,
            n: self.n,
            seed: self.seed,
            level: self.level,
            output: self.output,
            diagnostics: self.diagnostics,
            tau: vec![1.0, 1.5, 2.0],
            ..RunConfig::default()
        };
        set!(c.reps = self.reps);
        set!(c.methods = self.methods.as_deref().map(list));
        set!(c.tau = self.tau.as_deref().map(taus).transpose()?);
        set!(c.k = self.k);
        set!(c.alpha = self.alpha);
        set!(c.floor = self.floor);
        set!(c.truth_mc = self.truth_mc);
        overlay(c, self.config.as_deref())
    }
}

impl TruthArgs {
    pub fn into_config(self) -> Result<RunConfig, Failure> {
        let mut c = RunConfig {
            command: Command::Truth,
            scenario: self.scenario,
            design: self.design,
            seed: self.seed,
            output: self.output,
            tau: vec![1.0, 1.5, 2.0],
            ..RunConfig::default()
        };
        set!(c.mc = self.mc);
        set!(c.tau = self.tau.as_deref().map(taus).transpose()?);
        set!(c.step = self.step);
        set!(c.batches = self.batches);
        overlay(c, self.config.as_deref())
    }
}

/// Replace fields of `flags` by those present in the JSON file.
fn overlay(flags: RunConfig, file: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = file else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Failure::Input(format!("config {}: {e}", path.display()));
    let file: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let serde_json::Value::Object(file) = file else {
        return Err(Failure::Input(format!("config {}: expected a JSON object", path.display())));
    };
    let command = flags.command;
    let mut merged = serde_json::to_value(&flags).expect("config serializes");
    let obj = merged.as_object_mut().expect("config is an object");
    for (k, v) in file {
        obj.insert(k, v);
    }
    let out: RunConfig = serde_json::from_value(merged).map_err(bad)?;
    if out.command != command {
        return Err(Failure::Input(format!(
            "config {} is for command `{:?}`",
            path.display(),
            out.command
        )));
    }
    Ok(out)
}
