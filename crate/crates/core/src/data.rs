//! Multi-state records, datasets, design configuration and CSV I/O.
//!
//! A record with `Q + 1` stages stores `times[q] = U^q = min(T^q, C)` and
//! `indicators[q] = I(T^q <= C)` for the first entry times `T^1 <= ... <= T^{Q+1}`
//! of the progressive states, the last of which is terminal.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// Individually randomized trial.
    Irt,
    /// Cluster randomized trial.
    Crt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimandLevel {
    Cluster,
    Individual,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStateRecord {
    pub subject_id: String,
    pub cluster_id: Option<String>,
    pub arm: u8,
    pub covariates: Vec<f64>,
    pub times: Vec<f64>,
    pub indicators: Vec<bool>,
}

impl MultiStateRecord {
    pub fn n_stages(&self) -> usize {
        self.times.len()
    }

    /// Follow-up time `U^{Q+1}`.
    pub fn follow_up(&self) -> f64 {
        *self.times.last().expect("record has stages")
    }

    /// True when follow-up ended by censoring rather than the terminal event.
    pub fn censored(&self) -> bool {
        !*self.indicators.last().expect("record has stages")
    }

    pub fn validate(&self, n_stages: usize, n_covariates: usize) -> Result<()> {
        let fail = |invariant: &str| Error::Validation {
            subject_id: self.subject_id.clone(),
            invariant: invariant.to_string(),
        };
        if self.arm > 1 {
            return Err(fail("arm must be 0 or 1"));
        }
        if self.times.len() != n_stages || self.indicators.len() != n_stages {
            return Err(fail(&format!(
                "expected {n_stages} stage times and indicators, found {} and {}",
                self.times.len(),
                self.indicators.len()
            )));
        }
        if self.covariates.len() != n_covariates {
            return Err(fail(&format!(
                "expected {n_covariates} covariates, found {}",
                self.covariates.len()
            )));
        }
        if self.covariates.iter().any(|v| !v.is_finite()) {
            return Err(fail("covariates must be finite"));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(fail("times must be finite and non-negative"));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(fail("times non-decreasing violated"));
        }
        if self.indicators.windows(2).any(|w| w[1] && !w[0]) {
            return Err(fail("indicators non-increasing violated"));
        }
        if let Some(q) = self.indicators.iter().position(|d| !d) {
            let c = self.times[q];
            if self.times[q..].iter().any(|t| *t != c) {
                return Err(fail(
                    "stage times after the first censored stage must equal the censoring time",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<MultiStateRecord>,
    n_stages: usize,
    covariate_names: Vec<String>,
    design: Design,
}

impl Dataset {
    pub fn new(
        records: Vec<MultiStateRecord>,
        n_stages: usize,
        covariate_names: Vec<String>,
        design: Design,
    ) -> Result<Self> {
        if n_stages == 0 {
            return Err(Error::invalid("at least one stage is required"));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            r.validate(n_stages, covariate_names.len())?;
            if design == Design::Crt && r.cluster_id.is_none() {
                return Err(Error::Validation {
                    subject_id: r.subject_id.clone(),
                    invariant: "cluster design requires a cluster id on every record".into(),
                });
            }
            if !seen.insert(&r.subject_id) {
                return Err(Error::Validation {
                    subject_id: r.subject_id.clone(),
                    invariant: "duplicate subject id".into(),
                });
            }
        }
        for arm in [0u8, 1] {
            if !records.iter().any(|r| r.arm == arm) {
                return Err(Error::EmptyArm { arm });
            }
        }
        let ds = Dataset {
            records,
            n_stages,
            covariate_names,
            design,
        };
        if design == Design::Crt {
            for arm in [0u8, 1] {
                let found = ds
                    .clusters()
                    .iter()
                    .filter(|c| ds.records[c.members[0]].arm == arm)
                    .count();
                if found < 2 {
                    return Err(Error::TooFewClusters { arm, found });
                }
            }
            for c in ds.clusters() {
                let arm = ds.records[c.members[0]].arm;
                if c.members.iter().any(|&i| ds.records[i].arm != arm) {
                    return Err(Error::Validation {
                        subject_id: ds.records[c.members[0]].subject_id.clone(),
                        invariant: format!("cluster `{}` mixes treatment arms", c.id),
                    });
                }
            }
        }
        Ok(ds)
    }

    pub fn records(&self) -> &[MultiStateRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MultiStateRecord> {
        self.records
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arm_size(&self, arm: u8) -> usize {
        self.records.iter().filter(|r| r.arm == arm).count()
    }

    /// Clusters ordered by cluster id. Records without a cluster id form
    /// singleton clusters keyed by subject id.
    pub fn clusters(&self) -> Vec<Cluster> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let key = r.cluster_id.as_deref().unwrap_or(&r.subject_id);
            map.entry(key).or_default().push(i);
        }
        map.into_iter()
            .map(|(id, members)| Cluster {
                id: id.to_string(),
                members,
            })
            .collect()
    }

    /// Dataset restricted to the given record indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::new(
            records,
            self.n_stages,
            self.covariate_names.clone(),
            self.design,
        )
    }

    /// Dataset with the given record indices removed.
    pub fn without(&self, drop: &[usize]) -> Result<Dataset> {
        let mut keep = vec![true; self.records.len()];
        for &i in drop {
            keep[i] = false;
        }
        let idx: Vec<usize> = (0..self.records.len()).filter(|&i| keep[i]).collect();
        self.subset(&idx)
    }

    /// Reinterpret the data under another design (dropping cluster ids for IRT).
    pub fn with_design(&self, design: Design) -> Result<Dataset> {
        let mut records = self.records.clone();
        if design == Design::Irt {
            for r in &mut records {
                r.cluster_id = None;
            }
        }
        Dataset::new(records, self.n_stages, self.covariate_names.clone(), design)
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: String,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub pi1: f64,
    pub tau_grid: Vec<f64>,
    pub censor_floor: f64,
    pub estimand_level: EstimandLevel,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            pi1: 0.5,
            tau_grid: vec![1.0],
            censor_floor: 1e-8,
            estimand_level: EstimandLevel::Both,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return Err(Error::invalid(format!("pi1 must lie in (0, 1), got {}", self.pi1)));
        }
        if !(self.censor_floor > 0.0 && self.censor_floor < 0.5) {
            return Err(Error::invalid(format!(
                "censor_floor must lie in (0, 0.5), got {}",
                self.censor_floor
            )));
        }
        if self.tau_grid.is_empty() {
            return Err(Error::invalid("tau grid is empty"));
        }
        if self.tau_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid("tau values must be finite and positive"));
        }
        if self.tau_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tau grid must be strictly increasing"));
        }
        Ok(())
    }

    /// Randomization probability of `arm`.
    pub fn pi(&self, arm: u8) -> f64 {
        if arm == 1 {
            self.pi1
        } else {
            1.0 - self.pi1
        }
    }

    pub fn max_tau(&self) -> f64 {
        self.tau_grid.iter().copied().fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// CSV input

struct Columns {
    id: usize,
    cluster: Option<usize>,
    arm: usize,
    covariates: Vec<usize>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
}

fn optional_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn common_columns(headers: &csv::StringRecord, covariate_names: &[String]) -> Result<Columns> {
    Ok(Columns {
        id: column(headers, "id")?,
        cluster: optional_column(headers, "cluster"),
        arm: column(headers, "arm")?,
        covariates: covariate_names
            .iter()
            .map(|c| column(headers, c))
            .collect::<Result<_>>()?,
    })
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn field(rec: &csv::StringRecord, idx: usize) -> &str {
    rec.get(idx).unwrap_or("").trim()
}

fn parse_f64(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = field(rec, idx);
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row: line_of(rec),
            column: name.to_string(),
            value: raw.to_string(),
        })
}

fn parse_flag(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<u8> {
    let raw = field(rec, idx);
    match raw {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::Parse {
            row: line_of(rec),
            column: name.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn design_for(has_cluster: bool) -> Design {
    if has_cluster {
        Design::Crt
    } else {
        Design::Irt
    }
}

/// Read the wide format
/// `id[,cluster],arm,time_1..time_{Q+1},status_1..status_{Q+1},<covariates>`.
/// The design is CRT when a `cluster` column is present.
pub fn read_wide_csv<R: Read>(
    reader: R,
    n_stages: usize,
    covariate_names: &[String],
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = common_columns(&headers, covariate_names)?;
    let time_names: Vec<String> = (1..=n_stages).map(|q| format!("time_{q}")).collect();
    let status_names: Vec<String> = (1..=n_stages).map(|q| format!("status_{q}")).collect();
    let time_cols = time_names
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let status_cols = status_names
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let arm = parse_flag(&row, cols.arm, "arm")?;
        let times = time_cols
            .iter()
            .zip(&time_names)
            .map(|(&i, n)| parse_f64(&row, i, n))
            .collect::<Result<Vec<_>>>()?;
        let indicators = status_cols
            .iter()
            .zip(&status_names)
            .map(|(&i, n)| parse_flag(&row, i, n).map(|v| v == 1))
            .collect::<Result<Vec<_>>>()?;
        let covariates = cols
            .covariates
            .iter()
            .zip(covariate_names)
            .map(|(&i, n)| parse_f64(&row, i, n))
            .collect::<Result<Vec<_>>>()?;
        records.push(MultiStateRecord {
            subject_id: field(&row, cols.id).to_string(),
            cluster_id: cols.cluster.map(|c| field(&row, c).to_string()),
            arm,
            covariates,
            times,
            indicators,
        });
    }
    Dataset::new(
        records,
        n_stages,
        covariate_names.to_vec(),
        design_for(cols.cluster.is_some()),
    )
}

pub fn load_wide_csv(
    path: impl AsRef<Path>,
    n_stages: usize,
    covariate_names: &[String],
) -> Result<Dataset> {
    read_wide_csv(std::fs::File::open(path)?, n_stages, covariate_names)
}

/// Result of reading long-format data.
#[derive(Debug, Clone)]
pub struct LongLoad {
    pub dataset: Dataset,
    /// Subjects that appeared only on rows without a transition and were skipped.
    pub skipped_subjects: Vec<String>,
}

struct LongSubject {
    cluster: Option<String>,
    arm: u8,
    covariates: Vec<f64>,
    rows: Vec<(f64, usize)>,
}

/// Read the long format `id[,cluster],arm,time,event,<covariates>` with one row
/// per observed transition (`event` is the state entered) plus a final
/// `event = 0` row when follow-up ends by censoring. Rows whose `time` and
/// `event` cells are both empty only register the subject; subjects without
/// any transition rows are skipped and reported.
pub fn read_long_csv<R: Read>(
    reader: R,
    n_stages: usize,
    covariate_names: &[String],
) -> Result<LongLoad> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = common_columns(&headers, covariate_names)?;
    let time_col = column(&headers, "time")?;
    let event_col = column(&headers, "event")?;

    let mut order: Vec<String> = Vec::new();
    let mut subjects: HashMap<String, LongSubject> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let id = field(&row, cols.id).to_string();
        let arm = parse_flag(&row, cols.arm, "arm")?;
        let covariates = cols
            .covariates
            .iter()
            .zip(covariate_names)
            .map(|(&i, n)| parse_f64(&row, i, n))
            .collect::<Result<Vec<_>>>()?;
        let entry = subjects.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            LongSubject {
                cluster: cols.cluster.map(|c| field(&row, c).to_string()),
                arm,
                covariates,
                rows: Vec::new(),
            }
        });
        if entry.arm != arm {
            return Err(Error::Format {
                subject_id: id,
                message: format!("line {}: arm changes between rows", line_of(&row)),
            });
        }
        if field(&row, time_col).is_empty() && field(&row, event_col).is_empty() {
            continue;
        }
        let time = parse_f64(&row, time_col, "time")?;
        let raw_event = field(&row, event_col);
        let event = raw_event
            .parse::<usize>()
            .ok()
            .filter(|e| *e <= n_stages)
            .ok_or_else(|| Error::Parse {
                row: line_of(&row),
                column: "event".into(),
                value: raw_event.to_string(),
            })?;
        entry.rows.push((time, event));
    }

    let mut records = Vec::with_capacity(order.len());
    let mut skipped = Vec::new();
    for id in order {
        let mut s = subjects.remove(&id).expect("subject registered");
        if s.rows.is_empty() {
            skipped.push(id);
            continue;
        }
        // Event-first ordering at tied times: a censoring row sorts last.
        s.rows.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| (a.1 == 0).cmp(&(b.1 == 0)))
                .then_with(|| a.1.cmp(&b.1))
        });
        let (times, indicators) = long_rows_to_wide(&id, &s.rows, n_stages)?;
        records.push(MultiStateRecord {
            subject_id: id,
            cluster_id: s.cluster,
            arm: s.arm,
            covariates: s.covariates,
            times,
            indicators,
        });
    }
    let dataset = Dataset::new(
        records,
        n_stages,
        covariate_names.to_vec(),
        design_for(cols.cluster.is_some()),
    )?;
    Ok(LongLoad {
        dataset,
        skipped_subjects: skipped,
    })
}

pub fn load_long_csv(
    path: impl AsRef<Path>,
    n_stages: usize,
    covariate_names: &[String],
) -> Result<LongLoad> {
    read_long_csv(std::fs::File::open(path)?, n_stages, covariate_names)
}

/// Convert one subject's sorted `(time, state)` rows to stage times and
/// indicators: `U^q` is the first time a state `>= q` is entered, otherwise the
/// last observed time with `delta^q = 0`.
fn long_rows_to_wide(
    id: &str,
    rows: &[(f64, usize)],
    n_stages: usize,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let fail = |message: String| Error::Format {
        subject_id: id.to_string(),
        message,
    };
    let mut last_state = 0usize;
    for (k, &(_, e)) in rows.iter().enumerate() {
        if e == 0 {
            if k + 1 != rows.len() {
                return Err(fail("event 0 (censoring) is only allowed on the last row".into()));
            }
        } else {
            if e <= last_state {
                return Err(fail(format!(
                    "duplicate or decreasing state {e} after state {last_state}"
                )));
            }
            last_state = e;
        }
    }
    let end = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let mut times = Vec::with_capacity(n_stages);
    let mut indicators = Vec::with_capacity(n_stages);
    for q in 1..=n_stages {
        match rows.iter().find(|r| r.1 >= q) {
            Some(&(t, _)) => {
                times.push(t);
                indicators.push(true);
            }
            None => {
                times.push(end);
                indicators.push(false);
            }
        }
    }
    Ok((times, indicators))
}

// ---------------------------------------------------------------------------
// CSV output

fn header_prefix(ds: &Dataset) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    if ds.design == Design::Crt {
        h.push("cluster".into());
    }
    h.push("arm".into());
    h
}

fn prefix_fields(ds: &Dataset, r: &MultiStateRecord) -> Vec<String> {
    let mut f = vec![r.subject_id.clone()];
    if ds.design == Design::Crt {
        f.push(r.cluster_id.clone().unwrap_or_default());
    }
    f.push(r.arm.to_string());
    f
}

pub fn write_wide_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = header_prefix(ds);
    header.extend((1..=ds.n_stages).map(|q| format!("time_{q}")));
    header.extend((1..=ds.n_stages).map(|q| format!("status_{q}")));
    header.extend(ds.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row = prefix_fields(ds, r);
        row.extend(r.times.iter().map(|t| t.to_string()));
        row.extend(r.indicators.iter().map(|d| u8::from(*d).to_string()));
        row.extend(r.covariates.iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the long format, one row per distinct observed transition time
/// (carrying the highest state entered at that time) and a trailing `event = 0`
/// row for censored follow-up.
pub fn write_long_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = header_prefix(ds);
    header.extend(["time".to_string(), "event".to_string()]);
    header.extend(ds.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for r in &ds.records {
        let mut rows: Vec<(f64, usize)> = Vec::new();
        for q in 0..ds.n_stages {
            if !r.indicators[q] {
                break;
            }
            match rows.last_mut() {
                Some(last) if last.0 == r.times[q] => last.1 = q + 1,
                _ => rows.push((r.times[q], q + 1)),
            }
        }
        if r.censored() {
            rows.push((r.follow_up(), 0));
        }
        for (t, e) in rows {
            let mut row = prefix_fields(ds, r);
            row.push(t.to_string());
            row.push(e.to_string());
            row.extend(r.covariates.iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Collapse non-terminal states above `cap` into state `cap`, keeping the
/// terminal state as stage `cap + 1`. Returns the dataset unchanged together
/// with a warning when there is nothing to collapse.
pub fn winsorize_states(ds: &Dataset, cap: usize) -> Result<(Dataset, Option<String>)> {
    if cap == 0 {
        return Err(Error::invalid("winsorization cap must be at least 1"));
    }
    if cap + 1 >= ds.n_stages {
        let msg = format!(
            "cap {cap} keeps all {} stages; winsorization is a no-op",
            ds.n_stages
        );
        return Ok((ds.clone(), Some(msg)));
    }
    let last = ds.n_stages - 1;
    let records = ds
        .records
        .iter()
        .map(|r| {
            let mut times = r.times[..cap].to_vec();
            let mut indicators = r.indicators[..cap].to_vec();
            times.push(r.times[last]);
            indicators.push(r.indicators[last]);
            MultiStateRecord {
                times,
                indicators,
                ..r.clone()
            }
        })
        .collect();
    let out = Dataset::new(records, cap + 1, ds.covariate_names.clone(), ds.design)?;
    Ok((out, None))
}
