//! Parameter sweeps over generated instances.
//!
//! A run is a deterministic function of its configuration: every replication
//! draws its instance from a seed derived from the master seed and the
//! replication index (shared across grid points, so neighboring points
//! compare the same random draws), and results are sorted before they are
//! aggregated.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Cursor;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::benchmarks::{run_mechanism, Mechanism};
use crate::graph::{received_service, NodeId, SocialRequestGraph};
use crate::instance::{parse_instance, DEFAULT_PRECISION};
use crate::simgen::{
    dataset_rng, derive_seed, gen_er_instance, gen_er_social, gen_spectrum_instance, load_social_edge_list, ErParams,
    SocialGraph, SpectrumParams, UserOverride,
};
use crate::solver::{Objective, SolveOptions};
use crate::transforms::ServiceMode;
use crate::{Rational, Scalar};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed results CSV: {0}")]
    Csv(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Csv(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Setting {
    #[default]
    Er,
    Spectrum,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Er => "er",
            Setting::Spectrum => "spectrum",
        })
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "er" => Ok(Setting::Er),
            "spectrum" => Ok(Setting::Spectrum),
            other => Err(format!("unknown setting {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub setting: Setting,
    /// Swept parameter; `None` runs a single point.
    pub sweep: Option<String>,
    /// Grid values as written in the config.
    pub values: Vec<String>,
    pub replications: usize,
    pub mechanisms: Vec<Mechanism>,
    pub objective: Objective,
    /// Defaults to divisible for the ER setting and indivisible for spectrum.
    pub mode: Option<ServiceMode>,
    pub seed: u64,
    pub precision: u32,
    pub output: Option<PathBuf>,
    pub per_user_output: Option<PathBuf>,
    pub er: ErParams,
    pub spectrum: SpectrumParams,
    /// Trust probability of the generated social graph when no dataset is given.
    pub social_p_s: f64,
    pub dataset: Option<PathBuf>,
    /// Fixed instance file used for every replication instead of a generator.
    pub instance: Option<PathBuf>,
    /// Off by default so repeated runs produce identical output.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            setting: Setting::Er,
            sweep: None,
            values: Vec::new(),
            replications: 50,
            mechanisms: Mechanism::ALL.to_vec(),
            objective: Objective::Utility,
            mode: None,
            seed: 0,
            precision: DEFAULT_PRECISION,
            output: None,
            per_user_output: None,
            er: ErParams::default(),
            spectrum: SpectrumParams::default(),
            social_p_s: 0.2,
            dataset: None,
            instance: None,
            record_wall_time: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
}

fn parse_list<T: FromStr<Err = String>>(value: &str) -> Result<Vec<T>, String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

impl ExperimentConfig {
    pub fn service_mode(&self) -> ServiceMode {
        self.mode.unwrap_or(match self.setting {
            Setting::Er => ServiceMode::Divisible,
            Setting::Spectrum => ServiceMode::Indivisible,
        })
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { mode: self.service_mode(), objective: self.objective, precision: self.precision }
    }

    /// Sets one generator parameter by name. Names without a prefix refer to
    /// the active setting; `user.<id>.<field>` sets an ER per-user override.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<(), String> {
        if let Some(rest) = key.strip_prefix("user.") {
            let (id, field) = rest.split_once('.').ok_or_else(|| format!("expected user.<id>.<field>, got {key}"))?;
            let id = NodeId(parse_num(key, id)?);
            let v: f64 = parse_num(key, value)?;
            let o: &mut UserOverride = self.er.overrides.entry(id).or_default();
            match field {
                "p_s" => o.p_s = Some(v),
                "p_r" => o.p_r = Some(v),
                "mu_s" => o.mu_s = Some(v),
                "mu_r" => o.mu_r = Some(v),
                "mu_u" => o.mu_u = Some(v),
                other => return Err(format!("unknown per-user field {other:?}")),
            }
            return Ok(());
        }
        match (self.setting, key) {
            (_, "seed") => self.seed = parse_num(key, value)?,
            (_, "precision") => self.precision = parse_num(key, value)?,
            (Setting::Er, "n") => self.er.n = parse_num(key, value)?,
            (Setting::Er, "p_s") => self.er.p_s = parse_num(key, value)?,
            (Setting::Er, "p_r") => self.er.p_r = parse_num(key, value)?,
            (Setting::Er, "mu_s") => self.er.mu_s = parse_num(key, value)?,
            (Setting::Er, "sigma2_s") => self.er.sigma2_s = parse_num(key, value)?,
            (Setting::Er, "mu_r") => self.er.mu_r = parse_num(key, value)?,
            (Setting::Er, "sigma2_r") => self.er.sigma2_r = parse_num(key, value)?,
            (Setting::Er, "mu_u") => self.er.mu_u = parse_num(key, value)?,
            (Setting::Er, "sigma2_u") => self.er.sigma2_u = parse_num(key, value)?,
            (Setting::Spectrum, "n") => self.spectrum.n = parse_num(key, value)?,
            (Setting::Spectrum, "transmitters") => self.spectrum.transmitters = parse_num(key, value)?,
            (Setting::Spectrum, "area") => self.spectrum.area = parse_num(key, value)?,
            (Setting::Spectrum, "channels") => self.spectrum.channels = parse_num(key, value)?,
            (Setting::Spectrum, "max_providers") => self.spectrum.max_providers = parse_num(key, value)?,
            (Setting::Spectrum, "n_s") => self.spectrum.n_s = parse_num(key, value)?,
            (Setting::Spectrum, "n_r") => self.spectrum.n_r = parse_num(key, value)?,
            (Setting::Spectrum, "p_s") => self.social_p_s = parse_num(key, value)?,
            (setting, other) => return Err(format!("unknown parameter {other:?} for the {setting} setting")),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    ///
    /// Run keys: `setting`, `sweep`, `values` (comma separated),
    /// `replications`, `mechanisms`, `objective`, `mode`, `output`,
    /// `per_user_output`, `dataset`, `instance`, `record_wall_time`. Any other key is a
    /// generator parameter (see [`ExperimentConfig::set_param`]). `setting`
    /// must come before setting-specific parameters.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut config = ExperimentConfig::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |message: String| ExperimentError::Config { line: k + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| fail(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let result: Result<(), String> = match key {
                "setting" => value.parse().map(|s| config.setting = s),
                "sweep" => {
                    config.sweep = Some(value.to_string());
                    Ok(())
                }
                "values" => {
                    config.values = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                    Ok(())
                }
                "replications" => parse_num(key, value).map(|r| config.replications = r),
                "mechanisms" => parse_list(value).map(|m| config.mechanisms = m),
                "objective" => value.parse().map(|o| config.objective = o),
                "mode" => value.parse().map(|m| config.mode = Some(m)),
                "output" => {
                    config.output = Some(PathBuf::from(value));
                    Ok(())
                }
                "per_user_output" => {
                    config.per_user_output = Some(PathBuf::from(value));
                    Ok(())
                }
                "dataset" => {
                    config.dataset = Some(PathBuf::from(value));
                    Ok(())
                }
                "instance" => {
                    config.instance = Some(PathBuf::from(value));
                    Ok(())
                }
                "record_wall_time" => parse_num(key, value).map(|b| config.record_wall_time = b),
                _ => config.set_param(key, value),
            };
            result.map_err(fail)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: &str| Err(ExperimentError::Invalid(m.to_string()));
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if self.mechanisms.is_empty() {
            return invalid("no mechanisms selected");
        }
        match &self.sweep {
            Some(_) if self.values.is_empty() => return invalid("sweep has an empty value grid"),
            None if !self.values.is_empty() => return invalid("values given without a sweep parameter"),
            _ => {}
        }
        if self.per_user_output.is_some() && self.points().len() != 1 {
            return invalid("per-user output needs a single-point grid");
        }
        for (_, point) in self.point_configs().map_err(ExperimentError::Invalid)? {
            if let Setting::Er = point.setting {
                point.er.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Grid values, or a single `-` when nothing is swept.
    pub fn points(&self) -> Vec<String> {
        if self.sweep.is_some() {
            self.values.clone()
        } else {
            vec!["-".to_string()]
        }
    }

    fn point_configs(&self) -> Result<Vec<(String, ExperimentConfig)>, String> {
        self.points()
            .into_iter()
            .map(|value| {
                let mut point = self.clone();
                if let Some(key) = &self.sweep {
                    point.set_param(key, &value)?;
                }
                Ok((value, point))
            })
            .collect()
    }
}

/// Metric values of one mechanism on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub total_service: Rational,
    pub total_utility: Rational,
    pub requested: Rational,
    pub iterations: usize,
    pub wall_time: Option<f64>,
    pub received: Vec<(NodeId, Rational)>,
}

impl RunRecord {
    /// Provided over requested service; 1 when nothing was requested.
    pub fn completion_ratio(&self) -> f64 {
        if self.requested == Rational::from_integer(0) {
            1.0
        } else {
            (self.total_service / self.requested).to_f64()
        }
    }
}

/// Records of all mechanisms on one replication, or the reason it failed.
#[derive(Clone, Debug)]
struct Replication {
    point: usize,
    index: usize,
    outcome: Result<BTreeMap<Mechanism, RunRecord>, String>,
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub param: String,
    pub value: String,
    pub mechanism: Mechanism,
    pub metric: String,
    /// `None` when no replication contributes (written as `NA`).
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

pub const CSV_HEADER: [&str; 7] = ["param", "value", "mechanism", "metric", "mean", "stderr", "n"];

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>, ExperimentError> {
    if s == "NA" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| ExperimentError::Csv(format!("bad number {s:?}")))
    }
}

impl MetricsTable {
    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.param.clone(),
                r.value.clone(),
                r.mechanism.to_string(),
                r.metric.clone(),
                fmt_opt(r.mean),
                fmt_opt(r.stderr),
                r.n.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, ExperimentError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        if reader.headers()?.iter().ne(CSV_HEADER) {
            return Err(ExperimentError::Csv("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let r = record?;
            rows.push(MetricsRow {
                param: r[0].to_string(),
                value: r[1].to_string(),
                mechanism: r[2].parse().map_err(ExperimentError::Csv)?,
                metric: r[3].to_string(),
                mean: parse_opt(&r[4])?,
                stderr: parse_opt(&r[5])?,
                n: r[6].parse().map_err(|_| ExperimentError::Csv(format!("bad count {:?}", &r[6])))?,
            });
        }
        Ok(MetricsTable { rows })
    }

    /// Looks up a row.
    pub fn get(&self, value: &str, mechanism: Mechanism, metric: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.value == value && r.mechanism == mechanism && r.metric == metric)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerUserRow {
    pub user: NodeId,
    pub mechanism: Mechanism,
    /// Mean over replications.
    pub received_service: f64,
}

pub fn per_user_csv(rows: &[PerUserRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["user_id", "mechanism", "received_service"])?;
    for r in rows {
        w.write_record([r.user.to_string(), r.mechanism.to_string(), r.received_service.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub table: MetricsTable,
    pub per_user: Vec<PerUserRow>,
    /// Failed replications as `(grid value, replication, error)`.
    pub failures: Vec<(String, usize, String)>,
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (None, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

/// Inputs read once and shared by every replication.
struct Inputs {
    dataset: Option<String>,
    fixed: Option<SocialRequestGraph<Rational>>,
}

fn instance_for(point: &ExperimentConfig, seed: u64, inputs: &Inputs) -> Result<SocialRequestGraph<Rational>, String> {
    if let Some(g) = &inputs.fixed {
        return Ok(g.clone());
    }
    match point.setting {
        Setting::Er => gen_er_instance(&ErParams { seed, precision: point.precision, ..point.er.clone() })
            .map_err(|e| e.to_string()),
        Setting::Spectrum => {
            let params = SpectrumParams { seed, precision: point.precision, ..point.spectrum.clone() };
            let social: SocialGraph = match &inputs.dataset {
                Some(text) => {
                    let mut rng = dataset_rng(seed);
                    load_social_edge_list(Cursor::new(text), params.n, params.n_s, &mut rng)
                }
                None => gen_er_social(params.n as u32, point.social_p_s, params.n_s, seed),
            }
            .map_err(|e| e.to_string())?;
            gen_spectrum_instance(&params, &social).map_err(|e| e.to_string())
        }
    }
}

fn run_replication(
    point: &ExperimentConfig,
    mechanisms: &[Mechanism],
    seed: u64,
    inputs: &Inputs,
) -> Result<BTreeMap<Mechanism, RunRecord>, String> {
    let graph = instance_for(point, seed, inputs)?;
    let options = point.solve_options();
    let requested = graph.requested_service();
    let mut out = BTreeMap::new();
    for &m in mechanisms {
        let start = Instant::now();
        let result = run_mechanism(&graph, m, options).map_err(|e| format!("{m}: {e}"))?;
        let wall_time = point.record_wall_time.then(|| start.elapsed().as_secs_f64());
        let s = &result.solution;
        let received = graph.nodes().iter().copied().zip(received_service(&graph, &s.flow)).collect();
        out.insert(
            m,
            RunRecord {
                total_service: s.total_service,
                total_utility: s.utility,
                requested,
                iterations: s.iterations,
                wall_time,
                received,
            },
        );
    }
    Ok(out)
}

/// Runs every replication of every grid point and aggregates the metrics.
///
/// `jobs` bounds the worker threads (`None` uses rayon's default). Failed
/// replications are logged, listed in the result and left out of the means.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let points = config.point_configs().map_err(ExperimentError::Invalid)?;
    let dataset = config.dataset.as_ref().map(std::fs::read_to_string).transpose()?;
    let fixed = match &config.instance {
        Some(path) => Some(
            parse_instance(&std::fs::read_to_string(path)?, config.precision)
                .map_err(|e| ExperimentError::Invalid(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let inputs = Inputs { dataset, fixed };

    // RP is always run so the other mechanisms can be normalized against it.
    let mut mechanisms = config.mechanisms.clone();
    mechanisms.sort();
    mechanisms.dedup();
    let mut to_run = mechanisms.clone();
    if !to_run.contains(&Mechanism::Rp) {
        to_run.push(Mechanism::Rp);
    }

    let work: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..config.replications).map(move |r| (p, r))).collect();
    let job = |&(p, r): &(usize, usize)| Replication {
        point: p,
        index: r,
        outcome: run_replication(&points[p].1, &to_run, derive_seed(config.seed, r as u64), &inputs),
    };
    let mut reps: Vec<Replication> = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(|| work.par_iter().map(job).collect()),
        None => work.par_iter().map(job).collect(),
    };
    reps.sort_by_key(|r| (r.point, r.index));

    let param = config.sweep.clone().unwrap_or_else(|| "-".to_string());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for rep in &reps {
        if let Err(e) = &rep.outcome {
            log::error!("replication {} at {}={} failed: {e}", rep.index, param, points[rep.point].0);
            failures.push((points[rep.point].0.clone(), rep.index, e.clone()));
        }
    }

    for (p, (value, _)) in points.iter().enumerate() {
        let ok: Vec<&BTreeMap<Mechanism, RunRecord>> =
            reps.iter().filter(|r| r.point == p).filter_map(|r| r.outcome.as_ref().ok()).collect();
        for &m in &mechanisms {
            let row = |metric: &str, xs: Vec<f64>| {
                let (mean, stderr) = mean_stderr(&xs);
                MetricsRow {
                    param: param.clone(),
                    value: value.clone(),
                    mechanism: m,
                    metric: metric.to_string(),
                    mean,
                    stderr,
                    n: xs.len(),
                }
            };
            let records: Vec<&RunRecord> = ok.iter().map(|r| &r[&m]).collect();
            rows.push(row("total_service", records.iter().map(|r| r.total_service.to_f64()).collect()));
            rows.push(row("total_utility", records.iter().map(|r| r.total_utility.to_f64()).collect()));
            rows.push(row("completion_ratio", records.iter().map(|r| r.completion_ratio()).collect()));
            rows.push(row("iterations", records.iter().map(|r| r.iterations as f64).collect()));
            if config.record_wall_time {
                rows.push(row("wall_time", records.iter().filter_map(|r| r.wall_time).collect()));
            }
            let service = |r: &RunRecord| r.total_service;
            let utility = |r: &RunRecord| r.total_utility;
            for (metric, zero_metric, pick) in [
                ("normalized_service", "rp_zero_service", &service as &dyn Fn(&RunRecord) -> Rational),
                ("normalized_utility", "rp_zero_utility", &utility),
            ] {
                let mut ratios = Vec::new();
                let mut zero = 0usize;
                for r in &ok {
                    let base = pick(&r[&Mechanism::Rp]);
                    if base > Rational::from_integer(0) {
                        ratios.push((pick(&r[&m]) / base).to_f64());
                    } else {
                        zero += 1;
                    }
                }
                rows.push(row(metric, ratios));
                rows.push(MetricsRow { mean: Some(zero as f64), stderr: Some(0.0), n: ok.len(), ..row(zero_metric, Vec::new()) });
            }
        }
    }

    let mut per_user = Vec::new();
    if config.per_user_output.is_some() {
        for &m in &mechanisms {
            let mut sums: BTreeMap<NodeId, (f64, usize)> = BTreeMap::new();
            for rec in reps.iter().filter_map(|r| r.outcome.as_ref().ok()) {
                for &(user, got) in &rec[&m].received {
                    let e = sums.entry(user).or_default();
                    e.0 += got.to_f64();
                    e.1 += 1;
                }
            }
            per_user.extend(sums.into_iter().map(|(user, (sum, n))| PerUserRow {
                user,
                mechanism: m,
                received_service: sum / n as f64,
            }));
        }
    }
    Ok(ExperimentResult { table: MetricsTable { rows }, per_user, failures })
}
