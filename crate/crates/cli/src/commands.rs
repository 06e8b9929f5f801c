// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Subcommand implementations. Each is a pure function of the config, the
//! seed and its input files; the only nondeterministic outputs are the
//! manifest timestamps.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bgrape::dynamics::{ControlField, ControlModel, UncertaintySample};
use bgrape::evaluation::{
    baseline_pulse, error_distribution, landscape, levelset_area, rotation_angle, test_loss, BaselinePulse, GridSpec,
};
use bgrape::objective::sample_loss;
use bgrape::optimizer::{initial_field, run_with_observer, RunStatus};
use bgrape::sampling::{RandomSource, EVAL_STREAM};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::io;

/// Thresholds always reported by `landscape`.
pub const AREA_THRESHOLDS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug)]
pub enum CliError {
    /// Bad config, flags or input files.
    Config(String),
    /// The numerics failed on valid input.
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numeric(m) => write!(f, "numeric failure: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<bgrape::Error> for CliError {
    fn from(e: bgrape::Error) -> Self {
        Self::Numeric(e.to_string())
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Rectangular,
    Gaussian,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    fn of(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            name: path
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            bytes: fs::metadata(path)?.len(),
            sha256: io::sha256_file(path)?,
        })
    }
}

/// Written last, atomically; every listed output exists.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub software_version: String,
    pub seed: u64,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub config_path: String,
    pub config: ExperimentConfig,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    #[serde(flatten)]
    pub results: Map<String, Value>,
}

/// What a finished subcommand leaves behind.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

struct Session {
    experiment: Experiment,
    dir: PathBuf,
    started: chrono::DateTime<chrono::Utc>,
    threads: usize,
    inputs: Vec<FileEntry>,
    outputs: Vec<PathBuf>,
}

impl Session {
    fn open(common: &Common) -> Result<(Self, rayon::ThreadPool), CliError> {
        let started = chrono::Utc::now();
        let mut experiment = Experiment::load(&common.config)?;
        if let Some(seed) = common.seed {
            experiment.set_seed(seed);
        }
        if common.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?;
        let requested = common
            .out
            .clone()
            .unwrap_or_else(|| experiment.config.output_dir.clone());
        let dir = io::prepare_output_dir(&requested, common.force)?;
        let threads = pool.current_num_threads();
        Ok((
            Self {
                experiment,
                dir,
                started,
                threads,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
            pool,
        ))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path(name);
        io::write_atomic(&path, contents.as_bytes())?;
        self.outputs.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        io::write_json(&path, value)?;
        self.outputs.push(path);
        Ok(())
    }

    /// Loads a field of the configured shape.
    fn read_field(&mut self, path: &Path) -> Result<ControlField, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read field {}: {e}", path.display())))?;
        let e = &self.experiment;
        let field = io::parse_field(&text, e.segments(), e.model.num_controls(), e.duration())
            .map_err(|m| CliError::Config(format!("{}: {m}", path.display())))?;
        self.inputs.push(FileEntry::of(path)?);
        Ok(field)
    }

    fn finish(self, command: &str, results: Map<String, Value>) -> Result<Outcome, CliError> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| FileEntry::of(p))
            .collect::<std::io::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: command.to_owned(),
            software_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: self.experiment.config.seed,
            threads: self.threads,
            started: self.started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            config_path: self.experiment.path.display().to_string(),
            config: self.experiment.config.clone(),
            inputs: self.inputs,
            outputs,
            results,
        };
        io::write_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(Outcome {
            dir: self.dir,
            manifest,
        })
    }
}

fn nominal_infidelity(e: &Experiment, field: &ControlField) -> Result<f64, CliError> {
    let eps = UncertaintySample::zeros(e.model.uncertainty_dim());
    Ok(sample_loss(&e.model, field, &e.objective, &eps)?)
}

fn results(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m,
        _ => unreachable!("results are always objects"),
    }
}

/// Trains a field; writes `trace.csv`, `field_final.csv`, `field_best.csv`
/// and `manifest.json`. `initial` replaces the seeded random guess.
pub fn optimize(common: &Common, initial: Option<&Path>) -> Result<Outcome, CliError> {
    let (mut s, pool) = Session::open(common)?;
    let init = match initial {
        Some(path) => {
            let f = s.read_field(path)?;
            match s.experiment.bound() {
                Some(b) => f.clamped_to(b)?,
                None => f,
            }
        }
        None => {
            let e = &s.experiment;
            initial_field(
                e.segments(),
                e.model.num_controls(),
                e.duration(),
                e.bound(),
                e.config.seed,
            )?
        }
    };

    let trace_path = s.path("trace.csv");
    let mut trace = BufWriter::new(fs::File::create(&trace_path)?);
    writeln!(trace, "{}", io::TRACE_HEADER)?;
    let mut write_error = None;
    let e = &s.experiment;
    let budget = e.optimizer.sample_budget;
    let step = (budget / 10).max(1);
    let mut next_report = step;
    let result = pool.install(|| {
        let scheduler = e.optimizer.scheduler(e.distribution.clone())?;
        run_with_observer(&e.model, &e.objective, &init, scheduler, &e.optimizer, |row| {
            if write_error.is_none() {
                if let Err(err) = trace.write_all(io::trace_line(row).as_bytes()) {
                    write_error = Some(err);
                }
            }
            if row.samples >= next_report {
                let test = row.test_loss.map_or(String::new(), |t| format!(" test {t:.3e}"));
                eprintln!(
                    "[optimize] samples {}/{budget} batch {:.3e}{test}",
                    row.samples, row.batch_loss
                );
                next_report = row.samples + step;
            }
        })
    })?;
    if let Some(err) = write_error {
        return Err(err.into());
    }
    trace.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    s.outputs.push(trace_path);

    s.write("field_final.csv", &io::field_csv(&result.final_field))?;
    s.write("field_best.csv", &io::field_csv(&result.best.field))?;
    let e = &s.experiment;
    let final_nominal = nominal_infidelity(e, &result.final_field)?;
    let best_nominal = nominal_infidelity(e, &result.best.field)?;
    let (status, at) = match result.status {
        RunStatus::Completed => ("completed", None),
        RunStatus::Diverged { iteration } => ("diverged", Some(iteration)),
        RunStatus::TargetReached { iteration } => ("target_reached", Some(iteration)),
    };
    let last = result.trace.rows.last().expect("a run logs at least one row");
    println!(
        "{} {}: {} iterations, {} samples, final test {:.3e}, best test {:.3e}, nominal {:.3e}{}",
        e.optimizer.batch_mode.name(),
        status,
        last.iteration,
        last.samples,
        result.final_test_loss,
        result.best.test_loss,
        final_nominal,
        if result.diverged() { " (diverged)" } else { "" },
    );
    let body = json!({
        "mode": e.optimizer.batch_mode.name(),
        "status": status,
        "status_iteration": at,
        "diverged": result.diverged(),
        "iterations": last.iteration,
        "samples": last.samples,
        "final_batch_loss": result.final_batch_loss(),
        "final_test_loss": result.final_test_loss,
        "best_test_loss": result.best.test_loss,
        "best_iteration": result.best.iteration,
        "final_nominal_infidelity": final_nominal,
        "best_nominal_infidelity": best_nominal,
    });
    s.finish("optimize", results(body))
}

/// Infidelity over the `(ε₁, ε₂)` grid; writes `landscape.csv` and
/// `area.json`.
pub fn landscape_cmd(
    common: &Common,
    field: &Path,
    grid: Option<usize>,
    threshold: Option<f64>,
) -> Result<Outcome, CliError> {
    let (mut s, pool) = Session::open(common)?;
    let f = s.read_field(field)?;
    let e = &s.experiment;
    if e.model.uncertainty_dim() != 2 {
        return Err(CliError::Config(format!(
            "landscapes need a two-parameter model; this one has {} uncertainty components",
            e.model.uncertainty_dim()
        )));
    }
    let points = grid.unwrap_or(e.config.evaluation.grid_points);
    let (lo, hi) = e
        .grid_box()
        .ok_or_else(|| CliError::Config("set evaluation.grid_half_width or use a box prior".into()))?;
    let spec = GridSpec::new(lo, hi, [points, points]).map_err(|err| CliError::Config(err.to_string()))?;
    if let Some(t) = threshold {
        if !(t > 0.0) {
            return Err(CliError::Config(format!("--threshold must be positive, got {t}")));
        }
    }
    let land = pool.install(|| landscape(&e.model, &f, &e.objective, &spec))?;

    let mut csv = format!("{}\n", io::LANDSCAPE_HEADER);
    for (x, y, v) in land.nodes() {
        csv.push_str(&format!(
            "{},{},{}\n",
            io::format_float(x),
            io::format_float(y),
            io::format_float(v)
        ));
    }
    let mut thresholds = AREA_THRESHOLDS.to_vec();
    thresholds.extend(threshold.filter(|t| !AREA_THRESHOLDS.contains(t)));
    let areas: Map<String, Value> = thresholds
        .iter()
        .map(|&t| (format!("{t:e}"), json!(levelset_area(&land, t))))
        .collect();
    let area = json!({
        "areas": areas,
        "grid_points": points,
        "lo": lo,
        "hi": hi,
        "box_area": spec.box_area(),
        "cell_area": spec.cell_area(),
    });
    let (i, j) = land.argmin();
    println!(
        "landscape {points}x{points}: min {:.3e} at ({:.4}, {:.4}); area(1e-3) = {:.6}",
        land.value(i, j),
        spec.coordinate(0, i),
        spec.coordinate(1, j),
        levelset_area(&land, 1e-3)
    );
    s.write("landscape.csv", &csv)?;
    s.write_json("area.json", &area)?;
    let body = json!({ "grid_points": points, "areas": area["areas"].clone() });
    s.finish("landscape", results(body))
}

pub enum FieldSource<'a> {
    File(&'a Path),
    Baseline(BaselineKind),
}

fn baseline_field(e: &Experiment, kind: BaselineKind) -> Result<ControlField, CliError> {
    if e.model.num_controls() != 2 {
        return Err(CliError::Config(
            "baseline pulses need the two-channel qubit model".into(),
        ));
    }
    let pulse = match kind {
        BaselineKind::Rectangular => BaselinePulse::Rectangular,
        BaselineKind::Gaussian => BaselinePulse::Gaussian {
            width_fraction: e.config.evaluation.gaussian_width,
        },
    };
    baseline_pulse(pulse, e.duration(), e.segments()).map_err(|err| CliError::Config(err.to_string()))
}

/// Monte-Carlo gate errors; writes `errors.csv` (ascending) and
/// `summary.json`.
pub fn distribution(common: &Common, source: FieldSource<'_>, samples: Option<usize>) -> Result<Outcome, CliError> {
    let (mut s, pool) = Session::open(common)?;
    let (f, label) = match source {
        FieldSource::File(p) => (s.read_field(p)?, p.display().to_string()),
        FieldSource::Baseline(kind) => {
            let f = baseline_field(&s.experiment, kind)?;
            let name = match kind {
                BaselineKind::Rectangular => "rectangular",
                BaselineKind::Gaussian => "gaussian",
            };
            (f, name.to_owned())
        }
    };
    let e = &s.experiment;
    let n = samples.unwrap_or(e.config.evaluation.samples);
    if n == 0 {
        return Err(CliError::Config("--samples must be at least 1".into()));
    }
    let mut rng = RandomSource::with_stream(e.config.seed, EVAL_STREAM);
    let dist = pool.install(|| error_distribution(&e.model, &f, &e.objective, &e.distribution, n, &mut rng))?;

    let mut csv = format!("{}\n", io::ERRORS_HEADER);
    for &x in dist.errors() {
        csv.push_str(&io::format_float(x));
        csv.push('\n');
    }
    let summary = dist.summary();
    let body = json!({
        "field": label,
        "samples": summary.samples,
        "prob_below_1e-2": summary.prob_below_1e2,
        "prob_below_1e-3": summary.prob_below_1e3,
        "mean": summary.mean,
        "median": summary.median,
    });
    println!(
        "{label}: P(<1e-2) = {:.4}, P(<1e-3) = {:.4}, mean {:.3e}, median {:.3e} over {n} samples",
        summary.prob_below_1e2, summary.prob_below_1e3, summary.mean, summary.median
    );
    s.write("errors.csv", &csv)?;
    s.write_json("summary.json", &body)?;
    s.finish("distribution", results(body))
}

/// Writes a textbook π-pulse as `field.csv`.
pub fn baseline(common: &Common, kind: BaselineKind) -> Result<Outcome, CliError> {
    let (mut s, _) = Session::open(common)?;
    let f = baseline_field(&s.experiment, kind)?;
    let nominal = nominal_infidelity(&s.experiment, &f)?;
    s.write("field.csv", &io::field_csv(&f))?;
    let body = json!({
        "kind": match kind { BaselineKind::Rectangular => "rectangular", BaselineKind::Gaussian => "gaussian" },
        "rotation_angle": rotation_angle(&f),
        "nominal_infidelity": nominal,
    });
    s.finish("baseline", results(body))
}

/// Nominal and held-out infidelity of a field; writes `evaluation.json`.
/// The held-out set is the one `optimize` uses for the same seed.
pub fn evaluate(common: &Common, field: &Path) -> Result<Outcome, CliError> {
    let (mut s, pool) = Session::open(common)?;
    let f = s.read_field(field)?;
    let e = &s.experiment;
    let test_set = e.optimizer.test_set(&e.distribution);
    let held_out = pool.install(|| test_loss(&e.model, &f, &e.objective, &test_set))?;
    let nominal = nominal_infidelity(e, &f)?;
    let body = json!({
        "nominal_infidelity": nominal,
        "test_loss": held_out,
        "test_set_size": test_set.len(),
        "max_abs_amplitude": f.max_abs_amplitude(),
    });
    println!(
        "nominal {nominal:.6e}, held-out {held_out:.6e} over {} samples",
        test_set.len()
    );
    s.write_json("evaluation.json", &body)?;
    s.finish("evaluate", results(body))
}
