// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration files.
//!
//! A config is a TOML document with a mandatory top-level `seed` and the
//! sections `[model]`, `[target]`, `[distribution]`, `[optimizer]` and
//! `[evaluation]`. Everything except `seed` and `[model]` has defaults that
//! follow the model (Toffoli and a ±0.2 coupling box for `three_qubit`,
//! `R_x(π)` and std-0.05 Fourier noise for `noisy_qubit`).
//!
//! ```toml
//! seed = 1
//! output_dir = "runs/b10"
//!
//! [model]
//! kind = "three_qubit"
//! duration = 10.0
//! segments = 100
//!
//! [optimizer]
//! mode = "fresh_batch"
//! batch_size = 10
//! sample_budget = 100000
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use bgrape::dynamics::{ControlModel, HamiltonianModel};
use bgrape::objective::{FidelityMeasure, GateTarget, Objective};
use bgrape::optimizer::{default_learning_rate, LearningRateSchedule, MomentumRule, OptimizerConfig};
use bgrape::qmat::ComplexMatrix;
use bgrape::sampling::{BatchMode, UncertaintyDistribution};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::io::{parse_float, read_records};

/// A config file problem, pointing at the offending line when it can be found.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if !self.field.is_empty() {
            write!(f, ": {}", self.field)?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ThreeQubit,
    NoisyQubit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Total duration `T`.
    pub duration: f64,
    /// Number of piecewise-constant segments `M`.
    pub segments: usize,
    /// Amplitude bound `|u| <= bound`, enforced by clamping.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Toffoli,
    RxPi,
    /// Matrix read from a CSV of `row,col,re,im` records.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    PhaseSensitive,
    PhaseInvariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalPhase {
    /// Rescale the target into `SU(N)`, the set the models can reach.
    #[default]
    SpecialUnitary,
    AsGiven,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub gate: Option<GateKind>,
    pub path: Option<PathBuf>,
    /// Defaults to phase-sensitive for `three_qubit` and phase-invariant for
    /// `noisy_qubit`.
    pub measure: Option<MeasureKind>,
    #[serde(default)]
    pub global_phase: GlobalPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Box,
    Fourier,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    pub kind: Option<DistributionKind>,
    /// Symmetric box `[-h, h]^d`; alternative to `lo`/`hi`.
    pub half_width: Option<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub amp_sigma: Option<f64>,
    pub modes: Option<usize>,
    pub freq_lo: Option<f64>,
    pub freq_hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    #[default]
    FreshBatch,
    FixedBatch,
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumKind {
    #[default]
    Blend,
    Accumulated,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub mode: ModeKind,
    pub batch_size: usize,
    /// Defaults to `0.002 · batch_size`.
    pub learning_rate: Option<f64>,
    pub momentum: MomentumKind,
    pub lambda: f64,
    pub beta: f64,
    /// Halve (or scale by `decay_factor`) the rate every this many iterations.
    pub decay_every: Option<u64>,
    pub decay_factor: f64,
    pub sample_budget: u64,
    pub test_set_size: usize,
    pub test_every: u64,
    pub target_loss: Option<f64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            mode: ModeKind::FreshBatch,
            batch_size: 10,
            learning_rate: None,
            momentum: MomentumKind::Blend,
            lambda: 0.1,
            beta: 0.9,
            decay_every: None,
            decay_factor: 0.5,
            sample_budget: 100_000,
            test_set_size: 1000,
            test_every: 100,
            target_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Landscape nodes per axis.
    pub grid_points: usize,
    /// Landscape box half-width; defaults to the distribution's box.
    pub grid_half_width: Option<f64>,
    /// Monte-Carlo samples for error distributions.
    pub samples: usize,
    /// Gaussian baseline width as a fraction of `T`.
    pub gaussian_width: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            grid_points: 41,
            grid_half_width: None,
            samples: 10_000,
            gaussian_width: 1.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelSection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub distribution: DistributionSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("bgrape-out")
}

/// Everything a subcommand needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Raw file contents, echoed into manifests.
    pub source: String,
    pub path: PathBuf,
    pub model: HamiltonianModel,
    pub objective: Objective,
    pub distribution: UncertaintyDistribution,
    pub optimizer: OptimizerConfig,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_owned(),
            line: None,
            field: String::new(),
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_source(path, source)
    }

    /// Parses `source` as if it had been read from `path`; relative file
    /// references resolve against the directory of `path`.
    pub fn from_source(path: &Path, source: String) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(&source).map_err(|e| {
            let line = e.span().map(|s| line_of(&source, s.start));
            ConfigError {
                path: path.to_owned(),
                line,
                field: String::new(),
                message: e.message().to_owned(),
            }
        })?;
        let fail = |section: &str, key: &str, message: String| ConfigError {
            path: path.to_owned(),
            line: locate(&source, section, key),
            field: if section.is_empty() {
                key.to_owned()
            } else {
                format!("{section}.{key}")
            },
            message,
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let resolved = resolve(&config, base, &fail)?;
        Ok(Self {
            config,
            source,
            path: path.to_owned(),
            model: resolved.0,
            objective: resolved.1,
            distribution: resolved.2,
            optimizer: resolved.3,
        })
    }

    pub fn duration(&self) -> f64 {
        self.config.model.duration
    }

    pub fn segments(&self) -> usize {
        self.config.model.segments
    }

    pub fn bound(&self) -> Option<f64> {
        self.config.model.bound
    }

    /// Overrides the seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
        self.optimizer.seed = seed;
    }

    /// Landscape half-widths per axis, from `[evaluation]` or the box prior.
    pub fn grid_box(&self) -> Option<([f64; 2], [f64; 2])> {
        if let Some(h) = self.config.evaluation.grid_half_width {
            return Some(([-h; 2], [h; 2]));
        }
        match &self.distribution {
            UncertaintyDistribution::UniformBox { lo, hi } if lo.len() == 2 => Some(([lo[0], lo[1]], [hi[0], hi[1]])),
            _ => None,
        }
    }
}

type Resolved = (HamiltonianModel, Objective, UncertaintyDistribution, OptimizerConfig);

fn resolve(
    config: &ExperimentConfig,
    base: &Path,
    fail: &dyn Fn(&str, &str, String) -> ConfigError,
) -> Result<Resolved, ConfigError> {
    let m = &config.model;
    if !(m.duration > 0.0 && m.duration.is_finite()) {
        return Err(fail(
            "model",
            "duration",
            format!("must be positive, got {}", m.duration),
        ));
    }
    if m.segments == 0 {
        return Err(fail("model", "segments", "must be at least 1".into()));
    }
    if let Some(b) = m.bound {
        if !(b > 0.0) {
            return Err(fail("model", "bound", format!("must be positive, got {b}")));
        }
    }
    let model = match m.kind {
        ModelKind::ThreeQubit => HamiltonianModel::three_qubit_coupling(),
        ModelKind::NoisyQubit => HamiltonianModel::noisy_qubit(),
    };

    let t = &config.target;
    let gate = t.gate.unwrap_or(match m.kind {
        ModelKind::ThreeQubit => GateKind::Toffoli,
        ModelKind::NoisyQubit => GateKind::RxPi,
    });
    let target = match gate {
        GateKind::Toffoli => GateTarget::toffoli(),
        GateKind::RxPi => GateTarget::rx_pi(),
        GateKind::File => {
            let Some(rel) = &t.path else {
                return Err(fail("target", "gate", "gate = \"file\" needs target.path".into()));
            };
            let file = base.join(rel);
            read_matrix(&file).map_err(|e| fail("target", "path", format!("{}: {e}", file.display())))?
        }
    };
    if target.dim() != model.dim() {
        return Err(fail(
            "target",
            "gate",
            format!(
                "target is {0}x{0} but the model acts on dimension {1}",
                target.dim(),
                model.dim()
            ),
        ));
    }
    let target = match t.global_phase {
        GlobalPhase::SpecialUnitary => target.special_unitary(),
        GlobalPhase::AsGiven => target,
    };
    let measure = match t.measure {
        Some(MeasureKind::PhaseSensitive) => FidelityMeasure::PhaseSensitive,
        Some(MeasureKind::PhaseInvariant) => FidelityMeasure::PhaseInvariant,
        None => match m.kind {
            ModelKind::ThreeQubit => FidelityMeasure::PhaseSensitive,
            ModelKind::NoisyQubit => FidelityMeasure::PhaseInvariant,
        },
    };
    let objective = Objective::new(target, measure);

    let distribution = resolve_distribution(&config.distribution, m.kind, model.uncertainty_dim(), fail)?;
    let optimizer = resolve_optimizer(&config.optimizer, config.seed, fail)?;

    let e = &config.evaluation;
    if e.grid_points < 2 {
        return Err(fail("evaluation", "grid_points", "must be at least 2".into()));
    }
    if let Some(h) = e.grid_half_width {
        if !(h >= 0.0) {
            return Err(fail(
                "evaluation",
                "grid_half_width",
                format!("must be non-negative, got {h}"),
            ));
        }
    }
    if e.samples == 0 {
        return Err(fail("evaluation", "samples", "must be at least 1".into()));
    }
    if !(e.gaussian_width > 0.0) {
        return Err(fail("evaluation", "gaussian_width", "must be positive".into()));
    }
    Ok((model, objective, distribution, optimizer))
}

fn resolve_distribution(
    d: &DistributionSection,
    model: ModelKind,
    dim: usize,
    fail: &dyn Fn(&str, &str, String) -> ConfigError,
) -> Result<UncertaintyDistribution, ConfigError> {
    let kind = d.kind.unwrap_or(match model {
        ModelKind::ThreeQubit => DistributionKind::Box,
        ModelKind::NoisyQubit => DistributionKind::Fourier,
    });
    let core = |key: &str, e: bgrape::Error| fail("distribution", key, e.to_string());
    let dist = match kind {
        DistributionKind::Box => {
            if d.amp_sigma.is_some() || d.modes.is_some() {
                return Err(fail(
                    "distribution",
                    "kind",
                    "Fourier parameters given for a box prior".into(),
                ));
            }
            match (&d.lo, &d.hi, d.half_width) {
                (Some(lo), Some(hi), None) => {
                    UncertaintyDistribution::uniform_box(lo.clone(), hi.clone()).map_err(|e| core("lo", e))?
                }
                (None, None, h) => {
                    let h = h.unwrap_or(0.2);
                    if !(h >= 0.0) {
                        return Err(fail(
                            "distribution",
                            "half_width",
                            format!("must be non-negative, got {h}"),
                        ));
                    }
                    UncertaintyDistribution::symmetric_box(dim, h).map_err(|e| core("half_width", e))?
                }
                _ => {
                    return Err(fail(
                        "distribution",
                        "half_width",
                        "give either half_width or both lo and hi".into(),
                    ))
                }
            }
        }
        DistributionKind::Fourier => {
            if d.lo.is_some() || d.hi.is_some() || d.half_width.is_some() {
                return Err(fail(
                    "distribution",
                    "kind",
                    "box parameters given for Fourier noise".into(),
                ));
            }
            UncertaintyDistribution::fourier_noise_with(
                d.modes.unwrap_or(10),
                d.freq_lo.unwrap_or(0.0),
                d.freq_hi.unwrap_or(std::f64::consts::TAU),
                d.amp_sigma.unwrap_or(0.05),
            )
            .map_err(|e| core("amp_sigma", e))?
        }
    };
    if dist.dim() != dim {
        return Err(fail(
            "distribution",
            "kind",
            format!(
                "prior produces {}-component samples but the model expects {dim}",
                dist.dim()
            ),
        ));
    }
    Ok(dist)
}

fn resolve_optimizer(
    o: &OptimizerSection,
    seed: u64,
    fail: &dyn Fn(&str, &str, String) -> ConfigError,
) -> Result<OptimizerConfig, ConfigError> {
    let f = |key: &str, message: String| fail("optimizer", key, message);
    if o.batch_size == 0 {
        return Err(f("batch_size", "must be at least 1".into()));
    }
    let mode = match o.mode {
        ModeKind::FreshBatch => BatchMode::FreshBatch,
        ModeKind::FixedBatch => BatchMode::FixedBatch,
        ModeKind::Nominal => BatchMode::Nominal,
    };
    let mut c = OptimizerConfig::new(mode, o.batch_size, o.sample_budget, seed);
    c.learning_rate = o.learning_rate.unwrap_or(default_learning_rate(o.batch_size));
    if !(c.learning_rate > 0.0 && c.learning_rate.is_finite()) {
        return Err(f("learning_rate", format!("must be positive, got {}", c.learning_rate)));
    }
    c.momentum = match o.momentum {
        MomentumKind::Blend => {
            if !(o.lambda > 0.0 && o.lambda <= 1.0) {
                return Err(f("lambda", format!("must lie in (0, 1], got {}", o.lambda)));
            }
            MomentumRule::Blend { lambda: o.lambda }
        }
        MomentumKind::Accumulated => {
            if !(0.0..1.0).contains(&o.beta) {
                return Err(f("beta", format!("must lie in [0, 1), got {}", o.beta)));
            }
            MomentumRule::Accumulated { beta: o.beta }
        }
        MomentumKind::None => MomentumRule::None,
    };
    if let Some(every) = o.decay_every {
        if every == 0 {
            return Err(f("decay_every", "must be at least 1".into()));
        }
        if !(o.decay_factor > 0.0) {
            return Err(f("decay_factor", format!("must be positive, got {}", o.decay_factor)));
        }
        c.schedule = LearningRateSchedule::StepDecay {
            every,
            factor: o.decay_factor,
        };
    }
    if o.sample_budget < c.effective_batch_size() as u64 {
        return Err(f(
            "sample_budget",
            format!(
                "{} is smaller than one batch ({})",
                o.sample_budget,
                c.effective_batch_size()
            ),
        ));
    }
    if o.test_set_size == 0 {
        return Err(f("test_set_size", "must be at least 1".into()));
    }
    if o.test_every == 0 {
        return Err(f("test_every", "must be at least 1".into()));
    }
    c.test_set_size = o.test_set_size;
    c.test_every = o.test_every;
    if let Some(t) = o.target_loss {
        if !(t > 0.0) {
            return Err(f("target_loss", format!("must be positive, got {t}")));
        }
    }
    c.target_loss = o.target_loss;
    c.validate().map_err(|e| f("", e.to_string()))?;
    Ok(c)
}

fn read_matrix(path: &Path) -> Result<GateTarget, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let records = read_records(&text, &["row", "col", "re", "im"])?;
    let dim = (records.len() as f64).sqrt().round() as usize;
    if dim == 0 || dim * dim != records.len() {
        return Err(format!("{} entries do not form a square matrix", records.len()));
    }
    let mut data = vec![None; dim * dim];
    for (line, rec) in records {
        let idx = |s: &str| s.parse::<usize>().map_err(|_| format!("line {line}: bad index {s:?}"));
        let (r, c) = (idx(&rec[0])?, idx(&rec[1])?);
        if r >= dim || c >= dim {
            return Err(format!("line {line}: index ({r}, {c}) outside {dim}x{dim}"));
        }
        let re = parse_float(&rec[2]).map_err(|e| format!("line {line}: {e}"))?;
        let im = parse_float(&rec[3]).map_err(|e| format!("line {line}: {e}"))?;
        if data[r * dim + c].replace(Complex64::new(re, im)).is_some() {
            return Err(format!("line {line}: duplicate entry ({r}, {c})"));
        }
    }
    let data = data.into_iter().map(|z| z.expect("every slot filled")).collect();
    let matrix = ComplexMatrix::from_vec(dim, data).map_err(|e| e.to_string())?;
    let label = path
        .file_stem()
        .map_or("file".into(), |s| s.to_string_lossy().into_owned());
    GateTarget::new(matrix, label).map_err(|e| e.to_string())
}

/// 1-based line containing byte `offset`.
fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// 1-based line where `key` is assigned inside `[section]` (top level when
/// `section` is empty), falling back to the section header.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_owned();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}
