// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! The b-GRAPE training loop.
//!
//! Each iteration draws a batch, takes the exact batch gradient and moves
//! the field against it, optionally blending in the previous iteration's
//! gradient. A held-out test set, drawn once per run, scores the field every
//! `test_every` iterations and the best-scoring field is kept as a
//! checkpoint.

use std::time::Instant;

use crate::dynamics::{ControlField, ControlModel, UncertaintySample};
use crate::error::{Error, Result};
use crate::objective::{batch_gradient, batch_loss, GradientField, Objective};
use crate::sampling::{
    BatchMode, BatchScheduler, RandomSource, UncertaintyDistribution, INIT_STREAM, TEST_STREAM, TRAIN_STREAM,
};

/// Consecutive logged points above the divergence level before a run is
/// flagged.
pub const DIVERGENCE_WINDOW: usize = 100;
/// Batch loss above this multiple of the first batch loss counts toward
/// divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Per-iteration learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRateSchedule {
    Constant,
    /// Multiply the rate by `factor` every `every` iterations.
    StepDecay {
        every: u64,
        factor: f64,
    },
}

impl LearningRateSchedule {
    /// Rate for 0-based iteration `j`.
    pub fn rate(&self, base: f64, j: u64) -> f64 {
        match *self {
            Self::Constant => base,
            Self::StepDecay { every, factor } => base * factor.powi((j / every.max(1)) as i32),
        }
    }
}

/// How consecutive gradients are combined into a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentumRule {
    /// Plain stochastic gradient descent.
    None,
    /// `u ← u − α [λ g_j + (1 − λ) g_{j−1}]`.
    Blend { lambda: f64 },
    /// Heavy-ball velocity `v ← β v + g`, `u ← u − α v`.
    Accumulated { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Base rate, quoted against the unnormalized squared distance
    /// `‖U − U_f‖²`: the loop steps by `2N · α` along the gradient of the
    /// normalized infidelity.
    pub learning_rate: f64,
    pub schedule: LearningRateSchedule,
    pub momentum: MomentumRule,
    pub batch_mode: BatchMode,
    pub batch_size: usize,
    /// Stop once this many samples have been evaluated.
    pub sample_budget: u64,
    pub test_set_size: usize,
    /// Iterations between held-out evaluations; the last iteration is
    /// always evaluated.
    pub test_every: u64,
    /// Stop as soon as a batch loss falls below this value.
    pub target_loss: Option<f64>,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Momentum-blend defaults with the batch-proportional learning rate
    /// `0.002 · B`.
    pub fn new(batch_mode: BatchMode, batch_size: usize, sample_budget: u64, seed: u64) -> Self {
        Self {
            learning_rate: default_learning_rate(batch_size),
            schedule: LearningRateSchedule::Constant,
            momentum: MomentumRule::Blend { lambda: 0.1 },
            batch_mode,
            batch_size,
            sample_budget,
            test_set_size: 1000,
            test_every: 100,
            target_loss: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        match self.momentum {
            MomentumRule::Blend { lambda } if !(lambda > 0.0 && lambda <= 1.0) => {
                return bad(format!("momentum lambda must lie in (0, 1], got {lambda}"));
            }
            MomentumRule::Accumulated { beta } if !(0.0..1.0).contains(&beta) => {
                return bad(format!("momentum beta must lie in [0, 1), got {beta}"));
            }
            _ => {}
        }
        if let LearningRateSchedule::StepDecay { every, factor } = self.schedule {
            if every == 0 || !(factor > 0.0) {
                return bad("step decay needs every >= 1 and factor > 0".into());
            }
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.sample_budget < self.effective_batch_size() as u64 {
            return bad(format!(
                "sample budget {} is smaller than one batch ({})",
                self.sample_budget,
                self.effective_batch_size()
            ));
        }
        if self.test_every == 0 {
            return bad("test_every must be at least 1".into());
        }
        if self.test_set_size == 0 {
            return bad("test set must contain at least one sample".into());
        }
        if let Some(t) = self.target_loss {
            if !(t > 0.0) {
                return bad(format!("target loss must be positive, got {t}"));
            }
        }
        Ok(())
    }

    /// Nominal mode always evaluates a single sample.
    pub fn effective_batch_size(&self) -> usize {
        match self.batch_mode {
            BatchMode::Nominal => 1,
            _ => self.batch_size,
        }
    }

    /// Scheduler for this config. A fixed batch is drawn from the training
    /// stream, so it equals the first fresh batch of an equal-seed run.
    pub fn scheduler(&self, distribution: UncertaintyDistribution) -> Result<BatchScheduler> {
        let mut rng = RandomSource::with_stream(self.seed, TRAIN_STREAM);
        BatchScheduler::new(self.batch_mode, self.batch_size, distribution, &mut rng)
    }

    /// Held-out samples, drawn from the dedicated test stream.
    pub fn test_set(&self, distribution: &UncertaintyDistribution) -> Vec<UncertaintySample> {
        let mut rng = RandomSource::with_stream(self.seed, TEST_STREAM);
        distribution.draw_many(self.test_set_size, &mut rng)
    }
}

/// Learning rate proportional to the batch size, `0.002 · B`.
pub fn default_learning_rate(batch_size: usize) -> f64 {
    0.002 * batch_size as f64
}

/// Random initial guess: amplitudes uniform on `[−a, a]` with
/// `a = min(0.5, bound)`, drawn from the seed's init stream.
pub fn initial_field(
    num_segments: usize,
    num_controls: usize,
    duration: f64,
    bound: Option<f64>,
    seed: u64,
) -> Result<ControlField> {
    let half_width = bound.map_or(0.5, |b| b.min(0.5));
    let mut rng = RandomSource::with_stream(seed, INIT_STREAM);
    let amplitudes = (0..num_segments * num_controls)
        .map(|_| rng.uniform(-half_width, half_width))
        .collect();
    let field = ControlField::new(num_segments, num_controls, duration, amplitudes)?;
    match bound {
        Some(b) => field.with_bound(b),
        None => Ok(field),
    }
}

fn apply_direction(field: &ControlField, direction: impl Iterator<Item = f64>, alpha: f64) -> ControlField {
    let mut next = field.clone();
    for (a, d) in next.amplitudes_mut().iter_mut().zip(direction) {
        *a -= alpha * d;
    }
    next.project();
    next
}

/// `u ← u − α g`, then clamp into the field's bound.
pub fn sgd_step(field: &ControlField, grad: &GradientField, alpha: f64) -> Result<ControlField> {
    grad.check_shape(field)?;
    Ok(apply_direction(field, grad.values().iter().copied(), alpha))
}

/// `u ← u − α [λ g_j + (1 − λ) g_{j−1}]`, then clamp. Without a previous
/// gradient this is [`sgd_step`].
pub fn momentum_step(
    field: &ControlField,
    grad: &GradientField,
    grad_prev: Option<&GradientField>,
    alpha: f64,
    lambda: f64,
) -> Result<ControlField> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "momentum lambda must lie in (0, 1], got {lambda}"
        )));
    }
    let Some(prev) = grad_prev else {
        return sgd_step(field, grad, alpha);
    };
    grad.check_shape(field)?;
    prev.check_shape(field)?;
    let blend = grad
        .values()
        .iter()
        .zip(prev.values())
        .map(|(g, p)| lambda * g + (1.0 - lambda) * p);
    Ok(apply_direction(field, blend, alpha))
}

/// One logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based iteration index.
    pub iteration: u64,
    /// Samples evaluated so far, `B · iteration`.
    pub samples: u64,
    /// Mean infidelity over this iteration's batch, before the update.
    pub batch_loss: f64,
    /// Held-out infidelity of the updated field, when evaluated.
    pub test_loss: Option<f64>,
    /// Seconds since the run started.
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub field: ControlField,
    pub test_loss: f64,
    pub iteration: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Batch loss stayed above `DIVERGENCE_FACTOR` × its first value for
    /// `DIVERGENCE_WINDOW` consecutive iterations; `iteration` is where the
    /// window closed.
    Diverged {
        iteration: u64,
    },
    /// Stopped early once the batch loss fell below `target_loss`.
    TargetReached {
        iteration: u64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn test_losses(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.rows.iter().filter_map(|r| r.test_loss.map(|t| (r.samples, t)))
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub final_field: ControlField,
    pub final_test_loss: f64,
    pub best: Checkpoint,
    pub trace: TrainingTrace,
    pub status: RunStatus,
    pub config: OptimizerConfig,
}

impl OptimizationResult {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// Batch loss of the last iteration.
    pub fn final_batch_loss(&self) -> f64 {
        self.trace.rows.last().map_or(f64::NAN, |r| r.batch_loss)
    }
}

/// Runs b-GRAPE (or its fixed-batch / nominal special cases, depending on
/// the scheduler) until `config.sample_budget` samples have been evaluated.
pub fn run<M: ControlModel + ?Sized>(
    model: &M,
    objective: &Objective,
    initial_field: &ControlField,
    scheduler: BatchScheduler,
    config: &OptimizerConfig,
) -> Result<OptimizationResult> {
    run_with_observer(model, objective, initial_field, scheduler, config, |_| {})
}

/// [`run`], handing every trace row to `observer` as soon as it is logged.
pub fn run_with_observer<M, F>(
    model: &M,
    objective: &Objective,
    initial_field: &ControlField,
    mut scheduler: BatchScheduler,
    config: &OptimizerConfig,
    mut observer: F,
) -> Result<OptimizationResult>
where
    M: ControlModel + ?Sized,
    F: FnMut(&TraceRow),
{
    config.validate()?;
    if scheduler.batch_size() != config.effective_batch_size() {
        return Err(Error::InvalidArgument(format!(
            "scheduler batch size {} differs from config batch size {}",
            scheduler.batch_size(),
            config.effective_batch_size()
        )));
    }
    let started = Instant::now();
    let test_set = config.test_set(scheduler.distribution());
    let mut rng = RandomSource::with_stream(config.seed, TRAIN_STREAM);

    let mut field = initial_field.clone();
    field.project();
    let batch_size = scheduler.batch_size() as u64;

    let mut trace = TrainingTrace::default();
    let mut prev_grad: Option<GradientField> = None;
    let mut velocity: Option<GradientField> = None;
    let mut best: Option<Checkpoint> = None;
    let mut final_test_loss = f64::NAN;
    let mut status = RunStatus::Completed;
    let mut first_loss: Option<f64> = None;
    let mut above = 0usize;

    let mut iteration = 0u64;
    let mut samples = 0u64;
    let mut done = false;
    while !done {
        let batch = scheduler.next_batch(&mut rng);
        let (loss, grad) = batch_gradient(model, &field, objective, &batch)?;
        let reached = config.target_loss.is_some_and(|t| loss < t);
        let alpha = objective.raw_scale() * config.schedule.rate(config.learning_rate, iteration);

        // The field that met the target is the one returned.
        if !reached {
            field = match config.momentum {
                MomentumRule::None => sgd_step(&field, &grad, alpha)?,
                MomentumRule::Blend { lambda } => momentum_step(&field, &grad, prev_grad.as_ref(), alpha, lambda)?,
                MomentumRule::Accumulated { beta } => {
                    let v = match velocity.take() {
                        None => grad.clone(),
                        Some(v) => GradientField::new(
                            grad.num_segments(),
                            grad.num_controls(),
                            v.values()
                                .iter()
                                .zip(grad.values())
                                .map(|(v, g)| beta * v + g)
                                .collect(),
                        )?,
                    };
                    let next = sgd_step(&field, &v, alpha)?;
                    velocity = Some(v);
                    next
                }
            };
            prev_grad = Some(grad);
        }
        iteration += 1;
        samples += batch_size;
        done = reached || samples >= config.sample_budget;
        if reached && status == RunStatus::Completed {
            status = RunStatus::TargetReached { iteration };
        }

        let evaluate = iteration.is_multiple_of(config.test_every) || done;
        let test_loss = if evaluate {
            let t = batch_loss(model, &field, objective, &test_set)?;
            final_test_loss = t;
            if best.as_ref().is_none_or(|b| t < b.test_loss) {
                best = Some(Checkpoint {
                    field: field.clone(),
                    test_loss: t,
                    iteration,
                });
            }
            Some(t)
        } else {
            None
        };

        let reference = *first_loss.get_or_insert(loss);
        if loss > DIVERGENCE_FACTOR * reference {
            above += 1;
            if above >= DIVERGENCE_WINDOW && status == RunStatus::Completed {
                status = RunStatus::Diverged { iteration };
            }
        } else {
            above = 0;
        }

        let row = TraceRow {
            iteration,
            samples,
            batch_loss: loss,
            test_loss,
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        observer(&row);
        trace.rows.push(row);
    }

    Ok(OptimizationResult {
        final_field: field,
        final_test_loss,
        best: best.expect("the last iteration is always evaluated"),
        trace,
        status,
        config: config.clone(),
    })
}
