// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Robustness measures for a fixed control field.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::dynamics::{ControlField, ControlModel, UncertaintySample};
use crate::error::{check_dim, Error, Result};
use crate::objective::{batch_loss, sample_losses, Objective};
use crate::sampling::{RandomSource, UncertaintyDistribution};

/// Mean infidelity over a held-out set.
pub fn test_loss<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    test_set: &[UncertaintySample],
) -> Result<f64> {
    batch_loss(model, field, objective, test_set)
}

/// Cell-centred grid over a 2-D box: axis `i` is cut into `points[i]` equal
/// cells and each node sits at a cell centre, so node counting tiles the box
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub points: [usize; 2],
}

impl GridSpec {
    pub fn new(lo: [f64; 2], hi: [f64; 2], points: [usize; 2]) -> Result<Self> {
        for axis in 0..2 {
            if points[axis] < 2 {
                return Err(Error::InvalidArgument(format!(
                    "grid needs at least 2 points per axis, got {}",
                    points[axis]
                )));
            }
            if !(lo[axis] <= hi[axis]) {
                return Err(Error::InvalidArgument(format!(
                    "grid axis {axis} has lo > hi ({} > {})",
                    lo[axis], hi[axis]
                )));
            }
        }
        Ok(Self { lo, hi, points })
    }

    /// `points × points` over `[−half_width, half_width]²`.
    pub fn square(half_width: f64, points: usize) -> Result<Self> {
        Self::new([-half_width; 2], [half_width; 2], [points; 2])
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.points[axis] as f64
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        self.lo[axis] + (index as f64 + 0.5) * self.spacing(axis)
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing(0) * self.spacing(1)
    }

    pub fn box_area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    pub fn len(&self) -> usize {
        self.points[0] * self.points[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Infidelity over a grid of `(ε₁, ε₂)`; `values[i * points[1] + j]` is the
/// node `(coordinate(0, i), coordinate(1, j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessLandscape {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl RobustnessLandscape {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_dim("landscape values", grid.len(), values.len())?;
        Ok(Self { grid, values })
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.points[1] + j]
    }

    /// `(ε₁, ε₂, infidelity)` in row-major node order.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let cols = self.grid.points[1];
        self.values.iter().enumerate().map(move |(idx, &v)| {
            let (i, j) = (idx / cols, idx % cols);
            (self.grid.coordinate(0, i), self.grid.coordinate(1, j), v)
        })
    }

    /// Index of the smallest value (first on ties).
    pub fn argmin(&self) -> (usize, usize) {
        let cols = self.grid.points[1];
        let idx = self
            .values
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v < self.values[best] { i } else { best });
        (idx / cols, idx % cols)
    }

    pub fn area_below(&self, threshold: f64) -> f64 {
        levelset_area(self, threshold)
    }
}

/// Evaluates the infidelity at every grid node. Requires a model with a
/// two-component uncertainty.
pub fn landscape<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    grid: &GridSpec,
) -> Result<RobustnessLandscape> {
    check_dim("landscape uncertainty dimension", 2, model.uncertainty_dim())?;
    let samples: Vec<UncertaintySample> = (0..grid.points[0])
        .flat_map(|i| {
            (0..grid.points[1]).map(move |j| UncertaintySample::new(vec![grid.coordinate(0, i), grid.coordinate(1, j)]))
        })
        .collect();
    let values = sample_losses(model, field, objective, &samples)?;
    RobustnessLandscape::new(grid.clone(), values)
}

/// Area of the region with infidelity strictly below `threshold`, counted as
/// the number of qualifying nodes times the cell area.
pub fn levelset_area(landscape: &RobustnessLandscape, threshold: f64) -> f64 {
    let count = landscape.values.iter().filter(|&&v| v < threshold).count();
    count as f64 * landscape.grid.cell_area()
}

/// Sorted per-sample infidelities of a Monte-Carlo evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDistribution {
    errors: Vec<f64>,
}

/// Headline statistics of an [`ErrorDistribution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub samples: usize,
    pub prob_below_1e2: f64,
    pub prob_below_1e3: f64,
    pub mean: f64,
    pub median: f64,
}

impl ErrorDistribution {
    pub fn from_errors(mut errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyBatch);
        }
        errors.sort_by(f64::total_cmp);
        Ok(Self { errors })
    }

    /// Ascending.
    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    /// Fraction of samples with error strictly below `threshold`.
    pub fn prob_below(&self, threshold: f64) -> f64 {
        let count = self.errors.partition_point(|&e| e < threshold);
        count as f64 / self.errors.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    pub fn median(&self) -> f64 {
        let n = self.errors.len();
        if n % 2 == 1 {
            self.errors[n / 2]
        } else {
            0.5 * (self.errors[n / 2 - 1] + self.errors[n / 2])
        }
    }

    pub fn summary(&self) -> ErrorSummary {
        ErrorSummary {
            samples: self.len(),
            prob_below_1e2: self.prob_below(1e-2),
            prob_below_1e3: self.prob_below(1e-3),
            mean: self.mean(),
            median: self.median(),
        }
    }
}

/// Infidelities of `field` under `num_samples` fresh draws from `dist`.
pub fn error_distribution<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    dist: &UncertaintyDistribution,
    num_samples: usize,
    rng: &mut RandomSource,
) -> Result<ErrorDistribution> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let samples = dist.draw_many(num_samples, rng);
    let errors = samples
        .par_iter()
        .map(|eps| objective.loss(&crate::dynamics::propagate(model, field, eps)?))
        .collect::<Result<Vec<_>>>()?;
    ErrorDistribution::from_errors(errors)
}

/// Textbook π-pulses on the x channel of a two-channel (x, y) qubit drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselinePulse {
    /// Constant `u_x = π / 2T`.
    Rectangular,
    /// `u_x ∝ exp(−(t − T/2)² / 2σ²)` with `σ = width_fraction · T`.
    Gaussian { width_fraction: f64 },
}

impl BaselinePulse {
    pub const DEFAULT_GAUSSIAN_WIDTH: f64 = 1.0 / 6.0;

    pub fn gaussian() -> Self {
        Self::Gaussian {
            width_fraction: Self::DEFAULT_GAUSSIAN_WIDTH,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rectangular => "rectangular",
            Self::Gaussian { .. } => "gaussian",
        }
    }
}

/// A field whose noiseless rotation angle `2 Σ_m u_x(t_m) dt` is exactly π,
/// with `u_y ≡ 0`.
pub fn baseline_pulse(kind: BaselinePulse, duration: f64, num_segments: usize) -> Result<ControlField> {
    if num_segments == 0 || !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "baseline pulse needs T > 0 and M >= 1 (T = {duration}, M = {num_segments})"
        )));
    }
    let dt = duration / num_segments as f64;
    let shape: Vec<f64> = match kind {
        BaselinePulse::Rectangular => vec![1.0; num_segments],
        BaselinePulse::Gaussian { width_fraction } => {
            if !(width_fraction > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "Gaussian width fraction must be positive, got {width_fraction}"
                )));
            }
            let sigma = width_fraction * duration;
            (0..num_segments)
                .map(|m| {
                    let t = (m as f64 + 0.5) * dt - 0.5 * duration;
                    (-t * t / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        }
    };
    let area: f64 = shape.iter().sum::<f64>() * dt;
    let norm = PI / (2.0 * area);
    let amplitudes = shape.iter().flat_map(|&s| [s * norm, 0.0]).collect();
    ControlField::new(num_segments, 2, duration, amplitudes)
}

/// Noiseless rotation angle `2 Σ_m u_x(t_m) dt` of a two-channel field.
pub fn rotation_angle(field: &ControlField) -> f64 {
    2.0 * (0..field.num_segments()).map(|m| field.get(m, 0)).sum::<f64>() * field.dt()
}
