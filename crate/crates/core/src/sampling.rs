// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded uncertainty sampling and batch scheduling.
//!
//! [`RandomSource`] wraps ChaCha20 with its 64-bit stream selector, so a
//! `(seed, stream)` pair names an independent, platform-stable sequence.
//! Training batches, held-out test sets, initial guesses and Monte-Carlo
//! evaluation each read from their own stream.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::UncertaintySample;
use crate::error::{Error, Result};

/// Stream of training batches (and of the frozen s-GRAPE batch).
pub const TRAIN_STREAM: u64 = 0;
/// Stream of the held-out test set.
pub const TEST_STREAM: u64 = 1;
/// Stream of the random initial control guess.
pub const INIT_STREAM: u64 = 2;
/// Stream of Monte-Carlo robustness evaluation.
pub const EVAL_STREAM: u64 = 3;

/// Deterministic pseudo-random source identified by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl RandomSource {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// A fresh source on another stream of the same seed.
    pub fn substream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    /// Independent sub-stream for parallel worker `index` of this stream.
    pub fn worker(&self, index: u32) -> Self {
        Self::with_stream(self.seed, self.stream ^ ((index as u64 + 1) << 32))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub(crate) fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub(crate) fn gaussian(&mut self, sigma: f64) -> f64 {
        Normal::new(0.0, sigma)
            .expect("sigma validated at construction")
            .sample(&mut self.rng)
    }
}

/// The prior `P(ε)` over uncertainty parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintyDistribution {
    /// Independent uniform coordinates on `[lo_i, hi_i]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Low-frequency multiplicative noise
    /// `n(t) = Σ_k a_k cos ω_k t + b_k sin ω_k t`, with `a_k, b_k ~ N(0, amp_sigma²)`
    /// and `ω_k ~ U[freq_lo, freq_hi]`, packed as `[a | b | ω]`.
    FourierNoise {
        num_modes: usize,
        freq_lo: f64,
        freq_hi: f64,
        amp_sigma: f64,
    },
}

impl UncertaintyDistribution {
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "uniform box bounds must be non-empty and equal length ({} vs {})",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(Error::InvalidArgument(format!(
                "uniform box requires lo <= hi, violated at coordinate {i} ({} > {})",
                lo[i], hi[i]
            )));
        }
        Ok(Self::UniformBox { lo, hi })
    }

    /// Symmetric box `[-half_width, half_width]^dim`.
    pub fn symmetric_box(dim: usize, half_width: f64) -> Result<Self> {
        Self::uniform_box(vec![-half_width; dim], vec![half_width; dim])
    }

    /// Ten modes with frequencies uniform on `[0, 2π]`.
    pub fn fourier_noise(amp_sigma: f64) -> Result<Self> {
        Self::fourier_noise_with(10, 0.0, TAU, amp_sigma)
    }

    pub fn fourier_noise_with(num_modes: usize, freq_lo: f64, freq_hi: f64, amp_sigma: f64) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::InvalidArgument("noise needs at least one mode".into()));
        }
        if !(amp_sigma > 0.0 && amp_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise amplitude sigma must be positive, got {amp_sigma}"
            )));
        }
        if !(freq_lo <= freq_hi) {
            return Err(Error::InvalidArgument(format!(
                "noise frequency range inverted: [{freq_lo}, {freq_hi}]"
            )));
        }
        Ok(Self::FourierNoise {
            num_modes,
            freq_lo,
            freq_hi,
            amp_sigma,
        })
    }

    /// Length of the samples this distribution produces.
    pub fn dim(&self) -> usize {
        match self {
            Self::UniformBox { lo, .. } => lo.len(),
            Self::FourierNoise { num_modes, .. } => 3 * num_modes,
        }
    }

    pub fn draw(&self, rng: &mut RandomSource) -> UncertaintySample {
        match self {
            Self::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| rng.uniform(l, h))
                .collect::<Vec<_>>()
                .into(),
            Self::FourierNoise {
                num_modes,
                freq_lo,
                freq_hi,
                amp_sigma,
            } => {
                let mut v = Vec::with_capacity(3 * num_modes);
                for _ in 0..2 * num_modes {
                    v.push(rng.gaussian(*amp_sigma));
                }
                for _ in 0..*num_modes {
                    v.push(rng.uniform(*freq_lo, *freq_hi));
                }
                v.into()
            }
        }
    }

    pub fn draw_many(&self, n: usize, rng: &mut RandomSource) -> Vec<UncertaintySample> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// `n(t) = Σ_k a_k cos(ω_k t) + b_k sin(ω_k t)` for a sample in `[a | b | ω]`
/// layout.
pub fn noise_value(sample: &UncertaintySample, t: f64) -> Result<f64> {
    let v = sample.values();
    if v.is_empty() || !v.len().is_multiple_of(3) {
        return Err(Error::DimensionMismatch {
            context: "noise sample length (multiple of 3)",
            expected: 3 * (v.len() / 3).max(1),
            actual: v.len(),
        });
    }
    let modes = v.len() / 3;
    let (a, rest) = v.split_at(modes);
    let (b, w) = rest.split_at(modes);
    Ok(a.iter()
        .zip(b)
        .zip(w)
        .map(|((&ak, &bk), &wk)| {
            let (s, c) = (wk * t).sin_cos();
            ak * c + bk * s
        })
        .sum())
}

/// How each iteration's batch is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Fresh i.i.d. batch every call (b-GRAPE).
    FreshBatch,
    /// One batch drawn at construction and reused (s-GRAPE).
    FixedBatch,
    /// The single nominal sample `ε = 0` (GRAPE).
    Nominal,
}

impl BatchMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::FreshBatch => "b-GRAPE",
            Self::FixedBatch => "s-GRAPE",
            Self::Nominal => "GRAPE",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchScheduler {
    mode: BatchMode,
    batch_size: usize,
    distribution: UncertaintyDistribution,
    frozen: Option<Vec<UncertaintySample>>,
    samples_drawn: u64,
}

impl BatchScheduler {
    /// For [`BatchMode::FixedBatch`] the frozen batch is drawn from `rng`
    /// here, so it coincides with the first fresh batch of the same stream.
    /// [`BatchMode::Nominal`] always yields one zero sample regardless of
    /// `batch_size`.
    pub fn new(
        mode: BatchMode,
        batch_size: usize,
        distribution: UncertaintyDistribution,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        let (batch_size, frozen) = match mode {
            BatchMode::FreshBatch => (batch_size, None),
            BatchMode::FixedBatch => (batch_size, Some(distribution.draw_many(batch_size, rng))),
            BatchMode::Nominal => (1, Some(vec![UncertaintySample::zeros(distribution.dim())])),
        };
        Ok(Self {
            mode,
            batch_size,
            distribution,
            frozen,
            samples_drawn: 0,
        })
    }

    pub fn mode(&self) -> BatchMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn distribution(&self) -> &UncertaintyDistribution {
        &self.distribution
    }

    /// The frozen batch of fixed and nominal modes.
    pub fn frozen_batch(&self) -> Option<&[UncertaintySample]> {
        self.frozen.as_deref()
    }

    /// Total samples handed out so far (`B · iterations`).
    pub fn samples_drawn(&self) -> u64 {
        self.samples_drawn
    }

    pub fn next_batch(&mut self, rng: &mut RandomSource) -> Vec<UncertaintySample> {
        self.samples_drawn += self.batch_size as u64;
        match &self.frozen {
            Some(batch) => batch.clone(),
            None => self.distribution.draw_many(self.batch_size, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_std(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn uniform_box_statistics() {
        let dist = UncertaintyDistribution::symmetric_box(2, 0.2).unwrap();
        let mut rng = RandomSource::new(11);
        let draws = dist.draw_many(100_000, &mut rng);
        for coord in 0..2 {
            let xs: Vec<f64> = draws.iter().map(|s| s.values()[coord]).collect();
            let (mean, _) = mean_std(&xs);
            // 3σ of the mean: 3 · 0.4/√12 / √1e5 ≈ 0.0011; the looser ±0.004
            // band is the documented tolerance.
            assert!(mean.abs() < 0.004, "mean {mean}");
            assert!(xs.iter().all(|&x| (-0.2..=0.2).contains(&x)));
        }
    }

    #[test]
    fn degenerate_box_is_constant() {
        let dist = UncertaintyDistribution::uniform_box(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let mut rng = RandomSource::new(3);
        for _ in 0..10 {
            assert_eq!(dist.draw(&mut rng), UncertaintySample::zeros(2));
        }
    }

    #[test]
    fn box_validation() {
        assert!(UncertaintyDistribution::uniform_box(vec![0.1], vec![0.0]).is_err());
        assert!(UncertaintyDistribution::uniform_box(vec![0.1], vec![0.2, 0.3]).is_err());
        assert!(UncertaintyDistribution::fourier_noise(0.0).is_err());
        assert!(UncertaintyDistribution::fourier_noise(-1.0).is_err());
    }

    #[test]
    fn fourier_noise_statistics() {
        let dist = UncertaintyDistribution::fourier_noise(0.05).unwrap();
        assert_eq!(dist.dim(), 30);
        let mut rng = RandomSource::new(5);
        let draws = dist.draw_many(100_000, &mut rng);
        let a1: Vec<f64> = draws.iter().map(|s| s.values()[0]).collect();
        let (_, std) = mean_std(&a1);
        assert!((std - 0.05).abs() < 0.001, "std {std}");
        assert!(draws.iter().all(|s| (0.0..=TAU).contains(&s.values()[20])));
    }

    #[test]
    fn fourier_noise_power_is_stationary() {
        // E[n(t)²] = num_modes · σ², independent of t.
        let sigma = 0.05;
        let dist = UncertaintyDistribution::fourier_noise(sigma).unwrap();
        let mut rng = RandomSource::new(17);
        let draws = dist.draw_many(40_000, &mut rng);
        let expected = 10.0 * sigma * sigma;
        for t in [0.0, 0.37, 1.0, 2.0] {
            let power = draws.iter().map(|s| noise_value(s, t).unwrap().powi(2)).sum::<f64>() / draws.len() as f64;
            assert!((power / expected - 1.0).abs() < 0.05, "t={t}: {power} vs {expected}");
        }
    }

    #[test]
    fn noise_value_examples() {
        let zero = UncertaintySample::zeros(30);
        for t in [0.0, 0.5, 1.9] {
            assert_eq!(noise_value(&zero, t).unwrap(), 0.0);
        }
        let mut v = vec![0.0; 30];
        v[0] = 0.1;
        assert_eq!(noise_value(&UncertaintySample::new(v), 0.0).unwrap(), 0.1);

        let dist = UncertaintyDistribution::fourier_noise(0.05).unwrap();
        let s = dist.draw(&mut RandomSource::new(9));
        let sum_a: f64 = s.values()[..10].iter().sum();
        assert!((noise_value(&s, 0.0).unwrap() - sum_a).abs() < 1e-15);

        assert!(noise_value(&UncertaintySample::zeros(29), 0.0).is_err());
        assert!(noise_value(&UncertaintySample::zeros(0), 0.0).is_err());
    }

    #[test]
    fn scheduler_modes() {
        let dist = UncertaintyDistribution::symmetric_box(2, 0.2).unwrap();
        let mut rng = RandomSource::new(1);

        let mut nominal = BatchScheduler::new(BatchMode::Nominal, 5, dist.clone(), &mut rng).unwrap();
        for _ in 0..3 {
            assert_eq!(nominal.next_batch(&mut rng), vec![UncertaintySample::zeros(2)]);
        }

        let mut fixed = BatchScheduler::new(BatchMode::FixedBatch, 3, dist.clone(), &mut rng).unwrap();
        let first = fixed.next_batch(&mut rng);
        assert_eq!(first.len(), 3);
        assert_eq!(first, fixed.next_batch(&mut rng));

        let mut fresh = BatchScheduler::new(BatchMode::FreshBatch, 3, dist, &mut rng).unwrap();
        let a = fresh.next_batch(&mut rng);
        let b = fresh.next_batch(&mut rng);
        assert_eq!(a.len(), 3);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
        assert_eq!(fresh.samples_drawn(), 6);
    }

    #[test]
    fn fixed_batch_equals_first_fresh_batch() {
        let dist = UncertaintyDistribution::symmetric_box(2, 0.2).unwrap();
        let mut r1 = RandomSource::with_stream(42, TRAIN_STREAM);
        let mut r2 = RandomSource::with_stream(42, TRAIN_STREAM);
        let fixed = BatchScheduler::new(BatchMode::FixedBatch, 4, dist.clone(), &mut r1).unwrap();
        let mut fresh = BatchScheduler::new(BatchMode::FreshBatch, 4, dist, &mut r2).unwrap();
        assert_eq!(fixed.frozen_batch().unwrap(), fresh.next_batch(&mut r2).as_slice());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let dist = UncertaintyDistribution::fourier_noise(0.05).unwrap();
        let a = dist.draw_many(5, &mut RandomSource::with_stream(7, 1));
        let b = dist.draw_many(5, &mut RandomSource::with_stream(7, 1));
        let c = dist.draw_many(5, &mut RandomSource::with_stream(7, 2));
        let w = dist.draw_many(5, &mut RandomSource::with_stream(7, 1).worker(0));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, w);
    }

    #[test]
    fn zero_batch_size_rejected() {
        let dist = UncertaintyDistribution::symmetric_box(2, 0.2).unwrap();
        assert!(BatchScheduler::new(BatchMode::FreshBatch, 0, dist, &mut RandomSource::new(0)).is_err());
    }
}
