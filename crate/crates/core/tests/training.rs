// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::{PI, TAU};

use bgrape::dynamics::{ControlField, NoisyQubit, ThreeQubitCoupling, UncertaintySample};
use bgrape::objective::{sample_loss, FidelityMeasure, GateTarget, Objective};
use bgrape::optimizer::{initial_field, run, MomentumRule, OptimizationResult, OptimizerConfig, RunStatus};
use bgrape::sampling::{BatchMode, UncertaintyDistribution};

fn losses(result: &OptimizationResult) -> Vec<f64> {
    result.trace.rows.iter().map(|r| r.batch_loss).collect()
}

fn small_three_qubit_run(mode: BatchMode, batch: usize, budget: u64, seed: u64) -> OptimizationResult {
    let model = ThreeQubitCoupling::new();
    let obj = Objective::new(GateTarget::toffoli(), FidelityMeasure::PhaseInvariant);
    let dist = UncertaintyDistribution::symmetric_box(2, 0.2).unwrap();
    let mut config = OptimizerConfig::new(mode, batch, budget, seed);
    config.test_set_size = 16;
    config.test_every = 5;
    let init = initial_field(8, 6, 2.0, None, seed).unwrap();
    run(&model, &obj, &init, config.scheduler(dist).unwrap(), &config).unwrap()
}

#[test]
fn single_qubit_toy_converges_to_full_turns() {
    // One segment, identity target: loss 1 − cos(uT), gradient T sin(uT).
    let model = NoisyQubit::new();
    let obj = Objective::new(GateTarget::identity(2), FidelityMeasure::PhaseSensitive);
    let dist = UncertaintyDistribution::fourier_noise(0.05).unwrap();
    let mut config = OptimizerConfig::new(BatchMode::Nominal, 1, 500, 0);
    config.learning_rate = 0.05;
    config.test_set_size = 4;
    config.test_every = 500;
    let duration = 1.0;
    let init = ControlField::new(1, 2, duration, vec![1.0 / duration, 0.0]).unwrap();
    let result = run(&model, &obj, &init, config.scheduler(dist).unwrap(), &config).unwrap();
    assert_eq!(result.trace.len(), 500);
    let angle = result.final_field.get(0, 0) * duration;
    let turns = (angle / TAU).round();
    assert!((angle - TAU * turns).abs() < 1e-5, "angle {angle}");
    assert_eq!(result.final_field.get(0, 1), 0.0);
    let loss = sample_loss(&model, &result.final_field, &obj, &UncertaintySample::zeros(30)).unwrap();
    assert!(loss < 1e-10, "loss {loss:e}");
}

#[test]
fn equal_seeds_give_identical_traces() {
    for mode in [BatchMode::FreshBatch, BatchMode::FixedBatch, BatchMode::Nominal] {
        let a = small_three_qubit_run(mode, 3, 30, 4);
        let b = small_three_qubit_run(mode, 3, 30, 4);
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(a.final_field, b.final_field);
        assert_eq!(a.final_test_loss, b.final_test_loss);
    }
    let c = small_three_qubit_run(BatchMode::FreshBatch, 3, 30, 5);
    assert_ne!(
        losses(&small_three_qubit_run(BatchMode::FreshBatch, 3, 30, 4)),
        losses(&c)
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let runs: Vec<OptimizationResult> = [1, 3]
        .into_iter()
        .map(|threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| small_three_qubit_run(BatchMode::FreshBatch, 5, 40, 11))
        })
        .collect();
    assert_eq!(losses(&runs[0]), losses(&runs[1]));
    assert_eq!(runs[0].final_field, runs[1].final_field);
}

#[test]
fn split_budget_continues_the_same_trajectory() {
    let model = ThreeQubitCoupling::new();
    let obj = Objective::new(GateTarget::toffoli(), FidelityMeasure::PhaseInvariant);
    let dist = UncertaintyDistribution::symmetric_box(2, 0.2).unwrap();
    for (mode, batch) in [(BatchMode::FixedBatch, 4), (BatchMode::Nominal, 1)] {
        let config = |budget: u64| {
            let mut c = OptimizerConfig::new(mode, batch, budget, 21);
            c.momentum = MomentumRule::Blend { lambda: 1.0 };
            c.test_set_size = 4;
            c
        };
        let init = initial_field(6, 6, 2.0, None, 21).unwrap();
        let whole = run(
            &model,
            &obj,
            &init,
            config(20 * batch as u64).scheduler(dist.clone()).unwrap(),
            &config(20 * batch as u64),
        )
        .unwrap();
        let head = run(
            &model,
            &obj,
            &init,
            config(12 * batch as u64).scheduler(dist.clone()).unwrap(),
            &config(12 * batch as u64),
        )
        .unwrap();
        let tail = run(
            &model,
            &obj,
            &head.final_field,
            config(8 * batch as u64).scheduler(dist.clone()).unwrap(),
            &config(8 * batch as u64),
        )
        .unwrap();
        let mut joined = losses(&head);
        joined.extend(losses(&tail));
        assert_eq!(joined, losses(&whole), "{}", mode.name());
        assert_eq!(tail.final_field, whole.final_field);
    }
}

#[test]
fn bounded_runs_stay_within_bounds() {
    let model = NoisyQubit::new();
    let obj = Objective::new(GateTarget::rx_pi(), FidelityMeasure::PhaseInvariant);
    let dist = UncertaintyDistribution::fourier_noise(0.05).unwrap();
    let bound = 0.3;
    let mut config = OptimizerConfig::new(BatchMode::FreshBatch, 4, 400, 2);
    config.learning_rate = 1.0;
    config.test_set_size = 8;
    let init = initial_field(10, 2, 2.0, Some(bound), 2).unwrap();
    let result = run(&model, &obj, &init, config.scheduler(dist).unwrap(), &config).unwrap();
    assert!(result.final_field.max_abs_amplitude() <= bound);
    assert!(result.best.field.max_abs_amplitude() <= bound);
    assert_eq!(result.final_field.bound(), Some(bound));
    // A bound this tight cannot reach the π rotation, so it is active.
    assert!(result.final_field.amplitudes().iter().any(|a| a.abs() == bound));
}

#[test]
fn single_iteration_budget_logs_one_row() {
    let r = small_three_qubit_run(BatchMode::FreshBatch, 10, 10, 1);
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.trace.rows[0].iteration, 1);
    assert!(r.trace.rows[0].test_loss.is_some());
}

#[test]
fn budget_not_divisible_by_batch_rounds_up() {
    let r = small_three_qubit_run(BatchMode::FreshBatch, 4, 10, 1);
    assert_eq!(r.trace.len(), 3);
    assert_eq!(r.trace.rows.last().unwrap().samples, 12);
}

#[test]
fn target_loss_stops_early_and_keeps_the_qualifying_field() {
    let model = NoisyQubit::new();
    let obj = Objective::new(GateTarget::rx_pi(), FidelityMeasure::PhaseInvariant);
    let dist = UncertaintyDistribution::fourier_noise(0.05).unwrap();
    let mut config = OptimizerConfig::new(BatchMode::Nominal, 1, 5000, 3);
    config.learning_rate = 0.1;
    config.test_set_size = 4;
    config.target_loss = Some(1e-8);
    let init = initial_field(4, 2, 2.0, Some(PI), 3).unwrap();
    let result = run(&model, &obj, &init, config.scheduler(dist).unwrap(), &config).unwrap();
    let RunStatus::TargetReached { iteration } = result.status else {
        panic!("status {:?}", result.status);
    };
    assert!(iteration < 5000);
    assert_eq!(result.trace.len() as u64, iteration);
    let last = result.trace.rows.last().unwrap();
    assert!(last.batch_loss < 1e-8);
    let nominal = sample_loss(&model, &result.final_field, &obj, &UncertaintySample::zeros(30)).unwrap();
    assert_eq!(nominal, last.batch_loss);
}

#[test]
fn oversized_steps_are_flagged_as_divergent() {
    // Start from the exact π pulse under weak noise, so the first batch
    // loss is tiny and wild steps stay far above it.
    let model = NoisyQubit::new();
    let obj = Objective::new(GateTarget::rx_pi(), FidelityMeasure::PhaseInvariant);
    let dist = UncertaintyDistribution::fourier_noise(1e-3).unwrap();
    let init = ControlField::constant(10, 2.0, &[PI / 4.0, 0.0]).unwrap();
    let mut config = OptimizerConfig::new(BatchMode::FreshBatch, 2, 2 * 300, 1);
    config.learning_rate = 50.0;
    config.test_set_size = 2;
    config.test_every = 1000;
    let wild = run(&model, &obj, &init, config.scheduler(dist.clone()).unwrap(), &config).unwrap();
    assert!(wild.diverged(), "status {:?}", wild.status);

    config.learning_rate = 1e-3;
    let calm = run(&model, &obj, &init, config.scheduler(dist).unwrap(), &config).unwrap();
    assert_eq!(calm.status, RunStatus::Completed);
}
