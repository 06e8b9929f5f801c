// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Each criterion prints one `PASS`/`FAIL`
//! line; the test fails if any criterion does.
//!
//! ```text
//! cargo test --release -p bgrape-cli --test acceptance -- --nocapture
//! ```
//!
//! The training criteria run full optimizations and take tens of minutes
//! on two cores.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use bgrape::dynamics::{propagate, ControlField, ControlModel, NoisyQubit, ThreeQubitCoupling, UncertaintySample};
use bgrape::evaluation::{baseline_pulse, error_distribution, landscape, levelset_area, BaselinePulse, GridSpec};
use bgrape::objective::{batch_gradient, finite_difference_gradient, FidelityMeasure, GateTarget, Objective};
use bgrape::optimizer::{initial_field, run, MomentumRule, OptimizationResult, OptimizerConfig};
use bgrape::qmat::{pauli, ComplexMatrix, PauliAxis};
use bgrape::sampling::{BatchMode, RandomSource, UncertaintyDistribution, EVAL_STREAM};
use bgrape_cli::config::Experiment;
use bgrape_cli::io::sha256_file;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Report {
    lines: Mutex<Vec<(bool, String)>>,
}

impl Report {
    fn new() -> Self {
        Self {
            lines: Mutex::new(Vec::new()),
        }
    }

    fn record(&self, name: &str, pass: bool, detail: String) {
        let line = format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.lock().unwrap().push((pass, line));
    }

    fn failures(&self) -> Vec<String> {
        self.lines
            .lock()
            .unwrap()
            .iter()
            .filter(|(pass, _)| !pass)
            .map(|(_, l)| l.clone())
            .collect()
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn random_field(rng: &mut ChaCha8Rng, m: usize, k: usize, duration: f64) -> ControlField {
    let amps = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    ControlField::new(m, k, duration, amps).unwrap()
}

fn toffoli_objective() -> Objective {
    Objective::new(GateTarget::toffoli().special_unitary(), FidelityMeasure::PhaseSensitive)
}

fn coupling_box() -> UncertaintyDistribution {
    UncertaintyDistribution::symmetric_box(2, 0.2).unwrap()
}

fn at_least_two(passes: impl IntoIterator<Item = bool>) -> bool {
    passes.into_iter().filter(|&p| p).count() >= 2
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
}

fn decimals(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

/// Worst entry of `|g − fd|`, relative to the largest `|fd|` of the instance.
fn gradient_error<M: ControlModel>(
    model: &M,
    objective: &Objective,
    field: &ControlField,
    eps: UncertaintySample,
) -> f64 {
    let batch = [eps];
    let (_, g) = batch_gradient(model, field, objective, &batch).unwrap();
    let fd = finite_difference_gradient(model, field, objective, &batch, 1e-6).unwrap();
    let scale = fd.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = g
        .values()
        .iter()
        .zip(fd.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}

fn gradient_correctness(report: &Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut src = RandomSource::new(101);
    let three = ThreeQubitCoupling::new();
    let toffoli = toffoli_objective();
    let worst_three = (0..50)
        .map(|_| {
            let field = random_field(&mut rng, 3, 6, 3.0);
            gradient_error(&three, &toffoli, &field, coupling_box().draw(&mut src))
        })
        .fold(0.0f64, f64::max);

    let qubit = NoisyQubit::new();
    let rx = Objective::new(GateTarget::rx_pi(), FidelityMeasure::PhaseSensitive);
    let noise = UncertaintyDistribution::fourier_noise(0.05).unwrap();
    let worst_qubit = (0..50)
        .map(|_| {
            let field = random_field(&mut rng, 5, 2, 2.0);
            gradient_error(&qubit, &rx, &field, noise.draw(&mut src))
        })
        .fold(0.0f64, f64::max);

    report.record(
        "gradient matches finite differences",
        worst_three < 1e-6 && worst_qubit < 1e-6,
        format!("worst relative error three-qubit {worst_three:.1e}, qubit {worst_qubit:.1e} (limit 1e-6, 50 instances each)"),
    );
}

fn unitarity_and_oracles(report: &Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut src = RandomSource::new(202);
    let three = ThreeQubitCoupling::new();
    let qubit = NoisyQubit::new();
    let noise = UncertaintyDistribution::fourier_noise(0.05).unwrap();
    let mut unitarity = 0.0f64;
    for _ in 0..50 {
        let f = random_field(&mut rng, 20, 6, 10.0);
        let u = propagate(&three, &f, &coupling_box().draw(&mut src)).unwrap();
        unitarity = unitarity.max(u.unitarity_error());
        let f = random_field(&mut rng, 40, 2, 2.0)
            .clamped_to(std::f64::consts::PI)
            .unwrap();
        let u = propagate(&qubit, &f, &noise.draw(&mut src)).unwrap();
        unitarity = unitarity.max(u.unitarity_error());
    }

    // exp(−iT(ux X + uy Y)) = cos(rT) I − i sin(rT) (ux X + uy Y)/r
    let mut rotation = 0.0f64;
    for _ in 0..20 {
        let (ux, uy) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let duration = rng.random_range(0.1..3.0);
        let f = ControlField::constant(16, duration, &[ux, uy]).unwrap();
        let u = propagate(&qubit, &f, &UncertaintySample::zeros(qubit.uncertainty_dim())).unwrap();
        let r = f64::hypot(ux, uy);
        let (s, c) = (r * duration).sin_cos();
        let mut axis = pauli(PauliAxis::X).scale_real(ux / r);
        axis.add_scaled(&pauli(PauliAxis::Y), uy / r);
        let expected = &ComplexMatrix::identity(2).scale_real(c) + &axis.scale(Complex64::new(0.0, -s));
        rotation = rotation.max(u.distance(&expected));
    }

    // Without controls the Hamiltonian is diagonal: z_a z_b (1+ε₁) + z_b z_c (1+ε₂).
    let mut diagonal = 0.0f64;
    for _ in 0..20 {
        let eps = coupling_box().draw(&mut src);
        let (e1, e2) = (eps.values()[0], eps.values()[1]);
        let duration = rng.random_range(0.5..10.0);
        let f = ControlField::zeros(25, 6, duration).unwrap();
        let u = propagate(&three, &f, &eps).unwrap();
        let z = |bit: usize| if bit == 0 { 1.0 } else { -1.0 };
        let phases: Vec<Complex64> = (0..8)
            .map(|i| {
                let (a, b, c) = (z(i >> 2 & 1), z(i >> 1 & 1), z(i & 1));
                let energy = (1.0 + e1) * a * b + (1.0 + e2) * b * c;
                Complex64::from_polar(1.0, -energy * duration)
            })
            .collect();
        diagonal = diagonal.max(u.distance(&ComplexMatrix::from_diagonal(&phases)));
    }

    report.record(
        "unitarity and analytic propagators",
        unitarity < 1e-9 && rotation < 1e-10 && diagonal < 1e-10,
        format!(
            "unitarity {unitarity:.1e} (limit 1e-9), rotation {rotation:.1e}, diagonal {diagonal:.1e} (limit 1e-10)"
        ),
    );
}

/// Trains on the coupling model (`T = 10`, `M = 100`, α = 0.02) from the
/// seed's random guess, testing only at the end.
fn train_toffoli(
    mode: BatchMode,
    batch_size: usize,
    budget: u64,
    seed: u64,
    momentum: MomentumRule,
    target_loss: Option<f64>,
) -> OptimizationResult {
    let model = ThreeQubitCoupling::new();
    let mut cfg = OptimizerConfig::new(mode, batch_size, budget, seed);
    cfg.learning_rate = 0.02;
    cfg.momentum = momentum;
    cfg.test_set_size = 1000;
    cfg.test_every = u64::MAX;
    cfg.target_loss = target_loss;
    let init = initial_field(100, 6, 10.0, None, seed).unwrap();
    run(
        &model,
        &toffoli_objective(),
        &init,
        cfg.scheduler(coupling_box()).unwrap(),
        &cfg,
    )
    .unwrap()
}

fn nominal_infidelity(field: &ControlField) -> f64 {
    let u = propagate(&ThreeQubitCoupling::new(), field, &UncertaintySample::zeros(2)).unwrap();
    toffoli_objective().loss(&u).unwrap()
}

fn area_below_1e3(field: &ControlField) -> f64 {
    let grid = GridSpec::square(0.2, 41).unwrap();
    let land = landscape(&ThreeQubitCoupling::new(), field, &toffoli_objective(), &grid).unwrap();
    levelset_area(&land, 1e-3)
}

fn toffoli_training(report: &Report) {
    #[derive(Clone, Copy)]
    enum Job {
        Grape(u64),
        Overfit(u64),
        Fresh(u64),
        Fixed(u64),
    }
    let jobs: Vec<Job> = SEEDS
        .iter()
        .flat_map(|&s| [Job::Fresh(s), Job::Fixed(s), Job::Grape(s), Job::Overfit(s)])
        .collect();
    let results: Vec<(Job, OptimizationResult)> = jobs
        .par_iter()
        .with_max_len(1)
        .map(|&job| {
            let blend = MomentumRule::Blend { lambda: 0.1 };
            let heavy_ball = MomentumRule::Accumulated { beta: 0.9 };
            let r = match job {
                Job::Grape(s) => train_toffoli(BatchMode::Nominal, 1, 200_000, s, blend, Some(1e-5)),
                Job::Overfit(s) => train_toffoli(BatchMode::FixedBatch, 1, 100_000, s, heavy_ball, Some(1e-7)),
                Job::Fresh(s) => train_toffoli(BatchMode::FreshBatch, 10, 100_000, s, heavy_ball, None),
                Job::Fixed(s) => train_toffoli(BatchMode::FixedBatch, 10, 100_000, s, heavy_ball, None),
            };
            (job, r)
        })
        .collect();
    let pick = |f: fn(Job) -> bool| -> Vec<&OptimizationResult> {
        results.iter().filter(|(j, _)| f(*j)).map(|(_, r)| r).collect()
    };
    let grape = pick(|j| matches!(j, Job::Grape(_)));
    let overfit = pick(|j| matches!(j, Job::Overfit(_)));
    let fresh = pick(|j| matches!(j, Job::Fresh(_)));
    let fixed = pick(|j| matches!(j, Job::Fixed(_)));

    let nominal: Vec<f64> = grape.iter().map(|r| nominal_infidelity(&r.final_field)).collect();
    let used: Vec<f64> = grape
        .iter()
        .map(|r| r.trace.rows.last().unwrap().samples as f64)
        .collect();
    report.record(
        "nominal GRAPE reaches 1e-4",
        at_least_two(nominal.iter().map(|&n| n < 1e-4)),
        format!(
            "nominal infidelity {} after {} samples (limit 1e-4 within 2e5, 2 of 3 seeds)",
            sci(&nominal),
            fixed_int(&used)
        ),
    );

    let train: Vec<f64> = overfit.iter().map(|r| r.final_batch_loss()).collect();
    let test: Vec<f64> = overfit.iter().map(|r| r.final_test_loss).collect();
    report.record(
        "single fixed sample overfits",
        at_least_two(train.iter().zip(&test).map(|(&a, &b)| a < 1e-6 && b > 1e-2)),
        format!(
            "train {} (limit < 1e-6), test {} (limit > 1e-2), 2 of 3 seeds",
            sci(&train),
            sci(&test)
        ),
    );

    let b: Vec<f64> = fresh.iter().map(|r| r.final_test_loss).collect();
    let s: Vec<f64> = fixed.iter().map(|r| r.final_test_loss).collect();
    let (mb, ms) = (median(b.clone()), median(s.clone()));
    report.record(
        "b-GRAPE beats s-GRAPE on the test set",
        mb < ms,
        format!(
            "median test infidelity b-GRAPE {mb:.3e} [{}] vs s-GRAPE {ms:.3e} [{}]",
            sci(&b),
            sci(&s)
        ),
    );

    let areas =
        |rs: &[&OptimizationResult]| -> Vec<f64> { rs.par_iter().map(|r| area_below_1e3(&r.final_field)).collect() };
    let (ab, as_, ag) = (areas(&fresh), areas(&fixed), areas(&grape));
    let (mb, ms, mg) = (median(ab.clone()), median(as_.clone()), median(ag.clone()));
    report.record(
        "robustness area ordering at 1e-3",
        mb > ms && ms > mg,
        format!(
            "median area b-GRAPE {mb:.4} [{}] > s-GRAPE {ms:.4} [{}] > GRAPE {mg:.4} [{}] of 0.16",
            decimals(&ab),
            decimals(&as_),
            decimals(&ag)
        ),
    );
}

fn fixed_int(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.0}")).collect::<Vec<_>>().join(" ")
}

fn qubit_experiment(seed: u64) -> Experiment {
    let mut e = Experiment::load(&workspace_root().join("configs/qubit_noise.toml")).unwrap();
    e.set_seed(seed);
    e
}

fn qubit_baselines(report: &Report) {
    let e = qubit_experiment(1);
    let prob = |kind: BaselinePulse, objective: &Objective| {
        let f = baseline_pulse(kind, e.duration(), e.segments()).unwrap();
        let mut rng = RandomSource::with_stream(1, EVAL_STREAM);
        error_distribution(&e.model, &f, objective, &e.distribution, 10_000, &mut rng)
            .unwrap()
            .prob_below(1e-2)
    };
    let rect = prob(BaselinePulse::Rectangular, &e.objective);
    let gauss = prob(BaselinePulse::gaussian(), &e.objective);
    let sensitive = Objective::new(e.objective.target().clone(), FidelityMeasure::PhaseSensitive);
    let rect_sensitive = prob(BaselinePulse::Rectangular, &sensitive);
    report.record(
        "qubit baseline pulses",
        (rect - 0.62).abs() <= 0.08 && gauss < rect,
        format!(
            "P(<1e-2) rectangular {rect:.4} (0.62 ± 0.08), Gaussian {gauss:.4} (below rectangular); {} measure, phase-sensitive rectangular would be {rect_sensitive:.4}",
            e.objective.measure().name()
        ),
    );
}

fn qubit_optimization(report: &Report) {
    let probs: Vec<(f64, f64)> = SEEDS
        .par_iter()
        .with_max_len(1)
        .map(|&seed| {
            let e = qubit_experiment(seed);
            let init = initial_field(e.segments(), e.model.num_controls(), e.duration(), e.bound(), seed).unwrap();
            let scheduler = e.optimizer.scheduler(e.distribution.clone()).unwrap();
            let r = run(&e.model, &e.objective, &init, scheduler, &e.optimizer).unwrap();
            let mut rng = RandomSource::with_stream(seed, EVAL_STREAM);
            let d = error_distribution(
                &e.model,
                &r.final_field,
                &e.objective,
                &e.distribution,
                10_000,
                &mut rng,
            )
            .unwrap();
            (d.prob_below(1e-2), d.prob_below(1e-3))
        })
        .collect();
    let p2: Vec<f64> = probs.iter().map(|p| p.0).collect();
    let p3: Vec<f64> = probs.iter().map(|p| p.1).collect();
    let e = qubit_experiment(1);
    report.record(
        "qubit optimization is robust to noise",
        at_least_two(p2.iter().map(|&p| p >= 0.95)),
        format!(
            "P(<1e-2) {} (limit 0.95, 2 of 3 seeds), P(<1e-3) {} (informational); B={}, budget {}",
            decimals(&p2),
            decimals(&p3),
            e.optimizer.batch_size,
            e.optimizer.sample_budget
        ),
    );
}

const DETERMINISM_CONFIG: &str = r#"
seed = 11

[model]
kind = "three_qubit"
duration = 4.0
segments = 20

[optimizer]
batch_size = 10
sample_budget = 3000
test_set_size = 50
test_every = 20
"#;

fn determinism(report: &Report) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("det.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let checksum = |threads: usize, tag: &str| {
        let out = dir.path().join(format!("run-{threads}-{tag}"));
        let status = Command::new(env!("CARGO_BIN_EXE_bgrape"))
            .args(["optimize", "--config"])
            .arg(&config)
            .args(["--threads", &threads.to_string(), "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        sha256_file(&out.join("trace.csv")).unwrap()
    };
    let sums: Vec<String> = [(1, "a"), (1, "b"), (2, "a"), (4, "a"), (8, "a")]
        .iter()
        .map(|&(t, tag)| checksum(t, tag))
        .collect();
    let same = sums.iter().all(|s| s == &sums[0]);
    report.record(
        "trace.csv identical across runs and thread counts",
        same,
        format!(
            "{} distinct checksum(s) over threads 1, 1, 2, 4, 8; {}",
            {
                let mut u = sums.clone();
                u.dedup();
                u.len()
            },
            &sums[0][..16]
        ),
    );
}

#[test]
fn acceptance() {
    let report = Report::new();
    gradient_correctness(&report);
    unitarity_and_oracles(&report);
    qubit_baselines(&report);
    determinism(&report);
    qubit_optimization(&report);
    toffoli_training(&report);

    let failures = report.failures();
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}
