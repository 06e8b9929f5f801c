// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Gate infidelity, empirical batch risk and its exact gradient.
//!
//! The gradient is the GRAPE forward/backward pass with exact propagator
//! derivatives. For segment `m` and channel `k` the per-sample derivative is
//! `−Re(w · Tr(Q_m W_mk P_{m−1})) / N`, where `Q_m = U_f† V_M ⋯ V_{m+1}`,
//! `P_{m−1} = V_{m−1} ⋯ V_1`, `W_mk = V (Φ ∘ V† ∂_k H V) V†` and `w` depends on
//! the fidelity measure. The trace is contracted once per segment into
//! `R_m = V (Y ∘ Φᵀ) V†` with `Y = V† P_{m−1} Q_m V`, after which every channel
//! costs a single `Tr(R_m ∂_k H)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{decompose, propagate, ControlField, ControlModel, UncertaintySample};
use crate::error::{check_dim, Error, Result};
use crate::qmat::{pauli, ComplexMatrix, PauliAxis};

/// Target gate `U_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTarget {
    matrix: ComplexMatrix,
    label: String,
}

impl GateTarget {
    pub fn new(matrix: ComplexMatrix, label: impl Into<String>) -> Result<Self> {
        let err = matrix.unitarity_error();
        if !(err <= 1e-10) {
            return Err(Error::InvalidArgument(format!(
                "target gate is not unitary (‖U†U − I‖ = {err:e})"
            )));
        }
        Ok(Self {
            matrix,
            label: label.into(),
        })
    }

    /// Controlled-controlled-NOT on three qubits; qubit 3 is the target.
    pub fn toffoli() -> Self {
        let mut m = ComplexMatrix::identity(8);
        m[(6, 6)] = Complex64::new(0.0, 0.0);
        m[(7, 7)] = Complex64::new(0.0, 0.0);
        m[(6, 7)] = Complex64::new(1.0, 0.0);
        m[(7, 6)] = Complex64::new(1.0, 0.0);
        Self {
            matrix: m,
            label: "toffoli".into(),
        }
    }

    /// `R_x(π) = −i σ_x`.
    pub fn rx_pi() -> Self {
        Self {
            matrix: pauli(PauliAxis::X).scale(Complex64::new(0.0, -1.0)),
            label: "rx_pi".into(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim),
            label: "identity".into(),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// The representative `e^{iφ} U_f` with unit determinant, `φ = −arg det U_f / N`.
    ///
    /// Traceless generators only reach `SU(N)`, so under the phase-sensitive
    /// measure a target outside it is unreachable: Toffoli has determinant
    /// −1 and its infidelity floor would be `1 − cos(π/8)`.
    pub fn special_unitary(&self) -> Self {
        let phase = -self.matrix.determinant().arg() / self.dim() as f64;
        Self {
            matrix: self.matrix.scale(Complex64::from_polar(1.0, phase)),
            label: self.label.clone(),
        }
    }
}

/// `1 − Re Tr(U_f† U)/N`, equal to `‖U − U_f‖²_F / 2N` for unitary `U`.
/// Ranges over `[0, 2]` and is sensitive to global phase.
pub fn infidelity(u: &ComplexMatrix, target: &GateTarget) -> Result<f64> {
    check_dim("infidelity", target.dim(), u.dim())?;
    let overlap = target.matrix.adjoint_matmul(u).trace() / target.dim() as f64;
    Ok(1.0 - overlap.re)
}

/// `1 − |Tr(U_f† U)/N|²`, in `[0, 1]` and blind to global phase.
pub fn phase_invariant_infidelity(u: &ComplexMatrix, target: &GateTarget) -> Result<f64> {
    check_dim("infidelity", target.dim(), u.dim())?;
    let overlap = target.matrix.adjoint_matmul(u).trace() / target.dim() as f64;
    Ok(1.0 - overlap.norm_sqr())
}

/// Which gate-distance the objective minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityMeasure {
    /// [`infidelity`].
    PhaseSensitive,
    /// [`phase_invariant_infidelity`].
    PhaseInvariant,
}

impl FidelityMeasure {
    pub fn name(self) -> &'static str {
        match self {
            Self::PhaseSensitive => "phase_sensitive",
            Self::PhaseInvariant => "phase_invariant",
        }
    }
}

/// Target plus the measure used to compare against it.
#[derive(Debug, Clone)]
pub struct Objective {
    target: GateTarget,
    target_adjoint: ComplexMatrix,
    measure: FidelityMeasure,
}

impl Objective {
    pub fn new(target: GateTarget, measure: FidelityMeasure) -> Self {
        let target_adjoint = target.matrix.adjoint();
        Self {
            target,
            target_adjoint,
            measure,
        }
    }

    pub fn target(&self) -> &GateTarget {
        &self.target
    }

    pub fn measure(&self) -> FidelityMeasure {
        self.measure
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// `2N`: the factor between the unnormalized squared distance
    /// `‖U − U_f‖²` and the normalized infidelity.
    pub fn raw_scale(&self) -> f64 {
        2.0 * self.dim() as f64
    }

    /// `Tr(U_f† U) / N`.
    fn overlap(&self, u: &ComplexMatrix) -> Complex64 {
        self.target_adjoint.trace_product(u) / self.dim() as f64
    }

    fn loss_from_overlap(&self, z: Complex64) -> f64 {
        match self.measure {
            FidelityMeasure::PhaseSensitive => 1.0 - z.re,
            FidelityMeasure::PhaseInvariant => 1.0 - z.norm_sqr(),
        }
    }

    /// Infidelity of a final propagator under this objective's measure.
    pub fn loss(&self, u: &ComplexMatrix) -> Result<f64> {
        check_dim("objective", self.dim(), u.dim())?;
        Ok(self.loss_from_overlap(self.overlap(u)))
    }

    /// `dL = −Re(w · dz)` where `z` is the normalized overlap.
    fn overlap_weight(&self, z: Complex64) -> Complex64 {
        match self.measure {
            FidelityMeasure::PhaseSensitive => Complex64::new(1.0, 0.0),
            FidelityMeasure::PhaseInvariant => 2.0 * z.conj(),
        }
    }
}

/// Gradient with the shape of a [`ControlField`]'s amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    num_segments: usize,
    num_controls: usize,
    values: Vec<f64>,
}

impl GradientField {
    pub fn zeros(num_segments: usize, num_controls: usize) -> Self {
        Self {
            num_segments,
            num_controls,
            values: vec![0.0; num_segments * num_controls],
        }
    }

    pub fn new(num_segments: usize, num_controls: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("GradientField", num_segments * num_controls, values.len())?;
        Ok(Self {
            num_segments,
            num_controls,
            values,
        })
    }

    pub fn like(field: &ControlField) -> Self {
        Self::zeros(field.num_segments(), field.num_controls())
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, segment: usize, channel: usize) -> f64 {
        self.values[segment * self.num_controls + channel]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn matches(&self, field: &ControlField) -> bool {
        self.num_segments == field.num_segments() && self.num_controls == field.num_controls()
    }

    pub(crate) fn check_shape(&self, field: &ControlField) -> Result<()> {
        if self.matches(field) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context: "gradient vs field shape",
                expected: field.num_segments() * field.num_controls(),
                actual: self.values.len(),
            })
        }
    }
}

fn check_model<M: ControlModel + ?Sized>(model: &M, objective: &Objective) -> Result<()> {
    check_dim("model vs target dimension", model.dim(), objective.dim())
}

/// Infidelity of one sample's final propagator.
pub fn sample_loss<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    eps: &UncertaintySample,
) -> Result<f64> {
    check_model(model, objective)?;
    objective.loss(&propagate(model, field, eps)?)
}

/// Mean of per-sample values in sample order.
fn ordered_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-sample losses in batch order.
pub fn sample_losses<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    batch: &[UncertaintySample],
) -> Result<Vec<f64>> {
    check_model(model, objective)?;
    batch
        .par_iter()
        .map(|eps| objective.loss(&propagate(model, field, eps)?))
        .collect()
}

/// Empirical risk: mean infidelity over the batch.
pub fn batch_loss<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    batch: &[UncertaintySample],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(ordered_mean(&sample_losses(model, field, objective, batch)?))
}

/// Loss and exact gradient for a single uncertainty sample.
pub fn sample_gradient<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    eps: &UncertaintySample,
) -> Result<(f64, Vec<f64>)> {
    check_model(model, objective)?;
    let dec = decompose(model, field, eps)?;
    let n = model.dim();
    let num_controls = model.num_controls();
    let dt = dec.dt;

    let z = objective.overlap(dec.final_propagator());
    let loss = objective.loss_from_overlap(z);
    let weight = objective.overlap_weight(z) / n as f64;

    let mut grad = vec![0.0; field.num_segments() * num_controls];
    let identity = ComplexMatrix::identity(n);
    // back = U_f† V_M ⋯ V_{m+1}
    let mut back = objective.target_adjoint.clone();
    for m in (0..dec.num_segments()).rev() {
        let eig = &dec.eigens[m];
        let v = &eig.eigenvectors;
        let before = if m == 0 { &identity } else { &dec.forward[m - 1] };

        let x = before.matmul(&back);
        let y = v.adjoint_matmul(&x).matmul(v);
        let phi = eig.divided_differences(dt);
        let mut g = ComplexMatrix::zeros(n);
        for p in 0..n {
            for q in 0..n {
                g[(p, q)] = y[(p, q)] * phi[(q, p)];
            }
        }
        let r = v.matmul(&g).matmul_adjoint(v);

        let scale = dec.scales[m];
        let row = &mut grad[m * num_controls..(m + 1) * num_controls];
        for (k, slot) in row.iter_mut().enumerate() {
            let t = r.trace_product(model.control_operator(k)) * scale;
            *slot = -(weight * t).re;
        }

        back = back.matmul(&dec.unitaries[m]);
    }
    Ok((loss, grad))
}

/// Batch loss and the exact gradient of the batch-mean infidelity with
/// respect to every amplitude. The loss is bit-identical to [`batch_loss`].
pub fn batch_gradient<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    batch: &[UncertaintySample],
) -> Result<(f64, GradientField)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let per_sample: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|eps| sample_gradient(model, field, objective, eps))
        .collect::<Result<_>>()?;

    let losses: Vec<f64> = per_sample.iter().map(|(l, _)| *l).collect();
    let mut grad = GradientField::like(field);
    for (_, g) in &per_sample {
        for (acc, gi) in grad.values.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for v in &mut grad.values {
        *v *= inv;
    }
    Ok((ordered_mean(&losses), grad))
}

/// Central finite differences of [`batch_loss`], one amplitude at a time.
/// Bounds are ignored while perturbing.
pub fn finite_difference_gradient<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    objective: &Objective,
    batch: &[UncertaintySample],
    step: f64,
) -> Result<GradientField> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let base = ControlField::new(
        field.num_segments(),
        field.num_controls(),
        field.duration(),
        field.amplitudes().to_vec(),
    )?;
    let mut grad = GradientField::like(field);
    for i in 0..base.amplitudes().len() {
        let mut plus = base.clone();
        plus.amplitudes_mut()[i] += step;
        let mut minus = base.clone();
        minus.amplitudes_mut()[i] -= step;
        let lp = batch_loss(model, &plus, objective, batch)?;
        let lm = batch_loss(model, &minus, objective, batch)?;
        grad.values[i] = (lp - lm) / (2.0 * step);
    }
    Ok(grad)
}
