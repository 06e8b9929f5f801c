// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Uncertain Hamiltonian models and piecewise-constant propagation.
//!
//! Both shipped models are control-affine,
//! `H[u, ε, t] = H_0(ε, t) + c(ε, t) · Σ_k u_k A_k`, and are exposed through
//! [`ControlModel`] so the optimizer never depends on a concrete model.

use crate::error::{check_dim, Error, Result};
use crate::qmat::{embed_qubit_operator, hermitian_eig, kron, pauli, ComplexMatrix, HermitianEigen, PauliAxis};
use crate::sampling::noise_value;

/// Piecewise-constant control amplitudes, `num_segments × num_controls`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    num_segments: usize,
    num_controls: usize,
    duration: f64,
    bound: Option<f64>,
    amplitudes: Vec<f64>,
}

impl ControlField {
    /// `amplitudes` is row-major: row `m` holds the `num_controls` channel
    /// values of segment `m`.
    pub fn new(num_segments: usize, num_controls: usize, duration: f64, amplitudes: Vec<f64>) -> Result<Self> {
        if num_segments == 0 || num_controls == 0 {
            return Err(Error::InvalidArgument(
                "control field needs at least one segment and one channel".into(),
            ));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "control duration must be positive, got {duration}"
            )));
        }
        check_dim("ControlField amplitudes", num_segments * num_controls, amplitudes.len())?;
        if let Some(i) = amplitudes.iter().position(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite amplitude at segment {}, channel {}",
                i / num_controls,
                i % num_controls
            )));
        }
        Ok(Self {
            num_segments,
            num_controls,
            duration,
            bound: None,
            amplitudes,
        })
    }

    pub fn zeros(num_segments: usize, num_controls: usize, duration: f64) -> Result<Self> {
        Self::new(
            num_segments,
            num_controls,
            duration,
            vec![0.0; num_segments * num_controls],
        )
    }

    /// Every segment carries the same channel values.
    pub fn constant(num_segments: usize, duration: f64, values: &[f64]) -> Result<Self> {
        let amplitudes = values
            .iter()
            .copied()
            .cycle()
            .take(num_segments * values.len())
            .collect();
        Self::new(num_segments, values.len(), duration, amplitudes)
    }

    /// Attaches an amplitude bound. Fails if any amplitude already exceeds it.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "amplitude bound must be non-negative, got {bound}"
            )));
        }
        if let Some(a) = self.amplitudes.iter().find(|a| a.abs() > bound) {
            return Err(Error::InvalidArgument(format!("amplitude {a} exceeds bound {bound}")));
        }
        self.bound = Some(bound);
        Ok(self)
    }

    /// Attaches a bound, clamping amplitudes into it.
    pub fn clamped_to(mut self, bound: f64) -> Result<Self> {
        if !(bound >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "amplitude bound must be non-negative, got {bound}"
            )));
        }
        self.bound = Some(bound);
        self.project();
        Ok(self)
    }

    pub(crate) fn project(&mut self) {
        if let Some(b) = self.bound {
            for a in &mut self.amplitudes {
                *a = a.clamp(-b, b);
            }
        }
    }

    #[inline]
    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    #[inline]
    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    #[inline]
    pub fn duration(&self) -> f64 {
        self.duration
    }

    #[inline]
    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.duration / self.num_segments as f64
    }

    /// Midpoint time of segment `m` (0-based): `(m + ½)·dt`.
    #[inline]
    pub fn midpoint(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.dt()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [f64] {
        &mut self.amplitudes
    }

    #[inline]
    pub fn get(&self, segment: usize, channel: usize) -> f64 {
        self.amplitudes[segment * self.num_controls + channel]
    }

    #[inline]
    pub fn segment(&self, m: usize) -> &[f64] {
        &self.amplitudes[m * self.num_controls..(m + 1) * self.num_controls]
    }

    pub fn max_abs_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |acc, a| acc.max(a.abs()))
    }

    /// Splits at a segment boundary into `[0, split)` and `[split, M)`.
    pub fn split_at(&self, split: usize) -> Result<(Self, Self)> {
        if split == 0 || split >= self.num_segments {
            return Err(Error::IndexOutOfRange {
                context: "ControlField::split_at",
                index: split,
                len: self.num_segments,
            });
        }
        let dt = self.dt();
        let k = self.num_controls;
        let (head, tail) = self.amplitudes.split_at(split * k);
        let mut first = Self::new(split, k, dt * split as f64, head.to_vec())?;
        let mut second = Self::new(
            self.num_segments - split,
            k,
            dt * (self.num_segments - split) as f64,
            tail.to_vec(),
        )?;
        first.bound = self.bound;
        second.bound = self.bound;
        Ok((first, second))
    }
}

/// One draw of the uncertainty parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySample(Vec<f64>);

impl UncertaintySample {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for UncertaintySample {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// A control-affine uncertain Hamiltonian family
/// `H[u, ε, t] = drift(ε, t) + control_scale(ε, t) · Σ_k u_k · control_operator(k)`.
pub trait ControlModel: Sync {
    /// Hilbert-space dimension `N`.
    fn dim(&self) -> usize;

    /// Number of control channels `K`.
    fn num_controls(&self) -> usize;

    /// Length of an uncertainty sample.
    fn uncertainty_dim(&self) -> usize;

    /// Uncertainty-dependent part of the Hamiltonian that carries no control.
    fn drift(&self, eps: &UncertaintySample, t: f64) -> ComplexMatrix;

    /// Multiplicative factor applied to every control term.
    fn control_scale(&self, eps: &UncertaintySample, t: f64) -> f64;

    /// Fixed Hermitian operator of channel `k`; `k < num_controls()`.
    fn control_operator(&self, k: usize) -> &ComplexMatrix;

    fn check_sample(&self, eps: &UncertaintySample) -> Result<()> {
        check_dim("uncertainty sample", self.uncertainty_dim(), eps.len())
    }

    /// `H[u_m, ε, t_m]`.
    fn hamiltonian_at(&self, u: &[f64], eps: &UncertaintySample, t: f64) -> Result<ComplexMatrix> {
        check_dim("control vector", self.num_controls(), u.len())?;
        self.check_sample(eps)?;
        let mut h = self.drift(eps, t);
        let c = self.control_scale(eps, t);
        for (k, &uk) in u.iter().enumerate() {
            if uk != 0.0 {
                h.add_scaled(self.control_operator(k), c * uk);
            }
        }
        Ok(h)
    }

    /// `∂H/∂u_k` at `(ε, t)`; independent of `u`.
    fn control_derivative_at(&self, k: usize, eps: &UncertaintySample, t: f64) -> Result<ComplexMatrix> {
        if k >= self.num_controls() {
            return Err(Error::IndexOutOfRange {
                context: "control channel",
                index: k,
                len: self.num_controls(),
            });
        }
        self.check_sample(eps)?;
        Ok(self.control_operator(k).scale_real(self.control_scale(eps, t)))
    }
}

/// Three qubits with uncertain nearest-neighbour ZZ couplings and
/// independent x/y drives on each qubit:
/// `H = (1+ε₁) Z₁Z₂ + (1+ε₂) Z₂Z₃ + Σ_k (u_kx X_k + u_ky Y_k)`.
///
/// Basis index of `|abc⟩` is `4a + 2b + c`; qubit 1 is the most significant.
/// Channel order is `[u_1x, u_1y, u_2x, u_2y, u_3x, u_3y]`.
#[derive(Debug, Clone)]
pub struct ThreeQubitCoupling {
    z1z2: ComplexMatrix,
    z2z3: ComplexMatrix,
    controls: Vec<ComplexMatrix>,
}

impl ThreeQubitCoupling {
    pub fn new() -> Self {
        let z = pauli(PauliAxis::Z);
        let id = ComplexMatrix::identity(2);
        let zz = kron(&z, &z);
        let z1z2 = kron(&zz, &id);
        let z2z3 = kron(&id, &zz);
        let controls = (0..3)
            .flat_map(|q| {
                [PauliAxis::X, PauliAxis::Y]
                    .into_iter()
                    .map(move |axis| embed_qubit_operator(&pauli(axis), q, 3))
            })
            .collect();
        Self { z1z2, z2z3, controls }
    }
}

impl Default for ThreeQubitCoupling {
    fn default() -> Self {
        Self::new()
    }
}

impl ControlModel for ThreeQubitCoupling {
    fn dim(&self) -> usize {
        8
    }

    fn num_controls(&self) -> usize {
        6
    }

    fn uncertainty_dim(&self) -> usize {
        2
    }

    fn drift(&self, eps: &UncertaintySample, _t: f64) -> ComplexMatrix {
        let e = eps.values();
        let mut h = self.z1z2.scale_real(1.0 + e[0]);
        h.add_scaled(&self.z2z3, 1.0 + e[1]);
        h
    }

    fn control_scale(&self, _eps: &UncertaintySample, _t: f64) -> f64 {
        1.0
    }

    fn control_operator(&self, k: usize) -> &ComplexMatrix {
        &self.controls[k]
    }
}

/// Number of Fourier modes in the multiplicative noise of [`NoisyQubit`].
pub const NOISE_MODES: usize = 10;

/// Single qubit with multiplicative amplitude noise:
/// `H = [1 + n(t)] · (u_x X + u_y Y)`, with `n(t)` the Fourier series encoded
/// by a 30-component sample laid out as `[a₁..a₁₀ | b₁..b₁₀ | ω₁..ω₁₀]`.
#[derive(Debug, Clone)]
pub struct NoisyQubit {
    controls: [ComplexMatrix; 2],
    zero: ComplexMatrix,
}

impl NoisyQubit {
    pub fn new() -> Self {
        Self {
            controls: [pauli(PauliAxis::X), pauli(PauliAxis::Y)],
            zero: ComplexMatrix::zeros(2),
        }
    }
}

impl Default for NoisyQubit {
    fn default() -> Self {
        Self::new()
    }
}

impl ControlModel for NoisyQubit {
    fn dim(&self) -> usize {
        2
    }

    fn num_controls(&self) -> usize {
        2
    }

    fn uncertainty_dim(&self) -> usize {
        3 * NOISE_MODES
    }

    fn drift(&self, _eps: &UncertaintySample, _t: f64) -> ComplexMatrix {
        self.zero.clone()
    }

    fn control_scale(&self, eps: &UncertaintySample, t: f64) -> f64 {
        // Length is validated by every public entry point.
        1.0 + noise_value(eps, t).unwrap_or(0.0)
    }

    fn control_operator(&self, k: usize) -> &ComplexMatrix {
        &self.controls[k]
    }
}

/// The shipped model families.
#[derive(Debug, Clone)]
pub enum HamiltonianModel {
    ThreeQubitCoupling(ThreeQubitCoupling),
    NoisyQubit(NoisyQubit),
}

impl HamiltonianModel {
    pub fn three_qubit_coupling() -> Self {
        Self::ThreeQubitCoupling(ThreeQubitCoupling::new())
    }

    pub fn noisy_qubit() -> Self {
        Self::NoisyQubit(NoisyQubit::new())
    }

    fn inner(&self) -> &dyn ControlModel {
        match self {
            Self::ThreeQubitCoupling(m) => m,
            Self::NoisyQubit(m) => m,
        }
    }
}

impl ControlModel for HamiltonianModel {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn num_controls(&self) -> usize {
        self.inner().num_controls()
    }

    fn uncertainty_dim(&self) -> usize {
        self.inner().uncertainty_dim()
    }

    fn drift(&self, eps: &UncertaintySample, t: f64) -> ComplexMatrix {
        self.inner().drift(eps, t)
    }

    fn control_scale(&self, eps: &UncertaintySample, t: f64) -> f64 {
        self.inner().control_scale(eps, t)
    }

    fn control_operator(&self, k: usize) -> &ComplexMatrix {
        self.inner().control_operator(k)
    }
}

/// Forward-pass cache for one uncertainty sample.
#[derive(Debug, Clone)]
pub struct SegmentDecomposition {
    /// Eigendecomposition of each segment Hamiltonian.
    pub eigens: Vec<HermitianEigen>,
    /// `V_m = exp(-i H_m dt)`.
    pub unitaries: Vec<ComplexMatrix>,
    /// `P_m = V_m ⋯ V_1`; the last entry is the final propagator.
    pub forward: Vec<ComplexMatrix>,
    /// Control scale `c_m` at each segment midpoint.
    pub scales: Vec<f64>,
    pub dt: f64,
}

impl SegmentDecomposition {
    pub fn final_propagator(&self) -> &ComplexMatrix {
        self.forward.last().expect("at least one segment")
    }

    pub fn num_segments(&self) -> usize {
        self.unitaries.len()
    }
}

fn check_inputs<M: ControlModel + ?Sized>(model: &M, field: &ControlField, eps: &UncertaintySample) -> Result<()> {
    check_dim(
        "field channels vs model controls",
        model.num_controls(),
        field.num_controls(),
    )?;
    model.check_sample(eps)
}

struct Segment {
    eigen: HermitianEigen,
    unitary: ComplexMatrix,
    scale: f64,
}

fn segment<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    eps: &UncertaintySample,
    m: usize,
) -> Result<Segment> {
    let t = field.midpoint(m);
    let h = model.hamiltonian_at(field.segment(m), eps, t)?;
    let eigen = hermitian_eig(&h)?;
    let unitary = eigen.exp_unitary(field.dt());
    Ok(Segment {
        eigen,
        unitary,
        scale: model.control_scale(eps, t),
    })
}

/// Final propagator `U(T, ε) = V_M ⋯ V_1` with midpoint-sampled segments.
pub fn propagate<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    eps: &UncertaintySample,
) -> Result<ComplexMatrix> {
    check_inputs(model, field, eps)?;
    let mut product = segment(model, field, eps, 0)?.unitary;
    for m in 1..field.num_segments() {
        product = segment(model, field, eps, m)?.unitary.matmul(&product);
    }
    Ok(product)
}

/// Caches every segment's eigendecomposition, unitary and forward product.
pub fn decompose<M: ControlModel + ?Sized>(
    model: &M,
    field: &ControlField,
    eps: &UncertaintySample,
) -> Result<SegmentDecomposition> {
    check_inputs(model, field, eps)?;
    let n_seg = field.num_segments();
    let mut eigens = Vec::with_capacity(n_seg);
    let mut unitaries = Vec::with_capacity(n_seg);
    let mut forward: Vec<ComplexMatrix> = Vec::with_capacity(n_seg);
    let mut scales = Vec::with_capacity(n_seg);
    for m in 0..n_seg {
        let seg = segment(model, field, eps, m)?;
        let next = match forward.last() {
            None => seg.unitary.clone(),
            Some(prev) => seg.unitary.matmul(prev),
        };
        forward.push(next);
        eigens.push(seg.eigen);
        unitaries.push(seg.unitary);
        scales.push(seg.scale);
    }
    Ok(SegmentDecomposition {
        eigens,
        unitaries,
        forward,
        scales,
        dt: field.dt(),
    })
}
