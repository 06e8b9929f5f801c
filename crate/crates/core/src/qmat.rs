// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex matrices at small dimension.
//!
//! Everything the propagator machinery needs: Pauli and tensor-product
//! constructors, Hermitian eigendecomposition, and the
//! spectral forms of `exp(-i h dt)` and its directional derivative.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

const MAX_QL_ITERATIONS: usize = 60;

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from `dim * dim` row-major entries.
    pub fn from_vec(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dim("ComplexMatrix::from_vec", dim * dim, data.len())?;
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim("ComplexMatrix::from_rows", dim, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Determinant by LU factorization with partial pivoting.
    pub fn determinant(&self) -> Complex64 {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = ONE;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
                .expect("non-empty range");
            if a[pivot * n + col] == ZERO {
                return ZERO;
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                for k in col + 1..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= f * v;
                }
            }
        }
        det
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            for (j, &a) in row.iter().enumerate() {
                acc += a * other.data[j * n + i];
            }
        }
        acc
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * factor;
        }
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let out_row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: n, data: out }
    }

    /// `self† · other`.
    pub fn adjoint_matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for k in 0..n {
            let a_row = &self.data[k * n..(k + 1) * n];
            let b_row = &other.data[k * n..(k + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                let a = a.conj();
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: n, data: out }
    }

    /// `self · other†`.
    pub fn matmul_adjoint(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let a_row = &self.data[i * n..(i + 1) * n];
            for j in 0..n {
                let b_row = &other.data[j * n..(j + 1) * n];
                out[i * n + j] = a_row.iter().zip(b_row).fold(ZERO, |acc, (&a, &b)| acc + a * b.conj());
            }
        }
        Self { dim: n, data: out }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`.
    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.distance(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    /// `‖U†U − I‖_F`.
    pub fn unitarity_error(&self) -> f64 {
        self.adjoint_matmul(self).distance(&Self::identity(self.dim))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

pub fn pauli(axis: PauliAxis) -> ComplexMatrix {
    let i = Complex64::i();
    let data = match axis {
        PauliAxis::X => vec![ZERO, ONE, ONE, ZERO],
        PauliAxis::Y => vec![ZERO, -i, i, ZERO],
        PauliAxis::Z => vec![ONE, ZERO, ZERO, -ONE],
    };
    ComplexMatrix { dim: 2, data }
}

/// Tensor product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim, b.dim);
    let n = na * nb;
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..na {
        for j in 0..na {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..nb {
                for l in 0..nb {
                    out.data[(i * nb + k) * n + j * nb + l] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Embeds a single-qubit operator on `qubit` (0 = most significant) of an
/// `num_qubits` register.
pub fn embed_qubit_operator(op: &ComplexMatrix, qubit: usize, num_qubits: usize) -> ComplexMatrix {
    assert!(qubit < num_qubits, "qubit index out of range");
    let id = ComplexMatrix::identity(2);
    let mut out = ComplexMatrix::identity(1);
    for q in 0..num_qubits {
        out = kron(&out, if q == qubit { op } else { &id });
    }
    out
}

/// Spectral decomposition `h = V · diag(λ) · V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V · diag(λ) · V†`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d: Vec<Complex64> = self.eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)).collect();
        self.apply_diagonal(&d)
    }

    /// `V · diag(d) · V†`.
    fn apply_diagonal(&self, d: &[Complex64]) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for row in scaled.data.chunks_mut(n) {
            for (x, &dj) in row.iter_mut().zip(d) {
                *x *= dj;
            }
        }
        scaled.matmul_adjoint(v)
    }

    /// `e^{-i λ_p dt}` for each eigenvalue.
    pub fn phases(&self, dt: f64) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -l * dt))
            .collect()
    }

    /// `exp(-i h dt)`.
    pub fn exp_unitary(&self, dt: f64) -> ComplexMatrix {
        self.apply_diagonal(&self.phases(dt))
    }

    /// Divided differences of `λ ↦ e^{-iλ dt}` on the spectrum,
    /// `Φ_pq = (e_p − e_q)/(λ_p − λ_q)`, evaluated as
    /// `−i dt e^{-i(λ_p+λ_q)dt/2} sinc((λ_p − λ_q)dt/2)` so that close and
    /// equal eigenvalues need no special casing.
    pub fn divided_differences(&self, dt: f64) -> ComplexMatrix {
        let n = self.dim();
        let half: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -0.5 * l * dt))
            .collect();
        let mut phi = ComplexMatrix::zeros(n);
        for p in 0..n {
            for q in p..n {
                let x = 0.5 * (self.eigenvalues[p] - self.eigenvalues[q]) * dt;
                let value = half[p] * half[q] * Complex64::new(0.0, -dt * sinc(x));
                phi.data[p * n + q] = value;
                phi.data[q * n + p] = value;
            }
        }
        phi
    }

    /// Directional derivative `d/ds exp(-i (h + s a) dt)` at `s = 0`.
    pub fn exp_derivative(&self, direction: &ComplexMatrix, dt: f64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let rotated = v.adjoint_matmul(direction).matmul(v);
        let kernel = rotated.hadamard(&self.divided_differences(dt));
        v.matmul(&kernel).matmul_adjoint(v)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Householder reduction of a Hermitian `a` to real symmetric tridiagonal
/// form, `a = z · T · z†`. Returns the diagonal, the sub-diagonal (last
/// entry zero) and the unitary `z`.
#[allow(clippy::needless_range_loop)]
fn tridiagonalize(a: &ComplexMatrix) -> (Vec<f64>, Vec<f64>, ComplexMatrix) {
    let n = a.dim;
    let mut a = a.clone();
    let mut z = ComplexMatrix::identity(n);
    let mut v = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    for k in 0..n.saturating_sub(2) {
        let norm = (k + 1..n).map(|i| a.data[i * n + k].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a.data[(k + 1) * n + k];
        let phase = if x0 == ZERO { ONE } else { x0 / x0.norm() };
        let alpha = -phase * norm;
        v.fill(ZERO);
        v[k + 1] = x0 - alpha;
        for i in k + 2..n {
            v[i] = a.data[i * n + k];
        }
        let vnorm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for c in &mut v {
            *c /= vnorm;
        }
        // a ← H a H with H = I − 2vv†, as a − (v w† + w v†). Rows and
        // columns before k are already reduced and stay untouched.
        for i in k..n {
            let row = &a.data[i * n..(i + 1) * n];
            let mut acc = ZERO;
            for j in k + 1..n {
                acc += row[j] * v[j];
            }
            w[i] = acc * 2.0;
        }
        let mut vw = 0.0;
        for j in k + 1..n {
            vw += (v[j].conj() * w[j]).re;
        }
        for i in k..n {
            w[i] -= v[i] * vw;
        }
        for i in k..n {
            let (vi, wi) = (v[i], w[i]);
            let row = &mut a.data[i * n..(i + 1) * n];
            for j in k..n {
                row[j] -= vi * w[j].conj() + wi * v[j].conj();
            }
        }
        // z ← z H
        for i in 0..n {
            let row = &mut z.data[i * n..(i + 1) * n];
            let mut dot = ZERO;
            for j in k + 1..n {
                dot += row[j] * v[j];
            }
            let dot = dot * 2.0;
            for j in k + 1..n {
                row[j] -= dot * v[j].conj();
            }
        }
    }
    // A diagonal phase change makes the sub-diagonal real and non-negative.
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut phase = ONE;
    for i in 0..n {
        d[i] = a.data[i * n + i].re;
        if i > 0 {
            for r in 0..n {
                z.data[r * n + i] *= phase;
            }
        }
        if i + 1 < n {
            let sub = a.data[(i + 1) * n + i];
            e[i] = sub.norm();
            if e[i] > 0.0 {
                phase *= sub / e[i];
            }
        }
    }
    (d, e, z)
}

/// Implicit QL with Wilkinson shifts on a real symmetric tridiagonal matrix,
/// rotating the columns of `z` along.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], z: &mut ComplexMatrix) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > MAX_QL_ITERATIONS {
                return Err(Error::NonConvergence {
                    iterations: MAX_QL_ITERATIONS,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = (g * g + 1.0).sqrt();
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zi = z.data[k * n + i];
                    let zj = z.data[k * n + i + 1];
                    z.data[k * n + i + 1] = zi * s + zj * c;
                    z.data[k * n + i] = zi * c - zj * s;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigendecomposition of the Hermitian part `(h + h†)/2`, eigenvalues
/// ascending: Householder tridiagonalization, then implicit QL.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<HermitianEigen> {
    let n = h.dim;
    if h.data.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    // Keeps the unscaled rotation norms in the QL sweep finite.
    if !(h.frobenius_norm() < 1e150) {
        return Err(Error::InvalidArgument("matrix norm overflows".into()));
    }
    let mut sym = ComplexMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            sym.data[i * n + j] = 0.5 * (h.data[i * n + j] + h.data[j * n + i].conj());
        }
    }
    let (mut d, mut e, mut z) = tridiagonalize(&sym);
    tridiagonal_ql(&mut d, &mut e, &mut z)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvalues = order.iter().map(|&i| d[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.data[r * n + col] = z.data[r * n + src];
        }
    }
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// `exp(-i h dt)` via the spectral decomposition of `h`.
pub fn expm_unitary(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    Ok(hermitian_eig(h)?.exp_unitary(dt))
}

/// Exact derivative of `exp(-i (h + s a) dt)` with respect to `s` at `s = 0`.
pub fn expm_directional_derivative(h: &ComplexMatrix, a: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    check_dim("expm_directional_derivative", h.dim, a.dim)?;
    Ok(hermitian_eig(h)?.exp_derivative(a, dt))
}
