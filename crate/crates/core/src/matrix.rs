//! Small dense complex matrices.
//!
//! Storage is row-major `Vec<Complex64>`. The hot loops of the integrators use
//! the `*_into` kernels, which write into preallocated buffers.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const MAX_DIM: usize = 256;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Dyson index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SymmetryClass {
    Orthogonal,
    Unitary,
}

impl SymmetryClass {
    pub fn from_beta(beta: u8) -> Result<Self> {
        match beta {
            1 => Ok(Self::Orthogonal),
            2 => Ok(Self::Unitary),
            b => Err(Error::InvalidParameter(format!("beta must be 1 or 2, got {b}"))),
        }
    }

    pub fn beta(self) -> u8 {
        match self {
            Self::Orthogonal => 1,
            Self::Unitary => 2,
        }
    }

    pub fn beta_f64(self) -> f64 {
        self.beta() as f64
    }
}

impl TryFrom<u8> for SymmetryClass {
    type Error = Error;
    fn try_from(b: u8) -> Result<Self> {
        Self::from_beta(b)
    }
}

impl From<SymmetryClass> for u8 {
    fn from(s: SymmetryClass) -> u8 {
        s.beta()
    }
}

impl fmt::Display for SymmetryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.beta())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "matrix dimension {n} out of range");
        Self { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, ONE)
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = c;
        }
        m
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    /// Row-major entries.
    pub fn from_row_slice(n: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        let mut m = Self::zeros(n);
        m.data.copy_from_slice(entries);
        Ok(m)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        Self::from_fn(n, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| self.data[j * n + i].conj())
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| self.data[j * n + i])
    }

    pub fn conj(&self) -> Self {
        Self { n: self.n, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|z| z * c).collect() }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|z| z * c).collect() }
    }

    pub fn scale_mut(&mut self, c: f64) {
        for z in &mut self.data {
            *z *= c;
        }
    }

    pub fn fill(&mut self, c: C64) {
        self.data.fill(c);
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.data.copy_from_slice(&other.data);
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: C64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn add_diag(&mut self, c: C64) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i] += c;
        }
    }

    pub fn hermitian_part(&self) -> HermitianMatrix {
        HermitianMatrix::from_matrix(self.clone())
    }

    /// Residual of the Hermitian condition, `‖M − M†‖_F`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (self.data[i * n + j] - self.data[j * n + i].conj()).norm_sqr();
            }
        }
        s.sqrt()
    }

    /// `‖M†M − 1‖_F`.
    pub fn unitarity_residual(&self) -> f64 {
        let mut g = Self::zeros(self.n);
        adjoint_mul_into(self, self, &mut g);
        g.add_diag(-ONE);
        g.frobenius_norm()
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_finite() {
            return Err(Error::InvalidParameter("non-finite matrix".into()));
        }
        let lu = self.to_dmatrix().lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Singular("LU factorization has a zero pivot".into()))?;
        let out = Self::from_dmatrix(&inv);
        if !out.is_finite() {
            return Err(Error::Singular("inverse is not finite".into()));
        }
        Ok(out)
    }

    /// Reciprocal condition estimate `1 / (‖M‖₁ ‖M⁻¹‖₁)`.
    pub fn rcond(&self) -> f64 {
        match self.inverse() {
            Ok(inv) => 1.0 / (self.norm_one() * inv.norm_one()),
            Err(_) => 0.0,
        }
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.to_dmatrix().svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.n, rhs.n);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.n, rhs.n);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.n);
        mul_into(self, rhs, &mut out);
        out
    }
}

/// `out = a · b`
pub fn mul_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) {
    let n = a.n;
    assert!(b.n == n && out.n == n, "dimension mismatch");
    let (a, b) = (&a.data, &b.data);
    for i in 0..n {
        let orow = &mut out.data[i * n..(i + 1) * n];
        orow.fill(ZERO);
        for k in 0..n {
            let aik = a[i * n + k];
            let brow = &b[k * n..(k + 1) * n];
            for (o, bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out = a† · b`
pub fn adjoint_mul_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) {
    let n = a.n;
    assert!(b.n == n && out.n == n, "dimension mismatch");
    out.data.fill(ZERO);
    for k in 0..n {
        let brow = &b.data[k * n..(k + 1) * n];
        for i in 0..n {
            let aki = a.data[k * n + i].conj();
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (o, bkj) in orow.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
}

/// `out = a · b†`
pub fn mul_adjoint_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) {
    let n = a.n;
    assert!(b.n == n && out.n == n, "dimension mismatch");
    for i in 0..n {
        let arow = &a.data[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b.data[j * n..(j + 1) * n];
            let mut s = ZERO;
            for (x, y) in arow.iter().zip(brow) {
                s += x * y.conj();
            }
            out.data[i * n + j] = s;
        }
    }
}

/// `m ← (m + m†)/2`, exactly Hermitian afterwards.
pub fn hermitize_in_place(m: &mut ComplexMatrix) {
    let n = m.n;
    for i in 0..n {
        let d = &mut m.data[i * n + i];
        d.im = 0.0;
        for j in i + 1..n {
            let v = 0.5 * (m.data[i * n + j] + m.data[j * n + i].conj());
            m.data[i * n + j] = v;
            m.data[j * n + i] = v.conj();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ComplexMatrix", from = "ComplexMatrix")]
pub struct HermitianMatrix(ComplexMatrix);

impl From<ComplexMatrix> for HermitianMatrix {
    fn from(m: ComplexMatrix) -> Self {
        Self::from_matrix(m)
    }
}

impl From<HermitianMatrix> for ComplexMatrix {
    fn from(h: HermitianMatrix) -> Self {
        h.0
    }
}

impl HermitianMatrix {
    /// Ingests `m` as `(m + m†)/2`.
    pub fn from_matrix(mut m: ComplexMatrix) -> Self {
        hermitize_in_place(&mut m);
        Self(m)
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        Self(ComplexMatrix::from_diag(&d.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>()))
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `tr(H²) = ‖H‖_F²`.
    pub fn trace_sq(&self) -> f64 {
        self.0.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.scale_real(c))
    }

    pub fn eigvals(&self) -> Result<Vec<f64>> {
        eigvals_hermitian(self)
    }

    pub fn inverse(&self) -> Result<Self> {
        Ok(Self::from_matrix(self.0.inverse()?))
    }
}

impl Index<(usize, usize)> for HermitianMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    /// Accepts `m` if `‖m†m − 1‖_F ≤ 1e-10`.
    pub fn new_checked(m: ComplexMatrix) -> Result<Self> {
        let r = m.unitarity_residual();
        if r <= Self::TOLERANCE {
            Ok(Self(m))
        } else {
            Err(Error::InvalidParameter(format!("matrix is not unitary (residual {r:.3e})")))
        }
    }

    /// Wraps without checking; callers guarantee unitarity to integration tolerance.
    pub(crate) fn new_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.0.unitarity_residual()
    }
}

/// Ascending eigenvalues.
pub fn eigvals_hermitian(h: &HermitianMatrix) -> Result<Vec<f64>> {
    if !h.0.is_finite() {
        return Err(Error::InvalidParameter("non-finite Hermitian matrix".into()));
    }
    let n = h.dim();
    if n == 1 {
        return Ok(vec![h.0.data[0].re]);
    }
    let eig = h.0.to_dmatrix().symmetric_eigenvalues();
    let mut v: Vec<f64> = eig.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Ascending eigenvalues and the matching orthonormal eigenvectors as columns.
pub fn eigh(h: &HermitianMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !h.0.is_finite() {
        return Err(Error::InvalidParameter("non-finite Hermitian matrix".into()));
    }
    let n = h.dim();
    let eig = h.0.to_dmatrix().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = ComplexMatrix::from_fn(n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((vals, vecs))
}

pub fn mat_exp(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_finite() {
        return Err(Error::InvalidParameter("non-finite input to mat_exp".into()));
    }
    if m.data.iter().all(|z| *z == ZERO) {
        return Ok(ComplexMatrix::identity(m.n));
    }
    let norm = m.norm_one();
    if norm > 1e5 {
        return Err(Error::Overflow { norm });
    }
    let e = ComplexMatrix::from_dmatrix(&m.to_dmatrix().exp());
    if !e.is_finite() {
        return Err(Error::Overflow { norm });
    }
    Ok(e)
}

/// Polar factor `U V†` of `M = U Σ V†`.
pub fn unitarize(m: &ComplexMatrix) -> Result<UnitaryMatrix> {
    if !m.is_finite() {
        return Err(Error::InvalidParameter("non-finite input to unitarize".into()));
    }
    let svd = m.to_dmatrix().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-14 * smax) {
        return Err(Error::Singular(format!(
            "polar factor undefined (singular values {smin:.3e} .. {smax:.3e})"
        )));
    }
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    Ok(UnitaryMatrix(ComplexMatrix::from_dmatrix(&(u * vt))))
}
