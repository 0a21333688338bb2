//! Dense complex linear algebra for small matrices and state vectors.
//!
//! Storage is row-major `Vec<Complex64>`. QR and SVD are delegated to
//! `nalgebra`; everything the fidelity and interference code touches
//! directly (products, adjoints, traces, inner products) lives here.

use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_same_dim, Error, Result};
use crate::rng::RandomStream;

/// Unitarity tolerance for matrices produced by this crate.
pub const UNITARY_TOL: f64 = 1e-10;
/// Unitarity tolerance for matrices transcribed with four decimal places.
pub const TABLE_UNITARY_TOL: f64 = 5e-3;
/// Allowed deviation of `‖ψ‖²` from one.
pub const NORM_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty {rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m.data[i * d + i] = ONE;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, z: Complex64) {
        self.data[r * self.cols + c] = z;
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self[(r, c)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        ensure_same_dim(self.cols, rhs.rows)?;
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.data[r * m.ncols() + c] = m[(r, c)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let cells: Vec<String> = self
                .row(r)
                .iter()
                .map(|z| format!("{:+.6}{:+.6}i", z.re, z.im))
                .collect();
            writeln!(f, "  {}", cells.join(", "))?;
        }
        write!(f, "]")
    }
}

/// `‖M†M − I‖_max`.
pub fn unitarity_defect(m: &ComplexMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "unitarity needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let gram = m.adjoint().matmul(m)?;
    gram.max_abs_diff(&ComplexMatrix::identity(m.rows))
}

pub fn is_unitary(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    Ok(unitarity_defect(m)? <= tol)
}

/// A square matrix known to be unitary within the tolerance it was checked at.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self> {
        let defect = unitarity_defect(&m)?;
        if defect > tol {
            return Err(Error::Validation(format!(
                "matrix is not unitary: ‖U†U − I‖ = {defect:.3e} > {tol:.1e}"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix that is unitary by construction.
    pub(crate) fn new_unchecked(m: ComplexMatrix) -> Self {
        debug_assert!(unitarity_defect(&m).is_ok_and(|e| e < 1e-8));
        Self(m)
    }

    /// Wraps a matrix derived from an already-validated unitary, keeping its tolerance.
    pub(crate) fn assume_unitary(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn from_rows(rows: &[Vec<Complex64>], tol: f64) -> Result<Self> {
        Self::new(ComplexMatrix::from_rows(rows)?, tol)
    }

    pub fn identity(d: usize) -> Self {
        Self(ComplexMatrix::identity(d))
    }

    pub fn hadamard() -> Self {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self(ComplexMatrix {
            rows: 2,
            cols: 2,
            data: vec![s, s, s, -s],
        })
    }

    pub fn pauli_x() -> Self {
        Self(ComplexMatrix {
            rows: 2,
            cols: 2,
            data: vec![ZERO, ONE, ONE, ZERO],
        })
    }

    pub fn pauli_z() -> Self {
        Self(ComplexMatrix {
            rows: 2,
            cols: 2,
            data: vec![ONE, ZERO, ZERO, -ONE],
        })
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        ensure_same_dim(self.dim(), rhs.dim())?;
        Ok(Self(self.0.matmul(&rhs.0)?))
    }

    /// `Tr(self† · other)`.
    pub fn overlap_trace(&self, other: &Self) -> Result<Complex64> {
        ensure_same_dim(self.dim(), other.dim())?;
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.0[(k, i)].conj() * other.0[(k, i)];
            }
        }
        Ok(acc)
    }
}

impl Index<(usize, usize)> for UnitaryMatrix {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.0[idx]
    }
}

/// Nearest unitary in Frobenius norm (the unitary factor of the polar decomposition).
pub fn nearest_unitary(m: &ComplexMatrix) -> Result<UnitaryMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension("polar projection needs a square matrix".into()));
    }
    let svd = m.to_nalgebra().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Validation("SVD did not converge".into())),
    };
    if svd.singular_values.iter().any(|&s| s <= f64::EPSILON) {
        return Err(Error::Validation("singular matrix has no unique unitary projection".into()));
    }
    Ok(UnitaryMatrix::new_unchecked(ComplexMatrix::from_nalgebra(&(u * v_t))))
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the
/// phases of `diag(R)` folded back into `Q`.
pub fn haar_random_unitary(d: usize, rng: &mut RandomStream) -> Result<UnitaryMatrix> {
    if d == 0 {
        return Err(Error::Dimension("Haar unitary needs d >= 1".into()));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut data = Vec::with_capacity(d * d);
    for _ in 0..d * d {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        data.push(Complex64::new(re * scale, im * scale));
    }
    let qr = DMatrix::from_row_slice(d, d, &data).qr();
    let (mut q, r) = qr.unpack();
    for c in 0..d {
        let rc = r[(c, c)];
        let phase = if rc.norm() > 0.0 { rc / rc.norm() } else { ONE };
        for row in 0..d {
            q[(row, c)] *= phase;
        }
    }
    Ok(UnitaryMatrix::new_unchecked(ComplexMatrix::from_nalgebra(&q)))
}

/// Unit-norm complex amplitude vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Dimension("empty state".into()));
        }
        let n2 = norm_sqr(&amplitudes);
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!("state norm² is {n2}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales to unit norm; fails on the zero vector.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = norm_sqr(&amplitudes).sqrt();
        if amplitudes.is_empty() || !(n > 0.0) || !n.is_finite() {
            return Err(Error::Validation("cannot normalize a zero or non-finite vector".into()));
        }
        amplitudes.iter_mut().for_each(|a| *a /= n);
        Ok(Self { amplitudes })
    }

    pub(crate) fn new_unchecked(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    /// Computational basis state `|index⟩` in dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::Dimension(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { amplitudes: amps })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum()
}

/// `⟨ψ|φ⟩`, conjugate-linear in `psi`.
pub fn inner_product(psi: &PureState, phi: &PureState) -> Result<Complex64> {
    ensure_same_dim(psi.dim(), phi.dim())?;
    Ok(psi
        .amplitudes
        .iter()
        .zip(&phi.amplitudes)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn unitarity_checks() {
        assert!(is_unitary(&ComplexMatrix::identity(2), 1e-12).unwrap());
        assert!(is_unitary(UnitaryMatrix::hadamard().matrix(), 1e-12).unwrap());
        let diag = ComplexMatrix::from_rows(&[vec![ONE, ZERO], vec![ZERO, c(2.0, 0.0)]]).unwrap();
        assert!(!is_unitary(&diag, 1e-6).unwrap());
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(is_unitary(&rect, 1e-6), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ComplexMatrix::new(0, 1, vec![]).is_err());
        assert!(ComplexMatrix::new(2, 2, vec![ONE; 3]).is_err());
        assert!(matches!(
            ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]),
            Err(Error::Validation(_))
        ));
        assert!(ComplexMatrix::from_rows(&[vec![ONE], vec![ONE, ONE]]).is_err());
    }

    #[test]
    fn haar_d1_is_a_phase() {
        let u = haar_random_unitary(1, &mut RandomStream::new(5)).unwrap();
        assert_abs_diff_eq!(u[(0, 0)].norm(), 1.0, epsilon = 1e-12);
        assert!(haar_random_unitary(0, &mut RandomStream::new(5)).is_err());
    }

    #[test]
    fn haar_is_unitary_and_reproducible() {
        for seed in 0..20 {
            let u = haar_random_unitary(4, &mut RandomStream::new(seed)).unwrap();
            assert!(is_unitary(u.matrix(), 1e-10).unwrap());
            let again = haar_random_unitary(4, &mut RandomStream::new(seed)).unwrap();
            assert_eq!(u.matrix().as_slice(), again.matrix().as_slice());
        }
    }

    // E|Tr U|² = 1 for Haar U in any dimension. The average here is a plain
    // sample mean, independent of how the sampler is built.
    #[test]
    fn haar_trace_second_moment() {
        let mut rng = RandomStream::new(2024);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| haar_random_unitary(2, &mut rng).unwrap().matrix().trace().norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean |Tr U|^2 = {mean}");
    }

    // Without the R-phase fix, diag phases of Q are biased; a Haar U has
    // E[U_00] = 0 and E|U_00|² = 1/d.
    #[test]
    fn haar_first_moments() {
        let mut rng = RandomStream::new(99);
        let n = 20_000;
        let d = 3;
        let (mut sum, mut sum_sq) = (ZERO, 0.0);
        for _ in 0..n {
            let u = haar_random_unitary(d, &mut rng).unwrap();
            sum += u[(0, 0)];
            sum_sq += u[(0, 0)].norm_sqr();
        }
        assert!((sum / n as f64).norm() < 0.02);
        assert!((sum_sq / n as f64 - 1.0 / d as f64).abs() < 0.01);
    }

    #[test]
    fn inner_product_examples() {
        let e0 = PureState::basis(2, 0).unwrap();
        let e1 = PureState::basis(2, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PureState::new(vec![c(s, 0.0), c(s, 0.0)]).unwrap();
        assert_abs_diff_eq!(inner_product(&plus, &plus).unwrap().re, 1.0, epsilon = 1e-12);
        assert_eq!(inner_product(&e0, &e1).unwrap(), ZERO);
        let ip = inner_product(&e0, &plus).unwrap();
        assert_abs_diff_eq!(ip.re, s, epsilon = 1e-12);
        assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-12);
        let three = PureState::basis(3, 0).unwrap();
        assert!(matches!(
            inner_product(&e0, &three),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn pure_state_validation() {
        assert!(PureState::new(vec![ONE, ONE]).is_err());
        let s = PureState::normalized(vec![ONE, ONE]).unwrap();
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-15);
        assert!(PureState::normalized(vec![ZERO, ZERO]).is_err());
    }

    #[test]
    fn polar_projection_recovers_unitary() {
        let u = haar_random_unitary(3, &mut RandomStream::new(1)).unwrap();
        let noisy = ComplexMatrix::new(
            3,
            3,
            u.matrix().as_slice().iter().enumerate().map(|(i, z)| z + c(1e-3 * (i as f64).sin(), 0.0)).collect(),
        )
        .unwrap();
        assert!(!is_unitary(&noisy, 1e-6).unwrap());
        let p = nearest_unitary(&noisy).unwrap();
        assert!(is_unitary(p.matrix(), 1e-10).unwrap());
        assert!(p.matrix().max_abs_diff(u.matrix()).unwrap() < 1e-2);
        // A unitary is its own projection.
        let same = nearest_unitary(u.matrix()).unwrap();
        assert!(same.matrix().max_abs_diff(u.matrix()).unwrap() < 1e-12);
    }

    fn unit_state(dim: usize) -> impl Strategy<Value = PureState> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
            .prop_filter_map("zero vector", |v| {
                PureState::normalized(v.into_iter().map(|(a, b)| c(a, b)).collect()).ok()
            })
    }

    proptest! {
        #[test]
        fn inner_product_is_hermitian((a, b) in (1usize..6).prop_flat_map(|d| (unit_state(d), unit_state(d)))) {
            let ab = inner_product(&a, &b).unwrap();
            let ba = inner_product(&b, &a).unwrap();
            prop_assert!((ab - ba.conj()).norm() <= 1e-14);
            prop_assert!(ab.norm() <= 1.0 + 1e-10);
        }

        #[test]
        fn haar_output_is_unitary(d in 1usize..9, seed in any::<u64>()) {
            let u = haar_random_unitary(d, &mut RandomStream::new(seed)).unwrap();
            prop_assert!(is_unitary(u.matrix(), 1e-10).unwrap());
        }
    }
}
