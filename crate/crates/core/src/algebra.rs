//! Dense complex matrices for few-level systems, plus the density-matrix
//! checks and the Lindblad dissipator used by the integrator.
//!
//! Matrices are stored inline (no heap) with a fixed capacity of
//! [`MAX_DIM`] × [`MAX_DIM`]; only the leading `dim × dim` block is used.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest supported Hilbert-space dimension.
pub const MAX_DIM: usize = 8;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: [C64; MAX_DIM * MAX_DIM],
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "matrix dimension {dim} out of range");
        Self { dim, data: [ZERO; MAX_DIM * MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `|i⟩⟨j|` in a `dim`-level basis.
    pub fn outer(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(i, j)] = ONE;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] *= s;
            }
        }
        out
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `self += s * other`, the axpy kernel of the Runge–Kutta stages.
    #[inline]
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        for i in 0..n {
            let row = i * MAX_DIM;
            for j in 0..n {
                self.data[row + j] += other.data[row + j] * s;
            }
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(self.mul_unchecked(other))
    }

    #[inline]
    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * MAX_DIM + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * MAX_DIM + j] += a * other.data[k * MAX_DIM + j];
                }
            }
        }
        out
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        (*self - *other).max_abs()
    }

    /// `max |A - A†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Replaces `A` by `(A + A†)/2`.
    pub fn hermitize(&mut self) {
        for i in 0..self.dim {
            self[(i, i)].im = 0.0;
            for j in (i + 1)..self.dim {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn entries(&self) -> impl Iterator<Item = C64> + '_ {
        (0..self.dim).flat_map(move |i| (0..self.dim).map(move |j| self[(i, j)]))
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> C64 {
        let n = self.dim;
        let mut a = *self;
        let mut det = ONE;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| a[(r, col)].norm().total_cmp(&a[(s, col)].norm()))
                .unwrap();
            if a[(pivot, col)] == ZERO {
                return ZERO;
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = a[(col, j)];
                    a[(col, j)] = a[(pivot, j)];
                    a[(pivot, j)] = tmp;
                }
                det = -det;
            }
            let p = a[(col, col)];
            det *= p;
            for r in (col + 1)..n {
                let f = a[(r, col)] / p;
                for j in col..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= f * v;
                }
            }
        }
        det
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.data[i * MAX_DIM + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.data[i * MAX_DIM + j]
    }
}

impl Add for ComplexMatrix {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for ComplexMatrix {
    fn add_assign(&mut self, rhs: Self) {
        assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self[(i, j)] += rhs[(i, j)];
            }
        }
    }
}

impl Sub for ComplexMatrix {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for ComplexMatrix {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale_re(-1.0)
    }
}

impl Mul for ComplexMatrix {
    type Output = Self;
    /// Panics on dimension mismatch; use [`ComplexMatrix::matmul`] for a checked product.
    fn mul(self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.mul_unchecked(&rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.4e}{:+.4e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

fn check_dims(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { left: a.dim, right: b.dim });
    }
    Ok(())
}

/// `[a, b] = ab − ba`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_dims(a, b)?;
    Ok(a.mul_unchecked(b) - b.mul_unchecked(a))
}

/// `L[A]ρ = 2AρA† − A†Aρ − ρA†A`.
pub fn lindblad_apply(a: &ComplexMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_dims(a, rho)?;
    let ad = a.adjoint();
    let ada = ad.mul_unchecked(a);
    Ok(lindblad_with_cache(a, &ad, &ada, rho))
}

#[inline]
pub(crate) fn lindblad_with_cache(
    a: &ComplexMatrix,
    ad: &ComplexMatrix,
    ada: &ComplexMatrix,
    rho: &ComplexMatrix,
) -> ComplexMatrix {
    let jump = a.mul_unchecked(rho).mul_unchecked(ad);
    let mut out = jump.scale_re(2.0);
    out.add_scaled(-1.0, &ada.mul_unchecked(rho));
    out.add_scaled(-1.0, &rho.mul_unchecked(ada));
    out
}

/// Default tolerance of [`DensityMatrix`] validity checks.
pub const DENSITY_TOLERANCE: f64 = 1e-9;

/// A state of an `n`-level system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    tolerance: f64,
}

impl DensityMatrix {
    /// Wraps `matrix` after checking trace, Hermiticity and positivity.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, DENSITY_TOLERANCE)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tolerance: f64) -> Result<Self> {
        if matrix.dim() < 2 {
            return Err(Error::InvalidState("density matrix needs at least two levels".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let report = diagnostics(&matrix);
        if report.trace_defect > tolerance
            || report.hermiticity_defect > tolerance
            || report.min_eigenvalue < -tolerance
        {
            return Err(Error::InvalidState(format!(
                "trace defect {:.3e}, hermiticity defect {:.3e}, min eigenvalue {:.3e}",
                report.trace_defect, report.hermiticity_defect, report.min_eigenvalue
            )));
        }
        Ok(Self { matrix, tolerance })
    }

    /// The pure state `|level⟩⟨level|`.
    pub fn basis_state(dim: usize, level: usize) -> Self {
        assert!(level < dim);
        Self { matrix: ComplexMatrix::outer(dim, level, level), tolerance: DENSITY_TOLERANCE }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale_re(1.0 / dim as f64),
            tolerance: DENSITY_TOLERANCE,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityReport {
    pub trace_defect: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

pub fn validate_density(rho: &DensityMatrix) -> DensityReport {
    diagnostics(rho.matrix())
}

/// Diagnostics for an arbitrary matrix; eigenvalues are taken of its
/// Hermitian part.
pub fn diagnostics(m: &ComplexMatrix) -> DensityReport {
    let mut h = *m;
    h.hermitize();
    let eig = hermitian_eigenvalues(&h);
    DensityReport {
        trace_defect: (m.trace() - ONE).norm(),
        hermiticity_defect: m.hermiticity_defect(),
        min_eigenvalue: eig.first().copied().unwrap_or(0.0),
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// The `n×n` Hermitian `H = A + iB` is embedded in the real symmetric
/// `[[A, −B], [B, A]]`, whose spectrum is that of `H` with every eigenvalue
/// doubled; cyclic Jacobi rotations diagonalize the embedding.
pub fn hermitian_eigenvalues(h: &ComplexMatrix) -> Vec<f64> {
    let n = h.dim();
    let m = 2 * n;
    let mut a = [[0.0f64; 2 * MAX_DIM]; 2 * MAX_DIM];
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            a[i][j] = z.re;
            a[i + n][j + n] = z.re;
            a[i][j + n] = -z.im;
            a[i + n][j] = z.im;
        }
    }
    let scale = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| a[i][j].abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..m)
                .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum::<f64>()
                .sqrt();
            if off <= JACOBI_TOL * scale {
                break;
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    if a[p][q].abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..m {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..m {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
    }
    let mut diag: Vec<f64> = (0..m).map(|i| a[i][i]).collect();
    diag.sort_by(f64::total_cmp);
    diag.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect()
}

/// Pauli matrices, handy for tests and two-level setups.
pub mod pauli {
    use super::*;

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]])
    }

    pub fn y() -> ComplexMatrix {
        let i = C64::new(0.0, 1.0);
        ComplexMatrix::from_rows(&[&[ZERO, -i], &[i, ZERO]])
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[&[ONE, ZERO], &[ZERO, -ONE]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn arb_matrix(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |v| {
            let mut m = ComplexMatrix::zeros(dim);
            for (k, (re, im)) in v.into_iter().enumerate() {
                m[(k / dim, k % dim)] = c(re, im);
            }
            m
        })
    }

    fn arb_hermitian(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        arb_matrix(dim).prop_map(|m| {
            let mut h = m + m.adjoint();
            h.hermitize();
            h
        })
    }

    #[test]
    fn identity_commutes() {
        let a = ComplexMatrix::from_rows(&[&[c(1.0, 2.0), c(0.5, 0.0)], &[c(-3.0, 1.0), c(0.0, 0.1)]]);
        let z = commutator(&ComplexMatrix::identity(2), &a).unwrap();
        assert!(z.max_abs() < 1e-15);
        assert!(commutator(&a, &a).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn pauli_commutator() {
        let xy = commutator(&pauli::x(), &pauli::y()).unwrap();
        let expected = pauli::z().scale(c(0.0, 2.0));
        assert!(xy.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = commutator(&ComplexMatrix::identity(2), &ComplexMatrix::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { left: 2, right: 3 }));
        assert!(lindblad_apply(&ComplexMatrix::identity(3), &ComplexMatrix::identity(4)).is_err());
    }

    #[test]
    fn projector_dephases_coherence() {
        // A = |h2⟩⟨h2| with ρ_{h1,h2} = c gives (L[A]ρ)_{h1,h2} = −c.
        let a = ComplexMatrix::outer(2, 1, 1);
        let coh = c(0.3, -0.2);
        let rho = ComplexMatrix::from_rows(&[&[c(0.6, 0.0), coh], &[coh.conj(), c(0.4, 0.0)]]);
        let out = lindblad_apply(&a, &rho).unwrap();
        assert!((out[(0, 1)] + coh).norm() < 1e-15);
        assert!(out[(0, 0)].norm() < 1e-15 && out[(1, 1)].norm() < 1e-15);
    }

    #[test]
    fn zero_operator_gives_zero() {
        let rho = DensityMatrix::maximally_mixed(3);
        let out = lindblad_apply(&ComplexMatrix::zeros(3), rho.matrix()).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn pure_and_mixed_diagnostics() {
        let r = validate_density(&DensityMatrix::basis_state(4, 0));
        assert!(r.trace_defect < 1e-15 && r.hermiticity_defect == 0.0);
        assert!(r.min_eigenvalue.abs() < 1e-14);

        for n in 2..=MAX_DIM {
            let r = validate_density(&DensityMatrix::maximally_mixed(n));
            assert!(r.trace_defect < 1e-14);
            assert!((r.min_eigenvalue - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn diagnostics_are_unitarily_invariant() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let th: f64 = 0.7;
        let u = ComplexMatrix::from_rows(&[
            &[c(th.cos(), 0.0), c(0.0, -th.sin())],
            &[c(0.0, -th.sin()), c(th.cos(), 0.0)],
        ]);
        let rotated = u * *mixed.matrix() * u.adjoint();
        let a = validate_density(&mixed);
        let b = diagnostics(&rotated);
        assert!((a.min_eigenvalue - b.min_eigenvalue).abs() < 1e-14);
        assert!(b.trace_defect < 1e-14 && b.hermiticity_defect < 1e-15);
    }

    #[test]
    fn invalid_states_are_rejected() {
        let mut m = ComplexMatrix::identity(2);
        assert!(DensityMatrix::new(m).is_err());
        m[(1, 1)] = ZERO;
        m[(0, 1)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err(), "non-Hermitian");
        let neg = ComplexMatrix::from_diagonal(&[c(1.5, 0.0), c(-0.5, 0.0)]);
        assert!(DensityMatrix::new(neg).is_err(), "negative eigenvalue");
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        // σ_y has eigenvalues ±1; the embedding must not confuse the imaginary part.
        let e = hermitian_eigenvalues(&pauli::y());
        assert!((e[0] + 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
        let h = ComplexMatrix::from_rows(&[
            &[c(2.0, 0.0), c(0.0, 1.0), ZERO],
            &[c(0.0, -1.0), c(2.0, 0.0), ZERO],
            &[ZERO, ZERO, c(5.0, 0.0)],
        ]);
        let e = hermitian_eigenvalues(&h);
        for (got, want) in e.iter().zip([1.0, 3.0, 5.0]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn unitary_determinant() {
        let u = ComplexMatrix::from_diagonal(&[C64::from_polar(1.0, 0.3), C64::from_polar(1.0, -1.1)]);
        assert!((u.determinant().norm() - 1.0).abs() < 1e-15);
        let m = ComplexMatrix::from_rows(&[&[c(1.0, 0.0), c(2.0, 0.0)], &[c(3.0, 0.0), c(4.0, 0.0)]]);
        assert!((m.determinant() - c(-2.0, 0.0)).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn lindblad_is_traceless(a in arb_matrix(4), rho in arb_hermitian(4)) {
            let out = lindblad_apply(&a, &rho).unwrap();
            let scale = 1.0 + a.max_abs().powi(2) * rho.max_abs();
            prop_assert!(out.trace().norm() <= 1e-12 * scale);
        }

        #[test]
        fn lindblad_preserves_hermiticity(a in arb_matrix(3), rho in arb_hermitian(3)) {
            let out = lindblad_apply(&a, &rho).unwrap();
            prop_assert!(out.hermiticity_defect() <= 1e-12);
        }

        #[test]
        fn commutator_is_antisymmetric(a in arb_matrix(4), b in arb_matrix(4)) {
            let ab = commutator(&a, &b).unwrap();
            let ba = commutator(&b, &a).unwrap();
            prop_assert!((ab + ba).max_abs() <= 1e-14);
        }

        #[test]
        fn eigenvalues_sum_to_trace(h in arb_hermitian(5)) {
            let e = hermitian_eigenvalues(&h);
            let sum: f64 = e.iter().sum();
            prop_assert!((sum - h.trace().re).abs() <= 1e-10);
        }
    }
}
