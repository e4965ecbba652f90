//! Dense complex linear algebra for the small Hilbert spaces used here
//! (dimension at most 8), bipartite reduced states and von Neumann entropy.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance on `M - M^dagger` for a matrix to count as hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default tolerance on `|<psi|psi> - 1|`.
pub const NORM_TOL: f64 = 1e-9;
/// Eigenvalues in `[-NEGATIVE_EIGEN_TOL, 0]` are clamped to zero before the log.
pub const NEGATIVE_EIGEN_TOL: f64 = 1e-10;
/// Jacobi iteration stops once the off-diagonal Frobenius norm drops below this.
pub const JACOBI_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let diag: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&diag)
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: n_rows,
            cols: n_cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// `|i><j|` in dimension `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = ONE;
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Largest elementwise `|M_ij - conj(M_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Largest elementwise `|M_ij + conj(M_ji)|`.
    pub fn anti_hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] + self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix applied to length-{} vector",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    fn check_same_shape(&self, rhs: &Self) -> Result<()> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(self.zip_with(rhs, |a, b| a + b))
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(self.zip_with(rhs, |a, b| a - b))
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// Eigen-decomposition of a hermitian matrix by cyclic complex Jacobi
    /// rotations. Returns eigenvalues in ascending order and the unitary whose
    /// columns are the matching eigenvectors.
    pub fn eigh(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "eigh of {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let scale = self.max_abs().max(1.0);
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { deviation: defect });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut v = Self::identity(n);
        for _ in 0..JACOBI_MAX_SWEEPS {
            if a.off_diagonal_norm() < JACOBI_TOL * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = Self::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok((values, vectors))
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    acc += self[(i, j)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    }
}

/// Zeroes `a[p][q]` with the unitary `U = D R`, where `D` removes the phase of
/// the pivot and `R` is the real symmetric Jacobi rotation. Updates `a <- U^dagger a U`
/// and `v <- v U`.
fn jacobi_rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let magnitude = apq.norm();
    if magnitude == 0.0 {
        return;
    }
    let phase = apq / magnitude;
    let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * magnitude);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // U_pp = c, U_pq = s, U_qp = -s e^{-i phi}, U_qq = c e^{-i phi}
    let u_pp = C64::new(c, 0.0);
    let u_pq = C64::new(s, 0.0);
    let u_qp = -phase.conj() * s;
    let u_qq = phase.conj() * c;
    let n = a.rows;
    // columns: a <- a U
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
    // rows: a <- U^dagger a
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product dimensions")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_add(rhs).expect("matrix sum dimensions")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.try_sub(rhs).expect("matrix difference dimensions")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product `a (x) b`.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    ComplexMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// `[a, b] = ab - ba`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || !b.is_square() || a.rows != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "commutator of {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(&a.matmul(b)? - &b.matmul(a)?)
}

/// `exp(-i h t)` for hermitian `h`.
pub fn unitary_from_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let (values, vectors) = h.eigh()?;
    let n = values.len();
    let phases: Vec<C64> = values
        .iter()
        .map(|&e| C64::from_polar(1.0, -e * t))
        .collect();
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| vectors[(i, k)] * phases[k] * vectors[(j, k)].conj())
            .sum()
    }))
}

/// Pure state amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    /// `|index>` in a `dim`-dimensional space.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidIndex { index, dim });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        if self.is_normalized(tol) {
            Ok(())
        } else {
            Err(Error::Unnormalized(self.norm_sqr()))
        }
    }

    pub fn kron(&self, other: &StateVector) -> StateVector {
        let mut amplitudes = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amplitudes.push(a * b);
            }
        }
        StateVector { amplitudes }
    }

    /// `|psi><psi|`, without normalization checks.
    pub fn outer(&self) -> ComplexMatrix {
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |i, j| self.amplitudes[i] * self.amplitudes[j].conj())
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity (1e-12) and unit trace (1e-9). Positivity is
    /// checked where the spectrum is computed.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        let defect = matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: defect });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::Unnormalized(tr.re));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(state: &StateVector) -> Result<Self> {
        state.check_normalized(NORM_TOL)?;
        Self::new(state.outer())
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Eigenvalues, with values in `[-1e-10, 0)` clamped to zero.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let (values, _) = self.matrix.eigh()?;
        values
            .into_iter()
            .map(|l| {
                if l < -NEGATIVE_EIGEN_TOL {
                    Err(Error::NegativeEigenvalue(l))
                } else {
                    Ok(l.max(0.0))
                }
            })
            .collect()
    }
}

/// Reduced state of subsystem A from a state on `A (x) B`.
pub fn partial_trace_first(
    rho: &DensityMatrix,
    dim_a: usize,
    dim_b: usize,
) -> Result<DensityMatrix> {
    if dim_a == 0 || dim_b == 0 || rho.dim() != dim_a * dim_b {
        return Err(Error::DimensionMismatch(format!(
            "density matrix of dimension {} is not {} x {}",
            rho.dim(),
            dim_a,
            dim_b
        )));
    }
    let m = &rho.matrix;
    let reduced = ComplexMatrix::from_fn(dim_a, dim_a, |i, j| {
        (0..dim_b).map(|k| m[(i * dim_b + k, j * dim_b + k)]).sum()
    });
    // Sums of hermitian-conjugate pairs stay conjugate only up to rounding.
    let reduced = ComplexMatrix::from_fn(dim_a, dim_a, |i, j| {
        0.5 * (reduced[(i, j)] + reduced[(j, i)].conj())
    });
    DensityMatrix::new(reduced)
}

/// `-Tr(rho log2 rho)` in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let defect = rho.matrix.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let s: f64 = rho.spectrum()?.into_iter().map(entropy_term).sum();
    // eigenvalues a rounding error above 1 would otherwise give -1e-16
    Ok(s.max(0.0))
}

/// Shannon entropy `-p log2 p - (1-p) log2 (1-p)` of a two-outcome distribution.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_term(p) + entropy_term(1.0 - p)
}

fn entropy_term(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    // basis ordering {|e>, |g>} for the single-atom Pauli checks
    fn sigma_plus() -> ComplexMatrix {
        ComplexMatrix::unit(2, 0, 1)
    }

    fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_real_diag(&[1.0, -1.0])
    }

    #[test]
    fn identity_kron_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(tensor_product(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn raising_operator_on_product_state() {
        // basis {|g>, |e>}: sigma+ = |e><g|
        let sp = ComplexMatrix::unit(2, 1, 0);
        let op = tensor_product(&sp, &ComplexMatrix::identity(2));
        let gg = StateVector::basis(4, 0).unwrap();
        let out = op.matvec(gg.amplitudes()).unwrap();
        let eg = StateVector::basis(4, 2).unwrap();
        assert_eq!(out, eg.amplitudes());
    }

    #[test]
    fn mixed_product_of_sigma_z() {
        let i2 = ComplexMatrix::identity(2);
        let lhs = &tensor_product(&sigma_z(), &i2) * &tensor_product(&i2, &sigma_z());
        assert_eq!(lhs, tensor_product(&sigma_z(), &sigma_z()));
    }

    #[test]
    fn commutator_of_self_vanishes() {
        let m =
            ComplexMatrix::from_rows(&[&[c(1.0, 0.0), c(2.0, -1.0)], &[c(0.5, 3.0), c(-1.0, 0.0)]]);
        assert_eq!(commutator(&m, &m).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn ladder_commutator_is_inversion() {
        let sp = sigma_plus();
        let sm = sp.adjoint();
        assert_eq!(commutator(&sp, &sm).unwrap(), sigma_z());
    }

    #[test]
    fn commutator_rejects_mismatched_dims() {
        let err = commutator(&ComplexMatrix::identity(2), &ComplexMatrix::identity(3));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn single_excitation_generator_commutator() {
        // Basis {|e,0>, |g,1>}: sigma+ a = |e,0><g,1|.
        let g = c(0.7, 0.2);
        let x = c(-0.3, 0.05);
        let up = ComplexMatrix::unit(2, 0, 1);
        let down = up.adjoint();
        let h1 = &up.scale(g) + &down.scale(g.conj());
        let s = &up.scale(x) - &down.scale(x.conj());
        let comm = commutator(&h1, &s).unwrap();
        // Hand expansion: [H1, S] = -2 Re(g x*) (|e,0><e,0| - |g,1><g,1|).
        let w = -2.0 * (g * x.conj()).re;
        let expected = ComplexMatrix::from_real_diag(&[w, -w]);
        assert!((&comm - &expected).max_abs() < 1e-15, "{comm:?}");
    }

    #[test]
    fn partial_trace_of_product_state() {
        let g = StateVector::basis(2, 0).unwrap();
        let e = StateVector::basis(2, 1).unwrap();
        let rho = DensityMatrix::from_pure(&g.kron(&e)).unwrap();
        let reduced = partial_trace_first(&rho, 2, 2).unwrap();
        assert_eq!(reduced.matrix(), &ComplexMatrix::unit(2, 0, 0));
    }

    #[test]
    fn partial_trace_of_swap_superposition() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // basis {gg, ge, eg, ee}
        let psi = StateVector::new(vec![ZERO, c(r, 0.0), c(0.0, -r), ZERO]);
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let reduced = partial_trace_first(&rho, 2, 2).unwrap();
        let expected = ComplexMatrix::from_real_diag(&[0.5, 0.5]);
        assert!((reduced.matrix() - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn partial_trace_of_rotated_state() {
        let theta: f64 = 3.760;
        let psi = StateVector::new(vec![ZERO, c(theta.cos(), 0.0), c(0.0, -theta.sin()), ZERO]);
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let reduced = partial_trace_first(&rho, 2, 2).unwrap();
        // Atom 1 is |g> in the |ge> branch and |e> in the |eg> branch.
        let pops = reduced.populations();
        // cos^2(3.760) = 0.66390, sin^2(3.760) = 0.33610
        assert!((pops[0] - 0.6637).abs() < 5e-4, "{pops:?}");
        assert!((pops[1] - 0.3363).abs() < 5e-4, "{pops:?}");
        assert!((pops[0] - 0.663904).abs() < 1e-6, "{pops:?}");
        assert!(reduced.matrix()[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diag(&[0.5, 0.5, 0.0])).unwrap();
        assert!(matches!(
            partial_trace_first(&rho, 2, 2),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn entropy_examples() {
        let pure = DensityMatrix::new(ComplexMatrix::unit(2, 1, 1)).unwrap();
        assert_eq!(von_neumann_entropy(&pure).unwrap(), 0.0);
        let mixed = DensityMatrix::new(ComplexMatrix::from_real_diag(&[0.5, 0.5])).unwrap();
        assert!((von_neumann_entropy(&mixed).unwrap() - 1.0).abs() < 1e-15);
        // -0.6637 log2 0.6637 - 0.3363 log2 0.3363, evaluated separately.
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diag(&[0.6637, 0.3363])).unwrap();
        assert!((von_neumann_entropy(&rho).unwrap() - 0.92125).abs() < 1e-3);
    }

    #[test]
    fn entropy_rejects_non_hermitian() {
        let mut m = ComplexMatrix::from_real_diag(&[0.5, 0.5]);
        m[(0, 1)] = c(0.1, 0.0);
        let rho = DensityMatrix { matrix: m };
        assert!(matches!(
            von_neumann_entropy(&rho),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn entropy_rejects_negative_spectrum() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diag(&[1.1, -0.1])).unwrap();
        assert!(matches!(
            von_neumann_entropy(&rho),
            Err(Error::NegativeEigenvalue(_))
        ));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clamped() {
        let rho =
            DensityMatrix::new(ComplexMatrix::from_real_diag(&[1.0 + 5e-11, -5e-11])).unwrap();
        assert!(von_neumann_entropy(&rho).unwrap().abs() < 1e-9);
    }

    #[test]
    fn eigh_reconstructs_matrix() {
        let h = ComplexMatrix::from_rows(&[
            &[c(2.0, 0.0), c(0.3, -0.4), c(0.0, 1.0)],
            &[c(0.3, 0.4), c(-1.0, 0.0), c(0.2, 0.0)],
            &[c(0.0, -1.0), c(0.2, 0.0), c(0.5, 0.0)],
        ]);
        let (vals, vecs) = h.eigh().unwrap();
        let rebuilt = &(&vecs * &ComplexMatrix::from_real_diag(&vals)) * &vecs.adjoint();
        assert!((&rebuilt - &h).max_abs() < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn unitary_of_pauli_x() {
        let x = ComplexMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]);
        let t = 0.37;
        let u = unitary_from_hermitian(&x, t).unwrap();
        let expected = ComplexMatrix::from_rows(&[
            &[c(t.cos(), 0.0), c(0.0, -t.sin())],
            &[c(0.0, -t.sin()), c(t.cos(), 0.0)],
        ]);
        assert!((&u - &expected).max_abs() < 1e-14);
    }
}
