//! Dense complex linear algebra and random-matrix sampling.
//!
//! Matrices are stored row-major. Complex Gaussian entries are drawn as
//! `(x + iy)/√2` with `x, y` standard normal, i.e. unit variance `E|z|² = 1`.
//! The scale cancels in both the Haar phase correction and the Ginibre trace
//! normalization.

use std::ops::{Index, IndexMut, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used by the density-matrix and unitary invariant checks.
pub const INVARIANT_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Outer product `|a⟩⟨b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (n, p) = (self.cols, other.cols);
        let mut out = vec![ZERO; self.rows * p];
        for (i, orow) in out.chunks_exact_mut(p).enumerate() {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * p..(k + 1) * p];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * *b;
                }
            }
        }
        Self {
            rows: self.rows,
            cols: p,
            data: out,
        }
    }

    /// `a · self · a†`.
    pub fn sandwich(&self, a: &Self) -> Self {
        a.matmul(&self.matmul(&a.adjoint()))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// `‖M†M − 𝟙‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .max_abs_diff(&Self::identity(self.cols))
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Kronecker product. Entry `[(i1·b.rows+i2),(j1·b.cols+j2)] = a[i1,j1]·b[i2,j2]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let s = a[(i1, j1)];
            for i2 in 0..b.rows {
                let row = (i1 * b.rows + i2) * cols + j1 * b.cols;
                for j2 in 0..b.cols {
                    out.data[row + j2] = s * b[(i2, j2)];
                }
            }
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    assert!(m.is_square(), "eigenvalues need a square matrix");
    let mut ev: Vec<f64> = m
        .to_nalgebra()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Hermitian, unit-trace, positive semi-definite matrix on a tensor product
/// of subsystems with dimensions `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    dims: Vec<usize>,
}

impl DensityMatrix {
    /// Validates every density-matrix invariant at [`INVARIANT_TOL`].
    pub fn new(matrix: ComplexMatrix, dims: Vec<usize>) -> Result<Self> {
        let rho = Self::with_dims(matrix, dims)?;
        let herm = rho.matrix.hermiticity_defect();
        if herm > INVARIANT_TOL {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian (defect {herm:e})"
            )));
        }
        let tr = rho.matrix.trace();
        if (tr - ONE).norm() > INVARIANT_TOL {
            return Err(Error::Numerical(format!("density matrix trace is {tr}")));
        }
        let min_ev = rho.min_eigenvalue();
        if min_ev < -INVARIANT_TOL {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min_ev:e}"
            )));
        }
        Ok(rho)
    }

    /// Shape checks only; used on hot paths where the invariants hold by
    /// construction.
    pub(crate) fn with_dims(matrix: ComplexMatrix, dims: Vec<usize>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!("invalid subsystem dims {dims:?}")));
        }
        let total: usize = dims.iter().product();
        if total != matrix.rows {
            return Err(Error::Dimension(format!(
                "dims {dims:?} multiply to {total}, matrix is {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        Ok(Self { matrix, dims })
    }

    /// Pure state `|ψ⟩⟨ψ|` on a single subsystem; `psi` is normalized here.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if psi.is_empty() || norm == 0.0 {
            return Err(Error::Parameter(
                "pure state vector must be non-zero".into(),
            ));
        }
        let unit: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::with_dims(ComplexMatrix::outer(&unit, &unit), vec![psi.len()])
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0));
        Self {
            matrix: m,
            dims: vec![dim],
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    /// `ρ ⊗ σ`, concatenating subsystem lists.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DensityMatrix {
            matrix: kron(&self.matrix, &other.matrix),
            dims,
        }
    }

    /// Same matrix, refactored into different subsystem dimensions.
    pub fn reshape_dims(self, dims: Vec<usize>) -> Result<Self> {
        Self::with_dims(self.matrix, dims)
    }

    /// Reduced state on the subsystems listed in `keep` (indices into
    /// `dims`). The output keeps the input subsystem order regardless of the
    /// order of `keep`.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let n_sub = self.dims.len();
        if keep.is_empty() {
            return Err(Error::Dimension("keep set must be non-empty".into()));
        }
        let mut kept = vec![false; n_sub];
        for &k in keep {
            if k >= n_sub {
                return Err(Error::Dimension(format!(
                    "subsystem index {k} out of range for dims {:?}",
                    self.dims
                )));
            }
            if kept[k] {
                return Err(Error::Dimension(format!("subsystem index {k} repeated")));
            }
            kept[k] = true;
        }

        // Split every full index into (kept index, traced index).
        let total = self.dim();
        let kept_dims: Vec<usize> = (0..n_sub)
            .filter(|&s| kept[s])
            .map(|s| self.dims[s])
            .collect();
        let out_dim: usize = kept_dims.iter().product();
        let traced_dim = total / out_dim;
        let mut by_traced: Vec<Vec<(usize, usize)>> = vec![Vec::with_capacity(out_dim); traced_dim];
        for full in 0..total {
            let mut rem = full;
            let (mut k_idx, mut k_stride) = (0usize, 1usize);
            let (mut t_idx, mut t_stride) = (0usize, 1usize);
            for s in (0..n_sub).rev() {
                let digit = rem % self.dims[s];
                rem /= self.dims[s];
                if kept[s] {
                    k_idx += digit * k_stride;
                    k_stride *= self.dims[s];
                } else {
                    t_idx += digit * t_stride;
                    t_stride *= self.dims[s];
                }
            }
            by_traced[t_idx].push((k_idx, full));
        }

        let mut out = ComplexMatrix::zeros(out_dim, out_dim);
        for group in &by_traced {
            for &(ki, fi) in group {
                for &(kj, fj) in group {
                    out[(ki, kj)] += self.matrix[(fi, fj)];
                }
            }
        }
        Ok(DensityMatrix {
            matrix: out,
            dims: kept_dims,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    matrix: ComplexMatrix,
}

impl UnitaryMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "unitary must be square, got {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        let defect = matrix.unitarity_defect();
        if defect > INVARIANT_TOL {
            return Err(Error::Numerical(format!(
                "matrix is not unitary (defect {defect:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    /// `U ρ U†`, keeping the subsystem structure of `rho`.
    pub fn conjugate(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "unitary of dim {} applied to state of dim {}",
                self.dim(),
                rho.dim()
            )));
        }
        Ok(DensityMatrix {
            matrix: rho.matrix.sandwich(&self.matrix),
            dims: rho.dims.clone(),
        })
    }
}

/// Seeded random stream. Identical seeds give identical sample sequences.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(x + iy)/√2`, `x, y ~ N(0, 1)`.
    pub fn complex_gaussian(&mut self) -> C64 {
        let x: f64 = self.inner.sample(StandardNormal);
        let y: f64 = self.inner.sample(StandardNormal);
        C64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// Uniform on the closed interval `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..=hi)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    fn gaussian_matrix(&mut self, dim: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(dim, dim, |_, _| self.complex_gaussian())
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Householder QR of a square matrix. Returns `(Q, R)` with `Q` unitary and
/// `R` upper triangular; the diagonal of `R` carries arbitrary phases.
pub fn householder_qr(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    assert!(a.is_square(), "householder_qr expects a square matrix");
    let n = a.rows;
    let mut r = a.clone();
    let mut q = ComplexMatrix::identity(n);
    let mut v = vec![ZERO; n];

    for k in 0..n.saturating_sub(1) {
        let norm = (k..n).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        let phase = if x0.norm() == 0.0 {
            ONE
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;

        let v = &mut v[k..n];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = r[(k + i, k)];
        }
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;

        // R <- H R on the trailing block.
        for j in k..n {
            let s: C64 = v
                .iter()
                .enumerate()
                .map(|(i, vi)| vi.conj() * r[(k + i, j)])
                .sum();
            let s = s * beta;
            for (i, vi) in v.iter().enumerate() {
                r[(k + i, j)] -= s * vi;
            }
        }
        // Q <- Q H.
        for row in 0..n {
            let s: C64 = v
                .iter()
                .enumerate()
                .map(|(i, vi)| q[(row, k + i)] * vi)
                .sum();
            let s = s * beta;
            for (i, vi) in v.iter().enumerate() {
                q[(row, k + i)] -= s * vi.conj();
            }
        }
        r[(k, k)] = alpha;
        for i in k + 1..n {
            r[(i, k)] = ZERO;
        }
    }
    (q, r)
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with each
/// column of `Q` multiplied by the phase of the matching diagonal entry of
/// `R`.
pub fn sample_haar_unitary(dim: usize, rng: &mut Rng) -> UnitaryMatrix {
    assert!(dim >= 1, "unitary dimension must be positive");
    loop {
        let (mut q, r) = householder_qr(&rng.gaussian_matrix(dim));
        let diag: Vec<C64> = (0..dim).map(|i| r[(i, i)]).collect();
        if diag.iter().any(|z| z.norm() == 0.0) {
            continue;
        }
        for (j, d) in diag.iter().enumerate() {
            let phase = d / d.norm();
            for i in 0..dim {
                q[(i, j)] *= phase;
            }
        }
        return UnitaryMatrix { matrix: q };
    }
}

/// `V = G·diag(e^{2πi s_r})·G†` with `s_r ~ U[0, φ]` and `G` Haar.
///
/// `φ = 0` yields the exact identity. The random draws are still consumed so
/// the stream position does not depend on `φ`.
pub fn sample_evolution_unitary(dim: usize, phi: f64, rng: &mut Rng) -> Result<UnitaryMatrix> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::Parameter(format!(
            "evolution parameter phi must lie in [0, 1], got {phi}"
        )));
    }
    if dim == 0 {
        return Err(Error::Dimension(
            "unitary dimension must be positive".into(),
        ));
    }
    let phases: Vec<C64> = (0..dim)
        .map(|_| {
            let s = rng.uniform(0.0, phi);
            C64::from_polar(1.0, 2.0 * std::f64::consts::PI * s)
        })
        .collect();
    let g = sample_haar_unitary(dim, rng);
    if phi == 0.0 {
        return Ok(UnitaryMatrix::identity(dim));
    }
    let mut gd = g.matrix.clone();
    for i in 0..dim {
        for (j, p) in phases.iter().enumerate() {
            gd[(i, j)] *= p;
        }
    }
    Ok(UnitaryMatrix {
        matrix: gd.matmul(&g.matrix.adjoint()),
    })
}

/// `AA†/tr(AA†)` for a complex Gaussian (Ginibre) matrix `A`.
pub fn sample_ginibre_density(dim: usize, rng: &mut Rng) -> DensityMatrix {
    assert!(dim >= 1, "density dimension must be positive");
    let a = rng.gaussian_matrix(dim);
    let aa = a.matmul(&a.adjoint());
    let tr = aa.trace().re;
    DensityMatrix {
        matrix: aa.scale(C64::new(1.0 / tr, 0.0)),
        dims: vec![dim],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_gaussian())
    }

    /// Plain triple-loop product, independent of `matmul`.
    fn naive_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
        })
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(3));
        assert_eq!(k, ComplexMatrix::identity(6));
    }

    #[test]
    fn kron_pauli_squares_to_identity() {
        let xx = kron(&sigma_x(), &sigma_x());
        assert_eq!(xx.matmul(&xx), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_mixed_product_rule() {
        let mut rng = Rng::from_seed(11);
        let (a, b, cm, d) = (
            random_matrix(2, 2, &mut rng),
            random_matrix(2, 2, &mut rng),
            random_matrix(2, 2, &mut rng),
            random_matrix(2, 2, &mut rng),
        );
        let lhs = naive_product(&kron(&a, &b), &kron(&cm, &d));
        let rhs = kron(&naive_product(&a, &cm), &naive_product(&b, &d));
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn kron_is_associative() {
        let mut rng = Rng::from_seed(3);
        let a = random_matrix(2, 3, &mut rng);
        let b = random_matrix(3, 1, &mut rng);
        let cm = random_matrix(2, 2, &mut rng);
        let l = kron(&kron(&a, &b), &cm);
        let r = kron(&a, &kron(&b, &cm));
        assert!(l.max_abs_diff(&r) < 1e-14);
    }

    #[test]
    fn matmul_matches_naive() {
        let mut rng = Rng::from_seed(5);
        let a = random_matrix(3, 4, &mut rng);
        let b = random_matrix(4, 2, &mut rng);
        assert!(a.matmul(&b).max_abs_diff(&naive_product(&a, &b)) < 1e-13);
    }

    #[test]
    fn from_vec_rejects_bad_shapes() {
        assert!(ComplexMatrix::from_vec(0, 2, vec![]).is_err());
        assert!(ComplexMatrix::from_vec(2, 2, vec![ONE; 3]).is_err());
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = Rng::from_seed(1);
        let rho = sample_ginibre_density(2, &mut rng);
        let sigma = sample_ginibre_density(3, &mut rng);
        let joint = rho.tensor(&sigma);
        let reduced = joint.partial_trace(&[0]).unwrap();
        assert_eq!(reduced.dims(), &[2]);
        assert!(reduced.matrix().max_abs_diff(rho.matrix()) < 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let phi_plus = [c(h, 0.0), ZERO, ZERO, c(h, 0.0)];
        let bell = DensityMatrix::pure(&phi_plus)
            .unwrap()
            .reshape_dims(vec![2, 2])
            .unwrap();
        let reduced = bell.partial_trace(&[0]).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!(reduced.matrix().max_abs_diff(mixed.matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_index_summation() {
        let mut rng = Rng::from_seed(99);
        let rho = sample_ginibre_density(12, &mut rng)
            .reshape_dims(vec![2, 3, 2])
            .unwrap();
        let reduced = rho.partial_trace(&[2, 0]).unwrap();
        assert_eq!(reduced.dims(), &[2, 2]);
        // Σ_k ρ[(i,k,m),(j,k,n)] with full index (a·3 + b)·2 + c.
        let full = |a: usize, b: usize, cc: usize| (a * 3 + b) * 2 + cc;
        for i in 0..2 {
            for m in 0..2 {
                for j in 0..2 {
                    for n in 0..2 {
                        let expect: C64 = (0..3)
                            .map(|k| rho.matrix()[(full(i, k, m), full(j, k, n))])
                            .sum();
                        let got = reduced.matrix()[(i * 2 + m, j * 2 + n)];
                        assert!((got - expect).norm() < 1e-12);
                    }
                }
            }
        }
        assert_abs_diff_eq!(reduced.trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_indices() {
        let rho = DensityMatrix::maximally_mixed(4)
            .reshape_dims(vec![2, 2])
            .unwrap();
        assert!(matches!(rho.partial_trace(&[2]), Err(Error::Dimension(_))));
        assert!(matches!(rho.partial_trace(&[]), Err(Error::Dimension(_))));
        assert!(matches!(
            rho.partial_trace(&[0, 0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn haar_dim_one_is_a_phase() {
        let mut rng = Rng::from_seed(2);
        let u = sample_haar_unitary(1, &mut rng);
        assert_abs_diff_eq!(u.matrix()[(0, 0)].norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn qr_reconstructs_input() {
        let mut rng = Rng::from_seed(8);
        let a = random_matrix(6, 6, &mut rng);
        let (q, r) = householder_qr(&a);
        assert!(q.unitarity_defect() < 1e-12);
        assert!(q.matmul(&r).max_abs_diff(&a) < 1e-12);
        for i in 0..6 {
            for j in 0..i {
                assert_eq!(r[(i, j)], ZERO);
            }
        }
    }

    #[test]
    fn haar_samples_are_unitary() {
        let mut rng = Rng::from_seed(4);
        for dim in [1, 2, 5, 16, 64] {
            let u = sample_haar_unitary(dim, &mut rng);
            assert!(u.matrix().unitarity_defect() < INVARIANT_TOL, "dim {dim}");
        }
    }

    #[test]
    fn evolution_with_zero_phi_is_identity() {
        let mut rng = Rng::from_seed(6);
        for dim in [1, 2, 8] {
            let v = sample_evolution_unitary(dim, 0.0, &mut rng).unwrap();
            assert_eq!(v.matrix(), &ComplexMatrix::identity(dim));
        }
    }

    #[test]
    fn evolution_rejects_phi_out_of_range() {
        let mut rng = Rng::from_seed(6);
        assert!(matches!(
            sample_evolution_unitary(2, 1.5, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(sample_evolution_unitary(2, -0.1, &mut rng).is_err());
    }

    #[test]
    fn evolution_with_full_phi_is_unitary() {
        let mut rng = Rng::from_seed(7);
        let v = sample_evolution_unitary(8, 1.0, &mut rng).unwrap();
        assert!(v.matrix().unitarity_defect() < INVARIANT_TOL);
    }

    #[test]
    fn ginibre_dim_one_is_scalar_one() {
        let mut rng = Rng::from_seed(10);
        let rho = sample_ginibre_density(1, &mut rng);
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ginibre_samples_are_states() {
        let mut rng = Rng::from_seed(12);
        for dim in [2, 4, 8, 32] {
            let rho = sample_ginibre_density(dim, &mut rng);
            assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
            assert!(rho.min_eigenvalue() >= -1e-12);
            assert!(DensityMatrix::new(rho.matrix().clone(), vec![dim]).is_ok());
        }
    }

    #[test]
    fn density_constructor_rejects_invalid() {
        let not_unit = ComplexMatrix::identity(2);
        assert!(matches!(
            DensityMatrix::new(not_unit, vec![2]),
            Err(Error::Numerical(_))
        ));
        let negative =
            ComplexMatrix::from_vec(2, 2, vec![c(1.5, 0.0), ZERO, ZERO, c(-0.5, 0.0)]).unwrap();
        assert!(DensityMatrix::new(negative, vec![2]).is_err());
        assert!(matches!(
            DensityMatrix::new(DensityMatrix::maximally_mixed(4).into_matrix(), vec![3]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn unitary_conjugation_preserves_spectrum() {
        let mut rng = Rng::from_seed(13);
        let rho = sample_ginibre_density(6, &mut rng);
        let u = sample_haar_unitary(6, &mut rng);
        let out = u.conjugate(&rho).unwrap();
        assert!(out.matrix().hermiticity_defect() < 1e-10);
        assert_abs_diff_eq!(out.trace().re, 1.0, epsilon = 1e-10);
        let before = hermitian_eigenvalues(rho.matrix());
        let after = hermitian_eigenvalues(out.matrix());
        for (a, b) in before.iter().zip(&after) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut a = Rng::from_seed(77);
        let mut b = Rng::from_seed(77);
        assert_eq!(
            sample_haar_unitary(4, &mut a),
            sample_haar_unitary(4, &mut b)
        );
        assert_eq!(
            sample_evolution_unitary(4, 0.3, &mut a).unwrap(),
            sample_evolution_unitary(4, 0.3, &mut b).unwrap()
        );
        assert_eq!(
            sample_ginibre_density(3, &mut a),
            sample_ginibre_density(3, &mut b)
        );
    }
}
