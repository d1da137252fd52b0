//! Zeeman product basis, spin-1/2 operators and density matrices.
//!
//! Basis states are indexed by their bit pattern read as an unsigned
//! integer; bit `i` set means spin `i` is up. With ħ = 1 the single-spin
//! operators have eigenvalues ±1/2.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const MIN_SPINS: usize = 1;
pub const DEFAULT_MAX_SPINS: usize = 12;

const HERMITIAN_TOL: f64 = 1e-12;

/// Relative anti-Hermitian residual ‖A − A†‖ / ‖A‖ (Frobenius).
pub fn hermitian_residual(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

/// Spin-1/2 cluster: site count and the symmetric dipolar coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    couplings: DMatrix<f64>,
    label: String,
}

impl SpinSystem {
    pub fn new(couplings: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        Self::with_max_spins(couplings, label, DEFAULT_MAX_SPINS)
    }

    pub fn with_max_spins(
        couplings: DMatrix<f64>,
        label: impl Into<String>,
        max_spins: usize,
    ) -> Result<Self> {
        let n = couplings.nrows();
        if couplings.ncols() != n {
            return Err(Error::InvalidCouplings(format!(
                "matrix is {}x{}, not square",
                n,
                couplings.ncols()
            )));
        }
        if n < 2 || n > max_spins {
            return Err(Error::SizeOutOfRange { n, min: 2, max: max_spins });
        }
        for i in 0..n {
            if couplings[(i, i)] != 0.0 {
                return Err(Error::InvalidCouplings(format!(
                    "nonzero diagonal entry at site {i}"
                )));
            }
            for j in 0..i {
                let (a, b) = (couplings[(i, j)], couplings[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidCouplings(format!(
                        "non-finite coupling between {j} and {i}"
                    )));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidCouplings(format!(
                        "asymmetric coupling D[{i},{j}]={a} vs D[{j},{i}]={b}"
                    )));
                }
            }
        }
        Ok(Self { couplings, label: label.into() })
    }

    pub fn n_spins(&self) -> usize {
        self.couplings.nrows()
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[(i, j)]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same geometry with every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { couplings: &self.couplings * factor, label: self.label.clone() }
    }
}

/// Zeeman product basis of `n_spins` spin-1/2 sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeemanBasis {
    n_spins: usize,
    /// Twice the magnetization quantum number of each state.
    twice_m: Vec<i32>,
}

impl ZeemanBasis {
    pub fn new(n_spins: usize) -> Result<Self> {
        Self::with_max_spins(n_spins, DEFAULT_MAX_SPINS)
    }

    pub fn with_max_spins(n_spins: usize, max_spins: usize) -> Result<Self> {
        if !(MIN_SPINS..=max_spins).contains(&n_spins) {
            return Err(Error::SizeOutOfRange { n: n_spins, min: MIN_SPINS, max: max_spins });
        }
        let n = n_spins as i32;
        let twice_m = (0..1usize << n_spins)
            .map(|s| 2 * s.count_ones() as i32 - n)
            .collect();
        Ok(Self { n_spins, twice_m })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.twice_m.len()
    }

    pub fn m(&self, state: usize) -> f64 {
        f64::from(self.twice_m[state]) / 2.0
    }

    pub fn twice_m(&self, state: usize) -> i32 {
        self.twice_m[state]
    }

    pub fn m_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|s| self.m(s)).collect()
    }

    /// Coherence order m(a) − m(b) of the matrix element (a, b).
    pub fn coherence_order(&self, a: usize, b: usize) -> i32 {
        (self.twice_m[a] - self.twice_m[b]) / 2
    }

    pub fn count_with_twice_m(&self, twice_m: i32) -> usize {
        self.twice_m.iter().filter(|&&v| v == twice_m).count()
    }

    /// States with the given 2m, in index order.
    pub fn block(&self, twice_m: i32) -> Vec<usize> {
        (0..self.dim()).filter(|&s| self.twice_m[s] == twice_m).collect()
    }

    /// All distinct 2m values, ascending.
    pub fn twice_m_values(&self) -> Vec<i32> {
        let n = self.n_spins as i32;
        (0..=n).map(|k| 2 * k - n).collect()
    }

    pub fn up_index(&self) -> usize {
        self.dim() - 1
    }

    pub fn down_index(&self) -> usize {
        0
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found });
        }
        Ok(())
    }
}

pub fn build_basis(n_spins: usize) -> Result<ZeemanBasis> {
    ZeemanBasis::new(n_spins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinOpKind {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

impl SpinOpKind {
    pub const ALL: [SpinOpKind; 5] =
        [SpinOpKind::X, SpinOpKind::Y, SpinOpKind::Z, SpinOpKind::Plus, SpinOpKind::Minus];

    pub fn is_hermitian(self) -> bool {
        matches!(self, SpinOpKind::X | SpinOpKind::Y | SpinOpKind::Z)
    }
}

/// Dense operator on the Zeeman basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    /// Wraps a matrix that must be Hermitian within tolerance.
    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let residual = hermitian_residual(&matrix);
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
        Ok(Self { matrix, hermitian: true })
    }

    /// Wraps an arbitrary square matrix; the Hermitian flag is left unset.
    pub fn general(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        Ok(Self { matrix, hermitian: false })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: &self.matrix * C64::new(factor, 0.0), hermitian: self.hermitian }
    }

    pub fn commutator(&self, other: &Operator) -> CMatrix {
        &self.matrix * &other.matrix - &other.matrix * &self.matrix
    }
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    Ok(())
}

pub fn single_spin_op(basis: &ZeemanBasis, site: usize, kind: SpinOpKind) -> Result<Operator> {
    if site >= basis.n_spins() {
        return Err(Error::SiteOutOfRange { site, n_spins: basis.n_spins() });
    }
    let dim = basis.dim();
    let bit = 1usize << site;
    let mut m = CMatrix::zeros(dim, dim);
    for s in 0..dim {
        let up = s & bit != 0;
        match kind {
            SpinOpKind::Z => m[(s, s)] = C64::new(if up { 0.5 } else { -0.5 }, 0.0),
            SpinOpKind::Plus => {
                if !up {
                    m[(s | bit, s)] = C64::new(1.0, 0.0);
                }
            }
            SpinOpKind::Minus => {
                if up {
                    m[(s & !bit, s)] = C64::new(1.0, 0.0);
                }
            }
            // I_x = (I_+ + I_-)/2, I_y = (I_+ - I_-)/(2i)
            SpinOpKind::X => m[(s ^ bit, s)] = C64::new(0.5, 0.0),
            SpinOpKind::Y => {
                m[(s ^ bit, s)] = if up { C64::new(0.0, 0.5) } else { C64::new(0.0, -0.5) }
            }
        }
    }
    Ok(Operator { matrix: m, hermitian: kind.is_hermitian() })
}

pub fn collective_op(basis: &ZeemanBasis, kind: SpinOpKind) -> Operator {
    let dim = basis.dim();
    let mut total = CMatrix::zeros(dim, dim);
    for site in 0..basis.n_spins() {
        let op = single_spin_op(basis, site, kind).expect("site within range");
        total += op.matrix;
    }
    Operator { matrix: total, hermitian: kind.is_hermitian() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// Normalized density matrix, trace one.
    Full,
    /// Deviation from the uniform background; may be traceless.
    Deviation,
}

/// Hermitian density matrix on the Zeeman basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    convention: Convention,
}

impl DensityMatrix {
    pub fn deviation(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let residual = hermitian_residual(&matrix);
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual });
        }
        Ok(Self { matrix, convention: Convention::Deviation })
    }

    pub fn full(matrix: CMatrix) -> Result<Self> {
        let mut rho = Self::deviation(matrix)?;
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("full density matrix has trace {tr}")));
        }
        let herm = (&rho.matrix + rho.matrix.adjoint()) * C64::new(0.5, 0.0);
        let min_eig = herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::InvalidParameter(format!(
                "full density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        rho.convention = Convention::Full;
        Ok(rho)
    }

    /// Diagonal deviation matrix from real populations in the Zeeman basis.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&x| C64::new(x, 0.0)),
        ));
        Self { matrix: m, convention: Convention::Deviation }
    }

    /// Re-wraps a matrix produced by a trusted (Hermiticity-preserving) map,
    /// symmetrizing away rounding noise.
    pub(crate) fn from_trusted(matrix: CMatrix, convention: Convention) -> Self {
        let herm = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Self { matrix: herm, convention }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Tr{ρ²}; for Hermitian ρ this is the squared Frobenius norm.
    pub fn purity(&self) -> f64 {
        self.matrix.norm_squared()
    }

    pub fn element(&self, a: usize, b: usize) -> C64 {
        self.matrix[(a, b)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub(crate) fn check_basis(&self, basis: &ZeemanBasis) -> Result<()> {
        basis.check_dim(self.dim())
    }

    /// Random Hermitian deviation matrix with entries of order one.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in 0..i {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        Self { matrix: m, convention: Convention::Deviation }
    }
}

/// Thermal equilibrium deviation matrix, ρ = I_z.
pub fn thermal_state(basis: &ZeemanBasis) -> DensityMatrix {
    let iz = collective_op(basis, SpinOpKind::Z);
    DensityMatrix { matrix: iz.matrix, convention: Convention::Deviation }
}

/// Highest-order coherence i(|u⟩⟨d| − |d⟩⟨u|).
pub fn homq_coherence_state(basis: &ZeemanBasis) -> DensityMatrix {
    let dim = basis.dim();
    let (u, d) = (basis.up_index(), basis.down_index());
    let mut m = CMatrix::zeros(dim, dim);
    m[(u, d)] = C64::new(0.0, 1.0);
    m[(d, u)] = C64::new(0.0, -1.0);
    DensityMatrix { matrix: m, convention: Convention::Deviation }
}

/// Diagonal |u⟩⟨u| − |d⟩⟨d| reached after ideal time reversal of the HOMQ state.
pub fn cat_diagonal_state(basis: &ZeemanBasis) -> DensityMatrix {
    let mut diag = vec![0.0; basis.dim()];
    diag[basis.up_index()] = 1.0;
    diag[basis.down_index()] = -1.0;
    DensityMatrix::from_diagonal(&diag)
}
