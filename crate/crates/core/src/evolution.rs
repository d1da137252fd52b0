//! Exact unitary propagation ρ(t) = e^{−iHt} ρ e^{iHt} for time-independent
//! Hamiltonians, via a single Hermitian eigendecomposition.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mq;
use crate::par::{self, ExecMode};
use crate::spin::{CMatrix, Convention, DensityMatrix, Operator, ZeemanBasis, C64};

/// Eigenvalue gap below which eigenvectors are treated as one degenerate subspace.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// ‖H V − V Λ‖ relative to ‖H‖.
    pub fn residual(&self, h: &CMatrix) -> f64 {
        let lam = CMatrix::from_diagonal(&DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&l| C64::new(l, 0.0)),
        ));
        let r = h * &self.eigenvectors - &self.eigenvectors * lam;
        r.norm() / h.norm().max(f64::MIN_POSITIVE)
    }

    /// ‖V†V − 1‖.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        (self.eigenvectors.adjoint() * &self.eigenvectors - CMatrix::identity(n, n)).norm()
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues and a
/// reproducible eigenvector basis: every (near-)degenerate subspace is
/// re-spanned by Gram–Schmidt on its projections of the unit vectors taken
/// in index order, which also fixes the phase of nondegenerate vectors.
pub fn diagonalize(h: &Operator) -> Result<EigenSystem> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian { residual: crate::spin::hermitian_residual(h.matrix()) });
    }
    diagonalize_matrix(h.matrix())
}

pub(crate) fn diagonalize_matrix(m: &CMatrix) -> Result<EigenSystem> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let sorted = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

    let scale = eigenvalues.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let mut vectors = CMatrix::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eigenvalues[end] - eigenvalues[end - 1] <= DEGENERACY_TOL * scale {
            end += 1;
        }
        let cluster = sorted.columns(start, end - start).into_owned();
        let basis = canonical_span(&cluster);
        vectors.columns_mut(start, end - start).copy_from(&basis);
        start = end;
    }

    let sys = EigenSystem { eigenvalues, eigenvectors: vectors };
    let ortho = sys.orthonormality_error();
    if ortho > 1e-10 {
        return Err(Error::Invariant(format!("eigenvectors not orthonormal ({ortho:.3e})")));
    }
    Ok(sys)
}

/// Deterministic orthonormal basis of the column span of `cluster`.
fn canonical_span(cluster: &CMatrix) -> CMatrix {
    let (n, k) = cluster.shape();
    let projector = cluster * cluster.adjoint();
    for threshold in [1e-2, 1e-4, 1e-8] {
        let mut found: Vec<DVector<C64>> = Vec::with_capacity(k);
        for i in 0..n {
            if found.len() == k {
                break;
            }
            let mut v: DVector<C64> = projector.column(i).into_owned();
            for q in &found {
                let overlap = q.dotc(&v);
                v -= q * overlap;
            }
            // second pass for numerical orthogonality
            for q in &found {
                let overlap = q.dotc(&v);
                v -= q * overlap;
            }
            let norm = v.norm();
            if norm > threshold {
                found.push(v / C64::new(norm, 0.0));
            }
        }
        if found.len() == k {
            return CMatrix::from_columns(&found);
        }
    }
    cluster.clone()
}

/// Cached eigendecomposition of one Hamiltonian; evolves any state to any time.
#[derive(Debug, Clone)]
pub struct Propagator {
    eigen: EigenSystem,
}

impl Propagator {
    pub fn new(h: &Operator) -> Result<Self> {
        Ok(Self { eigen: diagonalize(h)? })
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }

    pub fn dim(&self) -> usize {
        self.eigen.dim()
    }

    /// The state expressed in the Hamiltonian eigenbasis, V†ρV.
    pub fn to_eigenbasis(&self, rho: &DensityMatrix) -> Result<CMatrix> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rho.dim() });
        }
        let v = &self.eigen.eigenvectors;
        Ok(v.adjoint() * rho.matrix() * v)
    }

    /// Propagates a state already in the eigenbasis; returns the lab-basis state.
    pub fn evolve_eigen(&self, rho_eig: &CMatrix, t: f64, convention: Convention) -> DensityMatrix {
        let lam = &self.eigen.eigenvalues;
        let phases: Vec<C64> = lam.iter().map(|&l| C64::from_polar(1.0, -l * t)).collect();
        let rotated = CMatrix::from_fn(self.dim(), self.dim(), |j, k| {
            rho_eig[(j, k)] * phases[j] * phases[k].conj()
        });
        let v = &self.eigen.eigenvectors;
        DensityMatrix::from_trusted(v * rotated * v.adjoint(), convention)
    }

    pub fn evolve(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        let eig = self.to_eigenbasis(rho)?;
        Ok(self.evolve_eigen(&eig, t, rho.convention()))
    }
}

/// ρ(t) = e^{−iHt} ρ e^{iHt}. Negative `t` evolves backward.
pub fn evolve(rho: &DensityMatrix, h: &Operator, t: f64) -> Result<DensityMatrix> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: rho.dim() });
    }
    Propagator::new(h)?.evolve(rho, t)
}

/// Real-valued quantity read off a density matrix at each sweep time.
#[derive(Clone)]
pub enum Observable {
    /// Hermitian-pair MQ intensity of order n (column `In`).
    MqIntensity(usize),
    /// MQ intensity normalized by Tr{ρ(0)²} (column `Fn`).
    MqFraction(usize),
    /// |ρ_uu|² + |ρ_dd|².
    DiagPair,
    /// DiagPair normalized by Tr{ρ(0)²}.
    DiagPairFraction,
    /// Diagonal element of a Zeeman state (column `p<index>`).
    Population(usize),
    /// Real part of ρ_ud.
    HomqReal,
    /// Imaginary part of ρ_ud.
    HomqImag,
    Custom(String, Arc<dyn Fn(&DensityMatrix, &ZeemanBasis) -> f64 + Send + Sync>),
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::MqIntensity(n) => format!("I{n}"),
            Observable::MqFraction(n) => format!("F{n}"),
            Observable::DiagPair => "diag_pair".into(),
            Observable::DiagPairFraction => "diag_pair_frac".into(),
            Observable::Population(s) => format!("p{s}"),
            Observable::HomqReal => "re_ud".into(),
            Observable::HomqImag => "im_ud".into(),
            Observable::Custom(name, _) => name.clone(),
        }
    }

    /// Intensity columns `I0 … IN`.
    pub fn all_intensities(n_spins: usize) -> Vec<Observable> {
        (0..=n_spins).map(Observable::MqIntensity).collect()
    }

    fn evaluate(&self, rho: &DensityMatrix, basis: &ZeemanBasis, norm: f64) -> f64 {
        let (u, d) = (basis.up_index(), basis.down_index());
        match self {
            Observable::MqIntensity(n) => mq::order_intensity(rho, basis, *n),
            Observable::MqFraction(n) => mq::order_intensity(rho, basis, *n) / norm,
            Observable::DiagPair => diag_pair(rho, basis),
            Observable::DiagPairFraction => diag_pair(rho, basis) / norm,
            Observable::Population(s) => rho.element(*s, *s).re,
            Observable::HomqReal => rho.element(u, d).re,
            Observable::HomqImag => rho.element(u, d).im,
            Observable::Custom(_, f) => f(rho, basis),
        }
    }

    fn validate(&self, basis: &ZeemanBasis) -> Result<()> {
        let ok = match self {
            Observable::MqIntensity(n) | Observable::MqFraction(n) => *n <= basis.n_spins(),
            Observable::Population(s) => *s < basis.dim(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownObservable(self.name()))
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |rest: &str| rest.parse::<usize>().map_err(|_| Error::UnknownObservable(s.into()));
        match s {
            "diag_pair" => Ok(Observable::DiagPair),
            "diag_pair_frac" => Ok(Observable::DiagPairFraction),
            "re_ud" => Ok(Observable::HomqReal),
            "im_ud" => Ok(Observable::HomqImag),
            _ if s.starts_with('I') => Ok(Observable::MqIntensity(num(&s[1..])?)),
            _ if s.starts_with('F') => Ok(Observable::MqFraction(num(&s[1..])?)),
            _ if s.starts_with('p') => Ok(Observable::Population(num(&s[1..])?)),
            _ => Err(Error::UnknownObservable(s.into())),
        }
    }
}

/// |ρ_uu|² + |ρ_dd|², the weight of the two extreme populations.
pub fn diag_pair(rho: &DensityMatrix, basis: &ZeemanBasis) -> f64 {
    let (u, d) = (basis.up_index(), basis.down_index());
    rho.element(u, u).norm_sqr() + rho.element(d, d).norm_sqr()
}

/// Observable values over a time grid (t in units of 1/D12).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl SweepTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingObservable(name.into()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Appends the columns of `other`, which must share the time grid.
    pub fn join(mut self, other: SweepTable, suffix: &str) -> Result<SweepTable> {
        if self.times != other.times {
            return Err(Error::InvalidParameter("sweep grids differ".into()));
        }
        self.names.extend(other.names.into_iter().map(|n| format!("{n}{suffix}")));
        for (row, extra) in self.rows.iter_mut().zip(other.rows) {
            row.extend(extra);
        }
        Ok(self)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        out.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let mut rec = vec![format!("{t:.6}")];
            rec.extend(row.iter().map(|v| format!("{v:.15e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Evenly spaced grid `0, step, …` up to `t_max` inclusive (within rounding).
pub fn time_grid(t_start: f64, t_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(t_max >= t_start) {
        return Err(Error::InvalidParameter(format!(
            "bad grid: start {t_start}, end {t_max}, step {step}"
        )));
    }
    let n = ((t_max - t_start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| t_start + k as f64 * step).collect())
}

/// Evaluates `observables` on ρ(t) for every grid time, reusing one
/// eigendecomposition. Fractions are normalized by Tr{ρ₀²}.
pub fn sweep(
    rho0: &DensityMatrix,
    propagator: &Propagator,
    basis: &ZeemanBasis,
    grid: &[f64],
    observables: &[Observable],
    mode: ExecMode,
) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    rho0.check_basis(basis)?;
    for obs in observables {
        obs.validate(basis)?;
    }
    let norm = rho0.purity();
    let rho_eig = propagator.to_eigenbasis(rho0)?;
    let rows = par::map(mode, grid, |&t| {
        let rho = propagator.evolve_eigen(&rho_eig, t, rho0.convention());
        observables.iter().map(|o| o.evaluate(&rho, basis, norm)).collect::<Vec<f64>>()
    });
    Ok(SweepTable {
        names: observables.iter().map(Observable::name).collect(),
        times: grid.to_vec(),
        rows,
    })
}

/// Convenience wrapper diagonalizing `h` first.
pub fn sweep_hamiltonian(
    rho0: &DensityMatrix,
    h: &Operator,
    basis: &ZeemanBasis,
    grid: &[f64],
    observables: &[Observable],
) -> Result<SweepTable> {
    let prop = Propagator::new(h)?;
    sweep(rho0, &prop, basis, grid, observables, ExecMode::default())
}

/// Real eigendecomposition with ascending eigenvalues (used for rate matrices
/// and m-blocks of real Hamiltonians).
/// The QR iteration occasionally stops with residuals near 1e-7 on small
/// blocks, so the result is polished with cyclic Jacobi sweeps in its own
/// basis, where the matrix is already nearly diagonal.
pub(crate) fn real_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut vectors = eig.eigenvectors;
    let mut a = vectors.transpose() * m * &vectors;
    a = (&a + a.transpose()) * 0.5;
    let tol = 1e-15 * m.amax().max(f64::MIN_POSITIVE);
    for _ in 0..30 {
        let off = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).fold(0.0f64, |mx, (p, q)| mx.max(a[(p, q)].abs()));
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol * 1e-3 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (vectors[(k, p)], vectors[(k, q)]);
                    vectors[(k, p)] = c * vkp - sn * vkq;
                    vectors[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let values = a.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let vals = order.iter().map(|&i| values[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    (vals, vecs)
}
