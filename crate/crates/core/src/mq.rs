//! Coherence-order decomposition and multiple-quantum intensities.
//!
//! Element (a, b) of a density matrix carries coherence order
//! m(a) − m(b). Intensities group each order with its Hermitian partner,
//! I_n = Tr{(ρ_n + ρ_−n)²} = 2 Tr{ρ_n ρ_n†} for n > 0 and I_0 = Tr{ρ_0²},
//! so that Σ_{n≥0} I_n = Tr{ρ²}.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spin::{collective_op, CMatrix, DensityMatrix, SpinOpKind, ZeemanBasis, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct MqDecomposition {
    n_spins: usize,
    /// Component of order `k − n_spins` at index k.
    components: Vec<CMatrix>,
}

impl MqDecomposition {
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn orders(&self) -> std::ops::RangeInclusive<i32> {
        let n = self.n_spins as i32;
        -n..=n
    }

    pub fn component(&self, order: i32) -> Result<&CMatrix> {
        let n = self.n_spins as i32;
        if order.abs() > n {
            return Err(Error::OrderOutOfRange { order: order.into(), max: self.n_spins });
        }
        Ok(&self.components[(order + n) as usize])
    }

    /// Σ_n ρ_n.
    pub fn sum(&self) -> CMatrix {
        let dim = self.components[0].nrows();
        self.components.iter().fold(CMatrix::zeros(dim, dim), |acc, c| acc + c)
    }

    /// Orders carrying any nonzero element.
    pub fn nonzero_orders(&self, tol: f64) -> Vec<i32> {
        self.orders()
            .filter(|&n| self.component(n).map(|c| c.norm() > tol).unwrap_or(false))
            .collect()
    }
}

/// Splits ρ by m(a) − m(b).
pub fn decompose(rho: &DensityMatrix, basis: &ZeemanBasis) -> Result<MqDecomposition> {
    rho.check_basis(basis)?;
    let n = basis.n_spins();
    let dim = basis.dim();
    let mut components = vec![CMatrix::zeros(dim, dim); 2 * n + 1];
    for a in 0..dim {
        for b in 0..dim {
            let k = (basis.coherence_order(a, b) + n as i32) as usize;
            components[k][(a, b)] = rho.element(a, b);
        }
    }
    Ok(MqDecomposition { n_spins: n, components })
}

pub fn mq_intensity(dec: &MqDecomposition, n: usize) -> Result<f64> {
    if n > dec.n_spins {
        return Err(Error::OrderOutOfRange { order: n as i64, max: dec.n_spins });
    }
    let pos = dec.component(n as i32)?;
    if n == 0 {
        // Tr{ρ_0²} with ρ_0 Hermitian
        return Ok((pos * pos).trace().re);
    }
    let neg = dec.component(-(n as i32))?;
    let pair = pos + neg;
    Ok((&pair * &pair).trace().re)
}

/// I_n computed straight from the matrix elements, without building components.
pub fn order_intensity(rho: &DensityMatrix, basis: &ZeemanBasis, n: usize) -> f64 {
    let dim = basis.dim();
    let mut total = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            if basis.coherence_order(a, b).unsigned_abs() as usize == n {
                total += rho.element(a, b).norm_sqr();
            }
        }
    }
    total
}

/// All intensities I_0 … I_N.
pub fn intensities(rho: &DensityMatrix, basis: &ZeemanBasis) -> Result<Vec<f64>> {
    rho.check_basis(basis)?;
    let n = basis.n_spins();
    let mut out = vec![0.0; n + 1];
    let dim = basis.dim();
    for a in 0..dim {
        for b in 0..dim {
            out[basis.coherence_order(a, b).unsigned_abs() as usize] += rho.element(a, b).norm_sqr();
        }
    }
    Ok(out)
}

/// Keeps only orders ±n: the ideal outcome of a phase-cycled filter.
pub fn filter_order(rho: &DensityMatrix, basis: &ZeemanBasis, n: usize) -> Result<DensityMatrix> {
    rho.check_basis(basis)?;
    if n == 0 || n > basis.n_spins() {
        return Err(Error::OrderOutOfRange { order: n as i64, max: basis.n_spins() });
    }
    let dim = basis.dim();
    let m = CMatrix::from_fn(dim, dim, |a, b| {
        if basis.coherence_order(a, b).unsigned_abs() as usize == n {
            rho.element(a, b)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    DensityMatrix::deviation(m)
}

/// Decomposition by discrete Fourier analysis over K rotations about z:
/// ρ_n = (1/K) Σ_k e^{inφ_k} R(φ_k) ρ R(φ_k)†, R(φ) = e^{−iφI_z}, φ_k = 2πk/K.
/// The rotated element (a, b) picks up e^{−iφ(m_a − m_b)}, so the e^{+inφ}
/// weight selects order n. Needs K > 2N so orders ±N do not alias.
pub fn phase_cycle_decompose(
    rho: &DensityMatrix,
    basis: &ZeemanBasis,
    k_steps: usize,
) -> Result<MqDecomposition> {
    rho.check_basis(basis)?;
    let n = basis.n_spins();
    if k_steps <= 2 * n {
        return Err(Error::Aliasing { k_steps, n_spins: n, need: 2 * n });
    }
    let dim = basis.dim();
    let iz = collective_op(basis, SpinOpKind::Z);
    let iz_diag: Vec<f64> = (0..dim).map(|i| iz.matrix()[(i, i)].re).collect();

    let rotated: Vec<(f64, CMatrix)> = (0..k_steps)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / k_steps as f64;
            let r = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                dim,
                iz_diag.iter().map(|&m| C64::from_polar(1.0, -phi * m)),
            ));
            (phi, &r * rho.matrix() * r.adjoint())
        })
        .collect();

    let components = (-(n as i32)..=n as i32)
        .map(|order| {
            let mut acc = CMatrix::zeros(dim, dim);
            for (phi, m) in &rotated {
                acc += m * C64::from_polar(1.0, f64::from(order) * phi);
            }
            acc / C64::new(k_steps as f64, 0.0)
        })
        .collect();
    Ok(MqDecomposition { n_spins: n, components })
}
