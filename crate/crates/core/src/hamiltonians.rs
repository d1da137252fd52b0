//! Dipolar Hamiltonians of a spin-1/2 cluster.
//!
//! Both Hamiltonians are built directly from bit arithmetic on the Zeeman
//! basis; every matrix element is real.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spin::{CMatrix, Operator, SpinSystem, ZeemanBasis, C64};

/// Six spins on a regular hexagon. Couplings fall off as r⁻³ with ring
/// distance: nearest neighbours get `d12`, next-nearest `d12/(3√3)`,
/// opposite sites `d12/8`.
pub fn hexagon_couplings(d12: f64) -> Result<SpinSystem> {
    if !(d12 > 0.0 && d12.is_finite()) {
        return Err(Error::InvalidParameter(format!("d12 must be positive, got {d12}")));
    }
    let n = 6;
    let by_distance = [0.0, d12, d12 / (3.0 * 3f64.sqrt()), d12 / 8.0];
    let couplings = DMatrix::from_fn(n, n, |i, j| {
        let k = (i + n - j) % n;
        by_distance[k.min(n - k)]
    });
    SpinSystem::new(couplings, "hexagon")
}

fn check_sizes(system: &SpinSystem, basis: &ZeemanBasis) -> Result<()> {
    if system.n_spins() != basis.n_spins() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_spins(),
            found: system.n_spins(),
        });
    }
    Ok(())
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Double-quantum effective Hamiltonian
/// H = −½ Σ_{i<j} D_ij (I_i+ I_j+ + I_i− I_j−).
pub fn dq_hamiltonian(system: &SpinSystem, basis: &ZeemanBasis) -> Result<Operator> {
    check_sizes(system, basis)?;
    let dim = basis.dim();
    let mut h = CMatrix::zeros(dim, dim);
    for (i, j) in pairs(system.n_spins()) {
        let d = system.coupling(i, j);
        if d == 0.0 {
            continue;
        }
        let both = (1usize << i) | (1usize << j);
        for s in 0..dim {
            if s & both == 0 {
                let t = s | both;
                h[(t, s)] += C64::new(-0.5 * d, 0.0);
                h[(s, t)] += C64::new(-0.5 * d, 0.0);
            }
        }
    }
    Operator::hermitian(h)
}

/// Negated Hamiltonian; evolution under it reverses evolution under `h`.
pub fn negated(h: &Operator) -> Operator {
    h.scaled(-1.0)
}

/// Secular (truncated) dipolar Hamiltonian
/// H = Σ_{i<j} D_ij (2 I_iz I_jz − ½ (I_i+ I_j− + I_i− I_j+)).
pub fn secular_dipolar_hamiltonian(system: &SpinSystem, basis: &ZeemanBasis) -> Result<Operator> {
    check_sizes(system, basis)?;
    let dim = basis.dim();
    let mut h = CMatrix::zeros(dim, dim);
    for (i, j) in pairs(system.n_spins()) {
        let d = system.coupling(i, j);
        if d == 0.0 {
            continue;
        }
        let (bi, bj) = (1usize << i, 1usize << j);
        for s in 0..dim {
            let aligned = (s & bi != 0) == (s & bj != 0);
            // 2 I_iz I_jz = ±1/2
            h[(s, s)] += C64::new(if aligned { 0.5 * d } else { -0.5 * d }, 0.0);
            if !aligned {
                h[(s ^ bi ^ bj, s)] += C64::new(-0.5 * d, 0.0);
            }
        }
    }
    Operator::hermitian(h)
}

/// Whether the highest (order N) coherence is reachable from I_z under the
/// double-quantum Hamiltonian: true for clusters of 2 + 4n spins.
pub fn homq_excitable(n_spins: usize) -> bool {
    n_spins % 4 == 2
}

/// Parses a coupling file: the spin count followed by the N×N matrix,
/// whitespace separated. `#` starts a comment.
pub fn parse_couplings(text: &str, label: &str) -> Result<SpinSystem> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let n: usize = tokens
        .next()
        .ok_or_else(|| Error::InvalidCouplings("empty coupling file".into()))?
        .parse()
        .map_err(|e| Error::InvalidCouplings(format!("bad spin count: {e}")))?;
    let values = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::InvalidCouplings(format!("bad entry `{t}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n * n {
        return Err(Error::InvalidCouplings(format!(
            "expected {} matrix entries for N={n}, found {}",
            n * n,
            values.len()
        )));
    }
    SpinSystem::new(DMatrix::from_row_slice(n, n, &values), label)
}

pub fn read_couplings(path: &Path) -> Result<SpinSystem> {
    let text = std::fs::read_to_string(path)?;
    let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("file");
    parse_couplings(&text, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{build_basis, collective_op, single_spin_op, SpinOpKind};

    fn pair_system(d: f64) -> SpinSystem {
        SpinSystem::new(DMatrix::from_row_slice(2, 2, &[0.0, d, d, 0.0]), "pair").unwrap()
    }

    #[test]
    fn hexagon_coupling_ratios() {
        let s = hexagon_couplings(1.0).unwrap();
        assert!((s.coupling(0, 2) - 0.19245009).abs() < 1e-8);
        assert_eq!(s.coupling(0, 3), 0.125);
        assert_eq!(s.coupling(0, 1), 1.0);
        assert_eq!(s.coupling(0, 5), 1.0);
        let nnn = 1.0 / (3.0 * 3f64.sqrt());
        for i in 0..6 {
            assert_eq!(s.coupling(i, i), 0.0);
            let mut row: Vec<f64> = (0..6).filter(|&j| j != i).map(|j| s.coupling(i, j)).collect();
            row.sort_by(f64::total_cmp);
            let mut want = vec![1.0, 1.0, nnn, nnn, 0.125];
            want.sort_by(f64::total_cmp);
            for (a, b) in row.iter().zip(&want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        let s2 = hexagon_couplings(2.0).unwrap();
        assert!((s2.couplings() - s.couplings() * 2.0).norm() < 1e-15);
        assert!(hexagon_couplings(0.0).is_err());
        assert!(hexagon_couplings(-1.0).is_err());
    }

    #[test]
    fn two_spin_dq_elements() {
        let b = build_basis(2).unwrap();
        let h = dq_hamiltonian(&pair_system(1.0), &b).unwrap();
        let m = h.matrix();
        for r in 0..4 {
            for c in 0..4 {
                let expect = if (r, c) == (3, 0) || (r, c) == (0, 3) { -0.5 } else { 0.0 };
                assert_eq!(m[(r, c)], C64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn dq_changes_m_by_two() {
        let b = build_basis(6).unwrap();
        let h = dq_hamiltonian(&hexagon_couplings(1.0).unwrap(), &b).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                if (b.twice_m(r) - b.twice_m(c)).abs() != 4 {
                    assert_eq!(h.matrix()[(r, c)], C64::new(0.0, 0.0));
                }
            }
        }
        assert!(h.matrix().iter().all(|z| z.im == 0.0));
    }

    /// Term-by-term construction from embedded ladder operators.
    fn dq_by_products(system: &SpinSystem, b: &ZeemanBasis) -> CMatrix {
        let n = system.n_spins();
        let mut h = CMatrix::zeros(b.dim(), b.dim());
        for i in 0..n {
            for j in i + 1..n {
                let pi = single_spin_op(b, i, SpinOpKind::Plus).unwrap().into_matrix();
                let pj = single_spin_op(b, j, SpinOpKind::Plus).unwrap().into_matrix();
                let mi = single_spin_op(b, i, SpinOpKind::Minus).unwrap().into_matrix();
                let mj = single_spin_op(b, j, SpinOpKind::Minus).unwrap().into_matrix();
                h += (&pi * &pj + &mi * &mj) * C64::new(-0.5 * system.coupling(i, j), 0.0);
            }
        }
        h
    }

    #[test]
    fn dq_matches_operator_products() {
        let b = build_basis(6).unwrap();
        let sys = hexagon_couplings(1.0).unwrap();
        let h = dq_hamiltonian(&sys, &b).unwrap();
        let oracle = dq_by_products(&sys, &b);
        assert!((h.matrix().norm() - oracle.norm()).abs() < 1e-12);
        assert!((h.matrix() - oracle).norm() < 1e-12);
        // ‖H‖_F² = 2 · Σ_{i<j} (D_ij/2)² · 2^(N-2) per pair
        let by_hand: f64 = pairs(6)
            .map(|(i, j)| 2.0 * 0.25 * sys.coupling(i, j).powi(2) * 16.0)
            .sum();
        assert!((h.matrix().norm_squared() - by_hand).abs() < 1e-12);
    }

    #[test]
    fn negation() {
        let b = build_basis(6).unwrap();
        let h = dq_hamiltonian(&hexagon_couplings(1.0).unwrap(), &b).unwrap();
        let n = negated(&h);
        assert_eq!((h.matrix() + n.matrix()).norm(), 0.0);
        let mut e1: Vec<f64> = h.matrix().symmetric_eigenvalues().iter().map(|x| -x).collect();
        let mut e2: Vec<f64> = n.matrix().symmetric_eigenvalues().iter().cloned().collect();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn secular_two_spin_matrix() {
        // Explicit 4×4 in the (dd, du, ud, uu) ordering:
        // diag(1/2, -1/2, -1/2, 1/2), flip-flop −1/2 between du and ud.
        let b = build_basis(2).unwrap();
        let h = secular_dipolar_hamiltonian(&pair_system(1.0), &b).unwrap();
        #[rustfmt::skip]
        let explicit = DMatrix::from_row_slice(4, 4, &[
            0.5, 0.0, 0.0, 0.0,
            0.0, -0.5, -0.5, 0.0,
            0.0, -0.5, -0.5, 0.0,
            0.0, 0.0, 0.0, 0.5,
        ]);
        let re = h.matrix().map(|z| z.re);
        assert!((re - &explicit).norm() < 1e-15);
        let mut eig: Vec<f64> = explicit.symmetric_eigenvalues().iter().cloned().collect();
        eig.sort_by(f64::total_cmp);
        let want = [-1.0, 0.0, 0.5, 0.5];
        for (a, b) in eig.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn secular_commutes_with_iz() {
        let b = build_basis(6).unwrap();
        let h = secular_dipolar_hamiltonian(&hexagon_couplings(1.0).unwrap(), &b).unwrap();
        let iz = collective_op(&b, SpinOpKind::Z);
        let c = h.commutator(&iz);
        assert!(c.iter().all(|z| z.norm() < 1e-14));
        assert!(h.matrix().iter().all(|z| z.im.abs() < 1e-14));
    }

    #[test]
    fn secular_spectrum_symmetric_under_m_inversion() {
        let b = build_basis(6).unwrap();
        let h = secular_dipolar_hamiltonian(&hexagon_couplings(1.0).unwrap(), &b).unwrap();
        let block_eigs = |tm: i32| {
            let idx = b.block(tm);
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| h.matrix()[(idx[r], idx[c])].re);
            let mut e: Vec<f64> = sub.symmetric_eigenvalues().iter().cloned().collect();
            e.sort_by(f64::total_cmp);
            e
        };
        for tm in [2, 4, 6] {
            let (p, n) = (block_eigs(tm), block_eigs(-tm));
            assert_eq!(p.len(), n.len());
            for (a, c) in p.iter().zip(&n) {
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        let b = build_basis(3).unwrap();
        assert!(dq_hamiltonian(&pair_system(1.0), &b).is_err());
        assert!(secular_dipolar_hamiltonian(&pair_system(1.0), &b).is_err());
    }

    #[test]
    fn excitability_rule() {
        assert!(homq_excitable(6));
        assert!(!homq_excitable(4));
        assert!(homq_excitable(10));
        assert!(homq_excitable(2));
    }

    #[test]
    fn coupling_file_round_trip() {
        let text = "# hexagon\n3\n0 1 0.5\n1 0 2\n0.5 2 0\n";
        let s = parse_couplings(text, "tri").unwrap();
        assert_eq!(s.n_spins(), 3);
        assert_eq!(s.coupling(1, 2), 2.0);
        assert!(parse_couplings("3\n0 1\n", "short").is_err());
        assert!(parse_couplings("2\n0 1\n2 0\n", "asym").is_err());
        assert!(parse_couplings("", "empty").is_err());
    }
}
