//! Non-unitary steps: gradient dephasing and partial saturation.
//!
//! Saturation is a population rate equation over the eigenstates of the
//! secular dipolar Hamiltonian. Rates follow single-quantum transition
//! strengths weighted by a Gaussian irradiation envelope; states whose
//! transitions all fall outside the envelope keep their population.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::real_symmetric_eigen;
use crate::spin::{collective_op, CMatrix, DensityMatrix, Operator, SpinOpKind, ZeemanBasis, C64};

/// Removes every off-diagonal element, keeping the diagonal exactly.
pub fn crush(rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix::from_diagonal(&rho.diagonal())
}

/// One eigenstate of an m-conserving Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenstate {
    pub energy: f64,
    pub twice_m: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Eigenstate with the higher m (m_lower + 1).
    pub upper: usize,
    pub lower: usize,
    /// E_upper − E_lower.
    pub frequency: f64,
    /// |⟨upper|I_+|lower⟩|².
    pub strength: f64,
}

/// Single-quantum transitions between eigenstates of a secular Hamiltonian.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    pub states: Vec<Eigenstate>,
    /// Eigenvectors in Zeeman coordinates, one column per entry of `states`.
    pub vectors: CMatrix,
    pub transitions: Vec<Transition>,
}

impl TransitionGraph {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Eigenbasis populations ⟨k|ρ|k⟩; the diagonal left after crushing in
    /// the eigenbasis.
    pub fn populations(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        if rho.dim() != self.n_states() {
            return Err(Error::DimensionMismatch { expected: self.n_states(), found: rho.dim() });
        }
        let v = &self.vectors;
        let rot = v.adjoint() * rho.matrix() * v;
        Ok((0..self.n_states()).map(|k| rot[(k, k)].re).collect())
    }

    /// Eigenstate with the largest overlap on a Zeeman basis state.
    pub fn eigenstate_of(&self, zeeman_index: usize) -> usize {
        (0..self.n_states())
            .max_by(|&a, &b| {
                self.vectors[(zeeman_index, a)]
                    .norm_sqr()
                    .total_cmp(&self.vectors[(zeeman_index, b)].norm_sqr())
            })
            .unwrap_or(0)
    }

    pub fn departing(&self, lower: usize) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.lower == lower)
    }

    pub fn arriving(&self, upper: usize) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.upper == upper)
    }

    /// CSV columns: a, b, m_a, m_b, frequency, strength (a = upper state).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["a", "b", "m_a", "m_b", "frequency", "strength"])?;
        for t in &self.transitions {
            out.write_record([
                t.upper.to_string(),
                t.lower.to_string(),
                format!("{}", f64::from(self.states[t.upper].twice_m) / 2.0),
                format!("{}", f64::from(self.states[t.lower].twice_m) / 2.0),
                format!("{:.15e}", t.frequency),
                format!("{:.15e}", t.strength),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Diagonalizes `h_secular` block by block in m and lists every Δm = +1
/// transition with strength above `threshold` (relative to the strongest).
pub fn build_transition_graph(
    h_secular: &Operator,
    basis: &ZeemanBasis,
    threshold: f64,
) -> Result<TransitionGraph> {
    let dim = basis.dim();
    if h_secular.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: h_secular.dim() });
    }
    let h = h_secular.matrix();
    let mut leak = 0.0f64;
    for a in 0..dim {
        for b in 0..dim {
            if basis.twice_m(a) != basis.twice_m(b) {
                leak = leak.max(h[(a, b)].norm());
            }
        }
    }
    if leak > 1e-12 * h.norm().max(1.0) {
        return Err(Error::NotMagnetizationConserving(leak));
    }
    let real = h.iter().all(|z| z.im.abs() <= 1e-14 * h.norm().max(1.0));

    let mut states = Vec::with_capacity(dim);
    let mut vectors = CMatrix::zeros(dim, dim);
    for tm in basis.twice_m_values() {
        let idx = basis.block(tm);
        let k = idx.len();
        let (vals, vecs): (Vec<f64>, CMatrix) = if real {
            let sub = DMatrix::from_fn(k, k, |r, c| h[(idx[r], idx[c])].re);
            let (vals, vecs) = real_symmetric_eigen(&sub);
            (vals, vecs.map(|x| C64::new(x, 0.0)))
        } else {
            let sub = CMatrix::from_fn(k, k, |r, c| h[(idx[r], idx[c])]);
            let e = crate::evolution::diagonalize_matrix(&sub)?;
            (e.eigenvalues, e.eigenvectors)
        };
        for (c, &energy) in vals.iter().enumerate() {
            let col = states.len();
            for (r, &z) in idx.iter().enumerate() {
                vectors[(z, col)] = vecs[(r, c)];
            }
            states.push(Eigenstate { energy, twice_m: tm });
        }
    }

    let ip = collective_op(basis, SpinOpKind::Plus);
    let raised = vectors.adjoint() * ip.matrix() * &vectors;
    let mut candidates = Vec::new();
    for a in 0..dim {
        for b in 0..dim {
            if states[a].twice_m == states[b].twice_m + 2 {
                candidates.push(Transition {
                    upper: a,
                    lower: b,
                    frequency: states[a].energy - states[b].energy,
                    strength: raised[(a, b)].norm_sqr(),
                });
            }
        }
    }
    let max_strength = candidates.iter().map(|t| t.strength).fold(0.0, f64::max);
    let cut = threshold * max_strength;
    let transitions = candidates.into_iter().filter(|t| t.strength > cut).collect();
    Ok(TransitionGraph { states, vectors, transitions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SaturationMode {
    /// Integrate for `duration`.
    Timed,
    /// Run until populations stop changing.
    #[default]
    SteadyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    pub center_frequency: f64,
    /// Standard deviation of the Gaussian envelope.
    pub width_sigma: f64,
    pub rate_scale: f64,
    pub duration: f64,
    pub mode: SaturationMode,
    /// Transitions whose envelope value falls below this fraction of the
    /// peak are not driven.
    pub envelope_cutoff: f64,
}

impl SaturationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width_sigma", self.width_sigma),
            ("rate_scale", self.rate_scale),
            ("duration", self.duration),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.center_frequency.is_finite() {
            return Err(Error::InvalidParameter("center_frequency must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.envelope_cutoff) {
            return Err(Error::InvalidParameter(format!(
                "envelope_cutoff must lie in [0, 1), got {}",
                self.envelope_cutoff
            )));
        }
        Ok(())
    }

    pub fn envelope(&self, frequency: f64) -> f64 {
        let x = (frequency - self.center_frequency) / self.width_sigma;
        (-0.5 * x * x).exp()
    }

    /// Centered on the single transition leaving `drained` (the state whose
    /// excess is to be spread out), with σ a quarter of the distance to the
    /// transition reaching `trapped`.
    pub fn centered_between(graph: &TransitionGraph, drained: usize, trapped: usize) -> Result<Self> {
        let from = strongest(graph.departing(drained)).ok_or_else(|| {
            Error::InvalidParameter(format!("no transition departs eigenstate {drained}"))
        })?;
        let to = strongest(graph.arriving(trapped)).ok_or_else(|| {
            Error::InvalidParameter(format!("no transition reaches eigenstate {trapped}"))
        })?;
        let gap = (from.frequency - to.frequency).abs();
        if gap == 0.0 {
            return Err(Error::InvalidParameter("drained and trapped transitions coincide".into()));
        }
        Ok(Self {
            center_frequency: from.frequency,
            width_sigma: gap / 4.0,
            rate_scale: 1.0,
            duration: 1.0,
            mode: SaturationMode::SteadyState,
            envelope_cutoff: 1e-3,
        })
    }
}

fn strongest<'a>(it: impl Iterator<Item = &'a Transition>) -> Option<&'a Transition> {
    it.max_by(|a, b| a.strength.total_cmp(&b.strength))
}

/// Symmetric rate matrix W_ab over eigenstates.
pub fn rate_matrix(graph: &TransitionGraph, params: &SaturationParams) -> DMatrix<f64> {
    let n = graph.n_states();
    let mut w = DMatrix::zeros(n, n);
    for t in &graph.transitions {
        let env = params.envelope(t.frequency);
        if env < params.envelope_cutoff {
            continue;
        }
        let rate = params.rate_scale * t.strength * env;
        w[(t.upper, t.lower)] += rate;
        w[(t.lower, t.upper)] += rate;
    }
    w
}

/// Integrates dp_a/dt = Σ_b W_ab (p_b − p_a).
pub fn saturate(
    populations: &[f64],
    graph: &TransitionGraph,
    params: &SaturationParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let n = graph.n_states();
    if populations.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: populations.len() });
    }
    let w = rate_matrix(graph, params);
    let mut generator = w.clone();
    for a in 0..n {
        let out: f64 = w.row(a).sum();
        generator[(a, a)] -= out;
    }
    let (rates, modes) = real_symmetric_eigen(&generator);
    let p0 = DVector::from_column_slice(populations);
    let coeffs = modes.transpose() * &p0;
    let propagate = |t: f64| -> DVector<f64> {
        let decayed = DVector::from_iterator(
            n,
            coeffs.iter().zip(&rates).map(|(c, &r)| c * (r.min(0.0) * t).exp()),
        );
        &modes * decayed
    };

    let total0: f64 = populations.iter().sum();
    let mut p = match params.mode {
        SaturationMode::Timed => propagate(params.duration),
        SaturationMode::SteadyState => {
            let tol = 1e-12 * populations.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let mut t = params.duration;
            loop {
                let p = propagate(t);
                let rate = (&generator * &p).amax();
                if rate < tol {
                    break p;
                }
                if t > 1e18 {
                    return Err(Error::Invariant(format!(
                        "saturation did not reach steady state (max rate {rate:.3e})"
                    )));
                }
                t *= 2.0;
            }
        }
    };
    // restore the exact total lost to rounding in the mode expansion
    let drift = (p.sum() - total0) / n as f64;
    p.add_scalar_mut(-drift);
    Ok(p.iter().copied().collect())
}
