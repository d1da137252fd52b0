//! End-to-end preparation run: MQ excitation from thermal equilibrium,
//! highest-order filter, time reversal, gradient crush and partial
//! saturation, with the efficiencies and spectra of every stage.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{self, Observable, Propagator, SweepTable};
use crate::hamiltonians::{
    dq_hamiltonian, hexagon_couplings, homq_excitable, negated, read_couplings,
    secular_dipolar_hamiltonian,
};
use crate::mq::{filter_order, intensities};
use crate::nonunitary::{build_transition_graph, saturate, SaturationMode, SaturationParams, TransitionGraph};
use crate::par::ExecMode;
use crate::spectrum::{count_peaks, linear_response, merge_peaks, StickSpectrum};
use crate::spin::{
    homq_coherence_state, thermal_state, CMatrix, Convention, DensityMatrix, SpinSystem,
    ZeemanBasis, C64,
};

/// Relative strength threshold separating allowed transitions from zeros.
pub const TRANSITION_THRESHOLD: f64 = 1e-10;

/// Floor (relative to the strongest line) for counting dominant peaks.
pub const DOMINANT_FLOOR: f64 = 0.1;

/// How couplings translate into evolution rates. With `Cyclic` the
/// couplings are frequencies in cycles per unit time, so the Hamiltonian
/// is multiplied by 2π before propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyConvention {
    Angular,
    #[default]
    Cyclic,
}

impl FrequencyConvention {
    pub fn scale(self) -> f64 {
        match self {
            FrequencyConvention::Angular => 1.0,
            FrequencyConvention::Cyclic => 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSource {
    Hexagon { d12: f64 },
    File { path: PathBuf },
}

impl Default for SystemSource {
    fn default() -> Self {
        SystemSource::Hexagon { d12: 1.0 }
    }
}

impl SystemSource {
    pub fn load(&self) -> Result<SpinSystem> {
        match self {
            SystemSource::Hexagon { d12 } => hexagon_couplings(*d12),
            SystemSource::File { path } => read_couplings(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRequest {
    pub t_max: f64,
    pub t_step: f64,
    /// Extra observables recorded on the thermal-start sweep.
    pub observables: Vec<String>,
}

impl Default for SweepRequest {
    fn default() -> Self {
        Self { t_max: 2.0, t_step: 0.001, observables: Vec::new() }
    }
}

/// Optional overrides of the default saturation geometry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationOverrides {
    pub center_frequency: Option<f64>,
    pub width_sigma: Option<f64>,
    pub rate_scale: Option<f64>,
    pub duration: Option<f64>,
    pub mode: Option<SaturationMode>,
    pub envelope_cutoff: Option<f64>,
}

impl SaturationOverrides {
    fn apply(&self, mut p: SaturationParams) -> SaturationParams {
        if let Some(v) = self.center_frequency {
            p.center_frequency = v;
        }
        if let Some(v) = self.width_sigma {
            p.width_sigma = v;
        }
        if let Some(v) = self.rate_scale {
            p.rate_scale = v;
        }
        if let Some(v) = self.duration {
            p.duration = v;
        }
        if let Some(v) = self.mode {
            p.mode = v;
        }
        if let Some(v) = self.envelope_cutoff {
            p.envelope_cutoff = v;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub system: SystemSource,
    pub convention: FrequencyConvention,
    /// Duration of both the excitation and the reversal period, in 1/D12.
    pub t_prep: f64,
    /// Coherence order kept by the filter; defaults to the cluster size.
    pub filter_order: Option<usize>,
    pub sweep: SweepRequest,
    pub saturation: SaturationOverrides,
    pub merge_tolerance: f64,
    pub intensity_floor: f64,
    /// Prefactor on the secular dipolar Hamiltonian (frequency axis only).
    pub secular_scale: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            system: SystemSource::default(),
            convention: FrequencyConvention::default(),
            t_prep: 0.973,
            filter_order: None,
            sweep: SweepRequest::default(),
            saturation: SaturationOverrides::default(),
            merge_tolerance: crate::spectrum::DEFAULT_MERGE_TOLERANCE,
            intensity_floor: crate::spectrum::DEFAULT_INTENSITY_FLOOR,
            secular_scale: 1.0,
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        // relative coupling files resolve against the config's directory
        if let SystemSource::File { path: p } = &mut cfg.system {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self, n_spins: usize) -> Result<()> {
        if !(self.t_prep > 0.0 && self.t_prep.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_prep must be positive, got {}", self.t_prep)));
        }
        if let Some(n) = self.filter_order {
            if n == 0 || n > n_spins {
                return Err(Error::OrderOutOfRange { order: n as i64, max: n_spins });
            }
        }
        if !(self.merge_tolerance > 0.0) || !(self.intensity_floor >= 0.0) {
            return Err(Error::InvalidParameter("merge_tolerance and intensity_floor must be positive".into()));
        }
        if !(self.secular_scale > 0.0) {
            return Err(Error::InvalidParameter("secular_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Global maximum of a sweep column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub t: f64,
    pub value: f64,
    /// False when the maximum sits on a grid endpoint.
    pub interior: bool,
    pub index: usize,
}

/// Global maximum over the grid, refined by the parabola through the
/// bracketing samples when it is interior.
pub fn locate_maximum(table: &SweepTable, observable: &str) -> Result<Maximum> {
    let col = table.column(observable)?;
    let index = col
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidParameter("empty sweep".into()))?;
    Ok(refine(&table.times, &col, index))
}

fn refine(times: &[f64], col: &[f64], index: usize) -> Maximum {
    if index == 0 || index + 1 == col.len() {
        return Maximum { t: times[index], value: col[index], interior: false, index };
    }
    let (x0, x1, x2) = (times[index - 1], times[index], times[index + 1]);
    let (y0, y1, y2) = (col[index - 1], col[index], col[index + 1]);
    // vertex of the interpolating parabola
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let curvature = (d1 - d0) / (x2 - x0);
    if curvature >= 0.0 {
        return Maximum { t: x1, value: y1, interior: true, index };
    }
    let slope_mid = d0 + curvature * (x1 - x0);
    let t = x1 - slope_mid / (2.0 * curvature);
    let t = t.clamp(x0, x2);
    let value = y0 + d0 * (t - x0) + curvature * (t - x0) * (t - x1);
    Maximum { t, value, interior: true, index }
}

/// Every strict interior local maximum of a column, refined.
pub fn local_maxima(table: &SweepTable, observable: &str) -> Result<Vec<Maximum>> {
    let col = table.column(observable)?;
    Ok((1..col.len().saturating_sub(1))
        .filter(|&i| col[i] > col[i - 1] && col[i] >= col[i + 1])
        .map(|i| refine(&table.times, &col, i))
        .collect())
}

/// Snapshot of the state after one pipeline step.
#[derive(Debug, Clone)]
pub struct Stage {
    pub name: &'static str,
    pub rho: DensityMatrix,
    pub purity: f64,
    pub intensities: Vec<f64>,
    /// Populations over the secular eigenstates.
    pub populations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_spins: usize,
    pub homq_excitable: bool,
    pub convention: FrequencyConvention,
    pub t_prep: f64,
    pub t_star: f64,
    pub t_star_value: f64,
    pub t_star_interior: bool,
    pub f_homq: f64,
    pub f_convert: f64,
    pub f_overall: f64,
    pub p_u_before: f64,
    pub p_u_after: f64,
    pub p_u_drift: f64,
    pub deviation_scale: f64,
    pub pseudopure_fidelity: f64,
    pub peak_count_equilibrium: usize,
    pub peak_count_reversed: usize,
    pub peak_count_final: usize,
    pub dominant_peaks_reversed: usize,
    pub dominant_peaks_final: usize,
    pub up_transition_frequency: f64,
    pub down_transition_frequency: f64,
    pub final_up_peak_intensity: f64,
    pub equilibrium_up_peak_intensity: f64,
    pub peak_enhancement: f64,
}

/// Formats with at least 12 significant digits, without exponent.
fn decimal(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0.0".into() } else { "null".into() };
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (14 - exp).clamp(1, 340) as usize;
    format!("{x:.decimals$}")
}

impl PipelineReport {
    /// Flat JSON object; numbers printed in decimal with ≥ 12 significant digits.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let map = value.as_object().expect("report is an object");
        let mut out = String::from("{\n");
        let n = map.len();
        for (k, (key, v)) in map.iter().enumerate() {
            let rendered = match v {
                serde_json::Value::Number(num) if num.is_f64() => decimal(num.as_f64().unwrap()),
                other => other.to_string(),
            };
            let _ = write!(out, "  {}: {}", serde_json::Value::String(key.clone()), rendered);
            out.push_str(if k + 1 < n { ",\n" } else { "\n" });
        }
        out.push('}');
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    /// Thermal-start columns (`F<N>`, `re_ud`, extras) joined with
    /// HOMQ-start columns under reversal (`F0_homq`, `diag_pair_frac_homq`).
    pub sweep: SweepTable,
    pub stages: Vec<Stage>,
    pub graph: TransitionGraph,
    pub spectra: BTreeMap<&'static str, StickSpectrum>,
}

/// Shared objects for one spin system.
pub struct Setup {
    pub system: SpinSystem,
    pub basis: ZeemanBasis,
    /// Evolution Hamiltonian including the convention factor.
    pub forward: Propagator,
    pub reverse: Propagator,
    pub graph: TransitionGraph,
}

impl Setup {
    pub fn new(system: SpinSystem, convention: FrequencyConvention, secular_scale: f64) -> Result<Self> {
        let basis = ZeemanBasis::new(system.n_spins())?;
        let h = dq_hamiltonian(&system, &basis)?.scaled(convention.scale());
        let forward = Propagator::new(&h)?;
        let reverse = Propagator::new(&negated(&h))?;
        let secular = secular_dipolar_hamiltonian(&system.scaled(secular_scale), &basis)?;
        let graph = build_transition_graph(&secular, &basis, TRANSITION_THRESHOLD)?;
        Ok(Self { system, basis, forward, reverse, graph })
    }
}

/// Pearson correlation of `x` with the indicator of state `k`.
pub fn indicator_correlation(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ind_mean = 1.0 / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_i = 0.0;
    for (j, &v) in x.iter().enumerate() {
        let i = if j == k { 1.0 } else { 0.0 } - ind_mean;
        let dx = v - mean;
        cov += dx * i;
        var_x += dx * dx;
        var_i += i * i;
    }
    if var_x == 0.0 {
        return 0.0;
    }
    cov / (var_x.sqrt() * var_i.sqrt())
}

fn eigen_diagonal(graph: &TransitionGraph, pops: &[f64]) -> DensityMatrix {
    let v = &graph.vectors;
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        pops.len(),
        pops.iter().map(|&p| C64::new(p, 0.0)),
    ));
    DensityMatrix::from_trusted(v * d * v.adjoint(), Convention::Deviation)
}

fn stage(name: &'static str, rho: DensityMatrix, setup: &Setup) -> Result<Stage> {
    let intensities = intensities(&rho, &setup.basis)?;
    let populations = setup.graph.populations(&rho)?;
    Ok(Stage { name, purity: rho.purity(), intensities, populations, rho })
}

fn spectrum_of(pops: &[f64], graph: &TransitionGraph, tol: f64) -> Result<StickSpectrum> {
    merge_peaks(&linear_response(pops, graph)?, tol)
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Invariant(what()))
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    run_pipeline_with(config, ExecMode::default())
}

pub fn run_pipeline_with(config: &PipelineConfig, mode: ExecMode) -> Result<PipelineRun> {
    let system = config.system.load()?;
    let n = system.n_spins();
    config.validate(n)?;
    if !homq_excitable(n) {
        log::warn!("{n}-spin cluster: order-{n} coherence is not excited by the double-quantum Hamiltonian");
    }
    let setup = Setup::new(system, config.convention, config.secular_scale)?;
    let basis = &setup.basis;
    let graph = &setup.graph;
    let order = config.filter_order.unwrap_or(n);

    // Excitation sweep from equilibrium and the reversal sweep from the
    // ideal HOMQ state share one grid.
    let grid = evolution::time_grid(0.0, config.sweep.t_max, config.sweep.t_step)?;
    let mut thermal_obs = vec![Observable::MqFraction(order), Observable::HomqReal, Observable::HomqImag];
    for name in &config.sweep.observables {
        let obs: Observable = name.parse()?;
        if !thermal_obs.iter().any(|o| o.name() == obs.name()) {
            thermal_obs.push(obs);
        }
    }
    let rho0 = thermal_state(basis);
    let homq0 = homq_coherence_state(basis);
    let thermal_sweep = evolution::sweep(&rho0, &setup.forward, basis, &grid, &thermal_obs, mode)?;
    let homq_sweep = evolution::sweep(
        &homq0,
        &setup.reverse,
        basis,
        &grid,
        &[Observable::MqFraction(0), Observable::DiagPairFraction],
        mode,
    )?;
    let sweep = thermal_sweep.join(homq_sweep, "_homq")?;
    let peak = locate_maximum(&sweep, &format!("F{order}"))?;

    // (1)-(3)
    let norm0 = rho0.purity();
    let excited = setup.forward.evolve(&rho0, config.t_prep)?;
    let filtered = filter_order(&excited, basis, order)?;
    let reversed = setup.reverse.evolve(&filtered, config.t_prep)?;

    let pair = evolution::diag_pair(&reversed, basis);
    let f_homq = filtered.purity() / norm0;
    let f_convert = if filtered.purity() > 0.0 { pair / filtered.purity() } else { 0.0 };
    let f_overall = pair / norm0;

    // (4) crush in the secular eigenbasis, then saturate
    let u = graph.eigenstate_of(basis.up_index());
    let d = graph.eigenstate_of(basis.down_index());
    let reversed_pops = graph.populations(&reversed)?;
    let crushed = eigen_diagonal(graph, &reversed_pops);
    let params = config.saturation.apply(SaturationParams::centered_between(graph, d, u)?);
    let saturated_pops = saturate(&reversed_pops, graph, &params)?;
    let saturated = eigen_diagonal(graph, &saturated_pops);

    let stages = vec![
        stage("thermal", rho0.clone(), &setup)?,
        stage("excited", excited, &setup)?,
        stage("filtered", filtered, &setup)?,
        stage("reversed", reversed, &setup)?,
        stage("crushed", crushed, &setup)?,
        stage("saturated", saturated, &setup)?,
    ];
    let purity = |k: usize| stages[k].purity;
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
    check(rel(purity(0), purity(1)), || "excitation changed Tr{ρ²}".into())?;
    check(rel(purity(2), purity(3)), || "reversal changed Tr{ρ²}".into())?;
    for k in 2..stages.len() {
        check(purity(k) <= purity(k - 1) * (1.0 + 1e-9), || {
            format!("Tr{{ρ²}} increased at stage {}", stages[k].name)
        })?;
    }
    for (name, f) in [("f_homq", f_homq), ("f_convert", f_convert), ("f_overall", f_overall)] {
        check((-1e-12..=1.0 + 1e-9).contains(&f), || format!("{name} = {f} outside [0, 1]"))?;
    }

    let eq_pops = graph.populations(&rho0)?;
    let tol = config.merge_tolerance;
    let mut spectra = BTreeMap::new();
    spectra.insert("equilibrium", spectrum_of(&eq_pops, graph, tol)?);
    spectra.insert("reversed", spectrum_of(&reversed_pops, graph, tol)?);
    spectra.insert("final", spectrum_of(&saturated_pops, graph, tol)?);
    let floor = config.intensity_floor;

    let up_t = graph
        .arriving(u)
        .max_by(|a, b| a.strength.total_cmp(&b.strength))
        .copied()
        .ok_or_else(|| Error::Invariant("no transition reaches |u⟩".into()))?;
    let down_t = graph
        .departing(d)
        .max_by(|a, b| a.strength.total_cmp(&b.strength))
        .copied()
        .ok_or_else(|| Error::Invariant("no transition leaves |d⟩".into()))?;
    let line_at = |name: &str, f: f64| {
        spectra[name].line_near(f, tol.max(1e-9)).map(|l| l.intensity).unwrap_or(0.0)
    };
    let final_up = line_at("final", up_t.frequency);
    let eq_up = line_at("equilibrium", up_t.frequency);

    let deviation_scale = reversed_pops.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let report = PipelineReport {
        n_spins: n,
        homq_excitable: homq_excitable(n),
        convention: config.convention,
        t_prep: config.t_prep,
        t_star: peak.t,
        t_star_value: peak.value,
        t_star_interior: peak.interior,
        f_homq,
        f_convert,
        f_overall,
        p_u_before: reversed_pops[u],
        p_u_after: saturated_pops[u],
        p_u_drift: saturated_pops[u] - reversed_pops[u],
        deviation_scale,
        pseudopure_fidelity: indicator_correlation(&saturated_pops, u),
        peak_count_equilibrium: count_peaks(&spectra["equilibrium"], floor)?,
        peak_count_reversed: count_peaks(&spectra["reversed"], floor)?,
        peak_count_final: count_peaks(&spectra["final"], floor)?,
        dominant_peaks_reversed: count_peaks(&spectra["reversed"], DOMINANT_FLOOR)?,
        dominant_peaks_final: count_peaks(&spectra["final"], DOMINANT_FLOOR)?,
        up_transition_frequency: up_t.frequency,
        down_transition_frequency: down_t.frequency,
        final_up_peak_intensity: final_up,
        equilibrium_up_peak_intensity: eq_up,
        peak_enhancement: if eq_up != 0.0 { final_up / eq_up } else { 0.0 },
    };
    check((-1.0 - 1e-12..=1.0 + 1e-12).contains(&report.pseudopure_fidelity), || {
        "fidelity outside [-1, 1]".into()
    })?;

    Ok(PipelineRun { report, sweep, stages, graph: setup.graph.clone(), spectra })
}

impl PipelineRun {
    /// Writes report.json, sweep.csv, stages.csv, populations.csv,
    /// transitions.csv and spectrum_<stage>.csv into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        self.sweep.save_csv(&dir.join("sweep.csv"))?;
        self.graph.save_csv(&dir.join("transitions.csv"))?;
        for (name, s) in &self.spectra {
            s.save_csv(&dir.join(format!("spectrum_{name}.csv")))?;
        }

        let mut w = csv::Writer::from_path(dir.join("stages.csv"))?;
        let n = self.report.n_spins;
        let mut header = vec!["stage".to_string(), "purity".to_string()];
        header.extend((0..=n).map(|k| format!("I{k}")));
        w.write_record(&header)?;
        for s in &self.stages {
            let mut rec = vec![s.name.to_string(), format!("{:.15e}", s.purity)];
            rec.extend(s.intensities.iter().map(|v| format!("{v:.15e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("populations.csv"))?;
        let mut header = vec!["state".to_string(), "m".to_string(), "energy".to_string()];
        header.extend(self.stages.iter().map(|s| s.name.to_string()));
        w.write_record(&header)?;
        for (k, st) in self.graph.states.iter().enumerate() {
            let mut rec = vec![
                k.to_string(),
                format!("{}", f64::from(st.twice_m) / 2.0),
                format!("{:.15e}", st.energy),
            ];
            rec.extend(self.stages.iter().map(|s| format!("{:.15e}", s.populations[k])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
