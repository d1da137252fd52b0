//! Acceptance criteria for the six-spin hexagon at desk scale.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture
//! --test-threads=1` to see one PASS/FAIL line per criterion.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pseudopure::evolution::{self, diag_pair, time_grid, Observable, Propagator};
use pseudopure::mq::{decompose, intensities, mq_intensity, phase_cycle_decompose};
use pseudopure::pipeline::{local_maxima, locate_maximum, FrequencyConvention, PipelineConfig, PipelineRun, Setup, DOMINANT_FLOOR};
use pseudopure::spectrum::{count_peaks, count_vs_tolerance, linear_response, merge_peaks};
use pseudopure::spin::{cat_diagonal_state, homq_coherence_state, thermal_state, CMatrix, DensityMatrix, Operator, SpinSystem, ZeemanBasis, C64};
use pseudopure::{build_transition_graph, dq_hamiltonian, evolve, hexagon_couplings, run_pipeline, secular_dipolar_hamiltonian};

const TRIALS: usize = 100;

fn hexagon_run() -> &'static PipelineRun {
    static RUN: OnceLock<PipelineRun> = OnceLock::new();
    RUN.get_or_init(|| run_pipeline(&PipelineConfig::default()).expect("default pipeline runs"))
}

fn hexagon_setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        Setup::new(hexagon_couplings(1.0).unwrap(), FrequencyConvention::Cyclic, 1.0).unwrap()
    })
}

fn report(id: &str, pass: bool, detail: String) {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn c01_homq_excitation_maximum() {
    let run = hexagon_run();
    let peak = locate_maximum(&run.sweep, "F6").unwrap();
    let pass = (0.13..=0.16).contains(&peak.value) && (0.963..=0.983).contains(&peak.t);
    report(
        "C1 HOMQ excitation maximum",
        pass,
        format!("6Q fraction max {:.5} at t* = {:.5} (cyclic convention)", peak.value, peak.t),
    );

    // the angular reading of the same couplings, for comparison
    let setup = Setup::new(hexagon_couplings(1.0).unwrap(), FrequencyConvention::Angular, 1.0).unwrap();
    let grid = time_grid(0.0, 2.0, 0.001).unwrap();
    let table = evolution::sweep(
        &thermal_state(&setup.basis),
        &setup.forward,
        &setup.basis,
        &grid,
        &[Observable::MqFraction(6)],
        Default::default(),
    )
    .unwrap();
    let ang = locate_maximum(&table, "F6").unwrap();
    println!(
        "       angular convention: max {:.5} at t = {:.4} (cyclic is the default)",
        ang.value, ang.t
    );
    assert!(pass);
}

#[test]
fn c02_conversion_efficiency() {
    let run = hexagon_run();
    let setup = hexagon_setup();
    let t_star = locate_maximum(&run.sweep, "F6").unwrap().t;
    let homq = homq_coherence_state(&setup.basis);
    let reversed = setup.reverse.evolve(&homq, t_star).unwrap();
    let at_star = diag_pair(&reversed, &setup.basis) / homq.purity();
    let pass = (0.69..=0.75).contains(&at_star) && (0.69..=0.75).contains(&run.report.f_convert);
    report(
        "C2 conversion efficiency",
        pass,
        format!("f_convert {at_star:.5} at t*, {:.5} at t_prep = 0.973", run.report.f_convert),
    );
    assert!(pass);
}

#[test]
fn c03_overall_chain() {
    let r = &hexagon_run().report;
    let product_err = (r.f_overall - r.f_homq * r.f_convert).abs();
    let pass = (0.09..=0.12).contains(&r.f_overall) && product_err < 1e-6;
    report(
        "C3 overall chain",
        pass,
        format!(
            "f_overall {:.5} = {:.5} x {:.5} (product error {product_err:.1e})",
            r.f_overall, r.f_homq, r.f_convert
        ),
    );
    assert!(pass);
}

#[test]
fn c04_diagonal_match_at_maxima() {
    let run = hexagon_run();
    let setup = hexagon_setup();
    let global = locate_maximum(&run.sweep, "F6").unwrap();
    let homq = homq_coherence_state(&setup.basis);
    let mut all_pass = true;
    for m in local_maxima(&run.sweep, "F6").unwrap() {
        if m.value <= 0.5 * global.value {
            continue;
        }
        let rho = setup.reverse.evolve(&homq, m.t).unwrap();
        let i0 = intensities(&rho, &setup.basis).unwrap()[0];
        let pair = diag_pair(&rho, &setup.basis);
        let rel = (i0 - pair).abs() / i0;
        let ok = rel < 0.01;
        all_pass &= ok;
        println!(
            "       maximum t = {:.4} (6Q {:.4}): I0 {:.5}, diagonal pair {:.5}, mismatch {:.2}% {}",
            m.t,
            m.value,
            i0 / 2.0,
            pair / 2.0,
            100.0 * rel,
            if ok { "ok" } else { "exceeds 1%" }
        );
    }
    report(
        "C4 diagonal match at 6Q maxima above half the global maximum",
        all_pass,
        "see per-maximum lines".into(),
    );
    assert!(all_pass, "diagonal-match criterion fails at a secondary maximum");
}

#[test]
fn c05_homq_element_purely_imaginary() {
    let run = hexagon_run();
    let re = run.sweep.column("re_ud").unwrap();
    let worst = re.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm = 96f64.sqrt();
    let pass = worst < 1e-12 * norm;
    report(
        "C5 purely imaginary HOMQ element",
        pass,
        format!("max |Re rho_ud| = {worst:.2e} over {} points (bound {:.2e})", re.len(), 1e-12 * norm),
    );
    assert!(pass);
}

#[test]
fn c06_equilibrium_peak_count() {
    let run = hexagon_run();
    let graph = &run.graph;
    let basis = ZeemanBasis::new(6).unwrap();
    let raw = linear_response(&graph.populations(&thermal_state(&basis)).unwrap(), graph).unwrap();
    let default_count = count_peaks(&merge_peaks(&raw, 1e-6).unwrap(), 1e-8).unwrap();
    if default_count == 76 {
        report("C6 equilibrium spectrum peaks", true, "76 peaks at tolerance 1e-6".into());
        return;
    }
    let tolerances: Vec<f64> = (0..=16).map(|k| 10f64.powf(-8.0 + 0.25 * k as f64)).collect();
    let table = count_vs_tolerance(&raw, &tolerances, 1e-8).unwrap();
    println!("       {} transitions; count vs merge tolerance (units of D12):", raw.lines.len());
    for (tol, n) in &table {
        println!("         {tol:.2e}  {n}");
    }
    let hit = table.iter().any(|&(_, n)| n == 76);
    report(
        "C6 equilibrium spectrum peaks",
        hit,
        format!("{default_count} peaks at default tolerance; 76 reached in [1e-8, 1e-4]: {hit}"),
    );
    assert!(hit, "no merge tolerance in [1e-8, 1e-4] yields 76 peaks");
}

#[test]
fn c07_pseudopure_spectra() {
    let run = hexagon_run();
    let graph = &run.graph;
    let basis = ZeemanBasis::new(6).unwrap();
    let cat = merge_peaks(
        &linear_response(&graph.populations(&cat_diagonal_state(&basis)).unwrap(), graph).unwrap(),
        1e-6,
    )
    .unwrap();
    let lines = cat.significant(1e-8);
    let two = lines.len() == 2
        && (lines[0].frequency + lines[1].frequency).abs() < 1e-8
        && (lines[0].intensity.abs() - lines[1].intensity.abs()).abs() < 1e-8;
    let f_s = run.report.up_transition_frequency;

    let fin = &run.spectra["final"];
    let dominant = fin.significant(DOMINANT_FLOOR);
    let one = dominant.len() == 1
        && f_s > 0.0
        && (dominant[0].frequency - f_s).abs() < 1e-6
        && cat.lines.iter().any(|l| (l.frequency - f_s).abs() < 1e-8);
    let second = fin
        .lines
        .iter()
        .filter(|l| (l.frequency - f_s).abs() > 1e-6)
        .fold(0.0f64, |m, l| m.max(l.intensity.abs()))
        / fin.max_abs_intensity();
    report(
        "C7 pseudopure spectra",
        two && one,
        format!(
            "cat-diagonal: {} lines at {:+.5}/{:+.5}; final: {} dominant at {:+.5}, next {:.2e} of it",
            lines.len(),
            lines.first().map_or(f64::NAN, |l| l.frequency),
            lines.last().map_or(f64::NAN, |l| l.frequency),
            dominant.len(),
            dominant.first().map_or(f64::NAN, |l| l.frequency),
            second
        ),
    );
    assert!(two && one);
}

#[test]
fn c08_saturation_trapping() {
    let r = &hexagon_run().report;
    let drift_ok = r.p_u_drift.abs() < 0.01 * r.deviation_scale;
    let fid_ok = r.pseudopure_fidelity >= 0.9;
    report(
        "C8 saturation trapping",
        drift_ok && fid_ok,
        format!(
            "|dp_u| = {:.2e} (scale {:.4}), fidelity {:.4}",
            r.p_u_drift.abs(),
            r.deviation_scale,
            r.pseudopure_fidelity
        ),
    );
    assert!(drift_ok && fid_ok);
}

fn random_hermitian_op(dim: usize, rng: &mut ChaCha8Rng) -> Operator {
    Operator::hermitian(DensityMatrix::random(dim, rng).matrix().clone()).unwrap()
}

#[test]
fn c09_oracle_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_cycle = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut worst_round = 0.0f64;
    let mut worst_semi = 0.0f64;
    let mut worst_rot = 0.0f64;
    for _ in 0..TRIALS {
        let n = rng.gen_range(2..=6);
        let basis = ZeemanBasis::new(n).unwrap();
        let dim = basis.dim();
        let rho = DensityMatrix::random(dim, &mut rng);

        let direct = decompose(&rho, &basis).unwrap();
        let k = rng.gen_range(2 * n + 1..=4 * n + 4);
        let cycled = phase_cycle_decompose(&rho, &basis, k).unwrap();
        for order in direct.orders() {
            let d = (direct.component(order).unwrap() - cycled.component(order).unwrap()).norm();
            worst_cycle = worst_cycle.max(d);
        }

        let total: f64 = (0..=n).map(|q| mq_intensity(&direct, q).unwrap()).sum();
        worst_sum = worst_sum.max((total - rho.purity()).abs());

        let h = random_hermitian_op(dim, &mut rng);
        let prop = Propagator::new(&h).unwrap();
        let (t1, t2) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let fwd = prop.evolve(&rho, t1).unwrap();
        let back = prop.evolve(&fwd, -t1).unwrap();
        worst_round = worst_round.max((back.matrix() - rho.matrix()).norm());
        let joint = prop.evolve(&rho, t1 + t2).unwrap();
        let split = prop.evolve(&fwd, t2).unwrap();
        worst_semi = worst_semi.max((joint.matrix() - split.matrix()).norm());

        // two spins: on {dd, uu} the state rotates at angular rate D
        let d = rng.gen_range(0.1..3.0);
        let t = rng.gen_range(-5.0..5.0);
        let pair = SpinSystem::new(DMatrix::from_row_slice(2, 2, &[0.0, d, d, 0.0]), "pair").unwrap();
        let b2 = ZeemanBasis::new(2).unwrap();
        let out = evolve(&thermal_state(&b2), &dq_hamiltonian(&pair, &b2).unwrap(), t).unwrap();
        let (c, s) = ((d * t).cos(), (d * t).sin());
        let mut oracle = CMatrix::zeros(4, 4);
        oracle[(3, 3)] = C64::new(c, 0.0);
        oracle[(0, 0)] = C64::new(-c, 0.0);
        oracle[(3, 0)] = C64::new(0.0, -s);
        oracle[(0, 3)] = C64::new(0.0, s);
        worst_rot = worst_rot.max((out.matrix() - oracle).norm());
    }
    let checks = [
        ("phase-cycled vs direct decomposition", worst_cycle),
        ("sum of MQ intensities vs Tr{rho^2}", worst_sum),
        ("evolve round trip", worst_round),
        ("evolve semigroup", worst_semi),
        ("two-spin analytic rotation", worst_rot),
    ];
    let mut all = true;
    for (name, err) in checks {
        let ok = err < 1e-10;
        all &= ok;
        report(&format!("C9 {name}"), ok, format!("worst error {err:.2e} over {TRIALS} trials"));
    }
    assert!(all);
}

#[test]
fn c10_peak_count_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_margin = i64::MIN;
    let mut all = true;
    for _ in 0..TRIALS {
        let n = rng.gen_range(2..=6);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = rng.gen_range(-1.0..1.0);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        let system = SpinSystem::new(d, "random").unwrap();
        let basis = ZeemanBasis::new(n).unwrap();
        let h = secular_dipolar_hamiltonian(&system, &basis).unwrap();
        let graph = build_transition_graph(&h, &basis, 1e-10).unwrap();
        let mut ground = vec![0.0; basis.dim()];
        ground[basis.up_index()] = 1.0;
        let pops = graph.populations(&DensityMatrix::from_diagonal(&ground)).unwrap();
        let spec = merge_peaks(&linear_response(&pops, &graph).unwrap(), 1e-6).unwrap();
        let count = count_peaks(&spec, 1e-8).unwrap();
        worst_margin = worst_margin.max(count as i64 - n as i64);
        all &= count <= n;
    }
    report(
        "C10 pseudopure ground-state peak bound",
        all,
        format!("max(count - N) = {worst_margin} over {TRIALS} random clusters, N in 2..=6"),
    );
    assert!(all);
}

#[test]
fn c11_peak_enhancement_soft_check() {
    let r = &hexagon_run().report;
    report(
        "C11 (soft, non-gating) peak enhancement",
        true,
        format!(
            "simulated |u> peak ratio final/equilibrium = {:.3}; experiment reports about 1.8",
            r.peak_enhancement
        ),
    );
    assert!(r.peak_enhancement.is_finite());
}
