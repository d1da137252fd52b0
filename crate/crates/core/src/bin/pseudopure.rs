use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pseudopure::evolution::{self, Observable, Propagator};
use pseudopure::hamiltonians::{dq_hamiltonian, secular_dipolar_hamiltonian};
use pseudopure::pipeline::{FrequencyConvention, PipelineConfig, SystemSource, TRANSITION_THRESHOLD};
use pseudopure::spectrum::{self, broaden, count_peaks, linear_response, merge_peaks};
use pseudopure::spin::{cat_diagonal_state, homq_coherence_state, thermal_state, DensityMatrix, ZeemanBasis};
use pseudopure::{build_transition_graph, decompose, phase_cycle_decompose, Error, ExecMode};

#[derive(Parser)]
#[command(name = "pseudopure", version, about = "Multiple-quantum pseudopure state preparation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time dependence of MQ intensities and populations.
    Sweep(SweepArgs),
    /// Full preparation run driven by a TOML config.
    Pipeline(PipelineArgs),
    /// Linear-response spectrum of a diagonal state.
    Spectrum(SpectrumArgs),
    /// Cross-check the phase-cycled decomposition against the direct one.
    FilterCheck(FilterCheckArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// `hexagon`, or `file PATH` for a coupling matrix file.
    #[arg(long, num_args = 1..=2, value_names = ["KIND", "PATH"], default_values = ["hexagon"])]
    system: Vec<String>,
    /// Nearest-neighbour coupling for the hexagon.
    #[arg(long, default_value_t = 1.0)]
    d12: f64,
}

impl SystemArgs {
    fn source(&self) -> anyhow::Result<SystemSource> {
        match self.system.as_slice() {
            [k] if k == "hexagon" => Ok(SystemSource::Hexagon { d12: self.d12 }),
            [k, p] if k == "file" => Ok(SystemSource::File { path: PathBuf::from(p) }),
            other => bail!("--system expects `hexagon` or `file PATH`, got {other:?}"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Initial {
    Thermal,
    Homq,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Cyclic,
    Angular,
}

impl From<ConventionArg> for FrequencyConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Cyclic => FrequencyConvention::Cyclic,
            ConventionArg::Angular => FrequencyConvention::Angular,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value_t = 2.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.001)]
    t_step: f64,
    /// Comma-separated: I<n>, F<n>, diag_pair, diag_pair_frac, p<index>, re_ud, im_ud.
    #[arg(long, value_delimiter = ',')]
    observables: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "thermal")]
    initial: Initial,
    /// Evolve under the negated Hamiltonian.
    #[arg(long)]
    reverse: bool,
    #[arg(long, value_enum, default_value = "cyclic")]
    convention: ConventionArg,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// `thermal`, `cat-diag`, or `pseudopure-file PATH` (Zeeman-basis diagonal).
    #[arg(long, num_args = 1..=2, value_names = ["STATE", "PATH"], default_values = ["thermal"])]
    state: Vec<String>,
    #[arg(long, default_value_t = 0.02)]
    linewidth: f64,
    #[arg(long, default_value_t = spectrum::DEFAULT_MERGE_TOLERANCE)]
    merge_tol: f64,
    #[arg(long, default_value_t = spectrum::DEFAULT_INTENSITY_FLOOR)]
    floor: f64,
    #[arg(long, default_value_t = 4001)]
    points: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to 2N + 2.
    #[arg(long)]
    k_steps: Option<usize>,
    #[arg(long, default_value_t = 6)]
    n_spins: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err.downcast_ref::<Error>().is_some_and(Error::is_numerical);
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::FilterCheck(a) => cmd_filter_check(a),
    }
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let system = a.system.source()?.load()?;
    let basis = ZeemanBasis::new(system.n_spins())?;
    let n = basis.n_spins();
    let observables: Vec<Observable> = match &a.observables {
        Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
        None => {
            let mut obs = Observable::all_intensities(n);
            obs.push(Observable::MqFraction(n));
            obs.push(Observable::DiagPair);
            obs
        }
    };
    let convention: FrequencyConvention = a.convention.into();
    let mut h = dq_hamiltonian(&system, &basis)?.scaled(convention.scale());
    if a.reverse {
        h = pseudopure::negated(&h);
    }
    let rho0 = match a.initial {
        Initial::Thermal => thermal_state(&basis),
        Initial::Homq => homq_coherence_state(&basis),
    };
    let grid = evolution::time_grid(0.0, a.t_max, a.t_step)?;
    let mode = if a.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    let table = evolution::sweep(&rho0, &Propagator::new(&h)?, &basis, &grid, &observables, mode)?;
    std::fs::create_dir_all(&a.out)?;
    let path = a.out.join("sweep.csv");
    table.save_csv(&path)?;
    println!("wrote {} rows to {}", table.times.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_pipeline(a: PipelineArgs) -> anyhow::Result<ExitCode> {
    let mut config = match &a.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = a.out {
        config.out_dir = Some(out);
    }
    let out = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("pipeline-out"));
    let run = pseudopure::run_pipeline(&config)?;
    run.write_outputs(&out)?;
    let r = &run.report;
    println!("t*            {:.6}  (6Q fraction {:.6})", r.t_star, r.t_star_value);
    println!("f_homq        {:.6}", r.f_homq);
    println!("f_convert     {:.6}", r.f_convert);
    println!("f_overall     {:.6}", r.f_overall);
    println!("p_u drift     {:.3e}", r.p_u_drift);
    println!("fidelity      {:.6}", r.pseudopure_fidelity);
    println!(
        "peaks         equilibrium {}, reversed {}, final {}",
        r.peak_count_equilibrium, r.peak_count_reversed, r.peak_count_final
    );
    println!(
        "dominant      reversed {}, final {}",
        r.dominant_peaks_reversed, r.dominant_peaks_final
    );
    println!("outputs in    {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn read_diagonal(path: &Path, dim: usize) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let values = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad population `{t}`")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if values.len() != dim {
        bail!("expected {dim} populations, found {}", values.len());
    }
    Ok(values)
}

fn cmd_spectrum(a: SpectrumArgs) -> anyhow::Result<ExitCode> {
    let system = a.system.source()?.load()?;
    let basis = ZeemanBasis::new(system.n_spins())?;
    let rho = match a.state.as_slice() {
        [s] if s == "thermal" => thermal_state(&basis),
        [s] if s == "cat-diag" => cat_diagonal_state(&basis),
        [s, p] if s == "pseudopure-file" => {
            DensityMatrix::from_diagonal(&read_diagonal(Path::new(p), basis.dim())?)
        }
        other => bail!("--state expects thermal, cat-diag or `pseudopure-file PATH`, got {other:?}"),
    };
    let h = secular_dipolar_hamiltonian(&system, &basis)?;
    let graph = build_transition_graph(&h, &basis, TRANSITION_THRESHOLD)?;
    let pops = graph.populations(&rho)?;
    let sticks = merge_peaks(&linear_response(&pops, &graph)?, a.merge_tol)?;
    let peaks = count_peaks(&sticks, a.floor)?;
    let grid = spectrum::frequency_grid(&sticks, 10.0 * a.linewidth, a.points);
    let curve = broaden(&sticks, a.linewidth, &grid)?;

    std::fs::create_dir_all(&a.out)?;
    sticks.save_csv(&a.out.join("sticks.csv"))?;
    spectrum::write_curve_csv(&grid, &curve, std::fs::File::create(a.out.join("broadened.csv"))?)?;
    println!("{peaks} peaks above floor {:.1e}; outputs in {}", a.floor, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_filter_check(a: FilterCheckArgs) -> anyhow::Result<ExitCode> {
    let basis = ZeemanBasis::new(a.n_spins)?;
    let k = a.k_steps.unwrap_or(2 * a.n_spins + 2);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst = 0.0f64;
    for _ in 0..a.trials {
        let rho = DensityMatrix::random(basis.dim(), &mut rng);
        let direct = decompose(&rho, &basis)?;
        let cycled = phase_cycle_decompose(&rho, &basis, k)?;
        for n in direct.orders() {
            let diff = (direct.component(n)? - cycled.component(n)?).norm();
            worst = worst.max(diff);
        }
    }
    println!("{} trials, K = {k}: max component deviation {worst:.3e}", a.trials);
    if worst > a.tol {
        eprintln!("mismatch exceeds tolerance {:.1e}", a.tol);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
