//! Command-line front end: loads an INI-style scenario file, runs one of
//! the packaged experiments, and writes a CSV. Diagnostics go to stderr;
//! only data goes to the output file.
//!
//! Exit codes: 0 on success, 1 on runtime or numerical failure, 2 on
//! usage or configuration errors.

use clap::{Args, Parser, Subcommand};
use mcprobe::config::{ConfigFile, LoadedScenario};
use mcprobe::detection::{
    ber_monte_carlo, build_isi_table, default_gamma_range, sampling_time, threshold_sweep,
    write_sweep_csv, BerResult,
};
use mcprobe::numerics::RngStream;
use mcprobe::oracle::fig1_experiment;
use mcprobe::scenario::{ProbeDeployment, ScenarioConfig, Species};
use mcprobe::solver::{run, ReleaseSchedule, Trace};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// RNG stream ids reserved per purpose, so one user seed cannot alias
/// Monte-Carlo draws with stochastic-simulation draws.
const STREAM_MONTE_CARLO: u64 = 0x4d43_0001;
const STREAM_SSA: u64 = 0x5353_0001;

#[derive(Parser)]
#[command(
    name = "mcprobe",
    version,
    about = "Reaction-diffusion simulation and detection analysis for probe-based molecular communication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single transmitted bit 1 and write the receiver trace.
    Simulate(RunArgs),
    /// Uniform-field validation: PDE solver vs ODE vs stochastic ensemble.
    Fig1(RunArgs),
    /// Receiver traces for four (D_B, N_B) probe variants plus the
    /// direct-detection baseline.
    Fig2(RunArgs),
    /// Bit error rate at the swept-optimal threshold.
    Ber(RunArgs),
    /// Bit error rate across the full threshold range.
    Sweep(RunArgs),
    /// Oracle comparison using the configured reaction and the [oracle]
    /// section's initial concentrations.
    OracleCompare(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Fig1(a)
            | Command::Fig2(a)
            | Command::Ber(a)
            | Command::Sweep(a)
            | Command::OracleCompare(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fig1(_) => "fig1",
            Command::Fig2(_) => "fig2",
            Command::Ber(_) => "ber",
            Command::Sweep(_) => "sweep",
            Command::OracleCompare(_) => "oracle-compare",
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration file (INI-style).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; defaults to <subcommand>.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo trial count.
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    /// Override a config key before validation (repeatable),
    /// e.g. --set delta_t=5e-3 or --set tx.z=4e-5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum CliError {
    /// Usage or configuration problem; exit code 2.
    Usage(String),
    /// Runtime or numerical failure; exit code 1.
    Runtime(String),
}

impl From<mcprobe::Error> for CliError {
    fn from(err: mcprobe::Error) -> Self {
        use mcprobe::Error as E;
        match err {
            E::Config(_) | E::Validation(_) | E::InvalidArgument(_) | E::Grid(_) => {
                CliError::Usage(err.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {err}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let loaded = load(args)?;
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", command.name())));

    match command {
        Command::Simulate(_) => simulate(&loaded, &out_path),
        Command::Fig1(_) => fig1(&loaded, args, &out_path),
        Command::Fig2(_) => fig2(&loaded, &out_path),
        Command::Ber(_) => ber_or_sweep(&loaded, args, &out_path, true),
        Command::Sweep(_) => ber_or_sweep(&loaded, args, &out_path, false),
        Command::OracleCompare(_) => oracle_compare(&loaded, args, &out_path),
    }
}

fn load(args: &RunArgs) -> Result<LoadedScenario, CliError> {
    let mut file = ConfigFile::from_path(&args.config)?;
    for pair in &args.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects KEY=VALUE, got '{pair}'"))
        })?;
        file.set_override(key.trim(), value.trim())?;
    }
    let loaded = file.build()?;
    loaded.scenario.validate()?;
    Ok(loaded)
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(body)?;
    Ok(())
}

fn simulate(loaded: &LoadedScenario, out: &Path) -> Result<(), CliError> {
    let schedule = ReleaseSchedule::from_bits(&loaded.scenario, &[1])?;
    let trace = run(&loaded.scenario, &schedule)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_file(out, &buf)?;
    eprintln!(
        "simulate: {} samples to t = {:.3} s, peak C_C at receiver = {:.6e}",
        trace.len(),
        trace.times.last().copied().unwrap_or(0.0),
        trace.peak_c().1
    );
    Ok(())
}

fn fig1(loaded: &LoadedScenario, args: &RunArgs, out: &Path) -> Result<(), CliError> {
    // The validation scenario: equal diffusion coefficients so diffusion
    // cannot affect the uniform concentrations, and the fast forward
    // reaction that keeps the stochastic ensemble cheap.
    let mut config = loaded.scenario.clone();
    let d = config.diffusion(Species::A);
    config.species.b.diffusion = d;
    config.species.c.diffusion = d;
    config.reaction = mcprobe::scenario::ReactionParams {
        kappa_f: 1e-14,
        kappa_b: 1e-18,
    };
    let mut opts = loaded
        .oracle
        .validation_options(RngStream::new(args.seed, STREAM_SSA));
    opts.initial = mcprobe::scenario::PerSpecies::new(6e13, 6e13, 0.0);
    let report = fig1_experiment(&config, &opts)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(out, &buf)?;
    for (i, name) in ["A", "B", "C"].iter().enumerate() {
        eprintln!(
            "fig1: species {name}: max |solver-ode|/ode = {:.3e}, max |z| ssa vs ode = {:.2}",
            report.max_rel_dev_solver_vs_ode[i], report.max_abs_z_ssa_vs_ode[i]
        );
    }
    Ok(())
}

/// The four probe variants shown against direct detection.
const FIG2_CASES: [(f64, f64, &str); 4] = [
    (1.1e-10, 2.4e9, "C_C_DB_1.1e-10_NB_2.4e9"),
    (1.1e-10, 2.4e10, "C_C_DB_1.1e-10_NB_2.4e10"),
    (5e-10, 2.4e9, "C_C_DB_5e-10_NB_2.4e9"),
    (5e-10, 2.4e10, "C_C_DB_5e-10_NB_2.4e10"),
];

fn fig2(loaded: &LoadedScenario, out: &Path) -> Result<(), CliError> {
    // Direct-detection baseline: the signal molecules themselves, no probe.
    let mut direct = loaded.scenario.clone();
    direct.probe = ProbeDeployment::None;
    let schedule = ReleaseSchedule::from_bits(&direct, &[1])?;
    let baseline = run(&direct, &schedule)?;

    let mut traces: Vec<Trace> = Vec::new();
    for (d_b, n_b, _) in FIG2_CASES {
        let mut config = loaded.scenario.clone();
        config.species.b.diffusion = d_b;
        config.probe = ProbeDeployment::PointRelease {
            z: config.rx_z,
            molecules: n_b,
            time: 0.0,
        };
        let schedule = ReleaseSchedule::from_bits(&config, &[1])?;
        let trace = run(&config, &schedule)?;
        eprintln!(
            "fig2: D_B = {d_b:.2e}, N_B = {n_b:.2e}: peak C_C = {:.6e} at t = {:.3} s",
            trace.peak_c().1,
            trace.times[trace.peak_c().0]
        );
        traces.push(trace);
    }

    let mut buf = Vec::new();
    write!(buf, "t,C_A_direct")?;
    for (_, _, name) in FIG2_CASES {
        write!(buf, ",{name}")?;
    }
    writeln!(buf)?;
    for i in 0..baseline.len() {
        write!(buf, "{:.8e},{:.8e}", baseline.times[i], baseline.a_rx[i])?;
        for trace in &traces {
            write!(buf, ",{:.8e}", trace.c_rx[i])?;
        }
        writeln!(buf)?;
    }
    write_file(out, &buf)?;
    Ok(())
}

fn resolve_sampling_time(loaded: &LoadedScenario) -> Result<f64, CliError> {
    match loaded.detection.sampling_offset {
        Some(t_s) => Ok(t_s),
        None => {
            let setup = loaded.detection.setup(&loaded.scenario, loaded.scenario.delta_t);
            let t_s = sampling_time(&loaded.scenario, &setup)?;
            eprintln!("sampling time from single-bit peak: t_s = {t_s:.4} s");
            Ok(t_s)
        }
    }
}

fn ber_or_sweep(
    loaded: &LoadedScenario,
    args: &RunArgs,
    out: &Path,
    optimum_only: bool,
) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let t_s = resolve_sampling_time(loaded)?;
    let setup = loaded.detection.setup(&loaded.scenario, t_s);
    let table = build_isi_table(&loaded.scenario, &setup)?;
    for pattern in 0..table.len() {
        eprintln!(
            "isi: pattern {:0width$b} -> q_bar = {:.6e}",
            pattern,
            table.q_bar(pattern),
            width = setup.isi_length + 1
        );
    }

    let gammas = match loaded.detection.threshold {
        Some(g) if optimum_only => vec![g],
        _ => default_gamma_range(&table),
    };
    let sweep = threshold_sweep(&table, &gammas)?;
    let stream = RngStream::new(args.seed, STREAM_MONTE_CARLO);

    let results: Vec<BerResult> = if optimum_only {
        vec![ber_monte_carlo(
            &table,
            sweep.optimal.gamma,
            args.trials,
            stream.child(sweep.optimal.gamma),
        )?]
    } else {
        let mut all = Vec::with_capacity(sweep.points.len());
        for point in &sweep.points {
            all.push(ber_monte_carlo(
                &table,
                point.gamma,
                args.trials,
                stream.child(point.gamma),
            )?);
        }
        all
    };

    let mut buf = Vec::new();
    write_sweep_csv(&results, &mut buf)?;
    write_file(out, &buf)?;
    eprintln!(
        "threshold optimum: gamma* = {} with analytical BER = {:.6e}",
        sweep.optimal.gamma, sweep.optimal.ber
    );
    Ok(())
}

fn oracle_compare(loaded: &LoadedScenario, args: &RunArgs, out: &Path) -> Result<(), CliError> {
    let config: &ScenarioConfig = &loaded.scenario;
    let d = config.diffusion(Species::A);
    if config.diffusion(Species::B) != d || config.diffusion(Species::C) != d {
        return Err(CliError::Usage(
            "oracle-compare needs equal diffusion coefficients for all species \
             (set species.d_b and species.d_c to species.d_a); the well-mixed \
             comparison is only exact when diffusion cannot change the uniform profile"
                .into(),
        ));
    }
    let opts = loaded
        .oracle
        .validation_options(RngStream::new(args.seed, STREAM_SSA));
    let report = fig1_experiment(config, &opts)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(out, &buf)?;
    for (i, name) in ["A", "B", "C"].iter().enumerate() {
        eprintln!(
            "oracle-compare: species {name}: max |solver-ode|/ode = {:.3e}, max |z| = {:.2}",
            report.max_rel_dev_solver_vs_ode[i], report.max_abs_z_ssa_vs_ode[i]
        );
    }
    Ok(())
}
