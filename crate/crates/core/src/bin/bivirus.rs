use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bivirus::conditions::consolidated_report;
use bivirus::dynamics::{
    convergence_census, detect_convergence, integrate, sample_initial_condition, CensusSummary,
    ConvergenceVerdict, IntegrationOptions, Sampling, Trajectory,
};
use bivirus::equilibria::{enumerate_equilibria, Enumeration, EnumerationBudget, EquilibriumKind};
use bivirus::scenario::{builtin, load_config, Builtin, ScenarioConfig, SimulationSettings};
use bivirus::{BivirusModel, State};

#[derive(Parser)]
#[command(name = "bivirus", version, about = "Competitive bivirus SIS dynamics on hypergraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Enumerate DFE, boundary and coexistence equilibria.
    Equilibria(EquilibriaArgs),
    /// Evaluate the stability and existence conditions.
    Conditions(CommonArgs),
    /// Integrate many random initial conditions and tally their limits.
    Census(CensusArgs),
    /// Print a built-in scenario as a config file.
    Builtin {
        /// example1 or example2
        name: Builtin,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config file (JSON).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    config: Option<PathBuf>,
    /// Built-in scenario: example1 or example2.
    #[arg(long)]
    builtin: Option<Builtin>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EquilibriaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Seed of the random equilibrium-search seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Additional Newton seeds per virus for unstable boundary equilibria.
    #[arg(long, default_value_t = 0)]
    newton_boundary_seeds: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Random initial condition from this seed.
    #[arg(long, conflicts_with_all = ["near_dfe", "x1"])]
    seed: Option<u64>,
    /// Start at eps in every coordinate.
    #[arg(long, value_name = "EPS", conflicts_with = "x1")]
    near_dfe: Option<f64>,
    /// Explicit virus-1 state, comma separated.
    #[arg(long, requires = "x2", value_delimiter = ',', num_args = 1..)]
    x1: Option<Vec<f64>>,
    /// Explicit virus-2 state, comma separated.
    #[arg(long, requires = "x1", value_delimiter = ',', num_args = 1..)]
    x2: Option<Vec<f64>>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Where to write the terminal report (stdout by default).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CensusArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_max: Option<f64>,
    /// cap or random-level
    #[arg(long, default_value = "random-level")]
    sampling: Sampling,
    /// Per-run CSV output.
    #[arg(long)]
    runs: Option<PathBuf>,
}

fn load(common: &CommonArgs) -> Result<(BivirusModel, SimulationSettings)> {
    match (&common.config, common.builtin) {
        (Some(path), _) => load_config(path).with_context(|| format!("loading {}", path.display())),
        (None, Some(b)) => {
            let c = builtin(b);
            Ok((c.to_model()?, c.settings()))
        }
        (None, None) => bail!("one of --config or --builtin is required"),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn options(settings: &SimulationSettings, t_max: Option<f64>) -> IntegrationOptions {
    IntegrationOptions {
        t_max: t_max.unwrap_or(settings.t_max),
        rtol: settings.rtol,
        atol: settings.atol,
        ..IntegrationOptions::default()
    }
}

fn write_trajectory(out: &mut dyn Write, traj: &Trajectory, n: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for k in 1..=2 {
        header.extend((1..=n).map(|i| format!("x{k}_{i}")));
    }
    w.write_record(&header)?;
    for (t, s) in traj.times.iter().zip(traj.states.iter()) {
        let row = std::iter::once(*t)
            .chain(s.x1.iter().copied())
            .chain(s.x2.iter().copied())
            .map(|v| format!("{v:.16e}"));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    initial: &'a State,
    t_end: f64,
    steps_accepted: usize,
    steps_rejected: usize,
    max_excursion: f64,
    verdict: &'a ConvergenceVerdict,
    matched_kind: Option<EquilibriumKind>,
    terminal_state: &'a State,
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    let (m, settings) = load(&args.common)?;
    let n = m.n();
    let s0 = if let (Some(x1), Some(x2)) = (&args.x1, &args.x2) {
        if x1.len() != n || x2.len() != n {
            bail!("--x1 and --x2 need {n} entries each");
        }
        State::new(x1.clone().into(), x2.clone().into())
    } else if let Some(eps) = args.near_dfe {
        State::uniform(n, eps, eps)
    } else {
        let seed = args.seed.unwrap_or(settings.rng_seed);
        sample_initial_condition(n, seed, 0, Sampling::default())
    };
    let mut opts = options(&settings, args.t_max);
    opts.stop_on = None;
    let traj = integrate(&m, &s0, &opts)?;
    let known = enumerate_equilibria(&m, EnumerationBudget::default())?;
    let criterion = IntegrationOptions::default().stop_on.unwrap_or_default();
    let verdict = detect_convergence(&traj, &m, criterion.eps_field, criterion.window, &known.records);

    write_trajectory(&mut *output(&args.common.out)?, &traj, n)?;
    let report = SimulationReport {
        initial: &s0,
        t_end: *traj.times.last().unwrap_or(&0.0),
        steps_accepted: traj.steps_accepted,
        steps_rejected: traj.steps_rejected,
        max_excursion: traj.max_excursion,
        verdict: &verdict,
        matched_kind: verdict.kind(),
        terminal_state: traj.last_state(),
    };
    // The report shares stdout with the CSV only when both go there.
    let mut out: Box<dyn Write> = match (&args.report, &args.common.out) {
        (Some(p), _) => output(&Some(p.clone()))?,
        (None, Some(_)) => Box::new(io::stdout().lock()),
        (None, None) => Box::new(io::stderr().lock()),
    };
    if args.common.json {
        write_json(&mut *out, &report)?;
    } else {
        match &verdict {
            ConvergenceVerdict::ConvergedTo { kind, matched, .. } => {
                let note = if matched.is_some() { "" } else { " (not among enumerated equilibria)" };
                writeln!(out, "converged: {kind}{note}")?;
            }
            ConvergenceVerdict::MaxTimeReached => writeln!(out, "not converged: max_time_reached")?,
            ConvergenceVerdict::LeftDomain { time, excursion } => writeln!(
                out,
                "failed: left_domain at t = {time} (excursion {excursion:e})"
            )?,
        }
        writeln!(
            out,
            "t_end = {}, steps = {} accepted / {} rejected",
            report.t_end, report.steps_accepted, report.steps_rejected
        )?;
    }
    Ok(!matches!(verdict, ConvergenceVerdict::LeftDomain { .. }))
}

fn fmt_vec(v: &nalgebra::DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn write_equilibria(out: &mut dyn Write, e: &Enumeration) -> Result<()> {
    writeln!(
        out,
        "{:<12} {:>12} {:>10} {:<30} {:>10} {:>13} {:>9}",
        "kind", "s_jacobian", "residual", "stability", "saturated", "nondegenerate", "det_J"
    )?;
    for r in &e.records {
        writeln!(
            out,
            "{:<12} {:>12.6} {:>10.1e} {:<30} {:>10} {:>13} {:>9.3e}",
            r.kind.as_str(),
            r.s_jacobian,
            r.residual,
            r.stability.as_str(),
            r.saturated,
            r.nondegenerate,
            r.det_jacobian
        )?;
        writeln!(out, "    x1 = {}", fmt_vec(&r.point.x1))?;
        writeln!(out, "    x2 = {}", fmt_vec(&r.point.x2))?;
    }
    for w in &e.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

fn equilibria(args: EquilibriaArgs) -> Result<bool> {
    let (m, settings) = load(&args.common)?;
    let budget = EnumerationBudget {
        rng_seed: args.seed.unwrap_or(settings.rng_seed),
        newton_boundary_seeds: args.newton_boundary_seeds,
        ..EnumerationBudget::default()
    };
    let e = enumerate_equilibria(&m, budget)?;
    let mut out = output(&args.common.out)?;
    if args.common.json {
        write_json(&mut *out, &e)?;
    } else {
        write_equilibria(&mut *out, &e)?;
    }
    if e.exhausted {
        eprintln!("warning: equilibrium search budget exhausted; results may be incomplete");
    }
    Ok(true)
}

fn conditions(args: CommonArgs) -> Result<bool> {
    let (m, settings) = load(&args)?;
    let budget = EnumerationBudget {
        rng_seed: settings.rng_seed,
        ..EnumerationBudget::default()
    };
    let e = enumerate_equilibria(&m, budget)?;
    let report = consolidated_report(&m, &e)?;
    let mut out = output(&args.out)?;
    if args.json {
        write_json(&mut *out, &report)?;
    } else {
        write!(out, "{report}")?;
    }
    Ok(true)
}

fn write_census_runs(path: &PathBuf, c: &CensusSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["run_id", "seed", "verdict", "matched_kind", "terminal_distance"])?;
    for r in &c.runs {
        w.write_record([
            r.run_id.to_string(),
            r.seed.to_string(),
            r.verdict.label().to_string(),
            r.matched_kind.map(|k| k.as_str().to_string()).unwrap_or_default(),
            r.terminal_distance.map(|d| format!("{d:.16e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn census(args: CensusArgs) -> Result<bool> {
    let (m, settings) = load(&args.common)?;
    let seed = args.seed.unwrap_or(settings.rng_seed);
    let count = args.count.unwrap_or(settings.census_count);
    let known = enumerate_equilibria(&m, EnumerationBudget::default())?;
    let opts = options(&settings, args.t_max);
    let c = convergence_census(&m, &known.records, count, seed, args.sampling, &opts)?;
    if let Some(path) = &args.runs {
        write_census_runs(path, &c)?;
    }
    let mut out = output(&args.common.out)?;
    if args.common.json {
        write_json(&mut *out, &c)?;
    } else {
        writeln!(out, "runs: {count} (seed {seed}, stream = run_id)")?;
        writeln!(out, "converged: {:.1}%", 100.0 * c.converged_fraction)?;
        for (kind, n) in &c.histogram {
            writeln!(out, "  {:<12} {n}", kind.as_str())?;
        }
        if c.unmatched > 0 {
            writeln!(out, "  ({} limits not among the enumerated equilibria)", c.unmatched)?;
        }
        for r in c.non_converged() {
            writeln!(out, "run {}: {}", r.run_id, r.verdict.label())?;
        }
    }
    Ok(true)
}

fn print_builtin(name: Builtin, out: Option<PathBuf>) -> Result<bool> {
    let c: ScenarioConfig = builtin(name);
    let mut out = output(&out)?;
    writeln!(out, "{}", c.to_json())?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Equilibria(a) => equilibria(a),
        Command::Conditions(a) => conditions(a),
        Command::Census(a) => census(a),
        Command::Builtin { name, out } => print_builtin(name, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
