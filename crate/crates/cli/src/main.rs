use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use planar_push::engine::PressureVariant;
use planar_push::harness::{
    build_scenarios, emit_outputs, oracle_check, run, run_sweep, write_sweep_outputs, HarnessConfig, RunMode,
    RunOptions, RunSummary, Scenario, SliderKind, Strategy, SweepSelection,
};

#[derive(Parser)]
#[command(name = "planar-push", version, about = "Simulate force-feedback planar pushing")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a single scenario.
    Run(RunArgs),
    /// Simulate the full initial-condition grid.
    Sweep(SweepArgs),
    /// Run closed-loop, open-loop and dipole strategies on the same grid.
    Compare(CompareArgs),
    /// Compare the engine against the analytic single-contact solution.
    OracleCheck(OracleArgs),
    /// Print the effective configuration as TOML.
    PrintConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum SliderArg {
    Box,
    Cylinder,
    All,
}

impl SliderArg {
    fn kinds(self) -> Vec<SliderKind> {
        match self {
            SliderArg::Box => vec![SliderKind::Box],
            SliderArg::Cylinder => vec![SliderKind::Cylinder],
            SliderArg::All => SliderKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PressureArg {
    Centered,
    Uniform,
    Perimeter,
}

impl From<PressureArg> for PressureVariant {
    fn from(p: PressureArg) -> Self {
        match p {
            PressureArg::Centered => PressureVariant::Centered,
            PressureArg::Uniform => PressureVariant::Uniform,
            PressureArg::Perimeter => PressureVariant::Perimeter,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    ClosedLoop,
    OpenLoop,
    Dipole,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::ClosedLoop => Strategy::ClosedLoop,
            StrategyArg::OpenLoop => Strategy::OpenLoop,
            StrategyArg::Dipole => Strategy::Dipole,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Kinematic,
    MobileBase,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Kinematic => RunMode::KinematicPusher,
            ModeArg::MobileBase => RunMode::MobileBase,
        }
    }
}

#[derive(Args)]
struct ControlArgs {
    #[arg(long, value_enum, default_value = "kinematic")]
    mode: ModeArg,
    /// Disable the force-capping velocity offset.
    #[arg(long)]
    no_admittance: bool,
}

#[derive(Args)]
struct SelectionArgs {
    #[arg(long, value_enum, default_value = "box")]
    slider: SliderArg,
    #[arg(long, default_value = "straight")]
    path: String,
    /// Include the walls configured for the path.
    #[arg(long)]
    walls: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Skip per-run JSONL traces.
    #[arg(long)]
    no_traces: bool,
    /// Override every run's duration, s.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "box")]
    slider: SliderArg,
    #[arg(long, default_value = "straight")]
    path: String,
    #[arg(long)]
    walls: bool,
    /// Initial lateral offset from the path, m.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lateral_offset: f64,
    /// Initial contact offset along the slider edge, m.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    contact_offset: f64,
    /// Initial orientation relative to the path, rad.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    orientation: f64,
    #[arg(long, default_value_t = 0.5)]
    friction: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    pressure: PressureArg,
    #[arg(long, value_enum, default_value = "closed-loop")]
    strategy: StrategyArg,
    #[command(flatten)]
    control: ControlArgs,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    selection: SelectionArgs,
    #[arg(long, value_enum, default_value = "closed-loop")]
    strategy: StrategyArg,
    #[command(flatten)]
    control: ControlArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    selection: SelectionArgs,
    #[command(flatten)]
    control: ControlArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Push duration before comparing, s.
    #[arg(long, default_value_t = 2.0)]
    push_time: f64,
    /// Write the per-case report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig> {
    match path {
        Some(p) => HarnessConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(HarnessConfig::default()),
    }
}

fn options(strategy: Strategy, control: &ControlArgs) -> RunOptions {
    RunOptions {
        mode: control.mode.into(),
        strategy,
        admittance: !control.no_admittance,
    }
}

fn scenarios(config: &HarnessConfig, sel: &SelectionArgs) -> Result<Vec<Scenario>> {
    let mut list = build_scenarios(config, &SweepSelection::new(&sel.slider.kinds(), &sel.path, sel.walls))?;
    if let Some(d) = sel.duration {
        list.iter_mut().for_each(|s| s.duration = d);
    }
    Ok(list)
}

fn print_summary(label: &str, runs: &[RunSummary]) {
    let n = runs.len().max(1) as f64;
    let completed = runs.iter().filter(|r| r.metrics.completed).count();
    let mean_distance = runs.iter().map(|r| r.metrics.normalized_distance).sum::<f64>() / n;
    let min_distance = runs
        .iter()
        .map(|r| r.metrics.normalized_distance)
        .fold(f64::INFINITY, f64::min);
    let worst_final = runs
        .iter()
        .map(|r| r.metrics.final_minute_mean_offset)
        .fold(0.0, f64::max);
    let max_dev = runs.iter().map(|r| r.metrics.max_deviation).fold(0.0, f64::max);
    let peak = runs.iter().map(|r| r.metrics.peak_force).fold(0.0, f64::max);
    let losses = runs.iter().filter(|r| r.metrics.contact_lost_at.is_some()).count();
    println!(
        "{label:<12} runs={} completed={completed} distance mean={mean_distance:.3} min={min_distance:.3} \
         max_deviation={max_dev:.3} worst_final_offset={worst_final:.3} peak_force={peak:.1} lost_contact={losses}",
        runs.len()
    );
}

fn sweep_into(
    config: &HarnessConfig,
    list: &[Scenario],
    opts: &RunOptions,
    sel: &SelectionArgs,
    out: &Path,
) -> Result<Vec<RunSummary>> {
    let trace_dir = (!sel.no_traces).then(|| out.join("traces"));
    let runs = run_sweep(config, list, opts, sel.jobs, trace_dir.as_deref())?;
    let files = write_sweep_outputs(&runs, config, out)?;
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(runs)
}

fn execute(cli: Cli) -> Result<bool> {
    let config = load_config(cli.config.as_deref())?;
    config.validate()?;
    match cli.command {
        Command::PrintConfig => {
            print!("{}", config.to_toml_string());
            Ok(true)
        }
        Command::Run(args) => {
            let kinds = args.slider.kinds();
            if kinds.len() != 1 {
                bail!("`run` needs a single slider");
            }
            let path = config.path(&args.path)?;
            let scenario = Scenario {
                index: 0,
                slider: kinds[0],
                lateral_offset: args.lateral_offset,
                contact_offset: args.contact_offset,
                orientation: args.orientation,
                contact_friction: args.friction,
                pressure: args.pressure.into(),
                path: args.path.clone(),
                walls: args.walls,
                duration: args.duration.or(path.duration).unwrap_or(config.run.duration),
                seed: 0,
            };
            let record = run(&scenario, &config, &options(args.strategy.into(), &args.control))?;
            for f in emit_outputs(std::slice::from_ref(&record), &config, &args.out)? {
                eprintln!("wrote {}", f.display());
            }
            let m = &record.metrics;
            println!(
                "completed={} normalized_distance={:.4} max_deviation={:.4} final_lateral_offset={:.4} \
                 contact_losses={} peak_force={:.2}",
                m.completed,
                m.normalized_distance,
                m.max_deviation,
                m.final_lateral_offset,
                m.contact_loss_count,
                m.peak_force
            );
            if let Some(reason) = &record.abort {
                println!("aborted: {reason}");
            }
            Ok(record.abort.is_none())
        }
        Command::Sweep(args) => {
            let list = scenarios(&config, &args.selection)?;
            let opts = options(args.strategy.into(), &args.control);
            let runs = sweep_into(&config, &list, &opts, &args.selection, &args.selection.out)?;
            print_summary(opts.strategy.name(), &runs);
            Ok(runs.iter().all(|r| r.abort.is_none()))
        }
        Command::Compare(args) => {
            let list = scenarios(&config, &args.selection)?;
            let mut ok = true;
            for strategy in [Strategy::ClosedLoop, Strategy::OpenLoop, Strategy::Dipole] {
                let opts = options(strategy, &args.control);
                let out = args.selection.out.join(strategy.name());
                let runs = sweep_into(&config, &list, &opts, &args.selection, &out)?;
                print_summary(strategy.name(), &runs);
                ok &= runs.iter().all(|r| r.abort.is_none());
            }
            Ok(ok)
        }
        Command::OracleCheck(args) => {
            let report = oracle_check(&config, args.samples, args.seed, args.push_time);
            let (twist, force) = report.worst_angles_deg();
            let agreement = report.mode_agreement();
            println!(
                "cases={} rejected={} mode_agreement={:.4} worst_twist_deg={twist:.3} worst_force_deg={force:.3}",
                report.cases.len(),
                report.rejected,
                agreement
            );
            if let Some(out) = &args.out {
                let json = serde_json::to_string_pretty(&report)?;
                std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(agreement >= 0.98 && twist <= 5.0 && force <= 5.0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
