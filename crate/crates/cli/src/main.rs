use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use log::info;

use tvmd_cli::{
    afs_sample, allocate, format_allocation, load_config, output_paths, simulate_one, simulate_sweep, CliError,
    InitialStack, Summary,
};

/// Allocation and full-pose tracking for thrust-vectoring modular teams.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly the ascend/tilt/descend scenario and write a CSV trace and JSON summary
    Simulate(SimulateArgs),
    /// Allocate one wrench across the agents
    Allocate(AllocateArgs),
    /// Sample forces against the approximated attainable space
    AfsSample(SampleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML); the built-in scenario is used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Planner relaxation in (0, 1]
    #[arg(long)]
    s: Option<f64>,
    /// Scenario length, s
    #[arg(long)]
    duration: Option<f64>,
    /// Run once per relaxation, in parallel
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sweep_s: Option<Vec<f64>>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Print the summary as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Desired wrench tau_x tau_y tau_z f_x f_y f_z in the team frame
    #[arg(long, num_args = 6, allow_negative_numbers = true, required = true)]
    wrench: Vec<f64>,
    /// Starting stack: hover, zero, or 3n comma-separated force components
    #[arg(long, default_value = "hover")]
    initial: InitialStack,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relaxation of the sampled cone; defaults to the scenario value
    #[arg(long)]
    s: Option<f64>,
    /// Vertical force levels, N
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "5,10,20,30")]
    z_levels: Vec<f64>,
    /// Random points per level, besides the on-axis point
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write `afs_sample.csv` here instead of standard output
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn report(summary: &Summary) {
    info!(
        "s = {}: {} ticks, max e_f = {:.3e} N, max planned roll = {:.2} deg, final |e_x| = {:.4} m ({:.2} s)",
        summary.s,
        summary.ticks,
        summary.max_e_f,
        summary.max_phi_d.to_degrees(),
        summary.final_e_x,
        summary.runtime
    );
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let mut params = cfg.to_params()?;
    if let Some(s) = args.s {
        params.s = s;
    }
    if let Some(d) = args.duration {
        params.duration = d;
    }
    params.validate()?;

    let summaries = match &args.sweep_s {
        Some(values) => simulate_sweep(&cfg, &params, values, &args.out_dir)?,
        None => {
            let (trace, summary) = output_paths(&cfg, &args.out_dir, None);
            vec![simulate_one(&params, &trace, &summary)?]
        }
    };
    summaries.iter().for_each(report);
    if args.json {
        let json = if summaries.len() == 1 {
            serde_json::to_string_pretty(&summaries[0])
        } else {
            serde_json::to_string_pretty(&summaries)
        };
        emit(&json.expect("summary serializes"))?;
    }
    Ok(())
}

fn run_allocate(args: AllocateArgs) -> Result<(), CliError> {
    let team = load_config(args.config.as_deref())?.team()?;
    let wrench: [f64; 6] = args.wrench.try_into().expect("clap enforces six values");
    let result = allocate(&team, wrench, &args.initial)?;
    if args.json {
        emit(&serde_json::to_string_pretty(&result).expect("report serializes"))?;
    } else {
        emit(format_allocation(&result).trim_end())?;
    }
    Ok(())
}

fn run_sample(args: SampleArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let team = cfg.team()?;
    let s = args.s.unwrap_or(cfg.s);
    match args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            let path = dir.join("afs_sample.csv");
            let file = std::fs::File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            afs_sample(&team, s, &args.z_levels, args.count, args.seed, io::BufWriter::new(file))
        }
        None => afs_sample(&team, s, &args.z_levels, args.count, args.seed, io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Allocate(a) => run_allocate(a),
        Command::AfsSample(a) => run_sample(a),
    };
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
