use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlres_cli::{CliError, Common, Config};

#[derive(Parser)]
#[command(name = "nlres", version, about = "Resonances of forced Duffing-type oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Key-value configuration file with one section per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Multiplies every integration tolerance.
    #[arg(long = "tol-scale", global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Classify attractors over an (omega, A) grid.
    Sweep,
    /// Continue a branch of periodic orbits in omega.
    Curve,
    /// Trace fold, pitchfork or synchronisation tongues.
    Tongue,
    /// Refine and report a single periodic orbit.
    Orbit,
    /// Tabulate the natural period of the free oscillator.
    Natfreq,
}

fn run(cli: &Cli) -> Result<nlres_cli::Summary, CliError> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    let common = Common { out: cli.out.clone(), tol_scale: cli.tol_scale };
    match cli.command {
        Command::Sweep => nlres_cli::cmd_sweep(&cfg, &common),
        Command::Curve => nlres_cli::cmd_curve(&cfg, &common),
        Command::Tongue => nlres_cli::cmd_tongue(&cfg, &common),
        Command::Orbit => nlres_cli::cmd_orbit(&cfg, &common),
        Command::Natfreq => nlres_cli::cmd_natfreq(&cfg, &common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for (item, msg) in &summary.failures {
                    eprintln!("nlres-error code=3 kind=numerical item={item:?} message={msg:?}");
                }
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
