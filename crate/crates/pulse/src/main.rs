use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pulse::commands::{self, Axis, Overrides};
use pulse::config::Config;
use pulse::error::{exit, Error, Result};

/// Semi-supervised pulse recovery on synthetic clips.
///
/// Exit codes: 0 success, 1 internal failure, 2 configuration or usage
/// error, 3 unreadable or unwritable file, 4 training diverged.
/// Log level comes from PULSE_LOG_LEVEL (error, warn, info, debug).
#[derive(Debug, Parser)]
#[command(name = "pulse", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed everywhere.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset directory; overrides paths.data.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (manifest plus PCB1 clips).
    Gen {
        /// Output directory; defaults to paths.data.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run and write its run directory.
    Train {
        /// full, partial or semi.
        #[arg(long, default_value = "semi")]
        protocol: String,
        /// inc, dec or fixed:<r>.
        #[arg(long)]
        schedule: Option<String>,
        /// snr or ipr.
        #[arg(long)]
        criterion: Option<String>,
        /// Run directory; defaults to paths.out/<protocol>-<schedule>-s<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score signals: a signal CSV, a .pcb clip or a run directory.
    Score {
        inputs: Vec<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a run directory's checkpoint on a dataset split.
    Eval {
        run_dir: PathBuf,
        /// test, validation or train_labeled.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Sweep one axis over shared seeds and write a comparison CSV.
    Ablate {
        /// schedule, criterion, lambda or e_pre.
        #[arg(long)]
        axis: String,
        /// Comma-separated training seeds.
        #[arg(long, default_value = "0,1,2,3,4", value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Output CSV; defaults to paths.out/ablate_<axis>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration as TOML.
    Defaults,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            pulse::rundir::write_file(p, text)
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}

fn main_inner(cli: Cli) -> Result<()> {
    let mut ov = Overrides {
        seed: cli.seed,
        data: cli.data.clone(),
        ..Overrides::default()
    };
    match cli.command {
        Command::Defaults => {
            print!("{}", Config::default().to_toml());
        }
        Command::Gen { out } => {
            let cfg = commands::load_config(cli.config.as_deref(), &ov)?;
            let counts = commands::gen(&cfg, out.as_deref())?;
            println!("{}", commands::counts_line(&counts));
        }
        Command::Train {
            protocol,
            schedule,
            criterion,
            out,
        } => {
            let protocol = commands::parse_protocol(&protocol)?;
            ov.schedule = schedule;
            ov.criterion = criterion;
            let cfg = commands::load_config(cli.config.as_deref(), &ov)?;
            let (dir, summary) = commands::train(&cfg, protocol, out.as_deref())?;
            let line = |label: &str, m: &Option<pulse::rundir::MetricsJson>| match m {
                Some(m) => format!(
                    "{label} mae={:.4} rmse={:.4} r={} sd={:.4}",
                    m.mae,
                    m.rmse,
                    m.r.map_or("NA".into(), |r| format!("{r:.4}")),
                    m.sd
                ),
                None => format!("{label} NA"),
            };
            println!("{} {} -> {}", line("test", &summary.test), line("val", &summary.validation), dir.display());
        }
        Command::Score { inputs, out } => {
            let cfg = commands::load_config(cli.config.as_deref(), &ov)?;
            write_out(out.as_deref(), &commands::score(&cfg, &inputs)?)?;
        }
        Command::Eval { run_dir, split } => {
            let cfg = commands::load_config(cli.config.as_deref(), &ov)?;
            let m = commands::eval(&cfg, &run_dir, &split)?;
            println!("{}", commands::metrics_line(&split, Some(&m)));
        }
        Command::Ablate { axis, seeds, out } => {
            let axis = Axis::parse(&axis)?;
            let cfg = commands::load_config(cli.config.as_deref(), &ov)?;
            let csv = commands::ablate(&cfg, axis, &seeds)?;
            let path = out.unwrap_or_else(|| cfg.paths.out.join(format!("ablate_{}.csv", axis.as_str())));
            write_out(Some(&path), &csv)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PULSE_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
