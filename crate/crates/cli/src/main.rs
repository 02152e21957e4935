use std::path::PathBuf;
use std::process::ExitCode;

use cavitybus_cli::output::read_column;
use cavitybus_cli::{
    budget_output, cmd_budget, cmd_oracle, cmd_perturb, cmd_scan, cmd_simulate, cmd_solve, scan_output, write_files,
    CliError, CommandOutput, OracleOptions, RunConfig,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cavitybus",
    version,
    about = "Design and simulate W-state preparation by a moving cavity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines (a CSV written by this tool also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory for CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the oracle time series.
    #[arg(long, global = true)]
    trace: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Trap offsets for an N-ion W state.
    Solve(CommonArgs),
    /// Sequential amplitudes for the designed (or given) offsets.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Take offsets from the `y_um` column of a solve CSV.
        #[arg(long)]
        positions: Option<PathBuf>,
    },
    /// Time-resolved check of the sequential model.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Also run the design at every pitch in `pitch_sweep`.
        #[arg(long)]
        pitch_sweep: bool,
        /// Also integrate in the full ion x photon space (N <= 3).
        #[arg(long)]
        full_space: bool,
    },
    /// Fidelity under velocity and position noise for N = 2..n_ions.
    Perturb(CommonArgs),
    /// Sweep time against decay rates.
    Budget(CommonArgs),
    /// Fidelity along one noise axis.
    Scan(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    common: Common,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for s in &common.set {
        cfg.apply_override(s)?;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if common.trace {
        cfg.trace = true;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.samples {
        cfg.n_samples = n;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cfg, out): (RunConfig, CommandOutput) = match cli.command {
        Command::Solve(a) => {
            let cfg = load(&a.common)?;
            let out = cmd_solve(&cfg)?.output(&cfg);
            (cfg, out)
        }
        Command::Simulate { common, positions } => {
            let cfg = load(&common)?;
            let ys = match positions {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                    let um =
                        read_column(&text, "y_um").map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    Some(um.into_iter().map(|y| y * 1e-6).collect::<Vec<_>>())
                }
                None => None,
            };
            let out = cmd_simulate(&cfg, ys.as_deref())?.output(&cfg);
            (cfg, out)
        }
        Command::Oracle {
            common,
            pitch_sweep,
            full_space,
        } => {
            let cfg = load(&common)?;
            let out = cmd_oracle(
                &cfg,
                OracleOptions {
                    pitch_sweep,
                    full_space,
                },
            )?
            .output(&cfg);
            (cfg, out)
        }
        Command::Perturb(a) => {
            let cfg = load(&a.common)?;
            let out = cmd_perturb(&cfg)?.output(&cfg);
            (cfg, out)
        }
        Command::Budget(a) => {
            let cfg = load(&a.common)?;
            let out = budget_output(&cmd_budget(&cfg)?, &cfg);
            (cfg, out)
        }
        Command::Scan(a) => {
            let cfg = load(&a.common)?;
            let out = scan_output(&cmd_scan(&cfg)?, &cfg);
            (cfg, out)
        }
    };
    print!("{}", out.text);
    write_files(&cfg.output_dir, &out)?;
    for (name, _) in &out.files {
        println!("wrote {}", cfg.output_dir.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cavitybus: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
