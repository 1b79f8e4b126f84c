use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tbddma::reproduce::reproduce;
use tbddma::scenario::{run_beampattern, run_design, run_detect, run_scenario, ResultBundle, RunOptions};

/// MIMO FMCW radar simulation, slow-time coding and transmit beamspace design.
#[derive(Parser, Debug)]
#[command(name = "tbddma", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for target fading, receiver noise and randomized extraction.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "TBDDMA_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Fast-time samples per chirp P (reproductions default to 1024).
    #[arg(long, global = true)]
    fast_time_samples: Option<usize>,
    /// Emit PNG heatmaps and SVG pattern plots (default).
    #[arg(long, global = true, overrides_with = "no_plot")]
    plot: bool,
    /// Skip plot files; data files are still written.
    #[arg(long, global = true)]
    no_plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate, process and detect a JSON scenario.
    Simulate { scenario: PathBuf },
    /// Design a fast-time beamspace matrix from a JSON configuration.
    DesignTb { config: PathBuf },
    /// Evaluate the transmit pattern of an RDMX matrix whose columns are beams.
    Beampattern {
        matrix: PathBuf,
        /// Element spacing in wavelengths.
        #[arg(long, default_value_t = 0.5)]
        spacing: f64,
    },
    /// Process a stored cube (RDMX with a JSON sidecar of the same stem).
    Detect { cube: PathBuf },
    /// Run a built-in example (1-4).
    Reproduce {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        example: u8,
    },
}

fn run(cli: Cli) -> tbddma::Result<ResultBundle> {
    let c = cli.common;
    let opts = RunOptions {
        seed: c.seed,
        out_dir: c.out_dir,
        fast_time_samples: c.fast_time_samples,
        plot: !c.no_plot,
    };
    match cli.command {
        Command::Simulate { scenario } => run_scenario(&scenario, &opts),
        Command::DesignTb { config } => run_design(&config, &opts),
        Command::Beampattern { matrix, spacing } => run_beampattern(&matrix, spacing, &opts),
        Command::Detect { cube } => run_detect(&cube, &opts),
        Command::Reproduce { example } => reproduce(example, &opts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(bundle) => {
            print!("{}", bundle.summary_table());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
