use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qcorr_cli::{cmd_psd, cmd_run, cmd_spectrum, cmd_validate, CliError, RunRequest};
use qcorr_core::Window;

#[derive(Parser)]
#[command(
    name = "qcorr",
    version,
    about = "Sensor-bath correlation protocol simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rect,
}

impl From<WindowArg> for Window {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Hann => Window::Hann,
            WindowArg::Rect => Window::Rect,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file
    #[arg(long)]
    config: PathBuf,
    /// Directory for emitted files
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to one per CPU
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `run.seed` from the scenario file
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn request(&self) -> RunRequest {
        RunRequest {
            config_path: self.config.clone(),
            out_dir: self.out.clone(),
            workers: self.workers,
            seed_override: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Executes the configured delay sweep and writes the trace
    Run(RunArgs),
    /// Alias for `run`
    Sweep(RunArgs),
    /// Recomputes a spectrum from a stored trace
    Spectrum {
        /// Trace CSV produced by `run`
        #[arg(long)]
        trace: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = WindowArg::Hann)]
        window: WindowArg,
    },
    /// Cross-checks the fast executor against the brute-force reference
    Validate,
    /// Writes the averaged power spectral density of the configured noise
    Psd(RunArgs),
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(args) | Command::Sweep(args) => {
            let report = cmd_run(&args.request())?;
            println!(
                "wrote {} points to {} (seed {}, {:.3} s)",
                report.n_points,
                report.trace_path.display(),
                report.seed,
                report.wall_time_s
            );
            if let Some(p) = &report.spectrum_path {
                println!("wrote spectrum to {}", p.display());
            }
            Ok(())
        }
        Command::Spectrum { trace, out, window } => {
            let spec = cmd_spectrum(&trace, &out, window.into())?;
            println!(
                "wrote {} bins to {} (resolution {:.6e} Hz)",
                spec.freqs.len(),
                out.display(),
                spec.resolution
            );
            Ok(())
        }
        Command::Validate => {
            let report = cmd_validate()?;
            for line in &report.lines {
                let status = if line.pass { "ok" } else { "FAIL" };
                println!(
                    "{:<24} |fast - reference| = {:.3e}  {status}",
                    line.label, line.abs_diff
                );
            }
            println!("calibrated response constant c = {:.6}", report.calibration);
            if report.pass {
                Ok(())
            } else {
                Err(qcorr_core::Error::Numerical(
                    "executor disagrees with the brute-force reference".into(),
                )
                .into())
            }
        }
        Command::Psd(args) => {
            let (path, psd) = cmd_psd(&args.request())?;
            println!(
                "wrote {} bins to {} (resolution {:.6e} Hz)",
                psd.freqs.len(),
                path.display(),
                psd.resolution
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
