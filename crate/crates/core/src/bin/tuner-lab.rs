use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tuner_lab::cli::{run, Preset, RunMode, RunOptions};

/// Velocity vs accelerating parameter tuners: simulations, Monte Carlo and
/// covariance analysis.
#[derive(Debug, Parser)]
#[command(name = "tuner-lab", version)]
struct Args {
    /// simulate | montecarlo | covariance | verify-identity | pe
    /// (`run` takes the mode from the config's `mode` key).
    mode: Option<String>,

    /// Figure preset: fig1 (step), fig2 (sinusoid), fig3 (growing sinusoid), fig4 (pseudorandom).
    #[arg(long)]
    preset: Option<String>,

    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (default: config `out`, else the current directory).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,

    #[arg(long)]
    trials: Option<usize>,

    /// Overrides the config's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse(args: Args) -> Result<RunOptions, String> {
    let mode = match args.mode.as_deref() {
        None | Some("run") => None,
        Some(m) => Some(m.parse::<RunMode>()?),
    };
    let preset = args.preset.as_deref().map(str::parse::<Preset>).transpose()?;
    Ok(RunOptions {
        mode,
        preset,
        config: args.config,
        out: args.out,
        plot: args.plot,
        trials: args.trials,
        seed: args.seed,
    })
}

fn main() -> ExitCode {
    let opts = match parse(Args::parse()) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(&opts) {
        Ok(report) => {
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            println!("{} finished in {:.2} s", report.mode, report.wall_seconds);
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
