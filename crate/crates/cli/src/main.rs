use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ptraj_cli::{output_root, plot, run_experiment, verify, CliError, ExperimentConfig, OUTPUT_ROOT_VAR};

#[derive(Parser)]
#[command(name = "ptraj", version, about = "Pseudo-spectral Navier–Stokes trajectory studies")]
struct Cli {
    /// Worker threads (0 = all cores); overrides the config's `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a config file.
    Run {
        config: PathBuf,
        /// Artifact root; the config's `output` is resolved against it.
        #[arg(long, env = OUTPUT_ROOT_VAR)]
        output_root: Option<PathBuf>,
    },
    /// Write SVG plots for an artifact directory.
    Plot { dir: PathBuf },
    /// Re-check an artifact directory against its CSVs.
    Verify { dir: PathBuf },
}

fn fail(msg: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output_root: root } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e, CliError::EXIT_CODE as u8),
            };
            if let Some(t) = cli.threads {
                if let Err(e) = cfg.set("threads", t.to_string()) {
                    return fail(e, CliError::EXIT_CODE as u8);
                }
            }
            let root = root.unwrap_or_else(output_root);
            match run_experiment(&cfg, &root) {
                Ok(out) => {
                    for a in &out.summary.assertions {
                        println!("{a}");
                    }
                    if let Some(e) = &out.summary.error {
                        eprintln!("error: {e}");
                    }
                    println!("artifacts: {}", out.dir.display());
                    ExitCode::from(out.exit_code() as u8)
                }
                Err(e) => fail(e, CliError::EXIT_CODE as u8),
            }
        }
        Command::Plot { dir } => match plot::plot_emit(&dir) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e, 2),
        },
        Command::Verify { dir } => match verify::verify(&dir) {
            Ok(v) => {
                for c in &v.checks {
                    println!("{c}");
                }
                if v.ok() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(e, 2),
        },
    }
}
