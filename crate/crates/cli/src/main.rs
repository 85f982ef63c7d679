use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decomptab_cli::{corpus, run, Command, Options, RunMode};

/// Decomposition tables for multitiered experiments.
#[derive(Parser)]
#[command(name = "decomptab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Report the balance verdict and efficiencies of every step.
    Check(Common),
    /// Print the decomposition table.
    Decompose(Common),
    /// Cross-check projector spectra in floating point.
    Oracle(Common),
    /// Write the bundled example corpus to a directory.
    Generate {
        #[arg(default_value = "corpus")]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Left,
    Right,
    Both,
}

#[derive(Args)]
struct Common {
    /// Experiment spec file.
    spec: PathBuf,
    /// Tab-separated output for diffing.
    #[arg(long)]
    machine: bool,
    /// ASCII symbols instead of Unicode.
    #[arg(long)]
    ascii: bool,
    #[arg(long, value_enum, default_value = "left")]
    mode: ModeArg,
    /// Efficiencies from traces only, assuming balance.
    #[arg(long)]
    fast: bool,
    /// Oracle tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            machine: self.machine,
            ascii: self.ascii,
            mode: match self.mode {
                ModeArg::Left => RunMode::Left,
                ModeArg::Right => RunMode::Right,
                ModeArg::Both => RunMode::Both,
            },
            fast: self.fast,
            tol: self.tol,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (cmd, common) = match cli.command {
        Cmd::Check(c) => (Command::Check, c),
        Cmd::Decompose(c) => (Command::Decompose, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
        Cmd::Generate { dir } => {
            return match corpus::write_corpus(&dir) {
                Ok(names) => {
                    for n in names {
                        println!("{}", dir.join(n).display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", dir.display());
                    ExitCode::from(1)
                }
            };
        }
    };
    let out = run(cmd, &common.spec, &common.options());
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code as u8)
}
