use std::path::PathBuf;
use std::process::ExitCode;

use aam_cli::{exit_code, render, run, Format, Machine, RunConfig};
use clap::Parser;

/// Run an abstract machine or analysis on a program file.
#[derive(Parser, Debug)]
#[command(name = "aam", version)]
struct Args {
    machine: Machine,
    /// Contour depth for k-CFA-style analyses (default 0).
    #[arg(long)]
    k: Option<usize>,
    /// Analyse under a single global store.
    #[arg(long)]
    widen: bool,
    /// Collect garbage after every step.
    #[arg(long)]
    gc: bool,
    /// Step bound for concrete machines (default 10000).
    #[arg(long)]
    fuel: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Wrap the program in the security annotator for these permissions.
    #[arg(long, value_delimiter = ',')]
    annotate: Option<Vec<String>>,
    file: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = RunConfig {
        machine: args.machine,
        k: args.k,
        widen: args.widen,
        gc: args.gc,
        fuel: args.fuel,
        format: args.format,
        annotate: args.annotate,
    };
    let source = match std::fs::read_to_string(&args.file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("aam: cannot read {}: {e}", args.file.display());
            return ExitCode::from(1);
        }
    };
    match run(&cfg, &source) {
        Ok(report) => {
            print!("{}", render(&report, cfg.format));
            ExitCode::from(exit_code(&report) as u8)
        }
        Err(e) => {
            eprintln!("aam: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
