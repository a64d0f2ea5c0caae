use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use levy_rds::harness::{check_lines, load_config, run, ExperimentKind};

/// Runs one experiment and writes CSVs, plot scripts and `manifest.toml` to the output directory.
/// Exits with 1 if any check fails and 2 on configuration errors.
#[derive(Parser, Debug)]
#[command(name = "levy-rds", version)]
struct Cli {
    /// simulate-levy, ito-conjugacy, marcus-conjugacy, attractor, linearize or verify-all.
    #[arg(value_parser = parse_kind)]
    kind: ExperimentKind,
    /// TOML experiment config. Its `kind` is replaced by the positional argument.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, env = "LEVY_RDS_SEED")]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`, then `out/<kind>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: levy_rds::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match load_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    cfg.kind = cli.kind;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(cli.kind.name()));
    let manifest = match run(&cfg, &out) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for line in check_lines(&manifest) {
        println!("{line}");
    }
    if let Some(e) = &manifest.error {
        eprintln!("error: {e}");
    }
    println!("{} outputs in {}, {:.1} s", manifest.outputs.len(), out.display(), manifest.wall_time_s);
    if manifest.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
