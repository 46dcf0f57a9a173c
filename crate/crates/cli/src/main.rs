use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pathfk_cli::{list_fixtures, CliError, ExperimentConfig, EXIT_CODES};

fn exit_code_help() -> String {
    let mut s = String::from("Exit codes:\n");
    for (code, meaning) in EXIT_CODES {
        s.push_str(&format!("  {code}  {meaning}\n"));
    }
    s.push_str("\nOn failure a one-line JSON record {\"error\", \"code\", \"message\"} is printed to stderr.");
    s
}

/// Runs path-dependent BSDE / PPDE verification experiments from a TOML config.
#[derive(Debug, Parser)]
#[command(name = "pathfk", version, after_help = exit_code_help())]
struct Args {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH", required_unless_present = "list_fixtures")]
    config: Option<PathBuf>,

    /// Overrides `simulation.seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, value_name = "N", default_value_t = 0)]
    threads: usize,

    /// Print the fixture catalogue and exit.
    #[arg(long)]
    list_fixtures: bool,

    /// Also write the main batch's Brownian increments to this CSV.
    #[arg(long, value_name = "PATH")]
    export_batch: Option<PathBuf>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let path = args.config.as_ref().expect("clap enforces --config");
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &args.out {
        let cwd = std::env::current_dir()?;
        cfg.set_output_dir(cwd.join(out));
    }
    let (report, manifest) = pathfk_cli::run(&cfg, args.threads)?;
    if let Some(dest) = &args.export_batch {
        pathfk_cli::export_batch(&cfg, dest)?;
    }
    for row in &report.rows {
        if row.verdict == pathfk_cli::Verdict::Fail {
            eprintln!("FAIL {} t={} value={} reference={:?}", row.label, row.t, row.value, row.reference);
        }
    }
    println!(
        "{} on {}: {} rows, {} failed, {:.2}s -> {}",
        manifest.experiment,
        manifest.fixture,
        manifest.rows,
        manifest.failures,
        manifest.wall_time_seconds,
        cfg.output_dir().display()
    );
    if manifest.failures > 0 {
        return Err(CliError::VerdictFail {
            failed: manifest.failures,
            total: manifest.rows,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_fixtures {
        print!("{}", list_fixtures());
        return ExitCode::SUCCESS;
    }
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
