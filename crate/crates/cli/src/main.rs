use clap::{Args, Parser, Subcommand};
use sounderlab::error::Error;
use sounderlab_cli::pipeline::{run_pipeline, BandSelection, PipelineConfig, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

/// Synthetic channel-sounding laboratory pipeline.
///
/// Exit codes: 0 success, 1 validation failure, 2 missing stage inputs,
/// 3 internal numeric failure.
#[derive(Parser)]
#[command(name = "sounderlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the direction-scan campaign (CIR records).
    Synth(RunArgs),
    /// Calibrate, correct clock drift, extract and cluster MPCs.
    Postproc(RunArgs),
    /// Compute per-position statistics and ensemble fits.
    Characterize(RunArgs),
    /// Emit the comparison report and plot-data files.
    Report(RunArgs),
    /// Run every stage in order.
    All(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Output directory for all artifacts.
    #[arg(long, env = "SOUNDERLAB_OUT", default_value = "out")]
    out: PathBuf,

    /// Override the scenario RNG seed.
    #[arg(long, env = "SOUNDERLAB_SEED")]
    seed: Option<u64>,

    /// Band selection: a carrier in GHz (e.g. 140 or 220) or `both`.
    #[arg(long, default_value = "both")]
    band: String,

    /// Start from this stage, reusing earlier artifacts on disk.
    #[arg(long, value_enum)]
    stage_from: Option<Stage>,

    /// Reference characteristic table for the comparison report (JSON).
    #[arg(long)]
    reference: Option<PathBuf>,

    /// Also export synthesized CIRs as long-format CSV (large).
    #[arg(long)]
    cir_csv: bool,
}

fn build_config(args: &RunArgs, target: Stage) -> Result<PipelineConfig, Error> {
    Ok(PipelineConfig {
        scenario_path: args.config.clone(),
        out_dir: args.out.clone(),
        bands: BandSelection::parse(&args.band)?,
        start: args.stage_from.unwrap_or(match target {
            Stage::Report => {
                // bare `report` re-renders from existing artifacts
                Stage::Report
            }
            s => s,
        }),
        target,
        seed_override: args.seed,
        reference_path: args.reference.clone(),
        cir_csv: args.cir_csv,
    })
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::MissingInput(_) => 2,
        Error::Numeric(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's message but our exit-code contract
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (args, target) = match &cli.command {
        Command::Synth(a) => (a, Stage::Synth),
        Command::Postproc(a) => (a, Stage::Postproc),
        Command::Characterize(a) => (a, Stage::Characterize),
        Command::Report(a) => (a, Stage::Report),
        Command::All(a) => (a, Stage::Report),
    };
    let mut cfg = match build_config(args, target) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };
    if matches!(cli.command, Command::All(_)) && args.stage_from.is_none() {
        cfg.start = Stage::Synth;
    }
    match run_pipeline(&cfg) {
        Ok(manifest) => {
            println!(
                "wrote {} artifacts to {}",
                manifest.artifacts.len(),
                cfg.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
