//! Batch CLI for the repurchase-prediction pipeline.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 stage failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rebuy::dataio::parse_transactions;
use rebuy::pipeline::{run_until, PipelineConfig, PipelineError, Stage, REPORT_FILE};
use rebuy::synth::{gen_synthetic, write_transactions_csv, SynthConfig};
use rebuy::util::derive_seed;

#[derive(Parser)]
#[command(name = "rebuy", version, about = "Customer repurchase prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic transaction log
    Gen {
        /// SynthConfig JSON file
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse the input log and report row counts
    Ingest(StageArgs),
    /// Compute RFMST features (and everything before them)
    Featurize(StageArgs),
    /// Balance the training split with SMOTE-ENN
    Balance(StageArgs),
    /// Tune model hyperparameters
    Tune(StageArgs),
    /// Fit the tuned members and save the voting model
    Train(StageArgs),
    /// Run the repeated resampled evaluation
    Evaluate(StageArgs),
    /// Print the evaluation report summary
    Report(StageArgs),
    /// Run every stage
    Pipeline(StageArgs),
}

#[derive(clap::Args)]
struct StageArgs {
    /// PipelineConfig JSON file
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every configured seed (streams derived per purpose)
    #[arg(long)]
    seed: Option<u64>,
}

const USAGE_ERROR: u8 = 1;
const STAGE_ERROR: u8 = 2;

fn load_pipeline_config(args: &StageArgs) -> Result<PipelineConfig, String> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut cfg: PipelineConfig =
        serde_json::from_str(&text).map_err(|e| format!("bad config: {e}"))?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.split_seed = derive_seed(seed, 0);
        cfg.smote.seed = derive_seed(seed, 1);
        cfg.tuner.seed = derive_seed(seed, 2);
        cfg.train_seed = derive_seed(seed, 3);
        cfg.eval_seed = derive_seed(seed, 4);
    }
    Ok(cfg)
}

fn run_stage(args: &StageArgs, stage: Stage) -> Result<(), (u8, String)> {
    let cfg = load_pipeline_config(args).map_err(|e| (USAGE_ERROR, e))?;
    let outcome = run_until(&cfg, stage).map_err(|e| {
        let code = match e {
            PipelineError::Config(_) => USAGE_ERROR,
            PipelineError::Stage { .. } => STAGE_ERROR,
        };
        (code, e.to_string())
    })?;
    println!(
        "ok: {} artifact(s) in {}",
        outcome.artifacts.len(),
        outcome.out_dir.display()
    );
    Ok(())
}

fn cmd_gen(config: &PathBuf, out: &PathBuf, seed: Option<u64>) -> Result<(), (u8, String)> {
    let text = fs::read_to_string(config)
        .map_err(|e| (USAGE_ERROR, format!("cannot read {}: {e}", config.display())))?;
    let mut synth: SynthConfig =
        serde_json::from_str(&text).map_err(|e| (USAGE_ERROR, format!("bad config: {e}")))?;
    if let Some(seed) = seed {
        synth.seed = seed;
    }
    let txs = gen_synthetic(&synth).map_err(|e| (STAGE_ERROR, e.to_string()))?;
    let file = fs::File::create(out)
        .map_err(|e| (STAGE_ERROR, format!("cannot create {}: {e}", out.display())))?;
    write_transactions_csv(file, &txs).map_err(|e| (STAGE_ERROR, e.to_string()))?;
    println!("wrote {} transactions to {}", txs.len(), out.display());
    Ok(())
}

fn cmd_ingest(args: &StageArgs) -> Result<(), (u8, String)> {
    let cfg = load_pipeline_config(args).map_err(|e| (USAGE_ERROR, e))?;
    let file = fs::File::open(&cfg.input)
        .map_err(|e| (STAGE_ERROR, format!("cannot open {}: {e}", cfg.input.display())))?;
    let outcome = parse_transactions(file, &cfg.columns, cfg.parse_mode)
        .map_err(|e| (STAGE_ERROR, e.to_string()))?;
    println!(
        "parsed {} transactions ({} skipped)",
        outcome.transactions.len(),
        outcome.skipped.len()
    );
    for (line, reason) in outcome.skipped.iter().take(10) {
        eprintln!("  line {line}: {reason}");
    }
    Ok(())
}

fn cmd_report(args: &StageArgs) -> Result<(), (u8, String)> {
    let cfg = load_pipeline_config(args).map_err(|e| (USAGE_ERROR, e))?;
    let path = cfg.out_dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        (
            STAGE_ERROR,
            format!("no report at {} (run `evaluate` first): {e}", path.display()),
        )
    })?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| (STAGE_ERROR, e.to_string()))?;
    println!(
        "rounds: {}  mean P: {:.4}  mean R: {:.4}  mean F1: {:.4}",
        v["rounds"].as_array().map_or(0, |a| a.len()),
        v["mean"]["P"].as_f64().unwrap_or(f64::NAN),
        v["mean"]["R"].as_f64().unwrap_or(f64::NAN),
        v["mean"]["F1"].as_f64().unwrap_or(f64::NAN),
    );
    if let Some(flags) = v["flags"].as_array() {
        for f in flags {
            eprintln!("flag: {}", f.as_str().unwrap_or("?"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, not usage errors
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Gen { config, out, seed } => cmd_gen(config, out, *seed),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Featurize(args) => run_stage(args, Stage::Featurize),
        Command::Balance(args) => run_stage(args, Stage::Balance),
        Command::Tune(args) => run_stage(args, Stage::Tune),
        Command::Train(args) => run_stage(args, Stage::Train),
        Command::Evaluate(args) => run_stage(args, Stage::Evaluate),
        Command::Report(args) => cmd_report(args),
        Command::Pipeline(args) => run_stage(args, Stage::Evaluate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
