use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use tagesim::experiments::{run_scenario, ScenarioConfig, ScenarioId};

/// Runs one simulation scenario and writes its results as CSV.
#[derive(Debug, Parser)]
#[command(name = "sim", version)]
struct Args {
    /// bit-effect | distance-sweep | update-policy | outcome-effect | counter-probe |
    /// search | lpc-compare | isolation | alias-detect | estimate
    scenario: String,
    /// JSON scenario config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run independent parameter points in parallel.
    #[arg(long)]
    parallel: bool,
}

fn load(args: &Args) -> Result<(ScenarioId, ScenarioConfig)> {
    let id: ScenarioId = args.scenario.parse()?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::from_json(&text)?
        }
        None => ScenarioConfig::default(),
    };
    cfg.parallel |= args.parallel;
    Ok((id, cfg))
}

fn run(args: &Args, id: ScenarioId, cfg: &ScenarioConfig) -> Result<i32> {
    let out = run_scenario(id, cfg, args.seed)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => {
            Box::new(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
        }
        None => Box::new(io::stdout().lock()),
    };
    out.table.write_csv(sink).context("writing csv")?;
    Ok(out.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|(id, cfg)| run(&args, id, &cfg));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
