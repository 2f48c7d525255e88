use std::path::PathBuf;

use clap::Args;
use duet::judge::PreferencePair;
use duet::trainer::{all_prompts, build_pairs, PairSummary};
use serde::Serialize;

use crate::error::CliError;
use crate::{io, setup, ConfigArgs};

#[derive(Debug, Args)]
pub struct BuildPairsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Policy to sample from; defaults to the base policy built from the config.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Candidates sampled per prompt [default: judge.pair_candidates, 8].
    #[arg(long, short = 'n')]
    samples: Option<usize>,
    /// Output file, one pair per line.
    #[arg(long, short = 'o', value_name = "FILE", default_value = "pairs.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct PairLine<'a> {
    prompt_id: usize,
    #[serde(flatten)]
    pair: &'a PreferencePair,
}

#[derive(Debug, Serialize)]
struct Report {
    out: String,
    samples_per_prompt: usize,
    #[serde(flatten)]
    summary: PairSummary,
}

pub fn run(args: BuildPairsArgs) -> Result<(), CliError> {
    let mut cfg = setup::load_config(&args.config)?;
    if let Some(n) = args.samples {
        cfg.judge.pair_candidates = n;
        cfg.validate()?;
    }
    let task = setup::task(&cfg)?;
    let policy = setup::policy(&cfg, &task, args.checkpoint.as_deref())?;
    let (pairs, summary) = build_pairs(
        &policy,
        &task,
        &all_prompts(&task),
        &cfg.judge,
        cfg.train.sampling(),
        cfg.judge.pair_candidates,
        cfg.train.seed,
    )?;
    let lines: Vec<PairLine> = pairs
        .iter()
        .map(|(prompt_id, pair)| PairLine {
            prompt_id: *prompt_id,
            pair,
        })
        .collect();
    io::write_atomic(&args.out, &io::to_jsonl(&lines))?;
    io::print_json(&Report {
        out: args.out.display().to_string(),
        samples_per_prompt: cfg.judge.pair_candidates,
        summary,
    })
}
