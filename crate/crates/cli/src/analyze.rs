//! `duet analyze ...`: JSON reports on stdout, optional CSV for plotting.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::{Args, Subcommand};
use duet::analysis::{
    agreement, delta_logp, grad_report, mean_report, per_id_variance, sign_test, summarize_sbs,
    AgreementSample, DeltaLogp, GradReport, SbsSummary, Vote,
};
use duet::judge::{audit_pool, audit_scores, TaskSpec, DEFAULT_AUDIT_MAX_RATE};
use duet::seqmodel::{Modality, TokenSequence};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{io, setup, ConfigArgs};

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Text vs speech gradient geometry, per layer and global.
    Grads(GradsArgs),
    /// Per-token log-probability shift between two checkpoints.
    Dlogp(DlogpArgs),
    /// Within-ID variance of repeated-sample scores.
    Diversity(DiversityArgs),
    /// Judge-vs-human agreement metrics on both axes.
    Agreement(AgreementArgs),
    /// Two-sided sign test on side-by-side wins and losses.
    Signtest(SigntestArgs),
}

#[derive(Debug, Args)]
pub struct SequenceSource {
    #[command(flatten)]
    config: ConfigArgs,
    /// Token sequences, one JSON object per line; defaults to the task's
    /// oracle demonstrations.
    #[arg(long, value_name = "FILE")]
    sequences: Option<PathBuf>,
    /// Also write a plot-ready CSV here.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradsArgs {
    #[command(flatten)]
    source: SequenceSource,
    /// Policy checkpoint; defaults to the base policy built from the config.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DlogpArgs {
    #[command(flatten)]
    source: SequenceSource,
    #[arg(long, value_name = "FILE")]
    base: PathBuf,
    #[arg(long, value_name = "FILE")]
    tuned: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    /// Lines of `{"id": ..., "score": ...}`.
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Lines of `{"id", "judge_semantic", "judge_acoustic", "human_semantic",
    /// "human_acoustic"}`.
    #[arg(long, value_name = "FILE", required_unless_present = "audit", conflicts_with = "audit")]
    scores: Option<PathBuf>,
    /// Score a synthetic audit pool instead: noisy judge against the
    /// noise-free judge as the human reference.
    #[arg(long)]
    audit: bool,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 40)]
    ids: usize,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// Upper bound of the per-sample token corruption rate.
    #[arg(long, default_value_t = DEFAULT_AUDIT_MAX_RATE)]
    max_rate: f64,
    /// Write the scored audit samples here (same format as --scores).
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SigntestArgs {
    #[arg(long, required_unless_present = "votes", requires = "losses")]
    wins: Option<u64>,
    #[arg(long)]
    losses: Option<u64>,
    #[arg(long, default_value_t = 0)]
    ties: u64,
    /// Per-item rater votes, one JSON array of "A" | "B" | "TIE" per line.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["wins", "losses"])]
    votes: Option<PathBuf>,
}

fn sequences(task: &TaskSpec, src: &SequenceSource) -> Result<Vec<TokenSequence>, CliError> {
    let seqs = match &src.sequences {
        Some(path) => {
            let seqs: Vec<TokenSequence> = io::read_jsonl(path)?;
            for (i, s) in seqs.iter().enumerate() {
                s.validate(&task.vocab)
                    .map_err(|e| CliError::usage(anyhow!("{}: sequence {}: {e}", path.display(), i + 1)))?;
            }
            seqs
        }
        None => task
            .prompts
            .iter()
            .map(|p| task.oracle_demo(p.id))
            .collect::<duet::Result<_>>()?,
    };
    if seqs.is_empty() {
        return Err(CliError::usage(anyhow!("no sequences to analyze")));
    }
    Ok(seqs)
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(CliError::runtime)?;
    for r in rows {
        w.write_record(&r).map_err(CliError::runtime)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::runtime(anyhow!("{e}")))?;
    io::write_atomic(path, &bytes)
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Serialize)]
struct GradsOutput {
    n_sequences: usize,
    mean: GradReport,
    per_sequence: Vec<GradReport>,
}

fn grads(args: GradsArgs) -> Result<(), CliError> {
    let cfg = setup::load_config(&args.source.config)?;
    let task = setup::task(&cfg)?;
    let params = setup::policy(&cfg, &task, args.checkpoint.as_deref())?;
    let seqs = sequences(&task, &args.source)?;
    let per_sequence = seqs
        .iter()
        .map(|s| grad_report(&params, s))
        .collect::<duet::Result<Vec<_>>>()?;
    let mean = mean_report(&per_sequence).expect("nonempty");
    if let Some(path) = &args.source.csv {
        let rows = mean
            .layers
            .iter()
            .chain(std::iter::once(&mean.global))
            .map(|g| {
                vec![
                    g.layer.clone(),
                    g.text_norm.to_string(),
                    g.speech_norm.to_string(),
                    cell(g.cosine),
                    cell(g.ratio),
                ]
            })
            .collect();
        write_csv(path, &["layer", "text_norm", "speech_norm", "cosine", "ratio"], rows)?;
    }
    io::print_json(&GradsOutput {
        n_sequences: seqs.len(),
        mean,
        per_sequence,
    })
}

#[derive(Debug, Serialize)]
struct DlogpOutput {
    n_sequences: usize,
    /// Pooled over every position of every sequence.
    mean_text: Option<f64>,
    mean_speech: Option<f64>,
    mean_all: Option<f64>,
    per_sequence: Vec<DeltaLogp>,
}

fn pooled(reports: &[DeltaLogp], keep: impl Fn(Modality) -> bool) -> Option<f64> {
    let (s, n) = reports
        .iter()
        .flat_map(|r| &r.positions)
        .filter(|p| keep(p.modality))
        .fold((0.0, 0usize), |(s, n), p| (s + p.delta, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn dlogp(args: DlogpArgs) -> Result<(), CliError> {
    let cfg = setup::load_config(&args.source.config)?;
    let task = setup::task(&cfg)?;
    let base = setup::load_checkpoint(&args.base)?;
    let tuned = setup::load_checkpoint(&args.tuned)?;
    let seqs = sequences(&task, &args.source)?;
    let per_sequence = seqs
        .iter()
        .map(|s| delta_logp(&base, &tuned, s))
        .collect::<duet::Result<Vec<_>>>()?;
    if let Some(path) = &args.source.csv {
        let rows = per_sequence
            .iter()
            .enumerate()
            .flat_map(|(i, r)| {
                r.positions.iter().map(move |p| {
                    vec![
                        i.to_string(),
                        p.position.to_string(),
                        p.modality.name().to_string(),
                        p.delta.to_string(),
                    ]
                })
            })
            .collect();
        write_csv(path, &["sequence", "position", "modality", "delta"], rows)?;
    }
    io::print_json(&DlogpOutput {
        n_sequences: seqs.len(),
        mean_text: pooled(&per_sequence, |m| m == Modality::Text),
        mean_speech: pooled(&per_sequence, |m| m == Modality::Speech),
        mean_all: pooled(&per_sequence, |_| true),
        per_sequence,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreLine {
    id: String,
    score: f64,
}

fn diversity(args: DiversityArgs) -> Result<(), CliError> {
    let lines: Vec<ScoreLine> = io::read_jsonl(&args.scores)?;
    let report = per_id_variance(&lines.into_iter().map(|l| (l.id, l.score)).collect::<Vec<_>>())?;
    if let Some(path) = &args.csv {
        let rows = report
            .per_id
            .iter()
            .map(|(id, v)| vec![id.clone(), v.to_string()])
            .collect();
        write_csv(path, &["id", "variance"], rows)?;
    }
    io::print_json(&report)
}

fn agreement_cmd(args: AgreementArgs) -> Result<(), CliError> {
    let samples: Vec<AgreementSample> = match &args.scores {
        Some(path) => io::read_jsonl(path)?,
        None => {
            let cfg = setup::load_config(&args.config)?;
            let task = setup::task(&cfg)?;
            let pool = audit_pool(&task, args.ids, args.samples, args.max_rate, cfg.judge.seed)?;
            let scored = audit_scores(&task, &cfg.judge, &pool, 0)?;
            if let Some(path) = &args.dump {
                io::write_atomic(path, &io::to_jsonl(&scored))?;
            }
            scored
        }
    };
    io::print_json(&agreement(&samples)?)
}

#[derive(Debug, Serialize)]
struct SigntestOutput {
    #[serde(flatten)]
    summary: SbsSummary,
    n_items: u64,
}

fn signtest(args: SigntestArgs) -> Result<(), CliError> {
    let summary = match &args.votes {
        Some(path) => {
            let items: Vec<Vec<Vote>> = io::read_jsonl(path)?;
            summarize_sbs(&items)?
        }
        None => {
            let (wins, losses) = (args.wins.unwrap_or(0), args.losses.unwrap_or(0));
            SbsSummary {
                wins,
                losses,
                ties: args.ties,
                p_value: sign_test(wins, losses),
            }
        }
    };
    io::print_json(&SigntestOutput {
        n_items: summary.wins + summary.losses + summary.ties,
        summary,
    })
}

pub fn run(cmd: AnalyzeCommand) -> Result<(), CliError> {
    match cmd {
        AnalyzeCommand::Grads(a) => grads(a),
        AnalyzeCommand::Dlogp(a) => dlogp(a),
        AnalyzeCommand::Diversity(a) => diversity(a),
        AnalyzeCommand::Agreement(a) => agreement_cmd(a),
        AnalyzeCommand::Signtest(a) => signtest(a),
    }
}
