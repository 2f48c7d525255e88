//! `duet train`: one recipe, one run directory.
//!
//! Layout (all paths relative to the run directory):
//! `config.toml`, `metrics.jsonl`, `lambda.csv`, `eval.json`,
//! `checkpoints/{init,final}.ckpt`, optional `checkpoints/step-NNNNNN.ckpt`,
//! and `manifest.json`, written last. Only the manifest carries timestamps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use chrono::{SecondsFormat, Utc};
use clap::Args;
use duet::config::ExperimentConfig;
use duet::seqmodel::{checkpoint, PolicyParams};
use duet::trainer::{train_loop_with, EvalMetrics, PairSummary, StepRecord};
use serde::Serialize;

use crate::error::CliError;
use crate::{io, setup, ConfigArgs};

/// Bumped whenever a run-directory file changes shape.
pub const RUN_FORMAT_VERSION: u32 = 1;

pub const RUN_ROOT_ENV: &str = "DUET_RUN_ROOT";

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Start from this checkpoint instead of the base policy. It also serves
    /// as the frozen reference.
    #[arg(long, value_name = "FILE")]
    init: Option<PathBuf>,
    /// Run directory. Defaults to `$DUET_RUN_ROOT/<recipe>-seed<seed>`,
    /// with `$DUET_RUN_ROOT` falling back to `runs`.
    #[arg(long, short = 'o', value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also checkpoint every N steps (0 keeps only init and final).
    #[arg(long, value_name = "N", default_value_t = 0)]
    checkpoint_every: usize,
    /// Replace an existing completed run in the target directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Serialize)]
struct EvalFile {
    initial: EvalMetrics,
    #[serde(rename = "final")]
    final_: EvalMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<PairSummary>,
}

#[derive(Debug, Serialize)]
struct Artifacts {
    config: String,
    metrics: String,
    lambda: String,
    eval: String,
    checkpoints: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    format_version: u32,
    tool_version: &'static str,
    recipe: String,
    seed: u64,
    steps: usize,
    started_at: String,
    finished_at: String,
    init_params_sha256: String,
    final_params_sha256: String,
    artifacts: Artifacts,
    config: ExperimentConfig,
}

fn recipe_slug(cfg: &ExperimentConfig) -> String {
    cfg.train
        .recipe
        .to_string()
        .to_lowercase()
        .replace('(', "-")
        .replace(')', "")
}

pub fn default_run_dir(cfg: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os(RUN_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{}-seed{}", recipe_slug(cfg), cfg.train.seed))
}

fn lambda_csv(records: &[StepRecord]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "v_t", "g_t", "lambda_raw", "lambda_t", "sft_weight"])
        .map_err(CliError::runtime)?;
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in records.iter().filter(|r| r.lambda_t.is_some()) {
        w.write_record([
            r.step.to_string(),
            cell(r.v_t),
            cell(r.g_t),
            cell(r.lambda_raw),
            cell(r.lambda_t),
            cell(r.sft_weight),
        ])
        .map_err(CliError::runtime)?;
    }
    w.into_inner().map_err(|e| CliError::runtime(anyhow!("{e}")))
}

fn save_checkpoint(dir: &Path, name: &str, params: &PolicyParams, list: &mut Vec<String>) -> Result<(), CliError> {
    let rel = format!("checkpoints/{name}");
    io::write_atomic(&dir.join(&rel), &checkpoint::encode(params))?;
    list.push(rel);
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let cfg = setup::load_config(&args.config)?;
    let task = setup::task(&cfg)?;
    let init = setup::policy(&cfg, &task, args.init.as_deref())?;
    let dir = args.out.clone().unwrap_or_else(|| default_run_dir(&cfg));
    if dir.join("manifest.json").exists() && !args.force {
        return Err(CliError::usage(anyhow!(
            "`{}` already holds a completed run; pass --force to replace it",
            dir.display()
        )));
    }
    fs::create_dir_all(dir.join("checkpoints"))
        .map_err(|e| CliError::runtime(anyhow!("creating `{}`: {e}", dir.display())))?;
    let started_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    // A stale manifest would vouch for files this run is about to replace.
    let _ = fs::remove_file(dir.join("manifest.json"));

    io::write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    let mut checkpoints = Vec::new();
    save_checkpoint(&dir, "init.ckpt", &init, &mut checkpoints)?;
    let init_hash = checkpoint::content_hash(&init);

    let metrics_path = dir.join("metrics.jsonl");
    let file = fs::File::create(&metrics_path)
        .map_err(|e| CliError::runtime(anyhow!("creating `{}`: {e}", metrics_path.display())))?;
    let mut log = BufWriter::new(file);
    let every = args.checkpoint_every;
    let mut periodic = Vec::new();
    let artifact = train_loop_with(&cfg, &task, init, &mut |rec, params| {
        serde_json::to_writer(&mut log, rec)?;
        log.write_all(b"\n")?;
        let done = rec.step + 1;
        if every > 0 && done.is_multiple_of(every) && done < cfg.train.steps {
            let name = format!("step-{done:06}.ckpt");
            io::write_atomic(&dir.join("checkpoints").join(&name), &checkpoint::encode(params))
                .map_err(|e| duet::Error::Io(std::io::Error::other(e.to_string())))?;
            periodic.push(format!("checkpoints/{name}"));
        }
        Ok(())
    })
    .map_err(|e| CliError::from(e).context(format!("training into `{}`", dir.display())))?;
    log.flush().map_err(CliError::runtime)?;
    drop(log);
    checkpoints.extend(periodic);

    save_checkpoint(&dir, "final.ckpt", &artifact.params, &mut checkpoints)?;
    io::write_atomic(&dir.join("lambda.csv"), &lambda_csv(&artifact.records)?)?;
    io::write_atomic(
        &dir.join("eval.json"),
        &io::to_json_pretty(&EvalFile {
            initial: artifact.initial_eval,
            final_: artifact.final_eval,
            pairs: artifact.pair_summary,
        }),
    )?;

    let manifest = Manifest {
        format_version: RUN_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        recipe: cfg.train.recipe.to_string(),
        seed: cfg.train.seed,
        steps: cfg.train.steps,
        started_at,
        finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        init_params_sha256: init_hash,
        final_params_sha256: checkpoint::content_hash(&artifact.params),
        artifacts: Artifacts {
            config: "config.toml".into(),
            metrics: "metrics.jsonl".into(),
            lambda: "lambda.csv".into(),
            eval: "eval.json".into(),
            checkpoints,
        },
        config: cfg.clone(),
    };
    io::write_atomic(&dir.join("manifest.json"), &io::to_json_pretty(&manifest))?;

    let e = artifact.final_eval;
    println!(
        "{}: {} steps, final mean_reward {:.4}, semantic {:.4}, acoustic {:.4}, style TV {:.4}",
        dir.display(),
        cfg.train.steps,
        e.mean_reward,
        e.mean_semantic,
        e.mean_acoustic,
        e.speech_style_tv
    );
    Ok(())
}
