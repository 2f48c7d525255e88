//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit
//! if any failed. Runs without the libtest harness so the lines always show.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::criteria::{self, Check};

type Criterion = (&'static str, fn() -> Check);

/// Every file a run writes except the manifest, which carries wall-clock
/// timestamps.
const RUN_FILES: [&str; 6] = [
    "config.toml",
    "metrics.jsonl",
    "lambda.csv",
    "eval.json",
    "checkpoints/init.ckpt",
    "checkpoints/final.ckpt",
];

fn train_into(dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_duet"))
        .args(["train", "-o"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("duet train failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn reproducible_runs() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train_into(&a)?;
    train_into(&b)?;
    let mut bytes = 0;
    for f in RUN_FILES {
        let x = fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            return Err(format!("{f} differs between identical runs"));
        }
        bytes += x.len();
    }
    let steps = fs::read_to_string(a.join("metrics.jsonl")).unwrap().lines().count();
    Ok(format!("two default runs ({steps} steps) identical across {} files, {bytes} bytes", RUN_FILES.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("gradients match finite differences", criteria::gradient_oracles),
        ("modality gradients are additive", criteria::additivity),
        ("text-only masks are local", criteria::masked_locality),
        ("gate algebra", criteria::gate_algebra),
        ("dynamic hybrid keeps the SFT anchor", || criteria::anchor_floor(&[0, 1, 2])),
        ("statistics match brute force", criteria::statistics_oracles),
        ("preference pairs match brute force", criteria::pair_oracle),
        ("directional reproduction", criteria::directional_reproduction),
        ("lambda tracks variance", criteria::lambda_trajectory),
        ("judge noise audit", criteria::audit_gap),
        ("runs are byte-reproducible", reproducible_runs),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
