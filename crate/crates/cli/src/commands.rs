//! The four subcommands behind the CLI surface.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::json;

use gridloc_core::annotations::{ingest_annotations, read_ground_truth};
use gridloc_core::eval::{evaluate_sequence, monte_carlo_eval, score_series};
use gridloc_core::geometry::BoundingBox;
use gridloc_core::mask::synthesize_sample;
use gridloc_core::net::{init_parameters, load_checkpoint, save_checkpoint};

use crate::archive::{read_archive, read_manifest, write_archive};
use crate::config::RunConfig;
use crate::reports;
use crate::Common;

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.anchor_paths(&common.config);
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

pub fn prepare(
    common: Common,
    seed: Option<u64>,
    window_scale: Option<f64>,
    samples_per_frame: Option<usize>,
    archive: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(v) = seed {
        cfg.prepare.seed = v;
    }
    if let Some(v) = window_scale {
        cfg.prepare.window_scale = v;
    }
    if let Some(v) = samples_per_frame {
        cfg.prepare.samples_per_frame = v;
    }
    if let Some(v) = archive {
        cfg.prepare.archive_dir = v;
    }
    cfg.validate()?;

    let format = cfg.dataset.format()?;
    let stream = ingest_annotations(&cfg.dataset.annotations, &cfg.dataset.images, format)?;
    let per_frame = cfg.prepare.samples_per_frame;
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (frame_idx, frame) in stream.enumerate() {
        let frame = match frame {
            Ok(f) => f,
            Err(e) => {
                failures.push(format!("frame {frame_idx}: {e}"));
                continue;
            }
        };
        for k in 0..per_frame {
            let sample_seed = cfg
                .prepare
                .seed
                .wrapping_add((frame_idx * per_frame + k) as u64);
            match synthesize_sample(&frame, sample_seed, cfg.prepare.window_scale) {
                Ok(s) => samples.push((s, frame.source_id.clone(), sample_seed)),
                Err(e) => failures.push(format!("frame {frame_idx} sample {k}: {e}")),
            }
        }
    }
    if !failures.is_empty() {
        bail!(
            "prepare hit {} errors:\n{}",
            failures.len(),
            failures.join("\n")
        );
    }

    let manifest = write_archive(
        &cfg.prepare.archive_dir,
        &samples,
        cfg.prepare.seed,
        cfg.prepare.window_scale,
        per_frame,
    )?;
    println!(
        "prepared {} samples into {} (digest {})",
        manifest.total,
        cfg.prepare.archive_dir.display(),
        &manifest.digest[..12]
    );
    for (class, count) in &manifest.counts {
        println!("  {class}: {count}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    common: Common,
    archive: Option<PathBuf>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    init_seed: Option<u64>,
    shuffle_seed: Option<u64>,
    checkpoint_every: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(v) = archive {
        cfg.prepare.archive_dir = v;
    }
    if let Some(v) = epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = init_seed {
        cfg.train.init_seed = v;
    }
    if let Some(v) = shuffle_seed {
        cfg.train.shuffle_seed = v;
    }
    if let Some(v) = checkpoint_every {
        cfg.train.checkpoint_every = v;
    }
    cfg.validate()?;

    let samples = read_archive(&cfg.prepare.archive_dir)
        .with_context(|| format!("loading archive {}", cfg.prepare.archive_dir.display()))?;
    let out_dir = &cfg.output.dir;
    fs::create_dir_all(out_dir)?;

    let mut params = init_parameters(cfg.train.init_seed, &cfg.network)?;
    params.version_tag = format!(
        "train-init{}-shuffle{}",
        cfg.train.init_seed, cfg.train.shuffle_seed
    );
    let train_cfg = cfg.train_config();
    let mut checkpoints: Vec<PathBuf> = Vec::new();
    let (trained, report) =
        gridloc_core::train::train(params, &samples, &train_cfg, |epoch, p| {
            let path = out_dir.join(format!("model_epoch_{epoch:04}.ckpt"));
            save_checkpoint(p, &path)?;
            checkpoints.push(path);
            Ok(())
        })?;

    let final_path = out_dir.join("model_final.ckpt");
    save_checkpoint(&trained, &final_path)?;
    let report_path = out_dir.join("train_report.csv");
    reports::write_train_report(&report, &report_path)?;

    let archive_manifest = read_manifest(&cfg.prepare.archive_dir)?;
    let run_manifest = json!({
        "archive": cfg.prepare.archive_dir.display().to_string(),
        "archive_digest": archive_manifest.digest,
        "final_checkpoint": final_path.display().to_string(),
        "checkpoints": checkpoints.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "report": report_path.display().to_string(),
        "epochs": cfg.train.epochs,
        "update_counts": report.update_counts,
    });
    fs::write(
        out_dir.join("train_manifest.json"),
        serde_json::to_vec_pretty(&run_manifest)?,
    )?;

    let total_steps: usize = report.update_counts.values().sum();
    println!(
        "trained {} epochs ({total_steps} steps) -> {}",
        cfg.train.epochs,
        final_path.display()
    );
    Ok(())
}

fn parse_init_box(text: &str) -> Result<BoundingBox> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        bail!("--init-box expects 'x,y,w,h', got '{text}'");
    }
    let nums: Result<Vec<f64>, _> = parts.iter().map(|s| s.parse::<f64>()).collect();
    let nums = nums.with_context(|| format!("parsing --init-box '{text}'"))?;
    BoundingBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(anyhow::Error::from)
}

pub fn track(
    common: Common,
    checkpoint: PathBuf,
    init_box: Option<String>,
    runs: Option<usize>,
    jitter: Option<f64>,
    window_scale: Option<f64>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(v) = runs {
        cfg.eval.runs = v;
    }
    if let Some(v) = jitter {
        cfg.eval.jitter = v;
    }
    if let Some(v) = window_scale {
        cfg.tracker.window_scale = v;
    }
    cfg.validate()?;

    let params = load_checkpoint(&checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let format = cfg.dataset.format()?;
    let stream = ingest_annotations(&cfg.dataset.annotations, &cfg.dataset.images, format)?;
    let mut frames = Vec::new();
    let mut truth = Vec::new();
    for frame in stream {
        let frame = frame?;
        truth.push(frame.bbox);
        frames.push(frame.image);
    }
    if frames.is_empty() {
        bail!("sequence is empty");
    }
    let mut ground_truth = truth.clone();
    if let Some(text) = init_box {
        let bbox = parse_init_box(&text)?;
        let (fw, fh) = (frames[0].width() as f64, frames[0].height() as f64);
        if !bbox.fits_within(fw, fh) {
            bail!(
                "--init-box ({}, {}, {}, {}) lies outside the {fw}x{fh} frame",
                bbox.x,
                bbox.y,
                bbox.w,
                bbox.h
            );
        }
        ground_truth[0] = bbox;
    }

    let out_dir = &cfg.output.dir;
    fs::create_dir_all(out_dir)?;
    let eval_cfg = cfg.eval_config();

    let record = evaluate_sequence(&frames, &ground_truth, &params, &eval_cfg)?;
    reports::write_iou_csv(&record, &out_dir.join("eval_iou.csv"))?;
    reports::write_eval_summary(&record, &out_dir.join("eval_summary.json"))?;
    println!(
        "tracked {} frames: mean IoU {:.4}, failures {}, {:.1} fps",
        record.iou_series.len(),
        record.mean_iou,
        record.failures,
        record.fps
    );

    if cfg.eval.runs > 1 {
        let mc = monte_carlo_eval(
            &frames,
            &ground_truth,
            &params,
            &eval_cfg,
            cfg.eval.runs,
            cfg.eval.jitter,
            cfg.eval.seed,
        )?;
        reports::write_monte_carlo_csv(&mc, &out_dir.join("monte_carlo.csv"))?;
        let failures: Vec<usize> = mc.iter().map(|r| r.failures).collect();
        println!(
            "monte carlo over {} runs (jitter {}): failures per run {:?}",
            cfg.eval.runs, cfg.eval.jitter, failures
        );
    }
    Ok(())
}

pub fn compare(common: Common, ours: PathBuf, externals: Vec<String>) -> Result<()> {
    let cfg = load_config(&common)?;
    cfg.validate()?;

    let our_series = reports::read_iou_csv(&ours)?;
    let format = cfg.dataset.format()?;
    let truth = read_ground_truth(&cfg.dataset.annotations, format)?;
    if truth.len() != our_series.len() {
        bail!(
            "length mismatch: {} ground-truth boxes vs {} IoU rows in {}",
            truth.len(),
            our_series.len(),
            ours.display()
        );
    }

    let mut columns: Vec<(String, Vec<f64>)> = vec![("ours".to_string(), our_series)];
    for spec in &externals {
        let Some((name, path)) = spec.split_once('=') else {
            bail!("--external expects NAME=PATH, got '{spec}'");
        };
        let boxes = reports::read_box_csv(std::path::Path::new(path))?;
        if boxes.len() != truth.len() {
            bail!(
                "length mismatch: tracker '{name}' has {} boxes but the sequence has {} frames",
                boxes.len(),
                truth.len()
            );
        }
        // Every tracker is scored by the same IoU implementation.
        let series: Vec<f64> = boxes.iter().zip(&truth).map(|(b, t)| b.iou(t)).collect();
        columns.push((name.to_string(), series));
    }

    let out_dir = &cfg.output.dir;
    fs::create_dir_all(out_dir)?;
    let merged = out_dir.join("comparison.csv");
    {
        use std::io::Write;
        let mut f = fs::File::create(&merged)?;
        let names: Vec<&str> = columns.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(f, "frame_index,{}", names.join(","))?;
        for i in 0..truth.len() {
            let cells: Vec<String> = columns.iter().map(|(_, s)| s[i].to_string()).collect();
            writeln!(f, "{i},{}", cells.join(","))?;
        }
    }

    let eval_cfg = cfg.eval_config();
    let mut summary = BTreeMap::new();
    for (name, series) in &columns {
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let (_, failures) = score_series(series, &eval_cfg);
        summary.insert(
            name.clone(),
            json!({ "mean_iou": mean, "failures": failures }),
        );
        println!("{name}: mean IoU {mean:.4}, failures {failures}");
    }
    fs::write(
        out_dir.join("comparison_summary.json"),
        serde_json::to_vec_pretty(&json!(summary))?,
    )?;
    println!("comparison written to {}", merged.display());
    Ok(())
}
