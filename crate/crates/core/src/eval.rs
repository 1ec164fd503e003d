//! Sequence evaluation: IoU series, segment failure accounting, Monte-Carlo
//! re-initialization, and the grid-resolution error metric.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::LocalizerConfig;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::grid::{GridMask, ProbMatrix};
use crate::image::ImageBuf;
use crate::net::ModelParameters;
use crate::track::{track_init, track_update};

/// Evaluation settings: tracker geometry plus the failure rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalConfig {
    pub window_scale: f64,
    pub localizer: LocalizerConfig,
    /// Number of checkpoint segments the sequence is divided into.
    pub segments: usize,
    /// A segment fails when IoU stays below this for `failure_frames`
    /// consecutive frames inside it.
    pub failure_iou: f64,
    pub failure_frames: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            window_scale: 2.0,
            localizer: LocalizerConfig::default(),
            segments: 3,
            failure_iou: 0.05,
            failure_frames: 15,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.localizer.validate()?;
        if !(self.window_scale.is_finite() && self.window_scale >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "window_scale must be >= 1, got {}",
                self.window_scale
            )));
        }
        if self.segments == 0 {
            return Err(Error::InvalidConfig("segments must be at least 1".into()));
        }
        if self.failure_frames == 0 {
            return Err(Error::InvalidConfig(
                "failure_frames must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Results of tracking one sequence.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRecord {
    pub iou_series: Vec<f64>,
    pub mean_iou: f64,
    /// Failed segments, in order.
    pub segment_failed: Vec<bool>,
    /// Number of failed segments.
    pub failures: usize,
    /// Throughput of the forward+decode path, excluding scoring and I/O.
    pub fps: f64,
}

/// Applies the failure rule to an IoU series: a segment fails when the IoU
/// stays below `failure_iou` for `failure_frames` consecutive frames inside
/// it, and a failed segment fails every later segment too.
pub fn score_series(ious: &[f64], cfg: &EvalConfig) -> (Vec<bool>, usize) {
    let n = ious.len();
    let mut failed = vec![false; cfg.segments];
    let mut lost = false;
    for (seg, flag) in failed.iter_mut().enumerate() {
        let start = seg * n / cfg.segments;
        let end = ((seg + 1) * n / cfg.segments).min(n);
        if lost {
            *flag = true;
            continue;
        }
        let mut run = 0usize;
        for &iou in &ious[start..end] {
            if iou < cfg.failure_iou {
                run += 1;
                if run >= cfg.failure_frames {
                    lost = true;
                    *flag = true;
                    break;
                }
            } else {
                run = 0;
            }
        }
    }
    let failures = failed.iter().filter(|&&f| f).count();
    (failed, failures)
}

fn eval_from(
    frames: &[ImageBuf],
    ground_truth: &[BoundingBox],
    init_box: BoundingBox,
    params: &ModelParameters,
    cfg: &EvalConfig,
) -> Result<EvalRecord> {
    let mut state = track_init(
        &frames[0],
        init_box,
        params,
        cfg.window_scale,
        cfg.localizer,
    )?;
    let mut ious = Vec::with_capacity(frames.len());
    ious.push(init_box.iou(&ground_truth[0]));
    let mut tracked_seconds = 0.0;
    for (frame, truth) in frames.iter().zip(ground_truth).skip(1) {
        let started = Instant::now();
        let out = track_update(&mut state, frame)?;
        tracked_seconds += started.elapsed().as_secs_f64();
        ious.push(out.iou(truth));
    }
    let mean_iou = ious.iter().sum::<f64>() / ious.len() as f64;
    let (segment_failed, failures) = score_series(&ious, cfg);
    let updates = frames.len().saturating_sub(1);
    let fps = if tracked_seconds > 0.0 {
        updates as f64 / tracked_seconds
    } else {
        f64::INFINITY
    };
    Ok(EvalRecord {
        iou_series: ious,
        mean_iou,
        segment_failed,
        failures,
        fps,
    })
}

/// Tracks a sequence initialized on the first ground-truth box and scores
/// IoU per frame.
pub fn evaluate_sequence(
    frames: &[ImageBuf],
    ground_truth: &[BoundingBox],
    params: &ModelParameters,
    cfg: &EvalConfig,
) -> Result<EvalRecord> {
    cfg.validate()?;
    if frames.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frames vs {} ground-truth boxes",
            frames.len(),
            ground_truth.len()
        )));
    }
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    eval_from(frames, ground_truth, ground_truth[0], params, cfg)
}

/// Repeats the evaluation with stochastically perturbed initializations.
///
/// Run 0 uses the exact ground-truth box. Runs `1..runs` move the initial
/// center by up to `jitter` of each dimension and rescale dimensions by up
/// to `jitter`, drawn uniformly from a per-run seeded generator.
pub fn monte_carlo_eval(
    frames: &[ImageBuf],
    ground_truth: &[BoundingBox],
    params: &ModelParameters,
    cfg: &EvalConfig,
    runs: usize,
    jitter: f64,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    if frames.len() != ground_truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frames vs {} ground-truth boxes",
            frames.len(),
            ground_truth.len()
        )));
    }
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(jitter.is_finite() && (0.0..1.0).contains(&jitter)) {
        return Err(Error::InvalidConfig(format!(
            "jitter must lie in [0, 1), got {jitter}"
        )));
    }
    let truth = ground_truth[0];
    let (fw, fh) = (frames[0].width() as f64, frames[0].height() as f64);
    let mut records = Vec::with_capacity(runs);
    for run in 0..runs {
        let init = if run == 0 {
            truth
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64));
            let mut u = |span: f64| {
                if span > 0.0 {
                    rng.random_range(-span..=span)
                } else {
                    0.0
                }
            };
            let (cx, cy) = truth.center();
            let cx = cx + u(jitter * truth.w);
            let cy = cy + u(jitter * truth.h);
            let w = (truth.w * (1.0 + u(jitter))).min(fw);
            let h = (truth.h * (1.0 + u(jitter))).min(fh);
            let x = (cx - w / 2.0).clamp(0.0, fw - w);
            let y = (cy - h / 2.0).clamp(0.0, fh - h);
            BoundingBox::new(x, y, w, h)?
        };
        records.push(eval_from(frames, ground_truth, init, params, cfg)?);
    }
    Ok(records)
}

/// L1 error between a predicted probability matrix and a binary ground
/// truth. A 14-order prediction against a 28-order truth is upsampled first;
/// any other disagreement is rejected.
pub fn l1_matrix_error(pred: &ProbMatrix, truth: &GridMask) -> Result<f64> {
    let diff_sum = |cells: &Array2<f64>, truth: &GridMask| -> f64 {
        cells
            .iter()
            .zip(truth.cells().iter())
            .map(|(&p, &t)| (p - f64::from(t)).abs())
            .sum()
    };
    if pred.order() == truth.order() {
        Ok(diff_sum(pred.cells(), truth))
    } else if pred.order() * 2 == truth.order() {
        Ok(diff_sum(upsample_roi(pred).cells(), truth))
    } else {
        Err(Error::ShapeMismatch(format!(
            "prediction order {} cannot be compared to truth order {}",
            pred.order(),
            truth.order()
        )))
    }
}

/// Splits every cell into a 2x2 block carrying a quarter of its mass, so the
/// total stays the same.
pub fn upsample_roi(pred: &ProbMatrix) -> ProbMatrix {
    let n = pred.order();
    let mut out = Array2::zeros((2 * n, 2 * n));
    for r in 0..n {
        for c in 0..n {
            let v = pred.get(r, c) / 4.0;
            for dy in 0..2 {
                for dx in 0..2 {
                    out[(2 * r + dy, 2 * c + dx)] = v;
                }
            }
        }
    }
    ProbMatrix::from_cells_unchecked(out)
}
