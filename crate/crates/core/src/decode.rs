//! Decoding the head matrices into cells, a center estimate and a fitted box.

use std::collections::BTreeSet;

/// `(row, col)` grid cells selected by a threshold sweep.
pub type CellSet = BTreeSet<(usize, usize)>;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::grid::ProbMatrix;
use crate::mask::{roi_mask_from_box, ROI_GRID};
use crate::net::LocalizationOutput;

/// Decode thresholds and box-update gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    pub roi_threshold: f64,
    pub center_threshold: f64,
    /// Per-frame scale change is clamped to `1 +- scale_gain`.
    pub scale_gain: f64,
    /// 0 freezes the scale, 1 applies the measured scale directly.
    pub scale_smoothing: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            roi_threshold: 0.09,
            center_threshold: 0.18,
            scale_gain: 0.3,
            scale_smoothing: 0.5,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("roi_threshold", self.roi_threshold),
            ("center_threshold", self.center_threshold),
        ] {
            if !(t.is_finite() && t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1), got {t}"
                )));
            }
        }
        if !(self.scale_gain.is_finite() && (0.0..1.0).contains(&self.scale_gain)) {
            return Err(Error::InvalidConfig(format!(
                "scale_gain must lie in [0, 1), got {}",
                self.scale_gain
            )));
        }
        if !(self.scale_smoothing.is_finite() && (0.0..=1.0).contains(&self.scale_smoothing)) {
            return Err(Error::InvalidConfig(format!(
                "scale_smoothing must lie in [0, 1], got {}",
                self.scale_smoothing
            )));
        }
        Ok(())
    }
}

/// Decoded quantities for one output pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    /// 14-grid cells at or above the ROI threshold.
    pub roi_cells: CellSet,
    /// 7-grid cells at or above the center threshold.
    pub center_cells: CellSet,
    /// Mean `(row, col)` of the qualifying center cells.
    pub center_point: Option<(f64, f64)>,
    /// Maximum ROI probability.
    pub confidence: f64,
}

/// All cells with probability `>= threshold`.
///
/// Even-order matrices are swept through a 2x2 max-pool with recorded argmax
/// first: a block whose maximum falls below the threshold bounds all four of
/// its cells, so only winning blocks are expanded. The result is identical
/// to an exhaustive scan.
pub fn extract_roi_cells(probs: &ProbMatrix, threshold: f64) -> CellSet {
    let n = probs.order();
    let mut cells = BTreeSet::new();
    if n.is_multiple_of(2) {
        for br in 0..n / 2 {
            for bc in 0..n / 2 {
                let mut block_max = f64::NEG_INFINITY;
                let mut arg = (0, 0);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = probs.get(2 * br + dy, 2 * bc + dx);
                        if v > block_max {
                            block_max = v;
                            arg = (2 * br + dy, 2 * bc + dx);
                        }
                    }
                }
                if block_max < threshold {
                    continue;
                }
                cells.insert(arg);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let at = (2 * br + dy, 2 * bc + dx);
                        if probs.get(at.0, at.1) >= threshold {
                            cells.insert(at);
                        }
                    }
                }
            }
        }
    } else {
        for r in 0..n {
            for c in 0..n {
                if probs.get(r, c) >= threshold {
                    cells.insert((r, c));
                }
            }
        }
    }
    cells
}

/// Qualifying center cells and their mean `(row, col)` coordinate, or `None`
/// when no cell reaches the threshold.
pub fn extract_center(probs: &ProbMatrix, threshold: f64) -> (CellSet, Option<(f64, f64)>) {
    let n = probs.order();
    let mut cells = BTreeSet::new();
    for r in 0..n {
        for c in 0..n {
            if probs.get(r, c) >= threshold {
                cells.insert((r, c));
            }
        }
    }
    if cells.is_empty() {
        return (cells, None);
    }
    let count = cells.len() as f64;
    let sum_r: usize = cells.iter().map(|&(r, _)| r).sum();
    let sum_c: usize = cells.iter().map(|&(_, c)| c).sum();
    let point = (sum_r as f64 / count, sum_c as f64 / count);
    (cells, Some(point))
}

/// Runs both extractions on a network output.
pub fn localize(output: &LocalizationOutput, cfg: &LocalizerConfig) -> Localization {
    let roi_cells = extract_roi_cells(&output.roi_probs, cfg.roi_threshold);
    let (center_cells, center_point) = extract_center(&output.center_probs, cfg.center_threshold);
    Localization {
        roi_cells,
        center_cells,
        center_point,
        confidence: output.roi_probs.max(),
    }
}

/// Moves and rescales the previous box from one decode.
///
/// Translation: the box center moves to the decoded center point (7-grid
/// units mapped to patch pixels). Scale: the ratio of decoded ROI cells to
/// the previous box's own 14-grid cell count, square-rooted, clamped to
/// `1 +- scale_gain` and blended by `scale_smoothing`. Empty decodes leave
/// the corresponding component unchanged, so a fully silent output returns
/// the previous box. The result is kept inside the patch by translation
/// rather than truncation, which preserves the scale bound.
pub fn fit_box(
    prev_box: &BoundingBox,
    loc: &Localization,
    cfg: &LocalizerConfig,
    patch_side: f64,
) -> BoundingBox {
    let cell7 = patch_side / 7.0;
    let (cx, cy) = match loc.center_point {
        Some((row, col)) => ((col + 0.5) * cell7, (row + 0.5) * cell7),
        None => prev_box.center(),
    };

    let scale = if loc.roi_cells.is_empty() {
        1.0
    } else {
        let prev_cells = roi_mask_from_box(prev_box, patch_side, ROI_GRID)
            .map(|m| m.count_ones())
            .unwrap_or(1)
            .max(1);
        let raw = (loc.roi_cells.len() as f64 / prev_cells as f64).sqrt();
        let clamped = raw.clamp(1.0 - cfg.scale_gain, 1.0 + cfg.scale_gain);
        1.0 - cfg.scale_smoothing + cfg.scale_smoothing * clamped
    };

    let w = (prev_box.w * scale).min(patch_side);
    let h = (prev_box.h * scale).min(patch_side);
    let x = (cx - w / 2.0).clamp(0.0, patch_side - w);
    let y = (cy - h / 2.0).clamp(0.0, patch_side - h);
    BoundingBox::new(x, y, w, h).expect("fitted box is valid by construction")
}
