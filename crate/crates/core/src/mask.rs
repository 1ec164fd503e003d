//! Ground-truth grid synthesis: ROI and center masks from box annotations,
//! and randomized crop/resize sample production.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{classify_size, BoundingBox, SizeClass};
use crate::grid::GridMask;
use crate::image::ImageBuf;

/// Grid order of the ROI mask.
pub const ROI_GRID: usize = 14;
/// Grid order of the center mask.
pub const CENTER_GRID: usize = 7;

/// One annotated video frame: pixels plus the target's box.
#[derive(Debug, Clone)]
pub struct AnnotatedFrame {
    pub image: ImageBuf,
    pub bbox: BoundingBox,
    pub source_id: String,
}

/// Ground-truth matrices for one training patch.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationTargets {
    /// 14x14 ROI occupancy mask.
    pub roi: GridMask,
    /// 7x7 mask with a single 1 at the box center cell.
    pub center: GridMask,
}

impl LocalizationTargets {
    /// Regenerates both masks from a box in patch coordinates.
    pub fn from_box(bbox: &BoundingBox, patch_side: f64) -> Result<Self> {
        Ok(Self {
            roi: roi_mask_from_box(bbox, patch_side, ROI_GRID)?,
            center: center_mask_from_box(bbox, patch_side, CENTER_GRID)?,
        })
    }
}

/// A resized crop with its regenerated ground truth.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub patch: ImageBuf,
    pub size_class: SizeClass,
    pub targets: LocalizationTargets,
    /// The annotation box mapped into patch coordinates.
    pub adjusted_box: BoundingBox,
}

fn check_in_frame(bbox: &BoundingBox, frame_side: f64) -> Result<()> {
    if !bbox.fits_within(frame_side, frame_side) {
        return Err(Error::BoxOutsideFrame(format!(
            "box ({}, {}, {}, {}) exceeds {frame_side}x{frame_side} frame",
            bbox.x, bbox.y, bbox.w, bbox.h
        )));
    }
    Ok(())
}

/// Marks every cell of an `n` x `n` grid over the square frame that the box
/// overlaps with strictly positive area.
pub fn roi_mask_from_box(bbox: &BoundingBox, frame_side: f64, n: usize) -> Result<GridMask> {
    check_in_frame(bbox, frame_side)?;
    let cell = frame_side / n as f64;
    let mut mask = GridMask::zeros(n);
    for row in 0..n {
        let y0 = row as f64 * cell;
        let y1 = y0 + cell;
        let dy = bbox.bottom().min(y1) - bbox.y.max(y0);
        if dy <= 0.0 {
            continue;
        }
        for col in 0..n {
            let x0 = col as f64 * cell;
            let x1 = x0 + cell;
            let dx = bbox.right().min(x1) - bbox.x.max(x0);
            if dx > 0.0 {
                mask.set(row, col, 1);
            }
        }
    }
    Ok(mask)
}

/// Marks the single cell containing the box center. Cell intervals are
/// half-open, so a center on an interior cell boundary belongs to the cell
/// to its right/below; centers on the frame's far edge fall into the last
/// cell.
pub fn center_mask_from_box(bbox: &BoundingBox, frame_side: f64, n: usize) -> Result<GridMask> {
    check_in_frame(bbox, frame_side)?;
    let cell = frame_side / n as f64;
    let (cx, cy) = bbox.center();
    let col = ((cx / cell).floor() as usize).min(n - 1);
    let row = ((cy / cell).floor() as usize).min(n - 1);
    let mut mask = GridMask::zeros(n);
    mask.set(row, col, 1);
    Ok(mask)
}

/// Crops a square window around the annotation, resizes it to the nearest
/// size class and regenerates the ground truth in patch coordinates.
///
/// The window side is `window_scale * max(w, h)` and its placement is drawn
/// uniformly among positions that keep the whole box inside the window.
/// Deterministic for a given `rng_seed`.
pub fn synthesize_sample(
    frame: &AnnotatedFrame,
    rng_seed: u64,
    window_scale: f64,
) -> Result<TrainingSample> {
    if !(window_scale.is_finite() && window_scale >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "window_scale must be >= 1, got {window_scale}"
        )));
    }
    let bbox = frame.bbox;
    let window = window_scale * bbox.w.max(bbox.h);
    if !window.is_finite() || window < bbox.w || window < bbox.h {
        return Err(Error::BoxTooLarge(format!(
            "{}x{} box does not fit a window of side {window}",
            bbox.w, bbox.h
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut offset = |lo: f64, hi: f64| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let wx = offset(bbox.right() - window, bbox.x);
    let wy = offset(bbox.bottom() - window, bbox.y);

    let size_class = classify_size(window, window);
    let side = size_class.side();
    let patch = frame.image.sample_window(wx, wy, window, side);

    let scale = side as f64 / window;
    let adjusted_box = BoundingBox::new(
        ((bbox.x - wx) * scale).clamp(0.0, side as f64 - bbox.w * scale),
        ((bbox.y - wy) * scale).clamp(0.0, side as f64 - bbox.h * scale),
        bbox.w * scale,
        bbox.h * scale,
    )?;
    let targets = LocalizationTargets::from_box(&adjusted_box, side as f64)?;

    Ok(TrainingSample {
        patch,
        size_class,
        targets,
        adjusted_box,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    /// Per-pixel rasterization for integer-corner boxes in a frame whose
    /// cell side is an integer: each unit pixel inside the box marks the one
    /// cell containing it.
    fn rasterized_roi(
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        frame_side: usize,
        n: usize,
    ) -> GridMask {
        let cell = frame_side / n;
        assert_eq!(cell * n, frame_side);
        let mut mask = GridMask::zeros(n);
        for py in y0..y1 {
            for px in x0..x1 {
                mask.set(py / cell, px / cell, 1);
            }
        }
        mask
    }

    #[test]
    fn roi_mask_marks_exact_8x8_block() {
        let mask = roi_mask_from_box(&bb(128.0, 128.0, 256.0, 256.0), 448.0, ROI_GRID).unwrap();
        let mut expected = GridMask::zeros(ROI_GRID);
        for r in 4..=11 {
            for c in 4..=11 {
                expected.set(r, c, 1);
            }
        }
        assert_eq!(mask, expected);
    }

    #[test]
    fn roi_mask_full_frame_is_all_ones() {
        let mask = roi_mask_from_box(&bb(0.0, 0.0, 448.0, 448.0), 448.0, ROI_GRID).unwrap();
        assert_eq!(mask.count_ones(), ROI_GRID * ROI_GRID);
    }

    #[test]
    fn roi_mask_single_cell() {
        // 31.5 < 32 = cell side, so only cell (0, 0) is overlapped.
        let mask = roi_mask_from_box(&bb(0.0, 0.0, 31.5, 31.5), 448.0, ROI_GRID).unwrap();
        assert_eq!(mask.ones(), vec![(0, 0)]);
    }

    #[test]
    fn roi_mask_touching_boundary_does_not_bleed() {
        // Right edge exactly on the cell boundary: zero-width overlap with
        // column 1 must not set it.
        let mask = roi_mask_from_box(&bb(0.0, 0.0, 32.0, 32.0), 448.0, ROI_GRID).unwrap();
        assert_eq!(mask.ones(), vec![(0, 0)]);
    }

    #[test]
    fn roi_mask_rejects_out_of_frame() {
        assert!(roi_mask_from_box(&bb(400.0, 0.0, 100.0, 10.0), 448.0, ROI_GRID).is_err());
    }

    #[test]
    fn center_mask_marks_single_center_cell() {
        let mask =
            center_mask_from_box(&bb(128.0, 128.0, 256.0, 256.0), 448.0, CENTER_GRID).unwrap();
        assert_eq!(mask.ones(), vec![(4, 4)]);
    }

    #[test]
    fn center_mask_frame_center_is_middle_cell() {
        let mask = center_mask_from_box(&bb(192.0, 192.0, 64.0, 64.0), 448.0, CENTER_GRID).unwrap();
        assert_eq!(mask.ones(), vec![(3, 3)]);
    }

    #[test]
    fn center_mask_small_corner_box() {
        let mask = center_mask_from_box(&bb(0.0, 0.0, 64.0, 64.0), 448.0, CENTER_GRID).unwrap();
        assert_eq!(mask.ones(), vec![(0, 0)]);
    }

    #[test]
    fn center_mask_far_edge_clamps_to_last_cell() {
        let mask = center_mask_from_box(&bb(384.0, 384.0, 64.0, 64.0), 448.0, CENTER_GRID).unwrap();
        assert_eq!(mask.ones(), vec![(6, 6)]);
    }

    #[test]
    fn roi_mask_equals_rasterization_oracle_exhaustively() {
        // Every box with integer corners in a 56-pixel frame.
        let side = 56usize;
        for x0 in 0..side {
            for x1 in (x0 + 1)..=side {
                for y0 in 0..side {
                    for y1 in (y0 + 1)..=side {
                        let b = bb(x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64);
                        let got = roi_mask_from_box(&b, side as f64, ROI_GRID).unwrap();
                        let oracle = rasterized_roi(x0, y0, x1, y1, side, ROI_GRID);
                        assert_eq!(got, oracle, "box {b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn roi_ones_form_solid_rectangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let w: f64 = rng.random_range(0.5..448.0);
            let h: f64 = rng.random_range(0.5..448.0);
            let x: f64 = rng.random_range(0.0..(448.0 - w));
            let y: f64 = rng.random_range(0.0..(448.0 - h));
            let mask = roi_mask_from_box(&bb(x, y, w, h), 448.0, ROI_GRID).unwrap();
            let ones = mask.ones();
            let rmin = ones.iter().map(|&(r, _)| r).min().unwrap();
            let rmax = ones.iter().map(|&(r, _)| r).max().unwrap();
            let cmin = ones.iter().map(|&(_, c)| c).min().unwrap();
            let cmax = ones.iter().map(|&(_, c)| c).max().unwrap();
            assert_eq!(ones.len(), (rmax - rmin + 1) * (cmax - cmin + 1));
        }
    }

    #[test]
    fn roi_rectangle_contains_center_cell() {
        // Each 7-grid cell covers a 2x2 block of 14-grid cells.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let w: f64 = rng.random_range(1.0..200.0);
            let h: f64 = rng.random_range(1.0..200.0);
            let x: f64 = rng.random_range(0.0..(448.0 - w));
            let y: f64 = rng.random_range(0.0..(448.0 - h));
            let b = bb(x, y, w, h);
            let roi = roi_mask_from_box(&b, 448.0, ROI_GRID).unwrap();
            let center = center_mask_from_box(&b, 448.0, CENTER_GRID).unwrap();
            let (cr, cc) = center.ones()[0];
            let hit = (0..2).any(|dr| (0..2).any(|dc| roi.get(2 * cr + dr, 2 * cc + dc) == 1));
            assert!(hit, "center cell ({cr},{cc}) outside roi for {b:?}");
        }
    }

    fn demo_frame() -> AnnotatedFrame {
        let mut image = ImageBuf::filled(600, 800, [0.1; 3]);
        let bbox = bb(300.0, 200.0, 120.0, 80.0);
        image.fill_rect(&bbox, [0.9; 3]);
        AnnotatedFrame {
            image,
            bbox,
            source_id: "demo".into(),
        }
    }

    #[test]
    fn synthesize_is_deterministic_per_seed() {
        let frame = demo_frame();
        let a = synthesize_sample(&frame, 9, 2.0).unwrap();
        let b = synthesize_sample(&frame, 9, 2.0).unwrap();
        assert_eq!(a.adjusted_box, b.adjusted_box);
        assert_eq!(a.patch.data(), b.patch.data());
        let c = synthesize_sample(&frame, 10, 2.0).unwrap();
        assert_ne!(a.adjusted_box, c.adjusted_box);
    }

    #[test]
    fn synthesize_targets_regenerate_from_adjusted_box() {
        let frame = demo_frame();
        for seed in 0..40 {
            let s = synthesize_sample(&frame, seed, 2.0).unwrap();
            let regen =
                LocalizationTargets::from_box(&s.adjusted_box, s.size_class.side() as f64).unwrap();
            assert_eq!(s.targets, regen, "seed {seed}");
            assert!(s.targets.center.is_single_cell());
        }
    }

    #[test]
    fn synthesize_window_of_300_lands_in_s224() {
        // window_scale 2.5 over a 120-px box gives a 300-px window.
        let frame = demo_frame();
        let s = synthesize_sample(&frame, 1, 2.5).unwrap();
        assert_eq!(s.size_class, SizeClass::S224);
        assert_eq!(s.patch.height(), 224);
    }

    #[test]
    fn synthesize_unit_scale_centers_box() {
        // window == box: the only valid placement maps the box onto the
        // whole patch.
        let mut image = ImageBuf::filled(400, 400, [0.2; 3]);
        let bbox = bb(100.0, 150.0, 80.0, 80.0);
        image.fill_rect(&bbox, [0.8; 3]);
        let frame = AnnotatedFrame {
            image,
            bbox,
            source_id: "unit".into(),
        };
        let s = synthesize_sample(&frame, 77, 1.0).unwrap();
        assert_eq!(s.size_class, SizeClass::S56);
        assert!((s.adjusted_box.x - 0.0).abs() < 1e-9);
        assert!((s.adjusted_box.y - 0.0).abs() < 1e-9);
        assert!((s.adjusted_box.w - 56.0).abs() < 1e-9);
        assert_eq!(s.targets.roi.count_ones(), ROI_GRID * ROI_GRID);
        assert_eq!(s.targets.center.ones(), vec![(3, 3)]);
    }

    #[test]
    fn synthesize_rejects_bad_scale() {
        let frame = demo_frame();
        assert!(synthesize_sample(&frame, 0, 0.5).is_err());
    }

    #[test]
    fn masks_reject_zero_grid() {
        let cells = Array2::from_elem((2, 2), 3u8);
        assert!(GridMask::from_cells(cells).is_err());
    }
}
