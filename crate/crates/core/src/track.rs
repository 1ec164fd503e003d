//! Frame-to-frame tracking by localization.

use crate::decode::{fit_box, localize, LocalizerConfig};
use crate::error::{Error, Result};
use crate::geometry::{classify_size, BoundingBox, SizeClass};
use crate::image::ImageBuf;
use crate::net::{forward, ModelParameters};

/// Tracker state carried across frames. Parameters are shared read-only, so
/// several trackers can follow different objects through one model.
pub struct TrackerState<'a> {
    bbox: BoundingBox,
    window_scale: f64,
    size_class: SizeClass,
    localizer: LocalizerConfig,
    params: &'a ModelParameters,
    frame_w: usize,
    frame_h: usize,
}

/// Square search window centered on a box.
fn search_window(bbox: &BoundingBox, window_scale: f64) -> (f64, f64, f64) {
    let side = window_scale * bbox.w.max(bbox.h);
    let (cx, cy) = bbox.center();
    (cx - side / 2.0, cy - side / 2.0, side)
}

/// Translates a box into the frame and caps its dimensions at the frame
/// size, preserving dimensions whenever possible.
fn clamp_into_frame(x: f64, y: f64, w: f64, h: f64, fw: f64, fh: f64) -> BoundingBox {
    let w = w.min(fw);
    let h = h.min(fh);
    let x = x.clamp(0.0, fw - w);
    let y = y.clamp(0.0, fh - h);
    BoundingBox::new(x, y, w, h).expect("clamped box is valid")
}

impl<'a> TrackerState<'a> {
    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn size_class(&self) -> SizeClass {
        self.size_class
    }

    /// Current search window as `(x, y, side)`.
    pub fn window(&self) -> (f64, f64, f64) {
        search_window(&self.bbox, self.window_scale)
    }
}

/// Starts a tracker on the user-provided box in the first frame.
pub fn track_init<'a>(
    frame: &ImageBuf,
    initial_box: BoundingBox,
    params: &'a ModelParameters,
    window_scale: f64,
    localizer: LocalizerConfig,
) -> Result<TrackerState<'a>> {
    localizer.validate()?;
    if !(window_scale.is_finite() && window_scale >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "window_scale must be >= 1, got {window_scale}"
        )));
    }
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    if !initial_box.fits_within(fw, fh) {
        return Err(Error::BoxOutsideFrame(format!(
            "initial box ({}, {}, {}, {}) exceeds {fw}x{fh} frame",
            initial_box.x, initial_box.y, initial_box.w, initial_box.h
        )));
    }
    let (_, _, side) = search_window(&initial_box, window_scale);
    Ok(TrackerState {
        bbox: initial_box,
        window_scale,
        size_class: classify_size(side, side),
        localizer,
        params,
        frame_w: frame.width(),
        frame_h: frame.height(),
    })
}

/// One tracking step: crop the search window, route it through the network,
/// decode, refit the box in patch coordinates and map it back to the frame.
/// A silent decode keeps the previous box.
pub fn track_update(state: &mut TrackerState, frame: &ImageBuf) -> Result<BoundingBox> {
    if frame.width() != state.frame_w || frame.height() != state.frame_h {
        return Err(Error::ShapeMismatch(format!(
            "frame is {}x{} but the tracker was initialized on {}x{}",
            frame.width(),
            frame.height(),
            state.frame_w,
            state.frame_h
        )));
    }
    let (wx, wy, wside) = search_window(&state.bbox, state.window_scale);
    let size_class = classify_size(wside, wside);
    let patch_side = size_class.side();
    let patch = frame.sample_window(wx, wy, wside, patch_side);

    let to_patch = patch_side as f64 / wside;
    let prev_in_patch = clamp_into_frame(
        (state.bbox.x - wx) * to_patch,
        (state.bbox.y - wy) * to_patch,
        state.bbox.w * to_patch,
        state.bbox.h * to_patch,
        patch_side as f64,
        patch_side as f64,
    );

    let output = forward(state.params, &patch, size_class)?;
    let loc = localize(&output, &state.localizer);
    let fitted = fit_box(&prev_in_patch, &loc, &state.localizer, patch_side as f64);

    let to_frame = wside / patch_side as f64;
    let next = clamp_into_frame(
        fitted.x * to_frame + wx,
        fitted.y * to_frame + wy,
        fitted.w * to_frame,
        fitted.h * to_frame,
        state.frame_w as f64,
        state.frame_h as f64,
    );
    state.bbox = next;
    state.size_class = size_class;
    Ok(next)
}
