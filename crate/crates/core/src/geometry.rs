//! Boxes, size classes and the IoU metric shared by every other module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounding box in pixel coordinates. `(x, y)` is the top-left
/// corner; `w` and `h` are strictly positive side lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite components ({x}, {y}, {w}, {h})"
            )));
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::InvalidBox(format!("negative origin ({x}, {y})")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "non-positive dimensions {w}x{h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// True when the box lies fully inside a `frame_w` x `frame_h` frame.
    pub fn fits_within(&self, frame_w: f64, frame_h: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= frame_w && self.bottom() <= frame_h
    }

    fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        inter / union
    }
}

/// The three input resolutions the network routes between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeClass {
    S56,
    S224,
    S448,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::S56, SizeClass::S224, SizeClass::S448];

    /// Input side length in pixels.
    pub fn side(&self) -> usize {
        match self {
            SizeClass::S56 => 56,
            SizeClass::S224 => 224,
            SizeClass::S448 => 448,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SizeClass::S56 => "s56",
            SizeClass::S224 => "s224",
            SizeClass::S448 => "s448",
        }
    }
}

impl std::fmt::Display for SizeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Picks the class whose side is nearest to `max(height, width)`.
///
/// Boundaries sit at the midpoints 140 and 336; exact midpoints go to the
/// larger class.
pub fn classify_size(height: f64, width: f64) -> SizeClass {
    let m = height.max(width);
    if m < 140.0 {
        SizeClass::S56
    } else if m < 336.0 {
        SizeClass::S224
    } else {
        SizeClass::S448
    }
}
