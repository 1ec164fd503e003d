//! In-memory RGB images and the window resampling used for crops.

use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// An RGB image with intensities in `[0, 1]`, stored channel-first
/// (`[3, height, width]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    data: Array3<f64>,
}

impl ImageBuf {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.shape()[0] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "image must have 3 channels, got {}",
                data.shape()[0]
            )));
        }
        Ok(Self { data })
    }

    /// A `height` x `width` image filled with one color.
    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut data = Array3::zeros((3, height, width));
        for (c, &v) in rgb.iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), c).fill(v);
        }
        Self { data }
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    /// Paints an axis-aligned rectangle. Pixels whose centers fall inside the
    /// box are set; used to build synthetic scenes.
    pub fn fill_rect(&mut self, rect: &BoundingBox, rgb: [f64; 3]) {
        let x0 = rect.x.max(0.0) as usize;
        let y0 = rect.y.max(0.0) as usize;
        let x1 = (rect.right().ceil() as usize).min(self.width());
        let y1 = (rect.bottom().ceil() as usize).min(self.height());
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if px >= rect.x && px <= rect.right() && py >= rect.y && py <= rect.bottom() {
                    for (c, &v) in rgb.iter().enumerate() {
                        self.data[(c, y, x)] = v;
                    }
                }
            }
        }
    }

    /// Bilinear sample at continuous coordinates with edge replication.
    fn sample(&self, c: usize, x: f64, y: f64) -> f64 {
        let w = self.width() as isize;
        let h = self.height() as isize;
        let clamp = |v: isize, hi: isize| v.clamp(0, hi - 1) as usize;
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let x0 = clamp(x0f as isize, w);
        let x1 = clamp(x0f as isize + 1, w);
        let y0 = clamp(y0f as isize, h);
        let y1 = clamp(y0f as isize + 1, h);
        let v00 = self.data[(c, y0, x0)];
        let v01 = self.data[(c, y0, x1)];
        let v10 = self.data[(c, y1, x0)];
        let v11 = self.data[(c, y1, x1)];
        let top = v00 + (v01 - v00) * fx;
        let bot = v10 + (v11 - v10) * fx;
        top + (bot - top) * fy
    }

    /// Resamples a square window of side `window_side` anchored at
    /// `(window_x, window_y)` into an `out_side` x `out_side` patch.
    ///
    /// Window regions outside the frame replicate the nearest edge pixel, so
    /// border crops need no separate padding pass.
    pub fn sample_window(
        &self,
        window_x: f64,
        window_y: f64,
        window_side: f64,
        out_side: usize,
    ) -> ImageBuf {
        let scale = window_side / out_side as f64;
        let mut out = Array3::zeros((3, out_side, out_side));
        for c in 0..3 {
            for v in 0..out_side {
                let sy = window_y + (v as f64 + 0.5) * scale - 0.5;
                for u in 0..out_side {
                    let sx = window_x + (u as f64 + 0.5) * scale - 0.5;
                    out[(c, v, u)] = self.sample(c, sx, sy);
                }
            }
        }
        ImageBuf { data: out }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = Array3::zeros((3, h, w));
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                data[(c, y as usize, x as usize)] = f64::from(px.0[c]) / 255.0;
            }
        }
        Ok(Self { data })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        let mut img = image::RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px =
                    [0, 1, 2].map(|c| (self.data[(c, y, x)].clamp(0.0, 1.0) * 255.0).round() as u8);
                img.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        img.save(path).map_err(|e| Error::Image {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}
