//! Adapters that normalize per-frame box files into annotated frame streams.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::ImageBuf;
use crate::mask::AnnotatedFrame;

/// Supported annotation conventions.
///
/// * `plain` - one line per frame, `x y w h`.
/// * `nfs`   - `frame_id x1 y1 x2 y2 [extras...]`, corner coordinates.
/// * `lasot` - `x1,y1,x2,y2` (comma or whitespace separated), corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    Plain,
    Nfs,
    Lasot,
}

impl FromStr for AnnotationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" => Ok(Self::Plain),
            "nfs" => Ok(Self::Nfs),
            "lasot" => Ok(Self::Lasot),
            other => Err(Error::InvalidConfig(format!(
                "unknown annotation format '{other}' (expected plain, nfs or lasot)"
            ))),
        }
    }
}

fn numeric_fields(line: &str) -> Vec<std::result::Result<f64, std::num::ParseFloatError>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::parse::<f64>)
        .collect()
}

/// Parses one annotation line into the plain `(x, y, w, h)` convention.
pub fn parse_box_line(
    line: &str,
    format: AnnotationFormat,
) -> std::result::Result<BoundingBox, String> {
    let fields = numeric_fields(line);
    let take =
        |vals: &[std::result::Result<f64, _>], at: usize| -> std::result::Result<f64, String> {
            vals.get(at)
                .ok_or_else(|| format!("expected at least {} numeric fields", at + 1))?
                .clone()
                .map_err(|e| format!("field {}: {e}", at + 1))
        };
    let bbox = match format {
        AnnotationFormat::Plain => {
            if fields.len() != 4 {
                return Err(format!("expected 4 fields 'x y w h', got {}", fields.len()));
            }
            let v: std::result::Result<Vec<f64>, String> =
                (0..4).map(|i| take(&fields, i)).collect();
            let v = v?;
            BoundingBox::new(v[0], v[1], v[2], v[3])
        }
        AnnotationFormat::Lasot => {
            if fields.len() != 4 {
                return Err(format!(
                    "expected 4 fields 'x1,y1,x2,y2', got {}",
                    fields.len()
                ));
            }
            let v: std::result::Result<Vec<f64>, String> =
                (0..4).map(|i| take(&fields, i)).collect();
            let v = v?;
            BoundingBox::new(v[0], v[1], v[2] - v[0], v[3] - v[1])
        }
        AnnotationFormat::Nfs => {
            if fields.len() < 5 {
                return Err(format!(
                    "expected 'frame_id x1 y1 x2 y2 [extras]', got {} fields",
                    fields.len()
                ));
            }
            let v: std::result::Result<Vec<f64>, String> =
                (1..5).map(|i| take(&fields, i)).collect();
            let v = v?;
            BoundingBox::new(v[0], v[1], v[2] - v[0], v[3] - v[1])
        }
    };
    bbox.map_err(|e| e.to_string())
}

/// Reads an annotation file into boxes only (no images), in frame order.
pub fn read_ground_truth(path: &Path, format: AnnotationFormat) -> Result<Vec<BoundingBox>> {
    let text = fs::read_to_string(path)?;
    let mut boxes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bbox = parse_box_line(line, format).map_err(|msg| Error::Annotation {
            path: path.display().to_string(),
            line: idx + 1,
            msg,
        })?;
        boxes.push(bbox);
    }
    Ok(boxes)
}

/// Reads an image manifest: one image path per line, relative paths resolved
/// against the manifest's directory.
pub fn read_image_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let p = Path::new(l.trim());
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect())
}

/// A lazily loading stream of annotated frames.
#[derive(Debug)]
pub struct AnnotationStream {
    entries: Vec<(PathBuf, BoundingBox)>,
    next: usize,
}

impl AnnotationStream {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Iterator for AnnotationStream {
    type Item = Result<AnnotatedFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let (path, bbox) = self.entries.get(self.next)?.clone();
        let source_id = format!("{}#{}", path.display(), self.next);
        self.next += 1;
        Some(load_frame(&path, bbox, source_id))
    }
}

fn load_frame(path: &Path, bbox: BoundingBox, source_id: String) -> Result<AnnotatedFrame> {
    let image = ImageBuf::load_png(path)?;
    if !bbox.fits_within(image.width() as f64, image.height() as f64) {
        return Err(Error::BoxOutsideFrame(format!(
            "{source_id}: box ({}, {}, {}, {}) exceeds {}x{} image",
            bbox.x,
            bbox.y,
            bbox.w,
            bbox.h,
            image.width(),
            image.height()
        )));
    }
    Ok(AnnotatedFrame {
        image,
        bbox,
        source_id,
    })
}

/// Pairs an annotation file with an image manifest into a frame stream.
///
/// Annotation lines and manifest lines must correspond one to one.
pub fn ingest_annotations(
    annotations: &Path,
    image_manifest: &Path,
    format: AnnotationFormat,
) -> Result<AnnotationStream> {
    let boxes = read_ground_truth(annotations, format)?;
    let images = read_image_manifest(image_manifest)?;
    if boxes.len() != images.len() {
        return Err(Error::LengthMismatch(format!(
            "{} annotation lines vs {} manifest images",
            boxes.len(),
            images.len()
        )));
    }
    Ok(AnnotationStream {
        entries: images.into_iter().zip(boxes).collect(),
        next: 0,
    })
}
