//! Sample archive: a manifest plus one binary record per training sample.
//!
//! Record layout: `u32` little-endian JSON header length, the JSON header,
//! the patch as little-endian f64 (channel-first), then the two target masks
//! as raw bytes (196 + 49).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gridloc_core::geometry::{BoundingBox, SizeClass};
use gridloc_core::grid::GridMask;
use gridloc_core::image::ImageBuf;
use gridloc_core::mask::{LocalizationTargets, TrainingSample, CENTER_GRID, ROI_GRID};

#[derive(Debug, Serialize, Deserialize)]
struct RecordHeader {
    size_class: String,
    patch_side: usize,
    adjusted_box: BoundingBox,
    source_id: String,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub seed: u64,
    pub window_scale: f64,
    pub samples_per_frame: usize,
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub records: Vec<String>,
    /// SHA-256 over all record bytes in manifest order.
    pub digest: String,
}

fn size_class_tag(sc: SizeClass) -> &'static str {
    sc.label()
}

fn size_class_from_tag(tag: &str) -> Result<SizeClass> {
    match tag {
        "s56" => Ok(SizeClass::S56),
        "s224" => Ok(SizeClass::S224),
        "s448" => Ok(SizeClass::S448),
        other => bail!("unknown size class tag '{other}'"),
    }
}

fn encode_record(sample: &TrainingSample, source_id: &str, seed: u64) -> Result<Vec<u8>> {
    let header = RecordHeader {
        size_class: size_class_tag(sample.size_class).to_string(),
        patch_side: sample.size_class.side(),
        adjusted_box: sample.adjusted_box,
        source_id: source_id.to_string(),
        seed,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in sample.patch.data().iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend(sample.targets.roi.cells().iter().copied());
    bytes.extend(sample.targets.center.cells().iter().copied());
    Ok(bytes)
}

fn decode_record(bytes: &[u8], name: &str) -> Result<TrainingSample> {
    if bytes.len() < 4 {
        bail!("{name}: record too short");
    }
    let header_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let header_end = 4 + header_len;
    if bytes.len() < header_end {
        bail!("{name}: truncated header");
    }
    let header: RecordHeader = serde_json::from_slice(&bytes[4..header_end])
        .with_context(|| format!("{name}: header decoding"))?;
    let size_class = size_class_from_tag(&header.size_class)?;
    let side = header.patch_side;
    if side != size_class.side() {
        bail!(
            "{name}: patch side {side} does not match {}",
            header.size_class
        );
    }
    let patch_len = 3 * side * side * 8;
    let masks_len = ROI_GRID * ROI_GRID + CENTER_GRID * CENTER_GRID;
    if bytes.len() != header_end + patch_len + masks_len {
        bail!(
            "{name}: expected {} bytes, found {}",
            header_end + patch_len + masks_len,
            bytes.len()
        );
    }
    let patch_values: Vec<f64> = bytes[header_end..header_end + patch_len]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let patch = ImageBuf::new(Array3::from_shape_vec((3, side, side), patch_values)?)?;

    let masks = &bytes[header_end + patch_len..];
    let roi = GridMask::from_cells(Array2::from_shape_vec(
        (ROI_GRID, ROI_GRID),
        masks[..ROI_GRID * ROI_GRID].to_vec(),
    )?)?;
    let center = GridMask::from_cells(Array2::from_shape_vec(
        (CENTER_GRID, CENTER_GRID),
        masks[ROI_GRID * ROI_GRID..].to_vec(),
    )?)?;

    let sample = TrainingSample {
        patch,
        size_class,
        targets: LocalizationTargets { roi, center },
        adjusted_box: header.adjusted_box,
    };
    // Stored targets must regenerate from the stored box.
    let regen = LocalizationTargets::from_box(&sample.adjusted_box, side as f64)?;
    if regen != sample.targets {
        bail!("{name}: targets do not regenerate from the stored box");
    }
    Ok(sample)
}

/// Writes samples plus a manifest carrying per-class counts and a content
/// digest.
pub fn write_archive(
    dir: &Path,
    samples: &[(TrainingSample, String, u64)],
    seed: u64,
    window_scale: f64,
    samples_per_frame: usize,
) -> Result<ArchiveManifest> {
    fs::create_dir_all(dir)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut records = Vec::new();
    let mut hasher = Sha256::new();
    for (i, (sample, source_id, sample_seed)) in samples.iter().enumerate() {
        let name = format!("sample_{i:05}.bin");
        let bytes = encode_record(sample, source_id, *sample_seed)?;
        hasher.update(&bytes);
        fs::write(dir.join(&name), &bytes)?;
        *counts
            .entry(size_class_tag(sample.size_class).to_string())
            .or_insert(0) += 1;
        records.push(name);
    }
    let manifest = ArchiveManifest {
        seed,
        window_scale,
        samples_per_frame,
        total: samples.len(),
        counts,
        records,
        digest: hex::encode(hasher.finalize()),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<ArchiveManifest> {
    let path = dir.join("manifest.json");
    let bytes =
        fs::read(&path).with_context(|| format!("reading archive manifest {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Loads every record listed by the manifest, verifying the content digest.
pub fn read_archive(dir: &Path) -> Result<Vec<TrainingSample>> {
    let manifest = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(manifest.records.len());
    let mut hasher = Sha256::new();
    for name in &manifest.records {
        let path: PathBuf = dir.join(name);
        let bytes =
            fs::read(&path).with_context(|| format!("reading record {}", path.display()))?;
        hasher.update(&bytes);
        samples.push(decode_record(&bytes, name)?);
    }
    let digest = hex::encode(hasher.finalize());
    if digest != manifest.digest {
        bail!(
            "archive digest mismatch: manifest says {}, records hash to {digest}",
            manifest.digest
        );
    }
    Ok(samples)
}
