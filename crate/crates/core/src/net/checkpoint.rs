//! Self-describing checkpoint container: a JSON header naming every
//! parameter array followed by little-endian f64 payload.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{segment_specs, ConvParams, ConvSpec, ModelParameters, TrunkParams, WidthConfig};

const MAGIC: &[u8; 8] = b"GRIDLOC1";
const FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in f64 elements.
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: u32,
    version_tag: String,
    width: WidthConfig,
    arrays: Vec<ArrayEntry>,
}

fn push_array(
    arrays: &mut Vec<ArrayEntry>,
    payload: &mut Vec<f64>,
    name: String,
    shape: Vec<usize>,
    values: impl Iterator<Item = f64>,
) {
    let offset = payload.len() as u64;
    payload.extend(values);
    let len = payload.len() as u64 - offset;
    arrays.push(ArrayEntry {
        name,
        shape,
        offset,
        len,
    });
}

/// Writes a checkpoint file for the given parameters.
pub fn save_checkpoint(params: &ModelParameters, path: &Path) -> Result<()> {
    let mut arrays = Vec::new();
    let mut payload: Vec<f64> = Vec::new();
    for (name, conv) in params.tensors() {
        push_array(
            &mut arrays,
            &mut payload,
            format!("{name}.weight"),
            conv.weight.shape().to_vec(),
            conv.weight.iter().copied(),
        );
        push_array(
            &mut arrays,
            &mut payload,
            format!("{name}.bias"),
            conv.bias.shape().to_vec(),
            conv.bias.iter().copied(),
        );
    }
    let header = Header {
        format: FORMAT,
        version_tag: params.version_tag.clone(),
        width: params.width.clone(),
        arrays,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header encoding: {e}")))?;

    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes())?;
    file.write_all(&header_json)?;
    let mut bytes = Vec::with_capacity(payload.len() * 8);
    for v in &payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}

struct PayloadReader<'a> {
    values: &'a [f64],
    entries: HashMap<&'a str, &'a ArrayEntry>,
}

impl<'a> PayloadReader<'a> {
    fn slice(&self, name: &str, expected_shape: &[usize]) -> Result<&'a [f64]> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array '{name}'")))?;
        if entry.shape != expected_shape {
            return Err(Error::Checkpoint(format!(
                "array '{name}' has shape {:?}, channel plan expects {:?}",
                entry.shape, expected_shape
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.len as usize;
        if entry.len as usize != expected_shape.iter().product::<usize>() || end > self.values.len()
        {
            return Err(Error::Checkpoint(format!(
                "array '{name}' payload range {start}..{end} is inconsistent"
            )));
        }
        Ok(&self.values[start..end])
    }

    fn conv(&self, name: &str, spec: &ConvSpec) -> Result<ConvParams> {
        let wshape = [spec.out_ch, spec.in_ch, spec.k, spec.k];
        let w = self.slice(&format!("{name}.weight"), &wshape)?;
        let b = self.slice(&format!("{name}.bias"), &[spec.out_ch])?;
        Ok(ConvParams {
            weight: Array4::from_shape_vec((spec.out_ch, spec.in_ch, spec.k, spec.k), w.to_vec())
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
            bias: Array1::from_vec(b.to_vec()),
        })
    }

    fn segment(&self, name: &str, specs: &[ConvSpec]) -> Result<Vec<ConvParams>> {
        specs
            .iter()
            .enumerate()
            .map(|(i, s)| self.conv(&format!("{name}.{i}"), s))
            .collect()
    }
}

/// Reads a checkpoint and verifies its arrays against the stored channel
/// plan before handing parameters back.
pub fn load_checkpoint(path: &Path) -> Result<ModelParameters> {
    let mut file = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)
        .map_err(|_| Error::Checkpoint("file too short for header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)
        .map_err(|_| Error::Checkpoint("file too short for header".into()))?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Checkpoint(format!("header decoding: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format
        )));
    }
    header.width.validate()?;

    let mut payload_bytes = Vec::new();
    file.read_to_end(&mut payload_bytes)?;
    if payload_bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(
            "payload is not a whole number of f64".into(),
        ));
    }
    let values: Vec<f64> = payload_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let total: u64 = header.arrays.iter().map(|a| a.len).sum();
    if total as usize != values.len() {
        return Err(Error::Checkpoint(format!(
            "payload holds {} values but the header claims {total}",
            values.len()
        )));
    }

    let reader = PayloadReader {
        values: &values,
        entries: header.arrays.iter().map(|a| (a.name.as_str(), a)).collect(),
    };
    let specs = segment_specs(&header.width);
    Ok(ModelParameters {
        width: header.width.clone(),
        version_tag: header.version_tag.clone(),
        s448: reader.segment("s448", &specs.s448)?,
        s224: reader.segment("s224", &specs.s224)?,
        s56: reader.segment("s56", &specs.s56)?,
        trunk: TrunkParams {
            reduce: reader.segment("reduce", &specs.reduce)?,
            main: reader.segment("main", &specs.main)?,
            tail: reader.conv("tail", &specs.tail)?,
        },
    })
}
