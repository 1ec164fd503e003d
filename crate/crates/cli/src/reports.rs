//! CSV and JSON report writers plus the readers `compare` needs.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use gridloc_core::eval::EvalRecord;
use gridloc_core::geometry::BoundingBox;
use gridloc_core::train::TrainReport;

pub fn write_train_report(report: &TrainReport, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,class,mean_loss,seconds")?;
    for stat in &report.per_epoch {
        let seconds = report
            .epoch_seconds
            .get(stat.epoch - 1)
            .copied()
            .unwrap_or(f64::NAN);
        writeln!(
            f,
            "{},{},{},{}",
            stat.epoch, stat.size_class, stat.mean_loss, seconds
        )?;
    }
    Ok(())
}

pub fn write_iou_csv(record: &EvalRecord, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "frame_index,iou")?;
    for (i, iou) in record.iou_series.iter().enumerate() {
        writeln!(f, "{i},{iou}")?;
    }
    Ok(())
}

pub fn write_eval_summary(record: &EvalRecord, path: &Path) -> Result<()> {
    let summary = json!({
        "mean_iou": record.mean_iou,
        "failures": record.failures,
        "segment_failed": record.segment_failed,
        "fps": record.fps,
        "frames": record.iou_series.len(),
    });
    fs::write(path, serde_json::to_vec_pretty(&summary)?)?;
    Ok(())
}

/// One row per run, one column per segment; cells are 0/1 failure flags.
pub fn write_monte_carlo_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    let segments = records.first().map(|r| r.segment_failed.len()).unwrap_or(0);
    let header: Vec<String> = (1..=segments).map(|s| format!("segment_{s}")).collect();
    writeln!(f, "run,{}", header.join(","))?;
    for (run, rec) in records.iter().enumerate() {
        let cells: Vec<&str> = rec
            .segment_failed
            .iter()
            .map(|&b| if b { "1" } else { "0" })
            .collect();
        writeln!(f, "{run},{}", cells.join(","))?;
    }
    Ok(())
}

/// Reads a `frame_index,iou` CSV as written by `track`.
pub fn read_iou_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading IoU series {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("frame_index")) {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(_), Some(iou)) = (fields.next(), fields.next()) else {
            bail!("{}:{}: expected 'frame_index,iou'", path.display(), idx + 1);
        };
        out.push(
            iou.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}: bad IoU value", path.display(), idx + 1))?,
        );
    }
    Ok(out)
}

/// Reads an external tracker's `frame_index,x,y,w,h` box series.
pub fn read_box_csv(path: &Path) -> Result<Vec<BoundingBox>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading box series {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("frame_index")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            bail!(
                "{}:{}: expected 'frame_index,x,y,w,h', found {} fields",
                path.display(),
                idx + 1,
                fields.len()
            );
        }
        let nums: Result<Vec<f64>, _> = fields[1..].iter().map(|s| s.parse::<f64>()).collect();
        let nums =
            nums.with_context(|| format!("{}:{}: bad box value", path.display(), idx + 1))?;
        out.push(
            BoundingBox::new(nums[0], nums[1], nums[2], nums[3])
                .map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), idx + 1))?,
        );
    }
    Ok(out)
}
