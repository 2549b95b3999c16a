use std::path::Path;

use super::{ensure_dir, list_ids};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_all, ApTable, FrameLabels, CSV_HEADER};
use crate::kitti::parse_labels;

/// Parses `<dir>/<id>.txt` for each id; missing files count as empty when
/// `missing_ok`.
pub fn load_label_dir(dir: &Path, ids: &[String], missing_ok: bool) -> Result<FrameLabels> {
    let mut out = FrameLabels::new();
    for id in ids {
        let path = dir.join(format!("{id}.txt"));
        if missing_ok && !path.exists() {
            out.insert(id.clone(), Vec::new());
            continue;
        }
        out.insert(id.clone(), parse_labels(&path)?);
    }
    Ok(out)
}

/// Scores the result files in `det_dir` against the labels in `gt_dir` for
/// both metrics and both AP modes. Frames without a result file have no
/// detections; result files without labels are an error. With `out_dir`,
/// writes `ap.txt` and `ap.csv` there.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    det_dir: &Path,
    gt_dir: &Path,
    split: Option<&[String]>,
    out_dir: Option<&Path>,
) -> Result<Vec<ApTable>> {
    let gt_ids = match split {
        Some(ids) => ids.to_vec(),
        None => list_ids(gt_dir, "txt")?,
    };
    let det_ids = if det_dir.exists() {
        list_ids(det_dir, "txt")?
    } else {
        Vec::new()
    };
    let unknown: Vec<String> = det_ids
        .iter()
        .filter(|id| !gt_ids.contains(id))
        .cloned()
        .collect();
    if !unknown.is_empty() && split.is_none() {
        return Err(Error::UnknownFrames(unknown));
    }
    let gts = load_label_dir(gt_dir, &gt_ids, false)?;
    let dets = load_label_dir(det_dir, &gt_ids, true)?;
    let tables = evaluate_all(&dets, &gts, &cfg.eval)?;

    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        let text: String = tables.iter().map(|t| t.to_text() + "\n").collect();
        let csv: String = std::iter::once(format!("{CSV_HEADER}\n"))
            .chain(tables.iter().map(ApTable::csv_rows))
            .collect();
        for (name, body) in [("ap.txt", text), ("ap.csv", csv)] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(tables)
}
