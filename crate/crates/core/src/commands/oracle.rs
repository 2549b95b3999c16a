use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{ensure_dir, frame_seed, BatchReport};
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::kitti::{camera_box_to_lidar, parse_calibration, parse_labels, write_detections, Category};
use crate::post::{oracle_detect, rotated_nms, NoiseSpec};

fn oracle_frame(
    cfg: &PipelineConfig,
    id: &str,
    noise: &NoiseSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf> {
    let labels = parse_labels(cfg.dataset.label(id))?;
    let calib = parse_calibration(cfg.dataset.calib(id))?;
    let gt = labels
        .iter()
        .filter(|l| Category::EVALUATED.contains(&l.category))
        .map(|l| Ok((camera_box_to_lidar(l, &calib)?, l.category.clone())))
        .collect::<Result<Vec<_>>>()?;
    let dets = oracle_detect(id, &gt, noise, frame_seed(seed, id), &cfg.grid, &cfg.codec)?;
    let kept = rotated_nms(&dets, cfg.nms.iou_threshold);
    let path = out_dir.join(format!("{id}.txt"));
    write_detections(
        kept.detections.iter().map(|d| (&d.bbox, &d.category, d.score)),
        &calib,
        &path,
    )?;
    Ok(path)
}

/// Runs the oracle detector and rotated NMS per frame, writing KITTI result
/// files to `<out_dir>/<id>.txt`.
pub fn cmd_oracle(
    cfg: &PipelineConfig,
    ids: &[String],
    noise: &NoiseSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<BatchReport> {
    ensure_dir(out_dir)?;
    let results: Vec<_> = ids
        .par_iter()
        .map(|id| (id, oracle_frame(cfg, id, noise, seed, out_dir)))
        .collect();
    let mut report = BatchReport::default();
    for (id, r) in results {
        match r {
            Ok(p) => report.written.push(p),
            Err(e) => {
                log::error!("{id}: {e}");
                report.failures.push((id.clone(), e.to_string()));
            }
        }
    }
    Ok(report)
}
