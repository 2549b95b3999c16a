use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ensure_dir, BatchReport};
use crate::bev::{encode, filter_cloud, write_bev_png, GridConfig};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::kitti::{load_point_cloud, parse_calibration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub id: String,
    pub png: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rows: usize,
    pub cols: usize,
    pub grid: GridConfig,
    pub frames: Vec<ManifestFrame>,
}

fn encode_frame(cfg: &PipelineConfig, id: &str, out_dir: &Path) -> Result<(PathBuf, usize)> {
    let cloud = load_point_cloud(cfg.dataset.scan(id))?;
    let calib = parse_calibration(cfg.dataset.calib(id))?;
    let kept = filter_cloud(&cloud, &calib, &cfg.grid);
    let image = encode(&kept, &cfg.grid);
    let png = out_dir.join(format!("{id}.png"));
    write_bev_png(&image, &png)?;
    Ok((png, kept.len()))
}

/// Encodes every frame to `<out_dir>/<id>.png` and writes
/// `<out_dir>/manifest.json` listing the frames that succeeded.
pub fn cmd_encode(cfg: &PipelineConfig, ids: &[String], out_dir: &Path) -> Result<BatchReport> {
    ensure_dir(out_dir)?;
    let results: Vec<_> = ids
        .par_iter()
        .map(|id| (id, encode_frame(cfg, id, out_dir)))
        .collect();

    let mut report = BatchReport::default();
    let mut frames = Vec::new();
    for (id, r) in results {
        match r {
            Ok((png, points)) => {
                frames.push(ManifestFrame {
                    id: id.clone(),
                    png: png.file_name().unwrap().to_string_lossy().into_owned(),
                    points,
                });
                report.written.push(png);
            }
            Err(e) => {
                log::error!("{id}: {e}");
                report.failures.push((id.clone(), e.to_string()));
            }
        }
    }
    let manifest = Manifest {
        rows: cfg.grid.rows(),
        cols: cfg.grid.cols(),
        grid: cfg.grid.clone(),
        frames,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
