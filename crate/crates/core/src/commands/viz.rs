use std::path::Path;

use image::{Rgb, RgbImage};

use crate::bev::{box_to_bev_pixels, encode, filter_cloud};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{Box3D, Point2, RotatedBox2D};
use crate::kitti::{camera_box_to_lidar, load_point_cloud, parse_calibration, parse_labels, Category};

const GT_COLOR: Rgb<u8> = Rgb([255, 255, 255]);

fn category_color(c: &Category) -> Rgb<u8> {
    match c {
        Category::Car => Rgb([255, 0, 0]),
        Category::Pedestrian => Rgb([0, 255, 0]),
        Category::Cyclist => Rgb([0, 128, 255]),
        Category::Other(_) => Rgb([255, 255, 0]),
    }
}

fn draw_line(img: &mut RgbImage, a: Point2, b: Point2, color: Rgb<u8>) {
    let (mut x0, mut y0) = (a.x.floor() as i64, a.y.floor() as i64);
    let (x1, y1) = (b.x.floor() as i64, b.y.floor() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as u32) < img.width() && (y0 as u32) < img.height() {
            img.put_pixel(x0 as u32, y0 as u32, color);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// One-pixel outline of a box given in (column, row) pixel coordinates.
pub fn draw_box(img: &mut RgbImage, px: &RotatedBox2D, color: Rgb<u8>) {
    let c = px.corners();
    for i in 0..4 {
        draw_line(img, c[i], c[(i + 1) % 4], color);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VizReport {
    pub drawn: usize,
    pub skipped: usize,
}

/// Renders the frame's BEV image with ground truth (white) and optional
/// detections (colored by category). Boxes outside the grid are skipped.
pub fn cmd_viz(
    cfg: &PipelineConfig,
    frame: &str,
    det_file: Option<&Path>,
    out: &Path,
) -> Result<VizReport> {
    let scan = cfg.dataset.scan(frame);
    if !scan.exists() {
        return Err(Error::InvalidArgument(format!("unknown frame `{frame}`")));
    }
    let calib = parse_calibration(cfg.dataset.calib(frame))?;
    let cloud = filter_cloud(&load_point_cloud(&scan)?, &calib, &cfg.grid);
    let mut img = encode(&cloud, &cfg.grid).to_rgb();

    let label_path = cfg.dataset.label(frame);
    let gts = if label_path.exists() {
        parse_labels(&label_path)?
    } else {
        Vec::new()
    };
    let dets = match det_file {
        Some(p) => parse_labels(p)?,
        None => Vec::new(),
    };

    let mut report = VizReport::default();
    let layers = gts
        .iter()
        .filter(|l| !l.category.is_dont_care())
        .map(|l| (l, GT_COLOR))
        .chain(dets.iter().map(|l| (l, category_color(&l.category))));
    for (label, color) in layers {
        let b: Box3D = camera_box_to_lidar(label, &calib)?;
        match box_to_bev_pixels(&b, &cfg.grid) {
            Ok(px) => {
                draw_box(&mut img, &px, color);
                report.drawn += 1;
            }
            Err(e) => {
                log::warn!("{frame}: {} skipped: {e}", label.category);
                report.skipped += 1;
            }
        }
    }
    img.save(out)?;
    Ok(report)
}
