//! Bird's-eye-view rasterization of a LiDAR cloud.
//!
//! Three channels per cell: maximum height above the ground plane, mean
//! reflectance, and log-normalized point density. Row 0 is the leftmost
//! lateral strip (`y = +lateral_range`), column 0 is nearest the sensor.

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Box3D, RotatedBox2D};
use crate::kitti::{project_points_to_image, Calibration, PointCloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Meters per cell side.
    pub cell_size: f64,
    pub forward_range: f64,
    /// Extent on each side of the sensor.
    pub lateral_range: f64,
    pub max_height_above_ground: f64,
    pub ground_z: f64,
    pub density_saturation: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.05,
            forward_range: 35.0,
            lateral_range: 35.0,
            max_height_above_ground: 3.0,
            ground_z: -1.73,
            density_saturation: 64,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cell_size > 0.0
            && self.forward_range > 0.0
            && self.lateral_range > 0.0
            && self.max_height_above_ground > 0.0
            && self.ground_z.is_finite()
            && self.density_saturation >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid grid: {self:?}")))
        }
    }

    pub fn cols(&self) -> usize {
        (self.forward_range / self.cell_size).round() as usize
    }

    pub fn rows(&self) -> usize {
        (2.0 * self.lateral_range / self.cell_size).round() as usize
    }

    /// Row and column of the cell containing `(x, y)`, or `None` outside.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = (x / self.cell_size).floor();
        let row = ((self.lateral_range - y) / self.cell_size).floor();
        if col >= 0.0 && row >= 0.0 && (col as usize) < self.cols() && (row as usize) < self.rows()
        {
            Some((row as usize, col as usize))
        } else {
            None
        }
    }

    /// Density value for a cell holding `n` points.
    pub fn density(&self, n: u32) -> f32 {
        if n == 0 {
            return 0.0;
        }
        ((n as f64 + 1.0).ln() / (self.density_saturation as f64).ln()).min(1.0) as f32
    }

    /// Height channel value for a cell whose highest point is `max_z`.
    pub fn height_value(&self, max_z: f32) -> f32 {
        let h = self.max_height_above_ground;
        ((max_z as f64 - self.ground_z).clamp(0.0, h) / h) as f32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevImage {
    pub rows: usize,
    pub cols: usize,
    pub height: Vec<f32>,
    pub intensity: Vec<f32>,
    pub density: Vec<f32>,
    pub config: GridConfig,
}

impl BevImage {
    pub fn zeros(config: &GridConfig) -> Self {
        let (rows, cols) = (config.rows(), config.cols());
        Self {
            rows,
            cols,
            height: vec![0.0; rows * cols],
            intensity: vec![0.0; rows * cols],
            density: vec![0.0; rows * cols],
            config: config.clone(),
        }
    }

    pub fn channels(&self) -> [&[f32]; 3] {
        [&self.height, &self.intensity, &self.density]
    }

    /// `[height, intensity, density]` at a cell.
    pub fn at(&self, row: usize, col: usize) -> [f32; 3] {
        let i = row * self.cols + col;
        [self.height[i], self.intensity[i], self.density[i]]
    }

    /// 8-bit RGB raster: R = height, G = intensity, B = density.
    pub fn to_rgb(&self) -> RgbImage {
        let q = |v: f32| (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8;
        let mut buf = Vec::with_capacity(self.rows * self.cols * 3);
        for i in 0..self.rows * self.cols {
            buf.extend_from_slice(&[q(self.height[i]), q(self.intensity[i]), q(self.density[i])]);
        }
        RgbImage::from_raw(self.cols as u32, self.rows as u32, buf).expect("buffer size")
    }
}

/// Keeps points inside the grid's range, above the ground plane, and inside
/// the camera's field of view.
pub fn filter_cloud(cloud: &PointCloud, calib: &Calibration, config: &GridConfig) -> PointCloud {
    let proj = project_points_to_image(cloud, calib);
    let points = cloud
        .points
        .iter()
        .zip(proj)
        .filter(|(p, pr)| {
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            (0.0..config.forward_range).contains(&x)
                && y.abs() < config.lateral_range
                && z >= config.ground_z
                && pr.valid
        })
        .map(|(p, _)| *p)
        .collect();
    PointCloud::new(points)
}

/// Fixed-point scale for reflectance sums (units of 2^-87). Integer
/// accumulation makes the mean independent of point order.
const REFL_SCALE: f64 = (1u128 << 87) as f64;

#[derive(Clone, Copy)]
struct CellAccum {
    cell: u32,
    count: u32,
    max_z: f32,
    refl: u128,
}

/// Rasterizes an already-filtered cloud. Points outside the grid are skipped.
pub fn encode(cloud: &PointCloud, config: &GridConfig) -> BevImage {
    let mut img = BevImage::zeros(config);
    let mut slot_of = vec![u32::MAX; img.rows * img.cols];
    let mut cells: Vec<CellAccum> = Vec::new();

    for p in &cloud.points {
        let Some((row, col)) = config.cell_index(p.x as f64, p.y as f64) else {
            continue;
        };
        let cell = row * img.cols + col;
        let refl = (p.reflectance as f64 * REFL_SCALE) as u128;
        let slot = slot_of[cell];
        if slot == u32::MAX {
            slot_of[cell] = cells.len() as u32;
            cells.push(CellAccum {
                cell: cell as u32,
                count: 1,
                max_z: p.z,
                refl,
            });
        } else {
            let acc = &mut cells[slot as usize];
            acc.count += 1;
            acc.max_z = acc.max_z.max(p.z);
            acc.refl += refl;
        }
    }

    let sat = config.density_saturation;
    let lut: Vec<f32> = (0..sat).map(|n| config.density(n)).collect();
    for acc in &cells {
        let i = acc.cell as usize;
        img.height[i] = config.height_value(acc.max_z);
        img.intensity[i] = ((acc.refl as f64 / REFL_SCALE) / acc.count as f64) as f32;
        img.density[i] = if acc.count < sat { lut[acc.count as usize] } else { 1.0 };
    }
    img
}

/// Raw per-cell point counts, row-major.
pub fn cell_counts(cloud: &PointCloud, config: &GridConfig) -> Vec<u32> {
    let cols = config.cols();
    let mut counts = vec![0u32; config.rows() * cols];
    for p in &cloud.points {
        if let Some((r, c)) = config.cell_index(p.x as f64, p.y as f64) {
            counts[r * cols + c] += 1;
        }
    }
    counts
}

/// Maps a metric box onto continuous pixel coordinates: x along columns,
/// y along rows (row axis points to -y, so yaw is negated).
pub fn box_to_bev_pixels(b: &Box3D, config: &GridConfig) -> Result<RotatedBox2D> {
    let col = b.x / config.cell_size;
    let row = (config.lateral_range - b.y) / config.cell_size;
    let inside = col >= 0.0
        && row >= 0.0
        && col < config.cols() as f64
        && row < config.rows() as f64;
    if !inside {
        return Err(Error::OutsideGrid { x: b.x, y: b.y });
    }
    Ok(RotatedBox2D::new(
        col,
        row,
        b.l / config.cell_size,
        b.w / config.cell_size,
        wrap_angle(-b.yaw),
    ))
}

/// Inverse of [`box_to_bev_pixels`] on the planar part.
pub fn bev_pixels_to_box(px: &RotatedBox2D, config: &GridConfig) -> RotatedBox2D {
    RotatedBox2D::new(
        px.x * config.cell_size,
        config.lateral_range - px.y * config.cell_size,
        px.l * config.cell_size,
        px.w * config.cell_size,
        wrap_angle(-px.yaw),
    )
}

/// Lateral mirror about `y = 0`.
pub fn horizontal_flip(image: &BevImage, boxes: &[Box3D]) -> (BevImage, Vec<Box3D>) {
    let mut out = image.clone();
    let cols = image.cols;
    for r in 0..image.rows {
        let src = (image.rows - 1 - r) * cols;
        let dst = r * cols;
        out.height[dst..dst + cols].copy_from_slice(&image.height[src..src + cols]);
        out.intensity[dst..dst + cols].copy_from_slice(&image.intensity[src..src + cols]);
        out.density[dst..dst + cols].copy_from_slice(&image.density[src..src + cols]);
    }
    let boxes = boxes
        .iter()
        .map(|b| Box3D {
            y: -b.y,
            yaw: wrap_angle(-b.yaw),
            ..*b
        })
        .collect();
    (out, boxes)
}

pub fn write_bev_png(image: &BevImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image.to_rgb().save(path)?;
    Ok(())
}
