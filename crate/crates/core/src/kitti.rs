//! KITTI dataset artifacts: Velodyne scans, calibration files, label and
//! result text files, and the camera <-> LiDAR box transforms.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Box3D};

use std::f64::consts::FRAC_PI_2;

/// KITTI camera 2 nominal image size.
pub const DEFAULT_IMAGE_SIZE: (u32, u32) = (1242, 375);

const RECORD_BYTES: usize = 16;
const ORTHONORMAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub reflectance: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, reflectance: f32) -> Self {
        Self {
            x,
            y,
            z,
            reflectance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Decodes little-endian float32 quadruples. Reflectance is clamped to
    /// `[0, 1]`.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() % RECORD_BYTES != 0 {
            return Err(Error::CorruptScan {
                path: path.to_path_buf(),
                len: bytes.len() as u64,
            });
        }
        let mut points = Vec::with_capacity(bytes.len() / RECORD_BYTES);
        for (index, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
            let (x, y, z, r) = (f(0), f(1), f(2), f(3));
            if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                return Err(Error::NonFinitePoint {
                    path: path.to_path_buf(),
                    index,
                });
            }
            let r = if r.is_nan() { 0.0 } else { r.clamp(0.0, 1.0) };
            points.push(Point::new(x, y, z, r));
        }
        Ok(Self { points })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * RECORD_BYTES);
        for p in &self.points {
            for v in [p.x, p.y, p.z, p.reflectance] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PointCloud::from_bytes(&bytes, path)
}

pub fn write_point_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, cloud.to_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// P2: rectified camera frame to image plane.
    pub cam_projection: Matrix3x4<f64>,
    /// R0_rect.
    pub rect_rotation: Matrix3<f64>,
    /// Tr_velo_to_cam.
    pub velo_to_cam: Matrix3x4<f64>,
    pub image_size: (u32, u32),
}

fn is_orthonormal(m: &Matrix3<f64>) -> bool {
    (m.transpose() * m - Matrix3::identity()).abs().max() <= ORTHONORMAL_TOL
}

impl Calibration {
    /// Builds and validates a calibration.
    pub fn new(
        cam_projection: Matrix3x4<f64>,
        rect_rotation: Matrix3<f64>,
        velo_to_cam: Matrix3x4<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let calib = Self {
            cam_projection,
            rect_rotation,
            velo_to_cam,
            image_size,
        };
        if !is_orthonormal(&calib.rect_rotation) {
            return Err(Error::NotOrthonormal("R0_rect"));
        }
        if !is_orthonormal(&calib.velo_to_cam.fixed_view::<3, 3>(0, 0).into_owned()) {
            return Err(Error::NotOrthonormal("Tr_velo_to_cam rotation"));
        }
        Ok(calib)
    }

    /// The usual KITTI axis permutation: camera x = -LiDAR y, camera y =
    /// -LiDAR z, camera z = LiDAR x, with a pinhole of focal `f` centered on
    /// the image.
    pub fn canonical(focal: f64) -> Self {
        let (w, h) = DEFAULT_IMAGE_SIZE;
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        #[rustfmt::skip]
        let p2 = Matrix3x4::new(
            focal, 0.0, cx, 0.0,
            0.0, focal, cy, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        #[rustfmt::skip]
        let tr = Matrix3x4::new(
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
        );
        Self {
            cam_projection: p2,
            rect_rotation: Matrix3::identity(),
            velo_to_cam: tr,
            image_size: DEFAULT_IMAGE_SIZE,
        }
    }

    /// LiDAR frame to rectified camera frame as a homogeneous matrix.
    pub fn velo_to_rect(&self) -> Matrix4<f64> {
        let mut rect = Matrix4::identity();
        rect.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rect_rotation);
        let mut velo = Matrix4::identity();
        velo.fixed_view_mut::<3, 4>(0, 0).copy_from(&self.velo_to_cam);
        rect * velo
    }

    pub fn rect_to_velo(&self) -> Result<Matrix4<f64>> {
        self.velo_to_rect()
            .try_inverse()
            .ok_or(Error::SingularTransform)
    }

    /// Projects a point in the rectified camera frame; returns `(u, v, depth)`.
    pub fn project_rect(&self, p: Vector3<f64>) -> (f64, f64, f64) {
        let q = self.cam_projection * Vector4::new(p.x, p.y, p.z, 1.0);
        (q.x / q.z, q.y / q.z, q.z)
    }

    pub fn to_text(&self) -> String {
        let fmt = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let rows = |m: &[f64], r: usize, c: usize| {
            (0..r).flat_map(|i| (0..c).map(move |j| m[j * r + i])).collect::<Vec<_>>()
        };
        format!(
            "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
            fmt(&rows(self.cam_projection.as_slice(), 3, 4)),
            fmt(&rows(self.rect_rotation.as_slice(), 3, 3)),
            fmt(&rows(self.velo_to_cam.as_slice(), 3, 4)),
        )
    }
}

pub fn parse_calibration_str(text: &str) -> Result<Calibration> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        let slot = match key {
            "P2" => &mut p2,
            "R0_rect" => &mut r0,
            "Tr_velo_to_cam" => &mut tr,
            _ => continue,
        };
        let vals = rest
            .split_whitespace()
            .map(f64::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("calibration key `{key}`: {e}")))?;
        *slot = Some(vals);
    }
    let take = |v: Option<Vec<f64>>, key: &str, n: usize| -> Result<Vec<f64>> {
        let v = v.ok_or_else(|| Error::MissingCalibKey(key.to_string()))?;
        if v.len() != n {
            return Err(Error::CalibValueCount {
                key: key.to_string(),
                expected: n,
                found: v.len(),
            });
        }
        Ok(v)
    };
    let p2 = take(p2, "P2", 12)?;
    let r0 = take(r0, "R0_rect", 9)?;
    let tr = take(tr, "Tr_velo_to_cam", 12)?;
    Calibration::new(
        Matrix3x4::from_row_slice(&p2),
        Matrix3::from_row_slice(&r0),
        Matrix3x4::from_row_slice(&tr),
        DEFAULT_IMAGE_SIZE,
    )
}

pub fn parse_calibration(path: impl AsRef<Path>) -> Result<Calibration> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration_str(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Car,
    Pedestrian,
    Cyclist,
    Other(String),
}

impl Category {
    /// The categories scored by the evaluator.
    pub const EVALUATED: [Category; 3] = [Category::Car, Category::Pedestrian, Category::Cyclist];

    pub fn as_str(&self) -> &str {
        match self {
            Category::Car => "Car",
            Category::Pedestrian => "Pedestrian",
            Category::Cyclist => "Cyclist",
            Category::Other(s) => s,
        }
    }

    pub fn is_dont_care(&self) -> bool {
        matches!(self, Category::Other(s) if s == "DontCare")
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "Car" => Category::Car,
            "Pedestrian" => Category::Pedestrian,
            "Cyclist" => Category::Cyclist,
            other => Category::Other(other.to_string()),
        })
    }
}

/// One line of a KITTI label or result file.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLabel {
    pub category: Category,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// left, top, right, bottom in pixels.
    pub bbox2d: [f64; 4],
    /// h, w, l in meters.
    pub dimensions: [f64; 3],
    /// Bottom-face center in the rectified camera frame.
    pub location_cam: [f64; 3],
    pub rotation_y: f64,
    /// Present on result-file lines only.
    pub score: Option<f64>,
}

impl ObjectLabel {
    pub fn bbox_height(&self) -> f64 {
        self.bbox2d[3] - self.bbox2d[1]
    }

    /// Formats the 15 label fields, plus the score when present.
    pub fn to_line(&self) -> String {
        let [l, t, r, b] = self.bbox2d;
        let [h, w, len] = self.dimensions;
        let [x, y, z] = self.location_cam;
        let mut line = format!(
            "{} {:.2} {} {:.6} {:.2} {:.2} {:.2} {:.2} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            self.category,
            self.truncation,
            self.occlusion,
            self.alpha,
            l,
            t,
            r,
            b,
            h,
            w,
            len,
            x,
            y,
            z,
            self.rotation_y
        );
        if let Some(s) = self.score {
            line.push_str(&format!(" {s:.6}"));
        }
        line
    }

    /// Volumetric box expressed in a z-up frame attached to the rectified
    /// camera: forward = camera z, left = -camera x, up = -camera y. It is a
    /// rigid relabeling of the camera frame, so overlaps computed here equal
    /// those in the LiDAR frame without needing a calibration.
    pub fn camera_frame_box(&self) -> Box3D {
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location_cam;
        Box3D::new(z, -x, -y + 0.5 * h, l, w, h, wrap_angle(-self.rotation_y - FRAC_PI_2))
    }
}

pub fn parse_labels_str(text: &str, path: &Path) -> Result<Vec<ObjectLabel>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        if fields.len() < 15 {
            return Err(err(format!("expected 15 fields, found {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .map_err(|e| err(format!("field {}: `{}`: {e}", k + 1, fields[k])))
        };
        let occlusion = fields[2]
            .parse::<i32>()
            .or_else(|_| num(2).map(|v| v as i32))?;
        let score = if fields.len() > 15 { Some(num(15)?) } else { None };
        out.push(ObjectLabel {
            category: fields[0].parse().unwrap(),
            truncation: num(1)?,
            occlusion,
            alpha: num(3)?,
            bbox2d: [num(4)?, num(5)?, num(6)?, num(7)?],
            dimensions: [num(8)?, num(9)?, num(10)?],
            location_cam: [num(11)?, num(12)?, num(13)?],
            rotation_y: wrap_angle(num(14)?),
            score,
        });
    }
    Ok(out)
}

pub fn parse_labels(path: impl AsRef<Path>) -> Result<Vec<ObjectLabel>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels_str(&text, path)
}

/// Converts a camera-frame label into a LiDAR-frame cuboid.
pub fn camera_box_to_lidar(label: &ObjectLabel, calib: &Calibration) -> Result<Box3D> {
    let inv = calib.rect_to_velo()?;
    let [h, w, l] = label.dimensions;
    let [x, y, z] = label.location_cam;
    let p = inv * Vector4::new(x, y, z, 1.0);
    Ok(Box3D::new(
        p.x,
        p.y,
        p.z + 0.5 * h,
        l,
        w,
        h,
        wrap_angle(-label.rotation_y - FRAC_PI_2),
    ))
}

/// Camera-frame pose of a LiDAR cuboid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub location_cam: [f64; 3],
    pub rotation_y: f64,
    /// h, w, l.
    pub dimensions: [f64; 3],
}

pub fn lidar_box_to_camera(b: &Box3D, calib: &Calibration) -> CameraPose {
    let p = calib.velo_to_rect() * Vector4::new(b.x, b.y, b.z - 0.5 * b.h, 1.0);
    CameraPose {
        location_cam: [p.x, p.y, p.z],
        rotation_y: wrap_angle(-b.yaw - FRAC_PI_2),
        dimensions: [b.h, b.w, b.l],
    }
}

/// Image-plane bounding box of the projected cuboid, clipped to the image.
/// Corners behind the camera are ignored; `None` when none is in front.
pub fn project_box_2d(b: &Box3D, calib: &Calibration) -> Option<[f64; 4]> {
    let m = calib.velo_to_rect();
    let (w, h) = (calib.image_size.0 as f64, calib.image_size.1 as f64);
    let mut bounds: Option<[f64; 4]> = None;
    for c in b.corners() {
        let r = m * Vector4::new(c[0], c[1], c[2], 1.0);
        let (u, v, depth) = calib.project_rect(Vector3::new(r.x, r.y, r.z));
        if depth <= 0.0 {
            continue;
        }
        let bb = bounds.get_or_insert([u, v, u, v]);
        bb[0] = bb[0].min(u);
        bb[1] = bb[1].min(v);
        bb[2] = bb[2].max(u);
        bb[3] = bb[3].max(v);
    }
    bounds.map(|[l, t, r, btm]| {
        [
            l.clamp(0.0, w - 1.0),
            t.clamp(0.0, h - 1.0),
            r.clamp(0.0, w - 1.0),
            btm.clamp(0.0, h - 1.0),
        ]
    })
}

/// Builds the result-file record for one detection.
pub fn detection_label(
    b: &Box3D,
    category: &Category,
    score: f64,
    calib: &Calibration,
) -> ObjectLabel {
    let pose = lidar_box_to_camera(b, calib);
    let [x, _, z] = pose.location_cam;
    ObjectLabel {
        category: category.clone(),
        truncation: -1.0,
        occlusion: -1,
        alpha: wrap_angle(pose.rotation_y - x.atan2(z)),
        bbox2d: project_box_2d(b, calib).unwrap_or([0.0; 4]),
        dimensions: pose.dimensions,
        location_cam: pose.location_cam,
        rotation_y: pose.rotation_y,
        score: Some(score),
    }
}

/// Writes detections in the KITTI result format (15 label fields + score).
pub fn write_detections<'a, I>(dets: I, calib: &Calibration, path: impl AsRef<Path>) -> Result<()>
where
    I: IntoIterator<Item = (&'a Box3D, &'a Category, f64)>,
{
    let path = path.as_ref();
    let mut text = String::new();
    for (b, cat, score) in dets {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!("score {score} outside [0, 1]")));
        }
        text.push_str(&detection_label(b, cat, score, calib).to_line());
        text.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageProjection {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

pub fn project_points_to_image(cloud: &PointCloud, calib: &Calibration) -> Vec<ImageProjection> {
    let m = calib.velo_to_rect();
    let (w, h) = (calib.image_size.0 as f64, calib.image_size.1 as f64);
    cloud
        .points
        .iter()
        .map(|p| {
            let r = m * Vector4::new(p.x as f64, p.y as f64, p.z as f64, 1.0);
            let (u, v, depth) = calib.project_rect(Vector3::new(r.x, r.y, r.z));
            let valid = depth > 0.0 && (0.0..w).contains(&u) && (0.0..h).contains(&v);
            ImageProjection { u, v, valid }
        })
        .collect()
}
