#![allow(dead_code)]

use std::fs;
use std::path::Path;

use bevdet_core::kitti::{lidar_box_to_camera, project_box_2d, write_point_cloud, ObjectLabel};
use bevdet_core::{Box3D, Calibration, Category, Point, PointCloud};

pub const FOCAL: f64 = 721.5;

/// Ground-truth label for a LiDAR-frame box, with the image box projected
/// through `calib`.
pub fn label_for(b: &Box3D, category: Category, occlusion: i32, truncation: f64, calib: &Calibration) -> ObjectLabel {
    let pose = lidar_box_to_camera(b, calib);
    ObjectLabel {
        category,
        truncation,
        occlusion,
        alpha: 0.0,
        bbox2d: project_box_2d(b, calib).unwrap_or([0.0; 4]),
        dimensions: pose.dimensions,
        location_cam: pose.location_cam,
        rotation_y: pose.rotation_y,
        score: None,
    }
}

pub fn dont_care(bbox2d: [f64; 4]) -> ObjectLabel {
    ObjectLabel {
        category: Category::Other("DontCare".into()),
        truncation: -1.0,
        occlusion: -1,
        alpha: -10.0,
        bbox2d,
        dimensions: [-1.0, -1.0, -1.0],
        location_cam: [-1000.0, -1000.0, -1000.0],
        rotation_y: -10.0,
        score: None,
    }
}

pub struct FrameSpec {
    pub id: String,
    pub objects: Vec<(Box3D, Category, i32, f64)>,
    pub dont_care: Vec<[f64; 4]>,
}

/// Twelve hand-placed frames. Objects are spread out so that no two overlap,
/// cover all three evaluated classes, several headings and all difficulty
/// strata, and include a `Van` and DontCare regions that the evaluator must
/// skip.
pub fn synthetic_frames() -> Vec<FrameSpec> {
    let car = |x, y, yaw| Box3D::new(x, y, -0.965, 3.9, 1.6, 1.53, yaw);
    let ped = |x, y, yaw| Box3D::new(x, y, -0.85, 0.8, 0.6, 1.76, yaw);
    let cyc = |x, y, yaw| Box3D::new(x, y, -0.86, 1.76, 0.6, 1.74, yaw);
    let van = |x, y, yaw| Box3D::new(x, y, -0.7, 5.0, 2.0, 2.1, yaw);
    use Category::*;
    let raw: Vec<(Vec<(Box3D, Category, i32, f64)>, Vec<[f64; 4]>)> = vec![
        (vec![(car(10.0, 0.0, 0.0), Car, 0, 0.0)], vec![]),
        (
            vec![(car(12.0, -4.0, 0.5), Car, 0, 0.0), (ped(8.0, 3.0, 1.2), Pedestrian, 0, 0.0)],
            vec![[0.0, 150.0, 60.0, 220.0]],
        ),
        (
            vec![(car(20.0, 5.0, -1.0), Car, 1, 0.2), (cyc(9.0, -3.0, 2.5), Cyclist, 0, 0.0)],
            vec![],
        ),
        (
            vec![
                (car(15.0, -8.0, 3.0), Car, 2, 0.4),
                (car(25.0, 2.0, -2.8), Car, 0, 0.0),
                (van(18.0, 9.0, 0.0), Other("Van".into()), 0, 0.0),
            ],
            vec![],
        ),
        (
            vec![(ped(6.0, -1.5, -0.3), Pedestrian, 1, 0.1), (ped(7.0, 2.0, 0.4), Pedestrian, 0, 0.0)],
            vec![[1100.0, 100.0, 1241.0, 300.0]],
        ),
        (
            vec![(cyc(14.0, 4.0, -1.6), Cyclist, 1, 0.25), (car(30.0, -3.0, 1.57), Car, 0, 0.0)],
            vec![],
        ),
        (vec![(car(8.0, 6.0, -0.8), Car, 0, 0.35)], vec![]),
        (
            vec![
                (car(11.0, 0.5, 0.1), Car, 0, 0.0),
                (car(19.0, -6.0, -2.2), Car, 1, 0.0),
                (ped(13.0, 6.0, 3.1), Pedestrian, 2, 0.0),
            ],
            vec![],
        ),
        (vec![(cyc(7.5, -2.0, 0.9), Cyclist, 0, 0.0), (cyc(16.0, 3.5, -2.9), Cyclist, 2, 0.45)], vec![]),
        (vec![(car(33.0, 0.0, 0.0), Car, 0, 0.0), (ped(5.0, 0.5, -1.0), Pedestrian, 0, 0.0)], vec![]),
        (vec![(car(9.5, -5.5, 2.0), Car, 1, 0.1)], vec![[500.0, 160.0, 560.0, 200.0]]),
        (
            vec![(ped(10.0, -4.0, 0.0), Pedestrian, 0, 0.0), (cyc(12.0, 1.0, 1.4), Cyclist, 1, 0.3)],
            vec![],
        ),
    ];
    raw.into_iter()
        .enumerate()
        .map(|(i, (objects, dont_care))| FrameSpec {
            id: format!("{i:06}"),
            objects,
            dont_care,
        })
        .collect()
}

/// A small deterministic scan around each object so the encoder has data.
pub fn scan_for(spec: &FrameSpec) -> PointCloud {
    let mut pts = Vec::new();
    for (k, (b, _, _, _)) in spec.objects.iter().enumerate() {
        for i in 0..40 {
            let t = i as f32 / 40.0;
            pts.push(Point::new(
                b.x as f32 + (t - 0.5) * b.l as f32 * 0.8,
                b.y as f32 + ((i * 7 % 40) as f32 / 40.0 - 0.5) * b.w as f32 * 0.8,
                (b.bottom() as f32) + t * b.h as f32,
                ((i + k) % 8) as f32 / 8.0,
            ));
        }
    }
    PointCloud::new(pts)
}

/// Writes `calib/`, `label_2/` and `velodyne/` under `root` and returns the
/// frame ids.
pub fn write_dataset(root: &Path, frames: &[FrameSpec]) -> Vec<String> {
    let calib = Calibration::canonical(FOCAL);
    for sub in ["calib", "label_2", "velodyne"] {
        fs::create_dir_all(root.join(sub)).unwrap();
    }
    for f in frames {
        fs::write(root.join("calib").join(format!("{}.txt", f.id)), calib.to_text()).unwrap();
        let mut text = String::new();
        for (b, cat, occ, trunc) in &f.objects {
            text.push_str(&label_for(b, cat.clone(), *occ, *trunc, &calib).to_line());
            text.push('\n');
        }
        for r in &f.dont_care {
            text.push_str(&dont_care(*r).to_line());
            text.push('\n');
        }
        fs::write(root.join("label_2").join(format!("{}.txt", f.id)), text).unwrap();
        write_point_cloud(&scan_for(f), root.join("velodyne").join(format!("{}.bin", f.id))).unwrap();
    }
    frames.iter().map(|f| f.id.clone()).collect()
}

/// Config text pointing the dataset section at `root`.
pub fn config_for(root: &Path) -> String {
    format!("[dataset]\nroot = {:?}\n", root.to_str().unwrap())
}
