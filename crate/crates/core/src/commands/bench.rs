use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bev::{encode, GridConfig};
use crate::config::PipelineConfig;
use crate::eval::{evaluate, FrameLabels};
use crate::geometry::{wrap_angle, Box3D};
use crate::kitti::{Category, ObjectLabel, Point, PointCloud};
use crate::post::{rotated_nms, Detection, DetectionSet};

/// Uniform random cloud covering the grid.
pub fn synthetic_cloud(n: usize, grid: &GridConfig, rng: &mut impl Rng) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..grid.forward_range) as f32;
            let y = rng.random_range(-grid.lateral_range..grid.lateral_range) as f32;
            let z = (grid.ground_z + rng.random_range(0.0..grid.max_height_above_ground + 0.5)) as f32;
            Point::new(x, y, z, rng.random_range(0.0f32..1.0))
        })
        .collect();
    PointCloud::new(points)
}

fn synthetic_detections(n: usize, rng: &mut impl Rng) -> DetectionSet {
    let cats = Category::EVALUATED;
    DetectionSet {
        frame_id: "bench".into(),
        detections: (0..n)
            .map(|_| Detection {
                bbox: Box3D::new(
                    rng.random_range(0.0..35.0),
                    rng.random_range(-20.0..20.0),
                    -1.0,
                    rng.random_range(0.5..5.0),
                    rng.random_range(0.5..2.0),
                    1.5,
                    wrap_angle(rng.random_range(-4.0..4.0)),
                ),
                category: cats[rng.random_range(0..3)].clone(),
                score: rng.random_range(0.0..1.0),
            })
            .collect(),
    }
}

fn synthetic_labels(n: usize, scored: bool, rng: &mut impl Rng) -> Vec<ObjectLabel> {
    (0..n)
        .map(|_| {
            let h = rng.random_range(20.0..120.0);
            ObjectLabel {
                category: Category::EVALUATED[rng.random_range(0..3)].clone(),
                truncation: rng.random_range(0.0..0.5),
                occlusion: rng.random_range(0..3),
                alpha: 0.0,
                bbox2d: [100.0, 100.0, 200.0, 100.0 + h],
                dimensions: [1.5, 1.6, 3.9],
                location_cam: [rng.random_range(-15.0..15.0), 1.7, rng.random_range(5.0..35.0)],
                rotation_y: rng.random_range(-3.0..3.0),
                score: scored.then(|| rng.random_range(0.0..1.0)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: String,
    pub samples_ms: Vec<f64>,
}

impl StageTiming {
    fn quantile(&self, q: f64) -> f64 {
        let mut v = self.samples_ms.clone();
        v.sort_by(f64::total_cmp);
        let idx = ((v.len() - 1) as f64 * q).round() as usize;
        v[idx]
    }

    pub fn median_ms(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn p95_ms(&self) -> f64 {
        self.quantile(0.95)
    }

    pub fn std_ms(&self) -> f64 {
        let n = self.samples_ms.len() as f64;
        let mean = self.samples_ms.iter().sum::<f64>() / n;
        (self.samples_ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub points_per_frame: usize,
    pub stages: Vec<StageTiming>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        if self.stages.is_empty() {
            return "no frames benchmarked\n".into();
        }
        let mut s = format!(
            "{:<10}{:>8}{:>12}{:>12}{:>12}\n",
            "stage", "frames", "median ms", "p95 ms", "std ms"
        );
        for t in &self.stages {
            s += &format!(
                "{:<10}{:>8}{:>12.3}{:>12.3}{:>12.3}\n",
                t.stage,
                t.samples_ms.len(),
                t.median_ms(),
                t.p95_ms(),
                t.std_ms()
            );
        }
        s
    }
}

/// Points in each synthetic benchmark cloud.
pub const BENCH_POINTS: usize = 120_000;

/// Times encode, NMS and evaluation over `n_frames` synthetic frames.
pub fn cmd_bench(cfg: &PipelineConfig, n_frames: usize, seed: u64) -> BenchReport {
    if n_frames == 0 {
        return BenchReport::default();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages: Vec<StageTiming> = ["encode", "nms", "eval"]
        .iter()
        .map(|s| StageTiming {
            stage: s.to_string(),
            samples_ms: Vec::new(),
        })
        .collect();
    for f in 0..n_frames {
        let cloud = synthetic_cloud(BENCH_POINTS, &cfg.grid, &mut rng);
        let t = Instant::now();
        std::hint::black_box(encode(&cloud, &cfg.grid));
        stages[0].samples_ms.push(t.elapsed().as_secs_f64() * 1e3);

        let dets = synthetic_detections(300, &mut rng);
        let t = Instant::now();
        std::hint::black_box(rotated_nms(&dets, cfg.nms.iou_threshold));
        stages[1].samples_ms.push(t.elapsed().as_secs_f64() * 1e3);

        let id = format!("{f:06}");
        let gts: FrameLabels = BTreeMap::from([(id.clone(), synthetic_labels(20, false, &mut rng))]);
        let det_labels: FrameLabels = BTreeMap::from([(id, synthetic_labels(40, true, &mut rng))]);
        let t = Instant::now();
        std::hint::black_box(evaluate(&det_labels, &gts, &cfg.eval).expect("ids align"));
        stages[2].samples_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    BenchReport {
        points_per_frame: BENCH_POINTS,
        stages,
    }
}
