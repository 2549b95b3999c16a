//! Post-inference suppression and the oracle detector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bev::{bev_pixels_to_box, box_to_bev_pixels, GridConfig};
use crate::codec::{assemble_box3d, CodecConfig};
use crate::error::Result;
use crate::geometry::{rotated_iou_bev, wrap_angle, Box3D, RotatedBox2D};
use crate::kitti::Category;

/// IoU threshold of the final per-category NMS.
pub const DEFAULT_NMS_IOU: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub category: Category,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub frame_id: String,
    pub detections: Vec<Detection>,
}

/// Indices of `scores` sorted by descending score, ties in input order.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Indices kept by greedy per-category NMS on the BEV footprints, in
/// descending score order. A detection is suppressed when its IoU with an
/// already kept detection of its category exceeds `iou_threshold`.
pub fn rotated_nms_indices(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(&scores) {
        let d = &dets[i];
        let footprint = d.bbox.bev();
        let suppressed = kept.iter().any(|&k| {
            dets[k].category == d.category
                && rotated_iou_bev(&dets[k].bbox.bev(), &footprint) > iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

pub fn rotated_nms(dets: &DetectionSet, iou_threshold: f64) -> DetectionSet {
    DetectionSet {
        frame_id: dets.frame_id.clone(),
        detections: rotated_nms_indices(&dets.detections, iou_threshold)
            .into_iter()
            .map(|i| dets.detections[i].clone())
            .collect(),
    }
}

/// Standard deviations of the Gaussian noise added in target space, plus
/// the relative jitter applied to the pseudo-proposal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub proposal_jitter: f64,
    pub sigma_xy: f64,
    pub sigma_lw: f64,
    pub sigma_h: f64,
    pub sigma_z: f64,
    pub sigma_yaw: f64,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    /// All components set to `s` (yaw residual and jitter included).
    pub fn uniform(s: f64) -> Self {
        Self {
            proposal_jitter: s,
            sigma_xy: s,
            sigma_lw: s,
            sigma_h: s,
            sigma_z: s,
            sigma_yaw: s,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Stand-in for the learned network: pushes each ground-truth box through
/// the full encode/decode path against a pseudo-proposal (its pixel-space
/// axis-aligned hull), with optional Gaussian noise on the encoded targets.
/// Boxes outside the grid or without a reference box produce no detection.
pub fn oracle_detect(
    frame_id: &str,
    gt: &[(Box3D, Category)],
    noise: &NoiseSpec,
    seed: u64,
    grid: &GridConfig,
    codec: &CodecConfig,
) -> Result<DetectionSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut detections = Vec::with_capacity(gt.len());
    for (b, category) in gt {
        if codec.references.get(category).is_none() {
            continue;
        }
        let Ok(pixels) = box_to_bev_pixels(b, grid) else {
            log::warn!("{frame_id}: box at ({:.2}, {:.2}) outside grid, skipped", b.x, b.y);
            continue;
        };
        let mut proposal = pixels.aabb_hull();
        let j = noise.proposal_jitter;
        proposal.x += gaussian(&mut rng, j) * proposal.sx;
        proposal.y += gaussian(&mut rng, j) * proposal.sy;
        proposal.sx *= gaussian(&mut rng, j).exp();
        proposal.sy *= gaussian(&mut rng, j).exp();

        // Encode with the metric yaw so bins stay anchored to the LiDAR axes.
        let planar = RotatedBox2D { yaw: b.yaw, ..pixels };
        let mut t = codec.encode(&planar, b.h, b.z, category, &proposal)?;
        let perturb = [
            gaussian(&mut rng, noise.sigma_xy),
            gaussian(&mut rng, noise.sigma_xy),
            gaussian(&mut rng, noise.sigma_lw),
            gaussian(&mut rng, noise.sigma_lw),
            gaussian(&mut rng, noise.sigma_h),
            gaussian(&mut rng, noise.sigma_z),
            gaussian(&mut rng, noise.sigma_yaw),
        ];
        t.deltas.dx += perturb[0];
        t.deltas.dy += perturb[1];
        t.deltas.dl += perturb[2];
        t.deltas.dw += perturb[3];
        t.deltas.dh += perturb[4];
        t.deltas.dz += perturb[5];
        t.yaw.residual = (t.yaw.residual + perturb[6]).clamp(-1.0, 1.0);

        let (decoded, h, z) = codec.decode(&t, category, &proposal)?;
        let pixel_box = RotatedBox2D {
            yaw: wrap_angle(-decoded.yaw),
            ..decoded
        };
        let mut metric = bev_pixels_to_box(&pixel_box, grid);
        metric.yaw = decoded.yaw;

        let rms = (perturb.iter().map(|p| p * p).sum::<f64>() / perturb.len() as f64).sqrt();
        detections.push(Detection {
            bbox: assemble_box3d(&metric, h, z),
            category: category.clone(),
            score: (1.0 - rms).clamp(0.0, 1.0),
        });
    }
    Ok(DetectionSet {
        frame_id: frame_id.to_string(),
        detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, yaw: f64, cat: Category, score: f64) -> Detection {
        Detection {
            bbox: Box3D::new(x, y, -1.0, 4.0, 2.0, 1.5, yaw),
            category: cat,
            score,
        }
    }

    fn set(d: Vec<Detection>) -> DetectionSet {
        DetectionSet {
            frame_id: "000000".into(),
            detections: d,
        }
    }

    #[test]
    fn single_detection_survives() {
        let s = set(vec![det(10.0, 0.0, 0.0, Category::Car, 0.5)]);
        assert_eq!(rotated_nms(&s, 0.3), s);
    }

    #[test]
    fn greedy_walk() {
        // A and B overlap with IoU exactly 0.5: B shifted by 4/3 m along l.
        let a = det(10.0, 0.0, 0.0, Category::Car, 0.9);
        let b = det(10.0 + 4.0 / 3.0, 0.0, 0.0, Category::Car, 0.8);
        let c = det(20.0, 5.0, 0.0, Category::Car, 0.7);
        assert!((rotated_iou_bev(&a.bbox.bev(), &b.bbox.bev()) - 0.5).abs() < 1e-12);
        let out = rotated_nms(&set(vec![b.clone(), c.clone(), a.clone()]), 0.3);
        assert_eq!(out.detections, vec![a, c]);
    }

    #[test]
    fn categories_are_independent() {
        let a = det(10.0, 0.0, 0.3, Category::Car, 0.9);
        let b = det(10.0, 0.0, 0.3, Category::Cyclist, 0.8);
        assert_eq!(rotated_nms(&set(vec![a, b]), 0.3).detections.len(), 2);
    }

    #[test]
    fn equal_scores_keep_input_order() {
        let a = det(10.0, 0.0, 0.0, Category::Car, 0.5);
        let b = det(10.1, 0.0, 0.0, Category::Car, 0.5);
        let out = rotated_nms(&set(vec![a.clone(), b]), 0.3);
        assert_eq!(out.detections, vec![a]);
    }

    #[test]
    fn zero_noise_oracle_reproduces_boxes() {
        let grid = GridConfig::default();
        let codec = CodecConfig::default();
        let gt = vec![
            (Box3D::new(12.3, -4.1, -0.9, 3.9, 1.6, 1.5, 0.7), Category::Car),
            (Box3D::new(8.0, 3.0, -0.85, 0.8, 0.6, 1.8, -2.9), Category::Pedestrian),
            (Box3D::new(30.0, 10.0, -0.9, 1.7, 0.6, 1.7, 3.1), Category::Cyclist),
        ];
        let out = oracle_detect("f", &gt, &NoiseSpec::zero(), 7, &grid, &codec).unwrap();
        assert_eq!(out.detections.len(), 3);
        for ((g, c), d) in gt.iter().zip(&out.detections) {
            assert_eq!(&d.category, c);
            assert_eq!(d.score, 1.0);
            let a = [g.x, g.y, g.z, g.l, g.w, g.h, g.yaw];
            let b = [d.bbox.x, d.bbox.y, d.bbox.z, d.bbox.l, d.bbox.w, d.bbox.h, d.bbox.yaw];
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-9, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn oracle_is_deterministic() {
        let grid = GridConfig::default();
        let codec = CodecConfig::default();
        let gt = vec![(Box3D::new(12.3, -4.1, -0.9, 3.9, 1.6, 1.5, 0.7), Category::Car)];
        let noise = NoiseSpec::uniform(0.1);
        let a = oracle_detect("f", &gt, &noise, 3, &grid, &codec).unwrap();
        let b = oracle_detect("f", &gt, &noise, 3, &grid, &codec).unwrap();
        let c = oracle_detect("f", &gt, &noise, 4, &grid, &codec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.detections[0].score < 1.0);
    }

    #[test]
    fn outside_grid_is_skipped() {
        let gt = vec![(Box3D::new(-3.0, 0.0, -0.9, 3.9, 1.6, 1.5, 0.0), Category::Car)];
        let out =
            oracle_detect("f", &gt, &NoiseSpec::zero(), 0, &GridConfig::default(), &CodecConfig::default())
                .unwrap();
        assert!(out.detections.is_empty());
    }
}
