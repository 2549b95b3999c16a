//! Region-proposal anchors on the BEV pixel grid and their training labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{aabb_iou, AabbBox2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    /// Anchor side lengths in pixels; each anchor has area `scale^2`.
    pub scales: Vec<f64>,
    /// `sy / sx` ratios. `2.0` is the 1:2 (x:y) anchor.
    pub aspect_ratios: Vec<f64>,
    pub stride: f64,
    pub fg_iou: f64,
    pub bg_iou: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            scales: vec![16.0, 48.0, 80.0],
            aspect_ratios: vec![1.0, 2.0, 0.5],
            stride: 8.0,
            fg_iou: 0.7,
            bg_iou: 0.3,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&self.scales) || !positive(&self.aspect_ratios) || !(self.stride > 0.0) {
            return Err(Error::Config("anchor scales, ratios and stride must be positive".into()));
        }
        if !(self.fg_iou > self.bg_iou) {
            return Err(Error::Config("fg_iou must exceed bg_iou".into()));
        }
        Ok(())
    }

    pub fn per_location(&self) -> usize {
        self.scales.len() * self.aspect_ratios.len()
    }
}

/// Area-preserving anchors centered at the origin, scale-major.
pub fn base_anchors(config: &AnchorConfig) -> Vec<AabbBox2D> {
    config
        .scales
        .iter()
        .flat_map(|&s| {
            config.aspect_ratios.iter().map(move |&r| {
                let root = r.sqrt();
                AabbBox2D::new(0.0, 0.0, s / root, s * root)
            })
        })
        .collect()
}

/// Replicates the base anchors over a feature map. Order: feature row, then
/// feature column, then base anchor. Anchors crossing the image border are
/// kept.
pub fn tile_anchors(config: &AnchorConfig, feature_rows: usize, feature_cols: usize) -> Vec<AabbBox2D> {
    let base = base_anchors(config);
    let mut out = Vec::with_capacity(feature_rows * feature_cols * base.len());
    for i in 0..feature_rows {
        let cy = config.stride * (i as f64 + 0.5);
        for j in 0..feature_cols {
            let cx = config.stride * (j as f64 + 0.5);
            out.extend(base.iter().map(|b| b.translate(cx, cy)));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorLabel {
    Foreground,
    Background,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorAssignment {
    pub label: AnchorLabel,
    /// Best-overlapping ground truth (or the one that claimed the anchor
    /// through the best-anchor rule).
    pub gt_index: Option<usize>,
    pub iou: f64,
}

/// Labels anchors against axis-aligned ground-truth hulls.
pub fn assign_anchor_targets(
    anchors: &[AabbBox2D],
    gt_boxes: &[AabbBox2D],
    config: &AnchorConfig,
) -> Vec<AnchorAssignment> {
    let iou: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| gt_boxes.iter().map(|g| aabb_iou(a, g)).collect())
        .collect();

    let mut out: Vec<AnchorAssignment> = iou
        .iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .fold(None, |acc: Option<(usize, f64)>, (g, &v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((g, v)),
                });
            let (gt_index, best_iou) = match best {
                Some((g, v)) => (Some(g), v),
                None => (None, 0.0),
            };
            let label = if best_iou >= config.fg_iou {
                AnchorLabel::Foreground
            } else if best_iou < config.bg_iou {
                AnchorLabel::Background
            } else {
                AnchorLabel::Ignore
            };
            AnchorAssignment {
                label,
                gt_index: if label == AnchorLabel::Background { None } else { gt_index },
                iou: best_iou,
            }
        })
        .collect();

    for g in 0..gt_boxes.len() {
        let mut best: Option<(usize, f64)> = None;
        for (a, row) in iou.iter().enumerate() {
            if row[g] > best.map_or(0.0, |b| b.1) {
                best = Some((a, row[g]));
            }
        }
        if let Some((a, v)) = best {
            if out[a].label != AnchorLabel::Foreground {
                out[a] = AnchorAssignment {
                    label: AnchorLabel::Foreground,
                    gt_index: Some(g),
                    iou: v,
                };
            }
        }
    }
    out
}
