//! KITTI-style average precision for BEV and 3D boxes.
//!
//! Both detections and ground truth are [`ObjectLabel`]s in the rectified
//! camera frame. Overlaps are computed on [`ObjectLabel::camera_frame_box`],
//! a rigid relabeling of that frame, so no calibration is needed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_3d, rotated_iou_bev};
use crate::kitti::{Category, ObjectLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl Difficulty {
    pub const LEVELS: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn name(&self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Moderate => "Moderate",
            Difficulty::Hard => "Hard",
            Difficulty::Ignored => "Ignored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyCriteria {
    pub min_bbox_height: f64,
    pub max_occlusion: i32,
    pub max_truncation: f64,
}

impl DifficultyCriteria {
    pub fn admits(&self, label: &ObjectLabel) -> bool {
        label.bbox_height() >= self.min_bbox_height
            && label.occlusion <= self.max_occlusion
            && label.truncation <= self.max_truncation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultyTable {
    pub easy: DifficultyCriteria,
    pub moderate: DifficultyCriteria,
    pub hard: DifficultyCriteria,
}

impl Default for DifficultyTable {
    fn default() -> Self {
        Self {
            easy: DifficultyCriteria {
                min_bbox_height: 40.0,
                max_occlusion: 0,
                max_truncation: 0.15,
            },
            moderate: DifficultyCriteria {
                min_bbox_height: 25.0,
                max_occlusion: 1,
                max_truncation: 0.30,
            },
            hard: DifficultyCriteria {
                min_bbox_height: 25.0,
                max_occlusion: 2,
                max_truncation: 0.50,
            },
        }
    }
}

/// Easiest difficulty whose criteria the label meets.
pub fn assign_difficulty(label: &ObjectLabel, criteria: &DifficultyTable) -> Difficulty {
    if criteria.easy.admits(label) {
        Difficulty::Easy
    } else if criteria.moderate.admits(label) {
        Difficulty::Moderate
    } else if criteria.hard.admits(label) {
        Difficulty::Hard
    } else {
        Difficulty::Ignored
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Bev => "BEV",
            Metric::ThreeD => "3D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ApMode {
    #[serde(rename = "11")]
    Point11,
    #[serde(rename = "40")]
    Point40,
}

impl ApMode {
    pub fn name(&self) -> &'static str {
        match self {
            ApMode::Point11 => "AP11",
            ApMode::Point40 => "AP40",
        }
    }

    pub fn recall_samples(&self) -> Vec<f64> {
        match self {
            ApMode::Point11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
            ApMode::Point40 => (1..=40).map(|i| i as f64 / 40.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IouThresholds {
    pub car: f64,
    pub pedestrian: f64,
    pub cyclist: f64,
}

impl Default for IouThresholds {
    fn default() -> Self {
        Self {
            car: 0.7,
            pedestrian: 0.5,
            cyclist: 0.5,
        }
    }
}

impl IouThresholds {
    pub fn for_category(&self, c: &Category) -> Option<f64> {
        match c {
            Category::Car => Some(self.car),
            Category::Pedestrian => Some(self.pedestrian),
            Category::Cyclist => Some(self.cyclist),
            Category::Other(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: IouThresholds,
    pub ap_mode: ApMode,
    pub metric: Metric,
    pub difficulty: DifficultyTable,
    /// Fraction of a detection's image box that must fall inside a DontCare
    /// region for the detection to be ignored.
    pub dont_care_overlap: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: IouThresholds::default(),
            ap_mode: ApMode::Point40,
            metric: Metric::Bev,
            difficulty: DifficultyTable::default(),
            dont_care_overlap: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.iou_thresholds;
        if [t.car, t.pedestrian, t.cyclist]
            .iter()
            .any(|v| !(*v > 0.0 && *v <= 1.0))
        {
            return Err(Error::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        let d = &self.difficulty;
        let nested = d.easy.min_bbox_height >= d.moderate.min_bbox_height
            && d.moderate.min_bbox_height >= d.hard.min_bbox_height
            && d.easy.max_occlusion <= d.moderate.max_occlusion
            && d.moderate.max_occlusion <= d.hard.max_occlusion
            && d.easy.max_truncation <= d.moderate.max_truncation
            && d.moderate.max_truncation <= d.hard.max_truncation;
        if !nested {
            return Err(Error::Config("difficulty criteria must nest Easy in Moderate in Hard".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched an ignored ground truth or a DontCare region.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// `(detection index, score, outcome)` in matching order.
    pub detections: Vec<(usize, f64, MatchOutcome)>,
    pub gt_matched: Vec<bool>,
    /// Non-ignored ground truths of the category.
    pub n_gt: usize,
}

pub fn pair_iou(a: &ObjectLabel, b: &ObjectLabel, metric: Metric) -> f64 {
    let (a, b) = (a.camera_frame_box(), b.camera_frame_box());
    match metric {
        Metric::Bev => rotated_iou_bev(&a.bev(), &b.bev()),
        Metric::ThreeD => iou_3d(&a, &b),
    }
}

fn image_overlap_fraction(det: &[f64; 4], region: &[f64; 4]) -> f64 {
    let area = (det[2] - det[0]) * (det[3] - det[1]);
    if !(area > 0.0) {
        return 0.0;
    }
    let iw = (det[2].min(region[2]) - det[0].max(region[0])).max(0.0);
    let ih = (det[3].min(region[3]) - det[1].max(region[1])).max(0.0);
    iw * ih / area
}

/// Greedy matching of one frame's detections of `category` at difficulty
/// `level`. Ground truths of the category that are harder than `level` are
/// matchable but ignored.
pub fn match_frame(
    dets: &[ObjectLabel],
    gts: &[ObjectLabel],
    category: &Category,
    iou_threshold: f64,
    metric: Metric,
    level: Difficulty,
    config: &EvalConfig,
) -> FrameMatch {
    let candidates: Vec<(usize, bool)> = gts
        .iter()
        .enumerate()
        .filter(|(_, g)| &g.category == category)
        .map(|(i, g)| (i, assign_difficulty(g, &config.difficulty) > level))
        .collect();
    let n_gt = candidates.iter().filter(|(_, ignored)| !ignored).count();
    let dont_care: Vec<&ObjectLabel> = gts.iter().filter(|g| g.category.is_dont_care()).collect();

    let own: Vec<usize> = (0..dets.len()).filter(|&i| &dets[i].category == category).collect();
    let scores: Vec<f64> = own.iter().map(|&i| dets[i].score.unwrap_or(0.0)).collect();
    let mut gt_matched = vec![false; gts.len()];
    let mut out = Vec::with_capacity(own.len());
    for k in crate::post::score_order(&scores) {
        let di = own[k];
        let det = &dets[di];
        let mut best: Option<(usize, bool, f64)> = None;
        for &(gi, ignored) in &candidates {
            if gt_matched[gi] {
                continue;
            }
            let iou = pair_iou(det, &gts[gi], metric);
            if iou >= iou_threshold && best.is_none_or(|(_, _, b)| iou > b) {
                best = Some((gi, ignored, iou));
            }
        }
        let outcome = match best {
            Some((gi, ignored, _)) => {
                gt_matched[gi] = true;
                if ignored {
                    MatchOutcome::Ignored
                } else {
                    MatchOutcome::TruePositive
                }
            }
            None if dont_care
                .iter()
                .any(|r| image_overlap_fraction(&det.bbox2d, &r.bbox2d) >= config.dont_care_overlap) =>
            {
                MatchOutcome::Ignored
            }
            None => MatchOutcome::FalsePositive,
        };
        out.push((di, scores[k], outcome));
    }
    FrameMatch {
        detections: out,
        gt_matched,
        n_gt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub n_gt: usize,
    /// Detections were present but there was no ground truth.
    pub no_ground_truth: bool,
}

/// Sweeps `(score, is_true_positive)` flags in descending score order (ties
/// keep their given order).
pub fn precision_recall(flags: &[(f64, bool)], n_gt: usize) -> PrCurve {
    if n_gt == 0 {
        return PrCurve {
            points: Vec::new(),
            n_gt,
            no_ground_truth: !flags.is_empty(),
        };
    }
    let scores: Vec<f64> = flags.iter().map(|f| f.0).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let points = crate::post::score_order(&scores)
        .into_iter()
        .map(|i| {
            if flags[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                recall: tp as f64 / n_gt as f64,
                precision: tp as f64 / (tp + fp) as f64,
            }
        })
        .collect();
    PrCurve {
        points,
        n_gt,
        no_ground_truth: false,
    }
}

/// Mean interpolated precision at the mode's recall samples.
pub fn average_precision(curve: &PrCurve, mode: ApMode) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    // Suffix maxima give the interpolated precision at each curve point.
    let mut interp = vec![0.0; curve.points.len()];
    let mut running: f64 = 0.0;
    for i in (0..curve.points.len()).rev() {
        running = running.max(curve.points[i].precision);
        interp[i] = running;
    }
    let samples = mode.recall_samples();
    let total: f64 = samples
        .iter()
        .map(|&r| {
            curve
                .points
                .iter()
                .position(|p| p.recall >= r)
                .map_or(0.0, |i| interp[i])
        })
        .sum();
    total / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApCell {
    pub category: Category,
    pub difficulty: Difficulty,
    pub ap: f64,
    pub n_gt: usize,
    pub n_tp: usize,
    pub n_fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApTable {
    pub metric: Metric,
    pub ap_mode: ApMode,
    pub cells: Vec<ApCell>,
}

impl ApTable {
    pub fn get(&self, category: &Category, difficulty: Difficulty) -> Option<&ApCell> {
        self.cells
            .iter()
            .find(|c| &c.category == category && c.difficulty == difficulty)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {} (%)\n{:<12}{:>10}{:>10}{:>10}\n",
            self.metric.name(),
            self.ap_mode.name(),
            "",
            "Easy",
            "Moderate",
            "Hard"
        );
        for cat in Category::EVALUATED {
            let _ = write!(s, "{:<12}", cat.as_str());
            for d in Difficulty::LEVELS {
                match self.get(&cat, d) {
                    Some(c) if c.n_gt > 0 => {
                        let _ = write!(s, "{:>10.2}", 100.0 * c.ap);
                    }
                    _ => {
                        let _ = write!(s, "{:>10}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    /// `metric,ap_mode,category,difficulty,ap,n_gt,n_tp,n_fp` rows.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{},{},{}",
                self.metric.name(),
                self.ap_mode.name(),
                c.category,
                c.difficulty.name(),
                c.ap,
                c.n_gt,
                c.n_tp,
                c.n_fp
            );
        }
        s
    }
}

pub const CSV_HEADER: &str = "metric,ap_mode,category,difficulty,ap,n_gt,n_tp,n_fp";

pub type FrameLabels = BTreeMap<String, Vec<ObjectLabel>>;

/// AP per category and difficulty for `config.metric` / `config.ap_mode`.
/// Frames missing from `dets` have no detections.
pub fn evaluate(dets: &FrameLabels, gts: &FrameLabels, config: &EvalConfig) -> Result<ApTable> {
    let unknown: Vec<String> = dets.keys().filter(|k| !gts.contains_key(*k)).cloned().collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownFrames(unknown));
    }
    let empty = Vec::new();
    let mut cells = Vec::new();
    for category in Category::EVALUATED {
        let thr = config.iou_thresholds.for_category(&category).unwrap();
        for level in Difficulty::LEVELS {
            let matches: Vec<FrameMatch> = gts
                .par_iter()
                .map(|(id, g)| {
                    let d = dets.get(id).unwrap_or(&empty);
                    match_frame(d, g, &category, thr, config.metric, level, config)
                })
                .collect();
            let n_gt: usize = matches.iter().map(|m| m.n_gt).sum();
            let flags: Vec<(f64, bool)> = matches
                .iter()
                .flat_map(|m| m.detections.iter())
                .filter(|(_, _, o)| *o != MatchOutcome::Ignored)
                .map(|(_, s, o)| (*s, *o == MatchOutcome::TruePositive))
                .collect();
            let n_tp = flags.iter().filter(|f| f.1).count();
            let curve = precision_recall(&flags, n_gt);
            cells.push(ApCell {
                category: category.clone(),
                difficulty: level,
                ap: average_precision(&curve, config.ap_mode),
                n_gt,
                n_tp,
                n_fp: flags.len() - n_tp,
            });
        }
    }
    Ok(ApTable {
        metric: config.metric,
        ap_mode: config.ap_mode,
        cells,
    })
}

/// Tables for both metrics and both AP modes.
pub fn evaluate_all(dets: &FrameLabels, gts: &FrameLabels, config: &EvalConfig) -> Result<Vec<ApTable>> {
    let mut out = Vec::new();
    for metric in [Metric::Bev, Metric::ThreeD] {
        for ap_mode in [ApMode::Point11, ApMode::Point40] {
            let cfg = EvalConfig {
                metric,
                ap_mode,
                ..config.clone()
            };
            out.push(evaluate(dets, gts, &cfg)?);
        }
    }
    Ok(out)
}
