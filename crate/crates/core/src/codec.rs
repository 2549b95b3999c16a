//! Regression target codecs linking proposals and reference boxes to
//! oriented 3D boxes.
//!
//! * planar position and size are offsets from an axis-aligned proposal,
//! * height and elevation are offsets from a per-category reference box
//!   resting on the ground plane,
//! * yaw is a bin index plus a residual normalized to `[-1, 1]`.
//!
//! Every encoder has an exact inverse.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, AabbBox2D, Box3D, RotatedBox2D};
use crate::kitti::Category;

/// Default number of yaw bins.
pub const DEFAULT_YAW_BINS: usize = 12;

/// Average object heights (m) used as reference boxes.
pub const DEFAULT_REFERENCE_HEIGHTS: [(Category, f64); 3] = [
    (Category::Car, 1.53),
    (Category::Pedestrian, 1.76),
    (Category::Cyclist, 1.74),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBox {
    pub h_ref: f64,
    /// Centroid elevation of the reference box.
    pub z_ref: f64,
}

impl ReferenceBox {
    /// Reference of height `h_ref` lying on the plane `z = ground_z`.
    pub fn on_ground(h_ref: f64, ground_z: f64) -> Self {
        Self {
            h_ref,
            z_ref: ground_z + 0.5 * h_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionWeights {
    pub w_z: f64,
    pub w_h: f64,
    pub w_xy: f64,
    pub w_lw: f64,
}

impl Default for RegressionWeights {
    fn default() -> Self {
        Self {
            w_z: 1.0,
            w_h: 1.0,
            w_xy: 1.0,
            w_lw: 1.0,
        }
    }
}

impl RegressionWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_z, self.w_h, self.w_xy, self.w_lw]
            .iter()
            .all(|w| *w > 0.0 && w.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Config(format!("weights must be positive: {self:?}")))
        }
    }

    /// Weights that give unit variance: reciprocal standard deviations of
    /// unit-weight targets over a sample. Components with no spread keep 1.
    pub fn fit(samples: &[TargetDeltas]) -> Self {
        let recip_std = |vals: Vec<f64>| {
            let n = vals.len() as f64;
            if vals.len() < 2 {
                return 1.0;
            }
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        };
        let col = |f: fn(&TargetDeltas) -> f64| samples.iter().map(f).collect::<Vec<_>>();
        let xy = [col(|d| d.dx), col(|d| d.dy)].concat();
        let lw = [col(|d| d.dl), col(|d| d.dw)].concat();
        Self {
            w_z: recip_std(col(|d| d.dz)),
            w_h: recip_std(col(|d| d.dh)),
            w_xy: recip_std(xy),
            w_lw: recip_std(lw),
        }
    }
}

/// Which form of the height target is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightMode {
    /// `w_h * ln(h / h_ref)`; zero at the reference height.
    #[default]
    Ratio,
    /// `w_h * ln(h) / h_ref`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetDeltas {
    pub dx: f64,
    pub dy: f64,
    pub dl: f64,
    pub dw: f64,
    pub dh: f64,
    pub dz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YawEncoding {
    pub bin: usize,
    pub residual: f64,
}

/// `(dx, dy, dsx, dsy)` of `target` relative to `proposal`.
pub fn encode_aabb_delta(proposal: &AabbBox2D, target: &AabbBox2D, w: &RegressionWeights) -> [f64; 4] {
    [
        w.w_xy * (target.x - proposal.x) / proposal.sx,
        w.w_xy * (target.y - proposal.y) / proposal.sy,
        w.w_lw * (target.sx / proposal.sx).ln(),
        w.w_lw * (target.sy / proposal.sy).ln(),
    ]
}

pub fn decode_aabb_delta(proposal: &AabbBox2D, d: &[f64; 4], w: &RegressionWeights) -> AabbBox2D {
    AabbBox2D::new(
        proposal.x + d[0] / w.w_xy * proposal.sx,
        proposal.y + d[1] / w.w_xy * proposal.sy,
        proposal.sx * (d[2] / w.w_lw).exp(),
        proposal.sy * (d[3] / w.w_lw).exp(),
    )
}

/// `(dx, dy, dl, dw)` of a rotated target relative to an axis-aligned
/// proposal. Length pairs with the proposal's x extent, width with y.
pub fn encode_rotated_dims(
    proposal: &AabbBox2D,
    target: &RotatedBox2D,
    w: &RegressionWeights,
) -> [f64; 4] {
    [
        w.w_xy * (target.x - proposal.x) / proposal.sx,
        w.w_xy * (target.y - proposal.y) / proposal.sy,
        w.w_lw * (target.l / proposal.sx).ln(),
        w.w_lw * (target.w / proposal.sy).ln(),
    ]
}

/// Returns `(x, y, l, w)`.
pub fn decode_rotated_dims(proposal: &AabbBox2D, d: &[f64; 4], w: &RegressionWeights) -> [f64; 4] {
    [
        proposal.x + d[0] / w.w_xy * proposal.sx,
        proposal.y + d[1] / w.w_xy * proposal.sy,
        proposal.sx * (d[2] / w.w_lw).exp(),
        proposal.sy * (d[3] / w.w_lw).exp(),
    ]
}

/// Returns `(dh, dz)`.
pub fn encode_height_z(
    h: f64,
    z: f64,
    reference: &ReferenceBox,
    w: &RegressionWeights,
    mode: HeightMode,
) -> Result<(f64, f64)> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("height must be positive, got {h}")));
    }
    let dh = match mode {
        HeightMode::Ratio => w.w_h * (h / reference.h_ref).ln(),
        HeightMode::Literal => w.w_h * h.ln() / reference.h_ref,
    };
    let dz = w.w_z * (z - reference.z_ref) / reference.h_ref;
    Ok((dh, dz))
}

/// Returns `(h, z)`.
pub fn decode_height_z(
    dh: f64,
    dz: f64,
    reference: &ReferenceBox,
    w: &RegressionWeights,
    mode: HeightMode,
) -> (f64, f64) {
    let h = match mode {
        HeightMode::Ratio => reference.h_ref * (dh / w.w_h).exp(),
        HeightMode::Literal => (dh * reference.h_ref / w.w_h).exp(),
    };
    (h, reference.z_ref + dz * reference.h_ref / w.w_z)
}

fn check_bins(n_bins: usize) -> Result<()> {
    if n_bins >= 4 && n_bins % 4 == 0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "yaw bin count must be a positive multiple of 4, got {n_bins}"
        )))
    }
}

/// Center of yaw bin `k`, in `(-pi, pi]`. Bin 0 points forward; cardinal
/// centers are exactly `0, pi/2, pi, -pi/2`, and centers past `pi` are exact
/// mirrors of those before it.
pub fn yaw_bin_center(k: usize, n_bins: usize) -> f64 {
    let per_quarter = n_bins / 4;
    let (mirror, k) = if 2 * k > n_bins { (true, n_bins - k) } else { (false, k) };
    let quarters = (k / per_quarter) as f64;
    let rest = (k % per_quarter) as f64;
    let c = quarters * FRAC_PI_2 + rest * (FRAC_PI_2 / per_quarter as f64);
    if mirror {
        -c
    } else {
        c
    }
}

/// Nearest bin center plus the offset from it in units of the half bin
/// width. On an exact boundary the lower bin index wins.
pub fn encode_yaw(theta: f64, n_bins: usize) -> Result<YawEncoding> {
    check_bins(n_bins)?;
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite yaw {theta}")));
    }
    let theta = wrap_angle(theta);
    let (mut bin, mut best) = (0, f64::INFINITY);
    for k in 0..n_bins {
        let d = wrap_angle(theta - yaw_bin_center(k, n_bins)).abs();
        if d < best {
            best = d;
            bin = k;
        }
    }
    let half = PI / n_bins as f64;
    let residual = (wrap_angle(theta - yaw_bin_center(bin, n_bins)) / half).clamp(-1.0, 1.0);
    Ok(YawEncoding { bin, residual })
}

pub fn decode_yaw(enc: &YawEncoding, n_bins: usize) -> Result<f64> {
    check_bins(n_bins)?;
    if enc.bin >= n_bins {
        return Err(Error::InvalidArgument(format!("yaw bin {} out of range", enc.bin)));
    }
    let half = PI / n_bins as f64;
    Ok(wrap_angle(yaw_bin_center(enc.bin, n_bins) + enc.residual * half))
}

pub fn assemble_box3d(bev: &RotatedBox2D, h: f64, z: f64) -> Box3D {
    Box3D::new(bev.x, bev.y, z, bev.l, bev.w, h, bev.yaw)
}

/// Per-category reference boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceTable(pub BTreeMap<String, ReferenceBox>);

impl ReferenceTable {
    pub fn with_ground(ground_z: f64) -> Self {
        Self(
            DEFAULT_REFERENCE_HEIGHTS
                .iter()
                .map(|(c, h)| (c.to_string(), ReferenceBox::on_ground(*h, ground_z)))
                .collect(),
        )
    }

    pub fn get(&self, category: &Category) -> Option<&ReferenceBox> {
        self.0.get(category.as_str())
    }

    pub fn insert(&mut self, category: &Category, reference: ReferenceBox) {
        self.0.insert(category.to_string(), reference);
    }
}

impl Default for ReferenceTable {
    fn default() -> Self {
        Self::with_ground(crate::bev::GridConfig::default().ground_z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    pub mode: HeightMode,
    pub weights: RegressionWeights,
    pub n_bins: usize,
    pub references: ReferenceTable,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            mode: HeightMode::Ratio,
            weights: RegressionWeights::default(),
            n_bins: DEFAULT_YAW_BINS,
            references: ReferenceTable::default(),
        }
    }
}

/// Every regression target for one box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxTargets {
    pub deltas: TargetDeltas,
    pub yaw: YawEncoding,
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        check_bins(self.n_bins).map_err(|e| Error::Config(e.to_string()))?;
        for (k, r) in &self.references.0 {
            if !(r.h_ref > 0.0) || !r.z_ref.is_finite() {
                return Err(Error::Config(format!("reference box for {k}: {r:?}")));
            }
        }
        Ok(())
    }

    pub fn reference(&self, category: &Category) -> Result<&ReferenceBox> {
        self.references
            .get(category)
            .ok_or_else(|| Error::InvalidArgument(format!("no reference box for {category}")))
    }

    /// Encodes a box against a proposal. The planar fields must share the
    /// proposal's units; height and elevation are metric.
    pub fn encode(
        &self,
        planar: &RotatedBox2D,
        h: f64,
        z: f64,
        category: &Category,
        proposal: &AabbBox2D,
    ) -> Result<BoxTargets> {
        let [dx, dy, dl, dw] = encode_rotated_dims(proposal, planar, &self.weights);
        let (dh, dz) = encode_height_z(h, z, self.reference(category)?, &self.weights, self.mode)?;
        Ok(BoxTargets {
            deltas: TargetDeltas {
                dx,
                dy,
                dl,
                dw,
                dh,
                dz,
            },
            yaw: encode_yaw(planar.yaw, self.n_bins)?,
        })
    }

    /// Inverse of [`CodecConfig::encode`]: returns the planar box and
    /// `(h, z)`.
    pub fn decode(
        &self,
        targets: &BoxTargets,
        category: &Category,
        proposal: &AabbBox2D,
    ) -> Result<(RotatedBox2D, f64, f64)> {
        let d = &targets.deltas;
        let [x, y, l, w] = decode_rotated_dims(proposal, &[d.dx, d.dy, d.dl, d.dw], &self.weights);
        let yaw = decode_yaw(&targets.yaw, self.n_bins)?;
        let (h, z) = decode_height_z(d.dh, d.dz, self.reference(category)?, &self.weights, self.mode);
        Ok((RotatedBox2D::new(x, y, l, w, yaw), h, z))
    }
}
