//! Planar and volumetric box primitives and their overlap measures.
//!
//! Rotated overlaps are computed exactly by clipping one convex quadrilateral
//! against the half-planes of the other. Every IoU here is bit-for-bit
//! symmetric in its arguments: the pair is put into a canonical order before
//! clipping, since clipping `a` by `b` and `b` by `a` round differently.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Vertices closer than this to a clipping line are treated as lying on it.
pub const CLIP_EPS: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`. Values already in range are returned
/// unchanged so that round trips stay exact.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let a = theta.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned rectangle given by its center and full extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AabbBox2D {
    pub x: f64,
    pub y: f64,
    pub sx: f64,
    pub sy: f64,
}

impl AabbBox2D {
    pub const fn new(x: f64, y: f64, sx: f64, sy: f64) -> Self {
        Self { x, y, sx, sy }
    }

    pub fn area(&self) -> f64 {
        self.sx * self.sy
    }

    pub fn min(&self) -> Point2 {
        Point2::new(self.x - 0.5 * self.sx, self.y - 0.5 * self.sy)
    }

    pub fn max(&self) -> Point2 {
        Point2::new(self.x + 0.5 * self.sx, self.y + 0.5 * self.sy)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.sx, self.sy)
    }
}

/// Oriented rectangle. At `yaw = 0` the length `l` runs along +x and the
/// width `w` along +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedBox2D {
    pub x: f64,
    pub y: f64,
    pub l: f64,
    pub w: f64,
    pub yaw: f64,
}

impl RotatedBox2D {
    pub const fn new(x: f64, y: f64, l: f64, w: f64, yaw: f64) -> Self {
        Self { x, y, l, w, yaw }
    }

    pub fn area(&self) -> f64 {
        self.l * self.w
    }

    /// Counter-clockwise corners, starting at the rear-right corner.
    pub fn corners(&self) -> [Point2; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.l;
        let hw = 0.5 * self.w;
        [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
            .map(|(u, v)| Point2::new(self.x + c * u - s * v, self.y + s * u + c * v))
    }

    /// Smallest axis-aligned rectangle containing the box.
    pub fn aabb_hull(&self) -> AabbBox2D {
        let (s, c) = self.yaw.sin_cos();
        let sx = (self.l * c).abs() + (self.w * s).abs();
        let sy = (self.l * s).abs() + (self.w * c).abs();
        AabbBox2D::new(self.x, self.y, sx, sy)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.l && v.abs() <= 0.5 * self.w
    }

    fn key(&self) -> [f64; 5] {
        [self.x, self.y, self.l, self.w, self.yaw]
    }
}

/// Gravity-aligned cuboid in the LiDAR frame. `z` is the volumetric
/// centroid, `yaw` rotates about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl Box3D {
    #[allow(clippy::too_many_arguments)]
    pub const fn new(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            l,
            w,
            h,
            yaw,
        }
    }

    pub fn bev(&self) -> RotatedBox2D {
        RotatedBox2D::new(self.x, self.y, self.l, self.w, self.yaw)
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn bottom(&self) -> f64 {
        self.z - 0.5 * self.h
    }

    pub fn top(&self) -> f64 {
        self.z + 0.5 * self.h
    }

    /// Sizes positive and finite, yaw wrapped.
    pub fn is_valid(&self) -> bool {
        let finite = [self.x, self.y, self.z, self.l, self.w, self.h, self.yaw]
            .iter()
            .all(|v| v.is_finite());
        finite && self.l > 0.0 && self.w > 0.0 && self.h > 0.0 && self.yaw > -PI && self.yaw <= PI
    }

    /// The eight corners; bottom face first, each face counter-clockwise.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let footprint = self.bev().corners();
        let mut out = [[0.0; 3]; 8];
        for (i, p) in footprint.iter().enumerate() {
            out[i] = [p.x, p.y, self.bottom()];
            out[i + 4] = [p.x, p.y, self.top()];
        }
        out
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        twice += p.x * q.y - q.x * p.y;
    }
    0.5 * twice
}

fn clip_polygon(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    for (i, &e0) in clip.iter().enumerate() {
        if output.is_empty() {
            break;
        }
        let e1 = clip[(i + 1) % clip.len()];
        let ex = e1.x - e0.x;
        let ey = e1.y - e0.y;
        let len = ex.hypot(ey);
        if len == 0.0 {
            continue;
        }
        let dist = |p: &Point2| (ex * (p.y - e0.y) - ey * (p.x - e0.x)) / len;

        let input = std::mem::take(&mut output);
        let dists: Vec<f64> = input.iter().map(dist).collect();
        for j in 0..input.len() {
            let prev = (j + input.len() - 1) % input.len();
            let (dp, dc) = (dists[prev], dists[j]);
            let crosses = (dp > CLIP_EPS && dc < -CLIP_EPS) || (dp < -CLIP_EPS && dc > CLIP_EPS);
            if crosses {
                let t = dp / (dp - dc);
                let (p, c) = (input[prev], input[j]);
                output.push(Point2::new(p.x + t * (c.x - p.x), p.y + t * (c.y - p.y)));
            }
            if dc >= -CLIP_EPS {
                output.push(input[j]);
            }
        }
    }
    output
}

/// Area of the intersection of two convex counter-clockwise polygons.
pub fn convex_intersection_area(poly_a: &[Point2], poly_b: &[Point2]) -> f64 {
    let flat = |p: &[Point2]| p.iter().flat_map(|q| [q.x, q.y]).collect::<Vec<_>>();
    let (subject, clip) = if lex_cmp(&flat(poly_a), &flat(poly_b)).is_le() {
        (poly_a, poly_b)
    } else {
        (poly_b, poly_a)
    };
    polygon_area(&clip_polygon(subject, clip)).max(0.0)
}

/// Axis-aligned IoU.
pub fn aabb_iou(a: &AabbBox2D, b: &AabbBox2D) -> f64 {
    let (amin, amax) = (a.min(), a.max());
    let (bmin, bmax) = (b.min(), b.max());
    let ix = (amax.x.min(bmax.x) - amin.x.max(bmin.x)).max(0.0);
    let iy = (amax.y.min(bmax.y) - amin.y.max(bmin.y)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection area of two rotated rectangles.
pub fn rotated_intersection_area(a: &RotatedBox2D, b: &RotatedBox2D) -> f64 {
    // Quick reject on circumscribed circles.
    let r = 0.5 * (a.l.hypot(a.w) + b.l.hypot(b.w));
    if (a.x - b.x).hypot(a.y - b.y) > r {
        return 0.0;
    }
    let (first, second) = if lex_cmp(&a.key(), &b.key()).is_le() {
        (a, b)
    } else {
        (b, a)
    };
    polygon_area(&clip_polygon(&first.corners(), &second.corners())).max(0.0)
}

/// IoU of the bird's-eye-view footprints.
pub fn rotated_iou_bev(a: &RotatedBox2D, b: &RotatedBox2D) -> f64 {
    let inter = rotated_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0)
}

/// Volumetric IoU of two yaw-only cuboids.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let dz = (a.top().min(b.top()) - a.bottom().max(b.bottom())).max(0.0);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = rotated_intersection_area(&a.bev(), &b.bev()) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.volume() + b.volume() - inter)).clamp(0.0, 1.0)
}
