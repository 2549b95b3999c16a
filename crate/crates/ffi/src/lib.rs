//! C ABI over the bevdet encoder, target codecs and rotated NMS.
//!
//! All functions take flat row-major buffers plus a row count and write into
//! caller-owned output buffers. Every call returns a [`BevdetStatus`]; on
//! failure a message is available from [`bevdet_last_error`] on the same
//! thread. Non-finite inputs are rejected. No call keeps state besides the
//! explicit codec handle, so concurrent calls on distinct outputs are safe.
//!
//! Layouts:
//! * points: `N x 4` f32 `(x, y, z, reflectance)`
//! * boxes: `N x 7` f64 `(x, y, z, l, w, h, yaw)`
//! * proposals: `N x 4` f64 `(x, y, sx, sy)`
//! * targets: `N x 8` f64 `(dx, dy, dl, dw, dh, dz, bin, residual)`
//! * detections: `N x 9` f64 `(box, category id, score)`

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bevdet_core::bev::{encode, GridConfig};
use bevdet_core::codec::{BoxTargets, CodecConfig, HeightMode, ReferenceBox, ReferenceTable, TargetDeltas, YawEncoding};
use bevdet_core::post::{rotated_nms_indices, Detection};
use bevdet_core::{AabbBox2D, Box3D, Category, Point, PointCloud, RotatedBox2D};

pub const BEVDET_POINT_STRIDE: usize = 4;
pub const BEVDET_BOX_STRIDE: usize = 7;
pub const BEVDET_PROPOSAL_STRIDE: usize = 4;
pub const BEVDET_TARGET_STRIDE: usize = 8;
pub const BEVDET_DETECTION_STRIDE: usize = 9;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevdetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NonFinite = 4,
    Panic = 5,
}

/// Height target form passed to [`bevdet_codec_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevdetHeightMode {
    Ratio = 0,
    Literal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevdetGridParams {
    pub cell_size: f64,
    pub forward_range: f64,
    pub lateral_range: f64,
    pub max_height_above_ground: f64,
    pub ground_z: f64,
    pub density_saturation: u32,
}

impl From<&BevdetGridParams> for GridConfig {
    fn from(p: &BevdetGridParams) -> Self {
        GridConfig {
            cell_size: p.cell_size,
            forward_range: p.forward_range,
            lateral_range: p.lateral_range,
            max_height_above_ground: p.max_height_above_ground,
            ground_z: p.ground_z,
            density_saturation: p.density_saturation,
        }
    }
}

/// Opaque codec handle: yaw bins, height mode, weights and the mapping
/// from integer category ids to reference boxes.
pub struct BevdetCodec {
    config: CodecConfig,
}

impl BevdetCodec {
    pub fn config(&self) -> &CodecConfig {
        &self.config
    }
}

/// Category used for an integer id: 0 Car, 1 Pedestrian, 2 Cyclist, anything
/// else a custom class named after the id.
pub fn category_for_id(id: i32) -> Category {
    match id {
        0 => Category::Car,
        1 => Category::Pedestrian,
        2 => Category::Cyclist,
        n => Category::Other(format!("class{n}")),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(BevdetStatus, String);

type CallResult = std::result::Result<(), Failure>;

fn fail<T>(status: BevdetStatus, msg: impl Into<String>) -> std::result::Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_last_error(msg: Option<String>) {
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap());
    });
}

fn guard(f: impl FnOnce() -> CallResult) -> BevdetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            BevdetStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(Some(msg));
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(Some(format!("internal panic: {msg}")));
            BevdetStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, name: &str) -> std::result::Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return fail(BevdetStatus::NullPointer, format!("{name} is null"));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, name: &str) -> std::result::Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return fail(BevdetStatus::NullPointer, format!("{name} is null"));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

fn check_len(name: &str, got: usize, want: usize) -> CallResult {
    if got == want {
        Ok(())
    } else {
        fail(
            BevdetStatus::ShapeMismatch,
            format!("{name} has {got} elements, expected {want}"),
        )
    }
}

fn check_finite(name: &str, values: &[f64]) -> CallResult {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => fail(BevdetStatus::NonFinite, format!("{name}[{i}] is not finite")),
    }
}

fn core_error(e: bevdet_core::Error) -> Failure {
    Failure(BevdetStatus::InvalidArgument, e.to_string())
}

fn rows(n: usize, stride: usize, name: &str) -> std::result::Result<usize, Failure> {
    n.checked_mul(stride)
        .map_or_else(|| fail(BevdetStatus::ShapeMismatch, format!("{name}: row count overflows")), Ok)
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bevdet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, NUL-terminated and static.
#[no_mangle]
pub extern "C" fn bevdet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn bevdet_grid_default() -> BevdetGridParams {
    let g = GridConfig::default();
    BevdetGridParams {
        cell_size: g.cell_size,
        forward_range: g.forward_range,
        lateral_range: g.lateral_range,
        max_height_above_ground: g.max_height_above_ground,
        ground_z: g.ground_z,
        density_saturation: g.density_saturation,
    }
}

/// Raster size of a grid.
///
/// # Safety
/// `grid`, `rows` and `cols` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bevdet_grid_dims(
    grid: *const BevdetGridParams,
    rows: *mut usize,
    cols: *mut usize,
) -> BevdetStatus {
    guard(|| {
        if grid.is_null() || rows.is_null() || cols.is_null() {
            return fail(BevdetStatus::NullPointer, "null argument");
        }
        let g = GridConfig::from(&*grid);
        g.validate().map_err(core_error)?;
        *rows = g.rows();
        *cols = g.cols();
        Ok(())
    })
}

/// Rasterizes `n_points` points into `out`, laid out as
/// `[height, intensity, density] x rows x cols`. `out_len` must equal
/// `3 * rows * cols`. Reflectance is clamped to `[0, 1]`.
///
/// # Safety
/// `points` must hold `4 * n_points` floats and `out` `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn bevdet_bev_encode_array(
    points: *const f32,
    n_points: usize,
    grid: *const BevdetGridParams,
    out: *mut f32,
    out_len: usize,
) -> BevdetStatus {
    guard(|| {
        if grid.is_null() {
            return fail(BevdetStatus::NullPointer, "grid is null");
        }
        let g = GridConfig::from(&*grid);
        g.validate().map_err(core_error)?;
        let plane = g.rows() * g.cols();
        check_len("out", out_len, 3 * plane)?;
        let raw = input(points, rows(n_points, BEVDET_POINT_STRIDE, "points")?, "points")?;
        let out = output(out, out_len, "out")?;

        let mut cloud = Vec::with_capacity(n_points);
        for (i, p) in raw.chunks_exact(BEVDET_POINT_STRIDE).enumerate() {
            if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) || p[3].is_nan() {
                return fail(BevdetStatus::NonFinite, format!("point {i} is not finite"));
            }
            cloud.push(Point::new(p[0], p[1], p[2], p[3].clamp(0.0, 1.0)));
        }
        let img = encode(&PointCloud::new(cloud), &g);
        for (k, ch) in img.channels().into_iter().enumerate() {
            out[k * plane..(k + 1) * plane].copy_from_slice(ch);
        }
        Ok(())
    })
}

/// New codec with unit weights and an empty reference table; `n_bins` must
/// be a positive multiple of 4. Returns null on invalid arguments.
#[no_mangle]
pub extern "C" fn bevdet_codec_new(n_bins: usize, mode: BevdetHeightMode) -> *mut BevdetCodec {
    let mut handle = ptr::null_mut();
    guard(|| {
        let config = CodecConfig {
            mode: match mode {
                BevdetHeightMode::Ratio => HeightMode::Ratio,
                BevdetHeightMode::Literal => HeightMode::Literal,
            },
            n_bins,
            references: ReferenceTable(Default::default()),
            ..CodecConfig::default()
        };
        config.validate().map_err(core_error)?;
        handle = Box::into_raw(Box::new(BevdetCodec { config }));
        Ok(())
    });
    handle
}

/// # Safety
/// `codec` must come from [`bevdet_codec_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bevdet_codec_free(codec: *mut BevdetCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Maps `category_id` to a reference box of height `h_ref` and centroid
/// elevation `z_ref`, replacing any earlier registration.
///
/// # Safety
/// `codec` must be a live handle not used concurrently by another call.
#[no_mangle]
pub unsafe extern "C" fn bevdet_codec_register_reference(
    codec: *mut BevdetCodec,
    category_id: i32,
    h_ref: f64,
    z_ref: f64,
) -> BevdetStatus {
    guard(|| {
        if codec.is_null() {
            return fail(BevdetStatus::NullPointer, "codec is null");
        }
        check_finite("reference", &[h_ref, z_ref])?;
        if h_ref <= 0.0 {
            return fail(BevdetStatus::InvalidArgument, "h_ref must be positive");
        }
        (*codec)
            .config
            .references
            .insert(&category_for_id(category_id), ReferenceBox { h_ref, z_ref });
        Ok(())
    })
}

/// Sets the regression weights (all positive).
///
/// # Safety
/// `codec` must be a live handle not used concurrently by another call.
#[no_mangle]
pub unsafe extern "C" fn bevdet_codec_set_weights(
    codec: *mut BevdetCodec,
    w_xy: f64,
    w_lw: f64,
    w_h: f64,
    w_z: f64,
) -> BevdetStatus {
    guard(|| {
        if codec.is_null() {
            return fail(BevdetStatus::NullPointer, "codec is null");
        }
        let weights = bevdet_core::codec::RegressionWeights { w_z, w_h, w_xy, w_lw };
        weights.validate().map_err(core_error)?;
        (*codec).config.weights = weights;
        Ok(())
    })
}

/// Encodes `n` boxes against their proposals. Planar box fields share the
/// proposal units; `h`, `z` are metric. The bin index is written as a float.
///
/// # Safety
/// Buffers must hold `7n`, `4n`, `n` and `8n` elements respectively.
#[no_mangle]
pub unsafe extern "C" fn bevdet_encode_targets_array(
    codec: *const BevdetCodec,
    boxes: *const f64,
    proposals: *const f64,
    category_ids: *const i32,
    n: usize,
    out_targets: *mut f64,
) -> BevdetStatus {
    guard(|| {
        if codec.is_null() {
            return fail(BevdetStatus::NullPointer, "codec is null");
        }
        let cfg = &(*codec).config;
        let boxes = input(boxes, rows(n, BEVDET_BOX_STRIDE, "boxes")?, "boxes")?;
        let proposals = input(proposals, rows(n, BEVDET_PROPOSAL_STRIDE, "proposals")?, "proposals")?;
        let ids = input(category_ids, n, "category_ids")?;
        let out = output(out_targets, rows(n, BEVDET_TARGET_STRIDE, "targets")?, "out_targets")?;
        check_finite("boxes", boxes)?;
        check_finite("proposals", proposals)?;

        for i in 0..n {
            let b = &boxes[i * BEVDET_BOX_STRIDE..(i + 1) * BEVDET_BOX_STRIDE];
            let p = &proposals[i * BEVDET_PROPOSAL_STRIDE..(i + 1) * BEVDET_PROPOSAL_STRIDE];
            let planar = RotatedBox2D::new(b[0], b[1], b[3], b[4], b[6]);
            let proposal = AabbBox2D::new(p[0], p[1], p[2], p[3]);
            let t = cfg
                .encode(&planar, b[5], b[2], &category_for_id(ids[i]), &proposal)
                .map_err(|e| Failure(BevdetStatus::InvalidArgument, format!("row {i}: {e}")))?;
            let d = &t.deltas;
            out[i * BEVDET_TARGET_STRIDE..(i + 1) * BEVDET_TARGET_STRIDE].copy_from_slice(&[
                d.dx,
                d.dy,
                d.dl,
                d.dw,
                d.dh,
                d.dz,
                t.yaw.bin as f64,
                t.yaw.residual,
            ]);
        }
        Ok(())
    })
}

/// Inverse of [`bevdet_encode_targets_array`]. Bin indices must be integral.
///
/// # Safety
/// Buffers must hold `8n`, `4n`, `n` and `7n` elements respectively.
#[no_mangle]
pub unsafe extern "C" fn bevdet_decode_targets_array(
    codec: *const BevdetCodec,
    targets: *const f64,
    proposals: *const f64,
    category_ids: *const i32,
    n: usize,
    out_boxes: *mut f64,
) -> BevdetStatus {
    guard(|| {
        if codec.is_null() {
            return fail(BevdetStatus::NullPointer, "codec is null");
        }
        let cfg = &(*codec).config;
        let targets = input(targets, rows(n, BEVDET_TARGET_STRIDE, "targets")?, "targets")?;
        let proposals = input(proposals, rows(n, BEVDET_PROPOSAL_STRIDE, "proposals")?, "proposals")?;
        let ids = input(category_ids, n, "category_ids")?;
        let out = output(out_boxes, rows(n, BEVDET_BOX_STRIDE, "boxes")?, "out_boxes")?;
        check_finite("targets", targets)?;
        check_finite("proposals", proposals)?;

        for i in 0..n {
            let t = &targets[i * BEVDET_TARGET_STRIDE..(i + 1) * BEVDET_TARGET_STRIDE];
            let p = &proposals[i * BEVDET_PROPOSAL_STRIDE..(i + 1) * BEVDET_PROPOSAL_STRIDE];
            if t[6] < 0.0 || t[6].fract() != 0.0 {
                return fail(BevdetStatus::InvalidArgument, format!("row {i}: bad yaw bin {}", t[6]));
            }
            let targets = BoxTargets {
                deltas: TargetDeltas {
                    dx: t[0],
                    dy: t[1],
                    dl: t[2],
                    dw: t[3],
                    dh: t[4],
                    dz: t[5],
                },
                yaw: YawEncoding {
                    bin: t[6] as usize,
                    residual: t[7],
                },
            };
            let proposal = AabbBox2D::new(p[0], p[1], p[2], p[3]);
            let (planar, h, z) = cfg
                .decode(&targets, &category_for_id(ids[i]), &proposal)
                .map_err(|e| Failure(BevdetStatus::InvalidArgument, format!("row {i}: {e}")))?;
            out[i * BEVDET_BOX_STRIDE..(i + 1) * BEVDET_BOX_STRIDE]
                .copy_from_slice(&[planar.x, planar.y, z, planar.l, planar.w, h, planar.yaw]);
        }
        Ok(())
    })
}

/// Per-category greedy NMS on BEV footprints. Writes the kept row indices
/// in descending score order to `out_keep` (capacity `n`) and their count
/// to `out_count`.
///
/// # Safety
/// `dets` must hold `9n` doubles, `out_keep` `n` entries.
#[no_mangle]
pub unsafe extern "C" fn bevdet_rotated_nms_array(
    dets: *const f64,
    n: usize,
    iou_threshold: f64,
    out_keep: *mut usize,
    out_count: *mut usize,
) -> BevdetStatus {
    guard(|| {
        if out_count.is_null() {
            return fail(BevdetStatus::NullPointer, "out_count is null");
        }
        let raw = input(dets, rows(n, BEVDET_DETECTION_STRIDE, "dets")?, "dets")?;
        let keep = output(out_keep, n, "out_keep")?;
        check_finite("dets", raw)?;
        check_finite("iou_threshold", &[iou_threshold])?;

        let mut list = Vec::with_capacity(n);
        for (i, r) in raw.chunks_exact(BEVDET_DETECTION_STRIDE).enumerate() {
            if r[7].fract() != 0.0 || r[7].abs() > i32::MAX as f64 {
                return fail(BevdetStatus::InvalidArgument, format!("row {i}: bad category id {}", r[7]));
            }
            list.push(Detection {
                bbox: Box3D::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6]),
                category: category_for_id(r[7] as i32),
                score: r[8],
            });
        }
        let kept = rotated_nms_indices(&list, iou_threshold);
        keep[..kept.len()].copy_from_slice(&kept);
        *out_count = kept.len();
        Ok(())
    })
}
