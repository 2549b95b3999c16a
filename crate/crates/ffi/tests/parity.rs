use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;

use bevdet_core::bev::{encode, GridConfig};
use bevdet_core::codec::{CodecConfig, ReferenceTable};
use bevdet_core::kitti::{load_point_cloud, write_point_cloud};
use bevdet_core::post::{rotated_nms_indices, Detection};
use bevdet_core::{AabbBox2D, Box3D, Category, Point, PointCloud, RotatedBox2D};
use bevdet_ffi::*;
use proptest::prelude::*;

fn small_grid() -> BevdetGridParams {
    BevdetGridParams {
        cell_size: 0.5,
        forward_range: 20.0,
        lateral_range: 10.0,
        max_height_above_ground: 3.0,
        ground_z: -1.73,
        density_saturation: 64,
    }
}

fn encode_ffi(points: &[f32], grid: &BevdetGridParams) -> Result<Vec<f32>, BevdetStatus> {
    let (mut rows, mut cols) = (0usize, 0usize);
    let st = unsafe { bevdet_grid_dims(grid, &mut rows, &mut cols) };
    assert_eq!(st, BevdetStatus::Ok);
    let mut out = vec![f32::NAN; 3 * rows * cols];
    let st = unsafe {
        bevdet_bev_encode_array(points.as_ptr(), points.len() / 4, grid, out.as_mut_ptr(), out.len())
    };
    if st == BevdetStatus::Ok {
        Ok(out)
    } else {
        Err(st)
    }
}

fn flatten(img: &bevdet_core::bev::BevImage) -> Vec<f32> {
    img.channels().concat()
}

fn last_error() -> String {
    let p = bevdet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn fixture_points() -> Vec<f32> {
    vec![
        5.0, 0.0, -1.0, 0.5, //
        5.1, 0.1, 0.2, 0.25, //
        12.3, -4.4, -1.6, 1.0, //
        19.9, 9.9, 2.5, 0.0, //
        -1.0, 0.0, 0.0, 0.5, // behind the sensor
        3.3, 3.3, -1.2, 0.75,
    ]
}

#[test]
fn bev_encode_matches_primary_path_from_disk() {
    let grid = small_grid();
    let raw = fixture_points();
    let cloud = PointCloud::new(raw.chunks(4).map(|p| Point::new(p[0], p[1], p[2], p[3])).collect());
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ffi_fixture.bin");
    write_point_cloud(&cloud, &path).unwrap();
    let golden = flatten(&encode(&load_point_cloud(&path).unwrap(), &GridConfig::from(&grid)));

    let out = encode_ffi(&raw, &grid).unwrap();
    assert_eq!(out.len(), golden.len());
    assert!(out.iter().zip(&golden).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(bevdet_last_error().is_null());
}

#[test]
fn single_point_and_empty_cloud() {
    let grid = small_grid();
    let empty = encode_ffi(&[], &grid).unwrap();
    assert!(empty.iter().all(|v| *v == 0.0));

    let out = encode_ffi(&[5.0, 0.0, -1.0, 0.5], &grid).unwrap();
    let cfg = GridConfig::from(&grid);
    let (r, c) = cfg.cell_index(5.0, 0.0).unwrap();
    let plane = cfg.rows() * cfg.cols();
    let i = r * cfg.cols() + c;
    assert_eq!(out[i], cfg.height_value(-1.0));
    assert_eq!(out[plane + i], 0.5);
    assert_eq!(out[2 * plane + i], cfg.density(1));
    assert_eq!(out.iter().filter(|v| **v != 0.0).count(), 3);
}

#[test]
fn reflectance_is_clamped_like_the_loader() {
    let grid = small_grid();
    let a = encode_ffi(&[5.0, 0.0, -1.0, 7.0, 6.0, 0.0, -1.0, -2.0], &grid).unwrap();
    let b = encode_ffi(&[5.0, 0.0, -1.0, 1.0, 6.0, 0.0, -1.0, 0.0], &grid).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bev_encode_rejects_bad_input() {
    let grid = small_grid();
    assert_eq!(encode_ffi(&[1.0, f32::NAN, 0.0, 0.5], &grid), Err(BevdetStatus::NonFinite));
    assert!(last_error().contains("point 0"));
    assert_eq!(encode_ffi(&[1.0, 0.0, 0.0, f32::NAN], &grid), Err(BevdetStatus::NonFinite));

    let mut out = vec![0f32; 5];
    let st = unsafe { bevdet_bev_encode_array(std::ptr::null(), 0, &grid, out.as_mut_ptr(), out.len()) };
    assert_eq!(st, BevdetStatus::ShapeMismatch);
    let mut out = vec![0f32; 3 * 40 * 40];
    let st = unsafe { bevdet_bev_encode_array(std::ptr::null(), 3, &grid, out.as_mut_ptr(), out.len()) };
    assert_eq!(st, BevdetStatus::NullPointer);
    let bad = BevdetGridParams {
        cell_size: 0.0,
        ..grid
    };
    let st = unsafe { bevdet_bev_encode_array(std::ptr::null(), 0, &bad, out.as_mut_ptr(), out.len()) };
    assert_eq!(st, BevdetStatus::InvalidArgument);
}

#[test]
fn default_grid_dims() {
    let g = bevdet_grid_default();
    let (mut rows, mut cols) = (0, 0);
    assert_eq!(unsafe { bevdet_grid_dims(&g, &mut rows, &mut cols) }, BevdetStatus::Ok);
    assert_eq!((rows, cols), (1400, 700));
}

struct Codec(*mut BevdetCodec);

impl Drop for Codec {
    fn drop(&mut self) {
        unsafe { bevdet_codec_free(self.0) }
    }
}

fn codec(mode: BevdetHeightMode) -> Codec {
    let c = bevdet_codec_new(12, mode);
    assert!(!c.is_null());
    for (id, h) in [(0, 1.53), (1, 1.76), (2, 1.74)] {
        let st = unsafe { bevdet_codec_register_reference(c, id, h, -1.73 + h / 2.0) };
        assert_eq!(st, BevdetStatus::Ok);
    }
    Codec(c)
}

fn core_codec(mode: bevdet_core::codec::HeightMode) -> CodecConfig {
    CodecConfig {
        mode,
        references: ReferenceTable::with_ground(-1.73),
        ..CodecConfig::default()
    }
}

const BOXES: [[f64; 7]; 3] = [
    [12.3, -4.1, -0.9, 3.9, 1.6, 1.5, 0.7],
    [8.0, 3.0, -0.85, 0.8, 0.6, 1.8, -2.9],
    [30.0, 10.0, -0.9, 1.7, 0.6, 1.7, 3.1],
];
const PROPOSALS: [[f64; 4]; 3] = [[12.0, -4.0, 4.0, 2.0], [8.2, 2.9, 1.0, 1.0], [29.5, 10.5, 2.0, 1.0]];
const IDS: [i32; 3] = [0, 1, 2];

fn encode_array(c: &Codec, boxes: &[[f64; 7]], props: &[[f64; 4]], ids: &[i32]) -> Vec<f64> {
    let mut out = vec![0.0; 8 * boxes.len()];
    let st = unsafe {
        bevdet_encode_targets_array(
            c.0,
            boxes.as_flattened().as_ptr(),
            props.as_flattened().as_ptr(),
            ids.as_ptr(),
            boxes.len(),
            out.as_mut_ptr(),
        )
    };
    assert_eq!(st, BevdetStatus::Ok);
    out
}

fn decode_array(c: &Codec, targets: &[f64], props: &[[f64; 4]], ids: &[i32]) -> Vec<f64> {
    let mut out = vec![0.0; 7 * props.len()];
    let st = unsafe {
        bevdet_decode_targets_array(
            c.0,
            targets.as_ptr(),
            props.as_flattened().as_ptr(),
            ids.as_ptr(),
            props.len(),
            out.as_mut_ptr(),
        )
    };
    assert_eq!(st, BevdetStatus::Ok);
    out
}

#[test]
fn targets_match_scalar_path_bit_exactly() {
    use bevdet_core::codec::HeightMode;
    for (fm, cm) in [
        (BevdetHeightMode::Ratio, HeightMode::Ratio),
        (BevdetHeightMode::Literal, HeightMode::Literal),
    ] {
        let c = codec(fm);
        let core = core_codec(cm);
        assert_eq!(unsafe { &*c.0 }.config(), &core);
        let targets = encode_array(&c, &BOXES, &PROPOSALS, &IDS);
        for i in 0..3 {
            let b = BOXES[i];
            let p = PROPOSALS[i];
            let proposal = AabbBox2D::new(p[0], p[1], p[2], p[3]);
            let cat = category_for_id(IDS[i]);
            let t = core
                .encode(&RotatedBox2D::new(b[0], b[1], b[3], b[4], b[6]), b[5], b[2], &cat, &proposal)
                .unwrap();
            let d = t.deltas;
            let want = [d.dx, d.dy, d.dl, d.dw, d.dh, d.dz, t.yaw.bin as f64, t.yaw.residual];
            assert_eq!(&targets[8 * i..8 * i + 8], &want);

            // Batch of one equals the same row of the batch.
            let one = encode_array(&c, &BOXES[i..=i], &PROPOSALS[i..=i], &IDS[i..=i]);
            assert_eq!(one, want);

            let (planar, h, z) = core.decode(&t, &cat, &proposal).unwrap();
            let boxes = decode_array(&c, &want, &PROPOSALS[i..=i], &IDS[i..=i]);
            assert_eq!(boxes, [planar.x, planar.y, z, planar.l, planar.w, h, planar.yaw]);
        }
    }
}

#[test]
fn round_trip_and_zero_deltas() {
    let c = codec(BevdetHeightMode::Ratio);
    let targets = encode_array(&c, &BOXES, &PROPOSALS, &IDS);
    let back = decode_array(&c, &targets, &PROPOSALS, &IDS);
    for (row, b) in back.chunks(7).zip(BOXES) {
        for (u, v) in row.iter().zip(b) {
            assert!((u - v).abs() < 1e-12, "{row:?} vs {b:?}");
        }
    }

    let zero = vec![0.0; 8];
    let out = decode_array(&c, &zero, &PROPOSALS[..1], &[0]);
    let p = PROPOSALS[0];
    assert_eq!(out, [p[0], p[1], -1.73 + 1.53 / 2.0, p[2], p[3], 1.53, 0.0]);
}

#[test]
fn codec_errors() {
    assert!(bevdet_codec_new(10, BevdetHeightMode::Ratio).is_null());
    assert!(last_error().contains("multiple of 4"));

    let c = codec(BevdetHeightMode::Ratio);
    let st = unsafe { bevdet_codec_register_reference(c.0, 5, -1.0, 0.0) };
    assert_eq!(st, BevdetStatus::InvalidArgument);
    let st = unsafe { bevdet_codec_register_reference(c.0, 5, f64::NAN, 0.0) };
    assert_eq!(st, BevdetStatus::NonFinite);
    assert_eq!(unsafe { bevdet_codec_set_weights(c.0, 1.0, 0.0, 1.0, 1.0) }, BevdetStatus::InvalidArgument);

    let mut out = vec![0.0; 8];
    let unregistered = [7];
    let st = unsafe {
        bevdet_encode_targets_array(
            c.0,
            BOXES[0].as_ptr(),
            PROPOSALS[0].as_ptr(),
            unregistered.as_ptr(),
            1,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(st, BevdetStatus::InvalidArgument);
    assert!(last_error().contains("row 0"));

    let mut bad = BOXES[0];
    bad[6] = f64::INFINITY;
    let st = unsafe {
        bevdet_encode_targets_array(c.0, bad.as_ptr(), PROPOSALS[0].as_ptr(), IDS.as_ptr(), 1, out.as_mut_ptr())
    };
    assert_eq!(st, BevdetStatus::NonFinite);

    let mut t = vec![0.0; 8];
    t[6] = 1.5;
    let mut boxes = vec![0.0; 7];
    let st = unsafe {
        bevdet_decode_targets_array(c.0, t.as_ptr(), PROPOSALS[0].as_ptr(), IDS.as_ptr(), 1, boxes.as_mut_ptr())
    };
    assert_eq!(st, BevdetStatus::InvalidArgument);
    t[6] = 12.0;
    let st = unsafe {
        bevdet_decode_targets_array(c.0, t.as_ptr(), PROPOSALS[0].as_ptr(), IDS.as_ptr(), 1, boxes.as_mut_ptr())
    };
    assert_eq!(st, BevdetStatus::InvalidArgument);
}

#[test]
fn weights_are_applied() {
    let c = codec(BevdetHeightMode::Ratio);
    let base = encode_array(&c, &BOXES[..1], &PROPOSALS[..1], &IDS[..1]);
    assert_eq!(unsafe { bevdet_codec_set_weights(c.0, 2.0, 3.0, 4.0, 5.0) }, BevdetStatus::Ok);
    let scaled = encode_array(&c, &BOXES[..1], &PROPOSALS[..1], &IDS[..1]);
    for (k, w) in [2.0, 2.0, 3.0, 3.0, 4.0, 5.0].iter().enumerate() {
        assert_eq!(scaled[k], w * base[k]);
    }
    assert_eq!(scaled[6..], base[6..]);
}

fn nms_ffi(dets: &[[f64; 9]], thr: f64) -> Result<Vec<usize>, BevdetStatus> {
    let mut keep = vec![usize::MAX; dets.len()];
    let mut count = 0;
    let st = unsafe {
        bevdet_rotated_nms_array(dets.as_flattened().as_ptr(), dets.len(), thr, keep.as_mut_ptr(), &mut count)
    };
    if st != BevdetStatus::Ok {
        return Err(st);
    }
    keep.truncate(count);
    Ok(keep)
}

fn to_core(dets: &[[f64; 9]]) -> Vec<Detection> {
    dets.iter()
        .map(|r| Detection {
            bbox: Box3D::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6]),
            category: category_for_id(r[7] as i32),
            score: r[8],
        })
        .collect()
}

#[test]
fn nms_examples() {
    let row = |x: f64, y: f64, yaw: f64, cat: f64, s: f64| [x, y, -1.0, 4.0, 2.0, 1.5, yaw, cat, s];
    assert_eq!(nms_ffi(&[row(10.0, 0.0, 0.0, 0.0, 0.5)], 0.3).unwrap(), vec![0]);
    let dets = [
        row(10.0 + 4.0 / 3.0, 0.0, 0.0, 0.0, 0.8),
        row(20.0, 5.0, 0.0, 0.0, 0.7),
        row(10.0, 0.0, 0.0, 0.0, 0.9),
    ];
    assert_eq!(nms_ffi(&dets, 0.3).unwrap(), vec![2, 1]);
    let dets = [row(10.0, 0.0, 0.3, 0.0, 0.9), row(10.0, 0.0, 0.3, 2.0, 0.8)];
    assert_eq!(nms_ffi(&dets, 0.3).unwrap(), vec![0, 1]);
    assert_eq!(nms_ffi(&[], 0.3).unwrap(), Vec::<usize>::new());
}

#[test]
fn nms_rejects_bad_rows() {
    let mut r = [10.0, 0.0, -1.0, 4.0, 2.0, 1.5, 0.0, 0.0, f64::NAN];
    assert_eq!(nms_ffi(&[r], 0.3), Err(BevdetStatus::NonFinite));
    r[8] = 0.5;
    r[7] = 0.5;
    assert_eq!(nms_ffi(&[r], 0.3), Err(BevdetStatus::InvalidArgument));
    let st = unsafe { bevdet_rotated_nms_array(r.as_ptr(), 1, 0.3, std::ptr::null_mut(), std::ptr::null_mut()) };
    assert_eq!(st, BevdetStatus::NullPointer);
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(bevdet_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));

    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/bevdet.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "bevdet_last_error",
        "bevdet_grid_dims",
        "bevdet_bev_encode_array",
        "bevdet_codec_new",
        "bevdet_codec_free",
        "bevdet_codec_register_reference",
        "bevdet_encode_targets_array",
        "bevdet_decode_targets_array",
        "bevdet_rotated_nms_array",
        "BEVDET_STATUS_SHAPE_MISMATCH",
        "typedef struct BevdetCodec BevdetCodec",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }

    // The header must be valid C when a compiler is around.
    if let Ok(st) = Command::new("cc")
        .args(["-std=c99", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    {
        assert!(st.success());
    }
}

fn det_rows() -> impl Strategy<Value = Vec<[f64; 9]>> {
    let row = (
        0.0..30.0f64,
        -10.0..10.0f64,
        0.5..5.0f64,
        0.5..3.0f64,
        -3.1..3.1f64,
        0..3i32,
        0..5u8,
    )
        .prop_map(|(x, y, l, w, yaw, cat, s)| [x, y, -1.0, l, w, 1.5, yaw, cat as f64, s as f64 / 4.0]);
    proptest::collection::vec(row, 0..25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nms_matches_core(dets in det_rows(), thr in 0.0..1.0f64) {
        let got = nms_ffi(&dets, thr).unwrap();
        prop_assert_eq!(got.clone(), rotated_nms_indices(&to_core(&dets), thr));
        prop_assert_eq!(nms_ffi(&dets, thr).unwrap(), got);
    }

    #[test]
    fn encode_is_pure_and_permutation_invariant(
        pts in proptest::collection::vec((-2.0..22.0f32, -11.0..11.0f32, -3.0..2.0f32, 0.0..1.0f32), 0..300),
        seed in any::<u64>(),
    ) {
        let grid = small_grid();
        let flat: Vec<f32> = pts.iter().flat_map(|p| [p.0, p.1, p.2, p.3]).collect();
        let a = encode_ffi(&flat, &grid).unwrap();
        let b = encode_ffi(&flat, &grid).unwrap();
        prop_assert_eq!(&a, &b);

        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<f32> = order.iter().flat_map(|&i| flat[4 * i..4 * i + 4].to_vec()).collect();
        let c = encode_ffi(&shuffled, &grid).unwrap();
        prop_assert!(a.iter().zip(&c).all(|(u, v)| u.to_bits() == v.to_bits()));

        let cloud = PointCloud::new(pts.iter().map(|p| Point::new(p.0, p.1, p.2, p.3)).collect());
        let golden = flatten(&encode(&cloud, &GridConfig::from(&grid)));
        prop_assert!(a.iter().zip(&golden).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn category_ids() {
    assert_eq!(category_for_id(0), Category::Car);
    assert_eq!(category_for_id(2), Category::Cyclist);
    assert_eq!(category_for_id(9).as_str(), "class9");
}
