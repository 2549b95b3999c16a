//! Non-neural machinery of a bird's-eye-view LiDAR 3D object detector.
//!
//! The crate covers the whole pipeline around a learned two-stage detector:
//! KITTI I/O and frame transforms ([`kitti`]), rotated box overlap
//! ([`geometry`]), point-cloud rasterization ([`bev`]), regression target
//! codecs ([`codec`]), RPN anchors ([`anchors`]), rotated NMS and the
//! oracle detector ([`post`]), and AP evaluation ([`eval`]).

pub mod anchors;
pub mod bev;
pub mod codec;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod kitti;
pub mod post;

pub use error::{Error, Result};
pub use geometry::{wrap_angle, AabbBox2D, Box3D, Point2, RotatedBox2D};
pub use kitti::{Calibration, Category, ObjectLabel, Point, PointCloud};
