//! Downstream applications.

pub mod camera;
pub mod mh;
pub mod raycast;
pub mod scan;

pub use camera::{camera_score, CameraScore};
pub use mh::mh_repair;
pub use raycast::{cast_ray_probabilistic, free_path_cdf, OccupancyField, RayHit};
pub use scan::{simulate_scan, simulate_scan_2d, Camera};
