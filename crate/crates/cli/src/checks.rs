//! Warp diagnostics: identity warp, plane homography and round trip.

use std::fmt::Write;

use gsd_core::geometry::{render_depth, CameraIntrinsics, CameraPose, DepthMap, PointCloud};
use gsd_core::scenes::PLANE_HALF_EXTENT;
use gsd_core::warping::{compute_warp, occlusion_mask};
use nalgebra::{Vector2, Vector3};

use crate::CliError;

pub const IDENTITY_TOLERANCE_PX: f64 = 1e-6;
pub const HOMOGRAPHY_TOLERANCE_PX: f64 = 1e-4;
pub const ROUND_TRIP_TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpCheck {
    pub name: &'static str,
    pub pixels: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub tolerance: f64,
}

impl WarpCheck {
    fn from_errors(name: &'static str, errors: &[f64], tolerance: f64) -> Self {
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        let mean_error = if errors.is_empty() {
            0.0
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        };
        Self {
            name,
            pixels: errors.len(),
            max_error,
            mean_error,
            tolerance,
        }
    }

    /// Passes when some pixels were checked and all were within tolerance.
    pub fn pass(&self) -> bool {
        self.pixels > 0 && self.max_error < self.tolerance
    }
}

/// Warp view `pose` onto itself using the rendered depth of `cloud`.
pub fn identity_check(
    cloud: &PointCloud,
    k: &CameraIntrinsics,
    pose: &CameraPose,
    splat_radius: f64,
) -> Result<WarpCheck, CliError> {
    let depth = render_depth(cloud, k, pose, splat_radius)?;
    let warp = compute_warp(&depth, pose, pose, k)?;
    let errors: Vec<f64> = (0..k.pixel_count())
        .filter_map(|idx| warp.target(idx).map(|t| (t - k.pixel_center(idx)).norm()))
        .collect();
    Ok(WarpCheck::from_errors("identity", &errors, IDENTITY_TOLERANCE_PX))
}

/// Exact depth of the plane `x = 0`, limited to the plane scene's extent.
pub fn plane_depth(k: &CameraIntrinsics, pose: &CameraPose) -> DepthMap {
    let mut depth = DepthMap::empty(k.width, k.height);
    let eye = pose.center();
    for idx in 0..k.pixel_count() {
        let ray_cam = k.backproject(k.pixel_center(idx), 1.0);
        let dir = pose.to_world(&ray_cam) - eye;
        if dir.x.abs() < 1e-12 {
            continue;
        }
        // ray_cam has unit depth, so the ray parameter is the depth
        let z = -eye.x / dir.x;
        let hit = eye + dir * z;
        if z > 0.0 && hit.y.abs() <= PLANE_HALF_EXTENT && hit.z.abs() <= PLANE_HALF_EXTENT {
            depth.set(idx, z);
        }
    }
    depth
}

/// Warp the plane `x = 0` from `pose_i` to `pose_j` and compare with the
/// homography induced by that plane.
pub fn homography_check(
    k: &CameraIntrinsics,
    pose_i: &CameraPose,
    pose_j: &CameraPose,
) -> Result<WarpCheck, CliError> {
    let depth = plane_depth(k, pose_i);
    let warp = compute_warp(&depth, pose_i, pose_j, k)?;
    let n = pose_i.rotation() * Vector3::new(1.0, 0.0, 0.0);
    let d = n.dot(pose_i.translation());
    let (r, t) = pose_i.relative_to(pose_j);
    let km = k.matrix();
    let kinv = km
        .try_inverse()
        .ok_or_else(|| CliError::Config("camera matrix is singular".into()))?;
    let h = km * (r + t * n.transpose() / d) * kinv;
    let errors: Vec<f64> = (0..k.pixel_count())
        .filter_map(|idx| {
            let target = warp.target(idx)?;
            let p = k.pixel_center(idx);
            let q = h * Vector3::new(p.x, p.y, 1.0);
            Some((target - Vector2::new(q.x / q.z, q.y / q.z)).norm())
        })
        .collect();
    Ok(WarpCheck::from_errors("plane_homography", &errors, HOMOGRAPHY_TOLERANCE_PX))
}

/// Warp `i -> j`, read the reverse warp at the nearest pixel of the target
/// and measure the distance back to the starting pixel, over pixels whose
/// masks are 1 in both directions.
pub fn round_trip_check(
    cloud: &PointCloud,
    k: &CameraIntrinsics,
    pose_i: &CameraPose,
    pose_j: &CameraPose,
    splat_radius: f64,
    delta: f64,
) -> Result<WarpCheck, CliError> {
    let di = render_depth(cloud, k, pose_i, splat_radius)?;
    let dj = render_depth(cloud, k, pose_j, splat_radius)?;
    let wij = compute_warp(&di, pose_i, pose_j, k)?;
    let wji = compute_warp(&dj, pose_j, pose_i, k)?;
    let mij = occlusion_mask(&wij, &dj, delta)?;
    let mji = occlusion_mask(&wji, &di, delta)?;
    let mut errors = Vec::new();
    for idx in 0..k.pixel_count() {
        if mij.weight(idx) == 0.0 {
            continue;
        }
        let Some(q) = wij.nearest_source_index(idx) else {
            continue;
        };
        if mji.weight(q) == 0.0 {
            continue;
        }
        if let Some(back) = wji.target(q) {
            errors.push((back - k.pixel_center(idx)).norm());
        }
    }
    Ok(WarpCheck::from_errors("round_trip", &errors, ROUND_TRIP_TOLERANCE_PX))
}

pub fn checks_csv(checks: &[WarpCheck]) -> String {
    let mut out = String::from("check,pixels,max_error_px,mean_error_px,tolerance_px,pass\n");
    for c in checks {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{}",
            c.name,
            c.pixels,
            c.max_error,
            c.mean_error,
            c.tolerance,
            c.pass()
        );
    }
    out
}
