//! Built-in synthetic scenes and the default camera used by the tests and the CLI.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{CameraIntrinsics, PointCloud};

/// Half extent of the plane scenes in world units.
pub const PLANE_HALF_EXTENT: f64 = 1.5;
/// Distance of the occluder square from the back plane.
pub const OCCLUDER_OFFSET: f64 = 1.0;
/// Half extent of the occluder square.
pub const OCCLUDER_HALF_EXTENT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticScene {
    /// Square grid in the plane `x = 0`.
    Plane,
    /// Fibonacci lattice on the unit sphere.
    Sphere,
    /// The plane scene plus a smaller square at `x = OCCLUDER_OFFSET`.
    Occluder,
}

impl SyntheticScene {
    pub const ALL: [SyntheticScene; 3] = [Self::Plane, Self::Sphere, Self::Occluder];

    pub fn id(&self) -> &'static str {
        match self {
            Self::Plane => "plane",
            Self::Sphere => "sphere",
            Self::Occluder => "occluder",
        }
    }

    /// Build the scene with approximately `points` points.
    pub fn build(&self, points: usize) -> Result<PointCloud> {
        if points < 4 {
            return Err(invalid("points", "a synthetic scene needs at least 4 points"));
        }
        let positions = match self {
            Self::Sphere => fibonacci_sphere(points, 1.0, Vector3::zeros()),
            Self::Plane => {
                let side = (points as f64).sqrt().round() as usize;
                square_grid(0.0, PLANE_HALF_EXTENT, side)
            }
            Self::Occluder => {
                let back = (2.0 * PLANE_HALF_EXTENT).powi(2);
                let front = (2.0 * OCCLUDER_HALF_EXTENT).powi(2);
                let spacing = ((back + front) / points as f64).sqrt();
                let back_side = (2.0 * PLANE_HALF_EXTENT / spacing).round().max(2.0) as usize;
                let front_side = (2.0 * OCCLUDER_HALF_EXTENT / spacing).round().max(2.0) as usize;
                let mut p = square_grid(0.0, PLANE_HALF_EXTENT, back_side);
                p.extend(square_grid(OCCLUDER_OFFSET, OCCLUDER_HALF_EXTENT, front_side));
                p
            }
        };
        PointCloud::new(positions)
    }
}

impl fmt::Display for SyntheticScene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SyntheticScene {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|scene| scene.id() == s)
            .ok_or_else(|| invalid("scene", format!("unknown synthetic scene `{s}`")))
    }
}

/// `side x side` grid covering `[-half, half]^2` in the `(y, z)` plane at `x`.
fn square_grid(x: f64, half: f64, side: usize) -> Vec<Vector3<f64>> {
    let step = 2.0 * half / (side - 1) as f64;
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            out.push(Vector3::new(x, -half + i as f64 * step, -half + j as f64 * step));
        }
    }
    out
}

/// `n` nearly uniform points on a sphere.
pub fn fibonacci_sphere(n: usize, radius: f64, center: Vector3<f64>) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            center + Vector3::new(r * phi.cos(), y, r * phi.sin()) * radius
        })
        .collect()
}

/// 64x64 camera with a 60 degree vertical field of view.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::from_fov_y(64, 64, 60.0).expect("default intrinsics are valid")
}

/// Camera distance from the origin used with [`default_intrinsics`].
pub const DEFAULT_RADIUS: f64 = 2.5;
