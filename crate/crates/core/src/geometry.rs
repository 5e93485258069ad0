//! Pinhole cameras, look-at poses on a hemisphere, point projection and
//! point-splat depth rendering.
//!
//! Conventions: camera space is x right, y down, z forward. A pixel with
//! integer index `(ix, iy)` covers the image-plane square
//! `[ix, ix + 1) x [iy, iy + 1)`, so its center sits at `(ix + 0.5, iy + 0.5)`
//! and a continuous image coordinate maps to the pixel that contains it.

use kiddo::{KdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};

/// World up direction used by every look-at pose.
pub const WORLD_UP: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn from_fov_y(width: usize, height: usize, fov_y_deg: f64) -> Result<Self> {
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(invalid("fov_y_deg", "must lie in (0, 180)"));
        }
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return Err(invalid("fx", "must be positive and finite"));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(invalid("fy", "must be positive and finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("width/height", "image must be non-empty"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(invalid("cx", "must lie in [0, width)"));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(invalid("cy", "must lie in [0, height)"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, pixel: Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.x < self.width as f64
            && pixel.y >= 0.0
            && pixel.y < self.height as f64
    }

    /// Linear index of the pixel containing `pixel`, if it is inside the image.
    pub fn pixel_index(&self, pixel: Vector2<f64>) -> Option<usize> {
        if !self.contains(pixel) {
            return None;
        }
        let ix = (pixel.x.floor() as usize).min(self.width - 1);
        let iy = (pixel.y.floor() as usize).min(self.height - 1);
        Some(iy * self.width + ix)
    }

    pub fn pixel_center(&self, idx: usize) -> Vector2<f64> {
        let x = idx % self.width;
        let y = idx / self.width;
        Vector2::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    /// Camera-space point at depth `depth` along the ray through `pixel`.
    pub fn backproject(&self, pixel: Vector2<f64>, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx * depth,
            (pixel.y - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Image-plane coordinates of a camera-space point with `z > 0`.
    pub fn to_pixel(&self, cam: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * cam.x / cam.z + self.cx,
            self.fy * cam.y / cam.z + self.cy,
        )
    }

    /// Smallest per-pixel solid angle over the image (attained at a corner).
    pub fn min_pixel_solid_angle(&self) -> f64 {
        let corners = [
            (0.0, 0.0),
            (self.width as f64, 0.0),
            (0.0, self.height as f64),
            (self.width as f64, self.height as f64),
        ];
        corners
            .iter()
            .map(|&(u, v)| {
                let x = (u - self.cx) / self.fx;
                let y = (v - self.cy) / self.fy;
                let cos = 1.0 / (1.0 + x * x + y * y).sqrt();
                cos.powi(3) / (self.fx * self.fy)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// World-to-camera rigid transform: `x_cam = R * x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err < 1e-9) {
            return Err(invalid("rotation", format!("not orthonormal (error {err:e})")));
        }
        if rotation.determinant() < 0.0 {
            return Err(invalid("rotation", "determinant is negative"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(invalid("translation", "must be finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`, image "up" aligned with `up`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::DegeneratePose);
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(invalid("up", "parallel to the viewing direction"));
        }
        Ok(Self::from_axes(eye, right.normalize(), forward))
    }

    fn from_axes(eye: Vector3<f64>, right: Vector3<f64>, forward: Vector3<f64>) -> Self {
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    pub fn to_world(&self, cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (cam - self.translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// World-space direction of the optical (+z) axis.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    /// Transform taking camera-`self` coordinates to camera-`other` coordinates.
    pub fn relative_to(&self, other: &CameraPose) -> (Matrix3<f64>, Vector3<f64>) {
        let r = other.rotation * self.rotation.transpose();
        let t = other.translation - r * self.translation;
        (r, t)
    }

    /// Rotate the camera about its own optical axis by `angle` radians.
    pub fn rolled(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let roll = Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation: roll * self.rotation,
            translation: roll * self.translation,
        }
    }
}

/// Camera on the hemisphere of `radius` around `target`, looking at the
/// target with +Y up. Azimuth is measured in the XZ plane from +X towards +Z.
pub fn sample_hemisphere_pose(
    azimuth: f64,
    elevation: f64,
    radius: f64,
    target: Vector3<f64>,
) -> Result<CameraPose> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius", "must be positive and finite"));
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&elevation) {
        return Err(invalid("elevation", "must lie in [0, pi/2]"));
    }
    if !azimuth.is_finite() || !target.iter().all(|v| v.is_finite()) {
        return Err(invalid("azimuth/target", "must be finite"));
    }
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let offset = Vector3::new(ce * ca, se, ce * sa) * radius;
    let eye = target + offset;
    if offset.norm() < 1e-12 {
        return Err(Error::DegeneratePose);
    }
    let forward = (-offset).normalize();
    // forward x up, written out so the zenith stays well defined.
    let right = Vector3::new(sa, 0.0, -ca);
    Ok(CameraPose::from_axes(eye, right, forward))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

/// Pinhole projection; `None` when the point is behind the camera or falls
/// outside `[0, width) x [0, height)`.
pub fn project(
    point: &Vector3<f64>,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
) -> Option<Projection> {
    let cam = pose.to_camera(point);
    if cam.z <= 0.0 {
        return None;
    }
    let pixel = intrinsics.to_pixel(&cam);
    intrinsics.contains(pixel).then_some(Projection {
        pixel,
        depth: cam.z,
    })
}

/// World point seen at image coordinate `pixel` with camera-space depth `depth`.
pub fn unproject(
    pixel: Vector2<f64>,
    depth: f64,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
) -> Vector3<f64> {
    pose.to_world(&intrinsics.backproject(pixel, depth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(index) = positions
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinitePoint { index });
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }

    /// Center of the axis-aligned bounding box and the largest distance from it.
    pub fn bounding_sphere(&self) -> Result<(Vector3<f64>, f64)> {
        self.ensure_non_empty()?;
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let center = (lo + hi) * 0.5;
        let radius = self
            .positions
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0, f64::max);
        Ok((center, radius))
    }

    /// Median distance from each point to its nearest distinct neighbor.
    pub fn median_nearest_neighbor_distance(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(invalid("cloud", "need at least two points for spacing"));
        }
        let mut tree: KdTree<f64, 3> = KdTree::with_capacity(self.len());
        for (i, p) in self.positions.iter().enumerate() {
            tree.add(&[p.x, p.y, p.z], i as u64);
        }
        let mut dists: Vec<f64> = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                tree.nearest_n::<SquaredEuclidean>(&[p.x, p.y, p.z], 2)
                    .into_iter()
                    .find(|n| n.item != i as u64)
                    .map(|n| n.distance.sqrt())
                    .unwrap_or(0.0)
            })
            .collect();
        dists.sort_by(f64::total_cmp);
        Ok(dists[dists.len() / 2])
    }
}

/// Camera-space depth per pixel; uncovered pixels hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![f64::INFINITY; width * height],
        }
    }

    /// Depth map from raw values; non-finite or non-positive entries are invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(mismatch(width * height, values.len()));
        }
        let values = values
            .into_iter()
            .map(|d| if d.is_finite() && d > 0.0 { d } else { f64::INFINITY })
            .collect();
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, idx: usize) -> Option<f64> {
        let d = self.values[idx];
        d.is_finite().then_some(d)
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.values[idx].is_finite()
    }

    pub fn set(&mut self, idx: usize, depth: f64) {
        self.values[idx] = if depth.is_finite() && depth > 0.0 {
            depth
        } else {
            f64::INFINITY
        };
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> Vec<bool> {
        self.values.iter().map(|d| d.is_finite()).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| d.is_finite()).count()
    }

    pub fn check_matches(&self, intrinsics: &CameraIntrinsics) -> Result<()> {
        if self.width != intrinsics.width || self.height != intrinsics.height {
            return Err(mismatch(
                format!("{}x{}", intrinsics.width, intrinsics.height),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Integer pixel offsets inside a disc of `radius` pixels.
pub(crate) fn disc_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Visit every pixel in the splat disc of a projected point.
pub(crate) fn for_each_splat_pixel(
    intrinsics: &CameraIntrinsics,
    pixel: Vector2<f64>,
    offsets: &[(i64, i64)],
    mut f: impl FnMut(usize),
) {
    let ix = pixel.x.floor() as i64;
    let iy = pixel.y.floor() as i64;
    let (w, h) = (intrinsics.width as i64, intrinsics.height as i64);
    for &(dx, dy) in offsets {
        let (x, y) = (ix + dx, iy + dy);
        if x >= 0 && x < w && y >= 0 && y < h {
            f((y * w + x) as usize);
        }
    }
}

/// Z-buffer the cloud: each in-frustum point covers the disc of
/// `splat_radius` pixels around the pixel it projects into and the nearest
/// depth wins.
pub fn render_depth(
    cloud: &PointCloud,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    splat_radius: f64,
) -> Result<DepthMap> {
    cloud.ensure_non_empty()?;
    if !(splat_radius >= 0.0 && splat_radius.is_finite()) {
        return Err(invalid("splat_radius", "must be non-negative and finite"));
    }
    let offsets = disc_offsets(splat_radius);
    let mut depth = DepthMap::empty(intrinsics.width, intrinsics.height);
    for p in cloud.positions() {
        let Some(proj) = project(p, intrinsics, pose) else {
            continue;
        };
        for_each_splat_pixel(intrinsics, proj.pixel, &offsets, |idx| {
            if proj.depth < depth.values[idx] {
                depth.values[idx] = proj.depth;
            }
        });
    }
    Ok(depth)
}
