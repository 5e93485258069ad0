//! 3D-consistent Gaussian noise maps.
//!
//! A noise value is attached to every point of the scene cloud, each point is
//! conditionally upsampled into `N` children whose normalized sum reproduces
//! the parent, and the children are projected into a view where the values
//! landing in one pixel are summed and divided by the square root of their
//! count. Children are marginally standard normal and each one lands in at
//! most one pixel, so every pixel of the result is an independent standard
//! normal while two views of the same field share values at corresponding
//! pixels. Pixels without foreground children take their value from a
//! background sphere that is noised the same way.
//!
//! Children of parent `k` are drawn from ChaCha stream `k` under a per-field
//! key, which makes the field a pure function of `(key, k)`. Rendering uses
//! this to expand only the parents that can reach the requested pixels.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::geometry::{project, render_depth, CameraIntrinsics, CameraPose, DepthMap, PointCloud};
use crate::raster::{ChannelMap, NoiseMap2D, PixelRect};

/// Expected number of background children in the sparsest pixel when the
/// sphere density is chosen automatically.
pub const BACKGROUND_CHILDREN_PER_PIXEL: f64 = 8.0;

/// Children farther than this many spread deviations from their parent are
/// ignored when culling background parents against a view (probability
/// below 1e-14 per child).
const CULL_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoisingParams {
    /// Children per parent point (`N`).
    pub upsample_n: usize,
    /// Std of child positions around their parent (world units); `None`
    /// means half the median nearest-neighbor distance of the cloud.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upsample_std: Option<f64>,
    /// Max distance between a child's depth and the rendered depth of its
    /// pixel; `None` means three times the upsample std.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_tolerance: Option<f64>,
    /// Background sphere radius as a multiple of the scene bounding radius.
    pub sphere_radius_factor: f64,
    /// Background sphere parent count; `None` picks a density that gives
    /// every pixel about [`BACKGROUND_CHILDREN_PER_PIXEL`] children.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sphere_points: Option<usize>,
    /// Splat radius (pixels) of the depth render used for foreground filtering.
    pub splat_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for NoisingParams {
    fn default() -> Self {
        Self {
            upsample_n: 9,
            upsample_std: None,
            depth_tolerance: None,
            sphere_radius_factor: 4.0,
            sphere_points: None,
            splat_radius: 1.0,
            seed: None,
        }
    }
}

fn golden_angle() -> f64 {
    PI * (3.0 - 5f64.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundSphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub points: usize,
    /// Std of child positions around each sphere point.
    pub spread: f64,
}

impl BackgroundSphere {
    /// Sphere with `points` parents and a spread of half the mean lattice spacing.
    pub fn new(center: Vector3<f64>, radius: f64, points: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("sphere_radius", "must be positive and finite"));
        }
        if points == 0 {
            return Err(invalid("sphere_points", "must be positive"));
        }
        let spacing = radius * (4.0 * PI / points as f64).sqrt();
        Ok(Self {
            center,
            radius,
            points,
            spread: 0.5 * spacing,
        })
    }

    /// Parent count giving about `per_pixel` children in the sparsest pixel of
    /// a camera inside the sphere that looks towards its center.
    pub fn auto_points(intrinsics: &CameraIntrinsics, upsample_n: usize, per_pixel: f64) -> usize {
        // Rays towards the far side travel at least one radius, so a pixel
        // footprint is at least (solid angle) * R^2; the count does not depend on R.
        let omega = intrinsics.min_pixel_solid_angle();
        (per_pixel * 4.0 * PI / (omega * upsample_n as f64)).ceil() as usize
    }

    /// Fibonacci-lattice position of parent `i`.
    pub fn position(&self, i: usize) -> Vector3<f64> {
        let (s, c) = (golden_angle() * i as f64).sin_cos();
        self.lattice_point(i, c, s)
    }

    fn lattice_point(&self, i: usize, cos_phi: f64, sin_phi: f64) -> Vector3<f64> {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / self.points as f64;
        let r = (1.0 - y * y).max(0.0).sqrt();
        self.center + Vector3::new(r * cos_phi, y, r * sin_phi) * self.radius
    }

    /// Camera-space depth of the far sphere surface along each pixel ray.
    pub fn depth_map(&self, intrinsics: &CameraIntrinsics, pose: &CameraPose) -> DepthMap {
        let mut depth = DepthMap::empty(intrinsics.width, intrinsics.height);
        let eye = pose.center();
        let oc = eye - self.center;
        for idx in 0..intrinsics.pixel_count() {
            let ray_cam = intrinsics.backproject(intrinsics.pixel_center(idx), 1.0);
            let dir = pose.rotation().transpose() * ray_cam;
            // |eye + s * dir - c| = R, solve for the larger root s (depth units)
            let a = dir.norm_squared();
            let b = 2.0 * oc.dot(&dir);
            let c = oc.norm_squared() - self.radius * self.radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                continue;
            }
            let s = (-b + disc.sqrt()) / (2.0 * a);
            if s > 0.0 {
                depth.set(idx, s);
            }
        }
        depth
    }
}

/// Noising parameters with every automatic default filled in for a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedNoising {
    pub upsample_n: usize,
    pub upsample_std: f64,
    pub depth_tolerance: f64,
    pub splat_radius: f64,
    pub sphere: BackgroundSphere,
}

impl NoisingParams {
    pub fn validate(&self) -> Result<()> {
        if self.upsample_n == 0 {
            return Err(invalid("upsample_n", "must be at least 1"));
        }
        if let Some(std) = self.upsample_std {
            if !(std >= 0.0 && std.is_finite()) {
                return Err(invalid("upsample_std", "must be non-negative and finite"));
            }
        }
        if let Some(tau) = self.depth_tolerance {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(invalid("depth_tolerance", "must be positive and finite"));
            }
        }
        if !(self.sphere_radius_factor > 1.0 && self.sphere_radius_factor.is_finite()) {
            return Err(invalid(
                "sphere_radius_factor",
                "must exceed 1 so the sphere encloses the scene",
            ));
        }
        if self.sphere_points == Some(0) {
            return Err(invalid("sphere_points", "must be positive"));
        }
        if !(self.splat_radius >= 0.0 && self.splat_radius.is_finite()) {
            return Err(invalid("splat_radius", "must be non-negative and finite"));
        }
        Ok(())
    }

    pub fn resolve(
        &self,
        cloud: &PointCloud,
        intrinsics: &CameraIntrinsics,
    ) -> Result<ResolvedNoising> {
        self.validate()?;
        let (center, scene_radius) = cloud.bounding_sphere()?;
        if !(scene_radius > 0.0) {
            return Err(invalid("cloud", "scene has zero extent"));
        }
        let half_spacing = || -> Result<f64> {
            Ok(0.5 * cloud.median_nearest_neighbor_distance()?)
        };
        let upsample_std = match self.upsample_std {
            Some(std) => std,
            None => half_spacing()?,
        };
        let depth_tolerance = match self.depth_tolerance {
            Some(tau) => tau,
            None if upsample_std > 0.0 => 3.0 * upsample_std,
            None => 3.0 * half_spacing()?,
        };
        if !(depth_tolerance > 0.0) {
            return Err(invalid("depth_tolerance", "resolved to zero"));
        }
        let points = self.sphere_points.unwrap_or_else(|| {
            BackgroundSphere::auto_points(intrinsics, self.upsample_n, BACKGROUND_CHILDREN_PER_PIXEL)
        });
        let sphere =
            BackgroundSphere::new(center, self.sphere_radius_factor * scene_radius, points)?;
        Ok(ResolvedNoising {
            upsample_n: self.upsample_n,
            upsample_std,
            depth_tolerance,
            splat_radius: self.splat_radius,
            sphere,
        })
    }
}

/// Per-point noise values on a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField3D {
    cloud: Arc<PointCloud>,
    channels: usize,
    values: Vec<f64>,
}

impl NoiseField3D {
    pub fn new(cloud: Arc<PointCloud>, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("channels", "must be positive"));
        }
        if values.len() != cloud.len() * channels {
            return Err(mismatch(cloud.len() * channels, values.len()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(invalid("values", "must be finite"));
        }
        Ok(Self {
            cloud,
            channels,
            values,
        })
    }

    pub fn cloud(&self) -> &Arc<PointCloud> {
        &self.cloud
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, point: usize) -> &[f64] {
        &self.values[point * self.channels..(point + 1) * self.channels]
    }
}

/// Draw an i.i.d. standard-normal value per point and channel.
pub fn sample_noise_field<R: Rng + ?Sized>(
    cloud: Arc<PointCloud>,
    channels: usize,
    rng: &mut R,
) -> Result<NoiseField3D> {
    cloud.ensure_non_empty()?;
    if channels == 0 {
        return Err(invalid("channels", "must be positive"));
    }
    let values = (0..cloud.len() * channels)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    NoiseField3D::new(cloud, channels, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsampledNoiseField {
    factor: usize,
    channels: usize,
    parent_index: Vec<u32>,
    positions: Vec<Vector3<f64>>,
    values: Vec<f64>,
}

impl UpsampledNoiseField {
    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn parent_index(&self) -> &[u32] {
        &self.parent_index
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, child: usize) -> &[f64] {
        &self.values[child * self.channels..(child + 1) * self.channels]
    }
}

fn key_from<R: Rng + ?Sized>(rng: &mut R) -> [u8; 32] {
    let mut key = [0u8; 32];
    rng.fill(&mut key);
    key
}

fn parent_stream(key: &[u8; 32], parent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(parent as u64);
    rng
}

/// Append the `n` children of one parent: positions from an isotropic
/// Gaussian of std `spread`, values as mean-removed standard normals plus
/// `parent / sqrt(n)` per channel.
fn push_children(
    rng: &mut ChaCha8Rng,
    center: &Vector3<f64>,
    parent: &[f64],
    n: usize,
    spread: f64,
    positions: &mut Vec<Vector3<f64>>,
    values: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) {
    for _ in 0..n {
        let offset = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        positions.push(center + offset * spread);
    }
    let channels = parent.len();
    let base = values.len();
    values.resize(base + n * channels, 0.0);
    let shift = 1.0 / (n as f64).sqrt();
    for (c, &pv) in parent.iter().enumerate() {
        scratch.clear();
        scratch.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let mean = scratch.iter().sum::<f64>() / n as f64;
        for (i, &s) in scratch.iter().enumerate() {
            values[base + i * channels + c] = s - mean + pv * shift;
        }
    }
}

/// Replace every point by `factor` children (see module docs). For each
/// parent `k`, `(1/sqrt(factor)) * sum(children) == parent` per channel.
pub fn conditional_upsample<R: Rng + ?Sized>(
    field: &NoiseField3D,
    factor: usize,
    spread: f64,
    rng: &mut R,
) -> Result<UpsampledNoiseField> {
    if factor == 0 {
        return Err(invalid("upsample_n", "must be at least 1"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(invalid("upsample_std", "must be non-negative and finite"));
    }
    let key = key_from(rng);
    let cloud = field.cloud();
    let total = cloud.len() * factor;
    let mut out = UpsampledNoiseField {
        factor,
        channels: field.channels,
        parent_index: Vec::with_capacity(total),
        positions: Vec::with_capacity(total),
        values: Vec::with_capacity(total * field.channels),
    };
    let mut scratch = Vec::with_capacity(factor);
    for (k, center) in cloud.positions().iter().enumerate() {
        let mut stream = parent_stream(&key, k);
        push_children(
            &mut stream,
            center,
            field.value(k),
            factor,
            spread,
            &mut out.positions,
            &mut out.values,
            &mut scratch,
        );
        out.parent_index.extend(std::iter::repeat_n(k as u32, factor));
    }
    Ok(out)
}

/// Running per-pixel sums and counts for the discrete integral.
struct PixelAccumulator {
    width: usize,
    height: usize,
    channels: usize,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl PixelAccumulator {
    fn new(intrinsics: &CameraIntrinsics, channels: usize) -> Self {
        Self {
            width: intrinsics.width,
            height: intrinsics.height,
            channels,
            sums: vec![0.0; intrinsics.pixel_count() * channels],
            counts: vec![0; intrinsics.pixel_count()],
        }
    }

    fn add(&mut self, idx: usize, values: &[f64]) {
        self.counts[idx] += 1;
        let c = self.channels;
        for (s, v) in self.sums[idx * c..(idx + 1) * c].iter_mut().zip(values) {
            *s += v;
        }
    }

    fn finish(self) -> (NoiseMap2D, Vec<u32>) {
        let mut map = ChannelMap::zeros(self.width, self.height, self.channels);
        for (idx, &count) in self.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let norm = 1.0 / (count as f64).sqrt();
            let c = self.channels;
            for (o, s) in map.at_mut(idx).iter_mut().zip(&self.sums[idx * c..(idx + 1) * c]) {
                *o = s * norm;
            }
            map.coverage_mut()[idx] = true;
        }
        (map, self.counts)
    }
}

pub(crate) fn integrate_with_counts(
    upsampled: &UpsampledNoiseField,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    depth: &DepthMap,
    depth_tolerance: f64,
) -> Result<(NoiseMap2D, Vec<u32>)> {
    depth.check_matches(intrinsics)?;
    if !(depth_tolerance > 0.0) {
        return Err(invalid("depth_tolerance", "must be positive"));
    }
    let mut acc = PixelAccumulator::new(intrinsics, upsampled.channels);
    for (i, pos) in upsampled.positions.iter().enumerate() {
        let Some(proj) = project(pos, intrinsics, pose) else {
            continue;
        };
        let Some(idx) = intrinsics.pixel_index(proj.pixel) else {
            continue;
        };
        match depth.get(idx) {
            Some(d) if (proj.depth - d).abs() <= depth_tolerance => acc.add(idx, upsampled.value(i)),
            _ => {}
        }
    }
    Ok(acc.finish())
}

/// Project the children into a view and aggregate per pixel as
/// `sum / sqrt(count)`, keeping only children within `depth_tolerance` of the
/// rendered depth. Pixels that receive nothing are left uncovered and zero.
pub fn discrete_noise_integral(
    upsampled: &UpsampledNoiseField,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    depth: &DepthMap,
    depth_tolerance: f64,
) -> Result<NoiseMap2D> {
    integrate_with_counts(upsampled, intrinsics, pose, depth, depth_tolerance).map(|(m, _)| m)
}

/// Children of one parent: positions, then interleaved values.
#[derive(Debug, Clone)]
struct Children {
    parent: Vec<f64>,
    positions: Vec<Vector3<f64>>,
    values: Vec<f64>,
}

/// Per-parent children, expanded on first use and kept for later views.
#[derive(Debug, Clone)]
struct ChildCache(Vec<OnceLock<Children>>);

impl ChildCache {
    fn new(parents: usize) -> Self {
        Self((0..parents).map(|_| OnceLock::new()).collect())
    }

    fn get(&self, k: usize, expand: impl FnOnce() -> Children) -> &Children {
        self.0[k].get_or_init(expand)
    }
}

/// Whether a child within `margin` world units of `p` could land in `rect`.
fn may_reach_rect(
    p: &Vector3<f64>,
    margin: f64,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    rect: &PixelRect,
) -> bool {
    let cam = pose.to_camera(p);
    if cam.z + margin <= 0.0 {
        return false;
    }
    let (z_lo, z_hi) = (cam.z - margin, cam.z + margin);
    let range = |a: f64, f: f64, c: f64| {
        let (x_lo, x_hi) = (a - margin, a + margin);
        let (lo, hi) = if z_lo > 0.0 {
            let ratios = [x_lo / z_lo, x_lo / z_hi, x_hi / z_lo, x_hi / z_hi];
            (
                ratios.iter().cloned().fold(f64::INFINITY, f64::min),
                ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        } else {
            // depth can approach zero, so x / z is unbounded on the side of x's sign
            (
                if x_lo > 0.0 { x_lo / z_hi } else { f64::NEG_INFINITY },
                if x_hi < 0.0 { x_hi / z_hi } else { f64::INFINITY },
            )
        };
        (f * lo + c, f * hi + c)
    };
    let (u0, u1) = range(cam.x, intrinsics.fx, intrinsics.cx);
    let (v0, v1) = range(cam.y, intrinsics.fy, intrinsics.cy);
    u1 >= rect.x as f64
        && u0 < (rect.x + rect.width) as f64
        && v1 >= rect.y as f64
        && v0 < (rect.y + rect.height) as f64
}

fn check_rect(intrinsics: &CameraIntrinsics, rect: &PixelRect) -> Result<()> {
    if !rect.fits(intrinsics.width, intrinsics.height) {
        return Err(Error::PatchOutOfBounds {
            x: rect.x,
            y: rect.y,
            size: rect.width.max(rect.height),
            width: intrinsics.width,
            height: intrinsics.height,
        });
    }
    Ok(())
}

/// Noise field on the background sphere, expanded lazily per view.
#[derive(Debug, Clone)]
pub struct SphereNoiseField {
    sphere: BackgroundSphere,
    factor: usize,
    channels: usize,
    key: [u8; 32],
    cache: ChildCache,
}

impl PartialEq for SphereNoiseField {
    fn eq(&self, other: &Self) -> bool {
        self.sphere == other.sphere
            && self.factor == other.factor
            && self.channels == other.channels
            && self.key == other.key
    }
}

impl SphereNoiseField {
    pub fn sample<R: Rng + ?Sized>(
        sphere: BackgroundSphere,
        factor: usize,
        channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if factor == 0 {
            return Err(invalid("upsample_n", "must be at least 1"));
        }
        if channels == 0 {
            return Err(invalid("channels", "must be positive"));
        }
        Ok(Self {
            sphere,
            factor,
            channels,
            key: key_from(rng),
            cache: ChildCache::new(sphere.points),
        })
    }

    pub fn sphere(&self) -> &BackgroundSphere {
        &self.sphere
    }

    /// Noise value of sphere point `i` and its children.
    fn expand(&self, i: usize) -> Children {
        let mut stream = parent_stream(&self.key, i);
        let parent: Vec<f64> = (0..self.channels)
            .map(|_| stream.sample::<f64, _>(StandardNormal))
            .collect();
        let mut positions = Vec::with_capacity(self.factor);
        let mut values = Vec::with_capacity(self.factor * self.channels);
        push_children(
            &mut stream,
            &self.sphere.position(i),
            &parent,
            self.factor,
            self.sphere.spread,
            &mut positions,
            &mut values,
            &mut Vec::with_capacity(self.factor),
        );
        Children {
            parent,
            positions,
            values,
        }
    }

    /// Parent values and all children of the field, materialized.
    pub fn materialize(&self) -> (Vec<f64>, UpsampledNoiseField) {
        let n = self.sphere.points;
        let mut parents = Vec::with_capacity(n * self.channels);
        let mut up = UpsampledNoiseField {
            factor: self.factor,
            channels: self.channels,
            parent_index: Vec::with_capacity(n * self.factor),
            positions: Vec::with_capacity(n * self.factor),
            values: Vec::with_capacity(n * self.factor * self.channels),
        };
        for i in 0..n {
            let ch = self.cache.get(i, || self.expand(i));
            parents.extend_from_slice(&ch.parent);
            up.positions.extend_from_slice(&ch.positions);
            up.values.extend_from_slice(&ch.values);
            up.parent_index.extend(std::iter::repeat_n(i as u32, self.factor));
        }
        (parents, up)
    }

    /// Integrate the back-facing children visible from `pose`. No depth test
    /// is applied; pixels that receive nothing stay uncovered.
    pub fn render(&self, intrinsics: &CameraIntrinsics, pose: &CameraPose) -> NoiseMap2D {
        self.render_in(intrinsics, pose, &PixelRect::full(intrinsics.width, intrinsics.height))
    }

    /// Like [`render`](Self::render) but only pixels inside `rect` receive values.
    pub fn render_region(
        &self,
        intrinsics: &CameraIntrinsics,
        pose: &CameraPose,
        rect: &PixelRect,
    ) -> Result<NoiseMap2D> {
        check_rect(intrinsics, rect)?;
        Ok(self.render_in(intrinsics, pose, rect))
    }

    fn render_in(&self, intrinsics: &CameraIntrinsics, pose: &CameraPose, rect: &PixelRect) -> NoiseMap2D {
        let eye = pose.center();
        let margin = CULL_SIGMAS * self.sphere.spread + 1e-6 * self.sphere.radius;
        let mut acc = PixelAccumulator::new(intrinsics, self.channels);
        // the lattice angle advances by a constant step, so the culling
        // positions follow from a rotation recurrence instead of sin/cos per
        // point; its drift stays far below the cull margin
        let (step_sin, step_cos) = golden_angle().sin_cos();
        let (mut s, mut c) = (0.0f64, 1.0f64);
        for i in 0..self.sphere.points {
            let p = self.sphere.lattice_point(i, c, s);
            (s, c) = (s * step_cos + c * step_sin, c * step_cos - s * step_sin);
            // back-facing only: the outward normal points away from the camera
            if (p - self.sphere.center).dot(&(p - eye)) <= 0.0 {
                continue;
            }
            if !may_reach_rect(&p, margin, intrinsics, pose, rect) {
                continue;
            }
            let ch = self.cache.get(i, || self.expand(i));
            for (c, pos) in ch.positions.iter().enumerate() {
                if let Some(proj) = project(pos, intrinsics, pose) {
                    if let Some(idx) = intrinsics.pixel_index(proj.pixel) {
                        if rect.contains_index(idx, intrinsics.width) {
                            acc.add(idx, &ch.values[c * self.channels..(c + 1) * self.channels]);
                        }
                    }
                }
            }
        }
        acc.finish().0
    }

    /// Like [`render`](Self::render) but fails when any pixel stays uncovered.
    pub fn render_full(
        &self,
        intrinsics: &CameraIntrinsics,
        pose: &CameraPose,
    ) -> Result<NoiseMap2D> {
        let map = self.render(intrinsics, pose);
        let uncovered = map.pixel_count() - map.covered_count();
        if uncovered > 0 {
            return Err(Error::InsufficientSphereDensity {
                uncovered,
                total: map.pixel_count(),
            });
        }
        Ok(map)
    }
}

/// Background noise for one view from a freshly sampled sphere field.
pub fn spherical_background_noise<R: Rng + ?Sized>(
    sphere: &BackgroundSphere,
    upsample_n: usize,
    channels: usize,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    rng: &mut R,
) -> Result<NoiseMap2D> {
    SphereNoiseField::sample(*sphere, upsample_n, channels, rng)?.render_full(intrinsics, pose)
}

/// Foreground where it is covered, background elsewhere.
pub fn composite_noise(foreground: &NoiseMap2D, background: &NoiseMap2D) -> Result<NoiseMap2D> {
    foreground.check_same_shape(background)?;
    if !background.is_fully_covered() {
        return Err(invalid("background", "must cover every pixel"));
    }
    let mut out = background.clone();
    for idx in 0..foreground.pixel_count() {
        if foreground.coverage()[idx] {
            out.at_mut(idx).copy_from_slice(foreground.at(idx));
        }
    }
    Ok(out)
}

/// Foreground and background noise fields shared by every view of one
/// optimization step. Children are expanded per parent on first use, so
/// rendering several nearby views costs little more than rendering one.
#[derive(Debug, Clone)]
pub struct ConsistentNoiseField {
    parents: NoiseField3D,
    factor: usize,
    spread: f64,
    key: [u8; 32],
    cache: ChildCache,
    background: SphereNoiseField,
    depth_tolerance: f64,
    splat_radius: f64,
}

/// The intermediate products of rendering one view of a [`ConsistentNoiseField`].
#[derive(Debug, Clone)]
pub struct NoiseLayers {
    pub depth: DepthMap,
    pub foreground: NoiseMap2D,
    pub background: NoiseMap2D,
    pub composite: NoiseMap2D,
}

impl ConsistentNoiseField {
    pub fn sample<R: Rng + ?Sized>(
        cloud: Arc<PointCloud>,
        resolved: &ResolvedNoising,
        channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let parents = sample_noise_field(cloud.clone(), channels, rng)?;
        if resolved.upsample_n == 0 {
            return Err(invalid("upsample_n", "must be at least 1"));
        }
        if !(resolved.upsample_std >= 0.0 && resolved.upsample_std.is_finite()) {
            return Err(invalid("upsample_std", "must be non-negative and finite"));
        }
        let key = key_from(rng);
        let background = SphereNoiseField::sample(resolved.sphere, resolved.upsample_n, channels, rng)?;
        Ok(Self {
            cache: ChildCache::new(cloud.len()),
            parents,
            factor: resolved.upsample_n,
            spread: resolved.upsample_std,
            key,
            background,
            depth_tolerance: resolved.depth_tolerance,
            splat_radius: resolved.splat_radius,
        })
    }

    pub fn cloud(&self) -> &Arc<PointCloud> {
        self.parents.cloud()
    }

    /// Per-point noise values before upsampling.
    pub fn parents(&self) -> &NoiseField3D {
        &self.parents
    }

    /// Every foreground child, materialized. Equal to
    /// [`conditional_upsample`] run with the same random key.
    pub fn foreground(&self) -> UpsampledNoiseField {
        let n = self.parents.cloud().len();
        let c = self.parents.channels();
        let mut up = UpsampledNoiseField {
            factor: self.factor,
            channels: c,
            parent_index: Vec::with_capacity(n * self.factor),
            positions: Vec::with_capacity(n * self.factor),
            values: Vec::with_capacity(n * self.factor * c),
        };
        for k in 0..n {
            let ch = self.children(k);
            up.positions.extend_from_slice(&ch.positions);
            up.values.extend_from_slice(&ch.values);
            up.parent_index.extend(std::iter::repeat_n(k as u32, self.factor));
        }
        up
    }

    pub fn background(&self) -> &SphereNoiseField {
        &self.background
    }

    fn children(&self, k: usize) -> &Children {
        self.cache.get(k, || {
            let mut stream = parent_stream(&self.key, k);
            let mut positions = Vec::with_capacity(self.factor);
            let mut values = Vec::with_capacity(self.factor * self.parents.channels());
            push_children(
                &mut stream,
                &self.parents.cloud().positions()[k],
                self.parents.value(k),
                self.factor,
                self.spread,
                &mut positions,
                &mut values,
                &mut Vec::with_capacity(self.factor),
            );
            Children {
                parent: self.parents.value(k).to_vec(),
                positions,
                values,
            }
        })
    }

    fn foreground_in(
        &self,
        intrinsics: &CameraIntrinsics,
        pose: &CameraPose,
        depth: &DepthMap,
        rect: &PixelRect,
    ) -> NoiseMap2D {
        let c = self.parents.channels();
        let margin = CULL_SIGMAS * self.spread;
        let mut acc = PixelAccumulator::new(intrinsics, c);
        for (k, center) in self.parents.cloud().positions().iter().enumerate() {
            if !may_reach_rect(center, margin, intrinsics, pose, rect) {
                continue;
            }
            let ch = self.children(k);
            for (i, pos) in ch.positions.iter().enumerate() {
                let Some(proj) = project(pos, intrinsics, pose) else {
                    continue;
                };
                let Some(idx) = intrinsics.pixel_index(proj.pixel) else {
                    continue;
                };
                if !rect.contains_index(idx, intrinsics.width) {
                    continue;
                }
                match depth.get(idx) {
                    Some(d) if (proj.depth - d).abs() <= self.depth_tolerance => {
                        acc.add(idx, &ch.values[i * c..(i + 1) * c])
                    }
                    _ => {}
                }
            }
        }
        acc.finish().0
    }

    pub fn render_layers(
        &self,
        intrinsics: &CameraIntrinsics,
        pose: &CameraPose,
    ) -> Result<NoiseLayers> {
        let full = PixelRect::full(intrinsics.width, intrinsics.height);
        self.render_layers_region(intrinsics, pose, &full)
    }

    /// Layers with only the pixels inside `rect` rendered; every other pixel
    /// is uncovered in all three maps. Values inside `rect` equal those of
    /// a full render.
    pub fn render_layers_region(
        &self,
        intrinsics: &CameraIntrinsics,
        pose: &CameraPose,
        rect: &PixelRect,
    ) -> Result<NoiseLayers> {
        check_rect(intrinsics, rect)?;
        let depth = render_depth(self.parents.cloud(), intrinsics, pose, self.splat_radius)?;
        let foreground = self.foreground_in(intrinsics, pose, &depth, rect);
        let background = self.background.render_in(intrinsics, pose, rect);
        let uncovered = rect
            .indices(intrinsics.width)
            .filter(|&idx| !background.coverage()[idx])
            .count();
        if uncovered > 0 {
            return Err(Error::InsufficientSphereDensity {
                uncovered,
                total: rect.area(),
            });
        }
        let mut composite = background.clone();
        for idx in rect.indices(intrinsics.width) {
            if foreground.coverage()[idx] {
                composite.at_mut(idx).copy_from_slice(foreground.at(idx));
            }
        }
        Ok(NoiseLayers {
            depth,
            foreground,
            background,
            composite,
        })
    }

    pub fn render(&self, intrinsics: &CameraIntrinsics, pose: &CameraPose) -> Result<NoiseMap2D> {
        Ok(self.render_layers(intrinsics, pose)?.composite)
    }

    /// Composite noise for the pixels inside `rect` only.
    pub fn render_region(
        &self,
        intrinsics: &CameraIntrinsics,
        pose: &CameraPose,
        rect: &PixelRect,
    ) -> Result<NoiseMap2D> {
        Ok(self.render_layers_region(intrinsics, pose, rect)?.composite)
    }
}

/// One full 3D-consistent noise map: sample the shared field and render it.
pub fn consistent_noise_map<R: Rng + ?Sized>(
    cloud: &Arc<PointCloud>,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    params: &NoisingParams,
    channels: usize,
    rng: &mut R,
) -> Result<NoiseMap2D> {
    let resolved = params.resolve(cloud, intrinsics)?;
    ConsistentNoiseField::sample(cloud.clone(), &resolved, channels, rng)?.render(intrinsics, pose)
}
