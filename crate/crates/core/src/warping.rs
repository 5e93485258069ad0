//! Depth-based correspondences between two views.
//!
//! A [`WarpField`] computed from the depth of view `i` maps every pixel of
//! `i` to continuous image coordinates in view `j`. Sampling a map of view
//! `j` through it ([`inverse_warp`]) expresses that map on the pixel grid of
//! view `i`. Targets use the same continuous coordinates as projection: pixel
//! `(x, y)` spans `[x, x+1) x [y, y+1)`, so nearest sampling picks the pixel
//! containing the target, which is round-half-up of the pixel-center
//! coordinate `target - 0.5`.

use nalgebra::Vector2;

use crate::error::{invalid, mismatch, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap};
use crate::raster::ChannelMap;

/// Default relative depth tolerance of [`occlusion_mask`].
pub const DEFAULT_OCCLUSION_DELTA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    width: usize,
    height: usize,
    source_width: usize,
    source_height: usize,
    targets: Vec<Vector2<f64>>,
    reprojected_depth: Vec<f64>,
    valid: Vec<bool>,
}

impl WarpField {
    /// Warp from explicit targets; entries outside the source image or with
    /// non-positive depth are stored as invalid.
    pub fn from_targets(
        width: usize,
        height: usize,
        source_width: usize,
        source_height: usize,
        targets: Vec<Option<(Vector2<f64>, f64)>>,
    ) -> Result<Self> {
        if targets.len() != width * height {
            return Err(mismatch(width * height, targets.len()));
        }
        let mut field = Self::invalid(width, height, source_width, source_height);
        for (idx, t) in targets.into_iter().enumerate() {
            if let Some((pixel, depth)) = t {
                field.set(idx, pixel, depth);
            }
        }
        Ok(field)
    }

    fn invalid(width: usize, height: usize, source_width: usize, source_height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            source_width,
            source_height,
            targets: vec![Vector2::new(f64::NAN, f64::NAN); n],
            reprojected_depth: vec![f64::NAN; n],
            valid: vec![false; n],
        }
    }

    fn set(&mut self, idx: usize, pixel: Vector2<f64>, depth: f64) {
        let inside = pixel.x >= 0.0
            && pixel.x < self.source_width as f64
            && pixel.y >= 0.0
            && pixel.y < self.source_height as f64;
        if inside && depth > 0.0 && depth.is_finite() {
            self.targets[idx] = pixel;
            self.reprojected_depth[idx] = depth;
            self.valid[idx] = true;
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn source_width(&self) -> usize {
        self.source_width
    }

    pub fn source_height(&self) -> usize {
        self.source_height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.valid[idx]
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn target(&self, idx: usize) -> Option<Vector2<f64>> {
        self.valid[idx].then(|| self.targets[idx])
    }

    pub fn reprojected_depth(&self, idx: usize) -> Option<f64> {
        self.valid[idx].then(|| self.reprojected_depth[idx])
    }

    /// Linear index of the source pixel containing the target of `idx`.
    pub fn nearest_source_index(&self, idx: usize) -> Option<usize> {
        self.target(idx).map(|t| {
            let x = (t.x.floor() as usize).min(self.source_width - 1);
            let y = (t.y.floor() as usize).min(self.source_height - 1);
            y * self.source_width + x
        })
    }
}

/// Correspondences from view `i` to view `j`: unproject each pixel center
/// of `i` with its depth, move it into camera `j` and project it.
pub fn compute_warp(
    depth_i: &DepthMap,
    pose_i: &CameraPose,
    pose_j: &CameraPose,
    intrinsics: &CameraIntrinsics,
) -> Result<WarpField> {
    depth_i.check_matches(intrinsics)?;
    let (r, t) = pose_i.relative_to(pose_j);
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut field = WarpField::invalid(w, h, w, h);
    for idx in 0..intrinsics.pixel_count() {
        let Some(d) = depth_i.get(idx) else {
            continue;
        };
        let cam_i = intrinsics.backproject(intrinsics.pixel_center(idx), d);
        let cam_j = r * cam_i + t;
        if cam_j.z <= 0.0 {
            continue;
        }
        field.set(idx, intrinsics.to_pixel(&cam_j), cam_j.z);
    }
    Ok(field)
}

fn check_source(source: &ChannelMap, warp: &WarpField) -> Result<()> {
    if source.width() != warp.source_width || source.height() != warp.source_height {
        return Err(mismatch(
            format!("{}x{} source", warp.source_height, warp.source_width),
            format!("{}x{}", source.height(), source.width()),
        ));
    }
    Ok(())
}

/// Nearest-neighbor inverse warp. Pixels with an invalid warp, or whose
/// source pixel is uncovered, are uncovered and zero in the output.
pub fn inverse_warp(source: &ChannelMap, warp: &WarpField) -> Result<ChannelMap> {
    check_source(source, warp)?;
    let mut out = ChannelMap::zeros(warp.width, warp.height, source.channels());
    for idx in 0..warp.pixel_count() {
        let Some(s) = warp.nearest_source_index(idx) else {
            continue;
        };
        if !source.coverage()[s] {
            continue;
        }
        out.at_mut(idx).copy_from_slice(source.at(s));
        out.coverage_mut()[idx] = true;
    }
    Ok(out)
}

/// Bilinear sample of `map` at continuous image coordinates `pos`, with
/// neighbors clamped to the image. Coverage is ignored.
pub fn sample_bilinear(map: &ChannelMap, pos: Vector2<f64>, out: &mut [f64]) {
    let (w, h) = (map.width() as isize, map.height() as isize);
    let u = pos.x - 0.5;
    let v = pos.y - 0.5;
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = u - x0;
    let fy = v - y0;
    let clamp = |a: isize, hi: isize| a.clamp(0, hi - 1) as usize;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let xs = [clamp(x0, w), clamp(x0 + 1, w)];
    let ys = [clamp(y0, h), clamp(y0 + 1, h)];
    let weights = [
        (1.0 - fx) * (1.0 - fy),
        fx * (1.0 - fy),
        (1.0 - fx) * fy,
        fx * fy,
    ];
    let corners = [(xs[0], ys[0]), (xs[1], ys[0]), (xs[0], ys[1]), (xs[1], ys[1])];
    out.iter_mut().for_each(|o| *o = 0.0);
    for (&(x, y), &wgt) in corners.iter().zip(&weights) {
        for (o, v) in out.iter_mut().zip(map.pixel(x, y)) {
            *o += wgt * v;
        }
    }
}

/// Bilinear inverse warp, used where a map must vary smoothly with the
/// warp targets. Output coverage equals warp validity.
pub fn inverse_warp_bilinear(source: &ChannelMap, warp: &WarpField) -> Result<ChannelMap> {
    check_source(source, warp)?;
    let mut out = ChannelMap::zeros(warp.width, warp.height, source.channels());
    for idx in 0..warp.pixel_count() {
        let Some(t) = warp.target(idx) else {
            continue;
        };
        sample_bilinear(source, t, out.at_mut(idx));
        out.coverage_mut()[idx] = true;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcclusionMask {
    width: usize,
    height: usize,
    weights: Vec<bool>,
}

impl OcclusionMask {
    pub fn from_weights(width: usize, height: usize, weights: Vec<bool>) -> Result<Self> {
        if weights.len() != width * height {
            return Err(mismatch(width * height, weights.len()));
        }
        Ok(Self {
            width,
            height,
            weights,
        })
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            weights: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[bool] {
        &self.weights
    }

    pub fn weight(&self, idx: usize) -> f64 {
        if self.weights[idx] {
            1.0
        } else {
            0.0
        }
    }

    pub fn count(&self) -> usize {
        self.weights.iter().filter(|&&w| w).count()
    }

    /// Whether every pixel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &OcclusionMask) -> bool {
        self.weights
            .iter()
            .zip(&other.weights)
            .all(|(&a, &b)| !a || b)
    }
}

/// Keep a correspondence when the reprojected depth agrees with the depth
/// view `j` sees at the target within `delta` relative to the latter.
pub fn occlusion_mask(warp: &WarpField, depth_j: &DepthMap, delta: f64) -> Result<OcclusionMask> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", "must be positive and finite"));
    }
    if depth_j.width() != warp.source_width || depth_j.height() != warp.source_height {
        return Err(mismatch(
            format!("{}x{} depth", warp.source_height, warp.source_width),
            format!("{}x{}", depth_j.height(), depth_j.width()),
        ));
    }
    let weights = (0..warp.pixel_count())
        .map(|idx| {
            let (Some(s), Some(z)) = (warp.nearest_source_index(idx), warp.reprojected_depth(idx))
            else {
                return false;
            };
            match depth_j.get(s) {
                Some(dj) => (z - dj).abs() <= delta * dj,
                None => false,
            }
        })
        .collect();
    OcclusionMask::from_weights(warp.width, warp.height, weights)
}
