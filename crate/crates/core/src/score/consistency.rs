use nalgebra::Vector2;

use crate::error::{invalid, mismatch, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap};
use crate::raster::{ChannelMap, GradientMap};
use crate::warping::{sample_bilinear, OcclusionMask};

/// Vectors shorter than this are treated as zero by the cosine terms.
pub const NORM_EPSILON: f64 = 1e-8;

fn cosine_term(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < NORM_EPSILON || nb < NORM_EPSILON {
        return 0.0;
    }
    1.0 - (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// `sum_p mask(p) * (1 - cos(g_i(p), g_j_warped(p)))`, cosine over channels.
pub fn consistency_loss(
    g_i: &GradientMap,
    g_j_warped: &GradientMap,
    mask: &OcclusionMask,
) -> Result<f64> {
    g_i.check_same_shape(g_j_warped)?;
    if mask.width() != g_i.width() || mask.height() != g_i.height() {
        return Err(mismatch(
            format!("{}x{} mask", g_i.height(), g_i.width()),
            format!("{}x{}", mask.height(), mask.width()),
        ));
    }
    Ok((0..g_i.pixel_count())
        .filter(|&idx| mask.weights()[idx])
        .map(|idx| cosine_term(g_i.at(idx), g_j_warped.at(idx)))
        .sum())
}

/// Everything the depth-differentiable consistency loss of a view pair
/// depends on. Only `depth_i` is treated as a variable.
#[derive(Debug, Clone, Copy)]
pub struct ViewPair<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    pub pose_i: &'a CameraPose,
    pub pose_j: &'a CameraPose,
    pub depth_i: &'a DepthMap,
    pub g_i: &'a GradientMap,
    /// Gradient map of view `j` on its own pixel grid.
    pub g_j: &'a GradientMap,
    pub mask: &'a OcclusionMask,
}

impl ViewPair<'_> {
    fn validate(&self) -> Result<()> {
        self.depth_i.check_matches(self.intrinsics)?;
        self.g_i.check_same_shape(self.g_j)?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if self.g_i.width() != w || self.g_i.height() != h {
            return Err(mismatch(format!("{h}x{w} gradient map"), self.g_i.shape_string()));
        }
        if self.mask.width() != w || self.mask.height() != h {
            return Err(mismatch(
                format!("{h}x{w} mask"),
                format!("{}x{}", self.mask.height(), self.mask.width()),
            ));
        }
        Ok(())
    }

    /// Loss term of pixel `idx` when its depth is `depth`, sampling `g_j`
    /// bilinearly at the reprojected location.
    fn pixel_term(&self, idx: usize, depth: f64, scratch: &mut [f64]) -> f64 {
        if !self.mask.weights()[idx] || !(depth > 0.0) {
            return 0.0;
        }
        let k = self.intrinsics;
        let (r, t) = self.pose_i.relative_to(self.pose_j);
        let cam_j = r * k.backproject(k.pixel_center(idx), depth) + t;
        if cam_j.z <= 0.0 {
            return 0.0;
        }
        let target: Vector2<f64> = k.to_pixel(&cam_j);
        if !k.contains(target) {
            return 0.0;
        }
        sample_bilinear(self.g_j, target, scratch);
        cosine_term(self.g_i.at(idx), scratch)
    }

    /// Consistency loss with `g_j` warped bilinearly through `depth`.
    pub fn loss_at(&self, depth: &DepthMap) -> Result<f64> {
        self.validate()?;
        depth.check_matches(self.intrinsics)?;
        let mut scratch = vec![0.0; self.g_j.channels()];
        Ok((0..self.intrinsics.pixel_count())
            .filter_map(|idx| depth.get(idx).map(|d| self.pixel_term(idx, d, &mut scratch)))
            .sum())
    }

    pub fn loss(&self) -> Result<f64> {
        self.loss_at(self.depth_i)
    }
}

/// Central finite-difference gradient of [`ViewPair::loss`] with respect to
/// each valid depth pixel of view `i`. The result has one channel and is
/// covered exactly where the depth is valid.
pub fn consistency_loss_depth_gradient(pair: &ViewPair<'_>, h: f64) -> Result<ChannelMap> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("h", "must be positive and finite"));
    }
    pair.validate()?;
    let k = pair.intrinsics;
    let mut out = ChannelMap::zeros(k.width, k.height, 1);
    let mut scratch = vec![0.0; pair.g_j.channels()];
    for idx in 0..k.pixel_count() {
        let Some(d) = pair.depth_i.get(idx) else {
            continue;
        };
        // only this pixel's own term depends on its depth
        let plus = pair.pixel_term(idx, d + h, &mut scratch);
        let minus = pair.pixel_term(idx, d - h, &mut scratch);
        out.at_mut(idx)[0] = (plus - minus) / (2.0 * h);
        out.coverage_mut()[idx] = true;
    }
    Ok(out)
}
