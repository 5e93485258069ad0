use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::geometry::{
    disc_offsets, for_each_splat_pixel, project, render_depth, CameraIntrinsics, CameraPose,
    DepthMap, PointCloud,
};
use crate::raster::{ChannelMap, Image};

/// Point cloud with fixed positions and optimizable RGB colors.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPointCloud {
    cloud: Arc<PointCloud>,
    colors: Vec<Vector3<f64>>,
    opacity: Vec<f64>,
}

impl ColorPointCloud {
    pub fn new(cloud: Arc<PointCloud>, colors: Vec<Vector3<f64>>, opacity: Vec<f64>) -> Result<Self> {
        cloud.ensure_non_empty()?;
        if colors.len() != cloud.len() {
            return Err(mismatch(format!("{} colors", cloud.len()), colors.len()));
        }
        if opacity.len() != cloud.len() {
            return Err(mismatch(format!("{} opacities", cloud.len()), opacity.len()));
        }
        if !colors.iter().all(|c| c.iter().all(|v| v.is_finite())) {
            return Err(invalid("colors", "must be finite"));
        }
        if !opacity.iter().all(|o| *o > 0.0 && o.is_finite()) {
            return Err(invalid("opacity", "must be positive and finite"));
        }
        Ok(Self {
            cloud,
            colors,
            opacity,
        })
    }

    /// Every point gets `color` and opacity 1.
    pub fn uniform(cloud: Arc<PointCloud>, color: Vector3<f64>) -> Result<Self> {
        let n = cloud.len();
        Self::new(cloud, vec![color; n], vec![1.0; n])
    }

    pub fn cloud(&self) -> &Arc<PointCloud> {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn colors(&self) -> &[Vector3<f64>] {
        &self.colors
    }

    pub fn opacity(&self) -> &[f64] {
        &self.opacity
    }

    /// Replace the colors; they must stay finite.
    pub fn set_colors(&mut self, colors: Vec<Vector3<f64>>) -> Result<()> {
        if colors.len() != self.colors.len() {
            return Err(mismatch(self.colors.len(), colors.len()));
        }
        if !colors.iter().all(|c| c.iter().all(|v| v.is_finite())) {
            return Err(invalid("colors", "must be finite"));
        }
        self.colors = colors;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderParams {
    pub splat_radius: f64,
    /// A point shades a pixel when its depth is within this distance of the
    /// z-buffer depth there.
    pub depth_tolerance: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            splat_radius: 1.0,
            depth_tolerance: 0.1,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.splat_radius >= 0.0 && self.splat_radius.is_finite()) {
            return Err(invalid("splat_radius", "must be non-negative and finite"));
        }
        if !(self.depth_tolerance > 0.0 && self.depth_tolerance.is_finite()) {
            return Err(invalid("depth_tolerance", "must be positive and finite"));
        }
        Ok(())
    }
}

/// Per-pixel normalized point weights, stored row by row: the entries of
/// pixel `p` are `offsets[p]..offsets[p + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelWeights {
    offsets: Vec<usize>,
    points: Vec<u32>,
    weights: Vec<f64>,
}

impl PixelWeights {
    /// `(point, d pixel / d color)` pairs of one pixel.
    pub fn pixel(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[idx]..self.offsets[idx + 1];
        self.points[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&k, &w)| (k as usize, w))
    }

    pub fn pixel_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Sum of each point's weights over all pixels.
    pub fn point_totals(&self, points: usize) -> Vec<f64> {
        let mut out = vec![0.0; points];
        for (&k, &w) in self.points.iter().zip(&self.weights) {
            out[k as usize] += w;
        }
        out
    }

    /// Image produced by these weights for the given point colors.
    pub fn shade(&self, colors: &[Vector3<f64>], width: usize, height: usize) -> Result<Image> {
        if width * height != self.pixel_count() {
            return Err(mismatch(self.pixel_count(), width * height));
        }
        let mut image = ChannelMap::zeros(width, height, 3);
        for idx in 0..self.pixel_count() {
            let mut color = Vector3::zeros();
            let mut any = false;
            for (k, w) in self.pixel(idx) {
                let c = colors
                    .get(k)
                    .ok_or_else(|| mismatch(format!("more than {k} colors"), colors.len()))?;
                color += c * w;
                any = true;
            }
            if any {
                image.at_mut(idx).copy_from_slice(color.as_slice());
                image.coverage_mut()[idx] = true;
            }
        }
        Ok(image)
    }

    /// `out[k] += sum_p w(p, k) * pixel_grad(p)` for a 3-channel map.
    pub fn backpropagate(&self, pixel_grad: &ChannelMap, out: &mut [Vector3<f64>]) -> Result<()> {
        if pixel_grad.channels() != 3 || pixel_grad.pixel_count() != self.pixel_count() {
            return Err(mismatch(
                format!("{} pixels x 3 channels", self.pixel_count()),
                format!("{} x {}", pixel_grad.pixel_count(), pixel_grad.channels()),
            ));
        }
        for idx in 0..self.pixel_count() {
            let g = pixel_grad.at(idx);
            let g = Vector3::new(g[0], g[1], g[2]);
            for (k, w) in self.pixel(idx) {
                out[k] += g * w;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ColorRendering {
    pub image: Image,
    pub depth: DepthMap,
    pub weights: PixelWeights,
}

/// Opacity-weighted average color of the points that pass the depth test
/// at each pixel. Pixels without such points are uncovered and zero.
pub fn render_color(
    rep: &ColorPointCloud,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    params: &RenderParams,
) -> Result<ColorRendering> {
    params.validate()?;
    let depth = render_depth(&rep.cloud, intrinsics, pose, params.splat_radius)?;
    let offsets = disc_offsets(params.splat_radius);
    let npix = intrinsics.pixel_count();

    let mut hits: Vec<(u32, u32)> = Vec::new();
    for (k, p) in rep.cloud.positions().iter().enumerate() {
        let Some(proj) = project(p, intrinsics, pose) else {
            continue;
        };
        for_each_splat_pixel(intrinsics, proj.pixel, &offsets, |idx| {
            if let Some(d) = depth.get(idx) {
                if (proj.depth - d).abs() <= params.depth_tolerance {
                    hits.push((idx as u32, k as u32));
                }
            }
        });
    }
    // stable sort keeps point order inside each pixel
    hits.sort_by_key(|&(idx, _)| idx);

    let mut row_offsets = vec![0usize; npix + 1];
    for &(idx, _) in &hits {
        row_offsets[idx as usize + 1] += 1;
    }
    for i in 0..npix {
        row_offsets[i + 1] += row_offsets[i];
    }
    let points: Vec<u32> = hits.iter().map(|&(_, k)| k).collect();
    let mut weights: Vec<f64> = points.iter().map(|&k| rep.opacity[k as usize]).collect();

    let mut image = ChannelMap::zeros(intrinsics.width, intrinsics.height, 3);
    for idx in 0..npix {
        let range = row_offsets[idx]..row_offsets[idx + 1];
        if range.is_empty() {
            continue;
        }
        let total: f64 = weights[range.clone()].iter().sum();
        let mut color = Vector3::zeros();
        for i in range {
            weights[i] /= total;
            color += rep.colors[points[i] as usize] * weights[i];
        }
        image.at_mut(idx).copy_from_slice(color.as_slice());
        image.coverage_mut()[idx] = true;
    }
    Ok(ColorRendering {
        image,
        depth,
        weights: PixelWeights {
            offsets: row_offsets,
            points,
            weights,
        },
    })
}
