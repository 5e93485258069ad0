use nalgebra::Vector3;
use rand::Rng;

use super::render::{render_color, ColorPointCloud, ColorRendering, RenderParams};
use super::{gradient_map, iid_noise_map, Denoiser, NoiseSchedule};
use crate::error::{invalid, mismatch, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap};
use crate::noising::ConsistentNoiseField;
use crate::raster::{ChannelMap, GradientMap, Image, NoiseMap2D};
use crate::warping::{compute_warp, inverse_warp};

/// Where the per-view noise maps of one step come from.
#[derive(Debug, Clone, Copy)]
pub enum StepNoise<'a> {
    /// All noise maps are zero.
    Zero,
    /// Independent standard-normal maps per view.
    Iid,
    /// Views of one shared 3D noise field.
    Consistent(&'a ConsistentNoiseField),
    /// Given maps, one per camera.
    Maps(&'a [NoiseMap2D]),
}

#[derive(Debug, Clone)]
pub struct ViewGradient {
    pub rendering: ColorRendering,
    pub noise: NoiseMap2D,
    pub gradient: GradientMap,
}

#[derive(Debug, Clone)]
pub struct SdsStep {
    pub timestep: usize,
    pub sigma: f64,
    /// Gradient of the surrogate `sum_v 1/2 |z_v - sg(z_v + g_v)|^2` with
    /// respect to the point colors, i.e. `-sum_v sum_p g_v(p) dz_v(p)/dc`.
    pub gradient: Vec<Vector3<f64>>,
    pub views: Vec<ViewGradient>,
}

impl SdsStep {
    /// Value of the surrogate objective at `colors`, with the renders and
    /// gradient maps of this step held fixed.
    pub fn surrogate_objective(&self, colors: &[Vector3<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for v in &self.views {
            let img = &v.rendering.image;
            let z = v.rendering.weights.shade(colors, img.width(), img.height())?;
            for ((zv, z0), g) in z.values().iter().zip(img.values()).zip(v.gradient.values()) {
                let r = zv - (z0 + g);
                total += 0.5 * r * r;
            }
        }
        Ok(total)
    }
}

/// One score-distillation step over a set of cameras. The denoiser sees the
/// camera's position in `cameras` as its view id. A single noise level is
/// drawn from `schedule` for the whole step.
#[allow(clippy::too_many_arguments)]
pub fn sds_step<R: Rng + ?Sized>(
    rep: &ColorPointCloud,
    intrinsics: &CameraIntrinsics,
    cameras: &[CameraPose],
    schedule: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    noise: StepNoise<'_>,
    params: &RenderParams,
    rng: &mut R,
) -> Result<SdsStep> {
    if cameras.is_empty() {
        return Err(invalid("cameras", "need at least one camera"));
    }
    if let StepNoise::Maps(maps) = noise {
        if maps.len() != cameras.len() {
            return Err(mismatch(format!("{} noise maps", cameras.len()), maps.len()));
        }
    }
    let (timestep, sigma) = schedule.sample(rng);
    let mut gradient = vec![Vector3::zeros(); rep.len()];
    let mut views = Vec::with_capacity(cameras.len());
    for (view, pose) in cameras.iter().enumerate() {
        let rendering = render_color(rep, intrinsics, pose, params)?;
        let (w, h) = (intrinsics.width, intrinsics.height);
        let n = match noise {
            StepNoise::Zero => ChannelMap::from_values(w, h, 3, vec![0.0; w * h * 3])?,
            StepNoise::Iid => iid_noise_map(w, h, 3, rng),
            StepNoise::Consistent(field) => field.render(intrinsics, pose)?,
            StepNoise::Maps(maps) => maps[view].clone(),
        };
        let g = gradient_map(&rendering.image, &n, sigma, denoiser, view)?;
        rendering.weights.backpropagate(&g, &mut gradient)?;
        views.push(ViewGradient {
            rendering,
            noise: n,
            gradient: g,
        });
    }
    for v in &mut gradient {
        *v = -*v;
    }
    Ok(SdsStep {
        timestep,
        sigma,
        gradient,
        views,
    })
}

/// Sum over neighbors `j` of the gradient map at view `i` computed with the
/// noise of `j` warped into `i`. Pixels without a valid warp get zero noise.
#[allow(clippy::too_many_arguments)]
pub fn multiview_warped_sds(
    z_i: &Image,
    depth_i: &DepthMap,
    intrinsics: &CameraIntrinsics,
    pose_i: &CameraPose,
    neighbors: &[(CameraPose, NoiseMap2D)],
    sigma: f64,
    denoiser: &dyn Denoiser,
    view: usize,
) -> Result<GradientMap> {
    if neighbors.is_empty() {
        return Err(invalid("neighbors", "need at least one neighbor view"));
    }
    let mut total: Option<GradientMap> = None;
    for (pose_j, n_j) in neighbors {
        let warp = compute_warp(depth_i, pose_i, pose_j, intrinsics)?;
        let warped = inverse_warp(n_j, &warp)?;
        let g = gradient_map(z_i, &warped, sigma, denoiser, view)?;
        total = Some(match total {
            None => g,
            Some(acc) => acc.add_scaled(&g, 1.0)?,
        });
    }
    Ok(total.expect("neighbors is non-empty"))
}
