//! Closed-loop score distillation on a colored point cloud with fixed
//! positions. Targets are renders of a reference coloring, the denoiser is
//! the analytic Gaussian one, and each iteration takes one preconditioned
//! step along the SDS gradient summed over all cameras.
//!
//! The consistency loss is evaluated on every configured view pair and its
//! depth gradient is reported, but depth is fixed here (only colors are
//! optimized), so it does not change the update.

use std::time::Instant;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::geometry::{sample_hemisphere_pose, CameraIntrinsics, CameraPose, DepthMap, PointCloud};
use crate::noising::{ConsistentNoiseField, NoisingParams, ResolvedNoising};
use crate::raster::{GradientMap, Image, NoiseMap2D};
use crate::score::{
    consistency_loss_depth_gradient, iid_noise_map, render_color, sds_step, AnalyticGaussianDenoiser,
    ColorPointCloud, NoiseSchedule, PixelWeights, RenderParams, StepNoise, ViewPair,
};
use crate::warping::{compute_warp, occlusion_mask, OcclusionMask, DEFAULT_OCCLUSION_DELTA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisingMode {
    /// One 3D noise field per iteration shared by all cameras.
    Consistent,
    /// Independent noise maps per camera.
    Iid,
}

impl NoisingMode {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Consistent => "consistent",
            Self::Iid => "iid",
        }
    }
}

impl std::str::FromStr for NoisingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(Self::Consistent),
            "iid" => Ok(Self::Iid),
            _ => Err(invalid("strategy", format!("unknown noising strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub iterations: usize,
    /// Step size at iteration 0; the step at iteration `t` is
    /// `learning_rate / (1 + lr_decay * t)`.
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Weight of the consistency loss in the reported total.
    pub lambda_sim: f64,
    pub strategy: NoisingMode,
    /// Reuse the first iteration's noise for every iteration.
    pub hold_noise_field: bool,
    /// Prior std `s` of the analytic denoiser.
    pub prior_std: f64,
    /// Mean absolute per-pixel color error counted as converged.
    pub loss_threshold: f64,
    /// Finite-difference step for the consistency-loss depth gradient.
    pub depth_fd_step: f64,
    pub occlusion_delta: f64,
    /// Fill the wall-time column of the trace. Off by default so traces are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            learning_rate: 0.5,
            lr_decay: 0.1,
            lambda_sim: 1.0,
            strategy: NoisingMode::Consistent,
            hold_noise_field: false,
            prior_std: 0.5,
            loss_threshold: 0.05,
            depth_fd_step: 1e-3,
            occlusion_delta: DEFAULT_OCCLUSION_DELTA,
            record_wall_time: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.learning_rate) {
            return Err(invalid("learning_rate", "must be positive and finite"));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return Err(invalid("lr_decay", "must be non-negative and finite"));
        }
        if !(self.lambda_sim >= 0.0 && self.lambda_sim.is_finite()) {
            return Err(invalid("lambda_sim", "must be non-negative and finite"));
        }
        if !positive(self.prior_std) {
            return Err(invalid("prior_std", "must be positive and finite"));
        }
        if !positive(self.loss_threshold) {
            return Err(invalid("loss_threshold", "must be positive and finite"));
        }
        if !positive(self.depth_fd_step) {
            return Err(invalid("depth_fd_step", "must be positive and finite"));
        }
        if !(self.occlusion_delta >= 0.0 && self.occlusion_delta.is_finite()) {
            return Err(invalid("occlusion_delta", "must be non-negative and finite"));
        }
        Ok(())
    }

    pub fn step_size(&self, iteration: usize) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * iteration as f64)
    }
}

/// `anchors` cameras evenly spaced in azimuth, each followed by a neighbor
/// `separation_deg` further in azimuth. Returns the poses and the
/// `(anchor, neighbor)` index pairs.
pub fn anchor_neighbor_poses(
    anchors: usize,
    elevation_deg: f64,
    separation_deg: f64,
    radius: f64,
    target: Vector3<f64>,
) -> Result<(Vec<CameraPose>, Vec<(usize, usize)>)> {
    if anchors == 0 {
        return Err(invalid("anchors", "must be positive"));
    }
    let mut poses = Vec::with_capacity(2 * anchors);
    let mut pairs = Vec::with_capacity(anchors);
    for a in 0..anchors {
        let az = 360.0 * a as f64 / anchors as f64;
        for offset in [0.0, separation_deg] {
            poses.push(sample_hemisphere_pose(
                (az + offset).to_radians(),
                elevation_deg.to_radians(),
                radius,
                target,
            )?);
        }
        pairs.push((2 * a, 2 * a + 1));
    }
    Ok((poses, pairs))
}

/// Smooth coloring of a cloud with every channel in `[0.1, 0.9]`.
pub fn reference_colors(cloud: &PointCloud) -> Vec<Vector3<f64>> {
    cloud
        .positions()
        .iter()
        .map(|p| {
            Vector3::new(
                0.5 + 0.4 * (2.0 * p.x + 1.0).sin(),
                0.5 + 0.4 * (2.5 * p.y - 0.5).sin(),
                0.5 + 0.4 * (1.5 * p.z + 0.3).cos(),
            )
        })
        .collect()
}

/// Targets, render weights and view-pair masks of one toy problem.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<CameraPose>,
    pub pairs: Vec<(usize, usize)>,
    pub render: RenderParams,
    pub noising: ResolvedNoising,
    pub reference: ColorPointCloud,
    pub targets: Vec<Image>,
    weights: Vec<PixelWeights>,
    depths: Vec<DepthMap>,
    point_totals: Vec<f64>,
}

impl ToyProblem {
    pub fn new(
        reference: ColorPointCloud,
        intrinsics: CameraIntrinsics,
        poses: Vec<CameraPose>,
        pairs: Vec<(usize, usize)>,
        render: RenderParams,
        noising: &NoisingParams,
    ) -> Result<Self> {
        if poses.is_empty() {
            return Err(invalid("cameras", "need at least one camera"));
        }
        if let Some(&(i, j)) = pairs.iter().find(|(i, j)| *i >= poses.len() || *j >= poses.len()) {
            return Err(invalid("pairs", format!("pair ({i}, {j}) names a missing camera")));
        }
        let noising = noising.resolve(reference.cloud(), &intrinsics)?;
        let mut targets = Vec::with_capacity(poses.len());
        let mut weights = Vec::with_capacity(poses.len());
        let mut depths = Vec::with_capacity(poses.len());
        let mut point_totals = vec![0.0; reference.len()];
        for pose in &poses {
            let r = render_color(&reference, &intrinsics, pose, &render)?;
            for (t, w) in point_totals.iter_mut().zip(r.weights.point_totals(reference.len())) {
                *t += w;
            }
            targets.push(r.image);
            weights.push(r.weights);
            depths.push(r.depth);
        }
        Ok(Self {
            intrinsics,
            poses,
            pairs,
            render,
            noising,
            reference,
            targets,
            weights,
            depths,
            point_totals,
        })
    }

    pub fn cloud(&self) -> &std::sync::Arc<PointCloud> {
        self.reference.cloud()
    }

    /// Mean absolute error per covered pixel and channel for each view, and
    /// over all views together.
    pub fn color_error(&self, colors: &[Vector3<f64>]) -> Result<(Vec<f64>, f64)> {
        if colors.len() != self.reference.len() {
            return Err(mismatch(self.reference.len(), colors.len()));
        }
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let mut per_view = Vec::with_capacity(self.poses.len());
        let (mut total, mut count) = (0.0, 0usize);
        for (weights, target) in self.weights.iter().zip(&self.targets) {
            let z = weights.shade(colors, w, h)?;
            let (mut sum, mut n) = (0.0, 0usize);
            for idx in 0..z.pixel_count() {
                if !target.coverage()[idx] {
                    continue;
                }
                for (a, b) in z.at(idx).iter().zip(target.at(idx)) {
                    sum += (a - b).abs();
                    n += 1;
                }
            }
            per_view.push(if n > 0 { sum / n as f64 } else { 0.0 });
            total += sum;
            count += n;
        }
        Ok((per_view, if count > 0 { total / count as f64 } else { 0.0 }))
    }

    fn masks(&self, delta: f64) -> Result<Vec<OcclusionMask>> {
        self.pairs
            .iter()
            .map(|&(i, j)| {
                let warp = compute_warp(&self.depths[i], &self.poses[i], &self.poses[j], &self.intrinsics)?;
                occlusion_mask(&warp, &self.depths[j], delta)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub sigma: f64,
    pub step_size: f64,
    /// Color error of each view after the update.
    pub view_losses: Vec<f64>,
    pub mean_loss: f64,
    /// `lambda_sim` times the summed consistency loss of the view pairs,
    /// computed on this iteration's gradient maps.
    pub l_sim: f64,
    pub sds_grad_norm: f64,
    pub depth_grad_norm: f64,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub initial_loss: f64,
    pub trace: Vec<TraceRow>,
    pub result: ColorPointCloud,
    /// First iteration after which the mean loss is at or below the
    /// threshold; 0 when the initial colors already are.
    pub iterations_to_threshold: Option<usize>,
    pub final_loss: f64,
}

enum HeldNoise {
    None,
    Field(ConsistentNoiseField),
    Maps(Vec<NoiseMap2D>),
}

fn check_finite(values: &[Vector3<f64>], iteration: usize, what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.iter().all(|x| x.is_finite())) {
        Ok(())
    } else {
        Err(Error::NumericalDivergence { iteration, what })
    }
}

fn pair_terms(
    problem: &ToyProblem,
    masks: &[OcclusionMask],
    gradients: &[&GradientMap],
    h: f64,
) -> Result<(f64, f64)> {
    let (mut loss, mut grad_sq) = (0.0, 0.0);
    for (&(i, j), mask) in problem.pairs.iter().zip(masks) {
        let pair = ViewPair {
            intrinsics: &problem.intrinsics,
            pose_i: &problem.poses[i],
            pose_j: &problem.poses[j],
            depth_i: &problem.depths[i],
            g_i: gradients[i],
            g_j: gradients[j],
            mask,
        };
        loss += pair.loss()?;
        let g = consistency_loss_depth_gradient(&pair, h)?;
        grad_sq += g.values().iter().map(|v| v * v).sum::<f64>();
    }
    Ok((loss, grad_sq.sqrt()))
}

/// Run the loop from `initial` for `config.iterations` iterations.
///
/// Each point moves by `step * (s^2 + sigma^2) * G_k / W_k`, where `G_k` is
/// its SDS gradient and `W_k` its total render weight over all cameras.
/// With zero noise and step 1 this jumps to the weighted least-squares
/// color of an isolated point.
pub fn optimize<R: Rng + ?Sized>(
    problem: &ToyProblem,
    initial: &ColorPointCloud,
    config: &OptimizerConfig,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<OptimizationRun> {
    config.validate()?;
    if initial.cloud() != problem.cloud() && initial.cloud().positions() != problem.cloud().positions() {
        return Err(invalid("initial", "must share the problem's point positions"));
    }
    let denoiser = AnalyticGaussianDenoiser::new(problem.targets.clone(), config.prior_std)?;
    let masks = if config.lambda_sim > 0.0 {
        problem.masks(config.occlusion_delta)?
    } else {
        Vec::new()
    };
    let k = &problem.intrinsics;
    let mut rep = initial.clone();
    let (_, initial_loss) = problem.color_error(rep.colors())?;
    let mut reached = (initial_loss <= config.loss_threshold).then_some(0);
    let mut trace = Vec::with_capacity(config.iterations);
    let mut held = HeldNoise::None;
    let mut final_loss = initial_loss;
    let s2 = config.prior_std * config.prior_std;
    let start = Instant::now();

    for iteration in 1..=config.iterations {
        let fresh_field;
        let fresh_maps;
        let noise = match (config.strategy, config.hold_noise_field) {
            (NoisingMode::Consistent, false) => {
                fresh_field = ConsistentNoiseField::sample(problem.cloud().clone(), &problem.noising, 3, rng)?;
                StepNoise::Consistent(&fresh_field)
            }
            (NoisingMode::Iid, false) => StepNoise::Iid,
            (NoisingMode::Consistent, true) => {
                if matches!(held, HeldNoise::None) {
                    held = HeldNoise::Field(ConsistentNoiseField::sample(
                        problem.cloud().clone(),
                        &problem.noising,
                        3,
                        rng,
                    )?);
                }
                match &held {
                    HeldNoise::Field(f) => StepNoise::Consistent(f),
                    _ => unreachable!("held field was just set"),
                }
            }
            (NoisingMode::Iid, true) => {
                if matches!(held, HeldNoise::None) {
                    fresh_maps = (0..problem.poses.len())
                        .map(|_| iid_noise_map(k.width, k.height, 3, rng))
                        .collect();
                    held = HeldNoise::Maps(fresh_maps);
                }
                match &held {
                    HeldNoise::Maps(m) => StepNoise::Maps(m),
                    _ => unreachable!("held maps were just set"),
                }
            }
        };
        let step = sds_step(
            &rep,
            k,
            &problem.poses,
            schedule,
            &denoiser,
            noise,
            &problem.render,
            rng,
        )?;
        check_finite(&step.gradient, iteration, "SDS gradient")?;
        let (l_sim, depth_grad_norm) = if config.lambda_sim > 0.0 {
            let gradients: Vec<&GradientMap> = step.views.iter().map(|v| &v.gradient).collect();
            let (l, g) = pair_terms(problem, &masks, &gradients, config.depth_fd_step)?;
            (config.lambda_sim * l, config.lambda_sim * g)
        } else {
            (0.0, 0.0)
        };
        if !l_sim.is_finite() || !depth_grad_norm.is_finite() {
            return Err(Error::NumericalDivergence {
                iteration,
                what: "consistency loss",
            });
        }

        let step_size = config.step_size(iteration - 1);
        let scale = step_size * (s2 + step.sigma * step.sigma);
        let colors: Vec<Vector3<f64>> = rep
            .colors()
            .iter()
            .zip(&step.gradient)
            .zip(&problem.point_totals)
            .map(|((c, g), &w)| if w > 0.0 { c - g * (scale / w) } else { *c })
            .collect();
        check_finite(&colors, iteration, "colors")?;
        rep.set_colors(colors)?;

        let (view_losses, mean_loss) = problem.color_error(rep.colors())?;
        if !mean_loss.is_finite() {
            return Err(Error::NumericalDivergence {
                iteration,
                what: "color loss",
            });
        }
        if reached.is_none() && mean_loss <= config.loss_threshold {
            reached = Some(iteration);
        }
        final_loss = mean_loss;
        trace.push(TraceRow {
            iteration,
            sigma: step.sigma,
            step_size,
            view_losses,
            mean_loss,
            l_sim,
            sds_grad_norm: step.gradient.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt(),
            depth_grad_norm,
            wall_time: config.record_wall_time.then(|| start.elapsed().as_secs_f64()),
        });
    }

    Ok(OptimizationRun {
        initial_loss,
        trace,
        result: rep,
        iterations_to_threshold: reached,
        final_loss,
    })
}

/// Trace as CSV with one `loss_view_<v>` column per camera.
pub fn trace_csv(trace: &[TraceRow], views: usize) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("iteration,sigma,step_size");
    for v in 0..views {
        let _ = write!(out, ",loss_view_{v}");
    }
    out.push_str(",loss_mean,l_sim,sds_grad_norm,depth_grad_norm,wall_time\n");
    for r in trace {
        let _ = write!(out, "{},{},{}", r.iteration, r.sigma, r.step_size);
        for l in &r.view_losses {
            let _ = write!(out, ",{l}");
        }
        let _ = write!(
            out,
            ",{},{},{},{},",
            r.mean_loss, r.l_sim, r.sds_grad_norm, r.depth_grad_norm
        );
        if let Some(t) = r.wall_time {
            let _ = write!(out, "{t}");
        }
        out.push('\n');
    }
    out
}
