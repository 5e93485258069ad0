//! Score distillation: denoisers, gradient maps, perturb-and-average scores,
//! SDS steps over a colored point cloud, and the gradient consistency loss.

mod consistency;
mod denoiser;
mod gradient;
mod render;
mod sds;

pub use consistency::{consistency_loss, consistency_loss_depth_gradient, ViewPair, NORM_EPSILON};
pub use denoiser::{
    AnalyticGaussianDenoiser, Denoiser, IdentityDenoiser, NoiseSchedule, ScheduleConfig,
};
pub use gradient::{gradient_map, iid_noise_map, paas_score, paas_score_with_noise, PaasEstimate};
pub use render::{render_color, ColorPointCloud, ColorRendering, PixelWeights, RenderParams};
pub use sds::{multiview_warped_sds, sds_step, SdsStep, StepNoise, ViewGradient};
