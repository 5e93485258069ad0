use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::raster::Image;

/// Noise levels indexed by timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            sigma_min: 0.1,
            sigma_max: 2.0,
            steps: 1000,
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(invalid("schedule", "must contain at least one noise level"));
        }
        if !sigmas.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(invalid("schedule", "noise levels must be positive and finite"));
        }
        Ok(Self { sigmas })
    }

    /// `steps` levels spaced evenly in `log(sigma)` from `min` to `max`.
    pub fn log_uniform(min: f64, max: f64, steps: usize) -> Result<Self> {
        if !(min > 0.0 && max >= min && max.is_finite()) {
            return Err(invalid("schedule", "need 0 < sigma_min <= sigma_max"));
        }
        if steps == 0 {
            return Err(invalid("schedule", "steps must be positive"));
        }
        let (a, b) = (min.ln(), max.ln());
        let sigmas = (0..steps)
            .map(|t| {
                if steps == 1 {
                    min
                } else {
                    (a + (b - a) * t as f64 / (steps - 1) as f64).exp()
                }
            })
            .collect();
        Self::new(sigmas)
    }

    pub fn from_config(config: &ScheduleConfig) -> Result<Self> {
        Self::log_uniform(config.sigma_min, config.sigma_max, config.steps)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    /// Uniformly drawn timestep and its noise level.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let t = rng.random_range(0..self.sigmas.len());
        (t, self.sigmas[t])
    }
}

/// A denoiser `D(x; sigma)` for images rendered from a given view.
///
/// `view` identifies the camera the image was rendered from and plays the
/// role of the conditioning input.
pub trait Denoiser {
    fn denoise(&self, noisy: &Image, sigma: f64, view: usize) -> Result<Image>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, noisy: &Image, _sigma: f64, _view: usize) -> Result<Image> {
        Ok(noisy.clone())
    }
}

/// Optimal denoiser for the image prior `N(target[view], s^2 I)`:
/// `D(x) = x + sigma^2 (target - x) / (s^2 + sigma^2)`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDenoiser {
    targets: Vec<Image>,
    prior_std: f64,
}

impl AnalyticGaussianDenoiser {
    pub fn new(targets: Vec<Image>, prior_std: f64) -> Result<Self> {
        if !(prior_std > 0.0 && prior_std.is_finite()) {
            return Err(invalid("prior_std", "must be positive and finite"));
        }
        if targets.is_empty() {
            return Err(invalid("targets", "need at least one target image"));
        }
        if !targets.iter().all(Image::is_finite) {
            return Err(invalid("targets", "must be finite"));
        }
        Ok(Self { targets, prior_std })
    }

    pub fn targets(&self) -> &[Image] {
        &self.targets
    }

    pub fn target(&self, view: usize) -> Result<&Image> {
        self.targets
            .get(view)
            .ok_or_else(|| invalid("view", format!("no target for view {view}")))
    }

    pub fn prior_std(&self) -> f64 {
        self.prior_std
    }

    /// `s^2 + sigma^2`.
    pub fn total_variance(&self, sigma: f64) -> f64 {
        self.prior_std * self.prior_std + sigma * sigma
    }
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn denoise(&self, noisy: &Image, sigma: f64, view: usize) -> Result<Image> {
        let target = self.target(view)?;
        noisy.check_same_shape(target)?;
        let k = sigma * sigma / self.total_variance(sigma);
        let mut out = noisy.clone();
        for (o, t) in out.values_mut().iter_mut().zip(target.values()) {
            *o += k * (t - *o);
        }
        Ok(out)
    }
}
