use rand::Rng;
use rand_distr::StandardNormal;

use super::Denoiser;
use crate::error::{invalid, Result};
use crate::raster::{ChannelMap, GradientMap, Image, NoiseMap2D};

/// Fully covered map of i.i.d. standard normals.
pub fn iid_noise_map<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    channels: usize,
    rng: &mut R,
) -> NoiseMap2D {
    let values = (0..width * height * channels)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    ChannelMap::from_values(width, height, channels, values).expect("sizes agree")
}

/// Score estimate `g = (D(z + sigma n; sigma) - (z + sigma n)) / sigma^2`.
/// Coverage is taken from `z`.
pub fn gradient_map(
    z: &Image,
    n: &NoiseMap2D,
    sigma: f64,
    denoiser: &dyn Denoiser,
    view: usize,
) -> Result<GradientMap> {
    z.check_same_shape(n)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", "must be positive and finite"));
    }
    let noisy = z.add_scaled(n, sigma)?;
    let denoised = denoiser.denoise(&noisy, sigma, view)?;
    noisy.check_same_shape(&denoised)?;
    let inv = 1.0 / (sigma * sigma);
    let mut g = denoised.add_scaled(&noisy, -1.0)?.map(|v| v * inv);
    g.coverage_mut().copy_from_slice(z.coverage());
    Ok(g)
}

/// Monte-Carlo estimate of the expected gradient map and the standard error
/// of each entry.
#[derive(Debug, Clone)]
pub struct PaasEstimate {
    pub mean: GradientMap,
    pub std_error: ChannelMap,
    pub samples: usize,
}

/// Average [`gradient_map`] over the given noise maps.
pub fn paas_score_with_noise(
    z: &Image,
    sigma: f64,
    denoiser: &dyn Denoiser,
    view: usize,
    noises: impl IntoIterator<Item = NoiseMap2D>,
) -> Result<PaasEstimate> {
    let len = z.values().len();
    let mut sum = vec![0.0; len];
    let mut sum_sq = vec![0.0; len];
    let mut samples = 0usize;
    for n in noises {
        let g = gradient_map(z, &n, sigma, denoiser, view)?;
        for ((s, q), v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(g.values()) {
            *s += v;
            *q += v * v;
        }
        samples += 1;
    }
    if samples == 0 {
        return Err(invalid("num_samples", "must be at least 1"));
    }
    let k = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let std_error = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            if samples < 2 {
                return 0.0;
            }
            let var = ((q - k * m * m) / (k - 1.0)).max(0.0);
            (var / k).sqrt()
        })
        .collect();
    let (w, h, c) = (z.width(), z.height(), z.channels());
    Ok(PaasEstimate {
        mean: ChannelMap::from_values(w, h, c, mean)?.with_coverage(z.coverage().to_vec())?,
        std_error: ChannelMap::from_values(w, h, c, std_error)?,
        samples,
    })
}

/// Perturb-and-average score: mean of `num_samples` gradient maps under
/// i.i.d. standard-normal noise.
pub fn paas_score<R: Rng + ?Sized>(
    z: &Image,
    sigma: f64,
    denoiser: &dyn Denoiser,
    view: usize,
    num_samples: usize,
    rng: &mut R,
) -> Result<PaasEstimate> {
    if num_samples == 0 {
        return Err(invalid("num_samples", "must be at least 1"));
    }
    let (w, h, c) = (z.width(), z.height(), z.channels());
    let noises = (0..num_samples).map(|_| iid_noise_map(w, h, c, rng));
    paas_score_with_noise(z, sigma, denoiser, view, noises)
}
