//! Statistical checks of per-view noise maps: pooled normality, pixel
//! independence inside a patch, and correlation between two views at
//! corresponding pixels, for the consistent noise and three 2D baselines.

pub mod stats;

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::geometry::{render_depth, CameraIntrinsics, CameraPose, PointCloud};
use crate::noising::{ConsistentNoiseField, NoisingParams, ResolvedNoising};
use crate::raster::{NoiseMap2D, PixelRect};
use crate::score::iid_noise_map;
use crate::warping::{compute_warp, inverse_warp, inverse_warp_bilinear, occlusion_mask, WarpField};
use stats::{duplicate_fraction, ks_standard_normal, Correlation, Moments};

/// Smallest sample count accepted by the analysis routines.
pub const MIN_SAMPLES: usize = 100;
/// Largest angle between the two optical axes of a cross-view analysis.
pub const MAX_SEPARATION_DEG: f64 = 30.0;
/// Significance of the per-map KS tests.
pub const KS_ALPHA: f64 = 0.01;
/// Required fraction of per-map KS tests that pass.
pub const KS_PASS_RATE: f64 = 0.95;
/// Family-wise false-alarm rate used to widen bounds checked over many entries.
pub const FAMILY_ALPHA: f64 = 1e-3;
/// Minimum corresponding-pixel correlation for the cross-view verdict.
pub const MIN_CROSSVIEW_CORRELATION: f64 = 0.3;
/// Required ratio of corresponding to non-corresponding correlation.
pub const CROSSVIEW_RATIO: f64 = 10.0;
/// Values kept for the pooled KS statistic.
const POOLED_KS_LIMIT: usize = 1 << 20;
/// Non-corresponding partners lie at least this many pixels (Chebyshev) away.
const MIN_PARTNER_DISTANCE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseStrategy {
    /// Independent noise per view.
    #[serde(rename = "random")]
    Random,
    /// Noise of view `j` warped into view `i` with bilinear sampling.
    #[serde(rename = "bilinear_warp")]
    BilinearWarp,
    /// Noise of view `j` warped into view `i` with nearest sampling.
    #[serde(rename = "nearest_warp")]
    NearestWarp,
    /// Views of one shared 3D noise field.
    #[serde(rename = "consistent_3d")]
    Consistent3d,
}

impl NoiseStrategy {
    pub const ALL: [NoiseStrategy; 4] = [
        Self::Random,
        Self::BilinearWarp,
        Self::NearestWarp,
        Self::Consistent3d,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::BilinearWarp => "bilinear_warp",
            Self::NearestWarp => "nearest_warp",
            Self::Consistent3d => "consistent_3d",
        }
    }

    fn index(&self) -> u64 {
        Self::ALL.iter().position(|s| s == self).expect("listed") as u64
    }
}

impl fmt::Display for NoiseStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for NoiseStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.id() == s)
            .ok_or_else(|| invalid("strategy", format!("unknown noise strategy `{s}`")))
    }
}

/// Square pixel region of view `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl Patch {
    /// `size x size` patch at the image center.
    pub fn centered(intrinsics: &CameraIntrinsics, size: usize) -> Result<Self> {
        let p = Self {
            x: intrinsics.width.saturating_sub(size) / 2,
            y: intrinsics.height.saturating_sub(size) / 2,
            size,
        };
        p.check(intrinsics)?;
        Ok(p)
    }

    pub fn check(&self, intrinsics: &CameraIntrinsics) -> Result<()> {
        if self.size == 0
            || self.x + self.size > intrinsics.width
            || self.y + self.size > intrinsics.height
        {
            return Err(Error::PatchOutOfBounds {
                x: self.x,
                y: self.y,
                size: self.size,
                width: intrinsics.width,
                height: intrinsics.height,
            });
        }
        Ok(())
    }

    pub fn rect(&self) -> PixelRect {
        PixelRect {
            x: self.x,
            y: self.y,
            width: self.size,
            height: self.size,
        }
    }

    fn pixel_indices(&self, width: usize) -> Vec<usize> {
        self.rect().indices(width).collect()
    }
}

/// Scene, camera pair and noising setup shared by all strategies. View `i`
/// is the one analyzed; view `j` is its neighbor.
#[derive(Debug, Clone)]
pub struct AnalysisScene {
    pub cloud: Arc<PointCloud>,
    pub intrinsics: CameraIntrinsics,
    pub pose_i: CameraPose,
    pub pose_j: CameraPose,
    pub noising: ResolvedNoising,
    pub channels: usize,
    pub occlusion_delta: f64,
}

impl AnalysisScene {
    pub fn new(
        cloud: Arc<PointCloud>,
        intrinsics: CameraIntrinsics,
        pose_i: CameraPose,
        pose_j: CameraPose,
        params: &NoisingParams,
        channels: usize,
        occlusion_delta: f64,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("channels", "must be positive"));
        }
        let noising = params.resolve(&cloud, &intrinsics)?;
        Ok(Self {
            cloud,
            intrinsics,
            pose_i,
            pose_j,
            noising,
            channels,
            occlusion_delta,
        })
    }

    /// Angle between the optical axes of the two views, in degrees.
    pub fn separation_deg(&self) -> f64 {
        let c = self.pose_i.optical_axis().dot(&self.pose_j.optical_axis());
        c.clamp(-1.0, 1.0).acos().to_degrees()
    }
}

/// Warp from `i` into `j` and the corresponding / non-corresponding pixel
/// pairs used for cross-view correlations.
struct PairGeometry {
    warp: WarpField,
    corresponding: Vec<(usize, usize)>,
    partners: Vec<(usize, usize)>,
}

impl PairGeometry {
    fn new<R: Rng + ?Sized>(scene: &AnalysisScene, rng: &mut R) -> Result<Self> {
        let k = &scene.intrinsics;
        let depth_i = render_depth(&scene.cloud, k, &scene.pose_i, scene.noising.splat_radius)?;
        let depth_j = render_depth(&scene.cloud, k, &scene.pose_j, scene.noising.splat_radius)?;
        let warp = compute_warp(&depth_i, &scene.pose_i, &scene.pose_j, k)?;
        let mask = occlusion_mask(&warp, &depth_j, scene.occlusion_delta)?;
        let corresponding: Vec<(usize, usize)> = (0..k.pixel_count())
            .filter(|&p| mask.weights()[p])
            .map(|p| (p, warp.nearest_source_index(p).expect("mask implies valid warp")))
            .collect();
        if corresponding.is_empty() {
            return Err(Error::NoCorrespondences);
        }
        let far = |a: usize, b: usize| {
            let (ax, ay) = (a % k.width, a / k.width);
            let (bx, by) = (b % k.width, b / k.width);
            ax.abs_diff(bx).max(ay.abs_diff(by)) >= MIN_PARTNER_DISTANCE
        };
        let mut partners = Vec::with_capacity(corresponding.len());
        for &(p, q) in &corresponding {
            // a pixel of view j drawn away from the correspondent of p
            for _ in 0..64 {
                let cand = rng.random_range(0..k.pixel_count());
                if far(cand, q) {
                    partners.push((p, cand));
                    break;
                }
            }
        }
        partners.shuffle(rng);
        Ok(Self {
            warp,
            corresponding,
            partners,
        })
    }
}

/// Which parts of the two views a sample needs.
#[derive(Debug, Clone, Copy)]
enum Need {
    /// Both full views.
    Both,
    /// Only the pixels of view `i` inside the patch.
    Patch(PixelRect),
}

/// Draw the noise of view `i` and, when needed, view `j` for one sample.
fn sample_pair<R: Rng + ?Sized>(
    strategy: NoiseStrategy,
    scene: &AnalysisScene,
    geom: &PairGeometry,
    need: Need,
    rng: &mut R,
) -> Result<(NoiseMap2D, Option<NoiseMap2D>)> {
    let k = &scene.intrinsics;
    let (w, h, c) = (k.width, k.height, scene.channels);
    match strategy {
        NoiseStrategy::Random => {
            let n_i = iid_noise_map(w, h, c, rng);
            let n_j = matches!(need, Need::Both).then(|| iid_noise_map(w, h, c, rng));
            Ok((n_i, n_j))
        }
        NoiseStrategy::BilinearWarp | NoiseStrategy::NearestWarp => {
            let n_j = iid_noise_map(w, h, c, rng);
            let mut n_i = if strategy == NoiseStrategy::BilinearWarp {
                inverse_warp_bilinear(&n_j, &geom.warp)?
            } else {
                inverse_warp(&n_j, &geom.warp)?
            };
            // pixels without a correspondence get fresh noise
            let fill = iid_noise_map(w, h, c, rng);
            for idx in 0..n_i.pixel_count() {
                if !n_i.coverage()[idx] {
                    n_i.at_mut(idx).copy_from_slice(fill.at(idx));
                    n_i.coverage_mut()[idx] = true;
                }
            }
            Ok((n_i, Some(n_j)))
        }
        NoiseStrategy::Consistent3d => {
            let field = ConsistentNoiseField::sample(scene.cloud.clone(), &scene.noising, c, rng)?;
            match need {
                Need::Both => Ok((
                    field.render(k, &scene.pose_i)?,
                    Some(field.render(k, &scene.pose_j)?),
                )),
                Need::Patch(rect) => Ok((field.render_region(k, &scene.pose_i, &rect)?, None)),
            }
        }
    }
}

/// Empirical covariance of the flattened patch values (pixels row by row,
/// channels interleaved) across samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchCovariance {
    pub patch: Patch,
    pub dim: usize,
    pub samples: usize,
    pub covariance: Vec<f64>,
}

impl PatchCovariance {
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.covariance[a * self.dim + b]
    }

    pub fn correlation(&self, a: usize, b: usize) -> f64 {
        self.entry(a, b) / (self.entry(a, a) * self.entry(b, b)).sqrt()
    }

    pub fn max_abs_offdiag_correlation(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..self.dim {
            for b in a + 1..self.dim {
                m = m.max(self.correlation(a, b).abs());
            }
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.entry(a, a)).collect()
    }
}

#[derive(Debug, Clone)]
struct CovarianceAccumulator {
    dim: usize,
    n: usize,
    sum: Vec<f64>,
    outer: Vec<f64>,
}

impl CovarianceAccumulator {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            sum: vec![0.0; dim],
            outer: vec![0.0; dim * dim],
        }
    }

    fn push(&mut self, v: &[f64]) {
        self.n += 1;
        for a in 0..self.dim {
            self.sum[a] += v[a];
            let row = &mut self.outer[a * self.dim..(a + 1) * self.dim];
            for b in a..self.dim {
                row[b] += v[a] * v[b];
            }
        }
    }

    fn finish(&self, patch: Patch) -> PatchCovariance {
        let n = self.n as f64;
        let mut cov = vec![0.0; self.dim * self.dim];
        for a in 0..self.dim {
            for b in a..self.dim {
                let c = (self.outer[a * self.dim + b] - self.sum[a] * self.sum[b] / n) / (n - 1.0);
                cov[a * self.dim + b] = c;
                cov[b * self.dim + a] = c;
            }
        }
        PatchCovariance {
            patch,
            dim: self.dim,
            samples: self.n,
            covariance: cov,
        }
    }
}

/// Correlations of view-`i` and view-`j` noise at corresponding pixels and
/// at randomly re-paired pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossViewCorrelation {
    pub corresponding: f64,
    pub noncorresponding: f64,
    pub pairs: usize,
}

/// Bounds used by the verdicts. They are estimator-derived: 4 standard
/// errors of each statistic, widened by a Bonferroni factor where a maximum
/// over many entries is checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_pass_rate: f64,
    pub offdiag_correlation: f64,
    pub diagonal: f64,
    pub crossview_min: f64,
    pub crossview_ratio: f64,
}

fn family_z(entries: usize) -> f64 {
    let z = Normal::standard().inverse_cdf(1.0 - FAMILY_ALPHA / (2.0 * entries.max(1) as f64));
    z.max(4.0)
}

impl Bounds {
    pub fn new(pooled_values: u64, samples: usize, patch_dim: usize) -> Self {
        let n = pooled_values as f64;
        let s = samples as f64;
        let offdiag_entries = patch_dim * patch_dim.saturating_sub(1) / 2;
        Self {
            mean: 4.0 / n.sqrt(),
            variance: 4.0 * (2.0 / n).sqrt(),
            skewness: 4.0 * (6.0 / n).sqrt(),
            excess_kurtosis: 4.0 * (24.0 / n).sqrt(),
            ks_pass_rate: KS_PASS_RATE,
            offdiag_correlation: family_z(offdiag_entries) / s.sqrt(),
            diagonal: family_z(patch_dim) * (2.0 / s).sqrt(),
            crossview_min: MIN_CROSSVIEW_CORRELATION,
            crossview_ratio: CROSSVIEW_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub strategy: NoiseStrategy,
    pub samples: usize,
    pub pooled_values: u64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub ks_values: usize,
    pub ks_pass_rate: f64,
    /// Fraction of values in a view-`i` map equal to another value of the
    /// same map, averaged over samples.
    pub duplicate_rate: f64,
    pub patch_covariance: PatchCovariance,
    pub max_offdiag_correlation: f64,
    pub min_diagonal: f64,
    pub max_diagonal: f64,
    pub crossview: CrossViewCorrelation,
    pub bounds: Bounds,
}

impl StatsReport {
    /// Standard-normal, independent pixels: every pooled statistic and patch
    /// entry within its bound, per-map KS pass rate high enough and no
    /// repeated values inside a map.
    pub fn pass_normal(&self) -> bool {
        let b = &self.bounds;
        self.mean.abs() <= b.mean
            && (self.variance - 1.0).abs() <= b.variance
            && self.skewness.abs() <= b.skewness
            && self.excess_kurtosis.abs() <= b.excess_kurtosis
            && self.ks_pass_rate >= b.ks_pass_rate
            && self.max_offdiag_correlation <= b.offdiag_correlation
            && (self.min_diagonal - 1.0).abs() <= b.diagonal
            && (self.max_diagonal - 1.0).abs() <= b.diagonal
            && self.duplicate_rate == 0.0
    }

    /// Correlated at corresponding pixels and not elsewhere.
    pub fn pass_crossview(&self) -> bool {
        let b = &self.bounds;
        self.crossview.corresponding > b.crossview_min
            && self.crossview.corresponding > b.crossview_ratio * self.crossview.noncorresponding.abs()
    }

    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let b = &self.bounds;
        vec![
            ("samples", self.samples as f64),
            ("pooled_values", self.pooled_values as f64),
            ("mean", self.mean),
            ("mean_bound", b.mean),
            ("variance", self.variance),
            ("variance_bound", b.variance),
            ("skewness", self.skewness),
            ("skewness_bound", b.skewness),
            ("excess_kurtosis", self.excess_kurtosis),
            ("excess_kurtosis_bound", b.excess_kurtosis),
            ("ks_statistic", self.ks_statistic),
            ("ks_p_value", self.ks_p_value),
            ("ks_pass_rate", self.ks_pass_rate),
            ("duplicate_rate", self.duplicate_rate),
            ("max_offdiag_correlation", self.max_offdiag_correlation),
            ("offdiag_bound", b.offdiag_correlation),
            ("min_diagonal", self.min_diagonal),
            ("max_diagonal", self.max_diagonal),
            ("diagonal_bound", b.diagonal),
            ("corresponding_correlation", self.crossview.corresponding),
            ("noncorresponding_correlation", self.crossview.noncorresponding),
            ("correspondence_pairs", self.crossview.pairs as f64),
            ("pass_normal", f64::from(u8::from(self.pass_normal()))),
            ("pass_crossview", f64::from(u8::from(self.pass_crossview()))),
        ]
    }
}

fn check_samples(num_samples: usize) -> Result<()> {
    if num_samples < MIN_SAMPLES {
        return Err(invalid(
            "num_samples",
            format!("must be at least {MIN_SAMPLES}"),
        ));
    }
    Ok(())
}

fn check_separation(scene: &AnalysisScene) -> Result<()> {
    if scene.separation_deg() > MAX_SEPARATION_DEG + 1e-9 {
        return Err(invalid(
            "poses",
            format!("views must be within {MAX_SEPARATION_DEG} degrees"),
        ));
    }
    Ok(())
}

struct Accumulators {
    moments: Moments,
    pooled: Vec<f64>,
    ks_passed: usize,
    duplicates: f64,
    covariance: CovarianceAccumulator,
    corresponding: Correlation,
    noncorresponding: Correlation,
}

/// Run `num_samples` draws of `strategy` and gather every statistic.
fn run<R: Rng + ?Sized>(
    strategy: NoiseStrategy,
    scene: &AnalysisScene,
    patch: Patch,
    num_samples: usize,
    rng: &mut R,
) -> Result<StatsReport> {
    check_samples(num_samples)?;
    check_separation(scene)?;
    patch.check(&scene.intrinsics)?;
    let geom = PairGeometry::new(scene, rng)?;
    let c = scene.channels;
    let patch_pixels = patch.pixel_indices(scene.intrinsics.width);
    let dim = patch_pixels.len() * c;
    let mut acc = Accumulators {
        moments: Moments::default(),
        pooled: Vec::new(),
        ks_passed: 0,
        duplicates: 0.0,
        covariance: CovarianceAccumulator::new(dim),
        corresponding: Correlation::default(),
        noncorresponding: Correlation::default(),
    };
    let mut patch_values = vec![0.0; dim];
    let mut sorted = Vec::new();
    for _ in 0..num_samples {
        let (n_i, n_j) = sample_pair(strategy, scene, &geom, Need::Both, rng)?;
        let n_j = n_j.expect("both views requested");
        let values = n_i.values();
        acc.moments.extend(values);
        if acc.pooled.len() < POOLED_KS_LIMIT {
            let room = POOLED_KS_LIMIT - acc.pooled.len();
            acc.pooled.extend_from_slice(&values[..values.len().min(room)]);
        }
        sorted.clear();
        sorted.extend_from_slice(values);
        if ks_standard_normal(&mut sorted).p_value >= KS_ALPHA {
            acc.ks_passed += 1;
        }
        acc.duplicates += duplicate_fraction(&sorted);
        for (slot, &idx) in patch_pixels.iter().enumerate() {
            patch_values[slot * c..(slot + 1) * c].copy_from_slice(n_i.at(idx));
        }
        acc.covariance.push(&patch_values);
        for &(p, q) in &geom.corresponding {
            for ch in 0..c {
                acc.corresponding.push(n_i.at(p)[ch], n_j.at(q)[ch]);
            }
        }
        for &(p, q) in &geom.partners {
            for ch in 0..c {
                acc.noncorresponding.push(n_i.at(p)[ch], n_j.at(q)[ch]);
            }
        }
    }
    let pooled_ks = ks_standard_normal(&mut acc.pooled);
    let cov = acc.covariance.finish(patch);
    let diag = cov.diagonal();
    let bounds = Bounds::new(acc.moments.count(), num_samples, dim);
    Ok(StatsReport {
        strategy,
        samples: num_samples,
        pooled_values: acc.moments.count(),
        mean: acc.moments.mean(),
        variance: acc.moments.variance(),
        skewness: acc.moments.skewness(),
        excess_kurtosis: acc.moments.excess_kurtosis(),
        ks_statistic: pooled_ks.statistic,
        ks_p_value: pooled_ks.p_value,
        ks_values: acc.pooled.len(),
        ks_pass_rate: acc.ks_passed as f64 / num_samples as f64,
        duplicate_rate: acc.duplicates / num_samples as f64,
        max_offdiag_correlation: cov.max_abs_offdiag_correlation(),
        min_diagonal: diag.iter().cloned().fold(f64::INFINITY, f64::min),
        max_diagonal: diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        patch_covariance: cov,
        crossview: CrossViewCorrelation {
            corresponding: acc.corresponding.value(),
            noncorresponding: acc.noncorresponding.value(),
            pairs: geom.corresponding.len(),
        },
        bounds,
    })
}

/// Patch covariance of view-`i` noise across `num_samples` draws.
pub fn covariance_diag<R: Rng + ?Sized>(
    strategy: NoiseStrategy,
    scene: &AnalysisScene,
    patch: Patch,
    num_samples: usize,
    rng: &mut R,
) -> Result<PatchCovariance> {
    check_samples(num_samples)?;
    patch.check(&scene.intrinsics)?;
    let geom = PairGeometry::new(scene, rng)?;
    let c = scene.channels;
    let pixels = patch.pixel_indices(scene.intrinsics.width);
    let mut acc = CovarianceAccumulator::new(pixels.len() * c);
    let mut v = vec![0.0; pixels.len() * c];
    for _ in 0..num_samples {
        let (n_i, _) = sample_pair(strategy, scene, &geom, Need::Patch(patch.rect()), rng)?;
        for (slot, &idx) in pixels.iter().enumerate() {
            v[slot * c..(slot + 1) * c].copy_from_slice(n_i.at(idx));
        }
        acc.push(&v);
    }
    Ok(acc.finish(patch))
}

/// Correlation between the two views' noise at corresponding pixels (mask
/// 1 only) and at randomly re-paired pixels.
pub fn cross_covariance<R: Rng + ?Sized>(
    strategy: NoiseStrategy,
    scene: &AnalysisScene,
    num_samples: usize,
    rng: &mut R,
) -> Result<CrossViewCorrelation> {
    check_samples(num_samples)?;
    check_separation(scene)?;
    let geom = PairGeometry::new(scene, rng)?;
    let mut corr = Correlation::default();
    let mut non = Correlation::default();
    for _ in 0..num_samples {
        let (n_i, n_j) = sample_pair(strategy, scene, &geom, Need::Both, rng)?;
        let n_j = n_j.expect("both views requested");
        for ch in 0..scene.channels {
            for &(p, q) in &geom.corresponding {
                corr.push(n_i.at(p)[ch], n_j.at(q)[ch]);
            }
            for &(p, q) in &geom.partners {
                non.push(n_i.at(p)[ch], n_j.at(q)[ch]);
            }
        }
    }
    Ok(CrossViewCorrelation {
        corresponding: corr.value(),
        noncorresponding: non.value(),
        pairs: geom.corresponding.len(),
    })
}

/// Every statistic of [`StatsReport`] for one strategy.
pub fn normality_report<R: Rng + ?Sized>(
    strategy: NoiseStrategy,
    scene: &AnalysisScene,
    patch: Patch,
    num_samples: usize,
    rng: &mut R,
) -> Result<StatsReport> {
    run(strategy, scene, patch, num_samples, rng)
}

/// One report per requested strategy. Each strategy draws from its own
/// ChaCha stream of `seed`, so a row does not depend on which other
/// strategies were requested.
pub fn strategy_comparison(
    scene: &AnalysisScene,
    patch: Patch,
    strategies: &[NoiseStrategy],
    num_samples: usize,
    seed: u64,
) -> Result<Vec<StatsReport>> {
    strategies
        .iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s.index());
            run(s, scene, patch, num_samples, &mut rng)
        })
        .collect()
}

/// Whether `consistent_3d` is the only strategy passing both verdicts.
pub fn consistent_is_unique_winner(reports: &[StatsReport]) -> bool {
    let winners: Vec<_> = reports
        .iter()
        .filter(|r| r.pass_normal() && r.pass_crossview())
        .map(|r| r.strategy)
        .collect();
    winners == [NoiseStrategy::Consistent3d]
}

/// `strategy,metric,value` rows, one per strategy and metric.
pub fn reports_csv(reports: &[StatsReport]) -> String {
    let mut out = String::from("strategy,metric,value\n");
    for r in reports {
        for (name, value) in r.metrics() {
            let _ = writeln!(out, "{},{},{}", r.strategy, name, value);
        }
    }
    out
}

/// Human-readable summary with one block per strategy.
pub fn reports_summary(reports: &[StatsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "bounds are estimator-derived (4 standard errors, Bonferroni-widened for patch maxima)"
    );
    for r in reports {
        let _ = writeln!(out, "[{}]", r.strategy);
        let _ = writeln!(out, "  samples            {}", r.samples);
        let _ = writeln!(
            out,
            "  mean / variance    {:.6} / {:.6}",
            r.mean, r.variance
        );
        let _ = writeln!(
            out,
            "  skew / ex.kurtosis {:.6} / {:.6}",
            r.skewness, r.excess_kurtosis
        );
        let _ = writeln!(
            out,
            "  KS D / p / pass    {:.6} / {:.4} / {:.3}",
            r.ks_statistic, r.ks_p_value, r.ks_pass_rate
        );
        let _ = writeln!(out, "  duplicate rate     {:.6}", r.duplicate_rate);
        let _ = writeln!(
            out,
            "  patch max |rho|    {:.4} (bound {:.4})",
            r.max_offdiag_correlation, r.bounds.offdiag_correlation
        );
        let _ = writeln!(
            out,
            "  patch diag range   [{:.4}, {:.4}]",
            r.min_diagonal, r.max_diagonal
        );
        let _ = writeln!(
            out,
            "  cross-view rho     {:.4} corresponding, {:.4} elsewhere ({} pairs)",
            r.crossview.corresponding, r.crossview.noncorresponding, r.crossview.pairs
        );
        let _ = writeln!(
            out,
            "  verdict            normal={} crossview={}",
            r.pass_normal(),
            r.pass_crossview()
        );
    }
    out
}
