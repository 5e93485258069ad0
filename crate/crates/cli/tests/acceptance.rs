//! Acceptance run: one line per criterion, exit status 1 if any asserted
//! criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gsd_cli::checks::{homography_check, identity_check, round_trip_check};
use gsd_core::analysis::stats::{ks_standard_normal, Moments};
use gsd_core::analysis::{covariance_diag, cross_covariance, AnalysisScene, NoiseStrategy, Patch};
use gsd_core::geometry::{
    render_depth, sample_hemisphere_pose, unproject, CameraIntrinsics, CameraPose, PointCloud,
};
use gsd_core::noising::{conditional_upsample, consistent_noise_map, sample_noise_field, NoisingParams};
use gsd_core::optimize::{
    anchor_neighbor_poses, optimize, reference_colors, NoisingMode, OptimizerConfig, ToyProblem,
};
use gsd_core::raster::ChannelMap;
use gsd_core::scenes::{
    default_intrinsics, SyntheticScene, DEFAULT_RADIUS, OCCLUDER_HALF_EXTENT, OCCLUDER_OFFSET,
};
use gsd_core::score::{
    consistency_loss, consistency_loss_depth_gradient, paas_score, render_color, sds_step,
    AnalyticGaussianDenoiser, ColorPointCloud, NoiseSchedule, RenderParams, ScheduleConfig,
    StepNoise, ViewPair,
};
use gsd_core::warping::{compute_warp, inverse_warp_bilinear, occlusion_mask, OcclusionMask};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every tolerance, sample count and time limit used below.
mod tol {
    pub const NORMAL_RUNS: usize = 250;
    pub const NORMAL_MEAN: f64 = 0.005;
    pub const NORMAL_VARIANCE: f64 = 0.01;
    pub const NORMAL_KURTOSIS: f64 = 0.05;
    pub const KS_ALPHA: f64 = 0.01;
    pub const KS_PASS_RATE: f64 = 0.95;
    pub const UPSAMPLE_N: usize = 9;

    pub const COVARIANCE_SAMPLES: usize = 5000;
    pub const PATCH_SIZE: usize = 8;
    pub const MAX_OFFDIAG_RHO: f64 = 0.06;
    pub const BILINEAR_MIN_RHO: f64 = 0.1;
    pub const BILINEAR_MAX_DIAGONAL: f64 = 0.9;

    pub const CROSSVIEW_SAMPLES: usize = 500;
    pub const SEPARATION_DEG: f64 = 5.0;
    pub const MIN_CORRESPONDING: f64 = 0.3;
    pub const CORRESPONDING_RATIO: f64 = 10.0;
    /// Random-strategy correlation bound in units of `1/sqrt(samples)`.
    pub const RANDOM_SE_MULTIPLE: f64 = 4.0;

    pub const PARENTS: usize = 100_000;
    /// Relative to `max(|parent|, 1)`.
    pub const RECONSTRUCTION_REL: f64 = 1e-6;

    pub const IDENTITY_PX: f64 = 1e-6;
    pub const HOMOGRAPHY_PX: f64 = 1e-4;
    pub const ROUND_TRIP_PX: f64 = 1.0;

    pub const OCCLUSION_BASELINE_DEG: f64 = 10.0;
    pub const OCCLUSION_AREA_REL: f64 = 0.15;
    pub const OCCLUSION_DELTAS: [f64; 3] = [0.01, 0.05, 0.1];

    pub const PAAS_SAMPLES: usize = 1000;
    pub const PAAS_SE: f64 = 4.0;
    pub const SDS_POINTS: usize = 50;
    pub const SDS_FD_STEP: f64 = 1e-5;
    pub const SDS_MAX_REL: f64 = 1e-4;

    pub const LOSS_ZERO: f64 = 1e-12;
    pub const LOSS_ANTIPODAL: f64 = 1e-9;
    pub const LOSS_SCALE: f64 = 1e-10;
    pub const RICHARDSON_RATIO: f64 = 4.0;
    pub const RICHARDSON_MEDIAN_TOL: f64 = 0.1;

    pub const TOY_POINTS: usize = 500;
    pub const TOY_ANCHORS: usize = 4;
    pub const TOY_SEEDS: u64 = 10;
    pub const TOY_ITERATIONS: usize = 100;
    pub const TOY_FINAL_ERROR: f64 = 0.05;

    pub const LIMIT_1: u64 = 120;
    pub const LIMIT_2: u64 = 300;
    pub const LIMIT_3: u64 = 300;
    pub const LIMIT_4: u64 = 30;
    pub const LIMIT_5: u64 = 60;
    pub const LIMIT_6: u64 = 60;
    pub const LIMIT_7: u64 = 120;
    pub const LIMIT_8: u64 = 120;
    pub const LIMIT_9: u64 = 600;
    pub const LIMIT_10: u64 = 300;
}

/// Outcome of one criterion: the verdict and the numbers behind it.
struct Outcome {
    pass: bool,
    detail: String,
    /// Parts of the criterion that failed but do not fail the run.
    unasserted_failure: Option<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            unasserted_failure: None,
        }
    }
}

fn pose(azimuth_deg: f64) -> CameraPose {
    sample_hemisphere_pose(azimuth_deg.to_radians(), 0.0, DEFAULT_RADIUS, Vector3::zeros()).unwrap()
}

fn sphere(points: usize) -> Arc<PointCloud> {
    Arc::new(SyntheticScene::Sphere.build(points).unwrap())
}

fn analysis_scene(separation_deg: f64) -> AnalysisScene {
    AnalysisScene::new(
        sphere(5000),
        default_intrinsics(),
        pose(0.0),
        pose(separation_deg),
        &NoisingParams::default(),
        1,
        0.05,
    )
    .unwrap()
}

fn normality(values: &mut [f64], moments: &Moments) -> (bool, String) {
    let (mean, var, kurt) = (moments.mean(), moments.variance(), moments.excess_kurtosis());
    let ks = ks_standard_normal(values);
    let pass = mean.abs() < tol::NORMAL_MEAN
        && (var - 1.0).abs() < tol::NORMAL_VARIANCE
        && kurt.abs() < tol::NORMAL_KURTOSIS;
    (
        pass,
        format!("mean {mean:.5}, var {var:.5}, excess kurtosis {kurt:.4}, pooled KS p {:.3}", ks.p_value),
    )
}

fn criterion_1() -> Outcome {
    let k = default_intrinsics();
    let cloud = sphere(5000);
    let params = NoisingParams {
        upsample_n: tol::UPSAMPLE_N,
        ..Default::default()
    };
    let mut moments = Moments::default();
    let mut pooled = Vec::with_capacity(tol::NORMAL_RUNS * k.pixel_count());
    let mut ks_passes = 0;
    for seed in 0..tol::NORMAL_RUNS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = consistent_noise_map(&cloud, &k, &pose(0.0), &params, 1, &mut rng).unwrap();
        moments.extend(map.values());
        pooled.extend_from_slice(map.values());
        if ks_standard_normal(&mut map.values().to_vec()).p_value > tol::KS_ALPHA {
            ks_passes += 1;
        }
    }
    let rate = ks_passes as f64 / tol::NORMAL_RUNS as f64;
    let (ok, detail) = normality(&mut pooled, &moments);
    Outcome::new(
        ok && rate >= tol::KS_PASS_RATE,
        format!("{} runs: {detail}, KS pass rate {rate:.3}", tol::NORMAL_RUNS),
    )
}

fn criterion_2() -> Outcome {
    let scene = analysis_scene(tol::SEPARATION_DEG);
    let patch = Patch::centered(&scene.intrinsics, tol::PATCH_SIZE).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let consistent =
        covariance_diag(NoiseStrategy::Consistent3d, &scene, patch, tol::COVARIANCE_SAMPLES, &mut rng)
            .unwrap();
    let bilinear =
        covariance_diag(NoiseStrategy::BilinearWarp, &scene, patch, tol::COVARIANCE_SAMPLES, &mut rng)
            .unwrap();
    let c_rho = consistent.max_abs_offdiag_correlation();
    let b_rho = bilinear.max_abs_offdiag_correlation();
    let b_min_diag = bilinear.diagonal().into_iter().fold(f64::INFINITY, f64::min);
    Outcome::new(
        c_rho < tol::MAX_OFFDIAG_RHO && b_rho > tol::BILINEAR_MIN_RHO && b_min_diag < tol::BILINEAR_MAX_DIAGONAL,
        format!("consistent max|rho| {c_rho:.4}; bilinear max|rho| {b_rho:.3}, min diagonal {b_min_diag:.3}"),
    )
}

fn criterion_3() -> Outcome {
    let scene = analysis_scene(tol::SEPARATION_DEG);
    let n = tol::CROSSVIEW_SAMPLES;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = cross_covariance(NoiseStrategy::Consistent3d, &scene, n, &mut rng).unwrap();
    let r = cross_covariance(NoiseStrategy::Random, &scene, n, &mut rng).unwrap();
    let bound = tol::RANDOM_SE_MULTIPLE / (n as f64).sqrt();
    Outcome::new(
        c.corresponding > tol::MIN_CORRESPONDING
            && c.corresponding > tol::CORRESPONDING_RATIO * c.noncorresponding.abs()
            && r.corresponding.abs() < bound,
        format!(
            "consistent {:.3} vs non-corresponding {:.4} over {} pairs; random {:.4} (bound {bound:.3})",
            c.corresponding, c.noncorresponding, c.pairs, r.corresponding
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let positions = (0..tol::PARENTS)
        .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
        .collect();
    let cloud = Arc::new(PointCloud::new(positions).unwrap());
    let parents = sample_noise_field(cloud, 1, &mut rng).unwrap();
    let children = conditional_upsample(&parents, tol::UPSAMPLE_N, 0.01, &mut rng).unwrap();
    let mut sums = vec![0.0; tol::PARENTS];
    for (&p, &v) in children.parent_index().iter().zip(children.values()) {
        sums[p as usize] += v;
    }
    let root_n = (tol::UPSAMPLE_N as f64).sqrt();
    let worst = sums
        .iter()
        .zip(parents.values())
        .map(|(s, p)| (s / root_n - p).abs() / p.abs().max(1.0))
        .fold(0.0, f64::max);
    let mut values = children.values().to_vec();
    let mut moments = Moments::default();
    moments.extend(&values);
    let (ok, detail) = normality(&mut values, &moments);
    let ks_ok = ks_standard_normal(&mut values).p_value > tol::KS_ALPHA;
    Outcome::new(
        worst < tol::RECONSTRUCTION_REL && ok && ks_ok,
        format!("worst reconstruction error {worst:.2e}; {} children: {detail}", values.len()),
    )
}

fn criterion_5() -> Outcome {
    let k = default_intrinsics();
    let (pi, pj) = (pose(0.0), pose(tol::SEPARATION_DEG));
    let cloud = sphere(20_000);
    let identity = identity_check(&cloud, &k, &pi, 1.0).unwrap();
    let homography = homography_check(&k, &pi, &pj).unwrap();
    let round_trip = round_trip_check(&cloud, &k, &pi, &pj, 1.0, 0.05).unwrap();
    let checked = identity.pixels > 0 && homography.pixels > 0 && round_trip.pixels > 0;
    Outcome::new(
        checked
            && identity.max_error < tol::IDENTITY_PX
            && homography.max_error < tol::HOMOGRAPHY_PX
            && round_trip.max_error < tol::ROUND_TRIP_PX,
        format!(
            "identity {:.1e} px, homography {:.1e} px, round trip {:.3} px over {} pixels",
            identity.max_error, homography.max_error, round_trip.max_error, round_trip.pixels
        ),
    )
}

/// Whether the segment from `x` to `eye` crosses the occluder square.
fn blocked_by_occluder(x: &Vector3<f64>, eye: &Vector3<f64>) -> bool {
    if x.x >= OCCLUDER_OFFSET - 1e-9 {
        return false;
    }
    let s = (OCCLUDER_OFFSET - x.x) / (eye.x - x.x);
    if !(0.0..=1.0).contains(&s) {
        return false;
    }
    let hit = x + (eye - x) * s;
    hit.y.abs() <= OCCLUDER_HALF_EXTENT && hit.z.abs() <= OCCLUDER_HALF_EXTENT
}

fn criterion_6() -> Outcome {
    let k = CameraIntrinsics::from_fov_y(128, 128, 60.0).unwrap();
    let cloud = SyntheticScene::Occluder.build(120_000).unwrap();
    let (pi, pj) = (pose(0.0), pose(tol::OCCLUSION_BASELINE_DEG));
    let di = render_depth(&cloud, &k, &pi, 0.0).unwrap();
    let dj = render_depth(&cloud, &k, &pj, 0.0).unwrap();
    let warp = compute_warp(&di, &pi, &pj, &k).unwrap();
    let eye = pj.center();
    let oracle = (0..k.pixel_count())
        .filter(|&idx| warp.is_valid(idx))
        .filter(|&idx| {
            let x = unproject(k.pixel_center(idx), di.get(idx).unwrap(), &k, &pi);
            blocked_by_occluder(&x, &eye)
        })
        .count();
    let masks: Vec<OcclusionMask> = tol::OCCLUSION_DELTAS
        .iter()
        .map(|&d| occlusion_mask(&warp, &dj, d).unwrap())
        .collect();
    let masked_out = warp.valid_count() - masks[1].count();
    let rel = (masked_out as f64 - oracle as f64).abs() / oracle as f64;
    let monotone = masks.windows(2).all(|w| w[0].is_subset_of(&w[1]));
    Outcome::new(
        oracle > 0 && rel < tol::OCCLUSION_AREA_REL && monotone,
        format!("masked {masked_out} px vs ray-cast {oracle} px ({:.1}%), monotone {monotone}", 100.0 * rel),
    )
}

fn random_map(w: usize, h: usize, c: usize, rng: &mut ChaCha8Rng) -> ChannelMap {
    ChannelMap::from_values(w, h, c, (0..w * h * c).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

fn colored_sphere(points: usize, rng: &mut ChaCha8Rng) -> ColorPointCloud {
    let cloud = sphere(points);
    let colors = (0..points).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect();
    let opacity = (0..points).map(|_| rng.random_range(0.5..1.5)).collect();
    ColorPointCloud::new(cloud, colors, opacity).unwrap()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (s, sigma) = (0.5, 0.9);
    let target = random_map(8, 8, 3, &mut rng);
    let z = random_map(8, 8, 3, &mut rng);
    let d = AnalyticGaussianDenoiser::new(vec![target.clone()], s).unwrap();
    let est = paas_score(&z, sigma, &d, 0, tol::PAAS_SAMPLES, &mut rng).unwrap();
    let worst_se = (0..z.values().len())
        .map(|i| {
            let exact = (target.values()[i] - z.values()[i]) / (s * s + sigma * sigma);
            (est.mean.values()[i] - exact).abs() / est.std_error.values()[i]
        })
        .fold(0.0, f64::max);

    let rep = colored_sphere(tol::SDS_POINTS, &mut rng);
    let target_rep = colored_sphere(tol::SDS_POINTS, &mut rng);
    let k = CameraIntrinsics::from_fov_y(32, 32, 60.0).unwrap();
    let cameras: Vec<_> = [0.0, 0.6, 1.2]
        .iter()
        .map(|&az| sample_hemisphere_pose(az, 0.2, DEFAULT_RADIUS, Vector3::zeros()).unwrap())
        .collect();
    let params = RenderParams {
        splat_radius: 1.0,
        depth_tolerance: 0.3,
    };
    let targets = cameras
        .iter()
        .map(|p| render_color(&target_rep, &k, p, &params).unwrap().image)
        .collect();
    let d = AnalyticGaussianDenoiser::new(targets, s).unwrap();
    let schedule = NoiseSchedule::log_uniform(0.1, 2.0, 100).unwrap();
    let step = sds_step(&rep, &k, &cameras, &schedule, &d, StepNoise::Iid, &params, &mut rng).unwrap();
    let h = tol::SDS_FD_STEP;
    let mut max_rel: f64 = 0.0;
    for point in 0..rep.len() {
        for ch in 0..3 {
            let at = |delta: f64| {
                let mut colors = rep.colors().to_vec();
                colors[point][ch] += delta;
                step.surrogate_objective(&colors).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let an = step.gradient[point][ch];
            let scale = an.abs().max(fd.abs()).max(1e-8);
            max_rel = max_rel.max((fd - an).abs() / scale);
        }
    }
    Outcome::new(
        worst_se < tol::PAAS_SE && max_rel < tol::SDS_MAX_REL,
        format!("PAAS worst deviation {worst_se:.2} SE; SDS gradient max relative error {max_rel:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_map(16, 12, 3, &mut rng);
    let other = random_map(16, 12, 3, &mut rng);
    let ones = OcclusionMask::ones(16, 12);
    let zero = consistency_loss(&g, &g, &ones).unwrap();
    let antipodal = consistency_loss(&g, &g.map(|v| -v), &ones).unwrap();
    let base = consistency_loss(&g, &other, &ones).unwrap();
    let scaled = consistency_loss(&g.map(|v| 3.7 * v), &other.map(|v| 0.02 * v), &ones).unwrap();
    let closed = zero.abs() < tol::LOSS_ZERO
        && (antipodal - 2.0 * 192.0).abs() < tol::LOSS_ANTIPODAL
        && (scaled - base).abs() < tol::LOSS_SCALE;

    // plane pair with gradients that agree through the true depth
    let k = default_intrinsics();
    let cloud = SyntheticScene::Plane.build(40_000).unwrap();
    let pi = sample_hemisphere_pose(0.1, 0.0, DEFAULT_RADIUS, Vector3::zeros()).unwrap();
    let pj = sample_hemisphere_pose(0.1 + tol::SEPARATION_DEG.to_radians(), 0.0, DEFAULT_RADIUS, Vector3::zeros())
        .unwrap();
    let di = render_depth(&cloud, &k, &pi, 1.0).unwrap();
    let dj = render_depth(&cloud, &k, &pj, 1.0).unwrap();
    let warp = compute_warp(&di, &pi, &pj, &k).unwrap();
    let mask = occlusion_mask(&warp, &dj, 0.05).unwrap();
    let smooth: Vec<f64> = (0..k.pixel_count())
        .flat_map(|idx| {
            let p = k.pixel_center(idx);
            let phase = 0.09 * p.x + 0.05 * p.y;
            [phase.cos(), phase.sin(), 0.4 + 0.01 * p.x]
        })
        .collect();
    let g_j = ChannelMap::from_values(k.width, k.height, 3, smooth).unwrap();
    let g_i = inverse_warp_bilinear(&g_j, &warp).unwrap();
    let pair = |depth| ViewPair {
        intrinsics: &k,
        pose_i: &pi,
        pose_j: &pj,
        depth_i: depth,
        g_i: &g_i,
        g_j: &g_j,
        mask: &mask,
    };

    let mut shifted = di.clone();
    for idx in 0..k.pixel_count() {
        if let Some(d) = shifted.get(idx) {
            shifted.set(idx, d + rng.random_range(0.05..0.1));
        }
    }
    let h = 1e-2;
    let grads: Vec<_> = [h, h / 2.0, h / 4.0]
        .iter()
        .map(|&s| consistency_loss_depth_gradient(&pair(&shifted), s).unwrap())
        .collect();
    let mut ratios: Vec<f64> = (0..k.pixel_count())
        .filter_map(|idx| {
            let (a, b, c) = (grads[0].at(idx)[0], grads[1].at(idx)[0], grads[2].at(idx)[0]);
            ((b - c).abs() > 1e-9).then(|| (a - b) / (b - c))
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
    let richardson = (median - tol::RICHARDSON_RATIO).abs() < tol::RICHARDSON_MEDIAN_TOL;

    let idx = 32 * 64 + 30;
    let bump = 0.225;
    let mut up = di.clone();
    up.set(idx, di.get(idx).unwrap() + bump);
    let mut down = di.clone();
    down.set(idx, di.get(idx).unwrap() - bump);
    let g_up = consistency_loss_depth_gradient(&pair(&up), 1e-3).unwrap().at(idx)[0];
    let g_down = consistency_loss_depth_gradient(&pair(&down), 1e-3).unwrap().at(idx)[0];
    let signs = g_up > 0.0 && g_down < 0.0;
    Outcome::new(
        closed && richardson && signs,
        format!(
            "L(identical) {zero:.1e}, L(antipodal) {antipodal} of {}, scale change {:.1e}; Richardson median ratio {median:.3}; perturbation gradients {g_up:.3e} / {g_down:.3e}",
            2 * 192,
            (scaled - base).abs()
        ),
    )
}

fn median(v: &mut [usize]) -> f64 {
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn criterion_9() -> Outcome {
    let k = default_intrinsics();
    let cloud = sphere(tol::TOY_POINTS);
    let reference = ColorPointCloud::new(cloud.clone(), reference_colors(&cloud), vec![1.0; cloud.len()]).unwrap();
    let (poses, pairs) =
        anchor_neighbor_poses(tol::TOY_ANCHORS, 15.0, tol::SEPARATION_DEG, DEFAULT_RADIUS, Vector3::zeros()).unwrap();
    let problem =
        ToyProblem::new(reference, k, poses, pairs, RenderParams::default(), &NoisingParams::default()).unwrap();
    let init = ColorPointCloud::uniform(cloud, Vector3::repeat(0.5)).unwrap();
    let schedule = NoiseSchedule::from_config(&ScheduleConfig::default()).unwrap();
    let mut medians = Vec::new();
    let mut worst_final: f64 = 0.0;
    for strategy in [NoisingMode::Consistent, NoisingMode::Iid] {
        let cfg = OptimizerConfig {
            iterations: tol::TOY_ITERATIONS,
            strategy,
            ..Default::default()
        };
        let mut hits = Vec::new();
        for seed in 0..tol::TOY_SEEDS {
            let run = optimize(&problem, &init, &cfg, &schedule, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            hits.push(run.iterations_to_threshold.unwrap_or(usize::MAX));
            worst_final = worst_final.max(run.final_loss);
        }
        medians.push(median(&mut hits));
    }
    let (consistent, iid) = (medians[0], medians[1]);
    let mut outcome = Outcome::new(
        worst_final < tol::TOY_FINAL_ERROR,
        format!(
            "median iterations to threshold: consistent {consistent}, iid {iid}; worst final color error {worst_final:.4}"
        ),
    );
    if consistent > iid {
        outcome.unasserted_failure = Some(format!(
            "consistent median {consistent} exceeds iid median {iid}"
        ));
    }
    outcome
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        "seed = 10\n[scene]\npoints = 2000\n[camera]\nwidth = 32\nheight = 32\n\
         [analysis]\nsamples = 100\n[optimizer]\niterations = 5\n",
    )
    .unwrap();
    let mut differing = Vec::new();
    let mut total = 0;
    for command in ["gen-noise", "stats", "warp-check", "optimize"] {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|run| {
                let out = tmp.path().join(format!("{command}_{run}"));
                let run_out = Command::new(env!("CARGO_BIN_EXE_gsd"))
                    .args([command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
                    .env_remove("GSD_OUT_DIR")
                    .output()
                    .unwrap();
                assert!(run_out.status.success(), "{command} failed");
                snapshot(&out)
            })
            .collect();
        total += runs[0].len();
        if runs[0] != runs[1] {
            differing.push(command);
        }
    }
    Outcome::new(
        differing.is_empty(),
        format!("{total} files across 4 commands; differing: {differing:?}"),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, u64);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "noise normality", criterion_1, tol::LIMIT_1),
        (2, "pixel independence", criterion_2, tol::LIMIT_2),
        (3, "cross-view consistency", criterion_3, tol::LIMIT_3),
        (4, "upsampling exactness", criterion_4, tol::LIMIT_4),
        (5, "warp correctness", criterion_5, tol::LIMIT_5),
        (6, "occlusion mask", criterion_6, tol::LIMIT_6),
        (7, "score machinery", criterion_7, tol::LIMIT_7),
        (8, "consistency loss", criterion_8, tol::LIMIT_8),
        (9, "convergence analogue", criterion_9, tol::LIMIT_9),
        (10, "determinism", criterion_10, tol::LIMIT_10),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run, limit) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run);
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let line = match result {
            Ok(o) => {
                let asserted = o.pass && in_time;
                if !asserted {
                    failed.push(id);
                }
                match (&o.unasserted_failure, asserted) {
                    (Some(why), true) => format!("FAIL (not asserted: {why}; asserted part passes) {}", o.detail),
                    (_, true) => format!("PASS {}", o.detail),
                    (_, false) => format!("FAIL {}", o.detail),
                }
            }
            Err(_) => {
                failed.push(id);
                "FAIL (panicked)".to_string()
            }
        };
        println!(
            "criterion {id:>2} {name:<24} {line} [{:.1}s, limit {limit}s]",
            elapsed.as_secs_f64()
        );
    }
    if !failed.is_empty() {
        println!("acceptance: asserted criteria failed: {failed:?}");
        std::process::exit(1);
    }
}
