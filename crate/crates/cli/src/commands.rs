//! One function per subcommand. Each writes its outputs and a
//! `manifest.json` into the output directory and returns the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use gsd_core::analysis::{
    consistent_is_unique_winner, reports_csv, reports_summary, strategy_comparison, AnalysisScene,
    NoiseStrategy, Patch, StatsReport,
};
use gsd_core::geometry::render_depth;
use gsd_core::io::{
    mask_to_map, matrix_to_map, to_json, warp_to_map, write_atomic, write_color_cloud, write_map,
};
use gsd_core::noising::ConsistentNoiseField;
use gsd_core::optimize::{optimize, reference_colors, trace_csv, ToyProblem};
use gsd_core::score::{ColorPointCloud, NoiseSchedule};
use gsd_core::warping::{compute_warp, occlusion_mask};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checks::{checks_csv, homography_check, identity_check, round_trip_check};
use crate::config::{LoadedConfig, RunConfig};
use crate::CliError;

/// Gray every color channel starts from in `optimize`.
pub const INITIAL_GRAY: f64 = 0.5;

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct CommonArgs {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub assert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reproduce a command's outputs. Carries no
/// timestamps so reruns write identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub scene: String,
    pub config: RunConfig,
    pub files: Vec<FileEntry>,
}

struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Output {
    fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn record(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        let digest = Sha256::digest(&bytes);
        self.files.push(FileEntry {
            path: path
                .strip_prefix(&self.dir)
                .unwrap_or(path)
                .display()
                .to_string(),
            bytes: bytes.len() as u64,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes).map_err(|e| io_error(&path, e))?;
        self.record(&path)
    }

    fn write_map(
        &mut self,
        name: &str,
        map: &gsd_core::raster::ChannelMap,
        seed: Option<u64>,
        pose_id: Option<&str>,
    ) -> Result<(), CliError> {
        let bin = self.dir.join(name);
        let (bin, json) =
            write_map(&bin, map, seed, pose_id).map_err(|e| io_error(&self.dir.join(name), e))?;
        self.record(&bin)?;
        self.record(&json)
    }

    fn finish(
        mut self,
        command: &str,
        seed: u64,
        loaded: &LoadedConfig,
    ) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            scene: loaded.config.scene_id(),
            config: loaded.config.clone(),
            files: std::mem::take(&mut self.files),
        };
        let path = self.dir.join("manifest.json");
        write_atomic(&path, to_json(&manifest)?.as_bytes()).map_err(|e| io_error(&path, e))?;
        Ok(manifest)
    }
}

/// The run seed after applying `--seed`.
pub fn effective_seed(config: &RunConfig, args: &CommonArgs) -> u64 {
    args.seed.unwrap_or(config.seed)
}

/// Seed of the noise field: `--seed`, then `noising.seed`, then `seed`.
pub fn noise_seed(config: &RunConfig, args: &CommonArgs) -> u64 {
    args.seed.or(config.noising.seed).unwrap_or(config.seed)
}

/// One 3D-consistent noise map per configured pose, all rendered from a
/// single noise field.
pub fn gen_noise(loaded: &LoadedConfig, args: &CommonArgs) -> Result<Manifest, CliError> {
    let c = &loaded.config;
    let seed = noise_seed(c, args);
    let cloud = loaded.cloud()?;
    let k = c.intrinsics()?;
    let poses = c.poses()?;
    let resolved = c.noising.resolve(&cloud, &k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = ConsistentNoiseField::sample(cloud, &resolved, c.channels, &mut rng)?;
    let mut out = Output::create(loaded.output_dir(args.out.as_deref()))?;
    for (v, pose) in poses.iter().enumerate() {
        let map = field.render(&k, pose)?;
        let id = format!("view_{v}");
        out.write_map(&format!("noise_{id}.bin"), &map, Some(seed), Some(&id))?;
    }
    out.finish("gen-noise", seed, loaded)
}

/// Extra flags of `stats`.
#[derive(Debug, Clone, Default)]
pub struct StatsArgs {
    /// Replaces `analysis.strategies` when non-empty.
    pub strategies: Vec<NoiseStrategy>,
    /// Require every strategy to pass the cross-view predicate.
    pub assert_crossview: bool,
}

/// Verdicts required by `--assert`: consistent noise passes both
/// predicates, random noise is normal without cross-view correlation and
/// bilinear warping is not normal. With all four strategies present the
/// consistent one must be the only one passing both.
pub fn verdict_failures(reports: &[StatsReport], crossview_all: bool) -> Vec<String> {
    let mut failures = Vec::new();
    for r in reports {
        let (normal, cross) = (r.pass_normal(), r.pass_crossview());
        let ok = match r.strategy {
            NoiseStrategy::Consistent3d => normal && cross,
            NoiseStrategy::Random => normal && !cross,
            NoiseStrategy::BilinearWarp => !normal,
            NoiseStrategy::NearestWarp => true,
        };
        if !ok {
            failures.push(format!(
                "{}: normal={normal} crossview={cross} does not match its expected verdict",
                r.strategy
            ));
        }
        if crossview_all && !cross {
            failures.push(format!("{}: no cross-view correlation", r.strategy));
        }
    }
    let all = NoiseStrategy::ALL
        .iter()
        .all(|s| reports.iter().any(|r| r.strategy == *s));
    if all && !consistent_is_unique_winner(reports) {
        failures.push("consistent_3d is not the unique strategy passing both".into());
    }
    failures
}

pub fn stats(
    loaded: &LoadedConfig,
    args: &CommonArgs,
    extra: &StatsArgs,
) -> Result<Manifest, CliError> {
    let c = &loaded.config;
    let seed = effective_seed(c, args);
    let poses = c.poses()?;
    if poses.len() < 2 {
        return Err(CliError::Config("`camera.poses` needs two poses for stats".into()));
    }
    let k = c.intrinsics()?;
    let scene = AnalysisScene::new(
        loaded.cloud()?,
        k,
        poses[0],
        poses[1],
        &c.noising,
        c.channels,
        c.analysis.occlusion_delta,
    )?;
    let patch = Patch::centered(&k, c.analysis.patch_size)?;
    let strategies = if extra.strategies.is_empty() {
        c.analysis.strategies.clone()
    } else {
        extra.strategies.clone()
    };
    let reports = strategy_comparison(&scene, patch, &strategies, c.analysis.samples, seed)?;
    let mut out = Output::create(loaded.output_dir(args.out.as_deref()))?;
    out.write("stats.csv", reports_csv(&reports).as_bytes())?;
    out.write("summary.txt", reports_summary(&reports).as_bytes())?;
    for r in &reports {
        let cov = &r.patch_covariance;
        let map = matrix_to_map(cov.dim, &cov.covariance)?;
        out.write_map(&format!("covariance_{}.bin", r.strategy), &map, Some(seed), None)?;
    }
    let manifest = out.finish("stats", seed, loaded)?;
    let failures = verdict_failures(&reports, extra.assert_crossview);
    if (args.assert || extra.assert_crossview) && !failures.is_empty() {
        return Err(CliError::Assertion(failures.join("; ")));
    }
    Ok(manifest)
}

/// Identity and round-trip checks on the configured scene between the
/// first two poses, and the homography check on the built-in plane.
pub fn warp_check(loaded: &LoadedConfig, args: &CommonArgs) -> Result<Manifest, CliError> {
    let c = &loaded.config;
    let seed = effective_seed(c, args);
    let poses = c.poses()?;
    if poses.len() < 2 {
        return Err(CliError::Config("`camera.poses` needs two poses for warp-check".into()));
    }
    let (pi, pj) = (&poses[0], &poses[1]);
    let k = c.intrinsics()?;
    let cloud = loaded.cloud()?;
    let splat = c.noising.splat_radius;
    let delta = c.analysis.occlusion_delta;
    let checks = vec![
        identity_check(&cloud, &k, pi, splat)?,
        homography_check(&k, pi, pj)?,
        round_trip_check(&cloud, &k, pi, pj, splat, delta)?,
    ];
    let di = render_depth(&cloud, &k, pi, splat)?;
    let dj = render_depth(&cloud, &k, pj, splat)?;
    let warp = compute_warp(&di, pi, pj, &k)?;
    let mask = occlusion_mask(&warp, &dj, delta)?;
    let mut out = Output::create(loaded.output_dir(args.out.as_deref()))?;
    out.write("warp_check.csv", checks_csv(&checks).as_bytes())?;
    out.write_map("warp_0_1.bin", &warp_to_map(&warp), None, Some("view_0->view_1"))?;
    out.write_map("mask_0_1.bin", &mask_to_map(&mask), None, Some("view_0->view_1"))?;
    let manifest = out.finish("warp-check", seed, loaded)?;
    let failed: Vec<_> = checks.iter().filter(|c| !c.pass()).map(|c| c.name).collect();
    if args.assert && !failed.is_empty() {
        return Err(CliError::Assertion(format!("warp checks failed: {}", failed.join(", "))));
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
struct OptimizeSummary {
    strategy: String,
    iterations: usize,
    initial_loss: f64,
    final_loss: f64,
    loss_threshold: f64,
    iterations_to_threshold: Option<usize>,
}

/// Build the toy problem of a config: the configured scene colored with
/// the reference coloring, one target per configured pose.
pub fn toy_problem(loaded: &LoadedConfig) -> Result<ToyProblem, CliError> {
    let c = &loaded.config;
    let cloud = loaded.cloud()?;
    let reference = ColorPointCloud::new(cloud.clone(), reference_colors(&cloud), vec![1.0; cloud.len()])?;
    Ok(ToyProblem::new(
        reference,
        c.intrinsics()?,
        c.poses()?,
        c.pairs(),
        c.render,
        &c.noising,
    )?)
}

pub fn optimize_cmd(loaded: &LoadedConfig, args: &CommonArgs) -> Result<Manifest, CliError> {
    let c = &loaded.config;
    let seed = effective_seed(c, args);
    let problem = toy_problem(loaded)?;
    let initial = ColorPointCloud::uniform(problem.cloud().clone(), Vector3::repeat(INITIAL_GRAY))?;
    let schedule = NoiseSchedule::from_config(&c.schedule)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = optimize(&problem, &initial, &c.optimizer, &schedule, &mut rng)?;
    let mut out = Output::create(loaded.output_dir(args.out.as_deref()))?;
    out.write("trace.csv", trace_csv(&run.trace, problem.poses.len()).as_bytes())?;
    let ply = out.dir.join("final.ply");
    write_color_cloud(&ply, &run.result).map_err(|e| io_error(&ply, e))?;
    out.record(&ply)?;
    let summary = OptimizeSummary {
        strategy: c.optimizer.strategy.id().to_string(),
        iterations: c.optimizer.iterations,
        initial_loss: run.initial_loss,
        final_loss: run.final_loss,
        loss_threshold: c.optimizer.loss_threshold,
        iterations_to_threshold: run.iterations_to_threshold,
    };
    out.write("summary.json", to_json(&summary)?.as_bytes())?;
    let manifest = out.finish("optimize", seed, loaded)?;
    if args.assert && run.final_loss >= c.optimizer.loss_threshold {
        return Err(CliError::Assertion(format!(
            "final color error {} is not below {}",
            run.final_loss, c.optimizer.loss_threshold
        )));
    }
    Ok(manifest)
}

