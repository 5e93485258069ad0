//! The TOML run configuration shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gsd_core::analysis::NoiseStrategy;
use gsd_core::geometry::{sample_hemisphere_pose, CameraIntrinsics, CameraPose, PointCloud};
use gsd_core::noising::NoisingParams;
use gsd_core::optimize::OptimizerConfig;
use gsd_core::scenes::{SyntheticScene, DEFAULT_RADIUS};
use gsd_core::score::{RenderParams, ScheduleConfig};
use gsd_core::warping::DEFAULT_OCCLUSION_DELTA;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Output directory used when neither `--out` nor the environment variable
/// nor the config names one.
pub const DEFAULT_OUTPUT_DIR: &str = "gsd_out";

/// Environment variable consulted for the output directory when `--out` is
/// absent.
pub const OUT_DIR_ENV: &str = "GSD_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Noise channels per pixel.
    pub channels: usize,
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub noising: NoisingParams,
    pub schedule: ScheduleConfig,
    pub render: RenderParams,
    pub optimizer: OptimizerConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            channels: 1,
            scene: SceneConfig::default(),
            camera: CameraConfig::default(),
            noising: NoisingParams::default(),
            schedule: ScheduleConfig::default(),
            render: RenderParams::default(),
            optimizer: OptimizerConfig::default(),
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Exactly one of `synthetic` and `ply`; the sphere is used when neither
/// is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticScene>,
    /// Relative paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ply: Option<PathBuf>,
    /// Point count of a synthetic scene.
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    5000
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            synthetic: None,
            ply: None,
            points: default_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fov_y_deg: f64,
    /// Distance of every camera from `target`.
    pub radius: f64,
    pub target: [f64; 3],
    pub poses: Vec<PoseSpec>,
    /// View pairs used by the consistency loss; by default pose `2a` is
    /// paired with pose `2a + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fov_y_deg: 60.0,
            radius: DEFAULT_RADIUS,
            target: [0.0; 3],
            poses: vec![
                PoseSpec { azimuth_deg: 0.0, elevation_deg: 0.0 },
                PoseSpec { azimuth_deg: 5.0, elevation_deg: 0.0 },
            ],
            pairs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub samples: usize,
    pub patch_size: usize,
    pub strategies: Vec<NoiseStrategy>,
    pub occlusion_delta: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            patch_size: 8,
            strategies: NoiseStrategy::ALL.to_vec(),
            occlusion_delta: DEFAULT_OCCLUSION_DELTA,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// A validated config together with the directory its relative paths are
/// resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_error(e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Range checks that do not need the scene.
    pub fn validate(&self, base_dir: &Path) -> Result<(), CliError> {
        let check = |ok: bool, key: &str, why: &str| {
            if ok {
                Ok(())
            } else {
                Err(config_error(format!("`{key}` {why}")))
            }
        };
        check(self.channels >= 1, "channels", "must be at least 1")?;
        let s = &self.scene;
        check(
            !(s.synthetic.is_some() && s.ply.is_some()),
            "scene",
            "must set only one of `synthetic` and `ply`",
        )?;
        check(s.points >= 4, "scene.points", "must be at least 4")?;
        if let Some(path) = &s.ply {
            let resolved = base_dir.join(path);
            check(
                resolved.is_file(),
                "scene.ply",
                &format!("names a missing file `{}`", resolved.display()),
            )?;
        }
        let c = &self.camera;
        check(c.width >= 1 && c.height >= 1, "camera.width/height", "must be positive")?;
        check(
            c.fov_y_deg > 0.0 && c.fov_y_deg < 180.0,
            "camera.fov_y_deg",
            "must lie in (0, 180)",
        )?;
        check(c.radius > 0.0 && c.radius.is_finite(), "camera.radius", "must be positive")?;
        check(c.target.iter().all(|v| v.is_finite()), "camera.target", "must be finite")?;
        check(!c.poses.is_empty(), "camera.poses", "must list at least one pose")?;
        for p in &c.poses {
            check(
                p.azimuth_deg.is_finite() && (0.0..=90.0).contains(&p.elevation_deg),
                "camera.poses",
                "need finite azimuth_deg and elevation_deg in [0, 90]",
            )?;
        }
        if let Some(pairs) = &c.pairs {
            check(
                pairs.iter().all(|[i, j]| *i < c.poses.len() && *j < c.poses.len()),
                "camera.pairs",
                "must index configured poses",
            )?;
        }
        self.noising.validate().map_err(core_key("noising"))?;
        gsd_core::score::NoiseSchedule::from_config(&self.schedule).map_err(core_key("schedule"))?;
        self.render.validate().map_err(core_key("render"))?;
        self.optimizer.validate().map_err(core_key("optimizer"))?;
        let a = &self.analysis;
        check(a.samples >= 100, "analysis.samples", "must be at least 100")?;
        check(a.patch_size >= 1, "analysis.patch_size", "must be positive")?;
        check(!a.strategies.is_empty(), "analysis.strategies", "must not be empty")?;
        check(
            a.occlusion_delta >= 0.0 && a.occlusion_delta.is_finite(),
            "analysis.occlusion_delta",
            "must be non-negative",
        )?;
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, CliError> {
        let c = &self.camera;
        Ok(CameraIntrinsics::from_fov_y(c.width, c.height, c.fov_y_deg)?)
    }

    pub fn poses(&self) -> Result<Vec<CameraPose>, CliError> {
        let c = &self.camera;
        let target = Vector3::from(c.target);
        c.poses
            .iter()
            .map(|p| {
                Ok(sample_hemisphere_pose(
                    p.azimuth_deg.to_radians(),
                    p.elevation_deg.to_radians(),
                    c.radius,
                    target,
                )?)
            })
            .collect()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        match &self.camera.pairs {
            Some(p) => p.iter().map(|[i, j]| (*i, *j)).collect(),
            None => (0..self.camera.poses.len() / 2).map(|a| (2 * a, 2 * a + 1)).collect(),
        }
    }

    /// The synthetic scene in use, `None` for a PLY scene.
    pub fn synthetic(&self) -> Option<SyntheticScene> {
        match self.scene.ply {
            Some(_) => None,
            None => Some(self.scene.synthetic.unwrap_or(SyntheticScene::Sphere)),
        }
    }

    pub fn scene_id(&self) -> String {
        match (&self.scene.ply, self.synthetic()) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(s)) => s.id().to_string(),
            (None, None) => unreachable!(),
        }
    }
}

fn core_key(block: &'static str) -> impl Fn(gsd_core::Error) -> CliError {
    move |e| config_error(format!("[{block}] {e}"))
}

impl LoadedConfig {
    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read `{}`: {e}", path.display())))?;
        let config = RunConfig::from_toml(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate(&base_dir)?;
        Ok(Self { config, base_dir })
    }

    pub fn defaults() -> Self {
        Self {
            config: RunConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn cloud(&self) -> Result<Arc<PointCloud>, CliError> {
        let c = &self.config;
        let cloud = match (&c.scene.ply, c.synthetic()) {
            (Some(path), _) => gsd_core::io::read_point_cloud(&self.base_dir.join(path))
                .map_err(|e| config_error(format!("scene.ply: {e}")))?,
            (None, Some(scene)) => scene.build(c.scene.points)?,
            (None, None) => unreachable!(),
        };
        Ok(Arc::new(cloud))
    }

    /// `--out`, then the environment variable, then the config, then the
    /// built-in default.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(dir) = flag {
            return dir.to_path_buf();
        }
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        match &self.config.output.dir {
            Some(dir) => self.base_dir.join(dir),
            None => PathBuf::from(DEFAULT_OUTPUT_DIR),
        }
    }
}
