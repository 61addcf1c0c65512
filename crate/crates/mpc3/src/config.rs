//! Scenario configuration: TOML-backed description of the plant, the
//! transcription, guidance geometry, collision settings, and run control.
//!
//! Every field has a default tuned for the bundled docking scenario, so a
//! config file only needs to list what it overrides.

use crate::chebyshev::{ChebyshevBasis, TimeMap};
use crate::collision::{CollisionError, Polytope};
use crate::transcription::{AxisSpec, TranscriptionError, TranscriptionSpec};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Chaser mass in kg.
    pub mass: f64,
    /// Std of the per-step Gaussian velocity noise, m/s.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            noise_std: 1e-4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisConfig {
    pub w_u: f64,
    pub w_x: f64,
    pub w_xp: f64,
    /// Per-axis force limit in N (box ±u_limit).
    pub u_limit: f64,
    pub softness_u: f64,
    /// Per-axis velocity limit in m/s (box ±v_limit).
    pub v_limit: f64,
    pub softness_v: f64,
}

impl Default for AxisConfig {
    fn default() -> Self {
        Self {
            w_u: 1.0,
            w_x: 1.0,
            w_xp: 0.0,
            u_limit: 0.01,
            softness_u: 0.01,
            v_limit: 0.02,
            softness_v: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranscriptionConfig {
    /// Approximation order n.
    pub order: usize,
    /// Prediction horizon Δt in seconds.
    pub horizon: f64,
    /// Slack penalty ρ.
    pub rho: f64,
    /// Applied to all three translation axes.
    pub axis: AxisConfig,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        Self {
            order: 3,
            horizon: 2.5,
            rho: 1e4,
            axis: AxisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceSettings {
    pub target_center: [f64; 3],
    /// Outward unit normal of the docking face.
    pub port_normal: [f64; 3],
    /// Distance from the target center to the port surface point.
    pub port_offset: f64,
    /// Distance to the target center that ends the approach mode.
    pub approach_radius: f64,
    /// Distance to the align point that starts the docking mode.
    pub align_radius: f64,
    /// Align point standoff from the port along the normal.
    pub align_standoff: f64,
    /// Commanded chaser-center standoff from the port when docked
    /// (chaser half-width plus a capture gap).
    pub dock_standoff: f64,
    pub dock_pos_tol: f64,
    pub dock_vel_tol: f64,
    /// Mode exit radii exceed entry radii by this factor.
    pub hysteresis: f64,
}

impl Default for GuidanceSettings {
    fn default() -> Self {
        Self {
            target_center: [0.0, 0.0, 0.0],
            port_normal: [-1.0, 0.0, 0.0],
            port_offset: 0.05,
            approach_radius: 0.6,
            align_radius: 0.15,
            align_standoff: 0.2,
            dock_standoff: 0.07,
            dock_pos_tol: 0.01,
            dock_vel_tol: 0.005,
            hysteresis: 1.1,
        }
    }
}

/// Hull geometry: an axis-aligned box, a body-frame vertex cloud, or
/// explicit half-space data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HullConfig {
    Box { half_widths: [f64; 3] },
    Vertices { vertices: Vec<[f64; 3]> },
    HalfSpaces { normals: Vec<[f64; 3]>, offsets: Vec<f64> },
}

impl Default for HullConfig {
    fn default() -> Self {
        Self::Box {
            half_widths: [0.05, 0.05, 0.05],
        }
    }
}

impl HullConfig {
    pub fn build(&self, center: Vector3<f64>) -> Result<Polytope, ConfigError> {
        let rot = Matrix3::identity();
        let poly = match self {
            Self::Box { half_widths } => Polytope::cuboid(
                Vector3::new(half_widths[0], half_widths[1], half_widths[2]),
                center,
                rot,
            )?,
            Self::Vertices { vertices } => {
                let verts: Vec<Vector3<f64>> = vertices
                    .iter()
                    .map(|v| Vector3::new(v[0], v[1], v[2]))
                    .collect();
                Polytope::from_vertices(&verts, center, rot)?
            }
            Self::HalfSpaces { normals, offsets } => {
                if normals.len() != offsets.len() {
                    return Err(ConfigError::Invalid(
                        "half-space normals and offsets differ in length".into(),
                    ));
                }
                let a = nalgebra::DMatrix::from_fn(normals.len(), 3, |i, j| normals[i][j]);
                let b = nalgebra::DVector::from_fn(offsets.len(), |i, _| offsets[i]);
                Polytope::new(a, b, center, rot)?
            }
        };
        Ok(poly)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    /// Soft keep-out threshold on the scaling factor.
    pub s_threshold: f64,
    /// Collision checking turns on inside this radius of the target.
    pub activation_radius: f64,
    /// Slack coupling of the appended avoidance rows.
    pub softness: f64,
    pub chaser_hull: HullConfig,
    pub target_hull: HullConfig,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self {
            s_threshold: 1.5,
            activation_radius: 0.4,
            softness: 0.1,
            chaser_hull: HullConfig::default(),
            target_hull: HullConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Control period in seconds.
    pub t_s: f64,
    /// Wall-clock budget of simulated time before a run times out.
    pub timeout: f64,
    pub mc_runs: usize,
    pub initial_position: [f64; 3],
    pub initial_velocity: [f64; 3],
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_s: 0.5,
            timeout: 300.0,
            mc_runs: 500,
            initial_position: [1.2, 0.18, 0.0],
            initial_velocity: [0.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantConfig,
    pub transcription: TranscriptionConfig,
    pub guidance: GuidanceSettings,
    pub collision: CollisionConfig,
    pub run: RunConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |s: &str| Err(ConfigError::Invalid(s.to_string()));
        if !(self.plant.mass > 0.0) {
            return fail("plant.mass must be positive");
        }
        if self.plant.noise_std < 0.0 {
            return fail("plant.noise_std must be nonnegative");
        }
        if self.transcription.order < 1 {
            return fail("transcription.order must be at least 1");
        }
        if !(self.transcription.horizon > 0.0) {
            return fail("transcription.horizon must be positive");
        }
        if !(self.run.t_s > 0.0) {
            return fail("run.t_s must be positive");
        }
        if self.run.timeout < 0.0 {
            return fail("run.timeout must be nonnegative");
        }
        if !(self.guidance.approach_radius > self.guidance.align_radius) {
            return fail("guidance radii must strictly decrease across modes");
        }
        let n = self.guidance.port_normal;
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return fail("guidance.port_normal must be a unit vector");
        }
        if !(self.guidance.hysteresis >= 1.0) {
            return fail("guidance.hysteresis must be at least 1");
        }
        Ok(())
    }

    /// Transcription spec for the three translation axes. Control bounds
    /// become accelerations by dividing the force limit by the mass.
    pub fn build_transcription_spec(&self) -> Result<TranscriptionSpec, ConfigError> {
        let ax = &self.transcription.axis;
        let a_lim = ax.u_limit / self.plant.mass;
        let axis = AxisSpec {
            w_u: ax.w_u,
            w_x: ax.w_x,
            w_xp: ax.w_xp,
            x_target: 0.0,
            v_target: 0.0,
            u_min: -a_lim,
            u_max: a_lim,
            softness_u: ax.softness_u,
            v_min: -ax.v_limit,
            v_max: ax.v_limit,
            softness_v: ax.softness_v,
        };
        let map = TimeMap::new(0.0, self.transcription.horizon)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(TranscriptionSpec::new(
            ChebyshevBasis::new(self.transcription.order),
            map,
            vec![axis; 3],
            self.transcription.rho,
        )?)
    }

    pub fn chaser_polytope(&self, center: Vector3<f64>) -> Result<Polytope, ConfigError> {
        self.collision.chaser_hull.build(center)
    }

    pub fn target_polytope(&self) -> Result<Polytope, ConfigError> {
        let c = self.guidance.target_center;
        self.collision.target_hull.build(Vector3::new(c[0], c[1], c[2]))
    }
}
