//! Experiment configuration: one TOML file drives every command.
//!
//! The schema is strict: a `schema_version` string is required at the top
//! and unknown keys anywhere are rejected before any work happens.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use pikan_core::geometry::{CloudCounts, SensorCounts};
use pikan_core::groundtruth::ManufacturedCase;
use pikan_core::jacobi::JacobiParams;
use pikan_core::network::{NetworkConfig, Variant};
use pikan_core::physics::FluidParams;
use pikan_core::trainer::TrainConfig;
use pikan_core::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: String,
    pub output_dir: PathBuf,
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainingSection,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub fluid: FluidSection,
    #[serde(default)]
    pub truth: TruthSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub variant: Variant,
    pub ns_encoder: f64,
    pub ns_decoder: f64,
    pub alpha: f64,
    pub beta: f64,
    pub degree: usize,
    #[serde(default = "default_n_pde")]
    pub n_pde: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_pde() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Where the dataset directory lives, relative to `output_dir`.
    #[serde(default = "default_dataset_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_nonagons")]
    pub nonagons: usize,
    #[serde(default = "default_octagons")]
    pub octagons: usize,
    #[serde(default = "default_heptagons")]
    pub heptagons: usize,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_interior")]
    pub interior: usize,
    #[serde(default = "default_boundary")]
    pub boundary: usize,
    #[serde(default = "default_outer")]
    pub outer: usize,
    #[serde(default = "default_lattice_sensors")]
    pub lattice_sensors: usize,
    #[serde(default = "default_ring_sensors")]
    pub ring_sensors: usize,
    #[serde(default = "default_surface_sensors")]
    pub surface_sensors: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dataset_dir() -> PathBuf {
    PathBuf::from("dataset")
}
fn default_nonagons() -> usize {
    40
}
fn default_octagons() -> usize {
    45
}
fn default_heptagons() -> usize {
    50
}
fn default_n_points() -> usize {
    5000
}
fn default_interior() -> usize {
    4340
}
fn default_boundary() -> usize {
    660
}
fn default_outer() -> usize {
    492
}
fn default_lattice_sensors() -> usize {
    80
}
fn default_ring_sensors() -> usize {
    25
}
fn default_surface_sensors() -> usize {
    25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSection {
    pub rho: f64,
    pub mu: f64,
    pub kappa: f64,
    pub cp: f64,
    pub gravity: f64,
    pub beta_exp: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub t_ref: f64,
}

impl Default for FluidSection {
    fn default() -> Self {
        let p = FluidParams::ra1e5();
        Self {
            rho: p.rho,
            mu: p.mu,
            kappa: p.kappa,
            cp: p.cp,
            gravity: p.g,
            beta_exp: p.beta_exp,
            t_hot: p.t_hot,
            t_cold: p.t_cold,
            t_ref: p.t_ref,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthSection {
    /// `"hydrostatic"` or `"trigonometric"`.
    pub manufactured: Option<String>,
    /// Hydrostatic bulk temperature; defaults to the cold-wall value so
    /// the manufactured data stay consistent with the boundary loss.
    pub hydrostatic_temperature: Option<f64>,
    /// Directory of external solver field files named `<geometry id>.txt`.
    pub external_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// Geometry ids to emit surface profiles for; empty means all.
    pub profile_geometries: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.network_config()?;
        self.cloud_counts().validate()?;
        self.fluid_params().validate()?;
        if self.truth.manufactured.is_some() && self.truth.external_dir.is_some() {
            return Err(Error::Config(
                "choose either manufactured truth or an external directory, not both".into(),
            ));
        }
        if let Some(name) = &self.truth.manufactured {
            self.manufactured_case()?;
            let _ = name;
        }
        Ok(())
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        Ok(NetworkConfig {
            variant: self.network.variant,
            ns_encoder: self.network.ns_encoder,
            ns_decoder: self.network.ns_decoder,
            jacobi: JacobiParams::new(self.network.alpha, self.network.beta, self.network.degree)?,
            n_pde: self.network.n_pde,
            seed: self.network.seed,
        })
    }

    pub fn train_config(&self, checkpoint_path: Option<PathBuf>) -> TrainConfig {
        TrainConfig {
            learning_rate: self.training.learning_rate,
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            adam_beta1: self.training.adam_beta1,
            adam_beta2: self.training.adam_beta2,
            adam_eps: self.training.adam_eps,
            seed: self.training.seed,
            checkpoint_path,
        }
    }

    pub fn fluid_params(&self) -> FluidParams {
        FluidParams {
            rho: self.fluid.rho,
            mu: self.fluid.mu,
            kappa: self.fluid.kappa,
            cp: self.fluid.cp,
            g: self.fluid.gravity,
            beta_exp: self.fluid.beta_exp,
            t_hot: self.fluid.t_hot,
            t_cold: self.fluid.t_cold,
            t_ref: self.fluid.t_ref,
        }
    }

    pub fn cloud_counts(&self) -> CloudCounts {
        CloudCounts {
            n: self.dataset.n_points,
            interior: self.dataset.interior,
            boundary: self.dataset.boundary,
            outer: self.dataset.outer,
        }
    }

    pub fn sensor_counts(&self) -> SensorCounts {
        SensorCounts {
            lattice: self.dataset.lattice_sensors,
            ring: self.dataset.ring_sensors,
            surface: self.dataset.surface_sensors,
        }
    }

    pub fn manufactured_case(&self) -> Result<Option<ManufacturedCase>> {
        match self.truth.manufactured.as_deref() {
            None => Ok(None),
            Some("hydrostatic") => {
                let c = self
                    .truth
                    .hydrostatic_temperature
                    .unwrap_or(self.fluid.t_cold);
                Ok(Some(ManufacturedCase::Hydrostatic { temperature: c }))
            }
            Some("trigonometric") => Ok(Some(ManufacturedCase::Trigonometric)),
            Some(other) => Err(Error::Config(format!(
                "unknown manufactured case {other:?} (expected hydrostatic or trigonometric)"
            ))),
        }
    }

    pub fn dataset_dir(&self, out_override: Option<&Path>) -> PathBuf {
        self.resolved_output_dir(out_override).join(&self.dataset.dir)
    }

    pub fn resolved_output_dir(&self, out_override: Option<&Path>) -> PathBuf {
        out_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.output_dir.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = "1"
output_dir = "runs/demo"

[network]
variant = "full_kan"
ns_encoder = 0.5
ns_decoder = 0.5
alpha = -0.5
beta = -0.5
degree = 2

[dataset]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.training.epochs, 2500);
        assert_eq!(cfg.training.batch_size, 7);
        assert_eq!(cfg.dataset.n_points, 5000);
        assert_eq!(cfg.dataset.heptagons, 50);
        let (ra, pr) = pikan_core::physics::dimensionless(&cfg.fluid_params(), 2.0);
        assert!((ra - 1e5).abs() / 1e5 < 1e-12);
        assert!((pr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[surprise]\nkey = 1\n");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
        let text = MINIMAL.replace("[dataset]", "[dataset]\nwhat = 3");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn schema_version_is_required_and_checked() {
        let text = MINIMAL.replace("schema_version = \"1\"", "schema_version = \"99\"");
        let cfg: ExperimentConfig = toml::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
        let text = MINIMAL.replace("schema_version = \"1\"\n", "");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn truth_sources_are_mutually_exclusive() {
        let text = format!(
            "{MINIMAL}\n[truth]\nmanufactured = \"hydrostatic\"\nexternal_dir = \"x\"\n"
        );
        let cfg: ExperimentConfig = toml::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
