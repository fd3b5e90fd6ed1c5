//! Dataset directory layout: a TOML manifest plus per-geometry cloud and
//! truth files.
//!
//! ```text
//! <dir>/manifest.toml
//! <dir>/clouds/<id>.txt      x y role vel_sensor pt_sensor
//! <dir>/truth/<id>.txt       x y u v p T   (optional)
//! ```

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{self, CloudCounts, GeometrySpec, PointCloud, SensorCounts, Shape};
use crate::groundtruth::{self, FieldSolution};
use crate::physics::Observations;

pub const MANIFEST_SCHEMA_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestGeometry {
    pub id: String,
    pub shape: Shape,
    pub side_length: f64,
    pub omega_deg: f64,
    pub seed: u64,
    pub cloud: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: String,
    /// Column order of the cloud files.
    pub cloud_columns: String,
    pub outer_wall_temperature: f64,
    pub counts: CloudCounts,
    pub sensors: SensorCounts,
    pub geometries: Vec<ManifestGeometry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Ingestion(format!(
                "manifest schema {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.counts.validate()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Inputs for writing one dataset directory.
pub struct DatasetWriter<'a> {
    pub specs: &'a [GeometrySpec],
    pub counts: CloudCounts,
    pub sensors: SensorCounts,
    pub outer_wall_temperature: f64,
    pub base_seed: u64,
    /// When set, truth files are synthesized from this case.
    pub truth: Option<&'a groundtruth::ManufacturedCase>,
    pub fluid: &'a crate::physics::FluidParams,
}

/// A dataset loaded back into memory.
pub struct Dataset {
    pub manifest: Manifest,
    pub clouds: Vec<PointCloud>,
    pub truths: Vec<Option<FieldSolution>>,
}

impl Dataset {
    /// Observations for every geometry; errors if any truth is missing.
    pub fn observations(&self) -> Result<Vec<Observations>> {
        self.clouds
            .iter()
            .zip(&self.truths)
            .enumerate()
            .map(|(i, (cloud, truth))| {
                let truth = truth.as_ref().ok_or_else(|| {
                    Error::Ingestion(format!(
                        "geometry {} has no truth file; observations unavailable",
                        self.manifest.geometries[i].id
                    ))
                })?;
                groundtruth::observations(truth, cloud)
            })
            .collect()
    }
}

/// Generates clouds (and truth files when configured) under `dir`.
/// Deterministic: per-geometry seeds are `base_seed + index`.
pub fn write_dataset(dir: &Path, writer: &DatasetWriter<'_>) -> Result<Manifest> {
    writer.counts.validate()?;
    std::fs::create_dir_all(dir.join("clouds"))?;
    if writer.truth.is_some() {
        std::fs::create_dir_all(dir.join("truth"))?;
    }
    let mut geometries = Vec::with_capacity(writer.specs.len());
    for (i, spec) in writer.specs.iter().enumerate() {
        let seed = writer.base_seed + i as u64;
        let cloud = geometry::build_cloud(
            spec,
            &writer.counts,
            &writer.sensors,
            writer.outer_wall_temperature,
            seed,
        )?;
        let id = spec.id();
        let cloud_rel = PathBuf::from("clouds").join(format!("{id}.txt"));
        geometry::write_cloud_file(&dir.join(&cloud_rel), &cloud)?;
        let truth_rel = match writer.truth {
            Some(case) => {
                let rel = PathBuf::from("truth").join(format!("{id}.txt"));
                let fields = case.fields(writer.fluid, &cloud);
                groundtruth::write_field_file(&dir.join(&rel), &cloud, &fields)?;
                Some(rel)
            }
            None => None,
        };
        geometries.push(ManifestGeometry {
            id,
            shape: spec.shape,
            side_length: spec.side_length,
            omega_deg: spec.omega_deg,
            seed,
            cloud: cloud_rel,
            truth: truth_rel,
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION.to_string(),
        cloud_columns: geometry::CLOUD_FILE_COLUMNS.to_string(),
        outer_wall_temperature: writer.outer_wall_temperature,
        counts: writer.counts,
        sensors: writer.sensors,
        geometries,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// Loads a dataset directory written by [`write_dataset`] (or assembled
/// by hand in the same layout, e.g. with external solver truth files).
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(dir)?;
    let mut clouds = Vec::with_capacity(manifest.geometries.len());
    let mut truths = Vec::with_capacity(manifest.geometries.len());
    for g in &manifest.geometries {
        let cloud =
            geometry::read_cloud_file(&dir.join(&g.cloud), manifest.outer_wall_temperature)?;
        let truth = match &g.truth {
            Some(rel) => Some(groundtruth::load_external_truth(&dir.join(rel), &cloud)?),
            None => None,
        };
        clouds.push(cloud);
        truths.push(truth);
    }
    Ok(Dataset {
        manifest,
        clouds,
        truths,
    })
}
