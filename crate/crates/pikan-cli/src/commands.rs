//! The four pipeline commands behind the `pikan` binary.

use ndarray::Ix3;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pikan_core::dataset::{self, Dataset, DatasetWriter};
use pikan_core::geometry::{self, GeometrySpec};
use pikan_core::groundtruth::{DirectFieldAdapter, FieldSolution, ManufacturedCase};
use pikan_core::network::{self, Family, LayerPlan, NetworkState};
use pikan_core::physics::{FieldMap, FluidParams};
use pikan_core::trainer::{self, Checkpoint, GeometrySample};
use pikan_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::plot;

/// Copies the experiment configuration verbatim next to its outputs.
fn echo_config(config_path: &Path, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::copy(config_path, out_dir.join("config.toml"))?;
    Ok(())
}

fn specs_from_config(cfg: &ExperimentConfig) -> Result<Vec<GeometrySpec>> {
    geometry::generate_specs(
        cfg.dataset.nonagons,
        cfg.dataset.octagons,
        cfg.dataset.heptagons,
    )
}

/// `pikan generate`: writes the dataset directory (manifest, cloud files,
/// and truth files when truth is configured).
pub fn cmd_generate(cfg: &ExperimentConfig, config_path: &Path, out: Option<&Path>) -> Result<()> {
    let out_dir = cfg.resolved_output_dir(out);
    echo_config(config_path, &out_dir)?;
    let dir = cfg.dataset_dir(out);
    let specs = specs_from_config(cfg)?;
    let fluid = cfg.fluid_params();
    let case = cfg.manufactured_case()?;

    let manifest = dataset::write_dataset(
        &dir,
        &DatasetWriter {
            specs: &specs,
            counts: cfg.cloud_counts(),
            sensors: cfg.sensor_counts(),
            outer_wall_temperature: fluid.t_cold,
            base_seed: cfg.dataset.seed,
            truth: case.as_ref(),
            fluid: &fluid,
        },
    )?;

    // External truth: import solver fields for every geometry, validating
    // coordinates against the freshly written clouds.
    if let Some(ext) = &cfg.truth.external_dir {
        let truth_dir = dir.join("truth");
        std::fs::create_dir_all(&truth_dir)?;
        let mut manifest = manifest;
        let results: Vec<Result<()>> = manifest
            .geometries
            .par_iter()
            .map(|g| {
                let src = ext.join(format!("{}.txt", g.id));
                if !src.exists() {
                    return Err(Error::Ingestion(format!(
                        "external truth for geometry {} not found at {}",
                        g.id,
                        src.display()
                    )));
                }
                let cloud = geometry::read_cloud_file(&dir.join(&g.cloud), fluid.t_cold)?;
                let fields = pikan_core::groundtruth::load_external_truth(&src, &cloud)?;
                pikan_core::groundtruth::write_field_file(
                    &truth_dir.join(format!("{}.txt", g.id)),
                    &cloud,
                    &fields,
                )
            })
            .collect();
        for r in results {
            r?;
        }
        for g in &mut manifest.geometries {
            g.truth = Some(PathBuf::from("truth").join(format!("{}.txt", g.id)));
        }
        manifest.save(&dir)?;
    }

    println!(
        "wrote {} geometries to {}",
        specs.len(),
        dir.display()
    );
    Ok(())
}

fn load_training_dataset(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(Dataset, Vec<GeometrySample>)> {
    let dir = cfg.dataset_dir(out);
    let data = dataset::load_dataset(&dir)?;
    let observations = data.observations()?;
    let fluid = cfg.fluid_params();
    let case = cfg.manufactured_case()?;
    let samples = data
        .clouds
        .iter()
        .zip(observations)
        .map(|(cloud, obs)| GeometrySample {
            cloud: cloud.clone(),
            observations: obs,
            sources: case.as_ref().and_then(|c| c.source_terms(&fluid, cloud)),
        })
        .collect();
    Ok((data, samples))
}

#[derive(Serialize)]
struct RunSummary {
    best_epoch: usize,
    best_loss: Option<f64>,
    epochs: usize,
    trainable_parameters: usize,
    wall_seconds: f64,
}

/// `pikan train`: optimizes the configured network on the dataset and
/// writes the best checkpoint, the full history, and a run summary.
pub fn cmd_train(cfg: &ExperimentConfig, config_path: &Path, out: Option<&Path>) -> Result<()> {
    let out_dir = cfg.resolved_output_dir(out);
    echo_config(config_path, &out_dir)?;
    let (_, samples) = load_training_dataset(cfg, out)?;
    let net_config = cfg.network_config()?;
    let fluid = cfg.fluid_params();
    let checkpoint_path = out_dir.join("checkpoint.json");
    let train_config = cfg.train_config(Some(checkpoint_path.clone()));

    let started = Instant::now();
    let (state, history) = trainer::train(&samples, &train_config, &net_config, &fluid)?;
    let wall = started.elapsed().as_secs_f64();

    trainer::write_history(&out_dir.join("history.csv"), &history)?;
    if history.best.is_none() {
        // Zero-epoch runs still leave a usable state behind.
        Checkpoint {
            format_version: trainer::CHECKPOINT_FORMAT_VERSION,
            optimizer: trainer::AdamState::new(&state),
            network: state.clone(),
            epoch: 0,
            best_loss: None,
        }
        .save(&checkpoint_path)?;
    }
    let summary = RunSummary {
        best_epoch: history.best_epoch().unwrap_or(0),
        best_loss: history.best_loss(),
        epochs: history.epochs.len(),
        trainable_parameters: state.literal_param_count(),
        wall_seconds: wall,
    };
    let file = std::fs::File::create(out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &summary)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    match summary.best_loss {
        Some(loss) => println!(
            "trained {} epochs; best loss {loss:.6e} at epoch {}; checkpoint {}",
            summary.epochs,
            summary.best_epoch,
            checkpoint_path.display()
        ),
        None => println!(
            "trained 0 epochs; wrote the initialized state to {}",
            checkpoint_path.display()
        ),
    }
    Ok(())
}

/// Model used by evaluation: a trained checkpoint, or the direct-field
/// adapter when no checkpoint is given and manufactured truth exists.
enum EvalModel {
    Network(Box<NetworkState>),
    Adapter(ManufacturedCase),
}

impl EvalModel {
    fn predict(&self, cloud: &geometry::PointCloud, fluid: &FluidParams) -> Result<FieldSolution> {
        match self {
            EvalModel::Network(state) => {
                let coords = cloud
                    .coords
                    .view()
                    .into_shape_with_order((1, cloud.n(), 2))
                    .expect("contiguous coords")
                    .into_dimensionality::<Ix3>()
                    .expect("rank 3");
                let out = network::forward(state, coords)?;
                let chan = |c: usize| out.index_axis(ndarray::Axis(2), c).row(0).to_owned();
                Ok(FieldSolution {
                    u: chan(0),
                    v: chan(1),
                    p: chan(2),
                    t: chan(3),
                })
            }
            EvalModel::Adapter(case) => Ok(case.fields(fluid, cloud)),
        }
    }

    fn as_field_map<'a>(&'a self, fluid: &'a FluidParams) -> Box<dyn FieldMap + 'a> {
        match self {
            EvalModel::Network(state) => Box::new(EvalNetworkMap(state)),
            EvalModel::Adapter(case) => Box::new(DirectFieldAdapter {
                case,
                params: fluid,
            }),
        }
    }
}

/// Error tables only need field values; skip the derivative machinery.
struct EvalNetworkMap<'a>(&'a NetworkState);

impl FieldMap for EvalNetworkMap<'_> {
    fn fields_and_derivatives(
        &self,
        cloud: &geometry::PointCloud,
    ) -> Result<(FieldSolution, pikan_core::physics::FieldDerivatives)> {
        let coords = cloud
            .coords
            .view()
            .into_shape_with_order((1, cloud.n(), 2))
            .expect("contiguous coords")
            .into_dimensionality::<Ix3>()
            .expect("rank 3");
        let out = network::forward(self.0, coords)?;
        let chan = |c: usize| out.index_axis(ndarray::Axis(2), c).row(0).to_owned();
        Ok((
            FieldSolution {
                u: chan(0),
                v: chan(1),
                p: chan(2),
                t: chan(3),
            },
            pikan_core::physics::FieldDerivatives::zeros(0),
        ))
    }
}

#[derive(Serialize)]
struct ErrorTableFile<'a> {
    note: &'a str,
    table: &'a trainer::ErrorTable,
}

const REPRODUCTION_NOTE: &str = "published benchmark error magnitudes require the original \
finite-element ground truth and full-scale training (135 geometries x 2500 epochs); this \
table scores whatever truth the dataset supplies, in the published row structure";

/// `pikan evaluate`: error table, surface-temperature profiles, loss
/// evolution data, and rendered plots.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    config_path: &Path,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let out_dir = cfg.resolved_output_dir(out);
    echo_config(config_path, &out_dir)?;
    let eval_dir = out_dir.join("evaluation");
    std::fs::create_dir_all(eval_dir.join("profiles"))?;
    std::fs::create_dir_all(eval_dir.join("plots"))?;

    let dir = cfg.dataset_dir(out);
    let data = dataset::load_dataset(&dir)?;
    let fluid = cfg.fluid_params();

    let model = match checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if let (Some(stored), Ok(expected)) = (ck.network.config, cfg.network_config()) {
                if stored != expected {
                    return Err(Error::Config(format!(
                        "checkpoint was trained with a different network configuration \
                         ({stored:?} vs {expected:?})"
                    )));
                }
            }
            EvalModel::Network(Box::new(ck.network))
        }
        None => match cfg.manufactured_case()? {
            Some(case) => EvalModel::Adapter(case),
            None => {
                return Err(Error::Config(
                    "evaluate needs --checkpoint, or manufactured truth for the \
                     direct-field adapter"
                        .into(),
                ))
            }
        },
    };

    // Error table over every geometry with truth.
    let mut scored = Vec::new();
    for (cloud, truth) in data.clouds.iter().zip(&data.truths) {
        let truth = truth.as_ref().ok_or_else(|| {
            Error::Ingestion("error table requires truth for every geometry".into())
        })?;
        scored.push((cloud.clone(), truth.clone()));
    }
    let map = model.as_field_map(&fluid);
    let table = trainer::error_table(map.as_ref(), &scored)?;
    drop(map);
    let file = std::fs::File::create(eval_dir.join("error_table.json"))?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(file),
        &ErrorTableFile {
            note: REPRODUCTION_NOTE,
            table: &table,
        },
    )
    .map_err(|e| Error::Serialization(e.to_string()))?;
    let mut text = format!("{:<12} {:>12} {:>12} {:>12}\n", "quantity", "average", "maximum", "minimum");
    for (name, stats) in table.rows() {
        text.push_str(&format!(
            "{:<12} {:>12.5e} {:>12.5e} {:>12.5e}\n",
            name, stats.average, stats.maximum, stats.minimum
        ));
    }
    std::fs::write(eval_dir.join("error_table.txt"), text)?;

    // Surface-temperature profiles: predictions and, when available, truth.
    let selected: Vec<usize> = if cfg.evaluation.profile_geometries.is_empty() {
        (0..data.clouds.len()).collect()
    } else {
        cfg.evaluation
            .profile_geometries
            .iter()
            .map(|want| {
                data.manifest
                    .geometries
                    .iter()
                    .position(|g| &g.id == want)
                    .ok_or_else(|| {
                        Error::Config(format!("profile geometry {want:?} not in the dataset"))
                    })
            })
            .collect::<Result<_>>()?
    };
    for &gi in &selected {
        let cloud = &data.clouds[gi];
        let id = &data.manifest.geometries[gi].id;
        let pred = model.predict(cloud, &fluid)?;
        let profile = trainer::surface_profile(pred.t.view(), cloud);
        plot::write_plot_data(
            &eval_dir.join("profiles").join(format!("{id}.txt")),
            "theta_deg temperature",
            &profile,
        )?;
        // Prediction first, truth second (see SERIES_COLORS for hues).
        let truth_profile = data.truths[gi]
            .as_ref()
            .map(|t| trainer::surface_profile(t.t.view(), cloud));
        let mut series: Vec<&[(f64, f64)]> = vec![&profile];
        if let Some(tp) = &truth_profile {
            series.push(tp);
        }
        plot::render_line_plot(
            &eval_dir.join("plots").join(format!("{id}_surface_temperature.png")),
            &series,
            false,
        )?;
    }

    // Loss evolution, when the output directory holds a training history.
    let history_path = out_dir.join("history.csv");
    if history_path.exists() {
        let history = trainer::read_history(&history_path)?;
        let points: Vec<(f64, f64)> = history
            .epochs
            .iter()
            .map(|r| (r.epoch as f64, r.loss.total))
            .collect();
        plot::write_plot_data(
            &eval_dir.join("loss_evolution.txt"),
            "epoch total_loss",
            &points,
        )?;
        plot::render_line_plot(
            &eval_dir.join("plots").join("loss_evolution.png"),
            &[&points],
            true,
        )?;
    } else {
        eprintln!(
            "note: {} not found; skipping the loss-evolution plot",
            history_path.display()
        );
    }

    println!("evaluation written to {}", eval_dir.display());
    Ok(())
}

/// `pikan count-params`: prints the per-layer breakdown and the total.
pub fn cmd_count_params(cfg: &ExperimentConfig) -> Result<()> {
    let net_config = cfg.network_config()?;
    let plan = network::plan(&net_config)?;
    let k = plan.jacobi.basis_len();
    let row = |section: &str, i: usize, l: &LayerPlan| {
        let (kind, core) = match l.family {
            Family::Kan => ("kan", k * l.d_in * l.d_out),
            Family::Mlp => ("mlp", l.d_in * l.d_out + l.d_out),
        };
        let affine = if l.batch_norm && l.family == Family::Kan {
            2 * l.d_out
        } else {
            0
        };
        println!(
            "{section:<16} {i:>2}  {kind}  {:>5} -> {:<5} params {core:>9}  norm-affine {affine:>6}",
            l.d_in, l.d_out
        );
    };
    for (i, l) in plan.encoder_local.iter().enumerate() {
        row("encoder/local", i, l);
    }
    for (i, l) in plan.encoder_global.iter().enumerate() {
        row("encoder/global", i, l);
    }
    for (i, l) in plan.decoder.iter().enumerate() {
        row("decoder", i, l);
    }
    println!("{}", plan.param_count());
    Ok(())
}
