//! Optimization protocol: Adam over geometry mini-batches with
//! min-loss checkpointing, plus the evaluation metrics (relative-L2
//! error tables and inner-surface temperature profiles).

use ndarray::{Array1, Array3, ArrayD, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::groundtruth::FieldSolution;
use crate::network::{self, NetworkConfig, NetworkState, NormMode, TapeForward};
use crate::physics::{FieldMap, FluidParams, LossBreakdown, Observations, SourceTerms};
use crate::tape::{Tape, Var};

/// Optimizer hyperparameters and run controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Best-snapshot checkpoint target; written atomically on every
    /// improvement when set.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            epochs: 2500,
            batch_size: 7,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_path: None,
        }
    }
}

/// One geometry of the training set.
#[derive(Debug, Clone)]
pub struct GeometrySample {
    pub cloud: PointCloud,
    pub observations: Observations,
    /// Manufactured source terms over the interior set, if any.
    pub sources: Option<SourceTerms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub seconds: f64,
}

/// Per-epoch loss trace and the best snapshot bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// `(epoch, loss)` of the retained snapshot; `None` for zero-epoch runs.
    pub best: Option<(usize, f64)>,
}

impl TrainHistory {
    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.map(|(_, l)| l)
    }
}

/// Adam first/second moment accumulators, aligned with
/// [`NetworkState::param_views`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(state: &NetworkState) -> Self {
        let zeros: Vec<ArrayD<f64>> = state
            .param_views()
            .iter()
            .map(|p| ArrayD::zeros(p.raw_dim()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn apply(&mut self, state: &mut NetworkState, grads: &[ArrayD<f64>], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.adam_beta1.powi(t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(t);
        for (i, mut param) in state.param_views_mut().into_iter().enumerate() {
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(g, |mi, &gi| {
                *mi = cfg.adam_beta1 * *mi + (1.0 - cfg.adam_beta1) * gi
            });
            v.zip_mut_with(g, |vi, &gi| {
                *vi = cfg.adam_beta2 * *vi + (1.0 - cfg.adam_beta2) * gi * gi
            });
            ndarray::Zip::from(&mut param)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &mi, &vi| {
                    let mhat = mi / bc1;
                    let vhat = vi / bc2;
                    *p -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
                });
        }
    }
}

/// Everything needed to resume or evaluate a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub network: NetworkState,
    pub optimizer: AdamState,
    /// Epoch of the stored snapshot; 0 for an untrained state.
    pub epoch: usize,
    /// Dataset loss of the snapshot; absent for an untrained state
    /// (JSON cannot carry infinities).
    pub best_loss: Option<f64>,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

impl Checkpoint {
    /// Atomic write: serialize to a sibling temp file, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let file = std::fs::File::create(&tmp)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Ingestion(format!(
                "checkpoint format {} unsupported (expected {})",
                ck.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        Ok(ck)
    }
}

/// Channel handles of the output jet split into per-field scalars.
struct FieldVars {
    val: [Var; 4],
    dx: [Var; 4],
    dy: [Var; 4],
    dxx: [Var; 4],
    dyy: [Var; 4],
}

fn split_fields(tape: &mut Tape, fwd: &TapeForward) -> FieldVars {
    let out = fwd.output;
    let shape = tape.value(out.v).shape().to_vec();
    let comp = |tape: &mut Tape, v: Option<Var>| v.unwrap_or_else(|| tape.zeros(&shape));
    let dx = comp(tape, out.dx);
    let dy = comp(tape, out.dy);
    let dxx = comp(tape, out.dxx);
    let dyy = comp(tape, out.dyy);
    let split = |tape: &mut Tape, v: Var| -> [Var; 4] {
        [0, 1, 2, 3].map(|c| tape.select_chan(v, c))
    };
    FieldVars {
        val: split(tape, out.v),
        dx: split(tape, dx),
        dy: split(tape, dy),
        dxx: split(tape, dxx),
        dyy: split(tape, dyy),
    }
}

const U: usize = 0;
const V: usize = 1;
const P: usize = 2;
const T: usize = 3;

/// Builds the nine residual terms of one geometry on the tape.
fn geometry_loss_terms(
    tape: &mut Tape,
    fields: &FieldVars,
    batch_row: usize,
    sample: &GeometrySample,
    params: &FluidParams,
) -> [Var; 9] {
    let rows =
        |idx: &[usize]| Arc::new(idx.iter().map(|&i| (batch_row, i)).collect::<Vec<_>>());
    let interior = rows(&sample.cloud.idx_interior);
    let boundary = rows(&sample.cloud.boundary_indices());
    let outer = rows(&sample.cloud.idx_outer_wall);
    let vel_sensors = rows(&sample.cloud.idx_vel_sensors);
    let pt_sensors = rows(&sample.cloud.idx_pt_sensors);

    let g = |tape: &mut Tape, v: Var, rows: &Arc<Vec<(usize, usize)>>| {
        tape.gather_rows(v, Arc::clone(rows))
    };

    // Interior gathers.
    let u = g(tape, fields.val[U], &interior);
    let v = g(tape, fields.val[V], &interior);
    let t = g(tape, fields.val[T], &interior);
    let u_x = g(tape, fields.dx[U], &interior);
    let u_y = g(tape, fields.dy[U], &interior);
    let v_x = g(tape, fields.dx[V], &interior);
    let v_y = g(tape, fields.dy[V], &interior);
    let p_x = g(tape, fields.dx[P], &interior);
    let p_y = g(tape, fields.dy[P], &interior);
    let t_x = g(tape, fields.dx[T], &interior);
    let t_y = g(tape, fields.dy[T], &interior);
    let u_xx = g(tape, fields.dxx[U], &interior);
    let u_yy = g(tape, fields.dyy[U], &interior);
    let v_xx = g(tape, fields.dxx[V], &interior);
    let v_yy = g(tape, fields.dyy[V], &interior);
    let t_xx = g(tape, fields.dxx[T], &interior);
    let t_yy = g(tape, fields.dyy[T], &interior);

    let mean_sq = |tape: &mut Tape, r: Var| {
        let sq = tape.square(r);
        tape.mean_all(sq)
    };

    // Continuity: mean (u_x + v_y)².
    let div = tape.add(u_x, v_y);
    let continuity = mean_sq(tape, div);

    // Momentum x: ρ(u·u_x + v·u_y) + p_x − μ(u_xx + u_yy) − s_mx.
    let conv_x = {
        let a = tape.mul(u, u_x);
        let b = tape.mul(v, u_y);
        let s = tape.add(a, b);
        tape.scale(s, params.rho)
    };
    let lap_u = tape.add(u_xx, u_yy);
    let visc_x = tape.scale(lap_u, -params.mu);
    let mut r_mx = tape.add(conv_x, p_x);
    r_mx = tape.add(r_mx, visc_x);
    if let Some(src) = &sample.sources {
        let s = tape.leaf(src.momentum_x.clone().into_dyn());
        r_mx = tape.sub(r_mx, s);
    }
    let momentum_x = mean_sq(tape, r_mx);

    // Momentum y adds the Boussinesq force from the predicted temperature.
    let conv_y = {
        let a = tape.mul(u, v_x);
        let b = tape.mul(v, v_y);
        let s = tape.add(a, b);
        tape.scale(s, params.rho)
    };
    let lap_v = tape.add(v_xx, v_yy);
    let visc_y = tape.scale(lap_v, -params.mu);
    let fy = {
        let shifted = tape.offset(t, -params.t_ref);
        tape.scale(shifted, params.rho * params.g * params.beta_exp)
    };
    let mut r_my = tape.add(conv_y, p_y);
    r_my = tape.add(r_my, visc_y);
    r_my = tape.sub(r_my, fy);
    if let Some(src) = &sample.sources {
        let s = tape.leaf(src.momentum_y.clone().into_dyn());
        r_my = tape.sub(r_my, s);
    }
    let momentum_y = mean_sq(tape, r_my);

    // Energy: ρ(u·T_x + v·T_y) − (κ/c_p)(T_xx + T_yy) − s_T.
    let conv_t = {
        let a = tape.mul(u, t_x);
        let b = tape.mul(v, t_y);
        let s = tape.add(a, b);
        tape.scale(s, params.rho)
    };
    let lap_t = tape.add(t_xx, t_yy);
    let diff_t = tape.scale(lap_t, -params.kappa / params.cp);
    let mut r_e = tape.add(conv_t, diff_t);
    if let Some(src) = &sample.sources {
        let s = tape.leaf(src.energy.clone().into_dyn());
        r_e = tape.sub(r_e, s);
    }
    let energy = mean_sq(tape, r_e);

    // Velocity Dirichlet condition on all boundaries.
    let u_b = g(tape, fields.val[U], &boundary);
    let v_b = g(tape, fields.val[V], &boundary);
    let bc_u = tape.leaf(sample.cloud.bc_velocity.column(0).to_owned().into_dyn());
    let bc_v = tape.leaf(sample.cloud.bc_velocity.column(1).to_owned().into_dyn());
    let du = tape.sub(u_b, bc_u);
    let dv = tape.sub(v_b, bc_v);
    let du2 = tape.square(du);
    let dv2 = tape.square(dv);
    let sum_bc = tape.add(du2, dv2);
    let velocity_bc = tape.mean_all(sum_bc);

    // Temperature condition on the outer wall only.
    let t_o = g(tape, fields.val[T], &outer);
    let bc_t = tape.leaf(sample.cloud.bc_temperature_outer.clone().into_dyn());
    let dt = tape.sub(t_o, bc_t);
    let temperature_outer_bc = mean_sq(tape, dt);

    // Sparse observations.
    let u_s = g(tape, fields.val[U], &vel_sensors);
    let v_s = g(tape, fields.val[V], &vel_sensors);
    let obs_u = tape.leaf(
        Array1::from_iter(sample.observations.velocity.iter().map(|&(u, _)| u)).into_dyn(),
    );
    let obs_v = tape.leaf(
        Array1::from_iter(sample.observations.velocity.iter().map(|&(_, v)| v)).into_dyn(),
    );
    let du_s = tape.sub(u_s, obs_u);
    let dv_s = tape.sub(v_s, obs_v);
    let du_s2 = tape.square(du_s);
    let dv_s2 = tape.square(dv_s);
    let sum_obs = tape.add(du_s2, dv_s2);
    let velocity_obs = tape.mean_all(sum_obs);

    let p_s = g(tape, fields.val[P], &pt_sensors);
    let obs_p = tape.leaf(Array1::from_vec(sample.observations.pressure.clone()).into_dyn());
    let dp = tape.sub(p_s, obs_p);
    let pressure_obs = mean_sq(tape, dp);

    let t_s = g(tape, fields.val[T], &pt_sensors);
    let obs_t = tape.leaf(Array1::from_vec(sample.observations.temperature.clone()).into_dyn());
    let dt_s = tape.sub(t_s, obs_t);
    let temperature_obs = mean_sq(tape, dt_s);

    [
        continuity,
        momentum_x,
        momentum_y,
        energy,
        velocity_bc,
        temperature_outer_bc,
        velocity_obs,
        pressure_obs,
        temperature_obs,
    ]
}

/// Assembles the batch loss (mean of per-geometry nine-term sums) on the
/// tape. Returns the scalar loss node and the per-geometry term values.
fn batch_loss(
    tape: &mut Tape,
    fwd: &TapeForward,
    batch: &[&GeometrySample],
    params: &FluidParams,
) -> (Var, Vec<LossBreakdown>) {
    let fields = split_fields(tape, fwd);
    let mut totals = Vec::with_capacity(batch.len());
    let mut breakdowns = Vec::with_capacity(batch.len());
    for (row, sample) in batch.iter().enumerate() {
        let terms = geometry_loss_terms(tape, &fields, row, sample, params);
        let comps: [f64; 9] =
            terms.map(|v| tape.value(v).first().copied().unwrap_or(f64::NAN));
        breakdowns.push(LossBreakdown::from_components(comps));
        totals.push(tape.sum_scalars(&terms));
    }
    let sum = tape.sum_scalars(&totals);
    let loss = tape.scale(sum, 1.0 / batch.len() as f64);
    (loss, breakdowns)
}

fn batch_coords(samples: &[&GeometrySample]) -> Array3<f64> {
    let b = samples.len();
    let n = samples[0].cloud.n();
    let mut coords = Array3::zeros((b, n, 2));
    for (bi, s) in samples.iter().enumerate() {
        coords
            .index_axis_mut(ndarray::Axis(0), bi)
            .assign(&s.cloud.coords);
    }
    coords
}

fn validate_dataset(dataset: &[GeometrySample], config: &TrainConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    let n = dataset[0].cloud.n();
    for (i, s) in dataset.iter().enumerate() {
        s.cloud.validate()?;
        if s.cloud.n() != n {
            return Err(Error::InvalidArgument(format!(
                "geometry {i}: cloud size {} differs from {}",
                s.cloud.n(),
                n
            )));
        }
        if s.observations.velocity.len() != s.cloud.idx_vel_sensors.len()
            || s.observations.pressure.len() != s.cloud.idx_pt_sensors.len()
            || s.observations.temperature.len() != s.cloud.idx_pt_sensors.len()
        {
            return Err(Error::InvalidArgument(format!(
                "geometry {i}: incomplete observations"
            )));
        }
        if let Some(src) = &s.sources {
            if src.momentum_x.len() != s.cloud.idx_interior.len() {
                return Err(Error::InvalidArgument(format!(
                    "geometry {i}: sources misaligned with interior set"
                )));
            }
        }
    }
    if config.batch_size == 0 || config.batch_size > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} must lie in [1, {}]",
            config.batch_size,
            dataset.len()
        )));
    }
    Ok(())
}

/// Full-dataset loss in evaluation-normalization mode, chunked by the
/// batch size: the dataset-level objective that drives checkpointing.
pub fn dataset_loss(
    state: &NetworkState,
    dataset: &[GeometrySample],
    params: &FluidParams,
    chunk: usize,
) -> Result<LossBreakdown> {
    let mut per_geometry = Vec::with_capacity(dataset.len());
    for batch in dataset.chunks(chunk.max(1)) {
        let refs: Vec<&GeometrySample> = batch.iter().collect();
        let coords = batch_coords(&refs);
        let mut tape = Tape::new();
        let fwd = network::tape_forward(&mut tape, state, coords.view(), NormMode::Evaluation)?;
        let (_, breakdowns) = batch_loss(&mut tape, &fwd, &refs, params);
        per_geometry.extend(breakdowns);
    }
    Ok(LossBreakdown::mean(&per_geometry))
}

/// Runs the optimization protocol starting from a freshly built network.
pub fn train(
    dataset: &[GeometrySample],
    config: &TrainConfig,
    net_config: &NetworkConfig,
    params: &FluidParams,
) -> Result<(NetworkState, TrainHistory)> {
    let state = network::build(net_config)?;
    train_with_state(dataset, config, params, state)
}

/// Runs the optimization protocol from an existing state (used for custom
/// plans and resumed runs).
pub fn train_with_state(
    dataset: &[GeometrySample],
    config: &TrainConfig,
    params: &FluidParams,
    mut state: NetworkState,
) -> Result<(NetworkState, TrainHistory)> {
    validate_dataset(dataset, config)?;
    params.validate()?;
    // The nine-term loss reads exactly (u, v, p, T) channels.
    let n_out = state.plan.decoder.last().map(|l| l.d_out);
    if n_out != Some(4) {
        return Err(Error::InvalidArgument(format!(
            "the residual loss needs 4 output fields, network predicts {n_out:?}"
        )));
    }
    let mut adam = AdamState::new(&state);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = TrainHistory::default();
    let mut best: Option<(usize, f64, NetworkState, AdamState)> = None;

    let n_points = dataset[0].cloud.n();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);

        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&GeometrySample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let coords = batch_coords(&batch);
            let mut tape = Tape::new();
            let fwd =
                network::tape_forward(&mut tape, &state, coords.view(), NormMode::Training)?;
            let (loss, breakdowns) = batch_loss(&mut tape, &fwd, &batch, params);
            let loss_value = tape.value(loss).first().copied().unwrap_or(f64::NAN);
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    total: loss_value,
                    breakdown: Box::new(LossBreakdown::mean(&breakdowns)),
                });
            }
            let grads = tape.backward(loss);
            let grad_arrays: Vec<ArrayD<f64>> = fwd
                .param_vars
                .iter()
                .enumerate()
                .map(|(i, &v)| match grads.get(v) {
                    Some(g) => g.clone(),
                    None => ArrayD::zeros(adam.m[i].raw_dim()),
                })
                .collect();
            adam.apply(&mut state, &grad_arrays, config);
            state.update_running_stats(&tape, &fwd, batch.len() * n_points);
        }

        let epoch_loss = dataset_loss(&state, dataset, params, config.batch_size)?;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                total: epoch_loss.total,
                breakdown: Box::new(epoch_loss),
            });
        }
        let improved = best
            .as_ref()
            .is_none_or(|&(_, bl, _, _)| epoch_loss.total < bl);
        if improved {
            best = Some((epoch, epoch_loss.total, state.clone(), adam.clone()));
            if let Some(path) = &config.checkpoint_path {
                Checkpoint {
                    format_version: CHECKPOINT_FORMAT_VERSION,
                    network: state.clone(),
                    optimizer: adam.clone(),
                    epoch,
                    best_loss: Some(epoch_loss.total),
                }
                .save(path)?;
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    match best {
        Some((epoch, loss, snapshot, _)) => {
            history.best = Some((epoch, loss));
            Ok((snapshot, history))
        }
        None => Ok((state, history)),
    }
}

/// `‖pred − truth‖₂ / ‖truth‖₂` over an index subset.
pub fn relative_l2(
    pred: ArrayView1<'_, f64>,
    truth: ArrayView1<'_, f64>,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty index set".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in indices {
        if i >= pred.len() || i >= truth.len() {
            return Err(Error::InvalidArgument(format!("index {i} out of range")));
        }
        num += (pred[i] - truth[i]).powi(2);
        den += truth[i] * truth[i];
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "truth has zero norm over the index set".into(),
        ));
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub average: f64,
    pub maximum: f64,
    pub minimum: f64,
}

impl ErrorStats {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        Self {
            average: values.iter().sum::<f64>() / n,
            maximum: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            minimum: values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Relative-L2 statistics per predicted quantity over the whole domain,
/// plus the inner-surface temperature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub u_domain: ErrorStats,
    pub v_domain: ErrorStats,
    pub p_domain: ErrorStats,
    pub t_domain: ErrorStats,
    pub t_surface: ErrorStats,
}

impl ErrorTable {
    pub fn rows(&self) -> [(&'static str, &ErrorStats); 5] {
        [
            ("u_domain", &self.u_domain),
            ("v_domain", &self.v_domain),
            ("p_domain", &self.p_domain),
            ("t_domain", &self.t_domain),
            ("t_surface", &self.t_surface),
        ]
    }
}

/// Computes relative errors per geometry and aggregates
/// average/maximum/minimum across the dataset. Truth must be present for
/// every geometry; per-geometry skips are not allowed.
pub fn error_table(
    model: &dyn FieldMap,
    data: &[(PointCloud, FieldSolution)],
) -> Result<ErrorTable> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no geometries to evaluate".into()));
    }
    let mut per: [Vec<f64>; 5] = Default::default();
    for (cloud, truth) in data {
        if truth.len() != cloud.n() {
            return Err(Error::InvalidArgument(
                "truth does not cover the cloud".into(),
            ));
        }
        let (pred, _) = model.fields_and_derivatives(cloud)?;
        let all: Vec<usize> = (0..cloud.n()).collect();
        per[0].push(relative_l2(pred.u.view(), truth.u.view(), &all)?);
        per[1].push(relative_l2(pred.v.view(), truth.v.view(), &all)?);
        per[2].push(relative_l2(pred.p.view(), truth.p.view(), &all)?);
        per[3].push(relative_l2(pred.t.view(), truth.t.view(), &all)?);
        per[4].push(relative_l2(
            pred.t.view(),
            truth.t.view(),
            &cloud.idx_inner_wall,
        )?);
    }
    Ok(ErrorTable {
        u_domain: ErrorStats::from_values(&per[0]),
        v_domain: ErrorStats::from_values(&per[1]),
        p_domain: ErrorStats::from_values(&per[2]),
        t_domain: ErrorStats::from_values(&per[3]),
        t_surface: ErrorStats::from_values(&per[4]),
    })
}

/// Inner-surface profile of a per-point quantity: `(θ in degrees from the
/// positive x-axis, counterclockwise, value)`, sorted by θ.
pub fn surface_profile(values: ArrayView1<'_, f64>, cloud: &PointCloud) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = cloud
        .idx_inner_wall
        .iter()
        .map(|&i| {
            let theta = cloud.coords[[i, 1]]
                .atan2(cloud.coords[[i, 0]])
                .to_degrees()
                .rem_euclid(360.0);
            (theta, values[i])
        })
        .collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// History file header (comma-separated, one record per epoch).
pub fn history_header() -> String {
    let mut cols = vec!["epoch".to_string(), "total".to_string()];
    cols.extend(LossBreakdown::component_names().iter().map(|s| s.to_string()));
    cols.push("seconds".to_string());
    cols.join(",")
}

/// Writes the per-epoch loss trace as CSV.
pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut out = String::new();
    out.push_str(&history_header());
    out.push('\n');
    for rec in &history.epochs {
        out.push_str(&format!("{},{}", rec.epoch, rec.loss.total));
        for c in rec.loss.components() {
            out.push_str(&format!(",{c}"));
        }
        out.push_str(&format!(",{}\n", rec.seconds));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a history CSV written by [`write_history`].
pub fn read_history(path: &Path) -> Result<TrainHistory> {
    let text = std::fs::read_to_string(path)?;
    let mut history = TrainHistory::default();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 12 {
            return Err(Error::Ingestion(format!(
                "{}:{}: expected 12 history columns",
                path.display(),
                lineno + 1
            )));
        }
        let mut nums = [0.0f64; 11];
        for (slot, s) in nums.iter_mut().zip(&parts[1..]) {
            *slot = s.parse().map_err(|_| {
                Error::Ingestion(format!("{}:{}: bad number {s:?}", path.display(), lineno + 1))
            })?;
        }
        let comps: [f64; 9] = nums[1..10].try_into().expect("nine components");
        let mut loss = LossBreakdown::from_components(comps);
        loss.total = nums[0];
        history.epochs.push(EpochRecord {
            epoch: parts[0].parse().map_err(|_| {
                Error::Ingestion(format!("{}:{}: bad epoch", path.display(), lineno + 1))
            })?,
            loss,
            seconds: nums[10],
        });
    }
    if let Some(best) = history
        .epochs
        .iter()
        .min_by(|a, b| a.loss.total.partial_cmp(&b.loss.total).unwrap())
    {
        history.best = Some((best.epoch, best.loss.total));
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, CloudCounts, GeometrySpec, SensorCounts, Shape};
    use crate::groundtruth::{hydrostatic_case, observations, DirectFieldAdapter};
    use crate::jacobi::JacobiParams;
    use crate::network::Variant;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    fn tiny_dataset(m: usize, params: &FluidParams, c: f64) -> Vec<GeometrySample> {
        let counts = CloudCounts {
            n: 64,
            interior: 44,
            boundary: 20,
            outer: 12,
        };
        let sensors = SensorCounts {
            lattice: 4,
            ring: 3,
            surface: 3,
        };
        let case = hydrostatic_case(c);
        let shapes = [Shape::Nonagon, Shape::Octagon, Shape::Heptagon];
        (0..m)
            .map(|i| {
                let spec = GeometrySpec::new(shapes[i % 3], 1.0 + i as f64).unwrap();
                let cloud =
                    geometry::build_cloud(&spec, &counts, &sensors, c, 100 + i as u64).unwrap();
                let fields = case.fields(params, &cloud);
                let obs = observations(&fields, &cloud).unwrap();
                GeometrySample {
                    cloud,
                    observations: obs,
                    sources: None,
                }
            })
            .collect()
    }

    fn smoke_params() -> FluidParams {
        let mut p = FluidParams::ra1e5();
        p.t_cold = 0.5;
        p.t_ref = 0.5;
        p
    }

    fn tiny_net_config(seed: u64) -> NetworkConfig {
        NetworkConfig {
            variant: Variant::LightweightKan,
            ns_encoder: 0.05,
            ns_decoder: 0.05,
            jacobi: JacobiParams::chebyshev_first(2),
            n_pde: 4,
            seed,
        }
    }

    #[test]
    fn tape_loss_matches_plain_loss_path() {
        let params = smoke_params();
        let dataset = tiny_dataset(2, &params, 0.5);
        let state = network::build(&tiny_net_config(3)).unwrap();

        // Plain path: evaluation forward + jet derivatives through the
        // reference loss implementation.
        let sample = &dataset[0];
        let (fields, derivs) = state.fields_and_derivatives(&sample.cloud).unwrap();
        let plain = crate::physics::pipn_loss(
            &fields,
            &derivs,
            &sample.cloud,
            &sample.observations,
            &params,
            None,
        )
        .unwrap();

        // Tape path in evaluation mode over a single-geometry batch.
        let refs = vec![sample];
        let coords = batch_coords(&refs);
        let mut tape = Tape::new();
        let fwd =
            network::tape_forward(&mut tape, &state, coords.view(), NormMode::Evaluation).unwrap();
        let (loss, breakdowns) = batch_loss(&mut tape, &fwd, &refs, &params);
        let tape_total = tape.value(loss).first().copied().unwrap();

        assert_abs_diff_eq!(tape_total, plain.total, epsilon = 1e-12);
        for (a, b) in breakdowns[0]
            .components()
            .iter()
            .zip(plain.components().iter())
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_epoch_training_is_a_no_op() {
        let params = smoke_params();
        let dataset = tiny_dataset(2, &params, 0.5);
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let initial = network::build(&tiny_net_config(5)).unwrap();
        let (state, history) =
            train_with_state(&dataset, &cfg, &params, initial.clone()).unwrap();
        assert!(history.epochs.is_empty());
        assert!(history.best.is_none());
        assert_eq!(state, initial);
    }

    #[test]
    fn short_training_reduces_loss_and_checkpoints_the_minimum() {
        let params = smoke_params();
        let dataset = tiny_dataset(2, &params, 0.5);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 2,
            learning_rate: 0.005,
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, history) = train(&dataset, &cfg, &tiny_net_config(7), &params).unwrap();
        assert_eq!(history.epochs.len(), 30);
        let totals: Vec<f64> = history.epochs.iter().map(|r| r.loss.total).collect();
        let best = history.best_loss().unwrap();
        let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(best, min, epsilon = 0.0);
        // First epoch attaining the minimum.
        let first_idx = totals.iter().position(|&t| t == min).unwrap();
        assert_eq!(history.best_epoch().unwrap(), first_idx + 1);
        assert!(best < totals[0], "training never improved: {totals:?}");
        // Components are non-negative and sum to the total.
        for rec in &history.epochs {
            assert!(rec.loss.components().iter().all(|&c| c >= 0.0));
            assert_abs_diff_eq!(
                rec.loss.components().iter().sum::<f64>(),
                rec.loss.total,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn training_is_deterministic() {
        let params = smoke_params();
        let dataset = tiny_dataset(2, &params, 0.5);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 1,
            seed: 11,
            ..TrainConfig::default()
        };
        let (s1, h1) = train(&dataset, &cfg, &tiny_net_config(2), &params).unwrap();
        let (s2, h2) = train(&dataset, &cfg, &tiny_net_config(2), &params).unwrap();
        assert_eq!(s1, s2);
        let t1: Vec<f64> = h1.epochs.iter().map(|r| r.loss.total).collect();
        let t2: Vec<f64> = h2.epochs.iter().map(|r| r.loss.total).collect();
        assert_eq!(t1, t2);
    }

    #[test]
    fn adapter_gives_zero_loss_and_zero_error_table() {
        let params = smoke_params();
        let case = hydrostatic_case(0.5);
        let dataset = tiny_dataset(2, &params, 0.5);
        let adapter = DirectFieldAdapter {
            case: &case,
            params: &params,
        };
        for sample in &dataset {
            let loss = crate::physics::pipn_loss_from_map(
                &adapter,
                &sample.cloud,
                &sample.observations,
                &params,
                None,
            )
            .unwrap();
            assert!(loss.total < 1e-10, "adapter loss {}", loss.total);
        }
        // Error table against its own truth: all zeros (temperature rows;
        // velocity rows are undefined for the still-fluid case).
        let trig = crate::groundtruth::trigonometric_case();
        let adapter = DirectFieldAdapter {
            case: &trig,
            params: &params,
        };
        let data: Vec<(PointCloud, FieldSolution)> = dataset
            .iter()
            .map(|s| (s.cloud.clone(), trig.fields(&params, &s.cloud)))
            .collect();
        let table = error_table(&adapter, &data).unwrap();
        for (_, stats) in table.rows() {
            assert_abs_diff_eq!(stats.average, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(stats.maximum, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(stats.minimum, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn relative_l2_frozen_examples() {
        let a = Array1::from_vec(vec![1.0, 1.0]);
        let b = Array1::from_vec(vec![1.0, 0.0]);
        let idx = [0usize, 1];
        assert_abs_diff_eq!(
            relative_l2(a.view(), a.view(), &idx).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let zero = Array1::from_vec(vec![0.0, 0.0]);
        assert_abs_diff_eq!(
            relative_l2(zero.view(), b.view(), &idx).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            relative_l2(a.view(), b.view(), &idx).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(relative_l2(b.view(), zero.view(), &idx).is_err());
    }

    #[test]
    fn error_table_aggregates_hand_values() {
        // Two geometries with u-errors 0.1 and 0.3 simulated through a
        // scaled prediction; check (average, max, min) = (0.2, 0.3, 0.1).
        struct Scaled<'a> {
            factors: &'a [f64],
            truth: &'a [FieldSolution],
            calls: std::cell::Cell<usize>,
        }
        impl FieldMap for Scaled<'_> {
            fn fields_and_derivatives(
                &self,
                _cloud: &PointCloud,
            ) -> crate::error::Result<(FieldSolution, crate::physics::FieldDerivatives)> {
                let i = self.calls.get();
                self.calls.set(i + 1);
                let t = &self.truth[i];
                let f = 1.0 - self.factors[i];
                Ok((
                    FieldSolution {
                        u: &t.u * f,
                        v: t.v.clone(),
                        p: t.p.clone(),
                        t: t.t.clone(),
                    },
                    crate::physics::FieldDerivatives::zeros(0),
                ))
            }
        }
        let params = smoke_params();
        let dataset = tiny_dataset(2, &params, 0.5);
        let trig = crate::groundtruth::trigonometric_case();
        let truths: Vec<FieldSolution> = dataset
            .iter()
            .map(|s| trig.fields(&params, &s.cloud))
            .collect();
        let model = Scaled {
            factors: &[0.1, 0.3],
            truth: &truths,
            calls: std::cell::Cell::new(0),
        };
        let data: Vec<(PointCloud, FieldSolution)> = dataset
            .iter()
            .zip(&truths)
            .map(|(s, t)| (s.cloud.clone(), t.clone()))
            .collect();
        let table = error_table(&model, &data).unwrap();
        assert_abs_diff_eq!(table.u_domain.average, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(table.u_domain.maximum, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(table.u_domain.minimum, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(table.v_domain.average, 0.0, epsilon = 1e-12);
        // Single-geometry dataset: average = max = min.
        let single = error_table(
            &DirectFieldAdapter {
                case: &trig,
                params: &params,
            },
            &data[..1],
        )
        .unwrap();
        assert_eq!(single.u_domain.average, single.u_domain.maximum);
        assert_eq!(single.u_domain.average, single.u_domain.minimum);
    }

    #[test]
    fn surface_profile_is_sorted_and_complete() {
        let params = smoke_params();
        let dataset = tiny_dataset(1, &params, 0.5);
        let cloud = &dataset[0].cloud;
        let t = Array1::from_elem(cloud.n(), 0.5);
        let profile = surface_profile(t.view(), cloud);
        assert_eq!(profile.len(), cloud.idx_inner_wall.len());
        assert!(profile.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(profile.iter().all(|&(theta, v)| {
            (0.0..360.0).contains(&theta) && (v - 0.5).abs() < 1e-15
        }));
    }

    #[test]
    fn history_round_trip() {
        let mut history = TrainHistory::default();
        for e in 1..=3 {
            history.epochs.push(EpochRecord {
                epoch: e,
                loss: LossBreakdown::from_components([
                    0.1 / e as f64,
                    0.01,
                    0.02,
                    0.03,
                    0.0,
                    0.0,
                    0.004,
                    0.0005,
                    0.00006,
                ]),
                seconds: 0.25 * e as f64,
            });
        }
        history.best = Some((3, history.epochs[2].loss.total));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history(&path, &history).unwrap();
        let back = read_history(&path).unwrap();
        assert_eq!(history, back);
    }

    #[test]
    fn checkpoint_round_trip() {
        let state = network::build(&tiny_net_config(9)).unwrap();
        let ck = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            optimizer: AdamState::new(&state),
            network: state,
            epoch: 17,
            best_loss: Some(0.125),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.network, ck.network);
        assert_eq!(back.epoch, 17);
        assert_eq!(back.best_loss, Some(0.125));
    }

    #[test]
    fn divergence_reports_epoch_and_breakdown() {
        // Bounded activations keep the fields themselves finite, so the
        // loss overflows through the squared observation misfit instead.
        let params = smoke_params();
        let mut dataset = tiny_dataset(2, &params, 0.5);
        for obs in &mut dataset[1].observations.pressure {
            *obs = 1e200;
        }
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let err = train(&dataset, &cfg, &tiny_net_config(1), &params);
        match err {
            Err(Error::Diverged {
                epoch, breakdown, ..
            }) => {
                assert_eq!(epoch, 1);
                assert!(breakdown.pressure_obs.is_infinite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
