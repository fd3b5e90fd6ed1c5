//! Point-cloud network variants: encoder/decoder stacks of shared KAN or
//! MLP layers around a max-pool symmetry function.
//!
//! The canonical architecture maps `(B, N, 2)` coordinates through two
//! encoder components with base widths `(64, 64)` and `(64, 128, 1024)`,
//! max-pools the final feature over the point axis into a global feature,
//! concatenates it with the retained per-point feature (base width
//! `64 + 1024 = 1088`), and decodes through components `(512, 256, 128)`
//! and `(128, n_pde)`. Every base width is scaled by `floor(width · n_s)`,
//! with independent factors for encoder and decoder. A lightweight form
//! uses the single-layer components `(128)`, `(1024)`, `(128, n_pde)`.
//!
//! Batch normalization follows every layer except the final one. Layers
//! built from KAN components carry trainable per-channel affine
//! parameters on their normalization; MLP-built layers normalize without
//! affine parameters. MLP layers use `tanh` activations everywhere,
//! including the output layer, so a pure-MLP network predicts strictly
//! inside `(−1, 1)`; KAN outputs carry no such bound.

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayViewD, ArrayViewMutD, Axis, Ix3, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobi::{self, JacobiParams};
use crate::jet::{self, Jet};
use crate::kan::{self, KanLayerSpec, KanLayerState};
use crate::tape::{Tape, Var};

/// Spatial dimension of the input point clouds.
pub const INPUT_DIM: usize = 2;
/// Normalization epsilon inside `1/sqrt(var + eps)`.
pub const BN_EPS: f64 = 1e-5;
/// Exponential moving-average factor for running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FullKan,
    FullMlp,
    LightweightKan,
    HybridMlpEncKanDec,
    HybridKanEncMlpDec,
}

impl Variant {
    pub fn encoder_family(self) -> Family {
        match self {
            Variant::FullKan | Variant::LightweightKan | Variant::HybridKanEncMlpDec => {
                Family::Kan
            }
            Variant::FullMlp | Variant::HybridMlpEncKanDec => Family::Mlp,
        }
    }

    pub fn decoder_family(self) -> Family {
        match self {
            Variant::FullKan | Variant::LightweightKan | Variant::HybridMlpEncKanDec => {
                Family::Kan
            }
            Variant::FullMlp | Variant::HybridKanEncMlpDec => Family::Mlp,
        }
    }

    pub const ALL: [Variant; 5] = [
        Variant::FullKan,
        Variant::FullMlp,
        Variant::LightweightKan,
        Variant::HybridMlpEncKanDec,
        Variant::HybridKanEncMlpDec,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Kan,
    Mlp,
}

/// Architecture selection and size controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub variant: Variant,
    /// Width-scaling factor for the two components before the max-pool.
    pub ns_encoder: f64,
    /// Width-scaling factor for the two components after the concatenation.
    pub ns_decoder: f64,
    /// Polynomial family for KAN-built portions (ignored by pure-MLP parts).
    pub jacobi: JacobiParams,
    /// Number of predicted fields per point.
    pub n_pde: usize,
    pub seed: u64,
}

/// `floor(base · ns)`; the only rounding rule consistent with the published
/// trainable-parameter counts.
pub fn scaled_width(base: usize, ns: f64) -> Result<usize> {
    if base == 0 {
        return Err(Error::InvalidArgument("base width must be >= 1".into()));
    }
    if !(ns > 0.0 && ns <= 1.0) {
        return Err(Error::Config(format!(
            "width scale must lie in (0, 1], got {ns}"
        )));
    }
    let w = (base as f64 * ns).floor() as usize;
    if w == 0 {
        return Err(Error::Config(format!(
            "width scale {ns} collapses base width {base} to zero"
        )));
    }
    Ok(w)
}

/// One shared layer in a realized plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub d_in: usize,
    pub d_out: usize,
    pub family: Family,
    pub batch_norm: bool,
}

/// Fully resolved layer chain of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchPlan {
    /// Encoder component whose output is retained for the concatenation.
    pub encoder_local: Vec<LayerPlan>,
    /// Encoder component feeding the max-pool.
    pub encoder_global: Vec<LayerPlan>,
    /// Both decoder components, flattened; the last layer has no norm.
    pub decoder: Vec<LayerPlan>,
    pub jacobi: JacobiParams,
}

impl ArchPlan {
    pub fn validate(&self) -> Result<()> {
        self.jacobi.validate()?;
        if self.encoder_local.is_empty() || self.encoder_global.is_empty() || self.decoder.is_empty()
        {
            return Err(Error::Config("plan sections must be non-empty".into()));
        }
        let check_chain = |layers: &[LayerPlan], d_in: usize, name: &str| -> Result<usize> {
            let mut cur = d_in;
            for (i, l) in layers.iter().enumerate() {
                if l.d_in != cur {
                    return Err(Error::Config(format!(
                        "{name} layer {i}: d_in {} does not chain from {}",
                        l.d_in, cur
                    )));
                }
                if l.d_out == 0 {
                    return Err(Error::Config(format!("{name} layer {i}: zero width")));
                }
                cur = l.d_out;
            }
            Ok(cur)
        };
        let local_out = check_chain(&self.encoder_local, INPUT_DIM, "encoder_local")?;
        let global_out = check_chain(&self.encoder_global, local_out, "encoder_global")?;
        let _ = check_chain(&self.decoder, local_out + global_out, "decoder")?;
        if self.decoder.last().unwrap().batch_norm {
            return Err(Error::Config(
                "the final layer must not carry batch normalization".into(),
            ));
        }
        Ok(())
    }

    pub fn all_layers(&self) -> impl Iterator<Item = &LayerPlan> {
        self.encoder_local
            .iter()
            .chain(self.encoder_global.iter())
            .chain(self.decoder.iter())
    }

    /// Trainable parameters: KAN coefficients `(n+1)·d_in·d_out`, MLP
    /// weights plus biases, and two affine normalization parameters per
    /// channel on KAN-built normalized layers.
    pub fn param_count(&self) -> usize {
        let k = self.jacobi.basis_len();
        self.all_layers()
            .map(|l| {
                let core = match l.family {
                    Family::Kan => k * l.d_in * l.d_out,
                    Family::Mlp => l.d_in * l.d_out + l.d_out,
                };
                let affine = if l.batch_norm && l.family == Family::Kan {
                    2 * l.d_out
                } else {
                    0
                };
                core + affine
            })
            .sum()
    }
}

/// Resolves a configuration into the concrete layer chain.
pub fn plan(config: &NetworkConfig) -> Result<ArchPlan> {
    if config.n_pde == 0 {
        return Err(Error::Config("n_pde must be >= 1".into()));
    }
    config.jacobi.validate()?;
    let enc = config.variant.encoder_family();
    let dec = config.variant.decoder_family();
    let (local_bases, global_bases, dec_bases): (&[usize], &[usize], &[usize]) =
        match config.variant {
            Variant::LightweightKan => (&[128], &[1024], &[128]),
            _ => (&[64, 64], &[64, 128, 1024], &[512, 256, 128, 128]),
        };
    let widths = |bases: &[usize], ns: f64| -> Result<Vec<usize>> {
        bases.iter().map(|&b| scaled_width(b, ns)).collect()
    };
    let local_w = widths(local_bases, config.ns_encoder)?;
    let global_w = widths(global_bases, config.ns_encoder)?;
    let mut dec_w = widths(dec_bases, config.ns_decoder)?;
    dec_w.push(config.n_pde);

    let chain = |widths: &[usize], d_in: usize, family: Family| -> Vec<LayerPlan> {
        let mut out = Vec::with_capacity(widths.len());
        let mut cur = d_in;
        for &w in widths {
            out.push(LayerPlan {
                d_in: cur,
                d_out: w,
                family,
                batch_norm: true,
            });
            cur = w;
        }
        out
    };
    let encoder_local = chain(&local_w, INPUT_DIM, enc);
    let encoder_global = chain(&global_w, *local_w.last().unwrap(), enc);
    let concat = local_w.last().unwrap() + global_w.last().unwrap();
    let mut decoder = chain(&dec_w, concat, dec);
    decoder.last_mut().unwrap().batch_norm = false;

    let plan = ArchPlan {
        encoder_local,
        encoder_global,
        decoder,
        jacobi: config.jacobi,
    };
    plan.validate()?;
    Ok(plan)
}

/// Total trainable parameters for a configuration.
pub fn total_param_count(config: &NetworkConfig) -> Result<usize> {
    Ok(plan(config)?.param_count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNormState {
    fn new(channels: usize, affine: bool) -> Self {
        Self {
            gamma: affine.then(|| Array1::ones(channels)),
            beta: affine.then(|| Array1::zeros(channels)),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerWeights {
    Kan(KanLayerState),
    Mlp { weight: Array2<f64>, bias: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub weights: LayerWeights,
    pub norm: Option<BatchNormState>,
}

/// All trainable and running state of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    /// Present when the state came from a standard configuration.
    pub config: Option<NetworkConfig>,
    pub plan: ArchPlan,
    pub encoder_local: Vec<Block>,
    pub encoder_global: Vec<Block>,
    pub decoder: Vec<Block>,
}

fn init_block(l: &LayerPlan, jacobi: &JacobiParams, rng: &mut ChaCha8Rng) -> Result<Block> {
    let weights = match l.family {
        Family::Kan => {
            let spec = KanLayerSpec::new(l.d_in, l.d_out, *jacobi)?;
            LayerWeights::Kan(kan::init_coefficients_with(&spec, rng))
        }
        Family::Mlp => {
            // Glorot-uniform weights, zero biases.
            let limit = (6.0 / (l.d_in + l.d_out) as f64).sqrt();
            let weight =
                Array2::from_shape_fn((l.d_out, l.d_in), |_| rng.random_range(-limit..limit));
            LayerWeights::Mlp {
                weight,
                bias: Array1::zeros(l.d_out),
            }
        }
    };
    let norm = l
        .batch_norm
        .then(|| BatchNormState::new(l.d_out, l.family == Family::Kan));
    Ok(Block { weights, norm })
}

/// Materializes a hand-written plan with seeded initialization.
pub fn build_from_plan(plan: &ArchPlan, seed: u64) -> Result<NetworkState> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |layers: &[LayerPlan]| -> Result<Vec<Block>> {
        layers
            .iter()
            .map(|l| init_block(l, &plan.jacobi, &mut rng))
            .collect()
    };
    let encoder_local = make(&plan.encoder_local)?;
    let encoder_global = make(&plan.encoder_global)?;
    let decoder = make(&plan.decoder)?;
    Ok(NetworkState {
        config: None,
        plan: plan.clone(),
        encoder_local,
        encoder_global,
        decoder,
    })
}

/// Builds the layer chain for the chosen variant.
pub fn build(config: &NetworkConfig) -> Result<NetworkState> {
    let plan = plan(config)?;
    let mut state = build_from_plan(&plan, config.seed)?;
    state.config = Some(*config);
    Ok(state)
}

impl NetworkState {
    fn sections(&self) -> [&Vec<Block>; 3] {
        [&self.encoder_local, &self.encoder_global, &self.decoder]
    }

    /// Views of every trainable array in a fixed traversal order:
    /// sections in forward order; per block the layer weights (KAN
    /// coefficients, or MLP weight then bias), then normalization gamma
    /// and beta when present.
    pub fn param_views(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::new();
        for section in self.sections() {
            for block in section {
                match &block.weights {
                    LayerWeights::Kan(st) => out.push(st.coefficients.view().into_dyn()),
                    LayerWeights::Mlp { weight, bias } => {
                        out.push(weight.view().into_dyn());
                        out.push(bias.view().into_dyn());
                    }
                }
                if let Some(bn) = &block.norm {
                    if let (Some(g), Some(b)) = (&bn.gamma, &bn.beta) {
                        out.push(g.view().into_dyn());
                        out.push(b.view().into_dyn());
                    }
                }
            }
        }
        out
    }

    /// Mutable counterpart of [`NetworkState::param_views`], same order.
    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        let sections = [
            &mut self.encoder_local,
            &mut self.encoder_global,
            &mut self.decoder,
        ];
        for section in sections {
            for block in section.iter_mut() {
                match &mut block.weights {
                    LayerWeights::Kan(st) => out.push(st.coefficients.view_mut().into_dyn()),
                    LayerWeights::Mlp { weight, bias } => {
                        out.push(weight.view_mut().into_dyn());
                        out.push(bias.view_mut().into_dyn());
                    }
                }
                if let Some(bn) = &mut block.norm {
                    if let (Some(g), Some(b)) = (bn.gamma.as_mut(), bn.beta.as_mut()) {
                        out.push(g.view_mut().into_dyn());
                        out.push(b.view_mut().into_dyn());
                    }
                }
            }
        }
        out
    }

    /// Literal trainable element count of the stored arrays.
    pub fn literal_param_count(&self) -> usize {
        self.param_views().iter().map(|v| v.len()).sum()
    }
}

fn validate_coords(coords: &ndarray::ArrayView3<'_, f64>) -> Result<()> {
    if coords.dim().1 == 0 {
        return Err(Error::InvalidArgument("point cloud must be non-empty".into()));
    }
    if coords.dim().2 != INPUT_DIM {
        return Err(Error::InvalidArgument(format!(
            "coords must have {INPUT_DIM} trailing components"
        )));
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("coords must be finite".into()));
    }
    Ok(())
}

fn bn_eval(y: ArrayD<f64>, bn: &BatchNormState) -> ArrayD<f64> {
    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let mut out = y;
    out -= &bn.running_mean;
    out *= &inv_std;
    if let (Some(g), Some(b)) = (&bn.gamma, &bn.beta) {
        out *= g;
        out += b;
    }
    out
}

fn mlp_eval(x: &ArrayD<f64>, weight: &Array2<f64>, bias: &Array1<f64>) -> ArrayD<f64> {
    let ci = weight.ncols();
    let lead = x.len() / ci;
    let x2 = x
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((lead, ci))
        .expect("contiguous");
    let mut out2 = x2.dot(&weight.t());
    out2 += bias;
    out2.mapv_inplace(f64::tanh);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = weight.nrows();
    out2.into_shape_with_order(IxDyn(&shape)).expect("shape")
}

fn block_eval(x: ArrayD<f64>, block: &Block, jacobi: &JacobiParams) -> Result<ArrayD<f64>> {
    let y = match &block.weights {
        LayerWeights::Kan(st) => kan::kan_forward(x.view(), st, jacobi)?,
        LayerWeights::Mlp { weight, bias } => mlp_eval(&x, weight, bias),
    };
    Ok(match &block.norm {
        Some(bn) => bn_eval(y, bn),
        None => y,
    })
}

fn max_pool_eval(x: &Array3<f64>) -> Array3<f64> {
    let (b, n, c) = x.dim();
    let mut out = Array3::zeros((b, n, c));
    for bi in 0..b {
        for ci in 0..c {
            let mut best = x[[bi, 0, ci]];
            for ni in 1..n {
                best = best.max(x[[bi, ni, ci]]);
            }
            for ni in 0..n {
                out[[bi, ni, ci]] = best;
            }
        }
    }
    out
}

/// Evaluation-mode forward pass: running normalization statistics, plain
/// tensor arithmetic. Output shape `(B, N, n_pde)`.
pub fn forward(state: &NetworkState, coords: ndarray::ArrayView3<'_, f64>) -> Result<Array3<f64>> {
    validate_coords(&coords)?;
    let jacobi = &state.plan.jacobi;
    let mut local = coords.to_owned().into_dyn();
    for block in &state.encoder_local {
        local = block_eval(local, block, jacobi)?;
    }
    let mut global = local.clone();
    for block in &state.encoder_global {
        global = block_eval(global, block, jacobi)?;
    }
    let global3 = global.into_dimensionality::<Ix3>().expect("rank 3");
    let pooled = max_pool_eval(&global3);
    let cat = ndarray::concatenate(
        Axis(2),
        &[
            local
                .view()
                .into_dimensionality::<Ix3>()
                .expect("rank 3"),
            pooled.view(),
        ],
    )
    .expect("leading axes agree")
    .into_dyn();
    let mut out = cat;
    for block in &state.decoder {
        out = block_eval(out, block, jacobi)?;
    }
    Ok(out.into_dimensionality::<Ix3>().expect("rank 3"))
}

/// Which statistics normalization uses on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics over the combined `(B·N)` sample axis. The
    /// statistics stay on the tape (parameter gradients flow through
    /// them) but are constants with respect to point coordinates.
    Training,
    /// Stored running averages.
    Evaluation,
}

/// Result of building one forward pass on a tape.
pub struct TapeForward {
    /// Network output with spatial-derivative components, `(B, N, n_pde)`.
    pub output: Jet,
    /// Leaves of every trainable array, aligned with
    /// [`NetworkState::param_views`].
    pub param_vars: Vec<Var>,
    /// `(batch mean, batch var)` per normalized block in traversal order;
    /// empty in evaluation mode.
    pub batch_stats: Vec<(Var, Var)>,
}

struct Cursor<'a> {
    vars: &'a [Var],
    i: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> Var {
        let v = self.vars[self.i];
        self.i += 1;
        v
    }
}

fn jet_kan_layer(tape: &mut Tape, input: &Jet, coeffs: Var, jacobi: &JacobiParams) -> Jet {
    let z = jet::tanh(tape, input);
    let n = jacobi.degree;
    let mut ps: Vec<Jet> = Vec::with_capacity(n + 1);
    let shape = tape.value(z.v).shape().to_vec();
    let ones = tape.leaf(ArrayD::from_elem(IxDyn(&shape), 1.0));
    ps.push(Jet::constant(ones));
    if n >= 1 {
        let (c1, c0) = jacobi::first_order_coeffs(jacobi);
        let scaled = jet::scale(tape, &z, c1);
        ps.push(jet::offset(tape, &scaled, c0));
    }
    for k in 2..=n {
        let (ak, bk, ck) = jacobi::recurrence_coeffs(k, jacobi).expect("validated params");
        let az = jet::scale(tape, &z, ak);
        let azb = jet::offset(tape, &az, bk);
        let t1 = jet::mul(tape, &azb, &ps[k - 1]);
        let t2 = jet::scale(tape, &ps[k - 2], ck);
        ps.push(jet::add(tape, &t1, &t2));
    }
    let basis = stack_jets(tape, &ps, &shape);
    basis.map_linear(tape, |t, v| t.contract_kan(v, coeffs))
}

fn stack_jets(tape: &mut Tape, parts: &[Jet], shape: &[usize]) -> Jet {
    let vs: Vec<Var> = parts.iter().map(|p| p.v).collect();
    let v = tape.stack_last(&vs);
    let mut comps = [None; 4];
    let getters: [fn(&Jet) -> Option<Var>; 4] =
        [|j| j.dx, |j| j.dy, |j| j.dxx, |j| j.dyy];
    for (slot, get) in comps.iter_mut().zip(getters) {
        if parts.iter().any(|p| get(p).is_some()) {
            let filled: Vec<Var> = parts
                .iter()
                .map(|p| get(p).unwrap_or_else(|| tape.zeros(shape)))
                .collect();
            *slot = Some(tape.stack_last(&filled));
        }
    }
    Jet {
        v,
        dx: comps[0],
        dy: comps[1],
        dxx: comps[2],
        dyy: comps[3],
    }
}

fn jet_mlp_layer(tape: &mut Tape, input: &Jet, weight: Var, bias: Var) -> Jet {
    let lin = input.map_linear(tape, |t, v| t.matvec(v, weight));
    let with_bias = Jet {
        v: tape.add_chan(lin.v, bias),
        ..lin
    };
    jet::tanh(tape, &with_bias)
}

fn jet_block(
    tape: &mut Tape,
    input: &Jet,
    block: &Block,
    jacobi: &JacobiParams,
    mode: NormMode,
    cursor: &mut Cursor<'_>,
    stats_out: &mut Vec<(Var, Var)>,
) -> Jet {
    let y = match &block.weights {
        LayerWeights::Kan(_) => {
            let coeffs = cursor.next();
            jet_kan_layer(tape, input, coeffs, jacobi)
        }
        LayerWeights::Mlp { .. } => {
            let weight = cursor.next();
            let bias = cursor.next();
            jet_mlp_layer(tape, input, weight, bias)
        }
    };
    match &block.norm {
        None => y,
        Some(bn) => {
            let affine = bn.gamma.is_some();
            let (gamma, beta) = if affine {
                (Some(cursor.next()), Some(cursor.next()))
            } else {
                (None, None)
            };
            let (mean, var) = match mode {
                NormMode::Training => {
                    let mean = tape.mean_rows(y.v);
                    let neg_mean = tape.scale(mean, -1.0);
                    let centered = tape.add_chan(y.v, neg_mean);
                    let sq = tape.square(centered);
                    let var = tape.mean_rows(sq);
                    stats_out.push((mean, var));
                    (mean, var)
                }
                NormMode::Evaluation => {
                    let mean = tape.leaf(bn.running_mean.clone().into_dyn());
                    let var = tape.leaf(bn.running_var.clone().into_dyn());
                    (mean, var)
                }
            };
            let shifted = tape.offset(var, BN_EPS);
            let std = tape.sqrt(shifted);
            let inv_std = tape.recip(std);
            let neg_mean = tape.scale(mean, -1.0);
            let centered = Jet {
                v: tape.add_chan(y.v, neg_mean),
                ..y
            };
            let scale = match gamma {
                Some(g) => tape.mul(inv_std, g),
                None => inv_std,
            };
            jet::channel_affine(tape, &centered, scale, beta)
        }
    }
}

/// Builds one forward pass with spatial-derivative components on `tape`.
pub fn tape_forward(
    tape: &mut Tape,
    state: &NetworkState,
    coords: ndarray::ArrayView3<'_, f64>,
    mode: NormMode,
) -> Result<TapeForward> {
    validate_coords(&coords)?;
    let (b, n, _) = coords.dim();
    let param_vars: Vec<Var> = state
        .param_views()
        .into_iter()
        .map(|v| tape.leaf(v.to_owned()))
        .collect();
    let mut cursor = Cursor {
        vars: &param_vars,
        i: 0,
    };
    let mut stats_out = Vec::new();

    let coords_v = tape.leaf(coords.to_owned().into_dyn());
    let mut dx_pat = Array3::<f64>::zeros((b, n, INPUT_DIM));
    dx_pat.index_axis_mut(Axis(2), 0).fill(1.0);
    let mut dy_pat = Array3::<f64>::zeros((b, n, INPUT_DIM));
    dy_pat.index_axis_mut(Axis(2), 1).fill(1.0);
    let dx = tape.leaf(dx_pat.into_dyn());
    let dy = tape.leaf(dy_pat.into_dyn());
    let mut feat = Jet {
        v: coords_v,
        dx: Some(dx),
        dy: Some(dy),
        dxx: None,
        dyy: None,
    };

    let jacobi = &state.plan.jacobi;
    for block in &state.encoder_local {
        feat = jet_block(tape, &feat, block, jacobi, mode, &mut cursor, &mut stats_out);
    }
    let local = feat;
    let mut global = local;
    for block in &state.encoder_global {
        global = jet_block(tape, &global, block, jacobi, mode, &mut cursor, &mut stats_out);
    }
    let pooled = jet::max_pool_broadcast(tape, &global);
    let mut out = jet::concat_chan(tape, &local, &pooled);
    for block in &state.decoder {
        out = jet_block(tape, &out, block, jacobi, mode, &mut cursor, &mut stats_out);
    }
    debug_assert_eq!(cursor.i, param_vars.len());
    Ok(TapeForward {
        output: out,
        param_vars,
        batch_stats: stats_out,
    })
}

impl NetworkState {
    /// Folds freshly observed batch statistics into the running averages,
    /// matching the momentum-EMA convention with the unbiased variance
    /// correction for the running value.
    pub fn update_running_stats(&mut self, tape: &Tape, fwd: &TapeForward, samples: usize) {
        let correction = if samples > 1 {
            samples as f64 / (samples - 1) as f64
        } else {
            1.0
        };
        let mut it = fwd.batch_stats.iter();
        let sections = [
            &mut self.encoder_local,
            &mut self.encoder_global,
            &mut self.decoder,
        ];
        for section in sections {
            for block in section.iter_mut() {
                if let Some(bn) = &mut block.norm {
                    let Some(&(mean, var)) = it.next() else {
                        return;
                    };
                    let m = tape.value(mean);
                    let v = tape.value(var);
                    for (r, &b) in bn.running_mean.iter_mut().zip(m.iter()) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                    }
                    for (r, &b) in bn.running_var.iter_mut().zip(v.iter()) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b * correction;
                    }
                }
            }
        }
    }
}

/// Per-point values and spatial derivatives of every output field,
/// evaluated with running normalization statistics.
#[derive(Debug, Clone)]
pub struct SpatialDerivatives {
    pub value: Array3<f64>,
    pub ddx: Array3<f64>,
    pub ddy: Array3<f64>,
    pub ddxx: Array3<f64>,
    pub ddyy: Array3<f64>,
}

/// Runs one evaluation-mode pass and extracts values with first and pure
/// second spatial derivatives, shape `(B, N, n_pde)` each.
pub fn evaluate_with_derivatives(
    state: &NetworkState,
    coords: ndarray::ArrayView3<'_, f64>,
) -> Result<SpatialDerivatives> {
    let mut tape = Tape::new();
    let fwd = tape_forward(&mut tape, state, coords, NormMode::Evaluation)?;
    let out = fwd.output;
    let grab = |v: Option<Var>| -> Array3<f64> {
        match v {
            Some(v) => tape
                .value(v)
                .to_owned()
                .into_dimensionality::<Ix3>()
                .expect("rank 3"),
            None => Array3::zeros(
                tape.value(out.v)
                    .view()
                    .into_dimensionality::<Ix3>()
                    .expect("rank 3")
                    .dim(),
            ),
        }
    };
    Ok(SpatialDerivatives {
        value: grab(Some(out.v)),
        ddx: grab(out.dx),
        ddy: grab(out.dy),
        ddxx: grab(out.dxx),
        ddyy: grab(out.dyy),
    })
}
