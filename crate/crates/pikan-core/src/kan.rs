//! Shared Kolmogorov-Arnold layer on Jacobi polynomial bases.
//!
//! A layer maps `d_input` features to `d_output` features per point. The
//! input is squashed into `(−1, 1)` by `tanh`, expanded into the Jacobi
//! basis `P_0 .. P_n`, and contracted against the trainable coefficient
//! tensor `Λ` of shape `(d_output, d_input, n+1)`:
//!
//! ```text
//! out[o] = Σ_j Σ_i Λ[o, j, i] · P_i(tanh(in[j]))
//! ```
//!
//! There is no bias; the `P_0` coefficient already plays the constant
//! role. The same layer weights are applied to every point of a cloud.

use ndarray::{Array3, ArrayD, ArrayViewD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobi::{self, JacobiParams};

/// Dimensions and polynomial family of one shared KAN layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KanLayerSpec {
    pub d_input: usize,
    pub d_output: usize,
    pub jacobi: JacobiParams,
}

impl KanLayerSpec {
    pub fn new(d_input: usize, d_output: usize, jacobi: JacobiParams) -> Result<Self> {
        if d_input == 0 || d_output == 0 {
            return Err(Error::InvalidArgument(
                "layer dimensions must be at least 1".into(),
            ));
        }
        Ok(Self {
            d_input,
            d_output,
            jacobi,
        })
    }
}

/// Trainable coefficient storage of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayerState {
    /// `Λ` with shape `(d_output, d_input, degree + 1)`.
    pub coefficients: Array3<f64>,
}

/// Number of trainable parameters: `(n+1) · d_output · d_input`.
pub fn layer_param_count(spec: &KanLayerSpec) -> usize {
    spec.jacobi.basis_len() * spec.d_output * spec.d_input
}

/// Draws coefficients i.i.d. from `N(0, 1/(d_input·(n+1)))`, deterministic
/// in the seed. The fan-in style scale keeps pre-activation variance near
/// one across degrees.
pub fn init_coefficients(spec: &KanLayerSpec, seed: u64) -> KanLayerState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_coefficients_with(spec, &mut rng)
}

/// Same as [`init_coefficients`] but drawing from a caller-owned stream,
/// used when several layers share one seeded generator.
pub fn init_coefficients_with(spec: &KanLayerSpec, rng: &mut ChaCha8Rng) -> KanLayerState {
    let std = 1.0 / ((spec.d_input * spec.jacobi.basis_len()) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let coefficients = Array3::from_shape_fn(
        (spec.d_output, spec.d_input, spec.jacobi.basis_len()),
        |_| normal.sample(rng),
    );
    KanLayerState { coefficients }
}

/// Applies the layer to a batch: `tanh` pre-scaling, basis expansion,
/// then the dense edge contraction. The trailing axis of `input` must
/// equal `d_input`; the output replaces it with `d_output`.
pub fn kan_forward(
    input: ArrayViewD<'_, f64>,
    state: &KanLayerState,
    params: &JacobiParams,
) -> Result<ArrayD<f64>> {
    let (d_output, d_input, basis_len) = state.coefficients.dim();
    if input.shape().last() != Some(&d_input) {
        return Err(Error::InvalidArgument(format!(
            "kan layer: trailing input axis {:?} does not match d_input {}",
            input.shape().last(),
            d_input
        )));
    }
    if basis_len != params.basis_len() {
        return Err(Error::InvalidArgument(
            "kan layer: coefficient order axis does not match polynomial degree".into(),
        ));
    }
    let z = input.mapv(f64::tanh);
    let basis = jacobi::eval_basis(z.view(), params)?;
    let lead: usize = input.len() / d_input;
    let b2 = basis
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((lead, d_input * basis_len))
        .expect("contiguous basis");
    let c2 = state
        .coefficients
        .view()
        .into_shape_with_order((d_output, d_input * basis_len))
        .expect("contiguous coefficients");
    let out2 = b2.dot(&c2.t());
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = d_output;
    Ok(out2
        .into_shape_with_order(IxDyn(&shape))
        .expect("shape matches"))
}

/// Literal element count of the stored coefficients.
pub fn state_param_count(state: &KanLayerState) -> usize {
    state.coefficients.len()
}
