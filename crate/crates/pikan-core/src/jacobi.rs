//! Jacobi polynomial bases evaluated through the three-term recursion.
//!
//! The basis `P_0 .. P_n` for parameters `(α, β)` is generated in a single
//! pass from the seeds `P_0(z) = 1` and `P_1(z) = (α+β+2)z/2 + (α−β)/2`
//! together with
//!
//! ```text
//! P_k(z) = (A_k z + B_k) P_{k-1}(z) + C_k P_{k-2}(z),   k ≥ 2
//! ```
//!
//! Special members: `α = β = 0` is Legendre, `α = β = ∓1/2` the Chebyshev
//! polynomials of the first/second kind (up to normalization), and any
//! `α = β` a Gegenbauer family.

use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents and highest order of a Jacobi basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiParams {
    pub alpha: f64,
    pub beta: f64,
    /// Highest polynomial order; the basis has `degree + 1` members.
    pub degree: usize,
}

impl JacobiParams {
    /// Validates the classical orthogonality range `α > −1`, `β > −1`.
    pub fn new(alpha: f64, beta: f64, degree: usize) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidArgument(
                "jacobi exponents must be finite".into(),
            ));
        }
        if alpha <= -1.0 || beta <= -1.0 {
            return Err(Error::InvalidArgument(format!(
                "jacobi exponents must exceed -1, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            degree,
        })
    }

    pub fn legendre(degree: usize) -> Self {
        Self::new(0.0, 0.0, degree).expect("0 > -1")
    }

    /// Chebyshev polynomials of the first kind (α = β = −1/2).
    pub fn chebyshev_first(degree: usize) -> Self {
        Self::new(-0.5, -0.5, degree).expect("-0.5 > -1")
    }

    /// Chebyshev polynomials of the second kind (α = β = 1/2).
    pub fn chebyshev_second(degree: usize) -> Self {
        Self::new(0.5, 0.5, degree).expect("0.5 > -1")
    }

    /// Gegenbauer (ultraspherical) family, any α = β.
    pub fn gegenbauer(exponent: f64, degree: usize) -> Result<Self> {
        Self::new(exponent, exponent, degree)
    }

    /// Number of basis members, `degree + 1`.
    pub fn basis_len(&self) -> usize {
        self.degree + 1
    }

    /// Re-checks the construction invariants (fields are public, so
    /// hand-built values can bypass [`JacobiParams::new`]).
    pub fn validate(&self) -> Result<()> {
        Self::new(self.alpha, self.beta, self.degree).map(|_| ())
    }
}

/// Recursion coefficients `(A_n, B_n, C_n)` for order `n ≥ 2`.
pub fn recurrence_coeffs(order: usize, params: &JacobiParams) -> Result<(f64, f64, f64)> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!(
            "recurrence coefficients are defined for order >= 2, got {order}"
        )));
    }
    let n = order as f64;
    let (a, b) = (params.alpha, params.beta);
    let den = 2.0 * n * (n + a + b);
    let den_shift = den * (2.0 * n + a + b - 2.0);
    if den == 0.0 || den_shift == 0.0 {
        // Cannot occur for α, β > −1 and n ≥ 2.
        return Err(Error::Internal(format!(
            "degenerate recursion denominator at order {order} (alpha={a}, beta={b})"
        )));
    }
    let big_a = (2.0 * n + a + b - 1.0) * (2.0 * n + a + b) / den;
    let big_b = (2.0 * n + a + b - 1.0) * (a * a - b * b) / den_shift;
    let big_c = -2.0 * (n + a - 1.0) * (n + b - 1.0) * (2.0 * n + a + b) / den_shift;
    Ok((big_a, big_b, big_c))
}

/// Seeds of the recursion: the linear coefficients of `P_1(z) = c1·z + c0`.
pub fn first_order_coeffs(params: &JacobiParams) -> (f64, f64) {
    (
        0.5 * (params.alpha + params.beta + 2.0),
        0.5 * (params.alpha - params.beta),
    )
}

/// Evaluates the full basis `P_0 .. P_n` at every entry of `z`.
///
/// The output has the shape of `z` with one extra trailing axis of length
/// `degree + 1`, so a layer contraction over (input, order) is a single
/// dense product.
pub fn eval_basis(z: ArrayViewD<'_, f64>, params: &JacobiParams) -> Result<ArrayD<f64>> {
    params.validate()?;
    let n = params.degree;
    let flat: Vec<f64> = z.iter().copied().collect();
    let rows = flat.len();
    let cols = n + 1;
    let mut out = vec![0.0; rows * cols];
    for (r, &zv) in flat.iter().enumerate() {
        out[r * cols] = 1.0;
        if n >= 1 {
            let (c1, c0) = first_order_coeffs(params);
            out[r * cols + 1] = c1 * zv + c0;
        }
    }
    for k in 2..=n {
        let (ak, bk, ck) = recurrence_coeffs(k, params).expect("validated params, k >= 2");
        for (r, &zv) in flat.iter().enumerate() {
            let pm1 = out[r * cols + k - 1];
            let pm2 = out[r * cols + k - 2];
            out[r * cols + k] = (ak * zv + bk) * pm1 + ck * pm2;
        }
    }
    let mut shape = z.shape().to_vec();
    shape.push(cols);
    Ok(ArrayD::from_shape_vec(IxDyn(&shape), out).expect("shape matches element count"))
}

/// Scalar convenience wrapper around [`eval_basis`].
pub fn eval_basis_scalar(z: f64, params: &JacobiParams) -> Result<Vec<f64>> {
    let arr = ndarray::arr0(z).into_dyn();
    Ok(eval_basis(arr.view(), params)?.into_raw_vec_and_offset().0)
}
