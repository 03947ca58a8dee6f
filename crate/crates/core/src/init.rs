//! Gaussian initialization, singular value bounding and exact-layer
//! auxiliary variables.

use alloc::vec::Vec;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matrix::{svd, GaussianSampler, Matrix};
use crate::network::{check_weights, NetworkShape};

/// Interval `[s1, s2]` that singular values are clipped into.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvbBounds {
    pub s1: f64,
    pub s2: f64,
}

impl SvbBounds {
    /// Bounds used for strictly monotone activations.
    pub const MONOTONE: SvbBounds = SvbBounds { s1: 0.75, s2: 1.25 };
    /// Bounds used for ReLU with skip connections; no lower clipping.
    pub const RELU: SvbBounds = SvbBounds { s1: 0.0, s2: 0.25 };

    pub fn new(s1: f64, s2: f64) -> Result<Self> {
        if !(s1 >= 0.0 && s1 <= s2 && s2.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("svb bounds need 0 <= s1 <= s2, got ({s1}, {s2})")));
        }
        Ok(Self { s1, s2 })
    }
}

/// Clips every singular value of `w` into `[s1, s2]` and reconstructs.
pub fn svb(w: &Matrix, bounds: SvbBounds) -> Result<Matrix> {
    let mut d = svd(w)?;
    for s in &mut d.sigma {
        *s = s.clamp(bounds.s1, bounds.s2);
    }
    Ok(d.reconstruct())
}

/// Draws `W_1 ~ N(0, 1/d_in)` and `W_j ~ N(0, 1/r)` for `j ≥ 2`, then applies
/// [`svb`] to `W_2..W_L` when `bounds` is given. All matrices come from one
/// stream seeded by `seed`, in layer order.
pub fn init_weights(shape: &NetworkShape, seed: u64, bounds: Option<SvbBounds>) -> Result<Vec<Matrix>> {
    let mut rng = GaussianSampler::new(seed);
    let mut weights = Vec::with_capacity(shape.layers);
    for j in 1..=shape.layers {
        let (rows, cols) = shape.weight_shape(j);
        let variance = if j == 1 { 1.0 / shape.d_in as f64 } else { 1.0 / shape.r as f64 };
        let mut w = rng.matrix(rows, cols, variance);
        if j >= 2 {
            if let Some(b) = bounds {
                w = svb(&w, b)?;
            }
        }
        weights.push(w);
    }
    Ok(weights)
}

fn check_forward_inputs(weights: &[Matrix], x: &Matrix) -> Result<NetworkShape> {
    if weights.len() < 2 {
        return Err(Error::InvalidArgument(alloc::format!("a network needs at least 2 layers, got {}", weights.len())));
    }
    let shape = NetworkShape::new(x.cols(), weights[0].rows(), weights.len(), x.rows())?;
    check_weights(&shape, weights)?;
    Ok(shape)
}

/// `V_j = σ(W_j V_{j-1})` for `j = 1..L-1`, `V_0 = X`.
pub fn init_aux_monotone(weights: &[Matrix], x: &Matrix, act: Activation) -> Result<Vec<Matrix>> {
    let shape = check_forward_inputs(weights, x)?;
    let mut aux: Vec<Matrix> = Vec::with_capacity(shape.layers - 1);
    for j in 1..shape.layers {
        let prev = if j == 1 { x } else { &aux[j - 2] };
        let v = act.apply_matrix(&prev.matmul_t(&weights[j - 1]));
        aux.push(v);
    }
    Ok(aux)
}

/// `V_1 = σ(W_1 X)` and `V_j = σ(W_j V_{j-1}) + V_{j-1}` for `j ≥ 2`, with σ = relu.
pub fn init_aux_relu(weights: &[Matrix], x: &Matrix) -> Result<Vec<Matrix>> {
    let shape = check_forward_inputs(weights, x)?;
    let act = Activation::Relu;
    let mut aux: Vec<Matrix> = Vec::with_capacity(shape.layers - 1);
    for j in 1..shape.layers {
        let v = if j == 1 {
            act.apply_matrix(&x.matmul_t(&weights[0]))
        } else {
            let prev = &aux[j - 2];
            let mut v = act.apply_matrix(&prev.matmul_t(&weights[j - 1]));
            v.add_scaled(1.0, prev);
            v
        };
        aux.push(v);
    }
    Ok(aux)
}
