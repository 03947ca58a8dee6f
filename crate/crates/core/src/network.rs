//! The BCD iterate and the objectives it is scored by.
//!
//! Auxiliary variables for layer `j` are stored as an `n × r` matrix whose
//! row `i` is `V_{j,i}`. The data matrix `X` uses the same layout, so
//! `V_0 = X` and every layer's pre-activations are `V_{j-1} W_jᵀ`.

use alloc::vec::Vec;
use core::cell::OnceCell;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Dimensions of a single-output network and its training set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkShape {
    pub d_in: usize,
    /// Common hidden width.
    pub r: usize,
    /// Number of weight matrices, at least 2.
    pub layers: usize,
    /// Number of training samples.
    pub n: usize,
    /// Require `n ≤ d_in` and a full-row-rank data matrix.
    pub strict: bool,
}

impl NetworkShape {
    pub fn new(d_in: usize, r: usize, layers: usize, n: usize) -> Result<Self> {
        if d_in == 0 || r == 0 || n == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "network dimensions must be positive (d_in = {d_in}, r = {r}, n = {n})"
            )));
        }
        if layers < 2 {
            return Err(Error::InvalidArgument(alloc::format!("a network needs at least 2 layers, got {layers}")));
        }
        Ok(Self { d_in, r, layers, n, strict: false })
    }

    /// As [`NetworkShape::new`], additionally requiring `n ≤ d_in`.
    pub fn new_strict(d_in: usize, r: usize, layers: usize, n: usize) -> Result<Self> {
        if n > d_in {
            return Err(Error::InvalidArgument(alloc::format!(
                "strict mode needs n <= d_in, got n = {n} > d_in = {d_in}"
            )));
        }
        Ok(Self { strict: true, ..Self::new(d_in, r, layers, n)? })
    }

    /// Shape of `W_j`, `1 ≤ j ≤ L`.
    pub fn weight_shape(&self, j: usize) -> (usize, usize) {
        assert!(j >= 1 && j <= self.layers, "layer index {j} out of range");
        let rows = if j == self.layers { 1 } else { self.r };
        let cols = if j == 1 { self.d_in } else { self.r };
        (rows, cols)
    }
}

/// Per-term values of the BCD objective.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// `Σ_i (W_L V_{L-1,i} − y_i)²`.
    pub output: f64,
    /// `hidden[j-1]` is the γ-weighted loss of layer `j`, `j = 1..L-1`.
    pub hidden: Vec<f64>,
    pub gamma: f64,
}

impl LossBreakdown {
    fn from_parts(output: f64, hidden: Vec<f64>, gamma: f64) -> Self {
        let total = output + hidden.iter().sum::<f64>();
        Self { total, output, hidden, gamma }
    }
}

/// Weights `W_1..W_L` and auxiliary variables `V_1..V_{L-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    shape: NetworkShape,
    weights: Vec<Matrix>,
    aux: Vec<Matrix>,
}

impl NetworkState {
    pub fn new(shape: NetworkShape, weights: Vec<Matrix>, aux: Vec<Matrix>) -> Result<Self> {
        check_weights(&shape, &weights)?;
        if aux.len() != shape.layers - 1 {
            return Err(Error::InvalidArgument(alloc::format!(
                "expected {} auxiliary layers, got {}",
                shape.layers - 1,
                aux.len()
            )));
        }
        for v in &aux {
            v.expect_shape("auxiliary variables", (shape.n, shape.r))?;
        }
        Ok(Self { shape, weights, aux })
    }

    #[inline]
    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    #[inline]
    pub fn layers(&self) -> usize {
        self.shape.layers
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// `W_j`, 1-based.
    #[inline]
    pub fn weight(&self, j: usize) -> &Matrix {
        &self.weights[j - 1]
    }

    #[inline]
    pub fn weight_mut(&mut self, j: usize) -> &mut Matrix {
        &mut self.weights[j - 1]
    }

    pub fn aux_layers(&self) -> &[Matrix] {
        &self.aux
    }

    /// `V_j` for `1 ≤ j ≤ L-1`, one sample per row.
    #[inline]
    pub fn aux(&self, j: usize) -> &Matrix {
        &self.aux[j - 1]
    }

    #[inline]
    pub fn aux_mut(&mut self, j: usize) -> &mut Matrix {
        &mut self.aux[j - 1]
    }

    /// `V_j` with the convention `V_0 = X`.
    #[inline]
    pub fn layer_input<'a>(&'a self, j: usize, x: &'a Matrix) -> &'a Matrix {
        if j == 0 {
            x
        } else {
            self.aux(j)
        }
    }

    /// `(W_j, V_{j-1}, V_j)` with `V_{j-1}` borrowed mutably, for `2 ≤ j ≤ L-1`.
    pub(crate) fn hidden_block_mut(&mut self, j: usize) -> (&Matrix, &mut Matrix, &Matrix) {
        debug_assert!(j >= 2 && j < self.shape.layers);
        let (lo, hi) = self.aux.split_at_mut(j - 1);
        (&self.weights[j - 1], &mut lo[j - 2], &hi[0])
    }

    /// `(W_j, V_{j-1}, V_j)` with `W_j` borrowed mutably, for `2 ≤ j ≤ L-1`.
    pub(crate) fn hidden_weights_mut(&mut self, j: usize) -> (&mut Matrix, &Matrix, &Matrix) {
        debug_assert!(j >= 2 && j < self.shape.layers);
        (&mut self.weights[j - 1], &self.aux[j - 2], &self.aux[j - 1])
    }

    pub(crate) fn first_block_mut(&mut self) -> (&mut Matrix, &Matrix) {
        (&mut self.weights[0], &self.aux[0])
    }

    pub(crate) fn output_block_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        let l = self.shape.layers;
        (&mut self.weights[l - 1], &mut self.aux[l - 2])
    }

    pub fn into_parts(self) -> (Vec<Matrix>, Vec<Matrix>) {
        (self.weights, self.aux)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.aux).all(Matrix::is_finite)
    }

    pub(crate) fn check_data(&self, x: &Matrix, y: &[f64]) -> Result<()> {
        x.expect_shape("data matrix", (self.shape.n, self.shape.d_in))?;
        if y.len() != self.shape.n {
            return Err(Error::ShapeMismatch { context: "labels", expected: (self.shape.n, 1), actual: (y.len(), 1) });
        }
        Ok(())
    }
}

/// Whether `weights` has the layer count and per-layer shapes of `shape`.
pub fn check_weights(shape: &NetworkShape, weights: &[Matrix]) -> Result<()> {
    if weights.len() != shape.layers {
        return Err(Error::InvalidArgument(alloc::format!(
            "expected {} weight matrices, got {}",
            shape.layers,
            weights.len()
        )));
    }
    for (j, w) in weights.iter().enumerate() {
        w.expect_shape("weight matrix", shape.weight_shape(j + 1))?;
    }
    Ok(())
}

/// Residuals `W_L V_{L-1,i} − y_i` for every sample.
pub fn output_residuals(w_l: &Matrix, v: &Matrix, y: &[f64]) -> Vec<f64> {
    let w = w_l.row(0);
    v.iter_rows().zip(y).map(|(vi, yi)| dot(w, vi) - yi).collect()
}

/// `Σ_i ‖σ(W v_prev_i) [+ v_prev_i] − v_next_i‖²`, unweighted.
pub fn layer_loss(w: &Matrix, v_prev: &Matrix, v_next: &Matrix, act: Activation, skip: bool) -> f64 {
    let z = v_prev.matmul_t(w);
    let mut sum = 0.0;
    for i in 0..z.rows() {
        let (zi, ti) = (z.row(i), v_next.row(i));
        let mut acc = 0.0;
        if skip {
            for ((zp, tp), sp) in zi.iter().zip(ti).zip(v_prev.row(i)) {
                let e = act.apply(*zp) + sp - tp;
                acc += e * e;
            }
        } else {
            for (zp, tp) in zi.iter().zip(ti) {
                let e = act.apply(*zp) - tp;
                acc += e * e;
            }
        }
        sum += acc;
    }
    sum
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!("gamma must be positive, got {gamma}")))
    }
}

/// The objective for strictly monotone activations (no skip connections).
pub fn loss_monotone(
    state: &NetworkState,
    x: &Matrix,
    y: &[f64],
    gamma: f64,
    act: Activation,
) -> Result<LossBreakdown> {
    state.check_data(x, y)?;
    check_gamma(gamma)?;
    let l = state.layers();
    let output = output_residuals(state.weight(l), state.aux(l - 1), y).iter().map(|r| r * r).sum();
    let hidden = (1..l)
        .map(|j| gamma * layer_loss(state.weight(j), state.layer_input(j - 1, x), state.aux(j), act, false))
        .collect();
    Ok(LossBreakdown::from_parts(output, hidden, gamma))
}

/// The skip-connection objective: layers `j ≥ 2` compare `σ(W_j V_{j-1}) + V_{j-1}`
/// against `V_j`, the first layer keeps its activation.
pub fn loss_relu_skip(
    state: &NetworkState,
    x: &Matrix,
    y: &[f64],
    gamma: f64,
    act: Activation,
) -> Result<LossBreakdown> {
    state.check_data(x, y)?;
    check_gamma(gamma)?;
    if !act.is_relu() {
        return Err(Error::InvalidArgument(alloc::format!(
            "the skip-connection objective is defined for relu, got {act}"
        )));
    }
    let l = state.layers();
    let output = output_residuals(state.weight(l), state.aux(l - 1), y).iter().map(|r| r * r).sum();
    let hidden = (1..l)
        .map(|j| gamma * layer_loss(state.weight(j), state.layer_input(j - 1, x), state.aux(j), act, j >= 2))
        .collect();
    Ok(LossBreakdown::from_parts(output, hidden, gamma))
}

/// Forward pass of the network on one input, ignoring auxiliary variables.
///
/// With `skip`, layers `2..L-1` map `v ↦ σ(W_j v) + v`.
pub fn predict(weights: &[Matrix], x: &[f64], act: Activation, skip: bool) -> f64 {
    let l = weights.len();
    assert!(l >= 2, "a network needs at least 2 layers");
    let mut v: Vec<f64> = weights[0].matvec(x).into_iter().map(|z| act.apply(z)).collect();
    for w in &weights[1..l - 1] {
        let z = w.matvec(&v);
        v = if skip {
            z.iter().zip(&v).map(|(zp, vp)| act.apply(*zp) + vp).collect()
        } else {
            z.into_iter().map(|zp| act.apply(zp)).collect()
        };
    }
    dot(weights[l - 1].row(0), &v)
}

/// Predictions for every row of `x`.
pub fn predict_all(weights: &[Matrix], x: &Matrix, act: Activation, skip: bool) -> Vec<f64> {
    let l = weights.len();
    assert!(l >= 2, "a network needs at least 2 layers");
    let mut v = act.apply_matrix(&x.matmul_t(&weights[0]));
    for w in &weights[1..l - 1] {
        let mut next = act.apply_matrix(&v.matmul_t(w));
        if skip {
            next.add_scaled(1.0, &v);
        }
        v = next;
    }
    v.matvec(weights[l - 1].row(0))
}

/// Mean squared error of the network on `(x, y)`.
pub fn mean_squared_error(weights: &[Matrix], x: &Matrix, y: &[f64], act: Activation, skip: bool) -> f64 {
    let p = predict_all(weights, x, act, skip);
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// A training set together with the spectral quantities of `X` that the
/// trainers need once per run.
#[derive(Clone, Debug)]
pub struct TrainingData<'a> {
    pub x: &'a Matrix,
    pub y: &'a [f64],
    /// `‖X‖`, the largest singular value.
    pub x_norm: f64,
    /// Smallest of the `min(n, d_in)` singular values of `X`.
    pub x_min_sv: f64,
    gram: OnceCell<Matrix>,
}

impl<'a> TrainingData<'a> {
    pub fn new(x: &'a Matrix, y: &'a [f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::ShapeMismatch { context: "labels", expected: (x.rows(), 1), actual: (y.len(), 1) });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("labels"));
        }
        let sv = crate::matrix::singular_values(x)?;
        Ok(Self { x, y, x_norm: sv[0], x_min_sv: *sv.last().expect("non-empty"), gram: OnceCell::new() })
    }

    /// `X Xᵀ`, computed on first use.
    pub fn gram(&self) -> &Matrix {
        self.gram.get_or_init(|| self.x.matmul_t(self.x))
    }

    /// Whether `n ≤ d_in` and `σ_min(X) > 1e-10 σ_max(X)`.
    pub fn is_full_row_rank(&self) -> bool {
        self.x.rows() <= self.x.cols() && self.x_min_sv > 1e-10 * self.x_norm
    }

    pub fn require_full_row_rank(&self) -> Result<()> {
        if self.is_full_row_rank() {
            Ok(())
        } else {
            Err(Error::RankDeficient {
                smallest: if self.x.rows() > self.x.cols() { 0.0 } else { self.x_min_sv },
                largest: self.x_norm,
                samples: self.x.rows(),
                d_in: self.x.cols(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    #[test]
    fn hand_evaluated_monotone_loss() {
        let shape = NetworkShape::new(1, 1, 2, 1).unwrap();
        let state = NetworkState::new(shape, vec![scalar(2.0), scalar(1.0)], vec![scalar(1.0)]).unwrap();
        let b = loss_monotone(&state, &scalar(1.0), &[0.0], 1.0, Activation::Identity).unwrap();
        assert_eq!(b.hidden, vec![1.0]);
        assert_eq!(b.output, 1.0);
        assert_eq!(b.total, 2.0);
    }

    #[test]
    fn output_only_loss() {
        // W_1 x = 0.5·2 = 1 = V_1, so only the output term remains
        let shape = NetworkShape::new(1, 1, 2, 1).unwrap();
        let state = NetworkState::new(shape, vec![scalar(0.5), scalar(1.0)], vec![scalar(1.0)]).unwrap();
        let b = loss_monotone(&state, &scalar(2.0), &[0.0], 1.0, Activation::Identity).unwrap();
        assert_eq!(b.output, 1.0);
        assert_eq!(b.hidden, vec![0.0]);
    }

    #[test]
    fn hand_evaluated_skip_loss() {
        let shape = NetworkShape::new(1, 1, 3, 1).unwrap();
        // V_1 = σ(1·2) = 2, so hidden_1 vanishes; hidden_2 = (σ(2) + 2 − 3)² = 1
        let state =
            NetworkState::new(shape, vec![scalar(1.0), scalar(1.0), scalar(1.0)], vec![scalar(2.0), scalar(3.0)])
                .unwrap();
        let b = loss_relu_skip(&state, &scalar(2.0), &[3.0], 1.0, Activation::Relu).unwrap();
        assert_eq!(b.hidden, vec![0.0, 1.0]);
        assert_eq!(b.output, 0.0);
    }

    #[test]
    fn zero_state_zero_loss() {
        let shape = NetworkShape::new(3, 2, 3, 2).unwrap();
        let weights = (1..=3).map(|j| {
            let (r, c) = shape.weight_shape(j);
            Matrix::zeros(r, c)
        });
        let state = NetworkState::new(shape, weights.collect(), vec![Matrix::zeros(2, 2); 2]).unwrap();
        let b = loss_relu_skip(&state, &Matrix::zeros(2, 3), &[0.0, 0.0], 1.0, Activation::Relu).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn predict_by_hand() {
        let w = vec![Matrix::from_rows(&[[1.0, 0.0]]), scalar(2.0)];
        assert_eq!(predict(&w, &[3.0, 5.0], Activation::Identity, false), 6.0);
        let zero = vec![Matrix::zeros(2, 2), Matrix::zeros(1, 2)];
        assert_eq!(predict(&zero, &[1.0, -4.0], Activation::Relu, false), 0.0);
    }

    #[test]
    fn skip_with_zero_hidden_weights_is_shallow() {
        let w1 = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]);
        let wl = Matrix::from_rows(&[[1.5, -0.5]]);
        let deep = vec![w1.clone(), Matrix::zeros(2, 2), wl.clone()];
        let shallow = vec![w1, wl];
        let x = [0.3, 0.7];
        assert_eq!(predict(&deep, &x, Activation::Relu, true), predict(&shallow, &x, Activation::Relu, false));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let shape = NetworkShape::new(2, 1, 2, 1).unwrap();
        let err = NetworkState::new(shape, vec![scalar(1.0), scalar(1.0)], vec![scalar(1.0)]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        assert!(NetworkShape::new(2, 2, 1, 1).is_err());
        assert!(NetworkShape::new_strict(2, 2, 2, 3).is_err());
    }
}
