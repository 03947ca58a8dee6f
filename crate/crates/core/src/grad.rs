//! Analytic gradients of the unweighted block losses.
//!
//! All functions work on every sample at once (one sample per row) and return
//! the gradient of the plain sum of squares; the γ factor and step size are
//! applied by the caller.

use alloc::vec::Vec;

use crate::activation::Activation;
use crate::matrix::{gemm, Matrix, Op};
use crate::network::output_residuals;

/// `∇_{W_L} Σ_i (W_L v_i − y_i)² = 2 Σ_i r_i v_iᵀ`.
pub fn output_weights(w_l: &Matrix, v: &Matrix, y: &[f64]) -> Matrix {
    let res = output_residuals(w_l, v, y);
    let mut g = Matrix::row_vector(&v.t_matvec(&res));
    g.scale(2.0);
    g
}

/// Row `i` holds `∇_{v_i} (W_L v_i − y_i)² = 2 r_i W_Lᵀ`.
pub fn output_aux(w_l: &Matrix, v: &Matrix, y: &[f64]) -> Matrix {
    let res = output_residuals(w_l, v, y);
    let w = w_l.row(0);
    let mut g = Matrix::zeros(v.rows(), v.cols());
    for (i, ri) in res.iter().enumerate() {
        for (gp, wp) in g.row_mut(i).iter_mut().zip(w) {
            *gp = 2.0 * ri * wp;
        }
    }
    g
}

/// Layer residuals `R = σ(V_prev Wᵀ) [+ V_prev] − V_next` and the
/// derivative-weighted residuals `D ⊙ R`.
pub fn layer_residuals(w: &Matrix, v_prev: &Matrix, v_next: &Matrix, act: Activation, skip: bool) -> (Matrix, Matrix) {
    let mut r = v_prev.matmul_t(w);
    let mut dr = Matrix::zeros(r.rows(), r.cols());
    for i in 0..r.rows() {
        let target = v_next.row(i);
        let prev = v_prev.row(i);
        let (ri, di) = (r.row_mut(i), dr.row_mut(i));
        for p in 0..ri.len() {
            let z = ri[p];
            let mut e = act.apply(z) - target[p];
            if skip {
                e += prev[p];
            }
            ri[p] = e;
            di[p] = act.derivative(z) * e;
        }
    }
    (r, dr)
}

/// `∇_W Σ_i ‖σ(W v_i) [+ v_i] − t_i‖²`; row `p` is
/// `2 Σ_i σ'(w_p v_i) (σ(w_p v_i) [+ v_{i,p}] − t_{i,p}) v_iᵀ`.
pub fn layer_weights(w: &Matrix, v_prev: &Matrix, v_next: &Matrix, act: Activation, skip: bool) -> Matrix {
    let (_, dr) = layer_residuals(w, v_prev, v_next, act, skip);
    let mut g = Matrix::zeros(w.rows(), w.cols());
    gemm(2.0, &dr, Op::T, v_prev, Op::N, 0.0, &mut g);
    g
}

/// Row `i` holds `∇_{v_i} ‖σ(W v_i) [+ v_i] − t_i‖²`, i.e.
/// `2 Wᵀ D (σ(W v_i) − t_i)` or, with the skip term, `2 (Wᵀ D + I)(σ(W v_i) + v_i − t_i)`.
pub fn layer_aux(w: &Matrix, v_prev: &Matrix, v_next: &Matrix, act: Activation, skip: bool) -> Matrix {
    let (r, dr) = layer_residuals(w, v_prev, v_next, act, skip);
    let mut g = Matrix::zeros(v_prev.rows(), v_prev.cols());
    gemm(2.0, &dr, Op::N, w, Op::N, 0.0, &mut g);
    if skip {
        g.add_scaled(2.0, &r);
    }
    g
}

/// Gradient of a single sample's layer loss with respect to its input vector.
pub fn layer_aux_sample(w: &Matrix, v: &[f64], target: &[f64], act: Activation, skip: bool) -> Vec<f64> {
    let z = w.matvec(v);
    let mut e = Vec::with_capacity(z.len());
    let mut de = Vec::with_capacity(z.len());
    for p in 0..z.len() {
        let mut ep = act.apply(z[p]) - target[p];
        if skip {
            ep += v[p];
        }
        e.push(ep);
        de.push(act.derivative(z[p]) * ep);
    }
    let mut g = w.t_matvec(&de);
    if skip {
        for (gp, ep) in g.iter_mut().zip(&e) {
            *gp += ep;
        }
    }
    g.iter_mut().for_each(|gp| *gp *= 2.0);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    #[test]
    fn scalar_output_weight_gradient() {
        assert_eq!(output_weights(&s(1.0), &s(1.0), &[0.0]).as_slice(), &[2.0]);
        assert_eq!(output_aux(&s(1.0), &s(1.0), &[0.0]).as_slice(), &[2.0]);
    }

    #[test]
    fn scalar_hidden_gradients() {
        // identity, w = 2, v = 1, target 1: 2·(2 − 1)·1 = 2
        assert_eq!(layer_weights(&s(2.0), &s(1.0), &s(1.0), Activation::Identity, false).as_slice(), &[2.0]);
        // leaky, w = 1, v = 1, target 2: 2·1·1·(1 − 2) = −2
        assert_eq!(layer_aux(&s(1.0), &s(1.0), &s(2.0), Activation::LeakyRelu(0.5), false).as_slice(), &[-2.0]);
        // skip, w = 1, v = 1, target 3: residual −1, W-gradient 2·1·(−1)·1
        assert_eq!(layer_weights(&s(1.0), &s(1.0), &s(3.0), Activation::Relu, true).as_slice(), &[-2.0]);
    }

    #[test]
    fn per_sample_matches_batched() {
        let w = Matrix::from_rows(&[[0.3, -0.2], [0.1, 0.7]]);
        let v = Matrix::from_rows(&[[1.0, 2.0], [-0.5, 0.25]]);
        let t = Matrix::from_rows(&[[0.4, 0.1], [0.9, -1.0]]);
        for skip in [false, true] {
            let g = layer_aux(&w, &v, &t, Activation::LeakyRelu(0.2), skip);
            for i in 0..2 {
                let gi = layer_aux_sample(&w, v.row(i), t.row(i), Activation::LeakyRelu(0.2), skip);
                for (a, b) in g.row(i).iter().zip(&gi) {
                    assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }
}
