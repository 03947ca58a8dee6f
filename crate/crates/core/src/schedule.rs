//! Step sizes and iteration counts that certify `F ≤ ε`.
//!
//! The formulas are evaluated in the order η_V, η_W^(2), K, C_K, K_V, K_W,
//! C_V, η_W^(1). Every count is at least 1.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::init::SvbBounds;
use crate::matrix::{norm_sq, singular_values, Matrix};
use crate::network::{output_residuals, NetworkState};
use crate::relu::output_row_stats;
use crate::step::StepScaling;

/// Step sizes and iteration counts for one training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSchedule {
    /// Step for the auxiliary variables.
    pub eta_v: f64,
    /// Step for `W_2..W_L`.
    pub eta_w1: f64,
    /// Step for `W_1`.
    pub eta_w2: f64,
    pub k_outer: usize,
    pub k_v: usize,
    pub k_w: usize,
    pub gamma: f64,
    /// Singular value bounding at initialization; `None` disables it.
    pub svb: Option<SvbBounds>,
    pub scaling: StepScaling,
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let steps = [("eta_v", self.eta_v), ("eta_w1", self.eta_w1), ("eta_w2", self.eta_w2), ("gamma", self.gamma)];
        for (name, v) in steps {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [("k_outer", self.k_outer), ("k_v", self.k_v), ("k_w", self.k_w)];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(alloc::format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Quantities of a freshly initialized instance that the schedules depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceStats {
    /// Smallest singular value of `X`.
    pub s: f64,
    /// `R = Σ_i R_i²` with `R_i = |W_L V_{L-1,i} − y_i|`.
    pub r_total: f64,
    pub r_max: f64,
    pub max_x_sq: f64,
    /// `‖X‖²`, squared operator norm of the data matrix.
    pub x_norm_sq: f64,
    /// `2 max_j Σ_i ‖V_{j,i}‖²`.
    pub c_v: f64,
    /// `min(‖w₊‖², ‖w₋‖²)` of the output row.
    pub w_min_sq: f64,
    pub alpha: f64,
    pub ell: f64,
    pub gamma: f64,
    pub layers: usize,
    pub r: usize,
    pub n: usize,
    pub epsilon: f64,
}

/// Measures [`InstanceStats`] on an initialized state.
pub fn measure_stats(
    state: &NetworkState,
    x: &Matrix,
    y: &[f64],
    act: Activation,
    gamma: f64,
    epsilon: f64,
) -> Result<InstanceStats> {
    state.check_data(x, y)?;
    let l = state.layers();
    let res = output_residuals(state.weight(l), state.aux(l - 1), y);
    let r_total = res.iter().map(|r| r * r).sum();
    let r_max = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let max_x_sq = x.iter_rows().map(norm_sq).fold(0.0, f64::max);
    let c_v = 2.0 * state.aux_layers().iter().map(Matrix::frobenius_norm_sq).fold(0.0, f64::max);
    let shape = state.shape();
    let sv = singular_values(x)?;
    Ok(InstanceStats {
        s: *sv.last().expect("non-empty"),
        x_norm_sq: sv[0] * sv[0],
        r_total,
        r_max,
        max_x_sq,
        c_v,
        w_min_sq: output_row_stats(state.weight(l).row(0)).w_min_sq,
        alpha: act.alpha(),
        ell: act.ell(),
        gamma,
        layers: l,
        r: shape.r,
        n: shape.n,
        epsilon,
    })
}

/// A schedule together with the constants it was derived from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleReport {
    pub schedule: TrainSchedule,
    pub c_k: f64,
    pub c_v: f64,
    /// The looser η_V cap printed in the theorem statement, `α/(16γℓ⁴)`;
    /// only reported, never used.
    pub eta_v_printed_cap: Option<f64>,
    /// Power of `s` in the K_W display: 1 for the monotone schedule, 2 for ReLU.
    pub k_w_s_power: u32,
}

/// `⌈a · ln(b)⌉`, at least 1.
fn count(a: f64, b: f64) -> Result<usize> {
    let v = a * libm::log(b);
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::InvalidArgument(alloc::format!("iteration count is not finite ({a} * ln {b})")));
    }
    Ok((libm::ceil(v).max(1.0)) as usize)
}

fn check_common(stats: &InstanceStats) -> Result<()> {
    if !(stats.epsilon > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("epsilon must be positive, got {}", stats.epsilon)));
    }
    if !(stats.gamma > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("gamma must be positive, got {}", stats.gamma)));
    }
    if !(stats.s > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "the smallest singular value of X must be positive, got {}",
            stats.s
        )));
    }
    if !(stats.max_x_sq > 0.0) {
        return Err(Error::InvalidArgument("the data matrix is zero".into()));
    }
    if stats.layers < 2 {
        return Err(Error::InvalidArgument("a network needs at least 2 layers".into()));
    }
    Ok(())
}

/// `C_V = c_V + 2n(4γℓη_V C_K K K_V)²`, a bound on `λ_max(V_j V_jᵀ)` along
/// the whole run. It does not depend on η_W^(1), so no iteration is needed.
fn aux_energy_bound(stats: &InstanceStats, eta_v: f64, c_k: f64, k: usize, k_v: usize) -> f64 {
    let drift = 4.0 * stats.gamma * stats.ell * eta_v * c_k * k as f64 * k_v as f64;
    stats.c_v + 2.0 * stats.n as f64 * drift * drift
}

/// Schedule for strictly monotone activations.
pub fn schedule_monotone(stats: &InstanceStats) -> Result<TrainSchedule> {
    derive_monotone(stats).map(|r| r.schedule)
}

pub fn derive_monotone(stats: &InstanceStats) -> Result<ScheduleReport> {
    check_common(stats)?;
    let InstanceStats { alpha, ell, gamma, epsilon, .. } = *stats;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidArgument(alloc::format!("alpha must lie in (0, 2), got {alpha}")));
    }
    let l = stats.layers as i32;
    let ell4 = ell * ell * ell * ell;
    let (r, n) = (stats.r as f64, stats.n as f64);
    let s = stats.s;

    let eta_v = alpha * alpha / (16.0 * gamma * ell4);
    // The printed cap 1/(γℓ⁴ max‖x_i‖²) lets the top singular direction of X
    // oscillate or grow; half the stability limit of ‖X‖² also satisfies it.
    let eta_w2 = 1.0 / (2.0 * gamma * ell4 * stats.max_x_sq.max(stats.x_norm_sq));
    let k = count(2.0 / eta_v, 3.0 * stats.r_total / epsilon)?;
    let c_k =
        libm::pow(2.0 / alpha, l as f64) * (4.0 * stats.r_max * eta_v + 2.0 / (2.0 - alpha) * libm::sqrt(epsilon));
    let k_v = if stats.layers == 2 {
        1
    } else {
        count(
            1.0 / (gamma * alpha * ell * eta_v),
            48.0 * gamma * ell * ell * (l - 2) as f64 * r * n * c_k * c_k / (alpha * alpha * epsilon),
        )?
    };
    let k_w = count(
        1.0 / (4.0 * gamma * s * alpha * alpha * eta_w2),
        3.0 * ell * ell * stats.max_x_sq * r * n * c_k * c_k / (alpha * alpha * s * s * epsilon),
    )?;
    let c_v = aux_energy_bound(stats, eta_v, c_k, k, k_v);
    let eta_w1 = (1.0 / eta_v) / (8.0 * libm::sqrt(r) * c_v * k as f64) * libm::pow(alpha / 2.0, l as f64);
    let schedule = TrainSchedule {
        eta_v,
        eta_w1,
        eta_w2,
        k_outer: k,
        k_v,
        k_w,
        gamma,
        svb: Some(SvbBounds::MONOTONE),
        scaling: StepScaling::Raw,
    };
    schedule.validate()?;
    Ok(ScheduleReport { schedule, c_k, c_v, eta_v_printed_cap: Some(alpha / (16.0 * gamma * ell4)), k_w_s_power: 1 })
}

/// Schedule for ReLU networks with skip connections.
pub fn schedule_relu(stats: &InstanceStats) -> Result<TrainSchedule> {
    derive_relu(stats).map(|r| r.schedule)
}

pub fn derive_relu(stats: &InstanceStats) -> Result<ScheduleReport> {
    check_common(stats)?;
    if !(stats.w_min_sq > 0.0) {
        return Err(Error::InvalidArgument(
            "the output row must have entries of both signs (w_min_sq = 0); \
             a non-negative solution of W_L v = y is not guaranteed"
                .into(),
        ));
    }
    let InstanceStats { gamma, epsilon, w_min_sq, .. } = *stats;
    let l = stats.layers as i32;
    let (r, n) = (stats.r as f64, stats.n as f64);
    let s2 = stats.s * stats.s;

    let eta_v = (1.0 / (2.0 * w_min_sq)).min(1.0 / (12.0 * gamma));
    let eta_w2 = 1.0 / (2.0 * stats.max_x_sq.max(gamma * stats.x_norm_sq));
    let k = count(1.0 / (4.0 * eta_v * w_min_sq), 3.0 * stats.r_total / epsilon)?;
    let c_k = libm::pow(1.5, l as f64) * (4.0 * stats.r_max * eta_v + 5.0 * libm::sqrt(epsilon));
    let k_v = if stats.layers == 2 {
        1
    } else {
        count(3.0 / (4.0 * gamma * eta_v), 245.0 * (l - 2) as f64 * r * n * c_k * c_k / (3.0 * epsilon))?
    };
    let k_w = count(1.0 / (4.0 * gamma * s2 * eta_w2), 3.0 * stats.max_x_sq * c_k * c_k / (s2 * epsilon))?;
    let relu_stats = InstanceStats { ell: 1.0, ..*stats };
    let c_v = aux_energy_bound(&relu_stats, eta_v, c_k, k, k_v);
    let eta_w1 = (1.0 / eta_v) / (24.0 * libm::sqrt(r) * c_v * k as f64) * libm::pow(2.0 / 3.0, l as f64);
    let schedule = TrainSchedule {
        eta_v,
        eta_w1,
        eta_w2,
        k_outer: k,
        k_v,
        k_w,
        gamma,
        svb: Some(SvbBounds::RELU),
        scaling: StepScaling::Raw,
    };
    schedule.validate()?;
    Ok(ScheduleReport { schedule, c_k, c_v, eta_v_printed_cap: None, k_w_s_power: 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> InstanceStats {
        InstanceStats {
            s: 0.5,
            r_total: 3.0,
            r_max: 1.0,
            max_x_sq: 4.0,
            x_norm_sq: 6.0,
            c_v: 10.0,
            w_min_sq: 0.5,
            alpha: 0.5,
            ell: 1.0,
            gamma: 1.0,
            layers: 3,
            r: 6,
            n: 8,
            epsilon: 0.003,
        }
    }

    #[test]
    fn monotone_examples() {
        let s = schedule_monotone(&stats()).unwrap();
        assert_eq!(s.eta_v, 0.015625);
        assert_eq!(s.k_outer, 1025);
    }

    #[test]
    fn relu_examples() {
        let s = schedule_relu(&stats()).unwrap();
        assert_eq!(s.eta_v, 1.0 / 12.0);
        assert_eq!(s.k_outer, 49);
    }

    #[test]
    fn refusals() {
        assert!(schedule_monotone(&InstanceStats { epsilon: 0.0, ..stats() }).is_err());
        assert!(schedule_monotone(&InstanceStats { alpha: 2.0, ..stats() }).is_err());
        assert!(schedule_relu(&InstanceStats { w_min_sq: 0.0, ..stats() }).is_err());
    }

    #[test]
    fn two_layers_skip_the_hidden_count() {
        let st = InstanceStats { layers: 2, ..stats() };
        assert_eq!(schedule_monotone(&st).unwrap().k_v, 1);
        assert_eq!(schedule_relu(&st).unwrap().k_v, 1);
    }
}
