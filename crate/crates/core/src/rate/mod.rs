//! Achievable-rate lower bound, average interference and outage metrics.
//!
//! With true hypothesis `e` the AP treats the estimation error and, under a
//! busy band, the PU signal as Gaussian noise, so level `i` yields the
//! effective SINR scale
//!
//! ```text
//! S_i^e = i pu / (var_err_e i pu + sigma_v^2 + e sigma_p^2)
//! ```
//!
//! and the bound is `Dd W sum_e beta_e sum_k zeta_k sum_i E[log2(1 + g S_i^e); g in [a_i, c_i)]`
//! with `g` exponential of mean `var_hat_e`.

pub mod expint;

use serde::Serialize;

pub use expint::{antiderivative_m, e1, e1_scaled, exp_integral_ei, segment, segment_given_decay};

use crate::model::{Model, SuProfile};
use crate::policy::PolicyPmf;
use crate::probing::{EstimationStats, Hypothesis};
use crate::sensing::SensingStats;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// SINR scale of data level `level` under hypothesis `h`.
pub fn sinr_scale(model: &Model, profile: &SuProfile, est: &EstimationStats, h: Hypothesis, level: usize) -> f64 {
    let p = level as f64 * model.derived.unit_power;
    let leak = match h {
        Hypothesis::Idle => 0.0,
        Hypothesis::Busy => est.pu_interference_var,
    };
    p / (est.var_err_given(h).max(0.0) * p + profile.ap_noise + leak)
}

/// Rate bound of one SU split by true hypothesis (bits/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuRate {
    pub rate_lb: f64,
    pub by_hypothesis: [f64; 2],
}

/// Rate lower bound of one SU given its steady state `zeta` and policy pmf.
pub fn rate_lower_bound(
    model: &Model,
    profile: &SuProfile,
    zeta: &[f64],
    pmf: &PolicyPmf,
    est: &EstimationStats,
    sensing: &SensingStats,
) -> SuRate {
    let scale = model.derived.data_fraction * model.config.bandwidth;
    let beta = [sensing.beta0, sensing.beta1];
    let mut by_hypothesis = [0.0; 2];
    for h in Hypothesis::BOTH {
        let w = est.var_hat_given(h);
        if beta[h.index()] <= 0.0 || w <= 0.0 {
            continue;
        }
        let per_state = (pmf.probe_cells + 1..=pmf.cells).map(|k| {
            // consecutive levels meet at a common breakpoint
            let mut shared = (f64::NAN, 0.0);
            let inner = compensated_sum(pmf.breakpoints(k).iter().map(|bp| {
                let s = sinr_scale(model, profile, est, h, bp.level);
                let decay_a = if bp.lower == shared.0 { shared.1 } else { (-bp.lower / w).exp() };
                let decay_c = (-bp.upper / w).exp();
                shared = (bp.upper, decay_c);
                segment_given_decay(bp.lower, bp.upper, decay_a, decay_c, s, w)
            }));
            zeta[k] * inner
        });
        by_hypothesis[h.index()] = scale * beta[h.index()] * compensated_sum(per_state);
    }
    SuRate { rate_lb: by_hypothesis[0] + by_hypothesis[1], by_hypothesis }
}

/// Average interference one SU inflicts on the PU receiver (W):
/// `beta1 delta_z (sum_k zeta_k sum_i psi1_ik i pu + Dt Pt)`.
pub fn interference_contribution(
    model: &Model,
    profile: &SuProfile,
    zeta: &[f64],
    pmf: &PolicyPmf,
    sensing: &SensingStats,
) -> f64 {
    if sensing.beta1 == 0.0 {
        return 0.0;
    }
    let pu = model.derived.unit_power;
    let data = compensated_sum((pmf.probe_cells + 1..=pmf.cells).map(|k| {
        let row = pmf.row(Hypothesis::Busy, k);
        zeta[k] * compensated_sum(row.iter().enumerate().skip(1).map(|(i, p)| p * i as f64 * pu))
    }));
    let training = model.derived.training_fraction * model.derived.training_power;
    sensing.beta1 * profile.su_pu_var * (data + training)
}

/// Left-hand side of the average interference constraint.
pub fn aic_lhs(contributions: &[f64]) -> f64 {
    compensated_sum(contributions.iter().copied())
}

/// Probability that a slot sensed idle carries no data:
/// `sum_{k<=probe} zeta_k + sum_{k>probe} zeta_k (omega0 psi0_k0 + omega1 psi1_k0)`.
pub fn transmission_outage(zeta: &[f64], pmf: &PolicyPmf, sensing: &SensingStats) -> f64 {
    let reserve: f64 = zeta.iter().take(pmf.probe_cells + 1).sum();
    let rest = compensated_sum((pmf.probe_cells + 1..=pmf.cells).map(|k| {
        zeta[k]
            * (sensing.omega0 * pmf.no_transmit(Hypothesis::Idle, k)
                + sensing.omega1 * pmf.no_transmit(Hypothesis::Busy, k))
    }));
    (reserve + rest).min(1.0)
}

/// Network-level rate and interference summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBreakdown {
    pub per_su: Vec<SuRate>,
    pub sum_rate: f64,
    pub interference: Vec<f64>,
    pub aic_lhs: f64,
    pub aic_satisfied: bool,
}

impl RateBreakdown {
    pub fn new(per_su: Vec<SuRate>, interference: Vec<f64>, cap: f64) -> Self {
        let sum_rate = compensated_sum(per_su.iter().map(|r| r.rate_lb));
        let lhs = aic_lhs(&interference);
        Self { per_su, sum_rate, aic_satisfied: lhs <= cap, interference, aic_lhs: lhs }
    }
}
