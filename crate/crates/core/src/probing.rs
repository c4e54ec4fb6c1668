//! Channel-probing statistics.
//!
//! After an idle decision the SU sends `Nt` pilots of power `Pt` and the AP
//! forms the LMMSE estimate of the SU-AP coefficient. When the band was in
//! fact busy, the PU signal leaks into the pilots as extra Gaussian noise of
//! power `sigma_p^2`, so the estimate has a different variance under each
//! true hypothesis. Given the hypothesis the estimated power gain is
//! exponential with mean equal to that variance.

use rand::Rng;
use serde::Serialize;

use crate::model::{Model, SuProfile};
use crate::sensing::SensingStats;

/// True state of the band during a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Hypothesis {
    Idle,
    Busy,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::Idle, Hypothesis::Busy];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::Idle => 0,
            Hypothesis::Busy => 1,
        }
    }
}

/// Variances of the channel estimate and of its error, per hypothesis and
/// mixed with the posterior `(omega0, omega1)`.
///
/// Error variances are `gamma - var_hat`. Under a busy band the estimate
/// carries the PU leakage, so `var_hat_h1 >= var_hat_h0` and `var_err_h1`
/// can dip slightly below zero; consumers clamp it where a noise power is
/// needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationStats {
    pub var_hat_h0: f64,
    pub var_hat_h1: f64,
    pub var_hat: f64,
    pub var_err_h0: f64,
    pub var_err_h1: f64,
    pub var_err: f64,
    /// `Pp * delta_q` (W).
    pub pu_interference_var: f64,
}

impl EstimationStats {
    pub fn var_hat_given(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::Idle => self.var_hat_h0,
            Hypothesis::Busy => self.var_hat_h1,
        }
    }

    pub fn var_err_given(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::Idle => self.var_err_h0,
            Hypothesis::Busy => self.var_err_h1,
        }
    }
}

/// LMMSE variances for channel variance `gain_var`, pilot energy product
/// `Pt * Nt`, AP noise `ap_noise`, PU leakage power `pu_var` and posterior
/// busy probability `omega1`.
pub fn lmmse_variances(
    gain_var: f64,
    pilot_energy: f64,
    ap_noise: f64,
    pu_var: f64,
    omega1: f64,
) -> EstimationStats {
    let signal = gain_var * pilot_energy;
    let denom = signal + ap_noise + omega1 * pu_var;
    let denom2 = denom * denom;
    let scale = gain_var * gain_var * pilot_energy;
    let (var_hat_h0, var_hat_h1) = if denom2 > 0.0 {
        (
            scale * (signal + ap_noise) / denom2,
            scale * (signal + ap_noise + pu_var) / denom2,
        )
    } else {
        (0.0, 0.0)
    };
    let omega0 = 1.0 - omega1;
    let var_err_h0 = gain_var - var_hat_h0;
    let var_err_h1 = gain_var - var_hat_h1;
    EstimationStats {
        var_hat_h0,
        var_hat_h1,
        var_hat: omega0 * var_hat_h0 + omega1 * var_hat_h1,
        var_err_h0,
        var_err_h1,
        var_err: omega0 * var_err_h0 + omega1 * var_err_h1,
        pu_interference_var: pu_var,
    }
}

/// Estimator statistics of one SU. The pilot energy enters only through
/// `Pt * Nt = probe_cells * eu * fs`.
pub fn estimator_variances(model: &Model, profile: &SuProfile, sensing: &SensingStats) -> EstimationStats {
    lmmse_variances(
        profile.su_ap_var,
        model.derived.training_energy_product,
        profile.ap_noise,
        model.derived.pu_interference_var,
        sensing.omega1,
    )
}

/// Which law of the estimated gain to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Given(Hypothesis),
    /// Posterior mixture given an idle decision.
    Mixed,
}

/// Law of the estimated gain given an idle decision: exponential with mean
/// `means[h]` under each true hypothesis, mixed with `weights`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainDistribution {
    pub weights: [f64; 2],
    pub means: [f64; 2],
}

impl GainDistribution {
    pub fn new(sensing: &SensingStats, est: &EstimationStats) -> Self {
        Self {
            weights: [sensing.omega0, sensing.omega1],
            means: [est.var_hat_h0, est.var_hat_h1],
        }
    }

    pub fn mean(&self, h: Hypothesis) -> f64 {
        self.means[h.index()]
    }

    /// CDF at `x`; zero for `x <= 0`, one at `+inf`.
    pub fn cdf(&self, x: f64, cond: Conditioning) -> f64 {
        match cond {
            Conditioning::Given(h) => exp_cdf(x, self.means[h.index()]),
            Conditioning::Mixed => {
                self.weights[0] * exp_cdf(x, self.means[0]) + self.weights[1] * exp_cdf(x, self.means[1])
            }
        }
    }

    /// Density at `x`.
    pub fn pdf(&self, x: f64, cond: Conditioning) -> f64 {
        let p = |m: f64| if x < 0.0 || m <= 0.0 { 0.0 } else { (-x / m).exp() / m };
        match cond {
            Conditioning::Given(h) => p(self.means[h.index()]),
            Conditioning::Mixed => self.weights[0] * p(self.means[0]) + self.weights[1] * p(self.means[1]),
        }
    }

    /// Draws a gain under hypothesis `h` by inverting the exponential CDF.
    pub fn sample<R: Rng + ?Sized>(&self, h: Hypothesis, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        -self.means[h.index()] * (-u).ln_1p()
    }
}

/// Exponential CDF with mean `mean`. A zero mean is a point mass at zero.
pub fn exp_cdf(x: f64, mean: f64) -> f64 {
    if x <= 0.0 || x.is_nan() {
        0.0
    } else if x == f64::INFINITY || mean <= 0.0 {
        1.0
    } else {
        -(-x / mean).exp_m1()
    }
}

/// Free-function form of [`GainDistribution::cdf`].
pub fn gain_cdf(dist: &GainDistribution, x: f64, cond: Conditioning) -> f64 {
    dist.cdf(x, cond)
}

/// Free-function form of [`GainDistribution::sample`].
pub fn sample_gain<R: Rng + ?Sized>(dist: &GainDistribution, h: Hypothesis, rng: &mut R) -> f64 {
    dist.sample(h, rng)
}
