//! Energy-detector model.
//!
//! The detector averages `Ns` received power samples and compares the result
//! with a threshold. For large `Ns` the statistic is Gaussian, so both error
//! probabilities are Gaussian tail probabilities.

use serde::Serialize;

use crate::model::{Model, SuProfile};

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] on `(0, 1)`.
///
/// Acklam's rational approximation of the normal quantile followed by a
/// Halley correction against the `erfc`-based tail.
pub fn q_inverse(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    // Q^{-1}(p) is the normal quantile at 1 - p; work with the smaller tail
    // to keep precision.
    let x = if p <= 0.5 { -acklam(p) } else { acklam(1.0 - p) };
    // Halley step on f(x) = Q(x) - p, f' = -phi(x), f'' = x phi(x).
    let mut x = x;
    for _ in 0..2 {
        let err = q_function(x) - p;
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf == 0.0 {
            break;
        }
        let u = err / pdf;
        x += u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Normal quantile, relative error about 1.15e-9.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;

    if p < LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// False-alarm probability of a detector tuned to hit `target_pd`, with
/// received SNR `snr` over `samples` sensing samples.
pub fn false_alarm_at_target_pd(snr: f64, samples: f64, target_pd: f64) -> f64 {
    debug_assert!(snr >= 0.0 && samples >= 0.0);
    let arg = (2.0 * snr + 1.0).sqrt() * q_inverse(target_pd) + snr * samples.sqrt();
    q_function(arg).clamp(0.0, 1.0)
}

/// `(p_fa, p_d)` of a detector with threshold `threshold` (W).
pub fn detector_probabilities(threshold: f64, snr: f64, samples: f64, noise: f64) -> (f64, f64) {
    let ratio = threshold / noise;
    let p_fa = q_function((ratio - 1.0) * samples.sqrt());
    let p_d = q_function((ratio - snr - 1.0) * (samples / (2.0 * snr + 1.0)).sqrt());
    (p_fa.clamp(0.0, 1.0), p_d.clamp(0.0, 1.0))
}

/// Sensing error probabilities and the joint outcome probabilities they
/// induce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensingStats {
    pub p_fa: f64,
    pub p_d: f64,
    /// Probability the band is sensed idle.
    pub pi_hat_idle: f64,
    /// Probability the band is sensed busy.
    pub pi_hat_busy: f64,
    /// P(idle, sensed idle).
    pub beta0: f64,
    /// P(busy, sensed idle).
    pub beta1: f64,
    /// P(idle | sensed idle).
    pub omega0: f64,
    /// P(busy | sensed idle).
    pub omega1: f64,
    /// Received PU SNR at the SU.
    pub snr: f64,
}

impl SensingStats {
    /// Builds the joint probabilities from the prior and the detector
    /// operating point. When the band is never sensed idle the posterior is
    /// undefined; it is then taken as `(1, 0)`.
    pub fn from_probabilities(prior_idle: f64, p_fa: f64, p_d: f64, snr: f64) -> Self {
        let beta0 = prior_idle * (1.0 - p_fa);
        let beta1 = (1.0 - prior_idle) * (1.0 - p_d);
        let pi_hat_idle = beta0 + beta1;
        let (omega0, omega1) = if pi_hat_idle > 0.0 {
            (beta0 / pi_hat_idle, beta1 / pi_hat_idle)
        } else {
            (1.0, 0.0)
        };
        Self {
            p_fa,
            p_d,
            pi_hat_idle,
            pi_hat_busy: 1.0 - pi_hat_idle,
            beta0,
            beta1,
            omega0,
            omega1,
            snr,
        }
    }
}

/// Sensing statistics of one SU under the model's detector settings.
pub fn sensing_stats(model: &Model, profile: &SuProfile) -> SensingStats {
    let c = &model.config;
    let snr = c.pu_power * profile.pu_su_var / profile.sensing_noise;
    if c.ideal_sensing {
        return SensingStats::from_probabilities(c.prior_idle, 0.0, 1.0, snr);
    }
    let p_fa = false_alarm_at_target_pd(snr, model.derived.sensing_samples_exact, c.target_detection);
    SensingStats::from_probabilities(c.prior_idle, p_fa, c.target_detection, snr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, SystemConfig};
    use approx::assert_relative_eq;

    #[test]
    fn q_reference_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert_relative_eq!(q_function(4.0), 3.1671241833119921254e-5, max_relative = 1e-13);
        assert_relative_eq!(q_inverse(0.85), -1.0364333894937895797, max_relative = 1e-13);
    }

    #[test]
    fn blind_detector_false_alarm_equals_detection() {
        for pd in [0.1, 0.5, 0.85, 0.99] {
            assert_relative_eq!(false_alarm_at_target_pd(0.0, 100.0, pd), pd, epsilon = 1e-13);
        }
    }

    #[test]
    fn reference_false_alarm() {
        // Q(sqrt(3) Q^{-1}(0.85) + 10), evaluated in extended precision.
        let p = false_alarm_at_target_pd(1.0, 100.0, 0.85);
        assert_relative_eq!(p, 1.1544456337935144194e-16, max_relative = 1e-9);
    }

    #[test]
    fn false_alarm_decreases_with_samples() {
        for snr in [0.05, 0.3, 1.0, 3.0] {
            for pd in [0.6, 0.85, 0.95] {
                let mut prev = f64::INFINITY;
                for ns in 1..2000 {
                    let p = false_alarm_at_target_pd(snr, ns as f64, pd);
                    assert!(p <= prev, "snr {snr} pd {pd} ns {ns}");
                    prev = p;
                }
            }
        }
    }

    #[test]
    fn threshold_at_noise_floor() {
        let (p_fa, _) = detector_probabilities(1.0, 1.0, 400.0, 1.0);
        assert_eq!(p_fa, 0.5);
        let (_, p_d) = detector_probabilities(2.0, 1.0, 400.0, 1.0);
        assert_eq!(p_d, 0.5);
        let (p_fa, p_d) = detector_probabilities(1.2, 1.0, 400.0, 1.0);
        assert_relative_eq!(p_fa, 3.1671241833119921254e-5, max_relative = 1e-9);
        assert!(p_d > 1.0 - 1e-15);
    }

    #[test]
    fn joint_probabilities() {
        let s = SensingStats::from_probabilities(0.7, 0.1, 0.85, 1.0);
        assert_relative_eq!(s.beta0, 0.63, epsilon = 1e-15);
        assert_relative_eq!(s.beta1, 0.045, epsilon = 1e-15);
        assert_relative_eq!(s.pi_hat_idle, 0.675, epsilon = 1e-15);
        assert_relative_eq!(s.omega1, 0.045 / 0.675, epsilon = 1e-15);
        assert_relative_eq!(s.omega1, 0.0667, epsilon = 1e-4);
        assert_relative_eq!(s.omega0 + s.omega1, 1.0, epsilon = 1e-15);

        let ideal = SensingStats::from_probabilities(0.7, 0.0, 1.0, 1.0);
        assert_eq!((ideal.beta0, ideal.beta1, ideal.omega1), (0.7, 0.0, 0.0));

        let no_pu = SensingStats::from_probabilities(1.0, 0.2, 0.3, 1.0);
        assert_eq!(no_pu.beta1, 0.0);
    }

    #[test]
    fn ideal_sensing_override() {
        let mut c = SystemConfig::reference();
        c.ideal_sensing = true;
        let m = validate(c, vec![crate::model::SuProfile::new(2.0, 15.0)]).unwrap();
        let s = sensing_stats(&m, &m.profiles[0]);
        assert_eq!((s.p_fa, s.p_d, s.beta1, s.omega1), (0.0, 1.0, 0.0, 0.0));
    }

    proptest::proptest! {
        #[test]
        fn q_and_inverse_round_trip(e in -10.0f64..=-0.30103) {
            // log-uniform on [1e-10, 0.5], mirrored onto the upper half
            let p = 10f64.powf(e);
            for p in [p, 1.0 - p] {
                let back = q_function(q_inverse(p));
                proptest::prop_assert!((back - p).abs() < 1e-12, "p {} back {}", p, back);
            }
        }

        #[test]
        fn joint_probabilities_are_consistent(pi0 in 0.0f64..=1.0, p_fa in 0.0f64..=1.0, p_d in 0.0f64..=1.0) {
            let s = SensingStats::from_probabilities(pi0, p_fa, p_d, 1.0);
            proptest::prop_assert!(s.pi_hat_idle >= 0.0 && s.pi_hat_idle <= 1.0 + 1e-15);
            proptest::prop_assert!((s.omega0 + s.omega1 - 1.0).abs() < 1e-12);
            proptest::prop_assert!((s.pi_hat_idle + s.pi_hat_busy - 1.0).abs() < 1e-15);
        }
    }
}
