//! Configuration types, derived slot constants and validation.
//!
//! Everything is in SI units: seconds, hertz, joules and watts. Channel
//! variances are dimensionless. A [`Model`] is produced only by
//! [`validate`] and is immutable afterwards.

use std::fmt;

use serde::Serialize;

/// Default sampling frequency when a configuration does not set one.
pub const DEFAULT_SAMPLING_FREQUENCY: f64 = 100e3;

/// Network-wide constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    /// Slot length `Tf` (s).
    pub slot_duration: f64,
    /// Sensing phase length `tau_s` (s).
    pub sensing_duration: f64,
    /// Channel probing phase length `tau_t` (s).
    pub probing_duration: f64,
    /// Sampling frequency `fs` (Hz).
    pub sampling_frequency: f64,
    /// Channel bandwidth `W` (Hz).
    pub bandwidth: f64,
    /// Energy held by one battery cell (J).
    pub energy_unit: f64,
    /// Battery size `K` in cells.
    pub battery_cells: usize,
    /// Cells spent on pilots whenever the band is sensed idle.
    pub probe_cells: usize,
    /// Prior probability that the band is idle.
    pub prior_idle: f64,
    /// Target detection probability of the energy detector.
    pub target_detection: f64,
    /// PU transmit power (W).
    pub pu_power: f64,
    /// Variance of the PU-transmitter to AP fading coefficient.
    pub pu_ap_channel_var: f64,
    /// Average interference cap at the PU receiver (W); may be infinite.
    pub interference_cap: f64,
    /// Force a perfect detector (`p_fa = 0`, `p_d = 1`).
    pub ideal_sensing: bool,
}

impl SystemConfig {
    /// The simulation constants used throughout the reference experiments:
    /// 10 ms slots, 1 ms sensing, 0.1 ms probing, 10 kHz bandwidth,
    /// 0.01 J cells, one probe cell, `pi0 = 0.7`, target detection 0.85,
    /// 1 W primary power and unit PU-AP variance. The battery size is
    /// not part of that table and defaults to 80 cells here.
    pub fn reference() -> Self {
        Self {
            slot_duration: 10e-3,
            sensing_duration: 1e-3,
            probing_duration: 0.1e-3,
            sampling_frequency: DEFAULT_SAMPLING_FREQUENCY,
            bandwidth: 10e3,
            energy_unit: 0.01,
            battery_cells: 80,
            probe_cells: 1,
            prior_idle: 0.7,
            target_detection: 0.85,
            pu_power: 1.0,
            pu_ap_channel_var: 1.0,
            interference_cap: f64::INFINITY,
            ideal_sensing: false,
        }
    }
}

/// Per-SU channel and harvesting statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuProfile {
    /// Variance `gamma` of the SU-AP fading coefficient.
    pub su_ap_var: f64,
    /// Variance of the PU-transmitter to SU fading coefficient.
    pub pu_su_var: f64,
    /// Variance of the SU to PU-receiver fading coefficient.
    pub su_pu_var: f64,
    /// Noise power at the SU during sensing (W).
    pub sensing_noise: f64,
    /// Noise power at the AP (W).
    pub ap_noise: f64,
    /// Mean number of energy packets harvested per slot.
    pub harvest_rate: f64,
}

impl SuProfile {
    /// Unit noise powers and unit PU-side variances.
    pub fn new(su_ap_var: f64, harvest_rate: f64) -> Self {
        Self {
            su_ap_var,
            pu_su_var: 1.0,
            su_pu_var: 1.0,
            sensing_noise: 1.0,
            ap_noise: 1.0,
            harvest_rate,
        }
    }
}

/// Policy parameters of one SU: slope `omega` and gain cut-off `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyParams {
    pub omega: f64,
    pub theta: f64,
}

impl PolicyParams {
    pub fn new(omega: f64, theta: f64) -> crate::Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(crate::Error::InvalidPolicy(format!(
                "omega = {omega} outside [0, 1]"
            )));
        }
        if !(theta >= 0.0) {
            return Err(crate::Error::InvalidPolicy(format!(
                "theta = {theta} must be >= 0"
            )));
        }
        Ok(Self { omega, theta })
    }
}

/// Constants derived from a [`SystemConfig`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    /// Data phase length `tau_d = Tf - tau_s - tau_t` (s).
    pub data_duration: f64,
    pub sensing_samples: u64,
    pub training_samples: u64,
    pub data_samples: u64,
    /// Exact (unrounded) `tau_s * fs`.
    pub sensing_samples_exact: f64,
    /// Data power of one cell spread over the data phase, `eu / tau_d` (W).
    pub unit_power: f64,
    /// Pilot power `probe_cells * eu / tau_t` (W).
    pub training_power: f64,
    /// Pilot energy product `Pt * Nt = probe_cells * eu * fs`.
    pub training_energy_product: f64,
    /// `tau_d / Tf`.
    pub data_fraction: f64,
    /// `tau_t / Tf`.
    pub training_fraction: f64,
    /// Power of the PU signal leaking into the pilots, `Pp * delta_q` (W).
    pub pu_interference_var: f64,
}

impl Derived {
    fn compute(c: &SystemConfig) -> Self {
        let data_duration = c.slot_duration - c.sensing_duration - c.probing_duration;
        let fs = c.sampling_frequency;
        let ns = c.sensing_duration * fs;
        Self {
            data_duration,
            sensing_samples: ns.round() as u64,
            training_samples: (c.probing_duration * fs).round() as u64,
            data_samples: (data_duration * fs).round() as u64,
            sensing_samples_exact: ns,
            unit_power: c.energy_unit / data_duration,
            training_power: c.probe_cells as f64 * c.energy_unit / c.probing_duration,
            training_energy_product: c.probe_cells as f64 * c.energy_unit * fs,
            data_fraction: data_duration / c.slot_duration,
            training_fraction: c.probing_duration / c.slot_duration,
            pu_interference_var: c.pu_power * c.pu_ap_channel_var,
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    /// Offending field name, as spelled in the configuration file.
    pub field: &'static str,
    /// SU index (0-based) for per-SU fields.
    pub su: Option<usize>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.su {
            Some(n) => write!(f, "su.{}: {}: {}", n + 1, self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Every invariant violated by a configuration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for issue in &self.issues {
            write!(f, "\n  {issue}")?;
        }
        Ok(())
    }
}

/// A validated configuration with its derived constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Model {
    pub config: SystemConfig,
    pub derived: Derived,
    pub profiles: Vec<SuProfile>,
    /// Non-fatal remarks, e.g. non-integral sample counts.
    pub warnings: Vec<String>,
}

impl Model {
    pub fn num_sus(&self) -> usize {
        self.profiles.len()
    }

    pub fn profile(&self, su: usize) -> &SuProfile {
        &self.profiles[su]
    }

    /// Re-validate after changing the configuration.
    pub fn with_config(&self, config: SystemConfig) -> Result<Model, ValidationError> {
        validate(config, self.profiles.clone())
    }

    pub fn with_profiles(&self, profiles: Vec<SuProfile>) -> Result<Model, ValidationError> {
        validate(self.config.clone(), profiles)
    }
}

/// Checks every invariant of `config` and `profiles` and derives the slot
/// constants. All violations are reported together.
pub fn validate(config: SystemConfig, profiles: Vec<SuProfile>) -> Result<Model, ValidationError> {
    let mut issues = Vec::new();
    let mut push = |field, su, message: String| issues.push(Issue { field, su, message });

    let positive = [
        ("slot_duration", config.slot_duration),
        ("sensing_duration", config.sensing_duration),
        ("probing_duration", config.probing_duration),
        ("sampling_frequency", config.sampling_frequency),
        ("bandwidth", config.bandwidth),
        ("energy_unit", config.energy_unit),
    ];
    for (field, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            push(field, None, format!("must be positive and finite, got {v}"));
        }
    }
    let tau_d = config.slot_duration - config.sensing_duration - config.probing_duration;
    if config.sensing_duration > 0.0 && config.probing_duration > 0.0 && !(tau_d > 0.0) {
        push(
            "sensing_duration",
            None,
            format!(
                "τd ≤ 0: sensing ({}) + probing ({}) must be shorter than the slot ({})",
                config.sensing_duration, config.probing_duration, config.slot_duration
            ),
        );
    }
    for (field, p) in [
        ("prior_idle", config.prior_idle),
        ("target_detection", config.target_detection),
    ] {
        if !(p > 0.0 && p < 1.0) {
            push(field, None, format!("probability must lie in (0, 1), got {p}"));
        }
    }
    if config.battery_cells < 1 {
        push("battery_cells", None, "battery needs at least one cell".into());
    }
    if config.probe_cells >= config.battery_cells {
        push(
            "probe_cells",
            None,
            format!(
                "probe cells ({}) must be fewer than battery cells ({})",
                config.probe_cells, config.battery_cells
            ),
        );
    }
    for (field, v) in [
        ("pu_power", config.pu_power),
        ("pu_ap_channel_var", config.pu_ap_channel_var),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            push(field, None, format!("must be non-negative and finite, got {v}"));
        }
    }
    if !(config.interference_cap >= 0.0) {
        push(
            "interference_cap",
            None,
            format!("must be non-negative, got {}", config.interference_cap),
        );
    }
    if profiles.is_empty() {
        push("su", None, "at least one SU profile is required".into());
    }
    for (n, p) in profiles.iter().enumerate() {
        for (field, v) in [
            ("su_ap_var", p.su_ap_var),
            ("pu_su_var", p.pu_su_var),
            ("su_pu_var", p.su_pu_var),
            ("sensing_noise", p.sensing_noise),
            ("ap_noise", p.ap_noise),
            ("harvest_rate", p.harvest_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                push(field, Some(n), format!("must be positive and finite, got {v}"));
            }
        }
    }

    if !issues.is_empty() {
        return Err(ValidationError { issues });
    }

    let derived = Derived::compute(&config);
    let mut warnings = Vec::new();
    let fs = config.sampling_frequency;
    for (name, tau) in [
        ("sensing", config.sensing_duration),
        ("probing", config.probing_duration),
        ("data", derived.data_duration),
    ] {
        let n = tau * fs;
        if (n - n.round()).abs() > 1e-6 {
            warnings.push(format!(
                "{name} phase spans {n} samples at fs = {fs} Hz; rounded to {}",
                n.round()
            ));
        }
    }
    if derived.sensing_samples == 0 {
        warnings.push("sensing phase holds no samples; detector statistics degenerate".into());
    }

    Ok(Model { config, derived, profiles, warnings })
}

/// Poisson pmf of harvested packets truncated to `0..=cells`: the last cell
/// absorbs the tail so the vector sums to one.
pub fn harvest_pmf(rate: f64, cells: usize) -> Vec<f64> {
    assert!(rate >= 0.0, "harvest rate must be non-negative");
    let mut pmf = Vec::with_capacity(cells + 1);
    if rate == 0.0 {
        pmf.push(1.0);
        pmf.resize(cells + 1, 0.0);
        return pmf;
    }
    let ln_rate = rate.ln();
    let mut head = 0.0;
    let mut comp = 0.0;
    for r in 0..cells {
        let p = (-rate + r as f64 * ln_rate - libm::lgamma(r as f64 + 1.0)).exp();
        pmf.push(p);
        // Kahan summation keeps the absorbed tail accurate.
        let y = p - comp;
        let t = head + y;
        comp = (t - head) - y;
        head = t;
    }
    pmf.push((1.0 - head).max(0.0));
    pmf
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_config_is_valid() {
        let m = validate(SystemConfig::reference(), vec![SuProfile::new(2.0, 15.0)]).unwrap();
        assert_relative_eq!(m.derived.data_duration, 8.9e-3, epsilon = 1e-15);
        assert_relative_eq!(m.derived.unit_power, 0.01 / 8.9e-3, max_relative = 1e-14);
        assert_relative_eq!(m.derived.unit_power, 1.1236, epsilon = 1e-4);
        assert_eq!(m.derived.sensing_samples, 100);
        assert_eq!(m.derived.training_samples, 10);
        assert_eq!(m.derived.data_samples, 890);
        assert_relative_eq!(m.derived.training_power, 100.0, max_relative = 1e-12);
        assert_relative_eq!(m.derived.training_energy_product, 1000.0, max_relative = 1e-12);
        assert_relative_eq!(m.derived.data_fraction, 0.89, epsilon = 1e-12);
        assert_relative_eq!(m.derived.training_fraction, 0.01, epsilon = 1e-12);
        assert!(m.warnings.is_empty(), "{:?}", m.warnings);
    }

    #[test]
    fn sensing_filling_the_slot_is_rejected() {
        let mut c = SystemConfig::reference();
        c.sensing_duration = 10e-3;
        let err = validate(c, vec![SuProfile::new(2.0, 15.0)]).unwrap_err();
        assert!(err.to_string().contains("τd ≤ 0"), "{err}");
    }

    #[test]
    fn every_violation_is_reported() {
        let mut c = SystemConfig::reference();
        c.prior_idle = 1.0;
        c.target_detection = 0.0;
        c.probe_cells = 80;
        c.energy_unit = -1.0;
        let mut p = SuProfile::new(2.0, 15.0);
        p.harvest_rate = 0.0;
        let err = validate(c, vec![p]).unwrap_err();
        let fields: Vec<_> = err.issues.iter().map(|i| i.field).collect();
        for f in ["prior_idle", "target_detection", "probe_cells", "energy_unit", "harvest_rate"] {
            assert!(fields.contains(&f), "missing {f} in {fields:?}");
        }
        assert_eq!(err.issues.iter().find(|i| i.field == "harvest_rate").unwrap().su, Some(0));
    }

    #[test]
    fn non_integral_samples_warn() {
        let mut c = SystemConfig::reference();
        c.sampling_frequency = 12_345.0;
        let m = validate(c, vec![SuProfile::new(2.0, 15.0)]).unwrap();
        assert!(!m.warnings.is_empty());
        assert_eq!(m.derived.sensing_samples, 12);
    }

    #[test]
    fn derived_constants_are_reproducible() {
        let a = validate(SystemConfig::reference(), vec![SuProfile::new(2.0, 15.0)]).unwrap();
        let b = validate(SystemConfig::reference(), vec![SuProfile::new(2.0, 15.0)]).unwrap();
        assert_eq!(a.derived.unit_power.to_bits(), b.derived.unit_power.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn poisson_value_at_the_mean() {
        let pmf = harvest_pmf(15.0, 80);
        // extended-precision reference
        assert_relative_eq!(pmf[15], 0.10243586666453418866, max_relative = 1e-12);
    }

    #[test]
    fn vanishing_rate_puts_all_mass_at_zero() {
        let pmf = harvest_pmf(1e-12, 10);
        assert!((pmf[0] - 1.0).abs() < 1e-11);
        assert!(pmf[1..].iter().all(|&p| p < 1e-11));
        assert_eq!(harvest_pmf(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn tail_is_absorbed_by_last_cell() {
        let pmf = harvest_pmf(5.0, 3);
        let head: f64 = pmf[..3].iter().sum();
        assert_relative_eq!(pmf[3], 1.0 - head, epsilon = 1e-15);
        assert!(pmf[3] > 0.7);
    }

    #[test]
    fn policy_params_are_checked() {
        assert!(PolicyParams::new(1.2, 0.1).is_err());
        assert!(PolicyParams::new(0.5, -0.1).is_err());
        assert!(PolicyParams::new(0.5, f64::NAN).is_err());
        assert!(PolicyParams::new(0.0, 0.0).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn harvest_pmf_sums_to_one(rate in 1e-6f64..100.0, cells in 1usize..500) {
            let pmf = harvest_pmf(rate, cells);
            proptest::prop_assert_eq!(pmf.len(), cells + 1);
            proptest::prop_assert!(pmf.iter().all(|&p| p >= 0.0));
            let s: f64 = pmf.iter().sum();
            proptest::prop_assert!((s - 1.0).abs() < 1e-12, "sum {}", s);
        }
    }
}
