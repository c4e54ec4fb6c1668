//! Slot-level Monte Carlo simulation of the network.
//!
//! Each SU runs on its own ChaCha8 stream (`seed`, stream = SU index), so
//! adding or removing SUs leaves the other sample paths untouched. Per slot:
//!
//! 1. the band is busy with probability `1 - prior_idle`;
//! 2. the detector says busy with probability `p_d` (busy) or `p_fa` (idle);
//! 3. on an idle decision the SU probes, draws the fed-back gain from the
//!    exponential law of the true hypothesis, and spends the policy's level;
//! 4. it harvests `min(Poisson(rho), K)` cells and the battery is clamped to
//!    `[0, K]`.
//!
//! The rate sample of a transmitting slot is `Dd W log2(1 + g S)` with the
//! SINR scale of the true hypothesis; the interference sample of a slot that
//! is busy but sensed idle is `delta_z (alpha pu + Dt Pt)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{SuAnalysis, SuStatics};
use crate::model::{Model, PolicyParams};
use crate::policy::alpha;
use crate::probing::Hypothesis;
use crate::rate::sinr_scale;
use crate::{Error, Result};

/// What happens when the band is sensed idle but the battery holds fewer
/// than `probe_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShortfallMode {
    /// Probe anyway and drain the battery to zero, as the clamped battery
    /// recursion (and hence the analytic chain) assumes.
    Drain,
    /// Neither probe nor transmit in that slot.
    Skip,
}

/// Which gain law drives the spent level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpendModel {
    /// The gain is drawn from the law of the true hypothesis.
    TrueHypothesis,
    /// The gain is always drawn from the idle-hypothesis law, which is what
    /// the transmit branch of the analytic chain assumes.
    IdleHypothesis,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOptions {
    pub slots: u64,
    pub seed: u64,
    pub shortfall: ShortfallMode,
    pub spend: SpendModel,
    /// Keep one [`SlotRecord`] per slot.
    pub record: bool,
}

impl SimOptions {
    pub fn new(slots: u64, seed: u64) -> Self {
        Self { slots, seed, shortfall: ShortfallMode::Drain, spend: SpendModel::TrueHypothesis, record: false }
    }
}

/// One simulated slot of one SU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub busy: bool,
    pub sensed_busy: bool,
    pub battery_before: usize,
    pub battery_after: usize,
    pub probed: bool,
    /// Fed-back gain, absent when the SU did not probe.
    pub gain: Option<f64>,
    /// Cells spent on data.
    pub spent: usize,
    pub harvested: usize,
    /// Rate sample (bits/s).
    pub rate: f64,
    /// Interference sample at the PU receiver (W).
    pub interference: f64,
}

/// Sample path aggregates of one SU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuTrace {
    pub su: usize,
    pub params: PolicyParams,
    pub cells: usize,
    pub probe_cells: usize,
    pub slots: u64,
    /// Slots starting in each battery state.
    pub occupancy: Vec<u64>,
    /// `transitions[j * (K + 1) + i]`: slots moving from `j` to `i`.
    pub transitions: Vec<u64>,
    pub rate_sum: f64,
    pub interference_sum: f64,
    pub sensed_idle: u64,
    /// Sensed-idle slots with no data transmission.
    pub sensed_idle_silent: u64,
    /// Sensed-idle slots that started with fewer than `probe_cells` cells.
    pub shortfall_events: u64,
    /// Slots whose update was clamped at zero.
    pub clamped_low: u64,
    /// Slots whose update was clamped at `K`.
    pub clamped_high: u64,
    #[serde(skip)]
    pub records: Vec<SlotRecord>,
}

impl SuTrace {
    /// A trace with no slots.
    pub fn empty(su: usize, params: PolicyParams, cells: usize, probe_cells: usize) -> Self {
        let n = cells + 1;
        Self {
            su,
            params,
            cells,
            probe_cells,
            slots: 0,
            occupancy: vec![0; n],
            transitions: vec![0; n * n],
            rate_sum: 0.0,
            interference_sum: 0.0,
            sensed_idle: 0,
            sensed_idle_silent: 0,
            shortfall_events: 0,
            clamped_low: 0,
            clamped_high: 0,
            records: Vec::new(),
        }
    }

    pub fn empirical_zeta(&self) -> Vec<f64> {
        let n = self.slots.max(1) as f64;
        self.occupancy.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn avg_energy(&self) -> f64 {
        self.empirical_zeta().iter().enumerate().map(|(k, z)| k as f64 * z).sum()
    }

    pub fn battery_outage(&self) -> f64 {
        self.empirical_zeta().iter().take(self.probe_cells + 1).sum()
    }

    pub fn transmission_outage(&self) -> f64 {
        self.sensed_idle_silent as f64 / self.sensed_idle.max(1) as f64
    }

    pub fn mean_rate(&self) -> f64 {
        self.rate_sum / self.slots.max(1) as f64
    }

    pub fn mean_interference(&self) -> f64 {
        self.interference_sum / self.slots.max(1) as f64
    }

    /// Visits of state `j` and the empirical distribution of the next state.
    pub fn transition_frequencies(&self, j: usize) -> (u64, Vec<f64>) {
        let n = self.cells + 1;
        let col = &self.transitions[j * n..(j + 1) * n];
        let visits: u64 = col.iter().sum();
        (visits, col.iter().map(|&c| c as f64 / visits.max(1) as f64).collect())
    }
}

/// Traces of every SU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub seed: u64,
    pub slots: u64,
    pub per_su: Vec<SuTrace>,
}

/// Simulates SU `su` under `params`.
pub fn simulate_su(model: &Model, su: usize, params: PolicyParams, opts: &SimOptions) -> Result<SuTrace> {
    if opts.slots == 0 {
        return Err(Error::Domain("simulation needs at least one slot".into()));
    }
    let c = &model.config;
    let d = &model.derived;
    let profile = model.profile(su);
    let statics = SuStatics::new(model, su);
    let sensing = statics.sensing;
    let est = statics.estimation;
    let cells = c.battery_cells;
    let probe = c.probe_cells;
    let n = cells + 1;
    let harvest = if profile.harvest_rate > 0.0 {
        Some(Poisson::new(profile.harvest_rate).map_err(|e| Error::Domain(e.to_string()))?)
    } else {
        None
    };
    let scale = d.data_fraction * c.bandwidth;
    let training_interference = d.training_fraction * d.training_power;
    let sinr: [Vec<f64>; 2] = Hypothesis::BOTH.map(|h| (0..=cells).map(|i| sinr_scale(model, profile, &est, h, i)).collect());

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(su as u64);
    let mut t = SuTrace::empty(su, params, cells, probe);
    t.slots = opts.slots;
    if opts.record {
        t.records.reserve(opts.slots as usize);
    }
    let mut battery = 0usize;

    for slot in 0..opts.slots {
        let before = battery;
        let busy = rng.random::<f64>() >= c.prior_idle;
        let u: f64 = rng.random();
        let sensed_busy = if busy { u < sensing.p_d } else { u < sensing.p_fa };
        let h = if busy { Hypothesis::Busy } else { Hypothesis::Idle };

        let mut probed = false;
        let mut gain = None;
        let mut spent = 0usize;
        let mut rate = 0.0;
        let mut interference = 0.0;
        let mut outflow = 0i64;
        if !sensed_busy {
            t.sensed_idle += 1;
            let short = before < probe;
            if short {
                t.shortfall_events += 1;
            }
            if !short || opts.shortfall == ShortfallMode::Drain {
                probed = true;
                let law = match opts.spend {
                    SpendModel::TrueHypothesis => h,
                    SpendModel::IdleHypothesis => Hypothesis::Idle,
                };
                let mean = est.var_hat_given(law);
                let v: f64 = rng.random();
                let g = -mean * (-v).ln_1p();
                gain = Some(g);
                spent = alpha(before, g, params, probe);
                outflow = (probe + spent) as i64;
                if spent > 0 {
                    rate = scale * (g * sinr[h.index()][spent]).ln_1p() / std::f64::consts::LN_2;
                }
                if busy {
                    interference =
                        profile.su_pu_var * (spent as f64 * d.unit_power + training_interference);
                }
            }
            if spent == 0 {
                t.sensed_idle_silent += 1;
            }
        }
        let harvested = harvest.as_ref().map_or(0, |p| (p.sample(&mut rng) as u64).min(cells as u64) as usize);
        let next = before as i64 - outflow + harvested as i64;
        let after = if next < 0 {
            t.clamped_low += 1;
            0
        } else if next > cells as i64 {
            t.clamped_high += 1;
            cells
        } else {
            next as usize
        };
        battery = after;

        t.occupancy[before] += 1;
        t.transitions[before * n + after] += 1;
        t.rate_sum += rate;
        t.interference_sum += interference;
        if opts.record {
            t.records.push(SlotRecord {
                slot,
                busy,
                sensed_busy,
                battery_before: before,
                battery_after: after,
                probed,
                gain,
                spent,
                harvested,
                rate,
                interference,
            });
        }
    }
    Ok(t)
}

/// Simulates every SU; `params[n]` is the policy of SU `n`.
pub fn simulate(model: &Model, params: &[PolicyParams], opts: &SimOptions) -> Result<SimTrace> {
    if params.len() != model.num_sus() {
        return Err(Error::Dimension(format!(
            "{} policies given for {} SUs",
            params.len(),
            model.num_sus()
        )));
    }
    let per_su = params
        .par_iter()
        .enumerate()
        .map(|(su, &p)| simulate_su(model, su, p, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimTrace { seed: opts.seed, slots: opts.slots, per_su })
}

/// Analytic values a trace is compared against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticSummary {
    pub zeta: Vec<f64>,
    pub rate_lb: f64,
    pub interference: f64,
    pub avg_energy: f64,
    pub battery_outage: f64,
    pub transmission_outage: f64,
}

impl From<&SuAnalysis> for AnalyticSummary {
    fn from(a: &SuAnalysis) -> Self {
        Self {
            zeta: a.chain.steady_state.clone(),
            rate_lb: a.rate.rate_lb,
            interference: a.interference,
            avg_energy: a.chain.avg_energy,
            battery_outage: a.chain.battery_outage,
            transmission_outage: a.transmission_outage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tolerance {
    TotalVariation,
    Relative,
    Absolute,
}

/// Default tolerances.
pub const TV_TOL: f64 = 0.01;
pub const REL_TOL: f64 = 0.01;
pub const ABS_TOL: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub quantity: &'static str,
    pub analytic: f64,
    pub empirical: f64,
    pub deviation: f64,
    pub kind: Tolerance,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(quantity: &'static str, analytic: f64, empirical: f64, kind: Tolerance, tolerance: f64) -> Self {
        let deviation = match kind {
            Tolerance::Relative if analytic != 0.0 => (empirical - analytic).abs() / analytic.abs(),
            _ => (empirical - analytic).abs(),
        };
        let pass = match kind {
            // a vanishing analytic value must be matched exactly
            Tolerance::Relative if analytic == 0.0 => empirical == 0.0,
            _ => deviation <= tolerance,
        };
        Self { quantity, analytic, empirical, deviation, kind, tolerance, pass }
    }
}

/// Outcome of [`compare`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub su: usize,
    pub slots: u64,
    pub insufficient_samples: bool,
    pub checks: Vec<Check>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        !self.insufficient_samples && self.checks.iter().all(|c| c.pass)
    }
}

/// Total-variation distance between two pmfs.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Compares a trace against analytic values with the default tolerances.
pub fn compare(trace: &SuTrace, analytic: &AnalyticSummary) -> CompareReport {
    let zeta = trace.empirical_zeta();
    let tv = total_variation(&zeta, &analytic.zeta);
    let mut zeta_check = Check::new("steady_state", 0.0, tv, Tolerance::TotalVariation, TV_TOL);
    zeta_check.deviation = tv;
    let checks = vec![
        zeta_check,
        Check::new("avg_energy", analytic.avg_energy, trace.avg_energy(), Tolerance::Relative, REL_TOL),
        Check::new("rate_lb", analytic.rate_lb, trace.mean_rate(), Tolerance::Relative, REL_TOL),
        Check::new("aic_lhs", analytic.interference, trace.mean_interference(), Tolerance::Relative, REL_TOL),
        Check::new("battery_outage", analytic.battery_outage, trace.battery_outage(), Tolerance::Absolute, ABS_TOL),
        Check::new(
            "transmission_outage",
            analytic.transmission_outage,
            trace.transmission_outage(),
            Tolerance::Absolute,
            ABS_TOL,
        ),
    ];
    CompareReport { su: trace.su, slots: trace.slots, insufficient_samples: trace.slots == 0, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze_su;
    use crate::model::{validate, SuProfile, SystemConfig};

    fn model() -> Model {
        validate(SystemConfig::reference(), vec![SuProfile::new(2.0, 15.0), SuProfile::new(2.2, 10.0)]).unwrap()
    }

    fn p() -> PolicyParams {
        PolicyParams::new(0.35, 0.2).unwrap()
    }

    #[test]
    fn same_seed_same_trace() {
        let m = model();
        let mut o = SimOptions::new(5_000, 7);
        o.record = true;
        let a = simulate(&m, &[p(), p()], &o).unwrap();
        let b = simulate(&m, &[p(), p()], &o).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_su[0].records, b.per_su[0].records);
        o.seed = 8;
        assert_ne!(a.per_su[0].occupancy, simulate(&m, &[p(), p()], &o).unwrap().per_su[0].occupancy);
    }

    #[test]
    fn streams_are_independent_of_other_sus() {
        let m = model();
        let one = m.with_profiles(vec![m.profiles[0].clone()]).unwrap();
        let o = SimOptions::new(3_000, 11);
        let a = simulate(&m, &[p(), p()], &o).unwrap();
        let b = simulate(&one, &[p()], &o).unwrap();
        assert_eq!(a.per_su[0], b.per_su[0]);
    }

    #[test]
    fn records_obey_battery_rules() {
        let m = model();
        let mut o = SimOptions::new(20_000, 3);
        o.record = true;
        let t = simulate_su(&m, 0, PolicyParams::new(0.9, 0.05).unwrap(), &o).unwrap();
        let k = m.config.battery_cells;
        let probe = m.config.probe_cells;
        let mut clamps = 0;
        for r in &t.records {
            assert!(r.battery_after <= k);
            if r.spent > 0 {
                assert!(r.spent + probe <= r.battery_before);
                assert!(!r.sensed_busy && r.probed);
            }
            if r.sensed_busy {
                assert!(!r.probed && r.rate == 0.0 && r.interference == 0.0);
            }
            if r.interference > 0.0 {
                assert!(r.busy);
            }
            let outflow = if r.probed { probe + r.spent } else { 0 } as i64;
            let raw = r.battery_before as i64 - outflow + r.harvested as i64;
            if raw != r.battery_after as i64 {
                clamps += 1;
            }
        }
        assert_eq!(clamps, t.clamped_low + t.clamped_high);
        let from_records: f64 = t.records.iter().map(|r| r.rate).sum();
        assert_eq!(from_records, t.rate_sum);
    }

    #[test]
    fn always_detected_busy_never_transmits() {
        let mut c = SystemConfig::reference();
        c.prior_idle = 1e-300;
        c.ideal_sensing = true;
        let m = validate(c, vec![SuProfile::new(2.0, 3.0)]).unwrap();
        let t = simulate_su(&m, 0, p(), &SimOptions::new(2_000, 1)).unwrap();
        assert_eq!(t.sensed_idle, 0);
        assert_eq!(t.rate_sum, 0.0);
        // the battery only fills up
        let (_, from_full) = t.transition_frequencies(80);
        assert_eq!(from_full[80], 1.0);
    }

    #[test]
    fn zero_slots() {
        let m = model();
        assert!(simulate_su(&m, 0, p(), &SimOptions::new(0, 1)).is_err());
        let a = analyze_su(&m, 0, p()).unwrap();
        let r = compare(&SuTrace::empty(0, p(), 80, 1), &(&a).into());
        assert!(r.insufficient_samples);
        assert!(!r.passed());
    }

    #[test]
    fn tv_distance() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(total_variation(&[1.0], &[0.5, 0.5]), 0.5);
    }
}
