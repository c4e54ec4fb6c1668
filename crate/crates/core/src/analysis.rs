//! End-to-end evaluation of one SU or the whole network for fixed policies.

use rayon::prelude::*;
use serde::Serialize;

use crate::battery::BatteryChain;
use crate::model::{harvest_pmf, Model, PolicyParams};
use crate::policy::{policy_pmf, PolicyPmf};
use crate::probing::{estimator_variances, EstimationStats, GainDistribution};
use crate::rate::{interference_contribution, rate_lower_bound, transmission_outage, RateBreakdown, SuRate};
use crate::sensing::{sensing_stats, SensingStats};
use crate::{Error, Result};

/// Policy-independent statistics of one SU.
#[derive(Debug, Clone, Serialize)]
pub struct SuStatics {
    pub sensing: SensingStats,
    pub estimation: EstimationStats,
    pub gain: GainDistribution,
    pub harvest: Vec<f64>,
}

impl SuStatics {
    pub fn new(model: &Model, su: usize) -> Self {
        let profile = model.profile(su);
        let sensing = sensing_stats(model, profile);
        let estimation = estimator_variances(model, profile, &sensing);
        Self {
            gain: GainDistribution::new(&sensing, &estimation),
            harvest: harvest_pmf(profile.harvest_rate, model.config.battery_cells),
            sensing,
            estimation,
        }
    }
}

/// Every analytic quantity of one SU under one policy.
#[derive(Debug, Clone, Serialize)]
pub struct SuAnalysis {
    pub su: usize,
    pub params: PolicyParams,
    pub sensing: SensingStats,
    pub estimation: EstimationStats,
    #[serde(skip)]
    pub pmf: PolicyPmf,
    pub chain: BatteryChain,
    pub rate: SuRate,
    pub interference: f64,
    pub transmission_outage: f64,
}

impl SuAnalysis {
    pub fn avg_energy(&self) -> f64 {
        self.chain.avg_energy
    }

    pub fn battery_outage(&self) -> f64 {
        self.chain.battery_outage
    }

    pub fn rate_lb(&self) -> f64 {
        self.rate.rate_lb
    }

    pub fn steady_state(&self) -> &[f64] {
        &self.chain.steady_state
    }
}

/// Analyses SU `su` reusing precomputed policy-independent statistics.
pub fn analyze_su_with(model: &Model, su: usize, statics: &SuStatics, params: PolicyParams) -> Result<SuAnalysis> {
    let c = &model.config;
    let profile = model.profile(su);
    let pmf = policy_pmf(params, c.probe_cells, c.battery_cells, &statics.gain);
    let chain = BatteryChain::new(&pmf, &statics.sensing, &statics.harvest).map_err(|e| match e {
        Error::NotErgodic { context, reason } => Error::NotErgodic {
            context: format!(
                "SU {su}, omega = {}, theta = {}, harvest rate = {}, {context}",
                params.omega, params.theta, profile.harvest_rate
            ),
            reason,
        },
        other => other,
    })?;
    let zeta = &chain.steady_state;
    let rate = rate_lower_bound(model, profile, zeta, &pmf, &statics.estimation, &statics.sensing);
    let interference = interference_contribution(model, profile, zeta, &pmf, &statics.sensing);
    let transmission_outage = transmission_outage(zeta, &pmf, &statics.sensing);
    Ok(SuAnalysis {
        su,
        params,
        sensing: statics.sensing,
        estimation: statics.estimation,
        pmf,
        chain,
        rate,
        interference,
        transmission_outage,
    })
}

/// Analyses SU `su` under `params`.
pub fn analyze_su(model: &Model, su: usize, params: PolicyParams) -> Result<SuAnalysis> {
    analyze_su_with(model, su, &SuStatics::new(model, su), params)
}

/// Per-SU analyses plus the network rate and interference summary.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkAnalysis {
    pub sus: Vec<SuAnalysis>,
    pub breakdown: RateBreakdown,
}

impl NetworkAnalysis {
    pub fn sum_rate(&self) -> f64 {
        self.breakdown.sum_rate
    }

    pub fn aic_lhs(&self) -> f64 {
        self.breakdown.aic_lhs
    }
}

/// Analyses every SU of `model`; `params[n]` is the policy of SU `n`.
pub fn analyze_network(model: &Model, params: &[PolicyParams]) -> Result<NetworkAnalysis> {
    if params.len() != model.num_sus() {
        return Err(Error::Dimension(format!(
            "{} policies given for {} SUs",
            params.len(),
            model.num_sus()
        )));
    }
    let sus = params
        .par_iter()
        .enumerate()
        .map(|(n, &p)| analyze_su(model, n, p))
        .collect::<Result<Vec<_>>>()?;
    let breakdown = RateBreakdown::new(
        sus.iter().map(|a| a.rate).collect(),
        sus.iter().map(|a| a.interference).collect(),
        model.config.interference_cap,
    );
    Ok(NetworkAnalysis { sus, breakdown })
}
