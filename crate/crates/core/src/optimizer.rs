//! Constrained maximisation of the sum-rate bound over `(omega_n, theta_n)`.
//!
//! The objective is a sum of per-SU terms while the interference constraint
//! couples the SUs through the sum of their contributions. The search
//!
//! 1. evaluates a coarse `omega x log(theta)` grid for every SU,
//! 2. picks the best combination of coarse points under the cap by merging
//!    the per-SU (interference, rate) Pareto frontiers exactly,
//! 3. refines: at each level every SU in turn searches a local grid around
//!    its incumbent with the cap left over by the others, until a sweep
//!    gains less than `rel_tol` or `max_sweeps` is reached; the next level
//!    shrinks the local grid by four.
//!
//! Every per-SU evaluation is cached, so the result is deterministic and the
//! returned objective dominates every evaluated feasible combination seen by
//! the allocation step.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze_su_with, SuStatics};
use crate::model::{Model, PolicyParams};
use crate::rate::compensated_sum;
use crate::Result;

/// Search settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Coarse grid points on `omega` in `[0, omega_max]`.
    pub grid_omega: usize,
    /// Upper end of the `omega` search range, at most 1.
    pub omega_max: f64,
    /// Coarse grid points on `theta`, log-spaced in `[theta_min, theta_max]`.
    pub grid_theta: usize,
    pub theta_min: f64,
    /// Upper `theta` bound; when `None` it is ten times the largest mean
    /// estimated gain over all SUs and hypotheses.
    pub theta_max: Option<f64>,
    pub refine_levels: usize,
    /// Points per axis of each local grid (odd).
    pub local_points: usize,
    pub max_sweeps: usize,
    pub rel_tol: f64,
    /// Extra complete allocations tried as incumbents, e.g. the optimum of a
    /// neighbouring problem.
    #[serde(skip)]
    pub warm_starts: Vec<Vec<PolicyParams>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_omega: 21,
            omega_max: 1.0,
            grid_theta: 25,
            theta_min: 1e-3,
            theta_max: None,
            refine_levels: 3,
            local_points: 9,
            max_sweeps: 50,
            rel_tol: 1e-6,
            warm_starts: Vec::new(),
        }
    }
}

impl SearchConfig {
    /// Resolved `theta` range for `model`.
    pub fn theta_range(&self, model: &Model) -> (f64, f64) {
        let hi = self.theta_max.unwrap_or_else(|| {
            let top = (0..model.num_sus())
                .map(|n| {
                    let s = SuStatics::new(model, n);
                    s.estimation.var_hat_h0.max(s.estimation.var_hat_h1)
                })
                .fold(0.0, f64::max);
            10.0 * top
        });
        (self.theta_min, hi.max(self.theta_min))
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        linspace(0.0, self.omega_max.clamp(0.0, 1.0), self.grid_omega)
    }

    pub fn theta_grid(&self, model: &Model) -> Vec<f64> {
        let (lo, hi) = self.theta_range(model);
        logspace(lo, hi, self.grid_theta)
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` log-spaced points on `[lo, hi]`, `lo > 0`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

/// Rate and interference of one SU at one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub params: PolicyParams,
    pub rate: f64,
    pub interference: f64,
}

/// Search statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchDiagnostics {
    /// Distinct per-SU policy evaluations.
    pub evaluations: usize,
    /// Evaluations rejected because the chain was not ergodic.
    pub rejected: usize,
    pub grid_omega: usize,
    pub grid_theta: usize,
    pub refine_levels: usize,
    pub sweeps: usize,
    /// Final local grid spacing on `omega` and on `ln theta`.
    pub cell: (f64, f64),
}

/// Outcome of [`solve_p1`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub params: Vec<PolicyParams>,
    pub per_su_rate: Vec<f64>,
    pub per_su_interference: Vec<f64>,
    pub sum_rate: f64,
    pub aic_lhs: f64,
    pub interference_cap: f64,
    /// False when no evaluated combination met the cap; `params` is then the
    /// least-interfering combination found.
    pub feasible: bool,
    pub diagnostics: SearchDiagnostics,
}

fn key(p: PolicyParams) -> (u64, u64) {
    (p.omega.to_bits(), p.theta.to_bits())
}

/// Memoised per-SU evaluator.
struct Evaluator<'a> {
    model: &'a Model,
    statics: Vec<SuStatics>,
    cache: Vec<HashMap<(u64, u64), Option<Evaluation>>>,
    rejected: usize,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a Model) -> Self {
        let statics = (0..model.num_sus()).map(|n| SuStatics::new(model, n)).collect();
        Self { model, statics, cache: vec![HashMap::new(); model.num_sus()], rejected: 0 }
    }

    fn evaluations(&self) -> usize {
        self.cache.iter().map(HashMap::len).sum()
    }

    /// Evaluates `points` for SU `su`, in order; non-ergodic points are
    /// `None`.
    fn eval(&mut self, su: usize, points: &[PolicyParams]) -> Result<Vec<Option<Evaluation>>> {
        let missing: Vec<PolicyParams> = {
            let cache = &self.cache[su];
            let mut seen = std::collections::HashSet::new();
            points.iter().copied().filter(|p| !cache.contains_key(&key(*p)) && seen.insert(key(*p))).collect()
        };
        let model = self.model;
        let statics = &self.statics[su];
        let fresh: Vec<Result<Option<Evaluation>>> = missing
            .par_iter()
            .map(|&p| match analyze_su_with(model, su, statics, p) {
                Ok(a) => Ok(Some(Evaluation { params: p, rate: a.rate.rate_lb, interference: a.interference })),
                Err(crate::Error::NotErgodic { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect();
        for (p, r) in missing.into_iter().zip(fresh) {
            let r = r?;
            if r.is_none() {
                self.rejected += 1;
            }
            self.cache[su].insert(key(p), r);
        }
        Ok(points.iter().map(|p| self.cache[su][&key(*p)]).collect())
    }
}

fn grid_points(omegas: &[f64], thetas: &[f64]) -> Result<Vec<PolicyParams>> {
    let mut out = Vec::with_capacity(omegas.len() * thetas.len());
    for &o in omegas {
        for &t in thetas {
            out.push(PolicyParams::new(o, t)?);
        }
    }
    Ok(out)
}

/// First maximiser of `rate` among feasible points, in input order.
fn best_within(evals: &[Option<Evaluation>], budget: f64) -> Option<Evaluation> {
    let mut best: Option<Evaluation> = None;
    for e in evals.iter().flatten() {
        if e.interference <= budget && best.is_none_or(|b| e.rate > b.rate) {
            best = Some(*e);
        }
    }
    best
}

/// Frontier point: total interference, total rate and one chosen
/// evaluation per SU merged so far.
#[derive(Clone)]
struct Combo {
    interference: f64,
    rate: f64,
    picks: Vec<Evaluation>,
}

fn pareto(mut combos: Vec<Combo>) -> Vec<Combo> {
    combos.sort_by(|a, b| a.interference.total_cmp(&b.interference).then(b.rate.total_cmp(&a.rate)));
    let mut out: Vec<Combo> = Vec::new();
    for c in combos {
        if out.last().is_none_or(|l| c.rate > l.rate) {
            out.push(c);
        }
    }
    out
}

/// Best combination of one point per SU under `cap`, or `None` when no
/// combination fits.
fn allocate(candidates: &[Vec<Evaluation>], cap: f64) -> Option<Vec<Evaluation>> {
    let mut frontier = vec![Combo { interference: 0.0, rate: 0.0, picks: Vec::new() }];
    for cands in candidates {
        let own = pareto(
            cands
                .iter()
                .map(|e| Combo { interference: e.interference, rate: e.rate, picks: vec![*e] })
                .collect(),
        );
        let mut merged = Vec::with_capacity(frontier.len() * own.len());
        for f in &frontier {
            for o in &own {
                let interference = f.interference + o.interference;
                if interference > cap {
                    continue;
                }
                let mut picks = f.picks.clone();
                picks.push(o.picks[0]);
                merged.push(Combo { interference, rate: f.rate + o.rate, picks });
            }
        }
        frontier = pareto(merged);
        if frontier.is_empty() {
            return None;
        }
    }
    frontier.pop().map(|c| c.picks)
}

fn total(picks: &[Evaluation]) -> (f64, f64) {
    (
        compensated_sum(picks.iter().map(|e| e.rate)),
        compensated_sum(picks.iter().map(|e| e.interference)),
    )
}

/// Local grid of `points` values centred on `center`, spanning
/// `+-half_width`, clipped to `[lo, hi]`. The centre itself is reproduced
/// exactly.
fn local_axis(center: f64, half_width: f64, points: usize, lo: f64, hi: f64) -> Vec<f64> {
    let half = (points.max(3) - 1) as f64 / 2.0;
    let step = half_width / half;
    let mut v: Vec<f64> = (0..points.max(3))
        .map(|i| (center + (i as f64 - half) * step).clamp(lo, hi))
        .collect();
    v.dedup();
    v
}

/// Maximises the sum-rate bound subject to the interference cap of
/// `model.config`.
pub fn solve_p1(model: &Model, search: &SearchConfig) -> Result<OptimizationResult> {
    let n_su = model.num_sus();
    let cap = model.config.interference_cap;
    let omegas = search.omega_grid();
    let thetas = search.theta_grid(model);
    let (t_lo, t_hi) = search.theta_range(model);
    let coarse = grid_points(&omegas, &thetas)?;
    let mut ev = Evaluator::new(model);

    let mut coarse_evals = Vec::with_capacity(n_su);
    for su in 0..n_su {
        coarse_evals.push(ev.eval(su, &coarse)?);
    }

    // Unconstrained per-SU maxima in grid order; used directly when they
    // already satisfy the cap so ties resolve exactly as on the surface.
    let unconstrained: Option<Vec<Evaluation>> =
        coarse_evals.iter().map(|e| best_within(e, f64::INFINITY)).collect();
    let mut incumbent = match unconstrained {
        Some(u) if total(&u).1 <= cap => Some(u),
        _ => {
            let candidates: Vec<Vec<Evaluation>> =
                coarse_evals.iter().map(|e| e.iter().flatten().copied().collect()).collect();
            allocate(&candidates, cap)
        }
    };

    for start in &search.warm_starts {
        if start.len() != n_su {
            continue;
        }
        let mut picks = Vec::with_capacity(n_su);
        for (su, &p) in start.iter().enumerate() {
            if let Some(e) = ev.eval(su, &[p])?[0] {
                picks.push(e);
            }
        }
        if picks.len() != n_su {
            continue;
        }
        let (rate, aic) = total(&picks);
        if aic <= cap && incumbent.as_ref().is_none_or(|inc| rate > total(inc).0) {
            incumbent = Some(picks);
        }
    }

    let omega_hi = search.omega_max.clamp(0.0, 1.0);
    let omega_step = if omegas.len() > 1 { omega_hi / (omegas.len() - 1) as f64 } else { 1.0 };
    let log_step = if thetas.len() > 1 { (t_hi / t_lo).ln() / (thetas.len() - 1) as f64 } else { 1.0 };
    let half = (search.local_points.max(3) - 1) as f64 / 2.0;
    let mut cell = (omega_step, log_step);
    let mut sweeps = 0;

    let Some(mut picks) = incumbent else {
        // No feasible coarse combination: report the least-interfering one.
        let picks: Vec<Evaluation> = coarse_evals
            .iter()
            .map(|e| {
                e.iter()
                    .flatten()
                    .copied()
                    .reduce(|a, b| if b.interference < a.interference { b } else { a })
                    .expect("coarse grid holds at least one ergodic point")
            })
            .collect();
        return Ok(finish(picks, cap, false, &ev, search, sweeps, cell));
    };

    for _level in 0..search.refine_levels {
        // the local grid spans the previous spacing on each side
        let (span_o, span_t) = cell;
        cell = (span_o / half, span_t / half);
        for _ in 0..search.max_sweeps {
            sweeps += 1;
            let before = total(&picks).0;
            for su in 0..n_su {
                let others = compensated_sum(
                    picks.iter().enumerate().filter(|(m, _)| *m != su).map(|(_, e)| e.interference),
                );
                let budget = cap - others;
                let cur = picks[su];
                let o_axis = local_axis(cur.params.omega, span_o, search.local_points, 0.0, omega_hi);
                let t_axis: Vec<f64> =
                    local_axis(cur.params.theta.ln(), span_t, search.local_points, t_lo.ln(), t_hi.ln())
                        .into_iter()
                        .map(f64::exp)
                        .collect();
                let pts = grid_points(&o_axis, &t_axis)?;
                let evals = ev.eval(su, &pts)?;
                if let Some(b) = best_within(&evals, budget) {
                    if b.rate > cur.rate {
                        picks[su] = b;
                    }
                }
            }
            let after = total(&picks).0;
            if after - before <= search.rel_tol * after.abs() {
                break;
            }
        }
    }
    Ok(finish(picks, cap, true, &ev, search, sweeps, cell))
}

fn finish(
    picks: Vec<Evaluation>,
    cap: f64,
    feasible: bool,
    ev: &Evaluator,
    search: &SearchConfig,
    sweeps: usize,
    cell: (f64, f64),
) -> OptimizationResult {
    let (sum_rate, aic_lhs) = total(&picks);
    OptimizationResult {
        params: picks.iter().map(|e| e.params).collect(),
        per_su_rate: picks.iter().map(|e| e.rate).collect(),
        per_su_interference: picks.iter().map(|e| e.interference).collect(),
        sum_rate,
        aic_lhs,
        interference_cap: cap,
        feasible,
        diagnostics: SearchDiagnostics {
            evaluations: ev.evaluations(),
            rejected: ev.rejected,
            grid_omega: search.grid_omega,
            grid_theta: search.grid_theta,
            refine_levels: search.refine_levels,
            sweeps,
            cell,
        },
    }
}

/// Solves the problem for each interference cap in `caps`.
///
/// Caps are visited in increasing order and each feasible optimum is offered
/// as a warm start to the next, larger cap, whose feasible set contains it;
/// the optimum is therefore non-decreasing in the cap. Results are returned
/// in the order of `caps`.
pub fn solve_over_caps(model: &Model, caps: &[f64], search: &SearchConfig) -> Result<Vec<OptimizationResult>> {
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| caps[a].total_cmp(&caps[b]));
    let mut out: Vec<Option<OptimizationResult>> = vec![None; caps.len()];
    let mut warm: Vec<Vec<PolicyParams>> = Vec::new();
    for i in order {
        let mut config = model.config.clone();
        config.interference_cap = caps[i];
        let m = model.with_config(config)?;
        let mut s = search.clone();
        s.warm_starts.extend(warm.iter().cloned());
        let r = solve_p1(&m, &s)?;
        if r.feasible {
            warm = vec![r.params.clone()];
        }
        out[i] = Some(r);
    }
    Ok(out.into_iter().map(|r| r.expect("every cap solved")).collect())
}

/// Solves the problem for each battery size in `cells`.
///
/// Sizes are visited in increasing order. The policy spends according to
/// `k * omega`, so the previous optimum is offered to the next size both as
/// is and with `omega` rescaled to keep `K * omega` fixed. For the same
/// reason sizes above `model`'s own search `omega` on `[0, K0 / K]` only,
/// `K0` being the configured size, so the coarse grid keeps its resolution
/// in `K * omega`. Results are returned in the order of `cells`.
pub fn solve_over_capacities(model: &Model, cells: &[usize], search: &SearchConfig) -> Result<Vec<OptimizationResult>> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| cells[i]);
    let mut out: Vec<Option<OptimizationResult>> = vec![None; cells.len()];
    let mut prev: Option<(usize, Vec<PolicyParams>)> = None;
    for i in order {
        let mut config = model.config.clone();
        config.battery_cells = cells[i];
        let m = model.with_config(config)?;
        let mut s = search.clone();
        s.omega_max = search.omega_max.min(model.config.battery_cells as f64 / cells[i] as f64);
        if let Some((k_prev, params)) = &prev {
            let ratio = *k_prev as f64 / cells[i] as f64;
            let scaled = params
                .iter()
                .map(|p| PolicyParams { omega: (p.omega * ratio).clamp(0.0, 1.0), ..*p })
                .collect();
            s.warm_starts.push(params.clone());
            s.warm_starts.push(scaled);
        }
        let r = solve_p1(&m, &s)?;
        if r.feasible {
            prev = Some((cells[i], r.params.clone()));
        }
        out[i] = Some(r);
    }
    Ok(out.into_iter().map(|r| r.expect("every size solved")).collect())
}

/// Rate bound and interference of one SU on an `omegas x thetas` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Surface {
    pub omegas: Vec<f64>,
    pub thetas: Vec<f64>,
    /// Row-major over `omegas`, NaN where the chain is not ergodic.
    pub rate: Vec<f64>,
    pub interference: Vec<f64>,
}

impl Surface {
    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let idx = i * self.thetas.len() + j;
        (self.rate[idx], self.interference[idx])
    }

    /// Grid indices of the largest rate, first in row-major order on ties,
    /// among points with interference at most `cap`.
    pub fn argmax(&self, cap: f64) -> Option<(usize, usize)> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, (&r, &a)) in self.rate.iter().zip(&self.interference).enumerate() {
            if r.is_nan() || a > cap {
                continue;
            }
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((idx, r));
            }
        }
        best.map(|(idx, _)| (idx / self.thetas.len(), idx % self.thetas.len()))
    }

    pub fn max_rate(&self, cap: f64) -> Option<f64> {
        self.argmax(cap).map(|(i, j)| self.at(i, j).0)
    }
}

/// Dense evaluation of SU `su` on a grid.
pub fn objective_surface(model: &Model, su: usize, omegas: &[f64], thetas: &[f64]) -> Result<Surface> {
    let pts = grid_points(omegas, thetas)?;
    let statics = SuStatics::new(model, su);
    let vals = pts
        .par_iter()
        .map(|&p| match analyze_su_with(model, su, &statics, p) {
            Ok(a) => Ok((a.rate.rate_lb, a.interference)),
            Err(crate::Error::NotErgodic { .. }) => Ok((f64::NAN, f64::NAN)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Surface {
        omegas: omegas.to_vec(),
        thetas: thetas.to_vec(),
        rate: vals.iter().map(|v| v.0).collect(),
        interference: vals.iter().map(|v| v.1).collect(),
    })
}
