//! Battery- and gain-adaptive power policy.
//!
//! With `k` charged cells and fed-back gain `g`, an SU spends
//!
//! ```text
//! alpha(k, g) = max(floor(omega * k * (1 - theta / g)^+) - probe_cells, 0)
//! ```
//!
//! cells on data. For fixed `k` this is a staircase in `g`: level `i >= 1` is
//! used exactly on `[a_i, c_i)` with
//!
//! ```text
//! a_i = theta k omega / (k omega - probe_cells - i)
//! c_i = theta k omega / (k omega - probe_cells - i - 1)   (+inf if denominator <= 0)
//! ```

use serde::Serialize;

use crate::model::PolicyParams;
use crate::probing::{GainDistribution, Hypothesis};

/// Tolerance under which a product `k * omega` is treated as an integer.
const INTEGRAL_SNAP: f64 = 1e-9;
/// Breakpoint denominators at or below this are treated as zero.
const DENOM_EPS: f64 = 1e-12;

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < INTEGRAL_SNAP {
        r
    } else {
        x
    }
}

/// Highest data level reachable in state `k`: `floor(k omega) - probe_cells`,
/// or 0 when negative.
pub fn max_level(k: usize, omega: f64, probe_cells: usize) -> usize {
    let top = snap(k as f64 * omega).floor() as i64 - probe_cells as i64;
    top.max(0) as usize
}

/// Cells spent on data in battery state `k` with fed-back gain `gain`.
pub fn alpha(k: usize, gain: f64, params: PolicyParams, probe_cells: usize) -> usize {
    if !(gain > params.theta) {
        return 0;
    }
    let scaled = snap(k as f64 * params.omega) * (1.0 - params.theta / gain);
    let level = scaled.floor() as i64 - probe_cells as i64;
    level.max(0) as usize
}

/// Gain interval `[lower, upper)` on which the policy spends `level` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakpoint {
    pub level: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Staircase of state `k`; empty when no data level is reachable.
pub fn breakpoints(k: usize, params: PolicyParams, probe_cells: usize) -> Vec<Breakpoint> {
    let top = max_level(k, params.omega, probe_cells);
    if top == 0 {
        return Vec::new();
    }
    let kw = snap(k as f64 * params.omega);
    let scale = params.theta * kw;
    let edge = |d: f64| if d <= DENOM_EPS { f64::INFINITY } else { scale / d };
    (1..=top)
        .map(|level| {
            let d = |offset: usize| kw - (probe_cells + offset) as f64;
            Breakpoint { level, lower: edge(d(level)), upper: edge(d(level + 1)) }
        })
        .collect()
}

/// Conditional pmf of the data level given the battery state, for each true
/// hypothesis, together with the breakpoints it was built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyPmf {
    pub cells: usize,
    pub probe_cells: usize,
    pub params: PolicyParams,
    /// `psi[h][k * (cells + 1) + i]`.
    psi: [Vec<f64>; 2],
    breakpoints: Vec<Vec<Breakpoint>>,
}

impl PolicyPmf {
    /// `P(alpha_k = i | h)`.
    pub fn psi(&self, h: Hypothesis, k: usize, i: usize) -> f64 {
        self.psi[h.index()][k * (self.cells + 1) + i]
    }

    /// The whole distribution over levels in state `k`.
    pub fn row(&self, h: Hypothesis, k: usize) -> &[f64] {
        let n = self.cells + 1;
        &self.psi[h.index()][k * n..(k + 1) * n]
    }

    /// Probability of spending nothing on data in state `k`.
    pub fn no_transmit(&self, h: Hypothesis, k: usize) -> f64 {
        self.psi(h, k, 0)
    }

    pub fn breakpoints(&self, k: usize) -> &[Breakpoint] {
        &self.breakpoints[k]
    }

    pub fn max_level(&self, k: usize) -> usize {
        self.breakpoints[k].len()
    }
}

/// Builds [`PolicyPmf`] from the per-hypothesis gain laws.
///
/// Level probabilities are `F(c_i) - F(a_i)`; the no-transmit probability is
/// the complement of their sum, which equals `F(a_1)`.
pub fn policy_pmf(params: PolicyParams, probe_cells: usize, cells: usize, dist: &GainDistribution) -> PolicyPmf {
    let n = cells + 1;
    let mut psi = [vec![0.0; n * n], vec![0.0; n * n]];
    let mut all_bps = Vec::with_capacity(n);
    for k in 0..=cells {
        let bps = breakpoints(k, params, probe_cells);
        for h in Hypothesis::BOTH {
            let row = &mut psi[h.index()][k * n..(k + 1) * n];
            let mean = dist.mean(h);
            let survival = |x: f64| {
                if x <= 0.0 {
                    1.0
                } else if x == f64::INFINITY || mean <= 0.0 {
                    0.0
                } else {
                    (-x / mean).exp()
                }
            };
            let mut spent = 0.0;
            for bp in &bps {
                let q = if bp.lower < bp.upper { (survival(bp.lower) - survival(bp.upper)).max(0.0) } else { 0.0 };
                row[bp.level] = q;
                spent += q;
            }
            row[0] = (1.0 - spent).max(0.0);
        }
        all_bps.push(bps);
    }
    PolicyPmf { cells, probe_cells, params, psi, breakpoints: all_bps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probing::Conditioning;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(omega: f64, theta: f64) -> PolicyParams {
        PolicyParams::new(omega, theta).unwrap()
    }

    #[test]
    fn below_threshold_or_reserve_spends_nothing() {
        let pp = p(0.75, 0.02);
        assert_eq!(alpha(7, 0.02, pp, 1), 0);
        assert_eq!(alpha(7, 0.01, pp, 1), 0);
        assert_eq!(alpha(1, 1e9, pp, 1), 0);
        assert_eq!(alpha(0, 1e9, pp, 1), 0);
        assert_eq!(alpha(5, 0.0, p(1.0, 0.0), 1), 0);
    }

    #[test]
    fn staircase_top_for_small_battery() {
        // floor(0.75 * 7) - 1 = 4
        assert_eq!(alpha(7, f64::INFINITY, p(0.75, 0.02), 1), 4);
        assert_eq!(alpha(7, 1e12, p(0.75, 0.02), 1), 4);
        assert_eq!(max_level(7, 0.75, 1), 4);
        let levels: Vec<usize> = (0..=7).map(|k| alpha(k, f64::INFINITY, p(0.75, 0.02), 1)).collect();
        assert_eq!(levels, vec![0, 0, 0, 1, 2, 2, 3, 4]);
    }

    #[test]
    fn first_breakpoint() {
        let bps = breakpoints(7, p(0.75, 0.02), 1);
        assert_relative_eq!(bps[0].lower, 0.02 * 5.25 / 3.25, max_relative = 1e-15);
        assert_relative_eq!(bps[0].lower, 0.03231, epsilon = 1e-5);
        assert_eq!(bps[0].upper, bps[1].lower);
    }

    #[test]
    fn top_level_is_unbounded() {
        for k in 2..=200 {
            for step in 1..=100 {
                let omega = step as f64 / 100.0;
                let bps = breakpoints(k, p(omega, 0.3), 1);
                if let Some(last) = bps.last() {
                    assert_eq!(last.upper, f64::INFINITY, "k {k} omega {omega}");
                    for w in bps.windows(2) {
                        assert_eq!(w[0].upper, w[1].lower);
                        assert!(w[0].lower <= w[0].upper);
                    }
                }
            }
        }
    }

    #[test]
    fn integral_k_omega_leaves_empty_top_level() {
        // 20 * 0.35 = 7 exactly: level 6 needs (1 - theta/g) >= 1
        let bps = breakpoints(20, p(0.35, 0.2), 1);
        assert_eq!(bps.len(), 6);
        assert_eq!(bps[5].lower, f64::INFINITY);
        assert_eq!(bps[4].upper, f64::INFINITY);
        assert_eq!(alpha(20, 1e15, p(0.35, 0.2), 1), 5);
    }

    #[test]
    fn breakpoints_agree_with_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(omega, theta, probe) in &[(0.75, 0.02, 1), (0.95, 0.05, 1), (0.35, 0.2, 2), (0.5, 1.3, 0)] {
            let pp = p(omega, theta);
            for k in 0..=60 {
                let bps = breakpoints(k, pp, probe);
                for _ in 0..10_000 / 60 + 1 {
                    let g = -theta * 30.0 * (rng.random::<f64>()).ln();
                    let want = bps.iter().find(|b| g >= b.lower && g < b.upper).map_or(0, |b| b.level);
                    assert_eq!(alpha(k, g, pp, probe), want, "k {k} g {g}");
                }
            }
        }
    }

    fn dist() -> GainDistribution {
        GainDistribution { weights: [0.93, 0.07], means: [1.99, 2.01] }
    }

    #[test]
    fn pmf_rows_are_distributions() {
        let pmf = policy_pmf(p(0.35, 0.2), 1, 80, &dist());
        for h in Hypothesis::BOTH {
            for k in 0..=80 {
                let s: f64 = pmf.row(h, k).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                if k <= 1 {
                    assert_eq!(pmf.psi(h, k, 0), 1.0);
                }
                for i in pmf.max_level(k) + 1..=80 {
                    assert_eq!(pmf.psi(h, k, i), 0.0);
                }
                if let Some(first) = pmf.breakpoints(k).first() {
                    let f = dist().cdf(first.lower, Conditioning::Given(h));
                    assert_relative_eq!(pmf.no_transmit(h, k), f, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn silent_policies() {
        for pp in [p(0.5, f64::INFINITY), p(0.5, 1e300), p(0.0, 0.1)] {
            let pmf = policy_pmf(pp, 1, 30, &dist());
            for h in Hypothesis::BOTH {
                for k in 0..=30 {
                    assert_eq!(pmf.psi(h, k, 0), 1.0);
                }
            }
        }
    }

    #[test]
    fn pmf_matches_sampled_policy() {
        let d = dist();
        let pp = p(0.35, 0.2);
        let pmf = policy_pmf(pp, 1, 80, &d);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        for &k in &[10usize, 37, 80] {
            for h in Hypothesis::BOTH {
                let mut counts = vec![0usize; 81];
                for _ in 0..n {
                    counts[alpha(k, d.sample(h, &mut rng), pp, 1)] += 1;
                }
                let tv: f64 = 0.5
                    * counts
                        .iter()
                        .zip(pmf.row(h, k))
                        .map(|(&c, &q)| (c as f64 / n as f64 - q).abs())
                        .sum::<f64>();
                assert!(tv < 0.005, "k {k} {h:?} tv {tv}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn policy_is_monotone_and_causal(omega in 0.0f64..=1.0, theta in 0.0f64..2.0, probe in 0usize..4) {
            let pp = p(omega, theta);
            for k in (0..=200).step_by(7) {
                let mut prev = 0;
                for j in 0..1000 {
                    let g = j as f64 * 0.01;
                    let a = alpha(k, g, pp, probe);
                    proptest::prop_assert!(a >= prev);
                    if k > probe {
                        proptest::prop_assert!(a + probe <= k);
                    }
                    proptest::prop_assert!(alpha(k + 1, g, pp, probe) >= a);
                    prev = a;
                }
            }
        }

        #[test]
        fn levels_partition_the_gain_axis(omega in 0.0f64..=1.0, theta in 1e-3f64..2.0, m0 in 0.05f64..5.0, m1 in 0.05f64..5.0) {
            let d = GainDistribution { weights: [0.5, 0.5], means: [m0, m1] };
            let pmf = policy_pmf(p(omega, theta), 1, 120, &d);
            for h in Hypothesis::BOTH {
                for k in 2..=120 {
                    let s: f64 = pmf.row(h, k).iter().sum();
                    proptest::prop_assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
