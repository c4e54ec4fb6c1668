//! Battery Markov chain.
//!
//! The state is the number of charged cells, `0..=K`. In a slot sensed idle
//! the SU spends `probe_cells` plus the policy's data level and then stores
//! the harvested cells; in a slot sensed busy it only stores. The level
//! after both is clamped to `[0, K]`. Matrices are column-stochastic: column
//! `j` is the state at the start of the slot, row `i` the state after it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::policy::PolicyPmf;
use crate::probing::Hypothesis;
use crate::sensing::SensingStats;
use crate::{Error, Result};

/// Cumulative view of the harvested-cells pmf.
struct Harvest<'a> {
    pmf: &'a [f64],
    cdf: Vec<f64>,
    /// `tail[m] = P(h >= m)` for `m` in `0..=K`.
    tail: Vec<f64>,
}

impl<'a> Harvest<'a> {
    fn new(pmf: &'a [f64]) -> Self {
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in pmf {
            acc += p;
            cdf.push(acc);
        }
        let mut tail = vec![0.0; pmf.len()];
        let mut acc = 0.0;
        for m in (0..pmf.len()).rev() {
            acc += pmf[m];
            tail[m] = acc;
        }
        Self { pmf, cdf, tail }
    }

    fn top(&self) -> i64 {
        self.pmf.len() as i64 - 1
    }

    /// Adds `w * P(h = shift + i)` to `col[i]` for every interior state
    /// `0 < i < K`.
    fn add_interior(&self, col: &mut [f64], shift: i64, w: f64) {
        let n = col.len() as i64;
        let lo = 1.max(-shift);
        let hi = (n - 1).min(self.top() - shift + 1);
        if lo >= hi {
            return;
        }
        let dst = &mut col[lo as usize..hi as usize];
        let src = &self.pmf[(lo + shift) as usize..(hi + shift) as usize];
        for (c, f) in dst.iter_mut().zip(src) {
            *c += w * f;
        }
    }

    fn cdf(&self, x: i64) -> f64 {
        if x < 0 {
            0.0
        } else if x >= self.top() {
            1.0
        } else {
            self.cdf[x as usize]
        }
    }

    /// `P(h >= m)`.
    fn at_least(&self, m: i64) -> f64 {
        if m <= 0 {
            1.0
        } else if m > self.top() {
            0.0
        } else {
            self.tail[m as usize]
        }
    }
}

/// Transition matrix of the battery chain.
///
/// The transmit branch uses the idle-hypothesis level pmf for every slot
/// sensed idle, weighted by the probability of sensing idle.
pub fn build_transition_matrix(pmf: &PolicyPmf, sensing: &SensingStats, harvest: &[f64]) -> Result<DMatrix<f64>> {
    let cells = pmf.cells;
    if harvest.len() != cells + 1 {
        return Err(Error::Dimension(format!(
            "harvest pmf has {} entries, battery has {} states",
            harvest.len(),
            cells + 1
        )));
    }
    let n = cells + 1;
    let k_top = cells as i64;
    let probe = pmf.probe_cells as i64;
    let hv = Harvest::new(harvest);
    let mut phi = DMatrix::<f64>::zeros(n, n);

    for j in 0..n {
        let jj = j as i64;
        let mut col = vec![0.0; n];
        for (l, &psi) in pmf.row(Hypothesis::Idle, j).iter().enumerate() {
            if psi == 0.0 {
                continue;
            }
            let w = psi * sensing.pi_hat_idle;
            // next = clamp(j - probe - l + h, 0, K)
            let shift = probe + l as i64 - jj;
            col[0] += w * hv.cdf(shift);
            hv.add_interior(&mut col, shift, w);
            col[n - 1] += w * hv.at_least(shift + k_top);
        }
        let w = sensing.pi_hat_busy;
        col[0] += w * hv.cdf(-jj);
        hv.add_interior(&mut col, -jj, w);
        col[n - 1] += w * hv.at_least(k_top - jj);
        if n == 1 {
            col[0] = 1.0;
        }
        phi.set_column(j, &DVector::from_vec(col));
    }
    Ok(phi)
}

/// Result of [`power_iteration`].
#[derive(Debug, Clone)]
pub struct PowerIteration {
    pub distribution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates `zeta <- Phi zeta` from an empty battery until successive
/// iterates differ by less than `tol` in the max norm.
pub fn power_iteration(phi: &DMatrix<f64>, tol: f64, max_iter: usize) -> PowerIteration {
    iterate(phi, tol, max_iter, |_| false)
}

fn iterate(phi: &DMatrix<f64>, tol: f64, max_iter: usize, mut done: impl FnMut(&DVector<f64>) -> bool) -> PowerIteration {
    let n = phi.nrows();
    let mut z = DVector::zeros(n);
    z[0] = 1.0;
    let mut next = DVector::zeros(n);
    for it in 1..=max_iter {
        phi.mul_to(&z, &mut next);
        let s = next.sum();
        next /= s;
        let delta = (&next - &z).amax();
        std::mem::swap(&mut z, &mut next);
        if delta < tol || done(&z) {
            return PowerIteration { distribution: z.as_slice().to_vec(), iterations: it, converged: true };
        }
    }
    PowerIteration { distribution: z.as_slice().to_vec(), iterations: max_iter, converged: false }
}

const POWER_TOL: f64 = 1e-14;
const POWER_MAX_ITER: usize = 50_000;
/// Agreement with the direct solve at which power iteration stops early.
const AGREEMENT_TOL: f64 = 1e-10;
/// Disagreement between the direct solve and power iteration that marks the
/// chain as non-ergodic.
pub const ERGODICITY_TOL: f64 = 1e-6;

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Stationary distribution from `(Phi - I + 1 1^T) zeta = 1`, solved by LU
/// with partial pivoting and checked against power iteration from an empty
/// battery, which stops once it is within 1e-10 of the direct solution.
pub fn steady_state(phi: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = phi.nrows();
    if phi.ncols() != n {
        return Err(Error::Dimension(format!("transition matrix is {}x{}", n, phi.ncols())));
    }
    let context = format!("{n}-state battery chain");
    let zeta = solve_direct(phi).ok_or_else(|| Error::NotErgodic {
        context: context.clone(),
        reason: "steady-state system is singular".into(),
    })?;
    let pi = iterate(phi, POWER_TOL, POWER_MAX_ITER, |z| max_gap(z.as_slice(), &zeta) <= AGREEMENT_TOL);
    let gap = max_gap(&zeta, &pi.distribution);
    if gap > ERGODICITY_TOL {
        return Err(Error::NotErgodic {
            context,
            reason: format!(
                "direct solve and power iteration disagree by {gap:.3e} after {} iterations",
                pi.iterations
            ),
        });
    }
    Ok(zeta)
}

fn solve_direct(phi: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = phi.nrows();
    let m = phi - DMatrix::<f64>::identity(n, n) + DMatrix::<f64>::from_element(n, n, 1.0);
    let zeta = m.lu().solve(&DVector::from_element(n, 1.0))?;
    if zeta.iter().any(|z| !z.is_finite() || *z < -1e-9) {
        return None;
    }
    let mut zeta: Vec<f64> = zeta.iter().map(|z| z.max(0.0)).collect();
    let s: f64 = zeta.iter().sum();
    zeta.iter_mut().for_each(|z| *z /= s);
    Some(zeta)
}

/// Probability that the battery holds at most `probe_cells` cells.
pub fn battery_outage(zeta: &[f64], probe_cells: usize) -> f64 {
    zeta.iter().take(probe_cells + 1).sum()
}

/// Mean number of stored cells.
pub fn avg_energy(zeta: &[f64]) -> f64 {
    zeta.iter().enumerate().map(|(k, z)| k as f64 * z).sum()
}

/// Battery chain of one SU with its steady-state metrics.
#[derive(Debug, Clone, Serialize)]
pub struct BatteryChain {
    #[serde(skip)]
    pub transition: DMatrix<f64>,
    pub steady_state: Vec<f64>,
    pub avg_energy: f64,
    pub battery_outage: f64,
}

impl BatteryChain {
    pub fn new(pmf: &PolicyPmf, sensing: &SensingStats, harvest: &[f64]) -> Result<Self> {
        let transition = build_transition_matrix(pmf, sensing, harvest)?;
        let steady_state = steady_state(&transition)?;
        Ok(Self {
            avg_energy: avg_energy(&steady_state),
            battery_outage: battery_outage(&steady_state, pmf.probe_cells),
            transition,
            steady_state,
        })
    }

    /// `max_i |(Phi zeta)_i - zeta_i|`.
    pub fn residual(&self) -> f64 {
        let z = DVector::from_column_slice(&self.steady_state);
        (&self.transition * &z - &z).amax()
    }

    /// Row-major CSV dump of the transition matrix.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.transition.nrows() {
            let row: Vec<String> = self.transition.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{harvest_pmf, PolicyParams};
    use crate::policy::policy_pmf;
    use crate::probing::GainDistribution;
    use approx::assert_relative_eq;

    fn sensing(pi_hat_idle: f64) -> SensingStats {
        // only pi_hat_* enter the chain
        let mut s = SensingStats::from_probabilities(0.7, 0.0, 0.85, 1.0);
        s.pi_hat_idle = pi_hat_idle;
        s.pi_hat_busy = 1.0 - pi_hat_idle;
        s
    }

    fn pmf(cells: usize, omega: f64, theta: f64) -> PolicyPmf {
        let d = GainDistribution { weights: [0.94, 0.06], means: [2.0, 2.001] };
        policy_pmf(PolicyParams::new(omega, theta).unwrap(), 1, cells, &d)
    }

    #[test]
    fn always_busy_reduces_to_harvesting() {
        let h = harvest_pmf(2.0, 7);
        let phi = build_transition_matrix(&pmf(7, 0.75, 0.02), &sensing(0.0), &h).unwrap();
        for j in 0..8 {
            for i in 1..7 {
                let want = if i >= j { h[i - j] } else { 0.0 };
                assert_relative_eq!(phi[(i, j)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn no_harvest_and_always_busy_is_identity() {
        let h = harvest_pmf(0.0, 5);
        let phi = build_transition_matrix(&pmf(5, 0.5, 0.1), &sensing(0.0), &h).unwrap();
        assert_eq!(phi, DMatrix::identity(6, 6));
        assert!(matches!(steady_state(&phi), Err(Error::NotErgodic { .. })));
    }

    #[test]
    fn columns_are_stochastic() {
        for &(omega, theta, rho) in &[(0.75, 0.02, 3.0), (0.95, 0.05, 3.0), (0.35, 0.2, 15.0), (1.0, 0.0, 0.5)] {
            let h = harvest_pmf(rho, 80);
            let phi = build_transition_matrix(&pmf(80, omega, theta), &sensing(0.745), &h).unwrap();
            for j in 0..81 {
                let s: f64 = phi.column(j).sum();
                assert!((s - 1.0).abs() < 1e-12, "column {j} sums to {s}");
                assert!(phi.column(j).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let h = harvest_pmf(2.0, 6);
        assert!(matches!(
            build_transition_matrix(&pmf(7, 0.75, 0.02), &sensing(0.5), &h),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn two_state_chains() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let z = steady_state(&phi).unwrap();
        assert_relative_eq!(z[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(z[1], 0.5, epsilon = 1e-15);

        // up-rate p = 0.3, down-rate q = 0.1: zeta = [q, p] / (p + q)
        let (p, q) = (0.3, 0.1);
        let phi = DMatrix::from_row_slice(2, 2, &[1.0 - p, q, p, 1.0 - q]);
        let z = steady_state(&phi).unwrap();
        assert_relative_eq!(z[0], 0.25, epsilon = 1e-14);
        assert_relative_eq!(z[1], 0.75, epsilon = 1e-14);
    }

    #[test]
    fn periodic_chain_is_rejected() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(steady_state(&phi), Err(Error::NotErgodic { .. })));
    }

    #[test]
    fn metrics() {
        let mut z = vec![0.0; 11];
        z[10] = 1.0;
        assert_eq!(avg_energy(&z), 10.0);
        let u = vec![1.0 / 11.0; 11];
        assert_relative_eq!(avg_energy(&u), 5.0, epsilon = 1e-14);
        assert_relative_eq!(battery_outage(&u, 10), 1.0, epsilon = 1e-14);
        assert_relative_eq!(battery_outage(&u, 1), u[0] + u[1], epsilon = 1e-15);
    }

    #[test]
    fn fixed_point_of_reference_chain() {
        let h = harvest_pmf(15.0, 80);
        let chain = BatteryChain::new(&pmf(80, 0.35, 0.2), &sensing(0.745), &h).unwrap();
        assert!(chain.residual() < 1e-9);
        let s: f64 = chain.steady_state.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(chain.avg_energy >= 0.0 && chain.avg_energy <= 80.0);
    }

    #[test]
    fn more_harvest_fills_the_battery() {
        let p = pmf(60, 0.4, 0.2);
        let mut prev = -1.0;
        for step in 1..=40 {
            let rho = step as f64 * 0.75;
            let chain = BatteryChain::new(&p, &sensing(0.745), &harvest_pmf(rho, 60)).unwrap();
            assert!(chain.avg_energy >= prev - 1e-9, "rho {rho}");
            prev = chain.avg_energy;
        }
    }

    #[test]
    fn matrix_dump_has_one_line_per_state() {
        let chain = BatteryChain::new(&pmf(7, 0.75, 0.02), &sensing(0.745), &harvest_pmf(3.0, 7)).unwrap();
        let csv = chain.matrix_csv();
        assert_eq!(csv.lines().count(), 8);
        assert!(csv.lines().all(|l| l.split(',').count() == 8));
    }
}
