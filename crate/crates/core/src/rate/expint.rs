//! Exponential integrals and the closed-form antiderivative of the
//! exponentially weighted log rate.

use std::f64::consts::LN_2;

use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_TERMS: usize = 500;
/// Series below, continued fraction above. The alternating series loses
/// about three digits to cancellation at this point, the continued fraction
/// converges slowly just above 1.
const SERIES_LIMIT: f64 = 4.0;

/// `E1(z) = int_z^inf e^-t / t dt` for `z > 0`.
pub fn e1(z: f64) -> f64 {
    if z <= 0.0 || z.is_nan() {
        return f64::NAN;
    }
    if z <= SERIES_LIMIT {
        e1_series(z)
    } else {
        e1_scaled_cf(z) * (-z).exp()
    }
}

/// `e^z E1(z)` for `z > 0`, finite for every finite `z`.
pub fn e1_scaled(z: f64) -> f64 {
    if z <= 0.0 || z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return 0.0;
    }
    if z <= SERIES_LIMIT {
        e1_series(z) * z.exp()
    } else {
        e1_scaled_cf(z)
    }
}

fn e1_series(z: f64) -> f64 {
    // E1(z) = -gamma - ln z - sum_{k>=1} (-z)^k / (k k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        term *= -z / kf;
        let add = term / kf;
        sum += add;
        if add.abs() < sum.abs() * f64::EPSILON * 0.25 {
            break;
        }
    }
    -EULER_GAMMA - z.ln() - sum
}

fn e1_scaled_cf(z: f64) -> f64 {
    // Modified Lentz on e^z E1(z) = 1/(z+1- 1/(z+3- 4/(z+5- ...)))
    const TINY: f64 = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    h
}

/// Exponential integral `Ei(x) = -E1(-x)` on the negative axis.
///
/// Underflows to zero below `-700`; non-negative arguments are rejected.
pub fn exp_integral_ei(x: f64) -> Result<f64> {
    if !(x < 0.0) {
        return Err(Error::Domain(format!("Ei evaluated at x = {x}, need x < 0")));
    }
    if x < -700.0 {
        return Ok(0.0);
    }
    Ok(-e1(-x))
}

/// Antiderivative in `x` of `log2(1 + S x) e^{-x/w} / w`:
///
/// ```text
/// M(x, S, w) = e^{1/(S w)} Ei(-x/w - 1/(S w)) / ln 2 - e^{-x/w} log2(1 + S x)
/// ```
///
/// evaluated as `-e^{-x/w} (e^z E1(z) / ln 2 + log2(1 + S x))` with
/// `z = x/w + 1/(S w)`, which never forms the overflowing factor
/// `e^{1/(S w)}`. `M(+inf) = 0`, and `S = 0` gives 0.
pub fn antiderivative_m(x: f64, s: f64, w: f64) -> f64 {
    m_given_decay(x, (-x / w).exp(), s, w)
}

/// [`antiderivative_m`] with `decay = e^{-x/w}` supplied by the caller.
fn m_given_decay(x: f64, decay: f64, s: f64, w: f64) -> f64 {
    if x == f64::INFINITY || s == 0.0 || decay == 0.0 {
        return 0.0;
    }
    let z = x / w + 1.0 / (s * w);
    -decay * (e1_scaled(z) / LN_2 + (s * x).ln_1p() / LN_2)
}

/// `int_a^c log2(1 + S x) e^{-x/w} / w dx`, zero for empty or degenerate
/// intervals.
pub fn segment(a: f64, c: f64, s: f64, w: f64) -> f64 {
    segment_given_decay(a, c, (-a / w).exp(), (-c / w).exp(), s, w)
}

/// [`segment`] with `e^{-a/w}` and `e^{-c/w}` supplied, so that adjacent
/// segments can share the factor at their common end.
pub fn segment_given_decay(a: f64, c: f64, decay_a: f64, decay_c: f64, s: f64, w: f64) -> f64 {
    if !(a < c) || s <= 0.0 || w <= 0.0 {
        return 0.0;
    }
    (m_given_decay(c, decay_c, s, w) - m_given_decay(a, decay_a, s, w)).max(0.0)
}
