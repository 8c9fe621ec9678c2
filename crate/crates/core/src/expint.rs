//! Exponential integrals `E_n(x) = ∫_1^∞ e^{-xt} / t^n dt`.
//!
//! Power series below `x = 1`, modified Lentz continued fraction above.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_TERMS: usize = 500;

/// `E_1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn e1(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("E1 requires x > 0, got {x}")));
    }
    Ok(expint_unchecked(1, x))
}

/// `E_n(x)` for `n >= 1`, `x >= 0` (`x > 0` when `n = 1`).
pub fn expint(n: u32, x: f64) -> Result<f64> {
    if n == 0 || x.is_nan() || x < 0.0 || (n == 1 && x == 0.0) {
        return Err(Error::Domain(format!("E_{n}({x}) is undefined")));
    }
    Ok(expint_unchecked(n, x))
}

/// `E_2(x) = e^{-x} - x E_1(x)`, the one-sided escape probability of a
/// particle scattered at optical depth `x` from a free surface (times 2).
pub(crate) fn e2(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        expint_unchecked(2, x)
    }
}

fn expint_unchecked(n: u32, x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    let nm1 = (n - 1) as f64;
    if x == 0.0 {
        return 1.0 / nm1;
    }
    if x > 1.0 {
        let tiny = f64::MIN_POSITIVE / f64::EPSILON;
        let mut b = x + n as f64;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_TERMS {
            let i = i as f64;
            let a = -i * (nm1 + i);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() <= f64::EPSILON {
                break;
            }
        }
        h * (-x).exp()
    } else {
        let mut ans = if n == 1 {
            -x.ln() - EULER_GAMMA
        } else {
            1.0 / nm1
        };
        let mut fact = 1.0;
        for i in 1..=MAX_TERMS {
            fact *= -x / i as f64;
            let del = if i as u32 != n - 1 {
                -fact / (i as f64 - nm1)
            } else {
                let psi = -EULER_GAMMA + (1..n).map(|k| 1.0 / k as f64).sum::<f64>();
                fact * (-x.ln() + psi)
            };
            ans += del;
            if del.abs() < ans.abs() * f64::EPSILON {
                break;
            }
        }
        ans
    }
}
