//! Bessel functions of the first kind and integer order.
//!
//! Small arguments use the ascending series, large arguments far beyond the
//! order use the Hankel expansion, everything else the downward Miller
//! recurrence normalized by `J_0 + 2 Σ J_{2k} = 1`.

use crate::{Error, Result};

pub const MAX_ORDER: usize = 200;
pub const MAX_ARG: f64 = 1e4;

const SERIES_ARG: f64 = 1.0;
const HANKEL_ARG: f64 = 30.0;
const RESCALE: f64 = 1e250;

fn check(order: usize, x: f64) -> Result<()> {
    if order > MAX_ORDER || !(x.abs() <= MAX_ARG) {
        return Err(Error::Domain(format!("J_{order}({x}) outside order ≤ {MAX_ORDER}, |x| ≤ {MAX_ARG}")));
    }
    Ok(())
}

fn parity(order: usize, x: f64, value: f64) -> f64 {
    if x < 0.0 && order % 2 == 1 {
        -value
    } else {
        value
    }
}

/// `J_n(x)` with absolute error below `1e-12`.
pub fn bessel_j(order: usize, x: f64) -> Result<f64> {
    check(order, x)?;
    let ax = x.abs();
    let value = if ax == 0.0 {
        if order == 0 {
            1.0
        } else {
            0.0
        }
    } else if ax <= SERIES_ARG {
        series(order, ax)
    } else if use_hankel(order, ax) {
        hankel(order, ax)
    } else {
        miller(order, ax)[order]
    };
    Ok(parity(order, x, value))
}

/// `J_0(x), …, J_{n_max}(x)` in one recurrence pass.
pub fn bessel_j_all(n_max: usize, x: f64) -> Result<Vec<f64>> {
    check(n_max, x)?;
    let ax = x.abs();
    let mut out = if ax == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        v
    } else {
        miller(n_max, ax)
    };
    for (k, v) in out.iter_mut().enumerate() {
        *v = parity(k, x, *v);
    }
    Ok(out)
}

fn use_hankel(order: usize, x: f64) -> bool {
    let n = order as f64;
    x >= HANKEL_ARG && x >= n * n
}

/// `Σ_k (−1)^k (x/2)^{2k+n} / (k! (n+k)!)`.
pub(crate) fn series(order: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    let mut sum = term;
    let q = -half * half;
    for k in 1..200 {
        term *= q / (k as f64 * (k + order) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Hankel expansion `√(2/πx) (P cos χ − Q sin χ)`, `χ = x − nπ/2 − π/4`,
/// truncated at its smallest term.
fn hankel(order: usize, x: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..100 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() >= last || term == 0.0 {
            break;
        }
        last = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (order as f64 * 0.5 + 0.25) * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Downward recurrence `J_{k−1} = (2k/x) J_k − J_{k+1}` from a start order
/// well beyond both `n_max` and `x`, returning orders `0..=n_max`.
fn miller(n_max: usize, x: f64) -> Vec<f64> {
    let reach = (n_max as f64).max(x) + 40.0 + 20.0 * x.cbrt();
    let mut start = reach.ceil() as usize;
    start += start % 2;
    let mut out = vec![0.0; n_max + 1];
    let mut above = 0.0;
    let mut current = 1e-30;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        if k <= n_max {
            out[k] = current;
        }
        if k % 2 == 0 {
            norm += 2.0 * current;
        }
        let below = 2.0 * k as f64 / x * current - above;
        above = current;
        current = below;
        if current.abs() > RESCALE {
            let s = 1.0 / RESCALE;
            current *= s;
            above *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = current;
    norm += current;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn reference_values() {
        let cases = [
            (0, 1.0, 0.765_197_686_557_966_6),
            (1, 1.0, 0.440_050_585_744_933_5),
            (0, 2.404_825_557_695_773, 0.0),
            (2, 5.0, 0.046_565_116_277_752_2),
            (5, 10.0, -0.234_061_528_186_793_6),
            (0, 50.0, 0.055_812_327_669_251_8),
            (1, 100.0, -0.077_145_352_014_112_16),
        ];
        for (n, x, want) in cases {
            let got = bessel_j(n, x).unwrap();
            assert!((got - want).abs() < 1e-12, "J_{n}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn independent_series_at_one() {
        // Forty terms of the ascending series, summed from the tail.
        let mut terms = Vec::new();
        let mut t = 1.0;
        for k in 0..40 {
            if k > 0 {
                t *= -0.25 / (k * k) as f64;
            }
            terms.push(t);
        }
        let oracle: f64 = terms.iter().rev().sum();
        assert!((miller(0, 1.0)[0] - oracle).abs() < 1e-12);
        assert!((bessel_j(0, 1.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn normalization_identity() {
        let j = bessel_j_all(60, 2.0).unwrap();
        let s = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn methods_agree_across_boundaries() {
        for &x in &[30.0, 45.5, 120.0, 900.0] {
            let all = miller(3, x);
            for n in 0..=3 {
                assert!((hankel(n, x) - all[n]).abs() < 1e-12, "n={n} x={x}");
            }
        }
        for &x in &[0.3, 0.9] {
            let all = miller(4, x);
            for n in 0..=4 {
                assert!((series(n, x) - all[n]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn negative_arguments_and_domain() {
        assert!((bessel_j(1, -2.0).unwrap() + bessel_j(1, 2.0).unwrap()).abs() < 1e-15);
        assert!((bessel_j(2, -2.0).unwrap() - bessel_j(2, 2.0).unwrap()).abs() < 1e-15);
        assert!(matches!(bessel_j(201, 1.0), Err(Error::Domain(_))));
        assert!(bessel_j(0, 2e4).is_err());
    }
}
