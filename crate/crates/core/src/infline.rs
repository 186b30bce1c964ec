//! Infinite tight-binding line with detection at the origin.
//!
//! The free amplitude from site ξ to the origin is `i^ξ J_ξ(2t)`. The nhh
//! wave functions follow from a one-dimensional quadrature (ξ = 0) and a
//! convolution (ξ > 0); closed forms exist for `P_det` and `⟨T⟩` at ξ ∈ {0, 1}.

pub mod bessel;

use std::f64::consts::PI;

pub use bessel::{bessel_j, bessel_j_all};

use crate::nhh::gamma_of;
use crate::quad::{Adaptive, GaussLegendre};
use crate::strobo::{renewal, DetectionSeries};
use crate::{Error, Result, C64};

/// Target accuracy of the wave-function quadratures.
pub const PSI_TOL: f64 = 1e-10;
/// Half-width of the window around τ = 1 where Taylor expansions replace the
/// closed forms.
pub const TAYLOR_WINDOW: f64 = 1e-4;
/// Truncation used by [`series_comparison`].
pub const SERIES_N: usize = 8000;

fn i_pow(xi: usize) -> C64 {
    [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][xi % 4]
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

/// `i^ξ J_ξ(2t)`.
pub fn line_amplitude(xi: usize, t: f64) -> Result<C64> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("time must be nonnegative, got {t}")));
    }
    Ok(i_pow(xi) * bessel_j(xi, 2.0 * t)?)
}

/// `√(4 + s²)` at `s = 0⁺ + iω`: real inside the band, `i·sign(ω)√(ω² − 4)`
/// outside.
pub fn sqrt_branch(omega: f64) -> C64 {
    if omega.abs() <= 2.0 {
        C64::new((4.0 - omega * omega).sqrt(), 0.0)
    } else {
        C64::new(0.0, omega.signum() * (omega * omega - 4.0).sqrt())
    }
}

/// `Ψ_0(t) = e^{−Γt} − 2t ∫_0^{π/2} J_1(2t sin θ) e^{−Γt cos θ} cos θ dθ`.
pub fn psi0(t: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("time must be nonnegative, got {t}")));
    }
    if 2.0 * t > bessel::MAX_ARG {
        return Err(Error::Domain(format!("time {t} beyond the Bessel range")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let gamma = gamma_of(tau);
    let panels = (2.0 * t / PI) as usize + 4;
    let integral = Adaptive::new(PSI_TOL / (2.0 * t)).integrate(
        |th: f64| bessel_j(1, 2.0 * t * th.sin()).unwrap_or(f64::NAN) * (-gamma * t * th.cos()).exp() * th.cos(),
        0.0,
        PI / 2.0,
        panels,
    )?;
    Ok((-gamma * t).exp() - 2.0 * t * integral.value)
}

/// `J_ξ(2u)/u`, continued by `u^{ξ−1}/ξ!` at the origin.
fn kernel(xi: usize, u: f64) -> f64 {
    if u < 1e-8 {
        let fact: f64 = (1..=xi).map(|k| k as f64).product();
        return if xi == 1 { 1.0 } else { u.powi(xi as i32 - 1) / fact };
    }
    bessel_j(xi, 2.0 * u).unwrap_or(0.0) / u
}

/// `Ψ_ξ(t)`; for ξ > 0 the convolution
/// `ξ i^ξ ∫_0^t [J_ξ(2u)/u] Ψ_0(t − u) du`, whose kernel is regular
/// at `u = 0`.
pub fn line_psi(xi: usize, t: f64, tau: f64) -> Result<C64> {
    if xi == 0 {
        return Ok(C64::new(psi0(t, tau)?, 0.0));
    }
    check_tau(tau)?;
    if t == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let mut failure = None;
    let panels = (t as usize) + 2;
    let q = Adaptive::new(PSI_TOL).integrate(
        |u: f64| match psi0(t - u, tau) {
            Ok(p) => kernel(xi, u) * p,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        t,
        panels,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(i_pow(xi) * (xi as f64 * q.value))
}

/// Panel width and rule for [`line_psi_grid`].
const GRID_PANEL: f64 = 0.25;
const GRID_NODES: usize = 16;

/// `Ψ_ξ` on an ascending grid, sharing the `Ψ_0` samples between all
/// convolutions. Convolution panels are aligned to multiples of a fixed
/// width so the samples at full panels are reused.
pub fn line_psi_grid(xi: usize, grid: &[f64], tau: f64) -> Result<Vec<C64>> {
    check_tau(tau)?;
    if grid.iter().any(|t| !(*t >= 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("time grid must be ascending and nonnegative".into()));
    }
    if xi == 0 {
        return grid.iter().map(|&t| psi0(t, tau).map(|p| C64::new(p, 0.0))).collect();
    }
    let rule = GaussLegendre::new(GRID_NODES);
    let t_max = grid.last().copied().unwrap_or(0.0);
    let full = (t_max / GRID_PANEL).floor() as usize;
    let mut cache: Vec<Vec<(f64, f64, f64)>> = Vec::with_capacity(full);
    for k in 0..full {
        let (a, b) = (k as f64 * GRID_PANEL, (k + 1) as f64 * GRID_PANEL);
        cache.push(panel_samples(&rule, a, b, tau)?);
    }
    let prefactor = i_pow(xi) * xi as f64;
    grid.iter()
        .map(|&t| {
            let whole = ((t / GRID_PANEL).floor() as usize).min(full);
            let mut acc = 0.0;
            for samples in &cache[..whole] {
                acc += samples.iter().map(|&(s, w, p)| w * kernel(xi, t - s) * p).sum::<f64>();
            }
            let a = whole as f64 * GRID_PANEL;
            if t > a {
                acc += panel_samples(&rule, a, t, tau)?
                    .iter()
                    .map(|&(s, w, p)| w * kernel(xi, t - s) * p)
                    .sum::<f64>();
            }
            Ok(prefactor * acc)
        })
        .collect()
}

fn panel_samples(rule: &GaussLegendre, a: f64, b: f64, tau: f64) -> Result<Vec<(f64, f64, f64)>> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| {
            let s = mid + half * x;
            Ok((s, w * half, psi0(s, tau)?))
        })
        .collect()
}

/// `arccos τ/√(1 − τ²)`, continued analytically through τ = 1.
pub fn arc_factor(tau: f64) -> f64 {
    let x = tau - 1.0;
    if x.abs() < 1e-3 {
        return 1.0 - x / 3.0 + 2.0 * x * x / 15.0 - 2.0 * x.powi(3) / 35.0 + 8.0 * x.powi(4) / 315.0;
    }
    let gap = (1.0 - tau) * (1.0 + tau);
    if tau < 1.0 {
        tau.acos() / gap.sqrt()
    } else {
        tau.acosh() / (-gap).sqrt()
    }
}

fn polynomial(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn p0_taylor() -> [f64; 4] {
    [8.0 / (3.0 * PI), -8.0 / (15.0 * PI), 8.0 / (105.0 * PI), 8.0 / (315.0 * PI)]
}

fn p1_taylor() -> [f64; 4] {
    [
        2.0 - 16.0 / (3.0 * PI),
        -4.0 + 64.0 / (5.0 * PI),
        6.0 - 2008.0 / (105.0 * PI),
        -8.0 + 7976.0 / (315.0 * PI),
    ]
}

fn n1_taylor() -> [f64; 4] {
    [
        (9.0 * PI - 16.0) / (12.0 * PI),
        (32.0 - 5.0 * PI) / (20.0 * PI),
        (105.0 * PI - 344.0) / (210.0 * PI),
        (1024.0 - 315.0 * PI) / (630.0 * PI),
    ]
}

fn unsupported(xi: usize) -> Error {
    Error::Unsupported(format!("no closed form for xi = {xi}; use the frequency-domain quadrature"))
}

/// Closed-form `P_det^Ψ` for ξ ∈ {0, 1}.
pub fn pdet_closed(tau: f64, xi: usize) -> Result<f64> {
    check_tau(tau)?;
    let x = tau - 1.0;
    let near = x.abs() < TAYLOR_WINDOW;
    let a = arc_factor(tau);
    let gap = (1.0 - tau) * (1.0 + tau);
    match xi {
        0 if near => Ok(polynomial(&p0_taylor(), x)),
        0 => Ok(2.0 * tau / (PI * gap) * (1.0 + (1.0 - 2.0 * tau * tau) / tau * a)),
        1 if near => Ok(polynomial(&p1_taylor(), x)),
        1 => {
            let t2 = tau * tau;
            let inner = (PI - 2.0 * tau) * gap + t2 * tau - (2.0 * gap * gap + t2) * a;
            Ok(2.0 / (PI * t2 * gap) * inner)
        }
        _ => Err(unsupported(xi)),
    }
}

/// Closed-form conditional `⟨T⟩^Ψ` for ξ ∈ {0, 1}.
///
/// `⟨T⟩ = τ/(4P)` for ξ = 0 and
/// `(1/P){(2 + τ²)/(4τ) − 1/(π(1 − τ²)) + A(2τ² − 1)/(πτ(1 − τ²))}` for
/// ξ = 1, with `A = arccos τ/√(1 − τ²)`.
pub fn mean_t_closed(tau: f64, xi: usize) -> Result<f64> {
    let p = pdet_closed(tau, xi)?;
    let x = tau - 1.0;
    match xi {
        0 => Ok(tau / (4.0 * p)),
        1 if x.abs() < TAYLOR_WINDOW => Ok(polynomial(&n1_taylor(), x) / p),
        1 => {
            let gap = (1.0 - tau) * (1.0 + tau);
            let a = arc_factor(tau);
            let num = (2.0 + tau * tau) / (4.0 * tau) - 1.0 / (PI * gap) + a * (2.0 * tau * tau - 1.0) / (PI * tau * gap);
            Ok(num / p)
        }
        _ => Err(unsupported(xi)),
    }
}

/// `P_det^Ψ = (Γ/π) ∫ |Ψ_ξ(iω)|² dω` with
/// `Ψ_ξ(s) = i^ξ [(√(4+s²) − s)/2]^ξ / (Γ + √(4+s²))`, any ξ.
pub fn pdet_frequency(tau: f64, xi: usize) -> Result<f64> {
    check_tau(tau)?;
    let gamma = gamma_of(tau);
    let q = Adaptive::new(1e-13);
    // Inside the band, ω = 2 sin θ.
    let band = q.integrate(|th: f64| 2.0 * th.cos() / (gamma + 2.0 * th.cos()).powi(2), 0.0, PI / 2.0, 8)?;
    // Outside, ω = 2 cosh x.
    let outer = q.integrate(
        |x: f64| (-2.0 * xi as f64 * x).exp() * 2.0 * x.sinh() / (gamma * gamma + 4.0 * x.sinh().powi(2)),
        0.0,
        60.0,
        120,
    )?;
    Ok(2.0 * gamma / PI * (band.value + outer.value))
}

/// Conditional `⟨T⟩^Ψ` from the frequency-domain integrals, any ξ.
pub fn mean_t_frequency(tau: f64, xi: usize) -> Result<f64> {
    let p = pdet_frequency(tau, xi)?;
    let gamma = gamma_of(tau);
    let q = Adaptive::new(1e-13);
    let i1 = q.integrate(|th: f64| 2.0 * xi as f64 / (gamma + 2.0 * th.cos()).powi(2), 0.0, PI / 2.0, 8)?;
    let i2 = q.integrate(
        |x: f64| {
            let s = tau * x.sinh();
            (-2.0 * xi as f64 * x).exp() * x.cosh() / (1.0 + s * s).powi(2)
        },
        0.0,
        60.0,
        120,
    )?;
    Ok(gamma / (PI * p) * (i1.value + tau * tau / gamma * i2.value))
}

/// Small-τ expansion of `P_det^Ψ(ξ = 0)` through τ⁷.
pub fn pdet_small_tau_series(tau: f64) -> f64 {
    let c = [
        1.0,
        0.0,
        -0.5,
        8.0 / (3.0 * PI),
        -9.0 / 8.0,
        64.0 / (15.0 * PI),
        -25.0 / 16.0,
        192.0 / (35.0 * PI),
    ];
    polynomial(&c, tau)
}

/// Small-τ expansion of the strobo return probability through τ⁶.
pub fn strobo_small_tau_series(tau: f64) -> f64 {
    let c = [1.0, 0.0, -2.0, 32.0 / (3.0 * PI), -4.5, 256.0 / (15.0 * PI), -50.0 / 9.0];
    polynomial(&c, tau)
}

/// Renewal amplitudes with `a_n = i^ξ J_ξ(2nτ)` and `b_m = J_0(2mτ)`.
pub fn line_strobo_series(xi: usize, tau: f64, n_max: usize) -> Result<DetectionSeries> {
    check_tau(tau)?;
    if n_max == 0 {
        return Err(Error::Precondition("n_max must be at least 1".into()));
    }
    let mut a = Vec::with_capacity(n_max);
    let mut b = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let x = 2.0 * n as f64 * tau;
        b.push(C64::new(bessel_j(0, x)?, 0.0));
        a.push(if xi == 0 { b[n - 1] } else { i_pow(xi) * bessel_j(xi, x)? });
    }
    Ok(DetectionSeries::new(tau, renewal(&a, &b)))
}

/// Return-problem `Σ|φ_n|²` over `N` terms plus the asymptotic tail
/// `τ/(π(N + ½)²)`.
pub fn line_return_pdet(tau: f64, n_max: usize) -> Result<f64> {
    let s = line_strobo_series(0, tau, n_max)?;
    let head: f64 = s.probabilities().iter().sum();
    Ok(head + tau / (PI * (n_max as f64 + 0.5).powi(2)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub tau: f64,
    pub p_strobo: f64,
    pub p_corrected: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesReport {
    pub rows: Vec<SeriesRow>,
    /// `ln(Δ_k/Δ_{k+1}) / ln(τ_k/τ_{k+1})` for consecutive entries.
    pub local_exponents: Vec<f64>,
    /// Least-squares slope of `ln Δ` against `ln τ`.
    pub exponent: f64,
}

impl SeriesReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("tau\tp_strobo\tp_corrected\tdelta\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{:.15e}\t{:.15e}\t{:.6e}\n", r.tau, r.p_strobo, r.p_corrected, r.delta));
        }
        out.push_str(&format!("exponent\t{:.4}\n", self.exponent));
        out
    }
}

/// `Δ(τ) = |P^φ(τ) − (4P^Ψ(τ) − 3)|` on the line return problem and its
/// scaling exponent.
pub fn series_comparison(tau_list: &[f64]) -> Result<SeriesReport> {
    if tau_list.len() < 2 {
        return Err(Error::Precondition("need at least two tau values".into()));
    }
    let rows: Vec<SeriesRow> = tau_list
        .iter()
        .map(|&tau| {
            let p_strobo = line_return_pdet(tau, SERIES_N)?;
            let p_corrected = 4.0 * pdet_closed(tau, 0)? - 3.0;
            Ok(SeriesRow { tau, p_strobo, p_corrected, delta: (p_strobo - p_corrected).abs() })
        })
        .collect::<Result<_>>()?;
    let local_exponents = rows
        .windows(2)
        .map(|w| (w[0].delta / w[1].delta).ln() / (w[0].tau / w[1].tau).ln())
        .collect();
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.tau.ln(), r.delta.ln())).collect();
    Ok(SeriesReport { rows, local_exponents, exponent: slope(&pts) })
}

pub(crate) fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitudes_at_origin_and_unitarity() {
        assert_eq!(line_amplitude(0, 0.0).unwrap(), C64::new(1.0, 0.0));
        assert_eq!(line_amplitude(1, 0.0).unwrap(), C64::new(0.0, 0.0));
        let j = bessel_j_all(50, 4.0).unwrap();
        let total = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn branch_rule() {
        assert_eq!(sqrt_branch(0.0), C64::new(2.0, 0.0));
        let s = sqrt_branch(3.0);
        assert!((s - C64::new(0.0, 5f64.sqrt())).norm() < 1e-15);
        assert!((sqrt_branch(-3.0) + s).norm() < 1e-15);
        // It is the boundary value of √(4 + s²) with Re s → 0⁺.
        let w = 2.7;
        let near = (C64::new(4.0, 0.0) + C64::new(1e-9, w).powi(2)).sqrt();
        assert!((near - sqrt_branch(w)).norm() < 1e-6);
    }

    #[test]
    fn first_amplitude_is_j0() {
        for tau in [0.1, 0.5] {
            let s = line_strobo_series(0, tau, 3).unwrap();
            assert!((s.amplitudes[0] - bessel_j(0, 2.0 * tau).unwrap()).norm() < 1e-15);
        }
        let tau: f64 = 0.01;
        let s = line_strobo_series(0, tau, 2).unwrap();
        let lead = -tau * bessel_j(1, 4.0 * tau).unwrap();
        assert!((s.amplitudes[1].re / lead - 1.0).abs() < 0.01);
    }

    #[test]
    fn closed_forms_match_frequency_integrals() {
        for tau in [0.05, 0.25, 0.5, 0.9, 1.5, 4.0] {
            for xi in [0, 1] {
                let p = pdet_closed(tau, xi).unwrap();
                let q = pdet_frequency(tau, xi).unwrap();
                assert!((p - q).abs() < 1e-11, "P tau={tau} xi={xi}: {p} vs {q}");
                let m = mean_t_closed(tau, xi).unwrap();
                let n = mean_t_frequency(tau, xi).unwrap();
                assert!((m / n - 1.0).abs() < 1e-9, "T tau={tau} xi={xi}: {m} vs {n}");
            }
        }
        assert!(matches!(pdet_closed(0.3, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn taylor_window_is_continuous() {
        for xi in [0, 1] {
            for side in [-1.0, 1.0] {
                let inside = 1.0 + side * (TAYLOR_WINDOW - 1e-12);
                let outside = 1.0 + side * (TAYLOR_WINDOW + 1e-12);
                let jump_p = pdet_closed(inside, xi).unwrap() - pdet_closed(outside, xi).unwrap();
                let jump_t = mean_t_closed(inside, xi).unwrap() - mean_t_closed(outside, xi).unwrap();
                assert!(jump_p.abs() < 1e-9 && jump_t.abs() < 1e-9, "xi={xi} {jump_p} {jump_t}");
            }
            let exact = pdet_frequency(1.0, xi).unwrap();
            assert!((pdet_closed(1.0, xi).unwrap() - exact).abs() < 1e-11);
        }
        assert!((arc_factor(1.0) - 1.0).abs() < 1e-15);
        assert!((arc_factor(1.002) - (1.002f64).acosh() / (1.002f64 * 1.002 - 1.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn small_tau_limits() {
        assert!((pdet_closed(1e-3, 0).unwrap() - 1.0).abs() < 1e-5);
        for tau in [0.01, 0.05] {
            let p = pdet_closed(tau, 0).unwrap();
            assert!((p - pdet_small_tau_series(tau)).abs() < 10.0 * tau.powi(8), "{tau}");
        }
    }

    #[test]
    fn psi0_initial_value_and_quadrature_total() {
        assert_eq!(psi0(0.0, 0.5).unwrap(), 1.0);
        let tau = 0.5;
        let gamma = gamma_of(tau);
        let rule = GaussLegendre::new(16);
        let mut total = 0.0;
        let h = 0.5;
        for k in 0..400 {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            total += rule.apply(&mut |t: f64| 2.0 * gamma * psi0(t, tau).unwrap().powi(2), a, b);
        }
        assert!((total - pdet_closed(tau, 0).unwrap()).abs() < 1e-4, "{total}");
    }

    #[test]
    fn convolution_small_tau_limit() {
        let (xi, t, tau) = (3usize, 5.0, 0.01);
        let psi = line_psi(xi, t, tau).unwrap();
        let approx = i_pow(xi) * (xi as f64 * tau / (2.0 * t) * bessel_j(xi, 2.0 * t).unwrap());
        assert!((psi - approx).norm() / approx.norm() < 0.02, "{psi} vs {approx}");
    }

    #[test]
    fn grid_and_pointwise_convolutions_agree() {
        let tau = 0.5;
        let grid = [0.0, 0.7, 1.0, 3.3];
        let g = line_psi_grid(1, &grid, tau).unwrap();
        for (t, v) in grid.iter().zip(&g) {
            let p = line_psi(1, *t, tau).unwrap();
            assert!((p - v).norm() < 1e-9, "t={t}: {p} vs {v}");
        }
    }

    #[test]
    fn strobo_probability_tracks_series() {
        let tau = 0.25;
        let p = line_return_pdet(tau, 4000).unwrap();
        assert!((p - strobo_small_tau_series(tau)).abs() < 1e-3);
    }
}
