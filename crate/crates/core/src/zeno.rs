//! Zeno-limit closed forms and the strobo/nhh correspondence.

use nalgebra::DVector;

use crate::electro::ZenoData;
use crate::strobo::DetectionSeries;
use crate::{factorial, Error, FirstDetectionStats, Framework, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Transition,
    Return,
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Problem::Transition => "transition",
            Problem::Return => "return",
        }
    }
}

/// A density value plus any point mass, kept apart so quadrature over the
/// density never sees a delta function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoPdf {
    pub density: f64,
    /// `(time, mass)` of the first-attempt atom (strobo only).
    pub point_mass: Option<(f64, f64)>,
}

fn warn_if_not_zeno(zd: &ZenoData, tau: f64) {
    if zd.tau_z.is_finite() && tau > zd.tau_z {
        log::warn!("Zeno closed forms used at tau={tau} beyond the Zeno time {}", zd.tau_z);
    }
}

/// `|Σ_l c_l e^{−t(λ_l τ + iω_l)}|²` with `c_l = λ_l θ_l` or `λ_l`.
fn slow_sum(zd: &ZenoData, tau: f64, t: f64, problem: Problem) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for l in 0..zd.len() {
        let weight = match problem {
            Problem::Transition => zd.theta[l] * zd.lambda[l],
            Problem::Return => C64::new(zd.lambda[l], 0.0),
        };
        acc += weight * C64::new(-t * zd.lambda[l] * tau, -t * zd.omega[l]).exp();
    }
    acc.norm_sqr()
}

/// Zeno-limit detection-time density.
///
/// nhh carries the fast transient `(4/τ)|⟨ψd|ψin⟩|² e^{−4t/τ}` in the
/// density; strobo reports the same weight as a point mass at `t = τ`.
/// The slow return part of strobo is four times that of nhh, while the
/// transition parts coincide.
pub fn zeno_pdf(zd: &ZenoData, tau: f64, t: f64, kind: Framework, problem: Problem, overlap: C64) -> ZenoPdf {
    warn_if_not_zeno(zd, tau);
    let ov2 = match problem {
        Problem::Return => 1.0,
        Problem::Transition => overlap.norm_sqr(),
    };
    let s = slow_sum(zd, tau, t, problem);
    let slow = match problem {
        Problem::Transition => 4.0 * tau * s,
        Problem::Return => tau.powi(3) * s,
    };
    match kind {
        Framework::Nhh => ZenoPdf { density: 4.0 / tau * ov2 * (-4.0 * t / tau).exp() + slow, point_mass: None },
        Framework::Strobo => ZenoPdf {
            density: if problem == Problem::Return { 4.0 * slow } else { slow },
            point_mass: (ov2 > 0.0).then_some((tau, ov2)),
        },
    }
}

/// Zeno-limit detection probability and conditional moments.
pub fn zeno_stats(
    zd: &ZenoData,
    tau: f64,
    m_max: usize,
    kind: Framework,
    problem: Problem,
    overlap: C64,
) -> Result<FirstDetectionStats> {
    warn_if_not_zeno(zd, tau);
    match problem {
        Problem::Transition => {
            let slow: Vec<f64> = zd.lambda.iter().zip(&zd.theta).map(|(l, th)| 2.0 * l * th.norm_sqr()).collect();
            let p_det = overlap.norm_sqr() + slow.iter().sum::<f64>();
            if !(p_det >= 1e-12) {
                return Err(Error::UndefinedMoments { p_det });
            }
            let moments = (1..=m_max)
                .map(|m| {
                    let s: f64 = slow.iter().zip(&zd.lambda).map(|(w, l)| w / (2.0 * l * tau).powi(m as i32)).sum();
                    factorial(m) * s / p_det
                })
                .collect();
            Ok(FirstDetectionStats { p_det, moments, truncation_n: 0, tail_estimate: 0.0 })
        }
        Problem::Return => {
            let factor = if kind == Framework::Strobo { 4.0 } else { 1.0 };
            let moments = (1..=m_max).map(|m| factor * return_moment_nhh(zd, tau, m)).collect();
            Ok(FirstDetectionStats { p_det: 1.0, moments, truncation_n: 0, tail_estimate: 0.0 })
        }
    }
}

/// `⟨T^m⟩^Ψ = δ_{m1} τ/4 + (m!/(4τ^{m−2})) Σ_l 2λ_l/(2λ_l)^m`.
fn return_moment_nhh(zd: &ZenoData, tau: f64, m: usize) -> f64 {
    let s: f64 = zd.lambda.iter().map(|l| 2.0 * l / (2.0 * l).powi(m as i32)).sum();
    let fast = if m == 1 { tau / 4.0 } else { 0.0 };
    fast + factorial(m) / (4.0 * tau.powi(m as i32 - 2)) * s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedStats {
    pub p_det: f64,
    pub moments: Vec<f64>,
    /// Set when `4P − 3` is so small that the moments are dominated by the
    /// division.
    pub near_breakdown: bool,
}

/// Threshold on `4P^Ψ − 3` below which corrected values are flagged.
pub const BREAKDOWN_MARGIN: f64 = 1e-2;

/// `P^φ = 4P^Ψ − 3`, `⟨T^m⟩^φ = [4P^Ψ/(4P^Ψ − 3)] ⟨T^m⟩^Ψ` for full overlap.
pub fn correction_map(p_det_nhh: f64, moments_nhh: &[f64]) -> Result<CorrectedStats> {
    if !(p_det_nhh > 0.75) {
        return Err(Error::CorrectionInvalid { p_det: p_det_nhh });
    }
    let p = 4.0 * p_det_nhh - 3.0;
    let scale = 4.0 * p_det_nhh / p;
    Ok(CorrectedStats {
        p_det: p,
        moments: moments_nhh.iter().map(|m| m * scale).collect(),
        near_breakdown: p < BREAKDOWN_MARGIN,
    })
}

/// Branch of [`perturbed_return_moments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    /// `τ ≪ ε`: transition-like slow decay.
    Distant,
    /// `τ ≈ ε`: return-like quantized core.
    Close,
    /// Matched expression valid across both regimes.
    Uniform,
}

/// `√(1 − ε²)|ψd⟩ + ε|ψ⊥⟩`.
pub fn perturbed_initial_state(psi_d: &DVector<C64>, psi_perp: &DVector<C64>, epsilon: f64) -> Result<DVector<C64>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Precondition(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if psi_d.dotc(psi_perp).norm() > 1e-10 {
        return Err(Error::Precondition("perturbation must be orthogonal to the detector".into()));
    }
    Ok(psi_d * C64::new((1.0 - epsilon * epsilon).sqrt(), 0.0) + psi_perp * C64::new(epsilon, 0.0))
}

/// Strobo `⟨T^m⟩` for the initial state `√(1 − ε²)ψd + εψ⊥`.
///
/// `zd` must carry the transition times θ_l of `ψ⊥`. With
/// `D = 1 − ε² + ε² Σ 2λ_l|θ_l|²` and `g_l = εθ_l/τ`, the uniform form is
/// `τ^m + (m!/τ^{m−2}) Σ_l [2λ_l/(2λ_l)^m] (|1 + i g_l|² + |g_l|²/D − |g_l|²)`.
pub fn perturbed_return_moments(zd: &ZenoData, tau: f64, epsilon: f64, m: usize, mode: PerturbMode) -> Result<f64> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Precondition(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    if m == 0 {
        return Err(Error::Precondition("moment order starts at 1".into()));
    }
    let e2 = epsilon * epsilon;
    let p_perp: f64 = zd.lambda.iter().zip(&zd.theta).map(|(l, th)| 2.0 * l * th.norm_sqr()).sum();
    let denom = 1.0 - e2 + e2 * p_perp;
    let mf = factorial(m);
    let mi = m as i32;
    let sum = |f: &dyn Fn(f64, C64) -> f64| -> f64 {
        zd.lambda.iter().zip(&zd.theta).map(|(&l, &th)| 2.0 * l / (2.0 * l).powi(mi) * f(l, th)).sum()
    };
    let value = match mode {
        PerturbMode::Distant => e2 * mf / tau.powi(mi) * sum(&|_, th| th.norm_sqr()) / denom,
        PerturbMode::Close => {
            tau.powi(mi) + mf / tau.powi(mi - 2) * sum(&|_, th| (C64::new(1.0, 0.0) + C64::i() * th * (epsilon / tau)).norm_sqr())
        }
        PerturbMode::Uniform => {
            tau.powi(mi)
                + mf / tau.powi(mi - 2)
                    * sum(&|_, th| {
                        let g = th * (epsilon / tau);
                        (C64::new(1.0, 0.0) + C64::i() * g).norm_sqr() + g.norm_sqr() / denom - g.norm_sqr()
                    })
        }
    };
    Ok(value)
}

/// Return-problem mean when the first attempt happens at `(1 − ε)τ`.
pub fn shifted_protocol_mean(tau: f64, epsilon: f64, w: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Precondition(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    Ok((1.0 - epsilon) * (epsilon + w as f64 * (1.0 - epsilon)) * tau)
}

/// Higher return moments of the shifted protocol: `(1 − ε)²` times the
/// unshifted value.
pub fn shifted_return_moment(unshifted: f64, epsilon: f64) -> f64 {
    (1.0 - epsilon) * (1.0 - epsilon) * unshifted
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    /// Largest `|a − b|/b` over the shared `tτ` range.
    pub max_deviation: f64,
    /// Where it happens, in units of `tτ`.
    pub worst_at: f64,
    pub envelope_a: Vec<(f64, f64)>,
    pub envelope_b: Vec<(f64, f64)>,
}

pub const MIN_ENVELOPE_POINTS: usize = 5;

fn local_maxima(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    (1..points.len().saturating_sub(1))
        .filter(|&i| points[i - 1].1 < points[i].1 && points[i].1 >= points[i + 1].1)
        .map(|i| points[i])
        .collect()
}

/// Drops interior maxima lower than both neighbours until none remain.
fn principal_envelope(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    loop {
        let n = pts.len();
        if n < 3 {
            return pts;
        }
        let keep: Vec<(f64, f64)> = (0..n)
            .filter(|&i| i == 0 || i == n - 1 || !(pts[i].1 < pts[i - 1].1 && pts[i].1 < pts[i + 1].1))
            .map(|i| pts[i])
            .collect();
        if keep.len() == n {
            return pts;
        }
        pts = keep;
    }
}

/// Envelope of `|φ_n|²/τ / C(τ)` against `tτ`, with `C = τ` (transition) or
/// `τ³` (return). The last maximum is dropped since the window edge can cut
/// it.
pub fn envelope(series: &DetectionSeries, problem: Problem) -> Vec<(f64, f64)> {
    let tau = series.tau;
    let c = match problem {
        Problem::Transition => tau,
        Problem::Return => tau.powi(3),
    };
    let scaled: Vec<(f64, f64)> = series.local_average().into_iter().map(|(t, f)| (t * tau, f / c)).collect();
    let mut env = principal_envelope(local_maxima(&scaled));
    env.pop();
    env
}

fn interpolate(pts: &[(f64, f64)], x: f64) -> f64 {
    let k = pts.partition_point(|p| p.0 < x);
    if k == 0 {
        return pts[0].1;
    }
    if k == pts.len() {
        return pts[k - 1].1;
    }
    let (x0, y0) = pts[k - 1];
    let (x1, y1) = pts[k];
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Compares the scaled envelopes of two series taken at different τ.
/// Envelope `b` is interpolated onto the abscissae of `a`.
pub fn envelope_collapse(a: &DetectionSeries, b: &DetectionSeries, problem: Problem) -> Result<CollapseReport> {
    let ea = envelope(a, problem);
    let eb = envelope(b, problem);
    for e in [&ea, &eb] {
        if e.len() < MIN_ENVELOPE_POINTS {
            return Err(Error::InsufficientData { found: e.len(), needed: MIN_ENVELOPE_POINTS });
        }
    }
    let lo = ea[0].0.max(eb[0].0);
    let hi = ea[ea.len() - 1].0.min(eb[eb.len() - 1].0);
    let mut max_deviation = 0.0;
    let mut worst_at = lo;
    for &(x, y) in ea.iter().filter(|p| p.0 >= lo && p.0 <= hi) {
        let yb = interpolate(&eb, x);
        let dev = (y - yb).abs() / yb.abs();
        if dev > max_deviation {
            max_deviation = dev;
            worst_at = x;
        }
    }
    Ok(CollapseReport { max_deviation, worst_at, envelope_a: ea, envelope_b: eb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electro::zeno_data;
    use crate::model::{basis_state, build_ring, SpectralChargeData};
    use crate::strobo::{converged_stats, spectral_amplitudes, Truncation};

    fn benzene(site: usize) -> SpectralChargeData {
        let m = build_ring(6, 1.0).unwrap().with_psi_in(basis_state(6, site).unwrap()).unwrap();
        SpectralChargeData::from_model(&m).unwrap()
    }

    #[test]
    fn factor_four_in_slow_parts() {
        let zd = zeno_data(&benzene(0)).unwrap();
        let one = C64::new(1.0, 0.0);
        for t in [0.5, 3.0, 11.0] {
            let n = zeno_pdf(&zd, 0.1, t, Framework::Nhh, Problem::Return, one);
            let s = zeno_pdf(&zd, 0.1, t, Framework::Strobo, Problem::Return, one);
            let nhh_slow = n.density - 40.0 * (-40.0 * t).exp();
            assert!((s.density / nhh_slow - 4.0).abs() < 1e-12);
            assert_eq!(s.point_mass, Some((0.1, 1.0)));
        }
        let zt = zeno_data(&benzene(1)).unwrap();
        let zero = C64::new(0.0, 0.0);
        let n = zeno_pdf(&zt, 0.1, 2.0, Framework::Nhh, Problem::Transition, zero);
        let s = zeno_pdf(&zt, 0.1, 2.0, Framework::Strobo, Problem::Transition, zero);
        assert_eq!(n.density, s.density);
        assert!(s.point_mass.is_none());
    }

    #[test]
    fn return_means() {
        let zd = zeno_data(&benzene(0)).unwrap();
        let one = C64::new(1.0, 0.0);
        let tau = 0.03;
        let n = zeno_stats(&zd, tau, 1, Framework::Nhh, Problem::Return, one).unwrap();
        let s = zeno_stats(&zd, tau, 1, Framework::Strobo, Problem::Return, one).unwrap();
        assert!((n.mean() - tau).abs() < 1e-14);
        assert!((s.mean() - 4.0 * tau).abs() < 1e-14);
    }

    #[test]
    fn moment_scaling_laws() {
        let zt = zeno_data(&benzene(3)).unwrap();
        let zr = zeno_data(&benzene(0)).unwrap();
        let zero = C64::new(0.0, 0.0);
        for m in 1..=3usize {
            let a = zeno_stats(&zt, 0.01, m, Framework::Nhh, Problem::Transition, zero).unwrap().moments[m - 1];
            let b = zeno_stats(&zt, 0.02, m, Framework::Nhh, Problem::Transition, zero).unwrap().moments[m - 1];
            assert!((a / b - 2f64.powi(m as i32)).abs() < 1e-9);
            if m >= 2 {
                let a = zeno_stats(&zr, 0.01, m, Framework::Nhh, Problem::Return, zero).unwrap().moments[m - 1];
                let b = zeno_stats(&zr, 0.02, m, Framework::Nhh, Problem::Return, zero).unwrap().moments[m - 1];
                assert!((a / b - 2f64.powi(m as i32 - 2)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn transition_probability_matches_strobo_sum() {
        let d = benzene(3);
        let zd = zeno_data(&d).unwrap();
        let tau = 0.05;
        let z = zeno_stats(&zd, tau, 1, Framework::Strobo, Problem::Transition, d.overlap).unwrap();
        let s = converged_stats(&d, tau, tau, 1, Truncation::default()).unwrap();
        assert!((z.p_det / s.stats.p_det - 1.0).abs() < 0.02);
    }

    #[test]
    fn correction_map_cases() {
        let c = correction_map(1.0, &[0.1, 0.03]).unwrap();
        assert_eq!(c.p_det, 1.0);
        assert_eq!(c.moments, vec![0.4, 0.12]);
        assert!(!c.near_breakdown);
        let edge = correction_map(0.75 + 1e-9, &[1.0]).unwrap();
        assert!(edge.p_det < 1e-8 && edge.moments[0] > 1e8 && edge.near_breakdown);
        assert!(matches!(correction_map(0.7, &[1.0]), Err(Error::CorrectionInvalid { .. })));
    }

    #[test]
    fn uniform_limits() {
        let d = benzene(1);
        let zd = zeno_data(&d).unwrap();
        let tau = 1.0 / 16.0;
        let m0 = perturbed_return_moments(&zd, tau, 0.0, 1, PerturbMode::Uniform).unwrap();
        assert!((m0 - 4.0 * tau).abs() < 1e-14);
        let m1 = perturbed_return_moments(&zd, tau, 1.0, 1, PerturbMode::Uniform).unwrap();
        let tr = zeno_stats(&zd, tau, 1, Framework::Strobo, Problem::Transition, C64::new(0.0, 0.0)).unwrap();
        assert!((m1 / tr.mean() - 1.0).abs() < 0.05);
    }

    #[test]
    fn uniform_is_continuous_and_increasing() {
        let zd = zeno_data(&benzene(1)).unwrap();
        let tau = 1.0 / 16.0;
        let eps: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
        let m1: Vec<f64> = eps
            .iter()
            .map(|&e| perturbed_return_moments(&zd, tau, e, 1, PerturbMode::Uniform).unwrap())
            .collect();
        let m2: Vec<f64> = eps
            .iter()
            .map(|&e| perturbed_return_moments(&zd, tau, e, 2, PerturbMode::Uniform).unwrap())
            .collect();
        assert!(m1.windows(2).all(|w| w[1] >= w[0] - 1e-12 && (w[1] - w[0]).abs() < 0.05 * w[0]));
        assert!(m2.iter().all(|&v| v > 0.0));
        assert!(m2.windows(2).all(|w| (w[1] - w[0]).abs() < 0.05 * w[0].max(w[1])));
    }

    #[test]
    fn perturbed_state_is_normalized() {
        let psi = perturbed_initial_state(&basis_state(6, 0).unwrap(), &basis_state(6, 1).unwrap(), 0.3).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-15);
        assert!(perturbed_initial_state(&basis_state(6, 0).unwrap(), &basis_state(6, 0).unwrap(), 0.3).is_err());
    }

    #[test]
    fn shifted_means() {
        assert!((shifted_protocol_mean(0.1, 0.0, 4).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(shifted_protocol_mean(0.1, 1.0, 4).unwrap(), 0.0);
        assert!((shifted_protocol_mean(0.1, 0.5, 4).unwrap() - 0.125).abs() < 1e-15);
        assert!((shifted_return_moment(2.0, 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn collapse_self_and_too_short() {
        let d = benzene(1);
        let s = spectral_amplitudes(&d, 0.1, 800).unwrap();
        let r = envelope_collapse(&s, &s, Problem::Transition).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        let short = spectral_amplitudes(&d, 0.1, 5).unwrap();
        assert!(matches!(envelope_collapse(&short, &s, Problem::Transition), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn pruning_keeps_endpoints() {
        let pts = vec![(0.0, 5.0), (1.0, 1.0), (2.0, 4.0), (3.0, 2.0), (4.0, 3.0), (5.0, 0.5)];
        assert_eq!(principal_envelope(pts), vec![(0.0, 5.0), (2.0, 4.0), (4.0, 3.0), (5.0, 0.5)]);
    }
}
