//! Electrostatic picture of the poles and the Zeno-limit charge data.
//!
//! Point charges `p_l` sit at `e^{−iτE_l}` (strobo) or at `iE_l` in a constant
//! field `τ/2` (nhh). Stationary points of the logarithmic potential map to
//! poles: `𝔷 = 1/(x+iy)` for strobo, `𝔰 = x − iy` for nhh.

use crate::model::SpectralChargeData;
use crate::nhh::PoleSet;
use crate::{factorial, Error, FirstDetectionStats, Framework, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct ZenoData {
    /// Absorption frequencies, one per gap, ascending.
    pub omega: Vec<f64>,
    /// Absorption rates `λ_l > 0`.
    pub lambda: Vec<f64>,
    /// Transition times `θ_l = i v_Ψ(−iω_l) = Σ p q/(E − ω_l)`.
    pub theta: Vec<C64>,
    pub omega0: f64,
    /// Infinite when ψd is an eigenstate.
    pub tau_z: f64,
}

impl ZenoData {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Strobo,
    Nhh,
}

/// Value and gradient of a 2D potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSample {
    pub value: f64,
    pub grad: [f64; 2],
}

fn charge_positions(data: &SpectralChargeData, tau: f64, kind: PotentialKind) -> Vec<(f64, f64)> {
    match kind {
        PotentialKind::Strobo => data.levels.iter().map(|&e| ((tau * e).cos(), -(tau * e).sin())).collect(),
        PotentialKind::Nhh => data.levels.iter().map(|&e| (0.0, e)).collect(),
    }
}

fn potential(data: &SpectralChargeData, tau: f64, kind: PotentialKind, x: f64, y: f64) -> Result<PotentialSample> {
    let field = if kind == PotentialKind::Nhh { tau / 2.0 } else { 0.0 };
    let mut value = field * x;
    let mut grad = [field, 0.0];
    for ((cx, cy), p) in charge_positions(data, tau, kind).into_iter().zip(&data.charges) {
        let (dx, dy) = (x - cx, y - cy);
        let r2 = dx * dx + dy * dy;
        if r2 < 1e-28 {
            return Err(Error::SingularEvaluation(format!("({x}, {y}) sits on a charge")));
        }
        value += 0.5 * p * r2.ln();
        grad[0] += p * dx / r2;
        grad[1] += p * dy / r2;
    }
    Ok(PotentialSample { value, grad })
}

/// `V_φ = Σ p_l ln|x + iy − e^{−iτE_l}|`.
pub fn potential_strobo(data: &SpectralChargeData, tau: f64, x: f64, y: f64) -> Result<PotentialSample> {
    potential(data, tau, PotentialKind::Strobo, x, y)
}

/// `V_Ψ = (τ/2)x + Σ p_l ln|x + i(y − E_l)|`.
pub fn potential_nhh(data: &SpectralChargeData, tau: f64, x: f64, y: f64) -> Result<PotentialSample> {
    potential(data, tau, PotentialKind::Nhh, x, y)
}

/// The holomorphic field `G(ζ) = c + Σ p/(ζ − ζ_l)` and `G'`; the gradient is
/// `(Re G, −Im G)`.
fn field(data: &SpectralChargeData, tau: f64, kind: PotentialKind, zeta: C64) -> (C64, C64) {
    let field = if kind == PotentialKind::Nhh { tau / 2.0 } else { 0.0 };
    let mut g = C64::new(field, 0.0);
    let mut dg = C64::new(0.0, 0.0);
    for ((cx, cy), p) in charge_positions(data, tau, kind).into_iter().zip(&data.charges) {
        let inv = C64::new(1.0, 0.0) / (zeta - C64::new(cx, cy));
        g += inv * p;
        dg -= inv * inv * p;
    }
    (g, dg)
}

/// Stationary point of the potential near `seed` by Newton on the field.
pub fn stationary_point(data: &SpectralChargeData, tau: f64, kind: PotentialKind, seed: (f64, f64)) -> Result<(f64, f64)> {
    let mut zeta = C64::new(seed.0, seed.1);
    for _ in 0..100 {
        let (g, dg) = field(data, tau, kind, zeta);
        let step = g / dg;
        zeta -= step;
        if !zeta.is_finite() {
            break;
        }
        if step.norm() < 1e-15 * (1.0 + zeta.norm()) {
            return Ok((zeta.re, zeta.im));
        }
    }
    Err(Error::PoleSearchFailure(format!("no stationary point near {seed:?}")))
}

/// Stationary points seeded from the Zeno-limit pole positions.
pub fn stationary_points(data: &SpectralChargeData, tau: f64, kind: PotentialKind) -> Result<Vec<(f64, f64)>> {
    let zd = zeno_data(data)?;
    zd.omega
        .iter()
        .zip(&zd.lambda)
        .map(|(&om, &lam)| {
            let seed = match kind {
                PotentialKind::Strobo => C64::new(-lam * tau * tau, -om * tau).exp(),
                PotentialKind::Nhh => C64::new(-lam * tau, om),
            };
            stationary_point(data, tau, kind, (seed.re, seed.im))
        })
        .collect()
}

/// Maps a stationary point to the pole it represents.
pub fn point_to_pole(kind: PotentialKind, (x, y): (f64, f64)) -> C64 {
    match kind {
        PotentialKind::Strobo => C64::new(1.0, 0.0) / C64::new(x, y),
        PotentialKind::Nhh => C64::new(x, -y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Potential on the tensor grid `xs × ys`; points on a charge are skipped.
pub fn potential_grid(data: &SpectralChargeData, tau: f64, kind: PotentialKind, xs: &[f64], ys: &[f64]) -> Vec<GridRow> {
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in ys {
        for &x in xs {
            if let Ok(s) = potential(data, tau, kind, x, y) {
                out.push(GridRow { x, y, value: s.value, dx: s.grad[0], dy: s.grad[1] });
            }
        }
    }
    out
}

fn resolvent_real(data: &SpectralChargeData, omega: f64) -> (f64, f64) {
    let mut f = 0.0;
    let mut df = 0.0;
    for (&e, &p) in data.levels.iter().zip(&data.charges) {
        let d = omega - e;
        f += p / d;
        df -= p / (d * d);
    }
    (f, df)
}

/// Zeros of `Σ p_l/(ω − E_l)`, one inside each gap.
///
/// The sum decreases monotonically from +∞ to −∞ across a gap, so bisection
/// always converges; Newton polishes the bracketed result.
pub fn absorption_frequencies(data: &SpectralChargeData) -> Vec<f64> {
    data.levels
        .windows(2)
        .map(|gap| {
            let (mut lo, mut hi) = (gap[0], gap[1]);
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi || hi - lo <= 1e-12 * (1.0 + mid.abs()) {
                    break;
                }
                if resolvent_real(data, mid).0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mut omega = 0.5 * (lo + hi);
            for _ in 0..5 {
                let (f, df) = resolvent_real(data, omega);
                let next = omega - f / df;
                if !(next > gap[0] && next < gap[1]) {
                    break;
                }
                let done = (next - omega).abs() <= 1e-14 * (1.0 + omega.abs());
                omega = next;
                if done {
                    break;
                }
            }
            omega
        })
        .collect()
}

/// Absorption frequencies, rates, transition times and fast-mode scales.
pub fn zeno_data(data: &SpectralChargeData) -> Result<ZenoData> {
    let omega = absorption_frequencies(data);
    let lambda = omega
        .iter()
        .map(|&om| {
            let s: f64 = data.levels.iter().zip(&data.charges).map(|(e, p)| p / ((e - om) * (e - om))).sum();
            1.0 / (2.0 * s)
        })
        .collect();
    let theta = omega
        .iter()
        .map(|&om| data.weights_in().iter().zip(&data.levels).map(|(pq, e)| pq / (e - om)).sum())
        .collect();
    let (omega0, var) = data.energy_moments();
    let tau_z = if var > 0.0 { 1.0 / var.sqrt() } else { f64::INFINITY };
    Ok(ZenoData { omega, lambda, theta, omega0, tau_z })
}

/// Weak-dissipation poles `−2p_l/τ − iE_l` and their statistics.
///
/// At these poles `v_Ψ = −τq_l/2` and `u_Ψ' = −τ²/(4p_l)` to leading order,
/// so the residues are `p_l q_l`.
pub fn lazy_limit(data: &SpectralChargeData, tau: f64, m_max: usize) -> Result<(PoleSet, FirstDetectionStats)> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    let gap = data.levels.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if tau * gap < 10.0 {
        log::warn!("lazy limit assumes tau={tau} well above 1/gap = {}", 1.0 / gap);
    }
    let poles: Vec<C64> = data.levels.iter().zip(&data.charges).map(|(&e, &p)| C64::new(-2.0 * p / tau, -e)).collect();
    let set = PoleSet {
        framework: Framework::Nhh,
        tau,
        v_at_pole: data.amplitudes.iter().map(|q| q * (-tau / 2.0)).collect(),
        u_prime_at_pole: data.charges.iter().map(|p| C64::new(-tau * tau / (4.0 * p), 0.0)).collect(),
        poles,
        overlap: data.overlap,
        direct_term: C64::new(0.0, 0.0),
        residual: 0.0,
    };
    let weights: Vec<f64> = data.charges.iter().zip(&data.amplitudes).map(|(p, q)| p * q.norm_sqr()).collect();
    let p_det: f64 = weights.iter().sum();
    if !(p_det >= 1e-12) {
        return Err(Error::UndefinedMoments { p_det });
    }
    let moments = (1..=m_max)
        .map(|m| {
            let s: f64 = weights.iter().zip(&data.charges).map(|(wt, p)| wt / p.powi(m as i32)).sum();
            factorial(m) * (tau / 4.0).powi(m as i32) * s / p_det
        })
        .collect();
    Ok((set, FirstDetectionStats { p_det, moments, truncation_n: 0, tail_estimate: 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{basis_state, build_gue, build_ring};
    use crate::nhh::{nhh_poles, nhh_stats};
    use crate::strobo::strobo_poles;
    use rand::{Rng, SeedableRng};

    fn benzene(site: usize) -> SpectralChargeData {
        let m = build_ring(6, 1.0).unwrap().with_psi_in(basis_state(6, site).unwrap()).unwrap();
        SpectralChargeData::from_model(&m).unwrap()
    }

    fn two_level() -> SpectralChargeData {
        SpectralChargeData::from_parts(vec![-1.0, 1.0], vec![0.5, 0.5], vec![C64::new(1.0, 0.0); 2]).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let d = benzene(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..50 {
            let (x, y) = (rng.random_range(-2.0..2.0), rng.random_range(-2.5..2.5));
            for kind in [PotentialKind::Strobo, PotentialKind::Nhh] {
                let s = potential(&d, 0.3, kind, x, y).unwrap();
                let fx = (potential(&d, 0.3, kind, x + h, y).unwrap().value
                    - potential(&d, 0.3, kind, x - h, y).unwrap().value)
                    / (2.0 * h);
                let fy = (potential(&d, 0.3, kind, x, y + h).unwrap().value
                    - potential(&d, 0.3, kind, x, y - h).unwrap().value)
                    / (2.0 * h);
                let scale = 1.0 + s.grad[0].abs().max(s.grad[1].abs());
                assert!((fx - s.grad[0]).abs() < 1e-6 * scale && (fy - s.grad[1]).abs() < 1e-6 * scale);
            }
        }
    }

    #[test]
    fn singular_at_charge() {
        let d = two_level();
        let tau = 0.4;
        assert!(matches!(
            potential_strobo(&d, tau, tau.cos(), tau.sin()),
            Err(Error::SingularEvaluation(_))
        ));
        assert!(potential_nhh(&d, tau, 0.0, 1.0).is_err());
    }

    #[test]
    fn stationary_points_are_poles() {
        let d = benzene(0);
        let tau = 0.3;
        let strobo = strobo_poles(&d, tau).unwrap();
        for pt in stationary_points(&d, tau, PotentialKind::Strobo).unwrap() {
            let z = point_to_pole(PotentialKind::Strobo, pt);
            assert!((z * d.u_phi(z, tau).unwrap()).norm() < 1e-8);
            let best = strobo.poles.iter().map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8);
        }
        let nhh = nhh_poles(&d, tau).unwrap();
        for pt in stationary_points(&d, tau, PotentialKind::Nhh).unwrap() {
            let s = point_to_pole(PotentialKind::Nhh, pt);
            let best = nhh.poles.iter().map(|p| (p - s).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8);
        }
    }

    #[test]
    fn symmetric_two_charges() {
        let tau = 0.7;
        let (x, y) = stationary_point(&two_level(), tau, PotentialKind::Strobo, (0.9, 0.1)).unwrap();
        assert!((x - tau.cos()).abs() < 1e-12 && y.abs() < 1e-12);
        let nhh = stationary_points(&two_level(), 0.0, PotentialKind::Nhh).unwrap();
        assert!(nhh[0].0.abs() < 1e-12 && nhh[0].1.abs() < 1e-12);
    }

    #[test]
    fn nhh_stationary_shift() {
        let d = benzene(0);
        let zd = zeno_data(&d).unwrap();
        let tau = 1e-3;
        let pts = stationary_points(&d, tau, PotentialKind::Nhh).unwrap();
        for ((x, y), (lam, om)) in pts.iter().zip(zd.lambda.iter().zip(&zd.omega)) {
            assert!((x / (-lam * tau) - 1.0).abs() < 1e-2);
            assert!((y - om).abs() < 1e-4);
        }
    }

    #[test]
    fn benzene_zeno_data() {
        let zd = zeno_data(&benzene(0)).unwrap();
        assert_eq!(zd.omega.len(), 3);
        assert!(zd.omega[1].abs() < 1e-14);
        assert!((zd.lambda[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((zd.omega0).abs() < 1e-12 && (zd.tau_z - 0.5f64.sqrt()).abs() < 1e-12);
        let d = benzene(0);
        for (om, lam) in zd.omega.iter().zip(&zd.lambda) {
            let du = d.u_psi_prime(C64::new(0.0, -om)).unwrap();
            assert!((du * lam - 0.5).norm() < 1e-10);
        }
        // For the return problem θ = i v_Ψ(−iω) = i u_Ψ(−iω) = 0.
        assert!(zd.theta.iter().all(|t| t.norm() < 1e-10));
    }

    #[test]
    fn two_level_frequency() {
        assert_eq!(absorption_frequencies(&two_level()), vec![0.0]);
        let single = SpectralChargeData::from_parts(vec![0.3], vec![1.0], vec![C64::new(1.0, 0.0)]).unwrap();
        assert!(absorption_frequencies(&single).is_empty());
    }

    #[test]
    fn interlacing_on_gue() {
        for seed in 0..20 {
            let m = build_gue(12, seed, 1.0).unwrap();
            let d = SpectralChargeData::from_model(&m).unwrap();
            let om = absorption_frequencies(&d);
            for (l, w) in om.iter().enumerate() {
                assert!(d.levels[l] < *w && *w < d.levels[l + 1]);
                assert!(resolvent_real(&d, *w).0.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lazy_limit_return() {
        let d = benzene(0);
        let tau = 100.0;
        let (_, s) = lazy_limit(&d, tau, 1).unwrap();
        assert!((s.p_det - 1.0).abs() < 1e-14);
        assert!((s.mean() - tau).abs() < 1e-12);
        let full = nhh_stats(&nhh_poles(&d, tau).unwrap(), 1).unwrap();
        assert!((full.p_det / s.p_det - 1.0).abs() < 0.01);
    }

    #[test]
    fn lazy_limit_single_level() {
        let d = SpectralChargeData::from_parts(
            vec![-1.0, 1.0],
            vec![0.25, 0.75],
            vec![C64::new(0.0, 0.0), C64::new(0.8, 0.2)],
        )
        .unwrap();
        let (_, s) = lazy_limit(&d, 50.0, 1).unwrap();
        assert!((s.p_det - 0.75 * 0.68).abs() < 1e-14);
    }
}
