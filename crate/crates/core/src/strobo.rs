//! Stroboscopic first-detection amplitudes.
//!
//! Three independent routes produce the same `φ_n`:
//! repeated projected evolution of the full state ([`direct_amplitudes`]),
//! the renewal recursion on spectral sums ([`renewal_amplitudes`]) and the
//! pole decomposition of the generating function ([`pole_amplitudes`]).
//! [`spectral_amplitudes`] runs the projected evolution in the reduced
//! spectral basis, which costs O(N·w) and is what the statistics use.

use nalgebra::DMatrix;

use crate::electro::zeno_data;
use crate::linalg::hermitian_eigen;
use crate::model::{QuantumModel, SpectralChargeData};
use crate::nhh::PoleSet;
use crate::roots::{continue_roots, pairwise_distinct};
use crate::{Error, FirstDetectionStats, Framework, Result, C64};

/// Minimum separation of two phases `e^{−iτE_l}` before τ counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSeries {
    pub tau: f64,
    /// Attempt `n` happens at `(n − shift)·τ`.
    pub shift: f64,
    /// `amplitudes[k]` is `φ_{k+1}`.
    pub amplitudes: Vec<C64>,
}

impl DetectionSeries {
    pub fn new(tau: f64, amplitudes: Vec<C64>) -> Self {
        DetectionSeries { tau, shift: 0.0, amplitudes }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Time of attempt `n` (1-based).
    pub fn time(&self, n: usize) -> f64 {
        (n as f64 - self.shift) * self.tau
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `(t_n, |φ_n|²/τ)`, the quasi-continuous density.
    pub fn local_average(&self) -> Vec<(f64, f64)> {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| (self.time(k + 1), a.norm_sqr() / self.tau))
            .collect()
    }

    pub fn partial_sums(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.amplitudes
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect()
    }
}

fn check_args(tau: f64, n_max: usize) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    if n_max == 0 {
        return Err(Error::Precondition("n_max must be at least 1".into()));
    }
    Ok(())
}

/// `φ_n = ⟨ψd|U[(1−D)U]^{n−1}|ψin⟩` on the full Hilbert space.
pub fn direct_amplitudes(model: &QuantumModel, tau: f64, n_max: usize) -> Result<DetectionSeries> {
    check_args(tau, n_max)?;
    let (vals, vecs) = hermitian_eigen(&model.hamiltonian);
    let n = model.dim();
    let phases = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        vals.iter().map(|&e| C64::new(0.0, -tau * e).exp()),
    ));
    let u = &vecs * phases * vecs.adjoint();
    let mut psi = model.psi_in.clone();
    let mut out = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        psi = &u * psi;
        let phi = model.psi_d.dotc(&psi);
        psi -= &model.psi_d * phi;
        out.push(phi);
    }
    Ok(DetectionSeries::new(tau, out))
}

/// Renewal recursion `φ_n = a_n − Σ_{m<n} b_m φ_{n−m}` with
/// `a_n = Σ p_l q_l e^{−inτE_l}` and `b_m = Σ p_l e^{−imτE_l}`. O(N²).
pub fn renewal_amplitudes(data: &SpectralChargeData, tau: f64, n_max: usize) -> Result<DetectionSeries> {
    check_args(tau, n_max)?;
    let weights = data.weights_in();
    let moment = |n: usize, w: &dyn Fn(usize) -> C64| -> C64 {
        (0..data.w()).map(|l| w(l) * C64::new(0.0, -(n as f64) * tau * data.levels[l]).exp()).sum()
    };
    let a: Vec<C64> = (1..=n_max).map(|n| moment(n, &|l| weights[l])).collect();
    let b: Vec<C64> = (1..=n_max).map(|m| moment(m, &|l| C64::new(data.charges[l], 0.0))).collect();
    Ok(DetectionSeries::new(tau, renewal(&a, &b)))
}

/// Solves `φ_n = a_n − Σ_{m=1}^{n−1} b_m φ_{n−m}` for given moment sequences.
pub fn renewal(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut phi: Vec<C64> = Vec::with_capacity(a.len());
    for n in 0..a.len() {
        let mut acc = a[n];
        for m in 1..=n {
            acc -= b[m - 1] * phi[n - m];
        }
        phi.push(acc);
    }
    phi
}

/// Projected evolution in the reduced spectral basis, one step per call.
///
/// In the basis of normalized projections `P_l ψd`, the detection state is
/// `√p_l`, the initial state is `√p_l q_l` and the propagator is diagonal.
#[derive(Debug, Clone)]
pub struct SpectralEvolver {
    root_p: Vec<f64>,
    step: Vec<C64>,
    state: Vec<C64>,
    started: bool,
    first: Vec<C64>,
}

impl SpectralEvolver {
    /// First attempt at `first_epoch`, then every `tau`.
    pub fn new(data: &SpectralChargeData, tau: f64, first_epoch: f64) -> Self {
        let root_p: Vec<f64> = data.charges.iter().map(|p| p.sqrt()).collect();
        let state = root_p.iter().zip(&data.amplitudes).map(|(r, q)| q * *r).collect();
        SpectralEvolver {
            step: data.phases(tau),
            first: data.phases(first_epoch),
            root_p,
            state,
            started: false,
        }
    }
}

impl Iterator for SpectralEvolver {
    type Item = C64;

    fn next(&mut self) -> Option<C64> {
        let phases = if self.started { &self.step } else { &self.first };
        self.started = true;
        let mut phi = C64::new(0.0, 0.0);
        for (s, c) in self.state.iter_mut().zip(phases) {
            *s *= c;
        }
        for (s, r) in self.state.iter().zip(&self.root_p) {
            phi += s * *r;
        }
        for (s, r) in self.state.iter_mut().zip(&self.root_p) {
            *s -= phi * *r;
        }
        Some(phi)
    }
}

/// Projected evolution in the spectral basis, O(N·w).
pub fn spectral_amplitudes(data: &SpectralChargeData, tau: f64, n_max: usize) -> Result<DetectionSeries> {
    check_args(tau, n_max)?;
    Ok(DetectionSeries::new(tau, SpectralEvolver::new(data, tau, tau).take(n_max).collect()))
}

/// Protocol with the first attempt moved earlier to `(1 − ε)τ`.
pub fn shifted_amplitudes(data: &SpectralChargeData, tau: f64, epsilon: f64, n_max: usize) -> Result<DetectionSeries> {
    check_args(tau, n_max)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Precondition(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let amps = SpectralEvolver::new(data, tau, (1.0 - epsilon) * tau).take(n_max).collect();
    Ok(DetectionSeries { tau, shift: epsilon, amplitudes: amps })
}

/// Smallest distance between two phases `e^{−iτE_l}`.
pub fn min_phase_gap(data: &SpectralChargeData, tau: f64) -> f64 {
    let ph = data.phases(tau);
    let mut gap = f64::INFINITY;
    for i in 0..ph.len() {
        for j in 0..i {
            gap = gap.min((ph[i] - ph[j]).norm());
        }
    }
    gap
}

const NEWTON_MAX_ITER: usize = 80;

/// Newton on `u_φ(e^ζ) = 0` in the log variable.
fn newton_log(data: &SpectralChargeData, phases: &[C64], mut zeta: C64) -> Option<C64> {
    for _ in 0..NEWTON_MAX_ITER {
        let z = zeta.exp();
        let (u, _, du) = data.phi_sums(z, phases);
        let d = du * z;
        if !d.is_finite() || d.norm() == 0.0 {
            return None;
        }
        let mut step = u / d;
        if step.norm() > 0.5 {
            step *= 0.5 / step.norm();
        }
        zeta -= step;
        if !zeta.is_finite() {
            return None;
        }
        if step.norm() < 1e-14 * (1.0 + zeta.norm()) {
            return Some(zeta);
        }
    }
    None
}

fn distinct(zs: &[C64], tol: f64) -> bool {
    pairwise_distinct(zs, tol)
}

/// Roots of `u_φ(z)` from the nonzero eigenvalues `y = 1/z` of
/// `diag(c) − (p∘c) 1ᵀ` with `c_l = e^{−iτE_l}`.
pub fn strobo_roots_by_eigenvalues(data: &SpectralChargeData, tau: f64) -> Vec<C64> {
    let c = data.phases(tau);
    let w = data.w();
    let mut m = DMatrix::<C64>::zeros(w, w);
    for i in 0..w {
        for j in 0..w {
            m[(i, j)] = -c[i] * data.charges[i];
        }
        m[(i, i)] += c[i];
    }
    let (vals, _) = crate::linalg::general_eigen(&m);
    let mut ys = vals;
    ys.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    ys.into_iter().skip(1).map(|y| C64::new(1.0, 0.0) / y).collect()
}

/// Seeds at small τ from the Zeno-limit map `z ≈ exp(λ_l τ² + iω_l τ)`,
/// followed by geometric continuation up to `tau`. Falls back to the
/// eigenvalue route (polished by Newton) if continuation stalls.
pub fn strobo_poles(data: &SpectralChargeData, tau: f64) -> Result<PoleSet> {
    check_args(tau, 1)?;
    let gap = min_phase_gap(data, tau);
    if gap < RESONANCE_TOL {
        return Err(Error::Resonance { tau, gap });
    }
    let w = data.w();
    if w < 2 {
        return Ok(strobo_pole_set(data, tau, Vec::new()));
    }
    let zeta = match continue_strobo(data, tau) {
        Some(z) => z,
        None => {
            log::debug!("strobo continuation stalled at tau={tau}; using eigenvalue seeds");
            let phases = data.phases(tau);
            let mut out = Vec::with_capacity(w - 1);
            for z in strobo_roots_by_eigenvalues(data, tau) {
                let polished = newton_log(data, &phases, z.ln()).unwrap_or(z.ln());
                out.push(polished);
            }
            out
        }
    };
    let zs: Vec<C64> = zeta.iter().map(|z| z.exp()).collect();
    let phases = data.phases(tau);
    for z in &zs {
        let (u, _, _) = data.phi_sums(*z, &phases);
        if !(z.norm() > 1.0) || u.norm() > 1e-8 {
            return Err(Error::PoleSearchFailure(format!(
                "root {z} at tau={tau} has |z|={} and residual {:.3e}",
                z.norm(),
                u.norm()
            )));
        }
    }
    if !distinct(&zs, 1e-8) {
        return Err(Error::PoleSearchFailure(format!("roots collide at tau={tau}")));
    }
    Ok(strobo_pole_set(data, tau, zs))
}

fn continue_strobo(data: &SpectralChargeData, tau: f64) -> Option<Vec<C64>> {
    let zd = zeno_data(data).ok()?;
    let tau0 = tau.min(0.02 / (1.0 + data.spectral_width()));
    let ph0 = data.phases(tau0);
    let seeds: Option<Vec<C64>> = zd
        .omega
        .iter()
        .zip(&zd.lambda)
        .map(|(&om, &lam)| newton_log(data, &ph0, C64::new(lam * tau0 * tau0, om * tau0)))
        .collect();
    let seeds = seeds?;
    let valid = |r: &[C64]| r.iter().all(|z| z.re > 0.0) && distinct(&r.iter().map(|z| z.exp()).collect::<Vec<_>>(), 1e-8);
    if !valid(&seeds) {
        return None;
    }
    continue_roots(
        tau0,
        tau,
        seeds,
        |t, g| newton_log(data, &data.phases(t), g),
        valid,
        |a, b, z| C64::new(z.re * (b / a).powi(2), z.im * b / a),
    )
}

fn strobo_pole_set(data: &SpectralChargeData, tau: f64, zs: Vec<C64>) -> PoleSet {
    let phases = data.phases(tau);
    let mut v = Vec::with_capacity(zs.len());
    let mut du = Vec::with_capacity(zs.len());
    let mut residual: f64 = 0.0;
    for z in &zs {
        let (u0, v0, d0) = data.phi_sums(*z, &phases);
        residual = residual.max(u0.norm());
        v.push(v0);
        du.push(d0);
    }
    PoleSet {
        framework: Framework::Strobo,
        tau,
        poles: zs,
        v_at_pole: v,
        u_prime_at_pole: du,
        overlap: data.overlap,
        direct_term: data.overlap / data.phases(-tau).iter().zip(&data.charges).map(|(c, p)| c * *p).sum::<C64>(),
        residual,
    }
}

/// `φ_n = −Σ_l [(v_φ(z_l) − ⟨ψd|ψin⟩)/u_φ'(z_l)] z_l^{−n−1}`, plus at `n = 1`
/// the polynomial part `⟨ψd|ψin⟩ / Σ p_l e^{iτE_l}` of the generating
/// function, which is nonzero whenever the overlap is.
pub fn pole_amplitudes(poles: &PoleSet, n: usize) -> C64 {
    assert!(n >= 1, "attempt index starts at 1");
    let mut acc = C64::new(0.0, 0.0);
    for l in 0..poles.poles.len() {
        let z = poles.poles[l];
        acc -= (poles.v_at_pole[l] - poles.overlap) / poles.u_prime_at_pole[l] * z.powi(-(n as i32) - 1);
    }
    if n == 1 {
        acc += poles.direct_term;
    }
    acc
}

pub fn pole_series(poles: &PoleSet, n_max: usize) -> DetectionSeries {
    DetectionSeries::new(poles.tau, (1..=n_max).map(|n| pole_amplitudes(poles, n)).collect())
}

/// Truncated sums `P ≈ Σ|φ_n|²` and `⟨T^m⟩ ≈ Σ t_n^m |φ_n|² / P`.
///
/// `tail_estimate` is the largest `|φ_n|²` among the last `max(1, N/100)`
/// terms, so that a single term sitting on an interference node does not
/// pass for convergence.
pub fn stats(series: &DetectionSeries, m_max: usize) -> Result<FirstDetectionStats> {
    if series.is_empty() {
        return Err(Error::Precondition("empty detection series".into()));
    }
    let mut acc = MomentAccumulator::new(m_max);
    for (k, a) in series.amplitudes.iter().enumerate() {
        acc.push(series.time(k + 1), a.norm_sqr());
    }
    let n = series.len();
    let window = (n / 100).max(1);
    let tail = series.amplitudes[n - window..].iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
    acc.finish(n, tail)
}

#[derive(Debug, Clone)]
pub(crate) struct MomentAccumulator {
    p: f64,
    raw: Vec<f64>,
}

impl MomentAccumulator {
    pub(crate) fn new(m_max: usize) -> Self {
        MomentAccumulator { p: 0.0, raw: vec![0.0; m_max] }
    }

    pub(crate) fn push(&mut self, t: f64, prob: f64) {
        self.p += prob;
        let mut tm = 1.0;
        for r in self.raw.iter_mut() {
            tm *= t;
            *r += tm * prob;
        }
    }

    pub(crate) fn finish(self, n: usize, tail: f64) -> Result<FirstDetectionStats> {
        if self.p < 1e-12 {
            return Err(Error::UndefinedMoments { p_det: self.p });
        }
        Ok(FirstDetectionStats {
            p_det: self.p,
            moments: self.raw.iter().map(|r| r / self.p).collect(),
            truncation_n: n,
            tail_estimate: tail,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Truncation {
    pub n_start: usize,
    pub tail_tol: f64,
    pub n_cap: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { n_start: 1024, tail_tol: 1e-10, n_cap: 1_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergedStats {
    pub stats: FirstDetectionStats,
    pub converged: bool,
    /// `min_l |z_l|`; `|φ_n|` decays like this to the power `−n`.
    pub slowest_pole_modulus: Option<f64>,
}

/// Statistics with N doubled until the tail estimate drops below tolerance.
pub fn converged_stats(
    data: &SpectralChargeData,
    tau: f64,
    first_epoch: f64,
    m_max: usize,
    trunc: Truncation,
) -> Result<ConvergedStats> {
    check_args(tau, 1)?;
    let shift = 1.0 - first_epoch / tau;
    let mut evolver = SpectralEvolver::new(data, tau, first_epoch);
    let mut acc = MomentAccumulator::new(m_max);
    let mut n = 0usize;
    let mut target = trunc.n_start.max(1);
    let mut window: Vec<f64> = Vec::new();
    loop {
        let window_len = (target / 100).max(1);
        window.clear();
        while n < target {
            let a = evolver.next().expect("evolver is infinite");
            n += 1;
            let prob = a.norm_sqr();
            acc.push((n as f64 - shift) * tau, prob);
            if n + window_len > target {
                window.push(prob);
            }
        }
        let tail = window.iter().cloned().fold(0.0, f64::max);
        if tail < trunc.tail_tol || target >= trunc.n_cap {
            let converged = tail < trunc.tail_tol;
            if !converged {
                log::warn!("truncation cap {} reached at tau={tau} with tail {tail:.3e}", trunc.n_cap);
            }
            let slowest = strobo_poles(data, tau)
                .ok()
                .and_then(|p| p.poles.iter().map(|z| z.norm()).reduce(f64::min));
            return Ok(ConvergedStats { stats: acc.finish(n, tail)?, converged, slowest_pole_modulus: slowest });
        }
        target = (target * 2).min(trunc.n_cap);
    }
}
