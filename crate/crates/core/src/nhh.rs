//! Non-Hermitian (optical potential) detection with `Γ = 2/τ`.
//!
//! The wave function `Ψ(t) = ⟨ψd|ψ(t)⟩` follows from
//! `i ∂t ψ = (H − iΓ|ψd⟩⟨ψd|) ψ` and the detection density is `2Γ|Ψ(t)|²`.

use nalgebra::{DMatrix, DVector};

use crate::electro::zeno_data;
use crate::linalg::{general_eigen, hermitian_eigen, Propagator};
use crate::model::{QuantumModel, SpectralChargeData};
use crate::roots::{continue_roots, pairwise_distinct};
use crate::{factorial, Error, FirstDetectionStats, Framework, Result, C64};

/// Poles and residue ingredients of either generating function.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet {
    pub framework: Framework,
    pub tau: f64,
    /// `𝔰_l` (nhh) or `𝔷_l` (strobo).
    pub poles: Vec<C64>,
    pub v_at_pole: Vec<C64>,
    pub u_prime_at_pole: Vec<C64>,
    pub overlap: C64,
    /// Strobo only: the extra `n = 1` term from the polynomial part.
    pub direct_term: C64,
    /// Largest `|u|` of the defining equation at the returned poles.
    pub residual: f64,
}

pub fn gamma_of(tau: f64) -> f64 {
    2.0 / tau
}

#[derive(Debug, Clone)]
pub struct NhhTrajectory {
    pub times: Vec<f64>,
    pub psi: Vec<C64>,
    pub survival: Vec<f64>,
    pub gamma: f64,
    /// Whether the eigen-decomposition path was used.
    pub modal: bool,
}

impl NhhTrajectory {
    /// `F^Ψ(t) = 2Γ|Ψ(t)|²`.
    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|p| 2.0 * self.gamma * p.norm_sqr()).collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(t >= &0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("time grid must be ascending and nonnegative".into()));
    }
    Ok(())
}

pub fn nhh_generator(model: &QuantumModel, gamma: f64) -> DMatrix<C64> {
    &model.hamiltonian - (&model.psi_d * model.psi_d.adjoint()) * C64::new(0.0, gamma)
}

/// Evolution with `Γ = 2/τ`.
pub fn evolve_nhh(model: &QuantumModel, tau: f64, grid: &[f64]) -> Result<NhhTrajectory> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    evolve_nhh_gamma(model, gamma_of(tau), tau / 20.0, grid)
}

/// Evolution with an explicit rate `Γ`; `fallback_step` is used only when the
/// non-Hermitian generator is too close to defective.
pub fn evolve_nhh_gamma(model: &QuantumModel, gamma: f64, fallback_step: f64, grid: &[f64]) -> Result<NhhTrajectory> {
    check_grid(grid)?;
    let prop = Propagator::new(&nhh_generator(model, gamma), fallback_step);
    let states = prop.evolve(&model.psi_in, grid);
    Ok(NhhTrajectory {
        times: grid.to_vec(),
        psi: states.iter().map(|s| model.psi_d.dotc(s)).collect(),
        survival: states.iter().map(|s| s.norm_squared()).collect(),
        gamma,
        modal: prop.is_modal(),
    })
}

const NEWTON_MAX_ITER: usize = 80;

/// Newton on `τ/2 + u_Ψ(s) = 0`, steps capped at half the distance to the
/// nearest level.
fn newton_nhh(data: &SpectralChargeData, tau: f64, mut s: C64) -> Option<C64> {
    for _ in 0..NEWTON_MAX_ITER {
        let f = data.u_psi_raw(s) + tau / 2.0;
        let d = data.u_psi_prime_raw(s);
        if !d.is_finite() || d.norm() == 0.0 {
            return None;
        }
        let mut step = f / d;
        let room = data
            .levels
            .iter()
            .map(|&e| (s + C64::new(0.0, e)).norm())
            .fold(f64::INFINITY, f64::min);
        if step.norm() > 0.5 * room {
            step *= 0.5 * room / step.norm();
        }
        s -= step;
        if !s.is_finite() {
            return None;
        }
        if step.norm() < 1e-14 * (1.0 + s.norm()) {
            return Some(s);
        }
    }
    None
}

/// Eigenvalues of `diag(−iE) − Γ √p √pᵀ`, the reduced generator.
pub fn nhh_roots_by_eigenvalues(data: &SpectralChargeData, tau: f64) -> Vec<C64> {
    let w = data.w();
    let gamma = gamma_of(tau);
    let root_p: Vec<f64> = data.charges.iter().map(|p| p.sqrt()).collect();
    let mut m = DMatrix::<C64>::zeros(w, w);
    for i in 0..w {
        for j in 0..w {
            m[(i, j)] = C64::new(-gamma * root_p[i] * root_p[j], 0.0);
        }
        m[(i, i)] += C64::new(0.0, -data.levels[i]);
    }
    general_eigen(&m).0
}

fn zeno_seeds(data: &SpectralChargeData, tau: f64) -> Option<Vec<C64>> {
    let (omega0, _) = data.energy_moments();
    let mut seeds = vec![C64::new(-2.0 / tau, -omega0)];
    if data.w() > 1 {
        let zd = zeno_data(data).ok()?;
        seeds.extend(zd.omega.iter().zip(&zd.lambda).map(|(&om, &lam)| C64::new(-lam * tau, -om)));
    }
    Some(seeds)
}

fn lazy_seeds(data: &SpectralChargeData, tau: f64) -> Vec<C64> {
    data.levels
        .iter()
        .zip(&data.charges)
        .map(|(&e, &p)| C64::new(-2.0 * p / tau, -e))
        .collect()
}

/// Smallest gap between contributing levels.
fn min_gap(data: &SpectralChargeData) -> f64 {
    data.levels.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn continue_nhh(data: &SpectralChargeData, tau: f64) -> Option<Vec<C64>> {
    let small = 0.02 / (1.0 + data.spectral_width());
    let large = if data.w() > 1 { 200.0 / min_gap(data) } else { small };
    let valid = |r: &[C64]| r.iter().all(|s| s.re < 0.0) && pairwise_distinct(r, 1e-8);
    let solve = |t: f64, g: C64| newton_nhh(data, t, g);
    let (start, seeds) = if tau <= small || (tau < (small * large).sqrt()) {
        let t0 = tau.min(small);
        (t0, zeno_seeds(data, t0)?)
    } else {
        let t0 = tau.max(large);
        (t0, lazy_seeds(data, t0))
    };
    let polished: Vec<C64> = seeds.iter().map(|&g| solve(start, g)).collect::<Option<_>>()?;
    if !valid(&polished) {
        return None;
    }
    // Zeno side: slow poles move like τ, the fast pole like 1/τ.
    continue_roots(start, tau, polished, solve, valid, |a, b, s| {
        if s.re.abs() > 1.0 / a {
            C64::new(s.re * a / b, s.im)
        } else {
            C64::new(s.re * b / a, s.im)
        }
    })
}

/// All `w` roots of `1 + (2/τ) u_Ψ(s) = 0`.
///
/// Small τ starts from the Zeno seeds (slow poles `−λ_l τ − iω_l`, fast pole
/// `−2/τ − iω0`), large τ from the lazy seeds `−2p_l/τ − iE_l`; continuation
/// in τ bridges the two. Stalled continuation falls back to the eigenvalues
/// of the reduced generator, polished by Newton.
pub fn nhh_poles(data: &SpectralChargeData, tau: f64) -> Result<PoleSet> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    let poles = match continue_nhh(data, tau) {
        Some(p) => p,
        None => {
            log::debug!("nhh continuation stalled at tau={tau}; using eigenvalue seeds");
            nhh_roots_by_eigenvalues(data, tau)
                .into_iter()
                .map(|g| newton_nhh(data, tau, g).unwrap_or(g))
                .collect()
        }
    };
    let mut residual: f64 = 0.0;
    for s in &poles {
        let f = (data.u_psi_raw(*s) + tau / 2.0).norm();
        residual = residual.max(f / (1.0 + tau));
        if !(s.re < 0.0) {
            return Err(Error::PoleSearchFailure(format!("pole {s} at tau={tau} is not in the left half plane")));
        }
    }
    if residual > 1e-8 {
        return Err(Error::PoleSearchFailure(format!("pole residual {residual:.3e} at tau={tau}")));
    }
    if !pairwise_distinct(&poles, 1e-10) {
        return Err(Error::PoleSearchFailure(format!(
            "poles collide at tau={tau}; the generator is close to an exceptional point"
        )));
    }
    let mut sorted = poles;
    sorted.sort_by(|a, b| b.im.total_cmp(&a.im));
    Ok(PoleSet {
        framework: Framework::Nhh,
        tau,
        v_at_pole: sorted.iter().map(|&s| data.v_psi_raw(s)).collect(),
        u_prime_at_pole: sorted.iter().map(|&s| data.u_psi_prime_raw(s)).collect(),
        poles: sorted,
        overlap: data.overlap,
        direct_term: C64::new(0.0, 0.0),
        residual,
    })
}

/// Residue amplitudes `(τ/2) v_Ψ(𝔰_l)/u_Ψ'(𝔰_l)`.
pub fn residues(poles: &PoleSet) -> Vec<C64> {
    poles
        .v_at_pole
        .iter()
        .zip(&poles.u_prime_at_pole)
        .map(|(v, du)| v / du * (poles.tau / 2.0))
        .collect()
}

/// `Ψ(t) = (τ/2) Σ_l [v_Ψ(𝔰_l)/u_Ψ'(𝔰_l)] e^{t𝔰_l}`.
pub fn pole_wavefunction(poles: &PoleSet, t: f64) -> C64 {
    residues(poles).iter().zip(&poles.poles).map(|(a, s)| a * (s * t).exp()).sum()
}

/// Pole double sums for `P_det` and the conditional moments.
///
/// With `a_l` the residues and `σ = 𝔰_l + 𝔰*_l'`,
/// `∫ t^m a_l a*_l' e^{σt} dt = a_l a*_l' (−1)^{m+1} m!/σ^{m+1}`.
pub fn nhh_stats(poles: &PoleSet, m_max: usize) -> Result<FirstDetectionStats> {
    let a = residues(poles);
    let gamma = gamma_of(poles.tau);
    let mut raw = vec![0.0; m_max + 1];
    for (al, sl) in a.iter().zip(&poles.poles) {
        for (ak, sk) in a.iter().zip(&poles.poles) {
            let sigma = sl + sk.conj();
            let weight = al * ak.conj();
            let mut pow = C64::new(-1.0, 0.0) / sigma;
            for (m, r) in raw.iter_mut().enumerate() {
                *r += (weight * pow).re * factorial(m);
                pow /= -sigma;
            }
        }
    }
    let p_det = 2.0 * gamma * raw[0];
    if !(p_det >= 1e-12) {
        return Err(Error::UndefinedMoments { p_det });
    }
    Ok(FirstDetectionStats {
        p_det,
        moments: raw[1..].iter().map(|r| 2.0 * gamma * r / p_det).collect(),
        truncation_n: 0,
        tail_estimate: 0.0,
    })
}

#[derive(Debug, Clone)]
pub struct FastMode {
    /// `−iΓ + ω0`, the leading-order eigenvalue of `H − iΓD`.
    pub eigenvalue: C64,
    /// `[1 + (i/Γ)(1−D)H]|ψd⟩`.
    pub vector: DVector<C64>,
    /// Exact eigenvalue of `H − iΓD` closest to the leading-order one.
    pub exact_eigenvalue: C64,
    /// `⟨ψd|H(1−D)H|ψd⟩/Γ²`.
    pub survival_psi: f64,
    /// `τ² ‖(1−D)H|ψd⟩‖²`.
    pub survival_phi: f64,
}

pub fn fast_mode(model: &QuantumModel, tau: f64) -> Result<FastMode> {
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    let gamma = gamma_of(tau);
    let (vals, _) = hermitian_eigen(&model.hamiltonian);
    let width = vals[vals.len() - 1] - vals[0];
    if gamma < 10.0 * width {
        log::warn!("fast-mode formulas assume Γ={gamma} far above the spectral width {width}");
    }
    let h_d = &model.hamiltonian * &model.psi_d;
    let omega0 = model.psi_d.dotc(&h_d).re;
    let leak = &h_d - &model.psi_d * C64::new(omega0, 0.0);
    let var = leak.norm_squared();
    let vector = &model.psi_d + &leak * C64::new(0.0, 1.0 / gamma);
    let eigenvalue = C64::new(omega0, -gamma);
    let exact_eigenvalue = general_eigen(&nhh_generator(model, gamma))
        .0
        .into_iter()
        .min_by(|a, b| (a - eigenvalue).norm().total_cmp(&(b - eigenvalue).norm()))
        .expect("nonempty spectrum");
    Ok(FastMode {
        eigenvalue,
        vector,
        exact_eigenvalue,
        survival_psi: var / (gamma * gamma),
        survival_phi: tau * tau * var,
    })
}

/// Slow dynamics on the complement of ψd after eliminating the fast mode.
#[derive(Debug, Clone)]
pub struct AdiabaticModel {
    /// Orthonormal columns spanning the complement of ψd.
    pub basis: DMatrix<C64>,
    /// `H_Z − i(τ/2) H_1` in that basis.
    pub h_eff: DMatrix<C64>,
    pub h_zeno: DMatrix<C64>,
    pub h_one: DMatrix<C64>,
    pub psi_in: DVector<C64>,
    pub tau: f64,
}

impl AdiabaticModel {
    pub fn survival(&self, grid: &[f64]) -> Result<Vec<f64>> {
        check_grid(grid)?;
        let prop = Propagator::new(&self.h_eff, self.tau / 20.0);
        Ok(prop.evolve(&self.psi_in, grid).iter().map(|s| s.norm_squared()).collect())
    }
}

/// `H_eff = H_Z − i(τ/2)H_1` with `H_Z = QHQ`, `H_1 = QHDHQ`, `Q = 1 − D`.
pub fn adiabatic_hamiltonian(model: &QuantumModel, tau: f64) -> Result<AdiabaticModel> {
    let ov = model.overlap().norm();
    if ov > 1e-10 {
        return Err(Error::Precondition(format!("initial state overlaps the detector by {ov:.3e}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("tau must be positive, got {tau}")));
    }
    let n = model.dim();
    let proj = &model.psi_d * model.psi_d.adjoint();
    let q = DMatrix::<C64>::identity(n, n) - &proj;
    let (vals, vecs) = hermitian_eigen(&q);
    // Q has eigenvalue 0 once and 1 otherwise; ascending order puts ψd first.
    debug_assert!(vals[0].abs() < 1e-8);
    let basis = vecs.columns(1, n - 1).into_owned();
    let h = &model.hamiltonian;
    let h_zeno = basis.adjoint() * h * &basis;
    let h_one = basis.adjoint() * h * &proj * h * &basis;
    let h_eff = &h_zeno - &h_one * C64::new(0.0, tau / 2.0);
    let psi_in = basis.adjoint() * &model.psi_in;
    Ok(AdiabaticModel { basis, h_eff, h_zeno, h_one, psi_in, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{basis_state, build_gue, build_ring};
    use crate::quad::Adaptive;

    fn benzene(site: usize) -> QuantumModel {
        build_ring(6, 1.0).unwrap().with_psi_in(basis_state(6, site).unwrap()).unwrap()
    }

    fn grid(t_max: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t_max * k as f64 / n as f64).collect()
    }

    #[test]
    fn unitary_without_dissipation() {
        let traj = evolve_nhh_gamma(&benzene(2), 0.0, 0.01, &grid(10.0, 50)).unwrap();
        assert!(traj.survival.iter().all(|s| (s - 1.0).abs() < 1e-10));
    }

    #[test]
    fn survival_loss_is_the_density() {
        let m = benzene(1);
        let tau = 0.5;
        let h = 1e-4 * 0.1;
        for &t in &[0.3, 1.0, 4.0] {
            let tr = evolve_nhh(&m, tau, &[t - h, t, t + h]).unwrap();
            let ds = -(tr.survival[2] - tr.survival[0]) / (2.0 * h);
            let f = tr.density()[1];
            assert!((ds - f).abs() < 1e-6 * f.max(1e-3), "{ds} vs {f}");
            assert!(tr.survival[2] <= tr.survival[0] + 1e-12);
        }
    }

    #[test]
    fn post_transient_survival() {
        let tau = 0.05;
        let tr = evolve_nhh(&benzene(0), tau, &[5.0 * tau]).unwrap();
        assert!((tr.survival[0] / (tau * tau / 2.0) - 1.0).abs() < 0.1);
    }

    #[test]
    fn benzene_pole_structure() {
        let d = SpectralChargeData::from_model(&benzene(0)).unwrap();
        let tau = 0.01;
        let p = nhh_poles(&d, tau).unwrap();
        assert_eq!(p.poles.len(), 4);
        assert!(p.poles.iter().all(|s| s.re < 0.0));
        let middle = p.poles.iter().find(|s| s.im.abs() < 1e-9).expect("pole on the real axis");
        assert!((middle.re / (-2.0 / 3.0 * tau) - 1.0).abs() < 0.01, "{middle}");
    }

    #[test]
    fn poles_match_reduced_generator() {
        let d = SpectralChargeData::from_model(&benzene(0)).unwrap();
        for tau in [0.02, 0.3, 0.7, 1.0, 3.0, 40.0] {
            let p = nhh_poles(&d, tau).unwrap();
            let eig = nhh_roots_by_eigenvalues(&d, tau);
            for s in &p.poles {
                let best = eig.iter().map(|e| (e - s).norm()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-7, "tau={tau}: {best}");
            }
        }
    }

    #[test]
    fn pole_and_matrix_wavefunctions_agree() {
        for (m, tau) in [
            (benzene(0), 0.25),
            (benzene(2), 1.0),
            (build_gue(8, 3, 1.0).unwrap().with_psi_in(basis_state(8, 5).unwrap()).unwrap(), 0.05),
        ] {
            let d = SpectralChargeData::from_model(&m).unwrap();
            let poles = nhh_poles(&d, tau).unwrap();
            let g = grid(50.0, 400);
            let traj = evolve_nhh(&m, tau, &g).unwrap();
            let worst = g
                .iter()
                .zip(&traj.psi)
                .map(|(&t, psi)| (pole_wavefunction(&poles, t) - psi).norm())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "tau={tau}: {worst}");
            assert!((pole_wavefunction(&poles, 0.0) - m.overlap()).norm() < 1e-8);
        }
    }

    #[test]
    fn quantized_mean_and_sure_return() {
        let d = SpectralChargeData::from_model(&benzene(0)).unwrap();
        for tau in [0.05, 0.1, 0.5] {
            let s = nhh_stats(&nhh_poles(&d, tau).unwrap(), 2).unwrap();
            assert!((s.p_det - 1.0).abs() < 1e-6);
            assert!((s.mean() / tau - 1.0).abs() < 0.01, "tau={tau}: {}", s.mean());
        }
    }

    #[test]
    fn stats_match_time_quadrature() {
        let m = benzene(2);
        let tau = 0.4;
        let d = SpectralChargeData::from_model(&m).unwrap();
        let poles = nhh_poles(&d, tau).unwrap();
        let s = nhh_stats(&poles, 2).unwrap();
        let gamma = gamma_of(tau);
        let quad = Adaptive::new(1e-11);
        let t_max = 400.0;
        let p = quad
            .integrate(|t| 2.0 * gamma * pole_wavefunction(&poles, t).norm_sqr(), 0.0, t_max, 400)
            .unwrap()
            .value;
        let m1 = quad
            .integrate(|t| t * 2.0 * gamma * pole_wavefunction(&poles, t).norm_sqr(), 0.0, t_max, 400)
            .unwrap()
            .value;
        assert!((p - s.p_det).abs() < 1e-6);
        assert!((m1 / p - s.mean()).abs() < 1e-6 * s.mean());
    }

    #[test]
    fn single_level_two_pole_reduction() {
        // ψin supported on the upper level of a symmetric two-level system:
        // Ψ(s) = (q/2)(s − i)/(s² + Γs + 1).
        let q = 2f64.sqrt();
        let d = SpectralChargeData::from_parts(
            vec![-1.0, 1.0],
            vec![0.5, 0.5],
            vec![C64::new(0.0, 0.0), C64::new(q, 0.0)],
        )
        .unwrap();
        let tau = 0.8;
        let s = nhh_stats(&nhh_poles(&d, tau).unwrap(), 1).unwrap();
        let gamma = gamma_of(tau);
        let disc = (C64::new(gamma * gamma - 4.0, 0.0)).sqrt();
        let r1 = (-gamma + disc) / 2.0;
        let r2 = (-gamma - disc) / 2.0;
        let a1 = (r1 - C64::i()) / (r1 - r2) * (q / 2.0);
        let a2 = (r2 - C64::i()) / (r2 - r1) * (q / 2.0);
        let terms = [(a1, r1), (a2, r2)];
        let mut p = 0.0;
        for (al, sl) in terms {
            for (ak, sk) in terms {
                p += (al * ak.conj() * (-1.0) / (sl + sk.conj())).re;
            }
        }
        assert!((2.0 * gamma * p - s.p_det).abs() < 1e-12, "{} vs {}", 2.0 * gamma * p, s.p_det);
    }

    #[test]
    fn fast_mode_properties() {
        let m = benzene(0);
        let tau = 0.01;
        let f = fast_mode(&m, tau).unwrap();
        assert!((f.survival_phi / f.survival_psi - 4.0).abs() < 1e-12);
        assert!((f.survival_phi - 2.0 * tau * tau).abs() < 1e-14);
        let gen = nhh_generator(&m, gamma_of(tau));
        let r = (&gen * &f.vector - &f.vector * f.eigenvalue).norm();
        assert!(r < 10.0 * tau, "{r}");
        assert!((f.exact_eigenvalue - f.eigenvalue).norm() < 10.0 * tau);
    }

    #[test]
    fn adiabatic_model_structure() {
        let m = benzene(3);
        let tau = 0.05;
        let a = adiabatic_hamiltonian(&m, tau).unwrap();
        let h1_rank = a.h_one.singular_values().iter().filter(|s| **s > 1e-10).count();
        assert_eq!(h1_rank, 1);
        let trace = -a.h_eff.trace().im;
        let (_, var) = SpectralChargeData::from_model(&m).unwrap().energy_moments();
        assert!((trace - tau / 2.0 * var).abs() < 1e-12);
        assert!(adiabatic_hamiltonian(&benzene(0), tau).is_err());
    }

    #[test]
    fn adiabatic_survival_tracks_full() {
        let m = benzene(3);
        let tau = 0.05;
        let g: Vec<f64> = (0..200).map(|k| tau + (20.0 - tau) * k as f64 / 199.0).collect();
        let full = evolve_nhh(&m, tau, &g).unwrap().survival;
        let eff = adiabatic_hamiltonian(&m, tau).unwrap().survival(&g).unwrap();
        for (a, b) in full.iter().zip(&eff) {
            assert!((a / b - 1.0).abs() < 0.02);
        }
    }
}
