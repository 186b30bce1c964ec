//! Acceptance criteria.
//!
//! Each check builds its own desk-scale model, measures one number against a
//! pinned tolerance and reports the outcome. Failures inside a check (pole
//! search, truncation) are reported as a failed criterion, never a panic.

use serde::Serialize;

use crate::electro::{absorption_frequencies, lazy_limit, zeno_data};
use crate::infline::{bessel_j, line_return_pdet, line_strobo_series, series_comparison, strobo_small_tau_series};
use crate::model::{basis_state, build_gue, build_ring, QuantumModel, SpectralChargeData};
use crate::nhh::{adiabatic_hamiltonian, evolve_nhh, fast_mode, gamma_of, nhh_poles, nhh_stats, pole_wavefunction, residues};
use crate::strobo::{
    converged_stats, direct_amplitudes, pole_series, renewal_amplitudes, spectral_amplitudes, strobo_poles, Truncation,
};
use crate::zeno::{
    envelope_collapse, perturbed_initial_state, perturbed_return_moments, shifted_protocol_mean, PerturbMode, Problem,
};
use crate::{Result, C64};

pub const QUANTIZED_TAUS: [f64; 3] = [0.05, 0.1, 0.2];
pub const QUANTIZED_REL_TOL: f64 = 0.01;
pub const PDET_ABS_TOL: f64 = 1e-6;
pub const PDET_TAU: f64 = 0.5;
pub const GUE_DIM: usize = 8;
pub const GUE_SEED: u64 = 7;
pub const FOUR_TAU: f64 = 0.05;
/// Attempts per comparison window in the factor-of-four check.
pub const FOUR_WINDOW: usize = 20;
pub const FOUR_BAND: (f64, f64) = (3.8, 4.2);
pub const SURVIVAL_TAU: f64 = 0.02;
/// Post-transient nhh survival is read off at this many τ.
pub const SURVIVAL_AT: f64 = 5.0;
pub const SURVIVAL_BAND: (f64, f64) = (3.6, 4.4);
pub const LINE_TAU: f64 = 0.1;
pub const LINE_N: usize = 8000;
pub const LINE_SERIES_TOL: f64 = 1e-4;
pub const LINE_EXPONENT_TAUS: [f64; 3] = [0.2, 0.1, 0.05];
pub const LINE_EXPONENT: (f64, f64) = (6.0, 0.5);
pub const FIRST_AMPLITUDE_TAUS: [f64; 2] = [0.1, 0.5];
pub const FIRST_AMPLITUDE_TOL: f64 = 1e-10;
pub const INTERLACE_MODELS: u64 = 100;
pub const INTERLACE_MAX_DIM: usize = 16;
pub const ORACLE_TAU: f64 = 0.25;
pub const ORACLE_STEPS: usize = 500;
pub const ORACLE_TOL: f64 = 1e-8;
pub const SEED_TAUS: (f64, f64) = (0.02, 0.01);
pub const SEED_BOUND: f64 = 1.0;
pub const SEED_RATIO: (f64, f64) = (3.0, 5.0);
pub const COLLAPSE_TAUS: (f64, f64) = (0.1, 0.05);
/// Series length in units of `1/τ²`.
pub const COLLAPSE_SPAN: f64 = 8.0;
pub const COLLAPSE_TOL: f64 = 0.10;
pub const SCALING_TAUS: [f64; 5] = [0.02, 0.03, 0.05, 0.07, 0.1];
pub const SCALING_TOL: f64 = 0.1;
pub const LAZY_TAU: f64 = 100.0;
pub const LAZY_PDET_TOL: f64 = 0.01;
pub const LAZY_MEAN_TOL: f64 = 0.02;
pub const UNIFORM_TAU: f64 = 1.0 / 16.0;
pub const UNIFORM_POINTS: usize = 19;
pub const UNIFORM_TOL: f64 = 0.05;
pub const NAIVE_EPS_MAX: f64 = 1e-2;
pub const NAIVE_MIN_DEPARTURE: f64 = 0.20;
pub const SHIFT_TAU: f64 = 0.05;
pub const SHIFT_EPS: [f64; 3] = [0.25, 0.5, 0.75];
pub const SHIFT_TOL: f64 = 0.05;
pub const ADIABATIC_TAU: f64 = 0.05;
pub const ADIABATIC_T_MAX: f64 = 20.0;
pub const ADIABATIC_POINTS: usize = 400;
pub const ADIABATIC_TOL: f64 = 0.02;

/// Tail tolerance for truncated strobo sums inside the suite.
const SUITE_TRUNCATION: Truncation = Truncation { n_start: 4096, tail_tol: 1e-13, n_cap: 4_000_000 };

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    /// The headline number compared against the tolerance.
    pub measured: f64,
    pub detail: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {}: measured {:.6e}; {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.detail
        )
    }
}

type Check = fn() -> Result<(bool, f64, String)>;

const CRITERIA: [(u32, &str, Check); 16] = [
    (1, "quantized strobo return mean", quantized_strobo),
    (2, "quantized nhh return mean", quantized_nhh),
    (3, "return detection is certain", return_pdet),
    (4, "factor of four in the return pdf", factor_four),
    (5, "post-transient survival ratio", survival_ratio),
    (6, "infinite line small-tau series", line_series),
    (7, "first line amplitude", first_line_amplitude),
    (8, "absorption frequencies interlace", interlacing),
    (9, "amplitude oracles agree", oracle_equivalence),
    (10, "zeno pole seeds are first order", zeno_seeds),
    (11, "envelope scaling collapse", scaling_collapse),
    (12, "mean scaling exponents", moment_scaling),
    (13, "lazy detector limit", lazy),
    (14, "uniform zeno formula", uniform_zeno),
    (15, "shifted protocol mean", shifted_protocol),
    (16, "adiabatic elimination", adiabatic),
];

pub fn ids() -> Vec<u32> {
    CRITERIA.iter().map(|c| c.0).collect()
}

pub fn run(id: u32) -> Option<CriterionReport> {
    let (id, name, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let report = match check() {
        Ok((passed, measured, detail)) => CriterionReport { id: *id, name, passed, measured, detail },
        Err(e) => CriterionReport { id: *id, name, passed: false, measured: f64::NAN, detail: format!("error: {e}") },
    };
    Some(report)
}

pub fn run_all() -> Vec<CriterionReport> {
    ids().into_iter().filter_map(run).collect()
}

fn benzene(site: usize) -> Result<QuantumModel> {
    build_ring(6, 1.0)?.with_psi_in(basis_state(6, site)?)
}

fn benzene_data(site: usize) -> Result<SpectralChargeData> {
    SpectralChargeData::from_model(&benzene(site)?)
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    crate::infline::slope(pts)
}

fn in_band(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn quantized_strobo() -> Result<(bool, f64, String)> {
    let d = benzene_data(0)?;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for tau in QUANTIZED_TAUS {
        let cs = converged_stats(&d, tau, tau, 1, SUITE_TRUNCATION)?;
        let rel = (cs.stats.mean() / (4.0 * tau) - 1.0).abs();
        worst = worst.max(rel);
        detail.push(format!("tau={tau}: <T>/(4tau)-1={rel:.2e} N={}", cs.stats.truncation_n));
    }
    Ok((worst <= QUANTIZED_REL_TOL, worst, format!("{}; tol {QUANTIZED_REL_TOL}", detail.join(", "))))
}

fn quantized_nhh() -> Result<(bool, f64, String)> {
    let d = benzene_data(0)?;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for tau in QUANTIZED_TAUS {
        let st = nhh_stats(&nhh_poles(&d, tau)?, 1)?;
        let rel = (st.mean() / tau - 1.0).abs();
        worst = worst.max(rel);
        detail.push(format!("tau={tau}: <T>/tau-1={rel:.2e}"));
    }
    Ok((worst <= QUANTIZED_REL_TOL, worst, format!("{}; tol {QUANTIZED_REL_TOL}", detail.join(", "))))
}

fn return_pdet() -> Result<(bool, f64, String)> {
    let models = [("benzene", benzene(0)?), ("gue", build_gue(GUE_DIM, GUE_SEED, 1.0)?)];
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (label, m) in &models {
        let d = SpectralChargeData::from_model(m)?;
        let cs = converged_stats(&d, PDET_TAU, PDET_TAU, 1, SUITE_TRUNCATION)?;
        let nh = nhh_stats(&nhh_poles(&d, PDET_TAU)?, 1)?;
        let es = (cs.stats.p_det - 1.0).abs();
        let en = (nh.p_det - 1.0).abs();
        worst = worst.max(es).max(en);
        detail.push(format!("{label}: |P^phi-1|={es:.2e} (N*={}) |P^Psi-1|={en:.2e}", cs.stats.truncation_n));
    }
    Ok((worst <= PDET_ABS_TOL, worst, format!("{}; tau={PDET_TAU}, tol {PDET_ABS_TOL}", detail.join(", "))))
}

/// `∫_a^b 2Γ|Ψ|² dt` from the pole expansion.
fn nhh_mass(residue: &[C64], poles: &[C64], gamma: f64, a: f64, b: f64) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (rl, sl) in residue.iter().zip(poles) {
        for (rk, sk) in residue.iter().zip(poles) {
            let sigma = sl + sk.conj();
            acc += rl * rk.conj() * ((sigma * b).exp() - (sigma * a).exp()) / sigma;
        }
    }
    2.0 * gamma * acc.re
}

/// Strobo probability in windows of [`FOUR_WINDOW`] attempts against the nhh
/// mass of the cells `[t_n − τ/2, t_n + τ/2]` they cover, for `t_n ∈ [5τ, 10]`.
fn factor_four() -> Result<(bool, f64, String)> {
    let tau = FOUR_TAU;
    let d = benzene_data(0)?;
    let n_first = 5;
    let n_last = (10.0 / tau).round() as usize;
    let series = spectral_amplitudes(&d, tau, n_last)?;
    let poles = nhh_poles(&d, tau)?;
    let res = residues(&poles);
    let gamma = gamma_of(tau);
    let probs = series.probabilities();
    let mut ratios = Vec::new();
    let mut start = n_first;
    while start <= n_last {
        let end = (start + FOUR_WINDOW - 1).min(n_last);
        let strobo: f64 = probs[start - 1..end].iter().sum();
        let a = (start as f64 - 0.5) * tau;
        let b = (end as f64 + 0.5) * tau;
        ratios.push(strobo / nhh_mass(&res, &poles.poles, gamma, a, b));
        start = end + 1;
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let worst = if (lo - 4.0).abs() > (hi - 4.0).abs() { lo } else { hi };
    let passed = in_band(lo, FOUR_BAND) && in_band(hi, FOUR_BAND);
    Ok((passed, worst, format!("{} windows, ratios in [{lo:.4}, {hi:.4}]; band {FOUR_BAND:?}", ratios.len())))
}

fn survival_ratio() -> Result<(bool, f64, String)> {
    let tau = SURVIVAL_TAU;
    let m = benzene(0)?;
    let fm = fast_mode(&m, tau)?;
    let formula = fm.survival_phi / fm.survival_psi;
    let phi1 = direct_amplitudes(&m, tau, 1)?.amplitudes[0];
    let s_phi = 1.0 - phi1.norm_sqr();
    let s_psi = evolve_nhh(&m, tau, &[SURVIVAL_AT * tau])?.survival[0];
    let ratio = s_phi / s_psi;
    let passed = (formula - 4.0).abs() < 1e-12 && in_band(ratio, SURVIVAL_BAND);
    Ok((
        passed,
        ratio,
        format!("formula ratio {formula}; measured S_phi={s_phi:.4e} S_Psi={s_psi:.4e}; band {SURVIVAL_BAND:?}"),
    ))
}

fn line_series() -> Result<(bool, f64, String)> {
    let p = line_return_pdet(LINE_TAU, LINE_N)?;
    let err = (p - strobo_small_tau_series(LINE_TAU)).abs();
    let report = series_comparison(&LINE_EXPONENT_TAUS)?;
    let (target, half) = LINE_EXPONENT;
    let passed = err <= LINE_SERIES_TOL && (report.exponent - target).abs() <= half;
    Ok((
        passed,
        err,
        format!(
            "|P^phi - series| at tau={LINE_TAU}: {err:.2e} (tol {LINE_SERIES_TOL}); exponent {:.3} (want {target} ± {half})",
            report.exponent
        ),
    ))
}

fn first_line_amplitude() -> Result<(bool, f64, String)> {
    let mut worst: f64 = 0.0;
    for tau in FIRST_AMPLITUDE_TAUS {
        let phi1 = line_strobo_series(0, tau, 1)?.amplitudes[0];
        worst = worst.max((phi1 - bessel_j(0, 2.0 * tau)?).norm());
    }
    Ok((worst <= FIRST_AMPLITUDE_TOL, worst, format!("tau in {FIRST_AMPLITUDE_TAUS:?}; tol {FIRST_AMPLITUDE_TOL}")))
}

fn interlacing() -> Result<(bool, f64, String)> {
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut frequencies = 0usize;
    for seed in 0..INTERLACE_MODELS {
        let dim = 2 + (seed as usize % (INTERLACE_MAX_DIM - 1));
        let d = SpectralChargeData::from_model(&build_gue(dim, seed, 1.0)?)?;
        let omega = absorption_frequencies(&d);
        if omega.len() + 1 != d.w() {
            violations += 1;
            continue;
        }
        for (l, om) in omega.iter().enumerate() {
            frequencies += 1;
            let margin = (om - d.levels[l]).min(d.levels[l + 1] - om);
            min_margin = min_margin.min(margin);
            if !(margin > 0.0) {
                violations += 1;
            }
        }
    }
    Ok((
        violations == 0,
        violations as f64,
        format!("{INTERLACE_MODELS} GUE models, {frequencies} frequencies, smallest margin {min_margin:.3e}"),
    ))
}

fn oracle_equivalence() -> Result<(bool, f64, String)> {
    let tau = ORACLE_TAU;
    let mut worst_strobo: f64 = 0.0;
    let mut worst_nhh: f64 = 0.0;
    for site in [0, 1, 3] {
        let m = benzene(site)?;
        let d = SpectralChargeData::from_model(&m)?;
        let direct = direct_amplitudes(&m, tau, ORACLE_STEPS)?;
        let renewal = renewal_amplitudes(&d, tau, ORACLE_STEPS)?;
        let poles = pole_series(&strobo_poles(&d, tau)?, ORACLE_STEPS);
        for k in 0..ORACLE_STEPS {
            let a = direct.amplitudes[k];
            worst_strobo = worst_strobo.max((a - renewal.amplitudes[k]).norm()).max((a - poles.amplitudes[k]).norm());
        }
        let grid: Vec<f64> = (1..=ORACLE_STEPS).map(|n| n as f64 * tau).collect();
        let traj = evolve_nhh(&m, tau, &grid)?;
        let np = nhh_poles(&d, tau)?;
        for (t, psi) in grid.iter().zip(&traj.psi) {
            worst_nhh = worst_nhh.max((psi - pole_wavefunction(&np, *t)).norm());
        }
    }
    let worst = worst_strobo.max(worst_nhh);
    Ok((
        worst <= ORACLE_TOL,
        worst,
        format!("strobo {worst_strobo:.2e}, nhh {worst_nhh:.2e} over {ORACLE_STEPS} steps at tau={tau}; tol {ORACLE_TOL}"),
    ))
}

/// Largest `|𝔰_l + λ_l τ + iω_l|` over the slow poles.
fn seed_deviation(d: &SpectralChargeData, tau: f64) -> Result<f64> {
    let zd = zeno_data(d)?;
    let poles = nhh_poles(d, tau)?;
    let mut worst: f64 = 0.0;
    for (om, lam) in zd.omega.iter().zip(&zd.lambda) {
        let seed = C64::new(-lam * tau, -om);
        let nearest = poles.poles.iter().map(|s| (s - seed).norm()).fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst)
}

fn zeno_seeds() -> Result<(bool, f64, String)> {
    let d = benzene_data(0)?;
    let (ta, tb) = SEED_TAUS;
    let da = seed_deviation(&d, ta)?;
    let db = seed_deviation(&d, tb)?;
    let ratio = da / db;
    let bounded = (da / (ta * ta)).max(db / (tb * tb));
    let passed = bounded <= SEED_BOUND && in_band(ratio, SEED_RATIO);
    Ok((
        passed,
        ratio,
        format!("max deviation/tau^2 = {bounded:.4} (bound {SEED_BOUND}); ratio tau={ta} vs {tb}: {ratio:.3}, band {SEED_RATIO:?}"),
    ))
}

fn scaling_collapse() -> Result<(bool, f64, String)> {
    let (ta, tb) = COLLAPSE_TAUS;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (site, problem) in [(1, Problem::Transition), (0, Problem::Return)] {
        let d = benzene_data(site)?;
        let series = |tau: f64| spectral_amplitudes(&d, tau, (COLLAPSE_SPAN / (tau * tau)).round() as usize);
        let rep = envelope_collapse(&series(ta)?, &series(tb)?, problem)?;
        worst = worst.max(rep.max_deviation);
        detail.push(format!("{}: {:.4} at t*tau={:.3}", problem.as_str(), rep.max_deviation, rep.worst_at));
    }
    Ok((worst <= COLLAPSE_TOL, worst, format!("{}; tol {COLLAPSE_TOL}", detail.join(", "))))
}

fn moment_scaling() -> Result<(bool, f64, String)> {
    let transition = benzene_data(3)?;
    let ret = benzene_data(0)?;
    let mut series: [Vec<(f64, f64)>; 4] = Default::default();
    for tau in SCALING_TAUS {
        let lt = tau.ln();
        let ts = converged_stats(&transition, tau, tau, 1, SUITE_TRUNCATION)?;
        series[0].push((lt, ts.stats.mean().ln()));
        series[1].push((lt, nhh_stats(&nhh_poles(&transition, tau)?, 1)?.mean().ln()));
        let rs = converged_stats(&ret, tau, tau, 1, SUITE_TRUNCATION)?;
        series[2].push((lt, rs.stats.mean().ln()));
        series[3].push((lt, nhh_stats(&nhh_poles(&ret, tau)?, 1)?.mean().ln()));
    }
    let slopes: Vec<f64> = series.iter().map(|s| slope(s)).collect();
    let targets = [-1.0, -1.0, 1.0, 1.0];
    let worst = slopes.iter().zip(&targets).map(|(s, t)| (s - t).abs()).fold(0.0, f64::max);
    Ok((
        worst <= SCALING_TOL,
        worst,
        format!(
            "transition strobo {:.4} nhh {:.4}; return strobo {:.4} nhh {:.4}; tol {SCALING_TOL}",
            slopes[0], slopes[1], slopes[2], slopes[3]
        ),
    ))
}

fn lazy() -> Result<(bool, f64, String)> {
    let mut worst_p: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    let mut detail = Vec::new();
    for site in [0, 1] {
        let d = benzene_data(site)?;
        let exact = nhh_stats(&nhh_poles(&d, LAZY_TAU)?, 1)?;
        let (_, approx) = lazy_limit(&d, LAZY_TAU, 1)?;
        let ep = (exact.p_det / approx.p_det - 1.0).abs();
        let et = (exact.mean() / approx.mean() - 1.0).abs();
        worst_p = worst_p.max(ep);
        worst_t = worst_t.max(et);
        detail.push(format!("psi_in=|{site}>: P {:.6}/{:.6}, <T> {:.4}/{:.4}", exact.p_det, approx.p_det, exact.mean(), approx.mean()));
    }
    let passed = worst_p <= LAZY_PDET_TOL && worst_t <= LAZY_MEAN_TOL;
    Ok((
        passed,
        worst_p.max(worst_t),
        format!("{}; rel P {worst_p:.2e} (tol {LAZY_PDET_TOL}), rel <T> {worst_t:.2e} (tol {LAZY_MEAN_TOL})", detail.join(", ")),
    ))
}

fn uniform_zeno() -> Result<(bool, f64, String)> {
    let tau = UNIFORM_TAU;
    let m = benzene(0)?;
    let perp = basis_state(6, 1)?;
    let zd = zeno_data(&benzene_data(1)?)?;
    let mut worst_uniform: f64 = 0.0;
    let mut min_naive = f64::INFINITY;
    for k in 0..UNIFORM_POINTS {
        let eps = 10f64.powf(-3.0 + 3.0 * k as f64 / (UNIFORM_POINTS - 1) as f64);
        let psi = perturbed_initial_state(&m.psi_d, &perp, eps)?;
        let d = SpectralChargeData::from_model(&m.clone().with_psi_in(psi)?)?;
        let renewal = converged_stats(&d, tau, tau, 1, SUITE_TRUNCATION)?.stats.mean();
        let uniform = perturbed_return_moments(&zd, tau, eps, 1, PerturbMode::Uniform)?;
        worst_uniform = worst_uniform.max((uniform / renewal - 1.0).abs());
        if eps <= NAIVE_EPS_MAX * (1.0 + 1e-12) {
            let naive = perturbed_return_moments(&zd, tau, eps, 1, PerturbMode::Distant)?;
            min_naive = min_naive.min((naive / renewal - 1.0).abs());
        }
    }
    let passed = worst_uniform <= UNIFORM_TOL && min_naive > NAIVE_MIN_DEPARTURE;
    Ok((
        passed,
        worst_uniform,
        format!(
            "uniform worst {worst_uniform:.4} (tol {UNIFORM_TOL}); naive smallest departure for eps<={NAIVE_EPS_MAX}: {min_naive:.3} (need > {NAIVE_MIN_DEPARTURE})"
        ),
    ))
}

fn shifted_protocol() -> Result<(bool, f64, String)> {
    let tau = SHIFT_TAU;
    let d = benzene_data(0)?;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for eps in SHIFT_EPS {
        let sim = converged_stats(&d, tau, (1.0 - eps) * tau, 1, SUITE_TRUNCATION)?.stats.mean();
        let formula = shifted_protocol_mean(tau, eps, d.w())?;
        let rel = (sim / formula - 1.0).abs();
        worst = worst.max(rel);
        detail.push(format!("eps={eps}: {sim:.5}/{formula:.5}"));
    }
    Ok((worst <= SHIFT_TOL, worst, format!("{}; tol {SHIFT_TOL}", detail.join(", "))))
}

fn adiabatic() -> Result<(bool, f64, String)> {
    let tau = ADIABATIC_TAU;
    let m = benzene(3)?;
    let grid: Vec<f64> =
        (0..=ADIABATIC_POINTS).map(|k| tau + (ADIABATIC_T_MAX - tau) * k as f64 / ADIABATIC_POINTS as f64).collect();
    let full = evolve_nhh(&m, tau, &grid)?.survival;
    let eff = adiabatic_hamiltonian(&m, tau)?.survival(&grid)?;
    let worst = full.iter().zip(&eff).map(|(a, b)| (b / a - 1.0).abs()).fold(0.0, f64::max);
    Ok((worst <= ADIABATIC_TOL, worst, format!("max relative survival gap on [tau, {ADIABATIC_T_MAX}]; tol {ADIABATIC_TOL}")))
}
