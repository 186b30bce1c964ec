use approx::assert_relative_eq;
use nalgebra::{SMatrix, SVector};
use zenolab::electro::zeno_data;
use zenolab::infline::{line_psi_grid, line_return_pdet, mean_t_closed, pdet_closed};
use zenolab::model::{basis_state, build_gue, build_ring, QuantumModel, SpectralChargeData};
use zenolab::nhh::{evolve_nhh, gamma_of, nhh_poles, nhh_stats};
use zenolab::quad::GaussLegendre;
use zenolab::strobo::{converged_stats, direct_amplitudes, spectral_amplitudes, Truncation};
use zenolab::zeno::{correction_map, zeno_pdf, zeno_stats, Problem};
use zenolab::{Framework, C64};

fn benzene(site: usize) -> QuantumModel {
    build_ring(6, 1.0).unwrap().with_psi_in(basis_state(6, site).unwrap()).unwrap()
}

#[test]
fn early_mass_of_the_return_problem() {
    let tau = 0.05;
    let m = benzene(0);
    let first = direct_amplitudes(&m, tau, 1).unwrap().amplitudes[0].norm_sqr();
    let early = 1.0 - evolve_nhh(&m, tau, &[tau]).unwrap().survival[0];
    assert!((early / first - 1.0).abs() < 0.03, "{early} vs {first}");
}

#[test]
fn nhh_quantization_on_gue() {
    let m = build_gue(8, 11, 1.0).unwrap();
    let d = SpectralChargeData::from_model(&m).unwrap();
    for tau in [0.05, 0.1, 0.5] {
        let st = nhh_stats(&nhh_poles(&d, tau).unwrap(), 1).unwrap();
        assert_relative_eq!(st.mean() / tau, d.w() as f64 / 4.0, max_relative = 0.01);
    }
}

#[test]
fn corrected_nhh_matches_strobo_return() {
    let d = SpectralChargeData::from_model(&benzene(0)).unwrap();
    for tau in [0.05, 0.2] {
        let nh = nhh_stats(&nhh_poles(&d, tau).unwrap(), 1).unwrap();
        let corrected = correction_map(nh.p_det, &nh.moments).unwrap();
        let strobo = converged_stats(&d, tau, tau, 1, Truncation::default()).unwrap().stats;
        assert_relative_eq!(corrected.p_det, 1.0, epsilon = 1e-12);
        assert_relative_eq!(corrected.moments[0], strobo.mean(), max_relative = 0.01);
        let zd = zeno_data(&d).unwrap();
        let one = C64::new(1.0, 0.0);
        let zs = zeno_stats(&zd, tau, 1, Framework::Strobo, Problem::Return, one).unwrap();
        assert_relative_eq!(zs.mean(), strobo.mean(), max_relative = 0.01);
    }
}

/// `(∫ 2Γ|Ψ|², ∫ t 2Γ|Ψ|²)` on `[0, t_max]` plus a tail from the
/// least-squares fit `t³ F(t) ≈ A + B/t + (C + E/t) cos 4t + (D + G/t) sin 4t`
/// over the second half; the band edges at `±2` beat at frequency 4.
fn time_domain(xi: usize, tau: f64, t_max: f64) -> (f64, f64) {
    let rule = GaussLegendre::new(16);
    let h = 0.25;
    let panels = (t_max / h) as usize;
    let mut grid = Vec::with_capacity(panels * 16);
    let mut weights = Vec::with_capacity(panels * 16);
    for k in 0..panels {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            grid.push(0.5 * (a + b) + 0.5 * (b - a) * x);
            weights.push(0.5 * (b - a) * w);
        }
    }
    let psi = line_psi_grid(xi, &grid, tau).unwrap();
    let gamma = gamma_of(tau);
    let mut p = 0.0;
    let mut t1 = 0.0;
    let mut normal = SMatrix::<f64, 6, 6>::zeros();
    let mut rhs = SVector::<f64, 6>::zeros();
    for ((t, w), v) in grid.iter().zip(&weights).zip(&psi) {
        let f = 2.0 * gamma * v.norm_sqr();
        p += w * f;
        t1 += w * t * f;
        if *t > 0.5 * t_max {
            let (sn, cs) = (4.0 * t).sin_cos();
            let basis = SVector::<f64, 6>::from([1.0, 1.0 / t, cs, sn, cs / t, sn / t]);
            normal += basis * basis.transpose() * *w;
            rhs += basis * (w * t.powi(3) * f);
        }
    }
    let c = normal.lu().solve(&rhs).unwrap();
    let tm = t_max;
    let (sn, cs) = (4.0 * tm).sin_cos();
    // Leading terms of ∫_T^∞ t^{−k} cos 4t and ∫_T^∞ t^{−k} sin 4t.
    let osc = |k: i32| (-sn / (4.0 * tm.powi(k)), cs / (4.0 * tm.powi(k)));
    let (c2, s2) = osc(2);
    let (c3, s3) = osc(3);
    let (c4, s4) = osc(4);
    (
        p + c[0] / (2.0 * tm * tm) + c[1] / (3.0 * tm.powi(3)) + c[2] * c3 + c[3] * s3 + c[4] * c4 + c[5] * s4,
        t1 + c[0] / tm + c[1] / (2.0 * tm * tm) + c[2] * c2 + c[3] * s2 + c[4] * c3 + c[5] * s3,
    )
}

#[test]
fn closed_forms_match_time_domain() {
    // With Γ below the band edge the tail form sets in later.
    for (tau, t_max) in [(0.25, 50.0), (0.5, 50.0), (1.5, 100.0)] {
        for xi in [0, 1] {
            let (p, t1) = time_domain(xi, tau, t_max);
            let pc = pdet_closed(tau, xi).unwrap();
            let tc = mean_t_closed(tau, xi).unwrap();
            assert!((p - pc).abs() < 1e-4, "P tau={tau} xi={xi}: {p} vs {pc}");
            assert!((t1 / p - tc).abs() < 1e-4 * tc.max(1.0), "T tau={tau} xi={xi}: {} vs {tc}", t1 / p);
        }
    }
}

#[test]
fn corrected_line_probability_window() {
    for tau in [0.1, 0.25, 0.5] {
        let strobo = line_return_pdet(tau, 8000).unwrap();
        let corrected = 4.0 * pdet_closed(tau, 0).unwrap() - 3.0;
        assert!((strobo - corrected).abs() < 1e-3, "tau={tau}: {strobo} vs {corrected}");
    }
    let beyond = 4.0 * pdet_closed(2.0, 0).unwrap() - 3.0;
    assert!(beyond < 0.0 || (line_return_pdet(2.0, 8000).unwrap() - beyond).abs() > 0.1);
}

/// Largest gap between the Zeno strobo density and `|φ_n|²/τ` on
/// `t ∈ [2τ, 20]`, relative to the largest renewal value there.
fn zeno_tracking_gap(tau: f64) -> f64 {
    let d = SpectralChargeData::from_model(&benzene(0)).unwrap();
    let zd = zeno_data(&d).unwrap();
    let series = spectral_amplitudes(&d, tau, (20.0 / tau).round() as usize).unwrap();
    let pts: Vec<(f64, f64)> = series.local_average().into_iter().filter(|p| p.0 >= 2.0 * tau - 1e-12).collect();
    let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let one = C64::new(1.0, 0.0);
    pts.iter()
        .map(|&(t, v)| (zeno_pdf(&zd, tau, t, Framework::Strobo, Problem::Return, one).density - v).abs() / peak)
        .fold(0.0, f64::max)
}

#[test]
fn zeno_strobo_pdf_tracks_renewal() {
    let gap = zeno_tracking_gap(0.1);
    assert!(gap < 0.10, "{gap}");
    // At τ = 0.5 the O(τ²) frequency shifts dephase the closed form.
    assert!(zeno_tracking_gap(0.5) > 0.10);
}
