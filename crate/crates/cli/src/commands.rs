//! Subcommand drivers. Every module call is pure; sweep cells run in
//! parallel and each output file is written once, in cell order.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zenolab::electro::{point_to_pole, potential_grid, stationary_points, zeno_data, PotentialKind, ZenoData};
use zenolab::infline::{
    line_return_pdet, line_psi_grid, line_strobo_series, mean_t_frequency, pdet_frequency, series_comparison, SERIES_N,
};
use zenolab::io::{
    grid_rows, write_rows, CurveRow, Manifest, PointMassRow, PoleRow, StatRow, StationaryRow, ZenoRow, CURVE_COLUMNS,
    GRID_COLUMNS, POINT_MASS_COLUMNS, POLE_COLUMNS, STATIONARY_COLUMNS, STAT_COLUMNS, ZENO_COLUMNS,
};
use zenolab::model::{basis_state, spectral_charges, QuantumModel, SpectralChargeData};
use zenolab::nhh::{evolve_nhh, gamma_of, nhh_poles, nhh_stats, PoleSet};
use zenolab::strobo::{converged_stats, spectral_amplitudes, strobo_poles, Truncation};
use zenolab::validation::{self, CriterionReport, PDET_ABS_TOL};
use zenolab::zeno::{
    correction_map, perturbed_return_moments, shifted_protocol_mean, zeno_pdf, zeno_stats, PerturbMode, Problem,
};
use zenolab::{FirstDetectionStats, Framework, C64};

use crate::config::{Curve, ExperimentConfig, GridSpec, InitialSpec, ModelSpec};
use crate::{plot, Cli, Command, Failure};

/// Output conversion from internal units (γ = 1) to a hopping `gamma`.
#[derive(Debug, Clone, Copy)]
struct Scale {
    gamma: f64,
}

impl Scale {
    fn time(self, t: f64) -> f64 {
        t / self.gamma
    }

    fn density(self, v: f64) -> f64 {
        v * self.gamma
    }

    fn moment(self, v: f64, order: i32) -> f64 {
        v / self.gamma.powi(order)
    }
}

struct Context {
    cfg: ExperimentConfig,
    base: PathBuf,
    out: Option<PathBuf>,
    scale: Scale,
    trunc: Truncation,
}

impl Context {
    fn out_dir(&self) -> Result<&Path, Failure> {
        let dir = self.out.as_deref().ok_or_else(|| Failure::Config("no output directory: pass --out or set output".into()))?;
        std::fs::create_dir_all(dir)?;
        Ok(dir)
    }

    fn manifest(&self) -> Manifest {
        Manifest::new(serde_json::to_value(&self.cfg).expect("config serializes"))
    }

    fn write<T: Serialize>(&self, manifest: &mut Manifest, name: &str, rows: &[T], cols: &[(&str, &str, &str)]) -> Result<(), Failure> {
        let path = self.out_dir()?.join(name);
        if rows.is_empty() {
            // Serde writes headers with the first record; keep empty files parseable.
            let header: Vec<&str> = cols.iter().map(|c| c.0).collect();
            std::fs::write(path, header.join(",") + "\n")?;
        } else {
            write_rows(path, rows)?;
        }
        manifest.add(name, cols);
        Ok(())
    }

    fn finish(&self, manifest: &Manifest, cmd: Command, gnuplot: bool) -> Result<(), Failure> {
        let dir = self.out_dir()?;
        manifest.write(dir.join("manifest.json"))?;
        if gnuplot {
            plot::write_script(dir, cmd)?;
        }
        Ok(())
    }

    fn model(&self) -> Result<QuantumModel, Failure> {
        Ok(self.cfg.build_model(&self.base)?)
    }

    fn data(&self, model: &QuantumModel) -> Result<SpectralChargeData, Failure> {
        Ok(spectral_charges(model, None, self.cfg.tolerances.drop_tol)?)
    }
}

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if cli.command == Command::Validate {
        return validate(cli);
    }
    let path = cli.config.as_deref().ok_or_else(|| Failure::Config("--config is required for this subcommand".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let ctx = context(cfg, path, cli);
    let mut manifest = ctx.manifest();
    match cli.command {
        Command::Pdf => pdf(&ctx, &mut manifest)?,
        Command::Stats => stats(&ctx, &mut manifest)?,
        Command::Zeno => zeno(&ctx, &mut manifest)?,
        Command::ElectroGrid => electro_grid(&ctx, &mut manifest)?,
        Command::Infline => infline(&ctx, &mut manifest)?,
        Command::Perturb => perturb(&ctx, &mut manifest)?,
        Command::Validate => unreachable!("handled above"),
    }
    ctx.finish(&manifest, cli.command, cli.gnuplot)
}

fn context(cfg: ExperimentConfig, path: &Path, cli: &Cli) -> Context {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = cli.out.clone().or_else(|| cfg.output.as_ref().map(|o| if o.is_absolute() { o.clone() } else { base.join(o) }));
    let trunc = Truncation { n_start: 1024, tail_tol: cfg.tolerances.tail_tol, n_cap: cfg.tolerances.n_cap };
    Context { scale: Scale { gamma: cfg.gamma }, cfg, base, out, trunc }
}

fn problem_of(model: &QuantumModel) -> Problem {
    if (model.overlap().norm() - 1.0).abs() < 1e-12 {
        Problem::Return
    } else {
        Problem::Transition
    }
}

fn time_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = cfg.points;
    (0..n).map(|k| cfg.t_max * k as f64 / (n - 1) as f64).collect()
}

fn attempts(cfg: &ExperimentConfig, tau: f64) -> usize {
    if cfg.n_max > 0 {
        cfg.n_max
    } else {
        (cfg.t_max / tau).ceil().max(1.0) as usize
    }
}

/// Line attempts keep `2nτ` inside the Bessel evaluator's argument range.
fn line_attempts(cfg: &ExperimentConfig, tau: f64) -> usize {
    let cap = (LINE_ARG_MAX / (2.0 * tau)).floor() as usize;
    let n = if cfg.n_max > 0 { cfg.n_max } else { SERIES_N };
    if n > cap {
        log::info!("line series at tau={tau} truncated at N={cap}");
    }
    n.min(cap).max(1)
}

const LINE_ARG_MAX: f64 = 9800.0;

fn curve_label(tau: f64) -> String {
    format!("tau={tau}")
}

// ---------------------------------------------------------------- pdf

fn pdf(ctx: &Context, manifest: &mut Manifest) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    cfg.require_taus()?;
    let grid = time_grid(cfg);
    let mut curves = Vec::new();
    let mut masses = Vec::new();
    for &tau in &cfg.taus {
        let (c, m) = match cfg.line_site() {
            Some(xi) => pdf_line(ctx, xi, tau, &grid)?,
            None => pdf_finite(ctx, &ctx.model()?, tau, &grid)?,
        };
        curves.extend(c);
        masses.extend(m);
    }
    ctx.write(manifest, "pdf.csv", &curves, &CURVE_COLUMNS)?;
    ctx.write(manifest, "point_masses.csv", &masses, &POINT_MASS_COLUMNS)
}

fn push_curve(rows: &mut Vec<CurveRow>, scale: Scale, tau: f64, framework: &str, pts: impl IntoIterator<Item = (f64, f64)>) {
    rows.extend(pts.into_iter().map(|(t, v)| CurveRow {
        curve: curve_label(tau),
        framework: framework.into(),
        t: scale.time(t),
        value: scale.density(v),
    }));
}

fn pdf_finite(ctx: &Context, model: &QuantumModel, tau: f64, grid: &[f64]) -> Result<(Vec<CurveRow>, Vec<PointMassRow>), Failure> {
    let cfg = &ctx.cfg;
    let scale = ctx.scale;
    let d = ctx.data(model)?;
    let problem = problem_of(model);
    let mut rows = Vec::new();
    let mut masses = Vec::new();
    let mut nhh_density = None;
    let mut need_nhh = || -> Result<Vec<f64>, Failure> {
        if nhh_density.is_none() {
            nhh_density = Some(evolve_nhh(model, tau, grid)?.density());
        }
        Ok(nhh_density.clone().expect("set above"))
    };
    for curve in &cfg.curves {
        match curve {
            Curve::Strobo => {
                let series = spectral_amplitudes(&d, tau, attempts(cfg, tau))?;
                push_curve(&mut rows, scale, tau, "strobo", series.local_average());
            }
            Curve::Nhh => {
                let dens = need_nhh()?;
                push_curve(&mut rows, scale, tau, "nhh", grid.iter().copied().zip(dens));
            }
            Curve::Zeno => {
                let zd = zeno_data(&d)?;
                if zd.is_empty() {
                    log::warn!("zeno curves need at least two levels; skipped");
                    continue;
                }
                for (fw, label) in [(Framework::Strobo, "zeno-strobo"), (Framework::Nhh, "zeno-nhh")] {
                    let pts: Vec<(f64, f64)> = grid
                        .iter()
                        .map(|&t| (t, zeno_pdf(&zd, tau, t, fw, problem, model.overlap()).density))
                        .collect();
                    push_curve(&mut rows, scale, tau, label, pts);
                    if let Some((t, mass)) = zeno_pdf(&zd, tau, tau, fw, problem, model.overlap()).point_mass {
                        masses.push(PointMassRow { curve: format!("{}:{label}", curve_label(tau)), t: scale.time(t), mass });
                    }
                }
            }
            Curve::Corrected => {
                if problem != Problem::Return {
                    log::warn!("corrected curve applies to the return problem only; skipped");
                    continue;
                }
                let dens = need_nhh()?;
                push_curve(&mut rows, scale, tau, "corrected", grid.iter().copied().zip(dens.into_iter().map(|v| 4.0 * v)));
            }
        }
    }
    Ok((rows, masses))
}

fn pdf_line(ctx: &Context, xi: usize, tau: f64, grid: &[f64]) -> Result<(Vec<CurveRow>, Vec<PointMassRow>), Failure> {
    let cfg = &ctx.cfg;
    let scale = ctx.scale;
    let mut rows = Vec::new();
    let nhh_density = |grid: &[f64]| -> Result<Vec<f64>, Failure> {
        let gamma = gamma_of(tau);
        Ok(line_psi_grid(xi, grid, tau)?.iter().map(|p| 2.0 * gamma * p.norm_sqr()).collect())
    };
    for curve in &cfg.curves {
        match curve {
            Curve::Strobo => {
                let series = line_strobo_series(xi, tau, attempts(cfg, tau).min(line_attempts(cfg, tau)))?;
                push_curve(&mut rows, scale, tau, "strobo", series.local_average());
            }
            Curve::Nhh => push_curve(&mut rows, scale, tau, "nhh", grid.iter().copied().zip(nhh_density(grid)?)),
            Curve::Corrected if xi == 0 => {
                let dens = nhh_density(grid)?.into_iter().map(|v| 4.0 * v);
                push_curve(&mut rows, scale, tau, "corrected", grid.iter().copied().zip(dens));
            }
            Curve::Corrected => log::warn!("corrected curve applies to the return problem only; skipped"),
            Curve::Zeno => log::warn!("the line has a continuous spectrum; zeno curves skipped"),
        }
    }
    Ok((rows, Vec::new()))
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Strobo,
    Nhh,
    ZenoStrobo,
    ZenoNhh,
    Corrected,
}

impl Cell {
    fn label(self) -> &'static str {
        match self {
            Cell::Strobo => "strobo",
            Cell::Nhh => "nhh",
            Cell::ZenoStrobo => "zeno-strobo",
            Cell::ZenoNhh => "zeno-nhh",
            Cell::Corrected => "corrected",
        }
    }
}

fn cells(curves: &[Curve]) -> Vec<Cell> {
    let mut out = Vec::new();
    for c in curves {
        match c {
            Curve::Strobo => out.push(Cell::Strobo),
            Curve::Nhh => out.push(Cell::Nhh),
            Curve::Zeno => out.extend([Cell::ZenoStrobo, Cell::ZenoNhh]),
            Curve::Corrected => out.push(Cell::Corrected),
        }
    }
    out
}

fn statistic_names(m_max: usize) -> Vec<String> {
    let mut names = vec!["p_det".to_string(), "mean".to_string()];
    if m_max >= 2 {
        names.push("var".into());
    }
    names
}

/// Rows for one cell: `(statistic, value, note)` triples.
type CellRows = Vec<(String, Option<f64>, String)>;

fn stat_rows(scale: Scale, st: &FirstDetectionStats, m_max: usize, note: &str) -> CellRows {
    let mut rows = vec![
        ("p_det".to_string(), Some(st.p_det), note.to_string()),
        ("mean".to_string(), Some(scale.moment(st.mean(), 1)), note.to_string()),
    ];
    if m_max >= 2 {
        rows.push(("var".into(), st.variance().map(|v| scale.moment(v, 2)), note.to_string()));
    }
    rows
}

fn failed_rows(m_max: usize, note: String) -> CellRows {
    statistic_names(m_max).into_iter().map(|s| (s, None, note.clone())).collect()
}

fn stats(ctx: &Context, manifest: &mut Manifest) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    cfg.require_taus()?;
    let finite = match cfg.line_site() {
        Some(_) => None,
        None => {
            let model = ctx.model()?;
            let d = ctx.data(&model)?;
            Some((model, d))
        }
    };
    let jobs: Vec<(f64, Cell)> = cfg.taus.iter().flat_map(|&t| cells(&cfg.curves).into_iter().map(move |c| (t, c))).collect();
    let results: Vec<Option<CellRows>> = jobs
        .par_iter()
        .map(|&(tau, cell)| match (&finite, cfg.line_site()) {
            (Some((model, d)), _) => stats_finite(ctx, model, d, tau, cell),
            (None, Some(xi)) => stats_line(ctx, xi, tau, cell),
            (None, None) => unreachable!("line site or finite model"),
        })
        .collect();
    let mut rows = Vec::new();
    for ((tau, cell), res) in jobs.iter().zip(results) {
        for (statistic, value, note) in res.into_iter().flatten() {
            rows.push(StatRow {
                tau: *tau,
                epsilon: None,
                framework: cell.label().into(),
                statistic,
                value,
                note,
            });
        }
    }
    ctx.write(manifest, "stats.csv", &rows, &STAT_COLUMNS)
}

fn stats_finite(ctx: &Context, model: &QuantumModel, d: &SpectralChargeData, tau: f64, cell: Cell) -> Option<CellRows> {
    let m_max = ctx.cfg.m_max;
    let problem = problem_of(model);
    let scale = ctx.scale;
    let run = || -> zenolab::Result<CellRows> {
        match cell {
            Cell::Strobo => {
                let cs = converged_stats(d, tau, tau, m_max, ctx.trunc)?;
                let note = if cs.converged {
                    format!("N={}", cs.stats.truncation_n)
                } else {
                    format!("not converged at N={}", cs.stats.truncation_n)
                };
                Ok(stat_rows(scale, &cs.stats, m_max, &note))
            }
            Cell::Nhh => Ok(stat_rows(scale, &nhh_stats(&nhh_poles(d, tau)?, m_max)?, m_max, "")),
            Cell::ZenoStrobo | Cell::ZenoNhh => {
                let fw = if cell == Cell::ZenoStrobo { Framework::Strobo } else { Framework::Nhh };
                let st = zeno_stats(&zeno_data(d)?, tau, m_max, fw, problem, model.overlap())?;
                Ok(stat_rows(scale, &st, m_max, ""))
            }
            Cell::Corrected => {
                let nh = nhh_stats(&nhh_poles(d, tau)?, m_max)?;
                corrected_rows(scale, nh.p_det, &nh.moments, m_max)
            }
        }
    };
    if cell == Cell::Corrected && problem != Problem::Return {
        return None;
    }
    Some(run().unwrap_or_else(|e| failed_rows(m_max, e.to_string())))
}

fn corrected_rows(scale: Scale, p_det: f64, moments: &[f64], m_max: usize) -> zenolab::Result<CellRows> {
    let c = correction_map(p_det, moments)?;
    let note = if c.near_breakdown { "near breakdown: 4P-3 small" } else { "" };
    let st = FirstDetectionStats { p_det: c.p_det, moments: c.moments, truncation_n: 0, tail_estimate: 0.0 };
    Ok(stat_rows(scale, &st, m_max, note))
}

fn stats_line(ctx: &Context, xi: usize, tau: f64, cell: Cell) -> Option<CellRows> {
    let m_max = ctx.cfg.m_max;
    let scale = ctx.scale;
    let diverges = || ("var".to_string(), None, "diverges: pdf decays as t^-3".to_string());
    let run = || -> zenolab::Result<CellRows> {
        match cell {
            Cell::Strobo => {
                let n = line_attempts(&ctx.cfg, tau);
                let s = line_strobo_series(xi, tau, n)?;
                let probs = s.probabilities();
                let head: f64 = probs.iter().sum();
                let mut t1: f64 = probs.iter().enumerate().map(|(k, p)| s.time(k + 1) * p).sum();
                // |φ_n|² ≈ 2τ/(πn³) on the return problem.
                if xi == 0 {
                    t1 += 2.0 * tau * tau / (PI * (n as f64 + 0.5));
                }
                let p_det = if xi == 0 { line_return_pdet(tau, n)? } else { head };
                let note = if xi == 0 { format!("N={n} plus asymptotic tail") } else { format!("truncated at N={n}") };
                let mean = if xi == 0 { t1 / p_det } else { t1 / head };
                let mut rows = vec![("p_det".to_string(), Some(p_det), note.clone()), ("mean".into(), Some(scale.moment(mean, 1)), note)];
                if m_max >= 2 {
                    rows.push(diverges());
                }
                Ok(rows)
            }
            Cell::Nhh | Cell::Corrected => {
                let p = pdet_frequency(tau, xi)?;
                let mean = mean_t_frequency(tau, xi)?;
                if cell == Cell::Nhh {
                    let mut rows = vec![("p_det".to_string(), Some(p), String::new()), ("mean".into(), Some(scale.moment(mean, 1)), String::new())];
                    if m_max >= 2 {
                        rows.push(diverges());
                    }
                    return Ok(rows);
                }
                let mut rows = corrected_rows(scale, p, &[mean], 1)?;
                if m_max >= 2 {
                    rows.push(diverges());
                }
                Ok(rows)
            }
            Cell::ZenoStrobo | Cell::ZenoNhh => unreachable!("filtered below"),
        }
    };
    match cell {
        Cell::ZenoStrobo | Cell::ZenoNhh => None,
        Cell::Corrected if xi != 0 => None,
        _ => Some(run().unwrap_or_else(|e| failed_rows(m_max, e.to_string()))),
    }
}

// ---------------------------------------------------------------- zeno

fn finite_only(ctx: &Context, what: &str) -> Result<(), Failure> {
    if matches!(ctx.cfg.model, ModelSpec::Line) {
        return Err(Failure::Config(format!("{what} needs a finite model (ring, gue or file)")));
    }
    Ok(())
}

/// Zeno-limit positions of the slow poles.
fn seeds(zd: &ZenoData, tau: f64, fw: Framework) -> Vec<C64> {
    zd.omega
        .iter()
        .zip(&zd.lambda)
        .map(|(&om, &lam)| match fw {
            Framework::Nhh => C64::new(-lam * tau, -om),
            Framework::Strobo => C64::new(lam * tau * tau, om * tau).exp(),
        })
        .collect()
}

/// Pairs each seed with its nearest unclaimed pole.
fn match_seeds(poles: &PoleSet, seeds: &[C64]) -> Vec<Option<C64>> {
    let mut out = vec![None; poles.poles.len()];
    for s in seeds {
        let best = poles
            .poles
            .iter()
            .enumerate()
            .filter(|(i, _)| out[*i].is_none())
            .min_by(|a, b| (a.1 - s).norm().total_cmp(&(b.1 - s).norm()));
        if let Some((i, _)) = best {
            out[i] = Some(*s);
        }
    }
    out
}

fn zeno(ctx: &Context, manifest: &mut Manifest) -> Result<(), Failure> {
    finite_only(ctx, "zeno")?;
    ctx.cfg.require_taus()?;
    let model = ctx.model()?;
    let d = ctx.data(&model)?;
    let zd = zeno_data(&d)?;
    let zeno_rows: Vec<ZenoRow> = (0..zd.len())
        .map(|l| ZenoRow {
            index: l,
            omega: zd.omega[l],
            lambda: zd.lambda[l],
            theta_re: zd.theta[l].re,
            theta_im: zd.theta[l].im,
        })
        .collect();
    let mut pole_rows = Vec::new();
    for &tau in &ctx.cfg.taus {
        for fw in [Framework::Strobo, Framework::Nhh] {
            let poles = match fw {
                Framework::Strobo => strobo_poles(&d, tau),
                Framework::Nhh => nhh_poles(&d, tau),
            };
            let poles = match poles {
                Ok(p) => p,
                Err(e) if e.is_numerical() => {
                    log::warn!("{} poles at tau={tau}: {e}", fw.as_str());
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let matched = match_seeds(&poles, &seeds(&zd, tau, fw));
            for (index, (p, s)) in poles.poles.iter().zip(matched).enumerate() {
                pole_rows.push(PoleRow {
                    tau,
                    framework: fw.as_str().into(),
                    index,
                    re: p.re,
                    im: p.im,
                    seed_re: s.map(|s| s.re),
                    seed_im: s.map(|s| s.im),
                });
            }
        }
    }
    ctx.write(manifest, "zeno.csv", &zeno_rows, &ZENO_COLUMNS)?;
    ctx.write(manifest, "poles.csv", &pole_rows, &POLE_COLUMNS)
}

// ---------------------------------------------------------------- electro-grid

const DEFAULT_GRID: GridSpec = GridSpec { x: [-3.0, 3.0], y: [-3.0, 3.0], nx: 81, ny: 81 };

fn linspace([a, b]: [f64; 2], n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn electro_grid(ctx: &Context, manifest: &mut Manifest) -> Result<(), Failure> {
    finite_only(ctx, "electro-grid")?;
    ctx.cfg.require_taus()?;
    let model = ctx.model()?;
    let d = ctx.data(&model)?;
    let g = ctx.cfg.grid.as_ref().unwrap_or(&DEFAULT_GRID);
    let (xs, ys) = (linspace(g.x, g.nx), linspace(g.y, g.ny));
    let mut grid = Vec::new();
    let mut stationary = Vec::new();
    for &tau in &ctx.cfg.taus {
        for (kind, label) in [(PotentialKind::Strobo, "strobo"), (PotentialKind::Nhh, "nhh")] {
            grid.extend(grid_rows(&potential_grid(&d, tau, kind, &xs, &ys), tau, label));
            for pt in stationary_points(&d, tau, kind)? {
                let pole = point_to_pole(kind, pt);
                stationary.push(StationaryRow { tau, potential: label.into(), x: pt.0, y: pt.1, pole_re: pole.re, pole_im: pole.im });
            }
        }
    }
    ctx.write(manifest, "grid.csv", &grid, &GRID_COLUMNS)?;
    ctx.write(manifest, "stationary.csv", &stationary, &STATIONARY_COLUMNS)
}

// ---------------------------------------------------------------- infline

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRow {
    pub tau: f64,
    pub xi: usize,
    pub p_strobo: f64,
    pub p_nhh: f64,
    pub mean_nhh: f64,
    pub p_corrected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCompareRow {
    pub tau: f64,
    pub p_strobo: f64,
    pub p_corrected: f64,
    pub delta: f64,
}

const LINE_COLUMNS: [(&str, &str, &str); 6] = [
    ("tau", "hbar/gamma", "detection period"),
    ("xi", "sites", "distance of the initial site from the detector"),
    ("p_strobo", "", "stroboscopic detection probability, truncated series"),
    ("p_nhh", "", "nhh detection probability, frequency integral"),
    ("mean_nhh", "hbar/gamma", "nhh conditional mean detection time"),
    ("p_corrected", "", "4 p_nhh - 3 for the return problem; empty otherwise"),
];

const SERIES_COLUMNS: [(&str, &str, &str); 4] = [
    ("tau", "hbar/gamma", "detection period"),
    ("p_strobo", "", "stroboscopic return probability with asymptotic tail"),
    ("p_corrected", "", "4 p_nhh - 3"),
    ("delta", "", "|p_strobo - p_corrected|"),
];

fn infline(ctx: &Context, manifest: &mut Manifest) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    cfg.require_taus()?;
    let xi = cfg.line_site().unwrap_or(0);
    let rows: Vec<LineRow> = cfg
        .taus
        .par_iter()
        .map(|&tau| -> zenolab::Result<LineRow> {
            let n = line_attempts(cfg, tau);
            let p_strobo = if xi == 0 {
                line_return_pdet(tau, n)?
            } else {
                line_strobo_series(xi, tau, n)?.probabilities().iter().sum()
            };
            let p_nhh = pdet_frequency(tau, xi)?;
            Ok(LineRow {
                tau,
                xi,
                p_strobo,
                p_nhh,
                mean_nhh: ctx.scale.moment(mean_t_frequency(tau, xi)?, 1),
                p_corrected: (xi == 0).then_some(4.0 * p_nhh - 3.0),
            })
        })
        .collect::<zenolab::Result<_>>()?;
    ctx.write(manifest, "infline.csv", &rows, &LINE_COLUMNS)?;
    // The comparison runs a fixed-length series, which bounds τ.
    let small: Vec<f64> = cfg.taus.iter().copied().filter(|t| 2.0 * SERIES_N as f64 * t <= LINE_ARG_MAX).collect();
    if small.len() < cfg.taus.len() {
        log::warn!("series comparison skips tau above {}", LINE_ARG_MAX / (2.0 * SERIES_N as f64));
    }
    if small.len() >= 2 {
        let rep = series_comparison(&small)?;
        let series: Vec<SeriesCompareRow> = rep
            .rows
            .iter()
            .map(|r| SeriesCompareRow { tau: r.tau, p_strobo: r.p_strobo, p_corrected: r.p_corrected, delta: r.delta })
            .collect();
        ctx.write(manifest, "series.csv", &series, &SERIES_COLUMNS)?;
        println!("delta exponent: {:.4}", rep.exponent);
    }
    Ok(())
}

// ---------------------------------------------------------------- perturb

fn moment_name(m: usize) -> String {
    if m == 1 {
        "mean".into()
    } else {
        format!("moment{m}")
    }
}

fn perturb(ctx: &Context, manifest: &mut Manifest) -> Result<(), Failure> {
    finite_only(ctx, "perturb")?;
    let cfg = &ctx.cfg;
    cfg.require_taus()?;
    let InitialSpec::Perturbed { epsilon, perp_site } = cfg.initial else {
        return Err(Failure::Config("perturb needs initial.kind = \"perturbed\"".into()));
    };
    let epsilons = if cfg.epsilons.is_empty() { vec![epsilon] } else { cfg.epsilons.clone() };
    let model = ctx.model()?;
    let n = model.dim();
    let ret = ctx.data(&model.clone().with_psi_in(model.psi_d.clone())?)?;
    let perp_model = model.clone().with_psi_in(basis_state(n, perp_site)?)?;
    let zd_perp = zeno_data(&ctx.data(&perp_model)?)?;
    let jobs: Vec<(f64, f64)> = cfg.taus.iter().flat_map(|&t| epsilons.iter().map(move |&e| (t, e))).collect();
    let cells: Vec<Vec<StatRow>> = jobs
        .par_iter()
        .map(|&(tau, eps)| perturb_cell(ctx, &model, &ret, &zd_perp, perp_site, tau, eps))
        .collect();
    let rows: Vec<StatRow> = cells.into_iter().flatten().collect();
    ctx.write(manifest, "perturb.csv", &rows, &STAT_COLUMNS)
}

fn perturb_cell(
    ctx: &Context,
    model: &QuantumModel,
    ret: &SpectralChargeData,
    zd_perp: &ZenoData,
    perp_site: usize,
    tau: f64,
    eps: f64,
) -> Vec<StatRow> {
    let m_max = ctx.cfg.m_max;
    let scale = ctx.scale;
    let mut rows = Vec::new();
    let mut push = |framework: &str, statistic: String, value: zenolab::Result<f64>, order: i32| {
        let (value, note) = match value {
            Ok(v) => (Some(scale.moment(v, order)), String::new()),
            Err(e) => (None, e.to_string()),
        };
        rows.push(StatRow { tau, epsilon: Some(eps), framework: framework.into(), statistic, value, note });
    };
    let renewal = (|| -> zenolab::Result<FirstDetectionStats> {
        let psi_in = zenolab::zeno::perturbed_initial_state(&model.psi_d, &basis_state(model.dim(), perp_site)?, eps)?;
        let d = ctx.data(&model.clone().with_psi_in(psi_in)?).map_err(|_| zenolab::Error::EmptySpectrum)?;
        Ok(converged_stats(&d, tau, tau, m_max, ctx.trunc)?.stats)
    })();
    let naive = zeno_stats(zd_perp, tau, m_max, Framework::Strobo, Problem::Transition, C64::new(0.0, 0.0));
    let shifted = converged_stats(ret, tau, (1.0 - eps) * tau, m_max, ctx.trunc);
    for m in 1..=m_max {
        let k = m - 1;
        let pick = |r: &zenolab::Result<FirstDetectionStats>| -> zenolab::Result<f64> {
            r.as_ref().map(|s| s.moments[k]).map_err(|e| zenolab::Error::Precondition(e.to_string()))
        };
        let order = m as i32;
        push("strobo", moment_name(m), pick(&renewal), order);
        for (mode, label) in [(PerturbMode::Uniform, "uniform"), (PerturbMode::Distant, "distant"), (PerturbMode::Close, "close")] {
            push(label, moment_name(m), perturbed_return_moments(zd_perp, tau, eps, m, mode), order);
        }
        push("zeno-transition", moment_name(m), pick(&naive), order);
        let shifted_m = shifted.as_ref().map(|s| s.stats.moments[k]).map_err(|e| zenolab::Error::Precondition(e.to_string()));
        push("shifted", moment_name(m), shifted_m, order);
    }
    push("shifted-formula", "mean".into(), shifted_protocol_mean(tau, eps, ret.w()), 1);
    rows
}

// ---------------------------------------------------------------- validate

fn model_check(cfg: &ExperimentConfig, base: &Path) -> Option<CriterionReport> {
    if matches!(cfg.model, ModelSpec::Line) {
        return None;
    }
    let name = "configured model return detection";
    let fail = |detail: String| CriterionReport { id: 0, name, passed: false, measured: f64::NAN, detail };
    let model = match cfg.build_model(base) {
        Ok(m) => m,
        Err(e) => {
            let msg = match e {
                crate::config::BuildError::Config(c) => c.0,
                crate::config::BuildError::Model(m) => m.to_string(),
            };
            return Some(fail(format!("model validation failed: {msg}")));
        }
    };
    let d = match spectral_charges(&model, None, cfg.tolerances.drop_tol) {
        Ok(d) => d.return_problem(),
        Err(e) => return Some(fail(format!("spectral reduction failed: {e}"))),
    };
    let taus = if cfg.taus.is_empty() { vec![0.5] } else { cfg.taus.clone() };
    let trunc = Truncation { n_start: 1024, tail_tol: cfg.tolerances.tail_tol, n_cap: cfg.tolerances.n_cap };
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for tau in taus {
        match converged_stats(&d, tau, tau, 1, trunc) {
            Ok(cs) => {
                let dev = (cs.stats.p_det - 1.0).abs();
                worst = worst.max(if cs.converged { dev } else { f64::INFINITY });
                detail.push(format!("tau={tau}: N*={}{}", cs.stats.truncation_n, if cs.converged { "" } else { " (cap)" }));
            }
            Err(e) => return Some(fail(format!("tau={tau}: {e}"))),
        }
    }
    Some(CriterionReport {
        id: 0,
        name,
        passed: worst <= PDET_ABS_TOL,
        measured: worst,
        detail: format!("|P_det - 1| tol {PDET_ABS_TOL:e}; {}", detail.join(", ")),
    })
}

fn validate(cli: &Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => {
            let mut c = ExperimentConfig::load(p)?;
            if let Some(seed) = cli.seed {
                c.override_seed(seed);
            }
            Some((c, p.parent().map(Path::to_path_buf).unwrap_or_default()))
        }
        None => None,
    };
    let known = validation::ids();
    let ids = match &cfg {
        Some((c, _)) if !c.criteria.is_empty() => {
            if let Some(bad) = c.criteria.iter().find(|i| !known.contains(i)) {
                return Err(Failure::Config(format!("criteria: unknown criterion {bad}")));
            }
            c.criteria.clone()
        }
        _ => known,
    };
    let mut reports: Vec<CriterionReport> = Vec::new();
    if let Some(r) = cfg.as_ref().and_then(|(c, base)| model_check(c, base)) {
        emit(&r);
        reports.push(r);
    }
    for id in ids {
        let r = validation::run(id).expect("id checked above");
        emit(&r);
        reports.push(r);
    }
    let out = cli.out.clone().or_else(|| cfg.as_ref().and_then(|(c, base)| c.output.as_ref().map(|o| base.join(o))));
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let body: String = reports.iter().map(|r| serde_json::to_string(r).expect("report serializes") + "\n").collect();
        std::fs::write(dir.join("report.jsonl"), body)?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{} ({})", r.id, r.name)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("failed criteria: {}", failed.join(", "))))
    }
}

fn emit(r: &CriterionReport) {
    log::info!("{}", r.line());
    println!("{}", serde_json::to_string(r).expect("report serializes"));
}
