//! Finite quantum models and their reduction to spectral charge data.
//!
//! A [`QuantumModel`] holds a Hermitian Hamiltonian and the detection and
//! initial states. [`SpectralChargeData`] keeps only what the first-detection
//! problem depends on: the distinct energy levels `E_l` that overlap with the
//! detection state, their weights `p_l = ⟨ψd|P_l|ψd⟩` and the amplitudes
//! `q_l` defined by `p_l q_l = ⟨ψd|P_l|ψin⟩`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_eigen, max_hermitian_defect};
use crate::{Error, Result, C64};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const NORM_TOL: f64 = 1e-12;
pub const DEFAULT_DROP_TOL: f64 = 1e-12;
/// Relative to the spectral width.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumModel {
    pub hamiltonian: DMatrix<C64>,
    pub psi_d: DVector<C64>,
    pub psi_in: DVector<C64>,
}

impl QuantumModel {
    pub fn new(hamiltonian: DMatrix<C64>, psi_d: DVector<C64>, psi_in: DVector<C64>) -> Result<Self> {
        let model = QuantumModel { hamiltonian, psi_d, psi_in };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.hamiltonian.nrows();
        if n == 0 || self.hamiltonian.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "hamiltonian must be square and nonempty, got {}x{}",
                n,
                self.hamiltonian.ncols()
            )));
        }
        if self.hamiltonian.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidModel("hamiltonian has non-finite entries".into()));
        }
        let defect = max_hermitian_defect(&self.hamiltonian);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidModel(format!("hamiltonian not Hermitian (defect {defect:.3e})")));
        }
        for (name, v) in [("psi_d", &self.psi_d), ("psi_in", &self.psi_in)] {
            if v.len() != n {
                return Err(Error::InvalidModel(format!("{name} has length {}, expected {n}", v.len())));
            }
            let norm = v.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidModel(format!("{name} has norm {norm}, expected 1")));
            }
        }
        Ok(())
    }

    pub fn with_psi_in(mut self, psi_in: DVector<C64>) -> Result<Self> {
        self.psi_in = psi_in;
        self.validate()?;
        Ok(self)
    }

    pub fn with_psi_d(mut self, psi_d: DVector<C64>) -> Result<Self> {
        self.psi_d = psi_d;
        self.validate()?;
        Ok(self)
    }

    pub fn overlap(&self) -> C64 {
        self.psi_d.dotc(&self.psi_in)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn to_toml_string(&self) -> String {
        let pairs = |it: &mut dyn Iterator<Item = &C64>| it.map(|z| [z.re, z.im]).collect::<Vec<_>>();
        let n = self.dim();
        let mut row_major = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                row_major.push([self.hamiltonian[(i, j)].re, self.hamiltonian[(i, j)].im]);
            }
        }
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            dim: n,
            hamiltonian: row_major,
            psi_d: pairs(&mut self.psi_d.iter()),
            psi_in: pairs(&mut self.psi_in.iter()),
        };
        toml::to_string(&file).expect("model file serializes")
    }
}

pub const MODEL_FILE_VERSION: u32 = 1;

/// On-disk model schema. Complex numbers are `[re, im]` pairs and the
/// Hamiltonian is stored row-major as `dim * dim` pairs.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    dim: usize,
    hamiltonian: Vec<[f64; 2]>,
    psi_d: Vec<[f64; 2]>,
    psi_in: Vec<[f64; 2]>,
}

impl ModelFile {
    fn into_model(self) -> Result<QuantumModel> {
        if self.version != MODEL_FILE_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model file version {} (expected {MODEL_FILE_VERSION})",
                self.version
            )));
        }
        let n = self.dim;
        if self.hamiltonian.len() != n * n {
            return Err(Error::InvalidModel(format!(
                "hamiltonian has {} entries, expected {}",
                self.hamiltonian.len(),
                n * n
            )));
        }
        let c = |p: &[f64; 2]| C64::new(p[0], p[1]);
        let h = DMatrix::from_row_iterator(n, n, self.hamiltonian.iter().map(c));
        let psi_d = DVector::from_iterator(self.psi_d.len(), self.psi_d.iter().map(c));
        let psi_in = DVector::from_iterator(self.psi_in.len(), self.psi_in.iter().map(c));
        QuantumModel::new(h, psi_d, psi_in)
    }
}

pub fn basis_state(dim: usize, site: usize) -> Result<DVector<C64>> {
    if site >= dim {
        return Err(Error::InvalidModel(format!("site {site} outside dimension {dim}")));
    }
    let mut v = DVector::zeros(dim);
    v[site] = C64::new(1.0, 0.0);
    Ok(v)
}

pub fn uniform_state(dim: usize) -> DVector<C64> {
    DVector::from_element(dim, C64::new(1.0 / (dim as f64).sqrt(), 0.0))
}

/// Normalizes a vector, rejecting the zero vector.
pub fn normalized(v: DVector<C64>) -> Result<DVector<C64>> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvalidModel("state vector cannot be normalized".into()));
    }
    Ok(v / C64::new(n, 0.0))
}

/// Nearest-neighbor ring with hopping `-gamma`; both states start on site 0.
pub fn build_ring(sites: usize, gamma: f64) -> Result<QuantumModel> {
    if sites < 3 {
        return Err(Error::InvalidModel(format!("ring needs at least 3 sites, got {sites}")));
    }
    let mut h = DMatrix::zeros(sites, sites);
    for x in 0..sites {
        let y = (x + 1) % sites;
        h[(x, y)] = C64::new(-gamma, 0.0);
        h[(y, x)] = C64::new(-gamma, 0.0);
    }
    let e0 = basis_state(sites, 0)?;
    QuantumModel::new(h, e0.clone(), e0)
}

/// Seeded GUE sample rescaled so that its spectrum spans exactly [-2γ, 2γ].
pub fn build_gue(dim: usize, seed: u64, gamma: f64) -> Result<QuantumModel> {
    if dim < 2 {
        return Err(Error::InvalidModel(format!("GUE dimension must be at least 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim {
        let d: f64 = StandardNormal.sample(&mut rng);
        a[(i, i)] = C64::new(d, 0.0);
        for j in (i + 1)..dim {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let z = C64::new(re, im) / std::f64::consts::SQRT_2;
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
    let (vals, vecs) = hermitian_eigen(&a);
    let (lo, hi) = (vals[0], vals[dim - 1]);
    let scale = 4.0 * gamma / (hi - lo);
    let centre = 0.5 * (hi + lo);
    // Rebuild from the eigensystem so the endpoints land on ±2γ to rounding.
    let mapped: Vec<f64> = vals
        .iter()
        .enumerate()
        .map(|(k, &e)| match k {
            0 => -2.0 * gamma,
            k if k == dim - 1 => 2.0 * gamma,
            _ => scale * (e - centre),
        })
        .collect();
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(dim, mapped.iter().map(|&e| C64::new(e, 0.0))));
    let mut h = &vecs * diag * vecs.adjoint();
    let herm = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    h = herm;
    let e0 = basis_state(dim, 0)?;
    QuantumModel::new(h, e0.clone(), e0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralChargeData {
    pub levels: Vec<f64>,
    pub charges: Vec<f64>,
    pub amplitudes: Vec<C64>,
    pub overlap: C64,
}

impl SpectralChargeData {
    /// Builds charge data directly, with `overlap = Σ p_l q_l`.
    pub fn from_parts(levels: Vec<f64>, charges: Vec<f64>, amplitudes: Vec<C64>) -> Result<Self> {
        if levels.is_empty() || levels.len() != charges.len() || levels.len() != amplitudes.len() {
            return Err(Error::InvalidModel("levels, charges and amplitudes must have equal nonzero length".into()));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("levels must be strictly ascending".into()));
        }
        if charges.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidModel("charges must be positive".into()));
        }
        let total: f64 = charges.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidModel(format!("charges sum to {total}, expected 1")));
        }
        let overlap = charges.iter().zip(&amplitudes).map(|(p, q)| q * p).sum();
        Ok(SpectralChargeData { levels, charges, amplitudes, overlap })
    }

    pub fn from_model(model: &QuantumModel) -> Result<Self> {
        spectral_charges(model, None, DEFAULT_DROP_TOL)
    }

    /// Number of contributing levels.
    pub fn w(&self) -> usize {
        self.levels.len()
    }

    /// `p_l q_l`.
    pub fn weights_in(&self) -> Vec<C64> {
        self.charges.iter().zip(&self.amplitudes).map(|(p, q)| q * p).collect()
    }

    /// Same levels and charges with ψin replaced by ψd.
    pub fn return_problem(&self) -> Self {
        SpectralChargeData {
            levels: self.levels.clone(),
            charges: self.charges.clone(),
            amplitudes: vec![C64::new(1.0, 0.0); self.w()],
            overlap: C64::new(1.0, 0.0),
        }
    }

    pub fn spectral_width(&self) -> f64 {
        self.levels[self.w() - 1] - self.levels[0]
    }

    /// `ω0 = ⟨ψd|H|ψd⟩` and `⟨ψd|H(1−D)H|ψd⟩`.
    pub fn energy_moments(&self) -> (f64, f64) {
        let mean: f64 = self.charges.iter().zip(&self.levels).map(|(p, e)| p * e).sum();
        let second: f64 = self.charges.iter().zip(&self.levels).map(|(p, e)| p * e * e).sum();
        (mean, (second - mean * mean).max(0.0))
    }

    fn psi_sum(&self, s: C64, weighted: bool, power: i32) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for l in 0..self.w() {
            let d = s + C64::new(0.0, self.levels[l]);
            let num = if weighted { self.amplitudes[l] * self.charges[l] } else { C64::new(self.charges[l], 0.0) };
            acc += num / d.powi(power);
        }
        acc
    }

    fn check_psi(&self, s: C64) -> Result<()> {
        for &e in &self.levels {
            if (s + C64::new(0.0, e)).norm() <= 1e-14 * (1.0 + s.norm()) {
                return Err(Error::SingularEvaluation(format!("s = {s} hits the level E = {e}")));
            }
        }
        Ok(())
    }

    /// `u_Ψ(s) = Σ p_l / (s + iE_l)`.
    pub fn u_psi(&self, s: C64) -> Result<C64> {
        self.check_psi(s)?;
        Ok(self.u_psi_raw(s))
    }

    /// `v_Ψ(s) = Σ p_l q_l / (s + iE_l)`.
    pub fn v_psi(&self, s: C64) -> Result<C64> {
        self.check_psi(s)?;
        Ok(self.v_psi_raw(s))
    }

    /// `u_Ψ'(s) = −Σ p_l / (s + iE_l)²`.
    pub fn u_psi_prime(&self, s: C64) -> Result<C64> {
        self.check_psi(s)?;
        Ok(self.u_psi_prime_raw(s))
    }

    pub(crate) fn u_psi_raw(&self, s: C64) -> C64 {
        self.psi_sum(s, false, 1)
    }

    pub(crate) fn v_psi_raw(&self, s: C64) -> C64 {
        self.psi_sum(s, true, 1)
    }

    pub(crate) fn u_psi_prime_raw(&self, s: C64) -> C64 {
        -self.psi_sum(s, false, 2)
    }

    /// `e^{−iτE_l}` for every level.
    pub fn phases(&self, tau: f64) -> Vec<C64> {
        self.levels.iter().map(|&e| C64::new(0.0, -tau * e).exp()).collect()
    }

    fn check_phi(&self, z: C64, tau: f64) -> Result<()> {
        for c in self.phases(tau) {
            if (C64::new(1.0, 0.0) - z * c).norm() <= 1e-14 {
                return Err(Error::SingularEvaluation(format!("z = {z} hits a phase pole")));
            }
        }
        Ok(())
    }

    /// `u_φ(z) = Σ p_l / (1 − z e^{−iτE_l})`.
    pub fn u_phi(&self, z: C64, tau: f64) -> Result<C64> {
        self.check_phi(z, tau)?;
        Ok(self.phi_sums(z, &self.phases(tau)).0)
    }

    /// `v_φ(z) = Σ p_l q_l / (1 − z e^{−iτE_l})`.
    pub fn v_phi(&self, z: C64, tau: f64) -> Result<C64> {
        self.check_phi(z, tau)?;
        Ok(self.phi_sums(z, &self.phases(tau)).1)
    }

    /// `u_φ'(z) = Σ p_l e^{−iτE_l} / (1 − z e^{−iτE_l})²`.
    pub fn u_phi_prime(&self, z: C64, tau: f64) -> Result<C64> {
        self.check_phi(z, tau)?;
        Ok(self.phi_sums(z, &self.phases(tau)).2)
    }

    /// `(u_φ, v_φ, u_φ')` at `z` for precomputed phases.
    pub(crate) fn phi_sums(&self, z: C64, phases: &[C64]) -> (C64, C64, C64) {
        let one = C64::new(1.0, 0.0);
        let (mut u, mut v, mut du) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for l in 0..self.w() {
            let inv = one / (one - z * phases[l]);
            let p = self.charges[l];
            u += inv * p;
            v += inv * self.amplitudes[l] * p;
            du += phases[l] * inv * inv * p;
        }
        (u, v, du)
    }
}

/// Reduces a model to charge data.
///
/// Eigenvalues closer than `merge_tol` (default `1e-9` times the spectral
/// width) form one level; levels with `p_l < drop_tol` are discarded.
pub fn spectral_charges(model: &QuantumModel, merge_tol: Option<f64>, drop_tol: f64) -> Result<SpectralChargeData> {
    model.validate()?;
    let (vals, vecs) = hermitian_eigen(&model.hamiltonian);
    let width = vals[vals.len() - 1] - vals[0];
    let merge_tol = merge_tol.unwrap_or(DEFAULT_MERGE_TOL * if width > 0.0 { width } else { 1.0 });
    let d_proj: Vec<C64> = (0..vals.len()).map(|k| vecs.column(k).dotc(&model.psi_d)).collect();
    let in_proj: Vec<C64> = (0..vals.len()).map(|k| vecs.column(k).dotc(&model.psi_in)).collect();

    let mut levels = Vec::new();
    let mut charges = Vec::new();
    let mut weights = Vec::new();
    let mut k = 0;
    while k < vals.len() {
        let mut end = k + 1;
        while end < vals.len() && vals[end] - vals[end - 1] < merge_tol {
            end += 1;
        }
        let energy = vals[k..end].iter().sum::<f64>() / (end - k) as f64;
        let p: f64 = d_proj[k..end].iter().map(|a| a.norm_sqr()).sum();
        let pq: C64 = (k..end).map(|j| d_proj[j].conj() * in_proj[j]).sum();
        if p >= drop_tol {
            levels.push(energy);
            charges.push(p);
            weights.push(pq);
        }
        k = end;
    }
    if levels.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let amplitudes = weights.iter().zip(&charges).map(|(pq, p)| pq / p).collect();
    Ok(SpectralChargeData { levels, charges, amplitudes, overlap: model.overlap() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastScales {
    /// `⟨ψd|H|ψd⟩`.
    pub omega0: f64,
    /// `1/√⟨ψd|H(1−D)H|ψd⟩`.
    pub tau_z: f64,
}

pub fn zeno_time(model: &QuantumModel) -> Result<FastScales> {
    let h_d = &model.hamiltonian * &model.psi_d;
    let omega0 = model.psi_d.dotc(&h_d).re;
    let leak = &h_d - &model.psi_d * C64::new(omega0, 0.0);
    let var = leak.norm_squared();
    let scale = model.hamiltonian.iter().map(|z| z.norm_sqr()).sum::<f64>().max(1e-300);
    if var <= 1e-24 * scale {
        return Err(Error::InfiniteZenoTime);
    }
    Ok(FastScales { omega0, tau_z: 1.0 / var.sqrt() })
}
