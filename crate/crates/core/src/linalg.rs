//! Dense linear algebra helpers on complex matrices.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, LU, SVD};

use crate::C64;

/// Eigenvector condition number above which the modal propagator is abandoned.
pub const MAX_EIGVEC_COND: f64 = 1e12;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn max_hermitian_defect(h: &DMatrix<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Ratio of extreme singular values.
pub fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
///
/// The complex Schur form `A = Q T Q†` is computed first; eigenvectors of the
/// triangular factor follow by back substitution.
pub fn general_eigen(a: &DMatrix<C64>) -> (Vec<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let (q, t) = Schur::new(a.clone()).unpack();
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let mut x = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut d = t[(i, i)] - t[(k, k)];
            if d.norm() < 1e-14 * scale {
                d = C64::new(1e-14 * scale, 0.0);
            }
            x[(i, k)] = -acc / d;
        }
    }
    let mut v = q * x;
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        col /= C64::new(norm, 0.0);
    }
    (values, v)
}

/// Propagator for `i d/dt ψ = A ψ` with a general (non-Hermitian) generator.
#[derive(Debug, Clone)]
pub enum Propagator {
    /// ψ(t) = V diag(e^{-iλt}) c with c = V⁻¹ψ(0).
    Modal {
        values: Vec<C64>,
        vectors: DMatrix<C64>,
        lu: Box<LU<C64, nalgebra::Dyn, nalgebra::Dyn>>,
    },
    /// Fixed-step matrix exponential.
    Stepping {
        generator: DMatrix<C64>,
        step: f64,
        step_map: DMatrix<C64>,
    },
}

impl Propagator {
    /// Builds the modal propagator, falling back to stepping with step
    /// `fallback_step` when the eigenvector basis is ill conditioned.
    pub fn new(a: &DMatrix<C64>, fallback_step: f64) -> Self {
        let (values, vectors) = general_eigen(a);
        let cond = condition_number(&vectors);
        if cond.is_finite() && cond <= MAX_EIGVEC_COND {
            let lu = Box::new(LU::new(vectors.clone()));
            Propagator::Modal { values, vectors, lu }
        } else {
            log::warn!(
                "eigenvector condition number {cond:.3e} exceeds {MAX_EIGVEC_COND:.0e}; \
                 switching to matrix-exponential stepping"
            );
            Self::stepping(a, fallback_step)
        }
    }

    pub fn stepping(a: &DMatrix<C64>, step: f64) -> Self {
        Propagator::Stepping {
            generator: a.clone(),
            step,
            step_map: expm_generator(a, step),
        }
    }

    pub fn is_modal(&self) -> bool {
        matches!(self, Propagator::Modal { .. })
    }

    /// States at each time of an ascending, nonnegative grid.
    pub fn evolve(&self, psi0: &DVector<C64>, grid: &[f64]) -> Vec<DVector<C64>> {
        match self {
            Propagator::Modal { values, vectors, lu } => {
                let c = lu.solve(psi0).expect("eigenvector matrix is invertible");
                grid.iter()
                    .map(|&t| {
                        let phased = DVector::from_iterator(
                            c.len(),
                            c.iter().zip(values).map(|(ck, lk)| ck * (-C64::i() * lk * t).exp()),
                        );
                        vectors * phased
                    })
                    .collect()
            }
            Propagator::Stepping { generator, step, step_map } => {
                let mut out = Vec::with_capacity(grid.len());
                let mut psi = psi0.clone();
                let mut now = 0.0;
                for &t in grid {
                    let dt = t - now;
                    let k = (dt / step).floor() as usize;
                    for _ in 0..k {
                        psi = step_map * &psi;
                    }
                    let rest = dt - k as f64 * step;
                    if rest > 1e-15 * step {
                        psi = expm_generator(generator, rest) * psi;
                    }
                    now = t;
                    out.push(psi.clone());
                }
                out
            }
        }
    }
}

/// exp(-i A t) by scaling and squaring.
pub fn expm_generator(a: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    (a * C64::new(0.0, -t)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hermitian_eigen_sorted() {
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&h);
        assert!((vals[0] - 0.0).abs() < 1e-12 && (vals[1] - 2.0).abs() < 1e-12);
        let r = &h * vecs.column(1) - vecs.column(1) * c(2.0, 0.0);
        assert!(r.norm() < 1e-12);
    }

    #[test]
    fn general_eigen_residual() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.0, -2.0), c(1.0, 0.0), c(0.0, 0.0),
                c(1.0, 0.0), c(0.5, 0.0), c(-1.0, 0.0),
                c(0.0, 0.0), c(-1.0, 0.0), c(0.3, -0.1),
            ],
        );
        let (vals, vecs) = general_eigen(&a);
        for k in 0..3 {
            let r = &a * vecs.column(k) - vecs.column(k) * vals[k];
            assert!(r.norm() < 1e-12, "residual {}", r.norm());
        }
    }

    #[test]
    fn stepping_matches_modal() {
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, -1.0), c(1.0, 0.0), c(1.0, 0.0), c(0.2, 0.0)]);
        let psi0 = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let grid = [0.0, 0.3, 1.7, 4.0];
        let modal = Propagator::new(&a, 0.01).evolve(&psi0, &grid);
        let step = Propagator::stepping(&a, 0.01).evolve(&psi0, &grid);
        for (x, y) in modal.iter().zip(&step) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}
