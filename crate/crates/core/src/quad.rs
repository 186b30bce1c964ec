//! Gauss–Legendre panels with adaptive bisection.

use std::ops::{Add, Mul, Sub};

use crate::{Error, Result, C64};

pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn apply<T: QuadValue>(&self, f: &mut impl FnMut(f64) -> T, a: f64, b: f64) -> T {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * x) * (w * half);
        }
        acc
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone)]
pub struct Adaptive {
    rule: GaussLegendre,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for Adaptive {
    fn default() -> Self {
        Adaptive::new(1e-10)
    }
}

impl Adaptive {
    pub fn new(abs_tol: f64) -> Self {
        Adaptive { rule: GaussLegendre::new(20), abs_tol, max_panels: 200_000 }
    }

    /// Integrates over [a, b] starting from `initial` equal panels.
    ///
    /// Each panel is accepted once its one-panel and two-half-panel estimates
    /// agree within its share of the tolerance.
    pub fn integrate<T: QuadValue>(
        &self,
        mut f: impl FnMut(f64) -> T,
        a: f64,
        b: f64,
        initial: usize,
    ) -> Result<QuadResult<T>> {
        if b == a {
            return Ok(QuadResult { value: T::zero(), error: 0.0, panels: 0 });
        }
        let initial = initial.max(1);
        let width = (b - a).abs();
        let h = (b - a) / initial as f64;
        let mut stack: Vec<(f64, f64, T)> = (0..initial)
            .map(|k| {
                let lo = a + k as f64 * h;
                let hi = if k + 1 == initial { b } else { lo + h };
                (lo, hi, T::zero())
            })
            .collect();
        for item in stack.iter_mut() {
            item.2 = self.rule.apply(&mut f, item.0, item.1);
        }
        let mut total = T::zero();
        let mut err = 0.0;
        let mut panels = 0usize;
        while let Some((lo, hi, whole)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let left = self.rule.apply(&mut f, lo, mid);
            let right = self.rule.apply(&mut f, mid, hi);
            let halves = left + right;
            let diff = (halves - whole).magnitude();
            let share = self.abs_tol * (hi - lo).abs() / width;
            panels += 1;
            if diff <= share || (hi - lo).abs() < 1e-12 * width || panels + stack.len() >= self.max_panels {
                total = total + halves;
                err += diff;
            } else {
                stack.push((lo, mid, left));
                stack.push((mid, hi, right));
            }
        }
        if err > 10.0 * self.abs_tol {
            return Err(Error::Accuracy { achieved: err, target: self.abs_tol });
        }
        Ok(QuadResult { value: total, error: err, panels })
    }
}
