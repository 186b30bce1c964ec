//! Root tracking along a positive parameter by geometric continuation.

use crate::C64;

const MAX_RATIO: f64 = 1.25;
const MIN_RATIO_EXCESS: f64 = 1e-6;

pub(crate) fn pairwise_distinct(zs: &[C64], tol: f64) -> bool {
    for i in 0..zs.len() {
        for j in 0..i {
            if (zs[i] - zs[j]).norm() < tol * (1.0 + zs[i].norm()) {
                return false;
            }
        }
    }
    true
}

/// Carries `roots` known at parameter `start` to `target`.
///
/// `solve(t, guess)` polishes one root at parameter `t`; `valid` rejects a
/// whole step (collisions, wrong half plane). The first step predicts with
/// `scale(from, to, root)`, later steps extrapolate linearly. A rejected step
/// halves the log step; `None` once the step underflows.
pub(crate) fn continue_roots(
    start: f64,
    target: f64,
    mut roots: Vec<C64>,
    solve: impl Fn(f64, C64) -> Option<C64>,
    valid: impl Fn(&[C64]) -> bool,
    scale: impl Fn(f64, f64, C64) -> C64,
) -> Option<Vec<C64>> {
    let up = target >= start;
    let mut t = start;
    let mut prev: Option<(f64, Vec<C64>)> = None;
    let mut ratio = MAX_RATIO;
    while (up && t < target) || (!up && t > target) {
        let next = if up { (t * ratio).min(target) } else { (t / ratio).max(target) };
        let predicted: Vec<C64> = match &prev {
            Some((tp, rp)) => roots.iter().zip(rp).map(|(rc, ro)| rc + (rc - ro) * ((next - t) / (t - tp))).collect(),
            None => roots.iter().map(|&r| scale(t, next, r)).collect(),
        };
        let trial: Option<Vec<C64>> = predicted
            .iter()
            .map(|&g| {
                let r = solve(next, g)?;
                ((r - g).norm() < 0.2 + 0.1 * g.norm()).then_some(r)
            })
            .collect();
        match trial {
            Some(r) if valid(&r) => {
                prev = Some((t, std::mem::replace(&mut roots, r)));
                t = next;
                ratio = (1.0 + 1.5 * (ratio - 1.0)).min(MAX_RATIO);
            }
            _ => {
                ratio = 1.0 + 0.5 * (ratio - 1.0);
                if ratio - 1.0 < MIN_RATIO_EXCESS {
                    return None;
                }
            }
        }
    }
    Some(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_square_roots() {
        // Roots of z² = t followed from t = 1 to t = 9.
        let solve = |t: f64, mut z: C64| {
            for _ in 0..50 {
                let step = (z * z - t) / (z * 2.0);
                z -= step;
                if step.norm() < 1e-15 {
                    return Some(z);
                }
            }
            None
        };
        let roots = continue_roots(
            1.0,
            9.0,
            vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
            solve,
            |r| pairwise_distinct(r, 1e-8),
            |a, b, z| z * (b / a).sqrt(),
        )
        .unwrap();
        assert!((roots[0] - 3.0).norm() < 1e-12 && (roots[1] + 3.0).norm() < 1e-12);
    }
}
