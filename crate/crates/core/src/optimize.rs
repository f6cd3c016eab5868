//! One-dimensional maximization and small box-constrained quadratic programs.

use nalgebra::{DMatrix, DVector};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Brent's method (golden section with parabolic steps) for a maximum of `f` on `[a, b]`.
pub fn brent_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Maximum {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = -f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut evaluations = 1;
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * (x.abs() + 1e-3);
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Maximum { x, fx: -fx, evaluations, converged: true };
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = -f(u);
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Maximum { x, fx: -fx, evaluations, converged: false }
}

/// Evaluates `f` on the sorted, deduplicated `grid` and refines the best point
/// with Brent inside the bracket formed by its neighbours.
pub fn grid_then_brent<F: FnMut(f64) -> f64>(mut f: F, grid: &[f64], tol: f64, max_iter: usize) -> Maximum {
    let mut pts: Vec<f64> = grid.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    assert!(!pts.is_empty(), "empty grid");
    let vals: Vec<f64> = pts.iter().map(|&x| f(x)).collect();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] || vals[best].is_nan() {
            best = i;
        }
    }
    let mut evaluations = pts.len();
    let lo = pts[best.saturating_sub(1)];
    let hi = pts[(best + 1).min(pts.len() - 1)];
    if hi <= lo {
        return Maximum { x: pts[best], fx: vals[best], evaluations, converged: true };
    }
    let refined = brent_max(&mut f, lo, hi, tol, max_iter);
    evaluations += refined.evaluations;
    if refined.fx >= vals[best] {
        Maximum { evaluations, ..refined }
    } else {
        Maximum { x: pts[best], fx: vals[best], evaluations, converged: refined.converged }
    }
}

/// Minimizes `½ xᵀHx - gᵀx` over the box `lo ≤ x ≤ hi`, with `H` symmetric positive semidefinite.
///
/// Small dimensions are solved exactly by enumerating active sets; coordinates
/// whose curvature vanishes are left at the projection of zero.
pub fn box_qp(h: &[Vec<f64>], g: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    let d = g.len();
    if d == 0 {
        return Vec::new();
    }
    // Jacobi scaling: x = D y with D = diag(H)^{-1/2}
    let scale: Vec<f64> = (0..d).map(|i| if h[i][i] > 0.0 { 1.0 / h[i][i].sqrt() } else { 0.0 }).collect();
    let active: Vec<usize> = (0..d).filter(|&i| scale[i] > 0.0).collect();
    let mut x: Vec<f64> = bounds.iter().map(|&(lo, hi)| 0.0f64.clamp(lo, hi)).collect();
    let m = active.len();
    if m == 0 {
        return x;
    }
    let hs = DMatrix::from_fn(m, m, |a, b| h[active[a]][active[b]] * scale[active[a]] * scale[active[b]]);
    let gs = DVector::from_fn(m, |a, _| g[active[a]] * scale[active[a]]);
    let lo: Vec<f64> = active.iter().map(|&i| bounds[i].0 / scale[i]).collect();
    let hi: Vec<f64> = active.iter().map(|&i| bounds[i].1 / scale[i]).collect();
    let objective = |y: &DVector<f64>| 0.5 * y.dot(&(&hs * y)) - gs.dot(y);
    let feasible = |y: &DVector<f64>| (0..m).all(|a| y[a] >= lo[a] - 1e-12 * lo[a].abs() && y[a] <= hi[a] + 1e-12 * hi[a].abs());

    let solve_pattern = |pattern: &[u8]| -> Option<DVector<f64>> {
        // 0 free, 1 at lower, 2 at upper
        let mut y = DVector::zeros(m);
        let free: Vec<usize> = (0..m).filter(|&a| pattern[a] == 0).collect();
        for a in 0..m {
            match pattern[a] {
                1 => y[a] = lo[a],
                2 => y[a] = hi[a],
                _ => {}
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let sub = DMatrix::from_fn(k, k, |p, q| hs[(free[p], free[q])]);
            let rhs = DVector::from_fn(k, |p, _| {
                let a = free[p];
                let fixed: f64 = (0..m).filter(|&b| pattern[b] != 0).map(|b| hs[(a, b)] * y[b]).sum();
                gs[a] - fixed
            });
            let sol = sub.cholesky()?.solve(&rhs);
            for (p, &a) in free.iter().enumerate() {
                y[a] = sol[p];
            }
        }
        feasible(&y).then_some(y)
    };

    let best = if let Some(y) = solve_pattern(&vec![0; m]) {
        Some(y)
    } else if m <= 8 {
        let mut best: Option<(f64, DVector<f64>)> = None;
        let total = 3usize.pow(m as u32);
        let mut pattern = vec![0u8; m];
        for code in 1..total {
            let mut c = code;
            for p in pattern.iter_mut() {
                *p = (c % 3) as u8;
                c /= 3;
            }
            if let Some(y) = solve_pattern(&pattern) {
                let v = objective(&y);
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, y));
                }
            }
        }
        best.map(|(_, y)| y)
    } else {
        None
    };
    let y = best.unwrap_or_else(|| {
        // projected coordinate descent for large dimensions
        let mut y = DVector::from_fn(m, |a, _| 0.0f64.clamp(lo[a], hi[a]));
        for _ in 0..10_000 {
            let mut moved = 0.0f64;
            for a in 0..m {
                let r = gs[a] - (0..m).filter(|&b| b != a).map(|b| hs[(a, b)] * y[b]).sum::<f64>();
                let new = (r / hs[(a, a)]).clamp(lo[a], hi[a]);
                moved = moved.max((new - y[a]).abs());
                y[a] = new;
            }
            if moved < 1e-14 {
                break;
            }
        }
        y
    });
    for (a, &i) in active.iter().enumerate() {
        x[i] = (y[a] * scale[i]).clamp(bounds[i].0, bounds[i].1);
    }
    x
}
