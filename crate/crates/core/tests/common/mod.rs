//! Shared test oracles: finite differences, quadrature, dense scans for
//! critical points, and frozen reference values for the canonical fixtures.
//! Everything here depends only on density *values* (or, where a scan oracle
//! is specified with gradients, on quantities cross-checked against finite
//! differences elsewhere) — never on the code paths under test.

#![allow(dead_code)]

use modalflow::density::DensityModel;
use modalflow::{point, Matrix, Point};

// Critical points of 0.5 N(0,1) + 0.5 N(3, 0.8^2), from an independent
// high-precision scan (sign changes of f' + bisection).
pub const BIMODAL1D_MODE_LEFT: f64 = 0.005299506457599070;
pub const BIMODAL1D_MODE_LEFT_VALUE: f64 = 0.19969424944127045;
pub const BIMODAL1D_VALLEY: f64 = 1.4854370324127883;
pub const BIMODAL1D_VALLEY_VALUE: f64 = 0.10772388119522354;
pub const BIMODAL1D_MODE_RIGHT: f64 = 2.9821010945479323;
pub const BIMODAL1D_MODE_RIGHT_VALUE: f64 = 0.25161431622972441;

// Critical points of 0.5 N((0,0), I) + 0.5 N((3,1), rot30(diag(1.2, 0.5))),
// same provenance (gradient-norm minima on a dense grid + refinement).
pub const BIMODAL2D_MODE_HIGH: [f64; 2] = [2.9813102678188712, 0.99124205209416549];
pub const BIMODAL2D_MODE_HIGH_VALUE: f64 = 0.10328763229927529;
pub const BIMODAL2D_MODE_LOW: [f64; 2] = [0.051706716135607907, 0.0039005221602479816];
pub const BIMODAL2D_MODE_LOW_VALUE: f64 = 0.08093101376056118;
pub const BIMODAL2D_SADDLE: [f64; 2] = [1.3721658951098703, 0.3173708234477588];
pub const BIMODAL2D_SADDLE_VALUE: f64 = 0.056763432549458467;

/// Central finite-difference gradient of the density value.
pub fn fd_gradient(model: &DensityModel, x: &Point, h: f64) -> Point {
    let d = x.len();
    Point::from_iterator(
        d,
        (0..d).map(|k| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            (model.value(&xp) - model.value(&xm)) / (2.0 * h)
        }),
    )
}

/// Finite-differenced analytic gradient, symmetrized.
pub fn fd_hessian(model: &DensityModel, x: &Point, h: f64) -> Matrix {
    let d = x.len();
    let mut out = Matrix::zeros(d, d);
    for k in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let gp = model.gradient(&xp);
        let gm = model.gradient(&xm);
        for i in 0..d {
            out[(i, k)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    0.5 * (&out + out.transpose())
}

/// Composite Simpson integral of the density over `[lo, hi]`.
pub fn simpson_mass_1d(model: &DensityModel, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let mut sum = model.value(&point(&[lo])) + model.value(&point(&[hi]));
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * model.value(&point(&[lo + k as f64 * h]));
    }
    sum * h / 3.0
}

/// Tensor-product Simpson integral over a 2D box.
pub fn simpson_mass_2d(model: &DensityModel, bounds: &[(f64, f64)], n: usize) -> f64 {
    let n = n + n % 2;
    let (x0, x1) = bounds[0];
    let (y0, y1) = bounds[1];
    let hx = (x1 - x0) / n as f64;
    let hy = (y1 - y0) / n as f64;
    let weight = |k: usize| -> f64 {
        if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut sum = 0.0;
    for j in 0..=n {
        let wy = weight(j);
        let y = y0 + j as f64 * hy;
        for i in 0..=n {
            sum += wy * weight(i) * model.value(&point(&[x0 + i as f64 * hx, y]));
        }
    }
    sum * hx * hy / 9.0
}

/// Critical points of a 1D model on `[lo, hi]`: sign changes of the
/// centrally finite-differenced derivative, refined by bisection. Depends on
/// density values only.
pub fn scan_critical_points_1d(model: &DensityModel, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = 1e-6;
    let deriv = |x: f64| {
        (model.value(&point(&[x + h])) - model.value(&point(&[x - h]))) / (2.0 * h)
    };
    let mut out = Vec::new();
    let step = (hi - lo) / n as f64;
    let mut prev_x = lo;
    let mut prev = deriv(lo);
    for k in 1..=n {
        let x = lo + k as f64 * step;
        let cur = deriv(x);
        if prev != 0.0 && (prev > 0.0) != (cur > 0.0) {
            let mut a = prev_x;
            let mut b = x;
            let da = prev;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let dm = deriv(m);
                if (dm > 0.0) == (da > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        prev = cur;
        prev_x = x;
    }
    out
}

/// Undamped Newton refinement of a 2D critical point, independent of the
/// search path under test.
pub fn refine_critical_2d(model: &DensityModel, seed: [f64; 2]) -> Option<Point> {
    let mut x = point(&seed);
    for _ in 0..100 {
        let ev = model.eval(&x).ok()?;
        if ev.gradient.norm() < 1e-13 {
            return Some(x);
        }
        let delta = ev.hessian.lu().solve(&(-ev.gradient))?;
        x += delta;
    }
    None
}

/// Gradient-norm local minima on a dense grid, refined; the independent
/// critical-point oracle for 2D fixtures.
pub fn scan_critical_points_2d(
    model: &DensityModel,
    bounds: &[(f64, f64)],
    n: usize,
) -> Vec<Point> {
    let (x0, x1) = bounds[0];
    let (y0, y1) = bounds[1];
    let hx = (x1 - x0) / n as f64;
    let hy = (y1 - y0) / n as f64;
    let mut gnorm = vec![0.0f64; (n + 1) * (n + 1)];
    for j in 0..=n {
        for i in 0..=n {
            let x = point(&[x0 + i as f64 * hx, y0 + j as f64 * hy]);
            gnorm[j * (n + 1) + i] = model.gradient(&x).norm();
        }
    }
    let mut out: Vec<Point> = Vec::new();
    for j in 1..n {
        for i in 1..n {
            let g = gnorm[j * (n + 1) + i];
            if g > 1e-2 {
                continue;
            }
            let is_min = (-1..=1).all(|dj: isize| {
                (-1..=1).all(|di: isize| {
                    gnorm[(j as isize + dj) as usize * (n + 1) + (i as isize + di) as usize] >= g
                })
            });
            if !is_min {
                continue;
            }
            if let Some(refined) =
                refine_critical_2d(model, [x0 + i as f64 * hx, y0 + j as f64 * hy])
            {
                if !out.iter().any(|p| (p - &refined).norm() < 1e-6) {
                    out.push(refined);
                }
            }
        }
    }
    out.sort_by(|a, b| {
        model
            .value(b)
            .partial_cmp(&model.value(a))
            .unwrap()
            .then(a[0].partial_cmp(&b[0]).unwrap())
    });
    out
}
