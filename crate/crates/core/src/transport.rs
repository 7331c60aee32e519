//! Transport between nearby level sets: metric projection by
//! predictor–corrector (the infinitesimal displacement `grad f / |grad f|^2`
//! as predictor, constrained Gauss–Newton as corrector), a brute-force
//! contour oracle, Hausdorff distances, reach lower bounds, and the iterated
//! projection walk.

use crate::contour::{dist, resample_contour, Contour};
use crate::density::DensityModel;
use crate::{Matrix, Point};
use thiserror::Error;

pub const DEFAULT_LEVEL_TOL: f64 = 1e-9;
pub const DEFAULT_NORMALITY_TOL: f64 = 1e-6;
pub const DEFAULT_DENOM_FLOOR: f64 = 1e-8;
const MAX_CORRECTOR_ITERS: usize = 100;
/// Gaps above this are treated as evidence of a unique nearest point; below
/// it ties cannot be distinguished from the oracle's own resolution.
pub const UNIQUENESS_GAP_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("gradient norm {grad_norm:.3e} below floor (near a critical point)")]
    NearCritical { grad_norm: f64 },
    #[error("corrector did not converge in {iters} iterations (level residual {level_residual:.3e})")]
    NoConvergence { iters: usize, level_residual: f64 },
    #[error("point has dimension {got}, model has dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone)]
pub struct ProjectionParams {
    pub level_tol: f64,
    pub normality_tol: f64,
    pub denom_floor: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            level_tol: DEFAULT_LEVEL_TOL,
            normality_tol: DEFAULT_NORMALITY_TOL,
            denom_floor: DEFAULT_DENOM_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub point: Point,
    pub iterations: usize,
    /// `|f(point) - (t + eta)|`
    pub level_residual: f64,
    /// Sine of the angle between `point - x` and `grad f(point)`.
    pub normality_residual: f64,
    /// Filled in when a brute-force oracle was consulted.
    pub unique: Option<bool>,
}

/// Metric projection of `x` (at level `t = f(x)`) onto the level set at
/// `t + eta`.
///
/// The predictor step moves by `eta * grad f / |grad f|^2`; the corrector
/// solves `min |y - x|` subject to `f(y) = t + eta` by Newton iteration on
/// the stationarity system, until both the level residual and the
/// orthogonality of `y - x` to the target tangent space are met.
pub fn metric_project(
    model: &DensityModel,
    x: &Point,
    eta: f64,
    params: &ProjectionParams,
) -> Result<ProjectionResult, ProjectError> {
    let d = model.dim();
    if x.len() != d {
        return Err(ProjectError::DimensionMismatch {
            got: x.len(),
            want: d,
        });
    }
    let (t, g0) = model.value_grad(x);
    let g0_norm = g0.norm();
    if g0_norm < params.denom_floor {
        return Err(ProjectError::NearCritical { grad_norm: g0_norm });
    }
    let target_total = t + eta;

    // Continuation on the target level: each stage raises the constraint by
    // at most 0.1 * |grad f| in level units (a displacement of about 0.1), so
    // the predictor stays in the corrector's convergence basin even when the
    // total step is large relative to the local gradient.
    let mut y = x.clone();
    let mut target = t;
    let mut iterations = 0usize;
    let mut level_residual = (model.value(&y) - target_total).abs();

    loop {
        let gy = model.gradient(&y);
        let gn = gy.norm();
        if gn < params.denom_floor {
            return Err(ProjectError::NearCritical { grad_norm: gn });
        }
        let remaining = target_total - target;
        let stage = remaining.clamp(-0.1 * gn, 0.1 * gn);
        target += stage;
        let last_stage = target == target_total;
        // Predictor along the current normal direction.
        y += &gy * (stage / (gn * gn));
        let mut lambda = (&y - x).dot(&gy) / (gn * gn);

        loop {
            if iterations >= MAX_CORRECTOR_ITERS {
                return Err(ProjectError::NoConvergence {
                    iters: iterations,
                    level_residual,
                });
            }
            iterations += 1;
            let ev = model.eval(&y).expect("dimension checked");
            let gnorm = ev.gradient.norm();
            if gnorm < params.denom_floor {
                return Err(ProjectError::NearCritical { grad_norm: gnorm });
            }
            level_residual = (ev.value - target).abs();
            let normality_residual = sine_angle(&(&y - x), &ev.gradient);
            if level_residual <= params.level_tol && normality_residual <= params.normality_tol {
                if last_stage {
                    return Ok(ProjectionResult {
                        point: y,
                        iterations,
                        level_residual,
                        normality_residual,
                        unique: None,
                    });
                }
                break;
            }

            // Stationarity system: y - x = lambda * grad f(y), f(y) = target.
            let mut jac = Matrix::zeros(d + 1, d + 1);
            let mut rhs = Point::zeros(d + 1);
            for i in 0..d {
                for j in 0..d {
                    jac[(i, j)] = -lambda * ev.hessian[(i, j)];
                }
                jac[(i, i)] += 1.0;
                jac[(i, d)] = -ev.gradient[i];
                jac[(d, i)] = ev.gradient[i];
                rhs[i] = -(y[i] - x[i] - lambda * ev.gradient[i]);
            }
            rhs[d] = -(ev.value - target);
            let Some(delta) = jac.lu().solve(&rhs) else {
                return Err(ProjectError::NoConvergence {
                    iters: iterations,
                    level_residual,
                });
            };

            // Backtracking on the residual norm.
            let res_norm = |yc: &Point, lc: f64| -> f64 {
                let (v, g) = model.value_grad(yc);
                let mut s = (v - target).powi(2);
                for i in 0..d {
                    s += (yc[i] - x[i] - lc * g[i]).powi(2);
                }
                s.sqrt()
            };
            let current = res_norm(&y, lambda);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let y_new = &y + delta.rows(0, d) * step;
                let l_new = lambda + step * delta[d];
                if res_norm(&y_new, l_new) < current {
                    y = y_new;
                    lambda = l_new;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(ProjectError::NoConvergence {
                    iters: iterations,
                    level_residual,
                });
            }
        }
    }
}

/// `sin` of the angle between `v` and `n` (0 when either vanishes, so the
/// trivial 1D case and `eta = 0` pass). Computed from the perpendicular
/// component: `sqrt(1 - cos^2)` bottoms out near `sqrt(eps)` and cannot
/// certify tight tolerances.
fn sine_angle(v: &Point, n: &Point) -> f64 {
    let vn = v.norm();
    let nn = n.norm();
    if vn == 0.0 || nn == 0.0 || v.len() == 1 {
        return 0.0;
    }
    let unit = n / nn;
    let perp = v - &unit * v.dot(&unit);
    perp.norm() / vn
}

/// Brute-force nearest point on a (densely resampled) contour.
#[derive(Debug, Clone)]
pub struct BruteForce2d {
    pub point: [f64; 2],
    pub distance: f64,
    /// Distance difference between the best point outside an exclusion ball
    /// around the optimum and the optimum itself; positive gaps diagnose a
    /// unique projection.
    pub gap: f64,
}

impl BruteForce2d {
    pub fn unique(&self) -> bool {
        self.gap > UNIQUENESS_GAP_TOL
    }
}

/// Exhaustive projection of `x` onto the contour: exact closest point per
/// resampled segment, then refinement onto the true level curve (bisection of
/// `f - t` along the local normal plus golden-section search along the
/// tangent, both using only density values), and a second search excluded
/// from a ball around the optimum for the uniqueness gap.
pub fn brute_force_project_2d(
    model: &DensityModel,
    contour: &Contour,
    x: [f64; 2],
    spacing: f64,
    exclusion_radius: f64,
) -> BruteForce2d {
    let polylines = resample_contour(contour, spacing);
    let mut best = ([0.0, 0.0], f64::INFINITY, 0usize, 0usize);
    for (li, poly) in polylines.iter().enumerate() {
        let closed = contour.closed[li];
        let m = poly.len();
        let seg_count = if closed { m } else { m - 1 };
        for si in 0..seg_count {
            let a = poly[si];
            let b = poly[(si + 1) % m];
            let p = seg_closest(a, b, x);
            let d = dist(p, x);
            if d < best.1 {
                best = (p, d, li, si);
            }
        }
    }
    let (p0, d0, li, si) = best;
    let tangent = segment_tangent(&polylines[li], contour.closed[li], si);
    // The chord polyline sits inside the curve by its sagitta; free the
    // optimum from that bias before measuring.
    let half_width = 3.0 * coarse_spacing(contour, li);
    let (point, distance) = match tangential_golden(model, contour.level, p0, tangent, x, half_width)
    {
        Some((p, d)) if d <= d0 + half_width => (p, d),
        _ => (p0, d0),
    };

    // Best point at least `exclusion_radius` away from the optimum.
    let mut second = f64::INFINITY;
    let mut second_info: Option<([f64; 2], usize, usize)> = None;
    for (li, poly) in polylines.iter().enumerate() {
        let closed = contour.closed[li];
        let m = poly.len();
        let seg_count = if closed { m } else { m - 1 };
        for si in 0..seg_count {
            let a = poly[si];
            let b = poly[(si + 1) % m];
            let p = seg_closest(a, b, x);
            let candidates = if dist(p, point) >= exclusion_radius {
                vec![p]
            } else {
                // The segment's optimum fell inside the ball; its endpoints
                // may still lie outside.
                [a, b]
                    .into_iter()
                    .filter(|q| dist(*q, point) >= exclusion_radius)
                    .collect()
            };
            for q in candidates {
                if dist(q, x) < second {
                    second = dist(q, x);
                    second_info = Some((q, li, si));
                }
            }
        }
    }
    // Remove the sagitta bias from the runner-up as well, by projecting it
    // straight onto the curve along the local normal.
    if let Some((q, li, si)) = second_info {
        let tangent = segment_tangent(&polylines[li], contour.closed[li], si);
        let normal = [-tangent[1], tangent[0]];
        if let Some(refined) =
            project_along_line(model, contour.level, q, normal, 0.5 * coarse_spacing(contour, li))
        {
            second = dist(refined, x);
        }
    }
    BruteForce2d {
        point,
        distance,
        gap: second - distance,
    }
}

fn coarse_spacing(contour: &Contour, li: usize) -> f64 {
    let poly = &contour.loops[li];
    crate::contour::polyline_length(poly, contour.closed[li]) / poly.len().max(1) as f64
}

fn segment_tangent(poly: &[[f64; 2]], closed: bool, si: usize) -> [f64; 2] {
    let m = poly.len();
    let a = poly[si % m];
    let b = poly[(si + 1) % m];
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let n = (dx * dx + dy * dy).sqrt();
    if n == 0.0 || (!closed && si + 1 >= m) {
        return [1.0, 0.0];
    }
    [dx / n, dy / n]
}

/// Root of `f - t` along the line `p + u * dir` by expanding-bracket
/// bisection; uses density values only.
fn project_along_line(
    model: &DensityModel,
    t: f64,
    p: [f64; 2],
    dir: [f64; 2],
    w0: f64,
) -> Option<[f64; 2]> {
    let f = |u: f64| {
        model.value(&crate::point(&[p[0] + u * dir[0], p[1] + u * dir[1]])) - t
    };
    let mut w = w0.max(1e-12);
    let f0 = f(0.0);
    let mut bracket = None;
    for _ in 0..10 {
        if (f(w) > 0.0) != (f0 > 0.0) {
            bracket = Some((0.0, w));
            break;
        }
        if (f(-w) > 0.0) != (f0 > 0.0) {
            bracket = Some((-w, 0.0));
            break;
        }
        w *= 2.0;
    }
    let (mut lo, mut hi) = bracket?;
    let f_lo = f(lo);
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < 1e-14 {
            lo = mid;
            hi = mid;
            break;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    Some([p[0] + u * dir[0], p[1] + u * dir[1]])
}

/// Golden-section minimization of the distance to `x` over true curve points:
/// tangential offsets from `p0` are projected back onto the level curve along
/// the fixed normal before measuring.
fn tangential_golden(
    model: &DensityModel,
    t: f64,
    p0: [f64; 2],
    tangent: [f64; 2],
    x: [f64; 2],
    half_width: f64,
) -> Option<([f64; 2], f64)> {
    let normal = [-tangent[1], tangent[0]];
    let curve_point = |s: f64| -> Option<[f64; 2]> {
        project_along_line(
            model,
            t,
            [p0[0] + s * tangent[0], p0[1] + s * tangent[1]],
            normal,
            0.5 * half_width,
        )
    };
    let eval = |s: f64| curve_point(s).map(|p| dist(p, x)).unwrap_or(f64::INFINITY);
    let mut lo = -half_width;
    let mut hi = half_width;
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = eval(c);
    let mut fd = eval(d);
    if !fc.is_finite() && !fd.is_finite() {
        return None;
    }
    for _ in 0..70 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = eval(d);
        }
    }
    let s = 0.5 * (lo + hi);
    let p = curve_point(s)?;
    Some((p, dist(p, x)))
}

fn seg_closest(a: [f64; 2], b: [f64; 2], x: [f64; 2]) -> [f64; 2] {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return a;
    }
    let s = (((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    [a[0] + s * ab[0], a[1] + s * ab[1]]
}

/// Symmetric Hausdorff distance between two contours over dense resamplings:
/// `max` of the two directed sup-inf distances, with the inf taken over the
/// resampled segments of the other side.
pub fn hausdorff_distance(a: &Contour, b: &Contour, spacing: f64) -> f64 {
    let pa = resample_contour(a, spacing);
    let pb = resample_contour(b, spacing);
    directed_hausdorff(&pa, &pb, &b.closed).max(directed_hausdorff(&pb, &pa, &a.closed))
}

fn directed_hausdorff(from: &[Vec<[f64; 2]>], to: &[Vec<[f64; 2]>], to_closed: &[bool]) -> f64 {
    let mut sup = 0.0f64;
    for poly in from {
        for &p in poly {
            let mut inf = f64::INFINITY;
            for (li, other) in to.iter().enumerate() {
                let m = other.len();
                let seg_count = if to_closed[li] { m } else { m - 1 };
                for si in 0..seg_count {
                    let q = seg_closest(other[si], other[(si + 1) % m], p);
                    inf = inf.min(dist(p, q));
                    if inf == 0.0 {
                        break;
                    }
                }
            }
            sup = sup.max(inf);
        }
    }
    sup
}

/// Deterministic low-discrepancy lower bound on the reach of the level set
/// through `y` at `y`: `min(r/2, inf |grad f| over B(y,r) / sup |hess f|
/// over B(y,2r))`, both extrema estimated over Halton samples.
pub fn reach_lower_bound(
    model: &DensityModel,
    y: &Point,
    r: f64,
    sample_count: usize,
    denom_floor: f64,
) -> Result<f64, ProjectError> {
    let d = model.dim();
    let mut inf_grad = model.gradient(y).norm();
    let mut sup_hess = spectral_norm(&model.hessian(y));
    let mut accepted = 0usize;
    let mut halton_index = 1u64;
    while accepted < sample_count {
        let z: Vec<f64> = (0..d)
            .map(|k| 2.0 * halton(halton_index, HALTON_BASES[k]) - 1.0)
            .collect();
        halton_index += 1;
        let norm2: f64 = z.iter().map(|v| v * v).sum();
        if norm2 > 1.0 {
            continue;
        }
        accepted += 1;
        let zp = Point::from_column_slice(&z);
        let inner = y + &zp * r;
        inf_grad = inf_grad.min(model.gradient(&inner).norm());
        let outer = y + &zp * (2.0 * r);
        sup_hess = sup_hess.max(spectral_norm(&model.hessian(&outer)));
    }
    if inf_grad < denom_floor {
        return Err(ProjectError::NearCritical {
            grad_norm: inf_grad,
        });
    }
    Ok((r / 2.0).min(inf_grad / sup_hess))
}

const HALTON_BASES: [u64; 3] = [2, 3, 5];

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn spectral_norm(h: &Matrix) -> f64 {
    h.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct WalkStop {
    /// Stop before a step would target a level above this.
    pub level_ceiling: Option<f64>,
    /// Stop when the gradient norm at the current point falls below this.
    pub near_critical_floor: f64,
    pub max_steps: usize,
}

impl Default for WalkStop {
    fn default() -> Self {
        WalkStop {
            level_ceiling: None,
            near_critical_floor: 1e-6,
            max_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkStopReason {
    LevelCeiling,
    NearCritical,
    MaxSteps,
    NoConvergence,
}

impl WalkStopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            WalkStopReason::LevelCeiling => "level_ceiling",
            WalkStopReason::NearCritical => "near_critical",
            WalkStopReason::MaxSteps => "max_steps",
            WalkStopReason::NoConvergence => "no_convergence",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Walk {
    pub points: Vec<Point>,
    pub f_values: Vec<f64>,
    /// Per accepted step: (level residual, normality residual) of the
    /// projection that produced the point; zeros for the start.
    pub residuals: Vec<(f64, f64)>,
    pub stop_reason: WalkStopReason,
}

impl Walk {
    pub fn end(&self) -> &Point {
        self.points.last().expect("walk has points")
    }
}

/// Iterate `x_{j+1} = P_{t_j, eta}(x_j)` with `t_j = f(x_j)`: the polygonal
/// approximation of the level-parameterized ascent flow. Projection failures
/// near critical points become stop reasons, not errors.
pub fn iterate_projection_walk(
    model: &DensityModel,
    x0: &Point,
    eta: f64,
    stop: &WalkStop,
    params: &ProjectionParams,
) -> Walk {
    let mut points = vec![x0.clone()];
    let mut f_values = vec![model.value(x0)];
    let mut residuals = vec![(0.0, 0.0)];
    let mut x = x0.clone();
    let mut stop_reason = WalkStopReason::MaxSteps;
    for _ in 0..stop.max_steps {
        let (f, g) = model.value_grad(&x);
        if g.norm() < stop.near_critical_floor {
            stop_reason = WalkStopReason::NearCritical;
            break;
        }
        if let Some(ceiling) = stop.level_ceiling {
            if f + eta > ceiling {
                stop_reason = WalkStopReason::LevelCeiling;
                break;
            }
        }
        match metric_project(model, &x, eta, params) {
            Ok(result) => {
                x = result.point.clone();
                f_values.push(model.value(&x));
                residuals.push((result.level_residual, result.normality_residual));
                points.push(result.point);
            }
            Err(ProjectError::NearCritical { .. }) => {
                stop_reason = WalkStopReason::NearCritical;
                break;
            }
            Err(_) => {
                stop_reason = WalkStopReason::NoConvergence;
                break;
            }
        }
    }
    Walk {
        points,
        f_values,
        residuals,
        stop_reason,
    }
}
