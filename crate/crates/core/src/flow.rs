//! Gradient-flow integration: plain ascent `dx/dtau = grad f`, the
//! level-parameterized variant `grad f / |grad f|^2` (which gains density
//! value at unit rate) and its descent mirror, and the `grad f / f` variant.
//!
//! Trajectories are integrated with an embedded Dormand–Prince 4(5) scheme
//! with step-size control; stopping at a target level uses bisection on the
//! step size within the crossing step.

use crate::density::{CriticalPoint, DensityModel};
use crate::Point;
use rayon::prelude::*;
use thiserror::Error;

/// Vector field selector for the flow ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    /// `F = grad f`
    PlainAscent,
    /// `F = grad f / |grad f|^2`; density value grows at unit rate.
    NormalizedAscent,
    /// `F = -grad f / |grad f|^2`; density value shrinks at unit rate.
    NormalizedDescent,
    /// `F = grad f / f`.
    FukunagaAscent,
}

impl FlowKind {
    pub fn is_ascent(&self) -> bool {
        !matches!(self, FlowKind::NormalizedDescent)
    }
}

#[derive(Debug, Clone)]
pub struct FlowParams {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub min_step: f64,
    pub initial_step: f64,
    pub max_steps: usize,
    /// Gradient norm at which a trajectory is considered converged to a
    /// critical point.
    pub g_tol: f64,
    /// Normalized/Fukunaga kinds stop (rather than divide) when their
    /// denominator falls below this.
    pub denom_floor: f64,
    pub target_level: Option<f64>,
    /// Residual tolerance on `|f - target_level|` at a level stop.
    pub level_tol: f64,
    /// Optional box; leaving it stops the trajectory.
    pub domain: Option<Vec<(f64, f64)>>,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            min_step: 1e-12,
            initial_step: 1e-2,
            max_steps: 100_000,
            g_tol: 1e-8,
            denom_floor: 1e-8,
            target_level: None,
            level_tol: 1e-9,
            domain: None,
        }
    }
}

impl FlowParams {
    pub fn with_target(target: f64) -> Self {
        FlowParams {
            target_level: Some(target),
            ..FlowParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ConvergedToCritical,
    ReachedTargetLevel,
    MaxSteps,
    DenominatorFloor,
    LeftDomain,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::ConvergedToCritical => "converged_to_critical",
            StopReason::ReachedTargetLevel => "reached_target_level",
            StopReason::MaxSteps => "max_steps",
            StopReason::DenominatorFloor => "denominator_floor",
            StopReason::LeftDomain => "left_domain",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub tau: f64,
    pub x: Point,
    pub f_value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn start(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn end(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has samples")
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("state became non-finite at tau={tau}")]
    NonFiniteState { tau: f64 },
    #[error("start has dimension {got}, model has dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
}

enum StageFailure {
    Floor,
    NonFinite,
}

fn velocity(
    model: &DensityModel,
    kind: FlowKind,
    x: &Point,
    denom_floor: f64,
) -> Result<Point, StageFailure> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(StageFailure::NonFinite);
    }
    let (f, g) = model.value_grad(x);
    if !f.is_finite() || !g.iter().all(|v| v.is_finite()) {
        return Err(StageFailure::NonFinite);
    }
    match kind {
        FlowKind::PlainAscent => Ok(g),
        FlowKind::NormalizedAscent | FlowKind::NormalizedDescent => {
            let n = g.norm();
            if n < denom_floor {
                return Err(StageFailure::Floor);
            }
            let sign = if kind == FlowKind::NormalizedAscent {
                1.0
            } else {
                -1.0
            };
            Ok(g * (sign / (n * n)))
        }
        FlowKind::FukunagaAscent => {
            if f < denom_floor {
                return Err(StageFailure::Floor);
            }
            Ok(g / f)
        }
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One embedded RK step from `x` with step `h`; returns the 5th-order result
/// and the per-component error estimate.
fn rk_step(
    model: &DensityModel,
    kind: FlowKind,
    denom_floor: f64,
    x: &Point,
    k1: &Point,
    h: f64,
) -> Result<(Point, Point), StageFailure> {
    let d = x.len();
    let mut k = Vec::with_capacity(7);
    k.push(k1.clone());
    for row in &A {
        let mut xs = x.clone();
        for (j, kj) in k.iter().enumerate() {
            if row[j] != 0.0 {
                xs.axpy(h * row[j], kj, 1.0);
            }
        }
        k.push(velocity(model, kind, &xs, denom_floor)?);
    }
    let mut y = x.clone();
    let mut err = Point::zeros(d);
    for (j, kj) in k.iter().enumerate() {
        if B5[j] != 0.0 {
            y.axpy(h * B5[j], kj, 1.0);
        }
        let db = B5[j] - B4[j];
        if db != 0.0 {
            err.axpy(h * db, kj, 1.0);
        }
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(StageFailure::NonFinite);
    }
    Ok((y, err))
}

fn error_ratio(err: &Point, x: &Point, y: &Point, abs_tol: f64, rel_tol: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..x.len() {
        let scale = abs_tol + rel_tol * x[i].abs().max(y[i].abs());
        let r = err[i] / scale;
        sum += r * r;
    }
    (sum / x.len() as f64).sqrt()
}

/// Integrate `dx/dtau = F(x)` from `x0`.
///
/// Stops when the gradient norm falls below `g_tol` (converged to a critical
/// point), when `f` reaches `target_level` within `level_tol`, when the
/// denominator of a normalized kind falls below `denom_floor`, when the
/// domain box is left, or when the step budget is exhausted. The stopping
/// state is always the last sample.
pub fn integrate_flow(
    model: &DensityModel,
    x0: &Point,
    kind: FlowKind,
    params: &FlowParams,
) -> Result<Trajectory, FlowError> {
    if x0.len() != model.dim() {
        return Err(FlowError::DimensionMismatch {
            got: x0.len(),
            want: model.dim(),
        });
    }
    if params.min_step <= 0.0 || params.initial_step <= 0.0 {
        return Err(FlowError::InvalidParams("steps must be positive".into()));
    }

    let mut x = x0.clone();
    let (mut f, mut grad) = model.value_grad(&x);
    if !f.is_finite() {
        return Err(FlowError::NonFiniteState { tau: 0.0 });
    }
    let mut gnorm = grad.norm();
    let mut tau = 0.0;
    let mut samples = vec![TrajectorySample {
        tau,
        x: x.clone(),
        f_value: f,
        grad_norm: gnorm,
    }];

    let ascending = kind.is_ascent();
    let floor_applies = matches!(
        kind,
        FlowKind::NormalizedAscent | FlowKind::NormalizedDescent | FlowKind::FukunagaAscent
    );
    let mut h = params.initial_step;

    for _attempt in 0..params.max_steps {
        // Stop checks on the current (last recorded) state.
        if let Some(s) = params.target_level {
            if (f - s).abs() <= params.level_tol {
                return Ok(Trajectory {
                    samples,
                    stop_reason: StopReason::ReachedTargetLevel,
                });
            }
        }
        if floor_applies {
            let denom = match kind {
                FlowKind::FukunagaAscent => f,
                _ => gnorm,
            };
            if denom < params.denom_floor {
                return Ok(Trajectory {
                    samples,
                    stop_reason: StopReason::DenominatorFloor,
                });
            }
        }
        if gnorm < params.g_tol {
            // A small gradient alone does not distinguish a critical point
            // from a flat tail. Accept only when the state cannot move at all
            // or the Hessian is negative definite (a genuine mode vicinity);
            // otherwise keep integrating out of the flat region.
            let converged = gnorm == 0.0 || {
                let eigs = model.hessian(&x).symmetric_eigen().eigenvalues;
                eigs.iter().all(|&l| l < 0.0)
            };
            if converged {
                return Ok(Trajectory {
                    samples,
                    stop_reason: StopReason::ConvergedToCritical,
                });
            }
        }
        if let Some(domain) = &params.domain {
            if (0..x.len()).any(|i| x[i] < domain[i].0 || x[i] > domain[i].1) {
                return Ok(Trajectory {
                    samples,
                    stop_reason: StopReason::LeftDomain,
                });
            }
        }

        // For the level-parameterized kinds, tau remaining to the target is
        // known up to integration error; do not overshoot wildly.
        if let (Some(s), true) = (
            params.target_level,
            matches!(kind, FlowKind::NormalizedAscent | FlowKind::NormalizedDescent),
        ) {
            let remaining = (s - f).abs();
            h = h.min(1.05 * remaining + params.level_tol);
        }

        let k1 = match velocity(model, kind, &x, params.denom_floor) {
            Ok(v) => v,
            Err(StageFailure::Floor) => {
                return Ok(Trajectory {
                    samples,
                    stop_reason: StopReason::DenominatorFloor,
                });
            }
            Err(StageFailure::NonFinite) => return Err(FlowError::NonFiniteState { tau }),
        };

        let step = rk_step(model, kind, params.denom_floor, &x, &k1, h);
        let (y, err) = match step {
            Ok(v) => v,
            Err(failure) => {
                h *= 0.5;
                if h < params.min_step {
                    return match failure {
                        StageFailure::Floor => Ok(Trajectory {
                            samples,
                            stop_reason: StopReason::DenominatorFloor,
                        }),
                        StageFailure::NonFinite => Err(FlowError::NonFiniteState { tau }),
                    };
                }
                continue;
            }
        };

        let ratio = error_ratio(&err, &x, &y, params.abs_tol, params.rel_tol);
        if ratio > 1.0 {
            if h <= params.min_step {
                // The field cannot be resolved at the smallest allowed step;
                // for the normalized kinds this is the denominator degenerating.
                if floor_applies {
                    return Ok(Trajectory {
                        samples,
                        stop_reason: StopReason::DenominatorFloor,
                    });
                }
                return Err(FlowError::NonFiniteState { tau });
            }
            let shrink = (0.9 * ratio.powf(-0.2)).max(0.2);
            h = (h * shrink).max(params.min_step);
            continue;
        }

        let (f_new, grad_new) = model.value_grad(&y);
        if !f_new.is_finite() {
            return Err(FlowError::NonFiniteState { tau });
        }

        // Target-level event inside this step: bisect on the step size.
        if let Some(s) = params.target_level {
            let before = f - s;
            let after = f_new - s;
            let crossed = before.signum() != after.signum() && before != 0.0;
            if after.abs() <= params.level_tol || crossed {
                let (x_stop, tau_stop) = if after.abs() <= params.level_tol {
                    (y.clone(), tau + h)
                } else {
                    bisect_level_stop(model, kind, params, &x, &k1, h, tau, s)
                        .ok_or(FlowError::NonFiniteState { tau })?
                };
                let (f_stop, g_stop) = model.value_grad(&x_stop);
                samples.push(TrajectorySample {
                    tau: tau_stop,
                    x: x_stop,
                    f_value: f_stop,
                    grad_norm: g_stop.norm(),
                });
                return Ok(Trajectory {
                    samples,
                    stop_reason: StopReason::ReachedTargetLevel,
                });
            }
        }

        // Guard ascent monotonicity against rare controller glitches: a
        // decrease beyond the integrator tolerance re-runs with a smaller step.
        if ascending && f_new < f - 1e-9 && h > 4.0 * params.min_step {
            h *= 0.25;
            continue;
        }

        tau += h;
        x = y;
        f = f_new;
        grad = grad_new;
        gnorm = grad.norm();
        samples.push(TrajectorySample {
            tau,
            x: x.clone(),
            f_value: f,
            grad_norm: gnorm,
        });

        let grow = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * grow).max(params.min_step);
    }

    Ok(Trajectory {
        samples,
        stop_reason: StopReason::MaxSteps,
    })
}

/// Find the sub-step at which `f` crosses `target`, by bisection on the step
/// size within `(0, h]`. The caller guarantees a sign change.
#[allow(clippy::too_many_arguments)]
fn bisect_level_stop(
    model: &DensityModel,
    kind: FlowKind,
    params: &FlowParams,
    x: &Point,
    k1: &Point,
    h: f64,
    tau: f64,
    target: f64,
) -> Option<(Point, f64)> {
    let mut lo = 0.0;
    let mut hi = h;
    let sign_lo = (model.value(x) - target).signum();
    let mut best: Option<(Point, f64)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 {
            break;
        }
        let (y, _) = rk_step(model, kind, params.denom_floor, x, k1, mid).ok()?;
        let fy = model.value(&y) - target;
        if fy.abs() <= params.level_tol {
            return Some((y, tau + mid));
        }
        best = Some((y, tau + mid));
        if fy.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON * h {
            break;
        }
    }
    best
}

/// Errors for the level-transport maps `psi` / `psi_down`.
#[derive(Debug, Error)]
pub enum TransportMapError {
    #[error("critical value {value} lies in the corridor [{low}, {high}]")]
    CriticalCorridor { value: f64, low: f64, high: f64 },
    #[error("gradient norm fell below the denominator floor en route")]
    DenominatorFloor,
    #[error("target level {target} is on the wrong side of the start level {start}")]
    InvalidDirection { start: f64, target: f64 },
    #[error("flow stopped early: {0}")]
    StoppedEarly(&'static str),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

fn check_corridor(
    critical_values: &[f64],
    low: f64,
    high: f64,
) -> Result<(), TransportMapError> {
    for &v in critical_values {
        if v >= low && v <= high {
            return Err(TransportMapError::CriticalCorridor { value: v, low, high });
        }
    }
    Ok(())
}

fn transport(
    model: &DensityModel,
    critical_values: &[f64],
    x: &Point,
    target: f64,
    kind: FlowKind,
    params: &FlowParams,
) -> Result<Point, TransportMapError> {
    let start = model.value(x);
    if (target - start).abs() <= f64::EPSILON * start.abs() {
        return Ok(x.clone());
    }
    let (low, high) = if target > start {
        (start, target)
    } else {
        (target, start)
    };
    check_corridor(critical_values, low, high)?;
    let mut p = params.clone();
    p.target_level = Some(target);
    let traj = integrate_flow(model, x, kind, &p)?;
    match traj.stop_reason {
        StopReason::ReachedTargetLevel => Ok(traj.end().x.clone()),
        StopReason::DenominatorFloor => Err(TransportMapError::DenominatorFloor),
        other => Err(TransportMapError::StoppedEarly(other.as_str())),
    }
}

/// Move `x` (on the level set of its own value `t`) up to the level set of
/// `s >= t` along the level-parameterized ascent flow. Errors if a critical
/// value lies in `[t, s]`.
pub fn flow_map_psi(
    model: &DensityModel,
    critical_values: &[f64],
    x: &Point,
    s: f64,
    params: &FlowParams,
) -> Result<Point, TransportMapError> {
    let t = model.value(x);
    if s < t - params.level_tol {
        return Err(TransportMapError::InvalidDirection { start: t, target: s });
    }
    transport(model, critical_values, x, s, FlowKind::NormalizedAscent, params)
}

/// Inverse of [`flow_map_psi`]: move `z` down to the level set of `t <= f(z)`
/// along the normalized descent flow.
pub fn flow_map_psi_down(
    model: &DensityModel,
    critical_values: &[f64],
    z: &Point,
    t: f64,
    params: &FlowParams,
) -> Result<Point, TransportMapError> {
    let s = model.value(z);
    if t > s + params.level_tol {
        return Err(TransportMapError::InvalidDirection { start: s, target: t });
    }
    transport(model, critical_values, z, t, FlowKind::NormalizedDescent, params)
}

/// Per-point label from basin assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasinLabel {
    /// Index into [`BasinAssignment::modes`].
    Mode(usize),
    Noise,
}

#[derive(Debug, Clone)]
pub struct BasinAssignment {
    pub labels: Vec<BasinLabel>,
    pub modes: Vec<CriticalPoint>,
    /// Points whose trajectory did not reach any known critical point.
    pub unconverged_count: usize,
}

#[derive(Debug, Clone)]
pub struct BasinParams {
    pub flow: FlowParams,
    pub mode_match_radius: f64,
}

impl Default for BasinParams {
    fn default() -> Self {
        BasinParams {
            flow: FlowParams::default(),
            mode_match_radius: 1e-4,
        }
    }
}

/// Integrate plain gradient ascent from every point and label it by the mode
/// its trajectory converges to. Points ending near a saddle or minimum are
/// labeled noise (mode basins cover everything except a null set, so these
/// occur only by construction); points ending near no known critical point
/// are labeled noise and counted as unconverged.
pub fn assign_basins(
    model: &DensityModel,
    criticals: &[CriticalPoint],
    points: &[Point],
    params: &BasinParams,
) -> Result<BasinAssignment, FlowError> {
    let modes: Vec<CriticalPoint> = criticals.iter().filter(|c| c.is_mode()).cloned().collect();
    // (label, reached a known critical point)
    let results: Vec<Result<(BasinLabel, bool), FlowError>> = points
        .par_iter()
        .map(|p| {
            if p.len() != model.dim() {
                return Err(FlowError::DimensionMismatch {
                    got: p.len(),
                    want: model.dim(),
                });
            }
            let traj = integrate_flow(model, p, FlowKind::PlainAscent, &params.flow)?;
            if traj.stop_reason != StopReason::ConvergedToCritical {
                return Ok((BasinLabel::Noise, false));
            }
            let end = &traj.end().x;
            let mut best_mode: Option<(usize, f64)> = None;
            for (i, m) in modes.iter().enumerate() {
                let dist = (&m.location - end).norm();
                if dist <= params.mode_match_radius && best_mode.is_none_or(|(_, d)| dist < d) {
                    best_mode = Some((i, dist));
                }
            }
            if let Some((i, _)) = best_mode {
                return Ok((BasinLabel::Mode(i), true));
            }
            // Trapped at a saddle or minimum: converged, but noise by rule.
            let at_other_critical = criticals
                .iter()
                .any(|c| !c.is_mode() && (&c.location - end).norm() <= params.mode_match_radius);
            Ok((BasinLabel::Noise, at_other_critical))
        })
        .collect();

    let mut labels = Vec::with_capacity(points.len());
    let mut unconverged = 0usize;
    for r in results {
        let (label, reached_known) = r?;
        if !reached_known {
            unconverged += 1;
        }
        labels.push(label);
    }
    Ok(BasinAssignment {
        labels,
        modes,
        unconverged_count: unconverged,
    })
}
