//! Analytic density models with exact value, gradient, and Hessian, plus a
//! damped-Newton critical-point finder with Morse classification.

use crate::grid::GridSpec;
use crate::{Matrix, Point};
use nalgebra::Cholesky;
use thiserror::Error;

/// Convergence tolerance on the gradient norm for the critical-point search.
pub const DEFAULT_G_TOL: f64 = 1e-10;
/// Hessian eigenvalues below this magnitude flag a near-degenerate critical
/// point (the Morse assumption is numerically violated there).
pub const DEFAULT_MORSE_TOL: f64 = 1e-8;
/// Converged points closer than this are treated as duplicates.
pub const DEDUP_RADIUS: f64 = 1e-6;
const MAX_NEWTON_ITERS: usize = 50;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("point has dimension {got}, model has dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("mixture needs at least one component")]
    EmptyMixture,
    #[error("component {index}: weight must be strictly positive, got {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("mixture weights sum to {sum}, expected 1 within 1e-12")]
    WeightsNotNormalized { sum: f64 },
    #[error("component {index}: covariance is not symmetric (max asymmetry {asym:.3e})")]
    AsymmetricCovariance { index: usize, asym: f64 },
    #[error("component {index}: covariance is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { index: usize, min_eig: f64 },
    #[error("component {index}: mean has dimension {got}, expected {want}")]
    InconsistentDimension { index: usize, got: usize, want: usize },
    #[error("kde bandwidth must be strictly positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("kde needs at least one center")]
    EmptyKde,
}

/// Value, gradient, and Hessian of a density at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Point,
    pub hessian: Matrix,
}

#[derive(Debug, Clone)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Point,
    pub covariance: Matrix,
    inv_cov: Matrix,
    // weight / ((2 pi)^{d/2} det(cov)^{1/2})
    scaled_norm: f64,
}

/// Finite mixture of full-covariance Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, Point, Matrix)>) -> Result<Self, DensityError> {
        if components.is_empty() {
            return Err(DensityError::EmptyMixture);
        }
        let dim = components[0].1.len();
        let mut sum = 0.0;
        let mut built = Vec::with_capacity(components.len());
        for (index, (weight, mean, cov)) in components.into_iter().enumerate() {
            if weight <= 0.0 {
                return Err(DensityError::NonPositiveWeight { index, weight });
            }
            if mean.len() != dim || cov.nrows() != dim || cov.ncols() != dim {
                return Err(DensityError::InconsistentDimension {
                    index,
                    got: mean.len(),
                    want: dim,
                });
            }
            let asym = (&cov - cov.transpose()).abs().max();
            if asym > 1e-12 {
                return Err(DensityError::AsymmetricCovariance { index, asym });
            }
            let eigs = cov.clone().symmetric_eigen().eigenvalues;
            let min_eig = eigs.min();
            if min_eig <= 0.0 {
                return Err(DensityError::NotPositiveDefinite { index, min_eig });
            }
            let chol = Cholesky::new(cov.clone())
                .ok_or(DensityError::NotPositiveDefinite { index, min_eig })?;
            let det: f64 = chol.l().diagonal().iter().map(|l| l * l).product();
            let inv_cov = chol.inverse();
            let scaled_norm =
                weight / ((2.0 * std::f64::consts::PI).powf(dim as f64 / 2.0) * det.sqrt());
            sum += weight;
            built.push(GaussianComponent {
                weight,
                mean,
                covariance: cov,
                inv_cov,
                scaled_norm,
            });
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DensityError::WeightsNotNormalized { sum });
        }
        Ok(GaussianMixture {
            dim,
            components: built,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }
}

/// Kernel density model with an isotropic Gaussian kernel; integrates to 1 by
/// construction through the kernel normalization constant.
#[derive(Debug, Clone)]
pub struct KdeModel {
    dim: usize,
    pub centers: Vec<Point>,
    pub bandwidth: f64,
    // 1 / (n h^d (2 pi)^{d/2})
    norm: f64,
}

impl KdeModel {
    pub fn new(centers: Vec<Point>, bandwidth: f64) -> Result<Self, DensityError> {
        if centers.is_empty() {
            return Err(DensityError::EmptyKde);
        }
        if bandwidth <= 0.0 {
            return Err(DensityError::NonPositiveBandwidth(bandwidth));
        }
        let dim = centers[0].len();
        for (index, c) in centers.iter().enumerate() {
            if c.len() != dim {
                return Err(DensityError::InconsistentDimension {
                    index,
                    got: c.len(),
                    want: dim,
                });
            }
        }
        let norm = 1.0
            / (centers.len() as f64
                * bandwidth.powi(dim as i32)
                * (2.0 * std::f64::consts::PI).powf(dim as f64 / 2.0));
        Ok(KdeModel {
            dim,
            centers,
            bandwidth,
            norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// An analytic density: either a Gaussian mixture or a Gaussian KDE.
#[derive(Debug, Clone)]
pub enum DensityModel {
    Mixture(GaussianMixture),
    Kde(KdeModel),
}

impl DensityModel {
    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Mixture(m) => m.dim(),
            DensityModel::Kde(k) => k.dim(),
        }
    }

    fn check_dim(&self, x: &Point) -> Result<(), DensityError> {
        if x.len() != self.dim() {
            return Err(DensityError::DimensionMismatch {
                got: x.len(),
                want: self.dim(),
            });
        }
        Ok(())
    }

    /// Exact value, gradient, and Hessian at `x`.
    pub fn eval(&self, x: &Point) -> Result<Evaluation, DensityError> {
        self.check_dim(x)?;
        let d = self.dim();
        let mut value = 0.0;
        let mut gradient = Point::zeros(d);
        let mut hessian = Matrix::zeros(d, d);
        self.accumulate(x, &mut value, Some(&mut gradient), Some(&mut hessian));
        Ok(Evaluation {
            value,
            gradient,
            hessian,
        })
    }

    /// Density value only. Panics on dimension mismatch (hot path; top-level
    /// operations validate dimensions once on entry).
    pub fn value(&self, x: &Point) -> f64 {
        let mut value = 0.0;
        self.accumulate(x, &mut value, None, None);
        value
    }

    /// Value and gradient in one pass.
    pub fn value_grad(&self, x: &Point) -> (f64, Point) {
        let mut value = 0.0;
        let mut gradient = Point::zeros(self.dim());
        self.accumulate(x, &mut value, Some(&mut gradient), None);
        (value, gradient)
    }

    pub fn gradient(&self, x: &Point) -> Point {
        self.value_grad(x).1
    }

    pub fn hessian(&self, x: &Point) -> Matrix {
        let d = self.dim();
        let mut value = 0.0;
        let mut gradient = Point::zeros(d);
        let mut hessian = Matrix::zeros(d, d);
        self.accumulate(x, &mut value, Some(&mut gradient), Some(&mut hessian));
        hessian
    }

    fn accumulate(
        &self,
        x: &Point,
        value: &mut f64,
        mut gradient: Option<&mut Point>,
        mut hessian: Option<&mut Matrix>,
    ) {
        match self {
            DensityModel::Mixture(m) => {
                for comp in &m.components {
                    let u = x - &comp.mean;
                    let s = &comp.inv_cov * &u;
                    let e = comp.scaled_norm * (-0.5 * u.dot(&s)).exp();
                    *value += e;
                    if let Some(g) = gradient.as_deref_mut() {
                        g.axpy(-e, &s, 1.0);
                    }
                    if let Some(h) = hessian.as_deref_mut() {
                        // e * (s s^T - inv_cov)
                        h.ger(e, &s, &s, 1.0);
                        *h += comp.inv_cov.scale(-e);
                    }
                }
            }
            DensityModel::Kde(k) => {
                let h2 = k.bandwidth * k.bandwidth;
                for c in &k.centers {
                    let u = x - c;
                    let e = k.norm * (-0.5 * u.norm_squared() / h2).exp();
                    *value += e;
                    if let Some(g) = gradient.as_deref_mut() {
                        g.axpy(-e / h2, &u, 1.0);
                    }
                    if let Some(hm) = hessian.as_deref_mut() {
                        hm.ger(e / (h2 * h2), &u, &u, 1.0);
                        for i in 0..k.dim {
                            hm[(i, i)] -= e / h2;
                        }
                    }
                }
            }
        }
    }

    /// A box that comfortably contains the interesting part of the density
    /// (means/centers padded by a few standard deviations per dimension).
    pub fn suggested_bounds(&self) -> Vec<(f64, f64)> {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        match self {
            DensityModel::Mixture(m) => {
                for comp in &m.components {
                    for k in 0..d {
                        let sd = comp.covariance[(k, k)].sqrt();
                        lo[k] = lo[k].min(comp.mean[k] - 4.5 * sd);
                        hi[k] = hi[k].max(comp.mean[k] + 4.5 * sd);
                    }
                }
            }
            DensityModel::Kde(kde) => {
                for c in &kde.centers {
                    for k in 0..d {
                        lo[k] = lo[k].min(c[k] - 4.5 * kde.bandwidth);
                        hi[k] = hi[k].max(c[k] + 4.5 * kde.bandwidth);
                    }
                }
            }
        }
        lo.into_iter().zip(hi).collect()
    }
}

/// Classification of a critical point by its Hessian signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    /// Local maximum: all Hessian eigenvalues negative (`morse_index == d`).
    Mode,
    /// Mixed signature.
    Saddle,
    /// Local minimum: all eigenvalues positive (`morse_index == 0`).
    Minimum,
}

#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub location: Point,
    pub value: f64,
    pub grad_norm: f64,
    /// Number of negative Hessian eigenvalues.
    pub morse_index: usize,
    pub min_abs_eigenvalue: f64,
    /// Set when `min_abs_eigenvalue < morse_tol`: the non-degeneracy
    /// assumption is violated at the resolution of the search.
    pub degenerate: bool,
}

impl CriticalPoint {
    pub fn kind(&self) -> CriticalKind {
        let d = self.location.len();
        if self.morse_index == d {
            CriticalKind::Mode
        } else if self.morse_index == 0 {
            CriticalKind::Minimum
        } else {
            CriticalKind::Saddle
        }
    }

    pub fn is_mode(&self) -> bool {
        self.kind() == CriticalKind::Mode
    }
}

/// Outcome of the critical-point search. Non-converged or rejected seeds are
/// counted, never fatal.
#[derive(Debug, Clone)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    pub dropped_seeds: usize,
}

impl CriticalSearch {
    pub fn modes(&self) -> Vec<&CriticalPoint> {
        self.points.iter().filter(|p| p.is_mode()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// Damped Newton iteration on `grad f = 0` from every cell center of the seed
/// grid. Converged points are deduplicated within [`DEDUP_RADIUS`] and
/// classified by the Hessian eigen-signature.
///
/// Far in the tails the gradient norm falls below any tolerance without a
/// critical point being present; converged points are therefore rejected when
/// they leave the (inflated) seed box or when the density there is negligible
/// relative to the best seed value.
pub fn find_critical_points(
    model: &DensityModel,
    seeds: &GridSpec,
    g_tol: f64,
    morse_tol: f64,
) -> CriticalSearch {
    let d = model.dim();
    assert_eq!(seeds.dim(), d, "seed grid dimension mismatch");
    let bounds = seeds.inflated_bounds(0.5);
    let max_seed_value = seeds
        .centers()
        .map(|c| model.value(&c))
        .fold(0.0_f64, f64::max);
    let value_floor = 1e-9 * max_seed_value;

    let mut found: Vec<CriticalPoint> = Vec::new();
    let mut dropped = 0usize;
    for seed in seeds.centers() {
        match newton_refine(model, &seed, g_tol) {
            Some(x) => {
                let in_box = (0..d).all(|k| x[k] >= bounds[k].0 && x[k] <= bounds[k].1);
                let ev = model.eval(&x).expect("dimension checked");
                if !in_box || ev.value < value_floor {
                    dropped += 1;
                    continue;
                }
                let grad_norm = ev.gradient.norm();
                let eigs = ev.hessian.symmetric_eigen().eigenvalues;
                let morse_index = eigs.iter().filter(|&&l| l < 0.0).count();
                let min_abs = eigs.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
                let cp = CriticalPoint {
                    location: x,
                    value: ev.value,
                    grad_norm,
                    morse_index,
                    min_abs_eigenvalue: min_abs,
                    degenerate: min_abs < morse_tol,
                };
                match found
                    .iter_mut()
                    .find(|p| (&p.location - &cp.location).norm() < DEDUP_RADIUS)
                {
                    Some(existing) => {
                        if cp.grad_norm < existing.grad_norm {
                            *existing = cp;
                        }
                    }
                    None => found.push(cp),
                }
            }
            None => dropped += 1,
        }
    }
    // Deterministic order: by value descending, then lexicographic location.
    found.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap()
            .then_with(|| lex_cmp(&a.location, &b.location))
    });
    CriticalSearch {
        points: found,
        dropped_seeds: dropped,
    }
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    for k in 0..a.len() {
        match a[k].partial_cmp(&b[k]).unwrap() {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// One damped Newton run on `grad f = 0`; `None` when it fails to reach
/// `|grad| < g_tol`.
pub fn newton_refine(model: &DensityModel, seed: &Point, g_tol: f64) -> Option<Point> {
    let mut x = seed.clone();
    let mut ev = model.eval(&x).ok()?;
    for _ in 0..MAX_NEWTON_ITERS {
        let gnorm = ev.gradient.norm();
        if gnorm < g_tol {
            return Some(x);
        }
        let delta = ev.hessian.clone().lu().solve(&(-&ev.gradient))?;
        if !delta.iter().all(|v| v.is_finite()) {
            return None;
        }
        // Step halving on the gradient norm.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &x + t * &delta;
            let cand_ev = model.eval(&cand).ok()?;
            if cand_ev.gradient.norm() < gnorm {
                accepted = Some((cand, cand_ev));
                break;
            }
            t *= 0.5;
        }
        let (nx, nev) = accepted?;
        x = nx;
        ev = nev;
    }
    if ev.gradient.norm() < g_tol {
        Some(x)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::point;
    use approx::assert_relative_eq;

    #[test]
    fn standard_normal_at_mode() {
        let model = fixtures::standard_normal_1d();
        let ev = model.eval(&point(&[0.0])).unwrap();
        let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(ev.value, inv_sqrt_2pi, max_relative = 1e-15);
        assert_relative_eq!(ev.gradient[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(ev.hessian[(0, 0)], -inv_sqrt_2pi, max_relative = 1e-15);
    }

    #[test]
    fn isotropic_normal_gradient_points_to_origin() {
        let model = fixtures::isotropic_normal_2d();
        let x = point(&[1.0, 0.0]);
        let ev = model.eval(&x).unwrap();
        // gradient = -x f(x) for the standard isotropic Gaussian
        assert_relative_eq!(ev.gradient[0], -ev.value, max_relative = 1e-14);
        assert_relative_eq!(ev.gradient[1], 0.0, epsilon = 1e-16);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = fixtures::isotropic_normal_2d();
        assert!(matches!(
            model.eval(&point(&[1.0])),
            Err(DensityError::DimensionMismatch { got: 1, want: 2 })
        ));
    }

    #[test]
    fn mixture_construction_rejects_bad_input() {
        let eye = Matrix::identity(1, 1);
        // weights not normalized
        assert!(matches!(
            GaussianMixture::new(vec![(0.4, point(&[0.0]), eye.clone())]),
            Err(DensityError::WeightsNotNormalized { .. })
        ));
        // non-positive weight
        assert!(matches!(
            GaussianMixture::new(vec![
                (-0.5, point(&[0.0]), eye.clone()),
                (1.5, point(&[1.0]), eye.clone())
            ]),
            Err(DensityError::NonPositiveWeight { .. })
        ));
        // non-SPD covariance
        let neg = Matrix::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(
            GaussianMixture::new(vec![(1.0, point(&[0.0]), neg)]),
            Err(DensityError::NotPositiveDefinite { .. })
        ));
        // asymmetric covariance
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(
            GaussianMixture::new(vec![(1.0, point(&[0.0, 0.0]), asym)]),
            Err(DensityError::AsymmetricCovariance { .. })
        ));
    }

    #[test]
    fn kde_rejects_bad_input() {
        assert!(matches!(
            KdeModel::new(vec![], 1.0),
            Err(DensityError::EmptyKde)
        ));
        assert!(matches!(
            KdeModel::new(vec![point(&[0.0])], 0.0),
            Err(DensityError::NonPositiveBandwidth(_))
        ));
    }

    #[test]
    fn unimodal_1d_has_exactly_one_critical_point() {
        let model = fixtures::standard_normal_1d();
        let seeds = GridSpec::new(&[(-4.0, 4.0)], &[16]).unwrap();
        let search = find_critical_points(&model, &seeds, DEFAULT_G_TOL, DEFAULT_MORSE_TOL);
        assert_eq!(search.points.len(), 1);
        let cp = &search.points[0];
        assert!(cp.location[0].abs() < 1e-9);
        assert_eq!(cp.morse_index, 1);
        assert_eq!(cp.kind(), CriticalKind::Mode);
        assert!(cp.grad_norm <= DEFAULT_G_TOL);
        assert!(!cp.degenerate);
    }

    #[test]
    fn every_reported_point_satisfies_gradient_tolerance() {
        let model = fixtures::bimodal_2d();
        let seeds = GridSpec::new(&[(-4.0, 7.0), (-4.0, 5.0)], &[24, 20]).unwrap();
        let search = find_critical_points(&model, &seeds, DEFAULT_G_TOL, DEFAULT_MORSE_TOL);
        assert!(!search.points.is_empty());
        for cp in &search.points {
            let g = model.gradient(&cp.location).norm();
            assert!(g <= DEFAULT_G_TOL, "re-evaluated grad norm {g}");
        }
    }
}
