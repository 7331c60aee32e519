//! Canonical analytic fixtures and the JSON fixture file format.
//!
//! The fixture file is a small JSON document:
//!
//! ```json
//! { "type": "mixture", "dim": 2,
//!   "components": [ { "weight": 0.5, "mean": [0.0, 0.0],
//!                     "cov": [[1.0, 0.0], [0.0, 1.0]] } ] }
//! { "type": "kde", "dim": 2, "bandwidth": 0.4,
//!   "centers": [[0.0, 0.0], [1.0, 2.0]] }
//! ```
//!
//! The parser rejects non-SPD covariances, non-normalized weights, and
//! inconsistent dimensions (see [`crate::density`] for the full set of
//! construction invariants).

use crate::density::{DensityError, DensityModel, GaussianMixture, KdeModel};
use crate::{point, Matrix, Point};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse fixture JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid fixture: {0}")]
    Invalid(#[from] DensityError),
    #[error("declared dim {declared} does not match data dim {actual}")]
    DimMismatch { declared: usize, actual: usize },
    #[error("covariance matrix must be {dim}x{dim}")]
    BadCovarianceShape { dim: usize },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum FixtureFile {
    Mixture {
        dim: usize,
        components: Vec<ComponentSpec>,
    },
    Kde {
        dim: usize,
        bandwidth: f64,
        centers: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

pub fn parse_fixture(text: &str) -> Result<DensityModel, FixtureError> {
    let file: FixtureFile = serde_json::from_str(text)?;
    build_model(file)
}

pub fn load_fixture(path: &Path) -> Result<DensityModel, FixtureError> {
    parse_fixture(&std::fs::read_to_string(path)?)
}

fn build_model(file: FixtureFile) -> Result<DensityModel, FixtureError> {
    match file {
        FixtureFile::Mixture { dim, components } => {
            let mut comps = Vec::with_capacity(components.len());
            for c in components {
                if c.mean.len() != dim {
                    return Err(FixtureError::DimMismatch {
                        declared: dim,
                        actual: c.mean.len(),
                    });
                }
                if c.cov.len() != dim || c.cov.iter().any(|row| row.len() != dim) {
                    return Err(FixtureError::BadCovarianceShape { dim });
                }
                let flat: Vec<f64> = c.cov.iter().flatten().copied().collect();
                comps.push((
                    c.weight,
                    point(&c.mean),
                    Matrix::from_row_slice(dim, dim, &flat),
                ));
            }
            Ok(DensityModel::Mixture(GaussianMixture::new(comps)?))
        }
        FixtureFile::Kde {
            dim,
            bandwidth,
            centers,
        } => {
            for c in &centers {
                if c.len() != dim {
                    return Err(FixtureError::DimMismatch {
                        declared: dim,
                        actual: c.len(),
                    });
                }
            }
            let centers: Vec<Point> = centers.iter().map(|c| point(c)).collect();
            Ok(DensityModel::Kde(KdeModel::new(centers, bandwidth)?))
        }
    }
}

/// Serialize a model back to the fixture file format.
pub fn to_fixture_file(model: &DensityModel) -> FixtureFile {
    match model {
        DensityModel::Mixture(m) => FixtureFile::Mixture {
            dim: m.dim(),
            components: m
                .components()
                .iter()
                .map(|c| ComponentSpec {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    cov: (0..m.dim())
                        .map(|i| (0..m.dim()).map(|j| c.covariance[(i, j)]).collect())
                        .collect(),
                })
                .collect(),
        },
        DensityModel::Kde(k) => FixtureFile::Kde {
            dim: k.dim(),
            bandwidth: k.bandwidth,
            centers: k.centers.iter().map(|c| c.iter().copied().collect()).collect(),
        },
    }
}

/// 1D standard normal.
pub fn standard_normal_1d() -> DensityModel {
    DensityModel::Mixture(
        GaussianMixture::new(vec![(1.0, point(&[0.0]), Matrix::identity(1, 1))]).unwrap(),
    )
}

/// 2D isotropic standard normal (circular contours).
pub fn isotropic_normal_2d() -> DensityModel {
    DensityModel::Mixture(
        GaussianMixture::new(vec![(1.0, point(&[0.0, 0.0]), Matrix::identity(2, 2))]).unwrap(),
    )
}

/// Canonical 1D bimodal fixture: 0.5 N(0, 1) + 0.5 N(3, 0.8^2).
pub fn bimodal_1d() -> DensityModel {
    DensityModel::Mixture(
        GaussianMixture::new(vec![
            (0.5, point(&[0.0]), Matrix::identity(1, 1)),
            (0.5, point(&[3.0]), Matrix::from_row_slice(1, 1, &[0.64])),
        ])
        .unwrap(),
    )
}

/// Canonical 2D bimodal fixture: 0.5 N((0,0), I) + 0.5 N((3,1), S) where S is
/// diag(1.2, 0.5) rotated by 30 degrees.
pub fn bimodal_2d() -> DensityModel {
    let theta = 30.0_f64.to_radians();
    let (s, c) = theta.sin_cos();
    let rot = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let diag = Matrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]);
    let cov = &rot * diag * rot.transpose();
    // Enforce exact symmetry against rounding in the triple product.
    let cov = 0.5 * (&cov + cov.transpose());
    DensityModel::Mixture(
        GaussianMixture::new(vec![
            (0.5, point(&[0.0, 0.0]), Matrix::identity(2, 2)),
            (0.5, point(&[3.0, 1.0]), cov),
        ])
        .unwrap(),
    )
}

/// Default analysis boxes for the canonical fixtures.
pub fn bimodal_1d_bounds() -> Vec<(f64, f64)> {
    vec![(-4.0, 7.0)]
}

pub fn bimodal_2d_bounds() -> Vec<(f64, f64)> {
    vec![(-4.0, 7.0), (-4.0, 5.0)]
}
