//! Regular grids over a box, used both to seed the critical-point search and
//! as the scalar field backing upper-level-set component analysis.

use crate::density::{DensityError, DensityModel};
use crate::Point;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("box must satisfy lo < hi in every dimension, got [{lo}, {hi}]")]
    InvalidBox { lo: f64, hi: f64 },
    #[error("resolution must be at least 2 per dimension, got {0}")]
    InvalidResolution(usize),
    #[error("grid machinery supports dimensions 1..=3, got {0}")]
    UnsupportedDimension(usize),
    #[error("box/resolution dimension mismatch: {box_dim} vs {res_dim}")]
    DimensionMismatch { box_dim: usize, res_dim: usize },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("grid value at cell {cell} is not finite")]
    NonFiniteValue { cell: usize },
}

/// Lattice of cells over an axis-aligned box. Cells are addressed row-major
/// (first dimension fastest) by their flat index; each cell is represented by
/// its center.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    res: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: &[(f64, f64)], resolution: &[usize]) -> Result<Self, GridError> {
        if bounds.len() != resolution.len() {
            return Err(GridError::DimensionMismatch {
                box_dim: bounds.len(),
                res_dim: resolution.len(),
            });
        }
        for &(lo, hi) in bounds {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(GridError::InvalidBox { lo, hi });
            }
        }
        for &r in resolution {
            if r < 2 {
                return Err(GridError::InvalidResolution(r));
            }
        }
        Ok(GridSpec {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
            res: resolution.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| (a, b)).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.res.iter().product()
    }

    pub fn cell_widths(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| (self.hi[k] - self.lo[k]) / self.res[k] as f64)
            .collect()
    }

    /// Euclidean diagonal of a single cell.
    pub fn cell_diagonal(&self) -> f64 {
        self.cell_widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Decode a flat cell index into per-dimension indices.
    pub fn multi_index(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (slot, &r) in out.iter_mut().zip(&self.res) {
            *slot = cell % r;
            cell /= r;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx = idx * self.res[k] + multi[k];
        }
        idx
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let multi = self.multi_index(cell);
        let w = self.cell_widths();
        Point::from_iterator(
            self.dim(),
            (0..self.dim()).map(|k| self.lo[k] + (multi[k] as f64 + 0.5) * w[k]),
        )
    }

    /// Cell containing a point under the nearest-cell-center rule, ties broken
    /// toward the lower index. Points outside the box are clamped per
    /// dimension, so a cell is always returned.
    pub fn cell_of_point(&self, x: &Point) -> usize {
        let w = self.cell_widths();
        let mut multi = vec![0usize; self.dim()];
        for k in 0..self.dim() {
            let u = (x[k] - self.lo[k]) / w[k];
            // Cell centers sit at u = i + 0.5; the midpoint between centers i
            // and i+1 is u = i+1, which must resolve to the lower cell.
            let mut i = u.ceil() - 1.0;
            if u.fract() != 0.0 || u <= 0.0 {
                i = u.floor();
            }
            multi[k] = (i.max(0.0) as usize).min(self.res[k] - 1);
        }
        self.flat_index(&multi)
    }

    /// Face-adjacent neighbor in dimension `k`, offset -1 or +1.
    pub fn neighbor(&self, cell: usize, k: usize, step: isize) -> Option<usize> {
        let mut multi = self.multi_index(cell);
        let i = multi[k] as isize + step;
        if i < 0 || i >= self.res[k] as isize {
            return None;
        }
        multi[k] = i as usize;
        Some(self.flat_index(&multi))
    }

    /// Iterator over all cell centers in flat-index order.
    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.cell_count()).map(|i| self.cell_center(i))
    }

    /// The box inflated by `factor` times its per-dimension width.
    pub fn inflated_bounds(&self, factor: f64) -> Vec<(f64, f64)> {
        (0..self.dim())
            .map(|k| {
                let pad = factor * (self.hi[k] - self.lo[k]);
                (self.lo[k] - pad, self.hi[k] + pad)
            })
            .collect()
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }
}

/// A density sampled at the cell centers of a [`GridSpec`].
#[derive(Debug, Clone)]
pub struct Grid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

/// Evaluate the model at every cell center. Only dimensions 1..=3 are
/// supported for the grid machinery; flows run in any dimension.
pub fn build_grid(model: &DensityModel, spec: GridSpec) -> Result<Grid, GridError> {
    if spec.dim() > 3 {
        return Err(GridError::UnsupportedDimension(spec.dim()));
    }
    if spec.dim() != model.dim() {
        return Err(GridError::DimensionMismatch {
            box_dim: spec.dim(),
            res_dim: model.dim(),
        });
    }
    let values: Vec<f64> = (0..spec.cell_count())
        .into_par_iter()
        .map(|i| model.value(&spec.cell_center(i)))
        .collect();
    if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
        return Err(GridError::NonFiniteValue { cell });
    }
    Ok(Grid { spec, values })
}

impl Grid {
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::point;

    #[test]
    fn flat_and_multi_index_round_trip() {
        let spec = GridSpec::new(&[(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)], &[4, 5, 6]).unwrap();
        for cell in 0..spec.cell_count() {
            assert_eq!(spec.flat_index(&spec.multi_index(cell)), cell);
        }
    }

    #[test]
    fn cell_of_point_nearest_center_with_tie_to_lower() {
        let spec = GridSpec::new(&[(0.0, 1.0)], &[4]).unwrap();
        // centers at 0.125, 0.375, 0.625, 0.875
        assert_eq!(spec.cell_of_point(&point(&[0.2])), 0);
        assert_eq!(spec.cell_of_point(&point(&[0.26])), 1);
        // exact midpoint between cells 0 and 1 goes to the lower index
        assert_eq!(spec.cell_of_point(&point(&[0.25])), 0);
        // clamping
        assert_eq!(spec.cell_of_point(&point(&[-3.0])), 0);
        assert_eq!(spec.cell_of_point(&point(&[9.0])), 3);
    }

    #[test]
    fn rejects_bad_boxes_and_resolutions() {
        assert!(GridSpec::new(&[(1.0, 0.0)], &[4]).is_err());
        assert!(GridSpec::new(&[(0.0, 1.0)], &[1]).is_err());
        assert!(GridSpec::new(&[(0.0, 1.0), (0.0, 1.0)], &[4]).is_err());
    }

    #[test]
    fn degenerate_resolution_two_is_valid() {
        let model = fixtures::standard_normal_1d();
        let spec = GridSpec::new(&[(-1.0, 1.0)], &[2]).unwrap();
        let grid = build_grid(&model, spec).unwrap();
        assert_eq!(grid.values.len(), 2);
    }

    #[test]
    fn center_cell_of_odd_grid_hits_the_mode() {
        // 1D standard normal on [-4, 4] with 9 cells: center cell value is the
        // density at 0.
        let model = fixtures::standard_normal_1d();
        let spec = GridSpec::new(&[(-4.0, 4.0)], &[9]).unwrap();
        let grid = build_grid(&model, spec).unwrap();
        let center = 4;
        assert!((grid.values[center] - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn four_dimensional_grid_rejected() {
        let model = fixtures::standard_normal_1d();
        let spec = GridSpec::new(
            &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)],
            &[2, 2, 2, 2],
        )
        .unwrap();
        assert!(matches!(
            build_grid(&model, spec),
            Err(GridError::UnsupportedDimension(4))
        ));
    }
}
