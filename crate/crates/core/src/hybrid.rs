//! Combined level-set / gradient-flow clustering: basins of modes that share
//! an upper-level-set component at the chosen threshold are merged, and the
//! basins of modes outside every component become noise.

use crate::density::CriticalPoint;
use crate::flow::{assign_basins, BasinLabel, BasinParams, FlowError};
use crate::grid::Grid;
use crate::tree::{locate_component, upper_level_components, ClusterTree, TreeError};
use crate::{density::DensityModel, Point};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("threshold {t} outside (0, {max})")]
    InvalidThreshold { t: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridLabel {
    /// Index into [`HybridResult::groups`].
    Group(usize),
    Noise,
}

#[derive(Debug, Clone)]
pub struct HybridResult {
    pub threshold: f64,
    /// Mode indices (into the basin assignment's mode list) per group; two
    /// modes share a group exactly when they lie in the same component of the
    /// upper level set at the threshold.
    pub groups: Vec<Vec<usize>>,
    /// Modes below the threshold; their basins are labeled noise.
    pub noise_modes: Vec<usize>,
    pub labels: Vec<HybridLabel>,
    /// Tree node at the threshold level containing each group's modes, when
    /// the threshold is within the tree's ladder.
    pub provenance: Vec<Option<u32>>,
    /// Set when the upper level set at the threshold is empty (all labels
    /// are noise in that case).
    pub empty_level: bool,
    pub unconverged_count: usize,
}

/// The combined partition at threshold `t`:
/// 1. components of the upper level set at `t` (from the grid);
/// 2. basins of attraction of the modes (plain gradient ascent);
/// 3. basins of co-component modes merged;
/// 4. basins of modes in no component labeled noise.
pub fn hybrid_partition(
    model: &DensityModel,
    grid: &Grid,
    tree: &ClusterTree,
    criticals: &[CriticalPoint],
    t: f64,
    points: &[Point],
    params: &BasinParams,
) -> Result<HybridResult, HybridError> {
    let max = grid.max_value();
    if !(t > 0.0 && t < max) {
        return Err(HybridError::InvalidThreshold { t, max });
    }
    let assignment = assign_basins(model, criticals, points, params)?;

    let components = match upper_level_components(grid, t) {
        Ok(set) => Some(set),
        Err(TreeError::EmptyLevel { .. }) => None,
        // Level validity was checked above.
        Err(_) => None,
    };

    // Component membership of each mode, by its cell at the threshold.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_component: Vec<u32> = Vec::new();
    let mut noise_modes: Vec<usize> = Vec::new();
    let mut mode_group: Vec<Option<usize>> = vec![None; assignment.modes.len()];
    if let Some(set) = &components {
        for (mi, mode) in assignment.modes.iter().enumerate() {
            let cell = grid.spec.cell_of_point(&mode.location);
            let comp = set.comp_of_cell[cell];
            if comp == u32::MAX {
                noise_modes.push(mi);
                continue;
            }
            match group_component.iter().position(|&c| c == comp) {
                Some(gi) => {
                    groups[gi].push(mi);
                    mode_group[mi] = Some(gi);
                }
                None => {
                    groups.push(vec![mi]);
                    group_component.push(comp);
                    mode_group[mi] = Some(groups.len() - 1);
                }
            }
        }
    } else {
        noise_modes = (0..assignment.modes.len()).collect();
    }

    let labels: Vec<HybridLabel> = assignment
        .labels
        .iter()
        .map(|l| match l {
            BasinLabel::Mode(mi) => match mode_group[*mi] {
                Some(gi) => HybridLabel::Group(gi),
                None => HybridLabel::Noise,
            },
            BasinLabel::Noise => HybridLabel::Noise,
        })
        .collect();

    // Provenance: the tree node at the threshold containing each group's
    // modes (all co-component modes resolve to the same node).
    let provenance: Vec<Option<u32>> = groups
        .iter()
        .map(|g| {
            let mode = &assignment.modes[g[0]];
            locate_component(tree, grid, &mode.location, t).ok()
        })
        .collect();

    Ok(HybridResult {
        threshold: t,
        groups,
        noise_modes,
        labels,
        provenance,
        empty_level: components.is_none(),
        unconverged_count: assignment.unconverged_count,
    })
}


#[cfg(test)]
mod tests {
    use super::tests_support::{points as test_points, setup as bimodal_2d_setup};
    use super::*;

    // Saddle value ~0.05676, lower mode ~0.08093, upper mode ~0.10329 (from
    // the critical-point search, cross-checked in the density tests).

    #[test]
    fn below_saddle_one_group_no_noise() {
        let s = bimodal_2d_setup();
        let result = hybrid_partition(
            &s.model,
            &s.grid,
            &s.tree,
            &s.crits,
            0.03,
            &test_points(),
            &BasinParams::default(),
        )
        .unwrap();
        assert_eq!(result.groups.len(), 1);
        assert_eq!(result.groups[0].len(), 2);
        assert!(result.noise_modes.is_empty());
        assert!(result.labels.iter().all(|&l| l == HybridLabel::Group(0)));
    }

    #[test]
    fn between_saddle_and_lower_mode_two_groups() {
        let s = bimodal_2d_setup();
        let result = hybrid_partition(
            &s.model,
            &s.grid,
            &s.tree,
            &s.crits,
            0.07,
            &test_points(),
            &BasinParams::default(),
        )
        .unwrap();
        assert_eq!(result.groups.len(), 2);
        assert!(result.noise_modes.is_empty());
        let labels = &result.labels;
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
        // provenance points at two distinct tree nodes
        assert_ne!(result.provenance[0], result.provenance[1]);
    }

    #[test]
    fn above_lower_mode_one_group_plus_noise() {
        let s = bimodal_2d_setup();
        let result = hybrid_partition(
            &s.model,
            &s.grid,
            &s.tree,
            &s.crits,
            0.09,
            &test_points(),
            &BasinParams::default(),
        )
        .unwrap();
        assert_eq!(result.groups.len(), 1);
        assert_eq!(result.noise_modes.len(), 1);
        // points in the lower mode's basin are noise now
        assert_eq!(result.labels[0], HybridLabel::Noise);
        assert_eq!(result.labels[1], HybridLabel::Noise);
        assert_eq!(result.labels[2], HybridLabel::Group(0));
        assert_eq!(result.labels[3], HybridLabel::Group(0));
    }

    #[test]
    fn every_point_gets_exactly_one_label() {
        let s = bimodal_2d_setup();
        let pts = test_points();
        let result = hybrid_partition(
            &s.model,
            &s.grid,
            &s.tree,
            &s.crits,
            0.07,
            &pts,
            &BasinParams::default(),
        )
        .unwrap();
        assert_eq!(result.labels.len(), pts.len());
    }

    #[test]
    fn rejects_out_of_range_threshold() {
        let s = bimodal_2d_setup();
        assert!(matches!(
            hybrid_partition(
                &s.model,
                &s.grid,
                &s.tree,
                &s.crits,
                -0.1,
                &test_points(),
                &BasinParams::default()
            ),
            Err(HybridError::InvalidThreshold { .. })
        ));
    }
}

#[cfg(test)]
mod refinement_tests {
    use super::tests_support::*;
    use super::*;

    #[test]
    fn raising_the_threshold_only_refines_groups() {
        let s = setup();
        let pts = points();
        // Thresholds in non-critical ranges, ascending.
        let thresholds = [0.02, 0.04, 0.065, 0.075];
        let mut previous: Option<HybridResult> = None;
        for &t in &thresholds {
            let result = hybrid_partition(
                &s.model,
                &s.grid,
                &s.tree,
                &s.crits,
                t,
                &pts,
                &BasinParams::default(),
            )
            .unwrap();
            if let Some(prev) = &previous {
                // modes separated at the lower threshold stay separated
                let group_of = |r: &HybridResult, mi: usize| -> Option<usize> {
                    r.groups.iter().position(|g| g.contains(&mi))
                };
                let n_modes = prev.groups.iter().map(|g| g.len()).sum::<usize>()
                    + prev.noise_modes.len();
                for a in 0..n_modes {
                    for b in a + 1..n_modes {
                        let sep_before = match (group_of(prev, a), group_of(prev, b)) {
                            (Some(ga), Some(gb)) => ga != gb,
                            _ => true,
                        };
                        if sep_before {
                            if let (Some(ga), Some(gb)) = (group_of(&result, a), group_of(&result, b)) {
                                assert_ne!(
                                    ga, gb,
                                    "modes {a},{b} merged when raising t to {t}"
                                );
                            }
                        }
                    }
                }
            }
            previous = Some(result);
        }
    }
}
