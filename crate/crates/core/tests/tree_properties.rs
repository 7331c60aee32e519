//! Tree-level invariants at production resolution: nesting, partition,
//! split-level brackets against the scan oracle, near-critical ridges, and
//! stability under grid refinement.

mod common;

use common::*;
use modalflow::density::{find_critical_points, DEFAULT_G_TOL, DEFAULT_MORSE_TOL};
use modalflow::fixtures;
use modalflow::grid::{build_grid, Grid, GridSpec};
use modalflow::tree::*;

fn tree_at(
    model: &modalflow::density::DensityModel,
    bounds: &[(f64, f64)],
    res: &[usize],
) -> (Grid, ClusterTree) {
    let grid = build_grid(model, GridSpec::new(bounds, res).unwrap()).unwrap();
    let seeds: Vec<usize> = res.iter().map(|_| 24).collect();
    let crits = find_critical_points(
        model,
        &GridSpec::new(bounds, &seeds).unwrap(),
        DEFAULT_G_TOL,
        DEFAULT_MORSE_TOL,
    )
    .points;
    let ladder = default_ladder(&grid);
    let tree = build_cluster_tree(&grid, &ladder, &crits).unwrap();
    (grid, tree)
}

#[test]
fn split_levels_bracket_oracle_critical_values() {
    // 1D: the split happens within one ladder step of the valley.
    let model = fixtures::bimodal_1d();
    let (_, tree) = tree_at(&model, &fixtures::bimodal_1d_bounds(), &[512]);
    assert_eq!(tree.split_events.len(), 1);
    let ev = &tree.split_events[0];
    assert!(ev.level <= BIMODAL1D_VALLEY_VALUE && BIMODAL1D_VALLEY_VALUE <= ev.level_above);

    // 2D: within one ladder step of the saddle.
    let model = fixtures::bimodal_2d();
    let (grid, tree) = tree_at(&model, &fixtures::bimodal_2d_bounds(), &[256, 256]);
    assert_eq!(tree.split_events.len(), 1);
    let ev = &tree.split_events[0];
    assert!(ev.level <= BIMODAL2D_SADDLE_VALUE && BIMODAL2D_SADDLE_VALUE <= ev.level_above);
    let cand = ev.candidate_saddle.as_ref().unwrap();
    assert_eq!(cand.morse_index, 1);
    assert!(cand.distance < 2.0 * grid.spec.cell_diagonal());
}

#[test]
fn ridge_gradient_is_small_at_cell_scale() {
    // The meeting locus of merging components is near-critical: its minimal
    // gradient norm is below 10x the gradient a cell-width step can build up.
    let model = fixtures::bimodal_2d();
    let (grid, tree) = tree_at(&model, &fixtures::bimodal_2d_bounds(), &[256, 256]);
    for ev in &tree.split_events {
        let min_ridge_grad = ev
            .ridge_cells
            .iter()
            .map(|&c| model.gradient(&grid.spec.cell_center(c as usize)).norm())
            .fold(f64::INFINITY, f64::min);
        let center = grid.spec.cell_center(ev.meeting_cell as usize);
        let hess_scale = model
            .hessian(&center)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|l| l.abs())
            .fold(0.0f64, f64::max);
        let scale = hess_scale * grid.spec.cell_diagonal();
        assert!(
            min_ridge_grad < 10.0 * scale,
            "ridge gradient {min_ridge_grad} vs scale {scale}"
        );
    }
}

#[test]
fn doubling_resolution_preserves_leaves_and_split_levels() {
    for (model, bounds, coarse) in [
        (fixtures::bimodal_1d(), fixtures::bimodal_1d_bounds(), vec![256]),
        (
            fixtures::bimodal_2d(),
            fixtures::bimodal_2d_bounds(),
            vec![128, 128],
        ),
    ] {
        let fine: Vec<usize> = coarse.iter().map(|r| r * 2).collect();
        let (coarse_grid, coarse_tree) = tree_at(&model, &bounds, &coarse);
        let (_, fine_tree) = tree_at(&model, &bounds, &fine);
        assert_eq!(coarse_tree.leaves().len(), fine_tree.leaves().len());
        assert_eq!(coarse_tree.split_events.len(), fine_tree.split_events.len());
        let coarse_step = coarse_tree.ladder[1] - coarse_tree.ladder[0];
        for (a, b) in coarse_tree
            .split_events
            .iter()
            .zip(&fine_tree.split_events)
        {
            assert!(
                (a.level - b.level).abs() < coarse_step,
                "split moved by {} (step {})",
                (a.level - b.level).abs(),
                coarse_step
            );
        }
        drop(coarse_grid);
    }
}

#[test]
fn child_intervals_lie_above_their_parents() {
    for (model, bounds, res) in [
        (fixtures::bimodal_1d(), fixtures::bimodal_1d_bounds(), vec![512usize]),
        (
            fixtures::bimodal_2d(),
            fixtures::bimodal_2d_bounds(),
            vec![128, 128],
        ),
    ] {
        let (_, tree) = tree_at(&model, &bounds, &res);
        for node in &tree.nodes {
            assert!(node.birth_level >= node.death_level);
            if let Some(p) = node.parent {
                let parent = &tree.nodes[p as usize];
                assert!(
                    node.death_level > parent.birth_level,
                    "child interval must sit above its parent's"
                );
                assert!(parent.children.contains(&node.id));
            }
        }
    }
}

#[test]
fn max_grid_value_approaches_true_maximum() {
    let model = fixtures::bimodal_2d();
    let grid = build_grid(
        &model,
        GridSpec::new(&fixtures::bimodal_2d_bounds(), &[256, 256]).unwrap(),
    )
    .unwrap();
    assert!((grid.max_value() - BIMODAL2D_MODE_HIGH_VALUE).abs() < 1e-3);
}

#[test]
fn profile_counts_match_component_scan_at_every_level() {
    let model = fixtures::bimodal_2d();
    let (grid, tree) = tree_at(&model, &fixtures::bimodal_2d_bounds(), &[128, 128]);
    for &(level, count) in component_count_profile(&tree).iter().step_by(7) {
        let set = upper_level_components(&grid, level).unwrap();
        assert_eq!(set.components.len(), count);
    }
}

#[test]
fn kde_model_runs_through_the_whole_stack() {
    let model = fixtures::parse_fixture(
        &std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/kde2d.json"
        ))
        .unwrap(),
    )
    .unwrap();
    let bounds = model.suggested_bounds();
    let (grid, tree) = tree_at(&model, &bounds, &[128, 128]);
    // two clumps of centers, two leaves
    assert_eq!(tree.leaves().len(), 2);
    assert_eq!(tree.split_events.len(), 1);
    let ev = &tree.split_events[0];
    let cand = ev.candidate_saddle.as_ref().unwrap();
    assert_eq!(cand.morse_index, 1);
    assert!(cand.distance < 2.0 * grid.spec.cell_diagonal());
}
