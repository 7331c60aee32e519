//! File exports shared by the library and the CLI. Floats in CSV files are
//! written with 17 significant digits; JSON goes through `serde_json`, whose
//! shortest-round-trip encoding is also lossless.

use crate::contour::Contour;
use crate::flow::{FlowParams, Trajectory};
use crate::grid::Grid;
use crate::hybrid::{HybridLabel, HybridResult};
use crate::transport::Walk;
use crate::tree::ClusterTree;
use crate::Point;
use serde_json::json;
use std::io::Write;
use std::path::Path;

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())
}

/// CSV with columns `tau, x_1..x_d, f, grad_norm`.
pub fn trajectory_csv(traj: &Trajectory, dim: usize) -> String {
    let mut out = String::from("tau");
    for k in 1..=dim {
        out.push_str(&format!(",x_{k}"));
    }
    out.push_str(",f,grad_norm\n");
    for s in &traj.samples {
        out.push_str(&fmt_f64(s.tau));
        for k in 0..dim {
            out.push(',');
            out.push_str(&fmt_f64(s.x[k]));
        }
        out.push(',');
        out.push_str(&fmt_f64(s.f_value));
        out.push(',');
        out.push_str(&fmt_f64(s.grad_norm));
        out.push('\n');
    }
    out
}

/// Sidecar JSON describing a trajectory run.
pub fn trajectory_sidecar(traj: &Trajectory, kind: &str, params: &FlowParams) -> String {
    let v = json!({
        "kind": kind,
        "stop_reason": traj.stop_reason.as_str(),
        "samples": traj.samples.len(),
        "params": {
            "abs_tol": params.abs_tol,
            "rel_tol": params.rel_tol,
            "min_step": params.min_step,
            "max_steps": params.max_steps,
            "g_tol": params.g_tol,
            "denom_floor": params.denom_floor,
            "target_level": params.target_level,
            "level_tol": params.level_tol,
        },
    });
    serde_json::to_string_pretty(&v).expect("serializable")
}

pub fn write_trajectory(
    dir: &Path,
    stem: &str,
    traj: &Trajectory,
    dim: usize,
    kind: &str,
    params: &FlowParams,
) -> std::io::Result<()> {
    write_file(&dir.join(format!("{stem}.csv")), &trajectory_csv(traj, dim))?;
    write_file(
        &dir.join(format!("{stem}.json")),
        &trajectory_sidecar(traj, kind, params),
    )
}

/// CSV with columns `step, x_1..x_d, f, delta_f, level_residual,
/// normality_residual`.
pub fn walk_csv(walk: &Walk, dim: usize) -> String {
    let mut out = String::from("step");
    for k in 1..=dim {
        out.push_str(&format!(",x_{k}"));
    }
    out.push_str(",f,delta_f,level_residual,normality_residual\n");
    for (i, p) in walk.points.iter().enumerate() {
        out.push_str(&i.to_string());
        for k in 0..dim {
            out.push(',');
            out.push_str(&fmt_f64(p[k]));
        }
        out.push(',');
        out.push_str(&fmt_f64(walk.f_values[i]));
        out.push(',');
        let df = if i + 1 < walk.f_values.len() {
            walk.f_values[i + 1] - walk.f_values[i]
        } else {
            0.0
        };
        out.push_str(&fmt_f64(df));
        out.push(',');
        out.push_str(&fmt_f64(walk.residuals[i].0));
        out.push(',');
        out.push_str(&fmt_f64(walk.residuals[i].1));
        out.push('\n');
    }
    out
}

pub fn walk_sidecar(walk: &Walk, eta: f64) -> String {
    let v = json!({
        "stop_reason": walk.stop_reason.as_str(),
        "eta": eta,
        "steps": walk.points.len() - 1,
    });
    serde_json::to_string_pretty(&v).expect("serializable")
}

pub fn contour_json(contour: &Contour) -> String {
    let v = json!({
        "level": contour.level,
        "loops": contour.loops,
        "closed": contour.closed,
        "max_residual": contour.max_residual,
    });
    serde_json::to_string_pretty(&v).expect("serializable")
}

pub fn tree_json(tree: &ClusterTree, grid: &Grid) -> String {
    let nodes: Vec<serde_json::Value> = tree
        .nodes
        .iter()
        .map(|n| {
            let argmax = grid.spec.cell_center(n.argmax_cell as usize);
            json!({
                "id": n.id,
                "birth_level": n.birth_level,
                "death_level": n.death_level,
                "parent": n.parent,
                "children": n.children,
                "cell_count_at_birth": n.birth_cells.len(),
                "argmax_cell": n.argmax_cell,
                "argmax_center": argmax.iter().copied().collect::<Vec<f64>>(),
                "mode_ids": n.mode_ids,
            })
        })
        .collect();
    let events: Vec<serde_json::Value> = tree
        .split_events
        .iter()
        .map(|e| {
            let meet = grid.spec.cell_center(e.meeting_cell as usize);
            json!({
                "level": e.level,
                "level_above": e.level_above,
                "merged_node": e.merged_node,
                "merging": e.merging,
                "meeting_cell": e.meeting_cell,
                "meeting_center": meet.iter().copied().collect::<Vec<f64>>(),
                "ridge_cell_count": e.ridge_cells.len(),
                "candidate_saddle": e.candidate_saddle.as_ref().map(|s| json!({
                    "location": s.location.iter().copied().collect::<Vec<f64>>(),
                    "value": s.value,
                    "morse_index": s.morse_index,
                    "distance": s.distance,
                })),
            })
        })
        .collect();
    let v = json!({
        "ladder": tree.ladder,
        "roots": tree.roots,
        "nodes": nodes,
        "split_events": events,
        "counts": tree.counts,
    });
    serde_json::to_string_pretty(&v).expect("serializable")
}

/// CSV with columns `level, count`.
pub fn profile_csv(profile: &[(f64, usize)]) -> String {
    let mut out = String::from("level,count\n");
    for &(level, count) in profile {
        out.push_str(&fmt_f64(level));
        out.push(',');
        out.push_str(&count.to_string());
        out.push('\n');
    }
    out
}

/// CSV with columns `x_1..x_d, label` where label is a group index or NOISE.
pub fn hybrid_labels_csv(points: &[Point], result: &HybridResult, dim: usize) -> String {
    let mut out = String::new();
    for k in 1..=dim {
        if k > 1 {
            out.push(',');
        }
        out.push_str(&format!("x_{k}"));
    }
    out.push_str(",label\n");
    for (p, label) in points.iter().zip(&result.labels) {
        for k in 0..dim {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(p[k]));
        }
        out.push(',');
        match label {
            HybridLabel::Group(g) => out.push_str(&g.to_string()),
            HybridLabel::Noise => out.push_str("NOISE"),
        }
        out.push('\n');
    }
    out
}

pub fn hybrid_json(result: &HybridResult) -> String {
    let v = json!({
        "threshold": result.threshold,
        "groups": result.groups,
        "noise_modes": result.noise_modes,
        "provenance": result.provenance,
        "empty_level": result.empty_level,
        "unconverged_count": result.unconverged_count,
    });
    serde_json::to_string_pretty(&v).expect("serializable")
}

pub fn write_text(path: &Path, contents: &str) -> std::io::Result<()> {
    write_file(path, contents)
}
