//! Level-set geometry: marching-squares contour extraction in 2D with
//! root-refined vertices, arc-length resampling, and the 1D analogue (level
//! sets in 1D are finite point sets found by scan + bisection).

use crate::density::DensityModel;
use crate::point;
use thiserror::Error;

/// Refined contour vertices satisfy `|f(v) - t| < contour_tol`.
pub const DEFAULT_CONTOUR_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ContourError {
    #[error("no lattice edge crosses level {t}")]
    EmptyLevel { t: f64 },
    #[error("contour extraction requires a 2D model, got dimension {0}")]
    NotTwoDimensional(usize),
    #[error("resolution must be at least 2 nodes per dimension")]
    BadResolution,
}

/// A level set in 2D: closed polyline loops (vertices not repeated; the last
/// vertex connects back to the first). Chains that leave the sampling box
/// stay open and are emitted as-is.
#[derive(Debug, Clone)]
pub struct Contour {
    pub level: f64,
    pub loops: Vec<Vec<[f64; 2]>>,
    /// Whether each entry of `loops` is closed.
    pub closed: Vec<bool>,
    /// Largest `|f(v) - t|` over all emitted vertices.
    pub max_residual: f64,
}

impl Contour {
    pub fn total_vertices(&self) -> usize {
        self.loops.iter().map(|l| l.len()).sum()
    }
}

// Cell edge roles used by the case table.
const BOTTOM: u8 = 0;
const RIGHT: u8 = 1;
const TOP: u8 = 2;
const LEFT: u8 = 3;

// Segments per marching-squares case; cases 5 and 10 are deferred to the
// center value.
fn case_segments(case: u8) -> &'static [(u8, u8)] {
    match case {
        0 | 15 => &[],
        1 => &[(LEFT, BOTTOM)],
        2 => &[(BOTTOM, RIGHT)],
        3 => &[(LEFT, RIGHT)],
        4 => &[(RIGHT, TOP)],
        6 => &[(BOTTOM, TOP)],
        7 => &[(LEFT, TOP)],
        8 => &[(TOP, LEFT)],
        9 => &[(BOTTOM, TOP)],
        11 => &[(RIGHT, TOP)],
        12 => &[(LEFT, RIGHT)],
        13 => &[(BOTTOM, RIGHT)],
        14 => &[(LEFT, BOTTOM)],
        _ => unreachable!(),
    }
}

/// Marching squares over a node lattice with linear interpolation, every
/// emitted vertex refined along its lattice edge by bisection to
/// `|f - t| < contour_tol`. Saddle cells (cases 5/10) are disambiguated by
/// the density value at the cell center.
pub fn extract_contour_2d(
    model: &DensityModel,
    bounds: &[(f64, f64)],
    resolution: [usize; 2],
    t: f64,
    contour_tol: f64,
) -> Result<Contour, ContourError> {
    if model.dim() != 2 {
        return Err(ContourError::NotTwoDimensional(model.dim()));
    }
    let [nx, ny] = resolution;
    if nx < 2 || ny < 2 || bounds.len() != 2 {
        return Err(ContourError::BadResolution);
    }
    let (x0, x1) = bounds[0];
    let (y0, y1) = bounds[1];
    let wx = (x1 - x0) / (nx - 1) as f64;
    let wy = (y1 - y0) / (ny - 1) as f64;
    let node_x = |i: usize| x0 + i as f64 * wx;
    let node_y = |j: usize| y0 + j as f64 * wy;

    let mut values = vec![0.0f64; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            values[j * nx + i] = model.value(&point(&[node_x(i), node_y(j)]));
        }
    }

    // Edge ids: horizontal edge at node (i,j) -> 2*(j*nx+i), vertical -> +1.
    let h_edge = |i: usize, j: usize| 2 * (j * nx + i);
    let v_edge = |i: usize, j: usize| 2 * (j * nx + i) + 1;

    let mut segments: Vec<(usize, usize)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = values[j * nx + i] >= t;
            let b = values[j * nx + i + 1] >= t;
            let c = values[(j + 1) * nx + i + 1] >= t;
            let d = values[(j + 1) * nx + i] >= t;
            let case = a as u8 | (b as u8) << 1 | (c as u8) << 2 | (d as u8) << 3;
            let segs: Vec<(u8, u8)> = match case {
                5 | 10 => {
                    let center = model
                        .value(&point(&[node_x(i) + 0.5 * wx, node_y(j) + 0.5 * wy]))
                        >= t;
                    match (case, center) {
                        // inside corners connected through the center
                        (5, true) => vec![(BOTTOM, RIGHT), (TOP, LEFT)],
                        (5, false) => vec![(LEFT, BOTTOM), (RIGHT, TOP)],
                        (10, true) => vec![(LEFT, BOTTOM), (RIGHT, TOP)],
                        (10, false) => vec![(BOTTOM, RIGHT), (TOP, LEFT)],
                        _ => unreachable!(),
                    }
                }
                _ => case_segments(case).to_vec(),
            };
            for (e1, e2) in segs {
                let id = |role: u8| -> usize {
                    match role {
                        BOTTOM => h_edge(i, j),
                        TOP => h_edge(i, j + 1),
                        LEFT => v_edge(i, j),
                        RIGHT => v_edge(i + 1, j),
                        _ => unreachable!(),
                    }
                };
                segments.push((id(e1), id(e2)));
            }
        }
    }
    if segments.is_empty() {
        return Err(ContourError::EmptyLevel { t });
    }

    // Refine a vertex position on each crossed edge.
    let mut vertex: std::collections::HashMap<usize, [f64; 2]> = std::collections::HashMap::new();
    let mut max_residual = 0.0f64;
    for &(e1, e2) in &segments {
        for &e in &[e1, e2] {
            if vertex.contains_key(&e) {
                continue;
            }
            let (i, j, horizontal) = ((e / 2) % nx, (e / 2) / nx, e % 2 == 0);
            let (pa, pb) = if horizontal {
                ([node_x(i), node_y(j)], [node_x(i + 1), node_y(j)])
            } else {
                ([node_x(i), node_y(j)], [node_x(i), node_y(j + 1)])
            };
            let (v, residual) = refine_on_edge(model, pa, pb, t, contour_tol);
            max_residual = max_residual.max(residual);
            vertex.insert(e, v);
        }
    }

    // Stitch segments into chains: each crossed edge has at most two incident
    // segments, one from each adjacent cell.
    let mut adjacency: std::collections::HashMap<usize, Vec<usize>> =
        std::collections::HashMap::new();
    for &(e1, e2) in &segments {
        adjacency.entry(e1).or_default().push(e2);
        adjacency.entry(e2).or_default().push(e1);
    }
    let mut edge_ids: Vec<usize> = adjacency.keys().copied().collect();
    edge_ids.sort_unstable();
    let mut visited: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let mut loops: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut closed_flags: Vec<bool> = Vec::new();
    // Open chains (degree-1 endpoints at the box boundary) first, then loops.
    for pass in 0..2 {
        for &start in &edge_ids {
            if visited.contains(&start) {
                continue;
            }
            let degree = adjacency[&start].len();
            if pass == 0 && degree != 1 {
                continue;
            }
            let mut chain = vec![start];
            visited.insert(start);
            let mut prev = start;
            let mut cur = *adjacency[&start]
                .iter()
                .min()
                .expect("adjacency entries are non-empty");
            loop {
                if cur == start || visited.contains(&cur) {
                    break;
                }
                visited.insert(cur);
                chain.push(cur);
                let next = adjacency[&cur]
                    .iter()
                    .copied()
                    .find(|&n| n != prev)
                    .unwrap_or(start);
                prev = cur;
                cur = next;
            }
            let closed = cur == start && chain.len() > 2;
            loops.push(chain.iter().map(|e| vertex[e]).collect());
            closed_flags.push(closed);
        }
    }

    Ok(Contour {
        level: t,
        loops,
        closed: closed_flags,
        max_residual,
    })
}

fn refine_on_edge(
    model: &DensityModel,
    pa: [f64; 2],
    pb: [f64; 2],
    t: f64,
    tol: f64,
) -> ([f64; 2], f64) {
    let f = |s: f64| -> f64 {
        model.value(&point(&[
            pa[0] + s * (pb[0] - pa[0]),
            pa[1] + s * (pb[1] - pa[1]),
        ])) - t
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let flo = f(lo);
    let mut s = 0.5;
    let mut fs = f(s);
    for _ in 0..100 {
        if fs.abs() <= tol {
            break;
        }
        if (fs > 0.0) == (flo > 0.0) {
            lo = s;
        } else {
            hi = s;
        }
        s = 0.5 * (lo + hi);
        fs = f(s);
    }
    (
        [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])],
        fs.abs(),
    )
}

/// Total arc length of a polyline, including the closing segment if `closed`.
pub fn polyline_length(vertices: &[[f64; 2]], closed: bool) -> f64 {
    let mut len = 0.0;
    for w in vertices.windows(2) {
        len += dist(w[0], w[1]);
    }
    if closed && vertices.len() > 1 {
        len += dist(*vertices.last().unwrap(), vertices[0]);
    }
    len
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Resample a closed polyline to `n` points uniformly by arc length,
/// starting at the first vertex.
pub fn resample_closed(vertices: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    assert!(vertices.len() >= 2 && n >= 1);
    let total = polyline_length(vertices, true);
    let m = vertices.len();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    let mut seg_start = 0.0; // arc length at vertices[seg]
    for k in 0..n {
        let target = total * k as f64 / n as f64;
        loop {
            let a = vertices[seg % m];
            let b = vertices[(seg + 1) % m];
            let l = dist(a, b);
            if target <= seg_start + l || seg + 1 >= 2 * m {
                let s = if l > 0.0 { (target - seg_start) / l } else { 0.0 };
                out.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                break;
            }
            seg_start += l;
            seg += 1;
        }
    }
    out
}

/// Resample every closed loop of a contour to a vertex spacing of at most
/// `spacing`; open chains are passed through unchanged.
pub fn resample_contour(contour: &Contour, spacing: f64) -> Vec<Vec<[f64; 2]>> {
    contour
        .loops
        .iter()
        .zip(&contour.closed)
        .map(|(vertices, &closed)| {
            if closed {
                let total = polyline_length(vertices, true);
                let n = ((total / spacing).ceil() as usize)
                    .max(vertices.len())
                    .max(8);
                resample_closed(vertices, n)
            } else {
                vertices.clone()
            }
        })
        .collect()
}

/// The 1D level set `{x : f(x) = t}` on `[lo, hi]`: dense scan for sign
/// changes of `f - t` followed by bisection.
pub fn level_points_1d(
    model: &DensityModel,
    lo: f64,
    hi: f64,
    scan_count: usize,
    t: f64,
    tol: f64,
) -> Vec<f64> {
    assert_eq!(model.dim(), 1);
    let mut out = Vec::new();
    let mut prev_x = lo;
    let mut prev = model.value(&point(&[lo])) - t;
    for k in 1..=scan_count {
        let x = lo + (hi - lo) * k as f64 / scan_count as f64;
        let cur = model.value(&point(&[x])) - t;
        if prev == 0.0 {
            out.push(prev_x);
        } else if (prev > 0.0) != (cur > 0.0) {
            let mut a = prev_x;
            let mut b = x;
            let fa = prev;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = model.value(&point(&[m])) - t;
                if fm.abs() <= tol {
                    a = m;
                    b = m;
                    break;
                }
                if (fm > 0.0) == (fa > 0.0) {
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
