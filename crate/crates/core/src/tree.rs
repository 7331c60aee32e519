//! Upper-level-set connected components on a grid and the cluster tree over a
//! level ladder.
//!
//! Components use face adjacency (4-connectivity in 2D, 6 in 3D); corner
//! adjacency can spuriously bridge components near saddles. The tree is the
//! finite-ladder approximation of the all-levels hierarchy: split levels are
//! reported as one-ladder-step intervals together with the grid locus where
//! the merging components meet.

use crate::density::CriticalPoint;
use crate::grid::Grid;
use crate::Point;
use std::collections::BinaryHeap;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("level {t} outside (0, {max})")]
    InvalidLevel { t: f64, max: f64 },
    #[error("no cell has value >= {t}")]
    EmptyLevel { t: f64 },
    #[error("ladder must be strictly ascending within (0, max grid value)")]
    InvalidLadder,
    #[error("point is not in the upper level set at the requested level")]
    NotInUpperLevelSet,
    #[error("level {t} is above the ladder top {top}")]
    LevelAboveLadder { t: f64, top: f64 },
}

const NO_NODE: u32 = u32::MAX;

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let p = self.parent[i as usize];
            self.parent[i as usize] = self.parent[p as usize];
            i = self.parent[i as usize];
        }
        i
    }

    // Union by smaller root index so canonical labels stay minimal.
    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
    }
}

/// One connected component of an upper level set, canonicalized by its
/// smallest contained cell index.
#[derive(Debug, Clone)]
pub struct Component {
    pub canonical_cell: u32,
    /// Member cells, ascending.
    pub cells: Vec<u32>,
    pub argmax_cell: u32,
}

#[derive(Debug, Clone)]
pub struct ComponentSet {
    pub level: f64,
    /// Component index per cell; `u32::MAX` for cells below the level.
    pub comp_of_cell: Vec<u32>,
    pub components: Vec<Component>,
}

/// Label the cells with value `>= t` into face-connected components.
pub fn upper_level_components(grid: &Grid, t: f64) -> Result<ComponentSet, TreeError> {
    let max = grid.max_value();
    if !(t > 0.0 && t < max) {
        return Err(TreeError::InvalidLevel { t, max });
    }
    let n = grid.spec.cell_count();
    let d = grid.spec.dim();
    let mut uf = UnionFind::new(n);
    let mut any = false;
    for cell in 0..n {
        if grid.values[cell] < t {
            continue;
        }
        any = true;
        for k in 0..d {
            if let Some(nb) = grid.spec.neighbor(cell, k, -1) {
                if grid.values[nb] >= t {
                    uf.union(cell as u32, nb as u32);
                }
            }
        }
    }
    if !any {
        return Err(TreeError::EmptyLevel { t });
    }

    let mut comp_index: HashMap<u32, u32> = HashMap::new();
    let mut components: Vec<Component> = Vec::new();
    let mut comp_of_cell = vec![NO_NODE; n];
    for cell in 0..n as u32 {
        if grid.values[cell as usize] < t {
            continue;
        }
        let root = uf.find(cell);
        let idx = *comp_index.entry(root).or_insert_with(|| {
            components.push(Component {
                canonical_cell: cell, // smallest cell of the root, by scan order
                cells: Vec::new(),
                argmax_cell: cell,
            });
            components.len() as u32 - 1
        });
        let comp = &mut components[idx as usize];
        comp.cells.push(cell);
        if grid.values[cell as usize] > grid.values[comp.argmax_cell as usize] {
            comp.argmax_cell = cell;
        }
        comp_of_cell[cell as usize] = idx;
    }
    Ok(ComponentSet {
        level: t,
        comp_of_cell,
        components,
    })
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: u32,
    /// Highest ladder level at which this node is alive.
    pub birth_level: f64,
    /// Lowest ladder level at which this node is alive.
    pub death_level: f64,
    pub parent: Option<u32>,
    pub children: Vec<u32>,
    /// Component cells at the node's birth level, ascending.
    pub birth_cells: Vec<u32>,
    pub argmax_cell: u32,
    /// Indices into the critical-point list of the modes attached to this
    /// node (normally only leaves carry modes).
    pub mode_ids: Vec<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SaddleCandidate {
    pub location: Point,
    pub value: f64,
    pub morse_index: usize,
    /// Distance from the meeting cell center to the critical point.
    pub distance: f64,
}

/// A change in component count between two adjacent ladder levels: the
/// children are separate at `level_above` and merged at `level`.
#[derive(Debug, Clone)]
pub struct SplitEvent {
    pub level: f64,
    pub level_above: f64,
    pub merged_node: u32,
    pub merging: Vec<u32>,
    /// Highest-value cell where the merging regions meet.
    pub meeting_cell: u32,
    /// Cells adjacent to a different merging region than their own.
    pub ridge_cells: Vec<u32>,
    /// Nearest known critical point to the meeting cell, if any were supplied.
    pub candidate_saddle: Option<SaddleCandidate>,
}

#[derive(Debug, Clone)]
pub struct ClusterTree {
    pub nodes: Vec<TreeNode>,
    pub ladder: Vec<f64>,
    pub roots: Vec<u32>,
    pub split_events: Vec<SplitEvent>,
    /// Component count per ladder level.
    pub counts: Vec<usize>,
    // Per ladder level: cell -> node id (NO_NODE below the level).
    level_nodes: Vec<Vec<u32>>,
}

/// 64 uniform levels between `1e-4 * max` and `0.999 * max` of the grid.
pub fn default_ladder(grid: &Grid) -> Vec<f64> {
    ladder_between(1e-4 * grid.max_value(), 0.999 * grid.max_value(), 64)
}

pub fn ladder_between(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo < hi);
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Build the cluster tree by sweeping the ladder from the top level down.
/// Components at each level are linked to the unique component containing
/// them at the next lower level; merges become [`SplitEvent`]s (viewed
/// ascending). Modes from `criticals` are attached to the highest node whose
/// component contains their cell.
pub fn build_cluster_tree(
    grid: &Grid,
    ladder: &[f64],
    criticals: &[CriticalPoint],
) -> Result<ClusterTree, TreeError> {
    let max = grid.max_value();
    if ladder.len() < 2
        || ladder.windows(2).any(|w| w[0] >= w[1])
        || ladder[0] <= 0.0
        || *ladder.last().unwrap() >= max
    {
        return Err(TreeError::InvalidLadder);
    }
    let m = ladder.len();
    let n = grid.spec.cell_count();

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut split_events: Vec<SplitEvent> = Vec::new();
    let mut counts = vec![0usize; m];
    let mut level_nodes: Vec<Vec<u32>> = vec![Vec::new(); m];
    // (node id, representative cell) for components alive at the level above.
    let mut active: Vec<(u32, u32)> = Vec::new();

    for k in (0..m).rev() {
        let set = upper_level_components(grid, ladder[k])?;
        counts[k] = set.components.len();

        // Which nodes from the level above live inside each component here.
        let mut child_map: Vec<Vec<u32>> = vec![Vec::new(); set.components.len()];
        for &(node_id, rep_cell) in &active {
            let comp = set.comp_of_cell[rep_cell as usize];
            debug_assert_ne!(comp, NO_NODE, "nesting violated");
            child_map[comp as usize].push(node_id);
        }

        let mut comp_node = vec![0u32; set.components.len()];
        for (ci, comp) in set.components.iter().enumerate() {
            let node_id = match child_map[ci].len() {
                0 => {
                    let id = nodes.len() as u32;
                    nodes.push(TreeNode {
                        id,
                        birth_level: ladder[k],
                        death_level: ladder[k],
                        parent: None,
                        children: Vec::new(),
                        birth_cells: comp.cells.clone(),
                        argmax_cell: comp.argmax_cell,
                        mode_ids: Vec::new(),
                    });
                    id
                }
                1 => {
                    let id = child_map[ci][0];
                    nodes[id as usize].death_level = ladder[k];
                    id
                }
                _ => {
                    let id = nodes.len() as u32;
                    let merging = child_map[ci].clone();
                    nodes.push(TreeNode {
                        id,
                        birth_level: ladder[k],
                        death_level: ladder[k],
                        parent: None,
                        children: merging.clone(),
                        birth_cells: comp.cells.clone(),
                        argmax_cell: comp.argmax_cell,
                        mode_ids: Vec::new(),
                    });
                    for &c in &merging {
                        nodes[c as usize].parent = Some(id);
                    }
                    let (meeting_cell, ridge_cells) =
                        meeting_locus(grid, comp, &merging, &level_nodes[k + 1]);
                    let candidate_saddle = nearest_critical(grid, meeting_cell, criticals);
                    split_events.push(SplitEvent {
                        level: ladder[k],
                        level_above: ladder[k + 1],
                        merged_node: id,
                        merging,
                        meeting_cell,
                        ridge_cells,
                        candidate_saddle,
                    });
                    id
                }
            };
            comp_node[ci] = node_id;
        }

        let mut table = vec![NO_NODE; n];
        for (cell, &comp) in set.comp_of_cell.iter().enumerate() {
            if comp != NO_NODE {
                table[cell] = comp_node[comp as usize];
            }
        }
        level_nodes[k] = table;

        active = set
            .components
            .iter()
            .enumerate()
            .map(|(ci, comp)| (comp_node[ci], comp.canonical_cell))
            .collect();
    }

    let roots: Vec<u32> = nodes
        .iter()
        .filter(|nd| nd.parent.is_none())
        .map(|nd| nd.id)
        .collect();

    let mut tree = ClusterTree {
        nodes,
        ladder: ladder.to_vec(),
        roots,
        split_events,
        counts,
        level_nodes,
    };
    attach_modes(&mut tree, grid, criticals);
    renumber(&mut tree);
    Ok(tree)
}

/// Watershed partition of the merged component from the child regions (as
/// they stood one ladder step above), flooding by descending value. Returns
/// the highest-value ridge cell and all cells touching a foreign region.
fn meeting_locus(
    grid: &Grid,
    comp: &Component,
    merging: &[u32],
    table_above: &[u32],
) -> (u32, Vec<u32>) {
    let d = grid.spec.dim();
    let mut region: HashMap<u32, u32> = HashMap::new();
    let mut heap: BinaryHeap<FloodItem> = BinaryHeap::new();
    for &cell in &comp.cells {
        let above = table_above[cell as usize];
        if above != NO_NODE && merging.contains(&above) {
            region.insert(cell, above);
            heap.push(FloodItem {
                value: grid.values[cell as usize],
                cell,
            });
        }
    }
    while let Some(item) = heap.pop() {
        let r = region[&item.cell];
        for k in 0..d {
            for step in [-1, 1] {
                if let Some(nb) = grid.spec.neighbor(item.cell as usize, k, step) {
                    let nb = nb as u32;
                    if comp_contains(comp, nb) && !region.contains_key(&nb) {
                        region.insert(nb, r);
                        heap.push(FloodItem {
                            value: grid.values[nb as usize],
                            cell: nb,
                        });
                    }
                }
            }
        }
    }

    let mut ridge: Vec<u32> = Vec::new();
    for &cell in &comp.cells {
        let Some(&r) = region.get(&cell) else { continue };
        let mut touches_other = false;
        for k in 0..d {
            for step in [-1, 1] {
                if let Some(nb) = grid.spec.neighbor(cell as usize, k, step) {
                    if let Some(&rn) = region.get(&(nb as u32)) {
                        if rn != r {
                            touches_other = true;
                        }
                    }
                }
            }
        }
        if touches_other {
            ridge.push(cell);
        }
    }
    ridge.sort_unstable();
    let meeting = ridge
        .iter()
        .copied()
        .max_by(|&a, &b| {
            grid.values[a as usize]
                .total_cmp(&grid.values[b as usize])
                .then(b.cmp(&a))
        })
        .unwrap_or(comp.canonical_cell);
    (meeting, ridge)
}

fn comp_contains(comp: &Component, cell: u32) -> bool {
    comp.cells.binary_search(&cell).is_ok()
}

struct FloodItem {
    value: f64,
    cell: u32,
}

impl PartialEq for FloodItem {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value && self.cell == other.cell
    }
}
impl Eq for FloodItem {}
impl PartialOrd for FloodItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for FloodItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: higher value first, then smaller cell index.
        self.value
            .total_cmp(&other.value)
            .then(other.cell.cmp(&self.cell))
    }
}

fn nearest_critical(
    grid: &Grid,
    meeting_cell: u32,
    criticals: &[CriticalPoint],
) -> Option<SaddleCandidate> {
    let center = grid.spec.cell_center(meeting_cell as usize);
    criticals
        .iter()
        .map(|cp| (cp, (&cp.location - &center).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(cp, distance)| SaddleCandidate {
            location: cp.location.clone(),
            value: cp.value,
            morse_index: cp.morse_index,
            distance,
        })
}

fn attach_modes(tree: &mut ClusterTree, grid: &Grid, criticals: &[CriticalPoint]) {
    for (i, cp) in criticals.iter().enumerate() {
        if !cp.is_mode() {
            continue;
        }
        let cell = grid.spec.cell_of_point(&cp.location);
        // Highest ladder level whose component contains the mode's cell.
        for k in (0..tree.ladder.len()).rev() {
            let node = tree.level_nodes[k][cell];
            if node != NO_NODE {
                tree.nodes[node as usize].mode_ids.push(i);
                break;
            }
        }
    }
}

/// Reassign ids sorted by (birth level, smallest birth cell) and rewrite all
/// references, so exported trees are stable across runs.
fn renumber(tree: &mut ClusterTree) {
    let mut order: Vec<u32> = (0..tree.nodes.len() as u32).collect();
    order.sort_by(|&a, &b| {
        let na = &tree.nodes[a as usize];
        let nb = &tree.nodes[b as usize];
        na.birth_level
            .total_cmp(&nb.birth_level)
            .then_with(|| na.birth_cells.first().cmp(&nb.birth_cells.first()))
    });
    let mut remap = vec![0u32; tree.nodes.len()];
    for (new_id, &old_id) in order.iter().enumerate() {
        remap[old_id as usize] = new_id as u32;
    }
    let mut nodes: Vec<TreeNode> = order
        .iter()
        .map(|&old| tree.nodes[old as usize].clone())
        .collect();
    for nd in &mut nodes {
        nd.id = remap[nd.id as usize];
        nd.parent = nd.parent.map(|p| remap[p as usize]);
        for c in &mut nd.children {
            *c = remap[*c as usize];
        }
        nd.children.sort_unstable();
    }
    tree.nodes = nodes;
    for r in &mut tree.roots {
        *r = remap[*r as usize];
    }
    tree.roots.sort_unstable();
    for ev in &mut tree.split_events {
        ev.merged_node = remap[ev.merged_node as usize];
        for mid in &mut ev.merging {
            *mid = remap[*mid as usize];
        }
        ev.merging.sort_unstable();
    }
    tree.split_events
        .sort_by(|a, b| a.level.total_cmp(&b.level).then(a.merged_node.cmp(&b.merged_node)));
    for table in &mut tree.level_nodes {
        for v in table.iter_mut() {
            if *v != NO_NODE {
                *v = remap[*v as usize];
            }
        }
    }
}

impl ClusterTree {
    /// Node ids of the leaves, in id order.
    pub fn leaves(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.id)
            .collect()
    }

    /// All mode indices attached at or below `id`.
    pub fn modes_under(&self, id: u32) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let node = &self.nodes[cur as usize];
            out.extend_from_slice(&node.mode_ids);
            stack.extend_from_slice(&node.children);
        }
        out.sort_unstable();
        out
    }

    /// True when `ancestor` equals `node` or lies on its path to the root.
    pub fn is_ancestor_or_self(&self, ancestor: u32, node: u32) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.nodes[c as usize].parent;
        }
        false
    }

    /// Cell-to-node table at ladder index `k` (`u32::MAX` below the level).
    pub fn nodes_at_level(&self, k: usize) -> &[u32] {
        &self.level_nodes[k]
    }
}

/// The node alive at the ladder level nearest above-or-equal `t` whose
/// component contains the cell of `x`. When `t` and the cell value fall in
/// the same inter-ladder gap, the last (highest) ladder level containing the
/// cell is used.
pub fn locate_component(
    tree: &ClusterTree,
    grid: &Grid,
    x: &Point,
    t: f64,
) -> Result<u32, TreeError> {
    let top = *tree.ladder.last().unwrap();
    if t > top {
        return Err(TreeError::LevelAboveLadder { t, top });
    }
    let cell = grid.spec.cell_of_point(x);
    let cv = grid.values[cell];
    if cv < t {
        return Err(TreeError::NotInUpperLevelSet);
    }
    let k = tree.ladder.partition_point(|&l| l < t);
    debug_assert!(k < tree.ladder.len());
    if tree.ladder[k] <= cv {
        let node = tree.level_nodes[k][cell];
        debug_assert_ne!(node, NO_NODE);
        return Ok(node);
    }
    if k > 0 {
        // t and the cell value sit between ladder[k-1] and ladder[k]; use the
        // last cluster containing the cell.
        let node = tree.level_nodes[k - 1][cell];
        debug_assert_ne!(node, NO_NODE);
        return Ok(node);
    }
    Err(TreeError::NotInUpperLevelSet)
}

/// Component counts per ladder level, ascending.
pub fn component_count_profile(tree: &ClusterTree) -> Vec<(f64, usize)> {
    tree.ladder
        .iter()
        .copied()
        .zip(tree.counts.iter().copied())
        .collect()
}
