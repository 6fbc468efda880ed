//! Grid discretization, saddle heights, and the critical depth of a
//! landscape.
//!
//! The saddle height between two minima is the minimax path value over the
//! grid adjacency graph. It is computed by sorting cells ascending and
//! merging adjacent cells with a union-find structure: the cell whose
//! insertion first connects two minima realizes their mountain pass.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::{DomainBox, Landscape};

/// Hard cap on grid allocations.
pub const CELL_BUDGET: u64 = 100_000_000;

/// Rectangular-grid sampling of an objective at cell centers, row-major.
#[derive(Debug, Clone)]
pub struct GridField {
    bounds: DomainBox,
    shape: Vec<usize>,
    values: Vec<f64>,
    cell_size: Vec<f64>,
}

impl GridField {
    /// Assembles a field from parts, enforcing the shape/value invariants.
    pub fn from_parts(bounds: DomainBox, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.len() != bounds.dim() {
            return Err(Error::invalid("shape rank differs from domain rank"));
        }
        if shape.iter().any(|s| *s < 3) {
            return Err(Error::invalid("each grid axis needs at least 3 cells"));
        }
        let total: u64 = shape.iter().map(|s| *s as u64).product();
        if total > CELL_BUDGET {
            return Err(Error::Resource(format!(
                "grid of {total} cells exceeds the {CELL_BUDGET} cell budget"
            )));
        }
        if values.len() as u64 != total {
            return Err(Error::invalid("value array does not match shape"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid contains non-finite values"));
        }
        let cell_size = shape
            .iter()
            .zip(bounds.lo.iter().zip(&bounds.hi))
            .map(|(n, (lo, hi))| (hi - lo) / *n as f64)
            .collect();
        Ok(GridField {
            bounds,
            shape,
            values,
            cell_size,
        })
    }

    pub fn bounds(&self) -> &DomainBox {
        &self.bounds
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell_size(&self) -> &[f64] {
        &self.cell_size
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cell volume (product of per-axis spacings).
    pub fn cell_volume(&self) -> f64 {
        self.cell_size.iter().product()
    }

    /// Multi-index of a flat cell index.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for ax in (0..self.dim()).rev() {
            idx[ax] = flat % self.shape[ax];
            flat /= self.shape[ax];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (ax, i) in idx.iter().enumerate() {
            flat = flat * self.shape[ax] + i;
        }
        flat
    }

    /// Coordinates of a cell center.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .enumerate()
            .map(|(ax, i)| self.bounds.lo[ax] + (*i as f64 + 0.5) * self.cell_size[ax])
            .collect()
    }

    /// Axis-adjacent neighbors (2d-neighborhood, no diagonals).
    fn neighbors(&self, flat: usize, out: &mut Vec<usize>) {
        out.clear();
        let idx = self.unflatten(flat);
        let mut stride = 1;
        for ax in (0..self.dim()).rev() {
            if idx[ax] > 0 {
                out.push(flat - stride);
            }
            if idx[ax] + 1 < self.shape[ax] {
                out.push(flat + stride);
            }
            stride *= self.shape[ax];
        }
    }
}

/// Evaluates a landscape at cell centers. Cells are filled in parallel for
/// large grids; the output is position-indexed, so the result does not
/// depend on the execution plan.
pub fn discretize(land: &Landscape, shape: &[usize]) -> Result<GridField> {
    if shape.len() != land.dim() {
        return Err(Error::invalid(format!(
            "shape rank {} does not match landscape dim {}",
            shape.len(),
            land.dim()
        )));
    }
    if shape.iter().any(|s| *s < 3) {
        return Err(Error::invalid("each grid axis needs at least 3 cells"));
    }
    let total: u64 = shape.iter().map(|s| *s as u64).product();
    if total > CELL_BUDGET {
        return Err(Error::Resource(format!(
            "grid of {total} cells exceeds the {CELL_BUDGET} cell budget"
        )));
    }
    let total = total as usize;
    let dim = land.dim();
    let domain = land.domain().clone();
    let cell_size: Vec<f64> = shape
        .iter()
        .zip(domain.lo.iter().zip(&domain.hi))
        .map(|(n, (lo, hi))| (hi - lo) / *n as f64)
        .collect();
    let eval_cell = |flat: usize| {
        let mut rem = flat;
        let mut x = vec![0.0; dim];
        for ax in (0..dim).rev() {
            let i = rem % shape[ax];
            rem /= shape[ax];
            x[ax] = domain.lo[ax] + (i as f64 + 0.5) * cell_size[ax];
        }
        land.eval_unchecked(&x)
    };
    let values: Vec<f64> = if total >= 1 << 16 {
        (0..total).into_par_iter().map(eval_cell).collect()
    } else {
        (0..total).map(eval_cell).collect()
    };
    GridField::from_parts(domain, shape.to_vec(), values)
}

/// A grid-located local minimum.
#[derive(Debug, Clone, Serialize)]
pub struct GridMinimum {
    /// Coordinates of the cell center.
    pub x: Vec<f64>,
    /// Objective value at the cell.
    pub f: f64,
    /// Flat cell index.
    #[serde(skip)]
    pub cell: usize,
}

/// Local minima of a grid field plus plateau warnings.
#[derive(Debug, Clone)]
pub struct MinimaSearch {
    /// Sorted ascending by value.
    pub minima: Vec<GridMinimum>,
    pub warnings: Vec<String>,
}

/// Cells strictly smaller than every axis-adjacent neighbor; boundary cells
/// compare only against existing neighbors. Cells on a plateau (some equal
/// neighbor) are excluded and recorded as a warning.
pub fn find_local_minima(g: &GridField) -> MinimaSearch {
    let mut minima = Vec::new();
    let mut plateau_cells = 0usize;
    let mut nb = Vec::with_capacity(2 * g.dim());
    for flat in 0..g.len() {
        let v = g.values[flat];
        g.neighbors(flat, &mut nb);
        let mut strict = true;
        let mut plateau = false;
        for &n in &nb {
            if g.values[n] < v {
                strict = false;
                break;
            }
            if g.values[n] == v {
                plateau = true;
            }
        }
        if strict && plateau {
            plateau_cells += 1;
        } else if strict {
            minima.push(GridMinimum {
                x: g.center(flat),
                f: v,
                cell: flat,
            });
        }
    }
    minima.sort_by(|a, b| a.f.total_cmp(&b.f).then(a.cell.cmp(&b.cell)));
    let mut warnings = Vec::new();
    if plateau_cells > 0 {
        warnings.push(format!(
            "{plateau_cells} plateau cell(s) with equal adjacent values excluded from minima"
        ));
    }
    MinimaSearch { minima, warnings }
}

/// Union-find with path halving and union by rank.
struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    #[inline]
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Returns the new root after merging (roots must differ).
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.rank[a as usize], self.rank[b as usize]);
        let (winner, loser) = if ra < rb { (b, a) } else { (a, b) };
        self.parent[loser as usize] = winner;
        if ra == rb {
            self.rank[winner as usize] += 1;
        }
        winner
    }
}

/// Full saddle-height analysis of a grid field.
#[derive(Debug, Clone, Serialize)]
pub struct DepthReport {
    /// Grid minima sorted so `f(m_1) <= f(m_2) <= ...`.
    pub minima: Vec<GridMinimum>,
    /// `saddle_heights[i][j]` is the minimax path value between minima i, j.
    pub saddle_heights: Vec<Vec<f64>>,
    /// Cell centers of the connecting saddles (diagonal: the minimum itself).
    #[serde(skip)]
    pub communicating_saddles: Vec<Vec<Vec<f64>>>,
    /// `max_{i != 1} (saddle_heights[i][0] - f(m_i))`; 0 for a single well.
    pub critical_depth: f64,
    /// Index into `minima` of the barrier that attains the critical depth.
    pub dominating_index: Option<usize>,
    pub warnings: Vec<String>,
}

/// Tolerance for tie detection in the uniqueness checks.
const TIE_TOL: f64 = 1e-9;

/// Computes all pairwise saddle heights in one ascending union-find sweep
/// and derives the critical depth.
pub fn critical_depth(g: &GridField) -> Result<DepthReport> {
    let search = find_local_minima(g);
    let minima = search.minima;
    let mut warnings = search.warnings;
    if minima.is_empty() {
        return Err(Error::Degenerate(
            "no local minima found (all-plateau field)".into(),
        ));
    }
    let n = minima.len();

    let mut heights = vec![vec![f64::NAN; n]; n];
    let mut saddle_cells = vec![vec![usize::MAX; n]; n];
    for (i, m) in minima.iter().enumerate() {
        heights[i][i] = m.f;
        saddle_cells[i][i] = m.cell;
    }

    if n > 1 {
        sweep_saddles(g, &minima, &mut heights, &mut saddle_cells);
    }

    // Critical depth: deepest barrier separating any minimum from m_1.
    let mut depth = 0.0;
    let mut dominating = None;
    for i in 1..n {
        let barrier = heights[i][0] - minima[i].f;
        if barrier > depth {
            depth = barrier;
            dominating = Some(i);
        }
    }

    if n > 1 && (minima[1].f - minima[0].f).abs() <= TIE_TOL {
        warnings.push(format!(
            "global minimum is not unique: f(m_1) = {:.12e} and f(m_2) = {:.12e} tie within {TIE_TOL:.0e}",
            minima[0].f, minima[1].f
        ));
    }
    if n > 2 {
        let mut barriers: Vec<f64> = (1..n).map(|i| heights[i][0] - minima[i].f).collect();
        barriers.sort_by(|a, b| b.total_cmp(a));
        if (barriers[0] - barriers[1]).abs() <= TIE_TOL {
            warnings.push(format!(
                "dominating barrier is not unique: top barriers {:.12e} and {:.12e} tie within {TIE_TOL:.0e}",
                barriers[0], barriers[1]
            ));
        }
    }
    check_saddle_index(g, &minima, &saddle_cells, &mut warnings);

    let communicating_saddles = saddle_cells
        .iter()
        .map(|row| row.iter().map(|&c| g.center(c)).collect())
        .collect();

    Ok(DepthReport {
        minima,
        saddle_heights: heights,
        communicating_saddles,
        critical_depth: depth,
        dominating_index: dominating,
        warnings,
    })
}

/// Minimax path value between two grid minima (by index into the sorted
/// minima list of `find_local_minima`). `i == j` returns `f(m_i)`.
pub fn saddle_height(g: &GridField, i: usize, j: usize) -> Result<f64> {
    let search = find_local_minima(g);
    let n = search.minima.len();
    if i >= n || j >= n {
        return Err(Error::invalid(format!(
            "minimum index out of range: {i}, {j} with {n} minima"
        )));
    }
    if i == j {
        return Ok(search.minima[i].f);
    }
    let mut heights = vec![vec![f64::NAN; n]; n];
    let mut cells = vec![vec![usize::MAX; n]; n];
    sweep_saddles(g, &search.minima, &mut heights, &mut cells);
    Ok(heights[i][j])
}

/// Ascending sweep: insert cells in value order (ties broken by flat index),
/// union with already-inserted neighbors, and record the merge level for
/// every minima pair that becomes connected.
fn sweep_saddles(
    g: &GridField,
    minima: &[GridMinimum],
    heights: &mut [Vec<f64>],
    saddle_cells: &mut [Vec<usize>],
) {
    let n_cells = g.len();
    let mut order: Vec<u32> = (0..n_cells as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        g.values[a as usize]
            .total_cmp(&g.values[b as usize])
            .then(a.cmp(&b))
    });

    // Which minima live in each union-find component, tracked at the root.
    let mut comp_minima: Vec<Vec<u16>> = vec![Vec::new(); n_cells];
    for (mi, m) in minima.iter().enumerate() {
        comp_minima[m.cell] = vec![mi as u16];
    }

    let mut uf = UnionFind::new(n_cells);
    let mut inserted = vec![false; n_cells];
    let mut pairs_left = minima.len() * (minima.len() - 1) / 2;
    let mut nb = Vec::with_capacity(2 * g.dim());

    for &cell in &order {
        let cell = cell as usize;
        inserted[cell] = true;
        let v = g.values[cell];
        g.neighbors(cell, &mut nb);
        for &nbr in &nb {
            if !inserted[nbr] {
                continue;
            }
            let ra = uf.find(cell as u32);
            let rb = uf.find(nbr as u32);
            if ra == rb {
                continue;
            }
            // Record saddle levels for all cross pairs before merging.
            if !comp_minima[ra as usize].is_empty() && !comp_minima[rb as usize].is_empty() {
                for &a in &comp_minima[ra as usize] {
                    for &b in &comp_minima[rb as usize] {
                        let (a, b) = (a as usize, b as usize);
                        heights[a][b] = v;
                        heights[b][a] = v;
                        saddle_cells[a][b] = cell;
                        saddle_cells[b][a] = cell;
                        pairs_left -= 1;
                    }
                }
            }
            let winner = uf.union(ra, rb);
            let loser = if winner == ra { rb } else { ra };
            if !comp_minima[loser as usize].is_empty() {
                let moved = std::mem::take(&mut comp_minima[loser as usize]);
                comp_minima[winner as usize].extend(moved);
            }
            if pairs_left == 0 {
                return;
            }
        }
    }
}

/// Checks that each recorded communicating saddle looks like an index-one
/// critical point (one negative Hessian direction) via finite differences on
/// the grid values. Violations are diagnostics, not errors; the check runs
/// only in one and two dimensions.
fn check_saddle_index(
    g: &GridField,
    minima: &[GridMinimum],
    saddle_cells: &[Vec<usize>],
    warnings: &mut Vec<String>,
) {
    if g.dim() > 2 || minima.len() < 2 {
        return;
    }
    for (i, row) in saddle_cells.iter().enumerate() {
        for (j, &cell) in row.iter().enumerate().skip(i + 1) {
            if cell == usize::MAX {
                continue;
            }
            if let Some(evs) = grid_hessian_eigs(g, cell) {
                let negative = evs.iter().filter(|l| **l < 0.0).count();
                if negative != 1 {
                    warnings.push(format!(
                        "saddle between minima {i} and {j} has {negative} negative curvature \
                         direction(s); expected exactly 1 (index-one assumption)"
                    ));
                }
            }
        }
    }
}

/// Hessian eigenvalues from grid values at an interior cell (1-D/2-D only).
fn grid_hessian_eigs(g: &GridField, cell: usize) -> Option<Vec<f64>> {
    let idx = g.unflatten(cell);
    for (ax, &i) in idx.iter().enumerate() {
        if i == 0 || i + 1 >= g.shape[ax] {
            return None; // boundary cell, no centered stencil
        }
    }
    let v = |offsets: &[isize]| {
        let mut shifted = idx.clone();
        for (ax, &o) in offsets.iter().enumerate() {
            shifted[ax] = (shifted[ax] as isize + o) as usize;
        }
        g.values[g.flatten(&shifted)]
    };
    match g.dim() {
        1 => {
            let h = g.cell_size[0];
            Some(vec![(v(&[1]) - 2.0 * v(&[0]) + v(&[-1])) / (h * h)])
        }
        2 => {
            let (hx, hy) = (g.cell_size[0], g.cell_size[1]);
            let fxx = (v(&[1, 0]) - 2.0 * v(&[0, 0]) + v(&[-1, 0])) / (hx * hx);
            let fyy = (v(&[0, 1]) - 2.0 * v(&[0, 0]) + v(&[0, -1])) / (hy * hy);
            let fxy = (v(&[1, 1]) - v(&[1, -1]) - v(&[-1, 1]) + v(&[-1, -1])) / (4.0 * hx * hy);
            let tr = fxx + fyy;
            let disc = ((fxx - fyy).powi(2) + 4.0 * fxy * fxy).max(0.0).sqrt();
            Some(vec![0.5 * (tr - disc), 0.5 * (tr + disc)])
        }
        _ => None,
    }
}
