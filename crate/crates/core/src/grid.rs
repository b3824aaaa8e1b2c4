//! Unfitted Cartesian grid and the fictitious domain built on it.
//!
//! Cell `i` is the cube `Π_k [i_k σ, (i_k + 1) σ]`; the grid is anchored at the
//! origin and never moves. A [`FictitiousDomain`] records which cells lie fully
//! inside the domain, which are cut by its boundary, and the ghost faces between
//! cells of the fictitious domain that touch a cut cell.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use thiserror::Error;

use crate::geometry::{clip_segment_to_box, BoundaryMesh, ClippedCell};
use crate::{MultiIndex, MAX_DIM};

/// Reachability bound used when the caller has no preference.
pub const DEFAULT_K_MAX: usize = 3;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("no cell lies fully inside the domain at sigma = {sigma}; try sigma <= {suggested}")]
    NoInteriorCell { sigma: f64, suggested: f64 },
    #[error("cut cell {cell:?} cannot reach any interior cell")]
    Unreachable { cell: MultiIndex },
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellClass {
    Outside,
    Interior,
    Cut,
}

impl CellClass {
    pub fn in_domain(self) -> bool {
        self != CellClass::Outside
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::Outside => "outside",
            CellClass::Interior => "interior",
            CellClass::Cut => "cut",
        }
    }
}

/// Face between cell `lower` and cell `lower + e_axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Face {
    pub axis: usize,
    pub lower: MultiIndex,
}

impl Face {
    pub fn upper(&self) -> MultiIndex {
        let mut u = self.lower;
        u[self.axis] += 1;
        u
    }
}

/// Window of cells `lo[k] <= i_k < hi[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianGrid {
    pub sigma: f64,
    pub dim: usize,
    pub lo: MultiIndex,
    pub hi: MultiIndex,
}

impl CartesianGrid {
    /// Window covering the bounding box of `mesh` padded by `pad` cells.
    pub fn around(mesh: &BoundaryMesh, sigma: f64, pad: usize) -> Result<Self, GridError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(GridError::BadSpacing(sigma));
        }
        let dim = mesh.dim();
        let (blo, bhi) = mesh.bbox();
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for k in 0..dim {
            lo[k] = (blo[k] / sigma).floor() as i64 - pad as i64;
            hi[k] = (bhi[k] / sigma).ceil() as i64 + pad as i64;
        }
        Ok(Self { sigma, dim, lo, hi })
    }

    pub fn shape(&self) -> [usize; MAX_DIM] {
        let mut s = [1; MAX_DIM];
        for k in 0..self.dim {
            s[k] = (self.hi[k] - self.lo[k]) as usize;
        }
        s
    }

    pub fn num_cells(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn contains(&self, i: &MultiIndex) -> bool {
        (0..self.dim).all(|k| i[k] >= self.lo[k] && i[k] < self.hi[k])
    }

    /// Row-major position of a cell, axis 0 slowest.
    pub fn linear(&self, i: &MultiIndex) -> Option<usize> {
        if !self.contains(i) {
            return None;
        }
        let s = self.shape();
        let mut idx = 0;
        for k in 0..self.dim {
            idx = idx * s[k] + (i[k] - self.lo[k]) as usize;
        }
        Some(idx)
    }

    pub fn cell_at(&self, mut linear: usize) -> MultiIndex {
        let s = self.shape();
        let mut i = [0; MAX_DIM];
        for k in (0..self.dim).rev() {
            i[k] = self.lo[k] + (linear % s[k]) as i64;
            linear /= s[k];
        }
        i
    }

    pub fn cell_lo(&self, i: &MultiIndex) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for k in 0..self.dim {
            x[k] = i[k] as f64 * self.sigma;
        }
        x
    }

    /// Cell containing `x` (half-open towards +∞).
    pub fn locate(&self, x: &[f64]) -> MultiIndex {
        let mut i = [0; MAX_DIM];
        for k in 0..self.dim {
            i[k] = (x[k] / self.sigma).floor() as i64;
        }
        i
    }

    pub fn neighbor(&self, i: &MultiIndex, axis: usize, step: i64) -> MultiIndex {
        let mut j = *i;
        j[axis] += step;
        j
    }
}

#[derive(Debug, Clone)]
pub struct FictitiousDomain {
    grid: CartesianGrid,
    mesh: BoundaryMesh,
    classes: Vec<CellClass>,
    clipped: BTreeMap<MultiIndex, ClippedCell>,
    ghost_faces: Vec<Face>,
    interior: Vec<MultiIndex>,
    cut: Vec<MultiIndex>,
    active: Vec<MultiIndex>,
    achieved_k: usize,
    k_exceeded: bool,
    degenerate_cells: usize,
}

impl FictitiousDomain {
    /// Classifies every cell of `grid` against `mesh`.
    pub fn classify(grid: CartesianGrid, mesh: &BoundaryMesh) -> Result<Self, GridError> {
        let sigma = grid.sigma;
        let mut classes = vec![CellClass::Outside; grid.num_cells()];
        let mut clipped = BTreeMap::new();
        let mut degenerate_cells = 0;
        let mut record = |i: MultiIndex, c: ClippedCell, classes: &mut Vec<CellClass>| {
            let lin = grid.linear(&i).expect("cell in window");
            if c.degenerate {
                degenerate_cells += 1;
            }
            if c.is_full() {
                classes[lin] = CellClass::Interior;
            } else if !c.is_empty() {
                classes[lin] = CellClass::Cut;
                clipped.insert(i, c);
            }
        };
        match mesh.dim() {
            1 => {
                for i0 in grid.lo[0]..grid.hi[0] {
                    let i = [i0, 0, 0];
                    let c = mesh.clip_cell(&grid.cell_lo(&i), sigma);
                    record(i, c, &mut classes);
                }
            }
            _ => {
                let verts = mesh.vertices().expect("2D mesh is a polygon");
                let touched = touched_cells(&grid, verts);
                for &lin in &touched {
                    let i = grid.cell_at(lin);
                    let c = mesh.clip_cell(&grid.cell_lo(&i), sigma);
                    record(i, c, &mut classes);
                }
                // cells no edge touches are entirely inside or outside: decide
                // by the crossing parity of the row through their centers
                let touched: BTreeSet<usize> = touched.into_iter().collect();
                let m = verts.len();
                for i1 in grid.lo[1]..grid.hi[1] {
                    let y = (i1 as f64 + 0.5) * sigma;
                    let mut xs: Vec<f64> = (0..m)
                        .filter_map(|e| {
                            let a = verts[e];
                            let b = verts[(e + 1) % m];
                            ((a[1] > y) != (b[1] > y))
                                .then(|| a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]))
                        })
                        .collect();
                    xs.sort_by(f64::total_cmp);
                    for i0 in grid.lo[0]..grid.hi[0] {
                        let i = [i0, i1, 0];
                        let lin = grid.linear(&i).unwrap();
                        if touched.contains(&lin) {
                            continue;
                        }
                        let x = (i0 as f64 + 0.5) * sigma;
                        let right = xs.len() - xs.partition_point(|&v| v <= x);
                        if right % 2 == 1 {
                            classes[lin] = CellClass::Interior;
                        }
                    }
                }
            }
        }
        let mut fd = Self {
            grid,
            mesh: mesh.clone(),
            classes,
            clipped,
            ghost_faces: Vec::new(),
            interior: Vec::new(),
            cut: Vec::new(),
            active: Vec::new(),
            achieved_k: 0,
            k_exceeded: false,
            degenerate_cells,
        };
        fd.rebuild_lists();
        if fd.interior.is_empty() {
            let (lo, hi) = mesh.bbox();
            let width = (0..mesh.dim()).map(|k| hi[k] - lo[k]).fold(f64::INFINITY, f64::min);
            return Err(GridError::NoInteriorCell {
                sigma,
                suggested: (width / 4.0).min(sigma / 2.0),
            });
        }
        fd.achieved_k = fd.distances().1;
        Ok(fd)
    }

    /// Convenience: grid padded by `pad` cells around the mesh, then classified.
    pub fn build(mesh: &BoundaryMesh, sigma: f64, pad: usize) -> Result<Self, GridError> {
        Self::classify(CartesianGrid::around(mesh, sigma, pad)?, mesh)
    }

    fn rebuild_lists(&mut self) {
        self.interior.clear();
        self.cut.clear();
        self.active.clear();
        for (lin, &c) in self.classes.iter().enumerate() {
            let i = self.grid.cell_at(lin);
            match c {
                CellClass::Interior => self.interior.push(i),
                CellClass::Cut => self.cut.push(i),
                CellClass::Outside => continue,
            }
            self.active.push(i);
        }
        let mut faces = BTreeSet::new();
        for i in &self.cut {
            for axis in 0..self.grid.dim {
                for step in [-1, 1] {
                    let j = self.grid.neighbor(i, axis, step);
                    if self.class_of(&j).in_domain() {
                        let lower = if step < 0 { j } else { *i };
                        faces.insert(Face { axis, lower });
                    }
                }
            }
        }
        self.ghost_faces = faces.into_iter().collect();
    }

    /// BFS distance from the interior set across faces touching cut cells.
    /// Returns per-cut-cell distances, the maximum, and BFS parents.
    fn distances(&self) -> (BTreeMap<MultiIndex, Option<usize>>, usize) {
        let (dist, _) = self.bfs();
        let k = dist.values().filter_map(|d| *d).max().unwrap_or(0);
        (dist, k)
    }

    #[allow(clippy::type_complexity)]
    fn bfs(
        &self,
    ) -> (
        BTreeMap<MultiIndex, Option<usize>>,
        BTreeMap<MultiIndex, MultiIndex>,
    ) {
        let mut dist: BTreeMap<MultiIndex, Option<usize>> = self.cut.iter().map(|c| (*c, None)).collect();
        let mut parent = BTreeMap::new();
        let mut queue = VecDeque::new();
        // seed with cut cells adjacent to an interior cell
        for c in &self.cut {
            for axis in 0..self.grid.dim {
                for step in [-1, 1] {
                    let j = self.grid.neighbor(c, axis, step);
                    if self.class_of(&j) == CellClass::Interior && dist[c].is_none() {
                        dist.insert(*c, Some(1));
                        parent.insert(*c, j);
                        queue.push_back(*c);
                    }
                }
            }
        }
        while let Some(c) = queue.pop_front() {
            let dc = dist[&c].unwrap();
            for axis in 0..self.grid.dim {
                for step in [-1, 1] {
                    let j = self.grid.neighbor(&c, axis, step);
                    if let Some(slot) = dist.get_mut(&j) {
                        if slot.is_none() {
                            *slot = Some(dc + 1);
                            parent.insert(j, c);
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        (dist, parent)
    }

    /// Checks that every cut cell reaches an interior cell through at most
    /// `k_max` ghost faces. Chains that are too long get their terminal interior
    /// cell moved into the cut set (when it keeps an interior neighbour), which
    /// enlarges the ghost-face set. Moving cells never shortens a chain, so the
    /// achieved bound is recorded and [`Self::k_exceeded`] reports whether it
    /// still exceeds `k_max`.
    pub fn enforce_reachability(mut self, k_max: usize) -> Result<Self, GridError> {
        let (dist, parent) = self.bfs();
        if let Some((cell, _)) = dist.iter().find(|(_, d)| d.is_none()) {
            return Err(GridError::Unreachable { cell: *cell });
        }
        let k = dist.values().filter_map(|d| *d).max().unwrap_or(0);
        if k > k_max {
            let mut promote = BTreeSet::new();
            for (c, d) in &dist {
                if d.unwrap() <= k_max {
                    continue;
                }
                let mut cur = *c;
                while let Some(p) = parent.get(&cur) {
                    cur = *p;
                    if self.class_of(&cur) == CellClass::Interior {
                        break;
                    }
                }
                promote.insert(cur);
            }
            for cell in promote {
                let keeps_interior = (0..self.grid.dim).any(|axis| {
                    [-1, 1].iter().any(|&s| {
                        let j = self.grid.neighbor(&cell, axis, s);
                        self.class_of(&j) == CellClass::Interior
                    })
                });
                if !keeps_interior {
                    continue;
                }
                let lin = self.grid.linear(&cell).unwrap();
                self.classes[lin] = CellClass::Cut;
                let c = self.mesh.clip_cell(&self.grid.cell_lo(&cell), self.grid.sigma);
                self.clipped.insert(cell, c);
            }
            self.rebuild_lists();
        }
        let (dist, k) = self.distances();
        if let Some((cell, _)) = dist.iter().find(|(_, d)| d.is_none()) {
            return Err(GridError::Unreachable { cell: *cell });
        }
        self.achieved_k = k;
        self.k_exceeded = k > k_max;
        Ok(self)
    }

    /// Faces of the given cells, deduplicated and sorted by `(axis, index)`.
    pub fn faces_of(&self, cells: &[MultiIndex]) -> Vec<Face> {
        let mut faces = BTreeSet::new();
        for c in cells {
            for axis in 0..self.grid.dim {
                faces.insert(Face { axis, lower: *c });
                faces.insert(Face {
                    axis,
                    lower: self.grid.neighbor(c, axis, -1),
                });
            }
        }
        faces.into_iter().collect()
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn mesh(&self) -> &BoundaryMesh {
        &self.mesh
    }

    pub fn sigma(&self) -> f64 {
        self.grid.sigma
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn class_of(&self, i: &MultiIndex) -> CellClass {
        self.grid
            .linear(i)
            .map_or(CellClass::Outside, |l| self.classes[l])
    }

    /// Clipped region of a cut cell.
    pub fn clipped(&self, i: &MultiIndex) -> Option<&ClippedCell> {
        self.clipped.get(i)
    }

    pub fn interior_cells(&self) -> &[MultiIndex] {
        &self.interior
    }

    pub fn cut_cells(&self) -> &[MultiIndex] {
        &self.cut
    }

    /// All cells of the fictitious domain, lexicographically sorted.
    pub fn active_cells(&self) -> &[MultiIndex] {
        &self.active
    }

    pub fn ghost_faces(&self) -> &[Face] {
        &self.ghost_faces
    }

    pub fn achieved_k(&self) -> usize {
        self.achieved_k
    }

    pub fn k_exceeded(&self) -> bool {
        self.k_exceeded
    }

    /// Cells whose tiny intersection was discarded as degenerate.
    pub fn degenerate_cells(&self) -> usize {
        self.degenerate_cells
    }

    /// Measure of the domain recovered from the cell classification.
    pub fn domain_measure(&self) -> f64 {
        let full = self.grid.sigma.powi(self.grid.dim as i32);
        self.interior.len() as f64 * full + self.clipped.values().map(|c| c.measure).sum::<f64>()
    }

    /// `cell_i[,cell_j],class` rows.
    pub fn write_cells_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.grid.dim == 1 {
            writeln!(w, "cell_i,class")?;
        } else {
            writeln!(w, "cell_i,cell_j,class")?;
        }
        for c in &self.active {
            let cls = self.class_of(c).as_str();
            if self.grid.dim == 1 {
                writeln!(w, "{},{cls}", c[0])?;
            } else {
                writeln!(w, "{},{},{cls}", c[0], c[1])?;
            }
        }
        Ok(())
    }

    /// `face_axis,face_i[,face_j]` rows; the index is the lower cell.
    pub fn write_faces_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.grid.dim == 1 {
            writeln!(w, "face_axis,face_i")?;
        } else {
            writeln!(w, "face_axis,face_i,face_j")?;
        }
        for f in &self.ghost_faces {
            if self.grid.dim == 1 {
                writeln!(w, "{},{}", f.axis, f.lower[0])?;
            } else {
                writeln!(w, "{},{},{}", f.axis, f.lower[0], f.lower[1])?;
            }
        }
        Ok(())
    }
}

/// Linear indices of cells whose closed box meets a polygon edge.
fn touched_cells(grid: &CartesianGrid, verts: &[[f64; 2]]) -> Vec<usize> {
    let s = grid.sigma;
    let m = verts.len();
    let mut out = BTreeSet::new();
    let slack = 1e-9 * s;
    for e in 0..m {
        let a = verts[e];
        let b = verts[(e + 1) % m];
        let c0 = (a[0].min(b[0]) / s).floor() as i64 - 1;
        let c1 = (a[0].max(b[0]) / s).floor() as i64;
        for i0 in c0..=c1 {
            let xl = i0 as f64 * s;
            let Some((t0, t1)) = clip_segment_to_box(a, b, [xl - slack, f64::MIN], [xl + s + slack, f64::MAX])
            else {
                continue;
            };
            let y0 = a[1] + t0 * (b[1] - a[1]);
            let y1 = a[1] + t1 * (b[1] - a[1]);
            let r0 = (y0.min(y1) / s).floor() as i64 - 1;
            let r1 = (y0.max(y1) / s).floor() as i64;
            for i1 in r0..=r1 {
                let yl = i1 as f64 * s;
                let hit = clip_segment_to_box(a, b, [xl - slack, yl - slack], [xl + s + slack, yl + s + slack]);
                if hit.is_some() {
                    if let Some(l) = grid.linear(&[i0, i1, 0]) {
                        out.insert(l);
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes_1d(a: f64, b: f64, sigma: f64) -> FictitiousDomain {
        let mesh = BoundaryMesh::interval(a, b).unwrap();
        FictitiousDomain::build(&mesh, sigma, 3).unwrap()
    }

    #[test]
    fn aligned_interval_has_no_cut_cells() {
        let fd = classes_1d(0.0, 1.0, 0.25);
        assert_eq!(fd.interior_cells().len(), 4);
        assert!(fd.cut_cells().is_empty());
        assert!(fd.ghost_faces().is_empty());
        assert_eq!(fd.achieved_k(), 0);
    }

    #[test]
    fn shifted_interval_cut_cells_and_faces() {
        let fd = classes_1d(-0.1, 1.1, 0.25);
        assert_eq!(fd.cut_cells(), &[[-1, 0, 0], [4, 0, 0]]);
        assert_eq!(fd.interior_cells().len(), 4);
        let faces: Vec<i64> = fd.ghost_faces().iter().map(|f| f.lower[0]).collect();
        // face at x = 0 has lower cell -1, face at x = 1 has lower cell 3
        assert_eq!(faces, vec![-1, 3]);
        assert_eq!(fd.achieved_k(), 1);
    }

    #[test]
    fn faces_of_small_sets() {
        let mesh = BoundaryMesh::rect([0.0, 0.0], [1.0, 1.0]).unwrap();
        let fd = FictitiousDomain::build(&mesh, 0.25, 1).unwrap();
        assert_eq!(fd.faces_of(&[[1, 1, 0]]).len(), 4);
        assert_eq!(fd.faces_of(&[[1, 1, 0], [2, 1, 0]]).len(), 7);
        assert!(fd.faces_of(&[]).is_empty());
        let f = fd.faces_of(&[[1, 1, 0], [2, 1, 0]]);
        assert!(f.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn half_plane_column_matches_brute_force() {
        let sigma = 0.25;
        // domain x1 < 0.5 sigma on a 4x4 window [-3σ, σ) x [0, 4σ)
        let mesh = BoundaryMesh::rect([-3.0 * sigma, 0.0], [0.5 * sigma, 4.0 * sigma]).unwrap();
        let grid = CartesianGrid {
            sigma,
            dim: 2,
            lo: [-3, 0, 0],
            hi: [1, 4, 0],
        };
        let fd = FictitiousDomain::classify(grid.clone(), &mesh).unwrap();
        for lin in 0..grid.num_cells() {
            let i = grid.cell_at(lin);
            let m = mesh.clip_cell(&grid.cell_lo(&i), sigma).measure;
            let expect = if m >= sigma * sigma * (1.0 - 1e-12) {
                CellClass::Interior
            } else if m > 0.0 {
                CellClass::Cut
            } else {
                CellClass::Outside
            };
            assert_eq!(fd.class_of(&i), expect, "{i:?}");
        }
        assert_eq!(fd.cut_cells().len(), 4);
        assert!(fd.cut_cells().iter().all(|c| c[0] == 0));
        // 4 vertical faces to column -1 plus 3 horizontal faces within the column
        let faces = fd.ghost_faces();
        assert_eq!(faces.iter().filter(|f| f.axis == 0).count(), 4);
        assert_eq!(faces.iter().filter(|f| f.axis == 1).count(), 3);
    }

    #[test]
    fn disk_measure_matches_polygon_area() {
        let mesh = BoundaryMesh::disk([0.013, -0.021], 1.0, 64).unwrap();
        let fd = FictitiousDomain::build(&mesh, 0.05, 3).unwrap();
        let rel = (fd.domain_measure() - mesh.measure()).abs() / mesh.measure();
        assert!(rel < 1e-10, "{rel}");
        // classification agrees with clipping for every cell
        for c in fd.active_cells() {
            let m = mesh.clip_cell(&fd.grid().cell_lo(c), 0.05);
            assert_eq!(m.is_full(), fd.class_of(c) == CellClass::Interior);
        }
    }

    #[test]
    fn coarse_grid_reports_no_interior_cell() {
        let mesh = BoundaryMesh::interval(0.05, 0.15).unwrap();
        let err = FictitiousDomain::build(&mesh, 1.0, 2).unwrap_err();
        assert!(matches!(err, GridError::NoInteriorCell { .. }));
    }

    #[test]
    fn csv_dumps_have_headers() {
        let fd = classes_1d(-0.1, 1.1, 0.25);
        let mut cells = Vec::new();
        fd.write_cells_csv(&mut cells).unwrap();
        let text = String::from_utf8(cells).unwrap();
        assert!(text.starts_with("cell_i,class\n-1,cut\n"));
        let mut faces = Vec::new();
        fd.write_faces_csv(&mut faces).unwrap();
        assert_eq!(String::from_utf8(faces).unwrap(), "face_axis,face_i\n0,-1\n0,3\n");
    }
}
