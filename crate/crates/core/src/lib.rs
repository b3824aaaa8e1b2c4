//! Particle methods on general bounded domains.
//!
//! The domain is given only through a boundary mesh. Computations live on an
//! unfitted Cartesian grid: tensor-product B-splines on the cells that meet the
//! domain, cut-cell Gram moments obtained from boundary integrals, nonnegative
//! per-B-spline quadrature rules for particle initialization, and a ghost-penalty
//! stabilized mass operator whose inverse regularizes particle fields.
//!
//! Module map:
//!
//! * [`geometry`]: boundary meshes, point classification, cell clipping, boundary rules
//! * [`grid`]: Cartesian grid, cell classes, ghost faces, reachability
//! * [`splines`]: cardinal B-splines, spline spaces and fields, quasi-interpolation
//! * [`moments`]: Gram moments on the physical domain via the divergence theorem
//! * [`quadrature`]: moment-exact nonnegative rules and particle fields
//! * [`operators`]: mass operator, ghost penalty, CG, extension, conditioning
//! * [`particles`]: advection, regularization, remeshing
//! * [`fieldexpr`]: arithmetic expressions for initial data and velocities
//! * [`harness`]: convergence studies behind the `pmreg` CLI

mod dense;
pub mod fieldexpr;
pub mod gauss;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod moments;
pub mod operators;
pub mod particles;
pub mod quadrature;
pub mod splines;

/// Largest spatial dimension representable by the fixed-size index types.
/// Only `d = 1` and `d = 2` are wired through the geometry kernel.
pub const MAX_DIM: usize = 3;

/// Integer multi-index; entries beyond the active dimension are zero.
pub type MultiIndex = [i64; MAX_DIM];

/// Point in space; entries beyond the active dimension are zero.
pub type Point = [f64; MAX_DIM];

/// Multi-indices of the box `lo <= i < hi` in lexicographic order (axis 0 slowest).
pub fn box_iter(lo: MultiIndex, hi: MultiIndex, dim: usize) -> BoxIter {
    let empty = (0..dim).any(|k| hi[k] <= lo[k]);
    BoxIter {
        lo,
        hi,
        dim,
        next: (!empty).then_some(lo),
    }
}

#[derive(Debug, Clone)]
pub struct BoxIter {
    lo: MultiIndex,
    hi: MultiIndex,
    dim: usize,
    next: Option<MultiIndex>,
}

impl Iterator for BoxIter {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        let cur = self.next?;
        let mut n = cur;
        let mut k = self.dim;
        self.next = loop {
            if k == 0 {
                break None;
            }
            k -= 1;
            n[k] += 1;
            if n[k] < self.hi[k] {
                break Some(n);
            }
            n[k] = self.lo[k];
        };
        Some(cur)
    }
}
