//! Gram moments `∫_Ω b_λ b_μ dx` on the physical domain.
//!
//! Inside a cut cell the product of the two basis functions is a tensor
//! polynomial. Taking an antiderivative along axis 1 turns the area integral
//! into a flux integral over the edges of the clipped cell: the boundary facets
//! inside the cell plus the cell faces inside the domain. Those edge integrals
//! have polynomial integrands and are evaluated exactly by Gauss rules.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use log::warn;
use thiserror::Error;

use crate::gauss::{GaussRule, TriangleRule};
use crate::geometry::{BoundaryMesh, ClippedCell};
use crate::grid::{CellClass, FictitiousDomain};
use crate::splines::{horner, local_polynomials};
use crate::{box_iter, MultiIndex, MAX_DIM};

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("moment cache key mismatch: {0}")]
    KeyMismatch(String),
    #[error("malformed moment cache: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default Gauss points per clipped edge; exact for the degree `4n - 3`
/// edge integrands.
pub fn default_facet_points(n: usize) -> usize {
    2 * n
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_integrate(a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + 1];
    for (i, c) in a.iter().enumerate() {
        out[i + 1] = c / (i as f64 + 1.0);
    }
    out
}

/// One-dimensional Gram value `∫ b^n(x) b^n(x - offset) dx`.
pub fn gram_1d(n: usize, offset: i64) -> f64 {
    if offset.unsigned_abs() as usize >= n {
        return 0.0;
    }
    let g = GaussRule::new(n);
    let o = offset as f64;
    let (lo, hi) = (o.max(0.0) as i64, (n as f64 + o.min(0.0)) as i64);
    let mut s = 0.0;
    for span in lo..hi {
        for (x, w) in g.on_interval(span as f64, span as f64 + 1.0) {
            s += w * crate::splines::bspline(n, x, 0) * crate::splines::bspline(n, x - o, 0);
        }
    }
    s
}

/// `∫_{R^d} b_λ b_μ` for `μ = λ + offset` at spacing `sigma`.
pub fn fullspace_moment(n: usize, offset: &[i64], sigma: f64) -> f64 {
    offset
        .iter()
        .map(|&o| gram_1d(n, o) * sigma)
        .product()
}

/// Polynomial data shared by all cells at a fixed order.
#[derive(Debug, Clone)]
pub struct CellKernel {
    n: usize,
    /// `β_j(t) = b^n(t + j)` on `[0, 1]`.
    beta: Vec<Vec<f64>>,
    /// Antiderivative of `β_a β_b`, vanishing at 0, indexed `a * n + b`.
    phi: Vec<Vec<f64>>,
    /// `∫_0^1 β_a β_b`.
    gram1: Vec<f64>,
}

impl CellKernel {
    pub fn new(n: usize) -> Self {
        let beta = local_polynomials(n, 0);
        let mut phi = Vec::with_capacity(n * n);
        let mut gram1 = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let p = poly_integrate(&poly_mul(&beta[a], &beta[b]));
                gram1.push(horner(&p, 1.0));
                phi.push(p);
            }
        }
        Self { n, beta, phi, gram1 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Local Gram matrix of a full cell, `n^d x n^d`, row-major over local
    /// offsets `j` with `λ = cell - j` (axis 0 slowest).
    pub fn full_cell(&self, dim: usize, sigma: f64) -> Vec<f64> {
        let n = self.n;
        let m = n.pow(dim as u32);
        let vol = sigma.powi(dim as i32);
        let offs = local_offsets(n, dim);
        let mut g = vec![0.0; m * m];
        for (a, ja) in offs.iter().enumerate() {
            for (b, jb) in offs.iter().enumerate() {
                let mut v = vol;
                for k in 0..dim {
                    v *= self.gram1[ja[k] as usize * n + jb[k] as usize];
                }
                g[a * m + b] = v;
            }
        }
        g
    }

    /// Local Gram matrix of the clipped part of a cell via edge fluxes with
    /// `points` Gauss nodes per edge.
    pub fn clipped_cell(&self, cell: &ClippedCell, points: usize) -> Vec<f64> {
        let n = self.n;
        let dim = cell.dim;
        let m = n.pow(dim as u32);
        let mut g = vec![0.0; m * m];
        let s = cell.sigma;
        match dim {
            1 => {
                let Some((a, b)) = cell.interval() else { return g };
                let (ta, tb) = ((a - cell.lo[0]) / s, (b - cell.lo[0]) / s);
                for i in 0..n {
                    for j in 0..n {
                        let p = &self.phi[i * n + j];
                        g[i * m + j] = s * (horner(p, tb) - horner(p, ta));
                    }
                }
            }
            2 => {
                let poly = cell.outline();
                let rule = GaussRule::new(points.max(1));
                let vol = s * s;
                let mut phi_v = vec![0.0; n * n];
                let mut b1 = vec![0.0; n];
                for e in 0..poly.len() {
                    let a = poly[e];
                    let b = poly[(e + 1) % poly.len()];
                    let ta = [(a[0] - cell.lo[0]) / s, (a[1] - cell.lo[1]) / s];
                    let tb = [(b[0] - cell.lo[0]) / s, (b[1] - cell.lo[1]) / s];
                    // x-component of the outward normal times arc length
                    let dy = tb[1] - ta[1];
                    if dy == 0.0 {
                        continue;
                    }
                    for (u, w) in rule.nodes.iter().zip(&rule.weights) {
                        let t0 = ta[0] + u * (tb[0] - ta[0]);
                        let t1 = ta[1] + u * dy;
                        for (v, p) in phi_v.iter_mut().zip(&self.phi) {
                            *v = horner(p, t0);
                        }
                        for (v, p) in b1.iter_mut().zip(&self.beta) {
                            *v = horner(p, t1);
                        }
                        let wq = w * dy * vol;
                        for a0 in 0..n {
                            for a1 in 0..n {
                                let row = (a0 * n + a1) * m;
                                let wa = wq * b1[a1];
                                for c0 in 0..n {
                                    let f = wa * phi_v[a0 * n + c0];
                                    for c1 in 0..n {
                                        g[row + c0 * n + c1] += f * b1[c1];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            _ => unimplemented!("clipped moments for dimension {dim}"),
        }
        g
    }

    /// Same integrals through triangulated area quadrature; used as a fallback
    /// for slivers and as an independent check.
    pub fn clipped_cell_by_area(&self, cell: &ClippedCell) -> Vec<f64> {
        let n = self.n;
        let dim = cell.dim;
        let m = n.pow(dim as u32);
        let mut g = vec![0.0; m * m];
        let s = cell.sigma;
        let offs = local_offsets(n, dim);
        let mut acc = |t: &[f64], w: f64| {
            let vals: Vec<f64> = offs
                .iter()
                .map(|j| (0..dim).map(|k| horner(&self.beta[j[k] as usize], t[k])).product())
                .collect();
            for a in 0..m {
                for b in 0..m {
                    g[a * m + b] += w * vals[a] * vals[b];
                }
            }
        };
        match dim {
            1 => {
                if let Some((a, b)) = cell.interval() {
                    let r = GaussRule::new(n);
                    for (x, w) in r.on_interval(a, b) {
                        acc(&[(x - cell.lo[0]) / s], w);
                    }
                }
            }
            _ => {
                let r = TriangleRule::new(2 * n - 1);
                for t in cell.triangles() {
                    for (x, w) in r.on_triangle(t[0], t[1], t[2]) {
                        acc(&[(x[0] - cell.lo[0]) / s, (x[1] - cell.lo[1]) / s], w);
                    }
                }
            }
        }
        g
    }
}

/// Local offsets `j ∈ [0, n)^d` in row-major order.
pub fn local_offsets(n: usize, dim: usize) -> Vec<MultiIndex> {
    let mut hi = [1; MAX_DIM];
    hi[..dim].fill(n as i64);
    box_iter([0; MAX_DIM], hi, dim).collect()
}

/// Position of the local offset `j` in the row-major local numbering.
pub fn local_pos(j: &MultiIndex, n: usize, dim: usize) -> usize {
    (0..dim).fold(0, |acc, k| acc * n + j[k] as usize)
}

/// `∫_Ω b_λ b_μ` computed directly from the mesh over the common support box.
pub fn cut_moment(mesh: &BoundaryMesh, n: usize, sigma: f64, lam: &MultiIndex, mu: &MultiIndex, facet_points: usize) -> f64 {
    let dim = mesh.dim();
    let mut lo = [0; MAX_DIM];
    let mut hi = [0; MAX_DIM];
    for k in 0..dim {
        lo[k] = lam[k].max(mu[k]);
        hi[k] = lam[k].min(mu[k]) + n as i64;
        if hi[k] <= lo[k] {
            return 0.0;
        }
    }
    let kernel = CellKernel::new(n);
    let m = n.pow(dim as u32);
    let mut s = 0.0;
    for c in box_iter(lo, hi, dim) {
        let mut x = [0.0; MAX_DIM];
        for k in 0..dim {
            x[k] = c[k] as f64 * sigma;
        }
        let clip = mesh.clip_cell(&x[..dim], sigma);
        if clip.is_empty() {
            continue;
        }
        let g = if clip.is_full() {
            kernel.full_cell(dim, sigma)
        } else {
            kernel.clipped_cell(&clip, facet_points)
        };
        let mut ja = [0; MAX_DIM];
        let mut jb = [0; MAX_DIM];
        for k in 0..dim {
            ja[k] = c[k] - lam[k];
            jb[k] = c[k] - mu[k];
        }
        s += g[local_pos(&ja, n, dim) * m + local_pos(&jb, n, dim)];
    }
    s
}

/// Whether an entry needed boundary-reduced cell integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Interior,
    BoundaryReduced,
}

/// Gram moments of a spline space on the physical domain. Interior cells share
/// one tensor local matrix; each cut cell stores its own. Entries are summed on
/// demand from the cells in the common support.
#[derive(Debug, Clone)]
pub struct MomentTable {
    fd: Arc<FictitiousDomain>,
    n: usize,
    interior: Vec<f64>,
    cut: BTreeMap<MultiIndex, Vec<f64>>,
    fallbacks: usize,
}

impl MomentTable {
    pub fn build(fd: Arc<FictitiousDomain>, n: usize, facet_points: usize) -> Self {
        let kernel = CellKernel::new(n);
        let dim = fd.dim();
        let interior = kernel.full_cell(dim, fd.sigma());
        let m = n.pow(dim as u32);
        let mut cut = BTreeMap::new();
        let mut fallbacks = 0;
        for c in fd.cut_cells() {
            let clip = fd.clipped(c).expect("cut cells carry their clip");
            let mut g = if clip.is_full() {
                interior.clone()
            } else {
                kernel.clipped_cell(clip, facet_points)
            };
            // partition of unity: the entries sum to the clipped measure
            let total: f64 = g.iter().sum();
            if (total - clip.measure).abs() > 1e-9 * fd.sigma().powi(dim as i32) {
                fallbacks += 1;
                g = kernel.clipped_cell_by_area(clip);
            }
            debug_assert_eq!(g.len(), m * m);
            cut.insert(*c, g);
        }
        if fallbacks > 0 {
            warn!("{fallbacks} cut cells fell back to area quadrature for moments");
        }
        Self {
            fd,
            n,
            interior,
            cut,
            fallbacks,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.fd.sigma()
    }

    pub fn dim(&self) -> usize {
        self.fd.dim()
    }

    pub fn domain(&self) -> &Arc<FictitiousDomain> {
        &self.fd
    }

    /// Number of cut cells whose edge-flux moments failed the measure check.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// Local Gram matrix of a cell of the fictitious domain.
    pub fn cell_gram(&self, cell: &MultiIndex) -> Option<&[f64]> {
        match self.fd.class_of(cell) {
            CellClass::Interior => Some(&self.interior),
            CellClass::Cut => self.cut.get(cell).map(Vec::as_slice),
            CellClass::Outside => None,
        }
    }

    pub fn entry(&self, lam: &MultiIndex, mu: &MultiIndex) -> f64 {
        self.entry_flagged(lam, mu).0
    }

    pub fn entry_flagged(&self, lam: &MultiIndex, mu: &MultiIndex) -> (f64, MomentKind) {
        let n = self.n as i64;
        let dim = self.dim();
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for k in 0..dim {
            lo[k] = lam[k].max(mu[k]);
            hi[k] = lam[k].min(mu[k]) + n;
        }
        let m = self.n.pow(dim as u32);
        let mut s = 0.0;
        let mut kind = MomentKind::Interior;
        for c in box_iter(lo, hi, dim) {
            if self.fd.class_of(&c) == CellClass::Cut {
                kind = MomentKind::BoundaryReduced;
            }
            let Some(g) = self.cell_gram(&c) else { continue };
            let mut ja = [0; MAX_DIM];
            let mut jb = [0; MAX_DIM];
            for k in 0..dim {
                ja[k] = c[k] - lam[k];
                jb[k] = c[k] - mu[k];
            }
            s += g[local_pos(&ja, self.n, dim) * m + local_pos(&jb, self.n, dim)];
        }
        (s, kind)
    }

    /// All `μ` whose support shares a cell of the fictitious domain with `b_λ`,
    /// with their moments, in lexicographic order of `μ`.
    pub fn row(&self, lam: &MultiIndex) -> Vec<(MultiIndex, f64)> {
        let n = self.n as i64;
        let dim = self.dim();
        let m = self.n.pow(dim as u32);
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        let mut hi = *lam;
        for h in hi.iter_mut().take(dim) {
            *h += n;
        }
        let offs = local_offsets(self.n, dim);
        for c in box_iter(*lam, hi, dim) {
            let Some(g) = self.cell_gram(&c) else { continue };
            let mut ja = [0; MAX_DIM];
            for k in 0..dim {
                ja[k] = c[k] - lam[k];
            }
            let row = local_pos(&ja, self.n, dim) * m;
            for (b, jb) in offs.iter().enumerate() {
                let mut mu = c;
                for k in 0..dim {
                    mu[k] -= jb[k];
                }
                *acc.entry(mu).or_insert(0.0) += g[row + b];
            }
        }
        acc.into_iter().collect()
    }

    /// `∫_Ω b_λ`, the row sum of the moment matrix.
    pub fn basis_integral(&self, lam: &MultiIndex) -> f64 {
        self.row(lam).iter().map(|(_, v)| v).sum()
    }

    /// Cache key: mesh hash, spacing and order.
    pub fn key(&self) -> (String, f64, usize) {
        (self.fd.mesh().content_hash(), self.sigma(), self.n)
    }

    /// Binary cache with a version header; only cut-cell matrices are stored.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), MomentError> {
        let (hash, h, n) = self.key();
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(hash.as_bytes())?;
        w.write_all(&h.to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.cut.len() as u64).to_le_bytes())?;
        for (c, g) in &self.cut {
            for k in 0..self.dim() {
                w.write_all(&c[k].to_le_bytes())?;
            }
            for v in g {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Loads a cache written by [`Self::save`] for the same mesh, spacing and order.
    pub fn load<R: Read>(mut r: R, fd: Arc<FictitiousDomain>, n: usize) -> Result<Self, MomentError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(MomentError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CACHE_VERSION {
            return Err(MomentError::Format(format!("version {version}")));
        }
        let mut hash = [0u8; 64];
        r.read_exact(&mut hash)?;
        r.read_exact(&mut b8)?;
        let h = f64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let file_n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        let expect = fd.mesh().content_hash();
        if hash != expect.as_bytes() || h != fd.sigma() || file_n != n || dim != fd.dim() {
            return Err(MomentError::KeyMismatch(format!(
                "cache has h={h} n={file_n}, wanted h={} n={n}",
                fd.sigma()
            )));
        }
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let m = n.pow(dim as u32);
        let mut cut = BTreeMap::new();
        for _ in 0..count {
            let mut c = [0; MAX_DIM];
            for v in c.iter_mut().take(dim) {
                r.read_exact(&mut b8)?;
                *v = i64::from_le_bytes(b8);
            }
            let mut g = Vec::with_capacity(m * m);
            for _ in 0..m * m {
                r.read_exact(&mut b8)?;
                g.push(f64::from_le_bytes(b8));
            }
            cut.insert(c, g);
        }
        if cut.len() != fd.cut_cells().len() || fd.cut_cells().iter().any(|c| !cut.contains_key(c)) {
            return Err(MomentError::KeyMismatch("cut cell set differs".into()));
        }
        let interior = CellKernel::new(n).full_cell(dim, fd.sigma());
        Ok(Self {
            fd,
            n,
            interior,
            cut,
            fallbacks: 0,
        })
    }

    /// Loads `dir/moments_<hash>_<h>_<n>.bin` when present, otherwise builds
    /// the table and writes it there.
    pub fn cached(dir: &Path, fd: Arc<FictitiousDomain>, n: usize, facet_points: usize) -> Result<Self, MomentError> {
        let (hash, h, _) = (fd.mesh().content_hash(), fd.sigma(), n);
        let path = dir.join(format!("moments_{}_{h:e}_{n}.bin", &hash[..16]));
        if let Ok(f) = std::fs::File::open(&path) {
            match Self::load(std::io::BufReader::new(f), fd.clone(), n) {
                Ok(t) => return Ok(t),
                Err(e) => warn!("ignoring moment cache {}: {e}", path.display()),
            }
        }
        let t = Self::build(fd, n, facet_points);
        std::fs::create_dir_all(dir)?;
        t.save(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        Ok(t)
    }
}

const CACHE_MAGIC: &[u8; 4] = b"PMMT";
const CACHE_VERSION: u32 = 1;
