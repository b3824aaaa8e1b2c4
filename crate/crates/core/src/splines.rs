//! Cardinal B-splines and tensor-product spline fields on a uniform grid.
//!
//! `b^n` is the order-`n` cardinal B-spline (degree `n - 1`) supported on
//! `[0, n]`. The scaled basis function with index `λ` is
//! `b_λ(x) = Π_k b^n(x_k / σ - λ_k)`, supported on `Π_k [λ_k σ, (λ_k + n) σ]`.

use std::io::{Read, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::dense::Lu;
use crate::gauss::GaussRule;
use crate::grid::FictitiousDomain;
use crate::{box_iter, MultiIndex, MAX_DIM};

/// Largest supported spline order.
pub const MAX_ORDER: usize = 10;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("spline order must be in 1..={MAX_ORDER}, got {0}")]
    BadOrder(usize),
    #[error("incompatible spaces: {0}")]
    Mismatch(String),
    #[error("malformed spline file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Values `d^r/dx^r b^n(t + j)` for `j = 0..n`, with `t ∈ [0, 1]`; `t = 1`
/// gives the limit from the left.
///
/// Derivatives of order `r >= n` are written as zeros.
pub fn stencil(n: usize, t: f64, r: usize, out: &mut [f64]) {
    debug_assert!((1..=MAX_ORDER).contains(&n));
    out[..n].fill(0.0);
    if r >= n {
        return;
    }
    let p = n - r;
    let mut v = [0.0; MAX_ORDER];
    v[0] = 1.0;
    for q in 1..p {
        // b^{q+1}(t+m) = ((t+m) b^q(t+m) + (q+1-t-m) b^q(t+m-1)) / q
        for m in (0..=q).rev() {
            let cur = if m < q { v[m] } else { 0.0 };
            let prev = if m > 0 { v[m - 1] } else { 0.0 };
            let x = t + m as f64;
            v[m] = (x * cur + (q as f64 + 1.0 - x) * prev) / q as f64;
        }
    }
    for (j, o) in out.iter_mut().enumerate().take(n) {
        let mut s = 0.0;
        for k in 0..=r.min(j) {
            if j - k < p {
                let c = binomial(r, k);
                s += if k % 2 == 0 { c } else { -c } * v[j - k];
            }
        }
        *o = s;
    }
}

/// `d^r/dx^r b^n(x)`, right-continuous at the knots.
///
/// Orders `r >= n` would contain Dirac parts; see [`bspline_flagged`].
pub fn bspline(n: usize, x: f64, r: usize) -> f64 {
    bspline_flagged(n, x, r).0
}

/// As [`bspline`], also reporting whether `r >= n` forced a zero result.
pub fn bspline_flagged(n: usize, x: f64, r: usize) -> (f64, bool) {
    assert!((1..=MAX_ORDER).contains(&n), "order {n} out of range");
    if r >= n {
        return (0.0, true);
    }
    if !(x >= 0.0 && x < n as f64) {
        return (0.0, false);
    }
    let j = x.floor();
    let mut out = [0.0; MAX_ORDER];
    stencil(n, x - j, r, &mut out);
    (out[j as usize], false)
}

/// `∫_{-∞}^x b^n`.
pub fn bspline_antiderivative(n: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= n as f64 {
        return 1.0;
    }
    // ∫ b^n up to x equals Σ_j b^{n+1}(x - j)
    let mut s = 0.0;
    let mut j = 0.0;
    while j <= x {
        s += bspline(n + 1, x - j, 0);
        j += 1.0;
    }
    s
}

/// Monomial coefficients (in `t`, ascending) of `d^r/dt^r b^n(t + j)` on
/// `t ∈ [0, 1]`, for `j = 0..n`.
pub fn local_polynomials(n: usize, r: usize) -> Vec<Vec<f64>> {
    let mut v: Vec<Vec<f64>> = vec![vec![1.0]];
    for q in 1..n {
        let mut next = Vec::with_capacity(q + 1);
        for m in 0..=q {
            let mut poly = vec![0.0; q + 1];
            let qf = q as f64;
            if m < q {
                // (t + m) * v[m]
                for (i, c) in v[m].iter().enumerate() {
                    poly[i + 1] += c / qf;
                    poly[i] += m as f64 * c / qf;
                }
            }
            if m > 0 {
                // (q + 1 - m - t) * v[m-1]
                for (i, c) in v[m - 1].iter().enumerate() {
                    poly[i] += (qf + 1.0 - m as f64) * c / qf;
                    poly[i + 1] -= c / qf;
                }
            }
            next.push(poly);
        }
        v = next;
    }
    for _ in 0..r {
        for p in v.iter_mut() {
            let d: Vec<f64> = p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
            *p = if d.is_empty() { vec![0.0] } else { d };
        }
    }
    v
}

/// Evaluates a monomial-coefficient polynomial by Horner's rule.
pub fn horner(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Spline space over a set of grid cells: every `λ` whose support contains at
/// least one of the cells, densely numbered in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    n: usize,
    sigma: f64,
    dim: usize,
    cell_lo: MultiIndex,
    cell_hi: MultiIndex,
    lam_lo: MultiIndex,
    lam_hi: MultiIndex,
    ids: Vec<u32>,
    indices: Vec<MultiIndex>,
    cells: Vec<MultiIndex>,
}

const NO_ID: u32 = u32::MAX;

impl SplineSpace {
    /// Space on the cells of the fictitious domain.
    pub fn on_domain(fd: &FictitiousDomain, n: usize) -> Result<Self, SplineError> {
        let g = fd.grid();
        Self::on_cells(n, g.sigma, g.dim, g.lo, g.hi, fd.active_cells().to_vec())
    }

    /// Space on every cell of the box `lo <= i < hi`.
    pub fn full_box(n: usize, sigma: f64, dim: usize, lo: MultiIndex, hi: MultiIndex) -> Result<Self, SplineError> {
        Self::on_cells(n, sigma, dim, lo, hi, box_iter(lo, hi, dim).collect())
    }

    /// Space on `cells`, which must lie within the cell window `[lo, hi)`.
    pub fn on_cells(
        n: usize,
        sigma: f64,
        dim: usize,
        cell_lo: MultiIndex,
        cell_hi: MultiIndex,
        mut cells: Vec<MultiIndex>,
    ) -> Result<Self, SplineError> {
        if !(1..=MAX_ORDER).contains(&n) {
            return Err(SplineError::BadOrder(n));
        }
        cells.sort();
        cells.dedup();
        let mut lam_lo = [0; MAX_DIM];
        let mut lam_hi = [0; MAX_DIM];
        for k in 0..dim {
            lam_lo[k] = cell_lo[k] - n as i64 + 1;
            lam_hi[k] = cell_hi[k];
        }
        let total = window_len(&lam_lo, &lam_hi, dim);
        let mut mark = vec![false; total];
        let mut off_hi = [1; MAX_DIM];
        off_hi[..dim].fill(n as i64);
        for c in &cells {
            for j in box_iter([0; MAX_DIM], off_hi, dim) {
                let mut l = *c;
                for k in 0..dim {
                    l[k] -= j[k];
                }
                mark[window_pos(&l, &lam_lo, &lam_hi, dim).expect("cell inside window")] = true;
            }
        }
        let mut ids = vec![NO_ID; total];
        let mut indices = Vec::new();
        for (pos, l) in box_iter(lam_lo, lam_hi, dim).enumerate() {
            if mark[pos] {
                ids[pos] = indices.len() as u32;
                indices.push(l);
            }
        }
        Ok(Self {
            n,
            sigma,
            dim,
            cell_lo,
            cell_hi,
            lam_lo,
            lam_hi,
            ids,
            indices,
            cells,
        })
    }

    /// Space with exactly the given indices; its cells are those whose full
    /// stencil is present.
    pub fn from_indices(
        n: usize,
        sigma: f64,
        dim: usize,
        lam_lo: MultiIndex,
        lam_hi: MultiIndex,
        present: &[bool],
    ) -> Result<Self, SplineError> {
        if !(1..=MAX_ORDER).contains(&n) {
            return Err(SplineError::BadOrder(n));
        }
        let total = window_len(&lam_lo, &lam_hi, dim);
        if present.len() != total {
            return Err(SplineError::Format("coefficient count does not match window".into()));
        }
        let mut cell_lo = [0; MAX_DIM];
        let mut cell_hi = [0; MAX_DIM];
        for k in 0..dim {
            cell_lo[k] = lam_lo[k] + n as i64 - 1;
            cell_hi[k] = lam_hi[k];
        }
        let mut ids = vec![NO_ID; total];
        let mut indices = Vec::new();
        for (pos, l) in box_iter(lam_lo, lam_hi, dim).enumerate() {
            if present[pos] {
                ids[pos] = indices.len() as u32;
                indices.push(l);
            }
        }
        let mut space = Self {
            n,
            sigma,
            dim,
            cell_lo,
            cell_hi,
            lam_lo,
            lam_hi,
            ids,
            indices,
            cells: Vec::new(),
        };
        let mut off_hi = [1; MAX_DIM];
        off_hi[..dim].fill(n as i64);
        space.cells = box_iter(cell_lo, cell_hi, dim)
            .filter(|c| {
                box_iter([0; MAX_DIM], off_hi, dim).all(|j| {
                    let mut l = *c;
                    for k in 0..dim {
                        l[k] -= j[k];
                    }
                    space.id_of(&l).is_some()
                })
            })
            .collect();
        Ok(space)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, id: usize) -> MultiIndex {
        self.indices[id]
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn id_of(&self, lam: &MultiIndex) -> Option<usize> {
        let pos = window_pos(lam, &self.lam_lo, &self.lam_hi, self.dim)?;
        let id = self.ids[pos];
        (id != NO_ID).then_some(id as usize)
    }

    /// Cells the space was built on, sorted.
    pub fn cells(&self) -> &[MultiIndex] {
        &self.cells
    }

    pub fn cell_window(&self) -> (MultiIndex, MultiIndex) {
        (self.cell_lo, self.cell_hi)
    }

    pub fn lambda_window(&self) -> (MultiIndex, MultiIndex) {
        (self.lam_lo, self.lam_hi)
    }

    /// `[lo, hi)` of the `n^d` cells in the support of `b_λ`.
    pub fn support_cells(&self, lam: &MultiIndex) -> (MultiIndex, MultiIndex) {
        let mut hi = *lam;
        for h in hi.iter_mut().take(self.dim) {
            *h += self.n as i64;
        }
        (*lam, hi)
    }

    /// Basis value `b_λ(x)` (with derivative `alpha`) regardless of membership.
    pub fn basis(&self, lam: &MultiIndex, x: &[f64], alpha: &[usize]) -> f64 {
        let mut v = 1.0;
        for k in 0..self.dim {
            let a = alpha.get(k).copied().unwrap_or(0);
            v *= bspline(self.n, x[k] / self.sigma - lam[k] as f64, a) * self.sigma.powi(-(a as i32));
            if v == 0.0 {
                break;
            }
        }
        v
    }

    /// Per-axis stencils of the cell containing `x`: returns the cell and fills
    /// `st[k][j] = b^n`-derivative values for `λ_k = cell_k - j`.
    pub(crate) fn stencils(&self, x: &[f64], alpha: &[usize], st: &mut [[f64; MAX_ORDER]; MAX_DIM]) -> MultiIndex {
        let mut cell = [0; MAX_DIM];
        for k in 0..self.dim {
            let s = x[k] / self.sigma;
            let c = s.floor();
            cell[k] = c as i64;
            let a = alpha.get(k).copied().unwrap_or(0);
            stencil(self.n, s - c, a, &mut st[k]);
            if a > 0 {
                let scale = self.sigma.powi(-(a as i32));
                st[k][..self.n].iter_mut().for_each(|v| *v *= scale);
            }
        }
        cell
    }

    /// Calls `f(id, b_λ(x))` for every `λ ∈ Λ` active at `x`.
    pub fn for_each_active(&self, x: &[f64], mut f: impl FnMut(usize, f64)) {
        let mut st = [[0.0; MAX_ORDER]; MAX_DIM];
        let cell = self.stencils(x, &[], &mut st);
        self.visit_stencil(&cell, &st, &mut f);
    }

    fn visit_stencil(&self, cell: &MultiIndex, st: &[[f64; MAX_ORDER]; MAX_DIM], f: &mut impl FnMut(usize, f64)) {
        let mut off_hi = [1; MAX_DIM];
        off_hi[..self.dim].fill(self.n as i64);
        for j in box_iter([0; MAX_DIM], off_hi, self.dim) {
            let mut lam = *cell;
            let mut w = 1.0;
            for k in 0..self.dim {
                lam[k] -= j[k];
                w *= st[k][j[k] as usize];
            }
            if let Some(id) = self.id_of(&lam) {
                f(id, w);
            }
        }
    }
}

fn window_len(lo: &MultiIndex, hi: &MultiIndex, dim: usize) -> usize {
    (0..dim).map(|k| (hi[k] - lo[k]).max(0) as usize).product()
}

fn window_pos(i: &MultiIndex, lo: &MultiIndex, hi: &MultiIndex, dim: usize) -> Option<usize> {
    let mut pos = 0;
    for k in 0..dim {
        if i[k] < lo[k] || i[k] >= hi[k] {
            return None;
        }
        pos = pos * (hi[k] - lo[k]) as usize + (i[k] - lo[k]) as usize;
    }
    Some(pos)
}

/// Which norm to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lp {
    One,
    Two,
    Inf,
}

/// Spline with coefficients indexed by the dense numbering of its space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineField {
    space: Arc<SplineSpace>,
    coeffs: Vec<f64>,
}

impl SplineField {
    pub fn new(space: Arc<SplineSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(space.len(), coeffs.len(), "coefficient count");
        Self { space, coeffs }
    }

    pub fn zeros(space: Arc<SplineSpace>) -> Self {
        let n = space.len();
        Self::new(space, vec![0.0; n])
    }

    pub fn constant(space: Arc<SplineSpace>, value: f64) -> Self {
        let n = space.len();
        Self::new(space, vec![value; n])
    }

    pub fn space(&self) -> &Arc<SplineSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of `λ`; zero when `λ ∉ Λ`.
    pub fn coeff(&self, lam: &MultiIndex) -> f64 {
        self.space.id_of(lam).map_or(0.0, |id| self.coeffs[id])
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_deriv(x, &[])
    }

    pub fn eval_deriv(&self, x: &[f64], alpha: &[usize]) -> f64 {
        self.eval_flagged(x, alpha).0
    }

    /// Value and an in-window flag; points outside the cell window give `(0, false)`.
    pub fn eval_flagged(&self, x: &[f64], alpha: &[usize]) -> (f64, bool) {
        let sp = &*self.space;
        let (lo, hi) = sp.cell_window();
        let mut st = [[0.0; MAX_ORDER]; MAX_DIM];
        let cell = sp.stencils(x, alpha, &mut st);
        if (0..sp.dim).any(|k| cell[k] < lo[k] || cell[k] >= hi[k]) {
            return (0.0, false);
        }
        let mut s = 0.0;
        sp.visit_stencil(&cell, &st, &mut |id, w| s += self.coeffs[id] * w);
        (s, true)
    }

    /// Evaluation from inside `cell` at local coordinates `t ∈ [0, 1]^d`;
    /// `t = 1` gives the one-sided limit from this cell.
    pub fn eval_in_cell(&self, cell: &MultiIndex, t: &[f64], alpha: &[usize]) -> f64 {
        let sp = &*self.space;
        let mut st = [[0.0; MAX_ORDER]; MAX_DIM];
        for k in 0..sp.dim {
            let a = alpha.get(k).copied().unwrap_or(0);
            stencil(sp.n, t[k], a, &mut st[k]);
            let scale = sp.sigma.powi(-(a as i32));
            st[k][..sp.n].iter_mut().for_each(|v| *v *= scale);
        }
        let mut s = 0.0;
        sp.visit_stencil(cell, &st, &mut |id, w| s += self.coeffs[id] * w);
        s
    }

    /// Local projection onto the space. Coefficient `λ` only sees `f` on the
    /// support of `b_λ`.
    pub fn quasi_interpolate(space: Arc<SplineSpace>, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = space.n;
        let dim = space.dim;
        let sigma = space.sigma;
        let dual = dual_nodes(n);
        let m = dual.len();
        let mut coeffs = Vec::with_capacity(space.len());
        let mut hi = [1; MAX_DIM];
        hi[..dim].fill(m as i64);
        let mut x = [0.0; MAX_DIM];
        for lam in space.indices() {
            let mut c = 0.0;
            for q in box_iter([0; MAX_DIM], hi, dim) {
                let mut w = 1.0;
                for k in 0..dim {
                    let (t, wk) = dual[q[k] as usize];
                    x[k] = (lam[k] as f64 + t) * sigma;
                    w *= wk;
                }
                c += w * f(&x[..dim]);
            }
            coeffs.push(c);
        }
        Self::new(space, coeffs)
    }

    /// `W^{l,p}` norm over `cells`: all derivatives with `|α| <= l`.
    pub fn norm(&self, cells: &[MultiIndex], p: Lp, l: usize) -> f64 {
        self.sobolev(cells, p, l, false)
    }

    /// `W^{l,p}` seminorm over `cells`: only derivatives with `|α| = l`.
    pub fn seminorm(&self, cells: &[MultiIndex], p: Lp, l: usize) -> f64 {
        self.sobolev(cells, p, l, true)
    }

    fn sobolev(&self, cells: &[MultiIndex], p: Lp, l: usize, only_top: bool) -> f64 {
        let sp = &*self.space;
        let dim = sp.dim;
        let g = GaussRule::new(sp.n);
        let mut alphas = Vec::new();
        let mut ahi = [1; MAX_DIM];
        ahi[..dim].fill(l as i64 + 1);
        for a in box_iter([0; MAX_DIM], ahi, dim) {
            let order: i64 = a[..dim].iter().sum();
            if order as usize <= l && (!only_top || order as usize == l) {
                alphas.push(a.map(|v| v as usize));
            }
        }
        // local points: Gauss nodes, plus corners for the max norm
        let mut pts: Vec<f64> = g.nodes.clone();
        let mut wts: Vec<f64> = g.weights.clone();
        if p == Lp::Inf {
            pts.extend([0.0, 1.0]);
            wts.extend([0.0, 0.0]);
        }
        let q = pts.len();
        let mut qhi = [1; MAX_DIM];
        qhi[..dim].fill(q as i64);
        let vol = sp.sigma.powi(dim as i32);
        let mut acc = 0.0f64;
        let mut t = [0.0; MAX_DIM];
        for cell in cells {
            for idx in box_iter([0; MAX_DIM], qhi, dim) {
                let mut w = vol;
                for k in 0..dim {
                    t[k] = pts[idx[k] as usize];
                    w *= wts[idx[k] as usize];
                }
                for a in &alphas {
                    let v = self.eval_in_cell(cell, &t[..dim], &a[..dim]).abs();
                    match p {
                        Lp::One => acc += w * v,
                        Lp::Two => acc += w * v * v,
                        Lp::Inf => acc = acc.max(v),
                    }
                }
            }
        }
        match p {
            Lp::One | Lp::Inf => acc,
            Lp::Two => acc.sqrt(),
        }
    }

    /// Exact re-expansion on the grid `σ / 2^levels`, restricted to `target`.
    pub fn refine(&self, levels: u32, target: Arc<SplineSpace>) -> Result<Self, SplineError> {
        let sp = &*self.space;
        let ratio = sp.sigma / target.sigma;
        if target.n != sp.n || target.dim != sp.dim || (ratio - 2f64.powi(levels as i32)).abs() > 1e-9 * ratio {
            return Err(SplineError::Mismatch(format!(
                "cannot refine order {} at sigma {} by {levels} levels into order {} at sigma {}",
                sp.n, sp.sigma, target.n, target.sigma
            )));
        }
        let dim = sp.dim;
        let n = sp.n;
        let (mut lo, hi) = sp.lambda_window();
        let mut shape = [1usize; MAX_DIM];
        for k in 0..dim {
            shape[k] = (hi[k] - lo[k]).max(0) as usize;
        }
        let mut data: Vec<f64> = box_iter(lo, hi, dim).map(|l| self.coeff(&l)).collect();
        let mask: Vec<f64> = (0..=n).map(|k| binomial(n, k) * 2f64.powi(1 - n as i32)).collect();
        for _ in 0..levels {
            for axis in 0..dim {
                let old_len = shape[axis];
                if old_len == 0 {
                    break;
                }
                let new_len = 2 * (old_len - 1) + n + 1;
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..dim].iter().product();
                let mut next = vec![0.0; outer * new_len * inner];
                for o in 0..outer {
                    for i in 0..old_len {
                        let src = (o * old_len + i) * inner;
                        for (k, &mk) in mask.iter().enumerate() {
                            let dst = (o * new_len + 2 * i + k) * inner;
                            for r in 0..inner {
                                next[dst + r] += mk * data[src + r];
                            }
                        }
                    }
                }
                data = next;
                shape[axis] = new_len;
                lo[axis] *= 2;
            }
        }
        let mut whi = [0; MAX_DIM];
        for k in 0..dim {
            whi[k] = lo[k] + shape[k] as i64;
        }
        let coeffs = target
            .indices()
            .iter()
            .map(|l| window_pos(l, &lo, &whi, dim).map_or(0.0, |p| data[p]))
            .collect();
        Ok(Self::new(target, coeffs))
    }

    /// Little-endian binary dump: header then the dense coefficient window,
    /// `NaN` where `λ ∉ Λ`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), SplineError> {
        let sp = &*self.space;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(sp.dim as u32).to_le_bytes())?;
        w.write_all(&(sp.n as u32).to_le_bytes())?;
        w.write_all(&sp.sigma.to_le_bytes())?;
        for k in 0..sp.dim {
            w.write_all(&sp.lam_lo[k].to_le_bytes())?;
        }
        for k in 0..sp.dim {
            w.write_all(&sp.lam_hi[k].to_le_bytes())?;
        }
        for l in box_iter(sp.lam_lo, sp.lam_hi, sp.dim) {
            let v = sp.id_of(&l).map_or(f64::NAN, |id| self.coeffs[id]);
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SplineError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SplineError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(SplineError::Format(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(SplineError::Format(format!("dimension {dim}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let sigma = f64::from_le_bytes(b8);
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for v in lo.iter_mut().take(dim) {
            r.read_exact(&mut b8)?;
            *v = i64::from_le_bytes(b8);
        }
        for v in hi.iter_mut().take(dim) {
            r.read_exact(&mut b8)?;
            *v = i64::from_le_bytes(b8);
        }
        let total = window_len(&lo, &hi, dim);
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let present: Vec<bool> = values.iter().map(|v| !v.is_nan()).collect();
        let space = Arc::new(SplineSpace::from_indices(n, sigma, dim, lo, hi, &present)?);
        let coeffs = values.into_iter().filter(|v| !v.is_nan()).collect();
        Ok(Self::new(space, coeffs))
    }

    /// CSV `x1[,x2],value` at the given points.
    pub fn write_samples_csv<W: Write>(&self, mut w: W, points: &[Vec<f64>]) -> std::io::Result<()> {
        let dim = self.space.dim;
        let header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for p in points {
            let coords: Vec<String> = p[..dim].iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{},{:.17e}", coords.join(","), self.eval(p))?;
        }
        Ok(())
    }
}

const MAGIC: &[u8; 4] = b"PMSF";
const FORMAT_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Tensor factor of the dual functional: nodes `t ∈ [0, n]` and weights
/// `w · ψ(t)` where `ψ` is the dual of the central basis function under the
/// `L²([0, n])` pairing with all `2n - 1` B-splines overlapping the box.
fn dual_nodes(n: usize) -> Vec<(f64, f64)> {
    let g = GaussRule::new(n + 1);
    let m = 2 * n - 1;
    let shift = n as f64 - 1.0;
    let mut gram = vec![0.0; m * m];
    let mut nodes = Vec::new();
    for cell in 0..n {
        for (t, w) in g.on_interval(cell as f64, cell as f64 + 1.0) {
            let vals: Vec<f64> = (0..m).map(|o| bspline(n, t - (o as f64 - shift), 0)).collect();
            for a in 0..m {
                for b in 0..m {
                    gram[a * m + b] += w * vals[a] * vals[b];
                }
            }
            nodes.push((t, w, vals));
        }
    }
    let lu = Lu::factor(&gram, m, 1e-14).expect("local Gram matrix is SPD");
    let mut e = vec![0.0; m];
    e[n - 1] = 1.0;
    let a = lu.solve_refined(&gram, &e, 2);
    nodes
        .into_iter()
        .map(|(t, w, vals)| (t, w * vals.iter().zip(&a).map(|(v, c)| v * c).sum::<f64>()))
        .collect()
}
