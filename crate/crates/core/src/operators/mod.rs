//! The restricted mass operator `A`, the ghost penalty `J` and the stabilized
//! operator `A_ε = A + εJ`.
//!
//! `A[λ,μ] = ∫_Ω b_λ b_μ` comes straight from the moment table. `J` sums, over
//! the ghost faces, `σ^{2n-1} ∫_F [∂^{n-1} b_λ] [∂^{n-1} b_μ]` where `[·]` is
//! the jump across the face in its normal direction.

pub mod cg;
pub mod csr;

use std::sync::Arc;

use thiserror::Error;

use crate::gauss::{GaussRule, TriangleRule};
use crate::grid::{CellClass, FictitiousDomain};
use crate::moments::{local_offsets, CellKernel, MomentTable};
use crate::splines::{SplineField, SplineSpace};
use crate::{box_iter, MultiIndex, MAX_DIM};

pub use cg::{conjugate_gradient, SolveReport};
pub use csr::CsrMatrix;

/// Default relative residual for CG solves.
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("conjugate gradients stalled after {} iterations at relative residual {:.3e}", .0.iterations, .0.residual)]
    NotConverged(SolveReport),
    #[error("moment table is on a different grid or order than the spline space")]
    Mismatch,
    #[error("stabilization parameter must be nonnegative, got {0}")]
    BadEpsilon(f64),
}

/// `A + εJ` over a spline space on a fictitious domain.
#[derive(Debug, Clone)]
pub struct StabilizedOperator {
    space: Arc<SplineSpace>,
    fd: Arc<FictitiousDomain>,
    a: CsrMatrix,
    j: CsrMatrix,
    eps: f64,
    combined: CsrMatrix,
}

impl StabilizedOperator {
    pub fn new(space: Arc<SplineSpace>, table: &MomentTable, eps: f64) -> Result<Self, OperatorError> {
        if !(eps >= 0.0) {
            return Err(OperatorError::BadEpsilon(eps));
        }
        if table.n() != space.n() || table.dim() != space.dim() || (table.sigma() - space.sigma()).abs() > 1e-14 * space.sigma() {
            return Err(OperatorError::Mismatch);
        }
        let fd = table.domain().clone();
        let a = assemble_a(&space, table);
        let j = assemble_j(&space, &fd);
        let combined = a.add_scaled(&j, eps);
        Ok(Self {
            space,
            fd,
            a,
            j,
            eps,
            combined,
        })
    }

    /// Same matrices with another `ε`.
    pub fn with_eps(&self, eps: f64) -> Result<Self, OperatorError> {
        if !(eps >= 0.0) {
            return Err(OperatorError::BadEpsilon(eps));
        }
        Ok(Self {
            combined: self.a.add_scaled(&self.j, eps),
            eps,
            ..self.clone()
        })
    }

    pub fn space(&self) -> &Arc<SplineSpace> {
        &self.space
    }

    pub fn domain(&self) -> &Arc<FictitiousDomain> {
        &self.fd
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn j(&self) -> &CsrMatrix {
        &self.j
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.combined
    }

    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        self.combined.apply(c)
    }

    /// Solves `A_ε c = rhs` with Jacobi-preconditioned CG.
    pub fn solve(&self, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveReport), OperatorError> {
        let (x, rep) = conjugate_gradient(&self.combined, rhs, tol, max_iter);
        if rep.converged {
            Ok((x, rep))
        } else {
            Err(OperatorError::NotConverged(rep))
        }
    }

    /// Solve with the default tolerance and `10 N` iterations.
    pub fn solve_default(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport), OperatorError> {
        self.solve(rhs, DEFAULT_TOL, 10 * self.space.len().max(1))
    }

    /// `∫_Ω u b_λ` for every `λ`. The rules integrate `Q_{2n-2}` exactly on
    /// cut cells, so data in `Q_{n-1}` is reproduced without quadrature error.
    pub fn load_vector(&self, u: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut rhs = vec![0.0; self.space.len()];
        let (n, d) = (self.space.n(), self.space.dim());
        let q = (n + 1).max(d * (n - 1) + 1);
        domain_quadrature(&self.fd, q, |x, w| {
            let v = w * u(x);
            if v != 0.0 {
                self.space.for_each_active(x, |id, b| rhs[id] += v * b);
            }
        });
        rhs
    }

    /// `A_ε^{-1}` applied to the functional `v ↦ ∫_Ω u v`.
    pub fn approximate_extension(&self, u: impl Fn(&[f64]) -> f64) -> Result<(SplineField, SolveReport), OperatorError> {
        let rhs = self.load_vector(u);
        let (c, rep) = self.solve_default(&rhs)?;
        Ok((SplineField::new(self.space.clone(), c), rep))
    }

    /// Extreme eigenvalues of `σ^{-d} A_ε` and their ratio.
    ///
    /// `λ_min` comes from inverse iteration with CG solves; a failed solve gives
    /// an infinite condition number.
    pub fn estimate_condition(&self) -> ConditionEstimate {
        let scale = self.space.sigma().powi(-(self.space.dim() as i32));
        let m = &self.combined;
        let n = m.dim();
        if n == 0 {
            return ConditionEstimate {
                lambda_max: 0.0,
                lambda_min: 0.0,
                cond: f64::INFINITY,
                inverse_iterations: 0,
            };
        }
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.7548776662).fract()).collect();
        let lambda_max = power_iteration(m, &start, 1e-6, 2000);
        let mut x = normalized(&start);
        let mut mu = f64::INFINITY;
        let mut its = 0;
        let mut failed = false;
        for _ in 0..300 {
            its += 1;
            let (y, rep) = conjugate_gradient(m, &x, 1e-10, 10 * n);
            if !rep.converged {
                failed = true;
                break;
            }
            let ny = norm(&y);
            if !(ny > 0.0) || !ny.is_finite() {
                failed = true;
                break;
            }
            // Rayleigh quotient of the inverse
            let rq = dot(&x, &y);
            let next = 1.0 / rq;
            x = y.iter().map(|v| v / ny).collect();
            let done = (next - mu).abs() <= 1e-6 * next.abs();
            mu = next;
            if done {
                break;
            }
        }
        let lambda_min = if failed { 0.0 } else { mu };
        let cond = if failed || !(lambda_min > 0.0) {
            f64::INFINITY
        } else {
            lambda_max / lambda_min
        };
        ConditionEstimate {
            lambda_max: lambda_max * scale,
            lambda_min: lambda_min * scale,
            cond,
            inverse_iterations: its,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionEstimate {
    /// Largest eigenvalue of `σ^{-d} A_ε`.
    pub lambda_max: f64,
    /// Smallest eigenvalue of `σ^{-d} A_ε`, zero when inverse iteration failed.
    pub lambda_min: f64,
    /// Spectral condition number, `∞` when inverse iteration failed.
    pub cond: f64,
    pub inverse_iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalized(a: &[f64]) -> Vec<f64> {
    let s = norm(a);
    a.iter().map(|v| v / s).collect()
}

fn power_iteration(m: &CsrMatrix, start: &[f64], tol: f64, max_iter: usize) -> f64 {
    let mut x = normalized(start);
    let mut y = vec![0.0; x.len()];
    let mut lam = 0.0;
    for _ in 0..max_iter {
        m.matvec(&x, &mut y);
        let next = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        x.iter_mut().zip(&y).for_each(|(a, b)| *a = b / ny);
        if (next - lam).abs() <= tol * next.abs() {
            return next;
        }
        lam = next;
    }
    lam
}

/// Scatters the local cell Gram matrices of the moment table.
pub fn assemble_a(space: &SplineSpace, table: &MomentTable) -> CsrMatrix {
    let n = space.n();
    let dim = space.dim();
    let offs = local_offsets(n, dim);
    let m = offs.len();
    let fd = table.domain();
    let mut t = Vec::new();
    let mut ids = vec![None; m];
    for cell in fd.active_cells() {
        let Some(g) = table.cell_gram(cell) else { continue };
        for (a, j) in offs.iter().enumerate() {
            let mut lam = *cell;
            for k in 0..dim {
                lam[k] -= j[k];
            }
            ids[a] = space.id_of(&lam);
        }
        for a in 0..m {
            let Some(ia) = ids[a] else { continue };
            for b in 0..m {
                let Some(ib) = ids[b] else { continue };
                let v = g[a * m + b];
                if v != 0.0 {
                    t.push((ia as u32, ib as u32, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.len(), t)
}

/// Binomial coefficient as a float.
fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Ghost penalty over the ghost faces of the fictitious domain.
///
/// On the cell with local offset `j` along the normal axis, the `(n-1)`-st
/// derivative of `b^n` is `(-1)^j C(n-1, j)`, so the jump across a face at
/// local knot `k` is `(-1)^k C(n, k)` (times `σ^{1-n}`). Tangentially the face
/// integral is a product of 1D cell Gram entries.
pub fn assemble_j(space: &SplineSpace, fd: &FictitiousDomain) -> CsrMatrix {
    let n = space.n();
    let dim = space.dim();
    let sigma = space.sigma();
    // σ^{2n-1} σ^{-2(n-1)} σ^{d-1}
    let scale = sigma.powi(dim as i32);
    let jump: Vec<f64> = (0..=n)
        .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * binomial(n, k))
        .collect();
    let g1: Vec<f64> = (0..n * n).map(|i| gram_1d_local(n, i / n, i % n)).collect();
    let mut t = Vec::new();
    let mut members: Vec<(usize, MultiIndex)> = Vec::new();
    for face in fd.ghost_faces() {
        let a = face.axis;
        let upper = face.upper();
        // λ active on either side: normal offsets k = upper_a - λ_a in 0..=n,
        // tangential offsets j = lower_k - λ_k in 0..n
        let mut lo = [0; MAX_DIM];
        let mut hi = [1; MAX_DIM];
        for k in 0..dim {
            if k == a {
                lo[k] = 0;
                hi[k] = n as i64 + 1;
            } else {
                lo[k] = 0;
                hi[k] = n as i64;
            }
        }
        members.clear();
        for off in box_iter(lo, hi, dim) {
            let mut lam = face.lower;
            lam[a] = upper[a] - off[a];
            for k in 0..dim {
                if k != a {
                    lam[k] = face.lower[k] - off[k];
                }
            }
            if let Some(id) = space.id_of(&lam) {
                members.push((id, off));
            }
        }
        for &(ia, oa) in &members {
            for &(ib, ob) in &members {
                let mut v = scale * jump[oa[a] as usize] * jump[ob[a] as usize];
                for k in 0..dim {
                    if k != a {
                        v *= g1[oa[k] as usize * n + ob[k] as usize];
                    }
                }
                if v != 0.0 {
                    t.push((ia as u32, ib as u32, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.len(), t)
}

/// `∫_0^1 b^n(t + a) b^n(t + b) dt`.
fn gram_1d_local(n: usize, a: usize, b: usize) -> f64 {
    let g = GaussRule::new(n);
    g.nodes
        .iter()
        .zip(&g.weights)
        .map(|(&t, &w)| w * crate::splines::bspline(n, t + a as f64, 0) * crate::splines::bspline(n, t + b as f64, 0))
        .sum()
}

/// Full-cell Gram matrix of the space: integrals over every cell of the space.
pub fn full_gram(space: &SplineSpace) -> CsrMatrix {
    let n = space.n();
    let dim = space.dim();
    let offs = local_offsets(n, dim);
    let m = offs.len();
    let kernel = CellKernel::new(n);
    let g = kernel.full_cell(dim, space.sigma());
    let mut t = Vec::new();
    for cell in space.cells() {
        let ids: Vec<Option<usize>> = offs
            .iter()
            .map(|j| {
                let mut lam = *cell;
                for k in 0..dim {
                    lam[k] -= j[k];
                }
                space.id_of(&lam)
            })
            .collect();
        for a in 0..m {
            let Some(ia) = ids[a] else { continue };
            for b in 0..m {
                if let Some(ib) = ids[b] {
                    t.push((ia as u32, ib as u32, g[a * m + b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.len(), t)
}

/// The spline `f_σ` with `∫_{Ω_σ} f_σ b_λ = f_λ` for every `λ`.
pub fn riesz_representative(space: Arc<SplineSpace>, functional: &[f64]) -> Result<SplineField, OperatorError> {
    let g = full_gram(&space);
    let (c, rep) = conjugate_gradient(&g, functional, DEFAULT_TOL, 10 * space.len().max(1));
    if !rep.converged {
        return Err(OperatorError::NotConverged(rep));
    }
    Ok(SplineField::new(space, c))
}

/// Calls `f(x, w)` for the nodes of a rule integrating over `Ω` with `q` Gauss
/// points per direction: tensor rules on interior cells, collapsed rules on
/// the fan triangles of cut cells. Node weights on nonconvex cuts may be
/// negative but the sum stays exact for polynomials.
pub fn domain_quadrature(fd: &FictitiousDomain, q: usize, mut f: impl FnMut(&[f64], f64)) {
    let dim = fd.dim();
    let sigma = fd.sigma();
    let g = GaussRule::new(q);
    let tri = TriangleRule::new(q);
    let vol = sigma.powi(dim as i32);
    let mut qhi = [1; MAX_DIM];
    qhi[..dim].fill(q as i64);
    let mut x = [0.0; MAX_DIM];
    for cell in fd.active_cells() {
        match fd.class_of(cell) {
            CellClass::Interior => {
                let lo = fd.grid().cell_lo(cell);
                for idx in box_iter([0; MAX_DIM], qhi, dim) {
                    let mut w = vol;
                    for k in 0..dim {
                        x[k] = lo[k] + sigma * g.nodes[idx[k] as usize];
                        w *= g.weights[idx[k] as usize];
                    }
                    f(&x[..dim], w);
                }
            }
            CellClass::Cut => {
                let Some(cc) = fd.clipped(cell) else { continue };
                if dim == 1 {
                    if let Some((a, b)) = cc.interval() {
                        for (t, w) in g.on_interval(a, b) {
                            f(&[t], w);
                        }
                    }
                } else {
                    for [a, b, c] in cc.triangles() {
                        for (p, w) in tri.on_triangle(a, b, c) {
                            f(&p, w);
                        }
                    }
                }
            }
            CellClass::Outside => {}
        }
    }
}

/// Calls `f(x, w)` for a tensor Gauss rule on every cell of the space.
pub fn fictitious_quadrature(space: &SplineSpace, q: usize, mut f: impl FnMut(&[f64], f64)) {
    let dim = space.dim();
    let sigma = space.sigma();
    let g = GaussRule::new(q);
    let vol = sigma.powi(dim as i32);
    let mut qhi = [1; MAX_DIM];
    qhi[..dim].fill(q as i64);
    let mut x = [0.0; MAX_DIM];
    for cell in space.cells() {
        for idx in box_iter([0; MAX_DIM], qhi, dim) {
            let mut w = vol;
            for k in 0..dim {
                x[k] = (cell[k] as f64 + g.nodes[idx[k] as usize]) * sigma;
                w *= g.weights[idx[k] as usize];
            }
            f(&x[..dim], w);
        }
    }
}

/// Errors of a spline against a reference function.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    pub l2_domain: f64,
    pub linf_domain: f64,
    pub l2_fictitious: f64,
    pub linf_fictitious: f64,
}

/// `L²` and `L∞` errors on `Ω` and on `Ω_σ`. The max norm is sampled at the
/// quadrature nodes, on `Ω` only at nodes inside the domain.
pub fn error_norms(field: &SplineField, fd: &FictitiousDomain, exact: impl Fn(&[f64]) -> f64) -> ErrorNorms {
    let q = field.space().n() + 1;
    let mut e = ErrorNorms::default();
    let mesh = fd.mesh();
    domain_quadrature(fd, q, |x, w| {
        let d = field.eval(x) - exact(x);
        e.l2_domain += w * d * d;
        if mesh.contains(x) {
            e.linf_domain = e.linf_domain.max(d.abs());
        }
    });
    fictitious_quadrature(field.space(), q, |x, w| {
        let d = field.eval(x) - exact(x);
        e.l2_fictitious += w * d * d;
        e.linf_fictitious = e.linf_fictitious.max(d.abs());
    });
    // corners catch the max norm where Gauss nodes do not reach
    let dim = fd.dim();
    let sigma = fd.sigma();
    let mut chi = [1; MAX_DIM];
    chi[..dim].fill(2);
    let mut x = [0.0; MAX_DIM];
    for cell in field.space().cells() {
        for c in box_iter([0; MAX_DIM], chi, dim) {
            for k in 0..dim {
                // nudge inward so the evaluating cell is this one
                let t = if c[k] == 0 { 1e-12 } else { 1.0 - 1e-12 };
                x[k] = (cell[k] as f64 + t) * sigma;
            }
            let d = (field.eval(&x[..dim]) - exact(&x[..dim])).abs();
            e.linf_fictitious = e.linf_fictitious.max(d);
        }
    }
    e.l2_domain = e.l2_domain.max(0.0).sqrt();
    e.l2_fictitious = e.l2_fictitious.sqrt();
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryMesh;
    use crate::moments::default_facet_points;

    fn setup(mesh: BoundaryMesh, sigma: f64, n: usize) -> (Arc<SplineSpace>, MomentTable) {
        let fd = Arc::new(FictitiousDomain::build(&mesh, sigma, n).unwrap());
        let space = Arc::new(SplineSpace::on_domain(&fd, n).unwrap());
        let table = MomentTable::build(fd, n, default_facet_points(n));
        (space, table)
    }

    #[test]
    fn local_gram_sums_to_one() {
        for n in 2..5 {
            // total of local entries is ∫(Σβ)^2 = 1
            let s: f64 = (0..n).flat_map(|a| (0..n).map(move |b| gram_1d_local(n, a, b))).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn a_integrates_constant_to_measure() {
        let mesh = BoundaryMesh::disk([0.0, 0.0], 1.0, 64).unwrap();
        let (space, table) = setup(mesh.clone(), 0.2, 3);
        let a = assemble_a(&space, &table);
        let one = vec![1.0; space.len()];
        assert!((a.quad_form(&one) - mesh.measure()).abs() < 1e-9);
        assert!(a.asymmetry() < 1e-14);
    }

    #[test]
    fn j_annihilates_polynomials() {
        let mesh = BoundaryMesh::disk([0.1, 0.0], 1.0, 64).unwrap();
        for n in [2, 3, 4] {
            let (space, _) = setup(mesh.clone(), 0.25, n);
            let fd = space_domain(&mesh, 0.25, n);
            let j = assemble_j(&space, &fd);
            assert!(j.asymmetry() < 1e-14);
            // coefficients of x1^(n-1) x2^(n-1) by quasi-interpolation
            let p = SplineField::quasi_interpolate(space.clone(), |x| (x[0] - 0.3).powi(n as i32 - 1) * (1.0 + x[1]).powi(n as i32 - 1));
            let jp = j.apply(p.coeffs());
            let scale = j.diag().iter().fold(0.0f64, |s, v| s.max(*v));
            assert!(jp.iter().all(|v| v.abs() < 1e-12 * scale), "n={n}");
        }
    }

    fn space_domain(mesh: &BoundaryMesh, sigma: f64, n: usize) -> FictitiousDomain {
        FictitiousDomain::build(mesh, sigma, n).unwrap()
    }

    #[test]
    fn one_dim_linear_ghost_face_by_hand() {
        // Ω = (0.05, 0.95), σ = 0.1: cut cells 0 and 9, ghost faces at x = 0.1 and 0.9
        let mesh = BoundaryMesh::interval(0.05, 0.95).unwrap();
        let sigma = 0.1;
        let fd = FictitiousDomain::build(&mesh, sigma, 2).unwrap();
        let space = SplineSpace::on_domain(&fd, 2).unwrap();
        let j = assemble_j(&space, &fd);
        assert_eq!(fd.ghost_faces().len(), 2);
        // hat functions at knots 0, 1, 2 (λ = -1, 0, 1) have slope jumps 1, -2, 1 at x = 0.1
        let d = [1.0, -2.0, 1.0];
        for (a, la) in [-1i64, 0, 1].iter().enumerate() {
            for (b, lb) in [-1i64, 0, 1].iter().enumerate() {
                let ia = space.id_of(&[*la, 0, 0]).unwrap();
                let ib = space.id_of(&[*lb, 0, 0]).unwrap();
                let expect = sigma.powi(3) * (d[a] / sigma) * (d[b] / sigma);
                assert!((j.get(ia, ib) - expect).abs() < 1e-15, "{la} {lb}");
            }
        }
    }

    #[test]
    fn constant_is_reproduced() {
        let mesh = BoundaryMesh::disk([0.0, 0.0], 1.0, 64).unwrap();
        let (space, table) = setup(mesh, 0.2, 3);
        let op = StabilizedOperator::new(space.clone(), &table, 1.0).unwrap();
        let (f, rep) = op.approximate_extension(|_| 1.0).unwrap();
        assert!(rep.converged);
        assert!(f.coeffs().iter().all(|c| (c - 1.0).abs() < 1e-8));
    }

    #[test]
    fn known_coefficients_are_recovered() {
        let mesh = BoundaryMesh::disk([0.0, 0.0], 1.0, 32).unwrap();
        let (space, table) = setup(mesh, 0.25, 3);
        let op = StabilizedOperator::new(space.clone(), &table, 1.0).unwrap();
        let c: Vec<f64> = (0..space.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let rhs = op.apply(&c);
        let (x, _) = op.solve_default(&rhs).unwrap();
        assert!(x.iter().zip(&c).all(|(u, v)| (u - v).abs() < 1e-8));
    }

    #[test]
    fn riesz_of_in_space_functional_is_generator() {
        let space = Arc::new(SplineSpace::full_box(3, 0.5, 2, [0, 0, 0], [4, 4, 0]).unwrap());
        let g = SplineField::new(space.clone(), (0..space.len()).map(|i| (i as f64).cos()).collect());
        let f = full_gram(&space).apply(g.coeffs());
        let r = riesz_representative(space, &f).unwrap();
        assert!(r.coeffs().iter().zip(g.coeffs()).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn interval_condition_is_finite_with_penalty() {
        let mesh = BoundaryMesh::interval(0.0, 1.0 + 1e-7).unwrap();
        let (space, table) = setup(mesh, 0.1, 3);
        let op = StabilizedOperator::new(space, &table, 1.0).unwrap();
        let c = op.estimate_condition();
        assert!(c.cond.is_finite() && c.cond > 1.0);
    }
}
