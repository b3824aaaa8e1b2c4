//! Oracles and invariant checks shared by the integration suites and the
//! acceptance run. Every check returns `Err` with a description on failure.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pmreg::gauss::GaussRule;
use pmreg::geometry::BoundaryMesh;
use pmreg::grid::FictitiousDomain;
use pmreg::moments::{default_facet_points, MomentTable};
use pmreg::operators::{assemble_a, assemble_j};
use pmreg::splines::{bspline, SplineField, SplineSpace};
use pmreg::{box_iter, MultiIndex, MAX_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub struct Level {
    pub fd: Arc<FictitiousDomain>,
    pub space: Arc<SplineSpace>,
    pub table: MomentTable,
}

pub fn level(mesh: &BoundaryMesh, sigma: f64, n: usize) -> Level {
    let fd = Arc::new(FictitiousDomain::build(mesh, sigma, n).unwrap());
    let space = Arc::new(SplineSpace::on_domain(&fd, n).unwrap());
    let table = MomentTable::build(fd.clone(), n, default_facet_points(n));
    Level { fd, space, table }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `∫_Ω b_λ b_μ` over a convex polygon: midpoint sum over `slices` vertical
/// strips per smooth piece, each strip integrated exactly in `x2`.
pub fn riemann_moment(mesh: &BoundaryMesh, n: usize, sigma: f64, lam: &MultiIndex, mu: &MultiIndex, slices: usize) -> f64 {
    let verts = mesh.vertices().expect("polygon");
    let lo: Vec<f64> = (0..2).map(|k| lam[k].max(mu[k]) as f64 * sigma).collect();
    let hi: Vec<f64> = (0..2).map(|k| (lam[k].min(mu[k]) + n as i64) as f64 * sigma).collect();
    if lo[0] >= hi[0] || lo[1] >= hi[1] {
        return 0.0;
    }
    let b = |l: i64, x: f64| bspline(n, x / sigma - l as f64, 0);
    let g = GaussRule::new(n);
    let strip = |x: f64| -> f64 {
        let mut ys: Vec<f64> = Vec::new();
        for i in 0..verts.len() {
            let p = verts[i];
            let q = verts[(i + 1) % verts.len()];
            if (p[0] - x) * (q[0] - x) <= 0.0 && p[0] != q[0] {
                ys.push(p[1] + (x - p[0]) / (q[0] - p[0]) * (q[1] - p[1]));
            }
        }
        if ys.is_empty() {
            return 0.0;
        }
        let y0 = ys.iter().cloned().fold(f64::INFINITY, f64::min).max(lo[1]);
        let y1 = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(hi[1]);
        if y0 >= y1 {
            return 0.0;
        }
        // the x2 integrand is a polynomial between grid lines
        let mut cuts = vec![y0];
        let mut k = (y0 / sigma).floor() + 1.0;
        while k * sigma < y1 {
            cuts.push(k * sigma);
            k += 1.0;
        }
        cuts.push(y1);
        let inner: f64 = cuts
            .windows(2)
            .map(|w| g.on_interval(w[0], w[1]).map(|(y, wy)| wy * b(lam[1], y) * b(mu[1], y)).sum::<f64>())
            .sum();
        b(lam[0], x) * b(mu[0], x) * inner
    };
    // split the x1 range where the strip integrand has kinks
    let mut brk = vec![lo[0], hi[0]];
    brk.extend(verts.iter().map(|v| v[0]).filter(|&x| x > lo[0] && x < hi[0]));
    let mut k = (lo[0] / sigma).floor() + 1.0;
    while k * sigma < hi[0] {
        brk.push(k * sigma);
        k += 1.0;
    }
    brk.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in brk.windows(2) {
        let dx = (w[1] - w[0]) / slices as f64;
        if dx <= 0.0 {
            continue;
        }
        total += (0..slices).map(|i| strip(w[0] + (i as f64 + 0.5) * dx)).sum::<f64>() * dx;
    }
    total
}

/// Compares `count` moment entries of cut pairs against [`riemann_moment`].
/// Pairs whose moment is below `1e-6 σ^2` are skipped since a relative
/// comparison of roundoff-sized values says nothing.
pub fn check_moments_vs_riemann(seed: u64, count: usize) -> Result<f64, String> {
    let mesh = BoundaryMesh::disk([0.03, -0.02], 0.9, 64).unwrap();
    let (n, sigma) = (3, 0.25);
    let lv = level(&mesh, sigma, n);
    let cut = lv.fd.cut_cells();
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let c = cut[r.random_range(0..cut.len())];
        let mut lam = c;
        let mut mu = c;
        for k in 0..2 {
            lam[k] -= r.random_range(0..n as i64);
            mu[k] -= r.random_range(0..n as i64);
        }
        let oracle = riemann_moment(&mesh, n, sigma, &lam, &mu, 4000);
        if oracle.abs() < 1e-6 * sigma * sigma {
            continue;
        }
        let rel = (lv.table.entry(&lam, &mu) - oracle).abs() / oracle.abs();
        if rel > 1e-8 {
            return Err(format!("moment {lam:?},{mu:?}: relative error {rel:e}"));
        }
        worst = worst.max(rel);
        done += 1;
    }
    Ok(worst)
}

/// Minimum of `cᵀx` over all basic feasible solutions of `Ax = b, x >= 0`.
pub fn vertex_enumeration_min(costs: &[f64], a: &[f64], b: &[f64]) -> Option<f64> {
    let m = b.len();
    let nc = costs.len();
    let mut best: Option<f64> = None;
    let mut cols: Vec<usize> = (0..m).collect();
    loop {
        let bm = DMatrix::from_fn(m, m, |i, j| a[i * nc + cols[j]]);
        if bm.determinant().abs() > 1e-10 {
            if let Some(x) = bm.lu().solve(&DVector::from_column_slice(b)) {
                if x.iter().all(|v| *v >= -1e-12) {
                    let obj: f64 = cols.iter().zip(x.iter()).map(|(&j, v)| costs[j] * v).sum();
                    best = Some(best.map_or(obj, |o: f64| o.min(obj)));
                }
            }
        }
        // next m-combination of 0..nc
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if cols[i] < nc - m + i {
                break;
            }
        }
        cols[i] += 1;
        for k in i + 1..m {
            cols[k] = cols[k - 1] + 1;
        }
    }
}

/// Random feasible instance with positive costs: `(costs, a, b)`.
pub fn random_lp(r: &mut ChaCha8Rng, m: usize, nc: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let costs: Vec<f64> = (0..nc).map(|_| r.random_range(0.5..2.0)).collect();
    let a: Vec<f64> = (0..m * nc).map(|_| r.random_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..nc).map(|_| if r.random_bool(0.5) { r.random_range(0.0..1.0) } else { 0.0 }).collect();
    let b: Vec<f64> = (0..m).map(|i| (0..nc).map(|j| a[i * nc + j] * x0[j]).sum()).collect();
    (costs, a, b)
}

pub fn check_lp_vs_enumeration(seed: u64, instances: usize) -> Check {
    let mut r = rng(seed);
    for k in 0..instances {
        let (m, nc) = (r.random_range(2..=4), r.random_range(5..=9));
        let (costs, a, b) = random_lp(&mut r, m, nc);
        let sol = pmreg::quadrature::lp_solve(&costs, &a, &b).map_err(|e| format!("instance {k}: {e}"))?;
        let best = vertex_enumeration_min(&costs, &a, &b).ok_or(format!("instance {k}: no vertex"))?;
        if (sol.objective - best).abs() > 1e-9 * best.abs().max(1.0) {
            return Err(format!("instance {k}: simplex {} vs vertices {best}", sol.objective));
        }
    }
    Ok(())
}

pub fn check_riesz_generator(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let space = Arc::new(SplineSpace::full_box(3, 0.2, 2, [-3, -2, 0], [3, 4, 0]).unwrap());
    let g: Vec<f64> = (0..space.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let f = pmreg::operators::full_gram(&space).apply(&g);
    let rep = pmreg::operators::riesz_representative(space, &f).map_err(|e| e.to_string())?;
    let err = rep.coeffs().iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if err > 1e-10 {
        return Err(format!("representative differs from generator by {err:e}"));
    }
    Ok(err)
}

pub fn check_partition_of_unity(n: usize, dim: usize, sigma: f64, x: &[f64]) -> Check {
    let mut lo = [0; MAX_DIM];
    let mut hi = [0; MAX_DIM];
    for k in 0..dim {
        lo[k] = (x[k] / sigma).floor() as i64 - 1;
        hi[k] = lo[k] + 3;
    }
    let space = SplineSpace::full_box(n, sigma, dim, lo, hi).unwrap();
    let mut s = 0.0;
    space.for_each_active(x, |_, v| s += v);
    // independent of the stencil path: direct evaluation of every basis
    let direct: f64 = space.indices().iter().map(|l| space.basis(l, x, &[])).sum();
    if (s - 1.0).abs() > 1e-13 || (direct - 1.0).abs() > 1e-13 {
        return Err(format!("n={n} d={dim} x={x:?}: sums {s} and {direct}"));
    }
    Ok(())
}

pub fn check_support_positivity(n: usize, s: f64) -> Check {
    let v = bspline(n, s, 0);
    let inside = s > 0.0 && s < n as f64;
    if inside && !(v > 0.0) {
        return Err(format!("b^{n}({s}) = {v} inside the support"));
    }
    if !inside && (s < 0.0 || s > n as f64) && v != 0.0 {
        return Err(format!("b^{n}({s}) = {v} outside the support"));
    }
    Ok(())
}

/// `J p = 0` for the coefficients of a `Q_{n-1}` polynomial on a disk.
pub fn check_j_kills_polynomials(n: usize, center: [f64; 2], radius: f64, sigma: f64, coef: &[f64]) -> Check {
    let mesh = BoundaryMesh::disk(center, radius, 48).unwrap();
    let fd = FictitiousDomain::build(&mesh, sigma, n).unwrap();
    let space = Arc::new(SplineSpace::on_domain(&fd, n).unwrap());
    let j = assemble_j(&space, &fd);
    let p = |x: &[f64]| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += coef[a * n + b] * x[0].powi(a as i32) * x[1].powi(b as i32);
            }
        }
        s
    };
    let c = SplineField::quasi_interpolate(space, p);
    let jp = j.apply(c.coeffs());
    let scale = j.diag().iter().fold(0.0f64, |s, v| s.max(*v)) * c.coeffs().iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let worst = jp.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if worst > 1e-11 * scale {
        return Err(format!("n={n}: |Jp| = {worst:e} against scale {scale:e}"));
    }
    Ok(())
}

/// Symmetry of `A` and `J` and nonnegativity of `uᵀAu`, `uᵀJu` on random `u`.
pub fn check_symmetric_psd(n: usize, center: [f64; 2], sigma: f64, seed: u64, samples: usize) -> Check {
    let mesh = BoundaryMesh::disk(center, 0.8, 48).unwrap();
    let lv = level(&mesh, sigma, n);
    let a = assemble_a(&lv.space, &lv.table);
    let j = assemble_j(&lv.space, &lv.fd);
    for (name, m) in [("A", &a), ("J", &j)] {
        if m.asymmetry() > 1e-14 {
            return Err(format!("{name} asymmetry {:e}", m.asymmetry()));
        }
        let scale = m.diag().iter().fold(0.0f64, |s, v| s.max(*v));
        let mut r = rng(seed);
        for _ in 0..samples {
            let u: Vec<f64> = (0..lv.space.len()).map(|_| r.random_range(-1.0..1.0)).collect();
            let q = m.quad_form(&u);
            if q < -1e-12 * scale * u.len() as f64 {
                return Err(format!("{name}: uᵀMu = {q:e}"));
            }
        }
    }
    Ok(())
}

/// Refining random coefficients `levels` times leaves the function unchanged.
pub fn check_two_scale(n: usize, dim: usize, levels: u32, seed: u64) -> Check {
    let sigma = 0.25;
    let mut lo = [0; MAX_DIM];
    let mut hi = [0; MAX_DIM];
    for k in 0..dim {
        lo[k] = -2;
        hi[k] = 3;
    }
    let coarse = Arc::new(SplineSpace::full_box(n, sigma, dim, lo, hi).unwrap());
    let mut r = rng(seed);
    let f = SplineField::new(coarse.clone(), (0..coarse.len()).map(|_| r.random_range(-1.0..1.0)).collect());
    let s = 1i64 << levels;
    let (mut flo, mut fhi) = (lo, hi);
    for k in 0..dim {
        flo[k] *= s;
        fhi[k] *= s;
    }
    let fine = Arc::new(SplineSpace::full_box(n, sigma / s as f64, dim, flo, fhi).unwrap());
    let g = f.refine(levels, fine).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let x: Vec<f64> = (0..dim).map(|k| r.random_range(lo[k] as f64 * sigma..hi[k] as f64 * sigma)).collect();
        let (a, b) = (f.eval(&x), g.eval(&x));
        if (a - b).abs() > 1e-12 {
            return Err(format!("n={n} d={dim} levels={levels} at {x:?}: {a} vs {b}"));
        }
    }
    Ok(())
}

/// Translating the mesh by whole cells translates classification, moments and
/// ghost faces by the same index offset.
pub fn check_shift_equivariance(n: usize, center: [f64; 2], shift: [i64; 2]) -> Check {
    let sigma = 0.125;
    let mesh = BoundaryMesh::disk(center, 0.7, 40).unwrap();
    let moved = mesh.translated(&[shift[0] as f64 * sigma, shift[1] as f64 * sigma]);
    let a = level(&mesh, sigma, n);
    let b = level(&moved, sigma, n);
    let sh = |c: &MultiIndex| [c[0] + shift[0], c[1] + shift[1], 0];
    let ca: Vec<MultiIndex> = a.fd.cut_cells().iter().map(sh).collect();
    if ca != b.fd.cut_cells() {
        return Err(format!("cut cells differ after shift {shift:?}"));
    }
    let fa: Vec<(usize, MultiIndex)> = a.fd.ghost_faces().iter().map(|f| (f.axis, sh(&f.lower))).collect();
    let fb: Vec<(usize, MultiIndex)> = b.fd.ghost_faces().iter().map(|f| (f.axis, f.lower)).collect();
    if fa != fb {
        return Err(format!("ghost faces differ after shift {shift:?}"));
    }
    for c in a.fd.cut_cells() {
        let hi = [c[0] + 1, c[1] + 1, 0];
        let lo = [c[0] - n as i64 + 1, c[1] - n as i64 + 1, 0];
        for lam in box_iter(lo, hi, 2) {
            for mu in box_iter(lo, hi, 2) {
                let (x, y) = (a.table.entry(&lam, &mu), b.table.entry(&sh(&lam), &sh(&mu)));
                if (x - y).abs() > 1e-12 * sigma * sigma {
                    return Err(format!("moment {lam:?},{mu:?}: {x:e} vs {y:e}"));
                }
            }
        }
    }
    Ok(())
}

/// Fitted step-halving slope of the RK4 endpoint error for rotation
/// trajectories over a quarter turn.
pub fn rk4_slope() -> f64 {
    use pmreg::particles::{trajectory, AdvectionConfig, VelocityField};
    let v = VelocityField::rotation([0.0, 0.0], 1.0);
    let t1 = std::f64::consts::FRAC_PI_2;
    let starts = [[1.0, 0.0], [0.3, -0.5], [-0.6, 0.2]];
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for steps in [8usize, 16, 32, 64] {
        let cfg = AdvectionConfig::new(0.0, t1, t1 / steps as f64);
        let mut e = 0.0f64;
        for x0 in &starts {
            let x = trajectory(&v, x0, &cfg).unwrap();
            let exact = v.flow(x0, 0.0, t1).unwrap();
            e = e.max(((x[0] - exact[0]).powi(2) + (x[1] - exact[1]).powi(2)).sqrt());
        }
        dts.push(t1 / steps as f64);
        errs.push(e);
    }
    pmreg::harness::fit_order(&dts, &errs).order.unwrap_or(f64::NAN)
}
