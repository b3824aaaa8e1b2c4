mod common;

use std::sync::Arc;

use common::*;
use pmreg::geometry::BoundaryMesh;
use pmreg::grid::FictitiousDomain;
use pmreg::harness::{run_extend, GeometrySpec, StudyConfig, StudyKind};
use pmreg::operators::{error_norms, full_gram, riesz_representative, StabilizedOperator};
use pmreg::particles::{advect_with, particle_load_vector, regularize, remesh, sample, AdvectionConfig, ParticleLayout, VelocityField};
use pmreg::quadrature::{RuleConfig, RuleSet};
use pmreg::splines::SplineField;

fn u0(x: &[f64]) -> f64 {
    (x[0] + x[1] / 2.0).exp()
}

/// Unit square with a thin strip poking out two cells to the right.
fn strip_mesh() -> BoundaryMesh {
    BoundaryMesh::polygon(vec![
        [0.0, 0.0],
        [1.0, 0.0],
        [1.0, 0.52],
        [1.4, 0.56],
        [1.4, 0.565],
        [1.0, 0.53],
        [1.0, 1.0],
        [0.0, 1.0],
    ])
    .unwrap()
}

#[test]
fn sliver_needing_two_hops() {
    let fd = FictitiousDomain::build(&strip_mesh(), 0.25, 3).unwrap();
    let cut = fd.cut_cells().to_vec();
    let faces = fd.ghost_faces().len();
    assert_eq!(cut, vec![[4, 2, 0], [5, 2, 0]]);

    let kept = fd.clone().enforce_reachability(2).unwrap();
    assert_eq!(kept.achieved_k(), 2);
    assert!(!kept.k_exceeded());
    assert_eq!(kept.cut_cells(), &cut[..]);
    assert_eq!(kept.ghost_faces().len(), faces);

    let moved = fd.enforce_reachability(1).unwrap();
    assert!(moved.cut_cells().len() > cut.len());
    assert!(moved.ghost_faces().len() > faces);
}

#[test]
fn degenerate_sliver_rules_keep_invariants() {
    // the top row of cells holds a strip of measure 1e-8 h^2
    let h = 0.1;
    let mesh = BoundaryMesh::rect([0.0, 0.0], [1.0, 0.5 + 1e-9]).unwrap();
    let lv = level(&mesh, h, 3);
    assert!(lv.fd.cut_cells().iter().any(|c| lv.fd.clipped(c).unwrap().measure < 1e-9));
    let cfg = RuleConfig::default();
    let rules = RuleSet::build(lv.space.clone(), &lv.table, cfg.clone());
    let vol = (3.0 * h) * (3.0 * h);
    let mut checked = 0;
    for (id, rule) in rules.cut_rules() {
        let lam = lv.space.index(id);
        assert!(rule.residual_against(&lv.space, &lv.table.row(&lam)) <= 1e-10 * vol, "{lam:?}");
        assert!(rule.weight_sum() <= cfg.c_stab * vol);
        assert!(rule.weights.iter().all(|w| *w >= 0.0));
        assert!(rule.nodes.iter().all(|x| mesh.contains_tol(&x[..2], 1e-12)));
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn initial_particles_carry_exact_moments() {
    let mesh = BoundaryMesh::disk([0.0, 0.0], 1.0, 64).unwrap();
    let coarse = level(&mesh, 0.2, 3);
    let fine = level(&mesh, 0.05, 3);
    let op = StabilizedOperator::new(coarse.space.clone(), &coarse.table, 1.0).unwrap();
    let (ut, _) = op.approximate_extension(u0).unwrap();
    let init = error_norms(&ut, &coarse.fd, u0).l2_domain;
    let rules = RuleSet::build(fine.space.clone(), &fine.table, RuleConfig::default());
    let uh = ut.refine(2, fine.space.clone()).unwrap();
    for layout in [ParticleLayout::Merged, ParticleLayout::PerBasis] {
        let p = sample(&uh, &rules, layout).unwrap();
        let (back, _) = regularize(&p, &op).unwrap();
        // the load vector is exactly A c, so only the penalty moves the result
        let rhs = particle_load_vector(&p, &op);
        let ac = op.a().apply(ut.coeffs());
        assert!(rhs.iter().zip(&ac).all(|(a, b)| (a - b).abs() <= 1e-10));
        let e = error_norms(&back, &coarse.fd, u0).l2_domain;
        assert!(e <= 2.0 * init && e >= 0.5 * init, "{e} vs {init}");
    }
}

#[test]
fn remesh_round_trip() {
    let mesh = BoundaryMesh::disk([0.0, 0.0], 1.0, 64).unwrap();
    let coarse = level(&mesh, 0.2, 3);
    let fine = level(&mesh, 0.05, 3);
    let op = StabilizedOperator::new(coarse.space.clone(), &coarse.table, 1.0).unwrap();
    let rules = RuleSet::build(fine.space.clone(), &fine.table, RuleConfig::default());
    let (ut, _) = op.approximate_extension(u0).unwrap();
    let p = sample(&ut.refine(2, fine.space.clone()).unwrap(), &rules, ParticleLayout::Merged).unwrap();
    let (q, reg) = remesh(&p, &op, &rules, ParticleLayout::Merged).unwrap();
    // the new particles carry exactly the moments of the regularized field
    let rhs = particle_load_vector(&q, &op);
    let ar = op.a().apply(reg.coeffs());
    assert!(rhs.iter().zip(&ar).all(|(a, b)| (a - b).abs() <= 1e-10));
    let (again, _) = regularize(&q, &op).unwrap();
    let d = error_norms(&again, &coarse.fd, |x| reg.eval(x)).l2_domain;
    let e = error_norms(&reg, &coarse.fd, u0).l2_domain;
    assert!(d <= e, "second regularization moved by {d}, error {e}");
}

#[test]
fn advection_conserves_weights_bitwise() {
    let mesh = BoundaryMesh::disk([0.0, 0.0], 1.0, 64).unwrap();
    let lv = level(&mesh, 0.1, 3);
    let rules = RuleSet::build(lv.space.clone(), &lv.table, RuleConfig::default());
    let u = SplineField::quasi_interpolate(lv.space.clone(), u0);
    let p = sample(&u, &rules, ParticleLayout::Merged).unwrap();
    let w0 = p.total_weight().to_bits();
    let ws = p.weights.clone();
    let v = VelocityField::rotation([0.0, 0.0], 1.0);
    let cfg = AdvectionConfig::new(0.0, 1.0, 0.1);
    let mut same = true;
    let out = advect_with(&p, &v, &cfg, &mesh, |_, _, f| {
        same &= f.total_weight().to_bits() == w0;
        Ok(())
    })
    .unwrap();
    assert!(same);
    assert_eq!(out.weights, ws);
}

#[test]
fn ghost_penalty_of_quasi_interpolant_decays() {
    let mesh = BoundaryMesh::disk([0.0, 0.0], 1.0, 256).unwrap();
    let n = 3;
    let mut hs = Vec::new();
    let mut es = Vec::new();
    for sigma in [0.2, 0.1, 0.05, 0.025] {
        let fd = FictitiousDomain::build(&mesh, sigma, n).unwrap();
        let space = Arc::new(pmreg::splines::SplineSpace::on_domain(&fd, n).unwrap());
        let j = pmreg::operators::assemble_j(&space, &fd);
        let pu = SplineField::quasi_interpolate(space.clone(), |x| x[0].exp());
        let r = riesz_representative(space.clone(), &j.apply(pu.coeffs())).unwrap();
        hs.push(sigma);
        es.push(full_gram(&space).quad_form(r.coeffs()).sqrt());
    }
    let fit = pmreg::harness::fit_order(&hs, &es);
    let order = fit.order.expect("fit refused");
    assert!(order >= n as f64 - 0.5, "order {order} from {es:?}");
}

fn extend_orders(eps: f64, sigmas: &[f64]) -> (f64, f64) {
    let mut cfg = StudyConfig::new(StudyKind::Extend, GeometrySpec::Disk).unwrap();
    cfg.sigmas = sigmas.to_vec();
    cfg.eps = eps;
    let rep = run_extend(&cfg).unwrap();
    let l2 = rep.order("l2_domain").and_then(|f| f.order).unwrap();
    let fun = rep.order("functional").and_then(|f| f.order).unwrap();
    (l2, fun)
}

#[test]
fn functional_error_superconverges() {
    let (l2, fun) = extend_orders(1.0, &[0.2, 0.1, 0.05, 0.025]);
    assert!(fun >= l2 + 2.0, "functional {fun} vs l2 {l2}");
}

#[test]
fn extension_order_insensitive_to_penalty_weight() {
    // a heavy penalty is still preasymptotic at σ = 0.2, so start one level finer
    let sigmas = [0.1, 0.05, 0.025, 0.0125];
    let (base, _) = extend_orders(1.0, &sigmas);
    for eps in [0.01, 100.0] {
        let (l2, _) = extend_orders(eps, &sigmas);
        assert!((l2 - base).abs() <= 0.3, "eps {eps}: {l2} vs {base}");
    }
}
