use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};

use super::{GeometrySpec, HarnessError, StudyConfig, StudyKind, StudyReport, DISK_SIDES};
use crate::fieldexpr::FieldExpr;
use crate::geometry::BoundaryMesh;
use crate::grid::{FictitiousDomain, DEFAULT_K_MAX};
use crate::moments::{default_facet_points, MomentTable};
use crate::operators::{domain_quadrature, error_norms, StabilizedOperator};
use crate::particles::{advect_with, nesting_levels, regularize, remesh, sample, AdvectionConfig, VelocityField};
use crate::quadrature::{RuleConfig, RuleSet};
use crate::splines::{SplineField, SplineSpace};

/// Runs the study named in the configuration, writing files when an output
/// directory is set.
pub fn run(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    match cfg.kind {
        StudyKind::Extend => run_extend(cfg),
        StudyKind::Condition => run_condition(cfg),
        StudyKind::Quadrature => run_quadrature(cfg),
        StudyKind::Advect => run_advect(cfg),
    }
}

/// Everything built at one grid spacing.
struct Level {
    fd: Arc<FictitiousDomain>,
    space: Arc<SplineSpace>,
    table: MomentTable,
}

fn build_level(cfg: &StudyConfig, mesh: &BoundaryMesh, sigma: f64) -> Result<Level, HarnessError> {
    let fd = FictitiousDomain::build(mesh, sigma, cfg.n)?.enforce_reachability(DEFAULT_K_MAX)?;
    if fd.k_exceeded() {
        warn!(
            "sigma {sigma}: some cut cells need {} steps to reach the interior (limit {DEFAULT_K_MAX})",
            fd.achieved_k()
        );
    }
    let fd = Arc::new(fd);
    let space = Arc::new(SplineSpace::on_domain(&fd, cfg.n)?);
    let fp = default_facet_points(cfg.n);
    let table = match &cfg.moment_cache {
        Some(dir) => MomentTable::cached(dir, fd.clone(), cfg.n, fp)?,
        None => MomentTable::build(fd.clone(), cfg.n, fp),
    };
    if table.fallbacks() > 0 {
        warn!("sigma {sigma}: {} cut cells used the area-quadrature fallback", table.fallbacks());
    }
    Ok(Level { fd, space, table })
}

fn eval_fn(e: &FieldExpr, t: f64) -> impl Fn(&[f64]) -> f64 + '_ {
    // validated arity, so evaluation only fails on domain errors
    move |x| e.eval(x, t).unwrap_or(f64::NAN)
}

fn check_finite(what: &str, v: f64) -> Result<f64, HarnessError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HarnessError::Config(format!("{what} evaluated to {v}; check the expression's domain")))
    }
}

/// `|∫_Ω (u - f) φ|` by the high-order domain rule.
fn functional_error(fd: &FictitiousDomain, q: usize, f: &SplineField, u: impl Fn(&[f64]) -> f64, phi: impl Fn(&[f64]) -> f64) -> f64 {
    let mut s = 0.0;
    domain_quadrature(fd, q, |x, w| s += w * (u(x) - f.eval(x)) * phi(x));
    s.abs()
}

fn out_file(cfg: &StudyConfig, artifacts: &mut Vec<String>, name: String) -> Result<Option<BufWriter<File>>, HarnessError> {
    let Some(dir) = &cfg.out else { return Ok(None) };
    std::fs::create_dir_all(dir)?;
    let f = File::create(dir.join(&name))?;
    artifacts.push(name);
    Ok(Some(BufWriter::new(f)))
}

fn finish(cfg: &StudyConfig, report: &StudyReport, artifacts: &[String]) -> Result<(), HarnessError> {
    if let Some(dir) = &cfg.out {
        report.write_all(Path::new(dir), cfg, artifacts)?;
    }
    Ok(())
}

/// Approximate extension of `u0` at every spacing, with errors on `Ω` and `Ω_σ`.
pub fn run_extend(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    cfg.validate()?;
    let mesh = cfg.geometry.build(DISK_SIDES)?;
    let mut report = StudyReport::new(
        StudyKind::Extend,
        cfg.seed,
        &[
            "sigma",
            "dofs",
            "cut_cells",
            "l2_domain",
            "linf_domain",
            "l2_fictitious",
            "linf_fictitious",
            "functional",
            "cg_iterations",
            "cg_residual",
            "achieved_k",
            "seconds",
        ],
    );
    report.notes.push(format!("mesh_sha256 = {}", mesh.content_hash()));
    let mut artifacts = Vec::new();
    let u = eval_fn(&cfg.u0, 0.0);
    let phi = eval_fn(&cfg.test_functions[0], 0.0);
    for (level, &sigma) in cfg.sigmas.iter().enumerate() {
        let start = Instant::now();
        let lv = build_level(cfg, &mesh, sigma)?;
        let op = StabilizedOperator::new(lv.space.clone(), &lv.table, cfg.eps)?;
        let (field, rep) = op.approximate_extension(&u)?;
        let e = error_norms(&field, &lv.fd, &u);
        let func = functional_error(&lv.fd, cfg.n + 2, &field, &u, &phi);
        check_finite("initial data", e.l2_domain)?;
        info!("extend sigma {sigma}: L2(Omega) {:.3e}, {} CG iterations", e.l2_domain, rep.iterations);
        report.push_row(vec![
            sigma,
            lv.space.len() as f64,
            lv.fd.cut_cells().len() as f64,
            e.l2_domain,
            e.linf_domain,
            e.l2_fictitious,
            e.linf_fictitious,
            func,
            rep.iterations as f64,
            rep.residual,
            lv.fd.achieved_k() as f64,
            start.elapsed().as_secs_f64(),
        ]);
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_cells.csv"))? {
            lv.fd.write_cells_csv(w)?;
        }
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_faces.csv"))? {
            lv.fd.write_faces_csv(w)?;
        }
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_field.pmsf"))? {
            field.write_binary(w)?;
        }
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_A.mtx"))? {
            op.a().write_matrix_market(w)?;
        }
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_J.mtx"))? {
            op.j().write_matrix_market(w)?;
        }
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_solve.csv"))? {
            rep.write_log(w)?;
        }
    }
    for q in ["l2_domain", "linf_domain", "l2_fictitious", "functional"] {
        report.fit("sigma", q);
    }
    finish(cfg, &report, &artifacts)?;
    Ok(report)
}

/// Condition numbers of `A_ε` and `A_0` while the boundary is shifted by
/// fractions of the spacing.
pub fn run_condition(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    let dim = cfg.validate()?;
    let base = cfg.geometry.build(DISK_SIDES)?;
    let mut report = StudyReport::new(
        StudyKind::Condition,
        cfg.seed,
        &[
            "sigma",
            "offset",
            "dofs",
            "cut_cells",
            "cond_eps",
            "lambda_min_eps",
            "lambda_max_eps",
            "cg_iterations_eps",
            "cond_eps0",
            "lambda_min_eps0",
            "cg_iterations_eps0",
            "seconds",
        ],
    );
    let mut artifacts = Vec::new();
    let u = eval_fn(&cfg.u0, 0.0);
    for &sigma in &cfg.sigmas {
        for &off in &cfg.offsets {
            let start = Instant::now();
            let shift = vec![off * sigma; dim];
            let mesh = base.translated(&shift);
            let lv = build_level(cfg, &mesh, sigma)?;
            let op = StabilizedOperator::new(lv.space.clone(), &lv.table, cfg.eps)?;
            let c = op.estimate_condition();
            let iters = match op.approximate_extension(&u) {
                Ok((_, r)) => r.iterations as f64,
                Err(_) => f64::NAN,
            };
            let op0 = op.with_eps(0.0)?;
            let c0 = op0.estimate_condition();
            let iters0 = match op0.approximate_extension(&u) {
                Ok((_, r)) => r.iterations as f64,
                Err(_) => f64::NAN,
            };
            info!("condition sigma {sigma} offset {off}: cond {:.3e} (eps) {:.3e} (0)", c.cond, c0.cond);
            report.notes.push(format!("sigma {sigma} offset {off}: mesh_sha256 = {}", mesh.content_hash()));
            report.push_row(vec![
                sigma,
                off,
                lv.space.len() as f64,
                lv.fd.cut_cells().len() as f64,
                c.cond,
                c.lambda_min,
                c.lambda_max,
                iters,
                c0.cond,
                c0.lambda_min,
                iters0,
                start.elapsed().as_secs_f64(),
            ]);
        }
    }
    if let Some(w) = out_file(cfg, &mut artifacts, "condition_levels.txt".into())? {
        use std::io::Write;
        let mut w = w;
        writeln!(w, "offsets are in units of sigma; cond = inf marks a failed inverse iteration")?;
    }
    finish(cfg, &report, &artifacts)?;
    Ok(report)
}

/// Quadrature rules at each spacing `h`, their exactness and stability, and
/// the functional error of the particle field of a quasi-interpolant.
pub fn run_quadrature(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    let dim = cfg.validate()?;
    let mesh = cfg.geometry.build(DISK_SIDES)?;
    let mut cols = vec![
        "h".to_string(),
        "dofs".into(),
        "cut_rules".into(),
        "failures".into(),
        "max_residual_rel".into(),
        "max_stability".into(),
        "particles".into(),
    ];
    for i in 0..cfg.test_functions.len() {
        cols.push(format!("functional_{}", i + 1));
    }
    cols.push("seconds".into());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut report = StudyReport::new(StudyKind::Quadrature, cfg.seed, &col_refs);
    report.notes.push(format!("mesh_sha256 = {}", mesh.content_hash()));
    let mut artifacts = Vec::new();
    let u = eval_fn(&cfg.u0, 0.0);
    let rule_cfg = RuleConfig {
        c_stab: cfg.c_stab,
        seed: cfg.seed,
        ..RuleConfig::default()
    };
    for (level, &h) in cfg.sigmas.iter().enumerate() {
        let start = Instant::now();
        let lv = build_level(cfg, &mesh, h)?;
        let rules = RuleSet::build(lv.space.clone(), &lv.table, rule_cfg.clone());
        let vol = (cfg.n as f64 * h).powi(dim as i32);
        let mut max_res = 0.0f64;
        let mut max_stab = 0.0f64;
        for (id, lam) in lv.space.indices().iter().enumerate() {
            let Some(rule) = rules.rule(id) else { continue };
            let row = lv.table.row(lam);
            max_res = max_res.max(rule.residual_against(&lv.space, &row) / vol);
            max_stab = max_stab.max(rule.weight_sum() / (cfg.c_stab * vol));
        }
        let failures = rules.failures().len();
        let (particles, funcs) = if failures == 0 {
            let uh = SplineField::quasi_interpolate(lv.space.clone(), &u);
            let p = sample(&uh, &rules, cfg.layout)?;
            let funcs: Vec<f64> = cfg
                .test_functions
                .iter()
                .map(|phi| {
                    let phi = eval_fn(phi, 0.0);
                    let mut exact = 0.0;
                    domain_quadrature(&lv.fd, cfg.n + 3, |x, w| exact += w * uh.eval(x) * phi(x));
                    (exact - p.pair(&phi)).abs()
                })
                .collect();
            (p.len() as f64, funcs)
        } else {
            (f64::NAN, vec![f64::NAN; cfg.test_functions.len()])
        };
        info!("quadrature h {h}: residual {max_res:.2e}, stability {max_stab:.3}, {failures} failures");
        let mut row = vec![
            h,
            lv.space.len() as f64,
            rules.cut_rules().count() as f64,
            failures as f64,
            max_res,
            max_stab,
            particles,
        ];
        row.extend(funcs);
        row.push(start.elapsed().as_secs_f64());
        report.push_row(row);
        for (lam, why) in rules.failures() {
            report.notes.push(format!("h {h}: no rule for {lam:?}: {why}"));
        }
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_rules.csv"))? {
            rules.write_csv(w)?;
        }
    }
    for i in 0..cfg.test_functions.len() {
        report.fit("h", &format!("functional_{}", i + 1));
    }
    finish(cfg, &report, &artifacts)?;
    Ok(report)
}

/// Particle spacing exponent: the configured one, or the smallest `k` with
/// `σ / 2^k <= σ²`.
pub fn particle_levels(cfg: &StudyConfig, sigma: f64) -> u32 {
    cfg.k.unwrap_or_else(|| (1.0 / sigma).log2().ceil().max(0.0) as u32)
}

/// Default time step: `T / ceil(2T / σ)`.
pub fn default_dt(t_end: f64, sigma: f64) -> f64 {
    if t_end == 0.0 {
        return 1.0;
    }
    t_end / (2.0 * t_end / sigma).ceil()
}

/// Full pipeline: extension of `u0`, particles at `h`, advection to `T`,
/// regularization, comparison with the exact transported solution.
pub fn run_advect(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    cfg.validate()?;
    let mut report = StudyReport::new(
        StudyKind::Advect,
        cfg.seed,
        &[
            "sigma",
            "h",
            "k",
            "sides",
            "particles",
            "steps",
            "dt",
            "init_l2",
            "l2_domain",
            "linf_domain",
            "l2_fictitious",
            "weight_constant",
            "escaped",
            "cg_iterations",
            "seconds",
        ],
    );
    let mut artifacts = Vec::new();
    let velocity = match &cfg.velocity {
        Some(v) => VelocityField::from_exprs(v.clone()),
        None => VelocityField::rotation([0.0, 0.0], 1.0),
    };
    let u0 = eval_fn(&cfg.u0, 0.0);
    let sigma0 = cfg.sigmas[0];
    let rule_cfg = RuleConfig {
        c_stab: cfg.c_stab,
        seed: cfg.seed,
        ..RuleConfig::default()
    };
    for (level, &sigma) in cfg.sigmas.iter().enumerate() {
        let start = Instant::now();
        // refine the disk with the grid so the polygon stays close to the circle
        let sides = match cfg.geometry {
            GeometrySpec::Disk => DISK_SIDES * (sigma0 / sigma).round().max(1.0) as usize,
            _ => 0,
        };
        let mesh = cfg.geometry.build(sides.max(3))?;
        let flux = velocity.boundary_flux(&mesh, 0.0)?;
        if flux > 1e-10 {
            warn!("velocity is not tangential on the boundary: |a.n| up to {flux:.2e}");
        }
        let k = particle_levels(cfg, sigma);
        let h = sigma / 2f64.powi(k as i32);
        let coarse = build_level(cfg, &mesh, sigma)?;
        let op = StabilizedOperator::new(coarse.space.clone(), &coarse.table, cfg.eps)?;
        let (init, _) = op.approximate_extension(&u0)?;
        let init_err = error_norms(&init, &coarse.fd, &u0);
        let fine = build_level(cfg, &mesh, h)?;
        let rules = RuleSet::build(fine.space.clone(), &fine.table, rule_cfg.clone());
        if !rules.failures().is_empty() {
            return Err(HarnessError::Config(format!(
                "{} basis functions at h = {h} have no quadrature rule; raise --cstab",
                rules.failures().len()
            )));
        }
        let levels = nesting_levels(sigma, h)?;
        let init_fine = init.refine(levels, fine.space.clone())?;
        let mut particles = sample(&init_fine, &rules, cfg.layout)?;
        info!("advect sigma {sigma}: h {h}, {} particles", particles.len());
        let dt = cfg.dt.unwrap_or_else(|| default_dt(cfg.t_end, sigma));
        let steps = if cfg.t_end == 0.0 { 0 } else { AdvectionConfig::new(0.0, cfg.t_end, dt).steps()? };
        // advect in chunks between remeshings
        let chunk = cfg.remesh_every.unwrap_or(steps.max(1)).max(1);
        let mut weight_constant = true;
        let mut done = 0;
        while done < steps {
            let m = chunk.min(steps - done);
            let t0 = done as f64 * dt;
            let acfg = AdvectionConfig::new(t0, t0 + m as f64 * dt, dt);
            let w0 = particles.total_weight().to_bits();
            particles = advect_with(&particles, &velocity, &acfg, &mesh, |_, _, p| {
                weight_constant &= p.total_weight().to_bits() == w0;
                Ok(())
            })?;
            done += m;
            if done < steps && cfg.remesh_every.is_some() {
                particles = remesh(&particles, &op, &rules, cfg.layout)?.0;
            }
        }
        let escaped = particles.escaped.iter().filter(|e| **e).count();
        let (fin, rep) = regularize(&particles, &op)?;
        let t_end = steps as f64 * dt;
        let exact = |x: &[f64]| match velocity.flow(x, t_end, 0.0) {
            Some(p) => cfg.u0.eval(&p[..x.len()], 0.0).unwrap_or(f64::NAN),
            None => f64::NAN,
        };
        if velocity.flow(&[0.0; 3][..mesh.dim()], 0.0, 0.0).is_none() {
            warn!("no exact flow map for this velocity; errors are not available");
        }
        let e = error_norms(&fin, &coarse.fd, exact);
        info!("advect sigma {sigma}: L2(Omega) {:.3e} after {steps} steps", e.l2_domain);
        report.notes.push(format!("sigma {sigma}: mesh_sha256 = {}", mesh.content_hash()));
        report.push_row(vec![
            sigma,
            h,
            k as f64,
            sides as f64,
            particles.len() as f64,
            steps as f64,
            dt,
            init_err.l2_domain,
            e.l2_domain,
            e.linf_domain,
            e.l2_fictitious,
            if weight_constant { 1.0 } else { 0.0 },
            escaped as f64,
            rep.iterations as f64,
            start.elapsed().as_secs_f64(),
        ]);
        if let Some(w) = out_file(cfg, &mut artifacts, format!("level{level}_final.pmsf"))? {
            fin.write_binary(w)?;
        }
    }
    report.fit("sigma", "l2_domain");
    report.fit("sigma", "l2_fictitious");
    finish(cfg, &report, &artifacts)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_particle_spacing_is_below_sigma_squared() {
        let cfg = StudyConfig::new(StudyKind::Advect, GeometrySpec::Disk).unwrap();
        for s in [0.2, 0.1, 0.05] {
            let h = s / 2f64.powi(particle_levels(&cfg, s) as i32);
            assert!(h <= s * s && 2.0 * h > s * s);
        }
        let dt = default_dt(std::f64::consts::FRAC_PI_2, 0.1);
        assert!(AdvectionConfig::new(0.0, std::f64::consts::FRAC_PI_2, dt).steps().is_ok());
    }

    #[test]
    fn polynomial_extension_is_exact() {
        let mut cfg = StudyConfig::new(StudyKind::Extend, GeometrySpec::Disk).unwrap();
        cfg.sigmas = vec![0.4, 0.2];
        cfg.u0 = FieldExpr::parse("1 + x1 - 2*x2 + x1*x2^2 - x1^2").unwrap();
        let r = run_extend(&cfg).unwrap();
        for q in ["l2_domain", "linf_domain", "l2_fictitious", "linf_fictitious"] {
            assert!(r.column(q).unwrap().iter().all(|e| *e < 1e-7), "{q} {:?}", r.column(q));
        }
    }
}
