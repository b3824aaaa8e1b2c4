//! Moving particles with a velocity field, and turning particle fields back
//! into splines.
//!
//! Advection moves nodes only; the weights `U_i` are never touched, so the
//! total weight is conserved bit for bit.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use thiserror::Error;

use crate::fieldexpr::{EvalError, FieldExpr};
use crate::geometry::{BoundaryMesh, Facet};
use crate::operators::{OperatorError, SolveReport, StabilizedOperator};
use crate::quadrature::{particles_from_spline, particles_from_spline_merged, ParticleField, QuadratureError, RuleSet};
use crate::splines::{SplineError, SplineField};
use crate::{Point, MAX_DIM};

#[derive(Debug, Error)]
pub enum ParticleError {
    #[error("time step {dt} does not divide [{t0}, {t1}]")]
    BadTimeStep { t0: f64, t1: f64, dt: f64 },
    #[error("velocity evaluation failed: {0}")]
    Velocity(#[from] EvalError),
    #[error("velocity has {got} components, the particles live in dimension {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("fine grid spacing {fine} is not {coarse} / 2^k")]
    NotNested { coarse: f64, fine: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type VelocityFn = dyn Fn(&[f64], f64, &mut [f64]) -> Result<(), EvalError> + Send + Sync;
type FlowFn = dyn Fn(&[f64], f64, f64) -> Point + Send + Sync;

/// A velocity `a(x, t)` with optional exact flow map for tests.
#[derive(Clone)]
pub struct VelocityField {
    dim: usize,
    eval: Arc<VelocityFn>,
    flow: Option<Arc<FlowFn>>,
    /// Number of continuous derivatives, `None` for smooth fields.
    pub smoothness: Option<usize>,
    pub label: String,
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VelocityField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("has_flow", &self.flow.is_some())
            .finish()
    }
}

impl VelocityField {
    pub fn from_fn(dim: usize, f: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(move |x, t, out| {
                f(x, t, out);
                Ok(())
            }),
            flow: None,
            smoothness: None,
            label: "closure".into(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        let mut v = Self::from_fn(dim, |_, _, out| out.fill(0.0));
        v.flow = Some(Arc::new(|x, _, _| {
            let mut p = [0.0; MAX_DIM];
            p[..x.len()].copy_from_slice(x);
            p
        }));
        v.label = "zero".into();
        v
    }

    /// Rigid rotation `ω (-(x2 - c2), x1 - c1)` about `center`.
    pub fn rotation(center: [f64; 2], omega: f64) -> Self {
        let mut v = Self::from_fn(2, move |x, _, out| {
            out[0] = -omega * (x[1] - center[1]);
            out[1] = omega * (x[0] - center[0]);
        });
        v.flow = Some(Arc::new(move |x, t0, t1| {
            let (s, c) = (omega * (t1 - t0)).sin_cos();
            let dx = x[0] - center[0];
            let dy = x[1] - center[1];
            [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy, 0.0]
        }));
        v.label = format!("rotation(omega={omega})");
        v
    }

    /// One expression per component.
    pub fn from_exprs(exprs: Vec<FieldExpr>) -> Self {
        let dim = exprs.len();
        let label = exprs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
        Self {
            dim,
            eval: Arc::new(move |x, t, out| {
                for (o, e) in out.iter_mut().zip(&exprs) {
                    *o = e.eval(x, t)?;
                }
                Ok(())
            }),
            flow: None,
            smoothness: None,
            label,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        (self.eval)(x, t, out)
    }

    /// Exact position at `t1` of the particle at `x` at time `t0`, if known.
    pub fn flow(&self, x: &[f64], t0: f64, t1: f64) -> Option<Point> {
        self.flow.as_ref().map(|f| f(x, t0, t1))
    }

    /// Largest `|a · n|` over facet midpoints (or interval endpoints) at time `t`.
    pub fn boundary_flux(&self, mesh: &BoundaryMesh, t: f64) -> Result<f64, EvalError> {
        let mut out = [0.0; MAX_DIM];
        let mut worst = 0.0f64;
        for f in mesh.facets() {
            let (x, nrm) = match f {
                Facet::Endpoint { x, orientation } => ([x, 0.0], [orientation, 0.0]),
                Facet::Segment { a, b, normal, .. } => ([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0], normal),
            };
            self.eval(&x[..self.dim], t, &mut out[..self.dim])?;
            let flux: f64 = (0..self.dim).map(|k| out[k] * nrm[k]).sum();
            worst = worst.max(flux.abs());
        }
        Ok(worst)
    }
}

/// What to do with particles that leave the closed domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EscapePolicy {
    /// Leave them where they are and set their flag.
    #[default]
    Keep,
    /// Move them to the closest boundary point and set their flag.
    Project,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvectionConfig {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub policy: EscapePolicy,
}

impl AdvectionConfig {
    pub fn new(t0: f64, t1: f64, dt: f64) -> Self {
        Self {
            t0,
            t1,
            dt,
            policy: EscapePolicy::Keep,
        }
    }

    /// Number of fixed steps, checking that `dt` divides the interval.
    pub fn steps(&self) -> Result<usize, ParticleError> {
        let span = self.t1 - self.t0;
        let bad = ParticleError::BadTimeStep {
            t0: self.t0,
            t1: self.t1,
            dt: self.dt,
        };
        if !(self.dt > 0.0) || !(span >= 0.0) {
            return Err(bad);
        }
        let k = (span / self.dt).round();
        if (k * self.dt - span).abs() > 1e-9 * span.max(self.dt) {
            return Err(bad);
        }
        Ok(k as usize)
    }

    /// Time of step `i`, computed without accumulating round-off.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// One classical Runge-Kutta step for a single point.
pub fn rk4_step(v: &VelocityField, x: &mut [f64], t: f64, dt: f64) -> Result<(), EvalError> {
    let d = x.len();
    let mut k = [[0.0; MAX_DIM]; 4];
    let mut y = [0.0; MAX_DIM];
    v.eval(x, t, &mut k[0][..d])?;
    for i in 0..d {
        y[i] = x[i] + 0.5 * dt * k[0][i];
    }
    v.eval(&y[..d], t + 0.5 * dt, &mut k[1][..d])?;
    for i in 0..d {
        y[i] = x[i] + 0.5 * dt * k[1][i];
    }
    v.eval(&y[..d], t + 0.5 * dt, &mut k[2][..d])?;
    for i in 0..d {
        y[i] = x[i] + dt * k[2][i];
    }
    v.eval(&y[..d], t + dt, &mut k[3][..d])?;
    for i in 0..d {
        x[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
    Ok(())
}

/// Final position of one particle.
pub fn trajectory(v: &VelocityField, x0: &[f64], cfg: &AdvectionConfig) -> Result<Point, ParticleError> {
    let steps = cfg.steps()?;
    let mut p = [0.0; MAX_DIM];
    p[..x0.len()].copy_from_slice(x0);
    for s in 0..steps {
        rk4_step(v, &mut p[..x0.len()], cfg.time(s), cfg.dt)?;
    }
    Ok(p)
}

/// Advects every particle from `t0` to `t1`.
pub fn advect(
    field: &ParticleField,
    v: &VelocityField,
    cfg: &AdvectionConfig,
    domain: &BoundaryMesh,
) -> Result<ParticleField, ParticleError> {
    advect_with(field, v, cfg, domain, |_, _, _| Ok(()))
}

/// Like [`advect`], calling `on_step(step, t, field)` before the first step
/// and after each one.
pub fn advect_with(
    field: &ParticleField,
    v: &VelocityField,
    cfg: &AdvectionConfig,
    domain: &BoundaryMesh,
    mut on_step: impl FnMut(usize, f64, &ParticleField) -> Result<(), ParticleError>,
) -> Result<ParticleField, ParticleError> {
    let steps = cfg.steps()?;
    let d = field.dim;
    if v.dim() != d {
        return Err(ParticleError::DimensionMismatch { want: d, got: v.dim() });
    }
    let mut out = field.clone();
    on_step(0, cfg.t0, &out)?;
    for s in 0..steps {
        let t = cfg.time(s);
        for p in out.positions.chunks_exact_mut(d) {
            rk4_step(v, p, t, cfg.dt)?;
        }
        if cfg.policy == EscapePolicy::Project {
            project_escaped(&mut out, domain);
        }
        on_step(s + 1, cfg.time(s + 1), &out)?;
    }
    let mut escaped = 0;
    for i in 0..out.len() {
        let outside = !domain.contains(out.position(i));
        out.escaped[i] = out.escaped[i] || outside;
        escaped += outside as usize;
    }
    if escaped > 0 {
        log::debug!("{escaped} of {} particles outside the domain at t = {}", out.len(), cfg.t1);
    }
    Ok(out)
}

fn project_escaped(field: &mut ParticleField, domain: &BoundaryMesh) {
    let d = field.dim;
    for i in 0..field.len() {
        let p = &mut field.positions[i * d..(i + 1) * d];
        if !domain.contains(p) {
            let q = domain.project_to_boundary(p);
            p.copy_from_slice(&q[..d]);
            field.escaped[i] = true;
        }
    }
}

/// `rhs_μ = Σ_i U_i b_μ(x_i)`.
pub fn particle_load_vector(field: &ParticleField, op: &StabilizedOperator) -> Vec<f64> {
    let space = op.space();
    let mut rhs = vec![0.0; space.len()];
    for i in 0..field.len() {
        let u = field.weights[i];
        if u != 0.0 {
            space.for_each_active(field.position(i), |id, b| rhs[id] += u * b);
        }
    }
    rhs
}

/// `A_ε^{-1}` applied to the particle field.
pub fn regularize(field: &ParticleField, op: &StabilizedOperator) -> Result<(SplineField, SolveReport), ParticleError> {
    let rhs = particle_load_vector(field, op);
    let (c, rep) = op.solve_default(&rhs)?;
    Ok((SplineField::new(op.space().clone(), c), rep))
}

/// How a spline is sampled into particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParticleLayout {
    /// One particle per rule node and basis function.
    PerBasis,
    /// Interior Gauss nodes shared by several basis functions merged.
    #[default]
    Merged,
}

pub fn sample(field: &SplineField, rules: &RuleSet, layout: ParticleLayout) -> Result<ParticleField, ParticleError> {
    Ok(match layout {
        ParticleLayout::PerBasis => particles_from_spline(field, rules)?,
        ParticleLayout::Merged => particles_from_spline_merged(field, rules)?,
    })
}

/// Number of two-scale levels between `coarse` and `fine`.
pub fn nesting_levels(coarse: f64, fine: f64) -> Result<u32, ParticleError> {
    let r = (coarse / fine).log2();
    let k = r.round();
    if !(k >= 0.0) || (r - k).abs() > 1e-9 {
        return Err(ParticleError::NotNested { coarse, fine });
    }
    Ok(k as u32)
}

/// Regularizes at `σ`, refines to the rule spacing and resamples.
pub fn remesh(
    field: &ParticleField,
    op: &StabilizedOperator,
    rules: &RuleSet,
    layout: ParticleLayout,
) -> Result<(ParticleField, SplineField), ParticleError> {
    let (reg, _) = regularize(field, op)?;
    let levels = nesting_levels(op.space().sigma(), rules.space().sigma())?;
    let fine = reg.refine(levels, rules.space().clone())?;
    Ok((sample(&fine, rules, layout)?, reg))
}

/// Writes particle and spline snapshots plus a manifest listing them.
#[derive(Debug)]
pub struct SnapshotWriter {
    dir: PathBuf,
    entries: Vec<(usize, f64, String, Option<String>)>,
}

impl SnapshotWriter {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self, ParticleError> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, step: usize, t: f64, particles: &ParticleField, spline: Option<&SplineField>) -> Result<(), ParticleError> {
        let pname = format!("particles_{step:05}.csv");
        particles.write_csv(BufWriter::new(File::create(self.dir.join(&pname))?))?;
        let sname = match spline {
            Some(s) => {
                let name = format!("field_{step:05}.pmsf");
                s.write_binary(BufWriter::new(File::create(self.dir.join(&name))?))?;
                Some(name)
            }
            None => None,
        };
        self.entries.push((step, t, pname, sname));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes `manifest.txt`, one `{step, t, particles, field}` record per line.
    pub fn finish(self) -> Result<PathBuf, ParticleError> {
        let path = self.dir.join("manifest.txt");
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# snapshots: {}", self.entries.len())?;
        for (step, t, p, s) in &self.entries {
            let field = s.as_deref().map_or("null".to_string(), |s| format!("\"{s}\""));
            writeln!(w, "{{step: {step}, t: {t:.17e}, particles: \"{p}\", field: {field}}}")?;
        }
        w.flush()?;
        if self.entries.is_empty() {
            warn!("snapshot manifest written without entries");
        }
        Ok(path)
    }
}
