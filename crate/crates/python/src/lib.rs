use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pmreg::fieldexpr::FieldExpr;
use pmreg::grid::{FictitiousDomain, DEFAULT_K_MAX};
use pmreg::harness::{run, GeometrySpec, StudyConfig, StudyKind, DISK_SIDES};
use pmreg::moments::{default_facet_points, MomentTable};
use pmreg::operators::{error_norms, StabilizedOperator};
use pmreg::splines::SplineSpace;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Canonical fully parenthesized form of an expression.
#[pyfunction]
fn parse_expr(text: &str) -> PyResult<String> {
    Ok(FieldExpr::parse(text).map_err(value_err)?.to_string())
}

#[pyfunction]
#[pyo3(signature = (text, x, t=0.0))]
fn eval_expr(text: &str, x: Vec<f64>, t: f64) -> PyResult<f64> {
    let e = FieldExpr::parse(text).map_err(value_err)?;
    e.eval(&x, t).map_err(value_err)
}

/// Cardinal B-spline of order `n` (support `[0, n]`) or its derivative.
#[pyfunction]
#[pyo3(signature = (n, x, deriv=0))]
fn bspline(n: usize, x: f64, deriv: usize) -> PyResult<f64> {
    if !(1..=pmreg::splines::MAX_ORDER).contains(&n) {
        return Err(value_err(format!("order {n} out of range")));
    }
    Ok(pmreg::splines::bspline(n, x, deriv))
}

/// `min cᵀw` subject to `A w = b`, `w >= 0`. Returns `(w, objective)`.
#[pyfunction]
fn lp_solve(costs: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    if a.len() != b.len() || a.iter().any(|r| r.len() != costs.len()) {
        return Err(value_err("matrix shape does not match costs and rhs"));
    }
    let flat: Vec<f64> = a.into_iter().flatten().collect();
    let sol = pmreg::quadrature::lp_solve(&costs, &flat, &b).map_err(runtime_err)?;
    Ok((sol.x, sol.objective))
}

/// Approximate extension of `expr` at one spacing; returns the error norms
/// against the expression itself and the solver statistics.
#[pyfunction]
#[pyo3(signature = (expr, sigma, n=3, eps=1.0, geom="disk"))]
fn extend<'py>(py: Python<'py>, expr: &str, sigma: f64, n: usize, eps: f64, geom: &str) -> PyResult<Bound<'py, PyDict>> {
    let u = FieldExpr::parse(expr).map_err(value_err)?;
    let mesh = geom.parse::<GeometrySpec>().map_err(value_err)?.build(DISK_SIDES).map_err(value_err)?;
    let fd = FictitiousDomain::build(&mesh, sigma, n)
        .and_then(|fd| fd.enforce_reachability(DEFAULT_K_MAX))
        .map_err(value_err)?;
    let fd = Arc::new(fd);
    let space = Arc::new(SplineSpace::on_domain(&fd, n).map_err(value_err)?);
    let table = MomentTable::build(fd.clone(), n, default_facet_points(n));
    let f = |x: &[f64]| u.eval(x, 0.0).unwrap_or(f64::NAN);
    let (field, rep) = py.detach(|| {
        StabilizedOperator::new(space.clone(), &table, eps).and_then(|op| op.approximate_extension(f))
    })
    .map_err(runtime_err)?;
    let e = error_norms(&field, &fd, f);
    let d = PyDict::new(py);
    d.set_item("dofs", space.len())?;
    d.set_item("l2_domain", e.l2_domain)?;
    d.set_item("linf_domain", e.linf_domain)?;
    d.set_item("l2_fictitious", e.l2_fictitious)?;
    d.set_item("linf_fictitious", e.linf_fictitious)?;
    d.set_item("cg_iterations", rep.iterations)?;
    d.set_item("cg_residual", rep.residual)?;
    Ok(d)
}

/// Runs a convergence study like the command line tool. Returns the report
/// columns, rows and fitted orders (`None` where a fit was refused).
#[pyfunction]
#[pyo3(signature = (study, sigmas, geom="disk", n=3, eps=1.0, cstab=2.0, seed=42, out=None))]
#[allow(clippy::too_many_arguments)]
fn run_study<'py>(
    py: Python<'py>,
    study: &str,
    sigmas: Vec<f64>,
    geom: &str,
    n: usize,
    eps: f64,
    cstab: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = study.parse::<StudyKind>().map_err(value_err)?;
    let mut cfg = StudyConfig::new(kind, geom.parse().map_err(value_err)?).map_err(value_err)?;
    cfg.sigmas = sigmas;
    cfg.n = n;
    cfg.eps = eps;
    cfg.c_stab = cstab;
    cfg.seed = seed;
    cfg.out = out;
    cfg.validate().map_err(value_err)?;
    let rep = py.detach(|| run(&cfg)).map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("columns", rep.columns.clone())?;
    d.set_item("rows", rep.rows.clone())?;
    let orders = PyDict::new(py);
    for o in &rep.orders {
        orders.set_item(&o.quantity, o.order)?;
    }
    d.set_item("orders", orders)?;
    Ok(d)
}

#[pymodule]
fn pmreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(parse_expr, m)?)?;
    m.add_function(wrap_pyfunction!(eval_expr, m)?)?;
    m.add_function(wrap_pyfunction!(bspline, m)?)?;
    m.add_function(wrap_pyfunction!(lp_solve, m)?)?;
    m.add_function(wrap_pyfunction!(extend, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
