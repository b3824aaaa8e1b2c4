//! Convergence studies behind the `pmreg` command line tool.
//!
//! Each study runs a list of grid spacings, collects one row of numbers per
//! level and fits convergence orders. Results go to `report.csv`,
//! `orders.csv` and `manifest.txt` in the output directory.

mod fit;
mod studies;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::fieldexpr::{EvalError, FieldExpr, ParseError};
use crate::geometry::{BoundaryMesh, GeometryError};
use crate::grid::GridError;
use crate::moments::MomentError;
use crate::operators::OperatorError;
use crate::particles::{ParticleError, ParticleLayout};
use crate::splines::SplineError;

pub use fit::{fit_order, OrderFit, MIN_LEVELS, MIN_R2};
pub use studies::{run, run_advect, run_condition, run_extend, run_quadrature};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
    #[error("expression: {0}")]
    Parse(#[from] ParseError),
    #[error("expression: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Extend,
    Condition,
    Quadrature,
    Advect,
}

impl StudyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Extend => "extend",
            Self::Condition => "condition",
            Self::Quadrature => "quadrature",
            Self::Advect => "advect",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Ok(match s {
            "extend" => Self::Extend,
            "condition" => Self::Condition,
            "quadrature" => Self::Quadrature,
            "advect" => Self::Advect,
            _ => return Err(HarnessError::Config(format!("unknown study '{s}'"))),
        })
    }
}

/// Sides of the builtin disk polygon at the coarsest level.
pub const DISK_SIDES: usize = 64;

/// Builtin or file-based geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    /// Unit disk around the origin as a regular polygon.
    Disk,
    /// `[-0.95, 0.95] x [-0.7, 0.7]`.
    Rect,
    /// `[-0.97, 0.93]`.
    Interval,
    Mesh(PathBuf),
}

impl GeometrySpec {
    pub fn build(&self, disk_sides: usize) -> Result<BoundaryMesh, HarnessError> {
        Ok(match self {
            Self::Disk => BoundaryMesh::disk([0.0, 0.0], 1.0, disk_sides)?,
            Self::Rect => BoundaryMesh::rect([-0.95, -0.7], [0.95, 0.7])?,
            Self::Interval => BoundaryMesh::interval(-0.97, 0.93)?,
            Self::Mesh(p) => BoundaryMesh::from_file(p)?,
        })
    }

    pub fn dim(&self) -> Result<usize, HarnessError> {
        Ok(match self {
            Self::Interval => 1,
            Self::Disk | Self::Rect => 2,
            Self::Mesh(_) => self.build(DISK_SIDES)?.dim(),
        })
    }
}

impl fmt::Display for GeometrySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Disk => f.write_str("disk"),
            Self::Rect => f.write_str("rect"),
            Self::Interval => f.write_str("interval"),
            Self::Mesh(p) => write!(f, "mesh:{}", p.display()),
        }
    }
}

impl FromStr for GeometrySpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Ok(match s {
            "disk" => Self::Disk,
            "rect" => Self::Rect,
            "interval" => Self::Interval,
            _ => match s.strip_prefix("mesh:") {
                Some(p) if !p.is_empty() => Self::Mesh(PathBuf::from(p)),
                _ => return Err(HarnessError::Config(format!("unknown geometry '{s}'"))),
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub geometry: GeometrySpec,
    /// Spline order (degree `n - 1`).
    pub n: usize,
    /// Grid spacings, strictly decreasing. The quadrature study reads them as `h`.
    pub sigmas: Vec<f64>,
    pub eps: f64,
    pub c_stab: f64,
    /// Particle spacing `h = σ / 2^k`; `None` picks the smallest `h <= σ²`.
    pub k: Option<u32>,
    /// Time step; `None` picks `T / ceil(2T / σ)`.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub u0: FieldExpr,
    /// Velocity components; `None` is the unit rotation about the origin.
    pub velocity: Option<Vec<FieldExpr>>,
    /// Test functions for functional errors.
    pub test_functions: Vec<FieldExpr>,
    /// Boundary shifts for the condition study, in units of `σ`.
    pub offsets: Vec<f64>,
    pub remesh_every: Option<usize>,
    pub layout: ParticleLayout,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub moment_cache: Option<PathBuf>,
}

/// Default initial data per study and dimension.
pub fn default_u0(kind: StudyKind, dim: usize) -> &'static str {
    match (kind, dim) {
        (StudyKind::Advect, _) => "exp(-((x1 - 0.35)^2 + x2^2) / 0.1)",
        (_, 1) => "exp(x1)",
        _ => "exp(x1 + x2/2)",
    }
}

impl StudyConfig {
    /// Defaults for `kind` on `geometry`.
    pub fn new(kind: StudyKind, geometry: GeometrySpec) -> Result<Self, HarnessError> {
        let dim = geometry.dim()?;
        let test_functions = if dim == 1 {
            vec!["exp(x1)", "sin(3*x1)"]
        } else {
            vec!["exp(x1 + x2)", "sin(x1)*sin(x2)"]
        };
        Ok(Self {
            kind,
            geometry,
            n: 3,
            sigmas: vec![0.2, 0.1, 0.05],
            eps: 1.0,
            c_stab: 2.0,
            k: None,
            dt: None,
            t_end: std::f64::consts::FRAC_PI_2,
            u0: FieldExpr::parse(default_u0(kind, dim))?,
            velocity: None,
            test_functions: test_functions.into_iter().map(FieldExpr::parse).collect::<Result<_, _>>()?,
            offsets: vec![0.0, 1e-2, 1e-4, 1e-6],
            remesh_every: None,
            layout: ParticleLayout::Merged,
            seed: 42,
            out: None,
            moment_cache: None,
        })
    }

    pub fn validate(&self) -> Result<usize, HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let dim = self.geometry.dim()?;
        if !(1..=crate::splines::MAX_ORDER).contains(&self.n) {
            return bad(format!("order n = {} out of range", self.n));
        }
        if self.kind == StudyKind::Advect && self.n <= dim {
            return bad(format!("the pipeline needs n > d, got n = {} in dimension {dim}", self.n));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s > 0.0)) {
            return bad("spacings must be positive".into());
        }
        if self.sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return bad("spacings must be strictly decreasing".into());
        }
        if !(self.eps >= 0.0) || !(self.c_stab >= 1.0) {
            return bad("need eps >= 0 and cstab >= 1".into());
        }
        if !(self.t_end >= 0.0) {
            return bad("final time must be nonnegative".into());
        }
        for e in std::iter::once(&self.u0).chain(&self.test_functions) {
            if e.arity() > dim {
                return bad(format!("expression '{e}' uses more than {dim} coordinates"));
            }
        }
        match &self.velocity {
            Some(v) if v.len() != dim => return bad(format!("velocity needs {dim} components, got {}", v.len())),
            None if self.kind == StudyKind::Advect && dim != 2 => {
                return bad("the default rotation needs a 2D geometry; pass velocity expressions".into())
            }
            _ => {}
        }
        Ok(dim)
    }

    /// `key = value` lines echoing the configuration.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(|s| format!("{s}")).collect::<Vec<_>>().join(",");
        let opt = |o: Option<String>| o.unwrap_or_else(|| "auto".into());
        vec![
            ("study".into(), self.kind.to_string()),
            ("geometry".into(), self.geometry.to_string()),
            ("n".into(), self.n.to_string()),
            ("sigma".into(), list(&self.sigmas)),
            ("eps".into(), self.eps.to_string()),
            ("cstab".into(), self.c_stab.to_string()),
            ("k".into(), opt(self.k.map(|k| k.to_string()))),
            ("dt".into(), opt(self.dt.map(|d| d.to_string()))),
            ("T".into(), self.t_end.to_string()),
            ("u0".into(), self.u0.to_string()),
            (
                "velocity".into(),
                self.velocity.as_ref().map_or("rotation(omega=1)".into(), |v| {
                    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
                }),
            ),
            (
                "test_functions".into(),
                self.test_functions.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "),
            ),
            ("offsets".into(), list(&self.offsets)),
            ("remesh_every".into(), self.remesh_every.map_or("never".into(), |m| m.to_string())),
            ("layout".into(), format!("{:?}", self.layout).to_lowercase()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// Rows of numbers per level plus fitted orders.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub orders: Vec<OrderFit>,
    /// Free-form remarks per level, such as mesh hashes and warnings.
    pub notes: Vec<String>,
}

impl StudyReport {
    pub fn new(kind: StudyKind, seed: u64, columns: &[&str]) -> Self {
        Self {
            kind,
            seed,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            orders: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// Values of one column across levels.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Fitted order of `quantity`, if one was accepted.
    pub fn order(&self, quantity: &str) -> Option<&OrderFit> {
        self.orders.iter().find(|o| o.quantity == quantity)
    }

    /// Fits `quantity` against the column `against`.
    pub fn fit(&mut self, against: &str, quantity: &str) {
        let (Some(h), Some(e)) = (self.column(against), self.column(quantity)) else {
            return;
        };
        let mut f = fit_order(&h, &e);
        f.quantity = quantity.to_string();
        self.orders.push(f);
    }

    /// `report.csv`: header `seed,<columns>`, one row per level.
    pub fn write_report_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "seed,{}", self.columns.join(","))?;
        for r in &self.rows {
            let vals: Vec<String> = r.iter().map(|&v| csv_number(v)).collect();
            writeln!(w, "{},{}", self.seed, vals.join(","))?;
        }
        Ok(())
    }

    /// `orders.csv`: refused fits leave the order empty and give the reason.
    pub fn write_orders_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "quantity,order,r2,levels,status")?;
        for o in &self.orders {
            let order = o.order.map_or(String::new(), |v| format!("{v:.4}"));
            let status = o.refusal.as_deref().unwrap_or("ok");
            writeln!(w, "{},{order},{:.6},{},{status}", o.quantity, o.r2, o.levels)?;
        }
        Ok(())
    }

    /// Human-readable summary: fitted orders, or raw errors where refused.
    pub fn summary(&self) -> String {
        let mut s = format!("{} study, {} levels\n", self.kind, self.rows.len());
        for o in &self.orders {
            match o.order {
                Some(v) => s += &format!("  {:<16} order {v:.3} (R^2 {:.4})\n", o.quantity, o.r2),
                None => {
                    let raw = self
                        .column(&o.quantity)
                        .unwrap_or_default()
                        .iter()
                        .map(|v| format!("{v:.3e}"))
                        .collect::<Vec<_>>()
                        .join(" ");
                    s += &format!(
                        "  {:<16} no order ({}); raw: {raw}\n",
                        o.quantity,
                        o.refusal.as_deref().unwrap_or("refused")
                    );
                }
            }
        }
        s
    }

    /// Writes `report.csv`, `orders.csv` and `manifest.txt` into `dir`.
    pub fn write_all(&self, dir: &Path, cfg: &StudyConfig, artifacts: &[String]) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        self.write_report_csv(BufWriter::new(File::create(dir.join("report.csv"))?))?;
        self.write_orders_csv(BufWriter::new(File::create(dir.join("orders.csv"))?))?;
        let mut w = BufWriter::new(File::create(dir.join("manifest.txt"))?);
        writeln!(w, "pmreg {}", env!("CARGO_PKG_VERSION"))?;
        for (k, v) in cfg.echo() {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "levels = {}", self.rows.len())?;
        for n in &self.notes {
            writeln!(w, "note = {n}")?;
        }
        writeln!(w, "file = report.csv")?;
        writeln!(w, "file = orders.csv")?;
        for a in artifacts {
            writeln!(w, "file = {a}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Counts print as integers, everything else in round-trip exponent form.
fn csv_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        assert_eq!("disk".parse::<GeometrySpec>().unwrap(), GeometrySpec::Disk);
        assert_eq!(
            "mesh:a/b.txt".parse::<GeometrySpec>().unwrap(),
            GeometrySpec::Mesh(PathBuf::from("a/b.txt"))
        );
        assert!("mesh:".parse::<GeometrySpec>().is_err());
        assert_eq!("advect".parse::<StudyKind>().unwrap(), StudyKind::Advect);
        assert!("nope".parse::<StudyKind>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = StudyConfig::new(StudyKind::Extend, GeometrySpec::Disk).unwrap();
        assert_eq!(c.validate().unwrap(), 2);
        c.sigmas = vec![0.1, 0.2];
        assert!(c.validate().is_err());
        let mut c = StudyConfig::new(StudyKind::Advect, GeometrySpec::Disk).unwrap();
        c.n = 2;
        assert!(c.validate().is_err());
        let c = StudyConfig::new(StudyKind::Extend, GeometrySpec::Interval).unwrap();
        assert_eq!(c.validate().unwrap(), 1);
        let mut c = StudyConfig::new(StudyKind::Extend, GeometrySpec::Interval).unwrap();
        c.u0 = FieldExpr::parse("x2").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn report_files() {
        let mut r = StudyReport::new(StudyKind::Extend, 7, &["sigma", "err"]);
        for s in [0.2, 0.1, 0.05] {
            r.push_row(vec![s, s * s * s]);
        }
        r.fit("sigma", "err");
        assert!((r.order("err").unwrap().order.unwrap() - 3.0).abs() < 1e-12);
        let mut buf = Vec::new();
        r.write_report_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,sigma,err\n7,2e-1,8.000000000000002e-3\n"));
        let mut buf = Vec::new();
        r.write_orders_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("err,3.0000,1.000000,3,ok"));
        assert!(r.summary().contains("order 3.000"));
    }
}
