use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pmreg::fieldexpr::FieldExpr;
use pmreg::harness::{run, GeometrySpec, HarnessError, StudyConfig, StudyKind};
use pmreg::particles::ParticleLayout;

/// Convergence studies for particle regularization on unfitted grids.
#[derive(Debug, Parser)]
#[command(name = "pmreg", version)]
struct Cli {
    /// extend, condition, quadrature or advect
    study: StudyKind,
    /// disk, rect, interval or mesh:<path>
    #[arg(long, default_value = "disk")]
    geom: GeometrySpec,
    /// Spline order (degree n - 1)
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Comma-separated, strictly decreasing grid spacings
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 2.0)]
    cstab: f64,
    /// Particle spacing h = sigma / 2^k; defaults to the smallest h <= sigma^2
    #[arg(long)]
    k: Option<u32>,
    #[arg(long = "u0-expr")]
    u0_expr: Option<String>,
    #[arg(long = "vel-expr-x1")]
    vel_x1: Option<String>,
    #[arg(long = "vel-expr-x2")]
    vel_x2: Option<String>,
    /// Time step; must divide T
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "T", default_value_t = std::f64::consts::FRAC_PI_2)]
    t_end: f64,
    /// Boundary shifts in units of sigma for the condition study
    #[arg(long, value_delimiter = ',')]
    offsets: Option<Vec<f64>>,
    /// Remesh every this many time steps
    #[arg(long)]
    remesh_every: Option<usize>,
    /// One particle per rule node and basis function instead of merged interior nodes
    #[arg(long)]
    per_basis: bool,
    /// Directory for cached moment tables
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config(cli: Cli) -> Result<StudyConfig, HarnessError> {
    let mut cfg = StudyConfig::new(cli.study, cli.geom)?;
    cfg.n = cli.n;
    cfg.sigmas = cli.sigma;
    cfg.eps = cli.eps;
    cfg.c_stab = cli.cstab;
    cfg.k = cli.k;
    cfg.dt = cli.dt;
    cfg.t_end = cli.t_end;
    if let Some(u) = cli.u0_expr {
        cfg.u0 = FieldExpr::parse(&u)?;
    }
    cfg.velocity = match (cli.vel_x1, cli.vel_x2) {
        (None, None) => None,
        (Some(a), None) => Some(vec![FieldExpr::parse(&a)?]),
        (Some(a), Some(b)) => Some(vec![FieldExpr::parse(&a)?, FieldExpr::parse(&b)?]),
        (None, Some(_)) => return Err(HarnessError::Config("--vel-expr-x2 needs --vel-expr-x1".into())),
    };
    if let Some(o) = cli.offsets {
        cfg.offsets = o;
    }
    cfg.remesh_every = cli.remesh_every;
    if cli.per_basis {
        cfg.layout = ParticleLayout::PerBasis;
    }
    cfg.moment_cache = cli.cache;
    cfg.seed = cli.seed;
    cfg.out = cli.out;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = config(cli).and_then(|cfg| run(&cfg).map(|r| (cfg, r)));
    match result {
        Ok((cfg, report)) => {
            print!("{}", report.summary());
            if let Some(dir) = cfg.out {
                println!("wrote {}", dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pmreg: {e}");
            ExitCode::FAILURE
        }
    }
}
