//! Nonnegative quadrature rules exact for B-spline product moments, and the
//! particle fields built from them.
//!
//! Every basis function `b_λ` gets its own rule with nodes in `supp b_λ ∩ Ω`.
//! If the whole support is made of interior cells the rule is tensor Gauss.
//! Otherwise weights come from a linear program that matches all moments
//! `∫_Ω b_λ b_μ` while minimizing the total weight.

pub mod simplex;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dense::Lu;
use crate::gauss::{GaussRule, TriangleRule};
use crate::grid::{CellClass, FictitiousDomain};
use crate::moments::{fullspace_moment, MomentTable};
use crate::splines::{stencil, SplineField, SplineSpace, MAX_ORDER};
use crate::{box_iter, MultiIndex, Point, MAX_DIM};

pub use simplex::{lp_solve, LpError, LpSolution};

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("support of {0:?} contains cells that are not interior")]
    NotInterior(MultiIndex),
    #[error(
        "no rule for {lam:?} after {rounds} rounds ({constraints} constraints, cut measure {measure:e}): {reason}"
    )]
    ConstructionFailed {
        lam: MultiIndex,
        rounds: usize,
        constraints: usize,
        measure: f64,
        reason: String,
    },
    #[error("missing quadrature rules for {0:?}")]
    MissingRules(Vec<MultiIndex>),
    #[error("spline spaces of field and rules differ")]
    SpaceMismatch,
}

/// Quadrature rule owned by one basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub owner: MultiIndex,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Largest moment mismatch `|Σ w b_λ b_μ - ∫_Ω b_λ b_μ|` over all `μ`.
    pub residual: f64,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ_i w_i b_λ(x_i) b_μ(x_i)`.
    pub fn moment(&self, space: &SplineSpace, mu: &MultiIndex) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * space.basis(&self.owner, x, &[]) * space.basis(mu, x, &[]))
            .sum()
    }

    /// Residual against a list of `(μ, moment)` pairs.
    pub fn residual_against(&self, space: &SplineSpace, row: &[(MultiIndex, f64)]) -> f64 {
        row.iter()
            .map(|(mu, m)| (self.moment(space, mu) - m).abs())
            .fold(0.0, f64::max)
    }
}

/// Knobs of the cut-rule construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    /// Bound on `Σ w / (n h)^d`.
    pub c_stab: f64,
    /// Random points added per round; `None` means twice the constraint count.
    pub scatter_batch: Option<usize>,
    pub seed: u64,
    pub max_rounds: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            c_stab: 2.0,
            scatter_batch: None,
            seed: 42,
            max_rounds: 20,
        }
    }
}

/// Whether every cell in the support of `b_λ` is interior.
pub fn has_interior_support(lam: &MultiIndex, space: &SplineSpace, fd: &FictitiousDomain) -> bool {
    let (lo, hi) = space.support_cells(lam);
    box_iter(lo, hi, space.dim()).all(|c| fd.class_of(&c) == CellClass::Interior)
}

fn gauss_nodes_in_cell(cell: &MultiIndex, h: f64, dim: usize, g: &GaussRule, mut f: impl FnMut(Point, f64)) {
    let q = g.len();
    let mut hi = [1; MAX_DIM];
    hi[..dim].fill(q as i64);
    for idx in box_iter([0; MAX_DIM], hi, dim) {
        let mut x = [0.0; MAX_DIM];
        let mut w = 1.0;
        for k in 0..dim {
            let i = idx[k] as usize;
            x[k] = (cell[k] as f64 + g.nodes[i]) * h;
            w *= g.weights[i] * h;
        }
        f(x, w);
    }
}

/// Tensor Gauss rule with `n` points per axis on each cell of the support.
pub fn interior_rule(lam: &MultiIndex, space: &SplineSpace, fd: &FictitiousDomain) -> Result<QuadRule, QuadratureError> {
    if !has_interior_support(lam, space, fd) {
        return Err(QuadratureError::NotInterior(*lam));
    }
    let mut rule = interior_nodes(lam, space);
    let n = space.n() as i64;
    let dim = space.dim();
    let mut lo = *lam;
    let mut hi = *lam;
    for k in 0..dim {
        lo[k] -= n - 1;
        hi[k] += n;
    }
    let row: Vec<(MultiIndex, f64)> = box_iter(lo, hi, dim)
        .map(|mu| {
            let off: Vec<i64> = (0..dim).map(|k| mu[k] - lam[k]).collect();
            (mu, fullspace_moment(space.n(), &off, space.sigma()))
        })
        .collect();
    rule.residual = rule.residual_against(space, &row);
    Ok(rule)
}

fn interior_nodes(lam: &MultiIndex, space: &SplineSpace) -> QuadRule {
    let g = GaussRule::new(space.n());
    let (lo, hi) = space.support_cells(lam);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for c in box_iter(lo, hi, space.dim()) {
        gauss_nodes_in_cell(&c, space.sigma(), space.dim(), &g, |x, w| {
            nodes.push(x);
            weights.push(w);
        });
    }
    QuadRule {
        owner: *lam,
        nodes,
        weights,
        residual: 0.0,
    }
}

/// Per-axis B-spline values at `x` for the `2n - 1` indices overlapping `λ`,
/// stored at `μ_k - λ_k + n - 1`.
fn overlap_values(n: usize, h: f64, x: &Point, lam: &MultiIndex, dim: usize) -> [[f64; 2 * MAX_ORDER]; MAX_DIM] {
    let mut out = [[0.0; 2 * MAX_ORDER]; MAX_DIM];
    let mut st = [0.0; MAX_ORDER];
    for k in 0..dim {
        let s = x[k] / h;
        let c = s.floor();
        stencil(n, s - c, 0, &mut st);
        for (j, v) in st.iter().enumerate().take(n) {
            let o = c as i64 - j as i64 - lam[k] + n as i64 - 1;
            if (0..2 * n as i64 - 1).contains(&o) {
                out[k][o as usize] = *v;
            }
        }
    }
    out
}

fn stream_id(lam: &MultiIndex) -> u64 {
    // splitmix-style mixing of the multi-index
    let mut z = 0x9e37_79b9_7f4a_7c15u64;
    for &v in lam {
        z ^= (v as u64).wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Moment-exact nonnegative rule for a basis function whose support meets the
/// boundary, found by linear programming over candidate nodes.
pub fn cut_rule(
    lam: &MultiIndex,
    space: &SplineSpace,
    table: &MomentTable,
    cfg: &RuleConfig,
) -> Result<QuadRule, QuadratureError> {
    let fd = table.domain();
    let mesh = fd.mesh();
    let n = space.n();
    let h = space.sigma();
    let dim = space.dim();
    let vol = (n as f64 * h).powi(dim as i32);
    let row = table.row(lam);
    let m = row.len();
    let offs: Vec<[usize; MAX_DIM]> = row
        .iter()
        .map(|(mu, _)| {
            let mut o = [0; MAX_DIM];
            for k in 0..dim {
                o[k] = (mu[k] - lam[k] + n as i64 - 1) as usize;
            }
            o
        })
        .collect();
    let rhs: Vec<f64> = row.iter().map(|(_, v)| v / vol).collect();

    // deterministic candidates: Gauss nodes of interior cells and triangle
    // nodes of cut cells
    let (clo, chi) = space.support_cells(lam);
    let mut cand: Vec<Point> = Vec::new();
    // the positive product rule over the support, a fallback when the moments
    // are too small to be consistent to roundoff
    let mut direct: Option<Vec<(Point, f64)>> = Some(Vec::new());
    let mut cut_measure = 0.0;
    let g = GaussRule::new(n);
    let tri = TriangleRule::new(2 * n - 1);
    let line = GaussRule::new(n);
    for c in box_iter(clo, chi, dim) {
        match fd.class_of(&c) {
            CellClass::Interior => gauss_nodes_in_cell(&c, h, dim, &g, |x, w| {
                cand.push(x);
                if let Some(d) = direct.as_mut() {
                    d.push((x, w));
                }
            }),
            CellClass::Cut => {
                let clip = fd.clipped(&c).expect("cut cell clip");
                cut_measure += clip.measure;
                if dim == 1 {
                    if let Some((a, b)) = clip.interval() {
                        for (x, w) in line.on_interval(a, b) {
                            cand.push([x, 0.0, 0.0]);
                            if let Some(d) = direct.as_mut() {
                                d.push(([x, 0.0, 0.0], w));
                            }
                        }
                    }
                } else {
                    for t in clip.triangles() {
                        let area = crate::geometry::triangle_area(&t);
                        if area < 0.0 {
                            direct = None;
                        }
                        if area <= 0.0 {
                            continue;
                        }
                        for (x, w) in tri.on_triangle(t[0], t[1], t[2]) {
                            if mesh.contains(&x) {
                                cand.push([x[0], x[1], 0.0]);
                            }
                            if let Some(d) = direct.as_mut() {
                                d.push(([x[0], x[1], 0.0], w));
                            }
                        }
                    }
                }
            }
            CellClass::Outside => {}
        }
    }
    let batch = cfg.scatter_batch.unwrap_or(2 * m).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream_id(lam));
    let mut last_reason = String::from("no rounds run");
    let fail = |rounds, reason: String| QuadratureError::ConstructionFailed {
        lam: *lam,
        rounds,
        constraints: m,
        measure: cut_measure,
        reason,
    };
    for round in 1..=cfg.max_rounds.max(1) {
        let mut added = 0;
        let mut attempts = 0;
        while added < batch && attempts < 50 * batch {
            attempts += 1;
            let mut x = [0.0; MAX_DIM];
            for k in 0..dim {
                x[k] = (lam[k] as f64 + n as f64 * rng.random::<f64>()) * h;
            }
            let cell = fd.grid().locate(&x[..dim]);
            if fd.class_of(&cell).in_domain() && mesh.contains(&x[..dim]) {
                cand.push(x);
                added += 1;
            }
        }
        let nc = cand.len();
        let mut a = vec![0.0; m * nc];
        for (i, x) in cand.iter().enumerate() {
            let v = overlap_values(n, h, x, lam, dim);
            let bl: f64 = (0..dim).map(|k| v[k][n - 1]).product();
            if bl == 0.0 {
                continue;
            }
            for (r, o) in offs.iter().enumerate() {
                let mut p = bl;
                for k in 0..dim {
                    p *= v[k][o[k]];
                }
                a[r * nc + i] = p;
            }
        }
        // drop rows that vanish at every candidate and candidates where b_λ
        // vanishes, then scale each row to unit maximum
        let amax = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let keep: Vec<usize> = (0..m)
            .filter(|&r| a[r * nc..(r + 1) * nc].iter().any(|v| v.abs() > 1e-12 * amax))
            .collect();
        let cols: Vec<usize> = (0..nc).filter(|&i| keep.iter().any(|&r| a[r * nc + i] != 0.0)).collect();
        let ncols = cols.len();
        let mut ak = Vec::with_capacity(keep.len() * ncols);
        let mut bk = Vec::with_capacity(keep.len());
        for &r in &keep {
            let row_a = &a[r * nc..(r + 1) * nc];
            let s = cols.iter().fold(0.0f64, |s, &i| s.max(row_a[i].abs()));
            ak.extend(cols.iter().map(|&i| row_a[i] / s));
            bk.push(rhs[r] / s);
        }
        let sol = match lp_solve(&vec![1.0; ncols], &ak, &bk) {
            Ok(s) => s,
            Err(e) => {
                last_reason = e.to_string();
                debug!("rule {lam:?} round {round}: {e}");
                continue;
            }
        };
        if sol.objective > cfg.c_stab * (1.0 + 1e-12) {
            last_reason = format!("weight sum {:.3} (nh)^d exceeds bound", sol.objective);
            continue;
        }
        let mut w = vec![0.0; nc];
        for (j, v) in polish(&sol, &ak, &bk, ncols).into_iter().enumerate() {
            w[cols[j]] = v * vol;
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (i, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                nodes.push(cand[i]);
                weights.push(wi);
            }
        }
        let rule_residual = (0..m)
            .map(|r| {
                let s: f64 = (0..nc).map(|i| a[r * nc + i] * w[i]).sum();
                (s - row[r].1).abs()
            })
            .fold(0.0, f64::max);
        if rule_residual > 1e-10 * vol {
            last_reason = format!("moment residual {rule_residual:e}");
            continue;
        }
        if weights.iter().sum::<f64>() > cfg.c_stab * vol {
            last_reason = "weight sum exceeds bound after polishing".into();
            continue;
        }
        return Ok(QuadRule {
            owner: *lam,
            nodes,
            weights,
            residual: rule_residual,
        });
    }
    if let Some(rule) = direct.and_then(|d| direct_rule(lam, n, h, dim, &offs, &row, d)) {
        if rule.residual <= 1e-10 * vol && rule.weights.iter().sum::<f64>() <= cfg.c_stab * vol {
            debug!("rule {lam:?}: linear program failed ({last_reason}), using the product rule");
            return Ok(rule);
        }
    }
    Err(fail(cfg.max_rounds, last_reason))
}

/// The product rule over the support as it stands. Its weights integrate
/// `b_λ b_μ` exactly, so only nodes where `b_λ` vanishes are dropped.
fn direct_rule(
    lam: &MultiIndex,
    n: usize,
    h: f64,
    dim: usize,
    offs: &[[usize; MAX_DIM]],
    row: &[(MultiIndex, f64)],
    pts: Vec<(Point, f64)>,
) -> Option<QuadRule> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut sums = vec![0.0; offs.len()];
    for (x, w) in pts {
        let v = overlap_values(n, h, &x, lam, dim);
        let bl: f64 = (0..dim).map(|k| v[k][n - 1]).product();
        if bl == 0.0 || w <= 0.0 {
            continue;
        }
        for (s, o) in sums.iter_mut().zip(offs) {
            let mut p = bl * w;
            for k in 0..dim {
                p *= v[k][o[k]];
            }
            *s += p;
        }
        nodes.push(x);
        weights.push(w);
    }
    if nodes.is_empty() {
        return None;
    }
    let residual = sums.iter().zip(row).map(|(s, (_, m))| (s - m).abs()).fold(0.0, f64::max);
    Some(QuadRule {
        owner: *lam,
        nodes,
        weights,
        residual,
    })
}

/// Re-solves the optimal basis by LU with refinement so the moment equations
/// hold to roundoff; tiny negative values are clamped.
fn polish(sol: &LpSolution, a: &[f64], b: &[f64], nc: usize) -> Vec<f64> {
    let mut x = sol.x.clone();
    let rows: Vec<usize> = (0..b.len()).filter(|r| !sol.redundant_rows.contains(r)).collect();
    let k = sol.basis.len();
    if k == 0 || k != rows.len() {
        return x;
    }
    let mut bm = vec![0.0; k * k];
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in sol.basis.iter().enumerate() {
            bm[i * k + j] = a[r * nc + c];
        }
    }
    let rhs: Vec<f64> = rows.iter().map(|&r| b[r]).collect();
    let Some(lu) = Lu::factor(&bm, k, 1e-15) else { return x };
    let xb = lu.solve_refined(&bm, &rhs, 2);
    let scale = xb.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if xb.iter().any(|v| *v < -1e-9 * scale) {
        return x;
    }
    for (j, &c) in sol.basis.iter().enumerate() {
        x[c] = xb[j].max(0.0);
    }
    x
}

/// Rules for every basis function of a space. Cut rules are built eagerly;
/// interior rules are generated on request.
#[derive(Debug, Clone)]
pub struct RuleSet {
    space: Arc<SplineSpace>,
    fd: Arc<FictitiousDomain>,
    interior: Vec<bool>,
    cut: BTreeMap<usize, QuadRule>,
    failures: Vec<(MultiIndex, String)>,
    config: RuleConfig,
}

impl RuleSet {
    pub fn build(space: Arc<SplineSpace>, table: &MomentTable, config: RuleConfig) -> Self {
        let fd = table.domain().clone();
        let interior: Vec<bool> = space
            .indices()
            .iter()
            .map(|l| has_interior_support(l, &space, &fd))
            .collect();
        let mut cut = BTreeMap::new();
        let mut failures = Vec::new();
        for (id, lam) in space.indices().iter().enumerate() {
            if interior[id] {
                continue;
            }
            match cut_rule(lam, &space, table, &config) {
                Ok(r) => {
                    cut.insert(id, r);
                }
                Err(e) => {
                    warn!("{e}");
                    failures.push((*lam, e.to_string()));
                }
            }
        }
        Self {
            space,
            fd,
            interior,
            cut,
            failures,
            config,
        }
    }

    pub fn space(&self) -> &Arc<SplineSpace> {
        &self.space
    }

    pub fn domain(&self) -> &Arc<FictitiousDomain> {
        &self.fd
    }

    pub fn config(&self) -> &RuleConfig {
        &self.config
    }

    pub fn is_interior(&self, id: usize) -> bool {
        self.interior[id]
    }

    pub fn failures(&self) -> &[(MultiIndex, String)] {
        &self.failures
    }

    /// Rule of basis function `id`, or `None` when its construction failed.
    pub fn rule(&self, id: usize) -> Option<Cow<'_, QuadRule>> {
        if self.interior[id] {
            Some(Cow::Owned(interior_nodes(&self.space.index(id), &self.space)))
        } else {
            self.cut.get(&id).map(Cow::Borrowed)
        }
    }

    pub fn cut_rules(&self) -> impl Iterator<Item = (usize, &QuadRule)> {
        self.cut.iter().map(|(k, v)| (*k, v))
    }

    /// CSV `lambda,x1[,x2],w`; `lambda` is the dense index of the owner.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.space.dim();
        let xs: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "lambda,{},w", xs.join(","))?;
        for id in 0..self.space.len() {
            let Some(rule) = self.rule(id) else { continue };
            for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                let coords: Vec<String> = x[..dim].iter().map(|v| format!("{v:.17e}")).collect();
                writeln!(w, "{id},{},{wt:.17e}", coords.join(","))?;
            }
        }
        Ok(())
    }
}

/// Origin of a particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    /// Dense index of the owning basis function, or [`Provenance::MERGED`].
    pub lambda: u32,
    pub node: u32,
}

impl Provenance {
    /// Marks particles that sum the contributions of several basis functions.
    pub const MERGED: u32 = u32::MAX;
}

/// Weighted point masses `Σ U_i δ_{x_i}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleField {
    pub dim: usize,
    /// Flat coordinates, `dim` per particle.
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub provenance: Vec<Provenance>,
    /// Set by advection when a particle leaves the closed domain.
    pub escaped: Vec<bool>,
}

impl ParticleField {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn push(&mut self, x: &[f64], weight: f64, provenance: Provenance) {
        self.positions.extend_from_slice(&x[..self.dim]);
        self.weights.push(weight);
        self.provenance.push(provenance);
        self.escaped.push(false);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// `Σ_i U_i φ(x_i)`.
    pub fn pair(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * phi(self.position(i))).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// CSV `x1[,x2],U`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let xs: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},U", xs.join(","))?;
        for i in 0..self.len() {
            let coords: Vec<String> = self.position(i).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{},{:.17e}", coords.join(","), self.weights[i])?;
        }
        Ok(())
    }
}

fn check_space(field: &SplineField, rules: &RuleSet) -> Result<(), QuadratureError> {
    if !Arc::ptr_eq(field.space(), &rules.space) && **field.space() != *rules.space {
        return Err(QuadratureError::SpaceMismatch);
    }
    if !rules.failures.is_empty() {
        return Err(QuadratureError::MissingRules(rules.failures.iter().map(|f| f.0).collect()));
    }
    Ok(())
}

/// One particle per rule node and basis function, `U = w c_λ b_λ(x)`.
pub fn particles_from_spline(field: &SplineField, rules: &RuleSet) -> Result<ParticleField, QuadratureError> {
    check_space(field, rules)?;
    let space = field.space();
    let mut out = ParticleField::new(space.dim());
    for (id, &c) in field.coeffs().iter().enumerate() {
        let rule = rules.rule(id).expect("failures checked");
        let lam = space.index(id);
        for (node, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let u = w * c * space.basis(&lam, x, &[]);
            out.push(
                x,
                u,
                Provenance {
                    lambda: id as u32,
                    node: node as u32,
                },
            );
        }
    }
    Ok(out)
}

/// Same measure as [`particles_from_spline`], but interior Gauss nodes shared
/// by several basis functions become a single particle carrying the summed
/// weight. Cut rules are kept per basis function.
pub fn particles_from_spline_merged(field: &SplineField, rules: &RuleSet) -> Result<ParticleField, QuadratureError> {
    check_space(field, rules)?;
    let space = field.space();
    let dim = space.dim();
    let mut out = ParticleField::new(dim);
    let g = GaussRule::new(space.n());
    let mut node = 0u32;
    for cell in rules.fd.interior_cells() {
        gauss_nodes_in_cell(cell, space.sigma(), dim, &g, |x, w| {
            let mut s = 0.0;
            let mut any = false;
            space.for_each_active(&x[..dim], |id, b| {
                if rules.interior[id] {
                    s += field.coeffs()[id] * b;
                    any = true;
                }
            });
            if any {
                out.push(
                    &x,
                    w * s,
                    Provenance {
                        lambda: Provenance::MERGED,
                        node,
                    },
                );
                node += 1;
            }
        });
    }
    for (id, rule) in rules.cut_rules() {
        let c = field.coeffs()[id];
        let lam = space.index(id);
        for (k, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            out.push(
                x,
                w * c * space.basis(&lam, x, &[]),
                Provenance {
                    lambda: id as u32,
                    node: k as u32,
                },
            );
        }
    }
    Ok(out)
}
