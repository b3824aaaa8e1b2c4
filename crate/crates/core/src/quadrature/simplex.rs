//! Dense two-phase primal simplex.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one objective {0:e})")]
    Infeasible(f64),
    #[error("linear program is unbounded in column {0}")]
    Unbounded(usize),
    #[error("simplex hit the iteration cap of {0}")]
    MaxIterations(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic columns of the original problem, one per non-redundant row.
    pub basis: Vec<usize>,
    /// Rows found linearly dependent on the others.
    pub redundant_rows: Vec<usize>,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;
/// Consecutive degenerate pivots tolerated before falling back to Bland's rule.
const DEGENERATE_RUN: usize = 50;

struct Tableau {
    rows: usize,
    cols: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        self.t[r * w + c] = 1.0;
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[r * w + j];
                }
                self.t[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex on the objective row, entering only `allowed` columns.
    /// Prices by most negative reduced cost and switches to Bland's rule for
    /// good after a run of degenerate pivots, which rules out cycling.
    fn optimize(&mut self, allowed: usize, max_iter: usize, iters: &mut usize) -> Result<(), LpError> {
        let obj = self.rows;
        let mut degenerate = 0;
        let mut bland = false;
        loop {
            let entering = if bland {
                (0..allowed).find(|&j| self.at(obj, j) < -COST_TOL)
            } else {
                (0..allowed)
                    .filter(|&j| self.at(obj, j) < -COST_TOL)
                    .min_by(|&a, &b| self.at(obj, a).total_cmp(&self.at(obj, b)))
            };
            let Some(c) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-14 * br.abs().max(1e-300);
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = best else {
                return Err(LpError::Unbounded(c));
            };
            if ratio == 0.0 {
                degenerate += 1;
                bland |= degenerate > DEGENERATE_RUN;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
            *iters += 1;
            if *iters >= max_iter {
                return Err(LpError::MaxIterations(max_iter));
            }
        }
    }
}

/// Minimizes `costs · x` subject to `a x = b`, `x >= 0`, with `a` row-major of
/// size `b.len() x costs.len()`.
pub fn lp_solve(costs: &[f64], a: &[f64], b: &[f64]) -> Result<LpSolution, LpError> {
    let m = b.len();
    let n = costs.len();
    assert_eq!(a.len(), m * n, "constraint matrix shape");
    let cols = n + m;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = s * a[i * n + j];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + cols] = s * b[i];
    }
    // phase one: minimize the sum of artificials
    for i in 0..m {
        for j in 0..n {
            t[m * w + j] -= t[i * w + j];
        }
        t[m * w + cols] -= t[i * w + cols];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (n..n + m).collect(),
    };
    let max_iter = 50 * (m + n) + 100;
    let mut iters = 0;
    tab.optimize(n, max_iter, &mut iters)?;
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let infeas = -tab.rhs(m);
    if infeas > 1e-10 * scale {
        return Err(LpError::Infeasible(infeas));
    }
    // drive remaining artificials out of the basis
    let mut redundant = Vec::new();
    for i in 0..m {
        if tab.basis[i] < n {
            continue;
        }
        let row_max = (0..n).fold(0.0f64, |s, j| s.max(tab.at(i, j).abs()));
        match (0..n).find(|&j| tab.at(i, j).abs() > PIVOT_TOL.max(1e-9 * row_max)) {
            Some(j) if row_max > PIVOT_TOL => tab.pivot(i, j),
            _ => redundant.push(i),
        }
    }
    // phase two objective
    for j in 0..w {
        tab.t[m * w + j] = 0.0;
    }
    for j in 0..n {
        tab.t[m * w + j] = costs[j];
    }
    for i in 0..m {
        let cb = if tab.basis[i] < n { costs[tab.basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..w {
                tab.t[m * w + j] -= cb * tab.t[i * w + j];
            }
        }
    }
    tab.optimize(n, max_iter, &mut iters)?;
    let mut x = vec![0.0; n];
    let mut basis = Vec::new();
    for i in 0..m {
        let j = tab.basis[i];
        if j < n {
            x[j] = tab.rhs(i).max(0.0);
            basis.push(j);
        }
    }
    let objective = costs.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        basis,
        redundant_rows: redundant,
        iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_constraint() {
        let s = lp_solve(&[1.0, 1.0], &[1.0, 1.0], &[1.0]).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_sum_is_infeasible() {
        assert!(matches!(lp_solve(&[1.0, 1.0], &[1.0, 1.0], &[-1.0]), Err(LpError::Infeasible(_))));
    }

    #[test]
    fn picks_cheaper_vertex() {
        // x0 + x1 + x2 = 2, x0 - x1 = 0, costs favour x2
        let s = lp_solve(&[1.0, 1.0, 0.5], &[1.0, 1.0, 1.0, 1.0, -1.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-14);
        assert!((s.x[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn unbounded_direction_is_reported() {
        // x0 - x1 = 1 with cost -1 on x0
        let r = lp_solve(&[-1.0, 0.0], &[1.0, -1.0], &[1.0]);
        assert!(matches!(r, Err(LpError::Unbounded(_))));
    }

    #[test]
    fn duplicated_row_is_redundant() {
        let s = lp_solve(&[1.0, 2.0], &[1.0, 1.0, 1.0, 1.0], &[3.0, 3.0]).unwrap();
        assert_eq!(s.redundant_rows.len(), 1);
        assert!((s.objective - 3.0).abs() < 1e-14);
    }
}
