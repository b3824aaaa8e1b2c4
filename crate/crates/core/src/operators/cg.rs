//! Jacobi-preconditioned conjugate gradients.

use std::io::Write;

use super::csr::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration, starting with the initial one.
    pub history: Vec<f64>,
}

impl SolveReport {
    /// CSV `iteration,residual`.
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,residual")?;
        for (i, r) in self.history.iter().enumerate() {
            writeln!(w, "{i},{r:.6e}")?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` from `x = 0`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, SolveReport) {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diag()
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    let mut report = SolveReport::default();
    if bnorm == 0.0 {
        report.converged = true;
        report.history.push(0.0);
        return (x, report);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    report.history.push(rel);
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // the operator is not positive definite along p
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        report.iterations = it;
        report.history.push(rel);
        if rel <= tol {
            report.converged = true;
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // report the true residual, not the recursively updated one
    let ax = a.apply(&x);
    let true_rel = ax.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt() / bnorm;
    report.residual = true_rel;
    report.converged = report.converged && true_rel <= tol.max(rel) * 10.0;
    (x, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n as u32 {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let x0: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.apply(&x0);
        let (x, rep) = conjugate_gradient(&a, &b, 1e-12, 500);
        assert!(rep.converged);
        assert!(x.iter().zip(&x0).all(|(u, v)| (u - v).abs() < 1e-9));
        let mut log = Vec::new();
        rep.write_log(&mut log).unwrap();
        assert!(String::from_utf8(log).unwrap().starts_with("iteration,residual\n0,1.0"));
    }
}
