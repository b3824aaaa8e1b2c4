//! Small dense LU with partial pivoting.

/// Row-major LU factors of a square matrix with pivot order.
#[derive(Debug, Clone)]
pub(crate) struct Lu {
    m: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// `None` when a pivot falls below `tol` times the largest entry.
    pub(crate) fn factor(a: &[f64], m: usize, tol: f64) -> Option<Self> {
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..m).collect();
        let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        if scale == 0.0 {
            return None;
        }
        for k in 0..m {
            let (p, pv) = (k..m)
                .map(|i| (i, lu[i * m + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pv <= tol * scale {
                return None;
            }
            if p != k {
                for j in 0..m {
                    lu.swap(k * m + j, p * m + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * m + k];
            for i in k + 1..m {
                let f = lu[i * m + k] / piv;
                lu[i * m + k] = f;
                if f != 0.0 {
                    for j in k + 1..m {
                        lu[i * m + j] -= f * lu[k * m + j];
                    }
                }
            }
        }
        Some(Self { m, lu, perm })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..m {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * m + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..m).rev() {
            let mut s = x[i];
            for j in i + 1..m {
                s -= self.lu[i * m + j] * x[j];
            }
            x[i] = s / self.lu[i * m + i];
        }
        x
    }

    /// Solve followed by `steps` rounds of iterative refinement against `a`.
    pub(crate) fn solve_refined(&self, a: &[f64], b: &[f64], steps: usize) -> Vec<f64> {
        let m = self.m;
        let mut x = self.solve(b);
        for _ in 0..steps {
            let r: Vec<f64> = (0..m)
                .map(|i| b[i] - (0..m).map(|j| a[i * m + j] * x[j]).sum::<f64>())
                .collect();
            let dx = self.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        x
    }
}
