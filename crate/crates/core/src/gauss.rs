//! Gauss–Legendre rules on intervals, boxes and triangles.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `q`-point rule, exact for polynomials of degree `2q - 1`.
    pub fn new(q: usize) -> Self {
        assert!(q >= 1, "Gauss rule needs at least one point");
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        let m = q.div_ceil(2);
        for i in 0..m {
            // Newton iteration on P_q starting from the Chebyshev-like guess.
            let mut x = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(q, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(q, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1,1] -> [0,1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[q - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[q - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (a + len * t, w * len))
    }
}

fn legendre(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = q as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Collapsed (Duffy) tensor rule on a triangle.
///
/// With `q` points per direction the rule is exact for polynomials of total
/// degree `2q - 2`; all weights are positive and all nodes interior.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Barycentric-free reference nodes on the unit triangle `(0,0),(1,0),(0,1)`.
    pub nodes: Vec<[f64; 2]>,
    /// Weights summing to 1/2.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn new(q: usize) -> Self {
        let g = GaussRule::new(q);
        let mut nodes = Vec::with_capacity(q * q);
        let mut weights = Vec::with_capacity(q * q);
        for (&u, &wu) in g.nodes.iter().zip(&g.weights) {
            for (&v, &wv) in g.nodes.iter().zip(&g.weights) {
                // (u, v) in the square -> (u, (1-u) v) in the triangle
                nodes.push([u, (1.0 - u) * v]);
                weights.push(wu * wv * (1.0 - u));
            }
        }
        Self { nodes, weights }
    }

    /// Nodes and weights on the triangle `(a, b, c)`; weights carry the signed area.
    pub fn on_triangle<'a>(
        &'a self,
        a: [f64; 2],
        b: [f64; 2],
        c: [f64; 2],
    ) -> impl Iterator<Item = ([f64; 2], f64)> + 'a {
        let e1 = [b[0] - a[0], b[1] - a[1]];
        let e2 = [c[0] - a[0], c[1] - a[1]];
        let jac = e1[0] * e2[1] - e1[1] * e2[0];
        self.nodes.iter().zip(&self.weights).map(move |(p, &w)| {
            (
                [a[0] + e1[0] * p[0] + e2[0] * p[1], a[1] + e1[1] * p[0] + e2[1] * p[1]],
                w * jac,
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials_exactly() {
        for q in 1..=8 {
            let g = GaussRule::new(q);
            for k in 0..(2 * q) {
                let s: f64 = g
                    .nodes
                    .iter()
                    .zip(&g.weights)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                assert!((s - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "q={q} k={k} s={s}");
            }
        }
    }

    #[test]
    fn gauss_nodes_are_sorted_and_interior() {
        let g = GaussRule::new(7);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes[0] > 0.0 && g.nodes[6] < 1.0);
        assert!((g.nodes[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_rule_degree() {
        // int_T x^a y^b = a! b! / (a+b+2)!
        fn fact(n: u32) -> f64 {
            (1..=n).map(|k| k as f64).product()
        }
        for q in 1..=6usize {
            let t = TriangleRule::new(q);
            let deg = 2 * q - 2;
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let s: f64 = t
                        .nodes
                        .iter()
                        .zip(&t.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = fact(a as u32) * fact(b as u32) / fact((a + b + 2) as u32);
                    assert!((s - exact).abs() < 1e-14, "q={q} a={a} b={b}");
                }
            }
        }
    }
}
