//! One-dimensional polynomial machinery on the reference interval `[-1, 1]`:
//! Legendre polynomials, Gauss and Gauss–Lobatto point sets, and nodal
//! Lagrange bases.

use std::f64::consts::PI;

/// Legendre polynomial `P_n(x)` and its derivative, normalized so `P_n(1) = 1`.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Gauss–Legendre rule with `n` points: (points, weights), points ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one point");
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..n {
        let mut x = -(PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        pts[i] = x;
        wts[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (pts, wts)
}

/// Gauss–Lobatto–Legendre nodes for degree `p` (`p + 1` points, ascending).
pub fn gauss_lobatto(p: usize) -> Vec<f64> {
    assert!(p >= 1, "Gauss-Lobatto needs degree >= 1");
    let mut nodes = vec![0.0; p + 1];
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    let pf = p as f64;
    for (i, node) in nodes.iter_mut().enumerate().take(p).skip(1) {
        let mut x = -(PI * i as f64 / pf).cos();
        for _ in 0..100 {
            // ((1-x^2) P_p')' = -p(p+1) P_p
            let (pv, dp) = legendre(p, x);
            let dx = (1.0 - x * x) * dp / (pf * (pf + 1.0) * pv);
            x += dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        *node = x;
    }
    // exact symmetry
    for i in 0..p.div_ceil(2) {
        let s = 0.5 * (nodes[p - i] - nodes[i]);
        nodes[i] = -s;
        nodes[p - i] = s;
    }
    if p.is_multiple_of(2) {
        nodes[p / 2] = 0.0;
    }
    nodes
}

/// Nodal Lagrange basis on a fixed node set.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(nodes: Vec<f64>) -> Self {
        Self { nodes }
    }

    /// Lagrange basis on the Gauss–Lobatto nodes of degree `p`.
    pub fn gauss_lobatto(p: usize) -> Self {
        Self::new(gauss_lobatto(p))
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|j| {
                let xj = self.nodes[j];
                self.nodes
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != j)
                    .map(|(_, &xm)| (x - xm) / (xj - xm))
                    .product()
            })
            .collect()
    }

    pub fn derivatives(&self, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate() {
            let xj = self.nodes[j];
            let mut sum = 0.0;
            for k in (0..n).filter(|&k| k != j) {
                let mut prod = 1.0 / (xj - self.nodes[k]);
                for m in (0..n).filter(|&m| m != j && m != k) {
                    prod *= (x - self.nodes[m]) / (xj - self.nodes[m]);
                }
                sum += prod;
            }
            *o = sum;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_monomials() {
        for n in 1..10 {
            let (x, w) = gauss_legendre(n);
            for k in 0..2 * n {
                let num: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn lobatto_degree_three() {
        let x = gauss_lobatto(3);
        let s = 1.0 / 5f64.sqrt();
        assert!((x[1] + s).abs() < 1e-15 && (x[2] - s).abs() < 1e-15);
    }

    #[test]
    fn lagrange_partition_of_unity_and_derivative() {
        let b = LagrangeBasis::gauss_lobatto(6);
        for &x in &[-0.9, -0.31, 0.0, 0.42, 1.0] {
            let s: f64 = b.values(x).iter().sum();
            let ds: f64 = b.derivatives(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-13);
            assert!(ds.abs() < 1e-11);
        }
        // derivative of x^2 reproduced
        let v: Vec<f64> = b.nodes().iter().map(|x| x * x).collect();
        let d: f64 = b.derivatives(0.3).iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((d - 0.6).abs() < 1e-12);
    }
}
