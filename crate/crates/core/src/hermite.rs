//! Gauss–Hermite quadrature and orthonormal Hermite functions.
//!
//! Nodes and weights for the weight `exp(-x^2)` are found by Newton
//! iteration on the orthonormal Hermite polynomials with the usual
//! asymptotic starting guesses; this is accurate to machine precision for
//! the rule sizes used here (a few hundred nodes).
//!
//! The Hermite *functions* `h_n(x) = Htilde_n(x) exp(-x^2/2)` are
//! orthonormal on the real line and diagonalize `(-d^2/dx^2 + x^2)/2` with
//! eigenvalues `n + 1/2`.

use std::f64::consts::PI;

/// Gauss–Hermite rule: `\int f(x) e^{-x^2} dx ~= sum w_i f(x_i)`, exact for
/// polynomials of degree `<= 2n - 1`. Nodes ascend and are exactly
/// symmetric about zero.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];

        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            // asymptotic initial guesses, largest root first
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[n - 1],
                3 => 1.91 * z - 0.91 * nodes[n - 2],
                _ => 2.0 * z - nodes[n - i + 1],
            };
            let mut p2 = 0.0;
            for _ in 0..100 {
                // orthonormal Hermite recurrence at z
                let mut p1 = PI.powf(-0.25);
                p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
                }
                let pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    // one clean-up iteration below keeps p2 consistent
                    let mut q1 = PI.powf(-0.25);
                    p2 = 0.0;
                    for j in 1..=n {
                        let q3 = p2;
                        p2 = q1;
                        q1 = z * (2.0 / j as f64).sqrt() * p2 - ((j as f64 - 1.0) / j as f64).sqrt() * q3;
                    }
                    break;
                }
            }
            let pp = (2.0 * n as f64).sqrt() * p2;
            nodes[n - 1 - i] = z;
            nodes[i] = -z;
            weights[n - 1 - i] = 2.0 / (pp * pp);
            weights[i] = weights[n - 1 - i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weights with the Gaussian factored back in: `w_i exp(x_i^2)`, for
    /// integrating functions given in physical (not weight-stripped) form.
    pub fn lifted_weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * (x * x).exp())
            .collect()
    }
}

/// Values `h_0(x) .. h_n_max(x)` of the orthonormal Hermite functions.
pub fn hermite_values(n_max: u32, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let h0 = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(h0);
    if n_max == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * x * h0);
    for n in 2..=n_max as usize {
        let nf = n as f64;
        let next = x * (2.0 / nf).sqrt() * out[n - 1] - ((nf - 1.0) / nf).sqrt() * out[n - 2];
        out.push(next);
    }
    out
}

/// Sampling grid for mode overlaps: Gauss–Hermite nodes scaled by
/// `1/sqrt(2)` so that quartic products `h h h h = P(x) exp(-2 x^2)` are
/// integrated exactly, plus the Hermite-function table at the scaled nodes.
#[derive(Debug, Clone)]
pub struct OverlapGrid {
    /// scaled nodes `u_j / sqrt(2)`
    pub nodes: Vec<f64>,
    /// `w_j / sqrt(2)` with the Gaussian `exp(u_j^2)` lifted back in
    pub weights: Vec<f64>,
    /// `table[j][n] = h_n(nodes[j])`
    pub table: Vec<Vec<f64>>,
}

impl OverlapGrid {
    /// Exact for total Hermite degree up to `2 * rule_len - 1`.
    pub fn new(n_max: u32, rule_len: usize) -> Self {
        let rule = GaussHermite::new(rule_len);
        let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
        let nodes: Vec<f64> = rule.nodes.iter().map(|&u| u * inv_sqrt2).collect();
        let weights: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&u, &w)| w * (u * u).exp() * inv_sqrt2)
            .collect();
        let table = nodes.iter().map(|&x| hermite_values(n_max, x)).collect();
        Self { nodes, weights, table }
    }

    /// The smallest grid that integrates all quartic overlaps exactly for
    /// the given window.
    pub fn for_quartics(n_max: u32) -> Self {
        Self::new(n_max, 2 * n_max as usize + 1)
    }

    /// `W[n,m,k,l] = \int h_n h_m h_k h_l dx`, summed over mirror-symmetric
    /// node pairs so parity zeros are exact.
    pub fn overlap4(&self, n: u32, m: u32, k: u32, l: u32) -> f64 {
        let f = |j: usize| {
            let t = &self.table[j];
            self.weights[j]
                * t[n as usize]
                * t[m as usize]
                * t[k as usize]
                * t[l as usize]
        };
        self.paired_sum(f)
    }

    fn paired_sum<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        let n = self.nodes.len();
        let mut total = 0.0;
        for j in 0..n / 2 {
            total += f(j) + f(n - 1 - j);
        }
        if n % 2 == 1 {
            total += f(n / 2);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let q = GaussHermite::new(20);
        let total: f64 = q.weights.iter().sum();
        assert!((total - PI.sqrt()).abs() < 1e-13);
        let m2: f64 = q
            .nodes
            .iter()
            .zip(&q.weights)
            .map(|(&x, &w)| w * x * x)
            .sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-13);
        // degree 38 monomial still exact: x^38 moment = 37!! sqrt(pi) / 2^19
        let mut exact = PI.sqrt();
        for j in 1..=19 {
            exact *= (2 * j - 1) as f64 / 2.0;
        }
        let m38: f64 = q
            .nodes
            .iter()
            .zip(&q.weights)
            .map(|(&x, &w)| w * x.powi(38))
            .sum();
        assert!((m38 - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        for n in [7, 24, 129] {
            let q = GaussHermite::new(n);
            for j in 1..n {
                assert!(q.nodes[j] > q.nodes[j - 1]);
            }
            for j in 0..n {
                assert_eq!(q.nodes[j], -q.nodes[n - 1 - j]);
                assert_eq!(q.weights[j], q.weights[n - 1 - j]);
            }
        }
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        // pairwise products P exp(-x^2) with deg P <= 96: the plain rule
        // with lifted weights integrates them exactly
        let rule = GaussHermite::new(112);
        let lifted = rule.lifted_weights();
        let table: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| hermite_values(48, x)).collect();
        for n in (0..=48usize).step_by(6) {
            for m in (0..=48usize).step_by(6) {
                let o: f64 = (0..rule.len())
                    .map(|j| lifted[j] * table[j][n] * table[j][m])
                    .sum();
                let expect = if n == m { 1.0 } else { 0.0 };
                assert!((o - expect).abs() < 1e-12, "<h{n}, h{m}> = {o}");
            }
        }
    }

    #[test]
    fn quartic_overlap_oracles() {
        let grid = OverlapGrid::for_quartics(4);
        // closed-form Gaussian moments:
        // W0000 = (2 pi)^(-1/2), W1111 = (3/4) (2 pi)^(-1/2)
        let w0000 = grid.overlap4(0, 0, 0, 0);
        assert!((w0000 - (2.0 * PI).powf(-0.5)).abs() < 1e-14);
        let w1111 = grid.overlap4(1, 1, 1, 1);
        assert!((w1111 - 0.75 * (2.0 * PI).powf(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn odd_total_degree_is_exactly_zero() {
        let grid = OverlapGrid::for_quartics(6);
        assert_eq!(grid.overlap4(0, 0, 0, 1), 0.0);
        assert_eq!(grid.overlap4(1, 2, 3, 5), 0.0);
        assert_eq!(grid.overlap4(6, 1, 1, 1), 0.0);
    }

    #[test]
    fn doubling_nodes_changes_nothing() {
        let small = OverlapGrid::for_quartics(12);
        let big = OverlapGrid::new(12, 2 * (2 * 12 + 1));
        for (n, m, k, l) in [(0, 0, 0, 0), (3, 5, 2, 6), (12, 12, 12, 12), (1, 7, 4, 4)] {
            let a = small.overlap4(n, m, k, l);
            let b = big.overlap4(n, m, k, l);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
