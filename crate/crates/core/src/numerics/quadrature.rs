//! Composite Gauss–Legendre quadrature with node doubling.

use crate::Scalar;

/// Nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussLegendre<T> {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = T::from_count(n);
        let one = T::one();
        let two = T::lit(2.0);
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (T::PI() * (T::from_count(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
            let mut pp = one;
            for _ in 0..100 {
                let mut p1 = one;
                let mut p2 = T::zero();
                for j in 0..n {
                    let jf = T::from_count(j);
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((two * jf + one) * z * p2 - jf * p3) / (jf + one);
                }
                pp = nf * (z * p1 - p2) / (z * z - one);
                let dz = p1 / pp;
                z = z - dz;
                if dz.abs() <= T::epsilon() * T::lit(4.0) {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = two / ((one - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Composite rule over `panels` equal sub-intervals of `[a, b]`.
    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F, a: T, b: T, panels: usize) -> T {
        let h = (b - a) / T::from_count(panels);
        let half = h * T::lit(0.5);
        let mut total = T::zero();
        for p in 0..panels {
            let mid = a + h * (T::from_count(p) + T::lit(0.5));
            let mut s = T::zero();
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                s = s + w * f(mid + half * x);
            }
            total = total + s * half;
        }
        total
    }
}

/// Cache of rules with 8, 16, 32, … nodes.
#[derive(Debug, Default)]
pub struct Integrator<T> {
    rules: Vec<GaussLegendre<T>>,
}

pub const START_NODES: usize = 8;
pub const MAX_DOUBLINGS: usize = 6;

impl<T: Scalar> Integrator<T> {
    pub fn new() -> Self {
        Integrator { rules: Vec::new() }
    }

    fn rule(&mut self, level: usize) -> &GaussLegendre<T> {
        while self.rules.len() <= level {
            let n = START_NODES << self.rules.len();
            self.rules.push(GaussLegendre::new(n));
        }
        &self.rules[level]
    }

    /// Doubles the per-panel node count until two successive estimates
    /// differ by less than `tol` (or the doubling budget runs out).
    pub fn integrate<F: FnMut(T) -> T>(&mut self, mut f: F, a: T, b: T, panels: usize, tol: T) -> T {
        let mut prev = self.rule(0).integrate(&mut f, a, b, panels);
        for level in 1..=MAX_DOUBLINGS {
            let cur = self.rule(level).integrate(&mut f, a, b, panels);
            if (cur - prev).abs() < tol {
                return cur;
            }
            prev = cur;
        }
        prev
    }
}
