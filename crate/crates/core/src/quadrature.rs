//! Gauss–Legendre rules and Legendre polynomials on [-1, 1].

use crate::num::Real;

/// Evaluates `P_n(x)` and `P_n'(x)` by the three-term recurrence.
pub fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    if n == 0 {
        return (T::one(), T::zero());
    }
    let mut p0 = T::one();
    let mut p1 = x;
    let mut d0 = T::zero();
    let mut d1 = T::one();
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        // P_k' = P_{k-2}' + (2k - 1) P_{k-1}
        let d2 = d0 + (T::lit(2.0) * kf - T::one()) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Gauss–Legendre rule with `n` points on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "quadrature needs at least one point");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Newton iteration in f64, polished once in T.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre::<f64>(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let mut xt = T::lit(x);
            let (p, dp) = legendre::<T>(n, xt);
            xt -= p / dp;
            let (_, dp) = legendre::<T>(n, xt);
            let w = T::lit(2.0) / ((T::one() - xt * xt) * dp * dp);
            nodes[i] = -xt;
            nodes[n - 1 - i] = xt;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = T::zero();
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]` split into `panels` equal pieces.
    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, panels: usize, mut f: F) -> T {
        let h = (b - a) / T::from_usize_lossy(panels);
        let half = h * T::lit(0.5);
        let mut total = T::zero();
        for p in 0..panels {
            let mid = a + h * (T::from_usize_lossy(p) + T::lit(0.5));
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                total += *w * f(mid + half * *x);
            }
        }
        total * half
    }
}
