//! Gauss-Hermite quadrature for averages over Gaussian distributions.
//!
//! Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix of
//! the Hermite recurrence, located by Sturm-sequence bisection and polished
//! with Newton steps on the orthonormal polynomial. That keeps construction
//! at O(n^2) time and O(n) memory, so rules with thousands of nodes stay
//! cheap. Weights come from the Christoffel sum and are stored normalized to
//! sum to one, so an expectation over N(0, sigma^2) is a plain weighted sum
//! over the scaled nodes sqrt(2) * sigma * u_i.

use crate::error::{Error, Result};

/// Quadrature rule with physicists' nodes and probability-normalized weights.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule. Exact for polynomials of degree 2n - 1.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "quadrature rule needs at least one node".into(),
            ));
        }
        if n == 1 {
            return Ok(Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            });
        }
        // Squared off-diagonal entries b_k^2 = k / 2 of the Jacobi matrix
        // (its diagonal is zero). The Sturm count below needs only these.
        let off_sq: Vec<f64> = (1..n).map(|k| k as f64 / 2.0).collect();
        let count_below = |x: f64| -> usize {
            let mut d = -x;
            let mut cnt = usize::from(d < 0.0);
            for &b2 in &off_sq {
                d = -x - b2 / d;
                if d == 0.0 {
                    d = -f64::MIN_POSITIVE;
                }
                cnt += usize::from(d < 0.0);
            }
            cnt
        };
        let span = (2.0 * n as f64).sqrt();

        // Bisection leaves each eigenvalue within ~1e-9, far inside half the
        // minimum root spacing pi / sqrt(2n). Newton steps on p_n (with
        // p_n' = sqrt(2n) p_{n-1}) then polish to machine precision, and the
        // weight is the Christoffel sum 1 / sum_k p_k^2. The rule is
        // symmetric about zero, so refine the negative half and mirror it
        // for exact +- node pairs.
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let dp_scale = (2.0 * n as f64).sqrt();
        for i in 0..n / 2 {
            let (mut lo, mut hi) = (-span, 0.0);
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if count_below(mid) >= i + 1 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut x = 0.5 * (lo + hi);
            for _ in 0..4 {
                let (pn, pn_prev) = hermite_pair(n, x);
                let step = pn / (dp_scale * pn_prev);
                x -= step;
                if step.abs() <= 1e-15 * x.abs() {
                    break;
                }
            }
            let w = christoffel_weight(n, x);
            let j = n - 1 - i;
            nodes[i] = x;
            nodes[j] = -x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
            weights[n / 2] = christoffel_weight(n, 0.0);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Raw physicists' nodes, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights normalized to sum to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Abscissas for an expectation over N(0, sigma^2), ascending.
    pub fn scaled_nodes(&self, sigma: f64) -> Vec<f64> {
        let s = std::f64::consts::SQRT_2 * sigma;
        self.nodes.iter().map(|u| s * u).collect()
    }

    /// E[f(X)] for X ~ N(0, sigma^2), summed in fixed node order.
    pub fn gaussian_average<F: FnMut(f64) -> f64>(&self, sigma: f64, mut f: F) -> f64 {
        let s = std::f64::consts::SQRT_2 * sigma;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * f(s * u))
            .sum()
    }
}

/// Rescaling threshold for the Hermite recurrence. Edge nodes of large
/// rules push p_k toward e^{x^2/2}, far past f64 range, so values are
/// scaled down whenever they cross this bound. Squares of values under the
/// bound stay finite too.
const RESCALE_AT: f64 = 1e140;

/// Orthonormal Hermite values (p_n(x), p_{n-1}(x)) for the weight e^{-x^2},
/// up to a common positive scale factor that cancels in the Newton ratio
/// p_n / p_n'.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0f64;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let next = (x * cur - (k as f64 / 2.0).sqrt() * prev) / ((k as f64 + 1.0) / 2.0).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_AT {
            cur /= RESCALE_AT;
            prev /= RESCALE_AT;
        }
    }
    (cur, prev)
}

/// Gauss-Hermite weight at a root x, 1 / sum_{k<n} p_k(x)^2. Tracks the
/// rescaling exponent so edge roots of large rules yield an exact zero
/// instead of overflowing; the unscaled path divides directly to keep
/// small rules bit-identical to the plain formula.
fn christoffel_weight(n: usize, x: f64) -> f64 {
    let mut prev = 0.0f64;
    let mut cur = std::f64::consts::PI.powf(-0.25);
    let mut sum = cur * cur;
    let mut ln_scale = 0.0f64;
    for k in 0..n - 1 {
        let next = (x * cur - (k as f64 / 2.0).sqrt() * prev) / ((k as f64 + 1.0) / 2.0).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_AT {
            cur /= RESCALE_AT;
            prev /= RESCALE_AT;
            sum /= RESCALE_AT * RESCALE_AT;
            ln_scale += RESCALE_AT.ln();
        }
        sum += cur * cur;
    }
    if ln_scale == 0.0 {
        1.0 / sum
    } else {
        (-sum.ln() - 2.0 * ln_scale).exp()
    }
}
