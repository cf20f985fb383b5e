//! Reference Gauss–Legendre rules on `[-1, 1]` and integrals of their
//! Lagrange basis polynomials, used for product integration across kinks.

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// An `m`-point Gauss–Legendre rule on `[-1, 1]` with the data needed to
/// integrate its interpolating polynomial over partial intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    barycentric: Vec<f64>,
    /// `partial[r][j] = ∫_{-1}^{x_r} L_j(x) dx`
    partial: Vec<Vec<f64>>,
}

impl GaussRule {
    pub fn new(order: usize) -> Result<Self> {
        let rule = GaussLegendre::new(order).map_err(|_| {
            Error::Config(format!("Gauss-Legendre order must be >= 2, got {order}"))
        })?;
        let mut pairs = rule.into_node_weight_pairs();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();

        let barycentric = nodes
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                let prod: f64 = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, &xk)| xj - xk)
                    .product();
                1.0 / prod
            })
            .collect();

        let mut out = Self {
            nodes,
            weights,
            barycentric,
            partial: Vec::new(),
        };
        out.partial = out
            .nodes
            .iter()
            .map(|&x| out.partial_integrals(x))
            .collect();
        Ok(out)
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Values of all Lagrange basis polynomials at `x`.
    pub fn lagrange(&self, x: f64) -> Vec<f64> {
        if let Some(hit) = self.nodes.iter().position(|&xj| xj == x) {
            let mut out = vec![0.0; self.order()];
            out[hit] = 1.0;
            return out;
        }
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.barycentric)
            .map(|(&xj, &bj)| bj / (x - xj))
            .collect();
        let ell: f64 = self.nodes.iter().map(|&xj| x - xj).product();
        terms.into_iter().map(|t| t * ell).collect()
    }

    /// `∫_{-1}^{x} L_j(t) dt` for every basis polynomial `j`, with `x` in `[-1, 1]`.
    ///
    /// The integrand has degree `m - 1`, so the rule itself mapped onto
    /// `[-1, x]` is exact.
    pub fn partial_integrals(&self, x: f64) -> Vec<f64> {
        let half = 0.5 * (x + 1.0);
        let mut out = vec![0.0; self.order()];
        if half <= 0.0 {
            return out;
        }
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            let s = half * t + 0.5 * (x - 1.0);
            for (o, l) in out.iter_mut().zip(self.lagrange(s)) {
                *o += half * w * l;
            }
        }
        out
    }

    /// Precomputed `partial_integrals` at the rule's own nodes.
    pub fn partial_at_node(&self, r: usize) -> &[f64] {
        &self.partial[r]
    }
}
