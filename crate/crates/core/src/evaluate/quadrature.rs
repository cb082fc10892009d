//! Gauss-Hermite quadrature for the simulation model
//! `logit P(Y = 1 | x1, x2) = beta0 + x1 + x2`, `x1 ~ Bernoulli(1/2)`,
//! `x2 ~ N(0, 1)`.

use crate::numeric::logistic;
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::SQRT_2;

/// Default number of quadrature nodes.
pub const DEFAULT_NODES: usize = 64;

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
    /// physicists' Hermite polynomials and weights `sqrt(pi) v_0^2`; the
    /// change of variables `z = sqrt(2) x` turns them into normal weights
    /// `v_0^2`.
    pub fn new(k: usize) -> Self {
        assert!(k >= 1);
        let mut jacobi = DMatrix::zeros(k, k);
        for i in 1..k {
            let b = (i as f64 / 2.0).sqrt();
            jacobi[(i, i - 1)] = b;
            jacobi[(i - 1, i)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..k)
            .map(|j| {
                let v0 = eig.eigenvectors[(0, j)];
                (eig.eigenvalues[j] * SQRT_2, v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// `E[f(Z)]` for standard normal `Z`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

impl Default for GaussHermite {
    fn default() -> Self {
        Self::new(DEFAULT_NODES)
    }
}

/// `P(Y = 1 | x1)` after integrating out `x2`.
pub fn case_probability_given_x1(beta0: f64, x1: f64, gh: &GaussHermite) -> f64 {
    gh.expect(|x2| logistic(beta0 + x1 + x2))
}

/// Population prevalence `P(Y = 1)`.
pub fn prevalence(beta0: f64, gh: &GaussHermite) -> f64 {
    0.5 * (case_probability_given_x1(beta0, 0.0, gh) + case_probability_given_x1(beta0, 1.0, gh))
}

/// `beta0` giving the requested prevalence, by bisection (prevalence is
/// increasing in `beta0`).
pub fn beta0_for_prevalence(target: f64, gh: &GaussHermite) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidInput(format!("prevalence {target} is not inside (0, 1)")));
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if prevalence(mid, gh) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `P(x1 = 1 | Y = y)` for the simulation model.
pub fn x1_probability_given_y(beta0: f64, y: u8, gh: &GaussHermite) -> f64 {
    let p0 = case_probability_given_x1(beta0, 0.0, gh);
    let p1 = case_probability_given_x1(beta0, 1.0, gh);
    if y == 1 {
        p1 / (p0 + p1)
    } else {
        (1.0 - p1) / ((1.0 - p0) + (1.0 - p1))
    }
}
