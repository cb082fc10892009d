//! Cumulant generating functions of the score vector under the null.
//!
//! With `Y_i ~ Bernoulli(mu_i)` and `U = Z'(Y - mu)`, every CGF here is a sum
//! of per-observation terms `ln(1 - mu + mu e^s) - mu s` with `s = t'z_i`.
//! Each term is evaluated in the form whose exponential argument is
//! non-positive, so no evaluation can overflow.

use crate::model::DesignMatrix;
use crate::numeric::{compensated_sum, NeumaierSum};
use nalgebra::{DMatrix, DVector};
use std::borrow::Cow;

/// One Bernoulli term of a CGF at linear predictor `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BernoulliTerm {
    /// `ln(1 - mu + mu e^s) - mu s`
    pub value: f64,
    /// `p(s) - mu`, with `p(s)` the tilted success probability.
    pub shift: f64,
    /// `p(s) (1 - p(s))`
    pub variance: f64,
}

#[inline]
pub(crate) fn bernoulli_term(mu: f64, s: f64) -> BernoulliTerm {
    let nu = 1.0 - mu;
    if s <= 0.0 {
        let e = s.exp_m1();
        let denom = 1.0 + mu * e;
        let p = mu * (1.0 + e) / denom;
        let q = nu / denom;
        BernoulliTerm {
            value: (mu * e).ln_1p() - mu * s,
            shift: mu * nu * e / denom,
            variance: p * q,
        }
    } else {
        let e = (-s).exp_m1();
        let denom = 1.0 + nu * e;
        let p = mu / denom;
        let q = nu * (1.0 + e) / denom;
        BernoulliTerm {
            value: nu * s + (nu * e).ln_1p(),
            shift: -mu * nu * e / denom,
            variance: p * q,
        }
    }
}

/// Value, gradient and Hessian of a multivariate CGF at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct CgfEvaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A CGF of a score vector, as consumed by the double saddlepoint solver.
pub trait MultivariateCgf {
    fn dim(&self) -> usize;
    fn evaluate(&self, t: &[f64]) -> CgfEvaluation;
    /// Largest `|z_i|_1` over the observations; bounds `|t'z_i|` by
    /// `|t|_inf` times this.
    fn max_row_norm(&self) -> f64;
}

/// A scalar CGF, as consumed by the single saddlepoint solver.
pub trait UnivariateCgf {
    /// `(K(t), K'(t), K''(t))`
    fn evaluate(&self, t: f64) -> (f64, f64, f64);
    /// Open interval of values `K'` can take.
    fn derivative_range(&self) -> (f64, f64);
}

/// Sum of Bernoulli CGF terms over `z_i = (x_i, extra_i)` for the selected
/// rows. Joint and marginal CGFs share this path, so `K(t_beta, 0)` and
/// `K_beta(t_beta)` agree bit for bit.
pub(crate) fn accumulate(
    mu: &[f64],
    design: &DesignMatrix,
    extra: Option<&[f64]>,
    rows: Option<&[usize]>,
    t: &[f64],
) -> CgfEvaluation {
    let d = design.ncols();
    let dim = d + usize::from(extra.is_some());
    assert_eq!(t.len(), dim, "CGF argument has the wrong dimension");
    let mut value = NeumaierSum::new();
    let mut grad = vec![NeumaierSum::new(); dim];
    let mut hess = vec![NeumaierSum::new(); dim * dim];
    let mut z = vec![0.0; dim];

    let mut add = |i: usize| {
        z[..d].copy_from_slice(design.row(i));
        if let Some(g) = extra {
            z[d] = g[i];
        }
        let s: f64 = z.iter().zip(t).map(|(a, b)| a * b).sum();
        let term = bernoulli_term(mu[i], s);
        value.add(term.value);
        for a in 0..dim {
            grad[a].add(term.shift * z[a]);
            let va = term.variance * z[a];
            for b in a..dim {
                hess[a * dim + b].add(va * z[b]);
            }
        }
    };
    match rows {
        Some(idx) => idx.iter().for_each(|&i| add(i)),
        None => (0..mu.len()).for_each(&mut add),
    }

    CgfEvaluation {
        value: value.value(),
        gradient: DVector::from_iterator(dim, grad.iter().map(NeumaierSum::value)),
        hessian: DMatrix::from_fn(dim, dim, |a, b| {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            hess[a * dim + b].value()
        }),
    }
}

pub(crate) fn max_row_norm(design: &DesignMatrix, extra: Option<&[f64]>, rows: Option<&[usize]>) -> f64 {
    let norm = |i: usize| design.row(i).iter().map(|x| x.abs()).sum::<f64>() + extra.map_or(0.0, |g| g[i].abs());
    match rows {
        Some(idx) => idx.iter().map(|&i| norm(i)).fold(0.0, f64::max),
        None => (0..design.nrows()).map(norm).fold(0.0, f64::max),
    }
}

/// Joint CGF of `(U_beta, U_gamma)` with `z_i = (x_i, g_i)`.
#[derive(Debug, Clone, Copy)]
pub struct JointCgf<'a> {
    mu: &'a [f64],
    design: &'a DesignMatrix,
    g: &'a [f64],
}

impl<'a> JointCgf<'a> {
    pub fn new(mu: &'a [f64], design: &'a DesignMatrix, g: &'a [f64]) -> Self {
        assert_eq!(mu.len(), design.nrows());
        assert_eq!(g.len(), design.nrows());
        Self { mu, design, g }
    }

    /// `(K, grad K, H)` at `t = (t_beta, t_gamma)`.
    pub fn value_grad_hess(&self, t: &[f64]) -> CgfEvaluation {
        accumulate(self.mu, self.design, Some(self.g), None, t)
    }
}

impl MultivariateCgf for JointCgf<'_> {
    fn dim(&self) -> usize {
        self.design.ncols() + 1
    }

    fn evaluate(&self, t: &[f64]) -> CgfEvaluation {
        self.value_grad_hess(t)
    }

    fn max_row_norm(&self) -> f64 {
        max_row_norm(self.design, Some(self.g), None)
    }
}

/// Marginal CGF of the nuisance scores `U_beta`, `z_i = x_i`.
#[derive(Debug, Clone, Copy)]
pub struct MarginalCgf<'a> {
    mu: &'a [f64],
    design: &'a DesignMatrix,
}

impl<'a> MarginalCgf<'a> {
    pub fn new(mu: &'a [f64], design: &'a DesignMatrix) -> Self {
        assert_eq!(mu.len(), design.nrows());
        Self { mu, design }
    }

    pub fn value_grad_hess(&self, t_beta: &[f64]) -> CgfEvaluation {
        accumulate(self.mu, self.design, None, None, t_beta)
    }
}

impl MultivariateCgf for MarginalCgf<'_> {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn evaluate(&self, t: &[f64]) -> CgfEvaluation {
        self.value_grad_hess(t)
    }

    fn max_row_norm(&self) -> f64 {
        max_row_norm(self.design, None, None)
    }
}

/// CGF of the efficient score `g_tilde'(Y - mu_hat)`:
/// `K(t) = sum ln(1 - mu + mu e^{g_tilde t}) - t g_tilde'mu + gaussian_variance t^2 / 2`.
///
/// `gaussian_variance` is zero for the full CGF; the carrier-restricted
/// approximation stores only carrier terms and folds the remaining
/// observations into a normal CGF.
#[derive(Debug, Clone)]
pub struct EfficientCgf<'a> {
    mu: Cow<'a, [f64]>,
    g_tilde: Cow<'a, [f64]>,
    gaussian_variance: f64,
}

impl<'a> EfficientCgf<'a> {
    pub fn new(mu: &'a [f64], g_tilde: &'a [f64]) -> Self {
        assert_eq!(mu.len(), g_tilde.len());
        Self {
            mu: Cow::Borrowed(mu),
            g_tilde: Cow::Borrowed(g_tilde),
            gaussian_variance: 0.0,
        }
    }

    pub fn with_gaussian_remainder(mu: Vec<f64>, g_tilde: Vec<f64>, gaussian_variance: f64) -> Self {
        assert_eq!(mu.len(), g_tilde.len());
        assert!(gaussian_variance >= 0.0);
        Self {
            mu: Cow::Owned(mu),
            g_tilde: Cow::Owned(g_tilde),
            gaussian_variance,
        }
    }

    pub fn gaussian_variance(&self) -> f64 {
        self.gaussian_variance
    }

    /// `(K, K', K'')` at `t`.
    pub fn value_deriv1_deriv2(&self, t: f64) -> (f64, f64, f64) {
        let mut k = NeumaierSum::new();
        let mut k1 = NeumaierSum::new();
        let mut k2 = NeumaierSum::new();
        for (&m, &g) in self.mu.iter().zip(self.g_tilde.iter()) {
            let term = bernoulli_term(m, g * t);
            k.add(term.value);
            k1.add(term.shift * g);
            k2.add(term.variance * g * g);
        }
        let v = self.gaussian_variance;
        (k.value() + 0.5 * v * t * t, k1.value() + v * t, k2.value() + v)
    }
}

impl UnivariateCgf for EfficientCgf<'_> {
    fn evaluate(&self, t: f64) -> (f64, f64, f64) {
        self.value_deriv1_deriv2(t)
    }

    fn derivative_range(&self) -> (f64, f64) {
        if self.gaussian_variance > 0.0 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let mean = compensated_sum(self.mu.iter().zip(self.g_tilde.iter()).map(|(m, g)| m * g));
        let neg = compensated_sum(self.g_tilde.iter().filter(|g| **g < 0.0).copied());
        let pos = compensated_sum(self.g_tilde.iter().filter(|g| **g > 0.0).copied());
        (neg - mean, pos - mean)
    }
}
