//! Carrier-restricted speed-ups (fastDSPA-CC and fastSPA).
//!
//! Only carriers (`g_i > 0`) contribute non-quadratic terms to the CGFs; the
//! nuisance scores of non-carriers `U*_beta` are replaced by a normal vector
//! with covariance `Cov(U_beta) - Cov(U_beta^carriers)`. Per-variant work is
//! then `O(m)` in the number of carriers `m`.

use crate::cgf::{accumulate, max_row_norm, CgfEvaluation, EfficientCgf, MultivariateCgf};
use crate::model::{carriers, validate_genotype, xtwg, NullFit};
use crate::pvalue::Method;
use crate::saddlepoint::{double_cc_tail, single_tail, TailResult, TailSetting};
use crate::{exact, model, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct CarrierPartition {
    carriers: Vec<usize>,
    n: usize,
    cov_full: DMatrix<f64>,
    cov_carrier: DMatrix<f64>,
    cov_star: DMatrix<f64>,
}

impl CarrierPartition {
    pub fn new(fit: &NullFit, g: &[u8]) -> Result<Self> {
        validate_genotype(g, fit.n())?;
        let carriers = carriers(g);
        let n = fit.n();
        let cov_full = fit.xtwx().clone();
        let cov_carrier = fit.design().weighted_gram(fit.w_hat(), Some(&carriers));
        let cov_star = if carriers.len() == n {
            DMatrix::zeros(fit.d(), fit.d())
        } else {
            &cov_full - &cov_carrier
        };
        Ok(Self {
            carriers,
            n,
            cov_full,
            cov_carrier,
            cov_star,
        })
    }

    pub fn carriers(&self) -> &[usize] {
        &self.carriers
    }

    /// Number of carriers.
    pub fn m(&self) -> usize {
        self.carriers.len()
    }

    pub fn is_complete(&self) -> bool {
        self.carriers.len() == self.n
    }

    /// `Cov(U_beta) = X'WX`.
    pub fn cov_full(&self) -> &DMatrix<f64> {
        &self.cov_full
    }

    /// `Cov(U_beta^carriers)`.
    pub fn cov_carrier(&self) -> &DMatrix<f64> {
        &self.cov_carrier
    }

    /// `Cov(U*_beta) = Cov(U_beta) - Cov(U_beta^carriers)`.
    pub fn cov_star(&self) -> &DMatrix<f64> {
        &self.cov_star
    }
}

/// Joint CGF with the non-carrier nuisance scores replaced by a normal
/// vector.
#[derive(Debug, Clone, Copy)]
pub struct FastJointCgf<'a> {
    fit: &'a NullFit,
    g: &'a [f64],
    partition: &'a CarrierPartition,
}

impl<'a> FastJointCgf<'a> {
    pub fn new(fit: &'a NullFit, g: &'a [f64], partition: &'a CarrierPartition) -> Self {
        assert_eq!(g.len(), fit.n());
        Self { fit, g, partition }
    }
}

impl MultivariateCgf for FastJointCgf<'_> {
    fn dim(&self) -> usize {
        self.fit.d() + 1
    }

    fn evaluate(&self, t: &[f64]) -> CgfEvaluation {
        let mut e = accumulate(
            self.fit.mu_hat(),
            self.fit.design(),
            Some(self.g),
            Some(self.partition.carriers()),
            t,
        );
        if !self.partition.is_complete() {
            let d = self.fit.d();
            let c = self.partition.cov_star();
            let tb = DVector::from_column_slice(&t[..d]);
            let ct = c * &tb;
            e.value += 0.5 * tb.dot(&ct);
            for a in 0..d {
                e.gradient[a] += ct[a];
                for b in 0..d {
                    e.hessian[(a, b)] += c[(a, b)];
                }
            }
        }
        e
    }

    fn max_row_norm(&self) -> f64 {
        max_row_norm(self.fit.design(), Some(self.g), Some(self.partition.carriers()))
    }
}

/// Fully quadratic marginal CGF `t' Cov(U_beta) t / 2`.
#[derive(Debug, Clone, Copy)]
pub struct FastMarginalCgf<'a> {
    cov: &'a DMatrix<f64>,
}

impl<'a> FastMarginalCgf<'a> {
    pub fn new(partition: &'a CarrierPartition) -> Self {
        Self {
            cov: partition.cov_full(),
        }
    }
}

impl MultivariateCgf for FastMarginalCgf<'_> {
    fn dim(&self) -> usize {
        self.cov.nrows()
    }

    fn evaluate(&self, t: &[f64]) -> CgfEvaluation {
        let tb = DVector::from_column_slice(t);
        let ct = self.cov * &tb;
        CgfEvaluation {
            value: 0.5 * tb.dot(&ct),
            gradient: ct,
            hessian: self.cov.clone(),
        }
    }

    fn max_row_norm(&self) -> f64 {
        0.0
    }
}

/// Fast joint CGF `(K, grad K, H)` at `t = (t_beta, t_gamma)`.
pub fn fast_joint_cgf(fit: &NullFit, partition: &CarrierPartition, g: &[f64], t: &[f64]) -> CgfEvaluation {
    FastJointCgf::new(fit, g, partition).evaluate(t)
}

/// Fast marginal CGF `(K_beta, grad K_beta, H_beta)` at `t_beta`.
pub fn fast_marginal_cgf(partition: &CarrierPartition, t_beta: &[f64]) -> CgfEvaluation {
    FastMarginalCgf::new(partition).evaluate(t_beta)
}

/// Efficient-score CGF over carriers plus the normal CGF of the
/// non-carrier part.
///
/// Non-carriers have `g_tilde_i = -x_i'c` with `c = (X'WX)^{-1} X'Wg`, so
/// their variance is `c' Cov(U*_beta) c`, an `O(d^2)` quantity.
pub fn fast_spa_cgf(fit: &NullFit, partition: &CarrierPartition, g: &[u8]) -> Result<EfficientCgf<'static>> {
    validate_genotype(g, fit.n())?;
    let rows = partition.carriers();
    let c = fit.solve_xtwx(&xtwg(fit, g, rows));
    let design = fit.design();
    let g_tilde: Vec<f64> = rows
        .iter()
        .map(|&i| g[i] as f64 - design.row(i).iter().zip(c.iter()).map(|(x, b)| x * b).sum::<f64>())
        .collect();
    let mu: Vec<f64> = rows.iter().map(|&i| fit.mu_hat()[i]).collect();
    let remainder = if partition.is_complete() {
        0.0
    } else {
        c.dot(&(partition.cov_star() * &c)).max(0.0)
    };
    Ok(EfficientCgf::with_gaussian_remainder(mu, g_tilde, remainder))
}

fn setting(fit: &NullFit, g: &[u8]) -> Result<TailSetting> {
    let support = exact::conditional_support(fit, g)?;
    Ok(TailSetting {
        var_cond: model::conditional_variance(fit, g)?,
        lower: support.lower,
        upper: support.upper,
    })
}

/// fastDSPA-CC estimate of `P(U >= u | U_beta = 0)`.
pub fn fast_dspa_cc_survival(fit: &NullFit, partition: &CarrierPartition, g: &[u8], u: f64) -> Result<TailResult> {
    let setting = setting(fit, g)?;
    let gf: Vec<f64> = g.iter().map(|&x| x as f64).collect();
    let cgf = FastJointCgf::new(fit, &gf, partition);
    double_cc_tail(Method::FastDspaCc, &cgf, fit.ln_det_xtwx(), setting, u)
}

/// fastSPA estimate of `P(U >= u)` (continuous, no continuity correction).
pub fn fast_spa_survival(fit: &NullFit, partition: &CarrierPartition, g: &[u8], u: f64) -> Result<TailResult> {
    let setting = setting(fit, g)?;
    let cgf = fast_spa_cgf(fit, partition, g)?;
    single_tail(Method::FastSpa, &cgf, setting, u, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::{JointCgf, UnivariateCgf};
    use crate::model::{efficient_genotype, DesignMatrix};

    fn fit_with_covariate(n: usize) -> NullFit {
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
        let y: Vec<u8> = (0..n)
            .map(|i| u8::from(i % 9 == 0 || (i % 13 == 0 && x[i] > 0.0)))
            .collect();
        NullFit::fit(&y, DesignMatrix::with_intercept(&[x]).unwrap()).unwrap()
    }

    #[test]
    fn complete_partition_matches_full_cgf() {
        let fit = fit_with_covariate(60);
        let g: Vec<u8> = (0..60).map(|i| 1 + (i % 2) as u8).collect();
        let gf: Vec<f64> = g.iter().map(|&x| x as f64).collect();
        let p = CarrierPartition::new(&fit, &g).unwrap();
        assert!(p.is_complete());
        let full = JointCgf::new(fit.mu_hat(), fit.design(), &gf);
        for t in [[0.1, -0.2, 0.3], [1.0, 0.5, -0.7]] {
            assert_eq!(fast_joint_cgf(&fit, &p, &gf, &t), full.value_grad_hess(&t));
        }
        let gt = efficient_genotype(&fit, &g).unwrap();
        let espa = EfficientCgf::new(fit.mu_hat(), &gt);
        let fast = fast_spa_cgf(&fit, &p, &g).unwrap();
        for t in [-1.0, 0.3, 2.0] {
            assert_eq!(fast.evaluate(t), espa.evaluate(t));
        }
    }

    #[test]
    fn fast_cgfs_vanish_at_zero() {
        let fit = fit_with_covariate(80);
        let g: Vec<u8> = (0..80).map(|i| u8::from(i % 10 == 3)).collect();
        let gf: Vec<f64> = g.iter().map(|&x| x as f64).collect();
        let p = CarrierPartition::new(&fit, &g).unwrap();
        assert_eq!(p.m(), 8);
        let e = fast_joint_cgf(&fit, &p, &gf, &[0.0; 3]);
        assert_eq!(e.value, 0.0);
        assert!(e.gradient.iter().all(|&x| x == 0.0));
        let m = fast_marginal_cgf(&p, &[0.0, 0.0]);
        assert_eq!(m.value, 0.0);
        assert_eq!(&m.hessian, fit.xtwx());
        let tb = [0.4, -1.3];
        let plus = fast_marginal_cgf(&p, &tb);
        let minus = fast_marginal_cgf(&p, &[-0.4, 1.3]);
        assert_eq!(plus.value, minus.value);
        let ct = fit.xtwx() * DVector::from_column_slice(&tb);
        assert!((plus.gradient - ct).amax() < 1e-12);
    }

    #[test]
    fn remainder_variance_matches_non_carrier_sum() {
        let fit = fit_with_covariate(80);
        let g: Vec<u8> = (0..80).map(|i| u8::from(i % 7 == 2) + u8::from(i == 30)).collect();
        let p = CarrierPartition::new(&fit, &g).unwrap();
        let cgf = fast_spa_cgf(&fit, &p, &g).unwrap();
        let gt = efficient_genotype(&fit, &g).unwrap();
        let direct: f64 = (0..80)
            .filter(|&i| g[i] == 0)
            .map(|i| gt[i] * gt[i] * fit.w_hat()[i])
            .sum();
        assert!((cgf.gaussian_variance() - direct).abs() < 1e-10 * direct);
        let eig = p.cov_star().clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-8 * p.cov_star().trace());
    }
}
