//! Exact conditional and overall type-I error for the intercept model.
//!
//! For each number of cases `v` the conditional null distribution of the
//! score is the exact lattice pmf. A method rejects at lattice point `x` when
//! its two-sided p-value is at most `alpha`; the conditional error is the
//! exact mass of the rejection region. Weighting by `Binomial(n, mu)` over
//! `v` gives the overall error.

use crate::exact::{exact_intercept_pmf_with, GenotypeCounts};
use crate::model::NullFit;
use crate::numeric::{binomial_pmf, compensated_sum, LogFactorials};
use crate::pvalue::Method;
use crate::variant::VariantTest;
use crate::{Error, Result};
use rayon::prelude::*;

/// Absolute slack when comparing a conditional error with `alpha`.
pub const VALIDITY_SLACK: f64 = 1e-12;

/// Rejection region `{x <= c_lower} u {x >= c_upper}` for one `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionRegion {
    pub method: Method,
    pub alpha: f64,
    pub v: usize,
    /// Largest rejected point of the lower tail (`None`: nothing rejected).
    pub c_lower: Option<f64>,
    /// Smallest rejected point of the upper tail.
    pub c_upper: Option<f64>,
    /// Exact `P(U in region | sum Y = v)`.
    pub conditional_error: f64,
}

impl RejectionRegion {
    pub fn is_invalid(&self) -> bool {
        self.conditional_error > self.alpha + VALIDITY_SLACK
    }
}

fn intercept_instance(counts: GenotypeCounts, v: usize) -> Result<(NullFit, Vec<u8>)> {
    let n = counts.n();
    let g: Vec<u8> = std::iter::repeat_n(0u8, counts.n0)
        .chain(std::iter::repeat_n(1u8, counts.n1))
        .chain(std::iter::repeat_n(2u8, counts.n2))
        .collect();
    let y: Vec<u8> = (0..n).map(|i| u8::from(i < v)).collect();
    Ok((NullFit::intercept_model(y)?, g))
}

/// Rejection region of `method` for the intercept model with genotype
/// counts `counts` and `v` cases.
pub fn conditional_rejection_region(
    counts: GenotypeCounts,
    v: usize,
    alpha: f64,
    method: Method,
) -> Result<RejectionRegion> {
    region_with(counts, v, alpha, method, &LogFactorials::new(counts.n()))
}

fn region_with(
    counts: GenotypeCounts,
    v: usize,
    alpha: f64,
    method: Method,
    lf: &LogFactorials,
) -> Result<RejectionRegion> {
    if method == Method::ExactBinary {
        return Err(Error::MethodNotApplicable {
            method: method.to_string(),
            reason: "the evaluation model has no covariates".into(),
        });
    }
    let method = if method.is_exact() {
        Method::ExactIntercept
    } else {
        method
    };
    let pmf = exact_intercept_pmf_with(counts, v, lf)?;
    let (fit, g) = intercept_instance(counts, v)?;
    let test = VariantTest::new(&fit, &g)?.with_exact_pmf(pmf.clone());
    let empty = RejectionRegion {
        method,
        alpha,
        v,
        c_lower: None,
        c_upper: None,
        conditional_error: 0.0,
    };
    if !test.is_testable() {
        return Ok(empty);
    }

    let points: Vec<f64> = pmf.iter().map(|(x, _)| x).collect();
    let rejects = |x: f64| -> Result<bool> { Ok(test.two_sided_at(method, x)?.p_two_sided <= alpha) };

    // grid search from the left, then separately from the right
    let mut left: Option<usize> = None;
    for (i, &x) in points.iter().enumerate() {
        if !rejects(x)? {
            break;
        }
        left = Some(i);
    }
    let mut right: Option<usize> = None;
    for i in (0..points.len()).rev() {
        if left.is_some_and(|l| i <= l) || !rejects(points[i])? {
            break;
        }
        right = Some(i);
    }

    let conditional_error = compensated_sum(
        pmf.probs
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| (left.is_some_and(|l| i <= l) || right.is_some_and(|r| i >= r)).then_some(p)),
    );
    Ok(RejectionRegion {
        c_lower: left.map(|i| points[i]),
        c_upper: right.map(|i| points[i]),
        conditional_error: conditional_error.min(1.0),
        ..empty
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalError {
    pub v: usize,
    pub error: f64,
    pub invalid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverallError {
    pub mu: f64,
    pub overall_error: f64,
    /// Probability that `sum Y` lands on a conditionally invalid `v`.
    pub invalid_probability: f64,
}

/// Conditional errors for `v = 1..n-1` and their binomial mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub method: Method,
    pub alpha: f64,
    pub n: usize,
    pub regions: Vec<RejectionRegion>,
    pub invalid_v: Vec<usize>,
    pub overall: Vec<OverallError>,
}

impl ErrorProfile {
    pub fn conditional(&self) -> impl Iterator<Item = ConditionalError> + '_ {
        self.regions.iter().map(|r| ConditionalError {
            v: r.v,
            error: r.conditional_error,
            invalid: r.is_invalid(),
        })
    }

    /// Share of `v in 1..n-1` at which the method is conditionally invalid.
    pub fn invalid_fraction(&self) -> f64 {
        self.invalid_v.len() as f64 / self.regions.len() as f64
    }
}

/// Conditional error for every `v`, then overall error and invalidity
/// probability for every `mu` in `mu_grid`.
pub fn error_profile(counts: GenotypeCounts, alpha: f64, method: Method, mu_grid: &[f64]) -> Result<ErrorProfile> {
    let n = counts.n();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two observations".into()));
    }
    if let Some(mu) = mu_grid.iter().find(|&&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::InvalidInput(format!("mu = {mu} is not inside (0, 1)")));
    }
    let lf = LogFactorials::new(n);
    let regions = (1..n)
        .into_par_iter()
        .map(|v| region_with(counts, v, alpha, method, &lf))
        .collect::<Result<Vec<_>>>()?;
    let invalid_v: Vec<usize> = regions.iter().filter(|r| r.is_invalid()).map(|r| r.v).collect();
    let overall = mu_grid
        .iter()
        .map(|&mu| {
            let weights = binomial_pmf(n, mu, &lf);
            OverallError {
                mu,
                overall_error: compensated_sum(regions.iter().map(|r| r.conditional_error * weights[r.v])),
                invalid_probability: compensated_sum(invalid_v.iter().map(|&v| weights[v])),
            }
        })
        .collect();
    Ok(ErrorProfile {
        method: regions.first().map_or(method, |r| r.method),
        alpha,
        n,
        regions,
        invalid_v,
        overall,
    })
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn mu_grid(points: usize, lo: f64, hi: f64) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_one_rejects_everything() {
        let r = conditional_rejection_region(GenotypeCounts::new(6, 3, 1), 4, 1.0, Method::DspaCc).unwrap();
        assert!((r.conditional_error - 1.0).abs() < 1e-12);
        assert_eq!(r.c_upper, None);
    }

    #[test]
    fn tiny_alpha_rejects_nothing() {
        let r = conditional_rejection_region(GenotypeCounts::new(6, 3, 1), 4, 1e-9, Method::ExactIntercept).unwrap();
        assert_eq!((r.c_lower, r.c_upper, r.conditional_error), (None, None, 0.0));
    }

    #[test]
    fn exact_region_is_valid() {
        let counts = GenotypeCounts::new(30, 8, 2);
        for v in 1..40 {
            for alpha in [0.2, 0.05, 0.01] {
                let r = conditional_rejection_region(counts, v, alpha, Method::ExactIntercept).unwrap();
                assert!(r.conditional_error <= alpha + VALIDITY_SLACK, "v = {v}");
            }
        }
    }

    #[test]
    fn grid_has_requested_points() {
        let g = mu_grid(199, 0.005, 0.995);
        assert_eq!(g.len(), 199);
        assert!((g[1] - 0.01).abs() < 1e-15 && (g[198] - 0.995).abs() < 1e-15);
    }
}
