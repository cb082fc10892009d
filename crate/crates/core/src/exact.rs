//! Exact conditional null distributions of the score on its step-1 lattice.
//!
//! Intercept model: given `sum y = v`, the numbers of cases among genotype
//! classes 1 and 2 follow a trivariate hypergeometric law, so
//! `U = V1 + 2 V2 - (n1 + 2 n2) v / n` has an exactly computable pmf.
//! A single binary covariate splits the sample into two independent strata;
//! the conditional pmf is the convolution of the two stratum pmfs.

use crate::model::NullFit;
use crate::numeric::{compensated_sum, LogFactorials, NeumaierSum};
use crate::{Error, Result};

/// Tolerance used when locating a real score on a lattice.
pub const LATTICE_TOLERANCE: f64 = 1e-6;

/// Numbers of individuals with genotype 0, 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GenotypeCounts {
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
}

impl GenotypeCounts {
    pub fn new(n0: usize, n1: usize, n2: usize) -> Self {
        Self { n0, n1, n2 }
    }

    /// Counts over all entries, or over `rows` only.
    pub fn from_genotype(g: &[u8], rows: Option<&[usize]>) -> Self {
        let mut c = Self::default();
        let mut add = |gi: u8| match gi {
            0 => c.n0 += 1,
            1 => c.n1 += 1,
            _ => c.n2 += 1,
        };
        match rows {
            Some(idx) => idx.iter().for_each(|&i| add(g[i])),
            None => g.iter().for_each(|&gi| add(gi)),
        }
        c
    }

    pub fn n(&self) -> usize {
        self.n0 + self.n1 + self.n2
    }

    /// `sum g = n1 + 2 n2`.
    pub fn allele_count(&self) -> usize {
        self.n1 + 2 * self.n2
    }

    /// Smallest and largest `g'y` over binary `y` with `sum y = v`.
    pub fn greedy_range(&self, v: usize) -> (usize, usize) {
        let twos = v.min(self.n2);
        let max = 2 * twos + (v - twos).min(self.n1);
        let rest = v.saturating_sub(self.n0);
        let ones = rest.min(self.n1);
        let min = ones + 2 * (rest - ones);
        (min, max)
    }
}

/// Counts per stratum of a binary covariate (`x = 0` and `x = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StratifiedCounts {
    pub group0: GenotypeCounts,
    pub group1: GenotypeCounts,
}

/// Probabilities on consecutive points `offset, offset + 1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePmf {
    pub offset: f64,
    pub probs: Vec<f64>,
}

impl LatticePmf {
    pub fn point_mass(at: f64) -> Self {
        Self {
            offset: at,
            probs: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.offset
    }

    pub fn upper(&self) -> f64 {
        self.offset + (self.probs.len() - 1) as f64
    }

    /// Support points with their probabilities.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.offset + i as f64, p))
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.iter().map(|(x, p)| x * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        compensated_sum(self.iter().map(|(x, p)| (x - m) * (x - m) * p))
    }

    /// Index of the first support point `>= u` (may be `len()`).
    fn first_at_or_above(&self, u: f64) -> usize {
        let k = (u - self.offset - LATTICE_TOLERANCE).ceil();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.probs.len())
        }
    }

    /// `P(U >= u)`.
    pub fn survival(&self, u: f64) -> f64 {
        let k = self.first_at_or_above(u);
        compensated_sum(self.probs[k..].iter().copied()).min(1.0)
    }

    /// `P(U <= u)`.
    pub fn left_tail(&self, u: f64) -> f64 {
        let k = self.first_at_or_above(u + 1.0);
        compensated_sum(self.probs[..k].iter().copied()).min(1.0)
    }

    /// Probability of the lattice point nearest to `u` (zero off the support).
    pub fn mass_at(&self, u: f64) -> f64 {
        let k = (u - self.offset).round();
        if (u - self.offset - k).abs() > LATTICE_TOLERANCE || k < 0.0 || k as usize >= self.probs.len() {
            0.0
        } else {
            self.probs[k as usize]
        }
    }

    /// Distribution of the sum of two independent lattice variables.
    pub fn convolve(&self, other: &Self) -> Self {
        let len = self.probs.len() + other.probs.len() - 1;
        let mut acc = vec![NeumaierSum::new(); len];
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.probs.iter().enumerate() {
                acc[i + j].add(a * b);
            }
        }
        Self {
            offset: self.offset + other.offset,
            probs: acc.iter().map(NeumaierSum::value).collect(),
        }
    }
}

/// Exact pmf of `U | U_beta = 0` for the intercept model with `v` cases.
pub fn exact_intercept_pmf(counts: GenotypeCounts, v: usize) -> Result<LatticePmf> {
    exact_intercept_pmf_with(counts, v, &LogFactorials::new(counts.n()))
}

/// As [`exact_intercept_pmf`], reusing a log-factorial table of size `>= n`.
pub fn exact_intercept_pmf_with(counts: GenotypeCounts, v: usize, lf: &LogFactorials) -> Result<LatticePmf> {
    let n = counts.n();
    if v == 0 || v >= n {
        return Err(Error::InvalidInput(format!(
            "case count {v} must lie strictly between 0 and n = {n}"
        )));
    }
    Ok(stratum_pmf(counts, v, lf))
}

/// Pmf for one stratum; `v` in `0..=n`, where `v = 0` or `v = n` give a point
/// mass at zero.
fn stratum_pmf(counts: GenotypeCounts, v: usize, lf: &LogFactorials) -> LatticePmf {
    let GenotypeCounts { n0, n1, n2 } = counts;
    let n = counts.n();
    assert!(lf.max() >= n, "log-factorial table too small");
    let mean_shift = counts.allele_count() as f64 * v as f64 / n.max(1) as f64;
    let (lo, hi) = counts.greedy_range(v);
    let ln_total = lf.ln_binomial(n, v);

    // u* = a + 2k with a ones and k twos among the cases.
    let mut probs = Vec::with_capacity(hi - lo + 1);
    for s in lo..=hi {
        let k_min = s.saturating_sub(n1).div_ceil(2);
        let k_max = (s / 2).min(n2);
        let mut acc = NeumaierSum::new();
        for k in k_min..=k_max {
            let a = s - 2 * k;
            if a + k > v || v - a - k > n0 {
                continue;
            }
            let ln_p = lf.ln_binomial(n0, v - a - k) + lf.ln_binomial(n1, a) + lf.ln_binomial(n2, k) - ln_total;
            acc.add(ln_p.exp());
        }
        probs.push(acc.value());
    }
    LatticePmf {
        offset: lo as f64 - mean_shift,
        probs,
    }
}

/// Exact pmf of `U | U_beta = 0` for the model with an intercept and one
/// binary covariate, with `v0` and `v1` cases in the two strata.
pub fn exact_binary_covariate_pmf(counts: StratifiedCounts, v0: usize, v1: usize) -> Result<LatticePmf> {
    let n = counts.group0.n() + counts.group1.n();
    exact_binary_covariate_pmf_with(counts, v0, v1, &LogFactorials::new(n))
}

pub fn exact_binary_covariate_pmf_with(
    counts: StratifiedCounts,
    v0: usize,
    v1: usize,
    lf: &LogFactorials,
) -> Result<LatticePmf> {
    let check = |c: GenotypeCounts, v: usize, name: &str| {
        let n = c.n();
        if (n == 0 && v == 0) || (v > 0 && v < n) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "stratum {name}: case count {v} must lie strictly between 0 and {n}"
            )))
        }
    };
    check(counts.group0, v0, "x = 0")?;
    check(counts.group1, v1, "x = 1")?;
    let a = stratum_pmf(counts.group0, v0, lf);
    let b = stratum_pmf(counts.group1, v1, lf);
    Ok(a.convolve(&b))
}

/// Conditional support bounds of the score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
    /// `false` when the bounds are the conservative envelope
    /// `[-g'mu, g'(1 - mu)]` rather than the attained extremes.
    pub exact: bool,
}

/// Smallest and largest conditional score values.
///
/// Exact (greedy allocation of cases to genotype classes) for the intercept
/// model and, stratum by stratum, for the binary-covariate model; otherwise
/// the envelope `[-g'mu_hat, g'(1 - mu_hat)]`.
pub fn conditional_support(fit: &NullFit, g: &[u8]) -> Result<Support> {
    crate::model::validate_genotype(g, fit.n())?;
    let mu = fit.mu_hat();
    let g_mu = compensated_sum(g.iter().zip(mu).filter(|(&gi, _)| gi > 0).map(|(&gi, m)| gi as f64 * m));
    let design = fit.design();
    let y = fit.response();

    if design.ncols() == 1 {
        let counts = GenotypeCounts::from_genotype(g, None);
        let (lo, hi) = counts.greedy_range(fit.cases());
        return Ok(Support {
            lower: lo as f64 - g_mu,
            upper: hi as f64 - g_mu,
            exact: true,
        });
    }
    if design.is_binary_covariate_model() {
        let (mut lo, mut hi) = (0usize, 0usize);
        for level in [0.0, 1.0] {
            let rows: Vec<usize> = (0..fit.n()).filter(|&i| design.row(i)[1] == level).collect();
            let counts = GenotypeCounts::from_genotype(g, Some(&rows));
            let v = rows.iter().filter(|&&i| y[i] == 1).count();
            let (a, b) = counts.greedy_range(v);
            lo += a;
            hi += b;
        }
        return Ok(Support {
            lower: lo as f64 - g_mu,
            upper: hi as f64 - g_mu,
            exact: true,
        });
    }
    let total = g.iter().map(|&gi| gi as f64).sum::<f64>();
    Ok(Support {
        lower: -g_mu,
        upper: total - g_mu,
        exact: false,
    })
}

/// Genotype counts for the intercept model, after checking it applies.
pub fn intercept_counts(fit: &NullFit, g: &[u8]) -> Result<GenotypeCounts> {
    if fit.d() != 1 {
        return Err(Error::MethodNotApplicable {
            method: "exact_intercept".into(),
            reason: "the null model has covariates besides the intercept".into(),
        });
    }
    crate::model::validate_genotype(g, fit.n())?;
    Ok(GenotypeCounts::from_genotype(g, None))
}

/// Stratum counts and stratum case counts for the binary-covariate model.
pub fn stratified_counts(fit: &NullFit, g: &[u8]) -> Result<(StratifiedCounts, usize, usize)> {
    if !fit.design().is_binary_covariate_model() {
        return Err(Error::MethodNotApplicable {
            method: "exact_binary".into(),
            reason: "the null model is not an intercept plus one binary covariate".into(),
        });
    }
    crate::model::validate_genotype(g, fit.n())?;
    let design = fit.design();
    let y = fit.response();
    let split = |level: f64| {
        let rows: Vec<usize> = (0..fit.n()).filter(|&i| design.row(i)[1] == level).collect();
        let v = rows.iter().filter(|&&i| y[i] == 1).count();
        (GenotypeCounts::from_genotype(g, Some(&rows)), v)
    };
    let (group0, v0) = split(0.0);
    let (group1, v1) = split(1.0);
    Ok((StratifiedCounts { group0, group1 }, v0, v1))
}
