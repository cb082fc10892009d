//! Data model, restricted null fit and the score quantities every test uses.
//!
//! The null model is `logit mu_i = x_i' beta`; it is fitted once per dataset
//! and reused for every variant. For a genotype vector `g` the score is
//! `u = g'(y - mu_hat)`, the efficient genotype is
//! `g_tilde = g - X (X'WX)^{-1} X'W g`, and the conditional variance is
//! `g_tilde' W g_tilde`.

use crate::exact;
use crate::numeric::{compensated_sum, logistic, NeumaierSum};
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

const MAX_FIT_ITERATIONS: usize = 50;
const FIT_TOLERANCE_PER_OBSERVATION: f64 = 1e-8;
const SEPARATION_EPS: f64 = 1e-12;
const MAX_STEP_HALVINGS: usize = 30;
const MAX_POLISH_STEPS: usize = 3;
/// Relative size of `g_tilde' W g_tilde` against `g' W g` below which a
/// variant is treated as monomorphic given the covariates.
const UNTESTABLE_RELATIVE_VARIANCE: f64 = 1e-12;

/// Dense `n x d` design matrix stored row-major, so one observation's
/// covariates are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::Dimension(format!(
                "design data has {} entries, expected {nrows} x {ncols}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("design matrix has non-finite entries".into()));
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Dimension("design rows have unequal lengths".into()));
        }
        Self::from_row_major(rows.len(), ncols, rows.concat())
    }

    /// Intercept column followed by the given covariate columns.
    pub fn with_intercept(columns: &[Vec<f64>]) -> Result<Self> {
        let nrows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != nrows) {
            return Err(Error::Dimension("covariate columns have unequal lengths".into()));
        }
        let ncols = columns.len() + 1;
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            data.push(1.0);
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::from_row_major(nrows, ncols, data)
    }

    pub fn intercept(nrows: usize) -> Self {
        Self {
            nrows,
            ncols: 1,
            data: vec![1.0; nrows],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ncols)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// `sum_i w_i x_i x_i'` over the given rows (all rows when `rows` is `None`).
    pub fn weighted_gram(&self, weights: &[f64], rows: Option<&[usize]>) -> DMatrix<f64> {
        let d = self.ncols;
        let mut acc = vec![NeumaierSum::new(); d * d];
        let mut add = |i: usize| {
            let x = self.row(i);
            let w = weights[i];
            for a in 0..d {
                let wa = w * x[a];
                for b in a..d {
                    acc[a * d + b].add(wa * x[b]);
                }
            }
        };
        match rows {
            Some(idx) => idx.iter().for_each(|&i| add(i)),
            None => (0..self.nrows).for_each(&mut add),
        }
        DMatrix::from_fn(d, d, |a, b| {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            acc[a * d + b].value()
        })
    }

    /// `sum_i c_i x_i` over the given rows.
    pub fn weighted_column_sum(&self, coef: &[f64], rows: Option<&[usize]>) -> DVector<f64> {
        let d = self.ncols;
        let mut acc = vec![NeumaierSum::new(); d];
        let mut add = |i: usize| {
            let x = self.row(i);
            for a in 0..d {
                acc[a].add(coef[i] * x[a]);
            }
        };
        match rows {
            Some(idx) => idx.iter().for_each(|&i| add(i)),
            None => (0..self.nrows).for_each(&mut add),
        }
        DVector::from_iterator(d, acc.iter().map(NeumaierSum::value))
    }

    fn mul_vec(&self, beta: &DVector<f64>) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().zip(beta.iter()).map(|(x, b)| x * b).sum())
            .collect()
    }

    /// True when the matrix is `[1, x]` with `x` taking only the values 0 and 1.
    pub fn is_binary_covariate_model(&self) -> bool {
        self.ncols == 2 && self.rows().all(|r| r[0] == 1.0 && (r[1] == 0.0 || r[1] == 1.0))
    }
}

/// Response, non-genetic design (first column all ones) and one genotype
/// vector with entries in {0,1,2}.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub response: Vec<u8>,
    pub design: DesignMatrix,
    pub genotype: Vec<u8>,
}

impl Dataset {
    pub fn new(response: Vec<u8>, design: DesignMatrix, genotype: Vec<u8>) -> Result<Self> {
        validate_response(&response, &design)?;
        validate_genotype(&genotype, response.len())?;
        Ok(Self {
            response,
            design,
            genotype,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }
}

fn validate_response(y: &[u8], design: &DesignMatrix) -> Result<()> {
    let n = y.len();
    if design.nrows() != n {
        return Err(Error::Dimension(format!(
            "response has length {n} but design has {} rows",
            design.nrows()
        )));
    }
    if design.ncols() == 0 || n < design.ncols() {
        return Err(Error::Dimension(format!(
            "need n >= d >= 1, got n = {n}, d = {}",
            design.ncols()
        )));
    }
    if design.column(0).any(|x| x != 1.0) {
        return Err(Error::InvalidInput("first design column must be all ones".into()));
    }
    if let Some(i) = y.iter().position(|&v| v > 1) {
        return Err(Error::InvalidInput(format!("response {i} is not 0 or 1")));
    }
    let cases = y.iter().filter(|&&v| v == 1).count();
    if cases == 0 || cases == n {
        return Err(Error::InvalidInput("response is constant".into()));
    }
    Ok(())
}

pub(crate) fn validate_genotype(g: &[u8], n: usize) -> Result<()> {
    if g.len() != n {
        return Err(Error::Dimension(format!(
            "genotype has length {} but there are {n} observations",
            g.len()
        )));
    }
    if let Some(i) = g.iter().position(|&v| v > 2) {
        return Err(Error::InvalidInput(format!(
            "genotype {i} is {}, expected 0, 1 or 2",
            g[i]
        )));
    }
    Ok(())
}

/// Restricted (gamma = 0) maximum-likelihood fit of the logistic null model.
///
/// Immutable after construction; share it across per-variant evaluations.
#[derive(Debug, Clone)]
pub struct NullFit {
    design: DesignMatrix,
    response: Vec<u8>,
    beta_hat: DVector<f64>,
    mu_hat: Vec<f64>,
    w_hat: Vec<f64>,
    xtwx: DMatrix<f64>,
    xtwx_chol: Cholesky<f64, Dyn>,
    ln_det_xtwx: f64,
    iterations: usize,
}

/// Fit the null model for a dataset. The genotype is ignored.
pub fn fit_null(dataset: &Dataset) -> Result<NullFit> {
    NullFit::fit(&dataset.response, dataset.design.clone())
}

/// Full Newton steps past the convergence tolerance, kept while the score
/// keeps shrinking; quadratic convergence takes `mu_hat` to rounding level.
fn polish(
    design: &DesignMatrix,
    y: &[f64],
    mut beta: DVector<f64>,
    mut mu: Vec<f64>,
    mut max_score: f64,
) -> (DVector<f64>, Vec<f64>) {
    for _ in 0..MAX_POLISH_STEPS {
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(yi, mi)| yi - mi).collect();
        let score = design.weighted_column_sum(&resid, None);
        let Some(chol) = design.weighted_gram(&w, None).cholesky() else {
            break;
        };
        let candidate = &beta + chol.solve(&score);
        let cand_mu: Vec<f64> = design.mul_vec(&candidate).iter().map(|&e| logistic(e)).collect();
        let cand_resid: Vec<f64> = y.iter().zip(&cand_mu).map(|(yi, mi)| yi - mi).collect();
        let cand_score = design.weighted_column_sum(&cand_resid, None).amax();
        if !(cand_score < max_score) {
            break;
        }
        (beta, mu, max_score) = (candidate, cand_mu, cand_score);
    }
    (beta, mu)
}

impl NullFit {
    /// Newton-Raphson (IRLS) with step-halving on the log-likelihood.
    pub fn fit(response: &[u8], design: DesignMatrix) -> Result<Self> {
        validate_response(response, &design)?;
        let n = response.len();
        let d = design.ncols();

        let ones = vec![1.0; n];
        if design.weighted_gram(&ones, None).cholesky().is_none() {
            return Err(Error::RankDeficient);
        }

        let y: Vec<f64> = response.iter().map(|&v| v as f64).collect();
        let ybar = compensated_sum(y.iter().copied()) / n as f64;
        let mut beta = DVector::zeros(d);
        beta[0] = (ybar / (1.0 - ybar)).ln();

        let tolerance = FIT_TOLERANCE_PER_OBSERVATION * n as f64;
        let mut eta = design.mul_vec(&beta);
        let mut loglik = log_likelihood(&y, &eta);
        let mut iterations = 0;
        loop {
            let mu: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
            let resid: Vec<f64> = y.iter().zip(&mu).map(|(yi, mi)| yi - mi).collect();
            let score = design.weighted_column_sum(&resid, None);
            let max_score = score.amax();
            if max_score <= tolerance {
                let (beta, mu) = polish(&design, &y, beta, mu, max_score);
                return Self::from_fitted(design, response.to_vec(), beta, mu, iterations);
            }
            if iterations == MAX_FIT_ITERATIONS {
                if let Some((index, &mu)) = mu
                    .iter()
                    .enumerate()
                    .find(|(_, &m)| !(SEPARATION_EPS..=1.0 - SEPARATION_EPS).contains(&m))
                {
                    return Err(Error::Separation { index, mu });
                }
                return Err(Error::FitNoConvergence { iterations, max_score });
            }
            iterations += 1;

            let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
            let info = design.weighted_gram(&w, None);
            let step = match info.cholesky() {
                Some(chol) => chol.solve(&score),
                None => {
                    return Err(separation_or(&mu, Error::Factorization));
                }
            };

            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_STEP_HALVINGS {
                let candidate = &beta + &step * scale;
                let cand_eta = design.mul_vec(&candidate);
                let cand_loglik = log_likelihood(&y, &cand_eta);
                if cand_loglik.is_finite() && cand_loglik >= loglik - 1e-12 * loglik.abs() {
                    beta = candidate;
                    eta = cand_eta;
                    loglik = cand_loglik;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(separation_or(&mu, Error::FitNoConvergence { iterations, max_score }));
            }
        }
    }

    /// Exact null fit of the intercept model: `mu_hat = v / n` for every
    /// observation, where `v` is the number of cases.
    pub fn intercept_model(response: Vec<u8>) -> Result<Self> {
        let n = response.len();
        let design = DesignMatrix::intercept(n);
        validate_response(&response, &design)?;
        let v = response.iter().filter(|&&r| r == 1).count();
        let mu = v as f64 / n as f64;
        let beta = DVector::from_element(1, (mu / (1.0 - mu)).ln());
        Self::from_fitted(design, response, beta, vec![mu; n], 0)
    }

    fn from_fitted(
        design: DesignMatrix,
        response: Vec<u8>,
        beta_hat: DVector<f64>,
        mu_hat: Vec<f64>,
        iterations: usize,
    ) -> Result<Self> {
        if let Some((index, &mu)) = mu_hat
            .iter()
            .enumerate()
            .find(|(_, &m)| !(m > SEPARATION_EPS && m < 1.0 - SEPARATION_EPS))
        {
            return Err(Error::Separation { index, mu });
        }
        let w_hat: Vec<f64> = mu_hat.iter().map(|m| m * (1.0 - m)).collect();
        let xtwx = design.weighted_gram(&w_hat, None);
        let xtwx_chol = xtwx.clone().cholesky().ok_or(Error::Factorization)?;
        let ln_det_xtwx = 2.0 * xtwx_chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Self {
            design,
            response,
            beta_hat,
            mu_hat,
            w_hat,
            xtwx,
            xtwx_chol,
            ln_det_xtwx,
            iterations,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn response(&self) -> &[u8] {
        &self.response
    }

    /// Number of cases, `sum y_i`.
    pub fn cases(&self) -> usize {
        self.response.iter().filter(|&&r| r == 1).count()
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn mu_hat(&self) -> &[f64] {
        &self.mu_hat
    }

    pub fn w_hat(&self) -> &[f64] {
        &self.w_hat
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `X' W X`, the covariance of the nuisance scores `U_beta`.
    pub fn xtwx(&self) -> &DMatrix<f64> {
        &self.xtwx
    }

    pub fn ln_det_xtwx(&self) -> f64 {
        self.ln_det_xtwx
    }

    pub fn solve_xtwx(&self, b: &DVector<f64>) -> DVector<f64> {
        self.xtwx_chol.solve(b)
    }

    /// `X'(y - mu_hat)`; zero up to the fit tolerance.
    pub fn nuisance_score(&self) -> DVector<f64> {
        let resid: Vec<f64> = self
            .response
            .iter()
            .zip(&self.mu_hat)
            .map(|(&y, m)| y as f64 - m)
            .collect();
        self.design.weighted_column_sum(&resid, None)
    }
}

fn log_likelihood(y: &[f64], eta: &[f64]) -> f64 {
    // y*eta - ln(1 + e^eta)
    compensated_sum(y.iter().zip(eta).map(|(&yi, &e)| {
        let softplus = if e > 0.0 {
            e + (-e).exp().ln_1p()
        } else {
            e.exp().ln_1p()
        };
        yi * e - softplus
    }))
}

fn separation_or(mu: &[f64], other: Error) -> Error {
    match mu
        .iter()
        .enumerate()
        .find(|(_, &m)| !(m > SEPARATION_EPS && m < 1.0 - SEPARATION_EPS))
    {
        Some((index, &mu)) => Error::Separation { index, mu },
        None => other,
    }
}

/// Indices with a non-zero genotype.
pub(crate) fn carriers(g: &[u8]) -> Vec<usize> {
    g.iter()
        .enumerate()
        .filter_map(|(i, &gi)| (gi > 0).then_some(i))
        .collect()
}

/// Observed score `g'(y - mu_hat)`.
pub fn score_statistic(fit: &NullFit, g: &[u8]) -> Result<f64> {
    validate_genotype(g, fit.n())?;
    Ok(compensated_sum(
        g.iter()
            .zip(fit.response.iter().zip(&fit.mu_hat))
            .filter(|(&gi, _)| gi > 0)
            .map(|(&gi, (&y, &m))| gi as f64 * (y as f64 - m)),
    ))
}

/// `X' W g`, touching carrier rows only.
pub(crate) fn xtwg(fit: &NullFit, g: &[u8], carrier_rows: &[usize]) -> DVector<f64> {
    let coef: Vec<f64> = g.iter().zip(&fit.w_hat).map(|(&gi, w)| gi as f64 * w).collect();
    fit.design.weighted_column_sum(&coef, Some(carrier_rows))
}

/// Efficient genotype `g - X (X'WX)^{-1} X'W g`.
pub fn efficient_genotype(fit: &NullFit, g: &[u8]) -> Result<Vec<f64>> {
    validate_genotype(g, fit.n())?;
    let coef = fit.solve_xtwx(&xtwg(fit, g, &carriers(g)));
    Ok(fit
        .design
        .rows()
        .zip(g)
        .map(|(x, &gi)| gi as f64 - x.iter().zip(coef.iter()).map(|(a, b)| a * b).sum::<f64>())
        .collect())
}

/// Conditional variance `g'Wg - g'WX (X'WX)^{-1} X'Wg`, computed from
/// carrier rows only. Clamped at zero.
pub fn conditional_variance(fit: &NullFit, g: &[u8]) -> Result<f64> {
    validate_genotype(g, fit.n())?;
    let rows = carriers(g);
    let gwg = compensated_sum(rows.iter().map(|&i| {
        let gi = g[i] as f64;
        gi * gi * fit.w_hat[i]
    }));
    let b = xtwg(fit, g, &rows);
    let explained = b.dot(&fit.solve_xtwx(&b));
    Ok((gwg - explained).max(0.0))
}

/// `g_tilde' W g_tilde` for an already projected genotype.
pub fn projected_variance(fit: &NullFit, g_tilde: &[f64]) -> f64 {
    compensated_sum(g_tilde.iter().zip(&fit.w_hat).map(|(g, w)| g * g * w))
}

/// Per-variant score quantities.
#[derive(Debug, Clone)]
pub struct ScoreContext {
    /// Observed score `g'(y - mu_hat)` (equal to `g_tilde'(y - mu_hat)`).
    pub u: f64,
    pub g_tilde: Vec<f64>,
    /// Conditional variance `g_tilde' W g_tilde`.
    pub var_cond: f64,
    /// Smallest and largest conditional support point (a conservative
    /// envelope when the exact support is not available).
    pub lower: f64,
    pub upper: f64,
    /// Whether `lower`/`upper` are the exact conditional support bounds.
    pub support_exact: bool,
    testable: bool,
}

impl ScoreContext {
    pub fn new(fit: &NullFit, g: &[u8]) -> Result<Self> {
        let u = score_statistic(fit, g)?;
        let g_tilde = efficient_genotype(fit, g)?;
        let var_cond = projected_variance(fit, &g_tilde);
        let gwg = compensated_sum(g.iter().zip(&fit.w_hat).map(|(&gi, w)| (gi * gi) as f64 * w));
        let testable = var_cond > UNTESTABLE_RELATIVE_VARIANCE * gwg && gwg > 0.0;
        let support = exact::conditional_support(fit, g)?;
        Ok(Self {
            u,
            g_tilde,
            var_cond,
            lower: support.lower,
            upper: support.upper,
            support_exact: support.exact,
            testable,
        })
    }

    /// False for variants that are constant given the covariates
    /// (monomorphic genotypes in particular).
    pub fn is_testable(&self) -> bool {
        self.testable
    }
}
