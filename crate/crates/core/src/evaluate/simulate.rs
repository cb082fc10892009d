//! Monte-Carlo type-I error conditional on the phenotype vector.
//!
//! The case/control labels are fixed. Each replicate draws the nuisance
//! covariates `(x1, x2)` from their law given `y` under
//! `logit mu = beta0 + x1 + x2`, and a genotype independent of `y`; the null
//! model is refitted and every method tests the variant.

use super::quadrature::{beta0_for_prevalence, x1_probability_given_y, GaussHermite};
use crate::model::{DesignMatrix, NullFit};
use crate::numeric::logistic;
use crate::pvalue::Method;
use crate::variant::VariantTest;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    /// Number of cases; the first `cases` observations are cases.
    pub cases: usize,
    pub maf: f64,
    pub alpha: f64,
    pub replicates: u64,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Population prevalence used to solve for `beta0` when `beta0` is unset.
    pub prevalence: f64,
    pub beta0: Option<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            cases: 40,
            maf: 0.05,
            alpha: 1e-3,
            replicates: 100_000,
            methods: vec![Method::DspaCc, Method::EspaCc, Method::Espa],
            seed: 1,
            prevalence: 0.01,
            beta0: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.cases == 0 || self.cases >= self.n {
            return fail(format!(
                "cases = {} must lie strictly between 0 and n = {}",
                self.cases, self.n
            ));
        }
        if !(self.maf > 0.0 && self.maf <= 0.5) {
            return fail(format!("maf = {} is not in (0, 0.5]", self.maf));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha = {} is not in (0, 1]", self.alpha));
        }
        if self.replicates == 0 {
            return fail("replicates must be positive".into());
        }
        if self.methods.is_empty() {
            return fail("no methods requested".into());
        }
        if self.methods.iter().any(|m| m.is_exact()) {
            return fail("exact methods do not apply to the covariate model".into());
        }
        Ok(())
    }
}

/// Draws `(x1, x2)` given `y` for the simulation model.
///
/// `x1` comes from its two-point conditional law; `x2` is then drawn given
/// `(x1, y)` by rejection from the standard normal proposal, accepting with
/// probability `P(y | x1, x2) <= 1`.
#[derive(Debug, Clone, Copy)]
pub struct CovariateSampler {
    beta0: f64,
    x1_given_case: f64,
    x1_given_control: f64,
}

impl CovariateSampler {
    pub fn new(beta0: f64) -> Self {
        let gh = GaussHermite::default();
        Self {
            beta0,
            x1_given_case: x1_probability_given_y(beta0, 1, &gh),
            x1_given_control: x1_probability_given_y(beta0, 0, &gh),
        }
    }

    /// One draw of `(x1, x2)` and the number of normal proposals used.
    pub fn sample<R: Rng + ?Sized>(&self, y: u8, rng: &mut R) -> (f64, f64, u64) {
        let p = if y == 1 {
            self.x1_given_case
        } else {
            self.x1_given_control
        };
        let x1 = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        let mut proposals = 0;
        loop {
            proposals += 1;
            let x2: f64 = StandardNormal.sample(rng);
            let mu = logistic(self.beta0 + x1 + x2);
            let accept = if y == 1 { mu } else { 1.0 - mu };
            if rng.random::<f64>() < accept {
                return (x1, x2, proposals);
            }
        }
    }
}

/// Rejection count of one method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodTally {
    pub method: Method,
    pub rejections: u64,
    /// Replicates in which the method produced a p-value.
    pub evaluated: u64,
    /// Replicates in which the method failed.
    pub errors: u64,
}

impl MethodTally {
    pub fn rate(&self) -> f64 {
        if self.evaluated == 0 {
            f64::NAN
        } else {
            self.rejections as f64 / self.evaluated as f64
        }
    }

    /// Clopper-Pearson interval at the given confidence level.
    pub fn interval(&self, confidence: f64) -> (f64, f64) {
        clopper_pearson(self.rejections, self.evaluated, confidence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    pub beta0: f64,
    pub tallies: Vec<MethodTally>,
    /// Replicates whose null fit failed (e.g. separation).
    pub failed_fits: u64,
    /// Acceptance rates of the `x2` rejection sampler for cases and controls.
    pub case_acceptance: f64,
    pub control_acceptance: f64,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    rejections: Vec<u64>,
    evaluated: Vec<u64>,
    errors: Vec<u64>,
    failed_fits: u64,
    draws: [u64; 2],
    proposals: [u64; 2],
}

impl Accumulator {
    fn new(k: usize) -> Self {
        Self {
            rejections: vec![0; k],
            evaluated: vec![0; k],
            errors: vec![0; k],
            ..Self::default()
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for i in 0..self.rejections.len() {
            self.rejections[i] += other.rejections[i];
            self.evaluated[i] += other.evaluated[i];
            self.errors[i] += other.errors[i];
        }
        self.failed_fits += other.failed_fits;
        for j in 0..2 {
            self.draws[j] += other.draws[j];
            self.proposals[j] += other.proposals[j];
        }
        self
    }
}

fn run_replicate(config: &SimulationConfig, sampler: &CovariateSampler, y: &[u8], index: u64, acc: &mut Accumulator) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);
    let n = config.n;
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for &yi in y {
        let (a, b, proposals) = sampler.sample(yi, &mut rng);
        x1.push(a);
        x2.push(b);
        acc.draws[yi as usize] += 1;
        acc.proposals[yi as usize] += proposals;
    }
    let binomial = Binomial::new(2, config.maf).expect("maf validated");
    let g: Vec<u8> = (0..n).map(|_| binomial.sample(&mut rng) as u8).collect();

    let fit = DesignMatrix::with_intercept(&[x1, x2]).and_then(|design| NullFit::fit(y, design));
    let Ok(fit) = fit else {
        acc.failed_fits += 1;
        return;
    };
    let test = match VariantTest::new(&fit, &g) {
        Ok(t) => t,
        Err(_) => {
            acc.failed_fits += 1;
            return;
        }
    };
    for (k, &method) in config.methods.iter().enumerate() {
        match test.two_sided(method) {
            Ok(report) => {
                acc.evaluated[k] += 1;
                if !report.flags.untestable && report.p_two_sided <= config.alpha {
                    acc.rejections[k] += 1;
                }
            }
            Err(_) => acc.errors[k] += 1,
        }
    }
}

/// Empirical conditional type-I error of each configured method.
///
/// Replicate `i` draws from its own ChaCha stream of the master seed, so
/// results do not depend on the number of worker threads.
pub fn simulate_conditional_t1e(config: &SimulationConfig) -> Result<SimulationResult> {
    config.validate()?;
    let beta0 = match config.beta0 {
        Some(b) => b,
        None => beta0_for_prevalence(config.prevalence, &GaussHermite::default())?,
    };
    let sampler = CovariateSampler::new(beta0);
    let y: Vec<u8> = (0..config.n).map(|i| u8::from(i < config.cases)).collect();
    let k = config.methods.len();

    let acc = (0..config.replicates)
        .into_par_iter()
        .fold(
            || Accumulator::new(k),
            |mut acc, i| {
                run_replicate(config, &sampler, &y, i, &mut acc);
                acc
            },
        )
        .reduce(|| Accumulator::new(k), Accumulator::merge);

    let tallies = config
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| MethodTally {
            method,
            rejections: acc.rejections[i],
            evaluated: acc.evaluated[i],
            errors: acc.errors[i],
        })
        .collect();
    let rate = |j: usize| acc.draws[j] as f64 / acc.proposals[j].max(1) as f64;
    Ok(SimulationResult {
        config: config.clone(),
        beta0,
        tallies,
        failed_fits: acc.failed_fits,
        case_acceptance: rate(1),
        control_acceptance: rate(0),
    })
}

/// Exact (Clopper-Pearson) binomial confidence interval for `k` successes in
/// `n` trials.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(k <= n && n > 0, "need 0 <= k <= n and n > 0");
    let tail = 0.5 * (1.0 - confidence);
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).expect("positive shapes").inverse_cdf(tail)
    };
    let upper = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf)
            .expect("positive shapes")
            .inverse_cdf(1.0 - tail)
    };
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_reference_values() {
        // closed forms at the boundaries
        let (lo, hi) = clopper_pearson(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-10);
        let (lo, hi) = clopper_pearson(10, 10, 0.95);
        assert!((lo - 0.025f64.powf(0.1)).abs() < 1e-10);
        assert_eq!(hi, 1.0);
        let (lo, hi) = clopper_pearson(5, 10, 0.95);
        assert!((lo - 0.1870860).abs() < 1e-6 && (hi - 0.8129140).abs() < 1e-6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SimulationConfig::default();
        for bad in [
            SimulationConfig {
                cases: 0,
                ..base.clone()
            },
            SimulationConfig {
                cases: 2000,
                ..base.clone()
            },
            SimulationConfig {
                maf: 0.6,
                ..base.clone()
            },
            SimulationConfig {
                maf: 0.0,
                ..base.clone()
            },
            SimulationConfig {
                methods: vec![Method::ExactIntercept],
                ..base.clone()
            },
        ] {
            assert!(simulate_conditional_t1e(&bad).is_err());
        }
    }

    #[test]
    fn alpha_one_rejects_every_replicate() {
        let config = SimulationConfig {
            n: 200,
            cases: 20,
            maf: 0.2,
            alpha: 1.0,
            replicates: 20,
            ..SimulationConfig::default()
        };
        let r = simulate_conditional_t1e(&config).unwrap();
        for t in &r.tallies {
            assert_eq!(t.rejections, t.evaluated);
            assert_eq!(t.evaluated + t.errors + r.failed_fits, 20);
            assert_eq!(t.rate(), 1.0);
        }
    }

    #[test]
    fn results_are_reproducible() {
        let config = SimulationConfig {
            n: 300,
            cases: 15,
            alpha: 0.05,
            replicates: 40,
            ..SimulationConfig::default()
        };
        let a = simulate_conditional_t1e(&config).unwrap();
        let b = simulate_conditional_t1e(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooled_covariates_have_marginal_law() {
        let gh = GaussHermite::default();
        let beta0 = -1.0;
        let prev = super::super::quadrature::prevalence(beta0, &gh);
        let sampler = CovariateSampler::new(beta0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 400_000;
        let (mut s1, mut s2, mut s22) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let y = u8::from(rng.random::<f64>() < prev);
            let (x1, x2, _) = sampler.sample(y, &mut rng);
            s1 += x1;
            s2 += x2;
            s22 += x2 * x2;
        }
        let m = draws as f64;
        // Monte-Carlo error is about 1 / sqrt(m) = 0.0016
        assert!((s1 / m - 0.5).abs() < 0.006);
        assert!((s2 / m).abs() < 0.006);
        assert!((s22 / m - 1.0).abs() < 0.01);
    }
}
