#![allow(dead_code)]

use lattice_spa::exact::{GenotypeCounts, LatticePmf};
use lattice_spa::model::{DesignMatrix, NullFit};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

pub fn genotype(counts: GenotypeCounts) -> Vec<u8> {
    std::iter::repeat_n(0u8, counts.n0)
        .chain(std::iter::repeat_n(1u8, counts.n1))
        .chain(std::iter::repeat_n(2u8, counts.n2))
        .collect()
}

/// Intercept-model fit with the first `v` observations as cases.
pub fn intercept_fit(n: usize, v: usize) -> NullFit {
    NullFit::intercept_model((0..n).map(|i| u8::from(i < v)).collect()).unwrap()
}

/// Every `(n0, n1, n2)` with `n0 + n1 + n2 = n`.
pub fn all_counts(n: usize) -> impl Iterator<Item = GenotypeCounts> {
    (0..=n).flat_map(move |n1| (0..=n - n1).map(move |n2| GenotypeCounts::new(n - n1 - n2, n1, n2)))
}

/// Distribution of `g'y` over all 0/1 vectors `y` of length `g.len()`,
/// grouped by `sum y`: `result[v][s]` counts vectors with `sum y = v`,
/// `g'y = s`.
pub fn enumerate_responses(g: &[u8]) -> Vec<BTreeMap<usize, u64>> {
    let n = g.len();
    assert!(n <= 20);
    let mut out = vec![BTreeMap::new(); n + 1];
    for mask in 0u32..(1u32 << n) {
        let v = mask.count_ones() as usize;
        let s: usize = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| g[i] as usize).sum();
        *out[v].entry(s).or_insert(0) += 1;
    }
    out
}

/// Largest absolute difference between `pmf` and a brute-force count table,
/// after mapping lattice points back to `g'y = u + shift`.
pub fn max_abs_diff(pmf: &LatticePmf, counts: &BTreeMap<usize, u64>, shift: f64) -> f64 {
    let total: u64 = counts.values().sum();
    let mut seen = 0usize;
    let mut worst = 0.0f64;
    for (u, p) in pmf.iter() {
        let s = (u + shift).round();
        assert!((u + shift - s).abs() < 1e-9, "point {u} is off the lattice");
        let expected = counts.get(&(s as usize)).map_or(0.0, |&c| c as f64 / total as f64);
        if expected > 0.0 {
            seen += 1;
        }
        worst = worst.max((p - expected).abs());
    }
    // mass outside the pmf's range
    if seen < counts.len() {
        return f64::INFINITY;
    }
    worst
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `P(g'Y = s | sum Y = v)` for the intercept model in rational arithmetic.
pub fn rational_intercept_pmf(counts: GenotypeCounts, v: usize) -> BTreeMap<usize, BigRational> {
    let total = binomial(counts.n(), v);
    let mut out: BTreeMap<usize, BigRational> = BTreeMap::new();
    for k in 0..=counts.n2.min(v) {
        for a in 0..=counts.n1.min(v - k) {
            let rest = v - k - a;
            if rest > counts.n0 {
                continue;
            }
            let ways = binomial(counts.n2, k) * binomial(counts.n1, a) * binomial(counts.n0, rest);
            let entry = out.entry(a + 2 * k).or_insert_with(BigRational::zero);
            *entry += BigRational::new(ways, total.clone());
        }
    }
    out
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("finite ratio")
}

/// A fitted logistic model with intercept, one binary and one normal
/// covariate, and a 0/1/2 genotype drawn at allele frequency `maf`.
pub struct Instance {
    pub y: Vec<u8>,
    pub fit: NullFit,
    pub g: Vec<u8>,
}

pub fn random_instance(n: usize, case_rate: f64, maf: f64, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let x1: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let offset = (case_rate / (1.0 - case_rate)).ln();
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let eta = offset + 0.5 * x1[i] - 0.25 + 0.5 * x2[i];
                u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
            })
            .collect();
        let g: Vec<u8> = (0..n)
            .map(|_| u8::from(rng.random::<f64>() < maf) + u8::from(rng.random::<f64>() < maf))
            .collect();
        let cases = y.iter().filter(|&&v| v == 1).count();
        if cases < 2 || cases > n - 2 || g.iter().all(|&x| x == g[0]) {
            continue;
        }
        let Ok(design) = DesignMatrix::with_intercept(&[x1, x2]) else {
            continue;
        };
        if let Ok(fit) = NullFit::fit(&y, design) {
            return Instance { y, fit, g };
        }
    }
}
