//! Acceptance criteria for the score-test library.
//!
//! Each criterion is a function returning an [`Outcome`]; the `acceptance`
//! test target runs them all and prints one PASS/FAIL line per criterion.

use lattice_spa::cgf::{EfficientCgf, JointCgf, MarginalCgf};
use lattice_spa::evaluate::quadrature::{beta0_for_prevalence, GaussHermite};
use lattice_spa::evaluate::SimulationConfig;
use lattice_spa::evaluate::{clopper_pearson, error_profile, mu_grid, simulate_conditional_t1e, ErrorProfile};
use lattice_spa::exact::{
    conditional_support, exact_binary_covariate_pmf, exact_intercept_pmf, GenotypeCounts, LatticePmf, StratifiedCounts,
};
use lattice_spa::model::{efficient_genotype, DesignMatrix, NullFit};
use lattice_spa::pvalue::{reflect, Method, Sidedness};
use lattice_spa::VariantTest;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub criterion: u8,
    pub title: &'static str,
    pub pass: bool,
    pub summary: String,
}

impl Outcome {
    fn new(criterion: u8, title: &'static str, pass: bool, summary: String) -> Self {
        Self {
            criterion,
            title,
            pass,
            summary,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "criterion {:>2} {verdict}: {} -- {}",
            self.criterion, self.title, self.summary
        )
    }
}

fn genotype(counts: GenotypeCounts) -> Vec<u8> {
    std::iter::repeat_n(0u8, counts.n0)
        .chain(std::iter::repeat_n(1u8, counts.n1))
        .chain(std::iter::repeat_n(2u8, counts.n2))
        .collect()
}

fn intercept_fit(n: usize, v: usize) -> NullFit {
    NullFit::intercept_model((0..n).map(|i| u8::from(i < v)).collect()).expect("valid intercept model")
}

fn all_counts(n: usize) -> impl Iterator<Item = GenotypeCounts> {
    (0..=n).flat_map(move |n1| (0..=n - n1).map(move |n2| GenotypeCounts::new(n - n1 - n2, n1, n2)))
}

/// Counts of `g'y` over all 0/1 response vectors, indexed by the number of
/// cases in each of the (consecutive) strata of size `sizes`.
fn enumerate(g: &[u8], sizes: (usize, usize)) -> BTreeMap<(usize, usize), BTreeMap<usize, u64>> {
    let n = g.len();
    let l = sizes.0;
    let mut out: BTreeMap<(usize, usize), BTreeMap<usize, u64>> = BTreeMap::new();
    for mask in 0u32..(1u32 << n) {
        let v0 = (mask & ((1 << l) - 1)).count_ones() as usize;
        let v1 = (mask >> l).count_ones() as usize;
        let s: usize = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| g[i] as usize).sum();
        *out.entry((v0, v1)).or_default().entry(s).or_insert(0) += 1;
    }
    out
}

/// Largest absolute point difference; infinite if the pmf misses mass.
fn pmf_error(pmf: &LatticePmf, table: &BTreeMap<usize, u64>, shift: f64) -> f64 {
    let total: u64 = table.values().sum();
    let mut covered = 0;
    let mut worst = 0.0f64;
    for (u, p) in pmf.iter() {
        let s = u + shift;
        if (s - s.round()).abs() > 1e-9 {
            return f64::INFINITY;
        }
        let expected = table.get(&(s.round() as usize)).map_or(0.0, |&c| {
            covered += 1;
            c as f64 / total as f64
        });
        worst = worst.max((p - expected).abs());
    }
    if covered < table.len() {
        return f64::INFINITY;
    }
    worst
}

pub fn criterion_1() -> Outcome {
    let mut configs = 0usize;
    let mut worst = 0.0f64;
    for n in 2..=12 {
        for counts in all_counts(n) {
            let table = enumerate(&genotype(counts), (n, 0));
            for v in 1..n {
                let pmf = exact_intercept_pmf(counts, v).expect("valid configuration");
                let shift = counts.allele_count() as f64 * v as f64 / n as f64;
                worst = worst.max(pmf_error(&pmf, &table[&(v, 0)], shift));
                configs += 1;
            }
        }
    }
    let intercept_configs = configs;
    for l in 2..=10 {
        for m in 2..=12 - l {
            for group0 in all_counts(l) {
                for group1 in all_counts(m) {
                    let mut g = genotype(group0);
                    g.extend(genotype(group1));
                    let table = enumerate(&g, (l, m));
                    let counts = StratifiedCounts { group0, group1 };
                    for v0 in 1..l {
                        for v1 in 1..m {
                            let pmf = exact_binary_covariate_pmf(counts, v0, v1).expect("valid configuration");
                            let shift = group0.allele_count() as f64 * v0 as f64 / l as f64
                                + group1.allele_count() as f64 * v1 as f64 / m as f64;
                            worst = worst.max(pmf_error(&pmf, &table[&(v0, v1)], shift));
                            configs += 1;
                        }
                    }
                }
            }
        }
    }
    Outcome::new(
        1,
        "exact pmfs vs enumeration, n <= 12",
        worst <= 1e-12,
        format!(
            "{intercept_configs} intercept + {} binary-covariate configurations, max abs error {worst:.2e} (tol 1e-12)",
            configs - intercept_configs
        ),
    )
}

/// Error profiles for the (980, 20, 0) example, shared by criteria 2 to 4.
pub struct Profiles {
    profiles: BTreeMap<(Method, u64), ErrorProfile>,
}

pub const PROFILE_ALPHAS: [f64; 2] = [0.05, 5e-5];

impl Profiles {
    pub fn compute() -> Self {
        let counts = GenotypeCounts::new(980, 20, 0);
        let grid = mu_grid(199, 0.005, 0.995);
        let mut profiles = BTreeMap::new();
        for method in [
            Method::DspaCc,
            Method::EspaCc,
            Method::Normal,
            Method::Espa,
            Method::ExactIntercept,
        ] {
            for alpha in PROFILE_ALPHAS {
                let p = error_profile(counts, alpha, method, &grid).expect("profile of a valid configuration");
                profiles.insert((method, alpha.to_bits()), p);
            }
        }
        Self { profiles }
    }

    fn get(&self, method: Method, alpha: f64) -> &ErrorProfile {
        &self.profiles[&(method, alpha.to_bits())]
    }
}

pub fn criterion_2(profiles: &Profiles) -> Outcome {
    let expected: [(Method, f64, &[usize]); 4] = [
        (Method::DspaCc, 0.05, &[301, 325, 675, 699]),
        (Method::EspaCc, 0.05, &[301, 325, 675, 699]),
        (Method::DspaCc, 5e-5, &[]),
        (Method::EspaCc, 5e-5, &[406, 594]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (method, alpha, want) in expected {
        let got = &profiles.get(method, alpha).invalid_v;
        pass &= got.as_slice() == want;
        parts.push(format!("{method}@{alpha:e} {got:?}"));
    }
    Outcome::new(
        2,
        "conditionally invalid v, n = 1000, (980, 20, 0)",
        pass,
        parts.join("; "),
    )
}

pub fn criterion_3(profiles: &Profiles) -> Outcome {
    let expected = [
        (Method::Normal, 0.05, 0.40),
        (Method::Normal, 5e-5, 0.64),
        (Method::Espa, 0.05, 0.43),
        (Method::Espa, 5e-5, 0.39),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (method, alpha, want) in expected {
        let got = profiles.get(method, alpha).invalid_fraction();
        pass &= (got - want).abs() <= 0.03;
        parts.push(format!(
            "{method}@{alpha:e} {:.1}% (target {:.0}%)",
            100.0 * got,
            100.0 * want
        ));
    }
    Outcome::new(3, "invalid-v fractions within 3 points", pass, parts.join("; "))
}

pub fn criterion_4(profiles: &Profiles) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in PROFILE_ALPHAS {
        let p = profiles.get(Method::ExactIntercept, alpha);
        let worst = p.overall.iter().map(|o| o.overall_error).fold(0.0, f64::max);
        pass &= p.overall.len() == 199 && p.overall.iter().all(|o| o.overall_error <= alpha + 1e-12);
        parts.push(format!(
            "alpha {alpha:e}: max overall error {worst:.4e} over {} mu",
            p.overall.len()
        ));
    }
    Outcome::new(4, "exact test overall error <= alpha", pass, parts.join("; "))
}

pub fn criterion_5() -> Outcome {
    let s = conditional_support(&intercept_fit(1000, 10), &genotype(GenotypeCounts::new(980, 20, 0)))
        .expect("support of a valid configuration");
    let pass = (s.lower + 0.2).abs() <= 1e-12 && (s.upper - 9.8).abs() <= 1e-12 && s.exact;
    Outcome::new(
        5,
        "support of (980, 20, 0) with 10 cases",
        pass,
        format!("({}, {}), exact = {}", s.lower, s.upper, s.exact),
    )
}

pub fn criterion_6() -> Outcome {
    let a = reflect(4.5);
    let b = reflect(1.9);
    let mut pass = a == -4.5 && (b + 2.1).abs() <= 1e-12;
    // mu_hat = 0.01, sum g = 110: the support starts at -1.1, so the
    // reflection of 1.9 is not attainable
    let fit = intercept_fit(1000, 10);
    let g = genotype(GenotypeCounts::new(890, 110, 0));
    let test = VariantTest::new(&fit, &g).expect("valid variant");
    let lower = test.context().lower;
    pass &= (lower + 1.1).abs() <= 1e-12;
    let mut sided = Vec::new();
    for method in [Method::ExactIntercept, Method::DspaCc, Method::EspaCc] {
        let r = test.two_sided_at(method, 1.9).expect("p-value");
        let s = test.survival(method, 1.9).expect("tail").survival;
        pass &= r.sided == Sidedness::One
            && r.u_inv.is_some_and(|x| (x + 2.1).abs() <= 1e-12)
            && (r.p_two_sided - s).abs() <= 1e-15;
        sided.push(format!("{method} {:?}", r.sided));
    }
    Outcome::new(
        6,
        "reflection examples",
        pass,
        format!(
            "4.5 -> {a}, 1.9 -> {b:.12}; support min {lower:.12}; {}",
            sided.join(", ")
        ),
    )
}

pub fn criterion_7() -> Outcome {
    let mut worst = [(0.0f64, String::new()), (0.0f64, String::new())];
    let methods = [Method::DspaCc, Method::EspaCc];
    let mut points = 0usize;
    for n in [50usize, 200, 1000] {
        for prop in [0.05, 0.2, 0.5] {
            for maf in [0.02, 0.05, 0.2] {
                let n0 = (n as f64 * (1.0 - maf) * (1.0 - maf)).round() as usize;
                let n2 = (n as f64 * maf * maf).round() as usize;
                let counts = GenotypeCounts::new(n0, n - n0 - n2, n2);
                let v = (prop * n as f64).round() as usize;
                let fit = intercept_fit(n, v);
                let g = genotype(counts);
                let test = VariantTest::new(&fit, &g).expect("valid variant");
                let pmf = exact_intercept_pmf(counts, v).expect("valid configuration");
                for (u, _) in pmf.iter() {
                    let (s, l) = (pmf.survival(u), pmf.left_tail(u));
                    for (k, &method) in methods.iter().enumerate() {
                        let mut check = |exact: f64, approx: f64, side: &str| {
                            let rel = (approx / exact - 1.0).abs();
                            if rel > worst[k].0 {
                                worst[k] = (
                                    rel,
                                    format!("n={n} cases={prop} maf={maf} {side}({u:.3}) {approx:.3e} vs {exact:.3e}"),
                                );
                            }
                        };
                        if s >= 1e-6 {
                            check(s, test.survival(method, u).expect("tail").survival, "S");
                            points += 1;
                        }
                        if l >= 1e-6 {
                            check(l, test.left_tail(method, u).expect("tail"), "L");
                            points += 1;
                        }
                    }
                }
            }
        }
    }
    let pass = worst.iter().all(|w| w.0 <= 0.2);
    Outcome::new(
        7,
        "DSPA-CC / ESPA-CC tails within 20% of exact down to 1e-6",
        pass,
        format!(
            "{points} tail comparisons; max rel error DSPA-CC {:.3} at [{}], ESPA-CC {:.3} at [{}]",
            worst[0].0, worst[0].1, worst[1].0, worst[1].1
        ),
    )
}

/// Intercept, balanced binary and standard-normal covariates, about 3% cases.
fn balanced_fit(n: usize, rng: &mut ChaCha8Rng) -> NullFit {
    loop {
        let x1: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 2 == 1))).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let eta = -3.5 + 0.5 * x1[i] + 0.5 * x2[i];
                u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
            })
            .collect();
        let design = DesignMatrix::with_intercept(&[x1, x2]).expect("valid design");
        if let Ok(fit) = NullFit::fit(&y, design) {
            return fit;
        }
    }
}

pub fn criterion_8() -> Outcome {
    const DRAWS: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs = [(Method::FastDspaCc, Method::DspaCc), (Method::FastSpa, Method::Espa)];
    let mut worst = [(0.0f64, String::new()), (0.0f64, String::new())];
    let mut compared = 0usize;
    for n in [2000usize, 20_000] {
        let fit = balanced_fit(n, &mut rng);
        for mac in [3usize, 10, 50] {
            for _ in 0..DRAWS {
                let mut g = vec![0u8; n];
                for i in sample(&mut rng, n, mac) {
                    g[i] = 1;
                }
                let test = VariantTest::new(&fit, &g).expect("valid variant");
                // every attainable score: j of the carriers are cases
                let carrier_cases = (0..n).filter(|&i| g[i] == 1 && fit.response()[i] == 1).count();
                let base = test.u() - carrier_cases as f64;
                for j in 0..=mac {
                    let u = base + j as f64;
                    for (k, (fast, full)) in pairs.into_iter().enumerate() {
                        let pf = test.two_sided_at(fast, u).expect("p-value").p_two_sided;
                        let pu = test.two_sided_at(full, u).expect("p-value").p_two_sided;
                        if pu < 1e-10 {
                            continue;
                        }
                        compared += 1;
                        let d = (pf.log10() - pu.log10()).abs();
                        if d > worst[k].0 {
                            worst[k] = (d, format!("n={n} mac={mac} j={j}: {pf:.3e} vs {pu:.3e}"));
                        }
                    }
                }
            }
        }
    }

    // everyone a carrier: no normal remainder, identical results
    let fit = balanced_fit(400, &mut rng);
    let g: Vec<u8> = (0..400).map(|i| 1 + u8::from(i % 7 == 0)).collect();
    let test = VariantTest::new(&fit, &g).expect("valid variant");
    let mut identity = 0.0f64;
    let ctx = test.context();
    let mut u = ctx.lower;
    while u <= ctx.upper + 1e-9 {
        for (fast, full) in pairs {
            let a = test.two_sided_at(fast, u).expect("p-value").p_two_sided;
            let b = test.two_sided_at(full, u).expect("p-value").p_two_sided;
            identity = identity.max((a - b).abs() / b.max(f64::MIN_POSITIVE));
        }
        u += 1.0;
    }
    let pass = worst.iter().all(|w| w.0 <= 0.1) && identity <= 1e-12;
    Outcome::new(
        8,
        "fast vs full |dlog10 p| <= 0.1; identity with all carriers",
        pass,
        format!(
            "{compared} comparisons with full p >= 1e-10; fastDSPA-CC max {:.4} [{}]; fastSPA max {:.4} [{}]; all-carrier max rel diff {identity:.1e}",
            worst[0].0, worst[0].1, worst[1].0, worst[1].1
        ),
    )
}

pub fn criterion_9(replicates: u64) -> Outcome {
    let config = SimulationConfig {
        n: 2000,
        cases: 40,
        maf: 0.05,
        alpha: 1e-3,
        replicates,
        methods: vec![Method::DspaCc, Method::EspaCc, Method::Espa],
        seed: 20_190_101,
        prevalence: 0.01,
        beta0: None,
    };
    let result = simulate_conditional_t1e(&config).expect("simulation runs");
    let mut pass = true;
    let mut parts = vec![format!(
        "{replicates} replicates, beta0 {:.4}, failed fits {}",
        result.beta0, result.failed_fits
    )];
    for t in &result.tallies {
        let (lo, hi) = clopper_pearson(t.rejections, t.evaluated, 0.95);
        let ok = match t.method {
            Method::Espa => lo <= config.alpha && config.alpha <= hi,
            _ => hi <= config.alpha,
        };
        pass &= ok && t.errors == 0;
        parts.push(format!(
            "{} {}/{} = {:.2e}, 95% CI [{lo:.2e}, {hi:.2e}]",
            t.method,
            t.rejections,
            t.evaluated,
            t.rate()
        ));
    }
    Outcome::new(
        9,
        "simulated conditional type-I error, alpha = 1e-3",
        pass,
        parts.join("; "),
    )
}

fn fd_instance(rng: &mut ChaCha8Rng) -> (NullFit, Vec<f64>, Vec<u8>) {
    loop {
        let n = rng.random_range(30..200);
        let x1: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let rate: f64 = rng.random_range(0.05..0.5);
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < rate)).collect();
        let maf: f64 = rng.random_range(0.02..0.4);
        let g: Vec<u8> = (0..n)
            .map(|_| u8::from(rng.random::<f64>() < maf) + u8::from(rng.random::<f64>() < maf))
            .collect();
        if g.iter().all(|&x| x == g[0]) {
            continue;
        }
        let Ok(design) = DesignMatrix::with_intercept(&[x1, x2]) else {
            continue;
        };
        if let Ok(fit) = NullFit::fit(&y, design) {
            let t: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            return (fit, t, g);
        }
    }
}

pub fn criterion_10() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (fit, t, g) = fd_instance(&mut rng);
        let gf: Vec<f64> = g.iter().map(|&x| f64::from(x)).collect();
        let joint = JointCgf::new(fit.mu_hat(), fit.design(), &gf);
        let marginal = MarginalCgf::new(fit.mu_hat(), fit.design());
        let vgh = |f: &dyn Fn(&[f64]) -> lattice_spa::cgf::CgfEvaluation, t: &[f64]| {
            let e = f(t);
            let mut err = 0.0f64;
            for j in 0..t.len() {
                let mut tp = t.to_vec();
                let mut tm = t.to_vec();
                tp[j] += H;
                tm[j] -= H;
                let (ep, em) = (f(&tp), f(&tm));
                err = err.max(((ep.value - em.value) / (2.0 * H) - e.gradient[j]).abs());
                for i in 0..t.len() {
                    err = err.max(((ep.gradient[i] - em.gradient[i]) / (2.0 * H) - e.hessian[(i, j)]).abs());
                }
            }
            err
        };
        worst = worst.max(vgh(&|x| joint.value_grad_hess(x), &t));
        worst = worst.max(vgh(&|x| marginal.value_grad_hess(x), &t[..3]));
        let gt = efficient_genotype(&fit, &g).expect("valid genotype");
        let eff = EfficientCgf::new(fit.mu_hat(), &gt);
        let s = t[3];
        let (_, d1, d2) = eff.value_deriv1_deriv2(s);
        let (kp, d1p, _) = eff.value_deriv1_deriv2(s + H);
        let (km, d1m, _) = eff.value_deriv1_deriv2(s - H);
        worst = worst.max(((kp - km) / (2.0 * H) - d1).abs());
        worst = worst.max(((d1p - d1m) / (2.0 * H) - d2).abs());
    }
    let beta0 = beta0_for_prevalence(0.01, &GaussHermite::default()).expect("prevalence solve");
    let pass = worst <= 1e-6 && (beta0 + 5.6).abs() <= 0.05;
    Outcome::new(
        10,
        "CGF derivatives vs finite differences; beta0 for 1% prevalence",
        pass,
        format!("100 instances, max abs FD error {worst:.2e} (tol 1e-6); beta0 = {beta0:.5} (target -5.6 +- 0.05)"),
    )
}
