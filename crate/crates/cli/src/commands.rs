//! The non-GWAS subcommands: exact pmf tables, exact error profiles and
//! type-I-error simulations.

use crate::error::{CliError, Result};
use lattice_spa::evaluate::config::ProfileConfig;
use lattice_spa::evaluate::{
    clopper_pearson, error_profile, mu_grid, simulate_conditional_t1e, SimulationConfig, SimulationResult,
};
use lattice_spa::exact::GenotypeCounts;
use lattice_spa::{Method, NullFit, PvalueReport, VariantTest};
use std::io::Write;
use std::path::{Path, PathBuf};

const TOL: f64 = 1e-9;

/// Exact null pmf of the score under the intercept model with `v` cases.
pub struct PmfTable {
    pub counts: GenotypeCounts,
    pub v: usize,
    pub rows: Vec<(f64, f64)>,
    pub lower: f64,
    pub upper: f64,
    /// Two-sided exact p-value at the marked score, if any.
    pub mark: Option<PvalueReport>,
}

impl PmfTable {
    pub fn new(counts: GenotypeCounts, v: usize, mark: Option<f64>) -> Result<Self> {
        let n = counts.n();
        if n < 2 || v == 0 || v >= n {
            return Err(CliError::Config(format!("need 0 < v < n, got v = {v}, n = {n}")));
        }
        let response: Vec<u8> = (0..n).map(|i| u8::from(i < v)).collect();
        let g: Vec<u8> = [(0u8, counts.n0), (1, counts.n1), (2, counts.n2)]
            .into_iter()
            .flat_map(|(value, k)| std::iter::repeat_n(value, k))
            .collect();
        let fit = NullFit::intercept_model(response)?;
        let test = VariantTest::new(&fit, &g)?;
        let pmf = test.exact_pmf()?;
        let mark = mark.map(|u| test.two_sided_at(Method::ExactIntercept, u)).transpose()?;
        Ok(Self {
            counts,
            v,
            rows: pmf.iter().collect(),
            lower: pmf.lower(),
            upper: pmf.upper(),
            mark,
        })
    }

    /// Whether the score `u` is at least as extreme as the marked one.
    pub fn in_pvalue_set(&self, u: f64) -> Option<bool> {
        let m = self.mark.as_ref()?;
        if m.u.abs() <= TOL {
            return Some(true);
        }
        let inv = m.u_inv.unwrap_or(-m.u);
        Some(if m.u > 0.0 {
            u >= m.u - TOL || u <= inv + TOL
        } else {
            u <= m.u + TOL || u >= inv - TOL
        })
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "u,probability,support_lower,support_upper,in_pvalue_set")?;
        for &(u, p) in &self.rows {
            let mark = self.in_pvalue_set(u).map_or("NA", |b| if b { "1" } else { "0" });
            writeln!(out, "{u},{p:e},{},{},{mark}", self.lower, self.upper)?;
        }
        Ok(())
    }
}

/// Overrides applied on top of a profile config file.
#[derive(Debug, Clone, Default)]
pub struct ProfileOverrides {
    pub counts: Option<(usize, usize, usize)>,
    pub alphas: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub mu_points: Option<usize>,
}

pub fn load_profile_config(path: Option<&Path>, o: ProfileOverrides) -> Result<ProfileConfig> {
    let mut config = match path {
        Some(p) => ProfileConfig::from_kv_text(&read(p)?)?,
        None => ProfileConfig::default(),
    };
    if let Some((n0, n1, n2)) = o.counts {
        config.counts = GenotypeCounts::new(n0, n1, n2);
    }
    if let Some(a) = o.alphas {
        config.alphas = a;
    }
    if let Some(m) = o.methods {
        config.methods = m;
    }
    if let Some(k) = o.mu_points {
        config.mu_points = k;
    }
    if let Some(m) = config
        .methods
        .iter()
        .find(|m| matches!(m, Method::ExactBinary | Method::FastSpa | Method::FastDspaCc))
    {
        return Err(CliError::Config(format!(
            "method {m} has no intercept-model error profile"
        )));
    }
    Ok(config)
}

/// Writes `{prefix}_conditional.csv` and `{prefix}_overall.csv`; returns the
/// two paths.
pub fn run_error_profile(config: &ProfileConfig, prefix: &str) -> Result<(PathBuf, PathBuf)> {
    let grid = mu_grid(config.mu_points, config.mu_min, config.mu_max);
    let cond_path = PathBuf::from(format!("{prefix}_conditional.csv"));
    let overall_path = PathBuf::from(format!("{prefix}_overall.csv"));
    let mut cond = create(&cond_path)?;
    let mut overall = create(&overall_path)?;
    let io = |p: &PathBuf| {
        let p = p.clone();
        move |e| CliError::io(p, e)
    };
    writeln!(cond, "method,alpha,v,c_lower,c_upper,conditional_error,invalid").map_err(io(&cond_path))?;
    writeln!(overall, "method,alpha,mu,overall_error,invalid_probability").map_err(io(&overall_path))?;
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for &alpha in &config.alphas {
        for &method in &config.methods {
            let profile = error_profile(config.counts, alpha, method, &grid)?;
            log::info!(
                "{method} at alpha {alpha}: {} of {} case counts invalid",
                profile.invalid_v.len(),
                profile.regions.len()
            );
            for r in &profile.regions {
                writeln!(
                    cond,
                    "{method},{alpha:e},{},{},{},{:e},{}",
                    r.v,
                    opt(r.c_lower),
                    opt(r.c_upper),
                    r.conditional_error,
                    u8::from(r.is_invalid())
                )
                .map_err(io(&cond_path))?;
            }
            for o in &profile.overall {
                writeln!(
                    overall,
                    "{method},{alpha:e},{},{:e},{:e}",
                    o.mu, o.overall_error, o.invalid_probability
                )
                .map_err(io(&overall_path))?;
            }
        }
    }
    cond.flush().map_err(io(&cond_path))?;
    overall.flush().map_err(io(&overall_path))?;
    Ok((cond_path, overall_path))
}

#[derive(Debug, Clone, Default)]
pub struct SimulationOverrides {
    pub n: Option<usize>,
    pub cases: Option<usize>,
    pub maf: Option<f64>,
    pub alpha: Option<f64>,
    pub replicates: Option<u64>,
    pub methods: Option<Vec<Method>>,
    pub seed: Option<u64>,
}

pub fn load_simulation_config(path: Option<&Path>, o: SimulationOverrides) -> Result<SimulationConfig> {
    let mut c = match path {
        Some(p) => SimulationConfig::from_kv_text(&read(p)?)?,
        None => SimulationConfig::default(),
    };
    c.n = o.n.unwrap_or(c.n);
    c.cases = o.cases.unwrap_or(c.cases);
    c.maf = o.maf.unwrap_or(c.maf);
    c.alpha = o.alpha.unwrap_or(c.alpha);
    c.replicates = o.replicates.unwrap_or(c.replicates);
    c.seed = o.seed.unwrap_or(c.seed);
    if let Some(m) = o.methods {
        c.methods = m;
    }
    c.validate()?;
    Ok(c)
}

pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationResult> {
    Ok(simulate_conditional_t1e(config)?)
}

/// Tab-separated tallies with 95% Clopper-Pearson intervals.
pub fn write_simulation<W: Write>(result: &SimulationResult, out: &mut W) -> std::io::Result<()> {
    let c = &result.config;
    writeln!(
        out,
        "# n={} cases={} maf={} alpha={:e} replicates={} seed={} beta0={:.5} failed_fits={}",
        c.n, c.cases, c.maf, c.alpha, c.replicates, c.seed, result.beta0, result.failed_fits
    )?;
    writeln!(out, "method\trejections\tevaluated\terrors\trate\tci_lower\tci_upper")?;
    for t in &result.tallies {
        let (lo, hi) = clopper_pearson(t.rejections, t.evaluated, 0.95);
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6e}\t{:.6e}\t{:.6e}",
            t.method,
            t.rejections,
            t.evaluated,
            t.errors,
            t.rate(),
            lo,
            hi
        )?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}
