//! Command-line interface.

use crate::commands::{self, PmfTable, ProfileOverrides, SimulationOverrides};
use crate::error::{CliError, Result};
use crate::gwas::{run_gwas, NaPolicy, RunConfig};
use clap::{Args, Parser, Subcommand};
use lattice_spa::exact::GenotypeCounts;
use lattice_spa::Method;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "lattice-spa",
    version,
    about = "Saddlepoint score tests for rare variants in case-control studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-stage association scan: normal screen, then refined p-values.
    Gwas(GwasArgs),
    /// Exact null pmf of the score under the intercept model.
    ExactPmf(PmfArgs),
    /// Exact conditional and overall type-I error profiles.
    ErrorProfile(ProfileArgs),
    /// Monte-Carlo conditional type-I error with nuisance covariates.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct GwasArgs {
    /// Phenotype TSV: ID, 0/1 phenotype, covariates.
    #[arg(long)]
    pub pheno: PathBuf,
    /// Genotype TSV: ID, CHR, POS, one 0/1/2/NA column per sample.
    #[arg(long)]
    pub geno: PathBuf,
    /// Refined methods, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "dspa_cc,espa_cc")]
    pub methods: Vec<Method>,
    /// Normal-approximation p-value needed to refine a variant.
    #[arg(long, default_value_t = 5e-5)]
    pub alpha_screen: f64,
    /// Refined p-value needed to mark a variant significant.
    #[arg(long, default_value_t = 5e-8)]
    pub alpha_report: f64,
    /// Refine every variant instead of screening.
    #[arg(long)]
    pub no_screen: bool,
    #[arg(long, default_value_t = 1)]
    pub min_mac: u64,
    #[arg(long, default_value_t = 0.0)]
    pub min_maf: f64,
    /// Missing genotypes: `drop` filters the variant, `impute` uses the mode.
    #[arg(long, default_value = "drop")]
    pub na_policy: NaPolicy,
    /// Worker threads (default: all cores).
    #[arg(long, env = "LATTICE_SPA_THREADS")]
    pub threads: Option<usize>,
    /// Output TSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PmfArgs {
    /// Genotype counts `n0,n1,n2`.
    #[arg(long, value_parser = parse_counts)]
    pub counts: (usize, usize, usize),
    /// Number of cases.
    #[arg(long)]
    pub cases: usize,
    /// Mark the scores at least as extreme as this one.
    #[arg(long, allow_hyphen_values = true)]
    pub mark: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// `key = value` config (n0, n1, n2, alphas, methods, mu_points, mu_min, mu_max).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_counts)]
    pub counts: Option<(usize, usize, usize)>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub mu_points: Option<usize>,
    #[arg(long, env = "LATTICE_SPA_THREADS")]
    pub threads: Option<usize>,
    /// Output prefix for `_conditional.csv` and `_overall.csv`.
    #[arg(long, default_value = "profile")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key = value` config (n, cases, maf, alpha, replicates, methods, seed, prevalence, beta0).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub maf: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub replicates: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "LATTICE_SPA_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Genotype counts written `n0,n1,n2`.
fn parse_counts(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match parts[..] {
        [n0, n1, n2] => Ok((n0, n1, n2)),
        _ => Err(format!("expected three counts n0,n1,n2, found {}", parts.len())),
    }
}

fn writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Size the global pool used by the evaluation routines.
fn global_threads(threads: Option<usize>) {
    if let Some(t) = threads.filter(|&t| t > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gwas(a) => {
            let config = RunConfig {
                methods: a.methods,
                alpha_screen: a.alpha_screen,
                alpha_report: a.alpha_report,
                screen: !a.no_screen,
                min_mac: a.min_mac,
                min_maf: a.min_maf,
                na_policy: a.na_policy,
                threads: a.threads,
                out: a.out,
                ..RunConfig::new(a.pheno, a.geno)
            };
            run_gwas(&config)?;
        }
        Command::ExactPmf(a) => {
            let (n0, n1, n2) = a.counts;
            let table = PmfTable::new(GenotypeCounts::new(n0, n1, n2), a.cases, a.mark)?;
            if let Some(m) = &table.mark {
                log::info!("exact two-sided p-value at {}: {:e}", m.u, m.p_two_sided);
            }
            let mut out = writer(a.out.as_ref())?;
            table
                .write_csv(&mut out)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("output", e))?;
        }
        Command::ErrorProfile(a) => {
            global_threads(a.threads);
            let overrides = ProfileOverrides {
                counts: a.counts,
                alphas: a.alphas,
                methods: a.methods,
                mu_points: a.mu_points,
            };
            let config = commands::load_profile_config(a.config.as_deref(), overrides)?;
            let (cond, overall) = commands::run_error_profile(&config, &a.out)?;
            log::info!("wrote {} and {}", cond.display(), overall.display());
        }
        Command::Simulate(a) => {
            global_threads(a.threads);
            let overrides = SimulationOverrides {
                n: a.n,
                cases: a.cases,
                maf: a.maf,
                alpha: a.alpha,
                replicates: a.replicates,
                methods: a.methods,
                seed: a.seed,
            };
            let config = commands::load_simulation_config(a.config.as_deref(), overrides)?;
            let result = commands::run_simulation(&config)?;
            let mut out = writer(a.out.as_ref())?;
            commands::write_simulation(&result, &mut out)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("output", e))?;
        }
    }
    Ok(())
}
