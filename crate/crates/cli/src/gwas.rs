//! Two-stage genome-wide scan.
//!
//! The null model is fitted once. Every variant gets the normal-approximation
//! p-value; those with `p <= alpha_screen` are then tested with each
//! configured method. The screen is a heuristic: the normal approximation is
//! usually anti-conservative for rare variants, but a saddlepoint p-value can
//! occasionally be the smaller one, so `screen = false` refines every variant.

use crate::error::{CliError, Result};
use crate::input::{parse_phenotypes, GenotypeReader, Phenotypes, VariantRecord};
use lattice_spa::model::{DesignMatrix, NullFit};
use lattice_spa::pvalue::{Method, PvalueReport};
use lattice_spa::VariantTest;
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

/// Variants processed per parallel batch.
const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NaPolicy {
    /// Report variants with missing genotypes as filtered.
    #[default]
    Drop,
    /// Replace missing genotypes with the variant's most frequent genotype.
    Impute,
}

impl std::str::FromStr for NaPolicy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(Self::Drop),
            "impute" => Ok(Self::Impute),
            _ => Err(CliError::Config(format!("unknown NA policy '{s}' (drop, impute)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pheno: PathBuf,
    pub geno: PathBuf,
    pub methods: Vec<Method>,
    pub alpha_screen: f64,
    pub alpha_report: f64,
    pub screen: bool,
    pub min_mac: u64,
    pub min_maf: f64,
    pub na_policy: NaPolicy,
    pub threads: Option<usize>,
    /// `None` writes to standard output.
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(pheno: PathBuf, geno: PathBuf) -> Self {
        Self {
            pheno,
            geno,
            methods: vec![Method::DspaCc, Method::EspaCc],
            alpha_screen: 5e-5,
            alpha_report: 5e-8,
            screen: true,
            min_mac: 1,
            min_maf: 0.0,
            na_policy: NaPolicy::Drop,
            threads: None,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |a: f64| a > 0.0 && a < 1.0;
        if !in_unit(self.alpha_screen) || !in_unit(self.alpha_report) {
            return Err(CliError::Config("significance thresholds must lie in (0, 1)".into()));
        }
        if self.alpha_screen < self.alpha_report {
            return Err(CliError::Config(format!(
                "screening threshold {} is below the reporting threshold {}",
                self.alpha_screen, self.alpha_report
            )));
        }
        if !(0.0..=0.5).contains(&self.min_maf) {
            return Err(CliError::Config(format!("min MAF {} is not in [0, 0.5]", self.min_maf)));
        }
        if self.methods.contains(&Method::Normal) {
            return Err(CliError::Config(
                "the normal p-value is always reported; do not list it in --methods".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Passed the screen; every method was evaluated.
    Tested,
    /// Normal p-value above the screening threshold.
    ScreenedOut,
    FilteredMac,
    FilteredMaf,
    FilteredNa,
    /// Constant given the covariates.
    Untestable,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Tested => "tested",
            Status::ScreenedOut => "screened_out",
            Status::FilteredMac => "filtered_mac",
            Status::FilteredMaf => "filtered_maf",
            Status::FilteredNa => "filtered_na",
            Status::Untestable => "untestable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub id: String,
    pub chrom: String,
    pub pos: u64,
    pub n: usize,
    pub mac: u64,
    pub maf: f64,
    pub u: Option<f64>,
    pub variance: Option<f64>,
    pub status: Status,
    pub p_normal: Option<f64>,
    /// One entry per configured method.
    pub p_methods: Vec<Option<f64>>,
    pub significant: bool,
    pub notes: Vec<String>,
}

/// Null fit and settings shared by all variants.
pub struct Analysis<'a> {
    pub fit: NullFit,
    pub config: &'a RunConfig,
}

impl<'a> Analysis<'a> {
    pub fn new(pheno: &Phenotypes, config: &'a RunConfig) -> Result<Self> {
        let design = DesignMatrix::with_intercept(&pheno.covariates)?;
        let fit = NullFit::fit(&pheno.response, design)?;
        Ok(Self { fit, config })
    }

    pub fn analyze(&self, record: &VariantRecord) -> VariantResult {
        let config = self.config;
        let n = record.genotypes.len();
        let mut notes = Vec::new();
        let missing = record.genotypes.iter().filter(|g| g.is_none()).count();
        let mut row = VariantResult {
            id: record.id.clone(),
            chrom: record.chrom.clone(),
            pos: record.pos,
            n: n - missing,
            mac: 0,
            maf: 0.0,
            u: None,
            variance: None,
            status: Status::Tested,
            p_normal: None,
            p_methods: vec![None; config.methods.len()],
            significant: false,
            notes: Vec::new(),
        };
        let g: Vec<u8> = if missing == 0 {
            record.genotypes.iter().map(|g| g.expect("no missing values")).collect()
        } else {
            match config.na_policy {
                NaPolicy::Drop => {
                    row.status = Status::FilteredNa;
                    row.notes.push(format!("missing={missing}"));
                    return row;
                }
                NaPolicy::Impute => {
                    let fill = most_frequent(&record.genotypes);
                    notes.push(format!("imputed={missing}"));
                    record.genotypes.iter().map(|g| g.unwrap_or(fill)).collect()
                }
            }
        };
        let alleles: u64 = g.iter().map(|&x| u64::from(x)).sum();
        row.n = n;
        row.mac = alleles.min(2 * n as u64 - alleles);
        row.maf = row.mac as f64 / (2 * n) as f64;
        row.notes = notes;
        if row.mac < config.min_mac {
            row.status = Status::FilteredMac;
            return row;
        }
        if row.maf < config.min_maf {
            row.status = Status::FilteredMaf;
            return row;
        }

        let test = match VariantTest::new(&self.fit, &g) {
            Ok(t) => t,
            Err(e) => {
                row.status = Status::Untestable;
                row.notes.push(e.to_string());
                return row;
            }
        };
        if !test.is_testable() {
            row.status = Status::Untestable;
            return row;
        }
        row.u = Some(test.u());
        row.variance = Some(test.context().var_cond);
        let normal = test.two_sided(Method::Normal).map(|r| r.p_two_sided).ok();
        row.p_normal = normal;
        if config.screen && normal.is_none_or(|p| p > config.alpha_screen) {
            row.status = Status::ScreenedOut;
            return row;
        }
        for (k, &method) in config.methods.iter().enumerate() {
            match test.two_sided(method) {
                Ok(report) => {
                    row.notes.extend(flag_notes(&report));
                    row.p_methods[k] = Some(report.p_two_sided);
                }
                Err(e) => row.notes.push(format!("{method}: {e}")),
            }
        }
        row.significant = row.p_methods.iter().flatten().any(|&p| p <= config.alpha_report);
        row
    }
}

fn flag_notes(report: &PvalueReport) -> Vec<String> {
    let f = &report.flags;
    [
        (f.boundary, "boundary"),
        (f.fallback, "fallback"),
        (f.clamped, "clamped"),
    ]
    .into_iter()
    .filter(|(on, _)| *on)
    .map(|(_, name)| format!("{}:{name}", report.method))
    .collect()
}

fn most_frequent(genotypes: &[Option<u8>]) -> u8 {
    let mut counts = [0usize; 3];
    for g in genotypes.iter().flatten() {
        counts[*g as usize] += 1;
    }
    // ties go to the smaller genotype
    (0..3u8)
        .max_by_key(|&g| (counts[g as usize], std::cmp::Reverse(g)))
        .unwrap_or(0)
}

/// p-values in scientific notation with four significant digits.
pub fn format_p(p: Option<f64>) -> String {
    p.map_or_else(|| "NA".to_string(), |p| format!("{p:.3e}"))
}

pub fn header(methods: &[Method]) -> String {
    let mut cols = vec![
        "variant", "chrom", "pos", "n", "mac", "maf", "u", "var", "status", "p_normal",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    cols.extend(methods.iter().map(|m| format!("p_{m}")));
    cols.push("significant".into());
    cols.push("notes".into());
    cols.join("\t")
}

pub fn format_row(row: &VariantResult) -> String {
    let num = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut cols = vec![
        row.id.clone(),
        row.chrom.clone(),
        row.pos.to_string(),
        row.n.to_string(),
        row.mac.to_string(),
        format!("{:.6}", row.maf),
        num(row.u),
        num(row.variance),
        row.status.as_str().to_string(),
        format_p(row.p_normal),
    ];
    cols.extend(row.p_methods.iter().map(|&p| format_p(p)));
    cols.push(u8::from(row.significant).to_string());
    cols.push(if row.notes.is_empty() {
        ".".into()
    } else {
        row.notes.join(";")
    });
    cols.join("\t")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Summary {
    pub variants: usize,
    pub tested: usize,
    pub screened_out: usize,
    pub filtered: usize,
    pub untestable: usize,
    pub significant: usize,
}

impl Summary {
    fn add(&mut self, row: &VariantResult) {
        self.variants += 1;
        match row.status {
            Status::Tested => self.tested += 1,
            Status::ScreenedOut => self.screened_out += 1,
            Status::Untestable => self.untestable += 1,
            _ => self.filtered += 1,
        }
        self.significant += usize::from(row.significant);
    }
}

fn open(path: &PathBuf) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

/// Run the scan, writing one row per input variant to `out`.
pub fn run_gwas_to<W: Write>(config: &RunConfig, out: &mut W) -> Result<Summary> {
    config.validate()?;
    let pheno_name = config.pheno.display().to_string();
    let pheno = parse_phenotypes(open(&config.pheno)?, &pheno_name)?;
    let analysis = Analysis::new(&pheno, config)?;
    log::info!(
        "null model: {} samples, {} cases, {} covariates, {} iterations",
        pheno.n(),
        analysis.fit.cases(),
        pheno.covariate_names.len(),
        analysis.fit.iterations()
    );
    let geno_name = config.geno.display().to_string();
    let mut reader = GenotypeReader::new(open(&config.geno)?, &geno_name, &pheno.ids)?;

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = config.threads.filter(|&t| t > 0) {
            b = b.num_threads(t);
        }
        b.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?
    };
    let write_err = |e| CliError::io("output", e);
    writeln!(out, "{}", header(&config.methods)).map_err(write_err)?;
    let mut summary = Summary::default();
    loop {
        let batch = reader.by_ref().take(BATCH).collect::<Result<Vec<_>>>()?;
        if batch.is_empty() {
            break;
        }
        let rows: Vec<VariantResult> = pool.install(|| batch.par_iter().map(|r| analysis.analyze(r)).collect());
        for row in &rows {
            summary.add(row);
            writeln!(out, "{}", format_row(row)).map_err(write_err)?;
        }
    }
    out.flush().map_err(write_err)?;
    if summary.tested + summary.screened_out == 0 {
        log::warn!("no variant passed the filters");
    }
    log::info!(
        "{} variants: {} tested, {} screened out, {} filtered, {} untestable, {} significant",
        summary.variants,
        summary.tested,
        summary.screened_out,
        summary.filtered,
        summary.untestable,
        summary.significant
    );
    Ok(summary)
}

pub fn run_gwas(config: &RunConfig) -> Result<Summary> {
    match &config.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            run_gwas_to(config, &mut std::io::BufWriter::new(file))
        }
        None => run_gwas_to(config, &mut std::io::stdout().lock()),
    }
}
