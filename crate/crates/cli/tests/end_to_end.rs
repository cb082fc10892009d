//! Runs the scan and the subcommands on small synthetic files.

use lattice_spa_cli::gwas::{run_gwas_to, NaPolicy, RunConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

const N: usize = 1500;

/// Writes phenotype and genotype files; returns their paths.
///
/// Variants: `causal` is carried by 24 cases and 3 controls; `mono` is
/// monomorphic; `missing` has one NA; `null1..null20` are drawn
/// independently of the phenotype with MAF 0.01 to 0.2; `rare` has one
/// carrier.
fn write_dataset(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut pheno = String::from("ID\tphenotype\tage\tsex\n");
    let mut y = Vec::with_capacity(N);
    for i in 0..N {
        let age: f64 = StandardNormal.sample(&mut rng);
        let sex = rng.random_range(0..2u8);
        let eta = -3.0 + 0.4 * age + 0.3 * f64::from(sex);
        let case = u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
        y.push(case);
        writeln!(pheno, "s{i}\t{case}\t{age:.4}\t{sex}").unwrap();
    }
    let mut cases: Vec<usize> = (0..N).filter(|&i| y[i] == 1).collect();
    let mut controls: Vec<usize> = (0..N).filter(|&i| y[i] == 0).collect();
    cases.shuffle(&mut rng);
    controls.shuffle(&mut rng);
    assert!(cases.len() > 40, "only {} cases", cases.len());

    // genotype columns in reverse sample order to exercise reordering
    let order: Vec<usize> = (0..N).rev().collect();
    let mut geno = String::from("ID\tCHR\tPOS");
    for &i in &order {
        write!(geno, "\ts{i}").unwrap();
    }
    geno.push('\n');
    let mut row = |id: &str, pos: u64, g: &[Option<u8>]| {
        write!(geno, "{id}\t1\t{pos}").unwrap();
        for &i in &order {
            match g[i] {
                Some(v) => write!(geno, "\t{v}").unwrap(),
                None => geno.push_str("\tNA"),
            }
        }
        geno.push('\n');
    };
    let mut causal = vec![Some(0); N];
    for &i in cases.iter().take(24).chain(controls.iter().take(3)) {
        causal[i] = Some(1);
    }
    row("causal", 100, &causal);
    row("mono", 200, &vec![Some(0); N]);
    let mut missing = vec![Some(0); N];
    missing[5] = None;
    missing[7] = Some(1);
    row("missing", 300, &missing);
    for k in 1..=20u64 {
        let maf = 0.01 * k as f64;
        let g: Vec<Option<u8>> = (0..N)
            .map(|_| Some(u8::from(rng.random::<f64>() < maf) + u8::from(rng.random::<f64>() < maf)))
            .collect();
        row(&format!("null{k}"), 1000 + k, &g);
    }
    let mut rare = vec![Some(0); N];
    rare[controls[10]] = Some(1);
    row("rare", 5000, &rare);

    let p = dir.join("pheno.tsv");
    let g = dir.join("geno.tsv");
    std::fs::write(&p, pheno).unwrap();
    std::fs::write(&g, geno).unwrap();
    (p, g)
}

fn scan(config: &RunConfig) -> String {
    let mut out = Vec::new();
    run_gwas_to(config, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

/// Rows keyed by variant id, as column-name to value maps.
fn rows(table: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split('\t').map(String::from))
                .collect()
        })
        .collect()
}

fn find<'a>(
    rows: &'a [std::collections::HashMap<String, String>],
    id: &str,
) -> &'a std::collections::HashMap<String, String> {
    rows.iter().find(|r| r["variant"] == id).unwrap()
}

#[test]
fn causal_variant_is_refined_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = write_dataset(dir.path());
    let table = scan(&RunConfig::new(p, g));
    let rows = rows(&table);
    assert_eq!(rows.len(), 24);
    let ids: Vec<&str> = rows.iter().map(|r| r["variant"].as_str()).collect();
    assert_eq!(&ids[..3], ["causal", "mono", "missing"]);

    let causal = find(&rows, "causal");
    assert_eq!(causal["status"], "tested");
    assert_eq!(causal["mac"], "27");
    let p_dspa: f64 = causal["p_dspa_cc"].parse().unwrap();
    let p_espa: f64 = causal["p_espa_cc"].parse().unwrap();
    let p_norm: f64 = causal["p_normal"].parse().unwrap();
    assert!(p_norm <= 5e-5);
    assert!(p_dspa > 0.0 && p_dspa < 1e-8, "{p_dspa}");
    assert!(p_espa > 0.0 && p_espa < 1e-8, "{p_espa}");
    assert_eq!(causal["significant"], "1");

    assert_eq!(find(&rows, "mono")["status"], "filtered_mac");
    assert_eq!(find(&rows, "missing")["status"], "filtered_na");
    for r in rows.iter().filter(|r| r["variant"].starts_with("null")) {
        assert!(["screened_out", "tested"].contains(&r["status"].as_str()));
        if r["status"] == "screened_out" {
            assert_eq!(r["p_dspa_cc"], "NA");
            assert_ne!(r["p_normal"], "NA");
        }
    }
}

#[test]
fn monomorphic_variant_is_untestable_without_a_mac_filter() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = write_dataset(dir.path());
    let config = RunConfig {
        min_mac: 0,
        ..RunConfig::new(p, g)
    };
    let rows = rows(&scan(&config));
    let mono = find(&rows, "mono");
    assert_eq!(mono["status"], "untestable");
    assert_eq!(mono["p_normal"], "NA");
}

#[test]
fn imputation_keeps_variants_with_missing_genotypes() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = write_dataset(dir.path());
    let config = RunConfig {
        na_policy: NaPolicy::Impute,
        screen: false,
        ..RunConfig::new(p, g)
    };
    let rows = rows(&scan(&config));
    let missing = find(&rows, "missing");
    assert_eq!(missing["status"], "tested");
    assert_eq!(missing["mac"], "1");
    assert!(missing["notes"].contains("imputed=1"));
    // without the screen every polymorphic variant gets refined p-values
    assert!(rows
        .iter()
        .filter(|r| r["status"] == "tested")
        .all(|r| r["p_espa_cc"] != "NA"));
}

#[test]
fn everything_filtered_still_writes_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = write_dataset(dir.path());
    let config = RunConfig {
        min_mac: 100_000,
        ..RunConfig::new(p, g)
    };
    let mut out = Vec::new();
    let summary = run_gwas_to(&config, &mut out).unwrap();
    assert_eq!(summary.variants, 24);
    assert_eq!(summary.tested + summary.screened_out, 0);
    let rows = rows(&String::from_utf8(out).unwrap());
    assert!(rows.iter().all(|r| r["status"].starts_with("filtered")));
}

#[test]
fn output_does_not_depend_on_the_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = write_dataset(dir.path());
    let base = RunConfig {
        screen: false,
        ..RunConfig::new(p, g)
    };
    let one = scan(&RunConfig {
        threads: Some(1),
        ..base.clone()
    });
    let three = scan(&RunConfig {
        threads: Some(3),
        ..base
    });
    assert_eq!(one, three);
}

#[test]
fn mismatched_samples_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = write_dataset(dir.path());
    let g = dir.path().join("bad.tsv");
    std::fs::write(&g, "ID\tCHR\tPOS\ts0\tother\n").unwrap();
    let err = run_gwas_to(&RunConfig::new(p, g), &mut Vec::new()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("not in phenotype file: other"), "{msg}");
    assert!(msg.contains("not in genotype file: s1, s2"), "{msg}");
}

#[test]
fn binary_runs_the_scan() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = write_dataset(dir.path());
    let out = dir.path().join("out.tsv");
    let status = Command::new(env!("CARGO_BIN_EXE_lattice-spa"))
        .args(["gwas", "--pheno"])
        .arg(&p)
        .arg("--geno")
        .arg(&g)
        .args(["--methods", "dspa_cc,fast_dspa_cc", "--threads", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(out).unwrap();
    assert!(table
        .lines()
        .next()
        .unwrap()
        .ends_with("p_dspa_cc\tp_fast_dspa_cc\tsignificant\tnotes"));
    assert_eq!(table.lines().count(), 25);
}

#[test]
fn binary_rejects_inverted_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let (p, g) = write_dataset(dir.path());
    let output = Command::new(env!("CARGO_BIN_EXE_lattice-spa"))
        .args(["gwas", "--alpha-screen", "1e-9", "--pheno"])
        .arg(&p)
        .arg("--geno")
        .arg(&g)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("below the reporting threshold"));
}

#[test]
fn exact_pmf_table() {
    let output = Command::new(env!("CARGO_BIN_EXE_lattice-spa"))
        .args(["exact-pmf", "--counts", "3,2,0", "--cases", "2", "--mark", "1.2"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("u,probability,support_lower,support_upper,in_pvalue_set")
    );
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    let prob = |r: &Vec<String>| r[1].parse::<f64>().unwrap();
    assert!((rows.iter().map(prob).sum::<f64>() - 1.0).abs() < 1e-14);
    let marked: f64 = rows.iter().filter(|r| r[4] == "1").map(prob).sum();
    assert!((marked - 0.1).abs() < 1e-14);
}

#[test]
fn error_profile_and_simulation_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("small");
    let status = Command::new(env!("CARGO_BIN_EXE_lattice-spa"))
        .args([
            "error-profile",
            "--counts",
            "36,4,0",
            "--alphas",
            "0.05",
            "--methods",
            "exact_intercept,dspa_cc",
        ])
        .args(["--mu-points", "5", "--out"])
        .arg(&prefix)
        .status()
        .unwrap();
    assert!(status.success());
    let cond = std::fs::read_to_string(dir.path().join("small_conditional.csv")).unwrap();
    let overall = std::fs::read_to_string(dir.path().join("small_overall.csv")).unwrap();
    assert_eq!(cond.lines().count(), 1 + 2 * 39);
    assert_eq!(overall.lines().count(), 1 + 2 * 5);
    // the exact test never exceeds its level
    for line in cond.lines().skip(1).filter(|l| l.starts_with("exact_intercept")) {
        let err: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(err <= 0.05 + 1e-12, "{line}");
    }

    let config = dir.path().join("sim.txt");
    std::fs::write(
        &config,
        "n = 300\ncases = 30\nmaf = 0.05\nalpha = 0.05\nmethods = dspa_cc, espa\n",
    )
    .unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_lattice-spa"))
        .args(["simulate", "--replicates", "50", "--seed", "3", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.starts_with("# n=300 cases=30"));
    assert!(text.contains("replicates=50"));
    let data: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(data.len(), 2);
    assert!(data[0].starts_with("dspa_cc\t"));
}
