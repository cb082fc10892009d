//! Tab-separated phenotype and genotype files.
//!
//! Phenotype file: a header, then one row per sample:
//! `ID  phenotype  [covariate ...]` with phenotype 0/1 and numeric
//! covariates.
//!
//! Genotype file: a header `ID  CHR  POS  sample1 ... sampleN`, then one row
//! per variant with genotypes `0`, `1`, `2` or `NA`. Samples may appear in
//! any order but must be exactly the phenotype samples.

use crate::error::{CliError, Result};
use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

#[derive(Debug, Clone, PartialEq)]
pub struct Phenotypes {
    pub ids: Vec<String>,
    pub response: Vec<u8>,
    pub covariate_names: Vec<String>,
    /// One vector per covariate, in sample order.
    pub covariates: Vec<Vec<f64>>,
}

impl Phenotypes {
    pub fn n(&self) -> usize {
        self.ids.len()
    }
}

pub fn parse_phenotypes<R: BufRead>(reader: R, source: &str) -> Result<Phenotypes> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(CliError::parse(source, 1, "empty phenotype file")),
            Some((i, line)) => {
                let line = line.map_err(|e| CliError::io(source, e))?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
        }
    };
    let names: Vec<&str> = header.1.split('\t').map(str::trim).collect();
    if names.len() < 2 {
        return Err(CliError::parse(
            source,
            header.0,
            "header needs at least ID and phenotype columns",
        ));
    }
    let covariate_names: Vec<String> = names[2..].iter().map(|s| s.to_string()).collect();
    let d = covariate_names.len();

    let mut ids = Vec::new();
    let mut response = Vec::new();
    let mut covariates = vec![Vec::new(); d];
    let mut seen = HashMap::new();
    for (i, line) in lines {
        let number = i + 1;
        let line = line.map_err(|e| CliError::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != d + 2 {
            return Err(CliError::parse(
                source,
                number,
                format!("expected {} columns, found {}", d + 2, fields.len()),
            ));
        }
        if let Some(first) = seen.insert(fields[0].to_string(), number) {
            return Err(CliError::parse(
                source,
                number,
                format!("duplicate sample '{}' (first on line {first})", fields[0]),
            ));
        }
        let y = match fields[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CliError::parse(
                    source,
                    number,
                    format!("phenotype must be 0 or 1, found '{other}'"),
                ));
            }
        };
        for (j, raw) in fields[2..].iter().enumerate() {
            let x: f64 = raw.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| {
                CliError::parse(
                    source,
                    number,
                    format!("covariate {} is not a finite number: '{raw}'", covariate_names[j]),
                )
            })?;
            covariates[j].push(x);
        }
        ids.push(fields[0].to_string());
        response.push(y);
    }
    if ids.is_empty() {
        return Err(CliError::parse(source, header.0, "no samples"));
    }
    Ok(Phenotypes {
        ids,
        response,
        covariate_names,
        covariates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRecord {
    pub id: String,
    pub chrom: String,
    pub pos: u64,
    /// Genotypes in phenotype sample order; `None` is missing.
    pub genotypes: Vec<Option<u8>>,
}

/// Reads variants one at a time, reordering samples to phenotype order.
pub struct GenotypeReader<R> {
    lines: std::iter::Enumerate<std::io::Lines<R>>,
    source: String,
    /// Phenotype index of each genotype column.
    order: Vec<usize>,
}

impl<R: BufRead> GenotypeReader<R> {
    pub fn new(reader: R, source: &str, sample_ids: &[String]) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (number, header) = loop {
            match lines.next() {
                None => return Err(CliError::parse(source, 1, "empty genotype file")),
                Some((i, line)) => {
                    let line = line.map_err(|e| CliError::io(source, e))?;
                    if !line.trim().is_empty() {
                        break (i + 1, line);
                    }
                }
            }
        };
        let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
        if columns.len() < 4 {
            return Err(CliError::parse(
                source,
                number,
                "header needs ID, CHR, POS and at least one sample",
            ));
        }
        let index: HashMap<&str, usize> = sample_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut order = Vec::with_capacity(columns.len() - 3);
        let mut unknown = Vec::new();
        let mut used = BTreeSet::new();
        for &name in &columns[3..] {
            match index.get(name) {
                Some(&i) if used.insert(i) => order.push(i),
                Some(_) => return Err(CliError::parse(source, number, format!("duplicate sample '{name}'"))),
                None => unknown.push(name.to_string()),
            }
        }
        let missing: Vec<&str> = sample_ids
            .iter()
            .enumerate()
            .filter(|(i, _)| !used.contains(i))
            .map(|(_, s)| s.as_str())
            .collect();
        if !unknown.is_empty() || !missing.is_empty() {
            let mut parts = Vec::new();
            if !unknown.is_empty() {
                parts.push(format!("not in phenotype file: {}", abbreviate(&unknown)));
            }
            if !missing.is_empty() {
                parts.push(format!("not in genotype file: {}", abbreviate(&missing)));
            }
            return Err(CliError::IdMismatch(parts.join("; ")));
        }
        Ok(Self {
            lines,
            source: source.to_string(),
            order,
        })
    }

    fn parse_line(&self, number: usize, line: &str) -> Result<VariantRecord> {
        let err = |m: String| CliError::parse(&self.source, number, m);
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != self.order.len() + 3 {
            return Err(err(format!(
                "expected {} columns, found {}",
                self.order.len() + 3,
                fields.len()
            )));
        }
        let pos = fields[2]
            .parse()
            .map_err(|_| err(format!("position is not a non-negative integer: '{}'", fields[2])))?;
        let mut genotypes = vec![None; self.order.len()];
        for (k, raw) in fields[3..].iter().enumerate() {
            genotypes[self.order[k]] = match *raw {
                "0" => Some(0),
                "1" => Some(1),
                "2" => Some(2),
                "NA" => None,
                other if other.parse::<f64>().is_ok() => {
                    return Err(err(format!(
                        "genotype '{other}' in sample column {}: dosages are not supported, \
                         the score test needs integer genotypes 0/1/2",
                        k + 1
                    )));
                }
                other => return Err(err(format!("genotype must be 0, 1, 2 or NA, found '{other}'"))),
            };
        }
        Ok(VariantRecord {
            id: fields[0].to_string(),
            chrom: fields[1].to_string(),
            pos,
            genotypes,
        })
    }
}

impl<R: BufRead> Iterator for GenotypeReader<R> {
    type Item = Result<VariantRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        for (i, line) in self.lines.by_ref() {
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(CliError::io(&self.source, e))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(i + 1, &line));
        }
        None
    }
}

fn abbreviate<S: AsRef<str>>(ids: &[S]) -> String {
    const SHOWN: usize = 10;
    let mut out: Vec<&str> = ids.iter().take(SHOWN).map(AsRef::as_ref).collect();
    let more;
    if ids.len() > SHOWN {
        more = format!("... ({} in total)", ids.len());
        out.push(&more);
    }
    out.join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHENO: &str = "ID\ty\tage\ns1\t1\t0.5\ns2\t0\t-1\ns3\t0\t2\n";

    #[test]
    fn parses_phenotypes() {
        let p = parse_phenotypes(PHENO.as_bytes(), "p.tsv").unwrap();
        assert_eq!(p.ids, ["s1", "s2", "s3"]);
        assert_eq!(p.response, [1, 0, 0]);
        assert_eq!(p.covariates, vec![vec![0.5, -1.0, 2.0]]);
    }

    #[test]
    fn phenotype_errors_carry_line_numbers() {
        let e = parse_phenotypes("ID\ty\ns1\t1\ns2\t3\n".as_bytes(), "p.tsv").unwrap_err();
        assert_eq!(e.to_string(), "p.tsv:3: phenotype must be 0 or 1, found '3'");
        let e = parse_phenotypes("ID\ty\tx\ns1\t1\tNA\n".as_bytes(), "p.tsv").unwrap_err();
        assert!(e.to_string().starts_with("p.tsv:2: covariate x"));
    }

    #[test]
    fn reorders_genotype_columns() {
        let p = parse_phenotypes(PHENO.as_bytes(), "p.tsv").unwrap();
        let geno = "ID\tCHR\tPOS\ts3\ts1\ts2\nrs1\t1\t100\t2\tNA\t0\n";
        let v: Vec<_> = GenotypeReader::new(geno.as_bytes(), "g.tsv", &p.ids).unwrap().collect();
        let r = v[0].as_ref().unwrap();
        assert_eq!(r.genotypes, [None, Some(0), Some(2)]);
        assert_eq!((r.id.as_str(), r.chrom.as_str(), r.pos), ("rs1", "1", 100));
    }

    #[test]
    fn rejects_dosages_and_mismatched_ids() {
        let p = parse_phenotypes(PHENO.as_bytes(), "p.tsv").unwrap();
        let geno = "ID\tCHR\tPOS\ts1\ts2\ts3\nrs1\t1\t100\t0.7\t0\t0\n";
        let e = GenotypeReader::new(geno.as_bytes(), "g.tsv", &p.ids)
            .unwrap()
            .next()
            .unwrap()
            .unwrap_err();
        assert!(e.to_string().contains("dosages are not supported"));
        let e = GenotypeReader::new("ID\tCHR\tPOS\ts1\ts2\ts9\n".as_bytes(), "g.tsv", &p.ids)
            .err()
            .unwrap();
        assert_eq!(
            e.to_string(),
            "sample IDs differ between phenotype and genotype files: not in phenotype file: s9; not in genotype file: s3"
        );
    }
}
