//! Experiment configs as `key = value` text.
//!
//! Blank lines and `#` comments are ignored; lists are comma separated.
//!
//! ```text
//! # simulation
//! n = 2000
//! cases = 40
//! maf = 0.05
//! alpha = 1e-3
//! replicates = 100000
//! methods = dspa_cc, espa_cc, espa
//! seed = 7
//! ```

use super::simulate::SimulationConfig;
use crate::exact::GenotypeCounts;
use crate::pvalue::Method;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::str::FromStr;

/// Parsed key-value pairs, consumed key by key so leftovers can be reported.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected 'key = value'",
                    number + 1
                )));
            };
            let key = key.trim().to_ascii_lowercase().replace('-', "_");
            if entries
                .insert(key.clone(), (number + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::InvalidInput(format!(
                    "line {}: duplicate key '{key}'",
                    number + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, value)) => value
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidInput(format!("line {line}: cannot parse {key} = '{value}'"))),
        }
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, value)) => value
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::InvalidInput(format!("line {line}: cannot parse '{s}' in {key}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::InvalidInput(format!("line {line}: unknown key '{key}'"))),
        }
    }
}

impl SimulationConfig {
    /// Parse a simulation config; missing keys keep their defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let d = Self::default();
        let config = Self {
            n: kv.take("n")?.unwrap_or(d.n),
            cases: kv.take("cases")?.unwrap_or(d.cases),
            maf: kv.take("maf")?.unwrap_or(d.maf),
            alpha: kv.take("alpha")?.unwrap_or(d.alpha),
            replicates: kv.take("replicates")?.unwrap_or(d.replicates),
            methods: kv.take_list("methods")?.unwrap_or(d.methods),
            seed: kv.take("seed")?.unwrap_or(d.seed),
            prevalence: kv.take("prevalence")?.unwrap_or(d.prevalence),
            beta0: kv.take("beta0")?.or(d.beta0),
        };
        kv.finish()?;
        config.validate()?;
        Ok(config)
    }
}

/// Settings for an intercept-model error profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub counts: GenotypeCounts,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub mu_points: usize,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            counts: GenotypeCounts::new(980, 20, 0),
            alphas: vec![0.05, 5e-5],
            methods: vec![
                Method::ExactIntercept,
                Method::Normal,
                Method::Espa,
                Method::EspaCc,
                Method::DspaCc,
            ],
            mu_points: 199,
            mu_min: 0.005,
            mu_max: 0.995,
        }
    }
}

impl ProfileConfig {
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let d = Self::default();
        let counts = GenotypeCounts::new(
            kv.take("n0")?.unwrap_or(d.counts.n0),
            kv.take("n1")?.unwrap_or(d.counts.n1),
            kv.take("n2")?.unwrap_or(d.counts.n2),
        );
        let config = Self {
            counts,
            alphas: kv.take_list("alphas")?.or(kv.take_list("alpha")?).unwrap_or(d.alphas),
            methods: kv.take_list("methods")?.unwrap_or(d.methods),
            mu_points: kv.take("mu_points")?.unwrap_or(d.mu_points),
            mu_min: kv.take("mu_min")?.unwrap_or(d.mu_min),
            mu_max: kv.take("mu_max")?.unwrap_or(d.mu_max),
        };
        kv.finish()?;
        if config.counts.n() < 2 {
            return Err(Error::InvalidInput("profile needs n0 + n1 + n2 >= 2".into()));
        }
        if !(config.mu_min > 0.0 && config.mu_max < 1.0 && config.mu_min <= config.mu_max) {
            return Err(Error::InvalidInput(
                "mu range must satisfy 0 < mu_min <= mu_max < 1".into(),
            ));
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simulation_config() {
        let text = "# scaled run\nn = 500\ncases=10\nmethods = dspa_cc, espa\nseed = 3 # trailing\n";
        let c = SimulationConfig::from_kv_text(text).unwrap();
        assert_eq!((c.n, c.cases, c.seed), (500, 10, 3));
        assert_eq!(c.methods, vec![Method::DspaCc, Method::Espa]);
        assert_eq!(c.maf, SimulationConfig::default().maf);
    }

    #[test]
    fn reports_bad_lines() {
        let err = SimulationConfig::from_kv_text("n = 10\nmaf: 0.1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        let err = SimulationConfig::from_kv_text("n = 100\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown key 'bogus'"));
        let err = SimulationConfig::from_kv_text("n = ten\n").unwrap_err();
        assert!(err.to_string().contains("cannot parse"));
    }

    #[test]
    fn parses_profile_config() {
        let c = ProfileConfig::from_kv_text("n0 = 90\nn1 = 10\nalphas = 0.05\nmu_points = 9").unwrap();
        assert_eq!(c.counts, GenotypeCounts::new(90, 10, 0));
        assert_eq!(c.alphas, vec![0.05]);
        assert_eq!(c.mu_points, 9);
    }
}
