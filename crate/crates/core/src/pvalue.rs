//! One- and two-sided p-values for the lattice score statistic.
//!
//! The two-sided p-value for `u > 0` is `P(U >= u) + P(U <= u_inv)`, where
//! `u_inv` is the lattice point closest to `-u` that is at least as far from
//! zero; mirrored for `u < 0`. When `u_inv` falls outside the support only
//! the one-sided term remains.
//!
//! Continuous methods (normal, ESPA, fastSPA) treat the score as continuous:
//! they mirror to exactly `-u` and use `P(U <= x) = 1 - S(x)`.

use crate::exact::LATTICE_TOLERANCE;
use crate::model::NullFit;
use crate::numeric::normal_sf;
use crate::saddlepoint::TailResult;
use crate::variant::VariantTest;
use crate::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Distance within which `2|u|` counts as an integer in [`reflect`]; absorbs
/// rounding in scores computed from fitted probabilities.
const REFLECT_SNAP: f64 = 1e-8;
/// Continuous saddlepoint methods (ESPA, fastSPA) fall back to the normal
/// two-sided p-value when `|u| / sd` is below this value, as the SPA-test
/// does by default.
pub const CONTINUOUS_SPA_CUTOFF: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Normal,
    Espa,
    EspaCc,
    DspaCc,
    FastSpa,
    FastDspaCc,
    ExactIntercept,
    ExactBinary,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Normal,
        Method::Espa,
        Method::EspaCc,
        Method::DspaCc,
        Method::FastSpa,
        Method::FastDspaCc,
        Method::ExactIntercept,
        Method::ExactBinary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Normal => "normal",
            Method::Espa => "espa",
            Method::EspaCc => "espa_cc",
            Method::DspaCc => "dspa_cc",
            Method::FastSpa => "fast_spa",
            Method::FastDspaCc => "fast_dspa_cc",
            Method::ExactIntercept => "exact_intercept",
            Method::ExactBinary => "exact_binary",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Method::ExactIntercept | Method::ExactBinary)
    }

    /// Methods that approximate the lattice by a continuous law, so that
    /// `P(U <= x) = 1 - S(x)` instead of `1 - S(x + 1)`.
    pub fn is_continuous(self) -> bool {
        matches!(self, Method::Normal | Method::Espa | Method::FastSpa)
    }

    /// Lattice offset between `P(U <= x)` and the survival argument.
    pub(crate) fn left_step(self) -> f64 {
        if self.is_continuous() {
            0.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sidedness {
    One,
    Two,
}

/// Diagnostics attached to a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    /// Some tail was fixed at 0 or 1 by the support or the attainable range.
    pub boundary: bool,
    /// The normal approximation replaced a saddlepoint formula near `t = 0`.
    pub fallback: bool,
    /// The p-value underflowed and was raised to the smallest positive double.
    pub clamped: bool,
    /// The variant is constant given the covariates; the p-value is 1.
    pub untestable: bool,
}

impl Flags {
    fn absorb(&mut self, tail: &TailResult) {
        self.boundary |= tail.boundary;
        self.fallback |= tail.fallback_used;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvalueReport {
    pub method: Method,
    pub p_two_sided: f64,
    pub sided: Sidedness,
    pub u: f64,
    pub u_inv: Option<f64>,
    pub flags: Flags,
}

impl PvalueReport {
    pub(crate) fn untestable(method: Method, u: f64) -> Self {
        Self {
            method,
            p_two_sided: 1.0,
            sided: Sidedness::Two,
            u,
            u_inv: None,
            flags: Flags {
                untestable: true,
                ..Flags::default()
            },
        }
    }
}

/// Reflection point `u - sgn(u) ceil(2|u|)`.
pub fn reflect(u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let a = 2.0 * u.abs();
    let r = a.round();
    let k = if (a - r).abs() <= REFLECT_SNAP { r } else { a.ceil() };
    u - u.signum() * k
}

/// Two-sided p-value by the reflection rule, given the survival function
/// `P(U >= x)` of the method (which also yields `P(U <= x) = 1 - S(x + 1)`,
/// or `1 - S(x)` for continuous methods).
pub fn two_sided_from_tails<F>(method: Method, u: f64, lower: f64, upper: f64, mut survival: F) -> Result<PvalueReport>
where
    F: FnMut(f64) -> Result<TailResult>,
{
    let mut flags = Flags::default();
    if u.abs() <= LATTICE_TOLERANCE {
        return Ok(PvalueReport {
            method,
            p_two_sided: 1.0,
            sided: Sidedness::Two,
            u,
            u_inv: None,
            flags,
        });
    }
    // continuous methods mirror the score exactly; lattice methods reflect
    // onto the lattice
    let u_inv = if method.is_continuous() { -u } else { reflect(u) };
    let step = method.left_step();
    let (main, other, sided) = if u > 0.0 {
        let s = survival(u)?;
        flags.absorb(&s);
        if u_inv < lower - LATTICE_TOLERANCE {
            (s.survival, 0.0, Sidedness::One)
        } else {
            let l = survival(u_inv + step)?;
            flags.absorb(&l);
            (s.survival, l.complement, Sidedness::Two)
        }
    } else {
        let l = survival(u + step)?;
        flags.absorb(&l);
        if u_inv > upper + LATTICE_TOLERANCE {
            (l.complement, 0.0, Sidedness::One)
        } else {
            let s = survival(u_inv)?;
            flags.absorb(&s);
            (l.complement, s.survival, Sidedness::Two)
        }
    };
    Ok(finish(method, u, Some(u_inv), sided, main + other, flags))
}

fn finish(method: Method, u: f64, u_inv: Option<f64>, sided: Sidedness, p: f64, mut flags: Flags) -> PvalueReport {
    let p = if p <= 0.0 {
        flags.clamped = true;
        f64::MIN_POSITIVE
    } else {
        p.min(1.0)
    };
    PvalueReport {
        method,
        p_two_sided: p,
        sided,
        u,
        u_inv,
        flags,
    }
}

/// Normal-approximation p-value `2(1 - Phi(|u| / sqrt(var)))`, no continuity
/// correction.
pub fn normal_from_variance(u: f64, var_cond: f64) -> PvalueReport {
    if var_cond <= 0.0 {
        return PvalueReport::untestable(Method::Normal, u);
    }
    let p = 2.0 * normal_sf(u.abs() / var_cond.sqrt());
    finish(Method::Normal, u, None, Sidedness::Two, p, Flags::default())
}

/// Two-sided p-value of `method` at score `u` for genotype `g`.
pub fn two_sided_pvalue(method: Method, fit: &NullFit, g: &[u8], u: f64) -> Result<PvalueReport> {
    VariantTest::new(fit, g)?.two_sided_at(method, u)
}

/// Normal-approximation p-value at score `u` for genotype `g`.
pub fn normal_pvalue(fit: &NullFit, g: &[u8], u: f64) -> Result<PvalueReport> {
    VariantTest::new(fit, g)?.two_sided_at(Method::Normal, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_examples() {
        assert_eq!(reflect(4.5), -4.5);
        assert!((reflect(1.9) + 2.1).abs() < 1e-12);
        assert!((reflect(-1.9) - 2.1).abs() < 1e-12);
        // rounding noise around a half-integer does not push the reflection
        // one lattice step further out
        assert_eq!(reflect(1.5 + 1e-12), -1.5 + 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("DSPA-CC".parse::<Method>().unwrap(), Method::DspaCc);
        assert!("firth".parse::<Method>().is_err());
    }

    #[test]
    fn normal_examples() {
        assert_eq!(normal_from_variance(0.0, 2.0).p_two_sided, 1.0);
        let p = normal_from_variance(1.959963984540054 * 3.0, 9.0).p_two_sided;
        assert!((p - 0.05).abs() < 1e-14);
        let p = normal_from_variance(2.63, 1.764).p_two_sided;
        assert!((p - 0.0477).abs() < 5e-4, "{p}");
        assert!(normal_from_variance(1.0, 0.0).flags.untestable);
    }
}
