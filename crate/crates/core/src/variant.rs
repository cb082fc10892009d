//! Per-variant test state shared by all methods.

use crate::cgf::{EfficientCgf, JointCgf};
use crate::exact::{self, LatticePmf};
use crate::fast::{fast_spa_cgf, CarrierPartition, FastJointCgf};
use crate::model::{NullFit, ScoreContext};
use crate::pvalue::{normal_from_variance, two_sided_from_tails, Method, PvalueReport, CONTINUOUS_SPA_CUTOFF};
use crate::saddlepoint::{double_cc_tail, single_tail, TailResult, TailSetting};
use crate::{Error, Result};
use std::sync::OnceLock;

/// A genotype prepared for testing against a fitted null model.
///
/// Score, efficient genotype and support are computed up front; the carrier
/// partition and the exact pmf are built on first use.
#[derive(Debug)]
pub struct VariantTest<'a> {
    fit: &'a NullFit,
    genotype: &'a [u8],
    g: Vec<f64>,
    context: ScoreContext,
    partition: OnceLock<CarrierPartition>,
    fast_cgf: OnceLock<EfficientCgf<'static>>,
    pmf: OnceLock<Result<LatticePmf>>,
}

impl<'a> VariantTest<'a> {
    pub fn new(fit: &'a NullFit, genotype: &'a [u8]) -> Result<Self> {
        let context = ScoreContext::new(fit, genotype)?;
        Ok(Self {
            fit,
            genotype,
            g: genotype.iter().map(|&x| x as f64).collect(),
            context,
            partition: OnceLock::new(),
            fast_cgf: OnceLock::new(),
            pmf: OnceLock::new(),
        })
    }

    /// Supply a precomputed exact pmf (it must belong to this variant).
    pub fn with_exact_pmf(self, pmf: LatticePmf) -> Self {
        let _ = self.pmf.set(Ok(pmf));
        self
    }

    pub fn context(&self) -> &ScoreContext {
        &self.context
    }

    /// Observed score.
    pub fn u(&self) -> f64 {
        self.context.u
    }

    pub fn is_testable(&self) -> bool {
        self.context.is_testable()
    }

    pub fn partition(&self) -> &CarrierPartition {
        self.partition
            .get_or_init(|| CarrierPartition::new(self.fit, self.genotype).expect("genotype validated"))
    }

    /// Exact conditional pmf for the intercept or binary-covariate model.
    pub fn exact_pmf(&self) -> Result<&LatticePmf> {
        self.pmf
            .get_or_init(|| {
                if self.fit.d() == 1 {
                    let counts = exact::intercept_counts(self.fit, self.genotype)?;
                    exact::exact_intercept_pmf(counts, self.fit.cases())
                } else {
                    let (counts, v0, v1) = exact::stratified_counts(self.fit, self.genotype)?;
                    exact::exact_binary_covariate_pmf(counts, v0, v1)
                }
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn exact_pmf_for(&self, method: Method) -> Result<&LatticePmf> {
        let applicable = match method {
            Method::ExactIntercept => self.fit.d() == 1,
            _ => self.fit.design().is_binary_covariate_model(),
        };
        if !applicable {
            return Err(Error::MethodNotApplicable {
                method: method.to_string(),
                reason: "no exact conditional distribution for this covariate design".into(),
            });
        }
        self.exact_pmf()
    }

    fn setting(&self) -> TailSetting {
        TailSetting {
            var_cond: self.context.var_cond,
            lower: self.context.lower,
            upper: self.context.upper,
        }
    }

    /// `P(U >= u | U_beta = 0)` under `method`.
    pub fn survival(&self, method: Method, u: f64) -> Result<TailResult> {
        if !self.is_testable() {
            return Err(Error::InvalidInput("variant is constant given the covariates".into()));
        }
        let setting = self.setting();
        match method {
            Method::Normal => Ok(TailResult::from_z(
                method,
                u,
                u / setting.var_cond.sqrt(),
                None,
                None,
                false,
            )),
            Method::Espa | Method::EspaCc => {
                let cgf = EfficientCgf::new(self.fit.mu_hat(), &self.context.g_tilde);
                single_tail(method, &cgf, setting, u, method == Method::EspaCc)
            }
            Method::DspaCc => {
                let cgf = JointCgf::new(self.fit.mu_hat(), self.fit.design(), &self.g);
                double_cc_tail(method, &cgf, self.fit.ln_det_xtwx(), setting, u)
            }
            Method::FastSpa => {
                let cgf = match self.fast_cgf.get() {
                    Some(c) => c,
                    None => {
                        let c = fast_spa_cgf(self.fit, self.partition(), self.genotype)?;
                        self.fast_cgf.get_or_init(|| c)
                    }
                };
                single_tail(method, cgf, setting, u, false)
            }
            Method::FastDspaCc => {
                let cgf = FastJointCgf::new(self.fit, &self.g, self.partition());
                double_cc_tail(method, &cgf, self.fit.ln_det_xtwx(), setting, u)
            }
            Method::ExactIntercept | Method::ExactBinary => {
                let pmf = self.exact_pmf_for(method)?;
                Ok(TailResult {
                    method,
                    u,
                    survival: pmf.survival(u),
                    complement: pmf.left_tail(u - 1.0),
                    w: None,
                    v: None,
                    fallback_used: false,
                    boundary: false,
                })
            }
        }
    }

    /// `P(U <= u | U_beta = 0) = 1 - S(u + 1)`.
    pub fn left_tail(&self, method: Method, u: f64) -> Result<f64> {
        Ok(self.survival(method, u + method.left_step())?.complement)
    }

    /// Two-sided p-value at the observed score.
    pub fn two_sided(&self, method: Method) -> Result<PvalueReport> {
        self.two_sided_at(method, self.context.u)
    }

    /// Two-sided p-value at an arbitrary lattice point `u`.
    pub fn two_sided_at(&self, method: Method, u: f64) -> Result<PvalueReport> {
        if !self.is_testable() {
            return Ok(PvalueReport::untestable(method, u));
        }
        // the continuous saddlepoint tests only replace the normal p-value
        // once the standardized score reaches the cutoff
        let sd = self.context.var_cond.sqrt();
        if method == Method::Normal || (method.is_continuous() && u.abs() < CONTINUOUS_SPA_CUTOFF * sd) {
            return Ok(normal_from_variance(u, self.context.var_cond));
        }
        if method.is_exact() {
            self.exact_pmf_for(method)?;
        }
        two_sided_from_tails(method, u, self.context.lower, self.context.upper, |x| {
            self.survival(method, x)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvalue::Sidedness;

    fn five_obs() -> NullFit {
        NullFit::intercept_model(vec![1, 0, 1, 0, 0]).unwrap()
    }

    #[test]
    fn exact_two_sided_example() {
        let fit = five_obs();
        let g = [1, 1, 0, 0, 0];
        let t = VariantTest::new(&fit, &g).unwrap();
        assert!((t.u() - 0.2).abs() < 1e-12);
        let r = t.two_sided_at(Method::ExactIntercept, 1.2).unwrap();
        assert_eq!(r.sided, Sidedness::One);
        assert!((r.u_inv.unwrap() + 1.8).abs() < 1e-12);
        assert!((r.p_two_sided - 0.1).abs() < 1e-14);
        let r = t.two_sided_at(Method::ExactIntercept, -0.8).unwrap();
        assert_eq!(r.sided, Sidedness::Two);
        // -0.8 reflects to 1.2: P(U <= -0.8) + P(U >= 1.2)
        assert!((r.p_two_sided - 0.4).abs() < 1e-14);
    }

    #[test]
    fn left_tail_and_survival_are_complementary() {
        let fit = five_obs();
        let g = [1, 1, 0, 0, 0];
        let t = VariantTest::new(&fit, &g).unwrap();
        for m in [Method::ExactIntercept, Method::DspaCc, Method::EspaCc] {
            for u in [-0.8, 0.2, 1.2] {
                let s = t.survival(m, u + 1.0).unwrap();
                assert_eq!(t.left_tail(m, u).unwrap() + s.survival, s.complement + s.survival);
                assert!((s.complement + s.survival - 1.0).abs() < 1e-15);
            }
            assert_eq!(t.left_tail(m, 1.2).unwrap(), 1.0);
            assert_eq!(t.left_tail(m, -1.8).unwrap(), 0.0);
        }
    }

    #[test]
    fn exact_binary_requires_binary_covariate() {
        let fit = five_obs();
        let g = [1, 1, 0, 0, 0];
        let t = VariantTest::new(&fit, &g).unwrap();
        assert!(matches!(
            t.two_sided(Method::ExactBinary),
            Err(Error::MethodNotApplicable { .. })
        ));
    }

    #[test]
    fn monomorphic_variant_reports_untestable() {
        let fit = five_obs();
        let g = [1, 1, 1, 1, 1];
        let t = VariantTest::new(&fit, &g).unwrap();
        let r = t.two_sided(Method::DspaCc).unwrap();
        assert!(r.flags.untestable);
        assert_eq!(r.p_two_sided, 1.0);
    }
}
