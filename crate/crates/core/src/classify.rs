//! Ergodicity-rate certificates.
//!
//! Given the tail exponent `rho` of the envelope and the error moment
//! class, the classifier emits the reachable convergence regime:
//!
//! * subexponential class with `rho = kappa0` — geometric rate `e^(c n)`;
//! * subexponential class with `rho > kappa0` — subexponential rate
//!   `e^(k n^(b3/rho))` with `b3 = kappa0 min (2 - rho)`;
//! * moment-only class — polynomial rate `n^(delta - 1)` for
//!   `delta in [1, s0/rho]`, provided `(rho, s0)` falls in one of the
//!   three admissible clauses.
//!
//! Each certificate also records the f-norm the rate is paired with, the
//! implied beta-mixing rate family, and the guaranteed stationary moments.

use std::fmt;

use crate::drift::{check_epsilon_decay, check_g_envelope, EnvelopeCertificate, EnvelopeConfig};
use crate::model::{eval_slope, HSpec, ModelSpec, MomentClass, NonlinearTerm};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("not covered: {0}")]
    NotCovered(String),
    #[error("borderline ambiguous: |rho - kappa0| = {gap:e} is below tolerance {tolerance:e} but not exactly zero")]
    BorderlineAmbiguous { rho: f64, kappa0: f64, gap: f64, tolerance: f64 },
    #[error("custom nonlinear term requires an envelope certificate")]
    EnvelopeMissing,
    #[error("envelope check failed for the model's g (worst margin {worst_margin} at u = {worst_u})")]
    EnvelopeFailed { worst_margin: f64, worst_u: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateClass {
    Geometric,
    Subexponential,
    Polynomial,
}

impl fmt::Display for RateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateClass::Geometric => write!(f, "Geometric"),
            RateClass::Subexponential => write!(f, "Subexponential"),
            RateClass::Polynomial => write!(f, "Polynomial"),
        }
    }
}

/// Rate function parameters. Constants the theory leaves existential
/// (`c`, `k`) stay symbolic; only structure derived from the inputs is
/// reported numerically.
#[derive(Clone, Debug, PartialEq)]
pub enum RateFunction {
    /// `r(n) = e^(c n)` for some c > 0.
    Geometric,
    /// `r(n) = e^(k n^exponent)`, exponent = b3/rho, with
    /// `k in (0, (1 - delta) (c rho / b3)^(b3/rho))` in terms of the drift
    /// verifier's c.
    Subexponential { exponent: f64, b3: f64 },
    /// `r(n) = n^(delta - 1)` for any `delta in [1, delta_max]`,
    /// `delta_max = s0/rho`.
    Polynomial { delta_max: f64 },
}

/// Beta-mixing rate family implied by the certificate.
#[derive(Clone, Debug, PartialEq)]
pub enum BetaMixing {
    /// `r~^n beta(n) -> 0` for some r~ > 1.
    Geometric,
    /// `e^(k~ n^exponent) beta(n) -> 0` for k~ in `(0, (c rho / 2 b3)^(b3/rho))`.
    Subexponential { exponent: f64 },
    /// `n^exponent beta(n) -> 0`.
    Polynomial { exponent: f64 },
}

/// Guaranteed finite moments of the stationary distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum MomentGuarantee {
    AllOrders,
    UpToOrder(f64),
}

#[derive(Clone, Debug)]
pub struct RateCertificate {
    pub class: RateClass,
    pub rate: RateFunction,
    pub f_norm: String,
    pub beta_mixing: BetaMixing,
    pub moments: MomentGuarantee,
    /// Which clause fired and with what inputs, in order of application.
    pub trace: Vec<String>,
}

impl fmt::Display for RateCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ergodicity class : {}", self.class)?;
        match &self.rate {
            RateFunction::Geometric => {
                writeln!(f, "rate             : r(n) = e^(c n) for some c > 0")?
            }
            RateFunction::Subexponential { exponent, b3 } => writeln!(
                f,
                "rate             : r(n) = e^(k n^{exponent}) (b3 = {b3}); k in (0, (1-delta)(c rho/b3)^(b3/rho))"
            )?,
            RateFunction::Polynomial { delta_max } => writeln!(
                f,
                "rate             : r(n) = n^(delta-1) for delta in [1, {delta_max}]; fastest n^{}",
                delta_max - 1.0
            )?,
        }
        writeln!(f, "f-norm           : {}", self.f_norm)?;
        match &self.beta_mixing {
            BetaMixing::Geometric => {
                writeln!(f, "beta-mixing      : r~^n beta(n) -> 0 for some r~ > 1")?
            }
            BetaMixing::Subexponential { exponent } => {
                writeln!(f, "beta-mixing      : e^(k~ n^{exponent}) beta(n) -> 0")?
            }
            BetaMixing::Polynomial { exponent } => {
                writeln!(f, "beta-mixing      : n^{exponent} beta(n) -> 0")?
            }
        }
        match &self.moments {
            MomentGuarantee::AllOrders => writeln!(f, "moments          : all orders finite")?,
            MomentGuarantee::UpToOrder(s) => {
                writeln!(f, "moments          : finite up to order {s}")?
            }
        }
        for line in &self.trace {
            writeln!(f, "trace            : {line}")?;
        }
        Ok(())
    }
}

impl RateCertificate {
    /// Machine-readable key/value block.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("class={}\n", self.class));
        match &self.rate {
            RateFunction::Geometric => out.push_str("rate=e^(c n)\n"),
            RateFunction::Subexponential { exponent, b3 } => {
                out.push_str(&format!("rate=e^(k n^{exponent})\nrate_exponent={exponent}\nb3={b3}\n"));
            }
            RateFunction::Polynomial { delta_max } => {
                out.push_str(&format!("rate=n^(delta-1)\ndelta_max={delta_max}\n"));
            }
        }
        out.push_str(&format!("f_norm={}\n", self.f_norm));
        match &self.beta_mixing {
            BetaMixing::Geometric => out.push_str("beta_mixing=geometric\n"),
            BetaMixing::Subexponential { exponent } => {
                out.push_str(&format!("beta_mixing=subexponential\nbeta_mixing_exponent={exponent}\n"));
            }
            BetaMixing::Polynomial { exponent } => {
                out.push_str(&format!("beta_mixing=polynomial\nbeta_mixing_exponent={exponent}\n"));
            }
        }
        match &self.moments {
            MomentGuarantee::AllOrders => out.push_str("moments=all_orders\n"),
            MomentGuarantee::UpToOrder(s) => out.push_str(&format!("moments=up_to_order:{s}\n")),
        }
        for (i, line) in self.trace.iter().enumerate() {
            out.push_str(&format!("trace{i}={line}\n"));
        }
        out
    }
}

/// Extra inputs some clauses need.
#[derive(Clone, Debug, Default)]
pub struct ClassifyOptions {
    /// Envelope constant `r`, required by the rho = 2 clause.
    pub envelope_r: Option<f64>,
    /// `E[eps^2]`, required by the rho = 2 clause.
    pub noise_variance: Option<f64>,
    /// Width of the band around `rho = kappa0` that raises
    /// `BorderlineAmbiguous` instead of guessing a regime. The default 0
    /// means only exact equality claims the geometric case.
    pub borderline_tolerance: f64,
    /// True when the error is known to be mean zero (checked for
    /// moment-only classes with rho >= 1).
    pub mean_zero: bool,
}

/// Map `(rho, moment class)` to a rate certificate.
pub fn classify(
    rho: f64,
    moment_class: &MomentClass,
    opts: &ClassifyOptions,
) -> Result<RateCertificate, ClassifyError> {
    if !(rho > 0.0 && rho <= 2.0) {
        return Err(ClassifyError::Invalid(format!("rho = {rho} outside (0, 2]")));
    }
    let mut trace = Vec::new();
    match moment_class {
        MomentClass::Subexponential { beta0, kappa0 } => {
            trace.push(format!(
                "subexponential error class: beta0 = {beta0}, kappa0 = {kappa0}, rho = {rho}"
            ));
            let gap = (rho - kappa0).abs();
            if rho == *kappa0 {
                trace.push("borderline rho = kappa0: geometric regime".into());
                Ok(RateCertificate {
                    class: RateClass::Geometric,
                    rate: RateFunction::Geometric,
                    f_norm: "V (subexponential V with b3 = kappa0)".into(),
                    beta_mixing: BetaMixing::Geometric,
                    moments: MomentGuarantee::AllOrders,
                    trace,
                })
            } else if gap < opts.borderline_tolerance {
                Err(ClassifyError::BorderlineAmbiguous {
                    rho,
                    kappa0: *kappa0,
                    gap,
                    tolerance: opts.borderline_tolerance,
                })
            } else if rho < *kappa0 {
                trace.push(
                    "rho < kappa0: geometric regime (heuristic extension; no drift bound is constructed for this case)".into(),
                );
                Ok(RateCertificate {
                    class: RateClass::Geometric,
                    rate: RateFunction::Geometric,
                    f_norm: "V".into(),
                    beta_mixing: BetaMixing::Geometric,
                    moments: MomentGuarantee::AllOrders,
                    trace,
                })
            } else if rho >= 2.0 {
                Err(ClassifyError::NotCovered(
                    "subexponential regime requires rho < 2; declare a MomentOnly class to use the polynomial route".into(),
                ))
            } else {
                let b3 = kappa0.min(2.0 - rho);
                let exponent = b3 / rho;
                trace.push(format!(
                    "rho > kappa0: subexponential regime with b3 = kappa0 min (2 - rho) = {b3}, exponent {exponent}"
                ));
                Ok(RateCertificate {
                    class: RateClass::Subexponential,
                    rate: RateFunction::Subexponential { exponent, b3 },
                    f_norm: "V^delta for any delta in (0, 1)".into(),
                    beta_mixing: BetaMixing::Subexponential { exponent },
                    moments: MomentGuarantee::AllOrders,
                    trace,
                })
            }
        }
        MomentClass::MomentOnly { s0 } => {
            let s0 = *s0;
            trace.push(format!("moment-only error class: s0 = {s0}, rho = {rho}"));
            if rho >= 1.0 && !opts.mean_zero {
                return Err(ClassifyError::Invalid(
                    "moment-only class with rho >= 1 requires a mean-zero error".into(),
                ));
            }
            let clause = if rho < 1.0 && s0 > rho {
                "clause (i): 0 < rho < 1, s0 > rho"
            } else if (1.0..2.0).contains(&rho) && (s0 == 2.0 || s0 >= 4.0) {
                "clause (ii): 1 <= rho < 2, s0 = 2 or s0 >= 4"
            } else if rho == 2.0 && s0 >= 4.0 {
                let r = opts.envelope_r.ok_or_else(|| {
                    ClassifyError::Invalid("rho = 2 clause needs the envelope constant r".into())
                })?;
                let var = opts.noise_variance.ok_or_else(|| {
                    ClassifyError::Invalid("rho = 2 clause needs E[eps^2]".into())
                })?;
                let slack = s0 * r - 0.5 * s0 * (s0 - 1.0) * var;
                trace.push(format!(
                    "clause (iii) boundary: s0 r - s0 (s0 - 1) E[eps^2] / 2 = {slack}"
                ));
                if slack > 0.0 {
                    "clause (iii): rho = 2, s0 >= 4, moment inequality strictly positive"
                } else {
                    return Err(ClassifyError::NotCovered(format!(
                        "rho = 2 moment inequality not positive: {slack} <= 0"
                    )));
                }
            } else {
                return Err(ClassifyError::NotCovered(format!(
                    "(rho = {rho}, s0 = {s0}) matches no polynomial clause"
                )));
            };
            trace.push(clause.to_string());
            trace.push(
                "rate reported for the declared s0; a larger admissible moment order would give a faster polynomial rate".into(),
            );
            let delta_max = s0 / rho;
            Ok(RateCertificate {
                class: RateClass::Polynomial,
                rate: RateFunction::Polynomial { delta_max },
                f_norm: format!("V^(1 - delta rho/s0) for delta in [1, {delta_max}]"),
                beta_mixing: BetaMixing::Polynomial { exponent: delta_max - 1.0 },
                moments: MomentGuarantee::UpToOrder(s0 - rho),
                trace,
            })
        }
    }
}

/// Numeric check of the growth condition on an ESTAR denominator `h`:
/// `c1 h(u) <= |u|^rho` and `|u|^(rho + c2) <= c3 h(u)^2` for
/// `|u| >= M0`. The six built-in families satisfy it by construction with
/// the effective rho they declare; custom functions are screened by a
/// log-domain growth test over the outer decades.
#[derive(Clone, Debug)]
pub struct ConditionH {
    pub pass: bool,
    pub rho: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub m0: f64,
}

pub fn check_condition_h(h: &HSpec) -> ConditionH {
    let rho = h.rho();
    let c2 = rho / 2.0;
    let m0_candidates = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    let builtin = !matches!(h, HSpec::Custom { .. });

    for &m0 in &m0_candidates {
        // log-domain extremes over the tail grid
        let mags = grid_mags(m0);
        let mut max_log_h_over_u = f64::NEG_INFINITY; // ln h - rho ln|u|
        let mut max_log_u_over_h2 = f64::NEG_INFINITY; // (rho + c2) ln|u| - 2 ln h
        let mut positive = true;
        // split at |u| = 1e3 to compare inner and outer growth
        let mut inner_a = f64::NEG_INFINITY;
        let mut outer_a = f64::NEG_INFINITY;
        let mut inner_b = f64::NEG_INFINITY;
        let mut outer_b = f64::NEG_INFINITY;
        for &m in &mags {
            for sign in [1.0, -1.0] {
                let hv = h.eval(sign * m);
                if !(hv > 0.0) || !hv.is_finite() {
                    positive = false;
                    break;
                }
                let la = hv.ln() - rho * m.ln();
                let lb = (rho + c2) * m.ln() - 2.0 * hv.ln();
                max_log_h_over_u = max_log_h_over_u.max(la);
                max_log_u_over_h2 = max_log_u_over_h2.max(lb);
                if m <= 1e3 {
                    inner_a = inner_a.max(la);
                    inner_b = inner_b.max(lb);
                } else {
                    outer_a = outer_a.max(la);
                    outer_b = outer_b.max(lb);
                }
            }
        }
        if !positive {
            continue;
        }
        let c1 = (-max_log_h_over_u).exp();
        let c3 = max_log_u_over_h2.exp();
        let growth_ok = builtin
            || (outer_a <= inner_a + std::f64::consts::LN_2
                && outer_b <= inner_b + std::f64::consts::LN_2);
        if growth_ok && c1 > 0.0 && c3.is_finite() {
            return ConditionH { pass: true, rho, c1, c2, c3, m0 };
        }
    }
    ConditionH { pass: false, rho, c1: 0.0, c2, c3: f64::INFINITY, m0: f64::INFINITY }
}

fn grid_mags(m0: f64) -> Vec<f64> {
    let n = 4000;
    let (llo, lhi) = (m0.ln(), 1e6f64.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// The filtered-scale regression function `g` implied by the model's
/// nonlinear family, used for envelope checks and classification.
pub fn canonical_g(model: &ModelSpec) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    match model.nonlinear() {
        NonlinearTerm::Zero => Some(Box::new(|u| u)),
        NonlinearTerm::LstarIntercept(params) => {
            let params = params.clone();
            Some(Box::new(move |u| u + params.eval(u)))
        }
        NonlinearTerm::EstarSlope { variant, r0, nu, h } => {
            let (variant, r0, nu, h) = (*variant, *r0, *nu, h.clone());
            Some(Box::new(move |u| {
                let s = eval_slope(u, variant, r0, &h);
                (1.0 - s) * nu + s * u
            }))
        }
        NonlinearTerm::GeneralEstar { variant, r0, h, .. } => {
            let (variant, r0, h) = (*variant, *r0, h.clone());
            Some(Box::new(move |u| eval_slope(u, variant, r0, &h) * u))
        }
        NonlinearTerm::Custom { .. } => None,
    }
}

/// Classify a full model: the tail exponent comes from the nonlinear
/// family (rho = 1 for the logistic intercept, condition (h) for the
/// ESTAR slopes, the attached certificate for custom terms), the envelope
/// constant from a numeric search, and the regime from [`classify`].
pub fn classify_model(
    model: &ModelSpec,
    custom_envelope: Option<&EnvelopeCertificate>,
    borderline_tolerance: f64,
) -> Result<RateCertificate, ClassifyError> {
    let mut trace_head = Vec::new();
    let (rho, envelope) = match model.nonlinear() {
        NonlinearTerm::Zero => {
            return Err(ClassifyError::NotCovered(
                "zero nonlinear term is a pure unit root; no envelope can hold".into(),
            ))
        }
        NonlinearTerm::Custom { .. } => {
            let cert = custom_envelope.ok_or(ClassifyError::EnvelopeMissing)?;
            if !cert.pass {
                return Err(ClassifyError::EnvelopeFailed {
                    worst_margin: cert.worst_margin,
                    worst_u: cert.worst_u,
                });
            }
            trace_head.push(format!(
                "custom term: user-supplied envelope certificate (r = {}, M0 = {}, rho = {})",
                cert.r, cert.m0, cert.rho
            ));
            if model.p() > 1 {
                trace_head.push(
                    "custom term with p >= 2: remainder-decay condition not verifiable from samples; not claimed".into(),
                );
            }
            (cert.rho, cert.clone())
        }
        term => {
            let rho = match term {
                NonlinearTerm::LstarIntercept(_) => {
                    trace_head.push("logistic intercept family: rho = 1".into());
                    1.0
                }
                NonlinearTerm::EstarSlope { h, .. } | NonlinearTerm::GeneralEstar { h, .. } => {
                    let cond = check_condition_h(h);
                    if !cond.pass {
                        return Err(ClassifyError::NotCovered(
                            "denominator h fails the growth condition".into(),
                        ));
                    }
                    trace_head.push(format!(
                        "condition (h): rho = {}, c1 = {:.4e}, c2 = {}, c3 = {:.4e}, M0 = {}",
                        cond.rho, cond.c1, cond.c2, cond.c3, cond.m0
                    ));
                    cond.rho
                }
                _ => unreachable!(),
            };
            let g = canonical_g(model).expect("built-in families define g");
            let cert = check_g_envelope(&*g, rho, &EnvelopeConfig::default());
            if !cert.pass {
                return Err(ClassifyError::EnvelopeFailed {
                    worst_margin: cert.worst_margin,
                    worst_u: cert.worst_u,
                });
            }
            trace_head.push(format!(
                "envelope: r = {:.6}, M0 = {}, K0 = {:.6}",
                cert.r, cert.m0, cert.k0
            ));
            if let NonlinearTerm::GeneralEstar { .. } = term {
                // remainder decay for the state-dependent cross term
                let d_needed = match model.noise().moment_class {
                    MomentClass::Subexponential { kappa0, .. } => {
                        let b3 = if rho == kappa0 { kappa0 } else { kappa0.min(2.0 - rho) };
                        if b3 > 0.0 {
                            rho / b3
                        } else {
                            rho
                        }
                    }
                    MomentClass::MomentOnly { s0 } => {
                        if s0 < 1.0 {
                            rho / s0
                        } else {
                            rho
                        }
                    }
                };
                let rep = check_epsilon_decay(model, &*g, d_needed);
                trace_head.push(format!(
                    "remainder decay: fitted slope {} against required -{d_needed}",
                    rep.fitted_slope
                ));
                if !rep.passes {
                    return Err(ClassifyError::NotCovered(format!(
                        "cross-term remainder decays too slowly (slope {})",
                        rep.fitted_slope
                    )));
                }
            }
            (rho, cert)
        }
    };
    let opts = ClassifyOptions {
        envelope_r: Some(envelope.r),
        noise_variance: model.noise().variance(),
        borderline_tolerance,
        mean_zero: model.noise().is_mean_zero(),
    };
    let mut cert = classify(rho, &model.noise().moment_class, &opts)?;
    trace_head.append(&mut cert.trace);
    cert.trace = trace_head;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;

    fn subexp(kappa0: f64) -> MomentClass {
        MomentClass::Subexponential { beta0: 1.0, kappa0 }
    }

    fn opts() -> ClassifyOptions {
        ClassifyOptions { mean_zero: true, ..Default::default() }
    }

    #[test]
    fn geometric_at_borderline() {
        let cert = classify(1.0, &subexp(1.0), &opts()).unwrap();
        assert_eq!(cert.class, RateClass::Geometric);
        assert_eq!(cert.rate, RateFunction::Geometric);
        assert!(matches!(cert.moments, MomentGuarantee::AllOrders));
    }

    #[test]
    fn subexponential_above_kappa0() {
        let cert = classify(1.5, &subexp(1.0), &opts()).unwrap();
        assert_eq!(cert.class, RateClass::Subexponential);
        match cert.rate {
            RateFunction::Subexponential { exponent, b3 } => {
                assert!((b3 - 0.5).abs() < 1e-15);
                assert!((exponent - 1.0 / 3.0).abs() < 1e-15);
            }
            other => panic!("unexpected rate {other:?}"),
        }
        assert!(matches!(cert.beta_mixing, BetaMixing::Subexponential { .. }));
    }

    #[test]
    fn prop1_subexponential_case() {
        let cert = classify(1.0, &subexp(0.5), &opts()).unwrap();
        match cert.rate {
            RateFunction::Subexponential { exponent, b3 } => {
                assert!((b3 - 0.5).abs() < 1e-15);
                assert!((exponent - 0.5).abs() < 1e-15);
            }
            other => panic!("unexpected rate {other:?}"),
        }
    }

    #[test]
    fn polynomial_fastest_rate() {
        let cert = classify(1.0, &MomentClass::MomentOnly { s0: 4.0 }, &opts()).unwrap();
        assert_eq!(cert.class, RateClass::Polynomial);
        assert_eq!(cert.rate, RateFunction::Polynomial { delta_max: 4.0 });
        assert_eq!(cert.beta_mixing, BetaMixing::Polynomial { exponent: 3.0 });
        assert_eq!(cert.moments, MomentGuarantee::UpToOrder(3.0));
    }

    #[test]
    fn rho2_boundary_clause() {
        let mut o = opts();
        o.envelope_r = Some(0.5);
        o.noise_variance = Some(0.25);
        let cert = classify(2.0, &MomentClass::MomentOnly { s0: 4.0 }, &o).unwrap();
        assert_eq!(cert.class, RateClass::Polynomial);
        assert_eq!(cert.rate, RateFunction::Polynomial { delta_max: 2.0 });
        o.noise_variance = Some(0.4);
        assert!(matches!(
            classify(2.0, &MomentClass::MomentOnly { s0: 4.0 }, &o),
            Err(ClassifyError::NotCovered(_))
        ));
    }

    #[test]
    fn uncovered_pair_rejected() {
        assert!(matches!(
            classify(1.5, &MomentClass::MomentOnly { s0: 3.0 }, &opts()),
            Err(ClassifyError::NotCovered(_))
        ));
    }

    #[test]
    fn borderline_band_raises() {
        let mut o = opts();
        o.borderline_tolerance = 1e-6;
        assert!(matches!(
            classify(1.0 + 1e-9, &subexp(1.0), &o),
            Err(ClassifyError::BorderlineAmbiguous { .. })
        ));
        // exact equality still classifies
        assert!(classify(1.0, &subexp(1.0), &o).is_ok());
    }

    #[test]
    fn monotone_exponent_in_rho() {
        let mut last = f64::INFINITY;
        for i in 0..30 {
            let rho = 1.01 + 0.03 * i as f64;
            let cert = classify(rho, &subexp(1.0), &opts()).unwrap();
            if let RateFunction::Subexponential { exponent, .. } = cert.rate {
                assert!(exponent <= last + 1e-15);
                last = exponent;
            } else {
                panic!("expected subexponential");
            }
        }
    }

    #[test]
    fn classification_total_on_declared_domain() {
        for &rho in &[0.25, 0.5, 1.0, 1.5, 1.99, 2.0] {
            for mc in [
                subexp(0.5),
                subexp(1.0),
                MomentClass::MomentOnly { s0: 0.8 },
                MomentClass::MomentOnly { s0: 2.0 },
                MomentClass::MomentOnly { s0: 3.0 },
                MomentClass::MomentOnly { s0: 4.5 },
            ] {
                let mut o = opts();
                o.envelope_r = Some(0.5);
                o.noise_variance = Some(0.1);
                // every combination yields either a certificate or a typed error
                let _ = classify(rho, &mc, &o);
            }
        }
    }

    #[test]
    fn condition_h_families() {
        let c = check_condition_h(&HSpec::AbsPower { rho: 1.5, a: 0.0 });
        assert!(c.pass);
        assert_eq!(c.rho, 1.5);
        assert!(c.c1 > 0.0 && c.c3.is_finite());
        let c4 = check_condition_h(&HSpec::SumAbsPowers {
            rho1: 1.25,
            rho2: 1.25,
            a1: -4.0,
            a2: -8.0,
        });
        assert!(c4.pass);
        assert_eq!(c4.rho, 1.25);
        let bad = check_condition_h(&HSpec::Custom {
            h: std::sync::Arc::new(|u: f64| u.abs().exp()),
            rho: 2.0,
        });
        assert!(!bad.pass);
    }

    #[test]
    fn classify_model_zero_term_rejected() {
        let model =
            ModelSpec::new(1, vec![], NonlinearTerm::Zero, NoiseSpec::gaussian(1.0).unwrap())
                .unwrap();
        assert!(matches!(
            classify_model(&model, None, 0.0),
            Err(ClassifyError::NotCovered(_))
        ));
    }

    #[test]
    fn classify_model_custom_needs_certificate() {
        let model = ModelSpec::new(
            1,
            vec![],
            NonlinearTerm::Custom {
                g_tilde: std::sync::Arc::new(|x: &[f64]| -0.5 * x[0] / (1.0 + x[0].abs())),
                rho: Some(1.0),
            },
            NoiseSpec::gaussian(1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            classify_model(&model, None, 0.0),
            Err(ClassifyError::EnvelopeMissing)
        ));
    }
}
