//! Model families: an AR(p) with exactly one unit root in its linear part,
//! a nonlinear term that is free to do almost anything for moderate states
//! but creates inward drift in the tails, and an IID error term.
//!
//! Writing the AR polynomial as `phi(z) = (1 - z) * varpi(z)` with `varpi`
//! stable, the filtered process `u_t = varpi(L) y_t` follows
//! `u_t = u_{t-1} + g~(y_{t-1..t-p}) + eps_t`, which is the form all
//! evaluation here is based on.

use std::fmt;
use std::sync::Arc;

use crate::companion::{self, CompanionForm};
use crate::rng::Stream;

const UNIT_ROOT_TOL: f64 = 1e-10;

/// User-supplied nonlinear term on the p-dimensional history.
pub type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// User-supplied scalar function (custom ESTAR denominators).
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// User-supplied error sampler.
pub type SamplerFn = Arc<dyn Fn(&mut Stream) -> f64 + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no unit root: phi(1) = {0:e} exceeds tolerance")]
    NoUnitRoot(f64),
    #[error("unstable remainder: varpi(z) has a root on or inside the unit circle (spectral radius {0})")]
    UnstableRemainder(f64),
    #[error("history length mismatch: expected {expected}, got {got}")]
    HistoryLengthMismatch { expected: usize, got: usize },
    #[error("rescaled Student t undefined for df = {0}: variance does not exist")]
    RescaleUndefined(u32),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Invalid(msg.into())
}

/// Split `phi(z) = 1 - phi_1 z - ... - phi_p z^p` with a single unit root
/// into `(1 - z) * varpi(z)` and return the coefficients of `varpi`.
///
/// `pi_j = -sum_{i=j+1..p} phi_i`; empty for `p = 1`.
pub fn decompose_unit_root(phi: &[f64]) -> Result<Vec<f64>, ModelError> {
    if phi.is_empty() {
        return Err(invalid("phi must have at least one coefficient"));
    }
    let at_one = 1.0 - phi.iter().sum::<f64>();
    if at_one.abs() > UNIT_ROOT_TOL {
        return Err(ModelError::NoUnitRoot(at_one));
    }
    let p = phi.len();
    let mut pi = Vec::with_capacity(p - 1);
    for j in 1..p {
        pi.push(-phi[j..].iter().sum::<f64>());
    }
    let radius = companion::stable_block_radius(&pi);
    if radius >= 1.0 - companion::STABILITY_MARGIN {
        return Err(ModelError::UnstableRemainder(radius));
    }
    Ok(pi)
}

/// Coefficients of `(1 - z) * varpi(z)` written as an AR polynomial, i.e.
/// the inverse of [`decompose_unit_root`].
pub fn recompose_unit_root(pi: &[f64]) -> Vec<f64> {
    // multiply [1, -pi_1, ..., -pi_{p-1}] by [1, -1]
    let mut varpi = vec![1.0];
    varpi.extend(pi.iter().map(|x| -x));
    let mut prod = vec![0.0; varpi.len() + 1];
    for (k, &c) in varpi.iter().enumerate() {
        prod[k] += c;
        prod[k + 1] -= c;
    }
    // prod[k] is the coefficient of z^k of phi(z); phi_i = -prod[i]
    prod[1..].iter().map(|c| -c).collect()
}

/// Logistic transition `L(u; b, a) = 1 / (1 + exp(-b (u - a)))`, computed
/// in the branch that never overflows.
#[inline]
pub fn logistic(u: f64, b: f64, a: f64) -> f64 {
    let t = b * (u - a);
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Time-varying intercept of logistic smooth-transition type. Takes values
/// strictly inside `(nu1, nu2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstarIntercept {
    pub nu1: f64,
    pub nu2: f64,
    pub b: f64,
    pub a1: f64,
    pub a2: f64,
}

impl LstarIntercept {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.b > 0.0) {
            return Err(invalid("lstar intercept: b must be > 0"));
        }
        if self.a1 > self.a2 {
            return Err(invalid("lstar intercept: a1 <= a2 required"));
        }
        if !(self.nu1 < 0.0 && 0.0 < self.nu2) {
            return Err(invalid("lstar intercept: nu1 < 0 < nu2 required"));
        }
        Ok(())
    }

    /// `I(u) = nu1 L(u; b, a1) + nu2 (1 - L(u; b, a2))`.
    pub fn eval(&self, u: f64) -> f64 {
        self.nu1 * logistic(u, self.b, self.a1) + self.nu2 * (1.0 - logistic(u, self.b, self.a2))
    }
}

/// Which slope shape an ESTAR-type term uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlopeVariant {
    /// `S1(u) = 1 - r0 / h(u)`; always below 1, may be negative.
    S1,
    /// `S2(u) = exp(-r0 / h(u))`; always in (0, 1).
    S2,
}

/// Time-varying slope `S(u)` of ESTAR type.
pub fn eval_slope(u: f64, variant: SlopeVariant, r0: f64, h: &HSpec) -> f64 {
    let ratio = r0 / h.eval(u);
    match variant {
        SlopeVariant::S1 => 1.0 - ratio,
        SlopeVariant::S2 => (-ratio).exp(),
    }
}

/// Denominator function `h` for ESTAR slopes: positive, bounded on
/// compacts, growing like |u|^rho in the tails. The six built-in families
/// all satisfy the growth condition; `rho()` reports the effective tail
/// exponent (the max of the two exponents for the two-shift families).
#[derive(Clone)]
pub enum HSpec {
    /// `1 + |u - a|^rho`
    AbsPower { rho: f64, a: f64 },
    /// `(1 + |u - a|)^rho`
    ShiftedPower { rho: f64, a: f64 },
    /// `(1 + (u - a)^2)^(rho/2)`
    QuadraticPower { rho: f64, a: f64 },
    /// `1 + |u - a1|^rho1 + |u - a2|^rho2`
    SumAbsPowers { rho1: f64, rho2: f64, a1: f64, a2: f64 },
    /// `1 + (1 + |u - a1|)^rho1 + (1 + |u - a2|)^rho2`
    SumShiftedPowers { rho1: f64, rho2: f64, a1: f64, a2: f64 },
    /// `1 + (1 + (u - a1)^2)^(rho1/2) + (1 + (u - a2)^2)^(rho2/2)`
    SumQuadraticPowers { rho1: f64, rho2: f64, a1: f64, a2: f64 },
    /// User-supplied h with a declared tail exponent.
    Custom { h: ScalarFn, rho: f64 },
}

impl fmt::Debug for HSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HSpec::AbsPower { rho, a } => write!(f, "AbsPower {{ rho: {rho}, a: {a} }}"),
            HSpec::ShiftedPower { rho, a } => write!(f, "ShiftedPower {{ rho: {rho}, a: {a} }}"),
            HSpec::QuadraticPower { rho, a } => write!(f, "QuadraticPower {{ rho: {rho}, a: {a} }}"),
            HSpec::SumAbsPowers { rho1, rho2, a1, a2 } => {
                write!(f, "SumAbsPowers {{ rho1: {rho1}, rho2: {rho2}, a1: {a1}, a2: {a2} }}")
            }
            HSpec::SumShiftedPowers { rho1, rho2, a1, a2 } => {
                write!(f, "SumShiftedPowers {{ rho1: {rho1}, rho2: {rho2}, a1: {a1}, a2: {a2} }}")
            }
            HSpec::SumQuadraticPowers { rho1, rho2, a1, a2 } => {
                write!(f, "SumQuadraticPowers {{ rho1: {rho1}, rho2: {rho2}, a1: {a1}, a2: {a2} }}")
            }
            HSpec::Custom { rho, .. } => write!(f, "Custom {{ rho: {rho} }}"),
        }
    }
}

impl PartialEq for HSpec {
    fn eq(&self, other: &Self) -> bool {
        use HSpec::*;
        match (self, other) {
            (AbsPower { rho: r, a }, AbsPower { rho: r2, a: a2 }) => r == r2 && a == a2,
            (ShiftedPower { rho: r, a }, ShiftedPower { rho: r2, a: a2 }) => r == r2 && a == a2,
            (QuadraticPower { rho: r, a }, QuadraticPower { rho: r2, a: a2 }) => r == r2 && a == a2,
            (
                SumAbsPowers { rho1, rho2, a1, a2 },
                SumAbsPowers { rho1: s1, rho2: s2, a1: b1, a2: b2 },
            ) => rho1 == s1 && rho2 == s2 && a1 == b1 && a2 == b2,
            (
                SumShiftedPowers { rho1, rho2, a1, a2 },
                SumShiftedPowers { rho1: s1, rho2: s2, a1: b1, a2: b2 },
            ) => rho1 == s1 && rho2 == s2 && a1 == b1 && a2 == b2,
            (
                SumQuadraticPowers { rho1, rho2, a1, a2 },
                SumQuadraticPowers { rho1: s1, rho2: s2, a1: b1, a2: b2 },
            ) => rho1 == s1 && rho2 == s2 && a1 == b1 && a2 == b2,
            (Custom { h: h1, rho: r1 }, Custom { h: h2, rho: r2 }) => {
                Arc::ptr_eq(h1, h2) && r1 == r2
            }
            _ => false,
        }
    }
}

fn rho_in_range(rho: f64, what: &str) -> Result<(), ModelError> {
    if rho > 0.0 && rho <= 2.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what}: rho must lie in (0, 2], got {rho}")))
    }
}

impl HSpec {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            HSpec::AbsPower { rho, a } => 1.0 + (u - a).abs().powf(rho),
            HSpec::ShiftedPower { rho, a } => (1.0 + (u - a).abs()).powf(rho),
            HSpec::QuadraticPower { rho, a } => (1.0 + (u - a) * (u - a)).powf(rho / 2.0),
            HSpec::SumAbsPowers { rho1, rho2, a1, a2 } => {
                1.0 + (u - a1).abs().powf(rho1) + (u - a2).abs().powf(rho2)
            }
            HSpec::SumShiftedPowers { rho1, rho2, a1, a2 } => {
                1.0 + (1.0 + (u - a1).abs()).powf(rho1) + (1.0 + (u - a2).abs()).powf(rho2)
            }
            HSpec::SumQuadraticPowers { rho1, rho2, a1, a2 } => {
                1.0 + (1.0 + (u - a1) * (u - a1)).powf(rho1 / 2.0)
                    + (1.0 + (u - a2) * (u - a2)).powf(rho2 / 2.0)
            }
            HSpec::Custom { ref h, .. } => h(u),
        }
    }

    /// Effective tail exponent.
    pub fn rho(&self) -> f64 {
        match *self {
            HSpec::AbsPower { rho, .. }
            | HSpec::ShiftedPower { rho, .. }
            | HSpec::QuadraticPower { rho, .. }
            | HSpec::Custom { rho, .. } => rho,
            HSpec::SumAbsPowers { rho1, rho2, .. }
            | HSpec::SumShiftedPowers { rho1, rho2, .. }
            | HSpec::SumQuadraticPowers { rho1, rho2, .. } => rho1.max(rho2),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            HSpec::AbsPower { rho, .. }
            | HSpec::ShiftedPower { rho, .. }
            | HSpec::QuadraticPower { rho, .. }
            | HSpec::Custom { rho, .. } => rho_in_range(rho, "h"),
            HSpec::SumAbsPowers { rho1, rho2, .. }
            | HSpec::SumShiftedPowers { rho1, rho2, .. }
            | HSpec::SumQuadraticPowers { rho1, rho2, .. } => {
                rho_in_range(rho1, "h")?;
                rho_in_range(rho2, "h")
            }
        }
    }
}

/// The nonlinear term `g~` of the filtered recursion
/// `u_t = u_{t-1} + g~(y_{t-1..t-p}) + eps_t`.
#[derive(Clone)]
pub enum NonlinearTerm {
    /// `g~ = 0`: pure unit root in `u`.
    Zero,
    /// `u_t = u_{t-1} + I(u_{t-1}) + eps_t` with a logistic intercept.
    LstarIntercept(LstarIntercept),
    /// `u_t - nu = S(u_{t-1}) (u_{t-1} - nu) + eps_t`.
    EstarSlope { variant: SlopeVariant, r0: f64, nu: f64, h: HSpec },
    /// `u_t = S(u_{t-1}) u_{t-1} + exp(-gamma |y|^2) theta . y + eps_t`
    /// with `y` the last p values; a three-regime ESTAR shape.
    GeneralEstar { variant: SlopeVariant, r0: f64, h: HSpec, gamma: f64, theta: Vec<f64> },
    /// User-supplied `g~` on the p-dimensional history, with an optional
    /// declared tail exponent for the implied `g`. Classification of a
    /// custom term additionally needs an envelope certificate.
    Custom { g_tilde: StateFn, rho: Option<f64> },
}

impl fmt::Debug for NonlinearTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonlinearTerm::Zero => write!(f, "Zero"),
            NonlinearTerm::LstarIntercept(p) => write!(f, "LstarIntercept({p:?})"),
            NonlinearTerm::EstarSlope { variant, r0, nu, h } => {
                write!(f, "EstarSlope {{ variant: {variant:?}, r0: {r0}, nu: {nu}, h: {h:?} }}")
            }
            NonlinearTerm::GeneralEstar { variant, r0, h, gamma, theta } => write!(
                f,
                "GeneralEstar {{ variant: {variant:?}, r0: {r0}, h: {h:?}, gamma: {gamma}, theta: {theta:?} }}"
            ),
            NonlinearTerm::Custom { rho, .. } => write!(f, "Custom {{ rho: {rho:?} }}"),
        }
    }
}

impl PartialEq for NonlinearTerm {
    fn eq(&self, other: &Self) -> bool {
        use NonlinearTerm::*;
        match (self, other) {
            (Zero, Zero) => true,
            (LstarIntercept(a), LstarIntercept(b)) => a == b,
            (
                EstarSlope { variant, r0, nu, h },
                EstarSlope { variant: v2, r0: r2, nu: n2, h: h2 },
            ) => variant == v2 && r0 == r2 && nu == n2 && h == h2,
            (
                GeneralEstar { variant, r0, h, gamma, theta },
                GeneralEstar { variant: v2, r0: r2, h: h2, gamma: g2, theta: t2 },
            ) => variant == v2 && r0 == r2 && h == h2 && gamma == g2 && theta == t2,
            (Custom { g_tilde: g1, rho: r1 }, Custom { g_tilde: g2, rho: r2 }) => {
                Arc::ptr_eq(g1, g2) && r1 == r2
            }
            _ => false,
        }
    }
}

impl NonlinearTerm {
    fn validate(&self, p: usize) -> Result<(), ModelError> {
        match self {
            NonlinearTerm::Zero | NonlinearTerm::Custom { .. } => Ok(()),
            NonlinearTerm::LstarIntercept(params) => params.validate(),
            NonlinearTerm::EstarSlope { r0, h, .. } => {
                if !(*r0 > 0.0) {
                    return Err(invalid("estar slope: r0 must be > 0"));
                }
                h.validate()
            }
            NonlinearTerm::GeneralEstar { r0, h, gamma, theta, .. } => {
                if !(*r0 > 0.0) {
                    return Err(invalid("general estar: r0 must be > 0"));
                }
                if !(*gamma > 0.0) {
                    return Err(invalid("general estar: gamma must be > 0"));
                }
                if theta.len() != p {
                    return Err(invalid(format!(
                        "general estar: theta must have length p = {p}, got {}",
                        theta.len()
                    )));
                }
                h.validate()
            }
        }
    }

    /// The transition coefficient path: `I(u)` for intercept models,
    /// `S(u)` for slope models, `None` otherwise.
    pub fn coefficient_at(&self, u: f64) -> Option<f64> {
        match self {
            NonlinearTerm::LstarIntercept(params) => Some(params.eval(u)),
            NonlinearTerm::EstarSlope { variant, r0, h, .. }
            | NonlinearTerm::GeneralEstar { variant, r0, h, .. } => {
                Some(eval_slope(u, *variant, *r0, h))
            }
            NonlinearTerm::Zero | NonlinearTerm::Custom { .. } => None,
        }
    }
}

/// Error moment class, deciding which ergodicity regime is reachable.
#[derive(Clone, Debug, PartialEq)]
pub enum MomentClass {
    /// `E exp(beta0 |eps|^kappa0) < infty`, `kappa0` in (0, 1].
    Subexponential { beta0: f64, kappa0: f64 },
    /// Only `E |eps|^s0 < infty` for some s0 > 0.
    MomentOnly { s0: f64 },
}

#[derive(Clone)]
pub enum NoiseKind {
    Gaussian { sigma2: f64 },
    /// Standard Student t rescaled to the target variance:
    /// `sqrt(sigma2 (df-2)/df) * t_df`. Requires df > 2.
    ScaledStudentT { df: u32, sigma2: f64 },
    Custom { sampler: SamplerFn, mean_zero: bool, variance: Option<f64> },
}

impl fmt::Debug for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Gaussian { sigma2 } => write!(f, "Gaussian {{ sigma2: {sigma2} }}"),
            NoiseKind::ScaledStudentT { df, sigma2 } => {
                write!(f, "ScaledStudentT {{ df: {df}, sigma2: {sigma2} }}")
            }
            NoiseKind::Custom { mean_zero, variance, .. } => {
                write!(f, "Custom {{ mean_zero: {mean_zero}, variance: {variance:?} }}")
            }
        }
    }
}

impl PartialEq for NoiseKind {
    fn eq(&self, other: &Self) -> bool {
        use NoiseKind::*;
        match (self, other) {
            (Gaussian { sigma2 }, Gaussian { sigma2: s2 }) => sigma2 == s2,
            (ScaledStudentT { df, sigma2 }, ScaledStudentT { df: d2, sigma2: s2 }) => {
                df == d2 && sigma2 == s2
            }
            (Custom { sampler: a, .. }, Custom { sampler: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub moment_class: MomentClass,
}

impl NoiseSpec {
    /// Gaussian errors; all exponential moments exist, so the class is
    /// subexponential with kappa0 = 1 (beta0 is conventional).
    pub fn gaussian(sigma2: f64) -> Result<Self, ModelError> {
        let spec = NoiseSpec {
            kind: NoiseKind::Gaussian { sigma2 },
            moment_class: MomentClass::Subexponential { beta0: 1.0, kappa0: 1.0 },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Rescaled Student t with target variance `sigma2` and declared finite
    /// moment order `s0` (must satisfy s0 < df).
    pub fn scaled_student_t(df: u32, sigma2: f64, s0: f64) -> Result<Self, ModelError> {
        let spec = NoiseSpec {
            kind: NoiseKind::ScaledStudentT { df, sigma2 },
            moment_class: MomentClass::MomentOnly { s0 },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match &self.moment_class {
            MomentClass::Subexponential { beta0, kappa0 } => {
                if !(*beta0 > 0.0) {
                    return Err(invalid("moment class: beta0 must be > 0"));
                }
                if !(*kappa0 > 0.0 && *kappa0 <= 1.0) {
                    return Err(invalid("moment class: kappa0 must lie in (0, 1]"));
                }
            }
            MomentClass::MomentOnly { s0 } => {
                if !(*s0 > 0.0) {
                    return Err(invalid("moment class: s0 must be > 0"));
                }
            }
        }
        match &self.kind {
            NoiseKind::Gaussian { sigma2 } => {
                if !(*sigma2 > 0.0) {
                    return Err(invalid("gaussian noise: sigma2 must be > 0"));
                }
            }
            NoiseKind::ScaledStudentT { df, sigma2 } => {
                if *df == 0 {
                    return Err(invalid("student t: df must be >= 1"));
                }
                if !(*sigma2 > 0.0) {
                    return Err(invalid("student t: sigma2 must be > 0"));
                }
                if let MomentClass::MomentOnly { s0 } = self.moment_class {
                    if s0 >= *df as f64 {
                        return Err(invalid(format!(
                            "student t: declared moment order s0 = {s0} requires s0 < df = {df}"
                        )));
                    }
                }
                if let MomentClass::Subexponential { .. } = self.moment_class {
                    return Err(invalid(
                        "student t has no exponential moments; use a MomentOnly class",
                    ));
                }
            }
            NoiseKind::Custom { mean_zero, .. } => {
                if let MomentClass::Subexponential { .. } = self.moment_class {
                    if !mean_zero {
                        return Err(invalid(
                            "subexponential moment class requires a mean-zero error",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// One draw. Reproducible given the stream state.
    pub fn sample(&self, rng: &mut Stream) -> Result<f64, ModelError> {
        match &self.kind {
            NoiseKind::Gaussian { sigma2 } => Ok(sigma2.sqrt() * rng.normal()),
            NoiseKind::ScaledStudentT { df, sigma2 } => {
                if *df <= 2 {
                    return Err(ModelError::RescaleUndefined(*df));
                }
                let scale = (sigma2 * (*df as f64 - 2.0) / *df as f64).sqrt();
                Ok(scale * rng.student_t(*df))
            }
            NoiseKind::Custom { sampler, .. } => Ok(sampler(rng)),
        }
    }

    /// `E[eps^2]` when known in closed form.
    pub fn variance(&self) -> Option<f64> {
        match &self.kind {
            NoiseKind::Gaussian { sigma2 } => Some(*sigma2),
            NoiseKind::ScaledStudentT { df, sigma2 } => {
                if *df > 2 {
                    Some(*sigma2)
                } else {
                    None
                }
            }
            NoiseKind::Custom { variance, .. } => *variance,
        }
    }

    pub fn is_mean_zero(&self) -> bool {
        match &self.kind {
            NoiseKind::Gaussian { .. } | NoiseKind::ScaledStudentT { .. } => true,
            NoiseKind::Custom { mean_zero, .. } => *mean_zero,
        }
    }

    /// Whether the error law is symmetric about zero (enables antithetic
    /// pairing in Monte Carlo estimators).
    pub fn is_symmetric(&self) -> bool {
        matches!(
            &self.kind,
            NoiseKind::Gaussian { .. } | NoiseKind::ScaledStudentT { .. }
        )
    }
}

/// A fully specified model: order, stable AR coefficients, nonlinear term,
/// error distribution. Immutable after construction and cheap to share;
/// the companion form (including the weighted-norm certificate) is built
/// eagerly so the stability invariant is checked exactly once.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    p: usize,
    pi: Vec<f64>,
    nonlinear: NonlinearTerm,
    noise: NoiseSpec,
    companion: CompanionForm,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.pi == other.pi
            && self.nonlinear == other.nonlinear
            && self.noise == other.noise
    }
}

impl ModelSpec {
    pub fn new(
        p: usize,
        pi: Vec<f64>,
        nonlinear: NonlinearTerm,
        noise: NoiseSpec,
    ) -> Result<Self, ModelError> {
        if p == 0 {
            return Err(invalid("p must be >= 1"));
        }
        if pi.len() != p - 1 {
            return Err(invalid(format!(
                "pi must have length p - 1 = {}, got {}",
                p - 1,
                pi.len()
            )));
        }
        nonlinear.validate(p)?;
        noise.validate()?;
        let companion = companion::build_companion(&pi).map_err(|e| match e {
            companion::CompanionError::NotContractive(r) => ModelError::UnstableRemainder(r),
            other => invalid(other.to_string()),
        })?;
        Ok(ModelSpec { p, pi, nonlinear, noise, companion })
    }

    /// Build from the unit-root AR form `phi_1..phi_p`.
    pub fn from_phi(
        phi: &[f64],
        nonlinear: NonlinearTerm,
        noise: NoiseSpec,
    ) -> Result<Self, ModelError> {
        let pi = decompose_unit_root(phi)?;
        ModelSpec::new(phi.len(), pi, nonlinear, noise)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn nonlinear(&self) -> &NonlinearTerm {
        &self.nonlinear
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn companion(&self) -> &CompanionForm {
        &self.companion
    }

    /// `u = y_{t-1} - pi_1 y_{t-2} - ... - pi_{p-1} y_{t-p}` for a history
    /// ordered most recent first.
    #[inline]
    pub fn filtered(&self, history: &[f64]) -> f64 {
        let mut u = history[0];
        for (j, &pj) in self.pi.iter().enumerate() {
            u -= pj * history[j + 1];
        }
        u
    }

    /// One transition: `history` holds `y_{t-1}..y_{t-p}` (most recent
    /// first) and `eps` is the error draw; returns `y_t`. Deterministic in
    /// its inputs.
    pub fn step(&self, history: &[f64], eps: f64) -> Result<f64, ModelError> {
        if history.len() != self.p {
            return Err(ModelError::HistoryLengthMismatch {
                expected: self.p,
                got: history.len(),
            });
        }
        let u_prev = self.filtered(history);
        let u_t = match &self.nonlinear {
            NonlinearTerm::Zero => u_prev + eps,
            NonlinearTerm::LstarIntercept(params) => u_prev + params.eval(u_prev) + eps,
            NonlinearTerm::EstarSlope { variant, r0, nu, h } => {
                nu + eval_slope(u_prev, *variant, *r0, h) * (u_prev - nu) + eps
            }
            NonlinearTerm::GeneralEstar { variant, r0, h, gamma, theta } => {
                let norm2: f64 = history.iter().map(|y| y * y).sum();
                let dot: f64 = theta.iter().zip(history).map(|(t, y)| t * y).sum();
                eval_slope(u_prev, *variant, *r0, h) * u_prev + (-gamma * norm2).exp() * dot + eps
            }
            NonlinearTerm::Custom { g_tilde, .. } => u_prev + g_tilde(history) + eps,
        };
        let mut y = u_t;
        for (j, &pj) in self.pi.iter().enumerate() {
            y += pj * history[j];
        }
        Ok(y)
    }

    /// Stable hash of the model parameters (closures contribute a tag
    /// only); used to stamp simulation outputs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV offset
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        eat(&(self.p as u64).to_le_bytes());
        for x in &self.pi {
            eat(&x.to_bits().to_le_bytes());
        }
        eat(format!("{:?}", self.nonlinear).as_bytes());
        eat(format!("{:?}", self.noise).as_bytes());
        h
    }
}
