//! Model spec files: plain-text key/value configuration with sections
//! `[model]`, `[nonlinear]`, `[noise]`, and an optional `[run]`.
//!
//! ```text
//! [model]
//! p = 2
//! pi = [0.75]          # or: phi = [1.75, -0.75] (unit-root AR form)
//!
//! [nonlinear]
//! kind = "lstar-intercept"   # zero | lstar-intercept | estar-slope | general-estar
//! nu1 = -0.08
//! nu2 = 0.08
//! b = 2.0
//! a1 = 0.0
//! a2 = 0.0
//!
//! [noise]
//! kind = "student-t"         # gaussian | student-t
//! df = 5
//! sigma2 = 0.300
//! s0 = 4.0                   # declared finite moment order (default df - 1)
//!
//! [run]
//! n = 1000
//! burn_in = 500
//! seed = 1
//! ```
//!
//! ESTAR kinds take `variant = "s1" | "s2"`, `r0`, `nu` (slope form only),
//! `gamma` and `theta` (general form only), and an `[nonlinear.h]`
//! subtable with `family` one of `abs-power`, `shifted-power`,
//! `quadratic-power`, `sum-abs-powers`, `sum-shifted-powers`,
//! `sum-quadratic-powers` plus its `rho`/`a` parameters. Unknown keys are
//! rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use crate::model::{
    HSpec, LstarIntercept, ModelError, ModelSpec, MomentClass, NoiseKind, NoiseSpec,
    NonlinearTerm, SlopeVariant,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Toml(String),
    #[error("config error: {0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn schema(msg: impl Into<String>) -> ConfigError {
    ConfigError::Schema(msg.into())
}

/// Defaults from the optional `[run]` section.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunDefaults {
    pub n: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for RunDefaults {
    fn default() -> Self {
        RunDefaults { n: 1000, burn_in: 500, seed: 1 }
    }
}

struct Section<'a> {
    name: &'static str,
    map: &'a toml::map::Map<String, Value>,
    allowed: &'static [&'static str],
}

impl<'a> Section<'a> {
    fn check_keys(&self) -> Result<(), ConfigError> {
        for key in self.map.keys() {
            if !self.allowed.contains(&key.as_str()) {
                return Err(schema(format!(
                    "unknown key `{key}` in [{}]; allowed: {}",
                    self.name,
                    self.allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64_opt(key)?
            .ok_or_else(|| schema(format!("[{}] is missing `{key}`", self.name)))
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(schema(format!("[{}] `{key}` must be a number", self.name))),
        }
    }

    fn u64_opt(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => {
                Err(schema(format!("[{}] `{key}` must be a nonnegative integer", self.name)))
            }
        }
    }

    fn str_req(&self, key: &str) -> Result<&'a str, ConfigError> {
        match self.map.get(key) {
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(schema(format!("[{}] `{key}` must be a string", self.name))),
            None => Err(schema(format!("[{}] is missing `{key}`", self.name))),
        }
    }

    fn floats_opt(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(schema(format!(
                        "[{}] `{key}` must be an array of numbers",
                        self.name
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(schema(format!("[{}] `{key}` must be an array", self.name))),
        }
    }
}

fn section<'a>(
    root: &'a toml::map::Map<String, Value>,
    name: &'static str,
    allowed: &'static [&'static str],
    required: bool,
) -> Result<Option<Section<'a>>, ConfigError> {
    match root.get(name) {
        Some(Value::Table(map)) => {
            let s = Section { name, map, allowed };
            s.check_keys()?;
            Ok(Some(s))
        }
        Some(_) => Err(schema(format!("[{name}] must be a table"))),
        None if required => Err(schema(format!("missing section [{name}]"))),
        None => Ok(None),
    }
}

/// Parse a model spec file from a string.
pub fn parse_model_str(text: &str) -> Result<(ModelSpec, RunDefaults), ConfigError> {
    let root: toml::Table =
        text.parse().map_err(|e: toml::de::Error| ConfigError::Toml(e.to_string()))?;
    for key in root.keys() {
        if !["model", "nonlinear", "noise", "run"].contains(&key.as_str()) {
            return Err(schema(format!("unknown section [{key}]")));
        }
    }

    let model_sec = section(&root, "model", &["p", "pi", "phi"], true)?.unwrap();
    let p = model_sec
        .u64_opt("p")?
        .ok_or_else(|| schema("[model] is missing `p`"))? as usize;
    let pi = model_sec.floats_opt("pi")?;
    let phi = model_sec.floats_opt("phi")?;
    let pi = match (pi, phi) {
        (Some(_), Some(_)) => {
            return Err(schema("[model] must set `pi` or `phi`, not both"));
        }
        (Some(pi), None) => pi,
        (None, Some(phi)) => {
            if phi.len() != p {
                return Err(schema(format!(
                    "[model] `phi` must have length p = {p}, got {}",
                    phi.len()
                )));
            }
            crate::model::decompose_unit_root(&phi)?
        }
        (None, None) if p == 1 => vec![],
        (None, None) => return Err(schema("[model] needs `pi` or `phi` when p > 1")),
    };

    let nl_allowed: &[&str] = &[
        "kind", "nu1", "nu2", "b", "a1", "a2", "variant", "r0", "nu", "gamma", "theta", "h",
    ];
    let nl_sec = section(&root, "nonlinear", nl_allowed, true)?.unwrap();
    let nonlinear = parse_nonlinear(&nl_sec)?;

    let noise_sec = section(
        &root,
        "noise",
        &["kind", "sigma2", "df", "s0", "beta0", "kappa0"],
        true,
    )?
    .unwrap();
    let noise = parse_noise(&noise_sec)?;

    let mut run = RunDefaults::default();
    if let Some(run_sec) = section(&root, "run", &["n", "burn_in", "seed"], false)? {
        if let Some(n) = run_sec.u64_opt("n")? {
            run.n = n as usize;
        }
        if let Some(b) = run_sec.u64_opt("burn_in")? {
            run.burn_in = b as usize;
        }
        if let Some(s) = run_sec.u64_opt("seed")? {
            run.seed = s;
        }
    }

    let spec = ModelSpec::new(p, pi, nonlinear, noise)?;
    Ok((spec, run))
}

/// Parse a model spec file from disk.
pub fn parse_model_file(path: impl AsRef<Path>) -> Result<(ModelSpec, RunDefaults), ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_model_str(&text)
}

fn parse_nonlinear(sec: &Section<'_>) -> Result<NonlinearTerm, ConfigError> {
    let kind = sec.str_req("kind")?;
    let reject = |keys: &[&str]| -> Result<(), ConfigError> {
        for k in keys {
            if sec.map.contains_key(*k) {
                return Err(schema(format!(
                    "[nonlinear] key `{k}` does not apply to kind = \"{kind}\""
                )));
            }
        }
        Ok(())
    };
    match kind {
        "zero" => {
            reject(&["nu1", "nu2", "b", "a1", "a2", "variant", "r0", "nu", "gamma", "theta", "h"])?;
            Ok(NonlinearTerm::Zero)
        }
        "lstar-intercept" => {
            reject(&["variant", "r0", "nu", "gamma", "theta", "h"])?;
            Ok(NonlinearTerm::LstarIntercept(LstarIntercept {
                nu1: sec.f64("nu1")?,
                nu2: sec.f64("nu2")?,
                b: sec.f64("b")?,
                a1: sec.f64("a1")?,
                a2: sec.f64("a2")?,
            }))
        }
        "estar-slope" => {
            reject(&["nu1", "nu2", "b", "gamma", "theta"])?;
            Ok(NonlinearTerm::EstarSlope {
                variant: parse_variant(sec.str_req("variant")?)?,
                r0: sec.f64("r0")?,
                nu: sec.f64("nu")?,
                h: parse_h(sec)?,
            })
        }
        "general-estar" => {
            reject(&["nu1", "nu2", "b", "nu"])?;
            let theta = sec
                .floats_opt("theta")?
                .ok_or_else(|| schema("[nonlinear] general-estar needs `theta`"))?;
            Ok(NonlinearTerm::GeneralEstar {
                variant: parse_variant(sec.str_req("variant")?)?,
                r0: sec.f64("r0")?,
                h: parse_h(sec)?,
                gamma: sec.f64("gamma")?,
                theta,
            })
        }
        other => Err(schema(format!(
            "unknown nonlinear kind \"{other}\"; expected zero, lstar-intercept, estar-slope, or general-estar"
        ))),
    }
}

fn parse_variant(s: &str) -> Result<SlopeVariant, ConfigError> {
    match s {
        "s1" => Ok(SlopeVariant::S1),
        "s2" => Ok(SlopeVariant::S2),
        other => Err(schema(format!("unknown slope variant \"{other}\"; expected s1 or s2"))),
    }
}

fn parse_h(outer: &Section<'_>) -> Result<HSpec, ConfigError> {
    let Some(Value::Table(map)) = outer.map.get("h") else {
        return Err(schema("[nonlinear] ESTAR kinds need an [nonlinear.h] subtable"));
    };
    let sec = Section {
        name: "nonlinear.h",
        map,
        allowed: &["family", "rho", "a", "rho1", "rho2", "a1", "a2"],
    };
    sec.check_keys()?;
    let family = sec.str_req("family")?;
    let single = |sec: &Section<'_>| -> Result<(f64, f64), ConfigError> {
        Ok((sec.f64("rho")?, sec.f64_opt("a")?.unwrap_or(0.0)))
    };
    let double = |sec: &Section<'_>| -> Result<(f64, f64, f64, f64), ConfigError> {
        Ok((
            sec.f64("rho1")?,
            sec.f64("rho2")?,
            sec.f64_opt("a1")?.unwrap_or(0.0),
            sec.f64_opt("a2")?.unwrap_or(0.0),
        ))
    };
    let h = match family {
        "abs-power" => {
            let (rho, a) = single(&sec)?;
            HSpec::AbsPower { rho, a }
        }
        "shifted-power" => {
            let (rho, a) = single(&sec)?;
            HSpec::ShiftedPower { rho, a }
        }
        "quadratic-power" => {
            let (rho, a) = single(&sec)?;
            HSpec::QuadraticPower { rho, a }
        }
        "sum-abs-powers" => {
            let (rho1, rho2, a1, a2) = double(&sec)?;
            HSpec::SumAbsPowers { rho1, rho2, a1, a2 }
        }
        "sum-shifted-powers" => {
            let (rho1, rho2, a1, a2) = double(&sec)?;
            HSpec::SumShiftedPowers { rho1, rho2, a1, a2 }
        }
        "sum-quadratic-powers" => {
            let (rho1, rho2, a1, a2) = double(&sec)?;
            HSpec::SumQuadraticPowers { rho1, rho2, a1, a2 }
        }
        other => return Err(schema(format!("unknown h family \"{other}\""))),
    };
    Ok(h)
}

fn parse_noise(sec: &Section<'_>) -> Result<NoiseSpec, ConfigError> {
    match sec.str_req("kind")? {
        "gaussian" => {
            if sec.map.contains_key("df") {
                return Err(schema("[noise] `df` does not apply to gaussian"));
            }
            let sigma2 = sec.f64("sigma2")?;
            let spec = match sec.f64_opt("s0")? {
                Some(s0) => {
                    if sec.map.contains_key("beta0") || sec.map.contains_key("kappa0") {
                        return Err(schema(
                            "[noise] set either s0 (moment-only) or beta0/kappa0, not both",
                        ));
                    }
                    NoiseSpec {
                        kind: NoiseKind::Gaussian { sigma2 },
                        moment_class: MomentClass::MomentOnly { s0 },
                    }
                }
                None => NoiseSpec {
                    kind: NoiseKind::Gaussian { sigma2 },
                    moment_class: MomentClass::Subexponential {
                        beta0: sec.f64_opt("beta0")?.unwrap_or(1.0),
                        kappa0: sec.f64_opt("kappa0")?.unwrap_or(1.0),
                    },
                },
            };
            spec.validate()?;
            Ok(spec)
        }
        "student-t" => {
            if sec.map.contains_key("beta0") || sec.map.contains_key("kappa0") {
                return Err(schema("[noise] student-t has no exponential moments"));
            }
            let df = sec
                .u64_opt("df")?
                .ok_or_else(|| schema("[noise] student-t needs `df`"))? as u32;
            let sigma2 = sec.f64("sigma2")?;
            let s0 = sec.f64_opt("s0")?.unwrap_or(df as f64 - 1.0);
            Ok(NoiseSpec::scaled_student_t(df, sigma2, s0)?)
        }
        other => {
            Err(schema(format!("unknown noise kind \"{other}\"; expected gaussian or student-t")))
        }
    }
}

/// Serialize a model plus run defaults back to the file format. Custom
/// closures have no file representation and are rejected.
pub fn to_model_string(model: &ModelSpec, run: &RunDefaults) -> Result<String, ConfigError> {
    let mut lines = Vec::new();
    lines.push("[model]".to_string());
    lines.push(format!("p = {}", model.p()));
    if model.p() > 1 {
        let pi: Vec<String> = model.pi().iter().map(|x| fmt_f64(*x)).collect();
        lines.push(format!("pi = [{}]", pi.join(", ")));
    }
    lines.push(String::new());
    lines.push("[nonlinear]".to_string());
    match model.nonlinear() {
        NonlinearTerm::Zero => lines.push("kind = \"zero\"".to_string()),
        NonlinearTerm::LstarIntercept(p) => {
            lines.push("kind = \"lstar-intercept\"".to_string());
            lines.push(format!("nu1 = {}", fmt_f64(p.nu1)));
            lines.push(format!("nu2 = {}", fmt_f64(p.nu2)));
            lines.push(format!("b = {}", fmt_f64(p.b)));
            lines.push(format!("a1 = {}", fmt_f64(p.a1)));
            lines.push(format!("a2 = {}", fmt_f64(p.a2)));
        }
        NonlinearTerm::EstarSlope { variant, r0, nu, h } => {
            lines.push("kind = \"estar-slope\"".to_string());
            lines.push(format!("variant = \"{}\"", variant_str(*variant)));
            lines.push(format!("r0 = {}", fmt_f64(*r0)));
            lines.push(format!("nu = {}", fmt_f64(*nu)));
            lines.extend(h_lines(h)?);
        }
        NonlinearTerm::GeneralEstar { variant, r0, h, gamma, theta } => {
            lines.push("kind = \"general-estar\"".to_string());
            lines.push(format!("variant = \"{}\"", variant_str(*variant)));
            lines.push(format!("r0 = {}", fmt_f64(*r0)));
            lines.push(format!("gamma = {}", fmt_f64(*gamma)));
            let th: Vec<String> = theta.iter().map(|x| fmt_f64(*x)).collect();
            lines.push(format!("theta = [{}]", th.join(", ")));
            lines.extend(h_lines(h)?);
        }
        NonlinearTerm::Custom { .. } => {
            return Err(schema("custom nonlinear terms have no file representation"));
        }
    }
    lines.push(String::new());
    lines.push("[noise]".to_string());
    match (&model.noise().kind, &model.noise().moment_class) {
        (NoiseKind::Gaussian { sigma2 }, MomentClass::Subexponential { beta0, kappa0 }) => {
            lines.push("kind = \"gaussian\"".to_string());
            lines.push(format!("sigma2 = {}", fmt_f64(*sigma2)));
            lines.push(format!("beta0 = {}", fmt_f64(*beta0)));
            lines.push(format!("kappa0 = {}", fmt_f64(*kappa0)));
        }
        (NoiseKind::Gaussian { sigma2 }, MomentClass::MomentOnly { s0 }) => {
            lines.push("kind = \"gaussian\"".to_string());
            lines.push(format!("sigma2 = {}", fmt_f64(*sigma2)));
            lines.push(format!("s0 = {}", fmt_f64(*s0)));
        }
        (NoiseKind::ScaledStudentT { df, sigma2 }, MomentClass::MomentOnly { s0 }) => {
            lines.push("kind = \"student-t\"".to_string());
            lines.push(format!("df = {df}"));
            lines.push(format!("sigma2 = {}", fmt_f64(*sigma2)));
            lines.push(format!("s0 = {}", fmt_f64(*s0)));
        }
        _ => return Err(schema("noise configuration has no file representation")),
    }
    lines.push(String::new());
    lines.push("[run]".to_string());
    lines.push(format!("n = {}", run.n));
    lines.push(format!("burn_in = {}", run.burn_in));
    lines.push(format!("seed = {}", run.seed));
    lines.push(String::new());
    Ok(lines.join("\n"))
}

fn variant_str(v: SlopeVariant) -> &'static str {
    match v {
        SlopeVariant::S1 => "s1",
        SlopeVariant::S2 => "s2",
    }
}

fn h_lines(h: &HSpec) -> Result<Vec<String>, ConfigError> {
    let mut kv: BTreeMap<&str, f64> = BTreeMap::new();
    let family = match h {
        HSpec::AbsPower { rho, a } => {
            kv.insert("rho", *rho);
            kv.insert("a", *a);
            "abs-power"
        }
        HSpec::ShiftedPower { rho, a } => {
            kv.insert("rho", *rho);
            kv.insert("a", *a);
            "shifted-power"
        }
        HSpec::QuadraticPower { rho, a } => {
            kv.insert("rho", *rho);
            kv.insert("a", *a);
            "quadratic-power"
        }
        HSpec::SumAbsPowers { rho1, rho2, a1, a2 } => {
            kv.extend([("rho1", *rho1), ("rho2", *rho2), ("a1", *a1), ("a2", *a2)]);
            "sum-abs-powers"
        }
        HSpec::SumShiftedPowers { rho1, rho2, a1, a2 } => {
            kv.extend([("rho1", *rho1), ("rho2", *rho2), ("a1", *a1), ("a2", *a2)]);
            "sum-shifted-powers"
        }
        HSpec::SumQuadraticPowers { rho1, rho2, a1, a2 } => {
            kv.extend([("rho1", *rho1), ("rho2", *rho2), ("a1", *a1), ("a2", *a2)]);
            "sum-quadratic-powers"
        }
        HSpec::Custom { .. } => {
            return Err(schema("custom h functions have no file representation"));
        }
    };
    let mut lines = vec!["".to_string(), "[nonlinear.h]".to_string()];
    lines.push(format!("family = \"{family}\""));
    for (k, v) in kv {
        lines.push(format!("{k} = {}", fmt_f64(v)));
    }
    Ok(lines)
}

fn fmt_f64(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1_LEFT: &str = r#"
[model]
p = 2
pi = [0.75]

[nonlinear]
kind = "lstar-intercept"
nu1 = -0.08
nu2 = 0.08
b = 2.0
a1 = 0.0
a2 = 0.0

[noise]
kind = "student-t"
df = 5
sigma2 = 0.300
s0 = 4.0
"#;

    #[test]
    fn parses_and_roundtrips() {
        let (model, run) = parse_model_str(FIG1_LEFT).unwrap();
        assert_eq!(model.p(), 2);
        assert_eq!(model.pi(), &[0.75]);
        assert_eq!(run, RunDefaults::default());
        let text = to_model_string(&model, &run).unwrap();
        let (again, run2) = parse_model_str(&text).unwrap();
        assert_eq!(model, again);
        assert_eq!(run, run2);
    }

    #[test]
    fn phi_form_accepted() {
        let text = r#"
[model]
p = 2
phi = [1.75, -0.75]

[nonlinear]
kind = "zero"

[noise]
kind = "gaussian"
sigma2 = 1.0
"#;
        let (model, _) = parse_model_str(text).unwrap();
        assert!((model.pi()[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = FIG1_LEFT.replace("sigma2 = 0.300", "sigma2 = 0.300\nbogus = 1");
        assert!(matches!(parse_model_str(&bad), Err(ConfigError::Schema(_))));
        let bad2 = FIG1_LEFT.replace("[noise]", "[extra]\nx = 1\n\n[noise]");
        assert!(matches!(parse_model_str(&bad2), Err(ConfigError::Schema(_))));
        let bad3 = FIG1_LEFT.replace("b = 2.0", "b = 2.0\nr0 = 0.5");
        assert!(matches!(parse_model_str(&bad3), Err(ConfigError::Schema(_))));
    }

    #[test]
    fn estar_with_h_subtable() {
        let text = r#"
[model]
p = 2
pi = [0.75]

[nonlinear]
kind = "estar-slope"
variant = "s1"
r0 = 0.15
nu = 2.0

[nonlinear.h]
family = "abs-power"
rho = 1.5
a = 0.0

[noise]
kind = "gaussian"
sigma2 = 0.25

[run]
n = 1000
burn_in = 500
seed = 3
"#;
        let (model, run) = parse_model_str(text).unwrap();
        assert_eq!(run.seed, 3);
        match model.nonlinear() {
            NonlinearTerm::EstarSlope { variant, r0, nu, h } => {
                assert_eq!(*variant, SlopeVariant::S1);
                assert_eq!(*r0, 0.15);
                assert_eq!(*nu, 2.0);
                assert_eq!(h.rho(), 1.5);
            }
            other => panic!("wrong term {other:?}"),
        }
        let text2 = to_model_string(&model, &run).unwrap();
        let (again, _) = parse_model_str(&text2).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn invalid_parameters_surface_as_model_errors() {
        let bad = FIG1_LEFT.replace("nu1 = -0.08", "nu1 = 0.08");
        assert!(matches!(parse_model_str(&bad), Err(ConfigError::Model(_))));
        let bad_noise = FIG1_LEFT.replace("df = 5", "df = 2");
        assert!(matches!(parse_model_str(&bad_noise), Err(ConfigError::Model(_))));
    }
}
