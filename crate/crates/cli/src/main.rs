//! Command-line front door: parse model spec files, run subcommands, emit
//! CSV and text reports.
//!
//! Exit codes: 0 on success or a passing certificate, 2 on a certified
//! failure (drift fails, classification not covered, envelope fails,
//! insufficient mixing decay), 1 on usage or configuration errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use subgeo::classify::{classify_model, ClassifyError};
use subgeo::config::{parse_model_file, RunDefaults};
use subgeo::drift::{
    check_g_envelope, verify_drift, verify_drift_shrinking, DriftSpec, EnvelopeConfig, GridConfig,
    McConfig,
};
use subgeo::mat::Mat;
use subgeo::model::{ModelSpec, MomentClass};
use subgeo::sim::{
    acf, csv, ensemble_tv, fit_mixing_rate, simulate, stationary_reference, ReferenceConfig,
    SimError, SimInit, StartState, DEFAULT_HORIZONS,
};

#[derive(Parser)]
#[command(name = "subgeo", version, about = "Simulate and certify nonlinear autoregressions with unit-root-like tails")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ModelArg {
    /// Model spec file (sections [model], [nonlinear], [noise], [run]).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a trajectory and write t,y,u,coef rows.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Initial state "y0,y-1,..." (defaults to a zero start plus burn-in).
        #[arg(long)]
        init: Option<String>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ergodicity-rate certificate for a model.
    Classify {
        #[command(flatten)]
        model: ModelArg,
        /// Width of the ambiguity band around rho = kappa0.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo verification of the one-step drift inequality.
    VerifyDrift {
        #[command(flatten)]
        model: ModelArg,
        /// Lyapunov family: poly or subexp.
        #[arg(long = "V", default_value = "poly")]
        v_family: String,
        /// Moment order s0 of the polynomial V.
        #[arg(long, default_value_t = 4.0)]
        s0: f64,
        /// Tail exponent override (defaults to the model's own).
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Halve the small constants until the verifier passes.
        #[arg(long)]
        shrink: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tail-envelope certificate for the model's regression function g.
    Envelope {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ensemble TV-decay diagnostics against a long-run reference.
    Mixing {
        #[command(flatten)]
        model: ModelArg,
        /// Start state "y0,y-1,..." for every replication.
        #[arg(long)]
        x0: Option<String>,
        /// Comma-separated horizon list.
        #[arg(long)]
        horizons: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and write sample autocorrelations.
    Acf {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 50)]
        max_lag: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the companion-form matrices and norm certificate as CSV blocks.
    Companion {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Success,
    CertifiedFailure(String),
}

/// The two error classes map onto exit codes: config/usage errors exit 1.
#[derive(Debug)]
enum CliError {
    Config(String),
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CertifiedFailure(msg)) => {
            eprintln!("certified failure: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load(model: &ModelArg) -> Result<(ModelSpec, RunDefaults), CliError> {
    parse_model_file(&model.model)
        .map_err(|e| CliError::Config(format!("{}: {e}", model.model.display())))
}

fn parse_state(s: &str, p: usize) -> Result<Vec<f64>, CliError> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|e| CliError::Config(format!("bad state \"{s}\": {e}")))?;
    if vals.len() != p {
        return Err(CliError::Config(format!(
            "state \"{s}\" has {} entries, model order is {p}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn emit(out: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| CliError::Run(format!("{}: {e}", path.display()))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn header(settings: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in settings {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

fn run(cmd: Cmd) -> Result<Outcome, CliError> {
    match cmd {
        Cmd::Simulate { model, n, burn_in, seed, init, out } => {
            let (spec, run) = load(&model)?;
            let n = n.unwrap_or(run.n);
            let burn_in = burn_in.unwrap_or(run.burn_in);
            let seed = seed.unwrap_or(run.seed);
            let init = match init {
                Some(s) => SimInit::Explicit(parse_state(&s, spec.p())?),
                None => SimInit::Warmup,
            };
            let traj = simulate(&spec, n, burn_in, seed, &init)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let mut text = header(&[
                ("subcommand", "simulate".into()),
                ("model", model.model.display().to_string()),
                ("n", n.to_string()),
                ("burn_in", burn_in.to_string()),
                ("seed", seed.to_string()),
                ("fingerprint", format!("{:016x}", traj.fingerprint)),
            ]);
            text.push_str(&csv::trajectory(&traj, &spec));
            emit(&out, &text)?;
            Ok(Outcome::Success)
        }
        Cmd::Classify { model, tolerance, out } => {
            let (spec, _) = load(&model)?;
            match classify_model(&spec, None, tolerance) {
                Ok(cert) => {
                    let mut text = format!("{cert}\n");
                    text.push_str(&cert.to_key_values());
                    emit(&out, &text)?;
                    Ok(Outcome::Success)
                }
                Err(
                    e @ (ClassifyError::NotCovered(_)
                    | ClassifyError::BorderlineAmbiguous { .. }
                    | ClassifyError::EnvelopeFailed { .. }
                    | ClassifyError::EnvelopeMissing),
                ) => Ok(Outcome::CertifiedFailure(e.to_string())),
                Err(e) => Err(CliError::Run(e.to_string())),
            }
        }
        Cmd::VerifyDrift { model, v_family, s0, rho, reps, seed, shrink, out } => {
            let (spec, run) = load(&model)?;
            let rho = match rho {
                Some(r) => r,
                None => model_rho(&spec)?,
            };
            let companion = spec.companion().clone();
            let drift_spec = match v_family.as_str() {
                "poly" => DriftSpec::polynomial_defaults(companion, rho, s0),
                "subexp" => {
                    let MomentClass::Subexponential { beta0, kappa0 } =
                        spec.noise().moment_class.clone()
                    else {
                        return Err(CliError::Config(
                            "subexp V needs a noise law with exponential moments".into(),
                        ));
                    };
                    DriftSpec::subexponential_defaults(companion, rho, kappa0, beta0)
                }
                other => {
                    return Err(CliError::Config(format!(
                        "unknown V family \"{other}\"; expected poly or subexp"
                    )))
                }
            }
            .map_err(|e| CliError::Config(e.to_string()))?;
            let mc = McConfig {
                reps: reps.unwrap_or(200_000),
                seed: seed.unwrap_or(run.seed),
                target_halfwidth: None,
            };
            let grid = GridConfig::default();
            let (final_spec, report) = if shrink {
                verify_drift_shrinking(&spec, &drift_spec, &grid, &mc)
                    .map_err(|e| CliError::Run(e.to_string()))?
            } else {
                let r = verify_drift(&spec, &drift_spec, &grid, &mc)
                    .map_err(|e| CliError::Run(e.to_string()))?;
                (drift_spec, r)
            };
            let mut text = header(&[
                ("subcommand", "verify-drift".into()),
                ("model", model.model.display().to_string()),
                ("V", v_family.clone()),
                ("rho", rho.to_string()),
                ("s0", s0.to_string()),
                ("phi_scale", final_spec.phi.scale().to_string()),
                ("reps", mc.reps.to_string()),
                ("seed", mc.seed.to_string()),
            ]);
            text.push_str(&report.to_csv());
            emit(&out, &text)?;
            if report.pass {
                Ok(Outcome::Success)
            } else {
                Ok(Outcome::CertifiedFailure("drift condition not verified on the grid".into()))
            }
        }
        Cmd::Envelope { model, rho, out } => {
            let (spec, _) = load(&model)?;
            let g = subgeo::classify::canonical_g(&spec).ok_or_else(|| {
                CliError::Config("custom nonlinear terms have no canonical g".into())
            })?;
            let rho = match rho {
                Some(r) => r,
                None => model_rho(&spec)?,
            };
            let cert = check_g_envelope(&*g, rho, &EnvelopeConfig::default());
            let text = format!(
                "pass = {}\nr = {}\nM0 = {}\nK0 = {}\nrho = {}\nworst_margin = {}\nworst_u = {}\n",
                cert.pass, cert.r, cert.m0, cert.k0, cert.rho, cert.worst_margin, cert.worst_u
            );
            emit(&out, &text)?;
            if cert.pass {
                Ok(Outcome::Success)
            } else {
                Ok(Outcome::CertifiedFailure("no tail envelope certificate found".into()))
            }
        }
        Cmd::Mixing { model, x0, horizons, reps, seed, out } => {
            let (spec, run) = load(&model)?;
            let seed = seed.unwrap_or(run.seed);
            let horizons: Vec<usize> = match horizons {
                Some(h) => h
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Config(format!("bad horizons: {e}")))?,
                None => DEFAULT_HORIZONS.to_vec(),
            };
            let start = match x0 {
                Some(s) => StartState::Fixed(parse_state(&s, spec.p())?),
                None => StartState::Stationary,
            };
            let reference = stationary_reference(&spec, &ReferenceConfig {
                seed: seed ^ 0x5afe,
                ..Default::default()
            })
            .map_err(|e| CliError::Run(e.to_string()))?;
            let report = ensemble_tv(&spec, &start, &horizons, reps, &reference, seed)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let mut text = header(&[
                ("subcommand", "mixing".into()),
                ("model", model.model.display().to_string()),
                ("reps", reps.to_string()),
                ("seed", seed.to_string()),
                ("noise_floor", report.noise_floor.to_string()),
            ]);
            text.push_str(&csv::mixing(&report));
            match fit_mixing_rate(&report) {
                Ok(fit) => {
                    let _ = writeln!(
                        text,
                        "# fit: preferred = {:?}, poly_exponent = {}, geom_rate = {}",
                        fit.preferred, fit.poly_exponent, fit.geom_rate
                    );
                    emit(&out, &text)?;
                    Ok(Outcome::Success)
                }
                Err(SimError::InsufficientDecay(msg)) => {
                    let _ = writeln!(text, "# fit: insufficient decay ({msg})");
                    emit(&out, &text)?;
                    Ok(Outcome::CertifiedFailure(format!("insufficient decay: {msg}")))
                }
                Err(e) => Err(CliError::Run(e.to_string())),
            }
        }
        Cmd::Acf { model, n, burn_in, seed, max_lag, out } => {
            let (spec, run) = load(&model)?;
            let n = n.unwrap_or(run.n);
            let burn_in = burn_in.unwrap_or(run.burn_in);
            let seed = seed.unwrap_or(run.seed);
            let traj = simulate(&spec, n, burn_in, seed, &SimInit::Warmup)
                .map_err(|e| CliError::Run(e.to_string()))?;
            let values = acf(&traj.values, max_lag).map_err(|e| CliError::Run(e.to_string()))?;
            let mut text = header(&[
                ("subcommand", "acf".into()),
                ("model", model.model.display().to_string()),
                ("n", n.to_string()),
                ("burn_in", burn_in.to_string()),
                ("seed", seed.to_string()),
                ("max_lag", max_lag.to_string()),
            ]);
            text.push_str(&csv::acf(&values));
            emit(&out, &text)?;
            Ok(Outcome::Success)
        }
        Cmd::Companion { model, out } => {
            let (spec, _) = load(&model)?;
            let c = spec.companion();
            let mut text = header(&[
                ("subcommand", "companion".into()),
                ("model", model.model.display().to_string()),
                ("p", c.p.to_string()),
                ("eta", c.eta.to_string()),
                ("stable_radius", c.stable_radius().to_string()),
            ]);
            for (name, m) in [
                ("Phi", &c.phi_mat),
                ("A", &c.a_mat),
                ("Pi", &c.pi_mat),
                ("Pi1", &c.pi1),
                ("P", &c.p_norm),
            ] {
                let _ = writeln!(text, "matrix,{name}");
                text.push_str(&mat_csv(m));
            }
            emit(&out, &text)?;
            Ok(Outcome::Success)
        }
    }
}

fn mat_csv(m: &Mat) -> String {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| m.get(i, j).to_string()).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Tail exponent implied by the model's own nonlinear family.
fn model_rho(spec: &ModelSpec) -> Result<f64, CliError> {
    use subgeo::model::NonlinearTerm;
    match spec.nonlinear() {
        NonlinearTerm::LstarIntercept(_) => Ok(1.0),
        NonlinearTerm::EstarSlope { h, .. } | NonlinearTerm::GeneralEstar { h, .. } => Ok(h.rho()),
        NonlinearTerm::Zero => Ok(1.0),
        NonlinearTerm::Custom { rho, .. } => rho.ok_or_else(|| {
            CliError::Config("custom term has no declared rho; pass --rho".into())
        }),
    }
}
