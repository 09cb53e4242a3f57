//! Trajectory simulation, autocorrelations, and ensemble total-variation
//! diagnostics that confront a rate certificate with data.
//!
//! Total variation between continuous laws is not estimable without
//! smoothing; the estimator here is the L1 histogram half-distance on
//! shared quantile bins of the pooled sample, with a measured
//! stationary-start noise floor reported alongside. The marginal (first
//! coordinate) is compared rather than the joint p-dimensional law.

use crate::exec;
use crate::model::{ModelError, ModelSpec};
use crate::rng::Stream;

const DOMAIN_SIM: u64 = 0x51b;
const DOMAIN_TV: u64 = 0x7f0;
const DOMAIN_FLOOR: u64 = 0xf100;
const DOMAIN_REF: u64 = 0x2ef;

/// Default horizon schedule for mixing diagnostics.
pub const DEFAULT_HORIZONS: [usize; 9] = [1, 2, 5, 10, 20, 50, 100, 200, 500];

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("degenerate series: sample variance is zero")]
    DegenerateSeries,
    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),
    #[error("MC budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a simulated chain is initialized.
#[derive(Clone, Debug)]
pub enum SimInit {
    /// Start from the given state `(y_0, ..., y_{-p+1})`, most recent first.
    Explicit(Vec<f64>),
    /// Start from the origin and rely on the burn-in to forget it.
    Warmup,
}

/// A simulated path plus everything needed to reproduce it bit-exactly.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub values: Vec<f64>,
    /// Filtered process `u_t` alongside each emitted value.
    pub filtered: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub fingerprint: u64,
}

/// Simulate `n` observations after discarding `burn_in` steps.
pub fn simulate(
    model: &ModelSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
    init: &SimInit,
) -> Result<Trajectory, SimError> {
    if n == 0 {
        return Err(SimError::Invalid("n must be >= 1".into()));
    }
    let p = model.p();
    let mut hist = match init {
        SimInit::Explicit(x) => {
            if x.len() != p {
                return Err(SimError::Invalid(format!(
                    "initial state must have length p = {p}, got {}",
                    x.len()
                )));
            }
            x.clone()
        }
        SimInit::Warmup => vec![0.0; p],
    };
    let mut rng = Stream::new(seed, &[DOMAIN_SIM]);
    let mut values = Vec::with_capacity(n);
    let mut filtered = Vec::with_capacity(n);
    for t in 0..burn_in + n {
        let eps = model.noise().sample(&mut rng)?;
        let y = model.step(&hist, eps)?;
        hist.rotate_right(1);
        hist[0] = y;
        if t >= burn_in {
            values.push(y);
            filtered.push(model.filtered(&hist));
        }
    }
    Ok(Trajectory { values, filtered, seed, burn_in, fingerprint: model.fingerprint() })
}

/// Sample autocorrelations with the standard biased normalization;
/// `acf[0] = 1`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>, SimError> {
    if max_lag >= series.len() {
        return Err(SimError::Invalid("max_lag must be below the series length".into()));
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|y| (y - mean) * (y - mean)).sum();
    if denom == 0.0 {
        return Err(SimError::DegenerateSeries);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let num: f64 = (k..n).map(|t| (series[t] - mean) * (series[t - k] - mean)).sum();
        out.push(num / denom);
    }
    Ok(out)
}

/// Long-run sample standing in for the stationary law. States are kept in
/// full so stationary starts can be drawn; the marginal of the first
/// coordinate is what TV estimates compare against.
#[derive(Clone, Debug)]
pub struct Reference {
    pub states: Vec<Vec<f64>>,
    pub marginal: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ReferenceConfig {
    /// Post-burn-in chain length before thinning.
    pub length: usize,
    pub thin: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { length: 1_000_000, thin: 10, burn_in: 10_000, seed: 99 }
    }
}

/// One long chain, thinned. An approximation to the stationary law; for a
/// model without one (a random walk) this is just a fixed reference
/// window, which is exactly what the negative controls need.
pub fn stationary_reference(
    model: &ModelSpec,
    cfg: &ReferenceConfig,
) -> Result<Reference, SimError> {
    let p = model.p();
    let mut hist = vec![0.0; p];
    let mut rng = Stream::new(cfg.seed, &[DOMAIN_REF]);
    for _ in 0..cfg.burn_in {
        let eps = model.noise().sample(&mut rng)?;
        let y = model.step(&hist, eps)?;
        hist.rotate_right(1);
        hist[0] = y;
    }
    let kept = cfg.length / cfg.thin;
    let mut states = Vec::with_capacity(kept);
    let mut marginal = Vec::with_capacity(kept);
    for t in 0..cfg.length {
        let eps = model.noise().sample(&mut rng)?;
        let y = model.step(&hist, eps)?;
        hist.rotate_right(1);
        hist[0] = y;
        if t % cfg.thin == 0 {
            states.push(hist.clone());
            marginal.push(y);
        }
    }
    Ok(Reference { states, marginal })
}

/// Start state of every replication in an ensemble.
#[derive(Clone, Debug)]
pub enum StartState {
    Fixed(Vec<f64>),
    /// Drawn per replication from the reference states.
    Stationary,
}

/// Per-horizon TV estimates against the reference, with the measured
/// binning-noise floor.
#[derive(Clone, Debug)]
pub struct MixingReport {
    pub horizons: Vec<usize>,
    pub tv: Vec<f64>,
    pub ci: Vec<f64>,
    pub noise_floor: f64,
    pub reps: usize,
}

/// For each horizon, run `reps` independent chains from the start state
/// and estimate the TV distance between the ensemble marginal of the
/// first coordinate and the reference marginal: L1 histogram
/// half-distance on ceil(reps^(1/3)) quantile bins of the pooled sample.
pub fn ensemble_tv(
    model: &ModelSpec,
    start: &StartState,
    horizons: &[usize],
    reps: usize,
    reference: &Reference,
    seed: u64,
) -> Result<MixingReport, SimError> {
    if reps < 1_000 {
        return Err(SimError::Invalid("ensemble_tv requires reps >= 1000".into()));
    }
    if horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::Invalid("horizons must be strictly increasing".into()));
    }
    let total: usize = horizons.iter().sum::<usize>() * reps;
    if total > 2_000_000_000 {
        return Err(SimError::BudgetExceeded(format!("{total} chain steps requested")));
    }
    if let StartState::Fixed(x) = start {
        if x.len() != model.p() {
            return Err(SimError::Invalid("start state has wrong dimension".into()));
        }
    }
    let noise_floor = binning_noise_floor(&reference.marginal, reps, seed);
    let mut tv = Vec::with_capacity(horizons.len());
    let mut ci = Vec::with_capacity(horizons.len());
    for (hi, &h) in horizons.iter().enumerate() {
        let sample: Vec<Result<f64, ModelError>> = exec::map_indexed(reps, |r| {
            let mut rng = Stream::new(seed, &[DOMAIN_TV, hi as u64, r as u64]);
            let mut hist = match start {
                StartState::Fixed(x) => x.clone(),
                StartState::Stationary => {
                    reference.states[rng.index(reference.states.len())].clone()
                }
            };
            let mut y = hist[0];
            for _ in 0..h {
                let eps = model.noise().sample(&mut rng)?;
                y = model.step(&hist, eps)?;
                hist.rotate_right(1);
                hist[0] = y;
            }
            Ok(y)
        });
        let mut ys = Vec::with_capacity(reps);
        for v in sample {
            ys.push(v?);
        }
        let (d, hw) = binned_tv(&ys, &reference.marginal, bins_for(reps));
        tv.push(d);
        ci.push(hw);
    }
    Ok(MixingReport { horizons: horizons.to_vec(), tv, ci, noise_floor, reps })
}

fn bins_for(reps: usize) -> usize {
    (reps as f64).cbrt().ceil() as usize
}

/// TV floor from two same-size subsamples of the reference: what the
/// binned estimator reports when both sides have the same law.
fn binning_noise_floor(marginal: &[f64], reps: usize, seed: u64) -> f64 {
    let mut rng = Stream::new(seed, &[DOMAIN_FLOOR]);
    let m = marginal.len();
    let draw = |rng: &mut Stream, n: usize| -> Vec<f64> {
        (0..n).map(|_| marginal[rng.index(m)]).collect()
    };
    let (a, b) = if 2 * reps <= m {
        // disjoint halves via a partial shuffle
        let mut idx: Vec<usize> = (0..m).collect();
        for i in 0..2 * reps {
            let j = i + rng.index(m - i);
            idx.swap(i, j);
        }
        (
            idx[..reps].iter().map(|&i| marginal[i]).collect::<Vec<_>>(),
            idx[reps..2 * reps].iter().map(|&i| marginal[i]).collect::<Vec<_>>(),
        )
    } else {
        (draw(&mut rng, reps), draw(&mut rng, reps))
    };
    binned_tv(&a, &b, bins_for(reps)).0
}

/// L1 histogram half-distance on shared quantile bins of the pooled
/// sample, plus a delta-method 99% half-width.
fn binned_tv(a: &[f64], b: &[f64], bins: usize) -> (f64, f64) {
    let bins = bins.max(2);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut edges = Vec::with_capacity(bins - 1);
    for k in 1..bins {
        let q = k as f64 / bins as f64;
        let idx = ((pooled.len() as f64 * q) as usize).min(pooled.len() - 1);
        edges.push(pooled[idx]);
    }
    edges.dedup_by(|x, y| x == y);
    let nb = edges.len() + 1;
    let mut pa = vec![0.0f64; nb];
    let mut pb = vec![0.0f64; nb];
    let locate = |v: f64| edges.partition_point(|&e| e < v);
    for &v in a {
        pa[locate(v)] += 1.0;
    }
    for &v in b {
        pb[locate(v)] += 1.0;
    }
    let (na, nbm) = (a.len() as f64, b.len() as f64);
    pa.iter_mut().for_each(|x| *x /= na);
    pb.iter_mut().for_each(|x| *x /= nbm);
    let tv = 0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let var: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| x * (1.0 - x) / na + y * (1.0 - y) / nbm)
        .sum();
    let hw = 0.5 * 2.575_829_303_548_900_4 * var.sqrt();
    (tv.clamp(0.0, 1.0), hw)
}

/// Fitted decay of a TV curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitClass {
    Polynomial,
    Geometric,
}

#[derive(Clone, Debug)]
pub struct MixingFit {
    pub preferred: FitClass,
    /// Slope magnitude of log TV against log n.
    pub poly_exponent: f64,
    /// `e^slope` of log TV against n.
    pub geom_rate: f64,
    pub poly_residual: f64,
    pub geom_residual: f64,
}

/// Least-squares fits of the TV curve against both rate families,
/// preferring the smaller residual. Horizons at or below the noise floor
/// are dropped; a curve that never rises above the floor, has fewer than
/// four usable horizons, or does not actually decay reports
/// `InsufficientDecay`.
pub fn fit_mixing_rate(report: &MixingReport) -> Result<MixingFit, SimError> {
    let mut usable: Vec<(f64, f64)> = Vec::new();
    let mut last_above = None;
    for (i, (&n, &tv)) in report.horizons.iter().zip(&report.tv).enumerate() {
        if tv > report.noise_floor {
            usable.push((n as f64, tv));
            last_above = Some(i);
        }
    }
    if usable.len() < 4 {
        return Err(SimError::InsufficientDecay(format!(
            "only {} horizons above the noise floor {}",
            usable.len(),
            report.noise_floor
        )));
    }
    // A curve that falls to the floor before the schedule ends has decayed
    // decisively; the first floored horizon marks the cliff edge. A curve
    // that never approaches the floor and barely moves has not.
    let last_idx = last_above.unwrap();
    let tail_floored = *report.tv.last().unwrap() <= report.noise_floor;
    if tail_floored && last_idx + 1 < report.horizons.len() {
        usable.push((
            report.horizons[last_idx + 1] as f64,
            report.noise_floor.max(1e-12),
        ));
    } else {
        let first = usable.first().unwrap().1;
        let last = usable.last().unwrap().1;
        if last >= 0.8 * first {
            return Err(SimError::InsufficientDecay(format!(
                "TV fell by less than a fifth over the horizon span ({first} -> {last})"
            )));
        }
    }
    let logs: Vec<(f64, f64)> = usable.iter().map(|&(n, tv)| (n.ln(), tv.ln())).collect();
    let lins: Vec<(f64, f64)> = usable.iter().map(|&(n, tv)| (n, tv.ln())).collect();
    let (poly_slope, poly_residual) = fit_line(&logs);
    let (geom_slope, geom_residual) = fit_line(&lins);
    let preferred =
        if poly_residual <= geom_residual { FitClass::Polynomial } else { FitClass::Geometric };
    Ok(MixingFit {
        preferred,
        poly_exponent: -poly_slope,
        geom_rate: geom_slope.exp(),
        poly_residual,
        geom_residual,
    })
}

fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    (slope, resid)
}

/// CSV emitters with stable column layouts.
pub mod csv {
    use super::{MixingReport, Trajectory};
    use crate::model::ModelSpec;

    /// Columns `t, y, u, coef`: the coefficient path is `I(u_t)` for
    /// intercept models, `S(u_t)` for slope models, empty otherwise.
    pub fn trajectory(traj: &Trajectory, model: &ModelSpec) -> String {
        let mut out = String::from("t,y,u,coef\n");
        for (t, (y, u)) in traj.values.iter().zip(&traj.filtered).enumerate() {
            match model.nonlinear().coefficient_at(*u) {
                Some(c) => out.push_str(&format!("{},{y},{u},{c}\n", t + 1)),
                None => out.push_str(&format!("{},{y},{u},\n", t + 1)),
            }
        }
        out
    }

    /// Columns `lag, value`.
    pub fn acf(values: &[f64]) -> String {
        let mut out = String::from("lag,value\n");
        for (k, v) in values.iter().enumerate() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    /// Columns `horizon, tv, ci`.
    pub fn mixing(report: &MixingReport) -> String {
        let mut out = String::from("horizon,tv,ci\n");
        for i in 0..report.horizons.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                report.horizons[i], report.tv[i], report.ci[i]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseSpec, NonlinearTerm};
    use std::sync::Arc;

    fn random_walk() -> ModelSpec {
        ModelSpec::new(1, vec![], NonlinearTerm::Zero, NoiseSpec::gaussian(1.0).unwrap()).unwrap()
    }

    fn ar1(a: f64) -> ModelSpec {
        ModelSpec::new(
            1,
            vec![],
            NonlinearTerm::Custom {
                g_tilde: Arc::new(move |x: &[f64]| (a - 1.0) * x[0]),
                rho: None,
            },
            NoiseSpec::gaussian(1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn random_walk_is_cumulative_sum() {
        let model = random_walk();
        let traj = simulate(&model, 100, 0, 5, &SimInit::Explicit(vec![0.0])).unwrap();
        // same stream, summed by hand
        let mut rng = Stream::new(5, &[DOMAIN_SIM]);
        let mut acc = 0.0;
        for t in 0..100 {
            acc += model.noise().sample(&mut rng).unwrap();
            assert_eq!(traj.values[t].to_bits(), acc.to_bits());
        }
    }

    #[test]
    fn simulate_reproducible() {
        let model = ar1(0.9);
        let a = simulate(&model, 50, 10, 42, &SimInit::Warmup).unwrap();
        let b = simulate(&model, 50, 10, 42, &SimInit::Warmup).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.fingerprint, b.fingerprint);
        let c = simulate(&model, 50, 10, 43, &SimInit::Warmup).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn ar1_stationary_variance() {
        let traj = simulate(&ar1(0.9), 100_000, 1_000, 7, &SimInit::Warmup).unwrap();
        let n = traj.values.len() as f64;
        let mean = traj.values.iter().sum::<f64>() / n;
        let var = traj.values.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let expected = 1.0 / (1.0 - 0.81);
        assert!((var - expected).abs() < 0.05 * expected, "var {var} vs {expected}");
    }

    #[test]
    fn acf_white_noise_and_ar1() {
        let model = ModelSpec::new(
            1,
            vec![],
            NonlinearTerm::Custom { g_tilde: Arc::new(|x: &[f64]| -x[0]), rho: None },
            NoiseSpec::gaussian(1.0).unwrap(),
        )
        .unwrap();
        let iid = simulate(&model, 100_000, 100, 3, &SimInit::Warmup).unwrap();
        let rho = acf(&iid.values, 10).unwrap();
        assert_eq!(rho[0], 1.0);
        for (k, v) in rho.iter().enumerate().skip(1) {
            assert!(v.abs() <= 0.02, "lag {k}: {v}");
        }
        let tr = simulate(&ar1(0.9), 100_000, 1_000, 4, &SimInit::Warmup).unwrap();
        let r = acf(&tr.values, 2).unwrap();
        assert!((r[1] - 0.9).abs() < 0.02, "acf1 {}", r[1]);
        assert!((r[2] - 0.81).abs() < 0.03, "acf2 {}", r[2]);
    }

    #[test]
    fn acf_bounds_and_errors() {
        let series = vec![1.0; 10];
        assert!(matches!(acf(&series, 2), Err(SimError::DegenerateSeries)));
        assert!(matches!(acf(&[1.0, 2.0], 5), Err(SimError::Invalid(_))));
        let tr = simulate(&ar1(0.5), 5_000, 100, 9, &SimInit::Warmup).unwrap();
        for v in acf(&tr.values, 50).unwrap() {
            assert!(v.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn synthetic_fits_recover_their_model() {
        let horizons: Vec<usize> = DEFAULT_HORIZONS.to_vec();
        let poly = MixingReport {
            horizons: horizons.clone(),
            tv: horizons.iter().map(|&n| (n as f64).powf(-2.0)).collect(),
            ci: vec![0.0; horizons.len()],
            noise_floor: 0.0,
            reps: 10_000,
        };
        let fit = fit_mixing_rate(&poly).unwrap();
        assert_eq!(fit.preferred, FitClass::Polynomial);
        assert!((fit.poly_exponent - 2.0).abs() < 0.05);
        let geom = MixingReport {
            horizons: horizons.clone(),
            tv: horizons.iter().map(|&n| 0.9f64.powi(n as i32)).collect(),
            ci: vec![0.0; horizons.len()],
            noise_floor: 0.0,
            reps: 10_000,
        };
        let fit = fit_mixing_rate(&geom).unwrap();
        assert_eq!(fit.preferred, FitClass::Geometric);
        assert!((fit.geom_rate - 0.9).abs() < 0.01);
    }

    #[test]
    fn flat_curve_is_insufficient() {
        let horizons: Vec<usize> = DEFAULT_HORIZONS.to_vec();
        let flat = MixingReport {
            horizons: horizons.clone(),
            tv: vec![0.9; horizons.len()],
            ci: vec![0.0; horizons.len()],
            noise_floor: 0.03,
            reps: 10_000,
        };
        assert!(matches!(fit_mixing_rate(&flat), Err(SimError::InsufficientDecay(_))));
        let at_floor = MixingReport {
            horizons,
            tv: vec![0.02; 9],
            ci: vec![0.0; 9],
            noise_floor: 0.03,
            reps: 10_000,
        };
        assert!(matches!(fit_mixing_rate(&at_floor), Err(SimError::InsufficientDecay(_))));
    }

    #[test]
    fn ensemble_tv_validates_inputs() {
        let model = random_walk();
        let reference = Reference { states: vec![vec![0.0]], marginal: vec![0.0] };
        assert!(matches!(
            ensemble_tv(&model, &StartState::Fixed(vec![0.0]), &[1, 2], 10, &reference, 1),
            Err(SimError::Invalid(_))
        ));
        assert!(matches!(
            ensemble_tv(&model, &StartState::Fixed(vec![0.0]), &[2, 1], 2_000, &reference, 1),
            Err(SimError::Invalid(_))
        ));
        assert!(matches!(
            ensemble_tv(
                &model,
                &StartState::Fixed(vec![0.0]),
                &[2_000_000],
                2_000,
                &reference,
                1
            ),
            Err(SimError::BudgetExceeded(_))
        ));
    }
}
