//! Seeded Monte Carlo simulator of the observation model
//! `z = f(X * beta + e)` over restricted ensembles, with decoders whose
//! empirical error rates are compared against the Fano floors.
//!
//! The mutual-information bound marginalizes the design: given `beta`, each
//! observation is `N(0, ||beta||^2 + sigma^2)` in noisy mode and
//! `N(sum(beta)/(s sqrt 2), 1)` in noiseless mode. The canonical
//! verification decoder (`marginal_ml`) therefore sees only `z`, matching
//! that channel; `known_design` also sees `X` and is provided for
//! exploration outside the bound's literal channel.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::construction::{
    build_lb_graph, enumerate_construction_supports, ConstructionError, ConstructionSpec,
};
use crate::ensemble::{
    build_noiseless_ensemble, build_noisy_ensemble, format_float, EnsembleError, EnsembleMeta,
    Mode, RestrictedEnsemble,
};
use crate::info::{fano_error_lower_bound, mi_ceiling, InfoError};
use crate::rng::{self, tag};

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("marginal-ML decoding supports the identity link only")]
    UnsupportedLink,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Info(#[from] InfoError),
}

/// Observation link `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Sign,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Identity => write!(f, "identity"),
            Link::Sign => write!(f, "sign"),
        }
    }
}

impl FromStr for Link {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Link::Identity),
            "sign" => Ok(Link::Sign),
            other => Err(format!("unknown link {other:?} (expected identity|sign)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    MarginalMl,
    KnownDesign,
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecoderKind::MarginalMl => write!(f, "marginal_ml"),
            DecoderKind::KnownDesign => write!(f, "known_design"),
        }
    }
}

impl FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "marginal_ml" => Ok(DecoderKind::MarginalMl),
            "known_design" => Ok(DecoderKind::KnownDesign),
            other => Err(format!(
                "unknown decoder {other:?} (expected marginal_ml|known_design)"
            )),
        }
    }
}

/// Row-major `n x d` design matrix.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }
}

/// Draw the design matrix row by row: i.i.d. `N(0, 1)` entries in noisy
/// mode, i.i.d. `N(1/(s sqrt 2), 1/s)` in noiseless mode.
pub fn generate_design(n: usize, d: usize, mode: Mode, s: usize, rng: &mut impl Rng) -> Design {
    let (mean, sd) = match mode {
        Mode::Noisy => (0.0, 1.0),
        Mode::Noiseless => (1.0 / (s as f64 * SQRT_2), 1.0 / (s as f64).sqrt()),
    };
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let z: f64 = rng.sample(StandardNormal);
        data.push(mean + sd * z);
    }
    Design { n, d, data }
}

/// Apply the observation model: identity gives `X beta + e`, sign gives
/// `sign(X beta + e)` with `sign(0) = +1`.
pub fn observe(x: &Design, beta: &[f64], e: &[f64], link: Link) -> Result<Vec<f64>, SimError> {
    if beta.len() != x.d() {
        return Err(SimError::ShapeMismatch(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            x.d()
        )));
    }
    if e.len() != x.n() {
        return Err(SimError::ShapeMismatch(format!(
            "noise has length {}, design has {} rows",
            e.len(),
            x.n()
        )));
    }
    let mut z = Vec::with_capacity(x.n());
    for (i, &ei) in e.iter().enumerate() {
        let y: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + ei;
        z.push(match link {
            Link::Identity => y,
            Link::Sign => {
                if y >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        });
    }
    Ok(z)
}

enum ClassScore {
    /// Noisy marginal channel `N(0, v)`: score is `-(n ln v + ||z||^2/v)/2`.
    Variance(f64),
    /// Noiseless marginal channel `N(m, 1)`: score is `m sum(z) - n m^2/2`.
    Mean(f64),
}

/// `X`-free maximum-likelihood decoder for the marginal observation
/// channel. Scores collapse to the distinct channel classes; ties resolve
/// to the lowest member index.
pub struct MarginalMlDecoder {
    classes: Vec<(usize, ClassScore)>,
}

impl MarginalMlDecoder {
    pub fn new(ensemble: &RestrictedEnsemble, link: Link) -> Result<Self, SimError> {
        if link != Link::Identity {
            return Err(SimError::UnsupportedLink);
        }
        if ensemble.is_empty() {
            return Err(SimError::InvalidConfig("ensemble has no members".into()));
        }
        let classes = ensemble
            .channel_classes()
            .into_iter()
            .map(|c| {
                let score = match ensemble.meta() {
                    EnsembleMeta::Noisy { sigma, .. } => {
                        ClassScore::Variance(c.param + sigma * sigma)
                    }
                    EnsembleMeta::Noiseless => ClassScore::Mean(c.param),
                };
                (c.first_index, score)
            })
            .collect();
        Ok(Self { classes })
    }

    /// Member index maximizing the marginal likelihood of `z`.
    pub fn decode(&self, z: &[f64]) -> usize {
        let n = z.len() as f64;
        let ss: f64 = z.iter().map(|v| v * v).sum();
        let sum: f64 = z.iter().sum();
        let mut best_ix = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (first_index, score) in &self.classes {
            let value = match score {
                ClassScore::Variance(v) => -0.5 * (n * v.ln() + ss / v),
                ClassScore::Mean(m) => m * sum - n * m * m / 2.0,
            };
            if value > best_score {
                best_score = value;
                best_ix = *first_index;
            }
        }
        best_ix
    }
}

/// One-shot marginal-ML decode; builds the class table each call.
pub fn decode_marginal_ml(
    z: &[f64],
    ensemble: &RestrictedEnsemble,
    link: Link,
) -> Result<usize, SimError> {
    Ok(MarginalMlDecoder::new(ensemble, link)?.decode(z))
}

/// `log Phi(t)` with an asymptotic branch for deep negative arguments.
fn log_normal_cdf(t: f64) -> f64 {
    if t < -8.0 {
        let t2 = t * t;
        -0.5 * t2 - 0.5 * (2.0 * PI).ln() - (-t).ln() + (1.0 - 1.0 / t2 + 3.0 / (t2 * t2)).ln()
    } else {
        (0.5 * erfc(-t / SQRT_2)).ln()
    }
}

/// Exhaustive decoder that sees the design. Identity link: least-squares
/// residual `||z - X beta||`. Sign link: per-coordinate agreement
/// likelihood `sum log Phi(z_i (X beta)_i / sigma)`. Ties resolve to the
/// lowest member index.
pub fn decode_known_design(
    z: &[f64],
    x: &Design,
    ensemble: &RestrictedEnsemble,
    sigma: f64,
    link: Link,
) -> Result<usize, SimError> {
    if ensemble.is_empty() {
        return Err(SimError::InvalidConfig("ensemble has no members".into()));
    }
    if z.len() != x.n() {
        return Err(SimError::ShapeMismatch(format!(
            "z has length {}, design has {} rows",
            z.len(),
            x.n()
        )));
    }
    if ensemble.d() != x.d() {
        return Err(SimError::ShapeMismatch(format!(
            "ensemble dimension {} vs design columns {}",
            ensemble.d(),
            x.d()
        )));
    }
    if link == Link::Sign && (!sigma.is_finite() || sigma <= 0.0) {
        return Err(SimError::InvalidConfig(format!(
            "sign-link decoding needs sigma > 0, got {sigma}"
        )));
    }
    let n = x.n();
    let mut best_ix = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    let mut xbeta = vec![0.0f64; n];
    for ix in 0..ensemble.len() {
        let member = ensemble.member(ix);
        let support = ensemble.support_of(ix);
        for (i, slot) in xbeta.iter_mut().enumerate() {
            let row = x.row(i);
            *slot = support
                .indices()
                .iter()
                .map(|&j| row[j] * member[j])
                .sum::<f64>();
        }
        let score = match link {
            Link::Identity => -z
                .iter()
                .zip(&xbeta)
                .map(|(zi, yi)| (zi - yi) * (zi - yi))
                .sum::<f64>(),
            Link::Sign => z
                .iter()
                .zip(&xbeta)
                .map(|(zi, yi)| log_normal_cdf(zi * yi / sigma))
                .sum::<f64>(),
        };
        if score > best_score {
            best_score = score;
            best_ix = ix;
        }
    }
    Ok(best_ix)
}

/// Full experiment description; serializes into every JSON summary.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub spec: ConstructionSpec,
    pub mode: Mode,
    pub link: Link,
    pub c0: f64,
    pub sigma: f64,
    pub epsilon: f64,
    /// Event threshold constant, `0 < C <= C0`.
    pub c: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub decoder: DecoderKind,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.trials == 0 {
            return Err(SimError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(SimError::InvalidConfig("n_grid must not be empty".into()));
        }
        if self.n_grid.contains(&0) {
            return Err(SimError::InvalidConfig(
                "n_grid entries must be positive".into(),
            ));
        }
        if !self.c.is_finite() || self.c <= 0.0 || self.c > self.c0 {
            return Err(SimError::InvalidConfig(format!(
                "need 0 < C <= C0, got C = {}, C0 = {}",
                self.c, self.c0
            )));
        }
        if self.mode == Mode::Noisy {
            if !self.sigma.is_finite() || self.sigma <= 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "noisy mode needs sigma > 0, got {}",
                    self.sigma
                )));
            }
            if !self.epsilon.is_finite() || self.epsilon <= 0.0 || self.epsilon >= 1.0 {
                return Err(SimError::InvalidConfig(format!(
                    "noisy mode needs epsilon in (0, 1), got {}",
                    self.epsilon
                )));
            }
            if !self.c0.is_finite() || self.c0 <= 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "noisy mode needs C0 > 0, got {}",
                    self.c0
                )));
            }
        }
        if self.decoder == DecoderKind::MarginalMl && self.link != Link::Identity {
            return Err(SimError::UnsupportedLink);
        }
        Ok(())
    }

    /// Non-fatal conditions worth surfacing: the floors assume `n < d`.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &n in &self.n_grid {
            if n >= self.spec.d() {
                out.push(format!(
                    "n = {n} is not below d = {}; the separation analysis assumes n < d",
                    self.spec.d()
                ));
            }
        }
        out
    }
}

/// Per-`n` empirical rates with margins and the matching floors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub trials: usize,
    pub err_count: u64,
    pub err_rate: f64,
    pub err_margin: f64,
    pub event_count: u64,
    pub event_rate: f64,
    pub event_margin: f64,
    pub fano_floor: f64,
    pub theorem3_floor: f64,
}

/// Experiment output: rows per sample count plus the config echo.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub library_version: String,
    pub config: ExperimentConfig,
    pub member_count: usize,
    pub log_ensemble_size: f64,
    /// Per-sample MI ceiling used in the floors (5 noisy, 1 noiseless).
    pub mi_per_sample: f64,
    pub rows: Vec<SummaryRow>,
}

impl ExperimentSummary {
    /// Deterministic CSV: header plus one row per grid point, floats at 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,trials,err_count,err_rate,err_margin,event_count,event_rate,event_margin,fano_floor,theorem3_floor\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                r.trials,
                r.err_count,
                format_float(r.err_rate),
                format_float(r.err_margin),
                r.event_count,
                format_float(r.event_rate),
                format_float(r.event_margin),
                format_float(r.fano_floor),
                format_float(r.theorem3_floor),
            ));
        }
        out
    }
}

/// Three binomial standard errors, floored at `3/trials`.
pub(crate) fn margin3(count: u64, trials: usize) -> f64 {
    let t = trials as f64;
    let p = count as f64 / t;
    3.0 * (p * (1.0 - p) / t).sqrt().max(1.0 / t)
}

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Build the canonical ensemble for the config and run the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, SimError> {
    config.validate()?;
    let graph = build_lb_graph(&config.spec);
    let supports = enumerate_construction_supports(&graph, &config.spec)?;
    let ensemble = match config.mode {
        Mode::Noisy => build_noisy_ensemble(
            &supports,
            config.c0,
            config.sigma,
            config.epsilon,
            config.spec.d(),
        )?,
        Mode::Noiseless => build_noiseless_ensemble(&supports, config.spec.d())?,
    };
    run_experiment_with_ensemble(config, &ensemble)
}

/// Run the experiment over a prebuilt (possibly deserialized) ensemble.
///
/// Each trial draws, in order: the true member index, the design row by
/// row, then the noise vector. The per-trial stream is keyed by
/// `(master_seed, n, trial)`, so results are identical for any worker
/// count.
pub fn run_experiment_with_ensemble(
    config: &ExperimentConfig,
    ensemble: &RestrictedEnsemble,
) -> Result<ExperimentSummary, SimError> {
    config.validate()?;
    if ensemble.mode() != config.mode {
        return Err(SimError::InvalidConfig(format!(
            "config mode {} but ensemble mode {}",
            config.mode,
            ensemble.mode()
        )));
    }
    if ensemble.d() != config.spec.d() {
        return Err(SimError::InvalidConfig(format!(
            "config d = {} but ensemble d = {}",
            config.spec.d(),
            ensemble.d()
        )));
    }
    if let EnsembleMeta::Noisy { c0, sigma, epsilon } = ensemble.meta() {
        if c0 != config.c0 || sigma != config.sigma || epsilon != config.epsilon {
            return Err(SimError::InvalidConfig(format!(
                "ensemble meta (C0={c0}, sigma={sigma}, epsilon={epsilon}) disagrees with config \
                 (C0={}, sigma={}, epsilon={})",
                config.c0, config.sigma, config.epsilon
            )));
        }
    }
    if ensemble.is_empty() {
        return Err(SimError::InvalidConfig("ensemble has no members".into()));
    }

    let marginal = match config.decoder {
        DecoderKind::MarginalMl => Some(MarginalMlDecoder::new(ensemble, config.link)?),
        DecoderKind::KnownDesign => None,
    };
    let decode_sigma = match config.mode {
        Mode::Noisy => config.sigma,
        Mode::Noiseless => 1.0,
    };

    let member_count = ensemble.len();
    let log_ensemble_size = (member_count as f64).ln();
    let mi_per_sample = mi_ceiling(config.mode);
    let mode = config.mode;
    let s = ensemble.s();
    let d = ensemble.d();

    let mut rows = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let outcomes: Result<Vec<(bool, bool)>, SimError> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let mut r = rng::stream(
                    config.master_seed,
                    &[tag::SIM_TRIAL, n as u64, trial as u64],
                );
                let true_ix = ensemble
                    .sample_index(&mut r)
                    .expect("ensemble verified nonempty");
                let x = generate_design(n, d, mode, s, &mut r);
                let e: Vec<f64> = match mode {
                    Mode::Noisy => (0..n)
                        .map(|_| {
                            let z: f64 = r.sample(StandardNormal);
                            config.sigma * z
                        })
                        .collect(),
                    Mode::Noiseless => vec![0.0; n],
                };
                let beta = ensemble.member(true_ix);
                let z = observe(&x, beta, &e, config.link)?;
                let decoded = match &marginal {
                    Some(dec) => dec.decode(&z),
                    None => decode_known_design(&z, &x, ensemble, decode_sigma, config.link)?,
                };
                let err = decoded != true_ix;
                let event = match mode {
                    Mode::Noisy => {
                        let dist = euclidean_distance(beta, ensemble.member(decoded));
                        let e_norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let event = dist >= config.c * e_norm;
                        // Whenever the noise is below the separation scale,
                        // the distance event can only fire on a decoding
                        // error.
                        debug_assert!(
                            !(event
                                && e_norm > 0.0
                                && e_norm * e_norm
                                    <= config.sigma * config.sigma * n as f64
                                        / (1.0 - config.epsilon))
                                || err
                        );
                        event
                    }
                    Mode::Noiseless => err,
                };
                Ok((err, event))
            })
            .collect();
        let outcomes = outcomes?;
        let err_count = outcomes.iter().filter(|o| o.0).count() as u64;
        let event_count = outcomes.iter().filter(|o| o.1).count() as u64;
        rows.push(SummaryRow {
            n,
            trials: config.trials,
            err_count,
            err_rate: err_count as f64 / config.trials as f64,
            err_margin: margin3(err_count, config.trials),
            event_count,
            event_rate: event_count as f64 / config.trials as f64,
            event_margin: margin3(event_count, config.trials),
            fano_floor: fano_error_lower_bound(mi_per_sample, n, log_ensemble_size)?,
            theorem3_floor: 0.1,
        });
    }

    Ok(ExperimentSummary {
        library_version: crate::VERSION.to_string(),
        config: config.clone(),
        member_count,
        log_ensemble_size,
        mi_per_sample,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::ConstructionSpec;
    use crate::graph::Support;

    fn small_spec() -> ConstructionSpec {
        ConstructionSpec::new(6, 4, 2, 2, 2).unwrap()
    }

    fn small_noisy_config() -> ExperimentConfig {
        ExperimentConfig {
            spec: small_spec(),
            mode: Mode::Noisy,
            link: Link::Identity,
            c0: 1.0,
            sigma: 1.0,
            epsilon: 0.95,
            c: 1.0,
            n_grid: vec![1, 2],
            trials: 50,
            master_seed: 1234,
            decoder: DecoderKind::MarginalMl,
        }
    }

    #[test]
    fn observe_zero_signal_zero_noise() {
        let mut r = rng::stream(0, &[tag::SIM_TRIAL, 0, 0]);
        let x = generate_design(4, 3, Mode::Noisy, 3, &mut r);
        let beta = vec![0.0; 3];
        let e = vec![0.0; 4];
        assert_eq!(observe(&x, &beta, &e, Link::Identity).unwrap(), vec![0.0; 4]);
        // sign(0) = +1 by convention.
        assert_eq!(observe(&x, &beta, &e, Link::Sign).unwrap(), vec![1.0; 4]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn observe_matches_triple_loop_oracle() {
        let mut r = rng::stream(5, &[tag::SIM_TRIAL, 1, 0]);
        let x = generate_design(6, 4, Mode::Noisy, 4, &mut r);
        let beta: Vec<f64> = (0..4).map(|i| (i as f64) - 1.5).collect();
        let e: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let z = observe(&x, &beta, &e, Link::Identity).unwrap();
        for i in 0..6 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += x.entry(i, j) * beta[j];
            }
            acc += e[i];
            assert!((z[i] - acc).abs() < 1e-12);
        }
        let signs = observe(&x, &beta, &e, Link::Sign).unwrap();
        assert!(signs.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn observe_rejects_shape_mismatch() {
        let mut r = rng::stream(0, &[0]);
        let x = generate_design(2, 3, Mode::Noisy, 3, &mut r);
        assert!(observe(&x, &[0.0; 2], &[0.0; 2], Link::Identity).is_err());
        assert!(observe(&x, &[0.0; 3], &[0.0; 3], Link::Identity).is_err());
    }

    #[test]
    fn design_is_reproducible() {
        let mut a = rng::stream(9, &[tag::SIM_TRIAL, 2, 7]);
        let mut b = rng::stream(9, &[tag::SIM_TRIAL, 2, 7]);
        let xa = generate_design(3, 5, Mode::Noiseless, 8, &mut a);
        let xb = generate_design(3, 5, Mode::Noiseless, 8, &mut b);
        assert_eq!(xa.data, xb.data);
    }

    #[test]
    fn marginal_decoder_requires_identity_link() {
        let supports = vec![Support::new(vec![0]).unwrap()];
        let ens = crate::ensemble::build_noisy_ensemble(&supports, 1.0, 1.0, 0.5, 2).unwrap();
        assert!(matches!(
            MarginalMlDecoder::new(&ens, Link::Sign),
            Err(SimError::UnsupportedLink)
        ));
    }

    #[test]
    fn no_observations_decode_to_member_zero() {
        let supports = vec![Support::new(vec![0, 1]).unwrap()];
        let ens = crate::ensemble::build_noisy_ensemble(&supports, 1.0, 1.0, 0.5, 3).unwrap();
        let dec = MarginalMlDecoder::new(&ens, Link::Identity).unwrap();
        assert_eq!(dec.decode(&[]), 0);
    }

    #[test]
    fn marginal_decoder_returns_only_class_representatives() {
        let spec = small_spec();
        let graph = crate::construction::build_lb_graph(&spec);
        let supports = crate::construction::enumerate_construction_supports(&graph, &spec).unwrap();
        let ens =
            crate::ensemble::build_noisy_ensemble(&supports, 1.0, 1.0, 0.95, spec.d()).unwrap();
        let reps: std::collections::HashSet<usize> = ens
            .channel_classes()
            .iter()
            .map(|c| c.first_index)
            .collect();
        let dec = MarginalMlDecoder::new(&ens, Link::Identity).unwrap();
        for seed in 0..64u64 {
            let mut r = rng::stream(seed, &[tag::SIM_TRIAL, 3, seed]);
            let x = generate_design(3, spec.d(), Mode::Noisy, spec.s(), &mut r);
            let ix = ens.sample_index(&mut r).unwrap();
            let e: Vec<f64> = (0..3).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let z = observe(&x, ens.member(ix), &e, Link::Identity).unwrap();
            let decoded = dec.decode(&z);
            // Members beyond a class representative are never returned, so
            // same-norm members are indistinguishable by construction.
            assert!(reps.contains(&decoded));
        }
    }

    #[test]
    fn well_separated_norm_class_is_selected_reliably() {
        // Hand-built two-valued ensemble with entry values sqrt(0.5) and
        // sqrt(5000): squared-norm classes 1, 5000.5, 10000. Observations
        // drawn at ||beta||^2 = 10000 should land in that class nearly
        // always.
        let a = format_float(0.5f64.sqrt());
        let b = format_float(5000f64.sqrt());
        let text = format!(
            "mode noisy\nd 3\ns 2\ng 1\nB 1\nrho 2\nC0 1\nsigma 1\nepsilon 0.5\nmembers 4\n\
             0 1 {a} {a}\n0 1 {b} {a}\n0 1 {a} {b}\n0 1 {b} {b}\n"
        );
        let (ens, _) = RestrictedEnsemble::from_text(&text).unwrap();
        let dec = MarginalMlDecoder::new(&ens, Link::Identity).unwrap();
        let true_ix = 3;
        let n = 100;
        let trials = 200u64;
        let mut hits = 0;
        for trial in 0..trials {
            let mut r = rng::stream(777, &[tag::SIM_TRIAL, n as u64, trial]);
            let x = generate_design(n, 3, Mode::Noisy, 2, &mut r);
            let e: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let z = observe(&x, ens.member(true_ix), &e, Link::Identity).unwrap();
            if dec.decode(&z) == true_ix {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 > 0.99, "hit rate {hits}/{trials}");
    }

    #[test]
    fn known_design_zero_residual_returns_exact_member() {
        let spec = small_spec();
        let graph = crate::construction::build_lb_graph(&spec);
        let supports = crate::construction::enumerate_construction_supports(&graph, &spec).unwrap();
        let ens = crate::ensemble::build_noiseless_ensemble(&supports, spec.d()).unwrap();
        let mut r = rng::stream(3, &[tag::SIM_TRIAL, 0, 0]);
        let x = generate_design(4, spec.d(), Mode::Noiseless, spec.s(), &mut r);
        for ix in [0usize, 17, 80, ens.len() - 1] {
            let z = observe(&x, ens.member(ix), &[0.0; 4], Link::Identity).unwrap();
            assert_eq!(
                decode_known_design(&z, &x, &ens, 1.0, Link::Identity).unwrap(),
                ix
            );
        }
    }

    #[test]
    fn known_design_recovers_exactly_when_n_exceeds_d() {
        let spec = small_spec();
        let graph = crate::construction::build_lb_graph(&spec);
        let supports = crate::construction::enumerate_construction_supports(&graph, &spec).unwrap();
        let ens = crate::ensemble::build_noiseless_ensemble(&supports, spec.d()).unwrap();
        let n = spec.d() + 5;
        for trial in 0..20u64 {
            let mut r = rng::stream(11, &[tag::SIM_TRIAL, n as u64, trial]);
            let ix = ens.sample_index(&mut r).unwrap();
            let x = generate_design(n, spec.d(), Mode::Noiseless, spec.s(), &mut r);
            let z = observe(&x, ens.member(ix), &vec![0.0; n], Link::Identity).unwrap();
            assert_eq!(
                decode_known_design(&z, &x, &ens, 1.0, Link::Identity).unwrap(),
                ix
            );
        }
    }

    #[test]
    fn config_validation_gates() {
        let mut cfg = small_noisy_config();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_noisy_config();
        cfg.c = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_noisy_config();
        cfg.n_grid = vec![];
        assert!(cfg.validate().is_err());
        let mut cfg = small_noisy_config();
        cfg.n_grid = vec![0];
        assert!(cfg.validate().is_err());
        let mut cfg = small_noisy_config();
        cfg.link = Link::Sign;
        assert!(matches!(cfg.validate(), Err(SimError::UnsupportedLink)));
        let mut cfg = small_noisy_config();
        cfg.sigma = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn warns_when_n_reaches_d() {
        let mut cfg = small_noisy_config();
        cfg.n_grid = vec![1, 6, 9];
        let warnings = cfg.warnings();
        assert_eq!(warnings.len(), 2);
        assert!(warnings[0].contains("n = 6"));
    }

    #[test]
    fn summary_is_reproducible_and_consistent() {
        let cfg = small_noisy_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.member_count, 144);
        for row in &a.rows {
            assert_eq!(row.err_count as usize + (row.trials - row.err_count as usize), 50);
            assert!(row.err_rate >= 0.0 && row.err_rate <= 1.0);
            assert!(row.event_rate >= 0.0 && row.event_rate <= 1.0);
            assert!(row.fano_floor >= 0.0 && row.fano_floor < 1.0);
            assert_eq!(row.theorem3_floor, 0.1);
        }
    }

    #[test]
    fn noiseless_event_column_mirrors_error() {
        let mut cfg = small_noisy_config();
        cfg.mode = Mode::Noiseless;
        let summary = run_experiment(&cfg).unwrap();
        for row in &summary.rows {
            assert_eq!(row.err_count, row.event_count);
        }
    }

    #[test]
    fn mismatched_ensemble_is_rejected() {
        let cfg = small_noisy_config();
        let spec = cfg.spec;
        let graph = crate::construction::build_lb_graph(&spec);
        let supports = crate::construction::enumerate_construction_supports(&graph, &spec).unwrap();
        let noiseless = crate::ensemble::build_noiseless_ensemble(&supports, spec.d()).unwrap();
        assert!(run_experiment_with_ensemble(&cfg, &noiseless).is_err());
        let other_sigma =
            crate::ensemble::build_noisy_ensemble(&supports, 1.0, 2.0, 0.95, spec.d()).unwrap();
        assert!(run_experiment_with_ensemble(&cfg, &other_sigma).is_err());
    }
}
