//! Flat `key = value` run configuration with flag overrides.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default. `#` starts a comment; blank lines are skipped.

use std::str::FromStr;

use wgm_lb::construction::ConstructionSpec;
use wgm_lb::ensemble::Mode;
use wgm_lb::sim::{DecoderKind, ExperimentConfig, Link};

/// Every simulate/construct parameter in one bag, before validation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub d: usize,
    pub s: usize,
    pub g: usize,
    pub budget: u64,
    pub rho: usize,
    pub mode: Mode,
    pub link: Link,
    pub c0: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub c: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    /// Resolved at build time: sign-link runs default to the
    /// design-aware decoder.
    pub decoder: Option<DecoderKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d: 15,
            s: 10,
            g: 5,
            budget: 5,
            rho: 2,
            mode: Mode::Noisy,
            link: Link::Identity,
            c0: 1.0,
            sigma: 1.0,
            epsilon: 0.95,
            c: 1.0,
            n_grid: vec![1, 2, 3],
            trials: 2000,
            master_seed: 20250810,
            decoder: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("config key {key:?}: cannot parse {value:?} ({e})"))
}

fn parse_grid(value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| format!("config key \"n_grid\": bad entry {t:?}"))
        })
        .collect()
}

impl RunConfig {
    /// Apply a config file's contents on top of the current values.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (ix, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(format!("line {}: expected `key = value`, got {line:?}", ix + 1))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "d" => self.d = parse_value(key, value)?,
                "s" => self.s = parse_value(key, value)?,
                "g" => self.g = parse_value(key, value)?,
                "B" => self.budget = parse_value(key, value)?,
                "rho" => self.rho = parse_value(key, value)?,
                "mode" => self.mode = parse_value(key, value)?,
                "link" => self.link = parse_value(key, value)?,
                "C0" => self.c0 = parse_value(key, value)?,
                "sigma" => self.sigma = parse_value(key, value)?,
                "epsilon" => self.epsilon = parse_value(key, value)?,
                "C" => self.c = parse_value(key, value)?,
                "n_grid" => self.n_grid = parse_grid(value)?,
                "trials" => self.trials = parse_value(key, value)?,
                "master_seed" => self.master_seed = parse_value(key, value)?,
                "decoder" => self.decoder = Some(parse_value(key, value)?),
                other => return Err(format!("line {}: unknown config key {other:?}", ix + 1)),
            }
        }
        Ok(())
    }

    pub fn resolved_decoder(&self) -> DecoderKind {
        self.decoder.unwrap_or(match self.link {
            Link::Identity => DecoderKind::MarginalMl,
            Link::Sign => DecoderKind::KnownDesign,
        })
    }

    pub fn to_experiment_config(&self) -> Result<ExperimentConfig, String> {
        let spec = ConstructionSpec::new(self.d, self.s, self.g, self.budget, self.rho)
            .map_err(|e| e.to_string())?;
        Ok(ExperimentConfig {
            spec,
            mode: self.mode,
            link: self.link,
            c0: self.c0,
            sigma: self.sigma,
            epsilon: self.epsilon,
            c: self.c,
            n_grid: self.n_grid.clone(),
            trials: self.trials,
            master_seed: self.master_seed,
            decoder: self.resolved_decoder(),
        })
    }
}
