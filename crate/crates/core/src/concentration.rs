//! Numerical verification of the concentration facts the error floors rest
//! on: the minimum pairwise distance of the noisy ensemble, the chi-square
//! tail bound for the noise norm, and the scalar inequalities used to prove
//! them.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ensemble::{separation_radius, EnsembleMeta, RestrictedEnsemble};
use crate::rng::{self, tag};

#[derive(Debug, Error)]
pub enum ConcentrationError {
    #[error("minimum-distance check applies to noisy ensembles only")]
    NoiselessUnsupported,
    #[error("need at least two members, got {0}")]
    TooFewMembers(usize),
    #[error("need at least {min} trials for a stable tail estimate, got {got}")]
    TooFewTrials { got: usize, min: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(
        "ensemble deviates from its two-value form and is too large for an \
         exhaustive scan: {members} members (cap {cap})"
    )]
    TooLargeForExhaustive { members: usize, cap: usize },
}

/// Smallest number of Monte Carlo trials accepted by the tail check.
pub const MIN_TAIL_TRIALS: usize = 10_000;

/// Largest ensemble the non-canonical exhaustive pair scan will attempt.
pub const EXHAUSTIVE_PAIR_CAP: usize = 8_192;

/// Outcome of the minimum pairwise distance scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistanceReport {
    pub min_dist: f64,
    /// Separation radius `C0*sigma*sqrt(d)/sqrt(1-eps)`.
    pub radius: f64,
    /// True when no distinct pair falls below the radius.
    pub holds: bool,
    /// True when the slow all-pairs scan ran instead of the structured one.
    pub exhaustive: bool,
}

fn support_words(support: &crate::graph::Support, d: usize) -> Vec<u64> {
    let mut words = vec![0u64; d.div_ceil(64)];
    for &ix in support.indices() {
        words[ix / 64] |= 1 << (ix % 64);
    }
    words
}

/// Minimum Euclidean distance over distinct member pairs, against the
/// ensemble's separation radius.
///
/// Intact two-valued ensembles get a structured scan: within one support the
/// distance is `(v_hi - v_lo) * sqrt(hamming)` over value patterns, and
/// across supports the per-coordinate minimum is met by matching the overlap
/// and placing `v_lo` on every symmetric-difference coordinate, which gives
/// `v_lo * sqrt(|symdiff|)`. Anything that deviates from the two-value form
/// (e.g. an edited serialization) falls back to the exhaustive pair scan.
pub fn min_pairwise_distance(
    ensemble: &RestrictedEnsemble,
) -> Result<DistanceReport, ConcentrationError> {
    let EnsembleMeta::Noisy { c0, sigma, epsilon } = ensemble.meta() else {
        return Err(ConcentrationError::NoiselessUnsupported);
    };
    let m = ensemble.len();
    if m < 2 {
        return Err(ConcentrationError::TooFewMembers(m));
    }
    let d = ensemble.d();
    let s = ensemble.s();
    let radius = separation_radius(c0, sigma, epsilon, d);
    let lo = crate::ensemble::noisy_low_value(c0, sigma, epsilon, d);
    let hi = crate::ensemble::noisy_high_value(c0, sigma, epsilon, d);

    // Per-member value patterns, if every member is exactly two-valued.
    let mut patterns: Option<Vec<u64>> = Some(Vec::with_capacity(m));
    'members: for (ix, member) in ensemble.members().enumerate() {
        let support = ensemble.support_of(ix);
        let mut pattern = 0u64;
        for (bit, &coord) in support.indices().iter().enumerate() {
            let v = member[coord];
            if v == hi {
                pattern |= 1 << bit;
            } else if v != lo {
                patterns = None;
                break 'members;
            }
        }
        if let Some(p) = patterns.as_mut() {
            p.push(pattern);
        }
    }

    // Structured scan also needs every pattern present in every block.
    let complete = patterns.as_ref().is_some_and(|p| {
        p.chunks_exact(1 << s).all(|block| {
            let mut seen = vec![false; 1 << s];
            for &pat in block {
                seen[pat as usize] = true;
            }
            seen.iter().all(|&b| b)
        })
    });

    let min_dist = if complete && s <= 13 {
        let delta = hi - lo;
        // Same support: all 2^s patterns exist, scan pattern pairs once.
        let mut min_ham = u32::MAX;
        let total = 1u64 << s;
        for p in 0..total {
            for q in (p + 1)..total {
                min_ham = min_ham.min((p ^ q).count_ones());
            }
        }
        let mut best = delta * (min_ham as f64).sqrt();
        // Across supports: v_lo on every symmetric-difference coordinate.
        let words: Vec<Vec<u64>> = ensemble
            .supports()
            .iter()
            .map(|sup| support_words(sup, d))
            .collect();
        let mut min_symdiff = usize::MAX;
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                let diff: u32 = words[i]
                    .iter()
                    .zip(&words[j])
                    .map(|(a, b)| (a ^ b).count_ones())
                    .sum();
                min_symdiff = min_symdiff.min(diff as usize);
            }
        }
        if min_symdiff != usize::MAX {
            best = best.min(lo * (min_symdiff as f64).sqrt());
        }
        best
    } else {
        if m > EXHAUSTIVE_PAIR_CAP {
            return Err(ConcentrationError::TooLargeForExhaustive {
                members: m,
                cap: EXHAUSTIVE_PAIR_CAP,
            });
        }
        let members: Vec<&[f64]> = ensemble.members().collect();
        let mut best = f64::INFINITY;
        for i in 0..m {
            for j in (i + 1)..m {
                let dist2: f64 = members[i]
                    .iter()
                    .zip(members[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                best = best.min(dist2);
            }
        }
        best.sqrt()
    };

    Ok(DistanceReport {
        min_dist,
        radius,
        holds: min_dist >= radius * (1.0 - 1e-12),
        exhaustive: !(complete && s <= 13),
    })
}

/// Empirical check of the noise-norm tail bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailCheckResult {
    /// Frequency of `||e||^2 <= sigma^2 n / (1 - eps)`.
    pub empirical_prob: f64,
    /// `1 - exp(-eps^2 n / 4)`.
    pub bound: f64,
    pub trials: usize,
    /// Three binomial standard errors (floored at 3/trials).
    pub margin: f64,
    pub holds: bool,
}

/// Seeded Monte Carlo estimate of `P(||e||^2 <= sigma^2 n/(1-eps))` with
/// `e_i` i.i.d. `N(0, sigma^2)`, compared against the tail bound. The draw
/// is `e = sigma * z`, so the indicator and therefore the counts are
/// identical for every `sigma` at a fixed seed.
pub fn chi_square_tail_check(
    n: usize,
    epsilon: f64,
    sigma: f64,
    trials: usize,
    master_seed: u64,
) -> Result<TailCheckResult, ConcentrationError> {
    if n == 0 {
        return Err(ConcentrationError::BadParameter("n must be >= 1".into()));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(ConcentrationError::BadParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(ConcentrationError::BadParameter(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    if trials < MIN_TAIL_TRIALS {
        return Err(ConcentrationError::TooFewTrials {
            got: trials,
            min: MIN_TAIL_TRIALS,
        });
    }
    // Threshold for z = e / sigma.
    let threshold = n as f64 / (1.0 - epsilon);
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::stream(master_seed, &[tag::CHI_TAIL, n as u64, trial as u64]);
            let norm2: f64 = (0..n)
                .map(|_| {
                    let z: f64 = r.sample(StandardNormal);
                    z * z
                })
                .sum();
            u64::from(norm2 <= threshold)
        })
        .sum();
    let p_hat = hits as f64 / trials as f64;
    let bound = corollary_bound(n, epsilon);
    let se = (p_hat * (1.0 - p_hat) / trials as f64)
        .sqrt()
        .max(1.0 / trials as f64);
    let margin = 3.0 * se;
    Ok(TailCheckResult {
        empirical_prob: p_hat,
        bound,
        trials,
        margin,
        holds: p_hat >= bound - margin,
    })
}

/// `1 - exp(-eps^2 n / 4)`: the tail-bound level, and the conditional floor
/// for `||beta - beta_hat|| >= C ||e||` given a decoding error (valid when
/// `d > n` and `C <= C0`). Callers keep `0 < eps < 1` and `n >= 1`.
pub fn corollary_bound(n: usize, epsilon: f64) -> f64 {
    1.0 - (-epsilon * epsilon * n as f64 / 4.0).exp()
}

/// Grid verification of one scalar inequality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridCheck {
    pub name: &'static str,
    pub points: usize,
    pub failures: usize,
    /// Smallest `lhs - rhs` margin seen and where it occurred.
    pub worst_margin: f64,
    pub worst_point: f64,
}

impl GridCheck {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

/// Monte Carlo check of `E[exp(lambda chi2_n / 2)] = (1 - lambda)^(-n/2)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MgfCheck {
    pub n: usize,
    pub lambda: f64,
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarScanReport {
    /// `eps/(1-eps) + log(1-eps) >= eps^2/2` on (0, 1).
    pub epsilon_tail: GridCheck,
    /// `1 - 1/x <= log x` on (0, 100].
    pub log_lower: GridCheck,
    pub mgf: Vec<MgfCheck>,
}

impl ScalarScanReport {
    pub fn all_pass(&self) -> bool {
        self.epsilon_tail.pass() && self.log_lower.pass() && self.mgf.iter().all(|c| c.pass)
    }
}

const SCAN_GRID_POINTS: usize = 10_000;
const MGF_DRAWS: usize = 1_000_000;

fn grid_check(
    name: &'static str,
    points: impl Iterator<Item = f64>,
    margin: impl Fn(f64) -> f64,
) -> GridCheck {
    let mut failures = 0;
    let mut worst_margin = f64::INFINITY;
    let mut worst_point = f64::NAN;
    let mut count = 0;
    for x in points {
        count += 1;
        let m = margin(x);
        if m < worst_margin {
            worst_margin = m;
            worst_point = x;
        }
        if m < 0.0 {
            failures += 1;
        }
    }
    GridCheck {
        name,
        points: count,
        failures,
        worst_margin,
        worst_point,
    }
}

/// Verify the scalar inequalities behind the tail bound on dense grids, and
/// the chi-square MGF identity against seeded Monte Carlo.
pub fn scalar_inequality_scan(master_seed: u64) -> ScalarScanReport {
    let n_pts = SCAN_GRID_POINTS;
    let epsilon_tail = grid_check(
        "eps/(1-eps) + log(1-eps) >= eps^2/2",
        (1..=n_pts).map(move |i| i as f64 / (n_pts + 1) as f64),
        |e| e / (1.0 - e) + (1.0 - e).ln() - e * e / 2.0,
    );

    // Log-spaced grid on (0, 100], hitting x = 1 (equality) exactly.
    let (x_lo, x_hi) = (1e-6f64, 100f64);
    let step = (x_hi / x_lo).ln() / (n_pts - 2) as f64;
    let log_lower = grid_check(
        "1 - 1/x <= log x",
        (0..n_pts - 1)
            .map(move |i| x_lo * (step * i as f64).exp())
            .chain(std::iter::once(1.0)),
        |x| x.ln() - (1.0 - 1.0 / x),
    );

    let mut mgf = Vec::new();
    for &n in &[1usize, 2, 5, 10] {
        for (lambda_id, &lambda) in [0.1f64, 0.5].iter().enumerate() {
            // Order-preserving collection keeps the summation deterministic
            // for any worker count.
            let values: Vec<f64> = (0..MGF_DRAWS)
                .into_par_iter()
                .map(|trial| {
                    let mut r = rng::stream(
                        master_seed,
                        &[tag::MGF_SCAN, n as u64, lambda_id as u64, trial as u64],
                    );
                    let chi2: f64 = (0..n)
                        .map(|_| {
                            let z: f64 = r.sample(StandardNormal);
                            z * z
                        })
                        .sum();
                    (lambda * chi2 / 2.0).exp()
                })
                .collect();
            let t = MGF_DRAWS as f64;
            let mean = values.iter().sum::<f64>() / t;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
            let std_error = (var / t).sqrt();
            let exact = (1.0 - lambda).powf(-(n as f64) / 2.0);
            mgf.push(MgfCheck {
                n,
                lambda,
                exact,
                estimate: mean,
                std_error,
                pass: (mean - exact).abs() <= 3.0 * std_error,
            });
        }
    }

    ScalarScanReport {
        epsilon_tail,
        log_lower,
        mgf,
    }
}
