//! Closed-form information-theoretic quantities: Gaussian KL divergences,
//! mutual-information bounds over restricted ensembles, Fano error floors,
//! the sample threshold they imply, and the tree/block sparsity counts.
//!
//! All logarithms are natural; counts are carried in nats.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::construction::{ensemble_count_bound, ConstructionSpec};
use crate::ensemble::{ChannelClass, EnsembleMeta, Mode, RestrictedEnsemble};
use crate::graph::binomial_u128;

use std::f64::consts::LN_2;

/// Per-sample mutual-information ceilings from the pairwise KL chains.
pub const MI_CEILING_NOISY: f64 = 5.0;
pub const MI_CEILING_NOISELESS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("variance must be positive, got {0}")]
    NonpositiveVariance(f64),
    #[error("log ensemble size must be positive, got {0}")]
    NonpositiveLogSize(f64),
    #[error("per-sample mutual information must be positive, got {0}")]
    NonpositiveMi(f64),
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// KL divergence between centered scalar Gaussians with variances `v1`,
/// `v2`: `0.5 * (v1/v2 - 1 - log(v1/v2))`.
pub fn kl_gaussian_var(v1: f64, v2: f64) -> Result<f64, InfoError> {
    if !v1.is_finite() || v1 <= 0.0 {
        return Err(InfoError::NonpositiveVariance(v1));
    }
    if !v2.is_finite() || v2 <= 0.0 {
        return Err(InfoError::NonpositiveVariance(v2));
    }
    let r = v1 / v2;
    Ok(0.5 * (r - 1.0 - r.ln()))
}

/// KL divergence between unit-variance Gaussians with means `m1`, `m2`:
/// `0.5 * (m1 - m2)^2`.
pub fn kl_gaussian_mean(m1: f64, m2: f64) -> f64 {
    0.5 * (m1 - m2) * (m1 - m2)
}

/// Pairwise-KL summary of an ensemble's marginal observation channel.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MiBound {
    /// `(1/|F|^2) * sum over ordered pairs of KL(P_{y|beta} || P_{y|beta'})`.
    pub avg_pairwise_kl: f64,
    /// Largest pairwise KL; the parameter-free chain keeps this at or below
    /// the ceiling.
    pub max_pairwise_kl: f64,
    /// 5 in noisy mode, 1 in noiseless mode.
    pub ceiling: f64,
    /// `min(avg_pairwise_kl, ceiling)`, the per-sample MI bound.
    pub per_sample_bound: f64,
}

pub(crate) fn pairwise_kl_stats(
    classes: &[ChannelClass],
    total: f64,
    kl: impl Fn(f64, f64) -> f64,
) -> (f64, f64) {
    let mut avg = 0.0;
    let mut max = 0.0f64;
    for a in classes {
        for b in classes {
            let v = kl(a.param, b.param);
            avg += (a.count as f64 / total) * (b.count as f64 / total) * v;
            if v > max {
                max = v;
            }
        }
    }
    (avg, max)
}

/// Average and maximum pairwise KL over the ensemble, collapsed to distinct
/// channel classes (noisy mode: the KL depends only on the squared norm).
pub fn mi_upper_bound(ensemble: &RestrictedEnsemble) -> Result<MiBound, InfoError> {
    if ensemble.is_empty() {
        return Err(InfoError::EmptyEnsemble);
    }
    let classes = ensemble.channel_classes();
    let total = ensemble.len() as f64;
    let (avg, max, ceiling) = match ensemble.meta() {
        EnsembleMeta::Noisy { sigma, .. } => {
            let s2 = sigma * sigma;
            let (avg, max) = pairwise_kl_stats(&classes, total, |a, b| {
                kl_gaussian_var(a + s2, b + s2).expect("norms and sigma^2 are positive")
            });
            (avg, max, MI_CEILING_NOISY)
        }
        EnsembleMeta::Noiseless => {
            let (avg, max) = pairwise_kl_stats(&classes, total, kl_gaussian_mean);
            (avg, max, MI_CEILING_NOISELESS)
        }
    };
    Ok(MiBound {
        avg_pairwise_kl: avg,
        max_pairwise_kl: max,
        ceiling: ceiling,
        per_sample_bound: avg.min(ceiling),
    })
}

pub fn mi_ceiling(mode: Mode) -> f64 {
    match mode {
        Mode::Noisy => MI_CEILING_NOISY,
        Mode::Noiseless => MI_CEILING_NOISELESS,
    }
}

/// Fano floor `max(0, 1 - (mi_per_sample * n + log 2) / log_F)`.
pub fn fano_error_lower_bound(
    mi_per_sample: f64,
    n: usize,
    log_f: f64,
) -> Result<f64, InfoError> {
    if !log_f.is_finite() || log_f <= 0.0 {
        return Err(InfoError::NonpositiveLogSize(log_f));
    }
    if mi_per_sample < 0.0 || !mi_per_sample.is_finite() {
        return Err(InfoError::BadParameter(format!(
            "mi_per_sample must be nonnegative, got {mi_per_sample}"
        )));
    }
    Ok((1.0 - (mi_per_sample * n as f64 + LN_2) / log_f).max(0.0))
}

/// Smallest sample count at which the Fano floor drops below one half:
/// `max(1, ceil((log_F / 2 - log 2) / mi_per_sample))`.
pub fn required_samples(log_f: f64, mi_per_sample: f64) -> Result<usize, InfoError> {
    if !log_f.is_finite() || log_f <= 0.0 {
        return Err(InfoError::NonpositiveLogSize(log_f));
    }
    if !mi_per_sample.is_finite() || mi_per_sample <= 0.0 {
        return Err(InfoError::NonpositiveMi(mi_per_sample));
    }
    let threshold = (log_f / 2.0 - LN_2) / mi_per_sample;
    if threshold <= 1.0 {
        return Ok(1);
    }
    Ok(threshold.ceil() as usize)
}

/// Error-floor report for one ensemble/channel pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundReport {
    pub mi_per_sample: f64,
    pub log_ensemble_size: f64,
    /// Smallest `n` whose floor drops below one half.
    pub n_star: usize,
}

impl BoundReport {
    pub fn new(mi_per_sample: f64, log_ensemble_size: f64) -> Result<Self, InfoError> {
        let n_star = required_samples(log_ensemble_size, mi_per_sample)?;
        Ok(Self {
            mi_per_sample,
            log_ensemble_size,
            n_star,
        })
    }

    /// Floor as a function of the sample count; in `[0, 1)` and
    /// non-increasing in `n`.
    pub fn fano_floor(&self, n: usize) -> f64 {
        fano_error_lower_bound(self.mi_per_sample, n, self.log_ensemble_size)
            .expect("fields validated at construction")
    }
}

/// Report built from an ensemble using the paper ceiling as the per-sample
/// MI bound and the exact member count as the ensemble size.
pub fn bound_report_for(ensemble: &RestrictedEnsemble) -> Result<BoundReport, InfoError> {
    if ensemble.is_empty() {
        return Err(InfoError::EmptyEnsemble);
    }
    BoundReport::new(mi_ceiling(ensemble.mode()), (ensemble.len() as f64).ln())
}

/// The theorem's rate expression next to the relaxed log-count it certifies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateReport {
    /// `(s-g)(log rho + log(B/(s-g))) + g log(d/g) + (s-g) log(g/(s-g)) + s log 2`
    pub rate: f64,
    /// Relaxed lower bound on `log |F|` from the counting argument.
    pub relaxed_log: f64,
    /// `rate - relaxed_log`, identically `(s-g) log 2`.
    pub rate_minus_relaxed: f64,
}

pub fn theorem_rate(spec: &ConstructionSpec) -> RateReport {
    let s = spec.s() as f64;
    let g = spec.g() as f64;
    let gap = (spec.s() - spec.g()) as f64;
    let rate = gap * ((spec.rho() as f64).ln() + (spec.budget() as f64 / gap).ln())
        + g * (spec.group_size() as f64).ln()
        + gap * (g / gap).ln()
        + s * LN_2;
    let relaxed_log = ensemble_count_bound(spec).relaxed_log;
    RateReport {
        rate,
        relaxed_log,
        rate_minus_relaxed: rate - relaxed_log,
    }
}

/// Log of the binomial coefficient; exact through u128 at desk scale,
/// log-gamma beyond.
pub fn log_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    if n <= 120 {
        return (binomial_u128(n as usize, k as usize) as f64).ln();
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Log ensemble-size lower bound of the binary tree sparsity model:
/// `s log 2` (at least `2^s` sign patterns on any fixed rooted subtree).
pub fn tree_count_bound(s: usize) -> Result<f64, InfoError> {
    if s == 0 {
        return Err(InfoError::BadParameter("tree sparsity needs s >= 1".into()));
    }
    Ok(s as f64 * LN_2)
}

/// Exact and relaxed log-counts of the block sparsity model on a `J x N`
/// coefficient matrix with `K` active columns.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlockCount {
    /// `KJ log 2 + log C(N, K)`
    pub exact_log: f64,
    /// `KJ log 2 + K log(N/K)`
    pub bound_log: f64,
}

pub fn block_count(j: usize, n: usize, k: usize) -> Result<BlockCount, InfoError> {
    if j == 0 || k == 0 {
        return Err(InfoError::BadParameter(format!(
            "block sparsity needs J >= 1 and K >= 1, got J={j}, K={k}"
        )));
    }
    if k > n {
        return Err(InfoError::BadParameter(format!(
            "cannot choose K={k} columns out of N={n}"
        )));
    }
    let kj = (k * j) as f64 * LN_2;
    Ok(BlockCount {
        exact_log: kj + log_binomial(n as u64, k as u64),
        bound_log: kj + k as f64 * (n as f64 / k as f64).ln(),
    })
}

/// Sample-count rate of the block model, `KJ + K log(N/K)` nats.
pub fn block_rate(j: usize, n: usize, k: usize) -> Result<f64, InfoError> {
    block_count(j, n, k)?;
    Ok((k * j) as f64 + k as f64 * (n as f64 / k as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2_LOG_F: f64 = 12.424533248939998; // ln(248832)

    #[test]
    fn kl_var_zero_iff_equal_and_asymmetric() {
        assert_eq!(kl_gaussian_var(3.0, 3.0).unwrap(), 0.0);
        let a = kl_gaussian_var(2.0, 1.0).unwrap();
        let b = kl_gaussian_var(1.0, 2.0).unwrap();
        assert!((a - 0.5 * (1.0 - LN_2)).abs() < 1e-15);
        assert!((a - 0.15342640972002733).abs() < 1e-12);
        assert!(a != b);
        assert!(b > 0.0);
    }

    #[test]
    fn kl_var_rejects_nonpositive_variance() {
        assert!(kl_gaussian_var(0.0, 1.0).is_err());
        assert!(kl_gaussian_var(1.0, -2.0).is_err());
        assert!(kl_gaussian_var(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn kl_mean_examples() {
        assert_eq!(kl_gaussian_mean(0.7, 0.7), 0.0);
        let d = std::f64::consts::SQRT_2;
        assert!((kl_gaussian_mean(d, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(kl_gaussian_mean(1.0, 3.0), kl_gaussian_mean(3.0, 1.0));
    }

    #[test]
    fn pairwise_stats_singleton_class_is_zero() {
        let classes = vec![ChannelClass {
            param: 4.2,
            count: 1,
            first_index: 0,
        }];
        let (avg, max) = pairwise_kl_stats(&classes, 1.0, kl_gaussian_mean);
        assert_eq!((avg, max), (0.0, 0.0));
    }

    #[test]
    fn fano_floor_examples() {
        let half = fano_error_lower_bound(5.0, 0, 4f64.ln()).unwrap();
        assert!((half - 0.5).abs() < 1e-15);
        let fig2 = fano_error_lower_bound(5.0, 1, FIG2_LOG_F).unwrap();
        assert!((fig2 - 0.5417818064879292).abs() < 1e-12, "got {fig2}");
        assert_eq!(fano_error_lower_bound(5.0, 1000, FIG2_LOG_F).unwrap(), 0.0);
        assert!(fano_error_lower_bound(5.0, 1, 0.0).is_err());
        assert!(fano_error_lower_bound(-1.0, 1, 1.0).is_err());
    }

    #[test]
    fn fano_floor_monotone_in_n_and_log_f() {
        let report = BoundReport::new(5.0, FIG2_LOG_F).unwrap();
        let mut prev = 1.0;
        for n in 0..10 {
            let floor = report.fano_floor(n);
            assert!((0.0..1.0).contains(&floor));
            assert!(floor <= prev + 1e-15);
            prev = floor;
        }
        for log_f in [1.0, 2.0, 5.0, 20.0] {
            let lo = fano_error_lower_bound(5.0, 1, log_f).unwrap();
            let hi = fano_error_lower_bound(5.0, 1, log_f * 2.0).unwrap();
            assert!(hi >= lo);
        }
    }

    #[test]
    fn required_samples_examples() {
        assert_eq!(required_samples(FIG2_LOG_F, 5.0).unwrap(), 2);
        assert_eq!(required_samples(2.0 * LN_2, 5.0).unwrap(), 1);
        assert!(required_samples(0.0, 5.0).is_err());
        assert!(required_samples(1.0, 0.0).is_err());
        // Doubling log_F moves the unclamped threshold by log_F / (2 mi).
        let t1 = (30.0f64 / 2.0 - LN_2) / 5.0;
        let t2 = (60.0f64 / 2.0 - LN_2) / 5.0;
        assert!((t2 - t1 - 30.0 / 10.0).abs() < 1e-12);
        assert_eq!(required_samples(30.0, 5.0).unwrap(), t1.ceil() as usize);
        assert_eq!(required_samples(60.0, 5.0).unwrap(), t2.ceil() as usize);
    }

    #[test]
    fn theorem_rate_fig2_and_scaling() {
        let spec = ConstructionSpec::new(15, 10, 5, 5, 2).unwrap();
        let report = theorem_rate(&spec);
        let expect = 15.0 * LN_2 + 5.0 * 3f64.ln();
        assert!((report.rate - expect).abs() < 1e-12);
        assert!((report.rate_minus_relaxed - 5.0 * LN_2).abs() < 1e-12);
        assert!(report.rate.is_finite());

        // Doubling d at fixed g raises the rate by exactly g log 2.
        let doubled = ConstructionSpec::new(30, 10, 5, 5, 2).unwrap();
        let r2 = theorem_rate(&doubled);
        assert!((r2.rate - report.rate - 5.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn theorem_rate_finite_on_valid_specs() {
        for (d, s, g, b, rho) in [
            (6usize, 4usize, 2usize, 2u64, 2usize),
            (15, 10, 5, 5, 2),
            (27, 6, 3, 6, 4),
            (45, 10, 5, 10, 4),
        ] {
            let spec = ConstructionSpec::new(d, s, g, b, rho).unwrap();
            let report = theorem_rate(&spec);
            assert!(report.rate.is_finite());
            assert!(report.rate_minus_relaxed >= 0.0);
        }
    }

    #[test]
    fn tree_count_examples() {
        assert!((tree_count_bound(3).unwrap() - 3.0 * LN_2).abs() < 1e-15);
        assert!((tree_count_bound(3).unwrap() - 2.0794415416798357).abs() < 1e-12);
        assert!(tree_count_bound(0).is_err());
    }

    #[test]
    fn block_count_examples() {
        let b = block_count(2, 4, 2).unwrap();
        assert!((b.exact_log - 96f64.ln()).abs() < 1e-12);
        assert!((b.bound_log - (4.0 * LN_2 + 2.0 * LN_2)).abs() < 1e-12);
        let full = block_count(3, 5, 5).unwrap();
        assert!((full.exact_log - 15.0 * LN_2).abs() < 1e-12);
        assert!(block_count(2, 4, 5).is_err());
        assert!(block_count(0, 4, 2).is_err());
    }

    #[test]
    fn block_bound_below_exact_on_grid() {
        for j in 1..=8usize {
            for n in 1..=8usize {
                for k in 1..=n {
                    let b = block_count(j, n, k).unwrap();
                    assert!(
                        b.bound_log <= b.exact_log + 1e-12,
                        "J={j} N={n} K={k}: {} > {}",
                        b.bound_log,
                        b.exact_log
                    );
                }
            }
        }
    }

    #[test]
    fn block_rate_examples() {
        let r = block_rate(2, 4, 2).unwrap();
        assert!((r - (4.0 + 2.0 * LN_2)).abs() < 1e-12);
        assert!((block_rate(3, 5, 5).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn log_binomial_matches_exact_values() {
        assert_eq!(log_binomial(1, 1), 0.0);
        assert_eq!(log_binomial(10, 0), 0.0);
        assert_eq!(log_binomial(3, 7), f64::NEG_INFINITY);
        assert!((log_binomial(15, 10) - 3003f64.ln()).abs() < 1e-12);
        // Large-N log-gamma branch stays close to Stirling-free exact math:
        // C(200, 3) = 1313400.
        assert!((log_binomial(200, 3) - 1313400f64.ln()).abs() < 1e-9);
    }
}
