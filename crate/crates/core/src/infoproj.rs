//! Maximum-entropy machinery: reference histograms, per-feature tilting
//! parameters `(beta, z)` and log-linear likelihoods.
//!
//! A feature with reference histogram `q` over bin centres `c_b` is tilted to
//! `p(r) = q(r) exp(beta r) / z` with `z = sum_b q_b exp(beta c_b)`. The
//! reference density `q(I)` itself never appears; every reported quantity is
//! a log-ratio against it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::ResponseVector;
use crate::model::{AndOrTemplate, Configuration, DataMatrix, ReferenceModel};

/// Number of equal-width bins on `[0, 1]` in reference histograms.
pub const REFERENCE_BINS: usize = 32;

const SOLVE_TOLERANCE: f64 = 1e-12;

/// Result of projecting a reference histogram onto a target mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSolution {
    pub beta: f64,
    pub z: f64,
    pub log_z: f64,
    /// Mean response under the tilted distribution.
    pub expected_response: f64,
    /// KL divergence of the tilted from the reference distribution.
    pub gain: f64,
}

pub fn bin_center(b: usize, bins: usize) -> f64 {
    (b as f64 + 0.5) / bins as f64
}

fn bin_of(r: f64, bins: usize) -> usize {
    ((r * bins as f64) as usize).min(bins - 1)
}

/// Per-column histograms over [`REFERENCE_BINS`] bins with add-one smoothing.
pub fn estimate_reference(negatives: &DataMatrix) -> Result<ReferenceModel> {
    let keys: Vec<usize> = (0..negatives.n_cols()).collect();
    estimate_reference_pooled(negatives, &keys)
}

/// Like [`estimate_reference`], but columns sharing a pool key share one
/// histogram estimated from all their values. Used where responses are
/// stationary across lattice positions.
pub fn estimate_reference_pooled(negatives: &DataMatrix, keys: &[usize]) -> Result<ReferenceModel> {
    if negatives.n_rows() == 0 || negatives.n_cols() == 0 {
        return invalid("empty negative matrix");
    }
    if keys.len() != negatives.n_cols() {
        return invalid(format!("{} pool keys for {} columns", keys.len(), negatives.n_cols()));
    }
    let bins = REFERENCE_BINS;
    let n_pools = keys.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0.0f64; bins]; n_pools];
    let mut totals = vec![0usize; n_pools];
    for i in 0..negatives.n_rows() {
        for (j, &v) in negatives.row(i).iter().enumerate() {
            counts[keys[j]][bin_of(v, bins)] += 1.0;
            totals[keys[j]] += 1;
        }
    }
    let pooled: Vec<Vec<f64>> = counts
        .iter()
        .zip(&totals)
        .map(|(c, &n)| c.iter().map(|k| (k + 1.0) / (n as f64 + bins as f64)).collect())
        .collect();
    Ok(ReferenceModel {
        bins,
        histograms: keys.iter().map(|&k| pooled[k].clone()).collect(),
        sample_count: negatives.n_rows(),
    })
}

/// Mean bin centre under `q`.
pub fn reference_mean(q: &[f64]) -> f64 {
    let bins = q.len();
    q.iter().enumerate().map(|(b, m)| m * bin_center(b, bins)).sum::<f64>() / q.iter().sum::<f64>()
}

/// `(E_p[r], Var_p[r])` for `p ∝ q exp(beta r)`, computed with a shifted
/// exponent for stability.
pub fn tilted_moments(q: &[f64], beta: f64) -> (f64, f64) {
    let bins = q.len();
    let shift = (0..bins)
        .filter(|&b| q[b] > 0.0)
        .map(|b| beta * bin_center(b, bins))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut w_sum, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (b, &mass) in q.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let c = bin_center(b, bins);
        let w = mass * (beta * c - shift).exp();
        w_sum += w;
        m1 += w * c;
        m2 += w * c * c;
    }
    let mean = m1 / w_sum;
    (mean, (m2 / w_sum - mean * mean).max(0.0))
}

/// Normalizer `z = sum_b q_b exp(beta c_b)` as the plain finite sum.
pub fn normalizer(q: &[f64], beta: f64) -> f64 {
    let bins = q.len();
    q.iter().enumerate().map(|(b, m)| m * (beta * bin_center(b, bins)).exp()).sum()
}

/// Attainable open interval of tilted means: the extreme supported bin centres.
pub fn attainable_interval(q: &[f64]) -> (f64, f64) {
    let bins = q.len();
    let lo = q.iter().position(|m| *m > 0.0).map_or(0.5, |b| bin_center(b, bins));
    let hi = q.iter().rposition(|m| *m > 0.0).map_or(0.5, |b| bin_center(b, bins));
    (lo, hi)
}

/// Solves `E_p[r] = target_mean` for `beta` by bracketing and bisection, then
/// Newton polishing on the monotone map `beta -> E_p[r]`.
pub fn solve_beta(q: &[f64], target_mean: f64) -> Result<ProjectionSolution> {
    if q.is_empty() || q.iter().any(|m| *m < 0.0 || !m.is_finite()) || q.iter().sum::<f64>() <= 0.0 {
        return invalid("reference histogram must be nonnegative with positive mass");
    }
    let (lo_bound, hi_bound) = attainable_interval(q);
    if !(target_mean > lo_bound) {
        return Err(Error::Saturation { target: target_mean, bound: lo_bound });
    }
    if !(target_mean < hi_bound) {
        return Err(Error::Saturation { target: target_mean, bound: hi_bound });
    }
    let mean_at = |beta: f64| tilted_moments(q, beta).0;

    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while mean_at(lo) > target_mean {
        lo *= 2.0;
        if lo < -1e6 {
            return Err(Error::Saturation { target: target_mean, bound: lo_bound });
        }
    }
    while mean_at(hi) < target_mean {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Saturation { target: target_mean, bound: hi_bound });
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    let mut beta = 0.5 * (lo + hi);
    for _ in 0..50 {
        let (mean, var) = tilted_moments(q, beta);
        let err = mean - target_mean;
        if err.abs() <= SOLVE_TOLERANCE || var <= 0.0 {
            break;
        }
        let next = beta - err / var;
        // Newton must stay inside the bracket; fall back to bisection otherwise.
        beta = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if mean_at(beta) < target_mean {
            lo = beta;
        } else {
            hi = beta;
        }
    }
    let z = normalizer(q, beta);
    if !z.is_finite() || z <= 0.0 {
        let bound = if beta > 0.0 { hi_bound } else { lo_bound };
        return Err(Error::Saturation { target: target_mean, bound });
    }
    let log_z = z.ln();
    let expected_response = mean_at(beta);
    Ok(ProjectionSolution { beta, z, log_z, expected_response, gain: beta * expected_response - log_z })
}

/// `sum_k s_k (sum_j beta_kj r_j - log Z_k)`: the log-ratio of the image
/// likelihood under configuration `s` to the reference.
pub fn log_likelihood(responses: &ResponseVector, config: &Configuration, template: &AndOrTemplate) -> Result<f64> {
    if responses.len() != template.dimension() {
        return invalid(format!(
            "response vector has {} entries, template expects {}",
            responses.len(),
            template.dimension()
        ));
    }
    if config.s.len() != template.part_count() {
        return invalid(format!(
            "configuration has {} parts, template has {}",
            config.s.len(),
            template.part_count()
        ));
    }
    Ok(template
        .terminals
        .iter()
        .zip(&config.s)
        .filter(|(_, on)| **on)
        .map(|(pat, _)| pat.score(&responses.values))
        .sum())
}

/// `log p(I, s, g | Temp) - log q(I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompleteLikelihood {
    /// Minus infinity when the configuration selects a zero-probability branch.
    pub value: f64,
    pub log_prior: f64,
    pub log_likelihood: f64,
    /// Set when a selected branch has zero prior probability.
    pub impossible: bool,
}

/// Sum of the chosen OR-branch log-probabilities.
pub fn config_log_prior(config: &Configuration, template: &AndOrTemplate) -> Result<f64> {
    let choices = template.choices(config)?;
    Ok(template.or_nodes.iter().zip(&choices).map(|(node, &b)| node.branches[b].log_prob).sum())
}

pub fn complete_likelihood(
    responses: &ResponseVector,
    config: &Configuration,
    template: &AndOrTemplate,
) -> Result<CompleteLikelihood> {
    let ll = log_likelihood(responses, config, template)?;
    let prior = config_log_prior(config, template)?;
    let impossible = prior == f64::NEG_INFINITY;
    Ok(CompleteLikelihood {
        value: if impossible { f64::NEG_INFINITY } else { prior + ll },
        log_prior: prior,
        log_likelihood: ll,
        impossible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> Vec<f64> {
        vec![1.0 / 32.0; 32]
    }

    #[test]
    fn projection_onto_reference_mean_is_identity() {
        let q: Vec<f64> = (0..32).map(|b| 1.0 + (b as f64 * 0.7).sin().abs()).collect();
        let total: f64 = q.iter().sum();
        let q: Vec<f64> = q.iter().map(|m| m / total).collect();
        let sol = solve_beta(&q, reference_mean(&q)).unwrap();
        assert!(sol.beta.abs() <= 1e-10, "beta {}", sol.beta);
        assert!((sol.z - 1.0).abs() <= 1e-10);
        assert!(sol.gain.abs() <= 1e-10);
    }

    #[test]
    fn uniform_reference_tilts_up() {
        let q = uniform();
        let sol = solve_beta(&q, 0.8).unwrap();
        assert!(sol.beta > 0.0);
        assert!((sol.expected_response - 0.8).abs() <= 1e-8);
        let brute: f64 = (0..32).map(|b| q[b] * (sol.beta * (b as f64 + 0.5) / 32.0).exp()).sum();
        assert_eq!(sol.z, brute);
    }

    #[test]
    fn tilt_sign_follows_direction() {
        let mut q = vec![0.001; 32];
        q[19] = 1.0;
        let total: f64 = q.iter().sum();
        let q: Vec<f64> = q.iter().map(|m| m / total).collect();
        assert!(solve_beta(&q, 0.2).unwrap().beta < 0.0);
    }

    #[test]
    fn saturation_names_the_bound() {
        let q = uniform();
        match solve_beta(&q, 0.999) {
            Err(Error::Saturation { bound, .. }) => assert_eq!(bound, 63.0 / 64.0),
            other => panic!("expected saturation, got {other:?}"),
        }
        match solve_beta(&q, 0.0) {
            Err(Error::Saturation { bound, .. }) => assert_eq!(bound, 1.0 / 64.0),
            other => panic!("expected saturation, got {other:?}"),
        }
    }

    #[test]
    fn tilted_mean_is_strictly_increasing() {
        let q: Vec<f64> = (0..32).map(|b| ((b * 7 % 11) + 1) as f64).collect();
        let mut prev = f64::NEG_INFINITY;
        for i in -40..=40 {
            let (m, _) = tilted_moments(&q, i as f64 * 2.5);
            assert!(m > prev, "not increasing at beta {}", i as f64 * 2.5);
            prev = m;
        }
    }
}
