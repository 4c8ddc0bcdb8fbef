//! Posterior summarization, convergence diagnostics and simulation-study
//! aggregation.
//!
//! R-hat is the split-chain potential scale reduction factor: each chain
//! is halved (dropping the middle draw of odd-length chains), then with
//! `M` half-chains of length `N`, within-variance `W` = mean of the
//! half-chain sample variances and between-variance `B` = `N` times the
//! sample variance of the half-chain means,
//!
//! ```text
//! R-hat = sqrt(((N - 1)/N * W + B/N) / W)
//! ```
//!
//! Splitting makes trending chains show up even when their overall means
//! agree. One documented consequence: duplicating one chain does not pin
//! R-hat at 1, because the two halves of a finite chain differ; R-hat is
//! 1 + O(N^-1/2) for stationary draws and only drops below 1 + 1e-6 when
//! the halves match exactly.

use serde::{Deserialize, Serialize};

use crate::math;
use crate::sampler::PosteriorSample;
use crate::{Error, Result};

/// Threshold under which a scalar parameter counts as converged.
pub const RHAT_CONVERGED: f64 = 1.1;

/// Split-chain potential scale reduction factor.
///
/// Needs at least two chains of equal length >= 10. Chains with zero
/// variance everywhere (all constant, all equal) yield exactly 1.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Diagnostics("gelman_rubin needs >= 2 chains".into()));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostics("chains must have equal lengths".into()));
    }
    if n < 10 {
        return Err(Error::Diagnostics("chains must have length >= 10".into()));
    }
    let half = n / 2;
    let mut means = Vec::with_capacity(chains.len() * 2);
    let mut vars = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        for part in [&chain[..half], &chain[n - half..]] {
            means.push(math::mean(part));
            vars.push(math::sample_variance(part));
        }
    }
    let w = math::mean(&vars);
    let b_over_n = math::sample_variance(&means);
    if w == 0.0 && b_over_n == 0.0 {
        return Ok(1.0);
    }
    if w == 0.0 {
        return Ok(f64::INFINITY);
    }
    let nn = half as f64;
    let var_plus = (nn - 1.0) / nn * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// Posterior summary of one scalar parameter: mean, standard deviation,
/// equal-tailed 95% credible interval and split R-hat (absent for
/// single-chain runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub rhat: Option<f64>,
}

/// Summarizes named per-chain columns: pooled mean/sd/CI plus split
/// R-hat across chains.
pub fn summarize_columns(
    names: &[String],
    chains: &[Vec<Vec<f64>>],
) -> Result<Vec<ParameterSummary>> {
    if chains.is_empty() || chains.iter().any(|c| c.len() != names.len()) {
        return Err(Error::Diagnostics(
            "chains and parameter names are inconsistent".into(),
        ));
    }
    let mut out = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let mut pooled = Vec::new();
        for chain in chains {
            pooled.extend_from_slice(&chain[k]);
        }
        if pooled.is_empty() {
            return Err(Error::Diagnostics(format!("no draws for {name}")));
        }
        let mut sorted = pooled.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        let rhat = if chains.len() >= 2 {
            let views: Vec<&[f64]> = chains.iter().map(|c| c[k].as_slice()).collect();
            Some(gelman_rubin(&views)?)
        } else {
            None
        };
        out.push(ParameterSummary {
            name: name.clone(),
            mean: math::mean(&pooled),
            sd: math::sample_variance(&pooled).sqrt(),
            ci_lower: math::quantile_of_sorted(&sorted, 0.025),
            ci_upper: math::quantile_of_sorted(&sorted, 0.975),
            rhat,
        });
    }
    Ok(out)
}

/// Summarizes a sampler output.
pub fn summarize(sample: &PosteriorSample) -> Result<Vec<ParameterSummary>> {
    let chains: Vec<Vec<Vec<f64>>> = sample
        .chains
        .iter()
        .map(|c| c.columns.clone())
        .collect();
    summarize_columns(&sample.names, &chains)
}

/// Largest R-hat across parameters, if any was computed.
pub fn max_rhat(summaries: &[ParameterSummary]) -> Option<f64> {
    summaries
        .iter()
        .filter_map(|s| s.rhat)
        .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
}

/// Replication-averaged estimate quality for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub mean_sd: f64,
    /// Fraction of replications whose 95% CI contains the truth.
    pub coverage: f64,
}

/// Aggregates replication summaries against true parameter values.
/// `truth` pairs canonical names with true values; every named parameter
/// must appear in every replication.
pub fn coverage_report(
    replications: &[Vec<ParameterSummary>],
    truth: &[(String, f64)],
) -> Result<Vec<CoverageRow>> {
    if replications.len() < 2 {
        return Err(Error::Diagnostics(
            "coverage_report needs >= 2 replications".into(),
        ));
    }
    let mut rows = Vec::with_capacity(truth.len());
    for (name, value) in truth {
        let mut means = Vec::with_capacity(replications.len());
        let mut sds = Vec::with_capacity(replications.len());
        let mut hits = 0usize;
        for rep in replications {
            let s = rep
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| Error::Diagnostics(format!("missing parameter {name}")))?;
            means.push(s.mean);
            sds.push(s.sd);
            if s.ci_lower <= *value && *value <= s.ci_upper {
                hits += 1;
            }
        }
        rows.push(CoverageRow {
            name: name.clone(),
            truth: *value,
            mean_estimate: math::mean(&means),
            mean_sd: math::mean(&sds),
            coverage: hits as f64 / replications.len() as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_chain(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                shift + z
            })
            .collect()
    }

    #[test]
    fn rhat_near_one_for_iid_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian_chain(&mut rng, 5000, 0.0);
        let b = gaussian_chain(&mut rng, 5000, 0.0);
        let c = gaussian_chain(&mut rng, 5000, 0.0);
        let r = gelman_rubin(&[&a, &b, &c]).unwrap();
        assert!((0.99..1.05).contains(&r), "rhat = {r}");
    }

    #[test]
    fn rhat_flags_displaced_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gaussian_chain(&mut rng, 2000, 0.0);
        let b = gaussian_chain(&mut rng, 2000, 10.0);
        let r = gelman_rubin(&[&a, &b]).unwrap();
        assert!(r > 2.0, "rhat = {r}");
    }

    #[test]
    fn rhat_of_half_symmetric_duplicates() {
        // Duplicated chains alone do not force R-hat to 1 under splitting;
        // the halves must match. Mirrored chains make them match exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut half = gaussian_chain(&mut rng, 500, 0.0);
        let mut chain = half.clone();
        half.reverse();
        chain.extend(half);
        let r = gelman_rubin(&[&chain, &chain]).unwrap();
        assert!(r <= 1.0 + 1e-6, "rhat = {r}");
    }

    #[test]
    fn rhat_degenerate_chains() {
        let a = vec![2.0; 100];
        let b = vec![2.0; 100];
        assert_eq!(gelman_rubin(&[&a, &b]).unwrap(), 1.0);
        let short = vec![1.0; 5];
        assert!(gelman_rubin(&[&short, &short]).is_err());
        assert!(gelman_rubin(&[&a[..]]).is_err());
    }

    #[test]
    fn rhat_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian_chain(&mut rng, 1000, 0.3);
        let b = gaussian_chain(&mut rng, 1000, 0.0);
        let r1 = gelman_rubin(&[&a, &b]).unwrap();
        let fa: Vec<f64> = a.iter().map(|x| 3.0 * x - 7.0).collect();
        let fb: Vec<f64> = b.iter().map(|x| 3.0 * x - 7.0).collect();
        let r2 = gelman_rubin(&[&fa, &fb]).unwrap();
        assert!((r1 - r2).abs() < 1e-10);
    }

    #[test]
    fn summarize_constant_and_gaussian() {
        let names = vec!["a".to_string(), "b".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let constant = vec![3.25; 50_000];
        let normal = gaussian_chain(&mut rng, 50_000, 0.0);
        let chains = vec![vec![constant.clone(), normal.clone()], vec![constant, normal]];
        let summaries = summarize_columns(&names, &chains).unwrap();
        assert_eq!(summaries[0].name, "a");
        assert_eq!(summaries[1].name, "b");
        assert_eq!(summaries[0].mean, 3.25);
        assert_eq!(summaries[0].sd, 0.0);
        assert_eq!((summaries[0].ci_lower, summaries[0].ci_upper), (3.25, 3.25));
        assert!((summaries[1].ci_lower + 1.96).abs() < 0.05);
        assert!((summaries[1].ci_upper - 1.96).abs() < 0.05);
    }

    #[test]
    fn summarize_is_permutation_invariant_for_moments() {
        let names = vec!["a".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let col = gaussian_chain(&mut rng, 1000, 1.0);
        let mut rev = col.clone();
        rev.reverse();
        let s1 = summarize_columns(&names, &[vec![col]]).unwrap();
        let s2 = summarize_columns(&names, &[vec![rev]]).unwrap();
        assert!((s1[0].mean - s2[0].mean).abs() < 1e-12);
        assert!((s1[0].sd - s2[0].sd).abs() < 1e-12);
        assert_eq!(s1[0].ci_lower, s2[0].ci_lower);
    }

    #[test]
    fn coverage_counts_hits() {
        let rep = |lo: f64, hi: f64| {
            vec![ParameterSummary {
                name: "p".into(),
                mean: 0.5 * (lo + hi),
                sd: 0.1,
                ci_lower: lo,
                ci_upper: hi,
                rhat: None,
            }]
        };
        let truth = vec![("p".to_string(), 1.0)];
        let all_in = vec![rep(0.5, 1.5), rep(0.9, 1.1)];
        let rows = coverage_report(&all_in, &truth).unwrap();
        assert_eq!(rows[0].coverage, 1.0);
        let half = vec![rep(0.5, 1.5), rep(2.0, 3.0)];
        let rows = coverage_report(&half, &truth).unwrap();
        assert_eq!(rows[0].coverage, 0.5);
        assert!(coverage_report(&half[..1], &truth).is_err());
    }
}
