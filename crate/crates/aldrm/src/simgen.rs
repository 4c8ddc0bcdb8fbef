//! Monte Carlo data generation and the replication study driver.
//!
//! The generative design: each subject carries two covariates
//! (`x1 ~ N(0,1)`, `x2 ~ Bernoulli(0.5)`), `m` equally spaced observation
//! times on `[0, t_max]` (both endpoints included) and block-independent
//! random effects. Responses are AL draws with
//!
//! ```text
//! mu      = b0 + b1 t + b2 t^2 + b3 x1 + b4 x2 + rb0 + rb1 t + rb2 t^2
//! ln s    = x0 + x1c t + x2c x1 + ru0 + ru1 t
//! logit t = a1 x1 + a2 x2 + ra0 + ra1 t
//! ```
//!
//! (fixed coefficients named per parameter block; the skewness part has a
//! random but no fixed intercept). Responses use the inverse-CDF sampler,
//! keeping generation independent of the mixture machinery the estimation
//! engine relies on. Replications derive their seeds from
//! `(seed, replication index)`, so studies are reproducible under any
//! parallel schedule.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aldist::{self, ALParams};
use crate::data::{LongitudinalDataset, SubjectRecord};
use crate::diagnostics::{self, CoverageRow, ParameterSummary, RHAT_CONVERGED};
use crate::linalg;
use crate::math::logistic;
use crate::modelspec::{
    Family, ModelSpec, ParameterVector, PredictorSpec, SkewnessSpec, Term, ETA_CLAMP,
};
use crate::parallel;
use crate::sampler::{self, derive_seed, SamplerConfig};
use crate::selection::{
    criterion, FittedModel, Loss, PredictKind, QuantileSet,
};
use crate::{Error, Result};

/// Model specification matching the generative design (full ALDRM).
pub fn sim_model_spec() -> ModelSpec {
    ModelSpec::new(
        Family::AsymmetricLaplace,
        PredictorSpec::new(
            vec![
                Term::Intercept,
                Term::Time,
                Term::TimeSquared,
                Term::Covariate("x1".into()),
                Term::Covariate("x2".into()),
            ],
            vec![Term::Intercept, Term::Time, Term::TimeSquared],
        ),
        PredictorSpec::new(
            vec![Term::Intercept, Term::Time, Term::Covariate("x1".into())],
            vec![Term::Intercept, Term::Time],
        ),
        Some(SkewnessSpec::Modeled(PredictorSpec::new(
            vec![Term::Covariate("x1".into()), Term::Covariate("x2".into())],
            vec![Term::Intercept, Term::Time],
        ))),
    )
    .expect("structure is valid")
}

/// Same location and scale structure with the skewness fixed at `tau`.
pub fn lslqmm_spec(tau: f64) -> Result<ModelSpec> {
    ModelSpec::new(
        Family::AsymmetricLaplace,
        sim_model_spec().location,
        sim_model_spec().scale,
        Some(SkewnessSpec::Fixed(tau)),
    )
}

/// Gaussian location-scale counterpart of the generative structure.
pub fn lsmm_spec() -> ModelSpec {
    ModelSpec::new(
        Family::Gaussian,
        sim_model_spec().location,
        sim_model_spec().scale,
        None,
    )
    .expect("structure is valid")
}

/// True parameter values of the default scenario.
pub fn default_truth() -> ParameterVector {
    let spec = sim_model_spec();
    let mut theta = ParameterVector::zeros_for(&spec);
    theta.beta = DVector::from_row_slice(&[13.0, 0.3, -0.03, 0.6, 0.8]);
    theta.sigma_b = DMatrix::from_row_slice(
        3,
        3,
        &[
            3.0, -0.32, 0.014, //
            -0.32, 0.3, -0.025, //
            0.014, -0.025, 0.01,
        ],
    );
    theta.xi = DVector::from_row_slice(&[-0.6, -0.07, 0.084]);
    theta.sigma_u = DMatrix::from_row_slice(2, 2, &[0.06, -0.003, -0.003, 0.01]);
    theta.alpha = Some(DVector::from_row_slice(&[0.13, 0.15]));
    theta.sigma_a = Some(DMatrix::from_row_slice(2, 2, &[0.25, -0.02, -0.02, 0.05]));
    theta
}

/// One generative scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub m: usize,
    pub t_max: f64,
    pub seed: u64,
    pub truth: ParameterVector,
}

impl Scenario {
    /// Default scenario at the requested size.
    pub fn table1_default(n: usize, m: usize, seed: u64) -> Self {
        Self { n, m, t_max: 10.0, seed, truth: default_truth() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter("scenario needs n >= 1".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidParameter("scenario needs m >= 2".into()));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidParameter("scenario needs t_max > 0".into()));
        }
        self.truth.validate_for(&sim_model_spec())
    }
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    n: usize,
    m: usize,
    t_max: f64,
    seed: u64,
    truth: BTreeMap<String, f64>,
}

impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let names = sim_model_spec().parameter_names();
        let truth: BTreeMap<String, f64> =
            names.into_iter().zip(self.truth.flatten()).collect();
        ScenarioFile { n: self.n, m: self.m, t_max: self.t_max, seed: self.seed, truth }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = ScenarioFile::deserialize(deserializer)?;
        let spec = sim_model_spec();
        let names = spec.parameter_names();
        if file.truth.len() != names.len() {
            return Err(D::Error::custom(format!(
                "scenario truth needs exactly {} named entries, got {}",
                names.len(),
                file.truth.len()
            )));
        }
        let mut values = Vec::with_capacity(names.len());
        for name in &names {
            match file.truth.get(name) {
                Some(v) => values.push(*v),
                None => return Err(D::Error::custom(format!("missing truth entry {name}"))),
            }
        }
        Ok(Scenario {
            n: file.n,
            m: file.m,
            t_max: file.t_max,
            seed: file.seed,
            truth: sampler::unflatten(&spec, &values),
        })
    }
}

/// Equally spaced grid on `[0, t_max]` including both endpoints.
fn time_grid(m: usize, t_max: f64) -> Vec<f64> {
    (0..m).map(|j| t_max * j as f64 / (m - 1) as f64).collect()
}

/// Generates a dataset from the scenario, deterministically in the seed.
pub fn generate(scenario: &Scenario) -> Result<LongitudinalDataset> {
    scenario.validate()?;
    let truth = &scenario.truth;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let chol_b = linalg::cholesky(&truth.sigma_b, "Sigma_b")?;
    let chol_u = linalg::cholesky(&truth.sigma_u, "Sigma_u")?;
    let chol_a = linalg::cholesky(truth.sigma_a.as_ref().expect("sim structure"), "Sigma_a")?;
    let alpha = truth.alpha.as_ref().expect("sim structure");
    let times = time_grid(scenario.m, scenario.t_max);
    let width = scenario.n.to_string().len();

    let mut subjects = Vec::with_capacity(scenario.n);
    for i in 0..scenario.n {
        let b = linalg::sample_mvn(&DVector::zeros(3), &chol_b, &mut rng);
        let u = linalg::sample_mvn(&DVector::zeros(2), &chol_u, &mut rng);
        let a = linalg::sample_mvn(&DVector::zeros(2), &chol_a, &mut rng);
        let x1: f64 = StandardNormal.sample(&mut rng);
        let x2 = f64::from(rand::Rng::random::<f64>(&mut rng) < 0.5);
        let mut y = Vec::with_capacity(scenario.m);
        for &t in &times {
            let mu = truth.beta[0]
                + truth.beta[1] * t
                + truth.beta[2] * t * t
                + truth.beta[3] * x1
                + truth.beta[4] * x2
                + b[0]
                + b[1] * t
                + b[2] * t * t;
            let eta_s = truth.xi[0] + truth.xi[1] * t + truth.xi[2] * x1 + u[0] + u[1] * t;
            let eta_t = alpha[0] * x1 + alpha[1] * x2 + a[0] + a[1] * t;
            let sigma = eta_s.clamp(-ETA_CLAMP, ETA_CLAMP).exp();
            let tau = logistic(eta_t.clamp(-ETA_CLAMP, ETA_CLAMP));
            let p = ALParams::new(mu, sigma, tau)?;
            y.push(aldist::sample_inverse(&p, &mut rng));
        }
        subjects.push(SubjectRecord {
            id: format!("s{:0width$}", i + 1),
            covariates: vec![x1, x2],
            times: times.clone(),
            y,
        });
    }
    LongitudinalDataset::new(vec!["x1".into(), "x2".into()], subjects)
}

/// Per-model outcome of a single replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyModelResult {
    pub label: String,
    pub summaries: Vec<ParameterSummary>,
    pub max_rhat: Option<f64>,
    /// `criteria[set][loss]` = global criterion value.
    pub criteria: Vec<Vec<f64>>,
    /// Prediction errors per kind: (kind, MSE, MAE).
    pub errors: Vec<(PredictKind, f64, f64)>,
}

/// Selection frequencies of one (set, loss) pair across replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionTally {
    pub set_index: usize,
    pub loss: Loss,
    /// Strict wins per model index.
    pub wins: Vec<usize>,
    pub ties: usize,
}

/// Aggregated replication study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub replications: usize,
    /// `per_rep[rep][model]`.
    pub per_rep: Vec<Vec<StudyModelResult>>,
    /// Replications where any fitted model had a split R-hat at or above
    /// the convergence threshold. Flagged, never dropped.
    pub flagged: Vec<bool>,
    /// Coverage of the first model against the scenario truth, all
    /// replications included. Empty when fewer than 2 replications or the
    /// first model does not share the truth's parameter set.
    pub coverage_all: Vec<CoverageRow>,
    /// Same, restricted to unflagged replications (empty if fewer than 2).
    pub coverage_converged: Vec<CoverageRow>,
    pub selection: Vec<SelectionTally>,
}

/// Runs `replications` generate/fit/criterion rounds for every model and
/// aggregates coverage and selection frequencies. Replications run in
/// parallel with per-replication derived seeds.
pub fn run_study(
    scenario: &Scenario,
    replications: usize,
    models: &[ModelSpec],
    cfg: &SamplerConfig,
    sets: &[QuantileSet],
    losses: &[Loss],
) -> Result<StudyReport> {
    scenario.validate()?;
    cfg.validate()?;
    if replications == 0 || models.is_empty() {
        return Err(Error::InvalidParameter(
            "study needs >= 1 replication and >= 1 model".into(),
        ));
    }
    let rep_results: Vec<Result<Vec<StudyModelResult>>> =
        parallel::map_indices(replications, |rep| {
            let mut rep_scenario = scenario.clone();
            rep_scenario.seed = derive_seed(scenario.seed, rep as u64);
            let dataset = generate(&rep_scenario)?;
            let mut out = Vec::with_capacity(models.len());
            for spec in models {
                let mut rep_cfg = cfg.clone();
                rep_cfg.seed = derive_seed(cfg.seed, rep as u64);
                let sample = sampler::fit(&dataset, spec, &rep_cfg)?;
                let summaries = diagnostics::summarize(&sample)?;
                let max_rhat = diagnostics::max_rhat(&summaries);
                let fit = FittedModel::from_sample(&sample);
                let mut criteria = Vec::with_capacity(sets.len());
                for set in sets {
                    let mut by_loss = Vec::with_capacity(losses.len());
                    for &loss in losses {
                        by_loss.push(criterion(&fit, &dataset, set, loss)?.global);
                    }
                    criteria.push(by_loss);
                }
                let mut errors = Vec::new();
                for kind in [PredictKind::Mode, PredictKind::Mean, PredictKind::Median] {
                    let (mse, mae) = crate::selection::predictive_errors(&fit, &dataset, kind)?;
                    errors.push((kind, mse, mae));
                }
                out.push(StudyModelResult {
                    label: spec.kind().label().to_string(),
                    summaries,
                    max_rhat,
                    criteria,
                    errors,
                });
            }
            Ok(out)
        });
    let mut per_rep = Vec::with_capacity(replications);
    for r in rep_results {
        per_rep.push(r?);
    }

    let flagged: Vec<bool> = per_rep
        .iter()
        .map(|models| {
            models
                .iter()
                .any(|m| m.max_rhat.is_some_and(|r| r >= RHAT_CONVERGED))
        })
        .collect();

    let truth_names = sim_model_spec().parameter_names();
    let truth_pairs: Vec<(String, f64)> = truth_names
        .iter()
        .cloned()
        .zip(scenario.truth.flatten())
        .collect();
    let first_matches = models[0].parameter_names() == truth_names;
    let all_summaries: Vec<Vec<ParameterSummary>> = per_rep
        .iter()
        .map(|models| models[0].summaries.clone())
        .collect();
    let coverage_all = if first_matches && replications >= 2 {
        diagnostics::coverage_report(&all_summaries, &truth_pairs)?
    } else {
        Vec::new()
    };
    let converged: Vec<Vec<ParameterSummary>> = all_summaries
        .iter()
        .zip(&flagged)
        .filter(|(_, f)| !**f)
        .map(|(s, _)| s.clone())
        .collect();
    let coverage_converged = if first_matches && converged.len() >= 2 {
        diagnostics::coverage_report(&converged, &truth_pairs)?
    } else {
        Vec::new()
    };

    let mut selection = Vec::new();
    for (set_index, _) in sets.iter().enumerate() {
        for (loss_index, &loss) in losses.iter().enumerate() {
            let mut wins = vec![0usize; models.len()];
            let mut ties = 0usize;
            for rep in &per_rep {
                let values: Vec<f64> = rep
                    .iter()
                    .map(|m| m.criteria[set_index][loss_index])
                    .collect();
                let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let winners: Vec<usize> = values
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v == best)
                    .map(|(i, _)| i)
                    .collect();
                if winners.len() == 1 {
                    wins[winners[0]] += 1;
                } else {
                    ties += 1;
                }
            }
            selection.push(SelectionTally { set_index, loss, wins, ties });
        }
    }

    Ok(StudyReport {
        replications,
        per_rep,
        flagged,
        coverage_all,
        coverage_converged,
        selection,
    })
}
