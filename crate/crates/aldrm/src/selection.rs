//! Quantile-coverage model selection and predictive-error criteria.
//!
//! For a fitted model, each subject gets predicted individual quantile
//! trajectories: at order `gamma`, observation `(i, j)` has predicted
//! quantile `Q_ij(gamma)` from its fitted conditional distribution
//! (posterior-mean parameters plugged into the closed-form quantile
//! function). `gamma_hat_i` is the fraction of subject `i`'s observations
//! strictly below that trajectory. The criterion averages a loss between
//! `gamma_hat_i` and the nominal order over a quantile set `Gamma`:
//!
//! ```text
//! C_i = mean over gamma in Gamma of loss(gamma_hat_i - gamma)
//! C   = mean over subjects of C_i
//! ```
//!
//! Absolute loss gives the MMAE variant, quadratic loss the MMSE variant;
//! the best model minimizes the criterion. Exact ties of an observation
//! with its predicted quantile count as not-below.
//!
//! Current-value prediction errors (MSE/MAE over all observations) are
//! also provided, with the predicted value taken as the fitted mode, mean
//! or median — for the AL family those differ and the choice matters.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::aldist::{self, ALParams};
use crate::data::LongitudinalDataset;
use crate::math;
use crate::modelspec::{
    build_design, eval_params, DesignBundle, Family, ModelSpec, ObsParams, ParameterVector,
    SubjectEffects,
};
use crate::persist::fmt_g17;
use crate::sampler::PosteriorSample;
use crate::{Error, Result};

/// Strictly increasing quantile orders in (0,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSet {
    orders: Vec<f64>,
}

impl QuantileSet {
    pub fn new(orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::InvalidParameter("empty quantile set".into()));
        }
        for pair in orders.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidParameter(
                    "quantile orders must be strictly increasing".into(),
                ));
            }
        }
        if orders.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return Err(Error::InvalidParameter(
                "quantile orders must lie in (0,1)".into(),
            ));
        }
        Ok(Self { orders })
    }

    /// All deciles 0.1, ..., 0.9.
    pub fn deciles() -> Self {
        Self { orders: (1..=9).map(|k| k as f64 / 10.0).collect() }
    }

    /// Quartiles 0.25, 0.5, 0.75.
    pub fn quartiles() -> Self {
        Self { orders: vec![0.25, 0.5, 0.75] }
    }

    /// Median with first and ninth deciles.
    pub fn outer_deciles() -> Self {
        Self { orders: vec![0.1, 0.5, 0.9] }
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }
}

/// Loss applied to `gamma_hat - gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Absolute,
    Quadratic,
}

impl Loss {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Loss::Absolute => x.abs(),
            Loss::Quadratic => x * x,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Loss::Absolute => "MMAE",
            Loss::Quadratic => "MMSE",
        }
    }
}

/// Point-estimate kind for current-value prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictKind {
    Mode,
    Mean,
    Median,
}

impl PredictKind {
    pub fn label(&self) -> &'static str {
        match self {
            PredictKind::Mode => "mode",
            PredictKind::Mean => "mean",
            PredictKind::Median => "median",
        }
    }
}

/// A fitted model: spec, posterior-mean parameters and posterior-mean
/// subject random effects.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub theta: ParameterVector,
    pub effects: Vec<SubjectEffects>,
}

impl FittedModel {
    pub fn from_sample(sample: &PosteriorSample) -> Self {
        Self {
            spec: sample.spec.clone(),
            theta: sample.posterior_mean_theta(),
            effects: sample.effect_means.clone(),
        }
    }

    fn params_at(&self, bundle: &DesignBundle, obs: usize) -> Result<ObsParams> {
        let subject = bundle.subject_of_obs[obs];
        let effects = self
            .effects
            .get(subject)
            .ok_or_else(|| Error::Design("missing random-effect estimates for subject".into()))?;
        Ok(eval_params(&self.spec, &self.theta, effects, bundle, obs))
    }

    /// Predicted quantile of order `gamma` for one observation.
    pub fn predicted_quantile(
        &self,
        bundle: &DesignBundle,
        obs: usize,
        gamma: f64,
    ) -> Result<f64> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile order must lie in (0,1), got {gamma}"
            )));
        }
        let p = self.params_at(bundle, obs)?;
        match self.spec.family {
            Family::AsymmetricLaplace => {
                let al = ALParams::new(p.mu, p.sigma, p.tau.expect("AL family"))?;
                aldist::quantile(gamma, &al)
            }
            // Gaussian scale is the residual variance.
            Family::Gaussian => Ok(p.mu + p.sigma.sqrt() * math::normal_quantile(gamma)),
        }
    }

    /// Predicted current value for one observation.
    pub fn predict_value(
        &self,
        bundle: &DesignBundle,
        obs: usize,
        kind: PredictKind,
    ) -> Result<f64> {
        let p = self.params_at(bundle, obs)?;
        Ok(match self.spec.family {
            Family::Gaussian => p.mu,
            Family::AsymmetricLaplace => {
                let al = ALParams::new(p.mu, p.sigma, p.tau.expect("AL family"))?;
                match kind {
                    PredictKind::Mode => p.mu,
                    PredictKind::Mean => aldist::mean(&al),
                    PredictKind::Median => aldist::quantile(0.5, &al)?,
                }
            }
        })
    }
}

/// Fraction of subject `i`'s observations strictly below the predicted
/// `gamma`-quantile trajectory.
pub fn gamma_hat(
    fit: &FittedModel,
    bundle: &DesignBundle,
    subject: usize,
    gamma: f64,
) -> Result<f64> {
    let (lo, hi) = bundle.obs_ranges[subject];
    let mut below = 0usize;
    for obs in lo..hi {
        let q = fit.predicted_quantile(bundle, obs, gamma)?;
        if bundle.y[obs] < q {
            below += 1;
        }
    }
    Ok(below as f64 / (hi - lo) as f64)
}

/// Per-subject and global criterion values plus the inputs that produced
/// them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub model_label: String,
    pub orders: Vec<f64>,
    pub loss: Loss,
    pub subject_ids: Vec<String>,
    pub per_subject: Vec<f64>,
    pub global: f64,
}

impl CriterionReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "subject,criterion")?;
        for (id, c) in self.subject_ids.iter().zip(&self.per_subject) {
            writeln!(w, "{id},{}", fmt_g17(*c))?;
        }
        writeln!(w, "__global__,{}", fmt_g17(self.global))?;
        Ok(())
    }
}

/// Criterion values from precomputed `gamma_hat` tables:
/// `gamma_hats[i][k]` is subject `i`'s coverage for order `set[k]`.
/// Returns per-subject values and their mean.
pub fn criterion_values(
    gamma_hats: &[Vec<f64>],
    set: &QuantileSet,
    loss: Loss,
) -> (Vec<f64>, f64) {
    let per_subject: Vec<f64> = gamma_hats
        .iter()
        .map(|row| {
            row.iter()
                .zip(set.orders())
                .map(|(gh, g)| loss.apply(gh - g))
                .sum::<f64>()
                / set.orders().len() as f64
        })
        .collect();
    let global = math::mean(&per_subject);
    (per_subject, global)
}

/// Evaluates the selection criterion of a fitted model over a dataset.
pub fn criterion(
    fit: &FittedModel,
    dataset: &LongitudinalDataset,
    set: &QuantileSet,
    loss: Loss,
) -> Result<CriterionReport> {
    let bundle = build_design(dataset, &fit.spec)?;
    if fit.effects.len() != bundle.n_subjects() {
        return Err(Error::Design(format!(
            "fit carries {} subjects of random effects, dataset has {}",
            fit.effects.len(),
            bundle.n_subjects()
        )));
    }
    let mut gamma_hats = Vec::with_capacity(bundle.n_subjects());
    for i in 0..bundle.n_subjects() {
        let mut row = Vec::with_capacity(set.orders().len());
        for &g in set.orders() {
            row.push(gamma_hat(fit, &bundle, i, g)?);
        }
        gamma_hats.push(row);
    }
    let (per_subject, global) = criterion_values(&gamma_hats, set, loss);
    Ok(CriterionReport {
        model_label: fit.spec.kind().label().to_string(),
        orders: set.orders().to_vec(),
        loss,
        subject_ids: bundle.subject_ids.clone(),
        per_subject,
        global,
    })
}

/// MSE and MAE of the chosen current-value prediction over all
/// observations.
pub fn predictive_errors(
    fit: &FittedModel,
    dataset: &LongitudinalDataset,
    kind: PredictKind,
) -> Result<(f64, f64)> {
    let bundle = build_design(dataset, &fit.spec)?;
    let n = bundle.n_obs();
    let mut se = 0.0;
    let mut ae = 0.0;
    for obs in 0..n {
        let pred = fit.predict_value(&bundle, obs, kind)?;
        let e = bundle.y[obs] - pred;
        se += e * e;
        ae += e.abs();
    }
    Ok((se / n as f64, ae / n as f64))
}

/// One row of a per-subject quantile-trajectory table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub subject: String,
    pub time: f64,
    pub gamma: f64,
    pub value: f64,
}

/// Predicted quantile trajectories for every subject, observation time
/// and order in `set`.
pub fn quantile_trajectories(
    fit: &FittedModel,
    dataset: &LongitudinalDataset,
    set: &QuantileSet,
) -> Result<Vec<TrajectoryRow>> {
    let bundle = build_design(dataset, &fit.spec)?;
    let mut rows = Vec::new();
    for i in 0..bundle.n_subjects() {
        let (lo, hi) = bundle.obs_ranges[i];
        for obs in lo..hi {
            for &g in set.orders() {
                rows.push(TrajectoryRow {
                    subject: bundle.subject_ids[i].clone(),
                    time: bundle.times[obs],
                    gamma: g,
                    value: fit.predicted_quantile(&bundle, obs, g)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_trajectories_csv<W: Write>(mut w: W, rows: &[TrajectoryRow]) -> Result<()> {
    writeln!(w, "subject,time,gamma,value")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.subject,
            fmt_g17(r.time),
            fmt_g17(r.gamma),
            fmt_g17(r.value)
        )?;
    }
    Ok(())
}

/// One row of a fitted conditional density/CDF grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub subject: String,
    pub time: f64,
    pub y: f64,
    pub pdf: f64,
    pub cdf: f64,
}

/// Fitted conditional density and CDF values on a regular response grid,
/// for every observation time of one subject (AL families only; the grid
/// uses the closed-form density and CDF).
pub fn distribution_grid(
    fit: &FittedModel,
    dataset: &LongitudinalDataset,
    subject: usize,
    n_points: usize,
) -> Result<Vec<GridRow>> {
    if fit.spec.family != Family::AsymmetricLaplace {
        return Err(Error::InvalidSpec(
            "distribution grids use the closed-form AL density".into(),
        ));
    }
    let bundle = build_design(dataset, &fit.spec)?;
    if subject >= bundle.n_subjects() {
        return Err(Error::Design(format!("no subject index {subject}")));
    }
    let (lo, hi) = bundle.obs_ranges[subject];
    let y_min = bundle.y[lo..hi].iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = bundle.y[lo..hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.5 * (y_max - y_min).max(1.0);
    let (grid_lo, grid_hi) = (y_min - pad, y_max + pad);
    let step = (grid_hi - grid_lo) / (n_points.max(2) - 1) as f64;
    let mut rows = Vec::new();
    for obs in lo..hi {
        let p = fit.params_at(&bundle, obs)?;
        let al = ALParams::new(p.mu, p.sigma, p.tau.expect("AL family"))?;
        for k in 0..n_points.max(2) {
            let v = grid_lo + k as f64 * step;
            rows.push(GridRow {
                subject: bundle.subject_ids[subject].clone(),
                time: bundle.times[obs],
                y: v,
                pdf: aldist::pdf(v, &al),
                cdf: aldist::cdf(v, &al),
            });
        }
    }
    Ok(rows)
}

pub fn write_grid_csv<W: Write>(mut w: W, rows: &[GridRow]) -> Result<()> {
    writeln!(w, "subject,time,y,pdf,cdf")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.subject,
            fmt_g17(r.time),
            fmt_g17(r.y),
            fmt_g17(r.pdf),
            fmt_g17(r.cdf)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;
    use crate::modelspec::{PredictorSpec, SkewnessSpec, Term};
    use nalgebra::{DMatrix, DVector};

    fn dataset(y_per_subject: &[Vec<f64>]) -> LongitudinalDataset {
        let subjects = y_per_subject
            .iter()
            .enumerate()
            .map(|(i, y)| SubjectRecord {
                id: format!("s{i}"),
                covariates: vec![],
                times: (0..y.len()).map(|j| j as f64).collect(),
                y: y.clone(),
            })
            .collect();
        LongitudinalDataset::new(vec![], subjects).unwrap()
    }

    fn lslqmm_fit(mu: f64, sigma: f64, tau: f64, n_subjects: usize) -> FittedModel {
        let spec = ModelSpec::new(
            Family::AsymmetricLaplace,
            PredictorSpec::new(vec![Term::Intercept], vec![]),
            PredictorSpec::new(vec![Term::Intercept], vec![]),
            Some(SkewnessSpec::Fixed(tau)),
        )
        .unwrap();
        let mut theta = ParameterVector::zeros_for(&spec);
        theta.beta = DVector::from_element(1, mu);
        theta.xi = DVector::from_element(1, sigma.ln());
        FittedModel {
            effects: (0..n_subjects).map(|_| SubjectEffects::zeros(&spec)).collect(),
            spec,
            theta,
        }
    }

    fn gaussian_fit(mu: f64, var: f64, n_subjects: usize) -> FittedModel {
        let spec = ModelSpec::new(
            Family::Gaussian,
            PredictorSpec::new(vec![Term::Intercept], vec![]),
            PredictorSpec::new(vec![Term::Intercept], vec![]),
            None,
        )
        .unwrap();
        let mut theta = ParameterVector::zeros_for(&spec);
        theta.beta = DVector::from_element(1, mu);
        theta.xi = DVector::from_element(1, var.ln());
        FittedModel {
            effects: (0..n_subjects).map(|_| SubjectEffects::zeros(&spec)).collect(),
            spec,
            theta,
        }
    }

    #[test]
    fn quantile_set_validates() {
        assert!(QuantileSet::new(vec![]).is_err());
        assert!(QuantileSet::new(vec![0.5, 0.5]).is_err());
        assert!(QuantileSet::new(vec![0.0, 0.5]).is_err());
        assert_eq!(QuantileSet::deciles().orders().len(), 9);
        assert_eq!(QuantileSet::quartiles().orders(), &[0.25, 0.5, 0.75]);
        assert_eq!(QuantileSet::outer_deciles().orders(), &[0.1, 0.5, 0.9]);
    }

    #[test]
    fn predicted_quantile_special_cases() {
        let ds = dataset(&[vec![1.0, 2.0]]);
        let fit = lslqmm_fit(3.0, 0.5, 0.5, 1);
        let bundle = build_design(&ds, &fit.spec).unwrap();
        // Order equal to the skewness gives the location back.
        let q = fit.predicted_quantile(&bundle, 0, 0.5).unwrap();
        assert!((q - 3.0).abs() < 1e-12);
        // tau = 0.5, gamma = 0.9, sigma = 0.5: mu + 0.5 * (-2 ln 0.2).
        let q9 = fit.predicted_quantile(&bundle, 0, 0.9).unwrap();
        assert!((q9 - (3.0 + 0.5 * (-2.0 * 0.2f64.ln()))).abs() < 1e-12);
        // Gaussian median is the location.
        let g = gaussian_fit(4.0, 2.0, 1);
        let bundle_g = build_design(&ds, &g.spec).unwrap();
        assert!((g.predicted_quantile(&bundle_g, 0, 0.5).unwrap() - 4.0).abs() < 1e-12);
        assert!(fit.predicted_quantile(&bundle, 0, 0.0).is_err());
    }

    #[test]
    fn gamma_hat_counts_strictly_below() {
        // All observations under a very high trajectory.
        let ds = dataset(&[vec![0.0, 1.0, 2.0]]);
        let fit = lslqmm_fit(100.0, 1.0, 0.5, 1);
        let bundle = build_design(&ds, &fit.spec).unwrap();
        assert_eq!(gamma_hat(&fit, &bundle, 0, 0.5).unwrap(), 1.0);
        // Exact ties count as not-below: y = mu at gamma = tau.
        let ds_tie = dataset(&[vec![3.0, 3.0]]);
        let fit_tie = lslqmm_fit(3.0, 1.0, 0.5, 1);
        let bundle_tie = build_design(&ds_tie, &fit_tie.spec).unwrap();
        assert_eq!(gamma_hat(&fit_tie, &bundle_tie, 0, 0.5).unwrap(), 0.0);
        // n_i = 10 makes gamma_hat a multiple of 0.1.
        let ds10 = dataset(&[(0..10).map(|k| k as f64).collect()]);
        let fit10 = lslqmm_fit(4.5, 1.0, 0.5, 1);
        let bundle10 = build_design(&ds10, &fit10.spec).unwrap();
        let gh = gamma_hat(&fit10, &bundle10, 0, 0.5).unwrap();
        assert!((gh * 10.0 - (gh * 10.0).round()).abs() < 1e-12);
    }

    #[test]
    fn criterion_hand_arithmetic() {
        let set = QuantileSet::quartiles();
        let (per, global) = criterion_values(&[vec![0.30, 0.50, 0.70]], &set, Loss::Absolute);
        assert!((per[0] - 0.1 / 3.0).abs() < 1e-12);
        assert!((global - 0.1 / 3.0).abs() < 1e-12);
        let (_, zero) = criterion_values(&[vec![0.25, 0.5, 0.75]], &set, Loss::Quadratic);
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn criterion_invariant_to_subject_relabeling() {
        let ds = dataset(&[vec![1.0, 5.0, 2.0], vec![-3.0, 0.5]]);
        let fit = lslqmm_fit(1.5, 1.0, 0.5, 2);
        let set = QuantileSet::outer_deciles();
        let rep = criterion(&fit, &ds, &set, Loss::Absolute).unwrap();
        let mut subjects = ds.subjects().to_vec();
        subjects.reverse();
        let ds_rev = LongitudinalDataset::new(vec![], subjects).unwrap();
        let mut fit_rev = fit.clone();
        fit_rev.effects.reverse();
        let rep_rev = criterion(&fit_rev, &ds_rev, &set, Loss::Absolute).unwrap();
        assert!((rep.global - rep_rev.global).abs() < 1e-15);
    }

    #[test]
    fn empirical_quantiles_reach_discreteness_floor() {
        // Plugging per-subject empirical quantiles in as the predicted
        // trajectory pins each gamma_hat within 1/(2 n_i) of gamma.
        let n_i = 20usize;
        let y: Vec<f64> = (0..n_i).map(|k| (k as f64) * 0.37 - 2.0).collect();
        let set = QuantileSet::deciles();
        let ghs: Vec<f64> = set
            .orders()
            .iter()
            .map(|&g| {
                let q = math::empirical_quantile(&y, g);
                y.iter().filter(|&&v| v < q).count() as f64 / n_i as f64
            })
            .collect();
        let (per, _) = criterion_values(&[ghs], &set, Loss::Absolute);
        assert!(per[0] <= 1.0 / (2.0 * n_i as f64) + 1e-12, "floor = {}", per[0]);
    }

    #[test]
    fn predict_value_kinds() {
        let ds = dataset(&[vec![1.0]]);
        let g = gaussian_fit(4.0, 2.0, 1);
        let bg = build_design(&ds, &g.spec).unwrap();
        for kind in [PredictKind::Mode, PredictKind::Mean, PredictKind::Median] {
            assert_eq!(g.predict_value(&bg, 0, kind).unwrap(), 4.0);
        }
        let sym = lslqmm_fit(2.0, 1.0, 0.5, 1);
        let bs = build_design(&ds, &sym.spec).unwrap();
        assert!((sym.predict_value(&bs, 0, PredictKind::Mean).unwrap() - 2.0).abs() < 1e-12);
        assert!((sym.predict_value(&bs, 0, PredictKind::Median).unwrap() - 2.0).abs() < 1e-12);
        // Skewed case against the closed forms.
        let skew = lslqmm_fit(0.0, 1.0, 0.25, 1);
        let bk = build_design(&ds, &skew.spec).unwrap();
        assert!(
            (skew.predict_value(&bk, 0, PredictKind::Mean).unwrap() - 8.0 / 3.0).abs() < 1e-12
        );
        let med = skew.predict_value(&bk, 0, PredictKind::Median).unwrap();
        let al = ALParams::new(0.0, 1.0, 0.25).unwrap();
        assert_eq!(med, aldist::quantile(0.5, &al).unwrap());
        // Monte Carlo cross-check of the median.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut draws: Vec<f64> = (0..200_000)
            .map(|_| aldist::sample_inverse(&al, &mut rng))
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let emp = math::quantile_of_sorted(&draws, 0.5);
        assert!((emp - med).abs() < 0.02, "{emp} vs {med}");
    }

    #[test]
    fn predictive_errors_favor_matching_center() {
        let ds = dataset(&[vec![0.9, 1.0, 1.1, 1.05, 0.95]]);
        let close = lslqmm_fit(1.0, 0.2, 0.5, 1);
        let far = lslqmm_fit(3.0, 0.2, 0.5, 1);
        let (mse_close, mae_close) =
            predictive_errors(&close, &ds, PredictKind::Median).unwrap();
        let (mse_far, mae_far) = predictive_errors(&far, &ds, PredictKind::Median).unwrap();
        assert!(mse_close < mse_far);
        assert!(mae_close < mae_far);
    }

    #[test]
    fn trajectories_and_grids_have_expected_shapes() {
        let ds = dataset(&[vec![1.0, 2.0], vec![0.0]]);
        let fit = lslqmm_fit(1.0, 1.0, 0.5, 2);
        let set = QuantileSet::quartiles();
        let rows = quantile_trajectories(&fit, &ds, &set).unwrap();
        assert_eq!(rows.len(), 3 * 3);
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &rows).unwrap();
        assert!(buf.starts_with(b"subject,time,gamma,value\n"));

        let grid = distribution_grid(&fit, &ds, 0, 11).unwrap();
        assert_eq!(grid.len(), 2 * 11);
        // CDF values are monotone over the grid at fixed time.
        for window in grid[..11].windows(2) {
            assert!(window[1].cdf >= window[0].cdf);
        }
        let g = gaussian_fit(1.0, 1.0, 2);
        assert!(distribution_grid(&g, &ds, 0, 5).is_err());
    }

    #[test]
    fn from_sample_uses_posterior_means() {
        use crate::sampler::{ChainDraws, PosteriorSample};
        let spec = lslqmm_fit(0.0, 1.0, 0.5, 1).spec;
        let names = spec.parameter_names();
        let sample = PosteriorSample {
            names: names.clone(),
            chains: vec![ChainDraws {
                columns: vec![vec![1.0, 3.0], vec![-0.5, -0.7]],
            }],
            effect_means: vec![SubjectEffects {
                b: DVector::zeros(0),
                u: DVector::zeros(0),
                a: DVector::zeros(0),
            }],
            acceptance: vec![],
            spec,
            n_retained_per_chain: 2,
        };
        let fit = FittedModel::from_sample(&sample);
        assert!((fit.theta.beta[0] - 2.0).abs() < 1e-15);
        assert!((fit.theta.xi[0] + 0.6).abs() < 1e-15);
        let _ = DMatrix::<f64>::zeros(0, 0);
    }
}
