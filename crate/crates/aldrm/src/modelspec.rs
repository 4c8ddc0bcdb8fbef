//! Declarative model specification, design construction and linear
//! predictor evaluation for the four model families.
//!
//! A model assigns each distribution parameter a predictor built from a
//! small term vocabulary (`1`, `time`, `time2`, covariate names), split
//! into fixed terms and subject-specific random terms. Location uses the
//! identity link, scale the log link and skewness the logit link. The
//! plain-text spec format is:
//!
//! ```text
//! family = al                      # or: gaussian
//! location.fixed = 1, time, time2, x1, x2
//! location.random = 1, time, time2
//! scale.fixed = 1, time, x1
//! scale.random = 1, time
//! skewness = fixed:0.5             # fixed skewness order, or term lists:
//! # skewness.fixed = x1, x2
//! # skewness.random = 1, time
//! ```
//!
//! Family classification follows from the structure: an AL model with
//! fixed skewness and an intercept-only, random-free scale is an LQMM; a
//! fixed-skewness model with a modeled scale is an LSLQMM; modeled
//! skewness makes it an ALDRM; the Gaussian family (no skewness part,
//! scale is the residual variance) is the LSMM.

use nalgebra::{DMatrix, DVector};

use crate::data::LongitudinalDataset;
use crate::linalg;
use crate::math::logistic;
use crate::{Error, Result};

/// Linear predictors for scale and skewness are clamped to this magnitude
/// before the link is applied, so sigma never overflows and tau never
/// saturates to 0 or 1 in floating point.
pub const ETA_CLAMP: f64 = 15.0;

/// One design term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Intercept,
    Time,
    TimeSquared,
    Covariate(String),
}

impl Term {
    fn parse(raw: &str) -> Result<Self> {
        let s = raw.trim();
        match s {
            "1" => Ok(Term::Intercept),
            "time" => Ok(Term::Time),
            "time2" => Ok(Term::TimeSquared),
            "" => Err(Error::InvalidSpec("empty term".into())),
            name => {
                let ok = name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
                if ok && !name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                    Ok(Term::Covariate(name.to_string()))
                } else {
                    Err(Error::InvalidSpec(format!("bad term {name:?}")))
                }
            }
        }
    }

    fn text(&self) -> String {
        match self {
            Term::Intercept => "1".into(),
            Term::Time => "time".into(),
            Term::TimeSquared => "time2".into(),
            Term::Covariate(name) => name.clone(),
        }
    }
}

/// Fixed and random term lists for one distribution parameter. The random
/// list is independent of the fixed list; in particular a predictor may
/// carry a random intercept without a fixed one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PredictorSpec {
    pub fixed: Vec<Term>,
    pub random: Vec<Term>,
}

impl PredictorSpec {
    pub fn new(fixed: Vec<Term>, random: Vec<Term>) -> Self {
        Self { fixed, random }
    }

    pub fn intercept_only() -> Self {
        Self { fixed: vec![Term::Intercept], random: vec![] }
    }
}

/// Skewness component: either a fixed order in (0,1) or a full predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum SkewnessSpec {
    Fixed(f64),
    Modeled(PredictorSpec),
}

/// Response family. For the Gaussian family the scale parameter is the
/// residual variance (still log-linked).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    AsymmetricLaplace,
    Gaussian,
}

/// Named special cases of the model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Lqmm,
    Lslqmm,
    Aldrm,
    Lsmm,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Lqmm => "LQMM",
            ModelKind::Lslqmm => "LSLQMM",
            ModelKind::Aldrm => "ALDRM",
            ModelKind::Lsmm => "LSMM",
        }
    }
}

/// Complete model specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub location: PredictorSpec,
    pub scale: PredictorSpec,
    /// `None` exactly when the family is Gaussian.
    pub skewness: Option<SkewnessSpec>,
}

impl ModelSpec {
    pub fn new(
        family: Family,
        location: PredictorSpec,
        scale: PredictorSpec,
        skewness: Option<SkewnessSpec>,
    ) -> Result<Self> {
        match (family, &skewness) {
            (Family::Gaussian, Some(_)) => {
                return Err(Error::InvalidSpec(
                    "the Gaussian family has no skewness component".into(),
                ));
            }
            (Family::AsymmetricLaplace, None) => {
                return Err(Error::InvalidSpec(
                    "the AL family needs a skewness component (fixed or modeled)".into(),
                ));
            }
            (Family::AsymmetricLaplace, Some(SkewnessSpec::Fixed(t))) => {
                if !(*t > 0.0 && *t < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "fixed skewness must lie in (0,1), got {t}"
                    )));
                }
            }
            _ => {}
        }
        if location.fixed.is_empty() && location.random.is_empty() {
            return Err(Error::InvalidSpec("location predictor is empty".into()));
        }
        if scale.fixed.is_empty() && scale.random.is_empty() {
            return Err(Error::InvalidSpec("scale predictor is empty".into()));
        }
        if let Some(SkewnessSpec::Modeled(p)) = &skewness
            && p.fixed.is_empty()
            && p.random.is_empty()
        {
            return Err(Error::InvalidSpec("modeled skewness predictor is empty".into()));
        }
        Ok(Self { family, location, scale, skewness })
    }

    /// Which named family the structure corresponds to.
    pub fn kind(&self) -> ModelKind {
        match (self.family, &self.skewness) {
            (Family::Gaussian, _) => ModelKind::Lsmm,
            (Family::AsymmetricLaplace, Some(SkewnessSpec::Modeled(_))) => ModelKind::Aldrm,
            (Family::AsymmetricLaplace, _) => {
                if self.scale.fixed == vec![Term::Intercept] && self.scale.random.is_empty() {
                    ModelKind::Lqmm
                } else {
                    ModelKind::Lslqmm
                }
            }
        }
    }

    /// Parses the plain-text spec format. Errors carry the line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut family: Option<Family> = None;
        let mut loc_fixed: Option<Vec<Term>> = None;
        let mut loc_random: Option<Vec<Term>> = None;
        let mut sc_fixed: Option<Vec<Term>> = None;
        let mut sc_random: Option<Vec<Term>> = None;
        let mut sk_fixed: Option<Vec<Term>> = None;
        let mut sk_random: Option<Vec<Term>> = None;
        let mut sk_value: Option<f64> = None;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |message: String| Error::Parse { line: lineno, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            let parse_terms = |v: &str| -> Result<Vec<Term>> {
                if v.is_empty() {
                    return Ok(vec![]);
                }
                v.split(',')
                    .map(|t| Term::parse(t).map_err(|e| at(e.to_string())))
                    .collect()
            };
            let set = |slot: &mut Option<Vec<Term>>, v: &str| -> Result<()> {
                if slot.is_some() {
                    return Err(at(format!("duplicate key {key:?}")));
                }
                *slot = Some(parse_terms(v)?);
                Ok(())
            };
            match key {
                "family" => {
                    family = Some(match value {
                        "al" => Family::AsymmetricLaplace,
                        "gaussian" => Family::Gaussian,
                        other => return Err(at(format!("unknown family {other:?}"))),
                    });
                }
                "location.fixed" => set(&mut loc_fixed, value)?,
                "location.random" => set(&mut loc_random, value)?,
                "scale.fixed" => set(&mut sc_fixed, value)?,
                "scale.random" => set(&mut sc_random, value)?,
                "skewness.fixed" => set(&mut sk_fixed, value)?,
                "skewness.random" => set(&mut sk_random, value)?,
                "skewness" => {
                    let v = value
                        .strip_prefix("fixed:")
                        .ok_or_else(|| at(format!("expected skewness = fixed:<order>, got {value:?}")))?;
                    sk_value = Some(v.trim().parse::<f64>().map_err(|_| {
                        at(format!("cannot parse skewness order {v:?}"))
                    })?);
                }
                other => return Err(at(format!("unknown key {other:?}"))),
            }
        }

        let family = family.ok_or_else(|| Error::InvalidSpec("missing family line".into()))?;
        let location = PredictorSpec::new(
            loc_fixed.ok_or_else(|| Error::InvalidSpec("missing location.fixed".into()))?,
            loc_random.unwrap_or_default(),
        );
        let scale = PredictorSpec::new(
            sc_fixed.ok_or_else(|| Error::InvalidSpec("missing scale.fixed".into()))?,
            sc_random.unwrap_or_default(),
        );
        let skewness = match family {
            Family::Gaussian => {
                if sk_fixed.is_some() || sk_random.is_some() || sk_value.is_some() {
                    return Err(Error::InvalidSpec(
                        "the Gaussian family accepts no skewness lines".into(),
                    ));
                }
                None
            }
            Family::AsymmetricLaplace => {
                if let Some(t) = sk_value {
                    if sk_fixed.is_some() || sk_random.is_some() {
                        return Err(Error::InvalidSpec(
                            "skewness is either fixed or modeled, not both".into(),
                        ));
                    }
                    Some(SkewnessSpec::Fixed(t))
                } else {
                    Some(SkewnessSpec::Modeled(PredictorSpec::new(
                        sk_fixed.unwrap_or_default(),
                        sk_random.unwrap_or_default(),
                    )))
                }
            }
        };
        Self::new(family, location, scale, skewness)
    }

    /// Canonical text form; parses back to an equal spec.
    pub fn to_text(&self) -> String {
        let join = |terms: &[Term]| {
            terms.iter().map(Term::text).collect::<Vec<_>>().join(", ")
        };
        let mut out = String::new();
        out.push_str(match self.family {
            Family::AsymmetricLaplace => "family = al\n",
            Family::Gaussian => "family = gaussian\n",
        });
        out.push_str(&format!("location.fixed = {}\n", join(&self.location.fixed)));
        out.push_str(&format!("location.random = {}\n", join(&self.location.random)));
        out.push_str(&format!("scale.fixed = {}\n", join(&self.scale.fixed)));
        out.push_str(&format!("scale.random = {}\n", join(&self.scale.random)));
        match &self.skewness {
            None => {}
            Some(SkewnessSpec::Fixed(t)) => {
                // Rust's float Display is shortest-round-trip, so the
                // canonical text parses back to the same value.
                out.push_str(&format!("skewness = fixed:{t}\n"));
            }
            Some(SkewnessSpec::Modeled(p)) => {
                out.push_str(&format!("skewness.fixed = {}\n", join(&p.fixed)));
                out.push_str(&format!("skewness.random = {}\n", join(&p.random)));
            }
        }
        out
    }

    /// Canonical scalar parameter names in sampling order: location fixed
    /// effects, location covariance entries (diagonal first, then upper
    /// off-diagonals), then the scale and skewness parts in the same
    /// pattern.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let dims = self.dims();
        for i in 0..dims.p_location {
            names.push(format!("beta[{i}]"));
        }
        push_cov_names(&mut names, "Sigma_b", dims.q_location);
        for i in 0..dims.p_scale {
            names.push(format!("xi[{i}]"));
        }
        push_cov_names(&mut names, "Sigma_u", dims.q_scale);
        for i in 0..dims.p_skewness {
            names.push(format!("alpha[{i}]"));
        }
        push_cov_names(&mut names, "Sigma_a", dims.q_skewness);
        names
    }

    /// Widths of every design block.
    pub fn dims(&self) -> SpecDims {
        let (p_sk, q_sk) = match &self.skewness {
            Some(SkewnessSpec::Modeled(p)) => (p.fixed.len(), p.random.len()),
            _ => (0, 0),
        };
        SpecDims {
            p_location: self.location.fixed.len(),
            q_location: self.location.random.len(),
            p_scale: self.scale.fixed.len(),
            q_scale: self.scale.random.len(),
            p_skewness: p_sk,
            q_skewness: q_sk,
        }
    }
}

fn push_cov_names(names: &mut Vec<String>, stem: &str, q: usize) {
    for i in 1..=q {
        names.push(format!("{stem}[{i},{i}]"));
    }
    for i in 1..=q {
        for j in (i + 1)..=q {
            names.push(format!("{stem}[{i},{j}]"));
        }
    }
}

/// Design-block widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecDims {
    pub p_location: usize,
    pub q_location: usize,
    pub p_scale: usize,
    pub q_scale: usize,
    pub p_skewness: usize,
    pub q_skewness: usize,
}

/// Row-major matrix of per-observation term values.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    ncols: usize,
    nrows: usize,
}

impl DesignMatrix {
    fn build(
        dataset: &LongitudinalDataset,
        terms: &[Term],
        n_obs: usize,
    ) -> Result<Self> {
        // Resolve covariate columns once.
        let mut col_of_term = Vec::with_capacity(terms.len());
        for t in terms {
            if let Term::Covariate(name) = t {
                let idx = dataset.covariate_index(name).ok_or_else(|| {
                    Error::Design(format!("unknown covariate {name:?} in model spec"))
                })?;
                col_of_term.push(Some(idx));
            } else {
                col_of_term.push(None);
            }
        }
        let mut data = Vec::with_capacity(n_obs * terms.len());
        for subject in dataset.subjects() {
            for &t in &subject.times {
                for (term, col) in terms.iter().zip(&col_of_term) {
                    data.push(match term {
                        Term::Intercept => 1.0,
                        Term::Time => t,
                        Term::TimeSquared => t * t,
                        Term::Covariate(_) => subject.covariates[col.expect("resolved")],
                    });
                }
            }
        }
        Ok(Self { data, ncols: terms.len(), nrows: n_obs })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
}

/// Fixed and random design rows for one distribution parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    pub fixed: DesignMatrix,
    pub random: DesignMatrix,
}

/// Per-observation design rows for every distribution parameter, plus the
/// observation bookkeeping shared by the sampler and the selection
/// criterion. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBundle {
    pub location: DesignBlock,
    pub scale: DesignBlock,
    pub skewness: Option<DesignBlock>,
    pub y: Vec<f64>,
    pub times: Vec<f64>,
    /// Subject index of each observation row.
    pub subject_of_obs: Vec<usize>,
    /// Half-open row range per subject; rows of one subject are contiguous.
    pub obs_ranges: Vec<(usize, usize)>,
    pub subject_ids: Vec<String>,
}

impl DesignBundle {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.obs_ranges.len()
    }
}

/// Builds all design rows for `spec` over `dataset`. Row count equals the
/// total observation count; term order matches spec order.
pub fn build_design(dataset: &LongitudinalDataset, spec: &ModelSpec) -> Result<DesignBundle> {
    let n_obs = dataset.n_obs();
    let block = |p: &PredictorSpec| -> Result<DesignBlock> {
        Ok(DesignBlock {
            fixed: DesignMatrix::build(dataset, &p.fixed, n_obs)?,
            random: DesignMatrix::build(dataset, &p.random, n_obs)?,
        })
    };
    let skew_block = match &spec.skewness {
        Some(SkewnessSpec::Modeled(p)) => Some(block(p)?),
        _ => None,
    };
    let mut y = Vec::with_capacity(n_obs);
    let mut times = Vec::with_capacity(n_obs);
    let mut subject_of_obs = Vec::with_capacity(n_obs);
    let mut obs_ranges = Vec::with_capacity(dataset.n_subjects());
    let mut subject_ids = Vec::with_capacity(dataset.n_subjects());
    let mut cursor = 0;
    for (i, s) in dataset.subjects().iter().enumerate() {
        let start = cursor;
        for (t, v) in s.times.iter().zip(&s.y) {
            y.push(*v);
            times.push(*t);
            subject_of_obs.push(i);
            cursor += 1;
        }
        obs_ranges.push((start, cursor));
        subject_ids.push(s.id.clone());
    }
    Ok(DesignBundle {
        location: block(&spec.location)?,
        scale: block(&spec.scale)?,
        skewness: skew_block,
        y,
        times,
        subject_of_obs,
        obs_ranges,
        subject_ids,
    })
}

/// Model parameters: regression coefficients and random-effect covariance
/// matrices for each distribution parameter. Skewness entries are absent
/// for the Gaussian family and for fixed skewness.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub beta: DVector<f64>,
    pub sigma_b: DMatrix<f64>,
    pub xi: DVector<f64>,
    pub sigma_u: DMatrix<f64>,
    pub alpha: Option<DVector<f64>>,
    pub sigma_a: Option<DMatrix<f64>>,
}

impl ParameterVector {
    /// All-zero coefficients with identity covariances of the right sizes.
    pub fn zeros_for(spec: &ModelSpec) -> Self {
        let d = spec.dims();
        let skew = matches!(spec.skewness, Some(SkewnessSpec::Modeled(_)));
        Self {
            beta: DVector::zeros(d.p_location),
            sigma_b: DMatrix::identity(d.q_location, d.q_location),
            xi: DVector::zeros(d.p_scale),
            sigma_u: DMatrix::identity(d.q_scale, d.q_scale),
            alpha: skew.then(|| DVector::zeros(d.p_skewness)),
            sigma_a: skew.then(|| DMatrix::identity(d.q_skewness, d.q_skewness)),
        }
    }

    /// Checks dimensions against the spec and positive definiteness of
    /// every non-empty covariance block.
    pub fn validate_for(&self, spec: &ModelSpec) -> Result<()> {
        let d = spec.dims();
        let want_skew = matches!(spec.skewness, Some(SkewnessSpec::Modeled(_)));
        let check = |name: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(Error::InvalidSpec(format!(
                    "{name}: dimension {got} does not match spec ({want})"
                )));
            }
            Ok(())
        };
        check("beta", self.beta.len(), d.p_location)?;
        check("Sigma_b", self.sigma_b.nrows(), d.q_location)?;
        check("xi", self.xi.len(), d.p_scale)?;
        check("Sigma_u", self.sigma_u.nrows(), d.q_scale)?;
        check("alpha", self.alpha.as_ref().map_or(0, DVector::len), d.p_skewness)?;
        check(
            "Sigma_a",
            self.sigma_a.as_ref().map_or(0, DMatrix::nrows),
            d.q_skewness,
        )?;
        if want_skew != self.alpha.is_some() {
            return Err(Error::InvalidSpec(
                "skewness coefficients present/absent against spec".into(),
            ));
        }
        for (name, m) in [
            ("Sigma_b", &self.sigma_b),
            ("Sigma_u", &self.sigma_u),
        ] {
            if m.nrows() > 0 && !linalg::is_spd(m) {
                return Err(Error::InvalidParameter(format!("{name} is not SPD")));
            }
        }
        if let Some(m) = &self.sigma_a
            && m.nrows() > 0
            && !linalg::is_spd(m)
        {
            return Err(Error::InvalidParameter("Sigma_a is not SPD".into()));
        }
        Ok(())
    }

    /// Scalar AL scale for intercept-only scale predictors (the LQMM
    /// case): `exp(xi[0])`.
    pub fn sigma_scalar(&self) -> Option<f64> {
        (self.xi.len() == 1).then(|| self.xi[0].exp())
    }

    /// Flattens to the canonical scalar order of
    /// [`ModelSpec::parameter_names`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.beta.iter().copied());
        push_cov_values(&mut out, &self.sigma_b);
        out.extend(self.xi.iter().copied());
        push_cov_values(&mut out, &self.sigma_u);
        if let Some(a) = &self.alpha {
            out.extend(a.iter().copied());
        }
        if let Some(m) = &self.sigma_a {
            push_cov_values(&mut out, m);
        }
        out
    }
}

fn push_cov_values(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    let q = m.nrows();
    for i in 0..q {
        out.push(m[(i, i)]);
    }
    for i in 0..q {
        for j in (i + 1)..q {
            out.push(m[(i, j)]);
        }
    }
}

/// Subject-specific random effects for the three predictors. Components
/// are empty where the spec has no random terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEffects {
    pub b: DVector<f64>,
    pub u: DVector<f64>,
    pub a: DVector<f64>,
}

impl SubjectEffects {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let d = spec.dims();
        Self {
            b: DVector::zeros(d.q_location),
            u: DVector::zeros(d.q_scale),
            a: DVector::zeros(d.q_skewness),
        }
    }
}

/// Distribution parameters of one observation after link application. For
/// the Gaussian family `sigma` is the residual variance and `tau` is
/// `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsParams {
    pub mu: f64,
    pub sigma: f64,
    pub tau: Option<f64>,
}

fn dot(row: &[f64], v: &DVector<f64>) -> f64 {
    row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Evaluates (mu, sigma, tau) for observation `obs` under `theta` and the
/// subject's random effects. Scale and skewness linear predictors are
/// clamped to `ETA_CLAMP` before exp/logistic, so the output always
/// satisfies the distribution-parameter invariants for finite inputs.
pub fn eval_params(
    spec: &ModelSpec,
    theta: &ParameterVector,
    effects: &SubjectEffects,
    bundle: &DesignBundle,
    obs: usize,
) -> ObsParams {
    let mu = dot(bundle.location.fixed.row(obs), &theta.beta)
        + dot(bundle.location.random.row(obs), &effects.b);
    let eta_sigma = (dot(bundle.scale.fixed.row(obs), &theta.xi)
        + dot(bundle.scale.random.row(obs), &effects.u))
    .clamp(-ETA_CLAMP, ETA_CLAMP);
    let sigma = eta_sigma.exp();
    let tau = match (&spec.skewness, &bundle.skewness) {
        (Some(SkewnessSpec::Fixed(t)), _) => Some(*t),
        (Some(SkewnessSpec::Modeled(_)), Some(block)) => {
            let alpha = theta.alpha.as_ref().expect("validated spec");
            let eta = (dot(block.fixed.row(obs), alpha) + dot(block.random.row(obs), &effects.a))
                .clamp(-ETA_CLAMP, ETA_CLAMP);
            Some(logistic(eta))
        }
        _ => None,
    };
    ObsParams { mu, sigma, tau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;
    use proptest::prelude::*;

    fn dataset_two_covs() -> LongitudinalDataset {
        LongitudinalDataset::new(
            vec!["x1".into(), "x2".into()],
            vec![
                SubjectRecord {
                    id: "a".into(),
                    covariates: vec![0.7, 1.0],
                    times: vec![0.0, 2.0],
                    y: vec![1.0, 2.0],
                },
                SubjectRecord {
                    id: "b".into(),
                    covariates: vec![-0.4, 0.0],
                    times: vec![3.0],
                    y: vec![0.5],
                },
            ],
        )
        .unwrap()
    }

    fn aldrm_spec() -> ModelSpec {
        ModelSpec::new(
            Family::AsymmetricLaplace,
            PredictorSpec::new(
                vec![Term::Intercept, Term::Time],
                vec![Term::Intercept],
            ),
            PredictorSpec::new(vec![Term::Intercept], vec![]),
            Some(SkewnessSpec::Modeled(PredictorSpec::new(
                vec![Term::Covariate("x1".into())],
                vec![Term::Intercept],
            ))),
        )
        .unwrap()
    }

    #[test]
    fn design_rows_follow_term_order() {
        let ds = dataset_two_covs();
        let spec = ModelSpec::new(
            Family::AsymmetricLaplace,
            PredictorSpec::new(vec![Term::Intercept, Term::Time], vec![]),
            PredictorSpec::intercept_only(),
            Some(SkewnessSpec::Fixed(0.5)),
        )
        .unwrap();
        let bundle = build_design(&ds, &spec).unwrap();
        assert_eq!(bundle.n_obs(), 3);
        assert_eq!(bundle.location.fixed.row(0), &[1.0, 0.0]);
        assert_eq!(bundle.location.fixed.row(1), &[1.0, 2.0]);
        assert_eq!(bundle.location.fixed.row(2), &[1.0, 3.0]);
    }

    #[test]
    fn time_squared_column() {
        let ds = dataset_two_covs();
        let spec = ModelSpec::new(
            Family::AsymmetricLaplace,
            PredictorSpec::new(vec![Term::TimeSquared], vec![]),
            PredictorSpec::intercept_only(),
            Some(SkewnessSpec::Fixed(0.5)),
        )
        .unwrap();
        let bundle = build_design(&ds, &spec).unwrap();
        assert_eq!(bundle.location.fixed.row(2), &[9.0]);
    }

    #[test]
    fn application_spec_widths() {
        // Location: intercept, t, t^2, age, sex (random: intercept, t, t^2);
        // scale: intercept, t, age (random: intercept, t);
        // skewness: age, sex (random: intercept, t).
        let ds = LongitudinalDataset::new(
            vec!["age".into(), "sex".into()],
            vec![SubjectRecord {
                id: "p1".into(),
                covariates: vec![0.3, 1.0],
                times: vec![0.0, 1.0],
                y: vec![12.0, 13.0],
            }],
        )
        .unwrap();
        let spec = ModelSpec::new(
            Family::AsymmetricLaplace,
            PredictorSpec::new(
                vec![
                    Term::Intercept,
                    Term::Time,
                    Term::TimeSquared,
                    Term::Covariate("age".into()),
                    Term::Covariate("sex".into()),
                ],
                vec![Term::Intercept, Term::Time, Term::TimeSquared],
            ),
            PredictorSpec::new(
                vec![Term::Intercept, Term::Time, Term::Covariate("age".into())],
                vec![Term::Intercept, Term::Time],
            ),
            Some(SkewnessSpec::Modeled(PredictorSpec::new(
                vec![Term::Covariate("age".into()), Term::Covariate("sex".into())],
                vec![Term::Intercept, Term::Time],
            ))),
        )
        .unwrap();
        let bundle = build_design(&ds, &spec).unwrap();
        assert_eq!(bundle.location.fixed.ncols(), 5);
        assert_eq!(bundle.location.random.ncols(), 3);
        assert_eq!(bundle.scale.fixed.ncols(), 3);
        assert_eq!(bundle.scale.random.ncols(), 2);
        let skew = bundle.skewness.as_ref().unwrap();
        assert_eq!(skew.fixed.ncols(), 2);
        assert_eq!(skew.random.ncols(), 2);
        assert_eq!(spec.kind(), ModelKind::Aldrm);
    }

    #[test]
    fn unknown_covariate_is_an_error() {
        let ds = dataset_two_covs();
        let spec = ModelSpec::new(
            Family::AsymmetricLaplace,
            PredictorSpec::new(vec![Term::Covariate("nope".into())], vec![]),
            PredictorSpec::intercept_only(),
            Some(SkewnessSpec::Fixed(0.5)),
        )
        .unwrap();
        assert!(matches!(build_design(&ds, &spec), Err(Error::Design(_))));
    }

    #[test]
    fn eval_params_links() {
        let ds = dataset_two_covs();
        let spec = aldrm_spec();
        let bundle = build_design(&ds, &spec).unwrap();
        let theta = ParameterVector::zeros_for(&spec);
        let effects = SubjectEffects::zeros(&spec);
        let p = eval_params(&spec, &theta, &effects, &bundle, 0);
        assert_eq!(p.mu, 0.0);
        assert_eq!(p.sigma, 1.0);
        assert_eq!(p.tau, Some(0.5 * 2.0 * 0.7 / (0.7 + 0.7))); // logistic(0) with x1 weight 0
        let mut theta2 = theta.clone();
        theta2.xi[0] = -0.6;
        let p2 = eval_params(&spec, &theta2, &effects, &bundle, 0);
        assert!((p2.sigma - (-0.6f64).exp()).abs() < 1e-15);
        let mut theta3 = theta;
        theta3.alpha.as_mut().unwrap()[0] = 0.13 / 0.7; // x1 = 0.7 for subject a
        let p3 = eval_params(&spec, &theta3, &effects, &bundle, 0);
        assert!((p3.tau.unwrap() - logistic(0.13)).abs() < 1e-12);
        assert!((p3.tau.unwrap() - 0.5325).abs() < 1e-4);
    }

    #[test]
    fn permuting_subjects_permutes_blocks() {
        let ds = dataset_two_covs();
        let spec = aldrm_spec();
        let bundle = build_design(&ds, &spec).unwrap();
        let mut subjects = ds.subjects().to_vec();
        subjects.reverse();
        let ds2 =
            LongitudinalDataset::new(ds.covariate_names().to_vec(), subjects).unwrap();
        let bundle2 = build_design(&ds2, &spec).unwrap();
        // subject b is first now: its single row must equal its old row
        assert_eq!(bundle2.location.fixed.row(0), bundle.location.fixed.row(2));
        assert_eq!(bundle2.y[0], bundle.y[2]);
        assert_eq!(bundle2.location.fixed.row(1), bundle.location.fixed.row(0));
    }

    #[test]
    fn kind_classification() {
        let mut lqmm = aldrm_spec();
        lqmm.skewness = Some(SkewnessSpec::Fixed(0.5));
        assert_eq!(lqmm.kind(), ModelKind::Lqmm);
        let mut lslqmm = lqmm.clone();
        lslqmm.scale = PredictorSpec::new(vec![Term::Intercept, Term::Time], vec![]);
        assert_eq!(lslqmm.kind(), ModelKind::Lslqmm);
        assert_eq!(aldrm_spec().kind(), ModelKind::Aldrm);
        let lsmm = ModelSpec::new(
            Family::Gaussian,
            PredictorSpec::intercept_only(),
            PredictorSpec::intercept_only(),
            None,
        )
        .unwrap();
        assert_eq!(lsmm.kind(), ModelKind::Lsmm);
    }

    #[test]
    fn spec_text_round_trips() {
        let spec = aldrm_spec();
        let text = spec.to_text();
        let back = ModelSpec::parse(&text).unwrap();
        assert_eq!(spec, back);

        let fixed_tau = "family = al\nlocation.fixed = 1, time\nscale.fixed = 1\nskewness = fixed:0.25\n";
        let parsed = ModelSpec::parse(fixed_tau).unwrap();
        assert_eq!(parsed.skewness, Some(SkewnessSpec::Fixed(0.25)));
        assert_eq!(ModelSpec::parse(&parsed.to_text()).unwrap(), parsed);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "family = al\nlocation.fixed = 1\nscale.fixed = 1\nwhat = 3\nskewness = fixed:0.5\n";
        match ModelSpec::parse(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(ModelSpec::parse("location.fixed = 1\nscale.fixed = 1\n").is_err());
    }

    #[test]
    fn gaussian_rejects_skewness() {
        assert!(
            ModelSpec::parse("family = gaussian\nlocation.fixed = 1\nscale.fixed = 1\nskewness = fixed:0.5\n")
                .is_err()
        );
    }

    #[test]
    fn names_follow_canonical_order() {
        let spec = aldrm_spec();
        let names = spec.parameter_names();
        assert_eq!(
            names,
            vec![
                "beta[0]", "beta[1]", "Sigma_b[1,1]", "xi[0]", "alpha[0]", "Sigma_a[1,1]"
            ]
        );
        let flat = ParameterVector::zeros_for(&spec).flatten();
        assert_eq!(flat.len(), names.len());
    }

    proptest! {
        #[test]
        fn eval_params_respects_invariants(
            beta0 in -1e6..1e6f64,
            xi0 in -1e3..1e3f64,
            alpha0 in -1e3..1e3f64,
            u0 in -50.0..50.0f64,
        ) {
            let ds = dataset_two_covs();
            let spec = aldrm_spec();
            let bundle = build_design(&ds, &spec).unwrap();
            let mut theta = ParameterVector::zeros_for(&spec);
            theta.beta[0] = beta0;
            theta.xi[0] = xi0;
            theta.alpha.as_mut().unwrap()[0] = alpha0;
            let mut eff = SubjectEffects::zeros(&spec);
            eff.a[0] = u0;
            for obs in 0..bundle.n_obs() {
                let p = eval_params(&spec, &theta, &eff, &bundle, obs);
                prop_assert!(p.sigma > 0.0 && p.sigma.is_finite());
                let t = p.tau.unwrap();
                prop_assert!(t > 0.0 && t < 1.0);
                prop_assert!(p.mu.is_finite());
            }
        }
    }
}
