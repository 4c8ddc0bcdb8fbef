//! Chain state, caches and the update blocks of one sweep.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::gig::sample_gig_half;
use super::{derive_seed, BlockAcceptance, SamplerConfig};
use crate::linalg;
use crate::math::logistic;
use crate::modelspec::{
    DesignBundle, Family, ModelSpec, ParameterVector, SkewnessSpec, SpecDims, SubjectEffects,
    ETA_CLAMP,
};
use crate::{Error, Result};

const OLS_RIDGE: f64 = 1e-8;

/// Robbins-Monro targets for random-walk blocks.
fn rm_target(dim: usize) -> f64 {
    if dim <= 1 { 0.44 } else { 0.25 }
}

#[derive(Debug, Clone, Default)]
struct MhBlock {
    log_step: f64,
    adapt_count: u64,
    proposals: u64,
    accepts: u64,
}

impl MhBlock {
    fn new(step: f64) -> Self {
        Self { log_step: step.ln(), ..Self::default() }
    }

    fn step(&self) -> f64 {
        self.log_step.exp()
    }

    fn adapt(&mut self, acc_prob: f64, target: f64) {
        self.adapt_count += 1;
        let gamma = (self.adapt_count as f64).powf(-0.6);
        self.log_step = (self.log_step + gamma * (acc_prob - target)).clamp(-15.0, 5.0);
    }

    fn record(&mut self, accepted: bool) {
        self.proposals += 1;
        self.accepts += u64::from(accepted);
    }

    fn rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepts as f64 / self.proposals as f64)
    }
}

pub(crate) struct ChainOutput {
    pub columns: Vec<Vec<f64>>,
    pub effect_sums: Vec<SubjectEffects>,
    pub acceptance: BlockAcceptance,
    pub retained: usize,
}

/// One chain of the Metropolis-within-Gibbs sampler. Owns its generator
/// and a private copy of the response so validation harnesses can swap
/// observations; all design rows are shared immutably.
pub(crate) struct Sampler<'a> {
    spec: &'a ModelSpec,
    bundle: &'a DesignBundle,
    cfg: &'a SamplerConfig,
    chain: usize,
    pub(crate) rng: ChaCha8Rng,

    gaussian: bool,
    has_skew_block: bool,
    d: SpecDims,
    n_obs: usize,
    n_subjects: usize,

    y: Vec<f64>,
    theta: ParameterVector,
    effects: Vec<SubjectEffects>,
    w: Vec<f64>,

    // Per-observation caches of the linear predictors and links.
    loc_fixed: Vec<f64>,
    loc_rand: Vec<f64>,
    sc_fixed: Vec<f64>,
    sc_rand: Vec<f64>,
    sigma: Vec<f64>,
    sk_fixed: Vec<f64>,
    sk_rand: Vec<f64>,
    tau: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,

    // Covariance factorizations refreshed after each covariance update.
    sigma_b_chol: Option<Cholesky<f64, Dyn>>,
    sigma_u_chol: Option<Cholesky<f64, Dyn>>,
    sigma_a_chol: Option<Cholesky<f64, Dyn>>,
    sigma_b_inv: DMatrix<f64>,
    sigma_u_inv: DMatrix<f64>,
    sigma_a_inv: DMatrix<f64>,

    mh_xi: MhBlock,
    mh_u: Vec<MhBlock>,
    mh_alpha: MhBlock,
    mh_a: Vec<MhBlock>,

    iteration: usize,
    // Scratch buffers reused across sweeps.
    scratch_eta: Vec<f64>,
    scratch_sigma: Vec<f64>,
    scratch_tau: Vec<f64>,
    scratch_c1: Vec<f64>,
    scratch_c2: Vec<f64>,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(
        spec: &'a ModelSpec,
        bundle: &'a DesignBundle,
        cfg: &'a SamplerConfig,
        chain: usize,
    ) -> Result<Self> {
        let d = spec.dims();
        let n_obs = bundle.n_obs();
        let n_subjects = bundle.n_subjects();
        let gaussian = spec.family == Family::Gaussian;
        let has_skew_block = matches!(spec.skewness, Some(SkewnessSpec::Modeled(_)));
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, chain as u64));

        let mut s = Self {
            spec,
            bundle,
            cfg,
            chain,
            rng,
            gaussian,
            has_skew_block,
            d,
            n_obs,
            n_subjects,
            y: bundle.y.clone(),
            theta: ParameterVector::zeros_for(spec),
            effects: (0..n_subjects).map(|_| SubjectEffects::zeros(spec)).collect(),
            w: Vec::new(),
            loc_fixed: vec![0.0; n_obs],
            loc_rand: vec![0.0; n_obs],
            sc_fixed: vec![0.0; n_obs],
            sc_rand: vec![0.0; n_obs],
            sigma: vec![1.0; n_obs],
            sk_fixed: vec![0.0; n_obs],
            sk_rand: vec![0.0; n_obs],
            tau: vec![0.5; n_obs],
            c1: vec![0.0; n_obs],
            c2: vec![8.0; n_obs],
            sigma_b_chol: None,
            sigma_u_chol: None,
            sigma_a_chol: None,
            sigma_b_inv: DMatrix::zeros(d.q_location, d.q_location),
            sigma_u_inv: DMatrix::zeros(d.q_scale, d.q_scale),
            sigma_a_inv: DMatrix::zeros(d.q_skewness, d.q_skewness),
            mh_xi: MhBlock::new(cfg.mh_step_init),
            mh_u: (0..n_subjects).map(|_| MhBlock::new(cfg.mh_step_init)).collect(),
            mh_alpha: MhBlock::new(cfg.mh_step_init),
            mh_a: (0..n_subjects).map(|_| MhBlock::new(cfg.mh_step_init)).collect(),
            iteration: 0,
            scratch_eta: vec![0.0; n_obs],
            scratch_sigma: vec![0.0; n_obs],
            scratch_tau: vec![0.0; n_obs],
            scratch_c1: vec![0.0; n_obs],
            scratch_c2: vec![0.0; n_obs],
        };
        s.initialize()?;
        Ok(s)
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Sampler {
            chain: self.chain,
            iteration: self.iteration,
            message: message.into(),
        }
    }

    fn initialize(&mut self) -> Result<()> {
        let w_init = if let Some(init) = &self.cfg.init {
            init.theta.validate_for(self.spec)?;
            self.theta = init.theta.clone();
            if let Some(effects) = &init.effects {
                if effects.len() != self.n_subjects {
                    return Err(self.fail(format!(
                        "init supplies {} subject effects, dataset has {}",
                        effects.len(),
                        self.n_subjects
                    )));
                }
                self.effects = effects.clone();
            }
            init.w
        } else {
            Some(self.initialize_least_squares())
        };

        self.refresh_location_fixed();
        self.refresh_location_random_all();
        self.refresh_scale_fixed();
        self.refresh_scale_random_all();
        self.refresh_skew_all();
        self.refresh_cov_factors()?;
        if !self.gaussian {
            let w0 = w_init.unwrap_or_else(|| crate::math::mean(&self.sigma));
            self.w = vec![w0.max(1e-8); self.n_obs];
        }

        let lp = self.log_posterior();
        if !lp.is_finite() {
            return Err(self.fail("non-finite log-posterior at initialization"));
        }
        Ok(())
    }

    /// Ordinary least squares of y on the fixed location design, log
    /// residual scale for the scale intercept, zeros elsewhere,
    /// covariances at 0.1 I. Returns the residual-scale estimate that
    /// seeds the latent weights.
    fn initialize_least_squares(&mut self) -> f64 {
        let p = self.d.p_location;
        if p > 0 {
            let mut a = DMatrix::<f64>::zeros(p, p);
            let mut rhs = DVector::<f64>::zeros(p);
            for o in 0..self.n_obs {
                let row = self.bundle.location.fixed.row(o);
                for i in 0..p {
                    rhs[i] += row[i] * self.y[o];
                    for j in i..p {
                        a[(i, j)] += row[i] * row[j];
                    }
                }
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    a[(j, i)] = a[(i, j)];
                }
            }
            let mut ridge = OLS_RIDGE;
            let beta = loop {
                let mut am = a.clone();
                for i in 0..p {
                    am[(i, i)] += ridge;
                }
                if let Some(chol) = Cholesky::new(am) {
                    break chol.solve(&rhs);
                }
                ridge *= 100.0;
                if ridge > 1.0 {
                    break DVector::zeros(p);
                }
            };
            self.theta.beta = beta;
        }
        let mut resid = Vec::with_capacity(self.n_obs);
        for o in 0..self.n_obs {
            let fit = dot(self.bundle.location.fixed.row(o), &self.theta.beta);
            resid.push(self.y[o] - fit);
        }
        let var_r = crate::math::sample_variance(&resid);
        let sigma_hat = if self.gaussian {
            var_r.max(1e-8)
        } else {
            // AL with tau = 1/2 has variance 8 sigma^2.
            (var_r.sqrt() / 8.0f64.sqrt()).max(1e-4)
        };
        if let Some(k) = self
            .spec
            .scale
            .fixed
            .iter()
            .position(|t| matches!(t, crate::modelspec::Term::Intercept))
        {
            self.theta.xi[k] = sigma_hat.ln();
        }
        let fill = |m: &mut DMatrix<f64>| {
            let q = m.nrows();
            *m = DMatrix::identity(q, q) * 0.1;
        };
        fill(&mut self.theta.sigma_b);
        fill(&mut self.theta.sigma_u);
        if let Some(m) = self.theta.sigma_a.as_mut() {
            fill(m);
        }
        sigma_hat
    }

    // ----- cache refresh -------------------------------------------------

    fn refresh_location_fixed(&mut self) {
        for o in 0..self.n_obs {
            self.loc_fixed[o] = dot(self.bundle.location.fixed.row(o), &self.theta.beta);
        }
    }

    fn refresh_location_random_subject(&mut self, i: usize) {
        let (lo, hi) = self.bundle.obs_ranges[i];
        for o in lo..hi {
            self.loc_rand[o] = dot(self.bundle.location.random.row(o), &self.effects[i].b);
        }
    }

    fn refresh_location_random_all(&mut self) {
        for i in 0..self.n_subjects {
            self.refresh_location_random_subject(i);
        }
    }

    fn refresh_scale_fixed(&mut self) {
        for o in 0..self.n_obs {
            self.sc_fixed[o] = dot(self.bundle.scale.fixed.row(o), &self.theta.xi);
            self.sigma[o] = link_sigma(self.sc_fixed[o] + self.sc_rand[o]);
        }
    }

    fn refresh_scale_random_all(&mut self) {
        for i in 0..self.n_subjects {
            let (lo, hi) = self.bundle.obs_ranges[i];
            for o in lo..hi {
                self.sc_rand[o] = dot(self.bundle.scale.random.row(o), &self.effects[i].u);
                self.sigma[o] = link_sigma(self.sc_fixed[o] + self.sc_rand[o]);
            }
        }
    }

    fn refresh_skew_all(&mut self) {
        match (&self.spec.skewness, &self.bundle.skewness) {
            (Some(SkewnessSpec::Fixed(t)), _) => {
                let coeff = crate::aldist::MixtureCoefficients::from_tau(*t);
                for o in 0..self.n_obs {
                    self.tau[o] = *t;
                    self.c1[o] = coeff.c1;
                    self.c2[o] = coeff.c2;
                }
            }
            (Some(SkewnessSpec::Modeled(_)), Some(block)) => {
                let alpha = self.theta.alpha.as_ref().expect("validated");
                for o in 0..self.n_obs {
                    self.sk_fixed[o] = dot(block.fixed.row(o), alpha);
                }
                for i in 0..self.n_subjects {
                    let (lo, hi) = self.bundle.obs_ranges[i];
                    for o in lo..hi {
                        self.sk_rand[o] = dot(block.random.row(o), &self.effects[i].a);
                    }
                }
                for o in 0..self.n_obs {
                    let t = link_tau(self.sk_fixed[o] + self.sk_rand[o]);
                    self.tau[o] = t;
                    let denom = t * (1.0 - t);
                    self.c1[o] = (1.0 - 2.0 * t) / denom;
                    self.c2[o] = 2.0 / denom;
                }
            }
            _ => {}
        }
    }

    fn refresh_cov_factors(&mut self) -> Result<()> {
        let factor = |m: &DMatrix<f64>,
                      chain: usize,
                      iteration: usize|
         -> Result<(Option<Cholesky<f64, Dyn>>, DMatrix<f64>)> {
            if m.nrows() == 0 {
                return Ok((None, DMatrix::zeros(0, 0)));
            }
            let chol = Cholesky::new(m.clone()).ok_or(Error::Sampler {
                chain,
                iteration,
                message: "covariance matrix lost positive definiteness".into(),
            })?;
            let inv = chol.inverse();
            Ok((Some(chol), inv))
        };
        let (c, i) = factor(&self.theta.sigma_b, self.chain, self.iteration)?;
        self.sigma_b_chol = c;
        self.sigma_b_inv = i;
        let (c, i) = factor(&self.theta.sigma_u, self.chain, self.iteration)?;
        self.sigma_u_chol = c;
        self.sigma_u_inv = i;
        if let Some(m) = &self.theta.sigma_a {
            let (c, i) = factor(m, self.chain, self.iteration)?;
            self.sigma_a_chol = c;
            self.sigma_a_inv = i;
        }
        Ok(())
    }

    // ----- likelihood pieces ---------------------------------------------

    /// Scale-dependent part of the augmented log posterior for one
    /// observation (conditional normal plus exponential weight density for
    /// the AL family; plain normal for the Gaussian family).
    fn ll_scale_term(&self, o: usize, sigma: f64) -> f64 {
        if self.gaussian {
            let r = self.y[o] - self.loc_fixed[o] - self.loc_rand[o];
            -0.5 * sigma.ln() - r * r / (2.0 * sigma)
        } else {
            let r = self.y[o] - self.loc_fixed[o] - self.loc_rand[o] - self.c1[o] * self.w[o];
            -1.5 * sigma.ln() - r * r / (2.0 * self.c2[o] * sigma * self.w[o])
                - self.w[o] / sigma
        }
    }

    /// Skewness-dependent part (mixture coefficients in the conditional
    /// normal).
    fn ll_skew_term(&self, o: usize, c1: f64, c2: f64) -> f64 {
        let r = self.y[o] - self.loc_fixed[o] - self.loc_rand[o] - c1 * self.w[o];
        -0.5 * c2.ln() - r * r / (2.0 * c2 * self.sigma[o] * self.w[o])
    }

    /// Full augmented log posterior up to additive constants that do not
    /// depend on the state (the inverse-Wishart normalizers).
    pub(crate) fn log_posterior(&self) -> f64 {
        let mut lp = 0.0;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        for o in 0..self.n_obs {
            let mu = self.loc_fixed[o] + self.loc_rand[o];
            if self.gaussian {
                let v = self.sigma[o];
                let r = self.y[o] - mu;
                lp += -0.5 * (ln_2pi + v.ln()) - r * r / (2.0 * v);
            } else {
                let w = self.w[o];
                if w <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let v = self.c2[o] * self.sigma[o] * w;
                let r = self.y[o] - mu - self.c1[o] * w;
                lp += -0.5 * (ln_2pi + v.ln()) - r * r / (2.0 * v);
                lp += -self.sigma[o].ln() - w / self.sigma[o];
            }
        }
        for i in 0..self.n_subjects {
            if let Some(chol) = &self.sigma_b_chol {
                lp += linalg::log_mvn_zero_mean(&self.effects[i].b, chol);
            }
            if let Some(chol) = &self.sigma_u_chol {
                lp += linalg::log_mvn_zero_mean(&self.effects[i].u, chol);
            }
            if let Some(chol) = &self.sigma_a_chol {
                lp += linalg::log_mvn_zero_mean(&self.effects[i].a, chol);
            }
        }
        let pr = &self.cfg.priors;
        let norm_prior = |v: &DVector<f64>, var: f64| -> f64 {
            v.iter()
                .map(|x| -0.5 * (ln_2pi + var.ln()) - x * x / (2.0 * var))
                .sum()
        };
        lp += norm_prior(&self.theta.beta, pr.beta_var);
        lp += norm_prior(&self.theta.xi, pr.xi_var);
        if let Some(alpha) = &self.theta.alpha {
            lp += norm_prior(alpha, pr.alpha_var);
        }
        let iw_kernel = |m: &DMatrix<f64>, chol: &Option<Cholesky<f64, Dyn>>| -> f64 {
            let q = m.nrows();
            if q == 0 {
                return 0.0;
            }
            let chol = chol.as_ref().expect("factor kept in sync");
            let df = q as f64 + pr.iw_df_extra;
            let log_det: f64 = (0..q).map(|i| 2.0 * chol.l()[(i, i)].ln()).sum();
            let inv = chol.inverse();
            let trace: f64 = (0..q).map(|i| inv[(i, i)]).sum();
            -0.5 * (df + q as f64 + 1.0) * log_det - 0.5 * pr.iw_scale * trace
        };
        lp += iw_kernel(&self.theta.sigma_b, &self.sigma_b_chol);
        lp += iw_kernel(&self.theta.sigma_u, &self.sigma_u_chol);
        if let Some(m) = &self.theta.sigma_a {
            lp += iw_kernel(m, &self.sigma_a_chol);
        }
        lp
    }

    // ----- update blocks --------------------------------------------------

    fn update_weights(&mut self) {
        for o in 0..self.n_obs {
            let mu = self.loc_fixed[o] + self.loc_rand[o];
            let r = self.y[o] - mu;
            let chi = r * r / (self.c2[o] * self.sigma[o]);
            let psi = 1.0 / (2.0 * self.sigma[o] * self.tau[o] * (1.0 - self.tau[o]));
            self.w[o] = sample_gig_half(chi, psi, &mut self.rng);
        }
    }

    fn obs_precision(&self, o: usize) -> f64 {
        if self.gaussian {
            1.0 / self.sigma[o]
        } else {
            1.0 / (self.c2[o] * self.sigma[o] * self.w[o])
        }
    }

    fn obs_shift(&self, o: usize) -> f64 {
        if self.gaussian { 0.0 } else { self.c1[o] * self.w[o] }
    }

    fn update_beta(&mut self) -> Result<()> {
        let p = self.d.p_location;
        if p == 0 {
            return Ok(());
        }
        let pr = &self.cfg.priors;
        let mut a = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            a[(i, i)] = 1.0 / pr.beta_var;
        }
        let mut rhs = DVector::<f64>::zeros(p);
        for o in 0..self.n_obs {
            let prec = self.obs_precision(o);
            let pseudo = self.y[o] - self.obs_shift(o) - self.loc_rand[o];
            let row = self.bundle.location.fixed.row(o);
            for i in 0..p {
                rhs[i] += row[i] * pseudo * prec;
                for j in i..p {
                    a[(i, j)] += row[i] * row[j] * prec;
                }
            }
        }
        for i in 0..p {
            for j in (i + 1)..p {
                a[(j, i)] = a[(i, j)];
            }
        }
        let chol = Cholesky::new(a)
            .ok_or_else(|| self.fail("Cholesky failure in location-coefficient update"))?;
        self.theta.beta = linalg::sample_mvn_from_precision(&chol, &rhs, &mut self.rng);
        self.refresh_location_fixed();
        Ok(())
    }

    fn update_location_effects(&mut self) -> Result<()> {
        let q = self.d.q_location;
        if q == 0 {
            return Ok(());
        }
        for i in 0..self.n_subjects {
            let mut a = self.sigma_b_inv.clone();
            let mut rhs = DVector::<f64>::zeros(q);
            let (lo, hi) = self.bundle.obs_ranges[i];
            for o in lo..hi {
                let prec = self.obs_precision(o);
                let pseudo = self.y[o] - self.obs_shift(o) - self.loc_fixed[o];
                let row = self.bundle.location.random.row(o);
                for r in 0..q {
                    rhs[r] += row[r] * pseudo * prec;
                    for c in r..q {
                        a[(r, c)] += row[r] * row[c] * prec;
                    }
                }
            }
            for r in 0..q {
                for c in (r + 1)..q {
                    a[(c, r)] = a[(r, c)];
                }
            }
            let chol = Cholesky::new(a)
                .ok_or_else(|| self.fail("Cholesky failure in location-effect update"))?;
            self.effects[i].b = linalg::sample_mvn_from_precision(&chol, &rhs, &mut self.rng);
            self.refresh_location_random_subject(i);
        }
        Ok(())
    }

    fn adapting(&self) -> bool {
        self.cfg.adapt && self.iteration < self.cfg.burn_in
    }

    fn past_burn_in(&self) -> bool {
        self.iteration >= self.cfg.burn_in
    }

    fn update_scale(&mut self) {
        let p = self.d.p_scale;
        let pr_var = self.cfg.priors.xi_var;
        if p > 0 {
            let step = self.mh_xi.step();
            let prop = DVector::from_fn(p, |i, _| {
                self.theta.xi[i] + step * sample_normal(&mut self.rng)
            });
            let mut delta = 0.0;
            for o in 0..self.n_obs {
                self.scratch_eta[o] = dot(self.bundle.scale.fixed.row(o), &prop);
                self.scratch_sigma[o] = link_sigma(self.scratch_eta[o] + self.sc_rand[o]);
                delta += self.ll_scale_term(o, self.scratch_sigma[o])
                    - self.ll_scale_term(o, self.sigma[o]);
            }
            delta += (self.theta.xi.norm_squared() - prop.norm_squared()) / (2.0 * pr_var);
            let accepted = accept(delta, &mut self.rng);
            if accepted {
                self.theta.xi = prop;
                std::mem::swap(&mut self.sc_fixed, &mut self.scratch_eta);
                std::mem::swap(&mut self.sigma, &mut self.scratch_sigma);
            }
            if self.adapting() {
                self.mh_xi.adapt(delta.exp().min(1.0), rm_target(p));
            }
            if self.past_burn_in() {
                self.mh_xi.record(accepted);
            }
        }
        let q = self.d.q_scale;
        if q == 0 {
            return;
        }
        for i in 0..self.n_subjects {
            let step = self.mh_u[i].step();
            let current = self.effects[i].u.clone();
            let prop =
                DVector::from_fn(q, |r, _| current[r] + step * sample_normal(&mut self.rng));
            let (lo, hi) = self.bundle.obs_ranges[i];
            let mut delta = 0.0;
            for o in lo..hi {
                self.scratch_eta[o] = dot(self.bundle.scale.random.row(o), &prop);
                self.scratch_sigma[o] = link_sigma(self.sc_fixed[o] + self.scratch_eta[o]);
                delta += self.ll_scale_term(o, self.scratch_sigma[o])
                    - self.ll_scale_term(o, self.sigma[o]);
            }
            delta += 0.5
                * (quad_form(&self.sigma_u_inv, &current) - quad_form(&self.sigma_u_inv, &prop));
            let accepted = accept(delta, &mut self.rng);
            if accepted {
                self.effects[i].u = prop;
                for o in lo..hi {
                    self.sc_rand[o] = self.scratch_eta[o];
                    self.sigma[o] = self.scratch_sigma[o];
                }
            }
            if self.adapting() {
                self.mh_u[i].adapt(delta.exp().min(1.0), rm_target(q));
            }
            if self.past_burn_in() {
                self.mh_u[i].record(accepted);
            }
        }
    }

    fn update_skew(&mut self) {
        let block = self.bundle.skewness.as_ref().expect("modeled skewness");
        let p = self.d.p_skewness;
        let pr_var = self.cfg.priors.alpha_var;
        if p > 0 {
            let step = self.mh_alpha.step();
            let alpha = self.theta.alpha.as_ref().expect("modeled skewness");
            let prop =
                DVector::from_fn(p, |i, _| alpha[i] + step * sample_normal(&mut self.rng));
            let mut delta = 0.0;
            for o in 0..self.n_obs {
                self.scratch_eta[o] = dot(block.fixed.row(o), &prop);
                let t = link_tau(self.scratch_eta[o] + self.sk_rand[o]);
                let denom = t * (1.0 - t);
                self.scratch_tau[o] = t;
                self.scratch_c1[o] = (1.0 - 2.0 * t) / denom;
                self.scratch_c2[o] = 2.0 / denom;
                delta += self.ll_skew_term(o, self.scratch_c1[o], self.scratch_c2[o])
                    - self.ll_skew_term(o, self.c1[o], self.c2[o]);
            }
            let alpha = self.theta.alpha.as_ref().expect("modeled skewness");
            delta += (alpha.norm_squared() - prop.norm_squared()) / (2.0 * pr_var);
            let accepted = accept(delta, &mut self.rng);
            if accepted {
                *self.theta.alpha.as_mut().expect("modeled skewness") = prop;
                std::mem::swap(&mut self.sk_fixed, &mut self.scratch_eta);
                std::mem::swap(&mut self.tau, &mut self.scratch_tau);
                std::mem::swap(&mut self.c1, &mut self.scratch_c1);
                std::mem::swap(&mut self.c2, &mut self.scratch_c2);
            }
            if self.adapting() {
                self.mh_alpha.adapt(delta.exp().min(1.0), rm_target(p));
            }
            if self.past_burn_in() {
                self.mh_alpha.record(accepted);
            }
        }
        let q = self.d.q_skewness;
        if q == 0 {
            return;
        }
        for i in 0..self.n_subjects {
            let step = self.mh_a[i].step();
            let current = self.effects[i].a.clone();
            let prop =
                DVector::from_fn(q, |r, _| current[r] + step * sample_normal(&mut self.rng));
            let (lo, hi) = self.bundle.obs_ranges[i];
            let mut delta = 0.0;
            for o in lo..hi {
                self.scratch_eta[o] = dot(block.random.row(o), &prop);
                let t = link_tau(self.sk_fixed[o] + self.scratch_eta[o]);
                let denom = t * (1.0 - t);
                self.scratch_tau[o] = t;
                self.scratch_c1[o] = (1.0 - 2.0 * t) / denom;
                self.scratch_c2[o] = 2.0 / denom;
                delta += self.ll_skew_term(o, self.scratch_c1[o], self.scratch_c2[o])
                    - self.ll_skew_term(o, self.c1[o], self.c2[o]);
            }
            delta += 0.5
                * (quad_form(&self.sigma_a_inv, &current) - quad_form(&self.sigma_a_inv, &prop));
            let accepted = accept(delta, &mut self.rng);
            if accepted {
                self.effects[i].a = prop;
                for o in lo..hi {
                    self.sk_rand[o] = self.scratch_eta[o];
                    self.tau[o] = self.scratch_tau[o];
                    self.c1[o] = self.scratch_c1[o];
                    self.c2[o] = self.scratch_c2[o];
                }
            }
            if self.adapting() {
                self.mh_a[i].adapt(delta.exp().min(1.0), rm_target(q));
            }
            if self.past_burn_in() {
                self.mh_a[i].record(accepted);
            }
        }
    }

    fn update_covariances(&mut self) -> Result<()> {
        let pr = self.cfg.priors;
        let n = self.n_subjects as f64;
        let draw = |effect: &dyn Fn(&SubjectEffects) -> &DVector<f64>,
                    q: usize,
                    effects: &[SubjectEffects],
                    rng: &mut ChaCha8Rng|
         -> Result<Option<DMatrix<f64>>> {
            if q == 0 {
                return Ok(None);
            }
            let mut scale = DMatrix::<f64>::identity(q, q) * pr.iw_scale;
            for e in effects {
                let r = effect(e);
                for i in 0..q {
                    for j in 0..q {
                        scale[(i, j)] += r[i] * r[j];
                    }
                }
            }
            let df = q as f64 + pr.iw_df_extra + n;
            Ok(Some(linalg::sample_inverse_wishart(df, &scale, rng)?))
        };
        if let Some(m) = draw(&|e| &e.b, self.d.q_location, &self.effects, &mut self.rng)
            .map_err(|e| self.fail(e.to_string()))?
        {
            self.theta.sigma_b = m;
        }
        if let Some(m) = draw(&|e| &e.u, self.d.q_scale, &self.effects, &mut self.rng)
            .map_err(|e| self.fail(e.to_string()))?
        {
            self.theta.sigma_u = m;
        }
        if let Some(m) = draw(&|e| &e.a, self.d.q_skewness, &self.effects, &mut self.rng)
            .map_err(|e| self.fail(e.to_string()))?
        {
            self.theta.sigma_a = Some(m);
        }
        self.refresh_cov_factors()
    }

    /// One fixed-scan sweep over all enabled blocks.
    pub(crate) fn sweep(&mut self) -> Result<()> {
        let toggles = self.cfg.blocks;
        if !self.gaussian && toggles.weights {
            self.update_weights();
        }
        if toggles.location {
            self.update_beta()?;
            self.update_location_effects()?;
        }
        if toggles.scale {
            self.update_scale();
        }
        if !self.gaussian && self.has_skew_block && toggles.skewness {
            self.update_skew();
        }
        if toggles.covariances {
            self.update_covariances()?;
        }
        self.iteration += 1;
        Ok(())
    }

    pub(crate) fn run_chain(&mut self) -> Result<ChainOutput> {
        let cfg = self.cfg;
        let n_params = self.spec.parameter_names().len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_retained()); n_params];
        let mut effect_sums: Vec<SubjectEffects> = (0..self.n_subjects)
            .map(|_| SubjectEffects::zeros(self.spec))
            .collect();
        let mut retained = 0usize;
        for iter in 0..cfg.n_iter {
            self.sweep()?;
            if iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 {
                for (col, v) in columns.iter_mut().zip(self.theta.flatten()) {
                    col.push(v);
                }
                for (acc, e) in effect_sums.iter_mut().zip(&self.effects) {
                    acc.b += &e.b;
                    acc.u += &e.u;
                    acc.a += &e.a;
                }
                retained += 1;
            }
        }
        let mean_u_rate = mean_rate(&self.mh_u);
        let mean_a_rate = mean_rate(&self.mh_a);
        Ok(ChainOutput {
            columns,
            effect_sums,
            acceptance: BlockAcceptance {
                scale_coef: self.mh_xi.rate(),
                scale_effects: mean_u_rate,
                skew_coef: self.mh_alpha.rate(),
                skew_effects: mean_a_rate,
            },
            retained,
        })
    }

    // ----- hooks for the validation harness --------------------------------

    /// Draws parameters, random effects and latent weights from the prior,
    /// refreshing every cache.
    pub(crate) fn draw_state_from_prior(&mut self) -> Result<()> {
        let pr = self.cfg.priors;
        let draw_cov = |q: usize, rng: &mut ChaCha8Rng| -> Result<DMatrix<f64>> {
            if q == 0 {
                return Ok(DMatrix::zeros(0, 0));
            }
            let scale = DMatrix::<f64>::identity(q, q) * pr.iw_scale;
            linalg::sample_inverse_wishart(q as f64 + pr.iw_df_extra, &scale, rng)
        };
        self.theta.sigma_b = draw_cov(self.d.q_location, &mut self.rng)?;
        self.theta.sigma_u = draw_cov(self.d.q_scale, &mut self.rng)?;
        if self.theta.sigma_a.is_some() {
            self.theta.sigma_a = Some(draw_cov(self.d.q_skewness, &mut self.rng)?);
        }
        self.theta.beta = DVector::from_fn(self.d.p_location, |_, _| {
            pr.beta_var.sqrt() * sample_normal(&mut self.rng)
        });
        self.theta.xi = DVector::from_fn(self.d.p_scale, |_, _| {
            pr.xi_var.sqrt() * sample_normal(&mut self.rng)
        });
        if let Some(alpha) = self.theta.alpha.as_mut() {
            *alpha = DVector::from_fn(self.d.p_skewness, |_, _| {
                pr.alpha_var.sqrt() * sample_normal(&mut self.rng)
            });
        }
        self.refresh_cov_factors()?;
        for i in 0..self.n_subjects {
            if let Some(chol) = &self.sigma_b_chol {
                self.effects[i].b =
                    linalg::sample_mvn(&DVector::zeros(self.d.q_location), chol, &mut self.rng);
            }
            if let Some(chol) = &self.sigma_u_chol {
                self.effects[i].u =
                    linalg::sample_mvn(&DVector::zeros(self.d.q_scale), chol, &mut self.rng);
            }
            if let Some(chol) = &self.sigma_a_chol {
                self.effects[i].a =
                    linalg::sample_mvn(&DVector::zeros(self.d.q_skewness), chol, &mut self.rng);
            }
        }
        self.refresh_location_fixed();
        self.refresh_location_random_all();
        self.refresh_scale_fixed();
        self.refresh_scale_random_all();
        self.refresh_skew_all();
        if !self.gaussian {
            for o in 0..self.n_obs {
                let e: f64 = Exp1.sample(&mut self.rng);
                self.w[o] = (self.sigma[o] * e).max(f64::MIN_POSITIVE);
            }
        }
        Ok(())
    }

    /// Redraws the responses from their conditional distribution given the
    /// current latent state.
    pub(crate) fn regenerate_response(&mut self) {
        for o in 0..self.n_obs {
            let mu = self.loc_fixed[o] + self.loc_rand[o];
            self.y[o] = if self.gaussian {
                mu + self.sigma[o].sqrt() * sample_normal(&mut self.rng)
            } else {
                let v = self.c2[o] * self.sigma[o] * self.w[o];
                mu + self.c1[o] * self.w[o] + v.sqrt() * sample_normal(&mut self.rng)
            };
        }
    }

    pub(crate) fn theta_flat(&self) -> Vec<f64> {
        self.theta.flatten()
    }

    #[cfg(test)]
    pub(crate) fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    #[cfg(test)]
    pub(crate) fn weights(&self) -> &[f64] {
        &self.w
    }

    #[cfg(test)]
    pub(crate) fn effects(&self) -> &[SubjectEffects] {
        &self.effects
    }

    #[cfg(test)]
    pub(crate) fn response(&self) -> &[f64] {
        &self.y
    }
}

fn dot(row: &[f64], v: &DVector<f64>) -> f64 {
    row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += v[i] * m[(i, j)] * v[j];
        }
    }
    acc
}

fn link_sigma(eta: f64) -> f64 {
    eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp()
}

fn link_tau(eta: f64) -> f64 {
    logistic(eta.clamp(-ETA_CLAMP, ETA_CLAMP))
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn accept(log_ratio: f64, rng: &mut ChaCha8Rng) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn mean_rate(blocks: &[MhBlock]) -> Option<f64> {
    let rates: Vec<f64> = blocks.iter().filter_map(MhBlock::rate).collect();
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}
