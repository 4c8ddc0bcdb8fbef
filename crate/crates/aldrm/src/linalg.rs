//! Dense symmetric-positive-definite helpers used by the sampler.
//!
//! All random-effect blocks are small (dimension at most a handful), so
//! everything here works on dynamically sized `nalgebra` matrices with
//! Cholesky factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::{Error, Result};

/// Force exact symmetry by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// True when `m` is square, symmetric and admits a Cholesky factorization.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * (1.0 + m[(i, j)].abs()) {
                return false;
            }
        }
    }
    m.iter().all(|v| v.is_finite()) && Cholesky::new(m.clone()).is_some()
}

/// Cholesky factorization with an error instead of an `Option`.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::InvalidParameter(format!("{what}: matrix is not positive definite")))
}

/// Draw from a multivariate normal with the given mean and covariance.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov_chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> DVector<f64> {
    let n = mean.len();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    mean + cov_chol.l() * z
}

/// Draw from the Gaussian with precision matrix `A` (factored) and linear
/// term `b`, i.e. `N(A^-1 b, A^-1)`. Used by every conjugate update: `A`
/// collects prior plus data precision, `b` the matching weighted sums.
pub fn sample_mvn_from_precision<R: Rng + ?Sized>(
    precision_chol: &Cholesky<f64, Dyn>,
    b: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let mean = precision_chol.solve(b);
    let n = b.len();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    // Solve L^T v = z so that v has covariance A^-1.
    let lt = precision_chol.l().transpose();
    let v = lt
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has positive diagonal");
    mean + v
}

/// Bartlett draw from a Wishart distribution with `df` degrees of freedom
/// and scale `V = factor * factor^T`. Any square factor works.
fn sample_wishart_from_factor<R: Rng + ?Sized>(
    factor: &DMatrix<f64>,
    df: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let p = factor.nrows();
    let mut t = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let shape = 0.5 * (df - i as f64);
        let chi2 = Gamma::new(shape, 2.0)
            .expect("positive Wishart degrees of freedom")
            .sample(rng);
        t[(i, i)] = chi2.sqrt();
        for j in 0..i {
            t[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let ft = factor * t;
    &ft * ft.transpose()
}

/// Draw from the inverse-Wishart distribution with `df` degrees of freedom
/// and scale matrix `scale` (density proportional to
/// `|S|^-(df+p+1)/2 exp(-tr(scale S^-1)/2)`). Requires `df > p - 1`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= (p as f64) - 1.0 {
        return Err(Error::InvalidParameter(format!(
            "inverse-Wishart needs df > p - 1 (df = {df}, p = {p})"
        )));
    }
    // If S ~ IW(df, scale) then S^-1 ~ Wishart(df, scale^-1). The Bartlett
    // construction only needs a factor F with F F^T = scale^-1, and the
    // upper-triangular inverse transpose of chol(scale) is one.
    let chol = cholesky(scale, "inverse-Wishart scale")?;
    let l = chol.l();
    let eye = DMatrix::<f64>::identity(p, p);
    let f = l
        .transpose()
        .solve_upper_triangular(&eye)
        .expect("Cholesky factor has positive diagonal");
    let precision = sample_wishart_from_factor(&f, df, rng);
    let prec_chol = cholesky(&precision, "sampled Wishart precision")?;
    let mut cov = prec_chol.inverse();
    symmetrize(&mut cov);
    Ok(cov)
}

/// Log density of a zero-mean multivariate normal, given the Cholesky
/// factorization of its covariance.
pub fn log_mvn_zero_mean(x: &DVector<f64>, cov_chol: &Cholesky<f64, Dyn>) -> f64 {
    let p = x.len() as f64;
    let l = cov_chol.l();
    let half_log_det: f64 = (0..x.len()).map(|i| l[(i, i)].ln()).sum();
    let v = l
        .solve_lower_triangular(x)
        .expect("Cholesky factor has positive diagonal");
    -0.5 * p * (2.0 * std::f64::consts::PI).ln() - half_log_det - 0.5 * v.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spd_detects_indefinite() {
        let good = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(is_spd(&good));
        assert!(!is_spd(&bad));
    }

    #[test]
    fn precision_sampler_matches_moments() {
        // N(A^-1 b, A^-1) with a 2x2 precision; check against direct form.
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_row_slice(&[2.0, -1.0]);
        let chol = cholesky(&a, "test").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut sum = DVector::zeros(2);
        let mut sum_sq = DMatrix::zeros(2, 2);
        for _ in 0..n {
            let x = sample_mvn_from_precision(&chol, &b, &mut rng);
            sum += &x;
            sum_sq += &x * x.transpose();
        }
        let mean = sum / n as f64;
        let expect_mean = chol.solve(&b);
        let cov = sum_sq / n as f64 - &mean * mean.transpose();
        let expect_cov = chol.inverse();
        assert!((mean - &expect_mean).norm() < 0.01);
        assert!((cov - expect_cov).norm() < 0.02);
    }

    #[test]
    fn inverse_wishart_univariate_mean() {
        // 1x1 IW(df, psi) is inverse-gamma(df/2, psi/2); the mean is
        // psi / (df - 2) for df > 2.
        let scale = DMatrix::from_element(1, 1, 3.0);
        let df = 6.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample_inverse_wishart(df, &scale, &mut rng).unwrap()[(0, 0)];
        }
        let mean = acc / n as f64;
        assert!((mean - 3.0 / 4.0).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn mvn_log_density_matches_scalar_formula() {
        let cov = DMatrix::from_element(1, 1, 2.5);
        let chol = cholesky(&cov, "test").unwrap();
        let x = DVector::from_row_slice(&[1.3]);
        let expect = -0.5 * (2.0 * std::f64::consts::PI * 2.5).ln() - 0.5 * 1.3 * 1.3 / 2.5;
        assert!((log_mvn_zero_mean(&x, &chol) - expect).abs() < 1e-12);
    }
}
