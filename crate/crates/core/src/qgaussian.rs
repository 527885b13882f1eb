//! q-Gaussian distribution machinery.
//!
//! The canonical parameterization is `(lambda, r0)`:
//!
//! ```text
//! P(x) = Gamma(lambda/2) / (sqrt(pi) r0 Gamma(lambda/2 - 1/2)) * (r0^2 / (r0^2 + x^2))^(lambda/2)
//! ```
//!
//! which is the Tsallis form `A_q exp_q(-x^2 / ((3 - q) sigma_q^2))` with
//! `lambda = 2/(q - 1)` and `r0 = sigma_q sqrt((3 - q)/(q - 1))`. The q-mean is
//! always zero.

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Half-width of the band around `q = 1` treated as the exponential limit.
pub const Q_ONE_TOLERANCE: f64 = 1e-12;

/// The q-exponential `(1 + (1 - q) x)^(1/(1 - q))`, continuous at `q = 1`.
pub fn exp_q(x: f64, q: f64) -> Result<f64> {
    if (q - 1.0).abs() < Q_ONE_TOLERANCE {
        return Ok(x.exp());
    }
    let u = (1.0 - q) * x;
    if 1.0 + u <= 0.0 {
        return Err(Error::domain(format!(
            "exp_q undefined: 1 + (1 - q) x = {} <= 0 (x = {x}, q = {q})",
            1.0 + u
        )));
    }
    // ln_1p keeps the q -> 1 approach accurate
    Ok((u.ln_1p() / (1.0 - q)).exp())
}

/// Parameters `(lambda, r0)` of a zero-mean q-Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGaussianParams {
    /// Power-law exponent of the density tail, `P(x) ~ |x|^-lambda`.
    pub lambda: f64,
    /// Scale.
    pub r0: f64,
}

impl QGaussianParams {
    pub fn new(lambda: f64, r0: f64) -> Result<Self> {
        let p = Self { lambda, r0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 1.0) {
            return Err(Error::invalid(format!(
                "q-Gaussian lambda must be finite and > 1, got {}",
                self.lambda
            )));
        }
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(Error::invalid(format!(
                "q-Gaussian r0 must be finite and > 0, got {}",
                self.r0
            )));
        }
        Ok(())
    }

    /// Builds `(lambda, r0)` from the Tsallis pair `(q, sigma_q)`, `1 < q < 3`.
    pub fn from_q(q: f64, sigma_q: f64) -> Result<Self> {
        if !(q > 1.0 && q < 3.0) {
            return Err(Error::domain(format!("q must lie in (1, 3), got {q}")));
        }
        if !(sigma_q.is_finite() && sigma_q > 0.0) {
            return Err(Error::invalid(format!("sigma_q must be > 0, got {sigma_q}")));
        }
        Self::new(
            2.0 / (q - 1.0),
            sigma_q * ((3.0 - q) / (q - 1.0)).sqrt(),
        )
    }

    /// Inverse of [`QGaussianParams::from_q`]: returns `(q, sigma_q)`.
    pub fn to_q(&self) -> (f64, f64) {
        let q = self.q();
        (q, self.r0 * ((q - 1.0) / (3.0 - q)).sqrt())
    }

    pub fn q(&self) -> f64 {
        1.0 + 2.0 / self.lambda
    }

    pub fn sigma_q(&self) -> f64 {
        self.to_q().1
    }

    /// Student-t degrees of freedom of the equivalent distribution.
    pub fn degrees_of_freedom(&self) -> f64 {
        self.lambda - 1.0
    }

    /// Log of the normalization constant `A`, via log-gamma.
    pub fn ln_norm(&self) -> f64 {
        let h = 0.5 * self.lambda;
        ln_gamma(h) - ln_gamma(h - 0.5) - 0.5 * std::f64::consts::PI.ln() - self.r0.ln()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = x / self.r0;
        self.ln_norm() - 0.5 * self.lambda * (z * z).ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// CDF through the Student-t regularized incomplete beta identity.
    pub fn cdf(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.5;
        }
        let nu = self.degrees_of_freedom();
        let z = x / self.r0;
        // t^2 / nu = z^2 with t = z sqrt(nu)
        let tail = 0.5 * beta_reg(0.5 * nu, 0.5, 1.0 / (1.0 + z * z));
        if x > 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }

    /// `r0^2 / (lambda - 3)`, finite only for `lambda > 3`.
    pub fn variance(&self) -> Option<f64> {
        (self.lambda > 3.0).then(|| self.r0 * self.r0 / (self.lambda - 3.0))
    }
}

/// Sampler for a q-Gaussian: a Student-t draw with `nu = lambda - 1` degrees
/// of freedom scaled by `r0 / sqrt(nu)`.
#[derive(Debug, Clone, Copy)]
pub struct QGaussian {
    student: StudentT<f64>,
    scale: f64,
}

impl QGaussian {
    pub fn new(p: QGaussianParams) -> Result<Self> {
        p.validate()?;
        let nu = p.degrees_of_freedom();
        let student = StudentT::new(nu)
            .map_err(|e| Error::invalid(format!("Student-t with nu = {nu}: {e}")))?;
        Ok(Self {
            student,
            scale: p.r0 / nu.sqrt(),
        })
    }
}

impl Distribution<f64> for QGaussian {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * self.student.sample(rng)
    }
}

/// Draws `n` i.i.d. q-Gaussian values.
pub fn sample_qgaussian<R: Rng + ?Sized>(
    p: QGaussianParams,
    rng: &mut R,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let dist = QGaussian::new(p)?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Maximum-likelihood scale `r0` of a zero-mean q-Gaussian with fixed
/// exponent `lambda`.
///
/// The score equation `sum x^2 / (r0^2 + x^2) = n / lambda` has a unique root
/// whenever more than `n / lambda` observations are nonzero; it is bracketed
/// and solved by bisection in `ln r0^2`.
pub fn fit_scale_mle(data: &[f64], lambda: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("scale fit sample"));
    }
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be > 1, got {lambda}")));
    }
    let n = data.len() as f64;
    let sq: Vec<f64> = data.iter().map(|x| x * x).collect();
    let nonzero = sq.iter().filter(|&&s| s > 0.0).count() as f64;
    if lambda * nonzero <= n {
        return Err(Error::Domain(format!(
            "scale MLE does not exist: only {nonzero} of {n} observations are nonzero"
        )));
    }
    let score = |ln_u: f64| {
        let u = ln_u.exp();
        lambda * sq.iter().map(|s| s / (u + s)).sum::<f64>() - n
    };

    let mut sorted = sq.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2].max(f64::MIN_POSITIVE);
    let mut lo = median.ln();
    let mut hi = lo;
    while score(lo) <= 0.0 {
        lo -= 2.0;
    }
    while score(hi) > 0.0 {
        hi += 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp().sqrt())
}
