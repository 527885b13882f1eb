//! Hill estimation of power-law tails.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillEstimate {
    /// Tail index `alpha` of the survival function, `P(|X| > x) ~ x^-alpha`.
    pub alpha: f64,
    /// Order statistics used.
    pub k: usize,
    /// The `(k+1)`-th largest magnitude, below which data is ignored.
    pub threshold: f64,
}

impl HillEstimate {
    /// Exponent of the density, `p(x) ~ x^-(alpha + 1)`; comparable to the
    /// q-Gaussian `lambda`.
    pub fn density_exponent(&self) -> f64 {
        self.alpha + 1.0
    }
}

/// Hill estimator on the `k` largest magnitudes:
/// `alpha = k / sum_{i<k} ln(|x|_(i) / |x|_(k))`.
pub fn hill(data: &[f64], k: usize) -> Result<HillEstimate> {
    let mut mags: Vec<f64> = data.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    if k == 0 || k >= mags.len() {
        return Err(Error::invalid(format!(
            "Hill estimator needs 0 < k < {} nonzero values, got k = {k}",
            mags.len()
        )));
    }
    // only the top k + 1 need ordering
    mags.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    let threshold = mags[k];
    let sum: f64 = mags[..k].iter().map(|v| (v / threshold).ln()).sum();
    if sum <= 0.0 {
        return Err(Error::domain("Hill estimator undefined: top order statistics are tied"));
    }
    Ok(HillEstimate {
        alpha: k as f64 / sum,
        k,
        threshold,
    })
}

/// Hill estimator on the largest `fraction` of magnitudes.
pub fn hill_top_fraction(data: &[f64], fraction: f64) -> Result<HillEstimate> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("tail fraction must be in (0, 1), got {fraction}")));
    }
    let k = ((data.len() as f64 * fraction).round() as usize).max(1);
    hill(data, k)
}
