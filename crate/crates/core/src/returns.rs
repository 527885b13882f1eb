//! Double-stochastic model of one-minute returns.
//!
//! A hidden long-memory background `X` (window averages of the two-power SDE,
//! scaled by `r0_bar`) sets the scale of fast q-Gaussian fluctuations
//! through the linear modulation `r0(m) = intercept + slope * |m|`. The
//! return of minute `m` is the background plus the fluctuation,
//! `r_m = X_m + xi{r0(X_m), lambda2}`, so a moving average of `r` tracks `X`
//! while the fluctuations dominate the per-minute amplitude.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qgaussian::{fit_scale_mle, QGaussian, QGaussianParams};
use crate::sde::{simulate_windowed, Observable, SdeParams, SolverConfig, StopRule};
use crate::series::{Provenance, ReturnSeries};
use crate::spectral::moving_average;

/// Linear dependence of the fluctuation scale on the modulating average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub intercept: f64,
    pub slope: f64,
}

impl Modulation {
    pub const PRESET: Modulation = Modulation {
        intercept: 1.0,
        slope: 2.5,
    };

    #[inline]
    pub fn scale(&self, m: f64) -> f64 {
        self.intercept + self.slope * m.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnModelParams {
    /// Background SDE.
    pub sde: SdeParams,
    /// Exponent of the fast q-Gaussian fluctuations.
    pub lambda2: f64,
    /// Scale applied to the windowed background.
    pub r0_bar: f64,
    /// Window length in scaled time that corresponds to one minute.
    pub tau: f64,
    /// Moving-average length (minutes) used when decomposing.
    pub ma_window: usize,
    pub modulation: Modulation,
    pub kappa: f64,
    pub burn_in: u64,
}

impl ReturnModelParams {
    /// `eta = 5/2`, `lambda = 3.6`, `eps = 0.01`, `lambda2 = 5`,
    /// `r0_bar = 0.2`, `tau = 1e-4`, modulation `1 + 2.5 |MA|`, 60-minute MA.
    pub fn preset() -> Self {
        Self {
            sde: SdeParams::preset(),
            lambda2: 5.0,
            r0_bar: 0.2,
            tau: 1e-4,
            ma_window: 60,
            modulation: Modulation::PRESET,
            kappa: 0.01,
            burn_in: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sde.validate()?;
        if !(self.lambda2.is_finite() && self.lambda2 > 3.0) {
            return Err(Error::invalid(format!(
                "λ₂ must be > 3 for finite fluctuation variance, got {}",
                self.lambda2
            )));
        }
        if !(self.r0_bar.is_finite() && self.r0_bar >= 0.0) {
            return Err(Error::invalid(format!("r̄₀ must be >= 0, got {}", self.r0_bar)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid(format!("τ must be > 0, got {}", self.tau)));
        }
        if self.ma_window < 2 || !self.ma_window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "moving-average window must be even and >= 2, got {}",
                self.ma_window
            )));
        }
        let m = self.modulation;
        if !(m.intercept.is_finite() && m.intercept > 0.0 && m.slope.is_finite() && m.slope >= 0.0) {
            return Err(Error::invalid(format!(
                "modulation needs intercept > 0 and slope >= 0, got ({}, {})",
                m.intercept, m.slope
            )));
        }
        Ok(())
    }

    fn solver(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            kappa: self.kappa,
            burn_in: self.burn_in,
            x_init: 0.0,
            seed,
            stop: StopRule::Steps(1),
            reflect_at: None,
        }
    }
}

/// `r0(MA) = intercept + slope * |MA|`.
pub fn modulation_scale(ma_value: f64, params: &ReturnModelParams) -> f64 {
    params.modulation.scale(ma_value)
}

/// Generated returns together with the background that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedReturns {
    pub returns: ReturnSeries,
    /// `X_m = r0_bar * (1/tau) * integral of x over minute m`.
    pub background: ReturnSeries,
}

/// `n_minutes` returns of the composed model; see [`generate_returns_detailed`].
pub fn generate_returns(params: &ReturnModelParams, n_minutes: usize, seed: u64) -> Result<ReturnSeries> {
    Ok(generate_returns_detailed(params, n_minutes, seed)?.returns)
}

/// Simulates the background SDE from `seed`, window-integrates it over
/// `tau`, scales by `r0_bar`, and adds one q-Gaussian fluctuation per minute
/// drawn from an independent stream of the same seed.
pub fn generate_returns_detailed(
    params: &ReturnModelParams,
    n_minutes: usize,
    seed: u64,
) -> Result<GeneratedReturns> {
    params.validate()?;
    if n_minutes == 0 {
        return Err(Error::invalid("minute count must be >= 1"));
    }
    let background: Vec<f64> = if params.r0_bar == 0.0 {
        vec![0.0; n_minutes]
    } else {
        let x = simulate_windowed(
            params.sde,
            &params.solver(seed),
            params.tau,
            n_minutes,
            Observable::Signed,
        )?;
        x.values.into_iter().map(|v| params.r0_bar * v).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let unit = QGaussian::new(QGaussianParams::new(params.lambda2, 1.0)?)?;
    let returns = background
        .iter()
        .map(|&x| x + params.modulation.scale(x) * unit.sample(&mut rng))
        .collect();

    let meta = Provenance::Synthetic { seed };
    Ok(GeneratedReturns {
        returns: ReturnSeries::new(returns, params.tau, meta.clone())?,
        background: ReturnSeries::new(background, params.tau, meta)?,
    })
}

/// Divides by the sample standard deviation.
pub fn normalize_returns(series: &ReturnSeries) -> Result<ReturnSeries> {
    let sd = series.std_dev();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance("return series"));
    }
    Ok(ReturnSeries {
        values: series.values.iter().map(|v| v / sd).collect(),
        dt: series.dt,
        meta: series.meta.clone(),
    })
}

/// Fitted fluctuation scale for one population of modulator values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleBin {
    pub abs_ma_lo: f64,
    pub abs_ma_hi: f64,
    pub mean_abs_ma: f64,
    pub r0: f64,
    pub count: usize,
    /// Fewer than the configured minimum of points.
    pub underpopulated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub bins: Vec<ScaleBin>,
    /// Count-weighted regression of `r0` on the bin mean of `|MA|`.
    pub modulation: Modulation,
    pub lambda2: f64,
    pub ma_window: usize,
}

impl Decomposition {
    pub fn underpopulated(&self) -> impl Iterator<Item = &ScaleBin> {
        self.bins.iter().filter(|b| b.underpopulated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeOptions {
    /// Equal-population bins of `|MA|`.
    pub bins: usize,
    /// Bins with fewer points are flagged.
    pub min_count: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            bins: 20,
            min_count: 1000,
        }
    }
}

/// Splits returns by the centered moving average of the same series and
/// fits the scale of a fixed-`lambda2` q-Gaussian in each `|MA|` bin.
///
/// The series is used as given; callers working with empirical data should
/// normalize it first so that the fitted modulation is in unit-variance units.
pub fn decompose_empirical(series: &ReturnSeries, ma_window: usize, lambda2: f64) -> Result<Decomposition> {
    decompose_empirical_with(series, ma_window, lambda2, DecomposeOptions::default())
}

pub fn decompose_empirical_with(
    series: &ReturnSeries,
    ma_window: usize,
    lambda2: f64,
    opts: DecomposeOptions,
) -> Result<Decomposition> {
    let ma = moving_average(series, ma_window)?;
    // MA element j covers r_j ..= r_{j+n-1}, centered on t = j + n/2
    let half = ma_window / 2;
    let aligned = &series.values[half..half + ma.len()];
    let mut d = decompose_with_modulator(aligned, &ma.values, lambda2, opts)?;
    d.ma_window = ma_window;
    Ok(d)
}

/// Core of the decomposition for an arbitrary modulator series aligned with
/// the returns.
pub fn decompose_with_modulator(
    returns: &[f64],
    modulator: &[f64],
    lambda2: f64,
    opts: DecomposeOptions,
) -> Result<Decomposition> {
    if returns.len() != modulator.len() {
        return Err(Error::invalid(format!(
            "returns and modulator differ in length: {} vs {}",
            returns.len(),
            modulator.len()
        )));
    }
    if opts.bins < 2 {
        return Err(Error::invalid("decomposition needs at least 2 bins"));
    }
    if returns.len() < opts.bins * 2 {
        return Err(Error::TooShort(format!(
            "{} points cannot fill {} bins",
            returns.len(),
            opts.bins
        )));
    }
    if !(lambda2 > 1.0 && lambda2.is_finite()) {
        return Err(Error::invalid(format!("λ₂ must be > 1, got {lambda2}")));
    }

    let mut order: Vec<usize> = (0..returns.len()).collect();
    order.sort_by(|&a, &b| modulator[a].abs().total_cmp(&modulator[b].abs()));
    let n = order.len();
    let ranges: Vec<(usize, usize)> = (0..opts.bins)
        .map(|b| (b * n / opts.bins, (b + 1) * n / opts.bins))
        .collect();

    let bins = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let idx = &order[lo..hi];
            let sample: Vec<f64> = idx.iter().map(|&i| returns[i]).collect();
            let mean_abs_ma = idx.iter().map(|&i| modulator[i].abs()).sum::<f64>() / idx.len() as f64;
            Ok(ScaleBin {
                abs_ma_lo: modulator[idx[0]].abs(),
                abs_ma_hi: modulator[idx[idx.len() - 1]].abs(),
                mean_abs_ma,
                r0: fit_scale_mle(&sample, lambda2)?,
                count: idx.len(),
                underpopulated: idx.len() < opts.min_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let modulation = weighted_line(&bins)?;
    Ok(Decomposition {
        bins,
        modulation,
        lambda2,
        ma_window: 0,
    })
}

fn weighted_line(bins: &[ScaleBin]) -> Result<Modulation> {
    let w: f64 = bins.iter().map(|b| b.count as f64).sum();
    let mx = bins.iter().map(|b| b.count as f64 * b.mean_abs_ma).sum::<f64>() / w;
    let my = bins.iter().map(|b| b.count as f64 * b.r0).sum::<f64>() / w;
    let sxx: f64 = bins
        .iter()
        .map(|b| b.count as f64 * (b.mean_abs_ma - mx).powi(2))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::ZeroVariance("bin means of |MA|"));
    }
    let sxy: f64 = bins
        .iter()
        .map(|b| b.count as f64 * (b.mean_abs_ma - mx) * (b.r0 - my))
        .sum();
    let slope = sxy / sxx;
    Ok(Modulation {
        intercept: my - slope * mx,
        slope,
    })
}

/// A trade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    /// Milliseconds since the Unix epoch.
    pub time_ms: i64,
    pub price: f64,
}

/// Fixed-width bars built from ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct Bars {
    /// Start of the first bar, ms since the epoch.
    pub start_ms: i64,
    pub bar_ms: i64,
    /// Log return inside each bar; `dt` is the bar length in seconds.
    pub returns: ReturnSeries,
    /// Trades per bar.
    pub counts: Vec<u64>,
}

impl Bars {
    /// Trade counts as a series aligned with the returns.
    pub fn activity(&self) -> ReturnSeries {
        ReturnSeries {
            values: self.counts.iter().map(|&c| c as f64).collect(),
            dt: self.returns.dt,
            meta: self.returns.meta.clone(),
        }
    }

    pub fn bar_start(&self, i: usize) -> i64 {
        self.start_ms + i as i64 * self.bar_ms
    }
}

/// Sums tick-by-tick log returns into bars of length `bar`. A bar's return
/// is `ln(last / first)` over the trades inside it; bars without trades
/// return 0.
pub fn aggregate_ticks(ticks: &[Tick], bar: Duration, source: &str) -> Result<Bars> {
    let bar_ms = i64::try_from(bar.as_millis()).map_err(|_| Error::invalid("bar length overflows"))?;
    if bar_ms <= 0 {
        return Err(Error::invalid("bar length must be at least 1 ms"));
    }
    let first = ticks.first().ok_or(Error::Empty("tick list"))?;
    for (row, t) in ticks.iter().enumerate() {
        if !(t.price > 0.0 && t.price.is_finite()) {
            return Err(Error::NonPositivePrice { row, price: t.price });
        }
        if row > 0 && t.time_ms < ticks[row - 1].time_ms {
            return Err(Error::NonMonotoneTimestamps { row });
        }
    }
    let start_ms = first.time_ms.div_euclid(bar_ms) * bar_ms;
    let last = ticks[ticks.len() - 1].time_ms;
    let n_bars = usize::try_from((last - start_ms) / bar_ms + 1)
        .map_err(|_| Error::invalid("tick span too long"))?;

    let mut returns = vec![0.0; n_bars];
    let mut counts = vec![0u64; n_bars];
    let mut open: Vec<Option<f64>> = vec![None; n_bars];
    let mut close = vec![0.0; n_bars];
    for t in ticks {
        let i = ((t.time_ms - start_ms) / bar_ms) as usize;
        counts[i] += 1;
        open[i].get_or_insert(t.price);
        close[i] = t.price;
    }
    for i in 0..n_bars {
        if let Some(o) = open[i] {
            returns[i] = close[i].ln() - o.ln();
        }
    }
    Ok(Bars {
        start_ms,
        bar_ms,
        returns: ReturnSeries::new(
            returns,
            bar_ms as f64 / 1000.0,
            Provenance::Ingested {
                source: source.to_string(),
            },
        )?,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn modulation_examples() {
        let p = ReturnModelParams::preset();
        assert_eq!(modulation_scale(0.0, &p), 1.0);
        assert_relative_eq!(modulation_scale(0.4, &p), 2.0);
        assert_relative_eq!(modulation_scale(-0.4, &p), 2.0);
    }

    #[test]
    fn preset_valid() {
        let p = ReturnModelParams::preset();
        p.validate().unwrap();
        assert_eq!((p.sde.eta, p.sde.lambda, p.sde.epsilon), (2.5, 3.6, 0.01));
        assert_eq!((p.lambda2, p.r0_bar, p.tau), (5.0, 0.2, 1e-4));
        let bad = ReturnModelParams { lambda2: 3.0, ..p };
        assert!(bad.validate().is_err());
        let bad = ReturnModelParams { ma_window: 61, ..p };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn degenerate_background_is_iid() {
        let p = ReturnModelParams {
            r0_bar: 0.0,
            ..ReturnModelParams::preset()
        };
        let g = generate_returns_detailed(&p, 200_000, 4).unwrap();
        assert!(g.background.values.iter().all(|&x| x == 0.0));
        // xi{1, 5} has variance 1 / (5 - 3)
        assert_relative_eq!(g.returns.variance(), 0.5, max_relative = 0.03);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = ReturnModelParams {
            burn_in: 10_000,
            ..ReturnModelParams::preset()
        };
        let a = generate_returns(&p, 500, 9).unwrap();
        let b = generate_returns(&p, 500, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        assert!(generate_returns(&p, 0, 9).is_err());
    }

    #[test]
    fn normalize_examples() {
        let s = ReturnSeries::new(vec![1.0, -1.0, 1.0, -1.0], 1.0, Provenance::Synthetic { seed: 0 }).unwrap();
        let n = normalize_returns(&s).unwrap();
        assert_relative_eq!(n.std_dev(), 1.0, max_relative = 1e-14);
        let nn = normalize_returns(&n).unwrap();
        for (a, b) in n.values.iter().zip(&nn.values) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        let flat = ReturnSeries::new(vec![2.0; 4], 1.0, Provenance::Synthetic { seed: 0 }).unwrap();
        assert!(matches!(normalize_returns(&flat), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn iid_input_gives_flat_scale() {
        let p = ReturnModelParams {
            r0_bar: 0.0,
            ..ReturnModelParams::preset()
        };
        let r = generate_returns(&p, 400_000, 2).unwrap();
        let d = decompose_empirical(&r, 60, 5.0).unwrap();
        // r_t is part of its own MA, so the top bins are slightly inflated
        for b in &d.bins {
            assert!((b.r0 - 1.0).abs() < 0.1, "{b:?}");
        }
        assert!(d.modulation.slope.abs() < 0.6, "{:?}", d.modulation);
        assert_eq!(d.underpopulated().count(), 0);
    }

    #[test]
    fn known_modulator_recovered() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let unit = QGaussian::new(QGaussianParams::new(5.0, 1.0).unwrap()).unwrap();
        let m: Vec<f64> = (0..300_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = m.iter().map(|&v| (1.0 + 2.5 * v.abs()) * unit.sample(&mut rng)).collect();
        let d = decompose_with_modulator(&r, &m, 5.0, DecomposeOptions::default()).unwrap();
        assert_relative_eq!(d.modulation.intercept, 1.0, max_relative = 0.03);
        assert_relative_eq!(d.modulation.slope, 2.5, max_relative = 0.03);
    }

    #[test]
    fn small_bins_are_flagged() {
        let s = ReturnSeries::new(
            (0..2000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect(),
            1.0,
            Provenance::Synthetic { seed: 0 },
        )
        .unwrap();
        let d = decompose_empirical(&s, 10, 5.0).unwrap();
        assert_eq!(d.underpopulated().count(), 20);
    }

    fn tick(s: i64, price: f64) -> Tick {
        Tick { time_ms: s * 1000, price }
    }

    #[test]
    fn tick_examples() {
        let bars = aggregate_ticks(&[tick(60, 100.0), tick(70, 101.0)], Duration::from_secs(60), "t").unwrap();
        assert_eq!(bars.counts, vec![2]);
        assert_relative_eq!(bars.returns.values[0], 1.01f64.ln(), max_relative = 1e-14);

        let bars = aggregate_ticks(&[tick(0, 10.0), tick(130, 11.0)], Duration::from_secs(60), "t").unwrap();
        assert_eq!(bars.counts, vec![1, 0, 1]);
        assert_eq!(bars.returns.values, vec![0.0, 0.0, 0.0]);

        let bars = aggregate_ticks(&[tick(5, 50.0), tick(6, 50.0)], Duration::from_secs(60), "t").unwrap();
        assert_eq!((bars.counts[0], bars.returns.values[0]), (2, 0.0));
    }

    #[test]
    fn bar_return_is_sum_of_tick_returns() {
        let prices = [100.0, 100.5, 99.8, 101.2, 100.9];
        let ticks: Vec<Tick> = prices.iter().enumerate().map(|(i, &p)| tick(i as i64, p)).collect();
        let bars = aggregate_ticks(&ticks, Duration::from_secs(60), "t").unwrap();
        let summed: f64 = prices.windows(2).map(|w| (w[1] / w[0]).ln()).sum();
        assert_relative_eq!(bars.returns.values[0], summed, max_relative = 1e-12);
    }

    #[test]
    fn tick_errors() {
        let err = aggregate_ticks(&[tick(10, 1.0), tick(5, 1.0)], Duration::from_secs(60), "t").unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimestamps { row: 1 }));
        let err = aggregate_ticks(&[tick(10, 0.0)], Duration::from_secs(60), "t").unwrap_err();
        assert!(matches!(err, Error::NonPositivePrice { row: 0, .. }));
        assert!(aggregate_ticks(&[], Duration::from_secs(60), "t").is_err());
    }
}
