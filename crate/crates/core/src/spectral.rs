//! Spectral densities, power-law fits, histogram densities and the
//! moving-average / correlation helpers used on return series.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::sde::SdeParams;
use crate::series::{Provenance, ReturnSeries};

/// Default resolution of the logarithmic re-binning applied before fits.
pub const BINS_PER_DECADE: usize = 20;

/// Raw frequency bins a fit range must contain.
pub const MIN_FIT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Taper {
    #[default]
    Hann,
    Rectangular,
}

impl Taper {
    pub fn label(self) -> &'static str {
        match self {
            Taper::Hann => "hann",
            Taper::Rectangular => "rectangular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" | "hanning" => Some(Taper::Hann),
            "rect" | "rectangular" | "boxcar" | "none" => Some(Taper::Rectangular),
            _ => None,
        }
    }

    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            // periodic Hann
            Taper::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
                .collect(),
            Taper::Rectangular => vec![1.0; n],
        }
    }
}

/// One-sided power spectral density on positive frequencies (DC excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    /// Cycles per unit of the series' time step.
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub n_segments: usize,
    pub segment_len: usize,
    pub taper: Taper,
}

impl SpectrumEstimate {
    pub fn df(&self) -> f64 {
        match self.freqs.as_slice() {
            [f0, ..] => *f0,
            [] => 0.0,
        }
    }

    /// `sum S(f) df`, which approximates the series variance.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df()
    }

    /// Element-wise mean of spectra computed on identical grids.
    pub fn average(spectra: &[SpectrumEstimate]) -> Result<SpectrumEstimate> {
        let first = spectra.first().ok_or(Error::Empty("spectrum list"))?;
        if spectra.iter().any(|s| s.freqs != first.freqs) {
            return Err(Error::invalid("spectra to average must share one frequency grid"));
        }
        let k = spectra.len() as f64;
        let mut power = vec![0.0; first.power.len()];
        for s in spectra {
            for (acc, p) in power.iter_mut().zip(&s.power) {
                *acc += p;
            }
        }
        power.iter_mut().for_each(|p| *p /= k);
        Ok(SpectrumEstimate {
            freqs: first.freqs.clone(),
            power,
            n_segments: spectra.iter().map(|s| s.n_segments).sum(),
            segment_len: first.segment_len,
            taper: first.taper,
        })
    }
}

/// Averaged modified periodogram over `n_segments` half-overlapping
/// segments. Each segment is demeaned and tapered.
pub fn estimate_psd(series: &ReturnSeries, n_segments: usize, taper: Taper) -> Result<SpectrumEstimate> {
    if n_segments == 0 {
        return Err(Error::invalid("segment count must be >= 1"));
    }
    let n = series.len();
    if n < 2 * n_segments || n < 4 {
        return Err(Error::TooShort(format!(
            "{n} samples cannot hold {n_segments} half-overlapping segments"
        )));
    }
    // n = (K + 1) L / 2 for K segments of length L overlapping by L / 2
    let seg = 2 * n / (n_segments + 1);
    welch(&series.values, series.dt, seg, n_segments, taper)
}

/// As [`estimate_psd`] with a fixed segment length; as many half-overlapping
/// segments as fit are used.
pub fn estimate_psd_with_segment(
    series: &ReturnSeries,
    segment_len: usize,
    taper: Taper,
) -> Result<SpectrumEstimate> {
    let n = series.len();
    if segment_len < 4 || segment_len > n {
        return Err(Error::TooShort(format!(
            "segment length {segment_len} does not fit a series of {n} samples"
        )));
    }
    let hop = segment_len / 2;
    let k = (n - segment_len) / hop + 1;
    welch(&series.values, series.dt, segment_len, k, taper)
}

fn welch(values: &[f64], dt: f64, seg: usize, k: usize, taper: Taper) -> Result<SpectrumEstimate> {
    if seg < 4 {
        return Err(Error::TooShort(format!("segment length {seg} is too short")));
    }
    let hop = seg / 2;
    let window = taper.weights(seg);
    let win_energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let half = seg / 2;
    let mut acc = vec![0.0; half];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];

    for s in 0..k {
        let chunk = &values[s * hop..s * hop + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for ((b, &v), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf[1..=half]) {
            *a += c.norm_sqr();
        }
    }

    let fs = 1.0 / dt;
    let scale = 1.0 / (fs * win_energy * k as f64);
    let freqs = (1..=half).map(|i| i as f64 / (seg as f64 * dt)).collect();
    let power = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            // the Nyquist bin of an even-length segment has no mirror image
            let one_sided = if seg.is_multiple_of(2) && i + 1 == half { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    Ok(SpectrumEstimate {
        freqs,
        power,
        n_segments: k,
        segment_len: seg,
        taper,
    })
}

/// Closed-form spectrum `S(f) = A / f^beta` of the simple scaled SDE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawSpectrum {
    pub beta: f64,
    pub amplitude: f64,
}

impl PowerLawSpectrum {
    pub fn power(&self, f: f64) -> f64 {
        self.amplitude * f.powf(-self.beta)
    }
}

/// `beta = 1 + (lambda - 3) / (2 (eta - 1))`.
pub fn spectral_exponent(eta: f64, lambda: f64) -> f64 {
    1.0 + (lambda - 3.0) / (2.0 * (eta - 1.0))
}

/// Exponent and amplitude
///
/// ```text
/// beta = 1 + (lambda - 3) / (2 (eta - 1))
/// A    = (lambda - 1) Gamma(beta - 1/2) / (2 sqrt(pi) (eta - 1) sin(pi beta / 2))
///        * ((2 + lambda - 2 eta) / (2 pi))^(beta - 1)
/// ```
///
/// valid for `eta > 1` and `4 - eta < lambda < 1 + 2 eta`.
pub fn power_law_spectrum(p: &SdeParams) -> Result<PowerLawSpectrum> {
    let (eta, lambda) = (p.eta, p.lambda);
    if !(eta > 1.0 && eta.is_finite() && lambda.is_finite()) {
        return Err(Error::domain(format!("spectrum needs η > 1, got {eta}")));
    }
    if !(lambda > 4.0 - eta && lambda < 1.0 + 2.0 * eta) {
        return Err(Error::domain(format!(
            "λ outside (4−η, 1+2η): λ = {lambda}, η = {eta}"
        )));
    }
    let beta = spectral_exponent(eta, lambda);
    let base = (2.0 + lambda - 2.0 * eta) / (2.0 * PI);
    if base <= 0.0 && beta != 1.0 {
        return Err(Error::domain(format!(
            "amplitude undefined: 2 + λ − 2η = {} <= 0",
            2.0 + lambda - 2.0 * eta
        )));
    }
    let gamma = ln_gamma(beta - 0.5).exp();
    let amplitude = (lambda - 1.0) * gamma
        / (2.0 * PI.sqrt() * (eta - 1.0) * (0.5 * PI * beta).sin())
        * base.powf(beta - 1.0);
    Ok(PowerLawSpectrum { beta, amplitude })
}

/// `(beta, S(f))` of the closed-form spectrum at frequency `f`.
pub fn theoretical_spectrum(p: &SdeParams, f: f64) -> Result<(f64, f64)> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::domain(format!("frequency must be > 0, got {f}")));
    }
    let s = power_law_spectrum(p)?;
    Ok((s.beta, s.power(f)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    /// `beta`, the negative log-log slope.
    pub exponent: f64,
    /// `A` in `S = A f^-beta`.
    pub amplitude: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    /// RMS residual in natural-log units over the re-binned points.
    pub residual: f64,
    /// Re-binned points used.
    pub points: usize,
}

/// Geometric-mean re-binning of the positive spectrum values in
/// `[f_lo, f_hi]` onto `bins_per_decade` logarithmic bins. Returns
/// `(ln f, ln S)` pairs.
pub fn log_rebin(
    spec: &SpectrumEstimate,
    f_lo: f64,
    f_hi: f64,
    bins_per_decade: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(f_lo > 0.0 && f_hi > f_lo) {
        return Err(Error::invalid(format!(
            "fit range needs 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]"
        )));
    }
    if bins_per_decade == 0 {
        return Err(Error::invalid("bins per decade must be >= 1"));
    }
    let inside: Vec<(f64, f64)> = spec
        .freqs
        .iter()
        .zip(&spec.power)
        .filter(|(f, s)| **f >= f_lo && **f <= f_hi && **s > 0.0)
        .map(|(f, s)| (*f, *s))
        .collect();
    if inside.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientBins {
            f_lo,
            f_hi,
            found: inside.len(),
            needed: MIN_FIT_BINS,
        });
    }
    let width = std::f64::consts::LN_10 / bins_per_decade as f64;
    let origin = f_lo.ln();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut current = usize::MAX;
    let (mut sf, mut ss, mut cnt) = (0.0, 0.0, 0usize);
    for (f, s) in inside {
        let bin = ((f.ln() - origin) / width).floor() as usize;
        if bin != current && cnt > 0 {
            out.push((sf / cnt as f64, ss / cnt as f64));
            sf = 0.0;
            ss = 0.0;
            cnt = 0;
        }
        current = bin;
        sf += f.ln();
        ss += s.ln();
        cnt += 1;
    }
    if cnt > 0 {
        out.push((sf / cnt as f64, ss / cnt as f64));
    }
    Ok(out)
}

/// Least-squares power law over log-rebinned points in `[f_lo, f_hi]`,
/// [`BINS_PER_DECADE`] bins per decade.
pub fn fit_power_law(spec: &SpectrumEstimate, f_lo: f64, f_hi: f64) -> Result<PowerLawFit> {
    fit_power_law_binned(spec, f_lo, f_hi, BINS_PER_DECADE)
}

pub fn fit_power_law_binned(
    spec: &SpectrumEstimate,
    f_lo: f64,
    f_hi: f64,
    bins_per_decade: usize,
) -> Result<PowerLawFit> {
    let pts = log_rebin(spec, f_lo, f_hi, bins_per_decade)?;
    if pts.len() < 2 {
        return Err(Error::InsufficientBins {
            f_lo,
            f_hi,
            found: pts.len(),
            needed: 2,
        });
    }
    let (slope, intercept, residual) = least_squares_line(&pts);
    Ok(PowerLawFit {
        exponent: -slope,
        amplitude: intercept.exp(),
        f_lo,
        f_hi,
        residual,
        points: pts.len(),
    })
}

fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Continuous two-segment power law with a free crossover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokenPowerLawFit {
    /// Exponent below the crossover.
    pub low_exponent: f64,
    /// Exponent above the crossover.
    pub high_exponent: f64,
    pub crossover: f64,
    pub residual: f64,
}

/// Fits `ln S = a + b1 min(ln f - c, 0) + b2 max(ln f - c, 0)` to the
/// log-rebinned spectrum, scanning the crossover `c` over a grid with at
/// least `min_side` points on either side.
pub fn fit_broken_power_law(
    spec: &SpectrumEstimate,
    f_lo: f64,
    f_hi: f64,
    bins_per_decade: usize,
) -> Result<BrokenPowerLawFit> {
    let pts = log_rebin(spec, f_lo, f_hi, bins_per_decade)?;
    let min_side = 4;
    if pts.len() < 2 * min_side {
        return Err(Error::InsufficientBins {
            f_lo,
            f_hi,
            found: pts.len(),
            needed: 2 * min_side,
        });
    }
    let c_lo = pts[min_side - 1].0;
    let c_hi = pts[pts.len() - min_side].0;
    let grid = 400;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for i in 0..=grid {
        let c = c_lo + (c_hi - c_lo) * i as f64 / grid as f64;
        let Some((coef, rss)) = hinge_fit(&pts, c) else {
            continue;
        };
        if best.is_none_or(|b| rss < b.0) {
            best = Some((rss, c, coef[1], coef[2]));
        }
    }
    let (rss, c, b1, b2) = best.ok_or_else(|| Error::domain("broken power-law fit is singular"))?;
    Ok(BrokenPowerLawFit {
        low_exponent: -b1,
        high_exponent: -b2,
        crossover: c.exp(),
        residual: (rss / pts.len() as f64).sqrt(),
    })
}

fn hinge_fit(pts: &[(f64, f64)], c: f64) -> Option<([f64; 3], f64)> {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for &(x, y) in pts {
        let row = [1.0, (x - c).min(0.0), (x - c).max(0.0)];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let coef = solve3(ata, aty)?;
    let rss = pts
        .iter()
        .map(|&(x, y)| {
            let fit = coef[0] + coef[1] * (x - c).min(0.0) + coef[2] * (x - c).max(0.0);
            (y - fit).powi(2)
        })
        .sum();
    Some((coef, rss))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det(&m) / d;
    }
    Some(out)
}

/// Histogram bin layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    Linear { lo: f64, hi: f64, bins: usize },
    /// Logarithmically spaced edges on `[lo, hi]`, `lo > 0`.
    Log { lo: f64, hi: f64, bins: usize },
    /// Range taken from the data; log bins start at the smallest positive value.
    Auto { bins: usize, log: bool },
}

/// Whether densities are of `x` or of `|x|` (the latter compares with `2 P`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PdfMode {
    Signed,
    #[default]
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfEstimate {
    pub edges: Vec<f64>,
    /// Arithmetic midpoints for linear bins, geometric for log bins.
    pub centers: Vec<f64>,
    /// Weight per unit length, relative to the total weight of all samples
    /// (including any falling outside the bin range).
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
}

impl PdfEstimate {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }
}

/// Streaming weighted histogram. Weights let a variable-step trajectory be
/// histogrammed by time spent in each bin.
#[derive(Debug, Clone)]
pub struct PdfAccumulator {
    lo: f64,
    hi: f64,
    log: bool,
    inv_width: f64,
    edges: Vec<f64>,
    weights: Vec<f64>,
    counts: Vec<u64>,
    total: f64,
}

impl PdfAccumulator {
    /// `binning` must not be [`Binning::Auto`].
    pub fn new(binning: Binning) -> Result<Self> {
        let (lo, hi, bins, log) = match binning {
            Binning::Linear { lo, hi, bins } => (lo, hi, bins, false),
            Binning::Log { lo, hi, bins } => (lo, hi, bins, true),
            Binning::Auto { .. } => {
                return Err(Error::invalid("automatic binning needs the data; use estimate_pdf"))
            }
        };
        if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() || (log && lo <= 0.0) {
            return Err(Error::invalid(format!(
                "bad bin layout: [{lo}, {hi}] with {bins} bins (log = {log})"
            )));
        }
        let (a, b) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
        let step = (b - a) / bins as f64;
        let edges = (0..=bins)
            .map(|i| {
                let e = a + step * i as f64;
                if log {
                    e.exp()
                } else {
                    e
                }
            })
            .collect();
        Ok(Self {
            lo: a,
            hi: b,
            log,
            inv_width: 1.0 / step,
            edges,
            weights: vec![0.0; bins],
            counts: vec![0; bins],
            total: 0.0,
        })
    }

    #[inline]
    pub fn push(&mut self, value: f64, weight: f64) {
        self.total += weight;
        let v = if self.log {
            if value <= 0.0 {
                return;
            }
            value.ln()
        } else {
            value
        };
        if v < self.lo || v > self.hi {
            return;
        }
        let i = (((v - self.lo) * self.inv_width) as usize).min(self.weights.len() - 1);
        self.weights[i] += weight;
        self.counts[i] += 1;
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn finish(self) -> PdfEstimate {
        let centers = self
            .edges
            .windows(2)
            .map(|w| if self.log { (w[0] * w[1]).sqrt() } else { 0.5 * (w[0] + w[1]) })
            .collect();
        let density = self
            .weights
            .iter()
            .zip(self.edges.windows(2))
            .map(|(w, e)| if self.total > 0.0 { w / (self.total * (e[1] - e[0])) } else { 0.0 })
            .collect();
        PdfEstimate {
            edges: self.edges,
            centers,
            density,
            counts: self.counts,
        }
    }
}

/// Normalized histogram density of a series (or of its absolute values).
pub fn estimate_pdf(series: &ReturnSeries, binning: Binning, mode: PdfMode) -> Result<PdfEstimate> {
    if series.is_empty() {
        return Err(Error::Empty("series"));
    }
    let map = |v: f64| match mode {
        PdfMode::Signed => v,
        PdfMode::Absolute => v.abs(),
    };
    let binning = match binning {
        Binning::Auto { bins, log } => {
            let vals = series.values.iter().map(|&v| map(v));
            let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            if log {
                let lo = vals.filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
                if !(lo.is_finite() && hi > lo) {
                    return Err(Error::invalid("log binning needs at least two distinct positive values"));
                }
                Binning::Log { lo, hi, bins }
            } else {
                let lo = vals.fold(f64::INFINITY, f64::min);
                if !(hi > lo) {
                    return Err(Error::invalid("histogram of a constant series"));
                }
                Binning::Linear { lo, hi, bins }
            }
        }
        b => b,
    };
    let mut acc = PdfAccumulator::new(binning)?;
    for &v in &series.values {
        acc.push(map(v), 1.0);
    }
    Ok(acc.finish())
}

/// Centered moving average `MA_t = (1/n) sum_{j = t - n/2}^{t + n/2 - 1} r_j`
/// for every `t` whose window fits; output element `i` covers `r_i ..= r_{i+n-1}`.
pub fn moving_average(series: &ReturnSeries, n: usize) -> Result<ReturnSeries> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "moving-average window must be even and >= 2, got {n}"
        )));
    }
    let len = series.len();
    if len < n {
        return Err(Error::TooShort(format!(
            "moving-average window {n} exceeds series length {len}"
        )));
    }
    let v = &series.values;
    let inv = 1.0 / n as f64;
    let mut out = Vec::with_capacity(len - n + 1);
    let mut sum = 0.0;
    for i in 0..=len - n {
        // periodic full re-summation bounds the drift of the running sum
        if i % 1024 == 0 {
            sum = v[i..i + n].iter().sum();
        } else {
            sum += v[i + n - 1] - v[i - 1];
        }
        out.push(sum * inv);
    }
    ReturnSeries::new(
        out,
        series.dt,
        Provenance::Derived {
            from: format!("moving average (n = {n})"),
        },
    )
}

/// Pearson correlation coefficient.
pub fn correlate(a: &ReturnSeries, b: &ReturnSeries) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::TooShort("correlation needs at least 2 samples".into()));
    }
    let (ma, mb) = (a.mean(), b.mean());
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance("first series"));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance("second series"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
