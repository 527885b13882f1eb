//! The two-power multiplicative SDE and its variable-step discretization.
//!
//! In scaled variables `x = r / r0`, `t_s = sigma^2 r0^(2(eta - 1)) t` the
//! model reads
//!
//! ```text
//! dx = (eta - lambda/2 - (x eps^eta)^2) (1 + x^2)^(eta - 1) / (sqrt(1 + x^2) eps + 1)^2 x dt_s
//!      + (1 + x^2)^(eta/2) / (sqrt(1 + x^2) eps + 1) dW_s
//! ```
//!
//! and `eps = 0` gives the simple SDE whose stationary density is the
//! q-Gaussian with exponent `lambda` and unit scale.
//!
//! The solver uses the step `h_k = kappa^2 (sqrt(x_k^2 + 1) eps + 1)^2 / (x_k^2 + 1)^(eta - 1)`,
//! under which the Euler-Maruyama update becomes
//!
//! ```text
//! x_{k+1} = x_k + kappa^2 (eta - lambda/2 - (x_k eps^eta)^2) x_k + kappa sqrt(x_k^2 + 1) e_k
//! t_{k+1} = t_k + h_k
//! ```
//!
//! so every step changes `x` by a roughly constant relative amount.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::qgaussian::QGaussianParams;
use crate::series::{Provenance, ReturnSeries};

/// `|x|` beyond which a run is aborted as divergent.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// Coefficients of the simple and two-power SDEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeParams {
    /// Multiplicativity exponent.
    pub eta: f64,
    /// Exponent of the stationary q-Gaussian.
    pub lambda: f64,
    /// Regime split; zero reduces the two-power SDE to the simple one.
    pub epsilon: f64,
    /// Physical scale of the variable (unscaled form only).
    pub r0: f64,
    /// Noise amplitude (unscaled form only).
    pub sigma: f64,
}

impl SdeParams {
    /// Scaled parameters with `r0 = sigma = 1`.
    pub fn new(eta: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            eta,
            lambda,
            epsilon,
            r0: 1.0,
            sigma: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Reference parameters `eta = 5/2`, `lambda = 3.6`, `eps = 0.01` in
    /// scaled units.
    pub fn preset() -> Self {
        Self {
            eta: 2.5,
            lambda: 3.6,
            epsilon: 0.01,
            r0: 1.0,
            sigma: 1.0,
        }
    }

    pub fn with_scale(mut self, r0: f64, sigma: f64) -> Result<Self> {
        self.r0 = r0;
        self.sigma = sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 1.0) {
            return Err(Error::invalid(format!("η must be > 1, got {}", self.eta)));
        }
        if !(self.lambda.is_finite() && self.lambda > 1.0) {
            return Err(Error::invalid(format!(
                "λ must be > 1 for a normalizable stationary density, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid(format!("ε must be >= 0, got {}", self.epsilon)));
        }
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(Error::invalid(format!("r0 must be > 0, got {}", self.r0)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!("σ must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Checks the range `4 - eta < lambda < 1 + 2 eta` in which the closed-form
    /// power spectrum holds (equivalently `0.5 < beta < 2`).
    pub fn validate_spectral_regime(&self) -> Result<()> {
        self.validate()?;
        let (lo, hi) = (4.0 - self.eta, 1.0 + 2.0 * self.eta);
        if !(self.lambda > lo && self.lambda < hi) {
            return Err(Error::invalid(format!(
                "λ outside (4−η, 1+2η): λ = {} not in ({lo}, {hi})",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Drift of the scaled two-power SDE.
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        let s2 = 1.0 + x * x;
        let d = s2.sqrt() * self.epsilon + 1.0;
        let xe = x * self.epsilon.powf(self.eta);
        (self.eta - 0.5 * self.lambda - xe * xe) * s2.powf(self.eta - 1.0) / (d * d) * x
    }

    /// Diffusion of the scaled two-power SDE.
    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        let s2 = 1.0 + x * x;
        s2.powf(0.5 * self.eta) / (s2.sqrt() * self.epsilon + 1.0)
    }

    /// Variable integration step `h` at state `x`.
    #[inline]
    pub fn step_size(&self, x: f64, kappa: f64) -> f64 {
        let s2 = 1.0 + x * x;
        let d = s2.sqrt() * self.epsilon + 1.0;
        kappa * kappa * (d * d) / s2.powf(self.eta - 1.0)
    }

    /// Diffusion `sigma (r0^2 + r^2)^(eta/2)` of the unscaled simple SDE.
    pub fn diffusion_unscaled(&self, r: f64) -> f64 {
        self.sigma * (self.r0 * self.r0 + r * r).powf(0.5 * self.eta)
    }

    /// Derivative of [`SdeParams::diffusion_unscaled`] with respect to `r`.
    pub fn diffusion_unscaled_derivative(&self, r: f64) -> f64 {
        self.sigma * self.eta * r * (self.r0 * self.r0 + r * r).powf(0.5 * self.eta - 1.0)
    }

    /// Drift `sigma^2 (eta - lambda/2) (r0^2 + r^2)^(eta - 1) r` of the
    /// unscaled simple SDE.
    pub fn drift_unscaled(&self, r: f64) -> f64 {
        self.sigma
            * self.sigma
            * (self.eta - 0.5 * self.lambda)
            * (self.r0 * self.r0 + r * r).powf(self.eta - 1.0)
            * r
    }

    /// Stationary density of the scaled simple SDE (`eps = 0`).
    pub fn stationary_density(&self) -> QGaussianParams {
        QGaussianParams {
            lambda: self.lambda,
            r0: 1.0,
        }
    }

    /// Factor converting physical time to scaled time, `sigma^2 r0^(2(eta - 1))`.
    pub fn time_scale(&self) -> f64 {
        self.sigma * self.sigma * self.r0.powf(2.0 * (self.eta - 1.0))
    }
}

/// Drift of the scaled two-power SDE.
pub fn drift(x: f64, p: &SdeParams) -> f64 {
    p.drift(x)
}

/// Diffusion of the scaled two-power SDE.
pub fn diffusion(x: f64, p: &SdeParams) -> f64 {
    p.diffusion(x)
}

/// Drift that makes the q-Gaussian `(lambda, r0)` stationary for the Itô SDE
/// with diffusion `b`: `-(lambda/2) x / (r0^2 + x^2) b^2 + b b'`, with `b'`
/// supplied analytically.
pub fn drift_from_diffusion_exact(
    b: impl Fn(f64) -> f64,
    b_prime: impl Fn(f64) -> f64,
    lambda: f64,
    r0: f64,
    x: f64,
) -> f64 {
    let bx = b(x);
    -0.5 * lambda * x / (r0 * r0 + x * x) * bx * bx + bx * b_prime(x)
}

/// As [`drift_from_diffusion_exact`], differentiating `b` numerically with a
/// Richardson-extrapolated central difference.
pub fn drift_from_diffusion(b: impl Fn(f64) -> f64, lambda: f64, r0: f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(r0).max(1e-3);
    let central = |h: f64| (b(x + h) - b(x - h)) / (2.0 * h);
    let db = (4.0 * central(0.5 * h) - central(h)) / 3.0;
    let bx = b(x);
    -0.5 * lambda * x / (r0 * r0 + x * x) * bx * bx + bx * db
}

/// Deterministic parts of one scheme step at state `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeIncrement {
    /// `kappa^2 (eta - lambda/2 - (x eps^eta)^2) x`.
    pub drift: f64,
    /// `kappa sqrt(x^2 + 1)`, multiplied by the unit noise draw.
    pub noise_amplitude: f64,
    /// The variable step `h`.
    pub h: f64,
}

#[inline]
pub fn scheme_increment(x: f64, p: &SdeParams, kappa: f64) -> SchemeIncrement {
    Kernel::new(p, kappa).increment(x)
}

/// Per-run constants of the scheme.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    kappa: f64,
    k2: f64,
    epsilon: f64,
    eps_eta: f64,
    eta_m1: f64,
    /// `2 (eta - 1)` when it is a small integer, so `s2^(eta-1) = s^k`.
    int_power: Option<i32>,
    linear: f64,
}

impl Kernel {
    fn new(p: &SdeParams, kappa: f64) -> Self {
        Self {
            kappa,
            k2: kappa * kappa,
            epsilon: p.epsilon,
            eps_eta: p.epsilon.powf(p.eta),
            eta_m1: p.eta - 1.0,
            int_power: {
                let k = 2.0 * (p.eta - 1.0);
                (k.fract() == 0.0 && k.abs() <= 16.0).then_some(k as i32)
            },
            linear: p.eta - 0.5 * p.lambda,
        }
    }

    #[inline]
    fn increment(&self, x: f64) -> SchemeIncrement {
        let s2 = x * x + 1.0;
        let s = s2.sqrt();
        let d = s * self.epsilon + 1.0;
        let xe = x * self.eps_eta;
        SchemeIncrement {
            drift: self.k2 * (self.linear - xe * xe) * x,
            noise_amplitude: self.kappa * s,
            h: self.k2 * (d * d)
                / match self.int_power {
                    Some(k) => s.powi(k),
                    None => s2.powf(self.eta_m1),
                },
        }
    }
}

/// One step of the difference scheme for a given unit noise draw `noise`.
/// Returns `(x_{k+1}, h_k)`.
#[inline]
pub fn scheme_step(x: f64, p: &SdeParams, kappa: f64, noise: f64) -> (f64, f64) {
    let inc = scheme_increment(x, p, kappa);
    (x + inc.drift + inc.noise_amplitude * noise, inc.h)
}

/// When a run stops (after burn-in).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// A fixed number of recorded steps.
    Steps(u64),
    /// The first step at which accumulated scaled time reaches this value.
    Time(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Precision parameter of the variable step.
    pub kappa: f64,
    /// Steps discarded before recording starts.
    pub burn_in: u64,
    pub x_init: f64,
    pub seed: u64,
    pub stop: StopRule,
    /// Optional reflecting bound `|x| <= reflect_at`.
    ///
    /// With `eps = 0` and `lambda < 2 eta - 1` infinity is an exit boundary of
    /// the simple SDE and the unbounded scheme escapes to the overflow guard;
    /// a distant reflecting wall keeps the run stationary without visibly
    /// changing the density.
    pub reflect_at: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kappa: 0.01,
            burn_in: 1_000_000,
            x_init: 0.0,
            seed: 0,
            stop: StopRule::Steps(1_000_000),
            reflect_at: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid(format!(
                "κ must lie in (0, 1), got {}",
                self.kappa
            )));
        }
        if !self.x_init.is_finite() {
            return Err(Error::invalid("initial value must be finite"));
        }
        match self.stop {
            StopRule::Steps(0) => return Err(Error::invalid("step count must be >= 1")),
            StopRule::Time(t) if !(t.is_finite() && t > 0.0) => {
                return Err(Error::invalid(format!("t_end must be > 0, got {t}")))
            }
            _ => {}
        }
        if let Some(b) = self.reflect_at {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::invalid(format!("reflecting bound must be > 0, got {b}")));
            }
            if self.x_init.abs() > b {
                return Err(Error::invalid("initial value lies beyond the reflecting bound"));
            }
        }
        Ok(())
    }
}

/// One recorded step: the state `x` and the scaled time `h` it is held for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub x: f64,
    pub h: f64,
}

/// Serial driver of the difference scheme. One standard normal draw per step.
#[derive(Debug, Clone)]
pub struct Stepper {
    kernel: Kernel,
    reflect_at: Option<f64>,
    rng: ChaCha8Rng,
    x: f64,
    count: u64,
}

impl Stepper {
    pub fn new(params: SdeParams, cfg: &SolverConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        Ok(Self {
            kernel: Kernel::new(&params, cfg.kappa),
            reflect_at: cfg.reflect_at,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            x: cfg.x_init,
            count: 0,
        })
    }

    pub fn state(&self) -> f64 {
        self.x
    }

    /// Steps taken so far, burn-in included.
    pub fn steps_taken(&self) -> u64 {
        self.count
    }

    /// Advances one step and returns the state that was held and for how long.
    #[inline]
    pub fn step(&mut self) -> Result<Step> {
        let noise: f64 = StandardNormal.sample(&mut self.rng);
        let x = self.x;
        let inc = self.kernel.increment(x);
        let h = inc.h;
        let mut next = x + inc.drift + inc.noise_amplitude * noise;
        if let Some(b) = self.reflect_at {
            let m = next.abs();
            if m > b {
                next = next.signum() * (2.0 * b - m).max(-b);
            }
        }
        self.count += 1;
        if !next.is_finite() || next.abs() > OVERFLOW_GUARD {
            return Err(Error::Divergence {
                step: self.count,
                value: next.abs(),
                limit: OVERFLOW_GUARD,
            });
        }
        self.x = next;
        Ok(Step { x, h })
    }

    pub fn burn_in(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Totals of a streamed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub total_time: f64,
}

/// Compensated running sum, used for the scaled clock where increments span
/// many orders of magnitude.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Runs burn-in, then feeds every recorded step to `sink` until `cfg.stop`.
pub fn run(params: SdeParams, cfg: &SolverConfig, mut sink: impl FnMut(Step)) -> Result<RunSummary> {
    let mut stepper = Stepper::new(params, cfg)?;
    stepper.burn_in(cfg.burn_in)?;
    let mut clock = KahanSum::default();
    let mut steps = 0u64;
    loop {
        let s = stepper.step()?;
        clock.add(s.h);
        steps += 1;
        sink(s);
        let done = match cfg.stop {
            StopRule::Steps(n) => steps >= n,
            StopRule::Time(t) => clock.value() >= t,
        };
        if done {
            return Ok(RunSummary {
                steps,
                total_time: clock.value(),
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// `x` and `t_s`.
    Scaled,
    /// `r = r0 x` and physical time.
    Physical,
}

/// A simulated path: `values[k]` is held from `times[k]` for `steps[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub steps: Vec<f64>,
    pub seed: u64,
    pub params: SdeParams,
    pub config: SolverConfig,
    pub units: Units,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time at which the last sample ends.
    pub fn end_time(&self) -> f64 {
        match (self.times.last(), self.steps.last()) {
            (Some(t), Some(h)) => t + h,
            _ => 0.0,
        }
    }

    /// Checks lengths, finiteness, step positivity and monotone times.
    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if self.times.len() != n || self.steps.len() != n {
            return Err(Error::Format(format!(
                "trajectory columns differ in length: {} times, {} values, {} steps",
                self.times.len(),
                n,
                self.steps.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at sample {i}")));
        }
        if let Some(i) = self.steps.iter().position(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::Format(format!("non-positive step at sample {i}")));
        }
        if let Some(i) = self.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Format(format!("times not increasing at sample {}", i + 1)));
        }
        Ok(())
    }
}

/// Simulates and records the whole path.
pub fn simulate(params: SdeParams, cfg: &SolverConfig) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut steps = Vec::new();
    let mut clock = KahanSum::default();
    run(params, cfg, |s| {
        times.push(clock.value());
        values.push(s.x);
        steps.push(s.h);
        clock.add(s.h);
    })?;
    Ok(Trajectory {
        times,
        values,
        steps,
        seed: cfg.seed,
        params,
        config: *cfg,
        units: Units::Scaled,
    })
}

/// Converts a scaled trajectory to physical units: `r = r0 x`,
/// `t = t_s / (sigma^2 r0^(2(eta - 1)))`.
pub fn rescale(traj: &Trajectory, r0: f64, sigma: f64, eta: f64) -> Result<Trajectory> {
    let factor = scale_factor(r0, sigma, eta)?;
    Ok(map_units(traj, r0, 1.0 / factor, Units::Physical))
}

/// Inverse of [`rescale`].
pub fn unscale(traj: &Trajectory, r0: f64, sigma: f64, eta: f64) -> Result<Trajectory> {
    let factor = scale_factor(r0, sigma, eta)?;
    Ok(map_units(traj, 1.0 / r0, factor, Units::Scaled))
}

fn scale_factor(r0: f64, sigma: f64, eta: f64) -> Result<f64> {
    if !(r0 > 0.0 && sigma > 0.0 && r0.is_finite() && sigma.is_finite() && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "rescaling needs r0 > 0 and σ > 0, got r0 = {r0}, σ = {sigma}"
        )));
    }
    Ok(sigma * sigma * r0.powf(2.0 * (eta - 1.0)))
}

fn map_units(traj: &Trajectory, value_factor: f64, time_factor: f64, units: Units) -> Trajectory {
    Trajectory {
        times: traj.times.iter().map(|t| t * time_factor).collect(),
        values: traj.values.iter().map(|x| x * value_factor).collect(),
        steps: traj.steps.iter().map(|h| h * time_factor).collect(),
        units,
        ..traj.clone()
    }
}

/// Which function of the state a windowed integral accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Observable {
    #[default]
    Signed,
    Absolute,
}

impl Observable {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Observable::Signed => x,
            Observable::Absolute => x.abs(),
        }
    }
}

const WINDOW_SLACK: f64 = 1e-12;

/// Streams a left-held, unevenly sampled signal into averages over
/// consecutive windows of length `tau`.
#[derive(Debug, Clone)]
pub struct WindowIntegrator {
    tau: f64,
    remaining: f64,
    acc: f64,
    out: Vec<f64>,
}

impl WindowIntegrator {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("window length τ must be > 0, got {tau}")));
        }
        Ok(Self {
            tau,
            remaining: tau,
            acc: 0.0,
            out: Vec::new(),
        })
    }

    pub fn with_capacity(tau: f64, windows: usize) -> Result<Self> {
        let mut w = Self::new(tau)?;
        w.out.reserve(windows);
        Ok(w)
    }

    /// Holds `value` for a duration `h`.
    #[inline]
    pub fn push(&mut self, value: f64, mut h: f64) {
        // steps that land within rounding of a boundary close the window
        while h >= self.remaining - WINDOW_SLACK * self.tau {
            self.acc += value * self.remaining;
            h = (h - self.remaining).max(0.0);
            self.out.push(self.acc / self.tau);
            self.acc = 0.0;
            self.remaining = self.tau;
        }
        self.acc += value * h;
        self.remaining -= h;
    }

    /// Number of completed windows.
    pub fn completed(&self) -> usize {
        self.out.len()
    }

    /// Completed window means; a trailing partial window is dropped.
    pub fn finish(self) -> Vec<f64> {
        self.out
    }
}

/// Windowed means `X_m = (1/tau) * integral of x over [m tau, (m+1) tau)` of
/// a recorded trajectory, with each sample held over its step.
pub fn integrate_window(traj: &Trajectory, tau: f64) -> Result<ReturnSeries> {
    if traj.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    integrate_held(
        &traj.values,
        &traj.steps,
        tau,
        Provenance::Synthetic { seed: traj.seed },
    )
}

/// Windowed means of `values[k]` held for `steps[k]`.
pub fn integrate_held(values: &[f64], steps: &[f64], tau: f64, meta: Provenance) -> Result<ReturnSeries> {
    if values.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    if values.len() != steps.len() {
        return Err(Error::invalid("values and steps differ in length"));
    }
    let mut w = WindowIntegrator::new(tau)?;
    let span: f64 = steps.iter().sum();
    if span < tau {
        return Err(Error::TooShort(format!(
            "trajectory spans {span} scaled time, shorter than τ = {tau}"
        )));
    }
    for (&x, &h) in values.iter().zip(steps) {
        w.push(x, h);
    }
    ReturnSeries::new(w.finish(), tau, meta)
}

/// Simulates until `n_windows` windows of length `tau` are complete, without
/// storing the path. `cfg.stop` is ignored.
pub fn simulate_windowed(
    params: SdeParams,
    cfg: &SolverConfig,
    tau: f64,
    n_windows: usize,
    observable: Observable,
) -> Result<ReturnSeries> {
    if n_windows == 0 {
        return Err(Error::invalid("window count must be >= 1"));
    }
    let mut w = WindowIntegrator::with_capacity(tau, n_windows)?;
    let mut stepper = Stepper::new(params, cfg)?;
    stepper.burn_in(cfg.burn_in)?;
    while w.completed() < n_windows {
        let s = stepper.step()?;
        w.push(observable.apply(s.x), s.h);
    }
    let mut values = w.finish();
    values.truncate(n_windows);
    ReturnSeries::new(values, tau, Provenance::Synthetic { seed: cfg.seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(seed: u64, steps: u64) -> SolverConfig {
        SolverConfig {
            seed,
            burn_in: 0,
            stop: StopRule::Steps(steps),
            ..SolverConfig::default()
        }
    }

    #[test]
    fn drift_examples() {
        let p = SdeParams::new(2.5, 3.6, 0.0).unwrap();
        assert_eq!(p.drift(0.0), 0.0);
        // (2.5 - 1.8) * 2^1.5
        assert_relative_eq!(p.drift(1.0), 0.7 * 2f64.powf(1.5), max_relative = 1e-14);
        assert_relative_eq!(p.drift(1.0), 1.979_898_987_322_333, max_relative = 1e-12);
        assert_relative_eq!(p.diffusion(1.0), 2f64.powf(1.25), max_relative = 1e-14);
        let flat = SdeParams::new(1.8, 3.6, 0.0).unwrap();
        for x in [-5.0, -0.3, 0.7, 40.0] {
            assert_eq!(flat.drift(x), 0.0);
        }
    }

    #[test]
    fn symmetry() {
        let p = SdeParams::preset();
        for x in [0.1, 1.0, 37.0, 1e4] {
            assert_eq!(p.drift(-x), -p.drift(x));
            assert_eq!(p.diffusion(-x), p.diffusion(x));
        }
    }

    #[test]
    fn drift_from_diffusion_examples() {
        let p = SdeParams::new(2.0, 4.0, 0.0)
            .unwrap()
            .with_scale(1.0, 1.0)
            .unwrap();
        // eta = 1 is outside SdeParams' range, so build b by hand
        let b = |r: f64| (1.0 + r * r).powf(0.5);
        let db = |r: f64| r / (1.0 + r * r).sqrt();
        assert_relative_eq!(drift_from_diffusion_exact(b, db, 4.0, 1.0, 1.0), -1.0, max_relative = 1e-14);
        assert_relative_eq!(drift_from_diffusion(b, 4.0, 1.0, 1.0), -1.0, max_relative = 1e-9);
        assert_eq!(drift_from_diffusion(|x| p.diffusion_unscaled(x), 4.0, 1.0, 0.0), 0.0);
        let c = 1.7;
        assert_relative_eq!(
            drift_from_diffusion(|_| c, 2.0, 1.0, 1.0),
            -c * c / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn scheme_examples() {
        let p = SdeParams::preset();
        for noise in [-1.3, 0.0, 0.4] {
            let (x1, h) = scheme_step(0.0, &p, 0.01, noise);
            assert_eq!(x1, 0.01 * noise);
            assert_relative_eq!(h, 1e-4 * 1.01f64.powi(2), max_relative = 1e-14);
        }
        let (x1, h) = scheme_step(1.0, &p, 0.01, 0.0);
        assert_relative_eq!(x1, 1.00007, max_relative = 1e-9);
        // 1e-4 (sqrt(2) 0.01 + 1)^2 / 2^1.5
        assert_relative_eq!(h, 3.6362e-5, max_relative = 1e-4);
    }

    #[test]
    fn step_is_euler_maruyama() {
        let p = SdeParams::preset();
        let kappa = 0.01;
        for x in [-3e4, -80.0, -1.0, 0.0, 0.5, 99.0, 2e3] {
            let inc = scheme_increment(x, &p, kappa);
            assert_relative_eq!(inc.h, p.step_size(x, kappa), max_relative = 1e-14);
            let expect = p.drift(x) * inc.h;
            assert!((inc.drift - expect).abs() <= 1e-12 * expect.abs(), "x={x}");
            let expect = p.diffusion(x) * inc.h.sqrt();
            assert!((inc.noise_amplitude - expect).abs() <= 1e-12 * expect, "x={x}");
        }
    }

    #[test]
    fn deterministic_and_finite() {
        let p = SdeParams::preset();
        let a = simulate(p, &cfg(7, 10_000)).unwrap();
        let b = simulate(p, &cfg(7, 10_000)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let c = simulate(p, &cfg(8, 10_000)).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn time_stop_rule() {
        let p = SdeParams::preset();
        let c = SolverConfig {
            stop: StopRule::Time(0.5),
            burn_in: 0,
            ..SolverConfig::default()
        };
        let t = simulate(p, &c).unwrap();
        assert!(t.end_time() >= 0.5);
        assert!(t.times.last().copied().unwrap() < 0.5);
    }

    #[test]
    fn unbounded_simple_sde_diverges() {
        // infinity is reachable for eps = 0, lambda < 2 eta - 1
        let p = SdeParams::new(2.5, 3.6, 0.0).unwrap();
        let c = SolverConfig {
            seed: 7,
            stop: StopRule::Steps(20_000_000),
            ..SolverConfig::default()
        };
        let err = run(p, &c, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn reflection_bounds_path() {
        let p = SdeParams::new(2.5, 3.6, 0.0).unwrap();
        let c = SolverConfig {
            reflect_at: Some(50.0),
            ..cfg(3, 2_000_000)
        };
        run(p, &c, |s| assert!(s.x.abs() <= 50.0)).unwrap();
    }

    #[test]
    fn rejects_bad_config() {
        let p = SdeParams::preset();
        assert!(Stepper::new(p, &SolverConfig { kappa: 0.0, ..Default::default() }).is_err());
        assert!(Stepper::new(p, &SolverConfig { stop: StopRule::Time(-1.0), ..Default::default() }).is_err());
        assert!(SdeParams::new(1.0, 3.6, 0.0).is_err());
        assert!(SdeParams::new(2.5, 3.6, -0.1).is_err());
    }

    #[test]
    fn spectral_regime() {
        assert!(SdeParams::preset().validate_spectral_regime().is_ok());
        let err = SdeParams::new(2.5, 6.5, 0.0).unwrap().validate_spectral_regime().unwrap_err();
        assert!(err.to_string().contains("λ outside (4−η, 1+2η)"));
        assert!(SdeParams::new(2.5, 1.2, 0.0).unwrap().validate_spectral_regime().is_err());
    }

    #[test]
    fn rescale_examples() {
        let p = SdeParams::preset();
        let t = simulate(p, &cfg(1, 100)).unwrap();
        let same = rescale(&t, 1.0, 1.0, 2.5).unwrap();
        assert_eq!(same.values, t.values);
        assert_eq!(same.times, t.times);
        let phys = rescale(&t, 0.2, 3.0, 2.5).unwrap();
        assert_relative_eq!(phys.values[5], 0.2 * t.values[5]);
        let back = unscale(&phys, 0.2, 3.0, 2.5).unwrap();
        for (a, b) in back.values.iter().zip(&t.values) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        for (a, b) in back.times.iter().zip(&t.times) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        assert!(rescale(&t, 0.0, 1.0, 2.5).is_err());
    }

    #[test]
    fn physical_window_length() {
        // sigma^2 = 1e-4 / 60 s at r0 = 1 maps tau_s = 1e-4 onto 60 s
        let sigma = (1e-4f64 / 60.0).sqrt();
        let p = SdeParams::preset().with_scale(1.0, sigma).unwrap();
        assert_relative_eq!(1e-4 / p.time_scale(), 60.0, max_relative = 1e-12);
    }

    fn traj(values: Vec<f64>, steps: Vec<f64>) -> Trajectory {
        let mut t = 0.0;
        let times = steps
            .iter()
            .map(|h| {
                let c = t;
                t += h;
                c
            })
            .collect();
        Trajectory {
            times,
            values,
            steps,
            seed: 0,
            params: SdeParams::preset(),
            config: SolverConfig::default(),
            units: Units::Scaled,
        }
    }

    #[test]
    fn window_examples() {
        let t = traj(vec![3.5; 10], vec![0.3; 10]);
        let x = integrate_window(&t, 1.0).unwrap();
        assert_eq!(x.len(), 3);
        for v in x.values {
            assert_relative_eq!(v, 3.5, max_relative = 1e-14);
        }
        let t = traj(vec![0.0, 2.0], vec![0.5, 0.5]);
        let x = integrate_window(&t, 1.0).unwrap();
        assert_eq!(x.values, vec![1.0]);
        assert_eq!(x.dt, 1.0);
    }

    #[test]
    fn window_errors() {
        let empty = traj(vec![], vec![]);
        assert!(matches!(integrate_window(&empty, 1.0), Err(Error::Empty(_))));
        let short = traj(vec![1.0], vec![0.1]);
        assert!(matches!(integrate_window(&short, 1.0), Err(Error::TooShort(_))));
        assert!(integrate_window(&short, 0.0).is_err());
    }

    #[test]
    fn window_straddling_steps() {
        // a single long step spans several windows
        let t = traj(vec![1.0, 4.0], vec![2.5, 1.5]);
        let x = integrate_window(&t, 1.0).unwrap();
        assert_eq!(x.values, vec![1.0, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn streamed_windows_match_recorded() {
        let p = SdeParams::preset();
        let c = cfg(11, 200_000);
        let t = simulate(p, &c).unwrap();
        let tau = 1e-3;
        let rec = integrate_window(&t, tau).unwrap();
        let n = rec.len();
        let streamed = simulate_windowed(p, &c, tau, n, Observable::Signed).unwrap();
        assert_eq!(streamed.len(), n);
        for (a, b) in rec.values.iter().zip(&streamed.values) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }
}
