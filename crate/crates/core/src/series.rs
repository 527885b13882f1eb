use crate::error::{Error, Result};

/// Where a series came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Generated by this crate from the given seed.
    Synthetic { seed: u64 },
    /// Read from an external source (file path, ticker, ...).
    Ingested { source: String },
    /// Computed from another series, e.g. a moving average.
    Derived { from: String },
}

/// Uniformly spaced observations, used for synthetic returns, windowed SDE
/// output, ingested minute bars and trading-activity counts alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub values: Vec<f64>,
    /// Spacing between observations, in the series' own time unit.
    pub dt: f64,
    pub meta: Provenance,
}

impl ReturnSeries {
    pub fn new(values: Vec<f64>, dt: f64, meta: Provenance) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("time step must be > 0, got {dt}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "series value at index {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { values, dt, meta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same series with every value replaced by its absolute value.
    pub fn abs(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.abs()).collect(),
            dt: self.dt,
            meta: self.meta.clone(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance (`n - 1` denominator).
    pub fn variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}
