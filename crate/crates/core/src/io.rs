//! File formats: binary and CSV trajectories, return and tick CSVs, and
//! spectrum / histogram tables.
//!
//! Floats are written in Rust's shortest round-trip form, so a file read
//! back reproduces the in-memory values exactly and identical inputs give
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::returns::Tick;
use crate::sde::{SdeParams, SolverConfig, StopRule, Trajectory, Units};
use crate::series::{Provenance, ReturnSeries};
use crate::spectral::{PdfEstimate, SpectrumEstimate};

const MAGIC: &[u8; 8] = b"QSDETRJ1";

fn f64_or_nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn nan_to_none(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

/// Writes the trajectory with its parameters and solver settings.
///
/// Layout (little endian): magic, 9 f64 (`eta lambda eps r0 sigma kappa
/// x_init reflect_at t_end`, NaN meaning absent), 4 u64 (`seed burn_in
/// steps n`, `steps = 0` when a time stop rule was used), a units byte, then
/// `n` records `(t, x, h)`.
pub fn write_trajectory_bin(path: &Path, traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    let p = traj.params;
    let c = traj.config;
    let (steps, t_end) = match c.stop {
        StopRule::Steps(n) => (n, None),
        StopRule::Time(t) => (0, Some(t)),
    };
    w.write_all(MAGIC)?;
    for v in [
        p.eta,
        p.lambda,
        p.epsilon,
        p.r0,
        p.sigma,
        c.kappa,
        c.x_init,
        f64_or_nan(c.reflect_at),
        f64_or_nan(t_end),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [traj.seed, c.burn_in, steps, traj.len() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&[match traj.units {
        Units::Scaled => 0u8,
        Units::Physical => 1u8,
    }])?;
    for k in 0..traj.len() {
        for v in [traj.times[k], traj.values[k], traj.steps[k]] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("trajectory file is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_trajectory_bin(path: &Path) -> Result<Trajectory> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a trajectory file (bad magic)".into()));
    }
    let mut h = [0.0; 9];
    for v in h.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    let seed = read_u64(&mut r)?;
    let burn_in = read_u64(&mut r)?;
    let steps = read_u64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    let mut ub = [0u8; 1];
    r.read_exact(&mut ub).map_err(truncated)?;
    let units = match ub[0] {
        0 => Units::Scaled,
        1 => Units::Physical,
        u => return Err(Error::Format(format!("unknown units tag {u}"))),
    };
    let params = SdeParams {
        eta: h[0],
        lambda: h[1],
        epsilon: h[2],
        r0: h[3],
        sigma: h[4],
    };
    params.validate()?;
    let stop = match nan_to_none(h[8]) {
        Some(t) => StopRule::Time(t),
        None => StopRule::Steps(steps),
    };
    let config = SolverConfig {
        kappa: h[5],
        burn_in,
        x_init: h[6],
        seed,
        stop,
        reflect_at: nan_to_none(h[7]),
    };
    let cap = n.min(1 << 24);
    let (mut times, mut values, mut hs) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    for _ in 0..n {
        times.push(read_f64(&mut r)?);
        values.push(read_f64(&mut r)?);
        hs.push(read_f64(&mut r)?);
    }
    if r.read(&mut ub)? != 0 {
        return Err(Error::Format("trailing bytes after trajectory records".into()));
    }
    let traj = Trajectory {
        times,
        values,
        steps: hs,
        seed,
        params,
        config,
        units,
    };
    traj.validate()?;
    Ok(traj)
}

/// Path samples without solver metadata, as read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSamples {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Holding time of each sample.
    pub steps: Vec<f64>,
}

/// Columns `t,x,h`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,x,h")?;
    for k in 0..traj.len() {
        writeln!(w, "{},{},{}", traj.times[k], traj.values[k], traj.steps[k])?;
    }
    w.flush()?;
    Ok(())
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

fn parse_f64(s: &str, row: usize, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("row {row}: cannot parse {what} '{s}'")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("row {row}: {what} is not finite")));
    }
    Ok(v)
}

/// Reads `t,x,h` or `t,x`; without `h` the holding time of sample `k` is
/// `t[k+1] - t[k]` and the last sample repeats the previous step.
pub fn read_trajectory_csv(path: &Path) -> Result<PathSamples> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ti = column(&headers, &["t", "time"]).ok_or_else(|| Error::Format("missing column t".into()))?;
    let xi = column(&headers, &["x", "value"]).ok_or_else(|| Error::Format("missing column x".into()))?;
    let hi = column(&headers, &["h", "step"]);
    let mut s = PathSamples {
        times: Vec::new(),
        values: Vec::new(),
        steps: Vec::new(),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).ok_or_else(|| Error::Format(format!("row {row}: missing field")));
        s.times.push(parse_f64(get(ti)?, row, "t")?);
        s.values.push(parse_f64(get(xi)?, row, "x")?);
        if let Some(hi) = hi {
            s.steps.push(parse_f64(get(hi)?, row, "h")?);
        }
    }
    if s.times.is_empty() {
        return Err(Error::Empty("trajectory file"));
    }
    if let Some(row) = s.times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotoneTimestamps { row: row + 1 });
    }
    if hi.is_none() {
        if s.times.len() < 2 {
            return Err(Error::TooShort("need two samples to infer step sizes".into()));
        }
        s.steps = s.times.windows(2).map(|w| w[1] - w[0]).collect();
        s.steps.push(s.steps[s.steps.len() - 1]);
    }
    Ok(s)
}

/// Columns `t,r` or `t,r,N`; `t = t0 + i dt`.
pub fn write_returns_csv(path: &Path, series: &ReturnSeries, t0: f64, counts: Option<&[u64]>) -> Result<()> {
    if let Some(c) = counts {
        if c.len() != series.len() {
            return Err(Error::invalid("trade counts and returns differ in length"));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    match counts {
        Some(c) => {
            writeln!(w, "t,r,N")?;
            for (i, (r, n)) in series.values.iter().zip(c).enumerate() {
                writeln!(w, "{},{},{}", t0 + i as f64 * series.dt, r, n)?;
            }
        }
        None => {
            writeln!(w, "t,r")?;
            for (i, r) in series.values.iter().enumerate() {
                writeln!(w, "{},{}", t0 + i as f64 * series.dt, r)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// A return table: the series (spacing taken from the first two rows) and
/// the trade counts when an `N` column is present.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTable {
    pub series: ReturnSeries,
    pub counts: Option<Vec<u64>>,
}

pub fn read_returns_csv(path: &Path) -> Result<ReturnTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ti = column(&headers, &["t", "time"]).ok_or_else(|| Error::Format("missing column t".into()))?;
    let ri = column(&headers, &["r", "return", "x"]).ok_or_else(|| Error::Format("missing column r".into()))?;
    let ni = column(&headers, &["n", "count"]);
    let (mut t, mut r, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).ok_or_else(|| Error::Format(format!("row {row}: missing field")));
        t.push(parse_f64(get(ti)?, row, "t")?);
        r.push(parse_f64(get(ri)?, row, "r")?);
        if let Some(ni) = ni {
            let s = get(ni)?;
            n.push(
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Format(format!("row {row}: cannot parse count '{s}'")))?,
            );
        }
    }
    if t.is_empty() {
        return Err(Error::Empty("return file"));
    }
    if let Some(row) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotoneTimestamps { row: row + 1 });
    }
    let dt = if t.len() > 1 { t[1] - t[0] } else { 1.0 };
    let source = path.display().to_string();
    Ok(ReturnTable {
        series: ReturnSeries::new(r, dt, Provenance::Ingested { source })?,
        counts: ni.map(|_| n),
    })
}

/// Parses a timestamp as epoch seconds (integer or fractional), RFC 3339,
/// or `YYYY-MM-DD HH:MM:SS[.fff]` taken as UTC. Returns epoch milliseconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return secs.checked_mul(1000);
    }
    if let Ok(secs) = s.parse::<f64>() {
        return secs.is_finite().then(|| (secs * 1000.0).round() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    None
}

/// Reads `timestamp,price` rows (column names `timestamp`/`time`/`t` and
/// `price`/`p`; the first two columns otherwise).
pub fn read_ticks_csv(path: &Path) -> Result<Vec<Tick>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ti = column(&headers, &["timestamp", "time", "t"]).unwrap_or(0);
    let pi = column(&headers, &["price", "p"]).unwrap_or(1);
    let mut ticks = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let ts = rec
            .get(ti)
            .ok_or_else(|| Error::Format(format!("row {row}: missing timestamp")))?;
        let time_ms =
            parse_timestamp(ts).ok_or_else(|| Error::Format(format!("row {row}: cannot parse timestamp '{ts}'")))?;
        let ps = rec
            .get(pi)
            .ok_or_else(|| Error::Format(format!("row {row}: missing price")))?;
        let price: f64 = ps
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("row {row}: cannot parse price '{ps}'")))?;
        ticks.push(Tick { time_ms, price });
    }
    Ok(ticks)
}

/// Columns `freq,power` and, with a theory curve, `theory`.
pub fn write_spectrum_csv(path: &Path, spec: &SpectrumEstimate, theory: Option<&dyn Fn(f64) -> f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match theory {
        Some(th) => {
            writeln!(w, "freq,power,theory")?;
            for (f, s) in spec.freqs.iter().zip(&spec.power) {
                writeln!(w, "{},{},{}", f, s, th(*f))?;
            }
        }
        None => {
            writeln!(w, "freq,power")?;
            for (f, s) in spec.freqs.iter().zip(&spec.power) {
                writeln!(w, "{f},{s}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `bin,density` (bin centers) and, with a theory curve, `theory`.
pub fn write_pdf_csv(path: &Path, pdf: &PdfEstimate, theory: Option<&dyn Fn(f64) -> f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match theory {
        Some(th) => {
            writeln!(w, "bin,density,theory")?;
            for (c, d) in pdf.centers.iter().zip(&pdf.density) {
                writeln!(w, "{},{},{}", c, d, th(*c))?;
            }
        }
        None => {
            writeln!(w, "bin,density")?;
            for (c, d) in pdf.centers.iter().zip(&pdf.density) {
                writeln!(w, "{c},{d}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
