use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use qsde::io::{read_returns_csv, read_trajectory_bin, read_trajectory_csv, write_pdf_csv, write_spectrum_csv};
use qsde::sde::{integrate_held, Units};
use qsde::spectral::{
    estimate_psd_with_segment, fit_broken_power_law, fit_power_law, power_law_spectrum, Binning,
    PdfAccumulator, BINS_PER_DECADE,
};
use qsde::tail::hill_top_fraction;
use qsde::{Provenance, QGaussianParams, ReturnSeries, SdeParams, SpectrumEstimate, Taper};

use crate::config::{self, pick, pick_or, pick_switch, Manifest};
use crate::error::{invalid, CliResult};
use crate::AnalyzeArgs;

const KEYS: &[&str] = &[
    "input",
    "window",
    "segment",
    "taper",
    "f_lo",
    "f_hi",
    "pdf_bins",
    "signed",
    "normalize",
    "theory",
    "broken",
    "tail_fraction",
    "eta",
    "lambda",
    "epsilon",
    "r0",
];

/// Windows per trajectory when no window length is given.
const DEFAULT_WINDOWS: f64 = 1048576.0;

enum Raw {
    Path {
        values: Vec<f64>,
        steps: Vec<f64>,
        params: Option<SdeParams>,
        units: Units,
    },
    Returns(ReturnSeries),
}

fn load(path: &Path) -> CliResult<Raw> {
    if path.extension().is_some_and(|e| e == "bin") {
        let t = read_trajectory_bin(path)?;
        return Ok(Raw::Path {
            values: t.values,
            steps: t.steps,
            params: Some(t.params),
            units: t.units,
        });
    }
    let f = std::fs::File::open(path)
        .map_err(|e| crate::error::CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let mut header = String::new();
    BufReader::new(f).read_line(&mut header)?;
    if header.trim().is_empty() {
        return Err(invalid(format!("{} is empty", path.display())));
    }
    let cols: Vec<String> = header.trim().split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols.iter().any(|c| c == "r" || c == "return") {
        Ok(Raw::Returns(read_returns_csv(path)?.series))
    } else {
        let s = read_trajectory_csv(path)?;
        Ok(Raw::Path {
            values: s.values,
            steps: s.steps,
            params: None,
            units: Units::Scaled,
        })
    }
}

struct Prepared {
    signal: ReturnSeries,
    samples: Vec<f64>,
    weights: Option<Vec<f64>>,
}

fn weighted_std(values: &[f64], weights: Option<&[f64]>) -> f64 {
    let (mut w, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let wi = weights.map_or(1.0, |ws| ws[i]);
        w += wi;
        m1 += wi * v;
        m2 += wi * v * v;
    }
    let mean = m1 / w;
    (m2 / w - mean * mean).max(0.0).sqrt()
}

pub fn run(a: AnalyzeArgs) -> CliResult<()> {
    let file = config::load_optional(a.common.config.as_deref())?;
    file.check_keys("analyze", KEYS)?;
    let inputs: Vec<PathBuf> = if a.input.is_empty() {
        file.get_list("input").into_iter().map(PathBuf::from).collect()
    } else {
        a.input
    };
    if inputs.is_empty() {
        return Err(invalid("at least one --input is required"));
    }
    let window: Option<f64> = pick(a.window, &file, "window")?;
    let segment: Option<usize> = pick(a.segment, &file, "segment")?;
    let taper_s = pick_or(a.taper, &file, "taper", "hann".to_string())?;
    let taper = Taper::parse(&taper_s).ok_or_else(|| invalid(format!("taper must be hann or rect, got '{taper_s}'")))?;
    let f_lo: Option<f64> = pick(a.f_lo, &file, "f_lo")?;
    let f_hi: Option<f64> = pick(a.f_hi, &file, "f_hi")?;
    let pdf_bins: usize = pick_or(a.pdf_bins, &file, "pdf_bins", 40)?;
    let signed = pick_switch(a.signed, &file, "signed")?;
    let normalize = pick_or(a.normalize, &file, "normalize", "none".to_string())?;
    let normalize_each = match normalize.as_str() {
        "each" => true,
        "none" => false,
        s => return Err(invalid(format!("normalize must be each or none, got '{s}'"))),
    };
    let theory = pick_switch(a.theory, &file, "theory")?;
    let broken = pick_switch(a.broken, &file, "broken")?;
    let tail_fraction: f64 = pick_or(a.tail_fraction, &file, "tail_fraction", 0.001)?;
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(invalid(format!("tail-fraction must be in (0, 1), got {tail_fraction}")));
    }
    if pdf_bins == 0 {
        return Err(invalid("pdf-bins must be >= 1"));
    }
    if theory && normalize_each {
        return Err(invalid("theory overlays need unnormalized input (use --normalize none)"));
    }
    let out = config::output_dir(a.common.output_dir);

    let raws = inputs.iter().map(|p| load(p)).collect::<CliResult<Vec<_>>>()?;
    let all_returns = raws.iter().all(|r| matches!(r, Raw::Returns(_)));
    let header_params = raws.iter().find_map(|r| match r {
        Raw::Path {
            params: Some(p),
            units,
            ..
        } => Some((*p, *units)),
        _ => None,
    });

    let obs = |v: f64| if signed { v } else { v.abs() };
    let mut prepared = Vec::with_capacity(raws.len());
    let mut used_window = None;
    for (raw, path) in raws.into_iter().zip(&inputs) {
        let meta = Provenance::Ingested {
            source: path.display().to_string(),
        };
        let p = match raw {
            Raw::Returns(s) => {
                let scale = if normalize_each { s.std_dev() } else { 1.0 };
                if !(scale > 0.0) {
                    return Err(crate::error::CliError::Runtime(format!("{} has zero variance", path.display())));
                }
                let samples: Vec<f64> = s.values.iter().map(|v| v / scale).collect();
                let signal = ReturnSeries::new(samples.iter().map(|&v| obs(v)).collect(), s.dt, meta)?;
                Prepared {
                    signal,
                    samples,
                    weights: None,
                }
            }
            Raw::Path { values, steps, .. } => {
                let scale = if normalize_each { weighted_std(&values, Some(&steps)) } else { 1.0 };
                if !(scale > 0.0) {
                    return Err(crate::error::CliError::Runtime(format!("{} has zero variance", path.display())));
                }
                let samples: Vec<f64> = values.iter().map(|v| v / scale).collect();
                let tau = match window.or(used_window) {
                    Some(t) => t,
                    None => steps.iter().sum::<f64>() / DEFAULT_WINDOWS,
                };
                used_window = Some(tau);
                let o: Vec<f64> = samples.iter().map(|&v| obs(v)).collect();
                let signal = integrate_held(&o, &steps, tau, meta)?;
                Prepared {
                    signal,
                    samples,
                    weights: Some(steps),
                }
            }
        };
        prepared.push(p);
    }

    let dt = prepared[0].signal.dt;
    if prepared.iter().any(|p| ((p.signal.dt - dt) / dt).abs() > 1e-9) {
        return Err(invalid("inputs have different sampling intervals and cannot be averaged"));
    }
    let shortest = prepared.iter().map(|p| p.signal.len()).min().unwrap_or(0);
    let segment = match segment {
        Some(s) => s,
        None => {
            let quarter = (shortest / 4).max(1);
            (1usize << (usize::BITS - 1 - quarter.leading_zeros())).min(1 << 16)
        }
    };
    if segment < 16 {
        return Err(invalid(format!(
            "series of {shortest} points is too short for spectral analysis"
        )));
    }
    let spectra = prepared
        .iter()
        .map(|p| estimate_psd_with_segment(&p.signal, segment, taper))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SpectrumEstimate::average(&spectra)?;
    let df = spec.df();
    let nyquist = 0.5 / dt;
    let f_lo = f_lo.unwrap_or(4.0 * df);
    let f_hi = f_hi.unwrap_or(0.25 * nyquist);
    if !(f_lo > 0.0 && f_hi > f_lo) {
        return Err(invalid(format!("fit range [{f_lo}, {f_hi}] is empty")));
    }
    let fit = fit_power_law(&spec, f_lo, f_hi)?;
    let broken_fit = if broken {
        Some(fit_broken_power_law(&spec, f_lo, f_hi, BINS_PER_DECADE)?)
    } else {
        None
    };

    // density on a common grid
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for p in &prepared {
        for &v in &p.samples {
            let m = v.abs();
            if m > 0.0 {
                lo = lo.min(m);
            }
            hi = hi.max(m);
        }
    }
    if !(hi > 0.0) {
        return Err(crate::error::CliError::Runtime("all samples are zero".into()));
    }
    // log bins span at most six decades below the largest magnitude
    let lo = lo.max(1e-6 * hi);
    let binning = if signed {
        Binning::Linear {
            lo: -hi,
            hi,
            bins: pdf_bins,
        }
    } else if hi > lo {
        Binning::Log {
            lo,
            hi,
            bins: pdf_bins,
        }
    } else {
        Binning::Linear {
            lo: 0.0,
            hi: 2.0 * hi,
            bins: pdf_bins,
        }
    };
    let mut acc = PdfAccumulator::new(binning)?;
    for p in &prepared {
        for (i, &v) in p.samples.iter().enumerate() {
            let w = p.weights.as_ref().map_or(1.0, |ws| ws[i]);
            acc.push(obs(v), w);
        }
    }
    let pdf = acc.finish();

    let hill = if all_returns {
        let pooled: Vec<f64> = prepared.iter().flat_map(|p| p.samples.iter().copied()).collect();
        hill_top_fraction(&pooled, tail_fraction).ok()
    } else {
        None
    };

    let preset = SdeParams::preset();
    let (base, units) = header_params.unwrap_or((preset, Units::Scaled));
    let theory_params = SdeParams {
        eta: pick_or(a.sde.eta, &file, "eta", base.eta)?,
        lambda: pick_or(a.sde.lambda, &file, "lambda", base.lambda)?,
        epsilon: pick_or(a.sde.epsilon, &file, "epsilon", base.epsilon)?,
        ..base
    };
    let density_r0: f64 = pick_or(
        a.r0,
        &file,
        "r0",
        if units == Units::Physical { base.r0 } else { 1.0 },
    )?;
    let (density_theory, spectrum_theory) = if theory {
        theory_params.validate()?;
        let q = QGaussianParams::new(theory_params.lambda, density_r0)?;
        (Some(q), Some(power_law_spectrum(&theory_params)?))
    } else {
        (None, None)
    };

    config::prepare_output(&out)?;
    let spectrum_curve = spectrum_theory.map(|s| move |f: f64| s.power(f));
    write_spectrum_csv(
        &out.join("spectrum.csv"),
        &spec,
        spectrum_curve.as_ref().map(|c| c as &dyn Fn(f64) -> f64),
    )?;
    let density_curve = density_theory.map(|q| move |x: f64| if signed { q.pdf(x) } else { 2.0 * q.pdf(x) });
    write_pdf_csv(
        &out.join("pdf.csv"),
        &pdf,
        density_curve.as_ref().map(|c| c as &dyn Fn(f64) -> f64),
    )?;

    let mut report = String::new();
    let _ = writeln!(report, "inputs = {}", inputs.len());
    let _ = writeln!(report, "observable = {}", if signed { "signed" } else { "abs" });
    let _ = writeln!(report, "segment = {segment}, segments = {}, df = {df}", spec.n_segments);
    let _ = writeln!(
        report,
        "power_law: beta = {}, amplitude = {}, range = [{}, {}], bins = {}",
        fit.exponent, fit.amplitude, fit.f_lo, fit.f_hi, fit.points
    );
    if let Some(b) = &broken_fit {
        let _ = writeln!(
            report,
            "broken_power_law: low = {}, high = {}, crossover = {}",
            b.low_exponent, b.high_exponent, b.crossover
        );
    }
    if let Some(s) = &spectrum_theory {
        let _ = writeln!(report, "theory: beta = {}, amplitude = {}", s.beta, s.amplitude);
    }
    if let Some(h) = &hill {
        let _ = writeln!(
            report,
            "hill: alpha = {}, density_exponent = {}, k = {}",
            h.alpha,
            h.density_exponent(),
            h.k
        );
    }

    let mut m = Manifest::new("analyze");
    let joined: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    m.set("input", joined.join(","))
        .set_opt("window", used_window)
        .set("segment", segment)
        .set("taper", taper.label())
        .set("f_lo", f_lo)
        .set("f_hi", f_hi)
        .set("pdf_bins", pdf_bins)
        .set("signed", signed)
        .set("normalize", &normalize)
        .set("theory", theory)
        .set("broken", broken)
        .set("tail_fraction", tail_fraction);
    if theory {
        m.set("eta", theory_params.eta)
            .set("lambda", theory_params.lambda)
            .set("epsilon", theory_params.epsilon)
            .set("r0", density_r0);
    }
    m.write(&out)?;
    std::fs::write(out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}
