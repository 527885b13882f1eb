use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use qsde::io::{read_ticks_csv, write_returns_csv};
use qsde::returns::{aggregate_ticks, decompose_empirical_with, normalize_returns, DecomposeOptions, Decomposition};

use crate::config::{self, pick, pick_or, pick_switch, Manifest};
use crate::error::{invalid, CliResult};
use crate::IngestArgs;

const KEYS: &[&str] = &["input", "bar", "ma_window", "decompose", "lambda2", "bins", "min_count"];

pub fn run(a: IngestArgs) -> CliResult<()> {
    let file = config::load_optional(a.common.config.as_deref())?;
    file.check_keys("ingest", KEYS)?;
    let input: PathBuf = pick(a.input, &file, "input")?.ok_or_else(|| invalid("--input is required"))?;
    let bar: f64 = pick_or(a.bar, &file, "bar", 60.0)?;
    if !(bar.is_finite() && bar >= 1e-3) {
        return Err(invalid(format!("bar length must be >= 0.001 s, got {bar}")));
    }
    let decompose = pick_switch(a.decompose, &file, "decompose")?;
    let ma_window: usize = pick_or(a.ma_window, &file, "ma_window", 60)?;
    if ma_window < 2 || !ma_window.is_multiple_of(2) {
        return Err(invalid(format!("ma-window must be even and >= 2, got {ma_window}")));
    }
    let lambda2: f64 = pick_or(a.lambda2, &file, "lambda2", 5.0)?;
    if !(lambda2.is_finite() && lambda2 > 1.0) {
        return Err(invalid(format!("lambda2 must be > 1, got {lambda2}")));
    }
    let d = DecomposeOptions::default();
    let opts = DecomposeOptions {
        bins: pick_or(a.bins, &file, "bins", d.bins)?,
        min_count: pick_or(a.min_count, &file, "min_count", d.min_count)?,
    };
    if opts.bins < 2 {
        return Err(invalid("bins must be >= 2"));
    }
    let out = config::output_dir(a.common.output_dir);

    let ticks = read_ticks_csv(&input)?;
    let bars = aggregate_ticks(&ticks, Duration::from_secs_f64(bar), &input.display().to_string())?;
    let decomposition = if decompose {
        let normalized = normalize_returns(&bars.returns)?;
        Some(decompose_empirical_with(&normalized, ma_window, lambda2, opts)?)
    } else {
        None
    };

    config::prepare_output(&out)?;
    write_returns_csv(
        &out.join("bars.csv"),
        &bars.returns,
        bars.start_ms as f64 / 1000.0,
        Some(&bars.counts),
    )?;
    let mut report = String::new();
    let empty = bars.counts.iter().filter(|&&c| c == 0).count();
    let _ = writeln!(report, "ticks = {}", ticks.len());
    let _ = writeln!(report, "bars = {} ({empty} without trades)", bars.counts.len());
    if let Some(d) = &decomposition {
        write_decomposition(&out.join("decomposition.csv"), d)?;
        let _ = writeln!(
            report,
            "modulation: r0 = {} + {} |MA| (ma_window = {ma_window}, lambda2 = {lambda2}, normalized returns)",
            d.modulation.intercept, d.modulation.slope
        );
        let flagged = d.underpopulated().count();
        if flagged > 0 {
            let _ = writeln!(
                report,
                "warning: {flagged} of {} bins have fewer than {} points",
                d.bins.len(),
                opts.min_count
            );
            eprintln!("qsde: warning: {flagged} decomposition bins have fewer than {} points", opts.min_count);
        }
    }

    let mut m = Manifest::new("ingest");
    m.set("input", input.display())
        .set("bar", bar)
        .set("ma_window", ma_window)
        .set("decompose", decompose)
        .set("lambda2", lambda2)
        .set("bins", opts.bins)
        .set("min_count", opts.min_count);
    m.write(&out)?;
    std::fs::write(out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn write_decomposition(path: &Path, d: &Decomposition) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "abs_ma_lo,abs_ma_hi,mean_abs_ma,r0,count,underpopulated")?;
    for b in &d.bins {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            b.abs_ma_lo, b.abs_ma_hi, b.mean_abs_ma, b.r0, b.count, b.underpopulated
        )?;
    }
    w.flush()?;
    Ok(())
}
