use std::fmt::Write as _;

use qsde::io::{write_returns_csv, write_trajectory_bin, write_trajectory_csv};
use qsde::sde::{integrate_held, rescale, simulate, Observable, SolverConfig, StopRule, Units};
use qsde::{Provenance, SdeParams};

use crate::config::{self, pick, pick_or, pick_switch, Manifest};
use crate::error::{invalid, CliResult};
use crate::SimulateArgs;

const KEYS: &[&str] = &[
    "eta",
    "lambda",
    "epsilon",
    "r0",
    "sigma",
    "kappa",
    "burn_in",
    "x_init",
    "seed",
    "steps",
    "t_end",
    "reflect_at",
    "format",
    "physical",
    "window",
    "observable",
    "check_spectrum",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Bin,
    Csv,
    Both,
}

impl Format {
    fn parse(s: &str) -> CliResult<Self> {
        match s {
            "bin" => Ok(Format::Bin),
            "csv" => Ok(Format::Csv),
            "both" => Ok(Format::Both),
            _ => Err(invalid(format!("format must be bin, csv or both, got '{s}'"))),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Format::Bin => "bin",
            Format::Csv => "csv",
            Format::Both => "both",
        }
    }
}

pub fn parse_observable(s: &str) -> CliResult<Observable> {
    match s {
        "signed" | "x" => Ok(Observable::Signed),
        "abs" | "absolute" => Ok(Observable::Absolute),
        _ => Err(invalid(format!("observable must be signed or abs, got '{s}'"))),
    }
}

fn observable_label(o: Observable) -> &'static str {
    match o {
        Observable::Signed => "signed",
        Observable::Absolute => "abs",
    }
}

pub fn run(a: SimulateArgs) -> CliResult<()> {
    let file = config::load_optional(a.common.config.as_deref())?;
    file.check_keys("simulate", KEYS)?;

    let preset = SdeParams::preset();
    let params = SdeParams {
        eta: pick_or(a.sde.eta, &file, "eta", preset.eta)?,
        lambda: pick_or(a.sde.lambda, &file, "lambda", preset.lambda)?,
        epsilon: pick_or(a.sde.epsilon, &file, "epsilon", preset.epsilon)?,
        r0: pick_or(a.r0, &file, "r0", 1.0)?,
        sigma: pick_or(a.sigma, &file, "sigma", 1.0)?,
    };
    params.validate()?;
    let check_spectrum = pick_switch(a.check_spectrum, &file, "check_spectrum")?;
    if check_spectrum {
        params.validate_spectral_regime()?;
    }

    let defaults = SolverConfig::default();
    // a flag for one stop rule overrides the config's value for the other
    let (steps, t_end) = match (a.steps, a.t_end) {
        (Some(n), None) => (Some(n), None),
        (None, Some(t)) => (None, Some(t)),
        _ => (file.get::<u64>("steps")?, file.get::<f64>("t_end")?),
    };
    let stop = match (steps, t_end) {
        (Some(_), Some(_)) => return Err(invalid("give either steps or t_end, not both")),
        (Some(n), None) => StopRule::Steps(n),
        (None, Some(t)) => StopRule::Time(t),
        (None, None) => StopRule::Steps(1_000_000),
    };
    let cfg = SolverConfig {
        kappa: pick_or(a.kappa, &file, "kappa", defaults.kappa)?,
        burn_in: pick_or(a.burn_in, &file, "burn_in", defaults.burn_in)?,
        x_init: pick_or(a.x_init, &file, "x_init", defaults.x_init)?,
        seed: pick_or(a.seed, &file, "seed", defaults.seed)?,
        stop,
        reflect_at: pick(a.reflect_at, &file, "reflect_at")?,
    };
    cfg.validate()?;

    let format = Format::parse(&pick_or(a.format, &file, "format", "bin".to_string())?)?;
    let physical = pick_switch(a.physical, &file, "physical")?;
    let window: Option<f64> = pick(a.window, &file, "window")?;
    if let Some(w) = window {
        if !(w.is_finite() && w > 0.0) {
            return Err(invalid(format!("window must be > 0, got {w}")));
        }
    }
    let observable = parse_observable(&pick_or(a.observable, &file, "observable", "signed".to_string())?)?;
    let out = config::output_dir(a.common.output_dir);

    let mut traj = simulate(params, &cfg)?;
    if physical {
        traj = rescale(&traj, params.r0, params.sigma, params.eta)?;
    }
    let windows = match window {
        Some(tau) => {
            let vals: Vec<f64> = match observable {
                Observable::Signed => traj.values.clone(),
                Observable::Absolute => traj.values.iter().map(|v| v.abs()).collect(),
            };
            Some(integrate_held(&vals, &traj.steps, tau, Provenance::Synthetic { seed: cfg.seed })?)
        }
        None => None,
    };

    config::prepare_output(&out)?;
    if matches!(format, Format::Bin | Format::Both) {
        write_trajectory_bin(&out.join("trajectory.bin"), &traj)?;
    }
    if matches!(format, Format::Csv | Format::Both) {
        write_trajectory_csv(&out.join("trajectory.csv"), &traj)?;
    }
    if let Some(w) = &windows {
        write_returns_csv(&out.join("windows.csv"), w, 0.0, None)?;
    }

    let mut m = Manifest::new("simulate");
    m.set("eta", params.eta)
        .set("lambda", params.lambda)
        .set("epsilon", params.epsilon)
        .set("r0", params.r0)
        .set("sigma", params.sigma)
        .set("kappa", cfg.kappa)
        .set("burn_in", cfg.burn_in)
        .set("x_init", cfg.x_init)
        .set("seed", cfg.seed);
    match cfg.stop {
        StopRule::Steps(n) => m.set("steps", n),
        StopRule::Time(t) => m.set("t_end", t),
    };
    m.set_opt("reflect_at", cfg.reflect_at)
        .set("format", format.label())
        .set("physical", physical)
        .set_opt("window", window)
        .set("observable", observable_label(observable))
        .set("check_spectrum", check_spectrum);
    m.write(&out)?;

    let n = traj.len() as f64;
    let mean_abs = traj.values.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mut report = String::new();
    let units = match traj.units {
        Units::Scaled => "scaled",
        Units::Physical => "physical",
    };
    let _ = writeln!(report, "steps = {}", traj.len());
    let _ = writeln!(report, "end_time = {} ({units})", traj.end_time());
    let _ = writeln!(report, "mean_abs_x = {mean_abs}");
    if let Some(w) = &windows {
        let _ = writeln!(report, "windows = {}", w.len());
    }
    std::fs::write(out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}
