use std::fmt::Write as _;

use rayon::prelude::*;

use qsde::io::write_returns_csv;
use qsde::returns::{generate_returns_detailed, GeneratedReturns, Modulation};
use qsde::tail::hill_top_fraction;
use qsde::{ReturnModelParams, SdeParams};

use crate::config::{self, pick_or, pick_switch, ConfigFile, Manifest};
use crate::error::{invalid, CliResult};
use crate::ReturnsArgs;

const KEYS: &[&str] = &[
    "paper_defaults",
    "minutes",
    "seed",
    "realizations",
    "eta",
    "lambda",
    "epsilon",
    "lambda2",
    "r0_bar",
    "tau",
    "intercept",
    "slope",
    "kappa",
    "burn_in",
    "background",
];

pub fn run(a: ReturnsArgs) -> CliResult<()> {
    let loaded = config::load_optional(a.common.config.as_deref())?;
    loaded.check_keys("returns", KEYS)?;
    let use_preset = pick_switch(a.paper_defaults, &loaded, "paper_defaults")?;
    // the preset replaces model parameters from the file; run settings stay
    let empty = ConfigFile::default();
    let model_file = if use_preset { &empty } else { &loaded };

    let d = ReturnModelParams::preset();
    let params = ReturnModelParams {
        sde: SdeParams {
            eta: pick_or(a.sde.eta, model_file, "eta", d.sde.eta)?,
            lambda: pick_or(a.sde.lambda, model_file, "lambda", d.sde.lambda)?,
            epsilon: pick_or(a.sde.epsilon, model_file, "epsilon", d.sde.epsilon)?,
            ..d.sde
        },
        lambda2: pick_or(a.lambda2, model_file, "lambda2", d.lambda2)?,
        r0_bar: pick_or(a.r0_bar, model_file, "r0_bar", d.r0_bar)?,
        tau: pick_or(a.tau, model_file, "tau", d.tau)?,
        modulation: Modulation {
            intercept: pick_or(a.intercept, model_file, "intercept", d.modulation.intercept)?,
            slope: pick_or(a.slope, model_file, "slope", d.modulation.slope)?,
        },
        kappa: pick_or(a.kappa, model_file, "kappa", d.kappa)?,
        burn_in: pick_or(a.burn_in, model_file, "burn_in", d.burn_in)?,
        ..d
    };
    params.validate()?;
    let minutes: usize = config::pick(a.minutes, &loaded, "minutes")?
        .ok_or_else(|| invalid("--minutes is required"))?;
    if minutes == 0 {
        return Err(invalid("--minutes must be >= 1"));
    }
    let seed = pick_or(a.seed, &loaded, "seed", 0u64)?;
    let realizations = pick_or(a.realizations, &loaded, "realizations", 1usize)?;
    if realizations == 0 {
        return Err(invalid("--realizations must be >= 1"));
    }
    let background = pick_switch(a.background, &loaded, "background")?;
    let out = config::output_dir(a.common.output_dir);

    let runs: Vec<GeneratedReturns> = (0..realizations)
        .into_par_iter()
        .map(|i| generate_returns_detailed(&params, minutes, seed.wrapping_add(i as u64)))
        .collect::<Result<_, _>>()?;

    config::prepare_output(&out)?;
    let name = |stem: &str, i: usize| {
        if realizations == 1 {
            format!("{stem}.csv")
        } else {
            format!("{stem}_{i:03}.csv")
        }
    };
    let mut report = String::new();
    for (i, g) in runs.iter().enumerate() {
        write_returns_csv(&out.join(name("returns", i)), &g.returns, 0.0, None)?;
        if background {
            write_returns_csv(&out.join(name("background", i)), &g.background, 0.0, None)?;
        }
        let _ = write!(
            report,
            "realization {i}: seed = {}, variance = {}",
            seed.wrapping_add(i as u64),
            g.returns.variance()
        );
        if minutes >= 10_000 {
            if let Ok(h) = hill_top_fraction(&g.returns.values, 0.001) {
                let _ = write!(report, ", hill_alpha_top_0.1% = {}", h.alpha);
            }
        }
        report.push('\n');
    }

    let mut m = Manifest::new("returns");
    m.set("minutes", minutes)
        .set("seed", seed)
        .set("realizations", realizations)
        .set("eta", params.sde.eta)
        .set("lambda", params.sde.lambda)
        .set("epsilon", params.sde.epsilon)
        .set("lambda2", params.lambda2)
        .set("r0_bar", params.r0_bar)
        .set("tau", params.tau)
        .set("intercept", params.modulation.intercept)
        .set("slope", params.modulation.slope)
        .set("kappa", params.kappa)
        .set("burn_in", params.burn_in)
        .set("background", background);
    m.write(&out)?;
    std::fs::write(out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}
