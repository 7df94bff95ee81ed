use anyhow::{bail, Context};
use clonesel::pipeline::Arm;
use clonesel::report::RunConfig;
use clonesel::simstudy::ScenarioSpec;

use crate::Flags;

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve(flags: &Flags) -> anyhow::Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(t) = flags.na_threshold {
        cfg.na_threshold = t;
    }
    if let Some(g) = &flags.gdd_formula {
        cfg.gdd_formula = g.parse()?;
    }
    if flags.no_impute {
        cfg.arms = vec![Arm::NotImputed];
    }
    if let Some(f) = flags.fraction {
        cfg.fractions = vec![f];
    }
    for (slot, v) in [
        (&mut cfg.data, &flags.data),
        (&mut cfg.schema, &flags.schema),
        (&mut cfg.weather, &flags.weather),
        (&mut cfg.history, &flags.history),
    ] {
        if v.is_some() {
            slot.clone_from(v);
        }
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    let sim = &mut cfg.simulation;
    if let Some(name) = &flags.scenario {
        sim.scenarios = match sim.scenarios.iter().find(|s| &s.name == name) {
            Some(s) => vec![s.clone()],
            None => vec![ScenarioSpec::named(name)?],
        };
    }
    for s in &mut sim.scenarios {
        if let Some(r) = flags.replicates {
            s.n_replicates = r;
        }
        if let Some(n) = flags.rows {
            s.n_rows = n;
        }
        if flags.seed.is_some() {
            s.master_seed = cfg.seed;
        }
    }
    if sim.scenarios.iter().any(|s| s.n_replicates == 0 || s.n_rows < 10) {
        bail!("each scenario needs at least one replicate and ten rows");
    }
    cfg.validate()?;
    Ok(cfg)
}
