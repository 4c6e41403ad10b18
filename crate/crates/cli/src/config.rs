//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use peerchurn_core::calendar::Window;
use peerchurn_core::cox::{CoxOptions, DEFAULT_SIMULATIONS};
use peerchurn_core::gps::GpsOptions;
use peerchurn_core::panel::Split;
use peerchurn_core::pipeline::SampleOptions;
use peerchurn_core::synth::WorldConfig;
use serde::{Deserialize, Serialize};

/// Raw input files. Any path left out is taken from the `simulate` stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub cdr: Option<PathBuf>,
    pub subscribers: Option<PathBuf>,
    pub tariffs: Option<PathBuf>,
}

impl Inputs {
    fn any(&self) -> bool {
        self.cdr.is_some() || self.subscribers.is_some() || self.tariffs.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Splits {
    pub primary: Split,
    pub alternate: Split,
}

impl Default for Splits {
    fn default() -> Self {
        Splits {
            primary: Split::primary(),
            alternate: Split::alternate(),
        }
    }
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &Split); 2] {
        [("primary", &self.primary), ("alternate", &self.alternate)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HazardOptions {
    pub k_max: u32,
    pub n_sims: usize,
}

impl Default for HazardOptions {
    fn default() -> Self {
        HazardOptions {
            k_max: 10,
            n_sims: DEFAULT_SIMULATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Every random stream derives from this seed.
    pub seed: u64,
    pub inputs: Inputs,
    /// Defaults to the synthetic world's calendar.
    pub window: Option<Window>,
    pub sample: SampleOptions,
    pub splits: Splits,
    pub cox: CoxOptions,
    pub hazard: HazardOptions,
    pub gps: GpsOptions,
    pub world: WorldConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("peerchurn-out"),
            seed: 1,
            inputs: Inputs::default(),
            window: None,
            sample: SampleOptions::default(),
            splits: Splits::default(),
            cox: CoxOptions::default(),
            hazard: HazardOptions::default(),
            gps: GpsOptions::default(),
            world: WorldConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.output_dir);
        for p in [&mut cfg.inputs.cdr, &mut cfg.inputs.subscribers, &mut cfg.inputs.tariffs].into_iter().flatten() {
            rebase(p);
        }
        Ok(cfg)
    }

    /// Applies the single seed everywhere and checks the settings.
    pub fn finalize(mut self, seed_override: Option<u64>) -> Result<Self> {
        if let Some(seed) = seed_override {
            self.seed = seed;
        }
        self.world.seed = self.seed;
        self.gps.seed = self.seed;
        if self.inputs.any() && !(self.inputs.cdr.is_some() && self.inputs.subscribers.is_some() && self.inputs.tariffs.is_some()) {
            bail!("inputs: give all of cdr, subscribers and tariffs, or none to use simulated data");
        }
        for p in [&self.inputs.cdr, &self.inputs.subscribers, &self.inputs.tariffs].into_iter().flatten() {
            if !p.exists() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if let Some(w) = self.window {
            let world = Window::new(self.world.start_month, self.world.n_months);
            if self.uses_simulated_inputs() && w != world {
                bail!(
                    "window {}+{} months does not match the simulated calendar {}+{} months",
                    w.start, w.months, world.start, world.months
                );
            }
        }
        let risk = self.window().risk_months();
        for (name, split) in self.splits.named() {
            split.validate(risk).with_context(|| format!("{name} split"))?;
        }
        self.world.validate()?;
        Ok(self)
    }

    pub fn window(&self) -> Window {
        self.window
            .unwrap_or_else(|| Window::new(self.world.start_month, self.world.n_months))
    }

    pub fn uses_simulated_inputs(&self) -> bool {
        !self.inputs.any()
    }

    /// The settings a stage depends on, echoed into its manifest.
    pub fn slice(&self, keys: &[&str]) -> toml::Table {
        let mut all = toml::Table::try_from(self).expect("config serializes");
        all.insert("window".into(), toml::Value::try_from(self.window()).expect("window serializes"));
        keys.iter()
            .filter_map(|k| all.remove(*k).map(|v| (k.to_string(), v)))
            .collect()
    }
}
