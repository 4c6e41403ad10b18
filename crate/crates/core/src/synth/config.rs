use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::churn::SILENT_RUN;
use crate::error::{Error, Result};
use crate::ingest::TariffPlan;

/// Which churned friends drive the contagion term of the hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExposureMode {
    /// Observable 1-call churner friends accumulated through the previous
    /// month, the same count the survival panel carries.
    #[default]
    Cumulative,
    /// Observable 1-call churner friends of the previous month only.
    LastMonth,
}

/// Parameters of a synthetic operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_subscribers: usize,
    pub n_months: u32,
    pub start_month: YearMonth,
    pub latent_trait_dim: usize,
    /// Length scale of trait distance in edge formation; `inf` removes
    /// homophily altogether.
    pub homophily_strength: f64,
    /// Target mean number of designated friends.
    pub mean_degree: f64,
    /// Log-scale spread of per-subscriber sociability; edge odds scale with
    /// the product of both ends' sociability. Zero gives near-Poisson degrees.
    pub degree_dispersion: f64,
    /// Mean calls per month on a friend edge while both ends are active.
    pub edge_call_rate: f64,
    /// Calls placed to a friend in the month the friend goes silent, as a
    /// share of `edge_call_rate`.
    pub churn_month_call_share: f64,
    /// Monthly churn probability at trait zero and no exposure.
    pub baseline_hazard: f64,
    pub trait_hazard_slope: f64,
    /// Log-odds increment per churner friend.
    pub contagion_log_hazard: f64,
    pub exposure: ExposureMode,
    /// Log-rate loading of the trait on outbound off-net calling, which
    /// makes the trait partly visible in usage.
    pub trait_call_loading: f64,
    pub offnet_call_rate: f64,
    pub offnet_incoming_rate: f64,
    pub mean_call_duration_sec: f64,
    pub late_joiner_share: f64,
    pub max_tenure_months: u32,
    pub n_cells: u32,
    pub tariffs: Vec<TariffPlan>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_subscribers: 5000,
            n_months: 10,
            start_month: YearMonth { year: 2011, month: 1 },
            latent_trait_dim: 1,
            homophily_strength: 1.0,
            mean_degree: 8.7,
            degree_dispersion: 0.9,
            edge_call_rate: 3.0,
            churn_month_call_share: 1.0,
            baseline_hazard: 0.02,
            trait_hazard_slope: 0.3,
            contagion_log_hazard: 0.2,
            exposure: ExposureMode::Cumulative,
            trait_call_loading: 0.5,
            offnet_call_rate: 4.0,
            offnet_incoming_rate: 3.0,
            mean_call_duration_sec: 90.0,
            late_joiner_share: 0.0,
            max_tenure_months: 60,
            n_cells: 40,
            tariffs: default_tariffs(),
            seed: 1,
        }
    }
}

fn plan(id: &str, fee: f64, on: f64, off: f64) -> TariffPlan {
    TariffPlan {
        plan_id: id.into(),
        monthly_fee: fee,
        rate_on_net: on,
        rate_off_net: off,
    }
}

pub fn default_tariffs() -> Vec<TariffPlan> {
    vec![
        plan("BASIC", 0.0, 0.12, 0.25),
        plan("FRIENDS", 5.0, 0.04, 0.22),
        plan("FLAT", 15.0, 0.0, 0.10),
    ]
}

impl WorldConfig {
    /// A world where churn is independent across friends.
    pub fn null_world() -> Self {
        WorldConfig {
            homophily_strength: f64::INFINITY,
            trait_hazard_slope: 0.0,
            contagion_log_hazard: 0.0,
            ..Default::default()
        }
    }

    /// Correlated friend churn from shared traits only. Degrees are left
    /// near Poisson and the trait shows strongly in off-net calling, so the
    /// confounder is largely visible in the usage covariates.
    pub fn homophily_world() -> Self {
        WorldConfig {
            homophily_strength: 0.3,
            degree_dispersion: 0.0,
            trait_hazard_slope: 0.8,
            trait_call_loading: 1.5,
            contagion_log_hazard: 0.0,
            ..Default::default()
        }
    }

    /// Contagion on a homophily-free network.
    pub fn contagion_world(delta: f64) -> Self {
        WorldConfig {
            homophily_strength: f64::INFINITY,
            trait_hazard_slope: 0.0,
            contagion_log_hazard: delta,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: WorldConfig = toml::from_str(text).map_err(|e| Error::Config(format!("world config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world config serializes")
    }

    /// Last month whose churn can be dated from the generated records.
    pub fn last_risk_month(&self) -> u32 {
        self.n_months - SILENT_RUN
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let rate = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        if self.n_subscribers < 2 {
            return bad(format!("n_subscribers must be at least 2, got {}", self.n_subscribers));
        }
        if self.n_months < SILENT_RUN + 2 {
            return bad(format!("n_months must be at least {}, got {}", SILENT_RUN + 2, self.n_months));
        }
        if self.n_months > 240 {
            return bad(format!("n_months above 240 is not supported, got {}", self.n_months));
        }
        if self.latent_trait_dim == 0 {
            return bad("latent_trait_dim must be positive".into());
        }
        if self.homophily_strength.is_nan() || self.homophily_strength < 0.0 {
            return bad(format!("homophily_strength must be non-negative, got {}", self.homophily_strength));
        }
        if !(self.mean_degree.is_finite() && self.mean_degree > 0.0) {
            return bad(format!("mean_degree must be positive, got {}", self.mean_degree));
        }
        rate("degree_dispersion", self.degree_dispersion)?;
        if !(self.edge_call_rate.is_finite() && self.edge_call_rate >= 1.0) {
            return bad(format!("edge_call_rate must be at least 1, got {}", self.edge_call_rate));
        }
        if !(0.0..=1.0).contains(&self.churn_month_call_share) {
            return bad(format!("churn_month_call_share must lie in [0, 1], got {}", self.churn_month_call_share));
        }
        if !(self.baseline_hazard > 0.0 && self.baseline_hazard < 1.0) {
            return bad(format!("baseline_hazard must lie in (0, 1), got {}", self.baseline_hazard));
        }
        if !self.trait_hazard_slope.is_finite() || !self.contagion_log_hazard.is_finite() {
            return bad("hazard coefficients must be finite".into());
        }
        if !self.trait_call_loading.is_finite() {
            return bad("trait_call_loading must be finite".into());
        }
        rate("offnet_call_rate", self.offnet_call_rate)?;
        rate("offnet_incoming_rate", self.offnet_incoming_rate)?;
        if !(self.mean_call_duration_sec.is_finite() && self.mean_call_duration_sec > 0.0) {
            return bad(format!("mean_call_duration_sec must be positive, got {}", self.mean_call_duration_sec));
        }
        if !(0.0..1.0).contains(&self.late_joiner_share) {
            return bad(format!("late_joiner_share must lie in [0, 1), got {}", self.late_joiner_share));
        }
        if self.n_cells == 0 {
            return bad("n_cells must be positive".into());
        }
        if self.tariffs.is_empty() {
            return bad("the tariff menu is empty".into());
        }
        let mut ids: Vec<&str> = self.tariffs.iter().map(|p| p.plan_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("tariff plan ids must be unique".into());
        }
        for p in &self.tariffs {
            if p.plan_id.is_empty() {
                return bad("tariff plan id is empty".into());
            }
            rate("monthly_fee", p.monthly_fee)?;
            rate("rate_on_net", p.rate_on_net)?;
            rate("rate_off_net", p.rate_off_net)?;
        }
        if self.mean_degree >= (self.n_subscribers - 1) as f64 {
            return bad(format!(
                "mean degree {} is infeasible with {} subscribers",
                self.mean_degree, self.n_subscribers
            ));
        }
        Ok(())
    }
}
