//! Cox proportional hazards with a per-subscriber gamma frailty.

mod design;
mod fit;
mod hazard;
mod likelihood;
mod report;

pub use design::{design_from_panel, CovariateSpec};
pub use fit::{
    breslow_baseline, fit_cox_data, martingale_residuals, BaselineStep, ConvergenceReport, CoxFit, CoxOptions,
    FrailtyMode,
};
pub use hazard::{mc_relative_hazard, mc_relative_hazard_from, write_hazard_curves, HazardCurve, DEFAULT_SIMULATIONS};
pub use likelihood::{partial_loglik_and_grad, CoxData, Ties};
pub use report::{format_fit_table, stars, write_fit_csv};

use crate::error::Result;
use crate::panel::SurvivalPanel;

/// Fits one covariate specification on a survival panel.
pub fn fit_cox(panel: &SurvivalPanel, spec: CovariateSpec, options: &CoxOptions) -> Result<CoxFit> {
    fit_cox_data(&design_from_panel(panel, spec)?, options)
}
