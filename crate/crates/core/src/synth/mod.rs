//! Synthetic operators with known homophily and contagion.
//!
//! A world draws latent traits, links subscribers with a probability that
//! decays in trait distance, and then runs month by month: churn from a
//! logistic hazard, followed by the month's calls. Output goes out in the
//! ingestion formats together with the generator's own trace.

mod config;
mod scorecard;
mod truth;
mod world;

pub use config::{default_tariffs, ExposureMode, WorldConfig};
pub use scorecard::{positive_increasing, replay_ground_truth, EstimatorOutputs, Scorecard};
pub use truth::{GroundTruth, Mechanism, TRACE_FIXED_HEADER};
pub use world::{generate_world, subscriber_id, World, WorldFiles};
