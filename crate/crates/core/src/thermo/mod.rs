//! Relative entropy, pressure, Legendre duality and decoupling functionals.

mod cm;
mod decoupling;
mod entropy;
mod legendre;
mod pressure;
mod recipe;

pub use cm::{cm_term, CmReport};
pub use decoupling::{decoupling_constant, CylinderFamily, DecouplingProfile};
pub use entropy::{csiszar_gap, entropy_density_series, relative_entropy, relative_entropy_on, EntropyEntry, EntropySeries};
pub use legendre::{legendre_gap, Certificate, LegendreReport, ReverseCheck, TrialFamily};
pub use pressure::{pressure_estimate, prony_rate, PressureMode, PressureSeries};
pub use recipe::{log_partition_auto, LogDensity, MeasureRecipe};
