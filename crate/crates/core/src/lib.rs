//! Mean-field simulation of a pentacene maser used as a quantum battery,
//! discharged by modulating the cavity's external coupling.
//!
//! Layers, bottom up: [`params`] and [`model`] (equations of motion and
//! observables), [`protocol`] (the κ(t) schedule), [`integrator`] and
//! [`simulation`] (time stepping), [`oracle`] (solver cross-check),
//! [`analysis`] (per-pulse metrics),
//! [`sweep`] (parameter grids) and [`config`] (run files).

pub mod analysis;
pub mod config;
pub mod error;
pub mod integrator;
pub mod model;
pub mod oracle;
pub mod params;
pub mod protocol;
pub mod simulation;
pub mod sweep;
pub mod trajectory;

pub use error::{ConfigError, IntegrationError, ModelError, ProtocolError, SimulationError};
pub use integrator::SolverConfig;
pub use model::{MeanFieldState, StateVector};
pub use params::{ParameterFile, PhysicalParameters};
pub use protocol::{Scheme, ScheduleConfig, ScheduleFile, Termination};
pub use simulation::{run_simulation, run_simulation_from};
pub use trajectory::{Sample, Trajectory};
