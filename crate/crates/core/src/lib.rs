//! Design-based inference for quasi-experiments under Poisson rejective
//! assignment: exact inclusion probabilities and sampling, the difference in
//! means, event-study and IV estimators, their randomization moments, and a
//! replication harness for checking them.

pub mod assignment;
pub mod error;
pub mod estimators;
pub mod io;
pub mod moments;
pub mod montecarlo;
pub mod population;
pub mod sensitivity;
pub mod theory;

pub use assignment::{
    draw_assignment, enumerate_assignments, exact_randomization_moments, inclusion_probabilities,
    AssignmentDraw, InclusionProfile, RejectiveDesign, Sampler,
};
pub use error::{Error, Result};
pub use estimators::{did_event_study, sdim, sdim_vector, tsls, EstimateReport, TslsReport};
pub use io::{Report, RunConfig};
pub use montecarlo::{run_replications, RunOptions, SimulationSummary};
pub use population::{FinitePopulation, IVPopulation, PanelPopulation};
pub use sensitivity::{bias_adjusted_range, SensitivityBand};
pub use theory::{TheoryReport, TslsEstimand};
