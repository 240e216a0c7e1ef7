//! Numerical laboratory for the renormalized mean curvature flow near the
//! bubble-sheet `R^2 x S^1(sqrt 2)`.

pub mod barriers;
pub mod derivatives;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod modes;
pub mod ode;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{CylinderGraph, CylinderSpec, FlowField, Grid};
pub use spectral::{Dominance, ModeState};
pub use barriers::{BowlProfile, RotatedBarrier, ShrinkerProfile};
pub use flow::{FlowHistory, FlowSample, FlowSolver, FlowState};
pub use harness::{HistoryRow, Scenario, ScenarioConfig, ValidationReport};
pub use modes::{PhaseBox, QuantizationMatrix};
