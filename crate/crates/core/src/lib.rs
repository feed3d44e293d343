//! Numerical laboratory for free-boundary mean-convex mean curvature flow.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod interface;
pub mod levelset;
pub mod curvature;
pub mod diagnostics;
pub mod blowup;
pub mod elliptic;
pub mod harness;

pub use error::{FlowError, Result};
pub use geometry::{
    AmbientExtension, BarrierCurvature, BarrierDomain, BarrierShape, Bounds, InitialRegion, Mode,
    RegionShape, Vec2,
};
pub use grid::{Grid2, GridField};
pub use interface::Interface;
pub use levelset::{run, FlowConfig, FlowState, FlowTrajectory};
pub use elliptic::{solve_translator, TranslatorParams, TranslatorSolution};
pub use harness::{load_scenario, run_scenario, verify_all, ScenarioConfig, VerificationReport};
