//! Experiment definitions, configuration and the command drivers.

pub mod commands;
pub mod config;
pub mod run;
pub mod tables;

pub use commands::{execute, manifest, plateau, Command, Report, STEADY_STATE_TOLERANCE};
pub use config::ScenarioConfig;
pub use run::{
    run_convergence, run_custom, run_pulsatile, run_static_phantom, run_through_plane, run_yuan_slice, slice_profile,
    ConvergenceOutcome, FlashOutcome, SliceOutcome, TubeOutcome,
};
pub use tables::{PumpTable, TubeTable};
