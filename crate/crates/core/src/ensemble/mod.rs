//! Monte Carlo sampling of the two clouds and shot averaging.

pub mod config;
pub mod run;
pub mod shot;

pub use config::{
    BranchSelection, ChannelDipoles, NoiseModel, ShotConfig, Truncation, VolumeSpec, CLOUD_LENGTH_UM, D_WIDTH_UM,
    MEAN_D_ATOMS, MEAN_S_ATOMS, SIMULATION_ATOMS, S_WIDTH_UM,
};
pub use run::{run_ensemble, EnsembleResult, MAX_FAILED_FRACTION};
pub use shot::{neighbour_order, sample_positions, Cloud, Selection, ShotResult, Simulator};
