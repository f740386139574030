//! Rubidium Rydberg structure: level energies, radial functions, dipole
//! matrix elements and Stark tuning.

pub mod defects;
pub mod radial;
pub mod stark;
pub mod state;
pub mod structure;
pub mod wigner;

pub use defects::{energy_level, DefectSeries, QuantumDefectTable};
pub use radial::{radial_wavefunction, GridSpec, RadialWavefunction};
pub use stark::{Branch, EmpiricalStark, PerturbativeStark, PolarizabilityOptions, ReactionLevels, StarkModel};
pub use state::{HalfInt, RydbergState, Species};
pub use structure::{dipole_moment, radial_matrix_element, AtomicStructure};
pub use wigner::{wigner_3j, wigner_3j_exact, wigner_6j, wigner_6j_exact, RationalRoot};
