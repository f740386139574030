//! Many-body dipole-dipole Hamiltonian of a frozen set of atoms.

pub mod basis;
pub mod geometry;
pub mod problem;
pub mod scheme;

pub use basis::{build_basis, Basis, BasisOptions, DEFAULT_BASIS_CAP};
pub use geometry::{pair_coupling, tensor_pair_coupling, ClosePairPolicy, ClosePairRule, PairGeometry, Position};
pub use problem::{assemble_hamiltonian, Detuning, ManyBodyProblem};
pub use scheme::{AtomSite, CouplingChannel, CouplingMode, Level, LevelClass, LevelScheme, SiteRole};
