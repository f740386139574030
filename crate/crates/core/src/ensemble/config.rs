//! Shot configuration: volumes, noise, channel and numerics.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomic::{AtomicStructure, Branch, ReactionLevels, StarkModel};
use crate::error::{Error, Result};
use crate::hamiltonian::{ClosePairRule, CouplingChannel, CouplingMode, SiteRole, DEFAULT_BASIS_CAP};

/// A Gaussian cloud of atoms. Widths are 1/√e full widths (σ = w/2), µm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub center: [f64; 3],
    /// (transverse x, transverse y, longitudinal z)
    pub widths: [f64; 3],
    pub mean_count: f64,
    pub role: SiteRole,
}

impl VolumeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.widths.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("volume widths must be positive, got {:?}", self.widths)));
        }
        if !(self.mean_count >= 0.0) || !self.mean_count.is_finite() {
            return Err(Error::Config(format!("mean atom count must be >= 0, got {}", self.mean_count)));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("volume center must be finite".into()));
        }
        Ok(())
    }

    pub fn sigma(&self) -> [f64; 3] {
        self.widths.map(|w| w / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// RMS of the quasi-static field offset per shot, mV/cm.
    pub field_noise_mv_per_cm: f64,
    /// RMS of the per-atom detuning of excited levels, MHz.
    pub magnetic_mhz: f64,
    /// Incoherent 49s → 49p background rate, kHz (0 = off).
    pub blackbody_khz: f64,
    /// Damping rate of the coherent signal, kHz (0 = off).
    pub decay_khz: f64,
    /// RMS per-coordinate position blur, µm (0 = frozen).
    pub position_blur_um: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            field_noise_mv_per_cm: 2.0,
            magnetic_mhz: 1.4,
            blackbody_khz: 0.0,
            decay_khz: 0.0,
            position_blur_um: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn quiet() -> Self {
        NoiseModel {
            field_noise_mv_per_cm: 0.0,
            magnetic_mhz: 0.0,
            blackbody_khz: 0.0,
            decay_khz: 0.0,
            position_blur_um: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.field_noise_mv_per_cm,
            self.magnetic_mhz,
            self.blackbody_khz,
            self.decay_khz,
            self.position_blur_um,
        ];
        if all.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config(format!("noise rates must be finite and >= 0, got {self:?}")));
        }
        Ok(())
    }
}

/// How many atoms around the picked s-atom enter the quantum problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    /// Picked s-atom plus its nearest `s − 1` s-atoms, nearest `d` d-atoms
    /// and nearest `spectators` spectators.
    Fixed { s: usize, d: usize, spectators: usize },
    /// Add nearest atoms one at a time until the picked atom's transfer
    /// curve moves by less than `tolerance`, or `cap` atoms are in.
    Convergence { tolerance: f64, cap: usize },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Fixed { s: 2, d: 3, spectators: 0 }
    }
}

impl Truncation {
    pub fn convergence() -> Self {
        Truncation::Convergence { tolerance: 0.01, cap: 8 }
    }
}

/// Which upper-level branches contribute in the scalar model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchSelection {
    Only(Branch),
    Both,
}

impl BranchSelection {
    pub fn branches(self) -> Vec<Branch> {
        match self {
            BranchSelection::Only(b) => vec![b],
            BranchSelection::Both => Branch::ALL.to_vec(),
        }
    }
}

/// Scalar-model effective dipoles (a₀e) per branch, `[s leg, d leg]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDipoles {
    pub f1: [f64; 2],
    pub f2: [f64; 2],
}

impl ChannelDipoles {
    pub fn from_structure(structure: &AtomicStructure<f64>, levels: ReactionLevels) -> Result<Self> {
        let c1 = CouplingChannel::from_structure(structure, levels, Branch::F1)?;
        let c2 = CouplingChannel::from_structure(structure, levels, Branch::F2)?;
        Ok(ChannelDipoles {
            f1: [c1.mu_s, c1.mu_d],
            f2: [c2.mu_s, c2.mu_d],
        })
    }

    pub fn get(&self, branch: Branch) -> [f64; 2] {
        match branch {
            Branch::F1 => self.f1,
            Branch::F2 => self.f2,
        }
    }
}

/// Everything that determines a shot, apart from the shot index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub seed: u64,
    pub s_volume: VolumeSpec,
    pub d_volume: VolumeSpec,
    /// Mean numbers of 42p and 43p atoms, placed in the d volume.
    pub spectators: [f64; 2],
    pub branches: BranchSelection,
    pub stark: StarkModel,
    pub field_v_per_cm: f64,
    pub times_us: Vec<f64>,
    pub truncation: Truncation,
    pub noise: NoiseModel,
    pub coupling: CouplingMode,
    pub exchange: bool,
    pub close_pairs: ClosePairRule,
    pub basis_cap: usize,
    pub max_transfers: Option<usize>,
    pub dipoles: ChannelDipoles,
}

/// 49s cloud 11.6 µm, 41d cloud 16.3 µm across, both 500 µm long.
pub const S_WIDTH_UM: f64 = 11.6;
pub const D_WIDTH_UM: f64 = 16.3;
pub const CLOUD_LENGTH_UM: f64 = 500.0;
pub const MEAN_S_ATOMS: f64 = 12.5;
pub const MEAN_D_ATOMS: f64 = 16.0;
/// Atoms per cloud in the dense preset.
pub const SIMULATION_ATOMS: f64 = 25.0;

impl ShotConfig {
    /// Two clouds separated by `separation_um` along x, each centred at
    /// ±separation/2, with the measured widths and atom numbers.
    pub fn standard(separation_um: f64, dipoles: ChannelDipoles) -> Self {
        ShotConfig {
            seed: 1,
            s_volume: VolumeSpec {
                center: [-separation_um / 2.0, 0.0, 0.0],
                widths: [S_WIDTH_UM, S_WIDTH_UM, CLOUD_LENGTH_UM],
                mean_count: MEAN_S_ATOMS,
                role: SiteRole::S,
            },
            d_volume: VolumeSpec {
                center: [separation_um / 2.0, 0.0, 0.0],
                widths: [D_WIDTH_UM, D_WIDTH_UM, CLOUD_LENGTH_UM],
                mean_count: MEAN_D_ATOMS,
                role: SiteRole::D,
            },
            spectators: [0.0, 0.0],
            branches: BranchSelection::Both,
            stark: StarkModel::default(),
            field_v_per_cm: 0.38,
            times_us: (0..=50).map(|k| k as f64 * 0.5).collect(),
            truncation: Truncation::default(),
            noise: NoiseModel::default(),
            coupling: CouplingMode::Scalar,
            exchange: true,
            close_pairs: ClosePairRule::default(),
            basis_cap: DEFAULT_BASIS_CAP,
            max_transfers: None,
            dipoles,
        }
    }

    /// Both clouds at the dense preset count.
    pub fn with_simulation_counts(mut self) -> Self {
        self.s_volume.mean_count = SIMULATION_ATOMS;
        self.d_volume.mean_count = SIMULATION_ATOMS;
        self
    }

    /// Moves the clouds to ±separation/2 along x.
    pub fn set_separation(&mut self, separation_um: f64) {
        self.s_volume.center[0] = -separation_um / 2.0;
        self.d_volume.center[0] = separation_um / 2.0;
    }

    pub fn separation(&self) -> f64 {
        self.d_volume.center[0] - self.s_volume.center[0]
    }

    pub fn validate(&self) -> Result<()> {
        self.s_volume.validate()?;
        self.d_volume.validate()?;
        self.noise.validate()?;
        if self.s_volume.role != SiteRole::S || self.d_volume.role != SiteRole::D {
            return Err(Error::Config("volumes must hold s- and d-atoms respectively".into()));
        }
        if self.spectators.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Config("spectator counts must be >= 0".into()));
        }
        if !(self.field_v_per_cm >= 0.0) || !self.field_v_per_cm.is_finite() {
            return Err(Error::Config(format!("field must be >= 0, got {}", self.field_v_per_cm)));
        }
        if self.times_us.is_empty()
            || self.times_us.iter().any(|t| !(*t >= 0.0) || !t.is_finite())
            || self.times_us.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("times must be non-negative and strictly increasing".into()));
        }
        match self.truncation {
            Truncation::Fixed { s, d, .. } if s == 0 || d == 0 => {
                return Err(Error::Config("fixed truncation needs at least one s- and one d-atom".into()))
            }
            Truncation::Convergence { tolerance, cap } if !(tolerance > 0.0) || cap < 2 => {
                return Err(Error::Config("convergence truncation needs tolerance > 0 and cap >= 2".into()))
            }
            _ => {}
        }
        if self.close_pairs.floor_um < 0.0 || self.basis_cap == 0 {
            return Err(Error::Config("close-pair floor must be >= 0 and basis cap > 0".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
