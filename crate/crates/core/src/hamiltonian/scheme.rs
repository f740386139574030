//! Per-atom level sets and the transition dipoles linking them.

use serde::{Deserialize, Serialize};

use crate::atomic::{AtomicStructure, Branch, HalfInt, ReactionLevels, RydbergState};
use crate::error::{Error, Result};
use crate::hamiltonian::geometry::{Position, SphericalDipole};
use crate::scalar::Scalar;

/// What an atom was prepared as.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SiteRole {
    /// Starts in 49s, can be promoted to 49p.
    S,
    /// Starts in 41d, can be demoted to 42p.
    D,
    /// Starts in 42p; behaves like a d-atom that has already transferred.
    Spectator42p,
    /// Starts in 43p and stays there.
    Spectator43p,
}

impl SiteRole {
    pub const ALL: [SiteRole; 4] = [SiteRole::S, SiteRole::D, SiteRole::Spectator42p, SiteRole::Spectator43p];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SiteRole::S => "s",
            SiteRole::D => "d",
            SiteRole::Spectator42p => "p42",
            SiteRole::Spectator43p => "p43",
        }
    }
}

/// Coarse label of a level within the reaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LevelClass {
    /// 49s₁/₂
    S,
    /// 49p₃/₂
    P,
    /// 41d₃/₂
    D,
    /// 42p₁/₂
    PPrime,
    /// 43p, no resonant partner
    Inert,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub state: RydbergState,
    pub class: LevelClass,
    /// Detuning branch for upper s-atom levels.
    pub branch: Option<Branch>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingMode {
    /// One level per class with dipoles along the quantization axis.
    Scalar,
    /// All mj sublevels with the full spherical-tensor contraction.
    Tensor,
}

/// One leg of a pair process: `from → to` on a single atom with
/// ⟨to|μ_q|from⟩ for q = −1, 0, +1.
#[derive(Clone, Copy, Debug)]
pub struct DipoleLink<T> {
    pub from: usize,
    pub to: usize,
    pub mu: SphericalDipole<T>,
}

/// Whether two single-atom legs form one of the resonant pair processes:
/// the reaction s→p′ with d→p, its reverse, and (optionally) the in-volume
/// exchanges s↔p and d↔p′.
pub fn process_allowed(a: (LevelClass, LevelClass), b: (LevelClass, LevelClass), exchange: bool) -> bool {
    use LevelClass::*;
    let fwd = |x: (LevelClass, LevelClass), y: (LevelClass, LevelClass)| {
        matches!((x, y), ((S, P), (D, PPrime)) | ((P, S), (PPrime, D)))
            || (exchange && matches!((x, y), ((S, P), (P, S)) | ((D, PPrime), (PPrime, D))))
    };
    fwd(a, b) || fwd(b, a)
}

/// The reaction channel: the two transitions, their dipoles on a chosen
/// branch, and the zero-field defect.
#[derive(Clone, Copy, Debug)]
pub struct CouplingChannel<T> {
    pub levels: ReactionLevels,
    pub branch: Branch,
    /// d → p′ leg (41d₃/₂ → 42p₁/₂), a₀e
    pub mu_d: T,
    /// s → p leg (49s₁/₂ → 49p₃/₂), a₀e
    pub mu_s: T,
    pub delta0_mhz: T,
}

impl<T: Scalar> CouplingChannel<T> {
    /// Effective dipoles for the scalar model. On F₁ both legs are the q = 0
    /// components between mj = +1/2 sublevels. On F₂ the s leg goes to
    /// mj = 3/2 (q = +1) and the d leg to mj = −1/2 (q = −1); their axial
    /// angular weight is (1 − 3cos²θ)/2, folded in as 1/√2 per leg.
    pub fn from_structure(structure: &AtomicStructure<T>, levels: ReactionLevels, branch: Branch) -> Result<Self> {
        let h = HalfInt::from_doubled;
        let (s_to, d_to, qs, qd, scale) = match branch {
            Branch::F1 => (levels.s_final.with_mj(h(1))?, levels.d_final.with_mj(h(1))?, 0, 0, T::one()),
            Branch::F2 => (
                levels.s_final.with_mj(h(3))?,
                levels.d_final.with_mj(h(-1))?,
                1,
                -1,
                T::one() / T::lit(2.0).sqrt(),
            ),
        };
        let mu_s = structure.dipole_moment(&s_to, &levels.s_initial, qs)? * scale;
        let mu_d = structure.dipole_moment(&d_to, &levels.d_initial, qd)? * scale;
        if mu_s == T::zero() || mu_d == T::zero() {
            return Err(Error::Domain("channel transition is dipole forbidden".into()));
        }
        Ok(CouplingChannel {
            levels,
            branch,
            mu_d,
            mu_s,
            delta0_mhz: levels.zero_field_defect_mhz(structure)?,
        })
    }
}

/// Level sets of every role plus all dipole links between them.
#[derive(Clone, Debug)]
pub struct LevelScheme<T> {
    mode: CouplingMode,
    levels: Vec<Level>,
    role_levels: [Vec<usize>; 4],
    role_initial: [usize; 4],
    links_from: Vec<Vec<DipoleLink<T>>>,
}

impl<T: Scalar> LevelScheme<T> {
    /// One level per class, dipoles from the channel along the axis.
    pub fn scalar(channel: &CouplingChannel<T>) -> Self {
        let lv = &channel.levels;
        let h = HalfInt::from_doubled;
        let (s_up_mj, d_down_mj) = match channel.branch {
            Branch::F1 => (1, 1),
            Branch::F2 => (3, -1),
        };
        let levels = vec![
            Level { state: lv.s_initial, class: LevelClass::S, branch: None },
            Level {
                state: lv.s_final.with_mj(h(s_up_mj)).expect("valid mj"),
                class: LevelClass::P,
                branch: Some(channel.branch),
            },
            Level { state: lv.d_initial, class: LevelClass::D, branch: None },
            Level {
                state: lv.d_final.with_mj(h(d_down_mj)).expect("valid mj"),
                class: LevelClass::PPrime,
                branch: None,
            },
            Level { state: inert_43p(), class: LevelClass::Inert, branch: None },
        ];
        let axial = |m: T| [T::zero(), m, T::zero()];
        let links = vec![
            DipoleLink { from: 0, to: 1, mu: axial(channel.mu_s) },
            DipoleLink { from: 1, to: 0, mu: axial(channel.mu_s) },
            DipoleLink { from: 2, to: 3, mu: axial(channel.mu_d) },
            DipoleLink { from: 3, to: 2, mu: axial(channel.mu_d) },
        ];
        Self::from_parts(
            CouplingMode::Scalar,
            levels,
            [vec![0, 1], vec![2, 3], vec![2, 3], vec![4]],
            [0, 2, 3, 4],
            links,
        )
    }

    /// All mj sublevels: 49s₁/₂ (2), 49p₃/₂ (4), 41d₃/₂ |mj| = 1/2 (2),
    /// 42p₁/₂ (2). Initial sublevels are mj = +1/2.
    pub fn tensor(structure: &AtomicStructure<T>, lv: &ReactionLevels) -> Result<Self> {
        let mut levels = Vec::new();
        let mut push = |state: RydbergState, mjs: &[i32], class: LevelClass| -> Result<Vec<usize>> {
            let mut ids = Vec::new();
            for &m in mjs {
                let s = state.with_mj(HalfInt::from_doubled(m))?;
                let branch = (class == LevelClass::P).then(|| {
                    if m.abs() == 1 {
                        Branch::F1
                    } else {
                        Branch::F2
                    }
                });
                ids.push(levels.len());
                levels.push(Level { state: s, class, branch });
            }
            Ok(ids)
        };
        let s = push(lv.s_initial, &[-1, 1], LevelClass::S)?;
        let p = push(lv.s_final, &[-3, -1, 1, 3], LevelClass::P)?;
        let d = push(lv.d_initial, &[-1, 1], LevelClass::D)?;
        let pp = push(lv.d_final, &[-1, 1], LevelClass::PPrime)?;
        let x = push(inert_43p(), &[1], LevelClass::Inert)?;

        let mut links = Vec::new();
        for (lower, upper) in [(&s, &p), (&d, &pp)] {
            for &a in lower.iter() {
                for &b in upper.iter() {
                    for (from, to) in [(a, b), (b, a)] {
                        let mut mu = [T::zero(); 3];
                        for q in -1..=1 {
                            mu[(q + 1) as usize] =
                                structure.dipole_moment(&levels[to].state, &levels[from].state, q)?;
                        }
                        if mu.iter().any(|m| *m != T::zero()) {
                            links.push(DipoleLink { from, to, mu });
                        }
                    }
                }
            }
        }
        let role_levels = [
            [s.clone(), p].concat(),
            [d.clone(), pp.clone()].concat(),
            [d.clone(), pp.clone()].concat(),
            x.clone(),
        ];
        Ok(Self::from_parts(
            CouplingMode::Tensor,
            levels,
            role_levels,
            [s[1], d[1], pp[1], x[0]],
            links,
        ))
    }

    fn from_parts(
        mode: CouplingMode,
        levels: Vec<Level>,
        role_levels: [Vec<usize>; 4],
        role_initial: [usize; 4],
        links: Vec<DipoleLink<T>>,
    ) -> Self {
        let mut links_from = vec![Vec::new(); levels.len()];
        for l in links {
            links_from[l.from].push(l);
        }
        LevelScheme {
            mode,
            levels,
            role_levels,
            role_initial,
            links_from,
        }
    }

    pub fn mode(&self) -> CouplingMode {
        self.mode
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, id: usize) -> &Level {
        &self.levels[id]
    }

    /// Level ids available to an atom of this role, ascending.
    pub fn levels_for(&self, role: SiteRole) -> &[usize] {
        &self.role_levels[role.index()]
    }

    pub fn initial_level(&self, role: SiteRole) -> usize {
        self.role_initial[role.index()]
    }

    pub fn links_from(&self, level: usize) -> &[DipoleLink<T>] {
        &self.links_from[level]
    }

    /// Copy of the scheme with every transition dipole set to zero.
    pub fn decoupled(&self) -> Self {
        let mut out = self.clone();
        for links in &mut out.links_from {
            for l in links {
                l.mu = [T::zero(); 3];
            }
        }
        out
    }
}

fn inert_43p() -> RydbergState {
    RydbergState::rb(43, 1, 3, 1).expect("valid state")
}

/// An atom in the many-body problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomSite<T> {
    /// µm, lab frame
    pub position: Position<T>,
    pub role: SiteRole,
}

impl<T: Scalar> AtomSite<T> {
    pub fn new(position: Position<T>, role: SiteRole) -> Self {
        AtomSite { position, role }
    }
}
