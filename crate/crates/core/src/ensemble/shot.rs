//! One Monte Carlo realization: sample, truncate, assemble, evolve.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::atomic::{AtomicStructure, Branch, ReactionLevels};
use crate::dynamics::evolve;
use crate::ensemble::config::{ShotConfig, Truncation, VolumeSpec};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    assemble_hamiltonian, build_basis, AtomSite, BasisOptions, CouplingChannel, CouplingMode, Detuning, LevelScheme,
    Position, SiteRole,
};

/// Independent Gaussian draws around the volume centre.
pub fn sample_positions<R: Rng + ?Sized>(volume: &VolumeSpec, count: usize, rng: &mut R) -> Vec<Position<f64>> {
    let sigma = volume.sigma();
    (0..count)
        .map(|_| {
            let mut p = volume.center;
            for k in 0..3 {
                let z: f64 = StandardNormal.sample(rng);
                p[k] += sigma[k] * z;
            }
            p
        })
        .collect()
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

/// Outcome of the neighbour selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Indices into the sampled atom list; the picked s-atom is first.
    pub sites: Vec<usize>,
    pub converged: bool,
}

/// The sampled cloud of one shot (all roles).
#[derive(Clone, Debug)]
pub struct Cloud {
    pub atoms: Vec<AtomSite<f64>>,
    /// Per-atom detuning of excited levels, MHz.
    pub noise: Vec<f64>,
    /// Field offset, V/cm.
    pub field_offset: f64,
    pub picked: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotResult {
    pub shot_index: u64,
    /// Transfer probability of the picked s-atom per time, backgrounds included.
    pub p_fraction: Vec<f64>,
    pub atom_counts: [usize; 4],
    pub selected: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Shot runner with the level schemes prepared once.
#[derive(Clone, Debug)]
pub struct Simulator {
    config: ShotConfig,
    /// Scalar schemes indexed by branch, or one tensor scheme.
    schemes: Vec<(Option<Branch>, Arc<LevelScheme<f64>>)>,
}

impl Simulator {
    /// Tensor coupling needs the atomic structure for sublevel dipoles;
    /// the scalar model only uses the dipoles stored in the config.
    pub fn new(config: ShotConfig, structure: Option<&AtomicStructure<f64>>) -> Result<Self> {
        config.validate()?;
        let levels = ReactionLevels::rubidium_49s_41d();
        let schemes = match config.coupling {
            CouplingMode::Scalar => config
                .branches
                .branches()
                .into_iter()
                .map(|b| {
                    let [mu_s, mu_d] = config.dipoles.get(b);
                    let ch = CouplingChannel {
                        levels,
                        branch: b,
                        mu_d,
                        mu_s,
                        delta0_mhz: 0.0,
                    };
                    (Some(b), Arc::new(LevelScheme::scalar(&ch)))
                })
                .collect(),
            CouplingMode::Tensor => {
                let structure = structure
                    .ok_or_else(|| Error::Config("tensor coupling needs the atomic structure".into()))?;
                vec![(None, Arc::new(LevelScheme::tensor(structure, &levels)?))]
            }
        };
        Ok(Simulator { config, schemes })
    }

    pub fn config(&self) -> &ShotConfig {
        &self.config
    }

    fn rng(&self, shot_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(shot_index);
        rng
    }

    /// Draws in a fixed order: counts, positions, blur, field offset,
    /// per-atom detunings, picked s-atom.
    pub fn sample_cloud(&self, shot_index: u64) -> Cloud {
        let cfg = &self.config;
        let mut rng = self.rng(shot_index);
        let n_s = poisson(cfg.s_volume.mean_count, &mut rng);
        let n_d = poisson(cfg.d_volume.mean_count, &mut rng);
        let n_42 = poisson(cfg.spectators[0], &mut rng);
        let n_43 = poisson(cfg.spectators[1], &mut rng);

        let mut atoms = Vec::with_capacity(n_s + n_d + n_42 + n_43);
        for (vol, n, role) in [
            (&cfg.s_volume, n_s, SiteRole::S),
            (&cfg.d_volume, n_d, SiteRole::D),
            (&cfg.d_volume, n_42, SiteRole::Spectator42p),
            (&cfg.d_volume, n_43, SiteRole::Spectator43p),
        ] {
            for p in sample_positions(vol, n, &mut rng) {
                atoms.push(AtomSite::new(p, role));
            }
        }
        let blur = cfg.noise.position_blur_um;
        if blur > 0.0 {
            for a in &mut atoms {
                for k in 0..3 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a.position[k] += blur * z;
                }
            }
        }
        let field_offset = gaussian(cfg.noise.field_noise_mv_per_cm * 1e-3, &mut rng);
        let noise = (0..atoms.len()).map(|_| gaussian(cfg.noise.magnetic_mhz, &mut rng)).collect();
        let picked = (n_s > 0).then(|| rng.random_range(0..n_s));
        Cloud {
            atoms,
            noise,
            field_offset,
            picked,
        }
    }

    pub fn run_shot(&self, shot_index: u64) -> Result<ShotResult> {
        let cloud = self.sample_cloud(shot_index);
        let mut counts = [0usize; 4];
        for a in &cloud.atoms {
            counts[role_slot(a.role)] += 1;
        }
        let times = &self.config.times_us;
        let mut warnings = Vec::new();
        let (coherent, selected) = match cloud.picked {
            None => (vec![0.0; times.len()], Vec::new()),
            Some(picked) => {
                let order = neighbour_order(&cloud.atoms, picked);
                let sel = self.truncate(&cloud, &order)?;
                if !sel.converged {
                    warnings.push(format!(
                        "shot {shot_index}: truncation did not converge within {} atoms",
                        sel.sites.len()
                    ));
                }
                (self.picked_probability(&cloud, &sel.sites)?, sel.sites)
            }
        };
        let p_fraction = self.with_backgrounds(&coherent);
        Ok(ShotResult {
            shot_index,
            p_fraction,
            atom_counts: counts,
            selected,
            warnings,
        })
    }

    /// Coherent transfer probability of the first site in `subset`, with
    /// scalar branches combined as independent channels.
    pub fn picked_probability(&self, cloud: &Cloud, subset: &[usize]) -> Result<Vec<f64>> {
        let times = &self.config.times_us;
        let sites: Vec<AtomSite<f64>> = subset.iter().map(|&i| cloud.atoms[i]).collect();
        let has_d = sites.iter().any(|s| s.role == SiteRole::D);
        if sites.is_empty() || !has_d {
            return Ok(vec![0.0; times.len()]);
        }
        let noise: Vec<f64> = subset.iter().map(|&i| cloud.noise[i]).collect();
        let field = (self.config.field_v_per_cm + cloud.field_offset).max(0.0);
        let stark = &self.config.stark;
        let detuning = Detuning {
            f1: stark.detuning(field, Branch::F1),
            f2: stark.detuning(field, Branch::F2),
        };
        let opts = BasisOptions {
            max_transfers: self.config.max_transfers,
            exchange: self.config.exchange,
            cap: self.config.basis_cap,
        };
        let mut survive = vec![1.0; times.len()];
        for (_, scheme) in &self.schemes {
            let basis = build_basis(&sites, scheme, &opts)?;
            let problem = assemble_hamiltonian(
                &sites,
                scheme.clone(),
                basis,
                &detuning,
                &noise,
                &self.config.close_pairs,
                self.config.exchange,
            )?;
            let r = evolve(&problem, times)?;
            let p = r.probability_of(&problem.site_upper_mask(0));
            for (s, x) in survive.iter_mut().zip(p) {
                *s *= 1.0 - x.clamp(0.0, 1.0);
            }
        }
        Ok(survive.into_iter().map(|s| 1.0 - s).collect())
    }

    fn truncate(&self, cloud: &Cloud, order: &[usize]) -> Result<Selection> {
        let atoms = &cloud.atoms;
        match self.config.truncation {
            Truncation::Fixed { s, d, spectators } => {
                // budgets: other s-atoms, d-atoms, spectators of either kind
                let mut left = [s.saturating_sub(1), d, spectators];
                let mut sites = vec![order[0]];
                for &i in &order[1..] {
                    let slot = role_slot(atoms[i].role).min(2);
                    if left[slot] > 0 {
                        left[slot] -= 1;
                        sites.push(i);
                    }
                }
                Ok(Selection { sites, converged: true })
            }
            Truncation::Convergence { tolerance, cap } => {
                let mut sites = vec![order[0]];
                let mut rest = order[1..].iter().copied();
                // grow until the first d-atom is in
                for i in rest.by_ref() {
                    sites.push(i);
                    if atoms[i].role == SiteRole::D {
                        break;
                    }
                    if sites.len() >= cap {
                        break;
                    }
                }
                let mut prev = self.picked_probability(cloud, &sites)?;
                for i in rest {
                    if sites.len() >= cap {
                        return Ok(Selection { sites, converged: false });
                    }
                    sites.push(i);
                    let next = self.picked_probability(cloud, &sites)?;
                    let diff = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    prev = next;
                    if diff < tolerance {
                        return Ok(Selection { sites, converged: true });
                    }
                }
                // every atom is in
                Ok(Selection { sites, converged: true })
            }
        }
    }

    /// Coherent part damped by decay, plus the incoherent blackbody
    /// admixture acting on what is still in 49s.
    fn with_backgrounds(&self, coherent: &[f64]) -> Vec<f64> {
        let n = &self.config.noise;
        let gamma = n.decay_khz * 1e-3;
        let bb = n.blackbody_khz * 1e-3;
        coherent
            .iter()
            .zip(&self.config.times_us)
            .map(|(&p, &t)| {
                let p = p * (-gamma * t).exp();
                p + (1.0 - p) * (1.0 - (-bb * t).exp())
            })
            .collect()
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    // always consume one draw so the stream layout does not depend on sigma
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    sigma * z
}

fn role_slot(role: SiteRole) -> usize {
    match role {
        SiteRole::S => 0,
        SiteRole::D => 1,
        SiteRole::Spectator42p => 2,
        SiteRole::Spectator43p => 3,
    }
}

/// Picked atom first, then the others by distance to it (ties by index).
pub fn neighbour_order(atoms: &[AtomSite<f64>], picked: usize) -> Vec<usize> {
    let c = atoms[picked].position;
    let dist = |i: usize| {
        let p = atoms[i].position;
        (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)
    };
    let mut others: Vec<usize> = (0..atoms.len()).filter(|&i| i != picked).collect();
    others.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let mut order = vec![picked];
    order.extend(others);
    order
}
