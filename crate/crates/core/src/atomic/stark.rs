//! Stark tuning of the transfer reaction: polarizabilities, the detuning
//! model, and the resonance fields.

use serde::{Deserialize, Serialize};

use crate::atomic::state::{HalfInt, RydbergState};
use crate::atomic::structure::AtomicStructure;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::units::{polarizability_au_to_mhz, HARTREE_GHZ};

/// Which |mj| sublevel of the upper s-atom state (49p₃/₂) is brought into
/// resonance. F₁ tunes |mj| = 1/2, F₂ tunes |mj| = 3/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    F1,
    F2,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::F1, Branch::F2];

    /// |mj| of the upper s-atom level resonant on this branch.
    pub fn upper_mj_abs(self) -> HalfInt {
        match self {
            Branch::F1 => HalfInt::from_doubled(1),
            Branch::F2 => HalfInt::from_doubled(3),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Branch::F1 => 0,
            Branch::F2 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::F1 => "f1",
            Branch::F2 => "f2",
        }
    }
}

/// The four levels of the reaction d + s ↔ d′ + s′ (all with mj = +1/2;
/// branch sublevels are chosen where needed).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionLevels {
    pub s_initial: RydbergState,
    pub s_final: RydbergState,
    pub d_initial: RydbergState,
    pub d_final: RydbergState,
}

impl ReactionLevels {
    /// 41d₃/₂ + 49s₁/₂ ↔ 42p₁/₂ + 49p₃/₂ in rubidium.
    pub fn rubidium_49s_41d() -> Self {
        ReactionLevels {
            s_initial: RydbergState::rb(49, 0, 1, 1).expect("valid state"),
            s_final: RydbergState::rb(49, 1, 3, 1).expect("valid state"),
            d_initial: RydbergState::rb(41, 2, 3, 1).expect("valid state"),
            d_final: RydbergState::rb(42, 1, 1, 1).expect("valid state"),
        }
    }

    /// Zero-field energy defect in MHz,
    /// [E(s′) − E(s)] − [E(d) − E(d′)].
    pub fn zero_field_defect_mhz<T: Scalar>(&self, structure: &AtomicStructure<T>) -> Result<T> {
        let e = |s: &RydbergState| structure.energy_ghz(s);
        let up = e(&self.s_final)? - e(&self.s_initial)?;
        let down = e(&self.d_initial)? - e(&self.d_final)?;
        Ok((up - down) * T::lit(1e3))
    }

    /// Transition frequencies (GHz) of the s → s′ and d → d′ legs.
    pub fn transition_frequencies_ghz<T: Scalar>(&self, structure: &AtomicStructure<T>) -> Result<(T, T)> {
        let e = |s: &RydbergState| structure.energy_ghz(s);
        Ok((
            e(&self.s_final)? - e(&self.s_initial)?,
            e(&self.d_initial)? - e(&self.d_final)?,
        ))
    }
}

/// Options for the perturbative polarizability sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizabilityOptions {
    /// Intermediate n range: ±`window` around the level closest in energy.
    pub window: u32,
    /// Intermediate states closer than this (MHz) abort the sum.
    pub degeneracy_threshold_mhz: f64,
}

impl Default for PolarizabilityOptions {
    fn default() -> Self {
        PolarizabilityOptions {
            window: 5,
            degeneracy_threshold_mhz: 1.0,
        }
    }
}

impl<T: Scalar> AtomicStructure<T> {
    /// Static scalar+tensor polarizability of `state` in the |mj| sublevel,
    /// MHz/(V/cm)², with level shift −½αF².
    ///
    /// α = 2 Σ_k |⟨s|μ_z|k⟩|² / (E_k − E_s) over both L ± 1 series.
    pub fn polarizability(
        &self,
        state: &RydbergState,
        mj_abs: HalfInt,
        options: &PolarizabilityOptions,
    ) -> Result<T> {
        if options.window < 4 {
            return Err(Error::Config(format!(
                "polarizability window ±{} is below the minimum ±4",
                options.window
            )));
        }
        let state = state.with_mj(mj_abs.abs())?;
        let e_state = self.energy_ghz(&state)?;
        let n_star = T::lit(self.defects().effective_n(&state)?);
        let mut alpha = T::zero();
        let l_candidates = [state.l.checked_sub(1), Some(state.l + 1)];
        for lk in l_candidates.into_iter().flatten() {
            for jkd in [2 * lk as i32 - 1, 2 * lk as i32 + 1] {
                if jkd < 1 || (jkd - state.j.doubled()).abs() > 2 {
                    continue;
                }
                let series = self.defects().series(lk, jkd as u32)?;
                let center = (n_star + T::lit(series.delta0)).round().as_f64() as i64;
                let lo = (center - i64::from(options.window)).max(i64::from(lk) + 1);
                let hi = center + i64::from(options.window);
                for nk in lo..=hi {
                    let k = RydbergState::new(
                        nk as u32,
                        lk,
                        HalfInt::from_doubled(jkd),
                        state.mj,
                        state.species,
                    );
                    let Ok(k) = k else { continue };
                    let mu = self.dipole_moment(&state, &k, 0)?;
                    if mu == T::zero() {
                        continue;
                    }
                    let gap_ghz = self.energy_ghz(&k)? - e_state;
                    if gap_ghz.abs() * T::lit(1e3) < T::lit(options.degeneracy_threshold_mhz) {
                        return Err(Error::Model(format!(
                            "{k} lies {:.3} MHz from {state}; perturbative Stark model is invalid, \
                             use the empirical mode",
                            gap_ghz.as_f64() * 1e3
                        )));
                    }
                    let gap_au = gap_ghz / T::lit(HARTREE_GHZ);
                    alpha += T::lit(2.0) * mu * mu / gap_au;
                }
            }
        }
        Ok(T::lit(polarizability_au_to_mhz(alpha.as_f64())))
    }
}

/// Resonance fields and detuning slope taken from measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStark {
    pub f1_v_per_cm: f64,
    pub f2_v_per_cm: f64,
    pub slope_mhz_per_v_per_cm: f64,
}

impl EmpiricalStark {
    pub fn new(f1: f64, f2: f64, slope: f64) -> Result<Self> {
        if !(f1 < f2) || !(slope > 0.0) || !(f1 >= 0.0) {
            return Err(Error::Config(format!(
                "empirical Stark model needs 0 <= F1 < F2 and slope > 0 (got F1={f1}, F2={f2}, slope={slope})"
            )));
        }
        Ok(EmpiricalStark {
            f1_v_per_cm: f1,
            f2_v_per_cm: f2,
            slope_mhz_per_v_per_cm: slope,
        })
    }

    /// 0.38 V/cm, 0.41 V/cm and 127 MHz/(V/cm).
    pub fn calibrated() -> Self {
        EmpiricalStark {
            f1_v_per_cm: 0.38,
            f2_v_per_cm: 0.41,
            slope_mhz_per_v_per_cm: 127.0,
        }
    }

    pub fn resonance(&self, branch: Branch) -> f64 {
        match branch {
            Branch::F1 => self.f1_v_per_cm,
            Branch::F2 => self.f2_v_per_cm,
        }
    }
}

/// Quadratic Stark model built from computed polarizabilities (MHz/(V/cm)²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeStark {
    pub zero_field_defect_mhz: f64,
    pub alpha_s_initial: f64,
    pub alpha_d_initial: f64,
    pub alpha_d_final: f64,
    /// Upper s-atom level, indexed by branch (|mj| = 1/2, 3/2).
    pub alpha_s_final: [f64; 2],
}

impl PerturbativeStark {
    pub fn from_structure<T: Scalar>(
        structure: &AtomicStructure<T>,
        levels: &ReactionLevels,
        options: &PolarizabilityOptions,
    ) -> Result<Self> {
        let half = HalfInt::from_doubled(1);
        let alpha = |s: &RydbergState, mj: HalfInt| -> Result<f64> {
            Ok(structure.polarizability(s, mj, options)?.as_f64())
        };
        Ok(PerturbativeStark {
            zero_field_defect_mhz: levels.zero_field_defect_mhz(structure)?.as_f64(),
            alpha_s_initial: alpha(&levels.s_initial, half)?,
            alpha_d_initial: alpha(&levels.d_initial, half)?,
            alpha_d_final: alpha(&levels.d_final, half)?,
            alpha_s_final: [
                alpha(&levels.s_final, Branch::F1.upper_mj_abs())?,
                alpha(&levels.s_final, Branch::F2.upper_mj_abs())?,
            ],
        })
    }

    /// Σα(initial) − Σα(final) for the branch.
    pub fn polarizability_difference(&self, branch: Branch) -> f64 {
        self.alpha_s_initial + self.alpha_d_initial
            - self.alpha_d_final
            - self.alpha_s_final[branch.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StarkModel {
    Empirical(EmpiricalStark),
    Perturbative(PerturbativeStark),
}

impl Default for StarkModel {
    fn default() -> Self {
        StarkModel::Empirical(EmpiricalStark::calibrated())
    }
}

impl StarkModel {
    /// Pair detuning Δ(F) in MHz: energy of the transferred pair minus the
    /// initial pair.
    ///
    /// Empirical: s·(F − F_branch). Perturbative: Δ₀ + ½(Σα_i − Σα_f)F².
    pub fn detuning(&self, field_v_per_cm: f64, branch: Branch) -> f64 {
        match self {
            StarkModel::Empirical(e) => e.slope_mhz_per_v_per_cm * (field_v_per_cm - e.resonance(branch)),
            StarkModel::Perturbative(p) => {
                p.zero_field_defect_mhz
                    + 0.5 * p.polarizability_difference(branch) * field_v_per_cm * field_v_per_cm
            }
        }
    }

    /// dΔ/dF in MHz/(V/cm).
    pub fn detuning_slope(&self, field_v_per_cm: f64, branch: Branch) -> f64 {
        match self {
            StarkModel::Empirical(e) => e.slope_mhz_per_v_per_cm,
            StarkModel::Perturbative(p) => p.polarizability_difference(branch) * field_v_per_cm,
        }
    }

    /// Smallest non-negative field with Δ(F) = 0, in V/cm.
    pub fn resonance_field(&self, branch: Branch) -> Result<f64> {
        match self {
            StarkModel::Empirical(e) => Ok(e.resonance(branch)),
            StarkModel::Perturbative(_) => {
                const F_MAX: f64 = 2.0;
                const SCAN: usize = 4000;
                let f = |x: f64| self.detuning(x, branch);
                let mut lo = 0.0;
                let mut flo = f(lo);
                if flo == 0.0 {
                    return Ok(0.0);
                }
                for k in 1..=SCAN {
                    let hi = F_MAX * k as f64 / SCAN as f64;
                    let fhi = f(hi);
                    if fhi == 0.0 {
                        return Ok(hi);
                    }
                    if (flo < 0.0) != (fhi < 0.0) {
                        return Ok(bisect(f, lo, hi, 1e-10));
                    }
                    lo = hi;
                    flo = fhi;
                }
                Err(Error::Model(format!(
                    "no Stark resonance for branch {} in [0, {F_MAX}] V/cm",
                    branch.name()
                )))
            }
        }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_detuning() {
        let m = StarkModel::default();
        assert_eq!(m.detuning(0.38, Branch::F1), 0.0);
        assert!((m.detuning(0.39, Branch::F1) - 1.27).abs() < 1e-9);
        assert_eq!(m.resonance_field(Branch::F1).unwrap(), 0.38);
        assert_eq!(m.resonance_field(Branch::F2).unwrap(), 0.41);
    }

    #[test]
    fn empirical_validation() {
        assert!(EmpiricalStark::new(0.41, 0.38, 127.0).is_err());
        assert!(EmpiricalStark::new(0.38, 0.41, -1.0).is_err());
    }

    #[test]
    fn polarizability_ignores_sign_of_mj() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let p = RydbergState::rb(49, 1, 3, 1).unwrap();
        let o = PolarizabilityOptions::default();
        let plus = rb.polarizability(&p, HalfInt::from_doubled(3), &o).unwrap();
        let minus = rb.polarizability(&p, HalfInt::from_doubled(-3), &o).unwrap();
        assert_eq!(plus, minus);
        let half = rb.polarizability(&p, HalfInt::from_doubled(1), &o).unwrap();
        assert!((half - plus).abs() > 1e-3 * half.abs());
    }

    #[test]
    fn narrow_window_is_rejected() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let s = RydbergState::rb(49, 0, 1, 1).unwrap();
        let o = PolarizabilityOptions { window: 3, ..Default::default() };
        assert!(rb.polarizability(&s, HalfInt::from_doubled(1), &o).is_err());
    }

    #[test]
    fn near_degeneracy_demands_empirical_mode() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let s = RydbergState::rb(49, 0, 1, 1).unwrap();
        let o = PolarizabilityOptions { window: 5, degeneracy_threshold_mhz: 1e9 };
        assert!(matches!(rb.polarizability(&s, HalfInt::from_doubled(1), &o), Err(Error::Model(_))));
    }
}
