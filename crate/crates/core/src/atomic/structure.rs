//! Cached radial functions and the dipole matrix elements built from them.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::atomic::defects::{energy_level, QuantumDefectTable};
use crate::atomic::radial::{radial_overlap_r, radial_wavefunction, GridSpec, RadialWavefunction};
use crate::atomic::state::{HalfInt, RydbergState};
use crate::atomic::wigner::{wigner_3j, wigner_6j};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const SPIN: HalfInt = HalfInt::from_doubled(1);
const ONE: HalfInt = HalfInt::from_int(1);

/// Atomic data for one species: defects, the radial grid, and a cache of
/// computed wavefunctions. Wavefunctions are immutable once cached, so the
/// structure can be shared between threads.
#[derive(Debug)]
pub struct AtomicStructure<T: Scalar> {
    defects: QuantumDefectTable,
    grid: GridSpec<T>,
    cache: RwLock<HashMap<(u32, u32, i32), Arc<RadialWavefunction<T>>>>,
}

impl<T: Scalar> AtomicStructure<T> {
    pub fn new(defects: QuantumDefectTable, grid: GridSpec<T>) -> Self {
        AtomicStructure {
            defects,
            grid,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn rubidium85() -> Self {
        Self::new(QuantumDefectTable::rubidium85(), GridSpec::default())
    }

    pub fn defects(&self) -> &QuantumDefectTable {
        &self.defects
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// Level energy in GHz relative to the ionization limit.
    pub fn energy_ghz(&self, state: &RydbergState) -> Result<T> {
        energy_level(state, &self.defects)
    }

    pub fn wavefunction(&self, state: &RydbergState) -> Result<Arc<RadialWavefunction<T>>> {
        let key = (state.n, state.l, state.j.doubled());
        if let Some(wf) = self.cache.read().expect("wavefunction cache poisoned").get(&key) {
            return Ok(Arc::clone(wf));
        }
        let wf = Arc::new(radial_wavefunction(state, &self.defects, &self.grid)?);
        let mut cache = self.cache.write().expect("wavefunction cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(wf)))
    }

    /// ⟨a|r|b⟩ in a₀. Only defined for |L_a − L_b| = 1.
    pub fn radial_matrix_element(&self, a: &RydbergState, b: &RydbergState) -> Result<T> {
        if a.l.abs_diff(b.l) != 1 {
            return Err(Error::Domain(format!(
                "radial dipole element {a} -> {b} is forbidden (ΔL = {})",
                i64::from(b.l) - i64::from(a.l)
            )));
        }
        let wa = self.wavefunction(a)?;
        let wb = self.wavefunction(b)?;
        radial_overlap_r(&wa, &wb)
    }

    /// Reduced matrix element ⟨L_a j_a ‖ μ ‖ L_b j_b⟩ in a₀e, spin recoupled
    /// from the orbital one. Zero when the selection rules fail.
    pub fn reduced_dipole(&self, a: &RydbergState, b: &RydbergState) -> Result<T> {
        if a.l.abs_diff(b.l) != 1 || (a.j.doubled() - b.j.doubled()).abs() > 2 {
            return Ok(T::zero());
        }
        let la = HalfInt::from_int(a.l as i32);
        let lb = HalfInt::from_int(b.l as i32);
        let zero = HalfInt::from_int(0);
        let orbital_angular: T = wigner_3j(la, ONE, lb, zero, zero, zero);
        let orbital = parity_sign::<T>(a.l as i32 * 2)
            * T::lit(f64::from((2 * a.l + 1) * (2 * b.l + 1))).sqrt()
            * orbital_angular
            * self.radial_matrix_element(a, b)?;
        let six_j: T = wigner_6j(la, a.j, SPIN, b.j, lb, ONE);
        let phase = parity_sign::<T>(2 * a.l as i32 + SPIN.doubled() + b.j.doubled() + 2);
        let dims = T::lit(f64::from((a.j.doubled() + 1) * (b.j.doubled() + 1))).sqrt();
        Ok(phase * dims * six_j * orbital)
    }

    /// Spherical component ⟨a|μ_q|b⟩ in a₀e.
    ///
    /// Wigner-Eckart: (−1)^{j_a−m_a} (j_a 1 j_b; −m_a q m_b) ⟨a‖μ‖b⟩, which is
    /// nonzero only for m_a = m_b + q. Forbidden components are zero.
    pub fn dipole_moment(&self, a: &RydbergState, b: &RydbergState, q: i32) -> Result<T> {
        if !(-1..=1).contains(&q) {
            return Err(Error::Domain(format!("spherical component q = {q} outside -1..=1")));
        }
        let q = HalfInt::from_int(q);
        if a.mj != b.mj + q || a.l.abs_diff(b.l) != 1 || (a.j.doubled() - b.j.doubled()).abs() > 2 {
            return Ok(T::zero());
        }
        let angular: T = wigner_3j(a.j, ONE, b.j, -a.mj, q, b.mj);
        if angular == T::zero() {
            return Ok(T::zero());
        }
        let phase = parity_sign::<T>(a.j.doubled() - a.mj.doubled());
        Ok(phase * angular * self.reduced_dipole(a, b)?)
    }
}

/// (−1)^{x/2} for an even doubled exponent `x`.
fn parity_sign<T: Scalar>(doubled: i32) -> T {
    debug_assert!(doubled % 2 == 0, "odd doubled exponent {doubled}");
    if (doubled / 2).rem_euclid(2) == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// ⟨a|r|b⟩ with the default grid.
pub fn radial_matrix_element(
    a: &RydbergState,
    b: &RydbergState,
    defects: &QuantumDefectTable,
) -> Result<f64> {
    AtomicStructure::new(defects.clone(), GridSpec::default()).radial_matrix_element(a, b)
}

/// ⟨a|μ_q|b⟩ with the default grid.
pub fn dipole_moment(
    a: &RydbergState,
    b: &RydbergState,
    q: i32,
    defects: &QuantumDefectTable,
) -> Result<f64> {
    AtomicStructure::new(defects.clone(), GridSpec::default()).dipole_moment(a, b, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hydrogen() -> AtomicStructure<f64> {
        AtomicStructure::new(QuantumDefectTable::hydrogenic(3, 3_289_841.96), GridSpec::default())
    }

    #[test]
    fn hydrogen_1s_2p_radial() {
        let h = hydrogen();
        let a = RydbergState::hydrogen(1, 0, 1, 1).unwrap();
        let b = RydbergState::hydrogen(2, 1, 3, 1).unwrap();
        let exact = 128.0 * 6f64.sqrt() / 243.0;
        let r = h.radial_matrix_element(&a, &b).unwrap();
        assert!((r.abs() - exact).abs() / exact < 5e-3, "{r} vs {exact}");
    }

    #[test]
    fn radial_element_is_symmetric() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let a = RydbergState::rb(49, 0, 1, 1).unwrap();
        let b = RydbergState::rb(49, 1, 3, 1).unwrap();
        let ab = rb.radial_matrix_element(&a, &b).unwrap();
        let ba = rb.radial_matrix_element(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-10 * ab.abs());
    }

    #[test]
    fn forbidden_radial_is_domain_error() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let a = RydbergState::rb(49, 0, 1, 1).unwrap();
        let b = RydbergState::rb(41, 2, 3, 1).unwrap();
        assert!(matches!(rb.radial_matrix_element(&a, &b), Err(Error::Domain(_))));
        assert_eq!(rb.dipole_moment(&a, &b, 0).unwrap(), 0.0);
    }

    #[test]
    fn wrong_projection_is_zero() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let s = RydbergState::rb(49, 0, 1, 1).unwrap();
        let p = RydbergState::rb(49, 1, 3, 3).unwrap();
        assert_eq!(rb.dipole_moment(&p, &s, 0).unwrap(), 0.0);
        assert_eq!(rb.dipole_moment(&p, &s, -1).unwrap(), 0.0);
        assert!(rb.dipole_moment(&p, &s, 1).unwrap() != 0.0);
    }

    #[test]
    fn sum_rule_is_independent_of_projection() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let d = RydbergState::rb(41, 2, 3, 1).unwrap();
        let p = RydbergState::rb(42, 1, 1, 1).unwrap();
        let total = |mj: i32| {
            let a = d.with_mj(HalfInt::from_doubled(mj)).unwrap();
            let mut sum = 0.0;
            for mp in [-1, 1] {
                let b = p.with_mj(HalfInt::from_doubled(mp)).unwrap();
                for q in -1..=1 {
                    sum += rb.dipole_moment(&b, &a, q).unwrap().powi(2);
                }
            }
            sum
        };
        let reference = total(1);
        for mj in [-3, -1, 3] {
            assert!((total(mj) - reference).abs() < 1e-9 * reference);
        }
    }

    #[test]
    fn sign_flip_of_projections_keeps_magnitude() {
        let rb = AtomicStructure::<f64>::rubidium85();
        let s = RydbergState::rb(49, 0, 1, 1).unwrap();
        let p = RydbergState::rb(49, 1, 3, 3).unwrap();
        let forward = rb.dipole_moment(&p, &s, 1).unwrap();
        let flipped = rb
            .dipole_moment(&p.with_mj(-p.mj).unwrap(), &s.with_mj(-s.mj).unwrap(), -1)
            .unwrap();
        assert!((forward.abs() - flipped.abs()).abs() < 1e-9 * forward.abs());
    }
}
