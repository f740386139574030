//! Dipole-dipole coupling between two point atoms.
//!
//! Lab frame: x is the separation axis of the two volumes, which is also the
//! electric-field direction and therefore the quantization axis; z is the
//! long axis of the volumes.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::units::{BOHR_RADIUS_UM, HARTREE_MHZ};

/// Position in micrometres, lab frame.
pub type Position<T> = [T; 3];

/// Spherical components (q = −1, 0, +1) of a transition dipole in a₀e.
pub type SphericalDipole<T> = [T; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosePairPolicy {
    /// Fail the shot.
    Reject,
    /// Evaluate the coupling at the floor distance instead.
    Cap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosePairRule {
    pub floor_um: f64,
    pub policy: ClosePairPolicy,
}

impl Default for ClosePairRule {
    fn default() -> Self {
        ClosePairRule {
            floor_um: 0.5,
            policy: ClosePairPolicy::Reject,
        }
    }
}

/// Separation of two atoms in the quantization frame (z′ along the lab x axis).
#[derive(Clone, Copy, Debug)]
pub struct PairGeometry<T> {
    /// Distance in µm, after the close-pair rule.
    pub distance_um: T,
    /// Unit vector from atom 1 to atom 2 in the quantization frame (x′, y′, z′).
    pub direction: [T; 3],
}

impl<T: Scalar> PairGeometry<T> {
    pub fn new(r1: &Position<T>, r2: &Position<T>, rule: &ClosePairRule, labels: (usize, usize)) -> Result<Self> {
        let d = [r2[0] - r1[0], r2[1] - r1[1], r2[2] - r1[2]];
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let floor = T::lit(rule.floor_um);
        if dist < floor || dist == T::zero() {
            if rule.policy == ClosePairPolicy::Reject || dist == T::zero() {
                return Err(Error::ClosePair {
                    a: labels.0,
                    b: labels.1,
                    distance_um: dist.as_f64(),
                    floor_um: rule.floor_um,
                });
            }
        }
        // lab (x, y, z) -> quantization frame (x' = y, y' = z, z' = x)
        let direction = [d[1] / dist, d[2] / dist, d[0] / dist];
        Ok(PairGeometry {
            distance_um: dist.max(floor),
            direction,
        })
    }

    pub fn cos_theta(&self) -> T {
        self.direction[2]
    }

    /// 1/R³ in MHz per (a₀e)².
    pub fn inverse_cube_mhz(&self) -> T {
        let r_bohr = self.distance_um / T::lit(BOHR_RADIUS_UM);
        T::lit(HARTREE_MHZ) / (r_bohr * r_bohr * r_bohr)
    }

    /// Angular weights w(q₁, q₂) = e*_{q₁}·e*_{q₂} − 3(e*_{q₁}·R̂)(e*_{q₂}·R̂),
    /// indexed `[q₁ + 1][q₂ + 1]`.
    pub fn angular_weights(&self) -> [[Complex<T>; 3]; 3] {
        let basis = conjugate_spherical_basis::<T>();
        let rhat = self.direction.map(|c| Complex::new(c, T::zero()));
        let dot = |a: &[Complex<T>; 3], b: &[Complex<T>; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let mut w = [[Complex::new(T::zero(), T::zero()); 3]; 3];
        for (i, ei) in basis.iter().enumerate() {
            for (j, ej) in basis.iter().enumerate() {
                let three = Complex::new(T::lit(3.0), T::zero());
                w[i][j] = dot(ei, ej) - three * dot(ei, &rhat) * dot(ej, &rhat);
            }
        }
        w
    }
}

/// e*_q for q = −1, 0, +1 with e₊₁ = −(x̂ + iŷ)/√2, e₀ = ẑ, e₋₁ = (x̂ − iŷ)/√2,
/// so that μ⃗ = Σ_q μ_q e*_q.
fn conjugate_spherical_basis<T: Scalar>() -> [[Complex<T>; 3]; 3] {
    let s = T::one() / T::lit(2.0).sqrt();
    let z = T::zero();
    let c = |re: T, im: T| Complex::new(re, im);
    [
        [c(s, z), c(z, s), c(z, z)],   // e*_{-1} = (x + iy)/√2
        [c(z, z), c(z, z), c(T::one(), z)], // e*_0 = z
        [c(-s, z), c(z, s), c(z, z)],  // e*_{+1} = -(x - iy)/√2
    ]
}

/// Scalar-mode coupling μ₁μ₂(1 − 3cos²θ)/R³ in MHz for dipoles along the
/// quantization axis.
pub fn pair_coupling<T: Scalar>(
    r1: &Position<T>,
    r2: &Position<T>,
    mu1: T,
    mu2: T,
    rule: &ClosePairRule,
) -> Result<T> {
    let g = PairGeometry::new(r1, r2, rule, (0, 1))?;
    let c = g.cos_theta();
    Ok(mu1 * mu2 * (T::one() - T::lit(3.0) * c * c) * g.inverse_cube_mhz())
}

/// Tensor-mode coupling Σ_{q₁q₂} μ₁,q₁ μ₂,q₂ w(q₁, q₂)/R³ in MHz.
pub fn tensor_pair_coupling<T: Scalar>(
    r1: &Position<T>,
    r2: &Position<T>,
    mu1: &SphericalDipole<T>,
    mu2: &SphericalDipole<T>,
    rule: &ClosePairRule,
) -> Result<Complex<T>> {
    let g = PairGeometry::new(r1, r2, rule, (0, 1))?;
    Ok(contract(&g.angular_weights(), mu1, mu2) * g.inverse_cube_mhz())
}

pub(crate) fn contract<T: Scalar>(
    w: &[[Complex<T>; 3]; 3],
    mu1: &SphericalDipole<T>,
    mu2: &SphericalDipole<T>,
) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..3 {
        if mu1[i] == T::zero() {
            continue;
        }
        for j in 0..3 {
            if mu2[j] != T::zero() {
                acc += w[i][j] * (mu1[i] * mu2[j]);
            }
        }
    }
    acc
}
