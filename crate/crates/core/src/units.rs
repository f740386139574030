//! Physical constants and unit conversions.
//!
//! Everything inside the numerical core works in atomic units. Laboratory
//! units (µm, µs, V/cm, MHz) appear only at the interfaces.

/// Bohr radius in micrometres.
pub const BOHR_RADIUS_UM: f64 = 5.291_772_109_03e-5;

/// One hartree expressed in MHz.
pub const HARTREE_MHZ: f64 = 6.579_683_920_502e9;

/// One hartree expressed in GHz.
pub const HARTREE_GHZ: f64 = HARTREE_MHZ * 1e-3;

/// Atomic unit of electric field in V/cm.
pub const FIELD_AU_V_PER_CM: f64 = 5.142_206_747_63e9;

/// Conversion from wavenumbers (cm⁻¹) to GHz.
pub const GHZ_PER_WAVENUMBER: f64 = 29.979_245_8;

/// Converts a length in micrometres to Bohr radii.
#[inline]
pub fn um_to_bohr(um: f64) -> f64 {
    um / BOHR_RADIUS_UM
}

/// Converts a polarizability in atomic units to MHz/(V/cm)².
#[inline]
pub fn polarizability_au_to_mhz(alpha_au: f64) -> f64 {
    alpha_au * HARTREE_MHZ / (FIELD_AU_V_PER_CM * FIELD_AU_V_PER_CM)
}
