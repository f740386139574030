//! Coulomb-approximation radial wavefunctions by inward Numerov integration.
//!
//! The radial equation is integrated on a grid uniform in x = √r. With
//! u(r) = r R(r) = x^{1/2} w(x) it becomes
//!
//! ```text
//! w''(x) = [ (2L + 1/2)(2L + 3/2)/x² − 8 + 4x²/n*² ] w(x)
//! ```
//!
//! which is integrated from the outer bound towards the origin. Every state
//! lives on the same lattice x_i = i·h, so matrix elements between states
//! are plain sums over shared indices.

use crate::atomic::defects::QuantumDefectTable;
use crate::atomic::state::RydbergState;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Radial grid recipe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    /// Step in x = √r, units of √a₀.
    pub step: T,
    /// Fixed outer radius in a₀; `None` uses 2n(n + 15).
    pub outer_radius: Option<T>,
}

impl<T: Scalar> Default for GridSpec<T> {
    fn default() -> Self {
        GridSpec {
            step: T::lit(0.01),
            outer_radius: None,
        }
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn outer_radius_for(&self, n: u32) -> T {
        self.outer_radius.unwrap_or_else(|| {
            let n = T::lit(f64::from(n));
            T::lit(2.0) * n * (n + T::lit(15.0))
        })
    }

    fn outer_index(&self, n: u32) -> usize {
        let x_out = self.outer_radius_for(n).sqrt();
        (x_out / self.step).ceil().as_f64() as usize
    }
}

/// Normalized u(r) = r·R(r) sampled on x_i = i·h for `i` in
/// `first_index..first_index + values.len()`; zero elsewhere.
#[derive(Clone, Debug)]
pub struct RadialWavefunction<T> {
    pub state: RydbergState,
    step: T,
    first_index: usize,
    values: Vec<T>,
}

impl<T: Scalar> RadialWavefunction<T> {
    pub fn step(&self) -> T {
        self.step
    }

    pub fn first_index(&self) -> usize {
        self.first_index
    }

    /// u(r) samples, aligned with [`RadialWavefunction::radii`].
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Radial abscissae in a₀, strictly increasing.
    pub fn radii(&self) -> Vec<T> {
        (0..self.values.len())
            .map(|k| {
                let x = self.step * T::from_usize_lossy(self.first_index + k);
                x * x
            })
            .collect()
    }

    fn x_at(&self, k: usize) -> T {
        self.step * T::from_usize_lossy(self.first_index + k)
    }

    /// ∫ u(r)² dr.
    pub fn norm_squared(&self) -> T {
        let two = T::lit(2.0);
        self.values
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, &u)| {
                let x = self.x_at(k);
                acc + u * u * two * x
            })
            * self.step
    }

    /// Number of sign changes of u(r), ignoring round-off level samples
    /// (below 10⁻⁶ of the peak) near the grid ends.
    pub fn node_count(&self) -> usize {
        let floor = self.peak_amplitude() * T::lit(1e-6);
        let mut nodes = 0;
        let mut last_sign = 0i8;
        for &u in &self.values {
            let sign = if u > floor {
                1
            } else if u < -floor {
                -1
            } else {
                0
            };
            if sign != 0 {
                if last_sign != 0 && sign != last_sign {
                    nodes += 1;
                }
                last_sign = sign;
            }
        }
        nodes
    }

    /// Radius (a₀) of the largest |u|.
    pub fn peak_radius(&self) -> T {
        let (k, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, T::zero()), |(bk, bv), (k, &u)| {
                if u.abs() > bv {
                    (k, u.abs())
                } else {
                    (bk, bv)
                }
            });
        let x = self.x_at(k);
        x * x
    }

    pub fn peak_amplitude(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &u| m.max(u.abs()))
    }
}

/// Integrates and normalizes the radial function of `state`.
pub fn radial_wavefunction<T: Scalar>(
    state: &RydbergState,
    defects: &QuantumDefectTable,
    grid: &GridSpec<T>,
) -> Result<RadialWavefunction<T>> {
    let n_star_f = defects.effective_n(state)?;
    let l = state.l;
    if n_star_f <= f64::from(l) {
        return Err(Error::Domain(format!(
            "{state}: n* = {n_star_f:.4} must exceed L = {l}"
        )));
    }
    let n_star = T::lit(n_star_f);
    let h = grid.step;
    let h2_12 = h * h / T::lit(12.0);
    let lf = T::lit(f64::from(l));
    let centrifugal = (T::lit(2.0) * lf + T::lit(0.5)) * (T::lit(2.0) * lf + T::lit(1.5));
    let inv_n2 = T::one() / (n_star * n_star);
    let k = |i: usize| {
        let x = h * T::from_usize_lossy(i);
        centrifugal / (x * x) - T::lit(8.0) + T::lit(4.0) * x * x * inv_n2
    };

    let i_out = grid.outer_index(state.n);
    if i_out < 4 {
        return Err(Error::Numerical(format!(
            "grid for {state} has only {i_out} points (step {h})"
        )));
    }
    let mut w = vec![T::zero(); i_out + 1];
    let start = T::lit(1e-10);
    w[i_out] = start;
    w[i_out - 1] = start * (T::one() + h * k(i_out).max(T::zero()).sqrt());

    // Numerov loses stability once h²k/12 is of order one; below that point the
    // regular solution is negligible and the irregular one is discarded anyway.
    let stable = |i: usize| h2_12 * k(i) < T::lit(0.1);
    let mut i_stop = 1;
    let mut i = i_out - 1;
    while i >= 2 {
        if !stable(i - 1) {
            i_stop = i;
            break;
        }
        let next = (T::lit(2.0) * (T::one() + T::lit(5.0) * h2_12 * k(i)) * w[i]
            - (T::one() - h2_12 * k(i + 1)) * w[i + 1])
            / (T::one() - h2_12 * k(i - 1));
        w[i - 1] = next;
        i -= 1;
    }

    // u = x^{1/2} w
    let mut u: Vec<T> = (0..=i_out)
        .map(|i| {
            if i < i_stop {
                T::zero()
            } else {
                (h * T::from_usize_lossy(i)).sqrt() * w[i]
            }
        })
        .collect();

    // Inward integration picks up the irregular Coulomb solution near the
    // origin. With a non-integer n* it is physical and large: cut at the
    // innermost node in the classically allowed region. With an integer n* it
    // is only discretization error: cut where |u| starts growing inward below
    // the inner turning point.
    let hydrogenic = (n_star_f - n_star_f.round()).abs() < 1e-9;
    let lf64 = f64::from(l);
    let disc = 1.0 - lf64 * (lf64 + 1.0) / (n_star_f * n_star_f);
    let r_turn = n_star_f * n_star_f * (1.0 - disc.max(0.0).sqrt());
    let r_at = |i: usize| {
        let x = (h * T::from_usize_lossy(i)).as_f64();
        x * x
    };
    let mut cut = None;
    if !hydrogenic {
        for i in i_stop.max(1)..i_out {
            if r_at(i) < r_turn {
                continue;
            }
            if u[i] == T::zero() || (u[i] > T::zero()) != (u[i + 1] > T::zero()) {
                cut = Some(if u[i].abs() <= u[i + 1].abs() { i } else { i + 1 });
                break;
            }
        }
        if cut.is_none() && l > 0 {
            return Err(Error::Numerical(format!(
                "{state}: no node found outside the inner turning point r = {r_turn:.3} a0 \
                 (grid step {h}, {} points)",
                i_out + 1
            )));
        }
    } else if l > 0 {
        let mut i = i_out - 1;
        while i > i_stop {
            if r_at(i) < r_turn && u[i - 1].abs() > u[i].abs() {
                cut = Some(i);
                break;
            }
            i -= 1;
        }
    }
    let mut first = 0;
    if let Some(c) = cut {
        for v in u.iter_mut().take(c + 1) {
            *v = T::zero();
        }
        first = c;
    }

    let mut wf = RadialWavefunction {
        state: *state,
        step: h,
        first_index: first,
        values: u.split_off(first),
    };
    let norm2 = wf.norm_squared();
    if !(norm2.as_f64().is_finite()) || norm2 <= T::zero() {
        return Err(Error::Numerical(format!(
            "{state}: normalization integral {norm2} did not converge \
             (step {h}, outer radius {}, {} points)",
            grid.outer_radius_for(state.n),
            i_out + 1
        )));
    }
    let scale = T::one() / norm2.sqrt();
    for v in &mut wf.values {
        *v *= scale;
    }
    // orient the outermost lobe positively
    if let Some(&tail) = wf.values.iter().rev().find(|v| **v != T::zero()) {
        if tail < T::zero() {
            for v in &mut wf.values {
                *v = -*v;
            }
        }
    }
    Ok(wf)
}

/// ∫ u_a(r) r u_b(r) dr over the shared lattice.
pub fn radial_overlap_r<T: Scalar>(a: &RadialWavefunction<T>, b: &RadialWavefunction<T>) -> Result<T> {
    if a.step != b.step {
        return Err(Error::Numerical(format!(
            "radial grids differ in step ({} vs {})",
            a.step, b.step
        )));
    }
    let lo = a.first_index.max(b.first_index);
    let hi = (a.first_index + a.values.len()).min(b.first_index + b.values.len());
    let h = a.step;
    let two = T::lit(2.0);
    let mut acc = T::zero();
    for i in lo..hi {
        let x = h * T::from_usize_lossy(i);
        let x2 = x * x;
        acc += a.values[i - a.first_index] * b.values[i - b.first_index] * x2 * two * x;
    }
    Ok(acc * h)
}
