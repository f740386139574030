//! Time evolution of an assembled problem and the 49p-fraction observable.
//!
//! Convention: H in MHz, t in µs, |ψ(t)⟩ = exp(−2πi H t)|ψ(0)⟩. A resonant
//! pair coupled by V then transfers as sin²(2πVt), with the first maximum at
//! t = 1/(4V) and a full beat period of 1/(2V).

use nalgebra::{Complex, ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hamiltonian::ManyBodyProblem;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct EvolutionResult<T> {
    pub times: Vec<T>,
    /// `populations[k][i]`: probability of configuration i at `times[k]`.
    pub populations: Vec<Vec<T>>,
    /// Expected fraction of s-atoms in the upper level.
    pub p_fraction: Vec<T>,
}

impl<T: Scalar> EvolutionResult<T> {
    fn from_populations(problem: &ManyBodyProblem<T>, times: &[T], populations: Vec<Vec<T>>) -> Self {
        let counts = problem.upper_counts();
        let n_s = T::from_usize_lossy(problem.s_atom_count());
        let p_fraction = populations
            .iter()
            .map(|pop| {
                let mut acc = T::zero();
                for (p, &c) in pop.iter().zip(&counts) {
                    if c > 0 {
                        acc += *p * T::from_usize_lossy(c);
                    }
                }
                (acc / n_s).max(T::zero()).min(T::one())
            })
            .collect();
        EvolutionResult {
            times: times.to_vec(),
            populations,
            p_fraction,
        }
    }

    /// Probability that the configurations selected by `mask` are occupied,
    /// per time.
    pub fn probability_of(&self, mask: &[bool]) -> Vec<T> {
        self.populations
            .iter()
            .map(|pop| {
                pop.iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .fold(T::zero(), |acc, (p, _)| acc + *p)
            })
            .collect()
    }

    pub fn max_norm_error(&self) -> T {
        self.populations
            .iter()
            .map(|pop| (pop.iter().fold(T::zero(), |a, p| a + *p) - T::one()).abs())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Eigendecomposition of H, reusable for any number of times.
#[derive(Clone, Debug)]
pub struct Spectral<T: Scalar> {
    energies: DVector<T>,
    vectors: DMatrix<Complex<T>>,
}

impl<T: Scalar> Spectral<T> {
    pub fn new(h: &DMatrix<Complex<T>>) -> Result<Self> {
        let dim = h.nrows();
        let eps = T::default_epsilon() * T::lit(4.0);
        match SymmetricEigen::try_new(h.clone(), eps, 10_000 + 100 * dim) {
            Some(e) => Ok(Spectral {
                energies: e.eigenvalues,
                vectors: e.eigenvectors,
            }),
            None => {
                let scale = h.iter().map(|z| z.modulus()).fold(T::zero(), |a, b| a.max(b));
                let mut herm = T::zero();
                for i in 0..dim {
                    for j in 0..dim {
                        herm = herm.max((h[(i, j)] - h[(j, i)].conj()).modulus());
                    }
                }
                Err(Error::Numerical(format!(
                    "eigensolver did not converge: dim {dim}, max |H| {scale} MHz, max |H - H†| {herm}"
                )))
            }
        }
    }

    pub fn energies(&self) -> &DVector<T> {
        &self.energies
    }

    /// exp(−2πi H t) ψ.
    pub fn propagate(&self, psi: &DVector<Complex<T>>, t: T) -> DVector<Complex<T>> {
        let mut coeff = self.vectors.ad_mul(psi);
        let two_pi_t = T::two_pi() * t;
        for (c, &e) in coeff.iter_mut().zip(self.energies.iter()) {
            let phase = -(e * two_pi_t);
            *c *= Complex::new(phase.cos(), phase.sin());
        }
        &self.vectors * coeff
    }

    pub fn populations(&self, psi0: &DVector<Complex<T>>, t: T) -> Vec<T> {
        self.propagate(psi0, t).iter().map(|z| z.modulus_squared()).collect()
    }
}

fn basis_vector<T: Scalar>(dim: usize, k: usize) -> DVector<Complex<T>> {
    let mut v = DVector::from_element(dim, Complex::new(T::zero(), T::zero()));
    v[k] = Complex::new(T::one(), T::zero());
    v
}

/// Exact propagation by full eigendecomposition.
pub fn evolve<T: Scalar>(problem: &ManyBodyProblem<T>, times: &[T]) -> Result<EvolutionResult<T>> {
    let spectral = Spectral::new(&problem.hamiltonian)?;
    let psi0 = basis_vector(problem.dim(), problem.initial());
    let populations = times.iter().map(|&t| spectral.populations(&psi0, t)).collect();
    Ok(EvolutionResult::from_populations(problem, times, populations))
}

/// Bound on 2π‖H‖·dt for the oracle stepper.
pub const ORACLE_PHASE_STEP: f64 = 0.01;

/// Independent propagation with fixed-step classical RK4 on
/// dψ/dt = −2πi H ψ. `times` must be non-negative and non-decreasing.
pub fn evolve_oracle<T: Scalar>(problem: &ManyBodyProblem<T>, times: &[T]) -> Result<EvolutionResult<T>> {
    let h = &problem.hamiltonian;
    let dim = h.nrows();
    if times.iter().any(|&t| t < T::zero()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("oracle times must be non-negative and sorted".into()));
    }
    // max row sum bounds the spectral radius
    let norm = (0..dim)
        .map(|i| h.row(i).iter().fold(T::zero(), |a, z| a + z.modulus()))
        .fold(T::zero(), |a, b| a.max(b));
    let minus_i_two_pi = Complex::new(T::zero(), -T::two_pi());
    let gen = h.map(|z| z * minus_i_two_pi);
    let dt_max = if norm > T::zero() {
        T::lit(ORACLE_PHASE_STEP) / (T::two_pi() * norm)
    } else {
        T::max_value().unwrap_or(T::one())
    };

    let mut psi = basis_vector::<T>(dim, problem.initial());
    let mut now = T::zero();
    let mut populations = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - now;
        if span > T::zero() {
            let steps = (span / dt_max).ceil().to_usize().unwrap_or(usize::MAX).max(1);
            let dt = span / T::from_usize_lossy(steps);
            let half = Complex::new(dt / T::lit(2.0), T::zero());
            let full = Complex::new(dt, T::zero());
            let sixth = Complex::new(dt / T::lit(6.0), T::zero());
            let two = Complex::new(T::lit(2.0), T::zero());
            for _ in 0..steps {
                let k1 = &gen * &psi;
                let k2 = &gen * (&psi + &k1 * half);
                let k3 = &gen * (&psi + &k2 * half);
                let k4 = &gen * (&psi + &k3 * full);
                psi += (k1 + k2 * two + k3 * two + k4) * sixth;
            }
            now = t;
        }
        let pop: Vec<T> = psi.iter().map(|z| z.modulus_squared()).collect();
        let drift = (pop.iter().fold(T::zero(), |a, p| a + *p) - T::one()).abs();
        if drift > T::lit(1e-6) {
            return Err(Error::Numerical(format!(
                "oracle norm drift {drift} at t = {t} µs exceeds 1e-6; step too large for ‖H‖ = {norm} MHz"
            )));
        }
        populations.push(pop);
    }
    Ok(EvolutionResult::from_populations(problem, times, populations))
}

/// Transfer probability of a two-level system with coupling `v` and
/// detuning `delta` (MHz) after `t` µs:
/// 4V²/(4V² + Δ²) · sin²(π √(4V² + Δ²) t).
pub fn two_level_analytic<T: Scalar>(v: T, delta: T, t: T) -> T {
    let four_v2 = T::lit(4.0) * v * v;
    let split2 = four_v2 + delta * delta;
    if split2 == T::zero() {
        return T::zero();
    }
    let s = (T::pi() * split2.sqrt() * t).sin();
    four_v2 / split2 * s * s
}

/// Full beat period 1/(2|V|) of a resonant pair, µs.
pub fn beat_period<T: Scalar>(v: T) -> T {
    T::one() / (T::lit(2.0) * v.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::atomic::{Branch, ReactionLevels};
    use crate::hamiltonian::*;
    use proptest::prelude::*;

    fn channel() -> CouplingChannel<f64> {
        CouplingChannel {
            levels: ReactionLevels::rubidium_49s_41d(),
            branch: Branch::F1,
            mu_d: 999.0,
            mu_s: 1134.0,
            delta0_mhz: 25.0,
        }
    }

    fn build(sites: &[AtomSite<f64>], delta: f64, noise: &[f64]) -> ManyBodyProblem<f64> {
        let scheme = LevelScheme::scalar(&channel());
        let basis = build_basis(sites, &scheme, &BasisOptions::default()).unwrap();
        let rule = ClosePairRule { floor_um: 0.5, policy: ClosePairPolicy::Cap };
        assemble_hamiltonian(sites, Arc::new(scheme), basis, &Detuning::uniform(delta), noise, &rule, true).unwrap()
    }

    fn pair(r: f64, delta: f64) -> (ManyBodyProblem<f64>, f64) {
        let sites = [AtomSite::new([0.0; 3], SiteRole::S), AtomSite::new([r, 0.0, 0.0], SiteRole::D)];
        let p = build(&sites, delta, &[0.0, 0.0]);
        let v = p.hamiltonian[(0, 1)].re;
        (p, v)
    }

    #[test]
    fn resonant_pair_follows_rabi_formula() {
        let (p, v) = pair(40.0, 0.0);
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.5).collect();
        let r = evolve(&p, &times).unwrap();
        for (t, pf) in times.iter().zip(&r.p_fraction) {
            let want = (2.0 * std::f64::consts::PI * v * t).sin().powi(2);
            assert!((pf - want).abs() < 1e-9, "t={t}: {pf} vs {want}");
            assert!((pf - two_level_analytic(v, 0.0, *t)).abs() < 1e-9);
        }
        // first maximum sits at a quarter of 1/V
        let t_max = 1.0 / (4.0 * v.abs());
        assert!((two_level_analytic(v, 0.0, t_max) - 1.0).abs() < 1e-12);
        assert_eq!(two_level_analytic(v, 0.0, 0.0), 0.0);
    }

    #[test]
    fn detuned_pair_matches_generalized_rabi() {
        let (p, v) = pair(25.0, 0.37);
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let r = evolve(&p, &times).unwrap();
        for (t, pf) in times.iter().zip(&r.p_fraction) {
            assert!((pf - two_level_analytic(v, 0.37, *t)).abs() < 1e-9);
        }
    }

    #[test]
    fn short_time_growth_is_quadratic() {
        let (p, v) = pair(40.0, 0.0);
        let t1 = 0.002 / v.abs();
        let t0 = t1 / 10.0;
        let r = evolve(&p, &[t0, t1]).unwrap();
        let slope = (r.p_fraction[1] / r.p_fraction[0]).ln() / 10f64.ln();
        assert!((slope - 2.0).abs() < 0.01, "{slope}");
        // p/t² flat within 1% up to 0.02/V
        let ts: Vec<f64> = (1..=10).map(|k| k as f64 * 0.002 / v.abs()).collect();
        let r = evolve(&p, &ts).unwrap();
        let ratios: Vec<f64> = ts.iter().zip(&r.p_fraction).map(|(t, pf)| pf / (t * t)).collect();
        for q in &ratios {
            assert!((q / ratios[0] - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn inverse_sixth_power_at_fixed_short_time() {
        let t = 0.01;
        let rs = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0];
        let (lx, ly): (Vec<f64>, Vec<f64>) = rs
            .iter()
            .map(|&r| {
                let (p, _) = pair(r, 0.0);
                (r.ln(), evolve(&p, &[t]).unwrap().p_fraction[0].ln())
            })
            .unzip();
        let mx = lx.iter().sum::<f64>() / lx.len() as f64;
        let my = ly.iter().sum::<f64>() / ly.len() as f64;
        let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        assert!((num / den + 6.0).abs() < 0.05, "{}", num / den);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        use SiteRole::*;
        let sites = [AtomSite::new([0.0; 3], S), AtomSite::new([30.0, 0.0, 0.0], D)];
        let scheme = LevelScheme::scalar(&channel()).decoupled();
        let basis = build_basis(&sites, &scheme, &BasisOptions::default()).unwrap();
        let p = assemble_hamiltonian(&sites, Arc::new(scheme), basis, &Detuning::uniform(0.0), &[0.0; 2], &ClosePairRule::default(), true)
            .unwrap();
        for r in [evolve(&p, &[0.0, 3.0, 25.0]).unwrap(), evolve_oracle(&p, &[0.0, 3.0, 25.0]).unwrap()] {
            for pop in &r.populations {
                assert_eq!(pop[p.initial()], 1.0);
            }
        }
    }

    #[test]
    fn oracle_norm_budget_over_25_us() {
        let (p, _) = pair(20.0, 0.4);
        let r = evolve_oracle(&p, &[25.0]).unwrap();
        assert!(r.max_norm_error() < 1e-8, "{}", r.max_norm_error());
    }

    #[test]
    fn oracle_rejects_unsorted_times() {
        let (p, _) = pair(20.0, 0.0);
        assert!(matches!(evolve_oracle(&p, &[1.0, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn beat_period_helper() {
        assert_eq!(beat_period(0.05f64), 10.0);
    }

    fn arb_problem() -> impl Strategy<Value = (Vec<[f64; 3]>, Vec<f64>, f64)> {
        (
            proptest::collection::vec((-6.0..6.0f64, -6.0..6.0f64, -30.0..30.0f64), 4..=6),
            proptest::collection::vec(-1.5..1.5f64, 6),
            -1.0..1.0f64,
        )
            .prop_map(|(pos, noise, delta)| {
                let pos = pos
                    .into_iter()
                    .enumerate()
                    .map(|(i, (x, y, z))| [x + if i % 2 == 0 { 0.0 } else { 15.0 }, y, z])
                    .collect();
                (pos, noise, delta)
            })
    }

    fn problem_from(pos: &[[f64; 3]], noise: &[f64], delta: f64) -> ManyBodyProblem<f64> {
        let sites: Vec<_> = pos
            .iter()
            .enumerate()
            .map(|(i, p)| AtomSite::new(*p, if i % 2 == 0 { SiteRole::S } else { SiteRole::D }))
            .collect();
        build(&sites, delta, &noise[..sites.len()])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn propagators_agree((pos, noise, delta) in arb_problem()) {
            let p = problem_from(&pos, &noise, delta);
            let times = [0.0, 0.7, 2.5, 6.0];
            let a = evolve(&p, &times).unwrap();
            let b = evolve_oracle(&p, &times).unwrap();
            for (pa, pb) in a.populations.iter().zip(&b.populations) {
                for (x, y) in pa.iter().zip(pb) {
                    prop_assert!((x - y).abs() < 1e-6);
                }
            }
            prop_assert!(a.max_norm_error() < 1e-10);
            for f in &a.p_fraction {
                prop_assert!((0.0..=1.0).contains(f));
            }
        }

        #[test]
        fn time_reversal((pos, noise, delta) in arb_problem(), t in 0.1..25.0f64) {
            let p = problem_from(&pos, &noise, delta);
            let s = Spectral::new(&p.hamiltonian).unwrap();
            let psi0 = basis_vector::<f64>(p.dim(), p.initial());
            let back = s.propagate(&s.propagate(&psi0, t), -t);
            for (i, z) in back.iter().enumerate() {
                let want = if i == p.initial() { 1.0 } else { 0.0 };
                prop_assert!((z.modulus_squared() - want).abs() < 1e-9);
            }
        }
    }
}
