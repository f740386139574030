//! Assembly of the many-body Hamiltonian.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Complex, ComplexField, DMatrix};

use crate::atomic::Branch;
use crate::error::{Error, Result};
use crate::hamiltonian::basis::{transfers, Basis};
use crate::hamiltonian::geometry::{contract, ClosePairRule, PairGeometry};
use crate::hamiltonian::scheme::{process_allowed, AtomSite, CouplingMode, LevelClass, LevelScheme, SiteRole};
use crate::scalar::Scalar;

/// Pair detuning (MHz) of each branch: energy of an upper s-atom level
/// relative to the resonant reaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detuning<T> {
    pub f1: T,
    pub f2: T,
}

impl<T: Scalar> Detuning<T> {
    pub fn uniform(delta: T) -> Self {
        Detuning { f1: delta, f2: delta }
    }

    pub fn get(&self, branch: Branch) -> T {
        match branch {
            Branch::F1 => self.f1,
            Branch::F2 => self.f2,
        }
    }
}

/// Sites, basis and Hermitian Hamiltonian (MHz) of one frozen configuration.
#[derive(Clone, Debug)]
pub struct ManyBodyProblem<T: Scalar> {
    pub sites: Vec<AtomSite<T>>,
    pub scheme: Arc<LevelScheme<T>>,
    pub basis: Basis,
    pub hamiltonian: DMatrix<Complex<T>>,
}

impl<T: Scalar> ManyBodyProblem<T> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn initial(&self) -> usize {
        self.basis.initial()
    }

    pub fn s_atom_count(&self) -> usize {
        self.sites.iter().filter(|s| s.role == SiteRole::S).count()
    }

    /// Number of s-atoms in the upper level, per basis configuration.
    pub fn upper_counts(&self) -> Vec<usize> {
        self.basis.iter().map(|c| transfers(&self.scheme, c)).collect()
    }

    /// Whether `site` is in an upper s level, per basis configuration.
    pub fn site_upper_mask(&self, site: usize) -> Vec<bool> {
        self.basis
            .iter()
            .map(|c| self.scheme.level(c[site] as usize).class == LevelClass::P)
            .collect()
    }

    /// (# upper s levels) − (# 42p levels), conserved by every coupling.
    pub fn excitation_balance(&self, config: usize) -> i64 {
        self.basis
            .config(config)
            .iter()
            .map(|&l| match self.scheme.level(l as usize).class {
                LevelClass::P => 1,
                LevelClass::PPrime => -1,
                _ => 0,
            })
            .sum()
    }

    pub fn max_hermiticity_error(&self) -> T {
        let h = &self.hamiltonian;
        let mut worst = T::zero();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                worst = worst.max((h[(i, j)] - h[(j, i)].conj()).modulus());
            }
        }
        worst
    }

    /// Plain-text listing of the basis and the matrix, full precision.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# sites {}", self.sites.len());
        for (i, s) in self.sites.iter().enumerate() {
            let p = s.position;
            let _ = writeln!(out, "site {i} {} {:e} {:e} {:e}", s.role.name(), p[0], p[1], p[2]);
        }
        let _ = writeln!(out, "# basis {} initial {}", self.dim(), self.initial());
        for (k, c) in self.basis.iter().enumerate() {
            let names: Vec<String> = c.iter().map(|&l| self.scheme.level(l as usize).state.to_string()).collect();
            let _ = writeln!(out, "config {k} {}", names.join(" | "));
        }
        let _ = writeln!(out, "# hamiltonian MHz (re im)");
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let z = self.hamiltonian[(i, j)];
                    format!("{:e} {:e}", z.re, z.im)
                })
                .collect();
            let _ = writeln!(out, "{}", row.join("  "));
        }
        out
    }
}

/// Fill H from the basis: pair couplings off the diagonal, detunings and
/// per-atom noise on it.
///
/// The diagonal of a configuration is Σ over upper s levels of the branch
/// detuning, plus `noise[a]` for every atom `a` that has left its initial
/// level class.
pub fn assemble_hamiltonian<T: Scalar>(
    sites: &[AtomSite<T>],
    scheme: Arc<LevelScheme<T>>,
    basis: Basis,
    detuning: &Detuning<T>,
    noise: &[T],
    rule: &ClosePairRule,
    exchange: bool,
) -> Result<ManyBodyProblem<T>> {
    let n = sites.len();
    if noise.len() != n {
        return Err(Error::Domain(format!("{} noise detunings for {n} sites", noise.len())));
    }
    if !detuning.f1.is_finite() || !detuning.f2.is_finite() || noise.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("detunings must be finite".into()));
    }
    let pairs = pair_table(sites, scheme.mode(), rule)?;
    let dim = basis.len();
    let zero = Complex::new(T::zero(), T::zero());
    let mut h = DMatrix::from_element(dim, dim, zero);
    let initial_class: Vec<LevelClass> = sites
        .iter()
        .map(|s| scheme.level(scheme.initial_level(s.role)).class)
        .collect();

    let mut next = vec![0u8; n];
    for i in 0..dim {
        let cfg = basis.config(i);
        let mut diag = T::zero();
        for (a, &l) in cfg.iter().enumerate() {
            let level = scheme.level(l as usize);
            if let Some(b) = level.branch {
                diag += detuning.get(b);
            }
            if level.class != initial_class[a] {
                diag += noise[a];
            }
        }
        h[(i, i)] = Complex::new(diag, T::zero());

        next.copy_from_slice(cfg);
        for a in 0..n {
            for b in a + 1..n {
                let pair = &pairs[a * n + b];
                for la in scheme.links_from(cfg[a] as usize) {
                    for lb in scheme.links_from(cfg[b] as usize) {
                        let ca = (scheme.level(la.from).class, scheme.level(la.to).class);
                        let cb = (scheme.level(lb.from).class, scheme.level(lb.to).class);
                        if !process_allowed(ca, cb, exchange) {
                            continue;
                        }
                        next[a] = la.to as u8;
                        next[b] = lb.to as u8;
                        // targets outside the basis are cut by max_transfers
                        if let Some(j) = basis.index_of(&next) {
                            if j > i {
                                let v = contract(&pair.weights, &la.mu, &lb.mu) * pair.inverse_cube;
                                h[(j, i)] = v;
                                h[(i, j)] = v.conj();
                            }
                        }
                        next[a] = cfg[a];
                        next[b] = cfg[b];
                    }
                }
            }
        }
    }
    Ok(ManyBodyProblem {
        sites: sites.to_vec(),
        scheme,
        basis,
        hamiltonian: h,
    })
}

struct PairEntry<T> {
    weights: [[Complex<T>; 3]; 3],
    inverse_cube: T,
}

fn pair_table<T: Scalar>(sites: &[AtomSite<T>], mode: CouplingMode, rule: &ClosePairRule) -> Result<Vec<PairEntry<T>>> {
    let n = sites.len();
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            if b <= a {
                out.push(PairEntry { weights: [[zero; 3]; 3], inverse_cube: T::zero() });
                continue;
            }
            let g = PairGeometry::new(&sites[a].position, &sites[b].position, rule, (a, b))?;
            let weights = match mode {
                CouplingMode::Tensor => g.angular_weights(),
                CouplingMode::Scalar => {
                    let c = g.cos_theta();
                    let mut w = [[zero; 3]; 3];
                    w[1][1] = Complex::new(T::one() - T::lit(3.0) * c * c, T::zero());
                    w
                }
            };
            out.push(PairEntry { weights, inverse_cube: g.inverse_cube_mhz() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{AtomicStructure, ReactionLevels};
    use crate::hamiltonian::basis::{build_basis, BasisOptions};
    use crate::hamiltonian::geometry::pair_coupling;
    use crate::hamiltonian::scheme::CouplingChannel;
    use proptest::prelude::*;

    fn channel(mu_s: f64, mu_d: f64) -> CouplingChannel<f64> {
        CouplingChannel {
            levels: ReactionLevels::rubidium_49s_41d(),
            branch: Branch::F1,
            mu_d,
            mu_s,
            delta0_mhz: 25.0,
        }
    }

    fn problem(
        sites: &[AtomSite<f64>],
        scheme: LevelScheme<f64>,
        delta: f64,
        noise: &[f64],
    ) -> ManyBodyProblem<f64> {
        let basis = build_basis(sites, &scheme, &BasisOptions::default()).unwrap();
        assemble_hamiltonian(sites, Arc::new(scheme), basis, &Detuning::uniform(delta), noise, &ClosePairRule::default(), true)
            .unwrap()
    }

    #[test]
    fn resonant_pair_is_two_level() {
        let sites = [
            AtomSite::new([0.0, 0.0, 0.0], SiteRole::S),
            AtomSite::new([40.0, 0.0, 0.0], SiteRole::D),
        ];
        let p = problem(&sites, LevelScheme::scalar(&channel(1100.0, 1000.0)), 0.0, &[0.0, 0.0]);
        let v = pair_coupling(&[0.0; 3], &[40.0, 0.0, 0.0], 1100.0, 1000.0, &ClosePairRule::default()).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.hamiltonian[(0, 0)].re, 0.0);
        assert_eq!(p.hamiltonian[(1, 1)].re, 0.0);
        assert_eq!(p.hamiltonian[(0, 1)].re, v);
        assert_eq!(p.hamiltonian[(1, 0)].re, v);
    }

    #[test]
    fn zero_dipoles_leave_h_diagonal() {
        use SiteRole::*;
        let sites: Vec<_> = [S, S, D, D]
            .iter()
            .enumerate()
            .map(|(i, &r)| AtomSite::new([20.0 * (i % 2) as f64, 3.0 * i as f64, 17.0 * i as f64], r))
            .collect();
        let p = problem(&sites, LevelScheme::scalar(&channel(0.0, 0.0)), 1.5, &[0.1, 0.2, 0.3, 0.4]);
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                if i != j {
                    assert_eq!(p.hamiltonian[(i, j)], Complex::new(0.0, 0.0));
                }
            }
        }
        // diagonal counts transfers plus noise of every atom that changed
        for (k, c) in p.basis.iter().enumerate() {
            let mut want = 1.5 * p.upper_counts()[k] as f64;
            for a in 0..4 {
                if c[a] != p.scheme.initial_level(sites[a].role) as u8 {
                    want += [0.1, 0.2, 0.3, 0.4][a];
                }
            }
            assert!((p.hamiltonian[(k, k)].re - want).abs() < 1e-15);
        }
    }

    /// Independent assembly: loop over basis pairs, find the two differing
    /// sites, and evaluate the scalar coupling formula directly.
    fn hand_assembled(p: &ManyBodyProblem<f64>, mu_s: f64, mu_d: f64, delta: f64, noise: &[f64]) -> DMatrix<f64> {
        let dim = p.dim();
        let mut h = DMatrix::zeros(dim, dim);
        let class = |l: u8| p.scheme.level(l as usize).class;
        for i in 0..dim {
            let ci = p.basis.config(i);
            for j in 0..dim {
                let cj = p.basis.config(j);
                let diff: Vec<usize> = (0..ci.len()).filter(|&a| ci[a] != cj[a]).collect();
                if i == j {
                    let mut d = 0.0;
                    for a in 0..ci.len() {
                        if class(ci[a]) == LevelClass::P {
                            d += delta;
                        }
                        if ci[a] as usize != p.scheme.initial_level(p.sites[a].role) {
                            d += noise[a];
                        }
                    }
                    h[(i, i)] = d;
                } else if diff.len() == 2 {
                    let (a, b) = (diff[0], diff[1]);
                    let mu = |site: usize| match p.sites[site].role {
                        SiteRole::S => mu_s,
                        _ => mu_d,
                    };
                    let ok = process_allowed((class(ci[a]), class(cj[a])), (class(ci[b]), class(cj[b])), true);
                    if ok {
                        h[(i, j)] = pair_coupling(
                            &p.sites[a].position,
                            &p.sites[b].position,
                            mu(a),
                            mu(b),
                            &ClosePairRule::default(),
                        )
                        .unwrap();
                    }
                }
            }
        }
        h
    }

    #[test]
    fn matches_hand_assembly_on_seeded_geometry() {
        use rand::{Rng, SeedableRng};
        use SiteRole::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let roles = [S, S, D, D, Spectator42p];
        let sites: Vec<_> = roles
            .iter()
            .map(|&r| {
                let x = if r == S { 0.0 } else { 30.0 };
                AtomSite::new([x + rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-40.0..40.0)], r)
            })
            .collect();
        let noise = [0.3, -0.7, 1.1, 0.2, -0.4];
        let p = problem(&sites, LevelScheme::scalar(&channel(1134.0, 999.0)), 0.8, &noise);
        let want = hand_assembled(&p, 1134.0, 999.0, 0.8, &noise);
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                let got = p.hamiltonian[(i, j)];
                assert!((got.re - want[(i, j)]).abs() <= 1e-12 * want[(i, j)].abs().max(1e-3), "({i},{j})");
                assert_eq!(got.im, 0.0);
            }
        }
        for k in 0..p.dim() {
            assert_eq!(p.excitation_balance(k), p.excitation_balance(p.initial()));
        }
    }

    fn rb() -> &'static AtomicStructure<f64> {
        static RB: std::sync::OnceLock<AtomicStructure<f64>> = std::sync::OnceLock::new();
        RB.get_or_init(AtomicStructure::rubidium85)
    }

    #[test]
    fn scalar_equals_tensor_on_axial_states() {
        // On F1 the q = 0 chain 49s(+1/2)+41d(+1/2) → 49p(+1/2)+42p(+1/2) is
        // the scalar coupling exactly.
        let lv = ReactionLevels::rubidium_49s_41d();
        let ch = CouplingChannel::from_structure(rb(), lv, Branch::F1).unwrap();
        let tensor = LevelScheme::tensor(rb(), &lv).unwrap();
        let scalar = LevelScheme::scalar(&ch);
        for pos in [[35.0, 0.0, 0.0], [25.0, 7.0, -30.0], [10.0, -3.0, 12.0]] {
            let sites = [AtomSite::new([0.0; 3], SiteRole::S), AtomSite::new(pos, SiteRole::D)];
            let ps = problem(&sites, scalar.clone(), 0.0, &[0.0; 2]);
            let pt = problem(&sites, tensor.clone(), 0.0, &[0.0; 2]);
            let target = |p: &ManyBodyProblem<f64>| -> usize {
                let s_up = p.scheme.levels().iter().position(|l| l.state == lv.s_final).unwrap();
                let d_dn = p.scheme.levels().iter().position(|l| l.state == lv.d_final).unwrap();
                p.basis.index_of(&[s_up as u8, d_dn as u8]).unwrap()
            };
            let vs = ps.hamiltonian[(target(&ps), ps.initial())].norm();
            let vt = pt.hamiltonian[(target(&pt), pt.initial())].norm();
            assert!((vs - vt).abs() <= 1e-9 * vs, "{vs} vs {vt}");
        }
    }

    #[test]
    fn tensor_assembly_is_hermitian_both_ways() {
        // every off-diagonal element computed from the upper side equals the
        // conjugate of the element computed directly from the lower side
        let lv = ReactionLevels::rubidium_49s_41d();
        let scheme = LevelScheme::tensor(rb(), &lv).unwrap();
        let sites = [
            AtomSite::new([0.0, 1.0, 2.0], SiteRole::S),
            AtomSite::new([3.0, -4.0, 25.0], SiteRole::S),
            AtomSite::new([30.0, 2.0, -6.0], SiteRole::D),
        ];
        let p = problem(&sites, scheme.clone(), 0.5, &[0.0; 3]);
        let rule = ClosePairRule::default();
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                let ci = p.basis.config(i);
                let cj = p.basis.config(j);
                let diff: Vec<usize> = (0..3).filter(|&a| ci[a] != cj[a]).collect();
                if diff.len() != 2 {
                    continue;
                }
                let (a, b) = (diff[0], diff[1]);
                let mu = |from: u8, to: u8| {
                    scheme.links_from(from as usize).iter().find(|l| l.to == to as usize).map(|l| l.mu)
                };
                if let (Some(ma), Some(mb)) = (mu(ci[a], cj[a]), mu(ci[b], cj[b])) {
                    let direct = crate::hamiltonian::geometry::tensor_pair_coupling(
                        &sites[a].position,
                        &sites[b].position,
                        &ma,
                        &mb,
                        &rule,
                    )
                    .unwrap();
                    let got = p.hamiltonian[(j, i)];
                    assert!((got - direct).norm() <= 1e-12 * direct.norm().max(1e-9), "({j},{i})");
                }
            }
        }
        assert!(p.max_hermiticity_error() <= 1e-12);
    }

    fn spectrum(p: &ManyBodyProblem<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = p.hamiltonian.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    fn arb_geometry() -> impl Strategy<Value = Vec<[f64; 3]>> {
        proptest::collection::vec((-6.0..6.0f64, -6.0..6.0f64, -60.0..60.0f64), 5).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, z))| [x + if i < 2 { 0.0 } else { 25.0 }, y, z])
                .collect::<Vec<[f64; 3]>>()
        })
        // coincident atoms are rejected under every close-pair policy
        .prop_filter("distinct positions", |v| {
            v.iter().enumerate().all(|(i, a)| {
                v[i + 1..].iter().all(|b| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>() > 1e-4)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn hermitian_and_translation_invariant(pos in arb_geometry(), shift in (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64)) {
            use SiteRole::*;
            let roles = [S, S, D, D, D];
            let mk = |off: [f64; 3]| -> Vec<AtomSite<f64>> {
                pos.iter().zip(roles).map(|(p, r)| AtomSite::new([p[0] + off[0], p[1] + off[1], p[2] + off[2]], r)).collect()
            };
            let ch = channel(1134.0, 999.0);
            let noise = [0.1, -0.2, 0.3, 0.0, 0.5];
            let rule = ClosePairRule { floor_um: 0.5, policy: crate::hamiltonian::geometry::ClosePairPolicy::Cap };
            let build = |s: &[AtomSite<f64>]| {
                let scheme = LevelScheme::scalar(&ch);
                let basis = build_basis(s, &scheme, &BasisOptions::default()).unwrap();
                assemble_hamiltonian(s, Arc::new(scheme), basis, &Detuning::uniform(0.7), &noise, &rule, true).unwrap()
            };
            let a = build(&mk([0.0; 3]));
            prop_assert!(a.max_hermiticity_error() <= 1e-12);
            // float shifts round the coordinate differences
            let b = build(&mk([shift.0, shift.1, shift.2]));
            for (x, y) in a.hamiltonian.iter().zip(b.hamiltonian.iter()) {
                prop_assert!((x - y).norm() <= 1e-12 * x.norm().max(1e-6));
            }
        }

        #[test]
        fn permuting_identical_atoms_keeps_spectrum(pos in arb_geometry(), perm in Just([1usize, 0, 4, 2, 3])) {
            use SiteRole::*;
            let roles = [S, S, D, D, D];
            let sites: Vec<_> = pos.iter().zip(roles).map(|(p, r)| AtomSite::new(*p, r)).collect();
            let noise = [0.1, -0.2, 0.3, 0.0, 0.5];
            let permuted: Vec<_> = perm.iter().map(|&k| sites[k]).collect();
            let pnoise: Vec<f64> = perm.iter().map(|&k| noise[k]).collect();
            let rule = ClosePairRule { floor_um: 0.5, policy: crate::hamiltonian::geometry::ClosePairPolicy::Cap };
            let ch = channel(1134.0, 999.0);
            let build = |s: &[AtomSite<f64>], nz: &[f64]| {
                let scheme = LevelScheme::scalar(&ch);
                let basis = build_basis(s, &scheme, &BasisOptions::default()).unwrap();
                assemble_hamiltonian(s, Arc::new(scheme), basis, &Detuning::uniform(0.7), nz, &rule, true).unwrap()
            };
            let ea = spectrum(&build(&sites, &noise));
            let eb = spectrum(&build(&permuted, &pnoise));
            prop_assert_eq!(ea.len(), eb.len());
            for (x, y) in ea.iter().zip(eb.iter()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
