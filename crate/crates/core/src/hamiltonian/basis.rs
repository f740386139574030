//! Product-configuration basis reachable from the initial configuration.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::hamiltonian::scheme::{process_allowed, AtomSite, LevelClass, LevelScheme, SiteRole};
use crate::scalar::Scalar;

pub const DEFAULT_BASIS_CAP: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisOptions {
    /// Upper bound on the number of s-atoms in the upper level.
    pub max_transfers: Option<usize>,
    /// Include in-volume s↔p and d↔p′ exchange.
    pub exchange: bool,
    pub cap: usize,
}

impl Default for BasisOptions {
    fn default() -> Self {
        BasisOptions {
            max_transfers: None,
            exchange: true,
            cap: DEFAULT_BASIS_CAP,
        }
    }
}

/// Configurations (one level id per site), sorted lexicographically.
#[derive(Clone, Debug)]
pub struct Basis {
    n_sites: usize,
    configs: Vec<u8>,
    index: HashMap<Vec<u8>, usize>,
    initial: usize,
}

impl Basis {
    pub fn len(&self) -> usize {
        self.configs.len() / self.n_sites.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn config(&self, i: usize) -> &[u8] {
        &self.configs[i * self.n_sites..(i + 1) * self.n_sites]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        self.configs.chunks(self.n_sites.max(1))
    }

    pub fn index_of(&self, config: &[u8]) -> Option<usize> {
        self.index.get(config).copied()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }
}

/// Number of s-atoms in the upper level.
pub(crate) fn transfers<T: Scalar>(scheme: &LevelScheme<T>, config: &[u8]) -> usize {
    config
        .iter()
        .filter(|&&l| scheme.level(l as usize).class == LevelClass::P)
        .count()
}

/// Breadth-first closure of the initial configuration under every pair
/// process that has a nonzero dipole on both legs.
pub fn build_basis<T: Scalar>(sites: &[AtomSite<T>], scheme: &LevelScheme<T>, opts: &BasisOptions) -> Result<Basis> {
    let n_s = sites.iter().filter(|s| s.role == SiteRole::S).count();
    let n_d = sites.iter().filter(|s| s.role == SiteRole::D).count();
    if n_s == 0 || n_d == 0 {
        return Err(Error::Domain(format!(
            "basis needs at least one s-atom and one d-atom (got {n_s} and {n_d})"
        )));
    }
    if scheme.levels().len() > u8::MAX as usize {
        return Err(Error::Resource("too many levels per atom".into()));
    }
    let start: Vec<u8> = sites.iter().map(|s| scheme.initial_level(s.role) as u8).collect();
    let mut seen: HashMap<Vec<u8>, ()> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone(), ());
    queue.push_back(start.clone());
    let n = sites.len();
    while let Some(cfg) = queue.pop_front() {
        for a in 0..n {
            for b in a + 1..n {
                for la in scheme.links_from(cfg[a] as usize) {
                    for lb in scheme.links_from(cfg[b] as usize) {
                        let ca = (scheme.level(la.from).class, scheme.level(la.to).class);
                        let cb = (scheme.level(lb.from).class, scheme.level(lb.to).class);
                        if !process_allowed(ca, cb, opts.exchange) {
                            continue;
                        }
                        let mut next = cfg.clone();
                        next[a] = la.to as u8;
                        next[b] = lb.to as u8;
                        if let Some(k) = opts.max_transfers {
                            if transfers(scheme, &next) > k {
                                continue;
                            }
                        }
                        if seen.contains_key(&next) {
                            continue;
                        }
                        if seen.len() >= opts.cap {
                            return Err(Error::Resource(format!(
                                "basis for {n} atoms ({n_s} s, {n_d} d) exceeds the cap of {} configurations",
                                opts.cap
                            )));
                        }
                        seen.insert(next.clone(), ());
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    let mut list: Vec<Vec<u8>> = seen.into_keys().collect();
    list.sort_unstable();
    let index: HashMap<Vec<u8>, usize> = list.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let initial = index[&start];
    Ok(Basis {
        n_sites: n,
        configs: list.concat(),
        index,
        initial,
    })
}
