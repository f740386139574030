//! Rydberg-Ritz quantum defects and the level energies derived from them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomic::state::RydbergState;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::units::GHZ_PER_WAVENUMBER;

/// Bundled rubidium-85 table.
pub const RB85_DEFECTS: &str = include_str!("../../data/rb85_quantum_defects.txt");

/// Rydberg-Ritz coefficients of one `(L, j)` series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectSeries {
    pub delta0: f64,
    pub delta2: f64,
}

/// Quantum defects keyed by `(L, 2j)` plus the mass-corrected Rydberg constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumDefectTable {
    rydberg_ghz: f64,
    series: BTreeMap<(u32, u32), DefectSeries>,
}

impl QuantumDefectTable {
    pub fn new(rydberg_ghz: f64, series: BTreeMap<(u32, u32), DefectSeries>) -> Result<Self> {
        if !(rydberg_ghz > 0.0) {
            return Err(Error::Config(format!(
                "Rydberg constant must be positive, got {rydberg_ghz}"
            )));
        }
        let table = QuantumDefectTable { rydberg_ghz, series };
        table.check_ordering()?;
        Ok(table)
    }

    /// The bundled rubidium-85 table.
    pub fn rubidium85() -> Self {
        Self::parse(RB85_DEFECTS).expect("bundled defect table is valid")
    }

    /// Zero defects for every `(L, j)` with `L <= max_l`: the hydrogen atom
    /// in the infinite-mass approximation, so energies are −Ry/n² with Ry in GHz.
    pub fn hydrogenic(max_l: u32, rydberg_ghz: f64) -> Self {
        let mut series = BTreeMap::new();
        for l in 0..=max_l {
            for jd in [2 * l as i32 - 1, 2 * l as i32 + 1] {
                if jd > 0 {
                    series.insert((l, jd as u32), DefectSeries { delta0: 0.0, delta2: 0.0 });
                }
            }
        }
        QuantumDefectTable { rydberg_ghz, series }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses the plain-text table format: `rydberg <value> cm-1|GHz` once,
    /// then one `L 2j d0 d2 comment...` row per series. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rydberg = None;
        let mut series = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| Error::Parse { line: line_no, message };
            if fields[0] == "rydberg" {
                if fields.len() != 3 {
                    return Err(err("expected `rydberg <value> <cm-1|GHz>`".into()));
                }
                if rydberg.is_some() {
                    return Err(err("duplicate rydberg row".into()));
                }
                let value: f64 = fields[1]
                    .parse()
                    .map_err(|_| err(format!("bad Rydberg constant `{}`", fields[1])))?;
                let ghz = match fields[2] {
                    "cm-1" => value * GHZ_PER_WAVENUMBER,
                    "GHz" => value,
                    other => return Err(err(format!("unknown unit `{other}` for Rydberg constant"))),
                };
                rydberg = Some(ghz);
                continue;
            }
            if fields.len() < 4 {
                return Err(err(format!("expected `L 2j d0 d2 [comment]`, got `{line}`")));
            }
            let l: u32 = fields[0]
                .parse()
                .map_err(|_| err(format!("unknown row `{line}`")))?;
            let jd: u32 = fields[1]
                .parse()
                .map_err(|_| err(format!("bad 2j field `{}`", fields[1])))?;
            if jd % 2 != 1 || (jd as i64 - 2 * l as i64).abs() != 1 {
                return Err(err(format!("2j = {jd} is not allowed for L = {l}")));
            }
            let delta0: f64 = fields[2]
                .parse()
                .map_err(|_| err(format!("bad d0 `{}`", fields[2])))?;
            let delta2: f64 = fields[3]
                .parse()
                .map_err(|_| err(format!("bad d2 `{}`", fields[3])))?;
            if !delta0.is_finite() || !delta2.is_finite() || delta0 < 0.0 {
                return Err(err("defects must be finite and d0 non-negative".into()));
            }
            if series.insert((l, jd), DefectSeries { delta0, delta2 }).is_some() {
                return Err(err(format!("duplicate series L = {l}, 2j = {jd}")));
            }
        }
        let rydberg = rydberg.ok_or_else(|| Error::Config("defect table has no rydberg row".into()))?;
        Self::new(rydberg, series)
    }

    fn check_ordering(&self) -> Result<()> {
        let mut previous: Option<(u32, f64)> = None;
        let mut by_l: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for (&(l, _), s) in &self.series {
            let entry = by_l.entry(l).or_insert((f64::INFINITY, f64::NEG_INFINITY));
            entry.0 = entry.0.min(s.delta0);
            entry.1 = entry.1.max(s.delta0);
        }
        for (&l, &(min, max)) in &by_l {
            if let Some((pl, pmin)) = previous {
                if max > pmin {
                    return Err(Error::Config(format!(
                        "quantum defects must not increase with L (L={pl} min {pmin}, L={l} max {max})"
                    )));
                }
            }
            previous = Some((l, min));
        }
        Ok(())
    }

    pub fn rydberg_ghz(&self) -> f64 {
        self.rydberg_ghz
    }

    pub fn series(&self, l: u32, j_doubled: u32) -> Result<DefectSeries> {
        self.series
            .get(&(l, j_doubled))
            .copied()
            .ok_or(Error::MissingDefect { l, j_doubled })
    }

    pub fn contains(&self, l: u32, j_doubled: u32) -> bool {
        self.series.contains_key(&(l, j_doubled))
    }

    /// Rydberg-Ritz effective quantum number n* = n − δ₀ − δ₂/(n − δ₀)².
    pub fn effective_n(&self, state: &RydbergState) -> Result<f64> {
        let (l, jd) = state.series();
        let s = self.series(l, jd)?;
        let n = f64::from(state.n);
        let shifted = n - s.delta0;
        let n_star = shifted - s.delta2 / (shifted * shifted);
        if !(n_star > 0.0) {
            return Err(Error::InvalidState(format!(
                "{state}: effective quantum number {n_star} is not positive"
            )));
        }
        Ok(n_star)
    }
}

/// Energy of `state` in GHz below the ionization limit, −Ry/n*².
pub fn energy_level<T: Scalar>(state: &RydbergState, defects: &QuantumDefectTable) -> Result<T> {
    let n_star = T::lit(defects.effective_n(state)?);
    Ok(-T::lit(defects.rydberg_ghz) / (n_star * n_star))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_parses() {
        let table = QuantumDefectTable::rubidium85();
        assert!(table.contains(0, 1));
        assert!(table.contains(2, 3));
        assert!(table.rydberg_ghz() > 3.28e6 && table.rydberg_ghz() < 3.30e6);
    }

    #[test]
    fn hydrogenic_energy_is_exact() {
        let h = QuantumDefectTable::hydrogenic(3, 3_289_841.96);
        let s = RydbergState::hydrogen(50, 0, 1, 1).unwrap();
        let e: f64 = energy_level(&s, &h).unwrap();
        assert_eq!(e, -3_289_841.96 / 2500.0);
    }

    #[test]
    fn levels_increase_with_n() {
        let t = QuantumDefectTable::rubidium85();
        let e49: f64 = energy_level(&RydbergState::rb(49, 0, 1, 1).unwrap(), &t).unwrap();
        let e50: f64 = energy_level(&RydbergState::rb(50, 0, 1, 1).unwrap(), &t).unwrap();
        assert!(e49 < e50 && e50 < 0.0);
    }

    #[test]
    fn missing_series_names_it() {
        let t = QuantumDefectTable::rubidium85();
        let g = RydbergState::rb(49, 4, 9, 1).unwrap();
        let err = energy_level::<f64>(&g, &t).unwrap_err();
        assert!(err.to_string().contains("L=4"), "{err}");
    }

    #[test]
    fn strict_parser_rejects_unknown_rows() {
        let bad = "rydberg 1 GHz\nfoo 1 2 3\n";
        assert!(matches!(QuantumDefectTable::parse(bad), Err(Error::Parse { line: 2, .. })));
        let bad_j = "rydberg 1 GHz\n1 5 2.0 0.0\n";
        assert!(QuantumDefectTable::parse(bad_j).is_err());
        let dup = "rydberg 1 GHz\n0 1 3.0 0\n0 1 3.0 0\n";
        assert!(QuantumDefectTable::parse(dup).is_err());
        let no_ry = "0 1 3.0 0\n";
        assert!(QuantumDefectTable::parse(no_ry).is_err());
        let unordered = "rydberg 1 GHz\n0 1 1.0 0\n1 1 2.0 0\n";
        assert!(QuantumDefectTable::parse(unordered).is_err());
    }
}
