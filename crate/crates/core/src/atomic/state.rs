use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A half-integer stored as its doubled value, so `j = 3/2` is `HalfInt(3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const fn from_doubled(doubled: i32) -> Self {
        HalfInt(doubled)
    }

    pub const fn from_int(value: i32) -> Self {
        HalfInt(2 * value)
    }

    pub const fn doubled(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub const fn abs(self) -> Self {
        HalfInt(self.0.abs())
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Species {
    Rubidium85,
    Hydrogen,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Species::Rubidium85 => write!(f, "85Rb"),
            Species::Hydrogen => write!(f, "H"),
        }
    }
}

/// A single fine-structure sublevel |n L j mj⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RydbergState {
    pub n: u32,
    pub l: u32,
    pub j: HalfInt,
    pub mj: HalfInt,
    pub species: Species,
}

const ORBITAL_LETTERS: [char; 7] = ['s', 'p', 'd', 'f', 'g', 'h', 'i'];

impl RydbergState {
    pub fn new(n: u32, l: u32, j: HalfInt, mj: HalfInt, species: Species) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidState(format!("n = {n} must be at least 1")));
        }
        if l >= n {
            return Err(Error::InvalidState(format!("L = {l} must be below n = {n}")));
        }
        let (jd, ld) = (j.doubled(), 2 * l as i32);
        if jd < 0 || jd % 2 != 1 || jd < (ld - 1).abs() || jd > ld + 1 {
            return Err(Error::InvalidState(format!(
                "j = {j} not allowed for L = {l} and s = 1/2"
            )));
        }
        if (mj.doubled() - jd) % 2 != 0 || mj.doubled().abs() > jd {
            return Err(Error::InvalidState(format!("mj = {mj} not allowed for j = {j}")));
        }
        Ok(RydbergState { n, l, j, mj, species })
    }

    /// Rubidium-85 state with `j` and `mj` given as doubled values.
    pub fn rb(n: u32, l: u32, j_doubled: i32, mj_doubled: i32) -> Result<Self> {
        Self::new(
            n,
            l,
            HalfInt::from_doubled(j_doubled),
            HalfInt::from_doubled(mj_doubled),
            Species::Rubidium85,
        )
    }

    pub fn hydrogen(n: u32, l: u32, j_doubled: i32, mj_doubled: i32) -> Result<Self> {
        Self::new(
            n,
            l,
            HalfInt::from_doubled(j_doubled),
            HalfInt::from_doubled(mj_doubled),
            Species::Hydrogen,
        )
    }

    /// Same level with a different magnetic sublevel.
    pub fn with_mj(self, mj: HalfInt) -> Result<Self> {
        Self::new(self.n, self.l, self.j, mj, self.species)
    }

    /// Key of the quantum-defect series, `(L, 2j)`.
    pub fn series(&self) -> (u32, u32) {
        (self.l, self.j.doubled() as u32)
    }

    /// True when the two states share n, L and j (differ at most in mj).
    pub fn same_level(&self, other: &RydbergState) -> bool {
        self.n == other.n && self.l == other.l && self.j == other.j && self.species == other.species
    }
}

impl fmt::Display for RydbergState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letter = ORBITAL_LETTERS.get(self.l as usize).copied().unwrap_or('?');
        write!(f, "{}{}_{} (mj={})", self.n, letter, self.j, self.mj)
    }
}
