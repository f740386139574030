//! Wigner 3j and 6j symbols evaluated exactly.
//!
//! Racah's factorial sums are carried out in arbitrary-precision rationals, so
//! each symbol is produced as `sign · √(p/q)` with `p/q` exact. Conversion to
//! floating point happens once, at the very end.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::atomic::state::HalfInt;
use crate::scalar::Scalar;

const FACTORIAL_TABLE: usize = 256;

fn factorial(n: i64) -> BigInt {
    static TABLE: OnceLock<Vec<BigInt>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut v = Vec::with_capacity(FACTORIAL_TABLE);
        v.push(BigInt::one());
        for k in 1..FACTORIAL_TABLE {
            let next = &v[k - 1] * BigInt::from(k);
            v.push(next);
        }
        v
    });
    debug_assert!(n >= 0);
    let n = n as usize;
    if n < FACTORIAL_TABLE {
        table[n].clone()
    } else {
        (FACTORIAL_TABLE..=n).fold(table[FACTORIAL_TABLE - 1].clone(), |acc, k| acc * BigInt::from(k))
    }
}

/// `sign · √square` with an exact rational `square`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalRoot {
    negative: bool,
    square: BigRational,
}

impl RationalRoot {
    pub fn zero() -> Self {
        RationalRoot {
            negative: false,
            square: BigRational::zero(),
        }
    }

    fn from_sum_and_prefactor(sum: BigRational, prefactor_sq: BigRational) -> Self {
        if sum.is_zero() || prefactor_sq.is_zero() {
            return Self::zero();
        }
        RationalRoot {
            negative: sum.is_negative(),
            square: &sum * &sum * prefactor_sq,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.square.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    /// The exact square of the value.
    pub fn square(&self) -> &BigRational {
        &self.square
    }

    pub fn to_f64(&self) -> f64 {
        let magnitude = self.square.to_f64().unwrap_or(f64::NAN).sqrt();
        if self.negative {
            -magnitude
        } else {
            magnitude
        }
    }

    pub fn to_scalar<T: Scalar>(&self) -> T {
        T::lit(self.to_f64())
    }
}

fn ratio(numer: BigInt, denom: BigInt) -> BigRational {
    BigRational::new(numer, denom)
}

/// Doubled-value triangle condition, including integrality of j1+j2+j3.
fn triangle(a: i32, b: i32, c: i32) -> bool {
    a >= 0 && b >= 0 && c >= 0 && c >= (a - b).abs() && c <= a + b && (a + b + c) % 2 == 0
}

/// Δ(abc)² = (a+b−c)!(a−b+c)!(−a+b+c)!/(a+b+c+1)! for doubled arguments.
fn triangle_coefficient(a: i32, b: i32, c: i32) -> BigRational {
    let f = |x: i32| factorial(i64::from(x / 2));
    ratio(
        f(a + b - c) * f(a - b + c) * f(-a + b + c),
        factorial(i64::from((a + b + c) / 2 + 1)),
    )
}

fn projection_ok(j: i32, m: i32) -> bool {
    m.abs() <= j && (j - m) % 2 == 0
}

/// Exact Wigner 3j symbol (j1 j2 j3; m1 m2 m3). Selection-rule violations give zero.
pub fn wigner_3j_exact(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> RationalRoot {
    let (j1, j2, j3) = (j1.doubled(), j2.doubled(), j3.doubled());
    let (m1, m2, m3) = (m1.doubled(), m2.doubled(), m3.doubled());
    if m1 + m2 + m3 != 0
        || !triangle(j1, j2, j3)
        || !projection_ok(j1, m1)
        || !projection_ok(j2, m2)
        || !projection_ok(j3, m3)
    {
        return RationalRoot::zero();
    }
    // all of these are integers once halved
    let h = |x: i32| i64::from(x / 2);
    let k_min = 0.max(h(j2 - j3 - m1)).max(h(j1 - j3 + m2));
    let k_max = h(j1 + j2 - j3).min(h(j1 - m1)).min(h(j2 + m2));
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(h(j3 - j2 + m1) + k)
            * factorial(h(j3 - j1 - m2) + k)
            * factorial(h(j1 + j2 - j3) - k)
            * factorial(h(j1 - m1) - k)
            * factorial(h(j2 + m2) - k);
        let term = ratio(BigInt::one(), denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if h(j1 - j2 - m3).rem_euclid(2) == 1 {
        sum = -sum;
    }
    let prefactor = triangle_coefficient(j1, j2, j3)
        * BigRational::from_integer(
            factorial(h(j1 + m1))
                * factorial(h(j1 - m1))
                * factorial(h(j2 + m2))
                * factorial(h(j2 - m2))
                * factorial(h(j3 + m3))
                * factorial(h(j3 - m3)),
        );
    RationalRoot::from_sum_and_prefactor(sum, prefactor)
}

/// Exact Wigner 6j symbol {j1 j2 j3; j4 j5 j6}. Triangle violations give zero.
pub fn wigner_6j_exact(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    j4: HalfInt,
    j5: HalfInt,
    j6: HalfInt,
) -> RationalRoot {
    let (j1, j2, j3) = (j1.doubled(), j2.doubled(), j3.doubled());
    let (j4, j5, j6) = (j4.doubled(), j5.doubled(), j6.doubled());
    let triads = [(j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3)];
    if !triads.iter().all(|&(a, b, c)| triangle(a, b, c)) {
        return RationalRoot::zero();
    }
    let a = triads.map(|(x, y, z)| i64::from((x + y + z) / 2));
    let b = [
        i64::from((j1 + j2 + j4 + j5) / 2),
        i64::from((j2 + j3 + j5 + j6) / 2),
        i64::from((j3 + j1 + j6 + j4) / 2),
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();
    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let denom = a.iter().map(|&ai| factorial(t - ai)).product::<BigInt>()
            * b.iter().map(|&bi| factorial(bi - t)).product::<BigInt>();
        let term = ratio(factorial(t + 1), denom);
        if t % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    let prefactor = triads
        .iter()
        .map(|&(x, y, z)| triangle_coefficient(x, y, z))
        .fold(BigRational::one(), |acc, d| acc * d);
    RationalRoot::from_sum_and_prefactor(sum, prefactor)
}

pub fn wigner_3j<T: Scalar>(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> T {
    wigner_3j_exact(j1, j2, j3, m1, m2, m3).to_scalar()
}

pub fn wigner_6j<T: Scalar>(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    j4: HalfInt,
    j5: HalfInt,
    j6: HalfInt,
) -> T {
    wigner_6j_exact(j1, j2, j3, j4, j5, j6).to_scalar()
}
