//! Exact angular-momentum coupling coefficients.
//!
//! Complex-basis Clebsch-Gordan coefficients follow the Condon-Shortley
//! convention and are evaluated from the Racah sum in big-integer arithmetic;
//! the only floating-point step is the final square root. The real basis used
//! by feature vectors is built in [`real`].

mod exact;
pub mod real;

use std::f64::consts::PI;
use std::fmt;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use exact::{factorial_product, factorial_ref, ratio_to_f64};

pub use real::{cg_complex_block, cg_real, cg_real_unphased, real_basis_rotation, CgBasis, CgEntry, CgTable, CgTensor};

/// Three angular momenta `(l1, l2, l3)` labelling a coupling path `(l1, l2) -> l3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub l1: u32,
    pub l2: u32,
    pub l3: u32,
}

impl Triplet {
    pub const fn new(l1: u32, l2: u32, l3: u32) -> Self {
        Triplet { l1, l2, l3 }
    }

    /// Builds a triplet from signed input, rejecting negative values.
    pub fn from_signed(l1: i64, l2: i64, l3: i64) -> Result<Self> {
        if l1 < 0 || l2 < 0 || l3 < 0 {
            return Err(Error::NegativeAngularMomentum(l1, l2, l3));
        }
        Ok(Triplet::new(l1 as u32, l2 as u32, l3 as u32))
    }

    /// Triangular condition `|l1 - l2| <= l3 <= l1 + l2`.
    pub fn admissible(&self) -> bool {
        self.l1.abs_diff(self.l2) <= self.l3 && self.l3 <= self.l1 + self.l2
    }

    pub fn require_admissible(self) -> Result<Self> {
        if self.admissible() {
            Ok(self)
        } else {
            Err(Error::InadmissibleTriplet(self))
        }
    }

    /// `(l1 + l2 + l3) mod 2`.
    pub fn parity(&self) -> u32 {
        (self.l1 + self.l2 + self.l3) % 2
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.parity() == 1
    }

    pub fn sum(&self) -> u32 {
        self.l1 + self.l2 + self.l3
    }

    pub fn max_l(&self) -> u32 {
        self.l1.max(self.l2).max(self.l3)
    }

    pub fn swapped(&self) -> Self {
        Triplet::new(self.l2, self.l1, self.l3)
    }

    /// All admissible triplets with every entry `<= lmax`, in lexicographic order.
    pub fn enumerate(lmax: u32) -> impl Iterator<Item = Triplet> {
        (0..=lmax).flat_map(move |l1| {
            (0..=lmax)
                .flat_map(move |l2| (l1.abs_diff(l2)..=(l1 + l2).min(lmax)).map(move |l3| Triplet::new(l1, l2, l3)))
        })
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.l1, self.l2, self.l3)
    }
}

/// `(-1)^n` for a signed exponent.
pub(crate) fn sign_pow(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Exact value of a signed square root `sign * sqrt(num / den)`.
struct SignedSqrt {
    negative: bool,
    num: BigUint,
    den: BigUint,
}

impl SignedSqrt {
    fn zero() -> Self {
        SignedSqrt {
            negative: false,
            num: BigUint::zero(),
            den: BigUint::one(),
        }
    }

    fn to_f64(&self) -> f64 {
        let magnitude = ratio_to_f64(&self.num, &self.den).sqrt();
        if self.negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

/// Complex-basis Clebsch-Gordan coefficient `C^{l3 m3}_{l1 m1, l2 m2}`.
///
/// Returns 0 whenever a selection rule fails, including `|m| > l`.
pub fn cg_complex(l1: u32, m1: i32, l2: u32, m2: i32, l3: u32, m3: i32) -> f64 {
    cg_exact(l1, m1, l2, m2, l3, m3).to_f64()
}

fn cg_exact(l1: u32, m1: i32, l2: u32, m2: i32, l3: u32, m3: i32) -> SignedSqrt {
    let (l1, l2, l3) = (l1 as i64, l2 as i64, l3 as i64);
    let (m1, m2, m3) = (m1 as i64, m2 as i64, m3 as i64);
    if m1.abs() > l1 || m2.abs() > l2 || m3.abs() > l3 || m1 + m2 != m3 {
        return SignedSqrt::zero();
    }
    if (l1 - l2).abs() > l3 || l3 > l1 + l2 {
        return SignedSqrt::zero();
    }

    // Racah sum: sum_k (-1)^k / [k! (a-k)! (b-k)! (c-k)! (d+k)! (e+k)!]
    let a = l1 + l2 - l3;
    let b = l1 - m1;
    let c = l2 + m2;
    let d = l3 - l2 + m1;
    let e = l3 - l1 - m2;
    let kmin = 0.max(-d).max(-e);
    let kmax = a.min(b).min(c);
    if kmin > kmax {
        return SignedSqrt::zero();
    }

    // Scale every term by P = a! b! c! (d+kmax)! (e+kmax)! so the sum is an integer:
    // term_k * P = binom(a,k) * b!/(b-k)! * c!/(c-k)! * (d+kmax)!/(d+k)! * (e+kmax)!/(e+k)!
    let scale = factorial_product(&[a as u64, b as u64, c as u64, (d + kmax) as u64, (e + kmax) as u64]);
    let mut term = {
        let den = factorial_product(&[
            kmin as u64,
            (a - kmin) as u64,
            (b - kmin) as u64,
            (c - kmin) as u64,
            (d + kmin) as u64,
            (e + kmin) as u64,
        ]);
        &scale / den
    };
    let mut positive = BigUint::zero();
    let mut negative = BigUint::zero();
    for k in kmin..=kmax {
        if k % 2 == 0 {
            positive += &term;
        } else {
            negative += &term;
        }
        if k < kmax {
            let up = ((a - k) * (b - k) * (c - k)) as u64;
            let down = ((k + 1) * (d + k + 1) * (e + k + 1)) as u64;
            term *= up;
            term /= down;
        }
    }
    let (sum_negative, sum) = if positive >= negative {
        (false, positive - negative)
    } else {
        (true, negative - positive)
    };
    if sum.is_zero() {
        return SignedSqrt::zero();
    }

    let mut num = BigUint::from((2 * l3 + 1) as u64);
    num *= factorial_product(&[
        (l3 + l1 - l2) as u64,
        (l3 - l1 + l2) as u64,
        (l1 + l2 - l3) as u64,
        (l3 + m3) as u64,
        (l3 - m3) as u64,
        (l1 - m1) as u64,
        (l1 + m1) as u64,
        (l2 - m2) as u64,
        (l2 + m2) as u64,
    ]);
    num *= &sum;
    num *= &sum;
    let mut den = factorial_ref((l1 + l2 + l3 + 1) as u64).into_owned();
    den *= &scale;
    den *= &scale;
    SignedSqrt {
        negative: sum_negative,
        num,
        den,
    }
}

/// Closed form for `C^{l3 0}_{l1 0, l2 0}`; zero for odd `l1 + l2 + l3` or inadmissible input.
pub fn cg_m0_closed_form(l1: u32, l2: u32, l3: u32) -> f64 {
    if !Triplet::new(l1, l2, l3).admissible() || (l1 + l2 + l3) % 2 == 1 {
        return 0.0;
    }
    let g = ((l1 + l2 + l3) / 2) as u64;
    let (l1, l2, l3) = (l1 as u64, l2 as u64, l3 as u64);
    let gf = factorial_ref(g);
    let mut num = BigUint::from(2 * l3 + 1);
    num *= gf.as_ref();
    num *= gf.as_ref();
    num *= factorial_product(&[2 * g - 2 * l1, 2 * g - 2 * l2, 2 * g - 2 * l3]);
    let low = factorial_product(&[g - l1, g - l2, g - l3]);
    let mut den = &low * &low;
    den *= factorial_ref(2 * g + 1).as_ref();
    SignedSqrt {
        negative: (g - l3) % 2 == 1,
        num,
        den,
    }
    .to_f64()
}

/// Which of the two nine-j shapes `{a a 1; b b 1; c c-1 1}` / `{a a 1; b b 1; c c+1 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NineJDelta {
    CMinus1,
    CPlus1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Wigner9jShape {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub delta: NineJDelta,
}

impl Wigner9jShape {
    pub fn new(a: u32, b: u32, c: u32, delta: NineJDelta) -> Self {
        Wigner9jShape { a, b, c, delta }
    }

    /// The nine arguments, row-major.
    pub fn arguments(&self) -> [u32; 9] {
        let c2 = match self.delta {
            NineJDelta::CMinus1 => self.c.wrapping_sub(1),
            NineJDelta::CPlus1 => self.c + 1,
        };
        [self.a, self.a, 1, self.b, self.b, 1, self.c, c2, 1]
    }
}

/// Closed-form value of the two nine-j shapes needed for the antisymmetric coupling.
pub fn wigner9j_special(shape: Wigner9jShape) -> Result<f64> {
    let (a, b, c) = (shape.a as i64, shape.b as i64, shape.c as i64);
    if a < 1 || b < 1 {
        return Err(Error::Domain(format!("nine-j shape needs a, b >= 1, got {shape:?}")));
    }
    if shape.delta == NineJDelta::CMinus1 && c < 1 {
        return Err(Error::Domain(format!("nine-j shape c-1 needs c >= 1, got {shape:?}")));
    }
    let (prefactor, linear, num_facts, den_facts) = match shape.delta {
        NineJDelta::CPlus1 => (
            2.0 * (c + 1) as f64,
            [a + b + c + 2, a + b - c, a - b + c + 1, -a + b + c + 1],
            [2 * a - 1, 2 * b - 1, 2 * c],
            [2 * a + 2, 2 * b + 2, 2 * c + 3],
        ),
        NineJDelta::CMinus1 => (
            2.0 * c as f64,
            [a + b + c + 1, a + b - c + 1, a - b + c, -a + b + c],
            [2 * a - 1, 2 * b - 1, 2 * c - 2],
            [2 * a + 2, 2 * b + 2, 2 * c + 1],
        ),
    };
    // A non-positive linear factor means the (a, b, c) column breaks the
    // triangle rule, where the symbol vanishes.
    if linear.iter().any(|&x| x <= 0) {
        return Ok(0.0);
    }
    let mut num = BigUint::one();
    for x in linear {
        num *= x as u64;
    }
    num *= factorial_product(&num_facts.map(|x| x as u64));
    let mut den = factorial_product(&den_facts.map(|x| x as u64));
    den *= 3u64;
    Ok(prefactor * ratio_to_f64(&num, &den).sqrt())
}

/// `Lambda_{l1 l2 l3}`: the complex-basis antisymmetric coupling constant.
///
/// Purely imaginary; zero for even parity.
pub fn lambda_closed_form(t: Triplet) -> Result<Complex64> {
    let t = t.require_admissible()?;
    if !t.is_antisymmetric() || t.l1 == 0 || t.l2 == 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (l1, l2, l3) = (t.l1 as f64, t.l2 as f64, t.l3 as f64);
    let prefactor = (3.0 / (2.0 * PI) * l1 * l2 * (l1 + 1.0) * (l2 + 1.0) / (2.0 * l3 + 1.0)).sqrt()
        * (2.0 * l1 + 1.0)
        * (2.0 * l2 + 1.0);
    let lower = if t.l3 >= 1 {
        l3.sqrt()
            * cg_m0_closed_form(t.l1, t.l2, t.l3 - 1)
            * wigner9j_special(Wigner9jShape::new(t.l1, t.l2, t.l3, NineJDelta::CMinus1))?
    } else {
        0.0
    };
    let upper = (l3 + 1.0).sqrt()
        * cg_m0_closed_form(t.l1, t.l2, t.l3 + 1)
        * wigner9j_special(Wigner9jShape::new(t.l1, t.l2, t.l3, NineJDelta::CPlus1))?;
    Ok(Complex64::new(0.0, -prefactor * (lower - upper)))
}

/// Antisymmetric real-basis coupling scalar `V~`, from `Im(Lambda)` and the basis-change phase.
pub fn vtilde_closed_form(t: Triplet) -> Result<f64> {
    let t = t.require_admissible()?;
    if !t.is_antisymmetric() {
        return Ok(0.0);
    }
    let lambda = lambda_closed_form(t)?;
    let exponent = (t.sum() as i64 - 1) / 2 + t.l3 as i64;
    Ok(sign_pow(exponent) * lambda.im)
}

/// Symmetric real-basis coupling scalar `G~` from the `m = 0` Gaunt relation.
pub fn gtilde_closed_form(t: Triplet) -> Result<f64> {
    let t = t.require_admissible()?;
    if t.is_antisymmetric() {
        return Ok(0.0);
    }
    let (l1, l2, l3) = (t.l1 as f64, t.l2 as f64, t.l3 as f64);
    let norm = ((2.0 * l1 + 1.0) * (2.0 * l2 + 1.0) / (4.0 * PI * (2.0 * l3 + 1.0))).sqrt();
    // The real e3nn block carries an extra i^{l1+l2-l3} relative to the rotated complex block.
    let phase = sign_pow((t.l1 as i64 + t.l2 as i64 - t.l3 as i64) / 2);
    Ok(phase * norm * cg_m0_closed_form(t.l1, t.l2, t.l3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn triplet_basics() {
        assert!(Triplet::new(1, 1, 2).admissible());
        assert!(!Triplet::new(1, 1, 3).admissible());
        assert!(!Triplet::new(3, 1, 1).admissible());
        assert_eq!(Triplet::new(1, 1, 1).parity(), 1);
        assert!(Triplet::from_signed(-1, 0, 1).is_err());
        let all: Vec<_> = Triplet::enumerate(1).collect();
        assert_eq!(all.len(), 5);
        assert_eq!(all[0], Triplet::new(0, 0, 0));
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cg_known_values() {
        assert_eq!(cg_complex(0, 0, 0, 0, 0, 0), 1.0);
        assert_eq!(cg_complex(1, 0, 1, 0, 1, 0), 0.0);
        assert_relative_eq!(
            cg_complex(1, 0, 1, 0, 0, 0),
            -(1.0f64 / 3.0).sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            cg_complex(1, 1, 1, -1, 0, 0),
            (1.0f64 / 3.0).sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(cg_complex(1, 1, 1, 0, 1, 1), (0.5f64).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(cg_complex(1, 1, 1, 1, 2, 2), 1.0, max_relative = 1e-15);
        // |m| > l and m-sum violations vanish
        assert_eq!(cg_complex(1, 2, 1, 0, 2, 2), 0.0);
        assert_eq!(cg_complex(1, 1, 1, 0, 2, 0), 0.0);
    }

    #[test]
    fn m0_closed_form_values() {
        assert_eq!(cg_m0_closed_form(1, 1, 1), 0.0);
        assert_eq!(cg_m0_closed_form(0, 0, 0), 1.0);
        assert_relative_eq!(
            cg_m0_closed_form(1, 1, 2),
            cg_complex(1, 0, 1, 0, 2, 0),
            max_relative = 1e-15
        );
        for t in Triplet::enumerate(9) {
            let racah = cg_complex(t.l1, 0, t.l2, 0, t.l3, 0);
            let closed = cg_m0_closed_form(t.l1, t.l2, t.l3);
            assert!((racah - closed).abs() < 1e-14, "{t}: {racah} vs {closed}");
        }
    }

    #[test]
    fn nine_j_domain() {
        assert!(wigner9j_special(Wigner9jShape::new(0, 1, 1, NineJDelta::CPlus1)).is_err());
        assert!(wigner9j_special(Wigner9jShape::new(1, 1, 0, NineJDelta::CMinus1)).is_err());
        assert_eq!(
            wigner9j_special(Wigner9jShape::new(1, 1, 3, NineJDelta::CPlus1)).unwrap(),
            0.0
        );
    }

    #[test]
    fn lambda_parity() {
        assert_eq!(
            lambda_closed_form(Triplet::new(1, 1, 2)).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let l = lambda_closed_form(Triplet::new(1, 1, 1)).unwrap();
        assert_eq!(l.re, 0.0);
        assert!(l.im.abs() > 1e-3);
        for l2 in 0..6 {
            assert_eq!(lambda_closed_form(Triplet::new(0, l2, l2)).unwrap().im, 0.0);
        }
        assert!(lambda_closed_form(Triplet::new(1, 1, 3)).is_err());
    }

    #[test]
    fn vtilde_masks() {
        assert_eq!(vtilde_closed_form(Triplet::new(1, 1, 2)).unwrap(), 0.0);
        assert!(vtilde_closed_form(Triplet::new(1, 1, 1)).unwrap().abs() > 1e-3);
        assert!(vtilde_closed_form(Triplet::new(2, 2, 1)).unwrap().abs() > 1e-3);
        assert_eq!(gtilde_closed_form(Triplet::new(1, 1, 1)).unwrap(), 0.0);
        assert_relative_eq!(
            gtilde_closed_form(Triplet::new(0, 0, 0)).unwrap(),
            1.0 / (4.0 * PI).sqrt(),
            max_relative = 1e-15
        );
    }
}
