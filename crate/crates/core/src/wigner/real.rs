//! Real-basis Clebsch-Gordan blocks.
//!
//! Real harmonics are `Y_{lm} = sum_{m'} W_{m m'} Y^l_{m'}` with, for `m > 0`,
//!
//! ```text
//! Y_{l m}  = (-1)^m / sqrt2 * (Y^l_m + (-1)^m Y^l_{-m})
//! Y_{l -m} = 1 / (sqrt2 i)  * (Y^l_m - (-1)^m Y^l_{-m})
//! Y_{l 0}  = Y^l_0
//! ```
//!
//! The rotated block `W1 W2 C W3^dagger` is real for even `l1 + l2 - l3` and
//! imaginary for odd; multiplying by `i^{l1 + l2 - l3}` gives the real e3nn-style
//! block stored in [`CgTensor`]. Indices run `m = -l..=l` everywhere.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

use super::{cg_complex, Triplet};
use crate::error::{Error, Result};

/// Imaginary residual allowed before a rotated block is rejected as non-real.
const REAL_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CgBasis {
    ComplexCondonShortley,
    RealE3nn,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgEntry {
    pub m1: i16,
    pub m2: i16,
    pub m3: i16,
    pub value: f64,
}

/// Sparse block of coefficients for one triplet; only nonzero entries are stored.
#[derive(Clone, Debug)]
pub struct CgTensor {
    pub triplet: Triplet,
    pub basis: CgBasis,
    entries: Vec<CgEntry>,
}

impl CgTensor {
    pub fn entries(&self) -> &[CgEntry] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, m1: i32, m2: i32, m3: i32) -> f64 {
        self.entries
            .iter()
            .find(|e| e.m1 as i32 == m1 && e.m2 as i32 == m2 && e.m3 as i32 == m3)
            .map_or(0.0, |e| e.value)
    }

    /// Dense copy indexed `[(m1 + l1) * d2 * d3 + (m2 + l2) * d3 + (m3 + l3)]`.
    pub fn to_dense(&self) -> Vec<f64> {
        let Triplet { l1, l2, l3 } = self.triplet;
        let (d2, d3) = ((2 * l2 + 1) as usize, (2 * l3 + 1) as usize);
        let mut out = vec![0.0; (2 * l1 + 1) as usize * d2 * d3];
        for e in &self.entries {
            let i = (e.m1 as i32 + l1 as i32) as usize * d2 * d3
                + (e.m2 as i32 + l2 as i32) as usize * d3
                + (e.m3 as i32 + l3 as i32) as usize;
            out[i] = e.value;
        }
        out
    }

    /// Contracts the block with two coefficient vectors, writing `sum C h1 h2` into `out`.
    ///
    /// Only stored entries are touched.
    pub fn contract_into(&self, h1: &[f64], h2: &[f64], scale: f64, out: &mut [f64]) {
        let Triplet { l1, l2, l3 } = self.triplet;
        for e in &self.entries {
            let a = h1[(e.m1 as i32 + l1 as i32) as usize];
            let b = h2[(e.m2 as i32 + l2 as i32) as usize];
            out[(e.m3 as i32 + l3 as i32) as usize] += scale * e.value * a * b;
        }
    }
}

/// Nonzero entries of row `m` of `W^(l)` as `(m', power of i)`, all of magnitude
/// `1/sqrt2` except the `m = 0` row.
fn w_row(m: i32) -> ([(i32, u8); 2], usize) {
    use std::cmp::Ordering;
    match m.cmp(&0) {
        Ordering::Equal => ([(0, 0), (0, 0)], 1),
        Ordering::Greater => {
            let sign = if m % 2 == 0 { 0 } else { 2 };
            ([(m, sign), (-m, 0)], 2)
        }
        Ordering::Less => {
            let k = -m;
            // 1/(sqrt2 i) = -i/sqrt2 ; -(-1)^k/(sqrt2 i) = i (-1)^k / sqrt2
            let sign = if k % 2 == 0 { 1 } else { 3 };
            ([(k, 3), (-k, sign)], 2)
        }
    }
}

fn i_pow(p: u8) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Unitary complex-to-real change of basis `W^(l)`, rows and columns ordered `m = -l..=l`.
pub fn real_basis_rotation(l: u32) -> DMatrix<Complex64> {
    let d = (2 * l + 1) as usize;
    let li = l as i32;
    let mut w = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    for m in -li..=li {
        let (row, n) = w_row(m);
        let mag = if n == 1 { 1.0 } else { FRAC_1_SQRT_2 };
        for &(mp, p) in &row[..n] {
            w[((m + li) as usize, (mp + li) as usize)] = i_pow(p) * mag;
        }
    }
    w
}

/// Rotated block `sum W1 W2 C conj(W3)` without the e3nn phase, as `(m1, m2, m3, value)`.
///
/// Structural zeros are dropped.
pub fn cg_real_unphased(t: Triplet) -> Result<Vec<(i32, i32, i32, Complex64)>> {
    let t = t.require_admissible()?;
    let (l1, l2, l3) = (t.l1 as i32, t.l2 as i32, t.l3 as i32);
    let d2 = (2 * l2 + 1) as usize;
    let slot = |m1: i32, m2: i32| (m1 + l1) as usize * d2 + (m2 + l2) as usize;
    let mut complex = vec![0.0f64; (2 * l1 + 1) as usize * d2];
    let mirrored = |m1: i32, m2: i32| m1 < 0 || (m1 == 0 && m2 < 0);
    for pass in [false, true] {
        for m1 in -l1..=l1 {
            for m2 in -l2..=l2 {
                let m3 = m1 + m2;
                if m3.abs() > l3 || mirrored(m1, m2) != pass {
                    continue;
                }
                complex[slot(m1, m2)] = if pass {
                    // C(-m1,-m2,-m3) = (-1)^{l1+l2-l3} C(m1,m2,m3)
                    let v = complex[slot(-m1, -m2)];
                    if (l1 + l2 - l3) % 2 == 0 {
                        v
                    } else {
                        -v
                    }
                } else {
                    cg_complex(t.l1, m1, t.l2, m2, t.l3, m3)
                };
            }
        }
    }

    let mut out = Vec::new();
    let mut candidates = Vec::with_capacity(4);
    for m1 in -l1..=l1 {
        let (r1, n1) = w_row(m1);
        for m2 in -l2..=l2 {
            let (r2, n2) = w_row(m2);
            // Complex indices are +-|m|, so the real m3 can only be +-(|m1| +- |m2|).
            candidates.clear();
            for base in [m1.abs() + m2.abs(), (m1.abs() - m2.abs()).abs()] {
                for m3 in [base, -base] {
                    if m3.abs() <= l3 && !candidates.contains(&m3) {
                        candidates.push(m3);
                    }
                }
            }
            candidates.sort_unstable();
            for &m3 in &candidates {
                let (r3, n3) = w_row(m3);
                // Every term in the sum shares the magnitude of the W entries; only
                // the phases differ, so accumulate per power of i and scale once.
                let mut buckets = [0.0f64; 4];
                let mut largest = 0.0f64;
                for &(a, pa) in &r1[..n1] {
                    for &(b, pb) in &r2[..n2] {
                        for &(c, pc) in &r3[..n3] {
                            if a + b != c {
                                continue;
                            }
                            let v = complex[slot(a, b)];
                            if v != 0.0 {
                                // conj(i^pc) = i^{-pc}
                                let p = (pa + pb + 4 - pc) % 4;
                                buckets[p as usize] += v;
                                largest = largest.max(v.abs());
                            }
                        }
                    }
                }
                if largest == 0.0 {
                    continue;
                }
                let mag = [n1, n2, n3]
                    .iter()
                    .filter(|&&n| n == 2)
                    .fold(1.0, |acc, _| acc * FRAC_1_SQRT_2);
                let cutoff = 1e-15 * largest;
                let clean = |x: f64| if x.abs() <= cutoff { 0.0 } else { x };
                let re = clean(buckets[0] - buckets[2]);
                let im = clean(buckets[1] - buckets[3]);
                if re != 0.0 || im != 0.0 {
                    out.push((m1, m2, m3, Complex64::new(re * mag, im * mag)));
                }
            }
        }
    }
    Ok(out)
}

/// Real e3nn-convention Clebsch-Gordan block for an admissible triplet.
pub fn cg_real(t: Triplet) -> Result<CgTensor> {
    let rotated = cg_real_unphased(t)?;
    let q = (t.l1 as i64 + t.l2 as i64 - t.l3 as i64).rem_euclid(4) as u8;
    let phase = i_pow(q);
    let mut entries = Vec::with_capacity(rotated.len());
    let mut residual = 0.0f64;
    for (m1, m2, m3, v) in rotated {
        let z = v * phase;
        residual = residual.max(z.im.abs());
        if z.re != 0.0 {
            entries.push(CgEntry {
                m1: m1 as i16,
                m2: m2 as i16,
                m3: m3 as i16,
                value: z.re,
            });
        }
    }
    if residual > REAL_TOLERANCE {
        return Err(Error::NonRealResult { triplet: t, residual });
    }
    entries.shrink_to_fit();
    entries.sort_by_key(|e| (e.m3, e.m1, e.m2));
    Ok(CgTensor {
        triplet: t,
        basis: CgBasis::RealE3nn,
        entries,
    })
}

/// Complex Condon-Shortley block with the same sparse layout.
pub fn cg_complex_block(t: Triplet) -> Result<CgTensor> {
    let t = t.require_admissible()?;
    let (l1, l2, l3) = (t.l1 as i32, t.l2 as i32, t.l3 as i32);
    let mut entries = Vec::new();
    for m1 in -l1..=l1 {
        for m2 in -l2..=l2 {
            let m3 = m1 + m2;
            if m3.abs() <= l3 {
                let value = cg_complex(t.l1, m1, t.l2, m2, t.l3, m3);
                if value != 0.0 {
                    entries.push(CgEntry {
                        m1: m1 as i16,
                        m2: m2 as i16,
                        m3: m3 as i16,
                        value,
                    });
                }
            }
        }
    }
    Ok(CgTensor {
        triplet: t,
        basis: CgBasis::ComplexCondonShortley,
        entries,
    })
}

/// Real CG blocks for every admissible triplet within the given bounds.
#[derive(Clone, Debug)]
pub struct CgTable {
    pub lmax_in1: u32,
    pub lmax_in2: u32,
    pub lmax_out: u32,
    blocks: HashMap<Triplet, Arc<CgTensor>>,
}

impl CgTable {
    pub fn new(lmax: u32) -> Result<Self> {
        Self::with_bounds(lmax, lmax, lmax)
    }

    pub fn with_bounds(lmax_in1: u32, lmax_in2: u32, lmax_out: u32) -> Result<Self> {
        let mut blocks = HashMap::new();
        for l1 in 0..=lmax_in1 {
            for l2 in 0..=lmax_in2 {
                for l3 in l1.abs_diff(l2)..=(l1 + l2).min(lmax_out) {
                    let t = Triplet::new(l1, l2, l3);
                    blocks.insert(t, Arc::new(cg_real(t)?));
                }
            }
        }
        Ok(CgTable {
            lmax_in1,
            lmax_in2,
            lmax_out,
            blocks,
        })
    }

    pub fn get(&self, t: Triplet) -> Option<&CgTensor> {
        self.blocks.get(&t).map(|b| b.as_ref())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total stored nonzeros.
    pub fn nnz(&self) -> usize {
        self.blocks.values().map(|b| b.nnz()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_small() {
        let w0 = real_basis_rotation(0);
        assert_eq!(w0.nrows(), 1);
        assert_eq!(w0[(0, 0)], Complex64::new(1.0, 0.0));

        let w1 = real_basis_rotation(1);
        let s = FRAC_1_SQRT_2;
        // row m = 1: Y_11 = -(Y^1_1 - Y^1_-1)/sqrt2
        assert_eq!(w1[(2, 2)], Complex64::new(-s, 0.0));
        assert_eq!(w1[(2, 0)], Complex64::new(s, 0.0));
        // row m = -1: Y_1-1 = (Y^1_1 + Y^1_-1)/(sqrt2 i)
        assert_eq!(w1[(0, 2)], Complex64::new(0.0, -s));
        assert_eq!(w1[(0, 0)], Complex64::new(0.0, -s));
        assert_eq!(w1[(1, 1)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn rotation_unitary_and_conjugation_rule() {
        for l in 0..=20u32 {
            let w = real_basis_rotation(l);
            let prod = &w * w.adjoint();
            let d = (2 * l + 1) as usize;
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[(i, j)] - Complex64::new(target, 0.0)).norm() < 1e-14);
                }
            }
            let li = l as i32;
            for m in -li..=li {
                for mp in -li..=li {
                    let lhs = w[((m + li) as usize, (mp + li) as usize)].conj();
                    let sign = if mp.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    let rhs = w[((m + li) as usize, (-mp + li) as usize)] * sign;
                    assert!((lhs - rhs).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn scalar_block() {
        let b = cg_real(Triplet::new(0, 0, 0)).unwrap();
        assert_eq!(
            b.entries(),
            &[CgEntry {
                m1: 0,
                m2: 0,
                m3: 0,
                value: 1.0
            }]
        );
        assert_eq!(b.basis, CgBasis::RealE3nn);
    }

    #[test]
    fn vector_cross_block_is_levi_civita() {
        let b = cg_real(Triplet::new(1, 1, 1)).unwrap();
        assert_eq!(b.nnz(), 6);
        let scale = b.entries()[0].value.abs();
        assert!((scale - FRAC_1_SQRT_2).abs() < 1e-15);
        for e in b.entries() {
            assert!((e.value.abs() - scale).abs() < 1e-15);
            assert!(e.m1 != e.m2 && e.m2 != e.m3 && e.m1 != e.m3);
            assert_eq!(b.get(e.m2 as i32, e.m1 as i32, e.m3 as i32), -e.value);
        }
    }

    #[test]
    fn parity_of_unphased_block() {
        for t in Triplet::enumerate(4) {
            let sign = if (t.l1 + t.l2 + t.l3) % 2 == 0 { 1.0 } else { -1.0 };
            for (_, _, _, v) in cg_real_unphased(t).unwrap() {
                assert!((v.conj() - v * sign).norm() < 1e-14, "{t}");
            }
        }
    }

    #[test]
    fn inadmissible_rejected() {
        assert!(matches!(
            cg_real(Triplet::new(1, 1, 3)),
            Err(Error::InadmissibleTriplet(_))
        ));
    }

    #[test]
    fn table_counts() {
        let table = CgTable::new(2).unwrap();
        assert_eq!(table.len(), Triplet::enumerate(2).count());
        assert!(table.get(Triplet::new(2, 2, 4)).is_none());
        assert!(table.get(Triplet::new(1, 2, 3)).is_none());
        assert!(table.get(Triplet::new(2, 2, 2)).is_some());
    }
}
