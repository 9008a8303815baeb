//! Bilinear MIMO layers: the dense CG layer and the factorized integral layer.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Kernel, MultiIrrepFeature};
use crate::coupling::CouplingScalars;
use crate::error::{Error, Result};
use crate::quadrature::BasisTable;
use crate::wigner::{CgTable, Triplet};

/// `w^{l3}_{l1 l2}` for every `l3 <= lmax_out`, `l1 <= lmax_in1`, `l2 <= lmax_in2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseWeights {
    pub lmax_in1: u32,
    pub lmax_in2: u32,
    pub lmax_out: u32,
    /// Indexed `[l3][l1][l2]`.
    pub values: Vec<f64>,
}

impl DenseWeights {
    pub fn zeros(lmax_in1: u32, lmax_in2: u32, lmax_out: u32) -> Self {
        let n = (lmax_in1 as usize + 1) * (lmax_in2 as usize + 1) * (lmax_out as usize + 1);
        DenseWeights {
            lmax_in1,
            lmax_in2,
            lmax_out,
            values: vec![0.0; n],
        }
    }

    pub fn random(lmax_in1: u32, lmax_in2: u32, lmax_out: u32, rng: &mut impl Rng) -> Self {
        let mut w = Self::zeros(lmax_in1, lmax_in2, lmax_out);
        w.values.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        w
    }

    fn index(&self, l1: u32, l2: u32, l3: u32) -> usize {
        ((l3 as usize * (self.lmax_in1 as usize + 1)) + l1 as usize) * (self.lmax_in2 as usize + 1) + l2 as usize
    }

    pub fn get(&self, l1: u32, l2: u32, l3: u32) -> f64 {
        self.values[self.index(l1, l2, l3)]
    }

    pub fn set(&mut self, l1: u32, l2: u32, l3: u32, v: f64) {
        let i = self.index(l1, l2, l3);
        self.values[i] = v;
    }
}

/// One rank of factorized weights `w^{l3} w_{l1} w_{l2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorTriple {
    pub w_out: Vec<f64>,
    pub w_in1: Vec<f64>,
    pub w_in2: Vec<f64>,
}

impl FactorTriple {
    pub fn ones(lmax_in1: u32, lmax_in2: u32, lmax_out: u32) -> Self {
        FactorTriple {
            w_out: vec![1.0; lmax_out as usize + 1],
            w_in1: vec![1.0; lmax_in1 as usize + 1],
            w_in2: vec![1.0; lmax_in2 as usize + 1],
        }
    }

    pub fn random(lmax_in1: u32, lmax_in2: u32, lmax_out: u32, rng: &mut impl Rng) -> Self {
        let mut draw = |n: u32| (0..=n).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>();
        FactorTriple {
            w_out: draw(lmax_out),
            w_in1: draw(lmax_in1),
            w_in2: draw(lmax_in2),
        }
    }

    fn bounds(&self) -> Option<(u32, u32, u32)> {
        let n = |v: &Vec<f64>| v.len().checked_sub(1).map(|x| x as u32);
        Some((n(&self.w_in1)?, n(&self.w_in2)?, n(&self.w_out)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MimoWeights {
    Dense(DenseWeights),
    Factorized(FactorTriple),
    RankR(Vec<FactorTriple>),
}

impl MimoWeights {
    /// `(lmax_in1, lmax_in2, lmax_out)`, checked consistent across ranks.
    pub fn bounds(&self) -> Result<(u32, u32, u32)> {
        match self {
            MimoWeights::Dense(w) => Ok((w.lmax_in1, w.lmax_in2, w.lmax_out)),
            MimoWeights::Factorized(f) => f.bounds().ok_or_else(|| Error::Shape("empty factor".into())),
            MimoWeights::RankR(fs) => {
                let first = fs
                    .first()
                    .ok_or_else(|| Error::Shape("rank must be at least 1".into()))?;
                let b = first.bounds().ok_or_else(|| Error::Shape("empty factor".into()))?;
                if fs.iter().any(|f| f.bounds() != Some(b)) {
                    return Err(Error::Shape("ranks disagree on index ranges".into()));
                }
                Ok(b)
            }
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            MimoWeights::Dense(_) => 0,
            MimoWeights::Factorized(_) => 1,
            MimoWeights::RankR(fs) => fs.len(),
        }
    }

    /// The factor triples of a factorized or rank-R layer.
    pub fn triples(&self) -> Result<&[FactorTriple]> {
        match self {
            MimoWeights::Dense(_) => Err(Error::Shape("dense weights have no factorization".into())),
            MimoWeights::Factorized(f) => Ok(std::slice::from_ref(f)),
            MimoWeights::RankR(fs) => Ok(fs),
        }
    }

    /// `sum_r w^{(r) l3} w^{(r)}_{l1} w^{(r)}_{l2}` as dense weights.
    pub fn expand(&self) -> Result<DenseWeights> {
        let (b1, b2, b3) = self.bounds()?;
        if let MimoWeights::Dense(w) = self {
            return Ok(w.clone());
        }
        let mut out = DenseWeights::zeros(b1, b2, b3);
        for f in self.triples()? {
            for l3 in 0..=b3 {
                for l1 in 0..=b1 {
                    for l2 in 0..=b2 {
                        let i = out.index(l1, l2, l3);
                        out.values[i] += f.w_out[l3 as usize] * f.w_in1[l1 as usize] * f.w_in2[l2 as usize];
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegralMode {
    Gaunt,
    Combined,
}

impl IntegralMode {
    fn kernel(self) -> Kernel {
        match self {
            IntegralMode::Gaunt => Kernel::Product,
            IntegralMode::Combined => Kernel::Combined,
        }
    }

    /// The per-path scale this mode applies relative to the CG product.
    pub fn path_scale(self, scalars: &CouplingScalars, t: Triplet) -> f64 {
        match self {
            IntegralMode::Gaunt => scalars.g_tilde(t),
            IntegralMode::Combined => scalars.g_tilde(t) + scalars.v_tilde(t),
        }
    }
}

fn check_inputs(h1: &MultiIrrepFeature, h2: &MultiIrrepFeature, bounds: (u32, u32, u32)) -> Result<()> {
    if (h1.lmax, h2.lmax) != (bounds.0, bounds.1) {
        return Err(Error::Shape(format!(
            "inputs have lmax ({}, {}), weights expect ({}, {})",
            h1.lmax, h2.lmax, bounds.0, bounds.1
        )));
    }
    Ok(())
}

/// `h^{l3} = sum_{l1 l2} w^{l3}_{l1 l2} (h^{l1} ⊗ h^{l2})^{l3}` over admissible paths.
pub fn mimo_layer_cgtp(
    h1: &MultiIrrepFeature,
    h2: &MultiIrrepFeature,
    w: &DenseWeights,
    cg: &CgTable,
) -> Result<MultiIrrepFeature> {
    check_inputs(h1, h2, (w.lmax_in1, w.lmax_in2, w.lmax_out))?;
    let mut out = MultiIrrepFeature::zeros(w.lmax_out);
    for l3 in 0..=w.lmax_out {
        let mut acc = vec![0.0; 2 * l3 as usize + 1];
        for l1 in 0..=w.lmax_in1 {
            for l2 in 0..=w.lmax_in2 {
                let t = Triplet::new(l1, l2, l3);
                if !t.admissible() {
                    continue;
                }
                let block = cg
                    .get(t)
                    .ok_or_else(|| Error::Shape(format!("CG table has no block {t}")))?;
                block.contract_into(h1.block(l1), h2.block(l2), w.get(l1, l2, l3), &mut acc);
            }
        }
        out.block_mut(l3).copy_from_slice(&acc);
    }
    Ok(out)
}

/// Factorized or rank-R layer evaluated with one grid integral per rank.
///
/// Each rank sums the weighted input irreps into one signal per input,
/// applies the mode's kernel at every node, projects once, and scales the
/// projection by `w^{l3}`.
pub fn mimo_layer_integral(
    h1: &MultiIrrepFeature,
    h2: &MultiIrrepFeature,
    w: &MimoWeights,
    table: &BasisTable,
    mode: IntegralMode,
) -> Result<MultiIrrepFeature> {
    let bounds = w.bounds()?;
    let triples = w.triples()?;
    check_inputs(h1, h2, bounds)?;
    let (b1, b2, b3) = bounds;
    table.grid().require_degree((b1 + b2 + b3) as usize)?;
    let kernel = mode.kernel();
    let grad = kernel.needs_gradient();

    let weighted = |h: &MultiIrrepFeature, wl: &[f64]| {
        let mut c = h.data.clone();
        for l in 0..=h.lmax {
            let s = wl[l as usize];
            let l = l as usize;
            c[l * l..(l + 1) * (l + 1)].iter_mut().for_each(|x| *x *= s);
        }
        c
    };

    let mut out = MultiIrrepFeature::zeros(b3);
    for f in triples {
        let s1 = table.synthesize(&weighted(h1, &f.w_in1), grad)?;
        let s2 = table.synthesize(&weighted(h2, &f.w_in2), grad)?;
        let projected = table.analyze(&kernel.apply(&s1, &s2), b3 as usize)?;
        for l3 in 0..=b3 {
            let s = f.w_out[l3 as usize];
            let l = l3 as usize;
            for (o, p) in out.block_mut(l3).iter_mut().zip(&projected[l * l..(l + 1) * (l + 1)]) {
                *o += s * p;
            }
        }
    }
    Ok(out)
}

/// Dense weights under which [`mimo_layer_cgtp`] reproduces [`mimo_layer_integral`].
pub fn effective_dense_weights(w: &MimoWeights, scalars: &CouplingScalars, mode: IntegralMode) -> Result<DenseWeights> {
    let mut dense = w.expand()?;
    let (b1, b2, b3) = (dense.lmax_in1, dense.lmax_in2, dense.lmax_out);
    if b1.max(b2).max(b3) > scalars.lmax {
        return Err(Error::Shape(format!(
            "coupling table covers l <= {}, weights need {}",
            scalars.lmax,
            b1.max(b2).max(b3)
        )));
    }
    for l3 in 0..=b3 {
        for l1 in 0..=b1 {
            for l2 in 0..=b2 {
                let t = Triplet::new(l1, l2, l3);
                let scale = if t.admissible() {
                    mode.path_scale(scalars, t)
                } else {
                    0.0
                };
                let i = dense.index(l1, l2, l3);
                dense.values[i] *= scale;
            }
        }
    }
    Ok(dense)
}
