//! Tensor products of irrep features.
//!
//! [`cgtp`] is the exact Clebsch-Gordan product and serves as the oracle.
//! The integral products evaluate both inputs as band-limited signals on a
//! quadrature grid, apply a pointwise kernel, and project the result:
//!
//! | product        | kernel                      | relation to `cgtp`  |
//! |----------------|-----------------------------|---------------------|
//! | [`gtp`]        | `F1 F2`                     | `G~ · cgtp`         |
//! | [`vstp`]       | `(∇F1 × ∇F2)·r`             | `V~ · cgtp`         |
//! | [`combined_tp`]| `F1 F2 + (∇F1 × ∇F2)·r`     | `cgtp / Gamma`      |

mod bench;
mod layer;

pub use bench::{bench_scaling, fit_loglog_slope, method_slope, BenchMethod, BenchRecord};
pub use layer::{
    effective_dense_weights, mimo_layer_cgtp, mimo_layer_integral, DenseWeights, FactorTriple, IntegralMode,
    MimoWeights,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{combined_kernel, cross_kernel};
use crate::quadrature::{BasisTable, NodeSignal};
use crate::wigner::{cg_real, CgTensor, Triplet};

/// Real coefficients of one irrep, `m = -l..=l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrrepFeature {
    pub l: u32,
    pub coeffs: Vec<f64>,
}

impl IrrepFeature {
    pub fn new(l: u32, coeffs: Vec<f64>) -> Result<Self> {
        let expected = 2 * l as usize + 1;
        if coeffs.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(IrrepFeature { l, coeffs })
    }

    pub fn zeros(l: u32) -> Self {
        IrrepFeature {
            l,
            coeffs: vec![0.0; 2 * l as usize + 1],
        }
    }

    /// Standard normal entries.
    pub fn random(l: u32, rng: &mut impl Rng) -> Self {
        IrrepFeature {
            l,
            coeffs: (0..=2 * l).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        IrrepFeature {
            l: self.l,
            coeffs: self.coeffs.iter().map(|x| s * x).collect(),
        }
    }

    /// Coefficients over all `l' <= l`, zero outside this irrep.
    fn embedded(&self) -> Vec<f64> {
        let l = self.l as usize;
        let mut out = vec![0.0; (l + 1) * (l + 1)];
        out[l * l..].copy_from_slice(&self.coeffs);
        out
    }
}

/// Direct sum of irreps `l = 0..=lmax`, stored flat in `(l, m)` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiIrrepFeature {
    pub lmax: u32,
    pub data: Vec<f64>,
}

impl MultiIrrepFeature {
    pub fn new(lmax: u32, data: Vec<f64>) -> Result<Self> {
        let expected = (lmax as usize + 1).pow(2);
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(MultiIrrepFeature { lmax, data })
    }

    pub fn zeros(lmax: u32) -> Self {
        MultiIrrepFeature {
            lmax,
            data: vec![0.0; (lmax as usize + 1).pow(2)],
        }
    }

    pub fn random(lmax: u32, rng: &mut impl Rng) -> Self {
        MultiIrrepFeature {
            lmax,
            data: (0..(lmax as usize + 1).pow(2))
                .map(|_| rng.sample(StandardNormal))
                .collect(),
        }
    }

    pub fn from_blocks(blocks: &[IrrepFeature]) -> Result<Self> {
        let mut data = Vec::new();
        for (l, b) in blocks.iter().enumerate() {
            if b.l as usize != l {
                return Err(Error::Shape(format!("block {l} has l = {}", b.l)));
            }
            data.extend_from_slice(&b.coeffs);
        }
        let lmax = blocks
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Shape("no blocks".into()))?;
        Ok(MultiIrrepFeature {
            lmax: lmax as u32,
            data,
        })
    }

    pub fn block(&self, l: u32) -> &[f64] {
        let l = l as usize;
        &self.data[l * l..(l + 1) * (l + 1)]
    }

    pub fn block_mut(&mut self, l: u32) -> &mut [f64] {
        let l = l as usize;
        &mut self.data[l * l..(l + 1) * (l + 1)]
    }

    pub fn irrep(&self, l: u32) -> IrrepFeature {
        IrrepFeature {
            l,
            coeffs: self.block(l).to_vec(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Pointwise kernel of an integral product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    Product,
    Cross,
    Combined,
}

impl Kernel {
    fn needs_gradient(self) -> bool {
        self != Kernel::Product
    }

    /// Kernel values at every node.
    pub fn apply(self, s1: &NodeSignal, s2: &NodeSignal) -> Vec<f64> {
        match self {
            Kernel::Product => s1.value.iter().zip(&s2.value).map(|(a, b)| a * b).collect(),
            Kernel::Cross => (0..s1.value.len())
                .map(|i| cross_kernel(s1.gradient(i), s2.gradient(i)))
                .collect(),
            Kernel::Combined => (0..s1.value.len())
                .map(|i| combined_kernel(s1.sample(i), s2.sample(i)))
                .collect(),
        }
    }
}

/// Exact product with a precomputed real CG block.
pub fn cgtp_with_block(h1: &IrrepFeature, h2: &IrrepFeature, block: &CgTensor) -> Result<IrrepFeature> {
    let t = block.triplet;
    if (h1.l, h2.l) != (t.l1, t.l2) {
        return Err(Error::Shape(format!(
            "inputs ({}, {}) do not match block {t}",
            h1.l, h2.l
        )));
    }
    let mut out = IrrepFeature::zeros(t.l3);
    block.contract_into(&h1.coeffs, &h2.coeffs, 1.0, &mut out.coeffs);
    Ok(out)
}

/// `(h1 ⊗ h2)^{l3}_{m3} = sum C^{l3 m3}_{l1 m1, l2 m2} h1_{m1} h2_{m2}` in the real basis.
pub fn cgtp(h1: &IrrepFeature, h2: &IrrepFeature, l3: u32) -> Result<IrrepFeature> {
    let block = cg_real(Triplet::new(h1.l, h2.l, l3))?;
    cgtp_with_block(h1, h2, &block)
}

/// Integral product with an arbitrary kernel.
pub fn integral_tp(
    kernel: Kernel,
    h1: &IrrepFeature,
    h2: &IrrepFeature,
    l3: u32,
    table: &BasisTable,
) -> Result<IrrepFeature> {
    let t = Triplet::new(h1.l, h2.l, l3).require_admissible()?;
    table.grid().require_degree(t.sum() as usize)?;
    let grad = kernel.needs_gradient();
    let s1 = table.synthesize(&h1.embedded(), grad)?;
    let s2 = table.synthesize(&h2.embedded(), grad)?;
    let projected = table.analyze(&kernel.apply(&s1, &s2), l3 as usize)?;
    let l3 = l3 as usize;
    IrrepFeature::new(t.l3, projected[l3 * l3..].to_vec())
}

/// Gaunt product: `∫ F1 F2 Y_{l3}`.
pub fn gtp(h1: &IrrepFeature, h2: &IrrepFeature, l3: u32, table: &BasisTable) -> Result<IrrepFeature> {
    integral_tp(Kernel::Product, h1, h2, l3, table)
}

/// Antisymmetric product: `∫ ((∇F1 × ∇F2)·r) Y_{l3}`.
pub fn vstp(h1: &IrrepFeature, h2: &IrrepFeature, l3: u32, table: &BasisTable) -> Result<IrrepFeature> {
    integral_tp(Kernel::Cross, h1, h2, l3, table)
}

/// Single-integral product reproducing `cgtp / Gamma` on every triplet.
pub fn combined_tp(h1: &IrrepFeature, h2: &IrrepFeature, l3: u32, table: &BasisTable) -> Result<IrrepFeature> {
    integral_tp(Kernel::Combined, h1, h2, l3, table)
}
