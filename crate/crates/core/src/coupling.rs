//! Scalar couplings between the integral tensor products and the exact CG product.
//!
//! For every admissible triplet the Gaunt integral `∫ Y1 Y2 Y3` equals
//! `G~ C` and the gradient cross integral `∫ ((∇Y1 × ∇Y2)·r) Y3` equals `V~ C`,
//! where `C` is the real CG block. This module extracts both scalars by
//! quadrature, cross-checks them against the closed forms, and tabulates them.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{cross_kernel, HarmonicValues};
use crate::quadrature::{integrate, BasisTable, QuadratureGrid, QuadratureSpec};
use crate::wigner::{cg_real, gtilde_closed_form, lambda_closed_form, vtilde_closed_form, CgTensor, Triplet};

/// Relative spread allowed between ratios taken at different `m`.
pub const RATIO_SPREAD_TOLERANCE: f64 = 1e-9;
/// Number of largest CG entries used for a ratio.
pub const RATIO_SAMPLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegralKind {
    /// `Y1 Y2 Y3`
    Gaunt,
    /// `((∇Y1 × ∇Y2)·r) Y3`
    Cross,
}

impl IntegralKind {
    /// Whether the integral vanishes identically on triplets of this parity.
    pub fn vanishes_on(self, t: Triplet) -> bool {
        match self {
            IntegralKind::Gaunt => t.is_antisymmetric(),
            IntegralKind::Cross => !t.is_antisymmetric(),
        }
    }
}

/// A quadrature grid with every node's harmonics up to `lmax`.
#[derive(Clone, Debug)]
pub struct CouplingGrid {
    pub grid: QuadratureGrid,
    pub lmax: usize,
    harmonics: Vec<HarmonicValues>,
}

impl CouplingGrid {
    pub fn new(grid: QuadratureGrid, lmax: usize) -> Result<Self> {
        let table = BasisTable::new(grid, lmax)?;
        let harmonics = (0..table.grid().len()).map(|i| table.node_values(i)).collect();
        Ok(CouplingGrid {
            grid: table.grid().clone(),
            lmax,
            harmonics,
        })
    }

    /// Grid from `spec` suitable for every triplet with entries `<= lmax` and sum `<= need`.
    pub fn for_degree(spec: &QuadratureSpec, need: usize, lmax: usize) -> Result<Self> {
        Self::new(spec.grid_for(need)?, lmax)
    }

    fn check(&self, t: Triplet) -> Result<()> {
        self.grid.require_degree(t.sum() as usize)?;
        if t.max_l() as usize > self.lmax {
            return Err(Error::Shape(format!(
                "coupling grid tabulates l <= {}, triplet {t} needs {}",
                self.lmax,
                t.max_l()
            )));
        }
        Ok(())
    }

    /// One triple integral.
    pub fn triple_integral(&self, kind: IntegralKind, t: Triplet, m1: i64, m2: i64, m3: i64) -> Result<f64> {
        let t = t.require_admissible()?;
        self.check(t)?;
        let (l1, l2, l3) = (t.l1 as usize, t.l2 as usize, t.l3 as usize);
        let f: Vec<f64> = self
            .harmonics
            .iter()
            .map(|h| {
                let k = match kind {
                    IntegralKind::Gaunt => h.y(l1, m1) * h.y(l2, m2),
                    IntegralKind::Cross => cross_kernel(h.grad(l1, m1), h.grad(l2, m2)),
                };
                k * h.y(l3, m3)
            })
            .collect();
        integrate(&self.grid, &f)
    }

    /// All triple integrals of a triplet, laid out like [`CgTensor::to_dense`].
    pub fn integral_block(&self, kind: IntegralKind, t: Triplet) -> Result<Vec<f64>> {
        let t = t.require_admissible()?;
        self.check(t)?;
        let (l1, l2, l3) = (t.l1 as i64, t.l2 as i64, t.l3 as i64);
        let (d1, d2, d3) = ((2 * l1 + 1) as usize, (2 * l2 + 1) as usize, (2 * l3 + 1) as usize);
        let mut out = vec![0.0; d1 * d2 * d3];
        let mut kernel = vec![0.0; d1 * d2];
        for (h, &w) in self.harmonics.iter().zip(&self.grid.weights) {
            for m1 in -l1..=l1 {
                for m2 in -l2..=l2 {
                    kernel[(m1 + l1) as usize * d2 + (m2 + l2) as usize] = match kind {
                        IntegralKind::Gaunt => h.y(l1 as usize, m1) * h.y(l2 as usize, m2),
                        IntegralKind::Cross => cross_kernel(h.grad(l1 as usize, m1), h.grad(l2 as usize, m2)),
                    };
                }
            }
            for (k, row) in kernel.iter().zip(out.chunks_mut(d3)) {
                let kw = k * w;
                for (m3, o) in (-l3..=l3).zip(row.iter_mut()) {
                    *o += kw * h.y(l3 as usize, m3);
                }
            }
        }
        Ok(out)
    }

    /// The scalar `s` with `integral = s * C`, from the largest entries of `block`.
    pub fn extract_with_block(&self, kind: IntegralKind, block: &CgTensor) -> Result<f64> {
        let t = block.triplet;
        if kind.vanishes_on(t) {
            return Ok(0.0);
        }
        let mut entries: Vec<_> = block.entries().to_vec();
        entries.sort_by(|a, b| {
            b.value
                .abs()
                .total_cmp(&a.value.abs())
                .then((a.m1, a.m2, a.m3).cmp(&(b.m1, b.m2, b.m3)))
        });
        entries.truncate(RATIO_SAMPLES);
        let ratios = entries
            .iter()
            .map(|e| Ok(self.triple_integral(kind, t, e.m1 as i64, e.m2 as i64, e.m3 as i64)? / e.value))
            .collect::<Result<Vec<f64>>>()?;
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        });
        let spread = if mean == 0.0 { hi - lo } else { (hi - lo) / mean.abs() };
        if spread > RATIO_SPREAD_TOLERANCE {
            return Err(Error::InconsistentRatio { triplet: t, spread });
        }
        Ok(mean)
    }

    pub fn extract(&self, kind: IntegralKind, t: Triplet) -> Result<f64> {
        let t = t.require_admissible()?;
        if kind.vanishes_on(t) {
            return Ok(0.0);
        }
        self.extract_with_block(kind, &cg_real(t)?)
    }
}

/// `G~` by quadrature; zero for odd parity.
pub fn extract_gtilde(t: Triplet, grid: &CouplingGrid) -> Result<f64> {
    grid.extract(IntegralKind::Gaunt, t)
}

/// `V~` by quadrature; zero for even parity.
pub fn extract_vtilde(t: Triplet, grid: &CouplingGrid) -> Result<f64> {
    grid.extract(IntegralKind::Cross, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRecord {
    pub l1: u32,
    pub l2: u32,
    pub l3: u32,
    pub parity: Parity,
    #[serde(rename = "G_tilde")]
    pub g_tilde: f64,
    #[serde(rename = "V_tilde")]
    pub v_tilde: f64,
    /// `Im(Lambda)`; zero for even parity.
    #[serde(rename = "Lambda_im")]
    pub lambda_im: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
}

impl CouplingRecord {
    pub fn triplet(&self) -> Triplet {
        Triplet::new(self.l1, self.l2, self.l3)
    }

    fn new(t: Triplet, g_tilde: f64, v_tilde: f64, lambda_im: f64) -> Self {
        let parity = if t.is_antisymmetric() {
            Parity::Odd
        } else {
            Parity::Even
        };
        CouplingRecord {
            l1: t.l1,
            l2: t.l2,
            l3: t.l3,
            parity,
            g_tilde,
            v_tilde,
            lambda_im,
            gamma: 1.0 / (g_tilde + v_tilde),
        }
    }
}

/// Largest relative deviations between quadrature and closed-form values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub max_rel_dev_gtilde: f64,
    pub max_rel_dev_vtilde: f64,
    pub worst_gtilde: Option<Triplet>,
    pub worst_vtilde: Option<Triplet>,
}

/// One real CG block in a table file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgBlockRecord {
    pub l1: u32,
    pub l2: u32,
    pub l3: u32,
    /// Dense values, row-major over `(m1, m2, m3)` with each `m` ascending from `-l`.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub format: String,
    pub version: u32,
    pub basis: String,
    pub m_ordering: String,
    pub source: String,
}

impl TableHeader {
    fn new(source: &str) -> Self {
        TableHeader {
            format: "so3tp-coupling-table".into(),
            version: 1,
            basis: "real e3nn, orthonormal harmonics without Condon-Shortley phase".into(),
            m_ordering: "blocks are row-major over (m1, m2, m3), each m ascending from -l to l".into(),
            source: source.into(),
        }
    }
}

/// Coupling scalars for every admissible triplet with entries `<= lmax`, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingScalars {
    pub header: TableHeader,
    pub lmax: u32,
    pub records: Vec<CouplingRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_blocks: Option<Vec<CgBlockRecord>>,
    #[serde(skip)]
    index: HashMap<Triplet, usize>,
}

impl CouplingScalars {
    fn from_records(lmax: u32, records: Vec<CouplingRecord>, source: &str) -> Self {
        let mut table = CouplingScalars {
            header: TableHeader::new(source),
            lmax,
            records,
            cross_check: None,
            cg_blocks: None,
            index: HashMap::new(),
        };
        table.reindex();
        table
    }

    fn reindex(&mut self) {
        self.index = self.records.iter().enumerate().map(|(i, r)| (r.triplet(), i)).collect();
    }

    pub fn get(&self, t: Triplet) -> Option<&CouplingRecord> {
        self.index.get(&t).map(|&i| &self.records[i])
    }

    pub fn g_tilde(&self, t: Triplet) -> f64 {
        self.get(t).map_or(0.0, |r| r.g_tilde)
    }

    pub fn v_tilde(&self, t: Triplet) -> f64 {
        self.get(t).map_or(0.0, |r| r.v_tilde)
    }

    pub fn gamma(&self, t: Triplet) -> Option<f64> {
        self.get(t).map(|r| r.gamma)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Attaches the dense real CG block of every triplet.
    pub fn attach_cg_blocks(&mut self) -> Result<()> {
        let blocks = self
            .records
            .iter()
            .map(|r| {
                Ok(CgBlockRecord {
                    l1: r.l1,
                    l2: r.l2,
                    l3: r.l3,
                    values: cg_real(r.triplet())?.to_dense(),
                })
            })
            .collect::<Result<_>>()?;
        self.cg_blocks = Some(blocks);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut table: CouplingScalars = serde_json::from_str(text)?;
        table.reindex();
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Table from the closed forms alone.
pub fn closed_form(lmax: u32) -> Result<CouplingScalars> {
    let records = Triplet::enumerate(lmax)
        .map(|t| {
            Ok(CouplingRecord::new(
                t,
                gtilde_closed_form(t)?,
                vtilde_closed_form(t)?,
                lambda_closed_form(t)?.im,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(CouplingScalars::from_records(lmax, records, "closed form"))
}

fn relative_deviation(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Table by quadrature, each value cross-checked against its closed form.
///
/// Gauss grids are built per required degree `l1 + l2 + l3` (plus the policy
/// margin); a design grid must cover the largest sum.
pub fn build_table(lmax: u32, policy: &QuadratureSpec) -> Result<CouplingScalars> {
    let mut grids: HashMap<usize, CouplingGrid> = HashMap::new();
    let mut records = Vec::new();
    let mut check = CrossCheck::default();
    for t in Triplet::enumerate(lmax) {
        let need = t.sum() as usize;
        let key = match policy {
            QuadratureSpec::Gauss { .. } => need,
            QuadratureSpec::Design(_) => 0,
        };
        if let std::collections::hash_map::Entry::Vacant(e) = grids.entry(key) {
            let grid = CouplingGrid::for_degree(policy, need, lmax as usize).map_err(|e| e.context(format!("{t}")))?;
            e.insert(grid);
        }
        let grid = &grids[&key];
        let g = grid
            .extract(IntegralKind::Gaunt, t)
            .map_err(|e| e.context(format!("G~ at {t}")))?;
        let v = grid
            .extract(IntegralKind::Cross, t)
            .map_err(|e| e.context(format!("V~ at {t}")))?;

        let (g_ref, v_ref) = (gtilde_closed_form(t)?, vtilde_closed_form(t)?);
        let (dg, dv) = (relative_deviation(g, g_ref), relative_deviation(v, v_ref));
        if dg > check.max_rel_dev_gtilde {
            check.max_rel_dev_gtilde = dg;
            check.worst_gtilde = Some(t);
        }
        if dv > check.max_rel_dev_vtilde {
            check.max_rel_dev_vtilde = dv;
            check.worst_vtilde = Some(t);
        }
        records.push(CouplingRecord::new(t, g, v, lambda_closed_form(t)?.im));
    }
    let mut table = CouplingScalars::from_records(lmax, records, "quadrature");
    table.cross_check = Some(check);
    Ok(table)
}
