//! Verification suites: parity, oracle equivalence, closed form against
//! quadrature, and invariance under quadrature refinement.
//!
//! Each check returns a [`CheckOutcome`] naming the triplets that failed, so
//! reports stay machine readable.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{build_table, closed_form, CouplingGrid, CouplingScalars, IntegralKind};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_product_grid, BasisTable, QuadratureSpec};
use crate::tensorprod::{
    cgtp_with_block, combined_tp, effective_dense_weights, gtp, mimo_layer_cgtp, mimo_layer_integral, vstp,
    FactorTriple, IntegralMode, IrrepFeature, MimoWeights, MultiIrrepFeature,
};
use crate::wigner::{cg_real, CgTable, Triplet};

pub const VANISH_TOLERANCE: f64 = 1e-10;
pub const REPRODUCTION_TOLERANCE: f64 = 1e-9;
/// Smallest coupling magnitude accepted as nonzero.
pub const NONZERO_THRESHOLD: f64 = 1e-8;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-8;
pub const ORACLE_TOLERANCE: f64 = 1e-9;
pub const SPLIT_TOLERANCE: f64 = 1e-11;
pub const LAYER_TOLERANCE: f64 = 1e-8;
pub const REFINEMENT_TOLERANCE: f64 = 1e-10;
/// Degree increase used by refinement checks.
pub const REFINEMENT_STEP: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub tolerance: f64,
    pub max_error: f64,
    pub worst: Option<Triplet>,
    pub checked: usize,
    pub failures: Vec<Triplet>,
}

/// Accumulates per-triplet errors against one tolerance.
struct Tally {
    name: String,
    tolerance: f64,
    max_error: f64,
    worst: Option<Triplet>,
    checked: usize,
    failures: Vec<Triplet>,
}

impl Tally {
    fn new(name: &str, tolerance: f64) -> Self {
        Tally {
            name: name.into(),
            tolerance,
            max_error: 0.0,
            worst: None,
            checked: 0,
            failures: Vec::new(),
        }
    }

    /// NaN counts as a failure.
    fn record(&mut self, t: Triplet, err: f64) {
        self.checked += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if err > self.max_error || self.worst.is_none() {
            self.max_error = err;
            self.worst = Some(t);
        }
        if err >= self.tolerance && self.failures.last() != Some(&t) {
            self.failures.push(t);
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            passed: self.failures.is_empty(),
            name: self.name,
            tolerance: self.tolerance,
            max_error: self.max_error,
            worst: self.worst,
            checked: self.checked,
            failures: self.failures,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Error of `block` against `s * cg`: relative on nonzero CG entries,
/// relative to the largest expected entry elsewhere.
fn reproduction_error(block: &[f64], cg: &[f64], s: f64) -> f64 {
    let scale = max_abs(cg) * s.abs();
    block
        .iter()
        .zip(cg)
        .map(|(&b, &c)| {
            let expected = s * c;
            if c != 0.0 {
                (b - expected).abs() / expected.abs()
            } else {
                b.abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Coupling grids keyed by required degree.
struct GridCache<'a> {
    spec: &'a QuadratureSpec,
    lmax: usize,
    grids: HashMap<usize, CouplingGrid>,
}

impl<'a> GridCache<'a> {
    fn new(spec: &'a QuadratureSpec, lmax: usize) -> Self {
        GridCache {
            spec,
            lmax,
            grids: HashMap::new(),
        }
    }

    fn get(&mut self, need: usize) -> Result<&CouplingGrid> {
        let key = match self.spec {
            QuadratureSpec::Gauss { .. } => need,
            QuadratureSpec::Design(_) => 0,
        };
        if !self.grids.contains_key(&key) {
            let grid = CouplingGrid::for_degree(self.spec, need, self.lmax)?;
            self.grids.insert(key, grid);
        }
        Ok(&self.grids[&key])
    }
}

/// Outcomes of the triple-integral checks for one integral kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralChecks {
    /// The integral vanishes on the parity it does not couple.
    pub vanishing: CheckOutcome,
    /// The integral equals the tabulated scalar times the CG block, with the scalar nonzero.
    pub reproduction: CheckOutcome,
    /// The integral block is unchanged by a Gauss grid of `REFINEMENT_STEP` higher degree
    /// (relative where the integral couples, absolute where it vanishes).
    pub refinement: CheckOutcome,
}

/// Checks every triple-integral block with entries `<= lmax` against `scalars`.
pub fn integral_checks(
    kind: IntegralKind,
    lmax: u32,
    spec: &QuadratureSpec,
    scalars: &CouplingScalars,
) -> Result<IntegralChecks> {
    let label = match kind {
        IntegralKind::Gaunt => "gaunt",
        IntegralKind::Cross => "cross",
    };
    let mut vanishing = Tally::new(&format!("{label}_vanishing"), VANISH_TOLERANCE);
    let mut reproduction = Tally::new(&format!("{label}_reproduction"), REPRODUCTION_TOLERANCE);
    let mut refinement = Tally::new(&format!("{label}_refinement"), REFINEMENT_TOLERANCE);
    let mut base = GridCache::new(spec, lmax as usize);
    let mut refined: HashMap<usize, CouplingGrid> = HashMap::new();
    for t in Triplet::enumerate(lmax) {
        let grid = base.get(t.sum() as usize)?;
        let degree = grid.grid.degree + REFINEMENT_STEP;
        let block = grid.integral_block(kind, t)?;
        if let std::collections::hash_map::Entry::Vacant(e) = refined.entry(degree) {
            e.insert(CouplingGrid::new(gauss_product_grid(degree), lmax as usize)?);
        }
        let fine = refined[&degree].integral_block(kind, t)?;
        let cg = cg_real(t)?.to_dense();

        let scale = if kind.vanishes_on(t) { 1.0 } else { norm(&block) };
        refinement.record(t, diff_norm(&block, &fine) / scale);

        if kind.vanishes_on(t) {
            vanishing.record(t, max_abs(&block));
        } else {
            let record = scalars
                .get(t)
                .ok_or_else(|| Error::Shape(format!("coupling table has no triplet {t}")))?;
            let s = match kind {
                IntegralKind::Gaunt => record.g_tilde,
                IntegralKind::Cross => record.v_tilde,
            };
            let err = if s.abs() > NONZERO_THRESHOLD {
                reproduction_error(&block, &cg, s)
            } else {
                f64::INFINITY
            };
            reproduction.record(t, err);
        }
    }
    Ok(IntegralChecks {
        vanishing: vanishing.finish(),
        reproduction: reproduction.finish(),
        refinement: refinement.finish(),
    })
}

fn relative_deviation(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Compares `G~` and `V~` of `table` with the closed forms, triplet by triplet.
pub fn closed_form_check(table: &CouplingScalars) -> Result<(CheckOutcome, CheckOutcome)> {
    let reference = closed_form(table.lmax)?;
    let mut g = Tally::new("closed_form_gtilde", CLOSED_FORM_TOLERANCE);
    let mut v = Tally::new("closed_form_vtilde", CLOSED_FORM_TOLERANCE);
    for r in &reference.records {
        let t = r.triplet();
        let got = table
            .get(t)
            .ok_or_else(|| Error::Shape(format!("table has no triplet {t}")))?;
        if t.is_antisymmetric() {
            v.record(t, relative_deviation(got.v_tilde, r.v_tilde));
        } else {
            g.record(t, relative_deviation(got.g_tilde, r.g_tilde));
        }
    }
    Ok((g.finish(), v.finish()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleChecks {
    /// `Gamma * combined_tp` against the exact product (relative norm).
    pub equivalence: CheckOutcome,
    /// `combined_tp` against `gtp + vstp` (elementwise, relative to the output norm).
    pub split: CheckOutcome,
    /// All three integral products under a refined grid.
    pub refinement: CheckOutcome,
}

/// Single-path products on `pairs` random input pairs per triplet `<= lmax`.
pub fn oracle_checks(
    lmax: u32,
    spec: &QuadratureSpec,
    scalars: &CouplingScalars,
    pairs: usize,
    seed: u64,
) -> Result<OracleChecks> {
    let table = BasisTable::new(spec.grid_for(3 * lmax as usize)?, lmax as usize)?;
    let fine = BasisTable::new(gauss_product_grid(table.grid().degree + REFINEMENT_STEP), lmax as usize)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut equivalence = Tally::new("oracle_equivalence", ORACLE_TOLERANCE);
    let mut split = Tally::new("combined_split", SPLIT_TOLERANCE);
    let mut refinement = Tally::new("product_refinement", REFINEMENT_TOLERANCE);
    for t in Triplet::enumerate(lmax) {
        let block = cg_real(t)?;
        let gamma = scalars
            .gamma(t)
            .ok_or_else(|| Error::Shape(format!("coupling table has no triplet {t}")))?;
        for _ in 0..pairs {
            let h1 = IrrepFeature::random(t.l1, &mut rng);
            let h2 = IrrepFeature::random(t.l2, &mut rng);
            let exact = cgtp_with_block(&h1, &h2, &block)?;
            let c = combined_tp(&h1, &h2, t.l3, &table)?;
            let g = gtp(&h1, &h2, t.l3, &table)?;
            let v = vstp(&h1, &h2, t.l3, &table)?;

            let scaled = c.scaled(gamma);
            equivalence.record(t, diff_norm(&scaled.coeffs, &exact.coeffs) / norm(&exact.coeffs));

            let c_norm = norm(&c.coeffs);
            let split_err = c
                .coeffs
                .iter()
                .zip(g.coeffs.iter().zip(&v.coeffs))
                .map(|(c, (g, v))| (c - g - v).abs())
                .fold(0.0, f64::max);
            split.record(t, split_err / c_norm);

            let refined = [
                combined_tp(&h1, &h2, t.l3, &fine)?,
                gtp(&h1, &h2, t.l3, &fine)?,
                vstp(&h1, &h2, t.l3, &fine)?,
            ];
            let err = [&c, &g, &v]
                .iter()
                .zip(&refined)
                .map(|(a, b)| diff_norm(&a.coeffs, &b.coeffs))
                .fold(0.0, f64::max);
            refinement.record(t, err / c_norm);
        }
    }
    Ok(OracleChecks {
        equivalence: equivalence.finish(),
        split: split.finish(),
        refinement: refinement.finish(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerChecks {
    /// Integral layers against the dense CG layer with effective weights.
    pub equivalence: CheckOutcome,
    /// Integral layer outputs under a refined grid.
    pub refinement: CheckOutcome,
}

/// Factorized and rank-R integral layers for every `Lmax <= lmax` and rank `<= max_rank`,
/// in both modes. Failures are reported at the triplet `(Lmax, Lmax, Lmax)`.
pub fn layer_checks(
    lmax: u32,
    max_rank: usize,
    spec: &QuadratureSpec,
    scalars: &CouplingScalars,
    seed: u64,
) -> Result<LayerChecks> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut equivalence = Tally::new("layer_equivalence", LAYER_TOLERANCE);
    let mut refinement = Tally::new("layer_refinement", REFINEMENT_TOLERANCE);
    for l in 0..=lmax {
        let key = Triplet::new(l, l, l);
        let cg = CgTable::new(l)?;
        let table = BasisTable::new(spec.grid_for(3 * l as usize)?, l as usize)?;
        let fine = BasisTable::new(gauss_product_grid(table.grid().degree + REFINEMENT_STEP), l as usize)?;
        let h1 = MultiIrrepFeature::random(l, &mut rng);
        let h2 = MultiIrrepFeature::random(l, &mut rng);
        let mut weights = vec![MimoWeights::Factorized(FactorTriple::random(l, l, l, &mut rng))];
        for r in 1..=max_rank {
            weights.push(MimoWeights::RankR(
                (0..r).map(|_| FactorTriple::random(l, l, l, &mut rng)).collect(),
            ));
        }
        for w in &weights {
            for mode in [IntegralMode::Gaunt, IntegralMode::Combined] {
                let dense = effective_dense_weights(w, scalars, mode)?;
                let exact = mimo_layer_cgtp(&h1, &h2, &dense, &cg)?;
                let got = mimo_layer_integral(&h1, &h2, w, &table, mode)?;
                let refined = mimo_layer_integral(&h1, &h2, w, &fine, mode)?;
                equivalence.record(key, diff_norm(&got.data, &exact.data) / exact.norm());
                refinement.record(key, diff_norm(&got.data, &refined.data) / got.norm());
            }
        }
    }
    Ok(LayerChecks {
        equivalence: equivalence.finish(),
        refinement: refinement.finish(),
    })
}

/// Deliberate corruption of the tabulated scalars, for negative controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Injection {
    FlipVtilde(Triplet),
}

impl Injection {
    pub fn apply(self, table: &mut CouplingScalars) -> Result<()> {
        match self {
            Injection::FlipVtilde(t) => {
                let r = table
                    .records
                    .iter_mut()
                    .find(|r| r.triplet() == t)
                    .ok_or_else(|| Error::Shape(format!("cannot inject at {t}: not in table")))?;
                r.v_tilde = -r.v_tilde;
                r.gamma = 1.0 / (r.g_tilde + r.v_tilde);
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub lmax: u32,
    pub quadrature: QuadratureSpec,
    pub seed: u64,
    /// Random input pairs per triplet in the oracle check.
    pub pairs: usize,
    /// Largest `Lmax` of the layer check; capped at `lmax`.
    pub layer_lmax: u32,
    pub layer_rank: usize,
    pub inject: Option<Injection>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            lmax: 6,
            quadrature: QuadratureSpec::default(),
            seed: 0,
            pairs: 5,
            layer_lmax: 4,
            layer_rank: 3,
            inject: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub lmax: u32,
    pub quadrature: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn failed(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Runs every suite up to `cfg.lmax` on a quadrature-built coupling table.
pub fn run(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut table = build_table(cfg.lmax, &cfg.quadrature)?;
    if let Some(inject) = cfg.inject {
        inject.apply(&mut table)?;
    }
    let mut checks = Vec::new();
    for kind in [IntegralKind::Gaunt, IntegralKind::Cross] {
        let c = integral_checks(kind, cfg.lmax, &cfg.quadrature, &table)?;
        checks.extend([c.vanishing, c.reproduction, c.refinement]);
    }
    let (g, v) = closed_form_check(&table)?;
    checks.extend([g, v]);
    let o = oracle_checks(cfg.lmax, &cfg.quadrature, &table, cfg.pairs, cfg.seed)?;
    checks.extend([o.equivalence, o.split, o.refinement]);
    let l = layer_checks(
        cfg.layer_lmax.min(cfg.lmax),
        cfg.layer_rank,
        &cfg.quadrature,
        &table,
        cfg.seed,
    )?;
    checks.extend([l.equivalence, l.refinement]);
    Ok(VerifyReport {
        lmax: cfg.lmax,
        quadrature: cfg.quadrature.to_string(),
        seed: cfg.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(lmax: u32) -> VerifyConfig {
        VerifyConfig {
            lmax,
            pairs: 2,
            layer_lmax: 2,
            layer_rank: 2,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn lmax_zero_passes() {
        let report = run(&small(0)).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.checks.iter().any(|c| c.checked > 0));
    }

    #[test]
    fn small_run_passes() {
        let report = run(&small(3)).unwrap();
        assert!(report.passed, "{:?}", report.failed().collect::<Vec<_>>());
    }

    #[test]
    fn flipped_vtilde_is_reported_with_its_triplet() {
        let t = Triplet::new(1, 2, 2);
        let cfg = VerifyConfig {
            inject: Some(Injection::FlipVtilde(t)),
            ..small(3)
        };
        let report = run(&cfg).unwrap();
        assert!(!report.passed);
        let names: Vec<_> = report.failed().map(|c| c.name.as_str()).collect();
        for name in ["cross_reproduction", "closed_form_vtilde", "oracle_equivalence"] {
            assert!(names.contains(&name), "{names:?}");
        }
        for c in report.failed() {
            if c.name != "layer_equivalence" {
                assert_eq!(c.failures, vec![t], "{}", c.name);
            }
        }
    }

    #[test]
    fn tally_keeps_worst() {
        let mut tally = Tally::new("x", 1.0);
        tally.record(Triplet::new(0, 0, 0), 0.5);
        tally.record(Triplet::new(1, 1, 0), 2.0);
        tally.record(Triplet::new(1, 1, 1), f64::NAN);
        let out = tally.finish();
        assert_eq!(out.worst, Some(Triplet::new(1, 1, 1)));
        assert_eq!(out.failures.len(), 2);
        assert!(!out.passed);
    }
}
