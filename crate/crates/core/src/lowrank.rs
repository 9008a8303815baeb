//! Low-rank CP fits of inverse coupling tensors.
//!
//! A target `y_{l1 l2 l3}` (e.g. `1/V~`) is approximated by
//! `sum_r a[l1][r] b[l2][r] c[l3][r]`, minimizing the mean relative squared
//! error over the entries allowed by the selection rules. Weighting by `1/y^2`
//! makes every factor update a linear least-squares problem, so the fit is
//! alternating least squares with exact block minimization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingScalars;
use crate::error::{Error, Result};
use crate::tensorprod::{FactorTriple, MimoWeights};
use crate::wigner::Triplet;

pub const MAX_SWEEPS: usize = 300;
pub const REL_LOSS_TOLERANCE: f64 = 1e-14;
pub const DEFAULT_RESTARTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `1/V~` on odd-parity triplets.
    InvVtilde,
    /// `1/G~` on even-parity triplets.
    InvGtilde,
    /// `Gamma = 1/(G~ + V~)` on every triplet; the normalization of the combined product.
    InvGamma,
    /// `1/Im(Lambda)` on odd-parity triplets. Equal to `1/V~` up to the sign
    /// `(-1)^{(l1+l2+l3-1)/2 + l3}`, which is not separable in `(l1, l2, l3)`.
    InvLambdaIm,
}

impl TargetKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vtilde" | "inv_vtilde" => Some(TargetKind::InvVtilde),
            "gtilde" | "inv_gtilde" => Some(TargetKind::InvGtilde),
            "gamma" | "inv_gamma" => Some(TargetKind::InvGamma),
            "lambda" | "inv_lambda_im" => Some(TargetKind::InvLambdaIm),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub triplet: Triplet,
    pub y: f64,
}

/// Sparse target tensor over admissible triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub kind: TargetKind,
    pub lmax: u32,
    pub entries: Vec<TargetEntry>,
}

impl Target {
    /// Target from explicit entries; every `y` must be finite and nonzero.
    pub fn from_entries(kind: TargetKind, lmax: u32, entries: Vec<TargetEntry>) -> Result<Self> {
        if let Some(e) = entries
            .iter()
            .find(|e| !e.y.is_finite() || e.y == 0.0 || e.triplet.max_l() > lmax)
        {
            return Err(Error::Shape(format!("invalid target entry {} = {}", e.triplet, e.y)));
        }
        Ok(Target { kind, lmax, entries })
    }

    pub fn get(&self, t: Triplet) -> Option<f64> {
        self.entries.iter().find(|e| e.triplet == t).map(|e| e.y)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reciprocal couplings on the triplets where the coupling is nonzero.
pub fn build_target(kind: TargetKind, table: &CouplingScalars) -> Target {
    let entries = table
        .records
        .iter()
        .filter_map(|r| {
            let t = match kind {
                TargetKind::InvVtilde => r.v_tilde,
                TargetKind::InvGtilde => r.g_tilde,
                TargetKind::InvGamma => r.g_tilde + r.v_tilde,
                TargetKind::InvLambdaIm => r.lambda_im,
            };
            (t != 0.0).then(|| TargetEntry {
                triplet: r.triplet(),
                y: 1.0 / t,
            })
        })
        .collect();
    Target {
        kind,
        lmax: table.lmax,
        entries,
    }
}

/// Rank-`R` factors; row `l` of each matrix holds the `R` weights of angular momentum `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CPFactors {
    pub rank: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl CPFactors {
    pub fn lmax(&self) -> u32 {
        (self.a.len() - 1) as u32
    }

    pub fn reconstruct(&self, t: Triplet) -> f64 {
        let (a, b, c) = (&self.a[t.l1 as usize], &self.b[t.l2 as usize], &self.c[t.l3 as usize]);
        (0..self.rank).map(|r| a[r] * b[r] * c[r]).sum()
    }

    fn random(lmax: u32, rank: usize, rng: &mut impl Rng) -> Self {
        let mut mat = || -> Vec<Vec<f64>> {
            (0..=lmax)
                .map(|_| (0..rank).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        };
        let (a, b, c) = (mat(), mat(), mat());
        CPFactors { rank, a, b, c }
    }

    /// Equalizes the column norms of the three factors per rank without changing any product.
    fn balance(&mut self) {
        for r in 0..self.rank {
            let norm = |m: &Vec<Vec<f64>>| m.iter().map(|row| row[r] * row[r]).sum::<f64>().sqrt();
            let (na, nb, nc) = (norm(&self.a), norm(&self.b), norm(&self.c));
            if na == 0.0 || nb == 0.0 || nc == 0.0 {
                continue;
            }
            let g = (na * nb * nc).cbrt();
            for (m, n) in [(&mut self.a, na), (&mut self.b, nb), (&mut self.c, nc)] {
                m.iter_mut().for_each(|row| row[r] *= g / n);
            }
        }
    }

    fn check_covers(&self, target: &Target) -> Result<()> {
        if self.lmax() < target.lmax || [&self.a, &self.b, &self.c].iter().any(|m| m.len() != self.a.len()) {
            return Err(Error::Shape(format!(
                "factors cover l <= {}, target needs {}",
                self.lmax(),
                target.lmax
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub sigma_log: f64,
    pub frac_within_2x: f64,
    pub r_squared: f64,
    pub loss: f64,
    pub n_entries: usize,
    /// Entries where `y / y_hat <= 0`; these count as outside the factor-of-two band.
    pub sign_errors: usize,
}

impl FitReport {
    /// Fails with [`Error::RatioSign`] if any reconstructed entry has the wrong sign.
    pub fn require_signs(&self) -> Result<()> {
        if self.sign_errors > 0 {
            Err(Error::RatioSign(self.sign_errors))
        } else {
            Ok(())
        }
    }
}

fn weighted_loss(target: &Target, f: &CPFactors) -> f64 {
    let sum: f64 = target
        .entries
        .iter()
        .map(|e| (1.0 - f.reconstruct(e.triplet) / e.y).powi(2))
        .sum();
    sum / target.entries.len().max(1) as f64
}

/// Fit quality over the target's entries.
pub fn fit_metrics(target: &Target, factors: &CPFactors) -> Result<FitReport> {
    factors.check_covers(target)?;
    let n = target.entries.len();
    let log2 = 2f64.log10();
    let mut logs = Vec::with_capacity(n);
    let (mut within, mut sign_errors) = (0usize, 0usize);
    let (mut ss_res, mut loss) = (0.0, 0.0);
    for e in &target.entries {
        let yhat = factors.reconstruct(e.triplet);
        let ratio = e.y / yhat;
        let l = ratio.abs().log10();
        logs.push(l);
        if ratio > 0.0 {
            if l.abs() <= log2 * (1.0 + 1e-12) {
                within += 1;
            }
        } else {
            sign_errors += 1;
        }
        ss_res += (e.y - yhat).powi(2);
        loss += (1.0 - yhat / e.y).powi(2);
    }
    let nf = n.max(1) as f64;
    let mean_log = logs.iter().sum::<f64>() / nf;
    let sigma_log = (logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / nf).sqrt();
    let mean_y = target.entries.iter().map(|e| e.y).sum::<f64>() / nf;
    let ss_tot: f64 = target.entries.iter().map(|e| (e.y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(FitReport {
        sigma_log,
        frac_within_2x: within as f64 / nf,
        r_squared,
        loss: loss / nf,
        n_entries: n,
        sign_errors,
    })
}

/// Minimum-norm least-squares solution of `m x = rhs`.
fn lstsq(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd.solve(rhs, smax * 1e-13).map_err(|_| Error::SingularUpdate)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularUpdate)
    }
}

#[derive(Clone, Copy)]
enum Mode {
    A,
    B,
    C,
}

/// Exact minimization of the weighted loss over one factor matrix.
fn update(target: &Target, f: &mut CPFactors, by_row: &[Vec<usize>], mode: Mode) -> Result<()> {
    let rank = f.rank;
    for (l, rows) in by_row.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let mut m = DMatrix::zeros(rows.len(), rank);
        for (i, &k) in rows.iter().enumerate() {
            let e = target.entries[k];
            let t = e.triplet;
            let (p, q) = match mode {
                Mode::A => (&f.b[t.l2 as usize], &f.c[t.l3 as usize]),
                Mode::B => (&f.a[t.l1 as usize], &f.c[t.l3 as usize]),
                Mode::C => (&f.a[t.l1 as usize], &f.b[t.l2 as usize]),
            };
            for r in 0..rank {
                m[(i, r)] = p[r] * q[r] / e.y;
            }
        }
        let x = lstsq(m, &DVector::from_element(rows.len(), 1.0))?;
        let row = match mode {
            Mode::A => &mut f.a[l],
            Mode::B => &mut f.b[l],
            Mode::C => &mut f.c[l],
        };
        row.copy_from_slice(x.as_slice());
    }
    Ok(())
}

/// One full fit with its loss after every sweep.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub factors: CPFactors,
    pub report: FitReport,
    pub restart: usize,
    /// Loss at initialization, then after each sweep.
    pub loss_history: Vec<f64>,
}

fn fit_once(target: &Target, rank: usize, seed: u64) -> Result<(CPFactors, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = CPFactors::random(target.lmax, rank, &mut rng);
    let rows = |key: fn(&Triplet) -> u32| {
        let mut by = vec![Vec::new(); target.lmax as usize + 1];
        for (k, e) in target.entries.iter().enumerate() {
            by[key(&e.triplet) as usize].push(k);
        }
        by
    };
    let (rows_a, rows_b, rows_c) = (rows(|t| t.l1), rows(|t| t.l2), rows(|t| t.l3));
    let mut history = vec![weighted_loss(target, &f)];
    for _ in 0..MAX_SWEEPS {
        update(target, &mut f, &rows_a, Mode::A)?;
        update(target, &mut f, &rows_b, Mode::B)?;
        update(target, &mut f, &rows_c, Mode::C)?;
        f.balance();
        let loss = weighted_loss(target, &f);
        let prev = *history.last().unwrap();
        history.push(loss);
        if !loss.is_finite() {
            return Err(Error::SingularUpdate);
        }
        if loss == 0.0 || (prev - loss).abs() <= REL_LOSS_TOLERANCE * prev {
            break;
        }
    }
    Ok((f, history))
}

/// Best of `restarts` seeded ALS runs (seeds `seed + k`), with its loss history.
pub fn fit_cp_detailed(target: &Target, rank: usize, restarts: usize, seed: u64) -> Result<FitOutcome> {
    if rank == 0 {
        return Err(Error::Shape("rank must be at least 1".into()));
    }
    if target.is_empty() {
        return Err(Error::Shape("target has no entries".into()));
    }
    let runs: Vec<_> = (0..restarts.max(1))
        .into_par_iter()
        .map(|k| fit_once(target, rank, seed.wrapping_add(k as u64)))
        .collect();
    let mut best: Option<(usize, CPFactors, Vec<f64>)> = None;
    for (k, run) in runs.into_iter().enumerate() {
        let Ok((f, hist)) = run else { continue };
        let loss = *hist.last().unwrap();
        if best.as_ref().is_none_or(|(_, _, h)| loss < *h.last().unwrap()) {
            best = Some((k, f, hist));
        }
    }
    let (restart, factors, loss_history) = best.ok_or(Error::SingularUpdate)?;
    let report = fit_metrics(target, &factors)?;
    Ok(FitOutcome {
        factors,
        report,
        restart,
        loss_history,
    })
}

/// Best-of-restarts CP fit.
pub fn fit_cp(target: &Target, rank: usize, restarts: usize, seed: u64) -> Result<(CPFactors, FitReport)> {
    let out = fit_cp_detailed(target, rank, restarts, seed)?;
    Ok((out.factors, out.report))
}

/// Folds CP factors into rank-R layer weights: rank `r` becomes
/// `(c[.][r] w_out, a[.][r] w_in1, b[.][r] w_in2)`.
pub fn normalized_init_weights(factors: &CPFactors, base: &MimoWeights) -> Result<MimoWeights> {
    let triples = match base {
        MimoWeights::RankR(ts) => ts,
        _ => return Err(Error::Shape("base weights must be rank-R".into())),
    };
    if triples.len() != factors.rank {
        return Err(Error::Shape(format!(
            "base has rank {}, factors have rank {}",
            triples.len(),
            factors.rank
        )));
    }
    let (b1, b2, b3) = base.bounds()?;
    if b1.max(b2).max(b3) > factors.lmax() {
        return Err(Error::Shape(format!(
            "factors cover l <= {}, weights need {}",
            factors.lmax(),
            b1.max(b2).max(b3)
        )));
    }
    let scale = |w: &[f64], m: &[Vec<f64>], r: usize| w.iter().enumerate().map(|(l, x)| x * m[l][r]).collect();
    Ok(MimoWeights::RankR(
        triples
            .iter()
            .enumerate()
            .map(|(r, t)| FactorTriple {
                w_out: scale(&t.w_out, &factors.c, r),
                w_in1: scale(&t.w_in1, &factors.a, r),
                w_in2: scale(&t.w_in2, &factors.b, r),
            })
            .collect(),
    ))
}
