//! Wall-clock scaling of the dense and integral layers.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{mimo_layer_cgtp, mimo_layer_integral, DenseWeights, FactorTriple, IntegralMode, MimoWeights};
use super::MultiIrrepFeature;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_product_grid, BasisTable};
use crate::wigner::CgTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    CgtpDense,
    IntegralGaunt,
    IntegralCombined,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 3] = [
        BenchMethod::CgtpDense,
        BenchMethod::IntegralGaunt,
        BenchMethod::IntegralCombined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::CgtpDense => "cgtp_dense",
            BenchMethod::IntegralGaunt => "integral_gaunt",
            BenchMethod::IntegralCombined => "integral_combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: BenchMethod,
    #[serde(rename = "L")]
    pub l: u32,
    #[serde(rename = "R")]
    pub r: usize,
    pub median_seconds: f64,
}

impl BenchRecord {
    pub fn csv_header() -> &'static str {
        "method,L,R,median_seconds"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{:e}", self.method.name(), self.l, self.r, self.median_seconds)
    }
}

fn median_time(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?; // warmup
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    Ok(if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    })
}

/// Median layer time per method and `L` (all three degree bounds equal to `L`).
///
/// CG tables, basis tables, inputs and weights are built outside the timed region.
pub fn bench_scaling(
    l_values: &[u32],
    rank: usize,
    repeats: usize,
    methods: &[BenchMethod],
    seed: u64,
) -> Result<Vec<BenchRecord>> {
    if l_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Shape("L values must be strictly ascending".into()));
    }
    if rank == 0 {
        return Err(Error::Shape("rank must be at least 1".into()));
    }
    let mut records = Vec::new();
    for &l in l_values {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(l));
        let h1 = MultiIrrepFeature::random(l, &mut rng);
        let h2 = MultiIrrepFeature::random(l, &mut rng);
        let mut push = |method, secs| {
            records.push(BenchRecord {
                method,
                l,
                r: rank,
                median_seconds: secs,
            })
        };
        if methods.contains(&BenchMethod::CgtpDense) {
            let cg = CgTable::new(l)?;
            let w = DenseWeights::random(l, l, l, &mut rng);
            let secs = median_time(repeats, || mimo_layer_cgtp(&h1, &h2, &w, &cg).map(drop))?;
            push(BenchMethod::CgtpDense, secs);
        }
        let integral: Vec<_> = methods
            .iter()
            .filter_map(|m| match m {
                BenchMethod::IntegralGaunt => Some((*m, IntegralMode::Gaunt)),
                BenchMethod::IntegralCombined => Some((*m, IntegralMode::Combined)),
                BenchMethod::CgtpDense => None,
            })
            .collect();
        if !integral.is_empty() {
            let table = BasisTable::new(gauss_product_grid(3 * l as usize + 2), l as usize)?;
            let w = MimoWeights::RankR((0..rank).map(|_| FactorTriple::random(l, l, l, &mut rng)).collect());
            for (method, mode) in integral {
                let secs = median_time(repeats, || mimo_layer_integral(&h1, &h2, &w, &table, mode).map(drop))?;
                push(method, secs);
            }
        }
    }
    Ok(records)
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope of one method's records.
pub fn method_slope(records: &[BenchRecord], method: BenchMethod) -> Option<f64> {
    let points: Vec<_> = records
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.l as f64, r.median_seconds))
        .collect();
    fit_loglog_slope(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(2.5)))
            .collect();
        assert!((fit_loglog_slope(&pts).unwrap() - 2.5).abs() < 1e-12);
        assert!(fit_loglog_slope(&pts[..1]).is_none());
    }

    #[test]
    fn small_bench_runs() {
        let recs = bench_scaling(&[1, 2], 1, 2, &BenchMethod::ALL, 0).unwrap();
        assert_eq!(recs.len(), 6);
        assert!(recs.iter().all(|r| r.median_seconds > 0.0));
        assert!(bench_scaling(&[2, 1], 1, 1, &BenchMethod::ALL, 0).is_err());
        assert_eq!(BenchMethod::parse("integral_gaunt"), Some(BenchMethod::IntegralGaunt));
    }
}
