use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use so3tp::coupling::{build_table, closed_form, CouplingScalars};
use so3tp::lowrank::{build_target, fit_cp, CPFactors, TargetKind};
use so3tp::quadrature::BasisTable;
use so3tp::tensorprod::{
    bench_scaling, cgtp, integral_tp, method_slope, BenchMethod, BenchRecord, IrrepFeature, Kernel,
};
use so3tp::verify::{self, Injection, VerifyConfig};
use so3tp::Triplet;

use crate::{Cli, Command, Format, GlobalArgs, Source, TpMethod, EXIT_USAGE, EXIT_VERIFY_FAILED};

/// A command failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_USAGE,
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Numerical breakdowns are reported like verification failures; everything
/// else stems from the inputs.
impl From<so3tp::Error> for CliError {
    fn from(e: so3tp::Error) -> Self {
        use so3tp::Error as E;
        let code = match e.root() {
            E::NonRealResult { .. } | E::InconsistentRatio { .. } | E::SingularUpdate | E::RatioSign(_) => {
                EXIT_VERIFY_FAILED
            }
            _ => EXIT_USAGE,
        };
        CliError {
            message: e.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

type CmdResult = Result<u8, CliError>;

fn emit(global: &GlobalArgs, text: &str) -> Result<(), CliError> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &global.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::usage(format!("{}: {e}", path.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn run(cli: &Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::Coeffs { lmax, blocks, source } => coeffs(g, *lmax, *blocks, *source),
        Command::Verify {
            lmax,
            pairs,
            layer_lmax,
            layer_rank,
            inject_flip,
        } => {
            let cfg = VerifyConfig {
                lmax: *lmax,
                quadrature: g.quadrature.clone(),
                seed: g.seed,
                pairs: *pairs,
                layer_lmax: *layer_lmax,
                layer_rank: *layer_rank,
                inject: inject_flip.map(Injection::FlipVtilde),
            };
            verify_cmd(g, &cfg)
        }
        Command::Tp {
            method,
            l1,
            l2,
            l3,
            h1,
            h2,
        } => tp(g, *method, Triplet::new(*l1, *l2, *l3), h1, h2),
        Command::FitNorm {
            target,
            lmax,
            rank,
            restarts,
            sweep_lmax,
            sweep_ranks,
            sweep_csv,
        } => {
            let sweep = Sweep {
                lmax: if sweep_lmax.is_empty() {
                    vec![*lmax]
                } else {
                    sweep_lmax.clone()
                },
                ranks: if sweep_ranks.is_empty() {
                    vec![*rank]
                } else {
                    sweep_ranks.clone()
                },
                csv: sweep_csv.as_deref(),
            };
            fit_norm(g, *target, *lmax, *rank, *restarts, &sweep)
        }
        Command::Bench {
            l_values,
            rank,
            repeats,
            methods,
        } => bench(g, l_values, *rank, *repeats, methods),
    }
}

fn coeffs(g: &GlobalArgs, lmax: u32, blocks: bool, source: Source) -> CmdResult {
    let mut table = match source {
        Source::Quadrature => build_table(lmax, &g.quadrature)?,
        Source::ClosedForm => closed_form(lmax)?,
    };
    match g.format.unwrap_or(Format::Json) {
        Format::Json => {
            if blocks {
                table.attach_cg_blocks()?;
            }
            emit(g, &table.to_json()?)?;
        }
        Format::Csv => {
            if blocks {
                return Err(CliError::usage("--blocks needs --format json"));
            }
            emit(g, &coeffs_csv(&table))?;
        }
    }
    Ok(0)
}

fn coeffs_csv(table: &CouplingScalars) -> String {
    let mut out = String::from("l1,l2,l3,parity,G_tilde,V_tilde,Lambda_im,Gamma\n");
    for r in &table.records {
        let parity = if r.triplet().is_antisymmetric() { "odd" } else { "even" };
        let _ = writeln!(
            out,
            "{},{},{},{parity},{:e},{:e},{:e},{:e}",
            r.l1, r.l2, r.l3, r.g_tilde, r.v_tilde, r.lambda_im, r.gamma
        );
    }
    out
}

fn verify_cmd(g: &GlobalArgs, cfg: &VerifyConfig) -> CmdResult {
    let report = verify::run(cfg)?;
    match g.format.unwrap_or(Format::Json) {
        Format::Json => emit(g, &json(&report)?)?,
        Format::Csv => {
            let mut out = String::from("check,passed,max_error,tolerance,checked,failures\n");
            for c in &report.checks {
                let failures: Vec<String> = c.failures.iter().map(|t| t.to_string()).collect();
                let _ = writeln!(
                    out,
                    "{},{},{:e},{:e},{},\"{}\"",
                    c.name,
                    c.passed,
                    c.max_error,
                    c.tolerance,
                    c.checked,
                    failures.join(" ")
                );
            }
            emit(g, &out)?;
        }
    }
    for c in report.failed() {
        let failures: Vec<String> = c.failures.iter().map(|t| t.to_string()).collect();
        eprintln!(
            "FAIL {}: max error {:e} (tolerance {:e}) at {}",
            c.name,
            c.max_error,
            c.tolerance,
            failures.join(" ")
        );
    }
    Ok(if report.passed { 0 } else { EXIT_VERIFY_FAILED })
}

fn read_feature(arg: &str, l: u32) -> Result<IrrepFeature, CliError> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{path}: {e}")))?,
        None => arg.to_string(),
    };
    let coeffs: Vec<f64> =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("feature must be a JSON array: {e}")))?;
    Ok(IrrepFeature::new(l, coeffs)?)
}

#[derive(Serialize)]
struct TpOutput {
    method: &'static str,
    l1: u32,
    l2: u32,
    l3: u32,
    output: Vec<f64>,
}

fn tp(g: &GlobalArgs, method: TpMethod, t: Triplet, h1: &str, h2: &str) -> CmdResult {
    let t = t.require_admissible()?;
    let h1 = read_feature(h1, t.l1)?;
    let h2 = read_feature(h2, t.l2)?;
    let (name, out) = match method {
        TpMethod::Cgtp => ("cgtp", cgtp(&h1, &h2, t.l3)?),
        _ => {
            let (name, kernel) = match method {
                TpMethod::Gtp => ("gtp", Kernel::Product),
                TpMethod::Vstp => ("vstp", Kernel::Cross),
                _ => ("combined", Kernel::Combined),
            };
            let lmax = t.max_l() as usize;
            let table = BasisTable::new(g.quadrature.grid_for(t.sum() as usize)?, lmax)?;
            (name, integral_tp(kernel, &h1, &h2, t.l3, &table)?)
        }
    };
    match g.format.unwrap_or(Format::Json) {
        Format::Json => emit(
            g,
            &json(&TpOutput {
                method: name,
                l1: t.l1,
                l2: t.l2,
                l3: t.l3,
                output: out.coeffs,
            })?,
        )?,
        Format::Csv => {
            let mut s = String::from("m,value\n");
            for (m, v) in (-(t.l3 as i64)..).zip(&out.coeffs) {
                let _ = writeln!(s, "{m},{v:e}");
            }
            emit(g, &s)?;
        }
    }
    Ok(0)
}

struct Sweep<'a> {
    lmax: Vec<u32>,
    ranks: Vec<usize>,
    csv: Option<&'a Path>,
}

#[derive(Serialize)]
struct FitOutput {
    target: TargetKind,
    lmax: u32,
    rank: usize,
    restarts: usize,
    seed: u64,
    factors: CPFactors,
    sigma_log: f64,
    frac_within_2x: f64,
    r_squared: f64,
    sign_errors: usize,
    n_entries: usize,
}

fn fit_norm(g: &GlobalArgs, kind: TargetKind, lmax: u32, rank: usize, restarts: usize, sweep: &Sweep) -> CmdResult {
    if rank == 0 || sweep.ranks.contains(&0) {
        return Err(CliError::usage("rank must be at least 1"));
    }
    let top = sweep.lmax.iter().copied().chain([lmax]).max().unwrap_or(lmax);
    let table = closed_form(top)?;
    let target_at = |l: u32| {
        let mut t = build_target(kind, &table);
        t.entries.retain(|e| e.triplet.max_l() <= l);
        t.lmax = l;
        t
    };

    let target = target_at(lmax);
    let (factors, report) = fit_cp(&target, rank, restarts, g.seed)?;
    let main = FitOutput {
        target: kind,
        lmax,
        rank,
        restarts,
        seed: g.seed,
        factors,
        sigma_log: report.sigma_log,
        frac_within_2x: report.frac_within_2x,
        r_squared: report.r_squared,
        sign_errors: report.sign_errors,
        n_entries: report.n_entries,
    };

    let wants_csv = g.format == Some(Format::Csv);
    if sweep.csv.is_some() || wants_csv {
        let mut csv = String::from("Lmax,rank,sigma_log,frac_within_2x,r_squared,sign_errors\n");
        for &l in &sweep.lmax {
            let t = target_at(l);
            for &r in &sweep.ranks {
                let (_, rep) = fit_cp(&t, r, restarts, g.seed)?;
                let _ = writeln!(
                    csv,
                    "{l},{r},{:e},{},{:e},{}",
                    rep.sigma_log, rep.frac_within_2x, rep.r_squared, rep.sign_errors
                );
            }
        }
        if let Some(path) = sweep.csv {
            std::fs::write(path, &csv).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        }
        if wants_csv {
            emit(g, &csv)?;
            return Ok(0);
        }
    }
    emit(g, &json(&main)?)?;
    Ok(0)
}

#[derive(Serialize)]
struct BenchOutput {
    records: Vec<BenchRecord>,
    slopes: Vec<(String, Option<f64>)>,
}

fn bench(g: &GlobalArgs, l_values: &[u32], rank: usize, repeats: usize, methods: &[BenchMethod]) -> CmdResult {
    let methods = if methods.is_empty() {
        &BenchMethod::ALL[..]
    } else {
        methods
    };
    let records = bench_scaling(l_values, rank, repeats, methods, g.seed)?;
    match g.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = format!("{}\n", BenchRecord::csv_header());
            for r in &records {
                let _ = writeln!(out, "{}", r.csv_row());
            }
            emit(g, &out)?;
        }
        Format::Json => {
            let slopes = methods
                .iter()
                .map(|&m| (m.name().to_string(), method_slope(&records, m)))
                .collect();
            emit(g, &json(&BenchOutput { records, slopes })?)?;
        }
    }
    Ok(0)
}
