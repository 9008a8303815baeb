mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use so3tp::quadrature::QuadratureSpec;
use so3tp::Triplet;

#[derive(Parser, Debug)]
#[command(name = "so3tp", version, about = "Exact and integral SO(3) tensor products")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Quadrature: `gauss` or `design:<path>` (bare names resolve in SO3TP_DESIGN_DIR).
    #[arg(long, global = true, default_value = "gauss", value_parser = parse_quadrature)]
    pub quadrature: QuadratureSpec,
    /// Write the main output here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TpMethod {
    Cgtp,
    Gtp,
    Vstp,
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Quadrature,
    ClosedForm,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Coupling table (G~, V~, Im Lambda, Gamma) for every admissible triplet.
    Coeffs {
        #[arg(long, allow_hyphen_values = true)]
        lmax: u32,
        /// Include the dense real CG block of every triplet.
        #[arg(long)]
        blocks: bool,
        #[arg(long, value_enum, default_value = "quadrature")]
        source: Source,
    },
    /// Parity, oracle, closed-form and refinement checks; exit 1 on any failure.
    Verify {
        #[arg(long, default_value_t = 6)]
        lmax: u32,
        /// Random input pairs per triplet in the oracle check.
        #[arg(long, default_value_t = 5)]
        pairs: usize,
        #[arg(long, default_value_t = 4)]
        layer_lmax: u32,
        #[arg(long, default_value_t = 3)]
        layer_rank: usize,
        /// Negates V~ at this triplet before checking (negative control).
        #[arg(long, hide = true, value_parser = parse_triplet)]
        inject_flip: Option<Triplet>,
    },
    /// One tensor product of two irrep features.
    Tp {
        #[arg(long, value_enum)]
        method: TpMethod,
        #[arg(long)]
        l1: u32,
        #[arg(long)]
        l2: u32,
        #[arg(long)]
        l3: u32,
        /// First input: a JSON array of 2*l1+1 numbers, or @file.
        #[arg(long, allow_hyphen_values = true)]
        h1: String,
        /// Second input: a JSON array of 2*l2+1 numbers, or @file.
        #[arg(long, allow_hyphen_values = true)]
        h2: String,
    },
    /// Low-rank CP fit of an inverse coupling tensor.
    FitNorm {
        #[arg(long, value_parser = parse_target)]
        target: so3tp::lowrank::TargetKind,
        #[arg(long)]
        lmax: u32,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = so3tp::lowrank::DEFAULT_RESTARTS)]
        restarts: usize,
        /// Lmax values of the sweep CSV (default: --lmax).
        #[arg(long, value_delimiter = ',')]
        sweep_lmax: Vec<u32>,
        /// Ranks of the sweep CSV (default: --rank).
        #[arg(long, value_delimiter = ',')]
        sweep_ranks: Vec<usize>,
        /// Write the sweep CSV here.
        #[arg(long)]
        sweep_csv: Option<PathBuf>,
    },
    /// Layer timings per method and L, as CSV {method, L, R, median_seconds}.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        l_values: Vec<u32>,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, value_delimiter = ',', value_parser = parse_bench_method)]
        methods: Vec<so3tp::tensorprod::BenchMethod>,
    },
}

fn parse_quadrature(s: &str) -> Result<QuadratureSpec, String> {
    QuadratureSpec::parse(s).ok_or_else(|| format!("expected `gauss` or `design:<path>`, got `{s}`"))
}

fn parse_triplet(s: &str) -> Result<Triplet, String> {
    let parts: Vec<i64> = s
        .split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Triplet::from_signed(a, b, c).map_err(|e| e.to_string()),
        _ => Err(format!("expected l1,l2,l3, got `{s}`")),
    }
}

fn parse_target(s: &str) -> Result<so3tp::lowrank::TargetKind, String> {
    so3tp::lowrank::TargetKind::parse(s).ok_or_else(|| format!("expected vtilde|gtilde|gamma|lambda, got `{s}`"))
}

fn parse_bench_method(s: &str) -> Result<so3tp::tensorprod::BenchMethod, String> {
    so3tp::tensorprod::BenchMethod::parse(s)
        .ok_or_else(|| format!("expected cgtp_dense|integral_gaunt|integral_combined, got `{s}`"))
}

pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads as usize)
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
