use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsl_cli::config::{
    Config, Exponent, GridSpec, KernelDesc, KernelRef, LadderSpec, Op, PairSpec, SignalRef, SignalSet, Space, StepConfig,
    CONFIG_VERSION,
};
use tsl_cli::{init_threads, run_config_file, run_pipeline, CliError};
use tsl_core::class_estimates::Mode;
use tsl_core::pde_examples::{Cone, Symbol};
use tsl_core::regvar_besov::RegVarWeight;

/// Regularizing transforms, wavelet reconstruction, class estimates and Besov norms.
///
/// Every subcommand runs a one-step pipeline and writes its reports plus `manifest.json`
/// into `--out`. Exit codes: 0 success, 2 config error, 3 hypothesis or precondition
/// failure, 4 divergence where a finite value was required. `TSL_THREADS` caps parallelism.
#[derive(Parser)]
#[command(name = "tsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "tsl-out")]
    out: PathBuf,
    /// Step name; output files are named after it.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SignalArgs {
    /// Signal descriptor (JSON).
    #[arg(long)]
    signal: PathBuf,
    /// TBRG1 samples of the smooth part.
    #[arg(long)]
    payload: Option<PathBuf>,
}

impl SignalArgs {
    fn to_ref(&self) -> SignalRef {
        SignalRef::File { file: self.signal.clone(), payload: self.payload.clone() }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Half width of the centered sample grid.
    #[arg(long, requires = "points")]
    half_width: Option<f64>,
    /// Number of grid points.
    #[arg(long, requires = "half_width")]
    points: Option<usize>,
}

impl GridArgs {
    fn spec(&self) -> Option<GridSpec> {
        Some(GridSpec { half_width: self.half_width?, points: self.points? })
    }
}

#[derive(Args)]
struct LadderArgs {
    #[arg(long, requires_all = ["y_max", "per_octave"])]
    y_min: Option<f64>,
    #[arg(long, requires = "y_min")]
    y_max: Option<f64>,
    /// Scales per octave.
    #[arg(long, requires = "y_min")]
    per_octave: Option<usize>,
}

impl LadderArgs {
    fn spec(&self) -> Option<LadderSpec> {
        Some(LadderSpec::Geometric { y_min: self.y_min?, y_max: self.y_max?, per_octave: self.per_octave? })
    }
}

/// A catalog name, or a path to a kernel descriptor ending in `.json`.
fn kernel_ref(s: &str) -> KernelRef {
    if s.ends_with(".json") {
        KernelRef::Desc(KernelDesc::File { path: PathBuf::from(s) })
    } else {
        KernelRef::Name(s.to_string())
    }
}

/// `power` for `y^α`, or `log:β` for `y^α log(e/y)^β`.
fn weight(s: &str, order: f64) -> Result<RegVarWeight, CliError> {
    match s.split_once(':') {
        None if s == "power" => Ok(RegVarWeight::power(order)),
        Some(("log", b)) => {
            let beta = b.parse().map_err(|e| CliError::config(format!("bad log exponent `{b}`: {e}")))?;
            Ok(RegVarWeight::log_power(order, beta))
        }
        _ => Err(CliError::config(format!("unknown weight `{s}` (expected power or log:BETA)"))),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Kernel analysis: non-degeneracy, index τ, strong non-degeneracy, moments.
    AnalyzeKernel {
        /// Catalog name or kernel descriptor file.
        #[arg(long)]
        kernel: String,
        /// Also write the kernel samples as TBRG1.
        #[arg(long)]
        save_samples: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Regularizing transform M_φ^f on a grid × scale ladder, plus a slow-growth fit.
    Transform {
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long)]
        kernel: String,
        /// Wavelet transform W_ψ f instead of M_φ^f.
        #[arg(long)]
        wavelet: bool,
        /// Also write per-scale CSV.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Wavelet reconstruction c⁻¹ M_η W_ψ f and its relative L² error.
    Reconstruct {
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long)]
        psi: String,
        /// Synthesis wavelet; defaults to psi.
        #[arg(long)]
        eta: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Tauberian class-estimate verdict with per-(k, l) integral table.
    ClassEstimate {
        #[command(flatten)]
        signal: SignalArgs,
        #[arg(long)]
        kernel: String,
        /// Averaging kernel φ₀.
        #[arg(long)]
        avg_kernel: Option<String>,
        #[arg(long, value_parser = ["global", "local"])]
        mode: String,
        /// Target space: lp:P, cb, uc or wsup:N.
        #[arg(long)]
        space: Space,
        #[arg(long)]
        k_max: Option<u32>,
        #[arg(long)]
        l_max: Option<u32>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Besov norm through a Littlewood–Paley pair, with per-scale CSV.
    Besov {
        #[command(flatten)]
        signal: SignalArgs,
        /// Low-pass kernel φ₀.
        #[arg(long)]
        pair0: String,
        /// Band kernel φ.
        #[arg(long)]
        pair: String,
        #[arg(long)]
        order: f64,
        #[arg(long)]
        p: Exponent,
        #[arg(long)]
        q: Exponent,
        /// power or log:BETA.
        #[arg(long, default_value = "power")]
        weight: String,
        /// Exit with code 4 when the norm is infinite.
        #[arg(long)]
        require_finite: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Norm ratios of two Littlewood–Paley pairs over a directory of signals.
    BesovEquiv {
        /// Directory of signal descriptors (*.json).
        #[arg(long)]
        signals: PathBuf,
        #[arg(long)]
        pair0_a: String,
        #[arg(long)]
        pair_a: String,
        #[arg(long)]
        pair0_b: String,
        #[arg(long)]
        pair_b: String,
        #[arg(long)]
        order: f64,
        #[arg(long)]
        p: Exponent,
        #[arg(long)]
        q: Exponent,
        #[arg(long, default_value = "power")]
        weight: String,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Evolution under ∂_t U = P(∂_x) U against the transform at y = t^{1/d}.
    HeatDemo {
        #[command(flatten)]
        signal: SignalArgs,
        /// Evolution times (repeatable).
        #[arg(long = "t", required = true)]
        times: Vec<f64>,
        /// Symbol coefficient c in P(ξ) = c ξ^d.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        coeff: f64,
        #[arg(long, default_value_t = 2)]
        degree: u32,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Laplace transform of h on the half line: direct pairing against the transform route.
    LaplaceDemo {
        #[command(flatten)]
        signal: SignalArgs,
        /// Probe point `x,sigma` (repeatable); defaults to a 4×4 block.
        #[arg(long = "point", value_parser = parse_point)]
        points: Vec<(f64, f64)>,
        /// Step of the Cauchy–Riemann residual check.
        #[arg(long)]
        cr_step: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a JSON experiment config.
    Run {
        config: PathBuf,
    },
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,sigma, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(x)?, p(y)?))
}

fn single(common: Common, op: Op) -> Result<(), CliError> {
    let cfg = Config {
        version: CONFIG_VERSION,
        output_dir: common.out,
        seed: common.seed,
        steps: vec![StepConfig { name: common.name, seed: None, op }],
    };
    let bytes = serde_json::to_vec(&cfg).map_err(|e| CliError::config(e.to_string()))?;
    run_pipeline(cfg, std::path::Path::new(""), &bytes).map(|_| ())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::AnalyzeKernel { kernel, save_samples, common } => single(
            common,
            Op::AnalyzeKernel { kernel: kernel_ref(&kernel), options: Default::default(), save_samples },
        ),
        Command::Transform { signal, kernel, wavelet, csv, grid, ladder, common } => single(
            common,
            Op::Transform {
                signal: signal.to_ref(),
                kernel: kernel_ref(&kernel),
                grid: grid.spec(),
                ladder: ladder.spec(),
                wavelet,
                csv,
            },
        ),
        Command::Reconstruct { signal, psi, eta, grid, ladder, common } => single(
            common,
            Op::Reconstruct {
                signal: signal.to_ref(),
                psi: kernel_ref(&psi),
                eta: eta.as_deref().map(kernel_ref),
                grid: grid.spec(),
                ladder: ladder.spec(),
            },
        ),
        Command::ClassEstimate { signal, kernel, avg_kernel, mode, space, k_max, l_max, grid, common } => single(
            common,
            Op::ClassEstimate {
                signal: signal.to_ref(),
                kernel: kernel_ref(&kernel),
                avg_kernel: avg_kernel.as_deref().map(kernel_ref),
                mode: if mode == "global" { Mode::Global } else { Mode::Local },
                space,
                k_max,
                l_max,
                grid: grid.spec(),
            },
        ),
        Command::Besov { signal, pair0, pair, order, p, q, weight: w, require_finite, grid, ladder, common } => {
            let weight = Some(weight(&w, order)?);
            single(
                common,
                Op::Besov {
                    signal: signal.to_ref(),
                    pair0: kernel_ref(&pair0),
                    pair: kernel_ref(&pair),
                    order,
                    p,
                    q,
                    weight,
                    grid: grid.spec(),
                    ladder: ladder.spec(),
                    require_finite,
                },
            )
        }
        Command::BesovEquiv { signals, pair0_a, pair_a, pair0_b, pair_b, order, p, q, weight: w, grid, ladder, common } => {
            let weight = Some(weight(&w, order)?);
            single(
                common,
                Op::BesovEquiv {
                    signals: SignalSet::Dir(signals),
                    pair_a: PairSpec { phi0: kernel_ref(&pair0_a), phi: kernel_ref(&pair_a) },
                    pair_b: PairSpec { phi0: kernel_ref(&pair0_b), phi: kernel_ref(&pair_b) },
                    order,
                    p,
                    q,
                    weight,
                    grid: grid.spec(),
                    ladder: ladder.spec(),
                },
            )
        }
        Command::HeatDemo { signal, times, coeff, degree, grid, common } => {
            let symbol = Symbol { coeff: coeff.into(), degree, cone: Cone::Line };
            single(common, Op::HeatDemo { signal: signal.to_ref(), times, symbol: Some(symbol), grid: grid.spec() })
        }
        Command::LaplaceDemo { signal, points, cr_step, common } => single(
            common,
            Op::LaplaceDemo {
                signal: signal.to_ref(),
                points: if points.is_empty() { None } else { Some(points) },
                cr_step,
            },
        ),
        Command::Run { config } => run_config_file(&config).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code as u8)
        }
    }
}
