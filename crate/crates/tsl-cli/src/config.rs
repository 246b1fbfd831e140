//! Experiment configuration and input descriptors.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsl_core::class_estimates::Mode;
use tsl_core::kernels::{AnalyzeOptions, KernelParams};
use tsl_core::pde_examples::Symbol;
use tsl_core::regvar_besov::RegVarWeight;
use tsl_core::signals::{ComponentNorm, NormKind, NormSpec, Signal};
use tsl_core::{ScaleLadder, UniformGrid};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    /// Relative paths resolve against the directory holding the config file.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub steps: Vec<StepConfig>,
}

impl Config {
    pub fn load(path: &Path) -> Result<(Config, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let cfg: Config =
            serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, s) in self.steps.iter().enumerate() {
            if !seen.insert(s.name(i)) {
                return Err(CliError::config(format!("duplicate step name `{}`", s.name(i))));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Overrides the derived seed `config.seed + index`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub op: Op,
}

impl StepConfig {
    pub fn name(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("{:02}-{}", index, self.op.label()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Op {
    AnalyzeKernel {
        kernel: KernelRef,
        #[serde(default)]
        options: AnalyzeOptions,
        /// Also write the sampled kernel as TBRG1.
        #[serde(default)]
        save_samples: bool,
    },
    Transform {
        signal: SignalRef,
        kernel: KernelRef,
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default)]
        ladder: Option<LadderSpec>,
        /// Wavelet transform `W_ψ f = M_{ψ̄(−·)}` instead of `M_φ`.
        #[serde(default)]
        wavelet: bool,
        #[serde(default)]
        csv: bool,
    },
    Reconstruct {
        signal: SignalRef,
        psi: KernelRef,
        /// Defaults to `psi`.
        #[serde(default)]
        eta: Option<KernelRef>,
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default)]
        ladder: Option<LadderSpec>,
    },
    ClassEstimate {
        signal: SignalRef,
        kernel: KernelRef,
        #[serde(default)]
        avg_kernel: Option<KernelRef>,
        mode: Mode,
        space: Space,
        #[serde(default)]
        k_max: Option<u32>,
        #[serde(default)]
        l_max: Option<u32>,
        #[serde(default)]
        grid: Option<GridSpec>,
    },
    Besov {
        signal: SignalRef,
        pair0: KernelRef,
        pair: KernelRef,
        order: f64,
        p: Exponent,
        q: Exponent,
        /// Defaults to `y^order`.
        #[serde(default)]
        weight: Option<RegVarWeight>,
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default)]
        ladder: Option<LadderSpec>,
        /// Exit with the divergence code when the norm is infinite.
        #[serde(default)]
        require_finite: bool,
    },
    BesovEquiv {
        signals: SignalSet,
        pair_a: PairSpec,
        pair_b: PairSpec,
        order: f64,
        p: Exponent,
        q: Exponent,
        #[serde(default)]
        weight: Option<RegVarWeight>,
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default)]
        ladder: Option<LadderSpec>,
    },
    HeatDemo {
        signal: SignalRef,
        times: Vec<f64>,
        /// Defaults to the heat symbol `ξ²`.
        #[serde(default)]
        symbol: Option<Symbol>,
        #[serde(default)]
        grid: Option<GridSpec>,
    },
    LaplaceDemo {
        signal: SignalRef,
        /// `(x, σ)` with `σ > 0`; defaults to a 4×4 block.
        #[serde(default)]
        points: Option<Vec<(f64, f64)>>,
        #[serde(default)]
        cr_step: Option<f64>,
    },
    RvProperties {
        q: Exponent,
        weight: RegVarWeight,
        #[serde(default = "default_trials")]
        trials: usize,
    },
}

fn default_trials() -> usize {
    100
}

impl Op {
    pub fn label(&self) -> &'static str {
        match self {
            Op::AnalyzeKernel { .. } => "analyze-kernel",
            Op::Transform { .. } => "transform",
            Op::Reconstruct { .. } => "reconstruct",
            Op::ClassEstimate { .. } => "class-estimate",
            Op::Besov { .. } => "besov",
            Op::BesovEquiv { .. } => "besov-equiv",
            Op::HeatDemo { .. } => "heat-demo",
            Op::LaplaceDemo { .. } => "laplace-demo",
            Op::RvProperties { .. } => "rv-properties",
        }
    }
}

/// A catalog name, or a full descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelRef {
    Name(String),
    Desc(KernelDesc),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelDesc {
    Catalog {
        name: String,
        #[serde(default)]
        params: KernelParams,
    },
    /// Spatial samples in a TBRG1 file: one real component or `(re, im)` pairs.
    Samples {
        #[serde(default)]
        name: Option<String>,
        path: PathBuf,
    },
    /// Descriptor stored in a separate JSON file.
    File { path: PathBuf },
    /// `φ̂ = e^{P(iu)}` on the symbol's cone.
    Symbol { symbol: Symbol },
    /// Reconstruction wavelet built from `phi` with plateau annulus `[inner, outer]`.
    Reconstruction {
        phi: Box<KernelRef>,
        inner: f64,
        outer: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub phi0: KernelRef,
    pub phi: KernelRef,
}

/// A signal file (JSON, optional TBRG1 smooth payload), or the signal inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalRef {
    File {
        file: PathBuf,
        #[serde(default)]
        payload: Option<PathBuf>,
    },
    Inline(Signal),
}

/// A directory of `*.json` signal files, or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSet {
    Dir(PathBuf),
    List(Vec<SignalRef>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<UniformGrid, CliError> {
        UniformGrid::centered_line(self.half_width, self.points).map_err(CliError::from)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LadderSpec {
    Geometric { y_min: f64, y_max: f64, per_octave: usize },
    Explicit { scales: Vec<f64> },
}

impl LadderSpec {
    pub fn build(&self) -> Result<ScaleLadder, CliError> {
        match self {
            LadderSpec::Geometric { y_min, y_max, per_octave } => ScaleLadder::per_octave(*y_min, *y_max, *per_octave),
            LadderSpec::Explicit { scales } => ScaleLadder::explicit(scales.clone()),
        }
        .map_err(CliError::from)
    }
}

/// A Lebesgue exponent: a number `≥ 1` or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inf" | "infinity" | "∞" => Ok(Exponent(f64::INFINITY)),
            _ => s.parse::<f64>().map(Exponent).map_err(|e| format!("bad exponent `{s}`: {e}")),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Target space `E` written as `lp:P`, `cb`, `uc` or `wsup:N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Space(pub NormSpec);

impl std::str::FromStr for Space {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let kind = match s.split_once(':') {
            None if s == "cb" => NormKind::Cb,
            None if s == "uc" => NormKind::Uc,
            Some(("lp", p)) => NormKind::Lp(p.parse::<Exponent>()?.0),
            Some(("wsup", n)) => NormKind::WeightedSup(n.parse().map_err(|e| format!("bad weight order `{n}`: {e}"))?),
            _ => return Err(format!("unknown space `{s}` (expected lp:P, cb, uc or wsup:N)")),
        };
        Ok(Space(NormSpec { kind, component_norm: ComponentNorm::L2 }))
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.kind {
            NormKind::Lp(p) => write!(f, "lp:{}", Exponent(p)),
            NormKind::Cb => write!(f, "cb"),
            NormKind::Uc => write!(f, "uc"),
            NormKind::WeightedSup(n) => write!(f, "wsup:{n}"),
        }
    }
}

impl Serialize for Space {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Space {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
