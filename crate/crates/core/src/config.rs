//! Run configuration: one strict TOML file per run, unknown keys rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::envelope::{dif_grid, select_chi, Chi, EnvelopeModel, HistoryGrowth};
use crate::kernel::{BeamParams, FitWeighting, KernelSpec, PronyFitOptions};
use crate::simulate::{HistoryProfile, InitialData, MemoryConfig, Profile, SimConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub beam: BeamBlock,
    pub kernel: KernelBlock,
    #[serde(default)]
    pub history: HistoryBlock,
    #[serde(default)]
    pub initial: InitialBlock,
    pub space: SpaceBlock,
    pub time: TimeBlock,
    #[serde(default)]
    pub memory: MemoryBlock,
    pub envelope: Option<EnvelopeBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub overrides: OverridesBlock,
    /// directory relative paths resolve against
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamBlock {
    pub rho1: f64,
    pub rho2: f64,
    pub b: f64,
    pub kappa: f64,
    #[serde(rename = "L")]
    pub length: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelBlock {
    PowerLaw { a: f64, nu: f64 },
    Exponential { a: f64, lambda: f64 },
    /// `[[a_1, b_1], [a_2, b_2], …]`
    Prony { terms: Vec<[f64; 2]> },
    /// two-column CSV `t,g` with a header row
    Table { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HistoryBlock {
    #[default]
    Zero,
    /// the initial strain at every age
    Frozen,
    PowerGrowth {
        r: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

/// Nodal profiles in `x/L`.
#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    #[default]
    Zero,
    Sine {
        #[serde(default = "one_u32")]
        mode: u32,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Cosine {
        #[serde(default = "one_u32")]
        mode: u32,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// piecewise linear, zero at both ends, `amplitude` at `peak`
    Hat {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "half")]
        peak: f64,
    },
}

impl Shape {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Shape::Zero => 0.0,
            Shape::Sine { mode, amplitude } => amplitude * (mode as f64 * PI * y).sin(),
            Shape::Cosine { mode, amplitude } => amplitude * (mode as f64 * PI * y).cos(),
            Shape::Hat { amplitude, peak } => {
                if y <= peak {
                    amplitude * y / peak
                } else {
                    amplitude * (1.0 - y) / (1.0 - peak)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Shape::Hat { peak, .. } if !(peak > 0.0 && peak < 1.0) => {
                Err(invalid(format!("hat peak {peak} must lie in (0, 1)")))
            }
            Shape::Sine { amplitude, .. } | Shape::Cosine { amplitude, .. } | Shape::Hat { amplitude, .. }
                if !amplitude.is_finite() =>
            {
                Err(invalid("shape amplitude must be finite"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    #[serde(default)]
    pub phi: Shape,
    #[serde(default)]
    pub psi: Shape,
    #[serde(default)]
    pub phi_t: Shape,
    #[serde(default)]
    pub psi_t: Shape,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceBlock {
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    #[default]
    Direct,
    Prony,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Absolute,
    #[default]
    Relative,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryBlock {
    #[serde(default)]
    pub mode: MemoryMode,
    /// stored history window of the direct path
    #[serde(rename = "Th")]
    pub th: Option<f64>,
    pub eps: Option<f64>,
    #[serde(default = "default_terms")]
    pub prony_terms: usize,
    /// defaults to `50 T`
    pub prony_horizon: Option<f64>,
    #[serde(default = "default_fit_tol")]
    pub prony_tol: f64,
    #[serde(default)]
    pub prony_weighting: Weighting,
}

impl Default for MemoryBlock {
    fn default() -> Self {
        Self {
            mode: MemoryMode::Direct,
            th: None,
            eps: None,
            prony_terms: default_terms(),
            prony_horizon: None,
            prony_tol: default_fit_tol(),
            prony_weighting: Weighting::Relative,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeBlock {
    /// defaults to the kernel exponent
    pub nu: Option<f64>,
    /// defaults to the history growth exponent
    pub r: Option<f64>,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "one")]
    pub c_over_d: f64,
    #[serde(default = "half")]
    pub q0: f64,
    /// fixed `λ` of `χ = λ(1+t)^{−p}`; absent means the largest certified power of 1/2
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "one_usize")]
    pub every: usize,
    #[serde(default = "default_path")]
    pub path: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { every: 1, path: default_path() }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverridesBlock {
    #[serde(default)]
    pub allow_inadmissible: bool,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn one_u32() -> u32 {
    1
}
fn one_usize() -> usize {
    1
}
fn default_terms() -> usize {
    40
}
fn default_fit_tol() -> f64 {
    1e-6
}
fn default_c1() -> f64 {
    0.1
}
fn default_path() -> PathBuf {
    PathBuf::from("energy.csv")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// Parses and validates; `base_dir` anchors relative paths.
    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.beam()?;
        if self.space.n < 4 {
            return Err(invalid(format!("space.N = {} must be at least 4", self.space.n)));
        }
        let TimeBlock { dt, t_final } = self.time;
        if !(dt > 0.0 && dt.is_finite()) || !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(invalid(format!("need time.dt > 0 and time.T ≥ 0, got dt={dt}, T={t_final}")));
        }
        if self.output.every == 0 {
            return Err(invalid("output.every must be at least 1"));
        }
        for s in [self.initial.phi, self.initial.psi, self.initial.phi_t, self.initial.psi_t] {
            s.validate()?;
        }
        if let HistoryBlock::PowerGrowth { r, amplitude } = self.history {
            HistoryProfile::power_growth(r, amplitude).map_err(invalid)?;
        }
        let m = &self.memory;
        if m.th.is_some_and(|t| !(t > 0.0)) || m.eps.is_some_and(|e| !(e > 0.0)) {
            return Err(invalid("memory.Th and memory.eps must be positive"));
        }
        if m.prony_terms == 0 || !(m.prony_tol > 0.0) || m.prony_horizon.is_some_and(|h| !(h > 0.0)) {
            return Err(invalid("memory.prony_terms, prony_tol and prony_horizon must be positive"));
        }
        if let Some(e) = &self.envelope {
            if !matches!(self.kernel, KernelBlock::PowerLaw { .. }) {
                return Err(invalid("the envelope block needs a power_law kernel"));
            }
            if e.lambda.is_some_and(|l| !(l > 0.0)) {
                return Err(invalid("envelope.lambda must be positive"));
            }
        }
        // table files are read here so that a bad kernel aborts before any work
        self.kernel()?;
        Ok(())
    }

    pub fn beam(&self) -> Result<BeamParams<f64>> {
        let b = self.beam;
        BeamParams::new(b.rho1, b.rho2, b.b, b.kappa, b.length).map_err(invalid)
    }

    pub fn kernel(&self) -> Result<KernelSpec<f64>> {
        match &self.kernel {
            KernelBlock::PowerLaw { a, nu } => KernelSpec::power_law(*a, *nu),
            KernelBlock::Exponential { a, lambda } => KernelSpec::exponential(*a, *lambda),
            KernelBlock::Prony { terms } => KernelSpec::prony(terms.iter().map(|t| (t[0], t[1])).collect()),
            KernelBlock::Table { path } => {
                let (t, g) = read_table(&self.resolve(path))?;
                KernelSpec::tabulated(t, g)
            }
        }
        .map_err(invalid)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output.path)
    }

    pub fn history(&self) -> HistoryProfile<f64> {
        match self.history {
            HistoryBlock::Zero => HistoryProfile::Zero,
            HistoryBlock::Frozen => HistoryProfile::frozen(),
            HistoryBlock::PowerGrowth { r, amplitude } => HistoryProfile::PowerGrowth { r, amplitude },
        }
    }

    pub fn initial(&self) -> InitialData<f64> {
        let l = self.beam.length;
        let lift = |s: Shape| -> Profile<f64> { Arc::new(move |x: f64| s.eval(x / l)) };
        InitialData {
            phi: lift(self.initial.phi),
            psi: lift(self.initial.psi),
            phi_t: lift(self.initial.phi_t),
            psi_t: lift(self.initial.psi_t),
        }
    }

    pub fn memory(&self) -> MemoryConfig<f64> {
        let m = &self.memory;
        match m.mode {
            MemoryMode::Direct => MemoryConfig::Direct { window: m.th, eps: m.eps },
            MemoryMode::Prony => {
                let horizon = m.prony_horizon.unwrap_or(50.0 * self.time.t_final.max(1.0));
                let weighting = match m.prony_weighting {
                    Weighting::Absolute => FitWeighting::Absolute,
                    Weighting::Relative => FitWeighting::Relative,
                };
                let fit = PronyFitOptions::new(m.prony_terms, horizon, m.prony_tol).weighting(weighting);
                MemoryConfig::Prony { spec: None, fit }
            }
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig<f64>> {
        Ok(SimConfig {
            beam: self.beam()?,
            kernel: self.kernel()?,
            n: self.space.n,
            dt: self.time.dt,
            t_final: self.time.t_final,
            history: self.history(),
            initial: self.initial(),
            memory: self.memory(),
            allow_inadmissible: self.overrides.allow_inadmissible,
        })
    }

    /// `‖s(·,−σ)‖² = c(1+σ)^r` of the configured history, given `‖s(·,0)‖²`.
    pub fn history_growth(&self, s0_norm_sq: f64) -> HistoryGrowth<f64> {
        match self.history {
            HistoryBlock::Zero => HistoryGrowth::zero(),
            HistoryBlock::Frozen => HistoryGrowth { c: s0_norm_sq, r: 0.0 },
            HistoryBlock::PowerGrowth { r, amplitude } => HistoryGrowth { c: amplitude * amplitude * s0_norm_sq, r },
        }
    }

    /// Certified envelope of the power-law case over `[0, T]`, or `None` without an
    /// envelope block.
    pub fn envelope_model(&self, s0_norm_sq: f64) -> Result<Option<EnvelopeModel<f64>>> {
        let Some(e) = &self.envelope else { return Ok(None) };
        let KernelBlock::PowerLaw { a, nu: k_nu } = self.kernel else {
            return Err(invalid("the envelope block needs a power_law kernel"));
        };
        let nu = e.nu.unwrap_or(k_nu);
        let growth = self.history_growth(s0_norm_sq);
        let r = e.r.unwrap_or(growth.r);
        let horizon = self.time.t_final.max(1.0);
        let model = EnvelopeModel::power_law(a, nu, growth, e.c1, e.q0, horizon).map_err(invalid)?;
        let grid = dif_grid(horizon);
        let model = match e.lambda {
            Some(lambda) => {
                let p = crate::envelope::chi_exponent(nu, r).map_err(invalid)?;
                model.with_chi(Chi::Power { lambda, p }).certify(e.c2, e.c_over_d, &grid)
            }
            None => select_chi(model, nu, r, e.c2, e.c_over_d, &grid),
        }
        .map_err(invalid)?;
        Ok(Some(model))
    }
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let io = |e: &dyn std::fmt::Display| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io(&e))?;
    let (mut t, mut g) = (Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| io(&e))?;
        let field = |j: usize| -> Result<f64> {
            row.get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| invalid(format!("{}: row {} needs two numeric columns", path.display(), i + 2)))
        };
        t.push(field(0)?);
        g.push(field(1)?);
    }
    Ok((t, g))
}
