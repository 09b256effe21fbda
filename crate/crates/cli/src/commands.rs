use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use viscobeam::config::{ConfigError, HistoryBlock, KernelBlock, RunConfig};
use viscobeam::diagnostics::{compare_to_bound, dissipation_residual, fit_decay as fit, max_energy_increase, DiagError};
use viscobeam::envelope::{Chi, EnvelopeError};
use viscobeam::kernel::{check_admissibility, fit_prony_with, KernelError};
use viscobeam::simulate::{MemoryConfig, SimConfig, SimError, Simulation};
use viscobeam::spatial::{l2_norm_sq, shear_strain, FieldPair, Grid};

use crate::energy_csv::{self, HEADER};

/// Fitted exponents pass within this distance of the target.
pub const EXPONENT_TOL: f64 = 0.25;
/// Observed orders pass at or above this.
pub const ORDER_MIN: f64 = 1.9;

#[derive(Debug)]
pub enum Failure {
    Check(String),
    Config(String),
    Io(String),
    Insufficient(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Insufficient(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Check(m) | Failure::Config(m) | Failure::Io(m) | Failure::Insufficient(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Invalid(_) | KernelError::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Spatial(_) => Failure::Config(e.to_string()),
            SimError::Kernel(k) => k.into(),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<EnvelopeError> for Failure {
    fn from(e: EnvelopeError) -> Self {
        Failure::Check(e.to_string())
    }
}

impl From<DiagError> for Failure {
    fn from(e: DiagError) -> Self {
        match e {
            DiagError::InsufficientData { .. } => Failure::Insufficient(e.to_string()),
            DiagError::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

pub fn check_kernel(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let rep = check_admissibility(&cfg.kernel()?, &cfg.beam()?)?;
    write!(out, "{}", rep.to_key_values())?;
    writeln!(out, "pass={}", rep.passes())?;
    if rep.passes() {
        Ok(())
    } else {
        Err(Failure::Check(rep.reason.unwrap_or_else(|| "kernel not admissible".into())))
    }
}

pub fn simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let sc = cfg.sim_config()?;
    let mut sim = Simulation::new(&sc)?;
    for w in sim.warnings() {
        writeln!(out, "warning={w}")?;
    }
    let model = cfg.envelope_model(l2_norm_sq(sim.strain(), sim.grid()))?;
    let calibrated = match &model {
        Some(m) => Some(m.calibrate(sim.initial_energy())?),
        None => None,
    };
    let path = cfg.output_path();
    let file = File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(HEADER).map_err(csv_io)?;
    let mut failed: Option<Failure> = None;
    let series = sim.run_with(cfg.output.every, |r| {
        if failed.is_some() {
            return;
        }
        let env = match (&model, calibrated) {
            (Some(m), Some(c)) => match m.q(r.t).and_then(|q| Ok((q, m.predicted_envelope(c, r.t)?))) {
                Ok(v) => Some(v),
                Err(e) => {
                    failed = Some(e.into());
                    return;
                }
            },
            _ => None,
        };
        if let Err(e) = w.write_record(energy_csv::row(r, env)) {
            failed = Some(csv_io(e));
        }
    })?;
    if let Some(f) = failed {
        return Err(f);
    }
    w.flush()?;
    let e = series.energies();
    writeln!(out, "output={}", path.display())?;
    writeln!(out, "steps={}", sim.total_steps())?;
    writeln!(out, "records={}", series.records.len())?;
    writeln!(out, "memory={}", memory_label(&sc.memory, &sim))?;
    writeln!(out, "E0={:e}", e[0])?;
    writeln!(out, "E_final={:e}", e[e.len() - 1])?;
    writeln!(out, "max_increase={:e}", max_energy_increase(&series))?;
    writeln!(out, "max_abs_residual={:e}", dissipation_residual(&series).max_abs)?;
    if let Some(c) = calibrated {
        writeln!(out, "envelope_C={c:e}")?;
    }
    Ok(())
}

fn memory_label(m: &MemoryConfig<f64>, sim: &Simulation<f64>) -> String {
    match m {
        MemoryConfig::Direct { .. } => format!("direct snapshots={}", sim.store().snapshot_count()),
        MemoryConfig::Prony { .. } => "prony".into(),
    }
}

fn csv_io(e: csv::Error) -> Failure {
    Failure::Io(e.to_string())
}

fn csv_path(cfg: &RunConfig, csv: Option<PathBuf>) -> PathBuf {
    csv.unwrap_or_else(|| cfg.output_path())
}

/// `<csv stem>.<suffix>.txt` beside the CSV.
fn report_path(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    csv.with_file_name(format!("{stem}.{suffix}.txt"))
}

fn emit(out: &mut dyn Write, lines: &[(String, String)], path: &Path) -> Result<(), Failure> {
    let text: String = lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    out.write_all(text.as_bytes())?;
    std::fs::write(path, &text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    writeln!(out, "report={}", path.display())?;
    Ok(())
}

fn kv(k: &str, v: impl fmt::Display) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// `(ν, r)` of the prediction: the envelope block first, then kernel and history.
fn target_parameters(cfg: &RunConfig) -> Result<(f64, f64), Failure> {
    let env = cfg.envelope.as_ref();
    let nu = match (env.and_then(|e| e.nu), &cfg.kernel) {
        (Some(nu), _) => nu,
        (None, KernelBlock::PowerLaw { nu, .. }) => *nu,
        _ => return Err(Failure::Config("target exponent needs a power_law kernel or envelope.nu".into())),
    };
    let r = env.and_then(|e| e.r).unwrap_or(match cfg.history {
        HistoryBlock::PowerGrowth { r, .. } => r,
        _ => 0.0,
    });
    Ok((nu, r))
}

pub fn fit_decay(cfg: &RunConfig, csv: Option<PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    let (nu, r) = target_parameters(cfg)?;
    let path = csv_path(cfg, csv);
    let (t, e) = energy_csv::read_energy(&path)?;
    let target = nu - r - 1.0;
    let expect_log = ((nu - r) - 2.0).abs() < 1e-12;
    let f = fit(&t, &e, 0.5, expect_log)?;
    let pass = (f.exponent - target).abs() <= EXPONENT_TOL;
    let lines = [
        kv("exponent", format!("{:.6}", f.exponent)),
        kv("target", target),
        kv("tolerance", EXPONENT_TOL),
        kv("pass", pass),
        kv("r2", format!("{:.6}", f.r2)),
        kv("amplitude", format!("{:e}", f.amplitude)),
        kv("log_corrected", f.log_corrected),
        kv("window_start", f.window.0),
        kv("window_end", f.window.1),
        kv("samples", f.samples),
    ];
    emit(out, &lines, &report_path(&path, "fit_decay"))?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("exponent {:.4} outside {target} ± {EXPONENT_TOL}", f.exponent)))
    }
}

fn initial_strain_norm(cfg: &RunConfig) -> Result<f64, Failure> {
    let grid = Grid::new(cfg.space.n, cfg.beam.length).map_err(|e| Failure::Config(e.to_string()))?;
    let init = cfg.initial();
    let f = FieldPair::from_fn(&grid, |x| (init.phi)(x), |x| (init.psi)(x));
    Ok(l2_norm_sq(&shear_strain(&f, &grid), &grid))
}

pub fn envelope(cfg: &RunConfig, csv: Option<PathBuf>, out: &mut dyn Write) -> Result<(), Failure> {
    let model = cfg
        .envelope_model(initial_strain_norm(cfg)?)?
        .ok_or_else(|| Failure::Config("the envelope subcommand needs an [envelope] block".into()))?;
    let path = csv_path(cfg, csv);
    let (t, e) = energy_csv::read_energy(&path)?;
    if t.first() != Some(&0.0) {
        return Err(Failure::Io(format!("{}: the first row must be t = 0", path.display())));
    }
    let c = model.calibrate(e[0])?;
    let cmp = compare_to_bound(&t, &e, |s| Ok(model.predicted_envelope(c, s)?))?;
    let (lambda, p) = match model.chi() {
        Some(Chi::Power { lambda, p }) => (*lambda, *p),
        _ => (f64::NAN, f64::NAN),
    };
    let cert = model.certificate().expect("certified by construction");
    let lines = [
        kv("lambda", lambda),
        kv("p", p),
        kv("c1", model.c1()),
        kv("q0", model.q0()),
        kv("certified", cert.passes),
        kv("dif_margin", format!("{:e}", cert.worst_margin)),
        kv("C", format!("{c:e}")),
        kv("records", t.len()),
        kv("violations", cmp.violations),
        kv("max_ratio", format!("{:.6}", cmp.max_ratio)),
        kv("t_max_ratio", cmp.t_max_ratio),
        kv("pass", cmp.violations == 0),
    ];
    emit(out, &lines, &report_path(&path, "envelope"))?;
    if cmp.violations == 0 {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} records above the envelope", cmp.violations)))
    }
}

struct Cell {
    n: usize,
    dt: f64,
    max_residual: f64,
    e_final: f64,
    warnings: Vec<String>,
}

fn run_cell(base: &SimConfig<f64>, n: usize, dt: f64) -> Result<Cell, Failure> {
    let mut c = base.clone();
    c.n = n;
    c.dt = dt;
    let mut sim = Simulation::new(&c)?;
    let warnings = sim.warnings().to_vec();
    let s = sim.run(1)?;
    Ok(Cell {
        n,
        dt,
        max_residual: dissipation_residual(&s).max_abs,
        e_final: s.records.last().map_or(0.0, |r| r.energy.total()),
        warnings,
    })
}

/// `log₂` of successive ratios; the smallest is the observed order.
fn observed_order(errors: &[f64]) -> f64 {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
}

pub fn convergence(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let mut base = cfg.sim_config()?;
    // one fit shared by every cell
    if let MemoryConfig::Prony { spec: spec @ None, fit } = &mut base.memory {
        *spec = Some(fit_prony_with(&base.kernel, fit)?);
    }
    let ns = [cfg.space.n, 2 * cfg.space.n, 4 * cfg.space.n];
    let dts = [cfg.time.dt, cfg.time.dt / 2.0, cfg.time.dt / 4.0];
    let jobs: Vec<(usize, f64)> = ns.iter().flat_map(|&n| dts.iter().map(move |&dt| (n, dt))).collect();
    let cells: Vec<Result<Cell, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs.iter().map(|&(n, dt)| { let base = &base; s.spawn(move || run_cell(base, n, dt)) }).collect();
        handles.into_iter().map(|h| h.join().expect("convergence cell panicked")).collect()
    });
    let cells: Vec<Cell> = cells.into_iter().collect::<Result<_, _>>()?;
    let mut seen = Vec::new();
    for w in cells.iter().flat_map(|c| &c.warnings) {
        if !seen.contains(w) {
            writeln!(out, "warning={w}")?;
            seen.push(w.clone());
        }
    }
    for c in &cells {
        writeln!(out, "cell N={} dt={:e} max_residual={:e} E_final={:e}", c.n, c.dt, c.max_residual, c.e_final)?;
    }
    let at = |n: usize, dt: f64| cells.iter().find(|c| c.n == n && c.dt == dt).expect("cell exists");
    let temporal: Vec<f64> = dts.iter().map(|&dt| at(ns[0], dt).max_residual).collect();
    let finals: Vec<f64> = ns.iter().map(|&n| at(n, dts[2]).e_final).collect();
    let diffs = [(finals[0] - finals[1]).abs(), (finals[1] - finals[2]).abs()];
    let (t_order, x_order) = (observed_order(&temporal), observed_order(&diffs));
    let pass = t_order >= ORDER_MIN && x_order >= ORDER_MIN;
    writeln!(out, "temporal_order={t_order:.4}")?;
    writeln!(out, "spatial_order={x_order:.4}")?;
    writeln!(out, "pass={pass}")?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("observed orders {t_order:.3} (time), {x_order:.3} (space) below {ORDER_MIN}")))
    }
}
