//! Config-driven front end for the `simulate` binary: a sectioned `key = value` format,
//! embedded presets for the figure scenarios, and deterministic CSV output.
//!
//! ```text
//! [system]
//! type = pair            # pair | lambda | 232
//! omega0 = 100
//! gamma = 1
//! delta = 0.35
//! k0L = pi               # numbers accept pi, e.g. 0.98*pi, pi/2
//!
//! [grid]
//! kmin = 97
//! kmax = 103
//! n = 1201
//!
//! [run]
//! scenario = fig3        # or: observables = spectra, g2, spectrum, rectification, delay
//! mode = markovian
//! drive = left
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;

use crate::engine::{default_calibration, CalibrationConstant, DEFAULT_AMPLITUDE};
use crate::model::{Incidence, PhaseMode};
use crate::numerics::format_g;
use crate::scenarios::{
    incidence_name, mode_name, rectification_scan, refined_grid, spectra_table,
    spectrum_table, Range, ScenarioId, SweepSpec, SystemKind, SystemParams, Table, TimeGrid,
};
use crate::single_photon::time_delay;
use crate::{Error, Result, VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CALIBRATION: i32 = 4;

/// Embedded preset configurations, one per figure scenario.
pub const PRESETS: [(&str, &str); 7] = [
    ("fig3", include_str!("presets/fig3.cfg")),
    ("fig4", include_str!("presets/fig4.cfg")),
    ("fig5", include_str!("presets/fig5.cfg")),
    ("fig6", include_str!("presets/fig6.cfg")),
    ("fig7", include_str!("presets/fig7.cfg")),
    ("fig8", include_str!("presets/fig8.cfg")),
    ("fig9", include_str!("presets/fig9.cfg")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    /// `k, Re_t, Im_t, T, R, F_R, F_L, F` on the `k` grid.
    Spectra,
    /// g2 at the probe frequency.
    G2,
    /// Normalised incoherent spectrum at the probe frequency.
    Spectrum,
    /// Flux difference and rectification tables on the `k` grid.
    Rectification,
    /// Group delay on the `k` grid.
    Delay,
}

impl Observable {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "spectra" => Observable::Spectra,
            "g2" => Observable::G2,
            "spectrum" => Observable::Spectrum,
            "rectification" => Observable::Rectification,
            "delay" => Observable::Delay,
            _ => return None,
        })
    }
}

/// Optional grid overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridConfig {
    pub k: Option<Range>,
    pub tmax: Option<f64>,
    pub nt: Option<usize>,
    pub omega: Option<Range>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunBlock {
    pub scenario: Option<ScenarioId>,
    pub mode: PhaseMode,
    pub drives: Vec<Incidence>,
    pub observables: Vec<Observable>,
    pub deltas: Option<Vec<f64>>,
    pub separations: Option<Vec<f64>>,
    pub rabis: Option<Vec<f64>>,
    pub k_rule: Option<crate::scenarios::KRule>,
    /// Probe frequency for single-`k` observables; defaults to `omega0`.
    pub k: Option<f64>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: SystemParams,
    pub grid: GridConfig,
    pub run: RunBlock,
}

const SYSTEM_COMMON: [&str; 4] = ["type", "omega0", "gamma", "gamma_loss"];
const GRID_KEYS: [&str; 8] = ["kmin", "kmax", "n", "tmax", "nt", "wmin", "wmax", "nw"];
const RUN_KEYS: [&str; 10] =
    ["scenario", "mode", "drive", "observables", "deltas", "separations", "rabis", "k_rule", "k", "output"];

fn system_keys(kind: SystemKind) -> (&'static [&'static str], &'static [&'static str]) {
    // (required, optional) beyond the common block
    match kind {
        SystemKind::Pair => (&["delta", "k0L"], &[]),
        SystemKind::Lambda => (&["omega"], &["Delta", "gamma_loss_s"]),
        SystemKind::Chain232 => (&["delta", "k0L", "omega"], &["Delta", "gamma_loss_s"]),
    }
}

/// Value with its source line.
#[derive(Clone, Debug)]
struct Entry {
    line: usize,
    value: String,
}

type Section = BTreeMap<String, Entry>;

/// Parse a number; `pi` may appear as a factor (`pi`, `2pi`, `0.98*pi`, `-pi/2`).
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let (sign, body) = match s.as_bytes()[0] {
        b'-' => (-1.0, &s[1..]),
        b'+' => (1.0, &s[1..]),
        _ => (1.0, s),
    };
    let factor = |t: &str| -> Option<f64> {
        let t = t.trim();
        if t == "pi" {
            return Some(std::f64::consts::PI);
        }
        if let Some(head) = t.strip_suffix("pi") {
            return head.trim().parse::<f64>().ok().map(|v| v * std::f64::consts::PI);
        }
        if t.starts_with(['+', '-']) {
            return None;
        }
        t.parse::<f64>().ok()
    };
    let mut value = 1.0;
    let mut op = '*';
    let mut start = 0;
    let bytes: Vec<char> = body.chars().collect();
    for i in 0..=bytes.len() {
        let end = i == bytes.len();
        if end || bytes[i] == '*' || bytes[i] == '/' {
            let tok: String = bytes[start..i].iter().collect();
            let f = factor(&tok)?;
            value = if op == '*' { value * f } else { value / f };
            if !end {
                op = bytes[i];
            }
            start = i + 1;
        }
    }
    let v = sign * value;
    v.is_finite().then_some(v)
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut out: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::config(line, "unterminated section header"))?
                .trim();
            if !["system", "grid", "run"].contains(&name) {
                return Err(Error::config(line, format!("unknown section [{name}]")));
            }
            if out.contains_key(name) {
                return Err(Error::config(line, format!("duplicate section [{name}]")));
            }
            out.insert(name.to_string(), Section::new());
            current = Some(name.to_string());
            continue;
        }
        let sec = current.as_ref().ok_or_else(|| Error::config(line, "key outside of a section"))?;
        let (k, v) = content.split_once('=').ok_or_else(|| Error::config(line, "expected key = value"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::config(line, "expected key = value"));
        }
        let section = out.get_mut(sec).expect("section exists");
        if section.contains_key(k) {
            return Err(Error::config(line, format!("duplicate key '{k}'")));
        }
        section.insert(k.to_string(), Entry { line, value: v.to_string() });
    }
    Ok(out)
}

fn num(e: &Entry, key: &str) -> Result<f64> {
    parse_number(&e.value).ok_or_else(|| Error::config(e.line, format!("malformed number for '{key}': '{}'", e.value)))
}

fn count(e: &Entry, key: &str) -> Result<usize> {
    e.value
        .parse::<usize>()
        .map_err(|_| Error::config(e.line, format!("'{key}' must be a non-negative integer, got '{}'", e.value)))
}

fn list(e: &Entry, key: &str) -> Result<Vec<f64>> {
    e.value.split(',').map(|t| parse_number(t).ok_or_else(|| Error::config(e.line, format!("malformed number in '{key}': '{}'", t.trim())))).collect()
}

/// Parse and validate a configuration. Errors carry the offending line (0 when a
/// required key is missing altogether).
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let sections = split_sections(text)?;
    let empty = Section::new();
    let sys = sections.get("system").ok_or_else(|| Error::config(0, "missing [system] section"))?;
    let grid = sections.get("grid").unwrap_or(&empty);
    let run = sections.get("run").ok_or_else(|| Error::config(0, "missing [run] section"))?;

    let kind_entry = sys.get("type").ok_or_else(|| Error::config(0, "missing key 'type' in [system]"))?;
    let kind: SystemKind = kind_entry.value.parse().map_err(|e: Error| Error::config(kind_entry.line, e.to_string()))?;
    let (required, optional) = system_keys(kind);
    for (k, e) in sys {
        if !SYSTEM_COMMON.contains(&k.as_str()) && !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
            return Err(Error::config(e.line, format!("key '{k}' does not apply to system type '{}'", kind.name())));
        }
    }
    for k in ["omega0", "gamma"].iter().chain(required) {
        if !sys.contains_key(*k) {
            return Err(Error::config(0, format!("missing key '{k}' in [system]")));
        }
    }
    let get = |k: &str, default: f64| -> Result<f64> { sys.get(k).map(|e| num(e, k)).unwrap_or(Ok(default)) };
    let system = SystemParams {
        kind,
        omega0: get("omega0", 100.0)?,
        gamma: get("gamma", 1.0)?,
        loss: get("gamma_loss", 0.0)?,
        delta: get("delta", 0.0)?,
        k0l: get("k0L", 0.0)?,
        rabi: get("omega", 0.0)?,
        lambda_detuning: get("Delta", 0.0)?,
        loss_metastable: get("gamma_loss_s", 0.0)?,
    };
    if !(system.gamma > 0.0) {
        return Err(Error::config(sys["gamma"].line, "gamma must be > 0"));
    }
    for k in ["gamma_loss", "omega", "gamma_loss_s"] {
        if let Some(e) = sys.get(k) {
            if num(e, k)? < 0.0 {
                return Err(Error::config(e.line, format!("'{k}' must be >= 0")));
            }
        }
    }
    if let Err(e) = system.chain() {
        return Err(Error::config(kind_entry.line, format!("invalid system: {e}")));
    }

    for (k, e) in grid {
        if !GRID_KEYS.contains(&k.as_str()) {
            return Err(Error::config(e.line, format!("unknown key '{k}' in [grid]")));
        }
    }
    let range = |a: &str, b: &str, n: &str| -> Result<Option<Range>> {
        let keys = [a, b, n];
        let present: Vec<&str> = keys.iter().copied().filter(|k| grid.contains_key(*k)).collect();
        if present.is_empty() {
            return Ok(None);
        }
        if let Some(m) = keys.iter().find(|k| !grid.contains_key(**k)) {
            let line = grid[present[0]].line;
            return Err(Error::config(line, format!("'{}' given without '{m}'", present[0])));
        }
        let r = Range { min: num(&grid[a], a)?, max: num(&grid[b], b)?, n: count(&grid[n], n)? };
        r.validate().map_err(|e| Error::config(grid[a].line, e.to_string()))?;
        Ok(Some(r))
    };
    let tmax = grid.get("tmax").map(|e| num(e, "tmax")).transpose()?;
    if let (Some(t), Some(e)) = (tmax, grid.get("tmax")) {
        if !(t > 0.0) {
            return Err(Error::config(e.line, "tmax must be > 0"));
        }
    }
    let nt = grid.get("nt").map(|e| count(e, "nt")).transpose()?;
    if let (Some(n), Some(e)) = (nt, grid.get("nt")) {
        if n < 2 {
            return Err(Error::config(e.line, "nt must be at least 2"));
        }
    }
    let grid_cfg = GridConfig { k: range("kmin", "kmax", "n")?, tmax, nt, omega: range("wmin", "wmax", "nw")? };

    for (k, e) in run {
        if !RUN_KEYS.contains(&k.as_str()) {
            return Err(Error::config(e.line, format!("unknown key '{k}' in [run]")));
        }
    }
    let scenario = run
        .get("scenario")
        .map(|e| e.value.parse::<ScenarioId>().map_err(|err| Error::config(e.line, err.to_string())))
        .transpose()?;
    let mode = match run.get("mode") {
        None => PhaseMode::Markovian,
        Some(e) => parse_mode(&e.value).ok_or_else(|| Error::config(e.line, format!("unknown mode '{}'", e.value)))?,
    };
    let drives = match run.get("drive") {
        None => vec![Incidence::Left],
        Some(e) => parse_drive(&e.value).ok_or_else(|| Error::config(e.line, format!("unknown drive '{}'", e.value)))?,
    };
    let observables = match run.get("observables") {
        None => vec![],
        Some(e) => e
            .value
            .split(',')
            .map(|t| Observable::parse(t.trim()).ok_or_else(|| Error::config(e.line, format!("unknown observable '{}'", t.trim()))))
            .collect::<Result<Vec<_>>>()?,
    };
    match (scenario, observables.is_empty()) {
        (None, true) => return Err(Error::config(0, "[run] needs either 'scenario' or 'observables'")),
        (Some(_), false) => {
            return Err(Error::config(run["observables"].line, "'observables' cannot be combined with 'scenario'"))
        }
        _ => {}
    }
    if scenario.is_none() && grid_cfg.k.is_none() && observables.iter().any(|o| matches!(o, Observable::Spectra | Observable::Rectification | Observable::Delay)) {
        return Err(Error::config(0, "missing [grid] keys 'kmin', 'kmax', 'n'"));
    }
    if scenario.is_none() && grid_cfg.omega.is_none() && observables.contains(&Observable::Spectrum) {
        return Err(Error::config(0, "missing [grid] keys 'wmin', 'wmax', 'nw'"));
    }
    let lists = |k: &str| run.get(k).map(|e| list(e, k)).transpose();
    let k_rule = run
        .get("k_rule")
        .map(|e| e.value.parse().map_err(|err: Error| Error::config(e.line, err.to_string())))
        .transpose()?;
    let block = RunBlock {
        scenario,
        mode,
        drives,
        observables,
        deltas: lists("deltas")?,
        separations: lists("separations")?,
        rabis: lists("rabis")?,
        k_rule,
        k: run.get("k").map(|e| num(e, "k")).transpose()?,
        output: run.get("output").map(|e| PathBuf::from(&e.value)),
    };
    Ok(RunConfig { system, grid: grid_cfg, run: block })
}

fn parse_mode(s: &str) -> Option<PhaseMode> {
    match s {
        "markovian" => Some(PhaseMode::Markovian),
        "exact" => Some(PhaseMode::Exact),
        _ => None,
    }
}

fn parse_drive(s: &str) -> Option<Vec<Incidence>> {
    match s {
        "left" => Some(vec![Incidence::Left]),
        "right" => Some(vec![Incidence::Right]),
        "both" => Some(vec![Incidence::Left, Incidence::Right]),
        _ => None,
    }
}

impl RunConfig {
    /// Scenario sweep: preset defaults overridden by the config.
    pub fn sweep_spec(&self) -> Option<SweepSpec> {
        let id = self.run.scenario?;
        let (_, mut spec) = SweepSpec::preset(id);
        if let Some(k) = self.grid.k {
            spec.k = k;
        }
        if let Some(w) = self.grid.omega {
            spec.omega = w;
        }
        if self.grid.tmax.is_some() {
            spec.time.tmax = self.grid.tmax;
        }
        if let Some(n) = self.grid.nt {
            spec.time.n = n;
        }
        if let Some(d) = &self.run.deltas {
            spec.deltas = d.clone();
        }
        if let Some(s) = &self.run.separations {
            spec.separations = s.clone();
        }
        if let Some(r) = &self.run.rabis {
            spec.rabis = r.clone();
        }
        if let Some(r) = self.run.k_rule {
            spec.k_rule = r;
        }
        spec.mode = self.run.mode;
        spec.drives = self.run.drives.clone();
        Some(spec)
    }
}

/// Tables for a config-defined run without a named scenario.
fn run_observables(cfg: &RunConfig, cal: &CalibrationConstant) -> Result<Vec<Table>> {
    let sys = &cfg.system;
    let k_probe = cfg.run.k.unwrap_or(sys.omega0);
    let times = TimeGrid { tmax: cfg.grid.tmax, n: cfg.grid.nt.unwrap_or(801) };
    let mut out = Vec::new();
    for obs in &cfg.run.observables {
        match obs {
            Observable::Spectra => {
                let ks = cfg.grid.k.expect("validated").points();
                for &inc in &cfg.run.drives {
                    out.push(spectra_table(sys, &ks, cfg.run.mode, inc, cal)?);
                }
            }
            Observable::G2 => {
                for &inc in &cfg.run.drives {
                    out.extend(g2_at(sys, k_probe, times, inc)?);
                }
            }
            Observable::Spectrum => {
                let base = cfg.grid.omega.expect("validated");
                let grid = refined_grid(&base, &[k_probe], base.spacing().min(0.01 * sys.gamma), 0.5 * sys.gamma);
                for &inc in &cfg.run.drives {
                    out.push(spectrum_table(sys, k_probe, inc, &grid)?);
                }
            }
            Observable::Rectification => {
                let ks = cfg.grid.k.expect("validated").points();
                let (f, x) = rectification_scan(sys, &ks, cal)?;
                out.push(f);
                out.push(x);
            }
            Observable::Delay => {
                let chain = sys.chain()?;
                let ks = cfg.grid.k.expect("validated").points();
                let mut t = Table::new("delay", &["k", "tau"]).meta("mode", mode_name(cfg.run.mode));
                // Zeros of t leave the phase undefined; those rows hold nan.
                t.rows = ks
                    .par_iter()
                    .map(|&k| match time_delay(&chain, k, cfg.run.mode) {
                        Ok(tau) => Ok(vec![k, tau]),
                        Err(Error::UndefinedPhase { .. }) => Ok(vec![k, f64::NAN]),
                        Err(e) => Err(e),
                    })
                    .collect::<Result<_>>()?;
                out.push(t);
            }
        }
    }
    Ok(out)
}

fn g2_at(sys: &SystemParams, k: f64, times: TimeGrid, inc: Incidence) -> Result<Vec<Table>> {
    let chain = sys.chain()?;
    // The delay only sets the default span; zeros of t fall back to 10 / gamma.
    let tau = time_delay(&chain, k, PhaseMode::Markovian).unwrap_or(0.0);
    let ts = match times.tmax {
        Some(t) => crate::numerics::linspace(0.0, t, times.n),
        None => crate::numerics::linspace(0.0, (3.0 * tau.abs()).max(10.0 / sys.gamma), times.n),
    };
    let g = crate::engine::EngineSystem::new(&chain, inc)?.g2(k, &ts, crate::engine::Channel::Transmitted)?;
    let mut t = Table::new(format!("g2_{}", incidence_name(inc)), &["t", "g2"]).meta_num("k", k).meta_num("tau", tau);
    t.rows = ts.iter().zip(&g).map(|(&a, &b)| vec![a, b]).collect();
    Ok(vec![t])
}

/// Execute a validated config and return its tables.
pub fn run_config(cfg: &RunConfig, cal: &CalibrationConstant) -> Result<Vec<Table>> {
    match cfg.sweep_spec() {
        Some(spec) => crate::scenarios::run(&cfg.system, &spec, cal),
        None => run_observables(cfg, cal),
    }
}

/// Render a table as CSV: `# key=value` metadata, a header row, then rows with 12
/// significant digits.
pub fn render_csv(table: &Table, extra: &[(String, String)]) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::invalid(format!("table '{}' is empty", table.name)));
    }
    let mut s = String::new();
    // Table-specific entries win over run-wide ones with the same key.
    let run_wide = extra.iter().filter(|(k, _)| table.metadata_value(k).is_none());
    for (k, v) in run_wide.chain(&table.metadata) {
        let _ = writeln!(s, "# {k}={v}");
    }
    s.push_str(&table.columns.join(","));
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&x| format_g(x, 12)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn emit_csv(table: &Table, path: &Path, extra: &[(String, String)]) -> Result<()> {
    let text = render_csv(table, extra)?;
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run_metadata(cfg: &RunConfig, cal: &CalibrationConstant, source: &str) -> Vec<(String, String)> {
    let mut m = vec![
        ("version".to_string(), VERSION.to_string()),
        ("source".to_string(), source.to_string()),
        ("kappa".to_string(), format_g(cal.kappa, 12)),
        ("kappa_prime".to_string(), format_g(cal.kappa_prime, 12)),
        ("drive_amplitude".to_string(), format_g(DEFAULT_AMPLITUDE, 12)),
        ("drive_order".to_string(), "exact weak-drive coefficients".to_string()),
        ("mode".to_string(), mode_name(cfg.run.mode).to_string()),
    ];
    let spec = cfg.sweep_spec();
    let k = spec.as_ref().map(|s| s.k).or(cfg.grid.k);
    let w = spec.as_ref().map(|s| s.omega).or(cfg.grid.omega);
    if let Some(k) = k {
        m.push(("k_grid".into(), format!("{}:{}:{}", format_g(k.min, 12), format_g(k.max, 12), k.n)));
    }
    if let Some(w) = w {
        m.push(("omega_grid".into(), format!("{}:{}:{}", format_g(w.min, 12), format_g(w.max, 12), w.n)));
    }
    let t = spec.as_ref().map(|s| s.time).unwrap_or(TimeGrid { tmax: cfg.grid.tmax, n: cfg.grid.nt.unwrap_or(801) });
    let tmax = t.tmax.map(|v| format_g(v, 12)).unwrap_or_else(|| "auto".into());
    m.push(("t_grid".into(), format!("0:{tmax}:{}", t.n)));
    m
}

/// Map a library error onto the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidParameter(_) | Error::Io(_) | Error::Scenario(_) => EXIT_CONFIG,
        Error::Calibration(_) | Error::CalibrationRequired => EXIT_CALIBRATION,
        _ => EXIT_NUMERIC,
    }
}

#[derive(Parser, Debug)]
#[command(name = "simulate", version, about = "Few-photon waveguide scattering scenarios")]
pub struct Args {
    /// Embedded preset (fig3 .. fig9).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Path to a configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override the propagation-phase mode.
    #[arg(long, value_parser = ["markovian", "exact"])]
    pub mode: Option<String>,
    /// Override the drive direction.
    #[arg(long, value_parser = ["left", "right", "both"])]
    pub drive: Option<String>,
    /// Print a preset's configuration text and exit.
    #[arg(long)]
    pub print_preset: Option<String>,
}

/// Run the binary with parsed arguments, returning the exit code. Diagnostics go to stderr.
pub fn execute(args: &Args) -> i32 {
    match try_execute(args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn try_execute(args: &Args) -> Result<Vec<PathBuf>> {
    if let Some(name) = &args.print_preset {
        let text = preset(name).ok_or_else(|| Error::config(0, format!("unknown preset '{name}'")))?;
        print!("{text}");
        return Ok(vec![]);
    }
    let (text, source) = match (&args.preset, &args.config) {
        (Some(name), None) => {
            (preset(name).ok_or_else(|| Error::config(0, format!("unknown preset '{name}'")))?.to_string(), format!("preset:{name}"))
        }
        (None, Some(path)) => (
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
            format!("config:{}", path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()),
        ),
        _ => return Err(Error::config(0, "exactly one of --preset or --config is required")),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(m) = &args.mode {
        cfg.run.mode = parse_mode(m).expect("validated by clap");
    }
    if let Some(d) = &args.drive {
        cfg.run.drives = parse_drive(d).expect("validated by clap");
    }
    let out = args.out.clone().or_else(|| cfg.run.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::config(0, "--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::numeric(format!("thread pool: {e}")))?;
    let cal = default_calibration()?;
    let tables = pool.install(|| run_config(&cfg, &cal))?;
    fs::create_dir_all(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let meta = run_metadata(&cfg, &cal, &source);
    let mut files = Vec::with_capacity(tables.len());
    for t in &tables {
        let path = out.join(format!("{}.csv", t.name));
        emit_csv(t, &path, &meta)?;
        files.push(path);
    }
    Ok(files)
}
