//! Figure-style pipelines built on the single-photon, closed-form and engine layers:
//! transmission and flux sweeps, correlation traces, rectification maps with the
//! optimal-detuning ridge, and the loss / Markovianity comparison.
//!
//! Every pipeline returns in-memory [`Table`]s; writing them out is the CLI's job.
//! Independent sweep points run on the rayon pool.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::transmitted_intensity_x;
use crate::engine::{CalibrationConstant, Channel, EngineSystem};
use crate::model::{
    build_232, build_pair, DrivenLambdaEmitter, Emitter, EmitterChain, Incidence, PairGeometry,
    PhaseMode,
};
use crate::numerics::{bisect, fit_line, format_g, linspace, maximize_golden, maximize_on_grid};
use crate::single_photon::{delta_opt, scatter_regularized, time_delay};
use crate::{Error, Result};

/// Slope of the optimal-detuning ridge quoted from earlier work, reported next to the fit.
pub const REFERENCE_RIDGE_SLOPE: f64 = 3.18;

/// A named table of equally long numeric columns with `key=value` metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            metadata: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta_num(self, key: &str, value: f64) -> Self {
        let v = format_g(value, 12);
        self.meta(key, v)
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Inclusive uniform grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Range {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        let r = Range { min, max, n };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::Grid(format!("empty range [{}, {}]", self.min, self.max)));
        }
        if self.n < 2 {
            return Err(Error::Grid("a grid needs at least two points".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.n)
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }
}

/// Delay grid for correlation traces. Without `tmax` the span is `max(3 tau, 10 / gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub tmax: Option<f64>,
    pub n: usize,
}

impl TimeGrid {
    fn points(&self, tau: f64, gamma: f64) -> Result<Vec<f64>> {
        let tmax = self.tmax.unwrap_or_else(|| (3.0 * tau.abs()).max(10.0 / gamma));
        if !(tmax.is_finite() && tmax > 0.0) || self.n < 2 {
            return Err(Error::Grid("time grid needs tmax > 0 and at least two points".into()));
        }
        Ok(linspace(0.0, tmax, self.n))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "pair")]
    Pair,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "232")]
    Chain232,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Pair => "pair",
            SystemKind::Lambda => "lambda",
            SystemKind::Chain232 => "232",
        }
    }
}

impl FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(SystemKind::Pair),
            "lambda" => Ok(SystemKind::Lambda),
            "232" => Ok(SystemKind::Chain232),
            _ => Err(Error::invalid(format!("unknown system type '{s}' (pair, lambda, 232)"))),
        }
    }
}

/// Flat description of one of the three supported structures.
///
/// * `pair`: `delta`, `k0l` (emitter separation phase) and `loss`.
/// * `lambda`: a single driven three-level emitter with `rabi`, `lambda_detuning`, `loss`
///   on the excited and `loss_metastable` on the metastable level.
/// * `232`: outer pair with `delta` and total phase `k0l`, the driven emitter in the
///   middle (so neighbours are `k0l / 2` apart); `loss` on every excited level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub kind: SystemKind,
    pub omega0: f64,
    pub gamma: f64,
    pub loss: f64,
    pub delta: f64,
    pub k0l: f64,
    pub rabi: f64,
    pub lambda_detuning: f64,
    pub loss_metastable: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            kind: SystemKind::Pair,
            omega0: 100.0,
            gamma: 1.0,
            loss: 0.0,
            delta: 0.35,
            k0l: PI,
            rabi: 0.0,
            lambda_detuning: 0.0,
            loss_metastable: 0.0,
        }
    }
}

impl SystemParams {
    pub fn pair(omega0: f64, delta: f64, gamma: f64, k0l: f64) -> Self {
        SystemParams { kind: SystemKind::Pair, omega0, gamma, delta, k0l, ..Default::default() }
    }

    pub fn chain_232(omega0: f64, delta: f64, gamma: f64, rabi: f64, k0l: f64) -> Self {
        SystemParams { kind: SystemKind::Chain232, omega0, gamma, delta, k0l, rabi, ..Default::default() }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_k0l(mut self, k0l: f64) -> Self {
        self.k0l = k0l;
        self
    }

    pub fn with_rabi(mut self, rabi: f64) -> Self {
        self.rabi = rabi;
        self
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = loss;
        self
    }

    pub fn pair_geometry(&self) -> Result<PairGeometry> {
        if self.kind != SystemKind::Pair {
            return Err(Error::Scenario(format!("a pair is required, got '{}'", self.kind.name())));
        }
        PairGeometry::new(self.omega0, self.delta, self.gamma, self.k0l)?.with_loss(self.loss)
    }

    pub fn chain(&self) -> Result<EmitterChain> {
        match self.kind {
            SystemKind::Pair => build_pair(&self.pair_geometry()?),
            SystemKind::Lambda => {
                let e = DrivenLambdaEmitter::new(
                    self.omega0,
                    self.lambda_detuning,
                    self.rabi,
                    self.gamma,
                    self.loss,
                    self.loss_metastable,
                    0.0,
                )?;
                EmitterChain::new(vec![Emitter::Lambda(e)], self.omega0)
            }
            SystemKind::Chain232 => {
                let ch = build_232(
                    self.omega0,
                    self.delta,
                    self.gamma,
                    self.rabi,
                    self.lambda_detuning,
                    0.5 * self.k0l,
                    self.loss,
                )?;
                if self.loss_metastable == 0.0 {
                    return Ok(ch);
                }
                let mut em = ch.emitters().to_vec();
                if let Emitter::Lambda(l) = &mut em[1] {
                    *l = DrivenLambdaEmitter::new(
                        l.excited,
                        l.detuning,
                        l.rabi,
                        l.gamma,
                        l.loss_excited,
                        self.loss_metastable,
                        l.phase,
                    )?;
                }
                EmitterChain::new(em, ch.k0())
            }
        }
    }

    fn describe(&self, t: Table) -> Table {
        let t = t
            .meta("system", self.kind.name())
            .meta_num("omega0", self.omega0)
            .meta_num("gamma", self.gamma)
            .meta_num("gamma_loss", self.loss);
        match self.kind {
            SystemKind::Pair => t.meta_num("delta", self.delta).meta_num("k0L", self.k0l),
            SystemKind::Lambda => t
                .meta_num("omega", self.rabi)
                .meta_num("Delta", self.lambda_detuning)
                .meta_num("gamma_loss_s", self.loss_metastable),
            SystemKind::Chain232 => t
                .meta_num("delta", self.delta)
                .meta_num("k0L", self.k0l)
                .meta_num("omega", self.rabi)
                .meta_num("Delta", self.lambda_detuning)
                .meta_num("gamma_loss_s", self.loss_metastable),
        }
    }
}

/// Frequency choice for each rectification-map cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KRule {
    /// Drive on resonance with the second (right-hand) emitter, `k = omega0 - delta / 2`.
    SecondQubit,
    /// Maximise over `k` near the resonance.
    Free,
}

impl FromStr for KRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "second" | "second_qubit" => Ok(KRule::SecondQubit),
            "free" => Ok(KRule::Free),
            _ => Err(Error::invalid(format!("unknown k rule '{s}' (second, free)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::Fig3,
        ScenarioId::Fig4,
        ScenarioId::Fig5,
        ScenarioId::Fig6,
        ScenarioId::Fig7,
        ScenarioId::Fig8,
        ScenarioId::Fig9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Fig3 => "fig3",
            ScenarioId::Fig4 => "fig4",
            ScenarioId::Fig5 => "fig5",
            ScenarioId::Fig6 => "fig6",
            ScenarioId::Fig7 => "fig7",
            ScenarioId::Fig8 => "fig8",
            ScenarioId::Fig9 => "fig9",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario '{s}'")))
    }
}

/// Everything a scenario run needs beyond the base system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: ScenarioId,
    pub k: Range,
    pub time: TimeGrid,
    pub omega: Range,
    /// Detunings swept by the scenario (meaning depends on the scenario).
    pub deltas: Vec<f64>,
    /// Separation phases `k0L` swept by the scenario.
    pub separations: Vec<f64>,
    pub rabis: Vec<f64>,
    pub mode: PhaseMode,
    pub drives: Vec<Incidence>,
    pub k_rule: KRule,
}

impl SweepSpec {
    /// Defaults for one scenario, together with its base system.
    pub fn preset(id: ScenarioId) -> (SystemParams, SweepSpec) {
        let k = |a, b, n| Range { min: a, max: b, n };
        let mut spec = SweepSpec {
            scenario: id,
            k: k(97.0, 103.0, 1201),
            time: TimeGrid { tmax: None, n: 801 },
            omega: k(90.0, 110.0, 2001),
            deltas: vec![],
            separations: vec![],
            rabis: vec![],
            mode: PhaseMode::Markovian,
            drives: vec![Incidence::Left],
            k_rule: KRule::SecondQubit,
        };
        let pair = SystemParams::pair(100.0, 0.35, 1.0, PI);
        let c232 = SystemParams::chain_232(100.0, 0.35, 1.0, 3.0, PI);
        let sys = match id {
            ScenarioId::Fig3 => {
                spec.deltas = vec![0.0, 0.35, 1.5];
                pair
            }
            ScenarioId::Fig4 => {
                spec.deltas = vec![0.0, 0.35, 1.5];
                spec.rabis = vec![3.0];
                pair
            }
            ScenarioId::Fig5 => {
                spec.k = k(99.9, 100.15, 501);
                spec.deltas = vec![-0.03, -0.06, -0.09, -0.12];
                spec.separations = [0.96, 0.97, 0.98, 0.99, 1.01, 1.02, 1.03, 1.04].map(|u| u * PI).to_vec();
                spec.drives = vec![Incidence::Left, Incidence::Right];
                pair.with_delta(-0.06).with_k0l(0.98 * PI)
            }
            ScenarioId::Fig6 => {
                spec.rabis = vec![0.0, 3.0];
                c232
            }
            ScenarioId::Fig7 => {
                spec.time = TimeGrid { tmax: None, n: 1201 };
                c232
            }
            ScenarioId::Fig8 => {
                spec.k = k(98.0, 102.0, 801);
                spec.drives = vec![Incidence::Left, Incidence::Right];
                c232
            }
            ScenarioId::Fig9 => {
                spec.k = k(98.0, 102.0, 801);
                pair.with_loss(0.02)
            }
        };
        (sys, spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.k.validate()?;
        self.omega.validate()?;
        if self.time.n < 2 {
            return Err(Error::Grid("time grid needs at least two points".into()));
        }
        if self.drives.is_empty() {
            return Err(Error::Scenario("no drive direction selected".into()));
        }
        if [&self.deltas, &self.separations, &self.rabis].iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("sweep values must be finite"));
        }
        Ok(())
    }
}

/// Run one scenario.
pub fn run(system: &SystemParams, spec: &SweepSpec, cal: &CalibrationConstant) -> Result<Vec<Table>> {
    spec.validate()?;
    let need = |kind: SystemKind| -> Result<()> {
        if system.kind != kind {
            return Err(Error::Scenario(format!(
                "{} needs system type '{}', got '{}'",
                spec.scenario,
                kind.name(),
                system.kind.name()
            )));
        }
        Ok(())
    };
    let ks = spec.k.points();
    let tag = |t: Table| t.meta("scenario", spec.scenario);
    let mut out = Vec::new();
    match spec.scenario {
        ScenarioId::Fig3 | ScenarioId::Fig6 => {
            let kind = if spec.scenario == ScenarioId::Fig3 { SystemKind::Pair } else { SystemKind::Chain232 };
            need(kind)?;
            for s in spectra_cases(system, spec) {
                for &inc in &spec.drives {
                    out.push(tag(spectra_table(&s, &ks, spec.mode, inc, cal)?));
                }
            }
        }
        ScenarioId::Fig4 => {
            need(SystemKind::Pair)?;
            let mut cases: Vec<SystemParams> = spec.deltas.iter().map(|&d| system.with_delta(d)).collect();
            for &om in &spec.rabis {
                let k0l = system.k0l;
                cases.push(SystemParams { kind: SystemKind::Chain232, rabi: om, ..system.with_k0l(k0l) });
            }
            for s in &cases {
                for &inc in &spec.drives {
                    out.extend(reproduce_g2(s, spec.time, inc)?.into_iter().map(tag));
                }
            }
        }
        ScenarioId::Fig7 => {
            need(SystemKind::Chain232)?;
            for &inc in &spec.drives {
                let k = system.omega0;
                let centers = spectral_centres(system);
                let grid = refined_grid(&spec.omega, &centers, fine_spacing(system), 1.0);
                out.push(tag(spectrum_table(system, k, inc, &grid)?));
                let trace = g2_trace(system, k, spec.time, inc, None)?;
                out.push(tag(trace));
            }
        }
        ScenarioId::Fig5 => {
            need(SystemKind::Pair)?;
            for &d in &spec.deltas {
                out.push(tag(spectra_table(&system.with_delta(d), &ks, spec.mode, Incidence::Left, cal)?));
            }
            let quad = [(0.98 * PI, -0.06), (0.98 * PI, -0.12), (1.02 * PI, 0.06), (1.02 * PI, 0.12)];
            for (l, d) in quad.into_iter().chain(std::iter::once((PI, system.delta))) {
                let s = system.with_k0l(l).with_delta(d);
                let (flux, x) = rectification_scan(&s, &ks, cal)?;
                out.push(tag(flux));
                out.push(tag(x));
            }
            let deltas = linspace(-0.2, 0.2, 81);
            let map = rectification_map(system, &deltas, &spec.separations, spec.k_rule, cal)?;
            let fit = ridge_fit(&map, system, cal)?;
            out.push(tag(map.to_table()));
            out.push(tag(fit.to_table()));
        }
        ScenarioId::Fig8 => {
            need(SystemKind::Chain232)?;
            let (flux, x) = rectification_scan(system, &ks, cal)?;
            out.push(tag(flux));
            out.push(tag(x));
        }
        ScenarioId::Fig9 => {
            need(SystemKind::Pair)?;
            out.push(tag(loss_markov_compare(system, &ks)?));
        }
    }
    Ok(out)
}

fn spectra_cases(system: &SystemParams, spec: &SweepSpec) -> Vec<SystemParams> {
    match system.kind {
        SystemKind::Chain232 if !spec.rabis.is_empty() => spec.rabis.iter().map(|&o| system.with_rabi(o)).collect(),
        _ if !spec.deltas.is_empty() => spec.deltas.iter().map(|&d| system.with_delta(d)).collect(),
        _ => vec![*system],
    }
}

fn case_label(s: &SystemParams) -> String {
    match s.kind {
        SystemKind::Pair => format!("pair_delta{}", format_g(s.delta, 6)),
        SystemKind::Lambda => format!("lambda_omega{}", format_g(s.rabi, 6)),
        SystemKind::Chain232 => format!("232_delta{}_omega{}", format_g(s.delta, 6), format_g(s.rabi, 6)),
    }
}

fn direction_suffix(inc: Incidence) -> &'static str {
    match inc {
        Incidence::Left => "lr",
        Incidence::Right => "rl",
    }
}

fn min_gamma(chain: &EmitterChain) -> f64 {
    chain.emitters().iter().map(Emitter::gamma).fold(f64::INFINITY, f64::min)
}

/// Transmission, reflection and calibrated inelastic fluxes on a `k` grid.
/// Columns `k, Re_t, Im_t, T, R, F_R, F_L, F`. The fluxes always come from the Markovian
/// engine; `mode` only affects the single-photon columns.
pub fn spectra_table(
    system: &SystemParams,
    ks: &[f64],
    mode: PhaseMode,
    inc: Incidence,
    cal: &CalibrationConstant,
) -> Result<Table> {
    let chain = system.chain()?;
    let sys = EngineSystem::new(&chain, inc)?;
    let rows: Result<Vec<Vec<f64>>> = ks
        .par_iter()
        .map(|&k| {
            let s = scatter_regularized(&chain, k, mode)?;
            let r = match inc {
                Incidence::Left => s.r_left,
                Incidence::Right => s.r_right,
            };
            let f = cal.flux(&sys.fourth_order(k)?);
            Ok(vec![k, s.t.re, s.t.im, s.t.norm_sqr(), r.norm_sqr(), f.right, f.left, f.total])
        })
        .collect();
    let mut t = Table::new(
        format!("spectra_{}_{}", case_label(system), direction_suffix(inc)),
        &["k", "Re_t", "Im_t", "T", "R", "F_R", "F_L", "F"],
    );
    t = system
        .describe(t)
        .meta("mode", mode_name(mode))
        .meta("flux_mode", "markovian")
        .meta("incident", incidence_name(inc));
    t.rows = rows?;
    Ok(t)
}

pub fn mode_name(mode: PhaseMode) -> &'static str {
    match mode {
        PhaseMode::Markovian => "markovian",
        PhaseMode::Exact => "exact",
    }
}

pub fn incidence_name(inc: Incidence) -> &'static str {
    match inc {
        Incidence::Left => "left",
        Incidence::Right => "right",
    }
}

/// Red-detuned frequency with `T = 1/2`: the first crossing below `omega0`, refined by
/// bisection to `1e-8 gamma`.
pub fn half_transmission_frequency(chain: &EmitterChain, omega0: f64) -> Result<f64> {
    let g = min_gamma(chain);
    let tr = |k: f64| -> f64 {
        scatter_regularized(chain, k, PhaseMode::Markovian).map(|s| s.t.norm_sqr() - 0.5).unwrap_or(f64::NAN)
    };
    let step = 1e-3 * g;
    let steps = (10.0 / 1e-3) as usize;
    let mut prev = tr(omega0);
    let mut hi = omega0;
    for i in 1..=steps {
        let k = omega0 - step * i as f64;
        let v = tr(k);
        if v.is_finite() && prev.is_finite() && (v == 0.0 || v.signum() != prev.signum()) {
            return bisect(tr, k, hi, 1e-8 * g);
        }
        prev = v;
        hi = k;
    }
    Err(Error::Scenario(format!("no T = 0.5 crossing within 10 gamma below {omega0}")))
}

/// g2 trace at `k`; `tau_note` overrides the annotated delay (the group delay otherwise).
fn g2_trace(
    system: &SystemParams,
    k: f64,
    grid: TimeGrid,
    inc: Incidence,
    tau_note: Option<(f64, &str)>,
) -> Result<Table> {
    let chain = system.chain()?;
    let s = scatter_regularized(&chain, k, PhaseMode::Markovian)?;
    let delay = time_delay(&chain, k, PhaseMode::Markovian)?;
    let (tau, source) = tau_note.unwrap_or((delay, "group_delay"));
    let times = grid.points(tau, min_gamma(&chain))?;
    let g2 = EngineSystem::new(&chain, inc)?.g2(k, &times, Channel::Transmitted)?;
    let mut t = Table::new(format!("g2_{}_{}", case_label(system), direction_suffix(inc)), &["t", "g2"]);
    t = system
        .describe(t)
        .meta_num("k", k)
        .meta_num("T", s.t.norm_sqr())
        .meta_num("tau", tau)
        .meta("tau_source", source)
        .meta_num("group_delay", delay)
        .meta("incident", incidence_name(inc));
    t.rows = times.iter().zip(&g2).map(|(&a, &b)| vec![a, b]).collect();
    Ok(t)
}

/// Correlation traces at the red-detuned half-transmission point, plus the flat resonance
/// trace whenever transmission is perfect at `omega0`.
pub fn reproduce_g2(system: &SystemParams, grid: TimeGrid, inc: Incidence) -> Result<Vec<Table>> {
    let chain = system.chain()?;
    let k = half_transmission_frequency(&chain, system.omega0)?;
    let identical = system.kind == SystemKind::Pair && system.delta == 0.0;
    // Identical arrays carry the documented delay 2 / gamma.
    let note = identical.then_some((2.0 / system.gamma, "identical_array"));
    let mut out = vec![g2_trace(system, k, grid, inc, note)?];
    let t0 = scatter_regularized(&chain, system.omega0, PhaseMode::Markovian)?.t.norm_sqr();
    if (t0 - 1.0).abs() < 1e-9 {
        let mut r = g2_trace(system, system.omega0, grid, inc, None)?;
        r.name = format!("g2_resonance_{}_{}", case_label(system), direction_suffix(inc));
        out.push(r);
    }
    Ok(out)
}

fn spectral_centres(s: &SystemParams) -> Vec<f64> {
    let w = s.omega0;
    let mut c = vec![w, w - 0.5 * s.delta, w + 0.5 * s.delta];
    if s.rabi > 0.0 {
        c.push(w - 0.5 * s.rabi);
        c.push(w + 0.5 * s.rabi);
    }
    c
}

/// Smallest spacing used around narrow features, `delta^2 / (20 gamma)`.
fn fine_spacing(s: &SystemParams) -> f64 {
    let d = s.delta.abs().max(0.05 * s.gamma);
    d * d / (20.0 * s.gamma)
}

/// Uniform grid merged with fine patches of half-width `half_width` around `centres`.
pub fn refined_grid(base: &Range, centres: &[f64], spacing: f64, half_width: f64) -> Vec<f64> {
    let mut g = base.points();
    for &c in centres {
        let n = (2.0 * half_width / spacing).ceil() as usize + 1;
        g.extend(linspace(c - half_width, c + half_width, n).into_iter().filter(|&w| w >= base.min && w <= base.max));
    }
    g.sort_by(|a, b| a.total_cmp(b));
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    g
}

/// Incoherent spectra normalised by the total flux. Columns `omega, S_R, S_L, S`.
pub fn spectrum_table(system: &SystemParams, k: f64, inc: Incidence, omega: &[f64]) -> Result<Table> {
    let chain = system.chain()?;
    let sys = EngineSystem::new(&chain, inc)?;
    let fo = sys.fourth_order(k)?;
    let flux = fo.flux_total();
    if flux.abs() < 1e-14 {
        return Err(Error::IllDefined(format!("no inelastic flux at k = {k}, S / F is undefined")));
    }
    // One Schur reduction per chunk, so use as few chunks as there are workers.
    let per = omega.len().div_ceil(rayon::current_num_threads().max(1)).max(1);
    let chunks: Vec<&[f64]> = omega.chunks(per).collect();
    let (cr, cl) = sys.right_left();
    let parts: Result<Vec<(Vec<f64>, Vec<f64>)>> = chunks
        .par_iter()
        .map(|w| {
            let nu: Vec<f64> = w.iter().map(|x| x - k).collect();
            Ok((sys.spectral_density(k, &nu, cr)?, sys.spectral_density(k, &nu, cl)?))
        })
        .collect();
    let (mut right, mut left) = (Vec::new(), Vec::new());
    for (r, l) in parts? {
        right.extend(r);
        left.extend(l);
    }
    let trap: f64 = omega
        .windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (right[i] + left[i] + right[i + 1] + left[i + 1]))
        .sum();
    if (trap - flux).abs() > 0.02 * flux.abs() {
        return Err(Error::Grid(format!("grid integral {trap:.6e} does not reproduce the flux {flux:.6e}")));
    }
    let mut t = Table::new(format!("spectrum_{}_{}", case_label(system), direction_suffix(inc)), &["omega", "S_R", "S_L", "S"]);
    t = system
        .describe(t)
        .meta_num("k", k)
        .meta("normalisation", "S/F")
        .meta_num("grid_integral_over_F", trap / flux)
        .meta("incident", incidence_name(inc));
    t.rows = omega
        .iter()
        .enumerate()
        .map(|(i, &w)| vec![w, right[i] / flux, left[i] / flux, (right[i] + left[i]) / flux])
        .collect();
    Ok(t)
}

/// Local maxima of a sampled curve, as `(x, y)`.
pub fn local_maxima(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    (1..y.len().saturating_sub(1))
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .map(|i| (x[i], y[i]))
        .collect()
}

/// Both drive directions of one system, ready for nonlinear-intensity evaluations.
pub struct Rectifier {
    pair: Option<PairGeometry>,
    forward: EngineSystem,
    backward: EngineSystem,
    cal: CalibrationConstant,
}

impl Rectifier {
    pub fn new(system: &SystemParams, cal: &CalibrationConstant) -> Result<Self> {
        let chain = system.chain()?;
        let pair = match system.kind {
            SystemKind::Pair => Some(system.pair_geometry()?),
            _ => None,
        };
        Ok(Rectifier {
            pair,
            forward: EngineSystem::new(&chain, Incidence::Left)?,
            backward: EngineSystem::new(&chain, Incidence::Right)?,
            cal: *cal,
        })
    }

    /// Calibrated transmitted fluxes and nonlinear transmitted intensities for both
    /// directions. Pairs use the closed-form interference term with the engine flux; other
    /// chains use the engine throughout.
    pub fn evaluate(&self, k: f64) -> Result<RectificationPoint> {
        let one = |sys: &EngineSystem, inc: Incidence| -> Result<(f64, f64)> {
            let fo = sys.fourth_order(k)?;
            let f = self.cal.flux(&fo).transmitted;
            let x = match &self.pair {
                Some(p) => transmitted_intensity_x(k, p, inc, Some(f))?.x,
                None => self.cal.intensity(fo.intensity_transmitted),
            };
            Ok((f, x))
        };
        let (flux_lr, x_lr) = one(&self.forward, Incidence::Left)?;
        let (flux_rl, x_rl) = one(&self.backward, Incidence::Right)?;
        Ok(RectificationPoint { k, flux_lr, flux_rl, x_lr, x_rl })
    }

    pub fn rectification(&self, k: f64) -> Result<f64> {
        Ok(self.evaluate(k)?.absdiff())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectificationPoint {
    pub k: f64,
    pub flux_lr: f64,
    pub flux_rl: f64,
    pub x_lr: f64,
    pub x_rl: f64,
}

impl RectificationPoint {
    pub fn absdiff(&self) -> f64 {
        (self.x_lr - self.x_rl).abs()
    }
}

/// Transmitted flux and intensity for both directions on a `k` grid: a flux table
/// (`k, F_lr, F_rl, diff`) and a rectification table (`k, X_lr, X_rl, absdiff`).
pub fn rectification_scan(system: &SystemParams, ks: &[f64], cal: &CalibrationConstant) -> Result<(Table, Table)> {
    let rect = Rectifier::new(system, cal)?;
    let rows: Result<Vec<[f64; 5]>> = ks
        .par_iter()
        .map(|&k| {
            let p = rect.evaluate(k)?;
            Ok([k, p.flux_lr, p.flux_rl, p.x_lr, p.x_rl])
        })
        .collect();
    let rows = rows?;
    let label = case_label(system);
    let mut flux = system.describe(
        Table::new(format!("flux_difference_{}_k0L{}", label, format_g(system.k0l / PI, 6)), &["k", "F_lr", "F_rl", "diff"])
            .meta("channel", "transmitted"),
    );
    let mut x = system.describe(Table::new(
        format!("rectification_{}_k0L{}", label, format_g(system.k0l / PI, 6)),
        &["k", "X_lr", "X_rl", "absdiff"],
    ));
    if let Ok(p) = system.pair_geometry() {
        x = x.meta_num("delta_opt", delta_opt(p.separation_phase, p.gamma1));
    }
    flux.rows = rows.iter().map(|r| vec![r[0], r[1], r[2], r[1] - r[2]]).collect();
    x.rows = rows.iter().map(|r| vec![r[0], r[3], r[4], (r[3] - r[4]).abs()]).collect();
    Ok((flux, x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub k0l: f64,
    pub delta: f64,
    /// Frequency at which the cell value was taken.
    pub k: f64,
    pub rectification: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectificationMap {
    pub rule: KRule,
    pub deltas: Vec<f64>,
    pub separations: Vec<f64>,
    /// Row-major over `separations`, then `deltas`.
    pub cells: Vec<MapCell>,
}

impl RectificationMap {
    pub fn row(&self, i: usize) -> &[MapCell] {
        let n = self.deltas.len();
        &self.cells[i * n..(i + 1) * n]
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new("rectification_map", &["k0L_over_pi", "delta", "k", "absdiff"]).meta(
            "k_rule",
            match self.rule {
                KRule::SecondQubit => "second_qubit",
                KRule::Free => "free",
            },
        );
        t.rows = self.cells.iter().map(|c| vec![c.k0l / PI, c.delta, c.k, c.rectification]).collect();
        t
    }
}

fn cell_value(base: &SystemParams, k0l: f64, delta: f64, rule: KRule, cal: &CalibrationConstant) -> Result<(f64, f64)> {
    let s = base.with_k0l(k0l).with_delta(delta);
    let rect = Rectifier::new(&s, cal)?;
    match rule {
        KRule::SecondQubit => {
            let k = s.omega0 - 0.5 * delta;
            Ok((k, rect.rectification(k)?))
        }
        KRule::Free => {
            let grid = linspace(s.omega0 - 0.5 * s.gamma, s.omega0 + 0.5 * s.gamma, 2001);
            let mut err = None;
            let (k, v) = maximize_on_grid(
                |k| match rect.rectification(k) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                },
                &grid,
                1e-9,
            );
            match err {
                Some(e) => Err(e),
                None => Ok((k, v)),
            }
        }
    }
}

/// `|X_lr - X_rl|` over a grid of detunings and separation phases for a pair.
pub fn rectification_map(
    base: &SystemParams,
    deltas: &[f64],
    separations: &[f64],
    rule: KRule,
    cal: &CalibrationConstant,
) -> Result<RectificationMap> {
    base.pair_geometry()?;
    if deltas.is_empty() || separations.is_empty() {
        return Err(Error::Grid("rectification map needs non-empty detuning and separation lists".into()));
    }
    let jobs: Vec<(f64, f64)> = separations.iter().flat_map(|&l| deltas.iter().map(move |&d| (l, d))).collect();
    let cells: Result<Vec<MapCell>> = jobs
        .par_iter()
        .map(|&(l, d)| {
            let (k, v) = cell_value(base, l, d, rule, cal)?;
            Ok(MapCell { k0l: l, delta: d, k, rectification: v })
        })
        .collect();
    Ok(RectificationMap { rule, deltas: deltas.to_vec(), separations: separations.to_vec(), cells: cells? })
}

/// Least-squares line through the rectification-maximising detuning versus
/// `L / (lambda0 / 2) - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// `(L / (lambda0 / 2) - 1, delta_max)` per separation.
    pub points: Vec<(f64, f64)>,
    pub analytic_slope: f64,
    pub reference_slope: f64,
}

impl RidgeFit {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new("ridge_fit", &["L_over_half_lambda", "delta_max"])
            .meta_num("slope", self.slope)
            .meta_num("intercept", self.intercept)
            .meta_num("residual", self.residual)
            .meta_num("analytic_slope", self.analytic_slope)
            .meta_num("reference_slope", self.reference_slope);
        t.rows = self.points.iter().map(|&(u, d)| vec![1.0 + u, d]).collect();
        t
    }
}

/// Fit the ridge of a map: per separation, the grid maximum is refined by golden section.
pub fn ridge_fit(map: &RectificationMap, base: &SystemParams, cal: &CalibrationConstant) -> Result<RidgeFit> {
    if map.separations.len() < 5 {
        return Err(Error::Scenario("ridge fit needs at least five separations".into()));
    }
    if map.deltas.len() < 3 {
        return Err(Error::Scenario("ridge fit needs at least three detunings".into()));
    }
    let points: Result<Vec<(f64, f64)>> = (0..map.separations.len())
        .into_par_iter()
        .map(|i| {
            let row = map.row(i);
            let l = map.separations[i];
            let j = (0..row.len())
                .max_by(|&a, &b| row[a].rectification.total_cmp(&row[b].rectification))
                .expect("non-empty row");
            if row[j].rectification <= 0.0 {
                return Err(Error::Scenario(format!("no rectification at k0L = {l}")));
            }
            let lo = map.deltas[j.saturating_sub(1)];
            let hi = map.deltas[(j + 1).min(map.deltas.len() - 1)];
            let mut err = None;
            let (d, _) = maximize_golden(
                |d| match cell_value(base, l, d, map.rule, cal) {
                    Ok((_, v)) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                },
                lo,
                hi,
                1e-7,
            );
            match err {
                Some(e) => Err(e),
                None => Ok((l / PI - 1.0, d)),
            }
        })
        .collect();
    let points = points?;
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = fit_line(&x, &y).map_err(|e| Error::Scenario(format!("degenerate ridge fit: {e}")))?;
    Ok(RidgeFit {
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.rms_residual,
        points,
        analytic_slope: PI,
        reference_slope: REFERENCE_RIDGE_SLOPE,
    })
}

/// Four transmission curves for a pair: exact lossless at the system separation, exact with
/// the system loss, Markovian lossless, and exact lossless at a 40-fold larger separation.
/// Columns `k, T_exact, T_lossy, T_markov, T_exact_far`.
pub fn loss_markov_compare(system: &SystemParams, ks: &[f64]) -> Result<Table> {
    let lossless = system.with_loss(0.0);
    let near = lossless.chain()?;
    let lossy = system.chain()?;
    let far = lossless.with_k0l(40.0 * system.k0l).chain()?;
    let t = |c: &EmitterChain, k: f64, m: PhaseMode| -> Result<f64> { Ok(scatter_regularized(c, k, m)?.t.norm_sqr()) };
    let rows: Result<Vec<Vec<f64>>> = ks
        .par_iter()
        .map(|&k| {
            Ok(vec![
                k,
                t(&near, k, PhaseMode::Exact)?,
                t(&lossy, k, PhaseMode::Exact)?,
                t(&near, k, PhaseMode::Markovian)?,
                t(&far, k, PhaseMode::Exact)?,
            ])
        })
        .collect();
    let mut tab = system
        .describe(Table::new("loss_markov_compare", &["k", "T_exact", "T_lossy", "T_markov", "T_exact_far"]))
        .meta_num("k0L_far", 40.0 * system.k0l);
    tab.rows = rows?;
    Ok(tab)
}
