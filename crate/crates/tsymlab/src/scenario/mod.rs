//! Scenario-driven experiment runner: line-oriented configuration documents
//! are parsed into typed scenarios, dispatched to the library modules, and
//! written out as deterministic CSV artifacts plus a JSON summary.
//!
//! Format: one `[kind]` header followed by `key = value` lines; `#` starts a
//! comment, lists are space-separated. Unknown keys and malformed values are
//! rejected with line numbers; omitted keys take the documented defaults and
//! are echoed back in the summary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::cosmo::{
    self, estimate_symmetric_fraction, fit_scaling_exponent, local_pca_spectra,
    reconstruct, symmetry_defect, waveform_symmetry_check, AxisGrid, CosmoError, CosmoParams,
    CosmoSystem, ReducedPoint, SamplingBox, SymmetryKind, SymmetryScales, TwoSided, WaveKind,
};
use crate::geometry::{
    conservation_residual, curvature, dominant_energy_check, momentum_condition_check,
    pseudotensor, pseudotensor_with, stress_energy, type_one_decomposition, MetricField,
    SlotDiffPath, PERT_STEP,
};
use crate::odecore::{self, fmt_g17, ReversalInvolution, StateVector};
use crate::orientation::{assign_orientation, cycle_flip_parity, OrientationComplex};
use crate::pendulum::{
    classify_analytic, classify_numeric, energy, AnalyticClass, NumericClass, PendulumParams,
    PendulumState, PendulumSystem,
};
use crate::taub::{
    reduced_evolution, reduced_hamiltonian, sheet_residual, twin_map, ReducedSheetSystem, Sheet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    PendulumScan,
    CosmoSymmetry,
    CosmoMeasure,
    CosmoSurfaces,
    GeometryScan,
    Orientability,
    TaubRun,
    ReversalCheck,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::PendulumScan => "pendulum-scan",
            ScenarioKind::CosmoSymmetry => "cosmo-symmetry",
            ScenarioKind::CosmoMeasure => "cosmo-measure",
            ScenarioKind::CosmoSurfaces => "cosmo-surfaces",
            ScenarioKind::GeometryScan => "geometry-scan",
            ScenarioKind::Orientability => "orientability",
            ScenarioKind::TaubRun => "taub-run",
            ScenarioKind::ReversalCheck => "reversal-check",
        }
    }

    fn from_str(s: &str) -> Option<Self> {
        Some(match s {
            "pendulum-scan" => ScenarioKind::PendulumScan,
            "cosmo-symmetry" => ScenarioKind::CosmoSymmetry,
            "cosmo-measure" => ScenarioKind::CosmoMeasure,
            "cosmo-surfaces" => ScenarioKind::CosmoSurfaces,
            "geometry-scan" => ScenarioKind::GeometryScan,
            "orientability" => ScenarioKind::Orientability,
            "taub-run" => ScenarioKind::TaubRun,
            "reversal-check" => ScenarioKind::ReversalCheck,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumScanParams {
    pub k: f64,
    pub n_samples: usize,
    pub t_max: f64,
    pub tol: f64,
    /// Relative half-width (in units of k^2) of the excluded energy band
    /// around the separatrix.
    pub band: f64,
    pub theta: (f64, f64),
    pub p: (f64, f64),
    /// Number of leading samples also integrated for an energy-drift bound.
    pub drift_samples: usize,
    pub drift_horizon: f64,
}

impl Default for PendulumScanParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            n_samples: 500,
            t_max: 100.0,
            tol: 1e-10,
            band: 1e-3,
            theta: (-3.0, 3.0),
            p: (-3.0, 3.0),
            drift_samples: 100,
            drift_horizon: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosmoSymmetryParams {
    pub m: f64,
    pub lambda: f64,
    pub a_min: f64,
    pub t_max: f64,
    pub tol: f64,
    /// Optional reduced-chart point (a_dot, phi, phi_dot) to analyse.
    pub point: Option<[f64; 3]>,
    /// Axis-seeded waveform checks: axis_count/2 seeds per axis.
    pub axis_count: usize,
    pub axis_span: f64,
    pub window: f64,
}

impl Default for CosmoSymmetryParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            lambda: 0.0,
            a_min: 1e-4,
            t_max: 100.0,
            tol: 1e-10,
            point: None,
            axis_count: 10,
            axis_span: 1.5,
            window: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosmoMeasureParams {
    pub m: f64,
    pub lambda: f64,
    pub a_min: f64,
    pub t_max: f64,
    pub tol: f64,
    pub box_a_dot: (f64, f64),
    pub box_phi: (f64, f64),
    pub box_phi_dot: (f64, f64),
    pub n_samples: usize,
    pub epsilons: Vec<f64>,
}

impl Default for CosmoMeasureParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            lambda: 0.0,
            a_min: 1e-4,
            t_max: 100.0,
            tol: 1e-6,
            box_a_dot: (-1.0, 1.0),
            box_phi: (-2.0, 2.0),
            box_phi_dot: (-2.0, 2.0),
            n_samples: 1000,
            epsilons: vec![0.3, 0.1, 0.03, 0.01, 0.003],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosmoSurfacesParams {
    pub m: f64,
    pub lambda: f64,
    pub a_min: f64,
    pub t_max: f64,
    pub tol: f64,
    pub even_phi: Vec<f64>,
    pub odd_phi_dot: Vec<f64>,
    pub n_times: usize,
    pub a_growth_cap: f64,
    pub pca_probes: usize,
    pub pca_k: usize,
}

impl Default for CosmoSurfacesParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            lambda: 0.0,
            a_min: 1e-4,
            t_max: 100.0,
            tol: 1e-10,
            even_phi: vec![0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8],
            odd_phi_dot: vec![0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8],
            n_times: 16,
            a_growth_cap: 8.0,
            pca_probes: 200,
            pca_k: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Minkowski,
    FlatFlrw,
    ClosedFlrw,
    /// Closed FLRW with a(t) taken from an integrated scalar-field
    /// trajectory through `point`.
    ScalarFlrw,
}

impl MetricKind {
    fn as_str(self) -> &'static str {
        match self {
            MetricKind::Minkowski => "minkowski",
            MetricKind::FlatFlrw => "flat-flrw",
            MetricKind::ClosedFlrw => "closed-flrw",
            MetricKind::ScalarFlrw => "scalar-flrw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryScanParams {
    pub family: MetricKind,
    /// flat-flrw scale factor a(t) = t^a_power.
    pub a_power: f64,
    /// closed-flrw scale factor a(t) = a0 + a_amp sin(a_freq t).
    pub a0: f64,
    pub a_amp: f64,
    pub a_freq: f64,
    pub lambda: f64,
    /// scalar-flrw: field mass and the reduced-chart seed of the trajectory.
    pub m: f64,
    pub point: [f64; 3],
    pub h: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub x: [f64; 3],
}

impl Default for GeometryScanParams {
    fn default() -> Self {
        Self {
            family: MetricKind::Minkowski,
            a_power: 2.0 / 3.0,
            a0: 2.0,
            a_amp: 0.3,
            a_freq: 0.5,
            lambda: 0.0,
            m: 1.0,
            point: [0.2, 0.02, 0.015],
            h: 1e-3,
            t_min: 0.6,
            t_max: 1.4,
            n_t: 9,
            x: [1.1, 0.9, 0.3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexKind {
    Ring,
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientabilityParams {
    pub complex: ComplexKind,
    pub cells: usize,
    /// Ring edge positions carrying a flip.
    pub flips: Vec<usize>,
    pub nx: usize,
    pub nt: usize,
    pub periodic_x: bool,
    pub periodic_t: bool,
    pub flip_x: bool,
    pub flip_t: bool,
    pub root: usize,
    pub root_sign: i8,
}

impl Default for OrientabilityParams {
    fn default() -> Self {
        Self {
            complex: ComplexKind::Ring,
            cells: 8,
            flips: vec![0],
            nx: 4,
            nt: 4,
            periodic_x: true,
            periodic_t: false,
            flip_x: true,
            flip_t: false,
            root: 0,
            root_sign: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaubRunParams {
    pub u0: f64,
    pub p_u0: f64,
    pub branch: Sheet,
    pub q_span: f64,
    pub tol: f64,
}

impl Default for TaubRunParams {
    fn default() -> Self {
        Self { u0: 0.0, p_u0: 0.5, branch: Sheet::Plus, q_span: 20.0, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevSystem {
    Pendulum,
    Cosmo,
    Taub,
}

impl RevSystem {
    fn as_str(self) -> &'static str {
        match self {
            RevSystem::Pendulum => "pendulum",
            RevSystem::Cosmo => "cosmo",
            RevSystem::Taub => "taub",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversalCheckParams {
    pub system: RevSystem,
    /// Initial state: pendulum (theta, p); cosmo reduced (a_dot, phi,
    /// phi_dot); taub (u, p_u).
    pub state: Vec<f64>,
    pub t_horizon: f64,
    pub tol: f64,
    pub k: f64,
    pub m: f64,
    pub lambda: f64,
    pub a_min: f64,
    pub branch: Sheet,
}

impl Default for ReversalCheckParams {
    fn default() -> Self {
        Self {
            system: RevSystem::Pendulum,
            state: vec![0.8, 0.3],
            t_horizon: 30.0,
            tol: 1e-10,
            k: 1.0,
            m: 1.0,
            lambda: 0.0,
            a_min: 1e-4,
            branch: Sheet::Plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioParams {
    PendulumScan(PendulumScanParams),
    CosmoSymmetry(CosmoSymmetryParams),
    CosmoMeasure(CosmoMeasureParams),
    CosmoSurfaces(CosmoSurfacesParams),
    GeometryScan(GeometryScanParams),
    Orientability(OrientabilityParams),
    TaubRun(TaubRunParams),
    ReversalCheck(ReversalCheckParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub out: PathBuf,
    pub seed: u64,
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        match &self.params {
            ScenarioParams::PendulumScan(_) => ScenarioKind::PendulumScan,
            ScenarioParams::CosmoSymmetry(_) => ScenarioKind::CosmoSymmetry,
            ScenarioParams::CosmoMeasure(_) => ScenarioKind::CosmoMeasure,
            ScenarioParams::CosmoSurfaces(_) => ScenarioKind::CosmoSurfaces,
            ScenarioParams::GeometryScan(_) => ScenarioKind::GeometryScan,
            ScenarioParams::Orientability(_) => ScenarioKind::Orientability,
            ScenarioParams::TaubRun(_) => ScenarioKind::TaubRun,
            ScenarioParams::ReversalCheck(_) => ScenarioKind::ReversalCheck,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    /// 1-based line number; 0 when the issue concerns the whole document.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

/// Key-value bag with typed extraction; every malformed value becomes an
/// issue carrying its line number, and leftover keys are reported as unknown.
struct Bag {
    kind_line: usize,
    entries: BTreeMap<String, (usize, String)>,
    issues: Vec<ParseIssue>,
}

impl Bag {
    fn push(&mut self, line: usize, message: String) {
        self.issues.push(ParseIssue { line, message });
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        match self.take(key) {
            None => default,
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => {
                    self.push(line, format!("{key}: expected a finite number, got `{v}`"));
                    default
                }
            },
        }
    }

    fn int_or(&mut self, key: &str, default: i64) -> i64 {
        match self.take(key) {
            None => default,
            Some((line, v)) => match v.parse::<i64>() {
                Ok(x) => x,
                Err(_) => {
                    self.push(line, format!("{key}: expected an integer, got `{v}`"));
                    default
                }
            },
        }
    }

    /// Nonnegative integer with a lower bound, reported as a precondition
    /// error when violated.
    fn count_or(&mut self, key: &str, default: usize, min: usize) -> usize {
        let line = self.entries.get(key).map(|&(l, _)| l).unwrap_or(self.kind_line);
        let v = self.int_or(key, default as i64);
        if v < min as i64 {
            self.push(line, format!("{key}: must be at least {min}, got {v}"));
            return default;
        }
        v as usize
    }

    fn bool_or(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some((line, v)) => match v.as_str() {
                "true" => true,
                "false" => false,
                _ => {
                    self.push(line, format!("{key}: expected true or false, got `{v}`"));
                    default
                }
            },
        }
    }

    fn floats(&mut self, key: &str) -> Option<(usize, Vec<f64>)> {
        let (line, v) = self.take(key)?;
        let mut out = Vec::new();
        for tok in v.split_whitespace() {
            match tok.parse::<f64>() {
                Ok(x) if x.is_finite() => out.push(x),
                _ => {
                    self.push(line, format!("{key}: expected numbers, got `{tok}`"));
                    return Some((line, Vec::new()));
                }
            }
        }
        if out.is_empty() {
            self.push(line, format!("{key}: expected at least one number"));
        }
        Some((line, out))
    }

    fn list_or(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.floats(key) {
            None => default.to_vec(),
            Some((_, v)) if v.is_empty() => default.to_vec(),
            Some((_, v)) => v,
        }
    }

    fn pair_or(&mut self, key: &str, default: (f64, f64)) -> (f64, f64) {
        match self.floats(key) {
            None => default,
            Some((line, v)) => {
                if v.len() != 2 {
                    if !v.is_empty() {
                        self.push(line, format!("{key}: expected two numbers (lo hi)"));
                    }
                    return default;
                }
                if v[0] >= v[1] {
                    self.push(line, format!("{key}: lower bound must be below upper"));
                    return default;
                }
                (v[0], v[1])
            }
        }
    }

    fn choice_or(&mut self, key: &str, options: &[&str], default: &str) -> String {
        match self.take(key) {
            None => default.to_string(),
            Some((line, v)) => {
                if options.contains(&v.as_str()) {
                    v
                } else {
                    self.push(
                        line,
                        format!("{key}: expected one of {}, got `{v}`", options.join("|")),
                    );
                    default.to_string()
                }
            }
        }
    }

    /// Requires a strictly positive float.
    fn pos_or(&mut self, key: &str, default: f64) -> f64 {
        let line = self.entries.get(key).map(|&(l, _)| l).unwrap_or(self.kind_line);
        let v = self.f64_or(key, default);
        if v <= 0.0 {
            self.push(line, format!("{key}: must be positive, got {v}"));
            return default;
        }
        v
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<ParseIssue>> {
    let mut kind: Option<(usize, ScenarioKind)> = None;
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut issues: Vec<ParseIssue> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                issues.push(ParseIssue { line: lineno, message: "unterminated [section]".into() });
                continue;
            };
            match ScenarioKind::from_str(name.trim()) {
                Some(k) if kind.is_none() => kind = Some((lineno, k)),
                Some(_) => issues.push(ParseIssue {
                    line: lineno,
                    message: "only one [section] header is allowed".into(),
                }),
                None => issues.push(ParseIssue {
                    line: lineno,
                    message: format!("unknown scenario kind `{}`", name.trim()),
                }),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(ParseIssue {
                line: lineno,
                message: format!("expected `key = value`, got `{line}`"),
            });
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if kind.is_none() {
            issues.push(ParseIssue {
                line: lineno,
                message: "keys must follow a [section] header".into(),
            });
            continue;
        }
        if entries.insert(key.clone(), (lineno, value)).is_some() {
            issues.push(ParseIssue { line: lineno, message: format!("duplicate key `{key}`") });
        }
    }

    let Some((kind_line, kind)) = kind else {
        issues.push(ParseIssue { line: 0, message: "missing [section] header".into() });
        return Err(issues);
    };
    let mut bag = Bag { kind_line, entries, issues };

    let seed = {
        let line = bag.entries.get("seed").map(|&(l, _)| l).unwrap_or(kind_line);
        let v = bag.int_or("seed", 0);
        if v < 0 {
            bag.push(line, format!("seed: must be nonnegative, got {v}"));
            0
        } else {
            v as u64
        }
    };
    let out = PathBuf::from(bag.take("out").map(|(_, v)| v).unwrap_or_else(|| "out".into()));

    let params = match kind {
        ScenarioKind::PendulumScan => {
            let d = PendulumScanParams::default();
            ScenarioParams::PendulumScan(PendulumScanParams {
                k: bag.pos_or("k", d.k),
                n_samples: bag.count_or("n_samples", d.n_samples, 1),
                t_max: bag.pos_or("t_max", d.t_max),
                tol: bag.pos_or("tol", d.tol),
                band: bag.pos_or("band", d.band),
                theta: bag.pair_or("box.theta", d.theta),
                p: bag.pair_or("box.p", d.p),
                drift_samples: bag.count_or("drift_samples", d.drift_samples, 0),
                drift_horizon: bag.pos_or("drift_horizon", d.drift_horizon),
            })
        }
        ScenarioKind::CosmoSymmetry => {
            let d = CosmoSymmetryParams::default();
            let point = match bag.floats("point") {
                None => None,
                Some((line, v)) => {
                    if v.len() == 3 {
                        Some([v[0], v[1], v[2]])
                    } else {
                        if !v.is_empty() {
                            bag.push(line, "point: expected three numbers (a_dot phi phi_dot)".into());
                        }
                        None
                    }
                }
            };
            let axis_count = bag.count_or("axis_count", d.axis_count, 0);
            if axis_count % 2 != 0 {
                bag.push(kind_line, format!("axis_count: must be even, got {axis_count}"));
            }
            if axis_count == 0 && point.is_none() {
                bag.push(kind_line, "need a point or a nonzero axis_count".into());
            }
            ScenarioParams::CosmoSymmetry(CosmoSymmetryParams {
                m: bag.pos_or("m", d.m),
                lambda: bag.f64_or("lambda", d.lambda),
                a_min: bag.pos_or("a_min", d.a_min),
                t_max: bag.pos_or("t_max", d.t_max),
                tol: bag.pos_or("tol", d.tol),
                point,
                axis_count,
                axis_span: bag.pos_or("axis_span", d.axis_span),
                window: bag.pos_or("window", d.window),
            })
        }
        ScenarioKind::CosmoMeasure => {
            let d = CosmoMeasureParams::default();
            let mut epsilons = bag.list_or("epsilons", &d.epsilons);
            epsilons.sort_by(|a, b| a.partial_cmp(b).expect("finite epsilons"));
            if epsilons.iter().any(|&e| e <= 0.0) {
                bag.push(kind_line, "epsilons: all values must be positive".into());
            }
            ScenarioParams::CosmoMeasure(CosmoMeasureParams {
                m: bag.pos_or("m", d.m),
                lambda: bag.f64_or("lambda", d.lambda),
                a_min: bag.pos_or("a_min", d.a_min),
                t_max: bag.pos_or("t_max", d.t_max),
                tol: bag.pos_or("tol", d.tol),
                box_a_dot: bag.pair_or("box.a_dot", d.box_a_dot),
                box_phi: bag.pair_or("box.phi", d.box_phi),
                box_phi_dot: bag.pair_or("box.phi_dot", d.box_phi_dot),
                n_samples: bag.count_or("n_samples", d.n_samples, 100),
                epsilons,
            })
        }
        ScenarioKind::CosmoSurfaces => {
            let d = CosmoSurfacesParams::default();
            ScenarioParams::CosmoSurfaces(CosmoSurfacesParams {
                m: bag.pos_or("m", d.m),
                lambda: bag.f64_or("lambda", d.lambda),
                a_min: bag.pos_or("a_min", d.a_min),
                t_max: bag.pos_or("t_max", d.t_max),
                tol: bag.pos_or("tol", d.tol),
                even_phi: bag.list_or("even_phi", &d.even_phi),
                odd_phi_dot: bag.list_or("odd_phi_dot", &d.odd_phi_dot),
                n_times: bag.count_or("n_times", d.n_times, 2),
                a_growth_cap: {
                    let line =
                        bag.entries.get("a_growth_cap").map(|&(l, _)| l).unwrap_or(kind_line);
                    let v = bag.f64_or("a_growth_cap", d.a_growth_cap);
                    if v <= 1.0 {
                        bag.push(line, format!("a_growth_cap: must exceed 1, got {v}"));
                        d.a_growth_cap
                    } else {
                        v
                    }
                },
                pca_probes: bag.count_or("pca_probes", d.pca_probes, 1),
                pca_k: bag.count_or("pca_k", d.pca_k, 4),
            })
        }
        ScenarioKind::GeometryScan => {
            let d = GeometryScanParams::default();
            let family = match bag
                .choice_or(
                    "family",
                    &["minkowski", "flat-flrw", "closed-flrw", "scalar-flrw"],
                    "minkowski",
                )
                .as_str()
            {
                "flat-flrw" => MetricKind::FlatFlrw,
                "closed-flrw" => MetricKind::ClosedFlrw,
                "scalar-flrw" => MetricKind::ScalarFlrw,
                _ => MetricKind::Minkowski,
            };
            let point = match bag.floats("point") {
                None => d.point,
                Some((line, v)) => {
                    if v.len() == 3 {
                        [v[0], v[1], v[2]]
                    } else {
                        if !v.is_empty() {
                            bag.push(line, "point: expected three numbers (a_dot phi phi_dot)".into());
                        }
                        d.point
                    }
                }
            };
            let x = match bag.floats("x") {
                None => d.x,
                Some((line, v)) => {
                    if v.len() == 3 {
                        [v[0], v[1], v[2]]
                    } else {
                        if !v.is_empty() {
                            bag.push(line, "x: expected three spatial coordinates".into());
                        }
                        d.x
                    }
                }
            };
            let t_min = bag.f64_or("t_min", d.t_min);
            let t_max = bag.f64_or("t_max", d.t_max);
            if t_min >= t_max {
                bag.push(kind_line, "t_min must be below t_max".into());
            }
            ScenarioParams::GeometryScan(GeometryScanParams {
                family,
                a_power: bag.f64_or("a_power", d.a_power),
                a0: bag.f64_or("a0", d.a0),
                a_amp: bag.f64_or("a_amp", d.a_amp),
                a_freq: bag.f64_or("a_freq", d.a_freq),
                lambda: bag.f64_or("lambda", d.lambda),
                m: bag.pos_or("m", d.m),
                point,
                h: bag.pos_or("h", d.h),
                t_min,
                t_max,
                n_t: bag.count_or("n_t", d.n_t, 1),
                x,
            })
        }
        ScenarioKind::Orientability => {
            let d = OrientabilityParams::default();
            let complex = match bag.choice_or("complex", &["ring", "grid"], "ring").as_str() {
                "grid" => ComplexKind::Grid,
                _ => ComplexKind::Ring,
            };
            let flips = match bag.floats("flips") {
                None => d.flips,
                Some((line, v)) => {
                    let mut out = Vec::new();
                    for f in &v {
                        if *f < 0.0 || f.fract() != 0.0 {
                            bag.push(line, "flips: expected nonnegative integers".into());
                            break;
                        }
                        out.push(*f as usize);
                    }
                    out
                }
            };
            let root_sign = {
                let line = bag.entries.get("root_sign").map(|&(l, _)| l).unwrap_or(kind_line);
                let v = bag.int_or("root_sign", d.root_sign as i64);
                if v != 1 && v != -1 {
                    bag.push(line, format!("root_sign: must be 1 or -1, got {v}"));
                    d.root_sign
                } else {
                    v as i8
                }
            };
            let p = OrientabilityParams {
                complex,
                cells: bag.count_or("cells", d.cells, 3),
                flips,
                nx: bag.count_or("nx", d.nx, 1),
                nt: bag.count_or("nt", d.nt, 1),
                periodic_x: bag.bool_or("periodic_x", d.periodic_x),
                periodic_t: bag.bool_or("periodic_t", d.periodic_t),
                flip_x: bag.bool_or("flip_x", d.flip_x),
                flip_t: bag.bool_or("flip_t", d.flip_t),
                root: bag.count_or("root", d.root, 0),
                root_sign,
            };
            let n_cells = match p.complex {
                ComplexKind::Ring => p.cells,
                ComplexKind::Grid => p.nx * p.nt,
            };
            if p.root >= n_cells {
                bag.push(kind_line, format!("root: cell {} out of range (< {n_cells})", p.root));
            }
            ScenarioParams::Orientability(p)
        }
        ScenarioKind::TaubRun => {
            let d = TaubRunParams::default();
            let branch = match bag.choice_or("branch", &["plus", "minus"], "plus").as_str() {
                "minus" => Sheet::Minus,
                _ => Sheet::Plus,
            };
            ScenarioParams::TaubRun(TaubRunParams {
                u0: bag.f64_or("u0", d.u0),
                p_u0: bag.f64_or("p_u0", d.p_u0),
                branch,
                q_span: bag.pos_or("q_span", d.q_span),
                tol: bag.pos_or("tol", d.tol),
            })
        }
        ScenarioKind::ReversalCheck => {
            let d = ReversalCheckParams::default();
            let system = match bag
                .choice_or("system", &["pendulum", "cosmo", "taub"], "pendulum")
                .as_str()
            {
                "cosmo" => RevSystem::Cosmo,
                "taub" => RevSystem::Taub,
                _ => RevSystem::Pendulum,
            };
            let default_state: Vec<f64> = match system {
                RevSystem::Pendulum => vec![0.8, 0.3],
                RevSystem::Cosmo => vec![0.2, 0.02, 0.015],
                RevSystem::Taub => vec![0.0, 0.5],
            };
            let state = match bag.floats("state") {
                None => default_state.clone(),
                Some((_, v)) if v.is_empty() => default_state.clone(),
                Some((line, v)) => {
                    let want = default_state.len();
                    if v.len() != want {
                        bag.push(
                            line,
                            format!("state: {} expects {want} components", system.as_str()),
                        );
                        default_state
                    } else {
                        v
                    }
                }
            };
            let branch = match bag.choice_or("branch", &["plus", "minus"], "plus").as_str() {
                "minus" => Sheet::Minus,
                _ => Sheet::Plus,
            };
            ScenarioParams::ReversalCheck(ReversalCheckParams {
                system,
                state,
                t_horizon: bag.pos_or("t_horizon", d.t_horizon),
                tol: bag.pos_or("tol", d.tol),
                k: bag.pos_or("k", d.k),
                m: bag.pos_or("m", d.m),
                lambda: bag.f64_or("lambda", d.lambda),
                a_min: bag.pos_or("a_min", d.a_min),
                branch,
            })
        }
    };

    for (key, (line, _)) in std::mem::take(&mut bag.entries) {
        bag.push(line, format!("unknown key `{key}`"));
    }
    let mut issues = bag.issues;
    issues.sort_by_key(|i| i.line);
    if issues.is_empty() {
        Ok(Scenario { params, out, seed })
    } else {
        Err(issues)
    }
}

fn ff(v: f64) -> String {
    format!("{v:?}")
}

fn join(vs: &[f64]) -> String {
    vs.iter().map(|&v| ff(v)).collect::<Vec<_>>().join(" ")
}

/// Serializes a scenario so that `parse_scenario(print_scenario(s)) == s`;
/// all keys are emitted, including defaulted ones.
pub fn print_scenario(s: &Scenario) -> String {
    let mut o = String::new();
    o.push_str(&format!("[{}]\n", s.kind().as_str()));
    o.push_str(&format!("seed = {}\n", s.seed));
    o.push_str(&format!("out = {}\n", s.out.display()));
    match &s.params {
        ScenarioParams::PendulumScan(q) => {
            o.push_str(&format!("k = {}\n", ff(q.k)));
            o.push_str(&format!("n_samples = {}\n", q.n_samples));
            o.push_str(&format!("t_max = {}\n", ff(q.t_max)));
            o.push_str(&format!("tol = {}\n", ff(q.tol)));
            o.push_str(&format!("band = {}\n", ff(q.band)));
            o.push_str(&format!("box.theta = {} {}\n", ff(q.theta.0), ff(q.theta.1)));
            o.push_str(&format!("box.p = {} {}\n", ff(q.p.0), ff(q.p.1)));
            o.push_str(&format!("drift_samples = {}\n", q.drift_samples));
            o.push_str(&format!("drift_horizon = {}\n", ff(q.drift_horizon)));
        }
        ScenarioParams::CosmoSymmetry(q) => {
            o.push_str(&format!("m = {}\n", ff(q.m)));
            o.push_str(&format!("lambda = {}\n", ff(q.lambda)));
            o.push_str(&format!("a_min = {}\n", ff(q.a_min)));
            o.push_str(&format!("t_max = {}\n", ff(q.t_max)));
            o.push_str(&format!("tol = {}\n", ff(q.tol)));
            if let Some(p) = q.point {
                o.push_str(&format!("point = {}\n", join(&p)));
            }
            o.push_str(&format!("axis_count = {}\n", q.axis_count));
            o.push_str(&format!("axis_span = {}\n", ff(q.axis_span)));
            o.push_str(&format!("window = {}\n", ff(q.window)));
        }
        ScenarioParams::CosmoMeasure(q) => {
            o.push_str(&format!("m = {}\n", ff(q.m)));
            o.push_str(&format!("lambda = {}\n", ff(q.lambda)));
            o.push_str(&format!("a_min = {}\n", ff(q.a_min)));
            o.push_str(&format!("t_max = {}\n", ff(q.t_max)));
            o.push_str(&format!("tol = {}\n", ff(q.tol)));
            o.push_str(&format!("box.a_dot = {} {}\n", ff(q.box_a_dot.0), ff(q.box_a_dot.1)));
            o.push_str(&format!("box.phi = {} {}\n", ff(q.box_phi.0), ff(q.box_phi.1)));
            o.push_str(&format!(
                "box.phi_dot = {} {}\n",
                ff(q.box_phi_dot.0),
                ff(q.box_phi_dot.1)
            ));
            o.push_str(&format!("n_samples = {}\n", q.n_samples));
            o.push_str(&format!("epsilons = {}\n", join(&q.epsilons)));
        }
        ScenarioParams::CosmoSurfaces(q) => {
            o.push_str(&format!("m = {}\n", ff(q.m)));
            o.push_str(&format!("lambda = {}\n", ff(q.lambda)));
            o.push_str(&format!("a_min = {}\n", ff(q.a_min)));
            o.push_str(&format!("t_max = {}\n", ff(q.t_max)));
            o.push_str(&format!("tol = {}\n", ff(q.tol)));
            o.push_str(&format!("even_phi = {}\n", join(&q.even_phi)));
            o.push_str(&format!("odd_phi_dot = {}\n", join(&q.odd_phi_dot)));
            o.push_str(&format!("n_times = {}\n", q.n_times));
            o.push_str(&format!("a_growth_cap = {}\n", ff(q.a_growth_cap)));
            o.push_str(&format!("pca_probes = {}\n", q.pca_probes));
            o.push_str(&format!("pca_k = {}\n", q.pca_k));
        }
        ScenarioParams::GeometryScan(q) => {
            o.push_str(&format!("family = {}\n", q.family.as_str()));
            o.push_str(&format!("a_power = {}\n", ff(q.a_power)));
            o.push_str(&format!("a0 = {}\n", ff(q.a0)));
            o.push_str(&format!("a_amp = {}\n", ff(q.a_amp)));
            o.push_str(&format!("a_freq = {}\n", ff(q.a_freq)));
            o.push_str(&format!("lambda = {}\n", ff(q.lambda)));
            o.push_str(&format!("m = {}\n", ff(q.m)));
            o.push_str(&format!("point = {}\n", join(&q.point)));
            o.push_str(&format!("h = {}\n", ff(q.h)));
            o.push_str(&format!("t_min = {}\n", ff(q.t_min)));
            o.push_str(&format!("t_max = {}\n", ff(q.t_max)));
            o.push_str(&format!("n_t = {}\n", q.n_t));
            o.push_str(&format!("x = {}\n", join(&q.x)));
        }
        ScenarioParams::Orientability(q) => {
            o.push_str(&format!(
                "complex = {}\n",
                match q.complex {
                    ComplexKind::Ring => "ring",
                    ComplexKind::Grid => "grid",
                }
            ));
            o.push_str(&format!("cells = {}\n", q.cells));
            o.push_str(&format!(
                "flips = {}\n",
                q.flips.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            ));
            o.push_str(&format!("nx = {}\n", q.nx));
            o.push_str(&format!("nt = {}\n", q.nt));
            o.push_str(&format!("periodic_x = {}\n", q.periodic_x));
            o.push_str(&format!("periodic_t = {}\n", q.periodic_t));
            o.push_str(&format!("flip_x = {}\n", q.flip_x));
            o.push_str(&format!("flip_t = {}\n", q.flip_t));
            o.push_str(&format!("root = {}\n", q.root));
            o.push_str(&format!("root_sign = {}\n", q.root_sign));
        }
        ScenarioParams::TaubRun(q) => {
            o.push_str(&format!("u0 = {}\n", ff(q.u0)));
            o.push_str(&format!("p_u0 = {}\n", ff(q.p_u0)));
            o.push_str(&format!(
                "branch = {}\n",
                match q.branch {
                    Sheet::Plus => "plus",
                    Sheet::Minus => "minus",
                }
            ));
            o.push_str(&format!("q_span = {}\n", ff(q.q_span)));
            o.push_str(&format!("tol = {}\n", ff(q.tol)));
        }
        ScenarioParams::ReversalCheck(q) => {
            o.push_str(&format!("system = {}\n", q.system.as_str()));
            o.push_str(&format!("state = {}\n", join(&q.state)));
            o.push_str(&format!("t_horizon = {}\n", ff(q.t_horizon)));
            o.push_str(&format!("tol = {}\n", ff(q.tol)));
            o.push_str(&format!("k = {}\n", ff(q.k)));
            o.push_str(&format!("m = {}\n", ff(q.m)));
            o.push_str(&format!("lambda = {}\n", ff(q.lambda)));
            o.push_str(&format!("a_min = {}\n", ff(q.a_min)));
            o.push_str(&format!(
                "branch = {}\n",
                match q.branch {
                    Sheet::Plus => "plus",
                    Sheet::Minus => "minus",
                }
            ));
        }
    }
    o
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("runtime: {0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// CLI exit code: 2 validation, 3 runtime, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Runtime(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

fn rt(e: impl fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

/// In-memory result of executing a scenario: a summary document, the primary
/// artifacts as (file name, contents), and the typed payload that
/// [`export_plotdata`] derives plot files from.
#[derive(Debug)]
pub struct RunOutput {
    pub summary: serde_json::Value,
    pub files: Vec<(String, String)>,
    payload: Payload,
}

#[derive(Debug)]
enum Payload {
    Pendulum {
        counts: Vec<(&'static str, usize)>,
    },
    CosmoSym {
        /// (t, a, a_dot, phi, phi_dot) along the reference trajectory.
        curve: Vec<[f64; 5]>,
        /// (tau, a(t_s+tau), a(t_s-tau), phi(t_s+tau), phi(t_s-tau)).
        waveform: Vec<[f64; 5]>,
    },
    Measure {
        fractions: Vec<(f64, f64)>,
        defects: Vec<f64>,
    },
    Surfaces {
        spectra: Vec<[f64; 3]>,
    },
    None,
}

fn csv(header: &str, rows: &[Vec<String>]) -> String {
    let mut o = String::from(header);
    o.push('\n');
    for r in rows {
        o.push_str(&r.join(","));
        o.push('\n');
    }
    o
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Runs the experiment described by the scenario and collects the artifacts
/// in memory; no files are touched.
pub fn execute_scenario(s: &Scenario) -> Result<RunOutput, RunError> {
    let (metrics, files, payload) = match &s.params {
        ScenarioParams::PendulumScan(q) => exec_pendulum(q, s.seed)?,
        ScenarioParams::CosmoSymmetry(q) => exec_cosmo_symmetry(q)?,
        ScenarioParams::CosmoMeasure(q) => exec_cosmo_measure(q, s.seed)?,
        ScenarioParams::CosmoSurfaces(q) => exec_cosmo_surfaces(q, s.seed)?,
        ScenarioParams::GeometryScan(q) => exec_geometry_scan(q)?,
        ScenarioParams::Orientability(q) => exec_orientability(q)?,
        ScenarioParams::TaubRun(q) => exec_taub(q)?,
        ScenarioParams::ReversalCheck(q) => exec_reversal(q)?,
    };
    let summary = json!({
        "kind": s.kind().as_str(),
        "seed": s.seed,
        "config": print_scenario(s),
        "metrics": metrics,
    });
    Ok(RunOutput { summary, files, payload })
}

/// Derives plot-ready CSV files from a completed run: a(t) curves and phase
/// portraits for cosmology runs, log-log fraction tables and defect
/// histograms for measure runs, class counts for pendulum scans.
pub fn export_plotdata(out: &RunOutput) -> Result<Vec<(String, String)>, RunError> {
    let mut files = Vec::new();
    match &out.payload {
        Payload::Pendulum { counts } => {
            let rows: Vec<Vec<String>> =
                counts.iter().map(|(c, n)| vec![c.to_string(), n.to_string()]).collect();
            files.push(("plot_class_counts.csv".to_string(), csv("class,count", &rows)));
        }
        Payload::CosmoSym { curve, waveform } => {
            let rows: Vec<Vec<String>> =
                curve.iter().map(|r| r.iter().map(|&v| fmt_g17(v)).collect()).collect();
            files.push(("plot_a_of_t.csv".to_string(), csv("t,a,a_dot,phi,phi_dot", &rows)));
            let rows: Vec<Vec<String>> =
                curve.iter().map(|r| vec![fmt_g17(r[1]), fmt_g17(r[2])]).collect();
            files.push(("plot_phase.csv".to_string(), csv("a,a_dot", &rows)));
            let rows: Vec<Vec<String>> =
                waveform.iter().map(|r| r.iter().map(|&v| fmt_g17(v)).collect()).collect();
            files.push((
                "plot_waveform.csv".to_string(),
                csv("tau,a_plus,a_minus,phi_plus,phi_minus", &rows),
            ));
        }
        Payload::Measure { fractions, defects } => {
            let rows: Vec<Vec<String>> = fractions
                .iter()
                .filter(|&&(_, f)| f > 0.0)
                .map(|&(e, f)| vec![fmt_g17(e.log10()), fmt_g17(f.log10())])
                .collect();
            files.push((
                "plot_loglog.csv".to_string(),
                csv("log10_epsilon,log10_fraction", &rows),
            ));
            // 45 logarithmic bins over [1e-9, 1), plus under/overflow rows.
            let edges: Vec<f64> = (0..=45).map(|k| 10f64.powf(-9.0 + 0.2 * k as f64)).collect();
            let mut counts = vec![0usize; 47];
            for &d in defects {
                let slot = if d < edges[0] {
                    0
                } else if d >= edges[45] {
                    46
                } else {
                    1 + edges.windows(2).position(|w| d >= w[0] && d < w[1]).unwrap_or(44)
                };
                counts[slot] += 1;
            }
            let mut rows = Vec::new();
            rows.push(vec![fmt_g17(0.0), fmt_g17(edges[0]), counts[0].to_string()]);
            for k in 0..45 {
                rows.push(vec![
                    fmt_g17(edges[k]),
                    fmt_g17(edges[k + 1]),
                    counts[k + 1].to_string(),
                ]);
            }
            rows.push(vec![fmt_g17(edges[45]), fmt_g17(f64::INFINITY), counts[46].to_string()]);
            files.push(("plot_defect_hist.csv".to_string(), csv("bin_lo,bin_hi,count", &rows)));
        }
        Payload::Surfaces { spectra } => {
            let rows: Vec<Vec<String>> = spectra
                .iter()
                .map(|sv| {
                    let ratio = if sv[1] > 0.0 { sv[2] / sv[1] } else { 0.0 };
                    vec![fmt_g17(sv[0]), fmt_g17(sv[1]), fmt_g17(sv[2]), fmt_g17(ratio)]
                })
                .collect();
            files.push(("plot_pca.csv".to_string(), csv("s1,s2,s3,ratio32", &rows)));
        }
        Payload::None => {}
    }
    Ok(files)
}

type ExecResult = Result<(serde_json::Value, Vec<(String, String)>, Payload), RunError>;

fn exec_pendulum(q: &PendulumScanParams, seed: u64) -> ExecResult {
    let pp = PendulumParams::new(q.k);
    let e_sep = pp.separatrix_energy();
    let q = q.clone();

    struct Row {
        state: PendulumState,
        e: f64,
        ana: AnalyticClass,
        num: NumericClass,
        drift: Option<f64>,
    }

    let rows: Vec<Row> = (0..q.n_samples)
        .into_par_iter()
        .map(|i| -> Result<Row, RunError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut state = None;
            for _ in 0..10_000 {
                let cand = PendulumState {
                    theta: rng.gen_range(q.theta.0..q.theta.1),
                    p_theta: rng.gen_range(q.p.0..q.p.1),
                };
                if (energy(&cand, &pp) - e_sep).abs() > q.band * q.k * q.k {
                    state = Some(cand);
                    break;
                }
            }
            let state = state.ok_or_else(|| {
                RunError::Runtime("sampling box lies entirely in the excluded band".into())
            })?;
            let e = energy(&state, &pp);
            let ana = classify_analytic(&state, &pp);
            let num = classify_numeric(&state, &pp, q.t_max, q.tol).map_err(rt)?;
            let drift = if i < q.drift_samples {
                let sys = PendulumSystem { params: pp };
                let x0 = StateVector::new(0.0, vec![state.theta, state.p_theta]);
                let traj =
                    odecore::integrate(&sys, &x0, q.drift_horizon, q.tol).map_err(rt)?.trajectory;
                let end = traj.last();
                let e_end = energy(
                    &PendulumState { theta: end.x[0], p_theta: end.x[1] },
                    &pp,
                );
                Some((e_end - e).abs() / e.abs().max(1.0))
            } else {
                None
            };
            Ok(Row { state, e, ana, num, drift })
        })
        .collect::<Result<_, _>>()?;

    let ana_str = |c: AnalyticClass| match c {
        AnalyticClass::Reversible => "reversible",
        AnalyticClass::Irreversible => "irreversible",
        AnalyticClass::Separatrix => "separatrix",
    };
    let num_str = |c: NumericClass| match c {
        NumericClass::Reversible => "reversible",
        NumericClass::Irreversible => "irreversible",
        NumericClass::Undetermined => "undetermined",
    };

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_g17(r.state.theta),
                fmt_g17(r.state.p_theta),
                fmt_g17(r.e),
                ana_str(r.ana).to_string(),
                num_str(r.num).to_string(),
            ]
        })
        .collect();
    let files = vec![(
        "pendulum.csv".to_string(),
        csv("theta0,p0,energy,class_analytic,class_numeric", &csv_rows),
    )];

    let agree = rows.iter().filter(|r| ana_str(r.ana) == num_str(r.num)).count();
    let max_drift = rows.iter().filter_map(|r| r.drift).fold(0.0f64, f64::max);
    let mut counts: Vec<(&'static str, usize)> = Vec::new();
    for c in ["reversible", "irreversible", "undetermined"] {
        counts.push((c, rows.iter().filter(|r| num_str(r.num) == c).count()));
    }

    let metrics = json!({
        "n_samples": rows.len(),
        "agreement_rate": agree as f64 / rows.len() as f64,
        "max_energy_drift": max_drift,
        "counts_numeric": counts.iter().map(|&(c, n)| json!({"class": c, "count": n})).collect::<Vec<_>>(),
        "tolerances": {"tol": q.tol, "band": q.band},
    });
    Ok((metrics, files, Payload::Pendulum { counts }))
}

fn cosmo_params(m: f64, lambda: f64, a_min: f64, t_max: f64, tol: f64) -> Result<CosmoParams, RunError> {
    let p = CosmoParams { m, lambda, k: 1, a_min, t_max, tol };
    p.validate().map_err(|e| RunError::Validation(e.to_string()))?;
    Ok(p)
}

/// Input-dependent admissibility failures are validation errors; everything
/// else is a runtime failure.
fn cosmo_err(e: CosmoError) -> RunError {
    match e {
        CosmoError::NoSolution | CosmoError::Divergent | CosmoError::BadParams(_) => {
            RunError::Validation(e.to_string())
        }
        other => RunError::Runtime(other.to_string()),
    }
}

fn exec_cosmo_symmetry(q: &CosmoSymmetryParams) -> ExecResult {
    let p = cosmo_params(q.m, q.lambda, q.a_min, q.t_max, q.tol)?;
    let kind_str = |k: &SymmetryKind| match k {
        SymmetryKind::Even => "even",
        SymmetryKind::Odd => "odd",
        SymmetryKind::None => "none",
    };

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut max_axis_defect = 0.0f64;
    let half = q.axis_count / 2;
    let mut axis_jobs: Vec<(&str, f64, ReducedPoint, WaveKind)> = Vec::new();
    for i in 1..=half {
        let v = q.axis_span * i as f64 / half as f64;
        axis_jobs.push((
            "axis-even",
            v,
            ReducedPoint { a_dot: 0.0, phi: v, phi_dot: 0.0 },
            WaveKind::Even,
        ));
        axis_jobs.push((
            "axis-odd",
            v,
            ReducedPoint { a_dot: 0.0, phi: 0.0, phi_dot: v },
            WaveKind::Odd,
        ));
    }
    let checks: Vec<(usize, cosmo::WaveformCheck)> = axis_jobs
        .par_iter()
        .enumerate()
        .map(|(i, (_, _, r, wk))| {
            waveform_symmetry_check(r, 0.0, *wk, q.window, &p).map(|c| (i, c)).map_err(cosmo_err)
        })
        .collect::<Result<_, _>>()?;
    for (i, check) in checks {
        let (src, seed_v, _, wk) = &axis_jobs[i];
        max_axis_defect = max_axis_defect.max(check.defect);
        rows.push(vec![
            src.to_string(),
            fmt_g17(*seed_v),
            fmt_g17(check.defect),
            fmt_g17(0.0),
            match wk {
                WaveKind::Even => "even".to_string(),
                WaveKind::Odd => "odd".to_string(),
            },
            fmt_g17(check.defect),
        ]);
    }

    let mut point_metrics = serde_json::Value::Null;
    // Reference trajectory for the plot payload: the explicit point, or the
    // outermost even-axis seed.
    let (plot_r, plot_ts) = match q.point {
        Some(pt) => {
            let r = ReducedPoint { a_dot: pt[0], phi: pt[1], phi_dot: pt[2] };
            let rep = symmetry_defect(&r, &p, &SymmetryScales::default()).map_err(cosmo_err)?;
            rows.push(vec![
                "point".to_string(),
                fmt_g17(f64::NAN),
                fmt_g17(rep.defect),
                fmt_g17(rep.t_s.unwrap_or(f64::NAN)),
                kind_str(&rep.kind).to_string(),
                fmt_g17(rep.waveform_defect.unwrap_or(f64::NAN)),
            ]);
            point_metrics = json!({
                "defect": rep.defect,
                "t_s": rep.t_s,
                "kind": kind_str(&rep.kind),
                "waveform_defect": rep.waveform_defect,
                "partial": rep.partial,
            });
            (r, rep.t_s.unwrap_or(0.0))
        }
        None => (
            ReducedPoint { a_dot: 0.0, phi: q.axis_span, phi_dot: 0.0 },
            0.0,
        ),
    };

    let files = vec![(
        "symmetry.csv".to_string(),
        csv("source,seed,defect,t_s,kind,waveform_defect", &rows),
    )];

    // Plot payload: sample the two-sided trajectory around the reference.
    let span = plot_ts.abs() + q.window;
    let wide = CosmoParams { t_max: span * 1.001 + 1e-9, ..p };
    let s0 = reconstruct(&plot_r, &p).map_err(cosmo_err)?;
    let two = TwoSided::integrate(&s0, &wide).map_err(cosmo_err)?;
    let (lo, hi) = (two.t_lo(), two.t_hi());
    let mut curve = Vec::new();
    let mut max_constraint = 0.0f64;
    for t in linspace(lo, hi, 400) {
        if let Ok(y) = two.eval(t) {
            curve.push([t, y[0], y[1], y[2], y[3]]);
            let s = cosmo::CosmoState { a: y[0], a_dot: y[1], phi: y[2], phi_dot: y[3], t };
            max_constraint = max_constraint.max(cosmo::constraint_residual(&s, &p));
        }
    }
    let w_eff = q.window.min(hi - plot_ts).min(plot_ts - lo);
    let mut waveform = Vec::new();
    if w_eff > 0.0 {
        for i in 1..=256usize {
            let tau = w_eff * i as f64 / 256.0;
            if let (Ok(a), Ok(b)) = (two.eval(plot_ts + tau), two.eval(plot_ts - tau)) {
                waveform.push([tau, a[0], b[0], a[2], b[2]]);
            }
        }
    }

    let metrics = json!({
        "n_axis_checks": 2 * half,
        "max_axis_waveform_defect": if half > 0 { json!(max_axis_defect) } else { serde_json::Value::Null },
        "point": point_metrics,
        "max_constraint_residual": max_constraint,
        "tolerances": {"tol": q.tol},
    });
    Ok((metrics, files, Payload::CosmoSym { curve, waveform }))
}

fn exec_cosmo_measure(q: &CosmoMeasureParams, seed: u64) -> ExecResult {
    let p = cosmo_params(q.m, q.lambda, q.a_min, q.t_max, q.tol)?;
    let sbox = SamplingBox { a_dot: q.box_a_dot, phi: q.box_phi, phi_dot: q.box_phi_dot };
    let run = estimate_symmetric_fraction(q.n_samples, &sbox, &q.epsilons, seed, &p)
        .map_err(cosmo_err)?;
    let (exponent, r2) = fit_scaling_exponent(&run.fractions).map_err(rt)?;

    let sample_rows: Vec<Vec<String>> = run
        .samples
        .iter()
        .map(|s| {
            vec![
                fmt_g17(s.point.a_dot),
                fmt_g17(s.point.phi),
                fmt_g17(s.point.phi_dot),
                fmt_g17(s.report.defect),
                match s.report.kind {
                    SymmetryKind::Even => "even".to_string(),
                    SymmetryKind::Odd => "odd".to_string(),
                    SymmetryKind::None => "none".to_string(),
                },
                fmt_g17(s.report.t_s.unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    let fraction_rows: Vec<Vec<String>> =
        run.fractions.iter().map(|&(e, f)| vec![fmt_g17(e), fmt_g17(f)]).collect();
    let files = vec![
        ("samples.csv".to_string(), csv("a_dot,phi,phi_dot,defect,kind,t_s", &sample_rows)),
        ("fractions.csv".to_string(), csv("epsilon,fraction", &fraction_rows)),
    ];

    let zero = run.samples.iter().filter(|s| s.report.defect < 1e-9).count();
    let metrics = json!({
        "n_samples": q.n_samples,
        "exponent": exponent,
        "r_squared": r2,
        "fractions": run.fractions.iter().map(|&(e, f)| json!([e, f])).collect::<Vec<_>>(),
        "zero_defect_count": zero,
        "rejected_draws": run.rejected_draws,
        "tolerances": {"tol": q.tol},
    });
    let defects = run.samples.iter().map(|s| s.report.defect).collect();
    Ok((metrics, files, Payload::Measure { fractions: run.fractions.clone(), defects }))
}

fn exec_cosmo_surfaces(q: &CosmoSurfacesParams, seed: u64) -> ExecResult {
    let p = cosmo_params(q.m, q.lambda, q.a_min, q.t_max, q.tol)?;
    let grid = AxisGrid {
        even_phi: q.even_phi.clone(),
        odd_phi_dot: q.odd_phi_dot.clone(),
        n_times: q.n_times,
        a_growth_cap: q.a_growth_cap,
    };
    let cloud = cosmo::build_symmetric_surfaces(&grid, &p).map_err(cosmo_err)?;

    let rows: Vec<Vec<String>> = cloud
        .points
        .iter()
        .map(|pt| {
            vec![
                match pt.axis {
                    cosmo::Axis::Even => "even".to_string(),
                    cosmo::Axis::Odd => "odd".to_string(),
                },
                fmt_g17(pt.seed),
                fmt_g17(pt.t),
                fmt_g17(pt.a_dot),
                fmt_g17(pt.phi),
                fmt_g17(pt.phi_dot),
            ]
        })
        .collect();
    let files =
        vec![("surfaces.csv".to_string(), csv("axis,seed,t,a_dot,phi,phi_dot", &rows))];

    let pts: Vec<[f64; 3]> =
        cloud.points.iter().map(|pt| [pt.a_dot, pt.phi, pt.phi_dot]).collect();
    if pts.len() <= q.pca_k {
        return Err(RunError::Runtime(format!(
            "surface cloud has {} points, too few for k = {} patches",
            pts.len(),
            q.pca_k
        )));
    }
    let spectra = local_pca_spectra(&pts, q.pca_probes, q.pca_k, seed);
    let ratios: Vec<f64> = spectra
        .iter()
        .map(|sv| if sv[1] > 0.0 { sv[2] / sv[1] } else if sv[2] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let ok = ratios.iter().filter(|&&r| r < 0.05).count();
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(f64::NAN);

    let metrics = json!({
        "n_points": cloud.points.len(),
        "skipped_seeds": cloud.skipped_seeds,
        "pca": {
            "probes": spectra.len(),
            "k": q.pca_k,
            "fraction_third_below_5pct": ok as f64 / spectra.len() as f64,
            "median_ratio32": median,
        },
        "tolerances": {"tol": q.tol},
    });
    Ok((metrics, files, Payload::Surfaces { spectra }))
}

/// Closed-form FLRW Ricci for the (+,-,-,-) convention used by the
/// curvature module: R_00 = -3 addot/a, R_ij = (a addot + 2 adot^2 + 2k) h_ij
/// with h the comoving 3-metric.
fn flrw_ricci_oracle(a: f64, ad: f64, add: f64, k: f64, h3: [f64; 3]) -> nalgebra::Matrix4<f64> {
    let spatial = a * add + 2.0 * ad * ad + 2.0 * k;
    nalgebra::Matrix4::from_diagonal(
        &[-3.0 * add / a, spatial * h3[0], spatial * h3[1], spatial * h3[2]].into(),
    )
}

fn exec_geometry_scan(q: &GeometryScanParams) -> ExecResult {
    let metric = match q.family {
        MetricKind::Minkowski => MetricField::minkowski(),
        MetricKind::FlatFlrw => {
            let pw = q.a_power;
            MetricField::flat_flrw(move |t| t.powf(pw))
        }
        MetricKind::ClosedFlrw => {
            let (a0, amp, fr) = (q.a0, q.a_amp, q.a_freq);
            MetricField::closed_flrw(move |t| a0 + amp * (fr * t).sin())
        }
        MetricKind::ScalarFlrw => {
            // a(t) from an integrated scalar-field trajectory on the closed
            // chart; the scan window must stay inside the integrated span
            // (curvature stencils probe t +- 2h).
            let p = cosmo_params(
                q.m,
                q.lambda,
                1e-4,
                q.t_min.abs().max(q.t_max.abs()) + 1.0,
                1e-10,
            )?;
            let r = ReducedPoint { a_dot: q.point[0], phi: q.point[1], phi_dot: q.point[2] };
            let s0 = reconstruct(&r, &p).map_err(cosmo_err)?;
            let two = TwoSided::integrate(&s0, &p).map_err(cosmo_err)?;
            let margin = 4.0 * q.h;
            if q.t_min - margin < two.t_lo() || q.t_max + margin > two.t_hi() {
                return Err(RunError::Runtime(format!(
                    "scan window [{}, {}] exceeds the integrated span [{}, {}]",
                    q.t_min,
                    q.t_max,
                    two.t_lo(),
                    two.t_hi()
                )));
            }
            let two = std::sync::Arc::new(two);
            MetricField::closed_flrw(move |t| {
                two.eval(t).map(|y| y[0]).unwrap_or(f64::NAN)
            })
        }
    };

    let mut rows = Vec::new();
    let mut dec_pass = 0usize;
    let mut momentum_ok = 0usize;
    let mut max_res = 0.0f64;
    let mut max_tau = 0.0f64;
    let mut max_ricci_err: Option<f64> = None;
    let mut max_dual_abs = 0.0f64;
    let mut max_dual_rel = 0.0f64;
    let times = linspace(q.t_min, q.t_max, q.n_t);
    for &t in &times {
        let x = [t, q.x[0], q.x[1], q.x[2]];
        let bundle = curvature(&metric, &x, q.h).map_err(rt)?;
        let tt = stress_energy(&bundle, q.lambda);
        let dec = type_one_decomposition(&tt, &bundle.g).map_err(rt)?;
        let (ok, margin) = dominant_energy_check(&dec);
        let ps = pseudotensor(&metric, &x, q.h).map_err(rt)?;
        let res = conservation_residual(&metric, &x, q.h).map_err(rt)?;

        // Cross-check the finite-difference Ricci against the closed form
        // where one exists.
        let oracle = match q.family {
            MetricKind::FlatFlrw => {
                let pw = q.a_power;
                let (a, ad, add) =
                    (t.powf(pw), pw * t.powf(pw - 1.0), pw * (pw - 1.0) * t.powf(pw - 2.0));
                Some(flrw_ricci_oracle(a, ad, add, 0.0, [1.0; 3]))
            }
            MetricKind::ClosedFlrw => {
                let a = q.a0 + q.a_amp * (q.a_freq * t).sin();
                let ad = q.a_amp * q.a_freq * (q.a_freq * t).cos();
                let add = -q.a_amp * q.a_freq * q.a_freq * (q.a_freq * t).sin();
                let sc2 = x[1].sin().powi(2);
                let st2 = x[2].sin().powi(2);
                Some(flrw_ricci_oracle(a, ad, add, 1.0, [1.0, sc2, sc2 * st2]))
            }
            _ => None,
        };
        if let Some(oracle) = oracle {
            let err = (bundle.ricci - oracle).norm();
            max_ricci_err = Some(max_ricci_err.unwrap_or(0.0).max(err));
        }

        // Dual-path agreement of the gravitational energy density.
        let ps_ana =
            pseudotensor_with(&metric, &x, q.h, PERT_STEP, SlotDiffPath::Analytic).map_err(rt)?;
        let (num00, ana00) = (ps.tau[(0, 0)], ps_ana.tau[(0, 0)]);
        let abs_diff = (num00 - ana00).abs();
        max_dual_abs = max_dual_abs.max(abs_diff);
        max_dual_rel = max_dual_rel.max(abs_diff / num00.abs().max(ana00.abs()).max(1e-300));
        // Matter energy-momentum current in the orthonormal frame for the
        // causality check (DEC implies both conditions); the supported
        // families are all diagonal.
        let g = &bundle.g;
        let t_up = bundle.g_inv * tt * bundle.g_inv;
        let frame = [
            t_up[(0, 0)] * g[(0, 0)],
            t_up[(0, 1)] * g[(0, 0)].sqrt() * (-g[(1, 1)]).max(0.0).sqrt(),
            t_up[(0, 2)] * g[(0, 0)].sqrt() * (-g[(2, 2)]).max(0.0).sqrt(),
            t_up[(0, 3)] * g[(0, 0)].sqrt() * (-g[(3, 3)]).max(0.0).sqrt(),
        ];
        let (nonneg, causal) = momentum_condition_check(&frame);

        dec_pass += ok as usize;
        momentum_ok += (nonneg && causal) as usize;
        max_res = max_res.max(res);
        for i in 0..4 {
            for j in 0..4 {
                max_tau = max_tau.max(ps.tau[(i, j)].abs());
            }
        }
        rows.push(vec![
            fmt_g17(t),
            fmt_g17(x[1]),
            fmt_g17(x[2]),
            fmt_g17(x[3]),
            fmt_g17(dec.s0),
            fmt_g17(dec.s[0]),
            fmt_g17(dec.s[1]),
            fmt_g17(dec.s[2]),
            (ok as u8).to_string(),
            fmt_g17(margin),
            fmt_g17(ps.tau[(0, 0)]),
            fmt_g17(ps.tau[(0, 1)]),
            fmt_g17(ps.tau[(0, 2)]),
            fmt_g17(ps.tau[(0, 3)]),
            fmt_g17(res),
        ]);
    }
    let files = vec![(
        "scan.csv".to_string(),
        csv(
            "t,x,y,z,s0,s1,s2,s3,dec_pass,dec_margin,tau00,tau0x,tau0y,tau0z,conservation_residual",
            &rows,
        ),
    )];
    let metrics = json!({
        "family": q.family.as_str(),
        "n_points": times.len(),
        "dec_pass_rate": dec_pass as f64 / times.len() as f64,
        "momentum_ok_rate": momentum_ok as f64 / times.len() as f64,
        "max_conservation_residual": max_res,
        "max_abs_tau": max_tau,
        "max_ricci_oracle_error": max_ricci_err,
        "dual_path_tau00_max_abs_diff": max_dual_abs,
        "dual_path_tau00_max_rel_diff": max_dual_rel,
        "tolerances": {"h": q.h},
    });
    Ok((metrics, files, Payload::None))
}

fn exec_orientability(q: &OrientabilityParams) -> ExecResult {
    let complex = match q.complex {
        ComplexKind::Ring => OrientationComplex::ring(q.cells, &q.flips),
        ComplexKind::Grid => OrientationComplex::grid(
            q.nx,
            q.nt,
            q.periodic_x,
            q.periodic_t,
            q.flip_x,
            q.flip_t,
        ),
    }
    .map_err(|e| RunError::Validation(e.to_string()))?;
    let assignment = assign_orientation(&complex, q.root, q.root_sign)
        .map_err(|e| RunError::Validation(e.to_string()))?;

    let rows: Vec<Vec<String>> = assignment
        .signs
        .iter()
        .enumerate()
        .map(|(i, &s)| vec![i.to_string(), s.to_string()])
        .collect();
    let files = vec![("orientation.csv".to_string(), csv("cell,sign", &rows))];

    let witness_parity = if assignment.consistent {
        serde_json::Value::Null
    } else {
        match cycle_flip_parity(&complex, &assignment.witness_cycle) {
            Some(p) => json!(p),
            None => serde_json::Value::Null,
        }
    };
    let metrics = json!({
        "verdict": if assignment.consistent { "orientable" } else { "non-orientable" },
        "n_cells": complex.n_cells(),
        "n_edges": complex.edges().len(),
        "witness_cycle": assignment.witness_cycle,
        "witness_parity_odd": witness_parity,
    });
    Ok((metrics, files, Payload::None))
}

fn exec_taub(q: &TaubRunParams) -> ExecResult {
    let st = reduced_evolution(q.u0, q.p_u0, q.branch, q.q_span, q.tol).map_err(rt)?;
    let twin = twin_map(&st);

    let mut taub_csv = Vec::new();
    st.write_csv(&mut taub_csv)?;
    let mut twin_csv = Vec::new();
    twin.write_csv(&mut twin_csv)?;
    let files = vec![
        ("taub.csv".to_string(), String::from_utf8(taub_csv).expect("ascii csv")),
        ("twin.csv".to_string(), String::from_utf8(twin_csv).expect("ascii csv")),
    ];

    let start = st.state_at(0.0).map_err(rt)?;
    let (res0, _) = sheet_residual(&start).map_err(rt)?;

    let h0 = reduced_hamiltonian(q.u0, q.p_u0, q.branch);
    let mut h_drift = 0.0f64;
    for i in 0..st.traj.len() {
        let sv = st.traj.sample(i);
        h_drift = h_drift.max((reduced_hamiltonian(sv.x[0], sv.x[1], q.branch) - h0).abs());
    }

    // The twin must be a genuine trajectory of the opposite sheet: re-run the
    // opposite dynamics from the twin's first sample and compare at the
    // twin's own sample states (its resampled interpolation is coarser than
    // the integrator's dense output and would dominate the comparison).
    let sys = ReducedSheetSystem { branch: twin.branch };
    let first = twin.traj.first();
    let rerun =
        odecore::integrate(&sys, &first, twin.traj.t_last(), q.tol).map_err(rt)?.trajectory;
    let mut twin_res = 0.0f64;
    for i in 0..twin.traj.len() {
        let s = twin.traj.sample(i);
        if !rerun.contains(s.t) {
            continue;
        }
        let a = rerun.eval(s.t).map_err(rt)?;
        let d = a.iter().zip(&s.x).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        twin_res = twin_res.max(d);
    }

    let tt = twin_map(&twin);
    let mut involutive = tt.branch == st.branch && tt.traj.len() == st.traj.len();
    if involutive {
        for i in 0..st.traj.len() {
            let (a, b) = (st.traj.sample(i), tt.traj.sample(i));
            if a.t != b.t || a.x != b.x {
                involutive = false;
                break;
            }
        }
    }

    let metrics = json!({
        "branch": match q.branch { Sheet::Plus => "plus", Sheet::Minus => "minus" },
        "sheet_residual": res0,
        "h_drift": h_drift,
        "twin_dynamics_residual": twin_res,
        "twin_involutive": involutive,
        "tolerances": {"tol": q.tol},
    });
    Ok((metrics, files, Payload::None))
}

fn exec_reversal(q: &ReversalCheckParams) -> ExecResult {
    let defect = match q.system {
        RevSystem::Pendulum => {
            let sys = PendulumSystem { params: PendulumParams::new(q.k) };
            let x0 = StateVector::new(0.0, q.state.clone());
            odecore::check_reversal_property(
                &sys,
                &crate::pendulum::reversal_involution(),
                &x0,
                q.t_horizon,
                q.tol,
            )
            .map_err(rt)?
        }
        RevSystem::Cosmo => {
            let p = cosmo_params(q.m, q.lambda, q.a_min, q.t_horizon * 1.001 + 1.0, q.tol)?;
            let r = ReducedPoint { a_dot: q.state[0], phi: q.state[1], phi_dot: q.state[2] };
            let s0 = reconstruct(&r, &p).map_err(cosmo_err)?;
            let sys = CosmoSystem { params: p };
            let x0 = StateVector::new(0.0, vec![s0.a, s0.a_dot, s0.phi, s0.phi_dot]);
            odecore::check_reversal_property(
                &sys,
                &cosmo::reversal_involution(),
                &x0,
                q.t_horizon,
                q.tol,
            )
            .map_err(rt)?
        }
        RevSystem::Taub => {
            // q -> -q with p_u -> -p_u maps the sheet flow onto itself: the
            // reduced Hamiltonian is even in p_u.
            let sys = ReducedSheetSystem { branch: q.branch };
            let x0 = StateVector::new(0.0, q.state.clone());
            let inv = ReversalInvolution::new(vec![1.0, -1.0]);
            odecore::check_reversal_property(&sys, &inv, &x0, q.t_horizon, q.tol).map_err(rt)?
        }
    };

    let rows = vec![vec![
        q.system.as_str().to_string(),
        fmt_g17(q.t_horizon),
        fmt_g17(q.tol),
        fmt_g17(defect),
    ]];
    let files = vec![("reversal.csv".to_string(), csv("system,t_horizon,tol,defect", &rows))];
    let metrics = json!({
        "system": q.system.as_str(),
        "defect": defect,
        "t_horizon": q.t_horizon,
        "tolerances": {"tol": q.tol},
    });
    Ok((metrics, files, Payload::None))
}

fn write_atomic(dir: &Path, name: &str, data: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, data)?;
    fs::rename(&tmp, dir.join(name))
}

#[derive(Debug)]
pub struct RunReport {
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
}

/// Executes the scenario and writes every artifact (primary files, derived
/// plot files, and `summary.json`) atomically into the output directory.
pub fn run_scenario(s: &Scenario) -> Result<RunReport, RunError> {
    let out = execute_scenario(s)?;
    let plots = export_plotdata(&out)?;
    fs::create_dir_all(&s.out)?;
    let mut written = Vec::new();
    for (name, data) in out.files.iter().chain(plots.iter()) {
        write_atomic(&s.out, name, data.as_bytes())?;
        written.push(s.out.join(name));
    }
    let mut text = serde_json::to_string_pretty(&out.summary).expect("serializable summary");
    text.push('\n');
    write_atomic(&s.out, "summary.json", text.as_bytes())?;
    written.push(s.out.join("summary.json"));
    Ok(RunReport { summary: out.summary, files: written })
}
