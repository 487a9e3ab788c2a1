//! Scenario configuration: TOML schema, overrides and positioned errors.
//!
//! Keys carry their unit as a suffix (`_ms`, `_mm`, `_mm_per_s`, `_deg`,
//! `_gauss`, ...); values are converted to SI when the run is built.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};

use crate::error::{Error, Result};
use crate::physics::TissueParams;
use crate::sequence::{Excitation, FlashParams, SliceProfileParams, Spoiling, SpokeOrder};
use crate::timeint::{Method, SolverConfig};
use crate::units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[default]
    StaticPhantom,
    YuanSlice,
    ThroughPlane,
    Pulsatile,
    Custom,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::StaticPhantom => "static-phantom",
            ScenarioKind::YuanSlice => "yuan-slice",
            ScenarioKind::ThroughPlane => "through-plane",
            ScenarioKind::Pulsatile => "pulsatile",
            ScenarioKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Independent isochromats at cell centres (static objects only).
    #[default]
    Isochromat,
    /// Upwind discontinuous Galerkin.
    Dg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    /// Resolved axes, any ordered subset of "xyz".
    pub axes: String,
    pub lower_mm: Vec<f64>,
    pub upper_mm: Vec<f64>,
    pub cells: Vec<usize>,
    pub discretization: Discretization,
    /// Polynomial degree per axis for `dg`.
    pub degree: usize,
    /// Isochromats per cell for `isochromat`; must be a perfect power of
    /// the mesh dimension (1, 8, 27, ... in 3D).
    pub isochromats_per_cell: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            axes: "xyz".into(),
            lower_mm: vec![-2.4, -2.4, -9.0],
            upper_mm: vec![2.4, 2.4, 9.0],
            cells: vec![27, 27, 45],
            discretization: Discretization::Isochromat,
            degree: 2,
            isochromats_per_cell: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueRow {
    pub label: String,
    pub t1_ms: f64,
    pub t2_ms: f64,
    #[serde(default = "one")]
    pub m0: f64,
}

fn one() -> f64 {
    1.0
}

impl TissueRow {
    pub fn params(&self) -> Result<TissueParams<f64>> {
        TissueParams::new(units::ms(self.t1_ms), units::ms(self.t2_ms), self.m0)
    }
}

/// Tissue assignment for `custom` runs; later boxes win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionRow {
    pub label: String,
    pub lower_mm: [f64; 3],
    pub upper_mm: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    #[default]
    Flash,
    SliceProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExcitationKind {
    #[default]
    Hard,
    Sinc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpoilingKind {
    None,
    #[default]
    Ideal,
    RfRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpokeOrderKind {
    #[default]
    Sequential,
    Golden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSection {
    pub kind: SequenceKind,
    pub tr_ms: f64,
    /// Echo time from the centre of the excitation.
    pub te_ms: f64,
    pub flip_deg: f64,
    pub spokes_per_frame: usize,
    pub frames: usize,
    pub excitation: ExcitationKind,
    pub rf_duration_ms: f64,
    /// Sinc time-bandwidth product; derived from the slice gradient when
    /// that is given.
    pub time_bandwidth: f64,
    pub g_slice_gauss_per_cm: Option<f64>,
    /// Nominal RF amplitude, kept for reporting; the played amplitude is
    /// calibrated to the flip angle.
    pub rf_amplitude_gauss: Option<f64>,
    pub slice_thickness_mm: f64,
    pub g_readout_mt_per_m: f64,
    pub readout_ms: f64,
    pub ramp_ms: f64,
    pub fov_mm: f64,
    pub spoke_order: SpokeOrderKind,
    pub spoiling: SpoilingKind,
}

impl Default for SequenceSection {
    fn default() -> Self {
        Self {
            kind: SequenceKind::Flash,
            tr_ms: 2.18,
            te_ms: 1.28,
            flip_deg: 8.0,
            spokes_per_frame: 27,
            frames: 100,
            excitation: ExcitationKind::Hard,
            rf_duration_ms: 0.01,
            time_bandwidth: 4.0,
            g_slice_gauss_per_cm: None,
            rf_amplitude_gauss: None,
            slice_thickness_mm: 6.0,
            g_readout_mt_per_m: 10.0,
            readout_ms: 0.4,
            ramp_ms: 0.0,
            fov_mm: 256.0,
            spoke_order: SpokeOrderKind::Sequential,
            spoiling: SpoilingKind::Ideal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FlowProfile {
    #[default]
    Constant,
    /// Tabulated over one period, linearly interpolated and repeated.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    /// Constant through-plane velocity along +z.
    pub velocity_mm_per_s: f64,
    /// Velocities for `sweep`; empty means the pump table rows.
    pub sweep_mm_per_s: Vec<f64>,
    pub profile: FlowProfile,
    pub period_ms: f64,
    /// Equispaced samples of u_z over one period.
    pub profile_mm_per_s: Vec<f64>,
    /// Magnetization entering through the inflow boundary.
    pub inflow: [f64; 3],
    /// Gradient-jump penalty constant ε̃ (dimensionless).
    pub penalty: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            velocity_mm_per_s: 0.0,
            sweep_mm_per_s: Vec::new(),
            profile: FlowProfile::Constant,
            period_ms: 0.0,
            profile_mm_per_s: Vec::new(),
            inflow: [0.0, 0.0, 1.0],
            penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// rk2 | rk23 | rk45 | split-lie | split-strang
    pub method: String,
    pub rtol: f64,
    /// In units of M0; DG coefficients are compared after the same
    /// scaling as their cell means.
    pub atol: f64,
    pub safety: f64,
    pub min_factor: f64,
    pub max_factor: f64,
    pub max_step_ms: Option<f64>,
    pub min_step_ms: f64,
    /// Number of equidistant steps over the whole run (fixed stepping).
    pub fixed_steps: Option<usize>,
    pub fixed_step_ms: Option<f64>,
    pub initial_step_ms: Option<f64>,
    pub split_inner: String,
    pub cfl: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: "rk45".into(),
            rtol: 1e-6,
            atol: 1e-8,
            safety: 0.9,
            min_factor: 0.2,
            max_factor: 5.0,
            max_step_ms: None,
            min_step_ms: 1e-11,
            fixed_steps: None,
            fixed_step_ms: None,
            initial_step_ms: None,
            split_inner: "rk45".into(),
            cfl: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeKind {
    #[default]
    None,
    /// Mean of the last `last_frames` frames of each series.
    LastN,
    /// Plateau of the brightest series.
    Brightest,
    /// `reference_value`.
    External,
    /// Plateau of the run at `reference_velocity_mm_per_s`.
    ReferenceVelocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub region_lower_mm: Option<[f64; 3]>,
    pub region_upper_mm: Option<[f64; 3]>,
    pub normalize: NormalizeKind,
    pub last_frames: usize,
    pub reference_value: Option<f64>,
    pub reference_velocity_mm_per_s: Option<f64>,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self {
            region_lower_mm: None,
            region_upper_mm: None,
            normalize: NormalizeKind::None,
            last_frames: 20,
            reference_value: None,
            reference_velocity_mm_per_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Monitor the energy estimate along the trajectory.
    pub energy_check: bool,
    /// Write `t,tau,accepted,error_norm` per attempted step.
    pub step_records: bool,
    /// Samples per profile dump (slice-profile runs).
    pub profile_points: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { energy_check: true, step_records: false, profile_points: 601 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub cells: Vec<usize>,
    pub reference_cells: usize,
    pub velocity_mm_per_s: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Smallest fitted order reported as a pass.
    pub min_order: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            cells: vec![16, 32, 64, 128],
            reference_cells: 256,
            velocity_mm_per_s: 800.0,
            rtol: 1e-10,
            atol: 1e-12,
            min_order: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub geometry: Geometry,
    pub tissue: Vec<TissueRow>,
    pub region: Vec<RegionRow>,
    pub sequence: SequenceSection,
    pub flow: FlowSection,
    pub solver: SolverSection,
    pub signal: SignalSection,
    pub output: OutputSection,
    pub convergence: ConvergenceSection,
    /// Run metadata written into manifests; ignored on input.
    #[serde(skip_serializing)]
    pub manifest: Option<toml::Table>,
}

/// A semantic problem with one key.
struct KeyError {
    key: String,
    reason: String,
}

fn key_err(key: impl Into<String>, reason: impl Into<String>) -> KeyError {
    KeyError { key: key.into(), reason: reason.into() }
}

impl ScenarioConfig {
    /// Parses and validates `text`; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        Self::parse_with_overrides(text, origin, &[])
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse_with_overrides(&text, &path.display().to_string(), overrides)
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys, TOML
    /// values; bare words are taken as strings) and validates.
    pub fn parse_with_overrides(text: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {}", e.to_string().trim_end())))?;
        let mut overridden = Vec::new();
        for o in overrides {
            let key = apply_override(&mut table, o)?;
            overridden.push(key);
        }
        let locate = |key: &str| -> String {
            if overridden.iter().any(|k| k == key || key.starts_with(&format!("{k}."))) {
                return "--override".to_string();
            }
            match key_position(text, key) {
                Some((line, col)) => format!("{origin}:{line}:{col}"),
                None => origin.to_string(),
            }
        };
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let key = e.path().to_string();
            let msg = e.inner().to_string();
            let msg = msg.lines().next().unwrap_or_default().to_string();
            Error::Config(format!("{}: key `{key}`: {msg}", locate(&key)))
        })?;
        if let Err(KeyError { key, reason }) = cfg.check() {
            return Err(Error::Config(format!("{}: key `{key}`: {reason}", locate(&key))));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn check(&self) -> std::result::Result<(), KeyError> {
        let g = &self.geometry;
        let dim = g.axes.len();
        if !(1..=3).contains(&dim) || !g.axes.chars().all(|c| "xyz".contains(c)) {
            return Err(key_err("geometry.axes", "must be an ordered subset of \"xyz\""));
        }
        if g.lower_mm.len() != dim {
            return Err(key_err("geometry.lower_mm", format!("needs {dim} entries")));
        }
        if g.upper_mm.len() != dim {
            return Err(key_err("geometry.upper_mm", format!("needs {dim} entries")));
        }
        if g.cells.len() != dim || g.cells.contains(&0) {
            return Err(key_err("geometry.cells", format!("needs {dim} positive entries")));
        }
        if g.lower_mm.iter().zip(&g.upper_mm).any(|(a, b)| !(b > a)) {
            return Err(key_err("geometry.upper_mm", "must exceed lower_mm on every axis"));
        }
        let per_axis = (g.isochromats_per_cell as f64).powf(1.0 / dim as f64).round() as usize;
        if g.isochromats_per_cell == 0 || per_axis.pow(dim as u32) != g.isochromats_per_cell {
            return Err(key_err("geometry.isochromats_per_cell", format!("must be a perfect power of {dim}")));
        }
        if g.discretization == Discretization::Isochromat
            && self.sequence.spoiling == SpoilingKind::RfRandom
            && g.isochromats_per_cell < 8
        {
            return Err(key_err("geometry.isochromats_per_cell", "rf-random spoiling needs at least 8 per cell"));
        }
        if g.degree > 6 {
            return Err(key_err("geometry.degree", "at most 6"));
        }
        if self.tissue.is_empty() {
            return Err(key_err("tissue", "at least one [[tissue]] entry is required"));
        }
        for (i, t) in self.tissue.iter().enumerate() {
            if let Err(e) = t.params() {
                let field = if !(t.t1_ms > 0.0) {
                    "t1_ms"
                } else if !(t.t2_ms > 0.0) || t.t2_ms > t.t1_ms {
                    "t2_ms"
                } else {
                    "m0"
                };
                return Err(key_err(format!("tissue[{i}].{field}"), e.to_string()));
            }
            if self.tissue[..i].iter().any(|o| o.label == t.label) {
                return Err(key_err(format!("tissue[{i}].label"), "duplicate label"));
            }
        }
        for (i, r) in self.region.iter().enumerate() {
            if !self.tissue.iter().any(|t| t.label == r.label) {
                return Err(key_err(format!("region[{i}].label"), format!("no tissue labelled `{}`", r.label)));
            }
        }
        let s = &self.sequence;
        for (key, v) in [("sequence.tr_ms", s.tr_ms), ("sequence.rf_duration_ms", s.rf_duration_ms)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(key_err(key, "must be positive"));
            }
        }
        if s.kind == SequenceKind::Flash && !(s.te_ms > 0.0 && s.te_ms < s.tr_ms) {
            return Err(key_err("sequence.te_ms", "need 0 < te_ms < tr_ms"));
        }
        if !(s.flip_deg >= 0.0 && s.flip_deg <= 360.0) {
            return Err(key_err("sequence.flip_deg", "must lie in [0, 360]"));
        }
        if s.spokes_per_frame == 0 {
            return Err(key_err("sequence.spokes_per_frame", "must be positive"));
        }
        if s.frames == 0 {
            return Err(key_err("sequence.frames", "must be positive"));
        }
        if !(s.slice_thickness_mm > 0.0) {
            return Err(key_err("sequence.slice_thickness_mm", "must be positive"));
        }
        if s.kind == SequenceKind::SliceProfile && s.g_slice_gauss_per_cm.is_none() {
            return Err(key_err("sequence.g_slice_gauss_per_cm", "required for slice-profile"));
        }
        if !(s.ramp_ms >= 0.0 && s.readout_ms >= 0.0) {
            return Err(key_err("sequence.ramp_ms", "ramp_ms and readout_ms must be non-negative"));
        }
        let f = &self.flow;
        if !f.velocity_mm_per_s.is_finite() {
            return Err(key_err("flow.velocity_mm_per_s", "must be finite"));
        }
        if f.profile == FlowProfile::Periodic {
            if !(f.period_ms > 0.0) {
                return Err(key_err("flow.period_ms", "must be positive for a periodic profile"));
            }
            if f.profile_mm_per_s.len() < 2 {
                return Err(key_err("flow.profile_mm_per_s", "needs at least 2 samples"));
            }
        }
        if !(f.penalty >= 0.0) {
            return Err(key_err("flow.penalty", "must be non-negative"));
        }
        if g.discretization == Discretization::Isochromat && self.has_flow() {
            return Err(key_err("geometry.discretization", "moving spins need `dg`"));
        }
        if let Err(e) = self.solver_config(1.0) {
            let key = match &e {
                Error::InvalidParameter { name, .. } => name.clone(),
                _ => "solver".into(),
            };
            return Err(key_err(key, e.to_string()));
        }
        if self.signal.normalize == NormalizeKind::External && self.signal.reference_value.is_none() {
            return Err(key_err("signal.reference_value", "required by normalize = \"external\""));
        }
        if self.signal.normalize == NormalizeKind::ReferenceVelocity
            && self.signal.reference_velocity_mm_per_s.is_none()
        {
            return Err(key_err(
                "signal.reference_velocity_mm_per_s",
                "required by normalize = \"reference-velocity\"",
            ));
        }
        if self.convergence.cells.len() < 3 {
            return Err(key_err("convergence.cells", "needs at least 3 levels"));
        }
        if self.convergence.cells.iter().any(|&c| c == 0 || c >= self.convergence.reference_cells) {
            return Err(key_err("convergence.cells", "levels must be positive and coarser than reference_cells"));
        }
        Ok(())
    }

    pub fn has_flow(&self) -> bool {
        match self.flow.profile {
            FlowProfile::Constant => self.flow.velocity_mm_per_s != 0.0,
            FlowProfile::Periodic => true,
        }
    }

    pub fn tissues(&self) -> Result<Vec<(String, TissueParams<f64>)>> {
        self.tissue.iter().map(|t| Ok((t.label.clone(), t.params()?))).collect()
    }

    /// Integration span of the configured sequence.
    pub fn duration(&self) -> f64 {
        let s = &self.sequence;
        match s.kind {
            SequenceKind::Flash => units::ms(s.tr_ms) * (s.spokes_per_frame * s.frames) as f64,
            SequenceKind::SliceProfile => 1.5 * units::ms(s.rf_duration_ms),
        }
    }

    /// Solver settings in SI; `span` turns `fixed_steps` into a step size.
    pub fn solver_config(&self, span: f64) -> Result<SolverConfig<f64>> {
        let s = &self.solver;
        let method: Method = s.method.parse().map_err(|_| Error::invalid("solver.method", "unknown method"))?;
        let split_inner: Method =
            s.split_inner.parse().map_err(|_| Error::invalid("solver.split_inner", "unknown method"))?;
        let fixed_step = match (s.fixed_steps, s.fixed_step_ms) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid("solver.fixed_steps", "give either fixed_steps or fixed_step_ms"))
            }
            (Some(0), None) => return Err(Error::invalid("solver.fixed_steps", "must be positive")),
            (Some(n), None) => Some(span / n as f64),
            (None, Some(h)) => Some(units::ms(h)),
            (None, None) => None,
        };
        let cfg = SolverConfig {
            method,
            rtol: s.rtol,
            atol: s.atol,
            safety: s.safety,
            min_factor: s.min_factor,
            max_factor: s.max_factor,
            max_step: s.max_step_ms.map_or(f64::INFINITY, units::ms),
            min_step: units::ms(s.min_step_ms),
            fixed_step,
            initial_step: s.initial_step_ms.map(units::ms),
            cfl: s.cfl,
            split_inner,
            record_steps: self.output.step_records,
        };
        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => {
                let key = match name.as_str() {
                    n if n.starts_with("solver.rtol") => "solver.rtol",
                    n if n.starts_with("solver.min_factor") => "solver.min_factor",
                    n if n.starts_with("solver.max_step") => "solver.max_step_ms",
                    "solver.fixed_step" => "solver.fixed_steps",
                    n => n,
                };
                Error::invalid(key, reason)
            }
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn spoiling(&self) -> Spoiling {
        match self.sequence.spoiling {
            SpoilingKind::None => Spoiling::None,
            SpoilingKind::Ideal => Spoiling::Ideal,
            SpoilingKind::RfRandom => Spoiling::RfRandom { seed: self.seed },
        }
    }

    pub fn flash_params(&self) -> FlashParams<f64> {
        let s = &self.sequence;
        let excitation = match s.excitation {
            ExcitationKind::Hard => Excitation::Hard { duration: units::ms(s.rf_duration_ms) },
            ExcitationKind::Sinc => Excitation::Sinc {
                duration: units::ms(s.rf_duration_ms),
                time_bandwidth: s.time_bandwidth,
                g_slice: s.g_slice_gauss_per_cm.map(units::gauss_per_cm),
                nominal_amplitude: s.rf_amplitude_gauss.map_or(0.0, units::gauss),
            },
        };
        FlashParams {
            tr: units::ms(s.tr_ms),
            te: units::ms(s.te_ms),
            flip: units::deg(s.flip_deg),
            spokes_per_frame: s.spokes_per_frame,
            frames: s.frames,
            excitation,
            g_readout: units::mt_per_m(s.g_readout_mt_per_m),
            readout_duration: units::ms(s.readout_ms),
            slice_thickness: units::mm(s.slice_thickness_mm),
            fov: units::mm(s.fov_mm),
            ramp: units::ms(s.ramp_ms),
            spoke_order: match s.spoke_order {
                SpokeOrderKind::Sequential => SpokeOrder::Sequential,
                SpokeOrderKind::Golden => SpokeOrder::GoldenAngle,
            },
            spoiling: self.spoiling(),
        }
    }

    pub fn slice_profile_params(&self) -> SliceProfileParams<f64> {
        let s = &self.sequence;
        SliceProfileParams {
            nominal_amplitude: s.rf_amplitude_gauss.map_or(0.0, units::gauss),
            duration: units::ms(s.rf_duration_ms),
            flip: units::deg(s.flip_deg),
            g_slice: s.g_slice_gauss_per_cm.map_or(0.0, units::gauss_per_cm),
            slice_thickness: units::mm(s.slice_thickness_mm),
            time_bandwidth: None,
        }
    }
}

/// Sets one dotted key from `key=value`, creating tables on the way.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--override `{assignment}`: expected key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("--override `{assignment}`: empty key")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("--override `{assignment}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(key.to_string())
}

/// 1-based line and column of the key named by a path such as
/// `sequence.tr_ms` or `tissue[2].t1_ms`.
pub fn key_position(text: &str, path: &str) -> Option<(usize, usize)> {
    let doc = DeTable::parse(text).ok()?;
    let mut table = doc.get_ref();
    let mut span = None;
    let mut segs = path.split('.').peekable();
    while let Some(seg) = segs.next() {
        let (name, index) = match seg.split_once('[') {
            Some((n, rest)) => (n, rest.trim_end_matches(']').parse::<usize>().ok()),
            None => (seg, None),
        };
        let (k, v) = table.iter().find(|(k, _)| k.get_ref() == name)?;
        span = Some(k.span());
        let mut value = v.get_ref();
        if let (Some(i), DeValue::Array(a)) = (index, value) {
            let item = a.get(i)?;
            span = Some(item.span());
            value = item.get_ref();
        }
        match value {
            DeValue::Table(t) => table = t,
            _ if segs.peek().is_none() => break,
            _ => return None,
        }
    }
    let offset = span?.start;
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    Some((line, col))
}
