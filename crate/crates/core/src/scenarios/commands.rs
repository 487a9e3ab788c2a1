//! The four driver commands: run a scenario, write its CSVs and manifest,
//! and report PASS/FAIL checks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{NormalizeKind, ScenarioConfig, ScenarioKind};
use super::run::{
    dominant_bin, flash_timeline, region_volume, run_convergence, run_custom, run_pulsatile, run_static_phantom,
    run_through_plane, run_yuan_slice, slice_profile, spectrum, FlashOutcome,
};
use super::tables::PumpTable;
use crate::error::{Error, Result};
use crate::physics::PhysicalConstants;
use crate::sequence::{build_slice_profile, write_event_list};
use crate::signal::{normalize, write_frame_csv, write_sample_csv, FrameSeries, Reference};
use crate::timeint::write_step_records;
use crate::units;
use crate::verify::{
    convergence_order, spoiled_steady_state, write_convergence_csv, write_energy_csv, CheckLine, EnergyReport,
};

/// Relative plateau tolerance of the steady-state comparison.
pub const STEADY_STATE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Convergence,
    SteadyState,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Convergence => "convergence",
            Command::SteadyState => "steady-state",
            Command::Sweep => "sweep",
        }
    }
}

/// Files written and checks evaluated by one command.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckLine>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Out<'a> {
    dir: &'a Path,
    report: Report,
}

impl Out<'_> {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.report.files.push(path);
        Ok(())
    }

    fn check(&mut self, line: CheckLine) {
        self.report.checks.push(line);
    }

    fn energy(&mut self, suffix: &str, report: &Option<EnergyReport<f64>>) -> Result<()> {
        if let Some(e) = report {
            self.write(&format!("energy{suffix}.csv"), |w| write_energy_csv(e, w))?;
            let detail = format!(
                "sigma {:.6e} 1/s, {} samples, margin {:.3e}{}",
                e.sigma,
                e.t.len(),
                e.margin,
                if e.inconclusive { ", quadrature inconclusive" } else { "" }
            );
            self.check(CheckLine::new(format!("energy-inequality{suffix}"), e.pass, detail));
        }
        Ok(())
    }

    fn flash(
        &mut self,
        suffix: &str,
        cfg: &ScenarioConfig,
        run: &FlashOutcome,
        series: &FrameSeries<f64>,
    ) -> Result<()> {
        self.write(&format!("frames{suffix}.csv"), |w| write_frame_csv(series, w))?;
        self.write(&format!("samples{suffix}.csv"), |w| write_sample_csv(&run.samples, w))?;
        if cfg.output.step_records {
            self.write(&format!("steps{suffix}.csv"), |w| write_step_records(&run.records, w))?;
        }
        self.energy(suffix, &run.energy)
    }
}

/// File-name fragment for a label: alphanumerics, `-`, `_` and `.` kept.
fn tag(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Plateau: mean magnitude over the last `signal.last_frames` frames.
pub fn plateau(cfg: &ScenarioConfig, series: &FrameSeries<f64>) -> f64 {
    FrameSeries::new(series.magnitude.clone()).tail_mean(cfg.signal.last_frames)
}

fn normalize_all(
    cfg: &ScenarioConfig,
    all: &[FrameSeries<f64>],
    reference_plateau: Option<f64>,
) -> Result<Vec<FrameSeries<f64>>> {
    let last = cfg.signal.last_frames;
    all.iter()
        .map(|s| match cfg.signal.normalize {
            NormalizeKind::None => Ok(s.clone()),
            NormalizeKind::LastN => normalize(s, Reference::LastN(last)),
            NormalizeKind::Brightest => normalize(s, Reference::Brightest { series: all, last }),
            NormalizeKind::External => normalize(s, Reference::External(cfg.signal.reference_value.unwrap_or(1.0))),
            NormalizeKind::ReferenceVelocity => match reference_plateau {
                Some(r) => normalize(s, Reference::External(r)),
                None => Err(Error::Config(
                    "key `signal.normalize`: \"reference-velocity\" needs a through-plane run".into(),
                )),
            },
        })
        .collect()
}

/// Runs `cmd` on `cfg`, writing into `dir` (created if missing).
pub fn execute(cmd: Command, cfg: &ScenarioConfig, config_file: &str, dir: &Path) -> Result<Report> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Out { dir, report: Report::default() };
    match cmd {
        Command::Simulate => simulate(cfg, &mut out)?,
        Command::SteadyState => steady_state(cfg, &mut out)?,
        Command::Convergence => convergence(cfg, &mut out)?,
        Command::Sweep => sweep(cfg, &mut out)?,
    }
    let checks = out.report.checks.clone();
    out.write("checks.csv", |w| {
        writeln!(w, "check,status,detail")?;
        for c in &checks {
            writeln!(w, "{},{},\"{}\"", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail.replace('"', "'"))?;
        }
        Ok(())
    })?;
    let manifest = manifest(cmd, cfg, config_file, &out.report.files)?;
    out.write("manifest.toml", |w| w.write_all(manifest.as_bytes()))?;
    Ok(out.report)
}

/// Resolved configuration plus a `[manifest]` table; loadable as a config.
pub fn manifest(cmd: Command, cfg: &ScenarioConfig, config_file: &str, files: &[PathBuf]) -> Result<String> {
    let mut table = toml::Table::try_from(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut meta = toml::Table::new();
    meta.insert("command".into(), cmd.name().into());
    meta.insert("config_file".into(), config_file.into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("seed".into(), toml::Value::Integer(cfg.seed as i64));
    meta.insert("gyromagnetic_ratio_hz_per_t".into(), PhysicalConstants::<f64>::default().gamma_bar().into());
    let mut derived = toml::Table::new();
    derived.insert("duration_s".into(), cfg.duration().into());
    if cfg.sequence.kind == super::config::SequenceKind::SliceProfile {
        let p = cfg.slice_profile_params();
        let tbw = PhysicalConstants::<f64>::default().gamma_bar() * p.g_slice * p.slice_thickness * p.duration;
        derived.insert("time_bandwidth".into(), tbw.into());
    }
    if let Some(f) = cfg.solver_config(cfg.duration())?.fixed_step {
        derived.insert("fixed_step_s".into(), f.into());
    }
    if cmd == Command::Sweep {
        let pump = PumpTable::flow_pump();
        derived.insert("pump_diameters_mm".into(), pump.diameters_mm().into());
    }
    meta.insert("derived".into(), derived.into());
    let names: Vec<String> =
        files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    meta.insert("outputs".into(), names.into());
    table.insert("manifest".into(), meta.into());
    toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))
}

fn timeline_file(cfg: &ScenarioConfig, out: &mut Out<'_>) -> Result<()> {
    let text = match cfg.sequence.kind {
        super::config::SequenceKind::Flash => write_event_list(&flash_timeline(cfg)?),
        super::config::SequenceKind::SliceProfile => {
            write_event_list(&build_slice_profile(&cfg.slice_profile_params(), &PhysicalConstants::default())?)
        }
    };
    out.write("timeline.txt", |w| w.write_all(text.as_bytes()))
}

fn simulate(cfg: &ScenarioConfig, out: &mut Out<'_>) -> Result<()> {
    timeline_file(cfg, out)?;
    match cfg.scenario {
        ScenarioKind::StaticPhantom => {
            let tubes = run_static_phantom(cfg)?;
            let series: Vec<FrameSeries<f64>> = tubes.iter().map(|t| t.outcome.series.clone()).collect();
            let normalized = normalize_all(cfg, &series, None)?;
            for (t, s) in tubes.iter().zip(&normalized) {
                out.flash(&format!("_{}", tag(&t.label)), cfg, &t.outcome, s)?;
            }
        }
        ScenarioKind::YuanSlice => {
            let run = run_yuan_slice(cfg)?;
            let profile = slice_profile(&run.space, &run.state, cfg.output.profile_points);
            out.write("profile.csv", |w| {
                writeln!(w, "z,mx,my,mz")?;
                for p in &profile {
                    writeln!(w, "{:e},{:e},{:e},{:e}", p[0], p[1], p[2], p[3])?;
                }
                Ok(())
            })?;
            if cfg.output.step_records {
                out.write("steps.csv", |w| write_step_records(&run.records, w))?;
            }
            out.energy("", &run.energy)?;
        }
        ScenarioKind::ThroughPlane | ScenarioKind::Custom => {
            let run = match cfg.scenario {
                ScenarioKind::ThroughPlane => run_through_plane(cfg, cfg.flow.velocity_mm_per_s)?,
                _ => run_custom(cfg)?,
            };
            let reference = match cfg.signal.reference_velocity_mm_per_s {
                Some(v) if cfg.signal.normalize == NormalizeKind::ReferenceVelocity => {
                    if v == cfg.flow.velocity_mm_per_s && cfg.scenario == ScenarioKind::ThroughPlane {
                        Some(plateau(cfg, &run.series))
                    } else {
                        Some(plateau(cfg, &run_through_plane(cfg, v)?.series))
                    }
                }
                _ => None,
            };
            let s = normalize_all(cfg, std::slice::from_ref(&run.series), reference)?.remove(0);
            out.flash("", cfg, &run, &s)?;
        }
        ScenarioKind::Pulsatile => {
            let run = run_pulsatile(cfg)?;
            let s = normalize_all(cfg, std::slice::from_ref(&run.series), None)?.remove(0);
            out.flash("", cfg, &run, &s)?;
            pulsatile_spectrum(cfg, &run, out)?;
        }
    }
    Ok(())
}

/// Spectrum of the last `signal.last_frames` frames and the periodicity
/// check against the profile's fundamental.
fn pulsatile_spectrum(cfg: &ScenarioConfig, run: &FlashOutcome, out: &mut Out<'_>) -> Result<()> {
    let m = &run.series.magnitude;
    let window = &m[m.len().saturating_sub(cfg.signal.last_frames)..];
    let amplitudes = spectrum(window);
    let frame_time = units::ms(cfg.sequence.tr_ms) * cfg.sequence.spokes_per_frame as f64;
    let df = 1.0 / (frame_time * window.len() as f64);
    out.write("spectrum.csv", |w| {
        writeln!(w, "bin,frequency,amplitude")?;
        for (i, a) in amplitudes.iter().enumerate() {
            writeln!(w, "{i},{:e},{a:e}", i as f64 * df)?;
        }
        Ok(())
    })?;
    if cfg.flow.profile == super::config::FlowProfile::Periodic {
        let expected = 1.0 / units::ms(cfg.flow.period_ms) / df;
        let got = dominant_bin(&amplitudes);
        let pass = got.is_some_and(|b| (b as f64 - expected).abs() <= 1.0);
        out.check(CheckLine::new(
            "pulsatile-periodicity",
            pass,
            format!("dominant bin {got:?}, fundamental at bin {expected:.2} ({} frames)", window.len()),
        ));
    }
    Ok(())
}

fn steady_state(cfg: &ScenarioConfig, out: &mut Out<'_>) -> Result<()> {
    if cfg.scenario != ScenarioKind::StaticPhantom {
        return Err(Error::Config("key `scenario`: steady-state needs \"static-phantom\"".into()));
    }
    let tubes = run_static_phantom(cfg)?;
    let s = &cfg.sequence;
    let rows: Vec<(String, f64, f64, f64, f64, f64)> = tubes
        .iter()
        .zip(&cfg.tissue)
        .map(|(t, row)| {
            let sim = plateau(cfg, &t.outcome.series);
            let oracle =
                spoiled_steady_state(&t.tissue, units::ms(s.tr_ms), units::ms(s.te_ms), units::deg(s.flip_deg)).signal
                    * region_volume(cfg);
            (t.label.clone(), row.t1_ms, row.t2_ms, sim, oracle, (sim - oracle).abs() / oracle)
        })
        .collect();
    out.write("steady_state.csv", |w| {
        writeln!(w, "label,t1_ms,t2_ms,simulated,oracle,relative_error")?;
        for r in &rows {
            writeln!(w, "{},{},{},{:e},{:e},{:e}", r.0, r.1, r.2, r.3, r.4, r.5)?;
        }
        Ok(())
    })?;
    for r in &rows {
        out.check(CheckLine::new(
            format!("steady-state_{}", tag(&r.0)),
            r.5 <= STEADY_STATE_TOLERANCE,
            format!("simulated {:.6e}, oracle {:.6e}, relative error {:.3e}", r.3, r.4, r.5),
        ));
    }
    for t in &tubes {
        let series = t.outcome.series.clone();
        out.flash(&format!("_{}", tag(&t.label)), cfg, &t.outcome, &series)?;
    }
    Ok(())
}

fn convergence(cfg: &ScenarioConfig, out: &mut Out<'_>) -> Result<()> {
    if cfg.scenario != ScenarioKind::YuanSlice {
        return Err(Error::Config("key `scenario`: convergence needs \"yuan-slice\"".into()));
    }
    let c = run_convergence(cfg)?;
    let reference = format!("{} cells, k = {}", c.reference_cells, cfg.geometry.degree);
    let report = convergence_order(&c.h, &c.l2, reference)?;
    out.write("convergence.csv", |w| write_convergence_csv(&report, w))?;
    let linf = convergence_order(&c.h, &c.linf, "")?;
    let pass = report.monotone && report.order >= cfg.convergence.min_order;
    let mut detail =
        format!("L2(My) order {:.3}, Linf order {:.3}, reference {}", report.order, linf.order, report.reference);
    if let Some(w) = report.warning() {
        detail.push_str(&format!("; {w}"));
    }
    out.check(CheckLine::new("convergence-order", pass, detail));
    Ok(())
}

fn sweep(cfg: &ScenarioConfig, out: &mut Out<'_>) -> Result<()> {
    if !matches!(cfg.scenario, ScenarioKind::ThroughPlane | ScenarioKind::Custom) {
        return Err(Error::Config("key `scenario`: sweep needs \"through-plane\"".into()));
    }
    let velocities = if cfg.flow.sweep_mm_per_s.is_empty() {
        let pump = PumpTable::flow_pump();
        match pump.diameter_mm() {
            Ok(d) => out.check(CheckLine::new("pump-table-diameter", true, format!("d = {d:.3} mm"))),
            Err(e) => out.check(CheckLine::new("pump-table-diameter", false, e.to_string())),
        }
        pump.velocities_mm_per_s()
    } else {
        cfg.flow.sweep_mm_per_s.clone()
    };
    let reference_velocity = cfg.signal.reference_velocity_mm_per_s;
    let extra = reference_velocity.filter(|v| !velocities.contains(v));
    let mut all = velocities.clone();
    all.extend(extra);
    let runs: Vec<FlashOutcome> = all.par_iter().map(|&v| run_through_plane(cfg, v)).collect::<Result<_>>()?;
    let plateaus: Vec<f64> = runs.iter().map(|r| plateau(cfg, &r.series)).collect();
    let reference_plateau = reference_velocity.map(|rv| plateaus[all.iter().position(|&v| v == rv).expect("included")]);
    let series: Vec<FrameSeries<f64>> = runs.iter().map(|r| r.series.clone()).collect();
    let normalized = normalize_all(cfg, &series, reference_plateau)?;
    for ((v, run), s) in all.iter().zip(&runs).zip(&normalized) {
        out.flash(&format!("_u{}", tag(&v.to_string())), cfg, run, s)?;
    }
    out.write("sweep.csv", |w| {
        writeln!(w, "velocity_mm_per_s,plateau,normalized_plateau")?;
        for ((v, p), s) in all.iter().zip(&plateaus).zip(&normalized) {
            writeln!(w, "{v},{p:e},{:e}", s.tail_mean(cfg.signal.last_frames))?;
        }
        Ok(())
    })?;
    let mut order: Vec<(f64, f64)> = velocities.iter().zip(&plateaus).map(|(&v, &p)| (v, p)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let increasing = order.windows(2).all(|w| w[1].1 > w[0].1);
    let detail = order.iter().map(|(v, p)| format!("{v}: {p:.6e}")).collect::<Vec<_>>().join(", ");
    out.check(CheckLine::new("flow-monotonicity", increasing, detail));
    Ok(())
}
