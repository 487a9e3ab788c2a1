//! Scenario runners: build the mesh, sequence and system from a
//! [`ScenarioConfig`], integrate, and collect signal and energy data.

use std::cell::RefCell;

use num_complex::Complex;
use rayon::prelude::*;

use super::config::{Discretization, FlowProfile, ScenarioConfig, SequenceKind};
use crate::error::{Error, Result};
use crate::isochromat::{spoil_isochromats, IsochromatSet, IsochromatSystem};
use crate::mesh_dg::{
    spoil_transverse, BoundaryData, BoxMesh, DgOperator, DgSpace, DgState, PeriodicAxialVelocity, RegionMap,
    UniformVelocity, VelocityField,
};
use crate::physics::{PhysicalConstants, TissueParams, Vec3};
use crate::sequence::{build_flash_radial, build_slice_profile, SequenceTimeline, Spoiling};
use crate::signal::{
    frame_average, integrate_isochromats, integrate_signal, FrameSeries, SignalRegion, SignalSample, TeRecorder,
};
use crate::timeint::{integrate, Hooks, IntegrationStats, OdeSystem, SolverConfig, StepRecord};
use crate::units;
use crate::verify::{check_energy_inequality, EnergyReport, EnergySample};

/// Result of one FLASH run.
#[derive(Debug, Clone)]
pub struct FlashOutcome {
    pub samples: Vec<SignalSample<f64>>,
    pub series: FrameSeries<f64>,
    pub energy: Option<EnergyReport<f64>>,
    pub records: Vec<StepRecord<f64>>,
    pub stats: IntegrationStats,
}

/// Per-tube result of a static phantom run.
#[derive(Debug, Clone)]
pub struct TubeOutcome {
    pub label: String,
    pub tissue: TissueParams<f64>,
    pub outcome: FlashOutcome,
}

/// Final state of a single-shot slice-profile run.
#[derive(Debug, Clone)]
pub struct SliceOutcome {
    pub space: DgSpace<f64>,
    pub state: DgState<f64>,
    pub energy: Option<EnergyReport<f64>>,
    pub records: Vec<StepRecord<f64>>,
    pub stats: IntegrationStats,
}

type SignalFn<'a> = Box<dyn Fn(&[f64]) -> Result<Complex<f64>> + 'a>;
type SpoilFn<'a> = Box<dyn Fn(&mut [f64]) + 'a>;
type EnergyFn<'a> = Box<dyn Fn(f64, &[f64]) -> EnergySample<f64> + 'a>;

/// How a FLASH run reads, spoils and budgets its state.
struct Probe<'a> {
    signal: SignalFn<'a>,
    spoil: SpoilFn<'a>,
    energy: Option<EnergyFn<'a>>,
    sigma: f64,
}

#[derive(Clone, Copy)]
enum Event {
    Echo(usize),
    Spoil,
}

fn run_flash(
    sys: &dyn OdeSystem<f64>,
    y0: Vec<f64>,
    tl: &SequenceTimeline<f64>,
    solver: &SolverConfig<f64>,
    probe: Probe<'_>,
) -> Result<FlashOutcome> {
    let recorder = RefCell::new(TeRecorder::new(tl));
    let mut events: Vec<(f64, Event)> =
        recorder.borrow().stops().iter().enumerate().map(|(i, &t)| (t, Event::Echo(i))).collect();
    if tl.spoiling() == Spoiling::Ideal {
        events.extend(tl.repetitions().iter().map(|r| (r.end, Event::Spoil)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let times: Vec<f64> = events.iter().map(|e| e.0).collect();
    let budget = RefCell::new(Vec::new());
    if let Some(e) = &probe.energy {
        budget.borrow_mut().push(e(0.0, &y0));
    }
    let on_stop = |i: usize, t: f64, y: &mut [f64]| -> Result<bool> {
        match events[i].1 {
            Event::Echo(rep) => {
                let raw = (probe.signal)(y)?;
                recorder.borrow_mut().record(rep, t, raw);
                Ok(false)
            }
            Event::Spoil => {
                (probe.spoil)(y);
                if let Some(e) = &probe.energy {
                    budget.borrow_mut().push(e(t, y));
                }
                Ok(true)
            }
        }
    };
    let on_step = |t: f64, y: &[f64]| {
        if let Some(e) = &probe.energy {
            budget.borrow_mut().push(e(t, y));
        }
    };
    let hooks = Hooks { stops: &times, on_stop: Some(Box::new(on_stop)), on_step: Some(Box::new(on_step)) };
    let traj = integrate(sys, &y0, 0.0, tl.end_time(), solver, hooks)?;
    let samples = recorder.into_inner().into_samples();
    let series = frame_average(&samples, tl.spokes_per_frame())?;
    let energy = match probe.energy {
        Some(_) => Some(check_energy_inequality(&budget.into_inner(), probe.sigma)?),
        None => None,
    };
    Ok(FlashOutcome { samples, series, energy, records: traj.records, stats: traj.stats })
}

/// Mesh spanned by the configured geometry, in metres.
pub fn build_mesh(cfg: &ScenarioConfig) -> Result<BoxMesh<f64>> {
    let g = &cfg.geometry;
    let axes = g.axes.chars().map(|c| "xyz".find(c).expect("validated axis")).collect();
    BoxMesh::new(
        axes,
        g.lower_mm.iter().map(|&v| units::mm(v)).collect(),
        g.upper_mm.iter().map(|&v| units::mm(v)).collect(),
        g.cells.clone(),
    )
}

/// Tissue per cell: the first `[[tissue]]` entry everywhere, then each
/// `[[region]]` box in order on the cells whose centre it contains.
pub fn build_regions(cfg: &ScenarioConfig, mesh: &BoxMesh<f64>) -> Result<RegionMap<f64>> {
    let tissues = cfg.tissues()?;
    let mut map = RegionMap {
        labels: tissues.iter().map(|t| t.0.clone()).collect(),
        tissues: tissues.iter().map(|t| t.1).collect(),
        cell_tissue: vec![0; mesh.num_cells()],
    };
    for r in &cfg.region {
        let idx = map.labels.iter().position(|l| *l == r.label).expect("validated label");
        let lo = r.lower_mm.map(units::mm);
        let hi = r.upper_mm.map(units::mm);
        for c in 0..mesh.num_cells() {
            let p = mesh.cell_center(c);
            if (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a]) {
                map.cell_tissue[c] = idx;
            }
        }
    }
    Ok(map)
}

pub fn signal_region(cfg: &ScenarioConfig) -> SignalRegion<f64> {
    match (cfg.signal.region_lower_mm, cfg.signal.region_upper_mm) {
        (None, None) => SignalRegion::everywhere(),
        (lo, hi) => SignalRegion::new(
            lo.map_or([f64::NEG_INFINITY; 3], |v| v.map(units::mm)),
            hi.map_or([f64::INFINITY; 3], |v| v.map(units::mm)),
        ),
    }
}

/// Volume of the signal region inside the mesh (unit extent along axes
/// the mesh does not resolve).
pub fn region_volume(cfg: &ScenarioConfig) -> f64 {
    let region = signal_region(cfg);
    let g = &cfg.geometry;
    g.axes
        .chars()
        .enumerate()
        .map(|(i, c)| {
            let a = "xyz".find(c).expect("validated axis");
            let lo = units::mm(g.lower_mm[i]).max(region.lower[a]);
            let hi = units::mm(g.upper_mm[i]).min(region.upper[a]);
            (hi - lo).max(0.0)
        })
        .product()
}

pub fn flash_timeline(cfg: &ScenarioConfig) -> Result<SequenceTimeline<f64>> {
    if cfg.sequence.kind != SequenceKind::Flash {
        return Err(Error::Config(format!("scenario {} needs sequence.kind = \"flash\"", cfg.scenario.name())));
    }
    build_flash_radial(&cfg.flash_params(), &PhysicalConstants::default())
}

fn inflow(cfg: &ScenarioConfig) -> BoundaryData<f64> {
    let [x, y, z] = cfg.flow.inflow;
    BoundaryData::Constant(Vec3::new(x, y, z))
}

/// FLASH run of an isochromat ensemble over the configured mesh.
fn isochromat_flash(cfg: &ScenarioConfig, regions: &RegionMap<f64>, mesh: &BoxMesh<f64>) -> Result<FlashOutcome> {
    let tl = flash_timeline(cfg)?;
    let per_axis = (cfg.geometry.isochromats_per_cell as f64).powf(1.0 / mesh.dim() as f64).round() as usize;
    let set = IsochromatSet::subdivided(mesh, regions, per_axis);
    let sys = IsochromatSystem::new(&set, &tl);
    let solver = cfg.solver_config(tl.end_time())?;
    let region = signal_region(cfg);
    let sigma = regions.sigma();
    let supply: f64 =
        set.weights.iter().zip(&set.tissues).map(|(w, t)| w * (t.m0() * t.r1()).powi(2)).sum::<f64>() / (2.0 * sigma);
    let energy = |t: f64, y: &[f64]| {
        let e: f64 =
            y.chunks_exact(3).zip(&set.weights).map(|(m, w)| w * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2])).sum();
        EnergySample { t, energy: 0.5 * e, dissipation: 0.0, supply }
    };
    let probe = Probe {
        signal: Box::new(|y| integrate_isochromats(&set, y, &region)),
        spoil: Box::new(spoil_isochromats),
        energy: cfg.output.energy_check.then(|| Box::new(energy) as Box<dyn Fn(f64, &[f64]) -> EnergySample<f64>>),
        sigma,
    };
    run_flash(&sys, set.equilibrium(), &tl, &solver, probe)
}

/// FLASH run of the DG discretization under `velocity`.
fn dg_flash(
    cfg: &ScenarioConfig,
    regions: &RegionMap<f64>,
    mesh: BoxMesh<f64>,
    velocity: &dyn VelocityField<f64>,
) -> Result<FlashOutcome> {
    let tl = flash_timeline(cfg)?;
    let space = DgSpace::new(mesh, cfg.geometry.degree);
    let op = DgOperator::new(&space, regions, &tl, velocity).with_penalty(cfg.flow.penalty).with_inflow(inflow(cfg));
    let solver = dg_solver(cfg, &space, tl.end_time())?;
    let region = signal_region(cfg);
    let sigma = regions.sigma();
    let y0 = equilibrium(&space, regions);
    let space_ref = &space;
    let op_ref = &op;
    let probe = Probe {
        signal: Box::new(move |y| integrate_signal(space_ref, &DgState { coeffs: y.to_vec() }, &region)),
        spoil: Box::new(move |y| spoil_transverse(space_ref, y)),
        energy: cfg.output.energy_check.then(|| {
            Box::new(move |t: f64, y: &[f64]| EnergySample::from_terms(t, &op_ref.energy(t, y), sigma))
                as Box<dyn Fn(f64, &[f64]) -> EnergySample<f64>>
        }),
        sigma,
    };
    run_flash(&op, y0, &tl, &solver, probe)
}

/// Solver settings for a DG state: coefficients carry a factor
/// `√(cell volume)`, so `atol` (given in units of M0) is scaled to match.
fn dg_solver(cfg: &ScenarioConfig, space: &DgSpace<f64>, span: f64) -> Result<SolverConfig<f64>> {
    let mut s = cfg.solver_config(span)?;
    s.atol *= space.mesh().cell_volume().sqrt();
    Ok(s)
}

/// `(0, 0, M0)` projected cell by cell.
fn equilibrium(space: &DgSpace<f64>, regions: &RegionMap<f64>) -> Vec<f64> {
    let mut y = DgState::zeros(space).coeffs;
    let nb = space.nb();
    let root_vol = space.mesh().cell_volume().sqrt();
    for c in 0..space.mesh().num_cells() {
        y[space.dof(c, 2, 0)] = regions.tissue(c).m0() * root_vol;
    }
    debug_assert_eq!(y.len(), space.mesh().num_cells() * 3 * nb);
    y
}

/// One frame series per `[[tissue]]` entry, each filling the whole mesh.
pub fn run_static_phantom(cfg: &ScenarioConfig) -> Result<Vec<TubeOutcome>> {
    if cfg.has_flow() {
        return Err(Error::Config("static-phantom: key `flow.velocity_mm_per_s`: must be zero".into()));
    }
    let mesh = build_mesh(cfg)?;
    cfg.tissues()?
        .into_par_iter()
        .map(|(label, tissue)| {
            let regions = RegionMap::uniform(&mesh, &label, tissue);
            let outcome = match cfg.geometry.discretization {
                Discretization::Isochromat => isochromat_flash(cfg, &regions, &mesh)?,
                Discretization::Dg => dg_flash(cfg, &regions, mesh.clone(), &UniformVelocity::zero())?,
            };
            Ok(TubeOutcome { label, tissue, outcome })
        })
        .collect()
}

/// Through-plane plug flow at `velocity_mm_per_s`, first tissue entry.
pub fn run_through_plane(cfg: &ScenarioConfig, velocity_mm_per_s: f64) -> Result<FlashOutcome> {
    let mesh = build_mesh(cfg)?;
    let regions = build_regions(cfg, &mesh)?;
    let u = UniformVelocity::axial(units::mm_per_s(velocity_mm_per_s));
    dg_flash(cfg, &regions, mesh, &u)
}

/// Pulsatile plug flow with the tabulated periodic profile (or the
/// constant velocity when `flow.profile = "constant"`).
pub fn run_pulsatile(cfg: &ScenarioConfig) -> Result<FlashOutcome> {
    let mesh = build_mesh(cfg)?;
    let regions = build_regions(cfg, &mesh)?;
    match cfg.flow.profile {
        FlowProfile::Constant => run_through_plane(cfg, cfg.flow.velocity_mm_per_s),
        FlowProfile::Periodic => {
            let u = PeriodicAxialVelocity::new(
                units::ms(cfg.flow.period_ms),
                cfg.flow.profile_mm_per_s.iter().map(|&v| units::mm_per_s(v)).collect(),
            )?;
            dg_flash(cfg, &regions, mesh, &u)
        }
    }
}

/// Multi-region phantom: one series for the whole configured layout.
pub fn run_custom(cfg: &ScenarioConfig) -> Result<FlashOutcome> {
    let mesh = build_mesh(cfg)?;
    let regions = build_regions(cfg, &mesh)?;
    match cfg.geometry.discretization {
        Discretization::Isochromat => isochromat_flash(cfg, &regions, &mesh),
        Discretization::Dg => match cfg.flow.profile {
            FlowProfile::Constant => run_through_plane(cfg, cfg.flow.velocity_mm_per_s),
            FlowProfile::Periodic => run_pulsatile(cfg),
        },
    }
}

/// Single selective pulse and rewinder under constant axial flow; the
/// state is returned at the end of the rewinder.
pub fn run_yuan_slice(cfg: &ScenarioConfig) -> Result<SliceOutcome> {
    if cfg.sequence.kind != SequenceKind::SliceProfile {
        return Err(Error::Config("yuan-slice: key `sequence.kind`: must be \"slice-profile\"".into()));
    }
    let tl = build_slice_profile(&cfg.slice_profile_params(), &PhysicalConstants::default())?;
    let mesh = build_mesh(cfg)?;
    let regions = build_regions(cfg, &mesh)?;
    let space = DgSpace::new(mesh, cfg.geometry.degree);
    let u = UniformVelocity::axial(units::mm_per_s(cfg.flow.velocity_mm_per_s));
    let op = DgOperator::new(&space, &regions, &tl, &u).with_penalty(cfg.flow.penalty).with_inflow(inflow(cfg));
    let solver = dg_solver(cfg, &space, tl.end_time())?;
    let sigma = regions.sigma();
    let y0 = equilibrium(&space, &regions);
    let budget = RefCell::new(Vec::new());
    let check = cfg.output.energy_check;
    if check {
        budget.borrow_mut().push(EnergySample::from_terms(0.0, &op.energy(0.0, &y0), sigma));
    }
    let on_step = |t: f64, y: &[f64]| {
        if check {
            budget.borrow_mut().push(EnergySample::from_terms(t, &op.energy(t, y), sigma));
        }
    };
    let hooks = Hooks { on_step: Some(Box::new(on_step)), ..Default::default() };
    let traj = integrate(&op, &y0, 0.0, tl.end_time(), &solver, hooks)?;
    let energy = if check { Some(check_energy_inequality(&budget.into_inner(), sigma)?) } else { None };
    drop(op);
    let state = DgState::from_coeffs(&space, traj.state)?;
    Ok(SliceOutcome { space, state, energy, records: traj.records, stats: traj.stats })
}

/// `(z, Mx, My, Mz)` at `n` equispaced points along the mesh's z extent.
pub fn slice_profile(space: &DgSpace<f64>, state: &DgState<f64>, n: usize) -> Vec<[f64; 4]> {
    let mesh = space.mesh();
    let a = mesh.axes().iter().position(|&ax| ax == 2).unwrap_or(0);
    let (lo, hi) = (mesh.lower()[a], mesh.upper()[a]);
    (0..n)
        .filter_map(|i| {
            let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
            let z = lo + (hi - lo) * s;
            state.eval(space, [0.0, 0.0, z]).map(|m| [z, m.x, m.y, m.z])
        })
        .collect()
}

/// Grid family for the spatial convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceOutcome {
    pub cells: Vec<usize>,
    pub h: Vec<f64>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub reference_cells: usize,
}

/// Runs the slice experiment on each `convergence.cells` level and on the
/// reference grid, and measures My against the reference.
pub fn run_convergence(cfg: &ScenarioConfig) -> Result<ConvergenceOutcome> {
    let c = &cfg.convergence;
    let level = |cells: usize| -> Result<SliceOutcome> {
        let mut lc = cfg.clone();
        lc.geometry.cells = vec![cells];
        lc.flow.velocity_mm_per_s = c.velocity_mm_per_s;
        lc.solver.rtol = c.rtol;
        lc.solver.atol = c.atol;
        lc.output.energy_check = false;
        lc.output.step_records = false;
        run_yuan_slice(&lc)
    };
    if cfg.geometry.axes != "z" {
        return Err(Error::Config("convergence: key `geometry.axes`: must be \"z\"".into()));
    }
    let all: Vec<usize> = c.cells.iter().copied().chain([c.reference_cells]).collect();
    let runs: Vec<SliceOutcome> = all.par_iter().map(|&n| level(n)).collect::<Result<_>>()?;
    let (reference, levels) = runs.split_last().expect("reference run");
    let span = units::mm(cfg.geometry.upper_mm[0] - cfg.geometry.lower_mm[0]);
    let mut out = ConvergenceOutcome {
        cells: c.cells.clone(),
        h: c.cells.iter().map(|&n| span / n as f64).collect(),
        l2: Vec::new(),
        linf: Vec::new(),
        reference_cells: c.reference_cells,
    };
    for run in levels {
        let (l2, linf) =
            crate::verify::component_difference(&run.space, &run.state, &reference.space, &reference.state, 1)?;
        out.l2.push(l2);
        out.linf.push(linf);
    }
    Ok(out)
}

/// Amplitude spectrum `|DFT|/n` of the mean-removed tail of `values`.
pub fn spectrum(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm() / n as f64).collect()
}

/// Index of the largest non-DC spectral bin.
pub fn dominant_bin(amplitudes: &[f64]) -> Option<usize> {
    amplitudes.iter().enumerate().skip(1).max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
}
