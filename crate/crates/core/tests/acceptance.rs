//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero when any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bloch_core::isochromat::{IsochromatSet, IsochromatSystem};
use bloch_core::mesh_dg::{BoundaryData, BoxMesh, DgOperator, DgSpace, DgState, RegionMap, Terms, UniformVelocity};
use bloch_core::physics::{exact_relaxation_rotation, PhysicalConstants, TissueParams, Vec3};
use bloch_core::scenarios::run::{dominant_bin, region_volume, spectrum};
use bloch_core::scenarios::{
    execute, plateau, run_convergence, run_pulsatile, run_static_phantom, run_through_plane, run_yuan_slice,
    slice_profile, Command, PumpTable, ScenarioConfig,
};
use bloch_core::sequence::{hard_pulse, ConstantField, Repetition, RfEvent, SequenceTimeline, Spoiling};
use bloch_core::timeint::{integrate, Hooks, Method, SolverConfig};
use bloch_core::units;
use bloch_core::verify::{convergence_order, overshoot_metric, spoiled_recursion, spoiled_steady_state, EnergyReport};

type Outcome = Result<(bool, String), String>;

fn config(name: &str, overrides: &[&str]) -> Result<ScenarioConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::from_file(&path, &ov).map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Energy reports gathered from the scenario runs of other criteria.
#[derive(Default)]
struct Ledger {
    energy: Vec<(String, EnergyReport<f64>)>,
}

impl Ledger {
    fn add(&mut self, name: impl Into<String>, report: &Option<EnergyReport<f64>>) {
        if let Some(r) = report {
            self.energy.push((name.into(), r.clone()));
        }
    }
}

/// All seven tubes on a reduced grid against the spoiled steady state.
fn steady_state_oracle(ledger: &mut Ledger) -> Outcome {
    let start = Instant::now();
    let cfg = config("static_phantom.toml", &["geometry.cells=[3,3,5]"])?;
    let tubes = run_static_phantom(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let (tr, te, flip) =
        (units::ms(cfg.sequence.tr_ms), units::ms(cfg.sequence.te_ms), units::deg(cfg.sequence.flip_deg));
    let vol = region_volume(&cfg);
    let mut worst = (0.0f64, String::new());
    for t in &tubes {
        let want = spoiled_steady_state(&t.tissue, tr, te, flip).signal * vol;
        let err = rel(plateau(&cfg, &t.outcome.series), want);
        if err > worst.0 {
            worst = (err, t.label.clone());
        }
        ledger.add(format!("static tube {}", t.label), &t.outcome.energy);
    }
    let pass = tubes.len() == 7 && worst.0 <= 1e-3 && elapsed < 60.0;
    Ok((
        pass,
        format!("{} tubes, worst relative error {:.2e} (tube {}), {:.1} s", tubes.len(), worst.0, worst.1, elapsed),
    ))
}

/// Frame-by-frame approach curve of a single isochromat per tube.
fn transient_oracle() -> Outcome {
    let cfg = config(
        "static_phantom.toml",
        &[
            "geometry.cells=[1,1,1]",
            "sequence.rf_duration_ms=1e-4",
            "solver.rtol=1e-10",
            "solver.atol=1e-12",
            "output.energy_check=false",
        ],
    )?;
    let tubes = run_static_phantom(&cfg).map_err(|e| e.to_string())?;
    let (tr, te, flip) =
        (units::ms(cfg.sequence.tr_ms), units::ms(cfg.sequence.te_ms), units::deg(cfg.sequence.flip_deg));
    let spf = cfg.sequence.spokes_per_frame;
    let vol = region_volume(&cfg);
    let mut worst = 0.0f64;
    for t in &tubes {
        let rec = spoiled_recursion(&t.tissue, tr, te, flip, t.tissue.m0(), cfg.sequence.frames * spf);
        let got = &t.outcome.series.magnitude;
        if got.len() != cfg.sequence.frames {
            return Ok((false, format!("tube {}: {} frames", t.label, got.len())));
        }
        for (f, g) in got.iter().enumerate() {
            let want = rec[f * spf..(f + 1) * spf].iter().map(|s| s.signal).sum::<f64>() / spf as f64 * vol;
            worst = worst.max(rel(*g, want));
        }
    }
    Ok((
        worst <= 1e-6,
        format!("{} frames x {} tubes, worst relative error {worst:.2e}", cfg.sequence.frames, tubes.len()),
    ))
}

/// Hard pulse on one isochromat with relaxation switched off.
fn pulse_once(flip: f64) -> Result<Vec3<f64>, String> {
    let consts = PhysicalConstants::default();
    let d = units::us(10.0);
    let pulse = hard_pulse(flip, d, &consts).map_err(|e| e.to_string())?;
    let tl = SequenceTimeline::new(
        vec![RfEvent { start: 0.0, pulse, phase: 0.0 }],
        Vec::new(),
        vec![Repetition { start: 0.0, end: d, te: d, angle: 0.0, readout: None }],
        Spoiling::None,
        1,
    )
    .map_err(|e| e.to_string())?;
    let set = IsochromatSet::new(vec![[0.0; 3]], vec![1.0], vec![TissueParams::no_relaxation(1.0)])
        .map_err(|e| e.to_string())?;
    let sys = IsochromatSystem::new(&set, &tl);
    let solver = SolverConfig { rtol: 1e-12, atol: 1e-14, ..Default::default() };
    let tr = integrate(&sys, &set.equilibrium(), 0.0, d, &solver, Hooks::default()).map_err(|e| e.error.to_string())?;
    Ok(Vec3::new(tr.state[0], tr.state[1], tr.state[2]))
}

fn rotation_exactness() -> Outcome {
    let m90 = pulse_once(std::f64::consts::FRAC_PI_2)?;
    let m180 = pulse_once(std::f64::consts::PI)?;
    let e90 = m90.max_abs_diff(Vec3::new(0.0, 1.0, 0.0));
    let e180 = m180.max_abs_diff(Vec3::new(0.0, 0.0, -1.0));
    Ok((e90 <= 1e-6 && e180 <= 1e-6, format!("90 deg error {e90:.1e}, 180 deg error {e180:.1e}")))
}

/// First-order upwind finite volumes, written out by hand; zero inflow.
fn fv_stencil(m: &[f64], u: f64, h: f64) -> Vec<f64> {
    let n = m.len();
    (0..n)
        .map(|i| {
            if u >= 0.0 {
                let up = if i == 0 { 0.0 } else { m[i - 1] };
                -u * (m[i] - up) / h
            } else {
                let up = if i + 1 == n { 0.0 } else { m[i + 1] };
                -u * (up - m[i]) / h
            }
        })
        .collect()
}

/// Largest distance in units in the last place between operator and
/// stencil matrices, built column by column from unit vectors.
fn fv_deviation(len: f64, u: f64) -> Result<u64, String> {
    let n = 16;
    let mesh = BoxMesh::line_z(0.0, len, n).map_err(|e| e.to_string())?;
    let h = len / n as f64;
    let space = DgSpace::new(mesh, 0);
    let regions = RegionMap::uniform(space.mesh(), "t", TissueParams::no_relaxation(1.0));
    let field = ConstantField::default();
    let vel = UniformVelocity::axial(u);
    let op = DgOperator::new(&space, &regions, &field, &vel).with_inflow(BoundaryData::Constant(Vec3::zero()));
    let mut worst = 0u64;
    for j in 0..n {
        for comp in 0..3 {
            let mut y = vec![0.0; space.ndofs()];
            y[space.dof(j, comp, 0)] = 1.0;
            let mut out = vec![0.0; y.len()];
            op.apply(0.0, &y, &mut out, Terms::ADVECTION).map_err(|e| e.to_string())?;
            let mut m = vec![0.0; n];
            m[j] = 1.0;
            let want = fv_stencil(&m, u, h);
            for i in 0..n {
                for c in 0..3 {
                    let got = out[space.dof(i, c, 0)];
                    let w = if c == comp { want[i] } else { 0.0 };
                    worst = worst.max(ulps(got, w));
                }
            }
        }
    }
    Ok(worst)
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

fn fv_equivalence() -> Outcome {
    // dyadic widths: every basis value and weight is exact in binary
    let exact = [0.75, -0.375].iter().map(|&u| fv_deviation(1.0 / 16.0, u)).collect::<Result<Vec<_>, _>>()?;
    let general = [0.8, -0.3].iter().map(|&u| fv_deviation(0.032, u)).collect::<Result<Vec<_>, _>>()?;
    let e = exact.iter().max().copied().unwrap_or(0);
    let g = general.iter().max().copied().unwrap_or(0);
    Ok((
        e == 0,
        format!("16 cells, both flow directions: {e} ulp on a dyadic mesh (h = 1/256 m), {g} ulp with h = 2 mm"),
    ))
}

fn spatial_convergence() -> Outcome {
    let start = Instant::now();
    let cfg = config("yuan_slice.toml", &[])?;
    let c = run_convergence(&cfg).map_err(|e| e.to_string())?;
    let rep = convergence_order(&c.h, &c.l2, format!("{} cells", c.reference_cells)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let errs: Vec<String> = c.l2.iter().map(|e| format!("{e:.2e}")).collect();
    Ok((
        rep.monotone && rep.order >= 2.5 && elapsed < 600.0,
        format!("L2(My) {} vs {} cells, order {:.2}, {:.1} s", errs.join(" "), c.reference_cells, rep.order, elapsed),
    ))
}

fn slope(steps: &[usize], errors: &[f64]) -> Result<f64, String> {
    let h: Vec<f64> = steps.iter().map(|&n| 1.0 / n as f64).collect();
    convergence_order(&h, errors, "exact").map(|r| r.order).map_err(|e| e.to_string())
}

/// Global error of fixed-step runs on the constant-field isochromat.
fn rk_slope(method: Method, steps: &[usize]) -> Result<f64, String> {
    let tissue = TissueParams::new(0.1, 0.05, 1.0).map_err(|e| e.to_string())?;
    let consts = PhysicalConstants::default();
    let g = 2e-3;
    let pos = [0.0, 0.0, 0.01];
    let field = ConstantField { rf: (0.0, 0.0), gradient: [0.0, 0.0, g] };
    let set = IsochromatSet::new(vec![pos], vec![1.0], vec![tissue]).map_err(|e| e.to_string())?;
    let sys = IsochromatSystem::new(&set, &field);
    let m0 = Vec3::new(0.6, 0.0, 0.8);
    let span = 0.01;
    let exact = exact_relaxation_rotation(m0, g * pos[2], &tissue, &consts, span).map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    for &n in steps {
        let solver = SolverConfig { method, fixed_step: Some(span / n as f64), ..Default::default() };
        let tr =
            integrate(&sys, &m0.to_array(), 0.0, span, &solver, Hooks::default()).map_err(|e| e.error.to_string())?;
        errors.push(Vec3::new(tr.state[0], tr.state[1], tr.state[2]).max_abs_diff(exact));
    }
    slope(steps, &errors)
}

/// Lie or Strang splitting of advection against an off-resonant RF
/// rotation in a z gradient, measured against a tight coupled run.
fn split_slope(method: Method, steps: &[usize]) -> Result<f64, String> {
    let mesh = BoxMesh::line_z(-0.01, 0.01, 40).map_err(|e| e.to_string())?;
    let space = DgSpace::new(mesh, 2);
    let regions = RegionMap::uniform(space.mesh(), "t", TissueParams::new(0.5, 0.2, 1.0).map_err(|e| e.to_string())?);
    let field = ConstantField { rf: (5e-6, 0.0), gradient: [0.0, 0.0, 2e-3] };
    let vel = UniformVelocity::axial(0.5);
    let op =
        DgOperator::new(&space, &regions, &field, &vel).with_inflow(BoundaryData::Constant(Vec3::new(0.0, 0.0, 1.0)));
    let y0 = DgState::project(&space, |r| {
        let s = (-(r[2] / 0.004_f64).powi(2)).exp();
        Vec3::new(0.3 * s, 0.0, 1.0 - 0.2 * s)
    })
    .coeffs;
    let span = 2e-3;
    let tight = SolverConfig { rtol: 1e-12, atol: 1e-14, ..Default::default() };
    let reference = integrate(&op, &y0, 0.0, span, &tight, Hooks::default()).map_err(|e| e.error.to_string())?.state;
    let mut errors = Vec::new();
    for &n in steps {
        let solver =
            SolverConfig { method, fixed_step: Some(span / n as f64), split_inner: Method::Rk45, cfl: 1e9, ..tight };
        let y = integrate(&op, &y0, 0.0, span, &solver, Hooks::default()).map_err(|e| e.error.to_string())?.state;
        errors.push(y.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    }
    slope(steps, &errors)
}

fn integrator_orders() -> Outcome {
    let rk2 = rk_slope(Method::Rk2, &[800, 1600, 3200, 6400])?;
    let rk23 = rk_slope(Method::Rk23, &[400, 800, 1600, 3200])?;
    let rk45 = rk_slope(Method::Rk45, &[50, 100, 200, 400])?;
    let lie = split_slope(Method::SplitLie, &[8, 16, 32, 64])?;
    let strang = split_slope(Method::SplitStrang, &[8, 16, 32, 64])?;
    let pass = (rk2 - 2.0).abs() <= 0.1
        && (rk23 - 3.0).abs() <= 0.1
        && (rk45 - 5.0).abs() <= 0.15
        && (lie - 1.0).abs() <= 0.2
        && (strang - 2.0).abs() <= 0.2;
    Ok((pass, format!("rk2 {rk2:.3}, rk23 {rk23:.3}, rk45 {rk45:.3}, lie {lie:.3}, strang {strang:.3}")))
}

fn state_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn adaptivity_benefit(ledger: &mut Ledger) -> Outcome {
    let reference = run_yuan_slice(&config(
        "yuan_slice.toml",
        &["solver.rtol=1e-11", "solver.atol=1e-13", "output.energy_check=false"],
    )?)
    .map_err(|e| e.to_string())?;
    let adaptive = run_yuan_slice(&config("yuan_slice.toml", &[])?).map_err(|e| e.to_string())?;
    ledger.add("yuan-slice", &adaptive.energy);
    let fixed = run_yuan_slice(&config(
        "yuan_slice.toml",
        &["solver.method=\"rk2\"", "solver.fixed_steps=4500", "output.energy_check=false"],
    )?)
    .map_err(|e| e.to_string())?;
    let ea = state_distance(&adaptive.state.coeffs, &reference.state.coeffs);
    let ef = state_distance(&fixed.state.coeffs, &reference.state.coeffs);
    let (na, nf) = (adaptive.stats.accepted, fixed.stats.accepted);
    Ok((
        na * 5 <= nf && ea <= ef,
        format!("rk45 {na} steps, error {ea:.2e}; rk2 {nf} steps, error {ef:.2e}; ratio {:.1}x", nf as f64 / na as f64),
    ))
}

/// Excess of |My| over a converged reference in the inflow half.
fn penalty_efficacy() -> Outcome {
    let profile = |penalty: f64, cells: usize| -> Result<Vec<[f64; 4]>, String> {
        let cfg = config(
            "yuan_slice.toml",
            &[
                "flow.velocity_mm_per_s=1600",
                &format!("flow.penalty={penalty}"),
                &format!("geometry.cells=[{cells}]"),
                "output.energy_check=false",
            ],
        )?;
        let run = run_yuan_slice(&cfg).map_err(|e| e.to_string())?;
        Ok(slice_profile(&run.space, &run.state, 6001))
    };
    let reference = profile(0.0, 1600)?;
    let metric = |p: &[[f64; 4]]| {
        let near: Vec<usize> = (0..p.len()).filter(|&i| p[i][0] <= units::mm(-5.0)).collect();
        let excess = near.iter().map(|&i| (p[i][2].abs() - reference[i][2].abs()).max(0.0)).fold(0.0, f64::max);
        let my: Vec<f64> = near.iter().map(|&i| p[i][2]).collect();
        (excess, overshoot_metric(&my, 1.0))
    };
    let (m0, o0) = metric(&profile(0.0, 200)?);
    let (m5, o5) = metric(&profile(5e-4, 200)?);
    Ok((
        m0 > 0.0 && m5 <= m0 / 10.0,
        format!(
            "excess over 1600-cell envelope: {m0:.3e} without penalty, {m5:.3e} with 5e-4 (ratio {:.2}); \
             beyond |My| = 1: {:.1e} / {:.1e}; TV {:.3} / {:.3}",
            m0 / m5,
            o0.excess,
            o5.excess,
            o0.total_variation,
            o5.total_variation
        ),
    ))
}

fn energy_inequality(ledger: &Ledger) -> Outcome {
    let failed: Vec<&str> = ledger.energy.iter().filter(|(_, r)| !r.pass).map(|(n, _)| n.as_str()).collect();
    let margin = ledger.energy.iter().map(|(_, r)| r.margin).fold(f64::INFINITY, f64::min);
    Ok((
        !ledger.energy.is_empty() && failed.is_empty(),
        format!("{} runs monitored, smallest margin {margin:.3e}, failing: {failed:?}", ledger.energy.len()),
    ))
}

fn flow_monotonicity(ledger: &mut Ledger) -> Outcome {
    let cfg = config("through_plane.toml", &[])?;
    let velocities = PumpTable::flow_pump().velocities_mm_per_s();
    let mut plateaus = Vec::new();
    for &v in &velocities {
        let run = run_through_plane(&cfg, v).map_err(|e| e.to_string())?;
        ledger.add(format!("through-plane {v} mm/s"), &run.energy);
        plateaus.push(plateau(&cfg, &run.series));
    }
    let increasing = plateaus.windows(2).all(|w| w[1] > w[0]);
    let still = run_through_plane(&cfg, 0.0).map_err(|e| e.to_string())?;
    let mut static_cfg = cfg.clone();
    static_cfg.scenario = bloch_core::scenarios::config::ScenarioKind::StaticPhantom;
    static_cfg.flow.velocity_mm_per_s = 0.0;
    let water = run_static_phantom(&static_cfg).map_err(|e| e.to_string())?;
    let (p0, pw) = (plateau(&cfg, &still.series), plateau(&static_cfg, &water[0].outcome.series));
    let dev = rel(p0, pw);
    let list: Vec<String> = plateaus.iter().map(|p| format!("{p:.4e}")).collect();
    Ok((
        increasing && dev <= 1e-6,
        format!("plateaus {} at {velocities:?} mm/s; u = 0 vs static water {dev:.1e}", list.join(" < ")),
    ))
}

fn pulsatile_periodicity(ledger: &mut Ledger) -> Outcome {
    let cfg = config("pulsatile.toml", &[])?;
    let run = run_pulsatile(&cfg).map_err(|e| e.to_string())?;
    ledger.add("pulsatile", &run.energy);
    let m = &run.series.magnitude;
    let window = &m[m.len().saturating_sub(cfg.signal.last_frames)..];
    let frame_time = units::ms(cfg.sequence.tr_ms) * cfg.sequence.spokes_per_frame as f64;
    let expected = frame_time * window.len() as f64 / units::ms(cfg.flow.period_ms);
    let got = dominant_bin(&spectrum(window));
    Ok((
        got.is_some_and(|b| (b as f64 - expected).abs() <= 1.0),
        format!("dominant bin {got:?}, fundamental at {expected:.2}"),
    ))
}

fn csv_files(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let mut out: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| std::fs::read(&p).map(|b| (p.file_name().map(PathBuf::from).unwrap_or_default(), b)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    out.sort();
    Ok(out)
}

type CsvFiles = Vec<(PathBuf, Vec<u8>)>;

fn run_into(cfg: &ScenarioConfig, threads: usize) -> Result<(tempfile::TempDir, CsvFiles), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    pool.install(|| execute(Command::Simulate, cfg, "acceptance", dir.path())).map_err(|e| e.to_string())?;
    let files = csv_files(dir.path())?;
    Ok((dir, files))
}

fn reproducibility() -> Outcome {
    let flow = config("through_plane.toml", &[])?;
    let (_a, first) = run_into(&flow, 1)?;
    let (_b, second) = run_into(&flow, 1)?;
    let same_flow = !first.is_empty() && first == second;
    let random = config(
        "static_phantom.toml",
        &[
            "geometry.cells=[2,2,2]",
            "geometry.isochromats_per_cell=512",
            "sequence.frames=2",
            "sequence.spoiling=\"rf-random\"",
            "seed=7",
        ],
    )?;
    let (_c, one) = run_into(&random, 1)?;
    let (_d, three) = run_into(&random, 3)?;
    let same_pool = !one.is_empty() && one == three;
    Ok((
        same_flow && same_pool,
        format!(
            "through-plane run twice: {} CSVs {}; rf-random 4096 isochromats on 1 vs 3 threads: {} CSVs {}",
            first.len(),
            if same_flow { "identical" } else { "differ" },
            one.len(),
            if same_pool { "identical" } else { "differ" }
        ),
    ))
}

type Criterion = Box<dyn FnOnce(&mut Ledger) -> Outcome>;

fn main() {
    let mut ledger = Ledger::default();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 steady-state oracle", Box::new(steady_state_oracle)),
        ("2 transient oracle", Box::new(|_| transient_oracle())),
        ("3 rotation exactness", Box::new(|_| rotation_exactness())),
        ("4 dG/FV equivalence", Box::new(|_| fv_equivalence())),
        ("5 spatial convergence", Box::new(|_| spatial_convergence())),
        ("6 integrator orders", Box::new(|_| integrator_orders())),
        ("7 adaptivity benefit", Box::new(adaptivity_benefit)),
        ("8 penalty efficacy", Box::new(|_| penalty_efficacy())),
        ("10 flow monotonicity", Box::new(flow_monotonicity)),
        ("11 pulsatile periodicity", Box::new(pulsatile_periodicity)),
        ("12 reproducibility", Box::new(|_| reproducibility())),
        ("9 energy inequality", Box::new(|l| energy_inequality(l))),
    ];
    let mut lines = Vec::new();
    for (name, check) in criteria {
        let start = Instant::now();
        let (pass, detail) = match check(&mut ledger) {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        lines.push((name, pass, format!("{detail} [{:.1} s]", start.elapsed().as_secs_f64())));
    }
    lines.sort_by_key(|(name, _, _)| name.split(' ').next().and_then(|n| n.parse::<u32>().ok()));
    let mut failed = 0;
    for (name, pass, detail) in &lines {
        println!("{} {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
