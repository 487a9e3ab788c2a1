use bloch_core::mesh_dg::{BoundaryData, BoxMesh, DgOperator, DgSpace, DgState, RegionMap, UniformVelocity};
use bloch_core::physics::{TissueParams, Vec3};
use bloch_core::scenarios::{run_through_plane, ScenarioConfig};
use bloch_core::sequence::ConstantField;
use bloch_core::timeint::{integrate, Hooks, SolverConfig};

fn tight() -> SolverConfig<f64> {
    SolverConfig { rtol: 1e-12, atol: 1e-14, ..Default::default() }
}

#[test]
fn pure_transport_reaches_inflow_state() {
    let space = DgSpace::new(BoxMesh::line_z(0.0, 0.01, 10).unwrap(), 2);
    let regions = RegionMap::uniform(space.mesh(), "t", TissueParams::no_relaxation(1.0));
    let field = ConstantField::default();
    let u = UniformVelocity::axial(1.0);
    let op =
        DgOperator::new(&space, &regions, &field, &u).with_inflow(BoundaryData::Constant(Vec3::new(0.0, 0.0, 1.0)));
    let y0 = DgState::project(&space, |r: [f64; 3]| Vec3::new((300.0 * r[2]).sin(), 0.5, -0.2)).coeffs;
    let tr = integrate(&op, &y0, 0.0, 0.1, &tight(), Hooks::default()).unwrap();
    let state = DgState { coeffs: tr.state };
    for c in 0..space.mesh().num_cells() {
        for xi in [-1.0, -0.3, 0.4, 1.0] {
            let m = state.eval_ref(&space, c, &[xi]);
            assert!(m.max_abs_diff(Vec3::new(0.0, 0.0, 1.0)) < 1e-10, "cell {c}: {m:?}");
        }
    }
}

#[test]
fn transport_conserves_the_mean_while_inflow_matches() {
    let mesh = BoxMesh::cuboid([0.0; 3], [0.002, 0.002, 0.01], [2, 2, 20]).unwrap();
    let space = DgSpace::new(mesh, 1);
    let regions = RegionMap::uniform(space.mesh(), "t", TissueParams::no_relaxation(1.0));
    let field = ConstantField::default();
    let u = UniformVelocity::axial(0.5);
    let background = Vec3::new(0.2, -0.3, 0.9);
    let op = DgOperator::new(&space, &regions, &field, &u).with_inflow(BoundaryData::Constant(background));
    let bump = |r: [f64; 3]| {
        let s = (-((r[2] - 0.004) / 0.0008).powi(2)).exp();
        Vec3::new(background.x + 0.1 * s, background.y, background.z - 0.2 * s)
    };
    let y0 = DgState::project(&space, bump);
    // the bump moves 0.25 mm; longer runs let integration error reach the
    // outflow face, which then carries a net flux
    let solver = SolverConfig { atol: 1e-8 * space.mesh().cell_volume().sqrt(), ..Default::default() };
    let tr = integrate(&op, &y0.coeffs, 0.0, 5e-4, &solver, Hooks::default()).unwrap();
    let before = y0.integral(&space);
    let after = DgState { coeffs: tr.state }.integral(&space);
    assert!(before.max_abs_diff(after) <= 1e-12 * before.norm(), "{before:?} {after:?}");
}

fn through_plane(axes_3d: bool) -> f64 {
    let geometry = if axes_3d {
        "axes = \"xyz\"\nlower_mm = [-0.8, -0.8, -9.0]\nupper_mm = [0.8, 0.8, 9.0]\ncells = [2, 2, 9]"
    } else {
        "axes = \"z\"\nlower_mm = [-9.0]\nupper_mm = [9.0]\ncells = [9]"
    };
    let text = format!(
        r#"scenario = "through-plane"
[geometry]
{geometry}
discretization = "dg"
degree = 1
[[tissue]]
label = "water"
t1_ms = 2700
t2_ms = 2100
[sequence]
tr_ms = 1.96
te_ms = 1.22
spokes_per_frame = 4
frames = 3
excitation = "sinc"
rf_duration_ms = 0.6
time_bandwidth = 2.0
g_readout_mt_per_m = 1e-9
[flow]
velocity_mm_per_s = 40.0
[solver]
rtol = 1e-10
atol = 1e-12
[output]
energy_check = false
"#
    );
    let cfg = ScenarioConfig::parse(&text, "inline").unwrap();
    let run = run_through_plane(&cfg, cfg.flow.velocity_mm_per_s).unwrap();
    run.series.magnitude.iter().sum()
}

#[test]
fn line_model_matches_resolved_tube() {
    // uniform cross-section: the 3D signal per unit area equals the line's
    let line = through_plane(false);
    let tube = through_plane(true) / (1.6e-3 * 1.6e-3);
    assert!((line - tube).abs() <= 1e-8 * line.abs(), "{line} {tube}");
}
