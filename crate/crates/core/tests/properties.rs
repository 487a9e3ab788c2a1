use bloch_core::isochromat::{IsochromatSet, IsochromatSystem};
use bloch_core::mesh_dg::{BoxMesh, DgOperator, DgSpace, DgState, RegionMap, UniformVelocity};
use bloch_core::physics::{PhysicalConstants, TissueParams, Vec3};
use bloch_core::sequence::{
    build_flash_radial, parse_event_list, write_event_list, ConstantField, Excitation, FlashParams, Spoiling,
    SpokeOrder,
};
use bloch_core::signal::{integrate_signal, normalize, FrameSeries, Reference, SignalRegion};
use bloch_core::timeint::{adapt_step, integrate, Hooks, SolverConfig};
use bloch_core::units;
use proptest::prelude::*;

fn line_space(cells: usize, degree: usize) -> DgSpace<f64> {
    DgSpace::new(BoxMesh::line_z(-0.005, 0.005, cells).unwrap(), degree)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rotation_keeps_the_norm(
        bx in -2e-5f64..2e-5, by in -2e-5f64..2e-5, g in -5e-3f64..5e-3,
        theta in 0.0f64..3.1, phi in 0.0f64..6.2, span in 1e-4f64..2e-3,
    ) {
        let set = IsochromatSet::new(vec![[0.0, 0.0, 0.01]], vec![1.0], vec![TissueParams::no_relaxation(1.0)]).unwrap();
        let field = ConstantField { rf: (bx, by), gradient: [0.0, 0.0, g] };
        let sys = IsochromatSystem::new(&set, &field);
        let m0 = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let solver = SolverConfig { rtol: 1e-11, atol: 1e-13, ..Default::default() };
        let tr = integrate(&sys, &m0.to_array(), 0.0, span, &solver, Hooks::default()).unwrap();
        let m = Vec3::new(tr.state[0], tr.state[1], tr.state[2]);
        prop_assert!((m.norm() - 1.0).abs() < 1e-8, "{}", m.norm());
    }

    #[test]
    fn penalty_is_non_negative(
        coeffs in prop::collection::vec(-1.0f64..1.0, 3 * 3 * 8),
        eps in 0.0f64..1e-1,
    ) {
        let space = line_space(8, 2);
        let regions = RegionMap::uniform(space.mesh(), "t", TissueParams::no_relaxation(1.0));
        let field = ConstantField::default();
        let u = UniformVelocity::axial(0.3);
        let op = DgOperator::new(&space, &regions, &field, &u).with_penalty(eps);
        let e = op.energy(0.0, &coeffs);
        prop_assert!(e.penalty >= 0.0, "{}", e.penalty);
        prop_assert!(e.jumps >= 0.0);
    }

    #[test]
    fn signal_is_linear_in_the_state(
        a in prop::collection::vec(-1.0f64..1.0, 3 * 2 * 6),
        b in prop::collection::vec(-1.0f64..1.0, 3 * 2 * 6),
        s in -3.0f64..3.0, lo in -0.005f64..0.0, hi in 0.0f64..0.005,
    ) {
        let space = line_space(6, 1);
        let region = SignalRegion::new([-1.0, -1.0, lo], [1.0, 1.0, hi]);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
        let sa = integrate_signal(&space, &DgState::from_coeffs(&space, a).unwrap(), &region).unwrap();
        let sb = integrate_signal(&space, &DgState::from_coeffs(&space, b).unwrap(), &region).unwrap();
        let sm = integrate_signal(&space, &DgState::from_coeffs(&space, mix).unwrap(), &region).unwrap();
        let expect = sa * s + sb;
        prop_assert!((sm - expect).norm() <= 1e-12 * (1.0 + sa.norm() * s.abs() + sb.norm()));
    }

    #[test]
    fn normalizing_twice_changes_nothing(
        m in prop::collection::vec(0.1f64..10.0, 2..40),
        last in 1usize..10,
    ) {
        let once = normalize(&FrameSeries::new(m), Reference::LastN(last)).unwrap();
        let twice = normalize(&once, Reference::LastN(last)).unwrap();
        for (x, y) in once.normalized.iter().zip(&twice.normalized) {
            prop_assert!((x - y).abs() <= 1e-14 * x.abs());
        }
        prop_assert!((once.tail_mean(last) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn step_factor_stays_within_bounds(norm in 0.0f64..1e6, tau in 1e-6f64..1e-2, order in 1usize..6, after in any::<bool>()) {
        let cfg = SolverConfig::<f64>::default();
        let (accept, next) = adapt_step(norm, tau, order, &cfg, after).unwrap();
        prop_assert_eq!(accept, norm <= 1.0);
        prop_assert!(next >= tau * cfg.min_factor * (1.0 - 1e-15));
        prop_assert!(next <= tau * cfg.max_factor * (1.0 + 1e-15));
        if !accept || after {
            prop_assert!(next <= tau);
        }
    }

    #[test]
    fn event_list_round_trips(
        tr_ms in 2.0f64..8.0, flip_deg in 1.0f64..40.0, spokes in 1usize..6,
        frames in 1usize..3, seed in any::<u64>(), golden in any::<bool>(),
    ) {
        let p = FlashParams {
            tr: units::ms(tr_ms),
            te: units::ms(1.0),
            flip: units::deg(flip_deg),
            spokes_per_frame: spokes,
            frames,
            excitation: Excitation::Hard { duration: units::us(100.0) },
            g_readout: units::mt_per_m(10.0),
            readout_duration: units::ms(0.5),
            slice_thickness: units::mm(6.0),
            fov: units::mm(4.8),
            ramp: units::us(20.0),
            spoke_order: if golden { SpokeOrder::GoldenAngle } else { SpokeOrder::Sequential },
            spoiling: Spoiling::RfRandom { seed },
        };
        let tl = build_flash_radial(&p, &PhysicalConstants::default()).unwrap();
        let text = write_event_list(&tl);
        let back = parse_event_list::<f64>(&text).unwrap();
        prop_assert_eq!(back.rf_events(), tl.rf_events());
        prop_assert_eq!(write_event_list(&back), text);
    }
}
