mod common;

use common::{random_case, states, transport_invariant_violation};
use myobundle::config::validate;
use myobundle::density::{DensityGrid, Family};
use myobundle::evolution::run;
use myobundle::functions::{DensityDatum, LengthProfile};
use myobundle::transport::{advance, TransportField, TransportStep};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn densities_stay_nonnegative_and_supported(case in random_case()) {
        let cfg = validate(case.config(12)).unwrap();
        let support = case.support_end();
        for s in states(&cfg, 12) {
            prop_assert_eq!(transport_invariant_violation(&s, support), None);
        }
    }

    #[test]
    fn lower_bound_propagates_on_short_filaments(case in random_case()) {
        let probe = case.config(1);
        let (l_lower, s_l, dt) = (probe.bounds.l_lower, probe.params.s_l, probe.numerics.dt);
        // elapsed age stays within l_lower / (2 s_l)
        let steps = ((l_lower / (2.0 * s_l)) / dt).floor().min(12.0) as usize;
        let cfg = validate(case.config(steps.max(1))).unwrap();
        let alpha0 = cfg.bounds.alpha0;
        for s in states(&cfg, steps) {
            if s.t > l_lower / (2.0 * s_l) {
                break;
            }
            for grid in [&s.rho_plus, &s.rho_minus] {
                let eps_grid = 10.0 * (grid.dy() + grid.dl());
                let floor = alpha0 / 2.0 * (1.0 - eps_grid);
                let l = grid.l_nodes();
                for ((_, k), &v) in grid.values.indexed_iter() {
                    if l[k] <= l_lower / 2.0 {
                        prop_assert!(v >= floor, "rho = {} < {} at l = {}, t = {}", v, floor, l[k], s.t);
                    }
                }
            }
        }
    }

    #[test]
    fn runs_are_deterministic(case in random_case()) {
        let cfg = validate(case.config(6)).unwrap();
        let (a, b) = (run(&cfg), run(&cfg));
        prop_assert_eq!(a.trajectory, b.trajectory);
        prop_assert_eq!(a.final_state, b.final_state);
    }

    /// Without fresh inflow the support retreats by the whole cells contained
    /// in each step's shift `s_l dt`; the fractional part only smears.
    #[test]
    fn support_retreats_without_inflow(
        speed in 0.05..0.8f64,
        s_l in 0.02..0.3f64,
        reach in 0.5..1.0f64,
        n in 8usize..40,
        dt in 0.01..0.2f64,
        steps in 1usize..15,
    ) {
        let l_max = 1.0;
        let shape = LengthProfile::CosineTaper { value: 1.0, l_flat: 0.3 * reach, l_max: reach };
        let support = shape.support_end();
        let mut grid = DensityGrid::from_fn(n, n, l_max, Family::Plus, |_, l| shape.eval(l));
        let field = TransportField { family: Family::Plus, speed: vec![speed; n + 1], rate: vec![0.0; n + 1] };
        let none = DensityDatum::new(LengthProfile::CosineTaper { value: 0.0, l_flat: 0.5, l_max: 1.0 });
        for m in 0..steps {
            let step = TransportStep { field: &field, t: m as f64 * dt, dt, s_l, inflow: &none, midpoint_source: false };
            grid = advance(&grid, &step).0;
        }
        let cells = (s_l * dt / grid.dl() - 1e-9).floor().max(0.0);
        let edge = support - cells * grid.dl() * steps as f64 + grid.dl();
        let l = grid.l_nodes();
        for ((_, k), &v) in grid.values.indexed_iter() {
            if l[k] >= edge {
                prop_assert_eq!(v, 0.0, "l = {} beyond {}", l[k], edge);
            }
        }
    }
}
