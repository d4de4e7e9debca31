//! Shared generators for integration tests.

#![allow(dead_code)]

use myobundle::config::{SimulationConfig, ValidatedConfig};
use myobundle::evolution::{BundleState, Stepper};
use myobundle::functions::{DensityDatum, LengthProfile, ScalarFn};
use proptest::prelude::*;

/// Parameters of a random admissible force-mode configuration.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub eta: f64,
    pub delta_frac: f64,
    pub u0_frac: f64,
    pub u1_frac: f64,
    pub s_l: f64,
    pub x0: f64,
    pub c0: f64,
    pub d0: f64,
    pub l_upper: f64,
    pub plus_shape: (f64, f64, f64),
    pub minus_shape: (f64, f64, f64),
    pub force: f64,
    pub n_y: usize,
    pub n_l: usize,
    pub dt: f64,
}

pub fn random_case() -> impl Strategy<Value = RandomCase> {
    let shape = (1.0..2.0f64, 0.3..0.6f64, 0.5..1.0f64);
    (
        (0.8..1.5f64, 0.15..0.35f64, 0.0..1.0f64, 0.0..1.0f64, 0.02..0.3f64, 0.3..2.0f64),
        (0.5..2.0f64, 0.5..2.0f64, 0.8..1.5f64, shape.clone(), shape),
        (0.0..0.01f64, 8usize..24, 8usize..24, 0.01..0.2f64),
    )
        .prop_map(|((eta, delta_frac, u0_frac, u1_frac, s_l, x0), (c0, d0, l_upper, plus_shape, minus_shape), (force, n_y, n_l, dt))| {
            RandomCase {
                eta,
                delta_frac,
                u0_frac,
                u1_frac,
                s_l,
                x0,
                c0,
                d0,
                l_upper,
                plus_shape,
                minus_shape,
                force,
                n_y,
                n_l,
                dt,
            }
        })
}

/// Taper shape `(value, flat fraction, support fraction)` scaled to `l_upper`.
fn taper(l_upper: f64, (value, flat, support): (f64, f64, f64)) -> LengthProfile {
    let l_max = l_upper * (flat + (1.0 - flat) * support).max(flat + 0.1).min(1.0);
    LengthProfile::CosineTaper { value, l_flat: flat * l_upper, l_max }
}

impl RandomCase {
    pub fn config(&self, steps: usize) -> SimulationConfig {
        let mut c = SimulationConfig::force_free_benchmark(self.n_y, self.dt, self.dt * steps as f64);
        c.numerics.n_l = self.n_l;
        let p = &mut c.params;
        p.eta = self.eta;
        p.delta = self.delta_frac * self.eta;
        p.s_l = self.s_l;
        p.x0 = self.x0;
        p.c0 = self.c0;
        p.d0 = self.d0;
        let (lo, hi) = (p.delta, self.eta - p.delta);
        c.boundary.u0_plus = ScalarFn::constant(lo + self.u0_frac * (hi - lo));
        c.boundary.u1_minus = ScalarFn::constant(lo + self.u1_frac * (hi - lo));
        c.boundary.force = Some(ScalarFn::constant(self.force));
        let plus = taper(self.l_upper, self.plus_shape);
        let minus = taper(self.l_upper, self.minus_shape);
        let flat = |s: &LengthProfile| match s {
            LengthProfile::CosineTaper { l_flat, .. } => *l_flat,
            _ => unreachable!(),
        };
        let slope = |s: &LengthProfile| s.max_slope();
        c.bounds.alpha0 = self.plus_shape.0.min(self.minus_shape.0);
        c.bounds.beta0 = self.plus_shape.0.max(self.minus_shape.0);
        c.bounds.l_lower = flat(&plus).min(flat(&minus));
        c.bounds.l_upper = self.l_upper;
        c.bounds.lipschitz = slope(&plus).max(slope(&minus)) * 1.01;
        c.boundary.rho0_plus = DensityDatum::new(plus.clone());
        c.initial.rho_plus = DensityDatum::new(plus);
        c.boundary.rho1_minus = DensityDatum::new(minus.clone());
        c.initial.rho_minus = DensityDatum::new(minus);
        c
    }

    /// Largest `l` at which any datum is nonzero.
    pub fn support_end(&self) -> f64 {
        let c = self.config(1);
        [&c.boundary.rho0_plus, &c.boundary.rho1_minus, &c.initial.rho_plus, &c.initial.rho_minus]
            .iter()
            .map(|d| d.shape.support_end())
            .fold(0.0, f64::max)
    }
}

/// Accepted states of up to `steps` Heun steps (stops at the first termination).
pub fn states(config: &ValidatedConfig, steps: usize) -> Vec<BundleState> {
    let stepper = Stepper::new(config);
    let Ok(mut s) = stepper.initial_state() else { return vec![] };
    let mut out = vec![s.clone()];
    for _ in 0..steps {
        match stepper.heun_step(&s, config.numerics.dt, &mut Vec::new()) {
            Ok(next) => {
                out.push(next.clone());
                s = next;
            }
            Err(_) => break,
        }
    }
    out
}

/// `Some(violation)` if a grid has a negative value or mass at `l >= support`.
pub fn transport_invariant_violation(state: &BundleState, support: f64) -> Option<String> {
    for grid in [&state.rho_plus, &state.rho_minus] {
        let l = grid.l_nodes();
        for ((_, k), &v) in grid.values.indexed_iter() {
            if v < 0.0 {
                return Some(format!("negative density {v:e} at t = {}", state.t));
            }
            if l[k] >= support && v != 0.0 {
                return Some(format!("density {v:e} at l = {} beyond support {support}", l[k]));
            }
        }
    }
    None
}
