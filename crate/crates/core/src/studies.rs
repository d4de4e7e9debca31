//! Refinement study against the force-free solution and the small-force
//! steady-state comparison.

use serde::Serialize;
use thiserror::Error;

use crate::config::{validate, AssumptionViolated, SimulationConfig, ValidatedConfig};
use crate::density::{DensityGrid, Family};
use crate::evolution::{run, RunOutcome, Termination};
use crate::oracles::{asymptotic_steady_length, ExplicitSolution, OracleError, SteadyState};

/// Errors below this are treated as exact (roundoff), and excluded from order fits.
pub const EXACT_FLOOR: f64 = 1e-11;

/// Minimum fitted orders accepted by [`ConvergenceReport::passes`].
pub const MIN_ORDER_SMOOTH: f64 = 1.9;
pub const MIN_ORDER_DENSITY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n_y: usize,
    pub n_l: usize,
    pub dt: f64,
    /// `|X − X̄|` at `t_end`.
    pub x: f64,
    /// `max_y |V⁺ − V̄⁺|` at `t_end`.
    pub v_plus: f64,
    pub v_minus: f64,
    /// Relative discrete L² error of the densities at `t_end`.
    pub rho_plus_l2: f64,
    pub rho_minus_l2: f64,
    pub rho_plus_linf: f64,
    pub rho_minus_linf: f64,
}

/// Fitted order of one error column; `Exact` when every level is at roundoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Order {
    Exact,
    Fitted(f64),
}

impl Order {
    pub fn at_least(&self, min: f64) -> bool {
        match self {
            Order::Exact => true,
            Order::Fitted(p) => *p >= min,
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Order::Exact => f.write_str("exact"),
            Order::Fitted(p) => write!(f, "{p:.3}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Orders {
    pub x: Order,
    pub v_plus: Order,
    pub v_minus: Order,
    pub rho_plus: Order,
    pub rho_minus: Order,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ErrorRow>,
    pub orders: Orders,
    /// Every column decreases from level to level (or stays at roundoff).
    pub monotone: bool,
}

impl ConvergenceReport {
    pub fn passes(&self) -> bool {
        let o = &self.orders;
        o.x.at_least(MIN_ORDER_SMOOTH)
            && o.v_plus.at_least(MIN_ORDER_SMOOTH)
            && o.v_minus.at_least(MIN_ORDER_SMOOTH)
            && o.rho_plus.at_least(MIN_ORDER_DENSITY)
            && o.rho_minus.at_least(MIN_ORDER_DENSITY)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error(transparent)]
    Invalid(#[from] AssumptionViolated),
    #[error("level {level} terminated early: {cause}")]
    Terminated { level: usize, cause: String, termination: Termination },
    #[error("a convergence study needs at least 2 levels")]
    TooFewLevels,
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Least-squares slope of `log e` against `log h` over entries above the floor.
pub fn fit_order(h: &[f64], e: &[f64]) -> Order {
    let pts: Vec<(f64, f64)> = h.iter().zip(e).filter(|(_, &e)| e > EXACT_FLOOR).map(|(h, e)| (h.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return Order::Exact;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Order::Fitted(sxy / sxx)
}

fn relative_l2(grid: &DensityGrid, exact: &DensityGrid) -> (f64, f64) {
    let norm = exact.l2_norm();
    let diff = grid.l2_distance(exact);
    let linf = grid.values.iter().zip(exact.values.iter()).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    (if norm > 0.0 { diff / norm } else { diff }, linf)
}

/// Errors of a completed force-free run against the explicit solution at its final state.
pub fn error_row(config: &SimulationConfig, outcome: &RunOutcome) -> Option<ErrorRow> {
    let state = outcome.final_state.as_ref()?;
    let sol = ExplicitSolution::new(config);
    let t = state.t;
    let (vp, vm) = (sol.v_plus(t), sol.v_minus(t));
    let max_dev = |v: &[f64], c: f64| v.iter().fold(0.0_f64, |m, x| m.max((x - c).abs()));
    let exact = |family: Family| {
        let g = match family {
            Family::Plus => &state.rho_plus,
            Family::Minus => &state.rho_minus,
        };
        DensityGrid::from_fn(g.n_y(), g.n_l(), g.l_max, family, |y, l| sol.density(t, y, l, family))
    };
    let (rp, rp_inf) = relative_l2(&state.rho_plus, &exact(Family::Plus));
    let (rm, rm_inf) = relative_l2(&state.rho_minus, &exact(Family::Minus));
    Some(ErrorRow {
        n_y: config.numerics.n_y,
        n_l: config.numerics.n_l,
        dt: config.numerics.dt,
        x: (state.x - sol.x_bar(t)).abs(),
        v_plus: max_dev(&state.profile.v_plus, vp),
        v_minus: max_dev(&state.profile.v_minus, vm),
        rho_plus_l2: rp,
        rho_minus_l2: rm,
        rho_plus_linf: rp_inf,
        rho_minus_linf: rm_inf,
    })
}

/// Runs `levels` refinements of `base`, halving `Δy`, `Δl` and `dt` per level.
pub fn convergence_study(base: &SimulationConfig, levels: usize) -> Result<ConvergenceReport, StudyError> {
    if levels < 2 {
        return Err(StudyError::TooFewLevels);
    }
    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut c = base.clone();
        let k = 1usize << level;
        c.numerics.n_y *= k;
        c.numerics.n_l *= k;
        c.numerics.dt /= k as f64;
        c.numerics.snapshots.clear();
        let c = validate(c)?;
        let outcome = run(&c);
        if !outcome.termination.is_completed() {
            return Err(StudyError::Terminated {
                level,
                cause: outcome.termination.name().to_string(),
                termination: outcome.termination,
            });
        }
        rows.push(error_row(&c, &outcome).expect("completed runs have a final state"));
    }
    let h: Vec<f64> = rows.iter().map(|r| 1.0 / r.n_y as f64).collect();
    let column = |f: fn(&ErrorRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let cols = [
        column(|r| r.x),
        column(|r| r.v_plus),
        column(|r| r.v_minus),
        column(|r| r.rho_plus_l2),
        column(|r| r.rho_minus_l2),
    ];
    let monotone = cols.iter().all(|c| c.windows(2).all(|w| w[1] < w[0] || w[1] <= EXACT_FLOOR));
    let orders = Orders {
        x: fit_order(&h, &cols[0]),
        v_plus: fit_order(&h, &cols[1]),
        v_minus: fit_order(&h, &cols[2]),
        rho_plus: fit_order(&h, &cols[3]),
        rho_minus: fit_order(&h, &cols[4]),
    };
    Ok(ConvergenceReport { rows, orders, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyReport {
    pub steady: SteadyState,
    pub t_end: f64,
    pub x_end: f64,
    /// `|X(t_end) − X∞| / X∞` (infinite when `X∞ = 0`).
    pub rel_gap: f64,
    pub termination: Termination,
    /// `(t, X_limit(t))` on the run's time grid.
    pub limit_trajectory: Vec<(f64, f64)>,
}

/// Runs `config` and compares the final length with the small-force limit.
pub fn steady_study(config: &ValidatedConfig) -> Result<(SteadyReport, RunOutcome), StudyError> {
    let c: &SimulationConfig = config;
    let b = &c.boundary;
    let steady = asymptotic_steady_length(
        c.force_at(0.0),
        c.params.c0,
        c.params.eta,
        b.u0_plus.eval(0.0),
        b.u1_minus.eval(0.0),
        &b.rho0_plus,
        &b.rho1_minus,
    )?;
    let outcome = run(config);
    let last = outcome.trajectory.last();
    let (t_end, x_end) = last.map_or((0.0, c.params.x0), |r| (r.t, r.x));
    let rel_gap = if steady.x_inf > 0.0 { (x_end - steady.x_inf).abs() / steady.x_inf } else { f64::INFINITY };
    let limit_trajectory = steady.limit_trajectory(c.params.x0, t_end, c.numerics.dt);
    let report = SteadyReport { steady, t_end, x_end, rel_gap, termination: outcome.termination.clone(), limit_trajectory };
    Ok((report, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_fit_recovers_power_laws() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|h| 3.0 * h * h).collect();
        match fit_order(&h, &e) {
            Order::Fitted(p) => assert!((p - 2.0).abs() < 1e-12),
            Order::Exact => panic!(),
        }
        assert_eq!(fit_order(&h, &[1e-15, 1e-16, 1e-14]), Order::Exact);
    }

    #[test]
    fn coarse_benchmark_study() {
        let base = SimulationConfig::force_free_benchmark(16, 0.02, 0.5);
        let report = convergence_study(&base, 3).unwrap();
        assert_eq!(report.orders.x, Order::Exact);
        assert_eq!(report.orders.v_plus, Order::Exact);
        assert!(report.orders.rho_plus.at_least(0.8), "{:?}", report.orders);
        assert!(report.monotone);
    }

    #[test]
    fn too_few_levels() {
        let base = SimulationConfig::force_free_benchmark(8, 0.1, 0.2);
        assert_eq!(convergence_study(&base, 1), Err(StudyError::TooFewLevels));
    }
}
