//! Time stepping of the coupled system: coefficients, velocities, the free
//! boundary and transport, with runtime checks of the sign conditions and of
//! degeneracy.

use std::fmt;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::config::{Mode, SimulationConfig, ValidatedConfig};
use crate::density::{coefficients, DensityError, DensityGrid, Family, FrictionCoefficients};
use crate::transport::{advance, CflWarning, TransportField, TransportStep};
use crate::velocity::{
    force_from_profile, solve_fixed, solve_free, FixedLengthBc, FreeForceBc, VelocityError, VelocityProfile,
};

/// Which characteristic sign condition a margin refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignCondition {
    /// `V⁺(0) > 0`
    PlusLeft,
    /// `V⁺(1) > Ẋ`
    PlusRight,
    /// `V⁻(0) < 0`
    MinusLeft,
    /// `V⁻(1) < Ẋ`
    MinusRight,
}

impl fmt::Display for SignCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignCondition::PlusLeft => "V+(0) > 0",
            SignCondition::PlusRight => "V+(1) > Xdot",
            SignCondition::MinusLeft => "V-(0) < 0",
            SignCondition::MinusRight => "V-(1) < Xdot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignMargins {
    pub plus_0: f64,
    pub plus_1: f64,
    pub minus_0: f64,
    pub minus_1: f64,
}

impl SignMargins {
    pub fn of(profile: &VelocityProfile, xdot: f64) -> Self {
        let n = profile.n_y();
        SignMargins {
            plus_0: profile.v_plus[0],
            plus_1: profile.v_plus[n] - xdot,
            minus_0: -profile.v_minus[0],
            minus_1: xdot - profile.v_minus[n],
        }
    }

    pub fn min(&self) -> (SignCondition, f64) {
        [
            (SignCondition::PlusLeft, self.plus_0),
            (SignCondition::PlusRight, self.plus_1),
            (SignCondition::MinusLeft, self.minus_0),
            (SignCondition::MinusRight, self.minus_1),
        ]
        .into_iter()
        .fold((SignCondition::PlusLeft, f64::INFINITY), |best, cur| if !(cur.1 >= best.1) { cur } else { best })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Prescribed force (force mode) or force recovered from the profile (length mode).
    pub force: f64,
    /// One-sided boundary-derivative estimate of the force.
    pub force_one_sided: f64,
    /// `max |F_tot(y) − F_tot(1)|`.
    pub force_residual: f64,
    pub min_d_plus: f64,
    pub min_d_minus: f64,
    pub min_c: f64,
    pub margins: SignMargins,
}

/// Accepted state at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleState {
    pub t: f64,
    pub x: f64,
    pub xdot: f64,
    pub rho_plus: DensityGrid,
    pub rho_minus: DensityGrid,
    pub coeffs: FrictionCoefficients,
    pub profile: VelocityProfile,
    pub diagnostics: Diagnostics,
    /// Inner iterations used for the step that produced this state.
    pub picard_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("bundle collapsed at t = {t}: X = {x:e} <= {x_min:e}")]
    BundleCollapsed { t: f64, x: f64, x_min: f64 },
    #[error("degenerate density at t = {t}: {quantity} = {value:e} < {threshold:e} at y node {y_node}")]
    DegenerateDensity { t: f64, y_node: usize, quantity: String, value: f64, threshold: f64 },
    #[error("sign condition {which} lost at t = {t}: margin {margin:e} < {min:e}")]
    SignConditionLost { t: f64, which: SignCondition, margin: f64, min: f64 },
    #[error("force gate failed at t = {t}: velocity deviation {deviation:e} > {budget:e}")]
    ForceGateFailed { t: f64, deviation: f64, budget: f64 },
    #[error("assumption {assumption} violated at t = {t}: {detail}")]
    AssumptionViolated { t: f64, assumption: &'static str, detail: String },
    #[error("numerical failure at t = {t}: {detail}")]
    NumericalFailure { t: f64, detail: String },
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    BundleCollapsed { t: f64, x: f64, x_min: f64 },
    DegenerateDensity { t: f64, y_node: usize, quantity: String, value: f64, threshold: f64 },
    SignConditionLost { t: f64, which: SignCondition, margin: f64, min: f64 },
    ForceGateFailed { t: f64, deviation: f64, budget: f64 },
    AssumptionViolated { t: f64, assumption: String, detail: String },
    NumericalFailure { t: f64, detail: String },
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::BundleCollapsed { .. } => "bundle_collapsed",
            Termination::DegenerateDensity { .. } => "degenerate_density",
            Termination::SignConditionLost { .. } => "sign_condition_lost",
            Termination::ForceGateFailed { .. } => "force_gate_failed",
            Termination::AssumptionViolated { .. } => "assumption_violated",
            Termination::NumericalFailure { .. } => "numerical_failure",
        }
    }

    /// Process exit status for this cause.
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Completed => 0,
            Termination::AssumptionViolated { .. } => 2,
            Termination::BundleCollapsed { .. } => 3,
            Termination::DegenerateDensity { .. } => 4,
            Termination::SignConditionLost { .. } => 5,
            Termination::ForceGateFailed { .. } => 6,
            Termination::NumericalFailure { .. } => 7,
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

impl From<StepError> for Termination {
    fn from(e: StepError) -> Self {
        match e {
            StepError::BundleCollapsed { t, x, x_min } => Termination::BundleCollapsed { t, x, x_min },
            StepError::DegenerateDensity { t, y_node, quantity, value, threshold } => {
                Termination::DegenerateDensity { t, y_node, quantity, value, threshold }
            }
            StepError::SignConditionLost { t, which, margin, min } => {
                Termination::SignConditionLost { t, which, margin, min }
            }
            StepError::ForceGateFailed { t, deviation, budget } => Termination::ForceGateFailed { t, deviation, budget },
            StepError::AssumptionViolated { t, assumption, detail } => {
                Termination::AssumptionViolated { t, assumption: assumption.to_string(), detail }
            }
            StepError::NumericalFailure { t, detail } => Termination::NumericalFailure { t, detail },
        }
    }
}

/// Result of the inner fixed-point loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub state: BundleState,
    /// Iterate at which the fixed point was reached (`picard_max` when it was not).
    pub iterations: usize,
    /// `‖ρ_k − ρ_{k−1}‖ + |X_k − X_{k−1}|` for `k = 2, 3, …`.
    pub differences: Vec<f64>,
    pub converged: bool,
}

/// Stateless driver for single steps; holds the validated configuration and
/// the thresholds derived from it.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    config: &'a SimulationConfig,
    eps_mass: f64,
    eps_ell: f64,
    sign_min: f64,
    x_min: f64,
}

/// Densities and length at one stage of a step.
struct Stage {
    x: f64,
    rho_plus: DensityGrid,
    rho_minus: DensityGrid,
}

impl<'a> Stepper<'a> {
    pub fn new(config: &'a ValidatedConfig) -> Self {
        Self::unchecked(config)
    }

    /// Skips validation; used to exercise runtime checks with inadmissible data.
    pub fn unchecked(config: &'a SimulationConfig) -> Self {
        Stepper {
            config,
            eps_mass: config.eps_mass(),
            eps_ell: config.eps_ell(),
            sign_min: config.sign_margin_min(),
            x_min: config.x_min(),
        }
    }

    pub fn config(&self) -> &SimulationConfig {
        self.config
    }

    /// Densities sampled from the initial data at `t = 0`.
    pub fn initial_state(&self) -> Result<BundleState, StepError> {
        let c = self.config;
        let (n_y, n_l) = (c.numerics.n_y, c.numerics.n_l);
        let l_max = c.bounds.l_upper;
        let plus = &c.initial.rho_plus;
        let minus = &c.initial.rho_minus;
        let rho_plus = DensityGrid::from_fn(n_y, n_l, l_max, Family::Plus, |y, l| plus.eval(y, l));
        let rho_minus = DensityGrid::from_fn(n_y, n_l, l_max, Family::Minus, |y, l| minus.eval(y, l));
        let x = match c.mode {
            Mode::Force => c.params.x0,
            Mode::Length => self.prescribed_length(0.0)?.0,
        };
        self.evaluate(0.0, Stage { x, rho_plus, rho_minus }, 0)
    }

    fn prescribed_length(&self, t: f64) -> Result<(f64, f64), StepError> {
        self.config.length_at(t).ok_or_else(|| StepError::AssumptionViolated {
            t,
            assumption: "X-ass",
            detail: "length mode without a prescribed length".into(),
        })
    }

    /// Coefficients, velocities and checks at a stage; produces a full state.
    fn evaluate(&self, t: f64, stage: Stage, picard_iters: usize) -> Result<BundleState, StepError> {
        let c = self.config;
        let p = &c.params;
        let Stage { x, rho_plus, rho_minus } = stage;
        if !(x > self.x_min) {
            return Err(StepError::BundleCollapsed { t, x, x_min: self.x_min });
        }
        if !rho_plus.is_finite() || !rho_minus.is_finite() {
            return Err(StepError::NumericalFailure { t, detail: "non-finite density".into() });
        }
        let coeffs = coefficients(&rho_plus, &rho_minus, p.c0, p.d0, self.eps_mass).map_err(|e| match e {
            DensityError::DegenerateDensity { y_node, family, mu1, eps_mass } => StepError::DegenerateDensity {
                t,
                y_node,
                quantity: format!("mu1_{family}"),
                value: mu1,
                threshold: eps_mass,
            },
            DensityError::GridMismatch => StepError::NumericalFailure { t, detail: e.to_string() },
        })?;
        self.check_ellipticity(t, &coeffs)?;

        let u0 = c.boundary.u0_plus.eval(t);
        let u1 = c.boundary.u1_minus.eval(t);
        let (profile, xdot, force, force_one_sided) = match c.mode {
            Mode::Force => {
                let force = c.force_at(t);
                let bc = FreeForceBc { x, force, u0_plus: u0, eta: p.eta, eps_ell: self.eps_ell };
                let profile = solve_free(&coeffs, &bc).map_err(|e| velocity_failure(t, e))?;
                let xdot = profile.v_minus[profile.n_y()] + u1;
                let est = force_from_profile(&profile, &coeffs);
                (profile, xdot, force, est.one_sided)
            }
            Mode::Length => {
                let (_, xdot) = self.prescribed_length(t)?;
                self.check_inflow_window(t, u0, u1, xdot)?;
                let bc = FixedLengthBc {
                    x,
                    xdot,
                    u0_plus: u0,
                    u1_minus: u1,
                    eta: p.eta,
                    eps_ell: self.eps_ell,
                    delta: Some(p.delta),
                };
                let profile = solve_fixed(&coeffs, &bc).map_err(|e| velocity_failure(t, e))?;
                let est = force_from_profile(&profile, &coeffs);
                (profile, xdot, est.integral, est.one_sided)
            }
        };
        if !profile.is_finite() || !xdot.is_finite() {
            return Err(StepError::NumericalFailure { t, detail: "non-finite velocity".into() });
        }

        let margins = SignMargins::of(&profile, xdot);
        let (which, margin) = margins.min();
        if !(margin >= self.sign_min) {
            return Err(StepError::SignConditionLost { t, which, margin, min: self.sign_min });
        }
        if c.mode == Mode::Force && c.numerics.gamma_est.is_some() {
            let budget = p.delta / 4.0;
            let deviation = profile
                .v_plus
                .iter()
                .map(|v| (v - u0).abs())
                .chain(profile.v_minus.iter().map(|v| (v - u0 + p.eta).abs()))
                .fold(0.0, f64::max);
            if !(deviation <= budget) {
                return Err(StepError::ForceGateFailed { t, deviation, budget });
            }
        }

        let diagnostics = Diagnostics {
            force,
            force_one_sided,
            force_residual: profile.force_variation(),
            min_d_plus: coeffs.min_d_plus(),
            min_d_minus: coeffs.min_d_minus(),
            min_c: coeffs.min_c(),
            margins,
        };
        Ok(BundleState { t, x, xdot, rho_plus, rho_minus, coeffs, profile, diagnostics, picard_iters })
    }

    fn check_ellipticity(&self, t: f64, k: &FrictionCoefficients) -> Result<(), StepError> {
        for (name, arr) in [("C", &k.c), ("D_plus", &k.d_plus), ("D_minus", &k.d_minus)] {
            if let Some((i, &v)) = arr.iter().enumerate().find(|(_, &v)| !(v >= self.eps_ell)) {
                return Err(StepError::DegenerateDensity {
                    t,
                    y_node: i,
                    quantity: name.to_string(),
                    value: v,
                    threshold: self.eps_ell,
                });
            }
        }
        Ok(())
    }

    /// Inflow speeds must leave room for the prescribed rate of change.
    fn check_inflow_window(&self, t: f64, u0: f64, u1: f64, xdot: f64) -> Result<(), StepError> {
        let p = &self.config.params;
        let lower = p.delta + xdot.max(0.0);
        let upper = p.eta - p.delta - (-xdot).max(0.0);
        let tol = 1e-12 * p.eta;
        for (name, u) in [("u0_plus", u0), ("u1_minus", u1)] {
            if !(u >= lower - tol && u <= upper + tol) {
                return Err(StepError::AssumptionViolated {
                    t,
                    assumption: "V-ass1",
                    detail: format!("{name} = {u} outside [{lower}, {upper}] for Xdot = {xdot}"),
                });
            }
        }
        Ok(())
    }

    fn fields(state: &BundleState) -> (TransportField, TransportField) {
        (
            TransportField::new(&state.profile, state.x, state.xdot, Family::Plus),
            TransportField::new(&state.profile, state.x, state.xdot, Family::Minus),
        )
    }

    /// Transports both families from `state.t` over `dt` with the given fields.
    fn transport(
        &self,
        state: &BundleState,
        dt: f64,
        fields: &(TransportField, TransportField),
        warnings: &mut Vec<CflWarning>,
    ) -> (DensityGrid, DensityGrid) {
        let c = self.config;
        let mut run = |grid: &DensityGrid, field: &TransportField, inflow| {
            let step = TransportStep {
                field,
                t: state.t,
                dt,
                s_l: c.params.s_l,
                inflow,
                midpoint_source: c.numerics.midpoint_source,
            };
            let (out, warn) = advance(grid, &step);
            warnings.extend(warn);
            out
        };
        let plus = run(&state.rho_plus, &fields.0, &c.boundary.rho0_plus);
        let minus = run(&state.rho_minus, &fields.1, &c.boundary.rho1_minus);
        (plus, minus)
    }

    fn next_length(&self, state: &BundleState, dt: f64, rate: f64) -> Result<f64, StepError> {
        match self.config.mode {
            Mode::Force => Ok(state.x + dt * rate),
            Mode::Length => Ok(self.prescribed_length(state.t + dt)?.0),
        }
    }

    /// Predictor of the step: explicit Euler in `X`, transport with the
    /// fields of `state`.
    fn predictor(&self, state: &BundleState, dt: f64, warnings: &mut Vec<CflWarning>) -> Result<BundleState, StepError> {
        let fields = Self::fields(state);
        let (rho_plus, rho_minus) = self.transport(state, dt, &fields, warnings);
        let x = self.next_length(state, dt, state.xdot)?;
        self.evaluate(state.t + dt, Stage { x, rho_plus, rho_minus }, 1)
    }

    /// Corrector: trapezoid in `X`, transport with the averaged fields of
    /// `state` and `guess`.
    fn corrector(
        &self,
        state: &BundleState,
        guess: &BundleState,
        dt: f64,
        iters: usize,
        warnings: &mut Vec<CflWarning>,
    ) -> Result<BundleState, StepError> {
        let (p0, m0) = Self::fields(state);
        let (p1, m1) = Self::fields(guess);
        let fields = (p0.average(&p1), m0.average(&m1));
        let (rho_plus, rho_minus) = self.transport(state, dt, &fields, warnings);
        let x = self.next_length(state, dt, 0.5 * (state.xdot + guess.xdot))?;
        self.evaluate(state.t + dt, Stage { x, rho_plus, rho_minus }, iters)
    }

    /// One Heun step (free or fixed mode, following the configuration).
    pub fn heun_step(&self, state: &BundleState, dt: f64, warnings: &mut Vec<CflWarning>) -> Result<BundleState, StepError> {
        let guess = self.predictor(state, dt, warnings)?;
        self.corrector(state, &guess, dt, 1, warnings)
    }

    /// Heun step in force mode.
    pub fn step_free(&self, state: &BundleState, dt: f64) -> Result<BundleState, StepError> {
        self.require_mode(Mode::Force, state.t)?;
        self.heun_step(state, dt, &mut Vec::new())
    }

    /// Heun step in length mode; also returns the force recovered at the new state.
    pub fn step_fixed(&self, state: &BundleState, dt: f64) -> Result<(BundleState, f64), StepError> {
        self.require_mode(Mode::Length, state.t)?;
        let next = self.heun_step(state, dt, &mut Vec::new())?;
        let force = next.diagnostics.force;
        Ok((next, force))
    }

    fn require_mode(&self, mode: Mode, t: f64) -> Result<(), StepError> {
        if self.config.mode != mode {
            return Err(StepError::NumericalFailure { t, detail: format!("stepper configured for {} mode", self.config.mode) });
        }
        Ok(())
    }

    /// Fixed-point iteration of the step map. The first iterate is the
    /// predictor; each further iterate re-transports from `state` with the
    /// fields averaged against the previous iterate. Falls back to the Heun
    /// result when `picard_max ≥ 2` iterates do not settle within `picard_tol`.
    pub fn picard_step(&self, state: &BundleState, dt: f64, warnings: &mut Vec<CflWarning>) -> Result<PicardReport, StepError> {
        let n = &self.config.numerics;
        let max = n.picard_max.max(1);
        let mut current = self.predictor(state, dt, warnings)?;
        let mut differences = Vec::new();
        let mut heun = None;
        for k in 2..=max {
            let next = self.corrector(state, &current, dt, k, warnings)?;
            if k == 2 {
                heun = Some(next.clone());
            }
            let diff = next.rho_plus.l2_distance(&current.rho_plus)
                + next.rho_minus.l2_distance(&current.rho_minus)
                + (next.x - current.x).abs();
            differences.push(diff);
            if diff < n.picard_tol {
                current.picard_iters = k - 1;
                return Ok(PicardReport { state: current, iterations: k - 1, differences, converged: true });
            }
            current = next;
        }
        if max == 1 {
            return Ok(PicardReport { state: current, iterations: 1, differences, converged: true });
        }
        let mut fallback = heun.expect("at least one corrector when picard_max >= 2");
        fallback.picard_iters = max;
        Ok(PicardReport { state: fallback, iterations: max, differences, converged: false })
    }
}

fn velocity_failure(t: f64, e: VelocityError) -> StepError {
    match e {
        VelocityError::EllipticityLost { which, y_node, value, floor } => {
            StepError::DegenerateDensity { t, y_node, quantity: which.to_string(), value, threshold: floor }
        }
        other => StepError::NumericalFailure { t, detail: other.to_string() },
    }
}

/// One row of the trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Xdot")]
    pub xdot: f64,
    #[serde(rename = "F")]
    pub force: f64,
    #[serde(rename = "min_D_plus")]
    pub min_d_plus: f64,
    #[serde(rename = "min_D_minus")]
    pub min_d_minus: f64,
    #[serde(rename = "min_C")]
    pub min_c: f64,
    pub margin_plus_0: f64,
    pub margin_plus_1: f64,
    pub margin_minus_0: f64,
    pub margin_minus_1: f64,
    pub picard_iters: usize,
}

impl TrajectoryRecord {
    pub fn of(state: &BundleState) -> Self {
        let d = &state.diagnostics;
        TrajectoryRecord {
            t: state.t,
            x: state.x,
            xdot: state.xdot,
            force: d.force,
            min_d_plus: d.min_d_plus,
            min_d_minus: d.min_d_minus,
            min_c: d.min_c,
            margin_plus_0: d.margins.plus_0,
            margin_plus_1: d.margins.plus_1,
            margin_minus_0: d.margins.minus_0,
            margin_minus_1: d.margins.minus_1,
            picard_iters: state.picard_iters,
        }
    }
}

pub fn write_trajectory_csv<W: Write>(records: &[TrajectoryRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// State captured at (the first accepted step at or after) a requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// `None` for the final state.
    pub requested: Option<f64>,
    pub state: BundleState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunWarnings {
    pub cfl: usize,
    pub picard_fallback: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trajectory: Vec<TrajectoryRecord>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    /// Last accepted state (absent when the initial evaluation fails).
    pub final_state: Option<BundleState>,
    pub warnings: RunWarnings,
}

/// Steps from `t = 0` to `t_end` or until a termination cause.
pub fn run(config: &ValidatedConfig) -> RunOutcome {
    run_unchecked(config)
}

/// [`run`] without the validation guarantee.
pub fn run_unchecked(config: &SimulationConfig) -> RunOutcome {
    let stepper = Stepper::unchecked(config);
    let numerics = &config.numerics;
    let mut warnings = RunWarnings::default();
    let mut trajectory = Vec::new();
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = numerics.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    pending.reverse();

    let mut state = match stepper.initial_state() {
        Ok(s) => s,
        Err(e) => {
            return RunOutcome { trajectory, snapshots, termination: e.into(), final_state: None, warnings };
        }
    };
    let mut take_snapshots = |state: &BundleState, snapshots: &mut Vec<Snapshot>| {
        while let Some(&s) = pending.last() {
            if state.t + 1e-12 >= s {
                snapshots.push(Snapshot { requested: Some(s), state: state.clone() });
                pending.pop();
            } else {
                break;
            }
        }
    };
    trajectory.push(TrajectoryRecord::of(&state));
    take_snapshots(&state, &mut snapshots);

    let mut termination = Termination::Completed;
    let mut cfl = Vec::new();
    for n in 1..=numerics.n_steps() {
        let t_next = numerics.time_of(n);
        let dt = t_next - state.t;
        let result = if numerics.picard {
            stepper.picard_step(&state, dt, &mut cfl).map(|r| {
                if !r.converged {
                    warnings.picard_fallback += 1;
                }
                r.state
            })
        } else {
            stepper.heun_step(&state, dt, &mut cfl)
        };
        warnings.cfl += cfl.len();
        cfl.clear();
        match result {
            Ok(mut next) => {
                next.t = t_next;
                trajectory.push(TrajectoryRecord::of(&next));
                take_snapshots(&next, &mut snapshots);
                state = next;
            }
            Err(e) => {
                termination = e.into();
                break;
            }
        }
    }
    snapshots.push(Snapshot { requested: None, state: state.clone() });
    RunOutcome { trajectory, snapshots, termination, final_state: Some(state), warnings }
}
