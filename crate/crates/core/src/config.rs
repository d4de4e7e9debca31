//! Model parameters, data functions, numerical settings, and the checks that
//! admissible data must pass before a run starts.

use std::fmt;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functions::{DensityDatum, LengthFn, LengthProfile, ScalarFn};

/// Model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Interaction strength `C0`.
    pub c0: f64,
    /// Viscosity constant `D0`.
    pub d0: f64,
    /// Actin–myosin relative speed.
    pub eta: f64,
    /// Net depolymerization speed.
    pub s_l: f64,
    /// Initial bundle length.
    pub x0: f64,
    /// Inflow-speed margin, `0 < delta <= eta / 2`.
    pub delta: f64,
}

/// Bounds the density data must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDataBounds {
    /// Lower bound on the data for `l <= l_lower`.
    pub alpha0: f64,
    /// Upper bound on the data.
    pub beta0: f64,
    pub l_lower: f64,
    /// Support bound; also the extent of the `l` grid.
    pub l_upper: f64,
    /// Lipschitz bound on data derivatives.
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    /// Left inflow speed of plus filaments.
    pub u0_plus: ScalarFn,
    /// Right relative inflow speed of minus filaments.
    pub u1_minus: ScalarFn,
    /// Plus-filament density entering at `y = 0`, as a function of `(t, l)`.
    pub rho0_plus: DensityDatum,
    /// Minus-filament density entering at `y = 1`.
    pub rho1_minus: DensityDatum,
    /// Applied force (force mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<ScalarFn>,
    /// Bundle length (length mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<LengthFn>,
}

/// Initial densities as functions of `(y, l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub rho_plus: DensityDatum,
    pub rho_minus: DensityDatum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Prescribed force; the bundle length is a free boundary.
    Force,
    /// Prescribed bundle length; the force is post-processed.
    Length,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Force => "force",
            Mode::Length => "length",
        })
    }
}

fn default_picard_tol() -> f64 {
    1e-10
}

fn default_picard_max() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalParams {
    pub n_y: usize,
    pub n_l: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Use the inner fixed-point loop instead of a single Heun correction.
    #[serde(default)]
    pub picard: bool,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max")]
    pub picard_max: usize,
    /// Estimate of the velocity sensitivity constant used by the static force gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_est: Option<f64>,
    /// Minimum first moment before a family counts as depleted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_mass: Option<f64>,
    /// Minimum friction coefficient accepted by the velocity solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_ell: Option<f64>,
    /// Minimum characteristic sign margin (default `delta / 4`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_margin_min: Option<f64>,
    /// Collapse threshold for the free boundary (default `x0 / 100`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    /// Evaluate the stretching factor at the backtrace midpoint.
    #[serde(default)]
    pub midpoint_source: bool,
    /// Snapshot times.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
}

impl NumericalParams {
    pub fn new(n_y: usize, n_l: usize, dt: f64, t_end: f64) -> Self {
        Self {
            n_y,
            n_l,
            dt,
            t_end,
            picard: false,
            picard_tol: default_picard_tol(),
            picard_max: default_picard_max(),
            gamma_est: None,
            eps_mass: None,
            eps_ell: None,
            sign_margin_min: None,
            x_min: None,
            midpoint_source: false,
            snapshots: Vec::new(),
        }
    }

    /// Number of time steps to reach `t_end` (the last one may be shorter).
    pub fn n_steps(&self) -> usize {
        if self.t_end <= 0.0 {
            return 0;
        }
        (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Time of step `n`: `n * dt`, with the last one pinned to `t_end`.
    pub fn time_of(&self, n: usize) -> f64 {
        if n >= self.n_steps() {
            self.t_end.max(0.0)
        } else {
            n as f64 * self.dt
        }
    }

    /// The grid `{0, dt, 2dt, …, t_end}`.
    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|n| self.time_of(n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub mode: Mode,
    pub params: ModelParams,
    pub bounds: DensityDataBounds,
    pub boundary: BoundaryData,
    pub initial: InitialData,
    pub numerics: NumericalParams,
}

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

impl SimulationConfig {
    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigLoadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigLoadError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
            .map_err(|source| ConfigLoadError::Parse { path: path.display().to_string(), source })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// Free-mode force at `t` (zero when none is configured).
    pub fn force_at(&self, t: f64) -> f64 {
        self.boundary.force.as_ref().map_or(0.0, |f| f.eval(t))
    }

    /// `(X, Ẋ)` prescribed in length mode.
    pub fn length_at(&self, t: f64) -> Option<(f64, f64)> {
        self.boundary.length.as_ref().map(|f| f.eval(t))
    }

    /// First moment below which a family counts as depleted.
    pub fn eps_mass(&self) -> f64 {
        self.numerics.eps_mass.unwrap_or_else(|| 1e-4 * moment_lower_bound(&self.bounds, 1))
    }

    /// Minimum coefficient accepted by the velocity solve.
    pub fn eps_ell(&self) -> f64 {
        self.numerics.eps_ell.unwrap_or_else(|| {
            let (lower, _) = crate::density::ellipticity_bounds(&self.bounds, self.params.c0, self.params.d0);
            1e-6 * lower
        })
    }

    pub fn sign_margin_min(&self) -> f64 {
        self.numerics.sign_margin_min.unwrap_or(self.params.delta / 4.0)
    }

    pub fn x_min(&self) -> f64 {
        self.numerics.x_min.unwrap_or(self.params.x0 / 100.0)
    }

    /// The reference configuration with zero force and constant data:
    /// `eta = 1`, inflow speeds 0.4, `X0 = 1`, `s_l = 0.1`, plateau up to 0.4
    /// with a cosine taper to zero at 1.
    pub fn force_free_benchmark(n: usize, dt: f64, t_end: f64) -> Self {
        let shape = LengthProfile::CosineTaper { value: 1.0, l_flat: 0.4, l_max: 1.0 };
        SimulationConfig {
            mode: Mode::Force,
            params: ModelParams { c0: 1.0, d0: 1.0, eta: 1.0, s_l: 0.1, x0: 1.0, delta: 0.25 },
            bounds: DensityDataBounds { alpha0: 1.0, beta0: 1.0, l_lower: 0.4, l_upper: 1.0, lipschitz: 3.0 },
            boundary: BoundaryData {
                u0_plus: ScalarFn::constant(0.4),
                u1_minus: ScalarFn::constant(0.4),
                rho0_plus: DensityDatum::new(shape.clone()),
                rho1_minus: DensityDatum::new(shape.clone()),
                force: Some(ScalarFn::constant(0.0)),
                length: None,
            },
            initial: InitialData { rho_plus: DensityDatum::new(shape.clone()), rho_minus: DensityDatum::new(shape) },
            numerics: NumericalParams::new(n, n, dt, t_end),
        }
    }
}

/// Lower bound `(L̲/2)^{j+1}/(j+1) · α₀/2` on the `j`-th moment of an admissible density.
pub fn moment_lower_bound(bounds: &DensityDataBounds, j: i32) -> f64 {
    (bounds.l_lower / 2.0).powi(j + 1) / f64::from(j + 1) * bounds.alpha0 / 2.0
}

/// Upper bound `L̄^{j+1}/(j+1) · 2β₀` on the `j`-th moment.
pub fn moment_upper_bound(bounds: &DensityDataBounds, j: i32) -> f64 {
    bounds.l_upper.powi(j + 1) / f64::from(j + 1) * 2.0 * bounds.beta0
}

/// Named assumptions on the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Assumption {
    /// Inflow-speed margins.
    BcAss,
    /// Bounds, support, regularity and compatibility of the density data.
    RhoAss,
    /// Smallness of the applied force.
    FAss,
    /// Inflow-speed margins sharpened by the prescribed length change.
    VAss1,
    /// Admissible prescribed length.
    XAss,
    /// Positivity and ranges of the model constants.
    Params,
    /// Grid sizes, step size, tolerances.
    Numerics,
}

impl Assumption {
    pub fn name(self) -> &'static str {
        match self {
            Assumption::BcAss => "BC-ass",
            Assumption::RhoAss => "rho-ass",
            Assumption::FAss => "F-ass",
            Assumption::VAss1 => "V-ass1",
            Assumption::XAss => "X-ass",
            Assumption::Params => "params",
            Assumption::Numerics => "numerics",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a check failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SamplePoint {
    None,
    Time(f64),
    TimeLength(f64, f64),
    PositionLength(f64, f64),
}

impl fmt::Display for SamplePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplePoint::None => Ok(()),
            SamplePoint::Time(t) => write!(f, " at t={t}"),
            SamplePoint::TimeLength(t, l) => write!(f, " at (t={t}, l={l})"),
            SamplePoint::PositionLength(y, l) => write!(f, " at (y={y}, l={l})"),
        }
    }
}

/// One failed check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub assumption: Assumption,
    /// Which inequality, e.g. `"lower"` or `"compatibility plus"`.
    pub check: String,
    /// What was evaluated, e.g. `"u0_plus"`.
    pub quantity: String,
    pub at: SamplePoint,
    pub value: f64,
    pub bound: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}{} = {} violates bound {}",
            self.assumption, self.check, self.quantity, self.at, self.value, self.bound
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} assumption check(s) failed: {}", .violations.len(), summarize(.violations))]
pub struct AssumptionViolated {
    pub violations: Vec<Violation>,
}

impl AssumptionViolated {
    pub fn names(&self) -> Vec<&'static str> {
        let mut names: Vec<_> = self.violations.iter().map(|v| v.assumption.name()).collect();
        names.dedup();
        names
    }

    pub fn mentions(&self, assumption: Assumption) -> bool {
        self.violations.iter().any(|v| v.assumption == assumption)
    }
}

fn summarize(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A configuration that passed [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(SimulationConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> SimulationConfig {
        self.0
    }
}

impl Deref for ValidatedConfig {
    type Target = SimulationConfig;

    fn deref(&self) -> &SimulationConfig {
        &self.0
    }
}

/// Collects violations; only the first failure per (assumption, check, quantity)
/// is kept so a bad constant does not produce one entry per sample.
#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, assumption: Assumption, check: &str, quantity: &str, at: SamplePoint, value: f64, bound: f64) {
        let seen = self
            .violations
            .iter()
            .any(|v| v.assumption == assumption && v.check == check && v.quantity == quantity);
        if !seen {
            self.violations.push(Violation {
                assumption,
                check: check.to_string(),
                quantity: quantity.to_string(),
                at,
                value,
                bound,
            });
        }
    }

    /// Fails unless `value >= bound` (NaN fails).
    fn at_least(&mut self, a: Assumption, check: &str, q: &str, at: SamplePoint, value: f64, bound: f64) {
        if !(value >= bound) {
            self.fail(a, check, q, at, value, bound);
        }
    }

    fn at_most(&mut self, a: Assumption, check: &str, q: &str, at: SamplePoint, value: f64, bound: f64) {
        if !(value <= bound) {
            self.fail(a, check, q, at, value, bound);
        }
    }
}

// relative slack for floating-point comparisons against bounds
const SLACK: f64 = 1e-12;

/// Checks every assumption on the data at the sample points the solver uses
/// (time grid for functions of `t`, tensor grids for densities). Returns all
/// failures at once.
pub fn validate(config: SimulationConfig) -> Result<ValidatedConfig, AssumptionViolated> {
    let mut ck = Checker::default();
    check_params(&config, &mut ck);
    if ck.violations.is_empty() {
        check_inflow_speeds(&config, &mut ck);
        check_density_data(&config, &mut ck);
        check_force(&config, &mut ck);
    }
    if ck.violations.is_empty() {
        Ok(ValidatedConfig(config))
    } else {
        Err(AssumptionViolated { violations: ck.violations })
    }
}

fn check_params(c: &SimulationConfig, ck: &mut Checker) {
    use Assumption::{Numerics, Params};
    let p = &c.params;
    let none = SamplePoint::None;
    for (name, v) in [("c0", p.c0), ("d0", p.d0), ("eta", p.eta), ("s_l", p.s_l), ("x0", p.x0), ("delta", p.delta)] {
        if !(v > 0.0 && v.is_finite()) {
            ck.fail(Params, "positive", name, none, v, 0.0);
        }
    }
    ck.at_most(Params, "delta <= eta/2", "delta", none, p.delta, p.eta / 2.0);

    let b = &c.bounds;
    ck.at_least(Assumption::RhoAss, "alpha0 > 0", "alpha0", none, b.alpha0, f64::MIN_POSITIVE);
    ck.at_least(Assumption::RhoAss, "alpha0 <= beta0", "beta0", none, b.beta0, b.alpha0);
    ck.at_least(Assumption::RhoAss, "l_lower > 0", "l_lower", none, b.l_lower, f64::MIN_POSITIVE);
    if !(b.l_upper > b.l_lower) {
        ck.fail(Assumption::RhoAss, "l_lower < l_upper", "l_upper", none, b.l_upper, b.l_lower);
    }
    ck.at_least(Assumption::RhoAss, "lipschitz >= 0", "lipschitz", none, b.lipschitz, 0.0);

    let n = &c.numerics;
    ck.at_least(Numerics, "n_y >= 8", "n_y", none, n.n_y as f64, 8.0);
    ck.at_least(Numerics, "n_l >= 8", "n_l", none, n.n_l as f64, 8.0);
    if !(n.dt > 0.0 && n.dt.is_finite()) {
        ck.fail(Numerics, "positive", "dt", none, n.dt, 0.0);
    }
    if !(n.t_end >= 0.0 && n.t_end.is_finite()) {
        ck.fail(Numerics, "nonnegative", "t_end", none, n.t_end, 0.0);
    }
    if !(n.picard_tol > 0.0) {
        ck.fail(Numerics, "positive", "picard_tol", none, n.picard_tol, 0.0);
    }
    ck.at_least(Numerics, "picard_max >= 1", "picard_max", none, n.picard_max as f64, 1.0);
    if let Some(g) = n.gamma_est {
        if !(g > 0.0) {
            ck.fail(Numerics, "positive", "gamma_est", none, g, 0.0);
        }
    }

    match c.mode {
        Mode::Force if c.boundary.force.is_none() => ck.fail(Params, "force mode needs boundary.force", "force", none, f64::NAN, 0.0),
        Mode::Length if c.boundary.length.is_none() => {
            ck.fail(Params, "length mode needs boundary.length", "length", none, f64::NAN, 0.0)
        }
        _ => {}
    }
}

fn check_inflow_speeds(c: &SimulationConfig, ck: &mut Checker) {
    let p = &c.params;
    let times = c.numerics.time_grid();
    for &t in &times {
        let at = SamplePoint::Time(t);
        let speeds = [("u0_plus", c.boundary.u0_plus.eval(t)), ("u1_minus", c.boundary.u1_minus.eval(t))];
        match c.mode {
            Mode::Force => {
                for (q, u) in speeds {
                    ck.at_least(Assumption::BcAss, "lower", q, at, u, p.delta * (1.0 - SLACK));
                    ck.at_most(Assumption::BcAss, "upper", q, at, u, (p.eta - p.delta) * (1.0 + SLACK));
                }
            }
            Mode::Length => {
                let Some((x, xdot)) = c.length_at(t) else { continue };
                let lower = p.delta + xdot.max(0.0);
                let upper = p.eta - p.delta - (-xdot).max(0.0);
                for (q, u) in speeds {
                    ck.at_least(Assumption::VAss1, "lower", q, at, u, lower - SLACK * p.eta);
                    ck.at_most(Assumption::VAss1, "upper", q, at, u, upper + SLACK * p.eta);
                }
                ck.at_least(Assumption::XAss, "lower", "X", at, x, p.x0 / 2.0);
                ck.at_most(Assumption::XAss, "upper", "X", at, x, 2.0 * p.x0);
                if !(x.is_finite() && xdot.is_finite()) {
                    ck.fail(Assumption::XAss, "finite", "X", at, x, f64::NAN);
                }
                if t == 0.0 && (x - p.x0).abs() > 1e-9 * p.x0 {
                    ck.fail(Assumption::XAss, "initial length", "X(0)", at, x, p.x0);
                }
            }
        }
    }
}

fn check_density_data(c: &SimulationConfig, ck: &mut Checker) {
    use Assumption::RhoAss;
    let b = &c.bounds;
    let n_l = c.numerics.n_l;
    let n_y = c.numerics.n_y;
    let dl = b.l_upper / n_l as f64;
    let l_nodes: Vec<f64> = (0..=n_l).map(|k| k as f64 * dl).collect();
    let y_nodes: Vec<f64> = (0..=n_y).map(|i| i as f64 / n_y as f64).collect();
    let times = c.numerics.time_grid();
    let lip = b.lipschitz * (1.0 + 1e-9) + 1e-12;

    // Pointwise bounds and support on a set of sample coordinates.
    let mut pointwise = |name: &str, datum: &DensityDatum, s_nodes: &[f64], at: fn(f64, f64) -> SamplePoint| {
        if datum.shape.support_end() > b.l_upper * (1.0 + SLACK) {
            ck.fail(RhoAss, "support", name, SamplePoint::None, datum.shape.support_end(), b.l_upper);
        }
        for &s in s_nodes {
            for &l in &l_nodes {
                let v = datum.eval(s, l);
                if l <= b.l_lower {
                    ck.at_least(RhoAss, "lower", name, at(s, l), v, b.alpha0 * (1.0 - SLACK));
                }
                ck.at_least(RhoAss, "nonnegative", name, at(s, l), v, 0.0);
                ck.at_most(RhoAss, "upper", name, at(s, l), v, b.beta0 * (1.0 + SLACK));
                if l >= b.l_upper && v != 0.0 {
                    ck.fail(RhoAss, "support", name, at(s, l), v, 0.0);
                }
            }
            for w in l_nodes.windows(2) {
                let slope = (datum.eval(s, w[1]) - datum.eval(s, w[0])) / dl;
                ck.at_most(RhoAss, "lipschitz l", name, at(s, w[0]), slope.abs(), lip);
            }
        }
        // derivative in the first argument (t or y)
        for w in s_nodes.windows(2) {
            let ds = w[1] - w[0];
            if ds <= 0.0 {
                continue;
            }
            for &l in &l_nodes {
                let slope = (datum.eval(w[1], l) - datum.eval(w[0], l)) / ds;
                ck.at_most(RhoAss, "lipschitz s", name, at(w[0], l), slope.abs(), lip);
            }
        }
    };
    pointwise("rho0_plus", &c.boundary.rho0_plus, &times, SamplePoint::TimeLength);
    pointwise("rho1_minus", &c.boundary.rho1_minus, &times, SamplePoint::TimeLength);
    pointwise("rho_I_plus", &c.initial.rho_plus, &y_nodes, SamplePoint::PositionLength);
    pointwise("rho_I_minus", &c.initial.rho_minus, &y_nodes, SamplePoint::PositionLength);

    // Compatibility of boundary and initial data at t = 0.
    let tol = 1e-12 * b.beta0.max(1.0);
    for &l in &l_nodes {
        let gap = c.boundary.rho0_plus.eval(0.0, l) - c.initial.rho_plus.eval(0.0, l);
        if gap.abs() > tol {
            ck.fail(RhoAss, "compatibility plus", "rho0_plus(0,l) - rho_I_plus(0,l)", SamplePoint::PositionLength(0.0, l), gap, 0.0);
        }
        let gap = c.boundary.rho1_minus.eval(0.0, l) - c.initial.rho_minus.eval(1.0, l);
        if gap.abs() > tol {
            ck.fail(RhoAss, "compatibility minus", "rho1_minus(0,l) - rho_I_minus(1,l)", SamplePoint::PositionLength(1.0, l), gap, 0.0);
        }
    }
}

fn check_force(c: &SimulationConfig, ck: &mut Checker) {
    if c.mode != Mode::Force {
        return;
    }
    let Some(gamma) = c.numerics.gamma_est else { return };
    let budget = c.params.delta / (4.0 * gamma);
    for t in c.numerics.time_grid() {
        let f = c.force_at(t);
        ck.at_most(Assumption::FAss, "smallness", "|F|", SamplePoint::Time(t), f.abs(), budget * (1.0 + SLACK));
    }
}

/// Sufficient bound on `X0` for global existence in length mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShortnessReport {
    pub bound: f64,
    pub x0: f64,
    pub satisfied: bool,
}

/// `delta * l_lower / (4 s_l)`: a characteristic in a bundle at most this
/// long leaves before its filaments shrink below `l_lower / 2`.
pub fn shortness_bound(params: &ModelParams, bounds: &DensityDataBounds) -> ShortnessReport {
    let bound = params.delta * bounds.l_lower / (4.0 * params.s_l);
    ShortnessReport { bound, x0: params.x0, satisfied: params.x0 <= bound }
}
