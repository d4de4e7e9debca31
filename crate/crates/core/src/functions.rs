//! Data functions supplied through the configuration file.
//!
//! Everything here is either a closed-form preset or tabulated samples with
//! linear (or cubic Hermite) interpolation, so continuity of boundary data in
//! time holds by construction.

use serde::{Deserialize, Serialize};

/// A scalar function of one variable: inflow speeds and forces of `t`,
/// or modulation profiles of `t` / `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Constant { value: f64 },
    /// `start + slope * s`
    Ramp { start: f64, slope: f64 },
    /// Piecewise linear through `[s, value]` pairs, constant outside the table.
    Table { points: Vec<[f64; 2]> },
}

impl ScalarFn {
    pub fn constant(value: f64) -> Self {
        ScalarFn::Constant { value }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ScalarFn::Constant { value } => *value,
            ScalarFn::Ramp { start, slope } => start + slope * s,
            ScalarFn::Table { points } => interp_linear(points, s),
        }
    }

    /// Exact integral over `[a, b]` (all variants are piecewise polynomial).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        match self {
            ScalarFn::Constant { value } => value * (b - a),
            ScalarFn::Ramp { start, slope } => start * (b - a) + 0.5 * slope * (b * b - a * a),
            ScalarFn::Table { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                // Breakpoints inside (a, b) split the integrand into linear pieces.
                let mut knots = vec![a];
                knots.extend(points.iter().map(|p| p[0]).filter(|&s| s > a && s < b));
                knots.push(b);
                knots
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (interp_linear(points, w[0]) + interp_linear(points, w[1])))
                    .sum()
            }
        }
    }

    /// Lipschitz constant (maximum absolute slope).
    pub fn max_slope(&self) -> f64 {
        match self {
            ScalarFn::Constant { .. } => 0.0,
            ScalarFn::Ramp { slope, .. } => slope.abs(),
            ScalarFn::Table { points } => points
                .windows(2)
                .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            ScalarFn::Constant { .. } => true,
            ScalarFn::Ramp { slope, .. } => *slope == 0.0,
            ScalarFn::Table { points } => points.windows(2).all(|w| w[0][1] == w[1][1]),
        }
    }
}

fn interp_linear(points: &[[f64; 2]], s: f64) -> f64 {
    match points {
        [] => 0.0,
        [only] => only[1],
        _ => {
            let first = points[0];
            let last = points[points.len() - 1];
            if s <= first[0] {
                return first[1];
            }
            if s >= last[0] {
                return last[1];
            }
            let k = points.partition_point(|p| p[0] <= s);
            let (p0, p1) = (points[k - 1], points[k]);
            let w = (s - p0[0]) / (p1[0] - p0[0]);
            p0[1] + w * (p1[1] - p0[1])
        }
    }
}

/// Prescribed bundle length `X(t)` together with its derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthFn {
    Constant { value: f64 },
    Ramp { start: f64, slope: f64 },
    /// Cubic Hermite interpolation of `(times, values, rates)`; C¹ on the
    /// table range, linear extrapolation outside it.
    Hermite { times: Vec<f64>, values: Vec<f64>, rates: Vec<f64> },
}

impl LengthFn {
    /// Returns `(X(t), Ẋ(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            LengthFn::Constant { value } => (*value, 0.0),
            LengthFn::Ramp { start, slope } => (start + slope * t, *slope),
            LengthFn::Hermite { times, values, rates } => hermite(times, values, rates, t),
        }
    }
}

fn hermite(times: &[f64], values: &[f64], rates: &[f64], t: f64) -> (f64, f64) {
    let n = times.len().min(values.len()).min(rates.len());
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if n == 1 || t <= times[0] {
        return (values[0] + rates[0] * (t - times[0]), rates[0]);
    }
    if t >= times[n - 1] {
        return (values[n - 1] + rates[n - 1] * (t - times[n - 1]), rates[n - 1]);
    }
    let k = times[..n].partition_point(|&s| s <= t).clamp(1, n - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let h = t1 - t0;
    let s = (t - t0) / h;
    let (y0, y1, m0, m1) = (values[k - 1], values[k], rates[k - 1] * h, rates[k] * h);
    let s2 = s * s;
    let s3 = s2 * s;
    let x = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * m0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * m1;
    let dx = ((6.0 * s2 - 6.0 * s) * y0
        + (3.0 * s2 - 4.0 * s + 1.0) * m0
        + (-6.0 * s2 + 6.0 * s) * y1
        + (3.0 * s2 - 2.0 * s) * m1)
        / h;
    (x, dx)
}

/// Shape of a density datum as a function of filament length `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthProfile {
    /// `value` on `[0, l_flat]`, linear decay to zero at `l_max`.
    Plateau { value: f64, l_flat: f64, l_max: f64 },
    /// `value` on `[0, l_flat]`, half-cosine taper to zero at `l_max` (C¹).
    CosineTaper { value: f64, l_flat: f64, l_max: f64 },
    /// Piecewise linear through `[l, value]` pairs, zero beyond the last point.
    Table { points: Vec<[f64; 2]> },
}

impl LengthProfile {
    pub fn eval(&self, l: f64) -> f64 {
        if l < 0.0 {
            return self.eval(0.0);
        }
        match self {
            LengthProfile::Plateau { value, l_flat, l_max } => {
                if l <= *l_flat {
                    *value
                } else if l >= *l_max {
                    0.0
                } else {
                    value * (l_max - l) / (l_max - l_flat)
                }
            }
            LengthProfile::CosineTaper { value, l_flat, l_max } => {
                if l <= *l_flat {
                    *value
                } else if l >= *l_max {
                    0.0
                } else {
                    let phase = std::f64::consts::PI * (l - l_flat) / (l_max - l_flat);
                    0.5 * value * (1.0 + phase.cos())
                }
            }
            LengthProfile::Table { points } => match points.last() {
                Some(last) if l > last[0] => 0.0,
                _ => interp_linear(points, l),
            },
        }
    }

    /// Smallest `l` beyond which the profile vanishes.
    pub fn support_end(&self) -> f64 {
        match self {
            LengthProfile::Plateau { l_max, .. } | LengthProfile::CosineTaper { l_max, .. } => *l_max,
            LengthProfile::Table { points } => points
                .iter()
                .rev()
                .find(|p| p[1] != 0.0)
                .map_or(0.0, |p| p[0]),
        }
    }

    pub fn max_slope(&self) -> f64 {
        match self {
            LengthProfile::Plateau { value, l_flat, l_max } => value.abs() / (l_max - l_flat),
            LengthProfile::CosineTaper { value, l_flat, l_max } => {
                0.5 * std::f64::consts::PI * value.abs() / (l_max - l_flat)
            }
            LengthProfile::Table { points } => {
                let inner = points
                    .windows(2)
                    .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                    .fold(0.0, f64::max);
                // the drop to zero after the last point is a jump unless it is already zero
                match points.last() {
                    Some(last) if last[1] != 0.0 => f64::INFINITY,
                    _ => inner,
                }
            }
        }
    }

    /// `∫₀^∞ l^j shape(l) dl`.
    pub fn moment(&self, j: i32) -> f64 {
        match self {
            LengthProfile::Plateau { value, l_flat, l_max } => {
                let pts = [[0.0, *value], [*l_flat, *value], [*l_max, 0.0]];
                piecewise_linear_moment(&pts, j)
            }
            LengthProfile::Table { points } => piecewise_linear_moment(points, j),
            LengthProfile::CosineTaper { value, l_flat, l_max } => {
                let flat = value * l_flat.powi(j + 1) / f64::from(j + 1);
                flat + composite_gauss(|l| l.powi(j) * self.eval(l), *l_flat, *l_max, 256)
            }
        }
    }
}

fn piecewise_linear_moment(points: &[[f64; 2]], j: i32) -> f64 {
    // ∫ l^j (a + b l) dl on each segment, evaluated exactly.
    let prim = |a: f64, b: f64, l: f64| a * l.powi(j + 1) / f64::from(j + 1) + b * l.powi(j + 2) / f64::from(j + 2);
    let mut total = 0.0;
    if let Some(first) = points.first() {
        if first[0] > 0.0 {
            // constant extension of the first value down to l = 0
            total += prim(first[1], 0.0, first[0]);
        }
    }
    for w in points.windows(2) {
        let (l0, v0, l1, v1) = (w[0][0], w[0][1], w[1][0], w[1][1]);
        if l1 <= l0 {
            continue;
        }
        let b = (v1 - v0) / (l1 - l0);
        let a = v0 - b * l0;
        total += prim(a, b, l1) - prim(a, b, l0);
    }
    total
}

fn composite_gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    // 5-point Gauss–Legendre per panel.
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            NODES
                .iter()
                .zip(WEIGHTS.iter())
                .map(|(x, w)| w * f(mid + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}

/// A density datum `modulation(s) * shape(l)`, where `s` is time for
/// boundary data and the rescaled position `y` for initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDatum {
    pub shape: LengthProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<ScalarFn>,
}

impl DensityDatum {
    pub fn new(shape: LengthProfile) -> Self {
        Self { shape, modulation: None }
    }

    pub fn eval(&self, s: f64, l: f64) -> f64 {
        let m = self.modulation.as_ref().map_or(1.0, |m| m.eval(s));
        m * self.shape.eval(l)
    }

    /// True if the datum does not depend on its first argument.
    pub fn is_stationary(&self) -> bool {
        self.modulation.as_ref().is_none_or(ScalarFn::is_constant)
    }
}
