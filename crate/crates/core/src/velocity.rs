//! Quasi-stationary force balance for the two filament velocities on `[0, 1]`:
//!
//! ```text
//! ∂y(D± ∂y V±) ± X² C (η − V⁺ + V⁻) = f±
//! ```
//!
//! discretized with flux-form centered differences (arithmetic face means)
//! and half cells at Neumann/flux boundaries, and solved monolithically as one
//! banded system with interleaved unknowns `[V⁺₀, V⁻₀, V⁺₁, V⁻₁, …]`.

use serde::Serialize;
use thiserror::Error;

use crate::banded::{solve_banded, BandedMatrix};
use crate::density::FrictionCoefficients;

/// Relative residual accepted from the banded solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    FreeForce,
    FixedLength,
}

/// Velocities on the `y` nodes with their fluxes `D ∂y V` and derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityProfile {
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub dv_plus: Vec<f64>,
    pub dv_minus: Vec<f64>,
    /// `D⁺ ∂y V⁺` per node.
    pub flux_plus: Vec<f64>,
    /// `D⁻ ∂y V⁻` per node.
    pub flux_minus: Vec<f64>,
    pub x: f64,
    pub eta: f64,
    pub mode: BcMode,
    /// Relative residual of the linear solve.
    pub residual: f64,
}

impl VelocityProfile {
    pub fn n_y(&self) -> usize {
        self.v_plus.len() - 1
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        let n = self.n_y();
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    /// `(D⁺ ∂y V⁺ + D⁻ ∂y V⁻)(y) / X` per node; constant for the exact
    /// problem without sources.
    pub fn total_force(&self) -> Vec<f64> {
        self.flux_plus.iter().zip(&self.flux_minus).map(|(p, m)| (p + m) / self.x).collect()
    }

    /// `max_i |F_tot(y_i) − F_tot(1)|`.
    pub fn force_variation(&self) -> f64 {
        let f = self.total_force();
        let end = *f.last().unwrap();
        f.iter().map(|v| (v - end).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.v_plus.iter().chain(&self.v_minus).chain(&self.dv_plus).chain(&self.dv_minus).all(|v| v.is_finite())
    }

    /// Velocity CSV: `y, V_plus, V_minus, dV_plus, dV_minus`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "V_plus", "V_minus", "dV_plus", "dV_minus"])?;
        for (i, y) in self.y_nodes().into_iter().enumerate() {
            w.write_record([
                format!("{y}"),
                format!("{:e}", self.v_plus[i]),
                format!("{:e}", self.v_minus[i]),
                format!("{:e}", self.dv_plus[i]),
                format!("{:e}", self.dv_minus[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VelocityError {
    #[error("singular velocity system (column {column})")]
    SingularSystem { column: usize },
    #[error("velocity system residual {residual:e} above tolerance")]
    InaccurateSolve { residual: f64 },
    #[error("coefficient {which} = {value:e} below ellipticity floor {floor:e} at y node {y_node}")]
    EllipticityLost { which: &'static str, y_node: usize, value: f64, floor: f64 },
    #[error("maximum principle violated by {excess:e} (allowed {allowed:e}) at y node {y_node}")]
    MaxPrincipleViolated { excess: f64, allowed: f64, y_node: usize },
    #[error("invalid velocity problem: {0}")]
    Invalid(&'static str),
}

/// Right boundary condition of the minus family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinusRight {
    /// `(D⁻ ∂y V⁻)(1) = value`
    Flux(f64),
    /// `V⁻(1) = value`
    Dirichlet(f64),
}

/// General form of the velocity problem: sources and all boundary values
/// are free so that manufactured solutions can exercise every row.
#[derive(Debug, Clone)]
pub struct VelocityProblem<'a> {
    pub coeffs: &'a FrictionCoefficients,
    pub x: f64,
    pub eta: f64,
    /// `V⁺(0)`
    pub plus_left: f64,
    /// `(D⁺ ∂y V⁺)(1)`
    pub plus_right_flux: f64,
    /// `(D⁻ ∂y V⁻)(0)`
    pub minus_left_flux: f64,
    pub minus_right: MinusRight,
    pub source_plus: Option<&'a [f64]>,
    pub source_minus: Option<&'a [f64]>,
    /// Reject coefficients below this value.
    pub eps_ell: f64,
}

pub fn solve_problem(p: &VelocityProblem<'_>) -> Result<VelocityProfile, VelocityError> {
    let k = p.coeffs;
    let n = k.c.len().checked_sub(1).ok_or(VelocityError::Invalid("empty coefficient arrays"))?;
    if n < 2 || k.d_plus.len() != n + 1 || k.d_minus.len() != n + 1 {
        return Err(VelocityError::Invalid("coefficient arrays must share at least 3 nodes"));
    }
    if !(p.x > 0.0) {
        return Err(VelocityError::Invalid("bundle length must be positive"));
    }
    for (which, arr) in [("C", &k.c), ("D_plus", &k.d_plus), ("D_minus", &k.d_minus)] {
        if let Some((i, &v)) = arr.iter().enumerate().find(|(_, &v)| !(v >= p.eps_ell) || !(v > 0.0)) {
            return Err(VelocityError::EllipticityLost { which, y_node: i, value: v, floor: p.eps_ell });
        }
    }
    let zeros = vec![0.0; n + 1];
    let f_plus = p.source_plus.unwrap_or(&zeros);
    let f_minus = p.source_minus.unwrap_or(&zeros);

    let h = 1.0 / n as f64;
    let h2 = h * h;
    let x2 = p.x * p.x;
    let face = |d: &[f64], i: usize| 0.5 * (d[i] + d[i + 1]);
    let ip = |i: usize| 2 * i;
    let im = |i: usize| 2 * i + 1;

    let size = 2 * (n + 1);
    let mut a = BandedMatrix::zeros(size, 2, 2);
    let mut rhs = vec![0.0; size];

    // Rows are scaled by h² (interior) or h²/2 (half cells) so every row reads
    //   Σ face terms ± h_eff · X²C (η − V⁺ + V⁻) = h_eff · f
    // with h_eff = h² or h²/2.
    for i in 0..=n {
        let kc = x2 * k.c[i];
        let half = i == 0 || i == n;
        let w = if half { 0.5 * h2 } else { h2 };

        // plus row
        let r = ip(i);
        if i == 0 {
            a.add(r, ip(0), 1.0);
            rhs[r] = p.plus_left;
        } else {
            let dl = face(&k.d_plus, i - 1);
            a.add(r, ip(i - 1), dl);
            a.add(r, ip(i), -dl);
            if i < n {
                let dr = face(&k.d_plus, i);
                a.add(r, ip(i + 1), dr);
                a.add(r, ip(i), -dr);
            } else {
                rhs[r] -= h * p.plus_right_flux;
            }
            // + X²C (η − V⁺ + V⁻)
            a.add(r, ip(i), -w * kc);
            a.add(r, im(i), w * kc);
            rhs[r] += w * f_plus[i] - w * kc * p.eta;
        }

        // minus row
        let r = im(i);
        if i == n {
            if let MinusRight::Dirichlet(v) = p.minus_right {
                a.add(r, im(n), 1.0);
                rhs[r] = v;
                continue;
            }
        }
        if i > 0 {
            let dl = face(&k.d_minus, i - 1);
            a.add(r, im(i - 1), dl);
            a.add(r, im(i), -dl);
        } else {
            rhs[r] += h * p.minus_left_flux;
        }
        if i < n {
            let dr = face(&k.d_minus, i);
            a.add(r, im(i + 1), dr);
            a.add(r, im(i), -dr);
        } else if let MinusRight::Flux(q) = p.minus_right {
            rhs[r] -= h * q;
        }
        // − X²C (η − V⁺ + V⁻)
        a.add(r, ip(i), w * kc);
        a.add(r, im(i), -w * kc);
        rhs[r] += w * f_minus[i] + w * kc * p.eta;
    }

    let (z, residual) =
        solve_banded(&a, &rhs, RESIDUAL_TOL).map_err(|e| VelocityError::SingularSystem { column: e.column })?;
    if !(residual <= RESIDUAL_TOL) {
        return Err(VelocityError::InaccurateSolve { residual });
    }

    let v_plus: Vec<f64> = (0..=n).map(|i| z[ip(i)]).collect();
    let v_minus: Vec<f64> = (0..=n).map(|i| z[im(i)]).collect();

    // Face fluxes, then nodal fluxes: mean of adjacent faces in the interior,
    // half-cell balances at the ends. This makes Σ fluxes exactly constant
    // when the sources vanish.
    let face_flux = |d: &[f64], v: &[f64], i: usize| face(d, i) * (v[i + 1] - v[i]) / h;
    let coupling = |i: usize| x2 * k.c[i] * (p.eta - v_plus[i] + v_minus[i]);
    let mut flux_plus = vec![0.0; n + 1];
    let mut flux_minus = vec![0.0; n + 1];
    for i in 1..n {
        flux_plus[i] = 0.5 * (face_flux(&k.d_plus, &v_plus, i - 1) + face_flux(&k.d_plus, &v_plus, i));
        flux_minus[i] = 0.5 * (face_flux(&k.d_minus, &v_minus, i - 1) + face_flux(&k.d_minus, &v_minus, i));
    }
    // (φ½ − flux₀)/(h/2) + X²C g₀ = f₀
    flux_plus[0] = face_flux(&k.d_plus, &v_plus, 0) + 0.5 * h * (coupling(0) - f_plus[0]);
    flux_plus[n] = p.plus_right_flux;
    flux_minus[0] = p.minus_left_flux;
    flux_minus[n] = match p.minus_right {
        MinusRight::Flux(q) => q,
        // (flux_n − φ_{n−½})/(h/2) − X²C g_n = f_n
        MinusRight::Dirichlet(_) => face_flux(&k.d_minus, &v_minus, n - 1) + 0.5 * h * (f_minus[n] + coupling(n)),
    };
    let dv_plus = flux_plus.iter().zip(&k.d_plus).map(|(q, d)| q / d).collect();
    let dv_minus = flux_minus.iter().zip(&k.d_minus).map(|(q, d)| q / d).collect();

    let mode = match p.minus_right {
        MinusRight::Flux(_) => BcMode::FreeForce,
        MinusRight::Dirichlet(_) => BcMode::FixedLength,
    };
    Ok(VelocityProfile { v_plus, v_minus, dv_plus, dv_minus, flux_plus, flux_minus, x: p.x, eta: p.eta, mode, residual })
}

/// Boundary data for the prescribed-force problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeForceBc {
    pub x: f64,
    pub force: f64,
    pub u0_plus: f64,
    pub eta: f64,
    pub eps_ell: f64,
}

/// `V⁺(0) = u₀⁺`, `∂yV⁺(1) = 0`, `∂yV⁻(0) = 0`, `(D⁻∂yV⁻)(1) = X F`.
pub fn solve_free(coeffs: &FrictionCoefficients, bc: &FreeForceBc) -> Result<VelocityProfile, VelocityError> {
    solve_problem(&VelocityProblem {
        coeffs,
        x: bc.x,
        eta: bc.eta,
        plus_left: bc.u0_plus,
        plus_right_flux: 0.0,
        minus_left_flux: 0.0,
        minus_right: MinusRight::Flux(bc.x * bc.force),
        source_plus: None,
        source_minus: None,
        eps_ell: bc.eps_ell,
    })
}

/// Boundary data for the prescribed-length problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedLengthBc {
    pub x: f64,
    pub xdot: f64,
    pub u0_plus: f64,
    pub u1_minus: f64,
    pub eta: f64,
    pub eps_ell: f64,
    /// When set, the solution is checked against the velocity box implied by
    /// the maximum principle for this margin.
    pub delta: Option<f64>,
}

/// `V⁺(0) = u₀⁺`, `∂yV⁺(1) = 0`, `∂yV⁻(0) = 0`, `V⁻(1) = −u₁⁻ + Ẋ`.
pub fn solve_fixed(coeffs: &FrictionCoefficients, bc: &FixedLengthBc) -> Result<VelocityProfile, VelocityError> {
    let profile = solve_problem(&VelocityProblem {
        coeffs,
        x: bc.x,
        eta: bc.eta,
        plus_left: bc.u0_plus,
        plus_right_flux: 0.0,
        minus_left_flux: 0.0,
        minus_right: MinusRight::Dirichlet(bc.xdot - bc.u1_minus),
        source_plus: None,
        source_minus: None,
        eps_ell: bc.eps_ell,
    })?;
    if let Some(delta) = bc.delta {
        let h = 1.0 / profile.n_y() as f64;
        let allowed = 10.0 * h * h;
        let (excess, y_node) = velocity_box_excess(&profile, delta, bc.xdot, bc.eta);
        if excess > allowed {
            return Err(VelocityError::MaxPrincipleViolated { excess, allowed, y_node });
        }
    }
    Ok(profile)
}

/// Largest amount by which the profile leaves the box
/// `δ+Ẋ₊ ≤ V⁺ ≤ η−δ−(−Ẋ)₊`, `−η+δ+Ẋ₊ ≤ V⁻ ≤ −δ−(−Ẋ)₊`, with the node where it happens.
pub fn velocity_box_excess(profile: &VelocityProfile, delta: f64, xdot: f64, eta: f64) -> (f64, usize) {
    let (xp, xm) = (xdot.max(0.0), (-xdot).max(0.0));
    let mut worst = (0.0_f64, 0);
    for i in 0..profile.v_plus.len() {
        let (vp, vm) = (profile.v_plus[i], profile.v_minus[i]);
        let e = [
            delta + xp - vp,
            vp - (eta - delta - xm),
            (-eta + delta + xp) - vm,
            vm - (-delta - xm),
        ]
        .into_iter()
        .fold(0.0_f64, f64::max);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

/// Force recovered from a velocity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForceEstimate {
    /// `(1/X) ∫₀¹ X² C (η − V⁺ + V⁻) dy` by the trapezoid rule.
    pub integral: f64,
    /// `D⁻_{n−½} (V⁻_n − V⁻_{n−1}) / (h X)`, first order.
    pub one_sided: f64,
}

pub fn force_from_profile(profile: &VelocityProfile, coeffs: &FrictionCoefficients) -> ForceEstimate {
    let n = profile.n_y();
    let h = 1.0 / n as f64;
    let x = profile.x;
    let integral: f64 = (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            w * x * x * coeffs.c[i] * (profile.eta - profile.v_plus[i] + profile.v_minus[i])
        })
        .sum::<f64>()
        / x;
    let d_face = 0.5 * (coeffs.d_minus[n - 1] + coeffs.d_minus[n]);
    let one_sided = d_face * (profile.v_minus[n] - profile.v_minus[n - 1]) / (h * x);
    ForceEstimate { integral, one_sided }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, c: f64, d: f64) -> FrictionCoefficients {
        FrictionCoefficients::from_profiles(vec![c; n + 1], vec![d; n + 1], vec![d; n + 1])
    }

    fn wavy(n: usize) -> FrictionCoefficients {
        let y = |i: usize| i as f64 / n as f64;
        FrictionCoefficients::from_profiles(
            (0..=n).map(|i| 0.8 + 0.3 * (3.0 * y(i)).sin()).collect(),
            (0..=n).map(|i| 0.2 + 0.1 * y(i) * y(i)).collect(),
            (0..=n).map(|i| 0.15 + 0.05 * (2.0 * y(i)).cos()).collect(),
        )
    }

    #[test]
    fn zero_force_gives_constant_velocities() {
        for coeffs in [uniform(32, 1.0, 1.0), wavy(64)] {
            let bc = FreeForceBc { x: 1.7, force: 0.0, u0_plus: 0.4, eta: 1.0, eps_ell: 0.0 };
            let p = solve_free(&coeffs, &bc).unwrap();
            for i in 0..p.v_plus.len() {
                assert!((p.v_plus[i] - 0.4).abs() < 1e-10);
                assert!((p.v_minus[i] + 0.6).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fixed_length_constant_solution_when_rate_is_consistent() {
        // V⁻ ≡ u − η needs V⁻(1) = Ẋ − u₁⁻, i.e. Ẋ = u₀⁺ + u₁⁻ − η.
        let coeffs = wavy(32);
        let bc = FixedLengthBc { x: 1.0, xdot: 0.0, u0_plus: 0.5, u1_minus: 0.5, eta: 1.0, eps_ell: 0.0, delta: Some(0.25) };
        let p = solve_fixed(&coeffs, &bc).unwrap();
        assert!(p.v_plus.iter().all(|v| (v - 0.5).abs() < 1e-12));
        assert!(p.v_minus.iter().all(|v| (v + 0.5).abs() < 1e-12));
        let f = force_from_profile(&p, &coeffs);
        assert!(f.integral.abs() < 1e-12);
    }

    #[test]
    fn force_is_linear_at_frozen_coefficients() {
        let coeffs = uniform(64, 1.0, 1.0);
        let dev = |force: f64| {
            let p = solve_free(&coeffs, &FreeForceBc { x: 1.0, force, u0_plus: 0.0, eta: 0.0, eps_ell: 0.0 }).unwrap();
            p.v_plus.iter().map(|v| v.abs()).fold(0.0, f64::max)
        };
        let ratio = dev(0.02) / dev(0.01);
        assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn discrete_total_force_is_constant() {
        let coeffs = wavy(128);
        let p = solve_free(&coeffs, &FreeForceBc { x: 1.3, force: 0.01, u0_plus: 0.4, eta: 1.0, eps_ell: 0.0 }).unwrap();
        assert!(p.force_variation() <= 1e-8 * 1.01);
        let f = p.total_force();
        assert!((f[f.len() - 1] - 0.01).abs() < 1e-14);
        assert!((f[0] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn modes_round_trip_through_the_force() {
        let coeffs = wavy(64);
        let (x, force, u0, u1, eta) = (1.2, 0.03, 0.4, 0.35, 1.0);
        let free = solve_free(&coeffs, &FreeForceBc { x, force, u0_plus: u0, eta, eps_ell: 0.0 }).unwrap();
        let xdot = free.v_minus[64] + u1;
        let fixed = solve_fixed(
            &coeffs,
            &FixedLengthBc { x, xdot, u0_plus: u0, u1_minus: u1, eta, eps_ell: 0.0, delta: None },
        )
        .unwrap();
        let f = force_from_profile(&fixed, &coeffs);
        assert!((f.integral - force).abs() <= 1e-8 * force);
        assert!((f.one_sided - force).abs() < 0.1 * force);
    }

    #[test]
    fn one_sided_force_estimate_converges_at_first_order() {
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let coeffs = wavy(n);
                let bc = FixedLengthBc { x: 1.0, xdot: 0.1, u0_plus: 0.45, u1_minus: 0.4, eta: 1.0, eps_ell: 0.0, delta: None };
                let p = solve_fixed(&coeffs, &bc).unwrap();
                let f = force_from_profile(&p, &coeffs);
                (f.integral - f.one_sided).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1]);
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 0.8 && order < 1.3, "order {order}");
    }

    #[test]
    fn symmetric_data_reflects() {
        // D⁺ = D⁻ symmetric about ½, C symmetric, u₀⁺ = u₁⁻, Ẋ = 0:
        // mirroring x ↦ X − x swaps the families and flips velocities,
        // so V⁻(y) = −V⁺(1−y).
        let n = 64;
        let y = |i: usize| i as f64 / n as f64;
        let d: Vec<f64> = (0..=n).map(|i| 0.3 + 0.1 * (std::f64::consts::PI * y(i)).sin()).collect();
        let c: Vec<f64> = (0..=n).map(|i| 1.0 + (y(i) - 0.5).powi(2)).collect();
        let coeffs = FrictionCoefficients::from_profiles(c, d.clone(), d);
        let bc = FixedLengthBc { x: 1.5, xdot: 0.0, u0_plus: 0.3, u1_minus: 0.3, eta: 1.0, eps_ell: 0.0, delta: Some(0.25) };
        let p = solve_fixed(&coeffs, &bc).unwrap();
        for i in 0..=n {
            assert!((p.v_minus[i] + p.v_plus[n - i]).abs() < 1e-10);
        }
        // the non-trivial profile really varies
        assert!((p.v_plus[0] - p.v_plus[n]).abs() > 1e-3);
        for i in 0..=n {
            assert!(p.v_plus[i] > 0.0);
        }
    }

    fn manufactured_error(n: usize, dirichlet: bool) -> f64 {
        // V⁺ = sin 2y, V⁻ = ½ cos 3y − 1 with smooth D±, C; sources from the exact operator
        let (x, eta) = (1.3, 0.8);
        let dp = |y: f64| 0.2 + 0.1 * y * y;
        let dpp = |y: f64| 0.2 * y;
        let dm = |y: f64| 0.3 + 0.05 * y.sin();
        let dmp = |y: f64| 0.05 * y.cos();
        let c = |y: f64| 1.0 + 0.5 * y;
        let vp = |y: f64| (2.0 * y).sin();
        let vpp = |y: f64| 2.0 * (2.0 * y).cos();
        let vppp = |y: f64| -4.0 * (2.0 * y).sin();
        let vm = |y: f64| 0.5 * (3.0 * y).cos() - 1.0;
        let vmp = |y: f64| -1.5 * (3.0 * y).sin();
        let vmpp = |y: f64| -4.5 * (3.0 * y).cos();
        let g = |y: f64| eta - vp(y) + vm(y);
        let nodes: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let coeffs = FrictionCoefficients::from_profiles(
            nodes.iter().map(|&y| c(y)).collect(),
            nodes.iter().map(|&y| dp(y)).collect(),
            nodes.iter().map(|&y| dm(y)).collect(),
        );
        let fp: Vec<f64> = nodes.iter().map(|&y| dpp(y) * vpp(y) + dp(y) * vppp(y) + x * x * c(y) * g(y)).collect();
        let fm: Vec<f64> = nodes.iter().map(|&y| dmp(y) * vmp(y) + dm(y) * vmpp(y) - x * x * c(y) * g(y)).collect();
        let minus_right = if dirichlet { MinusRight::Dirichlet(vm(1.0)) } else { MinusRight::Flux(dm(1.0) * vmp(1.0)) };
        let p = solve_problem(&VelocityProblem {
            coeffs: &coeffs,
            x,
            eta,
            plus_left: vp(0.0),
            plus_right_flux: dp(1.0) * vpp(1.0),
            minus_left_flux: dm(0.0) * vmp(0.0),
            minus_right,
            source_plus: Some(&fp),
            source_minus: Some(&fm),
            eps_ell: 0.0,
        })
        .unwrap();
        nodes
            .iter()
            .enumerate()
            .map(|(i, &y)| (p.v_plus[i] - vp(y)).abs().max((p.v_minus[i] - vm(y)).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        for dirichlet in [false, true] {
            let errs: Vec<f64> = [32, 64, 128].iter().map(|&n| manufactured_error(n, dirichlet)).collect();
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!(order > 1.9, "order {order} ({errs:?})");
            }
        }
    }

    #[test]
    fn rejects_vanishing_coefficients() {
        let mut coeffs = uniform(16, 1.0, 1.0);
        coeffs.d_minus[5] = 0.0;
        let err = solve_free(&coeffs, &FreeForceBc { x: 1.0, force: 0.0, u0_plus: 0.4, eta: 1.0, eps_ell: 1e-9 })
            .unwrap_err();
        assert!(matches!(err, VelocityError::EllipticityLost { which: "D_minus", y_node: 5, .. }));
    }
}
