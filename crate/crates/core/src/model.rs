//! Macroscopic traffic model: equilibrium speed closure, linearization around a
//! free-flow operating point, and the Riemann-style change of variables used by
//! the plant and both filters.
//!
//! The linearized dynamics on a road of length `L` are two coupled transport
//! equations in the perturbation fields `w` and `v`:
//!
//! ```text
//!   w_t + k1 w_x = -k2 w
//!   v_t + k3 v_x = -k2 w + d1(x,t)
//!   w(0,t) = v(0,t) + d2(t)
//! ```
//!
//! with `k1 = v*`, `k2 = 1/T_r`, `k3 = v* + rho* * Vopt'(rho*)`, and
//! `w = v - rho * Vopt'(rho*)`. The identity `w(L,t) = v(L,t)` holds for the
//! nominal solution but is not imposed by the discretization (both characteristic
//! families leave the domain at `x = L`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// One or more parameter constraints failed; all violations are listed.
    #[error("invalid traffic parameters: {0}")]
    InvalidParams(String),
    /// Density outside `[0, rho_max]`.
    #[error("density {rho} outside [0, {rho_max}]")]
    DensityOutOfRange { rho: f64, rho_max: f64 },
    /// Speed outside `[0, v_free]` for the inverse closure.
    #[error("speed {v} outside [0, {v_free}]")]
    SpeedOutOfRange { v: f64, v_free: f64 },
    /// The operating point is not in free flow: `k3 <= 0` means downstream
    /// transport of `v` breaks down and the whole scheme is inapplicable.
    #[error("operating point not in free flow: k3 = {k3} <= 0 (rho_star too close to rho_max)")]
    NotFreeFlow { k3: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid must have at least 2 cells, got {0}")]
    TooFewCells(usize),
    #[error("non-positive grid quantity: {0}")]
    NonPositive(&'static str),
    /// `dt > dx / max(k1, k3)`: the explicit upwind scheme would be unstable.
    #[error("CFL violation: dt = {dt} exceeds dx/max_speed = {limit}")]
    CflViolation { dt: f64, limit: f64 },
}

/// Physical parameters of the road segment and the driver model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficParams {
    /// Road length (m).
    pub length: f64,
    /// Jam density (veh/m).
    pub rho_max: f64,
    /// Free-flow speed (m/s).
    pub v_free: f64,
    /// Nominal operating density (veh/m); must sit in the free-flow branch.
    pub rho_star: f64,
    /// Relaxation time T_r (s) of the speed adaptation term.
    pub relax_time: f64,
    /// Effective vehicle length dX (m) used by the micro model and the
    /// spacing-to-density map.
    pub vehicle_length: f64,
    /// Exponent gamma of the micro car-following interaction term.
    pub gamma_exp: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            length: 1000.0,
            rho_max: 0.12,
            v_free: 30.0,
            rho_star: 0.03,
            relax_time: 60.0,
            vehicle_length: 5.0,
            gamma_exp: 1.0,
        }
    }
}

impl TrafficParams {
    /// Validates every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if !(self.length > 0.0) {
            problems.push(format!("length must be > 0, got {}", self.length));
        }
        if !(self.rho_max > 0.0) {
            problems.push(format!("rho_max must be > 0, got {}", self.rho_max));
        }
        if !(self.v_free > 0.0) {
            problems.push(format!("v_free must be > 0, got {}", self.v_free));
        }
        if !(self.rho_star > 0.0) || self.rho_star >= self.rho_max {
            problems.push(format!(
                "rho_star must lie in (0, rho_max), got {} with rho_max {}",
                self.rho_star, self.rho_max
            ));
        }
        if !(self.relax_time > 0.0) {
            problems.push(format!("relax_time must be > 0, got {}", self.relax_time));
        }
        if !(self.vehicle_length > 0.0) {
            problems.push(format!(
                "vehicle_length must be > 0, got {}",
                self.vehicle_length
            ));
        }
        if !(self.gamma_exp >= 0.0) {
            problems.push(format!("gamma_exp must be >= 0, got {}", self.gamma_exp));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(problems.join("; ")))
        }
    }

    /// Equilibrium speed closure `Vopt(rho) = v_free * (1 - rho/rho_max)`.
    pub fn v_opt(&self, rho: f64) -> Result<f64, ModelError> {
        if !(0.0..=self.rho_max).contains(&rho) {
            return Err(ModelError::DensityOutOfRange {
                rho,
                rho_max: self.rho_max,
            });
        }
        Ok(self.v_free * (1.0 - rho / self.rho_max))
    }

    /// Inverse closure: density at which `Vopt(rho) = v`.
    pub fn v_opt_inverse(&self, v: f64) -> Result<f64, ModelError> {
        if !(0.0..=self.v_free).contains(&v) {
            return Err(ModelError::SpeedOutOfRange {
                v,
                v_free: self.v_free,
            });
        }
        Ok(self.rho_max * (1.0 - v / self.v_free))
    }

    /// Slope of the closure; constant for this linear `Vopt`.
    pub fn dv_opt(&self) -> f64 {
        -self.v_free / self.rho_max
    }
}

/// Constants of the linearization around `(rho_star, v_star)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationConstants {
    /// Transport speed of `w` (= v_star).
    pub k1: f64,
    /// Relaxation rate 1/T_r.
    pub k2: f64,
    /// Transport speed of `v` (= v_star + rho_star * dvopt_star); positive in
    /// free flow.
    pub k3: f64,
    /// Nominal speed `Vopt(rho_star)`.
    pub v_star: f64,
    /// Closure slope at the operating point, `Vopt'(rho_star)`.
    pub dvopt_star: f64,
    /// Micro interaction constant `C_gamma = v_star * dX^gamma`.
    pub c_gamma: f64,
}

impl LinearizationConstants {
    /// Derives the constants, rejecting parameter sets and operating points
    /// outside the free-flow regime (`k3 > 0` required).
    pub fn from_params(p: &TrafficParams) -> Result<Self, ModelError> {
        p.validate()?;
        let v_star = p.v_opt(p.rho_star)?;
        let dvopt_star = p.dv_opt();
        let k3 = v_star + p.rho_star * dvopt_star;
        if k3 <= 0.0 {
            return Err(ModelError::NotFreeFlow { k3 });
        }
        Ok(Self {
            k1: v_star,
            k2: 1.0 / p.relax_time,
            k3,
            v_star,
            dvopt_star,
            c_gamma: v_star * p.vehicle_length.powf(p.gamma_exp),
        })
    }

    /// Fastest characteristic speed; the CFL limit is `dx / max_speed`.
    pub fn max_speed(&self) -> f64 {
        self.k1.max(self.k3)
    }
}

/// Riemann-style variable: `w = v - rho * dvopt_star`. Applies to absolute
/// fields and to perturbation fields alike (the map is affine with zero offset).
pub fn to_riemann(rho: f64, v: f64, consts: &LinearizationConstants) -> f64 {
    v - rho * consts.dvopt_star
}

/// Inverse map: recovers density from `(w, v)`.
pub fn density_from_riemann(w: f64, v: f64, consts: &LinearizationConstants) -> f64 {
    (v - w) / consts.dvopt_star
}

/// Uniform 1-D grid of cell-centered values on `[0, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub length: f64,
    pub n_cells: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid {
    /// Builds a grid with an explicit time step. The step is validated against
    /// the CFL limit by [`Grid::check_cfl`] once the constants are known.
    pub fn new(length: f64, n_cells: usize, dt: f64) -> Result<Self, GridError> {
        if n_cells < 2 {
            return Err(GridError::TooFewCells(n_cells));
        }
        if !(length > 0.0) {
            return Err(GridError::NonPositive("length"));
        }
        if !(dt > 0.0) {
            return Err(GridError::NonPositive("dt"));
        }
        Ok(Self {
            length,
            n_cells,
            dx: length / n_cells as f64,
            dt,
        })
    }

    /// Chooses the largest stable `dt` that divides `report_period` into an
    /// integer number of steps, so sampling instants land exactly on step
    /// boundaries. At the defaults (dx = 5 m, max speed 22.5 m/s, 1 s period)
    /// this yields dt = 0.2 s.
    pub fn for_reporting(
        length: f64,
        n_cells: usize,
        consts: &LinearizationConstants,
        report_period: f64,
    ) -> Result<Self, GridError> {
        if !(report_period > 0.0) {
            return Err(GridError::NonPositive("report_period"));
        }
        let dx = length / n_cells as f64;
        let dt_max = dx / consts.max_speed();
        let steps = (report_period / dt_max).ceil().max(1.0);
        Self::new(length, n_cells, report_period / steps)
    }

    pub fn check_cfl(&self, consts: &LinearizationConstants) -> Result<(), GridError> {
        let limit = self.dx / consts.max_speed();
        // Tiny slack so dt computed as an exact divisor is not rejected for
        // one ulp of rounding.
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(GridError::CflViolation { dt: self.dt, limit });
        }
        Ok(())
    }

    /// Center coordinate of cell `i`.
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Cell index containing position `x`, clamped to the domain.
    pub fn cell_of(&self, x: f64) -> usize {
        let i = (x / self.dx).floor();
        (i.max(0.0) as usize).min(self.n_cells - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn defaults() -> (TrafficParams, LinearizationConstants) {
        let p = TrafficParams::default();
        let c = LinearizationConstants::from_params(&p).unwrap();
        (p, c)
    }

    #[test]
    fn default_constants_match_hand_derivation() {
        let (p, c) = defaults();
        // v* = 30 * (1 - 0.03/0.12) = 22.5
        assert_eq!(c.v_star, 22.5);
        assert_eq!(c.k1, 22.5);
        assert!((c.k2 - 1.0 / 60.0).abs() < 1e-15);
        // k3 = 22.5 + 0.03 * (-250) = 15
        assert_eq!(c.k3, 15.0);
        assert_eq!(c.dvopt_star, -250.0);
        // C_gamma = v* * dX^1
        assert_eq!(c.c_gamma, 22.5 * 5.0);
        assert_eq!(p.dv_opt(), -250.0);
    }

    #[test]
    fn v_opt_endpoints_and_midpoint() {
        let (p, _) = defaults();
        assert_eq!(p.v_opt(0.0).unwrap(), 30.0);
        assert_eq!(p.v_opt(p.rho_max).unwrap(), 0.0);
        assert_eq!(p.v_opt(0.03).unwrap(), 22.5);
    }

    #[test]
    fn v_opt_rejects_out_of_range_density() {
        let (p, _) = defaults();
        assert!(matches!(
            p.v_opt(-1e-9),
            Err(ModelError::DensityOutOfRange { .. })
        ));
        assert!(matches!(
            p.v_opt(0.12 + 1e-9),
            Err(ModelError::DensityOutOfRange { .. })
        ));
    }

    #[test]
    fn v_opt_inverse_round_trips() {
        let (p, _) = defaults();
        for rho in [0.0, 0.01, 0.03, 0.09, 0.12] {
            let v = p.v_opt(rho).unwrap();
            let back = p.v_opt_inverse(v).unwrap();
            assert!((back - rho).abs() < 1e-15, "rho {rho} -> {back}");
        }
        assert!(matches!(
            p.v_opt_inverse(31.0),
            Err(ModelError::SpeedOutOfRange { .. })
        ));
    }

    #[test]
    fn congested_operating_point_is_rejected() {
        // rho* = 0.09: v* = 7.5, k3 = 7.5 + 0.09 * (-250) = -15 -> not free flow.
        let p = TrafficParams {
            rho_star: 0.09,
            ..TrafficParams::default()
        };
        match LinearizationConstants::from_params(&p) {
            Err(ModelError::NotFreeFlow { k3 }) => assert!((k3 + 15.0).abs() < 1e-12),
            other => panic!("expected NotFreeFlow, got {other:?}"),
        }
    }

    #[test]
    fn invalid_params_report_every_violation() {
        let p = TrafficParams {
            length: -1.0,
            rho_max: 0.0,
            relax_time: 0.0,
            ..TrafficParams::default()
        };
        let err = p.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("length"));
        assert!(msg.contains("rho_max"));
        assert!(msg.contains("relax_time"));
    }

    #[test]
    fn riemann_variable_at_operating_point() {
        let (p, c) = defaults();
        // w = v* - rho* * (-250) = 22.5 + 7.5 = 30
        assert_eq!(to_riemann(p.rho_star, c.v_star, &c), 30.0);
        // Zero perturbation maps to zero.
        assert_eq!(to_riemann(0.0, 0.0, &c), 0.0);
    }

    #[test]
    fn reporting_grid_lands_on_the_documented_defaults() {
        let (_, c) = defaults();
        let g = Grid::for_reporting(1000.0, 200, &c, 1.0).unwrap();
        assert_eq!(g.dx, 5.0);
        // dt_max = 5/22.5 = 0.2222; 5 steps per second -> dt = 0.2
        assert_eq!(g.dt, 0.2);
        g.check_cfl(&c).unwrap();
    }

    #[test]
    fn cfl_violation_detected() {
        let (_, c) = defaults();
        let g = Grid::new(1000.0, 200, 0.3).unwrap();
        assert!(matches!(
            g.check_cfl(&c),
            Err(GridError::CflViolation { .. })
        ));
    }

    #[test]
    fn cell_lookup_clamps_to_domain() {
        let g = Grid::new(1000.0, 200, 0.2).unwrap();
        assert_eq!(g.cell_of(-5.0), 0);
        assert_eq!(g.cell_of(0.0), 0);
        assert_eq!(g.cell_of(2.4), 0);
        assert_eq!(g.cell_of(999.99), 199);
        assert_eq!(g.cell_of(1e9), 199);
        assert_eq!(g.x_center(0), 2.5);
        assert_eq!(g.x_center(199), 997.5);
    }

    proptest! {
        /// The variable change is a bijection: recovering density from
        /// (w, v) inverts `to_riemann` for any physically-scaled inputs.
        #[test]
        fn riemann_round_trip(rho in -0.12f64..0.12, v in -30.0f64..30.0) {
            let (_, c) = defaults();
            let w = to_riemann(rho, v, &c);
            let back = density_from_riemann(w, v, &c);
            prop_assert!((back - rho).abs() < 1e-12);
        }

        /// Free-flow acceptance boundary: constants exist iff k3 > 0.
        #[test]
        fn regime_check_matches_k3_sign(rho_star in 0.001f64..0.119) {
            let p = TrafficParams { rho_star, ..TrafficParams::default() };
            let v_star = p.v_opt(rho_star).unwrap();
            let k3 = v_star + rho_star * p.dv_opt();
            match LinearizationConstants::from_params(&p) {
                Ok(c) => prop_assert!(k3 > 0.0 && (c.k3 - k3).abs() < 1e-12),
                Err(ModelError::NotFreeFlow { .. }) => prop_assert!(k3 <= 0.0),
                Err(e) => return Err(TestCaseError::fail(format!("unexpected {e:?}"))),
            }
        }
    }
}
