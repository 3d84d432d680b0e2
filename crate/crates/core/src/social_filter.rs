//! Crowdsourced-data filter: a copy of the perturbation dynamics corrected by
//! pointwise density innovations from probe sensors.
//!
//! Each fresh sensor `i` at position `z_i` reports a density perturbation
//! `y_i`; the filter predicts `y~_i = (v~(z_i) - w~(z_i)) / Vopt'` and
//! injects the innovation into both fields at the sensor's cell:
//!
//! ```text
//! w~ += dt * alpha * e_i / dx,   v~ += dt * beta * e_i / dx,
//! e_i = Vopt' * (y_i - y~_i)
//! ```
//!
//! Stability is certified by a quadratic form: the field coupling contributes
//!
//! ```text
//! Q = [ -(k1/2 + k2)   -k2/2        ]
//!     [ -k2/2          -(k3 - g)/2  ]
//! ```
//!
//! (`g` the boundary slack) and each sensor contributes, at spacing `d`,
//!
//! ```text
//! P_i = (1/d) [ alpha            -(alpha-beta)/2 ]
//!             [ -(alpha-beta)/2  -beta           ]
//! ```
//!
//! whose determinant is `-(alpha+beta)^2 / (4 d^2)`: the injection is
//! dissipative for every spacing exactly when `alpha = -beta <= 0`, which is
//! why the design pins the gains antisymmetrically. The certified error
//! contraction rate is then `lambda_s = -lambda_max(Q)`, sensor-independent.

use crate::model::{Grid, LinearizationConstants};
use crate::plant::{sample_field, FieldState};
use crate::tracking::SensorSnapshot;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default boundary slack in the contraction certificate. Conservative: it
/// certifies a small rate (0.1 1/s at the defaults) that observed decays
/// beat by an order of magnitude.
pub const DEFAULT_GAMMA_SLACK: f64 = 14.8;

/// Default injection gain magnitude (`beta = 2`, `alpha = -2`).
pub const DEFAULT_BETA_MAGNITUDE: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("certificate is not contractive: lambda_max(Q) = {lambda_max} >= 0 \
             (boundary slack {gamma_slack} too large for k3)")]
    NotContractive { lambda_max: f64, gamma_slack: f64 },
    #[error("injection magnitude must be positive, got {0}")]
    BadMagnitude(f64),
}

/// Injection gains; the design keeps them antisymmetric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialGains {
    pub alpha: f64,
    pub beta: f64,
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending. Closed form via the
/// center/radius decomposition; exact for diagonal input.
pub fn sym_eigs_2x2(m: [[f64; 2]; 2]) -> [f64; 2] {
    debug_assert!((m[0][1] - m[1][0]).abs() <= 1e-12 * (m[0][1].abs() + 1.0));
    let mid = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let r = half_diff.hypot(m[0][1]);
    [mid - r, mid + r]
}

/// Field-coupling form `Q` for a given boundary slack.
pub fn coupling_matrix(consts: &LinearizationConstants, gamma_slack: f64) -> [[f64; 2]; 2] {
    let q01 = -0.5 * consts.k2;
    [
        [-(0.5 * consts.k1 + consts.k2), q01],
        [q01, -0.5 * (consts.k3 - gamma_slack)],
    ]
}

/// Per-sensor injection form `P_i` at sensor spacing `d`.
pub fn injection_matrix(gains: &SocialGains, spacing: f64) -> [[f64; 2]; 2] {
    let off = -0.5 * (gains.alpha - gains.beta) / spacing;
    [
        [gains.alpha / spacing, off],
        [off, -gains.beta / spacing],
    ]
}

/// Everything the gain design settles on, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainDesign {
    pub gains: SocialGains,
    pub gamma_slack: f64,
    /// Certified error contraction rate (1/s).
    pub lambda_s: f64,
    pub q_eigs: [f64; 2],
    /// Eigenvalues of `Q + P_i` at the tightest design spacing; never above
    /// `q_eigs` because `P_i` is negative semidefinite.
    pub loaded_eigs: [f64; 2],
    pub design_spacing: f64,
}

/// Chooses antisymmetric gains of the given magnitude and certifies the
/// contraction rate. `design_spacing` is the tightest sensor spacing the
/// deployment plans for; it only affects the reported loaded eigenvalues.
pub fn design_social_gains(
    consts: &LinearizationConstants,
    gamma_slack: f64,
    beta_magnitude: f64,
    design_spacing: f64,
) -> Result<GainDesign, DesignError> {
    if !(beta_magnitude > 0.0) {
        return Err(DesignError::BadMagnitude(beta_magnitude));
    }
    let gains = SocialGains {
        alpha: -beta_magnitude,
        beta: beta_magnitude,
    };
    let q = coupling_matrix(consts, gamma_slack);
    let q_eigs = sym_eigs_2x2(q);
    let p = injection_matrix(&gains, design_spacing);
    let loaded = [
        [q[0][0] + p[0][0], q[0][1] + p[0][1]],
        [q[1][0] + p[1][0], q[1][1] + p[1][1]],
    ];
    let loaded_eigs = sym_eigs_2x2(loaded);
    let lambda_max = q_eigs[1].max(loaded_eigs[1]);
    if lambda_max >= 0.0 {
        return Err(DesignError::NotContractive {
            lambda_max,
            gamma_slack,
        });
    }
    Ok(GainDesign {
        gains,
        gamma_slack,
        lambda_s: -lambda_max,
        q_eigs,
        loaded_eigs,
        design_spacing,
    })
}

/// The running filter: copy dynamics plus sensor injections.
#[derive(Debug, Clone)]
pub struct SocialFilter {
    pub grid: Grid,
    pub consts: LinearizationConstants,
    pub gains: SocialGains,
    pub state: FieldState,
    scratch_w: Vec<f64>,
    scratch_v: Vec<f64>,
}

impl SocialFilter {
    pub fn new(
        grid: Grid,
        consts: LinearizationConstants,
        gains: SocialGains,
        initial: FieldState,
    ) -> Self {
        assert_eq!(initial.w.len(), grid.n_cells);
        assert_eq!(initial.v.len(), grid.n_cells);
        let n = grid.n_cells;
        Self {
            grid,
            consts,
            gains,
            state: initial,
            scratch_w: vec![0.0; n],
            scratch_v: vec![0.0; n],
        }
    }

    /// Predicted density perturbation at a position.
    pub fn predicted_density(&self, x: f64) -> f64 {
        let w = sample_field(&self.state.w, &self.grid, x);
        let v = sample_field(&self.state.v, &self.grid, x);
        (v - w) / self.consts.dvopt_star
    }

    /// Velocity-units innovation for one sensor.
    fn innovation(&self, s: &SensorSnapshot) -> f64 {
        self.consts.dvopt_star * (s.rho_perturb - self.predicted_density(s.x))
    }

    /// One explicit step: copy dynamics with the measured inlet speed as the
    /// boundary value of both fields, then sensor injections at their cells.
    /// Everything is evaluated at the pre-step state.
    pub fn step(&mut self, inlet_v: f64, sensors: &[SensorSnapshot]) {
        let dt = self.grid.dt;
        let dx = self.grid.dx;
        let nu1 = self.consts.k1 * dt / dx;
        let nu3 = self.consts.k3 * dt / dx;
        let k2 = self.consts.k2;

        let w = &self.state.w;
        let v = &self.state.v;
        for i in 0..self.grid.n_cells {
            let w_left = if i == 0 { inlet_v } else { w[i - 1] };
            let v_left = if i == 0 { inlet_v } else { v[i - 1] };
            self.scratch_w[i] = w[i] - nu1 * (w[i] - w_left) - dt * k2 * w[i];
            self.scratch_v[i] = v[i] - nu3 * (v[i] - v_left) + dt * (-k2 * w[i]);
        }
        for s in sensors {
            let e = self.innovation(s);
            let cell = self.grid.cell_of(s.x);
            self.scratch_w[cell] += dt * self.gains.alpha * e / dx;
            self.scratch_v[cell] += dt * self.gains.beta * e / dx;
        }
        std::mem::swap(&mut self.state.w, &mut self.scratch_w);
        std::mem::swap(&mut self.state.v, &mut self.scratch_v);
        self.state.t += dt;
    }

    /// Crowdsourced-data residual: mean squared velocity-units innovation
    /// over the fresh sensors, `None` when no sensor is fresh.
    pub fn residual(&self, sensors: &[SensorSnapshot]) -> Option<f64> {
        if sensors.is_empty() {
            return None;
        }
        let sum: f64 = sensors.iter().map(|s| self.innovation(s).powi(2)).sum();
        Some(sum / sensors.len() as f64)
    }
}
