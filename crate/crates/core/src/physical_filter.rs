//! Roadside-data filter: a copy of the perturbation dynamics corrected by the
//! outlet speed innovation, with gains derived from transformation kernels.
//!
//! The gain design solves three first-order kernel PDEs on the triangle
//! `0 <= x <= y <= L`:
//!
//! ```text
//! F_x + F_y = 0,                 F(0, y) = 0
//! G_x + G_y = 0,                 G(0, y) = 0
//! k3 H_x + k1 H_y - k2 H = k2 F, H(0, y) = 0
//! ```
//!
//! and reads the gains off the far edge: `gamma1(x) = -F(x,L) k1 / rho*`,
//! `gamma2(x) = -G(x,L) k3 / rho*`. With homogeneous data every kernel
//! vanishes along its characteristics, the gains are identically zero, and
//! the filter reduces to an open-loop copy whose error empties through the
//! outlet: every error characteristic leaves the domain within
//! `L/k1 + L/k3` seconds. The solver nevertheless marches generic boundary
//! data (diagonal data included, since the `H` characteristics of slope
//! `k1/k3 > 1` leave the wedge `y < (k1/k3) x` undetermined by the `x = 0`
//! condition alone), so that the vanishing-gain consequence is a measured
//! fact and nonzero-kernel variants remain usable.

use crate::model::{Grid, LinearizationConstants};
use crate::plant::FieldState;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Boundary data for the kernel solve. The design conditions are
/// homogeneous; manufactured data is for verification and variants.
pub struct KernelBoundaryData {
    /// `F(0, y)`.
    pub f0: Box<dyn Fn(f64) -> f64>,
    /// `G(0, y)`.
    pub g0: Box<dyn Fn(f64) -> f64>,
    /// `H(0, y)`.
    pub h0: Box<dyn Fn(f64) -> f64>,
    /// `H(x, x)`: the slope-`k1/k3` characteristics enter the triangle from
    /// the diagonal as well as from `x = 0`.
    pub h_diag: Box<dyn Fn(f64) -> f64>,
}

impl KernelBoundaryData {
    /// The stated design conditions: everything zero.
    pub fn homogeneous() -> Self {
        Self {
            f0: Box::new(|_| 0.0),
            g0: Box::new(|_| 0.0),
            h0: Box::new(|_| 0.0),
            h_diag: Box::new(|_| 0.0),
        }
    }
}

/// Kernels sampled on a uniform `(n+1) x (n+1)` grid over the triangle
/// (entries with `y < x` are unused and stay zero).
pub struct KernelSet {
    pub n: usize,
    pub h: f64,
    pub length: f64,
    f: Vec<f64>,
    g: Vec<f64>,
    hk: Vec<f64>,
}

impl KernelSet {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.n + 1) + j
    }

    pub fn f_at(&self, i: usize, j: usize) -> f64 {
        self.f[self.idx(i, j)]
    }

    pub fn g_at(&self, i: usize, j: usize) -> f64 {
        self.g[self.idx(i, j)]
    }

    pub fn h_at(&self, i: usize, j: usize) -> f64 {
        self.hk[self.idx(i, j)]
    }

    /// Largest magnitudes of (F, G, H) over the triangle.
    pub fn max_abs(&self) -> (f64, f64, f64) {
        let mut m = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..=self.n {
            for j in i..=self.n {
                m.0 = m.0.max(self.f_at(i, j).abs());
                m.1 = m.1.max(self.g_at(i, j).abs());
                m.2 = m.2.max(self.h_at(i, j).abs());
            }
        }
        m
    }

    /// Triangular dump, one row per node: `x,y,f,g,h`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,f,g,h\n");
        for i in 0..=self.n {
            for j in i..=self.n {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    i as f64 * self.h,
                    j as f64 * self.h,
                    self.f_at(i, j),
                    self.g_at(i, j),
                    self.h_at(i, j)
                );
            }
        }
        out
    }
}

/// Marches the kernel system from its boundary data.
///
/// `F` and `G` ride unit-slope characteristics, which are grid-aligned: the
/// march is an exact index shift. `H` rides slope `k1/k3`; its update is an
/// explicit Euler step along the characteristic with linear interpolation at
/// the foot (first-order accurate). Feet falling below the diagonal trace
/// back to the diagonal crossing and start from the declared diagonal data.
pub fn solve_kernels(
    length: f64,
    n: usize,
    consts: &LinearizationConstants,
    data: &KernelBoundaryData,
) -> KernelSet {
    assert!(n >= 4, "kernel grid too coarse");
    let h = length / n as f64;
    let m = consts.k1 / consts.k3; // characteristic slope, > 1 in free flow
    let a = consts.k2 / consts.k3; // source coefficient along characteristics
    let size = (n + 1) * (n + 1);
    let mut ks = KernelSet {
        n,
        h,
        length,
        f: vec![0.0; size],
        g: vec![0.0; size],
        hk: vec![0.0; size],
    };

    for j in 0..=n {
        let y = j as f64 * h;
        let at = j; // idx(0, j)
        ks.f[at] = (data.f0)(y);
        ks.g[at] = (data.g0)(y);
        ks.hk[at] = (data.h0)(y);
    }

    for i in 1..=n {
        let x = i as f64 * h;
        for j in i..=n {
            let y = j as f64 * h;
            // Unit-slope transport: exact shift along y - x = const.
            ks.f[i * (n + 1) + j] = ks.f[(i - 1) * (n + 1) + (j - 1)];
            ks.g[i * (n + 1) + j] = ks.g[(i - 1) * (n + 1) + (j - 1)];

            let hij = if j == i {
                (data.h_diag)(x)
            } else {
                let y_foot = y - m * h;
                let x_prev = x - h;
                if y_foot >= x_prev {
                    // Foot inside the previous column: interpolate H and F.
                    let u = y_foot / h;
                    let j0 = (u.floor() as usize).clamp(i - 1, n - 1);
                    let frac = u - j0 as f64;
                    let row = (i - 1) * (n + 1);
                    let h_foot =
                        ks.hk[row + j0] * (1.0 - frac) + ks.hk[row + j0 + 1] * frac;
                    let f_foot = ks.f[row + j0] * (1.0 - frac) + ks.f[row + j0 + 1] * frac;
                    h_foot + h * a * (h_foot + f_foot)
                } else {
                    // Characteristic enters from the diagonal at x*.
                    let x_star = (y - m * x) / (1.0 - m);
                    let dx = x - x_star;
                    let h_star = (data.h_diag)(x_star);
                    let f_here = ks.f[i * (n + 1) + j];
                    h_star + dx * a * (h_star + f_here)
                }
            };
            ks.hk[i * (n + 1) + j] = hij;
        }
    }
    ks
}

/// Gain curves on the kernel grid's x nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalGainCurves {
    pub xs: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
}

impl PhysicalGainCurves {
    /// Largest gain magnitude (for reporting).
    pub fn max_abs(&self) -> f64 {
        self.gamma1
            .iter()
            .chain(&self.gamma2)
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }

    /// Samples both curves at the simulation grid's cell centers.
    pub fn sample(&self, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
        let interp = |curve: &[f64], x: f64| -> f64 {
            let h = self.xs[1] - self.xs[0];
            let u = (x / h).clamp(0.0, (curve.len() - 1) as f64);
            let i0 = (u.floor() as usize).min(curve.len() - 2);
            let frac = u - i0 as f64;
            curve[i0] * (1.0 - frac) + curve[i0 + 1] * frac
        };
        let g1 = (0..grid.n_cells)
            .map(|i| interp(&self.gamma1, grid.x_center(i)))
            .collect();
        let g2 = (0..grid.n_cells)
            .map(|i| interp(&self.gamma2, grid.x_center(i)))
            .collect();
        (g1, g2)
    }
}

/// Reads the injection gains off the kernels' far edge:
/// `gamma1(x) = -F(x, L) k1 / rho*`, `gamma2(x) = -G(x, L) k3 / rho*`.
pub fn physical_gains(kernels: &KernelSet, consts: &LinearizationConstants) -> PhysicalGainCurves {
    let rho_star = (consts.k3 - consts.k1) / consts.dvopt_star;
    let n = kernels.n;
    let mut xs = Vec::with_capacity(n + 1);
    let mut gamma1 = Vec::with_capacity(n + 1);
    let mut gamma2 = Vec::with_capacity(n + 1);
    for i in 0..=n {
        xs.push(i as f64 * kernels.h);
        gamma1.push(-kernels.f_at(i, n) * consts.k1 / rho_star);
        gamma2.push(-kernels.g_at(i, n) * consts.k3 / rho_star);
    }
    PhysicalGainCurves { xs, gamma1, gamma2 }
}

/// Solves the design kernels (homogeneous data) and extracts gain curves.
/// The result is identically zero; the filter then runs as an open-loop copy.
pub fn design_physical_gains(
    length: f64,
    kernel_n: usize,
    consts: &LinearizationConstants,
) -> (KernelSet, PhysicalGainCurves) {
    let kernels = solve_kernels(length, kernel_n, consts, &KernelBoundaryData::homogeneous());
    let gains = physical_gains(&kernels, consts);
    (kernels, gains)
}

/// Applies the triangular transformation the gain design is based on:
/// `out(x) = e(x) - integral_0^x K(xi, x) e(xi) dxi` with `F` acting on the
/// first field and `G`, `H` on the second (trapezoid quadrature on the
/// simulation grid). With zero kernels it is the identity.
pub fn backstepping_transform(
    kernels: &KernelSet,
    grid: &Grid,
    e_w: &[f64],
    e_v: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let k_at = |k: &dyn Fn(usize, usize) -> f64, xi: f64, x: f64| -> f64 {
        // Nearest-node lookup is adequate here; the transform is exercised
        // in anger only for the zero-kernel identity.
        let i = ((xi / kernels.h).round() as usize).min(kernels.n);
        let j = ((x / kernels.h).round() as usize).min(kernels.n);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        k(i, j)
    };
    let mut out_w = vec![0.0; e_w.len()];
    let mut out_v = vec![0.0; e_v.len()];
    for c in 0..grid.n_cells {
        let x = grid.x_center(c);
        let mut acc_w = 0.0;
        let mut acc_v = 0.0;
        for u in 0..=c {
            let xi = grid.x_center(u);
            let wgt = if u == 0 || u == c { 0.5 } else { 1.0 } * grid.dx;
            acc_w += wgt * k_at(&|i, j| kernels.f_at(i, j), xi, x) * e_w[u];
            acc_v += wgt
                * (k_at(&|i, j| kernels.g_at(i, j), xi, x) * e_v[u]
                    + k_at(&|i, j| kernels.h_at(i, j), xi, x) * e_w[u]);
        }
        out_w[c] = e_w[c] - acc_w;
        out_v[c] = e_v[c] - acc_v;
    }
    (out_w, out_v)
}

/// The running filter: copy dynamics, inlet boundary from the measured inlet
/// speed, and distributed outlet-innovation injection.
#[derive(Debug, Clone)]
pub struct PhysicalFilter {
    pub grid: Grid,
    pub consts: LinearizationConstants,
    pub state: FieldState,
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    scratch_w: Vec<f64>,
    scratch_v: Vec<f64>,
}

impl PhysicalFilter {
    pub fn new(
        grid: Grid,
        consts: LinearizationConstants,
        gamma1: Vec<f64>,
        gamma2: Vec<f64>,
        initial: FieldState,
    ) -> Self {
        assert_eq!(gamma1.len(), grid.n_cells);
        assert_eq!(gamma2.len(), grid.n_cells);
        assert_eq!(initial.w.len(), grid.n_cells);
        let n = grid.n_cells;
        Self {
            grid,
            consts,
            state: initial,
            gamma1,
            gamma2,
            scratch_w: vec![0.0; n],
            scratch_v: vec![0.0; n],
        }
    }

    /// Open-loop copy: the design gains (zero kernels) are identically zero.
    pub fn open_loop(grid: Grid, consts: LinearizationConstants, initial: FieldState) -> Self {
        let n = grid.n_cells;
        Self::new(grid, consts, vec![0.0; n], vec![0.0; n], initial)
    }

    /// Predicted outlet reading.
    pub fn outlet_estimate(&self) -> f64 {
        *self.state.v.last().expect("grid has cells")
    }

    /// One explicit step driven by the measured inlet speed and the outlet
    /// measurement `y_p`.
    pub fn step(&mut self, inlet_v: f64, y_p: f64) {
        let dt = self.grid.dt;
        let nu1 = self.consts.k1 * dt / self.grid.dx;
        let nu3 = self.consts.k3 * dt / self.grid.dx;
        let k2 = self.consts.k2;
        let e = y_p - self.outlet_estimate();

        let w = &self.state.w;
        let v = &self.state.v;
        for i in 0..self.grid.n_cells {
            let w_left = if i == 0 { inlet_v } else { w[i - 1] };
            let v_left = if i == 0 { inlet_v } else { v[i - 1] };
            self.scratch_w[i] =
                w[i] - nu1 * (w[i] - w_left) - dt * k2 * w[i] + dt * self.gamma1[i] * e;
            self.scratch_v[i] =
                v[i] - nu3 * (v[i] - v_left) + dt * (-k2 * w[i]) + dt * self.gamma2[i] * e;
        }
        std::mem::swap(&mut self.state.w, &mut self.scratch_w);
        std::mem::swap(&mut self.state.v, &mut self.scratch_v);
        self.state.t += dt;
    }

    /// Roadside residual: squared outlet innovation.
    pub fn residual(&self, y_p: f64) -> f64 {
        (y_p - self.outlet_estimate()).powi(2)
    }
}
