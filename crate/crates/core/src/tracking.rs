//! Receiver-side probe tracks: turns a delayed, lossy stream of position
//! fixes into differentiable trajectories and per-probe density estimates.
//!
//! Raw fixes arrive at the report period. For each center slot `k` the
//! receiver fits a least-squares quadratic to whichever of the five
//! surrounding samples `x_{k-2} .. x_{k+2}` were actually delivered (slot
//! offsets `u = -2..2`, period normalized to 1):
//!
//! ```text
//! x(u) ~ c0 + c1 u + c2 u^2,   z_k = c0,  z'_k = c1,  z''_k = 2 c2.
//! ```
//!
//! Completion is gated on the right edge `x_{k+2}` plus at least three of
//! the other four samples: a single hole (text slot or dropout) therefore
//! costs one center instead of five, and a full window always uses all five
//! points, where the fit reduces to the classic five-point Savitzky-Golay
//! smoother — exact on quadratic motion, and passing only ~27% of a single
//! fix's noise into the curvature that the interface dynamics amplify.
//! An estimate for emit-time `k` exists once `x_{k+2}` is delivered: two
//! periods of stencil lag plus channel delay. Between completed stencils the
//! virtual leader is integrated over the actual gap with the last kinematic
//! drive held. Tracks whose last completed stencil is older than
//! `staleness_max` drop out of the sensor set until a fresh one completes.

use crate::model::{LinearizationConstants, TrafficParams};
use crate::pipeline::PositionEstimate;
use crate::vehicle::{integrate_interface, local_density, KinematicDrive};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sensor estimates older than this (s) are excluded from the filter.
pub const STALENESS_MAX: f64 = 5.0;

/// Substep length (s) for receiver-side interface integration.
const INTERFACE_SUBSTEP: f64 = 0.05;

/// One fresh probe sensor: where it is and what density perturbation it sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSnapshot {
    pub vehicle: u32,
    /// Estimated probe position (m).
    pub x: f64,
    /// Estimated density perturbation (veh/m), `dX / (b - z) - rho_star`.
    pub rho_perturb: f64,
    /// Seconds since the emit time of the last completed stencil.
    pub age: f64,
}

#[derive(Debug, Clone, Copy)]
struct Anchor {
    /// Emit time of the completed center slot.
    t: f64,
    /// Virtual leader position at `t`.
    b: f64,
    drive: KinematicDrive,
}

#[derive(Debug, Clone)]
struct VehicleTrack {
    /// Emit time of slot 0 (the first fix seen).
    t0: f64,
    /// Raw fix positions by slot index.
    samples: BTreeMap<i64, f64>,
    /// Highest completed center slot.
    last_center: Option<i64>,
    anchor: Option<Anchor>,
}

impl VehicleTrack {
    fn new(t0: f64) -> Self {
        Self {
            t0,
            samples: BTreeMap::new(),
            last_center: None,
            anchor: None,
        }
    }

    fn stencil(&self, k: i64) -> Option<KinematicDrive> {
        // The right edge gates completion: once x_{k+2} has arrived, no
        // later delivery can add a sample that precedes it, so whatever the
        // window holds now is all it will ever hold.
        self.samples.get(&(k + 2))?;
        // Power sums S_m = sum u^m and moments b_m = sum u^m x over the
        // samples present in the window.
        let mut s = [0.0f64; 5];
        let mut b = [0.0f64; 3];
        let mut count = 0usize;
        for j in -2..=2i64 {
            let Some(&x) = self.samples.get(&(k + j)) else {
                continue;
            };
            count += 1;
            let u = j as f64;
            let mut up = 1.0;
            for (m, sm) in s.iter_mut().enumerate() {
                *sm += up;
                if m < 3 {
                    b[m] += up * x;
                }
                up *= u;
            }
        }
        if count < 4 {
            return None;
        }
        // Normal equations of the quadratic fit, solved by Cramer's rule.
        // Any four distinct offsets in [-2, 2] keep the system far from
        // singular, so no pivoting is needed.
        let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
        let det3 = |a: &[[f64; 3]; 3]| {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        };
        let det = det3(&m);
        debug_assert!(det.abs() > 1.0);
        let mut c = [0.0f64; 3];
        for (i, ci) in c.iter_mut().enumerate() {
            let mut mi = m;
            for (row, &bi) in mi.iter_mut().zip(&b) {
                row[i] = bi;
            }
            *ci = det3(&mi) / det;
        }
        Some(KinematicDrive {
            z0: c[0],
            z_dot: c[1],
            z_ddot: 2.0 * c[2],
        })
    }
}

/// Assembles tracks from accepted position estimates and serves fresh sensor
/// snapshots to the crowdsourced-data filter.
#[derive(Debug, Clone)]
pub struct Receiver {
    period: f64,
    params: TrafficParams,
    consts: LinearizationConstants,
    pub staleness_max: f64,
    tracks: BTreeMap<u32, VehicleTrack>,
}

impl Receiver {
    pub fn new(period: f64, params: TrafficParams, consts: LinearizationConstants) -> Self {
        assert!(period > 0.0);
        Self {
            period,
            params,
            consts,
            staleness_max: STALENESS_MAX,
            tracks: BTreeMap::new(),
        }
    }

    /// Ingests one accepted estimate. Only direct fixes extend tracks;
    /// landmark-derived positions are two orders of magnitude too coarse to
    /// differentiate and are used upstream only.
    ///
    /// `rho_init` supplies the true total density at a position, used once
    /// per track to initialize the virtual leader; everything after that
    /// runs on message data alone.
    pub fn ingest<F: FnMut(f64) -> f64>(&mut self, est: &PositionEstimate, rho_init: &mut F) {
        if !est.is_fix {
            return;
        }
        let period = self.period;
        let track = self
            .tracks
            .entry(est.vehicle)
            .or_insert_with(|| VehicleTrack::new(est.t_emit));
        let slot_f = (est.t_emit - track.t0) / period;
        let slot = slot_f.round() as i64;
        if (slot_f - slot as f64).abs() > 1e-6 {
            // Off-schedule fix; the stencil needs equispaced samples.
            return;
        }
        track.samples.insert(slot, est.x);

        // The new sample can only complete centers within two slots of it,
        // and the track never moves backwards.
        let from = match track.last_center {
            Some(last) => (slot - 2).max(last + 1),
            None => slot - 2,
        };
        for k in from..=(slot + 2) {
            let Some(mut drive) = track.stencil(k) else {
                continue;
            };
            // Scale the unit-slot differences to physical time.
            drive.z_dot /= period;
            drive.z_ddot /= period * period;
            let t_k = track.t0 + k as f64 * period;
            let next = match track.anchor {
                None => {
                    let rho = rho_init(drive.z0);
                    Anchor {
                        t: t_k,
                        b: drive.z0 + self.params.vehicle_length / rho,
                        drive,
                    }
                }
                Some(anchor) => {
                    let h = t_k - anchor.t;
                    debug_assert!(h > 0.0);
                    let n = (h / INTERFACE_SUBSTEP).ceil().max(1.0) as usize;
                    match integrate_interface(
                        anchor.b,
                        &anchor.drive,
                        h,
                        n,
                        &self.params,
                        &self.consts,
                    ) {
                        Ok(b) => Anchor { t: t_k, b, drive },
                        // Defensive: a degenerate track (spacing collapsed
                        // under noise) restarts from a fresh initialization.
                        Err(_) => {
                            let rho = rho_init(drive.z0);
                            Anchor {
                                t: t_k,
                                b: drive.z0 + self.params.vehicle_length / rho,
                                drive,
                            }
                        }
                    }
                }
            };
            track.anchor = Some(next);
            track.last_center = Some(k);
            // Samples behind the stencil window are never needed again.
            track.samples.retain(|&s, _| s >= k - 2);
        }
    }

    /// Fresh sensors at time `t`, extrapolated from their anchors; sorted by
    /// vehicle id. Tracks that have gone stale, left the domain, or cannot
    /// be extrapolated are omitted.
    pub fn snapshots(&self, t: f64) -> Vec<SensorSnapshot> {
        let mut out = Vec::new();
        for (&vehicle, track) in &self.tracks {
            let Some(anchor) = track.anchor else { continue };
            let age = t - anchor.t;
            if !(0.0..=self.staleness_max).contains(&age) {
                continue;
            }
            let x = anchor.drive.z(age);
            if !(0.0..=self.params.length).contains(&x) {
                continue;
            }
            let b = if age > 0.0 {
                let n = (age / INTERFACE_SUBSTEP).ceil().max(1.0) as usize;
                match integrate_interface(anchor.b, &anchor.drive, age, n, &self.params, &self.consts)
                {
                    Ok(b) => b,
                    Err(_) => continue,
                }
            } else {
                anchor.b
            };
            let Ok(rho) = local_density(b, x, self.params.vehicle_length) else {
                continue;
            };
            out.push(SensorSnapshot {
                vehicle,
                x,
                rho_perturb: rho - self.params.rho_star,
                age,
            });
        }
        out
    }

    pub fn track_count(&self) -> usize {
        self.tracks.len()
    }
}
