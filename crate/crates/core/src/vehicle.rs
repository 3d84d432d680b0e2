//! Probe vehicles and the micro-macro interface.
//!
//! A probe is a Lagrangian tracer riding the stream at the local macroscopic
//! speed. Its reports alone say nothing about density, so each probe carries
//! a virtual leader at position `b > z` whose dynamics
//!
//! ```text
//! b' = z' + ((b - z)^(gamma+1) / C_gamma) *
//!           [ z'' - (V_opt(dX / (b - z)) - z') / T_r ]
//! ```
//!
//! mirror a car-following law driven by the follower's own kinematics; the
//! implied pointwise density is `rho_i = dX / (b - z)`. At equilibrium the
//! bracket vanishes and the spacing locks to `dX / rho_star`. The factor
//! `(b - z)^(gamma+1) / C_gamma` (~247 s^2/m at the defaults) multiplies the
//! acceleration input, which is why position tracks feeding this ODE must be
//! smoothed before differentiation.

use crate::model::{LinearizationConstants, TrafficParams};
use crate::pipeline::{
    synthesize_fake_text, synthesize_legit_text, LandmarkTable, Payload, SocialMessage,
    TruthLabel, FAKE_MODES, TEXT_LANDMARK_RADIUS,
};
use crate::plant::{NoiseSpec, Plant};
use crate::rng::{derive_seed, stream, Stream};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SensingError {
    /// The virtual leader fell behind its follower; the spacing (and hence
    /// the implied density) is meaningless from here on.
    #[error("leader-follower spacing must be positive: b = {b}, z = {z}")]
    SingularSpacing { b: f64, z: f64 },
    /// The spacing implies a density outside the optimal-speed law's domain.
    #[error("spacing {spacing} implies density {rho} outside (0, {rho_max}]")]
    ImpliedDensityOutOfRange { spacing: f64, rho: f64, rho_max: f64 },
}

/// Pointwise density implied by a leader-follower pair: `dX / (b - z)`.
pub fn local_density(b: f64, z: f64, delta_x: f64) -> Result<f64, SensingError> {
    let spacing = b - z;
    if !(spacing > 0.0) {
        return Err(SensingError::SingularSpacing { b, z });
    }
    Ok(delta_x / spacing)
}

/// Right-hand side of the virtual-leader ODE. `z`, `z_dot`, `z_ddot` are the
/// follower's absolute position, speed and acceleration.
pub fn interface_rhs(
    b: f64,
    z: f64,
    z_dot: f64,
    z_ddot: f64,
    params: &TrafficParams,
    consts: &LinearizationConstants,
) -> Result<f64, SensingError> {
    let spacing = b - z;
    let rho = local_density(b, z, params.vehicle_length)?;
    if rho > params.rho_max {
        return Err(SensingError::ImpliedDensityOutOfRange {
            spacing,
            rho,
            rho_max: params.rho_max,
        });
    }
    // Density is in (0, rho_max] here, so v_opt cannot fail.
    let v_opt = params.v_opt(rho).expect("density checked above");
    let gain = spacing.powf(params.gamma_exp + 1.0) / consts.c_gamma;
    Ok(z_dot + gain * (z_ddot - (v_opt - z_dot) / params.relax_time))
}

/// Follower kinematics over one report interval, extrapolated from a single
/// sample: constant acceleration, linear speed, quadratic position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicDrive {
    pub z0: f64,
    pub z_dot: f64,
    pub z_ddot: f64,
}

impl KinematicDrive {
    pub fn z(&self, tau: f64) -> f64 {
        self.z0 + self.z_dot * tau + 0.5 * self.z_ddot * tau * tau
    }

    pub fn z_dot(&self, tau: f64) -> f64 {
        self.z_dot + self.z_ddot * tau
    }
}

/// Integrates the virtual leader over `h` seconds with `n_sub` classical RK4
/// substeps, the follower extrapolated kinematically from `drive`.
pub fn integrate_interface(
    b0: f64,
    drive: &KinematicDrive,
    h: f64,
    n_sub: usize,
    params: &TrafficParams,
    consts: &LinearizationConstants,
) -> Result<f64, SensingError> {
    assert!(n_sub > 0 && h >= 0.0);
    let dt = h / n_sub as f64;
    let mut b = b0;
    let f = |tau: f64, b: f64| {
        interface_rhs(b, drive.z(tau), drive.z_dot(tau), drive.z_ddot, params, consts)
    };
    for i in 0..n_sub {
        let tau = i as f64 * dt;
        let k1 = f(tau, b)?;
        let k2 = f(tau + 0.5 * dt, b + 0.5 * dt * k1)?;
        let k3 = f(tau + 0.5 * dt, b + 0.5 * dt * k2)?;
        let k4 = f(tau + dt, b + dt * k3)?;
        b += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(b)
}

/// When and where a probe joins the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleEntry {
    pub id: u32,
    pub t_entry: f64,
    #[serde(default)]
    pub x_entry: f64,
}

impl VehicleEntry {
    /// Inlet entries (x = 0) at the given times, ids in order.
    pub fn at_times(times: &[f64]) -> Vec<VehicleEntry> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| VehicleEntry {
                id: i as u32,
                t_entry: t,
                x_entry: 0.0,
            })
            .collect()
    }
}

/// Default staggered inlet schedule: one probe every 15 s.
pub fn default_entry_times() -> Vec<f64> {
    vec![5.0, 20.0, 35.0, 50.0, 65.0, 80.0, 95.0, 110.0]
}

/// Per-vehicle randomness, split by purpose so that changing (say) the
/// dropout rate never perturbs the message texts.
#[derive(Debug, Clone)]
struct ProbeRngs {
    noise: ChaCha12Rng,
    content: ChaCha12Rng,
    corruption: ChaCha12Rng,
    channel: ChaCha12Rng,
}

impl ProbeRngs {
    fn for_vehicle(seed: u64, id: u32) -> Self {
        let vseed = derive_seed(seed, id as u64);
        Self {
            noise: stream(vseed, Stream::ProbeNoise),
            content: stream(vseed, Stream::MessageContent),
            corruption: stream(vseed, Stream::Corruption),
            channel: stream(vseed, Stream::Channel),
        }
    }
}

/// One active probe. Position is advected with the plant's speed field by
/// explicit Euler at the plant step; probes leave the domain at `x = L`.
#[derive(Debug, Clone)]
pub struct ProbeVehicle {
    pub id: u32,
    /// Absolute position (m).
    pub z: f64,
    pub entered_at: f64,
    pub exited: bool,
    next_report: f64,
    rngs: ProbeRngs,
}

/// The probe population: spawns vehicles on schedule, advects them, and
/// emits their reports through the lossy delayed channel.
#[derive(Debug, Clone)]
pub struct ProbeFleet {
    pending: Vec<VehicleEntry>,
    pub vehicles: Vec<ProbeVehicle>,
    pub report_period: f64,
    seed: u64,
    next_msg_id: u64,
}

impl ProbeFleet {
    pub fn new(mut entries: Vec<VehicleEntry>, report_period: f64, seed: u64) -> Self {
        assert!(report_period > 0.0);
        // Process in entry order; reverse so spawning pops from the back.
        entries.sort_by(|a, b| b.t_entry.total_cmp(&a.t_entry).then(b.id.cmp(&a.id)));
        Self {
            pending: entries,
            vehicles: Vec::new(),
            report_period,
            seed,
            next_msg_id: 0,
        }
    }

    /// Spawns every entry due by time `t`. Call before emitting reports for
    /// `t`, so a vehicle entering exactly at a report boundary files its
    /// first report from its entry position rather than one period late.
    pub fn spawn_due(&mut self, t: f64) {
        while self
            .pending
            .last()
            .is_some_and(|e| e.t_entry <= t + 1e-9)
        {
            let e = self.pending.pop().unwrap();
            self.vehicles.push(ProbeVehicle {
                id: e.id,
                z: e.x_entry,
                entered_at: e.t_entry,
                exited: false,
                next_report: e.t_entry,
                rngs: ProbeRngs::for_vehicle(self.seed, e.id),
            });
        }
    }

    /// Spawns due entries and advects active probes one plant step using the
    /// current (pre-step) speed field: `z += dt * (v_star + v(z, t))`.
    pub fn advance(&mut self, plant: &Plant, dt: f64) {
        self.spawn_due(plant.state.t);
        let length = plant.grid.length;
        for v in &mut self.vehicles {
            if v.exited {
                continue;
            }
            v.z += dt * (plant.consts.v_star + plant.v_at(v.z));
            if v.z >= length {
                v.exited = true;
            }
        }
    }

    /// Emits every report due by time `t`. Each report is either a position
    /// fix (probability 0.8) or a landmark text; texts are corrupted with
    /// probability `corruption_fraction`. Reports are lost with probability
    /// `p_dropout` and otherwise delayed uniformly on `[0, delay_max]`. A
    /// text with no landmark within range degrades to a position fix.
    pub fn emit_due(
        &mut self,
        t: f64,
        noise: &NoiseSpec,
        landmarks: &LandmarkTable,
        corruption_fraction: f64,
    ) -> Vec<SocialMessage> {
        let mut out = Vec::new();
        let gauss = Normal::new(0.0, 1.0).unwrap();
        for v in &mut self.vehicles {
            while !v.exited && v.next_report <= t + 1e-9 {
                let t_emit = v.next_report;
                v.next_report += self.report_period;

                if v.rngs.channel.gen_bool(noise.p_dropout) {
                    continue;
                }
                let delay = if noise.delay_max > 0.0 {
                    v.rngs.channel.gen_range(0.0..noise.delay_max)
                } else {
                    0.0
                };

                let want_text = v.rngs.content.gen_bool(0.2);
                let nearby = landmarks.nearest_within(v.z, TEXT_LANDMARK_RADIUS);
                let (payload, label, mode) = match (want_text, nearby) {
                    (true, Some(lm)) => {
                        if corruption_fraction > 0.0
                            && v.rngs.corruption.gen_bool(corruption_fraction)
                        {
                            let m = FAKE_MODES[v.rngs.corruption.gen_range(0..FAKE_MODES.len())];
                            (
                                Payload::Text {
                                    content: synthesize_fake_text(&mut v.rngs.corruption, m, lm),
                                },
                                TruthLabel::Fake,
                                Some(m),
                            )
                        } else {
                            (
                                Payload::Text {
                                    content: synthesize_legit_text(&mut v.rngs.content, lm),
                                },
                                TruthLabel::Legit,
                                None,
                            )
                        }
                    }
                    _ => {
                        let x = v.z + noise.sigma_gps * gauss.sample(&mut v.rngs.noise);
                        (Payload::Gps { x }, TruthLabel::Legit, None)
                    }
                };

                out.push(SocialMessage {
                    id: self.next_msg_id,
                    vehicle: v.id,
                    t_emit,
                    t_recv: t_emit + delay,
                    payload,
                    truth_label: label,
                    truth_x: v.z,
                    fake_mode: mode,
                });
                self.next_msg_id += 1;
            }
        }
        out
    }

    /// Probes still inside the domain.
    pub fn active_count(&self) -> usize {
        self.vehicles.iter().filter(|v| !v.exited).count()
    }
}
