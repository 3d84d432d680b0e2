//! Scenario engine: wires the plant, the probe fleet, the message pipeline,
//! the tracking receiver, both filters, and the comparator into one
//! deterministic run.
//!
//! Timing is organized around the 1 s reporting period. The plant advances
//! at the CFL-limited step (an exact divisor of the period); both filters
//! advance in lockstep with the plant. Crowdsourced messages emit, deliver,
//! and refresh the sensor snapshot list at period boundaries; the filters
//! consume the latest snapshot list on every interior step. Residuals and
//! verdicts are recorded at t = 1 s, 2 s, ..., so a zero-length horizon
//! yields no records at all.
//!
//! The comparator does not act on instantaneous residuals: both channels
//! are smoothed by a rolling mean over the last [`RESIDUAL_WINDOW`]
//! reporting instants before thresholding, and calibration maxima are taken
//! over the same windowed traces. Attack signatures persist for many
//! seconds, so the window trades a second or two of latency for a much
//! tighter nominal tail. Raw traces are kept alongside for analysis.

use crate::attack::AttackSpec;
use crate::comparator::{calibrate_threshold, decide, Decision, Thresholds, Verdict};
use crate::config::{ScenarioConfig, ThresholdConfig};
use crate::model::{Grid, GridError, LinearizationConstants, TrafficParams};
use crate::physical_filter::{design_physical_gains, PhysicalFilter, PhysicalGainCurves};
use crate::pipeline::{process_message, Disposition, FakeScreen, SocialMessage};
use crate::plant::{measure_outlet, FieldState, Plant};
use crate::rng::{derive_seed, stream, Stream};
use crate::social_filter::{design_social_gains, DesignError, GainDesign, SocialFilter};
use crate::tracking::Receiver;
use crate::vehicle::{ProbeFleet, VehicleEntry};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Seed-derivation offset reserved for calibration runs, far above any
/// per-vehicle index.
const CALIBRATION_SEED_BASE: u64 = 1_000;

/// Width, in reporting instants, of the rolling mean applied to both
/// residuals before they reach the comparator.
pub const RESIDUAL_WINDOW: usize = 5;

/// Rolling mean of the last [`RESIDUAL_WINDOW`] entries of a raw trace.
fn windowed_tail(raw: &[f64]) -> f64 {
    let tail = &raw[raw.len().saturating_sub(RESIDUAL_WINDOW)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Rolling mean over whichever of the last [`RESIDUAL_WINDOW`] instants had
/// a residual at all; `None` while the sensor set has been empty that long.
fn windowed_tail_sparse(raw: &[Option<f64>]) -> Option<f64> {
    let tail = &raw[raw.len().saturating_sub(RESIDUAL_WINDOW)..];
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in tail.iter().flatten() {
        sum += r;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Which filter raised the first attack verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WhichFilter {
    Physical,
    Social,
    Both,
}

/// Message pipeline tallies over one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MessageStats {
    pub emitted: usize,
    pub accepted: usize,
    pub rejected_fake: usize,
    pub rejected_irrelevant: usize,
    pub unlocatable: usize,
}

/// One strided field snapshot row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRow {
    pub t: f64,
    pub x: f64,
    pub w: f64,
    pub v: f64,
    pub w_physical: f64,
    pub v_physical: f64,
    pub w_social: f64,
    pub v_social: f64,
}

/// Everything a run produces, before any files are written.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ScenarioConfig,
    pub thresholds: Thresholds,
    pub social_design: GainDesign,
    pub physical_gain_max: f64,
    /// Reporting instants (s), one per recorded row.
    pub times: Vec<f64>,
    /// Windowed physical residual — the value the comparator saw.
    pub r_p: Vec<f64>,
    /// Windowed crowdsourced residual; `None` when no sensor reported
    /// within the window.
    pub r_s: Vec<Option<f64>>,
    /// Instantaneous physical residual.
    pub r_p_raw: Vec<f64>,
    /// Instantaneous crowdsourced residual; `None` when no sensor was fresh.
    pub r_s_raw: Vec<Option<f64>>,
    pub decisions: Vec<Decision>,
    pub fields: Vec<FieldRow>,
    pub messages: MessageStats,
    /// Fraction of reporting instants with a crowdsourced residual.
    pub social_availability: f64,
    /// First attack verdict at or after the earliest onset, minus that
    /// onset; `None` when no attack is configured or nothing fired.
    pub detection_latency: Option<f64>,
    pub which_filter_fired: Option<WhichFilter>,
    /// Not part of any deterministic output file.
    pub wall_clock_seconds: f64,
}

/// Delivery queue entry ordered by arrival time, then emission id.
struct Delivery(SocialMessage);

impl PartialEq for Delivery {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Delivery {}
impl PartialOrd for Delivery {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Delivery {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we pop earliest arrivals.
        other
            .0
            .t_recv
            .partial_cmp(&self.0.t_recv)
            .expect("finite arrival times")
            .then(other.0.id.cmp(&self.0.id))
    }
}

/// Runs a scenario end to end, calibrating thresholds first if the
/// configuration asks for it.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunRecord, ScenarioError> {
    let started = std::time::Instant::now();
    let thresholds = match cfg.thresholds {
        ThresholdConfig::Explicit { r_th_p, r_th_s } => Thresholds { r_th_p, r_th_s },
        ThresholdConfig::Calibrate {
            runs,
            safety_factor,
        } => calibrate_thresholds(cfg, runs, safety_factor)?,
    };
    let mut rec = run_with_thresholds(cfg, thresholds)?;
    rec.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(rec)
}

/// Calibrates both thresholds from attack-free, corruption-free variants of
/// the given scenario (noise and schedules unchanged), one derived seed per
/// run. The margin applies to the worst windowed residual seen, matching
/// what the comparator will be shown at run time.
pub fn calibrate_thresholds(
    cfg: &ScenarioConfig,
    runs: usize,
    safety_factor: f64,
) -> Result<Thresholds, ScenarioError> {
    let mut nominal = cfg.clone();
    nominal.attacks.clear();
    nominal.vehicles.corruption_fraction = 0.0;
    let mut traces_p: Vec<Vec<f64>> = Vec::with_capacity(runs);
    let mut traces_s: Vec<Vec<f64>> = Vec::with_capacity(runs);
    for i in 0..runs {
        let mut variant = nominal.clone();
        variant.seed = derive_seed(cfg.seed, CALIBRATION_SEED_BASE + i as u64);
        let rec = run_with_thresholds(&variant, Thresholds { r_th_p: 1.0, r_th_s: 1.0 })?;
        traces_p.push(rec.r_p);
        traces_s.push(rec.r_s.into_iter().flatten().collect());
    }
    Ok(Thresholds {
        r_th_p: calibrate_threshold(traces_p.iter().map(Vec::as_slice), safety_factor),
        r_th_s: calibrate_threshold(traces_s.iter().map(Vec::as_slice), safety_factor),
    })
}

/// Runs the scenario with thresholds already fixed.
pub fn run_with_thresholds(
    cfg: &ScenarioConfig,
    thresholds: Thresholds,
) -> Result<RunRecord, ScenarioError> {
    let params: &TrafficParams = &cfg.params;
    let consts = LinearizationConstants::from_params(params)?;
    let grid = Grid::for_reporting(params.length, cfg.grid.n_cells, &consts, 1.0)?;
    let steps_per_report = (1.0 / grid.dt).round() as usize;

    let social_design = design_social_gains(
        &consts,
        cfg.gains.gamma_slack,
        cfg.gains.beta_magnitude,
        cfg.gains.d_min,
    )?;
    let (_, gain_curves): (_, PhysicalGainCurves) =
        design_physical_gains(params.length, cfg.gains.kernel_n, &consts);
    let (gamma1, gamma2) = gain_curves.sample(&grid);

    // Warm start: all estimators share the plant's initial (equilibrium)
    // state, so the run begins with zero innovation everywhere.
    let initial = FieldState::zeros(grid.n_cells);
    let mut plant = Plant::new(grid.clone(), consts, initial.clone())?;
    let mut physical = PhysicalFilter::new(
        grid.clone(),
        consts,
        gamma1,
        gamma2,
        initial.clone(),
    );
    let mut social = SocialFilter::new(grid.clone(), consts, social_design.gains, initial);

    let mut fleet = ProbeFleet::new(
        VehicleEntry::at_times(&cfg.vehicles.entry_times),
        1.0,
        cfg.seed,
    );
    let mut receiver = Receiver::new(1.0, params.clone(), consts);
    let screen = FakeScreen::default();
    let mut outlet_rng = stream(cfg.seed, Stream::OutletNoise);

    let mut queue: BinaryHeap<Delivery> = BinaryHeap::new();
    let mut stats = MessageStats::default();
    let mut current_sensors = Vec::new();

    let n_reports = cfg.t_end.floor() as usize;
    let total_steps = n_reports * steps_per_report;
    let mut times = Vec::with_capacity(n_reports);
    let mut r_p_win = Vec::with_capacity(n_reports);
    let mut r_s_win = Vec::with_capacity(n_reports);
    let mut r_p_raw = Vec::with_capacity(n_reports);
    let mut r_s_raw = Vec::with_capacity(n_reports);
    let mut decisions = Vec::with_capacity(n_reports);
    let mut fields = Vec::new();

    let attacks: &[AttackSpec] = &cfg.attacks;

    let mut y_p = measure_outlet(&plant.state, &cfg.noise, &mut outlet_rng);
    for step in 0..=total_steps {
        let t = plant.state.t;

        // Period boundary: move messages, refresh the sensor list, record.
        if step % steps_per_report == 0 {
            fleet.spawn_due(t);
            for msg in fleet.emit_due(t, &cfg.noise, &cfg.landmarks, cfg.vehicles.corruption_fraction)
            {
                stats.emitted += 1;
                queue.push(Delivery(msg));
            }
            while queue
                .peek()
                .is_some_and(|d| d.0.t_recv <= t + 1e-9)
            {
                let msg = queue.pop().expect("peeked").0;
                match process_message(&msg, &screen, &cfg.landmarks, cfg.noise.sigma_gps) {
                    Disposition::Accepted(est) => {
                        stats.accepted += 1;
                        if est.is_fix {
                            let mut rho_init = |x: f64| params.rho_star + plant.rho_at(x);
                            receiver.ingest(&est, &mut rho_init);
                        }
                    }
                    Disposition::RejectedFake => stats.rejected_fake += 1,
                    Disposition::RejectedIrrelevant => stats.rejected_irrelevant += 1,
                    Disposition::Unlocatable => stats.unlocatable += 1,
                }
            }
            current_sensors = receiver.snapshots(t);
            let k = step / steps_per_report;
            if k >= 1 {
                let t_k = k as f64;
                r_p_raw.push(physical.residual(y_p));
                r_s_raw.push(social.residual(&current_sensors));
                let r_p = windowed_tail(&r_p_raw);
                let r_s = windowed_tail_sparse(&r_s_raw);
                times.push(t_k);
                r_p_win.push(r_p);
                r_s_win.push(r_s);
                decisions.push(decide(t_k, r_p, r_s, &thresholds));
                if k.is_multiple_of(cfg.output_stride) {
                    for i in 0..plant.grid.n_cells {
                        fields.push(FieldRow {
                            t: t_k,
                            x: plant.grid.x_center(i),
                            w: plant.state.w[i],
                            v: plant.state.v[i],
                            w_physical: physical.state.w[i],
                            v_physical: physical.state.v[i],
                            w_social: social.state.w[i],
                            v_social: social.state.v[i],
                        });
                    }
                }
            }
            if step == total_steps {
                break;
            }
        }

        // One plant step with both filters in lockstep.
        y_p = measure_outlet(&plant.state, &cfg.noise, &mut outlet_rng);
        let v_in = cfg.inlet.value(t);
        social.step(v_in, &current_sensors);
        fleet.advance(&plant, grid.dt);
        plant.step(attacks, &cfg.inlet);
        physical.step(v_in, y_p);
    }

    // Availability is judged on the raw trace: the window's short memory
    // must not count as live sensor coverage.
    let available = r_s_raw.iter().filter(|r| r.is_some()).count();
    let social_availability = if r_s_raw.is_empty() {
        0.0
    } else {
        available as f64 / r_s_raw.len() as f64
    };

    let first_onset = attacks
        .iter()
        .map(|a| a.t_start)
        .fold(f64::INFINITY, f64::min);
    let mut detection_latency = None;
    let mut which_filter_fired = None;
    if first_onset.is_finite() {
        if let Some(d) = decisions
            .iter()
            .find(|d| d.verdict == Verdict::Attack && d.t >= first_onset)
        {
            detection_latency = Some(d.t - first_onset);
            which_filter_fired = Some(match (d.physical_high, d.social_high) {
                (true, true) => WhichFilter::Both,
                (true, false) => WhichFilter::Physical,
                (false, true) => WhichFilter::Social,
                (false, false) => unreachable!("attack verdict requires a high flag"),
            });
        }
    }

    Ok(RunRecord {
        config: cfg.clone(),
        thresholds,
        social_design,
        physical_gain_max: gain_curves.max_abs(),
        times,
        r_p: r_p_win,
        r_s: r_s_win,
        r_p_raw,
        r_s_raw,
        decisions,
        fields,
        messages: stats,
        social_availability,
        detection_latency,
        which_filter_fired,
        wall_clock_seconds: 0.0,
    })
}
