//! The promises this crate ships with, exercised end to end.
//!
//! Each test checks one advertised property of the detection stack and, when
//! it holds, prints a single `[aNN] PASS` line with the measured figures
//! (visible under `--nocapture`). The `aNN` prefix is only a stable ordering
//! for scanning the output; every test stands alone. Threshold calibrations
//! and the ten-seed attack sweeps are shared between tests through lazy
//! statics, so the suite pays for each of them once.

use std::sync::OnceLock;
use std::time::Instant;

use duofilter::attack::{ScenarioPreset, PRESET_T_START};
use duofilter::batch::{run_batch, with_seeds};
use duofilter::comparator::{decide, Decision, Thresholds, Verdict, DEFAULT_SAFETY_FACTOR};
use duofilter::config::{ScenarioConfig, ThresholdConfig, DEFAULT_CALIBRATION_RUNS};
use duofilter::model::{Grid, LinearizationConstants, TrafficParams};
use duofilter::physical_filter::{
    design_physical_gains, solve_kernels, KernelBoundaryData, PhysicalFilter,
};
use duofilter::pipeline::{
    classify_corpus, evaluate_classifier, generate_corpus, is_relevant, process_message,
    Disposition, FakeScreen, LandmarkTable, Relevance, SocialMessage, TruthLabel,
};
use duofilter::plant::{measure_outlet, FieldState, InletSignal, NoiseSpec, Plant};
use duofilter::report::{emit_report, REPORT_FILES};
use duofilter::rng::{stream, Stream};
use duofilter::scenario::{calibrate_thresholds, run_scenario, RunRecord};
use duofilter::social_filter::{
    coupling_matrix, design_social_gains, injection_matrix, sym_eigs_2x2, SocialFilter,
    DEFAULT_BETA_MAGNITUDE, DEFAULT_GAMMA_SLACK,
};
use duofilter::tracking::{Receiver, SensorSnapshot};
use duofilter::vehicle::{default_entry_times, ProbeFleet, VehicleEntry};
use rand::Rng;

/// Base seed for threshold calibration. The attack sweeps use different
/// seeds, so the calibration ensemble never overlaps the runs it gates.
const CALIBRATION_SEED: u64 = 7;

/// Seeds of the ten-fold attack sweeps.
const SWEEP_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

/// A detection must land within this many seconds of the attack onset.
const DETECTION_DEADLINE: f64 = 30.0;

fn slot(preset: ScenarioPreset) -> usize {
    match preset {
        ScenarioPreset::Nominal => 0,
        ScenarioPreset::Case1 => 1,
        ScenarioPreset::Case2 => 2,
        ScenarioPreset::Case3 => 3,
    }
}

/// Thresholds calibrated once per preset (100 nominal runs, default margin)
/// and shared across tests.
fn thresholds_for(preset: ScenarioPreset) -> Thresholds {
    static CACHE: [OnceLock<Thresholds>; 4] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    *CACHE[slot(preset)].get_or_init(|| {
        let base = ScenarioConfig::for_preset(preset, CALIBRATION_SEED);
        calibrate_thresholds(&base, DEFAULT_CALIBRATION_RUNS, DEFAULT_SAFETY_FACTOR)
            .expect("calibration runs")
    })
}

/// Ten-seed sweep of a preset at its calibrated thresholds, run once.
fn sweep(preset: ScenarioPreset) -> &'static [RunRecord] {
    static CACHE: [OnceLock<Vec<RunRecord>>; 4] =
        [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CACHE[slot(preset)].get_or_init(|| {
        let th = thresholds_for(preset);
        let mut base = ScenarioConfig::for_preset(preset, SWEEP_SEEDS[0]);
        base.thresholds = ThresholdConfig::Explicit {
            r_th_p: th.r_th_p,
            r_th_s: th.r_th_s,
        };
        run_batch(&with_seeds(&base, &SWEEP_SEEDS)).expect("sweep runs")
    })
}

/// First reporting instant at which `flag` is raised.
fn first_flag(rec: &RunRecord, flag: impl Fn(&Decision) -> bool) -> Option<f64> {
    rec.decisions.iter().find(|d| flag(d)).map(|d| d.t)
}

/// Least-squares slope of `y` against `t`.
fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &(t, y) in points {
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    (n * sty - st * sy) / (n * stt - st * st)
}

#[test]
fn a01_comparator_truth_table_is_exact() {
    let started = Instant::now();
    let th = Thresholds { r_th_p: 1.0, r_th_s: 2.0 };
    // (r_p, r_s, physical_high, social_high, verdict). The middle block pins
    // the boundary convention — equality counts as an exceedance — and the
    // last one the no-coverage column, where only the roadside channel can
    // raise a flag.
    let rows: [(f64, Option<f64>, bool, bool, Verdict); 9] = [
        (0.5, Some(1.0), false, false, Verdict::NoAttack),
        (1.5, Some(1.0), true, false, Verdict::Attack),
        (0.5, Some(3.0), false, true, Verdict::Attack),
        (1.5, Some(3.0), true, true, Verdict::Attack),
        (1.0, Some(1.0), true, false, Verdict::Attack),
        (0.5, Some(2.0), false, true, Verdict::Attack),
        (1.0, Some(2.0), true, true, Verdict::Attack),
        (0.5, None, false, false, Verdict::NoAttack),
        (1.5, None, true, false, Verdict::Attack),
    ];
    for (r_p, r_s, want_p, want_s, want_v) in rows {
        let d = decide(50.0, r_p, r_s, &th);
        assert_eq!(d.physical_high, want_p, "r_p = {r_p}, r_s = {r_s:?}");
        assert_eq!(d.social_high, want_s, "r_p = {r_p}, r_s = {r_s:?}");
        assert_eq!(d.verdict, want_v, "r_p = {r_p}, r_s = {r_s:?}");
        assert_eq!(d.social_available, r_s.is_some());
        assert_eq!(d.t, 50.0);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "comparator table took {elapsed:.3} s");
    println!(
        "[a01] PASS — all {} comparator rows exact, including threshold \
         equality and the no-coverage column",
        rows.len()
    );
}

#[test]
fn a02_nominal_estimation_errors_decay_at_the_certified_rates() {
    let started = Instant::now();
    let params = TrafficParams::default();
    let consts = LinearizationConstants::from_params(&params).unwrap();
    let grid = Grid::for_reporting(params.length, 200, &consts, 1.0).unwrap();
    let spr = (1.0 / grid.dt).round() as usize;
    let quiet = InletSignal { amplitude: 0.0, period: 60.0 };

    // Roadside channel: an initial estimation error must flush through the
    // outlet within one transit per characteristic family, L/k1 + L/k3.
    let flush = params.length / consts.k1 + params.length / consts.k3;
    let mut plant = Plant::new(
        grid.clone(),
        consts,
        FieldState::bump(&grid, 0.4, 0.5, 300.0, 80.0),
    )
    .unwrap();
    let (_, gain_curves) = design_physical_gains(params.length, 200, &consts);
    let (gamma1, gamma2) = gain_curves.sample(&grid);
    let mut physical = PhysicalFilter::new(
        grid.clone(),
        consts,
        gamma1,
        gamma2,
        FieldState::zeros(grid.n_cells),
    );
    let mut rng = stream(CALIBRATION_SEED, Stream::OutletNoise);
    let mut y_p = measure_outlet(&plant.state, &NoiseSpec::OFF, &mut rng);
    let total = 130 * spr;
    let mut worst_after_flush = 0.0f64;
    for step in 0..=total {
        if step % spr == 0 {
            if (step / spr) as f64 > flush {
                worst_after_flush = worst_after_flush.max(physical.residual(y_p));
            }
            if step == total {
                break;
            }
        }
        y_p = measure_outlet(&plant.state, &NoiseSpec::OFF, &mut rng);
        let v_in = quiet.value(plant.state.t);
        plant.step(&[], &quiet);
        physical.step(v_in, y_p);
    }
    assert!(
        worst_after_flush < 1e-10,
        "outlet innovation {worst_after_flush:.3e} after the {flush:.1}-s flush"
    );

    // Crowdsourced channel: against a fixed rack of live density sensors the
    // filter error must contract at least at the certified rate; the squared
    // residual then falls at twice that rate, so demanding half of it from
    // the log-slope leaves a wide margin.
    let design = design_social_gains(
        &consts,
        DEFAULT_GAMMA_SLACK,
        DEFAULT_BETA_MAGNITUDE,
        params.vehicle_length / params.rho_max,
    )
    .unwrap();
    let mut plant = Plant::new(
        grid.clone(),
        consts,
        FieldState::bump(&grid, 0.0, 0.5, 300.0, 100.0),
    )
    .unwrap();
    let mut social = SocialFilter::new(
        grid.clone(),
        consts,
        design.gains,
        FieldState::zeros(grid.n_cells),
    );
    let sensor_xs: Vec<f64> = (0..8).map(|i| 300.0 + 50.0 * i as f64).collect();
    let snap = |plant: &Plant| -> Vec<SensorSnapshot> {
        sensor_xs
            .iter()
            .enumerate()
            .map(|(i, &x)| SensorSnapshot {
                vehicle: i as u32,
                x,
                rho_perturb: plant.rho_at(x),
                age: 0.0,
            })
            .collect()
    };
    let mut sensors = snap(&plant);
    let mut points = Vec::new();
    let total = 120 * spr;
    for step in 0..=total {
        if step % spr == 0 {
            sensors = snap(&plant);
            let t = (step / spr) as f64;
            let r = social.residual(&sensors).expect("sensors always present");
            if t >= 10.0 && r > 1e-24 {
                points.push((t, r.ln()));
            }
            if step == total {
                break;
            }
        }
        social.step(0.0, &sensors);
        plant.step(&[], &quiet);
    }
    assert!(points.len() >= 30, "decay window too short: {} points", points.len());
    let slope = ls_slope(&points);
    let required = -0.5 * design.lambda_s;
    assert!(
        slope <= required,
        "log-residual slope {slope:.4} /s, required <= {required:.4} /s"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 20.0, "two decay runs took {elapsed:.2} s");
    println!(
        "[a02] PASS — outlet innovation {worst_after_flush:.1e} after the \
         {flush:.0}-s flush; crowdsourced log-residual slope {slope:.3} /s \
         (required {required:.4} /s) over {} samples",
        points.len()
    );
}

#[test]
fn a03_mid_domain_disturbance_is_caught_by_the_crowdsourced_channel_alone() {
    let mut latencies = Vec::new();
    for rec in sweep(ScenarioPreset::Case1) {
        let seed = rec.config.seed;
        let t_s = first_flag(rec, |d| d.social_high)
            .unwrap_or_else(|| panic!("seed {seed}: crowdsourced filter never fired"));
        assert!(
            (PRESET_T_START..=PRESET_T_START + DETECTION_DEADLINE).contains(&t_s),
            "seed {seed}: crowdsourced crossing at t = {t_s} s"
        );
        assert_eq!(
            first_flag(rec, |d| d.physical_high),
            None,
            "seed {seed}: roadside filter fired on a wave that cannot reach the outlet in time"
        );
        latencies.push(t_s - PRESET_T_START);
    }
    let lo = latencies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = latencies.iter().cloned().fold(0.0, f64::max);
    println!(
        "[a03] PASS — crowdsourced detection {}/{} seeds, latency {lo}..{hi} s; \
         roadside silent throughout",
        latencies.len(),
        SWEEP_SEEDS.len()
    );
}

#[test]
fn a04_outlet_hugging_disturbance_is_caught_by_the_roadside_channel_alone() {
    let mut latencies = Vec::new();
    for rec in sweep(ScenarioPreset::Case2) {
        let seed = rec.config.seed;
        let t_p = first_flag(rec, |d| d.physical_high)
            .unwrap_or_else(|| panic!("seed {seed}: roadside filter never fired"));
        assert!(
            (PRESET_T_START..=PRESET_T_START + DETECTION_DEADLINE).contains(&t_p),
            "seed {seed}: roadside crossing at t = {t_p} s"
        );
        assert_eq!(
            first_flag(rec, |d| d.social_high),
            None,
            "seed {seed}: crowdsourced filter fired with no probes in the impact zone"
        );
        latencies.push(t_p - PRESET_T_START);
    }
    let lo = latencies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = latencies.iter().cloned().fold(0.0, f64::max);
    println!(
        "[a04] PASS — roadside detection {}/{} seeds, latency {lo}..{hi} s; \
         crowdsourced silent throughout",
        latencies.len(),
        SWEEP_SEEDS.len()
    );
}

#[test]
fn a05_road_wide_disturbance_is_caught_by_both_channels() {
    let mut latencies = Vec::new();
    for rec in sweep(ScenarioPreset::Case3) {
        let seed = rec.config.seed;
        let t_p = first_flag(rec, |d| d.physical_high)
            .unwrap_or_else(|| panic!("seed {seed}: roadside filter never fired"));
        let t_s = first_flag(rec, |d| d.social_high)
            .unwrap_or_else(|| panic!("seed {seed}: crowdsourced filter never fired"));
        for (name, t) in [("roadside", t_p), ("crowdsourced", t_s)] {
            assert!(
                (PRESET_T_START..=PRESET_T_START + DETECTION_DEADLINE).contains(&t),
                "seed {seed}: {name} crossing at t = {t} s"
            );
        }
        assert!(
            rec.decisions.iter().any(|d| d.verdict == Verdict::Attack),
            "seed {seed}: no attack verdict despite both flags"
        );
        assert!(rec.which_filter_fired.is_some());
        assert!(rec.detection_latency.is_some());
        latencies.push((t_p - PRESET_T_START, t_s - PRESET_T_START));
    }
    let worst_p = latencies.iter().map(|l| l.0).fold(0.0, f64::max);
    let worst_s = latencies.iter().map(|l| l.1).fold(0.0, f64::max);
    println!(
        "[a05] PASS — both channels fired on {}/{} seeds; worst latency \
         roadside {worst_p} s, crowdsourced {worst_s} s",
        latencies.len(),
        SWEEP_SEEDS.len()
    );
}

#[test]
fn a06_filters_are_silent_before_onset_and_on_nominal_traffic() {
    // No flag of either kind before the onset, on any attack sweep.
    for preset in [ScenarioPreset::Case1, ScenarioPreset::Case2, ScenarioPreset::Case3] {
        for rec in sweep(preset) {
            for d in &rec.decisions {
                if d.t < PRESET_T_START {
                    assert!(
                        !d.physical_high && !d.social_high,
                        "{} seed {}: flag at t = {} s, before onset",
                        preset.name(),
                        rec.config.seed,
                        d.t
                    );
                }
            }
        }
    }

    // False-alarm rate on fresh nominal traffic at the calibrated thresholds.
    let th = thresholds_for(ScenarioPreset::Nominal);
    let mut base = ScenarioConfig::for_preset(ScenarioPreset::Nominal, 0);
    base.thresholds = ThresholdConfig::Explicit {
        r_th_p: th.r_th_p,
        r_th_s: th.r_th_s,
    };
    let seeds: Vec<u64> = (100..200).collect();
    let runs = run_batch(&with_seeds(&base, &seeds)).expect("nominal runs");
    let false_alarms = runs
        .iter()
        .filter(|r| r.decisions.iter().any(|d| d.verdict == Verdict::Attack))
        .count();
    assert!(
        false_alarms * 20 <= runs.len(),
        "false alarms on nominal traffic: {false_alarms}/{}",
        runs.len()
    );
    println!(
        "[a06] PASS — zero pre-onset flags across 30 attack runs; \
         {false_alarms}/{} nominal runs raised a false alarm",
        runs.len()
    );
}

#[test]
fn a07_probe_reconstruction_matches_the_equilibrium_density() {
    let params = TrafficParams::default();
    let consts = LinearizationConstants::from_params(&params).unwrap();
    let grid = Grid::for_reporting(params.length, 200, &consts, 1.0).unwrap();
    let landmarks = LandmarkTable::default_for_length(params.length);
    let screen = FakeScreen::default();
    let quiet = InletSignal::default();
    let spr = (1.0 / grid.dt).round() as usize;
    let horizon = 120usize;

    // Steady equilibrium flow, probes reporting on schedule; returns every
    // (reporting instant, reconstructed density perturbation) pair.
    let run = |noise: NoiseSpec, seed: u64| -> Vec<(f64, f64)> {
        let mut plant = Plant::new(grid.clone(), consts, FieldState::zeros(grid.n_cells)).unwrap();
        let mut fleet = ProbeFleet::new(VehicleEntry::at_times(&default_entry_times()), 1.0, seed);
        let mut receiver = Receiver::new(1.0, params.clone(), consts);
        let mut pending: Vec<SocialMessage> = Vec::new();
        let mut readings = Vec::new();
        let total = horizon * spr;
        for step in 0..=total {
            let t = plant.state.t;
            if step % spr == 0 {
                fleet.spawn_due(t);
                pending.extend(fleet.emit_due(t, &noise, &landmarks, 0.0));
                pending.sort_by(|a, b| a.t_recv.total_cmp(&b.t_recv).then(a.id.cmp(&b.id)));
                let mut later = Vec::new();
                for msg in pending.drain(..) {
                    if msg.t_recv > t + 1e-9 {
                        later.push(msg);
                        continue;
                    }
                    if let Disposition::Accepted(est) =
                        process_message(&msg, &screen, &landmarks, noise.sigma_gps)
                    {
                        if est.is_fix {
                            let mut rho_init = |x: f64| params.rho_star + plant.rho_at(x);
                            receiver.ingest(&est, &mut rho_init);
                        }
                    }
                }
                pending = later;
                let k = step / spr;
                if k >= 1 {
                    for s in receiver.snapshots(t) {
                        readings.push((k as f64, s.rho_perturb));
                    }
                }
                if step == total {
                    break;
                }
            }
            fleet.advance(&plant, grid.dt);
            plant.step(&[], &quiet);
        }
        readings
    };

    // Noise-free: every settled reconstruction within 1% of the operating
    // density (the perturbation reading is the absolute error).
    let clean = run(NoiseSpec::OFF, SWEEP_SEEDS[0]);
    let settled: Vec<f64> = clean
        .iter()
        .filter(|(t, _)| *t >= 30.0)
        .map(|(_, r)| r.abs() / params.rho_star)
        .collect();
    assert!(settled.len() > 100, "only {} settled readings", settled.len());
    let worst = settled.iter().cloned().fold(0.0, f64::max);
    assert!(worst <= 0.01, "worst relative density error {worst:.4}");

    // The same pipeline under the default noise, reported for context.
    let noisy = run(NoiseSpec::default(), SWEEP_SEEDS[0]);
    let worst_noisy = noisy
        .iter()
        .filter(|(t, _)| *t >= 30.0)
        .map(|(_, r)| r.abs() / params.rho_star)
        .fold(0.0, f64::max);
    println!(
        "[a07] PASS — {} settled readings, worst {:.4}% off the operating \
         density (noise-free); {:.1}% under default noise (unasserted)",
        settled.len(),
        worst * 100.0,
        worst_noisy * 100.0
    );
}

#[test]
fn a08_kernel_march_is_first_order_accurate_and_exact_on_zero_data() {
    let params = TrafficParams::default();
    let consts = LinearizationConstants::from_params(&params).unwrap();
    let l = params.length;

    // The production boundary data is identically zero and the march must
    // keep it that way, bit for bit — gains included.
    let (kernels, gains) = design_physical_gains(l, 200, &consts);
    assert_eq!(kernels.max_abs(), (0.0, 0.0, 0.0));
    assert_eq!(gains.max_abs(), 0.0);

    // Manufactured sourced kernel: with F(0,y) = e^{lam y} the
    // characteristic ODE for H integrates in closed form,
    //   H(x, y0 + m x) = e^{ax} h0(y0) + a e^{lam y0} (e^{bx} - e^{ax}) / (b - a),
    // a = k2/k3, m = k1/k3, b = lam (m - 1). The interpolated march must
    // approach it at first order as the grid refines.
    let lam = 2.0 / l;
    let a = consts.k2 / consts.k3;
    let m = consts.k1 / consts.k3;
    let b = lam * (m - 1.0);
    let h0 = move |y0: f64| (std::f64::consts::PI * y0 / (2.0 * l)).cos();
    let exact = move |x: f64, y: f64| -> f64 {
        let y0 = y - m * x;
        let grow = (a * x).exp();
        grow * h0(y0) + a * (lam * y0).exp() * ((b * x).exp() - grow) / (b - a)
    };
    let mut errors = Vec::new();
    for n in [100usize, 200, 400] {
        let data = KernelBoundaryData {
            f0: Box::new(move |y| (lam * y).exp()),
            g0: Box::new(|_| 0.0),
            h0: Box::new(h0),
            h_diag: Box::new(move |x| exact(x, x)),
        };
        let ks = solve_kernels(l, n, &consts, &data);
        let h = ks.h;
        let mut worst = 0.0f64;
        for i in 0..=n {
            for j in i..=n {
                let (x, y) = (i as f64 * h, j as f64 * h);
                if y >= m * x + 4.0 * h {
                    worst = worst.max((ks.h_at(i, j) - exact(x, y)).abs());
                }
            }
        }
        errors.push(worst);
    }
    let order01 = (errors[0] / errors[1]).log2();
    let order12 = (errors[1] / errors[2]).log2();
    assert!(
        order01 >= 0.9 && order12 >= 0.9,
        "convergence orders {order01:.3}, {order12:.3} from errors {errors:?}"
    );
    println!(
        "[a08] PASS — zero boundary data stays exactly zero; manufactured \
         kernel converges at orders {order01:.2}, {order12:.2}"
    );
}

#[test]
fn a09_sensor_injection_never_weakens_the_contraction_certificate() {
    let params = TrafficParams::default();
    let consts = LinearizationConstants::from_params(&params).unwrap();
    let d_min = params.vehicle_length / params.rho_max;

    // Independent eigenvalue oracle: roots of the characteristic polynomial,
    // lam = (tr +- sqrt(tr^2 - 4 det)) / 2, ascending.
    let char_poly_eigs = |m: [[f64; 2]; 2]| -> [f64; 2] {
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let root = (tr * tr - 4.0 * det).sqrt();
        [(tr - root) / 2.0, (tr + root) / 2.0]
    };

    // Default design point: the production eigensolver must agree with the
    // characteristic polynomial to full precision.
    let q = coupling_matrix(&consts, DEFAULT_GAMMA_SLACK);
    let q_eigs = sym_eigs_2x2(q);
    let q_oracle = char_poly_eigs(q);
    for i in 0..2 {
        assert!(
            (q_eigs[i] - q_oracle[i]).abs() <= 1e-9,
            "eigenvalue {i}: {} vs oracle {}",
            q_eigs[i],
            q_oracle[i]
        );
    }

    // Worked example: leaving half the v-transport damping as slack
    // decouples nothing but lands on round numbers, {-11.2667, -3.7500}.
    let q_worked = coupling_matrix(&consts, consts.k3 / 2.0);
    let worked = sym_eigs_2x2(q_worked);
    let worked_oracle = char_poly_eigs(q_worked);
    for i in 0..2 {
        assert!((worked[i] - worked_oracle[i]).abs() <= 1e-9);
    }
    assert!((worked[0] - (-11.2667)).abs() < 5e-5, "got {}", worked[0]);
    assert!((worked[1] - (-3.7500)).abs() < 5e-5, "got {}", worked[1]);

    // Certificate: at any admissible sensor spacing, injection loads the
    // coupling matrix without ever weakening the certified contraction.
    let design =
        design_social_gains(&consts, DEFAULT_GAMMA_SLACK, DEFAULT_BETA_MAGNITUDE, d_min).unwrap();
    let mut rng = stream(CALIBRATION_SEED, Stream::Certificate);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let d = rng.gen_range(d_min..1000.0);
        let p = injection_matrix(&design.gains, d);
        let loaded = [
            [q[0][0] + p[0][0], q[0][1] + p[0][1]],
            [q[1][0] + p[1][0], q[1][1] + p[1][1]],
        ];
        let lam_max = sym_eigs_2x2(loaded)[1];
        assert!(
            lam_max <= -design.lambda_s + 1e-12,
            "spacing {d:.1} m: lambda_max = {lam_max:.6}, certified {:.6}",
            -design.lambda_s
        );
        worst = worst.max(lam_max);
    }
    println!(
        "[a09] PASS — eigensolver matches the characteristic-polynomial \
         oracle to 1e-9 (worked point {:.4}, {:.4}); 100 random spacings \
         keep lambda_max <= {:.5} (worst {:.5})",
        worked[0], worked[1], -design.lambda_s, worst
    );
}

#[test]
fn a10_fake_screen_meets_its_sensitivity_and_accuracy_targets() {
    let table = LandmarkTable::default_for_length(1000.0);
    let screen = FakeScreen::default();
    let corpus = generate_corpus(2000, 0.5, &table, 42);
    let fakes = corpus
        .iter()
        .filter(|m| m.truth_label == TruthLabel::Fake)
        .count();
    let verdicts = classify_corpus(&corpus, &screen, &table);
    let metrics = evaluate_classifier(corpus.iter().map(|m| m.truth_label).zip(verdicts));
    assert!(
        metrics.sensitivity >= 0.95,
        "sensitivity {:.4} (tp {}, fn {})",
        metrics.sensitivity,
        metrics.tp,
        metrics.fn_
    );
    assert!(
        metrics.accuracy >= 0.85,
        "accuracy {:.4} (fp {}, fn {})",
        metrics.accuracy,
        metrics.fp,
        metrics.fn_
    );

    // The canonical trio: a live position report, a review, a reminiscence.
    // Only the first is usable for positioning, and none of them is spam.
    let live = "I'm near Pho 11 Vietnamese Restaurant";
    let review = "#Beef #Pho @Pho 11 Vietnamese Restaurant is terrific!";
    let memory = "Last night party at pho 11 was a blast";
    assert_eq!(is_relevant(live, &table), Relevance::Relevant);
    assert_eq!(is_relevant(review, &table), Relevance::Irrelevant);
    assert_eq!(is_relevant(memory, &table), Relevance::Irrelevant);
    for text in [live, review, memory] {
        assert!(
            screen.score(text, &table) < screen.threshold,
            "screen flags a genuine message: {text:?}"
        );
    }
    println!(
        "[a10] PASS — sensitivity {:.3}, accuracy {:.3} on n = 2000 \
         ({fakes} fakes); canonical trio screened and triaged as expected",
        metrics.sensitivity, metrics.accuracy
    );
}

#[test]
fn a11_residual_peaks_grow_with_the_attack_amplitude() {
    let th = thresholds_for(ScenarioPreset::Case3);
    let mut peaks: Vec<(f64, f64, f64)> = Vec::new();
    for scale in [0.5, 1.0, 2.0] {
        let mut cfg = ScenarioConfig::for_preset(ScenarioPreset::Case3, SWEEP_SEEDS[0]);
        cfg.thresholds = ThresholdConfig::Explicit {
            r_th_p: th.r_th_p,
            r_th_s: th.r_th_s,
        };
        for attack in &mut cfg.attacks {
            attack.amplitude *= scale;
        }
        let rec = run_scenario(&cfg).expect("scaled run");
        // Peaks are read off the post-onset stretch in which probes are
        // still inside the domain, so the crowdsourced channel has sensors.
        let peak_p = rec
            .times
            .iter()
            .zip(&rec.r_p)
            .filter(|(t, _)| **t >= PRESET_T_START + 10.0)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max);
        let peak_s = rec
            .times
            .iter()
            .zip(&rec.r_s)
            .filter(|(t, _)| **t >= PRESET_T_START + 10.0)
            .filter_map(|(_, r)| *r)
            .fold(0.0, f64::max);
        peaks.push((scale, peak_p, peak_s));
    }
    for pair in peaks.windows(2) {
        let ((s0, p0, q0), (s1, p1, q1)) = (pair[0], pair[1]);
        assert!(p0 <= p1, "roadside peak fell from {p0:.3e} ({s0}x) to {p1:.3e} ({s1}x)");
        assert!(q0 <= q1, "crowdsourced peak fell from {q0:.3} ({s0}x) to {q1:.3} ({s1}x)");
    }
    println!(
        "[a11] PASS — peaks over 0.5x/1x/2x amplitude: roadside \
         {:.2e} / {:.2e} / {:.2e}, crowdsourced {:.1} / {:.1} / {:.1}",
        peaks[0].1, peaks[1].1, peaks[2].1, peaks[0].2, peaks[1].2, peaks[2].2
    );
}

#[test]
fn a12_flagship_run_is_fast_and_byte_reproducible() {
    // The full road-wide scenario exactly as configured out of the box,
    // threshold calibration included.
    let cfg = ScenarioConfig::for_preset(ScenarioPreset::Case3, SWEEP_SEEDS[0]);
    let started = Instant::now();
    let rec1 = run_scenario(&cfg).expect("first run");
    let first = started.elapsed().as_secs_f64();
    let rec2 = run_scenario(&cfg).expect("second run");

    let dir = tempfile::tempdir().expect("tempdir");
    let (d1, d2) = (dir.path().join("one"), dir.path().join("two"));
    emit_report(&rec1, &d1).expect("emit first");
    emit_report(&rec2, &d2).expect("emit second");
    for name in REPORT_FILES {
        let bytes1 = std::fs::read(d1.join(name)).expect(name);
        let bytes2 = std::fs::read(d2.join(name)).expect(name);
        assert_eq!(bytes1, bytes2, "{name} differs between same-seed runs");
    }
    assert!(first < 10.0, "flagship run took {first:.2} s");
    println!(
        "[a12] PASS — full run including calibration in {first:.2} s; all \
         four report files byte-identical across same-seed reruns"
    );
}
