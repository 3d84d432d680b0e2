//! Report emission: turns a [`RunRecord`](crate::scenario::RunRecord) into a
//! fixed set of files in an output directory.
//!
//! Layout and schemas (column order is part of the contract):
//!
//! * `residuals.csv` — `t,r_p,r_s,r_p_raw,r_s_raw`: windowed (comparator
//!   operative) and instantaneous residual traces; crowdsourced cells are
//!   empty while the channel is unavailable.
//! * `decisions.csv` — `t,r_p,r_s,physical_high,social_high,verdict`: the
//!   decision timeline, with exactly the residual values the comparator saw.
//! * `fields.csv` — `t,x,w,v,w_physical,v_physical,w_social,v_social`: plant
//!   and both filter states on the grid, every `output_stride` seconds.
//! * `summary.json` — scalars of record (thresholds, latency, verdict
//!   counts, message tallies, gain design) plus the resolved configuration.
//!
//! Every byte is a pure function of the run record, which is itself a pure
//! function of the configuration, so re-running a scenario reproduces each
//! file exactly. Wall-clock time deliberately stays out of these files; it
//! lives only on the in-memory record.

use crate::comparator::Thresholds;
use crate::config::ScenarioConfig;
use crate::scenario::{MessageStats, RunRecord, WhichFilter};
use crate::social_filter::GainDesign;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// File names written by [`emit_report`], in emission order.
pub const REPORT_FILES: [&str; 4] = [
    "residuals.csv",
    "decisions.csv",
    "fields.csv",
    "summary.json",
];

fn push_opt(line: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        let _ = write!(line, "{v}");
    }
}

/// Residual traces, windowed and raw.
pub fn residuals_csv(rec: &RunRecord) -> String {
    let mut out = String::from("t,r_p,r_s,r_p_raw,r_s_raw\n");
    for i in 0..rec.times.len() {
        let _ = write!(out, "{},{},", rec.times[i], rec.r_p[i]);
        push_opt(&mut out, rec.r_s[i]);
        let _ = write!(out, ",{},", rec.r_p_raw[i]);
        push_opt(&mut out, rec.r_s_raw[i]);
        out.push('\n');
    }
    out
}

/// Decision timeline with the operative residuals.
pub fn decisions_csv(rec: &RunRecord) -> String {
    let mut out = String::from("t,r_p,r_s,physical_high,social_high,verdict\n");
    for (i, d) in rec.decisions.iter().enumerate() {
        debug_assert_eq!(d.t, rec.times[i]);
        let _ = write!(out, "{},{},", d.t, rec.r_p[i]);
        push_opt(&mut out, rec.r_s[i]);
        let _ = writeln!(
            out,
            ",{},{},{}",
            d.physical_high, d.social_high, d.verdict
        );
    }
    out
}

/// Strided plant and filter state snapshots.
pub fn fields_csv(rec: &RunRecord) -> String {
    let mut out = String::from("t,x,w,v,w_physical,v_physical,w_social,v_social\n");
    for f in &rec.fields {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f.t, f.x, f.w, f.v, f.w_physical, f.v_physical, f.w_social, f.v_social
        );
    }
    out
}

/// Scalars of record for one run. Field order is the JSON layout.
#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    preset: Option<&'static str>,
    t_end: f64,
    thresholds: Thresholds,
    /// Earliest configured attack onset (s); absent for nominal runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    attack_onset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection_latency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    which_filter_fired: Option<WhichFilter>,
    n_reports: usize,
    attack_decisions: usize,
    r_p_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_s_max: Option<f64>,
    social_availability: f64,
    messages: MessageStats,
    social_design: GainDesign,
    physical_gain_max: f64,
    config: &'a ScenarioConfig,
}

/// Summary JSON body (pretty-printed, trailing newline).
pub fn summary_json(rec: &RunRecord) -> String {
    let attack_onset = rec
        .config
        .attacks
        .iter()
        .map(|a| a.t_start)
        .fold(f64::INFINITY, f64::min);
    let summary = RunSummary {
        seed: rec.config.seed,
        preset: rec.config.preset.map(|p| p.name()),
        t_end: rec.config.t_end,
        thresholds: rec.thresholds,
        attack_onset: attack_onset.is_finite().then_some(attack_onset),
        detection_latency: rec.detection_latency,
        which_filter_fired: rec.which_filter_fired,
        n_reports: rec.times.len(),
        attack_decisions: rec
            .decisions
            .iter()
            .filter(|d| d.verdict == crate::comparator::Verdict::Attack)
            .count(),
        r_p_max: rec.r_p.iter().copied().fold(0.0, f64::max),
        r_s_max: rec
            .r_s
            .iter()
            .flatten()
            .copied()
            .fold(None, |acc: Option<f64>, r| {
                Some(acc.map_or(r, |a| a.max(r)))
            }),
        social_availability: rec.social_availability,
        messages: rec.messages,
        social_design: rec.social_design,
        physical_gain_max: rec.physical_gain_max,
        config: &rec.config,
    };
    let mut body = serde_json::to_string_pretty(&summary).expect("summary serializes");
    body.push('\n');
    body
}

/// Writes all four report files into `dir`, creating it if needed.
pub fn emit_report(rec: &RunRecord, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("residuals.csv"), residuals_csv(rec))?;
    fs::write(dir.join("decisions.csv"), decisions_csv(rec))?;
    fs::write(dir.join("fields.csv"), fields_csv(rec))?;
    fs::write(dir.join("summary.json"), summary_json(rec))?;
    Ok(())
}
