//! Residual comparator: thresholds per filter, calibrated from nominal runs,
//! and the fused attack verdict.
//!
//! A filter is "high" when its residual meets or exceeds its threshold; the
//! verdict is `Attack` as soon as either filter is high. The crowdsourced
//! residual is intermittent (no fresh probe data, no residual), and an
//! unavailable residual never raises its flag.

use serde::{Deserialize, Serialize};

/// Default multiplicative margin on top of the worst nominal residual.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.2;

/// Floor applied to the nominal worst case before the margin, so noise-free
/// calibration still produces a positive threshold.
pub const CALIBRATION_FLOOR: f64 = 1e-12;

/// Per-filter detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Roadside (outlet innovation) residual threshold.
    pub r_th_p: f64,
    /// Crowdsourced residual threshold.
    pub r_th_s: f64,
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.r_th_p > 0.0) || !(self.r_th_s > 0.0) {
            return Err(format!(
                "thresholds must be positive (got r_th_p = {}, r_th_s = {})",
                self.r_th_p, self.r_th_s
            ));
        }
        Ok(())
    }
}

/// Fused verdict for one comparison instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoAttack,
    Attack,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::NoAttack => "no_attack",
            Verdict::Attack => "attack",
        })
    }
}

/// One comparator evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub t: f64,
    pub verdict: Verdict,
    pub physical_high: bool,
    pub social_high: bool,
    pub social_available: bool,
}

/// Compares both residuals against their thresholds. Equality counts as an
/// exceedance; a missing crowdsourced residual cannot raise its flag.
pub fn decide(t: f64, r_p: f64, r_s: Option<f64>, th: &Thresholds) -> Decision {
    let physical_high = r_p >= th.r_th_p;
    let social_high = match r_s {
        Some(r) => r >= th.r_th_s,
        None => false,
    };
    Decision {
        t,
        verdict: if physical_high || social_high {
            Verdict::Attack
        } else {
            Verdict::NoAttack
        },
        physical_high,
        social_high,
        social_available: r_s.is_some(),
    }
}

/// Calibrates one filter's threshold from nominal residual traces: the
/// largest residual seen across all traces, floored at
/// [`CALIBRATION_FLOOR`], times the safety factor.
pub fn calibrate_threshold<'a, I>(nominal_traces: I, safety_factor: f64) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    assert!(safety_factor >= 1.0, "safety factor must be at least 1");
    let mut worst = 0.0f64;
    for trace in nominal_traces {
        for &r in trace {
            worst = worst.max(r);
        }
    }
    safety_factor * worst.max(CALIBRATION_FLOOR)
}
