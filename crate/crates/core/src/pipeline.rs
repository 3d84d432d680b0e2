//! Crowdsourced-message pipeline: landmark gazetteer, fake-message screening,
//! relevance filtering, position extraction, synthetic corpus generation and
//! classifier metrics.
//!
//! Messages are processed independently, so batch classification is trivially
//! parallel. The screen is a deterministic feature scorer (URL/shortener
//! tokens, promotion and bait lexicons, unheard-of landmarks, punctuation
//! overload); GPS fixes carry no text and bypass it.

use crate::rng::{stream, Stream};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    /// A text passed screening and relevance but names no landmark we know.
    /// Defensive: the relevance filter requires a known landmark, so this
    /// indicates an upstream logic error rather than bad data.
    #[error("no known landmark found in accepted text: {0:?}")]
    LandmarkNotFound(String),
}

/// Positional uncertainty (m) assigned to landmark-derived text positions:
/// a text like "I'm near X" places the sender within this radius of X.
pub const TEXT_POSITION_SIGMA: f64 = 150.0;

/// Emission-side radius (m): a vehicle only texts about a landmark this close.
pub const TEXT_LANDMARK_RADIUS: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub name: String,
    pub x: f64,
}

/// Known roadside landmarks, the reference for text geolocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkTable {
    entries: Vec<Landmark>,
}

impl LandmarkTable {
    pub fn new(mut entries: Vec<Landmark>) -> Self {
        entries.sort_by(|a, b| a.x.total_cmp(&b.x));
        Self { entries }
    }

    /// Default gazetteer for a road of length `l`: business names spread along
    /// the segment (positions scale with `l`).
    pub fn default_for_length(l: f64) -> Self {
        let named: &[(&str, f64)] = &[
            ("Maple Diner", 0.06),
            ("Pho 11 Vietnamese Restaurant", 0.18),
            ("Sunoco Gas Station", 0.31),
            ("Riverside Mall", 0.42),
            ("Cedar Park", 0.55),
            ("Union Bank", 0.66),
            ("Starlight Cinema", 0.79),
            ("Oak Street Pharmacy", 0.91),
        ];
        Self::new(
            named
                .iter()
                .map(|(name, frac)| Landmark {
                    name: (*name).to_string(),
                    x: frac * l,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[Landmark] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Closest landmark within `radius` of `x`, if any.
    pub fn nearest_within(&self, x: f64, radius: f64) -> Option<&Landmark> {
        self.entries
            .iter()
            .min_by(|a, b| (a.x - x).abs().total_cmp(&(b.x - x).abs()))
            .filter(|lm| (lm.x - x).abs() <= radius)
    }

    /// First landmark whose full name appears in `text` (case-insensitive).
    pub fn contained_in(&self, text: &str) -> Option<&Landmark> {
        let lower = text.to_lowercase();
        self.entries
            .iter()
            .find(|lm| lower.contains(&lm.name.to_lowercase()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthLabel {
    Legit,
    Fake,
}

/// The four corruption families the screen is built to catch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeMode {
    SpamLink,
    TooGoodToBeTrue,
    FakeLandmark,
    FakePromotion,
}

pub const FAKE_MODES: [FakeMode; 4] = [
    FakeMode::SpamLink,
    FakeMode::TooGoodToBeTrue,
    FakeMode::FakeLandmark,
    FakeMode::FakePromotion,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// Noisy position fix (m).
    Gps { x: f64 },
    /// Free-form text, possibly naming a landmark.
    Text { content: String },
}

/// One crowdsourced report. Ground-truth fields are carried for evaluation
/// only; no component of the detection path reads them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialMessage {
    pub id: u64,
    pub vehicle: u32,
    /// Emission time (s).
    pub t_emit: f64,
    /// Delivery time (s); `t_emit + channel delay`.
    pub t_recv: f64,
    pub payload: Payload,
    pub truth_label: TruthLabel,
    /// True sender position at emission (m).
    pub truth_x: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fake_mode: Option<FakeMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenVerdict {
    Legit,
    Fake,
}

/// Deterministic fake-message screen. Each feature contributes a weight; a
/// total at or above `threshold` flags the message. Swap in a different
/// implementation (a learned model, say) by re-implementing [`screen_text`]'s
/// caller; the pipeline only needs the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FakeScreen {
    pub threshold: f64,
}

impl Default for FakeScreen {
    fn default() -> Self {
        Self { threshold: 2.5 }
    }
}

const URL_TOKENS: &[&str] = &["http://", "https://", "www.", "bit.ly", "tinyurl", ".ly/"];
const PROMO_TOKENS: &[&str] = &[
    "free ", "promo", "discount", "giveaway", "coupon", "% off", "offer ends",
];
const BAIT_TOKENS: &[&str] = &[
    "retweet", "rt to win", "follow and", "donate", "dm me", "click here",
];
const TOO_GOOD_TOKENS: &[&str] = &[
    "win a", "winner", "guaranteed", "cash prize", "$$$", "100%", "no strings", "act now",
    "limited time",
];

impl FakeScreen {
    /// Feature score of a text; deterministic and case-insensitive.
    pub fn score(&self, text: &str, table: &LandmarkTable) -> f64 {
        let lower = text.to_lowercase();
        let mut score = 0.0;
        if URL_TOKENS.iter().any(|t| lower.contains(t)) {
            score += 3.0;
        }
        let promo = PROMO_TOKENS.iter().filter(|t| lower.contains(*t)).count() as f64;
        score += (promo * 1.25).min(2.5);
        let bait = BAIT_TOKENS.iter().filter(|t| lower.contains(*t)).count() as f64;
        score += (bait * 2.0).min(4.0);
        let too_good = TOO_GOOD_TOKENS.iter().filter(|t| lower.contains(*t)).count() as f64;
        score += (too_good * 1.5).min(3.0);
        // A present-location claim about a landmark nobody has heard of is the
        // signature of fabricated congestion reports.
        if has_present_location_pattern(&lower) && table.contained_in(text).is_none() {
            score += 2.5;
        }
        if lower.matches('!').count() >= 3 {
            score += 1.0;
        }
        score
    }

    /// Verdict for one message. GPS fixes carry no text and pass through.
    pub fn classify(&self, msg: &SocialMessage, table: &LandmarkTable) -> ScreenVerdict {
        match &msg.payload {
            Payload::Gps { .. } => ScreenVerdict::Legit,
            Payload::Text { content } => {
                if self.score(content, table) >= self.threshold {
                    ScreenVerdict::Fake
                } else {
                    ScreenVerdict::Legit
                }
            }
        }
    }
}

const PRESENT_LOCATION_PATTERNS: &[&str] = &[
    "i'm near",
    "i am near",
    "i'm at",
    "i am at",
    "i'm by",
    "currently at",
    "currently near",
    "just passing",
    "passing by",
    "stuck in traffic",
    "driving past",
    "driving by",
    "crawling past",
    "traffic is",
];

const STALE_TIME_MARKERS: &[&str] = &[
    "last night",
    "yesterday",
    " was ",
    " went ",
    "tomorrow",
    "last week",
    "tonight's",
    " used to ",
];

fn has_present_location_pattern(lower: &str) -> bool {
    PRESENT_LOCATION_PATTERNS.iter().any(|p| lower.contains(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

/// Does the text report the sender's *current* position at a known landmark?
/// Reviews, reminiscences and plans mention landmarks without saying anything
/// about traffic now; they are screened out here.
pub fn is_relevant(text: &str, table: &LandmarkTable) -> Relevance {
    let lower = text.to_lowercase();
    if STALE_TIME_MARKERS.iter().any(|m| lower.contains(m)) {
        return Relevance::Irrelevant;
    }
    if !has_present_location_pattern(&lower) {
        return Relevance::Irrelevant;
    }
    if table.contained_in(text).is_none() {
        return Relevance::Irrelevant;
    }
    Relevance::Relevant
}

/// A geolocated message ready for the density reconstruction stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub vehicle: u32,
    pub t_emit: f64,
    pub x: f64,
    /// 1-sigma position uncertainty (m).
    pub sigma: f64,
    /// True if the estimate is a direct position fix (usable for
    /// finite-difference tracks); landmark-derived positions are too coarse.
    pub is_fix: bool,
}

/// Extracts a position from an accepted message. GPS passes through with the
/// configured fix noise; text maps to the named landmark's position.
pub fn extract_position(
    msg: &SocialMessage,
    table: &LandmarkTable,
    sigma_fix: f64,
) -> Result<PositionEstimate, PipelineError> {
    match &msg.payload {
        Payload::Gps { x } => Ok(PositionEstimate {
            vehicle: msg.vehicle,
            t_emit: msg.t_emit,
            x: *x,
            sigma: sigma_fix,
            is_fix: true,
        }),
        Payload::Text { content } => {
            let lm = table
                .contained_in(content)
                .ok_or_else(|| PipelineError::LandmarkNotFound(content.clone()))?;
            Ok(PositionEstimate {
                vehicle: msg.vehicle,
                t_emit: msg.t_emit,
                x: lm.x,
                sigma: TEXT_POSITION_SIGMA,
                is_fix: false,
            })
        }
    }
}

/// Outcome of the full screening chain for one message.
#[derive(Debug, Clone, PartialEq)]
pub enum Disposition {
    Accepted(PositionEstimate),
    RejectedFake,
    RejectedIrrelevant,
    /// Defensive path: accepted by screening but not geolocatable.
    Unlocatable,
}

/// Runs screen -> relevance -> extraction for one message.
pub fn process_message(
    msg: &SocialMessage,
    screen: &FakeScreen,
    table: &LandmarkTable,
    sigma_fix: f64,
) -> Disposition {
    if screen.classify(msg, table) == ScreenVerdict::Fake {
        return Disposition::RejectedFake;
    }
    if let Payload::Text { content } = &msg.payload {
        if is_relevant(content, table) == Relevance::Irrelevant {
            return Disposition::RejectedIrrelevant;
        }
    }
    match extract_position(msg, table, sigma_fix) {
        Ok(est) => Disposition::Accepted(est),
        Err(_) => Disposition::Unlocatable,
    }
}

// ---------------------------------------------------------------------------
// Text synthesis: used by live probe emission and by the standalone corpus.

const RELEVANT_TEMPLATES: &[&str] = &[
    "I'm near {}",
    "I am at {}",
    "Currently at {}, traffic is thick",
    "Just passing {}",
    "Passing by {} right now",
    "Stuck in traffic near {}",
    "Driving past {}, slow going",
];

const IRRELEVANT_TEMPLATES: &[&str] = &[
    "{} is terrific!",
    "Last night party at {} was a blast",
    "Visited {} yesterday, great place",
    "Can't wait to check out {} tomorrow",
    "The food at {} was amazing last week",
    "Free parking near {} today",
];

const FAKE_LANDMARKS: &[&str] = &[
    "Phantom Diner",
    "Mirage Motel",
    "Golden Duck Casino",
    "Neon Palms Lounge",
    "Crystal Bay Pier",
];

const SPAM_CODES: &[&str] = &["x7k2", "q9ze", "m3rp", "v5tu"];

fn fill(template: &str, name: &str) -> String {
    template.replacen("{}", name, 1)
}

/// A legitimate text about `landmark`; mostly present-location reports with
/// some off-topic chatter mixed in.
pub fn synthesize_legit_text<R: Rng>(rng: &mut R, landmark: &Landmark) -> String {
    if rng.gen_bool(0.75) {
        fill(RELEVANT_TEMPLATES.choose(rng).unwrap(), &landmark.name)
    } else {
        fill(IRRELEVANT_TEMPLATES.choose(rng).unwrap(), &landmark.name)
    }
}

/// A corrupted text in the given mode, anchored to `landmark` where the mode
/// uses a real name.
pub fn synthesize_fake_text<R: Rng>(rng: &mut R, mode: FakeMode, landmark: &Landmark) -> String {
    match mode {
        FakeMode::SpamLink => {
            let code = SPAM_CODES.choose(rng).unwrap();
            let t = [
                format!("I'm near {}, check out http://bit.ly/{}", landmark.name, code),
                format!("Traffic is wild at {} see https://tinyurl.com/{}", landmark.name, code),
            ];
            t.choose(rng).unwrap().clone()
        }
        FakeMode::TooGoodToBeTrue => {
            let t = [
                format!("Win a guaranteed cash prize at {}!!! 100% real, act now", landmark.name),
                format!("$$$ waiting at {} for the first 10 drivers!!! no strings", landmark.name),
            ];
            t.choose(rng).unwrap().clone()
        }
        FakeMode::FakeLandmark => {
            let name = FAKE_LANDMARKS.choose(rng).unwrap();
            let t = [
                format!("I'm near {name}"),
                format!("Just passing {name}"),
                format!("Stuck in traffic near {name}"),
            ];
            t.choose(rng).unwrap().clone()
        }
        FakeMode::FakePromotion => {
            let t = [
                format!("Free coffee giveaway at {}! Retweet to claim your coupon", landmark.name),
                format!("Flash discount at {}! Click here and follow and win", landmark.name),
            ];
            t.choose(rng).unwrap().clone()
        }
    }
}

/// Generates a standalone labeled corpus of text messages: each message is
/// fake with probability `fake_fraction` (independent draws), fakes uniform
/// over the four corruption modes.
pub fn generate_corpus(
    n: usize,
    fake_fraction: f64,
    table: &LandmarkTable,
    seed: u64,
) -> Vec<SocialMessage> {
    assert!((0.0..=1.0).contains(&fake_fraction));
    assert!(!table.is_empty(), "corpus needs at least one landmark");
    let mut rng = stream(seed, Stream::Corpus);
    (0..n)
        .map(|i| {
            let landmark = table.entries().choose(&mut rng).unwrap().clone();
            let fake = rng.gen_bool(fake_fraction);
            let (content, label, mode) = if fake {
                let mode = FAKE_MODES[rng.gen_range(0..FAKE_MODES.len())];
                (
                    synthesize_fake_text(&mut rng, mode, &landmark),
                    TruthLabel::Fake,
                    Some(mode),
                )
            } else {
                (
                    synthesize_legit_text(&mut rng, &landmark),
                    TruthLabel::Legit,
                    None,
                )
            };
            SocialMessage {
                id: i as u64,
                vehicle: 0,
                t_emit: 0.0,
                t_recv: 0.0,
                payload: Payload::Text { content },
                truth_label: label,
                truth_x: landmark.x,
                fake_mode: mode,
            }
        })
        .collect()
}

/// Confusion counts and derived rates; the positive class is `Fake`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
}

impl ClassifierMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let total = tp + fp + tn + fn_;
        Self {
            tp,
            fp,
            tn,
            fn_,
            accuracy: if total == 0 {
                0.0
            } else {
                (tp + tn) as f64 / total as f64
            },
            sensitivity: if tp + fn_ == 0 {
                0.0
            } else {
                tp as f64 / (tp + fn_) as f64
            },
        }
    }
}

/// Scores verdicts against ground-truth labels.
pub fn evaluate_classifier(
    labeled: impl IntoIterator<Item = (TruthLabel, ScreenVerdict)>,
) -> ClassifierMetrics {
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (truth, verdict) in labeled {
        match (truth, verdict) {
            (TruthLabel::Fake, ScreenVerdict::Fake) => tp += 1,
            (TruthLabel::Legit, ScreenVerdict::Fake) => fp += 1,
            (TruthLabel::Legit, ScreenVerdict::Legit) => tn += 1,
            (TruthLabel::Fake, ScreenVerdict::Legit) => fn_ += 1,
        }
    }
    ClassifierMetrics::from_counts(tp, fp, tn, fn_)
}

/// Classifies a whole corpus; parallel when the `parallel` feature is on.
pub fn classify_corpus(
    corpus: &[SocialMessage],
    screen: &FakeScreen,
    table: &LandmarkTable,
) -> Vec<ScreenVerdict> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        corpus
            .par_iter()
            .map(|m| screen.classify(m, table))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        corpus.iter().map(|m| screen.classify(m, table)).collect()
    }
}
