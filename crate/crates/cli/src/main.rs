//! Command-line front end: run scenarios, inspect gain designs, calibrate
//! detection thresholds, exercise the message screen on synthetic corpora,
//! and summarize previously emitted run reports.
//!
//! Every subcommand is deterministic in its inputs; two invocations with the
//! same configuration produce byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use duofilter::comparator::DEFAULT_SAFETY_FACTOR;
use duofilter::config::{parse_config_file, ScenarioConfig, ThresholdConfig};
use duofilter::model::{LinearizationConstants, TrafficParams};
use duofilter::physical_filter::design_physical_gains;
use duofilter::pipeline::{
    classify_corpus, evaluate_classifier, generate_corpus, FakeScreen, LandmarkTable,
};
use duofilter::report::{emit_report, REPORT_FILES};
use duofilter::scenario::{calibrate_thresholds, run_scenario, RunRecord};
use duofilter::social_filter::design_social_gains;

#[derive(Parser, Debug)]
#[command(name = "duofilter")]
#[command(about = "Freeway traffic simulator with dual-channel cyber-attack detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario end to end and write its report files.
    Simulate {
        /// Scenario configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the gain design a configuration implies, as JSON.
    DesignGains {
        /// Scenario configuration file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Calibrate detection thresholds from nominal runs; prints JSON.
    Calibrate {
        /// Scenario configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Number of attack-free calibration runs.
        #[arg(long)]
        runs: usize,
    },
    /// Generate a labeled synthetic corpus, classify it, print the metrics.
    ClassifyCorpus {
        /// Corpus size.
        #[arg(long)]
        n: usize,
        /// Fraction of fabricated messages.
        #[arg(long, default_value_t = 0.5)]
        fake_fraction: f64,
        /// Corpus seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also dump the labeled corpus as JSON-lines to this file.
        #[arg(long)]
        corpus_out: Option<PathBuf>,
    },
    /// Summarize a report directory and cross-check its files.
    Report {
        /// Directory previously written by `simulate`.
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::DesignGains { config } => design_gains(&config),
        Command::Calibrate { config, runs } => calibrate(&config, runs),
        Command::ClassifyCorpus {
            n,
            fake_fraction,
            seed,
            corpus_out,
        } => classify(n, fake_fraction, seed, corpus_out.as_deref()),
        Command::Report { dir } => report(&dir),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config_file(path).with_context(|| format!("loading {}", path.display()))
}

fn simulate(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let rec = run_scenario(&cfg).context("running scenario")?;
    emit_report(&rec, out)
        .with_context(|| format!("writing report to {}", out.display()))?;
    println!(
        "wrote {} to {}",
        REPORT_FILES.join(", "),
        out.display()
    );
    print_outcome(&rec);
    Ok(())
}

fn print_outcome(rec: &RunRecord) {
    println!(
        "thresholds: r_th_p = {:.6e}, r_th_s = {:.6e}",
        rec.thresholds.r_th_p, rec.thresholds.r_th_s
    );
    match (rec.detection_latency, rec.which_filter_fired) {
        (Some(latency), Some(which)) => println!(
            "detection: attack flagged {latency} s after onset (first filter: {})",
            match which {
                duofilter::scenario::WhichFilter::Physical => "physical",
                duofilter::scenario::WhichFilter::Social => "social",
                duofilter::scenario::WhichFilter::Both => "both",
            }
        ),
        _ => println!("detection: no attack flagged"),
    }
}

fn design_gains(config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let consts = LinearizationConstants::from_params(&cfg.params)?;
    let social = design_social_gains(
        &consts,
        cfg.gains.gamma_slack,
        cfg.gains.beta_magnitude,
        cfg.gains.d_min,
    )?;
    let (kernels, curves) = design_physical_gains(cfg.params.length, cfg.gains.kernel_n, &consts);
    let (f_max, g_max, h_max) = kernels.max_abs();
    let out = serde_json::json!({
        "social": social,
        "physical": {
            "kernel_n": cfg.gains.kernel_n,
            "kernel_max_abs": { "f": f_max, "g": g_max, "h": h_max },
            "gain_max_abs": curves.max_abs(),
        },
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn calibrate(config: &Path, runs: usize) -> Result<()> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let cfg = load_config(config)?;
    let safety_factor = match cfg.thresholds {
        ThresholdConfig::Calibrate { safety_factor, .. } => safety_factor,
        ThresholdConfig::Explicit { .. } => DEFAULT_SAFETY_FACTOR,
    };
    let thresholds = calibrate_thresholds(&cfg, runs, safety_factor)?;
    println!("{}", serde_json::to_string_pretty(&thresholds)?);
    Ok(())
}

fn classify(n: usize, fake_fraction: f64, seed: u64, corpus_out: Option<&Path>) -> Result<()> {
    if n == 0 {
        bail!("--n must be at least 1");
    }
    if !(0.0..=1.0).contains(&fake_fraction) {
        bail!("--fake-fraction must lie in [0, 1], got {fake_fraction}");
    }
    let table = LandmarkTable::default_for_length(TrafficParams::default().length);
    let corpus = generate_corpus(n, fake_fraction, &table, seed);
    if let Some(path) = corpus_out {
        let mut file = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        for msg in &corpus {
            serde_json::to_writer(&mut file, msg)?;
            file.write_all(b"\n")?;
        }
        println!("wrote {} messages to {}", corpus.len(), path.display());
    }
    let verdicts = classify_corpus(&corpus, &FakeScreen::default(), &table);
    let metrics = evaluate_classifier(corpus.iter().map(|m| m.truth_label).zip(verdicts));
    println!("tp,fp,tn,fn,accuracy,sensitivity");
    println!(
        "{},{},{},{},{:.4},{:.4}",
        metrics.tp, metrics.fp, metrics.tn, metrics.fn_, metrics.accuracy, metrics.sensitivity
    );
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let summary_path = dir.join("summary.json");
    let text = fs::read_to_string(&summary_path)
        .with_context(|| format!("reading {}", summary_path.display()))?;
    let summary: serde_json::Value =
        serde_json::from_str(&text).context("parsing summary.json")?;

    let preset = summary["preset"].as_str().unwrap_or("custom");
    println!(
        "run: preset {preset}, seed {}, horizon {} s, {} reporting instants",
        summary["seed"], summary["t_end"], summary["n_reports"]
    );
    println!(
        "residual maxima: r_p {}, r_s {}; crowdsourced coverage {}",
        summary["r_p_max"],
        summary
            .get("r_s_max")
            .map_or("n/a".to_string(), |v| v.to_string()),
        summary["social_availability"]
    );

    // Cross-check: the summary's latency must match a recount from the
    // decision timeline.
    let decisions_path = dir.join("decisions.csv");
    let decisions = fs::read_to_string(&decisions_path)
        .with_context(|| format!("reading {}", decisions_path.display()))?;
    let onset = summary.get("attack_onset").and_then(|v| v.as_f64());
    let first_flag = decisions
        .lines()
        .skip(1)
        .filter_map(|line| {
            let mut cols = line.split(',');
            let t: f64 = cols.next()?.parse().ok()?;
            let verdict = cols.nth(4)?;
            (verdict == "attack").then_some(t)
        })
        .find(|&t| onset.is_none_or(|o| t >= o));
    let recount = match (onset, first_flag) {
        (Some(o), Some(t)) => Some(t - o),
        _ => None,
    };
    let stated = summary.get("detection_latency").and_then(|v| v.as_f64());
    if stated != recount {
        bail!(
            "summary latency {stated:?} disagrees with the decision timeline ({recount:?})"
        );
    }
    match stated {
        Some(latency) => println!(
            "detection: attack flagged {latency} s after onset (cross-checked against {})",
            decisions_path.display()
        ),
        None => println!("detection: no attack flagged"),
    }
    Ok(())
}
