//! One seeded run from an empty directory to the suite comparison:
//! generate a desk-profile corpus, train the surrogate, score it on held-out
//! rooms and compare estimates with simulations over the bundled suite.

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_records, split, DatasetRecord, Profile};
use crate::error::SimError;
use crate::estimator::EstimatorConfig;
use crate::harness::compare::{compare_environments, ComparisonReport, Suite};
use crate::mlp::{fit_surrogate, samples, score_below_threshold, MlpModel, ScoreReport, SurrogateConfig, TrainReport};
use crate::sim::SimConfig;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    pub count: usize,
    pub holdout: usize,
    pub threshold: f64,
    pub surrogate: SurrogateConfig,
    /// Skip the suite comparison (corpus and surrogate only).
    pub skip_suite: bool,
}

impl DemoConfig {
    pub fn new(seed: u64) -> Self {
        DemoConfig {
            seed,
            count: 3000,
            holdout: 500,
            threshold: 0.1,
            surrogate: SurrogateConfig::desk(seed),
            skip_suite: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub final_learning_rate: f64,
    pub stopped_early: bool,
}

impl TrainSummary {
    pub fn of(r: &TrainReport) -> Self {
        let best_valid_loss = match r.best_epoch {
            0 => f64::NAN,
            e => r.valid_loss[e - 1],
        };
        TrainSummary {
            epochs_run: r.train_loss.len(),
            best_epoch: r.best_epoch,
            best_valid_loss,
            final_learning_rate: r.learning_rates.last().copied().unwrap_or(0.0),
            stopped_early: r.stopped_early,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub version: u32,
    pub seed: u64,
    pub rooms: usize,
    pub censored: usize,
    pub train_rows: usize,
    pub holdout_rows: usize,
    pub training: TrainSummary,
    pub score: ScoreReport,
    pub comparison: Option<ComparisonReport>,
}

/// Generates the corpus and runs [`run_demo_on`].
pub fn run_demo(cfg: &DemoConfig, sim: &SimConfig) -> Result<(DemoReport, MlpModel), SimError> {
    let records = generate_records(cfg.count, cfg.seed, Profile::Desk, sim)?;
    run_demo_on(&records, cfg, sim)
}

pub fn run_demo_on(
    records: &[DatasetRecord],
    cfg: &DemoConfig,
    sim: &SimConfig,
) -> Result<(DemoReport, MlpModel), SimError> {
    if cfg.holdout >= records.len() {
        return Err(SimError::InvalidConfig(format!(
            "holdout {} leaves no training rows out of {}",
            cfg.holdout,
            records.len()
        )));
    }
    let (train, test) = split(records, cfg.holdout);
    let (model, report) = fit_surrogate(&train, &cfg.surrogate)?;
    let score = score_below_threshold(&model, &samples(&test, cfg.surrogate.train.target), cfg.threshold)?;
    let comparison = if cfg.skip_suite {
        None
    } else {
        Some(compare_environments(&Suite::bundled()?.cases, &model, sim, &EstimatorConfig::default())?)
    };
    let report = DemoReport {
        version: REPORT_VERSION,
        seed: cfg.seed,
        rooms: records.len(),
        censored: records.iter().filter(|r| r.metrics.censored).count(),
        train_rows: train.len(),
        holdout_rows: test.len(),
        training: TrainSummary::of(&report),
        score,
        comparison,
    };
    Ok((report, model))
}

/// Plain-text table of a demo report.
pub fn render_demo(r: &DemoReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "seed {}  rooms {} ({} censored)  train {}  held out {}\n",
        r.seed, r.rooms, r.censored, r.train_rows, r.holdout_rows
    ));
    out.push_str(&format!(
        "training: {} epochs, best {} (valid mse {:.3}), final lr {:e}\n",
        r.training.epochs_run, r.training.best_epoch, r.training.best_valid_loss, r.training.final_learning_rate
    ));
    out.push_str(&format!(
        "surrogate: {:.1}% of {} held-out rooms below {:.0}% error (mean {:.1}%)\n",
        100.0 * r.score.fraction,
        r.score.scored,
        100.0 * r.score.threshold,
        100.0 * r.score.mean_relative_error
    ));
    if let Some(c) = &r.comparison {
        out.push_str(&render_comparison(c));
    }
    out
}

/// Plain-text table of a suite comparison.
pub fn render_comparison(c: &ComparisonReport) -> String {
    let mut out = format!(
        "{:<14} {:<13} {:>5} {:>6} {:>9} {:>9} {:>8}\n",
        "environment", "variant", "rooms", "agents", "sim tt", "est tt", "err"
    );
    for r in &c.cases {
        let err = r.err.map(|e| format!("{:+.1}%", 100.0 * e)).unwrap_or_else(|| "jam".into());
        out.push_str(&format!(
            "{:<14} {:<13} {:>5} {:>6} {:>9.2} {:>9.2} {:>8}\n",
            r.name, r.variant, r.rooms, r.agents, r.simulated_tt, r.estimated_tt, err
        ));
    }
    for (v, m) in &c.by_variant {
        out.push_str(&format!("mean |err| {v}: {:.1}%\n", 100.0 * m));
    }
    out.push_str(&format!("mean |err|: {:.1}% (std {:.1}%)\n", 100.0 * c.mean_abs_err, 100.0 * c.std_abs_err));
    out
}
