use std::fmt::Write as _;

use super::config::{ExperimentConfig, SweepAxis};
use super::run::{run_experiment, RunOutput, ThresholdMetric};
use super::HarnessError;

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub config: ExperimentConfig,
    pub output: RunOutput,
}

/// Derive one config per value, validate them all, then run each in order.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<Vec<SweepPoint>, HarnessError> {
    let configs = values
        .iter()
        .map(|v| {
            let cfg = base.with_axis(axis, v)?;
            cfg.validate()?;
            Ok((v.clone(), cfg))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    configs
        .into_iter()
        .map(|(value, config)| {
            let output = run_experiment(&config)?;
            Ok(SweepPoint {
                value,
                config,
                output,
            })
        })
        .collect()
}

/// One row per sweep point with the final metrics and rounds to threshold.
pub fn comparison_table(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut thresholds: Vec<(ThresholdMetric, f64)> = Vec::new();
    for p in points {
        for t in &p.output.thresholds {
            if !thresholds.contains(&(t.metric, t.value)) {
                thresholds.push((t.metric, t.value));
            }
        }
    }
    let mut out = format!("{axis},lambda_w,rounds,comm_messages,train_loss,test_acc,stat_gap");
    for (metric, value) in &thresholds {
        match metric {
            ThresholdMetric::TestAccuracy => write!(out, ",rounds_to_acc_{value}").unwrap(),
            ThresholdMetric::StationarityGap => write!(out, ",rounds_to_gap_{value:e}").unwrap(),
        }
    }
    out.push('\n');
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for p in points {
        let last = p.output.final_record();
        write!(
            out,
            "{},{:.6e},{},{},{},{},{}",
            p.value,
            p.output.lambda_w,
            opt(last.map(|r| r.round.to_string())),
            opt(last.map(|r| r.comm_messages.to_string())),
            opt(last.map(|r| format!("{:.6e}", r.train_loss))),
            opt(last.and_then(|r| r.test_acc).map(|a| format!("{a:.4}"))),
            opt(last.map(|r| format!("{:.6e}", r.stat_gap))),
        )
        .unwrap();
        for &(metric, value) in &thresholds {
            let hit = p.output.rounds_to(metric, value);
            write!(out, ",{}", opt(hit.map(|r| r.to_string()))).unwrap();
        }
        out.push('\n');
    }
    out
}
