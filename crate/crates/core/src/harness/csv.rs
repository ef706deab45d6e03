use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::RunOutput;
use super::HarnessError;
use crate::metrics::{HybridPhi, MetricsRecord};

const BASE_COLUMNS: [&str; 7] = [
    "round",
    "comm_messages",
    "train_loss",
    "test_acc",
    "stat_gap",
    "phi_y",
    "phi_v",
];
const HYBRID_COLUMNS: [&str; 4] = ["phi_theta", "phi_x", "phi_z", "phi_u"];

pub fn csv_header(hybrid: bool) -> String {
    let mut cols: Vec<&str> = BASE_COLUMNS.to_vec();
    if hybrid {
        cols.extend(HYBRID_COLUMNS);
    }
    cols.join(",")
}

/// Full CSV text, LF line endings, floats in `{:.16e}`.
pub fn records_to_csv(records: &[MetricsRecord], hybrid: bool) -> String {
    let mut out = csv_header(hybrid);
    out.push('\n');
    for r in records {
        let acc = r.test_acc.unwrap_or(f64::NAN);
        write!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.round, r.comm_messages, r.train_loss, acc, r.stat_gap, r.phi_y, r.phi_v
        )
        .unwrap();
        if hybrid {
            let h = r.hybrid.unwrap_or(HybridPhi {
                theta: f64::NAN,
                x: f64::NAN,
                z: f64::NAN,
                u: f64::NAN,
            });
            write!(
                out,
                ",{:.16e},{:.16e},{:.16e},{:.16e}",
                h.theta, h.x, h.z, h.u
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`records_to_csv`]. A `NaN` accuracy reads back as `None`.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?;
    let hybrid = if header == csv_header(false) {
        false
    } else if header == csv_header(true) {
        true
    } else {
        return Err(format!("unexpected header: {header}"));
    };
    let width = if hybrid { 11 } else { 7 };
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(format!(
                    "line {}: {} cells, expected {width}",
                    k + 2,
                    cells.len()
                ));
            }
            let f = |i: usize| -> Result<f64, String> {
                cells[i]
                    .parse::<f64>()
                    .map_err(|e| format!("line {}: column {}: {e}", k + 2, i + 1))
            };
            let u = |i: usize| -> Result<u64, String> {
                cells[i]
                    .parse::<u64>()
                    .map_err(|e| format!("line {}: column {}: {e}", k + 2, i + 1))
            };
            let acc = f(3)?;
            Ok(MetricsRecord {
                round: u(0)? as usize,
                comm_messages: u(1)?,
                train_loss: f(2)?,
                test_acc: (!acc.is_nan()).then_some(acc),
                stat_gap: f(4)?,
                phi_y: f(5)?,
                phi_v: f(6)?,
                hybrid: if hybrid {
                    Some(HybridPhi {
                        theta: f(7)?,
                        x: f(8)?,
                        z: f(9)?,
                        u: f(10)?,
                    })
                } else {
                    None
                },
            })
        })
        .collect()
}

/// `run.csv` becomes `run.trial<k>.csv`.
pub fn trial_csv_path(path: &Path, trial: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    path.with_file_name(format!("{stem}.trial{trial}.csv"))
}

/// `run.csv` becomes `run.config.toml`.
pub fn config_echo_path(path: &Path) -> PathBuf {
    path.with_extension("config.toml")
}

/// Averaged CSV, the config echo and optionally one CSV per trial.
pub fn write_outputs(out: &RunOutput, path: &Path, per_trial: bool) -> Result<(), HarnessError> {
    let write = |p: PathBuf, text: String| {
        std::fs::write(&p, text).map_err(|source| HarnessError::Io { path: p, source })
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let hybrid = out.is_hybrid();
    write(path.to_path_buf(), records_to_csv(&out.records, hybrid))?;
    write(config_echo_path(path), out.config_echo.clone())?;
    if per_trial {
        for (k, t) in out.trials.iter().enumerate() {
            write(trial_csv_path(path, k), records_to_csv(t, hybrid))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(hybrid: bool) -> Vec<MetricsRecord> {
        vec![
            MetricsRecord {
                round: 0,
                comm_messages: 0,
                train_loss: std::f64::consts::LN_10,
                test_acc: None,
                stat_gap: 1.0 / 3.0,
                phi_y: 0.0,
                phi_v: 1e-300,
                hybrid: hybrid.then_some(HybridPhi {
                    theta: 0.1,
                    x: 0.2,
                    z: 0.3,
                    u: 0.4,
                }),
            },
            MetricsRecord {
                round: 5,
                comm_messages: 120,
                train_loss: 0.7,
                test_acc: Some(0.875),
                stat_gap: 3.5e-7,
                phi_y: 1.25,
                phi_v: std::f64::consts::PI,
                hybrid: hybrid.then_some(HybridPhi {
                    theta: 1.0,
                    x: 2.0,
                    z: 3.0,
                    u: 4.0,
                }),
            },
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        for hybrid in [false, true] {
            let recs = sample(hybrid);
            let text = records_to_csv(&recs, hybrid);
            assert!(!text.contains('\r'));
            assert_eq!(parse_csv(&text).unwrap(), recs);
        }
    }

    #[test]
    fn missing_accuracy_is_nan() {
        let text = records_to_csv(&sample(false), false);
        let first = text.lines().nth(1).unwrap();
        assert_eq!(first.split(',').nth(3), Some("NaN"));
    }

    #[test]
    fn header_columns() {
        assert_eq!(
            csv_header(false),
            "round,comm_messages,train_loss,test_acc,stat_gap,phi_y,phi_v"
        );
        assert!(csv_header(true).ends_with(",phi_theta,phi_x,phi_z,phi_u"));
    }

    #[test]
    fn sibling_paths() {
        let p = Path::new("/tmp/out/run.csv");
        assert_eq!(trial_csv_path(p, 2), Path::new("/tmp/out/run.trial2.csv"));
        assert_eq!(config_echo_path(p), Path::new("/tmp/out/run.config.toml"));
    }
}
