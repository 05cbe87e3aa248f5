//! Scenario files and trajectory serialization.
//!
//! A scenario is a single JSON document naming the network, the initial
//! opinions, the dynamics mode, and optional budgets and tolerances.
//! Trajectories go out as CSV with one row per recorded state; values are
//! printed with 17 significant digits so a round trip is bit-faithful.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bounded_confidence::ConfidenceConfig;
use crate::error::{Error, Result};
use crate::issue_sequence::{DEFAULT_CLUSTER_TOL, DEFAULT_CONSENSUS_TOL, DEFAULT_MAX_ISSUES};
use crate::network::InfluenceNetwork;
use crate::single_issue::{DEFAULT_MAX_ITER, DEFAULT_STEP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    Sequence,
    Bounded,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    pub max_iter: usize,
    pub max_issues: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_iter: DEFAULT_MAX_ITER,
            max_issues: DEFAULT_MAX_ISSUES,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub step_tol: f64,
    pub consensus_tol: f64,
    pub cluster_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            step_tol: DEFAULT_STEP_TOL,
            consensus_tol: DEFAULT_CONSENSUS_TOL,
            cluster_tol: DEFAULT_CLUSTER_TOL,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    w: Vec<Vec<f64>>,
    xi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    network: RawNetwork,
    x0: Vec<f64>,
    mode: Mode,
    confidence: Option<ConfidenceConfig>,
    #[serde(default)]
    budgets: Budgets,
    #[serde(default)]
    tolerances: Tolerances,
    seed: Option<u64>,
}

/// A fully validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: InfluenceNetwork,
    pub x0: DVector<f64>,
    pub mode: Mode,
    pub confidence: Option<ConfidenceConfig>,
    pub budgets: Budgets,
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
    /// Record every state instead of summaries; set from the command line,
    /// not the file.
    pub record_full: bool,
}

fn positive(field: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Validation {
            field: field.into(),
            reason: format!("must be positive and finite, got {value}"),
        });
    }
    Ok(())
}

impl Scenario {
    fn from_file(raw: ScenarioFile) -> Result<Scenario> {
        let network =
            InfluenceNetwork::new(raw.network.w, raw.network.xi).map_err(|e| Error::Validation {
                field: "network".into(),
                reason: e.to_string(),
            })?;
        if raw.x0.len() != network.n() {
            return Err(Error::Validation {
                field: "x0".into(),
                reason: format!("has {} entries, network has {}", raw.x0.len(), network.n()),
            });
        }
        if raw.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                field: "x0".into(),
                reason: "entries must be finite".into(),
            });
        }
        if raw.mode == Mode::Bounded && raw.confidence.is_none() {
            return Err(Error::Validation {
                field: "confidence".into(),
                reason: "mode \"bounded\" requires a confidence block".into(),
            });
        }
        if let Some(cfg) = &raw.confidence {
            cfg.validate(network.n())?;
        }
        positive("tolerances.step_tol", raw.tolerances.step_tol)?;
        positive("tolerances.consensus_tol", raw.tolerances.consensus_tol)?;
        positive("tolerances.cluster_tol", raw.tolerances.cluster_tol)?;
        if raw.budgets.max_iter == 0 || raw.budgets.max_issues == 0 {
            return Err(Error::Validation {
                field: "budgets".into(),
                reason: "budgets must be at least 1".into(),
            });
        }
        Ok(Scenario {
            x0: DVector::from_vec(raw.x0),
            network,
            mode: raw.mode,
            confidence: raw.confidence,
            budgets: raw.budgets,
            tolerances: raw.tolerances,
            seed: raw.seed,
            record_full: false,
        })
    }
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let raw: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Scenario::from_file(raw)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::Validation {
        field: "scenario".into(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// One recorded state: which issue it belongs to and the within-issue step.
/// Single-issue runs put everything under issue 0; issue sequences record
/// initial opinions, so their step column stays 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub issue: usize,
    pub k: usize,
    pub state: Vec<f64>,
}

pub fn single_issue_rows(states: &[(usize, DVector<f64>)]) -> Vec<TrajectoryRow> {
    states
        .iter()
        .map(|(k, x)| TrajectoryRow {
            issue: 0,
            k: *k,
            state: x.iter().copied().collect(),
        })
        .collect()
}

pub fn sequence_rows(initial_opinions: &[(usize, DVector<f64>)]) -> Vec<TrajectoryRow> {
    initial_opinions
        .iter()
        .map(|(s, x)| TrajectoryRow {
            issue: *s,
            k: 0,
            state: x.iter().copied().collect(),
        })
        .collect()
}

/// Writes bytes to `path` through a sibling temp file and a rename, so
/// readers never observe a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn trajectory_csv(rows: &[TrajectoryRow], n: usize) -> String {
    let mut out = String::from("issue,k");
    for i in 0..n {
        out.push_str(&format!(",agent_{i}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{},{}", row.issue, row.k));
        for v in &row.state {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(rows: &[TrajectoryRow], n: usize, path: &Path) -> Result<()> {
    atomic_write(path, trajectory_csv(rows, n).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let text = fs::read_to_string(path)?;
    parse_trajectory(&text, &path.display().to_string())
}

/// Parses trajectory CSV text; `origin` names the source in errors.
pub fn parse_trajectory(text: &str, origin: &str) -> Result<Vec<TrajectoryRow>> {
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, 1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "issue" || cols[1] != "k" {
        return Err(parse_err(1, 1, "expected header issue,k,agent_0,...".into()));
    }
    let n = cols.len() - 2;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 2 {
            return Err(parse_err(
                idx + 1,
                1,
                format!("expected {} fields, got {}", n + 2, fields.len()),
            ));
        }
        let issue = fields[0]
            .parse()
            .map_err(|e| parse_err(idx + 1, 1, format!("bad issue index: {e}")))?;
        let k = fields[1]
            .parse()
            .map_err(|e| parse_err(idx + 1, 2, format!("bad step index: {e}")))?;
        let mut state = Vec::with_capacity(n);
        for (j, field) in fields[2..].iter().enumerate() {
            state.push(
                field
                    .parse()
                    .map_err(|e| parse_err(idx + 1, j + 3, format!("bad value: {e}")))?,
            );
        }
        rows.push(TrajectoryRow { issue, k, state });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "network": {"w": [[0.0, 1.0], [1.0, 0.0]], "xi": [0.5, 0.5]},
        "x0": [0.0, 1.0],
        "mode": "single"
    }"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let sc = parse_scenario(MINIMAL, "inline").unwrap();
        assert_eq!(sc.mode, Mode::Single);
        assert_eq!(sc.network.n(), 2);
        assert_eq!(sc.budgets.max_iter, DEFAULT_MAX_ITER);
        assert_eq!(sc.budgets.max_issues, DEFAULT_MAX_ISSUES);
        assert_eq!(sc.tolerances.step_tol, DEFAULT_STEP_TOL);
        assert!(sc.seed.is_none());
    }

    #[test]
    fn bad_row_sum_names_the_network_field() {
        let text = r#"{
            "network": {"w": [[0.55, 0.5], [1.0, 0.0]], "xi": [0.5, 0.5]},
            "x0": [0.0, 1.0],
            "mode": "single"
        }"#;
        match parse_scenario(text, "inline") {
            Err(Error::Validation { field, reason }) => {
                assert_eq!(field, "network");
                assert!(reason.contains("row 0"), "{reason}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn bounded_mode_requires_confidence() {
        let text = MINIMAL.replace("\"single\"", "\"bounded\"");
        match parse_scenario(&text, "inline") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "confidence"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_parse_errors() {
        let text = MINIMAL.replace("\"mode\"", "\"extra\": 1, \"mode\"");
        match parse_scenario(&text, "inline") {
            Err(Error::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn x0_length_is_checked() {
        let text = MINIMAL.replace("\"x0\": [0.0, 1.0]", "\"x0\": [0.0, 1.0, 2.0]");
        match parse_scenario(&text, "inline") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "x0"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn partial_tolerance_block_keeps_other_defaults() {
        let text = MINIMAL.replace(
            "\"mode\": \"single\"",
            "\"mode\": \"single\", \"tolerances\": {\"step_tol\": 1e-9}",
        );
        let sc = parse_scenario(&text, "inline").unwrap();
        assert_eq!(sc.tolerances.step_tol, 1e-9);
        assert_eq!(sc.tolerances.consensus_tol, DEFAULT_CONSENSUS_TOL);
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let csv = trajectory_csv(&[], 3);
        assert_eq!(csv, "issue,k,agent_0,agent_1,agent_2\n");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            TrajectoryRow {
                issue: 0,
                k: 0,
                state: vec![0.1, -2.0 / 3.0],
            },
            TrajectoryRow {
                issue: 0,
                k: 7,
                state: vec![f64::MIN_POSITIVE, 1.0 + f64::EPSILON],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory(&rows, 2, &path).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        // No temp files left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
