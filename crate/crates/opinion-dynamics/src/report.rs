//! Analysis reports: every structural check with its witness, the spectrum,
//! limit-operator diagnostics, and the outcome of running the scenario's
//! dynamics. Serialization is deterministic; all collections are ordered and
//! nothing depends on wall-clock time, so identical inputs give identical
//! bytes.

use serde::Serialize;

use crate::bounded_confidence::{
    check_assumption3, check_theorem3, simulate_bc_sequence, tie_warnings, Assumption3Report,
    ConsensusConditions, EdgeLogEntry,
};
use crate::error::{Error, Result};
use crate::graph::{check_assumption1, check_assumption2, Assumption1Report, Assumption2Report};
use crate::issue_sequence::{
    check_corollary1, check_theorem2, predicted_psi_support, simulate_issue_sequence,
    ClusterVerdict, ConsensusVerdict, IssueOperator, IssueSummary, SequenceOptions,
    SequenceOutcome,
};
use crate::network::AgentPartition;
use crate::oracle::MAX_DENSE_N;
use crate::scenario::{
    sequence_rows, single_issue_rows, Budgets, Mode, Scenario, Tolerances, TrajectoryRow,
};
use crate::single_issue::{
    check_convergence_spectral, limit_influence_matrix, predicted_zero_columns,
    simulate_single_issue, LimitMethod, SimulateOptions,
};

/// A check result that either carries its witness or says which precondition
/// kept it from applying.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict<T: Serialize> {
    Checked {
        #[serde(flatten)]
        result: T,
    },
    NotApplicable {
        precondition: String,
    },
}

impl<T: Serialize> Verdict<T> {
    pub fn checked(result: T) -> Self {
        Verdict::Checked { result }
    }

    pub fn not_applicable(precondition: impl Into<String>) -> Self {
        Verdict::NotApplicable {
            precondition: precondition.into(),
        }
    }

    pub fn as_checked(&self) -> Option<&T> {
        match self {
            Verdict::Checked { result } => Some(result),
            Verdict::NotApplicable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComplexPair {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    /// True when 1 is the only eigenvalue on the unit circle.
    pub converges: bool,
    pub spectral_radius: f64,
    pub eigenvalues: Vec<ComplexPair>,
    pub unit_circle: Vec<ComplexPair>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiSummary {
    pub method: LimitMethod,
    pub iterations: usize,
    /// Sign pattern of the computed limit against the path-based prediction.
    /// Only meaningful when every independent component is anchored.
    pub support_matches_prediction: Option<bool>,
    /// Largest entry in the columns predicted to vanish.
    pub max_zero_column_residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    BudgetExhausted,
    Oscillation,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunSummary {
    Single {
        converged: bool,
        iterations: usize,
        stop: StopReason,
        final_opinions: Vec<f64>,
        spread: f64,
        mean: f64,
    },
    Sequence {
        issues_run: usize,
        settled: bool,
        outcome: SequenceOutcome,
        summaries: Vec<IssueSummary>,
    },
    Bounded {
        issues_run: usize,
        settled: bool,
        outcome: SequenceOutcome,
        preservation_ok: bool,
        first_lost_edge: Option<(usize, (usize, usize))>,
        edge_log: Vec<EdgeLogEntry>,
        summaries: Vec<IssueSummary>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub mode: Mode,
    pub partition: AgentPartition,
    pub budgets: Budgets,
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
    pub assumption1: Verdict<Assumption1Report>,
    pub assumption2: Verdict<Assumption2Report>,
    pub spectral: Verdict<SpectralSummary>,
    pub psi: Verdict<PsiSummary>,
    pub predicted_zero_columns: Vec<usize>,
    pub theorem2: Verdict<ConsensusVerdict>,
    pub corollary1: Verdict<ClusterVerdict>,
    pub assumption3: Verdict<Assumption3Report>,
    pub theorem3: Verdict<ConsensusConditions>,
    pub run: Verdict<RunSummary>,
    pub warnings: Vec<String>,
}

/// Report plus the recorded states backing it, ready for CSV emission.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub rows: Vec<TrajectoryRow>,
}

fn pairs(values: &[nalgebra::Complex<f64>]) -> Vec<ComplexPair> {
    values.iter().map(|c| ComplexPair { re: c.re, im: c.im }).collect()
}

const LIMIT_TOL: f64 = 1e-13;
const LIMIT_MAX_ITER: usize = 1_000_000;

fn precondition_of(err: Error) -> Result<String> {
    match err {
        Error::PreconditionViolated { precondition, .. } => Ok(precondition),
        Error::SingularSystem => {
            Ok("some independent component has no agent with susceptibility below 1".into())
        }
        other => Err(other),
    }
}

pub fn analyze(scenario: &Scenario) -> Result<Analysis> {
    analyze_as(scenario, scenario.mode)
}

/// Runs the full set of checks, then the dynamics in the given mode (the
/// subcommands `simulate`/`sequence`/`bounded` override the scenario's own
/// mode).
pub fn analyze_as(scenario: &Scenario, mode: Mode) -> Result<Analysis> {
    let net = &scenario.network;
    let n = net.n();
    let mut warnings = Vec::new();

    let a1 = check_assumption1(net);
    let a2 = check_assumption2(net);
    let a1_holds = a1.holds;
    let a2_holds = a2.holds;

    let spectral = if n <= MAX_DENSE_N {
        let verdict = check_convergence_spectral(net)?;
        Verdict::checked(SpectralSummary {
            converges: verdict.converges,
            spectral_radius: verdict.report.spectral_radius,
            eigenvalues: pairs(&verdict.report.eigenvalues),
            unit_circle: pairs(&verdict.report.unit_circle),
        })
    } else {
        Verdict::not_applicable(format!("dense spectrum is only computed for n <= {MAX_DENSE_N}"))
    };

    let zero_columns = predicted_zero_columns(net);
    let psi = if a1_holds || a2_holds {
        let limit = limit_influence_matrix(net, LIMIT_TOL, LIMIT_MAX_ITER)?;
        let support_matches = if a2_holds {
            Some(limit.support() == predicted_psi_support(net)?)
        } else {
            None
        };
        let residual = zero_columns
            .iter()
            .map(|&j| limit.psi.column(j).amax())
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        Verdict::checked(PsiSummary {
            method: limit.method,
            iterations: limit.iterations,
            support_matches_prediction: support_matches,
            max_zero_column_residual: residual,
        })
    } else {
        Verdict::not_applicable(
            "limit influence operator requires an aperiodicity or anchoring condition",
        )
    };

    let theorem2 = match check_theorem2(net) {
        Ok(v) => Verdict::checked(v),
        Err(e) => Verdict::not_applicable(precondition_of(e)?),
    };
    let corollary1 = match check_corollary1(net) {
        Ok(v) => Verdict::checked(v),
        Err(e) => Verdict::not_applicable(precondition_of(e)?),
    };

    let (assumption3, theorem3) = match (mode, &scenario.confidence) {
        (Mode::Bounded, Some(cfg)) => {
            warnings.extend(cfg.validate(n)?);
            let a3 = match check_assumption3(net, &scenario.x0, cfg) {
                Ok(v) => Verdict::checked(v),
                Err(e) => Verdict::not_applicable(precondition_of(e)?),
            };
            let t3 = match check_theorem3(net, &scenario.x0, cfg) {
                Ok(v) => Verdict::checked(v),
                Err(e) => Verdict::not_applicable(precondition_of(e)?),
            };
            if a2_holds {
                let y0 = IssueOperator::new(net)?.apply(&scenario.x0);
                warnings.extend(tie_warnings(&y0, cfg.d));
            }
            (a3, t3)
        }
        _ => {
            let why = "only checked for bounded-confidence scenarios";
            (Verdict::not_applicable(why), Verdict::not_applicable(why))
        }
    };

    let (run, rows) = run_dynamics(scenario, mode, &spectral, &mut warnings)?;

    let report = AnalysisReport {
        n,
        mode,
        partition: net.partition(),
        budgets: scenario.budgets,
        tolerances: scenario.tolerances,
        seed: scenario.seed,
        assumption1: Verdict::checked(a1),
        assumption2: Verdict::checked(a2),
        spectral,
        psi,
        predicted_zero_columns: zero_columns,
        theorem2,
        corollary1,
        assumption3,
        theorem3,
        run,
        warnings,
    };
    Ok(Analysis { report, rows })
}

fn run_dynamics(
    scenario: &Scenario,
    mode: Mode,
    spectral: &Verdict<SpectralSummary>,
    warnings: &mut Vec<String>,
) -> Result<(Verdict<RunSummary>, Vec<TrajectoryRow>)> {
    let net = &scenario.network;
    match mode {
        Mode::Single => {
            let opts = SimulateOptions {
                tol: scenario.tolerances.step_tol,
                max_iter: scenario.budgets.max_iter,
                record_full: scenario.record_full,
            };
            let trajectory = simulate_single_issue(net, &scenario.x0, &opts)?;
            let last = &trajectory.states.last().expect("at least the initial state").1;
            let stop = if trajectory.converged {
                StopReason::Converged
            } else {
                match spectral.as_checked() {
                    Some(s) if !s.converges => StopReason::Oscillation,
                    Some(_) => StopReason::BudgetExhausted,
                    None => {
                        warnings.push(
                            "no spectrum available to tell oscillation from slow convergence"
                                .into(),
                        );
                        StopReason::BudgetExhausted
                    }
                }
            };
            let summary = RunSummary::Single {
                converged: trajectory.converged,
                iterations: trajectory.iterations,
                stop,
                final_opinions: last.iter().copied().collect(),
                spread: last.max() - last.min(),
                mean: last.mean(),
            };
            let rows = single_issue_rows(&trajectory.states);
            Ok((Verdict::checked(summary), rows))
        }
        Mode::Sequence => {
            let opts = sequence_options(scenario);
            match simulate_issue_sequence(net, &scenario.x0, &opts) {
                Ok(result) => {
                    let rows = sequence_rows(&result.initial_opinions);
                    let summary = RunSummary::Sequence {
                        issues_run: result.issues_run,
                        settled: result.settled,
                        outcome: result.outcome,
                        summaries: result.summaries,
                    };
                    Ok((Verdict::checked(summary), rows))
                }
                Err(Error::SingularSystem) => Ok((
                    Verdict::not_applicable(precondition_of(Error::SingularSystem)?),
                    Vec::new(),
                )),
                Err(e) => Err(e),
            }
        }
        Mode::Bounded => {
            let cfg = scenario.confidence.as_ref().ok_or_else(|| Error::Validation {
                field: "confidence".into(),
                reason: "bounded-confidence run requires a confidence block".into(),
            })?;
            let opts = sequence_options(scenario);
            match simulate_bc_sequence(net, &scenario.x0, cfg, &opts) {
                Ok(result) => {
                    let rows = sequence_rows(&result.initial_opinions);
                    let summary = RunSummary::Bounded {
                        issues_run: result.issues_run,
                        settled: result.settled,
                        outcome: result.outcome,
                        preservation_ok: result.preservation_ok,
                        first_lost_edge: result.first_lost_edge,
                        edge_log: result.edge_log,
                        summaries: result.summaries,
                    };
                    Ok((Verdict::checked(summary), rows))
                }
                Err(Error::SingularSystem) => Ok((
                    Verdict::not_applicable(precondition_of(Error::SingularSystem)?),
                    Vec::new(),
                )),
                Err(e) => Err(e),
            }
        }
    }
}

fn sequence_options(scenario: &Scenario) -> SequenceOptions {
    SequenceOptions {
        max_issues: scenario.budgets.max_issues,
        consensus_tol: scenario.tolerances.consensus_tol,
        cluster_tol: scenario.tolerances.cluster_tol,
        record_full: scenario.record_full,
    }
}

/// Pretty JSON plus a trailing newline; the byte-level shape every report
/// consumer (and the determinism check) relies on.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    const SWAP: &str = r#"{
        "network": {"w": [[0.0, 1.0], [1.0, 0.0]], "xi": [0.5, 0.5]},
        "x0": [0.0, 1.0],
        "mode": "sequence"
    }"#;

    #[test]
    fn sequence_report_reaches_consensus() {
        let sc = parse_scenario(SWAP, "inline").unwrap();
        let analysis = analyze(&sc).unwrap();
        let report = &analysis.report;
        assert!(report.assumption1.as_checked().unwrap().holds);
        assert!(report.assumption2.as_checked().unwrap().holds);
        assert!(report.spectral.as_checked().unwrap().converges);
        let t2 = report.theorem2.as_checked().unwrap();
        assert!(t2.consensus);
        match report.run.as_checked().unwrap() {
            RunSummary::Sequence { outcome, .. } => match outcome {
                SequenceOutcome::Consensus { value } => assert!((value - 0.5).abs() < 1e-9),
                other => panic!("expected consensus, got {other:?}"),
            },
            other => panic!("expected sequence run, got {other:?}"),
        }
        // Recorded rows are issue-indexed with k pinned to 0.
        assert!(analysis.rows.iter().all(|r| r.k == 0));
    }

    #[test]
    fn oscillating_scenario_reports_data_not_errors() {
        let text = SWAP
            .replace("[0.5, 0.5]", "[1.0, 1.0]")
            .replace("\"sequence\"", "\"single\"");
        let sc = parse_scenario(&text, "inline").unwrap();
        let analysis = analyze(&sc).unwrap();
        let report = &analysis.report;
        assert!(!report.assumption1.as_checked().unwrap().holds);
        assert!(!report.spectral.as_checked().unwrap().converges);
        assert!(report.psi.as_checked().is_none());
        match report.run.as_checked().unwrap() {
            RunSummary::Single { converged, stop, .. } => {
                assert!(!converged);
                assert!(matches!(stop, StopReason::Oscillation));
            }
            other => panic!("expected single run, got {other:?}"),
        }
    }

    #[test]
    fn reports_serialize_deterministically() {
        let sc = parse_scenario(SWAP, "inline").unwrap();
        let a = to_json_bytes(&analyze(&sc).unwrap().report);
        let b = to_json_bytes(&analyze(&sc).unwrap().report);
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains("\"status\": \"checked\""));
        assert!(text.contains("\"status\": \"not_applicable\""));
    }

    #[test]
    fn sequence_without_anchors_is_marked_not_applicable() {
        let text = SWAP.replace("[0.5, 0.5]", "[1.0, 1.0]");
        let sc = parse_scenario(&text, "inline").unwrap();
        let analysis = analyze(&sc).unwrap();
        assert!(analysis.report.run.as_checked().is_none());
        assert!(analysis.rows.is_empty());
    }
}
