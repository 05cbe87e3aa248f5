//! Bounded-confidence coupling between issues: after a network settles on an
//! issue, each agent moves its next anchor toward the settled opinions of
//! agents within confidence distance `d`, with attraction gain `h`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::check_assumption2;
use crate::issue_sequence::{classify_settled, IssueOperator, IssueSummary, SequenceOptions, SequenceOutcome};
use crate::network::InfluenceNetwork;
use crate::single_issue::{limit_influence_matrix, SUPPORT_TOL};

/// Opinion gaps this close to the confidence bound get a warning: which side
/// of the strict comparison they fall on is numerically fragile.
pub const TIE_WARN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    /// Confidence bound: agents listen across gaps strictly smaller than this.
    pub d: f64,
    /// Attraction gain toward each confidant.
    pub h: f64,
}

impl ConfidenceConfig {
    /// Range of gains for which the common-neighbor threshold `n/2 + 1/(4h)`
    /// can be met at all while every row of the attraction matrix stays
    /// positive: `1/(2n) < h < 1/(n-1)`.
    pub fn gain_window(n: usize) -> (f64, f64) {
        let lower = 1.0 / (2.0 * n as f64);
        let upper = if n > 1 { 1.0 / (n as f64 - 1.0) } else { f64::INFINITY };
        (lower, upper)
    }

    /// Checks the hard constraints (`d > 0`, `h > 0`, `1 - (n-1)h > 0`) and
    /// returns advisory warnings for gains outside the workable window.
    pub fn validate(&self, n: usize) -> Result<Vec<String>> {
        if !self.d.is_finite() || self.d <= 0.0 {
            return Err(Error::Validation {
                field: "confidence.d".into(),
                reason: format!("confidence bound must be positive, got {}", self.d),
            });
        }
        if !self.h.is_finite() || self.h <= 0.0 || 1.0 - (n as f64 - 1.0) * self.h <= 0.0 {
            return Err(Error::GainOutOfRange { h: self.h, n });
        }
        let (lower, upper) = Self::gain_window(n);
        let mut warnings = Vec::new();
        if self.h <= lower {
            warnings.push(format!(
                "gain h = {} is at or below 1/(2n) = {lower}; the common-neighbor \
                 threshold n/2 + 1/(4h) >= n cannot be met by any pair",
                self.h
            ));
        } else if self.h >= upper {
            warnings.push(format!(
                "gain h = {} is at or above 1/(n-1) = {upper}",
                self.h
            ));
        }
        Ok(warnings)
    }
}

/// Confidence neighborhoods of a settled profile: `j` is a confidant of `i`
/// iff `|y_i - y_j| < d`, strictly. Every agent is its own confidant.
pub fn confidence_neighbors(y: &DVector<f64>, d: f64) -> Vec<Vec<usize>> {
    let n = y.len();
    (0..n)
        .map(|i| (0..n).filter(|&j| (y[i] - y[j]).abs() < d).collect())
        .collect()
}

/// Warnings for gaps within `TIE_WARN_TOL` of the bound.
pub fn tie_warnings(y: &DVector<f64>, d: f64) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            let gap = (y[i] - y[j]).abs();
            if (gap - d).abs() <= TIE_WARN_TOL {
                out.push(format!(
                    "gap |y_{i} - y_{j}| = {gap} sits within {TIE_WARN_TOL} of the bound {d}"
                ));
            }
        }
    }
    out
}

/// Row-stochastic attraction matrix: `h` toward each confidant, the rest on
/// the diagonal.
pub fn build_h(neighbors: &[Vec<usize>], h: f64) -> Result<DMatrix<f64>> {
    let n = neighbors.len();
    if !h.is_finite() || h <= 0.0 || 1.0 - (n as f64 - 1.0) * h <= 0.0 {
        return Err(Error::GainOutOfRange { h, n });
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, nbrs) in neighbors.iter().enumerate() {
        let others = nbrs.iter().filter(|&&j| j != i).count();
        m[(i, i)] = 1.0 - h * others as f64;
        for &j in nbrs {
            if j != i {
                m[(i, j)] = h;
            }
        }
    }
    Ok(m)
}

/// Undirected confidence edges `{i, j}`, `i < j`, without self-loops.
pub fn edges_of(neighbors: &[Vec<usize>]) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            if j > i {
                edges.insert((i, j));
            }
        }
    }
    edges
}

/// Everything one confidence-coupled issue hop produces.
#[derive(Debug, Clone)]
pub struct ConfidenceStep {
    /// Settled opinions of the issue just finished.
    pub settled: DVector<f64>,
    pub neighbors: Vec<Vec<usize>>,
    pub h_matrix: DMatrix<f64>,
    pub edges: BTreeSet<(usize, usize)>,
    /// Initial opinions for the next issue.
    pub x_next: DVector<f64>,
}

fn step_with(op: &IssueOperator, x: &DVector<f64>, cfg: &ConfidenceConfig) -> Result<ConfidenceStep> {
    let settled = op.apply(x);
    let neighbors = confidence_neighbors(&settled, cfg.d);
    let h_matrix = build_h(&neighbors, cfg.h)?;
    let edges = edges_of(&neighbors);
    let x_next = &h_matrix * &settled;
    Ok(ConfidenceStep {
        settled,
        neighbors,
        h_matrix,
        edges,
        x_next,
    })
}

/// One confidence-coupled hop from the current issue's initial opinions.
pub fn bc_issue_step(
    net: &InfluenceNetwork,
    x: &DVector<f64>,
    cfg: &ConfidenceConfig,
) -> Result<ConfidenceStep> {
    if x.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: format!("x has {} entries, expected {}", x.len(), net.n()),
        });
    }
    cfg.validate(net.n())?;
    step_with(&IssueOperator::new(net)?, x, cfg)
}

/// Structural condition for confidence edges to survive issue hops.
///
/// With `y` the settled profile of the first issue, `N_i` its confidence
/// neighborhoods and `S_j` the support of row `j` of the limit operator, it
/// requires, for every confidence pair `i != j`:
/// on the support side, every `l` in `S_j` of a non-fully-stubborn confidant
/// `j` must lie in `N_i` (and in `N_j` too unless `i` is fully stubborn);
/// on the counting side, confidence pairs need strictly more than `n/2`
/// common confidants when both are fully stubborn and strictly more than
/// `n/2 + 1/(4h)` otherwise.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption3Report {
    pub holds: bool,
    /// Triples `(i, j, l)`: `l` is influential for confidant `j` of `i` but
    /// falls outside the required neighborhood(s).
    pub support_violations: Vec<(usize, usize, usize)>,
    /// Pairs `(i, j)` with too few common confidants.
    pub count_violations: Vec<(usize, usize)>,
}

pub fn check_assumption3(
    net: &InfluenceNetwork,
    x00: &DVector<f64>,
    cfg: &ConfidenceConfig,
) -> Result<Assumption3Report> {
    if x00.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: format!("x00 has {} entries, expected {}", x00.len(), net.n()),
        });
    }
    cfg.validate(net.n())?;
    if !check_assumption2(net).holds {
        return Err(Error::SingularSystem);
    }
    let n = net.n();
    let limit = limit_influence_matrix(net, 1e-12, 1_000_000)?;
    let y = &limit.psi * x00;
    let neighbors = confidence_neighbors(&y, cfg.d);
    let in_nbhd: Vec<Vec<bool>> = neighbors
        .iter()
        .map(|nbrs| {
            let mut mask = vec![false; n];
            for &j in nbrs {
                mask[j] = true;
            }
            mask
        })
        .collect();
    let support_rows: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&l| limit.psi[(j, l)] > SUPPORT_TOL)
                .collect()
        })
        .collect();
    let fully: Vec<bool> = (0..n).map(|i| net.xi()[i] == 0.0).collect();

    let mut support_violations = Vec::new();
    let mut count_violations = Vec::new();
    let threshold_stubborn_pair = n as f64 / 2.0;
    let threshold_mixed = n as f64 / 2.0 + 1.0 / (4.0 * cfg.h);
    for i in 0..n {
        for &j in &neighbors[i] {
            if j == i {
                // A self-gap is zero and constrains nothing.
                continue;
            }
            if !fully[j] {
                for &l in &support_rows[j] {
                    let ok = if fully[i] {
                        in_nbhd[i][l]
                    } else {
                        in_nbhd[j][l] && in_nbhd[i][l]
                    };
                    if !ok {
                        support_violations.push((i, j, l));
                    }
                }
            }
            let applies = if fully[i] { fully[j] } else { true };
            if applies {
                let common = neighbors[i]
                    .iter()
                    .filter(|&&l| in_nbhd[j][l])
                    .count() as f64;
                let threshold = if fully[i] && fully[j] {
                    threshold_stubborn_pair
                } else {
                    threshold_mixed
                };
                if !(common > threshold) {
                    count_violations.push((i, j));
                }
            }
        }
    }
    Ok(Assumption3Report {
        holds: support_violations.is_empty() && count_violations.is_empty(),
        support_violations,
        count_violations,
    })
}

/// The three structural conditions under which confidence-coupled issue
/// sequences reach consensus.
#[derive(Debug, Clone, Serialize)]
pub struct ConsensusConditions {
    pub consensus: bool,
    /// Some partially stubborn agent reaches all others of its class through
    /// non-fully-stubborn intermediates.
    pub rooted: bool,
    /// The confidence graph of the first settled profile is connected on the
    /// fully stubborn set. Vacuous with at most one fully stubborn agent.
    pub stubborn_connected: bool,
    /// Some confidence edge joins a partially and a fully stubborn agent.
    /// Vacuous without fully stubborn agents.
    pub bridged: bool,
    pub root: Option<usize>,
}

pub fn check_theorem3(
    net: &InfluenceNetwork,
    x00: &DVector<f64>,
    cfg: &ConfidenceConfig,
) -> Result<ConsensusConditions> {
    if x00.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: format!("x00 has {} entries, expected {}", x00.len(), net.n()),
        });
    }
    cfg.validate(net.n())?;
    let op = IssueOperator::new(net)?;
    let y = op.apply(x00);
    let partition = net.partition();
    let vp = &partition.partially_stubborn;
    let vf = &partition.fully_stubborn;

    let (rooted, root) = if vp.len() <= 1 {
        (true, vp.first().copied())
    } else {
        let graph = net.graph();
        let open = partition.open_mask(net.n());
        let mut found = None;
        for &p in vp {
            let reach = graph.restricted_reachable(p, &open);
            if vp.iter().all(|&q| q == p || reach.binary_search(&q).is_ok()) {
                found = Some(p);
                break;
            }
        }
        (found.is_some(), found)
    };

    let stubborn_connected = if vf.len() <= 1 {
        true
    } else {
        let mut seen = vec![false; net.n()];
        let mut queue = std::collections::VecDeque::from([vf[0]]);
        seen[vf[0]] = true;
        while let Some(i) = queue.pop_front() {
            for &j in vf {
                if !seen[j] && (y[i] - y[j]).abs() < cfg.d {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        vf.iter().all(|&j| seen[j])
    };

    let bridged = vf.is_empty()
        || vp
            .iter()
            .any(|&i| vf.iter().any(|&j| (y[i] - y[j]).abs() < cfg.d));

    Ok(ConsensusConditions {
        consensus: rooted && stubborn_connected && bridged,
        rooted,
        stubborn_connected,
        bridged,
        root,
    })
}

/// Issue-by-issue log entry: the confidence edge set changed at this issue.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeLogEntry {
    pub issue: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct BcSequenceResult {
    /// Recorded per-issue initial opinions, paired with the issue index.
    pub initial_opinions: Vec<(usize, DVector<f64>)>,
    pub issues_run: usize,
    pub settled: bool,
    pub outcome: SequenceOutcome,
    /// Edge sets at every issue where they changed; issue 0 is always
    /// present and later issues inherit the last listed set.
    pub edge_log: Vec<EdgeLogEntry>,
    /// True while every confidence edge of issue 0 is present at every
    /// later issue. Checked on every hop, not just at the end.
    pub preservation_ok: bool,
    /// First `(issue, edge)` at which an initial edge went missing.
    pub first_lost_edge: Option<(usize, (usize, usize))>,
    pub summaries: Vec<IssueSummary>,
}

/// Runs the confidence-coupled issue sequence until the anchors stop moving
/// or the budget runs out, monitoring edge preservation throughout.
pub fn simulate_bc_sequence(
    net: &InfluenceNetwork,
    x00: &DVector<f64>,
    cfg: &ConfidenceConfig,
    opts: &SequenceOptions,
) -> Result<BcSequenceResult> {
    if x00.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: format!("x00 has {} entries, expected {}", x00.len(), net.n()),
        });
    }
    cfg.validate(net.n())?;
    let op = IssueOperator::new(net)?;
    let mut x = x00.clone();
    let mut recorded = vec![(0, x.clone())];
    let mut summaries = vec![IssueSummary {
        issue: 0,
        spread: x.max() - x.min(),
        mean: x.mean(),
    }];
    let mut edge_log: Vec<EdgeLogEntry> = Vec::new();
    let mut baseline: Option<BTreeSet<(usize, usize)>> = None;
    let mut preservation_ok = true;
    let mut first_lost_edge = None;
    let mut settled = false;
    let mut issues_run = 0;

    for s in 0..opts.max_issues {
        let step = step_with(&op, &x, cfg)?;
        match &baseline {
            None => baseline = Some(step.edges.clone()),
            Some(base) => {
                if preservation_ok {
                    if let Some(&lost) = base.difference(&step.edges).next() {
                        preservation_ok = false;
                        first_lost_edge = Some((s, lost));
                    }
                }
            }
        }
        if edge_log.last().map(|e| &e.edges) != Some(&step.edges) {
            edge_log.push(EdgeLogEntry {
                issue: s,
                edges: step.edges.clone(),
            });
        }
        let diff = (&step.x_next - &x).amax();
        x = step.x_next;
        issues_run = s + 1;
        summaries.push(IssueSummary {
            issue: s + 1,
            spread: x.max() - x.min(),
            mean: x.mean(),
        });
        if opts.record_full {
            recorded.push((s + 1, x.clone()));
        }
        if diff <= crate::issue_sequence::SETTLE_TOL {
            settled = true;
            break;
        }
    }
    if !opts.record_full {
        recorded.push((issues_run, x.clone()));
    }
    let outcome = if settled {
        classify_settled(&x, opts.consensus_tol, opts.cluster_tol)
    } else {
        SequenceOutcome::BudgetExhausted
    };
    Ok(BcSequenceResult {
        initial_opinions: recorded,
        issues_run,
        settled,
        outcome,
        edge_log,
        preservation_ok,
        first_lost_edge,
        summaries,
    })
}
