//! Cross-issue dynamics: the opinions a network settles on for one issue
//! become the anchors with which it meets the next, so the sequence of
//! initial opinions evolves by the limit operator of the within-issue loop.

use nalgebra::{DMatrix, DVector};
use nalgebra::linalg::LU;
use nalgebra::Dyn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::check_assumption2;
use crate::network::InfluenceNetwork;
use crate::single_issue::{self, SimulateOptions};

/// Successive issue anchors closer than this settle the sequence.
pub const SETTLE_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ISSUES: usize = 10_000;
pub const DEFAULT_CONSENSUS_TOL: f64 = 1e-6;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;

/// Per-agent inertia weights `zeta = 1 - xi`: the cost an agent pays for
/// leaving its anchor, against `1 - zeta` for disagreeing with neighbors.
#[derive(Debug, Clone)]
pub struct CognitiveInertia {
    pub zeta: DVector<f64>,
}

impl CognitiveInertia {
    pub fn of(net: &InfluenceNetwork) -> Self {
        CognitiveInertia {
            zeta: net.anchor(),
        }
    }
}

fn check_dims(net: &InfluenceNetwork, v: &DVector<f64>, name: &str) -> Result<()> {
    if v.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: format!("{name} has {} entries, expected {}", v.len(), net.n()),
        });
    }
    Ok(())
}

/// Per-agent cost at opinion profile `x` given the previous issue's settled
/// opinions as anchors: `zeta_i (x_i - a_i)^2 + (1 - zeta_i) sum_j w_ij (x_i - x_j)^2`.
pub fn evaluate_cost(
    net: &InfluenceNetwork,
    anchors: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dims(net, anchors, "anchors")?;
    check_dims(net, x, "x")?;
    let inertia = CognitiveInertia::of(net).zeta;
    let w = net.w();
    Ok(DVector::from_fn(net.n(), |i, _| {
        let anchor_term = inertia[i] * (x[i] - anchors[i]).powi(2);
        let social: f64 = (0..net.n())
            .map(|j| w[(i, j)] * (x[i] - x[j]).powi(2))
            .sum();
        anchor_term + (1.0 - inertia[i]) * social
    }))
}

/// Applies the limit operator `x -> P x` by solving `(I - Xi W) y = (I - Xi) x`,
/// factored once. Exists exactly when every independent component has a
/// stubborn agent.
pub struct IssueOperator {
    n: usize,
    lu: LU<f64, Dyn, Dyn>,
    anchor: DVector<f64>,
}

impl IssueOperator {
    pub fn new(net: &InfluenceNetwork) -> Result<Self> {
        if !check_assumption2(net).holds {
            return Err(Error::SingularSystem);
        }
        let n = net.n();
        let a = DMatrix::identity(n, n) - net.xi_w();
        Ok(IssueOperator {
            n,
            lu: a.lu(),
            anchor: net.anchor(),
        })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let rhs = DVector::from_fn(self.n, |i, _| self.anchor[i] * x[i]);
        self.lu
            .solve(&rhs)
            .expect("factorization exists when every independent component is anchored")
    }
}

/// Settled opinions for one issue given its initial opinions.
pub fn issue_transition(net: &InfluenceNetwork, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims(net, x, "x")?;
    Ok(IssueOperator::new(net)?.apply(x))
}

/// Gap between the limit-operator transition and actually running the
/// within-issue loop to a tight tolerance; the two must agree.
pub fn inner_loop_gap(net: &InfluenceNetwork, x: &DVector<f64>) -> Result<f64> {
    let direct = issue_transition(net, x)?;
    let opts = SimulateOptions {
        tol: 1e-14,
        max_iter: 1_000_000,
        record_full: false,
    };
    let traj = single_issue::simulate_single_issue(net, x, &opts)?;
    let limit = traj.limit.ok_or(Error::NonConvergent {
        max_iter: opts.max_iter,
    })?;
    Ok((direct - limit).amax())
}

/// Support pattern the limit operator must have, from the graph alone.
///
/// Diagonal entries are positive exactly for agents with an anchor. Off the
/// diagonal, agent `j`'s initial opinion reaches agent `i` iff `j` has an
/// anchor and a directed path `j -> ... -> i` whose intermediate vertices all
/// lack full stubbornness. Columns of non-stubborn agents vanish.
pub fn predicted_psi_support(net: &InfluenceNetwork) -> Result<Vec<Vec<bool>>> {
    if !check_assumption2(net).holds {
        return Err(Error::SingularSystem);
    }
    let n = net.n();
    let partition = net.partition();
    let open = partition.open_mask(n);
    let graph = net.graph();
    let xi = net.xi();
    let mut support = vec![vec![false; n]; n];
    for i in 0..n {
        if xi[i] < 1.0 {
            support[i][i] = true;
        }
    }
    for j in 0..n {
        if xi[j] == 1.0 {
            continue;
        }
        for t in graph.restricted_reachable(j, &open) {
            if xi[t] > 0.0 {
                support[t][j] = true;
            }
        }
    }
    Ok(support)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsensusVerdict {
    /// True when some partially stubborn agent reaches every other one
    /// through non-fully-stubborn intermediates; the issue sequence then
    /// settles on a common value.
    pub consensus: bool,
    /// Smallest such agent, if any.
    pub root: Option<usize>,
}

fn require_no_fully_stubborn(net: &InfluenceNetwork, check: &'static str) -> Result<()> {
    let partition = net.partition();
    if !partition.fully_stubborn.is_empty() {
        return Err(Error::PreconditionViolated {
            check,
            precondition: format!(
                "no fully stubborn agents (found {:?})",
                partition.fully_stubborn
            ),
        });
    }
    if !check_assumption2(net).holds {
        return Err(Error::PreconditionViolated {
            check,
            precondition: "every independent component contains a stubborn agent".into(),
        });
    }
    Ok(())
}

/// Consensus test for networks without fully stubborn agents.
pub fn check_theorem2(net: &InfluenceNetwork) -> Result<ConsensusVerdict> {
    require_no_fully_stubborn(net, "check_theorem2")?;
    let partition = net.partition();
    let vp = &partition.partially_stubborn;
    if vp.len() <= 1 {
        return Ok(ConsensusVerdict {
            consensus: true,
            root: vp.first().copied(),
        });
    }
    let graph = net.graph();
    let open = partition.open_mask(net.n());
    for &p in vp {
        let reach = graph.restricted_reachable(p, &open);
        if vp.iter().all(|&q| q == p || reach.binary_search(&q).is_ok()) {
            return Ok(ConsensusVerdict {
                consensus: true,
                root: Some(p),
            });
        }
    }
    Ok(ConsensusVerdict {
        consensus: false,
        root: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterVerdict {
    /// True when the graph splits into several independent components, which
    /// forces at least two distinct settled values.
    pub clusters: bool,
    pub independent_components: usize,
}

/// Cluster test for networks without fully stubborn agents.
pub fn check_corollary1(net: &InfluenceNetwork) -> Result<ClusterVerdict> {
    require_no_fully_stubborn(net, "check_corollary1")?;
    let scc = net.graph().scc();
    let independent = scc.is_independent.iter().filter(|&&b| b).count();
    Ok(ClusterVerdict {
        clusters: independent > 1,
        independent_components: independent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterGroup {
    pub agents: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceOutcome {
    Consensus { value: f64 },
    Clusters { groups: Vec<ClusterGroup> },
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IssueSummary {
    pub issue: usize,
    pub spread: f64,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct SequenceOptions {
    pub max_issues: usize,
    pub consensus_tol: f64,
    pub cluster_tol: f64,
    /// Keep the initial opinions of every issue instead of first and last.
    pub record_full: bool,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            max_issues: DEFAULT_MAX_ISSUES,
            consensus_tol: DEFAULT_CONSENSUS_TOL,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            record_full: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IssueSequenceResult {
    /// Recorded per-issue initial opinions, paired with the issue index.
    pub initial_opinions: Vec<(usize, DVector<f64>)>,
    /// Issues actually run.
    pub issues_run: usize,
    pub settled: bool,
    pub outcome: SequenceOutcome,
    pub summaries: Vec<IssueSummary>,
}

fn summarize(issue: usize, x: &DVector<f64>) -> IssueSummary {
    IssueSummary {
        issue,
        spread: x.max() - x.min(),
        mean: x.mean(),
    }
}

/// Groups settled opinions by chaining gaps of at most `cluster_tol`;
/// consensus if the whole spread fits within `consensus_tol`.
pub(crate) fn classify_settled(
    x: &DVector<f64>,
    consensus_tol: f64,
    cluster_tol: f64,
) -> SequenceOutcome {
    if x.max() - x.min() <= consensus_tol {
        return SequenceOutcome::Consensus { value: x.mean() };
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut groups: Vec<Vec<usize>> = vec![vec![order[0]]];
    for pair in order.windows(2) {
        if x[pair[1]] - x[pair[0]] > cluster_tol {
            groups.push(Vec::new());
        }
        groups.last_mut().unwrap().push(pair[1]);
    }
    let groups = groups
        .into_iter()
        .map(|mut agents| {
            agents.sort_unstable();
            let value = agents.iter().map(|&i| x[i]).sum::<f64>() / agents.len() as f64;
            ClusterGroup { agents, value }
        })
        .collect();
    SequenceOutcome::Clusters { groups }
}

/// Runs the issue sequence until the anchors stop moving or the budget runs
/// out, then classifies the settled profile.
pub fn simulate_issue_sequence(
    net: &InfluenceNetwork,
    x00: &DVector<f64>,
    opts: &SequenceOptions,
) -> Result<IssueSequenceResult> {
    check_dims(net, x00, "x00")?;
    let op = IssueOperator::new(net)?;
    let mut x = x00.clone();
    let mut recorded = vec![(0, x.clone())];
    let mut summaries = vec![summarize(0, &x)];
    let mut settled = false;
    let mut issues_run = 0;
    for s in 1..=opts.max_issues {
        let next = op.apply(&x);
        let diff = (&next - &x).amax();
        x = next;
        issues_run = s;
        summaries.push(summarize(s, &x));
        if opts.record_full {
            recorded.push((s, x.clone()));
        }
        if diff <= SETTLE_TOL {
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
    Ok(IssueSequenceResult {
        initial_opinions: recorded,
        issues_run,
        settled,
        outcome,
    summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap_pair() -> InfluenceNetwork {
        InfluenceNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn inertia_complements_susceptibility_exactly() {
        let net = InfluenceNetwork::new(
            vec![
                vec![0.0, 0.5, 0.5],
                vec![1.0, 0.0, 0.0],
                vec![0.5, 0.5, 0.0],
            ],
            vec![0.1, 0.7, 1.0],
        )
        .unwrap();
        let inertia = CognitiveInertia::of(&net);
        for i in 0..3 {
            assert_eq!(inertia.zeta[i] + net.xi()[i], 1.0);
        }
    }

    #[test]
    fn cost_on_the_swap_pair() {
        let net = swap_pair();
        let anchors = DVector::from_vec(vec![0.0, 1.0]);
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let cost = evaluate_cost(&net, &anchors, &x).unwrap();
        // Half inertia, anchor a quarter away, neighbors agree: 0.5 * 0.25.
        assert!((cost[0] - 0.125).abs() < 1e-15);
        assert!((cost[1] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn settled_profile_minimizes_each_agents_cost() {
        let net = swap_pair();
        let anchors = DVector::from_vec(vec![0.0, 1.0]);
        let settled = issue_transition(&net, &anchors).unwrap();
        let base = evaluate_cost(&net, &anchors, &settled).unwrap();
        for i in 0..2 {
            for delta in [-1e-4, 1e-4] {
                let mut perturbed = settled.clone();
                perturbed[i] += delta;
                let cost = evaluate_cost(&net, &anchors, &perturbed).unwrap();
                assert!(cost[i] >= base[i] - 1e-12);
            }
        }
    }

    #[test]
    fn transition_on_the_swap_pair() {
        let net = swap_pair();
        let x = DVector::from_vec(vec![0.0, 1.0]);
        let next = issue_transition(&net, &x).unwrap();
        assert!((next[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((next[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn transition_requires_anchored_components() {
        let net =
            InfluenceNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 1.0]).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            issue_transition(&net, &x),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn transition_agrees_with_running_the_inner_loop() {
        let net = swap_pair();
        let x = DVector::from_vec(vec![-0.3, 0.8]);
        assert!(inner_loop_gap(&net, &x).unwrap() < 1e-8);
    }

    #[test]
    fn sequence_on_the_swap_pair_reaches_consensus_at_one_half() {
        let net = swap_pair();
        let x00 = DVector::from_vec(vec![0.0, 1.0]);
        let result =
            simulate_issue_sequence(&net, &x00, &SequenceOptions::default()).unwrap();
        assert!(result.settled);
        match result.outcome {
            SequenceOutcome::Consensus { value } => assert!((value - 0.5).abs() < 1e-10),
            ref other => panic!("expected consensus, got {other:?}"),
        }
    }

    #[test]
    fn disconnected_halves_settle_into_clusters() {
        // Two independent swap pairs with far-apart opinions.
        let net = InfluenceNetwork::new(
            vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![0.5, 0.5, 0.5, 0.5],
        )
        .unwrap();
        let x00 = DVector::from_vec(vec![0.0, 1.0, 10.0, 11.0]);
        let result =
            simulate_issue_sequence(&net, &x00, &SequenceOptions::default()).unwrap();
        match result.outcome {
            SequenceOutcome::Clusters { ref groups } => {
                assert_eq!(groups.len(), 2);
                assert_eq!(groups[0].agents, vec![0, 1]);
                assert_eq!(groups[1].agents, vec![2, 3]);
                assert!((groups[0].value - 0.5).abs() < 1e-9);
                assert!((groups[1].value - 10.5).abs() < 1e-9);
            }
            ref other => panic!("expected clusters, got {other:?}"),
        }
        let verdict = check_corollary1(&net).unwrap();
        assert!(verdict.clusters);
        assert_eq!(verdict.independent_components, 2);
    }

    #[test]
    fn consensus_predicate_needs_a_rooted_agent() {
        // 0 reaches 1 but not vice versa; still consensus: one root suffices.
        let net = InfluenceNetwork::new(
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let verdict = check_theorem2(&net).unwrap();
        assert!(verdict.consensus);
        assert_eq!(verdict.root, Some(0));

        // Two mutually deaf pairs: no root.
        let net = InfluenceNetwork::new(
            vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![0.5, 0.5, 0.5, 0.5],
        )
        .unwrap();
        let verdict = check_theorem2(&net).unwrap();
        assert!(!verdict.consensus);
        assert_eq!(verdict.root, None);
    }

    #[test]
    fn predicates_require_no_fully_stubborn_agents() {
        let net = InfluenceNetwork::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.0, 0.5],
        )
        .unwrap();
        assert!(matches!(
            check_theorem2(&net),
            Err(Error::PreconditionViolated { .. })
        ));
        assert!(matches!(
            check_corollary1(&net),
            Err(Error::PreconditionViolated { .. })
        ));
    }

    #[test]
    fn single_partially_stubborn_agent_is_vacuously_rooted() {
        let net = InfluenceNetwork::new(
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 1.0],
        )
        .unwrap();
        let verdict = check_theorem2(&net).unwrap();
        assert!(verdict.consensus);
        assert_eq!(verdict.root, Some(0));
    }

    #[test]
    fn support_prediction_on_a_stubborn_chain() {
        // 0 (anchored) -> 1 (partially) -> 2 (non-stubborn), arcs by listening.
        let net = InfluenceNetwork::new(
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.5, 0.5, 0.0],
                vec![0.0, 1.0, 0.0],
            ],
            vec![0.4, 0.5, 1.0],
        )
        .unwrap();
        let predicted = predicted_psi_support(&net).unwrap();
        let expected = vec![
            vec![true, false, false],
            vec![true, true, false],
            vec![true, true, false],
        ];
        assert_eq!(predicted, expected);

        let lim =
            crate::single_issue::limit_influence_matrix(&net, 1e-12, 100_000).unwrap();
        assert_eq!(lim.support(), expected);
    }

    #[test]
    fn support_prediction_blocks_paths_through_fully_stubborn_agents() {
        // The graph has the path 0 -> 1 -> 2, but 1 is fully stubborn: its
        // own row is an identity row and 0's opinion never passes through it.
        let net = InfluenceNetwork::new(
            vec![
                vec![1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
            ],
            vec![0.5, 0.0, 1.0],
        )
        .unwrap();
        let predicted = predicted_psi_support(&net).unwrap();
        assert!(!predicted[1][0]);
        assert!(!predicted[2][0]);
        assert!(predicted[2][1]);
        let lim =
            crate::single_issue::limit_influence_matrix(&net, 1e-12, 100_000).unwrap();
        assert_eq!(lim.support(), predicted);
    }
}
