//! Regressions on the checked-in fixtures, each pinned against values worked
//! out independently of the code under test.

use std::path::PathBuf;

use nalgebra::DVector;
use opinion_dynamics::bounded_confidence::{
    check_assumption3, check_theorem3, confidence_neighbors, simulate_bc_sequence,
};
use opinion_dynamics::graph::{check_assumption1, check_assumption2};
use opinion_dynamics::issue_sequence::{
    check_corollary1, check_theorem2, simulate_issue_sequence, SequenceOptions, SequenceOutcome,
};
use opinion_dynamics::scenario::load_scenario;
use opinion_dynamics::single_issue::{
    check_convergence_spectral, limit_influence_matrix, predicted_zero_columns,
    simulate_single_issue, LimitMethod, SimulateOptions,
};
use opinion_dynamics::scenario::Scenario;

fn fixture(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    load_scenario(&path).expect("fixture should parse")
}

/// A ten-agent settled profile whose two extremes sit outside everyone's
/// confidence bound while the remaining eight lie within one unit of each
/// other.
#[test]
fn settled_profile_with_two_outliers_splits_into_a_clique_and_isolates() {
    let y = DVector::from_vec(vec![
        -0.7, 0.2, 0.0, 0.2, 1.46, -1.9876, 0.0082, 0.0274, 0.2, -0.25,
    ]);
    let neighbors = confidence_neighbors(&y, 1.0);
    let clique = vec![0usize, 1, 2, 3, 6, 7, 8, 9];
    for &i in &clique {
        assert_eq!(neighbors[i], clique, "agent {i} should connect to the whole clique");
    }
    assert_eq!(neighbors[4], vec![4]);
    assert_eq!(neighbors[5], vec![5]);
}

#[test]
fn two_agent_swap_has_the_exact_symmetric_limit() {
    let sc = fixture("two_agents.json");
    let limit = limit_influence_matrix(&sc.network, 1e-13, 1_000_000).expect("limit exists");
    assert_eq!(limit.method, LimitMethod::ClosedForm);
    let expected = [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                (limit.psi[(i, j)] - expected[i][j]).abs() <= 1e-12,
                "psi[{i}][{j}] = {}",
                limit.psi[(i, j)]
            );
        }
    }
}

#[test]
fn three_groups_converges_without_an_invertible_anchor_system() {
    let sc = fixture("three_groups.json");
    assert!(check_assumption1(&sc.network).holds);
    assert!(!check_assumption2(&sc.network).holds);

    // One non-stubborn component survives on the unit circle at exactly 1.
    let verdict = check_convergence_spectral(&sc.network).expect("spectrum computed");
    assert!(verdict.converges);
    assert_eq!(verdict.report.unit_circle.len(), 1);
    let lone = verdict.report.unit_circle[0];
    assert!((lone.re - 1.0).abs() <= 1e-8 && lone.im.abs() <= 1e-8);

    // The limit only exists by iteration, and the non-stubborn agent that
    // hears the stubborn side loses its say entirely.
    let limit = limit_influence_matrix(&sc.network, 1e-13, 1_000_000).expect("limit exists");
    assert_eq!(limit.method, LimitMethod::Iterative);
    assert_eq!(predicted_zero_columns(&sc.network), vec![6]);
    let residual = (0..sc.network.n())
        .map(|i| limit.psi[(i, 6)].abs())
        .fold(0.0, f64::max);
    assert!(residual <= 1e-12, "column 6 residual {residual:e}");

    let run = simulate_single_issue(&sc.network, &sc.x0, &SimulateOptions::default())
        .expect("simulation runs");
    assert!(run.converged);
}

#[test]
fn hub_ring_consensus_value_matches_the_dominant_left_eigenvector() {
    let sc = fixture("hub_ring.json");
    let verdict = check_theorem2(&sc.network).expect("check applies");
    assert!(verdict.consensus);
    assert_eq!(verdict.root, Some(0));
    let clusters = check_corollary1(&sc.network).expect("check applies");
    assert!(!clusters.clusters);
    assert_eq!(clusters.independent_components, 1);

    let run = simulate_issue_sequence(&sc.network, &sc.x0, &SequenceOptions::default())
        .expect("sequence runs");
    assert!(run.settled);
    let value = match run.outcome {
        SequenceOutcome::Consensus { value } => value,
        other => panic!("expected consensus, got {other:?}"),
    };

    // Independent oracle: the settled common value is the dominant left
    // eigenvector of the issue map applied to the first anchors.
    let limit = limit_influence_matrix(&sc.network, 1e-13, 1_000_000).expect("limit exists");
    let n = sc.network.n();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..200_000 {
        let next = limit.psi.transpose() * &pi;
        let next = &next / next.sum();
        if (&next - &pi).amax() <= 1e-15 {
            pi = next;
            break;
        }
        pi = next;
    }
    let predicted = pi.dot(&sc.x0);
    assert!(
        (value - predicted).abs() <= 1e-9,
        "consensus at {value}, eigenvector predicts {predicted}"
    );
}

#[test]
fn tight_cluster_preserves_confidence_edges_and_reaches_consensus() {
    let sc = fixture("tight_cluster.json");
    let cfg = sc.confidence.expect("bounded fixture has a confidence block");

    let a3 = check_assumption3(&sc.network, &sc.x0, &cfg).expect("check runs");
    assert!(a3.holds, "violations: {a3:?}");

    let t3 = check_theorem3(&sc.network, &sc.x0, &cfg).expect("check runs");
    assert!(t3.consensus && t3.rooted && t3.stubborn_connected && t3.bridged);
    assert_eq!(t3.root, Some(3));

    let run = simulate_bc_sequence(&sc.network, &sc.x0, &cfg, &SequenceOptions::default())
        .expect("sequence runs");
    assert!(run.preservation_ok, "lost edge: {:?}", run.first_lost_edge);
    assert!(run.settled);
    assert!(matches!(run.outcome, SequenceOutcome::Consensus { .. }));

    // Eight agents start inside one confidence bound of each other: a
    // complete graph on eight vertices.
    assert_eq!(run.edge_log[0].issue, 0);
    assert_eq!(run.edge_log[0].edges.len(), 28);

    // Once the two outliers drift inside the bound, the clique spans all
    // ten agents; with the gain at 1/n that averages the profile in a
    // single hop, so settlement is quick.
    assert!(run.issues_run <= 10, "took {} issues", run.issues_run);
    let spread = run.summaries.last().expect("summaries recorded").spread;
    assert!(spread < 1e-6, "final spread {spread:e}");
}
