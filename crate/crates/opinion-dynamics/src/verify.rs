//! Randomized verification suites: each one pits an analytical predicate
//! against an independent oracle over seeded fixtures and reports every seed
//! where the two disagree. All cases are pure functions of the seed, so
//! suites shard across threads without changing their output.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounded_confidence::{check_assumption3, check_theorem3, simulate_bc_sequence, ConfidenceConfig};
use crate::error::{Error, Result};
use crate::graph::{check_assumption1, check_assumption2, Digraph};
use crate::issue_sequence::{
    check_corollary1, check_theorem2, predicted_psi_support, simulate_issue_sequence,
    SequenceOptions, SequenceOutcome,
};
use crate::network::InfluenceNetwork;
use crate::oracle::{
    char_poly, companion_roots, disjoint_union, eigenvalues_dense, multisets_match,
    random_network, random_opinions, simulate_augmented, ClassMix,
};
use crate::single_issue::{
    check_convergence_spectral, influence_matrix_k, limit_influence_matrix,
    predicted_zero_columns, simulate_single_issue, SimulateOptions, SUPPORT_TOL,
};

pub const SUITE_NAMES: &[&str] = &[
    "convergence",
    "stochasticity",
    "zero_columns",
    "support",
    "star",
    "outcomes",
    "preservation",
    "augmented",
    "graph",
    "eigen",
];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub cases: usize,
    /// Seeds whose predicate and oracle disagreed. Empty means the suite
    /// passed.
    pub disagreements: Vec<u64>,
}

impl SuiteOutcome {
    pub fn ok(&self) -> bool {
        self.disagreements.is_empty()
    }
}

pub fn default_seed_range(name: &str) -> Range<u64> {
    match name {
        "convergence" => 0..1002,
        "stochasticity" => 0..100,
        "zero_columns" => 0..200,
        "support" => 0..500,
        "star" => 0..200,
        "outcomes" => 0..300,
        "preservation" => 0..200,
        "augmented" => 0..100,
        "graph" => 0..300,
        "eigen" => 0..500,
        _ => 0..0,
    }
}

pub fn run_suite(name: &str, seeds: Range<u64>) -> Result<SuiteOutcome> {
    match name {
        "convergence" => run_cases(name, seeds, convergence_case),
        "stochasticity" => run_cases(name, seeds, stochasticity_case),
        "zero_columns" => run_cases(name, seeds, zero_columns_case),
        "support" => run_cases(name, seeds, support_case),
        "star" => run_cases(name, seeds, star_case),
        "outcomes" => run_cases(name, seeds, outcomes_case),
        "preservation" => run_cases(name, seeds, preservation_case),
        "augmented" => run_cases(name, seeds, augmented_case),
        "graph" => run_cases(name, seeds, graph_case),
        "eigen" => run_cases(name, seeds, eigen_case),
        other => Err(Error::Validation {
            field: "suites".into(),
            reason: format!("unknown suite \"{other}\"; known: {}", SUITE_NAMES.join(", ")),
        }),
    }
}

/// Runs the selected suites (all of them when `names` is empty), each over
/// its default seed range unless one is given.
pub fn run_suites(names: &[String], seeds: Option<Range<u64>>) -> Result<Vec<SuiteOutcome>> {
    let selected: Vec<String> = if names.is_empty() {
        SUITE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    selected
        .iter()
        .map(|name| {
            let range = seeds.clone().unwrap_or_else(|| default_seed_range(name));
            run_suite(name, range)
        })
        .collect()
}

/// Shards the seed range over threads. Cases are independent, so the merged
/// outcome is identical to a sequential run.
fn run_cases<F>(name: &str, seeds: Range<u64>, check: F) -> Result<SuiteOutcome>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    let seeds: Vec<u64> = seeds.collect();
    let cases = seeds.len();
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(8)
        .max(1);
    let chunk = cases.div_ceil(workers).max(1);
    let mut disagreements: Vec<u64> = Vec::new();
    if cases > 0 {
        let check = &check;
        let results: Vec<Result<Vec<u64>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .chunks(chunk)
                .map(|block| {
                    scope.spawn(move || {
                        let mut bad = Vec::new();
                        for &seed in block {
                            if !check(seed)? {
                                bad.push(seed);
                            }
                        }
                        Ok(bad)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("suite worker panicked"))
                .collect()
        });
        for r in results {
            disagreements.extend(r?);
        }
        disagreements.sort_unstable();
    }
    Ok(SuiteOutcome {
        name: name.into(),
        cases,
        disagreements,
    })
}

const DENSITIES: [f64; 3] = [0.2, 0.5, 1.0];

fn mix_of(index: u64) -> ClassMix {
    match index % 4 {
        0 => ClassMix { fully: 0.2, partially: 0.4 },
        1 => ClassMix { fully: 0.0, partially: 0.5 },
        2 => ClassMix { fully: 0.4, partially: 0.2 },
        _ => ClassMix { fully: 0.1, partially: 0.3 },
    }
}

/// Blends in a 0.3-weight self-loop on every agent, which makes every
/// strongly connected component aperiodic without touching the agent classes.
fn with_self_loops(net: &InfluenceNetwork) -> InfluenceNetwork {
    let n = net.n();
    let mut w = vec![vec![0.0; n]; n];
    for (i, row) in w.iter_mut().enumerate() {
        for (j, e) in row.iter_mut().enumerate() {
            *e = 0.7 * net.w()[(i, j)];
        }
        row[i] += 0.3;
    }
    let xi = (0..n).map(|i| net.xi()[i]).collect();
    InfluenceNetwork::new(w, xi).expect("blend keeps rows stochastic")
}

const LIMIT_TOL: f64 = 1e-13;
const LIMIT_MAX_ITER: usize = 1_000_000;

/// Aperiodicity of open independent components against the spectral test:
/// the two must classify every network identically.
fn convergence_case(seed: u64) -> Result<bool> {
    let n = 2 + (seed as usize) % 11;
    let density = DENSITIES[(seed % 3) as usize];
    let net = random_network(n, density, mix_of(seed / 3), seed);
    let graph_says = check_assumption1(&net).holds;
    let spectrum_says = check_convergence_spectral(&net)?.converges;
    Ok(graph_says == spectrum_says)
}

/// Finite-step influence matrices are row-stochastic for any network; the
/// limit is too once it exists.
fn stochasticity_case(seed: u64) -> Result<bool> {
    let n = 2 + (seed as usize) % 11;
    let net = random_network(n, DENSITIES[(seed % 3) as usize], mix_of(seed / 3), seed);
    for k in [0usize, 1, 5, 50] {
        let p = influence_matrix_k(&net, k);
        for i in 0..n {
            let row = p.row(i);
            if (row.sum() - 1.0).abs() > 1e-12 || row.iter().any(|&e| e < -1e-12) {
                return Ok(false);
            }
        }
    }
    let anchored = with_self_loops(&net);
    let limit = limit_influence_matrix(&anchored, LIMIT_TOL, LIMIT_MAX_ITER)?;
    for i in 0..n {
        let row = limit.psi.row(i);
        if (row.sum() - 1.0).abs() > 1e-10 || row.iter().any(|&e| e < -1e-10) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Initial opinions of non-stubborn agents downstream of any stubborn agent
/// leave no trace in the limit.
fn zero_columns_case(seed: u64) -> Result<bool> {
    let n = 2 + (seed as usize) % 11;
    let mix = ClassMix { fully: 0.25, partially: 0.25 };
    let net = with_self_loops(&random_network(n, DENSITIES[(seed % 3) as usize], mix, seed));
    let limit = limit_influence_matrix(&net, LIMIT_TOL, LIMIT_MAX_ITER)?;
    Ok(predicted_zero_columns(&net)
        .iter()
        .all(|&j| limit.psi.column(j).amax() <= 1e-10))
}

/// Sign pattern of the closed-form limit equals the path-based prediction.
fn support_case(seed: u64) -> Result<bool> {
    for t in 0..1000 {
        let sub = seed * 1009 + t;
        let n = 2 + (sub as usize) % 5;
        let density = if sub % 2 == 0 { 0.5 } else { 1.0 };
        let net = random_network(n, density, mix_of(sub), sub);
        if !check_assumption2(&net).holds {
            continue;
        }
        let limit = limit_influence_matrix(&net, LIMIT_TOL, LIMIT_MAX_ITER)?;
        return Ok(limit.support() == predicted_psi_support(&net)?);
    }
    Ok(false)
}

/// Whenever the mutual-influence graph of the partially stubborn block has a
/// spanning tree, it has a star center, and the tree root is one.
fn star_case(seed: u64) -> Result<bool> {
    for t in 0..1000 {
        let sub = seed * 1013 + t;
        let n = 3 + (sub as usize) % 6;
        let net = random_network(n, 0.5, ClassMix { fully: 0.2, partially: 0.6 }, sub);
        if !check_assumption2(&net).holds {
            continue;
        }
        let vp = net.partition().partially_stubborn;
        if vp.len() < 2 {
            continue;
        }
        let limit = limit_influence_matrix(&net, LIMIT_TOL, LIMIT_MAX_ITER)?;
        let p = vp.len();
        let block = DMatrix::from_fn(p, p, |i, j| limit.psi[(vp[i], vp[j])]);
        let g = Digraph::from_support(&block, SUPPORT_TOL);
        let subset: Vec<usize> = (0..p).collect();
        let root = match g.spanning_tree_root(&subset) {
            Some(r) => r,
            None => continue,
        };
        let center_exists = g.star_center(&subset).is_some();
        let root_is_center = (0..p).all(|i| i == root || block[(i, root)] > SUPPORT_TOL);
        return Ok(center_exists && root_is_center);
    }
    Ok(false)
}

/// Issue sequences settle into consensus exactly when the rooted-agent
/// predicate says so, and into clusters exactly when more than one
/// independent component exists.
fn outcomes_case(seed: u64) -> Result<bool> {
    let mix = ClassMix { fully: 0.0, partially: 0.7 };
    for t in 0..1000 {
        let sub = seed * 1019 + t;
        let net = if seed % 2 == 0 {
            random_network(2 + (sub as usize) % 9, 0.5, mix, sub)
        } else {
            let a = random_network(2 + (sub as usize) % 4, 0.6, mix, sub);
            let b = random_network(
                2 + ((sub / 7) as usize) % 4,
                0.6,
                mix,
                sub ^ 0x5bd1_e995,
            );
            disjoint_union(&a, &b)
        };
        if !check_assumption2(&net).holds {
            continue;
        }
        let t2 = check_theorem2(&net)?;
        let c1 = check_corollary1(&net)?;
        let x00 = random_opinions(net.n(), sub);
        let result = simulate_issue_sequence(&net, &x00, &SequenceOptions::default())?;
        let consensus = matches!(result.outcome, SequenceOutcome::Consensus { .. });
        let clusters = matches!(result.outcome, SequenceOutcome::Clusters { .. });
        return Ok(result.settled && consensus == t2.consensus && clusters == c1.clusters);
    }
    Ok(false)
}

/// Constructs a profile satisfying the edge-preservation condition: a tight
/// opinion cluster, optionally with strongly anchored outliers that nobody
/// listens across to. Baseline confidence edges must survive every issue,
/// and when the consensus conditions hold the sequence must actually close
/// to a single value.
fn preservation_case(seed: u64) -> Result<bool> {
    for t in 0..1000 {
        let sub = seed * 1021 + t;
        let mut rng = ChaCha8Rng::seed_from_u64(sub ^ 0xA3A3_5EED_0F1E_2D3C);
        let m = 8 + rng.random_range(0..3usize);
        let k_iso = if seed % 2 == 1 { 1 + rng.random_range(0..2usize) } else { 0 };
        let n = m + k_iso;
        let h_lo = (1.0 / (2.0 * n as f64)).max(1.0 / (4.0 * m as f64 - 2.0 * n as f64));
        let h_hi = 1.0 / (n as f64 - 1.0);
        if h_lo >= h_hi {
            continue;
        }
        let cfg = ConfidenceConfig { d: 1.0, h: 0.5 * (h_lo + h_hi) };

        let mut w = vec![vec![0.0; n]; n];
        for (i, row) in w.iter_mut().enumerate().take(m) {
            for e in row.iter_mut().take(m) {
                if rng.random::<f64>() < 0.8 {
                    *e = rng.random_range(0.25..1.0);
                }
            }
            if row.iter().all(|&e| e == 0.0) {
                row[i] = 1.0;
            }
        }
        let mut xi = vec![0.0; n];
        for (i, x) in xi.iter_mut().enumerate().take(m) {
            *x = if i < 2 { 0.0 } else { rng.random_range(0.2..0.8) };
        }
        for iso in m..n {
            // Outliers listen only to partially stubborn cluster members, so
            // the rooted condition can reach them without stubborn hops.
            for _ in 0..3 {
                let target = rng.random_range(2..m);
                w[iso][target] = rng.random_range(0.25..1.0);
            }
            xi[iso] = rng.random_range(0.1..0.3);
        }
        for row in w.iter_mut() {
            let s: f64 = row.iter().sum();
            for e in row.iter_mut() {
                *e /= s;
            }
        }
        let net = InfluenceNetwork::new(w, xi)?;

        let mut x00 = DVector::zeros(n);
        for i in 0..m {
            x00[i] = rng.random_range(0.0..0.35);
        }
        for (idx, iso) in (m..n).enumerate() {
            let side = if idx % 2 == 0 { 1.0 } else { -1.0 };
            x00[iso] = side * rng.random_range(4.0..6.0);
        }

        if !check_assumption2(&net).holds {
            continue;
        }
        if !check_assumption3(&net, &x00, &cfg)?.holds {
            continue;
        }
        let result = simulate_bc_sequence(&net, &x00, &cfg, &SequenceOptions::default())?;
        if !result.preservation_ok {
            return Ok(false);
        }
        if check_theorem3(&net, &x00, &cfg)?.consensus {
            let spread_ok = matches!(result.outcome, SequenceOutcome::Consensus { .. })
                && result.summaries.last().is_some_and(|s| s.spread < 1e-6);
            return Ok(spread_ok);
        }
        return Ok(true);
    }
    Ok(false)
}

/// The doubled block system and the direct recursion walk the same
/// trajectory.
fn augmented_case(seed: u64) -> Result<bool> {
    let n = 2 + (seed as usize) % 9;
    let net = random_network(n, DENSITIES[(seed % 3) as usize], mix_of(seed / 3), seed);
    let x0 = random_opinions(n, seed);
    let opts = SimulateOptions { tol: -1.0, max_iter: 500, record_full: true };
    let direct = simulate_single_issue(&net, &x0, &opts)?;
    let aug = simulate_augmented(&net, &x0, 500)?;
    Ok(direct
        .states
        .iter()
        .all(|(k, x)| (x - &aug[*k]).amax() <= 1e-12))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Components, independence, periods, and reachability against brute-force
/// recomputation from the raw arc list.
fn graph_case(seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A09_E667_F3BC_C908);
    let n = 2 + (seed as usize) % 7;
    let mut arcs = Vec::new();
    let mut adj = vec![vec![false; n]; n];
    for u in 0..n {
        for v in 0..n {
            let p = if u == v { 0.2 } else { 0.3 };
            if rng.random::<f64>() < p {
                arcs.push((u, v));
                adj[u][v] = true;
            }
        }
    }
    let g = Digraph::new(n, &arcs);
    let decomp = g.scc();

    // Transitive closure, reflexive by construction.
    let mut reach = adj.clone();
    for (v, row) in reach.iter_mut().enumerate() {
        row[v] = true;
    }
    for mid in 0..n {
        for u in 0..n {
            if reach[u][mid] {
                for v in 0..n {
                    if reach[mid][v] {
                        reach[u][v] = true;
                    }
                }
            }
        }
    }

    let mut brute_components: Vec<Vec<usize>> = Vec::new();
    let mut assigned = vec![false; n];
    for v in 0..n {
        if assigned[v] {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&u| reach[v][u] && reach[u][v]).collect();
        for &u in &members {
            assigned[u] = true;
        }
        brute_components.push(members);
    }
    let mut mine = decomp.components.clone();
    mine.sort();
    brute_components.sort();
    if mine != brute_components {
        return Ok(false);
    }

    for (c, members) in decomp.components.iter().enumerate() {
        let independent = !(0..n).any(|u| {
            decomp.component_of[u] != c && members.iter().any(|&v| adj[u][v])
        });
        if independent != decomp.is_independent[c] {
            return Ok(false);
        }
        // Period as the gcd of closed-walk lengths through one member,
        // restricted to the component; the walk semigroup of an irreducible
        // graph has the same gcd as its cycle set.
        let v0 = members[0];
        let inside = |u: usize| decomp.component_of[u] == c;
        let mut frontier = vec![false; n];
        frontier[v0] = true;
        let mut walk_gcd = 0;
        for _len in 1..=2 * n * n {
            let mut next = vec![false; n];
            for u in 0..n {
                if frontier[u] && inside(u) {
                    for v in 0..n {
                        if adj[u][v] && inside(v) {
                            next[v] = true;
                        }
                    }
                }
            }
            if next[v0] {
                walk_gcd = gcd(walk_gcd, _len);
            }
            frontier = next;
        }
        if walk_gcd != decomp.periods[c] {
            return Ok(false);
        }
    }

    for v in 0..n {
        let mine = g.reachable_from(&[v]);
        if (0..n).any(|u| mine[u] != reach[v][u]) {
            return Ok(false);
        }
        let allowed: Vec<bool> = (0..n).map(|u| (u + v) % 3 != 0).collect();
        let fast = g.restricted_reachable(v, &allowed);
        // Masked closure: arcs leave u only if u is the source or allowed.
        let mut closure = vec![false; n];
        closure[v] = true;
        loop {
            let mut grew = false;
            for u in 0..n {
                if closure[u] && (u == v || allowed[u]) {
                    for t in 0..n {
                        if adj[u][t] && !closure[t] {
                            closure[t] = true;
                            grew = true;
                        }
                    }
                }
            }
            if !grew {
                break;
            }
        }
        let brute: Vec<usize> = (0..n).filter(|&t| t != v && closure[t]).collect();
        if fast != brute {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dense eigensolver against companion-matrix roots of the characteristic
/// polynomial.
fn eigen_case(seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBB67_AE85_84CA_A73B);
    let n = 1 + (seed as usize) % 4;
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let report = eigenvalues_dense(&m)?;
    let roots = companion_roots(&char_poly(&m))?;
    Ok(multisets_match(&report.eigenvalues, &roots, 1e-8))
}
