//! Directed-graph structure underlying an influence network and the
//! structural conditions that decide convergence of the dynamics.
//!
//! Arcs point along information flow: `u -> v` means `v` weights `u`'s
//! opinion, i.e. the matrix entry `(v, u)` is positive.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::network::InfluenceNetwork;

/// Adjacency-list digraph with a fixed vertex set `0..n`.
#[derive(Debug, Clone)]
pub struct Digraph {
    out: Vec<Vec<usize>>,
}

/// Strongly connected components of a digraph, in reverse topological order
/// of the condensation: every arc between distinct components points from a
/// later component to an earlier one.
#[derive(Debug, Clone)]
pub struct SccDecomposition {
    /// Component member lists, each sorted ascending.
    pub components: Vec<Vec<usize>>,
    /// Component index of each vertex.
    pub component_of: Vec<usize>,
    /// True when no arc enters the component from outside it.
    pub is_independent: Vec<bool>,
    /// Gcd of the cycle lengths through each component; 0 for a singleton
    /// without a self-loop, which has no cycle at all.
    pub periods: Vec<usize>,
}

impl Digraph {
    pub fn new(n: usize, arcs: &[(usize, usize)]) -> Self {
        let mut out = vec![Vec::new(); n];
        for &(u, v) in arcs {
            out[u].push(v);
        }
        for list in &mut out {
            list.sort_unstable();
            list.dedup();
        }
        Digraph { out }
    }

    /// Digraph of a matrix's support: arc `u -> v` iff `m[(v, u)] > threshold`.
    pub fn from_support(m: &DMatrix<f64>, threshold: f64) -> Self {
        let n = m.nrows();
        let mut out = vec![Vec::new(); n];
        for v in 0..n {
            for u in 0..n {
                if m[(v, u)] > threshold {
                    out[u].push(v);
                }
            }
        }
        Digraph { out }
    }

    pub fn n(&self) -> usize {
        self.out.len()
    }

    pub fn out(&self, u: usize) -> &[usize] {
        &self.out[u]
    }

    pub fn has_arc(&self, u: usize, v: usize) -> bool {
        self.out[u].binary_search(&v).is_ok()
    }

    /// Tarjan's algorithm, iterative so deep graphs cannot overflow the call
    /// stack. Components come out in reverse topological order.
    pub fn scc(&self) -> SccDecomposition {
        let n = self.n();
        const UNSET: usize = usize::MAX;
        let mut index = vec![UNSET; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        let mut next_index = 0usize;
        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut component_of = vec![UNSET; n];

        // Each frame is (vertex, position in its adjacency list).
        let mut call: Vec<(usize, usize)> = Vec::new();
        for root in 0..n {
            if index[root] != UNSET {
                continue;
            }
            call.push((root, 0));
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;

            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                if *pos < self.out[v].len() {
                    let w = self.out[v][*pos];
                    *pos += 1;
                    if index[w] == UNSET {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut members = Vec::new();
                        loop {
                            let w = stack.pop().expect("tarjan stack underflow");
                            on_stack[w] = false;
                            component_of[w] = components.len();
                            members.push(w);
                            if w == v {
                                break;
                            }
                        }
                        members.sort_unstable();
                        components.push(members);
                    }
                }
            }
        }

        let mut is_independent = vec![true; components.len()];
        for u in 0..n {
            for &v in &self.out[u] {
                if component_of[u] != component_of[v] {
                    is_independent[component_of[v]] = false;
                }
            }
        }

        let periods = components
            .iter()
            .map(|members| self.component_period(members, &component_of))
            .collect();

        SccDecomposition {
            components,
            component_of,
            is_independent,
            periods,
        }
    }

    /// Gcd of cycle lengths through one strongly connected component, from
    /// BFS level differences: every intra-component arc `u -> v` contributes
    /// `level(u) + 1 - level(v)`.
    fn component_period(&self, members: &[usize], component_of: &[usize]) -> usize {
        let comp = component_of[members[0]];
        if members.len() == 1 {
            let v = members[0];
            return if self.has_arc(v, v) { 1 } else { 0 };
        }
        let n = self.n();
        let mut level = vec![usize::MAX; n];
        let root = members[0];
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut g: u64 = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &self.out[u] {
                if component_of[v] != comp {
                    continue;
                }
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                    g = gcd(g, diff);
                }
            }
        }
        // Tree arcs contribute 0 to the gcd, so only revisits matter; a
        // strongly connected component with >= 2 vertices always has one.
        g as usize
    }

    /// Vertices reachable from any source by a path of one or more arcs
    /// (sources themselves are included, having a trivial path).
    pub fn reachable_from(&self, sources: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.n()];
        let mut queue: std::collections::VecDeque<usize> = sources.iter().copied().collect();
        for &s in sources {
            seen[s] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.out[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Vertices `t != source` reachable from `source` by a path whose
    /// intermediate vertices all satisfy `allowed`; the endpoints are exempt.
    /// A direct arc always qualifies.
    pub fn restricted_reachable(&self, source: usize, allowed: &[bool]) -> Vec<usize> {
        let mut seen = vec![false; self.n()];
        seen[source] = true;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            // The source is expanded unconditionally: paths start there.
            if u != source && !allowed[u] {
                continue;
            }
            for &v in &self.out[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..self.n()).filter(|&t| t != source && seen[t]).collect()
    }

    /// A vertex of `subset` with directed paths inside `subset` to every
    /// other member, smallest index if several qualify.
    pub fn spanning_tree_root(&self, subset: &[usize]) -> Option<usize> {
        if subset.is_empty() {
            return None;
        }
        if subset.len() == 1 {
            return Some(subset[0]);
        }
        let sub = self.induced(subset);
        let scc = sub.scc();
        let mut sources: Vec<usize> = (0..scc.components.len())
            .filter(|&c| scc.is_independent[c])
            .collect();
        if sources.len() != 1 {
            // Two independent components can never reach each other.
            return None;
        }
        let root_local = scc.components[sources.remove(0)][0];
        Some(subset[root_local])
    }

    /// A vertex of `subset` with a direct arc to every other member,
    /// smallest index if several qualify.
    pub fn star_center(&self, subset: &[usize]) -> Option<usize> {
        subset
            .iter()
            .copied()
            .find(|&c| subset.iter().all(|&v| v == c || self.has_arc(c, v)))
    }

    /// Subgraph induced on `subset` (which must be sorted and duplicate-free),
    /// with vertices relabelled by their position in `subset`.
    fn induced(&self, subset: &[usize]) -> Digraph {
        let mut local = vec![usize::MAX; self.n()];
        for (i, &v) in subset.iter().enumerate() {
            local[v] = i;
        }
        let out = subset
            .iter()
            .map(|&u| {
                self.out[u]
                    .iter()
                    .filter_map(|&v| (local[v] != usize::MAX).then(|| local[v]))
                    .collect()
            })
            .collect();
        Digraph { out }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One independent component that blocks convergence: all members are
/// non-stubborn and the component is periodic.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicComponent {
    pub members: Vec<usize>,
    pub period: usize,
}

/// Result of the aperiodicity condition.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption1Report {
    pub holds: bool,
    /// Independent all-non-stubborn components with period != 1.
    pub violations: Vec<PeriodicComponent>,
}

/// Result of the stubborn-anchor condition.
#[derive(Debug, Clone, Serialize)]
pub struct Assumption2Report {
    pub holds: bool,
    /// Independent components containing no stubborn agent.
    pub violations: Vec<Vec<usize>>,
}

/// Checks that every independent strongly connected component whose members
/// are all non-stubborn is aperiodic. Singleton components never violate
/// this: an independent singleton necessarily carries a self-loop.
pub fn check_assumption1(net: &InfluenceNetwork) -> Assumption1Report {
    let scc = net.graph().scc();
    let xi = net.xi();
    let mut violations = Vec::new();
    for (c, members) in scc.components.iter().enumerate() {
        if !scc.is_independent[c] || members.len() < 2 {
            continue;
        }
        if members.iter().all(|&i| xi[i] == 1.0) && scc.periods[c] != 1 {
            violations.push(PeriodicComponent {
                members: members.clone(),
                period: scc.periods[c],
            });
        }
    }
    Assumption1Report {
        holds: violations.is_empty(),
        violations,
    }
}

/// Checks that every independent strongly connected component contains at
/// least one stubborn agent (xi < 1).
pub fn check_assumption2(net: &InfluenceNetwork) -> Assumption2Report {
    let scc = net.graph().scc();
    let xi = net.xi();
    let mut violations = Vec::new();
    for (c, members) in scc.components.iter().enumerate() {
        if scc.is_independent[c] && members.iter().all(|&i| xi[i] == 1.0) {
            violations.push(members.clone());
        }
    }
    Assumption2Report {
        holds: violations.is_empty(),
        violations,
    }
}
