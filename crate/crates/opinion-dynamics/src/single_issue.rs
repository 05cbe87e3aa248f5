//! Within-issue dynamics: each step an agent averages the opinions it
//! listens to, blended with its anchor on the issue's initial opinion.
//!
//! The step is `x' = Xi W x + (I - Xi) x0`. Iterating it also defines the
//! accumulated influence operator `P(k)` with `x(k) = P(k) x0`, whose limit
//! (when it exists) maps initial opinions straight to settled ones.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{check_assumption1, check_assumption2};
use crate::network::InfluenceNetwork;
use crate::oracle::{self, SpectralReport};

pub const DEFAULT_STEP_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Limit-operator entries at or below this count as structural zeros.
pub const SUPPORT_TOL: f64 = 1e-12;

fn check_dims(net: &InfluenceNetwork, v: &DVector<f64>, name: &str) -> Result<()> {
    if v.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: format!("{name} has {} entries, expected {}", v.len(), net.n()),
        });
    }
    Ok(())
}

/// One averaging step anchored at `x0`.
pub fn fj_step(
    net: &InfluenceNetwork,
    x: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dims(net, x, "x")?;
    check_dims(net, x0, "x0")?;
    Ok(step_unchecked(net, x, x0))
}

fn step_unchecked(net: &InfluenceNetwork, x: &DVector<f64>, x0: &DVector<f64>) -> DVector<f64> {
    let averaged = net.w() * x;
    let xi = net.xi();
    DVector::from_fn(net.n(), |i, _| {
        xi[i] * averaged[i] + (1.0 - xi[i]) * x0[i]
    })
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    /// Stop once successive states differ by at most this in max norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep every state instead of just the first and final two.
    pub record_full: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            tol: DEFAULT_STEP_TOL,
            max_iter: DEFAULT_MAX_ITER,
            record_full: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Recorded states paired with their step index. Without `record_full`
    /// this is the initial state plus the final two, which is enough to see
    /// both a settled value and a period-2 oscillation.
    pub states: Vec<(usize, DVector<f64>)>,
    pub converged: bool,
    /// Steps actually taken.
    pub iterations: usize,
    pub limit: Option<DVector<f64>>,
}

/// Iterates the anchored step from `x0` until successive states agree within
/// `opts.tol` or the budget runs out.
pub fn simulate_single_issue(
    net: &InfluenceNetwork,
    x0: &DVector<f64>,
    opts: &SimulateOptions,
) -> Result<Trajectory> {
    check_dims(net, x0, "x0")?;
    let mut states = vec![(0, x0.clone())];
    let mut prev = x0.clone();
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=opts.max_iter {
        let next = step_unchecked(net, &prev, x0);
        let diff = (&next - &prev).amax();
        if opts.record_full {
            states.push((k, next.clone()));
        }
        iterations = k;
        let done = diff <= opts.tol;
        if (done || k == opts.max_iter) && !opts.record_full {
            if k > 1 {
                states.push((k - 1, prev.clone()));
            }
            states.push((k, next.clone()));
        }
        prev = next;
        if done {
            converged = true;
            break;
        }
    }
    let limit = converged.then(|| prev.clone());
    Ok(Trajectory {
        states,
        converged,
        iterations,
        limit,
    })
}

/// Accumulated influence operator after `k` steps, via the recursion
/// `P(k+1) = Xi W P(k) + (I - Xi)` with `P(0) = I`.
pub fn influence_matrix_k(net: &InfluenceNetwork, k: usize) -> DMatrix<f64> {
    let n = net.n();
    let m = net.xi_w();
    let anchor = net.anchor();
    let mut p = DMatrix::identity(n, n);
    for _ in 0..k {
        let mut next = &m * &p;
        for i in 0..n {
            next[(i, i)] += anchor[i];
        }
        p = next;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    /// Solved `(I - Xi W) P = I - Xi` directly.
    ClosedForm,
    /// Iterated the influence recursion to a fixed point.
    Iterative,
}

#[derive(Debug, Clone)]
pub struct InfluenceLimit {
    pub psi: DMatrix<f64>,
    pub method: LimitMethod,
    /// Iterations spent; 0 for the closed form.
    pub iterations: usize,
}

impl InfluenceLimit {
    /// Boolean support of the limit operator at the structural threshold.
    pub fn support(&self) -> Vec<Vec<bool>> {
        (0..self.psi.nrows())
            .map(|i| {
                (0..self.psi.ncols())
                    .map(|j| self.psi[(i, j)] > SUPPORT_TOL)
                    .collect()
            })
            .collect()
    }
}

/// Limit of the accumulated influence operator.
///
/// With a stubborn agent in every independent component the limit solves
/// `(I - Xi W) P = I - Xi`; otherwise, if the network still converges, the
/// recursion is iterated until successive operators agree within `tol`.
/// When neither condition holds no limit exists.
pub fn limit_influence_matrix(
    net: &InfluenceNetwork,
    tol: f64,
    max_iter: usize,
) -> Result<InfluenceLimit> {
    let n = net.n();
    if check_assumption2(net).holds {
        let a = DMatrix::identity(n, n) - net.xi_w();
        let rhs = DMatrix::from_diagonal(&net.anchor());
        let psi = a.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
        return Ok(InfluenceLimit {
            psi: clamp_negatives(psi),
            method: LimitMethod::ClosedForm,
            iterations: 0,
        });
    }
    if !check_assumption1(net).holds {
        return Err(Error::NonConvergent { max_iter });
    }
    let m = net.xi_w();
    let anchor = net.anchor();
    let mut p = DMatrix::identity(n, n);
    for k in 1..=max_iter {
        let mut next = &m * &p;
        for i in 0..n {
            next[(i, i)] += anchor[i];
        }
        let diff = (&next - &p).amax();
        p = next;
        if diff <= tol {
            return Ok(InfluenceLimit {
                psi: clamp_negatives(p),
                method: LimitMethod::Iterative,
                iterations: k,
            });
        }
    }
    Err(Error::NonConvergent { max_iter })
}

fn clamp_negatives(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for e in m.iter_mut() {
        if *e < 0.0 {
            debug_assert!(*e > -1e-12, "limit entry {} below tolerance", *e);
            *e = 0.0;
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct SpectralVerdict {
    /// True when 1 is the only eigenvalue of `Xi W` on the unit circle, the
    /// spectral characterization of convergence from every initial opinion.
    pub converges: bool,
    pub report: SpectralReport,
}

/// Decides convergence from the spectrum of `Xi W`, independently of the
/// graph-based aperiodicity check.
pub fn check_convergence_spectral(net: &InfluenceNetwork) -> Result<SpectralVerdict> {
    let report = oracle::eigenvalues_dense(&net.xi_w())?;
    let converges = report
        .eigenvalues
        .iter()
        .all(|l| l.norm() < 1.0 - oracle::UNIT_CIRCLE_TOL || (l - 1.0).norm() <= oracle::UNIT_CIRCLE_TOL);
    Ok(SpectralVerdict { converges, report })
}

/// Non-stubborn agents reachable from some stubborn agent; their columns of
/// the limit operator vanish, meaning their initial opinions leave no trace.
pub fn predicted_zero_columns(net: &InfluenceNetwork) -> Vec<usize> {
    let stubborn = net.stubborn_agents();
    let reach = net.graph().reachable_from(&stubborn);
    let xi = net.xi();
    (0..net.n())
        .filter(|&i| xi[i] == 1.0 && reach[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two agents listening only to each other, both half stubborn.
    fn swap_pair() -> InfluenceNetwork {
        InfluenceNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn one_step_on_the_swap_pair() {
        let net = swap_pair();
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let x1 = fj_step(&net, &x0, &x0).unwrap();
        assert!((x1[0] - 0.5).abs() < 1e-15);
        assert!((x1[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_wrong_dimensions(){
        let net = swap_pair();
        let x = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        assert!(matches!(
            fj_step(&net, &x, &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn influence_matrix_first_steps() {
        let net = swap_pair();
        let p0 = influence_matrix_k(&net, 0);
        assert_eq!(p0, DMatrix::identity(2, 2));
        // P(1) = Xi W + I - Xi.
        let p1 = influence_matrix_k(&net, 1);
        let expected = net.xi_w() + DMatrix::from_diagonal(&net.anchor());
        assert!((p1 - expected).amax() < 1e-15);
    }

    #[test]
    fn limit_on_the_swap_pair_is_closed_form() {
        let net = swap_pair();
        let lim = limit_influence_matrix(&net, 1e-12, 10_000).unwrap();
        assert_eq!(lim.method, LimitMethod::ClosedForm);
        let expected = [
            [2.0 / 3.0, 1.0 / 3.0],
            [1.0 / 3.0, 2.0 / 3.0],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((lim.psi[(i, j)] - expected[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simulation_settles_where_the_limit_operator_says() {
        let net = swap_pair();
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let traj = simulate_single_issue(&net, &x0, &SimulateOptions::default()).unwrap();
        assert!(traj.converged);
        let lim = limit_influence_matrix(&net, 1e-12, 10_000).unwrap();
        let predicted = &lim.psi * &x0;
        assert!((traj.limit.unwrap() - predicted).amax() < 1e-8);
    }

    #[test]
    fn non_stubborn_swap_pair_oscillates_forever() {
        let net =
            InfluenceNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 1.0]).unwrap();
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let opts = SimulateOptions {
            max_iter: 501,
            ..Default::default()
        };
        let traj = simulate_single_issue(&net, &x0, &opts).unwrap();
        assert!(!traj.converged);
        assert!(traj.limit.is_none());
        // The recorded tail shows the alternation.
        let tail: Vec<_> = traj.states.iter().rev().take(2).collect();
        assert!((tail[0].1[0] - tail[1].1[1]).abs() < 1e-15);
        // And the spectral check agrees: -1 sits on the unit circle.
        assert!(!check_convergence_spectral(&net).unwrap().converges);
        // No limit operator exists either.
        assert!(matches!(
            limit_influence_matrix(&net, 1e-10, 1000),
            Err(Error::NonConvergent { .. })
        ));
    }

    #[test]
    fn fully_stubborn_network_converges_immediately() {
        let net =
            InfluenceNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        // Xi W = 0, so every eigenvalue is 0 and the very first step is fixed.
        assert!(check_convergence_spectral(&net).unwrap().converges);
        let x0 = DVector::from_vec(vec![-1.0, 1.0]);
        let traj = simulate_single_issue(&net, &x0, &SimulateOptions::default()).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.iterations, 1);
    }

    #[test]
    fn zero_columns_cover_downstream_non_stubborn_agents() {
        // Stubborn 0 feeds 1 feeds 2 (all arcs via listening), 1 and 2
        // non-stubborn; an isolated non-stubborn self-loop 3 is untouched.
        let net = InfluenceNetwork::new(
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            vec![0.2, 1.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(predicted_zero_columns(&net), vec![1, 2]);

        let lim = limit_influence_matrix(&net, 1e-12, 100_000).unwrap();
        assert_eq!(lim.method, LimitMethod::Iterative);
        for &j in &[1usize, 2] {
            assert!(lim.psi.column(j).amax() <= 1e-10);
        }
        // Column 3 survives: nothing stubborn reaches agent 3.
        assert!(lim.psi[(3, 3)] > 0.5);
    }

    #[test]
    fn recorded_trajectory_is_complete_when_asked() {
        let net = swap_pair();
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let opts = SimulateOptions {
            record_full: true,
            ..Default::default()
        };
        let traj = simulate_single_issue(&net, &x0, &opts).unwrap();
        assert_eq!(traj.states.len(), traj.iterations + 1);
        for (k, (idx, _)) in traj.states.iter().enumerate() {
            assert_eq!(k, *idx);
        }
    }
}
