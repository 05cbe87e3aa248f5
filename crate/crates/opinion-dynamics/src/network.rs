//! Influence network: a row-stochastic weight matrix plus per-agent
//! susceptibilities.
//!
//! `w[(i, j)]` is the weight agent `i` places on agent `j`'s opinion, so
//! information flows along the arc `j -> i`. The susceptibility `xi[i]` is 0
//! for a fully stubborn agent, 1 for a non-stubborn one.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Digraph;

/// Weights and susceptibilities this close to an exact 0 or 1 are snapped to
/// it, so class membership and arc existence are crisp.
pub const SNAP_TOL: f64 = 1e-12;

/// A row is renormalized if its sum is within this distance of 1; anything
/// further off is rejected.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Agent indices grouped by susceptibility class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentPartition {
    /// xi = 0: opinion never moves.
    pub fully_stubborn: Vec<usize>,
    /// 0 < xi < 1: averages neighbors but keeps an anchor.
    pub partially_stubborn: Vec<usize>,
    /// xi = 1: pure averaging, no anchor.
    pub non_stubborn: Vec<usize>,
}

impl AgentPartition {
    /// True when agent `i` keeps any anchor at all (xi < 1).
    pub fn is_stubborn(&self, i: usize) -> bool {
        !self.non_stubborn.contains(&i)
    }

    /// Membership mask over all n agents for `partially_stubborn` and
    /// `non_stubborn` combined, the set a path may pass through in the
    /// influence-support characterization.
    pub fn open_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in self.partially_stubborn.iter().chain(&self.non_stubborn) {
            mask[i] = true;
        }
        mask
    }
}

/// A validated influence network.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceNetwork {
    w: DMatrix<f64>,
    xi: DVector<f64>,
}

impl InfluenceNetwork {
    /// Validates and normalizes raw inputs.
    ///
    /// Weights must lie in [0, 1] up to `SNAP_TOL` slack; entries below
    /// `SNAP_TOL` are treated as absent arcs. Each row must sum to 1 within
    /// `ROW_SUM_TOL` and is renormalized to sum to 1 within 1e-12.
    /// Susceptibilities must lie in [0, 1] up to the same slack and are
    /// snapped to exact 0 or 1 when that close.
    pub fn new(w: Vec<Vec<f64>>, xi: Vec<f64>) -> Result<Self> {
        let n = w.len();
        if n == 0 {
            return Err(Error::DimensionMismatch {
                what: "network must have at least one agent".into(),
            });
        }
        for (i, row) in w.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("w[{i}] has {} entries, expected {n}", row.len()),
                });
            }
        }
        if xi.len() != n {
            return Err(Error::DimensionMismatch {
                what: format!("xi has {} entries, expected {n}", xi.len()),
            });
        }

        let mut w_mat = DMatrix::zeros(n, n);
        for (i, row) in w.iter().enumerate() {
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < -SNAP_TOL || v > 1.0 + SNAP_TOL {
                    return Err(Error::OutOfRangeEntry {
                        location: format!("w[{i}][{j}]"),
                        value: v,
                    });
                }
                let v = if v < SNAP_TOL {
                    0.0
                } else {
                    v.min(1.0)
                };
                w_mat[(i, j)] = v;
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NonStochasticRow { row: i, sum });
            }
            for j in 0..n {
                w_mat[(i, j)] /= sum;
            }
        }

        let mut xi_vec = DVector::zeros(n);
        for (i, &v) in xi.iter().enumerate() {
            if !v.is_finite() || v < -SNAP_TOL || v > 1.0 + SNAP_TOL {
                return Err(Error::OutOfRangeEntry {
                    location: format!("xi[{i}]"),
                    value: v,
                });
            }
            xi_vec[i] = if v < SNAP_TOL {
                0.0
            } else if (v - 1.0).abs() < SNAP_TOL {
                1.0
            } else {
                v
            };
        }

        Ok(InfluenceNetwork { w: w_mat, xi: xi_vec })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    /// The matrix with row `i` of `w` scaled by `xi[i]`, the linear part of
    /// one averaging step.
    pub fn xi_w(&self) -> DMatrix<f64> {
        let mut m = self.w.clone();
        for i in 0..self.n() {
            let s = self.xi[i];
            for j in 0..self.n() {
                m[(i, j)] *= s;
            }
        }
        m
    }

    /// Anchor weights `1 - xi` as a vector.
    pub fn anchor(&self) -> DVector<f64> {
        self.xi.map(|v| 1.0 - v)
    }

    pub fn partition(&self) -> AgentPartition {
        let mut p = AgentPartition {
            fully_stubborn: Vec::new(),
            partially_stubborn: Vec::new(),
            non_stubborn: Vec::new(),
        };
        for i in 0..self.n() {
            if self.xi[i] == 0.0 {
                p.fully_stubborn.push(i);
            } else if self.xi[i] == 1.0 {
                p.non_stubborn.push(i);
            } else {
                p.partially_stubborn.push(i);
            }
        }
        p
    }

    /// Agents with xi < 1, the ones whose initial opinions persist.
    pub fn stubborn_agents(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.xi[i] < 1.0).collect()
    }

    /// Information-flow digraph: arc `u -> v` iff `w[(v, u)] > 0`.
    pub fn graph(&self) -> Digraph {
        Digraph::from_support(&self.w, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap_pair() -> InfluenceNetwork {
        InfluenceNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn rows_renormalized_within_tolerance() {
        let net = InfluenceNetwork::new(
            vec![vec![0.5, 0.5 + 3e-10], vec![1.0, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        for i in 0..2 {
            let sum: f64 = net.w().row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn row_sum_too_far_off_is_rejected() {
        let err = InfluenceNetwork::new(vec![vec![0.5, 0.49], vec![1.0, 0.0]], vec![0.5, 0.5])
            .unwrap_err();
        assert!(matches!(err, Error::NonStochasticRow { row: 0, .. }));
    }

    #[test]
    fn zero_row_is_rejected() {
        let err = InfluenceNetwork::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5])
            .unwrap_err();
        assert!(matches!(err, Error::NonStochasticRow { row: 0, .. }));
    }

    #[test]
    fn negative_weight_is_rejected() {
        let err = InfluenceNetwork::new(vec![vec![-0.1, 1.1], vec![1.0, 0.0]], vec![0.5, 0.5])
            .unwrap_err();
        assert!(matches!(err, Error::OutOfRangeEntry { .. }));
    }

    #[test]
    fn susceptibility_out_of_range_is_rejected() {
        let err = InfluenceNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.5, 1.5])
            .unwrap_err();
        assert!(matches!(err, Error::OutOfRangeEntry { location, .. } if location == "xi[1]"));
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let err =
            InfluenceNetwork::new(vec![vec![1.0], vec![1.0, 0.0]], vec![0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn near_integer_susceptibilities_snap_exactly() {
        let net = InfluenceNetwork::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![5e-13, 1.0 - 5e-13],
        )
        .unwrap();
        assert_eq!(net.xi()[0], 0.0);
        assert_eq!(net.xi()[1], 1.0);
        let p = net.partition();
        assert_eq!(p.fully_stubborn, vec![0]);
        assert_eq!(p.non_stubborn, vec![1]);
        assert!(p.partially_stubborn.is_empty());
    }

    #[test]
    fn tiny_weights_are_dropped_from_the_graph() {
        let net = InfluenceNetwork::new(
            vec![vec![5e-13, 1.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(net.w()[(0, 0)], 0.0);
        // arc u -> v iff w[(v, u)] > 0, so only 0 -> 1 and 1 -> 0 remain
        assert_eq!(net.graph().out(0), &[1]);
        assert_eq!(net.graph().out(1), &[0]);
    }

    #[test]
    fn partition_splits_by_exact_class() {
        let net = InfluenceNetwork::new(
            vec![
                vec![0.0, 1.0, 0.0],
                vec![0.5, 0.0, 0.5],
                vec![0.0, 1.0, 0.0],
            ],
            vec![0.0, 0.3, 1.0],
        )
        .unwrap();
        let p = net.partition();
        assert_eq!(p.fully_stubborn, vec![0]);
        assert_eq!(p.partially_stubborn, vec![1]);
        assert_eq!(p.non_stubborn, vec![2]);
        assert_eq!(net.stubborn_agents(), vec![0, 1]);
    }

    #[test]
    fn xi_w_scales_rows() {
        let net = swap_pair();
        let m = net.xi_w();
        assert_eq!(m[(0, 1)], 0.5);
        assert_eq!(m[(1, 0)], 0.5);
        assert_eq!(net.anchor()[0], 0.5);
    }
}
