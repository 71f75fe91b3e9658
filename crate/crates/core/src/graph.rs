//! Undirected communication graphs, Laplacian spectra and switching
//! schedules.
//!
//! Agent indices are 0-based everywhere.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;

/// Laplacian eigenvalues below this are treated as zero.
pub const CONNECTIVITY_THRESHOLD: f64 = 1e-10;

/// A connected, undirected, unweighted graph with its Laplacian spectrum.
#[derive(Clone, Debug)]
pub struct Topology {
    n_agents: usize,
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    lambda2: f64,
    lambda_max: f64,
    neighbors: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Builds a topology from a symmetric 0/1 adjacency matrix with zero
    /// diagonal. Disconnected graphs are rejected.
    pub fn from_adjacency(adjacency: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(Error::NotSquare(rows, cols));
        }
        if rows < 2 {
            return Err(Error::TooFewNodes(rows));
        }
        for r in 0..rows {
            for c in 0..cols {
                let v = adjacency[(r, c)];
                if (v != 0.0 && v != 1.0) || (r == c && v != 0.0) {
                    return Err(Error::BadEntries(r, c));
                }
                if v != adjacency[(c, r)] {
                    return Err(Error::NonSymmetric(r, c));
                }
            }
        }

        let n = rows;
        let mut laplacian = -adjacency.clone();
        for r in 0..n {
            laplacian[(r, r)] = adjacency.row(r).sum();
        }
        let ev = sym_eigenvalues(&laplacian);
        let lambda2 = ev[1];
        let lambda_max = ev[n - 1];
        if lambda2 < CONNECTIVITY_THRESHOLD {
            return Err(Error::Disconnected(lambda2));
        }

        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[(i, j)] == 1.0).collect())
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if adjacency[(i, j)] == 1.0 {
                    edges.push((i, j));
                }
            }
        }

        Ok(Self {
            n_agents: n,
            adjacency: adjacency.clone(),
            laplacian,
            lambda2,
            lambda_max,
            neighbors,
            edges,
        })
    }

    /// Builds a topology from an undirected edge list. Duplicate edges
    /// collapse; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = DMatrix::zeros(n_agents, n_agents);
        for &(i, j) in edges {
            if i >= n_agents {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: n_agents,
                });
            }
            if j >= n_agents {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: n_agents,
                });
            }
            if i == j {
                return Err(Error::BadEntries(i, j));
            }
            adj[(i, j)] = 1.0;
            adj[(j, i)] = 1.0;
        }
        Self::from_adjacency(&adj)
    }

    /// The degenerate one-agent network: no edges, consensus is inert.
    /// Spectral quantities are reported as zero.
    pub fn single_agent() -> Self {
        Self {
            n_agents: 1,
            adjacency: DMatrix::zeros(1, 1),
            laplacian: DMatrix::zeros(1, 1),
            lambda2: 0.0,
            lambda_max: 0.0,
            neighbors: vec![Vec::new()],
            edges: Vec::new(),
        }
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn ring(n: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Algebraic connectivity λ_G.
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_single_agent(&self) -> bool {
        self.n_agents == 1
    }
}

/// Smallest algebraic connectivity among connected graphs on `n` nodes,
/// attained by the path graph: `2(1 − cos(π/n))`.
pub fn line_graph_connectivity_floor(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    Ok(2.0 * (1.0 - (std::f64::consts::PI / n as f64).cos()))
}

/// One constant piece of a switching signal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub topology: usize,
}

/// Piecewise-constant, right-continuous selection σ(t) over a family of
/// connected graphs.
#[derive(Clone, Debug)]
pub struct SwitchingSchedule {
    topologies: Vec<Topology>,
    segments: Vec<Segment>,
    dwell_min: f64,
}

impl SwitchingSchedule {
    pub fn new(topologies: Vec<Topology>, segments: Vec<Segment>, dwell_min: f64) -> Result<Self> {
        if topologies.is_empty() {
            return Err(Error::Schedule("no topologies".into()));
        }
        if segments.is_empty() {
            return Err(Error::Schedule("no segments".into()));
        }
        if !(dwell_min > 0.0 && dwell_min.is_finite()) {
            return Err(Error::Schedule(format!(
                "dwell_min must be positive, got {dwell_min}"
            )));
        }
        let n = topologies[0].n_agents();
        if topologies.iter().any(|t| t.n_agents() != n) {
            return Err(Error::Schedule(
                "topologies disagree on the number of agents".into(),
            ));
        }
        if segments[0].start != 0.0 {
            return Err(Error::Schedule(format!(
                "first segment must start at 0, got {}",
                segments[0].start
            )));
        }
        for s in &segments {
            if s.topology >= topologies.len() {
                return Err(Error::Schedule(format!(
                    "segment at t = {} selects topology {} of {}",
                    s.start,
                    s.topology,
                    topologies.len()
                )));
            }
        }
        for w in segments.windows(2) {
            let gap = w[1].start - w[0].start;
            if !(gap > 0.0) {
                return Err(Error::Schedule(
                    "segment start times must increase strictly".into(),
                ));
            }
            // small slack for decimal start times such as 0.1 steps
            if gap < dwell_min * (1.0 - 1e-12) {
                return Err(Error::Schedule(format!(
                    "switch at t = {} violates dwell time {dwell_min} (gap {gap})",
                    w[1].start
                )));
            }
        }
        Ok(Self {
            topologies,
            segments,
            dwell_min,
        })
    }

    /// A schedule that never switches.
    pub fn fixed(topology: Topology) -> Self {
        Self {
            topologies: vec![topology],
            segments: vec![Segment {
                start: 0.0,
                topology: 0,
            }],
            dwell_min: f64::INFINITY,
        }
    }

    /// Index of the topology active at time `t` (right-continuous at switch
    /// instants; times before 0 map to the first segment).
    pub fn active_topology(&self, t: f64) -> usize {
        let k = self.segments.partition_point(|s| s.start <= t);
        self.segments[k.saturating_sub(1)].topology
    }

    pub fn topology(&self, index: usize) -> &Topology {
        &self.topologies[index]
    }

    pub fn topologies(&self) -> &[Topology] {
        &self.topologies
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn dwell_min(&self) -> f64 {
        self.dwell_min
    }

    pub fn n_agents(&self) -> usize {
        self.topologies[0].n_agents()
    }

    /// λ_{G,m}: smallest algebraic connectivity over the family.
    pub fn lambda_g_min(&self) -> f64 {
        self.topologies
            .iter()
            .map(Topology::lambda2)
            .fold(f64::INFINITY, f64::min)
    }

    /// λ_{G,M}: largest Laplacian eigenvalue over the family.
    pub fn lambda_max_max(&self) -> f64 {
        self.topologies
            .iter()
            .map(Topology::lambda_max)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_node_path() {
        let t = Topology::from_adjacency(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(t.lambda2(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.lambda_max(), 2.0, epsilon = 1e-12);
        assert_eq!(t.edges(), &[(0, 1)]);
    }

    #[test]
    fn complete_three() {
        let t = Topology::complete(3).unwrap();
        // 3I - 11ᵀ has eigenvalues {0, 3, 3}
        assert_abs_diff_eq!(t.lambda2(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.lambda_max(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn path_ten_matches_closed_form() {
        let t = Topology::path(10).unwrap();
        let floor = line_graph_connectivity_floor(10).unwrap();
        assert_abs_diff_eq!(t.lambda2(), floor, epsilon = 1e-12);
        assert_abs_diff_eq!(floor, 0.097886967, epsilon = 1e-8);
    }

    #[test]
    fn floor_values() {
        assert_abs_diff_eq!(
            line_graph_connectivity_floor(2).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        let f4 = line_graph_connectivity_floor(4).unwrap();
        assert_abs_diff_eq!(f4, 0.585786437, epsilon = 1e-8);
        assert_abs_diff_eq!(f4, Topology::path(4).unwrap().lambda2(), epsilon = 1e-12);
        assert!(matches!(
            line_graph_connectivity_floor(1),
            Err(Error::TooFewNodes(1))
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let nonsym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            Topology::from_adjacency(&nonsym),
            Err(Error::NonSymmetric(..))
        ));
        let loopy = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            Topology::from_adjacency(&loopy),
            Err(Error::BadEntries(0, 0))
        ));
        let weighted = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!(matches!(
            Topology::from_adjacency(&weighted),
            Err(Error::BadEntries(..))
        ));
        assert!(matches!(
            Topology::from_edges(4, &[(0, 1), (2, 3)]),
            Err(Error::Disconnected(_))
        ));
        assert!(matches!(
            Topology::from_edges(1, &[]),
            Err(Error::TooFewNodes(1))
        ));
        assert!(matches!(
            Topology::from_edges(3, &[(0, 5)]),
            Err(Error::IndexOutOfRange { index: 5, len: 3 })
        ));
    }

    #[test]
    fn laplacian_rows_and_columns_sum_to_zero() {
        let t = Topology::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 3), (1, 4)]).unwrap();
        let l = t.laplacian();
        for i in 0..5 {
            assert_eq!(l.row(i).sum(), 0.0);
            assert_eq!(l.column(i).sum(), 0.0);
        }
        assert!(t.lambda_max() <= 2.0 * t.max_degree() as f64 + 1e-12);
    }

    fn two_piece() -> SwitchingSchedule {
        let topos = vec![
            Topology::ring(4).unwrap(),
            Topology::path(4).unwrap(),
            Topology::complete(4).unwrap(),
        ];
        SwitchingSchedule::new(
            topos,
            vec![
                Segment {
                    start: 0.0,
                    topology: 1,
                },
                Segment {
                    start: 5.0,
                    topology: 2,
                },
            ],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn active_topology_is_right_continuous() {
        let s = two_piece();
        assert_eq!(s.active_topology(4.99), 1);
        assert_eq!(s.active_topology(5.0), 2);
        assert_eq!(s.active_topology(0.0), 1);
        assert_eq!(s.active_topology(1e9), 2);
    }

    #[test]
    fn constant_schedule() {
        let topos = (0..4).map(|_| Topology::ring(5).unwrap()).collect();
        let s = SwitchingSchedule::new(
            topos,
            vec![Segment {
                start: 0.0,
                topology: 3,
            }],
            0.5,
        )
        .unwrap();
        for t in [0.0, 0.3, 17.0, 1e6] {
            assert_eq!(s.active_topology(t), 3);
        }
    }

    #[test]
    fn schedule_validation() {
        let topos = || vec![Topology::ring(4).unwrap(), Topology::path(4).unwrap()];
        let seg = |start, topology| Segment { start, topology };
        assert!(SwitchingSchedule::new(topos(), vec![seg(0.0, 0), seg(0.5, 1)], 1.0).is_err());
        assert!(SwitchingSchedule::new(topos(), vec![seg(0.0, 0), seg(2.0, 7)], 1.0).is_err());
        assert!(SwitchingSchedule::new(topos(), vec![seg(1.0, 0)], 1.0).is_err());
        assert!(SwitchingSchedule::new(topos(), vec![seg(0.0, 0), seg(0.0, 1)], 1.0).is_err());
        let mixed = vec![Topology::ring(4).unwrap(), Topology::ring(5).unwrap()];
        assert!(SwitchingSchedule::new(mixed, vec![seg(0.0, 0)], 1.0).is_err());
        let s = SwitchingSchedule::new(topos(), vec![seg(0.0, 0), seg(1.0, 1), seg(2.0, 0)], 1.0)
            .unwrap();
        assert_abs_diff_eq!(
            s.lambda_g_min(),
            Topology::path(4).unwrap().lambda2(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(s.lambda_max_max(), 4.0, epsilon = 1e-12);
    }
}
