//! Communication graphs and doubly stochastic mixing matrices.
//!
//! Agents are indexed `0..N`. A [`Graph`] is undirected and simple (no
//! self-loops, no duplicate edges). [`max_degree_mixing`] turns a connected
//! graph into a symmetric doubly stochastic [`MixingMatrix`] and caches its
//! consensus contraction factor
//!
//! ```text
//! lambda_w = || W - (1/N) 1 1^T ||_2
//! ```
//!
//! computed by [`spectral_gap`] with power iteration.
//!
//! Graphs serialize to a plain edge list:
//!
//! ```text
//! N 4
//! 0 1
//! 1 2
//! 2 3
//! ```

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rng::derive;

/// Tolerance on row and column sums of a mixing matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Relative tolerance of the power iteration in [`spectral_gap`].
pub const POWER_TOL: f64 = 1e-10;

/// Iteration cap of the power iteration in [`spectral_gap`].
pub const POWER_MAX_ITERS: usize = 10_000;

/// Connectivity retries for random graphs before giving up.
pub const MAX_CONNECT_RETRIES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("graph needs at least {min} agents, got {got}")]
    TooFewAgents { got: usize, min: usize },
    #[error("edge probability must lie in (0, 1], got {0}")]
    BadEdgeProbability(f64),
    #[error("no connected graph after {0} attempts; edge probability too small")]
    ConnectivityRetriesExhausted(usize),
    #[error("self-loop at agent {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references an agent outside 0..{2}")]
    AgentOutOfRange(usize, usize, usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("matrix is not doubly stochastic: {0}")]
    NotDoublyStochastic(String),
    #[error("power iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("edge list parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Undirected simple graph over agents `0..n_agents`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_agents: usize,
    /// Stored as `(min, max)` pairs.
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Edgeless graph on `n_agents` vertices.
    pub fn empty(n_agents: usize) -> Result<Self, TopologyError> {
        if n_agents == 0 {
            return Err(TopologyError::TooFewAgents { got: 0, min: 1 });
        }
        Ok(Self {
            n_agents,
            edges: BTreeSet::new(),
        })
    }

    pub fn from_edges<I>(n_agents: usize, edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n_agents)?;
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<(), TopologyError> {
        if a >= self.n_agents || b >= self.n_agents {
            return Err(TopologyError::AgentOutOfRange(a, b, self.n_agents));
        }
        if a == b {
            return Err(TopologyError::SelfLoop(a));
        }
        if !self.edges.insert((a.min(b), a.max(b))) {
            return Err(TopologyError::DuplicateEdge(a, b));
        }
        Ok(())
    }

    pub fn complete(n_agents: usize) -> Result<Self, TopologyError> {
        let mut g = Self::empty(n_agents)?;
        for a in 0..n_agents {
            for b in a + 1..n_agents {
                g.edges.insert((a, b));
            }
        }
        Ok(g)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn line(n_agents: usize) -> Result<Self, TopologyError> {
        let mut g = Self::empty(n_agents)?;
        for a in 1..n_agents {
            g.edges.insert((a - 1, a));
        }
        Ok(g)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_agents];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_agents];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Breadth-first search from agent 0.
    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n_agents];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    reached += 1;
                    queue.push_back(u);
                }
            }
        }
        reached == self.n_agents
    }

    /// Serialize as `N <count>` followed by one `a b` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("N {}\n", self.n_agents);
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    /// Parse the format written by [`Graph::to_edge_list`]. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self, TopologyError> {
        let mut graph: Option<Graph> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: &str| TopologyError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            let mut fields = line.split_whitespace();
            let (first, second) = (fields.next(), fields.next());
            if fields.next().is_some() {
                return Err(parse_err("expected two fields"));
            }
            match (&mut graph, first, second) {
                (None, Some("N"), Some(count)) => {
                    let n = count
                        .parse::<usize>()
                        .map_err(|_| parse_err("bad agent count"))?;
                    graph = Some(Graph::empty(n)?);
                }
                (None, _, _) => return Err(parse_err("missing `N <count>` header")),
                (Some(g), Some(a), Some(b)) => {
                    let a = a.parse().map_err(|_| parse_err("bad agent index"))?;
                    let b = b.parse().map_err(|_| parse_err("bad agent index"))?;
                    g.add_edge(a, b)?;
                }
                (Some(_), _, _) => return Err(parse_err("expected `a b`")),
            }
        }
        graph.ok_or(TopologyError::Parse {
            line: 0,
            msg: "empty edge list".into(),
        })
    }
}

/// Graph families used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphKind {
    /// Erdős–Rényi `G(n, p)`, redrawn until connected.
    Random {
        p: f64,
    },
    Line,
    Complete,
}

pub fn gen_graph(kind: GraphKind, n: usize, seed: u64) -> Result<Graph, TopologyError> {
    if n < 2 {
        return Err(TopologyError::TooFewAgents { got: n, min: 2 });
    }
    match kind {
        GraphKind::Line => Graph::line(n),
        GraphKind::Complete => Graph::complete(n),
        GraphKind::Random { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(TopologyError::BadEdgeProbability(p));
            }
            for attempt in 0..MAX_CONNECT_RETRIES {
                let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, attempt as u64));
                let mut g = Graph::empty(n)?;
                for a in 0..n {
                    for b in a + 1..n {
                        if rng.gen::<f64>() < p {
                            g.edges.insert((a, b));
                        }
                    }
                }
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(TopologyError::ConnectivityRetriesExhausted(
                MAX_CONNECT_RETRIES,
            ))
        }
    }
}

/// Doubly stochastic `N x N` weights with the cached contraction factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    /// Row-major.
    weights: Vec<f64>,
    /// Non-zero entries of each row, `(column, weight)` in column order.
    rows: Vec<Vec<(usize, f64)>>,
    lambda_w: f64,
}

impl MixingMatrix {
    /// Validate a dense row-major matrix and compute `lambda_w`.
    ///
    /// Entries must be non-negative and every row and column must sum to one
    /// within [`STOCHASTIC_TOL`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TopologyError> {
        let n = check_square(rows)?;
        let weights: Vec<f64> = rows.iter().flatten().copied().collect();
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(TopologyError::NotDoublyStochastic(format!(
                "entry {bad} is negative or non-finite"
            )));
        }
        for i in 0..n {
            let row: f64 = weights[i * n..(i + 1) * n].iter().sum();
            let col: f64 = (0..n).map(|k| weights[k * n + i]).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TopologyError::NotDoublyStochastic(format!(
                    "row {i} sums to {row}"
                )));
            }
            if (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(TopologyError::NotDoublyStochastic(format!(
                    "column {i} sums to {col}"
                )));
            }
        }
        let lambda_w = spectral_gap_flat(&weights, n)?;
        let sparse = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let w = weights[i * n + j];
                        (w != 0.0).then_some((j, w))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            weights,
            rows: sparse,
            lambda_w,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn lambda_w(&self) -> f64 {
        self.lambda_w
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.n + col]
    }

    /// Dense copy of the weights, one `Vec` per row.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Non-zero `(column, weight)` pairs of `row`, including the self-weight.
    pub fn row_support(&self, row: usize) -> &[(usize, f64)] {
        &self.rows[row]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.weight(i, j) == self.weight(j, i)))
    }

    /// Number of directed communication links (non-zero off-diagonal entries).
    pub fn directed_links(&self) -> usize {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().filter(|(j, _)| *j != i).count())
            .sum()
    }

    /// `sum_m W[agent][m] * values[m]`, accumulated in column order.
    pub fn mix_into(&self, agent: usize, values: &[&[f64]], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(m, w) in &self.rows[agent] {
            crate::linalg::axpy(out, w, values[m]);
        }
    }

    pub fn mix(&self, agent: usize, values: &[&[f64]]) -> Vec<f64> {
        let mut out = vec![0.0; values[agent].len()];
        self.mix_into(agent, values, &mut out);
        out
    }

    /// Eigenvalues of a symmetric W lie in `(-1/3, 1)` (required by D²).
    ///
    /// The spectrum is bracketed by computing `lambda_max` of `I - W`
    /// through [`spectral_gap`]-style power iteration on the shifted matrix.
    pub fn min_eigenvalue(&self) -> Result<f64, TopologyError> {
        // For symmetric W with eigenvalues in [-1, 1], (I - W)/2 has its
        // spectrum in [0, 1]; its top eigenvalue gives 1 - lambda_min(W).
        let n = self.n;
        let shifted: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let id = if i == j { 1.0 } else { 0.0 };
                0.5 * (id - self.weights[k])
            })
            .collect();
        let top = top_singular_value(&shifted, n)?;
        Ok(1.0 - 2.0 * top)
    }
}

fn check_square(rows: &[Vec<f64>]) -> Result<usize, TopologyError> {
    let n = rows.len();
    if n == 0 {
        return Err(TopologyError::TooFewAgents { got: 0, min: 1 });
    }
    for (row, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(TopologyError::NotSquare {
                row,
                len: r.len(),
                expected: n,
            });
        }
    }
    Ok(n)
}

/// Max-degree weights: `1/(d_max+1)` on every edge and
/// `1 - d_n/(d_max+1)` on the diagonal.
pub fn max_degree_mixing(g: &Graph) -> Result<MixingMatrix, TopologyError> {
    if !g.is_connected() {
        return Err(TopologyError::Disconnected);
    }
    let n = g.n_agents();
    let deg = g.degrees();
    let d_max = deg.iter().copied().max().unwrap_or(0);
    let edge_w = 1.0 / (d_max as f64 + 1.0);
    let mut rows = vec![vec![0.0; n]; n];
    for (a, b) in g.edges() {
        rows[a][b] = edge_w;
        rows[b][a] = edge_w;
    }
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] = 1.0 - deg[i] as f64 / (d_max as f64 + 1.0);
    }
    MixingMatrix::from_rows(&rows)
}

/// Largest singular value of `W - (1/N) 1 1^T`.
pub fn spectral_gap(rows: &[Vec<f64>]) -> Result<f64, TopologyError> {
    let n = check_square(rows)?;
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    spectral_gap_flat(&flat, n)
}

fn spectral_gap_flat(weights: &[f64], n: usize) -> Result<f64, TopologyError> {
    let inv_n = 1.0 / n as f64;
    let centered: Vec<f64> = weights.iter().map(|w| w - inv_n).collect();
    top_singular_value(&centered, n)
}

/// Power iteration on `A^T A` for a row-major `n x n` matrix `A`.
fn top_singular_value(a: &[f64], n: usize) -> Result<f64, TopologyError> {
    if a.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    // Fixed, non-symmetric start so that no structured eigenvector is missed.
    let mut x: Vec<f64> = (0..n)
        .map(|i| (crate::rng::splitmix64(i as u64 + 1) >> 11) as f64 / (1u64 << 53) as f64 + 0.5)
        .collect();
    normalize(&mut x);
    let mut ax = vec![0.0; n];
    let mut atax = vec![0.0; n];
    let mut mu_prev = f64::NAN;
    for _ in 0..POWER_MAX_ITERS {
        mat_vec(a, n, &x, &mut ax);
        mat_t_vec(a, n, &ax, &mut atax);
        let mu = crate::linalg::dot(&x, &atax);
        let len = crate::linalg::norm(&atax);
        if len == 0.0 {
            return Ok(0.0);
        }
        if (mu - mu_prev).abs() <= POWER_TOL * mu.abs() {
            return Ok(mu.max(0.0).sqrt());
        }
        mu_prev = mu;
        for (xi, v) in x.iter_mut().zip(&atax) {
            *xi = v / len;
        }
    }
    Err(TopologyError::NoConvergence(POWER_MAX_ITERS))
}

fn normalize(x: &mut [f64]) {
    let len = crate::linalg::norm(x);
    crate::linalg::scale(x, 1.0 / len);
}

fn mat_vec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = crate::linalg::dot(&a[i * n..(i + 1) * n], x);
    }
}

fn mat_t_vec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, xi) in x.iter().enumerate() {
        crate::linalg::axpy(out, *xi, &a[i * n..(i + 1) * n]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|leaf| (0, leaf))).unwrap()
    }

    #[test]
    fn complete_graph_has_all_pairs() {
        let g = gen_graph(GraphKind::Complete, 4, 0).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert!(g.is_connected());
    }

    #[test]
    fn line_graph_edges() {
        let g = gen_graph(GraphKind::Line, 3, 0).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn generator_rejects_bad_inputs() {
        assert!(matches!(
            gen_graph(GraphKind::Line, 1, 0),
            Err(TopologyError::TooFewAgents { .. })
        ));
        assert!(matches!(
            gen_graph(GraphKind::Random { p: 0.0 }, 5, 0),
            Err(TopologyError::BadEdgeProbability(_))
        ));
        assert!(matches!(
            gen_graph(GraphKind::Random { p: 1e-9 }, 30, 0),
            Err(TopologyError::ConnectivityRetriesExhausted(1000))
        ));
    }

    #[test]
    fn graph_rejects_self_loops_and_duplicates() {
        assert_eq!(
            Graph::from_edges(3, [(1, 1)]),
            Err(TopologyError::SelfLoop(1))
        );
        assert_eq!(
            Graph::from_edges(3, [(0, 1), (1, 0)]),
            Err(TopologyError::DuplicateEdge(1, 0))
        );
    }

    #[test]
    fn complete_mixing_is_uniform() {
        let w = max_degree_mixing(&Graph::complete(4).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((w.weight(i, j) - 0.25).abs() < 1e-15);
            }
        }
        assert!(w.lambda_w().abs() < 1e-12);
    }

    #[test]
    fn line_mixing_matches_hand_matrix() {
        let w = max_degree_mixing(&Graph::line(3).unwrap()).unwrap();
        let expected = [
            [2.0 / 3.0, 1.0 / 3.0, 0.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [0.0, 1.0 / 3.0, 2.0 / 3.0],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((w.weight(i, j) - v).abs() < 1e-15);
            }
        }
        assert!((w.lambda_w() - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn star_mixing_rows() {
        let w = max_degree_mixing(&star(4)).unwrap();
        for j in 0..4 {
            assert!((w.weight(0, j) - 0.25).abs() < 1e-15);
        }
        for leaf in 1..4 {
            assert!((w.weight(leaf, 0) - 0.25).abs() < 1e-15);
            assert!((w.weight(leaf, leaf) - 0.75).abs() < 1e-15);
            let others: f64 = (1..4)
                .filter(|&j| j != leaf)
                .map(|j| w.weight(leaf, j))
                .sum();
            assert_eq!(others, 0.0);
        }
        for i in 0..4 {
            let row: f64 = (0..4).map(|j| w.weight(i, j)).sum();
            let col: f64 = (0..4).map(|j| w.weight(j, i)).sum();
            assert!((row - 1.0).abs() <= 1e-12 && (col - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn disconnected_graph_rejected() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(max_degree_mixing(&g), Err(TopologyError::Disconnected));
    }

    #[test]
    fn spectral_gap_trivial_cases() {
        let eye: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert!((spectral_gap(&eye).unwrap() - 1.0).abs() < 1e-10);
        let avg = vec![vec![0.2; 5]; 5];
        assert!(spectral_gap(&avg).unwrap().abs() < 1e-12);
        let ragged = vec![vec![1.0, 0.0], vec![1.0]];
        assert!(matches!(
            spectral_gap(&ragged),
            Err(TopologyError::NotSquare { .. })
        ));
    }

    #[test]
    fn non_stochastic_matrix_rejected() {
        let rows = vec![vec![0.5, 0.6], vec![0.5, 0.4]];
        assert!(matches!(
            MixingMatrix::from_rows(&rows),
            Err(TopologyError::NotDoublyStochastic(_))
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = gen_graph(GraphKind::Random { p: 0.3 }, 12, 5).unwrap();
        let parsed = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(parsed, g);
        assert!(Graph::parse_edge_list("0 1\n").is_err());
        assert!(Graph::parse_edge_list("N 2\n0 2\n").is_err());
    }

    #[test]
    fn min_eigenvalue_of_line() {
        // eigenvalues of the N=3 line max-degree matrix are {1, 2/3, 0}
        let w = max_degree_mixing(&Graph::line(3).unwrap()).unwrap();
        assert!(w.min_eigenvalue().unwrap().abs() < 1e-8);
    }
}
