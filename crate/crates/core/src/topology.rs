//! Undirected communication graphs.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::SeqRng;

const TOPOLOGY_TAG: u64 = 0x746f_706f;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("a graph needs at least one node")]
    EmptyGraph,
    #[error("degree parameter k = {k} must be below the node count {n}")]
    DegreeTooLarge { k: usize, n: usize },
    #[error("rewiring probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("edge ({0}, {1}) is a self-loop or out of range")]
    BadEdge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyKind {
    Ring,
    Complete,
    Disconnected,
    /// Each node picks `k` distinct partners; the graph is the undirected union.
    RandomK(usize),
    /// `k`-nearest ring lattice with every lattice edge rewired with probability `p`.
    WattsStrogatz {
        k: usize,
        p: f64,
    },
}

/// Simple undirected graph on nodes `0..n`. Edges are stored as `(lo, hi)`
/// pairs with `lo < hi`, in ascending lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn empty(n: usize) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::EmptyGraph);
        }
        Ok(Self { n, edges: BTreeSet::new() })
    }

    /// Builds a graph from an edge list, normalizing orientation and
    /// dropping duplicates.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n)?;
        for (i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(TopologyError::BadEdge(i, j));
            }
            g.insert(i, j);
        }
        Ok(g)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&ordered(i, j))
    }

    fn insert(&mut self, i: usize, j: usize) -> bool {
        self.edges.insert(ordered(i, j))
    }

    fn remove(&mut self, i: usize, j: usize) -> bool {
        self.edges.remove(&ordered(i, j))
    }

    /// Neighbor count of every node (self excluded).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

#[inline]
fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Generates a graph. Output is a pure function of `(kind, n, seed)`.
pub fn build_topology(kind: TopologyKind, n: usize, seed: u64) -> Result<Graph, TopologyError> {
    let mut g = Graph::empty(n)?;
    match kind {
        TopologyKind::Disconnected => {}
        TopologyKind::Complete => {
            for i in 0..n {
                for j in i + 1..n {
                    g.insert(i, j);
                }
            }
        }
        TopologyKind::Ring => {
            // n = 2 collapses to a single edge, n = 1 to nothing.
            for i in 0..n {
                let j = (i + 1) % n;
                if i != j {
                    g.insert(i, j);
                }
            }
        }
        TopologyKind::RandomK(k) => {
            check_degree(k, n)?;
            let mut rng = SeqRng::new(seed, TOPOLOGY_TAG);
            let mut others: Vec<usize> = Vec::with_capacity(n.saturating_sub(1));
            for i in 0..n {
                others.clear();
                others.extend((0..n).filter(|&j| j != i));
                // partial Fisher-Yates: first k slots are a uniform k-subset
                for s in 0..k {
                    let pick = s + rng.below(others.len() - s);
                    others.swap(s, pick);
                    g.insert(i, others[s]);
                }
            }
        }
        TopologyKind::WattsStrogatz { k, p } => {
            check_degree(k, n)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(TopologyError::BadProbability(p));
            }
            watts_strogatz(&mut g, k, p, seed);
        }
    }
    Ok(g)
}

fn check_degree(k: usize, n: usize) -> Result<(), TopologyError> {
    if k >= n {
        Err(TopologyError::DegreeTooLarge { k, n })
    } else {
        Ok(())
    }
}

/// Ring lattice where node `i` links to `i+1..=i+k/2` (mod n), then each
/// lattice edge `(i, i+s)` is visited in order and, with probability `p`,
/// has its far endpoint moved to a uniformly chosen node. A target that
/// would create a self-loop or duplicate is redrawn up to `n` times; after
/// that the original edge is kept.
fn watts_strogatz(g: &mut Graph, k: usize, p: f64, seed: u64) {
    let n = g.n;
    let half = k / 2;
    for i in 0..n {
        for s in 1..=half {
            let j = (i + s) % n;
            if i != j {
                g.insert(i, j);
            }
        }
    }
    if p == 0.0 {
        return;
    }
    let mut rng = SeqRng::new(seed, TOPOLOGY_TAG ^ 0x5757);
    for s in 1..=half {
        for i in 0..n {
            let j = (i + s) % n;
            if i == j || !g.has_edge(i, j) {
                continue;
            }
            if rng.next_f64() >= p {
                continue;
            }
            for _ in 0..n {
                let target = rng.below(n);
                if target != i && !g.has_edge(i, target) {
                    g.remove(i, j);
                    g.insert(i, target);
                    break;
                }
            }
        }
    }
}

/// True iff the graph has a single connected component.
pub fn is_connected(g: &Graph) -> bool {
    let adj = g.neighbors();
    let mut seen = vec![false; g.n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == g.n
}
