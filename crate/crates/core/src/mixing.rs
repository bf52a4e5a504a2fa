//! Doubly stochastic mixing matrices and their spectral quantity.
//!
//! `rho = ||W - 11^T/n||_2` governs how quickly neighbor averaging contracts
//! disagreement between nodes: `rho = 0` means one round of mixing reaches
//! exact consensus, `rho = 1` means some disagreement never decays.

use alloc::vec::Vec;

use crate::linalg::{dot, norm, Matrix};
use crate::rng::CounterStream;
use crate::topology::Graph;

/// Tolerance used for the structural invariants of [`MixingMatrix`].
pub const STOCHASTIC_TOL: f64 = 1e-9;

pub const SINKHORN_DEFAULT_TOL: f64 = 1e-10;
pub const SINKHORN_DEFAULT_MAX_ITERS: usize = 100_000;

const POWER_REL_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;
const START_TAG: u64 = 0x0070_6f77_6572;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixingError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix must not be empty")]
    Empty,
    #[error("entry ({0}, {1}) is negative or not finite")]
    BadEntry(usize, usize),
    #[error("row or column {0} has no positive entry")]
    ZeroLine(usize),
    #[error("sinkhorn balancing did not reach tolerance after {iters} iterations (deviation {deviation})")]
    NonConvergence { iters: usize, deviation: f64 },
    #[error("matrix is not doubly stochastic (row dev {max_row_dev}, col dev {max_col_dev}, min entry {min_entry})")]
    NotDoublyStochastic { max_row_dev: f64, max_col_dev: f64, min_entry: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingScheme {
    /// Off-diagonal `1/n` on edges, diagonal `1 - deg_i/n`.
    Uniform,
    /// Off-diagonal `1/(deg_max + 1)` on edges, diagonal `1 - deg_i/(deg_max + 1)`.
    MaxDegree,
}

/// Dense doubly stochastic `n x n` matrix with its cached `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: Matrix,
    rho: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary matrix after checking that it is doubly
    /// stochastic within [`STOCHASTIC_TOL`].
    pub fn new(weights: Matrix) -> Result<Self, MixingError> {
        let report = verify_doubly_stochastic(&weights, STOCHASTIC_TOL)?;
        if !report.ok {
            return Err(MixingError::NotDoublyStochastic {
                max_row_dev: report.max_row_dev,
                max_col_dev: report.max_col_dev,
                min_entry: report.min_entry,
            });
        }
        let rho = doubly_stochastic_rho(&weights)?;
        Ok(Self { weights, rho })
    }

    pub fn identity(n: usize) -> Self {
        Self { weights: Matrix::identity(n), rho: if n > 1 { 1.0 } else { 0.0 } }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }
}

pub fn build_mixing(g: &Graph, scheme: MixingScheme) -> MixingMatrix {
    let n = g.n();
    let deg = g.degrees();
    let denom = match scheme {
        MixingScheme::Uniform => n,
        MixingScheme::MaxDegree => deg.iter().copied().max().unwrap_or(0) + 1,
    };
    let off = 1.0 / denom as f64;
    let mut w = Matrix::zeros(n, n);
    for (i, j) in g.edges() {
        w[(i, j)] = off;
        w[(j, i)] = off;
    }
    // (D - N_i) / D rather than 1 - N_i / D, so a diagonal equal to the
    // off-diagonal weight is the same double.
    for (i, &d) in deg.iter().enumerate() {
        w[(i, i)] = (denom - d) as f64 / denom as f64;
    }
    let rho = doubly_stochastic_rho(&w).expect("square by construction");
    MixingMatrix { weights: w, rho }
}

/// Alternately normalizes rows and columns until every row and column sum is
/// within `tol` of one. Zero entries stay zero.
pub fn sinkhorn_balance(seed: &Matrix, tol: f64, max_iters: usize) -> Result<MixingMatrix, MixingError> {
    check_square(seed)?;
    let n = seed.rows();
    for i in 0..n {
        for j in 0..n {
            let v = seed[(i, j)];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(MixingError::BadEntry(i, j));
            }
        }
    }
    let rows = seed.row_sums();
    let cols = seed.col_sums();
    if let Some(i) = rows.iter().chain(&cols).position(|&s| s <= 0.0) {
        return Err(MixingError::ZeroLine(i % n));
    }

    let mut w = seed.clone();
    let mut deviation = f64::INFINITY;
    for _ in 0..max_iters {
        let rs = w.row_sums();
        for (i, s) in rs.iter().enumerate() {
            let inv = 1.0 / s;
            w.row_mut(i).iter_mut().for_each(|x| *x *= inv);
        }
        let cs = w.col_sums();
        for i in 0..n {
            for (x, s) in w.row_mut(i).iter_mut().zip(&cs) {
                *x /= s;
            }
        }
        // columns are exact after the column pass; rows carry the residual
        deviation = max_deviation(&w.row_sums()).max(max_deviation(&w.col_sums()));
        if deviation <= tol {
            let rho = doubly_stochastic_rho(&w)?;
            return Ok(MixingMatrix { weights: w, rho });
        }
    }
    Err(MixingError::NonConvergence { iters: max_iters, deviation })
}

fn max_deviation(sums: &[f64]) -> f64 {
    sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
}

fn check_square(w: &Matrix) -> Result<(), MixingError> {
    if !w.is_square() {
        return Err(MixingError::NotSquare { rows: w.rows(), cols: w.cols() });
    }
    if w.rows() == 0 {
        return Err(MixingError::Empty);
    }
    Ok(())
}

// For doubly stochastic W, rho <= ||W|| ||I - 11^T/n|| = 1; the clamp only
// removes power-iteration rounding above that.
fn doubly_stochastic_rho(w: &Matrix) -> Result<f64, MixingError> {
    spectral_gap(w).map(|r| r.min(1.0))
}

/// `||W - 11^T/n||_2`, estimated by power iteration on `M M^T`.
pub fn spectral_gap(w: &Matrix) -> Result<f64, MixingError> {
    check_square(w)?;
    let n = w.rows();
    if n == 1 {
        return Ok(0.0);
    }
    let shift = 1.0 / n as f64;
    let mut m = w.clone();
    for i in 0..n {
        m.row_mut(i).iter_mut().for_each(|x| *x -= shift);
    }
    Ok(operator_norm(&m))
}

/// Largest singular value of `m` by power iteration on `M M^T`.
///
/// The start vector is the normalized all-ones vector plus a fixed
/// pseudo-random perturbation of size up to `1e-3` on every coordinate.
/// Perturbing a single coordinate is not enough: if node 0 is adjacent to
/// every other node under the uniform scheme, `e_0` lies in the null space
/// of `W - 11^T/n`. Stops when the eigenvalue estimate
/// changes by at most `1e-10` relative, or after 10,000 iterations.
pub fn operator_norm(m: &Matrix) -> f64 {
    let n = m.rows();
    if n == 0 || m.cols() == 0 {
        return 0.0;
    }
    let start = CounterStream::new(0, START_TAG, n as u64, 0);
    let mut v: Vec<f64> = (0..n).map(|k| 1.0 / libm::sqrt(n as f64) + 1e-3 * (start.uniform(k as u64) - 0.5)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        // u = M M^T v
        let u = m.matvec(&m.matvec_transposed(&v));
        let next = dot(&v, &u);
        let len = norm(&u);
        if len == 0.0 || !len.is_finite() {
            return 0.0;
        }
        v = u;
        v.iter_mut().for_each(|x| *x /= len);
        let converged = (next - lambda).abs() <= POWER_REL_TOL * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    libm::sqrt(lambda.max(0.0))
}

fn normalize(v: &mut [f64]) {
    let len = norm(v);
    v.iter_mut().for_each(|x| *x /= len);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticReport {
    pub ok: bool,
    pub max_row_dev: f64,
    pub max_col_dev: f64,
    pub min_entry: f64,
}

pub fn verify_doubly_stochastic(w: &Matrix, tol: f64) -> Result<StochasticReport, MixingError> {
    check_square(w)?;
    let max_row_dev = max_deviation(&w.row_sums());
    let max_col_dev = max_deviation(&w.col_sums());
    let min_entry = w.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let ok = min_entry >= -tol && max_row_dev <= tol && max_col_dev <= tol;
    Ok(StochasticReport { ok, max_row_dev, max_col_dev, min_entry })
}

/// Nonzero off-diagonal pattern check: `W[i][j] == 0` for every non-edge.
pub fn respects_graph(w: &MixingMatrix, g: &Graph) -> bool {
    let n = w.n();
    n == g.n() && (0..n).all(|i| (0..n).all(|j| i == j || g.has_edge(i, j) || w.get(i, j) == 0.0))
}

/// `W^t` by repeated multiplication, for contraction checks.
pub fn matrix_power(w: &Matrix, t: usize) -> Matrix {
    let mut out = Matrix::identity(w.rows());
    for _ in 0..t {
        out = out.matmul(w).expect("square");
    }
    out
}

/// Sparse row view: the `(j, W[i][j])` pairs with nonzero weight.
pub fn sparse_rows(w: &MixingMatrix) -> Vec<Vec<(usize, f64)>> {
    w.weights
        .iter_rows()
        .map(|r| r.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(j, &x)| (j, x)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_topology, TopologyKind};
    use proptest::prelude::*;

    fn graph(kind: TopologyKind, n: usize) -> Graph {
        build_topology(kind, n, 3).unwrap()
    }

    #[test]
    fn ring3_uniform_is_all_thirds() {
        let w = build_mixing(&graph(TopologyKind::Ring, 3), MixingScheme::Uniform);
        for &x in w.weights().as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(w.rho() < 1e-8);
    }

    #[test]
    fn ring4_max_degree_is_circulant() {
        let w = build_mixing(&graph(TopologyKind::Ring, 4), MixingScheme::MaxDegree);
        let t = 1.0 / 3.0;
        let first = [t, t, 0.0, t];
        for i in 0..4 {
            for j in 0..4 {
                assert!((w.get(i, j) - first[(j + 4 - i) % 4]).abs() < 1e-15);
            }
        }
        assert!((w.rho() - 1.0 / 3.0).abs() < 1e-8, "{}", w.rho());
    }

    #[test]
    fn disconnected_gives_identity() {
        for scheme in [MixingScheme::Uniform, MixingScheme::MaxDegree] {
            let w = build_mixing(&graph(TopologyKind::Disconnected, 5), scheme);
            assert_eq!(w.weights(), &Matrix::identity(5));
            assert!((w.rho() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn hub_node_does_not_hide_the_dominant_direction() {
        // node 0 adjacent to all: its row of W - J/n vanishes under the uniform scheme
        let g = Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (3, 4)]).unwrap();
        let w = build_mixing(&g, MixingScheme::Uniform);
        assert!((w.rho() - rho_by_eigensolve(&w)).abs() < 1e-8, "{}", w.rho());
        assert!(w.rho() > 0.1);
    }

    #[test]
    fn spectral_values() {
        assert!((spectral_gap(&Matrix::identity(4)).unwrap() - 1.0).abs() < 1e-8);
        assert!(spectral_gap(&Matrix::filled(3, 3, 1.0 / 3.0)).unwrap() < 1e-8);
        assert_eq!(spectral_gap(&Matrix::identity(1)).unwrap(), 0.0);
        assert!(matches!(spectral_gap(&Matrix::zeros(2, 3)), Err(MixingError::NotSquare { .. })));
    }

    #[test]
    fn sinkhorn_examples() {
        let j3 = Matrix::filled(3, 3, 1.0 / 3.0);
        let w = sinkhorn_balance(&j3, 1e-10, 10).unwrap();
        assert_eq!(w.weights(), &j3);

        let d = Matrix::from_rows(&[[2.0, 0.0], [0.0, 5.0]]).unwrap();
        assert_eq!(sinkhorn_balance(&d, 1e-10, 10).unwrap().weights(), &Matrix::identity(2));

        let ones = Matrix::filled(2, 2, 1.0);
        let w = sinkhorn_balance(&ones, 1e-10, 10).unwrap();
        assert_eq!(w.weights(), &Matrix::filled(2, 2, 0.5));
        assert_eq!(w.weights().col_sums(), [1.0, 1.0]);
    }

    #[test]
    fn sinkhorn_preserves_zero_pattern_and_reports_failure() {
        let seed = Matrix::from_rows(&[[3.0, 1.0, 0.0], [1.0, 1.0, 2.0], [0.0, 5.0, 1.0]]).unwrap();
        let w = sinkhorn_balance(&seed, 1e-12, 100_000).unwrap();
        assert_eq!(w.get(0, 2), 0.0);
        assert_eq!(w.get(2, 0), 0.0);
        assert!(verify_doubly_stochastic(w.weights(), 1e-10).unwrap().ok);

        // [[1,1],[0,1]] has no total support; balancing only approaches I.
        let tri = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sinkhorn_balance(&tri, 1e-10, 50), Err(MixingError::NonConvergence { iters: 50, .. })));
        let zero_row = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(sinkhorn_balance(&zero_row, 1e-10, 5), Err(MixingError::ZeroLine(0)));
    }

    #[test]
    fn verify_examples() {
        let r = verify_doubly_stochastic(&Matrix::filled(3, 3, 1.0 / 3.0), 1e-9).unwrap();
        assert!(r.ok);
        let bad = Matrix::from_rows(&[[0.9, 0.2], [0.1, 0.8]]).unwrap();
        let r = verify_doubly_stochastic(&bad, 1e-9).unwrap();
        assert!(!r.ok);
        assert!((r.max_row_dev - 0.1).abs() < 1e-12);
        assert!(r.max_col_dev < 1e-12);
        assert!(verify_doubly_stochastic(&Matrix::identity(4), 0.0).unwrap().ok);
        assert!(MixingMatrix::new(bad).is_err());
    }

    /// Dense symmetric eigensolve as an independent route to `rho`.
    fn rho_by_eigensolve(w: &MixingMatrix) -> f64 {
        let n = w.n();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| w.get(i, j) - 1.0 / n as f64);
        dense.symmetric_eigen().eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    fn kind_strategy() -> impl Strategy<Value = (TopologyKind, usize)> {
        (2usize..=16).prop_flat_map(|n| {
            prop_oneof![
                Just(TopologyKind::Ring),
                Just(TopologyKind::Complete),
                Just(TopologyKind::Disconnected),
                (0..n).prop_map(TopologyKind::RandomK),
                ((0..n), 0.0..=1.0f64).prop_map(|(k, p)| TopologyKind::WattsStrogatz { k, p }),
            ]
            .prop_map(move |k| (k, n))
        })
    }

    proptest! {
        #[test]
        fn closed_forms_satisfy_invariants(
            (kind, n) in kind_strategy(),
            seed in any::<u64>(),
            max_degree in any::<bool>(),
        ) {
            let g = build_topology(kind, n, seed).unwrap();
            let scheme = if max_degree { MixingScheme::MaxDegree } else { MixingScheme::Uniform };
            let w = build_mixing(&g, scheme);
            prop_assert!(verify_doubly_stochastic(w.weights(), STOCHASTIC_TOL).unwrap().ok);
            prop_assert!(w.weights().as_slice().iter().all(|&x| x >= 0.0));
            prop_assert!(respects_graph(&w, &g));
            prop_assert_eq!(w.weights(), &w.weights().transpose());
            prop_assert!(w.rho() >= 0.0 && w.rho() <= 1.0 + STOCHASTIC_TOL);
            let exact = rho_by_eigensolve(&w);
            prop_assert!((w.rho() - exact).abs() < 1e-6, "power {} vs eig {}", w.rho(), exact);
            // ||W||_2 = 1 for doubly stochastic W
            prop_assert!((operator_norm(w.weights()) - 1.0).abs() < 1e-6);
        }
    }
}
