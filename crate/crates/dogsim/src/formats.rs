//! Text formats written and read by the harness. All decimals use 17
//! significant digits (`%.17g`) and LF line endings.

use std::fmt::Write;

use dogsim_core::fmt::g17;
use dogsim_core::linalg::Matrix;
use dogsim_core::metrics::MetricsRecord;
use dogsim_core::topology::Graph;

use crate::error::CliError;

pub const METRICS_HEADER: &str = "t,avg_loss,consensus_error,cum_loss";

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{},{},{}", r.t, g17(r.avg_loss), g17(r.consensus_error), g17(r.cum_loss));
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(CliError::Config(format!("metrics csv must start with {METRICS_HEADER:?}")));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad = || CliError::Config(format!("metrics csv line {}: {line:?}", k + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(MetricsRecord {
                t: f[0].parse().map_err(|_| bad())?,
                avg_loss: f[1].parse().map_err(|_| bad())?,
                consensus_error: f[2].parse().map_err(|_| bad())?,
                cum_loss: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(|&x| g17(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix, CliError> {
    let rows: Result<Vec<Vec<f64>>, CliError> = text
        .lines()
        .enumerate()
        .map(|(k, line)| {
            line.split(',')
                .map(|c| c.parse::<f64>().map_err(|_| CliError::Config(format!("matrix csv line {}: {c:?}", k + 1))))
                .collect()
        })
        .collect();
    Matrix::from_rows(&rows?).ok_or_else(|| CliError::Config("matrix csv rows have different lengths".into()))
}

/// `n=<count>` then one `i j` line per edge, ascending.
pub fn edge_list(g: &Graph) -> String {
    let mut out = format!("n={}\n", g.n());
    for (i, j) in g.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    out
}

pub fn parse_edge_list(text: &str) -> Result<Graph, CliError> {
    let mut lines = text.lines();
    let n = lines
        .next()
        .and_then(|l| l.strip_prefix("n="))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| CliError::Config("edge list must start with n=<count>".into()))?;
    let mut edges = Vec::new();
    for (k, line) in lines.enumerate() {
        let bad = || CliError::Config(format!("edge list line {}: {line:?}", k + 2));
        let (i, j) = line.split_once(' ').ok_or_else(bad)?;
        edges.push((i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?));
    }
    Graph::from_edges(n, edges).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dogsim_core::topology::{build_topology, TopologyKind};

    #[test]
    fn metrics_layout() {
        let recs = [
            MetricsRecord { t: 1, avg_loss: std::f64::consts::LN_2, consensus_error: 0.0, cum_loss: 1.0 / 3.0 },
            MetricsRecord { t: 2, avg_loss: 0.5, consensus_error: 1e-20, cum_loss: 2.0 },
        ];
        let csv = metrics_csv(&recs);
        assert_eq!(
            csv,
            "t,avg_loss,consensus_error,cum_loss\n\
             1,0.69314718055994529,0,0.33333333333333331\n\
             2,0.5,9.9999999999999995e-21,2\n"
        );
        assert_eq!(parse_metrics_csv(&csv).unwrap(), recs);
    }

    #[test]
    fn edge_list_layout() {
        let g = build_topology(TopologyKind::Ring, 4, 0).unwrap();
        let text = edge_list(&g);
        assert_eq!(text, "n=4\n0 1\n0 3\n1 2\n2 3\n");
        assert_eq!(parse_edge_list(&text).unwrap(), g);
        assert!(parse_edge_list("4\n0 1\n").is_err());
        assert!(parse_edge_list("n=2\n0 0\n").is_err());
    }

    #[test]
    fn matrix_layout() {
        let m = Matrix::from_rows(&[[1.0 / 3.0, 2.0 / 3.0], [2.0 / 3.0, 1.0 / 3.0]]).unwrap();
        let csv = matrix_csv(&m);
        assert_eq!(csv, "0.33333333333333331,0.66666666666666663\n0.66666666666666663,0.33333333333333331\n");
        assert_eq!(parse_matrix_csv(&csv).unwrap(), m);
    }
}
