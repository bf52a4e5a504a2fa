//! Real datasets: LIBSVM text, feature normalization, clustering and the
//! split of one dataset into per-node streams.
//!
//! A fraction of the (shuffled) samples is dealt round-robin to nodes, so
//! every node sees the same distribution: the stochastic part. The rest is
//! clustered into `n` groups and group `c` goes to node `c`, so nodes see
//! systematically different data: the adversarial part.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::fmt::g17;
use crate::linalg::dist_sq;
use crate::losses::LabeledSample;
use crate::rng::SeqRng;

const SHUFFLE_TAG: u64 = 0x7368_7566;
const KMEANS_TAG: u64 = 0x6b6d_6561;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("k-means needs at least k = {k} points, got {points}")]
    TooFewPoints { k: usize, points: usize },
    #[error("need at least {needed} samples, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("stochastic fraction {0} is outside [0, 1]")]
    BadFraction(f64),
}

fn parse_error(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Parse { line, message: message.into() }
}

/// In-memory dataset with dense features of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Parses `<label> <index>:<value> ...` lines. Indices are 1-based and
/// strictly ascending; labels `+1`/`1`/`-1` are taken as is and `0` maps to
/// `-1`. Blank lines and `#` comments are skipped.
pub fn parse_libsvm(text: &str) -> Result<Dataset, IngestError> {
    let mut sparse: Vec<(i8, Vec<(usize, f64)>)> = Vec::new();
    let mut dim = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label = match label_tok.parse::<f64>() {
            Ok(1.0) => 1,
            Ok(v) if v == -1.0 || v == 0.0 => -1,
            _ => return Err(parse_error(lineno, alloc::format!("bad label {label_tok:?}"))),
        };
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(lineno, alloc::format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| parse_error(lineno, alloc::format!("bad index in {tok:?}")))?;
            let val: f64 = val.parse().map_err(|_| parse_error(lineno, alloc::format!("bad value in {tok:?}")))?;
            if idx == 0 {
                return Err(parse_error(lineno, "indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_error(lineno, alloc::format!("index {idx} not ascending after {last}")));
            }
            if !val.is_finite() {
                return Err(parse_error(lineno, alloc::format!("non-finite value in {tok:?}")));
            }
            last = idx;
            entries.push((idx, val));
        }
        dim = dim.max(last);
        sparse.push((label, entries));
    }
    let samples = sparse
        .into_iter()
        .map(|(label, entries)| {
            let mut features = vec![0.0; dim];
            for (idx, val) in entries {
                features[idx - 1] = val;
            }
            LabeledSample { features, label }
        })
        .collect();
    Ok(Dataset { samples, dim })
}

/// One LIBSVM line (no trailing newline); zero features are omitted.
pub fn libsvm_line(s: &LabeledSample) -> String {
    let mut out = String::from(if s.label > 0 { "+1" } else { "-1" });
    for (k, &v) in s.features.iter().enumerate() {
        if v != 0.0 {
            let _ = write!(out, " {}:{}", k + 1, g17(v));
        }
    }
    out
}

pub fn serialize_libsvm(samples: &[LabeledSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&libsvm_line(s));
        out.push('\n');
    }
    out
}

/// Centers every feature and scales it to unit population variance.
/// Constant features become zero.
pub fn normalize(d: &Dataset) -> Result<Dataset, IngestError> {
    if d.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let count = d.len() as f64;
    let mut mean = vec![0.0; d.dim];
    for s in &d.samples {
        for (m, x) in mean.iter_mut().zip(&s.features) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; d.dim];
    for s in &d.samples {
        for ((v, x), m) in var.iter_mut().zip(&s.features).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = libm::sqrt(v / count);
            if sd > 0.0 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();
    let samples = d
        .samples
        .iter()
        .map(|s| LabeledSample {
            features: s.features.iter().zip(&mean).zip(&scale).map(|((x, m), k)| (x - m) * k).collect(),
            label: s.label,
        })
        .collect();
    Ok(Dataset { samples, dim: d.dim })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

impl Clustering {
    /// Within-cluster sum of squared distances.
    pub fn inertia(&self, points: &[Vec<f64>]) -> f64 {
        points.iter().zip(&self.assignments).map(|(p, &c)| dist_sq(p, &self.centroids[c])).sum()
    }
}

/// Lloyd's algorithm with k-means++ seeding. Stops once assignments stop
/// changing or after `max_iters` passes. A cluster that goes empty is
/// re-seeded with the point lying farthest from its own centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iters: usize, seed: u64) -> Result<Clustering, IngestError> {
    if k == 0 || k > points.len() {
        return Err(IngestError::TooFewPoints { k, points: points.len() });
    }
    let mut rng = SeqRng::new(seed, KMEANS_TAG);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; points.len()];

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let best = nearest(p, &centroids);
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s * inv).collect();
            }
        }
        let mut taken = vec![false; points.len()];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..points.len())
                .filter(|&p| !taken[p])
                .max_by(|&a, &b| {
                    let da = dist_sq(&points[a], &centroids[assignments[a]]);
                    let db = dist_sq(&points[b], &centroids[assignments[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("k <= points");
            taken[far] = true;
            centroids[c] = points[far].clone();
        }
    }
    Ok(Clustering { assignments, centroids })
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist_sq(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut SeqRng) -> Vec<Vec<f64>> {
    let mut chosen = vec![false; points.len()];
    let first = rng.below(points.len());
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().zip(&chosen).filter(|(_, &c)| !c).map(|(d, _)| d).sum();
        let pick = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if chosen[i] || d == 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive mass")
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..points.len()).filter(|&i| !chosen[i]).collect();
            free[rng.below(free.len())]
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
        let newest = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist_sq(p, newest));
        }
    }
    centroids
}

/// Per-node sample streams, one sample per round.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStreams {
    pub streams: Vec<Vec<LabeledSample>>,
    pub dim: usize,
}

impl NodeStreams {
    pub fn n(&self) -> usize {
        self.streams.len()
    }

    /// Sample of 0-based `node` at 1-based `round`, cycling if the stream is short.
    pub fn sample(&self, node: usize, round: u64) -> &LabeledSample {
        let s = &self.streams[node];
        &s[((round - 1) % s.len() as u64) as usize]
    }
}

/// Result of the split before streams are cut to length, kept so callers
/// can check that every sample went to exactly one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Dataset indices per node, in stream order.
    pub per_node: Vec<Vec<usize>>,
    /// Dataset indices that went to the stochastic pool.
    pub stochastic: Vec<usize>,
}

/// Shuffles the dataset, deals the first `floor(fraction * len)` samples
/// round-robin to the nodes, clusters the rest into `n` groups (group `c`
/// to node `c`), and interleaves each node's two parts proportionally.
pub fn allocate(d: &Dataset, stochastic_fraction: f64, n: usize, seed: u64) -> Result<Allocation, IngestError> {
    if !(0.0..=1.0).contains(&stochastic_fraction) {
        return Err(IngestError::BadFraction(stochastic_fraction));
    }
    if d.len() < n {
        return Err(IngestError::InsufficientData { needed: n, available: d.len() });
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    SeqRng::new(seed, SHUFFLE_TAG).shuffle(&mut order);
    let cut = libm::floor(stochastic_fraction * d.len() as f64) as usize;
    let (stoch, adv) = order.split_at(cut.min(d.len()));

    let mut stoch_parts = vec![Vec::new(); n];
    for (k, &idx) in stoch.iter().enumerate() {
        stoch_parts[k % n].push(idx);
    }
    let mut adv_parts = vec![Vec::new(); n];
    if !adv.is_empty() {
        let points: Vec<Vec<f64>> = adv.iter().map(|&i| d.samples[i].features.clone()).collect();
        let k = n.min(points.len());
        let clusters = kmeans(&points, k, 300, seed)?;
        for (&idx, &c) in adv.iter().zip(&clusters.assignments) {
            adv_parts[c].push(idx);
        }
        // keep the original (temporal) order inside each cluster
        adv_parts.iter_mut().for_each(|p| p.sort_unstable());
    }
    let per_node = stoch_parts.into_iter().zip(adv_parts).map(|(s, a)| interleave(&s, &a)).collect();
    Ok(Allocation { per_node, stochastic: stoch.to_vec() })
}

/// Merges two sequences so that the prefix ratio tracks the overall ratio.
fn interleave(a: &[usize], b: &[usize]) -> Vec<usize> {
    let total = a.len() + b.len();
    let mut out = Vec::with_capacity(total);
    let (mut ia, mut ib) = (0, 0);
    for p in 0..total {
        // number of a-items due after p + 1 picks
        let due = ((p + 1) * a.len()).div_ceil(total.max(1));
        if ia < a.len() && (ia < due || ib == b.len()) {
            out.push(a[ia]);
            ia += 1;
        } else {
            out.push(b[ib]);
            ib += 1;
        }
    }
    out
}

/// Splits a dataset into `n` streams of exactly `rounds` samples each.
pub fn split_stoch_adv(
    d: &Dataset,
    stochastic_fraction: f64,
    n: usize,
    rounds: usize,
    seed: u64,
) -> Result<NodeStreams, IngestError> {
    let needed = n * rounds;
    if d.len() < needed || n == 0 {
        return Err(IngestError::InsufficientData { needed: needed.max(1), available: d.len() });
    }
    let alloc = allocate(d, stochastic_fraction, n, seed)?;
    let mut streams = Vec::with_capacity(n);
    for part in &alloc.per_node {
        if part.is_empty() {
            return Err(IngestError::InsufficientData { needed, available: d.len() });
        }
        streams.push(part.iter().cycle().take(rounds).map(|&i| d.samples[i].clone()).collect());
    }
    Ok(NodeStreams { streams, dim: d.dim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_examples() {
        let d = parse_libsvm("+1 1:0.5 3:-2\n").unwrap();
        assert_eq!(d.dim, 3);
        assert_eq!(d.samples, [LabeledSample { features: vec![0.5, 0.0, -2.0], label: 1 }]);

        let d = parse_libsvm("0 2:1\n").unwrap();
        assert_eq!(d.samples, [LabeledSample { features: vec![0.0, 1.0], label: -1 }]);

        match parse_libsvm("+1 3:1 1:2\n") {
            Err(IngestError::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_skips_comments_and_reports_lines() {
        let d = parse_libsvm("# header\n\n-1 1:1\n1 2:2\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.samples[0].features, [1.0, 0.0]);
        for bad in ["2 1:1", "+1 1:x", "+1 0:1", "+1 1", "+1 a:1", "yes 1:1"] {
            let text = alloc::format!("+1 1:1\n{bad}\n");
            assert!(matches!(parse_libsvm(&text), Err(IngestError::Parse { line: 2, .. })), "{bad}");
        }
    }

    #[test]
    fn normalize_examples() {
        let d = Dataset {
            samples: vec![
                LabeledSample { features: vec![1.0, 5.0], label: 1 },
                LabeledSample { features: vec![3.0, 5.0], label: -1 },
            ],
            dim: 2,
        };
        let z = normalize(&d).unwrap();
        assert_eq!(z.samples[0].features, [-1.0, 0.0]);
        assert_eq!(z.samples[1].features, [1.0, 0.0]);
        let zz = normalize(&z).unwrap();
        assert_eq!(zz, z);
        assert_eq!(normalize(&Dataset { samples: vec![], dim: 0 }), Err(IngestError::EmptyDataset));
    }

    #[test]
    fn kmeans_edge_cases() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let all = kmeans(&pts, 6, 50, 1).unwrap();
        let mut ids = all.assignments.clone();
        ids.sort_unstable();
        assert_eq!(ids, [0, 1, 2, 3, 4, 5]);
        assert_eq!(all.inertia(&pts), 0.0);

        let one = kmeans(&pts, 1, 50, 1).unwrap();
        assert!(one.assignments.iter().all(|&a| a == 0));
        assert!((one.centroids[0][0] - 2.5).abs() < 1e-12);
        assert!((one.centroids[0][1] - 55.0 / 6.0).abs() < 1e-12);

        assert_eq!(kmeans(&pts, 7, 10, 0), Err(IngestError::TooFewPoints { k: 7, points: 6 }));
    }

    #[test]
    fn interleave_is_proportional() {
        let a: Vec<usize> = (0..8).collect();
        let b: Vec<usize> = (100..102).collect();
        let m = interleave(&a, &b);
        assert_eq!(m.len(), 10);
        assert_eq!(m, [0, 1, 2, 3, 100, 4, 5, 6, 7, 101]);
        assert_eq!(interleave(&a, &[]), a);
        assert_eq!(interleave(&[], &b), b);
    }

    fn toy(len: usize) -> Dataset {
        let samples = (0..len)
            .map(|i| LabeledSample {
                features: vec![(i % 7) as f64, (i / 7) as f64 * 10.0],
                label: if i % 2 == 0 { 1 } else { -1 },
            })
            .collect();
        Dataset { samples, dim: 2 }
    }

    #[test]
    fn split_examples() {
        let d = toy(60);
        let all_stoch = allocate(&d, 1.0, 4, 3).unwrap();
        assert_eq!(all_stoch.stochastic.len(), 60);
        assert!(all_stoch.per_node.iter().all(|p| p.len() == 15));

        let s = split_stoch_adv(&d, 0.5, 4, 10, 3).unwrap();
        assert_eq!(s.n(), 4);
        assert!(s.streams.iter().all(|st| st.len() == 10));
        assert_eq!(s, split_stoch_adv(&d, 0.5, 4, 10, 3).unwrap());
        assert_eq!(
            split_stoch_adv(&d, 0.5, 4, 16, 3),
            Err(IngestError::InsufficientData { needed: 64, available: 60 })
        );
        assert_eq!(split_stoch_adv(&d, 1.5, 4, 1, 3), Err(IngestError::BadFraction(1.5)));
    }

    #[test]
    fn zero_fraction_gives_one_cluster_per_node() {
        let d = toy(60);
        let a = allocate(&d, 0.0, 3, 9).unwrap();
        assert!(a.stochastic.is_empty());
        let points: Vec<Vec<f64>> = {
            let mut order: Vec<usize> = (0..60).collect();
            SeqRng::new(9, SHUFFLE_TAG).shuffle(&mut order);
            order.iter().map(|&i| d.samples[i].features.clone()).collect()
        };
        let c = kmeans(&points, 3, 300, 9).unwrap();
        for node in 0..3 {
            let mut expected: Vec<usize> = {
                let mut order: Vec<usize> = (0..60).collect();
                SeqRng::new(9, SHUFFLE_TAG).shuffle(&mut order);
                order.iter().zip(&c.assignments).filter(|(_, &a)| a == node).map(|(&i, _)| i).collect()
            };
            expected.sort_unstable();
            assert_eq!(a.per_node[node], expected);
        }
    }

    proptest! {
        #[test]
        fn every_sample_allocated_once(len in 8usize..120, n in 1usize..8, frac in 0.0..=1.0f64, seed in any::<u64>()) {
            prop_assume!(len >= n);
            let d = toy(len);
            let a = allocate(&d, frac, n, seed).unwrap();
            let mut seen: Vec<usize> = a.per_node.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..len).collect::<Vec<_>>());
            if frac == 1.0 {
                let lens: Vec<usize> = a.per_node.iter().map(Vec::len).collect();
                prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            }
        }

        #[test]
        fn libsvm_round_trip(rows in proptest::collection::vec(
            (any::<bool>(), proptest::collection::vec(-1e6..1e6f64, 4)), 1..20)
        ) {
            let samples: Vec<LabeledSample> = rows
                .into_iter()
                .map(|(pos, mut f)| { f[3] = 1.0; LabeledSample { features: f, label: if pos { 1 } else { -1 } } })
                .collect();
            let back = parse_libsvm(&serialize_libsvm(&samples)).unwrap();
            prop_assert_eq!(back.dim, 4);
            prop_assert_eq!(back.samples, samples);
        }

        #[test]
        fn normalize_moments_and_idempotence(rows in proptest::collection::vec(proptest::collection::vec(-100.0..100.0f64, 3), 2..40)) {
            let d = Dataset {
                samples: rows.into_iter().map(|f| LabeledSample { features: f, label: 1 }).collect(),
                dim: 3,
            };
            let z = normalize(&d).unwrap();
            let m = z.len() as f64;
            for k in 0..3 {
                let mean: f64 = z.samples.iter().map(|s| s.features[k]).sum::<f64>() / m;
                let var: f64 = z.samples.iter().map(|s| s.features[k] * s.features[k]).sum::<f64>() / m;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!(var == 0.0 || (var - 1.0).abs() < 1e-9);
            }
            let zz = normalize(&z).unwrap();
            for (a, b) in z.samples.iter().zip(&zz.samples) {
                for (x, y) in a.features.iter().zip(&b.features) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}
