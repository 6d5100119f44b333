//! Exact baselines for small instances: the best explainable clustering by
//! dynamic programming over axis-aligned boxes, and the best unconstrained
//! clustering by enumerating set partitions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Clustering, Dataset, Point};
use crate::scalar::Scalar;
use crate::tree::{AxisCut, Node, ThresholdTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpLimits {
    pub max_points: usize,
    pub max_dim: usize,
    pub max_k: usize,
}

impl Default for DpLimits {
    fn default() -> Self {
        Self {
            max_points: 40,
            max_dim: 3,
            max_k: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExplainableOptimum<T: Scalar> {
    pub cost: f64,
    pub tree: ThresholdTree<T>,
    /// Centroids are the leaf means, numbered in tree order.
    pub clustering: Clustering<T>,
}

/// Subsets are bit masks over the (at most 64) points.
type Mask = u64;

struct Dp<'a, T: Scalar> {
    dataset: &'a Dataset<T>,
    /// Point indices sorted by each coordinate.
    order: Vec<Vec<usize>>,
    k: usize,
    /// Best cost with at most `k'` leaves, for `k' = 1..=k`.
    memo: HashMap<Mask, Vec<f64>>,
}

fn members(mask: Mask) -> impl Iterator<Item = usize> + Clone {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Mean and sum of squared distances to it, computed in two passes.
fn mean_and_cost<T: Scalar>(
    dataset: &Dataset<T>,
    idx: impl Iterator<Item = usize> + Clone,
) -> (Vec<f64>, f64) {
    let d = dataset.dim();
    let mut mean = vec![0.0; d];
    let mut count = 0usize;
    for i in idx.clone() {
        count += 1;
        for (m, c) in mean.iter_mut().zip(dataset.point(i).coords()) {
            *m += c.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count.max(1) as f64);
    let cost = idx
        .map(|i| {
            dataset
                .point(i)
                .coords()
                .iter()
                .zip(&mean)
                .map(|(c, m)| (c.as_f64() - m).powi(2))
                .sum::<f64>()
        })
        .sum();
    (mean, cost)
}

/// A cut of `mask` along `dim`: the points strictly below the gap go left.
struct Split<T> {
    dim: usize,
    threshold: T,
    left: Mask,
}

impl<'a, T: Scalar> Dp<'a, T> {
    fn new(dataset: &'a Dataset<T>, k: usize) -> Self {
        let order = (0..dataset.dim())
            .map(|j| {
                let mut idx: Vec<usize> = (0..dataset.len()).collect();
                idx.sort_by(|&a, &b| {
                    dataset
                        .point(a)
                        .get(j)
                        .partial_cmp(&dataset.point(b).get(j))
                        .expect("finite")
                });
                idx
            })
            .collect();
        Self {
            dataset,
            order,
            k,
            memo: HashMap::new(),
        }
    }

    /// Every cut that leaves both sides non-empty, one per gap between
    /// consecutive distinct values.
    fn splits(&self, mask: Mask) -> Vec<Split<T>> {
        let mut out = Vec::new();
        for (dim, order) in self.order.iter().enumerate() {
            let mut left: Mask = 0;
            let mut prev: Option<T> = None;
            for &i in order.iter().filter(|&&i| mask >> i & 1 == 1) {
                let v = self.dataset.point(i).get(dim);
                if let Some(p) = prev {
                    if v > p {
                        let mid = (p + v) / T::lit(2.0);
                        let threshold = if p < mid && mid < v { mid } else { p };
                        out.push(Split {
                            dim,
                            threshold,
                            left,
                        });
                    }
                }
                left |= 1 << i;
                prev = Some(v);
            }
        }
        out
    }

    fn solve(&mut self, mask: Mask) -> Vec<f64> {
        if let Some(c) = self.memo.get(&mask) {
            return c.clone();
        }
        let (_, leaf) = mean_and_cost(self.dataset, members(mask));
        let mut best = vec![leaf; self.k];
        if self.k > 1 {
            for split in self.splits(mask) {
                let left = self.solve(split.left);
                let right = self.solve(mask & !split.left);
                for k1 in 1..self.k {
                    for k2 in 1..=(self.k - k1) {
                        let c = left[k1 - 1] + right[k2 - 1];
                        if c < best[k1 + k2 - 1] {
                            best[k1 + k2 - 1] = c;
                        }
                    }
                }
            }
            for kk in 1..self.k {
                best[kk] = best[kk].min(best[kk - 1]);
            }
        }
        self.memo.insert(mask, best.clone());
        best
    }

    /// Rebuilds an optimal tree for `(mask, k')` from the memo table.
    fn witness(&mut self, root: Mask, k: usize) -> (Vec<Node<T>>, Vec<Vec<usize>>) {
        let mut nodes: Vec<Option<Node<T>>> = vec![None];
        let mut leaves = Vec::new();
        let mut stack = vec![(root, k, 0usize)];
        while let Some((mask, mut kk, slot)) = stack.pop() {
            let costs = self.solve(mask);
            while kk > 1 && costs[kk - 2] == costs[kk - 1] {
                kk -= 1;
            }
            let target = costs[kk - 1];
            let mut chosen = None;
            if kk > 1 {
                'search: for split in self.splits(mask) {
                    let left = self.solve(split.left);
                    let right = self.solve(mask & !split.left);
                    for k1 in 1..kk {
                        if left[k1 - 1] + right[kk - k1 - 1] == target {
                            chosen = Some((split, k1));
                            break 'search;
                        }
                    }
                }
            }
            match chosen {
                None => {
                    nodes[slot] = Some(Node::Leaf {
                        cluster: leaves.len(),
                    });
                    leaves.push(members(mask).collect());
                }
                Some((split, k1)) => {
                    let (l, r) = (nodes.len(), nodes.len() + 1);
                    nodes.extend([None, None]);
                    nodes[slot] = Some(Node::Internal {
                        cut: AxisCut {
                            dim: split.dim,
                            threshold: split.threshold,
                        },
                        left: l,
                        right: r,
                    });
                    stack.push((mask & !split.left, kk - k1, r));
                    stack.push((split.left, k1, l));
                }
            }
        }
        (
            nodes.into_iter().map(|n| n.expect("filled")).collect(),
            leaves,
        )
    }
}

/// Minimum k-means cost over all clusterings induced by a threshold tree with
/// at most `k` leaves, with default size limits.
pub fn optimal_explainable_dp<T: Scalar>(
    dataset: &Dataset<T>,
    k: usize,
) -> Result<ExplainableOptimum<T>> {
    optimal_explainable_dp_with(dataset, k, &DpLimits::default())
}

pub fn optimal_explainable_dp_with<T: Scalar>(
    dataset: &Dataset<T>,
    k: usize,
    limits: &DpLimits,
) -> Result<ExplainableOptimum<T>> {
    let (n, d) = (dataset.len(), dataset.dim());
    if k == 0 {
        return Err(Error::InvalidParameters("k must be at least 1".into()));
    }
    if n > limits.max_points.min(64) || d > limits.max_dim || k > limits.max_k {
        return Err(Error::LimitExceeded(format!(
            "explainable DP limited to n <= {}, d <= {}, k <= {}; got n = {n}, d = {d}, k = {k}",
            limits.max_points.min(64),
            limits.max_dim,
            limits.max_k
        )));
    }
    let all: Mask = if n == 64 { !0 } else { (1u64 << n) - 1 };
    let mut dp = Dp::new(dataset, k);
    let cost = dp.solve(all)[k - 1];
    let (nodes, leaves) = dp.witness(all, k);
    let mut assignment = vec![0; n];
    let mut centroids = Vec::with_capacity(leaves.len());
    for (c, pts) in leaves.iter().enumerate() {
        for &i in pts {
            assignment[i] = c;
        }
        let (mean, _) = mean_and_cost(dataset, pts.iter().copied());
        centroids.push(Point::new(mean.into_iter().map(T::lit).collect())?);
    }
    Ok(ExplainableOptimum {
        cost,
        tree: ThresholdTree::from_nodes(nodes)?,
        clustering: Clustering::new(centroids, assignment)?,
    })
}

pub const BRUTE_MAX_POINTS: usize = 14;
pub const BRUTE_MAX_K: usize = 4;

/// Minimum k-means cost over all partitions into at most `k` parts.
pub fn optimal_unconstrained_bruteforce<T: Scalar>(dataset: &Dataset<T>, k: usize) -> Result<f64> {
    Ok(optimal_partition(dataset, k)?.0)
}

/// Like [`optimal_unconstrained_bruteforce`], also returning part labels.
pub fn optimal_partition<T: Scalar>(dataset: &Dataset<T>, k: usize) -> Result<(f64, Vec<usize>)> {
    let (n, d) = (dataset.len(), dataset.dim());
    if k == 0 {
        return Err(Error::InvalidParameters("k must be at least 1".into()));
    }
    if n > BRUTE_MAX_POINTS || k > BRUTE_MAX_K {
        return Err(Error::LimitExceeded(format!(
            "brute force limited to n <= {BRUTE_MAX_POINTS}, k <= {BRUTE_MAX_K}; got n = {n}, k = {k}"
        )));
    }
    // centering keeps the running-sum formula well conditioned
    let (mean, _) = mean_and_cost(dataset, 0..n);
    let pts: Vec<Vec<f64>> = dataset
        .points()
        .iter()
        .map(|p| {
            p.coords()
                .iter()
                .zip(&mean)
                .map(|(c, m)| c.as_f64() - m)
                .collect()
        })
        .collect();
    let mut search = Partitions {
        dataset,
        pts: &pts,
        k,
        labels: vec![0; n],
        count: vec![0; k],
        sum: vec![vec![0.0; d]; k],
        sumsq: vec![0.0; k],
        best: f64::INFINITY,
        best_labels: vec![0; n],
    };
    search.descend(0, 0);
    Ok((search.best, search.best_labels))
}

struct Partitions<'a, T: Scalar> {
    dataset: &'a Dataset<T>,
    pts: &'a [Vec<f64>],
    k: usize,
    labels: Vec<usize>,
    count: Vec<usize>,
    sum: Vec<Vec<f64>>,
    sumsq: Vec<f64>,
    best: f64,
    best_labels: Vec<usize>,
}

impl<T: Scalar> Partitions<'_, T> {
    fn running_cost(&self, used: usize) -> f64 {
        (0..used)
            .map(|b| {
                self.sumsq[b]
                    - self.sum[b].iter().map(|s| s * s).sum::<f64>() / self.count[b] as f64
            })
            .sum()
    }

    fn exact_cost(&self, used: usize) -> f64 {
        (0..used)
            .map(|b| {
                let idx = (0..self.labels.len()).filter(|&i| self.labels[i] == b);
                mean_and_cost(self.dataset, idx).1
            })
            .sum()
    }

    /// Restricted growth strings: point `i` joins an existing part or opens
    /// the next one.
    fn descend(&mut self, i: usize, used: usize) {
        if i == self.pts.len() {
            let approx = self.running_cost(used);
            if approx <= self.best * (1.0 + 1e-9) + 1e-12 {
                let exact = self.exact_cost(used);
                if exact < self.best {
                    self.best = exact;
                    self.best_labels.clone_from(&self.labels);
                }
            }
            return;
        }
        let limit = (used + 1).min(self.k);
        for b in 0..limit {
            self.labels[i] = b;
            self.count[b] += 1;
            let x = &self.pts[i];
            for (s, v) in self.sum[b].iter_mut().zip(x) {
                *s += v;
            }
            self.sumsq[b] += x.iter().map(|v| v * v).sum::<f64>();
            self.descend(i + 1, used.max(b + 1));
            self.count[b] -= 1;
            for (s, v) in self.sum[b].iter_mut().zip(x) {
                *s -= v;
            }
            self.sumsq[b] -= x.iter().map(|v| v * v).sum::<f64>();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cost_l2sq;
    use crate::tree::verify_explainable;

    fn line(vals: &[f64]) -> Dataset {
        Dataset::from_rows(vals.iter().map(|&v| vec![v, 0.0]).collect()).unwrap()
    }

    #[test]
    fn dp_three_points() {
        let ds = line(&[0.0, 1.0, 5.0]);
        let opt = optimal_explainable_dp(&ds, 2).unwrap();
        assert_eq!(opt.cost, 0.5);
        assert_eq!(opt.tree.leaf_count(), 2);
        assert_eq!(opt.clustering.assignment(), &[0, 0, 1]);
        assert_eq!(opt.clustering.centroid(0).coords(), &[0.5, 0.0]);
        assert_eq!(opt.tree.classify(&[3.0, 0.0]), 0);
        assert_eq!(opt.tree.classify(&[3.0000001, 0.0]), 1);
        assert!(verify_explainable(&ds, &opt.clustering, &opt.tree).ok);
    }

    #[test]
    fn dp_single_cluster_and_trivial_k() {
        let ds = line(&[0.0, 2.0]);
        let opt = optimal_explainable_dp(&ds, 1).unwrap();
        assert_eq!(opt.cost, 2.0);
        assert_eq!(opt.clustering.centroid(0).coords(), &[1.0, 0.0]);
        let ds = line(&[0.0, 1.0, 5.0]);
        assert_eq!(optimal_explainable_dp(&ds, 3).unwrap().cost, 0.0);
        assert_eq!(optimal_explainable_dp(&ds, 5).unwrap().cost, 0.0);
    }

    #[test]
    fn dp_witness_cost_matches() {
        let ds = Dataset::from_rows(vec![
            vec![0.0, 0.0],
            vec![1.0, 3.0],
            vec![2.0, 1.0],
            vec![5.0, 5.0],
            vec![6.0, 4.0],
            vec![9.0, 0.5],
            vec![9.5, 1.0],
        ])
        .unwrap();
        for k in 1..=4 {
            let opt = optimal_explainable_dp(&ds, k).unwrap();
            assert!(opt.tree.leaf_count() <= k);
            assert!((cost_l2sq(&ds, &opt.clustering).unwrap() - opt.cost).abs() < 1e-9);
            assert!(verify_explainable(&ds, &opt.clustering, &opt.tree).ok);
        }
    }

    #[test]
    fn dp_limits() {
        let ds = line(&(0..41).map(f64::from).collect::<Vec<_>>());
        assert!(matches!(
            optimal_explainable_dp(&ds, 2),
            Err(Error::LimitExceeded(_))
        ));
        let ds = line(&[0.0, 1.0]);
        assert!(matches!(
            optimal_explainable_dp(&ds, 9),
            Err(Error::LimitExceeded(_))
        ));
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(
            optimal_unconstrained_bruteforce(&line(&[0.0, 1.0, 5.0]), 2).unwrap(),
            0.5
        );
        assert_eq!(
            optimal_unconstrained_bruteforce(&line(&[0.0, 1.0, 5.0]), 3).unwrap(),
            0.0
        );
        assert_eq!(
            optimal_unconstrained_bruteforce(&line(&[0.0, 2.0, 4.0]), 2).unwrap(),
            2.0
        );
        let (cost, labels) = optimal_partition(&line(&[0.0, 2.0, 4.0]), 2).unwrap();
        assert_eq!(cost, 2.0);
        assert_eq!(labels.iter().max(), Some(&1));
    }

    #[test]
    fn brute_force_limits() {
        let ds = line(&(0..15).map(f64::from).collect::<Vec<_>>());
        assert!(optimal_unconstrained_bruteforce(&ds, 2).is_err());
        assert!(optimal_unconstrained_bruteforce(&line(&[0.0]), 5).is_err());
    }

    #[test]
    fn unconstrained_beats_explainable() {
        // a diagonal layout no single axis cut separates well
        let ds = Dataset::from_rows(vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![0.5, 2.5],
            vec![2.5, 0.5],
            vec![1.5, -0.5],
        ])
        .unwrap();
        for k in 1..=3 {
            let brute = optimal_unconstrained_bruteforce(&ds, k).unwrap();
            let dp = optimal_explainable_dp(&ds, k).unwrap().cost;
            assert!(brute <= dp * (1.0 + 1e-9), "k={k}: {brute} > {dp}");
        }
    }
}
