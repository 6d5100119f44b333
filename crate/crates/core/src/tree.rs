//! Threshold trees: binary trees of axis-parallel cuts whose leaves name a cluster.

use std::collections::HashMap;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{Clustering, Dataset, Point};
use crate::scalar::Scalar;

/// The hyperplane `x(dim) = threshold`. Points with `x(dim) ≤ threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AxisCut<T: Scalar = f64> {
    pub dim: usize,
    pub threshold: T,
}

impl<T: Scalar> AxisCut<T> {
    pub fn new(dim: usize, threshold: T) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::NonFinite { point: 0, dim });
        }
        Ok(Self { dim, threshold })
    }

    #[inline]
    pub fn goes_left(&self, coords: &[T]) -> bool {
        coords[self.dim] <= self.threshold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node<T: Scalar = f64> {
    Internal {
        cut: AxisCut<T>,
        left: usize,
        right: usize,
    },
    Leaf {
        cluster: usize,
    },
}

/// Arena-backed threshold tree; node `0` is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdTree<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> ThresholdTree<T> {
    pub fn leaf(cluster: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { cluster }],
        }
    }

    /// Builds a tree from an arena, checking that every node except the root
    /// has exactly one parent and that the structure is a single tree.
    pub fn from_nodes(nodes: Vec<Node<T>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("tree has no nodes"));
        }
        let mut parents = vec![0usize; nodes.len()];
        for node in &nodes {
            if let Node::Internal { cut, left, right } = node {
                for &c in [left, right] {
                    if c >= nodes.len() || c == 0 {
                        return Err(Error::IndexOutOfRange {
                            index: c,
                            len: nodes.len(),
                        });
                    }
                    parents[c] += 1;
                }
                if !cut.threshold.is_finite() {
                    return Err(Error::NonFinite {
                        point: 0,
                        dim: cut.dim,
                    });
                }
            }
        }
        if parents.iter().skip(1).any(|&p| p != 1) {
            return Err(Error::Invariant("tree arena is not a tree".into()));
        }
        let tree = Self { nodes };
        // every node reachable from the root means no cycles among the rest
        let mut seen = 0usize;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            seen += 1;
            if seen > tree.nodes.len() {
                return Err(Error::Invariant("tree arena has a cycle".into()));
            }
            if let Node::Internal { left, right, .. } = tree.nodes[i] {
                stack.push(right);
                stack.push(left);
            }
        }
        if seen != tree.nodes.len() {
            return Err(Error::Invariant("tree arena has unreachable nodes".into()));
        }
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn root(&self) -> &Node<T> {
        &self.nodes[0]
    }

    /// Index of the leaf node that `coords` is routed to.
    pub fn leaf_index(&self, coords: &[T]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Internal { cut, left, right } => {
                    i = if cut.goes_left(coords) { *left } else { *right };
                }
            }
        }
    }

    pub fn classify(&self, coords: &[T]) -> usize {
        match self.nodes[self.leaf_index(coords)] {
            Node::Leaf { cluster } => cluster,
            Node::Internal { .. } => unreachable!(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn cut_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    pub fn max_dim(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Internal { cut, .. } => Some(cut.dim),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub fn leaf_clusters(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { cluster } => Some(*cluster),
                Node::Internal { .. } => None,
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Internal { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let tree = Self::deserialize(&mut de)?;
        de.end()?;
        Ok(tree)
    }
}

/// Routes `point` to a leaf and returns that leaf's cluster id.
pub fn apply_tree<T: Scalar>(tree: &ThresholdTree<T>, point: &Point<T>) -> usize {
    tree.classify(point.coords())
}

struct NodeRef<'a, T: Scalar> {
    tree: &'a ThresholdTree<T>,
    idx: usize,
}

impl<T: Scalar> Serialize for NodeRef<'_, T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.tree.nodes[self.idx] {
            Node::Leaf { cluster } => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("cluster", cluster)?;
                m.end()
            }
            Node::Internal { cut, left, right } => {
                let mut m = s.serialize_map(Some(4))?;
                m.serialize_entry("dim", &cut.dim)?;
                m.serialize_entry("theta", &cut.threshold)?;
                m.serialize_entry(
                    "left",
                    &NodeRef {
                        tree: self.tree,
                        idx: *left,
                    },
                )?;
                m.serialize_entry(
                    "right",
                    &NodeRef {
                        tree: self.tree,
                        idx: *right,
                    },
                )?;
                m.end()
            }
        }
    }
}

impl<T: Scalar> Serialize for ThresholdTree<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NodeRef { tree: self, idx: 0 }.serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
enum JsonNode<T: Scalar> {
    Internal {
        dim: usize,
        theta: T,
        left: Box<JsonNode<T>>,
        right: Box<JsonNode<T>>,
    },
    Leaf {
        cluster: usize,
    },
}

impl<'de, T: Scalar> Deserialize<'de> for ThresholdTree<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let root = JsonNode::<T>::deserialize(d)?;
        let mut nodes = Vec::new();
        let mut stack = vec![(root, None::<(usize, bool)>)];
        while let Some((node, parent)) = stack.pop() {
            let idx = nodes.len();
            if let Some((p, is_left)) = parent {
                if let Node::Internal { left, right, .. } = &mut nodes[p] {
                    if is_left {
                        *left = idx;
                    } else {
                        *right = idx;
                    }
                }
            }
            match node {
                JsonNode::Leaf { cluster } => nodes.push(Node::Leaf { cluster }),
                JsonNode::Internal {
                    dim,
                    theta,
                    left,
                    right,
                } => {
                    nodes.push(Node::Internal {
                        cut: AxisCut {
                            dim,
                            threshold: theta,
                        },
                        left: usize::MAX,
                        right: usize::MAX,
                    });
                    stack.push((*right, Some((idx, false))));
                    stack.push((*left, Some((idx, true))));
                }
            }
        }
        ThresholdTree::from_nodes(nodes).map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// More leaves than centroids.
    TooManyLeaves { leaves: usize, k: usize },
    /// Two points routed to one leaf carry different assignments.
    SharedLeaf {
        first: usize,
        second: usize,
        leaf: usize,
    },
    /// A point's leaf names a cluster other than the one it is assigned to.
    LeafMismatch {
        point: usize,
        leaf_cluster: usize,
        assigned: usize,
    },
    /// A cut references a coordinate the data does not have.
    DimensionOutOfRange { dim: usize, data_dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplainabilityReport {
    pub ok: bool,
    pub leaf_count: usize,
    pub k: usize,
    pub violations: Vec<Violation>,
}

/// Checks that `clustering` is explained by `tree`: at most `k` leaves, a single
/// assignment per leaf, and each leaf's cluster id equal to its points' assignment.
pub fn verify_explainable<T: Scalar>(
    dataset: &Dataset<T>,
    clustering: &Clustering<T>,
    tree: &ThresholdTree<T>,
) -> ExplainabilityReport {
    let k = clustering.k();
    let leaf_count = tree.leaf_count();
    let mut violations = Vec::new();
    if leaf_count > k {
        violations.push(Violation::TooManyLeaves {
            leaves: leaf_count,
            k,
        });
    }
    if let Some(dim) = tree.max_dim().filter(|&d| d >= dataset.dim()) {
        violations.push(Violation::DimensionOutOfRange {
            dim,
            data_dim: dataset.dim(),
        });
        return ExplainabilityReport {
            ok: false,
            leaf_count,
            k,
            violations,
        };
    }
    let assignment = clustering.assignment();
    let mut first_in_leaf: HashMap<usize, usize> = HashMap::new();
    for (i, x) in dataset.points().iter().enumerate() {
        let Some(&assigned) = assignment.get(i) else {
            break;
        };
        let leaf = tree.leaf_index(x.coords());
        match first_in_leaf.get(&leaf) {
            Some(&first) if assignment[first] != assigned => {
                violations.push(Violation::SharedLeaf {
                    first,
                    second: i,
                    leaf,
                });
            }
            Some(_) => {}
            None => {
                first_in_leaf.insert(leaf, i);
            }
        }
        if let Node::Leaf { cluster } = tree.nodes()[leaf] {
            if cluster != assigned {
                violations.push(Violation::LeafMismatch {
                    point: i,
                    leaf_cluster: cluster,
                    assigned,
                });
            }
        }
    }
    ExplainabilityReport {
        ok: violations.is_empty(),
        leaf_count,
        k,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cut() -> ThresholdTree {
        ThresholdTree::from_nodes(vec![
            Node::Internal {
                cut: AxisCut::new(1, 0.5).unwrap(),
                left: 1,
                right: 2,
            },
            Node::Leaf { cluster: 0 },
            Node::Leaf { cluster: 1 },
        ])
        .unwrap()
    }

    #[test]
    fn boundary_goes_left() {
        let t = one_cut();
        // dim index 1 is the second coordinate
        let p = Point::from_f64(&[9.0, 0.5]).unwrap();
        assert_eq!(apply_tree(&t, &p), 0);
        let p = Point::from_f64(&[9.0, 0.5 + 1e-12]).unwrap();
        assert_eq!(apply_tree(&t, &p), 1);
    }

    #[test]
    fn single_leaf() {
        let t = ThresholdTree::<f64>::leaf(3);
        assert_eq!(t.classify(&[1.0, -7.0]), 3);
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.cut_count(), 0);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn json_format() {
        let t = one_cut();
        let s = t.to_json().unwrap();
        assert_eq!(
            s,
            r#"{"dim":1,"theta":0.5,"left":{"cluster":0},"right":{"cluster":1}}"#
        );
        assert_eq!(ThresholdTree::<f64>::from_json(&s).unwrap(), t);
        assert!(ThresholdTree::<f64>::from_json(r#"{"dim":1}"#).is_err());
    }

    #[test]
    fn json_deep_tree() {
        // a left-leaning caterpillar deeper than serde_json's default recursion limit
        let depth = 300;
        let mut nodes = Vec::new();
        for i in 0..depth {
            nodes.push(Node::Internal {
                cut: AxisCut::new(0, i as f64).unwrap(),
                left: 2 * i + 2,
                right: 2 * i + 1,
            });
            nodes.push(Node::Leaf { cluster: i });
        }
        let last = nodes.len();
        nodes.push(Node::Leaf { cluster: depth });
        assert_eq!(last, 2 * depth);
        // rewire: internal i at index 2i with children (2i+1 leaf, 2i+2 next internal)
        let t = ThresholdTree::from_nodes(nodes).unwrap();
        let s = t.to_json().unwrap();
        let back = ThresholdTree::<f64>::from_json(&s).unwrap();
        for v in [-1.0, 0.5, 10.2, 299.5, 1e6] {
            assert_eq!(back.classify(&[v]), t.classify(&[v]));
        }
        assert_eq!(back.depth(), depth);
    }

    #[test]
    fn arena_validation() {
        let bad = vec![
            Node::Internal {
                cut: AxisCut::new(0, 0.0).unwrap(),
                left: 1,
                right: 1,
            },
            Node::Leaf { cluster: 0 },
        ];
        assert!(ThresholdTree::from_nodes(bad).is_err());
        let bad = vec![Node::<f64>::Internal {
            cut: AxisCut::new(0, 0.0).unwrap(),
            left: 0,
            right: 0,
        }];
        assert!(ThresholdTree::from_nodes(bad).is_err());
    }

    #[test]
    fn verify_examples() {
        let ds = Dataset::new(vec![
            Point::from_f64(&[0.0, 0.0]).unwrap(),
            Point::from_f64(&[1.0, 0.0]).unwrap(),
        ])
        .unwrap();
        let c = Clustering::new(vec![Point::from_f64(&[0.5, 0.0]).unwrap()], vec![0, 0]).unwrap();
        assert!(verify_explainable(&ds, &c, &ThresholdTree::leaf(0)).ok);

        let c2 = Clustering::new(
            vec![
                Point::from_f64(&[0.0, 0.0]).unwrap(),
                Point::from_f64(&[1.0, 0.0]).unwrap(),
            ],
            vec![0, 1],
        )
        .unwrap();
        let r = verify_explainable(&ds, &c2, &ThresholdTree::leaf(0));
        assert!(!r.ok);
        assert!(r.violations.contains(&Violation::SharedLeaf {
            first: 0,
            second: 1,
            leaf: 0
        }));

        let too_many = one_cut();
        let r = verify_explainable(&ds, &c, &too_many);
        assert!(r
            .violations
            .contains(&Violation::TooManyLeaves { leaves: 2, k: 1 }));
    }
}
