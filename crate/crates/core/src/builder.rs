//! Recursive tree construction, run iteratively, and the end-to-end
//! post-processing entry point.

use serde::{Deserialize, Serialize};

use crate::cut::{single_cut, CutDiagnostics, ThetaRule};
use crate::error::{Error, Result};
use crate::geometry::{cost_l2sq, Clustering, Dataset};
use crate::scalar::{approx_le, Scalar};
use crate::subproblem::{linf, Mode, Subproblem, REL_TOL};
use crate::tree::{verify_explainable, Node, ThresholdTree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "hd")]
    HighDim,
    /// Planar engine for `d = 2`, general engine otherwise.
    #[default]
    Auto,
}

impl EngineChoice {
    pub fn resolve(self, d: usize) -> Mode {
        match self {
            Self::TwoD => Mode::TwoD,
            Self::HighDim => Mode::HighDim,
            Self::Auto if d == 2 => Mode::TwoD,
            Self::Auto => Mode::HighDim,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub theta_rule: ThetaRule,
    /// Re-check every invariant at every cut (costs a validity scan per child).
    pub audit: bool,
    /// Keep per-cut diagnostics.
    pub trace: bool,
}

/// Invariant checks performed and the ones that failed.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Audit {
    pub checks: usize,
    pub failures: Vec<String>,
}

impl Audit {
    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: Audit) {
        self.checks += other.checks;
        self.failures.extend(other.failures);
    }
}

/// One line of the cut trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutRecord {
    pub depth: usize,
    #[serde(flatten)]
    pub diagnostics: CutDiagnostics,
}

#[derive(Clone, Debug)]
pub struct BuildResult<T: Scalar> {
    pub tree: ThresholdTree<T>,
    /// Final centroid per point, indexed like the dataset (`usize::MAX` for
    /// points outside the subproblem).
    pub delta: Vec<usize>,
    pub trace: Vec<CutRecord>,
    pub audit: Audit,
}

fn audit_cut<T: Scalar>(
    audit: &mut Audit,
    depth: usize,
    d: &CutDiagnostics,
    children: [&Subproblem<T>; 2],
) {
    let at = |what: &str| format!("depth {depth}, theta {}: {what}", d.theta);
    audit.check(approx_le(d.forbidden_measure, d.l / 2.0, REL_TOL), || {
        at(&format!(
            "forbidden measure {} > L/2 = {}",
            d.forbidden_measure,
            d.l / 2.0
        ))
    });
    audit.check(approx_le(d.a_preprocessed, d.a_parent, REL_TOL), || {
        at(&format!(
            "preprocessing raised A from {} to {}",
            d.a_parent, d.a_preprocessed
        ))
    });
    audit.check(approx_le(d.a_children, d.a_preprocessed, REL_TOL), || {
        at(&format!(
            "A(children) = {} > A(parent) = {}",
            d.a_children, d.a_preprocessed
        ))
    });
    for child in children {
        let report = child.check_valid();
        audit.check(report.ok, || {
            at(&format!("invalid child: {:?}", report.violations))
        });
        audit.check(!child.centroids().is_empty(), || at("empty centroid side"));
        if child.mode() == Mode::HighDim {
            let low = child.potential_floor_violations();
            audit.check(low.is_empty(), || {
                at(&format!("potential below 1 at points {low:?}"))
            });
        }
    }
    match children[0].mode() {
        Mode::TwoD => {
            for (got, want) in [(d.mass_left, d.m1), (d.mass_right, d.m2)] {
                audit.check((got - want).abs() <= 1e-12 * want.abs(), || {
                    at(&format!("child mass {got} differs from {want}"))
                });
            }
        }
        Mode::HighDim => {
            for (got, want) in [(d.mass_left, d.m1), (d.mass_right, d.m2)] {
                audit.check(approx_le(want, got, 1e-12), || {
                    at(&format!("child mass {got} below {want}"))
                });
            }
            for &(got, want) in &d.conservation {
                audit.check(
                    (got - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE),
                    || at(&format!("p'l'^2 = {got} differs from p l L = {want}")),
                );
            }
        }
    }
}

/// Cuts until every leaf holds centroids at a single location. The leaf's
/// cluster is its lowest-index centroid.
pub fn build_tree<T: Scalar>(
    root: Subproblem<T>,
    options: &BuildOptions,
) -> Result<BuildResult<T>> {
    let n = root.instance().n();
    let mut delta = vec![usize::MAX; n];
    let mut nodes: Vec<Option<Node<T>>> = vec![None];
    let mut trace = Vec::new();
    let mut audit = Audit::default();
    let mut stack = vec![(root, 0usize, 0usize)];
    while let Some((sub, depth, slot)) = stack.pop() {
        if sub.bounds().l == 0.0 {
            let cluster = sub.centroids()[0];
            for &i in sub.points() {
                delta[i] = cluster;
            }
            nodes[slot] = Some(Node::Leaf { cluster });
            continue;
        }
        let out = single_cut(&sub, options.theta_rule)?;
        if options.audit {
            audit_cut(
                &mut audit,
                depth,
                &out.diagnostics,
                [&out.child_le, &out.child_gt],
            );
        }
        if options.trace {
            trace.push(CutRecord {
                depth,
                diagnostics: out.diagnostics.clone(),
            });
        }
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.extend([None, None]);
        nodes[slot] = Some(Node::Internal {
            cut: out.cut,
            left,
            right,
        });
        stack.push((out.child_gt, depth + 1, right));
        stack.push((out.child_le, depth + 1, left));
    }
    let nodes = nodes
        .into_iter()
        .map(|n| n.expect("every slot filled"))
        .collect();
    Ok(BuildResult {
        tree: ThresholdTree::from_nodes(nodes)?,
        delta,
        trace,
        audit,
    })
}

#[derive(Clone, Debug)]
pub struct PostProcessResult<T: Scalar> {
    /// Same centroids as the input, reassigned by the tree.
    pub clustering: Clustering<T>,
    pub tree: ThresholdTree<T>,
    /// Engine that ran; `None` when `k = 1` made the tree trivial.
    pub mode: Option<Mode>,
    /// `A` of the initial subproblem.
    pub initial_potential: Option<f64>,
    /// `Σ‖x − δ‖∞²`.
    pub linf_cost: f64,
    pub cost: f64,
    pub trace: Vec<CutRecord>,
    pub audit: Audit,
}

/// Turns `clustering` into an explainable clustering with the same centroids.
pub fn post_process<T: Scalar>(
    dataset: &Dataset<T>,
    clustering: &Clustering<T>,
    engine: EngineChoice,
    options: &BuildOptions,
) -> Result<PostProcessResult<T>> {
    clustering.check_against(dataset)?;
    let d = dataset.dim();
    if d < 2 {
        return Err(Error::Unsupported(format!("need d >= 2, got d = {d}")));
    }
    if engine == EngineChoice::TwoD && d != 2 {
        return Err(Error::Unsupported(format!(
            "the planar engine needs d = 2, got d = {d}"
        )));
    }
    if clustering.k() == 1 {
        let assigned = Clustering::new(clustering.centroids().to_vec(), vec![0; dataset.len()])?;
        let cost = cost_l2sq(dataset, &assigned)?.as_f64();
        let linf_cost = dataset
            .points()
            .iter()
            .map(|x| {
                let v = crate::geometry::linf(x.coords(), clustering.centroid(0).coords()).as_f64();
                v * v
            })
            .sum();
        return Ok(PostProcessResult {
            clustering: assigned,
            tree: ThresholdTree::leaf(0),
            mode: None,
            initial_potential: None,
            linf_cost,
            cost,
            trace: Vec::new(),
            audit: Audit::default(),
        });
    }
    let mode = engine.resolve(d);
    let root = Subproblem::initial(dataset, clustering, mode)?;
    let instance = root.instance().clone();
    let initial_potential = root.potential();
    let mut audit = Audit::default();
    if options.audit {
        let report = root.check_valid();
        audit.check(report.ok, || {
            format!("initial subproblem invalid: {:?}", report.violations)
        });
    }
    let built = build_tree(root, options)?;
    audit.merge(built.audit);

    let linf_cost: f64 = built
        .delta
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let v = linf(instance.x(i), instance.y(c));
            v * v
        })
        .sum();
    let assigned = Clustering::new(clustering.centroids().to_vec(), built.delta)?;
    let cost = cost_l2sq(dataset, &assigned)?.as_f64();
    if options.audit {
        let factor = match mode {
            Mode::TwoD => 2.0,
            Mode::HighDim => d as f64,
        };
        audit.check(approx_le(linf_cost, initial_potential, REL_TOL), || {
            format!("sum of squared l-inf distances {linf_cost} exceeds A = {initial_potential}")
        });
        audit.check(approx_le(cost, factor * initial_potential, REL_TOL), || {
            format!(
                "cost {cost} exceeds {factor}·A = {}",
                factor * initial_potential
            )
        });
        let report = verify_explainable(dataset, &assigned, &built.tree);
        audit.check(report.ok, || {
            format!("not explainable: {:?}", report.violations)
        });
    }
    Ok(PostProcessResult {
        clustering: assigned,
        tree: built.tree,
        mode: Some(mode),
        initial_potential: Some(initial_potential),
        linf_cost,
        cost,
        trace: built.trace,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn clustering(centroids: &[&[f64]], assignment: Vec<usize>) -> Clustering {
        Clustering::new(
            centroids
                .iter()
                .map(|c| Point::new(c.to_vec()).unwrap())
                .collect(),
            assignment,
        )
        .unwrap()
    }

    fn audited() -> BuildOptions {
        BuildOptions {
            audit: true,
            trace: true,
            ..BuildOptions::default()
        }
    }

    #[test]
    fn points_on_centroids_cost_nothing() {
        let ds = Dataset::from_rows(vec![vec![0.0, 0.0], vec![5.0, 1.0], vec![9.0, 7.0]]).unwrap();
        let cl = clustering(&[&[0.0, 0.0], &[5.0, 1.0], &[9.0, 7.0]], vec![0, 1, 2]);
        for engine in [EngineChoice::TwoD, EngineChoice::HighDim] {
            let out = post_process(&ds, &cl, engine, &audited()).unwrap();
            assert_eq!(out.cost, 0.0);
            assert_eq!(out.tree.leaf_count(), 3);
            assert!(out.audit.ok(), "{:?}", out.audit.failures);
            assert!(verify_explainable(&ds, &out.clustering, &out.tree).ok);
        }
    }

    #[test]
    fn identical_centroids_give_one_leaf() {
        let ds = Dataset::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let cl = clustering(&[&[2.0, 2.0], &[2.0, 2.0], &[2.0, 2.0]], vec![1, 2]);
        let out = post_process(&ds, &cl, EngineChoice::Auto, &audited()).unwrap();
        assert_eq!(out.tree, ThresholdTree::leaf(0));
        assert_eq!(out.clustering.assignment(), &[0, 0]);
        assert_eq!(out.clustering.centroids(), cl.centroids());
    }

    #[test]
    fn two_centroids_one_cut() {
        let ds = Dataset::from_rows(vec![vec![0.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let cl = clustering(&[&[0.0, 0.0], &[4.0, 0.0]], vec![0, 1]);
        let out = post_process(&ds, &cl, EngineChoice::TwoD, &audited()).unwrap();
        assert_eq!(out.tree.cut_count(), 1);
        assert_eq!(out.trace.len(), 1);
        assert!(out.audit.ok(), "{:?}", out.audit.failures);
    }

    #[test]
    fn planar_engine_rejects_3d() {
        let ds = Dataset::from_rows(vec![vec![0.0; 3]]).unwrap();
        let cl = clustering(&[&[0.0; 3], &[1.0; 3]], vec![0]);
        assert!(post_process(&ds, &cl, EngineChoice::TwoD, &BuildOptions::default()).is_err());
        assert!(post_process(&ds, &cl, EngineChoice::Auto, &BuildOptions::default()).is_ok());
    }

    #[test]
    fn single_cluster_is_trivial() {
        let ds = Dataset::from_rows(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let cl = clustering(&[&[1.0, 0.0]], vec![0, 0]);
        let out = post_process(&ds, &cl, EngineChoice::Auto, &BuildOptions::default()).unwrap();
        assert_eq!(out.cost, 2.0);
        assert_eq!(out.tree.leaf_count(), 1);
    }
}
