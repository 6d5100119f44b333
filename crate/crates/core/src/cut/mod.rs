//! One recursion step: pick a cut on the widest dimension, reassign the points
//! it separates from their centroid, and hand back two child subproblems.

pub mod hd;
pub mod two_d;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalSet};
use crate::scalar::{approx_le, Scalar};
use crate::subproblem::{linf, Bounds, Mode, PointState, PointType, Subproblem, REL_TOL};
use crate::tree::AxisCut;

pub use hd::{choose_theta_hd, forbidden_region_hd, preprocess_hd, recolor_hd, single_cut_hd};
pub use two_d::{choose_theta_2d, forbidden_region_2d, preprocess_2d, single_cut_2d};

/// How to pick among the thresholds that pass the cut inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaRule {
    /// Smallest passing threshold.
    #[default]
    First,
    /// Passing threshold with the smallest left-hand side; ties to the smaller one.
    MinLhs,
}

/// Where a separated point would be moved and which thresholds separate it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReassignInfo {
    /// True when `x(j*) ≥ σ(j*)`, i.e. candidates lie at or above `x`.
    pub upper: bool,
    pub eta: usize,
    pub q: f64,
    pub w: Interval<f64>,
}

/// `Y(x)`, `η`, `q` and `W` for the point at local position `idx`.
pub fn reassign_info<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds, idx: usize) -> ReassignInfo {
    let inst = sub.instance();
    let j = bounds.jstar;
    let state = &sub.states()[idx];
    let xj = inst.x(sub.points()[idx])[j];
    let sigma = inst.y(state.sigma);
    let sj = sigma[j];
    let upper = xj >= sj;
    let (cutoff, w) = if upper {
        (xj.min(bounds.b2[j]), Interval::closed_open(sj, xj))
    } else {
        (xj.max(bounds.b1[j]), Interval::closed_open(xj, sj))
    };
    let mut best: Option<(usize, f64)> = None;
    for &c in sub.centroids() {
        let yj = inst.y(c)[j];
        let inside = if upper { yj >= cutoff } else { yj <= cutoff };
        if !inside {
            continue;
        }
        let d = linf(sigma, inst.y(c));
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((c, d));
        }
    }
    let (eta, q) = best.expect("Y(x) always contains a boundary centroid");
    ReassignInfo {
        upper,
        eta,
        q,
        w: w.intersect(&Interval::open(bounds.b1[j], bounds.b2[j])),
    }
}

/// Local indices of the points in `T`: relevant points with `‖t‖₀ ≤ 1`,
/// `t(j*) = 0`, off their centroid in `j*`, whose reassignment would be far
/// compared with their length. Returns the union of their `W` intervals too.
pub(crate) fn far_reassignments<T: Scalar>(
    sub: &Subproblem<T>,
    bounds: &Bounds,
) -> (Vec<usize>, IntervalSet<f64>) {
    let inst = sub.instance();
    let (j, l, d) = (bounds.jstar, bounds.l, inst.d());
    let mut members = Vec::new();
    let mut ws = Vec::new();
    for (idx, s) in sub.states().iter().enumerate() {
        let Some(norm0) = s.ptype.norm0() else {
            continue;
        };
        if norm0 > 1 || s.ptype.get(j) != Some(0) {
            continue;
        }
        if inst.x(sub.points()[idx])[j] == inst.y(s.sigma)[j] {
            continue;
        }
        let info = reassign_info(sub, bounds, idx);
        let reach = 2f64.powi(11) * (s.ell / l).powf(1.0 / (d - norm0) as f64);
        if info.q / l > reach {
            members.push(idx);
            ws.push(info.w);
        }
    }
    (members, IntervalSet::from_intervals(ws))
}

/// Thresholds worth testing: per component of `allowed`, the midpoints between
/// consecutive event coordinates (component endpoints included as events),
/// plus a closed right endpoint when it coincides with an event. Every value is
/// rounded through the dataset's scalar type and kept only if still allowed.
pub fn candidate_thresholds(
    allowed: &IntervalSet<f64>,
    events: &[f64],
    round: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut sorted: Vec<f64> = events.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    sorted.dedup();
    let mut out = Vec::new();
    let push = |v: f64, out: &mut Vec<f64>| {
        let v = round(v);
        if allowed.contains(v) && out.last().is_none_or(|&last| last < v) {
            out.push(v);
        }
    };
    for iv in allowed.intervals() {
        if iv.lo == iv.hi {
            push(iv.lo, &mut out);
            continue;
        }
        let start = sorted.partition_point(|&v| v <= iv.lo);
        let end = sorted.partition_point(|&v| v < iv.hi);
        let mut prev = iv.lo;
        for &v in &sorted[start..end] {
            push((prev + v) / 2.0, &mut out);
            prev = v;
        }
        push((prev + iv.hi) / 2.0, &mut out);
        if iv.hi_closed
            && sorted
                .binary_search_by(|v| v.partial_cmp(&iv.hi).unwrap())
                .is_ok()
        {
            push(iv.hi, &mut out);
        }
    }
    out
}

/// Per-point inputs to the threshold test.
pub(crate) struct ThetaInputs {
    /// `x(j*)` per active point.
    pub xs: Vec<f64>,
    /// `σ(j*)` per active point.
    pub sigmas: Vec<f64>,
    /// Contribution to the left-hand side when the point is separated.
    pub lhs_weight: Vec<f64>,
    /// Contribution to `M₁*`/`M₂*` when the point stays with its centroid.
    pub mass_weight: Vec<f64>,
    /// `y(j*)` per active centroid.
    pub ys: Vec<f64>,
    pub mass: f64,
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaChoice {
    pub theta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub m1: f64,
    pub m2: f64,
    pub mstar: f64,
    pub candidates_tested: usize,
}

impl ThetaInputs {
    fn evaluate(&self, theta: f64) -> ThetaChoice {
        let (mut lhs, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..self.xs.len() {
            let (x, s) = (self.xs[i], self.sigmas[i]);
            if x.min(s) <= theta && theta < x.max(s) {
                lhs += self.lhs_weight[i];
            } else if x <= theta {
                m1 += self.mass_weight[i];
            } else {
                m2 += self.mass_weight[i];
            }
        }
        let left = self.ys.iter().filter(|&&y| y <= theta).count();
        let m1 = self.m * left as f64 + m1;
        let m2 = self.m * (self.ys.len() - left) as f64 + m2;
        let mstar = (self.mass / 2.0).min(self.mass - m1).min(self.mass - m2);
        let rhs = 8.0 * mstar * (self.mass / mstar).ln() * (self.mass / self.m).log2().ln();
        ThetaChoice {
            theta,
            lhs,
            rhs,
            m1,
            m2,
            mstar,
            candidates_tested: 0,
        }
    }

    pub(crate) fn choose(&self, candidates: &[f64], rule: ThetaRule) -> Result<ThetaChoice> {
        let mut best: Option<ThetaChoice> = None;
        for (n, &theta) in candidates.iter().enumerate() {
            let mut c = self.evaluate(theta);
            c.candidates_tested = n + 1;
            if !approx_le(c.lhs, c.rhs, REL_TOL) {
                continue;
            }
            match rule {
                ThetaRule::First => return Ok(c),
                ThetaRule::MinLhs => {
                    if best.as_ref().is_none_or(|b| c.lhs < b.lhs) {
                        best = Some(c);
                    }
                }
            }
        }
        match best {
            Some(mut b) => {
                b.candidates_tested = candidates.len();
                Ok(b)
            }
            None => Err(Error::NoFeasibleTheta {
                candidates: candidates.len(),
            }),
        }
    }
}

/// Statistics of one `(color, type)` group, reported in traces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupStat {
    pub color: i32,
    #[serde(rename = "type")]
    pub ptype: Vec<u8>,
    pub group_size: usize,
    pub s: f64,
    pub ell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CutDiagnostics {
    pub jstar: usize,
    pub theta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub forbidden_measure: f64,
    /// Mass after preprocessing.
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(rename = "M1star")]
    pub m1: f64,
    #[serde(rename = "M2star")]
    pub m2: f64,
    #[serde(rename = "Mstar")]
    pub mstar: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Potential before preprocessing.
    #[serde(rename = "A_parent")]
    pub a_parent: f64,
    #[serde(rename = "A_preprocessed")]
    pub a_preprocessed: f64,
    #[serde(rename = "A_children")]
    pub a_children: f64,
    #[serde(rename = "M_left")]
    pub mass_left: f64,
    #[serde(rename = "M_right")]
    pub mass_right: f64,
    pub separated: usize,
    pub separated_relevant: usize,
    pub preprocessed: usize,
    pub far_points: usize,
    pub candidates_tested: usize,
    /// `p'·ℓ'²` vs `p·ℓ·L` per separated relevant point (general mode only).
    #[serde(skip)]
    pub conservation: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupStat>,
}

#[derive(Clone, Debug)]
pub struct CutOutcome<T: Scalar = f64> {
    pub cut: AxisCut<T>,
    /// Side `x(j*) ≤ θ`.
    pub child_le: Subproblem<T>,
    /// Side `x(j*) > θ`.
    pub child_gt: Subproblem<T>,
    pub diagnostics: CutDiagnostics,
}

/// Dispatches on the subproblem's mode.
pub fn single_cut<T: Scalar>(sub: &Subproblem<T>, rule: ThetaRule) -> Result<CutOutcome<T>> {
    match sub.mode() {
        Mode::TwoD => single_cut_2d(sub, rule),
        Mode::HighDim => single_cut_hd(sub, rule),
    }
}

pub(crate) fn require_cuttable<T: Scalar>(sub: &Subproblem<T>) -> Result<Bounds> {
    let bounds = sub.bounds();
    if bounds.l.is_nan() || bounds.l <= 0.0 {
        return Err(Error::InvalidParameters(
            "cannot cut a subproblem whose centroids coincide".into(),
        ));
    }
    Ok(bounds)
}

/// Events for candidate generation: every active coordinate on `j*`.
pub(crate) fn events<T: Scalar>(sub: &Subproblem<T>, j: usize) -> Vec<f64> {
    let inst = sub.instance();
    sub.points()
        .iter()
        .map(|&i| inst.x(i)[j])
        .chain(sub.centroids().iter().map(|&c| inst.y(c)[j]))
        .collect()
}

pub(crate) fn theta_inputs<T: Scalar>(
    sub: &Subproblem<T>,
    j: usize,
    lhs_weight: Vec<f64>,
    mass_weight: Vec<f64>,
) -> ThetaInputs {
    let inst = sub.instance();
    ThetaInputs {
        xs: sub.points().iter().map(|&i| inst.x(i)[j]).collect(),
        sigmas: sub.states().iter().map(|s| inst.y(s.sigma)[j]).collect(),
        lhs_weight,
        mass_weight,
        ys: sub.centroids().iter().map(|&c| inst.y(c)[j]).collect(),
        mass: sub.mass(),
        m: sub.m(),
    }
}

/// Closest active centroid to `from` (ℓ∞) on the requested side of the cut;
/// ties go to the lowest index.
pub(crate) fn nearest_on_side<T: Scalar>(
    sub: &Subproblem<T>,
    from: &[f64],
    j: usize,
    theta: f64,
    left: bool,
) -> Result<usize> {
    let inst = sub.instance();
    let mut best: Option<(usize, f64)> = None;
    for &c in sub.centroids() {
        let y = inst.y(c);
        if (y[j] <= theta) != left {
            continue;
        }
        let d = linf(from, y);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::Invariant("a side of the cut has no centroid".into()))
}

/// Whether the point at local `idx` sits on the opposite side from its centroid.
pub(crate) fn is_separated<T: Scalar>(
    sub: &Subproblem<T>,
    idx: usize,
    j: usize,
    theta: f64,
) -> bool {
    let inst = sub.instance();
    let x = inst.x(sub.points()[idx])[j];
    let s = inst.y(sub.states()[idx].sigma)[j];
    (x <= theta) != (s <= theta)
}

/// Splits `sub` at `(j, θ)` using the already-updated per-point states.
pub(crate) fn split<T: Scalar>(
    sub: &Subproblem<T>,
    j: usize,
    theta: f64,
    new_states: Vec<PointState>,
) -> Result<(Subproblem<T>, Subproblem<T>)> {
    let inst = sub.instance();
    let (mut lp, mut ls, mut rp, mut rs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (&i, s) in sub.points().iter().zip(new_states) {
        if inst.x(i)[j] <= theta {
            lp.push(i);
            ls.push(s);
        } else {
            rp.push(i);
            rs.push(s);
        }
    }
    let (lc, rc): (Vec<usize>, Vec<usize>) = sub
        .centroids()
        .iter()
        .partition(|&&c| inst.y(c)[j] <= theta);
    Ok((
        Subproblem::from_parts(inst.clone(), lp, lc, ls)?,
        Subproblem::from_parts(inst.clone(), rp, rc, rs)?,
    ))
}

/// New type after a relevant point is separated: `t(j*)` becomes 1 when the
/// point lands above the cut (it now hugs the child's lower boundary), 2 below.
pub(crate) fn flipped_type(ptype: &PointType, j: usize, lands_left: bool) -> Result<PointType> {
    match ptype {
        PointType::Relevant(t) if t[j] == 0 => {
            let mut t = t.clone();
            t[j] = if lands_left { 2 } else { 1 };
            Ok(PointType::Relevant(t))
        }
        other => Err(Error::Invariant(format!(
            "separated relevant point has type {other:?} on the cut dimension"
        ))),
    }
}

pub(crate) fn forbidden_margins(bounds: &Bounds, width: f64) -> [Interval<f64>; 2] {
    let (lo, hi) = (bounds.b1[bounds.jstar], bounds.b2[bounds.jstar]);
    [
        Interval::open_closed(lo, lo + width),
        Interval::closed_open(hi - width, hi),
    ]
}

pub(crate) fn allowed_region(
    bounds: &Bounds,
    forbidden: &IntervalSet<f64>,
) -> Result<IntervalSet<f64>> {
    forbidden.complement_within(bounds.b1[bounds.jstar], bounds.b2[bounds.jstar])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Clustering, Dataset, Point};

    #[test]
    fn reassign_info_example() {
        let ds = Dataset::from_rows(vec![vec![4.2, 0.0]]).unwrap();
        let cl = Clustering::new(
            [[0.0, 0.0], [4.0, 0.0], [10.0, 0.0]]
                .iter()
                .map(|c| Point::new(c.to_vec()).unwrap())
                .collect(),
            vec![0],
        )
        .unwrap();
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        let b = sub.bounds();
        let info = reassign_info(&sub, &b, 0);
        assert!(info.upper);
        assert_eq!((info.eta, info.q), (2, 10.0));
        assert_eq!(info.w, Interval::open(0.0, 4.2));
    }

    #[test]
    fn reassign_info_degenerate_w() {
        let ds = Dataset::from_rows(vec![vec![0.0, 5.0]]).unwrap();
        let cl = Clustering::new(
            vec![
                Point::new(vec![0.0, 0.0]).unwrap(),
                Point::new(vec![10.0, 0.0]).unwrap(),
            ],
            vec![0],
        )
        .unwrap();
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        let info = reassign_info(&sub, &sub.bounds(), 0);
        assert!(info.w.is_empty());
        // σ itself qualifies, so nothing moves
        assert_eq!((info.eta, info.q), (0, 0.0));
    }

    #[test]
    fn far_point_forbids_its_window() {
        // a tiny offset from σ whose only reachable centroid is across the box
        let ds = Dataset::from_rows(vec![vec![1e-9, 0.0], vec![1000.0, 0.0]]).unwrap();
        let cl = Clustering::new(
            vec![
                Point::new(vec![0.0, 0.0]).unwrap(),
                Point::new(vec![1000.0, 0.0]).unwrap(),
            ],
            vec![0, 1],
        )
        .unwrap();
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        let b = sub.bounds();
        let (members, w) = far_reassignments(&sub, &b);
        assert_eq!(members, vec![0]);
        assert_eq!(w.intervals(), &[Interval::open(0.0, 1e-9)]);
        let out = single_cut(&sub, ThetaRule::First).unwrap();
        assert_eq!(out.diagnostics.far_points, 1);
        assert_eq!(out.diagnostics.separated, 0);
        assert!(out.cut.threshold > 1e-9);
    }

    #[test]
    fn candidates_cover_each_gap() {
        let allowed = IntervalSet::from_intervals([
            Interval::open(1.0, 3.0),
            Interval::open_closed(5.0, 6.0),
        ]);
        let c = candidate_thresholds(&allowed, &[0.0, 2.0, 6.0, 5.5], |v| v);
        assert_eq!(c, vec![1.5, 2.5, 5.25, 5.75, 6.0]);
        let empty_gap = IntervalSet::from_intervals([Interval::open(1.0, 3.0)]);
        assert_eq!(candidate_thresholds(&empty_gap, &[], |v| v), vec![2.0]);
        let point = IntervalSet::from_intervals([Interval::closed(2.0, 2.0)]);
        assert_eq!(candidate_thresholds(&point, &[2.0], |v| v), vec![2.0]);
    }

    #[test]
    fn candidates_respect_rounding() {
        let allowed = IntervalSet::from_intervals([Interval::open(1.0, 1.0 + 1e-12)]);
        // rounding through f32 lands on an excluded endpoint
        let c = candidate_thresholds(&allowed, &[], |v| v as f32 as f64);
        assert!(c.is_empty());
    }

    #[test]
    fn theta_rules() {
        let inputs = ThetaInputs {
            xs: vec![1.0, 3.0],
            sigmas: vec![0.0, 4.0],
            lhs_weight: vec![1.0, 0.0],
            mass_weight: vec![0.0, 0.0],
            ys: vec![0.0, 4.0],
            mass: 2.0,
            m: 1.0,
        };
        // rhs = 8·1·ln2·ln1 = 0, so only thetas separating nothing weighted pass
        let c = inputs.choose(&[0.5, 2.0, 3.5], ThetaRule::First).unwrap();
        assert_eq!(c.theta, 2.0);
        assert_eq!(c.candidates_tested, 2);
        let c = inputs.choose(&[0.5, 2.0, 3.5], ThetaRule::MinLhs).unwrap();
        assert_eq!(c.theta, 2.0);
        assert!(inputs.choose(&[0.5], ThetaRule::First).is_err());
    }
}
