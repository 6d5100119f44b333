//! The planar cut step.

use crate::error::Result;
use crate::interval::IntervalSet;
use crate::scalar::Scalar;
use crate::subproblem::{linf, Bounds, PointType, Subproblem};
use crate::tree::AxisCut;

use super::{
    allowed_region, candidate_thresholds, events, far_reassignments, flipped_type,
    forbidden_margins, is_separated, nearest_on_side, reassign_info, require_cuttable, split,
    theta_inputs, CutDiagnostics, CutOutcome, ThetaChoice, ThetaRule,
};

/// Relevant points with `ℓ ≥ L/16` become irrelevant with `ℓ ← 17ℓ`.
pub fn preprocess_2d<T: Scalar>(sub: &Subproblem<T>) -> Result<Subproblem<T>> {
    Ok(preprocess(sub, &sub.bounds())?.0)
}

fn preprocess<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds) -> Result<(Subproblem<T>, usize)> {
    let cutoff = bounds.l / 16.0;
    let mut changed = 0;
    let states = sub
        .states()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if s.ptype.is_relevant() && s.ell >= cutoff {
                s.ell *= 17.0;
                s.ptype = PointType::Irrelevant;
                changed += 1;
            }
            s
        })
        .collect();
    Ok((sub.with_states(states)?, changed))
}

/// Two margins of width `L/8` plus the `W` interval of every far point.
/// Expects a preprocessed subproblem.
pub fn forbidden_region_2d<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds) -> IntervalSet<f64> {
    forbidden(sub, bounds).0
}

fn forbidden<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds) -> (IntervalSet<f64>, usize) {
    let (far, ws) = far_reassignments(sub, bounds);
    let margins = IntervalSet::from_intervals(forbidden_margins(bounds, bounds.l / 8.0));
    (margins.union(&ws), far.len())
}

pub fn choose_theta_2d<T: Scalar>(
    sub: &Subproblem<T>,
    bounds: &Bounds,
    forbidden: &IntervalSet<f64>,
    rule: ThetaRule,
) -> Result<ThetaChoice> {
    let l = bounds.l;
    let (lhs, mass): (Vec<f64>, Vec<f64>) = sub
        .states()
        .iter()
        .map(|s| match s.ptype.norm0() {
            Some(0) => (s.ell * l, s.ell * s.ell),
            _ => (0.0, 0.0),
        })
        .unzip();
    let inputs = theta_inputs(sub, bounds.jstar, lhs, mass);
    let allowed = allowed_region(bounds, forbidden)?;
    let inst = sub.instance().clone();
    let candidates = candidate_thresholds(&allowed, &events(sub, bounds.jstar), |v| {
        inst.round_scalar(v)
    });
    inputs.choose(&candidates, rule)
}

/// Preprocess, forbid, choose `θ`, and update.
pub fn single_cut_2d<T: Scalar>(sub: &Subproblem<T>, rule: ThetaRule) -> Result<CutOutcome<T>> {
    let bounds = require_cuttable(sub)?;
    let a_parent = sub.potential();
    let (sub, preprocessed) = preprocess(sub, &bounds)?;
    let (forbidden, far_points) = forbidden(&sub, &bounds);
    let choice = choose_theta_2d(&sub, &bounds, &forbidden, rule)?;

    let inst = sub.instance().clone();
    let (j, l, theta, d) = (bounds.jstar, bounds.l, choice.theta, inst.d());
    let mut separated = 0;
    let mut separated_relevant = 0;
    let mut states = Vec::with_capacity(sub.states().len());
    for (idx, s) in sub.states().iter().enumerate() {
        let mut s = s.clone();
        if is_separated(&sub, idx, j, theta) {
            separated += 1;
            let x = inst.x(sub.points()[idx]);
            let lands_left = x[j] <= theta;
            match s.ptype.norm0() {
                None => s.sigma = nearest_on_side(&sub, x, j, theta, lands_left)?,
                Some(norm0) => {
                    separated_relevant += 1;
                    s.sigma = reassign_info(&sub, &bounds, idx).eta;
                    s.ell += 2f64.powi(11) * l * (s.ell / l).powf(1.0 / (d - norm0) as f64);
                    s.ptype = flipped_type(&s.ptype, j, lands_left)?;
                }
            }
            debug_assert!(linf(x, inst.y(s.sigma)) <= s.ell * (1.0 + 1e-9));
        }
        states.push(s);
    }
    let (child_le, child_gt) = split(&sub, j, theta, states)?;
    let diagnostics = CutDiagnostics {
        jstar: j,
        theta,
        l,
        forbidden_measure: forbidden.measure(),
        mass: sub.mass(),
        m1: choice.m1,
        m2: choice.m2,
        mstar: choice.mstar,
        lhs: choice.lhs,
        rhs: choice.rhs,
        a_parent,
        a_preprocessed: sub.potential(),
        a_children: child_le.potential() + child_gt.potential(),
        mass_left: child_le.mass(),
        mass_right: child_gt.mass(),
        separated,
        separated_relevant,
        preprocessed,
        far_points,
        candidates_tested: choice.candidates_tested,
        conservation: Vec::new(),
        groups: Vec::new(),
    };
    Ok(CutOutcome {
        cut: AxisCut::new(j, T::lit(theta))?,
        child_le,
        child_gt,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Clustering, Dataset, Point};

    fn sub(points: &[[f64; 2]], centroids: &[[f64; 2]], assignment: Vec<usize>) -> Subproblem {
        let ds = Dataset::from_rows(points.iter().map(|p| p.to_vec()).collect()).unwrap();
        let cl = Clustering::new(
            centroids
                .iter()
                .map(|c| Point::new(c.to_vec()).unwrap())
                .collect(),
            assignment,
        )
        .unwrap();
        Subproblem::initial_2d(&ds, &cl).unwrap()
    }

    #[test]
    fn preprocess_threshold() {
        let s = sub(
            &[[1.0, 0.0], [0.5, 0.0]],
            &[[0.0, 0.0], [16.0, 0.0]],
            vec![0, 0],
        );
        let p = preprocess_2d(&s).unwrap();
        assert_eq!(p.states()[0].ell, 17.0);
        assert_eq!(p.states()[0].ptype, PointType::Irrelevant);
        assert_eq!(p.states()[1], s.states()[1]);
        assert!(p.potential() <= s.potential());
    }

    #[test]
    fn margins_only() {
        let s = sub(
            &[[0.0, 0.0], [16.0, 0.0]],
            &[[0.0, 0.0], [16.0, 0.0]],
            vec![0, 1],
        );
        let b = s.bounds();
        let f = forbidden_region_2d(&s, &b);
        assert_eq!(f.measure(), 4.0);
    }

    #[test]
    fn gap_midpoint_without_points() {
        let s = sub(&[[0.0, 0.0]], &[[0.0, 0.0], [16.0, 0.0]], vec![0]);
        let out = single_cut_2d(&s, ThetaRule::First).unwrap();
        assert_eq!(out.cut, AxisCut::new(0, 8.0).unwrap());
        assert_eq!(out.child_le.centroids(), &[0]);
        assert_eq!(out.child_gt.centroids(), &[1]);
    }

    #[test]
    fn coincident_pairs_not_separated() {
        let s = sub(
            &[[0.0, 0.0], [10.0, 3.0]],
            &[[0.0, 0.0], [10.0, 3.0]],
            vec![0, 1],
        );
        let out = single_cut_2d(&s, ThetaRule::First).unwrap();
        assert_eq!(out.diagnostics.separated, 0);
        assert_eq!(out.child_le.points(), &[0]);
        assert_eq!(out.child_gt.points(), &[1]);
        assert!(out.diagnostics.a_children <= out.diagnostics.a_parent);
    }

    #[test]
    fn separated_relevant_point_flips_type() {
        // bulk mass on both sides lets the first gap candidate (θ = 2.25) pass,
        // and it separates the last point from its centroid at x = 1.9
        let mut pts = vec![[0.0, 0.9]; 50];
        pts.extend(vec![[16.0, 0.9]; 50]);
        pts.push([2.5, 0.0]);
        let mut asg = vec![0; 50];
        asg.extend(vec![1; 50]);
        asg.push(2);
        let s = sub(&pts, &[[0.0, 0.0], [16.0, 0.0], [1.9, 0.0]], asg);
        let out = single_cut_2d(&s, ThetaRule::First).unwrap();
        assert_eq!(out.cut.threshold, 2.25);
        assert_eq!(out.diagnostics.separated_relevant, 1);
        let last = out.child_gt.states().last().unwrap();
        assert_eq!(last.ptype, PointType::Relevant(vec![1, 0]));
        assert_eq!(last.sigma, 1);
        let expected = 0.6 + 2048.0 * 16.0 * (0.6f64 / 16.0).sqrt();
        assert!((last.ell - expected).abs() < 1e-9 * expected);
        assert!(out.child_le.check_valid().ok);
        assert!(out.child_gt.check_valid().ok);
    }

    #[test]
    fn worked_example_mass_split() {
        let s = sub(
            &[[0.0, 0.0], [3.0, 0.0]],
            &[[0.0, 0.0], [4.0, 0.0]],
            vec![0, 1],
        );
        let out = single_cut_2d(&s, ThetaRule::First).unwrap();
        let d = &out.diagnostics;
        assert!(d.forbidden_measure <= d.l / 2.0);
        assert!(d.a_children <= d.a_parent * (1.0 + 1e-9));
        assert!(out.child_le.check_valid().ok);
        assert!(out.child_gt.check_valid().ok);
        assert!((d.mass_left - d.m1).abs() <= 1e-12 * d.m1);
        assert!((d.mass_right - d.m2).abs() <= 1e-12 * d.m2);
    }
}
