//! The general-dimension cut step. Compared with the planar one it tracks, per
//! relevant point, a color, a scale bounding how many distinct centroids its
//! group may point at, and a potential that rescales its charge.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalSet};
use crate::scalar::{floor_log2, Scalar};
use crate::subproblem::{Bounds, PointType, Subproblem, REL_TOL};
use crate::tree::AxisCut;

use super::{
    allowed_region, candidate_thresholds, events, far_reassignments, flipped_type,
    forbidden_margins, is_separated, nearest_on_side, require_cuttable, split, theta_inputs,
    CutDiagnostics, CutOutcome, GroupStat, ThetaChoice, ThetaRule,
};

/// Relevant points with `ℓ ≥ L/64` become irrelevant with `ℓ ← 65ℓ` and
/// `p ← p/65²`.
pub fn preprocess_hd<T: Scalar>(sub: &Subproblem<T>) -> Result<Subproblem<T>> {
    Ok(preprocess(sub, &sub.bounds())?.0)
}

fn preprocess<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds) -> Result<(Subproblem<T>, usize)> {
    let cutoff = bounds.l / 64.0;
    let mut changed = 0;
    let states = sub
        .states()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if s.ptype.is_relevant() && s.ell >= cutoff {
                s.ell *= 65.0;
                s.potential /= 65.0 * 65.0;
                s.ptype = PointType::Irrelevant;
                changed += 1;
            }
            s
        })
        .collect();
    Ok((sub.with_states(states)?, changed))
}

/// Gives every untyped relevant point with `ℓ ≥ L/32k` the color
/// `⌊log₂(ℓ/(L/32k))⌋`. Expects a preprocessed subproblem.
pub fn recolor_hd<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds) -> Result<Subproblem<T>> {
    let k = sub.instance().k();
    let unit = bounds.l / (32.0 * k as f64);
    let max_color = floor_log2(k as f64) - 1;
    let mut states = sub.states().to_vec();
    for s in &mut states {
        if s.ptype.norm0() != Some(0) || s.ell < unit {
            continue;
        }
        let c = floor_log2(s.ell / unit);
        if !(0..=max_color).contains(&c) {
            return Err(Error::Invariant(format!(
                "color {c} for length {} outside [0, {max_color}] (L = {})",
                s.ell, bounds.l
            )));
        }
        s.color = c;
    }
    sub.with_states(states)
}

fn binomial_small(d: usize, i: usize) -> f64 {
    let d = d as f64;
    match i {
        0 => 1.0,
        1 => d,
        2 => d * (d - 1.0) / 2.0,
        _ => unreachable!("type support is at most two"),
    }
}

/// `48·2^{‖t‖₀}·C(d, ‖t‖₀)·s·ℓ·log₂k / L`: the new scale of a separated point,
/// and the crowding threshold of its group.
fn scale_bound(d: usize, k: usize, norm0: usize, s: f64, ell: f64, l: f64) -> f64 {
    48.0 * 2f64.powi(norm0 as i32) * binomial_small(d, norm0) * s * ell * (k as f64).log2() / l
}

struct Group {
    norm0: usize,
    scale: f64,
    ell: f64,
    size: usize,
    sigmas: BTreeSet<usize>,
}

fn groups<T: Scalar>(sub: &Subproblem<T>) -> BTreeMap<(i32, Vec<u8>), Group> {
    let mut out: BTreeMap<(i32, Vec<u8>), Group> = BTreeMap::new();
    for s in sub.states() {
        let PointType::Relevant(t) = &s.ptype else {
            continue;
        };
        if s.color < 0 {
            continue;
        }
        let g = out.entry((s.color, t.clone())).or_insert_with(|| Group {
            norm0: s.ptype.norm0().unwrap_or(0),
            scale: s.scale,
            ell: s.ell,
            size: 0,
            sigmas: BTreeSet::new(),
        });
        g.size += 1;
        g.sigmas.insert(s.sigma);
    }
    out
}

/// Points of `(b₁, b₂)` covered by strictly more than `threshold` of the
/// closed intervals `[c − r, c + r]`.
pub(crate) fn crowded(
    centers: &[f64],
    r: f64,
    threshold: f64,
    window: &Interval<f64>,
) -> IntervalSet<f64> {
    let mut starts: Vec<f64> = centers.iter().map(|c| c - r).collect();
    let mut ends: Vec<f64> = centers.iter().map(|c| c + r).collect();
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ends.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut coords: Vec<f64> = starts.iter().chain(&ends).copied().collect();
    coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
    coords.dedup();
    let mut pieces = Vec::new();
    for (i, &v) in coords.iter().enumerate() {
        let opened = starts.partition_point(|&s| s <= v) as f64;
        // at v itself intervals ending at v still count; just after, they do not
        let at = opened - ends.partition_point(|&e| e < v) as f64;
        let after = opened - ends.partition_point(|&e| e <= v) as f64;
        if at > threshold {
            pieces.push(Interval::closed(v, v));
        }
        if after > threshold {
            if let Some(&next) = coords.get(i + 1) {
                pieces.push(Interval::open(v, next));
            }
        }
    }
    IntervalSet::from_intervals(pieces).clip(window)
}

/// Margins of width `L/32`, bands of half-width `L/32k` around every
/// centroid, the `W` intervals of far points, and the crowded regions of every
/// colored group. Expects a preprocessed and recolored subproblem.
pub fn forbidden_region_hd<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds) -> IntervalSet<f64> {
    forbidden(sub, bounds).0
}

fn forbidden<T: Scalar>(sub: &Subproblem<T>, bounds: &Bounds) -> (IntervalSet<f64>, usize) {
    let inst = sub.instance();
    let (j, l, k, d) = (bounds.jstar, bounds.l, inst.k(), inst.d());
    let window = Interval::open(bounds.b1[j], bounds.b2[j]);
    let band = l / (32.0 * k as f64);
    let mut parts: Vec<Interval<f64>> = forbidden_margins(bounds, l / 32.0).to_vec();
    for &c in sub.centroids() {
        let y = inst.y(c)[j];
        parts.push(Interval::closed(y - band, y + band).intersect(&window));
    }
    let (far, ws) = far_reassignments(sub, bounds);
    let mut set = IntervalSet::from_intervals(parts).union(&ws);
    for g in groups(sub).values() {
        let centers: Vec<f64> = g.sigmas.iter().map(|&c| inst.y(c)[j]).collect();
        let threshold = scale_bound(d, k, g.norm0, g.scale, g.ell, l);
        set = set.union(&crowded(&centers, g.ell, threshold, &window));
    }
    (set, far.len())
}

pub fn choose_theta_hd<T: Scalar>(
    sub: &Subproblem<T>,
    bounds: &Bounds,
    forbidden: &IntervalSet<f64>,
    rule: ThetaRule,
) -> Result<ThetaChoice> {
    let inst = sub.instance().clone();
    let l = bounds.l;
    let (lhs, mass): (Vec<f64>, Vec<f64>) = sub
        .states()
        .iter()
        .map(|s| match s.ptype.norm0() {
            Some(t) => {
                let w = s.potential * s.ell * inst.type_weight(t);
                (w * l, w * s.ell)
            }
            None => (0.0, 0.0),
        })
        .unzip();
    let inputs = theta_inputs(sub, bounds.jstar, lhs, mass);
    let allowed = allowed_region(bounds, forbidden)?;
    let candidates = candidate_thresholds(&allowed, &events(sub, bounds.jstar), |v| {
        inst.round_scalar(v)
    });
    inputs.choose(&candidates, rule)
}

/// Preprocess, recolor, forbid, choose `θ`, and update.
pub fn single_cut_hd<T: Scalar>(sub: &Subproblem<T>, rule: ThetaRule) -> Result<CutOutcome<T>> {
    let bounds = require_cuttable(sub)?;
    let a_parent = sub.potential();
    let (pre, preprocessed) = preprocess(sub, &bounds)?;
    let a_preprocessed = pre.potential();
    let sub = recolor_hd(&pre, &bounds)?;
    let (forbidden, far_points) = forbidden(&sub, &bounds);
    let choice = choose_theta_hd(&sub, &bounds, &forbidden, rule)?;

    let inst = sub.instance().clone();
    let (j, l, theta, d, k) = (bounds.jstar, bounds.l, choice.theta, inst.d(), inst.k());
    let mut separated = 0;
    let mut separated_relevant = 0;
    let mut conservation = Vec::new();
    let mut states = Vec::with_capacity(sub.states().len());
    for (idx, s) in sub.states().iter().enumerate() {
        let mut s = s.clone();
        let x = inst.x(sub.points()[idx]);
        if !is_separated(&sub, idx, j, theta) {
            if s.ptype.norm0() == Some(0) {
                s.color = -1;
            }
            states.push(s);
            continue;
        }
        separated += 1;
        let lands_left = x[j] <= theta;
        let Some(norm0) = s.ptype.norm0() else {
            s.sigma = nearest_on_side(&sub, x, j, theta, lands_left)?;
            states.push(s);
            continue;
        };
        separated_relevant += 1;
        let mut scale = scale_bound(d, k, norm0, s.scale, s.ell, l);
        if scale < 1.0 {
            if scale >= 1.0 - REL_TOL {
                log::warn!("new scale {scale} rounded up to 1");
                scale = 1.0;
            } else {
                return Err(Error::Invariant(format!("new scale {scale} below 1")));
            }
        }
        let sigma = inst.y(s.sigma).to_vec();
        s.sigma = nearest_on_side(&sub, &sigma, j, theta, lands_left)?;
        s.scale = scale;
        let before = s.potential * s.ell * l;
        if norm0 <= 1 {
            let e = (d - norm0) as f64;
            let ratio = s.ell / l;
            s.ptype = flipped_type(&s.ptype, j, lands_left)?;
            s.ell = 2f64.powi(12) * l * ratio.powf(1.0 / e);
            s.potential *= ratio.powf(1.0 - 2.0 / e) / 2f64.powi(24);
        } else {
            s.ptype = PointType::Irrelevant;
            s.potential *= s.ell / l / 4.0;
            s.ell = 2.0 * l;
        }
        conservation.push((s.potential * s.ell * s.ell, before));
        states.push(s);
    }
    let group_stats = groups(&sub)
        .into_iter()
        .map(|((color, ptype), g)| GroupStat {
            color,
            ptype,
            group_size: g.size,
            s: g.scale,
            ell: g.ell,
        })
        .collect();
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
        a_preprocessed,
        a_children: child_le.potential() + child_gt.potential(),
        mass_left: child_le.mass(),
        mass_right: child_gt.mass(),
        separated,
        separated_relevant,
        preprocessed,
        far_points,
        candidates_tested: choice.candidates_tested,
        conservation,
        groups: group_stats,
    };
    Ok(CutOutcome {
        cut: AxisCut::new(j, T::lit(theta))?,
        child_le,
        child_gt,
        diagnostics,
    })
}
