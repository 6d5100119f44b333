//! Recursive state shared by both cut engines.
//!
//! Coordinates stay in the caller's scalar type `T` inside the dataset, but all
//! analysis quantities (lengths, potentials, masses) are kept in `f64`; the
//! coordinates are copied into `f64` once, which is exact for both `f32` and
//! `f64` inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::marker::PhantomData;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Clustering, Dataset};
use crate::scalar::{approx_eq, approx_le, ceil_power_of_two, is_power_of_two, Scalar};

/// Relative tolerance used for every inequality in the validity checks.
pub const REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "hd")]
    HighDim,
}

/// `⊥` or a per-dimension flag in `{0, 1, 2}`: 1 means the point hugs the
/// lower boundary in that dimension, 2 the upper one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointType {
    Irrelevant,
    Relevant(Vec<u8>),
}

impl PointType {
    pub fn zero(d: usize) -> Self {
        Self::Relevant(vec![0; d])
    }

    pub fn is_relevant(&self) -> bool {
        matches!(self, Self::Relevant(_))
    }

    /// Number of nonzero entries; `None` for irrelevant points.
    pub fn norm0(&self) -> Option<usize> {
        match self {
            Self::Irrelevant => None,
            Self::Relevant(t) => Some(t.iter().filter(|&&v| v != 0).count()),
        }
    }

    pub fn get(&self, j: usize) -> Option<u8> {
        match self {
            Self::Irrelevant => None,
            Self::Relevant(t) => Some(t[j]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    /// Index of the assigned centroid in the full clustering.
    pub sigma: usize,
    pub ell: f64,
    pub ptype: PointType,
    pub color: i32,
    pub scale: f64,
    pub potential: f64,
}

/// Run-wide constants: coordinates, `k`, `d`, the centroid mass `m` and the
/// derived logarithmic factors.
#[derive(Debug)]
pub struct Instance<T: Scalar> {
    mode: Mode,
    n: usize,
    d: usize,
    k: usize,
    m: f64,
    points: Vec<f64>,
    centroids: Vec<f64>,
    /// `ln(log2(2k))`
    lnlog: f64,
    /// `ln(2k)`
    ln2k: f64,
    /// `16 (ln 2k)² ln log2(2k)`, the per-type weight base of the HD mass.
    weight_base: f64,
    _scalar: PhantomData<T>,
}

impl<T: Scalar> Instance<T> {
    fn new(dataset: &Dataset<T>, clustering: &Clustering<T>, mode: Mode) -> Result<Self> {
        clustering.check_against(dataset)?;
        let k = clustering.k();
        if k < 2 {
            return Err(Error::InvalidParameters(format!("need k >= 2, got {k}")));
        }
        let d = dataset.dim();
        match mode {
            Mode::TwoD if d != 2 => {
                return Err(Error::Unsupported(format!(
                    "the planar engine needs d = 2, got d = {d}"
                )))
            }
            Mode::HighDim if d < 2 => {
                return Err(Error::Unsupported(format!(
                    "the general engine needs d >= 2, got d = {d}"
                )))
            }
            _ => {}
        }
        let flatten = |pts: &[crate::geometry::Point<T>]| {
            pts.iter()
                .flat_map(|p| p.coords().iter().map(|c| c.as_f64()))
                .collect::<Vec<_>>()
        };
        let kf = k as f64;
        let ln2k = (2.0 * kf).ln();
        let lnlog = (2.0 * kf).log2().ln();
        Ok(Self {
            mode,
            n: dataset.len(),
            d,
            k,
            m: 1.0,
            points: flatten(dataset.points()),
            centroids: flatten(clustering.centroids()),
            lnlog,
            ln2k,
            weight_base: 16.0 * ln2k * ln2k * lnlog,
            _scalar: PhantomData,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn k(&self) -> usize {
        self.k
    }
    /// Centroid mass `m`.
    pub fn m(&self) -> f64 {
        self.m
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn y(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.d..(c + 1) * self.d]
    }

    /// `16 (ln 2k)² ln log2(2k)`.
    pub fn weight_base(&self) -> f64 {
        self.weight_base
    }

    pub fn ln_2k(&self) -> f64 {
        self.ln2k
    }

    pub fn ln_log2_2k(&self) -> f64 {
        self.lnlog
    }

    /// HD mass weight of a relevant point with `‖t‖₀ = norm0`.
    pub fn type_weight(&self, norm0: usize) -> f64 {
        self.weight_base.powi(2 - norm0 as i32)
    }

    /// The concave-ish function `f` of the potential.
    pub fn f(&self, mass: f64) -> f64 {
        let r = mass / self.m;
        match self.mode {
            Mode::TwoD => 2f64.powi(57) * mass * (1.0 + r.ln()) * self.lnlog,
            Mode::HighDim => 16.0 * mass * r.powf(1.0 / self.ln2k) * (1.0 + r.ln()) * self.lnlog,
        }
    }

    /// Rounds a threshold through the dataset's scalar type.
    pub fn round_scalar(&self, v: f64) -> f64 {
        T::lit(v).as_f64()
    }
}

#[inline]
pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Coordinate-wise box spanned by the active centroids.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    pub jstar: usize,
}

/// One node of the recursion: active points and centroids plus per-point state.
#[derive(Clone, Debug)]
pub struct Subproblem<T: Scalar = f64> {
    instance: Arc<Instance<T>>,
    points: Vec<usize>,
    centroids: Vec<usize>,
    states: Vec<PointState>,
}

impl<T: Scalar> Subproblem<T> {
    /// Planar initial subproblem: `ℓ = ‖x − σ‖∞`, `t ≡ 0`, `m = Σℓ²/k`.
    pub fn initial_2d(dataset: &Dataset<T>, clustering: &Clustering<T>) -> Result<Self> {
        let mut inst = Instance::new(dataset, clustering, Mode::TwoD)?;
        let states: Vec<PointState> = (0..inst.n)
            .map(|i| {
                let sigma = clustering.assignment()[i];
                PointState {
                    sigma,
                    ell: linf(inst.x(i), inst.y(sigma)),
                    ptype: PointType::zero(inst.d),
                    color: -1,
                    scale: inst.k as f64,
                    potential: 1.0,
                }
            })
            .collect();
        let total: f64 = states.iter().map(|s| s.ell * s.ell).sum();
        inst.m = if total > 0.0 {
            total / inst.k as f64
        } else {
            1.0
        };
        Ok(Self::whole(inst, states))
    }

    /// General-dimension initial subproblem: lengths rounded up to powers of
    /// two, uniform potential, `s = k`, `c = −1`, and `m` chosen so that
    /// `M/m = 2k`.
    pub fn initial_hd(dataset: &Dataset<T>, clustering: &Clustering<T>) -> Result<Self> {
        let mut inst = Instance::new(dataset, clustering, Mode::HighDim)?;
        let (k, d) = (inst.k as f64, inst.d as f64);
        let p0 = 2f64.powi(54) * k.powf(1.0 - 2.0 / d) * d.powi(3) * (48.0 * k.log2()).powi(3);
        let states: Vec<PointState> = (0..inst.n)
            .map(|i| {
                let sigma = clustering.assignment()[i];
                let dist = linf(inst.x(i), inst.y(sigma));
                PointState {
                    sigma,
                    ell: if dist > 0.0 {
                        ceil_power_of_two(dist)
                    } else {
                        0.0
                    },
                    ptype: PointType::zero(inst.d),
                    color: -1,
                    scale: k,
                    potential: p0,
                }
            })
            .collect();
        let total: f64 = states.iter().map(|s| s.potential * s.ell * s.ell).sum();
        let w = inst.type_weight(0);
        inst.m = if total > 0.0 { total * w / k } else { 1.0 };
        Ok(Self::whole(inst, states))
    }

    pub fn initial(dataset: &Dataset<T>, clustering: &Clustering<T>, mode: Mode) -> Result<Self> {
        match mode {
            Mode::TwoD => Self::initial_2d(dataset, clustering),
            Mode::HighDim => Self::initial_hd(dataset, clustering),
        }
    }

    fn whole(inst: Instance<T>, states: Vec<PointState>) -> Self {
        Self {
            points: (0..inst.n).collect(),
            centroids: (0..inst.k).collect(),
            instance: Arc::new(inst),
            states,
        }
    }

    /// Assembles a subproblem over an existing instance. Active sets are kept
    /// sorted; `states[i]` belongs to `points[i]`.
    pub fn from_parts(
        instance: Arc<Instance<T>>,
        points: Vec<usize>,
        centroids: Vec<usize>,
        states: Vec<PointState>,
    ) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::Empty("subproblem has no centroids"));
        }
        if points.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: states.len(),
            });
        }
        for &i in &points {
            if i >= instance.n {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: instance.n,
                });
            }
        }
        for &c in centroids.iter().chain(states.iter().map(|s| &s.sigma)) {
            if c >= instance.k {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    len: instance.k,
                });
            }
        }
        Ok(Self {
            instance,
            points,
            centroids,
            states,
        })
    }

    /// Same active sets, different per-point state.
    pub fn with_states(&self, states: Vec<PointState>) -> Result<Self> {
        Self::from_parts(
            self.instance.clone(),
            self.points.clone(),
            self.centroids.clone(),
            states,
        )
    }

    pub fn instance(&self) -> &Arc<Instance<T>> {
        &self.instance
    }
    pub fn mode(&self) -> Mode {
        self.instance.mode
    }
    pub fn points(&self) -> &[usize] {
        &self.points
    }
    pub fn centroids(&self) -> &[usize] {
        &self.centroids
    }
    pub fn states(&self) -> &[PointState] {
        &self.states
    }
    pub fn into_states(self) -> Vec<PointState> {
        self.states
    }
    pub fn m(&self) -> f64 {
        self.instance.m
    }

    pub fn bounds(&self) -> Bounds {
        let d = self.instance.d;
        let mut b1 = vec![f64::INFINITY; d];
        let mut b2 = vec![f64::NEG_INFINITY; d];
        for &c in &self.centroids {
            for (j, &v) in self.instance.y(c).iter().enumerate() {
                b1[j] = b1[j].min(v);
                b2[j] = b2[j].max(v);
            }
        }
        let (mut jstar, mut l) = (0, b2[0] - b1[0]);
        for j in 1..d {
            if b2[j] - b1[j] > l {
                jstar = j;
                l = b2[j] - b1[j];
            }
        }
        Bounds { b1, b2, l, jstar }
    }

    /// Contribution of one point to the mass `M` (zero unless it counts).
    pub fn mass_term(&self, s: &PointState) -> f64 {
        match (self.mode(), s.ptype.norm0()) {
            (Mode::TwoD, Some(0)) => s.ell * s.ell,
            (Mode::TwoD, _) => 0.0,
            (Mode::HighDim, Some(t)) => s.potential * s.ell * s.ell * self.instance.type_weight(t),
            (Mode::HighDim, None) => 0.0,
        }
    }

    /// `M(P)`.
    pub fn mass(&self) -> f64 {
        self.instance.m * self.centroids.len() as f64
            + self.states.iter().map(|s| self.mass_term(s)).sum::<f64>()
    }

    /// The part of `A(P)` outside `f(M)`.
    pub fn residual_term(&self, s: &PointState) -> f64 {
        let sq = s.ell * s.ell;
        match (self.mode(), s.ptype.norm0()) {
            (Mode::TwoD, None) => sq,
            (Mode::TwoD, Some(0)) => 0.0,
            (Mode::TwoD, Some(1)) => 2f64.powi(32) * sq,
            (Mode::TwoD, Some(_)) => 2f64.powi(9) * sq,
            (Mode::HighDim, None) => s.potential * sq,
            (Mode::HighDim, Some(_)) => 0.0,
        }
    }

    /// `A(P)`.
    pub fn potential(&self) -> f64 {
        self.instance.f(self.mass())
            + self
                .states
                .iter()
                .map(|s| self.residual_term(s))
                .sum::<f64>()
    }

    pub fn check_valid(&self) -> ValidityReport {
        let inst = &*self.instance;
        let bounds = self.bounds();
        let mut out = Vec::new();
        let mut push = |item, point: Option<usize>, detail: String| {
            out.push(Violation {
                item,
                point,
                detail,
            })
        };
        let active: BTreeSet<usize> = self.centroids.iter().copied().collect();

        let mass = self.mass();
        if !approx_le(mass, 2.0 * inst.k as f64 * inst.m, REL_TOL) {
            push(
                ValidityItem::MassRatio,
                None,
                format!("M/m = {} exceeds 2k = {}", mass / inst.m, 2 * inst.k),
            );
        }

        for (&i, s) in self.points.iter().zip(&self.states) {
            let x = inst.x(i);
            if !active.contains(&s.sigma) {
                push(
                    ValidityItem::SigmaActive,
                    Some(i),
                    format!("sigma {} not active", s.sigma),
                );
                continue;
            }
            let dist = linf(x, inst.y(s.sigma));
            if !approx_le(dist, s.ell, REL_TOL) {
                push(
                    ValidityItem::LengthBound,
                    Some(i),
                    format!("ell {} < dist {}", s.ell, dist),
                );
            }
            match &s.ptype {
                PointType::Irrelevant => {
                    for &c in &self.centroids {
                        let dy = linf(x, inst.y(c));
                        if !approx_le(dy, s.ell, REL_TOL) {
                            push(
                                ValidityItem::IrrelevantReach,
                                Some(i),
                                format!("ell {} < dist {} to centroid {}", s.ell, dy, c),
                            );
                            break;
                        }
                    }
                }
                PointType::Relevant(t) => {
                    for (j, &tj) in t.iter().enumerate() {
                        let gap = match tj {
                            0 => continue,
                            1 => (x[j] - bounds.b1[j]).abs(),
                            2 => (x[j] - bounds.b2[j]).abs(),
                            v => {
                                push(
                                    ValidityItem::BoundaryContact,
                                    Some(i),
                                    format!("type value {v} in dim {j}"),
                                );
                                continue;
                            }
                        };
                        if !approx_le(gap, s.ell, REL_TOL) {
                            push(
                                ValidityItem::BoundaryContact,
                                Some(i),
                                format!(
                                    "dim {j}: gap {gap} to boundary {tj} exceeds ell {}",
                                    s.ell
                                ),
                            );
                        }
                    }
                }
            }
        }

        if self.mode() == Mode::HighDim {
            self.check_hd(&mut out);
        }
        ValidityReport {
            ok: out.is_empty(),
            violations: out,
        }
    }

    fn check_hd(&self, out: &mut Vec<Violation>) {
        let k = self.instance.k as f64;
        let mut groups: BTreeMap<(i32, &[u8]), Vec<usize>> = BTreeMap::new();
        for (idx, (&i, s)) in self.points.iter().zip(&self.states).enumerate() {
            let PointType::Relevant(t) = &s.ptype else {
                continue;
            };
            let norm0 = s.ptype.norm0().unwrap_or(0);
            let mut push = |item, detail: String| {
                out.push(Violation {
                    item,
                    point: Some(i),
                    detail,
                })
            };
            if norm0 > 2 {
                push(
                    ValidityItem::TypeSupport,
                    format!("type has {norm0} nonzero entries"),
                );
            }
            if norm0 == 0 {
                if s.ell != 0.0 && !is_power_of_two(s.ell) {
                    push(
                        ValidityItem::PowerOfTwo,
                        format!("ell {} is not a power of two", s.ell),
                    );
                }
                if s.scale != k {
                    push(ValidityItem::ScaleIsK, format!("scale {} != k", s.scale));
                }
            }
            if (s.color == -1) != (norm0 == 0) {
                push(
                    ValidityItem::ColorIffR0,
                    format!("color {} with {} nonzero type entries", s.color, norm0),
                );
            }
            if s.color >= 0 {
                groups.entry((s.color, t.as_slice())).or_default().push(idx);
            }
        }
        for ((color, _), members) in groups {
            let first = &self.states[members[0]];
            let mut sigmas = BTreeSet::new();
            for &idx in &members {
                let s = &self.states[idx];
                sigmas.insert(s.sigma);
                if !approx_eq(s.scale, first.scale, REL_TOL)
                    || !approx_eq(s.ell, first.ell, REL_TOL)
                {
                    out.push(Violation {
                        item: ValidityItem::GroupConsistency,
                        point: Some(self.points[idx]),
                        detail: format!(
                            "color {color}: (s, ell) = ({}, {}) differs from ({}, {})",
                            s.scale, s.ell, first.scale, first.ell
                        ),
                    });
                }
            }
            if !approx_le(sigmas.len() as f64, first.scale, REL_TOL) {
                out.push(Violation {
                    item: ValidityItem::GroupScale,
                    point: None,
                    detail: format!(
                        "color {color}: {} distinct centroids exceed scale {}",
                        sigmas.len(),
                        first.scale
                    ),
                });
            }
        }
    }

    /// Points whose potential fell below one (general-dimension mode only).
    pub fn potential_floor_violations(&self) -> Vec<usize> {
        if self.mode() != Mode::HighDim {
            return Vec::new();
        }
        self.points
            .iter()
            .zip(&self.states)
            .filter(|(_, s)| s.potential < 1.0 - REL_TOL)
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn dump(&self) -> SubproblemDump {
        SubproblemDump {
            mode: self.mode(),
            k: self.instance.k,
            d: self.instance.d,
            m: self.instance.m,
            points: self.points.clone(),
            centroids: self.centroids.clone(),
            states: self.states.clone(),
            bounds: self.bounds(),
            mass: self.mass(),
            potential: self.potential(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityItem {
    /// `σ` is not an active centroid.
    SigmaActive,
    /// `ℓ ≥ ‖x − σ‖∞`
    LengthBound,
    /// `M/m ≤ 2k`
    MassRatio,
    /// irrelevant points reach every active centroid
    IrrelevantReach,
    /// `t(j) ∈ {1,2}` requires contact with the matching boundary
    BoundaryContact,
    TypeSupport,
    PowerOfTwo,
    ScaleIsK,
    ColorIffR0,
    GroupConsistency,
    GroupScale,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub item: ValidityItem,
    pub point: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// JSON-friendly snapshot of a subproblem.
#[derive(Clone, Debug, Serialize)]
pub struct SubproblemDump {
    pub mode: Mode,
    pub k: usize,
    pub d: usize,
    pub m: f64,
    pub points: Vec<usize>,
    pub centroids: Vec<usize>,
    pub states: Vec<PointState>,
    pub bounds: Bounds,
    #[serde(rename = "M")]
    pub mass: f64,
    #[serde(rename = "A")]
    pub potential: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn instance(
        points: &[[f64; 2]],
        centroids: &[[f64; 2]],
        assignment: Vec<usize>,
    ) -> (Dataset, Clustering) {
        let ds = Dataset::from_rows(points.iter().map(|p| p.to_vec()).collect()).unwrap();
        let cl = Clustering::new(
            centroids
                .iter()
                .map(|c| Point::new(c.to_vec()).unwrap())
                .collect(),
            assignment,
        )
        .unwrap();
        (ds, cl)
    }

    #[test]
    fn worked_example_2d() {
        let (ds, cl) = instance(
            &[[0.0, 0.0], [3.0, 0.0]],
            &[[0.0, 0.0], [4.0, 0.0]],
            vec![0, 1],
        );
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        let ells: Vec<f64> = sub.states().iter().map(|s| s.ell).collect();
        assert_eq!(ells, vec![0.0, 1.0]);
        assert_eq!(sub.m(), 0.5);
        assert_eq!(sub.mass(), 2.0);
        assert_eq!(sub.mass() / sub.m(), 4.0);
        assert!(sub.check_valid().ok);
    }

    #[test]
    fn degenerate_mass_is_one() {
        let (ds, cl) = instance(
            &[[0.0, 0.0], [4.0, 0.0]],
            &[[0.0, 0.0], [4.0, 0.0]],
            vec![0, 1],
        );
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        assert!(sub.states().iter().all(|s| s.ell == 0.0));
        assert_eq!(sub.m(), 1.0);
        let sub = Subproblem::initial_hd(&ds, &cl).unwrap();
        assert_eq!(sub.m(), 1.0);
    }

    #[test]
    fn single_far_point() {
        let (ds, cl) = instance(&[[5.0, -2.0]], &[[0.0, 0.0], [9.0, 9.0]], vec![0]);
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        assert_eq!(sub.states()[0].ell, 5.0);
        assert_eq!(sub.m(), 12.5);
    }

    #[test]
    fn hd_lengths_round_up() {
        let (ds, cl) = instance(
            &[[3.0, 0.0], [1.0, 0.0], [0.0, 0.0]],
            &[[0.0, 0.0], [40.0, 0.0]],
            vec![0, 0, 0],
        );
        let sub = Subproblem::initial_hd(&ds, &cl).unwrap();
        let ells: Vec<f64> = sub.states().iter().map(|s| s.ell).collect();
        assert_eq!(ells, vec![4.0, 1.0, 0.0]);
        assert!((sub.mass() / sub.m() - 4.0).abs() < 1e-12 * 4.0);
        assert!(sub.check_valid().ok);
    }

    #[test]
    fn bounds_examples() {
        let (ds, cl) = instance(&[[0.0, 0.0]], &[[0.0, 0.0], [4.0, 1.0]], vec![0]);
        let b = Subproblem::initial_2d(&ds, &cl).unwrap().bounds();
        assert_eq!(
            (b.b1, b.b2, b.l, b.jstar),
            (vec![0.0, 0.0], vec![4.0, 1.0], 4.0, 0)
        );
        let (ds, cl) = instance(&[[0.0, 0.0]], &[[0.0, 0.0], [1.0, 1.0]], vec![0]);
        let b = Subproblem::initial_2d(&ds, &cl).unwrap().bounds();
        assert_eq!((b.l, b.jstar), (1.0, 0));
        let (ds, cl) = instance(&[[0.0, 0.0]], &[[2.0, 3.0], [2.0, 3.0]], vec![0]);
        assert_eq!(Subproblem::initial_2d(&ds, &cl).unwrap().bounds().l, 0.0);
    }

    #[test]
    fn hd_mass_constant() {
        // k = 2: weight base is 16 (ln 4)² ln 2
        let (ds, cl) = instance(&[[0.0, 0.0]], &[[0.0, 0.0], [1.0, 0.0]], vec![0]);
        let sub = Subproblem::initial_hd(&ds, &cl).unwrap();
        let base = 16.0 * 4f64.ln().powi(2) * 2f64.ln();
        assert!((sub.instance().weight_base() - base).abs() < 1e-12);
        assert!((sub.instance().type_weight(0) - 454.3).abs() < 0.1);
        let states = vec![PointState {
            sigma: 0,
            ell: 1.0,
            ptype: PointType::zero(2),
            color: -1,
            scale: 2.0,
            potential: 1.0,
        }];
        let sub = Subproblem::from_parts(sub.instance().clone(), vec![0], vec![0], states).unwrap();
        assert!((sub.mass() - (1.0 + base * base)).abs() < 1e-9);
    }

    #[test]
    fn potential_formulas() {
        let (ds, cl) = instance(&[[0.0, 0.0]], &[[0.0, 0.0], [1.0, 0.0]], vec![0]);
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        let lnlog = 4f64.log2().ln();
        let one = Subproblem::from_parts(sub.instance().clone(), vec![], vec![0], vec![]).unwrap();
        assert_eq!(one.potential(), 2f64.powi(57) * sub.m() * lnlog);

        let irr = PointState {
            sigma: 0,
            ell: 3.0,
            ptype: PointType::Irrelevant,
            color: -1,
            scale: 2.0,
            potential: 1.0,
        };
        let s = sub.with_states(vec![irr]).unwrap();
        assert_eq!(s.potential(), s.instance().f(s.mass()) + 9.0);

        let sub = Subproblem::initial_hd(&ds, &cl).unwrap();
        let one = Subproblem::from_parts(sub.instance().clone(), vec![], vec![0], vec![]).unwrap();
        assert!((one.potential() - 16.0 * sub.m() * lnlog).abs() <= 1e-12 * one.potential());
    }

    #[test]
    fn validity_catches_short_length() {
        let (ds, cl) = instance(
            &[[0.0, 0.0], [3.0, 0.0]],
            &[[0.0, 0.0], [4.0, 0.0]],
            vec![0, 1],
        );
        let sub = Subproblem::initial_2d(&ds, &cl).unwrap();
        let mut st = sub.states().to_vec();
        st[1].ell = 0.5;
        let r = sub.with_states(st).unwrap().check_valid();
        assert!(!r.ok);
        assert!(r
            .violations
            .iter()
            .any(|v| v.item == ValidityItem::LengthBound));
    }

    #[test]
    fn validity_catches_color_mismatch() {
        let (ds, cl) = instance(
            &[[0.0, 0.0], [3.0, 0.0]],
            &[[0.0, 0.0], [4.0, 0.0]],
            vec![0, 1],
        );
        let sub = Subproblem::initial_hd(&ds, &cl).unwrap();
        let mut st = sub.states().to_vec();
        st[0].ptype = PointType::Relevant(vec![1, 0]);
        let r = sub.with_states(st).unwrap().check_valid();
        assert!(r
            .violations
            .iter()
            .any(|v| v.item == ValidityItem::ColorIffR0));
    }

    #[test]
    fn mode_dimension_checks() {
        let ds = Dataset::from_rows(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let cl = Clustering::new(
            vec![
                Point::new(vec![0.0; 3]).unwrap(),
                Point::new(vec![1.0; 3]).unwrap(),
            ],
            vec![0],
        )
        .unwrap();
        assert!(Subproblem::initial_2d(&ds, &cl).is_err());
        assert!(Subproblem::initial_hd(&ds, &cl).is_ok());
    }
}
