//! Hard instances: grid centroids whose ±2/3 neighbours no threshold tree can
//! keep together cheaply, padded with far-away singleton clusters.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Clustering, Dataset, Point};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub b: u32,
    pub p: u32,
}

impl GridSpec {
    pub fn new(b: u32, p: u32) -> Result<Self> {
        if b < 3 || p == 0 {
            return Err(Error::InvalidParameters(format!(
                "grid needs b >= 3 and p >= 1, got b = {b}, p = {p}"
            )));
        }
        if (b as u64).checked_pow(p).is_none_or(|s| s > 1 << 24) {
            return Err(Error::LimitExceeded(format!("grid {b}^{p} is too large")));
        }
        Ok(Self { b, p })
    }

    /// `b^p`.
    pub fn size(&self) -> usize {
        (self.b as usize).pow(self.p)
    }
}

/// Outcome of checking a grid against its two required properties.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridCertificate {
    /// Every coordinate column is a permutation of `0..b^p`.
    pub permutation_columns: bool,
    pub min_dist: f64,
    pub required_dist: f64,
    /// Whether all pairs were checked (otherwise a deterministic sample).
    pub exhaustive: bool,
    pub pairs_checked: u64,
}

impl GridCertificate {
    pub fn ok(&self) -> bool {
        self.permutation_columns && self.min_dist >= self.required_dist
    }
}

const EXHAUSTIVE_LIMIT: usize = 4096;
const SAMPLED_PAIRS: u64 = 200_000;
const FALLBACK_LIMIT: usize = 512;

/// Checks both grid properties: columns are permutations of `0..b^p`, and any
/// two points are at ℓ₂ distance at least `b^{p-1}/2`.
pub fn certify_grid(spec: GridSpec, points: &[Vec<u64>]) -> GridCertificate {
    let size = spec.size();
    let p = spec.p as usize;
    let permutation_columns = points.len() == size
        && points.iter().all(|q| q.len() == p)
        && (0..p).all(|j| {
            let mut col: Vec<u64> = points.iter().map(|q| q[j]).collect();
            col.sort_unstable();
            col.iter().enumerate().all(|(i, &v)| v == i as u64)
        });
    let dist_sq = |a: &[u64], b: &[u64]| -> u128 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x.abs_diff(y) as u128).pow(2))
            .sum()
    };
    let mut min_sq = u128::MAX;
    let mut pairs = 0u64;
    let exhaustive = points.len() <= EXHAUSTIVE_LIMIT;
    if exhaustive {
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                min_sq = min_sq.min(dist_sq(&points[a], &points[b]));
                pairs += 1;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
        while pairs < SAMPLED_PAIRS {
            let a = rng.random_range(0..points.len());
            let b = rng.random_range(0..points.len());
            if a != b {
                min_sq = min_sq.min(dist_sq(&points[a], &points[b]));
                pairs += 1;
            }
        }
    }
    GridCertificate {
        permutation_columns,
        min_dist: if pairs == 0 {
            f64::INFINITY
        } else {
            (min_sq as f64).sqrt()
        },
        required_dist: (spec.b as f64).powi(spec.p as i32 - 1) / 2.0,
        exhaustive,
        pairs_checked: pairs,
    }
}

fn digits(mut i: u64, b: u64, p: usize) -> Vec<u64> {
    (0..p)
        .map(|_| {
            let d = i % b;
            i /= b;
            d
        })
        .collect()
}

/// Integer whose base-`b` digit at position `q` is `digs[perm[q]]`.
fn from_digits(digs: &[u64], perm: &[usize], b: u64) -> u64 {
    perm.iter().rev().fold(0, |acc, &q| acc * b + digs[q])
}

fn grid_from_perms(spec: GridSpec, perms: &[Vec<usize>]) -> Vec<Vec<u64>> {
    let (b, p) = (spec.b as u64, spec.p as usize);
    (0..spec.size() as u64)
        .map(|i| {
            let digs = digits(i, b, p);
            perms
                .iter()
                .map(|perm| from_digits(&digs, perm, b))
                .collect()
        })
        .collect()
}

/// Digit rotation: coordinate `j` of point `i` reads the base-`b` digits of
/// `i` cyclically shifted by `j` positions.
pub fn digit_rotation_grid(spec: GridSpec) -> Vec<Vec<u64>> {
    let p = spec.p as usize;
    let perms: Vec<Vec<usize>> = (0..p)
        .map(|j| (0..p).map(|q| (q + j) % p).collect())
        .collect();
    grid_from_perms(spec, &perms)
}

fn all_permutations(p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..p).collect();
    fn rec(i: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for s in i..cur.len() {
            cur.swap(i, s);
            rec(i + 1, cur, out);
            cur.swap(i, s);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

/// Searches digit-position permutations per coordinate (the first coordinate
/// fixed to the identity) for a grid that certifies.
fn search_grid(spec: GridSpec) -> Option<Vec<Vec<u64>>> {
    let p = spec.p as usize;
    let perms = all_permutations(p);
    let mut choice = vec![0usize; p];
    loop {
        let chosen: Vec<Vec<usize>> = std::iter::once((0..p).collect())
            .chain(choice[1..].iter().map(|&c| perms[c].clone()))
            .collect();
        let grid = grid_from_perms(spec, &chosen);
        if certify_grid(spec, &grid).ok() {
            return Some(grid);
        }
        let mut pos = 1;
        while pos < p {
            choice[pos] += 1;
            if choice[pos] < perms.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
        if pos >= p {
            return None;
        }
    }
}

/// `b^p` points in `p` dimensions with both grid properties certified.
pub fn grid_points(spec: GridSpec) -> Result<(Vec<Vec<u64>>, GridCertificate)> {
    let grid = digit_rotation_grid(spec);
    let cert = certify_grid(spec, &grid);
    if cert.ok() {
        return Ok((grid, cert));
    }
    if spec.size() <= FALLBACK_LIMIT {
        if let Some(grid) = search_grid(spec) {
            log::info!(
                "digit rotation failed for b = {}, p = {}; using searched grid",
                spec.b,
                spec.p
            );
            let cert = certify_grid(spec, &grid);
            return Ok((grid, cert));
        }
    }
    Err(Error::Invariant(format!(
        "no certified grid for b = {}, p = {} (min distance {} < {})",
        spec.b, spec.p, cert.min_dist, cert.required_dist
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LbParams {
    pub k: usize,
    pub d: usize,
    pub p: u32,
    pub b: u32,
}

#[derive(Clone, Debug)]
pub struct LbInstance<T: Scalar = f64> {
    pub dataset: Dataset<T>,
    pub reference: Clustering<T>,
    pub params: LbParams,
    /// `(8/9)·p·b^p`.
    pub reference_cost: f64,
    pub certificate: GridCertificate,
}

impl<T: Scalar> LbInstance<T> {
    /// Group of each point: the index of the centroid it was built around.
    pub fn groups(&self) -> &[usize] {
        self.reference.assignment()
    }
}

/// Grid centroids padded to `d` dimensions, each surrounded by the `2p` points
/// at `±2/3` along the grid axes; the remaining `k − b^p` centroids sit alone
/// on the first axis at `b^p·(10 + 10i)`.
pub fn lb_instance<T: Scalar>(k: usize, d: usize, p: u32, b: u32) -> Result<LbInstance<T>> {
    let spec = GridSpec::new(b, p)?;
    let size = spec.size();
    if p as usize > d || size > k {
        return Err(Error::InvalidParameters(format!(
            "need p <= d and b^p <= k; got k = {k}, d = {d}, p = {p}, b = {b}"
        )));
    }
    let (grid, certificate) = grid_points(spec)?;
    let offset = 2.0 / 3.0;
    let mut centroids = Vec::with_capacity(k);
    let mut rows = Vec::new();
    let mut assignment = Vec::new();
    for (c, g) in grid.iter().enumerate() {
        let mut y = vec![0.0; d];
        for (yj, &gj) in y.iter_mut().zip(g) {
            *yj = gj as f64;
        }
        for j in 0..p as usize {
            for sign in [1.0, -1.0] {
                let mut x = y.clone();
                x[j] += sign * offset;
                rows.push(x);
                assignment.push(c);
            }
        }
        centroids.push(y);
    }
    for i in 0..k - size {
        let mut y = vec![0.0; d];
        y[0] = size as f64 * (10.0 + 10.0 * i as f64);
        rows.push(y.clone());
        assignment.push(centroids.len());
        centroids.push(y);
    }
    let to_t = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
    let dataset = Dataset::from_rows(rows.into_iter().map(to_t).collect())?;
    let reference = Clustering::new(
        centroids
            .into_iter()
            .map(|c| Point::new(to_t(c)))
            .collect::<Result<_>>()?,
        assignment,
    )?;
    Ok(LbInstance {
        dataset,
        reference,
        params: LbParams { k, d, p, b },
        reference_cost: 8.0 / 9.0 * p as f64 * size as f64,
        certificate,
    })
}

fn pow_sat(base: u64, exp: u32) -> u64 {
    base.checked_pow(exp).unwrap_or(u64::MAX)
}

/// Largest `b` with `b^p ≤ k`.
fn int_root(k: u64, p: u32) -> u64 {
    let mut b = (k as f64).powf(1.0 / p as f64).round() as u64;
    while b > 0 && pow_sat(b, p) > k {
        b -= 1;
    }
    while pow_sat(b + 1, p) <= k {
        b += 1;
    }
    b
}

/// Largest `p` with `b^p ≤ k`.
fn int_log(k: u64, b: u64) -> u32 {
    let mut p = 0;
    while pow_sat(b, p + 1) <= k {
        p += 1;
    }
    p
}

/// Picks `(p, b)` for given `k` and `d` by comparing `r = k^{1/d}` against 3,
/// `3d` and `(ln k)^{2/3}/ln ln k`. Comparisons against integers are done in
/// exact integer arithmetic.
pub fn lb_parameters(k: usize, d: usize) -> Result<(u32, u32)> {
    if k < 3 || d < 2 {
        return Err(Error::InvalidParameters(format!(
            "need k >= 3 and d >= 2, got k = {k}, d = {d}"
        )));
    }
    let kk = k as u64;
    let dd = u32::try_from(d).unwrap_or(u32::MAX);
    // r < 3  ⟺  k < 3^d
    if kk < pow_sat(3, dd) {
        return Ok((int_log(kk, 3), 3));
    }
    // r ≥ 3d  ⟺  k ≥ (3d)^d
    if kk >= pow_sat(3 * d as u64, dd) {
        return Ok((dd, int_root(kk, dd) as u32));
    }
    let lnk = (k as f64).ln();
    let threshold = lnk.powf(2.0 / 3.0) / lnk.ln();
    let r = (k as f64).powf(1.0 / d as f64);
    if r >= threshold {
        // largest p with k ≥ (3p)^p; p = 1 always qualifies since k ≥ 3
        let mut p = 1u32;
        while kk >= pow_sat(3 * (p as u64 + 1), p + 1) {
            p += 1;
        }
        return Ok((p, int_root(kk, p) as u32));
    }
    // smallest b with b^d ≥ k
    let mut b = int_root(kk, dd);
    if pow_sat(b, dd) < kk {
        b += 1;
    }
    Ok((int_log(kk, b), b as u32))
}

/// Whether some cluster of `assignment` contains points from two different
/// groups.
pub fn merges_groups(assignment: &[usize], groups: &[usize]) -> bool {
    let mut first: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    assignment
        .iter()
        .zip(groups)
        .any(|(&c, &g)| *first.entry(c).or_insert(g) != g)
}

/// Number of distinct groups per cluster, for reporting.
pub fn groups_per_cluster(assignment: &[usize], groups: &[usize]) -> Vec<usize> {
    let k = assignment.iter().max().map_or(0, |&m| m + 1);
    let mut sets = vec![HashSet::new(); k];
    for (&c, &g) in assignment.iter().zip(groups) {
        sets[c].insert(g);
    }
    sets.iter().map(HashSet::len).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cost_l2sq;

    #[test]
    fn one_dimensional_grid() {
        let (g, cert) = grid_points(GridSpec::new(3, 1).unwrap()).unwrap();
        assert_eq!(g, vec![vec![0], vec![1], vec![2]]);
        assert_eq!((cert.min_dist, cert.required_dist), (1.0, 0.5));
    }

    #[test]
    fn nine_point_grid() {
        let spec = GridSpec::new(3, 2).unwrap();
        let (g, cert) = grid_points(spec).unwrap();
        assert_eq!(g.len(), 9);
        assert!(cert.ok() && cert.exhaustive && cert.permutation_columns);
        assert_eq!(cert.pairs_checked, 36);
        assert!(cert.min_dist >= 1.5);
    }

    #[test]
    fn grids_certify_for_small_parameters() {
        for (b, p) in [(3, 3), (4, 2), (5, 2), (3, 4), (4, 3), (7, 2), (3, 5)] {
            let spec = GridSpec::new(b, p).unwrap();
            let (g, cert) = grid_points(spec).unwrap();
            assert!(cert.ok(), "b={b} p={p}: {cert:?}");
            assert_eq!(g.len(), spec.size());
        }
    }

    #[test]
    fn certificate_rejects_bad_grids() {
        let spec = GridSpec::new(3, 2).unwrap();
        // identity on both axes: all points on the diagonal are fine, but
        // columns repeated across two points break the permutation property
        let mut g = digit_rotation_grid(spec);
        g[1] = g[0].clone();
        let cert = certify_grid(spec, &g);
        assert!(!cert.permutation_columns && !cert.ok());
        // points crowded along the diagonal violate the distance bound
        let diag: Vec<Vec<u64>> = (0..9).map(|i| vec![i, i]).collect();
        let cert = certify_grid(spec, &diag);
        assert!(cert.permutation_columns);
        assert!(cert.min_dist < cert.required_dist);
    }

    #[test]
    fn grid_spec_rejects_small_base() {
        assert!(GridSpec::new(2, 3).is_err());
        assert!(GridSpec::new(3, 0).is_err());
    }

    #[test]
    fn instance_k9() {
        let lb = lb_instance::<f64>(9, 2, 2, 3).unwrap();
        assert_eq!(lb.dataset.len(), 36);
        assert_eq!(lb.reference.k(), 9);
        assert_eq!(lb.reference_cost, 16.0);
        let cost = cost_l2sq(&lb.dataset, &lb.reference).unwrap();
        assert!((cost - 16.0).abs() <= 16.0 * 1e-12);
    }

    #[test]
    fn instance_with_far_singletons() {
        let lb = lb_instance::<f64>(10, 2, 2, 3).unwrap();
        assert_eq!(lb.dataset.len(), 37);
        assert_eq!(lb.dataset.point(36).coords(), &[90.0, 0.0]);
        let cost = cost_l2sq(&lb.dataset, &lb.reference).unwrap();
        assert!((cost - 16.0).abs() <= 1e-12 * 16.0);
        let lb = lb_instance::<f64>(12, 3, 2, 3).unwrap();
        assert_eq!(lb.dataset.point(37).coords(), &[180.0, 0.0, 0.0]);
    }

    #[test]
    fn instance_f32() {
        let lb = lb_instance::<f32>(9, 2, 2, 3).unwrap();
        let cost = cost_l2sq(&lb.dataset, &lb.reference).unwrap() as f64;
        assert!((cost - 16.0).abs() < 1e-4);
    }

    #[test]
    fn instance_preconditions() {
        assert!(lb_instance::<f64>(8, 2, 2, 3).is_err());
        assert!(lb_instance::<f64>(27, 2, 3, 3).is_err());
        assert!(lb_instance::<f64>(9, 2, 2, 2).is_err());
    }

    #[test]
    fn parameter_cases() {
        assert_eq!(lb_parameters(4096, 3).unwrap(), (3, 16));
        assert_eq!(lb_parameters(16, 4).unwrap(), (2, 3));
        assert_eq!(lb_parameters(100, 50).unwrap(), (4, 3));
        // r = 3 clears the middle threshold, and only p = 1 has 3p ≤ 9^{1/p}
        assert_eq!(lb_parameters(9, 2).unwrap(), (1, 9));
        assert!(lb_parameters(2, 2).is_err());
    }

    #[test]
    fn parameters_meet_preconditions() {
        for k in 3..400 {
            for d in 2..8 {
                let (p, b) = lb_parameters(k, d).unwrap();
                assert!(
                    p as usize <= d && b >= 3 && p >= 1,
                    "k={k} d={d}: p={p} b={b}"
                );
                assert!((b as usize).pow(p) <= k, "k={k} d={d}: p={p} b={b}");
            }
        }
    }

    #[test]
    fn group_merging() {
        assert!(!merges_groups(&[0, 0, 1], &[5, 5, 6]));
        assert!(merges_groups(&[0, 0, 0], &[5, 5, 6]));
        assert_eq!(groups_per_cluster(&[0, 1, 0], &[1, 2, 3]), vec![2, 1]);
    }
}
