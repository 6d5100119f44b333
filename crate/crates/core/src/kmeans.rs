//! k-means++ seeding followed by Lloyd iterations. Produces the reference
//! clustering that the explainable post-processing starts from.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cost_l2sq, l2_sq, nearest_l2, Clustering, Dataset, Point};
use crate::scalar::{approx_le, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedConfig {
    pub rng_seed: u64,
    pub max_lloyd_iters: usize,
    pub restarts: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            max_lloyd_iters: 100,
            restarts: 4,
        }
    }
}

/// One restart's outcome: the clustering and the cost after seeding and after
/// every Lloyd iteration.
#[derive(Clone, Debug)]
pub struct LloydRun<T: Scalar> {
    pub clustering: Clustering<T>,
    pub cost_history: Vec<T>,
}

/// Best of `config.restarts` k-means++/Lloyd runs.
pub fn kmeanspp_lloyd<T: Scalar>(
    dataset: &Dataset<T>,
    k: usize,
    config: &SeedConfig,
) -> Result<Clustering<T>> {
    Ok(kmeanspp_lloyd_runs(dataset, k, config)?
        .into_iter()
        .map(|r| r.clustering)
        .next()
        .expect("at least one restart"))
}

/// All restarts, best first (ties keep restart order).
pub fn kmeanspp_lloyd_runs<T: Scalar>(
    dataset: &Dataset<T>,
    k: usize,
    config: &SeedConfig,
) -> Result<Vec<LloydRun<T>>> {
    if k == 0 {
        return Err(Error::InvalidParameters("k must be at least 1".into()));
    }
    if config.restarts == 0 {
        return Err(Error::InvalidParameters(
            "restarts must be at least 1".into(),
        ));
    }
    let mut runs = (0..config.restarts)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            rng.set_stream(r as u64);
            single_run(dataset, k, config.max_lloyd_iters, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let final_cost = |r: &LloydRun<T>| *r.cost_history.last().expect("non-empty history");
    // stable sort keeps the lowest restart index among equal costs
    runs.sort_by(|a, b| {
        final_cost(a)
            .partial_cmp(&final_cost(b))
            .expect("finite costs")
    });
    Ok(runs)
}

fn seed_plus_plus<T: Scalar>(dataset: &Dataset<T>, k: usize, rng: &mut impl Rng) -> Vec<Point<T>> {
    let n = dataset.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(dataset.point(rng.random_range(0..n)).clone());
    let mut d2: Vec<f64> = dataset
        .points()
        .iter()
        .map(|x| l2_sq(x.coords(), centroids[0].coords()).as_f64())
        .collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.random_range(0..n),
        };
        let c = dataset.point(next).clone();
        for (d, x) in d2.iter_mut().zip(dataset.points()) {
            *d = d.min(l2_sq(x.coords(), c.coords()).as_f64());
        }
        centroids.push(c);
    }
    centroids
}

fn assign<T: Scalar>(dataset: &Dataset<T>, centroids: &[Point<T>]) -> (Vec<usize>, Vec<T>) {
    dataset
        .points()
        .iter()
        .map(|x| nearest_l2(x.coords(), centroids))
        .unzip()
}

fn single_run<T: Scalar>(
    dataset: &Dataset<T>,
    k: usize,
    max_iters: usize,
    rng: &mut impl Rng,
) -> Result<LloydRun<T>> {
    let dim = dataset.dim();
    let mut centroids = seed_plus_plus(dataset, k, rng);
    let (mut assignment, dists) = assign(dataset, &centroids);
    let mut cost_history = vec![dists.iter().copied().sum::<T>()];
    // centroid rounding alone can lift a zero cost to about (ε·|x|)² per point
    let slack = dataset
        .points()
        .iter()
        .flat_map(|x| x.coords().iter().map(|&c| c * c))
        .sum::<T>()
        * (T::epsilon() * T::lit(8.0)).powi(2);

    for _ in 0..max_iters {
        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in dataset.points().iter().zip(&assignment) {
            counts[a] += 1;
            for (s, &c) in sums[a].iter_mut().zip(x.coords()) {
                *s = *s + c;
            }
        }
        let mut empty = Vec::new();
        for (c, (sum, &count)) in sums.into_iter().zip(&counts).enumerate() {
            if count == 0 {
                empty.push(c);
            } else {
                let n = T::from_count(count);
                centroids[c] = Point::new(sum.into_iter().map(|s| s / n).collect())?;
            }
        }
        if !empty.is_empty() {
            // reseed each empty cluster at the point farthest from its centroid
            let mut far: Vec<(usize, T)> = dataset
                .points()
                .iter()
                .zip(&assignment)
                .map(|(x, &a)| l2_sq(x.coords(), centroids[a].coords()))
                .enumerate()
                .collect();
            far.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
            for (c, (idx, _)) in empty.into_iter().zip(far) {
                centroids[c] = dataset.point(idx).clone();
            }
        }
        let (next, dists) = assign(dataset, &centroids);
        let cost: T = dists.iter().copied().sum();
        let prev = *cost_history.last().expect("non-empty");
        if !approx_le(cost, prev + slack, 1e-9) {
            return Err(Error::Invariant(format!(
                "Lloyd iteration increased cost from {prev} to {cost}"
            )));
        }
        cost_history.push(cost);
        let converged = next == assignment;
        assignment = next;
        if converged {
            break;
        }
    }
    let clustering = Clustering::new(centroids, assignment)?;
    debug_assert!(approx_le(
        cost_l2sq(dataset, &clustering)?,
        *cost_history.last().unwrap(),
        1e-9
    ));
    Ok(LloydRun {
        clustering,
        cost_history,
    })
}
