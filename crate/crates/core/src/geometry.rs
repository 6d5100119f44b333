//! Points, datasets, clusterings and the two distances the algorithms use.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point in `R^d`, `d ≥ 1`, with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "T: Scalar")]
pub struct Point<T: Scalar = f64> {
    coords: Vec<T>,
}

impl<T: Scalar> Point<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("point has no coordinates"));
        }
        if let Some(dim) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { point: 0, dim });
        }
        Ok(Self { coords })
    }

    pub fn from_f64(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&c| T::lit(c)).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    #[inline]
    pub fn get(&self, j: usize) -> T {
        self.coords[j]
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }
}

impl<T: Scalar> std::ops::Index<usize> for Point<T> {
    type Output = T;

    fn index(&self, j: usize) -> &T {
        &self.coords[j]
    }
}

#[inline]
pub(crate) fn linf<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

#[inline]
pub(crate) fn l2_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

fn check_dims<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `max_j |a(j) − b(j)|`.
pub fn linf_dist<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Result<T> {
    check_dims(a, b)?;
    Ok(linf(a.coords(), b.coords()))
}

/// Squared Euclidean distance.
pub fn l2_dist_sq<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Result<T> {
    check_dims(a, b)?;
    Ok(l2_sq(a.coords(), b.coords()))
}

/// A non-empty collection of points sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Scalar = f64> {
    points: Vec<Point<T>>,
    dim: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Vec<Point<T>>) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("dataset"))?.dim();
        for (i, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            if let Some(j) = p.coords().iter().position(|c| !c.is_finite()) {
                return Err(Error::NonFinite { point: i, dim: j });
            }
        }
        Ok(Self { points, dim })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                Point::new(r).map_err(|e| match e {
                    Error::NonFinite { dim, .. } => Error::NonFinite { point: i, dim },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> &Point<T> {
        &self.points[i]
    }

    /// Reads one point per line, `d` comma-separated decimals. Blank lines are skipped.
    pub fn read_csv<R: BufRead>(reader: R, skip_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(skip_header)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let record = record?;
            let line = record
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(idx + 1);
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
                        line,
                        message: format!("{f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            if let Some(first) = rows.first().map(Vec::len) {
                if row.len() != first {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected {first} fields, found {}", row.len()),
                    });
                }
            }
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for p in &self.points {
            w.write_record(p.coords().iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `k` centroids plus the map from point index to centroid index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Clustering<T: Scalar = f64> {
    centroids: Vec<Point<T>>,
    assignment: Vec<usize>,
}

impl<T: Scalar> Clustering<T> {
    pub fn new(centroids: Vec<Point<T>>, assignment: Vec<usize>) -> Result<Self> {
        let c = Self {
            centroids,
            assignment,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let dim = self
            .centroids
            .first()
            .ok_or(Error::Empty("clustering has no centroids"))?
            .dim();
        for (i, y) in self.centroids.iter().enumerate() {
            if y.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: y.dim(),
                });
            }
            if let Some(j) = y.coords().iter().position(|c| !c.is_finite()) {
                return Err(Error::NonFinite { point: i, dim: j });
            }
        }
        let k = self.centroids.len();
        if let Some(&bad) = self.assignment.iter().find(|&&a| a >= k) {
            return Err(Error::IndexOutOfRange { index: bad, len: k });
        }
        Ok(())
    }

    /// Checks that this clustering can be applied to `dataset`.
    pub fn check_against(&self, dataset: &Dataset<T>) -> Result<()> {
        if self.dim() != dataset.dim() {
            return Err(Error::DimensionMismatch {
                expected: dataset.dim(),
                found: self.dim(),
            });
        }
        if self.assignment.len() != dataset.len() {
            return Err(Error::IndexOutOfRange {
                index: self.assignment.len(),
                len: dataset.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.centroids[0].dim()
    }

    #[inline]
    pub fn centroids(&self) -> &[Point<T>] {
        &self.centroids
    }

    #[inline]
    pub fn centroid(&self, i: usize) -> &Point<T> {
        &self.centroids[i]
    }

    #[inline]
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `Σ_i ‖x_i − y_{ξ(i)}‖₂²`.
pub fn cost_l2sq<T: Scalar>(dataset: &Dataset<T>, clustering: &Clustering<T>) -> Result<T> {
    clustering.check_against(dataset)?;
    Ok(dataset
        .points()
        .iter()
        .zip(clustering.assignment())
        .map(|(x, &a)| l2_sq(x.coords(), clustering.centroid(a).coords()))
        .sum())
}

/// `Σ_i ‖x_i − y_{ξ(i)}‖∞²`, the quantity the post-processing analysis tracks.
pub fn cost_linf_sq<T: Scalar>(dataset: &Dataset<T>, clustering: &Clustering<T>) -> Result<T> {
    clustering.check_against(dataset)?;
    Ok(dataset
        .points()
        .iter()
        .zip(clustering.assignment())
        .map(|(x, &a)| {
            let d = linf(x.coords(), clustering.centroid(a).coords());
            d * d
        })
        .sum())
}

/// Index of the ℓ₂-nearest centroid; ties go to the lowest index.
pub(crate) fn nearest_l2<T: Scalar>(x: &[T], centroids: &[Point<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (i, y) in centroids.iter().enumerate() {
        let d = l2_sq(x, y.coords());
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Sum of squared deviations from the mean of `points`.
#[cfg(test)]
pub(crate) fn variance_sum<'a, T: Scalar>(
    points: impl Iterator<Item = &'a [T]> + Clone,
    dim: usize,
) -> (T, Vec<T>) {
    let mut mean = vec![T::zero(); dim];
    let mut count = 0usize;
    for p in points.clone() {
        for (m, &c) in mean.iter_mut().zip(p) {
            *m = *m + c;
        }
        count += 1;
    }
    if count == 0 {
        return (T::zero(), mean);
    }
    let n = T::from_count(count);
    mean.iter_mut().for_each(|m| *m = *m / n);
    let cost = points.map(|p| l2_sq(p, &mean)).sum();
    (cost, mean)
}
