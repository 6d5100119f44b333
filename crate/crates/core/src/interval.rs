//! Finite unions of disjoint intervals on the real line.
//!
//! Endpoints carry open/closed flags. Membership respects them; the measure
//! does not.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Interval<T: Scalar = f64> {
    pub lo: T,
    pub hi: T,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T, lo_closed: bool, hi_closed: bool) -> Self {
        Self {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
    }

    /// `(lo, hi)`
    pub fn open(lo: T, hi: T) -> Self {
        Self::new(lo, hi, false, false)
    }

    /// `[lo, hi]`
    pub fn closed(lo: T, hi: T) -> Self {
        Self::new(lo, hi, true, true)
    }

    /// `[lo, hi)`
    pub fn closed_open(lo: T, hi: T) -> Self {
        Self::new(lo, hi, true, false)
    }

    /// `(lo, hi]`
    pub fn open_closed(lo: T, hi: T) -> Self {
        Self::new(lo, hi, false, true)
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn length(&self) -> T {
        if self.is_empty() {
            T::zero()
        } else {
            self.hi - self.lo
        }
    }

    pub fn contains(&self, v: T) -> bool {
        let above = if self.lo_closed {
            v >= self.lo
        } else {
            v > self.lo
        };
        let below = if self.hi_closed {
            v <= self.hi
        } else {
            v < self.hi
        };
        above && below
    }

    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) / T::lit(2.0)
    }

    /// Intersection with another interval; may be empty.
    pub fn intersect(&self, other: &Self) -> Self {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Self::new(lo, hi, lo_closed, hi_closed)
    }
}

/// Sorted, pairwise-disjoint, non-empty intervals. Two intervals that share an
/// endpoint are merged only when that endpoint belongs to one of them.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct IntervalSet<T: Scalar = f64> {
    intervals: Vec<Interval<T>>,
}

impl<T: Scalar> Default for IntervalSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> IntervalSet<T> {
    pub fn new() -> Self {
        Self {
            intervals: Vec::new(),
        }
    }

    pub fn from_intervals(items: impl IntoIterator<Item = Interval<T>>) -> Self {
        let mut intervals: Vec<_> = items.into_iter().filter(|iv| !iv.is_empty()).collect();
        intervals.sort_by(|a, b| {
            a.lo.partial_cmp(&b.lo)
                .expect("finite endpoints")
                .then(b.lo_closed.cmp(&a.lo_closed))
        });
        let mut out: Vec<Interval<T>> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match out.last_mut() {
                Some(cur)
                    if iv.lo < cur.hi || (iv.lo == cur.hi && (cur.hi_closed || iv.lo_closed)) =>
                {
                    if iv.lo == cur.lo {
                        cur.lo_closed |= iv.lo_closed;
                    }
                    if iv.hi > cur.hi {
                        cur.hi = iv.hi;
                        cur.hi_closed = iv.hi_closed;
                    } else if iv.hi == cur.hi {
                        cur.hi_closed |= iv.hi_closed;
                    }
                }
                _ => out.push(iv),
            }
        }
        Self { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn insert(&mut self, iv: Interval<T>) {
        if iv.is_empty() {
            return;
        }
        let mut all = std::mem::take(&mut self.intervals);
        all.push(iv);
        *self = Self::from_intervals(all);
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_intervals(self.intervals.iter().chain(&other.intervals).copied())
    }

    /// Total Lebesgue measure.
    pub fn measure(&self) -> T {
        self.intervals.iter().map(Interval::length).sum()
    }

    pub fn contains(&self, v: T) -> bool {
        // intervals are sorted, so a binary search on `hi` finds the only candidate
        let idx = self.intervals.partition_point(|iv| iv.hi < v);
        self.intervals[idx..]
            .iter()
            .take(2)
            .any(|iv| iv.contains(v))
    }

    /// Intersection with a single interval.
    pub fn clip(&self, window: &Interval<T>) -> Self {
        Self::from_intervals(self.intervals.iter().map(|iv| iv.intersect(window)))
    }

    /// `(a, b) ∖ self`.
    pub fn complement_within(&self, a: T, b: T) -> Result<Self> {
        if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidBracket {
                lo: a.as_f64(),
                hi: b.as_f64(),
            });
        }
        let clipped = self.clip(&Interval::open(a, b));
        let mut out = Vec::with_capacity(clipped.len() + 1);
        let (mut cursor, mut cursor_closed) = (a, false);
        for iv in clipped.intervals() {
            out.push(Interval::new(cursor, iv.lo, cursor_closed, !iv.lo_closed));
            cursor = iv.hi;
            cursor_closed = !iv.hi_closed;
        }
        out.push(Interval::new(cursor, b, cursor_closed, false));
        Ok(Self::from_intervals(out))
    }

    /// One interior value per component (its midpoint).
    pub fn representatives(&self) -> Vec<T> {
        self.intervals.iter().map(Interval::midpoint).collect()
    }
}

impl<T: Scalar> FromIterator<Interval<T>> for IntervalSet<T> {
    fn from_iter<I: IntoIterator<Item = Interval<T>>>(iter: I) -> Self {
        Self::from_intervals(iter)
    }
}
