//! Observation windows: closed intervals and finite disjoint unions of them.

use serde::{Deserialize, Serialize};

use crate::error::{AalenError, Result};

/// A closed interval `[lo, hi]` with `lo < hi` (or `lo == hi` for a point,
/// which only arises transiently in constructions and carries zero length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(AalenError::invalid(format!(
                "interval endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(AalenError::invalid(format!(
                "interval endpoints out of order: [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    /// Smallest interval containing both `self` and `other`.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Intersection, if non-degenerate.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo < hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }
}

/// A finite union of disjoint intervals, kept sorted; the support of the
/// mean exposure function and the region over which intensities are
/// compared.  Most models use a single window `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct Omega {
    intervals: Vec<Interval>,
}

impl Omega {
    /// Build from intervals which must be pairwise disjoint with positive
    /// length; they are sorted internally.
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(AalenError::invalid("observation window must be non-empty"));
        }
        for iv in &intervals {
            if iv.length() <= 0.0 {
                return Err(AalenError::invalid(format!(
                    "window component [{}, {}] has non-positive length",
                    iv.lo, iv.hi
                )));
            }
        }
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for pair in intervals.windows(2) {
            if pair[1].lo < pair[0].hi {
                return Err(AalenError::invalid(format!(
                    "window components overlap: [{}, {}] and [{}, {}]",
                    pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi
                )));
            }
        }
        Ok(Omega { intervals })
    }

    /// The single-interval window `[lo, hi]`.
    pub fn unit(lo: f64, hi: f64) -> Result<Self> {
        Omega::new(vec![Interval::new(lo, hi)?])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Total Lebesgue measure.
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(Interval::length).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(t))
    }

    /// Smallest interval containing the whole union.
    pub fn hull(&self) -> Interval {
        Interval {
            lo: self.intervals.first().unwrap().lo,
            hi: self.intervals.last().unwrap().hi,
        }
    }

    /// Complement of the union within `[lo, hi]`, as a list of intervals
    /// (possibly empty).
    pub fn complement_within(&self, lo: f64, hi: f64) -> Vec<Interval> {
        let mut out = Vec::new();
        let mut cursor = lo;
        for iv in &self.intervals {
            if iv.lo > cursor && iv.lo.min(hi) > cursor {
                out.push(Interval {
                    lo: cursor,
                    hi: iv.lo.min(hi),
                });
            }
            cursor = cursor.max(iv.hi);
            if cursor >= hi {
                break;
            }
        }
        if cursor < hi {
            out.push(Interval { lo: cursor, hi });
        }
        out
    }
}

impl TryFrom<Vec<Interval>> for Omega {
    type Error = AalenError;
    fn try_from(v: Vec<Interval>) -> Result<Self> {
        Omega::new(v)
    }
}

impl From<Omega> for Vec<Interval> {
    fn from(o: Omega) -> Vec<Interval> {
        o.intervals
    }
}
