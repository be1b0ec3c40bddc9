use serde::{Deserialize, Serialize};

/// A closed interval on the video timeline, in seconds.
///
/// Construction does not enforce `end > start`; use [`TimeSegment::is_valid`]
/// and decide at the call site what to do with degenerate spans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct TimeSegment {
    pub start: f64,
    pub end: f64,
}

impl TimeSegment {
    pub const fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    /// Returns the segment only if it is well formed.
    pub fn checked(start: f64, end: f64) -> Option<Self> {
        let seg = Self { start, end };
        seg.is_valid().then_some(seg)
    }

    pub fn is_valid(&self) -> bool {
        self.start.is_finite() && self.end.is_finite() && self.start >= 0.0 && self.end > self.start
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self::new(self.start + delta, self.end + delta)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.start * k, self.end * k)
    }

    pub fn contains(&self, other: &TimeSegment) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<[f64; 2]> for TimeSegment {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<TimeSegment> for [f64; 2] {
    fn from(s: TimeSegment) -> Self {
        [s.start, s.end]
    }
}

impl std::fmt::Display for TimeSegment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}
