use serde::Serialize;

use super::SessionError;
use crate::geometry::Viewport;

pub const TRACE_HEADER: &str = "t_ms,azimuth_deg,elevation_deg";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSample {
    pub t_ms: u64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl TraceSample {
    pub fn viewport(&self) -> Viewport {
        Viewport::new(self.azimuth, self.elevation)
    }
}

/// Viewport orientation over session time. Starts at 0, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewportTrace {
    samples: Vec<TraceSample>,
}

impl ViewportTrace {
    pub fn new(samples: Vec<TraceSample>) -> Result<Self, SessionError> {
        let bad = |i: usize, reason: &str| SessionError::BadTrace { line: i + 1, reason: reason.to_string() };
        if samples.is_empty() {
            return Err(bad(0, "trace is empty"));
        }
        if samples[0].t_ms != 0 {
            return Err(bad(0, "first sample must be at t=0"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.azimuth.is_finite() || !s.elevation.is_finite() || s.elevation.abs() > 90.0 {
                return Err(bad(i, "angles out of range"));
            }
            if i > 0 && s.t_ms <= samples[i - 1].t_ms {
                return Err(bad(i, "t_ms must strictly increase"));
            }
        }
        Ok(ViewportTrace { samples })
    }

    pub fn fixed(azimuth: f64, elevation: f64) -> Self {
        ViewportTrace { samples: vec![TraceSample { t_ms: 0, azimuth, elevation }] }
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    /// Parse the CSV form with its `t_ms,azimuth_deg,elevation_deg` header.
    /// Line numbers in errors count the header.
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
                continue;
            }
            let bad = |reason: &str| SessionError::BadTrace { line: i + 1, reason: reason.to_string() };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [t, az, el] = fields[..] else {
                return Err(bad("expected three comma-separated fields"));
            };
            samples.push(TraceSample {
                t_ms: t.parse().map_err(|_| bad("bad t_ms"))?,
                azimuth: az.parse().map_err(|_| bad("bad azimuth"))?,
                elevation: el.parse().map_err(|_| bad("bad elevation"))?,
            });
        }
        ViewportTrace::new(samples)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{}\n", s.t_ms, s.azimuth, s.elevation));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "t_ms,azimuth_deg,elevation_deg\n0,10,0\n2500,-90.5,30\n";
        let t = ViewportTrace::parse(text).unwrap();
        assert_eq!(t.samples().len(), 2);
        assert_eq!(ViewportTrace::parse(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn rejects_bad_traces() {
        for text in ["", "t_ms,a,e\n5,0,0\n", "0,0,0\n0,1,1\n", "0,0,95\n", "0,0\n"] {
            assert!(ViewportTrace::parse(text).is_err(), "{text:?}");
        }
    }
}
