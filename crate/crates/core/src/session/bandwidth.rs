//! Download-time model for simulated sessions. Concurrent requests of a batch
//! share the link capacity equally (processor sharing).

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BandwidthError {
    #[error("bandwidth trace is empty")]
    EmptyTrace,
    #[error("bandwidth trace line {line}: {reason}")]
    BadTraceLine { line: usize, reason: String },
    #[error("bandwidth drops to zero for good with {remaining} bytes outstanding")]
    Starved { remaining: u64 },
}

impl BandwidthError {
    pub fn kind(&self) -> &'static str {
        match self {
            BandwidthError::EmptyTrace => "EmptyTrace",
            BandwidthError::BadTraceLine { .. } => "BadTraceLine",
            BandwidthError::Starved { .. } => "Starved",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BandwidthModel {
    /// Bytes per second.
    Constant(u64),
    /// Piecewise-constant `(t_ms, bytes_per_second)` steps, sorted by time.
    /// The first rate also applies before the first step.
    Trace(Vec<(u64, u64)>),
}

impl BandwidthModel {
    /// Parse `t_ms,bytes_per_second` lines with a header line.
    pub fn parse_trace(text: &str) -> Result<Self, BandwidthError> {
        let mut steps: Vec<(u64, u64)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
                continue;
            }
            let bad = |reason: &str| BandwidthError::BadTraceLine { line: i + 1, reason: reason.to_string() };
            let (t, rate) = line.split_once(',').ok_or_else(|| bad("expected two comma-separated fields"))?;
            let t: u64 = t.trim().parse().map_err(|_| bad("bad t_ms"))?;
            let rate: u64 = rate.trim().parse().map_err(|_| bad("bad bytes_per_second"))?;
            if steps.last().is_some_and(|&(prev, _)| prev >= t) {
                return Err(bad("t_ms must strictly increase"));
            }
            steps.push((t, rate));
        }
        if steps.is_empty() {
            return Err(BandwidthError::EmptyTrace);
        }
        Ok(BandwidthModel::Trace(steps))
    }

    fn rate_at(&self, t_s: f64) -> (f64, Option<f64>) {
        match self {
            BandwidthModel::Constant(r) => (*r as f64, None),
            BandwidthModel::Trace(steps) => {
                let t_ms = t_s * 1000.0;
                let idx = steps.partition_point(|&(t, _)| (t as f64) <= t_ms);
                let rate = steps[idx.saturating_sub(1)].1 as f64;
                let next = steps.get(idx).map(|&(t, _)| t as f64 / 1000.0);
                (rate, next)
            }
        }
    }

    /// Completion time in ms of each request in a batch started at
    /// `start_ms`, rounded up to whole milliseconds.
    pub fn completion_times(&self, start_ms: u64, sizes: &[u64]) -> Result<Vec<u64>, BandwidthError> {
        let mut done = vec![start_ms; sizes.len()];
        let mut remaining: Vec<(usize, f64)> = sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(i, &s)| (i, s as f64))
            .collect();
        let mut t = start_ms as f64 / 1000.0;
        while !remaining.is_empty() {
            let (rate, next_step) = self.rate_at(t);
            let share = rate / remaining.len() as f64;
            if share <= 0.0 {
                match next_step {
                    Some(n) => {
                        t = n;
                        continue;
                    }
                    None => {
                        let left: f64 = remaining.iter().map(|r| r.1).sum();
                        return Err(BandwidthError::Starved { remaining: left.ceil() as u64 });
                    }
                }
            }
            let smallest = remaining.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            let mut dt = smallest / share;
            if let Some(n) = next_step {
                dt = dt.min(n - t);
            }
            t += dt;
            for r in remaining.iter_mut() {
                r.1 -= share * dt;
            }
            remaining.retain(|&(i, left)| {
                if left <= 1e-6 {
                    done[i] = (t * 1000.0 - 1e-6).ceil().max(start_ms as f64) as u64;
                    false
                } else {
                    true
                }
            });
        }
        Ok(done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fair_share_of_constant_link() {
        let m = BandwidthModel::Constant(1_000_000);
        assert_eq!(m.completion_times(0, &[500_000, 500_000]).unwrap(), vec![1000, 1000]);
    }

    #[test]
    fn small_request_finishes_first_then_big_one_speeds_up() {
        let m = BandwidthModel::Constant(1_000_000);
        // both at 500 kB/s until the small one finishes at 0.4 s, then 1 MB/s
        assert_eq!(m.completion_times(100, &[200_000, 600_000]).unwrap(), vec![500, 900]);
    }

    #[test]
    fn trace_steps_change_the_rate() {
        let m = BandwidthModel::parse_trace("t_ms,bytes_per_second\n0,1000\n1000,0\n3000,2000\n").unwrap();
        // 1000 bytes in the first second, stall, then 1000 more at 2000 B/s
        assert_eq!(m.completion_times(0, &[2000]).unwrap(), vec![3500]);
    }

    #[test]
    fn starved_forever() {
        let m = BandwidthModel::Trace(vec![(0, 0)]);
        assert_eq!(m.completion_times(0, &[10]), Err(BandwidthError::Starved { remaining: 10 }));
    }

    #[test]
    fn rejects_unsorted_trace() {
        assert!(matches!(
            BandwidthModel::parse_trace("0,10\n0,20\n"),
            Err(BandwidthError::BadTraceLine { line: 2, .. })
        ));
    }
}
