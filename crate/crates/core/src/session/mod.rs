//! Streaming session: buffer-limit scheduling, viewport-driven selection of
//! extractor tracks, segment fetching and repackaging into two alternating
//! media sinks, all on an integer-millisecond event loop.

pub mod bandwidth;
pub mod buffer;
pub mod engine;
pub mod fetch;
pub mod scheduler;
pub mod trace;

pub use bandwidth::{BandwidthError, BandwidthModel};
pub use buffer::{BufferEntry, BufferError, DualBufferState, PlayState, PlaybackEvent, Sink};
pub use engine::{run_session, LogEvent, RebufferEvent, SessionMetrics, SessionReport};
pub use fetch::{source_for_manifest, FetchError, HttpSource, LocalDirSource, MemorySource, SegmentSource};
pub use scheduler::{scheduler_decide, Decision};
pub use trace::{TraceSample, ViewportTrace};

use serde::Serialize;
use thiserror::Error;

use crate::extractor::ExtractorError;
use crate::geometry::GeometryError;
use crate::isobmff::{IsobmffError, DEFAULT_OUTPUT_TRACK_ID};
use crate::mpd::MpdError;
use crate::omaf::OmafError;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("viewport trace line {line}: {reason}")]
    BadTrace { line: usize, reason: String },
    #[error("manifest gives no segment duration for {0}")]
    NoSegmentDuration(String),
    #[error("configured segment duration {configured} ms differs from the manifest's {manifest} ms")]
    SegmentDurationMismatch { configured: u64, manifest: u64 },
    #[error("manifest has no presentation duration")]
    NoPresentationDuration,
    #[error("components of preselection {preselection} leave {uncovered} grid points of the sphere uncovered")]
    IncompleteCoverage { preselection: String, uncovered: usize },
    #[error("representation {0} is not in the manifest")]
    UnknownRepresentation(String),
    #[error("initialization segment of {0} has no extractor track")]
    NoExtractorTrack(String),
    #[error("session made no progress at {t_ms} ms")]
    Stuck { t_ms: u64 },
    #[error("at {t_ms} ms: {source}")]
    AtTime {
        t_ms: u64,
        #[source]
        source: Box<SessionError>,
    },
    #[error(transparent)]
    Manifest(#[from] MpdError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Isobmff(#[from] IsobmffError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error(transparent)]
    Omaf(#[from] OmafError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Bandwidth(#[from] BandwidthError),
}

impl SessionError {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionError::InvalidConfig(_) => "InvalidConfig",
            SessionError::BadTrace { .. } => "BadTrace",
            SessionError::NoSegmentDuration(_) => "NoSegmentDuration",
            SessionError::SegmentDurationMismatch { .. } => "SegmentDurationMismatch",
            SessionError::NoPresentationDuration => "NoPresentationDuration",
            SessionError::IncompleteCoverage { .. } => "IncompleteCoverage",
            SessionError::UnknownRepresentation(_) => "UnknownRepresentation",
            SessionError::NoExtractorTrack(_) => "NoExtractorTrack",
            SessionError::Stuck { .. } => "Stuck",
            SessionError::AtTime { source, .. } => source.kind(),
            SessionError::Manifest(e) => e.kind(),
            SessionError::Fetch(e) => e.kind(),
            SessionError::Isobmff(e) => e.kind(),
            SessionError::Extractor(e) => e.kind(),
            SessionError::Omaf(e) => e.kind(),
            SessionError::Geometry(e) => e.kind(),
            SessionError::Buffer(e) => e.kind(),
            SessionError::Bandwidth(e) => e.kind(),
        }
    }

    pub(crate) fn at(self, t_ms: u64) -> Self {
        match self {
            e @ SessionError::AtTime { .. } => e,
            e => SessionError::AtTime { t_ms, source: Box::new(e) },
        }
    }
}

/// How long fetches take.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Timing {
    Simulated(BandwidthModel),
    /// Measure each batch on the wall clock.
    WallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionConfig {
    pub buffer_limit_ms: u64,
    /// Taken from the manifest when unset; must match it when set.
    pub segment_duration_ms: Option<u64>,
    /// Media a sink must hold before it starts decoding a new run.
    pub min_start_buffer_ms: u64,
    pub output_track_id: u32,
    pub timing: Timing,
    /// Refuse manifests whose preselections do not cover the whole sphere.
    pub require_full_coverage: bool,
}

/// 100 Mbit/s.
pub const DEFAULT_BANDWIDTH: u64 = 12_500_000;

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            buffer_limit_ms: 3000,
            segment_duration_ms: None,
            min_start_buffer_ms: 0,
            output_track_id: DEFAULT_OUTPUT_TRACK_ID,
            timing: Timing::Simulated(BandwidthModel::Constant(DEFAULT_BANDWIDTH)),
            require_full_coverage: true,
        }
    }
}

impl SessionConfig {
    /// Check the configuration against the segment duration in use.
    pub fn validate(&self, segment_duration_ms: u64) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::InvalidConfig(m));
        if self.buffer_limit_ms == 0 {
            return bad("buffer limit must be positive".into());
        }
        if segment_duration_ms == 0 {
            return bad("segment duration must be positive".into());
        }
        if self.buffer_limit_ms < segment_duration_ms {
            return bad(format!(
                "buffer limit {} ms is shorter than one segment ({segment_duration_ms} ms)",
                self.buffer_limit_ms
            ));
        }
        // a sink waiting for more than this could never be filled under the limit
        if self.min_start_buffer_ms > self.buffer_limit_ms - segment_duration_ms {
            return bad(format!(
                "min start buffer {} ms exceeds buffer limit minus one segment ({} ms)",
                self.min_start_buffer_ms,
                self.buffer_limit_ms - segment_duration_ms
            ));
        }
        if self.output_track_id == 0 {
            return bad("output track id must be nonzero".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_bounds() {
        let c = SessionConfig::default();
        assert!(c.validate(1000).is_ok());
        assert!(c.validate(4000).is_err());
        assert!(SessionConfig { min_start_buffer_ms: 2000, ..c.clone() }.validate(1000).is_ok());
        assert!(SessionConfig { min_start_buffer_ms: 2001, ..c.clone() }.validate(1000).is_err());
        assert!(SessionConfig { buffer_limit_ms: 0, ..c }.validate(1000).is_err());
    }
}
