//! Buffer-limit request scheduling. One segment group is requested at a time
//! and only when it fits under the limit once appended.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Fetch { seq: u64 },
    /// Retry once the playhead has consumed `gain_ms` more media.
    Wait { gain_ms: u64 },
    EndOfStream,
}

/// `next_seq` is 1-based; `total_segments` is the segment count of the content.
pub fn scheduler_decide(
    buffered_ahead_ms: u64,
    next_seq: u64,
    total_segments: u64,
    buffer_limit_ms: u64,
    segment_duration_ms: u64,
) -> Decision {
    if next_seq > total_segments {
        return Decision::EndOfStream;
    }
    let wanted = buffered_ahead_ms + segment_duration_ms;
    if wanted <= buffer_limit_ms {
        Decision::Fetch { seq: next_seq }
    } else {
        Decision::Wait { gain_ms: wanted - buffer_limit_ms }
    }
}
