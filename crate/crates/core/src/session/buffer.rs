//! Two media sinks played alternately. A change of track selection starts a
//! new run in the sink that was not appended to last, so the renderer can
//! swap packing metadata at the exact moment playback crosses into it.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BufferError {
    #[error("segment {seq} does not follow {previous} in sink {sink}")]
    NonMonotoneSequence { sink: Sink, previous: u64, seq: u64 },
    #[error("segment {seq} starts at {start_ms} ms, before the end of buffered media at {end_ms} ms")]
    OverlappingEntry { seq: u64, start_ms: u64, end_ms: u64 },
    #[error("segment {seq} has zero duration")]
    ZeroDuration { seq: u64 },
}

impl BufferError {
    pub fn kind(&self) -> &'static str {
        match self {
            BufferError::NonMonotoneSequence { .. } => "NonMonotoneSequence",
            BufferError::OverlappingEntry { .. } => "OverlappingEntry",
            BufferError::ZeroDuration { .. } => "ZeroDuration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sink {
    A,
    B,
}

impl Sink {
    pub fn other(self) -> Sink {
        match self {
            Sink::A => Sink::B,
            Sink::B => Sink::A,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Sink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sink::A => "A",
            Sink::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BufferEntry {
    pub seq: u64,
    pub selection: String,
    pub start_ms: u64,
    pub dur_ms: u64,
    pub rwpk_index: usize,
    /// Consecutive appends of one selection to one sink share a run id.
    pub run: u64,
}

impl BufferEntry {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.dur_ms
    }

    fn contains(&self, t: u64) -> bool {
        self.start_ms <= t && t < self.end_ms()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PlaybackEvent {
    Started { seq: u64, sink: Sink, rwpk_index: usize },
    SegmentBoundary { seq: u64, sink: Sink, rwpk_index: usize, selection: String },
    SinkSwitch { to: Sink, seq: u64, rwpk_index: usize },
    Rebuffer,
    Resumed { stalled_ms: u64 },
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlayState {
    /// Waiting for the first run to become startable.
    Starting,
    Playing,
    Stalled { since_ms: u64 },
    Ended,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DualBufferState {
    sinks: [Vec<BufferEntry>; 2],
    pub active: Sink,
    pub playhead_ms: u64,
    pub state: PlayState,
    /// Media time at which the content ends.
    pub content_end_ms: u64,
    pub min_start_buffer_ms: u64,
    last_append: Option<(Sink, u64)>,
    runs: u64,
    /// Elapsed session time, advanced by `advance_playback`.
    clock_ms: u64,
    /// Sequence number of the entry the playhead is in, once announced.
    current_seq: Option<u64>,
}

impl DualBufferState {
    pub fn new(content_end_ms: u64, min_start_buffer_ms: u64) -> Self {
        DualBufferState {
            sinks: [Vec::new(), Vec::new()],
            active: Sink::A,
            playhead_ms: 0,
            state: PlayState::Starting,
            content_end_ms,
            min_start_buffer_ms,
            last_append: None,
            runs: 0,
            clock_ms: 0,
            current_seq: None,
        }
    }

    /// Start the session clock at `t`, e.g. after initialization segments arrive.
    pub fn with_clock(mut self, t: u64) -> Self {
        self.clock_ms = t;
        self
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn entries(&self, sink: Sink) -> &[BufferEntry] {
        &self.sinks[sink.index()]
    }

    fn last_entry(&self) -> Option<&BufferEntry> {
        self.sinks
            .iter()
            .filter_map(|s| s.last())
            .max_by_key(|e| e.end_ms())
    }

    /// Append a repackaged segment. Same selection as the previous append
    /// continues that run; any other selection opens a run in the other sink.
    pub fn append(
        &mut self,
        seq: u64,
        selection: &str,
        start_ms: u64,
        dur_ms: u64,
        rwpk_index: usize,
    ) -> Result<Sink, BufferError> {
        if dur_ms == 0 {
            return Err(BufferError::ZeroDuration { seq });
        }
        if let Some(last) = self.last_entry() {
            if start_ms < last.end_ms() {
                return Err(BufferError::OverlappingEntry { seq, start_ms, end_ms: last.end_ms() });
            }
        }
        let (sink, run) = match self.last_append {
            None => {
                self.runs += 1;
                (self.active, self.runs)
            }
            Some((sink, run)) => {
                let tail = self.sinks[sink.index()].last().expect("last append is buffered");
                if tail.selection == selection {
                    if seq != tail.seq + 1 {
                        return Err(BufferError::NonMonotoneSequence { sink, previous: tail.seq, seq });
                    }
                    (sink, run)
                } else {
                    let target = sink.other();
                    if let Some(prev) = self.sinks[target.index()].last() {
                        if seq <= prev.seq {
                            return Err(BufferError::NonMonotoneSequence { sink: target, previous: prev.seq, seq });
                        }
                    }
                    self.runs += 1;
                    (target, self.runs)
                }
            }
        };
        self.sinks[sink.index()].push(BufferEntry {
            seq,
            selection: selection.to_string(),
            start_ms,
            dur_ms,
            rwpk_index,
            run,
        });
        self.last_append = Some((sink, run));
        Ok(sink)
    }

    /// Media buffered ahead of the playhead, summed over both sinks.
    pub fn buffered_ahead_ms(&self) -> u64 {
        let p = self.playhead_ms;
        self.sinks
            .iter()
            .flatten()
            .filter(|e| e.end_ms() > p)
            .map(|e| e.end_ms() - e.start_ms.max(p))
            .sum()
    }

    fn entry_at(&self, sink: Sink, t: u64) -> Option<&BufferEntry> {
        self.sinks[sink.index()].iter().find(|e| e.contains(t))
    }

    /// Whether the run holding the entry at the playhead may begin decoding.
    fn run_startable(&self, sink: Sink, run: u64) -> bool {
        let entries = self.sinks[sink.index()].iter().filter(|e| e.run == run);
        let (ahead, last_end) = entries.fold((0, 0), |(sum, _), e| {
            (sum + e.end_ms().saturating_sub(e.start_ms.max(self.playhead_ms)), e.end_ms())
        });
        let open = self.last_append.map(|(_, r)| r) == Some(run);
        ahead >= self.min_start_buffer_ms || !open || last_end >= self.content_end_ms
    }

    /// Resolve what plays at the current playhead without moving it.
    fn settle(&mut self, events: &mut Vec<(u64, PlaybackEvent)>) {
        let now = self.clock_ms;
        if self.state == PlayState::Ended {
            return;
        }
        if self.playhead_ms >= self.content_end_ms {
            self.state = PlayState::Ended;
            events.push((now, PlaybackEvent::Ended));
            return;
        }
        let p = self.playhead_ms;
        let (sink, entry) = match self.entry_at(self.active, p) {
            Some(e) => (self.active, e.clone()),
            None => match self.entry_at(self.active.other(), p) {
                Some(e) => (self.active.other(), e.clone()),
                None => {
                    self.stall(events);
                    return;
                }
            },
        };
        let starting_run = entry.start_ms == p && self.current_seq != Some(entry.seq) && {
            let prev_run = self
                .entries(sink)
                .iter()
                .chain(self.entries(sink.other()))
                .find(|e| e.end_ms() == p)
                .map(|e| e.run);
            prev_run != Some(entry.run)
        };
        if starting_run && !self.run_startable(sink, entry.run) {
            self.stall(events);
            return;
        }
        match self.state {
            PlayState::Starting => {
                events.push((now, PlaybackEvent::Started { seq: entry.seq, sink, rwpk_index: entry.rwpk_index }));
            }
            PlayState::Stalled { since_ms } => {
                events.push((now, PlaybackEvent::Resumed { stalled_ms: now - since_ms }));
            }
            _ => {}
        }
        self.state = PlayState::Playing;
        if sink != self.active {
            self.active = sink;
            events.push((now, PlaybackEvent::SinkSwitch { to: sink, seq: entry.seq, rwpk_index: entry.rwpk_index }));
        }
        if self.current_seq != Some(entry.seq) {
            self.current_seq = Some(entry.seq);
            events.push((
                now,
                PlaybackEvent::SegmentBoundary {
                    seq: entry.seq,
                    sink,
                    rwpk_index: entry.rwpk_index,
                    selection: entry.selection.clone(),
                },
            ));
        }
    }

    fn stall(&mut self, events: &mut Vec<(u64, PlaybackEvent)>) {
        if self.state == PlayState::Playing {
            self.state = PlayState::Stalled { since_ms: self.clock_ms };
            events.push((self.clock_ms, PlaybackEvent::Rebuffer));
        }
    }

    /// Milliseconds until the playhead reaches the end of its current entry,
    /// or `None` when not playing.
    pub fn ms_to_boundary(&self) -> Option<u64> {
        if self.state != PlayState::Playing {
            return None;
        }
        self.entry_at(self.active, self.playhead_ms)
            .map(|e| e.end_ms() - self.playhead_ms)
    }

    /// Re-evaluate playback at the current instant, e.g. after an append.
    pub fn poll(&mut self) -> Vec<(u64, PlaybackEvent)> {
        let mut events = Vec::new();
        self.settle(&mut events);
        events
    }

    /// Move the clock by `dt_ms` without resolving the state at the final
    /// instant, so that work due at that instant can happen first.
    pub fn move_playhead(&mut self, dt_ms: u64) -> Vec<(u64, PlaybackEvent)> {
        let mut events = Vec::new();
        let mut left = dt_ms;
        while left > 0 {
            self.settle(&mut events);
            let step = match self.ms_to_boundary() {
                Some(b) => b.min(left),
                None => left,
            };
            if self.state == PlayState::Playing {
                self.playhead_ms += step;
            }
            self.clock_ms += step;
            left -= step;
        }
        events
    }

    /// Advance the session clock by `dt_ms`. Events carry the session time
    /// at which they occur.
    pub fn advance_playback(&mut self, dt_ms: u64) -> Vec<(u64, PlaybackEvent)> {
        let mut events = self.move_playhead(dt_ms);
        self.settle(&mut events);
        events
    }
}
