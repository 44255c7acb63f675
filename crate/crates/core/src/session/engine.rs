//! The session loop. Time is integer milliseconds and jumps from one event to
//! the next. At equal timestamps fetch completions are handled first, then
//! viewport samples, then playback, and the scheduler decides last.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use super::buffer::{DualBufferState, PlayState, PlaybackEvent};
use super::fetch::SegmentSource;
use super::scheduler::{scheduler_decide, Decision};
use super::trace::ViewportTrace;
use super::{SessionConfig, SessionError, Timing};
use crate::extractor::repackage_segment;
use crate::geometry::{select_extractor_track, Viewport};
use crate::isobmff::{
    build_output_init, parse_init_segment, parse_media_segment, InitSegment, MediaSegment, OutputTrackConfig,
};
use crate::mpd::{
    build_segment_url, preselection_components, resolve_preselections, verify_full_coverage, Manifest,
    Representation, SegmentKind,
};
use crate::omaf::{parse_rwpk, parse_srqr, reconcile_srqr, QualityRanking, RegionWisePacking};

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEvent {
    pub t_ms: u64,
    pub kind: &'static str,
    pub details: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RebufferEvent {
    pub start_ms: u64,
    pub dur_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BufferSample {
    pub t_ms: u64,
    pub buffered_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SessionMetrics {
    pub bytes_downloaded: u64,
    pub request_count: u64,
    pub switch_count: u64,
    /// Viewport change to the playhead entering the first segment of the
    /// selection it caused.
    pub switch_latencies_ms: Vec<u64>,
    pub rebuffer_events: Vec<RebufferEvent>,
    pub buffer_timeline: Vec<BufferSample>,
    pub segments_fetched: u64,
    pub segments_played: u64,
    pub sink_switches: u64,
    pub startup_ms: Option<u64>,
    pub session_end_ms: u64,
    pub output_init_bytes: u64,
    pub repackaged_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub metrics: SessionMetrics,
    pub events: Vec<LogEvent>,
    /// Packing of each selectable track, indexed by `rwpk_index`.
    #[serde(skip)]
    pub packings: Vec<Option<RegionWisePacking>>,
}

impl SessionReport {
    /// Event log as JSON lines.
    pub fn event_log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.metrics).expect("metrics serialize")
    }
}

struct Candidate<'m> {
    set_id: String,
    srqr: QualityRanking,
    main: &'m Representation,
    deps: Vec<&'m Representation>,
}

struct InFlight {
    seq: u64,
    candidate: usize,
    bodies: Vec<Vec<u8>>,
    complete_ms: u64,
}

struct Session<'a> {
    config: &'a SessionConfig,
    source: &'a dyn SegmentSource,
    base: Option<&'a str>,
    events: Vec<LogEvent>,
    metrics: SessionMetrics,
}

impl Session<'_> {
    fn log(&mut self, t_ms: u64, kind: &'static str, details: Value) {
        self.events.push(LogEvent { t_ms, kind, details });
    }

    /// Fetch a batch starting at `t`; returns bodies and completion time.
    fn fetch(&mut self, t: u64, urls: &[String]) -> Result<(Vec<Vec<u8>>, u64), SessionError> {
        let started = Instant::now();
        let bodies = self.source.fetch_batch(urls)?;
        let sizes: Vec<u64> = bodies.iter().map(|b| b.len() as u64).collect();
        let complete = match &self.config.timing {
            Timing::Simulated(model) => model.completion_times(t, &sizes)?.into_iter().max().unwrap_or(t),
            Timing::WallClock => t + started.elapsed().as_millis() as u64,
        };
        self.metrics.request_count += urls.len() as u64;
        self.metrics.bytes_downloaded += sizes.iter().sum::<u64>();
        Ok((bodies, complete))
    }

    fn url(&self, rep: &Representation, kind: SegmentKind) -> Result<String, SessionError> {
        Ok(build_segment_url(self.base, rep, kind)?)
    }
}

fn segment_duration(candidates: &[Candidate]) -> Result<u64, SessionError> {
    let main = candidates[0].main;
    main.segment_template
        .segment_duration_ms()
        .filter(|&d| d > 0)
        .ok_or_else(|| SessionError::NoSegmentDuration(main.id.clone()))
}

fn plan<'m>(m: &'m Manifest, config: &SessionConfig) -> Result<Vec<Candidate<'m>>, SessionError> {
    let pres = resolve_preselections(m)?;
    let mut covered: HashMap<Vec<String>, bool> = HashMap::new();
    let mut out = Vec::new();
    for p in &pres {
        let main_set = m.adaptation_set(&p.main_set).ok_or_else(|| SessionError::UnknownRepresentation(p.main_set.clone()))?;
        let Some(srqr) = main_set.srqr.clone().filter(|_| p.main_has_srqr) else { continue };
        let Some(main) = main_set.representations.first() else { continue };
        let components = preselection_components(m, p)?;
        if config.require_full_coverage && !covered.contains_key(&p.component_sets) {
            let report = verify_full_coverage(&components)?;
            if !report.covered {
                return Err(SessionError::IncompleteCoverage {
                    preselection: p.tag.clone(),
                    uncovered: report.uncovered.len(),
                });
            }
            covered.insert(p.component_sets.clone(), true);
        }
        let deps = if main.dependency_ids.is_empty() {
            components.iter().filter_map(|s| s.representations.first()).collect()
        } else {
            main.dependency_ids
                .iter()
                .map(|id| {
                    m.find_representation(id)
                        .map(|(_, r)| r)
                        .ok_or_else(|| SessionError::UnknownRepresentation(id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        out.push(Candidate { set_id: main_set.id.clone(), srqr, main, deps });
    }
    if out.is_empty() {
        return Err(crate::geometry::GeometryError::NoCandidates.into());
    }
    Ok(out)
}

fn select(candidates: &[Candidate], v: Viewport) -> Result<usize, SessionError> {
    let id = select_extractor_track(candidates.iter().map(|c| (c.set_id.as_str(), &c.srqr)), v)?;
    Ok(candidates.iter().position(|c| c.set_id == id).expect("selected id is a candidate"))
}

fn playback_event(e: &PlaybackEvent) -> (&'static str, Value) {
    match e {
        PlaybackEvent::Started { seq, sink, rwpk_index } => {
            ("Started", json!({ "seq": seq, "sink": sink, "rwpk_index": rwpk_index }))
        }
        PlaybackEvent::SegmentBoundary { seq, sink, rwpk_index, selection } => (
            "SegmentBoundary",
            json!({ "seq": seq, "sink": sink, "rwpk_index": rwpk_index, "selection": selection }),
        ),
        PlaybackEvent::SinkSwitch { to, seq, rwpk_index } => {
            ("SinkSwitch", json!({ "to": to, "seq": seq, "rwpk_index": rwpk_index }))
        }
        PlaybackEvent::Rebuffer => ("Rebuffer", json!({})),
        PlaybackEvent::Resumed { stalled_ms } => ("Resumed", json!({ "stalled_ms": stalled_ms })),
        PlaybackEvent::Ended => ("Ended", json!({})),
    }
}

/// Play `manifest` from start to end following `trace`. Segment names are
/// resolved against the manifest's BaseURL if it has one, otherwise against
/// the root of `source`.
pub fn run_session(
    manifest: &Manifest,
    trace: &ViewportTrace,
    config: &SessionConfig,
    source: &dyn SegmentSource,
) -> Result<SessionReport, SessionError> {
    let candidates = plan(manifest, config)?;
    let d = segment_duration(&candidates)?;
    if let Some(configured) = config.segment_duration_ms {
        if configured != d {
            return Err(SessionError::SegmentDurationMismatch { configured, manifest: d });
        }
    }
    config.validate(d)?;
    let content_end = manifest.media_presentation_duration_ms.ok_or(SessionError::NoPresentationDuration)?;
    let total_segments = content_end.div_ceil(d);

    let mut s = Session {
        config,
        source,
        base: manifest.base_url(),
        events: Vec::new(),
        metrics: SessionMetrics::default(),
    };

    // initialization segments of every selectable track, up front
    let init_urls = candidates
        .iter()
        .map(|c| s.url(c.main, SegmentKind::Init))
        .collect::<Result<Vec<_>, _>>()?;
    let (bodies, mut t) = s.fetch(0, &init_urls)?;
    let mut inits: Vec<InitSegment> = Vec::with_capacity(bodies.len());
    let mut packings = Vec::with_capacity(bodies.len());
    for (c, body) in candidates.iter().zip(&bodies) {
        let init = parse_init_segment(body)?;
        let track = init
            .extractor_tracks()
            .next()
            .ok_or_else(|| SessionError::NoExtractorTrack(c.main.id.clone()))?;
        let rwpk = match track.omaf_box(b"rwpk").and_then(|b| b.data()) {
            Some(payload) => Some(parse_rwpk(payload)?),
            None => None,
        };
        if let Some(payload) = track.omaf_box(b"srqr").and_then(|b| b.data()) {
            reconcile_srqr(Some(&c.srqr), Some(&parse_srqr(payload)?))?;
        }
        packings.push(rwpk);
        inits.push(init);
    }
    let first_track = inits[0].extractor_tracks().next().expect("checked above");
    let output = OutputTrackConfig::for_extractor_track(first_track, config.output_track_id);
    let output_init = build_output_init(&output)?;
    s.metrics.output_init_bytes = output_init.len() as u64;
    let init_bytes: u64 = bodies.iter().map(|b| b.len() as u64).sum();
    s.log(t, "InitSegments", json!({ "count": bodies.len(), "bytes": init_bytes, "output_init_bytes": output_init.len() }));

    let samples = trace.samples();
    let mut buffer = DualBufferState::new(content_end, config.min_start_buffer_ms).with_clock(t);
    let mut next_sample = 0;
    let mut desired = select(&candidates, samples[0].viewport())?;
    let mut desired_since = samples[0].t_ms;
    let mut last_fetched: Option<usize> = None;
    let mut pending_switches: VecDeque<(u64, u64)> = VecDeque::new();
    let mut in_flight: Option<InFlight> = None;
    let mut next_seq = 1;
    let mut wait_until: Option<u64> = None;

    loop {
        let step = (|| -> Result<bool, SessionError> {
            if in_flight.as_ref().is_some_and(|f| f.complete_ms <= t) {
                let f = in_flight.take().expect("checked");
                let c = &candidates[f.candidate];
                let init = &inits[f.candidate];
                let ext = parse_media_segment(&f.bodies[0], init)?;
                let mut tiles: HashMap<u32, MediaSegment> = HashMap::new();
                for body in &f.bodies[1..] {
                    let seg = parse_media_segment(body, init)?;
                    if let Some(id) = seg.runs.first().map(|r| r.track_id) {
                        tiles.insert(id, seg);
                    }
                }
                let media = repackage_segment(&ext, &tiles, init, &output)?;
                s.metrics.repackaged_bytes += media.len() as u64;
                let start = (f.seq - 1) * d;
                let dur = d.min(content_end - start);
                let sink = buffer.append(f.seq, &c.set_id, start, dur, f.candidate)?;
                let buffered = buffer.buffered_ahead_ms();
                s.log(
                    t,
                    "Append",
                    json!({ "seq": f.seq, "selection": c.set_id, "sink": sink, "rwpk_index": f.candidate,
                            "bytes": media.len(), "buffered_ms": buffered }),
                );
            }

            while next_sample < samples.len() && samples[next_sample].t_ms <= t {
                let v = samples[next_sample].viewport();
                let now = select(&candidates, v)?;
                if now != desired {
                    desired = now;
                    desired_since = samples[next_sample].t_ms;
                    s.log(
                        t,
                        "ViewportChange",
                        json!({ "azimuth": v.azimuth, "elevation": v.elevation, "desired": candidates[now].set_id }),
                    );
                }
                next_sample += 1;
            }

            for (et, e) in buffer.poll() {
                record_playback(&mut s, &mut pending_switches, et, &e, buffer.buffered_ahead_ms());
            }
            if buffer.state == PlayState::Ended {
                return Ok(true);
            }

            if in_flight.is_none() {
                wait_until = None;
                match scheduler_decide(buffer.buffered_ahead_ms(), next_seq, total_segments, config.buffer_limit_ms, d) {
                    Decision::Fetch { seq } => {
                        let chosen = desired;
                        if last_fetched.is_some_and(|l| l != chosen) {
                            s.metrics.switch_count += 1;
                            pending_switches.push_back((desired_since, seq));
                            s.log(
                                t,
                                "SelectionChange",
                                json!({ "from": candidates[last_fetched.expect("checked")].set_id,
                                        "to": candidates[chosen].set_id, "seq": seq, "since_ms": desired_since }),
                            );
                        }
                        last_fetched = Some(chosen);
                        let c = &candidates[chosen];
                        let mut urls = vec![s.url(c.main, SegmentKind::Media(seq))?];
                        for dep in &c.deps {
                            urls.push(s.url(dep, SegmentKind::Media(seq))?);
                        }
                        let (bodies, complete_ms) = s.fetch(t, &urls)?;
                        s.metrics.segments_fetched += 1;
                        s.log(
                            t,
                            "Fetch",
                            json!({ "seq": seq, "selection": c.set_id, "requests": urls.len(),
                                    "bytes": bodies.iter().map(Vec::len).sum::<usize>(),
                                    "complete_ms": complete_ms, "buffered_ms": buffer.buffered_ahead_ms() }),
                        );
                        in_flight = Some(InFlight { seq, candidate: chosen, bodies, complete_ms });
                        next_seq += 1;
                    }
                    Decision::Wait { gain_ms } => {
                        if buffer.state == PlayState::Playing {
                            wait_until = Some(t + gain_ms);
                        }
                    }
                    Decision::EndOfStream => {}
                }
            }
            Ok(false)
        })()
        .map_err(|e| e.at(t))?;
        if step {
            break;
        }

        let next = [
            in_flight.as_ref().map(|f| f.complete_ms),
            samples.get(next_sample).map(|x| x.t_ms),
            buffer.ms_to_boundary().map(|b| t + b),
            wait_until,
        ]
        .into_iter()
        .flatten()
        .min()
        .ok_or(SessionError::Stuck { t_ms: t })?;
        let buffered = buffer.buffered_ahead_ms();
        if s.metrics.buffer_timeline.last().map(|b| (b.t_ms, b.buffered_ms)) != Some((t, buffered)) {
            s.metrics.buffer_timeline.push(BufferSample { t_ms: t, buffered_ms: buffered });
        }
        for (et, e) in buffer.move_playhead(next - t) {
            record_playback(&mut s, &mut pending_switches, et, &e, buffer.buffered_ahead_ms());
        }
        t = next;
    }

    s.metrics.session_end_ms = t;
    let buffered = buffer.buffered_ahead_ms();
    s.metrics.buffer_timeline.push(BufferSample { t_ms: t, buffered_ms: buffered });
    Ok(SessionReport { metrics: s.metrics, events: s.events, packings })
}

fn record_playback(
    s: &mut Session,
    pending: &mut VecDeque<(u64, u64)>,
    t: u64,
    e: &PlaybackEvent,
    buffered_ms: u64,
) {
    match e {
        PlaybackEvent::Started { .. } => s.metrics.startup_ms = Some(t),
        PlaybackEvent::SegmentBoundary { seq, .. } => {
            s.metrics.segments_played += 1;
            while pending.front().is_some_and(|&(_, first)| first <= *seq) {
                let (since, _) = pending.pop_front().expect("checked");
                s.metrics.switch_latencies_ms.push(t - since);
            }
        }
        PlaybackEvent::SinkSwitch { .. } => s.metrics.sink_switches += 1,
        PlaybackEvent::Resumed { stalled_ms } => s.metrics.rebuffer_events.push(super::RebufferEvent {
            start_ms: t - stalled_ms,
            dur_ms: *stalled_ms,
        }),
        PlaybackEvent::Rebuffer | PlaybackEvent::Ended => {}
    }
    let (kind, mut details) = playback_event(e);
    details["buffered_ms"] = json!(buffered_ms);
    s.log(t, kind, details);
}

/// Group the event log by kind, for summaries.
pub fn count_events(events: &[LogEvent]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for e in events {
        *out.entry(e.kind).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpd::parse_manifest;
    use crate::session::{BandwidthModel, MemorySource, TraceSample};
    use crate::synth::{generate, ContentConfig, GeneratedContent, MANIFEST_NAME};

    fn content() -> GeneratedContent {
        generate(&ContentConfig { tile_size: 32, frame_rate: 5, ..ContentConfig::default() }).unwrap()
    }

    fn run(c: &GeneratedContent, trace: &ViewportTrace, config: &SessionConfig) -> SessionReport {
        let m = parse_manifest(std::str::from_utf8(&c.files[MANIFEST_NAME]).unwrap()).unwrap();
        run_session(&m, trace, config, &MemorySource::new(c.files.clone())).unwrap()
    }

    fn two_step(t_change: u64, from: Viewport, to: Viewport) -> ViewportTrace {
        ViewportTrace::new(vec![
            TraceSample { t_ms: 0, azimuth: from.azimuth, elevation: from.elevation },
            TraceSample { t_ms: t_change, azimuth: to.azimuth, elevation: to.elevation },
        ])
        .unwrap()
    }

    #[test]
    fn static_viewport_plays_everything() {
        let c = content();
        let r = run(&c, &ViewportTrace::fixed(10.0, 5.0), &SessionConfig::default());
        let m = &r.metrics;
        assert_eq!(m.switch_count, 0);
        assert!(m.rebuffer_events.is_empty());
        assert_eq!(m.segments_played, 10);
        assert_eq!(m.sink_switches, 0);
        assert_eq!(r.events.last().unwrap().kind, "Ended");
    }

    #[test]
    fn single_change_switches_sinks_within_bound() {
        let c = content();
        let from = c.tiles[c.extractors[0].emphasized_tile].center;
        let to = c.tiles[c.extractors[12].emphasized_tile].center;
        let r = run(&c, &two_step(3500, from, to), &SessionConfig::default());
        assert_eq!(r.metrics.switch_count, 1);
        assert_eq!(r.metrics.sink_switches, 1);
        let lat = r.metrics.switch_latencies_ms[0];
        assert!(lat <= 3000 + 2 * 1000, "latency {lat}");
        let sw = r.events.iter().find(|e| e.kind == "SinkSwitch").unwrap();
        assert_eq!(sw.details["rwpk_index"], 12);
    }

    #[test]
    fn starved_link_rebuffers() {
        let c = content();
        let config = SessionConfig {
            timing: Timing::Simulated(BandwidthModel::Constant(2_000)),
            ..SessionConfig::default()
        };
        let r = run(&c, &ViewportTrace::fixed(0.0, 0.0), &config);
        assert!(!r.metrics.rebuffer_events.is_empty());
        assert_eq!(r.metrics.segments_played, 10);
    }

    #[test]
    fn identical_inputs_identical_logs() {
        let c = content();
        let trace = two_step(2200, Viewport::new(0.0, 0.0), Viewport::new(170.0, -40.0));
        let a = run(&c, &trace, &SessionConfig::default());
        let b = run(&c, &trace, &SessionConfig::default());
        assert_eq!(a.event_log(), b.event_log());
        assert_eq!(a.metrics_json(), b.metrics_json());
    }

    #[test]
    fn duration_mismatch_is_rejected() {
        let c = content();
        let m = parse_manifest(&c.manifest).unwrap();
        let config = SessionConfig { segment_duration_ms: Some(2000), ..SessionConfig::default() };
        let err = run_session(&m, &ViewportTrace::fixed(0.0, 0.0), &config, &MemorySource::new(c.files.clone()));
        assert!(matches!(err, Err(SessionError::SegmentDurationMismatch { configured: 2000, manifest: 1000 })));
    }

    #[test]
    fn larger_start_threshold_never_shortens_switches() {
        let c = content();
        let from = c.tiles[c.extractors[0].emphasized_tile].center;
        let to = c.tiles[c.extractors[12].emphasized_tile].center;
        for t in [1500u64, 3500, 4200, 5900] {
            let lat = |ms: u64| {
                let config = SessionConfig { min_start_buffer_ms: ms, ..SessionConfig::default() };
                run(&c, &two_step(t, from, to), &config).metrics.switch_latencies_ms
            };
            let (a, b) = (lat(0), lat(2000));
            assert_eq!(a.len(), 1);
            assert!(b[0] >= a[0], "change at {t}: {a:?} vs {b:?}");
        }
    }
}
