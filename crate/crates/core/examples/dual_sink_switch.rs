//! Show how a viewport change moves playback to the other sink at a segment
//! boundary, and how the start threshold of that sink shifts the switch.

use omaf_player::geometry::Viewport;
use omaf_player::mpd::parse_manifest;
use omaf_player::session::{run_session, MemorySource, SessionConfig, TraceSample, ViewportTrace};
use omaf_player::synth::{generate, ContentConfig};

fn main() -> anyhow::Result<()> {
    let content = generate(&ContentConfig { tile_size: 32, frame_rate: 5, ..ContentConfig::default() })?;
    let m = parse_manifest(&content.manifest)?;
    let source = MemorySource::new(content.files.clone());
    let to: Viewport = content.tiles[content.extractors[12].emphasized_tile].center;
    let trace = ViewportTrace::new(vec![
        TraceSample { t_ms: 0, azimuth: 0.0, elevation: 0.0 },
        TraceSample { t_ms: 3500, azimuth: to.azimuth, elevation: to.elevation },
    ])?;

    for min_start in [0, 1000, 2000] {
        let config = SessionConfig { min_start_buffer_ms: min_start, ..SessionConfig::default() };
        let report = run_session(&m, &trace, &config, &source)?;
        println!("min start buffer {min_start} ms: switch latencies {:?}", report.metrics.switch_latencies_ms);
        for e in report.events.iter().filter(|e| matches!(e.kind, "SelectionChange" | "SinkSwitch")) {
            println!("  {:>6} ms {:<16} {}", e.t_ms, e.kind, e.details);
        }
    }
    Ok(())
}
