//! Stream a generated asset over a simulated 2 Mbit/s link while the viewer
//! turns around, and print the session metrics.

use omaf_player::mpd::parse_manifest;
use omaf_player::session::{run_session, BandwidthModel, MemorySource, SessionConfig, Timing, ViewportTrace};
use omaf_player::synth::{generate, ContentConfig};

fn main() -> anyhow::Result<()> {
    let content = generate(&ContentConfig { tile_size: 32, frame_rate: 5, ..ContentConfig::default() })?;
    let m = parse_manifest(&content.manifest)?;
    let trace = ViewportTrace::parse("t_ms,azimuth_deg,elevation_deg\n0,0,0\n2500,90,0\n5000,180,20\n7500,-90,-20\n")?;
    let config = SessionConfig {
        timing: Timing::Simulated(BandwidthModel::Constant(250_000)),
        ..SessionConfig::default()
    };
    let report = run_session(&m, &trace, &config, &MemorySource::new(content.files.clone()))?;
    println!("{}", report.metrics_json());
    Ok(())
}
