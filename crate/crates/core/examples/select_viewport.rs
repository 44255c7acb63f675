//! Pick the extractor track whose best-quality region is nearest to each
//! of a few viewing directions.

use omaf_player::geometry::{select_extractor_track, Viewport};
use omaf_player::mpd::parse_manifest;
use omaf_player::synth::{generate, ContentConfig};

fn main() -> anyhow::Result<()> {
    let content = generate(&ContentConfig { tile_size: 32, segments: 1, ..ContentConfig::default() })?;
    let m = parse_manifest(&content.manifest)?;
    let candidates: Vec<_> = m
        .adaptation_sets
        .iter()
        .filter_map(|s| s.srqr.as_ref().map(|q| (s.id.as_str(), q)))
        .collect();
    for (az, el) in [(0.0, 0.0), (90.0, 10.0), (-135.0, -30.0), (180.0, 89.0)] {
        let id = select_extractor_track(candidates.iter().copied(), Viewport::new(az, el))?;
        println!("viewport ({az:>6.1}, {el:>5.1}) -> adaptation set {id}");
    }
    Ok(())
}
