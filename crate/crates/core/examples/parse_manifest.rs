//! Parse a DASH manifest with OMAF descriptors, list its preselections and
//! check that each one covers the sphere.

use omaf_player::mpd::{build_segment_url, parse_manifest, preselection_components, resolve_preselections, verify_full_coverage, SegmentKind};
use omaf_player::synth::{generate, ContentConfig};

fn main() -> anyhow::Result<()> {
    let content = generate(&ContentConfig { tile_size: 32, extractor_tracks: 4, ..ContentConfig::default() })?;
    let m = parse_manifest(&content.manifest)?;
    println!("{:?} presentation, {:?} ms, {} adaptation sets", m.mpd_type, m.media_presentation_duration_ms, m.adaptation_sets.len());

    for p in resolve_preselections(&m)? {
        let components = preselection_components(&m, &p)?;
        let report = verify_full_coverage(&components)?;
        let main = m.adaptation_set(&p.main_set).unwrap();
        let rep = &main.representations[0];
        println!(
            "preselection {} main {} with {} components: coverage {} ({} points), first segment {}",
            p.tag,
            p.main_set,
            components.len(),
            report.covered,
            report.samples_checked,
            build_segment_url(m.base_url(), rep, SegmentKind::Media(1))?
        );
    }
    Ok(())
}
