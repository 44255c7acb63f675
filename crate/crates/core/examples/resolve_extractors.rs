//! Resolve one extractor-track segment against its tile segments and write
//! the result both as an Annex-B bitstream and as a single-track segment.

use std::collections::HashMap;

use omaf_player::extractor::{resolve_segment, split_nal_units, to_annexb};
use omaf_player::isobmff::{build_output_init, build_output_media, parse_init_segment, parse_media_segment, OutputTrackConfig};
use omaf_player::synth::{generate, tile_rep_id, ContentConfig};

fn main() -> anyhow::Result<()> {
    let content = generate(&ContentConfig { tile_size: 32, segments: 2, frame_rate: 5, ..ContentConfig::default() })?;
    let e = &content.extractors[3];
    let init = parse_init_segment(&content.files[&format!("init_{}.mp4", e.rep_id)])?;
    let seg = 2;
    let ext = parse_media_segment(&content.files[&format!("seg_{}_{seg}.m4s", e.rep_id)], &init)?;

    let half = e.tile_order.len() / 2;
    let mut tiles = HashMap::new();
    for (slot, (&tile, &track_id)) in e.tile_order.iter().zip(&e.scal_refs).enumerate() {
        let rep = tile_rep_id(tile, slot < half);
        tiles.insert(track_id, parse_media_segment(&content.files[&format!("seg_{rep}_{seg}.m4s")], &init)?);
    }

    let resolved = resolve_segment(&ext, &tiles, &init)?;
    let stream: Vec<u8> = resolved.samples.iter().flat_map(|s| s.payload.clone()).collect();
    let nals = split_nal_units(&stream, 4)?;
    println!("{} samples, {} NAL units, {} bytes", resolved.samples.len(), nals.len(), stream.len());
    println!("annex-b: {} bytes", to_annexb(&stream)?.len());

    let config = OutputTrackConfig::for_extractor_track(init.track(e.track_id).unwrap(), 1);
    let out_init = build_output_init(&config)?;
    let out_media = build_output_media(&resolved.samples, resolved.sequence_number, resolved.base_decode_time, &config)?;
    println!("output track: init {} bytes, media {} bytes", out_init.len(), out_media.len());
    Ok(())
}
