mod common;

use std::collections::HashMap;

use common::small_content;
use omaf_player::extractor::{resolve_segment, split_nal_units};
use omaf_player::geometry::{build_cmp_mesh, select_extractor_track};
use omaf_player::isobmff::{
    build_output_init, build_output_media, parse_init_segment, parse_media_segment, OutputTrackConfig,
};
use omaf_player::mpd::{build_segment_url, parse_manifest, SegmentKind};
use omaf_player::session::{run_session, MemorySource, SessionConfig, ViewportTrace};
use omaf_player::synth::{tile_rep_id, tile_sample_tag};

#[test]
fn selected_track_resolves_to_its_tiles_in_scal_order() {
    let c = small_content(3);
    let m = parse_manifest(&c.manifest).unwrap();
    let candidates: Vec<_> = m.adaptation_sets.iter().filter_map(|s| s.srqr.as_ref().map(|q| (s.id.as_str(), q))).collect();
    let want = &c.extractors[7];
    let view = c.tiles[want.emphasized_tile].center;
    let id = select_extractor_track(candidates, view).unwrap();
    assert_eq!(id, want.set_id);

    let set = m.adaptation_set(id).unwrap();
    let rep = &set.representations[0];
    let init_name = build_segment_url(None, rep, SegmentKind::Init).unwrap();
    let init = parse_init_segment(&c.files[&init_name]).unwrap();
    let half = want.tile_order.len() / 2;
    for seg in 1..=3u32 {
        let ext_name = build_segment_url(None, rep, SegmentKind::Media(seg as u64)).unwrap();
        let ext = parse_media_segment(&c.files[&ext_name], &init).unwrap();
        let mut tiles = HashMap::new();
        for (slot, (&tile, &track)) in want.tile_order.iter().zip(&want.scal_refs).enumerate() {
            let name = format!("seg_{}_{seg}.m4s", tile_rep_id(tile, slot < half));
            tiles.insert(track, parse_media_segment(&c.files[&name], &init).unwrap());
        }
        let resolved = resolve_segment(&ext, &tiles, &init).unwrap();
        assert_eq!(resolved.sequence_number, seg);
        for (s, sample) in resolved.samples.iter().enumerate() {
            let nals = split_nal_units(&sample.payload, 4).unwrap();
            // access unit delimiter, then one slice per referenced tile
            assert_eq!(nals.len(), 1 + want.scal_refs.len());
            for (nal, &track) in nals[1..].iter().zip(&want.scal_refs) {
                let tag = tile_sample_tag(track, seg, s as u32);
                assert!(nal.data.windows(tag.len()).any(|w| w == tag), "seg {seg} sample {s} track {track}");
            }
        }

        let config = OutputTrackConfig::for_extractor_track(init.track(want.track_id).unwrap(), 1);
        let out_init = parse_init_segment(&build_output_init(&config).unwrap()).unwrap();
        assert_eq!(out_init.tracks.len(), 1);
        let media = build_output_media(&resolved.samples, seg, resolved.base_decode_time, &config).unwrap();
        let parsed = parse_media_segment(&media, &out_init).unwrap();
        let payloads: Vec<&[u8]> = resolved.samples.iter().map(|s| s.payload.as_slice()).collect();
        assert_eq!(parsed.track_samples(1), payloads);
    }
}

#[test]
fn every_packing_textures_the_whole_mesh() {
    let c = small_content(1);
    for e in &c.extractors {
        let mesh = build_cmp_mesh(&e.rwpk, c.config.tiles_per_face_edge).unwrap();
        assert_eq!(mesh.triangles.len(), 12 * 4);
        assert!(mesh.triangles.iter().all(|t| t.packed_uv(&e.rwpk).is_some()));
    }
}

#[test]
fn session_reads_assets_from_disk() {
    let c = small_content(4);
    let dir = tempfile::tempdir().unwrap();
    c.write_to(dir.path()).unwrap();
    let m = parse_manifest(&c.manifest).unwrap();
    let trace = ViewportTrace::fixed(45.0, 20.0);
    let config = SessionConfig::default();
    let disk = run_session(&m, &trace, &config, &omaf_player::session::LocalDirSource::new(dir.path())).unwrap();
    let memory = run_session(&m, &trace, &config, &MemorySource::new(c.files.clone())).unwrap();
    assert_eq!(disk.event_log(), memory.event_log());
    assert_eq!(disk.metrics.segments_played, 4);
}
