//! Walk the box tree of an initialization segment and print the OMAF
//! metadata of each track.

use omaf_player::isobmff::{parse_box_tree, parse_init_segment, serialize_box_tree, Mp4Box};
use omaf_player::omaf::{parse_projection, parse_rwpk, parse_srqr};
use omaf_player::synth::{generate, ContentConfig};

fn print_tree(b: &Mp4Box, depth: usize) {
    println!("{:indent$}{} ({} bytes)", "", b.fourcc, b.size(), indent = depth * 2);
    for c in b.children() {
        print_tree(c, depth + 1);
    }
}

fn main() -> anyhow::Result<()> {
    let content = generate(&ContentConfig { tile_size: 32, segments: 1, ..ContentConfig::default() })?;
    let bytes = &content.files[&format!("init_{}.mp4", content.extractors[0].rep_id)];

    let tree = parse_box_tree(bytes)?;
    assert_eq!(&serialize_box_tree(&tree)?, bytes);
    for b in &tree.boxes {
        print_tree(b, 0);
    }

    let init = parse_init_segment(bytes)?;
    for t in init.extractor_tracks() {
        let data = |code: &[u8; 4]| t.omaf_box(code).and_then(|b| b.data());
        let projection = parse_projection(data(b"prfr").unwrap())?;
        let rwpk = parse_rwpk(data(b"rwpk").unwrap())?;
        let srqr = parse_srqr(data(b"srqr").unwrap())?;
        let best = srqr.best_region().unwrap();
        println!(
            "track {}: {projection:?}, {} packed regions in {}x{}, best quality at ({:.1}, {:.1}), {} tile references",
            t.track_id,
            rwpk.regions.len(),
            rwpk.packed_width,
            rwpk.packed_height,
            best.center_azimuth,
            best.center_elevation,
            t.scal_refs.len()
        );
    }
    Ok(())
}
