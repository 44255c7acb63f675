//! Write a small synthetic tiled cube-map asset to a directory.
//!
//!     cargo run --example generate_content -- /tmp/omaf-asset

use omaf_player::synth::{generate, ContentConfig, MANIFEST_NAME};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "omaf-asset".into());
    let config = ContentConfig { tile_size: 64, segments: 4, ..ContentConfig::default() };
    let content = generate(&config)?;
    content.write_to(dir.as_ref())?;
    println!(
        "{} files, {} bytes: {} tiles, {} extractor tracks, manifest {dir}/{MANIFEST_NAME}",
        content.files.len(),
        content.total_bytes(),
        content.tiles.len(),
        content.extractors.len()
    );
    Ok(())
}
