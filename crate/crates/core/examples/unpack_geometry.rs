//! Map positions in a rotated, mixed-resolution packed picture back to the
//! cube map and the sphere, then build the render mesh.

use omaf_player::geometry::{build_cmp_mesh, cmp_pixel_to_sphere, map_packed_to_projected, packed_region_at, PixelPos};
use omaf_player::synth::{generate, ContentConfig};

fn main() -> anyhow::Result<()> {
    let config = ContentConfig { tile_size: 64, segments: 1, ..ContentConfig::default() };
    let content = generate(&config)?;
    let rwpk = &content.extractors[0].rwpk;
    println!("packed {}x{} from projected {}x{}", rwpk.packed_width, rwpk.packed_height, rwpk.proj_width, rwpk.proj_height);

    for (i, r) in rwpk.regions.iter().enumerate().take(6) {
        let centre = PixelPos::new(
            r.packed_x as f64 + r.packed_w as f64 / 2.0,
            r.packed_y as f64 + r.packed_h as f64 / 2.0,
        );
        assert_eq!(packed_region_at(rwpk, centre), Some(i));
        let q = map_packed_to_projected(rwpk, centre)?;
        let v = cmp_pixel_to_sphere(q, rwpk.proj_width, rwpk.proj_height)?;
        println!(
            "region {i} ({:?}): packed ({:.0}, {:.0}) -> projected ({:.0}, {:.0}) -> az {:.1} el {:.1}",
            r.transform, centre.x, centre.y, q.x, q.y, v.azimuth, v.elevation
        );
    }

    let mesh = build_cmp_mesh(rwpk, config.tiles_per_face_edge)?;
    let textured = mesh.triangles.iter().filter(|t| t.packed_uv(rwpk).is_some()).count();
    println!("mesh: {} triangles, {textured} textured from a single region", mesh.triangles.len());
    Ok(())
}
