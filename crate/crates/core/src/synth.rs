//! Synthetic OMAF content: cube-map tiles at two resolutions, one extractor
//! track per emphasized tile, and a DASH manifest tying them together.
//!
//! Payloads are patterned bytes rather than real video. Every tile sample
//! starts with its track id, segment number and sample index so that a
//! mis-resolved extractor shows up in the bytes, not just in the lengths.
//!
//! Layout for `n` tiles per face edge and tile size `T`:
//! * projected picture `3nT x 2nT`, faces in a 3x2 grid, `n x n` tiles each;
//! * packed picture `2.5nT x 1.5nT`: half of the tiles at full size in a
//!   `2n x 1.5n` block on the left, the other half at `T/2` in an
//!   `n x 3n` block on the right.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bytes::put_uint;
use crate::extractor::{Constructor, ExtractorError, ExtractorNal};
use crate::geometry::{angles, angular_distance, direction, face_uv_to_direction, sphere_to_cmp_face, CmpFace, Viewport};
use crate::isobmff::{
    build_init_segment, build_media_segment, FourCc, FragmentSpec, HevcConfig, IsobmffError,
    Mp4Box, OutputSample, TrackSpec,
};
use crate::mpd::schemes;
use crate::omaf::{
    Coverage, PackedRegion, ProjectionFormat, QualityEntry, QualityRanking, RegionShape,
    RegionWisePacking, SphereRegion, Transform,
};

pub const MANIFEST_NAME: &str = "manifest.mpd";
pub const MEDIA_TEMPLATE: &str = "seg_$RepresentationID$_$Number$.m4s";
pub const INIT_TEMPLATE: &str = "init_$RepresentationID$.mp4";

/// Adaptation-set ids of tile sets start here; extractor sets use 1, 2, ...
pub const TILE_SET_ID_BASE: usize = 1001;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid content configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Isobmff(#[from] IsobmffError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl SynthError {
    pub fn kind(&self) -> &'static str {
        match self {
            SynthError::InvalidConfig(_) => "InvalidConfig",
            SynthError::Isobmff(e) => e.kind(),
            SynthError::Extractor(e) => e.kind(),
            SynthError::Io { .. } => "Io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentConfig {
    /// Must be even so the packed blocks come out whole.
    pub tiles_per_face_edge: u32,
    pub tile_size: u32,
    /// Number of extractor tracks (emphasized viewports), at most the tile count.
    pub extractor_tracks: usize,
    pub segments: u32,
    pub segment_duration_ms: u32,
    pub frame_rate: u32,
    pub nal_length_size: u8,
    /// Give packed regions random rotation/mirroring instead of identity.
    pub rotate_regions: bool,
    pub seed: u64,
}

impl Default for ContentConfig {
    fn default() -> Self {
        ContentConfig {
            tiles_per_face_edge: 2,
            tile_size: 256,
            extractor_tracks: 24,
            segments: 10,
            segment_duration_ms: 1000,
            frame_rate: 30,
            nal_length_size: 4,
            rotate_regions: true,
            seed: 1,
        }
    }
}

impl ContentConfig {
    pub fn tile_count(&self) -> usize {
        6 * (self.tiles_per_face_edge * self.tiles_per_face_edge) as usize
    }

    pub fn samples_per_segment(&self) -> u32 {
        self.segment_duration_ms * self.frame_rate / 1000
    }

    pub fn timescale(&self) -> u32 {
        self.frame_rate * SAMPLE_DURATION
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let n = self.tiles_per_face_edge;
        if n == 0 || !n.is_multiple_of(2) || n > 6 {
            return bad(format!("tiles per face edge must be 2, 4 or 6, got {n}"));
        }
        if self.tile_size < 16 || !self.tile_size.is_multiple_of(2) {
            return bad(format!("tile size must be even and at least 16, got {}", self.tile_size));
        }
        if 5 * n as u64 * self.tile_size as u64 / 2 > u16::MAX as u64 {
            return bad("packed picture exceeds 65535 pixels".into());
        }
        if self.extractor_tracks == 0 || self.extractor_tracks > self.tile_count() {
            return bad(format!(
                "extractor tracks must be between 1 and {}, got {}",
                self.tile_count(),
                self.extractor_tracks
            ));
        }
        if self.segments == 0 || self.segment_duration_ms == 0 || self.frame_rate == 0 {
            return bad("segments, segment duration and frame rate must be positive".into());
        }
        if !(self.segment_duration_ms as u64 * self.frame_rate as u64).is_multiple_of(1000) {
            return bad(format!(
                "{} ms at {} fps is not a whole number of frames",
                self.segment_duration_ms, self.frame_rate
            ));
        }
        if !matches!(self.nal_length_size, 1 | 2 | 4) {
            return bad(format!("NAL length size must be 1, 2 or 4, got {}", self.nal_length_size));
        }
        Ok(())
    }
}

const SAMPLE_DURATION: u32 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TileInfo {
    pub index: usize,
    pub face: CmpFace,
    /// Projected-picture rectangle: x, y, width, height.
    pub proj_rect: (u32, u32, u32, u32),
    pub center: Viewport,
    /// Azimuth/elevation bounding box of the tile footprint.
    pub footprint: SphereRegion,
    /// Cells of a sphere partition owned by this tile; the coverage of all
    /// tiles together spans the sphere without overlap.
    pub coverage: Vec<SphereRegion>,
    pub set_id: String,
    pub hi_track_id: u32,
    pub lo_track_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorInfo {
    pub set_id: String,
    pub rep_id: String,
    pub track_id: u32,
    pub emphasized_tile: usize,
    /// Tile indices in `scal` order; the first half are full resolution.
    pub tile_order: Vec<usize>,
    pub scal_refs: Vec<u32>,
    pub rwpk: RegionWisePacking,
    pub srqr: QualityRanking,
}

#[derive(Debug, Clone)]
pub struct GeneratedContent {
    pub config: ContentConfig,
    pub manifest: String,
    /// Every file of the asset by relative path, the manifest included.
    pub files: BTreeMap<String, Vec<u8>>,
    pub tiles: Vec<TileInfo>,
    pub extractors: Vec<ExtractorInfo>,
}

impl GeneratedContent {
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn total_bytes(&self) -> usize {
        self.files.values().map(Vec::len).sum()
    }
}

pub fn tile_rep_id(tile: usize, hi: bool) -> String {
    format!("t{tile}_{}", if hi { "hi" } else { "lo" })
}

/// Prefix every tile sample payload starts with, after the NAL header.
pub fn tile_sample_tag(track_id: u32, segment: u32, sample: u32) -> [u8; 12] {
    let mut tag = [0u8; 12];
    tag[..4].copy_from_slice(&track_id.to_be_bytes());
    tag[4..8].copy_from_slice(&segment.to_be_bytes());
    tag[8..].copy_from_slice(&sample.to_be_bytes());
    tag
}

fn angle_units(deg: f64) -> i64 {
    (deg * 65536.0).round() as i64
}

/// Smallest azimuth arc covering all `azimuths`: (centre, range).
fn azimuth_arc(azimuths: &mut [f64]) -> (f64, f64) {
    azimuths.sort_by(f64::total_cmp);
    let mut gap = azimuths[0] + 360.0 - azimuths[azimuths.len() - 1];
    let mut start = azimuths[0];
    for w in azimuths.windows(2) {
        if w[1] - w[0] > gap {
            gap = w[1] - w[0];
            start = w[1];
        }
    }
    let range = 360.0 - gap;
    (crate::geometry::normalize_azimuth(start + range / 2.0), range)
}

const FOOTPRINT_STEPS: u32 = 128;
const FOOTPRINT_MARGIN: f64 = 0.01;

fn footprint(face: CmpFace, i: u32, j: u32, n: u32) -> SphereRegion {
    let step = 1.0 / n as f64;
    let (u0, v0) = (i as f64 * step, j as f64 * step);
    let mut azimuths = Vec::with_capacity(4 * FOOTPRINT_STEPS as usize);
    let (mut el_min, mut el_max) = (f64::MAX, f64::MIN);
    for k in 0..FOOTPRINT_STEPS {
        let t = k as f64 / FOOTPRINT_STEPS as f64 * step;
        for (u, v) in [(u0 + t, v0), (u0 + step, v0 + t), (u0 + step - t, v0 + step), (u0, v0 + step - t)] {
            let (az, el) = angles(face_uv_to_direction(face, u, v));
            el_min = el_min.min(el);
            el_max = el_max.max(el);
            if el.abs() < 90.0 - 1e-9 {
                azimuths.push(az);
            }
        }
    }
    let pole_face = matches!(face, CmpFace::Top | CmpFace::Bottom);
    let pole_inside = pole_face && u0 < 0.5 && 0.5 < u0 + step && v0 < 0.5 && 0.5 < v0 + step;
    let (az_center, az_range) = if pole_inside {
        if face == CmpFace::Top {
            el_max = 90.0;
        } else {
            el_min = -90.0;
        }
        (0.0, 360.0)
    } else {
        let (c, r) = azimuth_arc(&mut azimuths);
        (c, (r + 2.0 * FOOTPRINT_MARGIN).min(360.0))
    };
    let el_lo = (el_min - FOOTPRINT_MARGIN).max(-90.0);
    let el_hi = (el_max + FOOTPRINT_MARGIN).min(90.0);
    SphereRegion {
        center_azimuth: az_center,
        center_elevation: (el_lo + el_hi) / 2.0,
        center_tilt: 0.0,
        azimuth_range: az_range,
        elevation_range: el_hi - el_lo,
    }
    .quantized()
}

/// Geometry of all tiles, in layout order (face cells row by row, then tiles
/// row by row within the face).
pub fn tile_layout(config: &ContentConfig) -> Vec<TileInfo> {
    let n = config.tiles_per_face_edge;
    let t = config.tile_size;
    let tiles = config.tile_count() as u32;
    let mut out = Vec::with_capacity(tiles as usize);
    for cell in 0..6u32 {
        let (col, row) = (cell % 3, cell / 3);
        let face = CmpFace::at_cell(col, row).expect("3x2 layout has a face in every cell");
        for j in 0..n {
            for i in 0..n {
                let index = out.len();
                let centre = face_uv_to_direction(face, (i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                let (az, el) = angles(centre);
                out.push(TileInfo {
                    index,
                    face,
                    proj_rect: (col * n * t + i * t, row * n * t + j * t, t, t),
                    center: Viewport::new(az, el),
                    footprint: footprint(face, i, j, n),
                    coverage: Vec::new(),
                    set_id: (TILE_SET_ID_BASE + index).to_string(),
                    hi_track_id: 1 + index as u32,
                    lo_track_id: 1 + tiles + index as u32,
                });
            }
        }
    }
    assign_coverage(&mut out, n);
    out
}

/// Side of the azimuth/elevation cells that make up tile coverage, in degrees.
const COVERAGE_CELL: i32 = 2;

/// Give each cell to the tile its centre projects into, then merge cells
/// into runs along azimuth and stack runs of equal extent.
fn assign_coverage(tiles: &mut [TileInfo], n: u32) {
    let cols = 360 / COVERAGE_CELL;
    let owner_at = |az: f64, el: f64| {
        let (face, u, v) = sphere_to_cmp_face(direction(az, el)).expect("unit direction");
        let (col, row) = face.layout_cell();
        let (i, j) = (((u * n as f64) as u32).min(n - 1), ((v * n as f64) as u32).min(n - 1));
        ((row * 3 + col) * n * n + j * n + i) as usize
    };
    // per tile: (az_lo, az_hi, el_lo, el_hi); az_hi may exceed 180 on wrap
    let mut rects: Vec<Vec<(i32, i32, i32, i32)>> = vec![Vec::new(); tiles.len()];
    for el in (-90..90).step_by(COVERAGE_CELL as usize) {
        let owners: Vec<usize> = (0..cols)
            .map(|c| owner_at((-180 + c * COVERAGE_CELL) as f64 + COVERAGE_CELL as f64 / 2.0, el as f64 + COVERAGE_CELL as f64 / 2.0))
            .collect();
        // start at an ownership change so no run is split by the seam
        let start = (0..cols as usize).find(|&c| owners[c] != owners[(c + cols as usize - 1) % cols as usize]).unwrap_or(0);
        let mut c = 0;
        while c < cols as usize {
            let owner = owners[(start + c) % cols as usize];
            let mut len = 1;
            while c + len < cols as usize && owners[(start + c + len) % cols as usize] == owner {
                len += 1;
            }
            let lo = -180 + ((start + c) as i32 % cols) * COVERAGE_CELL;
            let hi = lo + len as i32 * COVERAGE_CELL;
            match rects[owner].iter_mut().find(|r| r.0 == lo && r.1 == hi && r.3 == el) {
                Some(r) => r.3 = el + COVERAGE_CELL,
                None => rects[owner].push((lo, hi, el, el + COVERAGE_CELL)),
            }
            c += len;
        }
    }
    for (tile, rs) in tiles.iter_mut().zip(rects) {
        tile.coverage = rs
            .into_iter()
            .map(|(lo, hi, e0, e1)| SphereRegion {
                center_azimuth: crate::geometry::normalize_azimuth((lo + hi) as f64 / 2.0),
                center_elevation: (e0 + e1) as f64 / 2.0,
                center_tilt: 0.0,
                azimuth_range: (hi - lo) as f64,
                elevation_range: (e1 - e0) as f64,
            })
            .collect();
    }
}

fn parameter_sets(marker: u32) -> Vec<Vec<u8>> {
    let m = marker.to_be_bytes();
    [0x40u8, 0x42, 0x44]
        .iter()
        .map(|&h| {
            let mut ps = vec![h, 0x01];
            ps.extend_from_slice(&m);
            ps
        })
        .collect()
}

fn tile_sample(track_id: u32, segment: u32, sample: u32, hi: bool, len_size: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let filler = if hi { rng.gen_range(24..72) } else { rng.gen_range(4..24) };
    let mut nal = vec![0x02, 0x01];
    nal.extend_from_slice(&tile_sample_tag(track_id, segment, sample));
    nal.extend((0..filler).map(|i: u32| (track_id.wrapping_mul(31).wrapping_add(i) & 0xff) as u8));
    let mut out = Vec::with_capacity(nal.len() + len_size as usize);
    put_uint(&mut out, nal.len() as u64, len_size as usize);
    out.extend_from_slice(&nal);
    out
}

fn extractor_sample(tile_samples: &[&[u8]], len_size: u8, rng: &mut ChaCha8Rng) -> Result<Vec<u8>, SynthError> {
    let width = len_size as usize;
    let mut out = Vec::new();
    // access unit delimiter, passed through unchanged
    put_uint(&mut out, 3, width);
    out.extend_from_slice(&[0x46, 0x01, 0x50]);
    for (k, tile) in tile_samples.iter().enumerate() {
        let mut inline = vec![0x02, 0x01];
        inline.extend((0..rng.gen_range(0..3)).map(|_| rng.gen::<u8>()));
        let body = tile.len() as u64 - width as u64 - 2;
        let data_length = if rng.gen_bool(0.5) { 0 } else { body };
        let nal = ExtractorNal {
            constructors: vec![
                Constructor::Inline(inline),
                Constructor::Sample {
                    track_ref_index: (k + 1) as u8,
                    sample_offset: 0,
                    data_offset: width as u64 + 2,
                    data_length,
                },
            ],
        }
        .to_nal(len_size)?;
        put_uint(&mut out, nal.len() as u64, width);
        out.extend_from_slice(&nal);
    }
    Ok(out)
}

fn tile_track(tile: &TileInfo, hi: bool, config: &ContentConfig) -> TrackSpec {
    let t = config.tile_size as u16;
    let size = if hi { t } else { t / 2 };
    let id = if hi { tile.hi_track_id } else { tile.lo_track_id };
    TrackSpec {
        track_id: id,
        timescale: config.timescale(),
        sample_entry: FourCc(*b"hvc1"),
        width: size,
        height: size,
        hevc: HevcConfig::new(config.nal_length_size, parameter_sets(id)),
        scal_refs: Vec::new(),
        entry_boxes: vec![Mp4Box::container(
            b"povd",
            vec![
                ProjectionFormat::Cmp.to_box(),
                Coverage {
                    shape: RegionShape::AzElCircles,
                    regions: tile.coverage.clone(),
                }
                .to_box(),
            ],
        )],
    }
}

fn plan_extractor(
    v: usize,
    emphasized: usize,
    tiles: &[TileInfo],
    config: &ContentConfig,
    rng: &mut ChaCha8Rng,
) -> ExtractorInfo {
    let n = config.tiles_per_face_edge;
    let t = config.tile_size;
    let half = tiles.len() / 2;
    let centre = tiles[emphasized].center;
    let mut by_distance: Vec<usize> = (0..tiles.len()).collect();
    by_distance.sort_by(|&a, &b| {
        angular_distance(centre, tiles[a].center)
            .total_cmp(&angular_distance(centre, tiles[b].center))
            .then(a.cmp(&b))
    });
    let mut hi: Vec<usize> = by_distance[..half].to_vec();
    if let Some(pos) = hi.iter().position(|&k| k == emphasized) {
        hi.remove(pos);
        hi.insert(0, emphasized);
    }
    let mut lo: Vec<usize> = by_distance[half..].to_vec();
    lo.sort_unstable();

    let mut regions = Vec::with_capacity(tiles.len());
    let mut entries = Vec::with_capacity(tiles.len());
    let mut scal_refs = Vec::with_capacity(tiles.len());
    let hi_cols = 2 * n;
    let lo_cols = n;
    for (slot, &k) in hi.iter().chain(lo.iter()).enumerate() {
        let is_hi = slot < half;
        let (px, py, pw) = if is_hi {
            ((slot as u32 % hi_cols) * t, (slot as u32 / hi_cols) * t, t)
        } else {
            let s = (slot - half) as u32;
            (2 * n * t + (s % lo_cols) * (t / 2), (s / lo_cols) * (t / 2), t / 2)
        };
        let transform = if config.rotate_regions {
            Transform::ALL[rng.gen_range(0..8)]
        } else {
            Transform::Identity
        };
        let (x, y, w, h) = tiles[k].proj_rect;
        regions.push(PackedRegion {
            proj_x: x,
            proj_y: y,
            proj_w: w,
            proj_h: h,
            packed_x: px,
            packed_y: py,
            packed_w: pw,
            packed_h: pw,
            transform,
        });
        entries.push(QualityEntry {
            ranking: if is_hi { 1 } else { 2 },
            region: Some(tiles[k].footprint),
        });
        scal_refs.push(if is_hi { tiles[k].hi_track_id } else { tiles[k].lo_track_id });
    }
    ExtractorInfo {
        set_id: (v + 1).to_string(),
        rep_id: format!("e{}", v + 1),
        track_id: 1 + 2 * tiles.len() as u32 + v as u32,
        emphasized_tile: emphasized,
        tile_order: hi.into_iter().chain(lo).collect(),
        scal_refs,
        rwpk: RegionWisePacking {
            proj_width: 3 * n * t,
            proj_height: 2 * n * t,
            packed_width: 5 * n * t / 2,
            packed_height: 3 * n * t / 2,
            regions,
        },
        srqr: QualityRanking {
            shape: RegionShape::AzElCircles,
            entries,
        },
    }
}

fn region_attrs(r: &SphereRegion) -> String {
    format!(
        r#"centre_azimuth="{}" centre_elevation="{}" centre_tilt="{}" azimuth_range="{}" elevation_range="{}""#,
        angle_units(r.center_azimuth),
        angle_units(r.center_elevation),
        angle_units(r.center_tilt),
        angle_units(r.azimuth_range),
        angle_units(r.elevation_range)
    )
}

fn segment_template(config: &ContentConfig) -> String {
    format!(
        r#"<SegmentTemplate media="{MEDIA_TEMPLATE}" initialization="{INIT_TEMPLATE}" timescale="1000" duration="{}" startNumber="1"/>"#,
        config.segment_duration_ms
    )
}

fn bandwidth(files: &BTreeMap<String, Vec<u8>>, rep: &str, config: &ContentConfig) -> u64 {
    let bytes: usize = (1..=config.segments)
        .filter_map(|s| files.get(&format!("seg_{rep}_{s}.m4s")))
        .map(Vec::len)
        .sum();
    let seconds = (config.segments as u64 * config.segment_duration_ms as u64).max(1);
    bytes as u64 * 8 * 1000 / seconds
}

fn write_manifest(
    config: &ContentConfig,
    tiles: &[TileInfo],
    extractors: &[ExtractorInfo],
    files: &BTreeMap<String, Vec<u8>>,
) -> String {
    let total_ms = config.segments as u64 * config.segment_duration_ms as u64;
    let mut x = String::new();
    let _ = writeln!(x, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        x,
        r#"<MPD xmlns="urn:mpeg:dash:schema:mpd:2011" xmlns:omaf="{}" type="static" profiles="urn:mpeg:dash:profile:isoff-live:2011" minBufferTime="PT1S" mediaPresentationDuration="PT{}.{:03}S">"#,
        schemes::OMAF_NAMESPACE,
        total_ms / 1000,
        total_ms % 1000
    );
    let _ = writeln!(x, "  <Period id=\"0\" start=\"PT0S\">");
    let pf = format!(
        r#"<EssentialProperty schemeIdUri="{}" omaf:projection_type="{}"/>"#,
        schemes::PROJECTION,
        ProjectionFormat::Cmp.code()
    );
    for e in extractors {
        let components: Vec<&str> = e.tile_order.iter().map(|&k| tiles[k].set_id.as_str()).collect();
        let deps: Vec<String> = e
            .tile_order
            .iter()
            .enumerate()
            .map(|(slot, &k)| tile_rep_id(k, slot < tiles.len() / 2))
            .collect();
        let _ = writeln!(x, r#"    <AdaptationSet id="{}" mimeType="video/mp4" codecs="hvc2.1.6.L93.B0">"#, e.set_id);
        let _ = writeln!(x, "      {pf}");
        let _ = writeln!(
            x,
            r#"      <SupplementalProperty schemeIdUri="{}" value="vp{},{}"/>"#,
            schemes::PRESELECTION,
            e.set_id,
            components.join(" ")
        );
        let _ = writeln!(x, r#"      <SupplementalProperty schemeIdUri="{}">"#, schemes::QUALITY_RANKING);
        let _ = writeln!(x, r#"        <omaf:sphRegionQuality shape_type="1" remaining_area_flag="false" quality_ranking_local_flag="false" quality_type="0">"#);
        for entry in &e.srqr.entries {
            if let Some(r) = &entry.region {
                let _ = writeln!(x, r#"          <omaf:qualityInfo quality_ranking="{}" {}/>"#, entry.ranking, region_attrs(r));
            }
        }
        let _ = writeln!(x, "        </omaf:sphRegionQuality>");
        let _ = writeln!(x, "      </SupplementalProperty>");
        let _ = writeln!(x, "      {}", segment_template(config));
        let _ = writeln!(
            x,
            r#"      <Representation id="{}" bandwidth="{}" width="{}" height="{}" dependencyId="{}"/>"#,
            e.rep_id,
            bandwidth(files, &e.rep_id, config),
            e.rwpk.packed_width,
            e.rwpk.packed_height,
            deps.join(" ")
        );
        let _ = writeln!(x, "    </AdaptationSet>");
    }
    for tile in tiles {
        let _ = writeln!(x, r#"    <AdaptationSet id="{}" mimeType="video/mp4" codecs="hvc1.1.6.L93.B0">"#, tile.set_id);
        let _ = writeln!(x, r#"      <EssentialProperty schemeIdUri="{}"/>"#, schemes::PRESELECTION);
        let _ = writeln!(x, "      {pf}");
        let _ = writeln!(x, r#"      <SupplementalProperty schemeIdUri="{}">"#, schemes::COVERAGE);
        let _ = writeln!(x, r#"        <omaf:cc shape_type="1">"#);
        for r in &tile.coverage {
            let _ = writeln!(x, r#"          <omaf:coverageInfo {}/>"#, region_attrs(r));
        }
        let _ = writeln!(x, "        </omaf:cc>");
        let _ = writeln!(x, "      </SupplementalProperty>");
        let _ = writeln!(x, "      {}", segment_template(config));
        for hi in [true, false] {
            let rep = tile_rep_id(tile.index, hi);
            let size = if hi { config.tile_size } else { config.tile_size / 2 };
            let _ = writeln!(
                x,
                r#"      <Representation id="{rep}" bandwidth="{}" width="{size}" height="{size}"/>"#,
                bandwidth(files, &rep, config)
            );
        }
        let _ = writeln!(x, "    </AdaptationSet>");
    }
    let _ = writeln!(x, "  </Period>");
    let _ = writeln!(x, "</MPD>");
    x
}

/// Generate a complete asset. Output is a pure function of `config`.
pub fn generate(config: &ContentConfig) -> Result<GeneratedContent, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tiles = tile_layout(config);
    let v_count = config.extractor_tracks;
    let extractors: Vec<ExtractorInfo> = (0..v_count)
        .map(|v| plan_extractor(v, v * tiles.len() / v_count, &tiles, config, &mut rng))
        .collect();

    let mut files = BTreeMap::new();
    let mut tile_specs: BTreeMap<u32, TrackSpec> = BTreeMap::new();
    for tile in &tiles {
        for hi in [true, false] {
            let spec = tile_track(tile, hi, config);
            files.insert(format!("init_{}.mp4", tile_rep_id(tile.index, hi)), build_init_segment(std::slice::from_ref(&spec))?);
            tile_specs.insert(spec.track_id, spec);
        }
    }
    for e in &extractors {
        let mut tracks: Vec<TrackSpec> = e.scal_refs.iter().map(|id| tile_specs[id].clone()).collect();
        tracks.push(TrackSpec {
            track_id: e.track_id,
            timescale: config.timescale(),
            sample_entry: FourCc(*b"hvc2"),
            width: e.rwpk.packed_width as u16,
            height: e.rwpk.packed_height as u16,
            hevc: HevcConfig::new(config.nal_length_size, parameter_sets(0xE000_0000 | e.track_id)),
            scal_refs: e.scal_refs.clone(),
            entry_boxes: vec![Mp4Box::container(
                b"povd",
                vec![ProjectionFormat::Cmp.to_box(), e.rwpk.to_box(), e.srqr.to_box()],
            )],
        });
        files.insert(format!("init_{}.mp4", e.rep_id), build_init_segment(&tracks)?);
    }

    let per_segment = config.samples_per_segment();
    for seg in 1..=config.segments {
        let base = (seg as u64 - 1) * per_segment as u64 * SAMPLE_DURATION as u64;
        let mut samples: BTreeMap<u32, Vec<Vec<u8>>> = BTreeMap::new();
        for tile in &tiles {
            for hi in [true, false] {
                let id = if hi { tile.hi_track_id } else { tile.lo_track_id };
                let payloads: Vec<Vec<u8>> = (0..per_segment)
                    .map(|s| tile_sample(id, seg, s, hi, config.nal_length_size, &mut rng))
                    .collect();
                let fragment = FragmentSpec {
                    track_id: id,
                    base_decode_time: base,
                    samples: payloads
                        .iter()
                        .map(|p| OutputSample { duration: SAMPLE_DURATION, payload: p.clone() })
                        .collect(),
                };
                files.insert(format!("seg_{}_{seg}.m4s", tile_rep_id(tile.index, hi)), build_media_segment(seg, &[fragment])?);
                samples.insert(id, payloads);
            }
        }
        for e in &extractors {
            let mut out = Vec::with_capacity(per_segment as usize);
            for s in 0..per_segment as usize {
                let refs: Vec<&[u8]> = e.scal_refs.iter().map(|id| samples[id][s].as_slice()).collect();
                out.push(OutputSample {
                    duration: SAMPLE_DURATION,
                    payload: extractor_sample(&refs, config.nal_length_size, &mut rng)?,
                });
            }
            let fragment = FragmentSpec {
                track_id: e.track_id,
                base_decode_time: base,
                samples: out,
            };
            files.insert(format!("seg_{}_{seg}.m4s", e.rep_id), build_media_segment(seg, &[fragment])?);
        }
    }

    let manifest = write_manifest(config, &tiles, &extractors, &files);
    files.insert(MANIFEST_NAME.to_string(), manifest.clone().into_bytes());
    Ok(GeneratedContent {
        config: config.clone(),
        manifest,
        files,
        tiles,
        extractors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::region_contains;

    fn small() -> ContentConfig {
        ContentConfig {
            segments: 2,
            tile_size: 32,
            extractor_tracks: 6,
            frame_rate: 5,
            ..ContentConfig::default()
        }
    }

    #[test]
    fn layout_sizes() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.tiles.len(), 24);
        let e = &c.extractors[0];
        assert_eq!((e.rwpk.proj_width, e.rwpk.proj_height), (192, 128));
        assert_eq!((e.rwpk.packed_width, e.rwpk.packed_height), (160, 96));
        assert_eq!(e.rwpk.regions.len(), 24);
        assert_eq!(e.tile_order[0], e.emphasized_tile);
        e.rwpk.validate().unwrap();
        let area: u32 = e.rwpk.regions.iter().map(|r| r.packed_w * r.packed_h).sum();
        assert_eq!(area, 160 * 96);
        assert_eq!(c.files.len(), 1 + 48 * 3 + 6 * 3);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.files, b.files);
        let c = generate(&ContentConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.files, c.files);
    }

    #[test]
    fn footprints_contain_their_centres() {
        for tile in tile_layout(&ContentConfig::default()) {
            assert!(
                region_contains(RegionShape::AzElCircles, &tile.footprint, tile.center.azimuth, tile.center.elevation),
                "tile {}",
                tile.index
            );
        }
    }

    #[test]
    fn coverage_partitions_the_sphere() {
        for n in [2, 4, 6] {
            let tiles = tile_layout(&ContentConfig { tiles_per_face_edge: n, ..ContentConfig::default() });
            let mut area = 0.0;
            for tile in &tiles {
                assert!(!tile.coverage.is_empty() && tile.coverage.len() <= 255, "tile {}", tile.index);
                area += tile.coverage.iter().map(|r| r.azimuth_range * r.elevation_range).sum::<f64>();
                assert!(tile
                    .coverage
                    .iter()
                    .any(|r| region_contains(RegionShape::AzElCircles, r, tile.center.azimuth, tile.center.elevation)));
            }
            assert_eq!(area, 360.0 * 180.0);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            ContentConfig { tiles_per_face_edge: 3, ..small() },
            ContentConfig { extractor_tracks: 25, ..small() },
            ContentConfig { segment_duration_ms: 333, ..small() },
            ContentConfig { nal_length_size: 3, ..small() },
        ] {
            assert!(matches!(generate(&bad), Err(SynthError::InvalidConfig(_))));
        }
    }

    #[test]
    fn manifest_and_segments_agree() {
        use crate::extractor::{resolve_segment, split_nal_units};
        use crate::isobmff::{parse_init_segment, parse_media_segment};
        use crate::mpd::{parse_manifest, preselection_components, resolve_preselections, verify_full_coverage};
        use std::collections::HashMap;

        let c = generate(&small()).unwrap();
        let m = parse_manifest(&c.manifest).unwrap();
        let pres = resolve_preselections(&m).unwrap();
        assert_eq!(pres.len(), 6);
        let sets = preselection_components(&m, &pres[0]).unwrap();
        assert!(verify_full_coverage(&sets).unwrap().covered);

        let e = &c.extractors[2];
        let init = parse_init_segment(&c.files[&format!("init_{}.mp4", e.rep_id)]).unwrap();
        let ext = parse_media_segment(&c.files[&format!("seg_{}_2.m4s", e.rep_id)], &init).unwrap();
        let mut tiles = HashMap::new();
        for (slot, &k) in e.tile_order.iter().enumerate() {
            let rep = tile_rep_id(k, slot < 12);
            let seg = parse_media_segment(&c.files[&format!("seg_{rep}_2.m4s")], &init).unwrap();
            tiles.insert(e.scal_refs[slot], seg);
        }
        let resolved = resolve_segment(&ext, &tiles, &init).unwrap();
        assert_eq!(resolved.samples.len(), 5);
        let nals = split_nal_units(&resolved.samples[3].payload, 4).unwrap();
        assert_eq!(nals.len(), 25);
        for (nal, id) in nals[1..].iter().zip(&e.scal_refs) {
            let tag = tile_sample_tag(*id, 2, 3);
            assert!(nal.data.windows(12).any(|w| w == tag));
        }
    }

    #[test]
    fn azimuth_arc_wraps() {
        let (c, r) = azimuth_arc(&mut [170.0, -170.0, 179.0]);
        assert!((r - 20.0).abs() < 1e-12);
        assert!((c.abs() - 180.0).abs() < 1e-12);
    }
}
