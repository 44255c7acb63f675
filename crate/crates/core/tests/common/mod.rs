//! Shared fixtures for the integration tests: random extractor cases and an
//! independent byte-level resolver used as the reference.

#![allow(dead_code)]

use std::collections::HashMap;

use omaf_player::isobmff::{
    build_init_segment, build_media_segment, FourCc, FragmentSpec, HevcConfig, OutputSample, TrackSpec,
};
use omaf_player::synth::{generate, ContentConfig, GeneratedContent};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EXTRACTOR_TRACK_ID: u32 = 100;

/// A random extractor track over 1 to 8 tile tracks, with the raw sample
/// bytes it was built from.
#[derive(Debug, Clone)]
pub struct ExtractorCase {
    pub nal_length_size: u8,
    pub scal_refs: Vec<u32>,
    pub durations: Vec<u32>,
    pub tile_samples: HashMap<u32, Vec<Vec<u8>>>,
    pub extractor_samples: Vec<Vec<u8>>,
    /// Tile fragments travel inside the extractor segment instead of their own.
    pub tiles_inline: bool,
    pub init: Vec<u8>,
    pub extractor_segment: Vec<u8>,
    pub tile_segments: HashMap<u32, Vec<u8>>,
}

fn put(out: &mut Vec<u8>, v: u64, width: u8) {
    out.extend_from_slice(&v.to_be_bytes()[8 - width as usize..]);
}

fn get(b: &[u8], width: u8) -> u64 {
    b[..width as usize].iter().fold(0, |acc, &x| (acc << 8) | x as u64)
}

fn parameter_sets(seed: u8) -> Vec<Vec<u8>> {
    vec![vec![0x40, 0x01, seed], vec![0x42, 0x01, seed, 1], vec![0x44, 0x01, seed, 2]]
}

fn random_nal(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<u8> {
    // any type but the extractor (49)
    let nal_type = *[0u8, 1, 19, 20, 32, 39, 40].choose(rng).unwrap();
    let mut nal = vec![nal_type << 1, 0x01];
    nal.extend((0..rng.gen_range(0..max_len)).map(|_| rng.gen::<u8>()));
    nal
}

fn frame(nals: &[Vec<u8>], width: u8) -> Vec<u8> {
    let mut out = Vec::new();
    for n in nals {
        put(&mut out, n.len() as u64, width);
        out.extend_from_slice(n);
    }
    out
}

fn track(id: u32, entry: &[u8; 4], width: u8, scal_refs: Vec<u32>) -> TrackSpec {
    TrackSpec {
        track_id: id,
        timescale: 90_000,
        sample_entry: FourCc(*entry),
        width: 64,
        height: 64,
        hevc: HevcConfig::new(width, parameter_sets(id as u8)),
        scal_refs,
        entry_boxes: Vec::new(),
    }
}

impl ExtractorCase {
    pub fn random(rng: &mut ChaCha8Rng) -> ExtractorCase {
        let nal_length_size = *[1u8, 2, 4].choose(rng).unwrap();
        let max_body = if nal_length_size == 1 { 60 } else { 200 };
        let tiles = rng.gen_range(1..=8u32);
        let samples = rng.gen_range(1..=30usize);
        let mut scal_refs: Vec<u32> = (1..=tiles).collect();
        scal_refs.shuffle(rng);
        let durations: Vec<u32> = (0..samples).map(|_| rng.gen_range(1..5000)).collect();

        let mut tile_samples = HashMap::new();
        for &id in &scal_refs {
            let v: Vec<Vec<u8>> = (0..samples)
                .map(|_| {
                    let nals: Vec<Vec<u8>> = (0..rng.gen_range(1..=3)).map(|_| random_nal(rng, max_body)).collect();
                    frame(&nals, nal_length_size)
                })
                .collect();
            tile_samples.insert(id, v);
        }

        let mut extractor_samples = Vec::with_capacity(samples);
        for s in 0..samples {
            let mut nals = Vec::new();
            for _ in 0..rng.gen_range(0..=2) {
                nals.push(random_nal(rng, 8));
            }
            for _ in 0..rng.gen_range(1..=4) {
                let at = rng.gen_range(0..=nals.len());
                let nal = random_extractor(rng, &scal_refs, &tile_samples, s, nal_length_size);
                nals.insert(at, nal);
            }
            extractor_samples.push(frame(&nals, nal_length_size));
        }

        let mut tracks: Vec<TrackSpec> = scal_refs.iter().map(|&id| track(id, b"hvc1", nal_length_size, Vec::new())).collect();
        tracks.push(track(EXTRACTOR_TRACK_ID, b"hvc2", nal_length_size, scal_refs.clone()));
        let init = build_init_segment(&tracks).unwrap();

        let fragment = |id: u32, payloads: &[Vec<u8>]| FragmentSpec {
            track_id: id,
            base_decode_time: 7 * 90_000,
            samples: payloads
                .iter()
                .zip(&durations)
                .map(|(p, &d)| OutputSample { duration: d, payload: p.clone() })
                .collect(),
        };
        let tiles_inline = rng.gen_bool(0.25);
        let mut fragments = vec![fragment(EXTRACTOR_TRACK_ID, &extractor_samples)];
        let mut tile_segments = HashMap::new();
        for &id in &scal_refs {
            let f = fragment(id, &tile_samples[&id]);
            if tiles_inline {
                fragments.push(f);
            } else {
                tile_segments.insert(id, build_media_segment(8, &[f]).unwrap());
            }
        }
        let extractor_segment = build_media_segment(8, &fragments).unwrap();
        ExtractorCase {
            nal_length_size,
            scal_refs,
            durations,
            tile_samples,
            extractor_samples,
            tiles_inline,
            init,
            extractor_segment,
            tile_segments,
        }
    }
}

fn random_extractor(
    rng: &mut ChaCha8Rng,
    scal_refs: &[u32],
    tile_samples: &HashMap<u32, Vec<Vec<u8>>>,
    sample: usize,
    width: u8,
) -> Vec<u8> {
    let mut body = Vec::new();
    let mut resolved_len = 0usize;
    for _ in 0..rng.gen_range(1..=5) {
        if rng.gen_bool(0.4) {
            let n = rng.gen_range(1..=10);
            body.push(2);
            body.push(n as u8);
            body.extend((0..n).map(|_| rng.gen::<u8>()));
            resolved_len += n;
        } else {
            let index = rng.gen_range(1..=scal_refs.len());
            let src = &tile_samples[&scal_refs[index - 1]][sample];
            let offset = rng.gen_range(0..=src.len());
            let length = if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..=src.len() - offset) };
            body.extend_from_slice(&[0, index as u8, 0]);
            put(&mut body, offset as u64, width);
            put(&mut body, length as u64, width);
            resolved_len += if length == 0 { src.len() - offset } else { length };
        }
    }
    let mut nal = vec![49 << 1, 0x01];
    if resolved_len < 2 {
        nal.extend_from_slice(&[2, 2, 0x02, 0x01]);
    }
    nal.extend_from_slice(&body);
    nal
}

/// Resolve one extractor sample by walking its bytes directly. Output NAL
/// units carry 4-byte length prefixes.
pub fn oracle_resolve(sample: &[u8], tiles: &[&[u8]], width: u8) -> Vec<u8> {
    let w = width as usize;
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < sample.len() {
        let len = get(&sample[pos..], width) as usize;
        let nal = &sample[pos + w..pos + w + len];
        pos += w + len;
        if (nal[0] >> 1) & 0x3f != 49 {
            put(&mut out, nal.len() as u64, 4);
            out.extend_from_slice(nal);
            continue;
        }
        let mut built = Vec::new();
        let mut i = 2;
        while i < nal.len() {
            match nal[i] {
                2 => {
                    let n = nal[i + 1] as usize;
                    built.extend_from_slice(&nal[i + 2..i + 2 + n]);
                    i += 2 + n;
                }
                0 => {
                    let src = tiles[nal[i + 1] as usize - 1];
                    assert_eq!(nal[i + 2], 0);
                    let offset = get(&nal[i + 3..], width) as usize;
                    let length = get(&nal[i + 3 + w..], width) as usize;
                    let end = if length == 0 { src.len() } else { offset + length };
                    built.extend_from_slice(&src[offset..end]);
                    i += 3 + 2 * w;
                }
                t => panic!("constructor type {t}"),
            }
        }
        put(&mut out, built.len() as u64, 4);
        out.extend_from_slice(&built);
    }
    out
}

impl ExtractorCase {
    /// Expected output samples, from the raw bytes the case was built from.
    pub fn oracle_samples(&self) -> Vec<OutputSample> {
        self.extractor_samples
            .iter()
            .enumerate()
            .map(|(s, bytes)| {
                let tiles: Vec<&[u8]> = self.scal_refs.iter().map(|id| self.tile_samples[id][s].as_slice()).collect();
                OutputSample { duration: self.durations[s], payload: oracle_resolve(bytes, &tiles, self.nal_length_size) }
            })
            .collect()
    }
}

/// Payload of the first top-level `mdat` box, found by scanning headers.
pub fn mdat_payload(segment: &[u8]) -> &[u8] {
    let mut pos = 0;
    while pos + 8 <= segment.len() {
        let size = u32::from_be_bytes(segment[pos..pos + 4].try_into().unwrap()) as usize;
        if &segment[pos + 4..pos + 8] == b"mdat" {
            return &segment[pos + 8..pos + size];
        }
        pos += size;
    }
    panic!("no mdat");
}

/// Small generated asset: 24 tiles, 24 extractor tracks, 1 s segments at 5 fps.
pub fn small_content(segments: u32) -> GeneratedContent {
    generate(&ContentConfig { tile_size: 32, frame_rate: 5, segments, ..ContentConfig::default() }).unwrap()
}
