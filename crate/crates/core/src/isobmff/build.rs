//! Segment writers: multi-track init/media segments for test content, and the
//! single-track output segments fed to a media sink after repackaging.

use serde::{Deserialize, Serialize};

use crate::bytes::{put_i32, put_u16, put_u32, put_u64};

use super::hvcc::HevcConfig;
use super::init::TrackInfo;
use super::tree::{serialize_box_tree, BoxTree, FourCc, Mp4Box, VISUAL_SAMPLE_ENTRY_LEN};
use super::IsobmffError;

/// Track id of the repackaged output track unless configured otherwise.
pub const DEFAULT_OUTPUT_TRACK_ID: u32 = 1000;

const SAMPLE_FLAGS_SYNC: u32 = 0x0200_0000;
const SAMPLE_FLAGS_NON_SYNC: u32 = 0x0101_0000;

/// Description of the single merged track a media sink is initialized with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputTrackConfig {
    pub output_track_id: u32,
    pub timescale: u32,
    pub parameter_sets: Vec<Vec<u8>>,
    pub width: u16,
    pub height: u16,
    pub nal_length_size: u8,
}

impl OutputTrackConfig {
    /// Output configuration for the merged stream of an extractor track:
    /// timescale, picture size and parameter sets come from that track, NAL
    /// framing is normalized to 4-byte lengths.
    pub fn for_extractor_track(track: &TrackInfo, output_track_id: u32) -> Self {
        OutputTrackConfig {
            output_track_id,
            timescale: track.timescale,
            parameter_sets: track.parameter_sets.clone(),
            width: track.width,
            height: track.height,
            nal_length_size: 4,
        }
    }
}

/// One track of an init segment to be written.
#[derive(Debug, Clone)]
pub struct TrackSpec {
    pub track_id: u32,
    pub timescale: u32,
    pub sample_entry: FourCc,
    pub width: u16,
    pub height: u16,
    pub hevc: HevcConfig,
    pub scal_refs: Vec<u32>,
    /// Extra boxes placed in the sample entry after `hvcC` (OMAF metadata).
    pub entry_boxes: Vec<Mp4Box>,
}

/// One track fragment of a media segment to be written.
#[derive(Debug, Clone)]
pub struct FragmentSpec {
    pub track_id: u32,
    pub base_decode_time: u64,
    pub samples: Vec<OutputSample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSample {
    pub duration: u32,
    pub payload: Vec<u8>,
}

fn full_box(fourcc: &[u8; 4], version: u8, flags: u32, body: &[u8]) -> Mp4Box {
    let mut data = Vec::with_capacity(4 + body.len());
    data.push(version);
    data.extend_from_slice(&flags.to_be_bytes()[1..]);
    data.extend_from_slice(body);
    Mp4Box::leaf(fourcc, data)
}

fn ftyp(major: &[u8; 4], compatible: &[&[u8; 4]]) -> Mp4Box {
    let mut data = major.to_vec();
    put_u32(&mut data, 0);
    for b in compatible {
        data.extend_from_slice(*b);
    }
    Mp4Box::leaf(if major == b"msdh" { b"styp" } else { b"ftyp" }, data)
}

const UNITY_MATRIX: [u32; 9] = [0x0001_0000, 0, 0, 0, 0x0001_0000, 0, 0, 0, 0x4000_0000];

fn mvhd(timescale: u32, next_track_id: u32) -> Mp4Box {
    let mut b = Vec::with_capacity(96);
    put_u32(&mut b, 0); // creation
    put_u32(&mut b, 0); // modification
    put_u32(&mut b, timescale);
    put_u32(&mut b, 0); // duration: fragmented
    put_u32(&mut b, 0x0001_0000);
    put_u16(&mut b, 0x0100);
    b.extend_from_slice(&[0; 10]);
    UNITY_MATRIX.iter().for_each(|&m| put_u32(&mut b, m));
    b.extend_from_slice(&[0; 24]);
    put_u32(&mut b, next_track_id);
    full_box(b"mvhd", 0, 0, &b)
}

fn trak(spec: &TrackSpec) -> Result<Mp4Box, IsobmffError> {
    let mut tkhd = Vec::with_capacity(80);
    put_u32(&mut tkhd, 0);
    put_u32(&mut tkhd, 0);
    put_u32(&mut tkhd, spec.track_id);
    put_u32(&mut tkhd, 0);
    put_u32(&mut tkhd, 0); // duration
    tkhd.extend_from_slice(&[0; 8]);
    put_u16(&mut tkhd, 0); // layer
    put_u16(&mut tkhd, 0); // alternate group
    put_u16(&mut tkhd, 0); // volume
    put_u16(&mut tkhd, 0);
    UNITY_MATRIX.iter().for_each(|&m| put_u32(&mut tkhd, m));
    put_u32(&mut tkhd, (spec.width as u32) << 16);
    put_u32(&mut tkhd, (spec.height as u32) << 16);

    let mut mdhd = Vec::with_capacity(20);
    put_u32(&mut mdhd, 0);
    put_u32(&mut mdhd, 0);
    put_u32(&mut mdhd, spec.timescale);
    put_u32(&mut mdhd, 0);
    put_u16(&mut mdhd, 0x55c4); // 'und'
    put_u16(&mut mdhd, 0);

    let mut hdlr = Vec::new();
    put_u32(&mut hdlr, 0);
    hdlr.extend_from_slice(b"vide");
    hdlr.extend_from_slice(&[0; 12]);
    hdlr.extend_from_slice(b"VideoHandler\0");

    let mut entry_prefix = Vec::with_capacity(VISUAL_SAMPLE_ENTRY_LEN);
    entry_prefix.extend_from_slice(&[0; 6]);
    put_u16(&mut entry_prefix, 1); // data_reference_index
    entry_prefix.extend_from_slice(&[0; 16]);
    put_u16(&mut entry_prefix, spec.width);
    put_u16(&mut entry_prefix, spec.height);
    put_u32(&mut entry_prefix, 0x0048_0000);
    put_u32(&mut entry_prefix, 0x0048_0000);
    put_u32(&mut entry_prefix, 0);
    put_u16(&mut entry_prefix, 1); // frame_count
    entry_prefix.extend_from_slice(&[0; 32]);
    put_u16(&mut entry_prefix, 0x0018);
    put_u16(&mut entry_prefix, 0xffff);
    debug_assert_eq!(entry_prefix.len(), VISUAL_SAMPLE_ENTRY_LEN);

    let mut entry_children = vec![Mp4Box::leaf(b"hvcC", spec.hevc.to_bytes()?)];
    entry_children.extend(spec.entry_boxes.iter().cloned());
    let entry = Mp4Box::with_prefix(&spec.sample_entry.0, entry_prefix, entry_children);

    let counted = |code: &[u8; 4], children: Vec<Mp4Box>| {
        let mut prefix = vec![0; 4];
        put_u32(&mut prefix, children.len() as u32);
        Mp4Box::with_prefix(code, prefix, children)
    };
    let stbl = Mp4Box::container(
        b"stbl",
        vec![
            counted(b"stsd", vec![entry]),
            full_box(b"stts", 0, 0, &[0; 4]),
            full_box(b"stsc", 0, 0, &[0; 4]),
            full_box(b"stsz", 0, 0, &[0; 8]),
            full_box(b"stco", 0, 0, &[0; 4]),
        ],
    );
    let minf = Mp4Box::container(
        b"minf",
        vec![
            full_box(b"vmhd", 0, 1, &[0; 8]),
            Mp4Box::container(b"dinf", vec![counted(b"dref", vec![full_box(b"url ", 0, 1, &[])])]),
            stbl,
        ],
    );
    let mdia = Mp4Box::container(
        b"mdia",
        vec![full_box(b"mdhd", 0, 0, &mdhd), full_box(b"hdlr", 0, 0, &hdlr), minf],
    );

    let mut children = vec![full_box(b"tkhd", 0, 3, &tkhd)];
    if !spec.scal_refs.is_empty() {
        let mut scal = Vec::with_capacity(spec.scal_refs.len() * 4);
        spec.scal_refs.iter().for_each(|&id| put_u32(&mut scal, id));
        children.push(Mp4Box::container(b"tref", vec![Mp4Box::leaf(b"scal", scal)]));
    }
    children.push(mdia);
    Ok(Mp4Box::container(b"trak", children))
}

fn trex(track_id: u32) -> Mp4Box {
    let mut b = Vec::with_capacity(20);
    put_u32(&mut b, track_id);
    put_u32(&mut b, 1);
    put_u32(&mut b, 0);
    put_u32(&mut b, 0);
    put_u32(&mut b, SAMPLE_FLAGS_NON_SYNC);
    full_box(b"trex", 0, 0, &b)
}

/// Write an init segment (`ftyp` + `moov`) holding the given tracks.
pub fn build_init_segment(tracks: &[TrackSpec]) -> Result<Vec<u8>, IsobmffError> {
    let timescale = tracks.first().map(|t| t.timescale).unwrap_or(1000);
    let next_id = tracks.iter().map(|t| t.track_id).max().unwrap_or(0) + 1;
    let mut moov = vec![mvhd(timescale, next_id)];
    for t in tracks {
        if t.track_id == 0 {
            return Err(IsobmffError::ZeroTrackId);
        }
        moov.push(trak(t)?);
    }
    moov.push(Mp4Box::container(b"mvex", tracks.iter().map(|t| trex(t.track_id)).collect()));
    serialize_box_tree(&BoxTree {
        boxes: vec![ftyp(b"iso6", &[b"iso6", b"mp41"]), Mp4Box::container(b"moov", moov)],
    })
}

fn moof(sequence_number: u32, fragments: &[FragmentSpec], data_offsets: &[i32]) -> Mp4Box {
    let mut children = vec![full_box(b"mfhd", 0, 0, &sequence_number.to_be_bytes())];
    for (frag, &data_offset) in fragments.iter().zip(data_offsets) {
        let mut tfhd = Vec::with_capacity(8);
        put_u32(&mut tfhd, frag.track_id);
        put_u32(&mut tfhd, SAMPLE_FLAGS_NON_SYNC);
        let mut trun = Vec::with_capacity(12 + 8 * frag.samples.len());
        put_u32(&mut trun, frag.samples.len() as u32);
        put_i32(&mut trun, data_offset);
        put_u32(&mut trun, SAMPLE_FLAGS_SYNC);
        for s in &frag.samples {
            put_u32(&mut trun, s.duration);
            put_u32(&mut trun, s.payload.len() as u32);
        }
        let mut tfdt = Vec::with_capacity(8);
        put_u64(&mut tfdt, frag.base_decode_time);
        children.push(Mp4Box::container(
            b"traf",
            vec![
                full_box(b"tfhd", 0, 0x02_0020, &tfhd),
                full_box(b"tfdt", 1, 0, &tfdt),
                full_box(b"trun", 0, 0x000305, &trun),
            ],
        ));
    }
    Mp4Box::container(b"moof", children)
}

/// Write a media segment (`styp` + `moof` + `mdat`) with one track fragment
/// per entry. Sample data is laid out fragment by fragment in one `mdat`.
pub fn build_media_segment(sequence_number: u32, fragments: &[FragmentSpec]) -> Result<Vec<u8>, IsobmffError> {
    if fragments.iter().all(|f| f.samples.is_empty()) {
        return Err(IsobmffError::EmptySampleList);
    }
    // Box sizes do not depend on the offset values, so size the moof once
    // with placeholders and then fill in the real offsets.
    let placeholder = vec![0; fragments.len()];
    let moof_size = moof(sequence_number, fragments, &placeholder).size();
    let mut offsets = Vec::with_capacity(fragments.len());
    let mut running = moof_size + 8;
    let mut mdat = Vec::new();
    for f in fragments {
        offsets.push(i32::try_from(running).map_err(|_| IsobmffError::SizeOverflow {
            fourcc: FourCc(*b"moof"),
            size: running,
        })?);
        for s in &f.samples {
            mdat.extend_from_slice(&s.payload);
            running += s.payload.len() as u64;
        }
    }
    // The styp box precedes moof; data offsets stay relative to moof.
    serialize_box_tree(&BoxTree {
        boxes: vec![
            ftyp(b"msdh", &[b"msdh", b"msix"]),
            moof(sequence_number, fragments, &offsets),
            Mp4Box::leaf(b"mdat", mdat),
        ],
    })
}

/// Pseudo-initialization segment for the merged output track.
pub fn build_output_init(config: &OutputTrackConfig) -> Result<Vec<u8>, IsobmffError> {
    if config.parameter_sets.is_empty() {
        return Err(IsobmffError::EmptyParameterSets);
    }
    build_init_segment(&[TrackSpec {
        track_id: config.output_track_id,
        timescale: config.timescale,
        sample_entry: FourCc(*b"hvc1"),
        width: config.width,
        height: config.height,
        hevc: HevcConfig::new(config.nal_length_size, config.parameter_sets.clone()),
        scal_refs: Vec::new(),
        entry_boxes: Vec::new(),
    }])
}

/// Media segment carrying repackaged samples on the output track.
pub fn build_output_media(
    samples: &[OutputSample],
    sequence_number: u32,
    base_decode_time: u64,
    config: &OutputTrackConfig,
) -> Result<Vec<u8>, IsobmffError> {
    if samples.is_empty() {
        return Err(IsobmffError::EmptySampleList);
    }
    if config.output_track_id == 0 {
        return Err(IsobmffError::ZeroTrackId);
    }
    build_media_segment(
        sequence_number,
        &[FragmentSpec {
            track_id: config.output_track_id,
            base_decode_time,
            samples: samples.to_vec(),
        }],
    )
}
