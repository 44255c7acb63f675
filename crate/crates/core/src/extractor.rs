//! HEVC extractor resolution: turns the samples of an `hvc2` track into a
//! self-contained bitstream by replacing every extractor NAL unit with the
//! bytes its constructors point at.

use std::collections::HashMap;

use thiserror::Error;

use crate::bytes::{put_uint, Reader};
use crate::isobmff::{
    build_output_media, hevc_nal_type, InitSegment, IsobmffError, MediaSegment, OutputSample,
    OutputTrackConfig,
};

pub const EXTRACTOR_NAL_TYPE: u8 = 49;
const OUTPUT_LENGTH_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractorError {
    #[error("bytes at offset {offset} do not form a complete length-prefixed NAL unit")]
    DanglingBytes { offset: usize },
    #[error("NAL unit at offset {offset} is shorter than its 2-byte header")]
    NalTooShort { offset: usize },
    #[error("NAL type {0} is not an extractor")]
    NotAnExtractor(u8),
    #[error("unknown constructor type {0}")]
    UnknownConstructorType(u8),
    #[error("constructor at offset {offset} is truncated")]
    TruncatedConstructor { offset: usize },
    #[error("extractor has no constructors")]
    EmptyExtractor,
    #[error("track reference index must be at least 1")]
    ZeroTrackRefIndex,
    #[error("no sample for track reference index {track_ref_index}{}", track_id.map(|id| format!(" (track {id})")).unwrap_or_default())]
    MissingTileSample { track_ref_index: u8, track_id: Option<u32> },
    #[error("copy of {data_length} bytes at offset {data_offset} exceeds the {sample_size}-byte sample of track {track_id}")]
    CopyOutOfRange { track_id: u32, data_offset: u64, data_length: u64, sample_size: usize },
    #[error("sample_offset {0} is not supported; constructors must reference the time-aligned sample")]
    NonzeroSampleOffset(i8),
    #[error("extractor resolved to {0} bytes, shorter than a NAL unit header")]
    ShortResolvedNal(usize),
    #[error("invalid NAL length size {0}")]
    BadLengthSize(u8),
    #[error("media segment has no extractor track run")]
    NoExtractorTrack,
    #[error("track {track_id} has {found} samples but the extractor track has {expected}")]
    SampleCountMismatch { track_id: u32, expected: usize, found: usize },
    #[error("sample {index}: {source}")]
    InSample {
        index: usize,
        #[source]
        source: Box<ExtractorError>,
    },
    #[error(transparent)]
    Isobmff(#[from] IsobmffError),
}

impl ExtractorError {
    pub fn kind(&self) -> &'static str {
        match self {
            ExtractorError::DanglingBytes { .. } => "DanglingBytes",
            ExtractorError::NalTooShort { .. } => "NalTooShort",
            ExtractorError::NotAnExtractor(_) => "NotAnExtractor",
            ExtractorError::UnknownConstructorType(_) => "UnknownConstructorType",
            ExtractorError::TruncatedConstructor { .. } => "TruncatedConstructor",
            ExtractorError::EmptyExtractor => "EmptyExtractor",
            ExtractorError::ZeroTrackRefIndex => "ZeroTrackRefIndex",
            ExtractorError::MissingTileSample { .. } => "MissingTileSample",
            ExtractorError::CopyOutOfRange { .. } => "CopyOutOfRange",
            ExtractorError::NonzeroSampleOffset(_) => "NonzeroSampleOffset",
            ExtractorError::ShortResolvedNal(_) => "ShortResolvedNal",
            ExtractorError::BadLengthSize(_) => "BadLengthSize",
            ExtractorError::NoExtractorTrack => "NoExtractorTrack",
            ExtractorError::SampleCountMismatch { .. } => "SampleCountMismatch",
            ExtractorError::InSample { source, .. } => source.kind(),
            ExtractorError::Isobmff(e) => e.kind(),
        }
    }
}

fn check_length_size(n: u8) -> Result<usize, ExtractorError> {
    match n {
        1 | 2 | 4 => Ok(n as usize),
        other => Err(ExtractorError::BadLengthSize(other)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NalUnit<'a> {
    pub nal_type: u8,
    /// NAL unit bytes, header included, without the length prefix.
    pub data: &'a [u8],
}

/// Split a length-prefixed sample into NAL units.
pub fn split_nal_units(sample: &[u8], nal_length_size: u8) -> Result<Vec<NalUnit<'_>>, ExtractorError> {
    let width = check_length_size(nal_length_size)?;
    let mut r = Reader::new(sample);
    let mut out = Vec::new();
    while !r.is_empty() {
        let offset = r.position();
        let dangling = |_| ExtractorError::DanglingBytes { offset };
        let len = r.uint(width).map_err(dangling)? as usize;
        let data = r.bytes(len).map_err(dangling)?;
        if data.len() < 2 {
            return Err(ExtractorError::NalTooShort { offset });
        }
        out.push(NalUnit {
            nal_type: hevc_nal_type(data[0]),
            data,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constructor {
    /// Copy `data_length` bytes (0 = to the end) starting at `data_offset` of
    /// the time-aligned sample in the track at `scal_refs[track_ref_index - 1]`.
    Sample {
        track_ref_index: u8,
        sample_offset: i8,
        data_offset: u64,
        data_length: u64,
    },
    Inline(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractorNal {
    pub constructors: Vec<Constructor>,
}

impl ExtractorNal {
    /// Serialize as a NAL unit (header included, no length prefix). Offsets
    /// and lengths are written with `nal_length_size` bytes.
    pub fn to_nal(&self, nal_length_size: u8) -> Result<Vec<u8>, ExtractorError> {
        let width = check_length_size(nal_length_size)?;
        let mut out = vec![EXTRACTOR_NAL_TYPE << 1, 0x01];
        for c in &self.constructors {
            match c {
                Constructor::Sample {
                    track_ref_index,
                    sample_offset,
                    data_offset,
                    data_length,
                } => {
                    out.push(0);
                    out.push(*track_ref_index);
                    out.push(*sample_offset as u8);
                    if !put_uint(&mut out, *data_offset, width) || !put_uint(&mut out, *data_length, width) {
                        return Err(ExtractorError::TruncatedConstructor { offset: out.len() });
                    }
                }
                Constructor::Inline(data) => {
                    let len = u8::try_from(data.len())
                        .map_err(|_| ExtractorError::TruncatedConstructor { offset: out.len() })?;
                    out.push(2);
                    out.push(len);
                    out.extend_from_slice(data);
                }
            }
        }
        Ok(out)
    }
}

/// Decode the constructors of an extractor NAL unit (header included).
pub fn parse_extractor(nal: &[u8], nal_length_size: u8) -> Result<ExtractorNal, ExtractorError> {
    let width = check_length_size(nal_length_size)?;
    let header = nal.get(..2).ok_or(ExtractorError::NalTooShort { offset: 0 })?;
    let nal_type = hevc_nal_type(header[0]);
    if nal_type != EXTRACTOR_NAL_TYPE {
        return Err(ExtractorError::NotAnExtractor(nal_type));
    }
    let mut r = Reader::with_base(&nal[2..], 2);
    let mut constructors = Vec::new();
    while !r.is_empty() {
        let offset = r.absolute_position();
        let truncated = |_| ExtractorError::TruncatedConstructor { offset };
        match r.u8().map_err(truncated)? {
            0 => {
                let track_ref_index = r.u8().map_err(truncated)?;
                let sample_offset = r.i8().map_err(truncated)?;
                let data_offset = r.uint(width).map_err(truncated)?;
                let data_length = r.uint(width).map_err(truncated)?;
                if track_ref_index == 0 {
                    return Err(ExtractorError::ZeroTrackRefIndex);
                }
                constructors.push(Constructor::Sample {
                    track_ref_index,
                    sample_offset,
                    data_offset,
                    data_length,
                });
            }
            2 => {
                let len = r.u8().map_err(truncated)? as usize;
                constructors.push(Constructor::Inline(r.bytes(len).map_err(truncated)?.to_vec()));
            }
            other => return Err(ExtractorError::UnknownConstructorType(other)),
        }
    }
    if constructors.is_empty() {
        return Err(ExtractorError::EmptyExtractor);
    }
    Ok(ExtractorNal { constructors })
}

/// Resolve one extractor-track sample against its time-aligned tile samples.
/// Non-extractor NAL units pass through; each extractor becomes one NAL unit.
/// The result is framed with 4-byte length prefixes.
pub fn resolve_sample(
    sample: &[u8],
    tile_samples: &HashMap<u32, &[u8]>,
    scal_refs: &[u32],
    nal_length_size: u8,
) -> Result<Vec<u8>, ExtractorError> {
    let mut out = Vec::with_capacity(sample.len() * 2);
    let mut nal = Vec::new();
    for unit in split_nal_units(sample, nal_length_size)? {
        if unit.nal_type != EXTRACTOR_NAL_TYPE {
            put_uint(&mut out, unit.data.len() as u64, OUTPUT_LENGTH_SIZE);
            out.extend_from_slice(unit.data);
            continue;
        }
        nal.clear();
        for c in parse_extractor(unit.data, nal_length_size)?.constructors {
            match c {
                Constructor::Inline(data) => nal.extend_from_slice(&data),
                Constructor::Sample {
                    track_ref_index,
                    sample_offset,
                    data_offset,
                    data_length,
                } => {
                    if sample_offset != 0 {
                        return Err(ExtractorError::NonzeroSampleOffset(sample_offset));
                    }
                    let track_id = scal_refs.get(track_ref_index as usize - 1).copied();
                    let source = track_id.and_then(|id| tile_samples.get(&id)).ok_or(
                        ExtractorError::MissingTileSample {
                            track_ref_index,
                            track_id,
                        },
                    )?;
                    nal.extend_from_slice(copy_range(source, track_id.unwrap_or(0), data_offset, data_length)?);
                }
            }
        }
        if nal.len() < 2 {
            return Err(ExtractorError::ShortResolvedNal(nal.len()));
        }
        if !put_uint(&mut out, nal.len() as u64, OUTPUT_LENGTH_SIZE) {
            return Err(ExtractorError::ShortResolvedNal(nal.len()));
        }
        out.extend_from_slice(&nal);
    }
    Ok(out)
}

fn copy_range(source: &[u8], track_id: u32, data_offset: u64, data_length: u64) -> Result<&[u8], ExtractorError> {
    let size = source.len() as u64;
    let end = if data_length == 0 { size } else { data_offset.saturating_add(data_length) };
    if data_offset > size || end > size {
        return Err(ExtractorError::CopyOutOfRange {
            track_id,
            data_offset,
            data_length,
            sample_size: source.len(),
        });
    }
    Ok(&source[data_offset as usize..end as usize])
}

/// Rewrite a 4-byte length-prefixed stream with Annex-B start codes.
pub fn to_annexb(stream: &[u8]) -> Result<Vec<u8>, ExtractorError> {
    let mut out = Vec::with_capacity(stream.len());
    for unit in split_nal_units(stream, OUTPUT_LENGTH_SIZE as u8)? {
        out.extend_from_slice(&[0, 0, 0, 1]);
        out.extend_from_slice(unit.data);
    }
    Ok(out)
}

/// Resolved samples of one segment, ready to be written on the output track.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSegment {
    pub extractor_track_id: u32,
    pub sequence_number: u32,
    pub base_decode_time: u64,
    pub samples: Vec<OutputSample>,
}

/// Resolve every sample of the extractor track run in `extractor_segment`.
/// Tile samples are looked up in `tile_segments` by track id, falling back to
/// the extractor segment itself when tiles are carried alongside it.
pub fn resolve_segment(
    extractor_segment: &MediaSegment,
    tile_segments: &HashMap<u32, MediaSegment>,
    init: &InitSegment,
) -> Result<ResolvedSegment, ExtractorError> {
    let (track, run) = extractor_segment
        .runs
        .iter()
        .find_map(|run| {
            init.track(run.track_id)
                .filter(|t| t.is_extractor_track())
                .map(|t| (t, run))
        })
        .ok_or(ExtractorError::NoExtractorTrack)?;
    let expected = run.samples.len();

    let mut tiles: Vec<(u32, Vec<&[u8]>)> = Vec::with_capacity(track.scal_refs.len());
    for &id in &track.scal_refs {
        let samples = match tile_segments.get(&id) {
            Some(seg) => seg.track_samples(id),
            None => extractor_segment.track_samples(id),
        };
        let present = tile_segments.get(&id).and_then(|s| s.run(id)).or(extractor_segment.run(id));
        if present.is_some() && samples.len() != expected {
            return Err(ExtractorError::SampleCountMismatch {
                track_id: id,
                expected,
                found: samples.len(),
            });
        }
        if present.is_some() {
            tiles.push((id, samples));
        }
    }

    let mut samples = Vec::with_capacity(expected);
    let mut aligned: HashMap<u32, &[u8]> = HashMap::with_capacity(tiles.len());
    for (index, s) in run.samples.iter().enumerate() {
        aligned.clear();
        aligned.extend(tiles.iter().map(|(id, v)| (*id, v[index])));
        let payload = resolve_sample(
            extractor_segment.sample_bytes(s),
            &aligned,
            &track.scal_refs,
            track.nal_length_size,
        )
        .map_err(|e| ExtractorError::InSample {
            index,
            source: Box::new(e),
        })?;
        samples.push(OutputSample {
            duration: s.duration,
            payload,
        });
    }
    Ok(ResolvedSegment {
        extractor_track_id: track.track_id,
        sequence_number: extractor_segment.sequence_number,
        base_decode_time: run.base_decode_time,
        samples,
    })
}

/// Resolve a segment and write it as a media segment on the output track.
pub fn repackage_segment(
    extractor_segment: &MediaSegment,
    tile_segments: &HashMap<u32, MediaSegment>,
    init: &InitSegment,
    config: &OutputTrackConfig,
) -> Result<Vec<u8>, ExtractorError> {
    let resolved = resolve_segment(extractor_segment, tile_segments, init)?;
    Ok(build_output_media(
        &resolved.samples,
        resolved.sequence_number,
        resolved.base_decode_time,
        config,
    )?)
}
