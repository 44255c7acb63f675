//! ISOBMFF parsing and writing for OMAF segments.
//!
//! [`tree`] handles the generic box structure, [`init`] and [`media`] read the
//! track and fragment information the rest of the pipeline needs, and
//! [`build`] writes segments, including the single-track output segments
//! handed to a media sink after extractor resolution.

pub mod build;
pub mod hvcc;
pub mod init;
pub mod media;
pub mod tree;

pub use build::{
    build_init_segment, build_media_segment, build_output_init, build_output_media,
    FragmentSpec, OutputSample, OutputTrackConfig, TrackSpec, DEFAULT_OUTPUT_TRACK_ID,
};
pub use hvcc::HevcConfig;
pub use init::{parse_init_segment, InitSegment, TrackDefaults, TrackInfo};
pub use media::{parse_media_segment, MediaSegment, Sample, TrackRun};
pub use tree::{parse_box_tree, serialize_box_tree, BoxContent, BoxTree, FourCc, HeaderForm, Mp4Box};

use thiserror::Error;

use crate::bytes::ShortRead;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsobmffError {
    #[error("empty input")]
    EmptyInput,
    #[error("box at offset {offset} declares {declared} bytes but only {available} remain")]
    TruncatedBox { offset: usize, declared: u64, available: u64 },
    #[error("box '{fourcc}' at offset {offset} has size 0 below the top level")]
    ZeroSizeLoop { offset: usize, fourcc: FourCc },
    #[error("box '{fourcc}' at offset {offset} has invalid size {size}")]
    InvalidBoxSize { offset: usize, fourcc: FourCc, size: u64 },
    #[error("box '{fourcc}' of {size} bytes does not fit a 32-bit size field")]
    SizeOverflow { fourcc: FourCc, size: u64 },
    #[error("box '{fourcc}' runs to end of file but is not the last top-level box")]
    MisplacedToEndBox { fourcc: FourCc },
    #[error("field at offset {offset} needs {wanted} more bytes inside '{fourcc}'")]
    MalformedBox { fourcc: FourCc, offset: usize, wanted: usize },
    #[error("missing '{fourcc}' box in {context}")]
    MissingBox { fourcc: FourCc, context: String },
    #[error("no moov box")]
    NoMoov,
    #[error("init segment has no video track")]
    NoVideoTrack,
    #[error("track {track_id}: unsupported sample entry '{code}'")]
    UnsupportedSampleEntry { track_id: u32, code: FourCc },
    #[error("track {track_id}: {reason}")]
    BadTrackRef { track_id: u32, reason: String },
    #[error("duplicate track id {0}")]
    DuplicateTrackId(u32),
    #[error("invalid NAL length size {0}")]
    BadLengthSize(u8),
    #[error("parameter set {index} is shorter than a NAL unit header")]
    InvalidParameterSet { index: usize },
    #[error("media segment has no moof box")]
    NoMoof,
    #[error("media segment has {0} moof boxes; one per segment is supported")]
    MultipleMoof(usize),
    #[error("track fragment references unknown track id {0}")]
    UnknownTrackId(u32),
    #[error("track {0} has more than one track fragment")]
    DuplicateTrackFragment(u32),
    #[error("track {track_id}: no {field} for sample {sample}")]
    MissingSampleDefault { track_id: u32, sample: usize, field: &'static str },
    #[error("track {track_id} sample {sample}: bytes {offset}..{end} are outside every mdat payload", end = offset + size)]
    SampleOutOfBounds { track_id: u32, sample: usize, offset: u64, size: u64 },
    #[error("output configuration has no parameter sets")]
    EmptyParameterSets,
    #[error("output track id must be positive")]
    ZeroTrackId,
    #[error("no samples to write")]
    EmptySampleList,
}

impl IsobmffError {
    pub fn kind(&self) -> &'static str {
        match self {
            IsobmffError::EmptyInput => "EmptyInput",
            IsobmffError::TruncatedBox { .. } => "TruncatedBox",
            IsobmffError::ZeroSizeLoop { .. } => "ZeroSizeLoop",
            IsobmffError::InvalidBoxSize { .. } => "InvalidBoxSize",
            IsobmffError::SizeOverflow { .. } => "SizeOverflow",
            IsobmffError::MisplacedToEndBox { .. } => "MisplacedToEndBox",
            IsobmffError::MalformedBox { .. } => "MalformedBox",
            IsobmffError::MissingBox { .. } => "MissingBox",
            IsobmffError::NoMoov => "NoMoov",
            IsobmffError::NoVideoTrack => "NoVideoTrack",
            IsobmffError::UnsupportedSampleEntry { .. } => "UnsupportedSampleEntry",
            IsobmffError::BadTrackRef { .. } => "BadTrackRef",
            IsobmffError::DuplicateTrackId(_) => "DuplicateTrackId",
            IsobmffError::BadLengthSize(_) => "BadLengthSize",
            IsobmffError::InvalidParameterSet { .. } => "InvalidParameterSet",
            IsobmffError::NoMoof => "NoMoof",
            IsobmffError::MultipleMoof(_) => "MultipleMoof",
            IsobmffError::UnknownTrackId(_) => "UnknownTrackId",
            IsobmffError::DuplicateTrackFragment(_) => "DuplicateTrackFragment",
            IsobmffError::MissingSampleDefault { .. } => "MissingSampleDefault",
            IsobmffError::SampleOutOfBounds { .. } => "SampleOutOfBounds",
            IsobmffError::EmptyParameterSets => "EmptyParameterSets",
            IsobmffError::ZeroTrackId => "ZeroTrackId",
            IsobmffError::EmptySampleList => "EmptySampleList",
        }
    }

    /// Byte offset into the input, for errors that have one.
    pub fn offset(&self) -> Option<u64> {
        match self {
            IsobmffError::TruncatedBox { offset, .. }
            | IsobmffError::ZeroSizeLoop { offset, .. }
            | IsobmffError::InvalidBoxSize { offset, .. }
            | IsobmffError::MalformedBox { offset, .. } => Some(*offset as u64),
            IsobmffError::SampleOutOfBounds { offset, .. } => Some(*offset),
            _ => None,
        }
    }

    pub(crate) fn short(fourcc: FourCc, e: ShortRead) -> Self {
        IsobmffError::MalformedBox {
            fourcc,
            offset: e.offset,
            wanted: e.wanted,
        }
    }

    pub(crate) fn missing(fourcc: &[u8; 4], context: impl Into<String>) -> Self {
        IsobmffError::MissingBox {
            fourcc: FourCc(*fourcc),
            context: context.into(),
        }
    }
}

/// HEVC NAL unit type from the first byte of a two-byte NAL header.
pub fn hevc_nal_type(first_byte: u8) -> u8 {
    (first_byte >> 1) & 0x3f
}
