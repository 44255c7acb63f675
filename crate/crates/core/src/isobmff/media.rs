use serde::Serialize;

use crate::bytes::Reader;

use super::init::{InitSegment, TrackDefaults};
use super::tree::{parse_box_tree, FourCc, Mp4Box};
use super::IsobmffError;

const TFHD_BASE_DATA_OFFSET: u32 = 0x00_0001;
const TFHD_SAMPLE_DESCRIPTION_INDEX: u32 = 0x00_0002;
const TFHD_DEFAULT_DURATION: u32 = 0x00_0008;
const TFHD_DEFAULT_SIZE: u32 = 0x00_0010;
const TFHD_DEFAULT_FLAGS: u32 = 0x00_0020;
const TFHD_DEFAULT_BASE_IS_MOOF: u32 = 0x02_0000;

const TRUN_DATA_OFFSET: u32 = 0x000001;
const TRUN_FIRST_SAMPLE_FLAGS: u32 = 0x000004;
const TRUN_DURATION: u32 = 0x000100;
const TRUN_SIZE: u32 = 0x000200;
const TRUN_FLAGS: u32 = 0x000400;
const TRUN_CTO: u32 = 0x000800;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sample {
    pub duration: u32,
    pub size: u32,
    /// Absolute offset into [`MediaSegment::data`].
    pub offset: u64,
    pub flags: u32,
    pub composition_offset: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrackRun {
    pub track_id: u32,
    pub base_decode_time: u64,
    pub samples: Vec<Sample>,
}

impl TrackRun {
    /// Decode time of every sample, derived from the base time and durations.
    pub fn decode_times(&self) -> Vec<u64> {
        let mut t = self.base_decode_time;
        self.samples
            .iter()
            .map(|s| {
                let at = t;
                t += s.duration as u64;
                at
            })
            .collect()
    }

    pub fn total_duration(&self) -> u64 {
        self.samples.iter().map(|s| s.duration as u64).sum()
    }
}

/// One parsed `moof`+`mdat` segment. `data` is the whole segment, so sample
/// offsets index into it directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MediaSegment {
    pub sequence_number: u32,
    pub runs: Vec<TrackRun>,
    #[serde(skip)]
    pub data: Vec<u8>,
}

impl MediaSegment {
    pub fn run(&self, track_id: u32) -> Option<&TrackRun> {
        self.runs.iter().find(|r| r.track_id == track_id)
    }

    pub fn sample_bytes(&self, sample: &Sample) -> &[u8] {
        &self.data[sample.offset as usize..(sample.offset + sample.size as u64) as usize]
    }

    /// Payload bytes of every sample of `track_id`, in decode order.
    pub fn track_samples(&self, track_id: u32) -> Vec<&[u8]> {
        self.run(track_id)
            .map(|r| r.samples.iter().map(|s| self.sample_bytes(s)).collect())
            .unwrap_or_default()
    }
}

struct Fragment {
    flags: u32,
    track_id: u32,
    base_data_offset: Option<u64>,
    duration: Option<u32>,
    size: Option<u32>,
    sample_flags: Option<u32>,
}

pub fn parse_media_segment(bytes: &[u8], init: &InitSegment) -> Result<MediaSegment, IsobmffError> {
    let tree = parse_box_tree(bytes)?;
    let placed = tree.with_offsets();
    let moofs: Vec<_> = placed.iter().filter(|(_, b)| b.fourcc == b"moof").collect();
    let (moof_offset, moof) = match moofs.as_slice() {
        [] => return Err(IsobmffError::NoMoof),
        [one] => **one,
        many => return Err(IsobmffError::MultipleMoof(many.len())),
    };
    let mdat_ranges: Vec<(u64, u64)> = placed
        .iter()
        .filter(|(_, b)| b.fourcc == b"mdat")
        .map(|(off, b)| (off + b.header_len() as u64, off + b.size()))
        .collect();
    if mdat_ranges.is_empty() {
        return Err(IsobmffError::missing(b"mdat", "media segment"));
    }

    let mfhd = moof
        .child(b"mfhd")
        .and_then(Mp4Box::data)
        .ok_or_else(|| IsobmffError::missing(b"mfhd", "moof"))?;
    let mut r = Reader::new(mfhd);
    r.skip(4).map_err(|e| IsobmffError::short(FourCc(*b"mfhd"), e))?;
    let sequence_number = r.u32().map_err(|e| IsobmffError::short(FourCc(*b"mfhd"), e))?;

    let mut runs: Vec<TrackRun> = Vec::new();
    let mut previous_traf_end = moof_offset;
    for traf in moof.children_of(b"traf") {
        let frag = parse_tfhd(traf)?;
        let track = init
            .track(frag.track_id)
            .ok_or(IsobmffError::UnknownTrackId(frag.track_id))?;
        if runs.iter().any(|r| r.track_id == frag.track_id) {
            return Err(IsobmffError::DuplicateTrackFragment(frag.track_id));
        }
        let defaults = track.defaults.unwrap_or(TrackDefaults::default());
        let base = match frag.base_data_offset {
            Some(b) => b,
            None if frag.flags & TFHD_DEFAULT_BASE_IS_MOOF != 0 || runs.is_empty() => moof_offset,
            None => previous_traf_end,
        };
        let base_decode_time = parse_tfdt(traf)?;

        let mut samples = Vec::new();
        let mut cursor = base;
        for trun in traf.children_of(b"trun") {
            let short = |e| IsobmffError::short(FourCc(*b"trun"), e);
            let mut r = Reader::new(trun.data().unwrap_or_default());
            let version = r.u8().map_err(short)?;
            let tr_flags = r.uint(3).map_err(short)? as u32;
            let count = r.u32().map_err(short)?;
            if tr_flags & TRUN_DATA_OFFSET != 0 {
                let off = r.i32().map_err(short)? as i64;
                cursor = (base as i64 + off).max(0) as u64;
            }
            let first_flags = if tr_flags & TRUN_FIRST_SAMPLE_FLAGS != 0 {
                Some(r.u32().map_err(short)?)
            } else {
                None
            };
            // sample_count must fit in the remaining trun payload
            let per_sample = [TRUN_DURATION, TRUN_SIZE, TRUN_FLAGS, TRUN_CTO]
                .iter()
                .filter(|f| tr_flags & **f != 0)
                .count()
                * 4;
            if per_sample > 0 && (count as usize) > r.remaining() / per_sample {
                return Err(short(crate::bytes::ShortRead {
                    offset: r.absolute_position(),
                    wanted: count as usize * per_sample,
                }));
            }
            for i in 0..count as usize {
                let index = samples.len();
                let duration = if tr_flags & TRUN_DURATION != 0 {
                    r.u32().map_err(short)?
                } else {
                    frag.duration.or(nonzero(defaults.sample_duration)).ok_or(
                        IsobmffError::MissingSampleDefault {
                            track_id: frag.track_id,
                            sample: index,
                            field: "duration",
                        },
                    )?
                };
                let size = if tr_flags & TRUN_SIZE != 0 {
                    r.u32().map_err(short)?
                } else {
                    frag.size.or(nonzero(defaults.sample_size)).ok_or(
                        IsobmffError::MissingSampleDefault {
                            track_id: frag.track_id,
                            sample: index,
                            field: "size",
                        },
                    )?
                };
                let flags = if tr_flags & TRUN_FLAGS != 0 {
                    r.u32().map_err(short)?
                } else if i == 0 && first_flags.is_some() {
                    first_flags.unwrap_or_default()
                } else {
                    frag.sample_flags.unwrap_or(defaults.sample_flags)
                };
                let composition_offset = if tr_flags & TRUN_CTO != 0 {
                    let raw = r.u32().map_err(short)?;
                    if version == 0 {
                        raw as i64
                    } else {
                        raw as i32 as i64
                    }
                } else {
                    0
                };
                let (start, end) = (cursor, cursor + size as u64);
                if !mdat_ranges.iter().any(|&(a, b)| start >= a && end <= b) {
                    return Err(IsobmffError::SampleOutOfBounds {
                        track_id: frag.track_id,
                        sample: index,
                        offset: start,
                        size: size as u64,
                    });
                }
                samples.push(Sample {
                    duration,
                    size,
                    offset: start,
                    flags,
                    composition_offset,
                });
                cursor = end;
            }
        }
        previous_traf_end = cursor;
        runs.push(TrackRun {
            track_id: frag.track_id,
            base_decode_time,
            samples,
        });
    }

    Ok(MediaSegment {
        sequence_number,
        runs,
        data: bytes.to_vec(),
    })
}

fn nonzero(v: u32) -> Option<u32> {
    (v != 0).then_some(v)
}

fn parse_tfhd(traf: &Mp4Box) -> Result<Fragment, IsobmffError> {
    let data = traf
        .child(b"tfhd")
        .and_then(Mp4Box::data)
        .ok_or_else(|| IsobmffError::missing(b"tfhd", "traf"))?;
    let short = |e| IsobmffError::short(FourCc(*b"tfhd"), e);
    let mut r = Reader::new(data);
    r.skip(1).map_err(short)?;
    let flags = r.uint(3).map_err(short)? as u32;
    let track_id = r.u32().map_err(short)?;
    let base_data_offset = if flags & TFHD_BASE_DATA_OFFSET != 0 {
        Some(r.u64().map_err(short)?)
    } else {
        None
    };
    if flags & TFHD_SAMPLE_DESCRIPTION_INDEX != 0 {
        r.skip(4).map_err(short)?;
    }
    let mut opt = |bit: u32| -> Result<Option<u32>, IsobmffError> {
        if flags & bit != 0 {
            Ok(Some(r.u32().map_err(short)?))
        } else {
            Ok(None)
        }
    };
    let duration = opt(TFHD_DEFAULT_DURATION)?;
    let size = opt(TFHD_DEFAULT_SIZE)?;
    let sample_flags = opt(TFHD_DEFAULT_FLAGS)?;
    Ok(Fragment {
        flags,
        track_id,
        base_data_offset,
        duration,
        size,
        sample_flags,
    })
}

fn parse_tfdt(traf: &Mp4Box) -> Result<u64, IsobmffError> {
    let Some(data) = traf.child(b"tfdt").and_then(Mp4Box::data) else {
        return Ok(0);
    };
    let short = |e| IsobmffError::short(FourCc(*b"tfdt"), e);
    let mut r = Reader::new(data);
    let version = r.u8().map_err(short)?;
    r.skip(3).map_err(short)?;
    if version == 1 {
        r.u64().map_err(short)
    } else {
        Ok(r.u32().map_err(short)? as u64)
    }
}
