use std::collections::HashSet;

use serde::Serialize;

use crate::bytes::Reader;

use super::hvcc::HevcConfig;
use super::tree::{parse_box_tree, FourCc, Mp4Box, VISUAL_SAMPLE_ENTRY_LEN};
use super::IsobmffError;

/// Per-track fragment defaults from `trex`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrackDefaults {
    pub sample_description_index: u32,
    pub sample_duration: u32,
    pub sample_size: u32,
    pub sample_flags: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackInfo {
    pub track_id: u32,
    pub handler: FourCc,
    pub sample_entry_code: FourCc,
    pub timescale: u32,
    pub width: u16,
    pub height: u16,
    pub nal_length_size: u8,
    pub parameter_sets: Vec<Vec<u8>>,
    /// `scal` track references, in declaration order.
    pub scal_refs: Vec<u32>,
    /// OMAF metadata boxes found in the sample entry, with `povd`/`rinf`/`schi`
    /// wrappers flattened away.
    #[serde(skip)]
    pub omaf_boxes: Vec<Mp4Box>,
    pub defaults: Option<TrackDefaults>,
}

impl TrackInfo {
    pub fn is_extractor_track(&self) -> bool {
        self.sample_entry_code == b"hvc2"
    }

    pub fn omaf_box(&self, fourcc: &[u8; 4]) -> Option<&Mp4Box> {
        self.omaf_boxes.iter().find(|b| b.fourcc == fourcc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitSegment {
    pub tracks: Vec<TrackInfo>,
}

impl InitSegment {
    pub fn track(&self, track_id: u32) -> Option<&TrackInfo> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    pub fn extractor_tracks(&self) -> impl Iterator<Item = &TrackInfo> {
        self.tracks.iter().filter(|t| t.is_extractor_track())
    }
}

pub fn parse_init_segment(bytes: &[u8]) -> Result<InitSegment, IsobmffError> {
    let tree = parse_box_tree(bytes)?;
    let moov = tree.find(b"moov").ok_or(IsobmffError::NoMoov)?;
    let trexes = moov
        .child(b"mvex")
        .map(|mvex| mvex.children_of(b"trex").map(parse_trex).collect::<Result<Vec<_>, _>>())
        .transpose()?
        .unwrap_or_default();

    let mut tracks = Vec::new();
    let mut seen = HashSet::new();
    for trak in moov.children_of(b"trak") {
        let Some(mut track) = parse_trak(trak)? else {
            continue;
        };
        if !seen.insert(track.track_id) {
            return Err(IsobmffError::DuplicateTrackId(track.track_id));
        }
        track.defaults = trexes.iter().find(|(id, _)| *id == track.track_id).map(|(_, d)| *d);
        tracks.push(track);
    }
    if tracks.is_empty() {
        return Err(IsobmffError::NoVideoTrack);
    }

    for t in &tracks {
        if t.is_extractor_track() {
            if t.scal_refs.is_empty() {
                return Err(IsobmffError::BadTrackRef {
                    track_id: t.track_id,
                    reason: "hvc2 track without scal references".into(),
                });
            }
            if let Some(missing) = t.scal_refs.iter().find(|id| !seen.contains(id)) {
                return Err(IsobmffError::BadTrackRef {
                    track_id: t.track_id,
                    reason: format!("scal references missing track {missing}"),
                });
            }
        } else if !t.scal_refs.is_empty() {
            return Err(IsobmffError::BadTrackRef {
                track_id: t.track_id,
                reason: "hvc1 track carries scal references".into(),
            });
        }
    }
    Ok(InitSegment { tracks })
}

fn leaf<'a>(parent: &'a Mp4Box, code: &[u8; 4]) -> Result<&'a [u8], IsobmffError> {
    parent
        .child(code)
        .and_then(Mp4Box::data)
        .ok_or_else(|| IsobmffError::missing(code, parent.fourcc.to_string()))
}

fn parse_trex(trex: &Mp4Box) -> Result<(u32, TrackDefaults), IsobmffError> {
    let short = |e| IsobmffError::short(trex.fourcc, e);
    let mut r = Reader::new(trex.data().unwrap_or_default());
    r.skip(4).map_err(short)?;
    let track_id = r.u32().map_err(short)?;
    Ok((
        track_id,
        TrackDefaults {
            sample_description_index: r.u32().map_err(short)?,
            sample_duration: r.u32().map_err(short)?,
            sample_size: r.u32().map_err(short)?,
            sample_flags: r.u32().map_err(short)?,
        },
    ))
}

/// Returns `None` for non-video tracks.
fn parse_trak(trak: &Mp4Box) -> Result<Option<TrackInfo>, IsobmffError> {
    let tkhd = leaf(trak, b"tkhd")?;
    let short = |code: &[u8; 4]| {
        let code = FourCc(*code);
        move |e| IsobmffError::short(code, e)
    };
    let mut r = Reader::new(tkhd);
    let version = r.u8().map_err(short(b"tkhd"))?;
    r.skip(3 + if version == 1 { 16 } else { 8 }).map_err(short(b"tkhd"))?;
    let track_id = r.u32().map_err(short(b"tkhd"))?;

    let mdia = trak.child(b"mdia").ok_or_else(|| IsobmffError::missing(b"mdia", "trak"))?;
    let hdlr = leaf(mdia, b"hdlr")?;
    let mut r = Reader::new(hdlr);
    r.skip(8).map_err(short(b"hdlr"))?;
    let handler = FourCc(r.fourcc().map_err(short(b"hdlr"))?);
    if handler != b"vide" {
        return Ok(None);
    }

    let mdhd = leaf(mdia, b"mdhd")?;
    let mut r = Reader::new(mdhd);
    let version = r.u8().map_err(short(b"mdhd"))?;
    r.skip(3 + if version == 1 { 16 } else { 8 }).map_err(short(b"mdhd"))?;
    let timescale = r.u32().map_err(short(b"mdhd"))?;

    let stsd = mdia
        .descend(&[b"minf", b"stbl", b"stsd"])
        .ok_or_else(|| IsobmffError::missing(b"stsd", "mdia/minf/stbl"))?;
    let entry = stsd
        .children()
        .first()
        .ok_or_else(|| IsobmffError::missing(b"hvc1", "stsd"))?;
    if entry.fourcc != b"hvc1" && entry.fourcc != b"hvc2" {
        return Err(IsobmffError::UnsupportedSampleEntry {
            track_id,
            code: entry.fourcc,
        });
    }
    let prefix = entry.prefix();
    if prefix.len() < VISUAL_SAMPLE_ENTRY_LEN {
        return Err(IsobmffError::MalformedBox {
            fourcc: entry.fourcc,
            offset: prefix.len(),
            wanted: VISUAL_SAMPLE_ENTRY_LEN - prefix.len(),
        });
    }
    let width = u16::from_be_bytes([prefix[24], prefix[25]]);
    let height = u16::from_be_bytes([prefix[26], prefix[27]]);
    let hvcc = HevcConfig::parse(leaf(entry, b"hvcC")?)?;

    let mut omaf_boxes = Vec::new();
    collect_metadata_boxes(entry.children(), &mut omaf_boxes);

    let scal_refs = match trak.child(b"tref").and_then(|t| t.child(b"scal")) {
        Some(scal) => {
            let data = scal.data().unwrap_or_default();
            let mut r = Reader::new(data);
            let mut ids = Vec::with_capacity(data.len() / 4);
            while !r.is_empty() {
                ids.push(r.u32().map_err(short(b"scal"))?);
            }
            ids
        }
        None => Vec::new(),
    };

    Ok(Some(TrackInfo {
        track_id,
        handler,
        sample_entry_code: entry.fourcc,
        timescale,
        width,
        height,
        nal_length_size: hvcc.nal_length_size,
        parameter_sets: hvcc.parameter_sets,
        scal_refs,
        omaf_boxes,
        defaults: None,
    }))
}

fn collect_metadata_boxes(children: &[Mp4Box], out: &mut Vec<Mp4Box>) {
    for c in children {
        if c.fourcc == b"povd" || c.fourcc == b"rinf" || c.fourcc == b"schi" {
            collect_metadata_boxes(c.children(), out);
        } else if c.fourcc != b"hvcC" {
            out.push(c.clone());
        }
    }
}
