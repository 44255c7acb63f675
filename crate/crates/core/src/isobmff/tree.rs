//! Generic box tree: parse and serialize with byte-exact round trips.

use std::fmt;

use serde::{Serialize, Serializer};

use super::IsobmffError;

/// A four-character box or sample-entry code.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FourCc(pub [u8; 4]);

impl FourCc {
    pub const fn new(code: &[u8; 4]) -> Self {
        FourCc(*code)
    }
}

impl fmt::Display for FourCc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            if b.is_ascii_graphic() || b == b' ' {
                write!(f, "{}", b as char)?;
            } else {
                write!(f, "\\x{b:02x}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for FourCc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FourCc(\"{self}\")")
    }
}

impl Serialize for FourCc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl PartialEq<&[u8; 4]> for FourCc {
    fn eq(&self, other: &&[u8; 4]) -> bool {
        &self.0 == *other
    }
}

/// How the size field of a box was (or will be) coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderForm {
    /// 32-bit size, 8-byte header.
    Compact,
    /// `size == 1` followed by a 64-bit `largesize`, 16-byte header.
    Large,
    /// `size == 0`: the box runs to the end of the file. Top level only.
    ToEnd,
}

impl HeaderForm {
    pub fn header_len(self) -> usize {
        match self {
            HeaderForm::Large => 16,
            HeaderForm::Compact | HeaderForm::ToEnd => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoxContent {
    /// Opaque payload (leaf boxes and every box type we do not descend into).
    Data(Vec<u8>),
    /// Container payload. `prefix` holds the fixed fields that precede the
    /// child boxes (e.g. the `stsd` entry count or the visual sample entry
    /// header); it is empty for pure containers.
    Children {
        prefix: Vec<u8>,
        children: Vec<Mp4Box>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mp4Box {
    pub fourcc: FourCc,
    pub header: HeaderForm,
    pub content: BoxContent,
}

/// An ordered list of top-level boxes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BoxTree {
    pub boxes: Vec<Mp4Box>,
}

const PURE_CONTAINERS: &[&[u8; 4]] = &[
    b"moov", b"trak", b"mdia", b"minf", b"stbl", b"mvex", b"moof", b"traf", b"tref", b"dinf",
    b"edts", b"mfra", b"povd", b"rinf", b"schi",
];

const SAMPLE_ENTRIES: &[&[u8; 4]] = &[b"hvc1", b"hvc2", b"hev1", b"hvt1", b"resv"];

/// Bytes of a VisualSampleEntry that precede its child boxes.
pub const VISUAL_SAMPLE_ENTRY_LEN: usize = 78;

fn container_prefix(fourcc: FourCc, parent: Option<FourCc>) -> Option<usize> {
    if PURE_CONTAINERS.iter().any(|c| fourcc == *c) {
        return Some(0);
    }
    if fourcc == b"stsd" || fourcc == b"dref" {
        return Some(8);
    }
    if parent == Some(FourCc(*b"stsd")) && SAMPLE_ENTRIES.iter().any(|c| fourcc == *c) {
        return Some(VISUAL_SAMPLE_ENTRY_LEN);
    }
    None
}

impl Mp4Box {
    pub fn leaf(fourcc: &[u8; 4], data: Vec<u8>) -> Self {
        Mp4Box {
            fourcc: FourCc(*fourcc),
            header: HeaderForm::Compact,
            content: BoxContent::Data(data),
        }
    }

    pub fn container(fourcc: &[u8; 4], children: Vec<Mp4Box>) -> Self {
        Self::with_prefix(fourcc, Vec::new(), children)
    }

    pub fn with_prefix(fourcc: &[u8; 4], prefix: Vec<u8>, children: Vec<Mp4Box>) -> Self {
        Mp4Box {
            fourcc: FourCc(*fourcc),
            header: HeaderForm::Compact,
            content: BoxContent::Children { prefix, children },
        }
    }

    pub fn header_len(&self) -> usize {
        self.header.header_len()
    }

    pub fn content_len(&self) -> u64 {
        match &self.content {
            BoxContent::Data(d) => d.len() as u64,
            BoxContent::Children { prefix, children } => {
                prefix.len() as u64 + children.iter().map(Mp4Box::size).sum::<u64>()
            }
        }
    }

    /// Total size including the header, recomputed from the content.
    pub fn size(&self) -> u64 {
        self.header_len() as u64 + self.content_len()
    }

    pub fn children(&self) -> &[Mp4Box] {
        match &self.content {
            BoxContent::Children { children, .. } => children,
            BoxContent::Data(_) => &[],
        }
    }

    pub fn data(&self) -> Option<&[u8]> {
        match &self.content {
            BoxContent::Data(d) => Some(d),
            BoxContent::Children { .. } => None,
        }
    }

    pub fn prefix(&self) -> &[u8] {
        match &self.content {
            BoxContent::Children { prefix, .. } => prefix,
            BoxContent::Data(_) => &[],
        }
    }

    /// First direct child with the given code.
    pub fn child(&self, fourcc: &[u8; 4]) -> Option<&Mp4Box> {
        self.children().iter().find(|b| b.fourcc == fourcc)
    }

    pub fn children_of<'a>(&'a self, fourcc: &'a [u8; 4]) -> impl Iterator<Item = &'a Mp4Box> + 'a {
        self.children().iter().filter(move |b| b.fourcc == fourcc)
    }

    /// Follow a path of child codes from this box.
    pub fn descend(&self, path: &[&[u8; 4]]) -> Option<&Mp4Box> {
        path.iter().try_fold(self, |b, code| b.child(code))
    }

    /// Version and flags of a full box, read from the first four payload bytes.
    pub fn full_header(&self) -> Option<(u8, u32)> {
        let d = match &self.content {
            BoxContent::Data(d) => d.as_slice(),
            BoxContent::Children { prefix, .. } => prefix.as_slice(),
        };
        (d.len() >= 4).then(|| (d[0], u32::from_be_bytes([0, d[1], d[2], d[3]])))
    }

    fn write(&self, out: &mut Vec<u8>, allow_to_end: bool) -> Result<(), IsobmffError> {
        let size = self.size();
        match self.header {
            HeaderForm::Compact => {
                let size32 = u32::try_from(size)
                    .map_err(|_| IsobmffError::SizeOverflow { fourcc: self.fourcc, size })?;
                out.extend_from_slice(&size32.to_be_bytes());
                out.extend_from_slice(&self.fourcc.0);
            }
            HeaderForm::Large => {
                out.extend_from_slice(&1u32.to_be_bytes());
                out.extend_from_slice(&self.fourcc.0);
                out.extend_from_slice(&size.to_be_bytes());
            }
            HeaderForm::ToEnd => {
                if !allow_to_end {
                    return Err(IsobmffError::MisplacedToEndBox { fourcc: self.fourcc });
                }
                out.extend_from_slice(&0u32.to_be_bytes());
                out.extend_from_slice(&self.fourcc.0);
            }
        }
        match &self.content {
            BoxContent::Data(d) => out.extend_from_slice(d),
            BoxContent::Children { prefix, children } => {
                out.extend_from_slice(prefix);
                for c in children {
                    c.write(out, false)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IsobmffError> {
        let mut out = Vec::with_capacity(self.size() as usize);
        self.write(&mut out, false)?;
        Ok(out)
    }
}

impl BoxTree {
    pub fn find(&self, fourcc: &[u8; 4]) -> Option<&Mp4Box> {
        self.boxes.iter().find(|b| b.fourcc == fourcc)
    }

    pub fn find_all<'a>(&'a self, fourcc: &'a [u8; 4]) -> impl Iterator<Item = &'a Mp4Box> + 'a {
        self.boxes.iter().filter(move |b| b.fourcc == fourcc)
    }

    /// Top-level boxes paired with their byte offset in the serialized form.
    pub fn with_offsets(&self) -> Vec<(u64, &Mp4Box)> {
        let mut off = 0;
        self.boxes
            .iter()
            .map(|b| {
                let at = off;
                off += b.size();
                (at, b)
            })
            .collect()
    }
}

/// Parse a complete byte buffer into a box tree. Unknown boxes are kept as
/// opaque payloads.
pub fn parse_box_tree(bytes: &[u8]) -> Result<BoxTree, IsobmffError> {
    if bytes.is_empty() {
        return Err(IsobmffError::EmptyInput);
    }
    Ok(BoxTree {
        boxes: parse_boxes(bytes, 0, true, None)?,
    })
}

pub fn serialize_box_tree(tree: &BoxTree) -> Result<Vec<u8>, IsobmffError> {
    let mut out = Vec::with_capacity(tree.boxes.iter().map(|b| b.size() as usize).sum());
    let last = tree.boxes.len().saturating_sub(1);
    for (i, b) in tree.boxes.iter().enumerate() {
        b.write(&mut out, i == last)?;
    }
    Ok(out)
}

fn parse_boxes(
    buf: &[u8],
    base: usize,
    top_level: bool,
    parent: Option<FourCc>,
) -> Result<Vec<Mp4Box>, IsobmffError> {
    let mut boxes = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let offset = base + pos;
        let remaining = buf.len() - pos;
        if remaining < 8 {
            return Err(IsobmffError::TruncatedBox {
                offset,
                declared: 8,
                available: remaining as u64,
            });
        }
        let b = &buf[pos..];
        let size32 = u32::from_be_bytes([b[0], b[1], b[2], b[3]]);
        let fourcc = FourCc([b[4], b[5], b[6], b[7]]);
        let (size, header) = match size32 {
            0 if top_level => (remaining as u64, HeaderForm::ToEnd),
            0 => return Err(IsobmffError::ZeroSizeLoop { offset, fourcc }),
            1 => {
                if remaining < 16 {
                    return Err(IsobmffError::TruncatedBox {
                        offset,
                        declared: 16,
                        available: remaining as u64,
                    });
                }
                let mut large = [0u8; 8];
                large.copy_from_slice(&b[8..16]);
                let large = u64::from_be_bytes(large);
                if large < 16 {
                    return Err(IsobmffError::InvalidBoxSize { offset, fourcc, size: large });
                }
                (large, HeaderForm::Large)
            }
            2..=7 => {
                return Err(IsobmffError::InvalidBoxSize {
                    offset,
                    fourcc,
                    size: size32 as u64,
                })
            }
            s => (s as u64, HeaderForm::Compact),
        };
        if size > remaining as u64 {
            return Err(IsobmffError::TruncatedBox {
                offset,
                declared: size,
                available: remaining as u64,
            });
        }
        let size = size as usize;
        let hlen = header.header_len();
        let body = &b[hlen..size];
        let content = match container_prefix(fourcc, parent) {
            Some(p) if body.len() >= p => BoxContent::Children {
                prefix: body[..p].to_vec(),
                children: parse_boxes(&body[p..], offset + hlen + p, false, Some(fourcc))?,
            },
            _ => BoxContent::Data(body.to_vec()),
        };
        boxes.push(Mp4Box { fourcc, header, content });
        pos += size;
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_box(code: &[u8; 4], payload: &[u8]) -> Vec<u8> {
        let mut v = ((payload.len() + 8) as u32).to_be_bytes().to_vec();
        v.extend_from_slice(code);
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn ftyp_and_free() {
        let mut bytes = raw_box(b"ftyp", b"isom\0\0\0\0");
        bytes.extend(raw_box(b"free", b""));
        let tree = parse_box_tree(&bytes).unwrap();
        assert_eq!(tree.boxes.len(), 2);
        assert_eq!(tree.boxes[0].size(), 16);
        assert_eq!(tree.boxes[1].size(), 8);
        assert_eq!(serialize_box_tree(&tree).unwrap(), bytes);
    }

    #[test]
    fn truncated_box() {
        let mut bytes = 100u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(b"mdat");
        bytes.resize(50, 0xAA);
        match parse_box_tree(&bytes) {
            Err(IsobmffError::TruncatedBox { offset: 0, declared: 100, available: 50 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_tree_serializes_to_nothing() {
        assert!(serialize_box_tree(&BoxTree::default()).unwrap().is_empty());
    }

    #[test]
    fn mdat_with_four_bytes() {
        let tree = BoxTree {
            boxes: vec![Mp4Box::leaf(b"mdat", vec![1, 2, 3, 4])],
        };
        assert_eq!(serialize_box_tree(&tree).unwrap().len(), 12);
    }

    #[test]
    fn zero_size_inside_container_is_rejected() {
        let mut inner = 0u32.to_be_bytes().to_vec();
        inner.extend_from_slice(b"free");
        let bytes = raw_box(b"moov", &inner);
        assert!(matches!(
            parse_box_tree(&bytes),
            Err(IsobmffError::ZeroSizeLoop { offset: 8, .. })
        ));
    }

    #[test]
    fn zero_size_at_top_level_runs_to_end() {
        let mut bytes = raw_box(b"ftyp", b"isom");
        bytes.extend_from_slice(&0u32.to_be_bytes());
        bytes.extend_from_slice(b"mdat");
        bytes.extend_from_slice(&[9; 5]);
        let tree = parse_box_tree(&bytes).unwrap();
        assert_eq!(tree.boxes[1].header, HeaderForm::ToEnd);
        assert_eq!(tree.boxes[1].data().unwrap(), &[9; 5]);
        assert_eq!(serialize_box_tree(&tree).unwrap(), bytes);
    }

    #[test]
    fn to_end_box_must_be_last() {
        let mut b = Mp4Box::leaf(b"mdat", vec![]);
        b.header = HeaderForm::ToEnd;
        let tree = BoxTree {
            boxes: vec![b, Mp4Box::leaf(b"free", vec![])],
        };
        assert!(matches!(
            serialize_box_tree(&tree),
            Err(IsobmffError::MisplacedToEndBox { .. })
        ));
    }

    #[test]
    fn large_size_round_trip() {
        let mut bytes = 1u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(b"mdat");
        bytes.extend_from_slice(&19u64.to_be_bytes());
        bytes.extend_from_slice(&[7, 7, 7]);
        let tree = parse_box_tree(&bytes).unwrap();
        assert_eq!(tree.boxes[0].header, HeaderForm::Large);
        assert_eq!(tree.boxes[0].size(), 19);
        assert_eq!(serialize_box_tree(&tree).unwrap(), bytes);
    }

    #[test]
    fn size_one_without_largesize() {
        let mut bytes = 1u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(b"mdat");
        bytes.extend_from_slice(&[0, 0]);
        assert!(matches!(
            parse_box_tree(&bytes),
            Err(IsobmffError::TruncatedBox { declared: 16, .. })
        ));
    }

    #[test]
    fn containers_are_descended() {
        let trak = raw_box(b"trak", &raw_box(b"tkhd", &[0; 4]));
        let moov = raw_box(b"moov", &[raw_box(b"mvhd", &[1; 4]), trak].concat());
        let tree = parse_box_tree(&moov).unwrap();
        let m = &tree.boxes[0];
        assert_eq!(m.children().len(), 2);
        let trak = m.child(b"trak").unwrap();
        assert_eq!(trak.size(), trak.header_len() as u64 + trak.children()[0].size());
        assert!(m.descend(&[b"trak", b"tkhd"]).is_some());
    }

    #[test]
    fn unknown_boxes_stay_opaque() {
        let bytes = raw_box(b"zzzz", &raw_box(b"free", b""));
        let tree = parse_box_tree(&bytes).unwrap();
        assert_eq!(tree.boxes[0].data().unwrap().len(), 8);
    }

    #[test]
    fn fourcc_display_escapes_binary() {
        assert_eq!(FourCc(*b"moov").to_string(), "moov");
        assert_eq!(FourCc([0, b'a', b'b', b'c']).to_string(), "\\x00abc");
    }
}
