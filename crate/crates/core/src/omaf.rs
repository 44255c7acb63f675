//! OMAF file-format metadata: projection format (`prfr`), region-wise packing
//! (`rwpk`), content coverage (`covi`) and sphere-region quality ranking
//! (`srqr`). Parsers take the full-box payload (version and flags included).
//! Angles are stored in the boxes in units of 2^-16 degrees and exposed here
//! in degrees.

use serde::Serialize;
use thiserror::Error;

use crate::bytes::{put_i32, put_u16, put_u32, Reader, ShortRead};
use crate::isobmff::Mp4Box;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OmafError {
    #[error("'{fourcc}' payload too short: field at offset {offset} needs {wanted} bytes")]
    Truncated { fourcc: &'static str, offset: usize, wanted: usize },
    #[error("unsupported projection type {0}")]
    UnsupportedProjection(u8),
    #[error("unknown transform type {0}")]
    UnknownTransform(u8),
    #[error("packed regions {first} and {second} overlap")]
    OverlappingPackedRegions { first: usize, second: usize },
    #[error("region {index} lies outside the {picture} picture")]
    RegionOutOfBounds { index: usize, picture: &'static str },
    #[error("region {index} has zero width or height")]
    ZeroSizeRegion { index: usize },
    #[error("region {index} uses guard bands, which are not supported")]
    GuardBandsUnsupported { index: usize },
    #[error("region {index} has unsupported packing type {packing_type}")]
    UnsupportedPackingType { index: usize, packing_type: u8 },
    #[error("coverage box lists no regions")]
    EmptyCoverage,
    #[error("quality ranking box lists no regions")]
    EmptyRanking,
    #[error("unsupported sphere region shape type {0}")]
    UnsupportedShape(u8),
    #[error("quality ranking in the manifest and in the init segment disagree")]
    SrqrConflict,
}

impl OmafError {
    pub fn kind(&self) -> &'static str {
        match self {
            OmafError::Truncated { .. } => "Truncated",
            OmafError::UnsupportedProjection(_) => "UnsupportedProjection",
            OmafError::UnknownTransform(_) => "UnknownTransform",
            OmafError::OverlappingPackedRegions { .. } => "OverlappingPackedRegions",
            OmafError::RegionOutOfBounds { .. } => "RegionOutOfBounds",
            OmafError::ZeroSizeRegion { .. } => "ZeroSizeRegion",
            OmafError::GuardBandsUnsupported { .. } => "GuardBandsUnsupported",
            OmafError::UnsupportedPackingType { .. } => "UnsupportedPackingType",
            OmafError::EmptyCoverage => "EmptyCoverage",
            OmafError::EmptyRanking => "EmptyRanking",
            OmafError::UnsupportedShape(_) => "UnsupportedShape",
            OmafError::SrqrConflict => "SrqrConflict",
        }
    }
}

fn truncated(fourcc: &'static str) -> impl Fn(ShortRead) -> OmafError {
    move |e| OmafError::Truncated {
        fourcc,
        offset: e.offset,
        wanted: e.wanted,
    }
}

const ANGLE_UNIT: f64 = 65536.0;

fn angle_from_units(v: i32) -> f64 {
    v as f64 / ANGLE_UNIT
}

fn range_from_units(v: u32) -> f64 {
    v as f64 / ANGLE_UNIT
}

fn angle_to_units(deg: f64) -> i32 {
    (deg * ANGLE_UNIT).round() as i32
}

fn range_to_units(deg: f64) -> u32 {
    (deg * ANGLE_UNIT).round() as u32
}

fn full_box_header(out: &mut Vec<u8>) {
    out.extend_from_slice(&[0, 0, 0, 0]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProjectionFormat {
    #[serde(rename = "ERP")]
    Erp,
    #[serde(rename = "CMP")]
    Cmp,
}

impl ProjectionFormat {
    pub fn from_code(code: u8) -> Result<Self, OmafError> {
        match code {
            0 => Ok(ProjectionFormat::Erp),
            1 => Ok(ProjectionFormat::Cmp),
            other => Err(OmafError::UnsupportedProjection(other)),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ProjectionFormat::Erp => 0,
            ProjectionFormat::Cmp => 1,
        }
    }

    pub fn to_box(self) -> Mp4Box {
        let mut data = Vec::with_capacity(5);
        full_box_header(&mut data);
        data.push(self.code() & 0x1f);
        Mp4Box::leaf(b"prfr", data)
    }
}

/// Decode a `prfr` payload.
pub fn parse_projection(payload: &[u8]) -> Result<ProjectionFormat, OmafError> {
    let mut r = Reader::new(payload);
    r.skip(4).map_err(truncated("prfr"))?;
    ProjectionFormat::from_code(r.u8().map_err(truncated("prfr"))? & 0x1f)
}

/// Rotation/mirroring applied to a projected region to obtain its packed
/// region. `apply` maps normalized projected coordinates (y down) to
/// normalized packed coordinates; `invert` goes the other way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(into = "u8")]
pub enum Transform {
    Identity = 0,
    Mirror = 1,
    Rotate180 = 2,
    Rotate180Mirror = 3,
    Rotate90Mirror = 4,
    Rotate90 = 5,
    Rotate270Mirror = 6,
    Rotate270 = 7,
}

impl From<Transform> for u8 {
    fn from(t: Transform) -> u8 {
        t as u8
    }
}

impl Transform {
    pub const ALL: [Transform; 8] = [
        Transform::Identity,
        Transform::Mirror,
        Transform::Rotate180,
        Transform::Rotate180Mirror,
        Transform::Rotate90Mirror,
        Transform::Rotate90,
        Transform::Rotate270Mirror,
        Transform::Rotate270,
    ];

    pub fn from_code(code: u8) -> Result<Self, OmafError> {
        Transform::ALL
            .get(code as usize)
            .copied()
            .ok_or(OmafError::UnknownTransform(code))
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// True for the 90/270 degree family, where packed width corresponds to
    /// projected height.
    pub fn swaps_axes(self) -> bool {
        self.code() >= 4
    }

    pub fn apply(self, u: f64, v: f64) -> (f64, f64) {
        match self {
            Transform::Identity => (u, v),
            Transform::Mirror => (1.0 - u, v),
            Transform::Rotate180 => (1.0 - u, 1.0 - v),
            Transform::Rotate180Mirror => (u, 1.0 - v),
            Transform::Rotate90Mirror => (1.0 - v, 1.0 - u),
            Transform::Rotate90 => (v, 1.0 - u),
            Transform::Rotate270Mirror => (v, u),
            Transform::Rotate270 => (1.0 - v, u),
        }
    }

    pub fn inverse(self) -> Transform {
        match self {
            Transform::Rotate90 => Transform::Rotate270,
            Transform::Rotate270 => Transform::Rotate90,
            other => other,
        }
    }

    pub fn invert(self, u: f64, v: f64) -> (f64, f64) {
        self.inverse().apply(u, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PackedRegion {
    pub proj_x: u32,
    pub proj_y: u32,
    pub proj_w: u32,
    pub proj_h: u32,
    pub packed_x: u32,
    pub packed_y: u32,
    pub packed_w: u32,
    pub packed_h: u32,
    pub transform: Transform,
}

impl PackedRegion {
    fn packed_overlaps(&self, other: &PackedRegion) -> bool {
        self.packed_x < other.packed_x + other.packed_w
            && other.packed_x < self.packed_x + self.packed_w
            && self.packed_y < other.packed_y + other.packed_h
            && other.packed_y < self.packed_y + self.packed_h
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegionWisePacking {
    pub proj_width: u32,
    pub proj_height: u32,
    pub packed_width: u32,
    pub packed_height: u32,
    pub regions: Vec<PackedRegion>,
}

impl RegionWisePacking {
    /// One full-picture region, packed picture equal to the projected one.
    pub fn identity(width: u32, height: u32) -> Self {
        RegionWisePacking {
            proj_width: width,
            proj_height: height,
            packed_width: width,
            packed_height: height,
            regions: vec![PackedRegion {
                proj_x: 0,
                proj_y: 0,
                proj_w: width,
                proj_h: height,
                packed_x: 0,
                packed_y: 0,
                packed_w: width,
                packed_h: height,
                transform: Transform::Identity,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), OmafError> {
        for (index, r) in self.regions.iter().enumerate() {
            if r.proj_w == 0 || r.proj_h == 0 || r.packed_w == 0 || r.packed_h == 0 {
                return Err(OmafError::ZeroSizeRegion { index });
            }
            let fits = |x: u32, w: u32, limit: u32| x as u64 + w as u64 <= limit as u64;
            if !fits(r.proj_x, r.proj_w, self.proj_width) || !fits(r.proj_y, r.proj_h, self.proj_height) {
                return Err(OmafError::RegionOutOfBounds { index, picture: "projected" });
            }
            if !fits(r.packed_x, r.packed_w, self.packed_width) || !fits(r.packed_y, r.packed_h, self.packed_height) {
                return Err(OmafError::RegionOutOfBounds { index, picture: "packed" });
            }
        }
        for (i, a) in self.regions.iter().enumerate() {
            if let Some(j) = self.regions[i + 1..].iter().position(|b| a.packed_overlaps(b)) {
                return Err(OmafError::OverlappingPackedRegions { first: i, second: i + 1 + j });
            }
        }
        Ok(())
    }

    pub fn to_box(&self) -> Mp4Box {
        let mut d = Vec::with_capacity(20 + 21 * self.regions.len());
        full_box_header(&mut d);
        d.push(0);
        d.push(self.regions.len() as u8);
        put_u32(&mut d, self.proj_width);
        put_u32(&mut d, self.proj_height);
        put_u16(&mut d, self.packed_width as u16);
        put_u16(&mut d, self.packed_height as u16);
        for r in &self.regions {
            d.push(0); // no guard band, packing_type 0
            put_u32(&mut d, r.proj_w);
            put_u32(&mut d, r.proj_h);
            put_u32(&mut d, r.proj_y);
            put_u32(&mut d, r.proj_x);
            d.push(r.transform.code() << 5);
            put_u16(&mut d, r.packed_w as u16);
            put_u16(&mut d, r.packed_h as u16);
            put_u16(&mut d, r.packed_y as u16);
            put_u16(&mut d, r.packed_x as u16);
        }
        Mp4Box::leaf(b"rwpk", d)
    }
}

/// Decode and validate an `rwpk` payload.
pub fn parse_rwpk(payload: &[u8]) -> Result<RegionWisePacking, OmafError> {
    let t = truncated("rwpk");
    let mut r = Reader::new(payload);
    r.skip(4).map_err(&t)?;
    r.skip(1).map_err(&t)?; // constituent_picture_matching_flag
    let num_regions = r.u8().map_err(&t)?;
    let proj_width = r.u32().map_err(&t)?;
    let proj_height = r.u32().map_err(&t)?;
    let packed_width = r.u16().map_err(&t)? as u32;
    let packed_height = r.u16().map_err(&t)? as u32;
    let mut regions = Vec::with_capacity(num_regions as usize);
    for index in 0..num_regions as usize {
        let b = r.u8().map_err(&t)?;
        if b & 0x10 != 0 {
            return Err(OmafError::GuardBandsUnsupported { index });
        }
        let packing_type = b & 0x0f;
        if packing_type != 0 {
            return Err(OmafError::UnsupportedPackingType { index, packing_type });
        }
        let proj_w = r.u32().map_err(&t)?;
        let proj_h = r.u32().map_err(&t)?;
        let proj_y = r.u32().map_err(&t)?;
        let proj_x = r.u32().map_err(&t)?;
        let transform = Transform::from_code(r.u8().map_err(&t)? >> 5)?;
        let packed_w = r.u16().map_err(&t)? as u32;
        let packed_h = r.u16().map_err(&t)? as u32;
        let packed_y = r.u16().map_err(&t)? as u32;
        let packed_x = r.u16().map_err(&t)? as u32;
        regions.push(PackedRegion {
            proj_x,
            proj_y,
            proj_w,
            proj_h,
            packed_x,
            packed_y,
            packed_w,
            packed_h,
            transform,
        });
    }
    let rwpk = RegionWisePacking {
        proj_width,
        proj_height,
        packed_width,
        packed_height,
        regions,
    };
    rwpk.validate()?;
    Ok(rwpk)
}

/// How the boundary of a sphere region is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionShape {
    /// Four great circles through the region edges.
    GreatCircles = 0,
    /// Two azimuth circles and two elevation circles.
    AzElCircles = 1,
}

impl RegionShape {
    pub fn from_code(code: u8) -> Result<Self, OmafError> {
        match code {
            0 => Ok(RegionShape::GreatCircles),
            1 => Ok(RegionShape::AzElCircles),
            other => Err(OmafError::UnsupportedShape(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereRegion {
    pub center_azimuth: f64,
    pub center_elevation: f64,
    pub center_tilt: f64,
    pub azimuth_range: f64,
    pub elevation_range: f64,
}

impl SphereRegion {
    pub fn full_sphere() -> Self {
        SphereRegion {
            center_azimuth: 0.0,
            center_elevation: 0.0,
            center_tilt: 0.0,
            azimuth_range: 360.0,
            elevation_range: 180.0,
        }
    }

    /// Round-trips the region through the fixed-point box representation.
    pub fn quantized(&self) -> Self {
        SphereRegion {
            center_azimuth: angle_from_units(angle_to_units(self.center_azimuth)),
            center_elevation: angle_from_units(angle_to_units(self.center_elevation)),
            center_tilt: angle_from_units(angle_to_units(self.center_tilt)),
            azimuth_range: range_from_units(range_to_units(self.azimuth_range)),
            elevation_range: range_from_units(range_to_units(self.elevation_range)),
        }
    }

    fn read(r: &mut Reader, fourcc: &'static str) -> Result<Self, OmafError> {
        let t = truncated(fourcc);
        let region = SphereRegion {
            center_azimuth: angle_from_units(r.i32().map_err(&t)?),
            center_elevation: angle_from_units(r.i32().map_err(&t)?),
            center_tilt: angle_from_units(r.i32().map_err(&t)?),
            azimuth_range: range_from_units(r.u32().map_err(&t)?),
            elevation_range: range_from_units(r.u32().map_err(&t)?),
        };
        r.skip(1).map_err(&t)?; // interpolate
        Ok(region)
    }

    fn write(&self, out: &mut Vec<u8>) {
        put_i32(out, angle_to_units(self.center_azimuth));
        put_i32(out, angle_to_units(self.center_elevation));
        put_i32(out, angle_to_units(self.center_tilt));
        put_u32(out, range_to_units(self.azimuth_range));
        put_u32(out, range_to_units(self.elevation_range));
        out.push(0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub shape: RegionShape,
    pub regions: Vec<SphereRegion>,
}

impl Coverage {
    pub fn to_box(&self) -> Mp4Box {
        let mut d = Vec::with_capacity(7 + 21 * self.regions.len());
        full_box_header(&mut d);
        d.push(self.shape as u8);
        d.push(self.regions.len() as u8);
        d.push(0); // no per-region view_idc, default_view_idc 0
        for region in &self.regions {
            region.write(&mut d);
        }
        Mp4Box::leaf(b"covi", d)
    }
}

/// Decode a `covi` payload.
pub fn parse_coverage(payload: &[u8]) -> Result<Coverage, OmafError> {
    let t = truncated("covi");
    let mut r = Reader::new(payload);
    r.skip(4).map_err(&t)?;
    let shape = RegionShape::from_code(r.u8().map_err(&t)?)?;
    let num_regions = r.u8().map_err(&t)?;
    let view_idc_present = r.u8().map_err(&t)? & 0x80 != 0;
    if num_regions == 0 {
        return Err(OmafError::EmptyCoverage);
    }
    let mut regions = Vec::with_capacity(num_regions as usize);
    for _ in 0..num_regions {
        if view_idc_present {
            r.skip(1).map_err(&t)?;
        }
        regions.push(SphereRegion::read(&mut r, "covi")?);
    }
    Ok(Coverage { shape, regions })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityEntry {
    /// Lower is better.
    pub ranking: u8,
    /// `None` for the trailing "remaining area" entry, which has no region.
    pub region: Option<SphereRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityRanking {
    pub shape: RegionShape,
    pub entries: Vec<QualityEntry>,
}

impl QualityRanking {
    /// First coded entry with the minimal ranking among entries that carry a
    /// region.
    pub fn best_region(&self) -> Option<&SphereRegion> {
        let mut best: Option<(u8, &SphereRegion)> = None;
        for e in &self.entries {
            if let Some(region) = &e.region {
                if best.is_none_or(|(rank, _)| e.ranking < rank) {
                    best = Some((e.ranking, region));
                }
            }
        }
        best.map(|(_, r)| r)
    }

    pub fn to_box(&self) -> Mp4Box {
        let remaining = self.entries.last().is_some_and(|e| e.region.is_none());
        let mut d = Vec::with_capacity(8 + 22 * self.entries.len());
        full_box_header(&mut d);
        d.push(self.shape as u8);
        d.push(self.entries.len() as u8);
        d.push(if remaining { 0x80 } else { 0 });
        d.push(0); // default_view_idc
        for e in &self.entries {
            d.push(e.ranking);
            if let Some(region) = &e.region {
                region.write(&mut d);
            }
        }
        Mp4Box::leaf(b"srqr", d)
    }
}

/// Decode an `srqr` payload.
pub fn parse_srqr(payload: &[u8]) -> Result<QualityRanking, OmafError> {
    let t = truncated("srqr");
    let mut r = Reader::new(payload);
    r.skip(4).map_err(&t)?;
    if r.is_empty() {
        return Err(OmafError::EmptyRanking);
    }
    let shape = RegionShape::from_code(r.u8().map_err(&t)?)?;
    let num_regions = r.u8().map_err(&t)? as usize;
    if num_regions == 0 {
        return Err(OmafError::EmptyRanking);
    }
    let flags = r.u8().map_err(&t)?;
    let remaining_area = flags & 0x80 != 0;
    let view_idc_present = flags & 0x40 != 0;
    let local_size = flags & 0x20 != 0;
    let quality_type = (flags >> 1) & 0x0f;
    if !view_idc_present {
        r.skip(1).map_err(&t)?;
    }
    let mut entries = Vec::with_capacity(num_regions);
    for i in 0..num_regions {
        let ranking = r.u8().map_err(&t)?;
        if view_idc_present {
            r.skip(1).map_err(&t)?;
        }
        if quality_type == 1 && (local_size || i == 0) {
            r.skip(4).map_err(&t)?; // orig_width, orig_height
        }
        let region = if i + 1 < num_regions || !remaining_area {
            Some(SphereRegion::read(&mut r, "srqr")?)
        } else {
            None
        };
        entries.push(QualityEntry { ranking, region });
    }
    Ok(QualityRanking { shape, entries })
}

/// Merge quality rankings found in the manifest and in the init segment.
/// Either may be absent; when both are present they must agree.
pub fn reconcile_srqr(
    manifest: Option<&QualityRanking>,
    init: Option<&QualityRanking>,
) -> Result<Option<QualityRanking>, OmafError> {
    match (manifest, init) {
        (Some(a), Some(b)) if a != b => Err(OmafError::SrqrConflict),
        (Some(a), _) => Ok(Some(a.clone())),
        (None, b) => Ok(b.cloned()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn payload(b: Mp4Box) -> Vec<u8> {
        b.data().unwrap().to_vec()
    }

    #[test]
    fn projection_codes() {
        assert_eq!(parse_projection(&[0, 0, 0, 0, 0]), Ok(ProjectionFormat::Erp));
        assert_eq!(parse_projection(&[0, 0, 0, 0, 1]), Ok(ProjectionFormat::Cmp));
        assert_eq!(parse_projection(&[0, 0, 0, 0, 7]), Err(OmafError::UnsupportedProjection(7)));
        assert_eq!(parse_projection(&payload(ProjectionFormat::Cmp.to_box())), Ok(ProjectionFormat::Cmp));
    }

    #[test]
    fn identity_packing_round_trip() {
        let rwpk = RegionWisePacking::identity(3840, 1920);
        assert_eq!(parse_rwpk(&payload(rwpk.to_box())), Ok(rwpk));
    }

    fn region(px: u32, py: u32, w: u32, h: u32, t: Transform) -> PackedRegion {
        PackedRegion {
            proj_x: 0,
            proj_y: 0,
            proj_w: 64,
            proj_h: 64,
            packed_x: px,
            packed_y: py,
            packed_w: w,
            packed_h: h,
            transform: t,
        }
    }

    #[test]
    fn overlapping_packed_regions() {
        let rwpk = RegionWisePacking {
            proj_width: 128,
            proj_height: 128,
            packed_width: 128,
            packed_height: 128,
            regions: vec![
                region(0, 0, 64, 64, Transform::Identity),
                region(63, 0, 64, 64, Transform::Identity),
            ],
        };
        assert_eq!(
            parse_rwpk(&payload(rwpk.to_box())),
            Err(OmafError::OverlappingPackedRegions { first: 0, second: 1 })
        );
    }

    #[test]
    fn region_outside_packed_picture() {
        let rwpk = RegionWisePacking {
            proj_width: 128,
            proj_height: 128,
            packed_width: 64,
            packed_height: 64,
            regions: vec![region(32, 0, 64, 64, Transform::Identity)],
        };
        assert_eq!(
            rwpk.validate(),
            Err(OmafError::RegionOutOfBounds { index: 0, picture: "packed" })
        );
    }

    #[test]
    fn guard_bands_and_transform_codes() {
        let mut bytes = payload(RegionWisePacking::identity(64, 64).to_box());
        // region header byte follows 4 + 1 + 1 + 8 + 4 bytes
        bytes[18] = 0x10;
        assert_eq!(parse_rwpk(&bytes), Err(OmafError::GuardBandsUnsupported { index: 0 }));
        assert_eq!(Transform::from_code(8), Err(OmafError::UnknownTransform(8)));
    }

    #[test]
    fn transform_inverses() {
        for t in Transform::ALL {
            for &(u, v) in &[(0.25, 0.75), (0.0, 1.0), (0.6, 0.1)] {
                let (a, b) = t.apply(u, v);
                let (x, y) = t.invert(a, b);
                assert!((x - u).abs() < 1e-15 && (y - v).abs() < 1e-15, "{t:?}");
            }
        }
    }

    #[test]
    fn coverage_round_trip() {
        let cov = Coverage {
            shape: RegionShape::AzElCircles,
            regions: vec![SphereRegion {
                center_azimuth: -90.0,
                center_elevation: 0.0,
                center_tilt: 0.0,
                azimuth_range: 180.0,
                elevation_range: 180.0,
            }],
        };
        assert_eq!(parse_coverage(&payload(cov.to_box())), Ok(cov));
        let empty = Coverage { shape: RegionShape::GreatCircles, regions: vec![] };
        assert_eq!(parse_coverage(&payload(empty.to_box())), Err(OmafError::EmptyCoverage));
    }

    #[test]
    fn full_sphere_coverage() {
        let cov = Coverage { shape: RegionShape::GreatCircles, regions: vec![SphereRegion::full_sphere()] };
        let back = parse_coverage(&payload(cov.to_box())).unwrap();
        assert_eq!(back.regions[0].center_azimuth, 0.0);
        assert_eq!(back.regions[0].azimuth_range, 360.0);
    }

    #[test]
    fn srqr_entries_and_remaining_area() {
        let at = |az: f64| SphereRegion {
            center_azimuth: az,
            center_elevation: 0.0,
            center_tilt: 0.0,
            azimuth_range: 90.0,
            elevation_range: 90.0,
        };
        let q = QualityRanking {
            shape: RegionShape::AzElCircles,
            entries: vec![
                QualityEntry { ranking: 1, region: Some(at(90.0)) },
                QualityEntry { ranking: 1, region: Some(at(0.0)) },
                QualityEntry { ranking: 2, region: None },
            ],
        };
        let back = parse_srqr(&payload(q.to_box())).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.best_region().unwrap().center_azimuth, 90.0);
        assert_eq!(parse_srqr(&[0, 0, 0, 0]), Err(OmafError::EmptyRanking));
    }

    #[test]
    fn srqr_reconciliation() {
        let q = QualityRanking { shape: RegionShape::AzElCircles, entries: vec![QualityEntry { ranking: 1, region: None }] };
        let mut other = q.clone();
        other.entries[0].ranking = 2;
        assert_eq!(reconcile_srqr(Some(&q), None), Ok(Some(q.clone())));
        assert_eq!(reconcile_srqr(None, Some(&q)), Ok(Some(q.clone())));
        assert_eq!(reconcile_srqr(Some(&q), Some(&q)), Ok(Some(q.clone())));
        assert_eq!(reconcile_srqr(Some(&q), Some(&other)), Err(OmafError::SrqrConflict));
    }

    proptest! {
        #[test]
        fn packing_round_trips(
            cols in 1u32..6, rows in 1u32..6, cell in 1u32..200,
            codes in proptest::collection::vec(0u8..8, 36),
        ) {
            let mut regions = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let t = Transform::from_code(codes[(r * cols + c) as usize]).unwrap();
                    regions.push(PackedRegion {
                        proj_x: c * cell * 2, proj_y: r * cell * 2, proj_w: cell * 2, proj_h: cell * 2,
                        packed_x: c * cell, packed_y: r * cell, packed_w: cell, packed_h: cell,
                        transform: t,
                    });
                }
            }
            let rwpk = RegionWisePacking {
                proj_width: cols * cell * 2, proj_height: rows * cell * 2,
                packed_width: cols * cell, packed_height: rows * cell, regions,
            };
            let back = parse_rwpk(&payload(rwpk.to_box())).unwrap();
            let area: u64 = back.regions.iter().map(|r| r.packed_w as u64 * r.packed_h as u64).sum();
            prop_assert_eq!(area, back.packed_width as u64 * back.packed_height as u64);
            prop_assert_eq!(back, rwpk);
        }

        #[test]
        fn sphere_regions_round_trip(az in -180.0f64..180.0, el in -90.0f64..90.0, ar in 0.01f64..360.0, er in 0.01f64..180.0) {
            let region = SphereRegion { center_azimuth: az, center_elevation: el, center_tilt: 0.0, azimuth_range: ar, elevation_range: er }.quantized();
            let cov = Coverage { shape: RegionShape::GreatCircles, regions: vec![region] };
            prop_assert_eq!(parse_coverage(&payload(cov.to_box())).unwrap(), cov);
        }
    }
}
