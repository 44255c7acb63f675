//! Pure geometry: region-wise packing maps, ERP and CMP projection math, the
//! cube mesh used for rendering, great-circle distances and viewport-driven
//! track selection.
//!
//! Directions use x forward, y left, z up. Azimuth grows to the left and
//! elevation upward; both are in degrees. Pixel coordinates are continuous
//! with the origin at the top-left corner and y pointing down.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::omaf::{PackedRegion, QualityRanking, RegionShape, RegionWisePacking, SphereRegion};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("pixel ({x}, {y}) is not inside any region")]
    NotInAnyRegion { x: f64, y: f64 },
    #[error("direction vector has zero length")]
    ZeroVector,
    #[error("projected picture {width}x{height} is not a 3x2 cube-face layout")]
    BadFaceLayout { width: u32, height: u32 },
    #[error("tiles per face edge must be positive")]
    ZeroTiles,
    #[error("no selectable candidates")]
    NoCandidates,
}

impl GeometryError {
    pub fn kind(&self) -> &'static str {
        match self {
            GeometryError::NotInAnyRegion { .. } => "NotInAnyRegion",
            GeometryError::ZeroVector => "ZeroVector",
            GeometryError::BadFaceLayout { .. } => "BadFaceLayout",
            GeometryError::ZeroTiles => "ZeroTiles",
            GeometryError::NoCandidates => "NoCandidates",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PixelPos {
    pub x: f64,
    pub y: f64,
}

impl PixelPos {
    pub fn new(x: f64, y: f64) -> Self {
        PixelPos { x, y }
    }
}

/// Viewing orientation. Tilt is not used for selection and is not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Viewport {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Viewport {
    /// Azimuth is wrapped into [-180, 180), elevation clamped to [-90, 90].
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Viewport {
            azimuth: normalize_azimuth(azimuth),
            elevation: elevation.clamp(-90.0, 90.0),
        }
    }

    pub fn direction(&self) -> [f64; 3] {
        direction(self.azimuth, self.elevation)
    }
}

pub fn normalize_azimuth(az: f64) -> f64 {
    let a = (az + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if a >= 180.0 {
        a - 360.0
    } else {
        a
    }
}

pub fn direction(azimuth: f64, elevation: f64) -> [f64; 3] {
    let (az, el) = (azimuth.to_radians(), elevation.to_radians());
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

/// Azimuth and elevation of a non-zero vector.
pub fn angles(v: [f64; 3]) -> (f64, f64) {
    let horizontal = v[0].hypot(v[1]);
    (v[1].atan2(v[0]).to_degrees(), v[2].atan2(horizontal).to_degrees())
}

fn rect_contains(x0: u32, y0: u32, w: u32, h: u32, p: PixelPos) -> bool {
    p.x >= x0 as f64 && p.x <= (x0 + w) as f64 && p.y >= y0 as f64 && p.y <= (y0 + h) as f64
}

/// Map a packed-picture position through one region, without a bounds check.
pub fn packed_to_projected_in(region: &PackedRegion, p: PixelPos) -> PixelPos {
    let pu = (p.x - region.packed_x as f64) / region.packed_w as f64;
    let pv = (p.y - region.packed_y as f64) / region.packed_h as f64;
    let (u, v) = region.transform.invert(pu, pv);
    PixelPos {
        x: region.proj_x as f64 + u * region.proj_w as f64,
        y: region.proj_y as f64 + v * region.proj_h as f64,
    }
}

/// Map a projected-picture position through one region, without a bounds check.
pub fn projected_to_packed_in(region: &PackedRegion, p: PixelPos) -> PixelPos {
    let u = (p.x - region.proj_x as f64) / region.proj_w as f64;
    let v = (p.y - region.proj_y as f64) / region.proj_h as f64;
    let (pu, pv) = region.transform.apply(u, v);
    PixelPos {
        x: region.packed_x as f64 + pu * region.packed_w as f64,
        y: region.packed_y as f64 + pv * region.packed_h as f64,
    }
}

/// Index of the first region whose closed packed rectangle holds `p`.
pub fn packed_region_at(rwpk: &RegionWisePacking, p: PixelPos) -> Option<usize> {
    rwpk.regions
        .iter()
        .position(|r| rect_contains(r.packed_x, r.packed_y, r.packed_w, r.packed_h, p))
}

/// Index of the first region whose closed projected rectangle holds `p`.
pub fn projected_region_at(rwpk: &RegionWisePacking, p: PixelPos) -> Option<usize> {
    rwpk.regions
        .iter()
        .position(|r| rect_contains(r.proj_x, r.proj_y, r.proj_w, r.proj_h, p))
}

pub fn map_packed_to_projected(rwpk: &RegionWisePacking, p: PixelPos) -> Result<PixelPos, GeometryError> {
    packed_region_at(rwpk, p)
        .map(|i| packed_to_projected_in(&rwpk.regions[i], p))
        .ok_or(GeometryError::NotInAnyRegion { x: p.x, y: p.y })
}

pub fn map_projected_to_packed(rwpk: &RegionWisePacking, p: PixelPos) -> Result<PixelPos, GeometryError> {
    projected_region_at(rwpk, p)
        .map(|i| projected_to_packed_in(&rwpk.regions[i], p))
        .ok_or(GeometryError::NotInAnyRegion { x: p.x, y: p.y })
}

pub fn sphere_to_erp_pixel(v: Viewport, width: f64, height: f64) -> PixelPos {
    PixelPos {
        x: (0.5 - v.azimuth / 360.0) * width,
        y: (0.5 - v.elevation / 180.0) * height,
    }
}

pub fn erp_pixel_to_sphere(p: PixelPos, width: f64, height: f64) -> Viewport {
    Viewport::new((0.5 - p.x / width) * 360.0, (0.5 - p.y / height) * 180.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpFace {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
}

impl CmpFace {
    /// Also the tie-break precedence at cube edges.
    pub const ALL: [CmpFace; 6] = [
        CmpFace::Front,
        CmpFace::Back,
        CmpFace::Left,
        CmpFace::Right,
        CmpFace::Top,
        CmpFace::Bottom,
    ];

    /// Outward axis of the face.
    pub fn normal(self) -> [f64; 3] {
        match self {
            CmpFace::Front => [1.0, 0.0, 0.0],
            CmpFace::Back => [-1.0, 0.0, 0.0],
            CmpFace::Left => [0.0, 1.0, 0.0],
            CmpFace::Right => [0.0, -1.0, 0.0],
            CmpFace::Top => [0.0, 0.0, 1.0],
            CmpFace::Bottom => [0.0, 0.0, -1.0],
        }
    }

    /// Directions of increasing u and increasing v on the face.
    fn basis(self) -> ([f64; 3], [f64; 3]) {
        match self {
            CmpFace::Front => ([0.0, -1.0, 0.0], [0.0, 0.0, -1.0]),
            CmpFace::Back => ([0.0, 1.0, 0.0], [0.0, 0.0, -1.0]),
            CmpFace::Left => ([1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
            CmpFace::Right => ([-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
            CmpFace::Top => ([0.0, -1.0, 0.0], [1.0, 0.0, 0.0]),
            CmpFace::Bottom => ([0.0, -1.0, 0.0], [-1.0, 0.0, 0.0]),
        }
    }

    /// (column, row) of the face in the 3x2 projected layout.
    pub fn layout_cell(self) -> (u32, u32) {
        match self {
            CmpFace::Left => (0, 0),
            CmpFace::Front => (1, 0),
            CmpFace::Right => (2, 0),
            CmpFace::Bottom => (0, 1),
            CmpFace::Back => (1, 1),
            CmpFace::Top => (2, 1),
        }
    }

    pub fn at_cell(col: u32, row: u32) -> Option<CmpFace> {
        CmpFace::ALL.into_iter().find(|f| f.layout_cell() == (col, row))
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

const FACE_TIE_TOLERANCE: f64 = 1e-12;

/// Cube face hit by `v` and the face-local (u, v) in [0, 1]², u to the right
/// and v downward as seen from inside the cube.
pub fn sphere_to_cmp_face(v: [f64; 3]) -> Result<(CmpFace, f64, f64), GeometryError> {
    let major = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if major == 0.0 || !major.is_finite() {
        return Err(GeometryError::ZeroVector);
    }
    let face = CmpFace::ALL
        .into_iter()
        .find(|f| dot(f.normal(), v) >= major * (1.0 - FACE_TIE_TOLERANCE))
        .ok_or(GeometryError::ZeroVector)?;
    let depth = dot(face.normal(), v);
    let (bu, bv) = face.basis();
    let u = ((dot(bu, v) / depth + 1.0) / 2.0).clamp(0.0, 1.0);
    let w = ((dot(bv, v) / depth + 1.0) / 2.0).clamp(0.0, 1.0);
    Ok((face, u, w))
}

/// Unit direction through face-local (u, v).
pub fn face_uv_to_direction(face: CmpFace, u: f64, v: f64) -> [f64; 3] {
    let n = face.normal();
    let (bu, bv) = face.basis();
    let (a, b) = (2.0 * u - 1.0, 2.0 * v - 1.0);
    let d = [
        n[0] + a * bu[0] + b * bv[0],
        n[1] + a * bu[1] + b * bv[1],
        n[2] + a * bu[2] + b * bv[2],
    ];
    let len = dot(d, d).sqrt();
    [d[0] / len, d[1] / len, d[2] / len]
}

fn check_cmp_layout(width: u32, height: u32) -> Result<(f64, f64), GeometryError> {
    if width == 0 || height == 0 || 2 * width as u64 != 3 * height as u64 {
        return Err(GeometryError::BadFaceLayout { width, height });
    }
    Ok((width as f64 / 3.0, height as f64 / 2.0))
}

/// Projected-picture position of face-local (u, v) in the 3x2 layout.
pub fn cmp_face_to_projected(face: CmpFace, u: f64, v: f64, width: u32, height: u32) -> Result<PixelPos, GeometryError> {
    let (fw, fh) = check_cmp_layout(width, height)?;
    let (col, row) = face.layout_cell();
    Ok(PixelPos {
        x: (col as f64 + u) * fw,
        y: (row as f64 + v) * fh,
    })
}

/// Projected-picture position hit by a viewing direction on a cube map.
pub fn sphere_to_cmp_pixel(v: Viewport, width: u32, height: u32) -> Result<PixelPos, GeometryError> {
    let (face, u, w) = sphere_to_cmp_face(v.direction())?;
    cmp_face_to_projected(face, u, w, width, height)
}

/// Viewing direction of a projected-picture position on a cube map.
pub fn cmp_pixel_to_sphere(p: PixelPos, width: u32, height: u32) -> Result<Viewport, GeometryError> {
    let (fw, fh) = check_cmp_layout(width, height)?;
    let col = ((p.x / fw).floor() as i64).clamp(0, 2) as u32;
    let row = ((p.y / fh).floor() as i64).clamp(0, 1) as u32;
    let face = CmpFace::at_cell(col, row).expect("3x2 layout is complete");
    let u = (p.x / fw - col as f64).clamp(0.0, 1.0);
    let v = (p.y / fh - row as f64).clamp(0.0, 1.0);
    let (az, el) = angles(face_uv_to_direction(face, u, v));
    Ok(Viewport::new(az, el))
}

/// Great-circle distance in degrees.
pub fn angular_distance(a: Viewport, b: Viewport) -> f64 {
    let (ea, eb) = (a.elevation.to_radians(), b.elevation.to_radians());
    let c = ea.sin() * eb.sin() + ea.cos() * eb.cos() * (a.azimuth - b.azimuth).to_radians().cos();
    c.clamp(-1.0, 1.0).acos().to_degrees().clamp(0.0, 180.0)
}

/// Distances closer than this are treated as ties and resolved by id.
pub const SELECTION_TIE_DEGREES: f64 = 1e-9;

/// Orders adaptation-set ids numerically when both parse as integers,
/// otherwise lexicographically; numeric ids sort first.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Pick the candidate with the smallest `distance`; near-ties go to the
/// smallest id.
pub fn select_by<'a, T>(
    candidates: impl IntoIterator<Item = (&'a str, T)>,
    mut distance: impl FnMut(&T) -> f64,
) -> Result<&'a str, GeometryError> {
    let mut best: Option<(&str, f64)> = None;
    for (id, c) in candidates {
        let d = distance(&c);
        best = match best {
            None => Some((id, d)),
            Some((bid, bd)) => {
                if (d - bd).abs() <= SELECTION_TIE_DEGREES {
                    if compare_ids(id, bid) == Ordering::Less {
                        Some((id, d.min(bd)))
                    } else {
                        Some((bid, d.min(bd)))
                    }
                } else if d < bd {
                    Some((id, d))
                } else {
                    Some((bid, bd))
                }
            }
        };
    }
    best.map(|(id, _)| id).ok_or(GeometryError::NoCandidates)
}

/// Choose the extractor adaptation set whose best-quality region centre is
/// closest to the viewport. Candidates without a usable region are skipped.
pub fn select_extractor_track<'a>(
    candidates: impl IntoIterator<Item = (&'a str, &'a QualityRanking)>,
    v: Viewport,
) -> Result<&'a str, GeometryError> {
    let centres = candidates.into_iter().filter_map(|(id, q)| {
        q.best_region()
            .map(|r| (id, Viewport::new(r.center_azimuth, r.center_elevation)))
    });
    select_by(centres, |c| angular_distance(v, *c))
}

const CONTAINS_EPSILON: f64 = 1e-9;

/// Whether (azimuth, elevation) falls inside a sphere region.
pub fn region_contains(shape: RegionShape, region: &SphereRegion, azimuth: f64, elevation: f64) -> bool {
    if region.azimuth_range >= 360.0 && region.elevation_range >= 180.0 {
        return true;
    }
    match shape {
        RegionShape::AzElCircles => {
            let half_el = region.elevation_range / 2.0;
            if elevation < region.center_elevation - half_el - CONTAINS_EPSILON
                || elevation > region.center_elevation + half_el + CONTAINS_EPSILON
            {
                return false;
            }
            if region.azimuth_range >= 360.0 || elevation.abs() >= 90.0 {
                return true;
            }
            let diff = normalize_azimuth(azimuth - region.center_azimuth);
            diff.abs() <= region.azimuth_range / 2.0 + CONTAINS_EPSILON
        }
        RegionShape::GreatCircles => {
            let local = to_local_frame(region, direction(azimuth, elevation));
            let half_az = (region.azimuth_range / 2.0).to_radians();
            let half_el = (region.elevation_range / 2.0).to_radians();
            local[1].atan2(local[0]).abs() <= half_az + CONTAINS_EPSILON
                && local[2].atan2(local[0]).abs() <= half_el + CONTAINS_EPSILON
        }
    }
}

/// Rotate `d` so that the region centre lies on +x with zero tilt.
fn to_local_frame(region: &SphereRegion, d: [f64; 3]) -> [f64; 3] {
    let (a, e, t) = (
        region.center_azimuth.to_radians(),
        region.center_elevation.to_radians(),
        region.center_tilt.to_radians(),
    );
    // undo azimuth (about z), then elevation (about y), then tilt (about x)
    let x1 = a.cos() * d[0] + a.sin() * d[1];
    let y1 = -a.sin() * d[0] + a.cos() * d[1];
    let z1 = d[2];
    let x2 = e.cos() * x1 + e.sin() * z1;
    let z2 = -e.sin() * x1 + e.cos() * z1;
    let y3 = t.cos() * y1 + t.sin() * z2;
    let z3 = -t.sin() * y1 + t.cos() * z2;
    [x2, y3, z3]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Triangle {
    pub vertices: [[f64; 3]; 3],
    /// Projected-picture positions of the vertices.
    pub uv: [PixelPos; 3],
    pub face: CmpFace,
    /// Packing region holding all three vertices, if a single one does.
    pub region_index: Option<usize>,
}

impl Triangle {
    /// Decoded-texture positions of the vertices, when the triangle lies in
    /// a single region.
    pub fn packed_uv(&self, rwpk: &RegionWisePacking) -> Option<[PixelPos; 3]> {
        let region = rwpk.regions.get(self.region_index?)?;
        Some(self.uv.map(|p| projected_to_packed_in(region, p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriangleMesh {
    pub triangles: Vec<Triangle>,
}

/// Cube mesh with each face split into `tiles_per_face_edge`² square patches
/// of two triangles each.
pub fn build_cmp_mesh(rwpk: &RegionWisePacking, tiles_per_face_edge: u32) -> Result<TriangleMesh, GeometryError> {
    let (width, height) = (rwpk.proj_width, rwpk.proj_height);
    check_cmp_layout(width, height)?;
    if tiles_per_face_edge == 0 {
        return Err(GeometryError::ZeroTiles);
    }
    let n = tiles_per_face_edge;
    let step = 1.0 / n as f64;
    let mut triangles = Vec::with_capacity(12 * (n * n) as usize);
    for face in CmpFace::ALL {
        for j in 0..n {
            for i in 0..n {
                let (u0, v0) = (i as f64 * step, j as f64 * step);
                let (u1, v1) = (u0 + step, v0 + step);
                for corners in [[(u0, v0), (u1, v0), (u1, v1)], [(u0, v0), (u1, v1), (u0, v1)]] {
                    let vertices = corners.map(|(u, v)| face_uv_to_direction(face, u, v));
                    let mut uv = [PixelPos::new(0.0, 0.0); 3];
                    for (k, (u, v)) in corners.into_iter().enumerate() {
                        uv[k] = cmp_face_to_projected(face, u, v, width, height)?;
                    }
                    let region_index = rwpk.regions.iter().position(|r| {
                        uv.iter().all(|p| rect_contains(r.proj_x, r.proj_y, r.proj_w, r.proj_h, *p))
                    });
                    triangles.push(Triangle {
                        vertices,
                        uv,
                        face,
                        region_index,
                    });
                }
            }
        }
    }
    Ok(TriangleMesh { triangles })
}
