//! DASH manifest parsing with OMAF descriptors, Preselection resolution,
//! sphere coverage checking and segment URL generation.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::region_contains;
use crate::omaf::{
    Coverage, OmafError, ProjectionFormat, QualityEntry, QualityRanking, RegionShape, SphereRegion,
};

/// Descriptor scheme URIs recognized on adaptation sets.
pub mod schemes {
    pub const PROJECTION: &str = "urn:mpeg:mpegI:omaf:2017:pf";
    pub const COVERAGE: &str = "urn:mpeg:mpegI:omaf:2017:cc";
    pub const QUALITY_RANKING: &str = "urn:mpeg:mpegI:omaf:2017:srqr";
    pub const PRESELECTION: &str = "urn:mpeg:dash:preselection:2016";
    pub const OMAF_NAMESPACE: &str = "urn:mpeg:mpegI:omaf:2017";
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpdError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("root element is <{0}>, expected <MPD>")]
    NotAnMpd(String),
    #[error("manifest has no Period")]
    NoPeriod,
    #[error("manifest has {0} periods; only single-period manifests are supported")]
    MultiplePeriods(usize),
    #[error("manifest has no adaptation sets")]
    NoAdaptationSets,
    #[error("adaptation set {set}, representation {representation}: no SegmentTemplate")]
    MissingSegmentTemplate { set: String, representation: String },
    #[error("adaptation sets mix projection formats")]
    InconsistentProjection,
    #[error("<{element}> attribute {attribute}=\"{value}\" is invalid")]
    InvalidAttribute { element: String, attribute: String, value: String },
    #[error("<{element}> is missing required attribute {attribute}")]
    MissingAttribute { element: String, attribute: String },
    #[error("adaptation set {set} repeats representation id {representation}")]
    DuplicateRepresentationId { set: String, representation: String },
    #[error("adaptation set id {0} is used more than once")]
    DuplicateAdaptationSetId(String),
    #[error("descriptor {scheme}: {reason}")]
    BadDescriptor { scheme: String, reason: String },
    #[error("preselection {tag} references missing adaptation set {component}")]
    DanglingComponent { tag: String, component: String },
    #[error("manifest declares no preselections")]
    NoPreselections,
    #[error("adaptation set {0} has no coverage descriptor")]
    MissingCoverage(String),
    #[error("no adaptation set with id {0}")]
    UnknownAdaptationSet(String),
    #[error("template variable ${0}$ cannot be resolved")]
    UnresolvedTemplateVar(String),
    #[error(transparent)]
    Omaf(#[from] OmafError),
}

impl MpdError {
    pub fn kind(&self) -> &'static str {
        match self {
            MpdError::MalformedXml(_) => "MalformedXml",
            MpdError::NotAnMpd(_) => "NotAnMpd",
            MpdError::NoPeriod => "NoPeriod",
            MpdError::MultiplePeriods(_) => "MultiplePeriods",
            MpdError::NoAdaptationSets => "NoAdaptationSets",
            MpdError::MissingSegmentTemplate { .. } => "MissingSegmentTemplate",
            MpdError::InconsistentProjection => "InconsistentProjection",
            MpdError::InvalidAttribute { .. } => "InvalidAttribute",
            MpdError::MissingAttribute { .. } => "MissingAttribute",
            MpdError::DuplicateRepresentationId { .. } => "DuplicateRepresentationId",
            MpdError::DuplicateAdaptationSetId(_) => "DuplicateAdaptationSetId",
            MpdError::BadDescriptor { .. } => "BadDescriptor",
            MpdError::DanglingComponent { .. } => "DanglingComponent",
            MpdError::NoPreselections => "NoPreselections",
            MpdError::MissingCoverage(_) => "MissingCoverage",
            MpdError::UnknownAdaptationSet(_) => "UnknownAdaptationSet",
            MpdError::UnresolvedTemplateVar(_) => "UnresolvedTemplateVar",
            MpdError::Omaf(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MpdType {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentTemplate {
    pub media: String,
    pub initialization: Option<String>,
    pub timescale: u64,
    pub duration: Option<u64>,
    pub start_number: u64,
}

impl SegmentTemplate {
    pub fn segment_duration_ms(&self) -> Option<u64> {
        self.duration.map(|d| d * 1000 / self.timescale.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Representation {
    pub id: String,
    pub bandwidth: u64,
    pub dependency_ids: Vec<String>,
    pub segment_template: SegmentTemplate,
}

/// A descriptor the parser does not interpret, kept for inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Descriptor {
    pub element: String,
    pub scheme_id_uri: String,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreselectionDescriptor {
    pub tag: String,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptationSet {
    pub id: String,
    pub representations: Vec<Representation>,
    pub projection: Option<ProjectionFormat>,
    pub coverage: Option<Coverage>,
    pub srqr: Option<QualityRanking>,
    pub preselection: Option<PreselectionDescriptor>,
    /// Referenced as a component of some preselection.
    pub dependency_member: bool,
    pub descriptors: Vec<Descriptor>,
}

impl AdaptationSet {
    pub fn representation(&self, id: &str) -> Option<&Representation> {
        self.representations.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub mpd_type: MpdType,
    pub media_presentation_duration_ms: Option<u64>,
    pub base_urls: Vec<String>,
    pub adaptation_sets: Vec<AdaptationSet>,
}

impl Manifest {
    pub fn adaptation_set(&self, id: &str) -> Option<&AdaptationSet> {
        self.adaptation_sets.iter().find(|s| s.id == id)
    }

    /// The adaptation set and representation with the given representation id.
    pub fn find_representation(&self, rep_id: &str) -> Option<(&AdaptationSet, &Representation)> {
        self.adaptation_sets
            .iter()
            .find_map(|s| s.representation(rep_id).map(|r| (s, r)))
    }

    pub fn projection(&self) -> Option<ProjectionFormat> {
        self.adaptation_sets.iter().find_map(|s| s.projection)
    }

    pub fn base_url(&self) -> Option<&str> {
        self.base_urls.first().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreselectionSet {
    pub tag: String,
    pub main_set: String,
    pub component_sets: Vec<String>,
    /// False when the main set lacks the quality ranking needed for selection.
    pub main_has_srqr: bool,
}

fn local_attr<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Option<&'a str> {
    node.attributes().find(|a| a.name() == name).map(|a| a.value())
}

fn required<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Result<&'a str, MpdError> {
    local_attr(node, name).ok_or_else(|| MpdError::MissingAttribute {
        element: node.tag_name().name().to_string(),
        attribute: name.to_string(),
    })
}

fn number<T: std::str::FromStr>(node: roxmltree::Node, name: &str) -> Result<Option<T>, MpdError> {
    local_attr(node, name)
        .map(|v| {
            v.trim().parse::<T>().map_err(|_| MpdError::InvalidAttribute {
                element: node.tag_name().name().to_string(),
                attribute: name.to_string(),
                value: v.to_string(),
            })
        })
        .transpose()
}

fn children<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = roxmltree::Node<'a, 'i>> + 'a {
    node.children().filter(move |c| c.is_element() && c.tag_name().name() == name)
}

/// Parse an ISO 8601 duration such as `PT1H2M3.5S` or `P1DT2S` into ms.
pub fn parse_iso_duration(text: &str) -> Option<u64> {
    let rest = text.trim().strip_prefix('P')?;
    let (date, time) = match rest.split_once('T') {
        Some((d, t)) => (d, Some(t)),
        None => (rest, None),
    };
    let mut total = 0.0f64;
    let mut take = |part: &str, units: &[(char, f64)]| -> Option<()> {
        let mut num = String::new();
        for ch in part.chars() {
            if ch.is_ascii_digit() || ch == '.' {
                num.push(ch);
            } else {
                let scale = units.iter().find(|(u, _)| *u == ch)?.1;
                total += num.parse::<f64>().ok()? * scale;
                num.clear();
            }
        }
        num.is_empty().then_some(())
    };
    take(date, &[('Y', 365.0 * 86400.0), ('M', 30.0 * 86400.0), ('W', 7.0 * 86400.0), ('D', 86400.0)])?;
    if let Some(t) = time {
        take(t, &[('H', 3600.0), ('M', 60.0), ('S', 1.0)])?;
    }
    Some((total * 1000.0).round() as u64)
}

#[derive(Default, Clone)]
struct TemplateAttrs {
    media: Option<String>,
    initialization: Option<String>,
    timescale: Option<u64>,
    duration: Option<u64>,
    start_number: Option<u64>,
}

impl TemplateAttrs {
    fn read(node: roxmltree::Node) -> Result<Option<Self>, MpdError> {
        let Some(t) = children(node, "SegmentTemplate").next() else {
            return Ok(None);
        };
        Ok(Some(TemplateAttrs {
            media: local_attr(t, "media").map(str::to_string),
            initialization: local_attr(t, "initialization").map(str::to_string),
            timescale: number(t, "timescale")?,
            duration: number(t, "duration")?,
            start_number: number(t, "startNumber")?,
        }))
    }

    fn overlay(&self, over: &TemplateAttrs) -> TemplateAttrs {
        TemplateAttrs {
            media: over.media.clone().or_else(|| self.media.clone()),
            initialization: over.initialization.clone().or_else(|| self.initialization.clone()),
            timescale: over.timescale.or(self.timescale),
            duration: over.duration.or(self.duration),
            start_number: over.start_number.or(self.start_number),
        }
    }
}

fn omaf_angles(node: roxmltree::Node, scheme: &str) -> Result<SphereRegion, MpdError> {
    let get = |name: &str| -> Result<f64, MpdError> {
        let v: Option<f64> = number(node, name)?;
        v.map(|x| x / 65536.0).ok_or_else(|| MpdError::BadDescriptor {
            scheme: scheme.to_string(),
            reason: format!("<{}> lacks {name}", node.tag_name().name()),
        })
    };
    Ok(SphereRegion {
        center_azimuth: get("centre_azimuth")?,
        center_elevation: get("centre_elevation")?,
        center_tilt: number::<f64>(node, "centre_tilt")?.unwrap_or(0.0) / 65536.0,
        azimuth_range: get("azimuth_range")?,
        elevation_range: get("elevation_range")?,
    })
}

fn shape_attr(node: roxmltree::Node) -> Result<RegionShape, MpdError> {
    Ok(RegionShape::from_code(number::<u8>(node, "shape_type")?.unwrap_or(0))?)
}

fn parse_coverage_descriptor(d: roxmltree::Node) -> Result<Coverage, MpdError> {
    let bad = |reason: &str| MpdError::BadDescriptor {
        scheme: schemes::COVERAGE.to_string(),
        reason: reason.to_string(),
    };
    let cc = children(d, "cc").next().ok_or_else(|| bad("missing <omaf:cc>"))?;
    let regions = children(cc, "coverageInfo")
        .map(|n| omaf_angles(n, schemes::COVERAGE))
        .collect::<Result<Vec<_>, _>>()?;
    if regions.is_empty() {
        return Err(OmafError::EmptyCoverage.into());
    }
    Ok(Coverage {
        shape: shape_attr(cc)?,
        regions,
    })
}

fn parse_srqr_descriptor(d: roxmltree::Node) -> Result<QualityRanking, MpdError> {
    let q = children(d, "sphRegionQuality").next().ok_or_else(|| MpdError::BadDescriptor {
        scheme: schemes::QUALITY_RANKING.to_string(),
        reason: "missing <omaf:sphRegionQuality>".to_string(),
    })?;
    let remaining = matches!(local_attr(q, "remaining_area_flag"), Some("true" | "1"));
    let infos: Vec<_> = children(q, "qualityInfo").collect();
    let mut entries = Vec::with_capacity(infos.len());
    for (i, info) in infos.iter().enumerate() {
        let ranking = number::<u8>(*info, "quality_ranking")?.ok_or_else(|| MpdError::BadDescriptor {
            scheme: schemes::QUALITY_RANKING.to_string(),
            reason: "qualityInfo lacks quality_ranking".to_string(),
        })?;
        let region = if remaining && i + 1 == infos.len() {
            None
        } else {
            Some(omaf_angles(*info, schemes::QUALITY_RANKING)?)
        };
        entries.push(QualityEntry { ranking, region });
    }
    if entries.is_empty() {
        return Err(OmafError::EmptyRanking.into());
    }
    Ok(QualityRanking {
        shape: shape_attr(q)?,
        entries,
    })
}

fn parse_preselection_value(value: &str) -> Result<PreselectionDescriptor, MpdError> {
    let (tag, comps) = value.split_once(',').ok_or_else(|| MpdError::BadDescriptor {
        scheme: schemes::PRESELECTION.to_string(),
        reason: format!("value \"{value}\" is not \"tag,components\""),
    })?;
    Ok(PreselectionDescriptor {
        tag: tag.trim().to_string(),
        components: comps.split_whitespace().map(str::to_string).collect(),
    })
}

fn parse_adaptation_set(node: roxmltree::Node, index: usize) -> Result<AdaptationSet, MpdError> {
    let id = local_attr(node, "id").map(str::to_string).unwrap_or_else(|| index.to_string());
    let mut set = AdaptationSet {
        id: id.clone(),
        representations: Vec::new(),
        projection: None,
        coverage: None,
        srqr: None,
        preselection: None,
        dependency_member: false,
        descriptors: Vec::new(),
    };
    for d in node.children().filter(|c| {
        c.is_element() && matches!(c.tag_name().name(), "EssentialProperty" | "SupplementalProperty")
    }) {
        let scheme = local_attr(d, "schemeIdUri").unwrap_or_default();
        match scheme {
            schemes::PROJECTION => {
                let code = number::<u8>(d, "projection_type")?.ok_or_else(|| MpdError::BadDescriptor {
                    scheme: scheme.to_string(),
                    reason: "missing projection_type".to_string(),
                })?;
                set.projection = Some(ProjectionFormat::from_code(code)?);
            }
            schemes::COVERAGE => set.coverage = Some(parse_coverage_descriptor(d)?),
            schemes::QUALITY_RANKING => set.srqr = Some(parse_srqr_descriptor(d)?),
            schemes::PRESELECTION => match local_attr(d, "value") {
                Some(v) if !v.trim().is_empty() => {
                    let mut p = parse_preselection_value(v)?;
                    if p.components.first() == Some(&id) {
                        p.components.remove(0);
                    }
                    set.preselection = Some(p);
                }
                _ => set.dependency_member = true,
            },
            _ => set.descriptors.push(Descriptor {
                element: d.tag_name().name().to_string(),
                scheme_id_uri: scheme.to_string(),
                value: local_attr(d, "value").map(str::to_string),
            }),
        }
    }

    let set_template = TemplateAttrs::read(node)?;
    for rep in children(node, "Representation") {
        let rep_id = required(rep, "id")?.to_string();
        if set.representation(&rep_id).is_some() {
            return Err(MpdError::DuplicateRepresentationId {
                set: id,
                representation: rep_id,
            });
        }
        let merged = match (&set_template, TemplateAttrs::read(rep)?) {
            (Some(s), Some(r)) => Some(s.overlay(&r)),
            (Some(s), None) => Some(s.clone()),
            (None, r) => r,
        };
        let template = merged
            .and_then(|t| {
                Some(SegmentTemplate {
                    media: t.media?,
                    initialization: t.initialization,
                    timescale: t.timescale.unwrap_or(1),
                    duration: t.duration,
                    start_number: t.start_number.unwrap_or(1),
                })
            })
            .ok_or_else(|| MpdError::MissingSegmentTemplate {
                set: id.clone(),
                representation: rep_id.clone(),
            })?;
        set.representations.push(Representation {
            id: rep_id,
            bandwidth: number(rep, "bandwidth")?.unwrap_or(0),
            dependency_ids: local_attr(rep, "dependencyId")
                .map(|v| v.split_whitespace().map(str::to_string).collect())
                .unwrap_or_default(),
            segment_template: template,
        });
    }
    if set.representations.is_empty() && set_template.is_none() {
        return Err(MpdError::MissingSegmentTemplate {
            set: id,
            representation: String::new(),
        });
    }
    Ok(set)
}

pub fn parse_manifest(xml: &str) -> Result<Manifest, MpdError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| MpdError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "MPD" {
        return Err(MpdError::NotAnMpd(root.tag_name().name().to_string()));
    }
    let mpd_type = match local_attr(root, "type").unwrap_or("static") {
        "static" => MpdType::Static,
        "dynamic" => MpdType::Dynamic,
        other => {
            return Err(MpdError::InvalidAttribute {
                element: "MPD".into(),
                attribute: "type".into(),
                value: other.into(),
            })
        }
    };
    let media_presentation_duration_ms = local_attr(root, "mediaPresentationDuration")
        .map(|v| {
            parse_iso_duration(v).ok_or_else(|| MpdError::InvalidAttribute {
                element: "MPD".into(),
                attribute: "mediaPresentationDuration".into(),
                value: v.into(),
            })
        })
        .transpose()?;
    let base_urls = children(root, "BaseURL")
        .filter_map(|b| b.text().map(|t| t.trim().to_string()))
        .collect();

    let periods: Vec<_> = children(root, "Period").collect();
    let period = match periods.as_slice() {
        [] => return Err(MpdError::NoPeriod),
        [p] => *p,
        many => return Err(MpdError::MultiplePeriods(many.len())),
    };

    let mut adaptation_sets = Vec::new();
    for (i, node) in children(period, "AdaptationSet").enumerate() {
        let set = parse_adaptation_set(node, i)?;
        if adaptation_sets.iter().any(|s: &AdaptationSet| s.id == set.id) {
            return Err(MpdError::DuplicateAdaptationSetId(set.id));
        }
        adaptation_sets.push(set);
    }
    if adaptation_sets.is_empty() {
        return Err(MpdError::NoAdaptationSets);
    }

    for p in children(period, "Preselection") {
        let tag = local_attr(p, "tag").or(local_attr(p, "id")).unwrap_or_default().to_string();
        let mut ids = required(p, "preselectionComponents")?.split_whitespace().map(str::to_string);
        let Some(main) = ids.next() else { continue };
        let components = ids.collect();
        if let Some(set) = adaptation_sets.iter_mut().find(|s| s.id == main) {
            set.preselection = Some(PreselectionDescriptor { tag, components });
        } else {
            return Err(MpdError::DanglingComponent { tag, component: main });
        }
    }

    let members: Vec<String> = adaptation_sets
        .iter()
        .filter_map(|s| s.preselection.as_ref())
        .flat_map(|p| p.components.iter().cloned())
        .collect();
    for set in &mut adaptation_sets {
        if members.contains(&set.id) {
            set.dependency_member = true;
        }
        // quality ranking is only meaningful on main (extractor) sets
        if set.preselection.is_none() {
            set.srqr = None;
        }
    }

    let mut projections = adaptation_sets.iter().filter_map(|s| s.projection);
    if let Some(first) = projections.next() {
        if projections.any(|p| p != first) {
            return Err(MpdError::InconsistentProjection);
        }
    }

    Ok(Manifest {
        mpd_type,
        media_presentation_duration_ms,
        base_urls,
        adaptation_sets,
    })
}

/// One preselection per main adaptation set, in manifest order.
pub fn resolve_preselections(m: &Manifest) -> Result<Vec<PreselectionSet>, MpdError> {
    let mut out = Vec::new();
    for set in &m.adaptation_sets {
        let Some(p) = &set.preselection else { continue };
        if let Some(missing) = p.components.iter().find(|c| m.adaptation_set(c).is_none()) {
            return Err(MpdError::DanglingComponent {
                tag: p.tag.clone(),
                component: missing.clone(),
            });
        }
        out.push(PreselectionSet {
            tag: p.tag.clone(),
            main_set: set.id.clone(),
            component_sets: p.components.clone(),
            main_has_srqr: set.srqr.is_some(),
        });
    }
    if out.is_empty() {
        return Err(MpdError::NoPreselections);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub covered: bool,
    pub samples_checked: usize,
    /// Uncovered (azimuth, elevation) grid points in degrees.
    pub uncovered: Vec<(i32, i32)>,
}

/// Grid spacing of the coverage check, in degrees.
pub const COVERAGE_GRID_STEP: i32 = 1;

/// Check that the union of the sets' coverage regions spans the sphere,
/// sampled on a 1 degree grid (azimuth -180..180, elevation -90..=90).
pub fn verify_full_coverage(sets: &[&AdaptationSet]) -> Result<CoverageReport, MpdError> {
    let coverages = sets
        .iter()
        .map(|s| s.coverage.as_ref().ok_or_else(|| MpdError::MissingCoverage(s.id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut uncovered = Vec::new();
    let mut samples_checked = 0;
    let all: Vec<(RegionShape, &SphereRegion)> = coverages
        .iter()
        .flat_map(|c| c.regions.iter().map(move |r| (c.shape, r)))
        .collect();
    for el in (-90..=90).step_by(COVERAGE_GRID_STEP as usize) {
        // az/el regions outside this row's elevation cannot contain it
        let row: Vec<_> = all
            .iter()
            .filter(|(shape, r)| {
                *shape != RegionShape::AzElCircles
                    || (el as f64 - r.center_elevation).abs() <= r.elevation_range / 2.0 + 1e-6
            })
            .collect();
        for az in (-180..180).step_by(COVERAGE_GRID_STEP as usize) {
            samples_checked += 1;
            let hit = row.iter().any(|(shape, r)| region_contains(*shape, r, az as f64, el as f64));
            if !hit {
                uncovered.push((az, el));
            }
        }
    }
    Ok(CoverageReport {
        covered: uncovered.is_empty(),
        samples_checked,
        uncovered,
    })
}

/// Component sets of a preselection, in declared order.
pub fn preselection_components<'a>(m: &'a Manifest, p: &PreselectionSet) -> Result<Vec<&'a AdaptationSet>, MpdError> {
    p.component_sets
        .iter()
        .map(|id| m.adaptation_set(id).ok_or_else(|| MpdError::UnknownAdaptationSet(id.clone())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Init,
    Media(u64),
}

fn expand_template(template: &str, rep_id: &str, number: Option<u64>) -> Result<String, MpdError> {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(start) = rest.find('$') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find('$')
            .ok_or_else(|| MpdError::UnresolvedTemplateVar(after.to_string()))?;
        let var = &after[..end];
        let (name, format) = match var.split_once('%') {
            Some((n, f)) => (n, Some(f)),
            None => (var, None),
        };
        match (name, number) {
            ("", _) => out.push('$'),
            ("RepresentationID", _) if format.is_none() => out.push_str(rep_id),
            ("Number", Some(n)) => match format {
                None => out.push_str(&n.to_string()),
                Some(f) => {
                    let width = f
                        .strip_prefix('0')
                        .and_then(|w| w.strip_suffix('d'))
                        .and_then(|w| w.parse::<usize>().ok())
                        .ok_or_else(|| MpdError::UnresolvedTemplateVar(var.to_string()))?;
                    out.push_str(&format!("{n:0width$}"));
                }
            },
            _ => return Err(MpdError::UnresolvedTemplateVar(var.to_string())),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Resolve a relative reference against a base URL or path: the last path
/// segment of the base is replaced, as with relative links.
pub fn join_url(base: &str, relative: &str) -> String {
    if base.is_empty() || relative.contains("://") || relative.starts_with('/') {
        return relative.to_string();
    }
    let path_start = base.find("://").map(|i| i + 3).unwrap_or(0);
    match base[path_start..].rfind('/') {
        Some(i) => format!("{}{relative}", &base[..path_start + i + 1]),
        None if path_start > 0 => format!("{base}/{relative}"),
        None => relative.to_string(),
    }
}

/// URL (or relative path when there is no base) of a segment.
pub fn build_segment_url(base: Option<&str>, rep: &Representation, kind: SegmentKind) -> Result<String, MpdError> {
    let t = &rep.segment_template;
    let relative = match kind {
        SegmentKind::Init => {
            let init = t.initialization.as_deref().ok_or_else(|| MpdError::UnresolvedTemplateVar("initialization".into()))?;
            expand_template(init, &rep.id, None)?
        }
        SegmentKind::Media(n) => expand_template(&t.media, &rep.id, Some(n))?,
    };
    Ok(match base {
        Some(b) => join_url(b, &relative),
        None => relative,
    })
}
