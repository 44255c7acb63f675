//! The `omaf` command line. Machine-readable output is JSON on stdout; errors
//! are a single JSON line on stderr with exit status 1, usage errors exit 2.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use crate::extractor::{resolve_segment, to_annexb, ExtractorError};
use crate::geometry::{
    cmp_pixel_to_sphere, erp_pixel_to_sphere, map_packed_to_projected, packed_region_at, GeometryError, PixelPos,
};
use crate::isobmff::{
    build_output_init, build_output_media, parse_box_tree, parse_init_segment, parse_media_segment, BoxContent,
    InitSegment, IsobmffError, MediaSegment, Mp4Box, OutputTrackConfig, TrackInfo, DEFAULT_OUTPUT_TRACK_ID,
};
use crate::mpd::{parse_manifest, preselection_components, resolve_preselections, verify_full_coverage, MpdError};
use crate::omaf::{parse_coverage, parse_projection, parse_rwpk, parse_srqr, OmafError, ProjectionFormat};
use crate::session::{
    run_session, source_for_manifest, BandwidthError, BandwidthModel, FetchError, SessionConfig, SessionError, Timing,
    ViewportTrace, DEFAULT_BANDWIDTH,
};
use crate::synth::{generate, ContentConfig, SynthError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Isobmff(#[from] IsobmffError),
    #[error(transparent)]
    Omaf(#[from] OmafError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error(transparent)]
    Mpd(#[from] MpdError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Bandwidth(#[from] BandwidthError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Io { .. } => "Io",
            CliError::Isobmff(e) => e.kind(),
            CliError::Omaf(e) => e.kind(),
            CliError::Extractor(e) => e.kind(),
            CliError::Mpd(e) => e.kind(),
            CliError::Geometry(e) => e.kind(),
            CliError::Session(e) => e.kind(),
            CliError::Synth(e) => e.kind(),
            CliError::Fetch(e) => e.kind(),
            CliError::Bandwidth(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn offset(&self) -> Option<u64> {
        match self {
            CliError::Isobmff(e) => e.offset(),
            CliError::Extractor(ExtractorError::Isobmff(e)) => e.offset(),
            _ => None,
        }
    }

    /// The one-line JSON form written to stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let Some(off) = self.offset() {
            v["offset"] = json!(off);
        }
        v.to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "omaf", version, about = "Inspect, resolve and simulate tiled OMAF streaming content")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the box tree and OMAF metadata of a segment as JSON.
    Inspect(InspectArgs),
    /// Resolve the extractors of a segment into one HEVC bitstream.
    Resolve(ResolveArgs),
    /// Summarize a DASH manifest as JSON.
    Mpd(MpdArgs),
    /// Map packed-picture positions to projected positions and sphere angles.
    UnpackMap(UnpackMapArgs),
    /// Run a streaming session and report metrics and the event log.
    Simulate(SimulateArgs),
    /// Write a synthetic tiled cube-map asset.
    GenContent(GenContentArgs),
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub file: PathBuf,
    /// Initialization segment, needed to decode the runs of a media segment.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    pub init: PathBuf,
    /// Media segment carrying the extractor track.
    #[arg(long)]
    pub extractor: PathBuf,
    /// Media segments of the referenced tile tracks.
    #[arg(long = "tile")]
    pub tiles: Vec<PathBuf>,
    /// Write start codes instead of 4-byte length prefixes.
    #[arg(long)]
    pub annexb: bool,
    /// Write a repackaged media segment (with `<out>.init.mp4`) instead of a bitstream.
    #[arg(long, conflicts_with = "annexb")]
    pub segment: bool,
    #[arg(long, default_value_t = DEFAULT_OUTPUT_TRACK_ID)]
    pub output_track_id: u32,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MpdArgs {
    /// Manifest path or http(s) URL.
    pub manifest: String,
}

#[derive(Debug, Args)]
pub struct UnpackMapArgs {
    /// Initialization segment whose track carries region-wise packing.
    pub init: PathBuf,
    #[arg(long)]
    pub track: Option<u32>,
    /// Sampling step over the packed picture, in pixels.
    #[arg(long, default_value_t = 64)]
    pub step: u32,
    /// Explicit packed positions `x,y`; replaces the grid.
    #[arg(long = "point")]
    pub points: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Manifest path or http(s) URL.
    pub manifest: String,
    /// Viewport trace CSV (`t_ms,azimuth_deg,elevation_deg`); fixed at 0,0 when absent.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Bytes per second, or a `t_ms,bytes_per_second` trace file.
    #[arg(long)]
    pub bandwidth: Option<String>,
    #[arg(long, default_value_t = 3000)]
    pub buffer_limit_ms: u64,
    #[arg(long)]
    pub segment_duration_ms: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub min_start_buffer_ms: u64,
    #[arg(long, default_value_t = DEFAULT_OUTPUT_TRACK_ID)]
    pub output_track_id: u32,
    /// Time fetches on the wall clock instead of the bandwidth model.
    #[arg(long, conflicts_with = "bandwidth")]
    pub wall_clock: bool,
    /// Directory for `metrics.json` and `events.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Event log file (JSON lines).
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenContentArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Extractor tracks; defaults to one per tile.
    #[arg(long)]
    pub tracks: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub segments: u32,
    #[arg(long, default_value_t = 2)]
    pub tiles_per_face_edge: u32,
    #[arg(long, default_value_t = 256)]
    pub tile_size: u32,
    #[arg(long, default_value_t = 1000)]
    pub segment_duration_ms: u32,
    #[arg(long, default_value_t = 30)]
    pub frame_rate: u32,
    #[arg(long, default_value_t = 4)]
    pub nal_length_size: u8,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Keep every packed region unrotated.
    #[arg(long)]
    pub no_rotate: bool,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn emit(out: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
}

fn emit_json(out: &mut dyn Write, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).expect("JSON values serialize");
    text.push('\n');
    emit(out, text.as_bytes())
}

fn box_json(b: &Mp4Box, offset: u64) -> Value {
    let mut v = json!({
        "type": b.fourcc.to_string(),
        "offset": offset,
        "size": b.size(),
        "header": b.header,
    });
    match &b.content {
        BoxContent::Data(d) => v["data_len"] = json!(d.len()),
        BoxContent::Children { prefix, children } => {
            let mut at = offset + b.header_len() as u64 + prefix.len() as u64;
            let mut kids = Vec::with_capacity(children.len());
            for c in children {
                kids.push(box_json(c, at));
                at += c.size();
            }
            if !prefix.is_empty() {
                v["prefix_len"] = json!(prefix.len());
            }
            v["children"] = Value::Array(kids);
        }
    }
    v
}

fn track_json(t: &TrackInfo) -> Result<Value, CliError> {
    let payload = |code: &[u8; 4]| t.omaf_box(code).and_then(|b| b.data());
    let mut v = json!({
        "track_id": t.track_id,
        "handler": t.handler.to_string(),
        "sample_entry": t.sample_entry_code.to_string(),
        "timescale": t.timescale,
        "width": t.width,
        "height": t.height,
        "nal_length_size": t.nal_length_size,
        "parameter_sets": t.parameter_sets.len(),
        "scal_refs": t.scal_refs,
        "defaults": t.defaults,
    });
    if let Some(p) = payload(b"prfr") {
        v["projection"] = json!(parse_projection(p)?);
    }
    if let Some(p) = payload(b"rwpk") {
        v["region_wise_packing"] = json!(parse_rwpk(p)?);
    }
    if let Some(p) = payload(b"covi") {
        v["coverage"] = json!(parse_coverage(p)?);
    }
    if let Some(p) = payload(b"srqr") {
        v["quality_ranking"] = json!(parse_srqr(p)?);
    }
    Ok(v)
}

fn media_json(seg: &MediaSegment) -> Value {
    let runs: Vec<Value> = seg
        .runs
        .iter()
        .map(|r| {
            json!({
                "track_id": r.track_id,
                "base_decode_time": r.base_decode_time,
                "sample_count": r.samples.len(),
                "total_duration": r.total_duration(),
                "bytes": r.samples.iter().map(|s| s.size as u64).sum::<u64>(),
            })
        })
        .collect();
    json!({ "sequence_number": seg.sequence_number, "runs": runs })
}

fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bytes = read(&args.file)?;
    let tree = parse_box_tree(&bytes)?;
    let boxes: Vec<Value> = tree.with_offsets().into_iter().map(|(off, b)| box_json(b, off)).collect();
    let mut v = json!({ "file": args.file.display().to_string(), "size": bytes.len(), "boxes": boxes });
    if tree.find(b"moov").is_some() {
        let init = parse_init_segment(&bytes)?;
        v["kind"] = json!("init");
        v["tracks"] = Value::Array(init.tracks.iter().map(track_json).collect::<Result<_, _>>()?);
    } else if tree.find(b"moof").is_some() {
        v["kind"] = json!("media");
        if let Some(init_path) = &args.init {
            let init = parse_init_segment(&read(init_path)?)?;
            v["media"] = media_json(&parse_media_segment(&bytes, &init)?);
        }
    } else {
        v["kind"] = json!("other");
    }
    emit_json(out, &v)
}

fn parse_tiles(paths: &[PathBuf], init: &InitSegment) -> Result<HashMap<u32, MediaSegment>, CliError> {
    let mut tiles = HashMap::new();
    for p in paths {
        let seg = parse_media_segment(&read(p)?, init)?;
        for id in seg.runs.iter().map(|r| r.track_id).collect::<Vec<_>>() {
            tiles.insert(id, seg.clone());
        }
    }
    Ok(tiles)
}

fn resolve(args: &ResolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let init = parse_init_segment(&read(&args.init)?)?;
    let ext = parse_media_segment(&read(&args.extractor)?, &init)?;
    let tiles = parse_tiles(&args.tiles, &init)?;
    let resolved = resolve_segment(&ext, &tiles, &init)?;
    let bytes = if args.segment {
        let track = init
            .track(resolved.extractor_track_id)
            .expect("resolved track comes from this init segment");
        let config = OutputTrackConfig::for_extractor_track(track, args.output_track_id);
        let out_path = args
            .out
            .as_ref()
            .ok_or_else(|| CliError::Usage("--segment needs --out".into()))?;
        let mut init_path = out_path.clone().into_os_string();
        init_path.push(".init.mp4");
        write_file(Path::new(&init_path), &build_output_init(&config)?)?;
        build_output_media(&resolved.samples, resolved.sequence_number, resolved.base_decode_time, &config)?
    } else {
        let stream: Vec<u8> = resolved.samples.iter().flat_map(|s| s.payload.iter().copied()).collect();
        if args.annexb {
            to_annexb(&stream)?
        } else {
            stream
        }
    };
    match &args.out {
        Some(p) => write_file(p, &bytes),
        None => emit(out, &bytes),
    }
}

fn load_manifest(location: &str) -> Result<(crate::mpd::Manifest, Box<dyn crate::session::SegmentSource + Send>), CliError> {
    let (source, name) = source_for_manifest(location)?;
    let bytes = source.fetch(&name)?;
    let text = String::from_utf8(bytes).map_err(|_| MpdError::MalformedXml("manifest is not UTF-8".into()))?;
    Ok((parse_manifest(&text)?, source))
}

fn mpd(args: &MpdArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (m, _) = load_manifest(&args.manifest)?;
    let sets: Vec<Value> = m
        .adaptation_sets
        .iter()
        .map(|s| {
            json!({
                "id": s.id,
                "representations": s.representations.iter().map(|r| json!({
                    "id": r.id, "bandwidth": r.bandwidth, "dependency_ids": r.dependency_ids,
                    "segment_duration_ms": r.segment_template.segment_duration_ms(),
                })).collect::<Vec<_>>(),
                "projection": s.projection,
                "coverage_regions": s.coverage.as_ref().map(|c| c.regions.len()),
                "quality_entries": s.srqr.as_ref().map(|q| q.entries.len()),
                "preselection": s.preselection,
                "dependency_member": s.dependency_member,
            })
        })
        .collect();
    let pres = resolve_preselections(&m)?;
    let mut coverage: BTreeMap<Vec<String>, (bool, usize)> = BTreeMap::new();
    let mut pres_json = Vec::with_capacity(pres.len());
    for p in &pres {
        if !coverage.contains_key(&p.component_sets) {
            let report = verify_full_coverage(&preselection_components(&m, p)?)?;
            coverage.insert(p.component_sets.clone(), (report.covered, report.uncovered.len()));
        }
        let (covered, uncovered) = coverage[&p.component_sets];
        pres_json.push(json!({
            "tag": p.tag, "main_set": p.main_set, "components": p.component_sets,
            "main_has_srqr": p.main_has_srqr, "full_coverage": covered, "uncovered_points": uncovered,
        }));
    }
    emit_json(
        out,
        &json!({
            "type": m.mpd_type,
            "duration_ms": m.media_presentation_duration_ms,
            "base_url": m.base_url(),
            "projection": m.projection(),
            "adaptation_sets": sets,
            "preselections": pres_json,
        }),
    )
}

fn parse_point(text: &str) -> Result<PixelPos, CliError> {
    let bad = || CliError::Usage(format!("point {text:?} is not x,y"));
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    Ok(PixelPos::new(x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

fn unpack_map(args: &UnpackMapArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let init = parse_init_segment(&read(&args.init)?)?;
    let track = match args.track {
        Some(id) => init.track(id).ok_or(IsobmffError::UnknownTrackId(id))?,
        None => init
            .extractor_tracks()
            .chain(init.tracks.iter())
            .find(|t| t.omaf_box(b"rwpk").is_some())
            .ok_or_else(|| IsobmffError::missing(b"rwpk", "any track"))?,
    };
    let rwpk = parse_rwpk(
        track
            .omaf_box(b"rwpk")
            .and_then(|b| b.data())
            .ok_or_else(|| IsobmffError::missing(b"rwpk", format!("track {}", track.track_id)))?,
    )?;
    let projection = match track.omaf_box(b"prfr").and_then(|b| b.data()) {
        Some(p) => parse_projection(p)?,
        None => return Err(IsobmffError::missing(b"prfr", format!("track {}", track.track_id)).into()),
    };
    let points: Vec<PixelPos> = if args.points.is_empty() {
        if args.step == 0 {
            return Err(CliError::Usage("--step must be positive".into()));
        }
        let half = args.step as f64 / 2.0;
        (0..rwpk.packed_height.div_ceil(args.step))
            .flat_map(|j| {
                (0..rwpk.packed_width.div_ceil(args.step))
                    .map(move |i| PixelPos::new(i as f64 * args.step as f64 + half, j as f64 * args.step as f64 + half))
            })
            .collect()
    } else {
        args.points.iter().map(|p| parse_point(p)).collect::<Result<_, _>>()?
    };
    let mut text = String::from("# packed_x packed_y region projected_x projected_y azimuth elevation\n");
    for p in points {
        let region = packed_region_at(&rwpk, p).ok_or(GeometryError::NotInAnyRegion { x: p.x, y: p.y })?;
        let q = map_packed_to_projected(&rwpk, p)?;
        let v = match projection {
            ProjectionFormat::Erp => erp_pixel_to_sphere(q, rwpk.proj_width as f64, rwpk.proj_height as f64),
            ProjectionFormat::Cmp => cmp_pixel_to_sphere(q, rwpk.proj_width, rwpk.proj_height)?,
        };
        text.push_str(&format!(
            "{:.3} {:.3} {} {:.3} {:.3} {:.6} {:.6}\n",
            p.x, p.y, region, q.x, q.y, v.azimuth, v.elevation
        ));
    }
    emit(out, text.as_bytes())
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (m, source) = load_manifest(&args.manifest)?;
    let trace = match &args.trace {
        Some(p) => {
            let bytes = read(p)?;
            ViewportTrace::parse(&String::from_utf8_lossy(&bytes))?
        }
        None => ViewportTrace::fixed(0.0, 0.0),
    };
    let timing = if args.wall_clock {
        Timing::WallClock
    } else {
        Timing::Simulated(match &args.bandwidth {
            None => BandwidthModel::Constant(DEFAULT_BANDWIDTH),
            Some(b) => match b.parse::<u64>() {
                Ok(rate) => BandwidthModel::Constant(rate),
                Err(_) => BandwidthModel::parse_trace(&String::from_utf8_lossy(&read(Path::new(b))?))?,
            },
        })
    };
    let config = SessionConfig {
        buffer_limit_ms: args.buffer_limit_ms,
        segment_duration_ms: args.segment_duration_ms,
        min_start_buffer_ms: args.min_start_buffer_ms,
        output_track_id: args.output_track_id,
        timing,
        ..SessionConfig::default()
    };
    let report = run_session(&m, &trace, &config, source.as_ref())?;
    let metrics = report.metrics_json() + "\n";
    let log = report.event_log();
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
        write_file(&dir.join("metrics.json"), metrics.as_bytes())?;
        write_file(&dir.join("events.jsonl"), log.as_bytes())?;
    }
    if let Some(p) = &args.events {
        write_file(p, log.as_bytes())?;
    }
    emit(out, metrics.as_bytes())
}

fn gen_content(args: &GenContentArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let n = args.tiles_per_face_edge;
    let config = ContentConfig {
        tiles_per_face_edge: n,
        tile_size: args.tile_size,
        extractor_tracks: args.tracks.unwrap_or(6 * (n * n) as usize),
        segments: args.segments,
        segment_duration_ms: args.segment_duration_ms,
        frame_rate: args.frame_rate,
        nal_length_size: args.nal_length_size,
        rotate_regions: !args.no_rotate,
        seed: args.seed,
    };
    let content = generate(&config)?;
    content.write_to(&args.out)?;
    emit_json(
        out,
        &json!({
            "out": args.out.display().to_string(),
            "manifest": crate::synth::MANIFEST_NAME,
            "files": content.files.len(),
            "bytes": content.total_bytes(),
            "tiles": content.tiles.len(),
            "extractor_tracks": content.extractors.len(),
            "segments": config.segments,
        }),
    )
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Inspect(a) => inspect(a, out),
        Command::Resolve(a) => resolve(a, out),
        Command::Mpd(a) => mpd(a, out),
        Command::UnpackMap(a) => unpack_map(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::GenContent(a) => gen_content(a, out),
    }
}

/// Parse `args` (program name first), run the command and return the exit
/// status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, Vec<u8>, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(std::iter::once("omaf").chain(args.iter().copied()), &mut out, &mut err);
        (code, out, String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(&[]).0, 2);
        assert_eq!(run(&["frobnicate"]).0, 2);
        assert_eq!(run(&["resolve", "--init", "x"]).0, 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(&["--help"]).0, 0);
    }

    #[test]
    fn missing_file_is_one_json_line() {
        let (code, _, err) = run(&["inspect", "/nonexistent/file.mp4"]);
        assert_eq!(code, 1);
        assert_eq!(err.lines().count(), 1);
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], "Io");
    }

    #[test]
    fn truncated_box_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mp4");
        // ftyp claims 32 bytes but only 12 exist
        std::fs::write(&path, [0, 0, 0, 32, b'f', b't', b'y', b'p', b'i', b's', b'o', b'6']).unwrap();
        let (code, _, err) = run(&["inspect", path.to_str().unwrap()]);
        assert_eq!(code, 1);
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], "TruncatedBox");
        assert_eq!(v["offset"], 0);
    }
}
