mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::small_content;
use omaf_player::mpd::parse_manifest;
use omaf_player::session::{run_session, source_for_manifest, HttpSource, MemorySource, SegmentSource, SessionConfig, ViewportTrace};

/// Serve `files` under `/media/` on a loopback port; returns the base URL and
/// a request counter.
fn serve(files: BTreeMap<String, Vec<u8>>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/media/", listener.local_addr().unwrap());
    let files = Arc::new(files);
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let files = files.clone();
            counter.fetch_add(1, Ordering::SeqCst);
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request = String::new();
                reader.read_line(&mut request).unwrap();
                let mut line = String::new();
                while reader.read_line(&mut line).unwrap() > 2 {
                    line.clear();
                }
                let path = request.split(' ').nth(1).unwrap_or("");
                let body = path.strip_prefix("/media/").and_then(|p| files.get(p));
                let (status, body) = match body {
                    Some(b) => ("200 OK", b.as_slice()),
                    None => ("404 Not Found", &b"missing"[..]),
                };
                let _ = write!(stream, "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
                let _ = stream.write_all(body);
            });
        }
    });
    (base, hits)
}

#[test]
fn remote_session_matches_local() {
    let c = small_content(3);
    let (base, hits) = serve(c.files.clone());
    let (source, name) = source_for_manifest(&format!("{base}manifest.mpd")).unwrap();
    assert!(source.is_remote());
    let m = parse_manifest(std::str::from_utf8(&source.fetch(&name).unwrap()).unwrap()).unwrap();
    let trace = ViewportTrace::parse("t_ms,azimuth_deg,elevation_deg\n0,0,0\n1200,150,-30\n").unwrap();
    let config = SessionConfig::default();
    let remote = run_session(&m, &trace, &config, source.as_ref()).unwrap();
    let local = run_session(&m, &trace, &config, &MemorySource::new(c.files.clone())).unwrap();
    assert_eq!(remote.event_log(), local.event_log());
    assert!(hits.load(Ordering::SeqCst) as u64 > remote.metrics.request_count / 2);
}

#[test]
fn missing_segment_names_the_url() {
    let (base, _) = serve(BTreeMap::new());
    let source = HttpSource::new(&base).unwrap();
    let err = source.fetch("seg_x_1.m4s").unwrap_err();
    assert_eq!(err.kind(), "FetchFailed");
    assert!(err.url.ends_with("/media/seg_x_1.m4s"), "{}", err.url);
    assert!(err.to_string().contains("404"), "{err}");

    let batch = source.fetch_batch(&["a".to_string(), "b".to_string()]);
    assert!(batch.is_err());
}

#[test]
fn cli_simulates_over_http() {
    let c = small_content(2);
    let (base, _) = serve(c.files.clone());
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_omaf"))
        .args(["simulate", &format!("{base}manifest.mpd")])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["segments_played"], 2);
}
