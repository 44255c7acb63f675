//! Segment sources. A batch is fetched as a unit: results come back in
//! request order and any failure fails the whole batch, since a preselection
//! is only usable once all of its parts have arrived.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::mpd::join_url;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fetching {url} failed: {cause}")]
pub struct FetchError {
    pub url: String,
    pub cause: String,
}

impl FetchError {
    pub fn kind(&self) -> &'static str {
        "FetchFailed"
    }

    fn new(url: &str, cause: impl ToString) -> Self {
        FetchError { url: url.to_string(), cause: cause.to_string() }
    }
}

pub trait SegmentSource: Sync {
    /// Fetch one resource named relative to the source root.
    fn fetch(&self, url: &str) -> Result<Vec<u8>, FetchError>;

    fn fetch_batch(&self, urls: &[String]) -> Result<Vec<Vec<u8>>, FetchError> {
        urls.iter().map(|u| self.fetch(u)).collect()
    }

    /// Whether transfers take real time; simulated sessions then measure
    /// fetches on the wall clock instead of the bandwidth model.
    fn is_remote(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct LocalDirSource {
    root: PathBuf,
}

impl LocalDirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LocalDirSource { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl SegmentSource for LocalDirSource {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, FetchError> {
        if url.contains("://") {
            return Err(FetchError::new(url, "not a local path"));
        }
        let path = self.root.join(url);
        std::fs::read(&path).map_err(|e| FetchError::new(&path.display().to_string(), e))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl MemorySource {
    pub fn new(files: BTreeMap<String, Vec<u8>>) -> Self {
        MemorySource { files }
    }
}

impl SegmentSource for MemorySource {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, FetchError> {
        self.files
            .get(url)
            .cloned()
            .ok_or_else(|| FetchError::new(url, "not found"))
    }
}

/// Plain GET requests. Relative names resolve against `base` the way links
/// in a manifest at that URL would.
#[derive(Debug, Clone)]
pub struct HttpSource {
    base: String,
    client: reqwest::blocking::Client,
    max_parallel: usize,
}

impl HttpSource {
    pub fn new(base: &str) -> Result<Self, FetchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| FetchError::new(base, e))?;
        Ok(HttpSource { base: base.to_string(), client, max_parallel: 16 })
    }

    pub fn with_max_parallel(mut self, n: usize) -> Self {
        self.max_parallel = n.max(1);
        self
    }

    pub fn resolve(&self, url: &str) -> String {
        join_url(&self.base, url)
    }
}

impl SegmentSource for HttpSource {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, FetchError> {
        let full = self.resolve(url);
        let resp = self.client.get(&full).send().map_err(|e| FetchError::new(&full, e))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(FetchError::new(&full, format!("HTTP {}", status.as_u16())));
        }
        resp.bytes().map(|b| b.to_vec()).map_err(|e| FetchError::new(&full, e))
    }

    fn fetch_batch(&self, urls: &[String]) -> Result<Vec<Vec<u8>>, FetchError> {
        let mut out = Vec::with_capacity(urls.len());
        for chunk in urls.chunks(self.max_parallel) {
            let results: Vec<Result<Vec<u8>, FetchError>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|u| s.spawn(move || self.fetch(u))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(FetchError::new("", "fetch thread panicked"))))
                    .collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        Ok(out)
    }

    fn is_remote(&self) -> bool {
        true
    }
}

/// Open the source holding a manifest given as a file path or http(s) URL.
/// Returns the source and the manifest's name relative to it.
pub fn source_for_manifest(location: &str) -> Result<(Box<dyn SegmentSource + Send>, String), FetchError> {
    if location.starts_with("http://") || location.starts_with("https://") {
        let name = location
            .rsplit('/')
            .next()
            .filter(|n| !n.is_empty() && !n.contains("://"))
            .unwrap_or_default()
            .to_string();
        Ok((Box::new(HttpSource::new(location)?), name))
    } else {
        let path = Path::new(location);
        let name = path
            .file_name()
            .ok_or_else(|| FetchError::new(location, "not a file path"))?
            .to_string_lossy()
            .into_owned();
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Ok((Box::new(LocalDirSource::new(dir)), name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_batch_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = (0..5).map(|i| format!("f{i}.bin")).collect();
        for (i, n) in names.iter().enumerate() {
            std::fs::write(dir.path().join(n), vec![i as u8; i + 1]).unwrap();
        }
        let src = LocalDirSource::new(dir.path());
        let reversed: Vec<String> = names.iter().rev().cloned().collect();
        let got = src.fetch_batch(&reversed).unwrap();
        assert_eq!(got.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 4, 3, 2, 1]);
    }

    #[test]
    fn missing_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = LocalDirSource::new(dir.path()).fetch("nope.m4s").unwrap_err();
        assert!(err.url.ends_with("nope.m4s"));
        assert_eq!(err.kind(), "FetchFailed");
    }

    #[test]
    fn manifest_location_splits() {
        let (_, name) = source_for_manifest("content/manifest.mpd").unwrap();
        assert_eq!(name, "manifest.mpd");
        let (src, name) = source_for_manifest("http://127.0.0.1:1/a/b.mpd").unwrap();
        assert_eq!(name, "b.mpd");
        assert!(src.is_remote());
    }
}
