use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv_io::{load_csv_with, CsvOptions, LoadedCsv};
use crate::error::{Error, Result};
use crate::persist::sha256_hex;

/// Hex digits of the checksum used as the cache subdirectory.
pub const CHECKSUM_PREFIX_LEN: usize = 16;

/// Trust-on-first-use pins for entries fetched without a checksum.
pub const PINS_FILE: &str = "pins.json";

pub const QUARANTINE_DIR: &str = "quarantine";

/// Fetches raw bytes for a URL.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>>;
}

/// `file://` through the filesystem, `http(s)://` through `ureq`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DefaultTransport;

impl Transport for DefaultTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>> {
        if let Some(path) = url.strip_prefix("file://") {
            return fs::read(path).map_err(|e| Error::Network(format!("{url}: {e}")));
        }
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(Error::invalid(format!("unsupported URL scheme: {url}")));
        }
        let resp = ureq::get(url).call().map_err(|e| Error::Network(format!("{url}: {e}")))?;
        let mut bytes = Vec::new();
        resp.into_body()
            .into_reader()
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Network(format!("{url}: {e}")))?;
        Ok(bytes)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchedFile {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
    pub cache_hit: bool,
}

fn file_name_of(url: &str) -> Result<String> {
    let tail = url.trim_end_matches('/').rsplit('/').next().unwrap_or("");
    let tail = tail.split(['?', '#']).next().unwrap_or("");
    if tail.is_empty() || tail == "." || tail == ".." {
        return Err(Error::invalid(format!("cannot derive a file name from {url}")));
    }
    Ok(tail.to_string())
}

fn normalize_checksum(c: &str) -> Result<String> {
    let c = c.trim().to_ascii_lowercase();
    if c.len() != 64 || !c.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::invalid(format!("checksum must be 64 hex digits, got {c:?}")));
    }
    Ok(c)
}

/// Holds an exclusive lock on a file until dropped.
struct Lock(File);

impl Lock {
    fn acquire(path: &Path) -> Result<Self> {
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(path)?;
        f.lock()?;
        Ok(Lock(f))
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

fn read_pins(cache: &Path) -> Result<BTreeMap<String, String>> {
    match fs::read_to_string(cache.join(PINS_FILE)) {
        Ok(s) => Ok(serde_json::from_str(&s)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
        Err(e) => Err(e.into()),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn quarantine(cache: &Path, name: &str, actual: &str, bytes: &[u8]) -> Result<PathBuf> {
    let dir = cache.join(QUARANTINE_DIR);
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}-{name}", &actual[..CHECKSUM_PREFIX_LEN]));
    fs::write(&path, bytes)?;
    Ok(path)
}

/// Cache path of a file with known checksum.
pub fn cache_path(cache: &Path, url: &str, checksum: &str) -> Result<PathBuf> {
    let c = normalize_checksum(checksum)?;
    Ok(cache.join(&c[..CHECKSUM_PREFIX_LEN]).join(file_name_of(url)?))
}

/// Downloads `url` into `cache` once and returns the local copy.
///
/// With a checksum the download and every later cache hit are verified;
/// a mismatch moves the bytes to `quarantine/` and fails. Without one the
/// first download is pinned in `pins.json` and later calls verify against
/// the pin.
pub fn fetch_dataset(url: &str, cache: &Path, checksum: Option<&str>) -> Result<PathBuf> {
    fetch_with(&DefaultTransport, url, cache, checksum).map(|f| f.path)
}

pub fn fetch_with(transport: &dyn Transport, url: &str, cache: &Path, checksum: Option<&str>) -> Result<FetchedFile> {
    let name = file_name_of(url)?;
    fs::create_dir_all(cache)?;
    let _entry_lock = Lock::acquire(&cache.join("locks").join(format!("{}.lock", &sha256_hex(url.as_bytes())[..CHECKSUM_PREFIX_LEN])))?;

    let given = checksum.map(normalize_checksum).transpose()?;
    let pinned = if given.is_none() { read_pins(cache)?.get(url).cloned() } else { None };
    let expected = given.clone().or(pinned);

    if let Some(exp) = &expected {
        let path = cache.join(&exp[..CHECKSUM_PREFIX_LEN]).join(&name);
        if path.exists() {
            let bytes = fs::read(&path)?;
            let actual = sha256_hex(&bytes);
            if &actual == exp {
                log::debug!("cache hit for {url}");
                return Ok(FetchedFile {
                    path,
                    sha256: actual,
                    bytes: bytes.len() as u64,
                    cache_hit: true,
                });
            }
            let q = quarantine(cache, &name, &actual, &bytes)?;
            fs::remove_file(&path)?;
            log::warn!("cached copy of {url} is corrupt; moved to {}", q.display());
        }
    }

    log::info!("downloading {url}");
    let bytes = transport.get(url)?;
    let actual = sha256_hex(&bytes);
    if let Some(exp) = &expected {
        if &actual != exp {
            let q = quarantine(cache, &name, &actual, &bytes)?;
            return Err(Error::ChecksumMismatch {
                expected: exp.clone(),
                actual,
                quarantined: q,
            });
        }
    }
    let dir = cache.join(&actual[..CHECKSUM_PREFIX_LEN]);
    fs::create_dir_all(&dir)?;
    let path = dir.join(&name);
    write_atomic(&path, &bytes)?;
    if expected.is_none() {
        let _pins_lock = Lock::acquire(&cache.join("locks").join("pins.lock"))?;
        let mut pins = read_pins(cache)?;
        pins.insert(url.to_string(), actual.clone());
        write_atomic(&cache.join(PINS_FILE), serde_json::to_string_pretty(&pins)?.as_bytes())?;
        log::warn!("no checksum recorded for {url}; pinned sha256 {actual} on first use");
    }
    Ok(FetchedFile {
        path,
        sha256: actual,
        bytes: bytes.len() as u64,
        cache_hit: false,
    })
}

/// One dataset in a manifest file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub url: String,
    #[serde(default)]
    pub sha256: Option<String>,
    #[serde(default)]
    pub bytes: Option<u64>,
    #[serde(default)]
    pub license: String,
    pub csv: CsvOptions,
    #[serde(default)]
    pub n_rows: Option<usize>,
    #[serde(default)]
    pub n_features: Option<usize>,
    #[serde(default)]
    pub notes: String,
}

impl ManifestEntry {
    /// Fetches the file and checks the recorded byte length.
    pub fn fetch(&self, transport: &dyn Transport, cache: &Path) -> Result<FetchedFile> {
        let f = fetch_with(transport, &self.url, cache, self.sha256.as_deref())?;
        if let Some(b) = self.bytes {
            if b != f.bytes {
                return Err(Error::Format(format!("{}: manifest records {b} bytes, fetched {}", self.name, f.bytes)));
            }
        }
        Ok(f)
    }

    /// Fetches and parses, checking the recorded shape.
    pub fn load(&self, transport: &dyn Transport, cache: &Path) -> Result<LoadedCsv> {
        let f = self.fetch(transport, cache)?;
        let loaded = load_csv_with(&f.path, &self.csv)?;
        let d = &loaded.dataset;
        if self.n_rows.is_some_and(|n| n != d.len() + loaded.dropped_rows.len()) {
            return Err(Error::Format(format!("{}: expected {:?} rows, found {}", self.name, self.n_rows, d.len())));
        }
        if self.n_features.is_some_and(|n| n != d.n_features()) {
            return Err(Error::Format(format!(
                "{}: expected {:?} features, found {}",
                self.name,
                self.n_features,
                d.n_features()
            )));
        }
        Ok(loaded)
    }
}

/// Reads a manifest with one JSON object per line; `#` lines are comments.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out: Vec<ManifestEntry> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(l).map_err(|e| Error::Parse {
            row: n + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        if out.iter().any(|o| o.name == e.name) {
            return Err(Error::invalid(format!("duplicate manifest entry {}", e.name)));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("manifest {}: {e}", path.display()))))?;
    parse_manifest(&text)
}

pub fn find_entry<'a>(entries: &'a [ManifestEntry], name: &str) -> Result<&'a ManifestEntry> {
    entries
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::invalid(format!("dataset {name:?} is not in the manifest")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    struct Counting<'a> {
        body: &'a [u8],
        calls: Cell<usize>,
    }

    impl Transport for Counting<'_> {
        fn get(&self, _url: &str) -> Result<Vec<u8>> {
            self.calls.set(self.calls.get() + 1);
            Ok(self.body.to_vec())
        }
    }

    const URL: &str = "https://example.invalid/data/table.txt";

    #[test]
    fn second_call_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let t = Counting { body: b"1 2\n3 4\n", calls: Cell::new(0) };
        let sum = sha256_hex(t.body);
        let a = fetch_with(&t, URL, dir.path(), Some(&sum)).unwrap();
        let b = fetch_with(&t, URL, dir.path(), Some(&sum)).unwrap();
        assert_eq!(t.calls.get(), 1);
        assert!(!a.cache_hit && b.cache_hit);
        assert_eq!(a.path, dir.path().join(&sum[..CHECKSUM_PREFIX_LEN]).join("table.txt"));
    }

    #[test]
    fn wrong_checksum_quarantines() {
        let dir = tempfile::tempdir().unwrap();
        let t = Counting { body: b"abc", calls: Cell::new(0) };
        let wrong = "0".repeat(64);
        match fetch_with(&t, URL, dir.path(), Some(&wrong)) {
            Err(Error::ChecksumMismatch { quarantined, actual, .. }) => {
                assert!(quarantined.starts_with(dir.path().join(QUARANTINE_DIR)));
                assert_eq!(fs::read(&quarantined).unwrap(), b"abc");
                assert_eq!(actual, sha256_hex(b"abc"));
            }
            other => panic!("{other:?}"),
        }
        assert!(!dir.path().join(&wrong[..CHECKSUM_PREFIX_LEN]).exists());
    }

    #[test]
    fn corrupt_cache_entry_refetched() {
        let dir = tempfile::tempdir().unwrap();
        let t = Counting { body: b"5 6\n", calls: Cell::new(0) };
        let sum = sha256_hex(t.body);
        let a = fetch_with(&t, URL, dir.path(), Some(&sum)).unwrap();
        fs::write(&a.path, b"tampered").unwrap();
        let b = fetch_with(&t, URL, dir.path(), Some(&sum)).unwrap();
        assert_eq!(t.calls.get(), 2);
        assert_eq!(fs::read(&b.path).unwrap(), b"5 6\n");
        assert_eq!(fs::read_dir(dir.path().join(QUARANTINE_DIR)).unwrap().count(), 1);
    }

    #[test]
    fn trust_on_first_use() {
        let dir = tempfile::tempdir().unwrap();
        let t = Counting { body: b"7 8\n", calls: Cell::new(0) };
        let a = fetch_with(&t, URL, dir.path(), None).unwrap();
        let b = fetch_with(&t, URL, dir.path(), None).unwrap();
        assert_eq!(t.calls.get(), 1);
        assert!(b.cache_hit);
        assert_eq!(read_pins(dir.path()).unwrap()[URL], a.sha256);
    }

    #[test]
    fn manifest_round_trip_and_length() {
        let src = tempfile::tempdir().unwrap();
        let file = src.path().join("small.txt");
        fs::write(&file, "1 2 3\n4 5 6\n").unwrap();
        let bytes = fs::read(&file).unwrap();
        let entry = ManifestEntry {
            name: "small".into(),
            url: format!("file://{}", file.display()),
            sha256: Some(sha256_hex(&bytes)),
            bytes: Some(bytes.len() as u64),
            license: String::new(),
            csv: CsvOptions::new(2usize, false),
            n_rows: Some(2),
            n_features: Some(2),
            notes: String::new(),
        };
        let line = serde_json::to_string(&entry).unwrap();
        let parsed = parse_manifest(&format!("# comment\n{line}\n")).unwrap();
        assert_eq!(parsed, vec![entry.clone()]);
        let cache = tempfile::tempdir().unwrap();
        let f = parsed[0].fetch(&DefaultTransport, cache.path()).unwrap();
        assert_eq!(f.bytes, 12);
        assert_eq!(parsed[0].load(&DefaultTransport, cache.path()).unwrap().dataset.len(), 2);
        let bad = ManifestEntry { bytes: Some(13), ..entry };
        assert!(matches!(bad.fetch(&DefaultTransport, cache.path()), Err(Error::Format(_))));
        assert!(parse_manifest(&format!("{line}\n{line}\n")).is_err());
    }

    #[test]
    fn network_error_on_miss() {
        let dir = tempfile::tempdir().unwrap();
        let e = fetch_with(&DefaultTransport, "file:///definitely/not/here.txt", dir.path(), None).unwrap_err();
        assert!(matches!(e, Error::Network(_)));
        assert!(file_name_of("https://host/..").is_err());
    }
}
