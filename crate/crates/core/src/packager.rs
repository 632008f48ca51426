//! Template archive injection.
//!
//! Takes a ZIP template (a JAR is just a ZIP with `META-INF`), drops bundle
//! files into it at configured paths, rewrites a small `Key: Value` metadata
//! manifest and writes a new archive. Unmodified template entries are copied
//! with their compressed payloads untouched.
//!
//! In deterministic mode every timestamp is 1980-01-01 00:00, entries are
//! sorted by path and placements are stored uncompressed, so the output is a
//! pure function of the template bytes, the placements and the metadata
//! updates.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_METADATA_PATH: &str = "META-INF/BUNDLE.MF";

const LOCAL_SIG: u32 = 0x0403_4b50;
const CENTRAL_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;
const EOCD_LEN: usize = 22;

const FLAG_ENCRYPTED: u16 = 1 << 0;
const FLAG_DATA_DESCRIPTOR: u16 = 1 << 3;
const FLAG_UTF8: u16 = 1 << 11;

/// 1980-01-01 in MS-DOS date format.
const DOS_EPOCH_DATE: u16 = (1 << 5) | 1;

#[derive(Debug, Error)]
pub enum PackError {
    #[error("malformed archive: {0}")]
    Malformed(String),
    #[error("malformed archive: bad signature at offset {offset}")]
    BadSignature { offset: usize },
    #[error("malformed archive: truncated central directory")]
    TruncatedCentralDirectory,
    #[error("{path}: unsupported compression method {method}")]
    UnsupportedMethod { path: String, method: u16 },
    #[error("{0}: encrypted entries are not supported")]
    Encrypted(String),
    #[error("{path}: checksum mismatch")]
    CrcMismatch { path: String },
    #[error("invalid archive path {0:?}")]
    InvalidPath(String),
    #[error("archive path {0:?} is placed more than once")]
    PathCollision(String),
    #[error("archive exceeds 4 GiB or 65535 entries; ZIP64 is not supported")]
    Oversize,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Stored,
    Deflate,
}

impl Method {
    fn code(self) -> u16 {
        match self {
            Method::Stored => 0,
            Method::Deflate => 8,
        }
    }

    fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(Method::Stored),
            8 => Some(Method::Deflate),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Stored => "stored",
            Method::Deflate => "deflate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArchiveEntrySummary {
    pub path: String,
    pub uncompressed_size: u32,
    pub crc32: u32,
    pub method: Method,
}

/// One archive member with its payload as stored (possibly compressed).
#[derive(Debug, Clone, PartialEq, Eq)]
struct RawEntry {
    path: String,
    version_made_by: u16,
    flags: u16,
    method: Method,
    time: u16,
    date: u16,
    crc32: u32,
    uncompressed_size: u32,
    external_attrs: u32,
    payload: Vec<u8>,
}

impl RawEntry {
    fn new(path: String, data: &[u8], method: Method, (time, date): (u16, u16)) -> Result<Self, PackError> {
        let uncompressed_size = u32::try_from(data.len()).map_err(|_| PackError::Oversize)?;
        let payload = match method {
            Method::Stored => data.to_vec(),
            Method::Deflate => {
                let mut enc = flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::default());
                enc.write_all(data)?;
                enc.finish()?
            }
        };
        let flags = if path.is_ascii() { 0 } else { FLAG_UTF8 };
        Ok(RawEntry {
            path,
            version_made_by: 20,
            flags,
            method,
            time,
            date,
            crc32: crc32fast::hash(data),
            uncompressed_size,
            external_attrs: 0,
            payload,
        })
    }

    fn summary(&self) -> ArchiveEntrySummary {
        ArchiveEntrySummary {
            path: self.path.clone(),
            uncompressed_size: self.uncompressed_size,
            crc32: self.crc32,
            method: self.method,
        }
    }

    /// Decompressed payload, checked against the recorded CRC and size.
    fn data(&self) -> Result<Vec<u8>, PackError> {
        let data = match self.method {
            Method::Stored => self.payload.clone(),
            Method::Deflate => {
                let mut out = Vec::with_capacity(self.uncompressed_size as usize);
                flate2::read::DeflateDecoder::new(&self.payload[..])
                    .read_to_end(&mut out)
                    .map_err(|e| PackError::Malformed(format!("{}: {e}", self.path)))?;
                out
            }
        };
        if data.len() != self.uncompressed_size as usize || crc32fast::hash(&data) != self.crc32 {
            return Err(PackError::CrcMismatch { path: self.path.clone() });
        }
        Ok(data)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn at(buf: &'a [u8], pos: usize) -> Self {
        Cursor { buf, pos }
    }

    fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.bytes(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.bytes(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn find_eocd(bytes: &[u8]) -> Result<usize, PackError> {
    if bytes.len() < EOCD_LEN {
        return Err(PackError::Malformed("no end-of-central-directory record".into()));
    }
    let last = bytes.len() - EOCD_LEN;
    let first = last.saturating_sub(u16::MAX as usize);
    (first..=last)
        .rev()
        .find(|&i| bytes[i..i + 4] == EOCD_SIG.to_le_bytes())
        .ok_or_else(|| PackError::Malformed("no end-of-central-directory record".into()))
}

fn read_archive(bytes: &[u8]) -> Result<Vec<RawEntry>, PackError> {
    let eocd = find_eocd(bytes)?;
    let mut c = Cursor::at(bytes, eocd + 4);
    let truncated = || PackError::TruncatedCentralDirectory;
    let disk = c.u16().ok_or_else(truncated)?;
    let cd_disk = c.u16().ok_or_else(truncated)?;
    let _on_disk = c.u16().ok_or_else(truncated)?;
    let total = c.u16().ok_or_else(truncated)?;
    let cd_size = c.u32().ok_or_else(truncated)? as usize;
    let cd_offset = c.u32().ok_or_else(truncated)? as usize;
    if disk != 0 || cd_disk != 0 {
        return Err(PackError::Malformed("multi-disk archives are not supported".into()));
    }
    if cd_offset == u32::MAX as usize || total == u16::MAX {
        return Err(PackError::Oversize);
    }
    if cd_offset.checked_add(cd_size).is_none_or(|end| end > eocd) {
        return Err(PackError::TruncatedCentralDirectory);
    }

    let mut entries = Vec::with_capacity(usize::from(total));
    let mut c = Cursor::at(&bytes[..cd_offset + cd_size], cd_offset);
    for _ in 0..total {
        let at = c.pos;
        let sig = c.u32().ok_or_else(truncated)?;
        if sig != CENTRAL_SIG {
            return Err(PackError::BadSignature { offset: at });
        }
        let version_made_by = c.u16().ok_or_else(truncated)?;
        let _needed = c.u16().ok_or_else(truncated)?;
        let flags = c.u16().ok_or_else(truncated)?;
        let method_code = c.u16().ok_or_else(truncated)?;
        let time = c.u16().ok_or_else(truncated)?;
        let date = c.u16().ok_or_else(truncated)?;
        let crc32 = c.u32().ok_or_else(truncated)?;
        let compressed_size = c.u32().ok_or_else(truncated)?;
        let uncompressed_size = c.u32().ok_or_else(truncated)?;
        let name_len = c.u16().ok_or_else(truncated)? as usize;
        let extra_len = c.u16().ok_or_else(truncated)? as usize;
        let comment_len = c.u16().ok_or_else(truncated)? as usize;
        let _disk_start = c.u16().ok_or_else(truncated)?;
        let _internal = c.u16().ok_or_else(truncated)?;
        let external_attrs = c.u32().ok_or_else(truncated)?;
        let local_offset = c.u32().ok_or_else(truncated)? as usize;
        let name = c.bytes(name_len).ok_or_else(truncated)?;
        c.bytes(extra_len + comment_len).ok_or_else(truncated)?;

        let path = String::from_utf8(name.to_vec()).map_err(|_| PackError::Malformed("non-UTF-8 entry name".into()))?;
        if compressed_size == u32::MAX || uncompressed_size == u32::MAX || local_offset == u32::MAX as usize {
            return Err(PackError::Oversize);
        }
        if flags & FLAG_ENCRYPTED != 0 {
            return Err(PackError::Encrypted(path));
        }
        let method = Method::from_code(method_code).ok_or(PackError::UnsupportedMethod { path: path.clone(), method: method_code })?;

        let mut local = Cursor::at(bytes, local_offset);
        if local.u32() != Some(LOCAL_SIG) {
            return Err(PackError::BadSignature { offset: local_offset });
        }
        let header_tail = local.bytes(26).ok_or_else(|| PackError::Malformed(format!("{path}: truncated local header")))?;
        let local_name_len = u16::from_le_bytes([header_tail[22], header_tail[23]]) as usize;
        let local_extra_len = u16::from_le_bytes([header_tail[24], header_tail[25]]) as usize;
        local
            .bytes(local_name_len + local_extra_len)
            .ok_or_else(|| PackError::Malformed(format!("{path}: truncated local header")))?;
        let payload = local
            .bytes(compressed_size as usize)
            .ok_or_else(|| PackError::Malformed(format!("{path}: truncated payload")))?
            .to_vec();

        entries.push(RawEntry {
            path,
            version_made_by,
            flags: flags & !FLAG_DATA_DESCRIPTOR,
            method,
            time,
            date,
            crc32,
            uncompressed_size,
            external_attrs,
            payload,
        });
    }
    Ok(entries)
}

fn write_archive(entries: &[RawEntry]) -> Result<Vec<u8>, PackError> {
    let count = u16::try_from(entries.len()).ok().filter(|&n| n != u16::MAX).ok_or(PackError::Oversize)?;
    let mut out = Vec::new();
    let mut offsets = Vec::with_capacity(entries.len());
    let to_u32 = |n: usize| u32::try_from(n).ok().filter(|&v| v != u32::MAX).ok_or(PackError::Oversize);

    for e in entries {
        offsets.push(to_u32(out.len())?);
        let needed: u16 = if e.method == Method::Deflate { 20 } else { 10 };
        out.extend_from_slice(&LOCAL_SIG.to_le_bytes());
        out.extend_from_slice(&needed.to_le_bytes());
        out.extend_from_slice(&e.flags.to_le_bytes());
        out.extend_from_slice(&e.method.code().to_le_bytes());
        out.extend_from_slice(&e.time.to_le_bytes());
        out.extend_from_slice(&e.date.to_le_bytes());
        out.extend_from_slice(&e.crc32.to_le_bytes());
        out.extend_from_slice(&to_u32(e.payload.len())?.to_le_bytes());
        out.extend_from_slice(&e.uncompressed_size.to_le_bytes());
        out.extend_from_slice(&(e.path.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(e.path.as_bytes());
        out.extend_from_slice(&e.payload);
    }

    let cd_offset = to_u32(out.len())?;
    for (e, &offset) in entries.iter().zip(&offsets) {
        let needed: u16 = if e.method == Method::Deflate { 20 } else { 10 };
        out.extend_from_slice(&CENTRAL_SIG.to_le_bytes());
        out.extend_from_slice(&e.version_made_by.to_le_bytes());
        out.extend_from_slice(&needed.to_le_bytes());
        out.extend_from_slice(&e.flags.to_le_bytes());
        out.extend_from_slice(&e.method.code().to_le_bytes());
        out.extend_from_slice(&e.time.to_le_bytes());
        out.extend_from_slice(&e.date.to_le_bytes());
        out.extend_from_slice(&e.crc32.to_le_bytes());
        out.extend_from_slice(&(e.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&e.uncompressed_size.to_le_bytes());
        out.extend_from_slice(&(e.path.len() as u16).to_le_bytes());
        out.extend_from_slice(&[0; 8]); // extra len, comment len, disk start, internal attrs
        out.extend_from_slice(&e.external_attrs.to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(e.path.as_bytes());
    }
    let cd_size = to_u32(out.len())? - cd_offset;

    out.extend_from_slice(&EOCD_SIG.to_le_bytes());
    out.extend_from_slice(&[0; 4]); // disk numbers
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&cd_size.to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    to_u32(out.len())?;
    Ok(out)
}

/// One summary per central-directory entry, in directory order.
pub fn list_entries(archive: &[u8]) -> Result<Vec<ArchiveEntrySummary>, PackError> {
    Ok(read_archive(archive)?.iter().map(RawEntry::summary).collect())
}

/// Every entry decompressed and checksum-verified, in directory order.
pub fn extract(archive: &[u8]) -> Result<Vec<(String, Vec<u8>)>, PackError> {
    read_archive(archive)?.into_iter().map(|e| Ok((e.path.clone(), e.data()?))).collect()
}

/// Builds a fresh archive from `(path, data)` pairs with fixed timestamps.
pub fn build_archive(files: &[(String, Vec<u8>)], method: Method) -> Result<Vec<u8>, PackError> {
    let entries = files
        .iter()
        .map(|(p, d)| RawEntry::new(p.clone(), d, method, (0, DOS_EPOCH_DATE)))
        .collect::<Result<Vec<_>, _>>()?;
    write_archive(&entries)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionPlan {
    pub template: Vec<u8>,
    pub placements: Vec<(String, Vec<u8>)>,
    pub metadata_path: String,
    pub metadata_updates: Vec<(String, String)>,
    pub deterministic: bool,
}

impl InjectionPlan {
    pub fn new(template: Vec<u8>) -> Self {
        InjectionPlan {
            template,
            placements: Vec::new(),
            metadata_path: DEFAULT_METADATA_PATH.to_string(),
            metadata_updates: Vec::new(),
            deterministic: true,
        }
    }
}

/// Archive paths are `/`-separated, relative and free of `..`.
pub fn is_valid_archive_path(path: &str) -> bool {
    crate::model::is_safe_relative_path(path)
}

/// Parses `Key: Value` lines. Lines without a separator are kept verbatim.
fn parse_metadata(text: &str) -> Vec<(Option<String>, String)> {
    text.lines()
        .map(|line| {
            let line = line.strip_suffix('\r').unwrap_or(line);
            match line.split_once(": ") {
                Some((k, v)) if !k.is_empty() => (Some(k.to_string()), v.to_string()),
                _ => (None, line.to_string()),
            }
        })
        .collect()
}

fn render_metadata(lines: &[(Option<String>, String)]) -> String {
    lines
        .iter()
        .map(|(k, v)| match k {
            Some(k) => format!("{k}: {v}\n"),
            None => format!("{v}\n"),
        })
        .collect()
}

/// Value of `key` in a metadata manifest.
pub fn metadata_value(text: &str, key: &str) -> Option<String> {
    parse_metadata(text).into_iter().find(|(k, _)| k.as_deref() == Some(key)).map(|(_, v)| v)
}

fn dos_now() -> (u16, u16) {
    use chrono::{Datelike, Timelike};
    let now = chrono::Local::now();
    let year = now.year().clamp(1980, 2107) as u16;
    let date = ((year - 1980) << 9) | ((now.month() as u16) << 5) | now.day() as u16;
    let time = ((now.hour() as u16) << 11) | ((now.minute() as u16) << 5) | (now.second() as u16 / 2);
    (time, date)
}

/// Writes a new archive: template entries not shadowed by a placement, every
/// placement, and the updated metadata manifest.
pub fn inject(plan: &InjectionPlan) -> Result<Vec<u8>, PackError> {
    let mut placed = HashSet::new();
    for (path, _) in &plan.placements {
        if !is_valid_archive_path(path) {
            return Err(PackError::InvalidPath(path.clone()));
        }
        if !placed.insert(path.as_str()) {
            return Err(PackError::PathCollision(path.clone()));
        }
    }
    let rewrite_metadata = !plan.metadata_updates.is_empty();
    if rewrite_metadata {
        if !is_valid_archive_path(&plan.metadata_path) {
            return Err(PackError::InvalidPath(plan.metadata_path.clone()));
        }
        if placed.contains(plan.metadata_path.as_str()) {
            return Err(PackError::PathCollision(plan.metadata_path.clone()));
        }
    }

    let template = read_archive(&plan.template)?;
    let stamp = if plan.deterministic { (0, DOS_EPOCH_DATE) } else { dos_now() };

    let mut metadata = Vec::new();
    let mut entries: Vec<RawEntry> = Vec::with_capacity(template.len() + plan.placements.len() + 1);
    for e in template {
        if placed.contains(e.path.as_str()) {
            continue;
        }
        if rewrite_metadata && e.path == plan.metadata_path {
            metadata = parse_metadata(&String::from_utf8_lossy(&e.data()?));
            continue;
        }
        entries.push(e);
    }

    let placement_method = |data: &[u8]| {
        if plan.deterministic || data.len() < 64 {
            Method::Stored
        } else {
            Method::Deflate
        }
    };
    for (path, data) in &plan.placements {
        let mut entry = RawEntry::new(path.clone(), data, placement_method(data), stamp)?;
        if entry.method == Method::Deflate && entry.payload.len() >= data.len() {
            entry = RawEntry::new(path.clone(), data, Method::Stored, stamp)?;
        }
        entries.push(entry);
    }

    if rewrite_metadata {
        for (key, value) in &plan.metadata_updates {
            match metadata.iter_mut().find(|(k, _)| k.as_deref() == Some(key.as_str())) {
                Some(line) => line.1 = value.clone(),
                None => metadata.push((Some(key.clone()), value.clone())),
            }
        }
        let text = render_metadata(&metadata);
        entries.push(RawEntry::new(plan.metadata_path.clone(), text.as_bytes(), placement_method(text.as_bytes()), stamp)?);
    }

    if plan.deterministic {
        for e in &mut entries {
            e.time = 0;
            e.date = DOS_EPOCH_DATE;
        }
        entries.sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
    }
    write_archive(&entries)
}

/// Archive locations for bundle files. `assets` is a directory prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathMap {
    pub index: String,
    pub content: String,
    pub theme: String,
    pub font: String,
    pub assets: String,
}

impl Default for PathMap {
    fn default() -> Self {
        PathMap {
            index: "content/index.bin".into(),
            content: "content/content.bin".into(),
            theme: "content/theme.bin".into(),
            font: "content/font.bin".into(),
            assets: "content/assets".into(),
        }
    }
}

impl PathMap {
    /// Applies a `key=path` override; keys are `index`, `content`, `theme`, `font` and `assets`.
    pub fn set(&mut self, spec: &str) -> Result<(), String> {
        let (key, path) = spec.split_once('=').ok_or_else(|| format!("expected key=path, got {spec:?}"))?;
        let slot = match key {
            "index" => &mut self.index,
            "content" => &mut self.content,
            "theme" => &mut self.theme,
            "font" => &mut self.font,
            "assets" => &mut self.assets,
            _ => return Err(format!("unknown path-map key {key:?}")),
        };
        *slot = path.trim_end_matches('/').to_string();
        Ok(())
    }
}

/// Plan placing a compiled bundle into `template`, recording its page count
/// and sizes in the metadata manifest.
pub fn bundle_plan(
    template: Vec<u8>,
    files: &crate::bundle::BundleFiles,
    paths: &PathMap,
    deterministic: bool,
) -> Result<InjectionPlan, crate::bundle::BundleError> {
    let index = crate::bundle::decode_index(&files.index)?;
    let mut placements = vec![
        (paths.index.clone(), files.index.clone()),
        (paths.content.clone(), files.content.clone()),
        (paths.theme.clone(), files.theme.clone()),
        (paths.font.clone(), files.font.clone()),
    ];
    placements.extend(files.assets.iter().map(|(r, bytes)| (format!("{}/{r}", paths.assets), bytes.clone())));
    let metadata_updates = vec![
        ("Bundle-Format".to_string(), index.version.to_string()),
        ("Bundle-Pages".to_string(), index.entries.len().to_string()),
        ("Bundle-Content-Length".to_string(), files.content.len().to_string()),
        ("Bundle-Index".to_string(), paths.index.clone()),
    ];
    Ok(InjectionPlan {
        template,
        placements,
        metadata_path: DEFAULT_METADATA_PATH.to_string(),
        metadata_updates,
        deterministic,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InjectionFinding {
    Malformed(String),
    MissingPlacement(String),
    SizeMismatch { path: String, expected: usize, actual: u32 },
    CrcMismatch { path: String },
    MissingMetadata(String),
    StaleKey { key: String, expected: String, found: Option<String> },
}

impl fmt::Display for InjectionFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InjectionFinding::Malformed(e) => write!(f, "output is not a readable archive: {e}"),
            InjectionFinding::MissingPlacement(p) => write!(f, "{p}: missing"),
            InjectionFinding::SizeMismatch { path, expected, actual } => {
                write!(f, "{path}: size {actual}, expected {expected}")
            }
            InjectionFinding::CrcMismatch { path } => write!(f, "{path}: crc mismatch"),
            InjectionFinding::MissingMetadata(p) => write!(f, "{p}: metadata manifest missing"),
            InjectionFinding::StaleKey { key, expected, found } => {
                write!(f, "metadata key {key}: expected {expected:?}, found {found:?}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InjectionReport {
    pub findings: Vec<InjectionFinding>,
}

impl InjectionReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Confirms every placement is present intact and every metadata key holds its update.
pub fn verify_injection(output: &[u8], plan: &InjectionPlan) -> InjectionReport {
    let mut findings = Vec::new();
    let entries = match read_archive(output) {
        Ok(e) => e,
        Err(e) => {
            findings.push(InjectionFinding::Malformed(e.to_string()));
            return InjectionReport { findings };
        }
    };
    let by_path: BTreeMap<&str, &RawEntry> = entries.iter().map(|e| (e.path.as_str(), e)).collect();

    for (path, data) in &plan.placements {
        let Some(entry) = by_path.get(path.as_str()) else {
            findings.push(InjectionFinding::MissingPlacement(path.clone()));
            continue;
        };
        if entry.uncompressed_size as usize != data.len() {
            findings.push(InjectionFinding::SizeMismatch {
                path: path.clone(),
                expected: data.len(),
                actual: entry.uncompressed_size,
            });
            continue;
        }
        let intact = entry.crc32 == crc32fast::hash(data) && entry.data().is_ok_and(|d| d == *data);
        if !intact {
            findings.push(InjectionFinding::CrcMismatch { path: path.clone() });
        }
    }

    if !plan.metadata_updates.is_empty() {
        match by_path.get(plan.metadata_path.as_str()).map(|e| e.data()) {
            Some(Ok(bytes)) => {
                let text = String::from_utf8_lossy(&bytes);
                for (key, expected) in &plan.metadata_updates {
                    let found = metadata_value(&text, key);
                    if found.as_ref() != Some(expected) {
                        findings.push(InjectionFinding::StaleKey { key: key.clone(), expected: expected.clone(), found });
                    }
                }
            }
            Some(Err(_)) => findings.push(InjectionFinding::CrcMismatch { path: plan.metadata_path.clone() }),
            None => findings.push(InjectionFinding::MissingMetadata(plan.metadata_path.clone())),
        }
    }
    InjectionReport { findings }
}
