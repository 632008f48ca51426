//! Binary bundle files: `index.bin`, `content.bin`, `theme.bin`, `font.bin`.
//!
//! The index is small and is read whole. It records, for every page in
//! preorder, where that page's region starts inside the content payload and
//! how long it is. [`read_page`] uses this to skip straight to one page and
//! read only its bytes, so a reader never has to pull in the whole content
//! file.
//!
//! All integers are big-endian. Strings are length-prefixed UTF-8: `string16`
//! (u16 length) everywhere except text bodies, which use `string32`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Cursor, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::font::{decode_font, encode_font, FontError, GlyphAtlas};
use crate::model::{flatten, rebuild_tree, ContentItem, ContentKind, PageNode, ProjectManifest, Rgb, Theme, ThemeColors, TreeError};
use crate::wire::{put_string16, put_string32, put_u16, put_u32, put_u64, put_u8, ByteReader, WireError};

pub const INDEX_MAGIC: &[u8; 4] = b"MCIX";
pub const CONTENT_MAGIC: &[u8; 4] = b"MCCT";
pub const THEME_MAGIC: &[u8; 4] = b"MCTH";
pub const BUNDLE_VERSION: u16 = 1;

/// Magic, version and page count at the top of `content.bin`.
pub const CONTENT_HEADER_LEN: u64 = 10;

pub const INDEX_FILE: &str = "index.bin";
pub const CONTENT_FILE: &str = "content.bin";
pub const THEME_FILE: &str = "theme.bin";
pub const FONT_FILE: &str = "font.bin";
pub const ASSETS_DIR: &str = "assets";

const FLAG_SPLASH: u8 = 1 << 0;
const FLAG_MUSIC: u8 = 1 << 1;
const FLAG_BACKGROUND: u8 = 1 << 2;

/// A page's content record: the wire form of a [`ContentItem`].
pub type ContentRecord = ContentItem;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{file}: bad magic {found:?}")]
    BadMagic { file: &'static str, found: [u8; 4] },
    #[error("{file}: unsupported version {version}")]
    UnsupportedVersion { file: &'static str, version: u16 },
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Font(#[from] FontError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("index entry {position}: offset {offset} does not follow previous offset {previous}")]
    NonMonotoneOffset { position: usize, previous: u64, offset: u64 },
    #[error("{file}: {count} trailing bytes")]
    TrailingBytes { file: &'static str, count: usize },
    #[error("unknown page {0}")]
    UnknownPage(u32),
    #[error("unknown content kind tag {0}")]
    UnknownKind(u8),
    #[error("page {page_id}: {detail}")]
    RecordDecode { page_id: u32, detail: String },
    #[error("page {page_id}: records consumed {consumed} of {expected} region bytes")]
    RegionMismatch { page_id: u32, expected: u32, consumed: usize },
    #[error("content file holds {content} pages, index lists {index}")]
    PageCountMismatch { index: u32, content: u32 },
    #[error("theme palette is empty")]
    EmptyPalette,
    #[error("theme palette has {0} colours, at most 255 allowed")]
    PaletteTooLarge(usize),
    #[error("splash enabled without a splash image")]
    SplashWithoutImage,
    #[error("theme flag for {0} disagrees with its asset ref")]
    ThemeFlagMismatch(&'static str),
    #[error("page {page_id}: U+{codepoint:04X} has no glyph in the font")]
    Unencodable { codepoint: u32, page_id: u32 },
    #[error("content payload exceeds 2^64 bytes")]
    OffsetOverflow,
    #[error("{what} too large ({size})")]
    TooLarge { what: &'static str, size: usize },
    #[error("missing asset {0:?}")]
    MissingAsset(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Whether compilation may fall back to the replacement glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coverage {
    /// Every letter in titles and text must have a glyph.
    #[default]
    Strict,
    /// Uncovered letters render as the replacement glyph.
    AllowReplacement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub page_id: u32,
    pub parent_id: u32,
    pub child_count: u16,
    pub title: String,
    pub content_offset: u64,
    pub content_length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleIndex {
    pub version: u16,
    pub entries: Vec<IndexEntry>,
}

impl BundleIndex {
    pub fn entry(&self, page_id: u32) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.page_id == page_id)
    }

    pub fn position(&self, page_id: u32) -> Option<usize> {
        self.entries.iter().position(|e| e.page_id == page_id)
    }

    /// Child page ids of `page_id` (or of the root level for [`crate::model::ROOT_PARENT`]), in order.
    pub fn children_of(&self, page_id: u32) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().filter(move |e| e.parent_id == page_id).map(|e| e.page_id)
    }

    /// Sum of all region lengths, i.e. the expected payload size.
    pub fn payload_len(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.content_length)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BundleFiles {
    pub index: Vec<u8>,
    pub content: Vec<u8>,
    pub theme: Vec<u8>,
    pub font: Vec<u8>,
    pub assets: BTreeMap<String, Vec<u8>>,
}

impl BundleFiles {
    pub fn write_to_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(INDEX_FILE), &self.index)?;
        fs::write(dir.join(CONTENT_FILE), &self.content)?;
        fs::write(dir.join(THEME_FILE), &self.theme)?;
        fs::write(dir.join(FONT_FILE), &self.font)?;
        for (name, bytes) in &self.assets {
            let path = dir.join(ASSETS_DIR).join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, bytes)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> io::Result<Self> {
        let assets_dir = dir.join(ASSETS_DIR);
        let mut assets = BTreeMap::new();
        for name in crate::model::list_assets(&assets_dir)? {
            let bytes = fs::read(assets_dir.join(&name))?;
            assets.insert(name, bytes);
        }
        Ok(BundleFiles {
            index: fs::read(dir.join(INDEX_FILE))?,
            content: fs::read(dir.join(CONTENT_FILE))?,
            theme: fs::read(dir.join(THEME_FILE))?,
            font: fs::read(dir.join(FONT_FILE))?,
            assets,
        })
    }

    pub fn total_len(&self) -> usize {
        self.index.len() + self.content.len() + self.theme.len() + self.font.len()
    }
}

fn check_header(r: &mut ByteReader<'_>, magic: &[u8; 4], file: &'static str) -> Result<(), BundleError> {
    let found: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if &found != magic {
        return Err(BundleError::BadMagic { file, found });
    }
    let version = r.u16()?;
    if version != BUNDLE_VERSION {
        return Err(BundleError::UnsupportedVersion { file, version });
    }
    Ok(())
}

pub fn encode_record(item: &ContentItem, out: &mut Vec<u8>) -> Result<(), BundleError> {
    put_u8(out, item.kind().tag());
    match item {
        ContentItem::Text { text, color_index, font_id } => {
            put_u8(out, *color_index);
            put_u8(out, *font_id);
            put_string32(out, text)?;
        }
        ContentItem::Image { asset_ref, caption }
        | ContentItem::Audio { asset_ref, caption }
        | ContentItem::Video { asset_ref, caption } => {
            put_string16(out, asset_ref)?;
            put_string16(out, caption)?;
        }
        ContentItem::PhoneNumber { value, label }
        | ContentItem::Email { value, label }
        | ContentItem::WebLink { value, label } => {
            put_string16(out, value)?;
            put_string16(out, label)?;
        }
    }
    Ok(())
}

pub fn decode_record(r: &mut ByteReader<'_>) -> Result<ContentItem, BundleError> {
    let tag = r.u8()?;
    let kind = ContentKind::from_tag(tag).ok_or(BundleError::UnknownKind(tag))?;
    Ok(match kind {
        ContentKind::Text => {
            let color_index = r.u8()?;
            let font_id = r.u8()?;
            ContentItem::Text { color_index, font_id, text: r.string32()? }
        }
        ContentKind::Image | ContentKind::Audio | ContentKind::Video => {
            let asset_ref = r.string16()?;
            let caption = r.string16()?;
            match kind {
                ContentKind::Image => ContentItem::Image { asset_ref, caption },
                ContentKind::Audio => ContentItem::Audio { asset_ref, caption },
                _ => ContentItem::Video { asset_ref, caption },
            }
        }
        ContentKind::PhoneNumber | ContentKind::Email | ContentKind::WebLink => {
            let value = r.string16()?;
            let label = r.string16()?;
            match kind {
                ContentKind::PhoneNumber => ContentItem::PhoneNumber { value, label },
                ContentKind::Email => ContentItem::Email { value, label },
                _ => ContentItem::WebLink { value, label },
            }
        }
    })
}

/// One page region: record count followed by the records.
pub fn encode_region(items: &[ContentItem]) -> Result<Vec<u8>, BundleError> {
    let count = u16::try_from(items.len()).map_err(|_| BundleError::TooLarge { what: "page item count", size: items.len() })?;
    let mut out = Vec::new();
    put_u16(&mut out, count);
    for item in items {
        encode_record(item, &mut out)?;
    }
    Ok(out)
}

/// Decodes a page region, which must be consumed exactly.
pub fn decode_region(region: &[u8], page_id: u32) -> Result<Vec<ContentItem>, BundleError> {
    let mut r = ByteReader::new(region);
    let wrap = |e: BundleError| BundleError::RecordDecode { page_id, detail: e.to_string() };
    let count = r.u16().map_err(|e| wrap(e.into()))?;
    let mut items = Vec::with_capacity(usize::from(count));
    for _ in 0..count {
        items.push(decode_record(&mut r).map_err(wrap)?);
    }
    if r.remaining() != 0 {
        return Err(BundleError::RegionMismatch { page_id, expected: region.len() as u32, consumed: r.position() });
    }
    Ok(items)
}

pub fn encode_index(index: &BundleIndex) -> Result<Vec<u8>, BundleError> {
    let count = u32::try_from(index.entries.len()).map_err(|_| BundleError::TooLarge { what: "page count", size: index.entries.len() })?;
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    put_u16(&mut out, index.version);
    put_u32(&mut out, count);
    for e in &index.entries {
        put_u32(&mut out, e.page_id);
        put_u32(&mut out, e.parent_id);
        put_u16(&mut out, e.child_count);
        put_string16(&mut out, &e.title)?;
        put_u64(&mut out, e.content_offset);
        put_u32(&mut out, e.content_length);
    }
    Ok(out)
}

pub fn decode_index(bytes: &[u8]) -> Result<BundleIndex, BundleError> {
    let mut r = ByteReader::new(bytes);
    check_header(&mut r, INDEX_MAGIC, INDEX_FILE)?;
    let count = r.u32()?;
    let mut entries: Vec<IndexEntry> = Vec::with_capacity((count as usize).min(r.remaining() / 24));
    for position in 0..count as usize {
        let entry = IndexEntry {
            page_id: r.u32()?,
            parent_id: r.u32()?,
            child_count: r.u16()?,
            title: r.string16()?,
            content_offset: r.u64()?,
            content_length: r.u32()?,
        };
        if let Some(prev) = entries.last() {
            if entry.content_offset <= prev.content_offset {
                return Err(BundleError::NonMonotoneOffset {
                    position,
                    previous: prev.content_offset,
                    offset: entry.content_offset,
                });
            }
        }
        entries.push(entry);
    }
    if r.remaining() != 0 {
        return Err(BundleError::TrailingBytes { file: INDEX_FILE, count: r.remaining() });
    }
    Ok(BundleIndex { version: BUNDLE_VERSION, entries })
}

fn put_rgb(out: &mut Vec<u8>, c: Rgb) {
    out.extend_from_slice(&[c.r, c.g, c.b]);
}

fn get_rgb(r: &mut ByteReader<'_>) -> Result<Rgb, BundleError> {
    Ok(Rgb::new(r.u8()?, r.u8()?, r.u8()?))
}

/// Encodes the theme settings file. A splash image is only written while the
/// splash screen is enabled (see [`Theme::normalized`]).
pub fn encode_theme(theme: &Theme) -> Result<Vec<u8>, BundleError> {
    if theme.palette.is_empty() {
        return Err(BundleError::EmptyPalette);
    }
    let palette_count =
        u8::try_from(theme.palette.len()).map_err(|_| BundleError::PaletteTooLarge(theme.palette.len()))?;
    if theme.splash_enabled && theme.splash_image.is_none() {
        return Err(BundleError::SplashWithoutImage);
    }
    let theme = theme.normalized();
    let mut flags = 0;
    if theme.splash_enabled {
        flags |= FLAG_SPLASH;
    }
    if theme.background_music.is_some() {
        flags |= FLAG_MUSIC;
    }
    if theme.background_image.is_some() {
        flags |= FLAG_BACKGROUND;
    }

    let mut out = Vec::new();
    out.extend_from_slice(THEME_MAGIC);
    put_u16(&mut out, BUNDLE_VERSION);
    put_u8(&mut out, flags);
    let c = &theme.colors;
    for color in [c.background, c.text, c.highlight, c.header] {
        put_rgb(&mut out, color);
    }
    put_u8(&mut out, palette_count);
    for &color in &theme.palette {
        put_rgb(&mut out, color);
    }
    for asset in [&theme.splash_image, &theme.background_image, &theme.background_music] {
        put_string16(&mut out, asset.as_deref().unwrap_or(""))?;
    }
    Ok(out)
}

pub fn decode_theme(bytes: &[u8]) -> Result<Theme, BundleError> {
    let mut r = ByteReader::new(bytes);
    check_header(&mut r, THEME_MAGIC, THEME_FILE)?;
    let flags = r.u8()?;
    let colors = ThemeColors { background: get_rgb(&mut r)?, text: get_rgb(&mut r)?, highlight: get_rgb(&mut r)?, header: get_rgb(&mut r)? };
    let palette_count = r.u8()?;
    if palette_count == 0 {
        return Err(BundleError::EmptyPalette);
    }
    let palette = (0..palette_count).map(|_| get_rgb(&mut r)).collect::<Result<Vec<_>, _>>()?;
    let mut asset = |flag: u8, name: &'static str| -> Result<Option<String>, BundleError> {
        let s = r.string16()?;
        match (flags & flag != 0, s.is_empty()) {
            (true, false) => Ok(Some(s)),
            (false, true) => Ok(None),
            (true, true) if flag == FLAG_SPLASH => Err(BundleError::SplashWithoutImage),
            _ => Err(BundleError::ThemeFlagMismatch(name)),
        }
    };
    let splash_image = asset(FLAG_SPLASH, "splash image")?;
    let background_image = asset(FLAG_BACKGROUND, "background image")?;
    let background_music = asset(FLAG_MUSIC, "background music")?;
    if r.remaining() != 0 {
        return Err(BundleError::TrailingBytes { file: THEME_FILE, count: r.remaining() });
    }
    Ok(Theme {
        colors,
        palette,
        splash_enabled: flags & FLAG_SPLASH != 0,
        splash_image,
        background_image,
        background_music,
    })
}

/// Letters in `s` the atlas cannot draw without the replacement glyph.
fn uncovered(atlas: &GlyphAtlas, s: &str) -> Option<char> {
    s.chars().find(|&c| !c.is_whitespace() && !atlas.covers(c))
}

/// Compiles a validated manifest into the four bundle files plus the assets it references.
/// Output is a pure function of the inputs.
pub fn encode_bundle(
    manifest: &ProjectManifest,
    atlas: &GlyphAtlas,
    assets: &BTreeMap<String, Vec<u8>>,
    coverage: Coverage,
) -> Result<BundleFiles, BundleError> {
    let pages = flatten(manifest);
    let mut content = Vec::new();
    content.extend_from_slice(CONTENT_MAGIC);
    put_u16(&mut content, BUNDLE_VERSION);
    put_u32(&mut content, u32::try_from(pages.len()).map_err(|_| BundleError::TooLarge { what: "page count", size: pages.len() })?);

    let mut entries = Vec::with_capacity(pages.len());
    let mut offset: u64 = 0;
    let mut referenced = HashSet::new();
    let mut seen = HashSet::new();
    for (page, parent_id) in pages {
        if !seen.insert(page.page_id) {
            return Err(TreeError::DuplicatePageId(page.page_id).into());
        }
        if coverage == Coverage::Strict {
            let texts = std::iter::once(page.title.as_str()).chain(page.items.iter().filter_map(|i| match i {
                ContentItem::Text { text, .. } => Some(text.as_str()),
                _ => None,
            }));
            for text in texts {
                if let Some(c) = uncovered(atlas, text) {
                    return Err(BundleError::Unencodable { codepoint: c as u32, page_id: page.page_id });
                }
            }
        }
        referenced.extend(page.items.iter().filter_map(ContentItem::asset_ref));

        let region = encode_region(&page.items)?;
        let length = u32::try_from(region.len()).map_err(|_| BundleError::TooLarge { what: "page region", size: region.len() })?;
        let child_count = u16::try_from(page.children.len())
            .map_err(|_| BundleError::TooLarge { what: "child count", size: page.children.len() })?;
        entries.push(IndexEntry {
            page_id: page.page_id,
            parent_id,
            child_count,
            title: page.title.clone(),
            content_offset: offset,
            content_length: length,
        });
        offset = offset.checked_add(u64::from(length)).ok_or(BundleError::OffsetOverflow)?;
        content.extend_from_slice(&region);
    }

    let theme = manifest.theme.normalized();
    referenced.extend(theme.asset_refs());
    let mut bundle_assets = BTreeMap::new();
    for r in referenced {
        let bytes = assets.get(r).ok_or_else(|| BundleError::MissingAsset(r.to_string()))?;
        bundle_assets.insert(r.to_string(), bytes.clone());
    }

    Ok(BundleFiles {
        index: encode_index(&BundleIndex { version: BUNDLE_VERSION, entries })?,
        content,
        theme: encode_theme(&theme)?,
        font: encode_font(atlas)?,
        assets: bundle_assets,
    })
}

/// Sequential byte source that can move forward without reading.
pub trait SkipRead: Read {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()>;
}

impl<T: AsRef<[u8]>> SkipRead for Cursor<T> {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()> {
        let len = self.get_ref().as_ref().len() as u64;
        let target = self.position().saturating_add(n);
        if target > len {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "skip past end of content"));
        }
        self.set_position(target);
        Ok(())
    }
}

impl SkipRead for File {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()> {
        let n = i64::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "skip too large"))?;
        self.seek(SeekFrom::Current(n)).map(|_| ())
    }
}

impl<R: Read + Seek> SkipRead for BufReader<R> {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()> {
        let n = i64::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "skip too large"))?;
        self.seek_relative(n)
    }
}

impl<R: SkipRead + ?Sized> SkipRead for Box<R> {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()> {
        (**self).skip_bytes(n)
    }
}

impl<R: SkipRead + ?Sized> SkipRead for &mut R {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()> {
        (**self).skip_bytes(n)
    }
}

/// Skips by reading and discarding, for sources that cannot seek.
#[derive(Debug)]
pub struct DiscardSkip<R>(pub R);

impl<R: Read> Read for DiscardSkip<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.0.read(buf)
    }
}

impl<R: Read> SkipRead for DiscardSkip<R> {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()> {
        let copied = io::copy(&mut (&mut self.0).take(n), &mut io::sink())?;
        if copied < n {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "skip past end of content"));
        }
        Ok(())
    }
}

/// Counts bytes read and bytes skipped through the wrapped reader.
#[derive(Debug)]
pub struct CountingReader<R> {
    inner: R,
    pub bytes_read: u64,
    pub bytes_skipped: u64,
}

impl<R> CountingReader<R> {
    pub fn new(inner: R) -> Self {
        CountingReader { inner, bytes_read: 0, bytes_skipped: 0 }
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.bytes_read += n as u64;
        Ok(n)
    }
}

impl<R: SkipRead> SkipRead for CountingReader<R> {
    fn skip_bytes(&mut self, n: u64) -> io::Result<()> {
        self.inner.skip_bytes(n)?;
        self.bytes_skipped += n;
        Ok(())
    }
}

/// Reads one page's records. The reader must be positioned at the start of
/// `content.bin`; only the header and the page's own region are read, the
/// bytes before the region are skipped.
pub fn read_page<R: SkipRead + ?Sized>(
    reader: &mut R,
    index: &BundleIndex,
    page_id: u32,
) -> Result<Vec<ContentRecord>, BundleError> {
    let entry = index.entry(page_id).ok_or(BundleError::UnknownPage(page_id))?;
    let mut header = [0u8; CONTENT_HEADER_LEN as usize];
    reader.read_exact(&mut header)?;
    let mut r = ByteReader::new(&header);
    check_header(&mut r, CONTENT_MAGIC, CONTENT_FILE)?;
    let count = r.u32()?;
    if count as usize != index.entries.len() {
        return Err(BundleError::PageCountMismatch { index: index.entries.len() as u32, content: count });
    }
    reader.skip_bytes(entry.content_offset)?;
    let mut region = vec![0u8; entry.content_length as usize];
    reader.read_exact(&mut region).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => {
            BundleError::RegionMismatch { page_id, expected: entry.content_length, consumed: 0 }
        }
        _ => e.into(),
    })?;
    decode_region(&region, page_id)
}

/// Opens fresh readers over a bundle's content file, each positioned at its start.
pub trait ContentSource: Send + Sync {
    fn open(&self) -> io::Result<Box<dyn SkipRead + Send>>;
}

/// Content held in memory.
#[derive(Debug, Clone)]
pub struct MemoryContent(pub Arc<Vec<u8>>);

impl ContentSource for MemoryContent {
    fn open(&self) -> io::Result<Box<dyn SkipRead + Send>> {
        Ok(Box::new(Cursor::new(SharedBytes(self.0.clone()))))
    }
}

#[derive(Debug, Clone)]
struct SharedBytes(Arc<Vec<u8>>);

impl AsRef<[u8]> for SharedBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Content read from disk on demand.
#[derive(Debug, Clone)]
pub struct FileContent(pub PathBuf);

impl ContentSource for FileContent {
    fn open(&self) -> io::Result<Box<dyn SkipRead + Send>> {
        Ok(Box::new(BufReader::new(File::open(&self.0)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BundleFinding {
    Undecodable { file: &'static str, detail: String },
    VersionMismatch { file: &'static str, version: u16 },
    PageCountMismatch { index: u32, content: u32 },
    Region { page_id: u32, detail: String },
    PayloadSize { expected: u64, actual: u64 },
    MissingAsset { page_id: Option<u32>, asset_ref: String },
}

impl fmt::Display for BundleFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BundleFinding::Undecodable { file, detail } => write!(f, "{file}: {detail}"),
            BundleFinding::VersionMismatch { file, version } => write!(f, "{file}: version {version} disagrees"),
            BundleFinding::PageCountMismatch { index, content } => {
                write!(f, "index lists {index} pages, content holds {content}")
            }
            BundleFinding::Region { page_id, detail } => write!(f, "page {page_id}: {detail}"),
            BundleFinding::PayloadSize { expected, actual } => {
                write!(f, "content payload is {actual} bytes, index covers {expected}")
            }
            BundleFinding::MissingAsset { page_id: Some(p), asset_ref } => write!(f, "page {p}: missing asset {asset_ref:?}"),
            BundleFinding::MissingAsset { page_id: None, asset_ref } => write!(f, "theme: missing asset {asset_ref:?}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerificationReport {
    pub findings: Vec<BundleFinding>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Cross-checks a full set of bundle files. Problems are reported, not raised.
pub fn verify_bundle(files: &BundleFiles) -> VerificationReport {
    let mut findings = Vec::new();
    let undecodable = |file: &'static str, e: &dyn fmt::Display, findings: &mut Vec<BundleFinding>| {
        findings.push(BundleFinding::Undecodable { file, detail: e.to_string() });
    };

    for (file, bytes) in
        [(INDEX_FILE, &files.index), (CONTENT_FILE, &files.content), (THEME_FILE, &files.theme), (FONT_FILE, &files.font)]
    {
        if let Some(v) = bytes.get(4..6) {
            let version = u16::from_be_bytes([v[0], v[1]]);
            if version != BUNDLE_VERSION {
                findings.push(BundleFinding::VersionMismatch { file, version });
            }
        }
    }

    let index = decode_index(&files.index).map_err(|e| undecodable(INDEX_FILE, &e, &mut findings)).ok();
    let theme = decode_theme(&files.theme).map_err(|e| undecodable(THEME_FILE, &e, &mut findings)).ok();
    if let Err(e) = decode_font(&files.font) {
        undecodable(FONT_FILE, &e, &mut findings);
    }

    if let Some(theme) = &theme {
        for r in theme.asset_refs() {
            if !files.assets.contains_key(r) {
                findings.push(BundleFinding::MissingAsset { page_id: None, asset_ref: r.to_string() });
            }
        }
    }

    let mut header = ByteReader::new(&files.content);
    let content_pages = check_header(&mut header, CONTENT_MAGIC, CONTENT_FILE).and_then(|_| Ok(header.u32()?));
    let content_pages = match content_pages {
        Ok(n) => n,
        Err(e) => {
            undecodable(CONTENT_FILE, &e, &mut findings);
            return VerificationReport { findings };
        }
    };
    let Some(index) = index else {
        return VerificationReport { findings };
    };
    if content_pages as usize != index.entries.len() {
        findings.push(BundleFinding::PageCountMismatch { index: index.entries.len() as u32, content: content_pages });
    }

    let payload = &files.content[CONTENT_HEADER_LEN as usize..];
    let mut expected_offset = 0u64;
    for e in &index.entries {
        if e.content_offset != expected_offset {
            findings.push(BundleFinding::Region {
                page_id: e.page_id,
                detail: format!("region starts at {} but previous region ends at {expected_offset}", e.content_offset),
            });
        }
        expected_offset = e.content_offset.saturating_add(u64::from(e.content_length));
        let start = e.content_offset as usize;
        let Some(region) = payload.get(start..start.saturating_add(e.content_length as usize)) else {
            findings.push(BundleFinding::Region {
                page_id: e.page_id,
                detail: format!(
                    "region {}..{} extends past the {}-byte payload",
                    e.content_offset,
                    expected_offset,
                    payload.len()
                ),
            });
            continue;
        };
        match decode_region(region, e.page_id) {
            Ok(items) => {
                for r in items.iter().filter_map(ContentItem::asset_ref) {
                    if !files.assets.contains_key(r) {
                        findings.push(BundleFinding::MissingAsset { page_id: Some(e.page_id), asset_ref: r.to_string() });
                    }
                }
            }
            Err(err) => findings.push(BundleFinding::Region { page_id: e.page_id, detail: err.to_string() }),
        }
    }
    if index.payload_len() != payload.len() as u64 {
        findings.push(BundleFinding::PayloadSize { expected: index.payload_len(), actual: payload.len() as u64 });
    }
    VerificationReport { findings }
}

/// Logical content recovered from bundle files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedBundle {
    pub roots: Vec<PageNode>,
    pub theme: Theme,
    pub atlas: GlyphAtlas,
}

/// Decodes every page back into a page tree.
pub fn decode_bundle(files: &BundleFiles) -> Result<DecodedBundle, BundleError> {
    let index = decode_index(&files.index)?;
    let mut flat = Vec::with_capacity(index.entries.len());
    let mut reader = Cursor::new(&files.content);
    for e in &index.entries {
        reader.set_position(0);
        let items = read_page(&mut reader, &index, e.page_id)?;
        flat.push((PageNode { page_id: e.page_id, title: e.title.clone(), items, children: Vec::new() }, e.parent_id));
    }
    let roots = rebuild_tree(flat)?;
    Ok(DecodedBundle { roots, theme: decode_theme(&files.theme)?, atlas: decode_font(&files.font)? })
}

/// A bundle opened for runtime use: index, theme and font resident, content on demand.
#[derive(Clone)]
pub struct BundleHandle {
    pub index: BundleIndex,
    pub theme: Theme,
    pub atlas: GlyphAtlas,
    pub content: Arc<dyn ContentSource>,
}

impl fmt::Debug for BundleHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BundleHandle").field("pages", &self.index.entries.len()).finish_non_exhaustive()
    }
}

impl BundleHandle {
    pub fn from_files(files: &BundleFiles) -> Result<Self, BundleError> {
        Ok(BundleHandle {
            index: decode_index(&files.index)?,
            theme: decode_theme(&files.theme)?,
            atlas: decode_font(&files.font)?,
            content: Arc::new(MemoryContent(Arc::new(files.content.clone()))),
        })
    }

    /// Opens a compiled bundle directory; `content.bin` stays on disk.
    pub fn open_dir(dir: &Path) -> Result<Self, BundleError> {
        Ok(BundleHandle {
            index: decode_index(&fs::read(dir.join(INDEX_FILE))?)?,
            theme: decode_theme(&fs::read(dir.join(THEME_FILE))?)?,
            atlas: decode_font(&fs::read(dir.join(FONT_FILE))?)?,
            content: Arc::new(FileContent(dir.join(CONTENT_FILE))),
        })
    }

    pub fn with_content(mut self, content: Arc<dyn ContentSource>) -> Self {
        self.content = content;
        self
    }

    pub fn read_page(&self, page_id: u32) -> Result<Vec<ContentRecord>, BundleError> {
        let mut reader = self.content.open()?;
        read_page(&mut reader, &self.index, page_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::font::{generate_test_font, JoiningClass};
    use crate::model::{PageNode, ROOT_PARENT};

    fn atlas() -> GlyphAtlas {
        let alphabet: Vec<_> = ('A'..='Z').chain('a'..='z').chain('0'..='9').map(|c| (c, JoiningClass::NonJoining)).collect();
        generate_test_font(&alphabet).unwrap()
    }

    fn manifest(roots: Vec<PageNode>) -> ProjectManifest {
        ProjectManifest {
            title: "t".into(),
            version: "1".into(),
            theme: Theme::default(),
            font_source: "builtin:arabic".into(),
            asset_dir: "assets".into(),
            roots,
        }
    }

    fn text(s: &str) -> ContentItem {
        ContentItem::Text { text: s.into(), color_index: 0, font_id: 0 }
    }

    fn audio(r: &str) -> ContentItem {
        ContentItem::Audio { asset_ref: r.into(), caption: String::new() }
    }

    fn assets() -> BTreeMap<String, Vec<u8>> {
        [("a.mid".to_string(), b"MThd".to_vec())].into()
    }

    #[test]
    fn single_text_page() {
        let mut page = PageNode::new(1, "Home");
        page.items.push(text("A"));
        let m = manifest(vec![page]);
        let files = encode_bundle(&m, &atlas(), &assets(), Coverage::Strict).unwrap();
        let index = decode_index(&files.index).unwrap();
        assert_eq!(index.entries.len(), 1);
        let e = &index.entries[0];
        assert_eq!((e.page_id, e.parent_id, e.content_offset), (1, ROOT_PARENT, 0));
        // record_count(2) + kind(1) + color(1) + font(1) + len(4) + "A"(1)
        assert_eq!(e.content_length, 10);
        assert_eq!(encode_bundle(&m, &atlas(), &assets(), Coverage::Strict).unwrap(), files);
    }

    #[test]
    fn three_page_offsets_are_contiguous() {
        // 1 -> (2, 3); items sized by hand from the wire format.
        let mut root = PageNode::new(1, "r");
        root.items.push(text("ab")); // 2 + 1+1+1+4+2 = 11
        let mut c2 = PageNode::new(2, "c2");
        c2.items.push(audio("a.mid")); // 2 + 1 + (2+5) + (2+0) = 12
        let c3 = PageNode::new(3, "c3"); // 2
        root.children = vec![c2, c3];
        let files = encode_bundle(&manifest(vec![root]), &atlas(), &assets(), Coverage::Strict).unwrap();
        let index = decode_index(&files.index).unwrap();
        let spans: Vec<_> = index.entries.iter().map(|e| (e.page_id, e.content_offset, e.content_length)).collect();
        assert_eq!(spans, [(1, 0, 11), (2, 11, 12), (3, 23, 2)]);
        assert_eq!(files.content.len() as u64, CONTENT_HEADER_LEN + 25);
        assert_eq!(index.entries[0].child_count, 2);
    }

    #[test]
    fn page_order_survives() {
        let mut page = PageNode::new(1, "p");
        page.items = vec![audio("a.mid"), text("x")];
        let files = encode_bundle(&manifest(vec![page.clone()]), &atlas(), &assets(), Coverage::Strict).unwrap();
        let index = decode_index(&files.index).unwrap();
        let items = read_page(&mut Cursor::new(&files.content), &index, 1).unwrap();
        assert_eq!(items, page.items);
    }

    #[test]
    fn uncovered_letters() {
        let mut page = PageNode::new(4, "p");
        page.items.push(text("x\u{0628}"));
        let m = manifest(vec![page]);
        let err = encode_bundle(&m, &atlas(), &assets(), Coverage::Strict).unwrap_err();
        assert!(matches!(err, BundleError::Unencodable { codepoint: 0x0628, page_id: 4 }));
        assert!(encode_bundle(&m, &atlas(), &assets(), Coverage::AllowReplacement).is_ok());
    }

    #[test]
    fn index_errors() {
        let files = encode_bundle(&manifest(vec![PageNode::new(1, "p")]), &atlas(), &assets(), Coverage::Strict).unwrap();
        let mut bad = files.index.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_index(&bad), Err(BundleError::BadMagic { .. })));
        assert!(matches!(decode_index(&files.index[..files.index.len() - 1]), Err(BundleError::Wire(WireError::Truncated { .. }))));

        let entries = [0u64, 100, 90]
            .iter()
            .enumerate()
            .map(|(i, &off)| IndexEntry {
                page_id: i as u32,
                parent_id: ROOT_PARENT,
                child_count: 0,
                title: String::new(),
                content_offset: off,
                content_length: 2,
            })
            .collect();
        let bytes = encode_index(&BundleIndex { version: 1, entries }).unwrap();
        assert!(matches!(decode_index(&bytes), Err(BundleError::NonMonotoneOffset { position: 2, .. })));

        let mut v2 = files.index.clone();
        v2[5] = 2;
        assert!(matches!(decode_index(&v2), Err(BundleError::UnsupportedVersion { version: 2, .. })));
    }

    #[test]
    fn theme_flags() {
        let theme = Theme::default();
        let bytes = encode_theme(&theme).unwrap();
        assert_eq!(bytes[6] & 1, 0);
        assert_eq!(decode_theme(&bytes).unwrap(), theme);

        let full = Theme {
            splash_enabled: true,
            splash_image: Some("s.png".into()),
            background_image: Some("bg.png".into()),
            background_music: Some("m.mid".into()),
            ..Theme::default()
        };
        let bytes = encode_theme(&full).unwrap();
        assert_eq!(bytes[6], 0b0000_0111);
        assert_eq!(decode_theme(&bytes).unwrap(), full);

        // palette_count sits after magic(4) version(2) flags(1) colors(12)
        let mut empty = encode_theme(&theme).unwrap();
        assert_eq!(empty[19], 1);
        empty[19] = 0;
        assert!(matches!(decode_theme(&empty), Err(BundleError::EmptyPalette)));

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"MCXX");
        assert!(matches!(decode_theme(&bad), Err(BundleError::BadMagic { .. })));
        let no_image = Theme { splash_enabled: true, ..Theme::default() };
        assert!(matches!(encode_theme(&no_image), Err(BundleError::SplashWithoutImage)));
    }

    #[test]
    fn read_page_skips_preceding_regions() {
        let pages: Vec<_> = (0..5)
            .map(|i| {
                let mut p = PageNode::new(i, format!("p{i}"));
                p.items.push(text(&"z".repeat(50)));
                p
            })
            .collect();
        let files = encode_bundle(&manifest(pages), &atlas(), &assets(), Coverage::Strict).unwrap();
        let index = decode_index(&files.index).unwrap();

        let mut first = CountingReader::new(Cursor::new(&files.content));
        read_page(&mut first, &index, 0).unwrap();
        assert_eq!(first.bytes_skipped, 0);

        let mut last = CountingReader::new(Cursor::new(&files.content));
        read_page(&mut last, &index, 4).unwrap();
        let e = index.entry(4).unwrap();
        assert_eq!(last.bytes_skipped, e.content_offset);
        assert_eq!(last.bytes_read, CONTENT_HEADER_LEN + u64::from(e.content_length));

        // Same contract through a reader that can only discard.
        let mut stream = DiscardSkip(&files.content[..]);
        assert_eq!(read_page(&mut stream, &index, 4).unwrap().len(), 1);

        let err = read_page(&mut Cursor::new(&files.content), &index, 99).unwrap_err();
        assert!(matches!(err, BundleError::UnknownPage(99)));
    }

    #[test]
    fn region_length_mismatch() {
        let mut page = PageNode::new(1, "p");
        page.items.push(text("abc"));
        let files = encode_bundle(&manifest(vec![page]), &atlas(), &assets(), Coverage::Strict).unwrap();
        let mut index = decode_index(&files.index).unwrap();
        let mut content = files.content.clone();
        content.push(0);
        index.entries[0].content_length += 1;
        let err = read_page(&mut Cursor::new(&content), &index, 1).unwrap_err();
        assert!(matches!(err, BundleError::RegionMismatch { page_id: 1, .. }), "{err}");
    }

    #[test]
    fn verification() {
        let mut a = PageNode::new(1, "a");
        a.items.push(audio("a.mid"));
        let mut b = PageNode::new(2, "b");
        b.items.push(text("hello"));
        let files = encode_bundle(&manifest(vec![a, b]), &atlas(), &assets(), Coverage::Strict).unwrap();
        assert!(verify_bundle(&files).is_clean(), "{:?}", verify_bundle(&files));

        let mut truncated = files.clone();
        truncated.content.pop();
        let report = verify_bundle(&truncated);
        assert!(report.findings.iter().any(|f| matches!(f, BundleFinding::Region { page_id: 2, .. })), "{report:?}");

        let mut missing = files.clone();
        missing.assets.clear();
        assert_eq!(
            verify_bundle(&missing).findings,
            [BundleFinding::MissingAsset { page_id: Some(1), asset_ref: "a.mid".into() }]
        );
    }

    #[test]
    fn dir_roundtrip() {
        let mut a = PageNode::new(1, "a");
        a.items.push(audio("a.mid"));
        let files = encode_bundle(&manifest(vec![a]), &atlas(), &assets(), Coverage::Strict).unwrap();
        let dir = tempfile::tempdir().unwrap();
        files.write_to_dir(dir.path()).unwrap();
        assert_eq!(BundleFiles::read_dir(dir.path()).unwrap(), files);
        let handle = BundleHandle::open_dir(dir.path()).unwrap();
        assert_eq!(handle.read_page(1).unwrap(), [audio("a.mid")]);
    }
}
