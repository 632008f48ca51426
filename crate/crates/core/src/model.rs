//! Authored content domain: the page tree, typed content items and the theme,
//! plus the JSON manifest that describes them.
//!
//! The manifest is the only authoring surface. Order matters everywhere: root
//! pages, child pages and the items of a page are kept exactly as written and
//! survive compilation into the binary bundle unchanged.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Parent id recorded for root pages. Page ids are 32-bit and 0 is legal.
pub const ROOT_PARENT: u32 = 0xFFFF_FFFF;

/// Wire-stable content kind. Tags 0..=6; 7 is reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContentKind {
    Text,
    Image,
    Audio,
    Video,
    PhoneNumber,
    Email,
    WebLink,
}

impl ContentKind {
    pub const ALL: [ContentKind; 7] = [
        ContentKind::Text,
        ContentKind::Image,
        ContentKind::Audio,
        ContentKind::Video,
        ContentKind::PhoneNumber,
        ContentKind::Email,
        ContentKind::WebLink,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }

    /// Manifest spelling of the kind.
    pub fn name(self) -> &'static str {
        match self {
            ContentKind::Text => "text",
            ContentKind::Image => "image",
            ContentKind::Audio => "audio",
            ContentKind::Video => "video",
            ContentKind::PhoneNumber => "phone",
            ContentKind::Email => "email",
            ContentKind::WebLink => "weblink",
        }
    }
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One typed item on a page. Animations are carried as `Video`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ContentItem {
    #[serde(rename = "text")]
    Text {
        text: String,
        #[serde(default)]
        color_index: u8,
        #[serde(default)]
        font_id: u8,
    },
    #[serde(rename = "image")]
    Image {
        asset_ref: String,
        #[serde(default)]
        caption: String,
    },
    #[serde(rename = "audio")]
    Audio {
        asset_ref: String,
        #[serde(default)]
        caption: String,
    },
    #[serde(rename = "video")]
    Video {
        asset_ref: String,
        #[serde(default)]
        caption: String,
    },
    #[serde(rename = "phone")]
    PhoneNumber {
        value: String,
        #[serde(default)]
        label: String,
    },
    #[serde(rename = "email")]
    Email {
        value: String,
        #[serde(default)]
        label: String,
    },
    #[serde(rename = "weblink")]
    WebLink {
        value: String,
        #[serde(default)]
        label: String,
    },
}

impl ContentItem {
    pub fn kind(&self) -> ContentKind {
        match self {
            ContentItem::Text { .. } => ContentKind::Text,
            ContentItem::Image { .. } => ContentKind::Image,
            ContentItem::Audio { .. } => ContentKind::Audio,
            ContentItem::Video { .. } => ContentKind::Video,
            ContentItem::PhoneNumber { .. } => ContentKind::PhoneNumber,
            ContentItem::Email { .. } => ContentKind::Email,
            ContentItem::WebLink { .. } => ContentKind::WebLink,
        }
    }

    pub fn asset_ref(&self) -> Option<&str> {
        match self {
            ContentItem::Image { asset_ref, .. }
            | ContentItem::Audio { asset_ref, .. }
            | ContentItem::Video { asset_ref, .. } => Some(asset_ref),
            _ => None,
        }
    }

    /// The string handed to a share action: text body, asset ref or contact value.
    pub fn share_payload(&self) -> &str {
        match self {
            ContentItem::Text { text, .. } => text,
            ContentItem::Image { asset_ref, .. }
            | ContentItem::Audio { asset_ref, .. }
            | ContentItem::Video { asset_ref, .. } => asset_ref,
            ContentItem::PhoneNumber { value, .. }
            | ContentItem::Email { value, .. }
            | ContentItem::WebLink { value, .. } => value,
        }
    }
}

/// 8-bit RGB colour, written as `#RRGGBB` in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::new(0, 0, 0);
    pub const WHITE: Rgb = Rgb::new(255, 255, 255);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    pub fn parse_hex(s: &str) -> Option<Rgb> {
        let hex = s.strip_prefix('#')?;
        if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        let v = u32::from_str_radix(hex, 16).ok()?;
        Some(Rgb::new((v >> 16) as u8, (v >> 8) as u8, v as u8))
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02X}{:02X}{:02X}", self.r, self.g, self.b)
    }
}

impl Serialize for Rgb {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Rgb::parse_hex(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("expected \"#RRGGBB\" colour, got {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeColors {
    pub background: Rgb,
    /// Default text colour.
    pub text: Rgb,
    pub highlight: Rgb,
    pub header: Rgb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub colors: ThemeColors,
    /// Text colours addressed by `ContentItem::Text::color_index`. 1..=255 entries.
    pub palette: Vec<Rgb>,
    #[serde(default)]
    pub splash_enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splash_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_music: Option<String>,
}

impl Theme {
    /// The theme as the binary settings file can carry it: a splash image is
    /// only kept while the splash screen is enabled.
    pub fn normalized(&self) -> Theme {
        let mut t = self.clone();
        if !t.splash_enabled {
            t.splash_image = None;
        }
        t
    }

    pub fn asset_refs(&self) -> impl Iterator<Item = &str> {
        [&self.splash_image, &self.background_image, &self.background_music]
            .into_iter()
            .filter_map(|r| r.as_deref())
    }
}

impl Default for Theme {
    fn default() -> Self {
        Theme {
            colors: ThemeColors {
                background: Rgb::WHITE,
                text: Rgb::BLACK,
                highlight: Rgb::new(0x1E, 0x88, 0xE5),
                header: Rgb::new(0x20, 0x30, 0x40),
            },
            palette: vec![Rgb::BLACK],
            splash_enabled: false,
            splash_image: None,
            background_image: None,
            background_music: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageNode {
    #[serde(rename = "id")]
    pub page_id: u32,
    pub title: String,
    #[serde(default)]
    pub items: Vec<ContentItem>,
    #[serde(default)]
    pub children: Vec<PageNode>,
}

impl PageNode {
    pub fn new(page_id: u32, title: impl Into<String>) -> Self {
        PageNode { page_id, title: title.into(), items: Vec::new(), children: Vec::new() }
    }

    /// Total number of pages in this subtree, including `self`.
    pub fn page_count(&self) -> usize {
        1 + self.children.iter().map(PageNode::page_count).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub title: String,
    pub version: String,
    pub theme: Theme,
    pub font_source: String,
    pub asset_dir: String,
    #[serde(rename = "pages")]
    pub roots: Vec<PageNode>,
}

impl ProjectManifest {
    pub fn page_count(&self) -> usize {
        self.roots.iter().map(PageNode::page_count).sum()
    }

    pub fn find_page(&self, page_id: u32) -> Option<&PageNode> {
        flatten(self).into_iter().map(|(p, _)| p).find(|p| p.page_id == page_id)
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema violation at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("duplicate page id {0}")]
    DuplicatePageId(u32),
}

/// Parses a JSON manifest. Page and item order is preserved as written.
pub fn parse_manifest(text: &str) -> Result<ProjectManifest, ManifestError> {
    let manifest: ProjectManifest = serde_json::from_str(text).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        match e.classify() {
            serde_json::error::Category::Data => ManifestError::Schema { line, column, message },
            _ => ManifestError::Syntax { line, column, message },
        }
    })?;
    if let Some(id) = first_duplicate_id(&manifest) {
        return Err(ManifestError::DuplicatePageId(id));
    }
    Ok(manifest)
}

/// Re-emits a manifest as pretty JSON that [`parse_manifest`] accepts.
pub fn to_json(manifest: &ProjectManifest) -> String {
    serde_json::to_string_pretty(manifest).expect("manifest serialization is infallible")
}

fn first_duplicate_id(manifest: &ProjectManifest) -> Option<u32> {
    let mut seen = HashSet::new();
    flatten(manifest).into_iter().map(|(p, _)| p.page_id).find(|id| !seen.insert(*id))
}

/// Preorder (depth-first, authored child order) listing of every page with
/// its parent id. Roots carry [`ROOT_PARENT`].
pub fn flatten(manifest: &ProjectManifest) -> Vec<(&PageNode, u32)> {
    fn walk<'a>(node: &'a PageNode, parent: u32, out: &mut Vec<(&'a PageNode, u32)>) {
        out.push((node, parent));
        for child in &node.children {
            walk(child, node.page_id, out);
        }
    }
    let mut out = Vec::with_capacity(manifest.page_count());
    for root in &manifest.roots {
        walk(root, ROOT_PARENT, &mut out);
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("page {page_id} names parent {parent_id}, which does not precede it")]
    OrphanPage { page_id: u32, parent_id: u32 },
    #[error("duplicate page id {0}")]
    DuplicatePageId(u32),
}

/// Inverse of [`flatten`]: rebuilds the forest from preorder `(page, parent_id)`
/// pairs. Children already present on the input pages are discarded.
pub fn rebuild_tree(
    flat: impl IntoIterator<Item = (PageNode, u32)>,
) -> Result<Vec<PageNode>, TreeError> {
    // Preorder guarantees the parent of each node is on the current root path.
    let mut roots: Vec<PageNode> = Vec::new();
    let mut path: Vec<PageNode> = Vec::new();
    let mut seen = HashSet::new();

    fn pop_into(path: &mut Vec<PageNode>, roots: &mut Vec<PageNode>) {
        let node = path.pop().expect("non-empty path");
        match path.last_mut() {
            Some(parent) => parent.children.push(node),
            None => roots.push(node),
        }
    }

    for (mut page, parent_id) in flat {
        page.children.clear();
        if !seen.insert(page.page_id) {
            return Err(TreeError::DuplicatePageId(page.page_id));
        }
        if parent_id == ROOT_PARENT {
            while !path.is_empty() {
                pop_into(&mut path, &mut roots);
            }
        } else {
            while path.last().is_some_and(|p| p.page_id != parent_id) {
                pop_into(&mut path, &mut roots);
            }
            if path.is_empty() {
                return Err(TreeError::OrphanPage { page_id: page.page_id, parent_id });
            }
        }
        path.push(page);
    }
    while !path.is_empty() {
        pop_into(&mut path, &mut roots);
    }
    Ok(roots)
}

/// Relative asset paths (with `/` separators) available under an asset directory.
pub type AssetListing = BTreeSet<String>;

/// Walks `dir` and returns every regular file relative to it.
pub fn list_assets(dir: &Path) -> std::io::Result<AssetListing> {
    let mut out = AssetListing::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(dir).expect("walkdir yields children of dir");
            let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
            out.insert(parts.join("/"));
        }
    }
    Ok(out)
}

/// Whether an asset ref is a plain relative path that stays inside the asset dir.
pub fn is_safe_relative_path(path: &str) -> bool {
    !path.is_empty()
        && !path.starts_with('/')
        && !path.contains('\\')
        && path.split('/').all(|seg| !seg.is_empty() && seg != "." && seg != "..")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Problem {
    NoRootPages,
    DuplicatePageId(u32),
    EmptyText,
    UnsafeAssetRef(String),
    MissingAsset(String),
    PaletteOverflow { color_index: u8, palette_len: usize },
    PaletteSize(usize),
    SplashWithoutImage,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::NoRootPages => write!(f, "manifest has no pages"),
            Problem::DuplicatePageId(id) => write!(f, "duplicate page id {id}"),
            Problem::EmptyText => write!(f, "text item is empty"),
            Problem::UnsafeAssetRef(r) => write!(f, "asset ref {r:?} is not a plain relative path"),
            Problem::MissingAsset(r) => write!(f, "missing asset {r:?}"),
            Problem::PaletteOverflow { color_index, palette_len } => {
                write!(f, "color index {color_index} outside palette of {palette_len}")
            }
            Problem::PaletteSize(n) => write!(f, "palette must have 1..=255 colours, has {n}"),
            Problem::SplashWithoutImage => write!(f, "splash enabled without splash_image"),
        }
    }
}

/// One validation problem. Theme-level findings carry no page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub page_id: Option<u32>,
    pub item_index: Option<usize>,
    pub problem: Problem,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.page_id, self.item_index) {
            (Some(p), Some(i)) => write!(f, "page {p}, item {i}: {}", self.problem),
            (Some(p), None) => write!(f, "page {p}: {}", self.problem),
            _ => write!(f, "theme: {}", self.problem),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks every manifest invariant against the available assets.
pub fn validate(manifest: &ProjectManifest, assets: &AssetListing) -> ValidationReport {
    let mut findings = Vec::new();
    let theme = &manifest.theme;
    let palette_len = theme.palette.len();

    let check_ref = |page_id: Option<u32>, item_index: Option<usize>, r: &str, out: &mut Vec<Finding>| {
        let problem = if !is_safe_relative_path(r) {
            Problem::UnsafeAssetRef(r.to_string())
        } else if !assets.contains(r) {
            Problem::MissingAsset(r.to_string())
        } else {
            return;
        };
        out.push(Finding { page_id, item_index, problem });
    };

    if manifest.roots.is_empty() {
        findings.push(Finding { page_id: None, item_index: None, problem: Problem::NoRootPages });
    }
    if !(1..=255).contains(&palette_len) {
        findings.push(Finding { page_id: None, item_index: None, problem: Problem::PaletteSize(palette_len) });
    }
    if theme.splash_enabled && theme.splash_image.is_none() {
        findings.push(Finding { page_id: None, item_index: None, problem: Problem::SplashWithoutImage });
    }
    for r in theme.asset_refs() {
        check_ref(None, None, r, &mut findings);
    }

    let mut seen: HashMap<u32, ()> = HashMap::new();
    for (page, _) in flatten(manifest) {
        let pid = Some(page.page_id);
        if seen.insert(page.page_id, ()).is_some() {
            findings.push(Finding { page_id: pid, item_index: None, problem: Problem::DuplicatePageId(page.page_id) });
        }
        for (i, item) in page.items.iter().enumerate() {
            match item {
                ContentItem::Text { text, color_index, .. } => {
                    if text.is_empty() {
                        findings.push(Finding { page_id: pid, item_index: Some(i), problem: Problem::EmptyText });
                    }
                    if usize::from(*color_index) >= palette_len {
                        findings.push(Finding {
                            page_id: pid,
                            item_index: Some(i),
                            problem: Problem::PaletteOverflow { color_index: *color_index, palette_len },
                        });
                    }
                }
                other => {
                    if let Some(r) = other.asset_ref() {
                        check_ref(pid, Some(i), r, &mut findings);
                    }
                }
            }
        }
    }
    ValidationReport { findings }
}
