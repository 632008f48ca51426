//! Manifest-on-disk to bundle compilation: parse, validate, load the font,
//! gather assets and encode.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::bundle::{encode_bundle, BundleError, BundleFiles, Coverage};
use crate::font::{builtin_font, decode_font, generate_test_font, FontError, GlyphAtlas, JoiningClass};
use crate::model::{flatten, list_assets, parse_manifest, validate, ContentItem, ManifestError, ProjectManifest, ValidationReport};

pub const BUILTIN_FONT: &str = "builtin:arabic";

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Manifest { path: PathBuf, source: ManifestError },
    #[error("manifest has {} validation finding(s)", .0.findings.len())]
    Invalid(ValidationReport),
    #[error("font source {source_name:?}: {detail}")]
    Font { source_name: String, detail: String },
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Alphabet file for a generated font: `{"letters": [{"char": "ب", "class": "dual"}, ...]}`.
#[derive(Debug, Deserialize)]
struct AlphabetFile {
    letters: Vec<AlphabetLetter>,
}

#[derive(Debug, Deserialize)]
struct AlphabetLetter {
    #[serde(rename = "char")]
    ch: char,
    class: ClassName,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ClassName {
    None,
    Right,
    Dual,
}

/// Resolves a manifest `font_source`: the built-in font, an encoded
/// `font.bin`, or an alphabet JSON file to draw a font from.
pub fn load_font(source: &str, base: &Path) -> Result<GlyphAtlas, CompileError> {
    let fail = |detail: String| CompileError::Font { source_name: source.to_string(), detail };
    if source == BUILTIN_FONT {
        return Ok(builtin_font());
    }
    let path = base.join(source);
    let bytes = fs::read(&path).map_err(|e| fail(e.to_string()))?;
    let font: Result<GlyphAtlas, FontError> = if source.ends_with(".json") {
        let file: AlphabetFile = serde_json::from_slice(&bytes).map_err(|e| fail(e.to_string()))?;
        let alphabet: Vec<_> = file
            .letters
            .iter()
            .map(|l| {
                let class = match l.class {
                    ClassName::None => JoiningClass::NonJoining,
                    ClassName::Right => JoiningClass::Right,
                    ClassName::Dual => JoiningClass::Dual,
                };
                (l.ch, class)
            })
            .collect();
        generate_test_font(&alphabet)
    } else {
        decode_font(&bytes)
    };
    font.map_err(|e| fail(e.to_string()))
}

/// Reads and parses a manifest file.
pub fn load_manifest(path: &Path) -> Result<ProjectManifest, CompileError> {
    let text = fs::read_to_string(path).map_err(|source| CompileError::Read { path: path.to_path_buf(), source })?;
    parse_manifest(&text).map_err(|source| CompileError::Manifest { path: path.to_path_buf(), source })
}

/// Bytes of every asset the manifest references.
fn referenced_assets(manifest: &ProjectManifest, asset_dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, CompileError> {
    let refs = flatten(manifest)
        .into_iter()
        .flat_map(|(p, _)| p.items.iter().filter_map(ContentItem::asset_ref))
        .chain(manifest.theme.asset_refs());
    let mut out = BTreeMap::new();
    for r in refs {
        if !out.contains_key(r) {
            let path = asset_dir.join(r);
            let bytes = fs::read(&path).map_err(|source| CompileError::Read { path, source })?;
            out.insert(r.to_string(), bytes);
        }
    }
    Ok(out)
}

/// Compiles the manifest at `path`. Font and asset paths resolve against the
/// manifest's directory.
pub fn compile_project(path: &Path, coverage: Coverage) -> Result<(ProjectManifest, BundleFiles), CompileError> {
    let manifest = load_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let asset_dir = base.join(&manifest.asset_dir);
    let listing = list_assets(&asset_dir).map_err(|source| CompileError::Read { path: asset_dir.clone(), source })?;
    let report = validate(&manifest, &listing);
    if !report.is_clean() {
        return Err(CompileError::Invalid(report));
    }
    let atlas = load_font(&manifest.font_source, base)?;
    let assets = referenced_assets(&manifest, &asset_dir)?;
    let files = encode_bundle(&manifest, &atlas, &assets, coverage)?;
    Ok((manifest, files))
}
