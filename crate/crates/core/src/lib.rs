//! Content bundle toolchain: compiles a page-tree manifest into compact
//! binary bundle files, shapes Arabic-script text with a bitmap font, runs a
//! headless navigation engine over the bundle and injects bundles into a
//! template ZIP archive.

pub mod bundle;
pub mod engine;
pub mod font;
pub mod model;
pub mod packager;
pub mod preview;
pub mod project;
pub mod raster;
pub mod search;
pub mod shaping;
pub mod wire;

pub use bundle::{BundleFiles, BundleHandle, BundleIndex, ContentRecord, IndexEntry};
pub use font::{GlyphAtlas, GlyphForm, GlyphKey, JoiningClass};
pub use model::{ContentItem, ContentKind, PageNode, ProjectManifest, Rgb, Theme};
