//! Full-text search over a bundle, one page region in memory at a time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{read_page, BundleError, BundleIndex, ContentSource};
use crate::model::ContentItem;

/// Code points of context kept on each side of a match.
pub const SNIPPET_CONTEXT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMode {
    /// Code points compared as-is.
    Exact,
    /// Unicode simple lowercase mapping: single code point to single code point.
    #[default]
    Simple,
}

impl FoldMode {
    pub fn fold_char(self, c: char) -> char {
        match self {
            FoldMode::Exact => c,
            FoldMode::Simple => {
                let mut lower = c.to_lowercase();
                match (lower.next(), lower.next()) {
                    (Some(l), None) => l,
                    _ => c,
                }
            }
        }
    }

    pub fn fold(self, s: &str) -> Vec<char> {
        s.chars().map(|c| self.fold_char(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchMatch {
    pub page_id: u32,
    /// Index of the Text item, or `None` for a match in the page title.
    pub item_index: Option<usize>,
    /// Offset of the match in code points.
    pub char_offset: usize,
    pub snippet: String,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Start offsets of every occurrence of `needle`, overlapping ones included.
fn occurrences<'a>(hay: &'a [char], needle: &'a [char]) -> impl Iterator<Item = usize> + 'a {
    (0..hay.len().saturating_sub(needle.len() - 1)).filter(move |&i| hay[i..].starts_with(needle))
}

fn snippet(chars: &[char], at: usize, len: usize) -> String {
    let start = at.saturating_sub(SNIPPET_CONTEXT);
    let end = (at + len + SNIPPET_CONTEXT).min(chars.len());
    chars[start..end].iter().collect()
}

fn scan(text: &str, query: &[char], fold: FoldMode, page_id: u32, item_index: Option<usize>, out: &mut Vec<SearchMatch>) {
    let original: Vec<char> = text.chars().collect();
    let folded: Vec<char> = original.iter().map(|&c| fold.fold_char(c)).collect();
    for at in occurrences(&folded, query) {
        out.push(SearchMatch { page_id, item_index, char_offset: at, snippet: snippet(&original, at, query.len()) });
    }
}

/// Matches in page titles and Text items, ordered by page position in the
/// index, then item (title first), then offset.
pub fn search_content(
    index: &BundleIndex,
    content: &dyn ContentSource,
    query: &str,
    fold: FoldMode,
) -> Result<Vec<SearchMatch>, SearchError> {
    let needle = fold.fold(query);
    if needle.is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    let mut matches = Vec::new();
    for entry in &index.entries {
        scan(&entry.title, &needle, fold, entry.page_id, None, &mut matches);
        let mut reader = content.open().map_err(BundleError::from)?;
        for (i, record) in read_page(&mut reader, index, entry.page_id)?.iter().enumerate() {
            if let ContentItem::Text { text, .. } = record {
                scan(text, &needle, fold, entry.page_id, Some(i), &mut matches);
            }
        }
    }
    Ok(matches)
}
