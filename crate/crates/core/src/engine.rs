//! Headless runtime: splash, tree index, page viewing, media selection and
//! search as a state machine. Hosts feed events and carry out the returned
//! effects; the engine never plays, dials or sends anything itself.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{BundleHandle, ContentRecord};
use crate::model::{ContentItem, ContentKind, Theme, ROOT_PARENT};
use crate::search::{search_content, FoldMode, SearchMatch};
use crate::shaping::shape_text;

/// Height of an image, audio, video or contact row.
pub const MEDIA_ROW_HEIGHT: u32 = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("bundle has no pages")]
    EmptyIndex,
    #[error("viewport must be at least 1x1")]
    EmptyViewport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Default for Viewport {
    fn default() -> Self {
        Viewport { width: 176, height: 208 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Event {
    Up,
    Down,
    Select,
    Back,
    ToggleAudio,
    ToggleVideo,
    Share,
    SearchOpen,
    SearchSubmit { query: String },
    Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Effect {
    PlayAudio { asset_ref: String },
    StopAudio,
    PlayVideo { asset_ref: String },
    PlayBackgroundMusic { asset_ref: String },
    ComposeMessage { kind: ContentKind, payload: String },
    OpenLink { url: String },
    DialNumber { number: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "screen")]
pub enum Screen {
    Splash,
    Index { cursor: usize, expanded: BTreeSet<u32> },
    Page { page_id: u32, scroll_offset: u32 },
    SearchResults { query: String, results: Vec<SearchMatch>, cursor: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MediaSelection {
    pub audio_index: Option<usize>,
    pub video_index: Option<usize>,
    pub audio_playing: bool,
}

/// One content item's vertical extent on a page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub item_index: usize,
    pub kind: ContentKind,
    pub top: u32,
    pub height: u32,
}

impl Row {
    pub fn bottom(&self) -> u32 {
        self.top + self.height
    }

    /// Whether `[top, bottom)` meets `[offset, offset + height)`.
    pub fn intersects(&self, offset: u32, height: u32) -> bool {
        self.top < offset.saturating_add(height) && offset < self.bottom()
    }
}

/// Row model of a page: text rows are `lines × line_height`, every other
/// kind is a fixed [`MEDIA_ROW_HEIGHT`].
pub fn layout_rows(handle: &BundleHandle, records: &[ContentRecord], width: u32) -> Vec<Row> {
    let mut top = 0;
    records
        .iter()
        .enumerate()
        .map(|(item_index, record)| {
            let height = match record {
                ContentItem::Text { text, .. } => {
                    let lines = shape_text(&handle.atlas, text, width, Default::default()).lines.len() as u32;
                    lines * u32::from(handle.atlas.line_height)
                }
                _ => MEDIA_ROW_HEIGHT,
            };
            let row = Row { item_index, kind: record.kind(), top, height };
            top += height;
            row
        })
        .collect()
}

/// A tree row on the index screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeRow {
    pub page_id: u32,
    pub depth: usize,
    pub has_children: bool,
    pub expanded: bool,
}

#[derive(Debug, Clone)]
struct LoadedPage {
    page_id: u32,
    records: Vec<ContentRecord>,
    rows: Vec<Row>,
    content_height: u32,
    audio: Vec<usize>,
    video: Vec<usize>,
}

impl LoadedPage {
    fn max_scroll(&self, viewport: Viewport) -> u32 {
        self.content_height.saturating_sub(viewport.height)
    }
}

#[derive(Debug, Clone)]
pub struct EngineState {
    pub screen: Screen,
    pub media: MediaSelection,
    pub viewport: Viewport,
    /// Incremented on every page entry.
    pub visit: u64,
    /// Last content read failure, cleared by the next successful event.
    pub error: Option<String>,
    history: Vec<Screen>,
    page: Option<LoadedPage>,
    autoplay_done: bool,
    bundle: Arc<BundleHandle>,
}

/// JSON view of a state, including what a client needs to draw it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateView {
    #[serde(flatten)]
    pub screen: Screen,
    pub media: MediaSelection,
    pub viewport: Viewport,
    pub visit: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<Vec<TreeRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visible_rows: Option<Vec<Row>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content_height: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn init(bundle: Arc<BundleHandle>, viewport: Viewport) -> Result<(EngineState, Vec<Effect>), EngineError> {
    if bundle.index.entries.is_empty() {
        return Err(EngineError::EmptyIndex);
    }
    if viewport.width == 0 || viewport.height == 0 {
        return Err(EngineError::EmptyViewport);
    }
    let theme = &bundle.theme;
    let screen = if theme.splash_enabled { Screen::Splash } else { root_index() };
    let effects = theme
        .background_music
        .iter()
        .map(|r| Effect::PlayBackgroundMusic { asset_ref: r.clone() })
        .collect();
    let state = EngineState {
        screen,
        media: MediaSelection::default(),
        viewport,
        visit: 0,
        error: None,
        history: Vec::new(),
        page: None,
        autoplay_done: false,
        bundle,
    };
    Ok((state, effects))
}

/// Applies one event to a copy of `state`.
pub fn handle_event(state: &EngineState, event: &Event) -> (EngineState, Vec<Effect>) {
    let mut next = state.clone();
    let effects = next.apply(event);
    (next, effects)
}

fn root_index() -> Screen {
    Screen::Index { cursor: 0, expanded: BTreeSet::new() }
}

impl EngineState {
    pub fn bundle(&self) -> &Arc<BundleHandle> {
        &self.bundle
    }

    pub fn theme(&self) -> &Theme {
        &self.bundle.theme
    }

    /// Index rows in display order: roots, plus children of expanded nodes.
    pub fn tree_rows(&self) -> Vec<TreeRow> {
        match &self.screen {
            Screen::Index { expanded, .. } => tree_rows(&self.bundle, expanded),
            _ => Vec::new(),
        }
    }

    /// Records of the page on screen.
    pub fn page_records(&self) -> Option<&[ContentRecord]> {
        self.page.as_ref().map(|p| &p.records[..])
    }

    /// Every row of the page on screen.
    pub fn page_rows(&self) -> Option<&[Row]> {
        self.page.as_ref().map(|p| &p.rows[..])
    }

    /// Page rows intersecting the viewport. Empty unless a page is on screen.
    pub fn visible_rows(&self) -> Vec<Row> {
        match (&self.screen, &self.page) {
            (Screen::Page { scroll_offset, .. }, Some(page)) => page
                .rows
                .iter()
                .filter(|r| r.intersects(*scroll_offset, self.viewport.height))
                .copied()
                .collect(),
            _ => Vec::new(),
        }
    }

    /// The item actions apply to: the topmost row in view.
    pub fn focused_item(&self) -> Option<usize> {
        self.visible_rows().first().map(|r| r.item_index)
    }

    pub fn view(&self) -> StateView {
        let (tree, visible_rows, content_height) = match &self.screen {
            Screen::Index { .. } => (Some(self.tree_rows()), None, None),
            Screen::Page { .. } => (None, Some(self.visible_rows()), self.page.as_ref().map(|p| p.content_height)),
            _ => (None, None, None),
        };
        StateView {
            screen: self.screen.clone(),
            media: self.media,
            viewport: self.viewport,
            visit: self.visit,
            tree,
            visible_rows,
            content_height,
            error: self.error.clone(),
        }
    }

    /// Checks every state invariant, naming the first one broken.
    pub fn check_invariants(&self) -> Result<(), String> {
        match &self.screen {
            Screen::Splash => {}
            Screen::Index { cursor, .. } => {
                let rows = self.tree_rows().len();
                if *cursor >= rows {
                    return Err(format!("index cursor {cursor} outside {rows} rows"));
                }
            }
            Screen::Page { page_id, scroll_offset } => {
                if self.bundle.index.entry(*page_id).is_none() {
                    return Err(format!("page {page_id} not in index"));
                }
                let page = self.page.as_ref().ok_or("page screen without loaded page")?;
                if page.page_id != *page_id {
                    return Err(format!("loaded page {} differs from screen page {page_id}", page.page_id));
                }
                let max = page.max_scroll(self.viewport);
                if *scroll_offset > max {
                    return Err(format!("scroll offset {scroll_offset} beyond {max}"));
                }
                if self.media.audio_index.is_some_and(|i| i >= page.audio.len())
                    || self.media.video_index.is_some_and(|i| i >= page.video.len())
                {
                    return Err("media index out of range".into());
                }
                if page.audio.is_empty() && self.media.audio_playing {
                    return Err("audio playing on a page without audio".into());
                }
            }
            Screen::SearchResults { results, cursor, .. } => {
                if *cursor > 0 && *cursor >= results.len() {
                    return Err(format!("result cursor {cursor} outside {} results", results.len()));
                }
            }
        }
        if !matches!(self.screen, Screen::Page { .. }) && (self.media != MediaSelection::default() || self.page.is_some()) {
            return Err("media selection outlived its page".into());
        }
        Ok(())
    }

    /// Applies one event in place and returns its effects.
    pub fn apply(&mut self, event: &Event) -> Vec<Effect> {
        let mut fx = Vec::new();
        match event {
            Event::SearchOpen => self.open_search(String::new(), Vec::new(), &mut fx),
            Event::SearchSubmit { query } => {
                let results = match search_content(&self.bundle.index, &*self.bundle.content, query, FoldMode::Simple) {
                    Ok(r) => r,
                    Err(crate::search::SearchError::EmptyQuery) => Vec::new(),
                    Err(e) => {
                        self.error = Some(e.to_string());
                        return fx;
                    }
                };
                self.open_search(query.clone(), results, &mut fx);
            }
            _ => match self.screen.clone() {
                Screen::Splash => self.on_splash(event),
                Screen::Index { cursor, expanded } => self.on_index(event, cursor, expanded, &mut fx),
                Screen::Page { page_id, scroll_offset } => self.on_page(event, page_id, scroll_offset, &mut fx),
                Screen::SearchResults { query, results, cursor } => {
                    self.on_results(event, query, results, cursor, &mut fx)
                }
            },
        }
        fx
    }

    fn on_splash(&mut self, event: &Event) {
        if matches!(event, Event::Select | Event::Tick | Event::Back) {
            self.screen = root_index();
        }
    }

    fn on_index(&mut self, event: &Event, cursor: usize, mut expanded: BTreeSet<u32>, fx: &mut Vec<Effect>) {
        let rows = tree_rows(&self.bundle, &expanded);
        let row = &rows[cursor];
        match event {
            Event::Up => self.screen = Screen::Index { cursor: cursor.saturating_sub(1), expanded },
            Event::Down => self.screen = Screen::Index { cursor: (cursor + 1).min(rows.len() - 1), expanded },
            Event::Select if row.has_children && !row.expanded => {
                expanded.insert(row.page_id);
                self.screen = Screen::Index { cursor, expanded };
            }
            Event::Select => {
                let page_id = row.page_id;
                let back = Screen::Index { cursor, expanded };
                self.enter_page(page_id, 0, Some(back), fx);
            }
            Event::Back if row.depth > 0 => {
                let parent = self.bundle.index.entry(row.page_id).map_or(ROOT_PARENT, |e| e.parent_id);
                expanded.remove(&parent);
                let cursor = tree_rows(&self.bundle, &expanded).iter().position(|r| r.page_id == parent).unwrap_or(0);
                self.screen = Screen::Index { cursor, expanded };
            }
            Event::Back if row.expanded => {
                expanded.remove(&row.page_id);
                self.screen = Screen::Index { cursor, expanded };
            }
            _ => {}
        }
    }

    fn on_page(&mut self, event: &Event, page_id: u32, scroll_offset: u32, fx: &mut Vec<Effect>) {
        let Some(page) = self.page.clone() else { return };
        match event {
            Event::Up | Event::Down => {
                let step = u32::from(self.bundle.atlas.line_height).max(1);
                let offset = match event {
                    Event::Up => scroll_offset.saturating_sub(step),
                    _ => scroll_offset.saturating_add(step).min(page.max_scroll(self.viewport)),
                };
                self.screen = Screen::Page { page_id, scroll_offset: offset };
                self.autoplay(fx);
            }
            Event::Back => {
                self.leave_page(fx);
                self.screen = self.history.pop().unwrap_or_else(root_index);
                self.resume(fx);
            }
            Event::ToggleAudio => self.toggle_audio(&page, fx),
            Event::ToggleVideo if !page.video.is_empty() => {
                let next = self.media.video_index.map_or(0, |i| (i + 1) % page.video.len());
                self.media.video_index = Some(next);
                fx.push(Effect::PlayVideo { asset_ref: asset_of(&page.records[page.video[next]]) });
            }
            Event::Share => {
                if let Some(item) = self.focused_item().map(|i| &page.records[i]) {
                    fx.push(Effect::ComposeMessage { kind: item.kind(), payload: item.share_payload().to_string() });
                }
            }
            Event::Select => {
                if let Some(i) = self.focused_item() {
                    self.activate(&page, i, fx);
                }
            }
            _ => {}
        }
    }

    fn on_results(&mut self, event: &Event, query: String, results: Vec<SearchMatch>, cursor: usize, fx: &mut Vec<Effect>) {
        match event {
            Event::Up => self.screen = Screen::SearchResults { query, results, cursor: cursor.saturating_sub(1) },
            Event::Down => {
                let cursor = (cursor + 1).min(results.len().saturating_sub(1));
                self.screen = Screen::SearchResults { query, results, cursor };
            }
            Event::Select if !results.is_empty() => {
                let target = results[cursor].page_id;
                self.enter_page(target, 0, Some(Screen::SearchResults { query, results, cursor }), fx);
            }
            Event::Back => {
                self.screen = self.history.pop().unwrap_or_else(root_index);
                self.resume(fx);
            }
            _ => {}
        }
    }

    fn open_search(&mut self, query: String, results: Vec<SearchMatch>, fx: &mut Vec<Effect>) {
        match &self.screen {
            Screen::SearchResults { .. } => {}
            Screen::Splash => {}
            Screen::Page { .. } => {
                self.leave_page(fx);
                let page_screen = std::mem::replace(&mut self.screen, Screen::Splash);
                self.history.push(page_screen);
            }
            other => self.history.push(other.clone()),
        }
        self.error = None;
        self.screen = Screen::SearchResults { query, results, cursor: 0 };
    }

    /// Re-enters the screen restored from history.
    fn resume(&mut self, fx: &mut Vec<Effect>) {
        if let Screen::Page { page_id, scroll_offset } = self.screen {
            self.enter_page(page_id, scroll_offset, None, fx);
        }
    }

    fn enter_page(&mut self, page_id: u32, scroll_offset: u32, back: Option<Screen>, fx: &mut Vec<Effect>) {
        let records = match self.bundle.read_page(page_id) {
            Ok(r) => r,
            Err(e) => {
                self.error = Some(e.to_string());
                if let Some(back) = back {
                    self.screen = back;
                } else {
                    self.screen = self.history.pop().unwrap_or_else(root_index);
                }
                return;
            }
        };
        if let Some(back) = back {
            self.history.push(back);
        }
        let rows = layout_rows(&self.bundle, &records, self.viewport.width);
        let content_height = rows.last().map_or(0, Row::bottom);
        let of_kind = |k| records.iter().enumerate().filter(|(_, r)| r.kind() == k).map(|(i, _)| i).collect::<Vec<_>>();
        let page = LoadedPage {
            page_id,
            audio: of_kind(ContentKind::Audio),
            video: of_kind(ContentKind::Video),
            records,
            rows,
            content_height,
        };
        self.media = MediaSelection {
            audio_index: (!page.audio.is_empty()).then_some(0),
            video_index: (!page.video.is_empty()).then_some(0),
            audio_playing: false,
        };
        let scroll_offset = scroll_offset.min(page.max_scroll(self.viewport));
        self.page = Some(page);
        self.autoplay_done = false;
        self.visit += 1;
        self.error = None;
        self.screen = Screen::Page { page_id, scroll_offset };
        self.autoplay(fx);
    }

    fn leave_page(&mut self, fx: &mut Vec<Effect>) {
        if self.media.audio_playing {
            fx.push(Effect::StopAudio);
        }
        self.media = MediaSelection::default();
        self.page = None;
    }

    /// Plays the selected audio the first time its row is in view.
    fn autoplay(&mut self, fx: &mut Vec<Effect>) {
        if self.autoplay_done || self.media.audio_playing {
            return;
        }
        let (Some(page), Some(sel), Screen::Page { scroll_offset, .. }) = (&self.page, self.media.audio_index, &self.screen)
        else {
            return;
        };
        let item = page.audio[sel];
        if page.rows[item].intersects(*scroll_offset, self.viewport.height) {
            fx.push(Effect::PlayAudio { asset_ref: asset_of(&page.records[item]) });
            self.media.audio_playing = true;
            self.autoplay_done = true;
        }
    }

    fn toggle_audio(&mut self, page: &LoadedPage, fx: &mut Vec<Effect>) {
        let Some(sel) = self.media.audio_index else { return };
        let k = page.audio.len();
        if k == 1 {
            // A single sound toggles between playing and stopped.
            if self.media.audio_playing {
                fx.push(Effect::StopAudio);
                self.media.audio_playing = false;
            } else {
                fx.push(Effect::PlayAudio { asset_ref: asset_of(&page.records[page.audio[0]]) });
                self.media.audio_playing = true;
            }
        } else {
            let next = (sel + 1) % k;
            fx.push(Effect::StopAudio);
            fx.push(Effect::PlayAudio { asset_ref: asset_of(&page.records[page.audio[next]]) });
            self.media.audio_index = Some(next);
            self.media.audio_playing = true;
        }
        self.autoplay_done = true;
    }

    fn activate(&mut self, page: &LoadedPage, item: usize, fx: &mut Vec<Effect>) {
        match &page.records[item] {
            ContentItem::Audio { asset_ref, .. } => {
                let sel = page.audio.iter().position(|&i| i == item);
                fx.push(Effect::StopAudio);
                fx.push(Effect::PlayAudio { asset_ref: asset_ref.clone() });
                self.media.audio_index = sel;
                self.media.audio_playing = true;
                self.autoplay_done = true;
            }
            ContentItem::Video { asset_ref, .. } => {
                self.media.video_index = page.video.iter().position(|&i| i == item);
                fx.push(Effect::PlayVideo { asset_ref: asset_ref.clone() });
            }
            ContentItem::WebLink { value, .. } => fx.push(Effect::OpenLink { url: value.clone() }),
            ContentItem::Email { value, .. } => fx.push(Effect::OpenLink { url: format!("mailto:{value}") }),
            ContentItem::PhoneNumber { value, .. } => fx.push(Effect::DialNumber { number: value.clone() }),
            ContentItem::Text { .. } | ContentItem::Image { .. } => {}
        }
    }
}

fn asset_of(record: &ContentRecord) -> String {
    record.asset_ref().unwrap_or_default().to_string()
}

fn tree_rows(bundle: &BundleHandle, expanded: &BTreeSet<u32>) -> Vec<TreeRow> {
    fn walk(bundle: &BundleHandle, expanded: &BTreeSet<u32>, parent: u32, depth: usize, out: &mut Vec<TreeRow>) {
        for e in bundle.index.entries.iter().filter(|e| e.parent_id == parent) {
            let is_open = e.child_count > 0 && expanded.contains(&e.page_id);
            out.push(TreeRow { page_id: e.page_id, depth, has_children: e.child_count > 0, expanded: is_open });
            if is_open {
                walk(bundle, expanded, e.page_id, depth + 1, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(bundle, expanded, ROOT_PARENT, 0, &mut out);
    out
}
