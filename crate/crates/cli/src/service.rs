//! Preview HTTP service: read-only bundle endpoints plus live engine sessions.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use contentforge_core::bundle::{BundleError, BundleHandle, ASSETS_DIR};
use contentforge_core::engine::{self, Effect, EngineState, Event, StateView, Viewport};
use contentforge_core::font::{GlyphForm, GlyphKey};
use contentforge_core::model::{is_safe_relative_path, ContentItem, ContentKind, Rgb, ROOT_PARENT};
use contentforge_core::search::{search_content, FoldMode, SearchError, SearchMatch};
use contentforge_core::shaping::shape_text;
use serde::{Deserialize, Serialize};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30 * 60);

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_request(error: &'static str, detail: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, error, detail: detail.into() }
    }

    fn not_found(error: &'static str, detail: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, error, detail: detail.into() }
    }

    fn internal(detail: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, error: "internal", detail: detail.into() }
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::UnknownPage(id) => ApiError::not_found("unknown_page", format!("no page {id}")),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.error, "detail": self.detail }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Where `/api/asset` reads from.
#[derive(Debug, Clone)]
pub enum AssetStore {
    Dir(PathBuf),
    Memory(Arc<BTreeMap<String, Vec<u8>>>),
}

impl AssetStore {
    fn load(&self, r: &str) -> Option<Vec<u8>> {
        match self {
            AssetStore::Dir(dir) => std::fs::read(dir.join(r)).ok(),
            AssetStore::Memory(map) => map.get(r).cloned(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub idle_timeout: Duration,
    pub viewport: Viewport,
    /// Static files served at `/` for the browser viewer.
    pub viewer_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { idle_timeout: DEFAULT_IDLE_TIMEOUT, viewport: Viewport::default(), viewer_dir: None }
    }
}

struct Session {
    state: EngineState,
    created_at: SystemTime,
    last_event_at: Instant,
}

struct Shared {
    bundle: Arc<BundleHandle>,
    assets: AssetStore,
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(bundle: Arc<BundleHandle>, assets: AssetStore, config: ServiceConfig) -> Self {
        AppState(Arc::new(Shared { bundle, assets, config, sessions: Mutex::new(HashMap::new()) }))
    }

    /// Opens a compiled bundle directory; content stays on disk.
    pub fn open_dir(dir: &Path, config: ServiceConfig) -> Result<Self, BundleError> {
        let bundle = BundleHandle::open_dir(dir)?;
        Ok(Self::new(Arc::new(bundle), AssetStore::Dir(dir.join(ASSETS_DIR)), config))
    }

    /// Drops sessions idle longer than the configured timeout; returns how many.
    pub fn expire_idle(&self) -> usize {
        let timeout = self.0.config.idle_timeout;
        let mut sessions = self.0.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| s.lock().unwrap().last_event_at.elapsed() <= timeout);
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.lock().unwrap().len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.expire_idle();
        self.0
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/tree", get(tree))
        .route("/api/page/{id}", get(page))
        .route("/api/page/{id}/layout", get(layout))
        .route("/api/theme", get(theme))
        .route("/api/font/glyph/{codepoint}/{form}", get(glyph))
        .route("/api/search", get(search))
        .route("/api/asset/{*path}", get(asset))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(get_session).delete(delete_session))
        .route("/api/session/{id}/event", post(post_event))
        .fallback(not_found);
    let api = match &state.0.config.viewer_dir {
        Some(_) => api.route("/", get(viewer_index)).route("/{*path}", get(viewer_file)),
        None => api,
    };
    api.with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

/// Runs blocking bundle work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn parse_page_id(raw: &str) -> Result<u32, ApiError> {
    raw.parse().map_err(|_| ApiError::bad_request("bad_page_id", format!("{raw:?} is not a page id")))
}

#[derive(Debug, Serialize)]
pub struct TreeNode {
    pub id: u32,
    pub title: String,
    pub child_count: u16,
    pub children: Vec<TreeNode>,
}

async fn tree(State(app): State<AppState>) -> ApiResult<Vec<TreeNode>> {
    fn build(bundle: &BundleHandle, parent: u32) -> Vec<TreeNode> {
        bundle
            .index
            .entries
            .iter()
            .filter(|e| e.parent_id == parent)
            .map(|e| TreeNode {
                id: e.page_id,
                title: e.title.clone(),
                child_count: e.child_count,
                children: build(bundle, e.page_id),
            })
            .collect()
    }
    Ok(Json(build(&app.0.bundle, ROOT_PARENT)))
}

#[derive(Debug, Serialize)]
struct PageOut {
    page_id: u32,
    title: String,
    records: Vec<ContentItem>,
}

async fn page(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<PageOut> {
    let page_id = parse_page_id(&id)?;
    let bundle = app.0.bundle.clone();
    let out = blocking(move || {
        let title = bundle.index.entry(page_id).map(|e| e.title.clone()).ok_or(BundleError::UnknownPage(page_id))?;
        Ok(PageOut { page_id, title, records: bundle.read_page(page_id)? })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Serialize)]
struct GlyphOut {
    codepoint: u32,
    form: &'static str,
    x: i64,
    y: i64,
    w: u8,
    h: u8,
    color: Rgb,
}

#[derive(Debug, Serialize)]
struct LineOut {
    y: u32,
    width: u32,
    glyphs: Vec<GlyphOut>,
}

#[derive(Debug, Serialize)]
struct RowOut {
    item_index: usize,
    kind: ContentKind,
    top: u32,
    height: u32,
    lines: Vec<LineOut>,
}

#[derive(Debug, Serialize)]
struct LayoutOut {
    page_id: u32,
    width: u32,
    content_height: u32,
    rows: Vec<RowOut>,
}

fn form_name(form: GlyphForm) -> &'static str {
    match form {
        GlyphForm::Isolated => "isolated",
        GlyphForm::Initial => "initial",
        GlyphForm::Medial => "medial",
        GlyphForm::Final => "final",
    }
}

fn parse_form(raw: &str) -> Option<GlyphForm> {
    GlyphForm::ALL
        .into_iter()
        .find(|&f| form_name(f) == raw.to_ascii_lowercase())
        .or_else(|| raw.parse().ok().and_then(GlyphForm::from_tag))
}

fn parse_codepoint(raw: &str) -> Option<u32> {
    let lower = raw.to_ascii_lowercase();
    match lower.strip_prefix("u+").or_else(|| lower.strip_prefix("0x")) {
        Some(hex) => u32::from_str_radix(hex, 16).ok(),
        None => lower.parse().ok(),
    }
}

/// Text rows broken into positioned glyphs. Glyph `x`/`y` are where the
/// bitmap's top-left lands, relative to the page's top-left.
async fn layout(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<LayoutOut> {
    let page_id = parse_page_id(&id)?;
    let raw = q.get("width").ok_or_else(|| ApiError::bad_request("missing_width", "width query parameter required"))?;
    let width: u32 = raw.parse().map_err(|_| ApiError::bad_request("bad_width", format!("{raw:?} is not a width")))?;
    let bundle = app.0.bundle.clone();
    let needed = u32::from(bundle.atlas.max_advance());
    if width < needed {
        return Err(ApiError::bad_request("too_narrow", format!("width {width} below widest glyph {needed}")));
    }
    let out = blocking(move || {
        let records = bundle.read_page(page_id)?;
        let atlas = &bundle.atlas;
        let theme = &bundle.theme;
        let rows = engine::layout_rows(&bundle, &records, width);
        let content_height = rows.last().map_or(0, |r| r.bottom());
        let rows = rows
            .iter()
            .zip(&records)
            .map(|(row, record)| {
                let lines = match record {
                    ContentItem::Text { text, color_index, .. } => {
                        let color = theme.palette.get(usize::from(*color_index)).copied().unwrap_or(theme.colors.text);
                        shape_text(atlas, text, width, color)
                            .lines
                            .iter()
                            .enumerate()
                            .map(|(n, line)| LineOut {
                                y: row.top + n as u32 * u32::from(atlas.line_height),
                                width: line.width,
                                glyphs: line
                                    .glyphs
                                    .iter()
                                    .map(|g| {
                                        let glyph = atlas.glyph(g.key).unwrap_or(atlas.replacement_glyph());
                                        GlyphOut {
                                            codepoint: g.key.codepoint,
                                            form: form_name(g.key.form),
                                            x: i64::from(g.x) + i64::from(glyph.x_bearing),
                                            y: i64::from(row.top + g.y) + i64::from(glyph.y_bearing),
                                            w: glyph.width,
                                            h: glyph.height,
                                            color: g.color,
                                        }
                                    })
                                    .collect(),
                            })
                            .collect()
                    }
                    _ => Vec::new(),
                };
                RowOut { item_index: row.item_index, kind: row.kind, top: row.top, height: row.height, lines }
            })
            .collect();
        Ok(LayoutOut { page_id, width, content_height, rows })
    })
    .await?;
    Ok(Json(out))
}

async fn theme(State(app): State<AppState>) -> ApiResult<contentforge_core::model::Theme> {
    Ok(Json(app.0.bundle.theme.clone()))
}

#[derive(Debug, Serialize)]
struct GlyphBitmapOut {
    codepoint: u32,
    form: &'static str,
    width: u8,
    height: u8,
    x_bearing: i8,
    y_bearing: i8,
    advance: u8,
    /// Rows of `ceil(width / 8)` bytes, most significant bit leftmost.
    bitmap: String,
}

async fn glyph(
    State(app): State<AppState>,
    UrlPath((codepoint, form)): UrlPath<(String, String)>,
) -> ApiResult<GlyphBitmapOut> {
    let cp = parse_codepoint(&codepoint)
        .ok_or_else(|| ApiError::bad_request("bad_codepoint", format!("{codepoint:?} is not a codepoint")))?;
    let f = parse_form(&form).ok_or_else(|| ApiError::bad_request("bad_form", format!("{form:?} is not a form")))?;
    let key = GlyphKey { codepoint: cp, form: f };
    let atlas = &app.0.bundle.atlas;
    let g = atlas
        .glyph(key)
        .ok_or_else(|| ApiError::not_found("unknown_glyph", format!("no glyph for {cp} {}", form_name(f))))?;
    Ok(Json(GlyphBitmapOut {
        codepoint: cp,
        form: form_name(f),
        width: g.width,
        height: g.height,
        x_bearing: g.x_bearing,
        y_bearing: g.y_bearing,
        advance: g.advance,
        bitmap: base64::engine::general_purpose::STANDARD.encode(&g.bitmap),
    }))
}

async fn search(State(app): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Vec<SearchMatch>> {
    let query = q.get("q").cloned().unwrap_or_default();
    let bundle = app.0.bundle.clone();
    let out = blocking(move || {
        search_content(&bundle.index, &*bundle.content, &query, FoldMode::Simple).map_err(|e| match e {
            SearchError::EmptyQuery => ApiError::bad_request("empty_query", "query is empty"),
            SearchError::Bundle(e) => e.into(),
        })
    })
    .await?;
    Ok(Json(out))
}

pub fn content_type(path: &str) -> &'static str {
    let ext = path.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase()).unwrap_or_default();
    match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "gif" => "image/gif",
        "mid" | "midi" => "audio/midi",
        "mp3" => "audio/mpeg",
        "wav" => "audio/wav",
        "ogg" => "audio/ogg",
        "amr" => "audio/amr",
        "3gp" => "video/3gpp",
        "mp4" => "video/mp4",
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

async fn asset(State(app): State<AppState>, UrlPath(path): UrlPath<String>) -> Result<Response, ApiError> {
    if !is_safe_relative_path(&path) {
        return Err(ApiError::bad_request("bad_asset_ref", format!("{path:?} is not a relative asset path")));
    }
    let store = app.0.assets.clone();
    let lookup = path.clone();
    let bytes = blocking(move || Ok(store.load(&lookup))).await?;
    let bytes = bytes.ok_or_else(|| ApiError::not_found("unknown_asset", format!("no asset {path:?}")))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], Bytes::from(bytes)).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct NewSession {
    viewport: Option<Viewport>,
}

#[derive(Debug, Serialize)]
pub struct SessionOut {
    pub session_id: String,
    pub created_at: u64,
    pub state: StateView,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Serialize)]
pub struct EventOut {
    pub state: StateView,
    pub effects: Vec<Effect>,
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> ApiResult<SessionOut> {
    let req: NewSession = if body.iter().all(u8::is_ascii_whitespace) {
        NewSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("bad_request", e.to_string()))?
    };
    let viewport = req.viewport.unwrap_or(app.0.config.viewport);
    let (state, effects) = engine::init(app.0.bundle.clone(), viewport)
        .map_err(|e| ApiError::bad_request("bad_session", e.to_string()))?;
    app.expire_idle();
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let created_at = SystemTime::now();
    let view = state.view();
    let session = Session { state, created_at, last_event_at: Instant::now() };
    app.0.sessions.lock().unwrap().insert(session_id.clone(), Arc::new(Mutex::new(session)));
    let created_at = created_at.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok(Json(SessionOut { session_id, created_at, state: view, effects }))
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionOut> {
    let session = app.session(&id)?;
    let s = session.lock().unwrap();
    let created_at = s.created_at.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok(Json(SessionOut { session_id: id, created_at, state: s.state.view(), effects: Vec::new() }))
}

async fn delete_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    match app.0.sessions.lock().unwrap().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found("unknown_session", format!("no session {id}"))),
    }
}

async fn post_event(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<EventOut> {
    let event: Event = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("bad_event", e.to_string()))?;
    let session = app.session(&id)?;
    // The session lock is held for the whole event, so events on one session apply in order.
    let out = blocking(move || {
        let mut s = session.lock().unwrap();
        let effects = s.state.apply(&event);
        s.last_event_at = Instant::now();
        Ok(EventOut { state: s.state.view(), effects })
    })
    .await?;
    Ok(Json(out))
}

async fn viewer_index(State(app): State<AppState>) -> Result<Response, ApiError> {
    viewer_file(State(app), UrlPath("index.html".to_string())).await
}

async fn viewer_file(State(app): State<AppState>, UrlPath(path): UrlPath<String>) -> Result<Response, ApiError> {
    let dir = app.0.config.viewer_dir.clone().ok_or_else(|| ApiError::not_found("not_found", "no viewer"))?;
    if !is_safe_relative_path(&path) {
        return Err(ApiError::bad_request("bad_path", format!("{path:?}")));
    }
    let bytes = std::fs::read(dir.join(&path)).map_err(|_| ApiError::not_found("not_found", path.clone()))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], Bytes::from(bytes)).into_response())
}

/// Serves until the process is stopped, sweeping idle sessions once a minute.
pub async fn serve(app: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let sweeper = app.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.expire_idle();
        }
    });
    axum::serve(listener, router(app)).await
}
