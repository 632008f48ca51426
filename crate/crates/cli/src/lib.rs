//! `contentforge` command-line front end and preview service.

pub mod service;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use contentforge_core::bundle::{verify_bundle, BundleFiles, BundleHandle, Coverage};
use contentforge_core::model::ManifestError;
use contentforge_core::packager::{bundle_plan, inject, list_entries, verify_injection, PathMap};
use contentforge_core::preview::{render_page, RenderError};
use contentforge_core::project::{compile_project, CompileError};
use contentforge_core::search::{search_content, FoldMode, SearchError};

use crate::service::{AppState, ServiceConfig};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_PACK: u8 = 3;
pub const EXIT_UNKNOWN_PAGE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "contentforge", version, about = "Build, inspect and preview content bundles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a project manifest into bundle files.
    Compile {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Draw characters missing from the font as the replacement box instead of failing.
        #[arg(long)]
        allow_missing_glyphs: bool,
    },
    /// Inject a compiled bundle into a template archive.
    Pack {
        bundle: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Override an archive path, e.g. `content=data/c.bin` or `assets=res`.
        #[arg(long = "path-map", value_name = "KEY=PATH")]
        path_map: Vec<String>,
        #[arg(long)]
        no_deterministic: bool,
    },
    /// Render one page to a binary PPM image.
    Render {
        bundle: PathBuf,
        #[arg(long)]
        page: u32,
        #[arg(long)]
        width: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print pages and items containing a query.
    Search { bundle: PathBuf, query: String },
    /// Serve the bundle over HTTP with live engine sessions.
    Serve {
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Minutes before an idle session is dropped.
        #[arg(long, default_value_t = 30)]
        idle_timeout: u64,
        /// Directory of static viewer files served at `/`.
        #[arg(long)]
        viewer: Option<PathBuf>,
    },
    /// Summarize a bundle directory or list an archive.
    Inspect { target: PathBuf },
}

/// A command failure: message for stderr plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli, out: &mut dyn Write) -> Outcome {
    match cli.command {
        Command::Compile { manifest, output, allow_missing_glyphs } => {
            let coverage = if allow_missing_glyphs { Coverage::AllowReplacement } else { Coverage::Strict };
            compile(&manifest, &output, coverage, out)
        }
        Command::Pack { bundle, template, output, path_map, no_deterministic } => {
            pack(&bundle, &template, &output, &path_map, !no_deterministic, out)
        }
        Command::Render { bundle, page, width, output } => render(&bundle, page, width, &output, out),
        Command::Search { bundle, query } => search(&bundle, &query, out),
        Command::Serve { bundle, port, host, idle_timeout, viewer } => {
            let config = ServiceConfig {
                idle_timeout: Duration::from_secs(idle_timeout.saturating_mul(60)),
                viewer_dir: viewer,
                ..ServiceConfig::default()
            };
            serve(&bundle, SocketAddr::new(host, port), config, out)
        }
        Command::Inspect { target } => inspect(&target, out),
    }
}

/// Parses arguments, runs, reports failures on stderr.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_FAILURE, format!("{}: {e}", path.display()))
}

fn emit(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Outcome {
    writeln!(out, "{line}").map_err(|e| Failure::new(EXIT_FAILURE, format!("writing output: {e}")))
}

fn compile_failure(e: CompileError) -> Failure {
    let message = match &e {
        CompileError::Manifest { path, source } => match source {
            ManifestError::Syntax { line, column, message } | ManifestError::Schema { line, column, message } => {
                format!("{}:{line}:{column}: {message}", path.display())
            }
            other => format!("{}: {other}", path.display()),
        },
        CompileError::Invalid(report) => {
            let mut lines = vec![e.to_string()];
            lines.extend(report.findings.iter().map(|f| format!("  {f}")));
            lines.join("\n")
        }
        _ => e.to_string(),
    };
    Failure::new(EXIT_INPUT, message)
}

fn compile(manifest: &Path, output: &Path, coverage: Coverage, out: &mut dyn Write) -> Outcome {
    let (project, files) = compile_project(manifest, coverage).map_err(compile_failure)?;
    files.write_to_dir(output).map_err(|e| io_fail(output, e))?;
    emit(
        out,
        format_args!(
            "compiled {:?}: {} pages, {} assets, {} bytes -> {}",
            project.title,
            project.page_count(),
            files.assets.len(),
            files.total_len(),
            output.display()
        ),
    )?;
    for (name, bytes) in
        [("index.bin", &files.index), ("content.bin", &files.content), ("theme.bin", &files.theme), ("font.bin", &files.font)]
    {
        emit(out, format_args!("  {name:<12} {:>8} bytes", bytes.len()))?;
    }
    Ok(())
}

/// Loads a bundle directory and rejects it unless it verifies clean.
fn load_verified(dir: &Path) -> Result<BundleFiles, Failure> {
    let files = BundleFiles::read_dir(dir).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", dir.display())))?;
    let report = verify_bundle(&files);
    if !report.is_clean() {
        let mut lines = vec![format!("{}: bundle failed verification", dir.display())];
        lines.extend(report.findings.iter().map(|f| format!("  {f}")));
        return Err(Failure::new(EXIT_INPUT, lines.join("\n")));
    }
    Ok(files)
}

fn pack(
    bundle: &Path,
    template: &Path,
    output: &Path,
    path_map: &[String],
    deterministic: bool,
    out: &mut dyn Write,
) -> Outcome {
    let files = load_verified(bundle)?;
    let mut paths = PathMap::default();
    for spec in path_map {
        paths.set(spec).map_err(|e| Failure::new(EXIT_INPUT, e))?;
    }
    let template_bytes = std::fs::read(template).map_err(|e| io_fail(template, e))?;
    let plan = bundle_plan(template_bytes, &files, &paths, deterministic)
        .map_err(|e| Failure::new(EXIT_PACK, e.to_string()))?;
    let archive = inject(&plan).map_err(|e| Failure::new(EXIT_PACK, format!("{}: {e}", template.display())))?;
    let report = verify_injection(&archive, &plan);
    if !report.is_clean() {
        let findings: Vec<String> = report.findings.iter().map(|f| format!("  {f}")).collect();
        return Err(Failure::new(EXIT_PACK, format!("packed archive failed verification\n{}", findings.join("\n"))));
    }
    std::fs::write(output, &archive).map_err(|e| io_fail(output, e))?;
    let entries = list_entries(&archive).map_err(|e| Failure::new(EXIT_PACK, e.to_string()))?;
    for e in &entries {
        emit(out, format_args!("{:>8}  {:<7} {:08x}  {}", e.uncompressed_size, e.method, e.crc32, e.path))?;
    }
    emit(out, format_args!("{} entries, {} bytes -> {}", entries.len(), archive.len(), output.display()))
}

fn open_handle(dir: &Path) -> Result<BundleHandle, Failure> {
    BundleHandle::open_dir(dir).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", dir.display())))
}

fn render(bundle: &Path, page: u32, width: u32, output: &Path, out: &mut dyn Write) -> Outcome {
    let handle = open_handle(bundle)?;
    let image = render_page(&handle, page, width).map_err(|e| match e {
        RenderError::UnknownPage(_) => Failure::new(EXIT_UNKNOWN_PAGE, e.to_string()),
        RenderError::TooNarrow { .. } => Failure::new(EXIT_INPUT, e.to_string()),
        other => Failure::new(EXIT_FAILURE, other.to_string()),
    })?;
    std::fs::write(output, image.to_ppm()).map_err(|e| io_fail(output, e))?;
    emit(out, format_args!("page {page}: {}x{} -> {}", image.width, image.height, output.display()))
}

/// Tabs and line breaks would break the one-match-per-line output.
fn single_line(s: &str) -> String {
    s.chars().map(|c| if c.is_control() { ' ' } else { c }).collect()
}

fn search(bundle: &Path, query: &str, out: &mut dyn Write) -> Outcome {
    let handle = open_handle(bundle)?;
    let matches = search_content(&handle.index, &*handle.content, query, FoldMode::Simple).map_err(|e| match e {
        SearchError::EmptyQuery => Failure::new(EXIT_INPUT, e.to_string()),
        other => Failure::new(EXIT_FAILURE, other.to_string()),
    })?;
    for m in matches {
        let item = m.item_index.map_or_else(|| "-".to_string(), |i| i.to_string());
        emit(out, format_args!("{}\t{item}\t{}\t{}", m.page_id, m.char_offset, single_line(&m.snippet)))?;
    }
    Ok(())
}

fn serve(bundle: &Path, addr: SocketAddr, config: ServiceConfig, out: &mut dyn Write) -> Outcome {
    load_verified(bundle)?;
    let app = AppState::open_dir(bundle, config).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    emit(out, format_args!("serving {} on http://{addr}", bundle.display()))?;
    out.flush().ok();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    runtime.block_on(service::serve(app, addr)).map_err(|e| Failure::new(EXIT_FAILURE, format!("{addr}: {e}")))
}

fn inspect(target: &Path, out: &mut dyn Write) -> Outcome {
    if target.is_dir() {
        return inspect_bundle(target, out);
    }
    let bytes = std::fs::read(target).map_err(|e| io_fail(target, e))?;
    let entries = list_entries(&bytes).map_err(|e| Failure::new(EXIT_PACK, format!("{}: {e}", target.display())))?;
    for e in &entries {
        emit(out, format_args!("{:>8}  {:<7} {:08x}  {}", e.uncompressed_size, e.method, e.crc32, e.path))?;
    }
    emit(out, format_args!("{} entries", entries.len()))
}

fn inspect_bundle(dir: &Path, out: &mut dyn Write) -> Outcome {
    let files = BundleFiles::read_dir(dir).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", dir.display())))?;
    let report = verify_bundle(&files);
    if !report.is_clean() {
        for f in &report.findings {
            emit(out, format_args!("finding: {f}"))?;
        }
        return Err(Failure::new(EXIT_INPUT, format!("{} finding(s)", report.findings.len())));
    }
    let handle = BundleHandle::from_files(&files).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    emit(out, format_args!("pages: {}", handle.index.entries.len()))?;
    let mut depth: Vec<(u32, usize)> = Vec::new();
    for e in &handle.index.entries {
        while depth.last().is_some_and(|&(id, _)| id != e.parent_id) {
            depth.pop();
        }
        let level = depth.len();
        emit(
            out,
            format_args!(
                "  {}{} {:?} ({} bytes at {})",
                "  ".repeat(level),
                e.page_id,
                e.title,
                e.content_length,
                e.content_offset
            ),
        )?;
        depth.push((e.page_id, level));
    }
    let theme = &handle.theme;
    emit(
        out,
        format_args!(
            "theme: background {} text {} highlight {} header {}, palette of {}",
            theme.colors.background,
            theme.colors.text,
            theme.colors.highlight,
            theme.colors.header,
            theme.palette.len()
        ),
    )?;
    let atlas = &handle.atlas;
    emit(
        out,
        format_args!(
            "font: {} glyphs, {} joining entries, line height {}, widest advance {}",
            atlas.glyph_count(),
            atlas.joining_table().len(),
            atlas.line_height,
            atlas.max_advance()
        ),
    )?;
    emit(out, format_args!("assets: {}", files.assets.len()))
}
