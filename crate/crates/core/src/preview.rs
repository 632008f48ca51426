//! Offline page preview: a header band with the page title, then each row of
//! the page top to bottom, on the theme background.

use thiserror::Error;

use crate::bundle::{BundleError, BundleHandle};
use crate::engine::{layout_rows, MEDIA_ROW_HEIGHT};
use crate::model::{ContentItem, ContentKind, Rgb};
use crate::raster::{paint_layout, Pixmap, RasterError};
use crate::shaping::{shape_text, LayoutResult};

const HEADER_PAD: u32 = 2;
const ICON_SIZE: u32 = 12;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("unknown page {0}")]
    UnknownPage(u32),
    #[error("width {width} is narrower than the widest glyph ({needed})")]
    TooNarrow { width: u32, needed: u32 },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// 8x8 icon motifs, one byte per row, high bit leftmost.
fn icon_bits(kind: ContentKind) -> [u8; 8] {
    match kind {
        ContentKind::Image => [0x00, 0x06, 0x06, 0x00, 0x10, 0x38, 0x7C, 0xFE],
        ContentKind::Audio => [0x0F, 0x09, 0x09, 0x09, 0x09, 0x69, 0xF6, 0x60],
        ContentKind::Video => [0x40, 0x60, 0x70, 0x78, 0x78, 0x70, 0x60, 0x40],
        ContentKind::PhoneNumber => [0x70, 0x50, 0x10, 0x18, 0x08, 0x0A, 0x0E, 0x00],
        ContentKind::Email => [0x00, 0xFF, 0xC3, 0xA5, 0x99, 0x81, 0xFF, 0x00],
        ContentKind::WebLink => [0x3C, 0x5A, 0x99, 0xFF, 0x99, 0x5A, 0x3C, 0x00],
        ContentKind::Text => [0; 8],
    }
}

/// Outlined 12x12 box with the kind's motif centred inside.
fn draw_icon(canvas: &mut Pixmap, x: u32, y: u32, kind: ContentKind, color: Rgb) {
    for i in 0..ICON_SIZE {
        canvas.put(x + i, y, color);
        canvas.put(x + i, y + ICON_SIZE - 1, color);
        canvas.put(x, y + i, color);
        canvas.put(x + ICON_SIZE - 1, y + i, color);
    }
    for (row, bits) in icon_bits(kind).into_iter().enumerate() {
        for col in 0..8 {
            if bits & (0x80 >> col) != 0 {
                canvas.put(x + 2 + col, y + 2 + row as u32, color);
            }
        }
    }
}

fn first_line(mut layout: LayoutResult) -> LayoutResult {
    layout.lines.truncate(1);
    layout
}

pub fn header_height(handle: &BundleHandle) -> u32 {
    u32::from(handle.atlas.line_height) + 2 * HEADER_PAD
}

/// Renders one page at `width` pixels. Height is the header plus every row.
pub fn render_page(handle: &BundleHandle, page_id: u32, width: u32) -> Result<Pixmap, RenderError> {
    let entry = handle.index.entry(page_id).ok_or(RenderError::UnknownPage(page_id))?;
    let atlas = &handle.atlas;
    let needed = u32::from(atlas.max_advance()).max(ICON_SIZE + 2);
    if width < needed {
        return Err(RenderError::TooNarrow { width, needed });
    }
    let theme = &handle.theme;
    let records = handle.read_page(page_id)?;
    let rows = layout_rows(handle, &records, width);
    let header = header_height(handle);
    let height = header + rows.last().map_or(0, |r| r.bottom());

    let mut canvas = Pixmap::filled(width, height, theme.colors.background);
    canvas.fill_rect(0, 0, width, header, theme.colors.header);
    let title = first_line(shape_text(atlas, &entry.title, width, theme.colors.background));
    paint_layout(&mut canvas, atlas, &title, 0, HEADER_PAD)?;

    for (row, record) in rows.iter().zip(&records) {
        let top = header + row.top;
        match record {
            ContentItem::Text { text, color_index, .. } => {
                let color = theme.palette.get(usize::from(*color_index)).copied().unwrap_or(theme.colors.text);
                paint_layout(&mut canvas, atlas, &shape_text(atlas, text, width, color), 0, top)?;
            }
            other => {
                let pad = (MEDIA_ROW_HEIGHT - ICON_SIZE) / 2;
                draw_icon(&mut canvas, width - ICON_SIZE - pad, top + pad, other.kind(), theme.colors.highlight);
                let caption = match other {
                    ContentItem::Image { caption, .. }
                    | ContentItem::Audio { caption, .. }
                    | ContentItem::Video { caption, .. } => caption,
                    ContentItem::PhoneNumber { value, label }
                    | ContentItem::Email { value, label }
                    | ContentItem::WebLink { value, label } => {
                        if label.is_empty() {
                            value
                        } else {
                            label
                        }
                    }
                    ContentItem::Text { .. } => unreachable!("text rows handled above"),
                };
                let room = width - ICON_SIZE - 2 * pad;
                if !caption.is_empty() && room >= u32::from(atlas.max_advance()) {
                    let line = first_line(shape_text(atlas, caption, room, theme.colors.text));
                    paint_layout(&mut canvas, atlas, &line, 0, top + pad)?;
                }
            }
        }
    }
    Ok(canvas)
}
