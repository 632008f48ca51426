//! Paints shaped layouts into an RGB pixel grid and writes binary PPM.

use thiserror::Error;

use crate::font::{GlyphAtlas, GlyphKey};
use crate::model::Rgb;
use crate::shaping::{LayoutResult, PositionedGlyph};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error(
        "glyph U+{codepoint:04X} (text index {index}) at ({x}, {y}) overflows the {canvas_width}x{canvas_height} canvas"
    )]
    Overflow { codepoint: u32, index: usize, x: i64, y: i64, canvas_width: u32, canvas_height: u32 },
}

/// Row-major RGB image, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Pixmap {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let data = [color.r, color.g, color.b].repeat(width as usize * height as usize);
        Pixmap { width, height, data }
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        Rgb::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&[c.r, c.g, c.b]);
    }

    pub fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, c: Rgb) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.put(xx, yy, c);
            }
        }
    }

    /// Binary PPM (`P6`, max value 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// Paints the layout's glyphs onto `canvas` with the layout origin at `(dx, dy)`.
/// Nothing is drawn if any glyph would fall outside the canvas.
pub fn paint_layout(
    canvas: &mut Pixmap,
    atlas: &GlyphAtlas,
    layout: &LayoutResult,
    dx: u32,
    dy: u32,
) -> Result<(), RasterError> {
    let placed: Vec<(&PositionedGlyph, i64, i64)> = layout
        .glyphs()
        .map(|pg| {
            let g = glyph_of(atlas, pg.key);
            let x = i64::from(dx) + i64::from(pg.x) + i64::from(g.x_bearing);
            let y = i64::from(dy) + i64::from(pg.y) + i64::from(g.y_bearing);
            (pg, x, y)
        })
        .collect();

    for &(pg, x, y) in &placed {
        let g = glyph_of(atlas, pg.key);
        let fits = x >= 0
            && y >= 0
            && x + i64::from(g.width) <= i64::from(canvas.width)
            && y + i64::from(g.height) <= i64::from(canvas.height);
        if !fits {
            return Err(RasterError::Overflow {
                codepoint: pg.ch as u32,
                index: pg.index,
                x,
                y,
                canvas_width: canvas.width,
                canvas_height: canvas.height,
            });
        }
    }
    for (pg, x, y) in placed {
        let g = glyph_of(atlas, pg.key);
        for (px, py) in g.set_pixels() {
            canvas.put(x as u32 + u32::from(px), y as u32 + u32::from(py), pg.color);
        }
    }
    Ok(())
}

fn glyph_of(atlas: &GlyphAtlas, key: GlyphKey) -> &crate::font::Glyph {
    atlas.glyph(key).unwrap_or(atlas.replacement_glyph())
}

/// Background fill, then every glyph's set bits in its colour.
pub fn rasterize(
    atlas: &GlyphAtlas,
    layout: &LayoutResult,
    canvas_width: u32,
    canvas_height: u32,
    background: Rgb,
) -> Result<Pixmap, RasterError> {
    let mut canvas = Pixmap::filled(canvas_width, canvas_height, background);
    paint_layout(&mut canvas, atlas, layout, 0, 0)?;
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::font::{replacement_box, Glyph, GlyphForm};
    use crate::shaping::{shape_text, Line};

    fn dot_atlas() -> GlyphAtlas {
        let mut dot = Glyph::blank(1, 1, 1);
        dot.set(0, 0);
        let glyphs = BTreeMap::from([(GlyphKey::new('.', GlyphForm::Isolated), dot)]);
        GlyphAtlas::new(1, 1, 1, replacement_box(), glyphs, BTreeMap::new()).unwrap()
    }

    fn one_dot_at(x: u32, y: u32) -> LayoutResult {
        let glyph = PositionedGlyph {
            ch: '.',
            index: 0,
            form: GlyphForm::Isolated,
            key: GlyphKey::new('.', GlyphForm::Isolated),
            x,
            y,
            color: Rgb::BLACK,
        };
        LayoutResult {
            lines: vec![Line { glyphs: vec![glyph], width: 1 }],
            total_height: 1,
            max_line_width: 1,
            max_width: 1,
        }
    }

    #[test]
    fn empty_layout_is_background() {
        let bg = Rgb::new(1, 2, 3);
        let img = rasterize(&dot_atlas(), &LayoutResult::default(), 4, 3, bg).unwrap();
        assert_eq!(img.data.len(), 36);
        assert!(img.data.chunks(3).all(|p| p == [1, 2, 3]));
    }

    #[test]
    fn single_pixel_glyph() {
        let img = rasterize(&dot_atlas(), &one_dot_at(0, 0), 3, 3, Rgb::WHITE).unwrap();
        let black: Vec<_> =
            (0..3).flat_map(|y| (0..3).map(move |x| (x, y))).filter(|&(x, y)| img.get(x, y) == Rgb::BLACK).collect();
        assert_eq!(black, [(0, 0)]);
    }

    #[test]
    fn overflow_names_the_glyph() {
        let err = rasterize(&dot_atlas(), &one_dot_at(3, 0), 3, 3, Rgb::WHITE).unwrap_err();
        assert!(matches!(err, RasterError::Overflow { codepoint: 0x2E, index: 0, .. }));
    }

    #[test]
    fn ppm_header() {
        let img = rasterize(&dot_atlas(), &shape_text(&dot_atlas(), "..", 2, Rgb::BLACK), 2, 1, Rgb::WHITE).unwrap();
        assert_eq!(img.to_ppm(), b"P6\n2 1\n255\n\0\0\0\0\0\0".to_vec());
    }
}
