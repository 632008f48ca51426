//! Contextual form selection and right-to-left line layout.
//!
//! Text is split into words at whitespace. Inside a word each letter's form
//! comes from its own joining class and those of its neighbours; words never
//! influence each other. Lines are filled right to left starting at
//! `max_width`, breaking between words. A word that cannot fit on a line of
//! its own is broken between glyphs, keeping the forms already chosen.

use serde::Serialize;

use crate::font::{is_mark, GlyphAtlas, GlyphForm, GlyphKey, JoiningClass};
use crate::model::Rgb;

/// `max_width` value meaning "never wrap".
pub const UNBOUNDED: u32 = u32::MAX;

/// Presentation form of a letter from the classes of its in-word neighbours.
pub fn resolve_form(prev: Option<JoiningClass>, this: JoiningClass, next: Option<JoiningClass>) -> GlyphForm {
    if this == JoiningClass::NonJoining {
        return GlyphForm::Isolated;
    }
    let joins_prev = prev == Some(JoiningClass::Dual);
    let joins_next = this == JoiningClass::Dual && matches!(next, Some(JoiningClass::Dual | JoiningClass::Right));
    match (joins_prev, joins_next) {
        (true, true) => GlyphForm::Medial,
        (false, true) => GlyphForm::Initial,
        (true, false) => GlyphForm::Final,
        (false, false) => GlyphForm::Isolated,
    }
}

/// A letter of a word after form resolution and glyph lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapedGlyph {
    /// Char index of the letter in the shaped text.
    pub index: usize,
    pub ch: char,
    pub form: GlyphForm,
    /// Glyph actually drawn, after fallback.
    pub key: GlyphKey,
    pub advance: u32,
    pub mark: bool,
}

/// Runs that keep logical (left-to-right) order inside an RTL line.
fn is_ltr(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c as u32, 0x0660..=0x0669 | 0x06F0..=0x06F9)
}

/// Resolves forms for one word. `start` is the char index of the word's first letter.
/// Marks are transparent to joining and dropped when the atlas lacks them.
pub fn shape_word(atlas: &GlyphAtlas, word: &[char], start: usize) -> Vec<ShapedGlyph> {
    let classes: Vec<Option<JoiningClass>> =
        word.iter().map(|&c| if is_mark(c) { None } else { Some(atlas.joining_class(c)) }).collect();
    let neighbour = |mut i: usize, step: isize| -> Option<JoiningClass> {
        loop {
            i = i.checked_add_signed(step)?;
            match classes.get(i)? {
                Some(class) => return Some(*class),
                None => continue,
            }
        }
    };

    let mut out = Vec::with_capacity(word.len());
    for (i, &c) in word.iter().enumerate() {
        match classes[i] {
            None => {
                let key = GlyphKey::new(c, GlyphForm::Isolated);
                if let Some(g) = atlas.glyph(key) {
                    out.push(ShapedGlyph {
                        index: start + i,
                        ch: c,
                        form: GlyphForm::Isolated,
                        key,
                        advance: u32::from(g.advance),
                        mark: true,
                    });
                }
            }
            Some(class) => {
                let form = resolve_form(neighbour(i, -1), class, neighbour(i, 1));
                let (key, g) = atlas.lookup(c, form);
                out.push(ShapedGlyph { index: start + i, ch: c, form, key, advance: u32::from(g.advance), mark: false });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PositionedGlyph {
    /// Source character and its char index in the text.
    pub ch: char,
    pub index: usize,
    /// Resolved presentation form.
    pub form: GlyphForm,
    /// Glyph drawn (may be an Isolated or replacement fallback).
    pub key: GlyphKey,
    /// Left edge of the glyph cell; the bitmap is painted at bearing offsets from here.
    pub x: u32,
    /// Top of the line box.
    pub y: u32,
    pub color: Rgb,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Line {
    /// Glyphs in visual order, right to left.
    pub glyphs: Vec<PositionedGlyph>,
    /// Occupied extent measured from the right edge, spaces included.
    pub width: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LayoutResult {
    pub lines: Vec<Line>,
    pub total_height: u32,
    pub max_line_width: u32,
    /// Width the layout was flowed into.
    pub max_width: u32,
}

impl LayoutResult {
    pub fn glyphs(&self) -> impl Iterator<Item = &PositionedGlyph> {
        self.lines.iter().flat_map(|l| l.glyphs.iter())
    }
}

enum Token {
    Spaces(u32),
    Word(Vec<ShapedGlyph>),
}

fn tokenize(atlas: &GlyphAtlas, text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        if chars[i].is_whitespace() {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            tokens.push(Token::Spaces((i - start) as u32));
        } else {
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
            tokens.push(Token::Word(shape_word(atlas, &chars[start..i], start)));
        }
    }
    tokens
}

struct Flow<'a> {
    atlas: &'a GlyphAtlas,
    max_width: u32,
    color: Rgb,
    lines: Vec<Line>,
    current: Line,
    started: bool,
}

impl<'a> Flow<'a> {
    fn room(&self) -> u32 {
        self.max_width.saturating_sub(self.current.width)
    }

    fn flush(&mut self) {
        if self.started {
            self.lines.push(std::mem::take(&mut self.current));
        }
        self.started = false;
    }

    fn add_space(&mut self, width: u32) {
        self.current.width += width;
        self.started = true;
    }

    /// Places a logically ordered run of glyphs at the current pen.
    fn place(&mut self, run: &[ShapedGlyph]) {
        let y = self.lines.len() as u32 * u32::from(self.atlas.line_height);
        let mut pen = self.max_width - self.current.width.min(self.max_width);
        let mut last_x: Option<u32> = None;
        let mut i = 0;
        while i < run.len() {
            // Marks follow whatever direction their base glyph took.
            let ltr = !run[i].mark && is_ltr(run[i].ch);
            let mut j = i + 1;
            while j < run.len() && (run[j].mark || (ltr && is_ltr(run[j].ch))) {
                j += 1;
            }
            let seg = &run[i..j];
            if ltr {
                let total: u32 = seg.iter().map(|g| g.advance).sum();
                let start = pen.saturating_sub(total);
                let mut cursor = start;
                for g in seg {
                    let x = self.mark_x(g, last_x, cursor);
                    if !g.mark {
                        last_x = Some(cursor);
                        cursor += g.advance;
                    }
                    self.push(g, x, y);
                }
                pen = start;
            } else {
                for g in seg {
                    if !g.mark {
                        pen = pen.saturating_sub(g.advance);
                        last_x = Some(pen);
                    }
                    let x = self.mark_x(g, last_x, pen);
                    self.push(g, x, y);
                }
            }
            i = j;
        }
        self.current.width = self.max_width - pen;
        self.started = true;
    }

    fn mark_x(&self, g: &ShapedGlyph, last_x: Option<u32>, pen: u32) -> u32 {
        if !g.mark {
            return pen;
        }
        match last_x {
            Some(x) => x,
            None => {
                let glyph = self.atlas.glyph(g.key).expect("shaped marks exist in the atlas");
                let reach = (i32::from(glyph.x_bearing) + i32::from(glyph.width)).max(0) as u32;
                pen.saturating_sub(reach)
            }
        }
    }

    fn push(&mut self, g: &ShapedGlyph, x: u32, y: u32) {
        self.current.glyphs.push(PositionedGlyph {
            ch: g.ch,
            index: g.index,
            form: g.form,
            key: g.key,
            x,
            y,
            color: self.color,
        });
    }

    /// Breaks an oversize word between clusters (a base glyph plus its marks).
    fn place_broken(&mut self, word: &[ShapedGlyph]) {
        let mut piece_start = 0;
        let mut piece_width = 0;
        let mut i = 0;
        while i < word.len() {
            let mut j = i + 1;
            while j < word.len() && word[j].mark {
                j += 1;
            }
            let adv: u32 = word[i..j].iter().map(|g| g.advance).sum();
            let has_content = piece_width > 0 || self.started;
            if has_content && piece_width + adv > self.room() {
                self.place(&word[piece_start..i]);
                self.flush();
                piece_start = i;
                piece_width = 0;
            }
            piece_width += adv;
            i = j;
        }
        if piece_start < word.len() {
            self.place(&word[piece_start..]);
        }
    }
}

/// Lays `text` out right to left in lines no wider than `max_width`.
pub fn shape_text(atlas: &GlyphAtlas, text: &str, max_width: u32, color: Rgb) -> LayoutResult {
    let space = u32::from(atlas.space_width);
    let mut flow = Flow { atlas, max_width, color, lines: Vec::new(), current: Line::default(), started: false };
    let mut pending = 0u32;

    for token in tokenize(atlas, text) {
        match token {
            Token::Spaces(n) => pending += n,
            Token::Word(word) => {
                let spaces = pending * space;
                pending = 0;
                let width: u32 = word.iter().map(|g| g.advance).sum();
                if spaces.saturating_add(width) <= flow.room() {
                    if spaces > 0 {
                        flow.add_space(spaces);
                    }
                    flow.place(&word);
                    continue;
                }
                // Spaces at a break are dropped.
                flow.flush();
                if width <= flow.room() {
                    flow.place(&word);
                } else {
                    flow.place_broken(&word);
                }
            }
        }
    }
    if pending > 0 && pending * space <= flow.room() {
        flow.add_space(pending * space);
    }
    flow.flush();

    let lines = flow.lines;
    LayoutResult {
        total_height: lines.len() as u32 * u32::from(atlas.line_height),
        max_line_width: lines.iter().map(|l| l.width).max().unwrap_or(0),
        lines,
        max_width,
    }
}

/// Width of `text` on a single unbounded line: glyph advances plus spaces.
pub fn measure(atlas: &GlyphAtlas, text: &str) -> u32 {
    let space = u32::from(atlas.space_width);
    tokenize(atlas, text)
        .iter()
        .map(|t| match t {
            Token::Spaces(n) => n * space,
            Token::Word(w) => w.iter().map(|g| g.advance).sum(),
        })
        .sum()
}
