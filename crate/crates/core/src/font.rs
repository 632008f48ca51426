//! Bitmap glyph atlas: joining classes, presentation forms, 1-bpp glyphs and
//! the `font.bin` codec.
//!
//! An atlas maps `(codepoint, form)` to a pre-rendered glyph. Letters that
//! join on both sides need all four forms; letters that only join to the
//! preceding letter need Isolated and Final. Everything else is drawn with its
//! Isolated form. A replacement glyph (a hollow box) stands in for anything
//! the atlas does not cover.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{put_u16, put_u32, put_u8, ByteReader, WireError};

pub const FONT_MAGIC: &[u8; 4] = b"MCFN";
pub const FONT_VERSION: u16 = 1;

/// Codepoint under which the replacement glyph is stored.
pub const REPLACEMENT_CODEPOINT: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JoiningClass {
    /// Never connects. Digits, symbols, hamza and anything outside the table.
    NonJoining,
    /// Connects to the preceding letter only (alef, dal, reh, waw...).
    Right,
    /// Connects on both sides.
    Dual,
}

impl JoiningClass {
    pub const ALL: [JoiningClass; 3] = [JoiningClass::NonJoining, JoiningClass::Right, JoiningClass::Dual];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }

    /// Forms an atlas must provide for a letter of this class.
    pub fn required_forms(self) -> &'static [GlyphForm] {
        match self {
            JoiningClass::NonJoining => &[GlyphForm::Isolated],
            JoiningClass::Right => &[GlyphForm::Isolated, GlyphForm::Final],
            JoiningClass::Dual => &GlyphForm::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GlyphForm {
    Isolated,
    Initial,
    Medial,
    Final,
}

impl GlyphForm {
    pub const ALL: [GlyphForm; 4] = [GlyphForm::Isolated, GlyphForm::Initial, GlyphForm::Medial, GlyphForm::Final];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }

    /// Whether the glyph connects towards the preceding (right-hand) letter.
    pub fn joins_prev(self) -> bool {
        matches!(self, GlyphForm::Medial | GlyphForm::Final)
    }

    /// Whether the glyph connects towards the following (left-hand) letter.
    pub fn joins_next(self) -> bool {
        matches!(self, GlyphForm::Initial | GlyphForm::Medial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GlyphKey {
    pub codepoint: u32,
    pub form: GlyphForm,
}

impl GlyphKey {
    pub const REPLACEMENT: GlyphKey = GlyphKey { codepoint: REPLACEMENT_CODEPOINT, form: GlyphForm::Isolated };

    pub fn new(c: char, form: GlyphForm) -> Self {
        GlyphKey { codepoint: c as u32, form }
    }
}

/// A 1-bit-per-pixel glyph. Rows are MSB-first and padded to whole bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub width: u8,
    pub height: u8,
    pub x_bearing: i8,
    pub y_bearing: i8,
    pub advance: u8,
    pub bitmap: Vec<u8>,
}

impl Glyph {
    pub fn blank(width: u8, height: u8, advance: u8) -> Self {
        Glyph {
            width,
            height,
            x_bearing: 0,
            y_bearing: 0,
            advance,
            bitmap: vec![0; Self::bitmap_len(width, height)],
        }
    }

    pub fn bitmap_len(width: u8, height: u8) -> usize {
        usize::from(height) * usize::from(width).div_ceil(8)
    }

    fn stride(&self) -> usize {
        usize::from(self.width).div_ceil(8)
    }

    pub fn pixel(&self, x: u8, y: u8) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let byte = self.bitmap[usize::from(y) * self.stride() + usize::from(x) / 8];
        byte & (0x80 >> (x % 8)) != 0
    }

    pub fn set(&mut self, x: u8, y: u8) {
        if x < self.width && y < self.height {
            let stride = self.stride();
            self.bitmap[usize::from(y) * stride + usize::from(x) / 8] |= 0x80 >> (x % 8);
        }
    }

    /// Set pixels as `(x, y)` pairs relative to the bitmap origin.
    pub fn set_pixels(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).filter(move |&x| self.pixel(x, y)).map(move |x| (x, y)))
    }
}

#[derive(Debug, Error)]
pub enum FontError {
    #[error("bad font magic {0:?}, expected \"MCFN\"")]
    BadMagic([u8; 4]),
    #[error("unsupported font version {0}")]
    UnsupportedVersion(u16),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("glyph {index}: bitmap truncated ({expected} bytes expected, {available} available)")]
    GlyphBitmapTruncated { index: usize, expected: usize, available: usize },
    #[error("unknown joining class tag {tag} for U+{codepoint:04X}")]
    UnknownJoiningClass { codepoint: u32, tag: u8 },
    #[error("glyph {index}: unknown form tag {tag}")]
    UnknownForm { index: usize, tag: u8 },
    #[error("duplicate glyph U+{:04X} {:?}", .0.codepoint, .0.form)]
    DuplicateGlyph(GlyphKey),
    #[error("duplicate codepoint U+{0:04X}")]
    DuplicateCodepoint(u32),
    #[error("atlas has no replacement glyph")]
    MissingReplacement,
    #[error("U+{codepoint:04X} ({class:?}) lacks its {form:?} form")]
    MissingForm { codepoint: u32, class: JoiningClass, form: GlyphForm },
    #[error("{0} trailing bytes after font data")]
    TrailingBytes(usize),
    #[error("font has too many {what} ({count})")]
    TooMany { what: &'static str, count: usize },
    #[error("empty alphabet")]
    EmptyAlphabet,
}

/// An immutable bitmap font plus its joining table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphAtlas {
    pub line_height: u8,
    pub baseline: u8,
    pub space_width: u8,
    replacement: Glyph,
    glyphs: BTreeMap<GlyphKey, Glyph>,
    joining: BTreeMap<u32, JoiningClass>,
}

impl GlyphAtlas {
    /// Builds an atlas, checking that every joining letter present carries the
    /// forms its class requires.
    pub fn new(
        line_height: u8,
        baseline: u8,
        space_width: u8,
        replacement: Glyph,
        glyphs: BTreeMap<GlyphKey, Glyph>,
        joining: BTreeMap<u32, JoiningClass>,
    ) -> Result<Self, FontError> {
        let mut glyphs = glyphs;
        glyphs.remove(&GlyphKey::REPLACEMENT);
        let present: HashSet<u32> = glyphs.keys().map(|k| k.codepoint).collect();
        for (&codepoint, &class) in &joining {
            if !present.contains(&codepoint) {
                continue;
            }
            for &form in class.required_forms() {
                if !glyphs.contains_key(&GlyphKey { codepoint, form }) {
                    return Err(FontError::MissingForm { codepoint, class, form });
                }
            }
        }
        Ok(GlyphAtlas { line_height, baseline, space_width, replacement, glyphs, joining })
    }

    pub fn replacement_glyph(&self) -> &Glyph {
        &self.replacement
    }

    pub fn glyph(&self, key: GlyphKey) -> Option<&Glyph> {
        if key == GlyphKey::REPLACEMENT {
            return Some(&self.replacement);
        }
        self.glyphs.get(&key)
    }

    /// Every glyph except the replacement, in key order.
    pub fn glyphs(&self) -> impl Iterator<Item = (&GlyphKey, &Glyph)> {
        self.glyphs.iter()
    }

    /// Number of glyphs including the replacement.
    pub fn glyph_count(&self) -> usize {
        self.glyphs.len() + 1
    }

    pub fn joining_table(&self) -> &BTreeMap<u32, JoiningClass> {
        &self.joining
    }

    /// Joining class of `c`; anything outside the table does not join.
    pub fn joining_class(&self, c: char) -> JoiningClass {
        self.joining.get(&(c as u32)).copied().unwrap_or(JoiningClass::NonJoining)
    }

    /// Whether any form of `c` is drawable without falling back to the replacement.
    pub fn covers(&self, c: char) -> bool {
        self.glyphs.contains_key(&GlyphKey::new(c, GlyphForm::Isolated))
            || GlyphForm::ALL.iter().any(|&f| self.glyphs.contains_key(&GlyphKey::new(c, f)))
    }

    /// Glyph for `c` in `form`, falling back to Isolated, then to the replacement.
    pub fn lookup(&self, c: char, form: GlyphForm) -> (GlyphKey, &Glyph) {
        let wanted = GlyphKey::new(c, form);
        if let Some(g) = self.glyphs.get(&wanted) {
            return (wanted, g);
        }
        let isolated = GlyphKey::new(c, GlyphForm::Isolated);
        if let Some(g) = self.glyphs.get(&isolated) {
            return (isolated, g);
        }
        (GlyphKey::REPLACEMENT, &self.replacement)
    }

    pub fn max_advance(&self) -> u8 {
        self.glyphs.values().chain([&self.replacement]).map(|g| g.advance).max().unwrap_or(0).max(self.space_width)
    }
}

pub fn encode_font(atlas: &GlyphAtlas) -> Result<Vec<u8>, FontError> {
    let joining_count = u16::try_from(atlas.joining.len())
        .map_err(|_| FontError::TooMany { what: "joining entries", count: atlas.joining.len() })?;
    let glyph_count = u16::try_from(atlas.glyph_count())
        .map_err(|_| FontError::TooMany { what: "glyphs", count: atlas.glyph_count() })?;

    let mut out = Vec::new();
    out.extend_from_slice(FONT_MAGIC);
    put_u16(&mut out, FONT_VERSION);
    put_u8(&mut out, atlas.line_height);
    put_u8(&mut out, atlas.baseline);
    put_u8(&mut out, atlas.space_width);
    put_u16(&mut out, joining_count);
    for (&cp, &class) in &atlas.joining {
        put_u32(&mut out, cp);
        put_u8(&mut out, class.tag());
    }
    put_u16(&mut out, glyph_count);
    let all = atlas.glyphs.iter().chain([(&GlyphKey::REPLACEMENT, &atlas.replacement)]);
    for (key, g) in all {
        put_u32(&mut out, key.codepoint);
        put_u8(&mut out, key.form.tag());
        put_u8(&mut out, g.width);
        put_u8(&mut out, g.height);
        put_u8(&mut out, g.x_bearing as u8);
        put_u8(&mut out, g.y_bearing as u8);
        put_u8(&mut out, g.advance);
        debug_assert_eq!(g.bitmap.len(), Glyph::bitmap_len(g.width, g.height));
        out.extend_from_slice(&g.bitmap);
    }
    Ok(out)
}

pub fn decode_font(bytes: &[u8]) -> Result<GlyphAtlas, FontError> {
    let mut r = ByteReader::new(bytes);
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if &magic != FONT_MAGIC {
        return Err(FontError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != FONT_VERSION {
        return Err(FontError::UnsupportedVersion(version));
    }
    let line_height = r.u8()?;
    let baseline = r.u8()?;
    let space_width = r.u8()?;

    let mut joining = BTreeMap::new();
    for _ in 0..r.u16()? {
        let codepoint = r.u32()?;
        let tag = r.u8()?;
        let class = JoiningClass::from_tag(tag).ok_or(FontError::UnknownJoiningClass { codepoint, tag })?;
        if joining.insert(codepoint, class).is_some() {
            return Err(FontError::DuplicateCodepoint(codepoint));
        }
    }

    let mut glyphs = BTreeMap::new();
    let mut replacement = None;
    for index in 0..usize::from(r.u16()?) {
        let codepoint = r.u32()?;
        let tag = r.u8()?;
        let form = GlyphForm::from_tag(tag).ok_or(FontError::UnknownForm { index, tag })?;
        let width = r.u8()?;
        let height = r.u8()?;
        let x_bearing = r.i8()?;
        let y_bearing = r.i8()?;
        let advance = r.u8()?;
        let expected = Glyph::bitmap_len(width, height);
        let available = r.remaining();
        let bitmap = r
            .take(expected)
            .map_err(|_| FontError::GlyphBitmapTruncated { index, expected, available })?
            .to_vec();
        let glyph = Glyph { width, height, x_bearing, y_bearing, advance, bitmap };
        let key = GlyphKey { codepoint, form };
        if key == GlyphKey::REPLACEMENT {
            if replacement.replace(glyph).is_some() {
                return Err(FontError::DuplicateGlyph(key));
            }
        } else if glyphs.insert(key, glyph).is_some() {
            return Err(FontError::DuplicateGlyph(key));
        }
    }
    if r.remaining() != 0 {
        return Err(FontError::TrailingBytes(r.remaining()));
    }
    let replacement = replacement.ok_or(FontError::MissingReplacement)?;
    GlyphAtlas::new(line_height, baseline, space_width, replacement, glyphs, joining)
}

/// Joining classes of the Arabic and Persian letters shipped by default.
pub fn default_joining_table() -> BTreeMap<u32, JoiningClass> {
    use JoiningClass::*;
    const RIGHT: &[u32] = &[
        0x0622, 0x0623, 0x0624, 0x0625, 0x0627, 0x0629, 0x062F, 0x0630, 0x0631, 0x0632, 0x0648, 0x0698,
    ];
    const DUAL: &[u32] = &[
        0x0626, 0x0628, 0x062A, 0x062B, 0x062C, 0x062D, 0x062E, 0x0633, 0x0634, 0x0635, 0x0636, 0x0637,
        0x0638, 0x0639, 0x063A, 0x0640, 0x0641, 0x0642, 0x0643, 0x0644, 0x0645, 0x0646, 0x0647, 0x0649,
        0x064A, 0x067E, 0x0686, 0x06A9, 0x06AF, 0x06CC,
    ];
    RIGHT.iter().map(|&c| (c, Right)).chain(DUAL.iter().map(|&c| (c, Dual))).collect()
}

/// Arabic vowel marks. Drawn with zero advance over the preceding glyph.
pub fn is_mark(c: char) -> bool {
    matches!(c as u32, 0x064B..=0x0652 | 0x0670)
}

/// Default alphabet for the built-in font: the joining table, hamza, marks,
/// Arabic punctuation and digits, plus printable ASCII.
pub fn default_alphabet() -> Vec<(char, JoiningClass)> {
    let mut out: Vec<(char, JoiningClass)> = default_joining_table()
        .into_iter()
        .map(|(cp, class)| (char::from_u32(cp).expect("table holds scalar values"), class))
        .collect();
    let non_joining = (0x21u32..=0x7E)
        .chain([0x0621, 0x060C, 0x061B, 0x061F])
        .chain(0x064B..=0x0652)
        .chain(0x0660..=0x0669)
        .chain(0x06F0..=0x06F9);
    out.extend(non_joining.filter_map(char::from_u32).map(|c| (c, JoiningClass::NonJoining)));
    out
}

const CELL: u8 = 8;
const GLYPH_HEIGHT: u8 = 10;

fn mix(mut x: u32) -> u32 {
    x ^= x >> 16;
    x = x.wrapping_mul(0x7FEB_352D);
    x ^= x >> 15;
    x = x.wrapping_mul(0x846C_A68B);
    x ^ (x >> 16)
}

fn letter_glyph(c: char, form: GlyphForm) -> Glyph {
    // 8px cell, 10px tall, top at line row 1, baseline stroke on bitmap row 8.
    let mut g = Glyph::blank(CELL, GLYPH_HEIGHT, CELL);
    g.y_bearing = 1;
    let bits = mix(c as u32) | 1;
    for row in 0..6u8 {
        for col in 0..5u8 {
            if bits & (1 << (row * 5 + col)) != 0 {
                g.set(2 + col, 1 + row);
            }
        }
    }
    // Stem on the right edge of the body so every letter has a visible anchor.
    for y in 1..8 {
        g.set(6, y);
    }
    for x in 2..=6 {
        g.set(x, 8);
    }
    if form.joins_next() {
        g.set(0, 8);
        g.set(1, 8);
    }
    if form.joins_prev() {
        g.set(7, 8);
    }
    g
}

fn mark_glyph(c: char) -> Glyph {
    let mut g = Glyph::blank(3, 2, 0);
    g.x_bearing = 3;
    g.y_bearing = 0;
    let bits = mix(c as u32);
    for i in 0..6u8 {
        if bits & (1 << i) != 0 {
            g.set(i % 3, i / 3);
        }
    }
    g.set(1, 0);
    g
}

/// Hollow box used for codepoints the atlas does not cover.
pub fn replacement_box() -> Glyph {
    let mut g = Glyph::blank(7, 9, CELL);
    g.y_bearing = 1;
    for x in 0..7 {
        g.set(x, 0);
        g.set(x, 8);
    }
    for y in 0..9 {
        g.set(0, y);
        g.set(6, y);
    }
    g
}

/// Procedurally draws a deterministic atlas for an alphabet. Each letter gets
/// the forms its class requires; joining forms carry connector strokes on the
/// side they join.
pub fn generate_test_font(alphabet: &[(char, JoiningClass)]) -> Result<GlyphAtlas, FontError> {
    if alphabet.is_empty() {
        return Err(FontError::EmptyAlphabet);
    }
    let mut joining = BTreeMap::new();
    let mut glyphs = BTreeMap::new();
    for &(c, class) in alphabet {
        if joining.contains_key(&(c as u32)) || glyphs.contains_key(&GlyphKey::new(c, GlyphForm::Isolated)) {
            return Err(FontError::DuplicateCodepoint(c as u32));
        }
        if class != JoiningClass::NonJoining {
            joining.insert(c as u32, class);
        }
        for &form in class.required_forms() {
            let glyph = if is_mark(c) { mark_glyph(c) } else { letter_glyph(c, form) };
            glyphs.insert(GlyphKey::new(c, form), glyph);
        }
    }
    GlyphAtlas::new(12, 9, 4, replacement_box(), glyphs, joining)
}

/// The built-in font over [`default_alphabet`].
pub fn builtin_font() -> GlyphAtlas {
    generate_test_font(&default_alphabet()).expect("default alphabet has no duplicates")
}

#[cfg(test)]
mod tests {
    use super::*;

    const BEH: char = '\u{0628}';
    const ALEF: char = '\u{0627}';

    fn three_class_atlas() -> GlyphAtlas {
        generate_test_font(&[(BEH, JoiningClass::Dual), (ALEF, JoiningClass::Right), ('3', JoiningClass::NonJoining)])
            .unwrap()
    }

    #[test]
    fn one_dual_letter_gets_four_forms() {
        let atlas = generate_test_font(&[(BEH, JoiningClass::Dual)]).unwrap();
        assert_eq!(atlas.glyph_count(), 5);
        for form in GlyphForm::ALL {
            assert!(atlas.glyph(GlyphKey::new(BEH, form)).is_some());
        }
        assert!(atlas.glyph(GlyphKey::REPLACEMENT).is_some());
    }

    #[test]
    fn glyph_count_follows_classes() {
        assert_eq!(three_class_atlas().glyph_count(), 4 + 2 + 1 + 1);
    }

    #[test]
    fn forms_are_visually_distinct() {
        let atlas = three_class_atlas();
        let forms: Vec<_> = GlyphForm::ALL.iter().map(|&f| atlas.glyph(GlyphKey::new(BEH, f)).unwrap()).collect();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(forms[i].bitmap, forms[j].bitmap);
            }
        }
        let alef = atlas.glyph(GlyphKey::new(ALEF, GlyphForm::Isolated)).unwrap();
        assert_ne!(alef.bitmap, forms[0].bitmap);
    }

    #[test]
    fn duplicate_codepoints_are_rejected() {
        let err = generate_test_font(&[(BEH, JoiningClass::Dual), (BEH, JoiningClass::Right)]).unwrap_err();
        assert!(matches!(err, FontError::DuplicateCodepoint(0x0628)));
        assert!(matches!(generate_test_font(&[]), Err(FontError::EmptyAlphabet)));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = encode_font(&three_class_atlas()).unwrap();
        let b = encode_font(&three_class_atlas()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn font_roundtrip_and_idempotence() {
        let atlas = three_class_atlas();
        let bytes = encode_font(&atlas).unwrap();
        let decoded = decode_font(&bytes).unwrap();
        assert_eq!(decoded, atlas);
        assert_eq!(encode_font(&decoded).unwrap(), bytes);

        let builtin = builtin_font();
        assert_eq!(decode_font(&encode_font(&builtin).unwrap()).unwrap(), builtin);
    }

    #[test]
    fn truncated_bitmap_names_the_glyph() {
        let atlas = three_class_atlas();
        let bytes = encode_font(&atlas).unwrap();
        let err = decode_font(&bytes[..bytes.len() - 1]).unwrap_err();
        match err {
            FontError::GlyphBitmapTruncated { index, .. } => assert_eq!(index, atlas.glyph_count() - 1),
            other => panic!("unexpected {other}"),
        }
        assert!(err_string(&bytes[..bytes.len() - 1]).contains("glyph 7"));
    }

    fn err_string(b: &[u8]) -> String {
        decode_font(b).unwrap_err().to_string()
    }

    #[test]
    fn bad_magic_and_missing_forms() {
        let mut bytes = encode_font(&three_class_atlas()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_font(&bytes), Err(FontError::BadMagic(_))));

        let mut glyphs = BTreeMap::new();
        glyphs.insert(GlyphKey::new(BEH, GlyphForm::Isolated), replacement_box());
        let joining = [(BEH as u32, JoiningClass::Dual)].into();
        let err = GlyphAtlas::new(12, 9, 4, replacement_box(), glyphs, joining).unwrap_err();
        assert!(matches!(err, FontError::MissingForm { form: GlyphForm::Initial, .. }));
    }

    #[test]
    fn lookup_falls_back() {
        let atlas = three_class_atlas();
        assert_eq!(atlas.lookup(ALEF, GlyphForm::Initial).0, GlyphKey::new(ALEF, GlyphForm::Isolated));
        assert_eq!(atlas.lookup('3', GlyphForm::Medial).0, GlyphKey::new('3', GlyphForm::Isolated));
        assert_eq!(atlas.lookup('z', GlyphForm::Isolated).0, GlyphKey::REPLACEMENT);
        assert_eq!(atlas.joining_class('z'), JoiningClass::NonJoining);
    }

    #[test]
    fn bitmap_rows_are_msb_first() {
        let mut g = Glyph::blank(10, 2, 10);
        assert_eq!(g.bitmap.len(), 4);
        g.set(0, 0);
        g.set(9, 1);
        assert_eq!(g.bitmap, [0x80, 0x00, 0x00, 0x40]);
        assert_eq!(g.set_pixels().collect::<Vec<_>>(), [(0, 0), (9, 1)]);
    }
}
