//! Random bundle generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use contentforge_core::bundle::{encode_bundle, BundleFiles, BundleHandle, Coverage};
use contentforge_core::font::{builtin_font, default_joining_table, GlyphAtlas};
use contentforge_core::model::{ContentItem, PageNode, ProjectManifest, Rgb, Theme, ThemeColors};
use rand::seq::SliceRandom;
use rand::Rng;

pub const AUDIO_ASSETS: [&str; 3] = ["snd/a1.mid", "snd/a2.mid", "snd/a3.mid"];
pub const OTHER_ASSETS: [&str; 3] = ["img/p.png", "vid/v.3gp", "img/splash.png"];

pub fn assets() -> BTreeMap<String, Vec<u8>> {
    AUDIO_ASSETS.iter().chain(&OTHER_ASSETS).enumerate().map(|(i, n)| (n.to_string(), vec![i as u8; i + 1])).collect()
}

/// Letters drawn from the built-in font: Arabic letters of every joining
/// class, marks, digits and Latin.
pub fn letters() -> Vec<char> {
    let mut out: Vec<char> = default_joining_table().keys().filter_map(|&c| char::from_u32(c)).collect();
    out.extend(['\u{0621}', '\u{064E}', '\u{0650}', '\u{0651}', '\u{0661}', '\u{0665}']);
    out.extend("abcXYZ019.".chars());
    out
}

pub fn random_word<R: Rng>(rng: &mut R, alphabet: &[char], max_len: usize) -> String {
    (0..rng.gen_range(1..=max_len)).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

pub fn random_text<R: Rng>(rng: &mut R, alphabet: &[char], max_words: usize) -> String {
    let words: Vec<String> = (0..rng.gen_range(1..=max_words)).map(|_| random_word(rng, alphabet, 9)).collect();
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push_str(if rng.gen_ratio(1, 8) { "  " } else { " " });
        }
        text.push_str(w);
    }
    text
}

pub fn random_item<R: Rng>(rng: &mut R, alphabet: &[char], palette_len: usize) -> ContentItem {
    let caption = |rng: &mut R| if rng.gen_bool(0.5) { random_word(rng, alphabet, 6) } else { String::new() };
    match rng.gen_range(0..9) {
        0..=2 => ContentItem::Text {
            text: random_text(rng, alphabet, 12),
            color_index: rng.gen_range(0..palette_len) as u8,
            font_id: rng.gen_range(0..3),
        },
        3 => ContentItem::Image { asset_ref: OTHER_ASSETS[0].into(), caption: caption(rng) },
        4 | 5 => ContentItem::Audio { asset_ref: AUDIO_ASSETS.choose(rng).unwrap().to_string(), caption: caption(rng) },
        6 => ContentItem::Video { asset_ref: OTHER_ASSETS[1].into(), caption: caption(rng) },
        7 => ContentItem::PhoneNumber { value: format!("+98{}", rng.gen_range(1000..9999)), label: caption(rng) },
        _ if rng.gen_bool(0.5) => ContentItem::Email { value: "info@example.org".into(), label: caption(rng) },
        _ => ContentItem::WebLink { value: "https://example.org/x".into(), label: caption(rng) },
    }
}

pub fn random_theme<R: Rng>(rng: &mut R) -> Theme {
    let mut color = || Rgb::new(rng.gen(), rng.gen(), rng.gen());
    let colors = ThemeColors { background: color(), text: color(), highlight: color(), header: color() };
    let palette = (0..rng.gen_range(1..=4)).map(|_| Rgb::new(rng.gen(), rng.gen(), rng.gen())).collect();
    let splash_enabled = rng.gen_bool(0.3);
    Theme {
        colors,
        palette,
        splash_enabled,
        splash_image: splash_enabled.then(|| OTHER_ASSETS[2].to_string()),
        background_image: rng.gen_bool(0.3).then(|| OTHER_ASSETS[0].to_string()),
        background_music: rng.gen_bool(0.3).then(|| AUDIO_ASSETS[0].to_string()),
    }
}

/// A manifest with 1..=`max_pages` pages in a random tree, 0..=`max_items` items each.
pub fn random_manifest<R: Rng>(rng: &mut R, max_pages: usize, max_items: usize) -> ProjectManifest {
    let alphabet = letters();
    let theme = random_theme(rng);
    let page_count = rng.gen_range(1..=max_pages);
    let mut ids: Vec<u32> = Vec::with_capacity(page_count);
    while ids.len() < page_count {
        let id = if rng.gen_bool(0.5) { rng.gen_range(0..200) } else { rng.gen() };
        if id != u32::MAX && !ids.contains(&id) {
            ids.push(id);
        }
    }
    // Build the tree by attaching each page to a random earlier page or the root list.
    let mut nodes: Vec<PageNode> = ids
        .iter()
        .map(|&id| {
            let mut p = PageNode::new(id, random_word(rng, &alphabet, 8));
            p.items = (0..rng.gen_range(0..=max_items)).map(|_| random_item(rng, &alphabet, theme.palette.len())).collect();
            p
        })
        .collect();
    let parents: Vec<Option<usize>> =
        (0..page_count).map(|i| if i == 0 || rng.gen_bool(0.3) { None } else { Some(rng.gen_range(0..i)) }).collect();
    let mut roots = Vec::new();
    for i in (0..page_count).rev() {
        let mut node = std::mem::replace(&mut nodes[i], PageNode::new(0, ""));
        node.children.reverse();
        match parents[i] {
            Some(p) => nodes[p].children.push(node),
            None => roots.push(node),
        }
    }
    roots.reverse();
    ProjectManifest {
        title: "generated".into(),
        version: "1".into(),
        theme,
        font_source: "builtin:arabic".into(),
        asset_dir: "assets".into(),
        roots,
    }
}

pub fn compile(manifest: &ProjectManifest, atlas: &GlyphAtlas) -> BundleFiles {
    encode_bundle(manifest, atlas, &assets(), Coverage::Strict).expect("generated manifests are encodable")
}

pub fn random_bundle<R: Rng>(rng: &mut R, max_pages: usize, max_items: usize) -> (ProjectManifest, Arc<BundleHandle>) {
    let manifest = random_manifest(rng, max_pages, max_items);
    let files = compile(&manifest, &builtin_font());
    (manifest, Arc::new(BundleHandle::from_files(&files).unwrap()))
}
