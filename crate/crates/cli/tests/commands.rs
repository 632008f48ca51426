use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contentforge")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Compiles the demo project into `dir/name` and returns that path.
fn compiled(dir: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let manifest = root().join("fixtures/demo/manifest.json");
    let o = run(&["compile", s(&manifest), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

/// Writes an edited copy of the demo manifest into `dir`, still pointing at the demo assets.
fn edited_manifest(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = std::fs::read_to_string(root().join("fixtures/demo/manifest.json")).unwrap();
    let assets = root().join("fixtures/demo/assets");
    let edited = edit(text.replace("\"assets\"", &format!("{:?}", s(&assets))));
    let manifest = dir.join("m.json");
    std::fs::write(&manifest, edited).unwrap();
    manifest
}

#[test]
fn compile_writes_bundle_files_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = compiled(tmp.path(), "a");
    let b = compiled(tmp.path(), "b");
    for f in ["index.bin", "content.bin", "theme.bin", "font.bin", "assets/snd/song.mid", "assets/img/map.png"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }
    let o = run(&["compile", s(&root().join("fixtures/demo/manifest.json")), "-o", s(&tmp.path().join("c"))]);
    assert!(stdout(&o).contains("4 pages"), "{}", stdout(&o));
}

#[test]
fn compile_reports_missing_asset() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = edited_manifest(tmp.path(), |t| t.replace("snd/song.mid", "snd/missing.mid"));
    let o = run(&["compile", s(&manifest), "-o", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing asset \"snd/missing.mid\""), "{}", stderr(&o));
    assert!(!tmp.path().join("out/index.bin").exists());
}

#[test]
fn compile_reports_syntax_position() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.json");
    std::fs::write(&manifest, "{\n  \"title\": \"x\",\n  oops\n}").unwrap();
    let o = run(&["compile", s(&manifest), "-o", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&format!("{}:3:3:", manifest.display())), "{}", stderr(&o));

    let o = run(&["compile", s(&tmp.path().join("absent.json")), "-o", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compile_rejects_missing_font_source() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = edited_manifest(tmp.path(), |t| t.replace("builtin:arabic", "fonts/none.bin"));
    let o = run(&["compile", s(&manifest), "-o", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fonts/none.bin"), "{}", stderr(&o));
}

#[test]
fn pack_is_reproducible_and_lists_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = compiled(tmp.path(), "b");
    let template = root().join("fixtures/template.zip");
    let mut outputs = Vec::new();
    for name in ["one.zip", "two.zip"] {
        let out = tmp.path().join(name);
        let o = run(&["pack", s(&bundle), "--template", s(&template), "-o", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("content/content.bin"));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    // Same bytes as the library path that the golden archive was frozen from.
    let golden = std::fs::read(root().join("crates/core/tests/golden/demo_pack.zip")).unwrap();
    assert!(outputs[0] == golden);

    let out = tmp.path().join("mapped.zip");
    let o = run(&["pack", s(&bundle), "--template", s(&template), "-o", s(&out), "--path-map", "content=data/c.bin"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let listing = run(&["inspect", s(&out)]);
    assert!(stdout(&listing).contains("data/c.bin"));
    assert!(!stdout(&listing).contains("content/content.bin"));
}

#[test]
fn pack_rejects_corrupt_template() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = compiled(tmp.path(), "b");
    let mut template = std::fs::read(root().join("fixtures/template.zip")).unwrap();
    template.truncate(template.len() - 30);
    let bad = tmp.path().join("bad.zip");
    std::fs::write(&bad, template).unwrap();
    let out = tmp.path().join("out.zip");
    let o = run(&["pack", s(&bundle), "--template", s(&bad), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("malformed archive"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn render_writes_ppm_and_rejects_unknown_page() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = compiled(tmp.path(), "b");
    let out = tmp.path().join("p.ppm");
    let o = run(&["render", s(&bundle), "--page", "7", "--width", "240", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let golden = std::fs::read(root().join("crates/core/tests/golden/page7_w240.ppm")).unwrap();
    assert!(std::fs::read(&out).unwrap() == golden);

    let o = run(&["render", s(&bundle), "--page", "9999", "--width", "240", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["render", s(&bundle), "--page", "7", "--width", "3", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn search_prints_one_line_per_match() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = compiled(tmp.path(), "b");
    let o = run(&["search", s(&bundle), "hall"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "7\t1\t0\tHall 2 opens at 19:30\n");

    let o = run(&["search", s(&bundle), "no such words"]);
    assert_eq!((o.status.code(), stdout(&o).as_str()), (Some(0), ""));

    let o = run(&["search", s(&bundle), ""]);
    assert_eq!(o.status.code(), Some(2));

    // Matches come in page order, titles before items.
    let o = run(&["search", s(&bundle), "ال"]);
    let pages: Vec<u32> = stdout(&o).lines().map(|l| l.split('\t').next().unwrap().parse().unwrap()).collect();
    assert!(pages.len() >= 3);
    let order = [1, 7, 3, 9];
    let pos = |p: &u32| order.iter().position(|x| x == p).unwrap();
    assert!(pages.windows(2).all(|w| pos(&w[0]) <= pos(&w[1])), "{pages:?}");
    assert!(stdout(&o).lines().all(|l| l.split('\t').count() == 4));
}

#[test]
fn inspect_summarizes_bundle_and_flags_damage() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = compiled(tmp.path(), "b");
    let o = run(&["inspect", s(&bundle)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("pages: 4") && text.contains("    7 \"البرنامج\""), "{text}");

    let content = bundle.join("content.bin");
    let mut bytes = std::fs::read(&content).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&content, bytes).unwrap();
    let o = run(&["inspect", s(&bundle)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("finding:"));
    // A damaged bundle is not packed.
    let o = run(&["pack", s(&bundle), "--template", s(&root().join("fixtures/template.zip")), "-o", s(&tmp.path().join("x.zip"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    assert_eq!(run(&["render", "x", "--page", "seven", "--width", "1", "-o", "y"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
