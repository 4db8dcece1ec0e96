//! Writes the small synthetic benchmark under `data/sample/`.
//!
//! Each image is smooth coloured noise with a faint brightness offset inside
//! a hidden mask (block-letter text or a crude silhouette). The offset is
//! lost in per-pixel noise at full size and survives area-averaged
//! downscaling.
//!
//! Usage: `cargo run -p zoomeval --example make_sample_data [OUT_DIR]`

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use zoomeval::image_ops::RasterImage;
use zoomeval::manifest::{BenchmarkItem, ItemKind, Manifest, Rarity, Script, MANIFEST_VERSION};

const W: u32 = 640;
const H: u32 = 480;
const OFFSET: f32 = 18.0;

type Mask = Box<dyn Fn(f32, f32) -> bool>;

fn glyph(c: char) -> [&'static str; 7] {
    match c {
        'A' => [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'C' => [".####", "#....", "#....", "#....", "#....", "#....", ".####"],
        'D' => ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
        'E' => ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
        'F' => ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
        'G' => [".####", "#....", "#....", "#.###", "#...#", "#...#", ".###."],
        'H' => ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'I' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"],
        'K' => ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
        'L' => ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
        'M' => ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
        'N' => ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"],
        'O' => [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'P' => ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
        'R' => ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
        'S' => [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
        'V' => ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
        'W' => ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"],
        'Y' => ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
        _ => ["#####", "#.#.#", "#####", "..#..", "#####", "#.#.#", "#####"],
    }
}

/// Block letters centred on the canvas, scaled to fit.
fn text_mask(text: &str) -> Mask {
    let chars: Vec<char> = text.to_uppercase().chars().collect();
    let cols = chars.len() as f32 * 6.0 - 1.0;
    let cell = (W as f32 * 0.85 / cols).min(H as f32 * 0.5 / 7.0);
    let x0 = (W as f32 - cols * cell) / 2.0;
    let y0 = (H as f32 - 7.0 * cell) / 2.0;
    Box::new(move |x, y| {
        let (gx, gy) = ((x - x0) / cell, (y - y0) / cell);
        if gx < 0.0 || gy < 0.0 || gy >= 7.0 {
            return false;
        }
        let (ci, col) = ((gx as usize) / 6, (gx as usize) % 6);
        if ci >= chars.len() || col == 5 || chars[ci] == ' ' {
            return false;
        }
        glyph(chars[ci])[gy as usize].as_bytes()[col] == b'#'
    })
}

fn ellipse(cx: f32, cy: f32, rx: f32, ry: f32) -> impl Fn(f32, f32) -> bool {
    move |x, y| ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0
}

fn rect(x0: f32, y0: f32, x1: f32, y1: f32) -> impl Fn(f32, f32) -> bool {
    move |x, y| x >= x0 && x < x1 && y >= y0 && y < y1
}

/// Upward triangle with apex `(cx, top)` and base `[cx-half, cx+half]` at `base`.
fn spire(cx: f32, top: f32, base: f32, half: f32) -> impl Fn(f32, f32) -> bool {
    move |x, y| y >= top && y < base && (x - cx).abs() <= half * (y - top) / (base - top)
}

fn union(parts: Vec<Box<dyn Fn(f32, f32) -> bool>>) -> Mask {
    Box::new(move |x, y| parts.iter().any(|p| p(x, y)))
}

fn silhouette(name: &str) -> Mask {
    match name {
        "cat" => union(vec![
            Box::new(ellipse(320.0, 320.0, 110.0, 90.0)),
            Box::new(ellipse(320.0, 190.0, 70.0, 60.0)),
            Box::new(spire(280.0, 110.0, 160.0, 22.0)),
            Box::new(spire(360.0, 110.0, 160.0, 22.0)),
            Box::new(rect(420.0, 330.0, 520.0, 350.0)),
        ]),
        "bed" => union(vec![
            Box::new(rect(140.0, 260.0, 500.0, 330.0)),
            Box::new(rect(140.0, 180.0, 170.0, 380.0)),
            Box::new(rect(470.0, 230.0, 500.0, 380.0)),
            Box::new(ellipse(210.0, 245.0, 40.0, 18.0)),
        ]),
        "cathedral" => union(vec![
            Box::new(rect(220.0, 200.0, 270.0, 420.0)),
            Box::new(rect(370.0, 200.0, 420.0, 420.0)),
            Box::new(spire(245.0, 60.0, 200.0, 25.0)),
            Box::new(spire(395.0, 60.0, 200.0, 25.0)),
            Box::new(rect(270.0, 280.0, 370.0, 420.0)),
            Box::new(spire(320.0, 220.0, 280.0, 50.0)),
        ]),
        "dinosaur" => union(vec![
            Box::new(ellipse(330.0, 260.0, 120.0, 70.0)),
            Box::new(ellipse(450.0, 170.0, 55.0, 35.0)),
            Box::new(rect(420.0, 180.0, 450.0, 240.0)),
            Box::new(rect(280.0, 300.0, 310.0, 420.0)),
            Box::new(rect(360.0, 300.0, 390.0, 420.0)),
            Box::new(ellipse(190.0, 270.0, 90.0, 18.0)),
        ]),
        "face" => {
            let head = ellipse(320.0, 240.0, 130.0, 160.0);
            let eye_l = ellipse(270.0, 200.0, 22.0, 14.0);
            let eye_r = ellipse(370.0, 200.0, 22.0, 14.0);
            let mouth = rect(260.0, 310.0, 380.0, 325.0);
            Box::new(move |x, y| head(x, y) && !eye_l(x, y) && !eye_r(x, y) && !mouth(x, y))
        }
        other => panic!("no silhouette for {other}"),
    }
}

/// Smooth random colour field plus per-pixel grain, brightened inside `mask`.
fn render(seed: u64, mask: &Mask) -> RasterImage {
    let mut rng = StdRng::seed_from_u64(seed);
    let cell = 40u32;
    let (gw, gh) = (W / cell + 2, H / cell + 2);
    let grid: Vec<[f32; 3]> = (0..gw * gh)
        .map(|_| [rng.random_range(40.0..200.0), rng.random_range(40.0..200.0), rng.random_range(40.0..200.0)])
        .collect();
    let grain: Vec<f32> = (0..W * H).map(|_| rng.random_range(-30.0..30.0)).collect();
    RasterImage::from_rgb_fn(W, H, |x, y| {
        let (fx, fy) = (x as f32 / cell as f32, y as f32 / cell as f32);
        let (ix, iy) = (fx as u32, fy as u32);
        let (tx, ty) = (fx - ix as f32, fy - iy as f32);
        let at = |i: u32, j: u32| grid[(j * gw + i) as usize];
        let lift = if mask(x as f32 + 0.5, y as f32 + 0.5) { OFFSET } else { 0.0 };
        let g = grain[(y * W + x) as usize];
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let top = at(ix, iy)[c] * (1.0 - tx) + at(ix + 1, iy)[c] * tx;
            let bottom = at(ix, iy + 1)[c] * (1.0 - tx) + at(ix + 1, iy + 1)[c] * tx;
            *out = (top * (1.0 - ty) + bottom * ty + g + lift).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
    .expect("valid dimensions")
}

struct Spec {
    id: &'static str,
    kind: ItemKind,
    script: Script,
    rarity: Rarity,
    truth: &'static str,
    synonyms: &'static [&'static str],
    hint: &'static str,
    shape: &'static str,
}

const fn text(id: &'static str, script: Script, rarity: Rarity, truth: &'static str, hint: &'static str) -> Spec {
    Spec { id, kind: ItemKind::HiddenText, script, rarity, truth, synonyms: &[], hint, shape: "" }
}

const fn object(id: &'static str, rarity: Rarity, truth: &'static str, synonyms: &'static [&'static str], hint: &'static str, shape: &'static str) -> Spec {
    Spec { id, kind: ItemKind::HiddenObject, script: Script::NotApplicable, rarity, truth, synonyms, hint, shape }
}

const ITEMS: &[Spec] = &[
    text("t001", Script::Latin, Rarity::Normal, "Mars", "the text 'Mars'"),
    text("t002", Script::Latin, Rarity::Normal, "dog", "the text 'dog'"),
    text("t003", Script::Latin, Rarity::Normal, "New York", "the text 'New York'"),
    text("t004", Script::Latin, Rarity::Rare, "saccharine", "the text 'saccharine'"),
    text("t005", Script::Latin, Rarity::Rare, "Wyvern", "the text 'Wyvern'"),
    text("t006", Script::NonLatin, Rarity::Normal, "猫", "the text '猫'"),
    text("t007", Script::NonLatin, Rarity::Rare, "麒麟", "the text '麒麟'"),
    object("o001", Rarity::Normal, "cat", &["kitten", "feline"], "a cat", "cat"),
    object("o002", Rarity::Normal, "bed", &["bedstead"], "a bed", "bed"),
    object("o003", Rarity::Rare, "Cologne Cathedral", &["cathedral", "church"], "the Cologne Cathedral", "cathedral"),
    object("o004", Rarity::Rare, "Tyrannosaurus", &["dinosaur", "T-rex", "T. rex"], "a Tyrannosaurus", "dinosaur"),
];

const EXEMPLARS: &[Spec] = &[
    text("e001", Script::Latin, Rarity::Normal, "POLO", "the text 'POLO'"),
    object("e002", Rarity::Normal, "face", &["head", "portrait"], "a face", "face"),
];

fn mask_for(spec: &Spec) -> Mask {
    match spec.kind {
        ItemKind::HiddenText => text_mask(spec.truth),
        ItemKind::HiddenObject => silhouette(spec.shape),
    }
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| "data/sample".into(), PathBuf::from);
    std::fs::create_dir_all(out.join("images")).expect("create output directory");
    let build = |specs: &[Spec], seed_base: u64| -> Vec<BenchmarkItem> {
        specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let rel = format!("images/{}.jpg", s.id);
                render(seed_base + i as u64, &mask_for(s)).save(out.join(&rel)).expect("write image");
                BenchmarkItem {
                    id: s.id.into(),
                    kind: s.kind,
                    script: s.script,
                    rarity: s.rarity,
                    image_path: rel.into(),
                    ground_truth: s.truth.into(),
                    synonyms: s.synonyms.iter().map(|x| x.to_string()).collect(),
                    hint_phrase: s.hint.into(),
                }
            })
            .collect()
    };
    let items = build(ITEMS, 1000);
    let exemplars = build(EXEMPLARS, 2000);
    let manifest = Manifest { version: MANIFEST_VERSION, root_dir: PathBuf::new(), items, exemplars };
    std::fs::write(out.join("manifest.json"), manifest.to_json() + "\n").expect("write manifest");
    println!("wrote {} items and {} exemplars to {}", manifest.items.len(), manifest.exemplars.len(), out.display());
}
