//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use zoomeval::image_ops::{squint, zoom_out, zoom_out_dimensions, RasterImage};
use zoomeval::manifest::{balance_report, load_manifest, BenchmarkItem, ItemKind, Rarity, Script};
use zoomeval::protocol::{render_prompt, Stage};
use zoomeval::redundancy::{compare_reports, repetition_rate};
use zoomeval::reporting::{sweep_row, RunReport};
use zoomeval::scoring::{format_hundredths, percent_hundredths};
use zoomeval::sweep::SweepResult;
use zoomeval::tensor_io::{decode, encode, Matrix, Tensor, TensorFile};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sample_manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sample/manifest.json")
}

fn zoomeval_cmd(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_zoomeval")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("zoomeval {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn mock_end_to_end() -> Check {
    let manifest_path = sample_manifest();
    let manifest = load_manifest(&manifest_path).map_err(|e| e.to_string())?;
    let cells = balance_report(&manifest);
    ensure(manifest.items.len() >= 8, format!("only {} items", manifest.items.len()))?;
    ensure(cells.values().all(|&n| n > 0), format!("empty kind/rarity cell: {cells:?}"))?;

    // endpoints in the config point at a listener that must never be contacted
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    listener.set_nonblocking(true).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(
        dir.path().join("endpoints.json"),
        format!(r#"{{"base_url":"http://{}/v1","model_name":"never-called"}}"#, listener.local_addr().unwrap()),
    )
    .map_err(|e| e.to_string())?;
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"endpoints":"endpoints.json"}"#).map_err(|e| e.to_string())?;
    let out = dir.path().join("runs");

    let started = Instant::now();
    zoomeval_cmd(&[
        "evaluate", "--config", s(&config), "--manifest", s(&manifest_path), "--mock", "semvink-oracle", "--plan", "full",
        "--out", s(&out), "--run-id", "acceptance",
    ])?;
    let elapsed = started.elapsed();
    let connections = std::iter::from_fn(|| listener.accept().ok()).count();

    let report: RunReport =
        serde_json::from_slice(&std::fs::read(out.join("acceptance/report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let table = &report.accuracy;
    for kind in [ItemKind::HiddenText, ItemKind::HiddenObject] {
        for stage in ["direct", "hinted", "prompt", "few-shot"] {
            let cell = table.cell("semvink-oracle", stage, kind).ok_or(format!("missing {stage} {kind:?}"))?;
            ensure(cell.percent == "0.00", format!("{stage} {kind:?} = {}", cell.percent))?;
        }
        let zoom = table.cell("semvink-oracle", "zoom-out 64", kind).ok_or("missing zoom-out cell")?;
        ensure(zoom.percent == "100.00", format!("zoom-out {kind:?} = {}", zoom.percent))?;
        let delta = table.delta_vs_best_baseline("semvink-oracle", "zoom-out 64", kind).map(|d| format!("+{}", format_hundredths(d)));
        ensure(delta.as_deref() == Some("+100.00"), format!("delta {delta:?}"))?;
    }
    let text = std::fs::read_to_string(out.join("acceptance/report.txt")).map_err(|e| e.to_string())?;
    ensure(text.contains("100.00 (+100.00)"), "report.txt lacks the annotated zoom-out cell")?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    ensure(connections == 0, format!("{connections} network connections"))?;
    Ok(format!(
        "{} items, baselines 0.00, zoom-out 100.00 (+100.00), {:.2}s, 0 connections",
        manifest.items.len(),
        elapsed.as_secs_f64()
    ))
}

fn sweep_rows(mock: &str, mode: &str, dir: &Path) -> Result<(Vec<String>, Duration), String> {
    let run_id = format!("{}-{mode}", mock.replace(':', "_"));
    let started = Instant::now();
    zoomeval_cmd(&[
        "sweep", "--manifest", s(&sample_manifest()), "--mock", mock, mode, "--out", s(dir), "--run-id", &run_id,
    ])?;
    let elapsed = started.elapsed();
    let sweeps: Vec<SweepResult> =
        serde_json::from_slice(&std::fs::read(dir.join(&run_id).join("sweeps.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let sweep = sweeps.first().ok_or("no sweep written")?;
    Ok((sweep.item_ids.iter().map(|id| sweep_row(sweep, id)).collect(), elapsed))
}

fn all_rows(rows: &[String], expected: &str) -> Result<(), String> {
    match rows.iter().find(|r| r.as_str() != expected) {
        Some(r) => Err(format!("row \"{r}\" != \"{expected}\"")),
        None => Ok(()),
    }
}

fn resolution_sweep() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (rows, t1) = sweep_rows("semvink-oracle:32-128", "--resolutions", dir.path())?;
    all_rows(&rows, "✗ ✓ ✗ ✗")?;
    let (rows8, t2) = sweep_rows("semvink-oracle:8-128", "--resolutions", dir.path())?;
    all_rows(&rows8, "✓ ✓ ✗ ✗")?;
    ensure(t1 < Duration::from_secs(10) && t2 < Duration::from_secs(10), format!("took {t1:?} / {t2:?}"))?;
    Ok(format!(
        "[32,128): \"✗ ✓ ✗ ✗\", [8,128): \"✓ ✓ ✗ ✗\" on all {} items, {:.2}s + {:.2}s",
        rows.len(),
        t1.as_secs_f64(),
        t2.as_secs_f64()
    ))
}

fn squint_grid() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (gated, _) = sweep_rows("semvink-oracle", "--squint", dir.path())?;
    all_rows(&gated, "✗ ✗ ✗ ✗")?;
    let (granted, _) = sweep_rows("enhance-grant", "--squint", dir.path())?;
    all_rows(&granted, "✗ ✗ ✗ ✓")?;
    Ok(format!("resolution-gated mock all ✗, enhance-granting mock \"✗ ✗ ✗ ✓\" on {} items", gated.len()))
}

fn random_image(rng: &mut StdRng, max_side: u32) -> RasterImage {
    let (w, h) = (rng.random_range(1..=max_side), rng.random_range(1..=max_side));
    let data: Vec<u8> = (0..w * h * 3).map(|_| rng.random()).collect();
    RasterImage::new(w, h, 3, data).unwrap()
}

fn image_properties() -> Check {
    const N: usize = 1000;
    let mut rng = StdRng::seed_from_u64(0x1a6e);
    let mut violations: BTreeMap<&str, usize> = BTreeMap::new();
    for _ in 0..N {
        let img = random_image(&mut rng, 96);
        let t = rng.random_range(8..=128);
        let once = zoom_out(&img, t);
        if zoom_out(&once, t) != once {
            *violations.entry("idempotence").or_default() += 1;
        }
        let (w, h) = (img.width() as f64, img.height() as f64);
        let (ow, oh) = (once.width() as f64, once.height() as f64);
        let scale = ow.max(oh) / w.max(h);
        if (ow - w * scale).abs() > 1.0 || (oh - h * scale).abs() > 1.0 {
            *violations.entry("aspect").or_default() += 1;
        }
        if squint(&img, 0, 0) != img {
            *violations.entry("squint identity").or_default() += 1;
        }
        let (b, c) = (rng.random_range(-255..=255), rng.random_range(-254..=254));
        let out = squint(&img, b, c);
        let mut pairs: Vec<(u8, u8)> = img.data().iter().copied().zip(out.data().iter().copied()).collect();
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[1].1 < w[0].1) {
            *violations.entry("squint monotonicity").or_default() += 1;
        }
    }
    let big = zoom_out_dimensions(1024, 768, 128);
    ensure(big == (128, 96), format!("1024x768 -> 128 gave {big:?}"))?;
    ensure(violations.is_empty(), format!("violations over {N} images: {violations:?}"))?;
    Ok(format!("{N} random images x 4 properties, 0 violations; 1024x768 -> 128x96"))
}

fn naive_cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (false, false) => (dot / (na * nb)).clamp(-1.0, 1.0),
        _ => 0.0,
    }
}

fn naive_redundancy(m: &Matrix, t: f32) -> (usize, usize) {
    let n = m.rows();
    let repeated = (0..n).filter(|&i| (0..n).any(|j| j != i && naive_cos(m.row(i), m.row(j)) > t as f64)).count();
    let (mut best, mut run) = (1, 1);
    for i in 1..n {
        run = if naive_cos(m.row(i - 1), m.row(i)) > t as f64 { run + 1 } else { 1 };
        best = best.max(run);
    }
    (repeated, best)
}

fn clustered(rng: &mut StdRng, groups: &[usize], singles: usize, dim: usize, jitter: f32) -> Matrix {
    let mut rows: Vec<Vec<f32>> = Vec::new();
    let random_row = |rng: &mut StdRng| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>();
    for &g in groups {
        let proto = random_row(rng);
        for _ in 0..g {
            rows.push(proto.iter().map(|v| v + rng.random_range(-jitter..=jitter)).collect());
        }
    }
    for _ in 0..singles {
        rows.push(random_row(rng));
    }
    for i in (1..rows.len()).rev() {
        rows.swap(i, rng.random_range(0..=i));
    }
    Matrix::from_rows(&rows).unwrap()
}

fn redundancy_oracle() -> Check {
    const N: usize = 500;
    let mut rng = StdRng::seed_from_u64(500);
    let thresholds = [0.5f32, 0.8, 0.95, 0.99];
    for case in 0..N {
        let dim = rng.random_range(1..=16);
        let len = rng.random_range(1..=64);
        let groups: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(1..=len.max(1))).collect();
        let grouped: usize = groups.iter().sum();
        let m = clustered(&mut rng, &groups, len.saturating_sub(grouped).max(usize::from(grouped == 0)), dim, 0.02);
        let mut previous: Option<(usize, usize)> = None;
        for t in thresholds {
            let r = repetition_rate(&m, t).map_err(|e| e.to_string())?;
            let expected = naive_redundancy(&m, t);
            ensure(
                (r.repeated_token_count, r.max_consecutive_run) == expected,
                format!("case {case} t={t}: got ({}, {}), reference {expected:?}", r.repeated_token_count, r.max_consecutive_run),
            )?;
            if let Some((pc, pr)) = previous {
                ensure(pc >= expected.0 && pr >= expected.1, format!("case {case}: not monotone in threshold"))?;
            }
            previous = Some(expected);
        }
    }
    let mut fixture_rng = StdRng::seed_from_u64(1370);
    let high = clustered(&mut fixture_rng, &[250; 4], 370, 64, 0.005);
    let low = clustered(&mut fixture_rng, &[2; 5], 6, 64, 0.005);
    let (hr, lr) = (repetition_rate(&high, 0.95).unwrap(), repetition_rate(&low, 0.95).unwrap());
    ensure(
        (hr.token_count, hr.repeated_token_count, lr.token_count, lr.repeated_token_count) == (1370, 1000, 16, 10),
        format!("fixture counts {}/{} and {}/{}", hr.repeated_token_count, hr.token_count, lr.repeated_token_count, lr.token_count),
    )?;
    ensure(compare_reports(&hr, &lr).redundancy_reduced, "redundancy_reduced is false")?;
    Ok(format!("{N} random matrices x {} thresholds match the naive reference; 1000/1370 vs 10/16 -> reduced", thresholds.len()))
}

fn scoring_arithmetic() -> Check {
    let cases = [(55, 56, "98.21"), (3, 56, "5.36"), (5, 56, "8.93"), (1, 56, "1.79"), (0, 56, "0.00"), (56, 56, "100.00")];
    for (num, den, want) in cases {
        let got = format_hundredths(percent_hundredths(num, den) as i64);
        ensure(got == want, format!("{num}/{den} -> {got}, expected {want}"))?;
    }
    let delta = 10000 - percent_hundredths(5, 56) as i64;
    ensure(format_hundredths(delta) == "91.07", format!("delta {}", format_hundredths(delta)))?;
    Ok("55/56 -> 98.21, 3/56 -> 5.36, 5/56 -> 8.93, 100 - 8.93 -> +91.07".into())
}

fn random_tensor_file(rng: &mut StdRng) -> TensorFile {
    let mut file = TensorFile::default();
    for _ in 0..rng.random_range(0..5) {
        let name: String = (0..rng.random_range(1..10)).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        let shape: Vec<usize> = (0..rng.random_range(0..4)).map(|_| rng.random_range(0..5)).collect();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| f32::from_bits(rng.random())).collect();
        file.tensors.insert(name, Tensor::new(shape, data).unwrap());
    }
    if rng.random_bool(0.5) {
        file.metadata.insert("grid".into(), format!("{}x{}", rng.random_range(1..40), rng.random_range(1..40)));
    }
    file
}

fn tensor_container() -> Check {
    const N: usize = 500;
    let mut rng = StdRng::seed_from_u64(0x5e7);
    let mut mutations = 0usize;
    for case in 0..N {
        let file = random_tensor_file(&mut rng);
        let bytes = encode(&file).map_err(|e| e.to_string())?;
        let back = decode(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back.bit_eq(&file), format!("case {case}: round trip changed values"))?;
        ensure(encode(&back).unwrap() == bytes, format!("case {case}: re-encoding changed bytes"))?;
        let rebuilt = TensorFile {
            tensors: file.tensors.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect(),
            metadata: file.metadata.clone(),
        };
        ensure(encode(&rebuilt).unwrap() == bytes, format!("case {case}: equal maps encode differently"))?;
        if case % 10 == 0 {
            let header_end = 12 + u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
            let mut buf = bytes.clone();
            for pos in 0..header_end {
                let original = buf[pos];
                for v in (0..=255u8).filter(|&v| v != original) {
                    buf[pos] = v;
                    mutations += 1;
                    if decode(&buf).is_ok() {
                        return Err(format!("case {case}: header byte {pos} set to {v:#04x} still decodes"));
                    }
                }
                buf[pos] = original;
            }
        }
    }
    Ok(format!("{N} random maps round-trip bit-exact with canonical bytes; {mutations} single-byte header mutations all rejected"))
}

fn prompt_templates() -> Check {
    let item = |kind| BenchmarkItem {
        id: "x".into(),
        kind,
        script: if kind == ItemKind::HiddenText { Script::Latin } else { Script::NotApplicable },
        rarity: Rarity::Normal,
        image_path: "x.png".into(),
        ground_truth: "cat".into(),
        synonyms: vec![],
        hint_phrase: "a cat".into(),
    };
    let (text, object) = (item(ItemKind::HiddenText), item(ItemKind::HiddenObject));
    let expected = [
        (render_prompt(&Stage::Direct, &text), "What is within this image? Is there any text hidden within this image?"),
        (render_prompt(&Stage::Direct, &object), "What is within this image? Is there any other content hidden within this image?"),
        (render_prompt(&Stage::Hinted, &object), "Whether there is a cat within this image?"),
        (
            render_prompt(&Stage::PromptEngineered, &text),
            "What is within this image? Is there any text hidden within this image?\nAdjust contrast or brightness to examine the image macroscopically.\nZoom in or out to identify layered details.",
        ),
        (render_prompt(&Stage::FewShot { shots: 2 }, &object), "What is within this image? Is there any other content hidden within this image?"),
    ];
    for (got, want) in &expected {
        ensure(got == want, format!("prompt mismatch:\n  got  {got:?}\n  want {want:?}"))?;
    }
    Ok(format!("{} templates byte-exact", expected.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("mock-oracle end-to-end evaluation", mock_end_to_end),
        ("resolution sweep rows", resolution_sweep),
        ("squint grid rows", squint_grid),
        ("image-op properties", image_properties),
        ("redundancy oracle equivalence", redundancy_oracle),
        ("scoring arithmetic", scoring_arithmetic),
        ("tensor container", tensor_container),
        ("prompt templates", prompt_templates),
    ];
    let mut failed = 0;
    println!("\nacceptance criteria");
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.2}s]");
            }
        }
    }
    println!("{} of {} criteria passed\n", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
