//! Protocol, scoring, sweeps and reporting over the shipped sample manifest.

use std::path::PathBuf;
use std::sync::Arc;

use zoomeval::client::{EndpointConfig, MockBackend, VlmClient};
use zoomeval::manifest::{load_manifest, ItemKind, Manifest};
use zoomeval::protocol::{read_transcripts, run_items, write_transcripts, Stage, StagePlan, StageVerdict};
use zoomeval::reporting::{render_report, sweep_row, Format, RunReport};
use zoomeval::scoring::{aggregate, apply_overrides, Override, RuleFired, ScoringError};
use zoomeval::sweep::{run_resolution_sweep, run_squint_grid, CellStatus, SweepPlan};

fn sample() -> Manifest {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sample/manifest.json");
    load_manifest(path).unwrap()
}

fn client(manifest: &Manifest, mock: &str, parallelism: usize) -> (VlmClient, Arc<MockBackend>) {
    let backend = Arc::new(MockBackend::from_name(mock).unwrap().with_manifest(manifest));
    let mut config = EndpointConfig::mock(mock);
    config.parallelism = parallelism;
    (VlmClient::new(config, backend.clone()).unwrap(), backend)
}

#[test]
fn oracle_fails_baselines_and_passes_zoom_out() {
    let manifest = sample();
    let (client, backend) = client(&manifest, "semvink-oracle", 4);
    let transcripts = run_items(&StagePlan::full(), &manifest, &manifest.items, &client);
    assert_eq!(backend.call_count(), 5 * manifest.items.len());
    for t in &transcripts {
        let verdicts: Vec<StageVerdict> = t.outcomes.iter().map(|o| o.verdict).collect();
        use StageVerdict::*;
        assert_eq!(verdicts, [Incorrect, Incorrect, Incorrect, Incorrect, Correct], "{}", t.item_id);
        let hinted = &t.records[1];
        assert_eq!(hinted.turns.len(), 3);
        assert!(hinted.turns[2].text.starts_with("Whether there is "));
        let few = &t.records[3];
        assert_eq!(few.turns.len(), 5);
        assert_eq!(few.turns[0].images.len(), 2);
        assert_eq!(few.turns[0].images[1].width.max(few.turns[0].images[1].height), 64);
        let zoom = &t.records[4];
        assert_eq!(zoom.turns[0].images[0].width, 64);
        assert_eq!(zoom.judgement.as_ref().unwrap().rule_fired, match t.kind {
            ItemKind::HiddenText => RuleFired::ExactText,
            ItemKind::HiddenObject => RuleFired::CategoryTerm,
        });
    }
    let table = aggregate(&transcripts).unwrap();
    for kind in [ItemKind::HiddenText, ItemKind::HiddenObject] {
        for stage in ["direct", "hinted", "prompt", "few-shot"] {
            assert_eq!(table.cell("semvink-oracle", stage, kind).unwrap().percent, "0.00");
        }
        let zoom = table.cell("semvink-oracle", "zoom-out 64", kind).unwrap();
        assert_eq!((zoom.percent.as_str(), zoom.delta_vs_best_baseline.as_deref()), ("100.00", Some("+100.00")));
    }
}

#[test]
fn correct_direct_answer_skips_hint() {
    let manifest = sample();
    let (client, backend) = client(&manifest, "always-truth", 2);
    let transcripts = run_items(&StagePlan::full(), &manifest, &manifest.items, &client);
    assert_eq!(backend.call_count(), 4 * manifest.items.len());
    for t in &transcripts {
        assert!(t.records.iter().all(|r| !matches!(r.stage, Stage::Hinted)));
        let hinted = t.outcomes.iter().find(|o| o.stage == "hinted").unwrap();
        assert!(hinted.inherited && hinted.verdict == StageVerdict::Correct);
    }
    let table = aggregate(&transcripts).unwrap();
    let zoom = table.cell("always-truth", "zoom-out 64", ItemKind::HiddenText).unwrap();
    assert_eq!(zoom.delta_vs_best_baseline.as_deref(), Some("+0.00"));
}

#[test]
fn item_order_and_results_independent_of_parallelism() {
    let manifest = sample();
    let serial = run_items(&StagePlan::full(), &manifest, &manifest.items, &client(&manifest, "semvink-oracle", 1).0);
    let parallel = run_items(&StagePlan::full(), &manifest, &manifest.items, &client(&manifest, "semvink-oracle", 8).0);
    assert_eq!(serial, parallel);
}

#[test]
fn transcripts_round_trip_through_jsonl() {
    let manifest = sample();
    let transcripts = run_items(&StagePlan::full(), &manifest, &manifest.items[..3], &client(&manifest, "semvink-oracle", 2).0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcripts.jsonl");
    write_transcripts(&path, &transcripts).unwrap();
    assert_eq!(read_transcripts(&path).unwrap(), transcripts);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
}

#[test]
fn overrides_and_mixed_runs() {
    let manifest = sample();
    let mut transcripts = run_items(&StagePlan::full(), &manifest, &manifest.items[..2], &client(&manifest, "semvink-oracle", 2).0);
    let fix = Override {
        item_id: transcripts[0].item_id.clone(),
        model: "semvink-oracle".into(),
        stage: "direct".into(),
        correct: true,
        note: "reviewer accepted a paraphrase".into(),
    };
    let judged = apply_overrides(&transcripts, &[fix.clone()]).unwrap();
    assert_eq!(judged[0].verdict("direct"), Some(StageVerdict::Correct));
    assert_eq!(judged[0].records[0].judgement.as_ref().unwrap().rule_fired, RuleFired::ManualOverride);
    let unknown = Override { stage: "zoom-out 32".into(), ..fix };
    assert!(matches!(apply_overrides(&transcripts, &[unknown]), Err(ScoringError::UnknownKey { .. })));

    transcripts[1].manifest_hash = "other".into();
    assert!(matches!(aggregate(&transcripts), Err(ScoringError::MixedRun(..))));
}

#[test]
fn sweep_issues_exactly_k_m_n_requests() {
    let manifest = sample();
    for (buckets, samples, items) in [(vec![(8, 32)], 1, 1), (vec![(8, 32), (32, 128), (128, 512), (512, 4096)], 3, 2), (vec![(16, 64), (100, 900)], 4, 3)] {
        let (client, backend) = client(&manifest, "echo:nothing here", 3);
        let plan = SweepPlan { resolution_buckets: buckets.clone(), samples_per_bucket: samples, ..SweepPlan::default() };
        let result = run_resolution_sweep(&plan, &manifest, &manifest.items[..items], &client).unwrap();
        assert_eq!(backend.call_count(), buckets.len() * samples * items);
        assert_eq!(result.cells.len(), buckets.len() * samples * items);
        assert_eq!(result.flags.len(), buckets.len() * items);
    }
}

#[test]
fn bucket_flag_is_or_of_sample_verdicts() {
    let manifest = sample();
    let (client, _) = client(&manifest, "semvink-oracle:20-300", 4);
    let result = run_resolution_sweep(&SweepPlan::default(), &manifest, &manifest.items, &client).unwrap();
    for flag in &result.flags {
        let any = result
            .cells
            .iter()
            .filter(|c| c.item_id == flag.item_id && c.column == flag.column)
            .any(|c| c.verdict == StageVerdict::Correct);
        assert_eq!(flag.status == CellStatus::Pass, any);
    }
    // 8-32 passes via its 31 px sample, 128-512 via 128 and 256
    assert_eq!(sweep_row(&result, "t001"), "✓ ✓ ✓ ✗");
}

#[test]
fn sweep_rows_by_window() {
    let manifest = sample();
    let items = &manifest.items[..1];
    let row = |mock: &str| {
        let (client, _) = client(&manifest, mock, 4);
        sweep_row(&run_resolution_sweep(&SweepPlan::default(), &manifest, items, &client).unwrap(), &items[0].id)
    };
    assert_eq!(row("semvink-oracle"), "✗ ✓ ✗ ✗");
    assert_eq!(row("semvink-oracle:8-128"), "✓ ✓ ✗ ✗");

    let squint = |mock: &str| {
        let (client, _) = client(&manifest, mock, 4);
        sweep_row(&run_squint_grid(&SweepPlan::default(), &manifest, items, &client).unwrap(), &items[0].id)
    };
    assert_eq!(squint("semvink-oracle"), "✗ ✗ ✗ ✗");
    assert_eq!(squint("enhance-grant"), "✗ ✗ ✗ ✓");
}

#[test]
fn unreadable_image_marks_sweep_cells_as_errors() {
    let mut manifest = sample();
    manifest.items[0].image_path = "images/missing.png".into();
    let (client, backend) = client(&manifest, "semvink-oracle", 2);
    let result = run_resolution_sweep(&SweepPlan::default(), &manifest, &manifest.items[..1], &client).unwrap();
    assert_eq!(sweep_row(&result, &manifest.items[0].id), "E E E E");
    assert_eq!(backend.call_count(), 0);
    let empty = run_squint_grid(&SweepPlan::default(), &manifest, &[], &client).unwrap();
    assert!(empty.cells.is_empty() && empty.flags.is_empty());
}

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs from the golden copy");
}

#[test]
fn reports_match_golden_files() {
    let manifest = sample();
    let (client, _) = client(&manifest, "semvink-oracle", 4);
    let transcripts = run_items(&StagePlan::full(), &manifest, &manifest.items, &client);
    let mut report = RunReport::new("golden", aggregate(&transcripts).unwrap());
    report.tool_version = "0.0.0".into();
    report.sweeps.push(run_resolution_sweep(&SweepPlan::default(), &manifest, &manifest.items[..2], &client).unwrap());
    golden("mock_report.txt", &render_report(&report, Format::Text));
    golden("mock_report.md", &render_report(&report, Format::Markdown));
    let again = render_report(&report.clone(), Format::Json);
    assert_eq!(render_report(&report, Format::Json), again);
}
