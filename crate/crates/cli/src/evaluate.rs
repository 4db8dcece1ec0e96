use std::path::Path;

use zoomeval::protocol::{run_items, write_transcripts, StagePlan, StageVerdict};
use zoomeval::reporting::{render_report, Format, RunReport};
use zoomeval::scoring::{aggregate, apply_overrides, load_overrides};

use crate::common::{build_client, default_run_id, resolve, CliError, RunDir};
use crate::EvaluateArgs;

const OUTPUTS: [&str; 4] = ["transcripts.jsonl", "report.txt", "report.md", "report.json"];

pub fn load_plan(text: &str) -> Result<StagePlan, CliError> {
    let path = Path::new(text);
    if path.extension().is_some_and(|e| e == "json") {
        let bytes = std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read plan {}: {e}", path.display())))?;
        let plan: StagePlan =
            serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("invalid plan {}: {e}", path.display())))?;
        plan.validate().map_err(CliError::usage)?;
        return Ok(plan);
    }
    StagePlan::parse(text).map_err(CliError::usage)
}

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.run)?;
    let plan = load_plan(args.plan.as_deref().or(resolved.config.plan.as_deref()).unwrap_or("full"))?;
    let overrides = match args.overrides.as_ref().or(resolved.config.overrides.as_ref()) {
        Some(path) => load_overrides(path).map_err(CliError::usage)?,
        None => Vec::new(),
    };
    let manifest_hash = resolved.manifest.content_hash();
    let plan_json = serde_json::to_string(&plan).expect("plan serializes");
    let endpoints_json = serde_json::to_string(&resolved.endpoints).expect("endpoints serialize");
    let item_ids: Vec<&str> = resolved.items.iter().map(|i| i.id.as_str()).collect();
    let run_id = args
        .run
        .run_id
        .clone()
        .unwrap_or_else(|| default_run_id("eval", &[&manifest_hash, &plan_json, &endpoints_json, &item_ids.join(",")]));
    let dir = RunDir::create(&resolved.out_dir, &run_id, args.run.force, &OUTPUTS)?;

    let mut transcripts = Vec::new();
    for endpoint in &resolved.endpoints {
        let client = build_client(&resolved, endpoint)?;
        transcripts.extend(run_items(&plan, &resolved.manifest, &resolved.items, &client));
    }
    write_transcripts(dir.path.join("transcripts.jsonl"), &transcripts).map_err(CliError::runtime)?;

    let judged = apply_overrides(&transcripts, &overrides).map_err(CliError::usage)?;
    let table = aggregate(&judged).map_err(CliError::runtime)?;
    let mut report = RunReport::new(&run_id, table);
    report.manifest_hash = Some(manifest_hash);
    report.endpoints = resolved.endpoints.clone();
    dir.write("report.txt", &render_report(&report, Format::Text))?;
    dir.write("report.md", &render_report(&report, Format::Markdown))?;
    dir.write("report.json", &render_report(&report, Format::Json))?;

    let records: Vec<_> = transcripts.iter().flat_map(|t| &t.records).collect();
    let errors = records.iter().filter(|r| r.verdict == StageVerdict::Error).count();
    print!("{}", render_report(&report, Format::Text));
    println!(
        "\n{} items x {} model(s), {} requests, {} stage errors; results in {}",
        resolved.items.len(),
        resolved.endpoints.len(),
        records.len(),
        errors,
        dir.path.display()
    );
    if !records.is_empty() && errors == records.len() {
        let first = records.iter().find_map(|r| r.error.as_deref()).unwrap_or("unknown error");
        return Err(CliError::runtime(format!("every request failed; first error: {first}")));
    }
    Ok(())
}
