use zoomeval::reporting::{render_report, render_sweep_matrix, Format, RunReport};
use zoomeval::scoring::AccuracyTable;
use zoomeval::sweep::{run_resolution_sweep, run_squint_grid, SweepPlan};

use crate::common::{build_client, default_run_id, resolve, CliError, RunDir};
use crate::SweepArgs;

const OUTPUTS: [&str; 5] = ["sweeps.json", "report.txt", "report.md", "report.json", "transcripts.jsonl"];

fn parse_buckets(list: &[String]) -> Result<Vec<(u32, u32)>, CliError> {
    list.iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let bad = || CliError::usage(format!("bucket '{s}' is not LO-HI"));
            let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
            Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn run(args: SweepArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.run)?;
    let mut plan: SweepPlan = resolved.config.sweep.clone().unwrap_or_default();
    if let Some(list) = &args.buckets {
        plan.resolution_buckets = parse_buckets(list)?;
    }
    if let Some(n) = args.samples {
        plan.samples_per_bucket = n;
    }
    let (do_res, do_squint) = match (args.resolutions, args.squint) {
        (false, false) => (true, true),
        flags => flags,
    };
    if do_res {
        plan.validate_resolutions().map_err(CliError::usage)?;
    }
    if do_squint {
        plan.validate_squint().map_err(CliError::usage)?;
    }

    let manifest_hash = resolved.manifest.content_hash();
    let plan_json = serde_json::to_string(&plan).expect("plan serializes");
    let endpoints_json = serde_json::to_string(&resolved.endpoints).expect("endpoints serialize");
    let item_ids: Vec<&str> = resolved.items.iter().map(|i| i.id.as_str()).collect();
    let modes = format!("{do_res}{do_squint}");
    let run_id = args.run.run_id.clone().unwrap_or_else(|| {
        default_run_id("sweep", &[&manifest_hash, &plan_json, &endpoints_json, &item_ids.join(","), &modes])
    });
    let dir = RunDir::create(&resolved.out_dir, &run_id, args.run.force, &OUTPUTS)?;

    let mut sweeps = Vec::new();
    for endpoint in &resolved.endpoints {
        let client = build_client(&resolved, endpoint)?;
        if do_res {
            sweeps.push(run_resolution_sweep(&plan, &resolved.manifest, &resolved.items, &client).map_err(CliError::usage)?);
        }
        if do_squint {
            sweeps.push(run_squint_grid(&plan, &resolved.manifest, &resolved.items, &client).map_err(CliError::usage)?);
        }
    }
    dir.write("sweeps.json", &(serde_json::to_string_pretty(&sweeps).expect("sweeps serialize") + "\n"))?;

    let mut report = RunReport::new(&run_id, AccuracyTable::default());
    report.manifest_hash = Some(manifest_hash);
    report.endpoints = resolved.endpoints.clone();
    report.sweeps = sweeps;
    dir.write("report.txt", &render_report(&report, Format::Text))?;
    dir.write("report.md", &render_report(&report, Format::Markdown))?;
    dir.write("report.json", &render_report(&report, Format::Json))?;

    for sweep in &report.sweeps {
        println!("{}", render_sweep_matrix(sweep, Format::Text));
    }
    println!("results in {}", dir.path.display());
    Ok(())
}
