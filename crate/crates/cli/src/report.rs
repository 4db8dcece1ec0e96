use zoomeval::protocol::read_transcripts;
use zoomeval::reporting::{render_report, RunReport};
use zoomeval::scoring::{aggregate, apply_overrides, load_overrides};

use crate::common::CliError;
use crate::ReportArgs;

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    let report_path = args.run_dir.join("report.json");
    let bytes = std::fs::read(&report_path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", report_path.display())))?;
    let mut report: RunReport =
        serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("invalid {}: {e}", report_path.display())))?;
    let transcripts_path = args.run_dir.join("transcripts.jsonl");
    if transcripts_path.exists() {
        let transcripts = read_transcripts(&transcripts_path).map_err(CliError::usage)?;
        let overrides = match &args.overrides {
            Some(path) => load_overrides(path).map_err(CliError::usage)?,
            None => Vec::new(),
        };
        let judged = apply_overrides(&transcripts, &overrides).map_err(CliError::usage)?;
        let table = aggregate(&judged).map_err(CliError::usage)?;
        if let (Some(a), Some(b)) = (&table.manifest_hash, &report.manifest_hash) {
            if a != b {
                return Err(CliError::usage(format!("transcripts belong to manifest {a}, report to {b}")));
            }
        }
        report.accuracy = table;
    } else if args.overrides.is_some() {
        return Err(CliError::usage(format!("{} has no transcripts to override", args.run_dir.display())));
    }
    print!("{}", render_report(&report, args.format.into()));
    Ok(())
}
