use std::path::Path;

use zoomeval::redundancy::{analyze, compare_reports, RedundancyReport};
use zoomeval::reporting::{render_redundancy, Format, NamedRedundancy};
use zoomeval::tensor_io::TokenEmbeddingSet;

use crate::common::CliError;
use crate::RedundancyArgs;

fn report_for(path: &Path, threshold: f32) -> Result<RedundancyReport, CliError> {
    let set = TokenEmbeddingSet::load(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    analyze(&set, threshold).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn run(args: RedundancyArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::usage(format!("threshold must lie in [0, 1], got {}", args.threshold)));
    }
    let high = report_for(&args.high, args.threshold)?;
    let low = report_for(&args.low, args.threshold)?;
    let comparison = compare_reports(&high, &low);
    let entries = vec![
        NamedRedundancy { label: format!("high: {}", args.high.display()), report: high },
        NamedRedundancy { label: format!("low: {}", args.low.display()), report: low },
    ];
    print!("{}", render_redundancy(&entries, Some(&comparison), args.format.into()));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("redundancy.json");
        std::fs::write(&path, render_redundancy(&entries, Some(&comparison), Format::Json))
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
