//! Resolution-bucket and squint-grid sweeps.
//!
//! Every cell is a single direct question about one item's image after one
//! preprocessing configuration. A resolution bucket passes when any of its
//! sampled targets is answered correctly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::VlmClient;
use crate::image_ops::{EnhanceParams, PreprocessSpec, RasterImage, MIN_ZOOM_TARGET};
use crate::manifest::{BenchmarkItem, Manifest};
use crate::protocol::{parallel_map, send, Stage, StageVerdict};

pub const DEFAULT_BUCKETS: [(u32, u32); 4] = [(8, 32), (32, 128), (128, 512), (512, 4096)];
/// Upper bound standing in for an open-ended top bucket.
pub const OPEN_BUCKET_CAP: u32 = 4096;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub resolution_buckets: Vec<(u32, u32)>,
    pub samples_per_bucket: usize,
    pub squint_grid: Vec<PreprocessSpec>,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            resolution_buckets: DEFAULT_BUCKETS.to_vec(),
            samples_per_bucket: 3,
            squint_grid: vec![
                PreprocessSpec::squint(-32, 32),
                PreprocessSpec::squint(-64, 64),
                PreprocessSpec::squint(-128, 64),
                PreprocessSpec::enhance(EnhanceParams::default()),
            ],
        }
    }
}

impl SweepPlan {
    pub fn validate_resolutions(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidPlan(m));
        if self.resolution_buckets.is_empty() {
            return bad("no resolution buckets".into());
        }
        if self.samples_per_bucket == 0 {
            return bad("samples_per_bucket must be at least 1".into());
        }
        let mut prev_hi = 0;
        for &(lo, hi) in &self.resolution_buckets {
            if lo >= hi {
                return bad(format!("bucket ({lo}, {hi}) is empty"));
            }
            if lo < MIN_ZOOM_TARGET {
                return bad(format!("bucket ({lo}, {hi}) starts below {MIN_ZOOM_TARGET} px"));
            }
            if lo < prev_hi {
                return bad(format!("bucket ({lo}, {hi}) overlaps or is out of order"));
            }
            prev_hi = hi;
        }
        Ok(())
    }

    pub fn validate_squint(&self) -> Result<(), SweepError> {
        if self.squint_grid.is_empty() {
            return Err(SweepError::InvalidPlan("empty squint grid".into()));
        }
        for spec in &self.squint_grid {
            spec.validate().map_err(|e| SweepError::InvalidPlan(e.to_string()))?;
        }
        Ok(())
    }
}

/// Sample targets for `[lo, hi)`: geometric spacing from `lo` to `hi - 1`,
/// so three samples give `lo`, `round(sqrt(lo * hi))` and `hi - 1`.
pub fn bucket_samples(lo: u32, hi: u32, n: usize) -> Vec<u32> {
    let (lo_f, hi_f) = (lo as f64, hi as f64);
    match n {
        0 => Vec::new(),
        1 => vec![(lo_f * hi_f).sqrt().round() as u32],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == n - 1 {
                    hi - 1
                } else {
                    let v = (lo_f * (hi_f / lo_f).powf(i as f64 / (n - 1) as f64)).round() as u32;
                    v.clamp(lo, hi - 1)
                }
            })
            .collect(),
    }
}

pub fn bucket_label(lo: u32, hi: u32) -> String {
    if hi >= OPEN_BUCKET_CAP {
        format!("{lo}+")
    } else {
        format!("{lo}-{hi}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Resolution,
    Squint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pass,
    Fail,
    Error,
}

impl CellStatus {
    pub fn symbol(self) -> &'static str {
        match self {
            CellStatus::Pass => "✓",
            CellStatus::Fail => "✗",
            CellStatus::Error => "E",
        }
    }

    fn from_verdicts(verdicts: impl IntoIterator<Item = StageVerdict>) -> Self {
        let mut status = CellStatus::Fail;
        for v in verdicts {
            match v {
                StageVerdict::Correct => return CellStatus::Pass,
                StageVerdict::Error => status = CellStatus::Error,
                StageVerdict::Incorrect => {}
            }
        }
        status
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepColumn {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bucket: Option<(u32, u32)>,
    pub configs: Vec<PreprocessSpec>,
}

/// One evaluated request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub item_id: String,
    pub column: String,
    pub config: String,
    pub verdict: StageVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepFlag {
    pub item_id: String,
    pub column: String,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub model: String,
    pub columns: Vec<SweepColumn>,
    pub item_ids: Vec<String>,
    pub cells: Vec<SweepCell>,
    pub flags: Vec<SweepFlag>,
}

impl SweepResult {
    pub fn flag(&self, item_id: &str, column: &str) -> Option<CellStatus> {
        self.flags.iter().find(|f| f.item_id == item_id && f.column == column).map(|f| f.status)
    }

    /// Column-wise flags for one item, in column order.
    pub fn row(&self, item_id: &str) -> Vec<CellStatus> {
        self.columns.iter().filter_map(|c| self.flag(item_id, &c.label)).collect()
    }
}

fn run_sweep(
    kind: SweepKind,
    columns: Vec<SweepColumn>,
    manifest: &Manifest,
    items: &[BenchmarkItem],
    client: &VlmClient,
) -> SweepResult {
    let images: Vec<Result<RasterImage, String>> = items
        .iter()
        .map(|item| RasterImage::open(manifest.image_path(item)).map_err(|e| format!("cannot load image for {}: {e}", item.id)))
        .collect();
    let mut jobs = Vec::new();
    for (i, _) in items.iter().enumerate() {
        for column in &columns {
            for spec in &column.configs {
                jobs.push((i, column.label.clone(), spec.clone()));
            }
        }
    }
    let cells = parallel_map(&jobs, client.config().parallelism, |(i, column, spec)| {
        let item = &items[*i];
        let stage = Stage::SemVink { spec: spec.clone() };
        let mut cell = SweepCell {
            item_id: item.id.clone(),
            column: column.clone(),
            config: spec.label(),
            verdict: StageVerdict::Error,
            response: None,
            error: None,
        };
        let processed = images[*i].as_ref().map_err(Clone::clone).and_then(|img| spec.apply(img).map_err(|e| e.to_string()));
        match processed {
            Ok(img) => {
                let prompt = crate::protocol::render_prompt(&Stage::Direct, item);
                let record = send(client, &stage, item, vec![crate::client::ChatTurn::user(prompt, vec![img])], Some(spec.clone()));
                cell.verdict = record.verdict;
                cell.response = record.response;
                cell.error = record.error;
            }
            Err(e) => cell.error = Some(e),
        }
        cell
    });
    let mut flags = Vec::new();
    for item in items {
        for column in &columns {
            let verdicts = cells.iter().filter(|c| c.item_id == item.id && c.column == column.label).map(|c| c.verdict);
            flags.push(SweepFlag { item_id: item.id.clone(), column: column.label.clone(), status: CellStatus::from_verdicts(verdicts) });
        }
    }
    SweepResult {
        kind,
        model: client.model_name().to_string(),
        columns,
        item_ids: items.iter().map(|i| i.id.clone()).collect(),
        cells,
        flags,
    }
}

/// Zoom-out sweep over the plan's buckets with the direct prompt.
pub fn run_resolution_sweep(
    plan: &SweepPlan,
    manifest: &Manifest,
    items: &[BenchmarkItem],
    client: &VlmClient,
) -> Result<SweepResult, SweepError> {
    plan.validate_resolutions()?;
    let columns = plan
        .resolution_buckets
        .iter()
        .map(|&(lo, hi)| SweepColumn {
            label: bucket_label(lo, hi),
            bucket: Some((lo, hi)),
            configs: bucket_samples(lo, hi, plan.samples_per_bucket).into_iter().map(PreprocessSpec::zoom_out).collect(),
        })
        .collect();
    Ok(run_sweep(SweepKind::Resolution, columns, manifest, items, client))
}

/// Squint and enhancement configurations applied at the original resolution.
pub fn run_squint_grid(
    plan: &SweepPlan,
    manifest: &Manifest,
    items: &[BenchmarkItem],
    client: &VlmClient,
) -> Result<SweepResult, SweepError> {
    plan.validate_squint()?;
    let columns = plan
        .squint_grid
        .iter()
        .map(|spec| SweepColumn { label: spec.label(), bucket: None, configs: vec![spec.clone()] })
        .collect();
    Ok(run_sweep(SweepKind::Squint, columns, manifest, items, client))
}
