//! Staged evaluation of one item against one model.
//!
//! Stages run in plan order. The hinted stage continues the direct-stage
//! conversation and is only sent when the direct answer missed; otherwise its
//! verdict is inherited. Failures are recorded per stage and never abort the
//! remaining stages.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ChatTurn, RequestContext, Role, VlmClient};
use crate::image_ops::{PreprocessSpec, RasterImage};
use crate::manifest::{BenchmarkItem, ItemKind, Manifest};
use crate::scoring::{judge, Verdict};

pub const DIRECT_TEXT_PROMPT: &str = "What is within this image? Is there any text hidden within this image?";
pub const DIRECT_OBJECT_PROMPT: &str = "What is within this image? Is there any other content hidden within this image?";
pub const PROMPT_ENGINEERING_SUFFIX: &str =
    "Adjust contrast or brightness to examine the image macroscopically.\nZoom in or out to identify layered details.";
/// Long side of the zoomed copy attached to few-shot exemplars.
pub const EXEMPLAR_ZOOM: u32 = 64;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid stage plan: {0}")]
    InvalidPlan(String),
    #[error("transcript I/O on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Direct,
    Hinted,
    PromptEngineered,
    FewShot { shots: usize },
    #[serde(rename = "semvink")]
    SemVink { spec: PreprocessSpec },
}

impl Stage {
    /// Stable key used in verdict maps, tables and overrides.
    pub fn label(&self) -> String {
        match self {
            Stage::Direct => "direct".into(),
            Stage::Hinted => "hinted".into(),
            Stage::PromptEngineered => "prompt".into(),
            Stage::FewShot { .. } => "few-shot".into(),
            Stage::SemVink { spec } => spec.label(),
        }
    }

    /// Column heading for reports.
    pub fn header(&self) -> String {
        match self {
            Stage::Direct => "Zero-Shot Direct".into(),
            Stage::Hinted => "Zero-Shot Hinted".into(),
            Stage::PromptEngineered => "Zero-Shot Prompt".into(),
            Stage::FewShot { .. } => "Few-Shot".into(),
            Stage::SemVink { spec } => format!("w/ {}", spec.label()),
        }
    }

    pub fn is_baseline(&self) -> bool {
        !matches!(self, Stage::SemVink { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
    /// Skip the hinted request when the direct answer was already correct.
    #[serde(default = "default_true")]
    pub stop_on_success: bool,
}

fn default_true() -> bool {
    true
}

impl StagePlan {
    pub fn new(stages: Vec<Stage>) -> Result<Self, ProtocolError> {
        let plan = Self { stages, stop_on_success: true };
        plan.validate()?;
        Ok(plan)
    }

    /// The four baselines followed by zoom-out to 64 px.
    pub fn full() -> Self {
        let mut stages = Self::baselines().stages;
        stages.push(Stage::SemVink { spec: PreprocessSpec::zoom_out(64) });
        Self { stages, stop_on_success: true }
    }

    pub fn baselines() -> Self {
        Self {
            stages: vec![Stage::Direct, Stage::Hinted, Stage::PromptEngineered, Stage::FewShot { shots: 2 }],
            stop_on_success: true,
        }
    }

    /// `full`, `baselines`, or a comma list of `direct`, `hinted`, `prompt`,
    /// `few-shot[:K]`, `zoom-out:N` and `enhance`.
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        match text.trim() {
            "full" => return Ok(Self::full()),
            "baselines" => return Ok(Self::baselines()),
            _ => {}
        }
        let mut stages = Vec::new();
        for part in text.split(',').map(str::trim) {
            let (head, arg) = part.split_once(':').map_or((part, None), |(h, a)| (h, Some(a)));
            let number = |what: &str| -> Result<u32, ProtocolError> {
                arg.ok_or_else(|| ProtocolError::InvalidPlan(format!("{what} needs a value")))?
                    .parse()
                    .map_err(|_| ProtocolError::InvalidPlan(format!("bad value in '{part}'")))
            };
            let stage = match head {
                "direct" => Stage::Direct,
                "hinted" => Stage::Hinted,
                "prompt" => Stage::PromptEngineered,
                "few-shot" => Stage::FewShot { shots: if arg.is_some() { number("few-shot")? as usize } else { 2 } },
                "zoom-out" => Stage::SemVink { spec: PreprocessSpec::zoom_out(number("zoom-out")?) },
                "enhance" => Stage::SemVink { spec: PreprocessSpec::enhance(Default::default()) },
                other => return Err(ProtocolError::InvalidPlan(format!("unknown stage '{other}'"))),
            };
            stages.push(stage);
        }
        Self::new(stages)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.stages.is_empty() {
            return Err(ProtocolError::InvalidPlan("no stages".into()));
        }
        let mut labels = std::collections::HashSet::new();
        let mut direct_seen = false;
        for stage in &self.stages {
            if !labels.insert(stage.label()) {
                return Err(ProtocolError::InvalidPlan(format!("stage '{}' listed twice", stage.label())));
            }
            match stage {
                Stage::Direct => direct_seen = true,
                Stage::Hinted if !direct_seen => {
                    return Err(ProtocolError::InvalidPlan("hinted stage must come after direct".into()))
                }
                Stage::FewShot { shots: 0 } => return Err(ProtocolError::InvalidPlan("few-shot needs at least one shot".into())),
                Stage::SemVink { spec } => spec.validate().map_err(|e| ProtocolError::InvalidPlan(e.to_string()))?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Byte-exact user prompt for a stage. Few-shot and zoom-out stages reuse the
/// direct question.
pub fn render_prompt(stage: &Stage, item: &BenchmarkItem) -> String {
    let direct = match item.kind {
        ItemKind::HiddenText => DIRECT_TEXT_PROMPT,
        ItemKind::HiddenObject => DIRECT_OBJECT_PROMPT,
    };
    match stage {
        Stage::Hinted => format!("Whether there is {} within this image?", item.hint_phrase),
        Stage::PromptEngineered => format!("{direct}\n{PROMPT_ENGINEERING_SUFFIX}"),
        _ => direct.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageVerdict {
    Correct,
    Incorrect,
    Error,
}

impl fmt::Display for StageVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageVerdict::Correct => "correct",
            StageVerdict::Incorrect => "incorrect",
            StageVerdict::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub width: u32,
    pub height: u32,
    pub sha256: String,
}

impl From<&RasterImage> for ImageRef {
    fn from(img: &RasterImage) -> Self {
        Self { width: img.width(), height: img.height(), sha256: img.content_hash() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedTurn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageRef>,
}

/// One request actually sent for a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub label: String,
    pub stage: Stage,
    pub turns: Vec<RecordedTurn>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    pub verdict: StageVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judgement: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
    pub from_cache: bool,
    pub attempts: u32,
}

/// Final verdict of a stage, whether it was sent or inherited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    pub header: String,
    pub baseline: bool,
    pub verdict: StageVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judgement: Option<Verdict>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inherited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTranscript {
    pub item_id: String,
    pub model_name: String,
    pub manifest_hash: String,
    pub kind: ItemKind,
    pub records: Vec<StageRecord>,
    pub outcomes: Vec<StageOutcome>,
}

impl EvalTranscript {
    pub fn verdict(&self, stage_label: &str) -> Option<StageVerdict> {
        self.outcomes.iter().find(|o| o.stage == stage_label).map(|o| o.verdict)
    }
}

fn record_turns(turns: &[ChatTurn]) -> Vec<RecordedTurn> {
    turns
        .iter()
        .map(|t| RecordedTurn { role: t.role, text: t.text.clone(), images: t.images.iter().map(ImageRef::from).collect() })
        .collect()
}

/// Exemplars for few-shot prompting: the manifest's dedicated exemplars, or
/// other benchmark items (same kind first) when none are listed.
fn pick_exemplars<'a>(manifest: &'a Manifest, item: &BenchmarkItem, k: usize) -> Vec<&'a BenchmarkItem> {
    if !manifest.exemplars.is_empty() {
        let mut pool: Vec<&BenchmarkItem> = manifest.exemplars.iter().filter(|e| e.id != item.id).collect();
        pool.sort_by_key(|e| e.kind != item.kind);
        pool.truncate(k);
        return pool;
    }
    let mut pool: Vec<&BenchmarkItem> = manifest.items.iter().filter(|e| e.id != item.id).collect();
    pool.sort_by_key(|e| e.kind != item.kind);
    pool.truncate(k);
    pool
}

fn few_shot_turns(manifest: &Manifest, item: &BenchmarkItem, shots: usize) -> Result<Vec<ChatTurn>, String> {
    let mut turns = Vec::new();
    let zoom = PreprocessSpec::zoom_out(EXEMPLAR_ZOOM);
    for (n, ex) in pick_exemplars(manifest, item, shots).into_iter().enumerate() {
        let original = RasterImage::open(manifest.image_path(ex)).map_err(|e| format!("exemplar {}: {e}", ex.id))?;
        let zoomed = zoom.apply(&original).map_err(|e| format!("exemplar {}: {e}", ex.id))?;
        let question = match ex.kind {
            ItemKind::HiddenText => DIRECT_TEXT_PROMPT,
            ItemKind::HiddenObject => DIRECT_OBJECT_PROMPT,
        };
        turns.push(ChatTurn::user(
            format!("Example {}: the second image is a zoomed-out copy of the first. {question}", n + 1),
            vec![original, zoomed],
        ));
        turns.push(ChatTurn::assistant(format!("Hidden within this image is {}.", ex.ground_truth)));
    }
    Ok(turns)
}

pub(crate) fn send(
    client: &VlmClient,
    stage: &Stage,
    item: &BenchmarkItem,
    turns: Vec<ChatTurn>,
    preprocess: Option<PreprocessSpec>,
) -> StageRecord {
    let context = RequestContext { item_id: Some(item.id.clone()), preprocess };
    let mut record = StageRecord {
        label: stage.label(),
        stage: stage.clone(),
        turns: record_turns(&turns),
        response: None,
        verdict: StageVerdict::Error,
        judgement: None,
        error: None,
        latency_ms: 0,
        from_cache: false,
        attempts: 0,
    };
    match client.send_chat(&turns, &context) {
        Ok(resp) => {
            let verdict = judge(item, &resp.text);
            record.verdict = if verdict.correct { StageVerdict::Correct } else { StageVerdict::Incorrect };
            record.judgement = Some(verdict);
            record.response = Some(resp.text);
            record.latency_ms = resp.latency_ms;
            record.from_cache = resp.from_cache;
            record.attempts = resp.attempts;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn failed(stage: &Stage, error: String) -> StageRecord {
    StageRecord {
        label: stage.label(),
        stage: stage.clone(),
        turns: Vec::new(),
        response: None,
        verdict: StageVerdict::Error,
        judgement: None,
        error: Some(error),
        latency_ms: 0,
        from_cache: false,
        attempts: 0,
    }
}

/// Runs every stage of `plan` for one item.
pub fn run_item(plan: &StagePlan, manifest: &Manifest, manifest_hash: &str, item: &BenchmarkItem, client: &VlmClient) -> EvalTranscript {
    let mut records = Vec::new();
    let mut outcomes = Vec::new();
    let image = RasterImage::open(manifest.image_path(item)).map_err(|e| format!("cannot load image for {}: {e}", item.id));
    // direct turns and reply, kept for the hinted follow-up
    let mut direct: Option<(Vec<ChatTurn>, StageRecord)> = None;

    for stage in &plan.stages {
        let outcome = |verdict, judgement, inherited| StageOutcome {
            stage: stage.label(),
            header: stage.header(),
            baseline: stage.is_baseline(),
            verdict,
            judgement,
            inherited,
        };
        let image = match &image {
            Ok(img) => img,
            Err(e) => {
                records.push(failed(stage, e.clone()));
                outcomes.push(outcome(StageVerdict::Error, None, false));
                continue;
            }
        };
        let prompt = render_prompt(stage, item);
        let record = match stage {
            Stage::Direct => {
                let turns = vec![ChatTurn::user(prompt, vec![image.clone()])];
                let run = send(client, stage, item, turns.clone(), None);
                direct = Some((turns, run.clone()));
                run
            }
            Stage::Hinted => match &direct {
                Some((_, d)) if d.verdict == StageVerdict::Correct && plan.stop_on_success => {
                    outcomes.push(outcome(StageVerdict::Correct, d.judgement.clone(), true));
                    continue;
                }
                Some((turns, d)) if d.verdict != StageVerdict::Error => {
                    let mut turns = turns.clone();
                    turns.push(ChatTurn::assistant(d.response.clone().unwrap_or_default()));
                    turns.push(ChatTurn::user(prompt, Vec::new()));
                    send(client, stage, item, turns, None)
                }
                _ => failed(stage, "direct stage failed; no conversation to continue".into()),
            },
            Stage::PromptEngineered => send(client, stage, item, vec![ChatTurn::user(prompt, vec![image.clone()])], None),
            Stage::FewShot { shots } => match few_shot_turns(manifest, item, *shots) {
                Ok(mut turns) => {
                    turns.push(ChatTurn::user(prompt, vec![image.clone()]));
                    send(client, stage, item, turns, None)
                }
                Err(e) => failed(stage, e),
            },
            Stage::SemVink { spec } => match spec.apply(image) {
                Ok(processed) => {
                    send(client, stage, item, vec![ChatTurn::user(prompt, vec![processed])], Some(spec.clone()))
                }
                Err(e) => failed(stage, format!("preprocessing failed: {e}")),
            },
        };
        outcomes.push(outcome(record.verdict, record.judgement.clone(), false));
        records.push(record);
    }

    EvalTranscript {
        item_id: item.id.clone(),
        model_name: client.model_name().to_string(),
        manifest_hash: manifest_hash.to_string(),
        kind: item.kind,
        records,
        outcomes,
    }
}

/// Runs all items with at most `parallelism` in flight; results keep item order.
pub fn run_items(plan: &StagePlan, manifest: &Manifest, items: &[BenchmarkItem], client: &VlmClient) -> Vec<EvalTranscript> {
    let manifest_hash = manifest.content_hash();
    parallel_map(items, client.config().parallelism, |item| run_item(plan, manifest, &manifest_hash, item, client))
}

/// Maps `f` over `inputs` on up to `workers` scoped threads, keeping order.
pub(crate) fn parallel_map<T: Sync, R: Send>(inputs: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, inputs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..inputs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(input) = inputs.get(i) else { break };
                let r = f(input);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("results lock").into_iter().map(|r| r.expect("every input mapped")).collect()
}

pub fn write_transcripts(path: impl AsRef<Path>, transcripts: &[EvalTranscript]) -> Result<(), ProtocolError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for t in transcripts {
        serde_json::to_writer(&mut buf, t).expect("transcript serializes");
        buf.write_all(b"\n").expect("write to vec");
    }
    crate::fsutil::write_atomic(path, &buf).map_err(|e| ProtocolError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<EvalTranscript>, ProtocolError> {
    let path = path.as_ref();
    let io = |message: String| ProtocolError::Io { path: path.display().to_string(), message };
    let file = std::fs::File::open(path).map_err(|e| io(e.to_string()))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}
