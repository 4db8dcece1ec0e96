//! Deterministic in-process backend.
//!
//! The canonical `semvink-oracle` rule set answers with an item's ground
//! truth only when the attached image has been zoomed out into a
//! low-resolution window, mirroring how real models behave on hidden-content
//! images. Everything is a pure function of the request.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, Completion};
use crate::manifest::{BenchmarkItem, Manifest};

/// Prefix shared by both follow-up hint templates.
const HINT_PREFIX: &str = "Whether there is";

const GENERIC_DESCRIPTIONS: &[&str] = &[
    "The image shows a detailed scene with rich textures, soft lighting and natural colors. I do not see anything hidden in it.",
    "It looks like an ordinary photograph with a busy background. Nothing else stands out to me.",
    "A richly textured picture; I cannot identify any concealed element.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MockRule {
    /// Reply with fixed text to everything.
    Canned { text: String },
    /// Always reveal the ground truth.
    AlwaysTruth,
    /// Reveal the ground truth when the attached image's long side is in
    /// `[lo, hi)` and the prompt asks a question.
    ResolutionWindow { lo: u32, hi: u32 },
    /// Reveal the ground truth when the image went through the enhancement
    /// composite.
    GrantEnhance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockItem {
    pub ground_truth: String,
    pub synonyms: Vec<String>,
}

impl From<&BenchmarkItem> for MockItem {
    fn from(item: &BenchmarkItem) -> Self {
        Self { ground_truth: item.ground_truth.clone(), synonyms: item.synonyms.clone() }
    }
}

pub struct MockBackend {
    rules: Vec<MockRule>,
    items: HashMap<String, MockItem>,
    latency_ms: u64,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self { rules, items: HashMap::new(), latency_ms: 0, calls: AtomicUsize::new(0) }
    }

    pub fn echo(text: impl Into<String>) -> Self {
        Self::new(vec![MockRule::Canned { text: text.into() }])
    }

    /// Default window `[32, 128)`.
    pub fn semvink_oracle() -> Self {
        Self::semvink_oracle_window(32, 128)
    }

    pub fn semvink_oracle_window(lo: u32, hi: u32) -> Self {
        Self::new(vec![MockRule::ResolutionWindow { lo, hi }])
    }

    /// Parses `semvink-oracle`, `semvink-oracle:LO-HI`, `always-truth`,
    /// `enhance-grant` or `echo:TEXT`.
    pub fn from_name(name: &str) -> Option<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        match (head, arg) {
            ("semvink-oracle", None) => Some(Self::semvink_oracle()),
            ("semvink-oracle", Some(window)) => {
                let (lo, hi) = window.split_once('-')?;
                let (lo, hi) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
                (lo < hi).then(|| Self::semvink_oracle_window(lo, hi))
            }
            ("always-truth", None) => Some(Self::new(vec![MockRule::AlwaysTruth])),
            ("enhance-grant", None) => {
                Some(Self::new(vec![MockRule::GrantEnhance, MockRule::ResolutionWindow { lo: 32, hi: 128 }]))
            }
            ("echo", Some(text)) => Some(Self::echo(text)),
            _ => None,
        }
    }

    pub fn with_item(mut self, id: impl Into<String>, item: MockItem) -> Self {
        self.items.insert(id.into(), item);
        self
    }

    /// Registers every item and exemplar of a manifest.
    pub fn with_manifest(mut self, manifest: &Manifest) -> Self {
        for item in manifest.items.iter().chain(&manifest.exemplars) {
            self.items.insert(item.id.clone(), item.into());
        }
        self
    }

    pub fn with_latency_ms(mut self, latency_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn grants(&self, rule: &MockRule, request: &ChatRequest<'_>) -> bool {
        let asks = request.last_user_text().is_some_and(|t| t.contains('?'));
        match rule {
            MockRule::Canned { .. } => false,
            MockRule::AlwaysTruth => true,
            MockRule::ResolutionWindow { lo, hi } => {
                asks && request.latest_image().is_some_and(|img| (*lo..*hi).contains(&img.long_side()))
            }
            MockRule::GrantEnhance => asks && request.context.preprocess.as_ref().is_some_and(|p| p.contains_enhance()),
        }
    }

    fn respond(&self, request: &ChatRequest<'_>) -> String {
        if let Some(MockRule::Canned { text }) = self.rules.iter().find(|r| matches!(r, MockRule::Canned { .. })) {
            return text.clone();
        }
        let item = request.context.item_id.as_deref().and_then(|id| self.items.get(id));
        let hinted = request.last_user_text().is_some_and(|t| t.trim_start().starts_with(HINT_PREFIX));
        if let Some(item) = item {
            if self.rules.iter().any(|r| self.grants(r, request)) {
                return if hinted {
                    format!("Yes. Looking at the overall shape, the image contains {}.", item.ground_truth)
                } else {
                    format!("The picture shows a scene, and hidden within it is {}.", item.ground_truth)
                };
            }
        }
        if hinted {
            return "No, I cannot find that in this image.".to_string();
        }
        generic_description(item)
    }
}

fn generic_description(item: Option<&MockItem>) -> String {
    let forbidden: Vec<String> = item
        .map(|i| std::iter::once(&i.ground_truth).chain(&i.synonyms).map(|s| s.to_lowercase()).collect())
        .unwrap_or_default();
    GENERIC_DESCRIPTIONS
        .iter()
        .find(|d| {
            let lower = d.to_lowercase();
            !forbidden.iter().any(|f| lower.contains(f.as_str()))
        })
        .map(|d| d.to_string())
        .unwrap_or_else(|| "...".to_string())
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(Completion { text: self.respond(request), latency_ms: self.latency_ms })
    }
}
