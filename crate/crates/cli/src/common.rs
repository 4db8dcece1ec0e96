//! Configuration resolution, client construction and run directories.

use std::fmt::Display;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use zoomeval::client::{EndpointConfig, MockBackend, ResponseCache, VlmClient};
use zoomeval::manifest::{load_manifest, BenchmarkItem, Manifest};
use zoomeval::sweep::SweepPlan;

use crate::RunOptions;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Display) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    pub fn runtime(message: impl Display) -> Self {
        Self { code: 1, message: message.to_string() }
    }
}

/// Contents of a `--config` file. Relative paths are resolved against the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub endpoints: Option<PathBuf>,
    pub mock: Option<String>,
    pub plan: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub overrides: Option<PathBuf>,
    pub items: Option<Vec<String>>,
    pub sweep: Option<SweepPlan>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Self =
            serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.manifest, &mut config.endpoints, &mut config.cache_dir, &mut config.out_dir, &mut config.overrides]
            .into_iter()
            .flatten()
        {
            *p = base.join(&*p);
        }
        Ok(config)
    }
}

/// Flags merged over the config file.
pub struct Resolved {
    pub manifest: Manifest,
    pub items: Vec<BenchmarkItem>,
    pub endpoints: Vec<EndpointConfig>,
    pub mock: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub config: RunConfig,
}

pub fn resolve(opts: &RunOptions) -> Result<Resolved, CliError> {
    let config = RunConfig::load(opts.config.as_deref())?;
    let manifest_path = opts
        .manifest
        .clone()
        .or_else(|| config.manifest.clone())
        .ok_or_else(|| CliError::usage("no manifest given (use --manifest or a config file)"))?;
    if !manifest_path.exists() {
        return Err(CliError::usage(format!("manifest not found: {}", manifest_path.display())));
    }
    let manifest = load_manifest(&manifest_path).map_err(|e| CliError::usage(format!("{}: {e}", manifest_path.display())))?;

    let wanted = if opts.items.is_empty() { config.items.clone().unwrap_or_default() } else { opts.items.clone() };
    let items = if wanted.is_empty() {
        manifest.items.clone()
    } else {
        wanted
            .iter()
            .map(|id| manifest.item(id).cloned().ok_or_else(|| CliError::usage(format!("unknown item id '{id}'"))))
            .collect::<Result<_, _>>()?
    };

    let mock = opts.mock.clone().or_else(|| config.mock.clone());
    let mut endpoints = match (&mock, opts.endpoints.as_ref().or(config.endpoints.as_ref())) {
        (Some(name), _) => {
            MockBackend::from_name(name).ok_or_else(|| CliError::usage(format!("unknown mock backend '{name}'")))?;
            vec![EndpointConfig::mock(name.clone())]
        }
        (None, Some(path)) => load_endpoints(path)?,
        (None, None) => return Err(CliError::usage("no endpoints given (use --endpoints or --mock)")),
    };
    if let Some(n) = opts.parallelism.or(config.parallelism) {
        for e in &mut endpoints {
            e.parallelism = n;
        }
    }
    for e in &endpoints {
        e.validate().map_err(CliError::usage)?;
    }

    let out_dir = opts.out.clone().or_else(|| config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let cache_dir = if opts.no_cache {
        None
    } else {
        Some(opts.cache_dir.clone().or_else(|| config.cache_dir.clone()).unwrap_or_else(|| out_dir.join("cache")))
    };
    Ok(Resolved { manifest, items, endpoints, mock, cache_dir, out_dir, config })
}

fn load_endpoints(path: &Path) -> Result<Vec<EndpointConfig>, CliError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<EndpointConfig>),
        One(EndpointConfig),
    }
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read endpoints {}: {e}", path.display())))?;
    let parsed: OneOrMany =
        serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("invalid endpoints {}: {e}", path.display())))?;
    let list = match parsed {
        OneOrMany::Many(v) => v,
        OneOrMany::One(e) => vec![e],
    };
    if list.is_empty() {
        return Err(CliError::usage(format!("{} lists no endpoints", path.display())));
    }
    Ok(list)
}

pub fn build_client(resolved: &Resolved, endpoint: &EndpointConfig) -> Result<VlmClient, CliError> {
    let client = match &resolved.mock {
        Some(name) => {
            let backend = MockBackend::from_name(name)
                .ok_or_else(|| CliError::usage(format!("unknown mock backend '{name}'")))?
                .with_manifest(&resolved.manifest);
            VlmClient::new(endpoint.clone(), Arc::new(backend))
        }
        None => VlmClient::http(endpoint.clone()),
    }
    .map_err(CliError::usage)?;
    Ok(match &resolved.cache_dir {
        Some(dir) => client.with_cache(ResponseCache::new(dir)),
        None => client,
    })
}

/// Stable id derived from everything that determines a run's results.
pub fn default_run_id(prefix: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    format!("{prefix}-{}", &hex::encode(hasher.finalize())[..12])
}

/// Exclusive handle on a run directory; the lock file is removed on drop.
pub struct RunDir {
    pub path: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    /// Creates `parent/id`, refusing to touch an existing run unless `force`.
    pub fn create(parent: &Path, id: &str, force: bool, outputs: &[&str]) -> Result<Self, CliError> {
        if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
            return Err(CliError::usage(format!("invalid run id '{id}'")));
        }
        let path = parent.join(id);
        fs::create_dir_all(&path).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))?;
        let lock = path.join(".lock");
        OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::runtime(format!("run directory {} is locked by another process ({})", path.display(), lock.display()))
            } else {
                CliError::runtime(format!("cannot lock {}: {e}", path.display()))
            }
        })?;
        let dir = Self { path, lock };
        let existing: Vec<&str> = outputs.iter().copied().filter(|f| dir.path.join(f).exists()).collect();
        if !existing.is_empty() {
            if !force {
                return Err(CliError::usage(format!(
                    "run directory {} already holds results; pass --force or choose another --run-id",
                    dir.path.display()
                )));
            }
            for f in existing {
                fs::remove_file(dir.path.join(f)).map_err(|e| CliError::runtime(format!("cannot remove old {f}: {e}")))?;
            }
        }
        Ok(dir)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.path.join(name);
        let tmp = self.path.join(format!(".{name}.tmp"));
        fs::write(&tmp, contents)
            .and_then(|()| fs::rename(&tmp, &path))
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
