//! Run settings assembled from flags, a config file, a previous manifest
//! and defaults, in that order of precedence.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use promptplan::backend::DEFAULT_TIMEOUT;
use promptplan::prompt::GridSpec;
use promptplan::{Mode, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::args::{BackendKind, RunArgs};
use crate::error::{usage, Classify, CliResult};
use crate::manifest::RunManifest;

/// Where an external server lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// Program and arguments, spawned once per worker.
    Command(Vec<String>),
    /// host:port of a listening server, one connection per worker.
    Addr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Oracle {
        recall: f64,
        seed: u64,
    },
    External {
        endpoint: Endpoint,
        timeout_secs: f64,
    },
}

impl BackendSpec {
    pub fn timeout(&self) -> Duration {
        match self {
            BackendSpec::External { timeout_secs, .. } => Duration::from_secs_f64(*timeout_secs),
            BackendSpec::Oracle { .. } => DEFAULT_TIMEOUT,
        }
    }
}

/// Fully resolved settings for `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub config: PipelineConfig,
    pub backend: BackendSpec,
    pub fixtures: PathBuf,
    pub jobs: usize,
}

/// One source of settings; unset fields fall through to the next source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layer {
    pub mode: Option<String>,
    pub backend: Option<BackendKind>,
    pub external_cmd: Option<Vec<String>>,
    pub external_addr: Option<String>,
    pub timeout: Option<f64>,
    pub recall: Option<f64>,
    pub seed: Option<u64>,
    pub coarse: Option<u32>,
    pub dense: Option<u32>,
    pub sparse: Option<u32>,
    pub nms_iou: Option<f64>,
    pub high_conf: Option<f64>,
    pub detection_floor: Option<f64>,
    pub min_area: Option<u64>,
    pub jobs: Option<usize>,
    pub fixtures: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($f:ident),*) => {
        Layer { $($f: $over.$f.or($base.$f)),* }
    };
}

impl Layer {
    /// `over` wins wherever it is set.
    /// Choosing an external endpoint also clears the other kind below.
    pub fn under(mut self, over: Layer) -> Layer {
        if over.external_cmd.is_some() || over.external_addr.is_some() {
            self.external_cmd = None;
            self.external_addr = None;
        }
        overlay!(
            self,
            over,
            mode,
            backend,
            external_cmd,
            external_addr,
            timeout,
            recall,
            seed,
            coarse,
            dense,
            sparse,
            nms_iou,
            high_conf,
            detection_floor,
            min_area,
            jobs,
            fixtures
        )
    }

    pub fn from_args(a: &RunArgs) -> CliResult<Layer> {
        Ok(Layer {
            mode: a.mode.clone(),
            backend: a.backend,
            external_cmd: a.external_cmd.as_deref().map(split_command).transpose()?,
            external_addr: a.external_addr.clone(),
            timeout: a.timeout,
            recall: a.recall,
            seed: a.seed,
            coarse: a.coarse,
            dense: a.dense,
            sparse: a.sparse,
            nms_iou: a.nms_iou,
            high_conf: a.high_conf,
            detection_floor: a.detection_floor,
            min_area: a.min_area,
            jobs: a.jobs,
            fixtures: a.fixtures.clone(),
        })
    }

    /// Settings recorded by an earlier run. Worker count is not replayed.
    pub fn from_manifest(m: &RunManifest) -> Layer {
        let c = &m.config;
        let mut layer = Layer {
            mode: Some(c.mode.as_str().to_string()),
            coarse: Some(c.coarse_grid.points_per_side()),
            dense: Some(c.dense_grid.points_per_side()),
            sparse: Some(c.sparse_grid.points_per_side()),
            nms_iou: Some(c.nms_iou_threshold),
            high_conf: Some(c.high_conf_threshold),
            detection_floor: Some(c.detection_conf_floor),
            min_area: Some(c.min_mask_area),
            fixtures: Some(m.fixtures.clone()),
            ..Layer::default()
        };
        match &m.backend {
            BackendSpec::Oracle { recall, seed } => {
                layer.backend = Some(BackendKind::Oracle);
                layer.recall = Some(*recall);
                layer.seed = Some(*seed);
            }
            BackendSpec::External {
                endpoint,
                timeout_secs,
            } => {
                layer.backend = Some(BackendKind::External);
                layer.timeout = Some(*timeout_secs);
                match endpoint {
                    Endpoint::Command(c) => layer.external_cmd = Some(c.clone()),
                    Endpoint::Addr(a) => layer.external_addr = Some(a.clone()),
                }
            }
        }
        layer
    }

    /// Parse the flat `key = value` format. `origin` prefixes diagnostics.
    pub fn parse_config(text: &str, origin: &str) -> CliResult<Layer> {
        let mut layer = Layer::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{origin}:{}: expected `key = value`", i + 1)))?;
            let key = key.trim().replace('-', "_");
            layer
                .set(&key, value.trim())
                .map_err(|e| usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(layer)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "mode" => self.mode = Some(v.to_string()),
            "backend" => self.backend = Some(<BackendKind as clap::ValueEnum>::from_str(v, true)?),
            "external_cmd" => {
                self.external_cmd = Some(split_command(v).map_err(|e| e.to_string())?)
            }
            "external_addr" => self.external_addr = Some(v.to_string()),
            "timeout" => self.timeout = Some(num(key, v)?),
            "recall" => self.recall = Some(num(key, v)?),
            "seed" => self.seed = Some(num(key, v)?),
            "coarse" => self.coarse = Some(num(key, v)?),
            "dense" => self.dense = Some(num(key, v)?),
            "sparse" => self.sparse = Some(num(key, v)?),
            "nms_iou" => self.nms_iou = Some(num(key, v)?),
            "high_conf" => self.high_conf = Some(num(key, v)?),
            "detection_floor" => self.detection_floor = Some(num(key, v)?),
            "min_area" => self.min_area = Some(num(key, v)?),
            "jobs" => self.jobs = Some(num(key, v)?),
            "fixtures" => self.fixtures = Some(PathBuf::from(v)),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn resolve(self) -> CliResult<RunSettings> {
        let defaults = PipelineConfig::default();
        let mode = match &self.mode {
            Some(m) => Mode::from_str(m).usage()?,
            None => defaults.mode,
        };
        let config = PipelineConfig {
            mode,
            coarse_grid: grid("coarse", self.coarse, defaults.coarse_grid)?,
            dense_grid: grid("dense", self.dense, defaults.dense_grid)?,
            sparse_grid: grid("sparse", self.sparse, defaults.sparse_grid)?,
            nms_iou_threshold: self.nms_iou.unwrap_or(defaults.nms_iou_threshold),
            high_conf_threshold: self.high_conf.unwrap_or(defaults.high_conf_threshold),
            detection_conf_floor: self
                .detection_floor
                .unwrap_or(defaults.detection_conf_floor),
            min_mask_area: self.min_area.unwrap_or(defaults.min_mask_area),
        };
        config.validate().usage()?;

        let backend = match self.backend.unwrap_or(BackendKind::Oracle) {
            BackendKind::Oracle => {
                let recall = self.recall.unwrap_or(1.0);
                if !(0.0..=1.0).contains(&recall) {
                    return Err(usage(format!("recall = {recall} is outside [0, 1]")));
                }
                BackendSpec::Oracle {
                    recall,
                    seed: self.seed.unwrap_or(0),
                }
            }
            BackendKind::External => {
                let endpoint = match (self.external_cmd, self.external_addr) {
                    (Some(cmd), None) => Endpoint::Command(cmd),
                    (None, Some(addr)) => Endpoint::Addr(addr),
                    (None, None) => {
                        return Err(usage(
                            "external backend needs --external-cmd or --external-addr",
                        ))
                    }
                    (Some(_), Some(_)) => {
                        return Err(usage("--external-cmd and --external-addr are exclusive"))
                    }
                };
                let timeout_secs = self.timeout.unwrap_or(DEFAULT_TIMEOUT.as_secs_f64());
                if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
                    return Err(usage(format!("timeout = {timeout_secs} must be positive")));
                }
                BackendSpec::External {
                    endpoint,
                    timeout_secs,
                }
            }
        };

        let jobs = match self.jobs {
            Some(0) => return Err(usage("jobs must be at least 1")),
            Some(j) => j,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let fixtures = self
            .fixtures
            .ok_or_else(|| usage("no fixtures given (--fixtures, config key or --manifest)"))?;
        let fixtures = absolute(&fixtures)?;
        Ok(RunSettings {
            config,
            backend,
            fixtures,
            jobs,
        })
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| format!("{key} = {v:?}: {e}"))
}

fn grid(name: &str, v: Option<u32>, default: GridSpec) -> CliResult<GridSpec> {
    match v {
        None => Ok(default),
        Some(n) => GridSpec::new(n).ok_or_else(|| usage(format!("{name} grid must be at least 1"))),
    }
}

pub fn split_command(cmd: &str) -> CliResult<Vec<String>> {
    match shlex::split(cmd) {
        Some(parts) if !parts.is_empty() => Ok(parts),
        _ => Err(usage(format!("cannot parse external command {cmd:?}"))),
    }
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| usage(format!("fixtures {}: {e}", path.display())))
}
