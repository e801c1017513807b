//! `run`: a pipeline mode over a fixture set with a pool of workers.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread;

use anyhow::{Context, Result};
use log::{info, warn};
use promptplan::backend::{
    BackendStats, Detector, ExternalBackend, OracleDetector, OracleSegmenter,
};
use promptplan::pipeline::{run, ImageOutcome, ImageRun};
use promptplan::records::write_predictions;
use promptplan::SceneAnnotation;
use serde::{Deserialize, Serialize};

use crate::args::RunArgs;
use crate::config::{BackendSpec, Endpoint, Layer, RunSettings};
use crate::error::{runtime, Classify, CliResult};
use crate::fixtures;
use crate::fsutil::{create_dir, write_atomic, write_json};
use crate::manifest::{RunManifest, MANIFEST_FILE, PREDICTIONS_FILE, STATS_FILE};

/// One line of `stats.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub image_id: String,
    pub status: String,
    pub segmenter_calls: u64,
    pub detector_calls: u64,
    pub box_prompts: u64,
    pub round1_points: u64,
    pub round2_points: u64,
    pub sparse_points: u64,
    pub masks: usize,
    pub wall_time: f64,
    pub error: String,
}

pub const STATUS_OK: &str = "ok";
pub const STATUS_FAILED: &str = "failed";

impl StatsRow {
    fn of(outcome: &ImageOutcome) -> Self {
        let mut row = StatsRow {
            image_id: outcome.image_id.clone(),
            status: STATUS_OK.into(),
            segmenter_calls: 0,
            detector_calls: 0,
            box_prompts: 0,
            round1_points: 0,
            round2_points: 0,
            sparse_points: 0,
            masks: 0,
            wall_time: 0.0,
            error: String::new(),
        };
        match &outcome.result {
            Ok(r) => {
                row.segmenter_calls = r.stats.segmenter_calls;
                row.detector_calls = r.stats.detector_calls;
                row.box_prompts = r.prompts.box_prompts;
                row.round1_points = r.prompts.round1_points;
                row.round2_points = r.prompts.round2_points;
                row.sparse_points = r.prompts.sparse_points;
                row.masks = r.masks.len();
                row.wall_time = r.stats.wall_time;
            }
            Err(e) => {
                row.status = STATUS_FAILED.into();
                row.error = e.clone();
            }
        }
        row
    }

    pub fn backend_stats(&self) -> BackendStats {
        BackendStats {
            segmenter_calls: self.segmenter_calls,
            detector_calls: self.detector_calls,
            wall_time: self.wall_time,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

pub fn read_stats(path: &Path) -> Result<Vec<StatsRow>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    rdr.deserialize()
        .collect::<Result<Vec<StatsRow>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn connect(endpoint: &Endpoint, spec: &BackendSpec) -> Result<ExternalBackend> {
    let timeout = spec.timeout();
    Ok(match endpoint {
        Endpoint::Command(cmd) => ExternalBackend::spawn(&cmd[0], &cmd[1..], timeout)
            .with_context(|| format!("launching {}", cmd.join(" ")))?,
        Endpoint::Addr(addr) => ExternalBackend::connect_tcp(addr.as_str(), timeout)
            .with_context(|| format!("connecting to {addr}"))?,
    })
}

fn run_one(
    scene: &SceneAnnotation,
    s: &RunSettings,
    external: Option<&ExternalBackend>,
) -> Result<ImageRun, String> {
    let image = scene.image_ref();
    let result = match (&s.backend, external) {
        (BackendSpec::Oracle { recall, seed }, _) => {
            let det = OracleDetector::new(scene, *recall, *seed);
            let seg = OracleSegmenter::new(scene);
            run(&image, Some(&det as &dyn Detector), &seg, &s.config)
        }
        (BackendSpec::External { .. }, Some(ext)) => {
            run(&image, Some(ext as &dyn Detector), ext, &s.config)
        }
        (BackendSpec::External { .. }, None) => {
            unreachable!("external worker without a connection")
        }
    };
    result.map_err(|e| e.to_string())
}

fn worker(
    scenes: &[SceneAnnotation],
    s: &RunSettings,
    next: &AtomicUsize,
    abort: &AtomicBool,
) -> Result<Vec<(usize, ImageOutcome)>> {
    let external = match &s.backend {
        BackendSpec::External { endpoint, .. } => match connect(endpoint, &s.backend) {
            Ok(b) => Some(b),
            Err(e) => {
                abort.store(true, Ordering::Relaxed);
                return Err(e);
            }
        },
        BackendSpec::Oracle { .. } => None,
    };
    let mut done = Vec::new();
    while !abort.load(Ordering::Relaxed) {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(scene) = scenes.get(i) else { break };
        let result = run_one(scene, s, external.as_ref());
        match &result {
            Ok(r) => info!(
                "{}: {} masks, {} calls",
                scene.image_id,
                r.masks.len(),
                r.stats.segmenter_calls
            ),
            Err(e) => warn!("{}: {e}", scene.image_id),
        }
        done.push((
            i,
            ImageOutcome {
                image_id: scene.image_id.clone(),
                result,
            },
        ));
    }
    Ok(done)
}

/// Outcomes in fixture order, whatever the worker count.
pub fn execute(scenes: &[SceneAnnotation], s: &RunSettings) -> Result<Vec<ImageOutcome>> {
    let jobs = s.jobs.clamp(1, scenes.len().max(1));
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let parts = thread::scope(|sc| {
        let handles: Vec<_> = (0..jobs)
            .map(|_| sc.spawn(|| worker(scenes, s, &next, &abort)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut all: Vec<(usize, ImageOutcome)> = parts.into_iter().flatten().collect();
    all.sort_by_key(|(i, _)| *i);
    Ok(all.into_iter().map(|(_, o)| o).collect())
}

pub fn write_outputs(out: &Path, outcomes: &[ImageOutcome], manifest: &RunManifest) -> Result<()> {
    create_dir(out)?;
    let mut preds = Vec::new();
    for o in outcomes {
        if let Ok(r) = &o.result {
            write_predictions(&mut preds, &o.image_id, &r.masks)?;
        }
    }
    write_atomic(&out.join(PREDICTIONS_FILE), &preds)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        w.serialize(StatsRow::of(o))?;
    }
    write_atomic(&out.join(STATS_FILE), &w.into_inner()?)?;
    write_json(&out.join(MANIFEST_FILE), manifest)
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let mut layer = Layer::default();
    if let Some(m) = &args.manifest {
        layer = Layer::from_manifest(&RunManifest::load(m).usage()?);
    }
    if let Some(c) = &args.config {
        let text = std::fs::read_to_string(c)
            .with_context(|| format!("reading config {}", c.display()))
            .usage()?;
        layer = layer.under(Layer::parse_config(&text, &c.display().to_string())?);
    }
    let settings = layer.under(Layer::from_args(args)?).resolve()?;

    let scenes = fixtures::load(&settings.fixtures).runtime()?;
    if scenes.is_empty() {
        return Err(runtime(format!(
            "no scenes under {}",
            settings.fixtures.display()
        )));
    }
    create_dir(&args.out).runtime()?;
    let out = std::fs::canonicalize(&args.out).runtime()?;
    info!(
        "{} scenes, mode {}, {} workers",
        scenes.len(),
        settings.config.mode,
        settings.jobs
    );

    let outcomes = execute(&scenes, &settings).runtime()?;
    let manifest = RunManifest::new(&settings, out.clone());
    write_outputs(&out, &outcomes, &manifest).runtime()?;

    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| o.result.is_err())
        .map(|o| o.image_id.as_str())
        .collect();
    println!(
        "{} images, {} failed, outputs in {}",
        outcomes.len(),
        failed.len(),
        out.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!(
            "{} images failed: {}",
            failed.len(),
            failed.join(", ")
        )))
    }
}
