//! `eval`: score a run's predictions against its fixtures.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use promptplan::eval::{report_from_parts, EvalReport, EvalTrack, Prediction, CSV_HEADER};
use promptplan::records::{read_predictions, PredictionRecord};
use promptplan::SceneAnnotation;

use crate::args::EvalArgs;
use crate::error::{runtime, usage, Classify, CliResult};
use crate::fixtures;
use crate::fsutil::{create_dir, write_atomic, write_json};
use crate::manifest::{RunManifest, PREDICTIONS_FILE, STATS_FILE};
use crate::run::read_stats;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// Inputs of one evaluation, with run-directory defaults filled in.
pub struct EvalInputs {
    pub predictions: PathBuf,
    pub fixtures: PathBuf,
    pub stats: Option<PathBuf>,
    pub manifest: Option<RunManifest>,
}

impl EvalInputs {
    pub fn locate(
        run_dir: Option<&Path>,
        predictions: Option<&Path>,
        fixtures: Option<&Path>,
    ) -> CliResult<Self> {
        let manifest = match run_dir {
            Some(d) => RunManifest::of_run(d).runtime()?,
            None => None,
        };
        let predictions = match (predictions, run_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(d)) => d.join(PREDICTIONS_FILE),
            (None, None) => return Err(usage("give a run directory or --predictions")),
        };
        let fixtures = match (fixtures, &manifest) {
            (Some(f), _) => f.to_path_buf(),
            (None, Some(m)) => m.fixtures.clone(),
            (None, None) => return Err(usage("no manifest found; pass --fixtures")),
        };
        let stats = run_dir.map(|d| d.join(STATS_FILE)).filter(|p| p.is_file());
        Ok(Self {
            predictions,
            fixtures,
            stats,
            manifest,
        })
    }
}

pub fn load_records(path: &Path) -> anyhow::Result<Vec<PredictionRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_predictions(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn unknown(ids: BTreeSet<&str>, what: &str) -> CliResult<()> {
    if ids.is_empty() {
        return Ok(());
    }
    let list: Vec<&str> = ids.into_iter().collect();
    Err(runtime(format!(
        "{what} image ids missing from the fixtures: {}",
        list.join(", ")
    )))
}

pub fn evaluate(
    inputs: &EvalInputs,
    track: EvalTrack,
    matched_miou: bool,
) -> CliResult<EvalReport> {
    let scenes = fixtures::load(&inputs.fixtures).runtime()?;
    let records = load_records(&inputs.predictions).runtime()?;
    let by_id: HashMap<&str, &SceneAnnotation> =
        scenes.iter().map(|s| (s.image_id.as_str(), s)).collect();

    unknown(
        records
            .iter()
            .map(|r| r.image_id.as_str())
            .filter(|id| !by_id.contains_key(id))
            .collect(),
        "prediction",
    )?;

    let (evaluated, stats, skipped) = match &inputs.stats {
        Some(path) => {
            let rows = read_stats(path).runtime()?;
            unknown(
                rows.iter()
                    .map(|r| r.image_id.as_str())
                    .filter(|id| !by_id.contains_key(id))
                    .collect(),
                "stats",
            )?;
            let ok: Vec<_> = rows.iter().filter(|r| r.ok()).collect();
            let evaluated: Vec<SceneAnnotation> = ok
                .iter()
                .map(|r| by_id[r.image_id.as_str()].clone())
                .collect();
            let stats = ok.iter().map(|r| r.backend_stats()).collect();
            (evaluated, stats, rows.len() - ok.len())
        }
        None => (scenes.clone(), Vec::new(), 0),
    };

    let ran: BTreeSet<&str> = evaluated.iter().map(|s| s.image_id.as_str()).collect();
    let stray: BTreeSet<&str> = records
        .iter()
        .map(|r| r.image_id.as_str())
        .filter(|id| !ran.contains(id))
        .collect();
    if !stray.is_empty() {
        let list: Vec<&str> = stray.into_iter().collect();
        return Err(runtime(format!(
            "predictions for images that did not complete: {}",
            list.join(", ")
        )));
    }

    let preds: Vec<Prediction> = records.into_iter().map(|r| r.into_prediction()).collect();
    let mut report =
        report_from_parts(&preds, &evaluated, &stats, skipped, track, matched_miou).runtime()?;
    report.mode = inputs.manifest.as_ref().map(|m| m.config.mode);
    Ok(report)
}

pub fn write_report(dir: &Path, report: &EvalReport) -> anyhow::Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(REPORT_JSON), report)?;
    let csv = format!("{CSV_HEADER}\n{}\n", report.csv_row());
    write_atomic(&dir.join(REPORT_CSV), csv.as_bytes())
}

pub fn parse_track(s: &str) -> CliResult<EvalTrack> {
    EvalTrack::from_str(s).map_err(usage)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let track = parse_track(&args.track)?;
    let inputs = EvalInputs::locate(
        args.run_dir.as_deref(),
        args.predictions.as_deref(),
        args.fixtures.as_deref(),
    )?;
    let report = evaluate(&inputs, track, args.matched_miou)?;
    let out = match (&args.out, &args.run_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(d)) => d.clone(),
        (None, None) => inputs
            .predictions
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    write_report(&out, &report).runtime()?;
    println!("{CSV_HEADER}\n{}", report.csv_row());
    Ok(())
}
