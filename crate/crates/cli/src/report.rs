//! `report`: comparison table across runs plus per-scene overlays.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::info;
use promptplan::eval::{EvalReport, EvalTrack, CSV_HEADER};
use promptplan::pipeline::Provenance;
use promptplan::records::PredictionRecord;
use promptplan::seed::{derive, hash_str};
use promptplan::{BinaryMask, SceneAnnotation};

use crate::args::ReportArgs;
use crate::error::{Classify, CliResult};
use crate::evaluate::{evaluate, load_records, parse_track, EvalInputs, REPORT_JSON};
use crate::fixtures;
use crate::fsutil::{create_dir, read_json, write_atomic};
use crate::png::encode_rgb;

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const OVERLAY_DIR: &str = "overlays";

const BACKGROUND: [u8; 3] = [16, 16, 16];
const GROUND_TRUTH: [u8; 3] = [56, 56, 56];
const OUTLINE: [u8; 3] = [255, 255, 255];

/// Stable tint for the `k`-th mask of an image.
pub fn mask_color(image_id: &str, k: usize) -> [u8; 3] {
    let bits = derive(&[hash_str(image_id), k as u64]).to_le_bytes();
    // keep tints well clear of the dark background
    [64 + bits[0] % 192, 64 + bits[1] % 192, 64 + bits[2] % 192]
}

fn on_edge(m: &BinaryMask, x: u32, y: u32) -> bool {
    let (w, h) = (m.width(), m.height());
    x == 0
        || y == 0
        || x + 1 == w
        || y + 1 == h
        || !m.get(x - 1, y)
        || !m.get(x + 1, y)
        || !m.get(x, y - 1)
        || !m.get(x, y + 1)
}

/// RGB pixels: dim ground truth, each prediction blended in its tint,
/// box-prompted masks outlined.
pub fn render(scene: &SceneAnnotation, records: &[&PredictionRecord]) -> Vec<u8> {
    let (w, h) = (scene.width, scene.height);
    let fg = scene.foreground();
    let mut px = Vec::with_capacity(w as usize * h as usize * 3);
    for y in 0..h {
        for x in 0..w {
            px.extend_from_slice(if fg.get(x, y) {
                &GROUND_TRUTH
            } else {
                &BACKGROUND
            });
        }
    }
    let at = |x: u32, y: u32| (y as usize * w as usize + x as usize) * 3;
    for (k, rec) in records.iter().enumerate() {
        let mask = rec.rle.decode();
        if (mask.width(), mask.height()) != (w, h) {
            continue;
        }
        let tint = mask_color(&scene.image_id, k);
        let outline = rec.provenance == Provenance::BoxPrompt;
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x, y) {
                    continue;
                }
                let i = at(x, y);
                if outline && on_edge(&mask, x, y) {
                    px[i..i + 3].copy_from_slice(&OUTLINE);
                } else {
                    for c in 0..3 {
                        px[i + c] = ((px[i + c] as u16 + tint[c] as u16) / 2) as u8;
                    }
                }
            }
        }
    }
    px
}

fn file_stem(image_id: &str) -> String {
    image_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Distinct directory labels for the runs, from their directory names.
fn labels(runs: &[PathBuf]) -> Vec<String> {
    let mut seen = HashSet::new();
    runs.iter()
        .enumerate()
        .map(|(i, r)| {
            let base = r
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("run{i}"));
            if seen.insert(base.clone()) {
                base
            } else {
                format!("{base}-{i}")
            }
        })
        .collect()
}

fn run_report(run: &Path, track: EvalTrack) -> CliResult<(EvalReport, EvalInputs)> {
    let inputs = EvalInputs::locate(Some(run), None, None)?;
    let saved = run.join(REPORT_JSON);
    let mut report = if saved.is_file() {
        read_json::<EvalReport>(&saved).runtime()?
    } else {
        evaluate(&inputs, track, false)?
    };
    if report.mode.is_none() {
        report.mode = inputs.manifest.as_ref().map(|m| m.config.mode);
    }
    Ok((report, inputs))
}

fn write_overlays(dir: &Path, inputs: &EvalInputs) -> anyhow::Result<usize> {
    create_dir(dir)?;
    let scenes = fixtures::load(&inputs.fixtures)?;
    let records = load_records(&inputs.predictions)?;
    let mut by_image: HashMap<&str, Vec<&PredictionRecord>> = HashMap::new();
    for r in &records {
        by_image.entry(r.image_id.as_str()).or_default().push(r);
    }
    for s in &scenes {
        let recs = by_image
            .get(s.image_id.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let png = encode_rgb(s.width, s.height, &render(s, recs));
        write_atomic(&dir.join(format!("{}.png", file_stem(&s.image_id))), &png)?;
    }
    Ok(scenes.len())
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let track = parse_track(&args.track)?;
    create_dir(&args.out).runtime()?;
    let mut csv = format!("{CSV_HEADER}\n");
    for (run, label) in args.runs.iter().zip(labels(&args.runs)) {
        let (report, inputs) = run_report(run, track)?;
        csv.push_str(&report.csv_row());
        csv.push('\n');
        if !args.no_overlays {
            let n = write_overlays(&args.out.join(OVERLAY_DIR).join(&label), &inputs).runtime()?;
            info!("{label}: {n} overlays");
        }
    }
    write_atomic(&args.out.join(COMPARISON_FILE), csv.as_bytes()).runtime()?;
    print!("{csv}");
    Ok(())
}
