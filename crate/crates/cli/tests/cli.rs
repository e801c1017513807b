use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_promptplan"))
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = exec(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sha(path: &Path) -> String {
    let digest = Sha256::digest(fs::read(path).unwrap());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of every file in `dir`, in name order.
fn dir_hashes(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| {
            (
                f.file_name().unwrap().to_string_lossy().into_owned(),
                sha(f),
            )
        })
        .collect()
}

fn synth(tmp: &TempDir, name: &str, n: usize) -> PathBuf {
    let out = tmp.path().join(name);
    ok(&[
        "synth",
        "--n",
        &n.to_string(),
        "--width",
        "128",
        "--height",
        "128",
        "--instances",
        "3-8",
        "--seed",
        "11",
        "--out",
        p(&out),
    ]);
    out
}

fn run(fixtures: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--fixtures", p(fixtures), "--out", p(out)];
    args.extend_from_slice(extra);
    exec(&args)
}

fn stats_rows(run_dir: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(run_dir.join("stats.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = synth(&tmp, "a", 6);
    let b = synth(&tmp, "b", 6);
    assert_eq!(dir_hashes(&a), dir_hashes(&b));
    assert_eq!(sha(&a.join("index.json")), sha(&b.join("index.json")));

    let index: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("index.json")).unwrap()).unwrap();
    let scenes = index["scenes"].as_array().unwrap();
    assert_eq!(scenes.len(), 6);
    assert_eq!(scenes[0]["image_id"], "scene-0000");
    for s in scenes {
        let n = s["instances"].as_u64().unwrap();
        assert!((3..=8).contains(&n));
    }
}

#[test]
fn synth_index_lists_every_scene() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("fx");
    ok(&[
        "synth",
        "--n",
        "50",
        "--instances",
        "5-20",
        "--out",
        p(&out),
    ]);
    let index: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["scenes"].as_array().unwrap().len(), 50);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 51);
}

#[test]
fn runs_do_not_depend_on_worker_count() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 8);
    for mode in ["hierarchical", "boxes_only", "hybrid"] {
        let one = tmp.path().join(format!("{mode}-1"));
        let four = tmp.path().join(format!("{mode}-4"));
        let common = ["--mode", mode, "--recall", "0.6", "--seed", "7"];
        assert!(run(&fx, &one, &[&common[..], &["--jobs", "1"]].concat())
            .status
            .success());
        assert!(run(&fx, &four, &[&common[..], &["--jobs", "4"]].concat())
            .status
            .success());
        assert_eq!(
            fs::read(one.join("predictions.jsonl")).unwrap(),
            fs::read(four.join("predictions.jsonl")).unwrap(),
            "{mode}"
        );
        let ids: Vec<String> = stats_rows(&four)
            .into_iter()
            .map(|r| r[0].clone())
            .collect();
        let want: Vec<String> = (0..8).map(|i| format!("scene-{i:04}")).collect();
        assert_eq!(ids, want);
    }
}

#[test]
fn hierarchical_round_one_is_coarse_grid() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 4);
    let out = tmp.path().join("h");
    assert!(run(
        &fx,
        &out,
        &["--mode", "hierarchical", "--coarse", "8", "--dense", "32"]
    )
    .status
    .success());
    let rows = stats_rows(&out);
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(r[1], "ok");
        assert_eq!(r[5], "64", "round-1 prompts in {r:?}");
        let calls: u64 = r[2].parse().unwrap();
        let round2: u64 = r[6].parse().unwrap();
        assert_eq!(calls, 64 + round2);
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 1);
    let out = tmp.path().join("x");
    for extra in [
        &["--mode", "fancy"][..],
        &["--coarse", "0"],
        &["--nms-iou", "2"],
        &["--backend", "external"],
        &["--bogus-flag"],
    ] {
        let o = run(&fx, &out, extra);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{extra:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(exec(&["run", "--out", p(&out)]).status.code(), Some(1));
    assert_eq!(exec(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(exec(&["--help"]).status.code(), Some(0));
    let help = String::from_utf8(exec(&["--help"]).stdout).unwrap();
    assert!(help.contains("PROMPTPLAN_LOG") && help.contains("nms_iou"));

    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "mode = hybrid\nnot_a_key = 3\n").unwrap();
    let o = run(&fx, &out, &["--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 1);
    let out = tmp.path().join("x");
    let o = run(
        &fx,
        &out,
        &[
            "--backend",
            "external",
            "--external-cmd",
            "/nonexistent/server",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let bad = tmp.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(bad.join("s.json"), "{not json").unwrap();
    assert_eq!(run(&bad, &out, &[]).status.code(), Some(2));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 2);
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# test settings\nmode = hierarchical\ncoarse = 4\nfixtures = {}\n",
            p(&fx)
        ),
    )
    .unwrap();
    let a = tmp.path().join("a");
    ok(&["run", "--config", p(&cfg), "--out", p(&a)]);
    assert!(stats_rows(&a).iter().all(|r| r[5] == "16"));
    let b = tmp.path().join("b");
    ok(&["run", "--config", p(&cfg), "--coarse", "2", "--out", p(&b)]);
    assert!(stats_rows(&b).iter().all(|r| r[5] == "4"));
}

#[test]
fn perfect_hybrid_run_scores_full_recall() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 5);
    let out = tmp.path().join("run");
    assert!(run(&fx, &out, &["--mode", "hybrid", "--recall", "1.0"])
        .status
        .success());
    ok(&["eval", p(&out)]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["ar"].as_f64().unwrap() >= 0.99, "{report}");
    assert!(report["miou"].as_f64().unwrap() >= 0.99);
    assert_eq!(report["mode"], "hybrid");
    assert_eq!(report["images_evaluated"], 5);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "mode,AR,mIoU,AP,AP_s,AP_m,AP_l,time/img,calls/img"
    );
    assert!(lines[1].starts_with("hybrid,"));
}

#[test]
fn detector_track_needs_categories() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 2);
    let out = tmp.path().join("h");
    assert!(run(&fx, &out, &["--mode", "hierarchical"]).status.success());
    let o = exec(&["eval", p(&out), "--track", "detector"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("category"));
    ok(&["eval", p(&out), "--track", "class_agnostic"]);

    let b = tmp.path().join("b");
    assert!(run(&fx, &b, &["--mode", "boxes_only"]).status.success());
    ok(&["eval", p(&b), "--track", "class_agnostic"]);
}

#[test]
fn mismatched_image_ids_are_listed() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 3);
    let out = tmp.path().join("run");
    assert!(run(&fx, &out, &["--mode", "boxes_only"]).status.success());
    let preds = fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    let moved = tmp.path().join("moved.jsonl");
    fs::write(&moved, preds.replace("scene-0001", "ghost-7")).unwrap();
    let o = exec(&[
        "eval",
        "--predictions",
        p(&moved),
        "--fixtures",
        p(&fx),
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ghost-7"));
}

#[test]
fn report_compares_runs_with_stable_overlays() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 3);
    let mut runs = Vec::new();
    for mode in ["hierarchical", "boxes_only", "hybrid"] {
        let out = tmp.path().join(mode);
        assert!(run(&fx, &out, &["--mode", mode, "--recall", "0.6"])
            .status
            .success());
        runs.push(out);
    }
    let render = |name: &str| {
        let out = tmp.path().join(name);
        let mut args = vec!["report"];
        args.extend(runs.iter().map(|r| p(r)));
        args.extend(["--out", p(&out)]);
        ok(&args);
        out
    };
    let a = render("rep-a");
    let csv = fs::read_to_string(a.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    for (line, mode) in lines[1..]
        .iter()
        .zip(["hierarchical", "boxes_only", "hybrid"])
    {
        assert!(line.starts_with(&format!("{mode},")), "{line}");
    }

    let b = render("rep-b");
    for mode in ["hierarchical", "boxes_only", "hybrid"] {
        let (da, db) = (a.join("overlays").join(mode), b.join("overlays").join(mode));
        let ha = dir_hashes(&da);
        assert_eq!(ha.len(), 3);
        assert_eq!(ha, dir_hashes(&db));
    }

    // overlays decode and show the scene at full size
    let file = fs::File::open(a.join("overlays/hybrid/scene-0000.png")).unwrap();
    let mut reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (128, 128));
    assert_eq!(info.color_type, png::ColorType::Rgb);
    let px = &buf[..info.buffer_size()];
    let distinct: std::collections::HashSet<&[u8]> = px.chunks(3).collect();
    assert!(distinct.len() > 3);
    assert!(
        distinct.contains(&[255u8, 255, 255][..]),
        "box outlines missing"
    );

    let single = tmp.path().join("single");
    ok(&["report", p(&runs[0]), "--out", p(&single), "--no-overlays"]);
    assert_eq!(
        fs::read_to_string(single.join("comparison.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    assert!(!single.join("overlays").exists());
}

#[test]
fn external_backend_matches_oracle() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 3);
    let server = format!(
        "{} serve-oracle --fixtures {} --recall 0.6 --seed 5",
        env!("CARGO_BIN_EXE_promptplan"),
        p(&fx)
    );
    for mode in ["hierarchical", "hybrid"] {
        let direct = tmp.path().join(format!("{mode}-oracle"));
        let wire = tmp.path().join(format!("{mode}-wire"));
        assert!(run(
            &fx,
            &direct,
            &["--mode", mode, "--recall", "0.6", "--seed", "5"]
        )
        .status
        .success());
        let o = run(
            &fx,
            &wire,
            &[
                "--mode",
                mode,
                "--backend",
                "external",
                "--external-cmd",
                &server,
                "--jobs",
                "2",
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(
            fs::read(direct.join("predictions.jsonl")).unwrap(),
            fs::read(wire.join("predictions.jsonl")).unwrap(),
            "{mode}"
        );
        let calls = |d: &Path| {
            stats_rows(d)
                .iter()
                .map(|r| r[2].clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(calls(&direct), calls(&wire));
    }
}

#[test]
fn manifest_replays_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let fx = synth(&tmp, "fx", 4);
    let first = tmp.path().join("first");
    assert!(run(
        &fx,
        &first,
        &[
            "--mode",
            "hybrid",
            "--recall",
            "0.6",
            "--seed",
            "7",
            "--nms-iou",
            "0.6"
        ]
    )
    .status
    .success());
    let second = tmp.path().join("second");
    ok(&[
        "run",
        "--manifest",
        p(&first.join("manifest.json")),
        "--out",
        p(&second),
    ]);
    assert_eq!(
        sha(&first.join("predictions.jsonl")),
        sha(&second.join("predictions.jsonl"))
    );
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(second.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["nms_iou_threshold"], 0.6);
    assert_eq!(m["backend"]["seed"], 7);
    assert!(m["timestamp"].as_str().unwrap().ends_with('Z'));

    // a flag still overrides the replayed value
    let third = tmp.path().join("third");
    ok(&[
        "run",
        "--manifest",
        p(&first.join("manifest.json")),
        "--seed",
        "8",
        "--out",
        p(&third),
    ]);
    assert_ne!(
        sha(&first.join("predictions.jsonl")),
        sha(&third.join("predictions.jsonl"))
    );
}
