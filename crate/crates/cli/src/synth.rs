//! `synth`: deterministic fixture directories.

use std::ops::RangeInclusive;

use log::warn;
use promptplan::backend::synth_scene;
use promptplan::seed::derive;

use crate::args::SynthArgs;
use crate::error::{runtime, usage, Classify, CliResult};
use crate::fixtures::{FixtureIndex, IndexEntry, INDEX_FILE};
use crate::fsutil::{create_dir, write_atomic, write_json};

pub fn parse_range(s: &str) -> CliResult<RangeInclusive<usize>> {
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| usage(format!("instances {s:?}: {e}")))
    };
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if lo > hi {
        return Err(usage(format!("instances {s:?}: empty range")));
    }
    Ok(lo..=hi)
}

pub fn scene_id(i: usize) -> String {
    format!("scene-{i:04}")
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let range = parse_range(&args.instances)?;
    if args.width == 0 || args.height == 0 {
        return Err(usage("width and height must be at least 1"));
    }
    create_dir(&args.out).runtime()?;

    let mut entries = Vec::with_capacity(args.n);
    let mut failures = Vec::new();
    for i in 0..args.n {
        let seed = derive(&[args.seed, i as u64]);
        let span = (range.end() - range.start()) as u64 + 1;
        let n = range.start() + (derive(&[seed, span]) % span) as usize;
        let id = scene_id(i);
        match synth_scene(id.clone(), args.width, args.height, n, seed) {
            Ok(scene) => {
                let mut bytes = Vec::new();
                scene.to_writer(&mut bytes).runtime()?;
                let file = format!("{id}.json");
                write_atomic(&args.out.join(&file), &bytes).runtime()?;
                entries.push(IndexEntry {
                    image_id: id,
                    file,
                    instances: n,
                });
            }
            Err(e) => {
                warn!("{id}: {e}");
                failures.push(format!("{id}: {e}"));
            }
        }
    }

    let index = FixtureIndex {
        seed: args.seed,
        width: args.width,
        height: args.height,
        instances: [*range.start(), *range.end()],
        scenes: entries,
    };
    write_json(&args.out.join(INDEX_FILE), &index).runtime()?;
    println!("{} scenes in {}", index.scenes.len(), args.out.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!(
            "{} scenes failed: {}",
            failures.len(),
            failures.join("; ")
        )))
    }
}
