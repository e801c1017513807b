//! Oracle answers over the external-backend protocol, for exercising the
//! external code path without a model server.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::net::TcpListener;

use anyhow::Context;
use log::info;
use promptplan::backend::external::{serve, RequestHandler, WireDetection, WirePrompt};
use promptplan::backend::{oracle_detect, OracleSegmenter};
use promptplan::prompt::{BoxPrompt, PointPrompt};
use promptplan::{BBox, RleMask, SceneAnnotation};

use crate::args::ServeArgs;
use crate::error::{Classify, CliResult};
use crate::fixtures;

/// Scenes keyed by the image source the pipeline sends.
struct OracleHandler<'a> {
    scenes: HashMap<String, &'a SceneAnnotation>,
    segmenters: HashMap<String, OracleSegmenter<'a>>,
    recall: f64,
    seed: u64,
}

impl<'a> OracleHandler<'a> {
    fn new(scenes: &'a [SceneAnnotation], recall: f64, seed: u64) -> Self {
        Self {
            scenes: scenes.iter().map(|s| (s.image_ref().source, s)).collect(),
            segmenters: HashMap::new(),
            recall,
            seed,
        }
    }

    fn scene(&self, image: &str) -> Result<&'a SceneAnnotation, String> {
        self.scenes
            .get(image)
            .copied()
            .ok_or_else(|| format!("unknown image {image}"))
    }
}

impl RequestHandler for OracleHandler<'_> {
    fn detect(&mut self, image: &str) -> Result<Vec<WireDetection>, String> {
        let scene = self.scene(image)?;
        Ok(oracle_detect(scene, self.recall, self.seed)
            .into_iter()
            .map(|d| {
                let [x0, y0, x1, y1] = d.bbox.as_array();
                WireDetection {
                    bbox: [x0 as f64, y0 as f64, x1 as f64, y1 as f64],
                    category_id: d.category_id,
                    score: d.score,
                }
            })
            .collect())
    }

    fn segment(&mut self, image: &str, prompt: &WirePrompt) -> Result<(RleMask, f64), String> {
        let scene = self.scene(image)?;
        let seg = self
            .segmenters
            .entry(image.to_string())
            .or_insert_with(|| OracleSegmenter::new(scene));
        let r = match prompt {
            WirePrompt::Box { bbox } => {
                let b = BBox::from_f64(bbox[0], bbox[1], bbox[2], bbox[3])
                    .map_err(|e| e.to_string())?;
                seg.segment_box(&BoxPrompt {
                    bbox: b,
                    source: None,
                })
            }
            WirePrompt::Point { point } => seg
                .segment_point(&PointPrompt {
                    x: point[0],
                    y: point[1],
                })
                .map_err(|e| e.to_string())?,
        };
        Ok((RleMask::encode(&r.mask), r.score))
    }
}

pub fn cmd_serve_oracle(args: &ServeArgs) -> CliResult<()> {
    let scenes = fixtures::load(&args.fixtures).runtime()?;
    match &args.listen {
        None => {
            let mut handler = OracleHandler::new(&scenes, args.recall, args.seed);
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            serve(stdin, stdout, &mut handler)
                .context("serving stdio")
                .runtime()
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr)
                .with_context(|| format!("binding {addr}"))
                .runtime()?;
            // the bound address goes to stdout so callers can use port 0
            println!("{}", listener.local_addr().runtime()?);
            let scenes = &scenes;
            std::thread::scope(|sc| {
                for conn in listener.incoming() {
                    let conn = conn.runtime()?;
                    let _ = conn.set_nodelay(true);
                    let reader = BufReader::new(conn.try_clone().runtime()?);
                    sc.spawn(move || {
                        let peer = conn.peer_addr().ok();
                        info!("connection from {peer:?}");
                        let mut handler = OracleHandler::new(scenes, args.recall, args.seed);
                        if let Err(e) = serve(reader, BufWriter::new(conn), &mut handler) {
                            info!("connection {peer:?} ended: {e}");
                        }
                    });
                }
                Ok(())
            })
        }
    }
}
