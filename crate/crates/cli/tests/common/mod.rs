//! Synthetic corpora with planted saliency scores and detector quality.
//!
//! Image `b_j` (bin `b` in 0..5, `j` in 0..per_bin) has a square tamper
//! region. Inside it the two saliency maps hold `s + d` and `s - d`, so
//! their mean is the planted score `s`, chosen well inside bin `b`. The
//! detector heatmap is `u * (1 - q) + q * gt` with uniform noise `u`; the
//! signal weight `q` rises with the bin, so localization quality rises with
//! saliency by construction.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salbias_core::corpus::save_mask;
use salbias_core::semantic::{render_tag_report, Variant};
use salbias_core::{save_map, BitDepth, PixelMap, TagReport, TagTrial, TamperMask};

/// Signal weight of the detector heatmap per bin.
pub const SIGNAL: [f64; 5] = [0.05, 0.15, 0.25, 0.35, 0.45];
/// Extra signal the "enhanced" heatmaps get, per bin.
pub const ENHANCEMENT: [f64; 5] = [0.2, 0.2, 0.0, 0.0, 0.0];

pub struct Spec {
    pub per_bin: usize,
    pub size: u32,
    pub seed: u64,
    pub enhanced: bool,
    pub tags: bool,
}

impl Default for Spec {
    fn default() -> Self {
        Self {
            per_bin: 10,
            size: 24,
            seed: 1,
            enhanced: false,
            tags: false,
        }
    }
}

pub struct Fixture {
    pub root: PathBuf,
    pub manifest: PathBuf,
    /// (image id, planted saliency score, bin index 1..=5)
    pub planted: Vec<(String, f64, usize)>,
}

pub fn planted_score(bin: usize, j: usize, per_bin: usize) -> f64 {
    // Spread over [0.2b + 0.03, 0.2b + 0.17].
    0.2 * bin as f64 + 0.03 + 0.14 * (j as f64 + 0.5) / per_bin as f64
}

fn heatmap(gt: &TamperMask, noise: &[f64], q: f64) -> PixelMap<f64> {
    let w = gt.width();
    PixelMap::from_fn(gt.width(), gt.height(), |x, y| {
        let u = noise[(y * w + x) as usize];
        let g = if gt.get(x, y) { 1.0 } else { 0.0 };
        u * (1.0 - q) + q * g
    })
    .unwrap()
}

fn tag_report(id: &str, variant: Variant, drift: usize) -> TagReport<f64> {
    let trials = (0..3)
        .map(|t| {
            let entries = (0..8)
                .map(|k| {
                    let name = if variant == Variant::Tampered && k < drift {
                        format!("new{k}")
                    } else {
                        format!("tag{k}")
                    };
                    (name, 0.9 - 0.1 * k as f64 - 0.01 * t as f64)
                })
                .collect();
            TagTrial::new(t + 1, entries).unwrap()
        })
        .collect();
    TagReport {
        image_id: id.to_string(),
        variant,
        model: "synthetic-tagger".into(),
        model_version: "1".into(),
        noun_corpus: "nouns-v1".into(),
        trials,
    }
}

pub fn build(root: &Path, spec: &Spec) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.size;
    let side = n / 3;
    let mut lines = vec!["# synthetic saliency fixture".to_string()];
    let mut planted = Vec::new();
    for d in ["images", "masks", "saliency", "heatmaps", "tags"] {
        std::fs::create_dir_all(root.join(d)).unwrap();
    }
    for bin in 0..5 {
        for j in 0..spec.per_bin {
            let id = format!("b{}_{j:02}", bin + 1);
            let s = planted_score(bin, j, spec.per_bin);
            let (ox, oy) = (rng.random_range(0..n - side), rng.random_range(0..n - side));
            let gt = TamperMask::from_fn(n, n, |x, y| x >= ox && x < ox + side && y >= oy && y < oy + side).unwrap();

            let outside: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let sal = |sign: f64| {
                PixelMap::from_fn(n, n, |x, y| {
                    if gt.get(x, y) {
                        let d = 0.02 * if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
                        s + sign * d
                    } else {
                        outside[(y * n + x) as usize]
                    }
                })
                .unwrap()
            };
            let noise: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();

            let rel = |dir: &str, suffix: &str| format!("{dir}/{id}{suffix}.png");
            save_map(
                &PixelMap::new(n, n, noise.clone()).unwrap(),
                root.join(rel("images", "")),
                BitDepth::Eight,
            )
            .unwrap();
            save_mask(&gt, root.join(rel("masks", ""))).unwrap();
            save_map(&sal(1.0), root.join(rel("saliency", "_a")), BitDepth::Sixteen).unwrap();
            save_map(&sal(-1.0), root.join(rel("saliency", "_b")), BitDepth::Sixteen).unwrap();
            save_map(
                &heatmap(&gt, &noise, SIGNAL[bin]),
                root.join(rel("heatmaps", "_osn")),
                BitDepth::Eight,
            )
            .unwrap();

            let mut line = format!(
                "id={id} image={} mask={} dataset=SYN saliency-map-A={} saliency-map-B={} detector-heatmap:osn={}",
                rel("images", ""),
                rel("masks", ""),
                rel("saliency", "_a"),
                rel("saliency", "_b"),
                rel("heatmaps", "_osn"),
            );
            if spec.enhanced {
                let q = SIGNAL[bin] + ENHANCEMENT[bin];
                save_map(
                    &heatmap(&gt, &noise, q),
                    root.join(rel("heatmaps", "_osn_enh")),
                    BitDepth::Eight,
                )
                .unwrap();
                line.push_str(&format!(
                    " detector-heatmap:osn@saliency-enhanced={}",
                    rel("heatmaps", "_osn_enh")
                ));
            }
            if spec.tags {
                for (variant, key) in [
                    (Variant::Pristine, "pristine-tags"),
                    (Variant::Tampered, "tampered-tags"),
                ] {
                    let file = format!("tags/{id}_{}.txt", variant.as_str());
                    std::fs::write(root.join(&file), render_tag_report(&tag_report(&id, variant, bin))).unwrap();
                    line.push_str(&format!(" {key}={file}"));
                }
            }
            lines.push(line);
            planted.push((id, s, bin + 1));
        }
    }
    let manifest = root.join("manifest.txt");
    std::fs::write(&manifest, lines.join("\n") + "\n").unwrap();
    Fixture {
        root: root.to_path_buf(),
        manifest,
        planted,
    }
}

pub fn salbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salbias"))
        .args(args)
        .env_remove("SALBIAS_DATA_DIR")
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn salbias")
}

/// Runs a subcommand against a manifest and output dir; panics with the
/// captured stderr on failure.
pub fn run_ok(manifest: &Path, out: &Path, args: &[&str]) -> String {
    let mut all = args.to_vec();
    let (m, o) = (manifest.to_str().unwrap(), out.to_str().unwrap());
    all.extend(["--manifest", m, "--out", o]);
    let output = salbias(&all);
    assert!(
        output.status.success(),
        "salbias {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

/// Parses a delimited report, skipping `#` provenance lines.
pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
