use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salbias_core::saliency::SaliencyBin;
use salbias_core::semantic::trial_metrics;
use salbias_core::{assign_bin, auroc, mean_recall, rasterize_boxes, BoundingBox, PixelMap, TagTrial, TamperMask};

use crate::{ensure, Outcome};

const AUROC_TOL: f64 = 1e-9;
const RECALL_TOL: f64 = 1e-12;
const SEMANTIC_TOL: f64 = 1e-12;

/// All-pairs credit: 1 if the positive outranks the negative, 0.5 on a tie.
fn all_pairs_auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pick = |want: bool| -> Vec<f64> {
        scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == want)
            .map(|(&s, _)| s)
            .collect()
    };
    let (pos, neg) = (pick(true), pick(false));
    let mut credit = 0.0;
    let mut pairs = 0usize;
    for &p in &pos {
        for &n in &neg {
            pairs += 1;
            credit += match p.partial_cmp(&n).unwrap() {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    (pairs > 0).then(|| credit / pairs as f64)
}

fn random_case(rng: &mut ChaCha8Rng) -> (PixelMap<f64>, TamperMask) {
    let (w, h) = (rng.random_range(1..=8u32), rng.random_range(1..=8u32));
    let n = (w * h) as usize;
    let levels = rng.random_range(0..4);
    let values = (0..n)
        .map(|_| match levels {
            // Coarse grids force ties.
            0 => rng.random_range(0..3) as f64 / 2.0,
            1 => rng.random_range(0..=10) as f64 / 10.0,
            _ => rng.random::<f64>(),
        })
        .collect();
    let density = match rng.random_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random::<f64>(),
    };
    let bits = (0..n).map(|_| rng.random_bool(density)).collect();
    (
        PixelMap::new(w, h, values).unwrap(),
        TamperMask::new(w, h, bits).unwrap(),
    )
}

pub fn auroc_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ties, mut degenerate, mut worst) = (0, 0, 0.0f64);
    for case in 0..1000 {
        let (pred, gt) = random_case(&mut rng);
        let distinct: HashSet<u64> = pred.values().iter().map(|v| v.to_bits()).collect();
        if distinct.len() < pred.values().len() {
            ties += 1;
        }
        let ours = auroc(&pred, &gt).map_err(|e| e.to_string())?.value;
        match (ours, all_pairs_auroc(pred.values(), gt.bits())) {
            (Some(a), Some(b)) => {
                worst = worst.max((a - b).abs());
                ensure!((a - b).abs() <= AUROC_TOL, "case {case}: {a} vs oracle {b}");
            }
            (None, None) => degenerate += 1,
            (a, b) => return Err(format!("case {case}: definedness differs ({a:?} vs {b:?})")),
        }
    }
    ensure!(
        ties > 0 && degenerate > 0,
        "fuzzer produced no ties or no degenerate masks"
    );
    Ok(format!(
        "1000 cases, {ties} with ties, {degenerate} degenerate, max error {worst:.1e}"
    ))
}

pub fn auroc_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 200 {
        let (pred, gt) = random_case(&mut rng);
        if gt.is_degenerate() {
            continue;
        }
        let c = rng.random::<f64>();
        let constant = PixelMap::filled(gt.width(), gt.height(), c).unwrap();
        let v = auroc(&constant, &gt).unwrap().value;
        ensure!(v == Some(0.5), "constant {c} gave {v:?}");
        let v = auroc(&gt.to_map::<f64>(), &gt).unwrap().value;
        ensure!(v == Some(1.0), "pred == gt gave {v:?}");
        let a = auroc(&pred, &gt).unwrap().value.unwrap();
        let b = auroc(&pred.inverted(), &gt).unwrap().value.unwrap();
        ensure!((a + b - 1.0).abs() <= AUROC_TOL, "complement: {a} + {b} != 1");
        checked += 1;
    }
    Ok("200 fuzzed cases".into())
}

pub fn mean_recall_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 200 {
        let (w, h) = (rng.random_range(2..=16u32), rng.random_range(2..=16u32));
        let gt = rasterize_boxes(&[random_box(&mut rng, w, h)], w, h).unwrap();
        let n = rng.random_range(1..=7);
        let rasters: Vec<TamperMask> = (0..n)
            .map(|_| {
                let boxes: Vec<_> = (0..rng.random_range(1..=3))
                    .map(|_| random_box(&mut rng, w, h))
                    .collect();
                rasterize_boxes(&boxes, w, h).unwrap()
            })
            .collect();
        let avg = PixelMap::from_fn(w, h, |x, y| {
            rasters.iter().filter(|r| r.get(x, y)).count() as f64 / n as f64
        })
        .unwrap();
        let lhs = mean_recall(&avg, &gt).unwrap().value.unwrap();
        // Independent per-raster recall: covered positives / positives.
        let positives = gt.bits().iter().filter(|&&b| b).count() as f64;
        let rhs = rasters
            .iter()
            .map(|r| r.bits().iter().zip(gt.bits()).filter(|(&a, &g)| a && g).count() as f64 / positives)
            .sum::<f64>()
            / n as f64;
        ensure!((lhs - rhs).abs() <= RECALL_TOL, "n={n}: {lhs} vs {rhs}");
        checked += 1;
    }
    Ok("200 fuzzed raster sets".into())
}

fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BoundingBox {
    let x = rng.random_range(0..w) as i64;
    let y = rng.random_range(0..h) as i64;
    BoundingBox::new(x, y, rng.random_range(1..=w), rng.random_range(1..=h))
}

/// Bin by the printed group labels: "< .2", ".2 - .4", ..., "> .8".
fn label_bin(s: f64) -> usize {
    [0.2, 0.4, 0.6, 0.8].iter().take_while(|&&edge| s >= edge).count() + 1
}

pub fn bin_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let edges = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let specials = edges.iter().flat_map(|&e: &f64| {
        [
            e,
            f64::from_bits(e.to_bits().saturating_sub(1)),
            f64::from_bits(e.to_bits() + 1),
        ]
    });
    let scores: Vec<f64> = specials
        .filter(|s| (0.0..=1.0).contains(s))
        .chain((0..1_000_000).map(|_| rng.random::<f64>()))
        .collect();
    for &s in &scores {
        let holders: Vec<_> = SaliencyBin::ALL.iter().filter(|b| b.contains(s)).collect();
        ensure!(holders.len() == 1, "{s} lies in {} groups", holders.len());
        let bin = assign_bin(s).map_err(|e| e.to_string())?;
        ensure!(*holders[0] == bin, "{s}: assign_bin disagrees with containment");
        ensure!(
            bin.index() == label_bin(s),
            "{s}: bin {} but label says {}",
            bin.index(),
            label_bin(s)
        );
    }
    for (s, want) in [(0.0, 1), (0.2, 2), (1.0, 5)] {
        let got = assign_bin(s).unwrap().index();
        ensure!(got == want, "{s} -> bin {got}, expected {want}");
    }
    ensure!(
        assign_bin(1.0 + 1e-9).is_err() && assign_bin(-1e-9).is_err(),
        "out-of-range score accepted"
    );
    let labels: Vec<_> = SaliencyBin::ALL.iter().map(|b| b.label()).collect();
    ensure!(
        labels == ["< .2", ".2 - .4", ".4 - .6", ".6 - .8", "> .8"],
        "labels {labels:?}"
    );
    Ok(format!("{} scores", scores.len()))
}

fn trial(entries: &[(&str, f64)]) -> TagTrial<f64> {
    TagTrial::new(1, entries.iter().map(|(t, p)| (t.to_string(), *p)).collect()).unwrap()
}

/// Set/sum oracle over the two top-5 lists.
fn semantic_oracle(p: &[(String, f64)], t: &[(String, f64)]) -> [f64; 4] {
    let top = |x: &[(String, f64)]| -> Vec<String> {
        let mut v = x.to_vec();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        v.into_iter().take(5).map(|(s, _)| s).collect()
    };
    let (tp, tt) = (top(p), top(t));
    let sp: HashSet<_> = tp.iter().collect();
    let st: HashSet<_> = tt.iter().collect();
    let inter = sp.intersection(&st).count() as f64;
    let union = sp.union(&st).count() as f64;
    let prob = |x: &[(String, f64)], tag: &str| x.iter().find(|(s, _)| s == tag).map_or(0.0, |e| e.1);
    let change = tp.iter().map(|tag| (prob(p, tag) - prob(t, tag)).abs()).sum();
    [(tp[0] == tt[0]) as u8 as f64, inter / 5.0, inter / union, change]
}

fn close(a: [f64; 4], b: [f64; 4]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= SEMANTIC_TOL)
}

pub fn semantic_suite() -> Outcome {
    let p = trial(&[
        ("dog", 0.30),
        ("grass", 0.20),
        ("park", 0.15),
        ("ball", 0.10),
        ("tree", 0.05),
    ]);
    let same = trial_metrics(&p, &p).unwrap().components();
    ensure!(same == [1.0, 1.0, 1.0, 0.0], "identity gave {same:?}");

    let other = trial(&[("a", 0.5), ("b", 0.4), ("c", 0.3), ("d", 0.2), ("e", 0.1)]);
    let disjoint = trial_metrics(&p, &other).unwrap().components();
    ensure!(close(disjoint, [0.0, 0.0, 0.0, 0.80]), "disjoint gave {disjoint:?}");

    let t = trial(&[
        ("dog", 0.25),
        ("car", 0.12),
        ("grass", 0.10),
        ("road", 0.08),
        ("sky", 0.07),
    ]);
    let worked = trial_metrics(&p, &t).unwrap().components();
    ensure!(close(worked, [1.0, 0.4, 0.25, 0.45]), "worked example gave {worked:?}");
    ensure!(
        close(worked, semantic_oracle(p.entries(), t.entries())),
        "oracle disagrees on worked example"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let vocab: Vec<String> = (0..14).map(|i| format!("noun{i}")).collect();
    let random_trial = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(5..=10);
        let mut tags: Vec<&String> = vocab.iter().collect();
        for i in 0..len {
            let j = rng.random_range(i..tags.len());
            tags.swap(i, j);
        }
        let mut probs: Vec<f64> = (0..len).map(|_| (rng.random_range(0..20) as f64) / 20.0).collect();
        probs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        TagTrial::new(1, tags[..len].iter().map(|t| t.to_string()).zip(probs).collect()).unwrap()
    };
    for case in 0..10_000 {
        let (a, b) = (random_trial(&mut rng), random_trial(&mut rng));
        let m = trial_metrics(&a, &b).unwrap().components();
        ensure!(
            m[2] <= m[1] + SEMANTIC_TOL,
            "case {case}: iou {} > overlap {}",
            m[2],
            m[1]
        );
        let o = semantic_oracle(a.entries(), b.entries());
        ensure!(close(m, o), "case {case}: {m:?} vs oracle {o:?}");
    }
    Ok("fixed pairs plus 10000 fuzzed pairs".into())
}
