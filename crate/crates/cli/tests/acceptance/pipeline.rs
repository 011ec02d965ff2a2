use std::collections::BTreeMap;
use std::path::Path;

use crate::common::{build, read_csv, run_ok, Spec};
use crate::{ensure, Outcome};

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn num(cell: &str) -> Result<f64, String> {
    cell.parse().map_err(|_| format!("not a number: `{cell}`"))
}

/// score-saliency -> bin -> eval-detector -> report, twice with different
/// worker counts.
pub fn monotone_trend() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(dir.path(), &Spec::default());
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("out-{jobs}"));
        for cmd in [
            &["score-saliency"][..],
            &["bin"],
            &["eval-detector", "--detector", "osn"],
            &["report"],
        ] {
            let mut args = cmd.to_vec();
            args.extend(["--jobs", jobs]);
            run_ok(&fx.manifest, &out, &args);
        }
        outputs.push(out);
    }

    let assignments = read_csv(&outputs[0].join("assignments.csv"));
    ensure!(assignments.len() == 50, "{} assignments", assignments.len());
    for (row, (id, _, bin)) in assignments.iter().zip(&fx.planted) {
        ensure!(
            &row[0] == id && row[2] == bin.to_string(),
            "{id} assigned to bin {}, planted {bin}",
            row[2]
        );
    }
    let dist = read_csv(&outputs[0].join("report/bin_distribution.csv"));
    ensure!(
        dist.iter().all(|r| r[3] == "10"),
        "group counts {:?}",
        dist.iter().map(|r| &r[3]).collect::<Vec<_>>()
    );

    let detection = read_csv(&outputs[0].join("report/detection.csv"));
    ensure!(detection.len() == 6, "{} detection rows", detection.len());
    let means = detection[..5]
        .iter()
        .map(|r| num(&r[6]))
        .collect::<Result<Vec<_>, _>>()?;
    ensure!(
        means.windows(2).all(|w| w[0] < w[1]),
        "per-group mean AuROC not strictly increasing: {means:?}"
    );

    let (a, b) = (
        files_under(&outputs[0].join("report")),
        files_under(&outputs[1].join("report")),
    );
    ensure!(!a.is_empty() && a == b, "reports differ between runs");
    ensure!(
        std::fs::read(outputs[0].join("runs/osn__original.csv")).unwrap()
            == std::fs::read(outputs[1].join("runs/osn__original.csv")).unwrap(),
        "run files differ between runs"
    );
    Ok(format!("group means {means:?}, {} report files identical", a.len()))
}

pub fn enhancement_delta() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(
        dir.path(),
        &Spec {
            enhanced: true,
            seed: 3,
            ..Spec::default()
        },
    );
    let out = dir.path().join("out");
    run_ok(&fx.manifest, &out, &["score-saliency"]);
    run_ok(&fx.manifest, &out, &["eval-detector", "--detector", "osn"]);
    run_ok(
        &fx.manifest,
        &out,
        &["eval-detector", "--detector", "osn", "--condition", "saliency-enhanced"],
    );
    run_ok(
        &fx.manifest,
        &out,
        &[
            "enhance-compare",
            "--before",
            "original",
            "--after",
            "saliency-enhanced",
        ],
    );

    let rows = read_csv(&out.join("report/enhancement_delta.csv"));
    ensure!(rows.len() == 6, "{} delta rows", rows.len());
    let deltas = rows[..5].iter().map(|r| num(&r[8])).collect::<Result<Vec<_>, _>>()?;
    for (i, d) in deltas.iter().enumerate() {
        let boosted = i < 2;
        ensure!((*d > 0.0) == boosted, "group {} delta {d} (boosted: {boosted})", i + 1);
    }
    let range = &rows[5];
    ensure!(range[4] == "range", "last row is `{}`", range[4]);
    let (before, after) = (num(&range[6])?, num(&range[7])?);
    ensure!(after < before, "variation did not shrink: {before} -> {after}");
    Ok(format!("deltas {deltas:?}, range {before} -> {after}"))
}
