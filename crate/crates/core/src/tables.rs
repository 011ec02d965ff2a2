//! CSV files passed between pipeline stages.
//!
//! These carry full-precision scores (shortest round-trip representation);
//! fixed-precision rounding is reserved for final reports.

use std::path::Path;

use crate::corpus::write_file;
use crate::error::{Error, Result};
use crate::metrics::MetricResult;
use crate::report::{Condition, DetectorRun, ImageScore};
use crate::saliency::{SaliencyAssignment, SaliencyBin};
use crate::scalar::Score;
use crate::semantic::SemanticChange;

const UNDEFINED: &str = "undefined";

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory csv")
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

fn expect_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(path, 1, format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(path, line, e.to_string())
}

fn parse_num<S: Score>(path: &Path, line: usize, field: &str) -> Result<S> {
    field
        .parse::<f64>()
        .map(S::lit)
        .map_err(|_| Error::parse(path, line, format!("bad number `{field}`")))
}

fn parse_count(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::parse(path, line, format!("bad count `{field}`")))
}

pub const ASSIGNMENT_COLUMNS: [&str; 4] = ["image_id", "score", "bin_index", "source"];

pub fn write_assignments<S: Score>(path: &Path, assignments: &[SaliencyAssignment<S>]) -> Result<()> {
    let mut w = writer();
    w.write_record(ASSIGNMENT_COLUMNS).expect("in-memory csv");
    for a in assignments {
        w.write_record([
            a.image_id.clone(),
            a.score.as_f64().to_string(),
            a.bin.index().to_string(),
            a.source.as_str().to_string(),
        ])
        .expect("in-memory csv");
    }
    write_file(path, &finish(w))
}

pub fn read_assignments<S: Score>(path: &Path) -> Result<Vec<SaliencyAssignment<S>>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &ASSIGNMENT_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let score: S = parse_num(path, line, &rec[1])?;
        let source = rec[3].parse().map_err(|m: String| Error::parse(path, line, m))?;
        let a = SaliencyAssignment::new(&rec[0], score, source).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let stated = parse_count(path, line, &rec[2])?;
        if SaliencyBin::from_index(stated) != Some(a.bin) {
            return Err(Error::parse(
                path,
                line,
                format!("bin_index {stated} disagrees with score {}", &rec[1]),
            ));
        }
        out.push(a);
    }
    Ok(out)
}

pub const RUN_COLUMNS: [&str; 6] = ["image_id", "detector", "condition", "auroc", "positives", "negatives"];

pub fn write_run<S: Score>(path: &Path, run: &DetectorRun<S>) -> Result<()> {
    let mut head = String::new();
    for id in &run.excluded {
        head.push_str(&format!("# excluded={id}\n"));
    }
    let mut w = writer();
    w.write_record(RUN_COLUMNS).expect("in-memory csv");
    for s in &run.scores {
        w.write_record([
            s.image_id.clone(),
            run.detector_name.clone(),
            run.condition.as_str().to_string(),
            s.result
                .value
                .map_or_else(|| UNDEFINED.to_string(), |v| v.as_f64().to_string()),
            s.result.positives.to_string(),
            s.result.negatives.to_string(),
        ])
        .expect("in-memory csv");
    }
    let mut bytes = head.into_bytes();
    bytes.extend(finish(w));
    write_file(path, &bytes)
}

/// Reads a run file. An empty run needs the detector/condition fallback.
pub fn read_run<S: Score>(path: &Path) -> Result<DetectorRun<S>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let excluded = text
        .lines()
        .filter_map(|l| l.strip_prefix("# excluded="))
        .map(str::to_string)
        .collect();
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &RUN_COLUMNS)?;
    let mut scores = Vec::new();
    let mut ident: Option<(String, Condition)> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let condition: Condition = rec[2].parse().map_err(|m: String| Error::parse(path, line, m))?;
        match &ident {
            None => ident = Some((rec[1].to_string(), condition)),
            Some((d, c)) if d == &rec[1] && *c == condition => {}
            Some(_) => {
                return Err(Error::parse(
                    path,
                    line,
                    "mixed detectors or conditions in one run file",
                ))
            }
        }
        let value = match &rec[3] {
            UNDEFINED => None,
            v => Some(parse_num::<S>(path, line, v)?),
        };
        scores.push(ImageScore {
            image_id: rec[0].to_string(),
            result: MetricResult {
                value,
                positives: parse_count(path, line, &rec[4])?,
                negatives: parse_count(path, line, &rec[5])?,
            },
        });
    }
    let (detector_name, condition) = match ident {
        Some(i) => i,
        None => run_ident_from_name(path)?,
    };
    Ok(DetectorRun {
        detector_name,
        condition,
        scores,
        excluded,
    })
}

/// Run files are named `<detector>__<condition>.csv`.
pub fn run_file_name(detector: &str, condition: Condition) -> String {
    format!("{detector}__{}.csv", condition.as_str())
}

fn run_ident_from_name(path: &Path) -> Result<(String, Condition)> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let (d, c) = stem
        .rsplit_once("__")
        .ok_or_else(|| Error::parse(path, 1, "cannot infer detector/condition of empty run"))?;
    let c = c.parse().map_err(|m: String| Error::parse(path, 1, m))?;
    Ok((d.to_string(), c))
}

pub const SEMANTIC_RESULT_COLUMNS: [&str; 5] = [
    "image_id",
    "top1_overlap",
    "top5_overlap",
    "top5_iou",
    "top5_prob_change",
];

pub fn write_semantic_results<S: Score>(path: &Path, results: &[(String, SemanticChange<S>)]) -> Result<()> {
    let mut w = writer();
    w.write_record(SEMANTIC_RESULT_COLUMNS).expect("in-memory csv");
    for (id, m) in results {
        let mut row = vec![id.clone()];
        row.extend(m.components().iter().map(|c| c.as_f64().to_string()));
        w.write_record(row).expect("in-memory csv");
    }
    write_file(path, &finish(w))
}

pub fn read_semantic_results<S: Score>(path: &Path) -> Result<Vec<(String, SemanticChange<S>)>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &SEMANTIC_RESULT_COLUMNS)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut c = [S::zero(); 4];
        for (i, slot) in c.iter_mut().enumerate() {
            *slot = parse_num(path, line, &rec[i + 1])?;
        }
        out.push((rec[0].to_string(), SemanticChange::from_components(c)));
    }
    Ok(out)
}
