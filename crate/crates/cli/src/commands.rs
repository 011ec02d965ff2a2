//! Subcommand implementations. Everything is written below `--out`:
//!
//! ```text
//! assignments.csv                  score-saliency
//! fused/<id>.png                   score-saliency (machine-fused)
//! human/<task>/<id>.png            score-saliency (human-study), aggregate-annotations
//! runs/<detector>__<condition>.csv eval-detector
//! semantic.csv                     semantic-change
//! report/*.{csv,txt,json}          bin, enhance-compare, aggregate-annotations, report
//! study/<study-id>.jsonl           serve-study
//! ```
//!
//! Every map gets a `.prov.toml` sidecar.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use salbias_core::corpus::{write_provenance, Provenance};
use salbias_core::emit::{self, Cell, Format, ReportHeader, Table};
use salbias_core::report::{BinReport, DeltaTable, SemanticTrend};
use salbias_core::saliency::{saliency_score, SaliencySource, BIN_COUNT};
use salbias_core::semantic::load_tag_report;
use salbias_core::tables;
use salbias_core::{
    aggregate_responses, align, bin_distribution, bin_means, enhancement_delta, evaluate_run, fuse_saliency,
    human_detection_score, human_saliency_score, save_map, semantic_trend, ArtifactKind, BitDepth, Condition, Corpus,
    DetectorRun, Error, ImageRecord, Resample, SaliencyAssignment, SemanticChange, StudyResponse, Task,
};
use salbias_study::{Event, StudyConfig, StudyServer, StudyService};

use crate::args::{Command, Common, SourceArg, TaskArg};
use crate::error::{CliError, Result};

type S = f64;

pub struct Context {
    pub corpus: Corpus,
    pub out: PathBuf,
    pub exclude: HashSet<String>,
    pub seed: u64,
    pub format: Format,
}

impl Context {
    pub fn new(common: &Common) -> Result<Self> {
        if common.bins != BIN_COUNT {
            return Err(CliError::BadFlag(format!(
                "--bins {} is not supported; the grouping is fixed at {BIN_COUNT}",
                common.bins
            )));
        }
        let manifest = common
            .manifest
            .as_ref()
            .ok_or_else(|| CliError::BadFlag("--manifest is required".into()))?;
        let corpus = salbias_core::load_manifest(manifest)?;
        let exclude = match &common.exclude {
            Some(p) => read_exclusions(p, &corpus)?,
            None => HashSet::new(),
        };
        Ok(Self {
            corpus,
            out: common.out.clone(),
            exclude,
            seed: common.seed,
            format: common.format.into(),
        })
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    fn included(&self) -> impl Iterator<Item = &ImageRecord> {
        self.corpus.records().iter().filter(|r| !self.exclude.contains(&r.id))
    }

    fn header(&self) -> ReportHeader {
        ReportHeader::new(self.corpus.fingerprint())
    }

    fn assignments(&self) -> Result<Vec<SaliencyAssignment<S>>> {
        let path = self.path("assignments.csv");
        if !path.exists() {
            if self.corpus.is_empty() {
                return Ok(Vec::new());
            }
            return Err(CliError::MissingInput {
                path,
                hint: "run `salbias score-saliency` first".into(),
            });
        }
        Ok(tables::read_assignments(&path)?)
    }

    fn emit(&self, tables: &[Table]) -> Result<Vec<PathBuf>> {
        Ok(emit::emit_report(
            tables,
            &self.header(),
            self.format,
            &self.path("report"),
        )?)
    }

    fn datasets(&self) -> Vec<String> {
        self.corpus.datasets().iter().map(|d| d.name().to_string()).collect()
    }

    fn dataset_of(&self, image_id: &str) -> Option<&str> {
        self.corpus.get(image_id).map(|r| r.dataset.name())
    }
}

fn read_exclusions(path: &Path, corpus: &Corpus) -> Result<HashSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput {
        path: path.to_path_buf(),
        hint: "exclusion list not readable".into(),
    })?;
    let ids: HashSet<String> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    for id in &ids {
        if corpus.contains(id) {
            log::info!("excluding `{id}`");
        } else {
            log::warn!("exclusion list names unknown image `{id}`");
        }
    }
    Ok(ids)
}

/// Collects per-image results in corpus order; the first failure wins.
fn in_order<T: Send>(records: &[&ImageRecord], f: impl Fn(&ImageRecord) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = records.par_iter().map(|r| f(r)).collect();
    results.into_iter().collect()
}

fn file_stem(image_id: &str) -> String {
    image_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn save_with_provenance(
    map: &salbias_core::PixelMap<S>,
    path: &Path,
    kind: &ArtifactKind,
    inputs: &[PathBuf],
) -> Result<()> {
    save_map(map, path, BitDepth::Sixteen)?;
    write_provenance(path, &Provenance::for_inputs(kind, inputs)?)?;
    Ok(())
}

fn say(line: impl AsRef<str>) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", line.as_ref());
}

fn report_paths(paths: &[PathBuf]) {
    for p in paths {
        say(format!("wrote {}", p.display()));
    }
}

pub fn run(command: Command, common: &Common) -> Result<()> {
    if let Command::ServeStudy {
        study_id,
        images_per_session,
        target_reviews,
        journal,
        listen,
    } = command
    {
        let ctx = Context::new(common)?;
        return serve_study(&ctx, study_id, images_per_session, target_reviews, journal, listen);
    }
    let ctx = Context::new(common)?;
    match command {
        Command::ScoreSaliency { source, responses } => score_saliency(&ctx, source, responses.as_deref()),
        Command::Bin => bin(&ctx),
        Command::EvalDetector {
            detector,
            condition,
            artifact,
        } => eval_detector(&ctx, &detector, condition.into(), artifact.as_deref()),
        Command::EnhanceCompare {
            detector,
            before,
            after,
        } => enhance_compare(&ctx, &detector, before.into(), after.into()),
        Command::SemanticChange => semantic_change(&ctx),
        Command::AggregateAnnotations { responses, task } => aggregate_annotations(&ctx, &responses, task),
        Command::Report => report(&ctx),
        Command::ServeStudy { .. } => unreachable!(),
    }
}

fn score_saliency(ctx: &Context, source: SourceArg, responses: Option<&Path>) -> Result<()> {
    let records: Vec<&ImageRecord> = ctx.included().collect();
    let scored: Vec<Option<SaliencyAssignment<S>>> = match source {
        SourceArg::MachineFused => in_order(&records, |r| {
            let inputs: Vec<PathBuf> = r.saliency_maps().map(|(_, p)| p.to_path_buf()).collect();
            if inputs.is_empty() {
                return Err(Error::MissingArtifact {
                    image_id: r.id.clone(),
                    kind: "saliency-map-*".into(),
                }
                .into());
            }
            let gt = r.load_mask()?;
            let maps = inputs
                .iter()
                .map(|p| {
                    Ok(align(
                        &salbias_core::load_map::<S>(p)?,
                        gt.width(),
                        gt.height(),
                        Resample::Soft,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?;
            let fused = fuse_saliency(&maps)?;
            let out = ctx.path("fused").join(format!("{}.png", file_stem(&r.id)));
            save_with_provenance(&fused, &out, &ArtifactKind::FusedSaliency, &inputs)?;
            assignment(r, saliency_score(&fused, &gt)?.value, SaliencySource::MachineFused)
        })?,
        SourceArg::HumanStudy => {
            let path = responses.ok_or_else(|| CliError::BadFlag("--source human-study needs --responses".into()))?;
            let by_image = read_responses(path, &ctx.corpus)?;
            let with_responses: Vec<&ImageRecord> = records
                .iter()
                .copied()
                .filter(|r| {
                    let has = by_image.contains_key(&r.id);
                    if !has {
                        log::warn!("`{}` has no study responses; not scored", r.id);
                    }
                    has
                })
                .collect();
            in_order(&with_responses, |r| {
                let resp = &by_image[&r.id];
                let gt = r.load_mask()?;
                let agg = aggregate_responses::<S>(resp, Task::Saliency, gt.width(), gt.height())?;
                let out = ctx.path("human/saliency").join(format!("{}.png", file_stem(&r.id)));
                save_with_provenance(&agg.map, &out, &ArtifactKind::HumanSaliency, &[path.to_path_buf()])?;
                assignment(
                    r,
                    human_saliency_score::<S>(resp, &gt)?.value,
                    SaliencySource::HumanStudy,
                )
            })?
        }
    };
    let assignments: Vec<_> = scored.into_iter().flatten().collect();
    let path = ctx.path("assignments.csv");
    tables::write_assignments(&path, &assignments)?;
    say(format!("wrote {} ({} images)", path.display(), assignments.len()));
    Ok(())
}

fn assignment(r: &ImageRecord, score: Option<S>, source: SaliencySource) -> Result<Option<SaliencyAssignment<S>>> {
    match score {
        Some(s) => Ok(Some(SaliencyAssignment::new(&r.id, s, source)?)),
        None => {
            log::warn!("`{}` has an empty tamper mask; no saliency score", r.id);
            Ok(None)
        }
    }
}

/// Reads study responses: one JSON object per line, either a bare response
/// record or a study journal line (only stored responses are used).
pub fn read_responses(path: &Path, corpus: &Corpus) -> Result<BTreeMap<String, Vec<StudyResponse>>> {
    let file = std::fs::File::open(path).map_err(|_| CliError::MissingInput {
        path: path.to_path_buf(),
        hint: "responses file not readable".into(),
    })?;
    let mut out: BTreeMap<String, Vec<StudyResponse>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::Server)?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |m: String| {
            CliError::Core(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: m,
            })
        };
        let response = match serde_json::from_str::<Event>(&line) {
            Ok(Event::ResponseStored { response }) => response,
            Ok(_) => continue,
            Err(_) => serde_json::from_str::<StudyResponse>(&line).map_err(|e| parse_err(e.to_string()))?,
        };
        let record = corpus
            .get(&response.image_id)
            .ok_or_else(|| parse_err(format!("unknown image `{}`", response.image_id)))?;
        response
            .validate(record.width, record.height)
            .map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert((
            response.session_id.clone(),
            response.participant_id.clone(),
            response.image_id.clone(),
        )) {
            log::warn!("{}:{}: duplicate response ignored", path.display(), i + 1);
            continue;
        }
        out.entry(response.image_id.clone()).or_default().push(response);
    }
    Ok(out)
}

fn bin(ctx: &Context) -> Result<()> {
    let assignments = ctx.assignments()?;
    let mut by_dataset: BTreeMap<String, Vec<SaliencyAssignment<S>>> = BTreeMap::new();
    for a in assignments {
        match ctx.dataset_of(&a.image_id) {
            Some(d) => by_dataset.entry(d.to_string()).or_default().push(a),
            None => log::warn!("assignment for unknown image `{}` ignored", a.image_id),
        }
    }
    let dists: Vec<_> = ctx
        .datasets()
        .into_iter()
        .filter_map(|d| by_dataset.get(&d).map(|a| (d.clone(), bin_distribution(a))))
        .collect();
    report_paths(&ctx.emit(&[emit::distribution_table(&dists)])?);
    Ok(())
}

fn heatmap_kind(detector: &str, condition: Condition, artifact: Option<&str>) -> Result<ArtifactKind> {
    let key = match artifact {
        Some(a) => a.to_string(),
        None if condition == Condition::Original => format!("detector-heatmap:{detector}"),
        None => format!("detector-heatmap:{detector}@{condition}"),
    };
    key.parse().map_err(CliError::BadFlag)
}

fn eval_detector(ctx: &Context, detector: &str, condition: Condition, artifact: Option<&str>) -> Result<()> {
    if detector.is_empty() || detector.contains(['/', '\\']) || detector.contains("__") {
        return Err(CliError::BadFlag(format!("invalid detector name `{detector}`")));
    }
    let kind = heatmap_kind(detector, condition, artifact)?;
    let assignments = ctx.assignments()?;
    let mut run = evaluate_run(&ctx.corpus, &assignments, &kind, condition, &ctx.exclude)?;
    run.detector_name = detector.to_string();
    let path = ctx.path("runs").join(tables::run_file_name(detector, condition));
    tables::write_run(&path, &run)?;
    let undefined = run.scores.iter().filter(|s| s.result.is_undefined()).count();
    say(format!(
        "wrote {} ({} images, {undefined} undefined, {} excluded)",
        path.display(),
        run.scores.len(),
        run.excluded.len()
    ));
    Ok(())
}

/// Restricts a run to one dataset.
fn split_run(ctx: &Context, run: &DetectorRun<S>, dataset: &str) -> DetectorRun<S> {
    let keep = |id: &str| ctx.dataset_of(id) == Some(dataset);
    DetectorRun {
        detector_name: run.detector_name.clone(),
        condition: run.condition,
        scores: run.scores.iter().filter(|s| keep(&s.image_id)).cloned().collect(),
        excluded: run.excluded.iter().filter(|id| keep(id)).cloned().collect(),
    }
}

fn load_runs(ctx: &Context) -> Result<Vec<DetectorRun<S>>> {
    let dir = ctx.path("runs");
    let mut files: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect(),
        Err(_) => Vec::new(),
    };
    files.sort();
    let runs = files
        .iter()
        .map(|p| tables::read_run::<S>(p))
        .collect::<salbias_core::Result<Vec<_>>>()?;
    for run in &runs {
        if let Some(s) = run.scores.iter().find(|s| !ctx.corpus.contains(&s.image_id)) {
            log::warn!(
                "{}/{} scores `{}`, which is not in the manifest",
                run.detector_name,
                run.condition,
                s.image_id
            );
        }
    }
    Ok(runs)
}

fn read_run_file(ctx: &Context, detector: &str, condition: Condition) -> Result<DetectorRun<S>> {
    let path = ctx.path("runs").join(tables::run_file_name(detector, condition));
    if !path.exists() {
        return Err(CliError::MissingInput {
            path,
            hint: format!("run `salbias eval-detector --detector {detector} --condition {condition}`"),
        });
    }
    Ok(tables::read_run(&path)?)
}

fn enhance_compare(ctx: &Context, detectors: &[String], before: Condition, after: Condition) -> Result<()> {
    let detectors: Vec<String> = if detectors.is_empty() {
        let runs = load_runs(ctx)?;
        let with = |c: Condition| -> BTreeSet<String> {
            runs.iter()
                .filter(|r| r.condition == c)
                .map(|r| r.detector_name.clone())
                .collect()
        };
        with(before).intersection(&with(after)).cloned().collect()
    } else {
        detectors.to_vec()
    };
    if detectors.is_empty() {
        return Err(CliError::MissingInput {
            path: ctx.path("runs"),
            hint: format!("no detector has both `{before}` and `{after}` runs"),
        });
    }
    let assignments = ctx.assignments()?;
    let mut deltas: Vec<(String, DeltaTable<S>)> = Vec::new();
    for d in &detectors {
        let b = read_run_file(ctx, d, before)?;
        let a = read_run_file(ctx, d, after)?;
        for dataset in ctx.datasets() {
            let (bs, as_) = (split_run(ctx, &b, &dataset), split_run(ctx, &a, &dataset));
            if bs.scores.is_empty() && as_.scores.is_empty() {
                continue;
            }
            let table = enhancement_delta(&bs, &as_, &assignments)?;
            if let Some(shrank) = table.variation_shrank() {
                log::info!(
                    "{dataset}/{d}: variation {}",
                    if shrank { "shrank" } else { "did not shrink" }
                );
            }
            deltas.push((dataset, table));
        }
    }
    report_paths(&ctx.emit(&[emit::delta_table(&deltas)])?);
    Ok(())
}

fn semantic_change(ctx: &Context) -> Result<()> {
    let records: Vec<&ImageRecord> = ctx.included().collect();
    let results: Vec<(String, SemanticChange<S>)> = in_order(&records, |r| {
        let pristine = load_tag_report::<S>(r.artifact(&ArtifactKind::PristineTags)?)?;
        let tampered = load_tag_report::<S>(r.artifact(&ArtifactKind::TamperedTags)?)?;
        if pristine.image_id != r.id {
            return Err(Error::ImageIdMismatch(r.id.clone(), pristine.image_id).into());
        }
        Ok((r.id.clone(), salbias_core::aggregate_semantic(&pristine, &tampered)?))
    })?;
    let path = ctx.path("semantic.csv");
    tables::write_semantic_results(&path, &results)?;
    say(format!("wrote {} ({} images)", path.display(), results.len()));
    Ok(())
}

fn aggregate_annotations(ctx: &Context, responses: &Path, task: TaskArg) -> Result<()> {
    let by_image = read_responses(responses, &ctx.corpus)?;
    let tasks: &[Task] = match task {
        TaskArg::Saliency => &[Task::Saliency],
        TaskArg::Manipulation => &[Task::Manipulation],
        TaskArg::Both => &[Task::Saliency, Task::Manipulation],
    };
    let records: Vec<&ImageRecord> = ctx.included().filter(|r| by_image.contains_key(&r.id)).collect();
    let rows = in_order(&records, |r| {
        let resp = &by_image[&r.id];
        let gt = r.load_mask()?;
        for &t in tasks {
            let (dir, kind) = match t {
                Task::Saliency => ("saliency", ArtifactKind::HumanSaliency),
                Task::Manipulation => ("manipulation", ArtifactKind::HumanPrediction),
            };
            let agg = aggregate_responses::<S>(resp, t, gt.width(), gt.height())?;
            let out = ctx.path("human").join(dir).join(format!("{}.png", file_stem(&r.id)));
            save_with_provenance(&agg.map, &out, &kind, &[responses.to_path_buf()])?;
        }
        Ok(vec![
            Cell::text(r.dataset.name()),
            Cell::text(&r.id),
            Cell::Int(resp.len()),
            Cell::num(human_saliency_score::<S>(resp, &gt)?.value),
            Cell::num(human_detection_score::<S>(resp, &gt)?.value),
        ])
    })?;
    let mut table = Table::new(
        "human_scores",
        &[
            "dataset",
            "image_id",
            "respondents",
            "saliency_mean_recall",
            "detection_auroc",
        ],
    );
    for row in rows {
        table.push(row);
    }
    report_paths(&ctx.emit(&[table])?);
    Ok(())
}

fn report(ctx: &Context) -> Result<()> {
    let assignments = ctx.assignments()?;
    let datasets = ctx.datasets();
    let mut tables = Vec::new();

    let dists: Vec<_> = datasets
        .iter()
        .map(|d| {
            let a: Vec<_> = assignments
                .iter()
                .filter(|a| ctx.dataset_of(&a.image_id) == Some(d))
                .cloned()
                .collect();
            (d.clone(), bin_distribution(&a))
        })
        .filter(|(_, dist)| dist.total() > 0)
        .collect();
    tables.push(emit::distribution_table(&dists));

    let mut reports: Vec<(String, BinReport<S>)> = Vec::new();
    for run in load_runs(ctx)? {
        for d in &datasets {
            let part = split_run(ctx, &run, d);
            if part.scores.is_empty() && part.excluded.is_empty() {
                continue;
            }
            reports.push((d.clone(), bin_means(&part, &assignments)));
        }
    }
    tables.push(emit::detection_table(&reports));
    tables.push(emit::detection_plot(&reports));

    let semantic_path = ctx.path("semantic.csv");
    if semantic_path.exists() {
        let results = tables::read_semantic_results::<S>(&semantic_path)?;
        let trends: Vec<(String, SemanticTrend<S>)> = datasets
            .iter()
            .map(|d| {
                let part: Vec<_> = results
                    .iter()
                    .filter(|(id, _)| ctx.dataset_of(id) == Some(d))
                    .cloned()
                    .collect();
                (d.clone(), part)
            })
            .filter(|(_, part)| !part.is_empty())
            .map(|(d, part)| (d, semantic_trend(&assignments, &part)))
            .collect();
        tables.push(emit::semantic_table(&trends));
        tables.push(emit::semantic_trend_table(&trends));
        tables.push(emit::semantic_plot(&trends));
    }
    report_paths(&ctx.emit(&tables)?);
    Ok(())
}

fn serve_study(
    ctx: &Context,
    study_id: String,
    images_per_session: usize,
    target_reviews: usize,
    journal: Option<PathBuf>,
    listen: std::net::SocketAddr,
) -> Result<()> {
    let mut config = StudyConfig::from_corpus(&study_id, &ctx.corpus);
    config.images.retain(|img| !ctx.exclude.contains(&img.id));
    config.images_per_session = images_per_session;
    config.target_reviews_per_image = target_reviews;
    config.shuffle_seed = ctx.seed;
    let journal = journal.unwrap_or_else(|| ctx.path("study").join(format!("{}.jsonl", file_stem(&study_id))));

    let mut server = StudyServer::new();
    server.add_study(StudyService::open(config, &journal)?);
    for r in ctx.included() {
        server.add_image(&r.id, &r.image_path);
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        say(format!(
            "listening on http://{} (study `{study_id}`, journal {})",
            listener.local_addr()?,
            journal.display()
        ));
        salbias_study::serve(listener, Arc::new(server)).await?;
        Ok(())
    })
}
