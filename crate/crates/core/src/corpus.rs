//! Dataset manifests, map/mask loading and the on-disk artifact layout.
//!
//! A manifest is UTF-8 text with one image per line, written as
//! whitespace-separated `key=value` tokens:
//!
//! ```text
//! # id, image and mask are required; paths are relative to the manifest
//! id=rt-001 image=img/001.jpg mask=mask/001.png dataset=RT saliency-map-A=sal/u2/001.png
//! id=mfc-17 image=img/17.jpg mask=m/17a.png mask=m/17b.png dataset=MFC18 width=640 height=480
//! ```
//!
//! `mask` may repeat; all masks of one image are unioned. `width`/`height`
//! default to the first mask's dimensions. Any other key must name an
//! [`ArtifactKind`]. Values containing spaces may be double-quoted.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::map::{binarize_mask, PixelMap, TamperMask, DEFAULT_MASK_THRESHOLD};
use crate::scalar::Score;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Dataset {
    Rt,
    Mfc18,
    Imd2020,
    Custom(String),
}

impl Dataset {
    pub fn name(&self) -> &str {
        match self {
            Dataset::Rt => "RT",
            Dataset::Mfc18 => "MFC18",
            Dataset::Imd2020 => "IMD2020",
            Dataset::Custom(name) => name,
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "RT" => Dataset::Rt,
            "MFC18" => Dataset::Mfc18,
            "IMD2020" => Dataset::Imd2020,
            _ if s.is_empty() => return Err("empty dataset name".into()),
            _ => Dataset::Custom(s.to_string()),
        })
    }
}

/// Kinds of derived per-image artifacts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArtifactKind {
    /// One machine saliency map; the manifest key is `saliency-map-<label>`.
    SaliencyMap(String),
    FusedSaliency,
    /// Detector output; the manifest key is `detector-heatmap:<name>`.
    DetectorHeatmap(String),
    EnhancedImage,
    PristineTags,
    TamperedTags,
    HumanSaliency,
    HumanPrediction,
}

impl ArtifactKind {
    pub fn detector(name: impl Into<String>) -> Self {
        ArtifactKind::DetectorHeatmap(name.into())
    }

    pub fn is_saliency_map(&self) -> bool {
        matches!(self, ArtifactKind::SaliencyMap(_))
    }

    /// File-name friendly form (`:` replaced by `_`).
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "_")
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArtifactKind::SaliencyMap(label) => write!(f, "saliency-map-{label}"),
            ArtifactKind::FusedSaliency => f.write_str("fused-saliency"),
            ArtifactKind::DetectorHeatmap(name) => write!(f, "detector-heatmap:{name}"),
            ArtifactKind::EnhancedImage => f.write_str("enhanced-image"),
            ArtifactKind::PristineTags => f.write_str("pristine-tags"),
            ArtifactKind::TamperedTags => f.write_str("tampered-tags"),
            ArtifactKind::HumanSaliency => f.write_str("human-saliency"),
            ArtifactKind::HumanPrediction => f.write_str("human-prediction"),
        }
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let nonempty = |rest: &str| {
            if rest.is_empty() || rest.contains(char::is_whitespace) {
                Err(format!("invalid artifact kind `{s}`"))
            } else {
                Ok(rest.to_string())
            }
        };
        if let Some(label) = s.strip_prefix("saliency-map-") {
            return Ok(ArtifactKind::SaliencyMap(nonempty(label)?));
        }
        if let Some(name) = s.strip_prefix("detector-heatmap:") {
            return Ok(ArtifactKind::DetectorHeatmap(nonempty(name)?));
        }
        Ok(match s {
            "fused-saliency" => ArtifactKind::FusedSaliency,
            "enhanced-image" => ArtifactKind::EnhancedImage,
            "pristine-tags" => ArtifactKind::PristineTags,
            "tampered-tags" => ArtifactKind::TamperedTags,
            "human-saliency" => ArtifactKind::HumanSaliency,
            "human-prediction" => ArtifactKind::HumanPrediction,
            _ => return Err(format!("unknown artifact kind `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub image_path: PathBuf,
    /// One or more masks; several entries are unioned on load.
    pub mask_paths: Vec<PathBuf>,
    pub dataset: Dataset,
    pub width: u32,
    pub height: u32,
    pub derived: BTreeMap<ArtifactKind, PathBuf>,
}

impl ImageRecord {
    pub fn artifact(&self, kind: &ArtifactKind) -> Result<&Path> {
        self.derived
            .get(kind)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::MissingArtifact {
                image_id: self.id.clone(),
                kind: kind.to_string(),
            })
    }

    /// Saliency maps in label order.
    pub fn saliency_maps(&self) -> impl Iterator<Item = (&ArtifactKind, &Path)> {
        self.derived
            .iter()
            .filter(|(k, _)| k.is_saliency_map())
            .map(|(k, p)| (k, p.as_path()))
    }

    /// Loads, binarizes and unions the ground-truth masks. The result must
    /// match the record's declared dimensions.
    pub fn load_mask(&self) -> Result<TamperMask> {
        let mut merged: Option<TamperMask> = None;
        for path in &self.mask_paths {
            let map: PixelMap<f64> = load_map(path)?;
            let mask = binarize_mask(&map, DEFAULT_MASK_THRESHOLD);
            merged = Some(match merged {
                None => mask,
                Some(acc) => acc.union(&mask)?,
            });
        }
        let mask = merged.ok_or(Error::EmptyInput("record has no mask"))?;
        if mask.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                left_w: mask.width(),
                left_h: mask.height(),
                right_w: self.width,
                right_h: self.height,
            });
        }
        Ok(mask)
    }

    pub fn load_artifact_map<S: Score>(&self, kind: &ArtifactKind) -> Result<PixelMap<S>> {
        load_map(self.artifact(kind)?)
    }
}

/// Ordered, immutable collection of image records with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<ImageRecord>,
    index: HashMap<String, usize>,
    fingerprint: String,
}

impl Corpus {
    /// Builds a corpus from records; the fingerprint hashes the ids and paths.
    pub fn from_records(records: Vec<ImageRecord>) -> Result<Self> {
        let mut hasher = Sha256::new();
        for r in &records {
            hasher.update(format!("{r:?}\n").as_bytes());
        }
        Self::with_fingerprint(records, hex::encode(hasher.finalize()))
    }

    fn with_fingerprint(records: Vec<ImageRecord>, fingerprint: String) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(Error::InvalidMap("empty image id".into()));
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            records,
            index,
            fingerprint,
        })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// SHA-256 of the manifest bytes (or of the records for in-memory corpora).
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Datasets in order of first appearance.
    pub fn datasets(&self) -> Vec<Dataset> {
        let mut seen = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.dataset) {
                seen.push(r.dataset.clone());
            }
        }
        seen
    }
}

/// Parses a manifest file. Relative paths resolve against its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| {
        Error::parse(
            path,
            1 + line_of_offset(&bytes, e.utf8_error().valid_up_to()),
            "invalid UTF-8",
        )
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = parse_record(trimmed, &base).map_err(|m| Error::parse(path, line_no, m))?;
        let record = finish_record(record, path, line_no)?;
        if seen.insert(record.id.clone(), line_no).is_some() {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Corpus::with_fingerprint(records, hex::encode(Sha256::digest(&bytes)))
}

fn line_of_offset(bytes: &[u8], offset: usize) -> usize {
    bytes[..offset].iter().filter(|&&b| b == b'\n').count()
}

struct PartialRecord {
    id: String,
    image: PathBuf,
    masks: Vec<PathBuf>,
    dataset: Dataset,
    width: Option<u32>,
    height: Option<u32>,
    derived: BTreeMap<ArtifactKind, PathBuf>,
}

fn tokenize(line: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        if chars.next() != Some('=') {
            return Err(format!("expected `key=value`, found `{key}`"));
        }
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(c) => value.push(c),
                        None => return Err("dangling escape".into()),
                    },
                    Some(c) => value.push(c),
                    None => return Err(format!("unterminated quote in `{key}`")),
                }
            }
            if chars.peek().is_some_and(|c| !c.is_whitespace()) {
                return Err(format!("junk after quoted value of `{key}`"));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        if key.is_empty() {
            return Err("empty key".into());
        }
        if value.is_empty() {
            return Err(format!("empty value for `{key}`"));
        }
        out.push((key, value));
    }
    Ok(out)
}

fn parse_record(line: &str, base: &Path) -> std::result::Result<PartialRecord, String> {
    let mut id = None;
    let mut image = None;
    let mut masks = Vec::new();
    let mut dataset = None;
    let mut width = None;
    let mut height = None;
    let mut derived = BTreeMap::new();
    let resolve = |v: &str| base.join(v);
    fn set_once<T>(slot: &mut Option<T>, key: &str, v: T) -> std::result::Result<(), String> {
        if slot.replace(v).is_some() {
            return Err(format!("key `{key}` given twice"));
        }
        Ok(())
    }
    let dim = |key: &str, v: &str| -> std::result::Result<u32, String> {
        match v.parse::<u32>() {
            Ok(d) if d >= 1 => Ok(d),
            _ => Err(format!("`{key}` must be a positive integer, got `{v}`")),
        }
    };
    for (key, value) in tokenize(line)? {
        match key.as_str() {
            "id" => set_once(&mut id, "id", value)?,
            "image" => set_once(&mut image, "image", resolve(&value))?,
            "mask" => masks.push(resolve(&value)),
            "dataset" => set_once(&mut dataset, "dataset", value.parse::<Dataset>()?)?,
            "width" => set_once(&mut width, "width", dim("width", &value)?)?,
            "height" => set_once(&mut height, "height", dim("height", &value)?)?,
            other => {
                let kind: ArtifactKind = other.parse()?;
                if derived.insert(kind, resolve(&value)).is_some() {
                    return Err(format!("artifact `{other}` given twice"));
                }
            }
        }
    }
    let id = id.ok_or("missing `id`")?;
    let image = image.ok_or("missing `image`")?;
    if masks.is_empty() {
        return Err("missing `mask`".into());
    }
    Ok(PartialRecord {
        id,
        image,
        masks,
        dataset: dataset.unwrap_or(Dataset::Custom("custom".into())),
        width,
        height,
        derived,
    })
}

fn finish_record(p: PartialRecord, manifest: &Path, line: usize) -> Result<ImageRecord> {
    let (width, height) = match (p.width, p.height) {
        (Some(w), Some(h)) => (w, h),
        (None, None) => {
            let mask = &p.masks[0];
            if !mask.exists() {
                return Err(Error::MissingFile(mask.clone()));
            }
            image::image_dimensions(mask).map_err(|e| Error::Decode {
                path: mask.clone(),
                message: e.to_string(),
            })?
        }
        _ => {
            return Err(Error::parse(
                manifest,
                line,
                "`width` and `height` must be given together",
            ))
        }
    };
    Ok(ImageRecord {
        id: p.id,
        image_path: p.image,
        mask_paths: p.masks,
        dataset: p.dataset,
        width,
        height,
        derived: p.derived,
    })
}

/// Loads a single-channel 8- or 16-bit PNG; sample `s` maps to `s / max`.
pub fn load_map<S: Score>(path: impl AsRef<Path>) -> Result<PixelMap<S>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .map_err(|_| Error::UnsupportedFormat(format!("unrecognised image data in {}", path.display())))?;
    if format != ImageFormat::Png {
        return Err(Error::UnsupportedFormat(format!(
            "{} is {format:?}, maps must be PNG",
            path.display()
        )));
    }
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width(), decoded.height());
    let values: Vec<S> = match decoded {
        DynamicImage::ImageLuma8(img) => {
            let d = S::lit(u8::MAX as f64);
            img.into_raw().into_iter().map(|s| S::lit(s as f64) / d).collect()
        }
        DynamicImage::ImageLuma16(img) => {
            let d = S::lit(u16::MAX as f64);
            img.into_raw().into_iter().map(|s| S::lit(s as f64) / d).collect()
        }
        other => {
            let channels = other.color().channel_count();
            if channels > 1 {
                return Err(Error::MultiChannelInput {
                    path: path.to_path_buf(),
                    channels,
                });
            }
            return Err(Error::UnsupportedFormat(format!(
                "{}: color type {:?}",
                path.display(),
                other.color()
            )));
        }
    };
    PixelMap::new(w, h, values)
}

/// Sample depth used when writing maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// PNG bytes for a map, quantized to the nearest sample.
pub fn encode_map<S: Score>(map: &PixelMap<S>, depth: BitDepth) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    let (w, h) = map.dims();
    let result = match depth {
        BitDepth::Eight => {
            let raw = map
                .values()
                .iter()
                .map(|v| quantize(*v, u8::MAX as f64) as u8)
                .collect();
            let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(w, h, raw).expect("buffer sized from map");
            img.write_to(&mut out, ImageFormat::Png)
        }
        BitDepth::Sixteen => {
            let raw = map
                .values()
                .iter()
                .map(|v| quantize(*v, u16::MAX as f64) as u16)
                .collect();
            let img: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, raw).expect("buffer sized from map");
            img.write_to(&mut out, ImageFormat::Png)
        }
    };
    result.expect("in-memory PNG encoding");
    out.into_inner()
}

fn quantize<S: Score>(v: S, max: f64) -> f64 {
    (v.as_f64() * max).round().clamp(0.0, max)
}

pub fn save_map<S: Score>(map: &PixelMap<S>, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    write_file(path.as_ref(), &encode_map(map, depth))
}

pub fn save_mask(mask: &TamperMask, path: impl AsRef<Path>) -> Result<()> {
    save_map(&mask.to_map::<f64>(), path, BitDepth::Eight)
}

/// Writes bytes, creating parent directories. The file is written to a
/// temporary sibling and renamed so readers never see a partial artifact.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let unwritable = |source| Error::UnwritablePath {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(unwritable)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(unwritable)?;
    fs::rename(&tmp, path).map_err(unwritable)
}

/// Provenance sidecar stored next to each derived artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_kind: String,
    /// SHA-256 over the input files, in order.
    pub source_hash: String,
    pub tool: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn for_inputs<P: AsRef<Path>>(kind: &ArtifactKind, inputs: &[P]) -> Result<Self> {
        Ok(Self {
            artifact_kind: kind.to_string(),
            source_hash: hash_files(inputs)?,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".prov.toml");
    PathBuf::from(s)
}

pub fn write_provenance(artifact: &Path, provenance: &Provenance) -> Result<()> {
    let text = toml::to_string(provenance).expect("provenance serializes");
    write_file(&sidecar_path(artifact), text.as_bytes())
}

pub fn read_provenance(artifact: &Path) -> Result<Provenance> {
    let path = sidecar_path(artifact);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| {
        Error::parse(
            &path,
            e.span()
                .map(|s| line_of_offset(text.as_bytes(), s.start) + 1)
                .unwrap_or(1),
            e.message(),
        )
    })
}

pub fn hash_files<P: AsRef<Path>>(paths: &[P]) -> Result<String> {
    let mut hasher = Sha256::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        hasher.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(hasher.finalize()))
}
