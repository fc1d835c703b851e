//! Embedding vectors and the line-oriented embedding file format.
//!
//! ```text
//! dim=<D> kind=<class|clip|frame>
//! <label_id>\t<v1> <v2> ... <vD>                          (class)
//! <clip_id>\t<timestamp>\t<ground_truth or ->\t<v1> ... <vD>   (clip, frame)
//! ```
//!
//! Files carry raw 32-bit values exactly as written by the extractor; they
//! are normalized on load with 64-bit accumulation. Writers emit the raw
//! values again, so reading and re-writing a canonical file is lossless.
//! A `frame` file holds several records per clip (consecutive lines with
//! the same clip id); they are mean-pooled into one clip embedding.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::schedule::{format_timestamp, parse_timestamp, Timestamp};

const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(EmbeddingVector {
            values,
            normalized: false,
        })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy. Already-normalized vectors are returned unchanged.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let norm = self.norm();
        if norm.is_nan() || norm < ZERO_NORM {
            return Err(Error::ZeroNorm);
        }
        Ok(EmbeddingVector {
            values: self.values.iter().map(|v| v / norm).collect(),
            normalized: true,
        })
    }

    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Componentwise mean of the frames, renormalized.
pub fn mean_pool(frames: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = frames.first().ok_or(Error::EmptyInput("frame list"))?;
    let mut sum = vec![0.0f64; first.dim()];
    for frame in frames {
        check_dim(first.dim(), frame.dim())?;
        for (acc, v) in sum.iter_mut().zip(&frame.values) {
            *acc += v;
        }
    }
    let n = frames.len() as f64;
    EmbeddingVector::new(sum.into_iter().map(|v| v / n).collect())?.normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Class,
    Clip,
    Frame,
}

impl FromStr for FileKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "class" => Ok(FileKind::Class),
            "clip" => Ok(FileKind::Clip),
            "frame" => Ok(FileKind::Frame),
            other => Err(format!("unknown kind `{other}`")),
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileKind::Class => "class",
            FileKind::Clip => "clip",
            FileKind::Frame => "frame",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub dim: usize,
    pub kind: FileKind,
}

impl Header {
    fn parse(line: &str) -> Result<Self> {
        let mut dim = None;
        let mut kind = None;
        for field in line.split_whitespace() {
            match field.split_once('=') {
                Some(("dim", v)) => {
                    let d: usize = v
                        .parse()
                        .map_err(|_| Error::at(1, format!("invalid dim `{v}`")))?;
                    if d == 0 {
                        return Err(Error::at(1, "dim must be at least 1"));
                    }
                    dim = Some(d);
                }
                Some(("kind", v)) => kind = Some(v.parse().map_err(|e: String| Error::at(1, e))?),
                _ => return Err(Error::at(1, format!("unexpected header field `{field}`"))),
            }
        }
        match (dim, kind) {
            (Some(dim), Some(kind)) => Ok(Header { dim, kind }),
            _ => Err(Error::at(
                1,
                "header must be `dim=<D> kind=<class|clip|frame>`",
            )),
        }
    }
}

impl fmt::Display for Header {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dim={} kind={}", self.dim, self.kind)
    }
}

/// Numbered non-blank record lines.
type Records<'a> = Vec<(usize, &'a str)>;

/// Splits a document into its header and record lines.
fn split_document(document: &str) -> Result<Option<(Header, Records<'_>)>> {
    let mut lines = document
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(None);
    };
    Ok(Some((Header::parse(header)?, lines.collect())))
}

fn parse_values(line: usize, text: &str, dim: usize) -> Result<Vec<f32>> {
    let values = text
        .split_whitespace()
        .map(|tok| {
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::at(line, format!("invalid number `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::at(line, format!("non-finite value `{tok}`")));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != dim {
        return Err(Error::at(
            line,
            format!("expected {dim} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

fn write_values(out: &mut String, values: &[f32]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        // f32 Display is the shortest representation that round-trips
        write!(out, "{v}").expect("writing to String");
    }
}

fn unit(line: usize, raw: &[f32]) -> Result<EmbeddingVector> {
    EmbeddingVector::from_f32(raw)?
        .normalize()
        .map_err(|e| Error::at(line, e.to_string()))
}

#[derive(Debug, Clone)]
pub struct ClassEmbedding {
    pub label_id: String,
    pub raw: Vec<f32>,
    pub embedding: EmbeddingVector,
}

/// Unit-norm class-prompt embeddings, one per label, in file order.
#[derive(Debug, Clone)]
pub struct ClassEmbeddingTable {
    dim: usize,
    entries: Vec<ClassEmbedding>,
    index: BTreeMap<String, usize>,
}

impl ClassEmbeddingTable {
    pub fn new(dim: usize) -> Self {
        ClassEmbeddingTable {
            dim,
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Adds a class from raw values, normalizing them.
    pub fn insert(&mut self, label_id: &str, raw: Vec<f32>) -> Result<()> {
        check_dim(self.dim, raw.len())?;
        if self.index.contains_key(label_id) {
            return Err(Error::DuplicateId {
                kind: "class",
                id: label_id.to_string(),
            });
        }
        let embedding = EmbeddingVector::from_f32(&raw)?.normalize()?;
        self.index.insert(label_id.to_string(), self.entries.len());
        self.entries.push(ClassEmbedding {
            label_id: label_id.to_string(),
            raw,
            embedding,
        });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ClassEmbedding] {
        &self.entries
    }

    pub fn get(&self, label_id: &str) -> Option<&EmbeddingVector> {
        self.index
            .get(label_id)
            .map(|&i| &self.entries[i].embedding)
    }

    pub fn from_text(document: &str) -> Result<Self> {
        let (header, records) =
            split_document(document)?.ok_or(Error::Format("empty class embedding file".into()))?;
        if header.kind != FileKind::Class {
            return Err(Error::at(
                1,
                format!("expected kind=class, found kind={}", header.kind),
            ));
        }
        let mut table = ClassEmbeddingTable::new(header.dim);
        for (line, text) in records {
            let (id, values) = text
                .split_once('\t')
                .ok_or_else(|| Error::at(line, "expected `<label_id>\\t<values>`"))?;
            if id.is_empty() {
                return Err(Error::at(line, "empty label id"));
            }
            let raw = parse_values(line, values, header.dim)?;
            unit(line, &raw)?;
            table
                .insert(id, raw)
                .map_err(|e| Error::at(line, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{}\n",
            Header {
                dim: self.dim,
                kind: FileKind::Class
            }
        );
        for entry in &self.entries {
            out.push_str(&entry.label_id);
            out.push('\t');
            write_values(&mut out, &entry.raw);
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&read(path.as_ref())?)
    }
}

#[derive(Debug, Clone)]
pub struct ClipRecord {
    pub clip_id: String,
    pub timestamp: Timestamp,
    pub ground_truth: Option<String>,
    /// Values as stored in the file (for clips built from frames: the pooled unit vector).
    pub raw: Vec<f32>,
    pub embedding: EmbeddingVector,
}

/// Clips in file order. `dim` is `None` only for a completely empty file.
#[derive(Debug, Clone, Default)]
pub struct ClipSet {
    pub dim: Option<usize>,
    pub clips: Vec<ClipRecord>,
}

struct RawClipLine<'a> {
    line: usize,
    clip_id: &'a str,
    timestamp: Timestamp,
    ground_truth: Option<String>,
    raw: Vec<f32>,
}

fn parse_clip_line(line: usize, text: &str, dim: usize) -> Result<RawClipLine<'_>> {
    let mut fields = text.splitn(4, '\t');
    let (Some(clip_id), Some(ts), Some(gt), Some(values)) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(Error::at(
            line,
            "expected `<clip_id>\\t<timestamp>\\t<ground_truth|->\\t<values>`",
        ));
    };
    if clip_id.is_empty() {
        return Err(Error::at(line, "empty clip id"));
    }
    let timestamp = parse_timestamp(ts).map_err(|e| Error::at(line, e.to_string()))?;
    let ground_truth = match gt {
        "-" => None,
        "" => return Err(Error::at(line, "empty ground-truth field (use `-`)")),
        label => Some(label.to_string()),
    };
    Ok(RawClipLine {
        line,
        clip_id,
        timestamp,
        ground_truth,
        raw: parse_values(line, values, dim)?,
    })
}

impl ClipSet {
    /// Reads a `kind=clip` or `kind=frame` document.
    pub fn from_text(document: &str) -> Result<Self> {
        let Some((header, records)) = split_document(document)? else {
            return Ok(ClipSet::default());
        };
        let lines = records
            .into_iter()
            .map(|(line, text)| parse_clip_line(line, text, header.dim))
            .collect::<Result<Vec<_>>>()?;
        let clips = match header.kind {
            FileKind::Clip => {
                let mut seen = HashSet::new();
                lines
                    .into_iter()
                    .map(|l| {
                        if !seen.insert(l.clip_id) {
                            return Err(Error::at(
                                l.line,
                                format!("duplicate clip id `{}`", l.clip_id),
                            ));
                        }
                        Ok(ClipRecord {
                            clip_id: l.clip_id.to_string(),
                            timestamp: l.timestamp,
                            ground_truth: l.ground_truth,
                            embedding: unit(l.line, &l.raw)?,
                            raw: l.raw,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            FileKind::Frame => pool_frames(lines)?,
            FileKind::Class => {
                return Err(Error::at(
                    1,
                    "expected kind=clip or kind=frame, found kind=class",
                ))
            }
        };
        Ok(ClipSet {
            dim: Some(header.dim),
            clips,
        })
    }

    pub fn to_text(&self) -> String {
        let Some(dim) = self.dim else {
            return String::new();
        };
        let mut out = format!(
            "{}\n",
            Header {
                dim,
                kind: FileKind::Clip
            }
        );
        for clip in &self.clips {
            out.push_str(&clip.clip_id);
            out.push('\t');
            out.push_str(&format_timestamp(&clip.timestamp));
            out.push('\t');
            out.push_str(clip.ground_truth.as_deref().unwrap_or("-"));
            out.push('\t');
            write_values(&mut out, &clip.raw);
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&read(path.as_ref())?)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

fn pool_frames(lines: Vec<RawClipLine<'_>>) -> Result<Vec<ClipRecord>> {
    let mut clips: Vec<ClipRecord> = Vec::new();
    let mut finished = HashSet::new();
    let mut i = 0;
    while i < lines.len() {
        let head = &lines[i];
        if !finished.insert(head.clip_id) {
            return Err(Error::at(
                head.line,
                format!("frames of clip `{}` are not contiguous", head.clip_id),
            ));
        }
        let mut frames = Vec::new();
        let mut j = i;
        while j < lines.len() && lines[j].clip_id == head.clip_id {
            let l = &lines[j];
            if l.timestamp != head.timestamp || l.ground_truth != head.ground_truth {
                return Err(Error::at(
                    l.line,
                    format!("frame metadata differs within clip `{}`", head.clip_id),
                ));
            }
            frames.push(EmbeddingVector::from_f32(&l.raw)?);
            j += 1;
        }
        let embedding = mean_pool(&frames).map_err(|e| Error::at(head.line, e.to_string()))?;
        clips.push(ClipRecord {
            clip_id: head.clip_id.to_string(),
            timestamp: head.timestamp,
            ground_truth: head.ground_truth.clone(),
            raw: embedding.values().iter().map(|&v| v as f32).collect(),
            embedding,
        });
        i = j;
    }
    Ok(clips)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
