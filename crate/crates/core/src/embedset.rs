//! Labeled embedding sets and their on-disk formats.
//!
//! Vectors are stored as `EMB1` files: a 13-byte little-endian header
//! (`"EMB1"`, `u32` row count, `u32` dimension, `u8` normalized flag)
//! followed by `count * dim` IEEE-754 `f32` values in row-major order.
//! Labels live next to it in a UTF-8 CSV with the header
//! `index,group,gender,source_id`.
//!
//! Arithmetic is done in `f64`; values are narrowed to `f32` on save, so a
//! set survives save/load bit-exactly once its entries are `f32`-representable
//! (which is always the case for anything that was itself loaded from disk).

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::linalg::{check_dims, norm};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const HEADER_LEN: usize = 13;
/// Tolerance on row norms for files flagged as normalized.
pub const NORMALIZED_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unspecified,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            "unspecified" | "" => Ok(Gender::Unspecified),
            other => Err(Error::InvalidLabels(format!("unknown gender {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowLabel {
    pub group: String,
    pub gender: Gender,
    pub source_id: String,
}

impl RowLabel {
    pub fn new(group: impl Into<String>, gender: Gender, source_id: impl Into<String>) -> Self {
        Self {
            group: group.into(),
            gender,
            source_id: source_id.into(),
        }
    }
}

/// An `N x d` matrix of finite values with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f64>,
    dim: usize,
    labels: Vec<RowLabel>,
}

impl EmbeddingSet {
    /// Builds a set from row-major data, checking every invariant.
    pub fn new(data: Vec<f64>, dim: usize, labels: Vec<RowLabel>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidHeader(format!("dimension {dim} < 2")));
        }
        if data.len() % dim != 0 {
            return Err(Error::CountMismatch {
                what: "vector data",
                expected: (data.len() / dim + 1) * dim,
                found: data.len(),
            });
        }
        let n = data.len() / dim;
        if labels.len() != n {
            return Err(Error::CountMismatch {
                what: "labels",
                expected: n,
                found: labels.len(),
            });
        }
        if let Some(row) = first_non_finite_row(&data, dim) {
            return Err(Error::NonFiniteValue { row });
        }
        if let Some(i) = labels.iter().position(|l| l.group.is_empty()) {
            return Err(Error::InvalidLabels(format!("row {i} has an empty group")));
        }
        Ok(Self { data, dim, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<RowLabel>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dims(dim, r.len())?;
        }
        Self::new(rows.concat(), dim, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[RowLabel] {
        &self.labels
    }

    /// Distinct group names in sorted order.
    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.labels.iter().map(|l| l.group.clone()).collect();
        g.sort();
        g.dedup();
        g
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i].clone());
        }
        EmbeddingSet {
            data,
            dim: self.dim,
            labels,
        }
    }

    /// Rows whose label satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&RowLabel) -> bool) -> EmbeddingSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.labels[i])).collect();
        self.subset(&idx)
    }

    /// Applies `f` to every row, keeping labels. The closure receives the row
    /// index and must return a vector of the same dimension.
    pub fn map_rows<F>(&self, f: F) -> Result<EmbeddingSet>
    where
        F: Fn(usize, &[f64]) -> Result<Vec<f64>> + Sync,
    {
        use rayon::prelude::*;
        let rows: Vec<Vec<f64>> = (0..self.len())
            .into_par_iter()
            .map(|i| f(i, self.row(i)))
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(self.data.len());
        for r in &rows {
            check_dims(self.dim, r.len())?;
            data.extend_from_slice(r);
        }
        EmbeddingSet::new(data, self.dim, self.labels.clone())
    }

    /// Values rounded to the nearest `f32`, i.e. exactly what a save/load
    /// cycle produces.
    pub fn to_f32_precision(&self) -> EmbeddingSet {
        EmbeddingSet {
            data: self.data.iter().map(|&x| x as f32 as f64).collect(),
            dim: self.dim,
            labels: self.labels.clone(),
        }
    }

    /// True when every row norm lies within [`NORMALIZED_TOL`] of one.
    pub fn is_normalized(&self) -> bool {
        self.rows()
            .all(|r| (norm(r) - 1.0).abs() <= NORMALIZED_TOL)
    }
}

fn first_non_finite_row(data: &[f64], dim: usize) -> Option<usize> {
    data.iter().position(|x| !x.is_finite()).map(|p| p / dim)
}

/// A text prompt and its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptVector {
    pub text: String,
    pub vector: Vec<f64>,
}

impl ConceptVector {
    pub fn new(text: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue { row: 0 });
        }
        if norm(&vector) < 1e-12 {
            return Err(Error::ZeroVector { row: 0 });
        }
        Ok(Self {
            text: text.into(),
            vector,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub magic: [u8; 4],
    pub count: u32,
    pub dim: u32,
    pub normalized: bool,
}

impl EmbeddingFileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.magic);
        b[4..8].copy_from_slice(&self.count.to_le_bytes());
        b[8..12].copy_from_slice(&self.dim.to_le_bytes());
        b[12] = self.normalized as u8;
        b
    }

    pub fn parse(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::TruncatedFile {
                expected: HEADER_LEN,
                found: b.len(),
            });
        }
        let magic: [u8; 4] = b[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let count = u32::from_le_bytes(b[4..8].try_into().unwrap());
        let dim = u32::from_le_bytes(b[8..12].try_into().unwrap());
        let normalized = match b[12] {
            0 => false,
            1 => true,
            other => return Err(Error::InvalidHeader(format!("normalized flag {other}"))),
        };
        if dim < 2 {
            return Err(Error::InvalidHeader(format!("dimension {dim} < 2")));
        }
        Ok(Self {
            magic,
            count,
            dim,
            normalized,
        })
    }
}

/// Serializes the vectors of `set` as an `EMB1` stream. The normalized flag is
/// set when every row is within [`NORMALIZED_TOL`] of unit length.
pub fn write_emb1<W: Write>(set: &EmbeddingSet, mut w: W) -> std::io::Result<()> {
    let header = EmbeddingFileHeader {
        magic: MAGIC,
        count: set.len() as u32,
        dim: set.dim() as u32,
        normalized: set.is_normalized() && !set.is_empty(),
    };
    w.write_all(&header.to_bytes())?;
    let mut buf = Vec::with_capacity(set.as_slice().len() * 4);
    for &x in set.as_slice() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

/// Parses an `EMB1` stream into its header and row-major `f64` data.
pub fn read_emb1<R: Read>(mut r: R) -> Result<(EmbeddingFileHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<stream>", e))?;
    let header = EmbeddingFileHeader::parse(&bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.count as usize * header.dim as usize * 4;
    if payload.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::InvalidHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let dim = header.dim as usize;
    if let Some(row) = first_non_finite_row(&data, dim) {
        return Err(Error::NonFiniteValue { row });
    }
    if header.normalized {
        for (row, r) in data.chunks_exact(dim).enumerate() {
            let n = norm(r);
            if (n - 1.0).abs() > NORMALIZED_TOL {
                return Err(Error::NotNormalized { row, norm: n });
            }
        }
    }
    Ok((header, data))
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRecord {
    index: usize,
    group: String,
    gender: String,
    source_id: String,
}

pub fn write_labels<W: Write>(labels: &[RowLabel], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (index, l) in labels.iter().enumerate() {
        wtr.serialize(LabelRecord {
            index,
            group: l.group.clone(),
            gender: l.gender.as_str().to_string(),
            source_id: l.source_id.clone(),
        })?;
    }
    wtr.flush().map_err(|e| Error::io("<labels>", e))?;
    Ok(())
}

pub fn read_labels<R: Read>(r: R) -> Result<Vec<RowLabel>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "group", "gender", "source_id"] {
        return Err(Error::InvalidLabels(format!(
            "expected header index,group,gender,source_id, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (pos, rec) in rdr.deserialize::<LabelRecord>().enumerate() {
        let rec = rec?;
        if rec.index != pos {
            return Err(Error::InvalidLabels(format!(
                "row {pos} carries index {}",
                rec.index
            )));
        }
        if rec.group.is_empty() {
            return Err(Error::InvalidLabels(format!("row {pos} has an empty group")));
        }
        out.push(RowLabel {
            group: rec.group,
            gender: rec.gender.parse()?,
            source_id: rec.source_id,
        });
    }
    Ok(out)
}

/// Loads an `EMB1` file and its labels CSV, joined by row index.
pub fn load_embeddings(path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let (header, data) = read_emb1(BufReader::new(f)).map_err(|e| with_path(e, path))?;
    let labels_path = labels_path.as_ref();
    let lf = File::open(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let labels = read_labels(BufReader::new(lf))?;
    if labels.len() != header.count as usize {
        return Err(Error::CountMismatch {
            what: "labels",
            expected: header.count as usize,
            found: labels.len(),
        });
    }
    EmbeddingSet::new(data, header.dim as usize, labels)
}

/// Writes the vectors to `path` and the labels to `labels_path`.
pub fn save_embeddings(
    set: &EmbeddingSet,
    path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    // f64 values beyond the f32 range would silently become infinities.
    if let Some(p) = set
        .as_slice()
        .iter()
        .position(|&x| !(x as f32).is_finite() || !x.is_finite())
    {
        return Err(Error::NonFiniteValue { row: p / set.dim() });
    }
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_emb1(set, BufWriter::new(f)).map_err(|e| Error::io(path, e))?;
    let labels_path = labels_path.as_ref();
    let lf = File::create(labels_path).map_err(|e| Error::io(labels_path, e))?;
    write_labels(set.labels(), BufWriter::new(lf))
}

/// `<prefix>.emb1` and `<prefix>.labels.csv`.
pub fn prefixed_paths(prefix: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let p = prefix.as_ref().as_os_str().to_owned();
    let mut emb = p.clone();
    emb.push(".emb1");
    let mut labels = p;
    labels.push(".labels.csv");
    (emb.into(), labels.into())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Scales every row to unit L2 norm.
pub fn normalize_rows(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    set.map_rows(|i, r| {
        let n = norm(r);
        if n < 1e-12 {
            return Err(Error::ZeroVector { row: i });
        }
        Ok(r.iter().map(|x| x / n).collect())
    })
}

/// Reads a concepts JSON object (`{"prompt": [floats], ...}`), preserving
/// the order in which prompts appear in the file.
pub fn load_concepts(path: impl AsRef<Path>) -> Result<Vec<ConceptVector>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let map: IndexMap<String, Vec<f64>> = serde_json::from_reader(BufReader::new(f))?;
    map.into_iter()
        .map(|(text, vector)| ConceptVector::new(text, vector))
        .collect()
}

pub fn save_concepts(concepts: &[ConceptVector], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let map: IndexMap<&str, &[f64]> = concepts
        .iter()
        .map(|c| (c.text.as_str(), c.vector.as_slice()))
        .collect();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &map)?;
    Ok(())
}
