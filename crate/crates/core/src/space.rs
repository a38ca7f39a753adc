//! Attribute-space data model: schema, labeled points, index sets, and file I/O.
//!
//! Points are addressed by ordinal (position in load order). For every
//! `(aspect, attribute)` pair the space keeps the sorted ordinal set of the
//! points carrying that label; the per-aspect and global sets are their unions.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{check_finite, mean_of, PointMatrix};

/// One aspect (control category) and its attribute names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub name: String,
    pub attributes: Vec<String>,
}

/// Ordered aspects, each with an ordered list of attributes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    aspects: Vec<Aspect>,
}

/// Position of an attribute in a schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeId {
    pub aspect: usize,
    pub attribute: usize,
}

impl AttributeSchema {
    pub fn new(aspects: Vec<Aspect>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &aspects {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate aspect {:?}", a.name)));
            }
            if a.attributes.is_empty() {
                return Err(Error::Schema(format!("aspect {:?} has no attributes", a.name)));
            }
            let mut attrs = HashSet::new();
            for t in &a.attributes {
                if !attrs.insert(t.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate attribute {t:?} in aspect {:?}",
                        a.name
                    )));
                }
            }
        }
        if aspects.len() > u16::MAX as usize
            || aspects.iter().any(|a| a.attributes.len() > u16::MAX as usize)
        {
            return Err(Error::Schema("too many aspects or attributes".into()));
        }
        Ok(AttributeSchema { aspects })
    }

    /// Convenience constructor from string slices.
    pub fn from_names(aspects: &[(&str, &[&str])]) -> Result<Self> {
        Self::new(
            aspects
                .iter()
                .map(|(name, attrs)| Aspect {
                    name: (*name).to_string(),
                    attributes: attrs.iter().map(|s| (*s).to_string()).collect(),
                })
                .collect(),
        )
    }

    pub fn aspects(&self) -> &[Aspect] {
        &self.aspects
    }

    pub fn num_aspects(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }

    pub fn aspect_index(&self, aspect: &str) -> Option<usize> {
        self.aspects.iter().position(|a| a.name == aspect)
    }

    pub fn resolve(&self, aspect: &str, attribute: &str) -> Option<AttributeId> {
        let ai = self.aspect_index(aspect)?;
        let ti = self.aspects[ai].attributes.iter().position(|t| t == attribute)?;
        Some(AttributeId {
            aspect: ai,
            attribute: ti,
        })
    }

    pub fn aspect_name(&self, aspect: usize) -> &str {
        &self.aspects[aspect].name
    }

    pub fn attribute_name(&self, id: AttributeId) -> &str {
        &self.aspects[id.aspect].attributes[id.attribute]
    }

    /// `aspect=attribute` label for display.
    pub fn label(&self, id: AttributeId) -> String {
        format!("{}={}", self.aspect_name(id.aspect), self.attribute_name(id))
    }

    /// All attribute ids, aspect-major.
    pub fn attribute_ids(&self) -> impl Iterator<Item = AttributeId> + '_ {
        self.aspects.iter().enumerate().flat_map(|(ai, a)| {
            (0..a.attributes.len()).map(move |ti| AttributeId {
                aspect: ai,
                attribute: ti,
            })
        })
    }

    pub fn num_attributes(&self) -> usize {
        self.aspects.iter().map(|a| a.attributes.len()).sum()
    }

    fn contains(&self, id: AttributeId) -> bool {
        id.aspect < self.aspects.len() && id.attribute < self.aspects[id.aspect].attributes.len()
    }
}

/// A labeled point as it appears in files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub id: String,
    pub aspect: String,
    pub attribute: String,
    pub vector: Vec<f64>,
}

/// Immutable collection of labeled latent points with precomputed index sets.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSpace {
    schema: AttributeSchema,
    ids: Vec<String>,
    labels: Vec<AttributeId>,
    points: PointMatrix,
    /// `index_sets[aspect][attribute]`: sorted ordinals.
    index_sets: Vec<Vec<Vec<usize>>>,
}

impl AttributeSpace {
    /// Builds and validates a space. Errors carry 1-based record numbers.
    pub fn from_parts(
        schema: AttributeSchema,
        ids: Vec<String>,
        labels: Vec<AttributeId>,
        points: PointMatrix,
    ) -> Result<Self> {
        if ids.len() != labels.len() || ids.len() != points.len() {
            return Err(Error::invalid(format!(
                "inconsistent part lengths: {} ids, {} labels, {} points",
                ids.len(),
                labels.len(),
                points.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        let mut index_sets: Vec<Vec<Vec<usize>>> = schema
            .aspects
            .iter()
            .map(|a| vec![Vec::new(); a.attributes.len()])
            .collect();
        for (i, (id, label)) in ids.iter().zip(&labels).enumerate() {
            let record = i + 1;
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    record,
                    id: id.clone(),
                });
            }
            if !schema.contains(*label) {
                return Err(Error::UnknownLabel {
                    record,
                    aspect: format!("#{}", label.aspect),
                    attribute: format!("#{}", label.attribute),
                });
            }
            if check_finite(points.row(i)).is_err() {
                return Err(Error::NonFinite { record });
            }
            index_sets[label.aspect][label.attribute].push(i);
        }
        Ok(AttributeSpace {
            schema,
            ids,
            labels,
            points,
            index_sets,
        })
    }

    /// Builds a space from labeled points; `schema = None` infers it in
    /// first-appearance order.
    pub fn from_points(schema: Option<AttributeSchema>, records: Vec<LabeledPoint>) -> Result<Self> {
        let schema = match schema {
            Some(s) => AttributeSchema::new(s.aspects)?,
            None => infer_schema(&records)?,
        };
        let dim = records.first().map_or(0, |r| r.vector.len());
        let mut points = PointMatrix::new(dim);
        let mut ids = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for (i, r) in records.into_iter().enumerate() {
            let record = i + 1;
            if r.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    record,
                    expected: dim,
                    found: r.vector.len(),
                });
            }
            if check_finite(&r.vector).is_err() {
                return Err(Error::NonFinite { record });
            }
            let label = schema
                .resolve(&r.aspect, &r.attribute)
                .ok_or_else(|| Error::UnknownLabel {
                    record,
                    aspect: r.aspect.clone(),
                    attribute: r.attribute.clone(),
                })?;
            points.push(&r.vector)?;
            ids.push(r.id);
            labels.push(label);
        }
        Self::from_parts(schema, ids, labels, points)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &PointMatrix {
        &self.points
    }

    pub fn vector(&self, ordinal: usize) -> &[f64] {
        self.points.row(ordinal)
    }

    pub fn id(&self, ordinal: usize) -> &str {
        &self.ids[ordinal]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn label(&self, ordinal: usize) -> AttributeId {
        self.labels[ordinal]
    }

    pub fn labels(&self) -> &[AttributeId] {
        &self.labels
    }

    /// The sorted ordinal set of one attribute.
    pub fn attribute_ordinals(&self, id: AttributeId) -> &[usize] {
        &self.index_sets[id.aspect][id.attribute]
    }

    /// Sorted ordinals of every point labeled with any attribute of `aspect`.
    pub fn aspect_ordinals(&self, aspect: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.index_sets[aspect].iter().flatten().copied().collect();
        out.sort_unstable();
        out
    }

    /// Mean vector of each aspect's points, in schema order, each summed in
    /// ordinal order. Errors if an aspect has no points.
    pub fn aspect_centers(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.schema.num_aspects())
            .map(|a| {
                self.center(&self.aspect_ordinals(a)).map_err(|_| {
                    Error::invalid(format!("aspect {:?} has no points", self.schema.aspect_name(a)))
                })
            })
            .collect()
    }

    /// Name-based lookup of an attribute's ordinal set.
    pub fn subset_ordinals(&self, aspect: &str, attribute: &str) -> Result<&[usize]> {
        let id = self.schema.resolve(aspect, attribute).ok_or_else(|| {
            Error::invalid(format!("unknown attribute {aspect}={attribute}"))
        })?;
        Ok(self.attribute_ordinals(id))
    }

    /// Mean of the selected points.
    pub fn center(&self, ordinals: &[usize]) -> Result<Vec<f64>> {
        mean_of(self.dim(), ordinals.iter().map(|&o| self.points.row(o)))
            .ok_or_else(|| Error::invalid("cannot take the center of an empty ordinal set"))
    }

    /// Same labels and ids with different vectors of any dimension.
    pub fn with_points(&self, points: PointMatrix) -> Result<Self> {
        Self::from_parts(self.schema.clone(), self.ids.clone(), self.labels.clone(), points)
    }

    /// Copy with every vector shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        let mut points = self.points.clone();
        points.translate(offset);
        AttributeSpace {
            points,
            ..self.clone()
        }
    }

    /// Subset of the space keeping the given ordinals in the given order.
    pub fn select(&self, ordinals: &[usize]) -> Result<Self> {
        Self::from_parts(
            self.schema.clone(),
            ordinals.iter().map(|&o| self.ids[o].clone()).collect(),
            ordinals.iter().map(|&o| self.labels[o]).collect(),
            self.points.select(ordinals),
        )
    }

    /// Iterates the points as file records.
    pub fn records(&self) -> impl Iterator<Item = LabeledPoint> + '_ {
        (0..self.len()).map(move |i| LabeledPoint {
            id: self.ids[i].clone(),
            aspect: self.schema.aspect_name(self.labels[i].aspect).to_string(),
            attribute: self.schema.attribute_name(self.labels[i]).to_string(),
            vector: self.points.row(i).to_vec(),
        })
    }
}

fn infer_schema(records: &[LabeledPoint]) -> Result<AttributeSchema> {
    let mut aspects: Vec<Aspect> = Vec::new();
    for r in records {
        match aspects.iter_mut().find(|a| a.name == r.aspect) {
            Some(a) => {
                if !a.attributes.contains(&r.attribute) {
                    a.attributes.push(r.attribute.clone());
                }
            }
            None => aspects.push(Aspect {
                name: r.aspect.clone(),
                attributes: vec![r.attribute.clone()],
            }),
        }
    }
    AttributeSchema::new(aspects)
}

/// On-disk encodings of a space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Binary,
}

impl Format {
    /// `.bin`/`.atsp` is binary, anything else JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("atsp") => Format::Binary,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaHeader {
    schema: serde_json::Map<String, serde_json::Value>,
}

pub fn load_space(path: &Path, format: Format) -> Result<AttributeSpace> {
    let file = File::open(path)?;
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(file)),
        Format::Binary => read_binary(BufReader::new(file)),
    }
}

pub fn save_space(space: &AttributeSpace, path: &Path, format: Format) -> Result<()> {
    if space.schema.is_empty() {
        return Err(Error::EmptySchema);
    }
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Jsonl => write_jsonl(space, &mut w)?,
        Format::Binary => write_binary(space, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(space: &AttributeSpace, w: &mut W) -> Result<()> {
    if space.schema.is_empty() {
        return Err(Error::EmptySchema);
    }
    let mut map = serde_json::Map::new();
    for a in &space.schema.aspects {
        map.insert(a.name.clone(), serde_json::to_value(&a.attributes)?);
    }
    serde_json::to_writer(&mut *w, &SchemaHeader { schema: map })?;
    w.write_all(b"\n")?;
    for rec in space.records() {
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<AttributeSpace> {
    let mut schema = None;
    let mut records = Vec::new();
    for (line_no, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if line_no == 0 {
            if let Ok(header) = serde_json::from_str::<SchemaHeader>(&line) {
                let mut aspects = Vec::new();
                for (name, attrs) in header.schema {
                    let attributes: Vec<String> =
                        serde_json::from_value(attrs).map_err(|e| Error::Parse {
                            record: 0,
                            message: format!("schema header: {e}"),
                        })?;
                    aspects.push(Aspect { name, attributes });
                }
                schema = Some(AttributeSchema::new(aspects)?);
                continue;
            }
        }
        let record = records.len() + 1;
        let rec: LabeledPoint = serde_json::from_str(&line).map_err(|e| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    AttributeSpace::from_points(schema, records)
}

const MAGIC: &[u8; 4] = b"ATSP";
const VERSION: u32 = 1;

fn write_str16<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::invalid(format!("string too long: {s:?}")))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Binary layout: `ATSP`, version u32, dim u32, count u64, schema block
/// (u16 aspect count; per aspect: name, u16 attribute count, names; every
/// name is a u16 length plus UTF-8 bytes), then per record: id, aspect
/// ordinal u16, attribute ordinal u16, `dim` little-endian f64.
pub fn write_binary<W: Write>(space: &AttributeSpace, w: &mut W) -> Result<()> {
    if space.schema.is_empty() {
        return Err(Error::EmptySchema);
    }
    let dim = u32::try_from(space.dim()).map_err(|_| Error::invalid("dimension too large"))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&(space.len() as u64).to_le_bytes())?;
    w.write_all(&(space.schema.aspects.len() as u16).to_le_bytes())?;
    for a in &space.schema.aspects {
        write_str16(w, &a.name)?;
        w.write_all(&(a.attributes.len() as u16).to_le_bytes())?;
        for t in &a.attributes {
            write_str16(w, t)?;
        }
    }
    for i in 0..space.len() {
        write_str16(w, &space.ids[i])?;
        let l = space.labels[i];
        w.write_all(&(l.aspect as u16).to_le_bytes())?;
        w.write_all(&(l.attribute as u16).to_le_bytes())?;
        for v in space.points.row(i) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct ByteReader<R> {
    inner: R,
    record: usize,
}

impl<R: Read> ByteReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Parse {
            record: self.record,
            message: format!("truncated binary file: {e}"),
        })?;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Parse {
            record: self.record,
            message: format!("truncated string: {e}"),
        })?;
        String::from_utf8(buf).map_err(|e| Error::Parse {
            record: self.record,
            message: format!("invalid UTF-8: {e}"),
        })
    }
}

pub fn read_binary<R: Read>(r: R) -> Result<AttributeSpace> {
    let mut r = ByteReader { inner: r, record: 0 };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Parse {
            record: 0,
            message: "bad magic bytes".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Parse {
            record: 0,
            message: format!("unsupported version {version}"),
        });
    }
    let dim = r.u32()? as usize;
    let count = r.u64()? as usize;
    let n_aspects = r.u16()? as usize;
    let mut aspects = Vec::with_capacity(n_aspects);
    for _ in 0..n_aspects {
        let name = r.string()?;
        let n_attrs = r.u16()? as usize;
        let attributes = (0..n_attrs).map(|_| r.string()).collect::<Result<_>>()?;
        aspects.push(Aspect { name, attributes });
    }
    let schema = AttributeSchema::new(aspects)?;
    let mut ids = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count.saturating_mul(dim).min(1 << 28));
    for i in 0..count {
        r.record = i + 1;
        ids.push(r.string()?);
        let aspect = r.u16()? as usize;
        let attribute = r.u16()? as usize;
        labels.push(AttributeId { aspect, attribute });
        for _ in 0..dim {
            data.push(r.f64()?);
        }
    }
    AttributeSpace::from_parts(schema, ids, labels, PointMatrix::from_flat(dim, data)?)
}
