//! On-disk formats.
//!
//! Both formats share one framing: a 4-byte magic, a little-endian `u32`
//! version, a little-endian `u64` header length, a JSON header of that many
//! bytes, then a payload of little-endian `f32` values.
//!
//! * **GST** (`GSTT`) holds a dataset. The header records the dims, the value
//!   type, the missing-value convention (NaN) and the linear order (first
//!   index fastest); the payload is every value of the field.
//! * **GSA** (`GSAR`) holds a compressed archive. The header is a manifest
//!   with the method, budget, dims, the run-length encoded mask, the time
//!   intervals, one entry per payload with its offset and length (counted in
//!   values), the leftover segment and optionally the compression report.
//!   Tucker payloads store the core and then each factor, TT payloads store
//!   the carriages in order, all first index fastest.
//!
//! Values pass through `f32`. Data that is already `f32`-representable
//! round-trips bit-exactly; pipeline archives always are.
//!
//! Writes go to a temporary file in the target directory which is then
//! renamed over the destination.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GappyTensor4, Mask2};
use crate::partition::{BlockIndex, TimeSplit};
use crate::pipeline::{ArchiveBlock, CompressedArchive, CompressionReport, Method, Payload};
use crate::tensor::{DenseTensor, Matrix};
use crate::tt::{QttFactorization, TtFactorization};
use crate::tucker::TuckerFactorization;

pub const GST_MAGIC: &[u8; 4] = b"GSTT";
pub const GSA_MAGIC: &[u8; 4] = b"GSAR";
pub const FORMAT_VERSION: u32 = 1;

const PREAMBLE: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GstHeader {
    pub dims: [usize; 4],
    pub dtype: String,
    pub missing: String,
    pub order: String,
}

impl GstHeader {
    fn new(dims: [usize; 4]) -> Self {
        Self {
            dims,
            dtype: "f32".into(),
            missing: "nan".into(),
            order: "i1 fastest".into(),
        }
    }
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn frame(magic: &[u8; 4], header: &[u8], payload: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREAMBLE + header.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Splits a framed file into its header and payload bytes.
fn unframe<'a>(magic: &[u8; 4], bytes: &'a [u8]) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < PREAMBLE {
        return format_err("file shorter than its preamble");
    }
    if &bytes[..4] != magic {
        return format_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        ));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return format_err(format!("unsupported version {version}"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let rest = &bytes[PREAMBLE..];
    if hlen > rest.len() as u64 {
        return format_err(format!("header length {hlen} exceeds file size"));
    }
    Ok(rest.split_at(hlen as usize))
}

fn decode_f32(payload: &[u8], expected: usize) -> Result<Vec<f64>> {
    if Some(payload.len()) != expected.checked_mul(4) {
        return format_err(format!(
            "payload has {} bytes, expected {expected} values",
            payload.len()
        ));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn encode_gst(data: &GappyTensor4) -> Vec<u8> {
    let header = serde_json::to_vec(&GstHeader::new(data.dims())).expect("header serializes");
    frame(GST_MAGIC, &header, data.values().iter().copied())
}

pub fn decode_gst(bytes: &[u8]) -> Result<GappyTensor4> {
    let (header, payload) = unframe(GST_MAGIC, bytes)?;
    let header: GstHeader = serde_json::from_slice(header)?;
    if header != GstHeader::new(header.dims) {
        return format_err(format!(
            "unsupported layout: dtype {}, missing {}, order {}",
            header.dtype, header.missing, header.order
        ));
    }
    let count = header
        .dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    let values = decode_f32(payload, count)?;
    GappyTensor4::from_values(header.dims, values)
}

pub fn write_gst(data: &GappyTensor4, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_gst(data))
}

pub fn read_gst(path: impl AsRef<Path>) -> Result<GappyTensor4> {
    decode_gst(&fs::read(path)?)
}

/// Alternating run lengths over the mask cells, starting with a land run
/// (possibly empty).
pub fn mask_to_rle(mask: &Mask2) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &c in mask.cells() {
        if c == current {
            len += 1;
        } else {
            runs.push(len);
            current = c;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn mask_from_rle(nx: usize, ny: usize, runs: &[usize]) -> Result<Mask2> {
    let total = runs.iter().try_fold(0usize, |a, &r| a.checked_add(r));
    if total != Some(nx * ny) {
        return format_err("mask runs do not cover the grid");
    }
    let mut cells = Vec::with_capacity(nx * ny);
    for (k, &r) in runs.iter().enumerate() {
        cells.extend(std::iter::repeat_n(k % 2 == 1, r));
    }
    Mask2::new(nx, ny, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Tucker,
    Tt,
    Raw,
}

/// A contiguous run of payload values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub rect: BlockIndex,
    pub interval: usize,
    pub kind: PayloadKind,
    /// Tucker core dims or inner TT ranks; empty for raw payloads.
    pub ranks: Vec<usize>,
    /// Prime factors per mode for TT payloads; empty otherwise.
    pub mode_factors: Vec<Vec<usize>>,
    pub segment: Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsaManifest {
    pub method: Method,
    pub eps_max: f64,
    pub dims: [usize; 4],
    pub mask_rle: Vec<usize>,
    pub time_splits: Vec<(usize, usize)>,
    pub blocks: Vec<BlockEntry>,
    pub leftovers: Segment,
    pub stored_elements: usize,
    pub metrics: Option<CompressionReport>,
}

fn checked_sum(it: impl IntoIterator<Item = Option<usize>>) -> Option<usize> {
    it.into_iter().try_fold(0usize, |a, x| a.checked_add(x?))
}

/// Number of values a payload entry must hold for block dims `dims`.
fn expected_len(entry: &BlockEntry, dims: &[usize]) -> Result<usize> {
    let bad = |msg: String| Err(Error::Format(msg));
    let n = match entry.kind {
        PayloadKind::Raw => {
            if !entry.ranks.is_empty() || !entry.mode_factors.is_empty() {
                return bad("raw payload with ranks".into());
            }
            dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d))
        }
        PayloadKind::Tucker => {
            if entry.ranks.len() != dims.len()
                || entry.ranks.iter().zip(dims).any(|(&r, &n)| r == 0 || r > n)
                || !entry.mode_factors.is_empty()
            {
                return bad(format!("Tucker ranks {:?} for dims {dims:?}", entry.ranks));
            }
            let core = entry
                .ranks
                .iter()
                .try_fold(1usize, |a, &r| a.checked_mul(r));
            checked_sum(
                std::iter::once(core).chain(
                    dims.iter()
                        .zip(&entry.ranks)
                        .map(|(&n, &r)| n.checked_mul(r)),
                ),
            )
        }
        PayloadKind::Tt => {
            let shape_ok = entry.mode_factors.len() == dims.len()
                && entry.mode_factors.iter().zip(dims).all(|(f, &n)| {
                    !f.is_empty() && !f.contains(&0) && f.iter().product::<usize>() == n
                });
            let flat: Vec<usize> = entry.mode_factors.iter().flatten().copied().collect();
            if !shape_ok || entry.ranks.len() + 1 != flat.len() || entry.ranks.contains(&0) {
                return bad(format!(
                    "TT ranks {:?} / factors {:?} for dims {dims:?}",
                    entry.ranks, entry.mode_factors
                ));
            }
            let mut full = vec![1];
            full.extend_from_slice(&entry.ranks);
            full.push(1);
            checked_sum(
                flat.iter()
                    .enumerate()
                    .map(|(i, &n)| full[i].checked_mul(n)?.checked_mul(full[i + 1])),
            )
        }
    };
    n.ok_or_else(|| Error::Format("payload size overflow".into()))
}

fn manifest_of(archive: &CompressedArchive, report: Option<&CompressionReport>) -> GsaManifest {
    let mut offset = 0;
    let mut take = |len: usize| {
        let s = Segment { offset, len };
        offset += len;
        s
    };
    let blocks = archive
        .blocks
        .iter()
        .map(|b| {
            let (kind, ranks, mode_factors) = match &b.payload {
                Payload::Tucker(f) => (PayloadKind::Tucker, f.ranks(), Vec::new()),
                Payload::Tt(f) => (PayloadKind::Tt, f.tt().ranks(), f.mode_factors().to_vec()),
                Payload::Raw(_) => (PayloadKind::Raw, Vec::new(), Vec::new()),
            };
            BlockEntry {
                rect: b.rect,
                interval: b.interval,
                kind,
                ranks,
                mode_factors,
                segment: take(b.payload.storage_count()),
            }
        })
        .collect();
    GsaManifest {
        method: archive.method,
        eps_max: archive.eps_max,
        dims: archive.dims,
        mask_rle: mask_to_rle(&archive.mask),
        time_splits: archive.time_splits.intervals.clone(),
        blocks,
        leftovers: take(archive.leftovers.len()),
        stored_elements: archive.stored_elements(),
        metrics: report.cloned(),
    }
}

fn payload_values(p: &Payload) -> Vec<f64> {
    match p {
        Payload::Tucker(f) => f
            .core()
            .as_slice()
            .iter()
            .chain(f.factors().iter().flat_map(|u| u.as_slice()))
            .copied()
            .collect(),
        Payload::Tt(f) => f
            .tt()
            .carriages()
            .iter()
            .flat_map(|g| g.as_slice())
            .copied()
            .collect(),
        Payload::Raw(t) => t.as_slice().to_vec(),
    }
}

pub fn encode_gsa(
    archive: &CompressedArchive,
    report: Option<&CompressionReport>,
) -> Result<Vec<u8>> {
    archive.validate()?;
    let header = serde_json::to_vec(&manifest_of(archive, report))?;
    let payload = archive
        .blocks
        .iter()
        .flat_map(|b| payload_values(&b.payload))
        .chain(archive.leftovers.iter().copied());
    Ok(frame(GSA_MAGIC, &header, payload))
}

/// Checks every manifest invariant that does not need the payload values:
/// interval and rectangle bounds, per-entry sizes against their ranks,
/// contiguous in-bounds segments and the element total.
fn check_manifest(m: &GsaManifest) -> Result<()> {
    let [n, mm, l, k] = m.dims;
    if m.dims.contains(&0) {
        return format_err(format!("degenerate dims {:?}", m.dims));
    }
    let mut next = 0;
    for e in &m.blocks {
        let Some(&(t0, t1)) = m.time_splits.get(e.interval) else {
            return format_err(format!("interval {} out of range", e.interval));
        };
        let r = &e.rect;
        if r.is_empty() || r.x_end > n || r.y_end > mm || t0 >= t1 || t1 > k {
            return format_err(format!(
                "block {r:?} x [{t0}, {t1}) outside dims {:?}",
                m.dims
            ));
        }
        let want = expected_len(e, &[r.width(), r.height(), l, t1 - t0])?;
        if e.segment.len != want || e.segment.offset != next {
            return format_err(format!(
                "segment {:?} for {:?}, expected offset {next} and length {want}",
                e.segment, e.kind
            ));
        }
        next += want;
    }
    if m.leftovers.offset != next {
        return format_err("leftover segment out of place");
    }
    if m.leftovers.len.checked_add(next) != Some(m.stored_elements) {
        return format_err(format!(
            "manifest counts {} stored elements, entries add up to {}",
            m.stored_elements,
            next + m.leftovers.len
        ));
    }
    Ok(())
}

fn build_payload(e: &BlockEntry, dims: Vec<usize>, values: &[f64]) -> Result<Payload> {
    Ok(match e.kind {
        PayloadKind::Raw => Payload::Raw(DenseTensor::new(dims, values.to_vec())?),
        PayloadKind::Tucker => {
            let core_len: usize = e.ranks.iter().product();
            let core = DenseTensor::new(e.ranks.clone(), values[..core_len].to_vec())?;
            let mut pos = core_len;
            let mut factors = Vec::with_capacity(dims.len());
            for (&n, &r) in dims.iter().zip(&e.ranks) {
                factors.push(Matrix::new(n, r, values[pos..pos + n * r].to_vec())?);
                pos += n * r;
            }
            Payload::Tucker(TuckerFactorization::from_parts(core, factors)?)
        }
        PayloadKind::Tt => {
            let flat: Vec<usize> = e.mode_factors.iter().flatten().copied().collect();
            let mut full = vec![1];
            full.extend_from_slice(&e.ranks);
            full.push(1);
            let mut pos = 0;
            let mut carriages = Vec::with_capacity(flat.len());
            for (i, &n) in flat.iter().enumerate() {
                let len = full[i] * n * full[i + 1];
                carriages.push(DenseTensor::new(
                    vec![full[i], n, full[i + 1]],
                    values[pos..pos + len].to_vec(),
                )?);
                pos += len;
            }
            let tt = TtFactorization::from_carriages(carriages)?;
            Payload::Tt(QttFactorization::from_parts(tt, e.mode_factors.clone())?)
        }
    })
}

pub fn decode_gsa(bytes: &[u8]) -> Result<(CompressedArchive, Option<CompressionReport>)> {
    let (header, payload) = unframe(GSA_MAGIC, bytes)?;
    let m: GsaManifest = serde_json::from_slice(header)?;
    check_manifest(&m)?;
    let mask = mask_from_rle(m.dims[0], m.dims[1], &m.mask_rle)?;
    let values = decode_f32(payload, m.stored_elements)?;
    let mut blocks = Vec::with_capacity(m.blocks.len());
    for e in &m.blocks {
        let (t0, t1) = m.time_splits[e.interval];
        let dims = vec![e.rect.width(), e.rect.height(), m.dims[2], t1 - t0];
        let seg = &values[e.segment.offset..e.segment.offset + e.segment.len];
        let payload = build_payload(e, dims, seg).map_err(|err| Error::Format(err.to_string()))?;
        blocks.push(ArchiveBlock {
            rect: e.rect,
            interval: e.interval,
            payload,
        });
    }
    let leftovers = values[m.leftovers.offset..].to_vec();
    if leftovers.iter().any(|v| !v.is_finite()) {
        return format_err("non-finite leftover value");
    }
    let archive = CompressedArchive {
        method: m.method,
        eps_max: m.eps_max,
        dims: m.dims,
        mask,
        time_splits: TimeSplit {
            intervals: m.time_splits,
        },
        blocks,
        leftovers,
    };
    archive.validate()?;
    Ok((archive, m.metrics))
}

pub fn write_gsa(
    archive: &CompressedArchive,
    report: Option<&CompressionReport>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(path.as_ref(), &encode_gsa(archive, report)?)
}

pub fn read_gsa(path: impl AsRef<Path>) -> Result<(CompressedArchive, Option<CompressionReport>)> {
    decode_gsa(&fs::read(path)?)
}
