//! Binary model container.
//!
//! ```text
//! magic     8 bytes  "MVMLMODL"
//! version   u32 LE
//! length    u64 LE   payload byte count
//! payload   length bytes
//! checksum  32 bytes SHA-256 of the payload
//! ```
//!
//! The payload is a flat little-endian field sequence: task, kernels,
//! support, heads, metadata. Matrices are stored as `rows: u64, cols: u64`
//! followed by column-major `f64` values, so round trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::{Head, ModelMeta, ModelState, Support, Task};
use crate::error::{MvmlError, Result};
use crate::kernels::{KernelConfig, KernelFamily};

pub const MAGIC: &[u8; 8] = b"MVMLMODL";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

fn bad(field: &str, reason: impl Into<String>) -> MvmlError {
    MvmlError::Deserialize {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.len(m.nrows());
        self.len(m.ncols());
        m.iter().for_each(|&x| self.f64(x));
    }
    fn vector(&mut self, v: &DVector<f64>) {
        self.len(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| bad(field, format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        Ok(self.take(N, field)?.try_into().expect("length checked"))
    }
    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.array::<1>(field)?[0])
    }
    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(field)?))
    }
    fn i64(&mut self, field: &str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array(field)?))
    }
    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(field)?))
    }
    fn bool(&mut self, field: &str) -> Result<bool> {
        match self.u8(field)? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(bad(field, format!("invalid boolean byte {b}"))),
        }
    }
    /// A count that must fit in what is left of the buffer at `unit` bytes each.
    fn len(&mut self, field: &str, unit: usize) -> Result<usize> {
        let n = self.u64(field)?;
        let left = (self.buf.len() - self.pos) as u64;
        if unit > 0 && n > left / unit as u64 {
            return Err(bad(field, format!("length {n} exceeds remaining payload")));
        }
        Ok(n as usize)
    }
    fn str(&mut self, field: &str) -> Result<String> {
        let n = self.len(field, 1)?;
        String::from_utf8(self.take(n, field)?.to_vec()).map_err(|e| bad(field, e.to_string()))
    }
    fn matrix(&mut self, field: &str) -> Result<DMatrix<f64>> {
        let rows = self.len(field, 0)?;
        let cols = self.len(field, 0)?;
        let count = rows
            .checked_mul(cols)
            .filter(|&c| c <= (self.buf.len() - self.pos) / 8)
            .ok_or_else(|| {
                bad(
                    field,
                    format!("{rows}×{cols} matrix exceeds remaining payload"),
                )
            })?;
        let vals = (0..count)
            .map(|_| self.f64(field))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_vec(rows, cols, vals))
    }
    fn vector(&mut self, field: &str) -> Result<DVector<f64>> {
        let n = self.len(field, 8)?;
        let vals = (0..n)
            .map(|_| self.f64(field))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }
}

fn encode_payload(m: &ModelState) -> Vec<u8> {
    let mut w = Writer::default();
    match &m.task {
        Task::Regression => w.u8(0),
        Task::Binary { negative, positive } => {
            w.u8(1);
            w.i64(*negative);
            w.i64(*positive);
        }
        Task::OneVsAll(classes) => {
            w.u8(2);
            w.len(classes.len());
            classes.iter().for_each(|&c| w.i64(c));
        }
    }
    w.len(m.kernel_configs.len());
    for k in &m.kernel_configs {
        w.u8(match k.family {
            KernelFamily::Gaussian => 0,
            KernelFamily::Linear => 1,
        });
        w.f64(k.sigma);
    }
    match &m.support {
        Support::Full { train } => {
            w.u8(0);
            train.iter().for_each(|x| w.matrix(x));
        }
        Support::Nystrom {
            anchors,
            w_pinv_sqrt,
            anchor_indices,
        } => {
            w.u8(1);
            anchors.iter().for_each(|x| w.matrix(x));
            w_pinv_sqrt.iter().for_each(|x| w.matrix(x));
            w.len(anchor_indices.len());
            anchor_indices.iter().for_each(|&i| w.u64(i as u64));
        }
    }
    w.len(m.heads.len());
    for h in &m.heads {
        w.vector(&h.g);
        w.vector(&h.w);
    }
    let meta = &m.meta;
    w.str(&meta.method);
    w.f64(meta.lambda);
    w.f64(meta.eta);
    w.f64(meta.mu);
    w.u8(meta.sparse as u8);
    w.u8(meta.learn_w as u8);
    w.f64(meta.fraction);
    match meta.seed {
        Some(s) => {
            w.u8(1);
            w.u64(s);
        }
        None => w.u8(0),
    }
    w.vector(&DVector::from_column_slice(&meta.objective_tail));
    w.0
}

fn decode_payload(buf: &[u8]) -> Result<ModelState> {
    let mut r = Reader { buf, pos: 0 };
    let task = match r.u8("task")? {
        0 => Task::Regression,
        1 => Task::Binary {
            negative: r.i64("task.negative")?,
            positive: r.i64("task.positive")?,
        },
        2 => {
            let n = r.len("task.classes", 8)?;
            Task::OneVsAll(
                (0..n)
                    .map(|_| r.i64("task.classes"))
                    .collect::<Result<_>>()?,
            )
        }
        t => return Err(bad("task", format!("unknown tag {t}"))),
    };
    let views = r.len("kernels", 9)?;
    let mut kernel_configs = Vec::with_capacity(views);
    for l in 0..views {
        let field = format!("kernels[{l}]");
        let family = match r.u8(&field)? {
            0 => KernelFamily::Gaussian,
            1 => KernelFamily::Linear,
            t => return Err(bad(&field, format!("unknown kernel family {t}"))),
        };
        let cfg = KernelConfig {
            family,
            sigma: r.f64(&field)?,
        };
        cfg.validate().map_err(|e| bad(&field, e.to_string()))?;
        kernel_configs.push(cfg);
    }
    let support = match r.u8("support")? {
        0 => Support::Full {
            train: (0..views)
                .map(|l| r.matrix(&format!("support.train[{l}]")))
                .collect::<Result<_>>()?,
        },
        1 => {
            let anchors = (0..views)
                .map(|l| r.matrix(&format!("support.anchors[{l}]")))
                .collect::<Result<Vec<_>>>()?;
            let w_pinv_sqrt = (0..views)
                .map(|l| r.matrix(&format!("support.w_pinv_sqrt[{l}]")))
                .collect::<Result<Vec<_>>>()?;
            let p = r.len("support.anchor_indices", 8)?;
            let anchor_indices = (0..p)
                .map(|_| r.u64("support.anchor_indices").map(|i| i as usize))
                .collect::<Result<_>>()?;
            Support::Nystrom {
                anchors,
                w_pinv_sqrt,
                anchor_indices,
            }
        }
        t => return Err(bad("support", format!("unknown tag {t}"))),
    };
    let nheads = r.len("heads", 16)?;
    let heads = (0..nheads)
        .map(|k| {
            Ok(Head {
                g: r.vector(&format!("heads[{k}].g"))?,
                w: r.vector(&format!("heads[{k}].w"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = ModelMeta {
        method: r.str("meta.method")?,
        lambda: r.f64("meta.lambda")?,
        eta: r.f64("meta.eta")?,
        mu: r.f64("meta.mu")?,
        sparse: r.bool("meta.sparse")?,
        learn_w: r.bool("meta.learn_w")?,
        fraction: r.f64("meta.fraction")?,
        seed: if r.bool("meta.seed")? {
            Some(r.u64("meta.seed")?)
        } else {
            None
        },
        objective_tail: r.vector("meta.objective_tail")?.as_slice().to_vec(),
    };
    if r.pos != buf.len() {
        return Err(bad(
            "payload",
            format!("{} trailing bytes", buf.len() - r.pos),
        ));
    }
    let model = ModelState {
        kernel_configs,
        support,
        heads,
        task,
        meta,
    };
    check_consistency(&model)?;
    Ok(model)
}

fn check_consistency(m: &ModelState) -> Result<()> {
    let v = m.kernel_configs.len();
    if v == 0 {
        return Err(bad("kernels", "model has no views"));
    }
    let (rows, width) = match &m.support {
        Support::Full { train } => (train[0].nrows(), train[0].nrows()),
        Support::Nystrom {
            anchors,
            w_pinv_sqrt,
            anchor_indices,
        } => {
            let p = anchors[0].nrows();
            if anchor_indices.len() != p {
                return Err(bad(
                    "support.anchor_indices",
                    "count differs from anchor rows",
                ));
            }
            if w_pinv_sqrt.iter().any(|w| w.shape() != (p, p)) {
                return Err(bad(
                    "support.w_pinv_sqrt",
                    format!("expected {p}×{p} blocks"),
                ));
            }
            (p, p)
        }
    };
    let points = match &m.support {
        Support::Full { train } => train,
        Support::Nystrom { anchors, .. } => anchors,
    };
    if points.iter().any(|x| x.nrows() != rows) {
        return Err(bad("support", "views disagree on sample count"));
    }
    let expected_heads = match &m.task {
        Task::Regression | Task::Binary { .. } => 1,
        Task::OneVsAll(c) => c.len(),
    };
    if m.heads.len() != expected_heads {
        return Err(bad(
            "heads",
            format!("expected {expected_heads}, found {}", m.heads.len()),
        ));
    }
    for (k, h) in m.heads.iter().enumerate() {
        if h.g.len() != v * width {
            return Err(bad(
                &format!("heads[{k}].g"),
                format!("expected length {}", v * width),
            ));
        }
        if h.w.len() != v {
            return Err(bad(
                &format!("heads[{k}].w"),
                format!("expected length {v}"),
            ));
        }
    }
    Ok(())
}

pub fn write_model<W: Write>(model: &ModelState, mut out: W) -> Result<()> {
    let payload = encode_payload(model);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(payload.len() as u64).to_le_bytes())?;
    out.write_all(&payload)?;
    out.write_all(&Sha256::digest(&payload))?;
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<ModelState> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < HEADER_LEN {
        return Err(bad("header", format!("file is only {} bytes", buf.len())));
    }
    if &buf[..8] != MAGIC {
        return Err(bad("magic", "not a model file"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(
            "version",
            format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let len = u64::from_le_bytes(buf[12..20].try_into().expect("8 bytes"));
    let body = &buf[HEADER_LEN..];
    if (body.len() as u64) != len.saturating_add(CHECKSUM_LEN as u64) {
        return Err(bad(
            "length",
            format!(
                "header declares {len} payload bytes, file holds {}",
                body.len()
            ),
        ));
    }
    let (payload, checksum) = body.split_at(len as usize);
    if Sha256::digest(payload).as_slice() != checksum {
        return Err(bad("checksum", "SHA-256 mismatch, file is corrupted"));
    }
    decode_payload(payload)
}

pub fn save(model: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_model(model, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelState> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
