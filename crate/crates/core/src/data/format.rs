//! EEGX subject files.
//!
//! Little-endian layout:
//!
//! ```text
//! "EEGX" | version u8 = 1 | C u32 | T u32 | N u32 | id_len u32 | id bytes (UTF-8)
//! N × ( label u8 | C·T f32, channel-major )
//! ```
//!
//! Samples are stored as `f32` and promoted to `f64` on load.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{Epoch, Label, LabeledEpoch, SubjectDataset};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EEGX";
pub const VERSION: u8 = 1;
/// Header length with an empty subject id.
pub const HEADER_LEN: usize = 21;

/// Serializes `dataset`; samples are narrowed to `f32`.
pub fn write_subject<W: Write>(dataset: &SubjectDataset, mut out: W) -> std::io::Result<()> {
    let (c, t) = (dataset.channels(), dataset.samples());
    let id = dataset.subject_id().as_bytes();
    let mut buf = Vec::with_capacity(HEADER_LEN + id.len() + dataset.len() * (1 + 4 * c * t));
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    for v in [c, t, dataset.len(), id.len()] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(id);
    for e in dataset.epochs() {
        buf.push(e.label.as_u8());
        let x = e.epoch.data();
        for ch in 0..c {
            for s in 0..t {
                buf.extend_from_slice(&(x[(ch, s)] as f32).to_le_bytes());
            }
        }
    }
    out.write_all(&buf)
}

pub fn save_subject(dataset: &SubjectDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_subject(dataset, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_subject(path: impl AsRef<Path>) -> Result<SubjectDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

/// File name used for a subject inside a corpus directory.
pub fn subject_file_name(subject_id: &str) -> String {
    format!("{subject_id}.eegx")
}

/// Writes each subject to `dir/<id>.eegx`, creating `dir` if needed.
pub fn save_corpus(subjects: &[SubjectDataset], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in subjects {
        save_subject(s, dir.join(subject_file_name(s.subject_id())))?;
    }
    Ok(())
}

/// Loads every `*.eegx` file in `dir`, ordered by file name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<SubjectDataset>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("eegx")))
        .collect();
    if paths.is_empty() {
        return Err(Error::config(format!("no .eegx files in {}", dir.display())));
    }
    paths.sort();
    paths
        .iter()
        .map(|p| load_subject(p).map_err(|e| e.in_subject(p.display().to_string())))
        .collect()
}

pub fn read_subject<R: Read>(mut input: R) -> Result<SubjectDataset> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<reader>", e))?;
    parse(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.offset(),
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            )),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn parse(bytes: &[u8]) -> Result<SubjectDataset> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"EEGX\""));
    }
    let version = cur.u8("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let c = cur.u32("channel count")? as usize;
    let t = cur.u32("sample count")? as usize;
    let n = cur.u32("epoch count")? as usize;
    if c < 2 || t < 2 {
        return Err(Error::format(5, format!("epochs must be at least 2×2, header says {c}×{t}")));
    }
    if n == 0 {
        return Err(Error::format(13, "file holds no epochs"));
    }
    let id_len = cur.u32("subject id length")? as usize;
    let id_offset = cur.offset();
    let id = std::str::from_utf8(cur.take(id_len, "subject id")?)
        .map_err(|e| Error::format(id_offset, format!("subject id is not UTF-8: {e}")))?
        .to_owned();

    let record = c
        .checked_mul(t)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(5, "epoch dimensions overflow"))?;
    let mut epochs = Vec::with_capacity(n.min(bytes.len() / (record + 1).max(1) + 1));
    for _ in 0..n {
        let label_offset = cur.offset();
        let raw = cur.u8("epoch label")?;
        let label = Label::from_u8(raw).ok_or(Error::Label {
            offset: label_offset,
            value: raw,
        })?;
        let sample_offset = cur.offset();
        let payload = cur.take(record, "epoch samples")?;
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                sample_offset + 4 * k as u64,
                "non-finite sample",
            ));
        }
        let epoch = Epoch::new(DMatrix::from_row_slice(c, t, &values))?;
        epochs.push(LabeledEpoch::new(epoch, label));
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            cur.offset(),
            format!("{} trailing bytes after last epoch", bytes.len() - cur.pos),
        ));
    }
    SubjectDataset::new(id, epochs)
}
