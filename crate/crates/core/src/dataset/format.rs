//! The `.bnnds` data-set file format.
//!
//! Layout (bit-exact): magic `BNNDS1` (6 bytes), version u8, header
//! length u32 LE, UTF-8 JSON header
//! `{task, n, channels, height, width, label_kind, composition, seed}`,
//! then the payload: images as raw bytes `[n][c][h][w]`, labels as
//! u16 LE (`[n]` or `[n][2]`), condition tags as u8 `[n]`.

use super::{Dataset, LabelKind, Task};
use crate::error::{Error, Result};
use crate::scenes::IMG;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::atomic::AtomicU64;

const MAGIC: &[u8; 6] = b"BNNDS1";
const VERSION: u8 = 1;

/// The JSON header; field order is part of the format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub task: Task,
    pub n: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub label_kind: LabelKind,
    pub composition: BTreeMap<String, u64>,
    pub seed: u64,
}

impl Header {
    fn labels_per_sample(&self) -> usize {
        match self.label_kind {
            LabelKind::Binary => 1,
            LabelKind::CountPair => 2,
        }
    }

    fn image_bytes(&self) -> usize {
        self.n * self.channels * self.height * self.width
    }

    fn label_bytes(&self) -> usize {
        self.n * self.labels_per_sample() * 2
    }
}

fn format_err(offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let header = Header {
        task: ds.task,
        n: ds.n(),
        channels: ds.channels,
        height: IMG,
        width: IMG,
        label_kind: ds.task.label_kind(),
        composition: ds.composition.clone(),
        seed: ds.seed,
    };
    let json = serde_json::to_vec(&header)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&[VERSION])?;
    f.write_all(&(json.len() as u32).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&ds.images)?;
    let mut label_bytes = Vec::with_capacity(ds.labels.len() * 2);
    for &l in &ds.labels {
        label_bytes.extend_from_slice(&l.to_le_bytes());
    }
    f.write_all(&label_bytes)?;
    f.write_all(&ds.tags)?;
    f.flush()?;
    Ok(())
}

fn read_header(f: &mut impl Read) -> Result<(Header, u64)> {
    let mut fixed = [0u8; 11];
    f.read_exact(&mut fixed)
        .map_err(|_| format_err(0, "truncated fixed header"))?;
    if &fixed[0..6] != MAGIC {
        return Err(format_err(0, "bad magic"));
    }
    if fixed[6] != VERSION {
        return Err(format_err(6, format!("unsupported version {}", fixed[6])));
    }
    let json_len = u32::from_le_bytes(fixed[7..11].try_into().unwrap()) as usize;
    let mut json = vec![0u8; json_len];
    f.read_exact(&mut json)
        .map_err(|_| format_err(11, "truncated header JSON"))?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| format_err(11, format!("header JSON: {e}")))?;
    Ok((header, 11 + json_len as u64))
}

/// Reads only the header; the payload is never touched.
pub fn inspect(path: &Path) -> Result<Header> {
    let mut f = std::fs::File::open(path)?;
    Ok(read_header(&mut f)?.0)
}

/// Header plus label histogram, skipping the image payload.
pub fn summary(path: &Path) -> Result<(Header, BTreeMap<String, u64>)> {
    let mut f = std::fs::File::open(path)?;
    let (header, offset) = read_header(&mut f)?;
    f.seek(SeekFrom::Start(offset + header.image_bytes() as u64))?;
    let mut label_bytes = vec![0u8; header.label_bytes()];
    f.read_exact(&mut label_bytes)
        .map_err(|_| format_err(offset + header.image_bytes() as u64, "truncated labels"))?;
    let labels: Vec<u16> = label_bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut hist = BTreeMap::new();
    match header.label_kind {
        LabelKind::Binary => {
            for l in labels {
                *hist.entry(format!("y={l}")).or_insert(0) += 1;
            }
        }
        LabelKind::CountPair => {
            for pair in labels.chunks_exact(2) {
                let key = if pair[0] > pair[1] {
                    "larger_first"
                } else {
                    "larger_second"
                };
                *hist.entry(key.to_string()).or_insert(0) += 1;
            }
        }
    }
    Ok((header, hist))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let (header, mut offset) = read_header(&mut f)?;
    if header.height != IMG || header.width != IMG {
        return Err(format_err(11, "unsupported image size"));
    }
    if header.channels != header.task.channels() || header.label_kind != header.task.label_kind() {
        return Err(format_err(11, "header inconsistent with task"));
    }

    let mut images = vec![0u8; header.image_bytes()];
    f.read_exact(&mut images)
        .map_err(|_| format_err(offset, "truncated image payload"))?;
    offset += header.image_bytes() as u64;

    let mut label_bytes = vec![0u8; header.label_bytes()];
    f.read_exact(&mut label_bytes)
        .map_err(|_| format_err(offset, "truncated labels"))?;
    offset += header.label_bytes() as u64;
    let labels: Vec<u16> = label_bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut tags = vec![0u8; header.n];
    f.read_exact(&mut tags)
        .map_err(|_| format_err(offset, "truncated condition tags"))?;
    offset += header.n as u64;

    let mut extra = [0u8; 1];
    if f.read(&mut extra)? != 0 {
        return Err(format_err(offset, "trailing bytes after payload"));
    }

    let ds = Dataset {
        task: header.task,
        channels: header.channels,
        images,
        labels,
        tags,
        seed: header.seed,
        composition: header.composition,
        reads: AtomicU64::new(0),
    };
    // recompute composition from tags and cross-check
    let recomputed = {
        let mut c = BTreeMap::new();
        for &t in &ds.tags {
            *c.entry(super::condition_name(ds.task, t)).or_insert(0u64) += 1;
        }
        c
    };
    if recomputed != ds.composition {
        return Err(format_err(11, "composition table does not match tags"));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::super::{build_occlusion_set, build_numerosity_set};
    use super::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("occ.bnnds");
        let ds = build_occlusion_set(9).unwrap();
        save(&ds, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(ds, back);
        // and the file itself is reproducible
        let path2 = dir.path().join("occ2.bnnds");
        save(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn header_only_inspection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("num.bnnds");
        let ds = build_numerosity_set(4).unwrap();
        save(&ds, &path).unwrap();
        let header = inspect(&path).unwrap();
        assert_eq!(header.task, Task::Numerosity);
        assert_eq!(header.n, 54_000);
        assert_eq!(header.channels, 2);
        assert_eq!(header.composition["2:1"], 6000);
        let (_, hist) = summary(&path).unwrap();
        assert_eq!(hist["larger_first"], 27_000);
    }

    #[test]
    fn truncation_and_corruption_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("occ.bnnds");
        let ds = build_occlusion_set(11).unwrap();
        save(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let cut = dir.path().join("cut.bnnds");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load(&cut), Err(Error::Format { .. })));

        let bad = dir.path().join("bad.bnnds");
        let mut corrupted = bytes.clone();
        corrupted[2] = b'X';
        std::fs::write(&bad, &corrupted).unwrap();
        assert!(matches!(load(&bad), Err(Error::Format { offset: 0, .. })));

        let long = dir.path().join("long.bnnds");
        let mut extended = bytes;
        extended.push(7);
        std::fs::write(&long, &extended).unwrap();
        assert!(matches!(load(&long), Err(Error::Format { .. })));
    }
}
