//! Binary shard container for fixed-horizon action chunks, plus its JSON
//! manifest sidecar.
//!
//! Layout: 4-byte magic `UACT`, u16 version, u32 `h`, u32 `dims`, u32
//! chunk count, then per chunk a length-prefixed episode id, start frame
//! (u32), validity (u16), arm-mask byte (bit0 = left, bit1 = right),
//! `h*dims` f32 action rows and `dims` f32 state values. All integers and
//! floats are little-endian; actions are stored in f32.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionChunk, ACTION_DIMS};

pub const SHARD_MAGIC: [u8; 4] = *b"UACT";
pub const SHARD_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("shard I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a chunk shard (bad magic)")]
    BadMagic,
    #[error("unsupported shard version {0}")]
    BadVersion(u16),
    #[error("corrupt shard: {0}")]
    Corrupt(String),
}

/// JSON sidecar describing a shard; `offsets[i]` is the byte offset of
/// chunk `i`'s record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShardManifest {
    pub schema_version: u32,
    pub shard: String,
    pub version: u16,
    pub h: u32,
    pub dims: u32,
    pub chunk_count: u32,
    pub offsets: Vec<u64>,
}

fn mask_byte(mask: [bool; 2]) -> u8 {
    (mask[0] as u8) | ((mask[1] as u8) << 1)
}

fn mask_from_byte(b: u8) -> Result<[bool; 2], ShardError> {
    if b & !0b11 != 0 {
        return Err(ShardError::Corrupt(format!("arm mask byte {b:#04x}")));
    }
    Ok([b & 1 != 0, b & 2 != 0])
}

/// Serializes chunks into shard bytes. Every chunk must already be padded
/// to `h` rows.
pub fn encode_shard(chunks: &[ActionChunk], h: usize) -> Result<(Vec<u8>, Vec<u64>), ShardError> {
    if h == 0 || h > u16::MAX as usize {
        return Err(ShardError::Corrupt(format!("invalid horizon {h}")));
    }
    if chunks.len() > u32::MAX as usize {
        return Err(ShardError::Corrupt("too many chunks".to_string()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + chunks.len() * (32 + (h + 1) * ACTION_DIMS * 4));
    out.extend_from_slice(&SHARD_MAGIC);
    out.extend_from_slice(&SHARD_VERSION.to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(ACTION_DIMS as u32).to_le_bytes());
    out.extend_from_slice(&(chunks.len() as u32).to_le_bytes());
    let mut offsets = Vec::with_capacity(chunks.len());
    for c in chunks {
        if c.rows.len() != h {
            return Err(ShardError::Corrupt(format!(
                "chunk '{}' has {} rows, expected {h}",
                c.episode_id,
                c.rows.len()
            )));
        }
        if c.validity == 0 || c.validity as usize > h {
            return Err(ShardError::Corrupt(format!(
                "chunk '{}' validity {} out of 1..={h}",
                c.episode_id, c.validity
            )));
        }
        let id = c.episode_id.as_bytes();
        if id.len() > u16::MAX as usize {
            return Err(ShardError::Corrupt(format!(
                "episode id of {} bytes exceeds the u16 length prefix",
                id.len()
            )));
        }
        offsets.push(out.len() as u64);
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&c.start_frame.to_le_bytes());
        out.extend_from_slice(&c.validity.to_le_bytes());
        out.push(mask_byte(c.arm_mask));
        for row in &c.rows {
            for v in row {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        for v in &c.state {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok((out, offsets))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ShardError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                ShardError::Corrupt(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ShardError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ShardError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, ShardError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses shard bytes back into chunks, returning the horizon and chunk
/// list. Action values come back as f32-precision f64.
pub fn decode_shard(bytes: &[u8]) -> Result<(u32, Vec<ActionChunk>), ShardError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != SHARD_MAGIC {
        return Err(ShardError::BadMagic);
    }
    let version = cur.u16()?;
    if version != SHARD_VERSION {
        return Err(ShardError::BadVersion(version));
    }
    let h = cur.u32()?;
    let dims = cur.u32()?;
    if dims as usize != ACTION_DIMS {
        return Err(ShardError::Corrupt(format!(
            "dims {dims} unsupported (expected {ACTION_DIMS})"
        )));
    }
    if h == 0 {
        return Err(ShardError::Corrupt("zero horizon".to_string()));
    }
    let count = cur.u32()?;
    let mut chunks = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let id_len = cur.u16()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| ShardError::Corrupt("episode id is not UTF-8".to_string()))?
            .to_string();
        let start_frame = cur.u32()?;
        let validity = cur.u16()?;
        if validity == 0 || validity > h as u16 {
            return Err(ShardError::Corrupt(format!(
                "chunk '{id}' validity {validity} out of 1..={h}"
            )));
        }
        let arm_mask = mask_from_byte(cur.take(1)?[0])?;
        let mut rows = vec![[0.0f64; ACTION_DIMS]; h as usize];
        for row in &mut rows {
            for v in row.iter_mut() {
                *v = cur.f32()? as f64;
            }
        }
        let mut state = [0.0f64; ACTION_DIMS];
        for v in &mut state {
            *v = cur.f32()? as f64;
        }
        chunks.push(ActionChunk {
            episode_id: id,
            start_frame,
            validity,
            arm_mask,
            rows,
            state,
        });
    }
    if cur.pos != bytes.len() {
        return Err(ShardError::Corrupt(format!(
            "{} trailing bytes after the last chunk",
            bytes.len() - cur.pos
        )));
    }
    Ok((h, chunks))
}

/// Writes a shard and its manifest sidecar (`<path>.manifest.json`).
pub fn write_shard(path: &Path, chunks: &[ActionChunk], h: usize) -> Result<ShardManifest, ShardError> {
    let (bytes, offsets) = encode_shard(chunks, h)?;
    fs::write(path, &bytes)?;
    let manifest = ShardManifest {
        schema_version: 1,
        shard: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        version: SHARD_VERSION,
        h: h as u32,
        dims: ACTION_DIMS as u32,
        chunk_count: chunks.len() as u32,
        offsets,
    };
    let sidecar = manifest_path(path);
    fs::write(&sidecar, serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}

/// Reads a shard file, returning its horizon and chunks.
pub fn read_shard(path: &Path) -> Result<(u32, Vec<ActionChunk>), ShardError> {
    decode_shard(&fs::read(path)?)
}

/// Path of the manifest sidecar next to a shard file.
pub fn manifest_path(shard: &Path) -> std::path::PathBuf {
    let mut name = shard
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".manifest.json");
    shard.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Values exactly representable in f32 so the f64->f32->f64 round trip
    /// is bitwise.
    fn chunk(id: &str, start: u32, validity: u16, mask: [bool; 2], h: usize) -> ActionChunk {
        let mut rows = vec![[0.0; ACTION_DIMS]; h];
        for (i, row) in rows.iter_mut().enumerate().take(validity as usize) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (i as f64) * 0.5 - (j as f64) * 0.25;
            }
        }
        let mut state = [0.0; ACTION_DIMS];
        for (j, v) in state.iter_mut().enumerate() {
            *v = j as f64 * 0.125;
        }
        ActionChunk {
            episode_id: id.to_string(),
            start_frame: start,
            validity,
            arm_mask: mask,
            rows,
            state,
        }
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let chunks = vec![
            chunk("ep_0", 0, 16, [false, true], 16),
            chunk("ep_1", 16, 4, [true, true], 16),
            chunk("another/длинный-id", 32, 1, [true, false], 16),
        ];
        let (bytes, offsets) = encode_shard(&chunks, 16).unwrap();
        assert_eq!(offsets.len(), 3);
        assert_eq!(offsets[0], HEADER_LEN as u64);
        let (h, back) = decode_shard(&bytes).unwrap();
        assert_eq!(h, 16);
        assert_eq!(back.len(), chunks.len());
        for (a, b) in back.iter().zip(&chunks) {
            assert_eq!(a.episode_id, b.episode_id);
            assert_eq!(a.start_frame, b.start_frame);
            assert_eq!(a.validity, b.validity);
            assert_eq!(a.arm_mask, b.arm_mask);
            assert_eq!(a.rows, b.rows);
            assert_eq!(a.state, b.state);
        }
    }

    #[test]
    fn offsets_point_at_each_record() {
        let chunks = vec![
            chunk("a", 0, 2, [false, true], 4),
            chunk("bc", 4, 4, [false, true], 4),
        ];
        let (bytes, offsets) = encode_shard(&chunks, 4).unwrap();
        for (off, c) in offsets.iter().zip(&chunks) {
            let at = *off as usize;
            let id_len = u16::from_le_bytes([bytes[at], bytes[at + 1]]) as usize;
            assert_eq!(&bytes[at + 2..at + 2 + id_len], c.episode_id.as_bytes());
        }
    }

    #[test]
    fn empty_shard_round_trips() {
        let (bytes, offsets) = encode_shard(&[], 16).unwrap();
        assert!(offsets.is_empty());
        let (h, back) = decode_shard(&bytes).unwrap();
        assert_eq!(h, 16);
        assert!(back.is_empty());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let (mut bytes, _) = encode_shard(&[chunk("e", 0, 1, [false, true], 2)], 2).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_shard(&bytes), Err(ShardError::BadMagic)));
    }

    #[test]
    fn future_version_is_rejected() {
        let (mut bytes, _) = encode_shard(&[], 2).unwrap();
        bytes[4..6].copy_from_slice(&7u16.to_le_bytes());
        assert!(matches!(decode_shard(&bytes), Err(ShardError::BadVersion(7))));
    }

    #[test]
    fn truncation_anywhere_is_corrupt() {
        let (bytes, _) = encode_shard(&[chunk("ep", 0, 2, [true, true], 2)], 2).unwrap();
        for cut in [3, HEADER_LEN - 1, HEADER_LEN + 1, bytes.len() - 1] {
            assert!(
                matches!(decode_shard(&bytes[..cut]), Err(ShardError::Corrupt(_))),
                "cut at {cut} must be corrupt"
            );
        }
    }

    #[test]
    fn trailing_garbage_is_corrupt() {
        let (mut bytes, _) = encode_shard(&[chunk("ep", 0, 2, [true, true], 2)], 2).unwrap();
        bytes.push(0);
        assert!(matches!(decode_shard(&bytes), Err(ShardError::Corrupt(_))));
    }

    #[test]
    fn wrong_row_count_is_rejected_at_encode() {
        let c = chunk("ep", 0, 2, [false, true], 8);
        assert!(encode_shard(&[c], 16).is_err());
    }

    #[test]
    fn zero_validity_is_rejected() {
        let mut c = chunk("ep", 0, 1, [false, true], 4);
        c.validity = 0;
        assert!(encode_shard(&[c], 4).is_err());
    }

    #[test]
    fn file_round_trip_with_manifest() {
        let dir = std::env::temp_dir().join(format!("uact-shard-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chunks.uact");
        let chunks = vec![chunk("ep_9", 3, 4, [false, true], 4)];
        let manifest = write_shard(&path, &chunks, 4).unwrap();
        assert_eq!(manifest.chunk_count, 1);
        assert_eq!(manifest.shard, "chunks.uact");
        assert_eq!(manifest.h, 4);
        let side = manifest_path(&path);
        let parsed: ShardManifest =
            serde_json::from_slice(&fs::read(&side).unwrap()).unwrap();
        assert_eq!(parsed.offsets, manifest.offsets);
        let (h, back) = read_shard(&path).unwrap();
        assert_eq!(h, 4);
        assert_eq!(back[0].episode_id, "ep_9");
        fs::remove_dir_all(&dir).unwrap();
    }
}
