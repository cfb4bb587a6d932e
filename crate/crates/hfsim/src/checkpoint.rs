//! Indexed tensor checkpoints.
//!
//! Blob layout, all integers little-endian:
//!
//! ```text
//! magic "HFCK" | version u32 | created_at u64 | index_len u64 |
//! payload_len u64 | index (JSON, index_len bytes) | payload
//! ```
//!
//! The index records every tensor's id, dtype, shape, and (offset, length)
//! within the payload, so loading one tensor is a single contiguous read.
//! Entries tile the payload exactly: no gaps, no overlap. Any length
//! mismatch anywhere (truncation, trailing bytes, inconsistent entry) is a
//! format error before any data is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{make_chunk_plan, Buffer, ChunkPlan, DType, DeviceRef};

pub const MAGIC: &[u8; 4] = b"HFCK";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub tensor_id: String,
    pub dtype: DType,
    pub shape: Vec<u64>,
    /// Byte offset within the payload region.
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub format_version: u32,
    /// Logical step counter at save time.
    pub created_at: u64,
    pub entries: Vec<IndexEntry>,
}

impl CheckpointIndex {
    pub fn find(&self, tensor_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.tensor_id == tensor_id)
    }

    pub fn payload_len(&self) -> u64 {
        self.entries.iter().map(|e| e.length).sum()
    }

    /// Offsets strictly increasing, ranges contiguous from zero, lengths
    /// consistent with shape and dtype.
    pub fn validate(&self) -> Result<()> {
        let mut cursor = 0u64;
        for e in &self.entries {
            if e.offset != cursor {
                return Err(Error::format(format!(
                    "tensor `{}` at offset {} leaves a gap or overlap (expected {})",
                    e.tensor_id, e.offset, cursor
                )));
            }
            let elems: u64 = e.shape.iter().product();
            if elems * e.dtype.width_bytes() as u64 != e.length {
                return Err(Error::format(format!(
                    "tensor `{}` length {} inconsistent with shape {:?} of {}",
                    e.tensor_id,
                    e.length,
                    e.shape,
                    e.dtype.name()
                )));
            }
            cursor += e.length;
        }
        Ok(())
    }
}

/// A tensor queued for saving.
#[derive(Debug, Clone)]
pub struct TensorEntry {
    pub id: String,
    pub shape: Vec<u64>,
    pub buffer: Buffer,
}

impl TensorEntry {
    /// 1-D tensor from a buffer.
    pub fn flat(id: impl Into<String>, buffer: Buffer) -> Self {
        TensorEntry {
            id: id.into(),
            shape: vec![buffer.element_count() as u64],
            buffer,
        }
    }
}

/// A serialized checkpoint plus the batch-write bookkeeping.
#[derive(Debug, Clone)]
pub struct CheckpointBlob {
    pub bytes: Vec<u8>,
    pub index: CheckpointIndex,
    /// How the blob splits into batch writes.
    pub write_batches: ChunkPlan,
}

/// Serializes tensors in order, payload as the concatenation of their raw
/// bytes, and records the chunk-aligned batch writes.
pub fn save_checkpoint(
    tensors: &[TensorEntry],
    chunk_size: u64,
    created_at: u64,
) -> Result<CheckpointBlob> {
    let mut seen = std::collections::BTreeSet::new();
    for t in tensors {
        if !seen.insert(t.id.as_str()) {
            return Err(Error::invalid(format!("duplicate tensor id `{}`", t.id)));
        }
        let elems: u64 = t.shape.iter().product();
        if elems != t.buffer.element_count() as u64 {
            return Err(Error::invalid(format!(
                "tensor `{}` shape {:?} does not match its {} elements",
                t.id,
                t.shape,
                t.buffer.element_count()
            )));
        }
    }

    let mut entries = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    for t in tensors {
        entries.push(IndexEntry {
            tensor_id: t.id.clone(),
            dtype: t.buffer.dtype(),
            shape: t.shape.clone(),
            offset: payload.len() as u64,
            length: t.buffer.len_bytes(),
        });
        payload.extend_from_slice(t.buffer.payload());
    }
    let index = CheckpointIndex {
        format_version: FORMAT_VERSION,
        created_at,
        entries,
    };
    index.validate()?;

    let index_json = serde_json::to_vec(&index)?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + index_json.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&created_at.to_le_bytes());
    bytes.extend_from_slice(&(index_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&index_json);
    bytes.extend_from_slice(&payload);

    let write_batches = make_chunk_plan(bytes.len() as u64, chunk_size)?;
    Ok(CheckpointBlob {
        bytes,
        index,
        write_batches,
    })
}

fn read_u64(blob: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(blob[at..at + 8].try_into().expect("bounds checked"))
}

/// Parses and fully validates a blob, returning the index and the byte
/// offset where the payload starts.
pub fn parse_checkpoint(blob: &[u8]) -> Result<(CheckpointIndex, usize)> {
    if blob.len() < HEADER_LEN {
        return Err(Error::format(format!(
            "blob of {} bytes is shorter than the {HEADER_LEN}-byte header",
            blob.len()
        )));
    }
    if &blob[0..4] != MAGIC {
        return Err(Error::format("bad magic, not a checkpoint"));
    }
    let version = u32::from_le_bytes(blob[4..8].try_into().expect("bounds checked"));
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported format version {version}"
        )));
    }
    let created_at = read_u64(blob, 8);
    let index_len = read_u64(blob, 16) as usize;
    let payload_len = read_u64(blob, 24) as usize;
    let expected = HEADER_LEN
        .checked_add(index_len)
        .and_then(|v| v.checked_add(payload_len))
        .ok_or_else(|| Error::format("header lengths overflow"))?;
    if blob.len() != expected {
        return Err(Error::format(format!(
            "blob is {} bytes, header promises {expected} (truncated or trailing bytes)",
            blob.len()
        )));
    }
    let index: CheckpointIndex = serde_json::from_slice(&blob[HEADER_LEN..HEADER_LEN + index_len])
        .map_err(|e| Error::format(format!("index does not parse: {e}")))?;
    index.validate()?;
    if index.created_at != created_at {
        return Err(Error::format("index and header disagree on created_at"));
    }
    if index.payload_len() != payload_len as u64 {
        return Err(Error::format(format!(
            "index covers {} payload bytes, header promises {payload_len}",
            index.payload_len()
        )));
    }
    Ok((index, HEADER_LEN + index_len))
}

/// Loads one tensor: validates the blob, then performs exactly one
/// contiguous read of the entry's (offset, length).
pub fn load_tensor(blob: &[u8], index: &CheckpointIndex, tensor_id: &str) -> Result<Buffer> {
    let entry = index
        .find(tensor_id)
        .ok_or_else(|| Error::not_found(format!("tensor `{tensor_id}`")))?
        .clone();
    let (_, payload_start) = parse_checkpoint(blob)?;
    let start = payload_start as u64 + entry.offset;
    let end = start + entry.length;
    if end > blob.len() as u64 {
        return Err(Error::format(format!(
            "tensor `{tensor_id}` range {}..{} exceeds blob",
            start, end
        )));
    }
    let bytes = blob[start as usize..end as usize].to_vec();
    let elems: u64 = entry.shape.iter().product();
    Buffer::new(entry.dtype, elems as usize, bytes, DeviceRef::cpu(0))
}

/// Periodic-save policy: save every `interval` logical steps, keep the last
/// `keep_last` checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavePolicy {
    pub interval: u64,
    pub keep_last: u64,
}

impl SavePolicy {
    pub fn new(interval: u64, keep_last: u64) -> Result<Self> {
        if interval == 0 || keep_last == 0 {
            return Err(Error::invalid("interval and keep_last must be >= 1"));
        }
        Ok(SavePolicy { interval, keep_last })
    }

    pub fn should_save(&self, step: u64) -> bool {
        step > 0 && step % self.interval == 0
    }

    /// Checkpoints retained after a save at `saved_steps.last()`.
    pub fn retained(&self, saved_steps: &[u64]) -> Vec<u64> {
        let skip = saved_steps.len().saturating_sub(self.keep_last as usize);
        saved_steps[skip..].to_vec()
    }
}

/// Steps of progress lost when failing at `failure_step` under a policy:
/// the distance back to the latest completed periodic save.
pub fn recovery_loss_bound(policy: &SavePolicy, failure_step: u64) -> u64 {
    failure_step % policy.interval
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::buffer_fill_pattern;

    fn tensor(id: &str, dtype: DType, n: usize, seed: u64) -> TensorEntry {
        TensorEntry::flat(id, buffer_fill_pattern(dtype, n, seed))
    }

    #[test]
    fn empty_tensor_list_header_only() {
        let blob = save_checkpoint(&[], 1 << 20, 0).unwrap();
        assert!(blob.index.entries.is_empty());
        let (index, payload_start) = parse_checkpoint(&blob.bytes).unwrap();
        assert!(index.entries.is_empty());
        assert_eq!(payload_start, blob.bytes.len());
    }

    #[test]
    fn offsets_by_width_arithmetic() {
        let blob = save_checkpoint(
            &[
                tensor("a", DType::Fp32, 4, 1),
                tensor("b", DType::Fp32, 8, 2),
            ],
            1 << 20,
            0,
        )
        .unwrap();
        assert_eq!(blob.index.entries[0].offset, 0);
        assert_eq!(blob.index.entries[1].offset, 16);
        assert_eq!(blob.index.entries[1].length, 32);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = save_checkpoint(
            &[tensor("x", DType::Fp16, 2, 1), tensor("x", DType::Fp16, 2, 2)],
            1 << 20,
            0,
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn round_trip_byte_identical() {
        let tensors: Vec<TensorEntry> = (0..20)
            .map(|i| {
                tensor(
                    &format!("t{i}"),
                    DType::ALL[i % DType::ALL.len()],
                    17 + i * 3,
                    i as u64,
                )
            })
            .collect();
        let blob = save_checkpoint(&tensors, 4096, 42).unwrap();
        for t in &tensors {
            let loaded = load_tensor(&blob.bytes, &blob.index, &t.id).unwrap();
            assert_eq!(loaded.payload(), t.buffer.payload(), "{}", t.id);
            assert_eq!(loaded.dtype(), t.buffer.dtype());
        }
    }

    #[test]
    fn unknown_id_not_found() {
        let blob = save_checkpoint(&[tensor("a", DType::Fp32, 4, 1)], 4096, 0).unwrap();
        assert!(matches!(
            load_tensor(&blob.bytes, &blob.index, "nope"),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn truncation_is_always_format_error() {
        let blob = save_checkpoint(
            &[tensor("a", DType::Fp32, 64, 1), tensor("b", DType::Bf16, 33, 2)],
            4096,
            7,
        )
        .unwrap();
        for cut in 0..blob.bytes.len() {
            let truncated = &blob.bytes[..cut];
            assert!(
                matches!(parse_checkpoint(truncated), Err(Error::FormatError(_))),
                "cut at {cut} parsed"
            );
            // Loading through the truncated blob never yields partial data,
            // even for the first tensor whose range might still be intact.
            assert!(
                matches!(
                    load_tensor(truncated, &blob.index, "a"),
                    Err(Error::FormatError(_))
                ),
                "cut at {cut} loaded"
            );
        }
        // Trailing garbage is rejected too.
        let mut extended = blob.bytes.clone();
        extended.push(0);
        assert!(matches!(
            parse_checkpoint(&extended),
            Err(Error::FormatError(_))
        ));
    }

    #[test]
    fn batch_writes_tile_blob() {
        let blob = save_checkpoint(&[tensor("a", DType::Fp32, 5000, 3)], 4096, 0).unwrap();
        assert_eq!(blob.write_batches.total_bytes(), blob.bytes.len() as u64);
        assert!(blob.write_batches.chunk_count() >= 5);
    }

    #[test]
    fn loss_bound_is_mod_interval() {
        let p = SavePolicy::new(300, 3).unwrap();
        assert_eq!(recovery_loss_bound(&p, 899), 299);
        assert_eq!(recovery_loss_bound(&p, 900), 0);
        assert_eq!(recovery_loss_bound(&p, 0), 0);
    }

    #[test]
    fn policy_validation_and_retention() {
        assert!(SavePolicy::new(0, 1).is_err());
        assert!(SavePolicy::new(1, 0).is_err());
        let p = SavePolicy::new(100, 2).unwrap();
        assert!(p.should_save(200));
        assert!(!p.should_save(250));
        assert!(!p.should_save(0));
        assert_eq!(p.retained(&[100, 200, 300, 400]), vec![300, 400]);
    }
}
