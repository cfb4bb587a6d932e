//! Shared domain vocabulary: element datatypes, byte buffers, device
//! identities, and chunk plans.
//!
//! Everything here is plain data. Buffers own their payload as raw
//! little-endian bytes so that reductions and transfers stay bit-exact and
//! platform independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce::softfloat;

/// Default pipeline chunk size: 1 MiB.
pub const DEFAULT_CHUNK_SIZE: u64 = 1 << 20;

/// Element datatypes supported by the reduction kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Fp32,
    Fp16,
    Bf16,
    /// 8-bit float, 4 exponent / 3 mantissa bits (no infinities).
    Fp8E4M3,
    /// 8-bit float, 5 exponent / 2 mantissa bits (IEEE-style specials).
    Fp8E5M2,
}

impl DType {
    pub fn width_bytes(self) -> usize {
        match self {
            DType::Fp32 => 4,
            DType::Fp16 | DType::Bf16 => 2,
            DType::Fp8E4M3 | DType::Fp8E5M2 => 1,
        }
    }

    /// All supported dtypes, used by test sweeps.
    pub const ALL: [DType; 5] = [
        DType::Fp32,
        DType::Fp16,
        DType::Bf16,
        DType::Fp8E4M3,
        DType::Fp8E5M2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DType::Fp32 => "fp32",
            DType::Fp16 => "fp16",
            DType::Bf16 => "bf16",
            DType::Fp8E4M3 => "fp8e4m3",
            DType::Fp8E5M2 => "fp8e5m2",
        }
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" | "f32" => Ok(DType::Fp32),
            "fp16" | "f16" => Ok(DType::Fp16),
            "bf16" => Ok(DType::Bf16),
            "fp8" | "fp8e4m3" => Ok(DType::Fp8E4M3),
            "fp8e5m2" => Ok(DType::Fp8E5M2),
            other => Err(Error::invalid(format!("unknown dtype `{other}`"))),
        }
    }
}

/// Kind of simulated device within a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceKind {
    Gpu,
    Cpu,
    Nic,
}

/// Identity of a simulated device: which node it lives on, what it is, and
/// where it sits relative to the NUMA domains.
///
/// GPUs 0-3 attach to NUMA domain 0 and GPUs 4-7 to domain 1; the NIC owns
/// its own root port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceRef {
    pub node_id: u32,
    pub kind: DeviceKind,
    pub local_index: u32,
    pub numa_domain: u8,
}

impl DeviceRef {
    pub fn gpu(node_id: u32, local_index: u32) -> Self {
        DeviceRef {
            node_id,
            kind: DeviceKind::Gpu,
            local_index,
            numa_domain: numa_domain_of_gpu(local_index),
        }
    }

    pub fn cpu(node_id: u32) -> Self {
        DeviceRef {
            node_id,
            kind: DeviceKind::Cpu,
            local_index: 0,
            numa_domain: 0,
        }
    }

    pub fn nic(node_id: u32) -> Self {
        DeviceRef {
            node_id,
            kind: DeviceKind::Nic,
            local_index: 0,
            numa_domain: 1,
        }
    }
}

/// GPUs 0-3 map to NUMA 0, GPUs 4-7 (and beyond, pairwise) to NUMA 1.
pub fn numa_domain_of_gpu(local_index: u32) -> u8 {
    if local_index < 4 {
        0
    } else {
        1
    }
}

/// A typed, sized payload owned by a simulated device; the unit of
/// reduction and transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buffer {
    dtype: DType,
    element_count: usize,
    payload: Vec<u8>,
    owner: DeviceRef,
}

impl Buffer {
    /// Builds a buffer, checking that the payload length matches
    /// `element_count * width_bytes`.
    pub fn new(dtype: DType, element_count: usize, payload: Vec<u8>, owner: DeviceRef) -> Result<Self> {
        let expect = element_count * dtype.width_bytes();
        if payload.len() != expect {
            return Err(Error::invalid(format!(
                "payload length {} does not match {} elements of {} ({} bytes)",
                payload.len(),
                element_count,
                dtype.name(),
                expect
            )));
        }
        Ok(Buffer {
            dtype,
            element_count,
            payload,
            owner,
        })
    }

    /// Zero-filled buffer.
    pub fn zeroed(dtype: DType, element_count: usize, owner: DeviceRef) -> Self {
        Buffer {
            dtype,
            element_count,
            payload: vec![0u8; element_count * dtype.width_bytes()],
            owner,
        }
    }

    /// Buffer from f32 values, each encoded (with round-to-nearest-even for
    /// narrow dtypes) into the target dtype.
    pub fn from_f32(dtype: DType, values: &[f32], owner: DeviceRef) -> Self {
        let mut payload = Vec::with_capacity(values.len() * dtype.width_bytes());
        for &v in values {
            softfloat::encode_into(dtype, v, &mut payload);
        }
        Buffer {
            dtype,
            element_count: values.len(),
            payload,
            owner,
        }
    }

    /// Decodes every element to f32.
    pub fn to_f32(&self) -> Vec<f32> {
        let w = self.dtype.width_bytes();
        self.payload
            .chunks_exact(w)
            .map(|c| softfloat::decode(self.dtype, c))
            .collect()
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn len_bytes(&self) -> u64 {
        self.payload.len() as u64
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn payload_mut(&mut self) -> &mut [u8] {
        &mut self.payload
    }

    pub fn owner(&self) -> DeviceRef {
        self.owner
    }

    pub fn set_owner(&mut self, owner: DeviceRef) {
        self.owner = owner;
    }

    /// Byte slice of the elements covered by `(offset, length)` in bytes.
    pub fn slice_bytes(&self, offset: u64, length: u64) -> Result<&[u8]> {
        let end = offset
            .checked_add(length)
            .ok_or_else(|| Error::invalid("slice range overflows"))?;
        if end > self.payload.len() as u64 {
            return Err(Error::invalid(format!(
                "slice {}..{} out of bounds for {}-byte buffer",
                offset,
                end,
                self.payload.len()
            )));
        }
        Ok(&self.payload[offset as usize..end as usize])
    }

    /// A new buffer holding the given byte range of this one.
    pub fn sub_buffer(&self, offset: u64, length: u64) -> Result<Buffer> {
        let w = self.dtype.width_bytes() as u64;
        if offset % w != 0 || length % w != 0 {
            return Err(Error::invalid(format!(
                "slice {}+{} not aligned to {}-byte elements",
                offset,
                length,
                w
            )));
        }
        let bytes = self.slice_bytes(offset, length)?.to_vec();
        Buffer::new(self.dtype, (length / w) as usize, bytes, self.owner)
    }

    /// Overwrites the byte range starting at `offset` with `bytes`.
    pub fn write_bytes(&mut self, offset: u64, bytes: &[u8]) -> Result<()> {
        let end = offset as usize + bytes.len();
        if end > self.payload.len() {
            return Err(Error::invalid(format!(
                "write {}..{} out of bounds for {}-byte buffer",
                offset,
                end,
                self.payload.len()
            )));
        }
        self.payload[offset as usize..end].copy_from_slice(bytes);
        Ok(())
    }
}

/// Tiling of a byte range into pipeline chunks.
///
/// Chunks cover `[0, total_bytes)` exactly, non-overlapping, in ascending
/// offset order; all but the last have length `chunk_size_bytes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunk_size_bytes: u64,
    pub chunks: Vec<ChunkRange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRange {
    pub offset: u64,
    pub length: u64,
}

impl ChunkPlan {
    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.chunks.iter().map(|c| c.length).sum()
    }
}

/// Splits `total_bytes` into chunks of at most `chunk_size_bytes`.
pub fn make_chunk_plan(total_bytes: u64, chunk_size_bytes: u64) -> Result<ChunkPlan> {
    if chunk_size_bytes == 0 {
        return Err(Error::invalid("chunk size must be positive"));
    }
    let mut chunks = Vec::new();
    let mut offset = 0;
    while offset < total_bytes {
        let length = chunk_size_bytes.min(total_bytes - offset);
        chunks.push(ChunkRange { offset, length });
        offset += length;
    }
    Ok(ChunkPlan {
        chunk_size_bytes,
        chunks,
    })
}

/// Deterministic pseudo-random buffer: same `(dtype, n, seed)` always yields
/// identical bytes. Values are finite and modest in magnitude so reductions
/// stay well-behaved in every dtype.
pub fn buffer_fill_pattern(dtype: DType, n: usize, seed: u64) -> Buffer {
    // Seed mixes in the dtype tag so different dtypes get distinct streams.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((dtype as u64) << 32));
    let values: Vec<f32> = (0..n)
        .map(|_| {
            let v: f32 = rng.gen_range(-2.0..2.0);
            v
        })
        .collect();
    Buffer::from_f32(dtype, &values, DeviceRef::cpu(0))
}
