//! Element-wise reduction kernels with a fixed accumulation order.
//!
//! Narrow dtypes (FP16 / BF16 / FP8) are widened to FP32, added in FP32, and
//! rounded back once per `reduce_add` with round-to-nearest-even. A chain of
//! adds therefore rounds after every step; that chained-rounding behavior is
//! part of the contract and is what the oracles replay.

use crate::error::{Error, Result};
use crate::types::Buffer;

/// Bit-level conversions between f32 and the narrow element formats.
///
/// FP8 E4M3 carries no infinities: the all-ones exponent with mantissa 0b111
/// is NaN and everything else in that binade is a normal number (max finite
/// 448). Values that round beyond the finite range map to NaN. FP8 E5M2,
/// FP16 and BF16 follow IEEE conventions (overflow rounds to infinity).
pub mod softfloat {
    use crate::types::DType;

    /// Round-to-nearest-even of `sig >> shift`, `shift > 0`.
    fn shift_rne(sig: u64, shift: i32) -> u64 {
        if shift >= 64 {
            // Far below half of the smallest quantum (sig < 2^24 << 2^63).
            return 0;
        }
        let s = shift as u32;
        let floor = sig >> s;
        let rem = sig & ((1u64 << s) - 1);
        let half = 1u64 << (s - 1);
        if rem > half || (rem == half && floor & 1 == 1) {
            floor + 1
        } else {
            floor
        }
    }

    /// Encode an f32 into a small float with `exp_bits` exponent bits and
    /// `mant_bits` mantissa bits, round-to-nearest-even. NaN encodes to the
    /// unsigned canonical quiet NaN so results never depend on which NaN a
    /// platform's FPU propagated.
    fn f32_to_small(x: f32, exp_bits: u32, mant_bits: u32, e4m3: bool) -> u16 {
        let bits = x.to_bits();
        let max_exp_field: u32 = (1 << exp_bits) - 1;
        let nan_code: u32 = (max_exp_field << mant_bits) | ((1 << mant_bits) - 1);
        let inf_code: u32 = max_exp_field << mant_bits;
        if x.is_nan() {
            return if e4m3 {
                nan_code as u16
            } else {
                (inf_code | (1 << (mant_bits - 1))) as u16
            };
        }
        let sign = (((bits >> 31) as u16) & 1) << (exp_bits + mant_bits);
        let abs = bits & 0x7fff_ffff;

        if abs == 0x7f80_0000 {
            // Infinity keeps its sign; E4M3 has no infinity encoding.
            if e4m3 {
                return sign | nan_code as u16;
            }
            return sign | inf_code as u16;
        }
        if abs == 0 {
            return sign;
        }

        let bias: i32 = (1 << (exp_bits - 1)) - 1;
        let f_exp = ((abs >> 23) & 0xff) as i32;
        let f_mant = (abs & 0x7f_ffff) as u64;
        let (sig, exp2) = if f_exp == 0 {
            (f_mant, 1 - 127 - 23)
        } else {
            (f_mant | 0x80_0000, f_exp - 127 - 23)
        };

        // floor(log2 |x|)
        let e_val = 63 - sig.leading_zeros() as i32 + exp2;

        // Quantum of the destination at this magnitude: subnormal spacing
        // below the smallest normal exponent, binade spacing above.
        let quantum_exp = if e_val < 1 - bias {
            1 - bias - mant_bits as i32
        } else {
            e_val - mant_bits as i32
        };
        let shift = quantum_exp - exp2;
        debug_assert!(shift > 0, "f32 sources always need narrowing here");
        let q = shift_rne(sig, shift);

        let result: u32 = if e_val < 1 - bias {
            // q == 2^mant_bits (rounded up to the smallest normal) encodes
            // correctly through plain field arithmetic.
            q as u32
        } else {
            let e_field = (e_val + bias) as u32;
            // Mantissa carry propagates into the exponent field.
            (e_field << mant_bits) + (q as u32 - (1 << mant_bits))
        };

        if e4m3 {
            if result >= nan_code {
                return sign | nan_code as u16;
            }
        } else if result >= inf_code {
            return sign | inf_code as u16;
        }
        sign | result as u16
    }

    fn small_to_f32(bits: u16, exp_bits: u32, mant_bits: u32, e4m3: bool) -> f32 {
        let max_exp_field: u16 = (1 << exp_bits) - 1;
        let sign = if (bits >> (exp_bits + mant_bits)) & 1 == 1 {
            -1.0f32
        } else {
            1.0f32
        };
        let e_field = (bits >> mant_bits) & max_exp_field;
        let m = bits & ((1 << mant_bits) - 1);
        let mant_max = (1u16 << mant_bits) - 1;
        if e4m3 {
            if e_field == max_exp_field && m == mant_max {
                return f32::NAN * sign;
            }
        } else if e_field == max_exp_field {
            return if m == 0 {
                f32::INFINITY * sign
            } else {
                f32::NAN * sign
            };
        }
        let bias: i32 = (1 << (exp_bits - 1)) - 1;
        if e_field == 0 {
            sign * m as f32 * (2.0f32).powi(1 - bias - mant_bits as i32)
        } else {
            sign * ((1u32 << mant_bits) | m as u32) as f32
                * (2.0f32).powi(e_field as i32 - bias - mant_bits as i32)
        }
    }

    pub fn f32_to_f16_bits(x: f32) -> u16 {
        f32_to_small(x, 5, 10, false)
    }

    pub fn f16_bits_to_f32(bits: u16) -> f32 {
        small_to_f32(bits, 5, 10, false)
    }

    /// BF16 is truncated f32, so rounding is a 16-bit shift with RNE.
    pub fn f32_to_bf16_bits(x: f32) -> u16 {
        let bits = x.to_bits();
        if x.is_nan() {
            return 0x7fc0;
        }
        let lower = bits & 0xffff;
        let mut upper = bits >> 16;
        if lower > 0x8000 || (lower == 0x8000 && upper & 1 == 1) {
            upper += 1;
        }
        upper as u16
    }

    pub fn bf16_bits_to_f32(bits: u16) -> f32 {
        f32::from_bits((bits as u32) << 16)
    }

    pub fn f32_to_fp8e4m3_bits(x: f32) -> u8 {
        f32_to_small(x, 4, 3, true) as u8
    }

    pub fn fp8e4m3_bits_to_f32(bits: u8) -> f32 {
        small_to_f32(bits as u16, 4, 3, true)
    }

    pub fn f32_to_fp8e5m2_bits(x: f32) -> u8 {
        f32_to_small(x, 5, 2, false) as u8
    }

    pub fn fp8e5m2_bits_to_f32(bits: u8) -> f32 {
        small_to_f32(bits as u16, 5, 2, false)
    }

    /// Decode one element from its little-endian bytes.
    pub fn decode(dtype: DType, bytes: &[u8]) -> f32 {
        match dtype {
            DType::Fp32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            DType::Fp16 => f16_bits_to_f32(u16::from_le_bytes([bytes[0], bytes[1]])),
            DType::Bf16 => bf16_bits_to_f32(u16::from_le_bytes([bytes[0], bytes[1]])),
            DType::Fp8E4M3 => fp8e4m3_bits_to_f32(bytes[0]),
            DType::Fp8E5M2 => fp8e5m2_bits_to_f32(bytes[0]),
        }
    }

    /// Encode one f32 value into the dtype, appending little-endian bytes.
    pub fn encode_into(dtype: DType, value: f32, out: &mut Vec<u8>) {
        match dtype {
            DType::Fp32 => out.extend_from_slice(&value.to_le_bytes()),
            DType::Fp16 => out.extend_from_slice(&f32_to_f16_bits(value).to_le_bytes()),
            DType::Bf16 => out.extend_from_slice(&f32_to_bf16_bits(value).to_le_bytes()),
            DType::Fp8E4M3 => out.push(f32_to_fp8e4m3_bits(value)),
            DType::Fp8E5M2 => out.push(f32_to_fp8e5m2_bits(value)),
        }
    }
}

/// The order in which contributing sources are folded. A permutation of
/// `0..n`, fixed for a given engine run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReduceOrder(Vec<usize>);

impl ReduceOrder {
    /// Ascending source index, the default fold order.
    pub fn ascending(n: usize) -> Self {
        ReduceOrder((0..n).collect())
    }

    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || seen[i] {
                return Err(Error::invalid(format!(
                    "order {:?} is not a permutation of 0..{}",
                    order, n
                )));
            }
            seen[i] = true;
        }
        Ok(ReduceOrder(order))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Element-wise `acc + src` with one rounding per element.
pub fn reduce_add(acc: &Buffer, src: &Buffer) -> Result<Buffer> {
    if acc.dtype() != src.dtype() {
        return Err(Error::invalid(format!(
            "dtype mismatch: {} vs {}",
            acc.dtype().name(),
            src.dtype().name()
        )));
    }
    if acc.element_count() != src.element_count() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {} elements",
            acc.element_count(),
            src.element_count()
        )));
    }
    let dtype = acc.dtype();
    let w = dtype.width_bytes();
    let mut payload = Vec::with_capacity(acc.payload().len());
    for (a, b) in acc
        .payload()
        .chunks_exact(w)
        .zip(src.payload().chunks_exact(w))
    {
        let sum = softfloat::decode(dtype, a) + softfloat::decode(dtype, b);
        softfloat::encode_into(dtype, sum, &mut payload);
    }
    Buffer::new(dtype, acc.element_count(), payload, acc.owner())
}

/// Left-fold of `reduce_add` over `sources` in the given order.
/// Bit-deterministic for a fixed order; a single source is returned as a
/// byte-identical copy.
pub fn reduce_many(sources: &[Buffer], order: &ReduceOrder) -> Result<Buffer> {
    if sources.is_empty() {
        return Err(Error::invalid("reduce_many needs at least one source"));
    }
    if order.len() != sources.len() {
        return Err(Error::invalid(format!(
            "order covers {} sources, got {}",
            order.len(),
            sources.len()
        )));
    }
    let first = &sources[order.indices()[0]];
    for s in sources {
        if s.dtype() != first.dtype() || s.element_count() != first.element_count() {
            return Err(Error::invalid("sources must share dtype and length"));
        }
    }
    let mut acc = first.clone();
    for &i in &order.indices()[1..] {
        acc = reduce_add(&acc, &sources[i])?;
    }
    Ok(acc)
}
