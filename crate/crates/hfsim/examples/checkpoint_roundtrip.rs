//! Indexed checkpoint save/load round trip plus the periodic-save math.
//!
//! ```bash
//! cargo run --example checkpoint_roundtrip
//! ```

use hfsim::checkpoint::{
    load_tensor, parse_checkpoint, recovery_loss_bound, save_checkpoint, SavePolicy, TensorEntry,
};
use hfsim::types::{buffer_fill_pattern, DType};

fn main() {
    // A small model's worth of named tensors.
    let tensors: Vec<TensorEntry> = vec![
        TensorEntry {
            id: "embed.weight".into(),
            shape: vec![1024, 64],
            buffer: buffer_fill_pattern(DType::Fp16, 1024 * 64, 1),
        },
        TensorEntry {
            id: "block0.attn.qkv".into(),
            shape: vec![192, 64],
            buffer: buffer_fill_pattern(DType::Bf16, 192 * 64, 2),
        },
        TensorEntry {
            id: "block0.mlp.w1".into(),
            shape: vec![256, 64],
            buffer: buffer_fill_pattern(DType::Fp8E4M3, 256 * 64, 3),
        },
        TensorEntry::flat("optimizer.step", buffer_fill_pattern(DType::Fp32, 1, 4)),
    ];

    let blob = save_checkpoint(&tensors, 64 << 10, 4200).expect("save succeeds");
    println!(
        "saved {} tensors into {} bytes ({} batch writes of up to 64 KiB)",
        blob.index.entries.len(),
        blob.bytes.len(),
        blob.write_batches.chunk_count()
    );

    println!("\nindex:");
    for e in &blob.index.entries {
        println!(
            "  {:<18} {:<8} shape {:?} @ offset {:>7}, {} bytes",
            e.tensor_id,
            e.dtype.name(),
            e.shape,
            e.offset,
            e.length
        );
    }

    // Loading is one contiguous read per tensor, byte-exact.
    let (index, _) = parse_checkpoint(&blob.bytes).expect("parses");
    for t in &tensors {
        let loaded = load_tensor(&blob.bytes, &index, &t.id).expect("present");
        assert_eq!(loaded.payload(), t.buffer.payload());
    }
    println!("\nall tensors round-tripped byte-exact");

    // Truncation anywhere is detected before any data comes back.
    let truncated = &blob.bytes[..blob.bytes.len() - 1];
    println!(
        "truncated blob: {}",
        load_tensor(truncated, &index, "embed.weight").unwrap_err()
    );

    // Periodic saves bound the loss window.
    let policy = SavePolicy::new(300, 3).expect("valid policy");
    for failure_step in [899u64, 900, 1234] {
        println!(
            "failure at step {failure_step}: {} steps of progress lost (interval {})",
            recovery_loss_bound(&policy, failure_step),
            policy.interval
        );
    }
}
