//! Double binary tree construction and validation.
//!
//! Builds the complementary tree pair over a rank set, checks the
//! structural invariants, and counts cross-zone edges when the ranks are
//! split across two fabric zones.
//!
//! ```bash
//! cargo run --example double_binary_tree
//! ```

use hfsim::tree::{build_double_binary_tree, cross_zone_edge_count, validate_tree};

fn main() {
    let n = 16;
    let tree = build_double_binary_tree(n).expect("n >= 1");

    for (name, links) in [("tree A", &tree.tree_a), ("tree B", &tree.tree_b)] {
        println!("{name}: root {}, depth {} edges", links.root, links.depth());
        for rank in 0..n {
            let children: Vec<u32> = links.children(rank).collect();
            if !children.is_empty() {
                println!("  rank {rank:>2} -> children {children:?}");
            }
        }
    }

    println!("\ninvariant checks:");
    for check in validate_tree(&tree).checks {
        println!(
            "  [{}] {} ({})",
            if check.passed { "ok" } else { "FAIL" },
            check.name,
            check.detail
        );
    }

    // Interior/leaf roles swap between the trees.
    let interior_a: Vec<u32> = (0..n).filter(|&r| tree.tree_a.is_interior(r)).collect();
    let interior_b: Vec<u32> = (0..n).filter(|&r| tree.tree_b.is_interior(r)).collect();
    println!("\ninterior ranks in tree A: {interior_a:?}");
    println!("interior ranks in tree B: {interior_b:?}");

    // Contiguous halves across two zones: the trees cross only a few times.
    let zones: Vec<u32> = (0..n).map(|r| if r < n / 2 { 0 } else { 1 }).collect();
    let (a, b) = cross_zone_edge_count(&tree, &zones);
    println!("\ncross-zone edges with ranks split {}/{}: tree A {a}, tree B {b}", n / 2, n / 2);
}
