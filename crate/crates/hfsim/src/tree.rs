//! Double binary tree over node ranks.
//!
//! Two spanning binary trees are built such that every rank is an interior
//! (child-bearing) node in at most one of them. Reductions running on both
//! trees at once therefore keep every rank's uplink and downlink busy, which
//! is what makes tree allreduce full-bandwidth.
//!
//! The first tree places interior nodes on odd ranks. The second is the
//! first with ranks mirrored (even rank count) or shifted by one (odd rank
//! count), which swaps the interior and leaf roles.

use serde::Serialize;

use crate::error::{Error, Result};

/// One spanning binary tree, rank-indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeLinks {
    pub root: u32,
    pub parent: Vec<Option<u32>>,
    pub left: Vec<Option<u32>>,
    pub right: Vec<Option<u32>>,
}

impl TreeLinks {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn children(&self, rank: u32) -> impl Iterator<Item = u32> + '_ {
        self.left[rank as usize]
            .into_iter()
            .chain(self.right[rank as usize])
    }

    pub fn is_interior(&self, rank: u32) -> bool {
        self.left[rank as usize].is_some() || self.right[rank as usize].is_some()
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> u32 {
        fn walk(t: &TreeLinks, rank: u32) -> u32 {
            t.children(rank).map(|c| 1 + walk(t, c)).max().unwrap_or(0)
        }
        walk(self, self.root)
    }

    /// Ranks in a deterministic pre-order walk.
    pub fn preorder(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(r) = stack.pop() {
            out.push(r);
            // Push right first so left is visited first.
            if let Some(c) = self.right[r as usize] {
                stack.push(c);
            }
            if let Some(c) = self.left[r as usize] {
                stack.push(c);
            }
        }
        out
    }
}

/// The pair of complementary trees used by inter-node allreduce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoubleBinaryTree {
    pub n: u32,
    pub tree_a: TreeLinks,
    pub tree_b: TreeLinks,
}

/// Recursively builds the odd-interior in-order tree over `[lo, hi)`.
/// Every range passed in starts at an even rank, so choosing an odd offset
/// for the root keeps all interior nodes on odd ranks.
fn build_range(lo: u32, hi: u32, links: &mut TreeLinks) -> u32 {
    let size = hi - lo;
    if size == 1 {
        return lo;
    }
    let half = size / 2;
    let h = if half % 2 == 1 { half } else { half - 1 };
    let root = lo + h;
    let left = build_range(lo, root, links);
    links.left[root as usize] = Some(left);
    links.parent[left as usize] = Some(root);
    if root + 1 < hi {
        let right = build_range(root + 1, hi, links);
        links.right[root as usize] = Some(right);
        links.parent[right as usize] = Some(root);
    }
    root
}

fn build_base(n: u32) -> TreeLinks {
    let mut links = TreeLinks {
        root: 0,
        parent: vec![None; n as usize],
        left: vec![None; n as usize],
        right: vec![None; n as usize],
    };
    links.root = build_range(0, n, &mut links);
    links
}

/// Relabels a tree through the bijection `to_actual` (base label -> rank).
fn relabel(base: &TreeLinks, to_actual: impl Fn(u32) -> u32) -> TreeLinks {
    let n = base.len();
    let mut out = TreeLinks {
        root: to_actual(base.root),
        parent: vec![None; n],
        left: vec![None; n],
        right: vec![None; n],
    };
    for label in 0..n as u32 {
        let rank = to_actual(label) as usize;
        out.parent[rank] = base.parent[label as usize].map(&to_actual);
        out.left[rank] = base.left[label as usize].map(&to_actual);
        out.right[rank] = base.right[label as usize].map(&to_actual);
    }
    out
}

/// Builds the double binary tree over `n` ranks. Deterministic; errors on
/// `n == 0`.
pub fn build_double_binary_tree(n: u32) -> Result<DoubleBinaryTree> {
    if n == 0 {
        return Err(Error::invalid("rank count must be positive"));
    }
    let base = build_base(n);
    let tree_a = base.clone();
    let tree_b = if n % 2 == 0 {
        // Mirror: rank r takes the role of n-1-r, moving interior nodes to
        // even ranks.
        relabel(&base, |label| n - 1 - label)
    } else {
        // Shift by one: rank r takes the role of r-1. Rank 0 inherits the
        // role of n-1, which is even and therefore a leaf.
        relabel(&base, |label| (label + 1) % n)
    };
    Ok(DoubleBinaryTree { n, tree_a, tree_b })
}

/// Outcome of one structural check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check_spanning(name: &str, t: &TreeLinks, n: u32) -> CheckResult {
    let mut visited = vec![false; n as usize];
    let mut stack = vec![t.root];
    let mut consistent = t.parent[t.root as usize].is_none();
    let mut count = 0u32;
    while let Some(r) = stack.pop() {
        if visited[r as usize] {
            consistent = false;
            break;
        }
        visited[r as usize] = true;
        count += 1;
        for c in t.children(r) {
            if c >= n || t.parent[c as usize] != Some(r) {
                consistent = false;
            } else {
                stack.push(c);
            }
        }
    }
    let passed = consistent && count == n;
    CheckResult {
        name: format!("{name}: spanning"),
        passed,
        detail: format!("reached {count} of {n} ranks, links consistent: {consistent}"),
    }
}

/// Reports pass/fail for each structural invariant. A constructed tree
/// always passes; the report form exists so corrupted structures can be
/// inspected rather than rejected.
pub fn validate_tree(t: &DoubleBinaryTree) -> ValidationReport {
    let n = t.n;
    let mut checks = vec![
        check_spanning("tree_a", &t.tree_a, n),
        check_spanning("tree_b", &t.tree_b, n),
    ];

    let both_interior: Vec<u32> = (0..n)
        .filter(|&r| t.tree_a.is_interior(r) && t.tree_b.is_interior(r))
        .collect();
    checks.push(CheckResult {
        name: "interior in at most one tree".into(),
        passed: both_interior.is_empty(),
        detail: if both_interior.is_empty() {
            "no rank is interior in both trees".into()
        } else {
            format!("ranks interior in both trees: {both_interior:?}")
        },
    });

    let bound = (n as f64).log2().floor() as u32 + 2;
    for (name, tree) in [("tree_a", &t.tree_a), ("tree_b", &t.tree_b)] {
        let depth = tree.depth();
        checks.push(CheckResult {
            name: format!("{name}: depth bound"),
            passed: depth <= bound,
            detail: format!("depth {depth} (edges), bound {bound}"),
        });
    }

    ValidationReport { checks }
}

/// Counts parent-child edges whose endpoints lie in different zones, per
/// tree. `zone_of[rank]` gives the zone id for each rank.
pub fn cross_zone_edge_count(t: &DoubleBinaryTree, zone_of: &[u32]) -> (u32, u32) {
    let count = |tree: &TreeLinks| {
        (0..t.n)
            .flat_map(|r| tree.children(r).map(move |c| (r, c)))
            .filter(|&(p, c)| zone_of[p as usize] != zone_of[c as usize])
            .count() as u32
    };
    (count(&t.tree_a), count(&t.tree_b))
}

/// Adjacency-list dump of both trees, for JSON export.
#[derive(Debug, Serialize)]
pub struct TreeDump {
    pub n: u32,
    pub tree_a: Vec<TreeDumpNode>,
    pub tree_b: Vec<TreeDumpNode>,
}

#[derive(Debug, Serialize)]
pub struct TreeDumpNode {
    pub rank: u32,
    pub parent: Option<u32>,
    pub left: Option<u32>,
    pub right: Option<u32>,
}

pub fn dump_tree(t: &DoubleBinaryTree) -> TreeDump {
    let dump = |tree: &TreeLinks| {
        (0..t.n)
            .map(|r| TreeDumpNode {
                rank: r,
                parent: tree.parent[r as usize],
                left: tree.left[r as usize],
                right: tree.right[r as usize],
            })
            .collect()
    };
    TreeDump {
        n: t.n,
        tree_a: dump(&t.tree_a),
        tree_b: dump(&t.tree_b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ranks_rejected() {
        assert!(build_double_binary_tree(0).is_err());
    }

    #[test]
    fn single_rank_degenerate() {
        let t = build_double_binary_tree(1).unwrap();
        assert_eq!(t.tree_a.root, 0);
        assert_eq!(t.tree_b.root, 0);
        assert!(t.tree_a.children(0).next().is_none());
        assert!(t.tree_b.children(0).next().is_none());
        assert!(validate_tree(&t).all_passed());
    }

    #[test]
    fn two_ranks_roles_swap() {
        let t = build_double_binary_tree(2).unwrap();
        assert_eq!(t.tree_a.root, 1);
        assert_eq!(t.tree_a.left[1], Some(0));
        assert_eq!(t.tree_b.root, 0);
        assert_eq!(t.tree_b.left[0], Some(1));
        // Each rank interior in exactly one tree.
        assert!(t.tree_a.is_interior(1) && !t.tree_b.is_interior(1));
        assert!(t.tree_b.is_interior(0) && !t.tree_a.is_interior(0));
    }

    #[test]
    fn seven_ranks_complementary_roles() {
        let t = build_double_binary_tree(7).unwrap();
        assert!(validate_tree(&t).all_passed());
        assert!(t.tree_a.depth() <= 3 && t.tree_b.depth() <= 3);
        // Interior nodes of tree_a are odd ranks; of tree_b, even ranks.
        for r in 0..7 {
            if t.tree_a.is_interior(r) {
                assert_eq!(r % 2, 1);
            }
            if t.tree_b.is_interior(r) {
                assert_eq!(r % 2, 0);
            }
        }
    }

    #[test]
    fn validation_passes_at_64() {
        let t = build_double_binary_tree(64).unwrap();
        assert!(validate_tree(&t).all_passed());
    }

    #[test]
    fn corrupted_parent_fails_spanning() {
        let mut t = build_double_binary_tree(8).unwrap();
        // Detach a child: its parent pointer no longer matches.
        let victim = t.tree_a.left[t.tree_a.root as usize].unwrap();
        t.tree_a.parent[victim as usize] = None;
        let report = validate_tree(&t);
        assert!(!report.all_passed());
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "tree_a: spanning" && !c.passed));
    }

    #[test]
    fn deterministic_rebuild() {
        for n in [1, 2, 3, 5, 16, 63, 64, 65, 255] {
            assert_eq!(
                build_double_binary_tree(n).unwrap(),
                build_double_binary_tree(n).unwrap()
            );
        }
    }

    #[test]
    fn cross_zone_counting() {
        let t = build_double_binary_tree(4).unwrap();
        assert_eq!(cross_zone_edge_count(&t, &[0, 0, 0, 0]), (0, 0));

        let t2 = build_double_binary_tree(2).unwrap();
        assert_eq!(cross_zone_edge_count(&t2, &[0, 1]), (1, 1));
    }

    #[test]
    fn invariants_hold_up_to_1024() {
        for n in 1..=1024 {
            let t = build_double_binary_tree(n).unwrap();
            let report = validate_tree(&t);
            assert!(report.all_passed(), "n={n}: {:?}", report.checks);
        }
    }
}
