//! Exact size of NB101-style free-topology cell spaces.
//!
//! Cells have at most `max_nodes` nodes (input and output included) and at
//! most `max_edges` edges, every node lies on an input->output path, and two
//! cells are the same when an isomorphism fixing input and output maps one
//! onto the other with matching operations. Topologies are enumerated as
//! upper-triangular adjacency matrices and deduplicated by a canonical form;
//! labelings per topology are counted with Burnside's lemma over its
//! automorphism group.

use std::collections::HashSet;

use num_bigint::BigUint;

use crate::{Error, Result};

/// Published size of NB101: 423,624 unique cells over 3 operations.
pub const NB101_GRAPHS: u64 = 423_624;

/// Number of distinct cells (up to isomorphism) with `num_ops` labels.
pub fn count_cell_classes(max_nodes: usize, max_edges: usize, num_ops: u64) -> Result<BigUint> {
    Ok(census(max_nodes, max_edges, num_ops)?.labelled)
}

/// Number of distinct unlabelled topologies.
pub fn count_topologies(max_nodes: usize, max_edges: usize) -> Result<usize> {
    Ok(census(max_nodes, max_edges, 1)?.topologies)
}

struct Census {
    topologies: usize,
    labelled: BigUint,
}

fn census(max_nodes: usize, max_edges: usize, num_ops: u64) -> Result<Census> {
    if !(2..=8).contains(&max_nodes) {
        return Err(Error::Unsupported(format!(
            "census supports 2..=8 nodes, got {max_nodes}"
        )));
    }
    let mut topologies = 0;
    let mut labelled = BigUint::from(0u32);
    for n in 2..=max_nodes {
        let internal = n - 2;
        let perms = permutations(internal);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let full: u16 = (1u16 << n) - 1;
        let mut seen: HashSet<u64> = HashSet::new();
        for mask in 0u64..(1u64 << pairs.len()) {
            if mask.count_ones() as usize > max_edges {
                continue;
            }
            let mut out = [0u16; 8];
            for (bit, &(i, j)) in pairs.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    out[i] |= 1 << j;
                }
            }
            // upper-triangular order is topological, so one sweep suffices
            let mut fwd: u16 = 1;
            for i in 0..n {
                if fwd >> i & 1 == 1 {
                    fwd |= out[i];
                }
            }
            let mut bwd: u16 = 1 << (n - 1);
            for i in (0..n).rev() {
                if out[i] & bwd != 0 {
                    bwd |= 1 << i;
                }
            }
            if fwd != full || bwd != full {
                continue;
            }
            let key = |p: &[usize]| -> u64 {
                let map = |i: usize| {
                    if i == 0 || i == n - 1 {
                        i
                    } else {
                        1 + p[i - 1]
                    }
                };
                let mut bits = 0u64;
                for i in 0..n {
                    for j in 0..n {
                        if out[i] >> j & 1 == 1 {
                            bits |= 1 << (map(i) * n + map(j));
                        }
                    }
                }
                bits
            };
            let canonical = perms
                .iter()
                .map(|p| key(p))
                .min()
                .expect("at least identity");
            if !seen.insert(canonical) {
                continue;
            }
            topologies += 1;

            let identity = key(&perms[0]);
            let mut fixed = BigUint::from(0u32);
            let mut group = 0u32;
            for p in &perms {
                if key(p) == identity {
                    group += 1;
                    fixed += BigUint::from(num_ops).pow(cycle_count(p));
                }
            }
            labelled += fixed / group;
        }
    }
    Ok(Census {
        topologies,
        labelled,
    })
}

/// All permutations of `0..k`, identity first.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![(0..k).collect::<Vec<_>>()];
    let mut current: Vec<usize> = (0..k).collect();
    // Heap's algorithm
    let mut c = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                current.swap(0, i);
            } else {
                current.swap(c[i], i);
            }
            out.push(current.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn cycle_count(p: &[usize]) -> u32 {
    let mut seen = vec![false; p.len()];
    let mut cycles = 0;
    for start in 0..p.len() {
        if !seen[start] {
            cycles += 1;
            let mut c = start;
            while !seen[c] {
                seen[c] = true;
                c = p[c];
            }
        }
    }
    cycles
}
