use super::InfoGraph;
use crate::{Error, Result};

/// Largest agent count the exact clique search accepts.
const MAX_AGENTS: usize = 64;

/// Exact clique number of the undirected version of `g` (Bron–Kerbosch with
/// pivoting over 64-bit vertex sets). A lone vertex is a clique of size one.
pub fn clique_number(g: &InfoGraph) -> Result<usize> {
    let n = g.agents.len();
    if n > MAX_AGENTS {
        return Err(Error::BudgetExceeded {
            what: "clique search agents",
            size: n as u128,
            cap: MAX_AGENTS as u128,
        });
    }
    if n == 0 {
        return Ok(0);
    }
    let index = |a| g.agents.binary_search(&a).map_err(|_| Error::UnknownAgent(a));
    let mut adj = vec![0u64; n];
    for &(a, b) in &g.edges {
        let (i, j) = (index(a)?, index(b)?);
        if i != j {
            adj[i] |= 1 << j;
            adj[j] |= 1 << i;
        }
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut best = 0;
    expand(&adj, 0, all, 0, &mut best);
    Ok(best)
}

fn expand(adj: &[u64], size: usize, mut candidates: u64, mut excluded: u64, best: &mut usize) {
    if candidates == 0 {
        if excluded == 0 {
            *best = (*best).max(size);
        }
        return;
    }
    if size + candidates.count_ones() as usize <= *best {
        return;
    }
    let pivot_pool = candidates | excluded;
    let pivot = (0..adj.len())
        .filter(|&u| pivot_pool >> u & 1 == 1)
        .max_by_key(|&u| (adj[u] & candidates).count_ones())
        .unwrap();
    let mut branch = candidates & !adj[pivot];
    while branch != 0 {
        let v = branch.trailing_zeros() as usize;
        branch &= branch - 1;
        expand(adj, size + 1, candidates & adj[v], excluded & adj[v], best);
        candidates &= !(1 << v);
        excluded |= 1 << v;
    }
}

/// `1 / (M - omega + 2)`; one half when the information graph is complete.
pub fn degraded_gap_bound(m: usize, omega: usize) -> Result<f64> {
    if omega < 1 || omega > m {
        return Err(Error::InvalidArgument(format!("need 1 <= omega ({omega}) <= M ({m})")));
    }
    Ok(1.0 / (m - omega + 2) as f64)
}
