use std::collections::VecDeque;

use super::{CommGraph, SeqRoute};
use crate::{Error, Result};

const MAX_ROUTE_AGENTS: usize = 12;

/// Shortest walk over `comm` that visits every agent; a Hamiltonian path when
/// the graph has one. Exact search over subsets of agents (at most 12).
pub fn shortest_seq_route(comm: &CommGraph) -> Result<SeqRoute> {
    let n = comm.agents().len();
    if n > MAX_ROUTE_AGENTS {
        return Err(Error::BudgetExceeded {
            what: "route search agents",
            size: n as u128,
            cap: MAX_ROUTE_AGENTS as u128,
        });
    }
    let dist: Vec<Vec<usize>> = comm
        .hop_distances()
        .into_iter()
        .map(|row| row.into_iter().map(|d| d.expect("connected graph")).collect())
        .collect();

    // best[mask][j]: fewest hops of a walk covering `mask` that ends at j.
    let full = (1usize << n) - 1;
    let mut best = vec![vec![usize::MAX; n]; 1 << n];
    let mut parent = vec![vec![usize::MAX; n]; 1 << n];
    for j in 0..n {
        best[1 << j][j] = 0;
    }
    for mask in 1..=full {
        for j in 0..n {
            let here = best[mask][j];
            if here == usize::MAX {
                continue;
            }
            for k in 0..n {
                if mask >> k & 1 == 1 {
                    continue;
                }
                let next = mask | 1 << k;
                let cand = here + dist[j][k];
                if cand < best[next][k] {
                    best[next][k] = cand;
                    parent[next][k] = j;
                }
            }
        }
    }
    let mut end = (0..n).min_by_key(|&j| (best[full][j], j)).unwrap();

    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    loop {
        order.push(end);
        let prev = parent[mask][end];
        mask &= !(1 << end);
        if prev == usize::MAX {
            break;
        }
        end = prev;
    }
    order.reverse();

    let adj = comm.adjacency();
    let mut walk = vec![order[0]];
    for pair in order.windows(2) {
        walk.extend(shortest_path(&adj, pair[0], pair[1]).into_iter().skip(1));
    }
    // a walk read backwards is equally short; keep the lexicographically smaller one
    let mut reversed = walk.clone();
    reversed.reverse();
    let walk = walk.min(reversed);
    SeqRoute::new(comm, walk.into_iter().map(|i| comm.agents()[i]).collect())
}

fn shortest_path(adj: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut prev = vec![usize::MAX; adj.len()];
    prev[from] = from;
    let mut q = VecDeque::from([from]);
    while let Some(u) = q.pop_front() {
        if u == to {
            break;
        }
        for &w in &adj[u] {
            if prev[w] == usize::MAX {
                prev[w] = u;
                q.push_back(w);
            }
        }
    }
    let mut path = vec![to];
    while *path.last().unwrap() != from {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::AgentId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: u32) -> Vec<AgentId> {
        (0..n).map(AgentId).collect()
    }

    /// Length of the shortest covering walk by breadth-first search over
    /// (position, visited set) states.
    fn brute_walk_hops(comm: &CommGraph) -> usize {
        let n = comm.agents().len();
        let adj = comm.adjacency();
        let full = (1usize << n) - 1;
        let mut seen = vec![vec![false; n]; 1 << n];
        let mut q = VecDeque::new();
        for s in 0..n {
            seen[1 << s][s] = true;
            q.push_back((s, 1usize << s, 0usize));
        }
        while let Some((u, mask, d)) = q.pop_front() {
            if mask == full {
                return d;
            }
            for &w in &adj[u] {
                let m = mask | 1 << w;
                if !seen[m][w] {
                    seen[m][w] = true;
                    q.push_back((w, m, d + 1));
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn path_topology_is_its_own_route() {
        let comm = CommGraph::path(&ids(5)).unwrap();
        let r = shortest_seq_route(&comm).unwrap();
        assert_eq!(r.hops(), 4);
        assert_eq!(r.sequence(), ids(5).as_slice());
    }

    #[test]
    fn star_revisits_hub() {
        let hub = AgentId(0);
        let comm = CommGraph::new(ids(4), (1..4).map(|i| (hub, AgentId(i)))).unwrap();
        let r = shortest_seq_route(&comm).unwrap();
        assert_eq!(r.sequence().len(), 5);
        assert_eq!(r.hops(), 4);
        assert_eq!(r.sequence().iter().filter(|&&a| a == hub).count(), 2);
        assert_eq!(brute_walk_hops(&comm), 4);
    }

    #[test]
    fn complete_graph_is_hamiltonian() {
        let comm = CommGraph::complete(&ids(6)).unwrap();
        let r = shortest_seq_route(&comm).unwrap();
        assert_eq!(r.hops(), 5);
    }

    #[test]
    fn matches_exhaustive_walk_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let n = rng.gen_range(1..=7u32);
            let mut links: Vec<_> = (1..n).map(|i| (AgentId(rng.gen_range(0..i)), AgentId(i))).collect();
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(0.2) {
                        links.push((AgentId(a), AgentId(b)));
                    }
                }
            }
            let comm = CommGraph::new(ids(n), links).unwrap();
            let r = shortest_seq_route(&comm).unwrap();
            assert_eq!(r.hops(), brute_walk_hops(&comm));
        }
    }

    #[test]
    fn budget() {
        let comm = CommGraph::path(&ids(13)).unwrap();
        assert!(shortest_seq_route(&comm).unwrap_err().is_budget());
    }
}
