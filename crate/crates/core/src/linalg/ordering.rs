//! Fill-reducing ordering.

use std::collections::BTreeSet;

/// Minimum-degree ordering on the graph of a symmetric pattern.
///
/// `adj[i]` lists the neighbours of node `i` (self-loops ignored). Returns
/// `perm` with `perm[new] = old`. Ties break on the smallest index, so the
/// result is deterministic.
pub fn minimum_degree(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut graph: Vec<BTreeSet<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().copied().filter(|&j| j != i).collect())
        .collect();
    // keep adjacency symmetric even if the caller passed one triangle
    for i in 0..n {
        let nbs: Vec<usize> = graph[i].iter().copied().collect();
        for j in nbs {
            graph[j].insert(i);
        }
    }

    let mut eliminated = vec![false; n];
    // (degree, node) priority set
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (graph[i].len(), i)).collect();
    let mut perm = Vec::with_capacity(n);

    while let Some((_, node)) = queue.pop_first() {
        eliminated[node] = true;
        perm.push(node);
        let nbs: Vec<usize> = graph[node].iter().copied().collect();
        for &u in &nbs {
            queue.remove(&(graph[u].len(), u));
            graph[u].remove(&node);
        }
        // neighbours become a clique
        for (k, &u) in nbs.iter().enumerate() {
            for &w in &nbs[k + 1..] {
                graph[u].insert(w);
                graph[w].insert(u);
            }
        }
        for &u in &nbs {
            debug_assert!(!eliminated[u]);
            queue.insert((graph[u].len(), u));
        }
        graph[node].clear();
    }
    perm
}

/// Inverse permutation: `iperm[old] = new`.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut iperm = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        iperm[old] = new;
    }
    iperm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_matrix_eliminates_hub_last() {
        // node 0 connected to all others: ordering it first fills everything
        let n = 6;
        let mut adj = vec![Vec::new(); n];
        for j in 1..n {
            adj[0].push(j);
            adj[j].push(0);
        }
        let perm = minimum_degree(&adj);
        // the hub goes once its degree has dropped to that of a leaf
        let hub_pos = perm.iter().position(|&v| v == 0).unwrap();
        assert!(hub_pos >= n - 2, "{perm:?}");
        let mut sorted = perm.clone();
        sorted.sort();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn inverse_round_trips() {
        let perm = vec![2, 0, 3, 1];
        let iperm = invert(&perm);
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(iperm[old], new);
        }
    }
}
