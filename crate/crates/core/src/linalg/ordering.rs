//! Fill-reducing ordering by graph nested dissection with BFS level-set
//! separators. Rows much denser than average (Lagrange multiplier rows) are
//! ordered last.

use super::CsrMatrix;

const LEAF_SIZE: usize = 48;

/// Returns `perm` with `perm[new] = old` for the symmetrized pattern of `a`.
pub fn nested_dissection(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let adj = symmetric_adjacency(a);
    let avg = adj.iter().map(Vec::len).sum::<usize>() as f64 / n.max(1) as f64;
    let dense_cut = (10.0 * (n as f64).sqrt()).max(16.0 * avg.max(1.0)) as usize;
    let dense: Vec<bool> = adj.iter().map(|l| l.len() > dense_cut).collect();

    let mut nd = Dissector {
        adj: &adj,
        dense: &dense,
        member: vec![0u32; n],
        visited: vec![0u32; n],
        next_stamp: 1,
    };
    let sparse_nodes: Vec<usize> = (0..n).filter(|&i| !dense[i]).collect();
    let mut order = Vec::with_capacity(n);
    nd.dissect(sparse_nodes, &mut order);
    order.extend((0..n).filter(|&i| dense[i]));
    debug_assert_eq!(order.len(), n);
    order
}

fn symmetric_adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.n_rows();
    let mut adj = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

struct Dissector<'a> {
    adj: &'a [Vec<usize>],
    dense: &'a [bool],
    member: Vec<u32>,
    visited: Vec<u32>,
    next_stamp: u32,
}

impl Dissector<'_> {
    fn fresh(&mut self) -> u32 {
        let s = self.next_stamp;
        self.next_stamp += 1;
        s
    }

    fn mark(&mut self, nodes: &[usize]) -> u32 {
        let s = self.fresh();
        for &v in nodes {
            self.member[v] = s;
        }
        s
    }

    /// BFS restricted to nodes whose membership stamp is `set`; returns level sets.
    fn bfs(&mut self, start: usize, set: u32) -> Vec<Vec<usize>> {
        let visit = self.fresh();
        self.visited[start] = visit;
        let mut levels = vec![vec![start]];
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in &self.adj[v] {
                    if self.member[w] == set && self.visited[w] != visit && !self.dense[w] {
                        self.visited[w] = visit;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    }

    fn dissect(&mut self, nodes: Vec<usize>, order: &mut Vec<usize>) {
        if nodes.len() <= LEAF_SIZE {
            order.extend(nodes);
            return;
        }
        let set = self.mark(&nodes);
        let mut components = Vec::new();
        for &v in &nodes {
            if self.member[v] != set {
                continue;
            }
            let comp: Vec<usize> = self.bfs(v, set).into_iter().flatten().collect();
            for &c in &comp {
                self.member[c] = 0;
            }
            components.push(comp);
        }
        if components.len() > 1 {
            for comp in components {
                self.dissect(comp, order);
            }
            return;
        }
        let comp = components.pop().unwrap();
        let set = self.mark(&comp);
        let levels = self.peripheral_levels(comp[0], set);
        if levels.len() < 3 {
            order.extend(comp);
            return;
        }
        let half = comp.len() / 2;
        let mut acc = 0;
        let mut cut = 1;
        for (l, lv) in levels.iter().enumerate() {
            acc += lv.len();
            if acc >= half {
                cut = l.clamp(1, levels.len() - 2);
                break;
            }
        }
        let low: Vec<usize> = levels[..cut].iter().flatten().copied().collect();
        let high: Vec<usize> = levels[cut + 1..].iter().flatten().copied().collect();
        let sep = levels[cut].clone();
        self.dissect(low, order);
        self.dissect(high, order);
        order.extend(sep);
    }

    fn peripheral_levels(&mut self, start: usize, set: u32) -> Vec<Vec<usize>> {
        let mut levels = self.bfs(start, set);
        for _ in 0..6 {
            let last = levels.last().unwrap();
            let cand = *last
                .iter()
                .min_by_key(|&&v| self.adj[v].len())
                .unwrap();
            let next = self.bfs(cand, set);
            if next.len() <= levels.len() {
                break;
            }
            levels = next;
        }
        levels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_laplacian(m: usize) -> CsrMatrix {
        let idx = |i: usize, j: usize| j * m + i;
        let mut t = Vec::new();
        for j in 0..m {
            for i in 0..m {
                t.push((idx(i, j), idx(i, j), 4.0));
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(m * m, m * m, &t).unwrap()
    }

    #[test]
    fn is_a_permutation() {
        let a = grid_laplacian(23);
        let p = nested_dissection(&a);
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..a.n_rows()).collect::<Vec<_>>());
    }

    #[test]
    fn dense_row_goes_last() {
        let m = 20;
        let base = grid_laplacian(m);
        let n = m * m;
        let mut t: Vec<_> = base.triplets().collect();
        for i in 0..n {
            t.push((i, n, 1.0));
            t.push((n, i, 1.0));
        }
        let a = CsrMatrix::from_triplets(n + 1, n + 1, &t).unwrap();
        let p = nested_dissection(&a);
        assert_eq!(*p.last().unwrap(), n);
    }
}
