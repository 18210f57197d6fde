//! Small labelled graphs: atom shapes, automorphisms, canonical forms,
//! block decompositions and embeddings.
//!
//! Vertices are `0..n` with `n <= 64`; adjacency is kept as one `u64`
//! bitmask per vertex.

use crate::error::{Error, Result};

pub const MAX_VERTICES: usize = 64;

/// A simple undirected graph on at most 64 vertices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SmallGraph {
    n: usize,
    /// Normalized edge list: `u < v`, sorted, no duplicates.
    edges: Vec<(usize, usize)>,
}

impl SmallGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n > MAX_VERTICES {
            return Err(Error::InvalidAtom(format!(
                "{n} vertices exceeds the limit of {MAX_VERTICES}"
            )));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidAtom(format!(
                    "edge ({a},{b}) out of range for {n} vertices"
                )));
            }
            if a == b {
                return Err(Error::InvalidAtom(format!("self-loop at {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Self { n, edges: norm })
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self { n, edges }
    }

    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    /// Path with `k` edges (and `k + 1` vertices).
    pub fn path(k: usize) -> Self {
        Self {
            n: k + 1,
            edges: (0..k).map(|i| (i, i + 1)).collect(),
        }
    }

    /// Star with centre 0 and `k` leaves.
    pub fn star(k: usize) -> Self {
        Self {
            n: k + 1,
            edges: (1..=k).map(|i| (0, i)).collect(),
        }
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges: Vec<_> = (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n))).collect();
        edges.sort_unstable();
        Self { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Vec<u64> {
        let mut adj = vec![0u64; self.n];
        for &(a, b) in &self.edges {
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * self.n.saturating_sub(1) / 2
    }

    /// Connected components as sorted vertex lists, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = 0u64;
        let mut out = Vec::new();
        for s in 0..self.n {
            if seen & (1 << s) != 0 {
                continue;
            }
            let mut comp = 1u64 << s;
            let mut frontier = comp;
            while frontier != 0 {
                let mut next = 0u64;
                let mut f = frontier;
                while f != 0 {
                    let v = f.trailing_zeros() as usize;
                    f &= f - 1;
                    next |= adj[v];
                }
                frontier = next & !comp;
                comp |= next;
            }
            seen |= comp;
            out.push(bits(comp));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().len() == 1
    }

    /// Subgraph induced on `verts` (relabelled `0..verts.len()` in the given order).
    pub fn induced(&self, verts: &[usize]) -> SmallGraph {
        let mut pos = vec![usize::MAX; self.n];
        for (i, &v) in verts.iter().enumerate() {
            pos[v] = i;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|(a, b)| pos[*a] != usize::MAX && pos[*b] != usize::MAX)
            .map(|&(a, b)| (pos[a], pos[b]))
            .collect();
        SmallGraph::new(verts.len(), &edges).expect("induced subgraph is valid")
    }

    /// Same vertex set, keeping only the edges selected by `mask` (bit i = edge i).
    pub fn spanning_subgraph(&self, mask: u64) -> SmallGraph {
        let edges: Vec<_> = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &e)| e)
            .collect();
        SmallGraph { n: self.n, edges }
    }

    /// Relabel: vertex `v` becomes `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> SmallGraph {
        let edges: Vec<_> = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        SmallGraph::new(self.n, &edges).expect("relabelling keeps the graph valid")
    }

    /// Number of automorphisms. Closed form for complete and empty graphs,
    /// backtracking search otherwise.
    pub fn automorphism_count(&self) -> f64 {
        if self.is_complete() || self.edges.is_empty() {
            return factorial(self.n);
        }
        let mut count = 0.0;
        self.for_each_automorphism(|_| count += 1.0);
        count
    }

    /// Calls `f` with every automorphism (as a vertex map `v -> perm[v]`).
    pub fn for_each_automorphism<F: FnMut(&[usize])>(&self, mut f: F) {
        let adj = self.adjacency();
        let deg = self.degrees();
        let mut map = vec![usize::MAX; self.n];
        let mut used = 0u64;
        fn rec<F: FnMut(&[usize])>(
            i: usize,
            n: usize,
            adj: &[u64],
            deg: &[usize],
            map: &mut Vec<usize>,
            used: &mut u64,
            f: &mut F,
        ) {
            if i == n {
                f(map);
                return;
            }
            for c in 0..n {
                if *used & (1 << c) != 0 || deg[c] != deg[i] {
                    continue;
                }
                let ok = (0..i).all(|j| {
                    let a = adj[i] & (1 << j) != 0;
                    let b = adj[c] & (1 << map[j]) != 0;
                    a == b
                });
                if !ok {
                    continue;
                }
                map[i] = c;
                *used |= 1 << c;
                rec(i + 1, n, adj, deg, map, used, f);
                *used &= !(1 << c);
            }
            map[i] = usize::MAX;
        }
        rec(0, self.n, &adj, &deg, &mut map, &mut used, &mut f);
    }

    /// Canonical relabelling. Returns the canonical graph and the map
    /// `v -> perm[v]` taking this graph onto it. Isomorphic graphs give
    /// identical canonical graphs.
    pub fn canonical(&self) -> (SmallGraph, Vec<usize>) {
        if self.is_complete() || self.edges.is_empty() {
            return (self.clone(), (0..self.n).collect());
        }
        let (perm, _) = canonical_labeling(&self.adjacency(), &vec![0; self.n]);
        (self.relabel(&perm), perm)
    }

    /// Blocks (maximal 2-connected subgraphs and bridges) as lists of edge
    /// indices into [`Self::edges`].
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        // Hopcroft-Tarjan over an edge stack.
        let n = self.n;
        let mut nbrs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (idx, &(a, b)) in self.edges.iter().enumerate() {
            nbrs[a].push((b, idx));
            nbrs[b].push((a, idx));
        }
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut time = 0;
        let mut stack: Vec<usize> = Vec::new();
        let mut out = Vec::new();

        #[allow(clippy::too_many_arguments)]
        fn dfs(
            v: usize,
            parent_edge: usize,
            nbrs: &[Vec<(usize, usize)>],
            disc: &mut [usize],
            low: &mut [usize],
            time: &mut usize,
            stack: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            disc[v] = *time;
            low[v] = *time;
            *time += 1;
            for &(w, e) in &nbrs[v] {
                if e == parent_edge {
                    continue;
                }
                if disc[w] == usize::MAX {
                    stack.push(e);
                    dfs(w, e, nbrs, disc, low, time, stack, out);
                    low[v] = low[v].min(low[w]);
                    if low[w] >= disc[v] {
                        let mut block = Vec::new();
                        while let Some(top) = stack.pop() {
                            block.push(top);
                            if top == e {
                                break;
                            }
                        }
                        block.sort_unstable();
                        out.push(block);
                    }
                } else if disc[w] < disc[v] {
                    stack.push(e);
                    low[v] = low[v].min(disc[w]);
                }
            }
        }
        for s in 0..n {
            if disc[s] == usize::MAX {
                dfs(s, usize::MAX, &nbrs, &mut disc, &mut low, &mut time, &mut stack, &mut out);
            }
        }
        out.sort();
        out
    }

    /// Vertex set (bitmask) touched by the given edge indices.
    pub fn vertex_mask(&self, edge_idx: &[usize]) -> u64 {
        edge_idx
            .iter()
            .fold(0u64, |m, &e| m | (1 << self.edges[e].0) | (1 << self.edges[e].1))
    }

    /// All injective homomorphisms `self -> target`, as maps `v -> phi[v]`.
    pub fn embeddings_into(&self, target: &SmallGraph) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        if self.n > target.n {
            return out;
        }
        let adj = self.adjacency();
        let tadj = target.adjacency();
        let mut map = vec![usize::MAX; self.n];
        fn rec(
            i: usize,
            adj: &[u64],
            tadj: &[u64],
            map: &mut Vec<usize>,
            used: u64,
            out: &mut Vec<Vec<usize>>,
        ) {
            if i == adj.len() {
                out.push(map.clone());
                return;
            }
            for c in 0..tadj.len() {
                if used & (1 << c) != 0 {
                    continue;
                }
                let ok = (0..i).all(|j| adj[i] & (1 << j) == 0 || tadj[c] & (1 << map[j]) != 0);
                if ok {
                    map[i] = c;
                    rec(i + 1, adj, tadj, map, used | (1 << c), out);
                }
            }
        }
        rec(0, &adj, &tadj, &mut map, 0, &mut out);
        out
    }
}

pub(crate) fn bits(mask: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    let mut m = mask;
    while m != 0 {
        out.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    out
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Falling factorial `(n)_k` as a float.
pub fn falling(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).map(|i| (n - i) as f64).product()
}

/// Canonical labelling by colour refinement plus exhaustive
/// individualization. `colors` is an isomorphism-invariant initial colouring
/// (e.g. a distinguished root). Returns `(perm, code)` where `perm[v]` is the
/// canonical position of `v` and `code` encodes the relabelled adjacency
/// together with the colours; equal codes means isomorphic coloured graphs.
pub fn canonical_labeling(adj: &[u64], colors: &[u32]) -> (Vec<usize>, Vec<u64>) {
    let n = adj.len();
    let init = refine(adj, initial_partition(colors));
    let mut best: Option<(Vec<u64>, Vec<usize>)> = None;
    search(adj, colors, init, &mut best);
    let (code, perm) = best.expect("search visits at least one leaf");
    debug_assert_eq!(perm.len(), n);
    (perm, code)
}

/// Ordered partition: list of cells, each a sorted vertex list.
type Partition = Vec<Vec<usize>>;

fn initial_partition(colors: &[u32]) -> Partition {
    let mut keys: Vec<u32> = colors.to_vec();
    keys.sort_unstable();
    keys.dedup();
    keys.iter()
        .map(|&k| (0..colors.len()).filter(|&v| colors[v] == k).collect())
        .collect()
}

/// Equitable refinement: split cells by neighbour counts into each cell until stable.
fn refine(adj: &[u64], mut part: Partition) -> Partition {
    loop {
        let mut cell_masks = Vec::with_capacity(part.len());
        for cell in &part {
            cell_masks.push(cell.iter().fold(0u64, |m, &v| m | (1 << v)));
        }
        let mut next: Partition = Vec::with_capacity(part.len());
        let mut changed = false;
        for cell in &part {
            if cell.len() == 1 {
                next.push(cell.clone());
                continue;
            }
            let sig = |v: usize| -> Vec<u32> {
                cell_masks.iter().map(|m| (adj[v] & m).count_ones()).collect()
            };
            let mut keyed: Vec<(Vec<u32>, usize)> = cell.iter().map(|&v| (sig(v), v)).collect();
            keyed.sort();
            let mut start = 0;
            for i in 1..=keyed.len() {
                if i == keyed.len() || keyed[i].0 != keyed[start].0 {
                    next.push(keyed[start..i].iter().map(|x| x.1).collect());
                    start = i;
                }
            }
            if keyed[0].0 != keyed[keyed.len() - 1].0 {
                changed = true;
            }
        }
        part = next;
        if !changed {
            return part;
        }
    }
}

fn search(adj: &[u64], colors: &[u32], part: Partition, best: &mut Option<(Vec<u64>, Vec<usize>)>) {
    let target = part.iter().position(|c| c.len() > 1);
    match target {
        None => {
            let n = adj.len();
            let mut perm = vec![0usize; n];
            for (pos, cell) in part.iter().enumerate() {
                perm[cell[0]] = pos;
            }
            let mut inv = vec![0usize; n];
            for v in 0..n {
                inv[perm[v]] = v;
            }
            let mut code = Vec::with_capacity(2 * n);
            for &v in &inv {
                code.push(colors[v] as u64);
            }
            for &v in &inv {
                let mut row = 0u64;
                for (j, &u) in inv.iter().enumerate() {
                    if adj[v] & (1 << u) != 0 {
                        row |= 1 << j;
                    }
                }
                code.push(row);
            }
            if best.as_ref().is_none_or(|(b, _)| code < *b) {
                *best = Some((code, perm));
            }
        }
        Some(ci) => {
            let cell = part[ci].clone();
            // Twins (same neighbourhood apart from each other) give isomorphic
            // branches; try one representative per twin class.
            let mut tried: Vec<usize> = Vec::new();
            for &v in &cell {
                if tried.iter().any(|&u| {
                    let mask = !((1u64 << u) | (1u64 << v));
                    adj[u] & mask == adj[v] & mask
                }) {
                    continue;
                }
                tried.push(v);
                let mut p = part.clone();
                let rest: Vec<usize> = cell.iter().copied().filter(|&u| u != v).collect();
                p.splice(ci..=ci, [vec![v], rest]);
                let p = refine(adj, p);
                search(adj, colors, p, best);
            }
        }
    }
}

/// A connected atom graph with cached automorphism count and blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomShape {
    graph: SmallGraph,
    aut_count: f64,
    blocks: Vec<Vec<usize>>,
}

impl AtomShape {
    pub fn new(graph: SmallGraph) -> Result<Self> {
        if graph.n() == 0 {
            return Err(Error::InvalidAtom("atom has no vertices".into()));
        }
        if !graph.is_connected() {
            return Err(Error::InvalidAtom(format!(
                "atom {:?} is disconnected",
                graph.edges()
            )));
        }
        let aut_count = graph.automorphism_count();
        let blocks = graph.blocks();
        Ok(Self {
            graph,
            aut_count,
            blocks,
        })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(SmallGraph::new(n, edges)?)
    }

    pub fn clique(r: usize) -> Self {
        Self::new(SmallGraph::complete(r)).expect("cliques are connected")
    }

    pub fn graph(&self) -> &SmallGraph {
        &self.graph
    }

    pub fn r(&self) -> usize {
        self.graph.n()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        self.graph.edges()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn aut_count(&self) -> f64 {
        self.aut_count
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn is_clique(&self) -> bool {
        self.graph.is_complete()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counts automorphisms by trying every permutation.
    fn brute_aut(g: &SmallGraph) -> usize {
        let n = g.n();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut count = 0;
        permute(&mut perm, 0, &mut |p| {
            if g.relabel(p) == *g {
                count += 1;
            }
        });
        count
    }

    fn permute<F: FnMut(&[usize])>(a: &mut Vec<usize>, k: usize, f: &mut F) {
        if k == a.len() {
            f(a);
            return;
        }
        for i in k..a.len() {
            a.swap(k, i);
            permute(a, k + 1, f);
            a.swap(k, i);
        }
    }

    fn all_graphs(n: usize) -> impl Iterator<Item = SmallGraph> {
        let k = SmallGraph::complete(n);
        let e = k.edge_count();
        (0u64..(1 << e)).map(move |m| k.spanning_subgraph(m))
    }

    #[test]
    fn aut_counts_match_brute_force() {
        for n in 1..=5 {
            for g in all_graphs(n) {
                assert_eq!(g.automorphism_count() as usize, brute_aut(&g), "{g:?}");
            }
        }
        assert_eq!(SmallGraph::path(2).automorphism_count(), 2.0);
        assert_eq!(SmallGraph::star(3).automorphism_count(), 6.0);
        assert_eq!(SmallGraph::complete(4).automorphism_count(), 24.0);
        assert_eq!(SmallGraph::cycle(5).automorphism_count(), 10.0);
    }

    #[test]
    fn canonical_form_is_an_isomorphism_invariant() {
        for n in 1..=5 {
            let graphs: Vec<_> = all_graphs(n).collect();
            let mut classes = std::collections::BTreeSet::new();
            for g in &graphs {
                let (c, perm) = g.canonical();
                assert_eq!(g.relabel(&perm), c);
                classes.insert(c);
            }
            // Number of isomorphism classes of graphs on n vertices.
            let expected = [1, 2, 4, 11, 34][n - 1];
            assert_eq!(classes.len(), expected, "n = {n}");
        }
    }

    #[test]
    fn blocks_of_small_graphs() {
        // triangle with a pendant edge: blocks = triangle + bridge
        let g = SmallGraph::new(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        let b = g.blocks();
        assert_eq!(b.len(), 2);
        assert!(b.iter().any(|x| x.len() == 3));
        assert_eq!(SmallGraph::path(3).blocks().len(), 3);
        assert_eq!(SmallGraph::complete(4).blocks().len(), 1);
        assert_eq!(SmallGraph::star(3).blocks().len(), 3);
    }

    #[test]
    fn embeddings_count_is_aut_times_copies() {
        // emb(K3, K4) = 4 copies * 6
        let e = SmallGraph::complete(3).embeddings_into(&SmallGraph::complete(4));
        assert_eq!(e.len(), 24);
        // emb(P2, K3) = 3 copies * 2
        assert_eq!(SmallGraph::path(2).embeddings_into(&SmallGraph::complete(3)).len(), 6);
        // emb(K2, P2) = 2 edges * 2
        assert_eq!(SmallGraph::complete(2).embeddings_into(&SmallGraph::path(2)).len(), 4);
    }

    #[test]
    fn disconnected_atoms_are_rejected() {
        assert!(AtomShape::from_edges(3, &[(0, 1)]).is_err());
        assert!(AtomShape::from_edges(1, &[]).is_ok());
    }
}
