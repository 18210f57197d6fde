//! Measurements on generated graphs and their limits: components, degrees,
//! small subgraph counts, clustering, mixing and rooted neighbourhoods.

use std::collections::{BTreeMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{bits, canonical_labeling, AtomShape, SmallGraph};
use crate::kernel::KernelFamily;
use crate::quad::{check_cost, tensor_sum};
use crate::sampler::{stream_rng, GeneratedGraph};
use crate::sep::{Bind, SepSum};
use crate::space::Grid;

/// Default number of `N_{>=k}` entries in a [`ComponentSummary`].
pub const DEFAULT_K_MAX: usize = 10;
/// Default top of the degree histogram.
pub const DEFAULT_D_MAX: usize = 1000;
/// Largest ball the census codes exactly.
pub const DEFAULT_BALL_CAP: usize = 12;
/// Tail mass beyond `d_max` above which a reference is flagged.
pub const TRUNCATION_WARN: f64 = 1e-4;

/// Sizes of the connected components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentSummary {
    #[serde(rename = "C1")]
    pub c1: usize,
    #[serde(rename = "C2")]
    pub c2: usize,
    /// `n_ge_k[k-1]` = number of vertices in components of size at least `k`.
    pub n_ge_k: Vec<usize>,
    pub count: usize,
    /// component size -> number of components of that size
    pub size_histogram: BTreeMap<usize, usize>,
}

/// Components of the simple graph on `n` vertices with the given edges.
pub fn components_of(n: usize, edges: &[(u32, u32)], k_max: usize) -> ComponentSummary {
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut size = vec![1usize; n];
    fn find(p: &mut [u32], mut v: u32) -> u32 {
        while p[v as usize] != v {
            let g = p[p[v as usize] as usize];
            p[v as usize] = g;
            v = g;
        }
        v
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (big, small) = if size[ra as usize] >= size[rb as usize] { (ra, rb) } else { (rb, ra) };
            parent[small as usize] = big;
            size[big as usize] += size[small as usize];
        }
    }
    let mut sizes = Vec::new();
    for v in 0..n as u32 {
        if find(&mut parent, v) == v {
            sizes.push(size[v as usize]);
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let mut hist = BTreeMap::new();
    for &s in &sizes {
        *hist.entry(s).or_insert(0) += 1;
    }
    let n_ge_k = (1..=k_max)
        .map(|k| sizes.iter().filter(|&&s| s >= k).sum())
        .collect();
    ComponentSummary {
        c1: sizes.first().copied().unwrap_or(0),
        c2: sizes.get(1).copied().unwrap_or(0),
        n_ge_k,
        count: sizes.len(),
        size_histogram: hist,
    }
}

pub fn components(g: &GeneratedGraph) -> ComponentSummary {
    components_of(g.n(), g.simple_edges(), DEFAULT_K_MAX)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DegreeHistogram {
    /// `counts[l]` = number of vertices of degree `l`, for `l <= d_max`.
    pub counts: Vec<usize>,
    pub overflow: usize,
}

impl DegreeHistogram {
    pub fn from_degrees(degrees: &[usize], d_max: usize) -> Self {
        let mut counts = vec![0; d_max + 1];
        let mut overflow = 0;
        for &d in degrees {
            if d <= d_max {
                counts[d] += 1;
            } else {
                overflow += 1;
            }
        }
        Self { counts, overflow }
    }

    pub fn of_graph(g: &GeneratedGraph, d_max: usize) -> Self {
        Self::from_degrees(&g.degrees(), d_max)
    }

    pub fn d_max(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.overflow
    }

    /// Empirical pmf on `0..=d_max` and the overflow share.
    pub fn pmf(&self) -> (Vec<f64>, f64) {
        let n = self.total().max(1) as f64;
        (self.counts.iter().map(|&c| c as f64 / n).collect(), self.overflow as f64 / n)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("degree,count\n");
        for (d, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{d},{c}\n"));
        }
        s.push_str(&format!(">{},{}\n", self.d_max(), self.overflow));
        s
    }
}

/// Compound Poisson pmf on `0..=d_max` for jump sizes `j` with rates `lambda_j`.
///
/// Uses the recursion `k p_k = sum_j j lambda_j p_{k-j}`; values are carried
/// with a running scale so large total rates do not underflow.
pub fn cpo_pmf(intensity: &[(usize, f64)], d_max: usize) -> Vec<f64> {
    let jumps: Vec<(usize, f64)> = intensity.iter().copied().filter(|&(j, l)| j > 0 && l > 0.0).collect();
    let total: f64 = jumps.iter().map(|x| x.1).sum();
    let mut p = vec![0.0; d_max + 1];
    p[0] = 1.0;
    let mut log_scale = -total;
    for k in 1..=d_max {
        let mut acc = 0.0;
        for &(j, l) in &jumps {
            if j <= k {
                acc += j as f64 * l * p[k - j];
            }
        }
        p[k] = acc / k as f64;
        if p[k] > 1e200 {
            for v in p[..=k].iter_mut() {
                *v *= 1e-200;
            }
            log_scale += 200.0 * std::f64::consts::LN_10;
        }
    }
    p.iter()
        .map(|&v| if v == 0.0 { 0.0 } else { (v.ln() + log_scale).exp() })
        .collect()
}

/// The mixed compound Poisson degree law of a family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCPoRef {
    pub d_max: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per node: degree-in-atom `d` -> expected number of atoms meeting the node with degree `d`.
    pub intensities: Vec<BTreeMap<usize, f64>>,
    pub pmf: Vec<f64>,
    /// Mass beyond `d_max`.
    pub tail_mass: f64,
    pub truncation_warning: bool,
    pub mean: f64,
}

/// `int kappa(x_1..x_r)` over all positions except `j`, as a grid function of `x_j`.
pub(crate) fn position_marginal(
    kernel: &crate::kernel::KernelFunction,
    r: usize,
    j: usize,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let m = grid.len();
    let mut out = vec![0.0; m];
    for t in kernel.terms() {
        let binds: Vec<Bind<'_>> = (0..r).map(|p| if p == j { Bind::Slot(0) } else { Bind::Free(None) }).collect();
        match SepSum::from_kernel(t, &binds, grid) {
            Ok(s) => {
                for (o, v) in out.iter_mut().zip(s.eval_slot(0, m)) {
                    *o += v;
                }
            }
            Err(_) => {
                check_cost(r, r - 1, m, m)?;
                let w = vec![None; r];
                for (x, o) in out.iter_mut().enumerate() {
                    *o += tensor_sum(t, r, &[(j, x)], &w, grid, |v, _| v);
                }
            }
        }
    }
    Ok(out)
}

pub fn mcpo_reference(family: &KernelFamily, d_max: usize) -> Result<MCPoRef> {
    let grid = family.grid();
    let m = grid.len();
    let mut intensities = vec![BTreeMap::new(); m];
    for e in family.entries() {
        let r = e.shape.r();
        let deg = e.shape.graph().degrees();
        for j in 0..r {
            if deg[j] == 0 {
                continue;
            }
            let lam = position_marginal(&e.kernel, r, j, &grid)?;
            for (x, l) in lam.into_iter().enumerate() {
                if !l.is_finite() {
                    return Err(Error::DivergentKernel);
                }
                if l > 0.0 {
                    *intensities[x].entry(deg[j]).or_insert(0.0) += l;
                }
            }
        }
    }
    let mut pmf = vec![0.0; d_max + 1];
    let mut mean = 0.0;
    for x in 0..m {
        let lam: Vec<(usize, f64)> = intensities[x].iter().map(|(&d, &l)| (d, l)).collect();
        mean += grid.weights[x] * lam.iter().map(|(d, l)| *d as f64 * l).sum::<f64>();
        for (a, b) in pmf.iter_mut().zip(cpo_pmf(&lam, d_max)) {
            *a += grid.weights[x] * b;
        }
    }
    let tail_mass = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    Ok(MCPoRef {
        d_max,
        nodes: grid.nodes.clone(),
        weights: grid.weights.clone(),
        intensities,
        pmf,
        tail_mass,
        truncation_warning: tail_mass > TRUNCATION_WARN,
        mean,
    })
}

/// Total variation distance of two pmfs, the last entries being tail masses
/// if the vectors are padded to equal length.
pub fn tv_pmf(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// `1/2 sum |empirical - reference|`, with the overflow bucket as one more point.
pub fn tv_distance(hist: &DegreeHistogram, reference: &MCPoRef) -> Result<f64> {
    if hist.d_max() != reference.d_max {
        return Err(Error::InvalidParameter(format!(
            "histogram d_max {} differs from reference d_max {}",
            hist.d_max(),
            reference.d_max
        )));
    }
    let (mut emp, over) = hist.pmf();
    emp.push(over);
    let mut r = reference.pmf.clone();
    r.push(reference.tail_mass);
    Ok(tv_pmf(&emp, &r).min(1.0))
}

/// Counts of small subgraphs (not necessarily induced).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
pub struct SubgraphCounts {
    #[serde(rename = "K2")]
    pub k2: u64,
    #[serde(rename = "K3")]
    pub k3: u64,
    #[serde(rename = "P2")]
    pub p2: u64,
    #[serde(rename = "P3")]
    pub p3: u64,
    #[serde(rename = "S3")]
    pub s3: u64,
}

/// Counts on a simple graph given by sorted adjacency lists.
pub fn count_subgraphs_csr(offsets: &[usize], nbrs: &[u32]) -> SubgraphCounts {
    let n = offsets.len() - 1;
    let deg = |v: usize| (offsets[v + 1] - offsets[v]) as u64;
    let mut c = SubgraphCounts::default();
    for v in 0..n {
        let d = deg(v);
        c.p2 += d * d.saturating_sub(1) / 2;
        c.s3 += d * d.saturating_sub(1) * d.saturating_sub(2) / 6;
    }
    // orient each edge toward the endpoint of higher (degree, id)
    let rank = |v: usize| (deg(v), v);
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut p3_raw: u64 = 0;
    for v in 0..n {
        for &u in &nbrs[offsets[v]..offsets[v + 1]] {
            let u = u as usize;
            if v < u {
                c.k2 += 1;
                p3_raw += (deg(v) - 1) * (deg(u) - 1);
            }
            if rank(v) < rank(u) {
                out[v].push(u as u32);
            }
        }
    }
    let mut mark = vec![false; n];
    for v in 0..n {
        for &u in &out[v] {
            mark[u as usize] = true;
        }
        for &u in &out[v] {
            for &w in &out[u as usize] {
                if mark[w as usize] {
                    c.k3 += 1;
                }
            }
        }
        for &u in &out[v] {
            mark[u as usize] = false;
        }
    }
    c.p3 = p3_raw - 3 * c.k3;
    c
}

pub fn count_subgraphs(g: &GeneratedGraph) -> SubgraphCounts {
    let (offsets, nbrs) = g.adjacency();
    count_subgraphs_csr(offsets, nbrs)
}

/// `C_2 = 3 n(K3) / n(P2)`.
pub fn clustering_c2(c: &SubgraphCounts) -> Result<f64> {
    if c.p2 == 0 {
        return Err(Error::UndefinedForNoPaths);
    }
    Ok(3.0 * c.k3 as f64 / c.p2 as f64)
}

/// Degree correlation across a uniformly random edge, from the five counts.
pub fn mixing_a(c: &SubgraphCounts) -> Result<f64> {
    let e = c.k2 as i128;
    let (k3, p2, p3, s3) = (c.k3 as i128, c.p2 as i128, c.p3 as i128, c.s3 as i128);
    let num = (p3 + 3 * k3) * e - p2 * p2;
    let den = 3 * s3 * e + p2 * e - p2 * p2;
    if e == 0 || den == 0 {
        return Err(Error::DegenerateDegrees);
    }
    Ok(num as f64 / den as f64)
}

/// Tree decompositions of a connected graph: partitions of its edge set into
/// connected unions of blocks meeting in a tree-like way. Each piece is a
/// sorted list of edge indices.
pub fn tree_decompositions(f: &SmallGraph) -> Vec<Vec<Vec<usize>>> {
    let blocks = f.blocks();
    let mut out = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    fn rec(
        i: usize,
        blocks: &[Vec<usize>],
        groups: &mut Vec<Vec<usize>>,
        f: &SmallGraph,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if i == blocks.len() {
            let pieces: Vec<Vec<usize>> = groups
                .iter()
                .map(|g| {
                    let mut e: Vec<usize> = g.iter().flat_map(|&b| blocks[b].iter().copied()).collect();
                    e.sort_unstable();
                    e
                })
                .collect();
            let mut total = 1usize;
            for p in &pieces {
                let mask = f.vertex_mask(p);
                let verts = bits(mask);
                let sub = piece_graph(f, p, &verts);
                if !sub.is_connected() {
                    return;
                }
                total += verts.len() - 1;
            }
            if total == f.n() {
                out.push(pieces);
            }
            return;
        }
        for gi in 0..groups.len() {
            groups[gi].push(i);
            rec(i + 1, blocks, groups, f, out);
            groups[gi].pop();
        }
        groups.push(vec![i]);
        rec(i + 1, blocks, groups, f, out);
        groups.pop();
    }
    rec(0, &blocks, &mut groups, f, &mut out);
    out
}

/// The piece as a graph on local labels `0..verts.len()`.
fn piece_graph(f: &SmallGraph, edges: &[usize], verts: &[usize]) -> SmallGraph {
    let local = |v: usize| verts.iter().position(|&u| u == v).expect("vertex in piece");
    let es: Vec<(usize, usize)> = edges
        .iter()
        .map(|&e| {
            let (a, b) = f.edges()[e];
            (local(a), local(b))
        })
        .collect();
    SmallGraph::new(verts.len(), &es).expect("valid piece")
}

/// `sigma` of a piece as a separable sum over slots named by vertices of `F`.
fn sigma_sep(piece: &SmallGraph, verts: &[usize], family: &KernelFamily, grid: &Grid) -> Option<SepSum> {
    let mut acc = SepSum::zero();
    for e in family.entries() {
        for phi in piece.embeddings_into(e.shape.graph()) {
            let mut binds = vec![Bind::Free(None); e.shape.r()];
            for (local, &pos) in phi.iter().enumerate() {
                binds[pos] = Bind::Slot(verts[local]);
            }
            for t in e.kernel.terms() {
                acc = acc.add(SepSum::from_kernel(t, &binds, grid).ok()?);
            }
        }
    }
    Some(acc)
}

/// Dense `sigma` of a piece on the grid, indexed by its local vertex tuple
/// (first vertex slowest).
fn sigma_dense(piece: &SmallGraph, family: &KernelFamily, grid: &Grid) -> Result<Vec<f64>> {
    let m = grid.len();
    let s = piece.n();
    let size = m.pow(s as u32);
    let mut out = vec![0.0; size];
    for e in family.entries() {
        let r = e.shape.r();
        let embeds = piece.embeddings_into(e.shape.graph());
        if embeds.is_empty() {
            continue;
        }
        check_cost(r.min(crate::quad::TENSOR_MAX_ARITY), r - s, m, size * embeds.len())?;
        let w = vec![None; r];
        for phi in &embeds {
            for (idx, o) in out.iter_mut().enumerate() {
                let mut fixed = Vec::with_capacity(s);
                let mut rem = idx;
                for local in (0..s).rev() {
                    fixed.push((phi[local], rem % m));
                    rem /= m;
                }
                *o += tensor_sum(&e.kernel, r, &fixed, &w, grid, |v, _| v);
            }
        }
    }
    Ok(out)
}

/// Asymptotic density of regular copies of `F` per vertex; `+inf` if an
/// integral diverges.
pub fn t_tilde(f: &AtomShape, family: &KernelFamily) -> Result<f64> {
    let g = f.graph();
    if g.n() > 5 {
        return Err(Error::InvalidParameter("t_tilde supports graphs with at most 5 vertices".into()));
    }
    if g.edge_count() == 0 {
        return Err(Error::InvalidParameter("t_tilde needs at least one edge".into()));
    }
    let grid = family.grid();
    let mut total = 0.0;
    for dec in tree_decompositions(g) {
        let pieces: Vec<(Vec<usize>, SmallGraph)> = dec
            .iter()
            .map(|p| {
                let verts = bits(g.vertex_mask(p));
                let sub = piece_graph(g, p, &verts);
                (verts, sub)
            })
            .collect();
        let seps: Option<Vec<SepSum>> = pieces.iter().map(|(v, s)| sigma_sep(s, v, family, &grid)).collect();
        let value = match seps {
            Some(seps) => {
                let mut prod = SepSum::constant(1.0);
                for s in &seps {
                    prod = prod.mul(s);
                }
                prod.integral(&grid)
            }
            None => dense_product_integral(g.n(), &pieces, family, &grid)?,
        };
        total += value;
    }
    Ok(total / f.aut_count())
}

fn dense_product_integral(
    r: usize,
    pieces: &[(Vec<usize>, SmallGraph)],
    family: &KernelFamily,
    grid: &Grid,
) -> Result<f64> {
    let m = grid.len();
    check_cost(1, r, m, pieces.len())?;
    let tables: Vec<Vec<f64>> = pieces
        .iter()
        .map(|(_, s)| sigma_dense(s, family, grid))
        .collect::<Result<_>>()?;
    let mut idx = vec![0usize; r];
    let mut total = 0.0;
    loop {
        let mut v: f64 = idx.iter().map(|&i| grid.weights[i]).product();
        for ((verts, _), t) in pieces.iter().zip(&tables) {
            let mut flat = 0;
            for &u in verts {
                flat = flat * m + idx[u];
            }
            v *= t[flat];
        }
        total += v;
        let mut k = r;
        loop {
            if k == 0 {
                return Ok(total);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Frequencies of rooted balls by canonical code.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootedCensus {
    pub depth: usize,
    pub samples: usize,
    pub frequencies: BTreeMap<String, f64>,
    /// Share of balls larger than the cap.
    pub overflow: f64,
}

impl RootedCensus {
    fn from_counts(depth: usize, counts: BTreeMap<String, usize>, overflow: usize) -> Self {
        let samples = counts.values().sum::<usize>() + overflow;
        let s = samples.max(1) as f64;
        RootedCensus {
            depth,
            samples,
            frequencies: counts.into_iter().map(|(k, c)| (k, c as f64 / s)).collect(),
            overflow: overflow as f64 / s,
        }
    }

    pub fn total(&self) -> f64 {
        self.frequencies.values().sum::<f64>() + self.overflow
    }

    /// Total variation distance, the overflow bucket counting as one class.
    pub fn tv(&self, other: &RootedCensus) -> f64 {
        let mut keys: Vec<&String> = self.frequencies.keys().chain(other.frequencies.keys()).collect();
        keys.sort();
        keys.dedup();
        let get = |c: &RootedCensus, k: &String| c.frequencies.get(k).copied().unwrap_or(0.0);
        let s: f64 = keys.iter().map(|k| (get(self, k) - get(other, k)).abs()).sum();
        0.5 * (s + (self.overflow - other.overflow).abs())
    }
}

/// Canonical code of a rooted graph given as adjacency masks, root at 0.
pub fn rooted_code(adj: &[u64]) -> String {
    let mut colors = vec![0u32; adj.len()];
    colors[0] = 1;
    let (_, code) = canonical_labeling(adj, &colors);
    let mut s = format!("{}", adj.len());
    for (i, w) in code.iter().enumerate() {
        s.push(if i == adj.len() { '|' } else { '.' });
        s.push_str(&format!("{w:x}"));
    }
    s
}

/// Radius-`t` ball around `root` (induced), or `None` if it exceeds `cap` vertices.
fn graph_ball(g: &GeneratedGraph, root: usize, t: usize, cap: usize, seen: &mut Vec<u32>) -> Option<Vec<u64>> {
    let mut verts = vec![root];
    seen[root] = 1;
    let mut frontier = 0;
    for _ in 0..t {
        let end = verts.len();
        for i in frontier..end {
            for &u in g.neighbors(verts[i]) {
                let u = u as usize;
                if seen[u] == 0 {
                    seen[u] = verts.len() as u32 + 1;
                    verts.push(u);
                    if verts.len() > cap {
                        for &v in &verts {
                            seen[v] = 0;
                        }
                        return None;
                    }
                }
            }
        }
        frontier = end;
    }
    let mut adj = vec![0u64; verts.len()];
    for (i, &v) in verts.iter().enumerate() {
        for &u in g.neighbors(v) {
            let pos = seen[u as usize];
            if pos != 0 {
                adj[i] |= 1 << (pos - 1);
            }
        }
    }
    for &v in &verts {
        seen[v] = 0;
    }
    Some(adj)
}

/// Census of radius-`t` balls over all vertices of `g`.
pub fn neighborhood_census(g: &GeneratedGraph, t: usize, cap: usize) -> Result<RootedCensus> {
    if t > 3 {
        return Err(Error::InvalidParameter(format!("census depth {t} exceeds 3")));
    }
    if cap == 0 || cap > 64 {
        return Err(Error::InvalidParameter("ball cap must lie in 1..=64".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut overflow = 0;
    let mut seen = vec![0u32; g.n()];
    for v in 0..g.n() {
        match graph_ball(g, v, t, cap, &mut seen) {
            Some(adj) => *counts.entry(rooted_code(&adj)).or_insert(0) += 1,
            None => overflow += 1,
        }
    }
    Ok(RootedCensus::from_counts(t, counts, overflow))
}

/// One separable term of an atom kernel seen from one position.
#[derive(Debug)]
struct AtomTerm {
    coef: f64,
    at_root: Option<Vec<f64>>,
    /// per atom position: sampler for its type (`None`: from `mu`; the root position is unused)
    others: Vec<Option<WeightedIndex<f64>>>,
}

/// Samplers for the atoms meeting a vertex at each position of each atom.
#[derive(Debug)]
struct AtomTables {
    mu: WeightedIndex<f64>,
    /// `(entry, position, terms)`
    slots: Vec<(usize, usize, Vec<AtomTerm>)>,
    /// in-atom distances per entry
    dist: Vec<Vec<Vec<usize>>>,
    shapes: Vec<AtomShape>,
}

fn atom_distances(g: &SmallGraph) -> Vec<Vec<usize>> {
    let n = g.n();
    let adj = g.adjacency();
    (0..n)
        .map(|s| {
            let mut d = vec![usize::MAX; n];
            d[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for u in bits(adj[v]) {
                    if d[u] == usize::MAX {
                        d[u] = d[v] + 1;
                        q.push_back(u);
                    }
                }
            }
            d
        })
        .collect()
}

impl AtomTables {
    fn new(family: &KernelFamily) -> Result<Self> {
        let grid = family.grid();
        let werr = |e: rand::distr::weighted::Error| Error::InvalidParameter(e.to_string());
        let mu = WeightedIndex::new(&grid.weights).map_err(werr)?;
        let mut slots = Vec::new();
        for (ei, e) in family.entries().iter().enumerate() {
            let r = e.shape.r();
            let binds: Vec<Bind<'_>> = (0..r).map(Bind::Slot).collect();
            let mut seps = Vec::new();
            for t in e.kernel.terms() {
                let s = SepSum::from_kernel(t, &binds, &grid)
                    .map_err(|_| Error::Unsupported("rooted-limit sampling of non-separable kernels".into()))?;
                seps.extend(s.terms);
            }
            for j in 0..r {
                let mut terms = Vec::new();
                for st in &seps {
                    let mut coef = st.coef;
                    let mut at_root = None;
                    let mut others: Vec<Option<WeightedIndex<f64>>> = vec![None; r];
                    for (slot, f) in &st.factors {
                        if *slot == j {
                            at_root = Some(f.vals.to_vec());
                        } else {
                            let w: Vec<f64> = f.vals.iter().zip(&grid.weights).map(|(a, b)| a * b).collect();
                            let total: f64 = w.iter().sum();
                            if !(total > 0.0) || !total.is_finite() {
                                coef = if total.is_finite() { 0.0 } else { f64::INFINITY };
                                continue;
                            }
                            coef *= total;
                            others[*slot] = Some(WeightedIndex::new(&w).map_err(werr)?);
                        }
                    }
                    if !coef.is_finite() {
                        return Err(Error::DivergentKernel);
                    }
                    if coef > 0.0 {
                        terms.push(AtomTerm { coef, at_root, others });
                    }
                }
                if !terms.is_empty() {
                    slots.push((ei, j, terms));
                }
            }
        }
        Ok(AtomTables {
            mu,
            slots,
            dist: family.entries().iter().map(|e| atom_distances(e.shape.graph())).collect(),
            shapes: family.entries().iter().map(|e| e.shape.clone()).collect(),
        })
    }

    /// Radius-`t` ball of the limiting rooted graph, or `None` past `cap` vertices.
    fn sample_ball<R: Rng + ?Sized>(&self, t: usize, cap: usize, rng: &mut R) -> Option<Vec<u64>> {
        // (grid node, distance)
        let mut verts: Vec<(usize, usize)> = vec![(self.mu.sample(rng), 0)];
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut next = 0;
        let mut weights = Vec::new();
        while next < verts.len() {
            let (x, d) = verts[next];
            let v = next;
            next += 1;
            if d >= t {
                continue;
            }
            for (ei, j, terms) in &self.slots {
                weights.clear();
                weights.extend(terms.iter().map(|tm| tm.coef * tm.at_root.as_ref().map_or(1.0, |f| f[x])));
                let lam: f64 = weights.iter().sum();
                if lam <= 0.0 {
                    continue;
                }
                let count = Poisson::new(lam).map(|p| p.sample(rng) as u64).unwrap_or(0);
                let shape = &self.shapes[*ei];
                let dist = &self.dist[*ei][*j];
                for _ in 0..count {
                    let mut u = rng.random::<f64>() * lam;
                    let mut ti = terms.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        if u < *w {
                            ti = i;
                            break;
                        }
                        u -= w;
                    }
                    let term = &terms[ti];
                    let mut ids = vec![usize::MAX; shape.r()];
                    ids[*j] = v;
                    for p in 0..shape.r() {
                        if p == *j || d + dist[p] > t {
                            continue;
                        }
                        let y = match &term.others[p] {
                            Some(s) => s.sample(rng),
                            None => self.mu.sample(rng),
                        };
                        ids[p] = verts.len();
                        verts.push((y, d + dist[p]));
                        if verts.len() > cap {
                            return None;
                        }
                    }
                    for &(a, b) in shape.edges() {
                        if ids[a] != usize::MAX && ids[b] != usize::MAX {
                            edges.push((ids[a], ids[b]));
                        }
                    }
                }
            }
        }
        let mut adj = vec![0u64; verts.len()];
        for (a, b) in edges {
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
        }
        Some(adj)
    }
}

/// Monte Carlo census of radius-`t` balls of the limiting rooted graph.
pub fn sample_rooted_limit(family: &KernelFamily, t: usize, trials: usize, seed: u64, cap: usize) -> Result<RootedCensus> {
    if t > 3 {
        return Err(Error::InvalidParameter(format!("census depth {t} exceeds 3")));
    }
    if cap == 0 || cap > 64 {
        return Err(Error::InvalidParameter("ball cap must lie in 1..=64".into()));
    }
    let tables = AtomTables::new(family)?;
    let mut rng = stream_rng(seed, 0x10C);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut overflow = 0;
    for _ in 0..trials {
        match tables.sample_ball(t, cap, &mut rng) {
            Some(adj) => *counts.entry(rooted_code(&adj)).or_insert(0) += 1,
            None => overflow += 1,
        }
    }
    Ok(RootedCensus::from_counts(t, counts, overflow))
}

/// Summary statistics of one graph.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsReport {
    pub n: usize,
    pub e: usize,
    #[serde(rename = "C1")]
    pub c1: usize,
    #[serde(rename = "C2")]
    pub c2: usize,
    #[serde(rename = "N_ge_k")]
    pub n_ge_k: Vec<usize>,
    pub degree_histogram: DegreeHistogram,
    pub counts: SubgraphCounts,
    /// Clustering coefficient; `None` without paths of length 2.
    #[serde(rename = "c2")]
    pub clustering: Option<f64>,
    pub a: Option<f64>,
    pub census: Option<RootedCensus>,
}

pub fn stats_report(g: &GeneratedGraph, d_max: usize, census_depth: Option<usize>) -> Result<StatsReport> {
    let comp = components(g);
    let counts = count_subgraphs(g);
    let census = match census_depth {
        Some(t) => Some(neighborhood_census(g, t, DEFAULT_BALL_CAP)?),
        None => None,
    };
    Ok(StatsReport {
        n: g.n(),
        e: g.edge_count(),
        c1: comp.c1,
        c2: comp.c2,
        n_ge_k: comp.n_ge_k,
        degree_histogram: DegreeHistogram::of_graph(g, d_max),
        counts,
        clustering: clustering_c2(&counts).ok(),
        a: mixing_a(&counts).ok(),
        census,
    })
}
