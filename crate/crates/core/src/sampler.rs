//! Sampling `G(n, kappa)` in its Poisson multigraph form, the hypergraph view
//! of a hyperkernel, and derived random graphs.
//!
//! Each kernel term is sampled as its own Poisson process over ordered vertex
//! tuples (superposition). Product-form terms propose tuples coordinate by
//! coordinate and reject tuples with a repeated vertex; truncated terms thin
//! the proposals of their inner term.

use std::sync::OnceLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::graph::{falling, AtomShape};
use crate::kernel::{Hyperkernel, KernelFamily, KernelFunction, R_MAX};
use crate::sep::circle_distance;
use crate::space::TypeSpace;

/// Largest `n` accepted by the per-tuple oracle samplers.
pub const ORACLE_MAX_N: usize = 10;

/// Which construction to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplerVariant {
    /// Poisson number of copies on every ordered tuple, sampled by thinning.
    #[default]
    Poisson,
    /// Same law, sampled tuple by tuple (small `n` only).
    PerTuplePoisson,
    /// One copy with probability `min(1, p)` per tuple (small `n` only).
    PerTupleBernoulli,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub variant: SamplerVariant,
    /// Atoms with more vertices are not sampled.
    pub r_max: usize,
    pub seed: u64,
    /// Upper limit on the expected number of proposed tuples.
    pub budget: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            variant: SamplerVariant::Poisson,
            r_max: R_MAX,
            seed: 0,
            budget: 2e8,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// RNG for one stream of a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Vertex types with the seed that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexTypes {
    pub x: Vec<f64>,
    pub seed: u64,
}

/// `n` i.i.d. draws from `mu` on stream 0 of `seed`.
pub fn sample_types(n: usize, space: &TypeSpace, seed: u64) -> VertexTypes {
    let mut rng = stream_rng(seed, 0);
    VertexTypes {
        x: (0..n).map(|_| space.sample(&mut rng)).collect(),
        seed,
    }
}

/// A sampled graph: types, atoms and the edges they induce.
#[derive(Debug)]
pub struct GeneratedGraph {
    n: usize,
    types: Vec<f64>,
    shapes: Vec<AtomShape>,
    atom_shape: Vec<u32>,
    atom_offsets: Vec<usize>,
    atom_vertices: Vec<u32>,
    multi_edges: Vec<(u32, u32)>,
    simple: OnceLock<Vec<(u32, u32)>>,
    csr: OnceLock<(Vec<usize>, Vec<u32>)>,
}

impl Clone for GeneratedGraph {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            types: self.types.clone(),
            shapes: self.shapes.clone(),
            atom_shape: self.atom_shape.clone(),
            atom_offsets: self.atom_offsets.clone(),
            atom_vertices: self.atom_vertices.clone(),
            multi_edges: self.multi_edges.clone(),
            simple: OnceLock::new(),
            csr: OnceLock::new(),
        }
    }
}

impl PartialEq for GeneratedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.types == other.types
            && self.shapes == other.shapes
            && self.atom_shape == other.atom_shape
            && self.atom_offsets == other.atom_offsets
            && self.atom_vertices == other.atom_vertices
            && self.multi_edges == other.multi_edges
    }
}

fn norm_edge(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl GeneratedGraph {
    fn from_atoms(n: usize, types: Vec<f64>, shapes: Vec<AtomShape>, atoms: Vec<(u32, Vec<u32>)>) -> Self {
        let mut atom_shape = Vec::with_capacity(atoms.len());
        let mut atom_offsets = Vec::with_capacity(atoms.len() + 1);
        let mut atom_vertices = Vec::new();
        let mut multi_edges = Vec::new();
        atom_offsets.push(0);
        for (s, verts) in atoms {
            for &(a, b) in shapes[s as usize].edges() {
                multi_edges.push(norm_edge(verts[a], verts[b]));
            }
            atom_shape.push(s);
            atom_vertices.extend_from_slice(&verts);
            atom_offsets.push(atom_vertices.len());
        }
        Self {
            n,
            types,
            shapes,
            atom_shape,
            atom_offsets,
            atom_vertices,
            multi_edges,
            simple: OnceLock::new(),
            csr: OnceLock::new(),
        }
    }

    /// A graph given only by its edges (no atom provenance).
    pub fn from_edges(n: usize, types: Vec<f64>, edges: Vec<(u32, u32)>) -> Result<Self> {
        if types.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} types for {n} vertices",
                types.len()
            )));
        }
        let mut multi = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n || a == b {
                return Err(Error::InvalidParameter(format!("bad edge ({a},{b})")));
            }
            multi.push(norm_edge(a, b));
        }
        Ok(Self {
            n,
            types,
            shapes: Vec::new(),
            atom_shape: Vec::new(),
            atom_offsets: vec![0],
            atom_vertices: Vec::new(),
            multi_edges: multi,
            simple: OnceLock::new(),
            csr: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn types(&self) -> &[f64] {
        &self.types
    }

    /// Atom shapes indexed by shape id (the family entry index).
    pub fn shapes(&self) -> &[AtomShape] {
        &self.shapes
    }

    pub fn atom_count(&self) -> usize {
        self.atom_shape.len()
    }

    /// `(shape id, vertices)` of atom `i`.
    pub fn atom(&self, i: usize) -> (usize, &[u32]) {
        (
            self.atom_shape[i] as usize,
            &self.atom_vertices[self.atom_offsets[i]..self.atom_offsets[i + 1]],
        )
    }

    pub fn atoms(&self) -> impl Iterator<Item = (usize, &[u32])> + '_ {
        (0..self.atom_count()).map(move |i| self.atom(i))
    }

    /// Number of atoms per shape id.
    pub fn atom_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.shapes.len()];
        for &s in &self.atom_shape {
            c[s as usize] += 1;
        }
        c
    }

    /// Sum of atom sizes.
    pub fn atom_vertex_total(&self) -> usize {
        self.atom_vertices.len()
    }

    /// All edges with multiplicity, each as `(u, v)` with `u < v`.
    pub fn multi_edges(&self) -> &[(u32, u32)] {
        &self.multi_edges
    }

    /// Distinct edges, sorted.
    pub fn simple_edges(&self) -> &[(u32, u32)] {
        self.simple.get_or_init(|| {
            let mut e = self.multi_edges.clone();
            e.sort_unstable();
            e.dedup();
            e
        })
    }

    pub fn edge_count(&self) -> usize {
        self.simple_edges().len()
    }

    /// Compressed adjacency of the simple graph: `(offsets, neighbours)`,
    /// neighbours sorted.
    pub fn adjacency(&self) -> (&[usize], &[u32]) {
        let (o, nb) = self.csr.get_or_init(|| {
            let mut deg = vec![0usize; self.n + 1];
            for &(a, b) in self.simple_edges() {
                deg[a as usize] += 1;
                deg[b as usize] += 1;
            }
            let mut off = vec![0usize; self.n + 1];
            for v in 0..self.n {
                off[v + 1] = off[v] + deg[v];
            }
            let mut fill = off.clone();
            let mut nb = vec![0u32; off[self.n]];
            for &(a, b) in self.simple_edges() {
                nb[fill[a as usize]] = b;
                fill[a as usize] += 1;
                nb[fill[b as usize]] = a;
                fill[b as usize] += 1;
            }
            for v in 0..self.n {
                nb[off[v]..off[v + 1]].sort_unstable();
            }
            (off, nb)
        });
        (o, nb)
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        let (o, nb) = self.adjacency();
        &nb[o[v]..o[v + 1]]
    }

    /// Simple-graph degrees.
    pub fn degrees(&self) -> Vec<usize> {
        let (o, _) = self.adjacency();
        (0..self.n).map(|v| o[v + 1] - o[v]).collect()
    }

    /// Multigraph degrees.
    pub fn multi_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.multi_edges {
            d[a as usize] += 1;
            d[b as usize] += 1;
        }
        d
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    if !mean.is_finite() {
        return Err(Error::UnboundedKernel(format!("Poisson mean {mean}")));
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

fn distinct(t: &[u32]) -> bool {
    for i in 1..t.len() {
        if t[..i].contains(&t[i]) {
            return false;
        }
    }
    true
}

/// Precomputed per-family state shared by all term samplers.
struct Ctx<'a> {
    n: usize,
    types: &'a [f64],
    space: &'a TypeSpace,
    budget: f64,
    by_type: OnceLock<Vec<Vec<u32>>>,
    sorted: OnceLock<Vec<u32>>,
}

impl Ctx<'_> {
    fn by_type(&self) -> &[Vec<u32>] {
        self.by_type.get_or_init(|| {
            let k = self.space.num_types().unwrap_or(0);
            let mut lists = vec![Vec::new(); k];
            for (v, &x) in self.types.iter().enumerate() {
                lists[x as usize].push(v as u32);
            }
            lists
        })
    }

    fn sorted(&self) -> &[u32] {
        self.sorted.get_or_init(|| {
            let mut s: Vec<u32> = (0..self.n as u32).collect();
            s.sort_by(|a, b| self.types[*a as usize].total_cmp(&self.types[*b as usize]));
            s
        })
    }

    fn check_budget(&self, expected: f64) -> Result<()> {
        if expected > self.budget {
            Err(Error::IntensityOverflow {
                expected,
                budget: self.budget,
            })
        } else {
            Ok(())
        }
    }

    fn eval(&self, k: &KernelFunction, t: &[u32], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend(t.iter().map(|&v| self.types[v as usize]));
        k.eval(buf)
    }
}

/// Proposes tuples from the Poisson process with intensity `term(x)/n^{r-1}`
/// on ordered distinct tuples; `accept` thins them further.
fn sample_term<R: Rng + ?Sized>(
    ctx: &Ctx<'_>,
    term: &KernelFunction,
    r: usize,
    rng: &mut R,
    accept: &mut dyn FnMut(&[u32], &mut R) -> bool,
    out: &mut Vec<Vec<u32>>,
) -> Result<()> {
    let n = ctx.n;
    let nf = n as f64;
    if r > n {
        return Ok(());
    }
    let scale = nf.powi(1 - r as i32);
    match term {
        KernelFunction::Constant(c) => {
            // r i.i.d. uniform vertices; repeated vertices are rejected
            let mean = c * nf.powi(r as i32) * scale;
            ctx.check_budget(mean)?;
            let count = poisson(rng, mean)?;
            let mut t = vec![0u32; r];
            for _ in 0..count {
                for v in t.iter_mut() {
                    *v = rng.random_range(0..n as u32);
                }
                if distinct(&t) && accept(&t, rng) {
                    out.push(t.clone());
                }
            }
        }
        KernelFunction::RankOne { coef, alpha } => {
            let s = -1.0 / alpha;
            let phi: Vec<f64> = ctx.types.iter().map(|x| x.powf(s)).collect();
            let w: f64 = phi.iter().sum();
            let mean = coef * w.powi(r as i32) * scale;
            ctx.check_budget(mean)?;
            let count = poisson(rng, mean)?;
            if count == 0 {
                return Ok(());
            }
            let dist = WeightedIndex::new(&phi).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut t = vec![0u32; r];
            for _ in 0..count {
                for v in t.iter_mut() {
                    *v = dist.sample(rng) as u32;
                }
                if distinct(&t) && accept(&t, rng) {
                    out.push(t.clone());
                }
            }
        }
        KernelFunction::BlockTable { types, values } => {
            let k = *types;
            let lists = ctx.by_type();
            let mut tt = vec![0usize; r];
            let mut t = vec![0u32; r];
            for &v in values.iter() {
                if v > 0.0 {
                    let prod: f64 = tt.iter().map(|&a| lists[a].len() as f64).product();
                    let mean = v * prod * scale;
                    ctx.check_budget(mean)?;
                    let count = poisson(rng, mean)?;
                    for _ in 0..count {
                        for (p, slot) in t.iter_mut().enumerate() {
                            let l = &lists[tt[p]];
                            *slot = l[rng.random_range(0..l.len())];
                        }
                        if distinct(&t) && accept(&t, rng) {
                            out.push(t.clone());
                        }
                    }
                }
                for p in (0..r).rev() {
                    tt[p] += 1;
                    if tt[p] < k {
                        break;
                    }
                    tt[p] = 0;
                }
            }
        }
        KernelFunction::PairDistance {
            i,
            j,
            coef,
            exponent,
        } => sample_pair_distance(ctx, r, *i, *j, *coef, *exponent, rng, accept, out)?,
        KernelFunction::Truncated { inner, cap } => {
            let inner_k: &KernelFunction = inner;
            let cap = *cap;
            let mut buf = Vec::with_capacity(r);
            for t in inner_k.terms() {
                if matches!(t, KernelFunction::Truncated { .. }) {
                    return Err(Error::Unsupported("nested truncation".into()));
                }
                let mut thin = |tuple: &[u32], rng: &mut R| {
                    let v = ctx.eval(inner_k, tuple, &mut buf);
                    let ratio = if v <= cap { 1.0 } else { cap / v };
                    (ratio >= 1.0 || rng.random::<f64>() < ratio) && accept(tuple, rng)
                };
                sample_term(ctx, t, r, rng, &mut thin, out)?;
            }
        }
        KernelFunction::Sum(parts) => {
            for p in parts {
                sample_term(ctx, p, r, rng, accept, out)?;
            }
        }
    }
    Ok(())
}

/// `coef * d(x_i, x_j)^p`: ordered pairs `(u, v)` are proposed shell by shell
/// in dyadic distance bands around `u` and thinned to the exact intensity;
/// the remaining positions are uniform.
#[allow(clippy::too_many_arguments)]
fn sample_pair_distance<R: Rng + ?Sized>(
    ctx: &Ctx<'_>,
    r: usize,
    pi: usize,
    pj: usize,
    coef: f64,
    p: f64,
    rng: &mut R,
    accept: &mut dyn FnMut(&[u32], &mut R) -> bool,
    out: &mut Vec<Vec<u32>>,
) -> Result<()> {
    let n = ctx.n;
    let nf = n as f64;
    // per ordered pair: sum over the other r-2 distinct positions
    let pair_scale = coef * falling(n - 2, r - 2) / nf.powi(r as i32 - 1);
    if pair_scale == 0.0 {
        return Ok(());
    }
    let sorted = ctx.sorted();
    let pos: Vec<f64> = sorted.iter().map(|&v| ctx.types[v as usize]).collect();
    // count of sorted positions within [a, b) on the circle, as index ranges
    let range = |a: f64, b: f64| -> Vec<(usize, usize)> {
        let lo = |x: f64| pos.partition_point(|&y| y < x);
        let a = a.rem_euclid(1.0);
        let b = b.rem_euclid(1.0);
        if a <= b {
            vec![(lo(a), lo(b))]
        } else {
            vec![(lo(a), n), (0, lo(b))]
        }
    };
    // shells: (lo, hi] with hi_0 = 1/2; innermost ball handled exactly
    let mut shells: Vec<(f64, f64)> = Vec::new();
    if p >= 0.0 {
        shells.push((0.0, 0.5));
    } else {
        let floor = 1.0 / (nf * nf).max(4.0);
        let mut hi = 0.5;
        while hi / 2.0 > floor {
            shells.push((hi / 2.0, hi));
            hi /= 2.0;
        }
        shells.push((0.0, hi));
    }
    let mut t = vec![0u32; r];
    let mut expected = 0.0;
    for (si, &(lo, hi)) in shells.iter().enumerate() {
        let exact = p < 0.0 && si == shells.len() - 1;
        let bound = if p >= 0.0 { hi.powf(p) } else { lo.powf(p) };
        for (ui, &u) in sorted.iter().enumerate() {
            let x = pos[ui];
            // points with distance in (lo, hi]: arcs (x+lo, x+hi] and [x-hi, x-lo)
            let mut arcs = Vec::new();
            if exact {
                arcs.extend(range(x - hi, x + hi + f64::EPSILON));
            } else {
                arcs.extend(range(x + lo + f64::MIN_POSITIVE, x + hi + f64::EPSILON));
                arcs.extend(range(x - hi, x - lo));
            }
            let members: usize = arcs.iter().map(|(a, b)| b - a).sum();
            if members == 0 {
                continue;
            }
            let pick = |k: usize| -> usize {
                let mut k = k;
                for &(a, b) in &arcs {
                    if k < b - a {
                        return a + k;
                    }
                    k -= b - a;
                }
                unreachable!()
            };
            if exact {
                for k in 0..members {
                    let vi = pick(k);
                    if vi == ui {
                        continue;
                    }
                    let d = circle_distance(x, pos[vi]);
                    if d > hi {
                        continue;
                    }
                    if d == 0.0 {
                        return Err(Error::UnboundedKernel("coincident types under a singular distance kernel".into()));
                    }
                    let cnt = poisson(rng, pair_scale * d.powf(p))?;
                    for _ in 0..cnt {
                        fill_pair_tuple(&mut t, pi, pj, u, sorted[vi], n, rng);
                        if distinct(&t) && accept(&t, rng) {
                            out.push(t.clone());
                        }
                    }
                }
                continue;
            }
            let mean = pair_scale * bound * members as f64;
            expected += mean;
            let cnt = poisson(rng, mean)?;
            for _ in 0..cnt {
                let vi = pick(rng.random_range(0..members));
                if vi == ui {
                    continue;
                }
                let d = circle_distance(x, pos[vi]);
                if !(d > lo && d <= hi) && !(lo == 0.0 && d <= hi) {
                    continue;
                }
                let ratio = d.powf(p) / bound;
                if ratio < 1.0 && rng.random::<f64>() >= ratio {
                    continue;
                }
                fill_pair_tuple(&mut t, pi, pj, u, sorted[vi], n, rng);
                if distinct(&t) && accept(&t, rng) {
                    out.push(t.clone());
                }
            }
        }
        ctx.check_budget(expected)?;
    }
    Ok(())
}

fn fill_pair_tuple<R: Rng + ?Sized>(t: &mut [u32], pi: usize, pj: usize, u: u32, v: u32, n: usize, rng: &mut R) {
    for (p, slot) in t.iter_mut().enumerate() {
        *slot = if p == pi {
            u
        } else if p == pj {
            v
        } else {
            rng.random_range(0..n as u32)
        };
    }
}

/// Samples `G(n, kappa)` with freshly drawn types.
pub fn generate(family: &KernelFamily, n: usize, config: &SamplerConfig) -> Result<GeneratedGraph> {
    let types = sample_types(n, family.space(), config.seed);
    generate_with_types(family, types.x, config)
}

/// Samples the atoms of `G(n, kappa)` given the vertex types.
pub fn generate_with_types(
    family: &KernelFamily,
    types: Vec<f64>,
    config: &SamplerConfig,
) -> Result<GeneratedGraph> {
    if config.r_max < 2 {
        return Err(Error::InvalidParameter("r_max must be at least 2".into()));
    }
    let n = types.len();
    let shapes: Vec<AtomShape> = family.entries().iter().map(|e| e.shape.clone()).collect();
    let mut atoms: Vec<(u32, Vec<u32>)> = Vec::new();
    match config.variant {
        SamplerVariant::Poisson => {
            let ctx = Ctx {
                n,
                types: &types,
                space: family.space(),
                budget: config.budget,
                by_type: OnceLock::new(),
                sorted: OnceLock::new(),
            };
            for (ei, e) in family.entries().iter().enumerate() {
                let r = e.shape.r();
                if r > config.r_max {
                    continue;
                }
                let kernel = e.kernel.simplified();
                for (ti, term) in kernel.terms().into_iter().enumerate() {
                    let mut rng = stream_rng(config.seed, 1 + ((ei as u64) << 20) + ti as u64);
                    let mut tuples = Vec::new();
                    sample_term(&ctx, term, r, &mut rng, &mut |_, _| true, &mut tuples)?;
                    atoms.extend(tuples.into_iter().map(|t| (ei as u32, t)));
                }
            }
        }
        SamplerVariant::PerTuplePoisson | SamplerVariant::PerTupleBernoulli => {
            if n > ORACLE_MAX_N {
                return Err(Error::InvalidParameter(format!(
                    "per-tuple samplers are limited to n <= {ORACLE_MAX_N}"
                )));
            }
            let mut rng = stream_rng(config.seed, 1);
            let mut buf = Vec::new();
            for (ei, e) in family.entries().iter().enumerate() {
                let r = e.shape.r();
                if r > config.r_max || r > n {
                    continue;
                }
                for t in ordered_tuples(n, r) {
                    buf.clear();
                    buf.extend(t.iter().map(|&v| types[v as usize]));
                    let p = e.kernel.eval(&buf) / (n as f64).powi(r as i32 - 1);
                    let copies = match config.variant {
                        SamplerVariant::PerTuplePoisson => poisson(&mut rng, p)?,
                        _ => u64::from(rng.random::<f64>() < p.min(1.0)),
                    };
                    for _ in 0..copies {
                        atoms.push((ei as u32, t.clone()));
                    }
                }
            }
        }
    }
    Ok(GeneratedGraph::from_atoms(n, types, shapes, atoms))
}

/// All ordered `r`-tuples of distinct vertices in `0..n`, lexicographic.
pub fn ordered_tuples(n: usize, r: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(n: usize, r: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for v in 0..n as u32 {
            if !cur.contains(&v) {
                cur.push(v);
                rec(n, r, cur, out);
                cur.pop();
            }
        }
    }
    rec(n, r, &mut cur, &mut out);
    out
}

/// Expected atom-size mass lost by not sampling atoms larger than `r_max`:
/// `sum_{|F| > r_max} |F| int kappa_F`.
pub fn arity_truncation_error(family: &KernelFamily, r_max: usize) -> Result<f64> {
    let grid = family.grid();
    let mut tail = 0.0;
    for e in family.entries() {
        let r = e.shape.r();
        if r > r_max {
            tail += r as f64 * crate::kernel::kernel_integral(&e.kernel, r, &grid)?;
        }
    }
    Ok(tail)
}

/// Hyperedges (vertex sets, sorted) with multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypergraph {
    pub n: usize,
    pub types: Vec<f64>,
    offsets: Vec<usize>,
    vertices: Vec<u32>,
}

impl Hypergraph {
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge(&self, i: usize) -> &[u32] {
        &self.vertices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.len()).map(move |i| self.edge(i))
    }

    /// Simple graph with each hyperedge replaced by a clique.
    pub fn clique_edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for e in self.edges() {
            for a in 0..e.len() {
                for b in a + 1..e.len() {
                    out.push(norm_edge(e[a], e[b]));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Simple graph with each hyperedge replaced by a star on its smallest vertex.
    pub fn star_edges(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = self
            .edges()
            .flat_map(|e| e[1..].iter().map(move |&v| norm_edge(e[0], v)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// The hypergraph view of `G(n, kappa)` for a hyperkernel.
pub fn generate_hypergraph(hk: &Hyperkernel, n: usize, config: &SamplerConfig) -> Result<Hypergraph> {
    let g = generate(hk.family(), n, config)?;
    Ok(hypergraph_of(&g))
}

/// Vertex sets of the atoms of a generated graph.
pub fn hypergraph_of(g: &GeneratedGraph) -> Hypergraph {
    let mut offsets = vec![0];
    let mut vertices = Vec::with_capacity(g.atom_vertex_total());
    for (_, verts) in g.atoms() {
        let mut v = verts.to_vec();
        v.sort_unstable();
        vertices.extend(v);
        offsets.push(vertices.len());
    }
    Hypergraph {
        n: g.n(),
        types: g.types().to_vec(),
        offsets,
        vertices,
    }
}

/// One uniformly chosen pair from every hyperedge (multigraph, `u < v`).
/// Hyperedges with fewer than two vertices contribute nothing.
pub fn one_edge_per_hyperedge<R: Rng + ?Sized>(h: &Hypergraph, rng: &mut R) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(h.len());
    for e in h.edges() {
        let r = e.len();
        if r < 2 {
            continue;
        }
        let a = rng.random_range(0..r);
        let mut b = rng.random_range(0..r - 1);
        if b >= a {
            b += 1;
        }
        out.push(norm_edge(e[a], e[b]));
    }
    out
}

/// The `n x n` matrix `2 sum_r n^{-(r-2)} sum over distinct k_3..k_r of kappa_r(x_i, x_j, x_k...)`,
/// row-major with zero diagonal.
pub fn tau_matrix(hk: &Hyperkernel, types: &[f64]) -> Result<Vec<f64>> {
    let n = types.len();
    let nf = n as f64;
    let mut tau = vec![0.0; n * n];
    for e in hk.family().entries() {
        let r = e.shape.r();
        if r < 2 {
            continue;
        }
        if r > 4 {
            return Err(Error::ArityTooLarge { arity: r, limit: 4 });
        }
        let norm = nf.powi(-(r as i32 - 2));
        for term in e.kernel.terms() {
            add_tau_term(term, r, types, hk.space(), 2.0 * norm, &mut tau)?;
        }
    }
    for i in 0..n {
        tau[i * n + i] = 0.0;
    }
    Ok(tau)
}

fn add_tau_term(
    term: &KernelFunction,
    r: usize,
    types: &[f64],
    space: &TypeSpace,
    scale: f64,
    tau: &mut [f64],
) -> Result<()> {
    let n = types.len();
    let others = r - 2;
    match term {
        KernelFunction::Constant(c) => {
            let v = scale * c * falling(n.saturating_sub(2), others);
            for i in 0..n {
                for j in 0..n {
                    tau[i * n + j] += v;
                }
            }
        }
        KernelFunction::RankOne { coef, alpha } => {
            let phi: Vec<f64> = types.iter().map(|x| x.powf(-1.0 / alpha)).collect();
            // elementary symmetric sums of all weights
            let mut e_all = vec![0.0; others + 1];
            e_all[0] = 1.0;
            for &w in &phi {
                for k in (1..=others).rev() {
                    e_all[k] += w * e_all[k - 1];
                }
            }
            let fact: f64 = (1..=others).map(|k| k as f64).product();
            for i in 0..n {
                // remove i
                let mut e_i = vec![0.0; others + 1];
                e_i[0] = 1.0;
                for k in 1..=others {
                    e_i[k] = e_all[k] - phi[i] * e_i[k - 1];
                }
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let mut e_ij = e_i[0];
                    let mut prev = 1.0;
                    for k in 1..=others {
                        let cur = e_i[k] - phi[j] * prev;
                        prev = cur;
                        e_ij = cur;
                    }
                    if others == 0 {
                        e_ij = 1.0;
                    }
                    tau[i * n + j] += scale * coef * phi[i] * phi[j] * fact * e_ij;
                }
            }
        }
        KernelFunction::BlockTable { types: k, values } => {
            let k = *k;
            let mut counts = vec![0usize; k];
            for &x in types {
                counts[x as usize] += 1;
            }
            let inner = k.pow(others as u32);
            for i in 0..n {
                let ti = types[i] as usize;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let tj = types[j] as usize;
                    let mut c = counts.clone();
                    c[ti] -= 1;
                    c[tj] -= 1;
                    let mut s = 0.0;
                    for rest in 0..inner {
                        let mut tt = vec![ti, tj];
                        let mut x = rest;
                        let mut tail = vec![0; others];
                        for p in (0..others).rev() {
                            tail[p] = x % k;
                            x /= k;
                        }
                        tt.extend_from_slice(&tail);
                        let v = values[tt.iter().fold(0, |a, &b| a * k + b)];
                        if v == 0.0 {
                            continue;
                        }
                        let mut ways = 1.0;
                        let mut used = vec![0usize; k];
                        for &a in &tail {
                            ways *= c[a].saturating_sub(used[a]) as f64;
                            used[a] += 1;
                        }
                        s += v * ways;
                    }
                    tau[i * n + j] += scale * s;
                }
            }
        }
        other => {
            let cost = (n as f64).powi(r as i32);
            if cost > 5e9 {
                return Err(Error::Unsupported(format!("tau matrix by enumeration costs {cost:.1e}")));
            }
            let _ = space;
            let mut xs = vec![0.0; r];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    xs[0] = types[i];
                    xs[1] = types[j];
                    let mut s = 0.0;
                    match others {
                        0 => s = other.eval(&xs),
                        1 => {
                            for k in 0..n {
                                if k != i && k != j {
                                    xs[2] = types[k];
                                    s += other.eval(&xs);
                                }
                            }
                        }
                        _ => {
                            for k in 0..n {
                                for l in 0..n {
                                    if k != i && k != j && l != i && l != j && k != l {
                                        xs[2] = types[k];
                                        xs[3] = types[l];
                                        s += other.eval(&xs);
                                    }
                                }
                            }
                        }
                    }
                    tau[i * n + j] += scale * s;
                }
            }
        }
    }
    Ok(())
}

/// `(1/n^2) sum_{i != j} |tau~_ij - tau(x_i, x_j)|`.
pub fn tau_discrepancy(hk: &Hyperkernel, types: &[f64]) -> Result<f64> {
    let n = types.len();
    let tm = tau_matrix(hk, types)?;
    let mut pair_kernels = Vec::new();
    for e in hk.family().entries() {
        let r = e.shape.r();
        if r >= 2 {
            pair_kernels.push(e.kernel.marginal(r, &[0, 1], hk.space())?);
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let xy = [types[i], types[j]];
            let t: f64 = pair_kernels.iter().map(|k| 2.0 * k.eval(&xy)).sum();
            total += (tm[i * n + j] - t).abs();
        }
    }
    Ok(total / (n as f64 * n as f64))
}

/// Keeps each simple edge independently with probability `p`.
pub fn percolate_edges(g: &GeneratedGraph, p: f64, seed: u64) -> Result<GeneratedGraph> {
    check_prob(p)?;
    let mut rng = stream_rng(seed, 0xE);
    let kept: Vec<(u32, u32)> = g
        .simple_edges()
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < p)
        .collect();
    GeneratedGraph::from_edges(g.n(), g.types().to_vec(), kept)
}

/// Keeps each vertex independently with probability `p`; survivors are
/// relabelled `0..n'` in increasing order.
pub fn percolate_vertices(g: &GeneratedGraph, p: f64, seed: u64) -> Result<GeneratedGraph> {
    check_prob(p)?;
    let mut rng = stream_rng(seed, 0xF);
    let mut label = vec![u32::MAX; g.n()];
    let mut types = Vec::new();
    for v in 0..g.n() {
        if rng.random::<f64>() < p {
            label[v] = types.len() as u32;
            types.push(g.types()[v]);
        }
    }
    let kept: Vec<(u32, u32)> = g
        .simple_edges()
        .iter()
        .filter_map(|&(a, b)| {
            let (la, lb) = (label[a as usize], label[b as usize]);
            (la != u32::MAX && lb != u32::MAX).then_some((la, lb))
        })
        .collect();
    GeneratedGraph::from_edges(types.len(), types, kept)
}

fn check_prob(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("probability {p} outside [0,1]")))
    }
}
