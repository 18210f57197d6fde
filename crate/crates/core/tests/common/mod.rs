//! Oracles and property checks shared by the acceptance runner and the
//! property suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::collections::VecDeque;

use kfgraph::branching::{iterate_phi, operator_norm, solve_survival, DiscreteBP, NormMethod, SolveOptions};
use kfgraph::graphstats::count_subgraphs_csr;
use kfgraph::models::{powerlaw_family, PowerLawParams};
use kfgraph::sampler::{generate, generate_with_types, tau_discrepancy, sample_types, SamplerConfig, SamplerVariant};
use kfgraph::{to_hyperkernel, truncate, AtomShape, FamilyEntry, Hyperkernel, KernelFamily, KernelFunction, TypeSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- oracles

/// Component sizes by breadth-first search, largest first.
pub fn bfs_component_sizes(n: usize, edges: &[(u32, u32)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b as usize);
        adj[b as usize].push(a as usize);
    }
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        let mut size = 0;
        while let Some(v) = q.pop_front() {
            size += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    q.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Dense adjacency to sorted CSR.
pub fn csr(n: usize, adj: &[Vec<bool>]) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0];
    let mut nbrs = Vec::new();
    for v in 0..n {
        for w in 0..n {
            if adj[v][w] {
                nbrs.push(w as u32);
            }
        }
        offsets.push(nbrs.len());
    }
    (offsets, nbrs)
}

/// `[K2, K3, P2, P3, S3]` by counting injective maps and dividing by the
/// automorphism counts `2, 6, 2, 2, 6`.
pub fn brute_counts(n: usize, adj: &[Vec<bool>]) -> [u64; 5] {
    let e = |a: usize, b: usize| adj[a][b];
    let mut c = [0u64; 5];
    for a in 0..n {
        for b in 0..n {
            if a == b || !e(a, b) {
                continue;
            }
            c[0] += 1;
            for d in 0..n {
                if d == a || d == b || !e(b, d) {
                    continue;
                }
                c[2] += 1;
                if e(a, d) {
                    c[1] += 1;
                }
                for f in 0..n {
                    if f == a || f == b || f == d {
                        continue;
                    }
                    if e(d, f) {
                        c[3] += 1;
                    }
                    // centre b, leaves a, d, f
                    if e(b, f) {
                        c[4] += 1;
                    }
                }
            }
        }
    }
    [c[0] / 2, c[1] / 6, c[2] / 2, c[3] / 2, c[4] / 6]
}

pub fn random_adj<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
    }
    adj
}

/// Root of `rho = 1 - exp(-sum_r r c_r (1 - (1-rho)^{r-1}))` for a single-type
/// constant hyperkernel, by bisection on the largest root.
pub fn single_type_rho(cs: &[(usize, f64)]) -> f64 {
    let g = |rho: f64| {
        let s: f64 = cs
            .iter()
            .map(|&(r, c)| r as f64 * c * (1.0 - (1.0 - rho).powi(r as i32 - 1)))
            .sum();
        1.0 - (-s).exp() - rho
    };
    // g(1) < 0; search down from 1 for the largest sign change
    if g(1e-9) <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (1e-9, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Chi-square goodness of fit of integer samples against Poisson(mean),
/// bins merged to expected count at least 5. Returns the p-value.
pub fn poisson_gof_pvalue(samples: &[u64], mean: f64) -> f64 {
    let pois = Poisson::new(mean).unwrap();
    let n = samples.len() as f64;
    // bin edges: [0, k0], (k0, k1], ..., (k_last, inf)
    let mut edges = Vec::new();
    let mut prev = 0.0;
    let stop = (mean + 20.0 * mean.sqrt() + 20.0) as u64;
    for k in 0..stop {
        let cdf = pois.cdf(k);
        if (cdf - prev) * n >= 5.0 && (1.0 - cdf) * n >= 5.0 {
            edges.push(k);
            prev = cdf;
        }
    }
    let bins = edges.len() + 1;
    let mut observed = vec![0.0; bins];
    for &s in samples {
        let b = edges.partition_point(|&e| e < s);
        observed[b] += 1.0;
    }
    let mut stat = 0.0;
    let mut prev = 0.0;
    for b in 0..bins {
        let cdf = if b < edges.len() { pois.cdf(edges[b]) } else { 1.0 };
        let expected = (cdf - prev) * n;
        prev = cdf;
        stat += (observed[b] - expected).powi(2) / expected;
    }
    let dof = (bins - 1) as f64;
    if dof < 1.0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    Poisson::new(mean).unwrap().pmf(k)
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

// ----------------------------------------------------- random hyperkernels

/// Symmetric table over `k^r` tuples with entries from `draw`.
pub fn symmetric_table<R: Rng>(k: usize, r: usize, rng: &mut R, mut draw: impl FnMut(&mut R) -> f64) -> Vec<f64> {
    let total = k.pow(r as u32);
    let mut by_sorted: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut values = vec![0.0; total];
    for (idx, v) in values.iter_mut().enumerate() {
        let mut t = Vec::with_capacity(r);
        let mut x = idx;
        for _ in 0..r {
            t.push(x % k);
            x /= k;
        }
        t.sort_unstable();
        *v = *by_sorted.entry(t).or_insert_with(|| draw(rng));
    }
    values
}

pub struct RandomHk {
    pub hk: Hyperkernel,
    pub types: usize,
}

/// A random finite-type hyperkernel with arities 2 and 3 (and sometimes 4).
/// With `zeros`, about a third of the entries are exactly zero.
pub fn random_hyperkernel(seed: u64, zeros: bool, scale: f64) -> RandomHk {
    let mut rng = rng(seed);
    let k = rng.random_range(1..=3usize);
    let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    let space = TypeSpace::finite(w).unwrap();
    let mut entries = Vec::new();
    let max_r = if rng.random_bool(0.3) { 4 } else { 3 };
    for r in 2..=max_r {
        let vals = symmetric_table(k, r, &mut rng, |g| {
            if zeros && g.random_bool(0.35) {
                0.0
            } else {
                scale * g.random_range(0.0..1.0)
            }
        });
        entries.push(FamilyEntry::new(AtomShape::clique(r), KernelFunction::block_table(k, vals)));
    }
    let fam = KernelFamily::new(space, entries).unwrap();
    RandomHk {
        hk: to_hyperkernel(&fam).unwrap(),
        types: k,
    }
}

fn random_unit_vec<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// Random `f <= g` in `[0,1]^len`, some coordinates zero.
pub fn random_ordered_pair<R: Rng>(len: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let g = random_unit_vec(len, rng);
    let f = g
        .iter()
        .map(|&v| if rng.random_bool(0.2) { 0.0 } else { v * rng.random::<f64>() })
        .collect();
    (f, g)
}

// -------------------------------------------------------- property checks

/// `int f S(g) <= int g S(f)` for `0 <= f <= g <= 1`.
pub fn check_fsg(seed: u64) -> Check {
    let RandomHk { hk, .. } = random_hyperkernel(seed, false, 2.0);
    let bp = DiscreteBP::new(&hk).map_err(|e| e.to_string())?;
    let grid = bp.grid().clone();
    let mut r = rng(seed ^ 0xF5);
    let (f, g) = random_ordered_pair(grid.len(), &mut r);
    let lhs = grid.dot(&f, &bp.s_apply(&g).unwrap());
    let rhs = grid.dot(&g, &bp.s_apply(&f).unwrap());
    if lhs <= rhs + 1e-12 {
        Ok(format!("{lhs:.6} <= {rhs:.6}"))
    } else {
        Err(format!("seed {seed}: int f S(g) = {lhs} > int g S(f) = {rhs}"))
    }
}

/// `0 <= S(f) <= T(f)` and `S(f)(x) > 0` iff `T(f)(x) > 0`.
pub fn check_s_le_t(seed: u64) -> Check {
    let RandomHk { hk, .. } = random_hyperkernel(seed, true, 3.0);
    let bp = DiscreteBP::new(&hk).map_err(|e| e.to_string())?;
    let mut r = rng(seed ^ 0x57);
    let (f, _) = random_ordered_pair(bp.grid().len(), &mut r);
    let s = bp.s_apply(&f).unwrap();
    let t = bp.t_apply(&f).unwrap();
    for i in 0..s.len() {
        if s[i] < 0.0 || s[i] > t[i] * (1.0 + 1e-12) + 1e-300 {
            return Err(format!("seed {seed} node {i}: S = {} T = {}", s[i], t[i]));
        }
        if (s[i] > 0.0) != (t[i] > 0.0) {
            return Err(format!("seed {seed} node {i}: S = {} T = {} differ in support", s[i], t[i]));
        }
    }
    Ok("ok".into())
}

/// `f <= g` implies `Phi(f) <= Phi(g)`.
pub fn check_phi_monotone(seed: u64) -> Check {
    let RandomHk { hk, .. } = random_hyperkernel(seed, true, 2.0);
    let bp = DiscreteBP::new(&hk).map_err(|e| e.to_string())?;
    let mut r = rng(seed ^ 0x3F);
    let (f, g) = random_ordered_pair(bp.grid().len(), &mut r);
    let pf = bp.phi_apply(&f).unwrap();
    let pg = bp.phi_apply(&g).unwrap();
    for i in 0..pf.len() {
        if pf[i] > pg[i] + 1e-15 {
            return Err(format!("seed {seed} node {i}: Phi(f) = {} > Phi(g) = {}", pf[i], pg[i]));
        }
    }
    Ok("ok".into())
}

/// Downward iteration from 1 and upward iteration from a small multiple of
/// the Perron vector reach the same fixed point.
pub fn check_fixed_point_uniqueness(seed: u64) -> Check {
    let RandomHk { hk, .. } = random_hyperkernel(seed, false, 1.0);
    // rescale so that ||T|| is comfortably above 1; all entries positive so irreducible
    let bp0 = DiscreteBP::new(&hk).map_err(|e| e.to_string())?;
    let norm = operator_norm(&bp0, NormMethod::PowerIteration, 1e-12).value;
    let target = 1.5 + (seed % 5) as f64 * 0.4;
    let fam = hk.family();
    let scaled = KernelFamily::new(
        fam.space().clone(),
        fam.entries()
            .iter()
            .map(|e| FamilyEntry::new(e.shape.clone(), e.kernel.scaled(target / norm)))
            .collect(),
    )
    .unwrap();
    let bp = DiscreteBP::from_family(&scaled).map_err(|e| e.to_string())?;
    let opts = SolveOptions {
        tol: 1e-13,
        ..SolveOptions::default()
    };
    let down = solve_survival(&bp, &opts).map_err(|e| e.to_string())?;
    // Perron vector of T
    let mut v = vec![1.0; bp.grid().len()];
    for _ in 0..500 {
        let tv = bp.t_apply(&v).unwrap();
        let m = tv.iter().cloned().fold(0.0, f64::max);
        v = tv.iter().map(|x| x / m).collect();
    }
    let mut eps = 0.1;
    let f0 = loop {
        let f: Vec<f64> = v.iter().map(|x| eps * x).collect();
        let pf = bp.phi_apply(&f).unwrap();
        if pf.iter().zip(&f).all(|(a, b)| a >= b) {
            break f;
        }
        eps /= 2.0;
        if eps < 1e-12 {
            return Err(format!("seed {seed}: no sub-solution found"));
        }
    };
    let up = iterate_phi(&bp, f0, &opts).map_err(|e| e.to_string())?;
    let gap = down
        .rho_x
        .iter()
        .zip(&up.rho_x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap <= 1e-8 && down.rho > 0.0 {
        Ok(format!("rho = {:.6}, gap {gap:.1e}", down.rho))
    } else {
        Err(format!("seed {seed}: sup gap {gap:.3e}, rho {}", down.rho))
    }
}

/// Iterates of `Phi` from 1 decrease in every coordinate.
pub fn check_iterates_decreasing(seed: u64) -> Check {
    let RandomHk { hk, .. } = random_hyperkernel(seed, true, 3.0);
    let bp = DiscreteBP::new(&hk).map_err(|e| e.to_string())?;
    let mut f = vec![1.0; bp.grid().len()];
    for it in 0..200 {
        let g = bp.phi_apply(&f).unwrap();
        // rounding at the fixed point can add an ulp
        if let Some(i) = (0..f.len()).find(|&i| g[i] > f[i] * (1.0 + 1e-14)) {
            return Err(format!("seed {seed} iteration {it} node {i}: {} -> {}", f[i], g[i]));
        }
        f = g;
    }
    Ok("ok".into())
}

/// `||T|| >= 2 xi_e`, with equality when `lambda` is constant.
pub fn check_norm_ge_two_xi(seed: u64) -> Check {
    let RandomHk { hk, .. } = random_hyperkernel(seed, true, 2.0);
    let bp = DiscreteBP::new(&hk).map_err(|e| e.to_string())?;
    let norm = operator_norm(&bp, NormMethod::PowerIteration, 1e-13).value;
    let two_xi = 2.0 * bp.edge_kernel().xi_e();
    if norm < two_xi - 1e-8 {
        return Err(format!("seed {seed}: ||T|| = {norm} < 2 xi_e = {two_xi}"));
    }
    let lam = bp.edge_kernel().lambda();
    let constant = lam.iter().all(|l| (l - lam[0]).abs() <= 1e-12 * lam[0].max(1.0));
    if constant && (norm - two_xi).abs() > 1e-8 {
        return Err(format!("seed {seed}: constant lambda but ||T|| = {norm} != {two_xi}"));
    }
    Ok(format!("{norm:.6} >= {two_xi:.6}"))
}

/// `||T|| = 2 xi_e` for constant hyperkernels on several types.
pub fn check_norm_equality_constant(c2: f64, c3: f64, weights: Vec<f64>) -> Check {
    let k = weights.len();
    let fam = KernelFamily::new(
        TypeSpace::finite(weights).unwrap(),
        vec![
            FamilyEntry::new(AtomShape::clique(2), KernelFunction::block_table(k, vec![c2; k * k])),
            FamilyEntry::new(AtomShape::clique(3), KernelFunction::block_table(k, vec![c3; k * k * k])),
        ],
    )
    .unwrap();
    let bp = DiscreteBP::from_family(&fam).map_err(|e| e.to_string())?;
    let norm = operator_norm(&bp, NormMethod::PowerIteration, 1e-13).value;
    let two_xi = 2.0 * bp.edge_kernel().xi_e();
    if (norm - two_xi).abs() <= 1e-8 {
        Ok(format!("{norm:.6}"))
    } else {
        Err(format!("||T|| = {norm} vs 2 xi_e = {two_xi}"))
    }
}

/// `rho(truncate(kappa, M))` is nondecreasing in `M` and approaches `rho(kappa)`.
pub fn check_truncation_monotone_rho(grid: usize) -> Check {
    let p = PowerLawParams::new(0.1, 0.1, 3.0).unwrap();
    let fam = powerlaw_family(&p, grid).unwrap();
    let full = solve_survival(&DiscreteBP::from_family(&fam).unwrap(), &SolveOptions::default())
        .map_err(|e| e.to_string())?
        .rho;
    let mut last = 0.0;
    let mut gaps = Vec::new();
    let mut m = 1.0;
    while m <= 256.0 {
        let tf = truncate(&fam, m).unwrap();
        let rho = solve_survival(&DiscreteBP::from_family(&tf).unwrap(), &SolveOptions::default())
            .map_err(|e| e.to_string())?
            .rho;
        if rho < last - 1e-9 {
            return Err(format!("M = {m}: rho = {rho} < {last}"));
        }
        if rho > full + 1e-9 {
            return Err(format!("M = {m}: rho = {rho} above the untruncated {full}"));
        }
        gaps.push(full - rho);
        last = rho;
        m *= 2.0;
    }
    let final_gap = *gaps.last().unwrap();
    if final_gap <= 0.1 * gaps[0].max(1e-12) {
        Ok(format!("rho gap {:.3e} -> {final_gap:.3e}", gaps[0]))
    } else {
        Err(format!("gap did not shrink: {:.3e} -> {final_gap:.3e}", gaps[0]))
    }
}

/// Triangle counts of `{K3: c}` over `seeds` seeds against Poisson.
pub fn check_atom_count_chi_square(n: usize, c: f64, seeds: u64) -> Check {
    let fam = KernelFamily::constants(vec![(AtomShape::clique(3), c)]).unwrap();
    let counts: Vec<u64> = (0..seeds)
        .map(|s| generate(&fam, n, &SamplerConfig::with_seed(s)).unwrap().atom_count() as u64)
        .collect();
    let nf = n as f64;
    let mean = nf * (nf - 1.0) * (nf - 2.0) * c / (nf * nf);
    let pv = poisson_gof_pvalue(&counts, mean);
    if pv >= 0.01 {
        Ok(format!("p-value {pv:.3}"))
    } else {
        Err(format!("p-value {pv:.4} < 0.01"))
    }
}

/// Atom sizes per vertex against `iota = sum_F |F| int kappa_F`.
pub fn check_vertex_total(n: usize, seed: u64) -> Check {
    let fam = KernelFamily::constants(vec![(AtomShape::clique(2), 1.0), (AtomShape::clique(3), 0.5)]).unwrap();
    let g = generate(&fam, n, &SamplerConfig::with_seed(seed)).unwrap();
    let v = g.atom_vertex_total() as f64 / n as f64;
    if (v - 3.5).abs() <= 0.05 {
        Ok(format!("v/n = {v:.4}"))
    } else {
        Err(format!("v/n = {v} vs 3.5"))
    }
}

/// TV between the atom-multiset laws of the thinning sampler and the
/// per-tuple sampler on a small two-type graph with fixed types.
pub fn check_thinning_tv(samples: u64) -> Check {
    let k = 2;
    let fam = KernelFamily::new(
        TypeSpace::finite(vec![0.5, 0.5]).unwrap(),
        vec![
            FamilyEntry::new(AtomShape::clique(2), KernelFunction::block_table(k, vec![0.06, 0.02, 0.02, 0.0])),
            FamilyEntry::new(
                AtomShape::clique(3),
                KernelFunction::block_table(k, vec![0.0, 0.1, 0.1, 0.025, 0.1, 0.025, 0.025, 0.05]),
            ),
        ],
    )
    .unwrap();
    let types = vec![0.0, 0.0, 1.0, 1.0, 0.0];
    let law = |variant: SamplerVariant, offset: u64| {
        let mut h: BTreeMap<Vec<(usize, Vec<u32>)>, f64> = BTreeMap::new();
        for s in 0..samples {
            let cfg = SamplerConfig {
                variant,
                ..SamplerConfig::with_seed(offset + s)
            };
            let g = generate_with_types(&fam, types.clone(), &cfg).unwrap();
            // kernels are symmetric, so only the vertex set of an atom carries information
            let mut key: Vec<(usize, Vec<u32>)> = g
                .atoms()
                .map(|(sh, t)| {
                    let mut t = t.to_vec();
                    t.sort_unstable();
                    (sh, t)
                })
                .collect();
            key.sort();
            *h.entry(key).or_default() += 1.0 / samples as f64;
        }
        h
    };
    let a = law(SamplerVariant::Poisson, 0);
    let b = law(SamplerVariant::PerTuplePoisson, 1 << 40);
    let mut keys: Vec<_> = a.keys().chain(b.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let tv: f64 = 0.5
        * keys
            .iter()
            .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
            .sum::<f64>();
    if tv <= 0.02 {
        Ok(format!("TV {tv:.4} over {} classes", keys.len()))
    } else {
        Err(format!("TV {tv:.4} > 0.02"))
    }
}

/// `count_subgraphs` against [`brute_counts`] on every graph with at most six
/// vertices and `random8` random 8-vertex graphs.
pub fn check_counts_bruteforce(random8: u64) -> Check {
    let mut checked = 0;
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let mut adj = vec![vec![false; n]; n];
            for (i, &(a, b)) in pairs.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    adj[a][b] = true;
                    adj[b][a] = true;
                }
            }
            compare_counts(n, &adj)?;
            checked += 1;
        }
    }
    let mut r = rng(0xB8);
    for _ in 0..random8 {
        let p = r.random_range(0.1..0.9);
        let adj = random_adj(8, p, &mut r);
        compare_counts(8, &adj)?;
        checked += 1;
    }
    Ok(format!("{checked} graphs"))
}

pub fn compare_counts(n: usize, adj: &[Vec<bool>]) -> Result<(), String> {
    let (o, nb) = csr(n, adj);
    let c = count_subgraphs_csr(&o, &nb);
    let got = [c.k2, c.k3, c.p2, c.p3, c.s3];
    let want = brute_counts(n, adj);
    if got == want {
        Ok(())
    } else {
        Err(format!("counts {got:?} vs brute force {want:?} on {adj:?}"))
    }
}

/// Average of the tau discrepancy over `seeds` type draws at each `n`.
pub fn tau_discrepancy_means(ns: &[usize], seeds: u64) -> Vec<f64> {
    let p = PowerLawParams::new(1.0, 1.0, 3.0).unwrap();
    let hk = to_hyperkernel(&powerlaw_family(&p, 64).unwrap()).unwrap();
    ns.iter()
        .map(|&n| {
            (0..seeds)
                .map(|s| {
                    let t = sample_types(n, hk.space(), 1000 + s);
                    tau_discrepancy(&hk, &t.x).unwrap()
                })
                .sum::<f64>()
                / seeds as f64
        })
        .collect()
}

pub fn check_tau_discrepancy(ns: &[usize], seeds: u64) -> Check {
    let m = tau_discrepancy_means(ns, seeds);
    if m.windows(2).all(|w| w[1] < w[0]) {
        Ok(format!("{m:.4?}"))
    } else {
        Err(format!("not decreasing: {m:?}"))
    }
}
