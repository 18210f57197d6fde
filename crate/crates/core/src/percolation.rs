//! Bond and site percolation acting on kernel families, and thresholds for
//! constant families.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AtomShape, SmallGraph};
use crate::kernel::{edge_density, to_hyperkernel, FamilyEntry, KernelFamily, KernelFunction};
use crate::space::TypeSpace;

/// Edge limit for the spanning-subgraph expansion of one atom.
pub const BOND_MAX_EDGES: usize = 6;
/// Edge limit for brute-force `theta_F`.
pub const THETA_MAX_EDGES: usize = 20;
/// Vertex limit for the deletion-pattern expansion of one atom.
pub const SITE_MAX_VERTICES: usize = 6;

/// Like [`KernelFamily`], but atoms may be disconnected.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedFamily {
    space: TypeSpace,
    entries: Vec<(SmallGraph, KernelFunction)>,
}

impl GeneralizedFamily {
    pub fn new(space: TypeSpace, entries: Vec<(SmallGraph, KernelFunction)>) -> Result<Self> {
        for (g, k) in &entries {
            if g.n() == 0 {
                return Err(Error::InvalidAtom("atom without vertices".into()));
            }
            k.validate(g.n(), &space)?;
        }
        Ok(Self { space, entries })
    }

    pub fn from_family(f: &KernelFamily) -> Self {
        Self {
            space: f.space().clone(),
            entries: f.entries().iter().map(|e| (e.shape.graph().clone(), e.kernel.clone())).collect(),
        }
    }

    pub fn space(&self) -> &TypeSpace {
        &self.space
    }

    pub fn entries(&self) -> &[(SmallGraph, KernelFunction)] {
        &self.entries
    }

    /// `sum |F| int kappa_F`.
    pub fn iota(&self) -> Result<f64> {
        let grid = self.space.grid();
        let mut s = 0.0;
        for (g, k) in &self.entries {
            s += g.n() as f64 * crate::kernel::kernel_integral(k, g.n(), &grid)?;
        }
        Ok(s)
    }
}

/// Collects kernels by isomorphism class of their graph. The first graph seen
/// in a class is its representative; later members are relabelled onto it.
struct ClassMerger {
    classes: BTreeMap<SmallGraph, (SmallGraph, Vec<usize>, Vec<KernelFunction>)>,
    order: Vec<SmallGraph>,
}

impl ClassMerger {
    fn new() -> Self {
        Self {
            classes: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    fn add(&mut self, g: SmallGraph, k: KernelFunction) {
        if k.is_zero() {
            return;
        }
        let (canon, perm) = g.canonical();
        match self.classes.get_mut(&canon) {
            Some((_, rep_perm, ks)) => {
                // sub vertex v -> canonical perm[v] -> representative vertex
                let mut inv = vec![0; rep_perm.len()];
                for (v, &c) in rep_perm.iter().enumerate() {
                    inv[c] = v;
                }
                let p: Vec<usize> = perm.iter().map(|&c| inv[c]).collect();
                ks.push(relabel_kernel(&k, &p));
            }
            None => {
                self.order.push(canon.clone());
                self.classes.insert(canon, (g, perm, vec![k]));
            }
        }
    }

    fn finish(self) -> Vec<(SmallGraph, KernelFunction)> {
        let mut classes = self.classes;
        self.order
            .into_iter()
            .map(|c| {
                let (g, _, ks) = classes.remove(&c).expect("class recorded");
                let k = if ks.len() == 1 {
                    ks.into_iter().next().expect("one kernel")
                } else {
                    KernelFunction::Sum(ks).simplified()
                };
                (g, k)
            })
            .collect()
    }
}

/// Kernel of an atom whose vertex `v` is moved to position `p[v]`.
fn relabel_kernel(k: &KernelFunction, p: &[usize]) -> KernelFunction {
    if p.iter().enumerate().all(|(i, &v)| i == v) {
        return k.clone();
    }
    // new(y) = old(x) with x_v = y_{p[v]}
    k.permuted(p)
}

/// Replaces each atom by one atom per connected component, integrating out
/// the coordinates of the other components.
pub fn connectify(gf: &GeneralizedFamily) -> Result<KernelFamily> {
    let mut merger = ClassMerger::new();
    for (g, k) in &gf.entries {
        let comps = g.components();
        if comps.len() == 1 {
            merger.add(g.clone(), k.clone());
            continue;
        }
        for comp in comps {
            let sub = g.induced(&comp);
            let marg = k.marginal(g.n(), &comp, &gf.space)?;
            merger.add(sub, marg.simplified());
        }
    }
    let entries = merger
        .finish()
        .into_iter()
        .map(|(g, k)| Ok(FamilyEntry::new(AtomShape::new(g)?, k)))
        .collect::<Result<Vec<_>>>()?;
    KernelFamily::new(gf.space.clone(), entries)
}

/// Each atom `F` becomes its spanning subgraphs `F'`, weighted by
/// `p^{e(F')} (1-p)^{e(F)-e(F')}`.
pub fn bond_transform(family: &KernelFamily, p: f64) -> Result<GeneralizedFamily> {
    check_p(p)?;
    let mut merger = ClassMerger::new();
    for e in family.entries() {
        let g = e.shape.graph();
        let ne = g.edge_count();
        if ne > BOND_MAX_EDGES {
            return Err(Error::TooManyEdges {
                edges: ne,
                limit: BOND_MAX_EDGES,
            });
        }
        for mask in (0..1u64 << ne).rev() {
            let k = mask.count_ones() as i32;
            let w = p.powi(k) * (1.0 - p).powi(ne as i32 - k);
            if w == 0.0 {
                continue;
            }
            merger.add(g.spanning_subgraph(mask), e.kernel.scaled(w));
        }
    }
    GeneralizedFamily::new(family.space().clone(), merger.finish())
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("retention probability {p} outside [0,1]")));
    }
    Ok(())
}

/// Number of vertex pairs joined within each component.
fn same_component_pairs(g: &SmallGraph) -> u64 {
    g.components()
        .iter()
        .map(|c| {
            let s = c.len() as u64;
            s * (s.saturating_sub(1)) / 2
        })
        .sum()
}

/// Integer coefficients (ascending powers of `p`) of `theta_F(p)`.
pub fn theta_polynomial(f: &SmallGraph) -> Result<Vec<i64>> {
    let ne = f.edge_count();
    if ne > THETA_MAX_EDGES {
        return Err(Error::TooManyEdges {
            edges: ne,
            limit: THETA_MAX_EDGES,
        });
    }
    // pairs_by_k[k] = sum of pair counts over subsets with k edges
    let mut pairs_by_k = vec![0i64; ne + 1];
    for mask in 0..1u64 << ne {
        pairs_by_k[mask.count_ones() as usize] += same_component_pairs(&f.spanning_subgraph(mask)) as i64;
    }
    let mut coeffs = vec![0i64; ne + 1];
    for (k, &pk) in pairs_by_k.iter().enumerate() {
        if pk == 0 {
            continue;
        }
        // p^k (1-p)^{ne-k}
        let mut binom = 1i64;
        for i in 0..=ne - k {
            let sign = if i % 2 == 0 { 1 } else { -1 };
            coeffs[k + i] += sign * binom * pk;
            binom = binom * (ne - k - i) as i64 / (i as i64 + 1);
        }
    }
    Ok(coeffs)
}

/// Expected number of unordered vertex pairs in a common component after
/// keeping each edge of `F` with probability `p`.
pub fn theta_f(f: &SmallGraph, p: f64) -> Result<f64> {
    check_p(p)?;
    let ne = f.edge_count();
    if ne > THETA_MAX_EDGES {
        return Err(Error::TooManyEdges {
            edges: ne,
            limit: THETA_MAX_EDGES,
        });
    }
    let mut s = 0.0;
    for mask in 0..1u64 << ne {
        let k = mask.count_ones() as i32;
        let w = p.powi(k) * (1.0 - p).powi(ne as i32 - k);
        if w > 0.0 {
            s += w * same_component_pairs(&f.spanning_subgraph(mask)) as f64;
        }
    }
    Ok(s)
}

/// Mean size of the component of a uniform vertex of `F` after edge percolation.
pub fn susceptibility_chi(f: &SmallGraph, p: f64) -> Result<f64> {
    Ok(1.0 + 2.0 * theta_f(f, p)? / f.n() as f64)
}

/// Constant value of each atom's kernel, if the family is constant.
pub fn atom_constants(family: &KernelFamily) -> Result<Vec<(SmallGraph, f64)>> {
    let single = family.space().num_types() == Some(1);
    family
        .entries()
        .iter()
        .map(|e| {
            let c = match e.kernel.simplified() {
                KernelFunction::Constant(c) => c,
                k if single => k.eval(&vec![0.0; e.shape.r()]),
                _ => return Err(Error::Unsupported("threshold computation needs constant kernels".into())),
            };
            Ok((e.shape.graph().clone(), c))
        })
        .collect()
}

/// `xi''(p) = sum_F c_F theta_F(p)` as exact rational coefficients.
pub fn xi_polynomial(family: &KernelFamily) -> Result<Vec<BigRational>> {
    let mut out: Vec<BigRational> = Vec::new();
    for (g, c) in atom_constants(family)? {
        let cr = BigRational::from_float(c).ok_or_else(|| Error::InvalidParameter(format!("constant {c}")))?;
        let poly = theta_polynomial(&g)?;
        if out.len() < poly.len() {
            out.resize(poly.len(), BigRational::zero());
        }
        for (o, a) in out.iter_mut().zip(&poly) {
            *o += &cr * BigRational::from_integer(BigInt::from(*a));
        }
    }
    Ok(out)
}

pub fn eval_rational_poly(coeffs: &[BigRational], p: &BigRational) -> BigRational {
    coeffs.iter().rev().fold(BigRational::zero(), |acc, c| acc * p + c)
}

/// Connected atoms with exact constants after bond percolation of a constant
/// family at rational `p`.
pub fn percolated_constants_exact(family: &KernelFamily, p: &BigRational) -> Result<Vec<(SmallGraph, BigRational)>> {
    let q = BigRational::one() - p;
    let mut acc: BTreeMap<SmallGraph, BigRational> = BTreeMap::new();
    for (g, c) in atom_constants(family)? {
        let cr = BigRational::from_float(c).ok_or_else(|| Error::InvalidParameter(format!("constant {c}")))?;
        let ne = g.edge_count();
        if ne > BOND_MAX_EDGES {
            return Err(Error::TooManyEdges {
                edges: ne,
                limit: BOND_MAX_EDGES,
            });
        }
        for mask in 0..1u64 << ne {
            let k = mask.count_ones() as usize;
            let mut w = cr.clone();
            for _ in 0..k {
                w *= p;
            }
            for _ in k..ne {
                w *= &q;
            }
            if w.is_zero() {
                continue;
            }
            let sub = g.spanning_subgraph(mask);
            for comp in sub.components() {
                let (canon, _) = sub.induced(&comp).canonical();
                *acc.entry(canon).or_insert_with(BigRational::zero) += &w;
            }
        }
    }
    Ok(acc.into_iter().collect())
}

/// Edge density after replacing every atom by a clique on its vertices.
pub fn clique_xi_exact(atoms: &[(SmallGraph, BigRational)]) -> BigRational {
    atoms
        .iter()
        .map(|(g, c)| {
            let s = g.n() as i64;
            c * BigRational::from_integer(BigInt::from(s * (s - 1) / 2))
        })
        .fold(BigRational::zero(), |a, b| a + b)
}

/// Retention probability at which `xi''(p) = 1/2`; a giant component exists
/// for `p` strictly above it.
pub fn percolation_threshold_constant(family: &KernelFamily, tol: f64) -> Result<f64> {
    let consts = atom_constants(family)?;
    let xi = |p: f64| -> Result<f64> {
        let mut s = 0.0;
        for (g, c) in &consts {
            s += c * theta_f(g, p)?;
        }
        Ok(s)
    };
    if xi(1.0)? <= 0.5 {
        return Err(Error::NoThreshold);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if xi(mid)? > 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Site percolation on a finite type space: type `k` (one past the original
/// types) marks deleted vertices, with mass `1 - p`. The result describes the
/// graph induced on surviving vertices, deleted vertices staying isolated.
pub fn site_transform(family: &KernelFamily, p: f64) -> Result<KernelFamily> {
    check_p(p)?;
    let weights = match family.space() {
        TypeSpace::Finite { weights } => weights.clone(),
        TypeSpace::UnitInterval { .. } => {
            return Err(Error::Unsupported("site transform needs a finite type space".into()))
        }
    };
    if p == 1.0 {
        return Ok(family.clone());
    }
    if p == 0.0 {
        return Ok(KernelFamily::empty(TypeSpace::single_type()));
    }
    let k = weights.len();
    let mut ext: Vec<f64> = weights.iter().map(|w| w * p).collect();
    ext.push(1.0 - p);
    let ext_space = TypeSpace::finite(ext.clone()).or_else(|_| {
        let s: f64 = ext.iter().sum();
        TypeSpace::finite(ext.iter().map(|w| w / s).collect())
    })?;
    let mut entries = Vec::new();
    for e in family.entries() {
        let r = e.shape.r();
        if r > SITE_MAX_VERTICES {
            return Err(Error::InvalidParameter(format!(
                "site transform handles atoms with at most {SITE_MAX_VERTICES} vertices"
            )));
        }
        for mask in 1u64..1 << r {
            let keep: Vec<usize> = (0..r).filter(|v| mask & (1 << v) != 0).collect();
            let s = keep.len();
            let marg = e.kernel.marginal(r, &keep, family.space())?;
            let table = marg.to_table(k, s)?;
            let scale = (1.0 - p).powi((r - s) as i32);
            let mut values = vec![0.0; (k + 1).pow(s as u32)];
            for (idx, v) in table.iter().enumerate() {
                // re-index from base k to base k + 1
                let mut rem = idx;
                let mut digits = vec![0; s];
                for d in digits.iter_mut().rev() {
                    *d = rem % k;
                    rem /= k;
                }
                let new_idx = digits.iter().fold(0, |a, &d| a * (k + 1) + d);
                values[new_idx] = v * scale;
            }
            let kern = KernelFunction::BlockTable { types: k + 1, values }.simplified();
            entries.push((e.shape.graph().induced(&keep), kern));
        }
    }
    connectify(&GeneralizedFamily::new(ext_space, entries)?)
}

/// Serializable view of one connected atom.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomReport {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub kernel: KernelFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PercolationReport {
    pub p: f64,
    pub input: Vec<AtomReport>,
    pub transformed: Vec<AtomReport>,
    /// Edge density of the clique-replaced transformed family.
    pub xi_e_pp: f64,
    /// `||T||` of the transformed hyperkernel when the family is constant (`2 xi''`).
    pub norm_t: Option<f64>,
    /// Coefficients of `xi''(p)` as `(numerator, denominator)` strings.
    pub xi_polynomial: Option<Vec<(String, String)>>,
    pub p_c: Option<f64>,
    pub supercritical: Option<bool>,
}

fn atom_reports(f: &KernelFamily) -> Vec<AtomReport> {
    f.entries()
        .iter()
        .map(|e| AtomReport {
            vertices: e.shape.r(),
            edges: e.shape.edges().to_vec(),
            kernel: e.kernel.clone(),
        })
        .collect()
}

pub fn percolation_report(family: &KernelFamily, p: f64, with_threshold: bool) -> Result<PercolationReport> {
    let transformed = connectify(&bond_transform(family, p)?)?;
    let hk = to_hyperkernel(&transformed)?;
    let xi_pp = edge_density(hk.family())?;
    let constant = atom_constants(family).is_ok();
    let poly = if constant {
        Some(
            xi_polynomial(family)?
                .iter()
                .map(|c| (c.numer().to_string(), c.denom().to_string()))
                .collect(),
        )
    } else {
        None
    };
    let p_c = if with_threshold && constant {
        match percolation_threshold_constant(family, 1e-10) {
            Ok(pc) => Some(pc),
            Err(Error::NoThreshold) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(PercolationReport {
        p,
        input: atom_reports(family),
        transformed: atom_reports(&transformed),
        xi_e_pp: xi_pp,
        norm_t: constant.then_some(2.0 * xi_pp),
        xi_polynomial: poly,
        p_c,
        supercritical: constant.then_some(2.0 * xi_pp > 1.0),
    })
}

/// Float value of a rational, for reporting.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::integrability_report;

    fn k3(c: f64) -> KernelFamily {
        KernelFamily::constants(vec![(AtomShape::clique(3), c)]).unwrap()
    }

    #[test]
    fn theta_small_cases() {
        let p = 0.37;
        assert!((theta_f(&SmallGraph::complete(2), p).unwrap() - p).abs() < 1e-15);
        let want = 3.0 * (p + (1.0 - p) * p * p);
        assert!((theta_f(&SmallGraph::complete(3), p).unwrap() - want).abs() < 1e-14);
        assert_eq!(theta_f(&SmallGraph::path(3), 1.0).unwrap(), 6.0);
        assert!((susceptibility_chi(&SmallGraph::complete(3), 1.0).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(theta_polynomial(&SmallGraph::complete(3)).unwrap(), vec![0, 3, 3, -3]);
    }

    #[test]
    fn connectify_disjoint_union() {
        let g = SmallGraph::new(5, &[(0, 1), (1, 2), (0, 2), (3, 4)]).unwrap();
        let gf = GeneralizedFamily::new(TypeSpace::single_type(), vec![(g, KernelFunction::Constant(0.3))]).unwrap();
        let f = connectify(&gf).unwrap();
        assert_eq!(f.entries().len(), 2);
        for e in f.entries() {
            assert_eq!(e.kernel, KernelFunction::Constant(0.3));
        }
        let iota = integrability_report(&f).unwrap().iota;
        assert!((iota - gf.iota().unwrap()).abs() < 1e-14);
    }

    #[test]
    fn bond_transform_triangle_weights() {
        let p = 0.3;
        let gf = bond_transform(&k3(1.0), p).unwrap();
        let by_edges: BTreeMap<usize, f64> = gf
            .entries()
            .iter()
            .map(|(g, k)| (g.edge_count(), k.eval(&[0.0, 0.0, 0.0])))
            .collect();
        let q = 1.0 - p;
        let want = [q * q * q, 3.0 * p * q * q, 3.0 * p * p * q, p * p * p];
        for (e, w) in want.iter().enumerate() {
            assert!((by_edges[&e] - w).abs() < 1e-14, "{e}");
        }
        let same = bond_transform(&k3(0.7), 1.0).unwrap();
        assert_eq!(same.entries().len(), 1);
        assert_eq!(same.entries()[0].0, SmallGraph::complete(3));
    }

    #[test]
    fn thresholds() {
        let pc = percolation_threshold_constant(&k3(1.0 / 3.0), 1e-12).unwrap();
        assert!((pc + pc * pc - pc * pc * pc - 0.5).abs() < 1e-10);
        assert!((pc - 0.4030).abs() < 1e-3);
        let a = 0.8;
        let edges = KernelFamily::constants(vec![(AtomShape::clique(2), a)]).unwrap();
        assert!((percolation_threshold_constant(&edges, 1e-12).unwrap() - 1.0 / (2.0 * a)).abs() < 1e-10);
        assert!(matches!(percolation_threshold_constant(&k3(1.0 / 6.0), 1e-10), Err(Error::NoThreshold)));
    }

    #[test]
    fn exact_xi_identity() {
        let fam = KernelFamily::constants(vec![
            (AtomShape::clique(3), 0.25),
            (AtomShape::from_edges(3, &[(0, 1), (1, 2)]).unwrap(), 0.5),
        ])
        .unwrap();
        let poly = xi_polynomial(&fam).unwrap();
        let p = BigRational::new(BigInt::from(2), BigInt::from(7));
        let atoms = percolated_constants_exact(&fam, &p).unwrap();
        assert_eq!(clique_xi_exact(&atoms), eval_rational_poly(&poly, &p));
    }

    #[test]
    fn site_transform_iota() {
        let p = 0.6;
        let f = site_transform(&k3(0.5), p).unwrap();
        let iota = integrability_report(&f).unwrap().iota;
        assert!((iota - p * 1.5).abs() < 1e-12, "{iota}");
        assert_eq!(site_transform(&k3(0.5), 1.0).unwrap(), k3(0.5));
    }
}
