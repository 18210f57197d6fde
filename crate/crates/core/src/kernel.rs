//! Kernel functions, kernel families and hyperkernels, plus the derived
//! pairwise kernels (edge kernel, rescaled edge kernel) and integrability
//! checks.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{factorial, AtomShape, SmallGraph};
use crate::quad::{check_cost, tensor_sum};
use crate::sep::{circle_distance, circle_moment, power_moment, Bind, SepSum};
use crate::space::{Grid, TypeSpace};

/// Arity cap for families with unbounded atom sizes.
pub const R_MAX: usize = 64;
/// Series tail test: the last arity term must stay below this share of the sum.
pub const SERIES_TAIL_RATIO: f64 = 1e-3;
/// Absolute threshold below which a kernel value counts as zero.
pub const ZERO_TOL: f64 = 1e-12;

/// A nonnegative function of `r` type arguments. The arity is carried by the
/// atom the kernel is attached to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFunction {
    /// `c`.
    #[serde(rename = "const")]
    Constant(f64),
    /// `coef * prod_i x_i^{-1/alpha}` on `(0,1]`.
    #[serde(rename = "rank1")]
    RankOne { coef: f64, alpha: f64 },
    /// Row-major table over `types^r` finite-type tuples.
    #[serde(rename = "table")]
    BlockTable { types: usize, values: Vec<f64> },
    /// `coef * d(x_i, x_j)^exponent`, `d` the circle distance on `[0,1)`.
    PairDistance {
        i: usize,
        j: usize,
        coef: f64,
        exponent: f64,
    },
    /// `min(inner, cap)`.
    #[serde(rename = "min")]
    Truncated {
        inner: Box<KernelFunction>,
        cap: f64,
    },
    Sum(Vec<KernelFunction>),
}

fn table_index(t: &[usize], k: usize) -> usize {
    t.iter().fold(0, |acc, &v| acc * k + v)
}

fn table_tuple(mut idx: usize, k: usize, r: usize) -> Vec<usize> {
    let mut t = vec![0; r];
    for p in (0..r).rev() {
        t[p] = idx % k;
        idx /= k;
    }
    t
}

impl KernelFunction {
    pub fn constant(c: f64) -> Self {
        KernelFunction::Constant(c)
    }

    pub fn rank_one(coef: f64, alpha: f64) -> Self {
        KernelFunction::RankOne { coef, alpha }
    }

    pub fn block_table(types: usize, values: Vec<f64>) -> Self {
        KernelFunction::BlockTable { types, values }
    }

    /// Checks the kernel against an arity and a type space.
    pub fn validate(&self, r: usize, space: &TypeSpace) -> Result<()> {
        match self {
            KernelFunction::Constant(c) => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(Error::InvalidParameter(format!("constant kernel {c}")));
                }
            }
            KernelFunction::RankOne { coef, alpha } => {
                if space.is_finite() {
                    return Err(Error::InvalidParameter(
                        "rank-one power kernels need the unit interval".into(),
                    ));
                }
                if !(coef.is_finite() && *coef >= 0.0) {
                    return Err(Error::InvalidParameter(format!("coefficient {coef}")));
                }
                if !(*alpha > 0.0) {
                    return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
                }
            }
            KernelFunction::BlockTable { types, values } => {
                let Some(k) = space.num_types() else {
                    return Err(Error::InvalidParameter(
                        "block tables need a finite type space".into(),
                    ));
                };
                if *types != k {
                    return Err(Error::InvalidParameter(format!(
                        "table over {types} types, space has {k}"
                    )));
                }
                let want = k.checked_pow(r as u32).unwrap_or(usize::MAX);
                if values.len() != want {
                    return Err(Error::ArityMismatch {
                        kernel: (values.len() as f64).ln().div_euclid((k as f64).ln().max(1e-300))
                            as usize,
                        atom: r,
                    });
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidParameter("negative or non-finite table entry".into()));
                }
            }
            KernelFunction::PairDistance {
                i,
                j,
                coef,
                exponent,
            } => {
                if space.is_finite() {
                    return Err(Error::InvalidParameter(
                        "distance kernels need the unit interval".into(),
                    ));
                }
                if *i >= r || *j >= r || i == j {
                    return Err(Error::InvalidParameter(format!(
                        "distance positions ({i},{j}) invalid for arity {r}"
                    )));
                }
                if !(coef.is_finite() && *coef >= 0.0 && exponent.is_finite()) {
                    return Err(Error::InvalidParameter("distance term parameters".into()));
                }
            }
            KernelFunction::Truncated { inner, cap } => {
                if !(*cap > 0.0) {
                    return Err(Error::InvalidParameter(format!("truncation level {cap}")));
                }
                inner.validate(r, space)?;
            }
            KernelFunction::Sum(parts) => {
                for p in parts {
                    p.validate(r, space)?;
                }
            }
        }
        Ok(())
    }

    /// Value at a tuple of types (finite types as their index).
    pub fn eval(&self, xs: &[f64]) -> f64 {
        match self {
            KernelFunction::Constant(c) => *c,
            KernelFunction::RankOne { coef, alpha } => {
                let s = -1.0 / alpha;
                xs.iter().fold(*coef, |acc, x| acc * x.powf(s))
            }
            KernelFunction::BlockTable { types, values } => {
                let idx = xs.iter().fold(0usize, |acc, &x| acc * types + x as usize);
                values[idx]
            }
            KernelFunction::PairDistance {
                i,
                j,
                coef,
                exponent,
            } => coef * circle_distance(xs[*i], xs[*j]).powf(*exponent),
            KernelFunction::Truncated { inner, cap } => inner.eval(xs).min(*cap),
            KernelFunction::Sum(parts) => parts.iter().map(|p| p.eval(xs)).sum(),
        }
    }

    /// Leaves of the sum tree.
    pub fn terms(&self) -> Vec<&KernelFunction> {
        match self {
            KernelFunction::Sum(parts) => parts.iter().flat_map(|p| p.terms()).collect(),
            other => vec![other],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            KernelFunction::Constant(c) => *c == 0.0,
            KernelFunction::RankOne { coef, .. } => *coef == 0.0,
            KernelFunction::BlockTable { values, .. } => values.iter().all(|v| *v == 0.0),
            KernelFunction::PairDistance { coef, .. } => *coef == 0.0,
            KernelFunction::Truncated { inner, .. } => inner.is_zero(),
            KernelFunction::Sum(parts) => parts.iter().all(|p| p.is_zero()),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            KernelFunction::Constant(c) => KernelFunction::Constant(c * s),
            KernelFunction::RankOne { coef, alpha } => KernelFunction::RankOne {
                coef: coef * s,
                alpha: *alpha,
            },
            KernelFunction::BlockTable { types, values } => KernelFunction::BlockTable {
                types: *types,
                values: values.iter().map(|v| v * s).collect(),
            },
            KernelFunction::PairDistance {
                i,
                j,
                coef,
                exponent,
            } => KernelFunction::PairDistance {
                i: *i,
                j: *j,
                coef: coef * s,
                exponent: *exponent,
            },
            KernelFunction::Truncated { inner, cap } => KernelFunction::Truncated {
                inner: Box::new(inner.scaled(s)),
                cap: cap * s,
            },
            KernelFunction::Sum(parts) => {
                KernelFunction::Sum(parts.iter().map(|p| p.scaled(s)).collect())
            }
        }
    }

    /// The kernel `y -> self(y[p[0]], ..., y[p[r-1]])`.
    pub fn permuted(&self, p: &[usize]) -> Self {
        let r = p.len();
        match self {
            KernelFunction::BlockTable { types, values } => {
                let k = *types;
                let mut out = vec![0.0; values.len()];
                for (idx, o) in out.iter_mut().enumerate() {
                    let y = table_tuple(idx, k, r);
                    let x: Vec<usize> = p.iter().map(|&q| y[q]).collect();
                    *o = values[table_index(&x, k)];
                }
                KernelFunction::BlockTable {
                    types: k,
                    values: out,
                }
            }
            KernelFunction::PairDistance {
                i,
                j,
                coef,
                exponent,
            } => KernelFunction::PairDistance {
                i: p[*i],
                j: p[*j],
                coef: *coef,
                exponent: *exponent,
            },
            KernelFunction::Truncated { inner, cap } => KernelFunction::Truncated {
                inner: Box::new(inner.permuted(p)),
                cap: *cap,
            },
            KernelFunction::Sum(parts) => {
                KernelFunction::Sum(parts.iter().map(|q| q.permuted(p)).collect())
            }
            other => other.clone(),
        }
    }

    /// Flattens sums, merges like terms and drops zeros. The result has a
    /// canonical term order, so equal kernels built differently compare equal.
    pub fn simplified(&self) -> Self {
        let mut constant = 0.0;
        let mut rank1: Vec<(f64, f64)> = Vec::new();
        let mut table: Option<(usize, Vec<f64>)> = None;
        let mut pairs: Vec<((usize, usize), f64, f64)> = Vec::new();
        let mut others: Vec<KernelFunction> = Vec::new();
        for t in self.terms() {
            match t {
                KernelFunction::Constant(c) => constant += c,
                KernelFunction::RankOne { coef, alpha } => {
                    match rank1.iter_mut().find(|(a, _)| a.to_bits() == alpha.to_bits()) {
                        Some(e) => e.1 += coef,
                        None => rank1.push((*alpha, *coef)),
                    }
                }
                KernelFunction::BlockTable { types, values } => match &mut table {
                    Some((_, acc)) => {
                        for (a, v) in acc.iter_mut().zip(values) {
                            *a += v;
                        }
                    }
                    None => table = Some((*types, values.clone())),
                },
                KernelFunction::PairDistance {
                    i,
                    j,
                    coef,
                    exponent,
                } => {
                    let key = ((*i).min(*j), (*i).max(*j));
                    match pairs
                        .iter_mut()
                        .find(|(k, e, _)| *k == key && e.to_bits() == exponent.to_bits())
                    {
                        Some(e) => e.2 += coef,
                        None => pairs.push((key, *exponent, *coef)),
                    }
                }
                KernelFunction::Truncated { inner, cap } => {
                    let inner = inner.simplified();
                    if !inner.is_zero() {
                        others.push(KernelFunction::Truncated {
                            inner: Box::new(inner),
                            cap: *cap,
                        });
                    }
                }
                KernelFunction::Sum(_) => unreachable!("terms() flattens sums"),
            }
        }
        let mut out = Vec::new();
        if let Some((k, mut values)) = table {
            if constant != 0.0 {
                for v in &mut values {
                    *v += constant;
                }
            }
            if values.iter().any(|v| *v != 0.0) {
                out.push(KernelFunction::BlockTable { types: k, values });
            }
        } else if constant != 0.0 {
            out.push(KernelFunction::Constant(constant));
        }
        rank1.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (alpha, coef) in rank1 {
            if coef != 0.0 {
                out.push(KernelFunction::RankOne { coef, alpha });
            }
        }
        pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for ((i, j), exponent, coef) in pairs {
            if coef != 0.0 {
                out.push(KernelFunction::PairDistance {
                    i,
                    j,
                    coef,
                    exponent,
                });
            }
        }
        out.extend(others);
        match out.len() {
            0 => KernelFunction::Constant(0.0),
            1 => out.pop().unwrap(),
            _ => KernelFunction::Sum(out),
        }
    }

    /// Upper bound on the kernel (may be `+inf`).
    pub fn sup(&self) -> f64 {
        match self {
            KernelFunction::Constant(c) => *c,
            KernelFunction::RankOne { coef, .. } => {
                if *coef == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            KernelFunction::BlockTable { values, .. } => values.iter().cloned().fold(0.0, f64::max),
            KernelFunction::PairDistance { coef, exponent, .. } => {
                if *coef == 0.0 {
                    0.0
                } else if *exponent < 0.0 {
                    f64::INFINITY
                } else {
                    coef * 0.5f64.powf(*exponent)
                }
            }
            KernelFunction::Truncated { inner, cap } => inner.sup().min(*cap),
            KernelFunction::Sum(parts) => parts.iter().map(|p| p.sup()).sum(),
        }
    }

    /// `min(self, cap)`.
    pub fn truncated(&self, cap: f64) -> Self {
        match self {
            KernelFunction::Constant(c) => KernelFunction::Constant(c.min(cap)),
            KernelFunction::BlockTable { types, values } => KernelFunction::BlockTable {
                types: *types,
                values: values.iter().map(|v| v.min(cap)).collect(),
            },
            KernelFunction::Truncated { inner, cap: c } => KernelFunction::Truncated {
                inner: inner.clone(),
                cap: c.min(cap),
            },
            other => {
                if other.sup() <= cap {
                    other.clone()
                } else {
                    KernelFunction::Truncated {
                        inner: Box::new(other.clone()),
                        cap,
                    }
                }
            }
        }
    }

    /// Full table of values over `k^r` finite-type tuples.
    pub fn to_table(&self, k: usize, r: usize) -> Result<Vec<f64>> {
        let len = k
            .checked_pow(r as u32)
            .filter(|l| *l <= 1 << 26)
            .ok_or_else(|| Error::Unsupported(format!("table over {k}^{r} tuples")))?;
        if let KernelFunction::BlockTable { values, .. } = self {
            return Ok(values.clone());
        }
        let mut out = Vec::with_capacity(len);
        for idx in 0..len {
            let t: Vec<f64> = table_tuple(idx, k, r).into_iter().map(|v| v as f64).collect();
            out.push(self.eval(&t));
        }
        Ok(out)
    }

    /// Integrates out every position not in `keep`; the result takes the kept
    /// positions in the order given.
    pub fn marginal(&self, r: usize, keep: &[usize], space: &TypeSpace) -> Result<KernelFunction> {
        let dropped = r - keep.len();
        if dropped == 0 {
            let mut p = vec![0; r];
            for (new, &old) in keep.iter().enumerate() {
                p[old] = new;
            }
            // y_new -> self(x) with x_old = y_new[pos of old in keep]
            let inv: Vec<usize> = (0..r).map(|old| p[old]).collect();
            return Ok(self.permuted(&inv));
        }
        if let KernelFunction::Constant(c) = self {
            return Ok(KernelFunction::Constant(*c));
        }
        if let TypeSpace::Finite { weights } = space {
            let k = weights.len();
            let table = self.to_table(k, r)?;
            let rk = keep.len();
            let mut out = vec![0.0; k.pow(rk as u32)];
            for (idx, v) in table.iter().enumerate() {
                if *v == 0.0 {
                    continue;
                }
                let t = table_tuple(idx, k, r);
                let mut w = *v;
                for p in 0..r {
                    if !keep.contains(&p) {
                        w *= weights[t[p]];
                    }
                }
                let kt: Vec<usize> = keep.iter().map(|&p| t[p]).collect();
                out[table_index(&kt, k)] += w;
            }
            return Ok(if rk == 0 {
                KernelFunction::Constant(out[0])
            } else {
                KernelFunction::BlockTable { types: k, values: out }
            });
        }
        let pos_of = |old: usize| keep.iter().position(|&q| q == old);
        Ok(match self {
            KernelFunction::Constant(c) => KernelFunction::Constant(*c),
            KernelFunction::RankOne { coef, alpha } => {
                let m = power_moment(1.0 / alpha);
                if !m.is_finite() {
                    return Err(Error::DivergentKernel);
                }
                if keep.is_empty() {
                    KernelFunction::Constant(coef * m.powi(dropped as i32))
                } else {
                    KernelFunction::RankOne {
                        coef: coef * m.powi(dropped as i32),
                        alpha: *alpha,
                    }
                }
            }
            KernelFunction::PairDistance {
                i,
                j,
                coef,
                exponent,
            } => match (pos_of(*i), pos_of(*j)) {
                (Some(a), Some(b)) => KernelFunction::PairDistance {
                    i: a,
                    j: b,
                    coef: *coef,
                    exponent: *exponent,
                },
                _ => {
                    let m = circle_moment(*exponent);
                    if !m.is_finite() {
                        return Err(Error::DivergentKernel);
                    }
                    KernelFunction::Constant(coef * m)
                }
            },
            KernelFunction::Sum(parts) => KernelFunction::Sum(
                parts
                    .iter()
                    .map(|p| p.marginal(r, keep, space))
                    .collect::<Result<_>>()?,
            )
            .simplified(),
            other => {
                if other.sup().is_finite() && matches!(other, KernelFunction::Truncated { inner, .. } if matches!(**inner, KernelFunction::Constant(_)))
                {
                    KernelFunction::Constant(other.sup())
                } else {
                    return Err(Error::Unsupported(
                        "integrating out coordinates of a truncated kernel on (0,1]".into(),
                    ));
                }
            }
        })
    }

    /// Whether `self` equals its permutation by `p` (exactly, after simplification).
    pub fn is_invariant_under(&self, p: &[usize]) -> bool {
        match self {
            KernelFunction::Constant(_) | KernelFunction::RankOne { .. } => true,
            _ => self.permuted(p).simplified() == self.simplified(),
        }
    }

    /// Fully symmetric (invariant under every argument permutation) by construction.
    fn is_symmetric_form(&self) -> bool {
        self.terms()
            .iter()
            .all(|t| matches!(t, KernelFunction::Constant(_) | KernelFunction::RankOne { .. }))
    }
}

/// Averages `kernel` over a permutation group (given as a list of maps).
/// Tables are averaged orbit by orbit so the result is exactly invariant.
fn group_average(kernel: &KernelFunction, group: &[Vec<usize>]) -> KernelFunction {
    let g = group.len() as f64;
    let mut parts = Vec::new();
    for t in kernel.simplified().terms() {
        match t {
            KernelFunction::Constant(_) | KernelFunction::RankOne { .. } => parts.push(t.clone()),
            KernelFunction::BlockTable { types, values } => {
                let k = *types;
                let r = group[0].len();
                let mut out = vec![f64::NAN; values.len()];
                for idx in 0..values.len() {
                    if !out[idx].is_nan() {
                        continue;
                    }
                    let t = table_tuple(idx, k, r);
                    let mut orbit: Vec<usize> = group
                        .iter()
                        .map(|p| {
                            let x: Vec<usize> = p.iter().map(|&q| t[q]).collect();
                            table_index(&x, k)
                        })
                        .collect();
                    orbit.sort_unstable();
                    orbit.dedup();
                    let mean = orbit.iter().map(|&o| values[o]).sum::<f64>() / orbit.len() as f64;
                    for o in orbit {
                        out[o] = mean;
                    }
                }
                parts.push(KernelFunction::BlockTable {
                    types: k,
                    values: out,
                });
            }
            other => {
                for p in group {
                    parts.push(other.permuted(p).scaled(1.0 / g));
                }
            }
        }
    }
    KernelFunction::Sum(parts).simplified()
}

/// Average over the full symmetric group on `r` arguments.
fn symmetric_average(kernel: &KernelFunction, r: usize) -> Result<KernelFunction> {
    let mut parts = Vec::new();
    for t in kernel.simplified().terms() {
        match t {
            KernelFunction::Constant(_) | KernelFunction::RankOne { .. } => parts.push(t.clone()),
            KernelFunction::BlockTable { types, values } => {
                let k = *types;
                let mut classes: HashMap<Vec<usize>, (f64, usize)> = HashMap::new();
                for (idx, v) in values.iter().enumerate() {
                    let mut key = table_tuple(idx, k, r);
                    key.sort_unstable();
                    let e = classes.entry(key).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
                let out = (0..values.len())
                    .map(|idx| {
                        let mut key = table_tuple(idx, k, r);
                        key.sort_unstable();
                        let (s, c) = classes[&key];
                        s / c as f64
                    })
                    .collect();
                parts.push(KernelFunction::BlockTable {
                    types: k,
                    values: out,
                });
            }
            KernelFunction::PairDistance { coef, exponent, .. } => {
                let pairs = (r * (r - 1) / 2) as f64;
                for a in 0..r {
                    for b in a + 1..r {
                        parts.push(KernelFunction::PairDistance {
                            i: a,
                            j: b,
                            coef: coef / pairs,
                            exponent: *exponent,
                        });
                    }
                }
            }
            other => {
                if let KernelFunction::Truncated { inner, .. } = other {
                    if inner.is_symmetric_form() {
                        parts.push(other.clone());
                        continue;
                    }
                }
                if r > 7 {
                    return Err(Error::Unsupported(format!(
                        "symmetrizing a truncated kernel of arity {r}"
                    )));
                }
                let perms = all_permutations(r);
                let g = perms.len() as f64;
                for p in &perms {
                    parts.push(other.permuted(p).scaled(1.0 / g));
                }
            }
        }
    }
    Ok(KernelFunction::Sum(parts).simplified())
}

pub(crate) fn all_permutations(r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..r).collect();
    fn rec(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for i in k..cur.len() {
            cur.swap(k, i);
            rec(k + 1, cur, out);
            cur.swap(k, i);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

/// One atom of a family with its kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyEntry {
    pub shape: AtomShape,
    pub kernel: KernelFunction,
}

impl FamilyEntry {
    pub fn new(shape: AtomShape, kernel: KernelFunction) -> Self {
        Self { shape, kernel }
    }
}

/// A kernel family over a type space.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelFamily {
    space: TypeSpace,
    entries: Vec<FamilyEntry>,
}

impl KernelFamily {
    pub fn new(space: TypeSpace, entries: Vec<FamilyEntry>) -> Result<Self> {
        for e in &entries {
            e.kernel.validate(e.shape.r(), &space)?;
        }
        Ok(Self { space, entries })
    }

    pub fn empty(space: TypeSpace) -> Self {
        Self {
            space,
            entries: Vec::new(),
        }
    }

    /// Single-type family with constant kernels on the given atoms.
    pub fn constants(atoms: Vec<(AtomShape, f64)>) -> Result<Self> {
        Self::new(
            TypeSpace::single_type(),
            atoms
                .into_iter()
                .map(|(s, c)| FamilyEntry::new(s, KernelFunction::Constant(c)))
                .collect(),
        )
    }

    pub fn space(&self) -> &TypeSpace {
        &self.space
    }

    pub fn entries(&self) -> &[FamilyEntry] {
        &self.entries
    }

    pub fn grid(&self) -> Grid {
        self.space.grid()
    }

    pub fn max_arity(&self) -> usize {
        self.entries.iter().map(|e| e.shape.r()).max().unwrap_or(0)
    }

    pub fn is_clique_family(&self) -> bool {
        self.entries.iter().all(|e| e.shape.is_clique())
    }

    /// Same family on another type space (kernels revalidated).
    pub fn with_space(&self, space: TypeSpace) -> Result<Self> {
        Self::new(space, self.entries.clone())
    }
}

/// A clique family with one symmetric kernel per arity.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperkernel {
    family: KernelFamily,
}

impl Hyperkernel {
    /// Single-type hyperkernel with `kappa_r = c_r`.
    pub fn constants(cs: &[(usize, f64)]) -> Result<Self> {
        let fam = KernelFamily::constants(
            cs.iter()
                .map(|&(r, c)| (AtomShape::clique(r), c))
                .collect(),
        )?;
        to_hyperkernel(&fam)
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn space(&self) -> &TypeSpace {
        self.family.space()
    }

    /// `kappa_r`, if present.
    pub fn kappa(&self, r: usize) -> Option<&KernelFunction> {
        self.family
            .entries
            .iter()
            .find(|e| e.shape.r() == r)
            .map(|e| &e.kernel)
    }

    /// Arities present, increasing.
    pub fn arities(&self) -> Vec<usize> {
        self.family.entries.iter().map(|e| e.shape.r()).collect()
    }

    pub fn into_family(self) -> KernelFamily {
        self.family
    }
}

/// Replaces each kernel by its average over the automorphisms of its atom.
pub fn symmetrize(family: &KernelFamily) -> KernelFamily {
    let entries = family
        .entries
        .iter()
        .map(|e| {
            let r = e.shape.r();
            let k = &e.kernel;
            if k.is_symmetric_form() {
                return e.clone();
            }
            let kernel = if e.shape.is_clique() {
                symmetric_average(k, r).unwrap_or_else(|_| k.clone())
            } else {
                let mut group = Vec::new();
                e.shape.graph().for_each_automorphism(|p| group.push(p.to_vec()));
                if group.iter().all(|p| k.is_invariant_under(p)) {
                    k.clone()
                } else {
                    group_average(k, &group)
                }
            };
            FamilyEntry::new(e.shape.clone(), kernel)
        })
        .collect();
    KernelFamily {
        space: family.space.clone(),
        entries,
    }
}

/// Replaces every atom by the clique on its vertex set, symmetrized over all
/// argument orders, and merges atoms of equal size.
pub fn to_hyperkernel(family: &KernelFamily) -> Result<Hyperkernel> {
    let mut by_r: BTreeMap<usize, Vec<KernelFunction>> = BTreeMap::new();
    for e in &family.entries {
        let r = e.shape.r();
        let k = if e.kernel.is_symmetric_form() {
            e.kernel.clone()
        } else if e.shape.is_clique() && is_fully_symmetric(&e.kernel, r) {
            e.kernel.clone()
        } else {
            symmetric_average(&e.kernel, r)?
        };
        by_r.entry(r).or_default().push(k);
    }
    let entries = by_r
        .into_iter()
        .map(|(r, ks)| FamilyEntry::new(AtomShape::clique(r), KernelFunction::Sum(ks).simplified()))
        .collect();
    Ok(Hyperkernel {
        family: KernelFamily {
            space: family.space.clone(),
            entries,
        },
    })
}

fn is_fully_symmetric(k: &KernelFunction, r: usize) -> bool {
    if r <= 1 {
        return true;
    }
    // transposition and r-cycle generate S_r
    let mut swap: Vec<usize> = (0..r).collect();
    swap.swap(0, 1);
    let cycle: Vec<usize> = (0..r).map(|i| (i + 1) % r).collect();
    k.is_invariant_under(&swap) && k.is_invariant_under(&cycle)
}

/// Family with `min(kappa_F, M)` for atoms of at most `M` vertices; larger atoms dropped.
pub fn truncate(family: &KernelFamily, m: f64) -> Result<KernelFamily> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("truncation level {m}")));
    }
    let entries = family
        .entries
        .iter()
        .filter(|e| (e.shape.r() as f64) <= m)
        .map(|e| FamilyEntry::new(e.shape.clone(), e.kernel.truncated(m)))
        .collect();
    Ok(KernelFamily {
        space: family.space.clone(),
        entries,
    })
}

/// `int kappa_F` over `S^r`.
pub fn kernel_integral(kernel: &KernelFunction, r: usize, grid: &Grid) -> Result<f64> {
    let mut total = 0.0;
    let binds = vec![Bind::Free(None); r];
    for t in kernel.terms() {
        total += match SepSum::from_kernel(t, &binds, grid) {
            Ok(s) => s.total(),
            Err(_) => {
                check_cost(r, r, grid.len(), 1)?;
                let w = vec![None; r];
                tensor_sum(t, r, &[], &w, grid, |v, _| v)
            }
        };
    }
    Ok(total)
}

/// Sum of per-arity contributions with the tail test for families reaching `R_MAX`.
pub(crate) fn series_total(per_arity: &BTreeMap<usize, f64>) -> (f64, bool) {
    let total: f64 = per_arity.values().sum();
    if !total.is_finite() {
        return (f64::INFINITY, true);
    }
    if let Some((&r, &last)) = per_arity.iter().next_back() {
        if r >= R_MAX && last > SERIES_TAIL_RATIO * total {
            return (f64::INFINITY, true);
        }
    }
    (total, false)
}

/// Atom and edge integrals of a family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    /// `sum_F |F| int kappa_F` (`+inf` if not integrable).
    pub iota: f64,
    /// `sum_F e(F) int kappa_F` (`+inf` if not edge-integrable).
    pub xi_e: f64,
    pub integrable: bool,
    pub edge_integrable: bool,
}

pub fn integrability_report(family: &KernelFamily) -> Result<IntegrabilityReport> {
    let grid = family.grid();
    let mut iota: BTreeMap<usize, f64> = BTreeMap::new();
    let mut xi: BTreeMap<usize, f64> = BTreeMap::new();
    for e in &family.entries {
        let r = e.shape.r();
        let i = kernel_integral(&e.kernel, r, &grid)?;
        *iota.entry(r).or_default() += r as f64 * i;
        if e.shape.edge_count() > 0 {
            *xi.entry(r).or_default() += e.shape.edge_count() as f64 * i;
        } else {
            xi.entry(r).or_default();
        }
    }
    let (iota, div_i) = series_total(&iota);
    let (xi_e, div_e) = series_total(&xi);
    Ok(IntegrabilityReport {
        iota,
        xi_e,
        integrable: !div_i,
        edge_integrable: !div_e,
    })
}

/// Asymptotic edge density `sum_F e(F) int kappa_F` (`+inf` if not edge-integrable).
pub fn edge_density(family: &KernelFamily) -> Result<f64> {
    Ok(integrability_report(family)?.xi_e)
}

/// A symmetric function on `S x S` evaluated on the grid: separable part,
/// circle-distance part and a dense remainder.
#[derive(Clone, Debug)]
pub struct EdgeKernel {
    grid: Grid,
    sep: SepSum,
    pair_terms: Vec<(f64, f64)>,
    dense: Option<Vec<f64>>,
    divergent: bool,
    xi_e: f64,
    lambda: Vec<f64>,
}

/// Contribution of kernel `k` (arity `r`) with `x` at position `i` and `y` at
/// position `j`, scaled by `s`.
struct PairContribution<'a> {
    kernel: &'a KernelFunction,
    r: usize,
    i: usize,
    j: usize,
    scale: f64,
}

impl EdgeKernel {
    fn build(
        space: &TypeSpace,
        contributions: &[PairContribution<'_>],
        xi_e: f64,
        series_divergent: bool,
    ) -> Result<Self> {
        let grid = space.grid();
        let m = grid.len();
        let mut sep = SepSum::zero();
        let mut pair_terms: Vec<(f64, f64)> = Vec::new();
        let mut dense: Option<Vec<f64>> = None;
        for c in contributions {
            let mut binds = vec![Bind::Free(None); c.r];
            binds[c.i] = Bind::Slot(0);
            binds[c.j] = Bind::Slot(1);
            for t in c.kernel.terms() {
                match SepSum::from_kernel(t, &binds, &grid) {
                    Ok(s) => sep = sep.add(s.scale(c.scale)),
                    Err(_) => {
                        if let KernelFunction::PairDistance {
                            i,
                            j,
                            coef,
                            exponent,
                        } = t
                        {
                            if (*i == c.i && *j == c.j) || (*i == c.j && *j == c.i) {
                                // other coordinates integrate to 1
                                pair_terms.push((coef * c.scale, *exponent));
                                continue;
                            }
                        }
                        check_cost(c.r, c.r - 2, m, m * m)?;
                        let d = dense.get_or_insert_with(|| vec![0.0; m * m]);
                        let w = vec![None; c.r];
                        for a in 0..m {
                            for b in 0..m {
                                let v = tensor_sum(t, c.r, &[(c.i, a), (c.j, b)], &w, &grid, |v, _| v);
                                d[a * m + b] += c.scale * v;
                            }
                        }
                    }
                }
            }
        }
        let mut divergent = series_divergent || sep.has_infinite() || sep.max_sing(1) >= 1.0;
        for &(_, p) in &pair_terms {
            if p <= -1.0 {
                divergent = true;
            }
        }
        let mut ek = EdgeKernel {
            grid,
            sep,
            pair_terms,
            dense,
            divergent,
            xi_e,
            lambda: Vec::new(),
        };
        if ek.divergent {
            ek.lambda = vec![f64::INFINITY; m];
        } else {
            let ones = vec![1.0; m];
            ek.lambda = ek.apply_raw(&ones);
        }
        Ok(ek)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_divergent(&self) -> bool {
        self.divergent
    }

    /// `sum_F e(F) int kappa_F` from the atom integrals.
    pub fn xi_e(&self) -> f64 {
        self.xi_e
    }

    /// Row integrals `lambda(x) = int kappa_e(x,y) dmu(y)` on the grid.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `1/2 int kappa_e` by quadrature.
    pub fn half_integral(&self) -> f64 {
        0.5 * self.grid.integrate(&self.lambda)
    }

    /// Value at grid nodes `(a, b)`.
    pub fn at(&self, a: usize, b: usize) -> f64 {
        let mut v = self.sep.eval_at(&[(0, a), (1, b)]);
        if !self.pair_terms.is_empty() {
            let d = circle_distance(self.grid.nodes[a], self.grid.nodes[b]);
            for &(c, p) in &self.pair_terms {
                v += c * d.powf(p);
            }
        }
        if let Some(dense) = &self.dense {
            v += dense[a * self.grid.len() + b];
        }
        v
    }

    /// `(T f)(x) = int kappa_e(x,y) f(y) dmu(y)` on the grid.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if self.divergent {
            return Err(Error::DivergentKernel);
        }
        Ok(self.apply_raw(f))
    }

    fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        let m = self.grid.len();
        let mut out = vec![0.0; m];
        for t in &self.sep.terms {
            let fy = t.factors.iter().find(|(s, _)| *s == 1).map(|(_, f)| &f.vals);
            let inner = match fy {
                Some(v) => self.grid.dot(v, f),
                None => self.grid.integrate(f),
            };
            let c = t.coef * inner;
            if c == 0.0 {
                continue;
            }
            match t.factors.iter().find(|(s, _)| *s == 0) {
                Some((_, fx)) => {
                    for (o, v) in out.iter_mut().zip(fx.vals.iter()) {
                        *o += c * v;
                    }
                }
                None => {
                    for o in out.iter_mut() {
                        *o += c;
                    }
                }
            }
        }
        if !self.pair_terms.is_empty() {
            for (a, o) in out.iter_mut().enumerate() {
                let xa = self.grid.nodes[a];
                let mut s = 0.0;
                for b in 0..m {
                    let d = circle_distance(xa, self.grid.nodes[b]);
                    let mut k = 0.0;
                    for &(c, p) in &self.pair_terms {
                        k += c * d.powf(p);
                    }
                    if k.is_finite() {
                        s += self.grid.weights[b] * k * f[b];
                    }
                }
                *o += s;
            }
        }
        if let Some(dense) = &self.dense {
            for (a, o) in out.iter_mut().enumerate() {
                let row = &dense[a * m..(a + 1) * m];
                *o += row
                    .iter()
                    .zip(self.grid.weights.iter().zip(f))
                    .map(|(k, (w, v))| k * w * v)
                    .sum::<f64>();
            }
        }
        out
    }

    /// Whether the operator is unbounded on `L^2(mu)`: some factor `x^{-s}`
    /// with `2s >= 1`.
    pub fn l2_unbounded(&self) -> bool {
        self.sep.terms.iter().any(|t| {
            t.factors.iter().any(|(_, f)| 2.0 * f.sing >= 1.0)
        }) || self.pair_terms.iter().any(|&(_, p)| 2.0 * p <= -1.0)
    }

    /// `Some((c, psi))` when `kappa_e(x,y) = c psi(x) psi(y)` with a single
    /// separable term.
    pub(crate) fn rank_one(&self) -> Option<(f64, Vec<f64>, f64)> {
        if self.dense.is_some() || !self.pair_terms.is_empty() {
            return None;
        }
        // merge terms sharing the same factor vectors
        let first = self.sep.terms.first()?;
        let fx = first.factors.iter().find(|(s, _)| *s == 0).map(|(_, f)| f.clone());
        let fy = first.factors.iter().find(|(s, _)| *s == 1).map(|(_, f)| f.clone());
        let same = |a: &Option<crate::sep::Factor>, b: &Option<crate::sep::Factor>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => a.vals == b.vals,
            _ => false,
        };
        if !same(&fx, &fy) {
            return None;
        }
        let mut c = 0.0;
        for t in &self.sep.terms {
            let tx = t.factors.iter().find(|(s, _)| *s == 0).map(|(_, f)| f.clone());
            let ty = t.factors.iter().find(|(s, _)| *s == 1).map(|(_, f)| f.clone());
            if !same(&tx, &fx) || !same(&ty, &fy) {
                return None;
            }
            c += t.coef;
        }
        let m = self.grid.len();
        let sing = fx.as_ref().map_or(0.0, |f| f.sing);
        let psi = fx.map_or(vec![1.0; m], |f| f.vals.to_vec());
        Some((c, psi, sing))
    }
}

fn ordered_edges(shape: &AtomShape) -> Vec<(usize, usize)> {
    shape
        .edges()
        .iter()
        .flat_map(|&(a, b)| [(a, b), (b, a)])
        .collect()
}

/// `kappa_e(x,y) = sum_F sum over ordered edges (i,j) of F of the integral of
/// kappa_F with `x` at `i` and `y` at `j`.
pub fn edge_kernel(family: &KernelFamily) -> Result<EdgeKernel> {
    let report = integrability_report(family)?;
    let mut contributions = Vec::new();
    for e in &family.entries {
        for (i, j) in ordered_edges(&e.shape) {
            contributions.push(PairContribution {
                kernel: &e.kernel,
                r: e.shape.r(),
                i,
                j,
                scale: 1.0,
            });
        }
    }
    EdgeKernel::build(family.space(), &contributions, report.xi_e, !report.edge_integrable)
}

/// The rescaled edge kernel `tau(x,y) = 2 sum_r kappa_r(x,y,*)`.
pub fn tau_kernel(hk: &Hyperkernel) -> Result<EdgeKernel> {
    let report = integrability_report(hk.family())?;
    let mut per_r = BTreeMap::new();
    let grid = hk.space().grid();
    for e in hk.family().entries() {
        let r = e.shape.r();
        if r >= 2 {
            per_r.insert(r, 2.0 * kernel_integral(&e.kernel, r, &grid)?);
        }
    }
    let (_, div) = series_total(&per_r);
    let contributions: Vec<_> = hk
        .family()
        .entries()
        .iter()
        .filter(|e| e.shape.r() >= 2)
        .map(|e| PairContribution {
            kernel: &e.kernel,
            r: e.shape.r(),
            i: 0,
            j: 1,
            scale: 2.0,
        })
        .collect();
    EdgeKernel::build(hk.space(), &contributions, report.xi_e, div)
}

/// Outcome of an irreducibility check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Irreducibility {
    Irreducible,
    Reducible,
    /// Not decidable for this type space.
    Unknown,
}

/// Connectivity of the support graph of `kappa_e` on the finite types.
pub fn irreducibility_check(family: &KernelFamily) -> Result<Irreducibility> {
    let Some(k) = family.space().num_types() else {
        return Ok(Irreducibility::Unknown);
    };
    let ek = edge_kernel(family)?;
    if ek.is_divergent() {
        // every pair is joined with infinite intensity somewhere; fall back to support of the parts
        return Ok(Irreducibility::Unknown);
    }
    let mut seen = vec![false; k];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for b in 0..k {
            if !seen[b] && (ek.at(a, b) > ZERO_TOL || ek.at(b, a) > ZERO_TOL) {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    Ok(if seen.iter().all(|s| *s) {
        Irreducibility::Irreducible
    } else {
        Irreducibility::Reducible
    })
}

/// `true` when `g` is one of the small standard shapes used by name.
pub fn shape_by_name(name: &str) -> Option<AtomShape> {
    let g = match name {
        "K1" => SmallGraph::complete(1),
        "K2" => SmallGraph::complete(2),
        "K3" => SmallGraph::complete(3),
        "K4" => SmallGraph::complete(4),
        "P2" => SmallGraph::path(2),
        "P3" => SmallGraph::path(3),
        "S3" => SmallGraph::star(3),
        "C4" => SmallGraph::cycle(4),
        _ => return None,
    };
    AtomShape::new(g).ok()
}

/// `r!` as used in hyperkernel normalization.
pub fn arity_factorial(r: usize) -> f64 {
    factorial(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AtomShape;

    fn k2() -> AtomShape {
        AtomShape::clique(2)
    }
    fn k3() -> AtomShape {
        AtomShape::clique(3)
    }
    fn p2() -> AtomShape {
        AtomShape::new(SmallGraph::path(2)).unwrap()
    }

    fn powerlaw(a: f64, b: f64, alpha: f64) -> KernelFamily {
        KernelFamily::new(
            TypeSpace::stratified_for_alpha(2048, alpha).unwrap(),
            vec![
                FamilyEntry::new(k2(), KernelFunction::rank_one(a, alpha)),
                FamilyEntry::new(k3(), KernelFunction::rank_one(b, alpha)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn constants_symmetrize_to_themselves() {
        let fam = KernelFamily::constants(vec![(p2(), 0.3), (k3(), 0.2)]).unwrap();
        assert_eq!(symmetrize(&fam), fam);
    }

    #[test]
    fn p2_table_averaged_over_leaf_swap() {
        let space = TypeSpace::finite(vec![0.5, 0.5]).unwrap();
        let vals: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let fam = KernelFamily::new(
            space,
            vec![FamilyEntry::new(p2(), KernelFunction::block_table(2, vals.clone()))],
        )
        .unwrap();
        let sym = symmetrize(&fam);
        let got = sym.entries()[0].kernel.to_table(2, 3).unwrap();
        // path 0-1-2: automorphisms fix the centre and swap the leaves 0 and 2
        for idx in 0..8 {
            let t = table_tuple(idx, 2, 3);
            let sw = table_index(&[t[2], t[1], t[0]], 2);
            assert_eq!(got[idx], 0.5 * (vals[idx] + vals[sw]));
        }
    }

    #[test]
    fn hyperkernel_of_constant_p2_is_constant_triangle() {
        let fam = KernelFamily::constants(vec![(p2(), 0.4)]).unwrap();
        let hk = to_hyperkernel(&fam).unwrap();
        assert_eq!(hk.kappa(3), Some(&KernelFunction::Constant(0.4)));
        assert!(hk.family().is_clique_family());
    }

    #[test]
    fn constant_edge_kernel() {
        let hk = Hyperkernel::constants(&[(2, 0.5), (3, 0.25), (4, 0.1)]).unwrap();
        let ek = edge_kernel(hk.family()).unwrap();
        let want = 2.0 * 0.5 + 6.0 * 0.25 + 12.0 * 0.1;
        assert!((ek.at(0, 0) - want).abs() < 1e-12);
        assert!((2.0 * ek.xi_e() - want).abs() < 1e-12);
    }

    #[test]
    fn powerlaw_edge_kernel_and_density() {
        let (a, b, alpha) = (1.0, 1.0, 3.0);
        let fam = powerlaw(a, b, alpha);
        let beta = alpha / (alpha - 1.0);
        let xi = edge_density(&fam).unwrap();
        assert!((xi - 12.375).abs() / 12.375 < 1e-6, "xi = {xi}");
        let ek = edge_kernel(&fam).unwrap();
        let g = fam.grid();
        for &(i, j) in &[(0, 0), (10, 500), (2000, 7)] {
            let want = (2.0 * a + 6.0 * b * beta) * (g.nodes[i] * g.nodes[j]).powf(-1.0 / alpha);
            assert!((ek.at(i, j) - want).abs() / want < 1e-5);
        }
        assert!((ek.half_integral() - xi).abs() / xi < 1e-5);
    }

    #[test]
    fn empty_family() {
        let fam = KernelFamily::empty(TypeSpace::single_type());
        let ek = edge_kernel(&fam).unwrap();
        assert_eq!(ek.at(0, 0), 0.0);
        let rep = integrability_report(&fam).unwrap();
        assert_eq!((rep.iota, rep.xi_e), (0.0, 0.0));
    }

    #[test]
    fn integrability_examples() {
        let fam = KernelFamily::constants(vec![(k2(), 1.0), (k3(), 0.5)]).unwrap();
        let rep = integrability_report(&fam).unwrap();
        assert_eq!(rep.iota, 3.5);
        assert_eq!(rep.xi_e, 2.5);
        assert!(rep.integrable && rep.edge_integrable);

        let cs: Vec<(usize, f64)> = (2..=R_MAX).map(|r| (r, 1.0 / (r as f64).powi(3))).collect();
        let hk = Hyperkernel::constants(&cs).unwrap();
        let rep = integrability_report(hk.family()).unwrap();
        assert!(rep.integrable);
        assert!(!rep.edge_integrable);
        assert!(edge_kernel(hk.family()).unwrap().is_divergent());
    }

    #[test]
    fn irreducibility() {
        let space = TypeSpace::finite(vec![0.3, 0.7]).unwrap();
        let two_block = KernelFamily::new(
            space.clone(),
            vec![FamilyEntry::new(k2(), KernelFunction::block_table(2, vec![0.0, 1.0, 1.0, 0.0]))],
        )
        .unwrap();
        assert_eq!(irreducibility_check(&two_block).unwrap(), Irreducibility::Irreducible);
        let diag = KernelFamily::new(
            space,
            vec![FamilyEntry::new(k2(), KernelFunction::block_table(2, vec![1.0, 0.0, 0.0, 1.0]))],
        )
        .unwrap();
        assert_eq!(irreducibility_check(&diag).unwrap(), Irreducibility::Reducible);
        let single = KernelFamily::constants(vec![(k3(), 0.1)]).unwrap();
        assert_eq!(irreducibility_check(&single).unwrap(), Irreducibility::Irreducible);
        assert_eq!(
            irreducibility_check(&powerlaw(1.0, 0.0, 3.0)).unwrap(),
            Irreducibility::Unknown
        );
    }

    #[test]
    fn tau_for_constants() {
        let hk = Hyperkernel::constants(&[(2, 0.3), (3, 0.2)]).unwrap();
        let tau = tau_kernel(&hk).unwrap();
        assert!((tau.at(0, 0) - (0.6 + 0.4)).abs() < 1e-12);
        let ek = edge_kernel(hk.family()).unwrap();
        assert!((ek.at(0, 0) - (0.6 + 1.2)).abs() < 1e-12);
    }

    #[test]
    fn truncation_is_monotone() {
        let fam = powerlaw(1.0, 1.0, 3.0);
        let mut last = 0.0;
        for &m in &[1.0, 10.0, 100.0] {
            let t = truncate(&fam, m).unwrap();
            let ek = edge_kernel(&t.with_space(TypeSpace::stratified_for_alpha(128, 3.0).unwrap()).unwrap()).unwrap();
            let xi = ek.xi_e();
            assert!(xi >= last);
            last = xi;
        }
        assert!(last < 12.375);
    }

    #[test]
    fn marginal_of_table() {
        let space = TypeSpace::finite(vec![0.25, 0.75]).unwrap();
        let k = KernelFunction::block_table(2, vec![1.0, 2.0, 3.0, 4.0]);
        let m = k.marginal(2, &[0], &space).unwrap();
        assert_eq!(m, KernelFunction::block_table(2, vec![0.25 + 1.5, 0.75 + 3.0]));
        let c = k.marginal(2, &[], &space).unwrap();
        assert_eq!(c, KernelFunction::Constant(0.25 * 1.75 + 0.75 * 3.75));
    }
}
