//! Integration engine for kernels that are sums of products of one-variable
//! factors. Every variable of a kernel is either bound to a named slot (kept)
//! or integrated out against the grid, optionally with a weight function.
//!
//! Each factor carries the exponent `s` of its `x^{-s}` singularity at 0, so
//! integrals that diverge analytically are reported as `+inf` even though the
//! grid sum itself is finite.

use std::sync::Arc;

use crate::kernel::KernelFunction;
use crate::space::Grid;

/// Marker: the kernel term does not factor for the requested binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NotSeparable;

#[derive(Clone, Debug)]
pub(crate) struct Factor {
    pub vals: Arc<Vec<f64>>,
    pub sing: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct SepTerm {
    pub coef: f64,
    /// Sorted by slot.
    pub factors: Vec<(usize, Factor)>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct SepSum {
    pub terms: Vec<SepTerm>,
}

/// How one kernel variable is treated.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Bind<'a> {
    Slot(usize),
    /// Integrate against `mu`, times the weight if given.
    Free(Option<&'a [f64]>),
}

/// `int_0^1 x^{-s} dx`, or `+inf` for `s >= 1`.
pub(crate) fn power_moment(s: f64) -> f64 {
    if s >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - s)
    }
}

/// Mean of `d(x,y)^p` over uniform `y` on the circle `[0,1)`, any `x`.
pub(crate) fn circle_moment(p: f64) -> f64 {
    if p <= -1.0 {
        f64::INFINITY
    } else {
        0.5f64.powf(p) / (p + 1.0)
    }
}

pub(crate) fn circle_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

fn mul_coef(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

fn weighted_sum(grid: &Grid, vals: Option<&[f64]>, weight: Option<&[f64]>) -> f64 {
    match (vals, weight) {
        (None, None) => 1.0,
        (Some(v), None) => grid.integrate(v),
        (None, Some(g)) => grid.integrate(g),
        (Some(v), Some(g)) => grid.dot(v, g),
    }
}

impl SepSum {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![SepTerm {
                coef: c,
                factors: Vec::new(),
            }],
        }
    }

    /// Builds the separable form of `kernel` under `binds` (one per variable).
    pub fn from_kernel(
        kernel: &KernelFunction,
        binds: &[Bind<'_>],
        grid: &Grid,
    ) -> Result<Self, NotSeparable> {
        match kernel {
            KernelFunction::Constant(c) => {
                let mut coef = *c;
                for b in binds {
                    if let Bind::Free(w) = b {
                        coef = mul_coef(coef, weighted_sum(grid, None, *w));
                    }
                }
                Ok(Self::constant(coef).pruned())
            }
            KernelFunction::RankOne { coef, alpha } => {
                let s = 1.0 / alpha;
                let phi: Arc<Vec<f64>> = Arc::new(grid.nodes.iter().map(|x| x.powf(-s)).collect());
                let mut term = SepTerm {
                    coef: *coef,
                    factors: Vec::new(),
                };
                for b in binds {
                    match b {
                        Bind::Slot(slot) => term.push_factor(
                            *slot,
                            Factor {
                                vals: phi.clone(),
                                sing: s,
                            },
                        ),
                        Bind::Free(w) => {
                            let v = if s >= 1.0 {
                                f64::INFINITY
                            } else {
                                weighted_sum(grid, Some(&phi), *w)
                            };
                            term.coef = mul_coef(term.coef, v);
                        }
                    }
                }
                Ok(Self { terms: vec![term] }.pruned())
            }
            KernelFunction::BlockTable { types, values } => {
                let k = *types;
                let r = binds.len();
                let mut terms = Vec::new();
                let mut idx = vec![0usize; r];
                for &v in values.iter() {
                    if v != 0.0 {
                        let mut term = SepTerm {
                            coef: v,
                            factors: Vec::new(),
                        };
                        for (p, b) in binds.iter().enumerate() {
                            let t = idx[p];
                            match b {
                                Bind::Slot(slot) => {
                                    let mut e = vec![0.0; k];
                                    e[t] = 1.0;
                                    term.push_factor(
                                        *slot,
                                        Factor {
                                            vals: Arc::new(e),
                                            sing: 0.0,
                                        },
                                    );
                                }
                                Bind::Free(w) => {
                                    let g = w.map_or(1.0, |g| g[t]);
                                    term.coef = mul_coef(term.coef, grid.weights[t] * g);
                                }
                            }
                        }
                        if !term.is_zero() {
                            terms.push(term);
                        }
                    }
                    // advance the row-major index (last variable fastest)
                    for p in (0..r).rev() {
                        idx[p] += 1;
                        if idx[p] < k {
                            break;
                        }
                        idx[p] = 0;
                    }
                }
                Ok(Self { terms })
            }
            KernelFunction::PairDistance {
                i,
                j,
                coef,
                exponent,
            } => {
                let (bi, bj) = (binds[*i], binds[*j]);
                match (bi, bj) {
                    (Bind::Slot(_), Bind::Slot(_)) => Err(NotSeparable),
                    (Bind::Slot(_), Bind::Free(Some(_)))
                    | (Bind::Free(Some(_)), Bind::Slot(_))
                    | (Bind::Free(Some(_)), Bind::Free(_))
                    | (Bind::Free(_), Bind::Free(Some(_))) => Err(NotSeparable),
                    _ => {
                        let mut c = mul_coef(*coef, circle_moment(*exponent));
                        for (p, b) in binds.iter().enumerate() {
                            if p == *i || p == *j {
                                continue;
                            }
                            if let Bind::Free(w) = b {
                                c = mul_coef(c, weighted_sum(grid, None, *w));
                            }
                        }
                        Ok(Self::constant(c).pruned())
                    }
                }
            }
            KernelFunction::Truncated { .. } => Err(NotSeparable),
            KernelFunction::Sum(parts) => {
                let mut out = SepSum::zero();
                for p in parts {
                    out.terms.extend(Self::from_kernel(p, binds, grid)?.terms);
                }
                Ok(out)
            }
        }
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|t| !t.is_zero());
        self
    }

    pub fn add(mut self, other: SepSum) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.coef = mul_coef(t.coef, s);
        }
        self.pruned()
    }

    pub fn mul(&self, other: &SepSum) -> SepSum {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut t = a.clone();
                t.coef = mul_coef(t.coef, b.coef);
                for (slot, f) in &b.factors {
                    t.push_factor(*slot, f.clone());
                }
                if !t.is_zero() {
                    out.push(t);
                }
            }
        }
        SepSum { terms: out }
    }

    /// Sum of coefficients (valid once all slots are integrated out).
    pub fn total(&self) -> f64 {
        debug_assert!(self.terms.iter().all(|t| t.factors.is_empty()));
        self.terms.iter().map(|t| t.coef).sum()
    }

    /// Integral over every slot.
    pub fn integral(&self, grid: &Grid) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let mut c = t.coef;
            for (_, f) in &t.factors {
                let v = if f.sing >= 1.0 {
                    f64::INFINITY
                } else {
                    grid.integrate(&f.vals)
                };
                c = mul_coef(c, v);
            }
            total += c;
        }
        total
    }

    /// Values on the grid of a function of the single slot `slot`
    /// (any other slots must already be integrated out).
    pub fn eval_slot(&self, slot: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for t in &self.terms {
            match t.factors.iter().find(|(s, _)| *s == slot) {
                Some((_, f)) => {
                    for (o, v) in out.iter_mut().zip(f.vals.iter()) {
                        *o += mul_coef(t.coef, *v);
                    }
                }
                None => {
                    for o in out.iter_mut() {
                        *o += t.coef;
                    }
                }
            }
        }
        out
    }

    /// Value at an assignment of grid nodes to slots.
    pub fn eval_at(&self, at: &[(usize, usize)]) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let mut c = t.coef;
            for (slot, f) in &t.factors {
                let node = at
                    .iter()
                    .find(|(s, _)| s == slot)
                    .map(|(_, n)| *n)
                    .expect("slot bound");
                c = mul_coef(c, f.vals[node]);
            }
            total += c;
        }
        total
    }

    /// Largest singular exponent carried by `slot` over all terms.
    pub fn max_sing(&self, slot: usize) -> f64 {
        self.terms
            .iter()
            .filter_map(|t| t.factors.iter().find(|(s, _)| *s == slot).map(|(_, f)| f.sing))
            .fold(0.0, f64::max)
    }

    pub fn has_infinite(&self) -> bool {
        self.terms.iter().any(|t| t.coef.is_infinite())
    }
}

impl SepTerm {
    fn push_factor(&mut self, slot: usize, f: Factor) {
        match self.factors.binary_search_by_key(&slot, |(s, _)| *s) {
            Ok(pos) => {
                let old = &self.factors[pos].1;
                let vals: Vec<f64> = old.vals.iter().zip(f.vals.iter()).map(|(a, b)| a * b).collect();
                self.factors[pos].1 = Factor {
                    vals: Arc::new(vals),
                    sing: old.sing + f.sing,
                };
            }
            Err(pos) => self.factors.insert(pos, (slot, f)),
        }
    }

    fn is_zero(&self) -> bool {
        self.coef == 0.0 || self.factors.iter().any(|(_, f)| f.vals.iter().all(|v| *v == 0.0))
    }
}
