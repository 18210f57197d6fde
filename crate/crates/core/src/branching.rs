//! The multi-type compound-Poisson branching process of a hyperkernel on a
//! grid: the operators `S`, `Phi`, `T`, the survival fixed point, the norm of
//! `T`, and direct simulation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{edge_kernel, to_hyperkernel, EdgeKernel, Hyperkernel, KernelFamily, KernelFunction};
use crate::quad::{check_cost, tensor_sum};
use crate::sampler::stream_rng;
use crate::sep::{Bind, SepSum};
use crate::space::Grid;

/// Discretized branching process.
#[derive(Clone, Debug)]
pub struct DiscreteBP {
    hk: Hyperkernel,
    grid: Grid,
    edge: EdgeKernel,
    parts: Vec<(usize, KernelFunction)>,
    lambda: Vec<f64>,
    lambda_r: Vec<Vec<f64>>,
}

impl DiscreteBP {
    /// Builds the process; divergent families are rejected.
    pub fn new(hk: &Hyperkernel) -> Result<Self> {
        let grid = hk.space().grid();
        let edge = edge_kernel(hk.family())?;
        if edge.is_divergent() {
            return Err(Error::DivergentKernel);
        }
        let parts: Vec<(usize, KernelFunction)> = hk
            .family()
            .entries()
            .iter()
            .filter(|e| e.shape.r() >= 2 && !e.kernel.is_zero())
            .map(|e| (e.shape.r(), e.kernel.simplified()))
            .collect();
        let mut bp = DiscreteBP {
            hk: hk.clone(),
            grid,
            edge,
            parts,
            lambda: Vec::new(),
            lambda_r: Vec::new(),
        };
        let ones = vec![1.0; bp.grid.len()];
        let mut lambda_r = Vec::with_capacity(bp.parts.len());
        for (r, k) in &bp.parts {
            lambda_r.push(bp.s_part(*r, k, &ones)?);
        }
        let mut lambda = vec![0.0; bp.grid.len()];
        for l in &lambda_r {
            for (a, b) in lambda.iter_mut().zip(l) {
                *a += b;
            }
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergentKernel);
        }
        bp.lambda = lambda;
        bp.lambda_r = lambda_r;
        Ok(bp)
    }

    pub fn from_family(family: &KernelFamily) -> Result<Self> {
        Self::new(&to_hyperkernel(family)?)
    }

    pub fn hyperkernel(&self) -> &Hyperkernel {
        &self.hk
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn edge_kernel(&self) -> &EdgeKernel {
        &self.edge
    }

    /// Expected number of child cliques `lambda(x) = S(1)(x)`.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `r int kappa_r(x, y_2..y_r) (1 - prod (1 - f(y_i)))`, telescoped as
    /// `sum_i f(y_i) prod_{j<i} (1 - f(y_j))` so no cancellation occurs.
    fn s_part(&self, r: usize, kernel: &KernelFunction, f: &[f64]) -> Result<Vec<f64>> {
        let m = self.grid.len();
        let one_minus: Vec<f64> = f.iter().map(|v| 1.0 - v).collect();
        let mut out = vec![0.0; m];
        for t in kernel.terms() {
            let mut sep_ok = true;
            let mut acc = SepSum::zero();
            for i in 1..r {
                let mut binds = Vec::with_capacity(r);
                binds.push(Bind::Slot(0));
                for p in 1..r {
                    binds.push(if p < i {
                        Bind::Free(Some(&one_minus))
                    } else if p == i {
                        Bind::Free(Some(f))
                    } else {
                        Bind::Free(None)
                    });
                }
                match SepSum::from_kernel(t, &binds, &self.grid) {
                    Ok(s) => acc = acc.add(s),
                    Err(_) => {
                        sep_ok = false;
                        break;
                    }
                }
            }
            if sep_ok {
                for (o, v) in out.iter_mut().zip(acc.eval_slot(0, m)) {
                    *o += r as f64 * v;
                }
            } else {
                check_cost(r, r - 1, m, m)?;
                let w = vec![None; r];
                for (x, o) in out.iter_mut().enumerate() {
                    let v = tensor_sum(t, r, &[(0, x)], &w, &self.grid, |v, idx| {
                        let surv: f64 = idx.iter().map(|&y| one_minus[y]).product();
                        v * (1.0 - surv)
                    });
                    *o += r as f64 * v;
                }
            }
        }
        Ok(out)
    }

    /// `S(f)` on the grid.
    pub fn s_apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_fn(f)?;
        let mut out = vec![0.0; self.grid.len()];
        for (r, k) in &self.parts {
            for (o, v) in out.iter_mut().zip(self.s_part(*r, k, f)?) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// `Phi(f) = 1 - exp(-S(f))`.
    pub fn phi_apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(self.s_apply(f)?.into_iter().map(|s| -(-s).exp_m1()).collect())
    }

    /// `T(f)(x) = int kappa_e(x,y) f(y) dmu(y)`.
    pub fn t_apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.grid.len() {
            return Err(Error::InvalidParameter("function length differs from the grid".into()));
        }
        self.edge.apply(f)
    }

    fn check_fn(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.grid.len() {
            return Err(Error::InvalidParameter("function length differs from the grid".into()));
        }
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("function values must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// Stopping rule for fixed-point iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Give up when the step size has not improved for this many iterations.
    pub plateau_window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            plateau_window: 1000,
        }
    }
}

/// The survival function `rho(x)` on the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalSolution {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub rho_x: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl SurvivalSolution {
    /// `node,weight,rho` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,weight,rho\n");
        for i in 0..self.nodes.len() {
            s.push_str(&format!("{},{},{}\n", self.nodes[i], self.weights[i], self.rho_x[i]));
        }
        s
    }
}

/// Iterates `f <- Phi(f)` from `f0` until the sup-norm step is below `tol`.
pub fn iterate_phi(bp: &DiscreteBP, f0: Vec<f64>, opts: &SolveOptions) -> Result<SurvivalSolution> {
    let mut f = f0;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let g = bp.phi_apply(&f)?;
        residual = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        f = g;
        if residual < opts.tol {
            let rho = bp.grid.integrate(&f);
            return Ok(SurvivalSolution {
                nodes: bp.grid.nodes.clone(),
                weights: bp.grid.weights.clone(),
                rho_x: f,
                rho,
                iterations: it,
                residual,
            });
        }
        if residual < best * (1.0 - 1e-9) {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.plateau_window {
                return Err(Error::MaxIterExceeded {
                    iterations: it,
                    residual,
                    last: f,
                });
            }
        }
    }
    Err(Error::MaxIterExceeded {
        iterations: opts.max_iter,
        residual,
        last: f,
    })
}

/// The maximal fixed point of `Phi`, by iterating down from `f = 1`.
pub fn solve_survival(bp: &DiscreteBP, opts: &SolveOptions) -> Result<SurvivalSolution> {
    iterate_phi(bp, vec![1.0; bp.grid.len()], opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    /// Closed form for rank-one edge kernels, power iteration otherwise.
    #[default]
    Auto,
    ClosedFormRankOne,
    PowerIteration,
}

/// Estimate of `||T||` on `L^2(mu)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    /// `+inf` when the operator is unbounded.
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    pub residual: f64,
}

/// Norm of `T` for the edge kernel of `bp`.
pub fn operator_norm(bp: &DiscreteBP, method: NormMethod, tol: f64) -> NormEstimate {
    edge_operator_norm(&bp.edge, method, tol)
}

/// Norm of the integral operator of an edge kernel.
pub fn edge_operator_norm(ek: &EdgeKernel, method: NormMethod, tol: f64) -> NormEstimate {
    if ek.is_divergent() || ek.l2_unbounded() {
        return NormEstimate {
            value: f64::INFINITY,
            method,
            iterations: 0,
            residual: 0.0,
        };
    }
    let grid = ek.grid();
    if method == NormMethod::Auto || method == NormMethod::ClosedFormRankOne {
        if let Some((c, psi, _)) = ek.rank_one() {
            return NormEstimate {
                value: c * grid.dot(&psi, &psi),
                method: NormMethod::ClosedFormRankOne,
                iterations: 0,
                residual: 0.0,
            };
        }
    }
    let norm = |v: &[f64]| grid.dot(v, v).sqrt();
    let mut f = vec![1.0; grid.len()];
    let mut est = 0.0;
    let mut residual = f64::INFINITY;
    let max_iter = 10_000;
    for it in 1..=max_iter {
        let g = ek.apply(&f).expect("checked for divergence");
        let ng = norm(&g);
        let nf = norm(&f);
        if ng == 0.0 || nf == 0.0 {
            return NormEstimate {
                value: 0.0,
                method: NormMethod::PowerIteration,
                iterations: it,
                residual: 0.0,
            };
        }
        let new = ng / nf;
        residual = (new - est).abs();
        est = new;
        f = g.into_iter().map(|v| v / ng).collect();
        if residual <= tol * est {
            return NormEstimate {
                value: est,
                method: NormMethod::PowerIteration,
                iterations: it,
                residual,
            };
        }
    }
    NormEstimate {
        value: est,
        method: NormMethod::PowerIteration,
        iterations: max_iter,
        residual,
    }
}

/// Starting type of a simulated process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Root {
    /// Grid node index.
    Node(usize),
    /// Drawn from `mu`.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimCaps {
    pub max_particles: usize,
    pub max_generations: usize,
}

impl Default for SimCaps {
    fn default() -> Self {
        Self {
            max_particles: 10_000,
            max_generations: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Died,
    /// Reached `max_particles`; counted as survival.
    ReachedCap,
    /// Still alive below the particle cap when the generation cap ran out.
    Ambiguous,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimOutcome {
    pub status: SimStatus,
    pub total_size: usize,
    pub generation_sizes: Vec<usize>,
}

/// One separable term of `r kappa_r(x, y_2, ..., y_r)` prepared for sampling.
#[derive(Debug)]
struct SimTerm {
    coef: f64,
    fx: Option<Vec<f64>>,
    /// Per child slot: sampler over grid nodes (`None`: draw from `mu`).
    children: Vec<Option<WeightedIndex<f64>>>,
}

/// Sampling tables for the child cliques of every arity.
#[derive(Debug)]
pub struct SimTables {
    mu: WeightedIndex<f64>,
    arities: Vec<(usize, Vec<SimTerm>)>,
}

impl DiscreteBP {
    /// Builds the tables used by [`simulate`].
    pub fn sim_tables(&self) -> Result<SimTables> {
        let mu = WeightedIndex::new(&self.grid.weights).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut arities = Vec::new();
        for (r, k) in &self.parts {
            let binds: Vec<Bind<'_>> = (0..*r).map(Bind::Slot).collect();
            let mut terms = Vec::new();
            for t in k.terms() {
                let sep = SepSum::from_kernel(t, &binds, &self.grid).map_err(|_| {
                    Error::Unsupported("simulation of non-separable kernel terms".into())
                })?;
                for st in sep.terms {
                    let mut coef = st.coef * *r as f64;
                    let mut fx = None;
                    let mut children = vec![None; r - 1];
                    for (slot, f) in &st.factors {
                        if *slot == 0 {
                            fx = Some(f.vals.to_vec());
                        } else {
                            let w: Vec<f64> = f.vals.iter().zip(&self.grid.weights).map(|(a, b)| a * b).collect();
                            let total: f64 = w.iter().sum();
                            coef *= total;
                            children[slot - 1] = if total > 0.0 {
                                Some(WeightedIndex::new(&w).map_err(|e| Error::InvalidParameter(e.to_string()))?)
                            } else {
                                None
                            };
                            if total == 0.0 {
                                coef = 0.0;
                            }
                        }
                    }
                    if coef > 0.0 {
                        terms.push(SimTerm { coef, fx, children });
                    }
                }
            }
            arities.push((*r, terms));
        }
        Ok(SimTables { mu, arities })
    }
}

/// Simulates the process from `root` until extinction or a cap.
pub fn simulate<R: Rng + ?Sized>(
    tables: &SimTables,
    root: Root,
    caps: SimCaps,
    rng: &mut R,
) -> SimOutcome {
    let root = match root {
        Root::Node(x) => x,
        Root::Random => tables.mu.sample(rng),
    };
    let mut current = vec![root];
    let mut total = 1usize;
    let mut gens = vec![1usize];
    let mut weights: Vec<f64> = Vec::new();
    if total >= caps.max_particles {
        return SimOutcome {
            status: SimStatus::ReachedCap,
            total_size: total,
            generation_sizes: gens,
        };
    }
    for _ in 0..caps.max_generations {
        let mut next = Vec::new();
        for &x in &current {
            for (_, terms) in &tables.arities {
                weights.clear();
                weights.extend(terms.iter().map(|t| t.coef * t.fx.as_ref().map_or(1.0, |f| f[x])));
                let lam: f64 = weights.iter().sum();
                if lam <= 0.0 {
                    continue;
                }
                let count = Poisson::new(lam).map(|d| d.sample(rng) as u64).unwrap_or(0);
                for _ in 0..count {
                    // pick the term
                    let mut u = rng.random::<f64>() * lam;
                    let mut ti = terms.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        if u < *w {
                            ti = i;
                            break;
                        }
                        u -= w;
                    }
                    for c in &terms[ti].children {
                        let y = match c {
                            Some(d) => d.sample(rng),
                            None => tables.mu.sample(rng),
                        };
                        next.push(y);
                        total += 1;
                        if total >= caps.max_particles {
                            gens.push(next.len());
                            return SimOutcome {
                                status: SimStatus::ReachedCap,
                                total_size: total,
                                generation_sizes: gens,
                            };
                        }
                    }
                }
            }
        }
        if next.is_empty() {
            return SimOutcome {
                status: SimStatus::Died,
                total_size: total,
                generation_sizes: gens,
            };
        }
        gens.push(next.len());
        current = next;
    }
    SimOutcome {
        status: SimStatus::Ambiguous,
        total_size: total,
        generation_sizes: gens,
    }
}

/// Monte Carlo estimate with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl McEstimate {
    fn from_hits(hits: usize, trials: usize) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            estimate: p,
            std_err: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }
}

/// Frequency of total progeny at least `k` from a `mu`-random root.
pub fn survival_ge_k(bp: &DiscreteBP, k: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k == 1 {
        return Ok(McEstimate {
            estimate: 1.0,
            std_err: 0.0,
            trials,
        });
    }
    let tables = bp.sim_tables()?;
    let caps = SimCaps {
        max_particles: k,
        max_generations: usize::MAX,
    };
    let mut hits = 0;
    for t in 0..trials {
        let mut rng = stream_rng(seed, t as u64);
        if simulate(&tables, Root::Random, caps, &mut rng).status == SimStatus::ReachedCap {
            hits += 1;
        }
    }
    Ok(McEstimate::from_hits(hits, trials))
}

/// Frequency of reaching `caps.max_particles` from a `mu`-random root, and the
/// share of ambiguous runs.
pub fn survival_frequency(bp: &DiscreteBP, caps: SimCaps, trials: usize, seed: u64) -> Result<(McEstimate, f64)> {
    let tables = bp.sim_tables()?;
    let mut hits = 0;
    let mut amb = 0;
    for t in 0..trials {
        let mut rng = stream_rng(seed, t as u64);
        match simulate(&tables, Root::Random, caps, &mut rng).status {
            SimStatus::ReachedCap => hits += 1,
            SimStatus::Ambiguous => amb += 1,
            SimStatus::Died => {}
        }
    }
    Ok((McEstimate::from_hits(hits, trials), amb as f64 / trials as f64))
}
