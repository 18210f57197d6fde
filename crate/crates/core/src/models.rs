//! Built-in families and their closed-form predictions.
//!
//! The power-law family has `kappa_{K2} = A (xy)^{-1/alpha}` and
//! `kappa_{K3} = B (xyz)^{-1/alpha}` on `(0,1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AtomShape;
use crate::kernel::{FamilyEntry, Hyperkernel, KernelFamily, KernelFunction};
use crate::space::TypeSpace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl PowerLawParams {
    pub fn new(a: f64, b: f64, alpha: f64) -> Result<Self> {
        let p = Self { a, b, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParameter(format!("A = {} and B = {} must be nonnegative", self.a, self.b)));
        }
        if self.a + self.b <= 0.0 {
            return Err(Error::InvalidParameter("A + B must be positive".into()));
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha = {} must exceed 1", self.alpha)));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        beta_k(self.alpha, 1.0)
    }

    /// `2A + 6B beta`, the coefficient of the rank-one edge kernel.
    fn edge_coef(&self) -> f64 {
        2.0 * self.a + 6.0 * self.b * self.beta()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBlockParams {
    pub a: f64,
    pub p: f64,
}

impl TwoBlockParams {
    pub fn new(a: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("A = {a} must be positive")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p = {p} must lie in (0,1)")));
        }
        Ok(Self { a, p })
    }
}

/// `int_0^1 x^{-k/alpha} dx`, `+inf` when `alpha <= k`.
pub fn beta_k(alpha: f64, k: f64) -> f64 {
    if alpha > k {
        alpha / (alpha - k)
    } else {
        f64::INFINITY
    }
}

pub fn powerlaw_family(params: &PowerLawParams, grid_size: usize) -> Result<KernelFamily> {
    params.validate()?;
    let space = TypeSpace::stratified_for_alpha(grid_size, params.alpha)?;
    let mut entries = Vec::new();
    if params.a > 0.0 {
        entries.push(FamilyEntry::new(AtomShape::clique(2), KernelFunction::rank_one(params.a, params.alpha)));
    }
    if params.b > 0.0 {
        entries.push(FamilyEntry::new(AtomShape::clique(3), KernelFunction::rank_one(params.b, params.alpha)));
    }
    KernelFamily::new(space, entries)
}

/// Single-type hyperkernel with `kappa_r = c_r`.
pub fn constant_family(cs: &[(usize, f64)]) -> Result<Hyperkernel> {
    Hyperkernel::constants(cs)
}

/// Edges only between the two types, with rate `A`.
pub fn two_block(params: &TwoBlockParams) -> Result<KernelFamily> {
    let space = TypeSpace::finite(vec![params.p, 1.0 - params.p])?;
    KernelFamily::new(
        space,
        vec![FamilyEntry::new(
            AtomShape::clique(2),
            KernelFunction::block_table(2, vec![0.0, params.a, params.a, 0.0]),
        )],
    )
}

/// Triangles on the circle with `kappa_3 = sum over pairs of d^{eps-1}`.
pub fn badp2_family(eps: f64, grid_size: usize) -> Result<KernelFamily> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0,1)")));
    }
    let pair = |i, j| KernelFunction::PairDistance {
        i,
        j,
        coef: 1.0,
        exponent: eps - 1.0,
    };
    KernelFamily::new(
        TypeSpace::unit_interval(grid_size, 1.0)?,
        vec![FamilyEntry::new(
            AtomShape::clique(3),
            KernelFunction::Sum(vec![pair(0, 1), pair(0, 2), pair(1, 2)]),
        )],
    )
}

/// `||T|| = (2A + 6B beta) beta_2`.
pub fn powerlaw_norm(params: &PowerLawParams) -> f64 {
    params.edge_coef() * beta_k(params.alpha, 2.0)
}

pub fn powerlaw_supercritical(params: &PowerLawParams) -> bool {
    let al = params.alpha;
    if al <= 2.0 {
        return true;
    }
    2.0 * params.a + 6.0 * params.b * al / (al - 1.0) > (al - 2.0) / al
}

pub fn powerlaw_xi_e(params: &PowerLawParams) -> f64 {
    let b = params.beta();
    params.a * b * b + 3.0 * params.b * b * b * b
}

pub fn powerlaw_iota(params: &PowerLawParams) -> f64 {
    let b = params.beta();
    2.0 * params.a * b * b + 3.0 * params.b * b * b * b
}

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `int_0^1 f`, for `f` growing at most like `x^{-s}` at 0 (`s < 1`):
/// substitutes `x = u^q` with `q = 1/(1-s)` so the integrand is bounded,
/// then composite 5-point Gauss-Legendre with panels refined toward 0.
fn integrate01<F: Fn(f64) -> f64>(f: F, s: f64) -> f64 {
    let q = 1.0 / (1.0 - s);
    let g = |u: f64| q * u.powf(q - 1.0) * f(u.powf(q));
    let mut total = 0.0;
    let mut right = 1.0;
    // geometric blocks [2^-(i+1), 2^-i], each split into equal panels
    for _ in 0..60 {
        let left = right * 0.5;
        let panels = 64;
        let h = (right - left) / panels as f64;
        for k in 0..panels {
            let a = left + k as f64 * h;
            let mid = a + 0.5 * h;
            for &(x, w) in &GL5 {
                total += 0.5 * h * w * g(mid + 0.5 * h * x);
            }
        }
        right = left;
    }
    total
}

/// `K(C) = (2A + 6B beta) C - 3 B C^2`, the coefficient in `rho(x)`.
fn k_of_c(params: &PowerLawParams, c: f64) -> f64 {
    params.edge_coef() * c - 3.0 * params.b * c * c
}

/// Right side of the fixed-point equation for `C`.
fn c_map(params: &PowerLawParams, c: f64) -> f64 {
    let k = k_of_c(params, c);
    let s = 1.0 / params.alpha;
    integrate01(|x| {
        let y = x.powf(-s);
        -y * (-k * y).exp_m1()
    }, s)
}

/// The positive root `C` of the fixed-point equation, or 0 when subcritical.
pub fn solve_c(params: &PowerLawParams, tol: f64) -> Result<f64> {
    params.validate()?;
    if !powerlaw_supercritical(params) {
        return Ok(0.0);
    }
    let g = |c: f64| c_map(params, c) - c;
    let beta = params.beta();
    let mut lo = beta * 1e-12;
    if g(lo) <= 0.0 {
        // numerically critical
        return Ok(0.0);
    }
    let mut hi = beta;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `rho(x) = 1 - exp(-K(C) x^{-1/alpha})`.
pub fn rho_x(params: &PowerLawParams, c: f64, x: f64) -> f64 {
    -(-k_of_c(params, c) * x.powf(-1.0 / params.alpha)).exp_m1()
}

/// Giant component fraction.
pub fn rho(params: &PowerLawParams) -> Result<f64> {
    let c = solve_c(params, 1e-13)?;
    if c == 0.0 {
        return Ok(0.0);
    }
    Ok(integrate01(|x| rho_x(params, c, x), 0.0))
}

/// `int x^{-1/alpha} rho(x) dx` for the `rho` built from `c`.
pub fn c_integral(params: &PowerLawParams, c: f64) -> f64 {
    c_map(params, c)
}

/// Limiting clustering coefficient; needs `alpha > 2`.
pub fn powerlaw_c2(params: &PowerLawParams) -> Result<f64> {
    params.validate()?;
    if params.alpha <= 2.0 {
        return Err(Error::InvalidParameter("clustering limit needs alpha > 2".into()));
    }
    let (a, b) = (params.a, params.b);
    let be = params.beta();
    let b2 = beta_k(params.alpha, 2.0);
    let num = 3.0 * b * be.powi(3);
    Ok(num / (num + 2.0 * (a + 3.0 * b * be).powi(2) * be * be * b2))
}

/// Limiting degree correlation across an edge; 0 for `alpha <= 3`, where the
/// degree variance diverges.
pub fn powerlaw_a(params: &PowerLawParams) -> Result<f64> {
    params.validate()?;
    if params.alpha <= 2.0 {
        return Err(Error::InvalidParameter("mixing limit needs alpha > 2".into()));
    }
    if params.alpha <= 3.0 {
        return Ok(0.0);
    }
    let (a, b) = (params.a, params.b);
    let be = params.beta();
    let b2 = beta_k(params.alpha, 2.0);
    let b3 = beta_k(params.alpha, 3.0);
    let xb = a + 3.0 * b * be;
    let den = (4.0 * xb.powi(4) * (be * b3 - b2 * b2) + 2.0 * (a + 6.0 * b * be) * xb * xb * b2 + 3.0 * a * b * be)
        * be.powi(4);
    Ok(3.0 * a * b * be.powi(5) / den)
}

pub fn twoblock_a(params: &TwoBlockParams) -> f64 {
    let d = params.p - (1.0 - params.p);
    let t = params.a * d * d;
    -t / (t + 1.0)
}

/// `(c, c')` with `P(D > k) ~ (k/c)^{-alpha}` and `d_k ~ c' k^{-alpha-1}`;
/// for `A = 0` the second constant is doubled and applies to even `k`.
pub fn degree_tail(params: &PowerLawParams) -> (f64, f64) {
    let be = params.beta();
    let c = 2.0 * params.a * be + 6.0 * params.b * be * be;
    let cp = params.alpha * c.powf(params.alpha);
    (c, if params.a == 0.0 { 2.0 * cp } else { cp })
}

/// Small graphs with closed-form densities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmallPattern {
    K2,
    K3,
    P2,
    P3,
    S3,
}

impl SmallPattern {
    pub fn shape(self) -> AtomShape {
        match self {
            SmallPattern::K2 => AtomShape::clique(2),
            SmallPattern::K3 => AtomShape::clique(3),
            SmallPattern::P2 => AtomShape::from_edges(3, &[(0, 1), (1, 2)]).expect("path"),
            SmallPattern::P3 => AtomShape::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).expect("path"),
            SmallPattern::S3 => AtomShape::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).expect("star"),
        }
    }
}

/// Closed-form `t~(F)` for the power-law family (`+inf` where it diverges).
pub fn powerlaw_t_tilde(params: &PowerLawParams, f: SmallPattern) -> f64 {
    let (a, b) = (params.a, params.b);
    let be = params.beta();
    let b2 = beta_k(params.alpha, 2.0);
    let b3 = beta_k(params.alpha, 3.0);
    let e = params.edge_coef();
    // 0 * inf counts as 0: a vanishing coefficient removes the term
    let t = |c: f64, m: f64| if c == 0.0 { 0.0 } else { c * m };
    match f {
        SmallPattern::K2 => a * be * be + 3.0 * b * be.powi(3),
        SmallPattern::K3 => b * be.powi(3),
        SmallPattern::P2 => 3.0 * b * be.powi(3) + t(e * e * be * be / 2.0, b2),
        SmallPattern::S3 => t(e.powi(3) * be.powi(3) / 6.0, b3) + t(3.0 * b * e * be.powi(3), b2),
        SmallPattern::P3 => t(0.5 * e.powi(3) * be * be, b2 * b2) + t(6.0 * b * e * be.powi(3), b2),
    }
}

/// `a(kappa)` from densities of `K2, K3, P2, P3, S3`.
pub fn a_from_densities(k2: f64, k3: f64, p2: f64, p3: f64, s3: f64) -> f64 {
    if s3.is_infinite() {
        return 0.0;
    }
    (p3 * k2 + 3.0 * k3 * k2 - p2 * p2) / (3.0 * s3 * k2 + p2 * k2 - p2 * p2)
}
