//! Brute-force tensor quadrature for kernel terms that do not factor.

use crate::error::{Error, Result};
use crate::kernel::KernelFunction;
use crate::space::Grid;

/// Largest arity handled by tensor quadrature.
pub const TENSOR_MAX_ARITY: usize = 4;
/// Budget on kernel evaluations for one tensor computation.
pub const TENSOR_BUDGET: f64 = 2e9;

pub(crate) fn check_cost(r: usize, free: usize, m: usize, calls: usize) -> Result<()> {
    if r > TENSOR_MAX_ARITY {
        return Err(Error::ArityTooLarge {
            arity: r,
            limit: TENSOR_MAX_ARITY,
        });
    }
    let cost = (m as f64).powi(free as i32) * calls as f64;
    if cost > TENSOR_BUDGET {
        return Err(Error::Unsupported(format!(
            "tensor quadrature needs {cost:.2e} kernel evaluations; use a coarser grid"
        )));
    }
    Ok(())
}

/// `sum over grid tuples of the free positions of prod_i w(y_i) g_i(y_i) * h(kernel(x))`,
/// with `fixed` positions pinned to grid nodes and `h` applied to the kernel value
/// together with the free node indices.
pub(crate) fn tensor_sum<H>(
    kernel: &KernelFunction,
    r: usize,
    fixed: &[(usize, usize)],
    weights: &[Option<&[f64]>],
    grid: &Grid,
    mut h: H,
) -> f64
where
    H: FnMut(f64, &[usize]) -> f64,
{
    let m = grid.len();
    let mut xs = vec![0.0; r];
    let mut is_fixed = vec![false; r];
    for &(p, node) in fixed {
        xs[p] = grid.nodes[node];
        is_fixed[p] = true;
    }
    let free: Vec<usize> = (0..r).filter(|p| !is_fixed[*p]).collect();
    let mut idx = vec![0usize; free.len()];
    let mut total = 0.0;
    if m == 0 {
        return 0.0;
    }
    loop {
        let mut w = 1.0;
        for (slot, &p) in free.iter().enumerate() {
            let node = idx[slot];
            xs[p] = grid.nodes[node];
            w *= grid.weights[node] * weights[p].map_or(1.0, |g| g[node]);
        }
        if w != 0.0 {
            let v = kernel.eval(&xs);
            if v != 0.0 {
                total += w * h(v, &idx);
            }
        }
        // odometer
        let mut k = free.len();
        loop {
            if k == 0 {
                return total;
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
