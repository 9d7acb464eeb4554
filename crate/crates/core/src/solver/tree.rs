use rayon::prelude::*;

use super::{picard_step, BsdeSpec, SolverError, TimeGrid, PICARD_TOL};
use crate::linalg::Mat;
use crate::scalar::Real;

/// Leaf-count guard: `2^{dN}` may not exceed this.
pub const MAX_TREE_LEAVES: u128 = 1 << 24;

/// Backward induction on the non-recombining `±√Δt` tree.
///
/// Level `k` holds `2^{dk}` nodes. Child `c ∈ [0, 2^d)` of node `i` is node
/// `i·2^d + c`; bit `j` of `c` selects the increment sign of Brownian
/// coordinate `j` (0 → `+√Δt`, 1 → `−√Δt`).
#[derive(Debug, Clone)]
pub struct TreeSolution<T> {
    pub grid: TimeGrid<T>,
    pub n: usize,
    pub d: usize,
    y: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
    /// Largest Picard iteration count per non-terminal level.
    pub picard_iters: Vec<usize>,
}

impl<T: Real> TreeSolution<T> {
    pub fn node_count(&self, level: usize) -> usize {
        1 << (self.d * level)
    }

    pub fn y(&self, level: usize, node: usize) -> &[T] {
        &self.y[level][node * self.n..(node + 1) * self.n]
    }

    pub fn root(&self) -> &[T] {
        self.y(0, 0)
    }

    /// `Z` at a non-terminal node (row-major `n × d`).
    pub fn z(&self, level: usize, node: usize) -> Option<&[T]> {
        let nd = self.n * self.d;
        self.z.get(level).map(|l| &l[node * nd..(node + 1) * nd])
    }

    /// `Z` at any node; terminal nodes report their parent's value.
    pub fn z_reported(&self, level: usize, node: usize) -> &[T] {
        match self.z(level, node) {
            Some(z) => z,
            None => self.z(level - 1, node >> self.d).expect("parent level exists"),
        }
    }

    /// Brownian state `W(node)`: the sum of increments along the path.
    pub fn w(&self, level: usize, node: usize) -> Vec<T> {
        let sq = self.grid.dt().sqrt();
        let branch = 1usize << self.d;
        let mut w = vec![T::zero(); self.d];
        let mut idx = node;
        for _ in 0..level {
            let c = idx % branch;
            idx /= branch;
            for (j, wj) in w.iter_mut().enumerate() {
                if c >> j & 1 == 0 {
                    *wj += sq;
                } else {
                    *wj -= sq;
                }
            }
        }
        w
    }
}

pub fn solve_tree<T: Real>(spec: &BsdeSpec, grid: &TimeGrid<T>) -> Result<TreeSolution<T>, SolverError> {
    solve_tree_with_tol(spec, grid, T::lit(PICARD_TOL))
}

pub(crate) fn solve_tree_with_tol<T: Real>(
    spec: &BsdeSpec,
    grid: &TimeGrid<T>,
    tol: T,
) -> Result<TreeSolution<T>, SolverError> {
    let (n, d, steps) = (spec.n, spec.d, grid.steps());
    let exponent = (d as u128) * (steps as u128);
    if exponent > 24 {
        let leaves = if exponent >= 127 { u128::MAX } else { 1u128 << exponent };
        return Err(SolverError::TooLarge { leaves });
    }
    let branch = 1usize << d;
    let dt = grid.dt();
    let sq = dt.sqrt();

    // Terminal layer: propagate W level by level, then apply ξ.
    let mut w_level = vec![T::zero(); d];
    for _ in 0..steps {
        let parents = w_level.len() / d;
        let mut next = vec![T::zero(); parents * branch * d];
        next.par_chunks_mut(branch * d).enumerate().for_each(|(p, out)| {
            let wp = &w_level[p * d..(p + 1) * d];
            for c in 0..branch {
                for j in 0..d {
                    let s = if c >> j & 1 == 0 { sq } else { -sq };
                    out[c * d + j] = wp[j] + s;
                }
            }
        });
        w_level = next;
    }
    let mut y_levels: Vec<Vec<T>> = vec![Vec::new(); steps + 1];
    let mut terminal = vec![T::zero(); (1usize << (d * steps)) * n];
    terminal
        .par_chunks_mut(n)
        .zip(w_level.par_chunks(d))
        .try_for_each(|(out, w)| spec.terminal.eval_into(w, out))?;
    y_levels[steps] = terminal;

    let mut z_levels: Vec<Vec<T>> = vec![Vec::new(); steps];
    let mut picard_iters = vec![0usize; steps];
    let inv_branch = T::one() / T::lit(branch as f64);
    let g = &spec.generator;
    for k in (0..steps).rev() {
        let nodes = 1usize << (d * k);
        let t = grid.time(k);
        let next = &y_levels[k + 1];
        let mut y_out = vec![T::zero(); nodes * n];
        let mut z_out = vec![T::zero(); nodes * n * d];
        let iters = y_out
            .par_chunks_mut(n)
            .zip(z_out.par_chunks_mut(n * d))
            .enumerate()
            .map(|(i, (y, zbuf))| {
                let mut mean = vec![T::zero(); n];
                for c in 0..branch {
                    let child = &next[(i * branch + c) * n..(i * branch + c + 1) * n];
                    for r in 0..n {
                        mean[r] += child[r];
                        for j in 0..d {
                            let v = child[r];
                            let slot = &mut zbuf[r * d + j];
                            if c >> j & 1 == 0 {
                                *slot += v;
                            } else {
                                *slot -= v;
                            }
                        }
                    }
                }
                for m in mean.iter_mut() {
                    *m *= inv_branch;
                }
                // E[Y ΔW_j] / Δt = (Σ ±Y) / 2^d · √Δt / Δt
                for v in zbuf.iter_mut() {
                    *v = *v * inv_branch / sq;
                }
                let z = Mat::from_rows(n, d, zbuf.to_vec());
                let mut scratch = vec![T::zero(); n];
                picard_step(g, t, dt, &mean, &z, tol, y, &mut scratch)
            })
            .try_reduce(|| 0, |a, b| Ok(a.max(b)))?;
        picard_iters[k] = iters;
        y_levels[k] = y_out;
        z_levels[k] = z_out;
    }
    Ok(TreeSolution { grid: *grid, n, d, y: y_levels, z: z_levels, picard_iters })
}
