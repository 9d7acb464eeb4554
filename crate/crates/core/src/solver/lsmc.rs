use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{picard_step, BsdeSpec, SolverError, TimeGrid, MAX_CONDITION, PICARD_TOL};
use crate::linalg::{spd_solve, Mat};
use crate::sampling::stream_rng;
use crate::scalar::Real;

/// Ridge added to the normalized Gram matrix.
pub const RIDGE: f64 = 1e-8;
const CHUNK: usize = 4096;

/// Number of monomials of total degree `≤ degree` in `d` variables.
pub fn basis_size(d: usize, degree: usize) -> usize {
    let mut c = 1usize;
    for i in 1..=degree {
        c = c * (d + i) / i;
    }
    c
}

fn exponents(d: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(d, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, degree as u32, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| e.iter().sum::<u32>());
    out
}

/// Least-squares Monte Carlo solution on `M` simulated Brownian paths.
#[derive(Debug, Clone)]
pub struct LsmcSolution<T> {
    pub grid: TimeGrid<T>,
    pub n: usize,
    pub d: usize,
    pub paths: usize,
    pub basis_degree: usize,
    pub seed: u64,
    /// Regression coefficients per step `k < N`: `basis × (n + n·d)`, the
    /// first `n` columns for `E[Y_{k+1}]`, the rest for `Z` (row-major).
    pub coefficients: Vec<Mat<T>>,
    /// Monte Carlo standard error of each `Y(0)` component, from the sample
    /// spread of `ξ + Σ_k Δt·g(t_k, Y_k, Z_k)` along the paths.
    pub std_error: Vec<T>,
    pub picard_iters: Vec<usize>,
    exps: Vec<Vec<u32>>,
    w: Vec<Vec<T>>,
    y: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
}

impl<T: Real> LsmcSolution<T> {
    pub fn y(&self, k: usize, path: usize) -> &[T] {
        &self.y[k][path * self.n..(path + 1) * self.n]
    }

    pub fn root(&self) -> &[T] {
        self.y(0, 0)
    }

    pub fn z(&self, k: usize, path: usize) -> &[T] {
        let nd = self.n * self.d;
        &self.z[k][path * nd..(path + 1) * nd]
    }

    pub fn w(&self, k: usize, path: usize) -> &[T] {
        &self.w[k][path * self.d..(path + 1) * self.d]
    }

    /// Regression features of `path` at step `k`.
    pub fn basis_at(&self, k: usize, path: usize) -> Vec<T> {
        features(&self.exps, self.w(k, path), self.grid.time(k))
    }

    /// Regression targets of `path` at step `k`: `Y_{k+1}` followed by
    /// `Y_{k+1} ΔW_kᵀ / Δt`.
    pub fn targets_at(&self, k: usize, path: usize) -> Vec<T> {
        targets(self.y(k + 1, path), self.w(k, path), self.w(k + 1, path), self.grid.dt(), self.d)
    }
}

fn features<T: Real>(exps: &[Vec<u32>], w: &[T], t: T) -> Vec<T> {
    if t <= T::zero() {
        let mut f = vec![T::zero(); exps.len()];
        f[0] = T::one();
        return f;
    }
    let s = t.sqrt();
    let x: Vec<T> = w.iter().map(|&v| v / s).collect();
    exps.iter()
        .map(|e| e.iter().zip(&x).fold(T::one(), |p, (&k, &xi)| p * xi.powi(k as i32)))
        .collect()
}

fn targets<T: Real>(y_next: &[T], w: &[T], w_next: &[T], dt: T, d: usize) -> Vec<T> {
    let n = y_next.len();
    let mut out = Vec::with_capacity(n + n * d);
    out.extend_from_slice(y_next);
    for &yr in y_next {
        for j in 0..d {
            out.push(yr * (w_next[j] - w[j]) / dt);
        }
    }
    out
}

pub fn solve_lsmc<T: Real>(
    spec: &BsdeSpec,
    grid: &TimeGrid<T>,
    paths: usize,
    basis_degree: usize,
    seed: u64,
) -> Result<LsmcSolution<T>, SolverError> {
    solve_lsmc_with_tol(spec, grid, paths, basis_degree, seed, T::lit(PICARD_TOL))
}

pub(crate) fn solve_lsmc_with_tol<T: Real>(
    spec: &BsdeSpec,
    grid: &TimeGrid<T>,
    paths: usize,
    basis_degree: usize,
    seed: u64,
    tol: T,
) -> Result<LsmcSolution<T>, SolverError> {
    let (n, d, steps) = (spec.n, spec.d, grid.steps());
    if !(1..=3).contains(&basis_degree) {
        return Err(SolverError::BadArgs(format!("basis_degree must be 1, 2 or 3, got {basis_degree}")));
    }
    let nb = basis_size(d, basis_degree);
    if paths < 10 * nb {
        return Err(SolverError::BadArgs(format!("need at least {} paths for {nb} basis functions, got {paths}", 10 * nb)));
    }
    let exps = exponents(d, basis_degree);
    let dt = grid.dt();
    let sq = dt.sqrt();

    // Path simulation, one stream per path.
    let per_path: Vec<Vec<T>> = (0..paths)
        .into_par_iter()
        .map(|m| {
            let mut rng = stream_rng(seed, m as u64);
            let mut out = vec![T::zero(); (steps + 1) * d];
            for k in 1..=steps {
                for j in 0..d {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    out[k * d + j] = out[(k - 1) * d + j] + sq * T::lit(xi);
                }
            }
            out
        })
        .collect();
    let w: Vec<Vec<T>> = (0..=steps)
        .map(|k| per_path.iter().flat_map(|p| p[k * d..(k + 1) * d].iter().copied()).collect())
        .collect();
    drop(per_path);

    let mut y: Vec<Vec<T>> = vec![Vec::new(); steps + 1];
    let mut z: Vec<Vec<T>> = vec![Vec::new(); steps];
    let mut terminal = vec![T::zero(); paths * n];
    terminal
        .par_chunks_mut(n)
        .zip(w[steps].par_chunks(d))
        .try_for_each(|(out, wm)| spec.terminal.eval_into(wm, out))?;
    y[steps] = terminal;

    let cols = n + n * d;
    let inv_m = T::one() / T::lit(paths as f64);
    let mut coefficients = vec![Mat::zeros(nb, cols); steps];
    let mut picard_iters = vec![0usize; steps];
    let g = &spec.generator;
    // Pathwise `ξ + Σ Δt·g`, whose mean is the `Y(0)` estimate.
    let mut realized = y[steps].clone();

    for k in (0..steps).rev() {
        let t = grid.time(k);
        let (wk, wn, yn) = (&w[k], &w[k + 1], &y[k + 1]);
        // Chunked sums reduced in a fixed order.
        let partial: Vec<(Vec<T>, Vec<T>)> = (0..paths)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut gram = vec![T::zero(); nb * nb];
                let mut rhs = vec![T::zero(); nb * cols];
                for &m in chunk {
                    let f = features(&exps, &wk[m * d..(m + 1) * d], t);
                    let tg = targets(&yn[m * n..(m + 1) * n], &wk[m * d..(m + 1) * d], &wn[m * d..(m + 1) * d], dt, d);
                    for a in 0..nb {
                        for b in 0..nb {
                            gram[a * nb + b] += f[a] * f[b];
                        }
                        for c in 0..cols {
                            rhs[a * cols + c] += f[a] * tg[c];
                        }
                    }
                }
                (gram, rhs)
            })
            .collect();
        let mut gram = vec![T::zero(); nb * nb];
        let mut rhs = vec![T::zero(); nb * cols];
        for (pg, pr) in &partial {
            for (a, b) in gram.iter_mut().zip(pg) {
                *a += *b;
            }
            for (a, b) in rhs.iter_mut().zip(pr) {
                *a += *b;
            }
        }
        for v in gram.iter_mut().chain(rhs.iter_mut()) {
            *v *= inv_m;
        }
        for a in 0..nb {
            gram[a * nb + a] += T::lit(RIDGE);
        }
        let beta = if k == 0 {
            // W_0 = 0: only the constant feature is informative.
            let mut b = Mat::zeros(nb, cols);
            for c in 0..cols {
                b.set(0, c, rhs[c] / gram[0]);
            }
            b
        } else {
            let sol = spd_solve(nb, &gram, &Mat::from_rows(nb, cols, rhs))
                .ok_or(SolverError::IllConditioned { step: k, condition: f64::INFINITY })?;
            if !(sol.condition <= MAX_CONDITION) {
                return Err(SolverError::IllConditioned { step: k, condition: sol.condition });
            }
            sol.solution
        };

        let mut y_out = vec![T::zero(); paths * n];
        let mut z_out = vec![T::zero(); paths * n * d];
        let iters = y_out
            .par_chunks_mut(n)
            .zip(z_out.par_chunks_mut(n * d))
            .enumerate()
            .map(|(m, (ym, zm))| {
                let f = features(&exps, &wk[m * d..(m + 1) * d], t);
                let mut fitted = vec![T::zero(); cols];
                for (a, &fa) in f.iter().enumerate() {
                    for (c, v) in fitted.iter_mut().enumerate() {
                        *v += fa * beta.get(a, c);
                    }
                }
                zm.copy_from_slice(&fitted[n..]);
                let zmat = Mat::from_rows(n, d, fitted[n..].to_vec());
                let mut scratch = vec![T::zero(); n];
                picard_step(g, t, dt, &fitted[..n], &zmat, tol, ym, &mut scratch)
            })
            .try_reduce(|| 0, |a, b| Ok(a.max(b)))?;
        // Δt·g = Y_k − fitted E[Y_{k+1}] after the Picard step.
        realized.par_chunks_mut(n).enumerate().for_each(|(m, acc)| {
            let f = features(&exps, &wk[m * d..(m + 1) * d], t);
            for (r, a) in acc.iter_mut().enumerate() {
                let fit = f.iter().enumerate().fold(T::zero(), |s, (i, &fi)| s + fi * beta.get(i, r));
                *a += y_out[m * n + r] - fit;
            }
        });
        coefficients[k] = beta;
        picard_iters[k] = iters;
        y[k] = y_out;
        z[k] = z_out;
    }

    let mf = T::lit(paths as f64);
    let std_error = (0..n)
        .map(|r| {
            let mean = (0..paths).fold(T::zero(), |s, m| s + realized[m * n + r]) / mf;
            let var = (0..paths).fold(T::zero(), |s, m| {
                let e = realized[m * n + r] - mean;
                s + e * e
            }) / T::lit((paths - 1) as f64);
            (var / mf).sqrt()
        })
        .collect();

    Ok(LsmcSolution {
        grid: *grid,
        n,
        d,
        paths,
        basis_degree,
        seed,
        coefficients,
        std_error,
        picard_iters,
        exps,
        w,
        y,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{builtin, Generator, TerminalFn};

    fn spec(g: Generator, xi: TerminalFn) -> BsdeSpec {
        BsdeSpec::new(g, xi, 1.0).unwrap()
    }

    #[test]
    fn basis_counts() {
        assert_eq!(basis_size(1, 2), 3);
        assert_eq!(basis_size(2, 2), 6);
        assert_eq!(basis_size(3, 3), 20);
        for (d, p) in [(1, 3), (2, 2), (3, 1)] {
            assert_eq!(exponents(d, p).len(), basis_size(d, p));
        }
    }

    #[test]
    fn martingale_terminal_averages_to_zero() {
        let s = spec(Generator::zero(1, 1), TerminalFn::parse(1, 1, &["w1"]).unwrap());
        let sol = solve_lsmc(&s, &TimeGrid::new(1.0_f64, 8).unwrap(), 20000, 2, 7).unwrap();
        assert!(sol.root()[0].abs() <= 3.0 * sol.std_error[0]);
        assert!((sol.std_error[0] - 1.0 / 20000f64.sqrt()).abs() < 1e-3);
        // ξ = W_1 is affine in W_k, so the regression is exact: Z ≡ 1.
        for m in (0..20000).step_by(997) {
            assert!((sol.z(3, m)[0] - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn ridge_normal_equations_hold() {
        let s = spec(builtin("ex32_g").unwrap(), TerminalFn::parse(2, 1, &["pos(w1)", "w1 * w1"]).unwrap());
        let sol = solve_lsmc(&s, &TimeGrid::new(1.0_f64, 4).unwrap(), 4000, 2, 3).unwrap();
        let k = 2;
        let nb = 3;
        let cols = 2 + 2;
        let mut gram = vec![0.0; nb * nb];
        let mut rhs = vec![0.0; nb * cols];
        for m in 0..sol.paths {
            let f = sol.basis_at(k, m);
            let tg = sol.targets_at(k, m);
            for a in 0..nb {
                for b in 0..nb {
                    gram[a * nb + b] += f[a] * f[b] / sol.paths as f64;
                }
                for c in 0..cols {
                    rhs[a * cols + c] += f[a] * tg[c] / sol.paths as f64;
                }
            }
        }
        let beta = &sol.coefficients[k];
        for c in 0..cols {
            let scale = (0..nb).map(|a| rhs[a * cols + c].abs()).fold(1e-300_f64, f64::max);
            for a in 0..nb {
                let lhs: f64 = (0..nb).map(|b| gram[a * nb + b] * beta.get(b, c)).sum::<f64>() + RIDGE * beta.get(a, c);
                assert!((lhs - rhs[a * cols + c]).abs() <= 1e-8 * scale, "row {a} col {c}");
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let s = spec(builtin("ex32_g").unwrap(), TerminalFn::parse(2, 1, &["w1", "sin(w1)"]).unwrap());
        let grid = TimeGrid::new(1.0_f64, 4).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| solve_lsmc(&s, &grid, 9000, 2, 11).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.root()[0].to_bits(), b.root()[0].to_bits());
        assert_eq!(a.root()[1].to_bits(), b.root()[1].to_bits());
        assert_eq!(a.y(2, 8123), b.y(2, 8123));
    }

    #[test]
    fn deterministic_spec_matches_closed_form() {
        let s = spec(builtin("ex32_g").unwrap(), TerminalFn::constant(&[0.0, 1.0], 1));
        let e1 = std::f64::consts::E - 1.0;
        let sol = solve_lsmc(&s, &TimeGrid::new(1.0_f64, 32).unwrap(), 20000, 2, 1).unwrap();
        // Regression noise in Z feeds |z2| with a positive bias, on top of
        // the O(Δt) scheme error.
        assert!((sol.root()[0] - e1).abs() < 0.1);
        assert!((sol.root()[1] - 1.0).abs() < 0.1);
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = spec(Generator::zero(1, 1), TerminalFn::constant(&[0.0], 1));
        let grid = TimeGrid::new(1.0_f64, 2).unwrap();
        assert!(matches!(solve_lsmc(&s, &grid, 100, 4, 0), Err(SolverError::BadArgs(_))));
        assert!(matches!(solve_lsmc(&s, &grid, 20, 2, 0), Err(SolverError::BadArgs(_))));
    }
}
