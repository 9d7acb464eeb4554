use super::{BsdeSpec, SolverError, TimeGrid};
use crate::linalg::{axpy, Mat};
use crate::scalar::Real;

/// Deterministic solution: `Y` on the grid, `Z ≡ 0`.
#[derive(Debug, Clone)]
pub struct OdeSolution<T> {
    pub grid: TimeGrid<T>,
    pub n: usize,
    pub d: usize,
    values: Vec<Vec<T>>,
    zero_z: Vec<T>,
}

impl<T: Real> OdeSolution<T> {
    pub fn y(&self, k: usize) -> &[T] {
        &self.values[k]
    }

    /// The control, identically zero (row-major `n × d`).
    pub fn z(&self) -> &[T] {
        &self.zero_z
    }
}

/// With constant terminal data the solution has `Z ≡ 0` and `Y` solves
/// `dY/dt = −g(t, Y, 0)`, `Y(u) = ξ`. Integrated backward with classical
/// RK4.
pub fn solve_ode<T: Real>(spec: &BsdeSpec, grid: &TimeGrid<T>) -> Result<OdeSolution<T>, SolverError> {
    if !spec.terminal.is_constant() {
        return Err(SolverError::NotDeterministic);
    }
    let (n, d) = (spec.n, spec.d);
    let g = &spec.generator;
    let z = Mat::zeros(n, d);
    let f = |t: T, y: &[T]| g.eval(t, y, &z);
    let h = grid.dt();
    let half = h / T::lit(2.0);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);

    let steps = grid.steps();
    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = spec.terminal.eval(&vec![T::zero(); d])?;
    for k in (0..steps).rev() {
        let t1 = grid.time(k + 1);
        let y = &values[k + 1];
        let k1 = f(t1, y)?;
        let k2 = f(t1 - half, &axpy(y, half, &k1))?;
        let k3 = f(t1 - half, &axpy(y, half, &k2))?;
        let k4 = f(grid.time(k), &axpy(y, h, &k3))?;
        let next: Vec<T> = (0..n)
            .map(|i| y[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
            .collect();
        values[k] = next;
    }
    Ok(OdeSolution { grid: *grid, n, d, values, zero_z: vec![T::zero(); n * d] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{builtin, Generator, TerminalFn};

    #[test]
    fn zero_driver_keeps_terminal() {
        let spec = BsdeSpec::new(Generator::zero(2, 1), TerminalFn::constant(&[1.5, -2.0], 1), 1.0).unwrap();
        let sol = solve_ode(&spec, &TimeGrid::new(1.0_f64, 10).unwrap()).unwrap();
        for k in 0..=10 {
            assert_eq!(sol.y(k), &[1.5, -2.0]);
        }
        assert_eq!(sol.z(), &[0.0, 0.0]);
    }

    #[test]
    fn row_norm_system_closed_form() {
        // Y1(t) = e^{u-t} - 1, Y2 ≡ 1 for ξ = (0, 1).
        let spec = BsdeSpec::new(builtin("ex32_g").unwrap(), TerminalFn::constant(&[0.0, 1.0], 1), 1.0).unwrap();
        let sol = solve_ode(&spec, &TimeGrid::new(1.0_f64, 200).unwrap()).unwrap();
        for k in 0..=200 {
            let t = sol.grid.time(k);
            assert!((sol.y(k)[0] - ((1.0 - t).exp() - 1.0)).abs() < 1e-9);
            assert_eq!(sol.y(k)[1], 1.0);
        }
        let spec = BsdeSpec::new(builtin("ex32_g").unwrap(), TerminalFn::constant(&[0.0, 0.0], 1), 1.0).unwrap();
        let sol = solve_ode(&spec, &TimeGrid::new(1.0_f64, 16).unwrap()).unwrap();
        assert_eq!(sol.y(0), &[0.0, 0.0]);
    }

    #[test]
    fn fourth_order_convergence() {
        let spec = BsdeSpec::new(builtin("ex32_g").unwrap(), TerminalFn::constant(&[0.0, 1.0], 1), 1.0).unwrap();
        let exact = std::f64::consts::E - 1.0;
        let err = |n| (solve_ode(&spec, &TimeGrid::new(1.0_f64, n).unwrap()).unwrap().y(0)[0] - exact).abs();
        let ratio = err(8) / err(16);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_random_terminal() {
        let spec = BsdeSpec::new(Generator::zero(1, 1), TerminalFn::parse(1, 1, &["w1"]).unwrap(), 1.0).unwrap();
        assert_eq!(solve_ode(&spec, &TimeGrid::new(1.0_f64, 4).unwrap()).unwrap_err(), SolverError::NotDeterministic);
    }
}
