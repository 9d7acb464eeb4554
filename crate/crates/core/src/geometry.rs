//! The directional order `a ≿^q b ⇔ ⟨a,q⟩ ≥ ⟨b,q⟩`, the half-space
//! `K = {y : ⟨y,q⟩ ≥ 0}` and the product set `K × ℝⁿ`.
//!
//! For the half-space the projection, distance and Hessian of the squared
//! distance have closed forms:
//!
//! ```text
//! Π_K(y) = y + ⟨y,q⟩⁻ q,   d_K(y) = ⟨y,q⟩⁻,   D²d²_K(y) = 2 q qᵀ 1{⟨y,q⟩ < 0}
//! ```
//!
//! [`projection_oracle`] recomputes the boundary projection by solving the
//! bordered linear system directly and serves as an independent check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{EvalError, Generator};
use crate::linalg::{dot, lu_solve, norm, Mat};
use crate::scalar::Real;

/// Largest dimension accepted by the dense projection oracle.
pub const ORACLE_MAX_DIM: usize = 64;
/// `|⟨y,q⟩|` below this is treated as on the boundary hyperplane.
pub const BOUNDARY_EPS: f64 = 1e-14;
const ZERO_NORM: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("direction vector has zero norm")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point lies on the boundary hyperplane (⟨y,q⟩ = {0:e}); d²_K is not twice differentiable there")]
    OnBoundary(f64),
    #[error("point is inside K (⟨y,q⟩ = {0:e}); the boundary system needs ⟨y,q⟩ < 0")]
    NotBinding(f64),
    #[error("projection system is singular")]
    SingularSystem,
    #[error("dimension {0} exceeds the dense-oracle limit {ORACLE_MAX_DIM}")]
    TooLarge(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn check_dim(expected: usize, got: usize) -> Result<(), GeometryError> {
    if expected == got {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, got })
    }
}

/// Unit vector `q` defining the order `≿^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction<T> {
    q: Vec<T>,
}

impl<T: Real> Direction<T> {
    /// Normalizes `v`. The induced order is unchanged by positive scaling.
    pub fn new(v: &[T]) -> Result<Self, GeometryError> {
        let len = norm(v);
        if v.is_empty() || !len.is_finite() || len <= T::lit(ZERO_NORM) {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Direction { q: v.iter().map(|&x| x / len).collect() })
    }

    /// `(1/√n, …, 1/√n)`.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "uniform direction needs n >= 1");
        let c = T::one() / T::lit(n as f64).sqrt();
        Direction { q: vec![c; n] }
    }

    /// Coordinate direction `e_i` (zero-based `i`).
    pub fn unit(n: usize, i: usize) -> Self {
        assert!(i < n, "coordinate {i} out of range for n = {n}");
        let mut q = vec![T::zero(); n];
        q[i] = T::one();
        Direction { q }
    }

    pub fn negated(&self) -> Self {
        Direction { q: self.q.iter().map(|&x| -x).collect() }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.q
    }

    /// `⟨y, q⟩`.
    pub fn inner(&self, y: &[T]) -> Result<T, GeometryError> {
        check_dim(self.dim(), y.len())?;
        Ok(dot(y, &self.q))
    }

    /// `a ≿^q b`.
    pub fn ge(&self, a: &[T], b: &[T]) -> Result<bool, GeometryError> {
        Ok(self.inner(a)? >= self.inner(b)?)
    }

    /// An orthonormal basis of `q^⊥` (Gram–Schmidt over the coordinate
    /// axes, skipping the one most aligned with `q`).
    pub fn orthogonal_basis(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let skip = (0..n)
            .max_by(|&a, &b| self.q[a].abs().partial_cmp(&self.q[b].abs()).expect("finite"))
            .expect("n >= 1");
        let mut basis: Vec<Vec<T>> = vec![self.q.clone()];
        for i in (0..n).filter(|&i| i != skip) {
            let mut v = vec![T::zero(); n];
            v[i] = T::one();
            for b in &basis {
                let c = dot(&v, b);
                for (vk, &bk) in v.iter_mut().zip(b) {
                    *vk -= c * bk;
                }
            }
            let len = norm(&v);
            basis.push(v.into_iter().map(|x| x / len).collect());
        }
        basis.remove(0);
        basis
    }
}

/// `a ≿^q b`.
pub fn order_ge<T: Real>(q: &Direction<T>, a: &[T], b: &[T]) -> Result<bool, GeometryError> {
    q.ge(a, b)
}

/// `D²d²_K(y)` together with the indicator `1{⟨y_block,q⟩ < 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredDistanceHessian<T> {
    pub matrix: Mat<T>,
    pub active: bool,
}

/// `⟨H z, z⟩ = Σ_{i,j} H_ij ⟨z_i, z_j⟩` with `z_i` the rows of `z`.
pub fn quad_form<T: Real>(h: &SquaredDistanceHessian<T>, z: &Mat<T>) -> Result<T, GeometryError> {
    check_dim(h.matrix.rows(), z.rows())?;
    if !h.active {
        return Ok(T::zero());
    }
    let n = z.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            let hij = h.matrix.get(i, j);
            if hij != T::zero() {
                acc += hij * dot(z.row(i), z.row(j));
            }
        }
    }
    Ok(acc)
}

/// Closed convex set with projection, distance and squared-distance Hessian.
pub trait ConvexGeometry<T: Real> {
    /// Ambient dimension.
    fn dim(&self) -> usize;
    fn project(&self, y: &[T]) -> Result<Vec<T>, GeometryError>;
    fn dist(&self, y: &[T]) -> Result<T, GeometryError>;
    /// Defined only where `d²_K` is twice differentiable.
    fn hess_sq_dist(&self, y: &[T]) -> Result<SquaredDistanceHessian<T>, GeometryError>;
}

/// `K = {y : ⟨y_block, q⟩ ≥ 0}` where `y_block` is `n` consecutive
/// coordinates starting at `block_offset`. With `ambient = n` this is the
/// plain half-space; with `ambient = 2n`, `block_offset = 0` it is
/// `{x ≿^q 0} × ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace<T> {
    direction: Direction<T>,
    block_offset: usize,
    ambient: usize,
}

impl<T: Real> HalfSpace<T> {
    pub fn new(direction: Direction<T>) -> Self {
        let ambient = direction.dim();
        HalfSpace { direction, block_offset: 0, ambient }
    }

    /// `{x ≿^q 0} × ℝⁿ ⊂ ℝ²ⁿ`.
    pub fn product(direction: Direction<T>) -> Self {
        let ambient = 2 * direction.dim();
        HalfSpace { direction, block_offset: 0, ambient }
    }

    pub fn with_layout(direction: Direction<T>, block_offset: usize, ambient: usize) -> Self {
        assert!(block_offset + direction.dim() <= ambient, "block exceeds ambient dimension");
        HalfSpace { direction, block_offset, ambient }
    }

    pub fn direction(&self) -> &Direction<T> {
        &self.direction
    }

    pub fn block_offset(&self) -> usize {
        self.block_offset
    }

    fn block<'a>(&self, y: &'a [T]) -> Result<&'a [T], GeometryError> {
        check_dim(self.ambient, y.len())?;
        Ok(&y[self.block_offset..self.block_offset + self.direction.dim()])
    }

    /// `⟨y_block, q⟩`.
    pub fn level(&self, y: &[T]) -> Result<T, GeometryError> {
        Ok(dot(self.block(y)?, self.direction.as_slice()))
    }

    pub fn contains(&self, y: &[T]) -> Result<bool, GeometryError> {
        Ok(self.level(y)? >= T::zero())
    }
}

impl<T: Real> ConvexGeometry<T> for HalfSpace<T> {
    fn dim(&self) -> usize {
        self.ambient
    }

    fn project(&self, y: &[T]) -> Result<Vec<T>, GeometryError> {
        let shift = self.level(y)?.neg_part();
        let mut out = y.to_vec();
        if shift > T::zero() {
            for (o, &qk) in out[self.block_offset..].iter_mut().zip(self.direction.as_slice()) {
                *o += shift * qk;
            }
        }
        Ok(out)
    }

    fn dist(&self, y: &[T]) -> Result<T, GeometryError> {
        Ok(self.level(y)?.neg_part())
    }

    fn hess_sq_dist(&self, y: &[T]) -> Result<SquaredDistanceHessian<T>, GeometryError> {
        let level = self.level(y)?;
        if level.abs() < T::lit(BOUNDARY_EPS) {
            return Err(GeometryError::OnBoundary(level.as_f64()));
        }
        let active = level < T::zero();
        let mut matrix = Mat::zeros(self.ambient, self.ambient);
        if active {
            let q = self.direction.as_slice();
            let o = self.block_offset;
            for (i, &qi) in q.iter().enumerate() {
                for (j, &qj) in q.iter().enumerate() {
                    matrix.set(o + i, o + j, T::lit(2.0) * qi * qj);
                }
            }
        }
        Ok(SquaredDistanceHessian { matrix, active })
    }
}

pub fn project_halfspace<T: Real>(geo: &HalfSpace<T>, y: &[T]) -> Result<Vec<T>, GeometryError> {
    geo.project(y)
}

pub fn dist_halfspace<T: Real>(geo: &HalfSpace<T>, y: &[T]) -> Result<T, GeometryError> {
    geo.dist(y)
}

pub fn hess_sq_dist<T: Real>(geo: &HalfSpace<T>, y: &[T]) -> Result<SquaredDistanceHessian<T>, GeometryError> {
    geo.hess_sq_dist(y)
}

/// Boundary projection by direct solution of
///
/// ```text
/// [ I   -q ] [u]   [y]
/// [ qᵀ   0 ] [d] = [0]
/// ```
///
/// i.e. `⟨u,q⟩ = 0`, `u − d q = y`. Returns `(u, d)`.
pub fn projection_oracle<T: Real>(q: &Direction<T>, y: &[T]) -> Result<(Vec<T>, T), GeometryError> {
    let n = q.dim();
    check_dim(n, y.len())?;
    if n > ORACLE_MAX_DIM {
        return Err(GeometryError::TooLarge(n));
    }
    let level = q.inner(y)?;
    if level >= T::zero() {
        return Err(GeometryError::NotBinding(level.as_f64()));
    }
    let m = n + 1;
    let mut a = vec![T::zero(); m * m];
    for (i, &qi) in q.as_slice().iter().enumerate() {
        a[i * m + i] = T::one();
        a[i * m + n] = -qi;
        a[n * m + i] = qi;
    }
    let mut b = y.to_vec();
    b.push(T::zero());
    let x = lu_solve(m, &a, &b).ok_or(GeometryError::SingularSystem)?;
    let d = x[n];
    Ok((x[..n].to_vec(), d))
}

/// Both sides of the viability inequality
///
/// ```text
/// 4⟨y − Π_K(y), g(t, Π_K(y), z)⟩ ≤ ⟨D²d²_K(y) z, z⟩ + C d²_K(y)
/// ```
///
/// at one point. The inequality holds there iff `lhs ≤ rhs`.
pub fn bsvp_lhs_rhs<T: Real, G: ConvexGeometry<T>>(
    geo: &G,
    g: &Generator,
    t: T,
    y: &[T],
    z: &Mat<T>,
    c: T,
) -> Result<(T, T), GeometryError> {
    check_dim(geo.dim(), g.n())?;
    let hess = geo.hess_sq_dist(y)?;
    let proj = geo.project(y)?;
    let gp = g.eval(t, &proj, z)?;
    let offset: Vec<T> = y.iter().zip(&proj).map(|(&a, &b)| a - b).collect();
    let lhs = T::lit(4.0) * dot(&offset, &gp);
    let dist = geo.dist(y)?;
    let rhs = quad_form(&hess, z)? + c * dist * dist;
    Ok((lhs, rhs))
}
