//! Stiefel manifold primitives.
//!
//! `St(d, r) = { x in R^{d x r} : x^T x = I_r }` with the metric inherited from
//! the Frobenius inner product. Tangent space at `x`:
//!
//! ```text
//! T_x St = { v : x^T v + v^T x = 0 }
//! P_x(y) = y - x sym(x^T y)
//! ```
//!
//! The only retraction provided is the polar one,
//! `R_x(v) = (x + v)(I_r + v^T v)^{-1/2}`, which is also the nearest point of
//! `St(d, r)` to `x + v`. Consensus quantities (induced arithmetic mean,
//! mean-square and max deviations, the contraction region) live on
//! [`SwarmState`].

use nalgebra::{DMatrix, SymmetricEigen, QR, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Max-abs tolerance on `x^T x - I` accepted at construction.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// Max-abs tolerance on `x^T v + v^T x`, relative to `max(1, max|v|)`.
pub const TANGENT_TOL: f64 = 1e-10;

/// Relative rank threshold used when projecting a matrix onto the manifold.
pub const RANK_TOL: f64 = 1e-12;

/// A `d x r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    data: DMatrix<f64>,
}

impl StiefelPoint {
    /// Validates `d >= r >= 1` and `x^T x = I_r` to [`ORTHONORMAL_TOL`].
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_shape(&data)?;
        let deviation = orthonormality_error(&data);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal {
                deviation,
                tolerance: ORTHONORMAL_TOL,
            });
        }
        Ok(Self { data })
    }

    /// Builds a point from column-major entries.
    pub fn from_column_slice(d: usize, r: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * r {
            return Err(Error::dims("StiefelPoint", d * r, entries.len()));
        }
        Self::new(DMatrix::from_column_slice(d, r, entries))
    }

    /// Orthogonal projection of an arbitrary `d x r` matrix onto `St(d, r)`,
    /// i.e. the polar factor `U V^T` of its thin SVD.
    pub fn project(m: &DMatrix<f64>) -> Result<Self> {
        check_shape(m)?;
        let svd = SVD::new(m.clone(), true, true);
        let (largest, smallest) = extreme_singular_values(&svd.singular_values);
        if !(largest > 0.0) || smallest < RANK_TOL * largest {
            return Err(Error::DegenerateMean { smallest, largest });
        }
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        Ok(Self::from_orthonormal(u * v_t))
    }

    /// Orthonormal basis of the column space of `m` via thin QR, with column
    /// signs fixed so that `diag(R) > 0`.
    pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Self> {
        check_shape(m)?;
        let r = m.ncols();
        let qr = QR::new(m.clone());
        let rmat = qr.r();
        let largest = rmat.diagonal().amax();
        if !(largest > 0.0) || (0..r).any(|j| rmat[(j, j)].abs() < RANK_TOL * largest) {
            return Err(Error::param("matrix", "columns are linearly dependent"));
        }
        let mut q = qr.q();
        for j in 0..r {
            if rmat[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Ok(Self::from_orthonormal(q))
    }

    pub(crate) fn from_orthonormal(data: DMatrix<f64>) -> Self {
        debug_assert!(
            orthonormality_error(&data) <= ORTHONORMAL_TOL,
            "orthonormality drift {:e}",
            orthonormality_error(&data)
        );
        Self { data }
    }

    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    pub fn r(&self) -> usize {
        self.data.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// `max |x^T x - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.data)
    }
}

/// A `d x r` matrix in the tangent space of its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: StiefelPoint,
    data: DMatrix<f64>,
}

impl TangentVector {
    /// Validates shape and the tangency constraint.
    pub fn new(base: StiefelPoint, data: DMatrix<f64>) -> Result<Self> {
        if base.dims() != data.shape() {
            return Err(Error::dims(
                "TangentVector",
                format!("{:?}", base.dims()),
                format!("{:?}", data.shape()),
            ));
        }
        let deviation = tangency_error(&base.data, &data);
        let tolerance = TANGENT_TOL * data.amax().max(1.0);
        if deviation > tolerance {
            return Err(Error::NotTangent {
                deviation,
                tolerance,
            });
        }
        Ok(Self { base, data })
    }

    pub fn zero(base: &StiefelPoint) -> Self {
        let (d, r) = base.dims();
        Self {
            base: base.clone(),
            data: DMatrix::zeros(d, r),
        }
    }

    pub fn base(&self) -> &StiefelPoint {
        &self.base
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    /// `a * self + b * other`; both must share the base point.
    pub fn combine(&self, a: f64, other: &TangentVector, b: f64) -> Result<TangentVector> {
        if self.base != other.base {
            return Err(Error::Contract(
                "tangent vectors attached to different base points".into(),
            ));
        }
        Ok(TangentVector {
            base: self.base.clone(),
            data: &self.data * a + &other.data * b,
        })
    }

    pub fn scale(&self, a: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            data: &self.data * a,
        }
    }
}

/// `P_x(y) = y - 1/2 x (x^T y + y^T x)`.
pub fn project_to_tangent(x: &StiefelPoint, y: &DMatrix<f64>) -> Result<TangentVector> {
    if x.dims() != y.shape() {
        return Err(Error::dims(
            "project_to_tangent",
            format!("{:?}", x.dims()),
            format!("{:?}", y.shape()),
        ));
    }
    Ok(TangentVector {
        base: x.clone(),
        data: tangent_part(&x.data, y),
    })
}

pub(crate) fn tangent_part(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let xty = x.tr_mul(y);
    let sym = (&xty + xty.transpose()) * 0.5;
    y - x * sym
}

/// Riemannian gradient under the embedded metric: the tangent projection of
/// the Euclidean gradient.
pub fn riemannian_gradient(x: &StiefelPoint, egrad: &DMatrix<f64>) -> Result<TangentVector> {
    project_to_tangent(x, egrad)
}

/// Polar retraction `R_x(v) = (x + v)(I + v^T v)^{-1/2}`.
pub fn polar_retract(x: &StiefelPoint, xi: &TangentVector) -> Result<StiefelPoint> {
    if xi.base() != x {
        return Err(Error::Contract(
            "retraction direction is not attached to the given point".into(),
        ));
    }
    Ok(retract_ambient(&x.data, &xi.data))
}

/// Polar retraction on raw matrices; `xi` is assumed tangent at `x`.
pub(crate) fn retract_ambient(x: &DMatrix<f64>, xi: &DMatrix<f64>) -> StiefelPoint {
    let m = x + xi;
    // For tangent xi, m^T m = I + xi^T xi up to round-off; the computed Gram
    // is used since it keeps the result orthonormal to machine precision.
    let gram = m.tr_mul(&m);
    let eig = SymmetricEigen::new(gram);
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let q = &m * (&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose());
    if orthonormality_error(&q) <= ORTHONORMAL_TOL {
        return StiefelPoint { data: q };
    }
    // Ill-conditioned Gram (very long steps): fall back to the SVD polar factor.
    let svd = SVD::new(m, true, true);
    StiefelPoint::from_orthonormal(svd.u.expect("u requested") * svd.v_t.expect("v_t requested"))
}

/// Uniformly distributed point of `St(d, r)`: thin QR of a standard Gaussian
/// matrix with `diag(R) > 0`.
pub fn random_stiefel<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<StiefelPoint> {
    if r == 0 || d < r {
        return Err(Error::dims("random_stiefel", "d >= r >= 1", format!("d={d}, r={r}")));
    }
    loop {
        let g = gaussian_matrix(d, r, rng);
        // Rank deficiency has probability zero; redraw if it ever happens.
        if let Ok(p) = StiefelPoint::orthonormalize(&g) {
            return Ok(p);
        }
    }
}

/// Random tangent vector at `x` with Frobenius norm `scale`; zero on
/// `St(1, 1)`, whose tangent space is trivial.
pub fn random_tangent<R: Rng + ?Sized>(x: &StiefelPoint, scale: f64, rng: &mut R) -> TangentVector {
    let (d, r) = x.dims();
    if d * r == r * (r + 1) / 2 {
        return TangentVector::zero(x);
    }
    loop {
        let g = gaussian_matrix(d, r, rng);
        let data = tangent_part(&x.data, &g);
        let norm = data.norm();
        if norm > 0.0 {
            return TangentVector {
                base: x.clone(),
                data: data * (scale / norm),
            };
        }
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let entries: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(rows, cols, entries)
}

/// Validated radii of the local consensus region `N = N1 ∩ N2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusRegionParams {
    delta1: f64,
    delta2: f64,
    r: usize,
}

impl ConsensusRegionParams {
    /// Requires `0 < delta1 <= delta2 / (5 sqrt(r))` and `0 < delta2 <= 1/6`.
    pub fn new(delta1: f64, delta2: f64, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::param("r", "must be at least 1"));
        }
        if !(delta2 > 0.0 && delta2 <= 1.0 / 6.0 * (1.0 + 1e-12)) {
            return Err(Error::param("delta2", format!("{delta2} not in (0, 1/6]")));
        }
        let cap = delta2 / (5.0 * (r as f64).sqrt());
        if !(delta1 > 0.0 && delta1 <= cap * (1.0 + 1e-12)) {
            return Err(Error::param(
                "delta1",
                format!("{delta1} not in (0, delta2/(5 sqrt r)] = (0, {cap}]"),
            ));
        }
        Ok(Self { delta1, delta2, r })
    }

    /// Largest admissible region for a given `delta2`: `delta1 = delta2 / (5 sqrt r)`.
    pub fn widest(delta2: f64, r: usize) -> Result<Self> {
        Self::new(delta2 / (5.0 * (r.max(1) as f64).sqrt()), delta2, r)
    }

    /// `delta2 = 1/6`, `delta1 = 1/(30 sqrt r)`.
    pub fn default_for(r: usize) -> Result<Self> {
        Self::widest(1.0 / 6.0, r)
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn r(&self) -> usize {
        self.r
    }
}

/// Outcome of a membership test for `N = N1 ∩ N2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCheck {
    pub inside: bool,
    /// `n delta1^2 - ||x - xbar||^2`; negative when outside `N1`.
    pub mean_square_margin: f64,
    /// `delta2 - max_i ||x_i - xbar||`; negative when outside `N2`.
    pub max_margin: f64,
}

/// Consensus measures computed against the induced arithmetic mean.
#[derive(Debug, Clone)]
pub struct ConsensusSnapshot {
    pub mean: StiefelPoint,
    /// `(1/n) sum_i ||x_i - xbar||^2`.
    pub consensus_err_sq: f64,
    /// `max_i ||x_i - xbar||`.
    pub linf_err: f64,
}

/// Ordered local variables of `n` agents sharing one `(d, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    points: Vec<StiefelPoint>,
}

impl SwarmState {
    pub fn new(points: Vec<StiefelPoint>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::param("points", "a swarm needs at least one agent"))?;
        let dims = first.dims();
        if let Some(p) = points.iter().find(|p| p.dims() != dims) {
            return Err(Error::dims(
                "SwarmState",
                format!("{dims:?}"),
                format!("{:?}", p.dims()),
            ));
        }
        Ok(Self { points })
    }

    /// `n` copies of the same point.
    pub fn replicate(point: &StiefelPoint, n: usize) -> Result<Self> {
        Self::new(vec![point.clone(); n])
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.points[0].dims()
    }

    pub fn points(&self) -> &[StiefelPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<StiefelPoint> {
        self.points
    }

    /// `xhat = (1/n) sum_i x_i`, summed in agent order.
    pub fn euclidean_mean(&self) -> DMatrix<f64> {
        let (d, r) = self.dims();
        let mut acc = DMatrix::zeros(d, r);
        for p in &self.points {
            acc += &p.data;
        }
        acc / self.n() as f64
    }

    /// `xbar = argmin_{y in St} sum_i ||y - x_i||^2`, the polar factor of the
    /// Euclidean mean. Fails when the mean is numerically rank deficient.
    pub fn induced_arithmetic_mean(&self) -> Result<StiefelPoint> {
        StiefelPoint::project(&self.euclidean_mean())
    }

    pub fn consensus_snapshot(&self) -> Result<ConsensusSnapshot> {
        let mean = self.induced_arithmetic_mean()?;
        let (sum_sq, max) = self.deviation_from(&mean);
        Ok(ConsensusSnapshot {
            mean,
            consensus_err_sq: sum_sq / self.n() as f64,
            linf_err: max,
        })
    }

    /// `(sum_i ||x_i - y||^2, max_i ||x_i - y||)`.
    pub fn deviation_from(&self, y: &StiefelPoint) -> (f64, f64) {
        self.points.iter().fold((0.0, 0.0_f64), |(sum, max), p| {
            let e = (&p.data - &y.data).norm();
            (sum + e * e, max.max(e))
        })
    }

    /// `||x - xbar||_F` over the stacked variable.
    pub fn stacked_deviation(&self) -> Result<f64> {
        let mean = self.induced_arithmetic_mean()?;
        Ok(self.deviation_from(&mean).0.sqrt())
    }

    /// `(1/n) ||x - xbar||^2`.
    pub fn consensus_error_sq(&self) -> Result<f64> {
        Ok(self.consensus_snapshot()?.consensus_err_sq)
    }

    /// `max_i ||x_i - xbar||_F`.
    pub fn linf_consensus_error(&self) -> Result<f64> {
        Ok(self.consensus_snapshot()?.linf_err)
    }

    /// Membership in `N1 ∩ N2` with both margins.
    pub fn consensus_region(&self, params: &ConsensusRegionParams) -> Result<RegionCheck> {
        let snap = self.consensus_snapshot()?;
        let n = self.n() as f64;
        let mean_square_margin = n * params.delta1 * params.delta1 - n * snap.consensus_err_sq;
        let max_margin = params.delta2 - snap.linf_err;
        Ok(RegionCheck {
            inside: mean_square_margin >= 0.0 && max_margin >= 0.0,
            mean_square_margin,
            max_margin,
        })
    }

    pub fn in_consensus_region(&self, params: &ConsensusRegionParams) -> Result<bool> {
        Ok(self.consensus_region(params)?.inside)
    }
}

fn check_shape(m: &DMatrix<f64>) -> Result<()> {
    let (d, r) = m.shape();
    if r == 0 || d < r {
        return Err(Error::dims("Stiefel point", "d >= r >= 1", format!("d={d}, r={r}")));
    }
    Ok(())
}

fn orthonormality_error(m: &DMatrix<f64>) -> f64 {
    let gram = m.tr_mul(m);
    let r = gram.nrows();
    let mut worst = 0.0_f64;
    for j in 0..r {
        for i in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

fn tangency_error(x: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let xtv = x.tr_mul(v);
    (&xtv + xtv.transpose()).amax()
}

fn extreme_singular_values(s: &nalgebra::DVector<f64>) -> (f64, f64) {
    let largest = s.iter().cloned().fold(0.0, f64::max);
    let smallest = s.iter().cloned().fold(f64::INFINITY, f64::min);
    (largest, smallest)
}
