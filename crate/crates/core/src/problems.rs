//! Local objectives and the decentralized eigenvector benchmark.
//!
//! Agent `i` holds a data block `A_i` (`m_i x d`) and the local loss
//! `f_i(x) = -1/2 tr(x^T A_i^T A_i x)`. The network objective is the average
//! `f = (1/n) sum_i f_i`, minimized on `St(d, r)` by the leading `r`
//! eigenvectors of `sum_i A_i^T A_i`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rand::Rng;

use crate::error::{Error, Result};
use crate::manifold::{gaussian_matrix, project_to_tangent, StiefelPoint};

/// A smooth local loss with exact and mini-batch gradients.
pub trait LocalObjective: Send + Sync {
    /// Ambient row dimension `d`.
    fn dim(&self) -> usize;

    /// Number of local samples `m_i`.
    fn sample_count(&self) -> usize;

    fn value(&self, x: &StiefelPoint) -> Result<f64>;

    fn euclidean_grad(&self, x: &StiefelPoint) -> Result<DMatrix<f64>>;

    /// Unbiased mini-batch estimate of [`LocalObjective::euclidean_grad`]
    /// built from the samples in `batch`.
    fn stochastic_euclidean_grad(&self, x: &StiefelPoint, batch: &[usize]) -> Result<DMatrix<f64>>;
}

/// Local eigenvector loss with its Gram matrix cached.
#[derive(Debug, Clone, PartialEq)]
pub struct EigLocal {
    rows: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl EigLocal {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::param("rows", "local data block is empty"));
        }
        let g = rows.tr_mul(&rows);
        let gram = (&g + g.transpose()) * 0.5;
        Ok(Self { rows, gram })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `-1/2 tr(x^T G x)` for any `d x r` matrix.
    pub fn value_ambient(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.check(x.nrows())?;
        Ok(-0.5 * x.dot(&(&self.gram * x)))
    }

    /// `-G x` for any `d x r` matrix.
    pub fn egrad_ambient(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x.nrows())?;
        Ok(-(&self.gram * x))
    }

    /// `-(m / |B|) sum_{s in B} a_s a_s^T x`.
    pub fn stochastic_egrad(&self, x: &DMatrix<f64>, batch: &[usize]) -> Result<DMatrix<f64>> {
        self.check(x.nrows())?;
        if batch.is_empty() {
            return Err(Error::param("batch", "mini-batch is empty"));
        }
        let m = self.rows.nrows();
        let mut acc = DMatrix::zeros(x.nrows(), x.ncols());
        for &s in batch {
            if s >= m {
                return Err(Error::param("batch", format!("sample {s} out of range 0..{m}")));
            }
            let a = self.rows.row(s);
            let coef = a * x;
            acc.ger(1.0, &a.transpose(), &coef.transpose(), 1.0);
        }
        Ok(acc * (-(m as f64) / batch.len() as f64))
    }

    /// Largest eigenvalue of the Gram matrix.
    pub fn lambda_max(&self) -> f64 {
        SymmetricEigen::new(self.gram.clone()).eigenvalues.max()
    }

    fn check(&self, d: usize) -> Result<()> {
        if d != self.gram.nrows() {
            return Err(Error::dims("EigLocal", self.gram.nrows(), d));
        }
        Ok(())
    }
}

impl LocalObjective for EigLocal {
    fn dim(&self) -> usize {
        self.gram.nrows()
    }

    fn sample_count(&self) -> usize {
        self.rows.nrows()
    }

    fn value(&self, x: &StiefelPoint) -> Result<f64> {
        self.value_ambient(x.as_matrix())
    }

    fn euclidean_grad(&self, x: &StiefelPoint) -> Result<DMatrix<f64>> {
        self.egrad_ambient(x.as_matrix())
    }

    fn stochastic_euclidean_grad(&self, x: &StiefelPoint, batch: &[usize]) -> Result<DMatrix<f64>> {
        self.stochastic_egrad(x.as_matrix(), batch)
    }
}

/// `f(x) = (1/n) sum_i f_i(x)`.
pub fn global_value<O: LocalObjective>(locals: &[O], x: &StiefelPoint) -> Result<f64> {
    let mut sum = 0.0;
    for o in locals {
        sum += o.value(x)?;
    }
    Ok(sum / locals.len() as f64)
}

/// `grad f(x) = P_x((1/n) sum_i grad f_i(x))`.
pub fn global_riemannian_grad<O: LocalObjective>(locals: &[O], x: &StiefelPoint) -> Result<DMatrix<f64>> {
    let (d, r) = x.dims();
    let mut acc = DMatrix::zeros(d, r);
    for o in locals {
        acc += o.euclidean_grad(x)?;
    }
    acc /= locals.len() as f64;
    Ok(project_to_tangent(x, &acc)?.into_matrix())
}

/// Smoothness constants shared by all local losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessConstants {
    /// Euclidean gradient Lipschitz constant `L`.
    pub l: f64,
    /// `max_{x in St} ||grad f_i(x)||_2`.
    pub l_n: f64,
    /// `L + L_n`.
    pub l_g: f64,
    /// `L + 2 L_n`.
    pub l_big_g: f64,
    /// Bound on `||grad f_i(x)||_F` over the manifold.
    pub d: f64,
    /// Stochastic-gradient deviation bound, when estimated.
    pub xi: Option<f64>,
}

impl SmoothnessConstants {
    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = Some(xi);
        self
    }
}

/// Constants of the quadratic losses: `L = L_n = max_i lambda_max(G_i)`,
/// `D = sqrt(r) L_n`.
pub fn quadratic_constants(locals: &[EigLocal], r: usize) -> Result<SmoothnessConstants> {
    if locals.is_empty() {
        return Err(Error::param("locals", "no local objectives"));
    }
    let l = locals.iter().map(EigLocal::lambda_max).fold(0.0, f64::max);
    Ok(SmoothnessConstants {
        l,
        l_n: l,
        l_g: 2.0 * l,
        l_big_g: 3.0 * l,
        d: (r as f64).sqrt() * l,
        xi: None,
    })
}

/// Empirical stochastic deviation bound: at `x`, draw `draws` single-sample
/// Riemannian gradients per agent and take the largest
/// `||v - grad f_i(x)||_F`. An estimate, not a certificate.
pub fn estimate_xi<O: LocalObjective, R: Rng + ?Sized>(
    locals: &[O],
    x: &StiefelPoint,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for o in locals {
        let full = project_to_tangent(x, &o.euclidean_grad(x)?)?.into_matrix();
        let m = o.sample_count();
        for _ in 0..draws {
            let s = rng.random_range(0..m);
            let v = project_to_tangent(x, &o.stochastic_euclidean_grad(x, &[s])?)?.into_matrix();
            worst = worst.max((v - &full).norm());
        }
    }
    Ok(worst)
}

/// Synthetic instance with a prescribed geometric singular spectrum.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub locals: Vec<EigLocal>,
    /// Leading `r` right singular vectors of the assembled data.
    pub oracle: StiefelPoint,
    /// Singular values after modification, descending.
    pub singular_values: Vec<f64>,
}

/// Draws an `(n m) x d` standard Gaussian matrix, replaces its singular
/// values by `S_i = S_0 gap^{i/2}` and deals `m` consecutive rows to each agent.
pub fn synthesize_eigengap_data<R: Rng + ?Sized>(
    n: usize,
    m_per_node: usize,
    d: usize,
    r: usize,
    gap: f64,
    rng: &mut R,
) -> Result<SyntheticData> {
    if n == 0 || m_per_node == 0 {
        return Err(Error::param("n, m", "agent and sample counts must be positive"));
    }
    if r == 0 || r > d {
        return Err(Error::param("r", format!("need 1 <= r <= d, got r={r}, d={d}")));
    }
    if n * m_per_node < d {
        return Err(Error::param(
            "m",
            format!("{} samples cannot span dimension {d}", n * m_per_node),
        ));
    }
    if !(gap > 0.0 && gap < 1.0) {
        return Err(Error::param("gap", format!("{gap} not in (0, 1)")));
    }

    let a = gaussian_matrix(n * m_per_node, d, rng);
    let svd = SVD::new(a, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let s0 = svd.singular_values[order[0]];
    let singular_values: Vec<f64> = (0..d).map(|i| s0 * gap.powf(i as f64 / 2.0)).collect();
    let mut u_sorted = DMatrix::zeros(u.nrows(), d);
    let mut v_sorted = DMatrix::zeros(d, d);
    for (k, &src) in order.iter().enumerate() {
        u_sorted.set_column(k, &(u.column(src) * singular_values[k]));
        v_sorted.set_column(k, &v_t.row(src).transpose());
    }
    let assembled = u_sorted * v_sorted.transpose();

    let locals = (0..n)
        .map(|i| EigLocal::new(assembled.rows(i * m_per_node, m_per_node).into_owned()))
        .collect::<Result<Vec<_>>>()?;
    let oracle = StiefelPoint::new(v_sorted.columns(0, r).into_owned())
        .or_else(|_| StiefelPoint::project(&v_sorted.columns(0, r).into_owned()))?;
    Ok(SyntheticData {
        locals,
        oracle,
        singular_values,
    })
}

/// Reads delimiter-separated numeric rows, divides every entry by `divisor`
/// and splits the rows into `n` contiguous blocks; the first `total mod n`
/// blocks get one extra row.
pub fn load_dsv_partition(path: impl AsRef<Path>, n: usize, divisor: f64) -> Result<Vec<EigLocal>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
        path: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    parse_dsv_partition(&text, &path.display().to_string(), n, divisor)
}

/// [`load_dsv_partition`] on in-memory text; `name` is used in messages.
pub fn parse_dsv_partition(text: &str, name: &str, n: usize, divisor: f64) -> Result<Vec<EigLocal>> {
    let fail = |line: usize, reason: String| Error::Ingestion {
        path: name.to_string(),
        line,
        reason,
    };
    if n == 0 {
        return Err(fail(0, "agent count must be positive".into()));
    }
    if !(divisor.is_finite() && divisor != 0.0) {
        return Err(fail(0, format!("invalid divisor {divisor}")));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if first => {
                // header row
                first = false;
                continue;
            }
            Err(_) => {
                let bad = fields.iter().find(|f| f.parse::<f64>().is_err()).unwrap_or(&"");
                return Err(fail(line_no, format!("non-numeric field `{bad}` in row `{line}`")));
            }
        };
        first = false;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(fail(
                    line_no,
                    format!("row has {} fields, expected {w}", values.len()),
                ))
            }
            _ => {}
        }
        rows.push(values.into_iter().map(|v| v / divisor).collect());
    }

    let total = rows.len();
    if total < n {
        return Err(fail(0, format!("{total} rows cannot feed {n} agents")));
    }
    let d = width.unwrap_or(0);
    let (base, extra) = (total / n, total % n);
    let mut start = 0;
    (0..n)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let block = &rows[start..start + size];
            start += size;
            EigLocal::new(DMatrix::from_fn(size, d, |a, b| block[a][b]))
        })
        .collect()
}

/// Centralized solution of the eigenvector problem.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Top-`r` eigenvectors of `sum_i G_i`, by descending eigenvalue.
    pub point: StiefelPoint,
    /// All eigenvalues of `sum_i G_i`, descending.
    pub eigenvalues: Vec<f64>,
    /// `lambda_r - lambda_{r+1}`; infinite when `r = d`.
    pub gap: f64,
}

impl OracleSolution {
    /// True when the optimal subspace is not uniquely defined.
    pub fn ill_defined(&self) -> bool {
        self.gap < 1e-12
    }
}

pub fn centralized_oracle(locals: &[EigLocal], r: usize) -> Result<OracleSolution> {
    let first = locals
        .first()
        .ok_or_else(|| Error::param("locals", "no local objectives"))?;
    let d = first.dim();
    if r == 0 || r > d {
        return Err(Error::param("r", format!("need 1 <= r <= d = {d}, got {r}")));
    }
    let mut total = DMatrix::zeros(d, d);
    for o in locals {
        o.check(d)?;
        total += &o.gram;
    }
    let eig = SymmetricEigen::new(total);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut top = DMatrix::zeros(d, r);
    for (c, &k) in order.iter().take(r).enumerate() {
        top.set_column(c, &eig.eigenvectors.column(k));
    }
    let gap = if r < d {
        eigenvalues[r - 1] - eigenvalues[r]
    } else {
        f64::INFINITY
    };
    if gap < 1e-12 {
        log::warn!("eigengap {gap:e} between lambda_r and lambda_(r+1): optimal subspace is ill-defined");
    }
    let point = StiefelPoint::new(top.clone()).or_else(|_| StiefelPoint::project(&top))?;
    Ok(OracleSolution {
        point,
        eigenvalues,
        gap,
    })
}
