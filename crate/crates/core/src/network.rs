//! Communication graphs, doubly stochastic mixing matrices and the spectral
//! constants that govern multi-step Riemannian consensus.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifold::{ConsensusRegionParams, SwarmState};

/// Entry-wise tolerance for symmetry and row sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Resampling budget for Erdős–Rényi graphs that come out disconnected.
pub const ER_MAX_RESAMPLES: usize = 1000;

/// Second-order constant of the polar retraction for steps with `||v|| <= 1`.
pub const POLAR_M: f64 = 1.0;

/// Undirected, connected, simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Edges are normalized to `(min, max)` and sorted. Self-loops, duplicates
    /// and disconnected inputs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("graph needs at least one node".into()));
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Topology(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop at node {a}")));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Topology(format!("duplicate edge {:?}", w[0])));
        }
        let graph = Self::from_sorted(n, list);
        if !graph.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(graph)
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for adj in &mut neighbors {
            adj.sort_unstable();
        }
        Self {
            n,
            edges,
            neighbors,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

/// Cycle `0 - 1 - ... - (n-1) - 0`. For `n = 2` this is a single edge.
pub fn ring_graph(n: usize) -> Result<Graph> {
    check_size(n)?;
    let mut edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    if n == 2 {
        edges.truncate(1);
    }
    Graph::new(n, edges)
}

pub fn complete_graph(n: usize) -> Result<Graph> {
    check_size(n)?;
    Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
}

/// `ER(n, p)`: each pair joined independently with probability `p`, redrawn
/// from the same stream until connected.
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    check_size(n)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", format!("{p} not in (0, 1]")));
    }
    for _ in 0..ER_MAX_RESAMPLES {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_sorted(n, edges);
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Topology(format!(
        "ER({n}, {p}) still disconnected after {ER_MAX_RESAMPLES} draws"
    )))
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::param("n", format!("{n} agents; generators need n >= 2")));
    }
    Ok(())
}

/// Symmetric doubly stochastic matrix with cached spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    /// Eigenvalues in descending order.
    eigenvalues: Vec<f64>,
    sigma2: f64,
}

impl MixingMatrix {
    /// Checks symmetry, unit row sums, non-negativity, `0 < W_ii < 1`
    /// (`W = [1]` is accepted for a single agent) and `sigma2 < 1`.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || w.ncols() != n {
            return Err(Error::InvalidMatrix(format!("shape {:?} is not square", w.shape())));
        }
        let asym = (&w - w.transpose()).amax();
        if asym > STOCHASTIC_TOL {
            return Err(Error::InvalidMatrix(format!("asymmetry {asym:e}")));
        }
        for i in 0..n {
            let sum: f64 = w.row(i).iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMatrix(format!("row {i} sums to {sum}")));
            }
            if let Some(v) = w.row(i).iter().find(|v| **v < 0.0) {
                return Err(Error::InvalidMatrix(format!("negative entry {v} in row {i}")));
            }
            let wii = w[(i, i)];
            if n > 1 && !(wii > 0.0 && wii < 1.0) {
                return Err(Error::InvalidMatrix(format!("diagonal W[{i}][{i}] = {wii} not in (0, 1)")));
            }
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(w.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        if eigenvalues[0] > 1.0 + STOCHASTIC_TOL || eigenvalues[n - 1] <= -1.0 {
            return Err(Error::InvalidMatrix(format!(
                "eigenvalues {:?} leave (-1, 1]",
                (eigenvalues[n - 1], eigenvalues[0])
            )));
        }
        let sigma2 = if n == 1 {
            0.0
        } else {
            eigenvalues[1].abs().max(eigenvalues[n - 1].abs())
        };
        if sigma2 >= 1.0 {
            return Err(Error::InvalidMatrix(format!("sigma2 = {sigma2} >= 1 (disconnected?)")));
        }
        Ok(Self {
            w,
            eigenvalues,
            sigma2,
        })
    }

    /// `W = (1/n) 1 1^T`, the equally weighted complete graph.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be positive"));
        }
        Self::new(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// Second largest singular value (= second largest |eigenvalue|).
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// Second largest eigenvalue; `0` for a single agent.
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    /// Number of nonzero off-diagonal entries, i.e. directed messages per
    /// gossip round.
    pub fn message_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.w[(i, j)] != 0.0)
            .count()
    }
}

/// Metropolis constant-edge weights:
/// `W_ij = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal fills the row.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        let v = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::new(w)
}

/// Smallest `t >= 1` with `sigma2^t <= 1 / (2 sqrt n)`.
pub fn min_communication_rounds(w: &MixingMatrix) -> Result<usize> {
    communication_rounds_for(w.sigma2(), w.n())
}

/// [`min_communication_rounds`] from the raw spectral quantity.
pub fn communication_rounds_for(s: f64, n: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::InvalidMatrix(format!("sigma2 = {s} >= 1")));
    }
    if s == 0.0 {
        return Ok(1);
    }
    let target = 1.0 / (2.0 * (n as f64).sqrt());
    let estimate = ((target.ln() / s.ln()).ceil().max(1.0)) as usize;
    // Correct for rounding in the logarithms.
    let mut t = estimate.saturating_sub(1).max(1);
    while s.powi(t as i32) > target {
        t += 1;
    }
    Ok(t)
}

/// `W^t` by repeated squaring, re-symmetrized.
pub fn matrix_power(w: &MixingMatrix, t: usize) -> Result<MixingMatrix> {
    if t < 1 {
        return Err(Error::param("t", "communication rounds must be at least 1"));
    }
    if t == 1 {
        return Ok(w.clone());
    }
    let n = w.n();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = w.w.clone();
    let mut e = t;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    let sym = (&result + result.transpose()) * 0.5;
    MixingMatrix::new(sym)
}

/// `out_i = sum_j W_ij m_j`, summed over ascending `j`. Agents may be
/// evaluated in parallel; output order is agent order.
pub fn mix_matrices(values: &[DMatrix<f64>], w: &MixingMatrix) -> Result<Vec<DMatrix<f64>>> {
    let n = w.n();
    if values.len() != n {
        return Err(Error::dims("mix", n, values.len()));
    }
    let shape = values[0].shape();
    if values.iter().any(|v| v.shape() != shape) {
        return Err(Error::Contract("mixed matrices have different shapes".into()));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = DMatrix::zeros(shape.0, shape.1);
            for (j, v) in values.iter().enumerate() {
                let wij = w.get(i, j);
                if wij != 0.0 {
                    acc.zip_apply(v, |a, b| *a += wij * b);
                }
            }
            acc
        })
        .collect())
}

/// `sum_j (W^t)_ij x_j` for every agent.
pub fn mix(s: &SwarmState, wt: &MixingMatrix) -> Result<Vec<DMatrix<f64>>> {
    let values: Vec<DMatrix<f64>> = s.points().iter().map(|p| p.as_matrix().clone()).collect();
    mix_matrices(&values, wt)
}

/// How `W^t` is applied inside an iteration.
#[derive(Debug, Clone)]
pub enum Mixer {
    /// One multiplication by the precomputed power.
    Power {
        wt: MixingMatrix,
        rounds: usize,
        /// Messages of one round on the support of `W`.
        round_messages: usize,
    },
    /// `rounds` sequential applications of `W`.
    Gossip { w: MixingMatrix, rounds: usize },
}

impl Mixer {
    pub fn power(w: &MixingMatrix, rounds: usize) -> Result<Self> {
        Ok(Mixer::Power {
            wt: matrix_power(w, rounds)?,
            rounds,
            round_messages: w.message_count(),
        })
    }

    pub fn gossip(w: &MixingMatrix, rounds: usize) -> Result<Self> {
        if rounds < 1 {
            return Err(Error::param("t", "communication rounds must be at least 1"));
        }
        Ok(Mixer::Gossip {
            w: w.clone(),
            rounds,
        })
    }

    pub fn rounds(&self) -> usize {
        match self {
            Mixer::Power { rounds, .. } | Mixer::Gossip { rounds, .. } => *rounds,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Mixer::Power { wt, .. } => wt.n(),
            Mixer::Gossip { w, .. } => w.n(),
        }
    }

    pub fn apply(&self, values: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        match self {
            Mixer::Power { wt, .. } => mix_matrices(values, wt),
            Mixer::Gossip { w, rounds } => {
                let mut current = mix_matrices(values, w)?;
                for _ in 1..*rounds {
                    current = mix_matrices(&current, w)?;
                }
                Ok(current)
            }
        }
    }

    /// Directed point-to-point messages per application: `rounds` gossip
    /// rounds over the support of `W`.
    pub fn messages_per_application(&self) -> usize {
        match self {
            Mixer::Power {
                rounds,
                round_messages,
                ..
            } => rounds * round_messages,
            Mixer::Gossip { w, rounds } => rounds * w.message_count(),
        }
    }
}

/// Spectral constants of multi-step consensus with `nu = 1/2` and `M = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusRateReport {
    pub t: usize,
    /// `sigma2(W)^t`.
    pub sigma2_t: f64,
    /// `1 - lambda_min(W^t)`, Lipschitz constant of the consensus gradient.
    pub l_t: f64,
    /// `1 - lambda_2(W^t)`.
    pub mu_t: f64,
    /// `2 - delta2^2`.
    pub phi: f64,
    /// `min(Phi / (2 L_t), 1, 1/M)`.
    pub alpha_bar: f64,
    /// `(1 - 4 r delta1^2)(1 - delta2^2 / 2) mu_t`.
    pub gamma_t: f64,
    /// Stepsize the rate is evaluated at.
    pub alpha: f64,
    /// `sqrt(1 - gamma_t alpha)`.
    pub rho_t: f64,
}

/// Evaluates the linear-rate constants of DRCS on `W^t`. `alpha` defaults to
/// `alpha_bar`; larger values are rejected.
pub fn consensus_rate_params(
    w: &MixingMatrix,
    t: usize,
    region: &ConsensusRegionParams,
    alpha: Option<f64>,
) -> Result<ConsensusRateReport> {
    let wt = matrix_power(w, t)?;
    let l_t = 1.0 - wt.lambda_min();
    let mu_t = 1.0 - wt.lambda2();
    let (d1, d2) = (region.delta1(), region.delta2());
    let phi = 2.0 - d2 * d2;
    let alpha_bar = (phi / (2.0 * l_t)).min(1.0).min(1.0 / POLAR_M);
    let gamma_t = (1.0 - 4.0 * region.r() as f64 * d1 * d1) * (1.0 - d2 * d2 / 2.0) * mu_t;
    let alpha = alpha.unwrap_or(alpha_bar);
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", format!("{alpha} must be positive")));
    }
    if alpha > alpha_bar {
        return Err(Error::Stepsize { alpha, alpha_bar });
    }
    let rho_t = (1.0 - gamma_t * alpha).sqrt();
    if !(rho_t > 0.0 && rho_t < 1.0) {
        return Err(Error::InvalidMatrix(format!("contraction factor {rho_t} outside (0, 1)")));
    }
    Ok(ConsensusRateReport {
        t,
        sigma2_t: w.sigma2().powi(t as i32),
        l_t,
        mu_t,
        phi,
        alpha_bar,
        gamma_t,
        alpha,
        rho_t,
    })
}
