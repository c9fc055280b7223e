//! Restricted-isometry analysis of the gateway measurement matrix.
//!
//! The tail probability of a random `m x n` matrix `Psi` at deviation `eps` is
//! the worst case over unit vectors `x` of `P(| ||Psi x||^2 - 1 | > eps)`.
//! The maximum over the whole sphere is out of reach, so the estimator here
//! takes the maximum over a finite candidate set and is therefore a lower
//! bound on the true tail probability. Candidates are normalized Gaussian
//! vectors, every 1-sparse basis vector, and random 2-sparse sign patterns.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_binomial;

use crate::coding::{build_psi_tot, design_coefficients};
use crate::decoder::next_combination;
use crate::error::{QncError, Result};
use crate::linalg::random_unit_vector;
use crate::network::Deployment;
use crate::seed;

/// A generator of random measurement matrices with a fixed shape.
///
/// The rows are ordered so that the first `m` rows of a draw are themselves a
/// meaningful `m`-row matrix (for QNC, the measurements up to some time).
pub trait MatrixSource: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn draw(&self, seed: u64) -> Result<DMatrix<f64>>;
    /// Label written to the CSV `matrix_kind` column.
    fn kind(&self) -> &'static str;
    /// Edge count of the underlying network, if any.
    fn edges(&self) -> Option<usize> {
        None
    }
}

/// I.i.d. `N(0, 1/rows)` entries.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSource {
    pub rows: usize,
    pub cols: usize,
}

impl MatrixSource for GaussianSource {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn draw(&self, seed: u64) -> Result<DMatrix<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (self.rows as f64).sqrt();
        Ok(DMatrix::from_fn(self.rows, self.cols, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * scale
        }))
    }

    fn kind(&self) -> &'static str {
        "gaussian"
    }
}

/// `Psi_tot(t)` of a fixed deployment; each draw redraws the injection
/// coefficients while the mixing coefficients stay those of the deployment.
#[derive(Debug, Clone)]
pub struct QncSource {
    pub deployment: Deployment,
    pub t: usize,
    pub alpha_variance: f64,
}

impl QncSource {
    pub fn new(deployment: Deployment, t: usize, alpha_variance: f64) -> Result<Self> {
        if t < 2 {
            return Err(QncError::InvalidParameters(format!("need t >= 2, got {t}")));
        }
        Ok(QncSource {
            deployment,
            t,
            alpha_variance,
        })
    }

    /// Row count of the prefix corresponding to time `t`.
    pub fn rows_at(&self, t: usize) -> usize {
        (t - 1) * self.deployment.measurements_per_step()
    }
}

impl MatrixSource for QncSource {
    fn rows(&self) -> usize {
        self.rows_at(self.t)
    }

    fn cols(&self) -> usize {
        self.deployment.num_nodes()
    }

    fn draw(&self, seed: u64) -> Result<DMatrix<f64>> {
        let c = design_coefficients(&self.deployment, seed, self.alpha_variance)?;
        Ok(build_psi_tot(&self.deployment, &c, self.t))
    }

    fn kind(&self) -> &'static str {
        "qnc"
    }

    fn edges(&self) -> Option<usize> {
        Some(self.deployment.num_edges())
    }
}

/// How columns are rescaled before measuring `||Psi x||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnScaling {
    /// Use the draws as they are.
    None,
    /// Divide each column by the root of its mean energy, estimated on a
    /// separate batch of draws, so that `E ||Psi x||^2 = 1` for every unit `x`
    /// when columns are uncorrelated.
    Empirical,
}

/// Estimated tail probability at one `(m, epsilon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProbEstimate {
    pub epsilon: f64,
    /// Maximum over candidates of the per-candidate exceedance frequency.
    pub prob: f64,
    /// Exceedance frequency averaged over candidates.
    pub pooled_prob: f64,
    pub num_matrix_draws: usize,
    pub num_vector_draws: usize,
    pub num_candidates: usize,
    pub m: usize,
    pub estimator: String,
}

pub const ESTIMATOR: &str = "max-over-sampled-vectors";

/// Candidate unit vectors: `num_vector_draws` normalized Gaussians, all `n`
/// basis vectors, then `num_vector_draws` random 2-sparse `(+-1, +-1)/sqrt(2)`.
pub fn candidate_vectors(n: usize, num_vector_draws: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_sparse = if n >= 2 { num_vector_draws } else { 0 };
    let total = num_vector_draws + n + two_sparse;
    let mut x = DMatrix::zeros(n, total);
    for c in 0..num_vector_draws {
        x.set_column(c, &random_unit_vector(n, &mut rng));
    }
    for i in 0..n {
        x[(i, num_vector_draws + i)] = 1.0;
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for c in 0..two_sparse {
        let pair = index::sample(&mut rng, n, 2);
        let col = num_vector_draws + n + c;
        for i in pair.iter() {
            x[(i, col)] = if rng.gen::<bool>() { h } else { -h };
        }
    }
    x
}

/// Tail probabilities for every row-prefix length in `prefixes` and every
/// threshold in `epsilons`. Output is ordered by prefix, then epsilon.
///
/// Draw `i` of the estimation batch uses seed `derive(seed, [0, i])`; with
/// empirical scaling the energy batch uses `derive(seed, [1, i])`.
pub fn estimate_tail_profile(
    source: &dyn MatrixSource,
    prefixes: &[usize],
    epsilons: &[f64],
    num_matrix_draws: usize,
    num_vector_draws: usize,
    scaling: ColumnScaling,
    seed: u64,
) -> Result<Vec<TailProbEstimate>> {
    if num_matrix_draws == 0 {
        return Err(QncError::InvalidParameters("need at least one matrix draw".into()));
    }
    if prefixes.is_empty() || epsilons.is_empty() {
        return Err(QncError::EmptyInput("prefixes and epsilons must be non-empty".into()));
    }
    if let Some(&m) = prefixes.iter().find(|&&m| m == 0 || m > source.rows()) {
        return Err(QncError::InvalidParameters(format!(
            "prefix {m} outside 1..={}",
            source.rows()
        )));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(QncError::InvalidParameters(format!("epsilon must be positive, got {e}")));
    }
    let n = source.cols();

    let inv_scale: Vec<DVector<f64>> = match scaling {
        ColumnScaling::None => vec![DVector::from_element(n, 1.0); prefixes.len()],
        ColumnScaling::Empirical => {
            let energies = (0..num_matrix_draws)
                .into_par_iter()
                .map(|i| {
                    let psi = source.draw(seed::derive(seed, &[1, i as u64]))?;
                    Ok(prefix_column_energies(&psi, prefixes))
                })
                .collect::<Result<Vec<_>>>()?;
            (0..prefixes.len())
                .map(|p| {
                    let mean = energies.iter().fold(DVector::zeros(n), |acc, e| acc + &e[p])
                        / num_matrix_draws as f64;
                    mean.map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
                })
                .collect()
        }
    };

    let x = candidate_vectors(n, num_vector_draws, seed::derive(seed, &[2]));
    let scaled: Vec<DMatrix<f64>> = inv_scale
        .iter()
        .map(|d| {
            let mut xs = x.clone();
            for (i, mut row) in xs.row_iter_mut().enumerate() {
                row *= d[i];
            }
            xs
        })
        .collect();
    let num_candidates = x.ncols();

    // exceedance counts per (prefix, epsilon, candidate)
    let counts = (0..num_matrix_draws)
        .into_par_iter()
        .map(|i| {
            let psi = source.draw(seed::derive(seed, &[0, i as u64]))?;
            let mut local = vec![0u32; prefixes.len() * epsilons.len() * num_candidates];
            for (p, &m) in prefixes.iter().enumerate() {
                let y = psi.rows(0, m) * &scaled[p];
                for c in 0..num_candidates {
                    let dev = (y.column(c).norm_squared() - 1.0).abs();
                    for (k, &eps) in epsilons.iter().enumerate() {
                        if dev > eps {
                            local[(p * epsilons.len() + k) * num_candidates + c] += 1;
                        }
                    }
                }
            }
            Ok::<_, QncError>(local)
        })
        .try_reduce(
            || vec![0u32; prefixes.len() * epsilons.len() * num_candidates],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;

    let draws = num_matrix_draws as f64;
    let mut out = Vec::with_capacity(prefixes.len() * epsilons.len());
    for (p, &m) in prefixes.iter().enumerate() {
        for (k, &eps) in epsilons.iter().enumerate() {
            let slice = &counts[(p * epsilons.len() + k) * num_candidates..][..num_candidates];
            let max = slice.iter().copied().max().unwrap_or(0) as f64 / draws;
            let pooled = slice.iter().map(|&c| c as f64).sum::<f64>() / (draws * num_candidates as f64);
            out.push(TailProbEstimate {
                epsilon: eps,
                prob: max,
                pooled_prob: pooled,
                num_matrix_draws,
                num_vector_draws,
                num_candidates,
                m,
                estimator: ESTIMATOR.to_string(),
            });
        }
    }
    Ok(out)
}

fn prefix_column_energies(psi: &DMatrix<f64>, prefixes: &[usize]) -> Vec<DVector<f64>> {
    prefixes
        .iter()
        .map(|&m| {
            let block = psi.rows(0, m);
            DVector::from_iterator(psi.ncols(), block.column_iter().map(|c| c.norm_squared()))
        })
        .collect()
}

/// Single-threshold estimate over all rows of the source.
pub fn estimate_tail_probability(
    source: &dyn MatrixSource,
    epsilon: f64,
    num_matrix_draws: usize,
    num_vector_draws: usize,
    scaling: ColumnScaling,
    seed: u64,
) -> Result<TailProbEstimate> {
    let mut v = estimate_tail_profile(
        source,
        &[source.rows()],
        &[epsilon],
        num_matrix_draws,
        num_vector_draws,
        scaling,
        seed,
    )?;
    Ok(v.remove(0))
}

/// `P(| ||G x||^2 - 1 | > eps)` for an `m x n` matrix with i.i.d. `N(0, 1/m)`
/// entries and unit `x`; `m ||G x||^2` is chi-square with `m` degrees of freedom.
pub fn gaussian_tail_probability(m: usize, epsilon: f64) -> Result<f64> {
    if m == 0 {
        return Err(QncError::InvalidParameters("m must be positive".into()));
    }
    let chi = ChiSquared::new(m as f64).map_err(|e| QncError::InvalidParameters(e.to_string()))?;
    let mf = m as f64;
    let lower = if epsilon < 1.0 { chi.cdf(mf * (1.0 - epsilon)) } else { 0.0 };
    Ok((lower + chi.sf(mf * (1.0 + epsilon))).clamp(0.0, 1.0))
}

/// Smallest `m <= m_cap` whose Gaussian tail probability is at most `target`.
pub fn min_gaussian_measurements(target: f64, epsilon: f64, m_cap: usize) -> Result<Option<usize>> {
    for m in 1..=m_cap {
        if gaussian_tail_probability(m, epsilon)? <= target {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// One point of the measurement-ratio curve at a common tail-probability level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRatio {
    pub tail_prob: f64,
    pub m_source: usize,
    pub m_gaussian: usize,
    pub ratio: f64,
}

/// Measurement ratios at the tail-probability levels resolved by `profile`
/// (estimates for one `epsilon` over several `m`).
///
/// For each distinct level `p` strictly between 0 and 1, `m_source` is the
/// smallest profiled `m` whose estimate is at most `p`, and `m_gaussian` the
/// smallest Gaussian `m` whose closed-form tail is at most `p`. Levels 0 and 1
/// carry no information at a finite draw count and are skipped.
pub fn measurement_ratios(profile: &[TailProbEstimate], m_cap: usize) -> Result<Vec<MeasurementRatio>> {
    let Some(first) = profile.first() else {
        return Err(QncError::EmptyInput("empty tail profile".into()));
    };
    if profile.iter().any(|e| e.epsilon != first.epsilon) {
        return Err(QncError::InvalidParameters("profile mixes epsilon values".into()));
    }
    let mut levels: Vec<f64> = profile
        .iter()
        .map(|e| e.prob)
        .filter(|&p| p > 0.0 && p < 1.0)
        .collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let mut out = Vec::with_capacity(levels.len());
    for p in levels {
        let m_source = profile
            .iter()
            .filter(|e| e.prob <= p)
            .map(|e| e.m)
            .min()
            .expect("level comes from the profile");
        let m_gaussian = min_gaussian_measurements(p, first.epsilon, m_cap)?.ok_or_else(|| {
            QncError::BudgetExceeded(format!("no Gaussian m <= {m_cap} reaches {p}"))
        })?;
        out.push(MeasurementRatio {
            tail_prob: p,
            m_source,
            m_gaussian,
            ratio: m_source as f64 / m_gaussian as f64,
        });
    }
    Ok(out)
}

/// `max(0, 1 - C(n, k) (42 / delta_k)^k p_tail)`, evaluated in log space.
pub fn rip_success_lower_bound(n: u64, k: u64, delta_k: f64, tail_prob: f64) -> Result<f64> {
    if !(delta_k > 0.0 && delta_k < 1.0) {
        return Err(QncError::InvalidParameters(format!("delta_k must lie in (0, 1), got {delta_k}")));
    }
    if k == 0 || k > n {
        return Err(QncError::InvalidParameters(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if !(0.0..=1.0).contains(&tail_prob) {
        return Err(QncError::InvalidParameters(format!("tail probability {tail_prob} outside [0, 1]")));
    }
    if tail_prob == 0.0 {
        return Ok(1.0);
    }
    let log_fail = ln_binomial(n, k) + k as f64 * (42.0 / delta_k).ln() + tail_prob.ln();
    Ok((1.0 - log_fail.exp()).max(0.0))
}

/// `ceil(kappa2 k ln(n / k))`.
pub fn gaussian_sample_complexity(n: usize, k: usize, kappa2: f64) -> Result<usize> {
    if k == 0 || k > n {
        return Err(QncError::InvalidParameters(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if !(kappa2 > 0.0 && kappa2.is_finite()) {
        return Err(QncError::InvalidParameters(format!("kappa2 must be positive, got {kappa2}")));
    }
    Ok((kappa2 * k as f64 * (n as f64 / k as f64).ln()).ceil() as usize)
}

pub const MAX_EXHAUSTIVE_COLUMNS: usize = 16;
pub const MAX_EXHAUSTIVE_ORDER: usize = 3;

/// Restricted isometry constant of order `k` by enumerating every support.
///
/// Uses the extreme eigenvalues of each `k x k` Gram block, so
/// `delta_k = max_S max(lambda_max - 1, 1 - lambda_min)`. Columns are taken as
/// they are; normalize beforehand if required.
pub fn exhaustive_rip_constant(theta: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = theta.ncols();
    if n > MAX_EXHAUSTIVE_COLUMNS || k > MAX_EXHAUSTIVE_ORDER {
        return Err(QncError::BudgetExceeded(format!(
            "exhaustive search limited to n <= {MAX_EXHAUSTIVE_COLUMNS}, k <= {MAX_EXHAUSTIVE_ORDER} (got n={n}, k={k})"
        )));
    }
    let (lo, hi) = gram_eigen_range(theta, k)?;
    Ok((hi - 1.0).max(1.0 - lo))
}

/// Smallest and largest eigenvalue over all `k x k` Gram blocks of `theta`,
/// with no size guard. `delta_k` of `c * theta` is
/// `max(c^2 hi - 1, 1 - c^2 lo)`, minimized at `c^2 = 2 / (lo + hi)`.
pub fn gram_eigen_range(theta: &DMatrix<f64>, k: usize) -> Result<(f64, f64)> {
    let n = theta.ncols();
    if k == 0 || k > n {
        return Err(QncError::InvalidParameters(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let gram = theta.transpose() * theta;
    let mut support: Vec<usize> = (0..k).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    loop {
        let block = DMatrix::from_fn(k, k, |i, j| gram[(support[i], support[j])]);
        let eig = SymmetricEigen::new(block).eigenvalues;
        hi = hi.max(eig.max());
        lo = lo.min(eig.min());
        if !next_combination(&mut support, n) {
            break;
        }
    }
    Ok((lo, hi))
}

/// One CSV row of a tail-probability run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProbRow {
    pub matrix_kind: String,
    pub n: usize,
    pub edges: Option<usize>,
    pub m: usize,
    pub epsilon: f64,
    pub tail_prob_estimate: f64,
    pub draws: usize,
}

impl TailProbRow {
    pub fn new(source: &dyn MatrixSource, est: &TailProbEstimate) -> Self {
        TailProbRow {
            matrix_kind: source.kind().to_string(),
            n: source.cols(),
            edges: source.edges(),
            m: est.m,
            epsilon: est.epsilon,
            tail_prob_estimate: est.prob,
            draws: est.num_matrix_draws,
        }
    }
}

pub fn write_tail_csv<W: std::io::Write>(rows: &[TailProbRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
