//! Quantized network coding: coefficient design, the time-stepped edge
//! recursion, and the linear measurement model seen by the gateway.
//!
//! With `Y(1) = 0`, every edge `e` leaving node `v` carries
//!
//! ```text
//! Y_e(t) = Q_e( sum_{e' in In(v)} beta_{e,e'}(t) Y_e'(t-1) + alpha_{e,v}(t) x_v )
//! ```
//!
//! and the gateway observes `Z(t) = B Y(t)`. Writing the quantizer as additive
//! noise turns the stacked observations `Z(2..t)` into
//! `Z_tot = Psi_tot x + N_eff,tot`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{QncError, Result};
use crate::linalg::{random_orthogonal, random_unit_vector};
use crate::network::Deployment;
use crate::quantizer::QuantizerSpec;
use crate::seed;

/// Relative slack allowed on the pre-quantization range check.
const OVERFLOW_SLACK: f64 = 1e-12;

/// Sparse `|E| x |E|` edge-mixing matrix `F`, stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    pub fn new(rows: Vec<Vec<(usize, f64)>>) -> Self {
        MixingMatrix { rows }
    }

    pub fn zeros(num_edges: usize) -> Self {
        MixingMatrix {
            rows: vec![Vec::new(); num_edges],
        }
    }

    pub fn num_edges(&self) -> usize {
        self.rows.len()
    }

    /// Nonzero `(e', beta_{e,e'})` pairs of row `e`.
    pub fn row(&self, e: usize) -> &[(usize, f64)] {
        &self.rows[e]
    }

    /// `F y`
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, b)| b * y[j]).sum())
            .collect()
    }

    /// `r F` for a row vector `r`.
    pub fn apply_left(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for (e, row) in self.rows.iter().enumerate() {
            let re = r[e];
            if re != 0.0 {
                for &(j, b) in row {
                    out[j] += re * b;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut f = DMatrix::zeros(n, n);
        for (e, row) in self.rows.iter().enumerate() {
            for &(j, b) in row {
                f[(e, j)] = b;
            }
        }
        f
    }
}

/// Local coding coefficients over time.
///
/// `mixing[i]` is `F(i + 2)`; times past the stored range reuse the last
/// entry. `injection[i][e]` is `alpha_{e,tail(e)}(i + 2)`; times past the
/// stored range inject nothing. Only `t >= 2` matters because `Y(1) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule {
    n: usize,
    tails: Vec<usize>,
    mixing: Vec<MixingMatrix>,
    injection: Vec<Vec<f64>>,
    normalization: Vec<f64>,
}

impl CoefficientSchedule {
    /// Assembles a schedule from explicit coefficients, checking the sparsity
    /// patterns: `F_{e,e'}` may be nonzero only if `tail(e) = head(e')`.
    pub fn from_parts(
        d: &Deployment,
        mixing: Vec<MixingMatrix>,
        injection: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if mixing.is_empty() {
            return Err(QncError::InvalidParameters("schedule needs at least one F".into()));
        }
        let ne = d.num_edges();
        for f in &mixing {
            if f.num_edges() != ne {
                return Err(QncError::InvalidParameters("F has wrong size".into()));
            }
            for e in 0..ne {
                for &(j, _) in f.row(e) {
                    if j >= ne || d.edge(e).tail != d.edge(j).head {
                        return Err(QncError::InvalidParameters(format!(
                            "F[{e},{j}] violates the incidence pattern"
                        )));
                    }
                }
            }
        }
        if injection.iter().any(|a| a.len() != ne) {
            return Err(QncError::InvalidParameters("alpha vector has wrong size".into()));
        }
        Ok(CoefficientSchedule {
            n: d.num_nodes(),
            tails: d.edges().iter().map(|e| e.tail).collect(),
            mixing,
            injection,
            normalization: vec![1.0; ne],
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.tails.len()
    }

    /// `F(t)` for `t >= 2`.
    pub fn mixing(&self, t: usize) -> &MixingMatrix {
        assert!(t >= 2, "F(t) is only used for t >= 2");
        &self.mixing[(t - 2).min(self.mixing.len() - 1)]
    }

    /// `alpha_{e,tail(e)}(t)` for every edge, or `None` when `A(t) = 0`.
    pub fn injection(&self, t: usize) -> Option<&[f64]> {
        if t < 2 {
            return None;
        }
        self.injection.get(t - 2).map(Vec::as_slice)
    }

    /// Factor applied to each edge's coefficients to meet the normalization bound.
    pub fn normalization(&self, e: usize) -> f64 {
        self.normalization[e]
    }

    /// Dense `A(t)` (`|E| x n`).
    pub fn injection_matrix(&self, t: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.num_edges(), self.n);
        if let Some(alpha) = self.injection(t) {
            for (e, &al) in alpha.iter().enumerate() {
                a[(e, self.tails[e])] = al;
            }
        }
        a
    }

    /// `A(t) x`
    pub fn inject(&self, t: usize, x: &[f64]) -> Option<Vec<f64>> {
        self.injection(t).map(|alpha| {
            alpha
                .iter()
                .zip(&self.tails)
                .map(|(a, &v)| a * x[v])
                .collect()
        })
    }

    /// Largest `sum_{e'} |beta_{e,e'}(t)| + |alpha_{e,v}(t)|` over edges and stored times.
    pub fn max_row_mass(&self) -> f64 {
        let horizon = self.mixing.len().max(self.injection.len());
        let mut worst: f64 = 0.0;
        for i in 0..horizon {
            let t = i + 2;
            let f = self.mixing(t);
            let alpha = self.injection(t);
            for e in 0..self.num_edges() {
                let mass: f64 = f.row(e).iter().map(|(_, b)| b.abs()).sum::<f64>()
                    + alpha.map_or(0.0, |a| a[e].abs());
                worst = worst.max(mass);
            }
        }
        worst
    }
}

/// Designs the coefficients used throughout the simulations.
///
/// Mixing coefficients depend only on the deployment (drawn from a stream
/// derived from its seed) and are constant in time: at each node the
/// `|Out(v)| x |In(v)|` block takes orthonormal rows of a random orthogonal
/// matrix, with any rows beyond `|In(v)|` drawn as random unit vectors.
/// Injection coefficients `alpha_{e,v}(2) ~ N(0, alpha_variance)` come from
/// `seed`; `A(t) = 0` for `t > 2`. Finally each outgoing edge whose
/// `sum |beta| + |alpha|` exceeds one has its whole row divided by that sum.
pub fn design_coefficients(
    d: &Deployment,
    seed: u64,
    alpha_variance: f64,
) -> Result<CoefficientSchedule> {
    if !(alpha_variance > 0.0 && alpha_variance.is_finite()) {
        return Err(QncError::InvalidParameters(format!(
            "alpha variance must be positive, got {alpha_variance}"
        )));
    }
    let ne = d.num_edges();
    let mut mix_rng = ChaCha8Rng::seed_from_u64(seed::derive(d.seed(), &[seed::stream::MIXING]));
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ne];
    for v in 0..d.num_nodes() {
        let ins = d.in_edges(v);
        let outs = d.out_edges(v);
        if ins.is_empty() || outs.is_empty() {
            continue;
        }
        let q = random_orthogonal(ins.len(), &mut mix_rng);
        for (r, &e) in outs.iter().enumerate() {
            let coeffs: Vec<f64> = if r < ins.len() {
                q.column(r).iter().copied().collect()
            } else {
                random_unit_vector(ins.len(), &mut mix_rng).iter().copied().collect()
            };
            rows[e] = ins.iter().copied().zip(coeffs).collect();
        }
    }

    let normal = Normal::new(0.0, alpha_variance.sqrt())
        .map_err(|e| QncError::InvalidParameters(e.to_string()))?;
    let mut alpha_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha: Vec<f64> = (0..ne).map(|_| normal.sample(&mut alpha_rng)).collect();

    let mut normalization = vec![1.0; ne];
    for e in 0..ne {
        let mass: f64 = rows[e].iter().map(|(_, b)| b.abs()).sum::<f64>() + alpha[e].abs();
        if mass > 1.0 {
            let c = 1.0 / mass;
            normalization[e] = c;
            alpha[e] *= c;
            for (_, b) in rows[e].iter_mut() {
                *b *= c;
            }
        }
    }

    let mut schedule =
        CoefficientSchedule::from_parts(d, vec![MixingMatrix::new(rows)], vec![alpha])?;
    schedule.normalization = normalization;
    Ok(schedule)
}

/// Edge contents and gateway packets of one QNC transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct QncRun {
    /// `y[t - 1]` is `Y(t)` for `t = 1..=t_max`.
    pub y: Vec<Vec<f64>>,
    /// `z[t - 2]` is `Z(t)` for `t = 2..=t_max`.
    pub z: Vec<Vec<f64>>,
}

impl QncRun {
    pub fn t_max(&self) -> usize {
        self.y.len()
    }

    /// Stacked `Z(2), ..., Z(t)`.
    pub fn z_tot(&self, t: usize) -> DVector<f64> {
        assert!(t >= 2 && t <= self.t_max(), "t={t} outside 2..={}", self.t_max());
        DVector::from_iterator(
            self.z[..t - 1].iter().map(Vec::len).sum(),
            self.z[..t - 1].iter().flatten().copied(),
        )
    }
}

/// Runs the QNC recursion from rest up to `t_max`.
///
/// With `bypass_quantizer` every quantizer is the identity. Raises
/// [`QncError::OverflowViolation`] if any pre-quantization value leaves
/// `[-q_max, q_max]`.
pub fn run_qnc(
    d: &Deployment,
    c: &CoefficientSchedule,
    q: &QuantizerSpec,
    x: &[f64],
    t_max: usize,
    bypass_quantizer: bool,
) -> Result<QncRun> {
    if t_max < 2 {
        return Err(QncError::InvalidParameters("t_max must be >= 2".into()));
    }
    if x.len() != d.num_nodes() || c.num_edges() != d.num_edges() || q.num_edges() != d.num_edges() {
        return Err(QncError::InvalidParameters("dimension mismatch".into()));
    }
    let q_max = q.q_max();
    let limit = q_max * (1.0 + OVERFLOW_SLACK);
    if let Some(v) = x.iter().position(|xv| xv.abs() > limit) {
        return Err(QncError::InvalidParameters(format!(
            "message {v} = {} exceeds q_max = {q_max}",
            x[v]
        )));
    }
    let b = d.build_gateway_selector();
    let mut y = vec![vec![0.0; d.num_edges()]];
    let mut z = Vec::with_capacity(t_max - 1);
    for t in 2..=t_max {
        let mut pre = c.mixing(t).apply(&y[t - 2]);
        if let Some(ax) = c.inject(t, x) {
            for (p, a) in pre.iter_mut().zip(ax) {
                *p += a;
            }
        }
        for (e, p) in pre.iter_mut().enumerate() {
            if p.abs() > limit {
                return Err(QncError::OverflowViolation {
                    edge: e,
                    t,
                    value: *p,
                    q_max,
                });
            }
            if !bypass_quantizer {
                *p = q.quantize(e, *p);
            }
        }
        z.push(b.select(&pre));
        y.push(pre);
    }
    Ok(QncRun { y, z })
}

/// `Psi_tot(t)`: the stacked marginal measurement matrices `Psi(2..t)`.
///
/// Uses `M(tau) = F(tau) M(tau - 1) + A(tau)` with `M(1) = 0` and
/// `Psi(tau) = B M(tau)`.
pub fn build_psi_tot(d: &Deployment, c: &CoefficientSchedule, t: usize) -> DMatrix<f64> {
    assert!(t >= 2, "Psi_tot needs t >= 2");
    let b = d.build_gateway_selector();
    let rows_per_step = b.num_rows();
    let n = d.num_nodes();
    let ne = d.num_edges();
    let mut psi = DMatrix::zeros((t - 1) * rows_per_step, n);
    // M(tau) kept transposed (n x |E|) so that edge columns are contiguous
    let mut m_t = DMatrix::<f64>::zeros(n, ne);
    for tau in 2..=t {
        let f = c.mixing(tau);
        let mut next = DMatrix::<f64>::zeros(n, ne);
        for e in 0..ne {
            let mut col = next.column_mut(e);
            for &(j, beta) in f.row(e) {
                col.axpy(beta, &m_t.column(j), 1.0);
            }
        }
        if let Some(alpha) = c.injection(tau) {
            for (e, &a) in alpha.iter().enumerate() {
                next[(c.tails[e], e)] += a;
            }
        }
        m_t = next;
        let offset = (tau - 2) * rows_per_step;
        for (i, &e) in b.rows().iter().enumerate() {
            psi.row_mut(offset + i).copy_from(&m_t.column(e).transpose());
        }
    }
    psi
}

/// Per-time contributions `1/4 u(t')^T B^T B u(t')` for `t' = 2..=t`, where
/// `u(t') = sum_{tau=2}^{t'} |F(t') ... F(tau+1)| Delta_Q`.
///
/// Rows of `B F(t') ... F(tau+1)` are propagated backwards one factor at a
/// time; `B` selects rows, so `B |P| = |B P|`.
pub fn eps_rec_terms(
    d: &Deployment,
    c: &CoefficientSchedule,
    q: &QuantizerSpec,
    t: usize,
) -> Vec<f64> {
    assert!(t >= 2, "eps_rec needs t >= 2");
    let b = d.build_gateway_selector();
    let steps = q.steps();
    let ne = d.num_edges();
    let mut terms = Vec::with_capacity(t - 1);
    for t_prime in 2..=t {
        let mut total = 0.0;
        for &row_edge in b.rows() {
            let mut r: Vec<f64> = vec![0.0; ne];
            r[row_edge] = 1.0;
            let mut u = 0.0;
            for tau in (2..=t_prime).rev() {
                u += r.iter().zip(&steps).map(|(p, s)| p.abs() * s).sum::<f64>();
                if tau > 2 {
                    r = c.mixing(tau).apply_left(&r);
                }
            }
            total += u * u;
        }
        terms.push(0.25 * total);
    }
    terms
}

/// `eps_rec(t)`, the radius bounding `||N_eff,tot(t)||_2`.
pub fn compute_eps_rec(d: &Deployment, c: &CoefficientSchedule, q: &QuantizerSpec, t: usize) -> f64 {
    eps_rec_terms(d, c, q, t).iter().sum::<f64>().sqrt()
}

/// `eps_rec(t')` for every `t' = 2..=t`.
pub fn eps_rec_profile(
    d: &Deployment,
    c: &CoefficientSchedule,
    q: &QuantizerSpec,
    t: usize,
) -> Vec<f64> {
    let mut acc = 0.0;
    eps_rec_terms(d, c, q, t)
        .into_iter()
        .map(|term| {
            acc += term;
            acc.sqrt()
        })
        .collect()
}

/// Everything the gateway decoder consumes at horizon `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSystem {
    pub psi_tot: DMatrix<f64>,
    pub z_tot: DVector<f64>,
    pub eps_rec: f64,
    pub m: usize,
    pub t: usize,
}

impl MeasurementSystem {
    pub fn assemble(
        d: &Deployment,
        c: &CoefficientSchedule,
        q: &QuantizerSpec,
        run: &QncRun,
        t: usize,
    ) -> Self {
        let psi_tot = build_psi_tot(d, c, t);
        let m = psi_tot.nrows();
        MeasurementSystem {
            psi_tot,
            z_tot: run.z_tot(t),
            eps_rec: compute_eps_rec(d, c, q, t),
            m,
            t,
        }
    }

    /// `||Z_tot - Psi_tot x||_2`, the realized effective noise.
    pub fn noise_norm(&self, x: &[f64]) -> f64 {
        (&self.z_tot - &self.psi_tot * DVector::from_column_slice(x)).norm()
    }
}

/// Draws a realization of the effective noise for given per-step quantization
/// noise vectors: `N_eff(t') = B sum_{tau=2}^{t'} F(t')...F(tau+1) N(tau)`.
/// Used to probe the radius with synthetic noise.
pub fn effective_noise(
    d: &Deployment,
    c: &CoefficientSchedule,
    noise: &[Vec<f64>],
) -> Vec<f64> {
    let b = d.build_gateway_selector();
    let mut acc = vec![0.0; d.num_edges()];
    let mut out = Vec::new();
    for (i, n_t) in noise.iter().enumerate() {
        let t = i + 2;
        if t > 2 {
            acc = c.mixing(t).apply(&acc);
        }
        for (a, v) in acc.iter_mut().zip(n_t) {
            *a += v;
        }
        out.extend(b.select(&acc));
    }
    out
}

/// Uniform noise on `[-Delta_e/2, Delta_e/2]` for each edge.
pub fn uniform_edge_noise<R: Rng + ?Sized>(q: &QuantizerSpec, rng: &mut R) -> Vec<f64> {
    q.steps()
        .iter()
        .map(|&s| if s > 0.0 { rng.gen_range(-0.5..=0.5) * s } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_deployment, Edge};

    fn star() -> Deployment {
        let e = |tail, head| Edge { tail, head, capacity: 1 };
        Deployment::new(3, vec![e(0, 2), e(1, 2)], 2, 9).unwrap()
    }

    #[test]
    fn local_blocks_are_orthonormal_before_scaling() {
        // node 2 has In = {0->2, 1->2}, Out = {2->3, 2->4}
        let e = |tail, head| Edge { tail, head, capacity: 1 };
        let d = Deployment::new(
            5,
            vec![e(0, 2), e(1, 2), e(2, 3), e(2, 4), e(3, 4), e(0, 1), e(1, 4)],
            4,
            17,
        )
        .unwrap();
        let c = design_coefficients(&d, 3, 1.0).unwrap();
        let f = c.mixing(2);
        let out: Vec<usize> = d.out_edges(2).to_vec();
        let raw = |e: usize| -> Vec<f64> {
            f.row(e).iter().map(|(_, b)| b / c.normalization(e)).collect()
        };
        let (r0, r1) = (raw(out[0]), raw(out[1]));
        let dot: f64 = r0.iter().zip(&r1).map(|(a, b)| a * b).sum();
        let n0: f64 = r0.iter().map(|a| a * a).sum();
        let n1: f64 = r1.iter().map(|a| a * a).sum();
        assert!(dot.abs() < 1e-12);
        assert!((n0 - 1.0).abs() < 1e-12 && (n1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_bound_holds() {
        let d = generate_deployment(40, 300, 2).unwrap();
        for seed in 0..5 {
            let c = design_coefficients(&d, seed, 1.0).unwrap();
            assert!(c.max_row_mass() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn mixing_depends_on_deployment_only() {
        let d = generate_deployment(20, 80, 4).unwrap();
        let a = design_coefficients(&d, 1, 1.0).unwrap();
        let b = design_coefficients(&d, 2, 1.0).unwrap();
        for e in 0..d.num_edges() {
            let ra: Vec<f64> = a.mixing(2).row(e).iter().map(|(_, x)| x / a.normalization(e)).collect();
            let rb: Vec<f64> = b.mixing(2).row(e).iter().map(|(_, x)| x / b.normalization(e)).collect();
            for (x, y) in ra.iter().zip(&rb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_ne!(a.injection(2), b.injection(2));
        assert!(a.injection(3).is_none());
    }

    #[test]
    fn star_first_step() {
        let d = star();
        let c = design_coefficients(&d, 5, 1.0).unwrap();
        let q = QuantizerSpec::new(&d, 8, 10.0).unwrap();
        let x = [3.0, -7.0, 1.0];
        let run = run_qnc(&d, &c, &q, &x, 3, false).unwrap();
        let alpha = c.injection(2).unwrap();
        assert_eq!(run.z[0], vec![q.quantize(0, alpha[0] * 3.0), q.quantize(1, alpha[1] * -7.0)]);
        let psi = build_psi_tot(&d, &c, 2);
        assert_eq!(psi, DMatrix::from_row_slice(2, 3, &[alpha[0], 0.0, 0.0, 0.0, alpha[1], 0.0]));
        // source-only edges carry nothing after t = 2
        assert_eq!(run.z[1], vec![q.quantize(0, 0.0), q.quantize(1, 0.0)]);
    }

    #[test]
    fn eps_rec_at_t2() {
        let d = generate_deployment(15, 70, 8).unwrap();
        let c = design_coefficients(&d, 1, 1.0).unwrap();
        let q = QuantizerSpec::new(&d, 6, 10.0).unwrap();
        let delta = q.step(0);
        let expected = (0.25 * d.measurements_per_step() as f64 * delta * delta).sqrt();
        assert!((compute_eps_rec(&d, &c, &q, 2) - expected).abs() < 1e-15);
        assert_eq!(compute_eps_rec(&d, &c, &QuantizerSpec::lossless(&d, 10.0), 6), 0.0);
    }

    #[test]
    fn zero_input_stays_at_cell_midpoints() {
        let d = generate_deployment(10, 40, 3).unwrap();
        let c = design_coefficients(&d, 2, 1.0).unwrap();
        let q = QuantizerSpec::new(&d, 10, 10.0).unwrap();
        let run = run_qnc(&d, &c, &q, &[0.0; 10], 6, false).unwrap();
        let delta = q.step(0);
        for y in &run.y[1..] {
            for &v in y {
                assert!(v.abs() <= delta * 0.5 + 1e-15);
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let d = star();
        let c = CoefficientSchedule::from_parts(
            &d,
            vec![MixingMatrix::zeros(2)],
            vec![vec![2.0, 0.5]],
        )
        .unwrap();
        let q = QuantizerSpec::new(&d, 4, 10.0).unwrap();
        let err = run_qnc(&d, &c, &q, &[9.0, 1.0, 0.0], 2, false).unwrap_err();
        assert!(matches!(err, QncError::OverflowViolation { edge: 0, t: 2, .. }));
    }

    #[test]
    fn from_parts_checks_pattern() {
        let d = star();
        let bad = MixingMatrix::new(vec![vec![(1, 0.5)], vec![]]);
        assert!(CoefficientSchedule::from_parts(&d, vec![bad], vec![]).is_err());
    }
}
