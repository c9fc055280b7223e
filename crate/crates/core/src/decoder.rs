//! l1-minimization decoder.
//!
//! Solves
//!
//! ```text
//! minimize ||s||_1  subject to  ||z - Psi phi s||_2 <= eps
//! ```
//!
//! and reports `x_hat = phi s_hat`. The measurement operator is first reduced
//! through its thin SVD to a full-row-rank system; the component of `z`
//! outside the range is charged against the radius. The reduced problem is
//! solved with a log-barrier interior-point method on the lifted variables
//! `(s, u)`, `|s_i| <= u_i`, with Newton centering steps. A radius of zero
//! becomes the equality-constrained program, solved by the same barrier with
//! an equality-constrained Newton step. Convergence is declared from an
//! explicit dual-feasible point, so the reported gap bounds `objective - optimum`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{QncError, Result};
use crate::linalg::{thin_svd, ThinSvd};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderOptions {
    /// Target duality gap relative to the objective.
    pub rel_gap: f64,
    /// Relative slack on the residual constraint when checking feasibility.
    pub feas_tol: f64,
    /// Cap on the total number of Newton steps.
    pub max_iter: usize,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    /// Newton decrement below which a centering step stops.
    pub newton_tol: f64,
    pub max_newton_per_center: usize,
}

impl Default for DecoderOptions {
    fn default() -> Self {
        DecoderOptions {
            rel_gap: 1e-6,
            feas_tol: 1e-8,
            max_iter: 100_000,
            mu: 10.0,
            newton_tol: 1e-12,
            max_newton_per_center: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub x_hat: DVector<f64>,
    pub s_hat: DVector<f64>,
    /// `||z - Psi phi s_hat||_2`
    pub residual_norm: f64,
    /// Newton steps taken.
    pub iterations: usize,
    pub status: DecodeStatus,
    /// `||s_hat||_1`
    pub objective: f64,
    /// Duality-gap bound on `objective - optimum` at exit.
    pub duality_gap: f64,
}

/// Reduced full-row-rank form `(A, b)` of `(Theta, z)` plus the squared
/// distance from `z` to the range of `Theta`.
struct Reduced {
    a: DMatrix<f64>,
    b: DVector<f64>,
    out_of_range_sq: f64,
}

fn reduce(theta: &DMatrix<f64>, z: &DVector<f64>) -> Reduced {
    let (m, n) = theta.shape();
    let svd = thin_svd(theta);
    let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (m.max(n) as f64) * f64::EPSILON;
    let keep: Vec<usize> = (0..svd.sigma.len()).filter(|&i| svd.sigma[i] > tol).collect();
    let r = keep.len();
    let mut a = DMatrix::zeros(r, n);
    let mut b = DVector::zeros(r);
    let mut in_range = DVector::<f64>::zeros(m);
    for (row, &i) in keep.iter().enumerate() {
        let ui = svd.u.column(i);
        let bi = ui.dot(z);
        b[row] = bi;
        in_range.axpy(bi, &ui, 1.0);
        a.row_mut(row).copy_from(&(svd.v_t.row(i) * svd.sigma[i]));
    }
    Reduced {
        a,
        b,
        out_of_range_sq: (z - in_range).norm_squared(),
    }
}

enum Constraint {
    Ball { radius_sq: f64 },
    Equality,
}

/// Solves the l1 program for `x = phi s` observed through `psi_tot`.
pub fn l1_decode(
    psi_tot: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    z_tot: &DVector<f64>,
    eps_rec: f64,
    opts: &DecoderOptions,
) -> Result<DecodeResult> {
    if psi_tot.nrows() == 0 {
        return Err(QncError::InvalidParameters("need at least one measurement".into()));
    }
    if psi_tot.nrows() != z_tot.len() || psi_tot.ncols() != phi.nrows() || !phi.is_square() {
        return Err(QncError::InvalidParameters("decoder dimension mismatch".into()));
    }
    if !(eps_rec >= 0.0 && eps_rec.is_finite()) {
        return Err(QncError::InvalidParameters(format!("eps_rec must be >= 0, got {eps_rec}")));
    }
    let theta = psi_tot * phi;
    let n = theta.ncols();
    let finish = |s: DVector<f64>, iterations, status, gap| {
        let x_hat = phi * &s;
        let residual_norm = (z_tot - &theta * &s).norm();
        DecodeResult {
            objective: s.lp_norm(1),
            x_hat,
            s_hat: s,
            residual_norm,
            iterations,
            status,
            duality_gap: gap,
        }
    };

    let z_norm = z_tot.norm();
    if z_norm <= eps_rec {
        return Ok(finish(DVector::zeros(n), 0, DecodeStatus::Converged, 0.0));
    }

    let red = reduce(&theta, z_tot);
    let eps_sq = eps_rec * eps_rec;
    let slack = (eps_rec * opts.feas_tol).powi(2) + (z_norm * 1e-13).powi(2);
    let radius_sq = eps_sq - red.out_of_range_sq;
    if red.out_of_range_sq > eps_sq * (1.0 + opts.feas_tol).powi(2) + slack {
        return Err(QncError::Infeasible {
            distance: red.out_of_range_sq.sqrt(),
            radius: eps_rec,
        });
    }
    let constraint = if radius_sq > slack && radius_sq > 0.0 {
        Constraint::Ball { radius_sq }
    } else {
        Constraint::Equality
    };

    if red.a.nrows() == 0 || red.b.norm() == 0.0 {
        return Ok(finish(DVector::zeros(n), 0, DecodeStatus::Converged, 0.0));
    }
    if let Constraint::Ball { radius_sq } = constraint {
        if red.b.norm_squared() <= radius_sq {
            return Ok(finish(DVector::zeros(n), 0, DecodeStatus::Converged, 0.0));
        }
    }
    // full column rank with an equality: the feasible set is a single point
    if let Constraint::Equality = constraint {
        if red.a.nrows() == n {
            let s = red
                .a
                .clone()
                .lu()
                .solve(&red.b)
                .ok_or_else(|| QncError::InvalidParameters("singular reduced system".into()))?;
            return Ok(finish(s, 0, DecodeStatus::Converged, 0.0));
        }
    }

    let s0 = starting_point(&red, &constraint);
    let out = barrier(&red, &constraint, s0, opts);
    Ok(finish(out.s, out.iterations, out.status, out.gap))
}

/// Strictly feasible start: minimum-norm solution for the equality form, or
/// the Tikhonov solution whose residual is half the radius for the ball form.
fn starting_point(red: &Reduced, constraint: &Constraint) -> DVector<f64> {
    let ThinSvd { u, sigma, v_t } = thin_svd(&red.a);
    let coeffs = u.transpose() * &red.b;
    let solution = |lambda: f64| -> DVector<f64> {
        let mut s = DVector::zeros(red.a.ncols());
        for i in 0..sigma.len() {
            let w = sigma[i] / (sigma[i] * sigma[i] + lambda) * coeffs[i];
            s.axpy(w, &v_t.row(i).transpose(), 1.0);
        }
        s
    };
    match constraint {
        Constraint::Equality => solution(0.0),
        Constraint::Ball { radius_sq } => {
            let target = 0.25 * radius_sq;
            let resid_sq = |lambda: f64| -> f64 {
                (0..sigma.len())
                    .map(|i| (lambda / (sigma[i] * sigma[i] + lambda) * coeffs[i]).powi(2))
                    .sum()
            };
            // residual grows monotonically with lambda; bisect in log space
            let smax = sigma.iter().cloned().fold(0.0, f64::max);
            let (mut lo, mut hi) = ((smax * 1e-30).max(1e-300).ln(), (smax * smax * 1e12).ln());
            if resid_sq(lo.exp()) >= target {
                return solution(0.0);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if resid_sq(mid.exp()) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = solution(lo.exp());
            // guard against a residual formula that disagrees with the matrix
            if (&red.a * &s - &red.b).norm_squared() < 0.9 * radius_sq {
                s
            } else {
                solution(0.0)
            }
        }
    }
}

struct BarrierOutcome {
    s: DVector<f64>,
    iterations: usize,
    status: DecodeStatus,
    gap: f64,
}

struct Problem<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    ata: DMatrix<f64>,
    ball: Option<f64>,
}

impl Problem<'_> {
    /// Barrier value; infinite outside the domain.
    fn value(&self, tau: f64, s: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let mut f = 0.0;
        for i in 0..s.len() {
            let lo = u[i] - s[i];
            let hi = u[i] + s[i];
            if lo <= 0.0 || hi <= 0.0 {
                return f64::INFINITY;
            }
            f += tau * u[i] - lo.ln() - hi.ln();
        }
        if let Some(radius_sq) = self.ball {
            let fe = 0.5 * (radius_sq - (self.a * s - self.b).norm_squared());
            if fe <= 0.0 {
                return f64::INFINITY;
            }
            f -= fe.ln();
        }
        f
    }
}

fn barrier(
    red: &Reduced,
    constraint: &Constraint,
    s0: DVector<f64>,
    opts: &DecoderOptions,
) -> BarrierOutcome {
    let n = s0.len();
    let prob = Problem {
        a: &red.a,
        b: &red.b,
        ata: red.a.transpose() * &red.a,
        ball: match constraint {
            Constraint::Ball { radius_sq } => Some(*radius_sq),
            Constraint::Equality => None,
        },
    };
    let num_ineq = (2 * n + usize::from(prob.ball.is_some())) as f64;

    let mut s = s0;
    let smax = s.amax().max(f64::MIN_POSITIVE);
    let mut u = s.map(|v| 0.95 * v.abs() + 0.1 * smax);
    let mut tau = (num_ineq / s.lp_norm(1).max(f64::MIN_POSITIVE)).max(1.0);
    let mut iterations = 0;
    if !prob.value(tau, &s, &u).is_finite() {
        let gap = certified_gap(&prob, tau, &s, &u);
        return BarrierOutcome {
            s,
            iterations,
            status: DecodeStatus::Infeasible,
            gap,
        };
    }

    loop {
        // centering
        for _ in 0..opts.max_newton_per_center {
            if iterations >= opts.max_iter {
                let gap = certified_gap(&prob, tau, &s, &u);
                return BarrierOutcome {
                    s,
                    iterations,
                    status: DecodeStatus::MaxIter,
                    gap,
                };
            }
            iterations += 1;
            let Some((ds, du, decrement)) = newton_direction(&prob, tau, &s, &u) else {
                break;
            };
            if 0.5 * decrement < opts.newton_tol {
                break;
            }
            let step = max_step(&prob, &s, &u, &ds, &du);
            if !(step > 0.0) {
                break;
            }
            let f0 = prob.value(tau, &s, &u);
            let slope = -decrement;
            let mut alpha = (0.99 * step).min(1.0);
            let mut accepted = false;
            for _ in 0..60 {
                let s_new = &s + &ds * alpha;
                let u_new = &u + &du * alpha;
                let f1 = prob.value(tau, &s_new, &u_new);
                if f1 <= f0 + 0.01 * alpha * slope {
                    s = s_new;
                    u = u_new;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let objective = s.lp_norm(1);
        let gap = certified_gap(&prob, tau, &s, &u);
        if gap <= opts.rel_gap * objective.max(f64::MIN_POSITIVE) {
            return BarrierOutcome {
                s,
                iterations,
                status: DecodeStatus::Converged,
                gap,
            };
        }
        // the barrier cannot tighten further in double precision
        if num_ineq / tau < f64::EPSILON * objective {
            return BarrierOutcome {
                s,
                iterations,
                status: DecodeStatus::MaxIter,
                gap,
            };
        }
        tau *= opts.mu;
    }
}

/// `||s||_1` minus the best dual lower bound found from two dual candidates:
/// the barrier multipliers and, for the ball form, the residual direction.
/// Either candidate is rescaled into the dual-feasible set `||A^T y||_inf <= 1`,
/// so the returned gap is a certificate regardless of centering accuracy.
fn certified_gap(prob: &Problem, tau: f64, s: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let radius = prob.ball.map_or(0.0, f64::sqrt);
    let dual_value = |y: &DVector<f64>| -> f64 {
        let scale = prob.a.tr_mul(y).amax();
        if !(scale > 0.0 && scale.is_finite()) {
            return 0.0;
        }
        let y = y / scale;
        // the dual objective is positively homogeneous, so shrinking helps only
        // when the value is negative, and zero is always feasible
        (prob.b.dot(&y) - radius * y.norm()).max(0.0)
    };
    let mut best = 0.0f64;
    let g = (u - s).zip_map(&(u + s), |lo, hi| (1.0 / lo - 1.0 / hi) / tau);
    let aat = prob.a * prob.a.transpose();
    let y_barrier = solve_spd(aat, &(prob.a * &g));
    if let Some(y) = &y_barrier {
        best = best.max(dual_value(y)).max(dual_value(&-y));
    }
    if prob.ball.is_some() {
        best = best.max(dual_value(&(prob.b - prob.a * s)));
    }
    // nearest point to the barrier multipliers that matches the sign pattern
    // of the dominant entries exactly
    let smax = s.amax();
    let support: Vec<usize> = (0..s.len()).filter(|&i| s[i].abs() > 1e-6 * smax).collect();
    if let (Some(y0), false) = (&y_barrier, support.is_empty()) {
        if support.len() <= prob.a.nrows() {
            let a_s = prob.a.select_columns(support.iter());
            let signs = DVector::from_iterator(support.len(), support.iter().map(|&i| s[i].signum()));
            for y0 in [y0.clone(), -y0] {
                let mismatch = &signs - a_s.tr_mul(&y0);
                if let Some(c) = solve_spd(a_s.tr_mul(&a_s), &mismatch) {
                    best = best.max(dual_value(&(y0 + &a_s * c)));
                }
            }
            // on the support the multipliers suffer cancellation in u - |s|,
            // so fit the off-support ones only, under the exact sign pattern
            let off: Vec<usize> = (0..s.len()).filter(|i| !support.contains(i)).collect();
            let a_off = prob.a.select_columns(off.iter());
            let g_off = DVector::from_iterator(off.len(), off.iter().map(|&i| g[i]));
            let (r, k) = (prob.a.nrows(), support.len());
            let mut kkt = DMatrix::zeros(r + k, r + k);
            kkt.view_mut((0, 0), (r, r)).copy_from(&(&a_off * a_off.transpose()));
            kkt.view_mut((0, r), (r, k)).copy_from(&a_s);
            kkt.view_mut((r, 0), (k, r)).copy_from(&a_s.transpose());
            let mut rhs = DVector::zeros(r + k);
            rhs.rows_mut(0, r).copy_from(&(&a_off * g_off));
            rhs.rows_mut(r, k).copy_from(&signs);
            if let Some(sol) = kkt.lu().solve(&rhs) {
                best = best.max(dual_value(&sol.rows(0, r).into_owned()));
            }
        }
    }
    s.lp_norm(1) - best
}

/// Newton direction for the barrier at `tau`, with the `u` block eliminated.
/// Returns `(ds, du, lambda^2)`.
fn newton_direction(
    prob: &Problem,
    tau: f64,
    s: &DVector<f64>,
    u: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>, f64)> {
    let n = s.len();
    let lo = u - s;
    let hi = u + s;
    let inv_lo = lo.map(|v| 1.0 / v);
    let inv_hi = hi.map(|v| 1.0 / v);
    let mut g_s = &inv_lo - &inv_hi;
    let g_u = inv_lo.zip_map(&inv_hi, |a, b| tau - a - b);
    let sigma1 = inv_lo.zip_map(&inv_hi, |a, b| a * a + b * b);
    let sigma2 = inv_lo.zip_map(&inv_hi, |a, b| b * b - a * a);
    let diag = sigma1.zip_map(&sigma2, |p, q| p - q * q / p);
    let mut w = -&g_s + sigma2.component_mul(&g_u).component_div(&sigma1);

    let ds = match prob.ball {
        Some(radius_sq) => {
            let r = prob.a * s - prob.b;
            let fe = 0.5 * (radius_sq - r.norm_squared());
            let q = prob.a.tr_mul(&r);
            g_s += &q / fe;
            w -= &q / fe;
            let mut h = &prob.ata / fe;
            h.ger(1.0 / (fe * fe), &q, &q, 1.0);
            for i in 0..n {
                h[(i, i)] += diag[i];
            }
            solve_spd(h, &w)?
        }
        None => {
            // [D A^T; A 0][ds; nu] = [w; 0]
            let d_inv = diag.map(|v| 1.0 / v);
            let mut ad = prob.a.clone();
            for j in 0..n {
                ad.column_mut(j).scale_mut(d_inv[j]);
            }
            let schur = &ad * prob.a.transpose();
            let rhs = &ad * &w;
            let nu = solve_spd(schur, &rhs)?;
            (&w - prob.a.tr_mul(&nu)).component_mul(&d_inv)
        }
    };
    let du = (-&g_u - sigma2.component_mul(&ds)).component_div(&sigma1);
    let decrement = -(g_s.dot(&ds) + g_u.dot(&du));
    if !decrement.is_finite() {
        return None;
    }
    Some((ds, du, decrement.max(0.0)))
}

fn solve_spd(h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    match Cholesky::<f64, Dyn>::new(h.clone()) {
        Some(ch) => Some(ch.solve(rhs)),
        None => h.lu().solve(rhs),
    }
}

/// Largest step keeping `|s| < u` and, for the ball form, the residual inside the radius.
fn max_step(
    prob: &Problem,
    s: &DVector<f64>,
    u: &DVector<f64>,
    ds: &DVector<f64>,
    du: &DVector<f64>,
) -> f64 {
    let mut step = f64::INFINITY;
    for i in 0..s.len() {
        let lo = u[i] - s[i];
        let dlo = du[i] - ds[i];
        if dlo < 0.0 {
            step = step.min(-lo / dlo);
        }
        let hi = u[i] + s[i];
        let dhi = du[i] + ds[i];
        if dhi < 0.0 {
            step = step.min(-hi / dhi);
        }
    }
    if let Some(radius_sq) = prob.ball {
        let r = prob.a * s - prob.b;
        let ad = prob.a * ds;
        let qa = ad.norm_squared();
        let qb = 2.0 * r.dot(&ad);
        let qc = r.norm_squared() - radius_sq;
        if qa > 0.0 {
            let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
            let root = (-qb + disc.sqrt()) / (2.0 * qa);
            step = step.min(root);
        }
    }
    step
}

/// Sparsest `s` (up to `k_max` nonzeros) with `Psi s` matching `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct L0Solution {
    pub support: Vec<usize>,
    pub s: DVector<f64>,
    pub residual: f64,
}

/// Exhaustive l0 search over supports of increasing size with a
/// least-squares fit per support; limited to `n <= 20`, `k_max <= 3`.
pub fn l0_oracle(psi: &DMatrix<f64>, z: &DVector<f64>, k_max: usize) -> Result<Option<L0Solution>> {
    if psi.ncols() > 20 || k_max > 3 {
        return Err(QncError::BudgetExceeded(format!(
            "l0 search limited to n <= 20 and k_max <= 3 (got n={}, k_max={k_max})",
            psi.ncols()
        )));
    }
    l0_search(psi, z, k_max)
}

/// [`l0_oracle`] without the size guard; the caller owns the combinatorial cost.
pub fn l0_search(psi: &DMatrix<f64>, z: &DVector<f64>, k_max: usize) -> Result<Option<L0Solution>> {
    let n = psi.ncols();
    if psi.nrows() != z.len() {
        return Err(QncError::InvalidParameters("l0 dimension mismatch".into()));
    }
    let tol = 1e-9 * z.norm().max(1.0);
    if z.norm() <= tol {
        return Ok(Some(L0Solution {
            support: Vec::new(),
            s: DVector::zeros(n),
            residual: z.norm(),
        }));
    }
    for size in 1..=k_max.min(n) {
        let mut support: Vec<usize> = (0..size).collect();
        loop {
            let sub = psi.select_columns(support.iter());
            let f = thin_svd(&sub);
            let smax = f.sigma.amax();
            let proj = f.u.tr_mul(z).zip_map(&f.sigma, |c, sv| if sv > 1e-12 * smax { c / sv } else { 0.0 });
            let coef = f.v_t.tr_mul(&proj);
            {
                let residual = (z - &sub * &coef).norm();
                if residual <= tol {
                    let mut s = DVector::zeros(n);
                    for (c, &i) in coef.iter().zip(&support) {
                        s[i] = *c;
                    }
                    return Ok(Some(L0Solution {
                        support,
                        s,
                        residual,
                    }));
                }
            }
            if !next_combination(&mut support, n) {
                break;
            }
        }
    }
    Ok(None)
}

/// Advances `c` to the next `|c|`-subset of `0..n` in lexicographic order.
pub(crate) fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Recovery-error bound `c1 eps_rec + c2/sqrt(2) eps_k`, valid when
/// `delta_2k < sqrt(2) - 1`.
pub fn error_bound(eps_rec: f64, eps_k: f64, delta_2k: f64) -> Result<f64> {
    let sqrt2 = std::f64::consts::SQRT_2;
    if !(delta_2k >= 0.0 && delta_2k < sqrt2 - 1.0) {
        return Err(QncError::HypothesisViolated(format!(
            "delta_2k = {delta_2k} is not below sqrt(2) - 1"
        )));
    }
    let denom = 1.0 - (1.0 + sqrt2) * delta_2k;
    let c1 = 4.0 * (1.0 + delta_2k).sqrt() / denom;
    let c2 = 2.0 * (1.0 - (1.0 - sqrt2) * delta_2k) / denom;
    Ok(c1 * eps_rec + c2 / sqrt2 * eps_k)
}
