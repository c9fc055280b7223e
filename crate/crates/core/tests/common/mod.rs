//! Independent reference computations shared by the integration targets.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qnc::coding::{CoefficientSchedule, MixingMatrix};
use qnc::network::Deployment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Time-varying coefficients: fresh Gaussian `F(t)` and `A(t)` for every
/// `t = 2..=horizon`, scaled down so products stay bounded.
pub fn random_schedule(d: &Deployment, horizon: usize, seed: u64) -> CoefficientSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ne = d.num_edges();
    let mut mixing = Vec::new();
    let mut injection = Vec::new();
    for _ in 2..=horizon {
        let rows = (0..ne)
            .map(|e| {
                let ins = d.in_edges(d.edge(e).tail);
                let scale = 1.0 / (ins.len().max(1) as f64).sqrt();
                ins.iter()
                    .map(|&j| (j, rng.sample::<f64, _>(StandardNormal) * scale))
                    .collect()
            })
            .collect();
        mixing.push(MixingMatrix::new(rows));
        injection.push((0..ne).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    CoefficientSchedule::from_parts(d, mixing, injection).unwrap()
}

/// `F(hi) F(hi - 1) ... F(lo)` as a dense matrix; identity when `lo > hi`.
pub fn dense_product(c: &CoefficientSchedule, hi: usize, lo: usize) -> DMatrix<f64> {
    let ne = c.num_edges();
    let mut p = DMatrix::identity(ne, ne);
    for t in lo..=hi {
        p = c.mixing(t).to_dense() * p;
    }
    p
}

/// Stacked `Psi(t') = B sum_{tau=2}^{t'} F(t')...F(tau+1) A(tau)` for
/// `t' = 2..=t`, evaluated term by term.
pub fn literal_psi_tot(d: &Deployment, c: &CoefficientSchedule, t: usize) -> DMatrix<f64> {
    let b = d.build_gateway_selector().to_matrix();
    let rows = b.nrows();
    let mut out = DMatrix::zeros(rows * (t - 1), d.num_nodes());
    for tp in 2..=t {
        let mut psi = DMatrix::zeros(rows, d.num_nodes());
        for tau in 2..=tp {
            psi += &b * dense_product(c, tp, tau + 1) * c.injection_matrix(tau);
        }
        out.rows_mut(rows * (tp - 2), rows).copy_from(&psi);
    }
    out
}

/// `eps_rec(t)` from dense absolute-value products.
pub fn literal_eps_rec(d: &Deployment, c: &CoefficientSchedule, steps: &[f64], t: usize) -> f64 {
    let b = d.build_gateway_selector().to_matrix();
    let delta = nalgebra::DVector::from_column_slice(steps);
    let mut total = 0.0;
    for tp in 2..=t {
        let mut u = nalgebra::DVector::zeros(d.num_edges());
        for tau in 2..=tp {
            u += dense_product(c, tp, tau + 1).abs() * &delta;
        }
        total += (&b * u).norm_squared();
    }
    (0.25 * total).sqrt()
}

pub fn gaussian_matrix(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let scale = 1.0 / (m as f64).sqrt();
    DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
}

/// `k`-sparse vector with entries of magnitude in `[0.5, 1.5]`.
pub fn planted_sparse(n: usize, k: usize, rng: &mut ChaCha8Rng) -> nalgebra::DVector<f64> {
    let mut s = nalgebra::DVector::zeros(n);
    for i in rand::seq::index::sample(rng, n, k).into_iter() {
        let mag: f64 = rng.gen_range(0.5..1.5);
        s[i] = if rng.gen_bool(0.5) { mag } else { -mag };
    }
    s
}
